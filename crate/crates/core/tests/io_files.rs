use depthdiff::io::{
    decode_depth, decode_guide, encode_depth, read_depth, read_guide, read_mask, write_depth, write_feature_stack,
};
use depthdiff::{DepthGrid, Error, GuideStack, SampleEncoding};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pfm_depth_round_trips_bitwise(
        (h, w, vals) in (1usize..9, 1usize..9).prop_flat_map(|(h, w)| {
            (Just(h), Just(w), prop::collection::vec(prop_oneof![1e-6f32..1e6, Just(0.0f32)], h * w))
        })
    ) {
        let mask: Vec<bool> = vals.iter().map(|&v| v > 0.0).collect();
        let grid = DepthGrid::with_mask(h, w, vals, mask).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        write_depth(&path, &grid).unwrap();
        let back = read_depth(&path).unwrap();
        prop_assert_eq!(back.dims(), (h, w));
        prop_assert_eq!(back.mask(), grid.mask());
        for i in 0..h * w {
            if grid.is_valid_index(i) {
                prop_assert_eq!(back.values()[i].to_bits(), grid.values()[i].to_bits());
            }
        }
    }

    #[test]
    fn png_depth_round_trips_integers(vals in prop::collection::vec(0u16..=65535, 5 * 7)) {
        let mask: Vec<bool> = vals.iter().map(|&v| v != 0).collect();
        let grid = DepthGrid::with_mask(5, 7, vals.iter().map(|&v| v as f32).collect(), mask).unwrap();
        let back = decode_depth(&encode_depth(&grid, true).unwrap()).unwrap();
        prop_assert_eq!(back, grid);
    }

    #[test]
    fn feature_stack_round_trips(
        (h, w, c, vals) in (1usize..6, 1usize..6, 1usize..5).prop_flat_map(|(h, w, c)| {
            (Just(h), Just(w), Just(c), prop::collection::vec(-1e3f32..1e3, h * w * c))
        })
    ) {
        let guide = GuideStack::new(h, w, c, vals, SampleEncoding::Float).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.dgsf");
        write_feature_stack(&path, &guide).unwrap();
        prop_assert_eq!(read_guide(&path).unwrap(), guide);
    }

    #[test]
    fn arbitrary_bytes_never_panic(mut bytes in prop::collection::vec(any::<u8>(), 0..200), prefix in 0usize..4) {
        let magic: [&[u8]; 4] = [b"", b"Pf\n", b"DGSF", b"\x89PNG\r\n\x1a\n"];
        let mut data = magic[prefix].to_vec();
        data.append(&mut bytes);
        let _ = decode_depth(&data);
        let _ = decode_guide(&data);
    }
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("absent.png");
    assert!(matches!(read_depth(&path), Err(Error::Io { .. })));
    assert!(matches!(read_guide(&path), Err(Error::Io { .. })));
    assert!(matches!(read_mask(&path), Err(Error::Io { .. })));
}

#[test]
fn output_format_follows_extension() {
    let dir = tempfile::tempdir().unwrap();
    let grid = DepthGrid::new(2, 2, vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
    assert!(matches!(
        write_depth(dir.path().join("d.tiff"), &grid),
        Err(Error::UnsupportedFormat(_))
    ));
    write_depth(dir.path().join("d.PNG"), &grid).unwrap();
    let bytes = std::fs::read(dir.path().join("d.PNG")).unwrap();
    assert!(bytes.starts_with(b"\x89PNG"));
}

#[test]
fn truncated_files_are_corrupt() {
    let grid = DepthGrid::new(3, 3, vec![1.5f32; 9]).unwrap();
    for png in [false, true] {
        let bytes = encode_depth(&grid, png).unwrap();
        // a PNG clipped inside its trailer still carries all pixel data
        let cuts = if png {
            vec![bytes.len() / 2, 12]
        } else {
            vec![bytes.len() - 1, bytes.len() / 2, 12]
        };
        for cut in cuts {
            let err = decode_depth(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, Error::CorruptFile(_)), "png={png} cut={cut}: {err}");
        }
    }
}
