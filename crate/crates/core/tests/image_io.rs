use texscan::error::Error;
use texscan::image::{load_image, quantize, save_image};
use texscan::ImageTensor;

#[test]
fn every_byte_value_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<f64> = (0..256).map(|k| k as f64 / 255.0).collect();
    let img = ImageTensor::new(16, 16, 1, values.clone()).unwrap();
    for name in ["all.png", "all.pgm"] {
        let path = dir.path().join(name);
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.shape(), (16, 16, 1));
        for (k, (&a, &b)) in back.data().iter().zip(&values).enumerate() {
            assert!((a - b).abs() <= 1.0 / 255.0, "{name} value {k}");
            assert_eq!(quantize(a), k as u8);
        }
    }
}

#[test]
fn arbitrary_values_within_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let img = ImageTensor::from_fn(7, 9, |y, x| ((y * 9 + x) as f64 * 0.0137) % 1.0).unwrap();
    let rgb = img.with_channels(3).unwrap();
    for (name, image) in [("g.png", &img), ("c.png", &rgb), ("c.ppm", &rgb)] {
        let path = dir.path().join(name);
        save_image(image, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.shape(), image.shape());
        for (a, b) in back.data().iter().zip(image.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}

#[test]
fn extreme_values_load_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bw.png");
    save_image(&ImageTensor::new(1, 2, 1, vec![0.0, 1.0]).unwrap(), &path).unwrap();
    assert_eq!(load_image(&path).unwrap().data(), &[0.0, 1.0]);
}

#[test]
fn load_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_image(dir.path().join("missing.png")),
        Err(Error::MissingFile(_))
    ));

    let bmp = dir.path().join("x.bmp");
    std::fs::write(&bmp, b"BM\0\0\0\0\0\0\0\0").unwrap();
    assert!(matches!(load_image(&bmp), Err(Error::UnsupportedFormat(_))));

    let bad = dir.path().join("bad.png");
    std::fs::write(&bad, b"\x89PNG\r\n\x1a\n garbage").unwrap();
    assert!(matches!(load_image(&bad), Err(Error::CorruptImage { .. })));

    let img = ImageTensor::filled(2, 2, 1, 0.5).unwrap();
    assert!(matches!(
        save_image(&img, dir.path().join("x.jpg")),
        Err(Error::UnsupportedFormat(_))
    ));
    assert!(matches!(
        save_image(&img, dir.path().join("no/such/dir/x.png")),
        Err(Error::Io { .. })
    ));
}
