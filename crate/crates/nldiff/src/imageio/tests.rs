use super::*;

fn tmpdir() -> tempfile::TempDir {
    tempfile::tempdir().expect("create temp dir")
}

#[test]
fn p5_pixels_scale_by_maxval() {
    let data = b"P5\n2 2\n255\n\x00\x80\xff\x40";
    let img = parse_pgm(data).unwrap();
    assert_eq!(img.width(), 2);
    assert_eq!(img.height(), 2);
    let want = [0.0, 128.0 / 255.0, 1.0, 64.0 / 255.0];
    for (p, w) in img.pixels().iter().zip(want) {
        assert!((p - w).abs() < 1e-15);
    }
}

#[test]
fn p2_ascii_with_comments_parses() {
    let data = b"P2\n# a comment\n3 1\n# another\n10\n0 5 10\n";
    let img = parse_pgm(data).unwrap();
    assert_eq!(img.pixels(), &[0.0, 0.5, 1.0]);
}

#[test]
fn p3_magic_is_rejected() {
    let err = parse_pgm(b"P3\n1 1\n255\n0 0 0\n").unwrap_err();
    match err {
        Error::PgmParse { offset, message } => {
            assert_eq!(offset, 0);
            assert!(message.contains("P3"));
        }
        other => panic!("expected PgmParse, got {other:?}"),
    }
}

#[test]
fn truncated_raster_reports_offset() {
    let err = parse_pgm(b"P5\n2 2\n255\n\x00\x01").unwrap_err();
    assert!(matches!(err, Error::PgmParse { .. }));
}

#[test]
fn trailing_bytes_are_rejected() {
    let err = parse_pgm(b"P5\n1 1\n255\n\x00extra").unwrap_err();
    match err {
        Error::PgmParse { message, .. } => assert!(message.contains("trailing")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn write_read_round_trip_within_half_quantum() {
    let dir = tmpdir();
    let path = dir.path().join("img.pgm");
    let n = 16;
    let pixels: Vec<f64> = (0..n * n).map(|i| (i as f64 / (n * n) as f64).sqrt()).collect();
    let img = GrayImage::new(n, n, pixels).unwrap();
    write_pgm(&img, &path, 255).unwrap();
    let back = read_pgm(&path).unwrap();
    for (a, b) in img.pixels().iter().zip(back.pixels()) {
        assert!((a - b).abs() <= 1.0 / 510.0 + 1e-12);
    }
}

#[test]
fn second_write_is_bit_exact() {
    let dir = tmpdir();
    let p1 = dir.path().join("a.pgm");
    let p2 = dir.path().join("b.pgm");
    let img = make_cartoon(32);
    write_pgm(&img, &p1, 255).unwrap();
    let once = read_pgm(&p1).unwrap();
    write_pgm(&once, &p2, 255).unwrap();
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
}

#[test]
fn sixteen_bit_samples_round_trip() {
    let dir = tmpdir();
    let path = dir.path().join("wide.pgm");
    let img = GrayImage::new(4, 2, vec![0.0, 0.125, 0.25, 0.5, 0.625, 0.75, 0.875, 1.0]).unwrap();
    write_pgm(&img, &path, 65535).unwrap();
    let back = read_pgm(&path).unwrap();
    for (a, b) in img.pixels().iter().zip(back.pixels()) {
        assert!((a - b).abs() <= 1.0 / 65535.0);
    }
}

#[test]
fn salt_pepper_zero_fraction_is_identity() {
    let img = make_cartoon(32);
    let noisy = salt_pepper(&img, 0.0, 123).unwrap();
    assert_eq!(img, noisy);
}

#[test]
fn salt_pepper_exact_count_on_128() {
    let img = make_cartoon(128);
    let noisy = salt_pepper(&img, 0.15, 9).unwrap();
    let changed = img
        .pixels()
        .iter()
        .zip(noisy.pixels())
        .filter(|(a, b)| a != b)
        .count();
    // round(0.15 * 16384) = 2458; cartoon levels avoid 0 and 1, so every
    // replacement changes its pixel.
    assert_eq!(changed, 2458);
    let salt = noisy
        .pixels()
        .iter()
        .zip(img.pixels())
        .filter(|(b, a)| **b == 1.0 && a != b)
        .count();
    assert_eq!(salt, 1229);
}

#[test]
fn salt_pepper_is_seed_deterministic() {
    let img = make_cartoon(64);
    let a = salt_pepper(&img, 0.2, 7).unwrap();
    let b = salt_pepper(&img, 0.2, 7).unwrap();
    assert_eq!(a, b);
    let c = salt_pepper(&img, 0.2, 8).unwrap();
    assert_ne!(a, c);
}

#[test]
fn salt_pepper_rejects_bad_fraction() {
    let img = make_cartoon(8);
    assert!(salt_pepper(&img, -0.1, 0).is_err());
    assert!(salt_pepper(&img, 1.5, 0).is_err());
}

#[test]
fn cartoon_has_at_most_four_levels_and_flat_disk() {
    let n = 128;
    let img = make_cartoon(n);
    let mut levels: Vec<u64> = img.pixels().iter().map(|p| p.to_bits()).collect();
    levels.sort_unstable();
    levels.dedup();
    assert!(levels.len() <= 4, "{} distinct levels", levels.len());
    // Disk interior (around its center) is constant.
    let center = img.pixel((0.34 * n as f64) as usize, (0.32 * n as f64) as usize);
    for dr in 0..5 {
        for dc in 0..5 {
            let r = (0.34 * n as f64) as usize + dr;
            let c = (0.32 * n as f64) as usize + dc;
            assert_eq!(img.pixel(r, c), center);
        }
    }
}

#[test]
fn cartoon_tv_matches_analytic_perimeter_sum() {
    // Each convex shape contributes level-jump * 2*(bbox width + height) * n
    // to the anisotropic TV: disk 8r, rectangle 2(w+h), wedge 2(w+h).
    let expected_per_n = 0.65 * 8.0 * 0.17 + 0.35 * 2.0 * (0.30 + 0.28) + 0.2 * 2.0 * (0.3 + 0.3);
    for n in [128, 256] {
        let img = make_cartoon(n);
        let f = img.to_field().unwrap();
        let tv = crate::diagnostics::total_variation(&f);
        let rel = (tv / n as f64 - expected_per_n).abs() / expected_per_n;
        assert!(rel < 0.1, "n={n}: tv/n = {} vs {expected_per_n}", tv / n as f64);
    }
}

#[test]
fn csv_empty_columns_give_header_only() {
    let dir = tmpdir();
    let path = dir.path().join("empty.csv");
    write_csv(&path, &[("a", &[]), ("b", &[])]).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text, "a,b\n");
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tmpdir();
    let path = dir.path().join("vals.csv");
    let xs = vec![0.1, std::f64::consts::PI, -1.0 / 3.0, 1e-300, 6.02e23];
    let ys = vec![1.0, 2.0, 3.0, 4.0, 5.0];
    write_csv_with_manifest(&path, Some("config: test"), &[("x", &xs), ("y", &ys)]).unwrap();
    let (names, cols) = read_csv(&path).unwrap();
    assert_eq!(names, ["x", "y"]);
    assert_eq!(cols[0], xs);
    assert_eq!(cols[1], ys);
}

#[test]
fn csv_column_length_mismatch_is_rejected() {
    let dir = tmpdir();
    let path = dir.path().join("bad.csv");
    let err = write_csv(&path, &[("a", &[1.0][..]), ("b", &[1.0, 2.0][..])]).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument { .. }));
}

#[test]
fn image_field_conversion_requires_square() {
    let img = GrayImage::new(4, 2, vec![0.5; 8]).unwrap();
    assert!(img.to_field().is_err());
    let img = GrayImage::new(8, 8, vec![0.25; 64]).unwrap();
    let f = img.to_field().unwrap();
    assert_eq!(f.n(), 8);
    let back = GrayImage::from_field(&f).unwrap();
    assert_eq!(img, back);
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        // The writer's output always re-reads to the quantized pixel values,
        // and a second write is byte-identical.
        #[test]
        fn pgm_write_read_write_stability(seed in 0u64..500, maxval in 1u16..=300) {
            let n = 8usize;
            let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(13);
            let pixels: Vec<f64> = (0..n * n)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (state >> 11) as f64 / (1u64 << 53) as f64
                })
                .collect();
            let img = GrayImage::new(n, n, pixels).unwrap();
            let dir = tmpdir();
            let p1 = dir.path().join("one.pgm");
            let p2 = dir.path().join("two.pgm");
            write_pgm(&img, &p1, maxval).unwrap();
            let once = read_pgm(&p1).unwrap();
            for (a, b) in img.pixels().iter().zip(once.pixels()) {
                prop_assert!((a - b).abs() <= 0.5 / maxval as f64 + 1e-12);
            }
            write_pgm(&once, &p2, maxval).unwrap();
            prop_assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        }

        // Noise honours the exact-count contract for arbitrary fractions.
        #[test]
        fn salt_pepper_count_contract(fraction in 0.0f64..1.0, seed in 0u64..100) {
            let img = make_cartoon(16);
            let noisy = salt_pepper(&img, fraction, seed).unwrap();
            let replaced = img
                .pixels()
                .iter()
                .zip(noisy.pixels())
                .filter(|(a, b)| a != b)
                .count();
            let want = (fraction * 256.0).round() as usize;
            prop_assert_eq!(replaced, want);
        }
    }
}
