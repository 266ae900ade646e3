use ciq::io::{
    format_vector, parse_matrix_market, parse_pgm, parse_points_csv, parse_vector, parse_xy_csv, read_matrix_market,
    read_pgm, read_vector, write_matrix_market, write_pgm, write_vector, GrayImage,
};
use ciq::CiqError;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parsers_never_panic_on_text(s in "\\PC{0,200}") {
        let _ = parse_matrix_market(&s);
        let _ = parse_vector(&s);
        let _ = parse_points_csv(&s);
        let _ = parse_xy_csv(&s);
    }

    #[test]
    fn parsers_never_panic_on_structured_noise(
        header in prop_oneof![
            Just("%%MatrixMarket matrix coordinate real symmetric\n"),
            Just("%%MatrixMarket matrix array real general\n"),
            Just("%%MatrixMarket matrix coordinate integer general\n"),
        ],
        body in "[0-9 .eE+\\-\n%]{0,120}",
    ) {
        let _ = parse_matrix_market(&format!("{header}{body}"));
    }

    #[test]
    fn pgm_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..300)) {
        let _ = parse_pgm(&bytes);
        let mut with_header = b"P5\n3 2\n255\n".to_vec();
        with_header.extend(&bytes);
        let _ = parse_pgm(&with_header);
    }

    #[test]
    fn vector_round_trip(v in proptest::collection::vec(-1e300f64..1e300, 1..50)) {
        prop_assert_eq!(parse_vector(&format_vector(&v)).unwrap(), v);
    }

    #[test]
    fn matrix_market_round_trip(n in 1usize..8, seed in any::<u64>()) {
        let mut x = seed | 1;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| { x ^= x << 13; x ^= x >> 7; x ^= x << 17; (x % 2001) as f64 / 7.0 - 100.0 }).collect())
            .collect();
        prop_assert_eq!(parse_matrix_market(&write_matrix_market(&rows)).unwrap(), rows);
    }

    #[test]
    fn pgm_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u8>()) {
        let pixels: Vec<f64> = (0..w * h).map(|i| ((i * 37 + seed as usize) % 256) as f64 / 255.0).collect();
        let img = GrayImage::new(w, h, pixels.clone()).unwrap();
        let back = parse_pgm(&write_pgm(&img)).unwrap();
        prop_assert_eq!((back.width, back.height), (w, h));
        for (a, b) in back.pixels.iter().zip(&pixels) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn matrix_market_formats() {
    let sym = "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 2\n1 1 4\n2 1 1.5\n";
    assert_eq!(parse_matrix_market(sym).unwrap(), vec![vec![4.0, 1.5], vec![1.5, 0.0]]);
    let arr = "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n";
    assert_eq!(parse_matrix_market(arr).unwrap(), vec![vec![1.0, 3.0], vec![2.0, 4.0]]);
    assert!(parse_matrix_market("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n").is_err());
    assert!(parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 3 0\n").is_err());
    assert!(parse_matrix_market("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n").is_err());
}

#[test]
fn csv_formats() {
    let pts = parse_points_csv("x,y\n0,1\n2.5,-1\n").unwrap();
    assert_eq!(pts, vec![vec![0.0, 1.0], vec![2.5, -1.0]]);
    assert_eq!(parse_points_csv("0,1\n2.5,-1\n").unwrap(), pts);
    let (x, y) = parse_xy_csv("a,b,y\n1,2,3\n4,5,6\n").unwrap();
    assert_eq!(x, vec![vec![1.0, 2.0], vec![4.0, 5.0]]);
    assert_eq!(y, vec![3.0, 6.0]);
    assert!(parse_points_csv("1,2\n3\n").is_err());
    assert!(parse_xy_csv("1\n2\n").is_err());
}

#[test]
fn file_errors_carry_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.mtx");
    let msg = read_matrix_market(&missing).unwrap_err().to_string();
    assert!(msg.contains("nope.mtx"), "{msg}");

    let bad = dir.path().join("bad.pgm");
    std::fs::write(&bad, b"P2\n1 1\n255\n0\n").unwrap();
    let e = read_pgm(&bad).unwrap_err();
    assert!(matches!(e, CiqError::File { .. }));
    assert!(e.to_string().contains("bad.pgm"));

    let v = dir.path().join("v.txt");
    write_vector(&v, &[1.0, -2.5, 1e-300]).unwrap();
    assert_eq!(read_vector(&v).unwrap(), vec![1.0, -2.5, 1e-300]);
}

#[test]
fn bundled_assets_parse() {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/assets");
    let img = read_pgm(format!("{root}/scene32.pgm")).unwrap();
    assert_eq!((img.width, img.height), (32, 32));
    let (x, y) = ciq::io::read_xy_csv(format!("{root}/thompson_train.csv")).unwrap();
    assert_eq!(x.len(), y.len());
    assert!(!ciq::io::read_points_csv(format!("{root}/thompson_candidates.csv")).unwrap().is_empty());
}
