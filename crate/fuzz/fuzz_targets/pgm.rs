#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = ciq::io::parse_pgm(data) {
        assert_eq!(img.pixels.len(), img.width * img.height);
    }
});
