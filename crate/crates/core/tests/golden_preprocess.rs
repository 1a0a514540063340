//! Golden-file check: the preprocessing chain over a committed PGM fixture
//! must produce bit-identical output across runs and platforms.

use std::path::Path;

use attriblab::image_io::read_pgm;
use attriblab::preprocess::{preprocess_image, PreprocessConfig};

// FNV-1a over the f64 bit patterns of the preprocessed image.
fn fnv1a_bits(data: &[f64]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for v in data {
        for b in v.to_bits().to_le_bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    hash
}

#[test]
fn fixture_checksum_is_stable() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sample.pgm");
    let img = read_pgm(&fixture).unwrap();
    assert_eq!(img.shape(), &[48, 37]);

    let cfg = PreprocessConfig {
        target_side: 32,
        clip_low_pct: 1.0,
        clip_high_pct: 95.0,
    };
    let out = preprocess_image(&img, &cfg).unwrap();
    assert_eq!(out.image.shape(), &[32, 32]);
    assert!(out.warnings.is_empty());

    let checksum = fnv1a_bits(out.image.data());
    assert_eq!(
        checksum, GOLDEN_CHECKSUM,
        "preprocessing output changed; if intentional, refresh the golden value"
    );
}

const GOLDEN_CHECKSUM: u64 = 0x0e46_a760_c987_2c26;
