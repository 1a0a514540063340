//! Synthetic hierarchical texture dataset for end-to-end desk-scale runs.
//!
//! Three root labels (`Lines`, `Spots`, `Grids`), each with two sub-types
//! drawn as distinct geometric textures. Every subject carries one leaf
//! diagnosis; all of a subject's images share it. 100 subjects x 6 images
//! by default.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image_io::write_pgm_u8;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

pub const HIERARCHY_TEXT: &str = "\
Lines
HorizontalLines,Lines
VerticalLines,Lines
Spots
LargeSpots,Spots
SmallSpots,Spots
Grids
Checkerboard,Grids
DiagonalGrid,Grids
";

const LEAVES: [&str; 6] = [
    "HorizontalLines",
    "VerticalLines",
    "LargeSpots",
    "SmallSpots",
    "Checkerboard",
    "DiagonalGrid",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub subjects: usize,
    pub images_per_subject: usize,
    /// Generated image size; deliberately non-square so the resize + pad
    /// path is exercised.
    pub height: usize,
    pub width: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects: 100,
            images_per_subject: 6,
            height: 40,
            width: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthOutput {
    pub manifest: PathBuf,
    pub hierarchy: PathBuf,
    pub images_dir: PathBuf,
    pub image_count: usize,
    pub subject_count: usize,
}

const DARK: f64 = 60.0;
const BRIGHT: f64 = 200.0;

fn paint(leaf: &str, h: usize, w: usize, phase: usize, rng: &mut SplitMix64) -> Tensor<f64> {
    let mut img = Tensor::zeros(vec![h, w]);
    for y in 0..h {
        for x in 0..w {
            let on = match leaf {
                "HorizontalLines" => (y + phase) % 10 < 5,
                "VerticalLines" => (x + phase) % 10 < 5,
                "LargeSpots" => {
                    let cy = (y + phase) % 14;
                    let cx = (x + phase) % 14;
                    let dy = cy as f64 - 7.0;
                    let dx = cx as f64 - 7.0;
                    dy * dy + dx * dx <= 4.5 * 4.5
                }
                "SmallSpots" => {
                    let cy = (y + phase) % 6;
                    let cx = (x + phase) % 6;
                    let dy = cy as f64 - 3.0;
                    let dx = cx as f64 - 3.0;
                    dy * dy + dx * dx <= 2.0 * 2.0
                }
                "Checkerboard" => ((y / 7) + (x / 7) + phase).is_multiple_of(2),
                "DiagonalGrid" => (x + y + phase) % 14 < 7,
                other => unreachable!("unknown leaf {other}"),
            };
            let base = if on { BRIGHT } else { DARK };
            let noise = rng.next_f64() * 24.0 - 12.0;
            img.set2(y, x, (base + noise).clamp(0.0, 255.0));
        }
    }
    img
}

/// Writes `images/`, `manifest.csv` and `hierarchy.txt` under `out_dir`.
/// Byte-deterministic for a fixed seed.
pub fn generate(out_dir: &Path, seed: u64, cfg: &SynthConfig) -> Result<SynthOutput> {
    if cfg.subjects == 0 || cfg.images_per_subject == 0 {
        return Err(Error::Config("synthetic dataset must be non-empty".into()));
    }
    if cfg.height < 8 || cfg.width < 8 {
        return Err(Error::Config(
            "synthetic images must be at least 8x8".into(),
        ));
    }
    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    let mut rng = SplitMix64::new(seed);
    let mut manifest = String::from("image_path,subject_id,labels\n");
    let mut image_count = 0;
    for s in 0..cfg.subjects {
        let leaf = LEAVES[s % LEAVES.len()];
        let subject = format!("subj{s:03}");
        for j in 0..cfg.images_per_subject {
            let phase = rng.next_below(14);
            let img = paint(leaf, cfg.height, cfg.width, phase, &mut rng);
            let name = format!("{subject}_{j}.pgm");
            write_pgm_u8(&images_dir.join(&name), &img)?;
            manifest.push_str(&format!("images/{name},{subject},{leaf}\n"));
            image_count += 1;
        }
    }

    let manifest_path = out_dir.join("manifest.csv");
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))?;
    let hierarchy_path = out_dir.join("hierarchy.txt");
    std::fs::write(&hierarchy_path, HIERARCHY_TEXT).map_err(|e| Error::io(&hierarchy_path, e))?;

    Ok(SynthOutput {
        manifest: manifest_path,
        hierarchy: hierarchy_path,
        images_dir,
        image_count,
        subject_count: cfg.subjects,
    })
}
