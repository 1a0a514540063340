//! Attribution map export: 8-bit PGM heatmaps, raw CSV, JSON sidecars.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionMap, MapMetadata, Method};
use crate::error::{Error, Result};
use crate::image_io::write_pgm_u8;
use crate::tensor::Tensor;

/// Symmetric max-abs normalization to 8-bit grey:
/// `pixel = round(127.5 + 127.5 * v / max|v|)`. An all-zero map exports as
/// uniform mid-grey 128 and is flagged.
pub fn heatmap_pixels(map: &Tensor<f64>) -> (Tensor<f64>, bool) {
    let max_abs = map.max_abs();
    if max_abs == 0.0 {
        return (Tensor::full(map.shape().to_vec(), 128.0), true);
    }
    let pixels = map.map(|v| (127.5 + 127.5 * v / max_abs).round());
    (pixels, false)
}

/// Raw scores as CSV, one image row per line.
pub fn map_to_csv(map: &Tensor<f64>) -> String {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let mut out = String::new();
    for y in 0..h {
        for x in 0..w {
            if x > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", map.at2(y, x)));
        }
        out.push('\n');
    }
    out
}

/// Sidecar describing how a map was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSidecar {
    pub method: Method,
    pub label: String,
    pub class_index: usize,
    #[serde(flatten)]
    pub metadata: MapMetadata,
    /// True when the map was identically zero and the PGM is uniform grey.
    pub zero_map: bool,
}

/// The three files written per map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportedMap {
    pub pgm: PathBuf,
    pub csv: PathBuf,
    pub sidecar: PathBuf,
}

fn create_guard(path: &Path, force: bool) -> Result<()> {
    if !force && path.exists() {
        return Err(Error::Config(format!(
            "refusing to overwrite {} (pass --force to allow)",
            path.display()
        )));
    }
    Ok(())
}

/// Writes `{stem}_{label}_{method}.pgm/.csv/.json` into `dir`.
pub fn export_map(
    dir: &Path,
    stem: &str,
    label: &str,
    map: &AttributionMap<f64>,
    force: bool,
) -> Result<ExportedMap> {
    if map.values.rank() != 2 {
        return Err(Error::ShapeMismatch(format!(
            "expected a spatial [H, W] map, got {:?}",
            map.values.shape()
        )));
    }
    let base = format!("{stem}_{label}_{}", map.method.name());
    let paths = ExportedMap {
        pgm: dir.join(format!("{base}.pgm")),
        csv: dir.join(format!("{base}.csv")),
        sidecar: dir.join(format!("{base}.json")),
    };
    for p in [&paths.pgm, &paths.csv, &paths.sidecar] {
        create_guard(p, force)?;
    }

    let (pixels, zero_map) = heatmap_pixels(&map.values);
    write_pgm_u8(&paths.pgm, &pixels)?;
    std::fs::write(&paths.csv, map_to_csv(&map.values)).map_err(|e| Error::io(&paths.csv, e))?;

    let sidecar = MapSidecar {
        method: map.method,
        label: label.to_string(),
        class_index: map.class_index,
        metadata: map.metadata.clone(),
        zero_map,
    };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Parse(format!("sidecar serialization: {e}")))?;
    std::fs::write(&paths.sidecar, json).map_err(|e| Error::io(&paths.sidecar, e))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::TargetSpace;

    #[test]
    fn heatmap_normalization_formula() {
        let map = Tensor::new(vec![1, 4], vec![-2.0, 0.0, 1.0, 2.0]).unwrap();
        let (px, zero) = heatmap_pixels(&map);
        assert!(!zero);
        // round(127.5 + 127.5 * v / 2)
        assert_eq!(px.data(), &[0.0, 128.0, 191.0, 255.0]);
    }

    #[test]
    fn zero_map_is_mid_grey_and_flagged() {
        let map = Tensor::zeros(vec![3, 3]);
        let (px, zero) = heatmap_pixels(&map);
        assert!(zero);
        assert!(px.data().iter().all(|&v| v == 128.0));
    }

    #[test]
    fn csv_layout_is_row_major() {
        let map = Tensor::new(vec![2, 3], vec![1.0, 0.5, -0.25, 0.0, 2.0, -3.5]).unwrap();
        assert_eq!(map_to_csv(&map), "1,0.5,-0.25\n0,2,-3.5\n");
    }

    #[test]
    fn export_writes_three_files_and_respects_force() {
        let dir = std::env::temp_dir().join(format!("attriblab-export-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let map = AttributionMap {
            values: Tensor::new(vec![2, 2], vec![0.0, 1.0, -1.0, 0.5]).unwrap(),
            method: Method::Saliency,
            class_index: 3,
            metadata: MapMetadata::bare(TargetSpace::Logit),
        };
        let out = export_map(&dir, "img", "COVID19", &map, true).unwrap();
        assert!(out.pgm.ends_with("img_COVID19_saliency.pgm"));
        assert!(out.csv.exists() && out.sidecar.exists());

        // Second write without force must fail; with force must succeed.
        assert!(export_map(&dir, "img", "COVID19", &map, false).is_err());
        assert!(export_map(&dir, "img", "COVID19", &map, true).is_ok());

        let sidecar: MapSidecar =
            serde_json::from_str(&std::fs::read_to_string(&out.sidecar).unwrap()).unwrap();
        assert_eq!(sidecar.label, "COVID19");
        assert_eq!(sidecar.class_index, 3);
        assert!(!sidecar.zero_map);
    }

    #[test]
    fn export_is_byte_deterministic() {
        let dir = std::env::temp_dir().join(format!("attriblab-export-det-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let map = AttributionMap {
            values: Tensor::new(vec![2, 2], vec![0.125, -0.5, 0.75, -0.0625]).unwrap(),
            method: Method::DeepLift,
            class_index: 0,
            metadata: MapMetadata::bare(TargetSpace::Logit),
        };
        let a = export_map(&dir, "x", "l", &map, true).unwrap();
        let first: Vec<Vec<u8>> = [&a.pgm, &a.csv, &a.sidecar]
            .iter()
            .map(|p| std::fs::read(p).unwrap())
            .collect();
        let b = export_map(&dir, "x", "l", &map, true).unwrap();
        let second: Vec<Vec<u8>> = [&b.pgm, &b.csv, &b.sidecar]
            .iter()
            .map(|p| std::fs::read(p).unwrap())
            .collect();
        assert_eq!(first, second);
    }
}
