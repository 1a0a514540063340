//! Manifest-driven dataset assembly shared by train, cv and eval.

use std::path::Path;

use attriblab::labels::{LabelGraph, LabelSet};
use attriblab::manifest::Manifest;
use attriblab::preprocess::{preprocess_image, resize_square, to_model_input, PreprocessConfig};
use attriblab::tensor::Tensor;
use attriblab::train::TrainSample;

use crate::CliError;

/// A manifest with every image standardized to the preprocessing square and
/// every row's raw/expanded label sets resolved.
pub struct LoadedDataset {
    pub manifest: Manifest,
    /// `[target_side, target_side]` images, aligned with `manifest.rows`.
    pub squares: Vec<Tensor<f64>>,
    pub expanded: Vec<LabelSet>,
}

impl LoadedDataset {
    pub fn load(
        manifest_path: &Path,
        graph: &LabelGraph,
        pre: &PreprocessConfig,
    ) -> Result<Self, CliError> {
        let manifest = Manifest::load(manifest_path)?;
        manifest.check_unique_paths()?;
        let targets = manifest.targets(graph)?;
        let expanded: Vec<LabelSet> = targets.into_iter().map(|(_, e)| e).collect();

        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let mut squares = Vec::with_capacity(manifest.rows.len());
        for row in &manifest.rows {
            let path = base.join(&row.image_path);
            let img = attriblab::image_io::read_image(&path)?;
            let out = preprocess_image(&img, pre)?;
            for w in &out.warnings {
                eprintln!("warning: {}: {w}", row.image_path);
            }
            squares.push(out.image);
        }
        Ok(LoadedDataset {
            manifest,
            squares,
            expanded,
        })
    }

    /// Model-ready samples for a subset of rows, resized to `input_side`.
    pub fn samples_for(
        &self,
        rows: &[usize],
        input_side: usize,
        num_classes: usize,
    ) -> Result<Vec<TrainSample<f64>>, CliError> {
        rows.iter()
            .map(|&i| {
                let square = resize_square(&self.squares[i], input_side)?;
                Ok(TrainSample {
                    input: to_model_input(&square)?,
                    target: self.expanded[i].to_multi_hot(num_classes),
                })
            })
            .collect()
    }

    /// Indices of rows whose subject is in `subjects`.
    pub fn rows_for_subjects(&self, subjects: &[String]) -> Vec<usize> {
        attriblab::split::rows_for_subjects(&self.manifest, subjects)
    }
}
