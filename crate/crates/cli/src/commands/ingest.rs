//! `attriblab ingest`: validate a manifest and summarize the dataset.

use std::path::PathBuf;

use serde::Serialize;

use attriblab::manifest::Manifest;
use attriblab::split::{kfold_subjects, split_subjects};

use super::{guarded_write, require_manifest, resolve_hierarchy};
use crate::config::RunConfig;
use crate::{CliError, IngestArgs};

#[derive(Debug, Serialize)]
struct LabelCount {
    label: String,
    raw: usize,
    expanded: usize,
}

#[derive(Debug, Serialize)]
struct SplitSummary {
    seed: u64,
    train_subjects: usize,
    test_subjects: usize,
    train_images: usize,
    test_images: usize,
}

#[derive(Debug, Serialize)]
struct FoldSummary {
    k: usize,
    subject_counts: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct DatasetSummary {
    images: usize,
    subjects: usize,
    labels: Vec<LabelCount>,
    /// Absent when the dataset is too small to split (one subject).
    split: Option<SplitSummary>,
    folds: FoldSummary,
}

pub fn run(args: IngestArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load_or_default(args.common.config.as_deref())?;
    if let Some(m) = &args.common.manifest {
        cfg.manifest = Some(m.clone());
    }
    if let Some(h) = &args.common.hierarchy {
        cfg.hierarchy = Some(h.clone());
    }
    if let Some(o) = &args.common.out_dir {
        cfg.out_dir = Some(o.clone());
    }
    cfg.resolve_seed(args.common.seed)?;

    let manifest_path = require_manifest(&cfg.manifest)?;
    let graph = resolve_hierarchy(cfg.hierarchy.as_deref())?;
    let manifest = Manifest::load(manifest_path)?;
    manifest.check_unique_paths()?;
    let targets = manifest.targets(&graph)?;

    // Every image must at least open and decode.
    let base = manifest_path.parent().unwrap_or(std::path::Path::new("."));
    for row in &manifest.rows {
        attriblab::image_io::read_image(&base.join(&row.image_path))?;
    }

    let mut raw_counts = vec![0usize; graph.len()];
    let mut expanded_counts = vec![0usize; graph.len()];
    for (raw, expanded) in &targets {
        for i in raw.iter() {
            raw_counts[i] += 1;
        }
        for i in expanded.iter() {
            expanded_counts[i] += 1;
        }
    }

    // Split and fold previews are best-effort: a dataset with a single
    // subject is still valid to ingest.
    let split = split_subjects(&manifest, cfg.seed).ok();
    let folds = split
        .as_ref()
        .and_then(|s| kfold_subjects(&s.train, cfg.folds).ok())
        .map(|f| f.folds.iter().map(|fold| fold.len()).collect::<Vec<_>>())
        .unwrap_or_default();

    let summary = DatasetSummary {
        images: manifest.rows.len(),
        subjects: manifest.unique_subjects().len(),
        labels: (0..graph.len())
            .map(|i| LabelCount {
                label: graph.label(i).to_string(),
                raw: raw_counts[i],
                expanded: expanded_counts[i],
            })
            .collect(),
        split: split.map(|split| SplitSummary {
            seed: cfg.seed,
            train_subjects: split.train.len(),
            test_subjects: split.test.len(),
            train_images: attriblab::split::rows_for_subjects(&manifest, &split.train).len(),
            test_images: attriblab::split::rows_for_subjects(&manifest, &split.test).len(),
        }),
        folds: FoldSummary {
            k: cfg.folds,
            subject_counts: folds,
        },
    };

    match &summary.split {
        Some(split) => println!(
            "{} images over {} subjects; split {}/{} subjects (seed {})",
            summary.images, summary.subjects, split.train_subjects, split.test_subjects, cfg.seed
        ),
        None => println!(
            "{} images over {} subjects; too few subjects to split",
            summary.images, summary.subjects
        ),
    }
    for lc in &summary.labels {
        println!(
            "  {:<20} raw {:>6}  expanded {:>6}",
            lc.label, lc.raw, lc.expanded
        );
    }

    let out = args.out.unwrap_or_else(|| {
        cfg.out_dir
            .clone()
            .map(|d| d.join("summary.json"))
            .unwrap_or_else(|| PathBuf::from("summary.json"))
    });
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            super::ensure_dir(parent)?;
        }
    }
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    guarded_write(&out, json.as_bytes(), args.common.force)?;
    println!("summary written to {}", out.display());
    Ok(())
}
