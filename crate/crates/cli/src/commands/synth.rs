//! `attriblab synth`: generate the bundled synthetic hierarchical texture
//! dataset plus a ready-to-run configuration for it.

use attriblab::attribution::OcclusionConfig;
use attriblab::preprocess::PreprocessConfig;
use attriblab::synth::{generate, SynthConfig};
use attriblab::train::TrainConfig;
use attriblab::zoo::ArchId;

use super::{ensure_dir, guarded_write, require_out_dir};
use crate::config::{ArchSection, RunConfig};
use crate::{CliError, SynthArgs};

pub fn run(args: SynthArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load_or_default(args.common.config.as_deref())?;
    if let Some(o) = &args.common.out_dir {
        cfg.out_dir = Some(o.clone());
    }
    cfg.resolve_seed(args.common.seed)?;
    let out_dir = require_out_dir(&cfg.out_dir)?.to_path_buf();
    ensure_dir(&out_dir)?;

    let synth_cfg = SynthConfig {
        subjects: args.subjects,
        images_per_subject: args.images_per_subject,
        ..SynthConfig::default()
    };
    let out = generate(&out_dir, cfg.seed, &synth_cfg)?;
    println!(
        "{} images over {} subjects in {}",
        out.image_count,
        out.subject_count,
        out.images_dir.display()
    );

    // Desk-scale defaults tuned for this task.
    let run_cfg = RunConfig {
        seed: cfg.seed,
        preprocess: PreprocessConfig {
            target_side: 24,
            clip_low_pct: 1.0,
            clip_high_pct: 95.0,
        },
        arch: ArchSection {
            arch: ArchId::PlainCnn,
            input_side: 24,
            widths: None,
        },
        train: TrainConfig {
            lr: 0.001,
            weight_decay: 0.0001,
            epochs: 24,
            batch_size: 16,
            seed: cfg.seed,
            threshold: 0.5,
        },
        folds: 5,
        occlusion: OcclusionConfig {
            window: 8,
            stride: 4,
            fill_value: 0.5,
        },
        ig_steps: 64,
        methods: vec!["all".into()],
        manifest: Some(out.manifest.clone()),
        hierarchy: Some(out.hierarchy.clone()),
        out_dir: Some(out_dir.join("run")),
    };
    let config_path = out_dir.join("config.json");
    guarded_write(
        &config_path,
        run_cfg.to_pretty_json().as_bytes(),
        args.common.force,
    )?;
    println!("run configuration written to {}", config_path.display());
    Ok(())
}
