//! `attriblab train`: train one model on the 60% subject split, evaluate on
//! the held-out 40%, and save everything.

use attriblab::model_io::save_model;
use attriblab::split::split_subjects;
use attriblab::train::{epoch_log_to_csv, evaluate_samples, train};
use attriblab::zoo;

use super::dataset::LoadedDataset;
use super::{ensure_dir, guarded_write, require_manifest, require_out_dir, resolve_hierarchy};
use crate::config::RunConfig;
use crate::{CliError, TrainArgs};

pub(crate) fn apply_train_overrides(cfg: &mut RunConfig, args: &TrainArgs) -> Result<(), CliError> {
    let common = &args.common;
    if let Some(m) = &common.manifest {
        cfg.manifest = Some(m.clone());
    }
    if let Some(h) = &common.hierarchy {
        cfg.hierarchy = Some(h.clone());
    }
    if let Some(o) = &common.out_dir {
        cfg.out_dir = Some(o.clone());
    }
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = args.weight_decay {
        cfg.train.weight_decay = v;
    }
    if let Some(v) = args.threshold {
        cfg.train.threshold = v;
    }
    if let Some(a) = &args.arch {
        cfg.arch.arch = a.parse()?;
    }
    if let Some(v) = args.input_side {
        cfg.arch.input_side = v;
    }
    if let Some(v) = args.target_side {
        cfg.preprocess.target_side = v;
    }
    cfg.resolve_seed(common.seed)?;
    cfg.validate()?;
    Ok(())
}

pub fn run(args: TrainArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load_or_default(args.common.config.as_deref())?;
    apply_train_overrides(&mut cfg, &args)?;
    let out_dir = require_out_dir(&cfg.out_dir)?.to_path_buf();
    ensure_dir(&out_dir)?;

    let graph = resolve_hierarchy(cfg.hierarchy.as_deref())?;
    let data = LoadedDataset::load(require_manifest(&cfg.manifest)?, &graph, &cfg.preprocess)?;
    let split = split_subjects(&data.manifest, cfg.seed)?;
    let train_rows = data.rows_for_subjects(&split.train);
    let test_rows = data.rows_for_subjects(&split.test);

    let spec = cfg.arch.to_spec(graph.len());
    let model = zoo::build::<f64>(&spec, graph.labels(), cfg.seed)?;
    println!(
        "training {} ({} parameters) on {} images, testing on {}",
        spec.arch,
        zoo::count_parameters(&model),
        train_rows.len(),
        test_rows.len()
    );

    let train_samples = data.samples_for(&train_rows, cfg.arch.input_side, graph.len())?;
    let outcome = train(model, &train_samples, None, &cfg.train)?;

    let force = args.common.force;
    let model_path = out_dir.join("model.bin");
    if !force && model_path.exists() {
        return Err(CliError::Usage(format!(
            "refusing to overwrite {} (pass --force to allow)",
            model_path.display()
        )));
    }
    save_model(&model_path, &outcome.graph)?;
    guarded_write(
        &out_dir.join("train_log.csv"),
        epoch_log_to_csv(&outcome.log).as_bytes(),
        force,
    )?;

    let test_samples = data.samples_for(&test_rows, cfg.arch.input_side, graph.len())?;
    let report = evaluate_samples(&outcome.graph, &test_samples, cfg.train.threshold)?;
    guarded_write(
        &out_dir.join("test_report.json"),
        serde_json::to_string_pretty(&report)
            .expect("report serializes")
            .as_bytes(),
        force,
    )?;
    guarded_write(
        &out_dir.join("test_report.csv"),
        report.to_csv().as_bytes(),
        force,
    )?;

    let final_loss = outcome.log.last().map(|e| e.train_loss).unwrap_or(f64::NAN);
    println!(
        "final train loss {:.6}; test micro-F1 {:.4}; artifacts in {}",
        final_loss,
        report.micro.f1,
        out_dir.display()
    );
    Ok(())
}
