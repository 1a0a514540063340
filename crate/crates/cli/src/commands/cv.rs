//! `attriblab cv`: k-fold cross-validation inside the 60% train split, then
//! held-out test evaluation of every fold model and of their soft-vote
//! ensemble.

use serde::Serialize;

use attriblab::labels::LabelSet;
use attriblab::metrics::{accumulate, ensemble, AggregateReport, MetricReport};
use attriblab::model_io::save_model;
use attriblab::split::{kfold_subjects, split_subjects};
use attriblab::train::{epoch_log_to_csv, evaluate_samples, train};
use attriblab::zoo;

use super::dataset::LoadedDataset;
use super::train::apply_train_overrides;
use super::{ensure_dir, guarded_write, require_manifest, require_out_dir, resolve_hierarchy};
use crate::config::RunConfig;
use crate::{CliError, CvArgs};

#[derive(Debug, Serialize)]
struct TestEvaluation {
    per_model: Vec<MetricReport>,
    mean_model_micro_f1: f64,
    ensemble: MetricReport,
}

// Per-fold model seed, decorrelated from the split seed.
fn fold_seed(seed: u64, fold: u64) -> u64 {
    seed ^ (fold + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

pub fn run(args: CvArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load_or_default(args.train.common.config.as_deref())?;
    if let Some(k) = args.folds {
        cfg.folds = k;
    }
    apply_train_overrides(&mut cfg, &args.train)?;
    let force = args.train.common.force;
    let out_dir = require_out_dir(&cfg.out_dir)?.to_path_buf();
    ensure_dir(&out_dir)?;

    let graph = resolve_hierarchy(cfg.hierarchy.as_deref())?;
    let data = LoadedDataset::load(require_manifest(&cfg.manifest)?, &graph, &cfg.preprocess)?;
    let split = split_subjects(&data.manifest, cfg.seed)?;
    // Fails before any training when the train split cannot host k folds.
    let folds = kfold_subjects(&split.train, cfg.folds)?;
    let k = folds.folds.len();

    let spec = cfg.arch.to_spec(graph.len());
    println!(
        "{}-fold cv of {} over {} train subjects; {} held-out test subjects",
        k,
        spec.arch,
        split.train.len(),
        split.test.len()
    );

    let mut models = Vec::with_capacity(k);
    let mut val_reports = Vec::with_capacity(k);
    for (f, val_subjects) in folds.folds.iter().enumerate() {
        let train_subjects: Vec<String> = split
            .train
            .iter()
            .filter(|s| !val_subjects.contains(s))
            .cloned()
            .collect();
        let train_rows = data.rows_for_subjects(&train_subjects);
        let val_rows = data.rows_for_subjects(val_subjects);

        let mut fold_cfg = cfg.train.clone();
        fold_cfg.seed = fold_seed(cfg.seed, f as u64);
        let model = zoo::build::<f64>(&spec, graph.labels(), fold_cfg.seed)?;
        let train_samples = data.samples_for(&train_rows, cfg.arch.input_side, graph.len())?;
        let outcome = train(model, &train_samples, None, &fold_cfg)?;

        let fold_dir = out_dir.join(format!("fold_{f}"));
        ensure_dir(&fold_dir)?;
        let model_path = fold_dir.join("model.bin");
        if !force && model_path.exists() {
            return Err(CliError::Usage(format!(
                "refusing to overwrite {} (pass --force to allow)",
                model_path.display()
            )));
        }
        save_model(&model_path, &outcome.graph)?;
        guarded_write(
            &fold_dir.join("train_log.csv"),
            epoch_log_to_csv(&outcome.log).as_bytes(),
            force,
        )?;

        let val_samples = data.samples_for(&val_rows, cfg.arch.input_side, graph.len())?;
        let report = evaluate_samples(&outcome.graph, &val_samples, cfg.train.threshold)?;
        guarded_write(
            &fold_dir.join("val_report.json"),
            serde_json::to_string_pretty(&report)
                .expect("report serializes")
                .as_bytes(),
            force,
        )?;
        guarded_write(
            &fold_dir.join("val_report.csv"),
            report.to_csv().as_bytes(),
            force,
        )?;
        println!("fold {f}: val micro-F1 {:.4}", report.micro.f1);

        models.push(outcome.graph);
        val_reports.push(report);
    }

    let aggregate = AggregateReport::from_folds(val_reports)?;
    guarded_write(
        &out_dir.join("cv_aggregate.json"),
        serde_json::to_string_pretty(&aggregate)
            .expect("aggregate serializes")
            .as_bytes(),
        force,
    )?;
    guarded_write(
        &out_dir.join("cv_aggregate.csv"),
        aggregate.to_csv().as_bytes(),
        force,
    )?;
    println!(
        "cv micro-F1 {:.4} +/- {:.4}",
        aggregate.mean.micro.f1, aggregate.std.micro.f1
    );

    // Held-out test: each fold model individually, then the soft-vote mean.
    let test_rows = data.rows_for_subjects(&split.test);
    let test_samples = data.samples_for(&test_rows, cfg.arch.input_side, graph.len())?;
    let mut per_model = Vec::with_capacity(k);
    for model in &models {
        per_model.push(evaluate_samples(model, &test_samples, cfg.train.threshold)?);
    }
    let mean_model_micro_f1 =
        per_model.iter().map(|r| r.micro.f1).sum::<f64>() / per_model.len() as f64;

    let mut ens_preds = Vec::with_capacity(test_samples.len());
    let mut targets = Vec::with_capacity(test_samples.len());
    for sample in &test_samples {
        let probs: Vec<_> = models
            .iter()
            .map(|m| m.predict_probs(&sample.input))
            .collect::<Result<_, _>>()?;
        let mean = ensemble(&probs)?;
        ens_preds.push(LabelSet::from_probs(&mean, cfg.train.threshold));
        targets.push(LabelSet::from_probs(&sample.target, 0.5));
    }
    let ens_counts = accumulate(&ens_preds, &targets, graph.len())?;
    let ens_report = MetricReport::from_counts(&ens_counts);

    let test_eval = TestEvaluation {
        per_model,
        mean_model_micro_f1,
        ensemble: ens_report,
    };
    guarded_write(
        &out_dir.join("test_evaluation.json"),
        serde_json::to_string_pretty(&test_eval)
            .expect("test evaluation serializes")
            .as_bytes(),
        force,
    )?;
    println!(
        "test: mean model micro-F1 {:.4}; ensemble micro-F1 {:.4}",
        test_eval.mean_model_micro_f1, test_eval.ensemble.micro.f1
    );
    Ok(())
}
