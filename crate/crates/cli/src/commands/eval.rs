//! `attriblab eval`: evaluate saved models over a manifest; `--ensemble`
//! additionally reports the soft-vote combination.

use attriblab::graph::ModelGraph;
use attriblab::labels::LabelSet;
use attriblab::metrics::{accumulate, ensemble, MetricReport};
use attriblab::model_io::load_model;

use super::dataset::LoadedDataset;
use super::{ensure_dir, guarded_write, require_manifest, resolve_hierarchy};
use crate::config::RunConfig;
use crate::{CliError, EvalArgs};

pub fn run(args: EvalArgs) -> Result<(), CliError> {
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
    if let Some(t) = args.threshold {
        cfg.train.threshold = t;
    }
    cfg.resolve_seed(args.common.seed)?;
    cfg.validate()?;
    let force = args.common.force;

    let models: Vec<ModelGraph<f64>> = args
        .models
        .iter()
        .map(|p| load_model(p))
        .collect::<Result<_, _>>()?;
    // All models must agree on the label list, and the hierarchy must match
    // it so raw manifest labels expand into the model's output space.
    for m in &models[1..] {
        if m.labels() != models[0].labels() {
            return Err(
                attriblab::Error::Label("models do not share the same label list".into()).into(),
            );
        }
    }
    let graph = resolve_hierarchy(cfg.hierarchy.as_deref())?;
    if graph.labels() != models[0].labels() {
        return Err(attriblab::Error::Label(format!(
            "hierarchy labels {:?} do not match model labels {:?}",
            graph.labels(),
            models[0].labels()
        ))
        .into());
    }

    let data = LoadedDataset::load(require_manifest(&cfg.manifest)?, &graph, &cfg.preprocess)?;
    let all_rows: Vec<usize> = (0..data.manifest.rows.len()).collect();
    let targets: Vec<LabelSet> = all_rows.iter().map(|&i| data.expanded[i]).collect();

    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| ".".into());
    ensure_dir(&out_dir)?;

    // Per-model predictions are cached as probabilities so the ensemble can
    // reuse them.
    let mut all_probs: Vec<Vec<attriblab::Tensor>> = Vec::with_capacity(models.len());
    for (i, model) in models.iter().enumerate() {
        let side = model.input_shape()[1];
        let samples = data.samples_for(&all_rows, side, graph.len())?;
        let mut probs = Vec::with_capacity(samples.len());
        for s in &samples {
            probs.push(model.predict_probs(&s.input)?);
        }
        let preds: Vec<LabelSet> = probs
            .iter()
            .map(|p| LabelSet::from_probs(p, cfg.train.threshold))
            .collect();
        let counts = accumulate(&preds, &targets, graph.len())?;
        let report = MetricReport::from_counts(&counts);
        guarded_write(
            &out_dir.join(format!("report_model_{i}.json")),
            serde_json::to_string_pretty(&report)
                .expect("report serializes")
                .as_bytes(),
            force,
        )?;
        guarded_write(
            &out_dir.join(format!("report_model_{i}.csv")),
            report.to_csv().as_bytes(),
            force,
        )?;
        println!(
            "model {i} ({}): micro-F1 {:.4} macro-F1 {:.4}",
            args.models[i].display(),
            report.micro.f1,
            report.macro_avg.f1
        );
        all_probs.push(probs);
    }

    if args.ensemble {
        let mut preds = Vec::with_capacity(all_rows.len());
        for row in 0..all_rows.len() {
            let per_model: Vec<attriblab::Tensor> =
                all_probs.iter().map(|p| p[row].clone()).collect();
            let mean = ensemble(&per_model)?;
            preds.push(LabelSet::from_probs(&mean, cfg.train.threshold));
        }
        let counts = accumulate(&preds, &targets, graph.len())?;
        let report = MetricReport::from_counts(&counts);
        guarded_write(
            &out_dir.join("ensemble_report.json"),
            serde_json::to_string_pretty(&report)
                .expect("report serializes")
                .as_bytes(),
            force,
        )?;
        guarded_write(
            &out_dir.join("ensemble_report.csv"),
            report.to_csv().as_bytes(),
            force,
        )?;
        println!(
            "ensemble of {}: micro-F1 {:.4} macro-F1 {:.4}",
            models.len(),
            report.micro.f1,
            report.macro_avg.f1
        );
    }
    Ok(())
}
