//! `attriblab attribute`: attribution maps for one image, exported as
//! PGM heatmap + CSV scores + JSON sidecar per (label, method) pair.

use attriblab::attribution::{attribute_all, AttributionConfig};
use attriblab::export::export_map;
use attriblab::labels::LabelSet;
use attriblab::model_io::load_model;
use attriblab::preprocess::{preprocess_image, resize_square, to_model_input};

use super::{ensure_dir, require_out_dir, resolve_hierarchy};
use crate::config::{parse_method_names, RunConfig};
use crate::{AttributeArgs, CliError};

pub fn run(args: AttributeArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::load_or_default(args.common.config.as_deref())?;
    if let Some(h) = &args.common.hierarchy {
        cfg.hierarchy = Some(h.clone());
    }
    if let Some(o) = &args.common.out_dir {
        cfg.out_dir = Some(o.clone());
    }
    if let Some(v) = args.ig_steps {
        cfg.ig_steps = v;
    }
    if let Some(v) = args.window {
        cfg.occlusion.window = v;
    }
    if let Some(v) = args.stride {
        cfg.occlusion.stride = v;
    }
    if let Some(v) = args.fill_value {
        cfg.occlusion.fill_value = v;
    }
    if let Some(v) = args.threshold {
        cfg.train.threshold = v;
    }
    if let Some(m) = &args.methods {
        cfg.methods = m.split(',').map(|s| s.trim().to_string()).collect();
    }
    cfg.resolve_seed(args.common.seed)?;
    cfg.validate()?;
    let force = args.common.force;
    let out_dir = require_out_dir(&cfg.out_dir)?.to_path_buf();
    ensure_dir(&out_dir)?;
    // Attribution takes its label names from the model container; a
    // --hierarchy flag is only validated for parseability.
    if cfg.hierarchy.is_some() {
        resolve_hierarchy(cfg.hierarchy.as_deref())?;
    }

    let model = load_model(&args.model)?;
    let input_side = model.input_shape()[1];

    let raw = attriblab::image_io::read_image(&args.image)?;
    let pre = preprocess_image(&raw, &cfg.preprocess)?;
    for w in &pre.warnings {
        eprintln!("warning: {}", w);
    }
    let square = resize_square(&pre.image, input_side)?;
    let input = to_model_input(&square)?;

    // Explain the requested labels, or the model's own predictions.
    let label_set = match &args.labels {
        Some(list) => {
            let mut set = LabelSet::empty();
            for name in list.split(',') {
                let name = name.trim();
                let idx = model
                    .labels()
                    .iter()
                    .position(|l| l == name)
                    .ok_or_else(|| {
                        attriblab::Error::Label(format!(
                            "model has no label {name:?}; available: {:?}",
                            model.labels()
                        ))
                    })?;
                set.insert(idx);
            }
            set
        }
        None => {
            let probs = model.predict_probs(&input)?;
            LabelSet::from_probs(&probs, cfg.train.threshold)
        }
    };
    if label_set.is_empty() {
        println!("no labels above threshold; nothing to attribute");
        return Ok(());
    }

    let methods = parse_method_names(&cfg.methods)?;
    let attr_cfg = AttributionConfig {
        occlusion: cfg.occlusion,
        ig_steps: cfg.ig_steps,
        baseline: None,
    };
    let maps = attribute_all(&model, &input, &label_set, &methods, &attr_cfg)?;

    let stem = args
        .image
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("image")
        .to_string();

    let mut written = 0;
    for map in &maps {
        let label = &model.labels()[map.class_index];
        let paths = export_map(&out_dir, &stem, label, map, force)?;
        written += 1;
        println!("{} {} -> {}", label, map.method, paths.pgm.display());
    }
    println!("{written} maps written to {}", out_dir.display());
    Ok(())
}
