//! Occlusion sensitivity: slide a grey square over the image and score each
//! position by the drop in class probability.

use super::{
    check_class, check_input, AttributionMap, MapMetadata, Method, OcclusionConfig, TargetSpace,
};
use crate::error::Result;
use crate::graph::ModelGraph;
use crate::loss::sigmoid;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// For each window position, score = `P_original - P_occluded` for the
/// target class; a pixel's value is the mean score over every window that
/// covers it. Windows start at multiples of the stride and are clipped at
/// the borders.
pub fn occlusion<T: Scalar>(
    graph: &ModelGraph<T>,
    x: &Tensor<T>,
    class_index: usize,
    cfg: &OcclusionConfig,
) -> Result<AttributionMap<T>> {
    check_input(graph, x)?;
    check_class(graph, class_index)?;
    let (h, w) = (x.shape()[1], x.shape()[2]);
    cfg.validate(h.min(w))?;

    let p_original = sigmoid(graph.forward(x)?.logits().data()[class_index]);
    let fill = T::from_f64_lossy(cfg.fill_value);

    let mut score_sum = vec![T::zero(); h * w];
    let mut cover_count = vec![0u32; h * w];
    let mut occluded = x.clone();

    let mut y0 = 0;
    while y0 < h {
        let y1 = (y0 + cfg.window).min(h);
        let mut x0 = 0;
        while x0 < w {
            let x1 = (x0 + cfg.window).min(w);
            // Paint the window, evaluate, then restore from the original.
            for y in y0..y1 {
                for xx in x0..x1 {
                    occluded.set3(0, y, xx, fill);
                }
            }
            let p_occluded = sigmoid(graph.forward(&occluded)?.logits().data()[class_index]);
            let score = p_original - p_occluded;
            for y in y0..y1 {
                for xx in x0..x1 {
                    occluded.set3(0, y, xx, x.at3(0, y, xx));
                    score_sum[y * w + xx] += score;
                    cover_count[y * w + xx] += 1;
                }
            }
            x0 += cfg.stride;
        }
        y0 += cfg.stride;
    }

    let values: Vec<T> = score_sum
        .into_iter()
        .zip(cover_count)
        .map(|(s, c)| {
            debug_assert!(c > 0, "stride <= window guarantees full coverage");
            s / T::from_f64_lossy(c as f64)
        })
        .collect();

    Ok(AttributionMap {
        values: Tensor::new(vec![h, w], values)?,
        method: Method::Occlusion,
        class_index,
        metadata: MapMetadata {
            window: Some(cfg.window),
            stride: Some(cfg.stride),
            fill_value: Some(cfg.fill_value),
            ..MapMetadata::bare(TargetSpace::Probability)
        },
    })
}
