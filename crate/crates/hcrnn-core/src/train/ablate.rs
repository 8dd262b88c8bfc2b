//! Self-comparison harness: trains the full network and the two baseline
//! variants on identical data and seeds, reporting error and parameter
//! count per variant.

use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::error::Result;
use crate::model::{count_params, ModelConfig, ModelGraph, Variant};
use crate::pipeline::HandSample;
use crate::rng::{stream_rng, Stream};
use crate::train::{evaluate, train, TrainConfig};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub param_count: usize,
    pub mean_error_mm: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
    /// two_branch / full trainable-parameter ratio (parity target: within 10%).
    pub parity_ratio: f64,
    pub parity_within_10_percent: bool,
    /// Paper-scale context, reported but never asserted at desk scale.
    pub reference_note: String,
}

pub const VARIANTS: [Variant; 3] = [Variant::Full, Variant::TwoBranch, Variant::FcRegression];

/// Trains every variant with the same widths, data, and seed; evaluates
/// each on the same samples and checks the two_branch parameter parity.
pub fn run_ablation<T: Element>(
    base: &ModelConfig,
    samples: &[HandSample],
    cfg: &TrainConfig,
    thresholds: &[f64],
) -> Result<AblationReport> {
    let mut rows = Vec::new();
    let mut counts = std::collections::HashMap::new();
    for variant in VARIANTS {
        let mut model_cfg = base.clone();
        model_cfg.variant = variant;
        let model = ModelGraph::<T>::init(model_cfg, &mut stream_rng(cfg.seed, Stream::Init))?;
        let outcome = train(&model, samples, cfg, |_, _| Ok(()))?;
        let report = evaluate(&model, samples, thresholds, false)?;
        counts.insert(variant.as_str(), model.param_count());
        rows.push(AblationRow {
            variant: variant.as_str().to_string(),
            param_count: model.param_count(),
            mean_error_mm: report.mean_error_mm,
            iterations: outcome.iterations,
        });
    }
    let full = counts["full"] as f64;
    let two = counts["two_branch"] as f64;
    let parity_ratio = two / full;
    Ok(AblationReport {
        rows,
        parity_ratio,
        parity_within_10_percent: (parity_ratio - 1.0).abs() <= 0.10,
        reference_note: "paper-scale NYU reference: full 9.37 mm, two_branch 9.88 mm, \
                         fc_regression 10.05 mm (context only, not asserted at desk scale)"
            .to_string(),
    })
}

/// Parameter parity check without training, at any width scale.
pub fn parity_counts(base: &ModelConfig) -> Result<(usize, usize)> {
    let mut full = base.clone();
    full.variant = Variant::Full;
    let mut two = base.clone();
    two.variant = Variant::TwoBranch;
    let two = two.resolve()?;
    Ok((count_params(&full)?, count_params(&two)?))
}
