use serde::Serialize;

use super::backbone::Backbone;
use super::model::TapModel;
use super::preprocess::Volume;
use crate::domain::TriggerState;
use crate::error::TapError;

/// `|a - n| / max(1e-12, |a| + |n|)`; two zeros compare equal.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1e-12, analytic.abs() + numeric.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Tensor name and flat offset of the worst parameter.
    pub worst_tensor: String,
    pub worst_offset: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub parameters: usize,
}

/// Compares backpropagated gradients with central differences of step `eps`
/// for every parameter.
pub fn grad_check<B: Backbone>(
    model: &TapModel<B>,
    input: &Volume,
    states: &[TriggerState],
    label: TriggerState,
    eps: f64,
) -> Result<GradCheckReport, TapError> {
    let trace = model.trace(input, states)?;
    let (_, grads) = model.loss_and_grad(&trace, label);
    grad_check_with(model, input, states, label, eps, &grads)
}

/// Like [`grad_check`] but against caller-supplied gradients.
pub fn grad_check_with<B: Backbone>(
    model: &TapModel<B>,
    input: &Volume,
    states: &[TriggerState],
    label: TriggerState,
    eps: f64,
    grads: &TapModel<B>,
) -> Result<GradCheckReport, TapError> {
    let trace = model.trace(input, states)?;
    let names: Vec<(String, usize)> = model.tensors().iter().map(|(n, _, t)| (n.clone(), t.len())).collect();
    let analytic: Vec<f64> = grads.tensors().iter().flat_map(|(_, _, t)| t.iter().copied()).collect();
    let n_backbone = model.backbone.param_count();

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_tensor: String::new(),
        worst_offset: 0,
        analytic: 0.0,
        numeric: 0.0,
        parameters: analytic.len(),
    };
    let mut record = |flat: usize, a: f64, n: f64| {
        let err = relative_error(a, n);
        if err > report.max_relative_error || report.worst_tensor.is_empty() {
            let mut offset = flat;
            for (name, len) in &names {
                if offset < *len {
                    report.worst_tensor = name.clone();
                    break;
                }
                offset -= len;
            }
            report.worst_offset = offset;
            report.max_relative_error = err;
            report.analytic = a;
            report.numeric = n;
        }
    };

    for (i, &a) in analytic.iter().enumerate() {
        let loss_change = |delta: f64| {
            if i < n_backbone {
                let d = model.backbone.feature_delta(input, &trace.cache, i, delta);
                model.head_loss_delta(&trace, Some(&d), None, label)
            } else {
                model.head_loss_delta(&trace, None, Some((i - n_backbone, delta)), label)
            }
        };
        record(i, a, (loss_change(eps) - loss_change(-eps)) / (2.0 * eps));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TriggerState::{High, Low, Mid};
    use crate::tap::TapConfig;

    fn small(seed: u64) -> (TapModel, Volume) {
        let cfg = TapConfig {
            input_hw: 6,
            conv_channels: vec![3, 4],
            fv_dim: 5,
            state_embed_dim: 2,
            fs_hidden: 4,
            fs_dim: 3,
            fusion_hidden: 5,
            seed,
            ..TapConfig::default()
        };
        let model = TapModel::new(&cfg).unwrap();
        let mut x = Volume::zeros(3, 3, 6, 6);
        x.data.iter_mut().enumerate().for_each(|(i, v)| *v = ((i * 37) % 101) as f64 / 101.0);
        (model, x)
    }

    #[test]
    fn relative_error_formula() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(relative_error(1.0, -1.0), 1.0);
    }

    #[test]
    fn small_model_passes() {
        let (model, x) = small(1);
        let report = grad_check(&model, &x, &[Low, Mid, High], Mid, 1e-5).unwrap();
        assert_eq!(report.parameters, model.param_count());
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }

    #[test]
    fn doubled_gradient_is_detected() {
        let (model, x) = small(2);
        let trace = model.trace(&x, &[High, High, Low]).unwrap();
        let (_, mut grads) = model.loss_and_grad(&trace, Low);
        // Only touch one well-conditioned tensor so the ratio is exact algebra.
        grads.fusion_out.bias.iter_mut().for_each(|g| *g *= 2.0);
        let report = grad_check_with(&model, &x, &[High, High, Low], Low, 1e-5, &grads).unwrap();
        assert!((report.max_relative_error - 1.0 / 3.0).abs() < 1e-6, "{report:?}");
        assert_eq!(report.worst_tensor, "fusion_out.bias");
    }
}
