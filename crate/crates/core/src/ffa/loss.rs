use super::layer::{FfLayer, LayerOutput, LayerTrace};
use crate::error::{FfError, Result};
use crate::goodness::{g_analog, prob, spiking_goodness, spiking_goodness_grad, GoodnessKind, ProbParams};
use crate::snn::LayerGrads;

/// Lower clamp on the argument of the logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Positive,
    Negative,
}

/// Per-sample BCE term and its derivative with respect to the goodness.
pub fn goodness_loss(goodness: f64, pass: Pass, params: &ProbParams) -> (f64, f64) {
    match pass {
        Pass::Positive => {
            let p = prob(goodness, params.alpha_pos, params.theta_pos);
            if p < LOG_CLAMP {
                (-LOG_CLAMP.ln(), 0.0)
            } else {
                (-p.ln(), -params.alpha_pos * (1.0 - p))
            }
        }
        Pass::Negative => {
            let p = prob(goodness, params.alpha_neg, params.theta_neg);
            let q = 1.0 - p;
            if q < LOG_CLAMP {
                (-LOG_CLAMP.ln(), 0.0)
            } else {
                (-q.ln(), params.alpha_neg * p)
            }
        }
    }
}

fn goodness_of(kind: GoodnessKind, output: &LayerOutput) -> f64 {
    match output {
        LayerOutput::Spikes(s) => spiking_goodness(kind, s),
        LayerOutput::Activations(a) => g_analog(a.as_slice().expect("contiguous activations")),
    }
}

/// Batch-mean of `-log P(G(pos)) - log(1 - P(G(neg)))` for one layer.
pub fn layer_loss(positive: &[LayerOutput], negative: &[LayerOutput], kind: GoodnessKind, params: &ProbParams) -> Result<f64> {
    if positive.len() != negative.len() || positive.is_empty() {
        return Err(FfError::Shape(format!(
            "{} positive and {} negative latents",
            positive.len(),
            negative.len()
        )));
    }
    let total: f64 = positive
        .iter()
        .zip(negative)
        .map(|(p, n)| {
            goodness_loss(goodness_of(kind, p), Pass::Positive, params).0
                + goodness_loss(goodness_of(kind, n), Pass::Negative, params).0
        })
        .sum();
    Ok(total / positive.len() as f64)
}

/// Adds the gradient of one pass's loss term to `grads` and returns the term.
///
/// `scale` multiplies the gradient (e.g. `1 / batch_size`).
#[allow(clippy::too_many_arguments)]
pub fn layer_gradient(
    layer: &FfLayer,
    trace: Option<&LayerTrace>,
    pass: Pass,
    kind: GoodnessKind,
    params: &ProbParams,
    surrogate_slope: f64,
    scale: f64,
    grads: &mut LayerGrads,
) -> Result<f64> {
    let trace = trace.ok_or_else(|| FfError::State("layer gradient needs a recorded forward trace".into()))?;
    match (layer, trace) {
        (FfLayer::Spiking(l), LayerTrace::Spiking(tr)) => {
            let g = spiking_goodness(kind, &tr.output);
            let (loss, dl_dg) = goodness_loss(g, pass, params);
            if dl_dg != 0.0 {
                let grad_spikes: Vec<f64> = spiking_goodness_grad(kind, &tr.output)
                    .into_iter()
                    .map(|d| d * dl_dg * scale)
                    .collect();
                l.accumulate_gradient(tr, &grad_spikes, surrogate_slope, grads)?;
            }
            Ok(loss)
        }
        (FfLayer::Analog(l), LayerTrace::Analog(tr)) => {
            let out = tr.output.as_slice().expect("contiguous activations");
            let (loss, dl_dg) = goodness_loss(g_analog(out), pass, params);
            if dl_dg != 0.0 {
                let n = out.len() as f64;
                let grad_out: Vec<f64> = out.iter().map(|a| 2.0 * a / n * dl_dg * scale).collect();
                l.accumulate_gradient(tr, &grad_out, grads)?;
            }
            Ok(loss)
        }
        _ => Err(FfError::State("trace from a different layer family".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::snn::SpikeTrain;

    #[test]
    fn loss_at_thresholds_is_two_ln_two() {
        let params = ProbParams::default_for(GoodnessKind::BoundedSpiking);
        // G0 of 3 spikes in 10 cells is exactly theta_pos = 0.3; 1 spike in 10 is theta_neg.
        let pos = SpikeTrain::from_fn(2, 5, |n, t| n == 0 && t < 3);
        let neg = SpikeTrain::from_fn(2, 5, |n, t| n == 1 && t == 4);
        let loss = layer_loss(
            &[LayerOutput::Spikes(pos)],
            &[LayerOutput::Spikes(neg)],
            GoodnessKind::BoundedSpiking,
            &params,
        )
        .unwrap();
        assert!((loss - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_passes_approach_the_negative_floor() {
        let params = ProbParams::default_for(GoodnessKind::UnboundedSpiking);
        let floor = -(1.0 - prob(0.0, params.alpha_neg, params.theta_neg)).ln();
        assert!(floor > 0.0);
        let big = goodness_loss(1e9, Pass::Positive, &params).0 + goodness_loss(0.0, Pass::Negative, &params).0;
        assert!((big - floor).abs() < 1e-12);
        let less = goodness_loss(10.0, Pass::Positive, &params).0 + goodness_loss(0.0, Pass::Negative, &params).0;
        assert!(less > big);
    }

    #[test]
    fn batch_loss_matches_scalar_recomputation() {
        let params = ProbParams::symmetric(1.3, 4.0, 1.5);
        let pos: Vec<LayerOutput> = (0..6)
            .map(|k| LayerOutput::Spikes(SpikeTrain::from_fn(5, 8, |n, t| (n * 3 + t + k) % 4 == 0)))
            .collect();
        let neg: Vec<LayerOutput> = (0..6)
            .map(|k| LayerOutput::Spikes(SpikeTrain::from_fn(5, 8, |n, t| (n + 2 * t + k) % 7 == 0)))
            .collect();
        let got = layer_loss(&pos, &neg, GoodnessKind::UnboundedSpiking, &params).unwrap();
        let mut expected = 0.0;
        for (p, n) in pos.iter().zip(&neg) {
            let (LayerOutput::Spikes(p), LayerOutput::Spikes(n)) = (p, n) else { unreachable!() };
            let gp: f64 = p.counts().iter().map(|&c| f64::from(c * c)).sum::<f64>() / 5.0;
            let gn: f64 = n.counts().iter().map(|&c| f64::from(c * c)).sum::<f64>() / 5.0;
            let pp = 1.0 / (1.0 + (-1.3 * (gp - 4.0)).exp());
            let pn = 1.0 / (1.0 + (-1.3 * (gn - 1.5)).exp());
            expected += -pp.ln() - (1.0 - pn).ln();
        }
        assert!((got - expected / 6.0).abs() < 1e-10);
    }

    #[test]
    fn missing_trace_is_state_error() {
        let mut rng = crate::rng::stream(0, &[]);
        let layer = FfLayer::Analog(super::super::layer::DenseAnalogLayer::init(3, 2, false, &mut rng));
        let mut grads = LayerGrads::zeros(2, 3);
        let params = ProbParams::default_for(GoodnessKind::AnalogSquared);
        let res = layer_gradient(&layer, None, Pass::Positive, GoodnessKind::AnalogSquared, &params, 25.0, 1.0, &mut grads);
        assert!(matches!(res, Err(FfError::State(_))));
    }
}
