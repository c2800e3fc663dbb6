//! Layer goodness scores and the logistic probability fed to the loss.

use serde::{Deserialize, Serialize};

use crate::snn::SpikeTrain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoodnessKind {
    /// Mean over neurons of the squared spike count; range `[0, T^2]`.
    UnboundedSpiking,
    /// Mean firing probability over neurons and timesteps; range `[0, 1]`.
    BoundedSpiking,
    /// Mean squared ReLU activation.
    AnalogSquared,
}

impl GoodnessKind {
    pub fn is_spiking(self) -> bool {
        !matches!(self, GoodnessKind::AnalogSquared)
    }
}

impl std::str::FromStr for GoodnessKind {
    type Err = crate::FfError;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "unbounded" | "unbounded-spiking" => Ok(Self::UnboundedSpiking),
            "bounded" | "bounded-spiking" => Ok(Self::BoundedSpiking),
            "analog" | "analog-squared" => Ok(Self::AnalogSquared),
            other => Err(crate::FfError::Config(format!("unknown goodness '{other}'"))),
        }
    }
}

/// Slopes and thresholds of the positive and negative probability functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbParams {
    pub alpha_pos: f64,
    pub alpha_neg: f64,
    pub theta_pos: f64,
    pub theta_neg: f64,
}

impl ProbParams {
    pub fn symmetric(alpha: f64, theta_pos: f64, theta_neg: f64) -> Self {
        ProbParams {
            alpha_pos: alpha,
            alpha_neg: alpha,
            theta_pos,
            theta_neg,
        }
    }

    pub fn default_for(kind: GoodnessKind) -> Self {
        match kind {
            GoodnessKind::UnboundedSpiking => Self::symmetric(1.0, 6.0, 2.0),
            GoodnessKind::BoundedSpiking => Self::symmetric(5.0, 0.3, 0.1),
            GoodnessKind::AnalogSquared => Self::symmetric(1.0, 4.0, 4.0),
        }
    }
}

pub fn g_unbounded(latent: &SpikeTrain) -> f64 {
    let n = latent.neuron_count() as f64;
    latent
        .counts()
        .into_iter()
        .map(|c| f64::from(c) * f64::from(c))
        .sum::<f64>()
        / n
}

pub fn g_bounded(latent: &SpikeTrain) -> f64 {
    latent.total() as f64 / (latent.neuron_count() * latent.timestep_count()) as f64
}

pub fn g_analog(activations: &[f64]) -> f64 {
    activations.iter().map(|a| a * a).sum::<f64>() / activations.len() as f64
}

pub fn spiking_goodness(kind: GoodnessKind, latent: &SpikeTrain) -> f64 {
    match kind {
        GoodnessKind::UnboundedSpiking => g_unbounded(latent),
        GoodnessKind::BoundedSpiking => g_bounded(latent),
        GoodnessKind::AnalogSquared => g_analog(&latent.rates()),
    }
}

/// `dG/dS_n(t)` for a spiking goodness, time-major `T x N`.
///
/// Exact for the polynomial forms; the spike train is treated as real-valued.
pub fn spiking_goodness_grad(kind: GoodnessKind, latent: &SpikeTrain) -> Vec<f64> {
    let (n, t) = (latent.neuron_count(), latent.timestep_count());
    match kind {
        GoodnessKind::UnboundedSpiking => {
            let per_neuron: Vec<f64> = latent
                .counts()
                .into_iter()
                .map(|c| 2.0 * f64::from(c) / n as f64)
                .collect();
            (0..t).flat_map(|_| per_neuron.iter().copied()).collect()
        }
        GoodnessKind::BoundedSpiking => vec![1.0 / (n * t) as f64; n * t],
        GoodnessKind::AnalogSquared => {
            let per_neuron: Vec<f64> = latent
                .rates()
                .into_iter()
                .map(|r| 2.0 * r / (n as f64 * t as f64))
                .collect();
            (0..t).flat_map(|_| per_neuron.iter().copied()).collect()
        }
    }
}

/// Logistic `1 / (1 + exp(-alpha (g - theta)))`, evaluated without overflow.
pub fn prob(goodness: f64, alpha: f64, theta: f64) -> f64 {
    let z = alpha * (goodness - theta);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
