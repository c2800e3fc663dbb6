use rand::Rng;

use crate::error::{FfError, Result};
use crate::rng;

/// Binary activity of `N` neurons over `T` timesteps.
///
/// Stored time-major so that one timestep's activity is contiguous.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikeTrain {
    neurons: usize,
    timesteps: usize,
    bits: Vec<u8>,
}

impl SpikeTrain {
    pub fn zeros(neurons: usize, timesteps: usize) -> Self {
        SpikeTrain {
            neurons,
            timesteps,
            bits: vec![0; neurons * timesteps],
        }
    }

    pub fn from_fn(neurons: usize, timesteps: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut train = Self::zeros(neurons, timesteps);
        for t in 0..timesteps {
            for n in 0..neurons {
                train.bits[t * neurons + n] = u8::from(f(n, t));
            }
        }
        train
    }

    /// Builds a train from per-neuron rows (`rows[n][t]`).
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let timesteps = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != timesteps) {
            return Err(FfError::Shape("ragged spike rows".into()));
        }
        if rows.iter().flatten().any(|&b| b > 1) {
            return Err(FfError::Domain("spike value outside {0, 1}".into()));
        }
        Ok(Self::from_fn(rows.len(), timesteps, |n, t| rows[n][t] == 1))
    }

    pub fn neuron_count(&self) -> usize {
        self.neurons
    }

    pub fn timestep_count(&self) -> usize {
        self.timesteps
    }

    #[inline]
    pub fn get(&self, neuron: usize, t: usize) -> bool {
        self.bits[t * self.neurons + neuron] == 1
    }

    #[inline]
    pub fn set(&mut self, neuron: usize, t: usize, spike: bool) {
        self.bits[t * self.neurons + neuron] = u8::from(spike);
    }

    /// Activity of every neuron at timestep `t`.
    #[inline]
    pub fn frame(&self, t: usize) -> &[u8] {
        &self.bits[t * self.neurons..(t + 1) * self.neurons]
    }

    pub fn active_at(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.frame(t)
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(n, _)| n)
    }

    /// Spike count of each neuron.
    pub fn counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.neurons];
        for t in 0..self.timesteps {
            for (c, &b) in counts.iter_mut().zip(self.frame(t)) {
                *c += u32::from(b);
            }
        }
        counts
    }

    pub fn total(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Per-neuron firing rate (count / T).
    pub fn rates(&self) -> Vec<f64> {
        let t = self.timesteps as f64;
        self.counts().into_iter().map(|c| f64::from(c) / t).collect()
    }
}

/// Bernoulli rate coding: `bit(n, t) ~ Bernoulli(values[n])`, i.i.d. over `t`.
pub fn rate_encode(values: &[f64], timesteps: usize, seed: u64) -> Result<SpikeTrain> {
    rate_encode_with(values, timesteps, &mut rng::stream(seed, &[]))
}

/// Same as [`rate_encode`] with a caller-owned generator. Entries exactly 0 or
/// 1 are deterministic and consume no randomness.
pub fn rate_encode_with<R: Rng + ?Sized>(values: &[f64], timesteps: usize, rng: &mut R) -> Result<SpikeTrain> {
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(FfError::Domain(format!("rate {v} outside [0, 1]")));
    }
    let neurons = values.len();
    let mut train = SpikeTrain::zeros(neurons, timesteps);
    for t in 0..timesteps {
        let frame = &mut train.bits[t * neurons..(t + 1) * neurons];
        for (bit, &v) in frame.iter_mut().zip(values) {
            *bit = if v >= 1.0 {
                1
            } else if v <= 0.0 {
                0
            } else {
                u8::from(rng.random::<f64>() < v)
            };
        }
    }
    Ok(train)
}
