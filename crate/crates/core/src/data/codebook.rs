use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FfError, Result};
use crate::rng::{self, purpose};

pub const DEFAULT_CODE_DIM: usize = 100;
pub const DEFAULT_CODE_DENSITY: f64 = 0.1;

/// One random binary code per class, appended to the image to embed a label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCodebook {
    codes: Vec<Vec<u8>>,
    seed: u64,
}

impl LabelCodebook {
    pub fn from_codes(codes: Vec<Vec<u8>>, seed: u64) -> Result<Self> {
        let dim = codes.first().map_or(0, Vec::len);
        if codes.iter().any(|c| c.len() != dim) {
            return Err(FfError::Shape("codes of unequal length".into()));
        }
        if codes.iter().flatten().any(|&b| b > 1) {
            return Err(FfError::Domain("code element outside {0, 1}".into()));
        }
        Ok(LabelCodebook { codes, seed })
    }

    pub fn class_count(&self) -> usize {
        self.codes.len()
    }

    pub fn dim(&self) -> usize {
        self.codes.first().map_or(0, Vec::len)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn code(&self, class: usize) -> &[u8] {
        &self.codes[class]
    }

    pub fn codes(&self) -> &[Vec<u8>] {
        &self.codes
    }
}

/// Draws `class_count` codes with i.i.d. Bernoulli(`density`) elements.
pub fn make_codebook(class_count: usize, dim: usize, density: f64, seed: u64) -> Result<LabelCodebook> {
    if class_count < 2 {
        return Err(FfError::Domain(format!(
            "codebook needs at least 2 classes, got {class_count}"
        )));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(FfError::Domain(format!("code density {density} outside [0, 1]")));
    }
    let mut rng = rng::stream(seed, &[purpose::CODEBOOK]);
    let codes = (0..class_count)
        .map(|_| (0..dim).map(|_| u8::from(rng.random_bool(density))).collect())
        .collect();
    Ok(LabelCodebook { codes, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// P(lo <= X <= hi) for X ~ Binomial(n, p), by direct pmf recursion.
    fn binomial_interval(n: usize, p: f64, lo: usize, hi: usize) -> f64 {
        let mut pmf = (1.0 - p).powi(n as i32);
        let mut total = 0.0;
        for k in 0..=n {
            if k >= lo && k <= hi {
                total += pmf;
            }
            pmf *= (n - k) as f64 / (k + 1) as f64 * p / (1.0 - p);
        }
        total
    }

    #[test]
    fn shape_and_determinism() {
        let a = make_codebook(10, 100, 0.1, 42).unwrap();
        assert_eq!(a.class_count(), 10);
        assert!(a.codes().iter().all(|c| c.len() == 100));
        assert_eq!(a, make_codebook(10, 100, 0.1, 42).unwrap());
        assert_ne!(a, make_codebook(10, 100, 0.1, 43).unwrap());
    }

    #[test]
    fn zero_density_gives_zero_codes() {
        let a = make_codebook(5, 100, 0.0, 1).unwrap();
        assert!(a.codes().iter().flatten().all(|&b| b == 0));
    }

    #[test]
    fn rejects_single_class() {
        assert!(matches!(make_codebook(1, 100, 0.1, 0), Err(FfError::Domain(_))));
    }

    #[test]
    fn density_band_holds() {
        // 1000 Bernoulli(0.1) draws: density in [0.05, 0.15] means 50..=150 ones.
        let coverage = binomial_interval(1000, 0.1, 50, 150);
        assert!(coverage > 0.99, "{coverage}");
        for seed in 0..200 {
            let book = make_codebook(10, 100, 0.1, seed).unwrap();
            let ones: usize = book.codes().iter().flatten().map(|&b| b as usize).sum();
            assert!((50..=150).contains(&ones), "seed {seed}: {ones}");
        }
    }
}
