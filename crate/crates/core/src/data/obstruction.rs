use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::IMAGE_SIDE;
use crate::error::{FfError, Result};
use crate::rng::{self, purpose};

const SQUARE_SIDE: usize = 5;
const SQUARE_MARGIN: usize = 2;
const NOISE_STD: f64 = 0.2;
const STRIPE_WIDTH: usize = 3;
const STRIPE_FIRST: usize = 12;
const STRIPE_LAST: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObstructionKind {
    /// 5x5 white block, 2 pixels in from a random corner.
    Square,
    /// Additive N(0, 0.2) per-pixel noise, clamped.
    Gaussian,
    /// 3-pixel central row or column band set to 0.
    StripeOff,
    /// 3-pixel central row or column band set to 1.
    StripeOn,
}

impl std::str::FromStr for ObstructionKind {
    type Err = FfError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "square" => Ok(Self::Square),
            "gaussian" => Ok(Self::Gaussian),
            "stripe-off" | "stripeoff" => Ok(Self::StripeOff),
            "stripe-on" | "stripeon" => Ok(Self::StripeOn),
            other => Err(FfError::Config(format!("unknown obstruction '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Obstruction {
    pub kind: ObstructionKind,
    pub rng_seed: u64,
}

impl Obstruction {
    pub fn new(kind: ObstructionKind, rng_seed: u64) -> Self {
        Obstruction { kind, rng_seed }
    }
}

/// Pixels an obstruction overwrites; every pixel for `Gaussian`.
pub fn obstruction_mask(obstruction: &Obstruction) -> Array2<bool> {
    let mut mask = Array2::from_elem((IMAGE_SIDE, IMAGE_SIDE), false);
    let mut rng = rng::stream(obstruction.rng_seed, &[purpose::OBSTRUCT]);
    match obstruction.kind {
        ObstructionKind::Square => {
            let far = IMAGE_SIDE - SQUARE_MARGIN - SQUARE_SIDE;
            let corner = rng.random_range(0..4);
            let row = if corner / 2 == 0 { SQUARE_MARGIN } else { far };
            let col = if corner % 2 == 0 { SQUARE_MARGIN } else { far };
            mask.slice_mut(s![row..row + SQUARE_SIDE, col..col + SQUARE_SIDE])
                .fill(true);
        }
        ObstructionKind::Gaussian => mask.fill(true),
        ObstructionKind::StripeOff | ObstructionKind::StripeOn => {
            let horizontal = rng.random_bool(0.5);
            let start = rng.random_range(STRIPE_FIRST..=STRIPE_LAST);
            let band = start..start + STRIPE_WIDTH;
            if horizontal {
                mask.slice_mut(s![band, ..]).fill(true);
            } else {
                mask.slice_mut(s![.., band]).fill(true);
            }
        }
    }
    mask
}

/// Applies an obstruction to a 28x28 image. The output depends only on the
/// image and the obstruction's seed.
pub fn apply_obstruction(image: ArrayView2<'_, f32>, obstruction: &Obstruction) -> Result<Array2<f32>> {
    if image.dim() != (IMAGE_SIDE, IMAGE_SIDE) {
        return Err(FfError::Shape(format!(
            "obstructions need a {IMAGE_SIDE}x{IMAGE_SIDE} image, got {:?}",
            image.dim()
        )));
    }
    let mut out = image.to_owned();
    match obstruction.kind {
        ObstructionKind::Gaussian => {
            let mut rng = rng::stream(obstruction.rng_seed, &[purpose::OBSTRUCT]);
            let noise = Normal::new(0.0, NOISE_STD).expect("valid normal");
            out.mapv_inplace(|v| (f64::from(v) + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32);
        }
        kind => {
            let value = if kind == ObstructionKind::StripeOff { 0.0 } else { 1.0 };
            let mask = obstruction_mask(obstruction);
            out.zip_mut_with(&mask, |v, &m| {
                if m {
                    *v = value;
                }
            });
        }
    }
    Ok(out)
}
