//! Sine residual networks with exact spatial jets and reverse-mode gradients.
//!
//! Forward mode carries value, gradient and (partial) Hessian of every
//! activation with respect to a 2-D input; reverse mode runs over that jet
//! computation, so losses built from ∇ and ∇² of the output are
//! differentiable with respect to the parameters.

pub mod kernel;
mod jet;
mod resnet;

use rand::Rng;

pub use jet::{JetBatch, JetOrder, SpatialJet};
pub use resnet::{DenseLayer, ResNetParams, ResNetPlan, ResNetTape};

use crate::error::Result;

pub fn init_params<R: Rng + ?Sized>(plan: &ResNetPlan, rng: &mut R) -> Result<ResNetParams> {
    ResNetParams::init(plan, rng)
}
