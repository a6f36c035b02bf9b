//! Reference simulators for the model classes covered by the library.
//!
//! These produce offline and online data for the identification pipelines
//! and double as ground truth in tests.

mod ar;
pub mod catalog;
mod state_space;
mod volterra;

pub use ar::{make_lti_ar, simulate_ar, ArModel, Forcing};
pub use state_space::{
    realization, simulate_ss, ss_to_ar, Nonlinearity, RealizationMatrices, StateSpaceModel,
};
pub use volterra::{eval_volterra, VolterraFunction, DEFAULT_MAX_VOLTERRA_ORDER};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Paired input/output sequences over a window of consecutive times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub u: Vec<Vector>,
    pub y: Vec<Vector>,
    /// Time index of the first sample.
    pub t0: usize,
}

impl Trajectory {
    pub fn new(u: Vec<Vector>, y: Vec<Vector>) -> Result<Self> {
        if u.len() != y.len() {
            return Err(Error::Shape(format!(
                "{} inputs but {} outputs",
                u.len(),
                y.len()
            )));
        }
        if let Some(first) = u.first() {
            let m = first.len();
            if u.iter().any(|v| v.len() != m) {
                return Err(Error::Shape("inputs have inconsistent dimensions".into()));
            }
        }
        if let Some(first) = y.first() {
            let p = first.len();
            if y.iter().any(|v| v.len() != p) {
                return Err(Error::Shape("outputs have inconsistent dimensions".into()));
            }
        }
        if u.iter().chain(&y).any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::Contract("trajectory contains non-finite values".into()));
        }
        Ok(Self { u, y, t0: 0 })
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.u.first().map_or(0, |v| v.len())
    }

    pub fn output_dim(&self) -> usize {
        self.y.first().map_or(0, |v| v.len())
    }

    /// Sub-trajectory `[start, start + len)`.
    pub fn window(&self, start: usize, len: usize) -> Result<Trajectory> {
        if start + len > self.len() {
            return Err(Error::Dimension(format!(
                "window {start}..{} exceeds trajectory length {}",
                start + len,
                self.len()
            )));
        }
        Ok(Trajectory {
            u: self.u[start..start + len].to_vec(),
            y: self.y[start..start + len].to_vec(),
            t0: self.t0 + start,
        })
    }
}

/// Seeded generator used for every randomized experiment.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// I.i.d. inputs, uniform on `[-1, 1]^m`.
pub fn uniform_inputs<R: Rng + ?Sized>(rng: &mut R, m: usize, len: usize) -> Vec<Vector> {
    (0..len)
        .map(|_| Vector::from_fn(m, |_, _| rng.random_range(-1.0..=1.0)))
        .collect()
}
