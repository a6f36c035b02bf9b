//! Named reference models and random model generators.

use rand::Rng;

use super::ar::{make_lti_ar, ArModel, Forcing};
use super::state_space::{simulate_ss, Nonlinearity, StateSpaceModel};
use super::volterra::VolterraFunction;
use super::{simulate_ar, Trajectory};
use crate::error::{Error, Result};
use crate::kernels::{FeatureMap, OperatorKernel, ScalarKernel};
use crate::linalg::{singular_values, Matrix, Vector};

/// Either model class the simulators understand.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    StateSpace(StateSpaceModel),
    Ar(ArModel),
}

impl Model {
    pub fn input_dim(&self) -> usize {
        match self {
            Model::StateSpace(m) => m.input_dim(),
            Model::Ar(m) => m.input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Model::StateSpace(m) => m.output_dim(),
            Model::Ar(m) => m.output_dim,
        }
    }

    /// Minimal lag that makes sense for this model: the AR lag, or the state
    /// dimension for state-space models.
    pub fn natural_lag(&self) -> usize {
        match self {
            Model::StateSpace(m) => m.state_dim(),
            Model::Ar(m) => m.lag(),
        }
    }

    /// Simulates from rest (zero initial outputs for AR models, `x0` for
    /// state-space models).
    pub fn simulate(&self, u: &[Vector]) -> Result<Trajectory> {
        match self {
            Model::StateSpace(m) => Ok(simulate_ss(m, u)?.0),
            Model::Ar(m) => {
                let init = vec![Vector::zeros(m.output_dim); m.lag()];
                simulate_ar(m, u, &init)
            }
        }
    }
}

pub const CATALOG_NAMES: &[&str] = &[
    "lti-n1",
    "lti-n2",
    "lti-n3",
    "hammerstein-tanh",
    "hammerstein-poly",
    "lti-ar2",
    "volterra-k2",
    "gauss-ar1",
];

fn ss(a: Matrix, b: Matrix, c: Matrix, d: Matrix, phi: FeatureMap) -> StateSpaceModel {
    let n = a.nrows();
    StateSpaceModel::new(a, b, c, d, Nonlinearity::Shared(phi), Vector::zeros(n))
        .expect("catalog model shapes are consistent")
}

fn n2_matrices() -> (Matrix, Matrix, Matrix, Matrix) {
    (
        Matrix::from_row_slice(2, 2, &[0.7, 0.2, -0.3, 0.5]),
        Matrix::from_row_slice(2, 1, &[1.0, 0.5]),
        Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
        Matrix::from_row_slice(1, 1, &[0.1]),
    )
}

/// Looks up a built-in model.
pub fn catalog_model(name: &str) -> Result<Model> {
    let m1 = |x: f64| Matrix::from_element(1, 1, x);
    let model = match name {
        "lti-n1" => Model::StateSpace(ss(m1(0.8), m1(1.0), m1(1.0), m1(0.0), FeatureMap::Identity { dim: 1 })),
        "lti-n2" => {
            let (a, b, c, d) = n2_matrices();
            Model::StateSpace(ss(a, b, c, d, FeatureMap::Identity { dim: 1 }))
        }
        "lti-n3" => Model::StateSpace(ss(
            Matrix::from_row_slice(3, 3, &[0.6, 0.3, 0.0, -0.2, 0.5, 0.25, 0.1, 0.0, 0.4]),
            Matrix::from_row_slice(3, 1, &[1.0, 0.0, 0.5]),
            Matrix::from_row_slice(1, 3, &[1.0, 0.5, -0.3]),
            m1(0.0),
            FeatureMap::Identity { dim: 1 },
        )),
        "hammerstein-tanh" => {
            let (a, b, c, d) = n2_matrices();
            Model::StateSpace(ss(a, b, c, d, FeatureMap::Tanh { dim: 1 }))
        }
        "hammerstein-poly" => Model::StateSpace(ss(
            Matrix::from_row_slice(2, 2, &[0.5, 0.3, -0.2, 0.6]),
            Matrix::from_row_slice(2, 2, &[1.0, 0.4, 0.2, -0.5]),
            Matrix::from_row_slice(1, 2, &[1.0, 0.3]),
            Matrix::from_row_slice(1, 2, &[0.2, 0.1]),
            FeatureMap::Polynomial { dim: 1, degree: 2 },
        )),
        "lti-ar2" => Model::Ar(make_lti_ar(
            vec![m1(-0.9), m1(0.2)],
            vec![m1(0.5), m1(1.0), m1(-0.3)],
        )?),
        "volterra-k2" => {
            // window of 3 scalar inputs, first- and second-order taps
            let h1 = vec![1.0, 0.5, -0.25];
            let h2 = vec![0.3, 0.0, 0.1, 0.0, -0.2, 0.0, 0.1, 0.0, 0.05];
            let v = VolterraFunction::new(0.0, vec![h1, h2], 3)?;
            let mut model = ArModel::new(vec![m1(0.0), m1(0.0)], Forcing::Volterra(v), 1, 1)?;
            model.kernel = Some(OperatorKernel::scalar_lift(ScalarKernel::fock_exp(2), 3, 1)?);
            Model::Ar(model)
        }
        "gauss-ar1" => {
            let kernel = OperatorKernel::scalar_lift(ScalarKernel::gaussian(0.5)?, 2, 1)?;
            let centers = vec![
                Vector::from_vec(vec![-0.5, 0.5]),
                Vector::from_vec(vec![0.0, 0.0]),
                Vector::from_vec(vec![0.6, -0.4]),
            ];
            let coefficients = vec![
                Vector::from_element(1, 1.0),
                Vector::from_element(1, -0.8),
                Vector::from_element(1, 0.6),
            ];
            let mut model = ArModel::new(
                vec![m1(-0.5)],
                Forcing::KernelExpansion {
                    kernel: kernel.clone(),
                    centers,
                    coefficients,
                },
                1,
                1,
            )?;
            model.kernel = Some(kernel);
            Model::Ar(model)
        }
        other => {
            return Err(Error::config(
                "model",
                format!("unknown catalog model `{other}` (known: {})", CATALOG_NAMES.join(", ")),
            ))
        }
    };
    Ok(model)
}

fn random_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Random state-space model with spectral norm of `A` equal to `radius`.
///
/// Generic draws are controllable and observable with probability one.
pub fn random_state_space<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    p: usize,
    phi: FeatureMap,
    radius: f64,
    with_feedthrough: bool,
) -> StateSpaceModel {
    let q = phi.output_dim();
    let raw = random_matrix(rng, n, n);
    let a = &raw * (radius / singular_values(&raw)[0].max(f64::MIN_POSITIVE));
    let b = random_matrix(rng, n, q);
    let c = random_matrix(rng, p, n);
    let d = if with_feedthrough {
        random_matrix(rng, p, q)
    } else {
        Matrix::zeros(p, q)
    };
    let x0 = Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    StateSpaceModel::new(a, b, c, d, Nonlinearity::Shared(phi), x0).expect("shapes are consistent")
}

/// Random linear AR model with `sum_k |A_k|_inf <= 1/2`, so the recursion is stable.
pub fn random_lti_ar<R: Rng + ?Sized>(rng: &mut R, m: usize, p: usize, lag: usize) -> Result<ArModel> {
    let scale = 0.5 / (lag * p) as f64;
    let a: Vec<Matrix> = (0..lag).map(|_| random_matrix(rng, p, p) * scale).collect();
    let b: Vec<Matrix> = (0..=lag).map(|_| random_matrix(rng, p, m)).collect();
    make_lti_ar(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::uniform_inputs;

    #[test]
    fn every_catalog_model_simulates() {
        let mut rng = crate::systems::seeded_rng(1);
        for name in CATALOG_NAMES {
            let model = catalog_model(name).unwrap();
            let u = uniform_inputs(&mut rng, model.input_dim(), 50);
            let traj = model.simulate(&u).unwrap();
            assert_eq!(traj.len(), 50);
            assert!(traj.y.iter().all(|y| y.iter().all(|v| v.is_finite() && v.abs() < 100.0)));
        }
    }

    #[test]
    fn unknown_name_is_config_error() {
        assert!(matches!(catalog_model("nope"), Err(Error::Config { .. })));
    }
}
