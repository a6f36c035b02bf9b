use serde::{Deserialize, Serialize};

use super::volterra::{eval_volterra, VolterraFunction};
use super::Trajectory;
use crate::error::{Error, Result};
use crate::kernels::{FeatureMap, OperatorKernel, ScalarKernel};
use crate::linalg::{stack, Matrix, Vector};

/// Forcing term `g(u_{t..t+L})` of an autoregressive model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Forcing {
    /// `sum_l B_l u_{L-l}` with `b = [B_0, ..., B_L]`.
    Linear { b: Vec<Matrix> },
    /// `sum_j k(ū, c_j) v_j` for a kernel on the stacked input window.
    KernelExpansion {
        kernel: OperatorKernel,
        centers: Vec<Vector>,
        coefficients: Vec<Vector>,
    },
    /// Scalar Volterra series over the stacked window.
    Volterra(VolterraFunction),
    /// `S [E; F; psi2(u_L)]` with `E = (psi1(u_0), ..., psi1(u_{L-1}))` and
    /// `F = (psi2(u_0), ..., psi2(u_{L-1}))`.
    Hammerstein {
        s: Matrix,
        psi1: FeatureMap,
        psi2: FeatureMap,
    },
}

impl Forcing {
    /// Evaluates `g` on a window of `L + 1` consecutive inputs.
    pub fn eval(&self, window: &[Vector]) -> Result<Vector> {
        match self {
            Forcing::Linear { b } => {
                if b.len() != window.len() {
                    return Err(Error::Dimension(format!(
                        "linear forcing has {} taps, window has {}",
                        b.len(),
                        window.len()
                    )));
                }
                let lag = window.len() - 1;
                let mut out = Vector::zeros(b[0].nrows());
                for (l, bl) in b.iter().enumerate() {
                    out += bl * &window[lag - l];
                }
                Ok(out)
            }
            Forcing::KernelExpansion {
                kernel,
                centers,
                coefficients,
            } => {
                let z = stack(window);
                let row = kernel.kernel_row(z.as_slice(), centers)?;
                Ok(row * stack(coefficients))
            }
            Forcing::Volterra(v) => {
                let z = stack(window);
                Ok(Vector::from_element(1, eval_volterra(v, z.as_slice())?))
            }
            Forcing::Hammerstein { s, psi1, psi2 } => {
                let lag = window.len() - 1;
                let mut parts = Vec::with_capacity(2 * lag + 1);
                for u in &window[..lag] {
                    parts.push(psi1.eval_checked(u.as_slice())?);
                }
                for u in &window[..lag] {
                    parts.push(psi2.eval_checked(u.as_slice())?);
                }
                parts.push(psi2.eval_checked(window[lag].as_slice())?);
                let psi = stack(&parts);
                if psi.len() != s.ncols() {
                    return Err(Error::Dimension(format!(
                        "S has {} columns, stacked features have {}",
                        s.ncols(),
                        psi.len()
                    )));
                }
                Ok(s * psi)
            }
        }
    }
}

/// `y_{t+L} + sum_k A_k y_{t+L-k} = g(u_{t..t+L})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    /// `A_1, ..., A_L`, each `p x p`.
    pub lags: Vec<Matrix>,
    pub forcing: Forcing,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Input-window kernel whose RKHS contains `g`, when known.
    pub kernel: Option<OperatorKernel>,
}

impl ArModel {
    pub fn new(lags: Vec<Matrix>, forcing: Forcing, input_dim: usize, output_dim: usize) -> Result<Self> {
        if lags.is_empty() {
            return Err(Error::Contract("autoregressive lag must be at least 1".into()));
        }
        if lags.iter().any(|a| a.shape() != (output_dim, output_dim)) {
            return Err(Error::Shape(format!("every A_k must be {output_dim}x{output_dim}")));
        }
        Ok(Self {
            lags,
            forcing,
            input_dim,
            output_dim,
            kernel: None,
        })
    }

    pub fn lag(&self) -> usize {
        self.lags.len()
    }

    /// One step: `y_{t+L}` given `u_{t..t+L}` and `y_{t..t+L-1}`.
    pub fn step(&self, inputs: &[Vector], outputs: &[Vector]) -> Result<Vector> {
        let lag = self.lag();
        let mut next = self.forcing.eval(inputs)?;
        for (k, a) in self.lags.iter().enumerate() {
            // A_{k+1} multiplies y_{t+L-(k+1)}
            next -= a * &outputs[lag - 1 - k];
        }
        Ok(next)
    }
}

/// Runs the recursion. The first `L` outputs are `y_init`; outputs from index
/// `L` on are generated from the inputs.
pub fn simulate_ar(model: &ArModel, u: &[Vector], y_init: &[Vector]) -> Result<Trajectory> {
    let lag = model.lag();
    if u.len() < lag + 1 {
        return Err(Error::Dimension(format!(
            "need at least {} inputs for lag {lag}, got {}",
            lag + 1,
            u.len()
        )));
    }
    if y_init.len() != lag {
        return Err(Error::Dimension(format!(
            "need {lag} initial outputs, got {}",
            y_init.len()
        )));
    }
    if u.iter().any(|v| v.len() != model.input_dim) || y_init.iter().any(|v| v.len() != model.output_dim) {
        return Err(Error::Shape("input or initial output has the wrong dimension".into()));
    }
    let mut y: Vec<Vector> = y_init.to_vec();
    for t in 0..u.len() - lag {
        let next = model.step(&u[t..=t + lag], &y[t..t + lag])?;
        y.push(next);
    }
    Trajectory::new(u.to_vec(), y)
}

/// Linear autoregressive model with `g(u_{0..L}) = sum_l B_l u_{L-l}`.
///
/// The linear scalar-lift kernel on the input window is attached as the
/// model's kernel.
pub fn make_lti_ar(a: Vec<Matrix>, b: Vec<Matrix>) -> Result<ArModel> {
    if a.is_empty() {
        return Err(Error::Contract("autoregressive lag must be at least 1".into()));
    }
    if b.len() != a.len() + 1 {
        return Err(Error::Dimension(format!(
            "lag {} needs {} input matrices, got {}",
            a.len(),
            a.len() + 1,
            b.len()
        )));
    }
    let p = a[0].nrows();
    let m = b[0].ncols();
    if b.iter().any(|bl| bl.shape() != (p, m)) {
        return Err(Error::Shape(format!("every B_l must be {p}x{m}")));
    }
    let lag = a.len();
    let mut model = ArModel::new(a, Forcing::Linear { b }, m, p)?;
    model.kernel = Some(OperatorKernel::scalar_lift(ScalarKernel::Linear, m * (lag + 1), p)?);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn s(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    fn m1(x: f64) -> Matrix {
        Matrix::from_element(1, 1, x)
    }

    #[test]
    fn null_system_is_zero_after_warmup() {
        let model = make_lti_ar(vec![m1(0.0), m1(0.0)], vec![m1(0.0); 3]).unwrap();
        let u: Vec<Vector> = (0..10).map(|i| s(i as f64)).collect();
        let traj = simulate_ar(&model, &u, &[s(3.0), s(-1.0)]).unwrap();
        assert!(traj.y[2..].iter().all(|y| y[0] == 0.0));
        assert_eq!(traj.y[0][0], 3.0);
    }

    #[test]
    fn first_order_recursion() {
        // y_{t+1} = 0.5 y_t + u_t
        let model = make_lti_ar(vec![m1(-0.5)], vec![m1(0.0), m1(1.0)]).unwrap();
        let u: Vec<Vector> = [1.0, -2.0, 0.5, 3.0, 0.0].iter().map(|&x| s(x)).collect();
        let traj = simulate_ar(&model, &u, &[s(2.0)]).unwrap();
        let mut y = 2.0;
        for t in 0..4 {
            y = 0.5 * y + u[t][0];
            assert!((traj.y[t + 1][0] - y).abs() < 1e-15);
        }
    }

    #[test]
    fn kernel_expansion_forcing_matches_kernel_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kernel = OperatorKernel::scalar_lift(ScalarKernel::gaussian(0.8).unwrap(), 2, 1).unwrap();
        let center = Vector::from_vec(vec![0.2, -0.1]);
        let coef = Vector::from_element(1, 1.7);
        let forcing = Forcing::KernelExpansion {
            kernel: kernel.clone(),
            centers: vec![center.clone()],
            coefficients: vec![coef.clone()],
        };
        let model = ArModel::new(vec![m1(0.3)], forcing, 1, 1).unwrap();
        let u: Vec<Vector> = (0..8).map(|_| s(rng.random_range(-1.0..1.0))).collect();
        let traj = simulate_ar(&model, &u, &[s(0.0)]).unwrap();
        for t in 0..7 {
            let z = [u[t][0], u[t + 1][0]];
            let g = (kernel.kernel_row(&z, &[center.clone()]).unwrap() * &coef)[0];
            let want = -0.3 * traj.y[t][0] + g;
            assert!((traj.y[t + 1][0] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn lti_ar_forcing_is_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (m, p, lag) = (2, 3, 2);
        let rand_m = |r: usize, c: usize, rng: &mut ChaCha8Rng| {
            Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
        };
        let a: Vec<Matrix> = (0..lag).map(|_| rand_m(p, p, &mut rng)).collect();
        let b: Vec<Matrix> = (0..=lag).map(|_| rand_m(p, m, &mut rng)).collect();
        let model = make_lti_ar(a, b.clone()).unwrap();
        let window: Vec<Vector> = (0..=lag).map(|_| Vector::from_fn(m, |_, _| rng.random_range(-1.0..1.0))).collect();
        let got = model.forcing.eval(&window).unwrap();
        let mut want = Vector::zeros(p);
        for l in 0..=lag {
            for i in 0..p {
                for j in 0..m {
                    want[i] += b[l][(i, j)] * window[lag - l][j];
                }
            }
        }
        assert!((got - want).amax() < 1e-15);
        assert!(model.kernel.is_some());
    }

    #[test]
    fn lag_zero_and_short_input_rejected() {
        assert!(matches!(make_lti_ar(vec![], vec![m1(1.0)]), Err(Error::Contract(_))));
        let model = make_lti_ar(vec![m1(0.1), m1(0.1)], vec![m1(1.0); 3]).unwrap();
        assert!(matches!(
            simulate_ar(&model, &[s(1.0), s(1.0)], &[s(0.0), s(0.0)]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn zero_input_matrices_give_zero_forcing() {
        let model = make_lti_ar(vec![m1(0.4)], vec![m1(0.0), m1(0.0)]).unwrap();
        assert_eq!(model.forcing.eval(&[s(3.0), s(4.0)]).unwrap()[0], 0.0);
    }
}
