//! Scalar and operator-valued kernels of positive type.
//!
//! An [`OperatorKernel`] evaluates to a `p x p` matrix for each pair of
//! points. Three constructions cover everything the modeling code needs:
//!
//! * a scalar kernel lifted to `k(z, z') I_p`,
//! * the direct sum `k_U(u, u') + k_Y(y, y')` over a split point,
//! * the rank-one feature kernel `phi(u) phi(u')ᵀ`.
//!
//! Kernels cache nothing. Gram assembly ([`OperatorKernel::gram_block`]) is
//! where repeated evaluations are collected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};

/// Default truncation order of the Fock-weighted series.
pub const DEFAULT_FOCK_ORDER: usize = 6;

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScalarKernel {
    /// `<x, x'>`
    Linear,
    /// `exp(-|x - x'|^2 / (2 sigma^2))`
    Gaussian { sigma: f64 },
    /// `sum_{k <= K} <x, x'>^k / (k! rho_k)`, truncation order `K = rho.len() - 1`.
    Fock { rho: Vec<f64> },
    /// `(1 + <x, x'>)^degree`
    Polynomial { degree: u32 },
}

impl ScalarKernel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let k = ScalarKernel::Gaussian { sigma };
        k.validate()?;
        Ok(k)
    }

    /// Fock-weighted kernel with all weights one: the degree-`order` Taylor
    /// truncation of `exp(<x, x'>)`.
    pub fn fock_exp(order: usize) -> Self {
        ScalarKernel::Fock {
            rho: vec![1.0; order + 1],
        }
    }

    pub fn fock(rho: Vec<f64>) -> Result<Self> {
        let k = ScalarKernel::Fock { rho };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScalarKernel::Linear | ScalarKernel::Polynomial { .. } => Ok(()),
            ScalarKernel::Gaussian { sigma } => {
                if *sigma > 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Contract(format!("gaussian bandwidth must be positive, got {sigma}")))
                }
            }
            ScalarKernel::Fock { rho } => {
                if rho.is_empty() {
                    return Err(Error::Contract("fock kernel needs at least rho_0".into()));
                }
                for (k, &r) in rho.iter().enumerate() {
                    let c = 1.0 / (factorial(k) * r);
                    if !(r > 0.0 && c.is_finite() && c > 0.0) {
                        return Err(Error::Contract(format!(
                            "fock weight rho_{k} = {r} gives coefficient {c}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Series coefficients `1 / (k! rho_k)` of the Fock kernel.
    pub fn fock_coefficients(rho: &[f64]) -> Vec<f64> {
        rho.iter()
            .enumerate()
            .map(|(k, r)| 1.0 / (factorial(k) * r))
            .collect()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            ScalarKernel::Linear => dot(x, y),
            ScalarKernel::Gaussian { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            ScalarKernel::Fock { rho } => {
                let lambda = dot(x, y);
                // Horner over the truncated series
                Self::fock_coefficients(rho)
                    .iter()
                    .rev()
                    .fold(0.0, |acc, c| acc * lambda + c)
            }
            ScalarKernel::Polynomial { degree } => (1.0 + dot(x, y)).powi(*degree as i32),
        }
    }
}

/// Lookup table standing in for a feature map that is only known on samples.
///
/// Evaluation returns the stored image of the nearest stored input (exact hits
/// return the stored value exactly; ties go to the earliest entry).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub input_dim: usize,
    pub output_dim: usize,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        inputs: Vec<Vec<f64>>,
        outputs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != outputs.len() {
            return Err(Error::Contract(format!(
                "feature table needs matching nonempty rows ({} inputs, {} outputs)",
                inputs.len(),
                outputs.len()
            )));
        }
        if inputs.iter().any(|r| r.len() != input_dim) || outputs.iter().any(|r| r.len() != output_dim) {
            return Err(Error::Shape("feature table row has the wrong width".into()));
        }
        if outputs.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Contract("feature table contains non-finite values".into()));
        }
        Ok(Self {
            input_dim,
            output_dim,
            inputs,
            outputs,
        })
    }

    /// Tabulates `map` on the given points.
    pub fn tabulate(map: &FeatureMap, points: &[Vector]) -> Result<Self> {
        let inputs: Vec<Vec<f64>> = points.iter().map(|p| p.as_slice().to_vec()).collect();
        let outputs: Vec<Vec<f64>> = points
            .iter()
            .map(|p| map.eval(p.as_slice()).as_slice().to_vec())
            .collect();
        Self::new(map.input_dim(), map.output_dim(), inputs, outputs)
    }

    fn lookup(&self, u: &[f64]) -> &[f64] {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, row) in self.inputs.iter().enumerate() {
            let d: f64 = row.iter().zip(u).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = i;
                if d == 0.0 {
                    break;
                }
            }
        }
        &self.outputs[best]
    }
}

/// Feature maps `phi: R^m -> R^q` used by rank-one kernels and Hammerstein models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "kebab-case")]
pub enum FeatureMap {
    Identity { dim: usize },
    Tanh { dim: usize },
    /// `(u_i, u_i^2, ..., u_i^degree)` for each coordinate `i`, so `q = dim * degree`.
    Polynomial { dim: usize, degree: usize },
    Table(FeatureTable),
}

impl FeatureMap {
    pub fn input_dim(&self) -> usize {
        match self {
            FeatureMap::Identity { dim } | FeatureMap::Tanh { dim } => *dim,
            FeatureMap::Polynomial { dim, .. } => *dim,
            FeatureMap::Table(t) => t.input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            FeatureMap::Identity { dim } | FeatureMap::Tanh { dim } => *dim,
            FeatureMap::Polynomial { dim, degree } => dim * degree,
            FeatureMap::Table(t) => t.output_dim,
        }
    }

    /// Evaluates the map. The caller guarantees `u.len() == input_dim()`.
    pub fn eval(&self, u: &[f64]) -> Vector {
        match self {
            FeatureMap::Identity { .. } => Vector::from_column_slice(u),
            FeatureMap::Tanh { .. } => Vector::from_iterator(u.len(), u.iter().map(|x| x.tanh())),
            FeatureMap::Polynomial { degree, .. } => {
                let mut out = Vec::with_capacity(u.len() * degree);
                for &x in u {
                    let mut pw = 1.0;
                    for _ in 0..*degree {
                        pw *= x;
                        out.push(pw);
                    }
                }
                Vector::from_vec(out)
            }
            FeatureMap::Table(t) => Vector::from_column_slice(t.lookup(u)),
        }
    }

    pub fn eval_checked(&self, u: &[f64]) -> Result<Vector> {
        if u.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "feature map expects dimension {}, got {}",
                self.input_dim(),
                u.len()
            )));
        }
        Ok(self.eval(u))
    }
}

/// Operator-valued kernel on `R^domain_dim` with values in `R^{p x p}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OperatorKernel {
    /// `k(z, z') I_p`
    ScalarLift {
        kernel: ScalarKernel,
        domain_dim: usize,
        p: usize,
    },
    /// `k_U(z[..split], z'[..split]) + k_Y(z[split..], z'[split..])`,
    /// with `split = input.domain_dim()`.
    DirectSum {
        input: Box<OperatorKernel>,
        output: Box<OperatorKernel>,
    },
    /// `phi(u) phi(u')ᵀ`
    RankOneFeature { map: FeatureMap },
}

impl OperatorKernel {
    pub fn scalar_lift(kernel: ScalarKernel, domain_dim: usize, p: usize) -> Result<Self> {
        kernel.validate()?;
        if p == 0 {
            return Err(Error::Contract("output dimension must be positive".into()));
        }
        Ok(OperatorKernel::ScalarLift {
            kernel,
            domain_dim,
            p,
        })
    }

    pub fn direct_sum(input: OperatorKernel, output: OperatorKernel) -> Result<Self> {
        if input.output_dim() != output.output_dim() {
            return Err(Error::Shape(format!(
                "direct sum of kernels with output dimensions {} and {}",
                input.output_dim(),
                output.output_dim()
            )));
        }
        Ok(OperatorKernel::DirectSum {
            input: Box::new(input),
            output: Box::new(output),
        })
    }

    pub fn rank_one(map: FeatureMap) -> Self {
        OperatorKernel::RankOneFeature { map }
    }

    /// Regression kernel `k_U + k_Y` on `z = (u_t..u_{t+L}, y_t..y_{t+L-1})`
    /// with `k_Y` the linear kernel on the stacked past outputs.
    pub fn regression(input_kernel: ScalarKernel, m: usize, p: usize, lag: usize) -> Result<Self> {
        let input = OperatorKernel::scalar_lift(input_kernel, m * (lag + 1), p)?;
        let output = OperatorKernel::scalar_lift(ScalarKernel::Linear, p * lag, p)?;
        OperatorKernel::direct_sum(input, output)
    }

    pub fn domain_dim(&self) -> usize {
        match self {
            OperatorKernel::ScalarLift { domain_dim, .. } => *domain_dim,
            OperatorKernel::DirectSum { input, output } => input.domain_dim() + output.domain_dim(),
            OperatorKernel::RankOneFeature { map } => map.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            OperatorKernel::ScalarLift { p, .. } => *p,
            OperatorKernel::DirectSum { input, .. } => input.output_dim(),
            OperatorKernel::RankOneFeature { map } => map.output_dim(),
        }
    }

    fn check_point(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.domain_dim() {
            return Err(Error::Shape(format!(
                "kernel domain has dimension {}, point has {}",
                self.domain_dim(),
                z.len()
            )));
        }
        Ok(())
    }

    /// `k(z1, z2)` without dimension checks.
    fn eval_unchecked(&self, z1: &[f64], z2: &[f64]) -> Matrix {
        match self {
            OperatorKernel::ScalarLift { kernel, p, .. } => {
                Matrix::identity(*p, *p) * kernel.eval(z1, z2)
            }
            OperatorKernel::DirectSum { input, output } => {
                let split = input.domain_dim();
                input.eval_unchecked(&z1[..split], &z2[..split])
                    + output.eval_unchecked(&z1[split..], &z2[split..])
            }
            OperatorKernel::RankOneFeature { map } => map.eval(z1) * map.eval(z2).transpose(),
        }
    }

    pub fn eval(&self, z1: &[f64], z2: &[f64]) -> Result<Matrix> {
        self.check_point(z1)?;
        self.check_point(z2)?;
        Ok(self.eval_unchecked(z1, z2))
    }

    /// Block Gram matrix `[k(z_i, z_j)]_{ij}` of size `pN x pN`.
    pub fn gram_block(&self, centers: &[Vector]) -> Result<Matrix> {
        if centers.is_empty() {
            return Err(Error::Contract("Gram matrix of an empty center list".into()));
        }
        for c in centers {
            self.check_point(c.as_slice())?;
        }
        let p = self.output_dim();
        let n = centers.len();
        let mut k = Matrix::zeros(p * n, p * n);
        for i in 0..n {
            for j in 0..=i {
                let blk = self.eval_unchecked(centers[i].as_slice(), centers[j].as_slice());
                k.view_mut((i * p, j * p), (p, p)).copy_from(&blk);
                if i != j {
                    k.view_mut((j * p, i * p), (p, p)).copy_from(&blk.transpose());
                }
            }
        }
        Ok(k)
    }

    /// Block row `[k(z, z_0) ... k(z, z_{N-1})]` of size `p x pN`.
    pub fn kernel_row(&self, z: &[f64], centers: &[Vector]) -> Result<Matrix> {
        self.check_point(z)?;
        if centers.is_empty() {
            return Err(Error::Contract("kernel row against an empty center list".into()));
        }
        let p = self.output_dim();
        let mut row = Matrix::zeros(p, p * centers.len());
        for (j, c) in centers.iter().enumerate() {
            self.check_point(c.as_slice())?;
            row.view_mut((0, j * p), (p, p))
                .copy_from(&self.eval_unchecked(z, c.as_slice()));
        }
        Ok(row)
    }

    /// `Tr k(u, u')`, which equals `<phi(u), phi(u')>` for the rank-one kernel.
    pub fn trace_inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        match self {
            OperatorKernel::RankOneFeature { .. } => Ok(self.eval(u, v)?.trace()),
            _ => Err(Error::Contract(
                "trace inner product is defined for rank-one feature kernels only".into(),
            )),
        }
    }

    /// True when every value is a scalar multiple of `I_p`, so Gram matrices
    /// factor as `K_s ⊗ I_p`.
    pub fn is_separable(&self) -> bool {
        match self {
            OperatorKernel::ScalarLift { .. } => true,
            OperatorKernel::DirectSum { input, output } => input.is_separable() && output.is_separable(),
            OperatorKernel::RankOneFeature { .. } => false,
        }
    }

    /// The scalar `s` with `k(z1, z2) = s I_p`, for separable kernels.
    pub(crate) fn scalar_eval(&self, z1: &[f64], z2: &[f64]) -> Option<f64> {
        match self {
            OperatorKernel::ScalarLift { kernel, .. } => Some(kernel.eval(z1, z2)),
            OperatorKernel::DirectSum { input, output } => {
                let split = input.domain_dim();
                Some(input.scalar_eval(&z1[..split], &z2[..split])? + output.scalar_eval(&z1[split..], &z2[split..])?)
            }
            OperatorKernel::RankOneFeature { .. } => None,
        }
    }

    /// Scalar Gram matrix `[s(z_i, z_j)]` of a separable kernel.
    pub fn scalar_gram(&self, centers: &[Vector]) -> Result<Matrix> {
        if !self.is_separable() {
            return Err(Error::Contract("scalar Gram matrix of a non-separable kernel".into()));
        }
        if centers.is_empty() {
            return Err(Error::Contract("Gram matrix of an empty center list".into()));
        }
        for c in centers {
            self.check_point(c.as_slice())?;
        }
        let n = centers.len();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self
                    .scalar_eval(centers[i].as_slice(), centers[j].as_slice())
                    .expect("separable");
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }

    /// Scalar kernel row `[s(z, z_j)]` of a separable kernel.
    pub fn scalar_row(&self, z: &[f64], centers: &[Vector]) -> Result<Vector> {
        self.check_point(z)?;
        let mut row = Vector::zeros(centers.len());
        for (j, c) in centers.iter().enumerate() {
            self.check_point(c.as_slice())?;
            row[j] = self
                .scalar_eval(z, c.as_slice())
                .ok_or_else(|| Error::Contract("scalar row of a non-separable kernel".into()))?;
        }
        Ok(row)
    }

    pub fn feature_map(&self) -> Option<&FeatureMap> {
        match self {
            OperatorKernel::RankOneFeature { map } => Some(map),
            _ => None,
        }
    }
}
