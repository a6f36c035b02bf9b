//! Minimum-norm interpolation in a vector-valued RKHS over regression vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::OperatorKernel;
use crate::linalg::{eig_sym, kron, pinv, singular_values, stack, Matrix, RankPolicy, Vector};
use crate::systems::Trajectory;

/// Relative tolerance for calling `Σ` zero or singular.
pub const DEFAULT_SIGMA_TOL: f64 = 1e-8;
/// Relative training residual above which the targets are declared unreachable.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpOptions {
    pub policy: RankPolicy,
    pub sigma_tol: f64,
    pub feasibility_tol: f64,
}

impl Default for InterpOptions {
    fn default() -> Self {
        Self {
            policy: RankPolicy::default(),
            sigma_tol: DEFAULT_SIGMA_TOL,
            feasibility_tol: DEFAULT_FEASIBILITY_TOL,
        }
    }
}

/// `z_t = (u_t, ..., u_{t+L}, y_t, ..., y_{t+L-1})` and its target `y_{t+L}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSample {
    pub z: Vector,
    pub y_plus: Vector,
    pub t: usize,
}

pub fn build_regressors(traj: &Trajectory, lag: usize) -> Result<Vec<RegressionSample>> {
    let len = traj.len();
    if len <= lag {
        return Err(Error::InsufficientData {
            needed: lag + 1,
            got: len,
        });
    }
    Ok((0..len - lag)
        .map(|t| {
            let mut parts: Vec<Vector> = traj.u[t..=t + lag].to_vec();
            parts.extend_from_slice(&traj.y[t..t + lag]);
            RegressionSample {
                z: stack(&parts),
                y_plus: traj.y[t + lag].clone(),
                t,
            }
        })
        .collect())
}

/// Gram matrix and its pseudoinverse. Separable kernels keep only the scalar
/// factor `K_s`, since `K = K_s ⊗ I_p` and `K† = K_s† ⊗ I_p`.
#[derive(Debug, Clone, PartialEq)]
enum GramCache {
    Separable { gram: Matrix, pinv: Matrix },
    Full { gram: Matrix, pinv: Matrix },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interpolator {
    pub kernel: OperatorKernel,
    pub centers: Vec<Vector>,
    pub coefficients: Vec<Vector>,
    /// Relative training residual `|K v - Y| / |Y|` (absolute when `Y = 0`).
    pub residual: f64,
    pub feasible: bool,
    pub options: InterpOptions,
    norm_sq: f64,
    cache: GramCache,
}

/// Fits `f_N = sum_j k(., z_j) v_j` with `v = K_N† Y_N`.
pub fn fit_min_norm(samples: &[RegressionSample], kernel: &OperatorKernel, options: InterpOptions) -> Result<Interpolator> {
    if samples.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let p = kernel.output_dim();
    if let Some(s) = samples.iter().find(|s| s.y_plus.len() != p) {
        return Err(Error::Dimension(format!(
            "sample {} has a {}-dimensional target, kernel expects {p}",
            s.t,
            s.y_plus.len()
        )));
    }
    let centers: Vec<Vector> = samples.iter().map(|s| s.z.clone()).collect();
    let n = samples.len();
    // targets as an N x p matrix, row j = y_j
    let targets = Matrix::from_fn(n, p, |j, i| samples[j].y_plus[i]);
    let (cache, coef_mat, fitted) = if kernel.is_separable() {
        let gram = kernel.scalar_gram(&centers)?;
        let gp = pinv(&gram, options.policy);
        let coef = &gp * &targets;
        let fitted = &gram * &coef;
        (GramCache::Separable { gram, pinv: gp }, coef, fitted)
    } else {
        let gram = kernel.gram_block(&centers)?;
        let gp = pinv(&gram, options.policy);
        let y = Vector::from_iterator(n * p, targets.transpose().iter().copied());
        let v = &gp * &y;
        let fitted = &gram * &v;
        let coef = Matrix::from_fn(n, p, |j, i| v[j * p + i]);
        let fitted = Matrix::from_fn(n, p, |j, i| fitted[j * p + i]);
        (GramCache::Full { gram, pinv: gp }, coef, fitted)
    };
    let scale = targets.norm();
    let abs = (&fitted - &targets).norm();
    let residual = if scale > 0.0 { abs / scale } else { abs };
    let norm_sq = match &cache {
        GramCache::Separable { gram, .. } => (coef_mat.transpose() * gram * &coef_mat).trace(),
        GramCache::Full { gram, .. } => {
            let v = Vector::from_iterator(n * p, coef_mat.transpose().iter().copied());
            v.dot(&(gram * &v))
        }
    };
    let coefficients = (0..n).map(|j| coef_mat.row(j).transpose()).collect();
    Ok(Interpolator {
        kernel: kernel.clone(),
        centers,
        coefficients,
        residual,
        feasible: residual <= options.feasibility_tol,
        options,
        norm_sq: norm_sq.max(0.0),
        cache,
    })
}

/// `|f_N|^2 = v̄ᵀ K_N v̄`, clamped at zero.
pub fn interp_norm_sq(interp: &Interpolator) -> f64 {
    interp.norm_sq
}

impl Interpolator {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    /// The full `Np x Np` block Gram matrix.
    pub fn gram(&self) -> Matrix {
        match &self.cache {
            GramCache::Separable { gram, .. } => kron(gram, &Matrix::identity(self.kernel.output_dim(), self.kernel.output_dim())),
            GramCache::Full { gram, .. } => gram.clone(),
        }
    }

    /// Ratio of the largest to the smallest retained singular value of `K_N`.
    pub fn gram_condition(&self) -> f64 {
        let g = match &self.cache {
            GramCache::Separable { gram, .. } | GramCache::Full { gram, .. } => gram,
        };
        let s = singular_values(g);
        let r = self.options.policy.retained(&s);
        if r == 0 {
            f64::INFINITY
        } else {
            s[0] / s[r - 1]
        }
    }

    pub fn predict(&self, z: &Vector) -> Result<Vector> {
        let p = self.kernel.output_dim();
        match &self.cache {
            GramCache::Separable { .. } => {
                let row = self.kernel.scalar_row(z.as_slice(), &self.centers)?;
                let mut out = Vector::zeros(p);
                for (w, v) in row.iter().zip(&self.coefficients) {
                    out.axpy(*w, v, 1.0);
                }
                Ok(out)
            }
            GramCache::Full { .. } => {
                let row = self.kernel.kernel_row(z.as_slice(), &self.centers)?;
                Ok(row * stack(&self.coefficients))
            }
        }
    }

    pub fn predict_batch(&self, zs: &[Vector]) -> Result<Vec<Vector>> {
        zs.iter().map(|z| self.predict(z)).collect()
    }

    /// `Σ_N(z) = k(z, z) - k_N(z) K_N† k_N(z)ᵀ`.
    pub fn sigma(&self, z: &Vector) -> Result<Matrix> {
        let p = self.kernel.output_dim();
        let kzz = self.kernel.eval(z.as_slice(), z.as_slice())?;
        let sigma = match &self.cache {
            GramCache::Separable { pinv, .. } => {
                let row = self.kernel.scalar_row(z.as_slice(), &self.centers)?;
                let s = kzz[(0, 0)] - row.dot(&(pinv * &row));
                Matrix::identity(p, p) * s
            }
            GramCache::Full { pinv, .. } => {
                let row = self.kernel.kernel_row(z.as_slice(), &self.centers)?;
                &kzz - &row * pinv * row.transpose()
            }
        };
        Ok(sigma)
    }

    pub fn certificate(&self, z: &Vector) -> Result<SigmaCertificate> {
        let kzz = self.kernel.eval(z.as_slice(), z.as_slice())?;
        SigmaCertificate::classify(self.sigma(z)?, &kzz, self.options.sigma_tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaClass {
    Zero,
    PositiveDefinite,
    SingularNonzero,
}

impl SigmaClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            SigmaClass::Zero => "zero",
            SigmaClass::PositiveDefinite => "positive-definite",
            SigmaClass::SingularNonzero => "singular-nonzero",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaCertificate {
    pub sigma: Matrix,
    pub classification: SigmaClass,
    /// Eigenvalues of the symmetrized `Σ`, descending.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub tol: f64,
    /// Largest eigenvalue of `k(z, z)`, the scale for the zero test.
    pub scale: f64,
}

impl SigmaCertificate {
    fn classify(sigma: Matrix, kzz: &Matrix, tol: f64) -> Result<Self> {
        let sym = (&sigma + sigma.transpose()) * 0.5;
        let kz_sym = (kzz + kzz.transpose()) * 0.5;
        let scale = eig_sym(&kz_sym)?.values.first().copied().unwrap_or(0.0).max(0.0);
        let eig = eig_sym(&sym)?;
        let lambda_max = eig.values.first().copied().unwrap_or(0.0);
        let lambda_min = eig.values.last().copied().unwrap_or(0.0);
        let classification = if lambda_max <= tol * scale {
            SigmaClass::Zero
        } else if lambda_min > tol * lambda_max {
            SigmaClass::PositiveDefinite
        } else {
            SigmaClass::SingularNonzero
        };
        Ok(Self {
            sigma: sym,
            classification,
            eigenvalues: eig.values,
            eigenvectors: eig.vectors,
            lambda_min,
            lambda_max,
            tol,
            scale,
        })
    }

    /// Splits `e` into `|(Σ†)^{1/2} e|^2` and the squared norm of its component
    /// in the numerical kernel of `Σ`.
    pub fn weighted(&self, e: &Vector) -> (f64, f64) {
        let mut weighted = 0.0;
        let mut null = 0.0;
        let cut = if self.classification == SigmaClass::Zero {
            f64::INFINITY
        } else {
            self.tol * self.lambda_max
        };
        for (i, &lam) in self.eigenvalues.iter().enumerate() {
            let c = self.eigenvectors.column(i).dot(e);
            if lam > cut {
                weighted += c * c / lam;
            } else {
                null += c * c;
            }
        }
        (weighted, null)
    }
}

/// Certificate computed from the full block Gram matrix, without any shortcut.
pub fn sigma_certificate(
    kernel: &OperatorKernel,
    centers: &[Vector],
    z: &Vector,
    options: InterpOptions,
) -> Result<SigmaCertificate> {
    let kzz = kernel.eval(z.as_slice(), z.as_slice())?;
    let gram = kernel.gram_block(centers)?;
    let row = kernel.kernel_row(z.as_slice(), centers)?;
    let sigma = &kzz - &row * pinv(&gram, options.policy) * row.transpose();
    SigmaCertificate::classify(sigma, &kzz, options.sigma_tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresenterReport {
    pub t: usize,
    pub predicted: Vec<f64>,
    pub actual: Option<Vec<f64>>,
    /// `|Σ^{-1/2}(y - ŷ)|^2`, with `Σ†` when `Σ` is singular.
    pub weighted_error_sq: f64,
    pub norm_increment: f64,
    pub identity_residual: f64,
    pub classification: SigmaClass,
    pub bound_slack: Option<f64>,
    /// Squared norm of `y - ŷ` in the numerical kernel of `Σ`.
    pub null_component_sq: f64,
    /// Set when `Σ` is singular but nonzero, where the identity is an extension.
    pub pseudo_inverse_weighting: bool,
    pub sigma_eigenvalues: Vec<f64>,
    pub norm_before: f64,
    pub norm_after: f64,
    pub offline_feasible: bool,
    pub consistent: bool,
    pub exact_at_zero: Option<bool>,
    pub bound_holds: Option<bool>,
    pub gram_condition: f64,
}

impl RepresenterReport {
    pub fn is_finite(&self) -> bool {
        let scalars = [
            self.weighted_error_sq,
            self.norm_increment,
            self.identity_residual,
            self.null_component_sq,
            self.norm_before,
            self.norm_after,
        ];
        scalars.iter().all(|x| x.is_finite())
            && self.predicted.iter().all(|x| x.is_finite())
            && self.bound_slack.is_none_or(f64::is_finite)
    }
}

/// Fits on `offline`, then on `offline + online`, and compares the norm
/// increment with the `Σ`-weighted prediction error at the online point.
pub fn representer_check(
    offline: &[RegressionSample],
    online: &RegressionSample,
    kernel: &OperatorKernel,
    f_star_norm_sq: Option<f64>,
    options: InterpOptions,
) -> Result<RepresenterReport> {
    if offline.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let before = fit_min_norm(offline, kernel, options)?;
    let mut all = offline.to_vec();
    all.push(online.clone());
    let after = fit_min_norm(&all, kernel, options)?;

    let predicted = before.predict(&online.z)?;
    let cert = before.certificate(&online.z)?;
    let err = &online.y_plus - &predicted;
    let (weighted, null) = cert.weighted(&err);
    let increment = after.norm_sq() - before.norm_sq();
    let y_norm = online.y_plus.norm();
    let exact_at_zero = (cert.classification == SigmaClass::Zero).then(|| err.norm() <= 1e-6 * (1.0 + y_norm));
    let bound_slack = f_star_norm_sq.map(|f| f - before.norm_sq());
    Ok(RepresenterReport {
        t: online.t,
        predicted: predicted.as_slice().to_vec(),
        actual: Some(online.y_plus.as_slice().to_vec()),
        weighted_error_sq: weighted,
        norm_increment: increment,
        identity_residual: (increment - weighted).abs(),
        classification: cert.classification,
        bound_slack,
        null_component_sq: null,
        pseudo_inverse_weighting: cert.classification == SigmaClass::SingularNonzero,
        sigma_eigenvalues: cert.eigenvalues.clone(),
        norm_before: before.norm_sq(),
        norm_after: after.norm_sq(),
        offline_feasible: before.feasible,
        consistent: after.feasible,
        exact_at_zero,
        bound_holds: bound_slack.map(|s| increment <= s + 1e-8),
        gram_condition: before.gram_condition(),
    })
}
