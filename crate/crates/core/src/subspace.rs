//! Subspace identification from trace-kernel Gram matrices.
//!
//! Past and future input features enter only through Gram matrices
//! `[K]_{ij} = sum_k Tr k(u_{i+k}, u_{j+k})`, so the feature map of a rank-one
//! kernel is never stacked explicitly. Outputs are used as plain block Hankel
//! matrices `Y_p`, `Y_f`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{FeatureMap, OperatorKernel};
use crate::linalg::{self, eig_sym, hankel, pinv, range_residual, serde_rows, singular_values, svd_trunc, Matrix, RankPolicy, Vector};
use crate::systems::Trajectory;

/// Relative residual above which a candidate is rejected.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-6;
/// Consecutive singular value ratio that counts as a gap when estimating the order.
pub const ORDER_GAP_RATIO: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceOptions {
    pub policy: RankPolicy,
    pub membership_tol: f64,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        Self {
            policy: RankPolicy::default(),
            membership_tol: DEFAULT_MEMBERSHIP_TOL,
        }
    }
}

/// `T x T` matrix of `Tr k(u_a, u_b)`.
fn trace_matrix(kernel: &OperatorKernel, u: &[Vector]) -> Result<Matrix> {
    let t = u.len();
    let mut g = Matrix::zeros(t, t);
    for a in 0..t {
        for b in 0..=a {
            let v = kernel.trace_inner(u[a].as_slice(), u[b].as_slice())?;
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    Ok(g)
}

/// `[K]_{ij} = sum_{k < depth} g[offset + i + k, offset + j + k]` for `i, j < cols`.
fn window_gram(g: &Matrix, offset: usize, depth: usize, cols: usize) -> Matrix {
    let mut k = Matrix::zeros(cols, cols);
    for i in 0..cols {
        for j in 0..=i {
            let v: f64 = (0..depth).map(|d| g[(offset + i + d, offset + j + d)]).sum();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn require_rank_one(kernel: &OperatorKernel) -> Result<&FeatureMap> {
    kernel
        .feature_map()
        .ok_or_else(|| Error::Contract("subspace identification needs a rank-one feature kernel".into()))
}

/// Past/future Grams and output blocks of one trajectory for lag `L`.
#[derive(Debug, Clone, PartialEq)]
pub struct PastFutureData {
    pub lag: usize,
    /// `N_c = T - 2L + 1`.
    pub cols: usize,
    pub y_past: Matrix,
    pub y_future: Matrix,
    pub k_past_u: Matrix,
    pub k_future_u: Matrix,
    pub k_past_y: Matrix,
    pub k_future_y: Matrix,
    pub kernel: OperatorKernel,
    pub traj: Trajectory,
}

impl PastFutureData {
    /// `K̄_p = K_p^u + K_p^y`.
    pub fn k_past(&self) -> Matrix {
        &self.k_past_u + &self.k_past_y
    }

    /// `K̄_pf = K_p^u + K_p^y + K_f^u`.
    pub fn k_past_future(&self) -> Matrix {
        &self.k_past_u + &self.k_past_y + &self.k_future_u
    }

    pub fn input_dim(&self) -> usize {
        self.traj.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.traj.output_dim()
    }
}

pub fn build_past_future(traj: &Trajectory, lag: usize, kernel: &OperatorKernel) -> Result<PastFutureData> {
    let map = require_rank_one(kernel)?;
    if lag == 0 {
        return Err(Error::Contract("lag must be at least 1".into()));
    }
    let t = traj.len();
    if t < 2 * lag + 1 {
        return Err(Error::InsufficientData {
            needed: 2 * lag + 1,
            got: t,
        });
    }
    if map.input_dim() != traj.input_dim() {
        return Err(Error::Dimension(format!(
            "feature map takes {} inputs, trajectory has {}",
            map.input_dim(),
            traj.input_dim()
        )));
    }
    let cols = t - 2 * lag + 1;
    let g = trace_matrix(kernel, &traj.u)?;
    let y_hankel = hankel(&traj.y[..cols + 2 * lag - 1], 2 * lag)?;
    let p = traj.output_dim();
    let y_past = y_hankel.rows(0, p * lag).clone_owned();
    let y_future = y_hankel.rows(p * lag, p * lag).clone_owned();
    Ok(PastFutureData {
        lag,
        cols,
        k_past_u: window_gram(&g, 0, lag, cols),
        k_future_u: window_gram(&g, lag, lag, cols),
        k_past_y: y_past.transpose() * &y_past,
        k_future_y: y_future.transpose() * &y_future,
        y_past,
        y_future,
        kernel: kernel.clone(),
        traj: traj.clone(),
    })
}

/// Depth-`d` block Hankel of `phi(u_t)` built from explicit features.
pub fn feature_hankel(u: &[Vector], map: &FeatureMap, depth: usize) -> Result<Matrix> {
    let feats: Vec<Vector> = u
        .iter()
        .map(|x| map.eval_checked(x.as_slice()))
        .collect::<Result<_>>()?;
    hankel(&feats, depth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRankReport {
    pub depth: usize,
    pub rank: usize,
    pub required: usize,
    /// Column count `T - depth + 1` of the depth-`(2L + n)` Gram.
    pub columns: usize,
    pub satisfied: bool,
    /// Set when `(2L + n) q` exceeds the available column count.
    pub warning: Option<String>,
}

/// Rank of the depth-`(2L + n)` input Gram against the required `(2L + n) q`.
pub fn input_rank_check(traj: &Trajectory, lag: usize, n: usize, kernel: &OperatorKernel, policy: RankPolicy) -> Result<InputRankReport> {
    let map = require_rank_one(kernel)?;
    let depth = 2 * lag + n;
    let t = traj.len();
    if t < depth {
        return Err(Error::InsufficientData { needed: depth, got: t });
    }
    let cols = t - depth + 1;
    let g = trace_matrix(kernel, &traj.u)?;
    let k = window_gram(&g, 0, depth, cols);
    let r = linalg::rank(&k, policy);
    let required = depth * map.output_dim();
    let warning = (required > cols).then(|| {
        format!("rank {required} cannot be reached with {cols} columns; use at least {} samples", required + depth - 1)
    });
    Ok(InputRankReport {
        depth,
        rank: r,
        required,
        columns: cols,
        satisfied: r == required,
        warning,
    })
}

/// `Π = Y_f K̄_pf† K̄_p`.
pub fn oblique_pi(data: &PastFutureData, policy: RankPolicy) -> Matrix {
    &data.y_future * pinv(&data.k_past_future(), policy) * data.k_past()
}

/// Order from the largest log-gap among the retained singular values, where a
/// gap needs `s_{k+1} / s_k < ORDER_GAP_RATIO`. Falls back to the policy rank.
pub fn estimate_order(spectrum: &[f64], policy: RankPolicy) -> usize {
    gap_order(spectrum, policy.retained(spectrum))
}

/// Gap search restricted to the leading `retained` values.
fn gap_order(spectrum: &[f64], retained: usize) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for k in 1..=retained.min(spectrum.len().saturating_sub(1)) {
        let ratio = spectrum[k].max(0.0) / spectrum[k - 1];
        if ratio < ORDER_GAP_RATIO && best.is_none_or(|(_, b)| ratio < b) {
            best = Some((k, ratio));
        }
    }
    best.map_or(retained, |(k, _)| k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Svd,
    Eigen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceResult {
    pub route: Route,
    pub order: usize,
    pub order_estimated: bool,
    /// Descending singular values of `Π`.
    pub singular_values: Vec<f64>,
    /// `|Π - O_L X_f|_F / |Π|_F`.
    pub reconstruction_residual: f64,
    #[serde(with = "serde_rows")]
    pub pi: Matrix,
    #[serde(with = "serde_rows")]
    pub observability: Matrix,
    #[serde(with = "serde_rows")]
    pub states: Matrix,
    pub input_rank: Option<InputRankReport>,
}

fn pick_order(spectrum: &[f64], order: Option<usize>, retained: usize) -> Result<(usize, bool)> {
    let positive = spectrum.iter().take_while(|s| **s > 0.0).count();
    let n = match order {
        Some(n) => n.min(positive),
        None => gap_order(spectrum, retained),
    };
    if n == 0 {
        return Err(Error::Degenerate("Π has no retained singular values".into()));
    }
    Ok((n, order.is_none()))
}

fn relative_residual(pi: &Matrix, obs: &Matrix, states: &Matrix) -> f64 {
    let scale = pi.norm();
    let diff = (pi - obs * states).norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// `O_L = U_1 Σ_1^{1/2}`, `X_f = Σ_1^{1/2} V_1ᵀ` from the truncated SVD of `Π`.
pub fn recover_states(data: &PastFutureData, order: Option<usize>, policy: RankPolicy) -> Result<SubspaceResult> {
    let pi = oblique_pi(data, policy);
    let full = svd_trunc(&pi, RankPolicy::fixed(pi.nrows().min(pi.ncols())));
    let spectrum = full.spectrum.clone();
    let (n, estimated) = pick_order(&spectrum, order, policy.retained(&spectrum))?;
    let n = n.min(full.rank());
    if n == 0 {
        return Err(Error::Degenerate("Π is zero".into()));
    }
    let half = Vector::from_iterator(n, full.s[..n].iter().map(|s| s.sqrt()));
    let obs = full.u.columns(0, n) * Matrix::from_diagonal(&half);
    let states = Matrix::from_diagonal(&half) * full.v.columns(0, n).transpose();
    Ok(SubspaceResult {
        route: Route::Svd,
        order: n,
        order_estimated: estimated,
        singular_values: spectrum,
        reconstruction_residual: relative_residual(&pi, &obs, &states),
        pi,
        observability: obs,
        states,
        input_rank: None,
    })
}

/// Same factors computed from eigenpairs of `Γ K_f^y` with
/// `Γ = K̄_pf† K̄_p K̄_pᵀ K̄_pf†`, never forming an SVD of `Π`.
///
/// `Γ K_f^y` is similar to the symmetric `Γ^{1/2} K_f^y Γ^{1/2}`; its
/// eigenvalues are the squared singular values of `Π`.
pub fn recover_states_eigen(data: &PastFutureData, order: Option<usize>, policy: RankPolicy) -> Result<SubspaceResult> {
    let kp = data.k_past();
    let kpf_pinv = pinv(&data.k_past_future(), policy);
    let left = &kpf_pinv * &kp;
    let gamma = &left * left.transpose();
    let ge = eig_sym(&gamma)?;
    let gr = policy.retained(&ge.values.iter().map(|v| v.max(0.0)).collect::<Vec<_>>());
    let mut gamma_half = Matrix::zeros(gamma.nrows(), gamma.ncols());
    for i in 0..gr {
        let c = ge.vectors.column(i);
        gamma_half += c * c.transpose() * ge.values[i].sqrt();
    }
    let inner = &gamma_half * &data.k_future_y * &gamma_half;
    let ie = eig_sym(&((&inner + inner.transpose()) * 0.5))?;
    let squared: Vec<f64> = ie.values.iter().map(|v| v.max(0.0)).collect();
    let spectrum: Vec<f64> = squared.iter().map(|v| v.sqrt()).collect();
    let (n, estimated) = pick_order(&spectrum, order, policy.retained(&squared))?;
    let pl = data.y_future.nrows();
    let mut obs = Matrix::zeros(pl, n);
    let mut states = Matrix::zeros(n, data.cols);
    let project = &kp * &kpf_pinv * &data.k_future_y;
    for i in 0..n {
        let sigma = spectrum[i];
        if sigma <= 0.0 {
            return Err(Error::Degenerate(format!("eigen route: σ_{i} vanishes")));
        }
        let xi = &gamma_half * ie.vectors.column(i);
        let u = &data.y_future * &xi;
        let un = u.norm();
        if un == 0.0 {
            return Err(Error::Degenerate(format!("eigen route: direction {i} has no output image")));
        }
        let v = &project * &xi / (sigma * un);
        let root = sigma.sqrt();
        obs.set_column(i, &(u * (root / un)));
        states.set_row(i, &(v.transpose() * root));
    }
    let pi = oblique_pi(data, policy);
    let mut spectrum_pi = spectrum;
    spectrum_pi.truncate(pl.min(data.cols));
    Ok(SubspaceResult {
        route: Route::Eigen,
        order: n,
        order_estimated: estimated,
        singular_values: spectrum_pi,
        reconstruction_residual: relative_residual(&pi, &obs, &states),
        pi,
        observability: obs,
        states,
        input_rank: None,
    })
}

/// Solution of the stacked past system and its bookkeeping.
struct PastSolve {
    xi: Vector,
    residual: f64,
}

fn check_window(data: &PastFutureData, u: &[Vector], y: &[Vector], want: usize) -> Result<()> {
    if u.len() != want {
        return Err(Error::Shape(format!("expected {want} inputs, got {}", u.len())));
    }
    if y.len() != data.lag {
        return Err(Error::Shape(format!("expected {} past outputs, got {}", data.lag, y.len())));
    }
    if u.iter().any(|v| v.len() != data.input_dim()) || y.iter().any(|v| v.len() != data.output_dim()) {
        return Err(Error::Shape("candidate dimensions differ from the data".into()));
    }
    Ok(())
}

/// `[k]_j = sum_r Tr k(u_{offset + j + r}, c_r)`.
fn kernel_vector(data: &PastFutureData, offset: usize, cand: &[Vector]) -> Result<Vector> {
    let mut out = Vector::zeros(data.cols);
    for j in 0..data.cols {
        let mut acc = 0.0;
        for (r, c) in cand.iter().enumerate() {
            acc += data.kernel.trace_inner(data.traj.u[offset + j + r].as_slice(), c.as_slice())?;
        }
        out[j] = acc;
    }
    Ok(out)
}

fn rel(diff: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// `[K_p^u; K_p^y; K_f^u] ξ = [k_p^u; k_p^y; k_f^u]` by pseudoinverse.
fn solve_past(data: &PastFutureData, u: &[Vector], y_past: &[Vector], policy: RankPolicy) -> Result<PastSolve> {
    let lag = data.lag;
    let kpu = kernel_vector(data, 0, &u[..lag])?;
    let kfu = kernel_vector(data, lag, &u[lag..])?;
    let kpy = data.y_past.transpose() * linalg::stack(y_past);
    let lhs = linalg::vstack(&[&data.k_past_u, &data.k_past_y, &data.k_future_u]);
    let rhs = linalg::stack(&[kpu, kpy, kfu]);
    let xi = pinv(&lhs, policy) * &rhs;
    let residual = rel((&lhs * &xi - &rhs).norm(), rhs.norm());
    Ok(PastSolve { xi, residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipVerdict {
    pub feasible: bool,
    pub xi: Vec<f64>,
    pub past_residual: f64,
    pub future_residual: f64,
    pub threshold: f64,
    /// `ŷ_{L..2L-1}` implied by the past and the future inputs.
    pub predicted: Vec<Vec<f64>>,
}

/// Tests whether a length-`2L` candidate is a trajectory of the system that
/// generated the data.
pub fn membership_test(data: &PastFutureData, candidate: &Trajectory, options: SubspaceOptions) -> Result<MembershipVerdict> {
    let lag = data.lag;
    if candidate.len() != 2 * lag {
        return Err(Error::Shape(format!(
            "candidate must have length {}, got {}",
            2 * lag,
            candidate.len()
        )));
    }
    check_window(data, &candidate.u, &candidate.y[..lag], 2 * lag)?;
    if candidate.output_dim() != data.output_dim() {
        return Err(Error::Shape("candidate output dimension differs from the data".into()));
    }
    let solve = solve_past(data, &candidate.u, &candidate.y[..lag], options.policy)?;
    let kfy = data.y_future.transpose() * linalg::stack(&candidate.y[lag..]);
    let fitted = &data.k_future_y * &solve.xi;
    let future_residual = rel((&kfy - &fitted).norm(), kfy.norm().max(fitted.norm()));
    let predicted = predict_from_xi(data, &solve.xi, options.policy);
    Ok(MembershipVerdict {
        feasible: solve.residual <= options.membership_tol && future_residual <= options.membership_tol,
        xi: solve.xi.as_slice().to_vec(),
        past_residual: solve.residual,
        future_residual,
        threshold: options.membership_tol,
        predicted: predicted.iter().map(|v| v.as_slice().to_vec()).collect(),
    })
}

/// `ŷ = (Y_fᵀ)† K_f^y ξ`, split into `L` outputs.
fn predict_from_xi(data: &PastFutureData, xi: &Vector, policy: RankPolicy) -> Vec<Vector> {
    let stacked = pinv(&data.y_future.transpose(), policy) * (&data.k_future_y * xi);
    let p = data.output_dim();
    (0..data.lag).map(|i| stacked.rows(i * p, p).clone_owned()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspacePrediction {
    pub outputs: Vec<Vec<f64>>,
    /// Relative residual of the stacked past system.
    pub residual: f64,
}

impl SubspacePrediction {
    pub fn output_vectors(&self) -> Vec<Vector> {
        self.outputs.iter().map(|v| Vector::from_column_slice(v)).collect()
    }
}

/// Predicts `y_{L..2L-1}` from a length-`L` past and the future inputs.
pub fn subspace_predict(data: &PastFutureData, past: &Trajectory, future_u: &[Vector], policy: RankPolicy) -> Result<SubspacePrediction> {
    if past.len() != data.lag {
        return Err(Error::Shape(format!("past must have length {}, got {}", data.lag, past.len())));
    }
    let mut u = past.u.clone();
    u.extend_from_slice(future_u);
    check_window(data, &u, &past.y, 2 * data.lag)?;
    let solve = solve_past(data, &u, &past.y, policy)?;
    Ok(SubspacePrediction {
        outputs: predict_from_xi(data, &solve.xi, policy)
            .iter()
            .map(|v| v.as_slice().to_vec())
            .collect(),
        residual: solve.residual,
    })
}

/// Depth-`L` Hankel of `w_t = (u_t, y_t)`.
pub fn trajectory_hankel(traj: &Trajectory, depth: usize) -> Result<Matrix> {
    let w: Vec<Vector> = traj
        .u
        .iter()
        .zip(&traj.y)
        .map(|(u, y)| linalg::stack(&[u.clone(), y.clone()]))
        .collect();
    hankel(&w, depth)
}

/// Relative distance of a stacked window `(w_0, ..., w_{L-1})` from the column
/// space of the data's depth-`L` Hankel matrix.
pub fn hankel_residual(data: &Trajectory, depth: usize, window: &Vector, policy: RankPolicy) -> Result<f64> {
    let h = trajectory_hankel(data, depth)?;
    if window.len() != h.nrows() {
        return Err(Error::Shape(format!(
            "window has length {}, Hankel has {} rows",
            window.len(),
            h.nrows()
        )));
    }
    Ok(range_residual(&h, window, policy))
}

/// `Π` and its singular values only, for spectrum plots.
pub fn pi_spectrum(data: &PastFutureData, policy: RankPolicy) -> Vec<f64> {
    singular_values(&oblique_pi(data, policy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_principal_angle_sin, oblique_project};
    use crate::systems::catalog::{catalog_model, Model};
    use crate::systems::{seeded_rng, simulate_ss, uniform_inputs};

    fn identity_kernel(m: usize) -> OperatorKernel {
        OperatorKernel::rank_one(FeatureMap::Identity { dim: m })
    }

    fn sv(x: f64) -> Vector {
        Vector::from_element(1, x)
    }

    fn lti_n2(len: usize, seed: u64) -> (Trajectory, Vec<Vector>) {
        let model = match catalog_model("lti-n2").unwrap() {
            Model::StateSpace(m) => m,
            _ => unreachable!(),
        };
        let mut rng = seeded_rng(seed);
        let u = uniform_inputs(&mut rng, 1, len);
        simulate_ss(&model, &u).unwrap()
    }

    #[test]
    fn identity_lag1_gram_is_plain_gram() {
        let (traj, _) = lti_n2(12, 1);
        let data = build_past_future(&traj, 1, &identity_kernel(1)).unwrap();
        assert_eq!(data.cols, 11);
        for i in 0..11 {
            for j in 0..11 {
                assert_eq!(data.k_past_u[(i, j)], traj.u[i][0] * traj.u[j][0]);
                assert_eq!(data.k_future_u[(i, j)], traj.u[i + 1][0] * traj.u[j + 1][0]);
            }
        }
    }

    #[test]
    fn gram_matches_explicit_features() {
        let mut rng = seeded_rng(4);
        let u = uniform_inputs(&mut rng, 2, 30);
        let map = FeatureMap::Polynomial { dim: 2, degree: 2 };
        let table = FeatureMap::Table(crate::kernels::FeatureTable::tabulate(&map, &u).unwrap());
        let y: Vec<Vector> = u.iter().map(|x| sv(x[0] - x[1])).collect();
        let traj = Trajectory::new(u.clone(), y).unwrap();
        let lag = 3;
        let data = build_past_future(&traj, lag, &OperatorKernel::rank_one(table.clone())).unwrap();
        let h = feature_hankel(&u[..data.cols + 2 * lag - 1], &table, 2 * lag).unwrap();
        let q = 4;
        let up = h.rows(0, q * lag).clone_owned();
        let uf = h.rows(q * lag, q * lag).clone_owned();
        assert!((up.transpose() * &up - &data.k_past_u).amax() < 1e-12);
        assert!((uf.transpose() * &uf - &data.k_future_u).amax() < 1e-12);
    }

    #[test]
    fn zero_inputs_and_short_data() {
        let traj = Trajectory::new(vec![sv(0.0); 8], vec![sv(1.0); 8]).unwrap();
        let data = build_past_future(&traj, 2, &identity_kernel(1)).unwrap();
        assert_eq!(data.k_past_u.amax(), 0.0);
        assert_eq!(data.k_future_u.amax(), 0.0);
        let r = input_rank_check(&traj, 2, 1, &identity_kernel(1), RankPolicy::default()).unwrap();
        assert_eq!(r.rank, 0);
        assert!(!r.satisfied);
        assert!(matches!(build_past_future(&traj, 4, &identity_kernel(1)), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn constant_inputs_fail_rank_check() {
        let traj = Trajectory::new(vec![sv(0.5); 40], vec![sv(0.0); 40]).unwrap();
        let r = input_rank_check(&traj, 2, 2, &identity_kernel(1), RankPolicy::default()).unwrap();
        assert!(r.rank <= 1 && !r.satisfied);
    }

    #[test]
    fn random_inputs_pass_rank_check() {
        let (traj, _) = lti_n2(80, 2);
        let r = input_rank_check(&traj, 3, 2, &identity_kernel(1), RankPolicy::default()).unwrap();
        assert!(r.satisfied, "{r:?}");
        assert!(r.warning.is_none());
    }

    #[test]
    fn pi_matches_explicit_oblique_projection() {
        let (traj, _) = lti_n2(60, 3);
        let lag = 3;
        let data = build_past_future(&traj, lag, &identity_kernel(1)).unwrap();
        let pi = oblique_pi(&data, RankPolicy::default());
        let h = feature_hankel(&traj.u[..data.cols + 2 * lag - 1], &FeatureMap::Identity { dim: 1 }, 2 * lag).unwrap();
        let up = h.rows(0, lag).clone_owned();
        let uf = h.rows(lag, lag).clone_owned();
        let hp = linalg::vstack(&[&up, &data.y_past]);
        let want = oblique_project(&data.y_future, &uf, &hp, RankPolicy::default()).unwrap();
        assert!((&pi - &want).amax() < 1e-8 * (1.0 + want.amax()));
        assert_eq!(linalg::rank(&pi, RankPolicy::relative(1e-8).unwrap()), 2);
    }

    #[test]
    fn zero_outputs_give_zero_pi_and_degenerate_error() {
        let mut rng = seeded_rng(5);
        let u = uniform_inputs(&mut rng, 1, 20);
        let traj = Trajectory::new(u, vec![sv(0.0); 20]).unwrap();
        let data = build_past_future(&traj, 2, &identity_kernel(1)).unwrap();
        assert_eq!(oblique_pi(&data, RankPolicy::default()).amax(), 0.0);
        assert!(matches!(recover_states(&data, None, RankPolicy::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn states_similar_to_truth() {
        let (traj, states) = lti_n2(80, 6);
        let lag = 3;
        let data = build_past_future(&traj, lag, &identity_kernel(1)).unwrap();
        let res = recover_states(&data, None, RankPolicy::default()).unwrap();
        assert_eq!(res.order, 2);
        assert!(res.reconstruction_residual < 1e-8);
        let truth = Matrix::from_fn(2, data.cols, |i, j| states[j + lag][i]);
        // least squares T with truth ≈ T X_est
        let t = &truth * pinv(&res.states, RankPolicy::default());
        let resid = (&truth - &t * &res.states).norm() / truth.norm();
        assert!(resid < 1e-6, "{resid}");
        let eig = recover_states_eigen(&data, None, RankPolicy::default()).unwrap();
        assert_eq!(eig.order, 2);
        assert!(max_principal_angle_sin(&eig.observability, &res.observability, RankPolicy::default()) < 1e-6);
        assert!(eig.reconstruction_residual < 1e-6);
    }

    #[test]
    fn first_order_system_has_rank_one_pi() {
        let model = match catalog_model("lti-n1").unwrap() {
            Model::StateSpace(m) => m,
            _ => unreachable!(),
        };
        let mut rng = seeded_rng(7);
        let (traj, _) = simulate_ss(&model, &uniform_inputs(&mut rng, 1, 40)).unwrap();
        let data = build_past_future(&traj, 2, &identity_kernel(1)).unwrap();
        let res = recover_states(&data, None, RankPolicy::default()).unwrap();
        assert_eq!(res.order, 1);
        let top = svd_trunc(&res.pi, RankPolicy::fixed(1)).u;
        assert!(max_principal_angle_sin(&res.observability, &top, RankPolicy::default()) < 1e-10);
    }

    #[test]
    fn order_estimation() {
        let p = RankPolicy::default();
        assert_eq!(estimate_order(&[3.0, 1.0, 1e-9, 1e-10], p), 2);
        assert_eq!(estimate_order(&[3.0, 1.0, 0.5], p), 3);
        assert_eq!(estimate_order(&[1.0, 0.5, 1e-16, 1e-17, 0.0], p), 2);
        assert_eq!(estimate_order(&[0.0, 0.0], p), 0);
    }

    #[test]
    fn membership_self_and_perturbed() {
        let (traj, _) = lti_n2(60, 8);
        let lag = 3;
        let data = build_past_future(&traj, lag, &identity_kernel(1)).unwrap();
        let opts = SubspaceOptions::default();
        let cand = traj.window(10, 2 * lag).unwrap();
        let v = membership_test(&data, &cand, opts).unwrap();
        assert!(v.feasible, "{v:?}");
        assert!(v.past_residual < 1e-8 && v.future_residual < 1e-8);
        let mut bad = cand.clone();
        bad.y[2 * lag - 1][0] += 1.0;
        let v = membership_test(&data, &bad, opts).unwrap();
        assert!(!v.feasible);
        assert!(v.future_residual > 1e-3);
        assert!(matches!(membership_test(&data, &traj.window(0, 5).unwrap(), opts), Err(Error::Shape(_))));
    }

    #[test]
    fn predictor_reproduces_fresh_trajectory() {
        let (traj, _) = lti_n2(60, 9);
        let (fresh, _) = lti_n2(20, 10);
        let lag = 3;
        let data = build_past_future(&traj, lag, &identity_kernel(1)).unwrap();
        let past = fresh.window(5, lag).unwrap();
        let pred = subspace_predict(&data, &past, &fresh.u[5 + lag..5 + 2 * lag], RankPolicy::default()).unwrap();
        for (i, y) in pred.output_vectors().iter().enumerate() {
            assert!((y - &fresh.y[5 + lag + i]).amax() < 1e-6);
        }
        let zero = Trajectory::new(vec![sv(0.0); lag], vec![sv(0.0); lag]).unwrap();
        let pred = subspace_predict(&data, &zero, &[sv(0.0), sv(0.0), sv(0.0)], RankPolicy::default()).unwrap();
        assert!(pred.output_vectors().iter().all(|y| y.amax() < 1e-12));
    }

    #[test]
    fn hankel_residual_separates_trajectories() {
        let (traj, _) = lti_n2(80, 11);
        let (fresh, _) = lti_n2(10, 12);
        let w = linalg::stack(&(0..4).flat_map(|t| [fresh.u[t].clone(), fresh.y[t].clone()]).collect::<Vec<_>>());
        assert!(hankel_residual(&traj, 4, &w, RankPolicy::default()).unwrap() < 1e-8);
        let mut bad = w.clone();
        bad[7] += 1.0;
        assert!(hankel_residual(&traj, 4, &bad, RankPolicy::default()).unwrap() > 1e-2);
    }
}
