use serde::{Deserialize, Serialize};

use super::ar::{ArModel, Forcing};
use super::Trajectory;
use crate::error::{Error, Result};
use crate::kernels::FeatureMap;
use crate::linalg::{hstack, kron, pinv, rank, Matrix, RankPolicy, Vector};

/// Static input nonlinearity of a Hammerstein model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    /// One map `phi` feeding both the state and the output equation.
    Shared(FeatureMap),
    /// `psi1` drives the state, `psi2` the direct feedthrough.
    Split { psi1: FeatureMap, psi2: FeatureMap },
}

impl Nonlinearity {
    pub fn state_map(&self) -> &FeatureMap {
        match self {
            Nonlinearity::Shared(phi) => phi,
            Nonlinearity::Split { psi1, .. } => psi1,
        }
    }

    pub fn output_map(&self) -> &FeatureMap {
        match self {
            Nonlinearity::Shared(phi) => phi,
            Nonlinearity::Split { psi2, .. } => psi2,
        }
    }
}

/// `x_{t+1} = A x_t + B psi1(u_t)`, `y_t = C x_t + D psi2(u_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub nonlinearity: Nonlinearity,
    pub x0: Vector,
}

impl StateSpaceModel {
    pub fn new(a: Matrix, b: Matrix, c: Matrix, d: Matrix, nonlinearity: Nonlinearity, x0: Vector) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Shape(format!("A must be square and nonempty, got {:?}", a.shape())));
        }
        let q = b.ncols();
        let p = c.nrows();
        if b.nrows() != n || c.ncols() != n || d.shape() != (p, q) || x0.len() != n {
            return Err(Error::Shape(format!(
                "incompatible shapes A {:?}, B {:?}, C {:?}, D {:?}, x0 {}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape(),
                x0.len()
            )));
        }
        let (f1, f2) = (nonlinearity.state_map(), nonlinearity.output_map());
        if f1.output_dim() != q || f2.output_dim() != q || f1.input_dim() != f2.input_dim() {
            return Err(Error::Shape(format!(
                "feature maps must send R^m to R^{q}, got {}->{} and {}->{}",
                f1.input_dim(),
                f1.output_dim(),
                f2.input_dim(),
                f2.output_dim()
            )));
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            nonlinearity,
            x0,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.nonlinearity.state_map().input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// Same model started from another initial state.
    pub fn with_initial_state(&self, x0: Vector) -> Result<Self> {
        if x0.len() != self.state_dim() {
            return Err(Error::Shape(format!(
                "initial state has dimension {}, expected {}",
                x0.len(),
                self.state_dim()
            )));
        }
        Ok(Self { x0, ..self.clone() })
    }
}

/// Simulates the model. Returns the trajectory and the states `x_0..x_{T-1}`.
pub fn simulate_ss(model: &StateSpaceModel, u: &[Vector]) -> Result<(Trajectory, Vec<Vector>)> {
    let m = model.input_dim();
    if let Some(bad) = u.iter().position(|v| v.len() != m) {
        return Err(Error::Shape(format!(
            "input {bad} has dimension {}, expected {m}",
            u[bad].len()
        )));
    }
    let psi1 = model.nonlinearity.state_map();
    let psi2 = model.nonlinearity.output_map();
    let mut x = model.x0.clone();
    let mut states = Vec::with_capacity(u.len());
    let mut ys = Vec::with_capacity(u.len());
    for ut in u {
        let v1 = psi1.eval(ut.as_slice());
        let v2 = psi2.eval(ut.as_slice());
        ys.push(&model.c * &x + &model.d * v2);
        let next = &model.a * &x + &model.b * v1;
        states.push(std::mem::replace(&mut x, next));
    }
    Ok((Trajectory::new(u.to_vec(), ys)?, states))
}

/// Structured matrices of an `L`-step realization.
#[derive(Debug, Clone)]
pub struct RealizationMatrices {
    /// `[B, AB, ..., A^{L-1}B]`
    pub ctrb: Matrix,
    /// `[C; CA; ...; CA^{L-1}]`
    pub obsv: Matrix,
    /// `[A^{L-1}B, ..., AB, B]`
    pub rev_ctrb: Matrix,
    /// Strictly lower block Toeplitz matrix of Markov parameters.
    pub toeplitz_mod: Matrix,
    /// `toeplitz_mod + I_L ⊗ D`
    pub toeplitz: Matrix,
    /// `M_j = C A^j B` for `j = 0..L`.
    pub markov: Vec<Matrix>,
    pub obsv_rank: usize,
}

pub fn realization(model: &StateSpaceModel, lag: usize, policy: RankPolicy) -> Result<RealizationMatrices> {
    if lag == 0 {
        return Err(Error::Contract("realization depth must be at least 1".into()));
    }
    let (a, b, c, d) = (&model.a, &model.b, &model.c, &model.d);
    let (n, q, p) = (model.state_dim(), model.feature_dim(), model.output_dim());

    let mut powers = Vec::with_capacity(lag + 1);
    powers.push(Matrix::identity(n, n));
    for k in 1..=lag {
        let next = a * &powers[k - 1];
        powers.push(next);
    }
    let ab: Vec<Matrix> = powers[..lag].iter().map(|ak| ak * b).collect();
    let markov: Vec<Matrix> = ab.iter().map(|x| c * x).collect();

    let ctrb = hstack(&ab.iter().collect::<Vec<_>>());
    let rev_ctrb = hstack(&ab.iter().rev().collect::<Vec<_>>());
    let mut obsv = Matrix::zeros(p * lag, n);
    for k in 0..lag {
        obsv.view_mut((k * p, 0), (p, n)).copy_from(&(c * &powers[k]));
    }
    let mut toeplitz_mod = Matrix::zeros(p * lag, q * lag);
    for i in 0..lag {
        for j in 0..i {
            toeplitz_mod
                .view_mut((i * p, j * q), (p, q))
                .copy_from(&markov[i - 1 - j]);
        }
    }
    let toeplitz = &toeplitz_mod + kron(&Matrix::identity(lag, lag), d);
    let obsv_rank = rank(&obsv, policy);
    Ok(RealizationMatrices {
        ctrb,
        obsv,
        rev_ctrb,
        toeplitz_mod,
        toeplitz,
        markov,
        obsv_rank,
    })
}

/// Converts a Hammerstein state-space model into an equivalent autoregressive
/// model of lag `L`.
///
/// With `Q = C A^L O_L†` partitioned as `[Q_{L-1}, ..., Q_0]`, the block that
/// multiplies `y_{t-k}` becomes `-A_k`, and the forcing is
/// `S = [M - Q T̃_L, -Q (I_L ⊗ D), D]` applied to stacked features.
pub fn ss_to_ar(model: &StateSpaceModel, lag: usize, policy: RankPolicy) -> Result<ArModel> {
    let real = realization(model, lag, policy)?;
    let n = model.state_dim();
    if real.obsv_rank != n {
        return Err(Error::Observability {
            rank: real.obsv_rank,
            n,
        });
    }
    let (p, q) = (model.output_dim(), model.feature_dim());
    let a_pow_l = (0..lag).fold(Matrix::identity(n, n), |acc, _| &model.a * acc);
    let qmat = &model.c * a_pow_l * pinv(&real.obsv, policy);

    // Y_t stacks y_{t-L}, ..., y_{t-1}; the block at position L-k meets y_{t-k}
    let lags: Vec<Matrix> = (1..=lag)
        .map(|k| -qmat.columns((lag - k) * p, p).clone_owned())
        .collect();

    let m_rev = hstack(&real.markov.iter().rev().collect::<Vec<_>>());
    let first = m_rev - &qmat * &real.toeplitz_mod;
    let second = -(&qmat * kron(&Matrix::identity(lag, lag), &model.d));
    let s = hstack(&[&first, &second, &model.d]);
    debug_assert_eq!(s.shape(), (p, q * (2 * lag + 1)));

    let forcing = Forcing::Hammerstein {
        s,
        psi1: model.nonlinearity.state_map().clone(),
        psi2: model.nonlinearity.output_map().clone(),
    };
    ArModel::new(lags, forcing, model.input_dim(), p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::simulate_ar;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m1(x: f64) -> Matrix {
        Matrix::from_element(1, 1, x)
    }

    fn scalar_model(a: f64, b: f64, c: f64, d: f64, x0: f64) -> StateSpaceModel {
        StateSpaceModel::new(
            m1(a),
            m1(b),
            m1(c),
            m1(d),
            Nonlinearity::Shared(FeatureMap::Identity { dim: 1 }),
            Vector::from_element(1, x0),
        )
        .unwrap()
    }

    #[test]
    fn static_system() {
        let model = StateSpaceModel::new(
            Matrix::zeros(2, 2),
            Matrix::zeros(2, 1),
            Matrix::zeros(1, 2),
            m1(2.0),
            Nonlinearity::Shared(FeatureMap::Tanh { dim: 1 }),
            Vector::zeros(2),
        )
        .unwrap();
        let u: Vec<Vector> = [0.1, -0.5, 2.0].iter().map(|&x| Vector::from_element(1, x)).collect();
        let (traj, _) = simulate_ss(&model, &u).unwrap();
        for (y, u) in traj.y.iter().zip(&u) {
            assert_eq!(y[0], 2.0 * u[0].tanh());
        }
    }

    #[test]
    fn homogeneous_decay() {
        let model = scalar_model(0.9, 1.0, 1.0, 0.0, 1.0);
        let u = vec![Vector::zeros(1); 20];
        let (traj, states) = simulate_ss(&model, &u).unwrap();
        for t in 0..20 {
            assert!((traj.y[t][0] - 0.9f64.powi(t as i32)).abs() < 1e-15);
            assert_eq!(states[t][0], traj.y[t][0]);
        }
    }

    #[test]
    fn realization_single_step() {
        let model = scalar_model(0.7, 2.0, 3.0, 0.5, 0.0);
        let r = realization(&model, 1, RankPolicy::default()).unwrap();
        assert_eq!(r.obsv, m1(3.0));
        assert_eq!(r.ctrb, m1(2.0));
        assert_eq!(r.rev_ctrb, m1(2.0));
        assert_eq!(r.toeplitz_mod, m1(0.0));
        assert_eq!(r.toeplitz, m1(0.5));
    }

    #[test]
    fn realization_identity_dynamics() {
        let i2 = Matrix::identity(2, 2);
        let model = StateSpaceModel::new(
            i2.clone(),
            i2.clone(),
            i2.clone(),
            Matrix::zeros(2, 2),
            Nonlinearity::Shared(FeatureMap::Identity { dim: 2 }),
            Vector::zeros(2),
        )
        .unwrap();
        let r = realization(&model, 2, RankPolicy::default()).unwrap();
        assert_eq!(r.obsv.rows(0, 2), i2.rows(0, 2));
        assert_eq!(r.obsv.rows(2, 2), i2.rows(0, 2));
        assert_eq!(r.markov[0], i2);
        assert_eq!(r.markov[1], i2);
        assert_eq!(r.obsv_rank, 2);
    }

    #[test]
    fn scalar_conversion_by_hand() {
        let (a, b) = (0.6, 1.5);
        let model = scalar_model(a, b, 1.0, 0.0, 0.0);
        let ar = ss_to_ar(&model, 1, RankPolicy::default()).unwrap();
        assert!((ar.lags[0][(0, 0)] + a).abs() < 1e-15);
        let Forcing::Hammerstein { s, .. } = &ar.forcing else {
            panic!("expected Hammerstein forcing")
        };
        assert!((s[(0, 0)] - b).abs() < 1e-15);
        assert_eq!(s[(0, 1)], 0.0);
        assert_eq!(s[(0, 2)], 0.0);
    }

    #[test]
    fn zero_feedthrough_drops_psi2_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Matrix::from_fn(2, 2, |_, _| rng.random_range(-0.5..0.5));
        let model = StateSpaceModel::new(
            a,
            Matrix::from_fn(2, 1, |_, _| rng.random_range(-1.0..1.0)),
            Matrix::from_fn(1, 2, |_, _| rng.random_range(-1.0..1.0)),
            Matrix::zeros(1, 1),
            Nonlinearity::Split {
                psi1: FeatureMap::Tanh { dim: 1 },
                psi2: FeatureMap::Polynomial { dim: 1, degree: 1 },
            },
            Vector::zeros(2),
        )
        .unwrap();
        let ar = ss_to_ar(&model, 2, RankPolicy::default()).unwrap();
        let Forcing::Hammerstein { s, .. } = &ar.forcing else {
            panic!("expected Hammerstein forcing")
        };
        assert!(s.columns(2, 3).amax() == 0.0);
    }

    #[test]
    fn unobservable_model_rejected() {
        let model = StateSpaceModel::new(
            Matrix::identity(2, 2),
            Matrix::from_row_slice(2, 1, &[1.0, 1.0]),
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            m1(0.0),
            Nonlinearity::Shared(FeatureMap::Identity { dim: 1 }),
            Vector::zeros(2),
        )
        .unwrap();
        assert!(matches!(
            ss_to_ar(&model, 2, RankPolicy::default()),
            Err(Error::Observability { rank: 1, n: 2 })
        ));
    }

    #[test]
    fn conversion_reproduces_simulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 3;
        let raw = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let a = &raw * (0.85 / crate::linalg::singular_values(&raw)[0]);
        let model = StateSpaceModel::new(
            a,
            Matrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0)),
            Matrix::from_fn(1, n, |_, _| rng.random_range(-1.0..1.0)),
            m1(0.4),
            Nonlinearity::Split {
                psi1: FeatureMap::Tanh { dim: 1 },
                psi2: FeatureMap::Polynomial { dim: 1, degree: 1 },
            },
            Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let u = crate::systems::uniform_inputs(&mut rng, 1, 200);
        let (traj, _) = simulate_ss(&model, &u).unwrap();
        let ar = ss_to_ar(&model, n, RankPolicy::default()).unwrap();
        let rebuilt = simulate_ar(&ar, &u, &traj.y[..n]).unwrap();
        let err = traj
            .y
            .iter()
            .zip(&rebuilt.y)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "max error {err}");
    }
}
