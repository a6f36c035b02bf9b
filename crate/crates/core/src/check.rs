//! Seeded invariant suite behind the `check` command.
//!
//! Every scenario is drawn from a generator seeded with the run seed, so two
//! runs with the same seed produce the same summary bit for bit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::interp::{build_regressors, fit_min_norm, representer_check, sigma_certificate, InterpOptions, RegressionSample, SigmaClass};
use crate::kernels::{FeatureMap, FeatureTable, OperatorKernel, ScalarKernel};
use crate::linalg::{self, max_principal_angle_sin, pinv, Matrix, RankPolicy, Vector};
use crate::subspace::{
    build_past_future, feature_hankel, hankel_residual, input_rank_check, membership_test, recover_states,
    recover_states_eigen, subspace_predict, trajectory_hankel, SubspaceOptions,
};
use crate::systems::catalog::{catalog_model, random_lti_ar, random_state_space, Model};
use crate::systems::{realization, seeded_rng, simulate_ar, simulate_ss, ss_to_ar, uniform_inputs, StateSpaceModel, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CheckOptions {
    pub seed: u64,
    /// Deliberately corrupts the linear-oracle predictions so the harness
    /// itself can be seen to fail.
    pub inject_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantOutcome {
    pub name: String,
    pub passed: usize,
    pub total: usize,
    /// Largest observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
    /// Description of the first failure or error, if any.
    pub first_failure: Option<String>,
}

impl InvariantOutcome {
    pub fn ok(&self) -> bool {
        self.passed == self.total && self.total > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub seed: u64,
    pub inject_fault: bool,
    pub passed: bool,
    pub invariants: Vec<InvariantOutcome>,
}

/// Tallies `value <= tol` (or a boolean) over scenarios.
struct Tally {
    outcome: InvariantOutcome,
}

impl Tally {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            outcome: InvariantOutcome {
                name: name.into(),
                passed: 0,
                total: 0,
                worst: 0.0,
                tolerance,
                first_failure: None,
            },
        }
    }

    fn fail(&mut self, what: String) {
        self.outcome.total += 1;
        if self.outcome.first_failure.is_none() {
            self.outcome.first_failure = Some(what);
        }
    }

    /// Records `value`, which passes when `value <= tolerance`.
    fn value(&mut self, value: f64, context: &str) {
        let o = &mut self.outcome;
        if value.is_nan() || value > o.tolerance {
            self.fail(format!("{context}: {value:e}"));
        } else {
            o.total += 1;
            o.passed += 1;
        }
        if !value.is_nan() {
            self.outcome.worst = self.outcome.worst.max(value);
        }
    }

    fn flag(&mut self, ok: bool, context: &str) {
        if ok {
            self.outcome.total += 1;
            self.outcome.passed += 1;
        } else {
            self.fail(context.to_string());
        }
    }

    fn result<T>(&mut self, r: Result<T>, context: &str) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.fail(format!("{context}: {e}"));
                None
            }
        }
    }
}

fn sub_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k)
}

fn rand_vec<R: Rng>(rng: &mut R, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

fn rel_err(got: &Vector, want: &Vector) -> f64 {
    (got - want).norm() / want.norm().max(1e-12)
}

fn linear_oracle(opts: CheckOptions) -> InvariantOutcome {
    let mut tally = Tally::new("linear-oracle", 1e-8);
    let mut rng = seeded_rng(sub_seed(opts.seed, 1));
    for s in 0..5 {
        let (m, p, lag) = (rng.random_range(1..=2), rng.random_range(1..=2), rng.random_range(1..=2));
        let Some(model) = tally.result(random_lti_ar(&mut rng, m, p, lag), "model") else { continue };
        let u = uniform_inputs(&mut rng, m, 60);
        let Some(traj) = tally.result(Model::Ar(model).simulate(&u), "simulate") else { continue };
        let Some(samples) = tally.result(build_regressors(&traj, lag), "regressors") else { continue };
        let d = samples[0].z.len();
        let kernel = OperatorKernel::scalar_lift(ScalarKernel::Linear, d, p).expect("valid kernel");
        let Some(f) = tally.result(fit_min_norm(&samples, &kernel, InterpOptions::default()), "fit") else { continue };
        let z = Matrix::from_columns(&samples.iter().map(|s| s.z.clone()).collect::<Vec<_>>());
        let y = Matrix::from_columns(&samples.iter().map(|s| s.y_plus.clone()).collect::<Vec<_>>());
        let w = y * pinv(&z, RankPolicy::relative(1e-12).expect("positive"));
        for _ in 0..10 {
            let q = rand_vec(&mut rng, d);
            let Some(mut got) = tally.result(f.predict(&q), "predict") else { continue };
            if opts.inject_fault {
                got.add_scalar_mut(1e-3);
            }
            tally.value(rel_err(&got, &(&w * &q)), &format!("scenario {s}"));
        }
    }
    tally.outcome
}

/// Offline data from an explicit kernel expansion plus online points, some of
/// them copies of offline samples.
fn interp_scenario<R: Rng>(rng: &mut R) -> (OperatorKernel, Vec<RegressionSample>, Vec<RegressionSample>, f64) {
    let d = rng.random_range(3..=4);
    let p = rng.random_range(1..=2);
    let kernel = match rng.random_range(0..3) {
        0 => OperatorKernel::scalar_lift(ScalarKernel::gaussian(rng.random_range(0.5..1.5)).expect("positive"), d, p),
        1 => OperatorKernel::scalar_lift(ScalarKernel::fock_exp(3), d, p),
        _ => OperatorKernel::direct_sum(
            OperatorKernel::scalar_lift(ScalarKernel::gaussian(0.8).expect("positive"), d - 1, p).expect("valid"),
            OperatorKernel::scalar_lift(ScalarKernel::Linear, 1, p).expect("valid"),
        ),
    }
    .expect("valid kernel");
    let centers: Vec<Vector> = (0..4).map(|_| rand_vec(rng, d)).collect();
    let coefs: Vec<Vector> = (0..4).map(|_| rand_vec(rng, p)).collect();
    let f_star = |z: &Vector| kernel.kernel_row(z.as_slice(), &centers).expect("dims") * linalg::stack(&coefs);
    let f_star_norm = linalg::stack(&coefs).dot(&(kernel.gram_block(&centers).expect("dims") * linalg::stack(&coefs)));
    let n = rng.random_range(3..=10);
    let offline: Vec<RegressionSample> = (0..n)
        .map(|t| {
            let z = rand_vec(rng, d);
            RegressionSample { y_plus: f_star(&z), z, t }
        })
        .collect();
    let online: Vec<RegressionSample> = (0..4)
        .map(|i| {
            if i == 0 {
                let mut s = offline[rng.random_range(0..n)].clone();
                s.t = n + i;
                s
            } else {
                let z = rand_vec(rng, d);
                RegressionSample { y_plus: f_star(&z), z, t: n + i }
            }
        })
        .collect();
    (kernel, offline, online, f_star_norm)
}

fn interpolation_invariants(opts: CheckOptions) -> Vec<InvariantOutcome> {
    let mut psd = Tally::new("sigma-psd", 1e-10);
    let mut identity = Tally::new("error-identity", 1e-7);
    let mut zero = Tally::new("zero-sigma-exact", 1e-6);
    let mut monotone = Tally::new("monotone-norm", 1e-10);
    let mut bound = Tally::new("representer-bound", 1e-8);
    let mut rng = seeded_rng(sub_seed(opts.seed, 2));
    let options = InterpOptions::default();
    for s in 0..10 {
        let (kernel, offline, online, f_norm) = interp_scenario(&mut rng);
        let centers: Vec<Vector> = offline.iter().map(|x| x.z.clone()).collect();
        for _ in 0..5 {
            let q = rand_vec(&mut rng, kernel.domain_dim());
            if let Some(c) = psd.result(sigma_certificate(&kernel, &centers, &q, options), "sigma") {
                psd.value(-c.lambda_min / c.lambda_max.max(c.scale).max(f64::MIN_POSITIVE), &format!("scenario {s}"));
            }
        }
        for on in &online {
            let Some(r) = identity.result(representer_check(&offline, on, &kernel, Some(f_norm), options), "representer") else {
                continue;
            };
            monotone.value(r.norm_before - r.norm_after, &format!("scenario {s}"));
            if let Some(slack) = r.bound_slack {
                bound.value(r.norm_increment - slack, &format!("scenario {s}"));
            }
            match r.classification {
                SigmaClass::PositiveDefinite => {
                    identity.value(r.identity_residual / (1.0 + r.norm_after), &format!("scenario {s} t={}", r.t))
                }
                SigmaClass::Zero => {
                    let err: f64 = r.predicted.iter().zip(r.actual.as_deref().unwrap_or(&[])).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    let scale = 1.0 + on.y_plus.norm();
                    zero.value(err / scale, &format!("scenario {s} t={}", r.t));
                }
                SigmaClass::SingularNonzero => {}
            }
        }
    }
    vec![psd.outcome, identity.outcome, zero.outcome, monotone.outcome, bound.outcome]
}

fn conversion(opts: CheckOptions) -> InvariantOutcome {
    let mut tally = Tally::new("ss-to-ar", 1e-8);
    let mut rng = seeded_rng(sub_seed(opts.seed, 3));
    for s in 0..3 {
        let n = rng.random_range(1..=3);
        let model = random_state_space(&mut rng, n, 1, FeatureMap::Tanh { dim: 1 }, 0.8, true);
        let u = uniform_inputs(&mut rng, 1, 100);
        let Some((traj, _)) = tally.result(simulate_ss(&model, &u), "simulate") else { continue };
        let Some(ar) = tally.result(ss_to_ar(&model, n, RankPolicy::default()), "convert") else { continue };
        let Some(rebuilt) = tally.result(simulate_ar(&ar, &u, &traj.y[..n]), "simulate ar") else { continue };
        let err = traj.y.iter().zip(&rebuilt.y).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
        tally.value(err, &format!("model {s}"));
    }
    tally.outcome
}

fn trace_identity(opts: CheckOptions) -> InvariantOutcome {
    let mut tally = Tally::new("trace-identity", 1e-12);
    let mut rng = seeded_rng(sub_seed(opts.seed, 4));
    let u = uniform_inputs(&mut rng, 2, 20);
    let y: Vec<Vector> = u.iter().map(|x| Vector::from_element(1, x.sum())).collect();
    let traj = Trajectory::new(u.clone(), y).expect("consistent");
    let tanh = FeatureMap::Tanh { dim: 2 };
    let maps = [
        FeatureMap::Identity { dim: 2 },
        tanh.clone(),
        FeatureMap::Polynomial { dim: 2, degree: 2 },
        FeatureMap::Table(FeatureTable::tabulate(&tanh, &u).expect("finite")),
    ];
    let lag = 2;
    for map in maps {
        let Some(data) = tally.result(build_past_future(&traj, lag, &OperatorKernel::rank_one(map.clone())), "grams") else { continue };
        let Some(h) = tally.result(feature_hankel(&u[..data.cols + 2 * lag - 1], &map, 2 * lag), "features") else { continue };
        let q = map.output_dim();
        let up = h.rows(0, q * lag).clone_owned();
        let uf = h.rows(q * lag, q * lag).clone_owned();
        let err = (up.transpose() * &up - &data.k_past_u).amax().max((uf.transpose() * &uf - &data.k_future_u).amax());
        tally.value(err, &format!("{map:?}"));
    }
    tally.outcome
}

fn state_space_of(name: &str) -> StateSpaceModel {
    match catalog_model(name).expect("catalog name") {
        Model::StateSpace(m) => m,
        Model::Ar(_) => unreachable!("{name} is a state-space model"),
    }
}

/// Catalog scenarios for the factorization and route checks.
fn subspace_scenarios(seed: u64) -> Vec<(String, StateSpaceModel, Trajectory, Vec<Vector>, OperatorKernel)> {
    let mut rng = seeded_rng(seed);
    let mut out = Vec::new();
    for name in ["lti-n2", "lti-n3", "hammerstein-tanh"] {
        let model = state_space_of(name);
        let u = uniform_inputs(&mut rng, 1, 120);
        let (traj, states) = simulate_ss(&model, &u).expect("valid inputs");
        let kernel = match name {
            "hammerstein-tanh" => OperatorKernel::rank_one(FeatureMap::Table(
                FeatureTable::tabulate(&FeatureMap::Tanh { dim: 1 }, &u).expect("finite"),
            )),
            _ => OperatorKernel::rank_one(FeatureMap::Identity { dim: 1 }),
        };
        out.push((name.to_string(), model, traj, states, kernel));
    }
    out
}

fn factorization(opts: CheckOptions) -> Vec<InvariantOutcome> {
    let mut fact = Tally::new("pi-factorization", 1e-6);
    let mut sim = Tally::new("state-similarity", 1e-6);
    let mut route = Tally::new("eigen-route", 1e-6);
    let policy = RankPolicy::default();
    for (name, model, traj, states, kernel) in subspace_scenarios(sub_seed(opts.seed, 5)) {
        let n = model.state_dim();
        let lag = n + 1;
        let Some(rank) = fact.result(input_rank_check(&traj, lag, n, &kernel, policy), &name) else { continue };
        if !rank.satisfied {
            fact.fail(format!("{name}: input rank {} of {}", rank.rank, rank.required));
            continue;
        }
        let Some(data) = fact.result(build_past_future(&traj, lag, &kernel), &name) else { continue };
        let Some(svd) = fact.result(recover_states(&data, None, policy), &name) else { continue };
        fact.flag(svd.order == n, &format!("{name}: order {} != {n}", svd.order));
        let real = realization(&model, lag, policy).expect("valid lag");
        let truth = Matrix::from_fn(n, data.cols, |i, j| states[j + lag][i]);
        let pi_norm = svd.pi.norm();
        fact.value((&svd.pi - &real.obsv * &truth).norm() / pi_norm, &name);
        let t = &truth * pinv(&svd.states, policy);
        sim.value((&truth - t * &svd.states).norm() / truth.norm(), &name);
        if let Some(eig) = route.result(recover_states_eigen(&data, Some(n), policy), &name) {
            route.value(max_principal_angle_sin(&eig.observability, &svd.observability, policy), &name);
        }
    }
    vec![fact.outcome, sim.outcome, route.outcome]
}

fn membership(opts: CheckOptions) -> Vec<InvariantOutcome> {
    let mut accept = Tally::new("membership-accept", 1e-6);
    let mut reject = Tally::new("membership-reject", 1e-6);
    let mut predict = Tally::new("subspace-predictor", 1e-6);
    let mut rng = seeded_rng(sub_seed(opts.seed, 6));
    let model = state_space_of("lti-n2");
    let lag = 3;
    let (traj, _) = simulate_ss(&model, &uniform_inputs(&mut rng, 1, 100)).expect("valid inputs");
    let kernel = OperatorKernel::rank_one(FeatureMap::Identity { dim: 1 });
    let data = build_past_future(&traj, lag, &kernel).expect("long enough");
    let options = SubspaceOptions::default();
    let rms = (traj.y.iter().map(|y| y.norm_squared()).sum::<f64>() / traj.len() as f64).sqrt();
    for i in 0..10 {
        let fresh = model.with_initial_state(rand_vec(&mut rng, 2)).expect("dims");
        let (cand, _) = simulate_ss(&fresh, &uniform_inputs(&mut rng, 1, 2 * lag)).expect("valid inputs");
        if let Some(v) = accept.result(membership_test(&data, &cand, options), "membership") {
            accept.value(v.past_residual.max(v.future_residual), &format!("candidate {i}"));
        }
        if let Some(pred) = predict.result(subspace_predict(&data, &cand.window(0, lag).expect("len"), &cand.u[lag..], options.policy), "predict") {
            let err = pred.output_vectors().iter().zip(&cand.y[lag..]).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
            predict.value(err, &format!("candidate {i}"));
        }
        let mut bad = cand.clone();
        let k = rng.random_range(0..2 * lag);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        bad.y[k][0] += sign * 1e-2 * rms;
        if let Some(v) = reject.result(membership_test(&data, &bad, options), "membership") {
            reject.flag(!v.feasible, &format!("perturbed candidate {i} accepted"));
        }
    }
    vec![accept.outcome, reject.outcome, predict.outcome]
}

fn hankel_span(opts: CheckOptions) -> Vec<InvariantOutcome> {
    let mut inside = Tally::new("hankel-span", 1e-8);
    let mut outside = Tally::new("hankel-reject", f64::INFINITY);
    let mut rng = seeded_rng(sub_seed(opts.seed, 7));
    let model = state_space_of("lti-n2");
    let depth = 4;
    let (traj, _) = simulate_ss(&model, &uniform_inputs(&mut rng, 1, 100)).expect("valid inputs");
    let policy = RankPolicy::default();
    for i in 0..3 {
        let fresh = model.with_initial_state(rand_vec(&mut rng, 2)).expect("dims");
        let (cand, _) = simulate_ss(&fresh, &uniform_inputs(&mut rng, 1, 10)).expect("valid inputs");
        let h = trajectory_hankel(&cand, depth).expect("long enough");
        for col in h.column_iter() {
            if let Some(r) = inside.result(hankel_residual(&traj, depth, &col.clone_owned(), policy), "residual") {
                inside.value(r, &format!("trajectory {i}"));
            }
        }
        let noise = rand_vec(&mut rng, h.nrows());
        if let Some(r) = outside.result(hankel_residual(&traj, depth, &noise, policy), "residual") {
            outside.flag(r > 1e-2, &format!("random vector {i} has residual {r:e}"));
        }
    }
    vec![inside.outcome, outside.outcome]
}

pub fn run_check(opts: CheckOptions) -> CheckSummary {
    let mut invariants = vec![linear_oracle(opts)];
    invariants.extend(interpolation_invariants(opts));
    invariants.push(conversion(opts));
    invariants.push(trace_identity(opts));
    invariants.extend(factorization(opts));
    invariants.extend(membership(opts));
    invariants.extend(hankel_span(opts));
    for inv in &mut invariants {
        if !inv.tolerance.is_finite() {
            inv.tolerance = 0.0;
        }
    }
    CheckSummary {
        seed: opts.seed,
        inject_fault: opts.inject_fault,
        passed: invariants.iter().all(InvariantOutcome::ok),
        invariants,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_run_passes_and_fault_fails() {
        let s = run_check(CheckOptions { seed: 1, inject_fault: false });
        for inv in &s.invariants {
            assert!(inv.ok(), "{inv:?}");
        }
        assert!(s.passed);
        let f = run_check(CheckOptions { seed: 1, inject_fault: true });
        assert!(!f.passed);
        assert!(!f.invariants[0].ok());
    }
}
