use nlbehavior::interp::{build_regressors, fit_min_norm, sigma_certificate, InterpOptions, RegressionSample};
use nlbehavior::io::{read_trajectory_csv, write_trajectory_csv};
use nlbehavior::kernels::{FeatureMap, FeatureTable, OperatorKernel, ScalarKernel};
use nlbehavior::linalg::*;
use nlbehavior::subspace::{build_past_future, oblique_pi};
use nlbehavior::systems::catalog::{catalog_model, random_state_space, Model, CATALOG_NAMES};
use nlbehavior::systems::*;
use proptest::prelude::*;
use rand::Rng;

fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn points(n: usize, d: usize, rng: &mut impl Rng) -> Vec<Vector> {
    (0..n).map(|_| Vector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).collect()
}

fn kernel_variant(which: u8, d: usize, p: usize) -> OperatorKernel {
    match which % 6 {
        0 => OperatorKernel::scalar_lift(ScalarKernel::Linear, d, p).unwrap(),
        1 => OperatorKernel::scalar_lift(ScalarKernel::gaussian(0.7).unwrap(), d, p).unwrap(),
        2 => OperatorKernel::scalar_lift(ScalarKernel::fock(vec![1.0, 2.0, 0.5, 1.0]).unwrap(), d, p).unwrap(),
        3 => OperatorKernel::scalar_lift(ScalarKernel::Polynomial { degree: 3 }, d, p).unwrap(),
        4 => OperatorKernel::direct_sum(
            OperatorKernel::scalar_lift(ScalarKernel::gaussian(1.0).unwrap(), 1, p).unwrap(),
            OperatorKernel::scalar_lift(ScalarKernel::Linear, d - 1, p).unwrap(),
        )
        .unwrap(),
        _ => OperatorKernel::rank_one(FeatureMap::Polynomial { dim: d, degree: 2 }),
    }
}

fn min_eig_ratio(k: &Matrix) -> f64 {
    let e = eig_sym(k).unwrap();
    let top = e.values[0].abs().max(f64::MIN_POSITIVE);
    e.values.last().unwrap() / top
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hankel_rows_are_shifts(seed in any::<u64>(), t in 4usize..20, q in 1usize..3, depth in 1usize..4) {
        prop_assume!(depth <= t);
        let mut rng = seeded_rng(seed);
        let w = points(t, q, &mut rng);
        let h = hankel(&w, depth).unwrap();
        for i in 0..depth.min(t - depth + 1) {
            let shifted = hankel(&w[i..], depth).unwrap();
            let cols = shifted.ncols();
            prop_assert_eq!(
                h.view((i * q, 0), (q, cols)).clone_owned(),
                shifted.view((0, 0), (q, cols)).clone_owned()
            );
        }
    }

    #[test]
    fn pinv_is_an_involution_at_exact_rank(seed in any::<u64>(), rows in 2usize..8, cols in 2usize..8, r in 1usize..4) {
        let r = r.min(rows).min(cols);
        let mut rng = seeded_rng(seed);
        let m = random(rows, r, &mut rng) * random(r, cols, &mut rng);
        let s = singular_values(&m);
        // keep away from near-degenerate factors
        prop_assume!(s[r - 1] > 1e-3 * s[0]);
        let policy = RankPolicy::fixed(r);
        let mp = pinv(&m, policy);
        prop_assert!((pinv(&mp, policy) - &m).amax() <= 1e-9 * (1.0 + m.amax()));
        prop_assert!((&m * &mp * &m - &m).amax() <= 1e-10 * (1.0 + m.amax()));
        prop_assert!((&mp * &m * &mp - &mp).amax() <= 1e-10 * (1.0 + mp.amax()));
        let sym = &m * &mp;
        prop_assert!((&sym - sym.transpose()).amax() < 1e-10);
    }

    #[test]
    fn oblique_projection_lands_in_row_space_of_c(seed in any::<u64>(), k in 8usize..20) {
        let mut rng = seeded_rng(seed);
        let a = random(2, k, &mut rng);
        let b = random(2, k, &mut rng);
        let c = random(3, k, &mut rng);
        let o = oblique_project(&a, &b, &c, RankPolicy::default()).unwrap();
        let proj = &o * pinv(&c, RankPolicy::default()) * &c;
        prop_assert!((&o - proj).norm() <= 1e-9 * (1.0 + o.norm()));
    }

    #[test]
    fn factorizations_are_deterministic(seed in any::<u64>(), n in 1usize..9) {
        let mut rng = seeded_rng(seed);
        let x = random(n, n + 2, &mut rng);
        let g = &x * x.transpose();
        let e1 = eig_sym(&g).unwrap();
        let e2 = eig_sym(&g.clone()).unwrap();
        prop_assert_eq!(&e1.values, &e2.values);
        prop_assert_eq!(&e1.vectors, &e2.vectors);
        let s1 = svd_trunc(&x, RankPolicy::default());
        let s2 = svd_trunc(&x.clone(), RankPolicy::default());
        prop_assert_eq!(s1.u, s2.u);
        prop_assert_eq!(s1.s, s2.s);
        prop_assert_eq!(s1.v, s2.v);
    }

    #[test]
    fn block_grams_are_positive(seed in any::<u64>(), which in 0u8..6, n in 1usize..13, d in 2usize..4, p in 1usize..3) {
        let mut rng = seeded_rng(seed);
        let k = kernel_variant(which, d, p);
        let g = k.gram_block(&points(n, d, &mut rng)).unwrap();
        prop_assert!(min_eig_ratio(&g) >= -1e-10);
        prop_assert_eq!(&g, &g.transpose());
    }

    #[test]
    fn scalar_lift_gram_is_kronecker(seed in any::<u64>(), which in 0u8..5, n in 1usize..10, p in 1usize..4) {
        let mut rng = seeded_rng(seed);
        let k = kernel_variant(which, 3, p);
        let z = points(n, 3, &mut rng);
        let g = k.gram_block(&z).unwrap();
        prop_assert_eq!(g, kron(&k.scalar_gram(&z).unwrap(), &Matrix::identity(p, p)));
    }

    #[test]
    fn fock_series_approaches_exponential(seed in any::<u64>(), d in 1usize..5) {
        let mut rng = seeded_rng(seed);
        let mut x = points(2, d, &mut rng);
        for v in &mut x {
            let n = v.norm();
            if n > 1.0 {
                *v /= n;
            }
        }
        let k = ScalarKernel::fock_exp(20);
        let got = k.eval(x[0].as_slice(), x[1].as_slice());
        prop_assert!((got - x[0].dot(&x[1]).exp()).abs() < 1e-12);
    }

    #[test]
    fn trace_inner_is_symmetric(seed in any::<u64>(), m in 1usize..4, which in 0u8..3) {
        let mut rng = seeded_rng(seed);
        let map = match which {
            0 => FeatureMap::Identity { dim: m },
            1 => FeatureMap::Tanh { dim: m },
            _ => FeatureMap::Polynomial { dim: m, degree: 3 },
        };
        let k = OperatorKernel::rank_one(map);
        let u = points(2, m, &mut rng);
        prop_assert_eq!(
            k.trace_inner(u[0].as_slice(), u[1].as_slice()).unwrap(),
            k.trace_inner(u[1].as_slice(), u[0].as_slice()).unwrap()
        );
    }

    #[test]
    fn volterra_terms_scale_linearly(seed in any::<u64>(), len in 1usize..4, alpha in -3.0f64..3.0) {
        let mut rng = seeded_rng(seed);
        let h: Vec<Vec<f64>> = (1..=3).map(|k| (0..len.pow(k)).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let u: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let base = VolterraFunction::new(0.4, h.clone(), len).unwrap();
        let f0 = eval_volterra(&base, &u).unwrap();
        for k in 1..=3 {
            let mut hk = h.clone();
            hk[k - 1].iter_mut().for_each(|x| *x *= alpha);
            let scaled = VolterraFunction::new(0.4, hk, len).unwrap();
            let want = f0 + (alpha - 1.0) * base.term(k, &u);
            prop_assert!((eval_volterra(&scaled, &u).unwrap() - want).abs() < 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn toeplitz_blocks_are_markov_parameters(seed in any::<u64>(), n in 1usize..4, lag in 1usize..5) {
        let mut rng = seeded_rng(seed);
        let model = random_state_space(&mut rng, n, 2, FeatureMap::Polynomial { dim: 1, degree: 2 }, 0.8, true);
        let real = realization(&model, lag, RankPolicy::default()).unwrap();
        let (p, q) = (2, 2);
        let mut apow = Matrix::identity(n, n);
        let mut markov = Vec::new();
        for _ in 0..lag {
            markov.push(&model.c * &apow * &model.b);
            apow = &model.a * apow;
        }
        for i in 0..lag {
            for j in 0..lag {
                let blk = real.toeplitz_mod.view((i * p, j * q), (p, q)).clone_owned();
                if i > j {
                    prop_assert!((blk - &markov[i - j - 1]).amax() < 1e-14);
                } else {
                    prop_assert_eq!(blk, Matrix::zeros(p, q));
                }
                let full = real.toeplitz.view((i * p, j * q), (p, q)).clone_owned();
                let want = if i == j { model.d.clone() } else if i > j { markov[i - j - 1].clone() } else { Matrix::zeros(p, q) };
                prop_assert!((full - want).amax() < 1e-14);
            }
        }
    }

    #[test]
    fn converted_model_reproduces_outputs(seed in any::<u64>(), n in 1usize..4, p in 1usize..3, tanh in any::<bool>()) {
        let mut rng = seeded_rng(seed);
        let phi = if tanh { FeatureMap::Tanh { dim: 1 } } else { FeatureMap::Identity { dim: 1 } };
        let model = random_state_space(&mut rng, n, p, phi, 0.9, true);
        let lag = n;
        let real = realization(&model, lag, RankPolicy::default()).unwrap();
        let s = singular_values(&real.obsv);
        prop_assume!(real.obsv_rank == n && s[n - 1] > 1e-3 * s[0]);
        let ar = ss_to_ar(&model, lag, RankPolicy::default()).unwrap();
        let u = uniform_inputs(&mut rng, 1, 80);
        let (truth, _) = simulate_ss(&model, &u).unwrap();
        let sim = simulate_ar(&ar, &u, &truth.y[..lag]).unwrap();
        for t in lag..u.len() {
            prop_assert!((&sim.y[t] - &truth.y[t]).amax() < 1e-8, "t = {}", t);
        }
    }

    #[test]
    fn norms_grow_with_data(seed in any::<u64>(), n in 2usize..9, p in 1usize..3) {
        let mut rng = seeded_rng(seed);
        let kernel = OperatorKernel::scalar_lift(ScalarKernel::gaussian(1.0).unwrap(), 4, p).unwrap();
        let samples: Vec<RegressionSample> = points(n + 1, 4, &mut rng)
            .into_iter()
            .enumerate()
            .map(|(t, z)| RegressionSample { z, y_plus: Vector::from_fn(p, |_, _| rng.random_range(-1.0..1.0)), t })
            .collect();
        let before = fit_min_norm(&samples[..n], &kernel, InterpOptions::default()).unwrap();
        let after = fit_min_norm(&samples, &kernel, InterpOptions::default()).unwrap();
        prop_assume!(after.gram_condition() < 1e6);
        prop_assert!(after.norm_sq() >= before.norm_sq() - 1e-10);
    }

    #[test]
    fn sigma_is_positive_semidefinite(seed in any::<u64>(), which in 0u8..6, n in 1usize..8) {
        let mut rng = seeded_rng(seed);
        let k = kernel_variant(which, 3, 2);
        let centers = points(n, 3, &mut rng);
        for z in points(20, 3, &mut rng) {
            let cert = sigma_certificate(&k, &centers, &z, InterpOptions::default()).unwrap();
            let scale = cert.lambda_max.max(cert.scale).max(f64::MIN_POSITIVE);
            prop_assert!(cert.lambda_min >= -1e-10 * scale, "{} vs {}", cert.lambda_min, scale);
            prop_assert!((&cert.sigma - cert.sigma.transpose()).amax() <= 1e-12 * (1.0 + scale));
        }
    }

    #[test]
    fn prediction_is_linear_in_the_kernel_row(seed in any::<u64>(), which in 0u8..6, n in 2usize..8) {
        let mut rng = seeded_rng(seed);
        let k = kernel_variant(which, 3, 2);
        let p = k.output_dim();
        let samples: Vec<RegressionSample> = points(n, 3, &mut rng)
            .into_iter()
            .enumerate()
            .map(|(t, z)| RegressionSample { z, y_plus: Vector::from_fn(p, |_, _| rng.random_range(-1.0..1.0)), t })
            .collect();
        let f = fit_min_norm(&samples, &k, InterpOptions::default()).unwrap();
        let coef = stack(&f.coefficients);
        let queries = points(4, 3, &mut rng);
        let c: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut row = Matrix::zeros(p, p * n);
        let mut want = Vector::zeros(p);
        for (cj, z) in c.iter().zip(&queries) {
            row += k.kernel_row(z.as_slice(), &f.centers).unwrap() * *cj;
            want += f.predict(z).unwrap() * *cj;
        }
        prop_assert!((row * coef - &want).amax() <= 1e-10 * (1.0 + want.amax()));
    }

    #[test]
    fn csv_round_trip_is_exact(
        u in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL, 0..40),
        m in 1usize..3,
    ) {
        let t = u.len() / (m + 1);
        let traj = Trajectory::new(
            (0..t).map(|i| Vector::from_column_slice(&u[i * (m + 1)..i * (m + 1) + m])).collect(),
            (0..t).map(|i| Vector::from_element(1, u[i * (m + 1) + m])).collect(),
        ).unwrap();
        prop_assume!(t > 0);
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let (back, _) = read_trajectory_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, traj);
    }

    #[test]
    fn pi_rank_is_bounded_by_columns(seed in any::<u64>(), t in 12usize..40, lag in 1usize..4) {
        let mut rng = seeded_rng(seed);
        let model = catalog_model("hammerstein-tanh").unwrap();
        let traj = model.simulate(&uniform_inputs(&mut rng, 1, t)).unwrap();
        let kernel = OperatorKernel::rank_one(FeatureMap::Tanh { dim: 1 });
        let data = build_past_future(&traj, lag, &kernel).unwrap();
        for g in [&data.k_past_u, &data.k_future_u, &data.k_past_y, &data.k_future_y] {
            prop_assert!(min_eig_ratio(g) >= -1e-10);
        }
        prop_assert_eq!(&data.k_past_y, &(data.y_past.transpose() * &data.y_past));
        let pi = oblique_pi(&data, RankPolicy::default());
        prop_assert!(rank(&pi, RankPolicy::default()) <= data.cols);
    }
}

#[test]
fn every_catalog_model_simulates_finitely() {
    let mut rng = seeded_rng(3);
    for name in CATALOG_NAMES {
        let model = catalog_model(name).unwrap();
        let u = uniform_inputs(&mut rng, model.input_dim(), 50);
        let traj = model.simulate(&u).unwrap();
        assert_eq!(traj.len(), 50);
        assert!(traj.y.iter().all(|y| y.iter().all(|x| x.is_finite())), "{name}");
        if let Model::Ar(_) = model {
            assert!(build_regressors(&traj, model.natural_lag()).is_ok());
        }
    }
}

#[test]
fn tabulated_map_is_exact_on_its_points() {
    let mut rng = seeded_rng(9);
    let pts = points(15, 2, &mut rng);
    let map = FeatureMap::Tanh { dim: 2 };
    let table = FeatureMap::Table(FeatureTable::tabulate(&map, &pts).unwrap());
    for p in &pts {
        assert_eq!(table.eval(p.as_slice()), map.eval(p.as_slice()));
    }
}
