use approx::relative_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mals::estimator::{regressor_d, residuals};
use mals::input_design::{sample_input, Regressor};
use mals::linalg::min_eigenvalue;
use mals::moments::{moment_trajectory, second_moment_is_psd};
use mals::system::{cov_from_eigen, simulate_rollout};
use mals::{
    aggregate, default_schedule, estimate_covariance, kron, lift_ops, min_horizon_first,
    min_horizon_second, reshape_f, reshape_g, symmetry_maps, variance_errors, vec, EigenNoise,
    InitialState, NoiseSampler, RankCertificate, ReshapeSig, RolloutBatch, RolloutSource,
    SystemModel, VarianceResult,
};

fn matrix(r: usize, c: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, r * c).prop_map(move |v| DMatrix::from_vec(r, c, v))
}

fn square(max: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max).prop_flat_map(|n| matrix(n, n))
}

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    a.shape() == b.shape() && relative_eq!(a, b, epsilon = tol, max_relative = tol)
}

/// Stable system with rank-one noise directions; variances kept small so
/// the second moments stay bounded.
fn noisy_system(max_n: usize, max_m: usize) -> impl Strategy<Value = (SystemModel, EigenNoise)> {
    (1..=max_n, 1..=max_m)
        .prop_flat_map(|(n, m)| {
            (
                matrix(n, n),
                matrix(n, m),
                prop::collection::vec((matrix(n, n), 0.0f64..0.05), 1..=3),
                prop::collection::vec((matrix(n, m), 0.0f64..0.05), 1..=2),
            )
        })
        .prop_map(|(a, b, na, nb)| {
            let (n, m) = (b.nrows(), b.ncols());
            let a = &a * (0.8 / a.norm().max(1.0));
            let (da, va): (Vec<_>, Vec<_>) = na.into_iter().unzip();
            let (db, vb): (Vec<_>, Vec<_>) = nb.into_iter().unzip();
            let noise = EigenNoise::new(n, m, da, va, db, vb).unwrap();
            let (sa, sb) = cov_from_eigen(&noise);
            (SystemModel::new(a, b, sa, sb).unwrap(), noise)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetry_maps_fix_symmetric_vectors(m in square(5)) {
        let n = m.nrows();
        let s = &m + m.transpose();
        let maps = symmetry_maps(n);
        let v = vec(&s);
        prop_assert!(close(&DMatrix::from_column_slice(n * n, 1, (maps.t() * &v).as_slice()),
            &DMatrix::from_column_slice(n * n, 1, v.as_slice()), 1e-14));
        prop_assert_eq!(maps.p() * maps.q(), DMatrix::identity(maps.half_dim(), maps.half_dim()));
        prop_assert_eq!(maps.duplicate(&maps.eliminate(&v)), v);
        prop_assert_eq!(maps.from_half_vec(&maps.half_vec(&s)), s);
    }

    #[test]
    fn reshape_turns_kron_into_outer_product(
        (a, b) in (1..=3usize, 1..=3usize, 1..=3usize, 1..=3usize)
            .prop_flat_map(|(m, n, p, q)| (matrix(m, n), matrix(p, q)))
    ) {
        let sig = ReshapeSig::new(a.nrows(), a.ncols(), b.nrows(), b.ncols()).unwrap();
        let f = reshape_f(&kron(&a, &b), sig).unwrap();
        prop_assert_eq!(&f, &(vec(&a) * vec(&b).transpose()));
        prop_assert_eq!(reshape_g(&f, sig).unwrap(), kron(&a, &b));
    }

    #[test]
    fn reshape_g_inverts_f(
        (sig, m) in (1..=3usize, 1..=3usize, 1..=3usize, 1..=3usize).prop_flat_map(|(m, n, p, q)| {
            let sig = ReshapeSig::new(m, n, p, q).unwrap();
            (Just(sig), matrix(m * p, n * q))
        })
    ) {
        prop_assert_eq!(reshape_g(&reshape_f(&m, sig).unwrap(), sig).unwrap(), m);
    }

    #[test]
    fn kron_entries_and_mixed_product(
        (a, b, c, d) in (1..=3usize, 1..=3usize, 1..=3usize, 1..=3usize, 1..=3usize, 1..=3usize)
            .prop_flat_map(|(r1, c1, r2, c2, k1, k2)| {
                (matrix(r1, c1), matrix(r2, c2), matrix(c1, k1), matrix(c2, k2))
            })
    ) {
        let ab = kron(&a, &b);
        let (p, q) = b.shape();
        for i in 0..ab.nrows() {
            for j in 0..ab.ncols() {
                prop_assert_eq!(ab[(i, j)], a[(i / p, j / q)] * b[(i % p, j % q)]);
            }
        }
        prop_assert!(close(&(&ab * kron(&c, &d)), &kron(&(&a * &c), &(&b * &d)), 1e-12));
    }

    #[test]
    fn covariance_from_directions_is_psd((model, _) in noisy_system(3, 2)) {
        let scale = model.sigma_a().amax().max(1e-300);
        prop_assert!(min_eigenvalue(model.sigma_a()) >= -1e-12 * scale);
        let scale = model.sigma_b().amax().max(1e-300);
        prop_assert!(min_eigenvalue(model.sigma_b()) >= -1e-12 * scale);
    }

    #[test]
    fn zero_noise_rollout_is_the_nominal_recursion(
        (a, b, x0, us) in (1..=4usize, 1..=3usize, 1..=8usize).prop_flat_map(|(n, m, h)| {
            (matrix(n, n), matrix(n, m), matrix(n, 1), prop::collection::vec(matrix(m, 1), h))
        }),
        seed in any::<u64>(),
    ) {
        let model = SystemModel::noiseless(a.clone(), b.clone()).unwrap();
        let sampler = NoiseSampler::from_model(&model).unwrap();
        let x0 = x0.column(0).into_owned();
        let inputs: Vec<DVector<f64>> = us.iter().map(|u| u.column(0).into_owned()).collect();
        let mut ra = ChaCha8Rng::seed_from_u64(seed);
        let mut rb = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let r = simulate_rollout(&model, &sampler, x0.clone(), inputs.clone(), &mut ra, &mut rb)
            .unwrap();
        let mut x = x0;
        prop_assert_eq!(&r.states[0], &x);
        for (t, u) in inputs.iter().enumerate() {
            x = &a * &x + &b * u;
            prop_assert!(close(
                &DMatrix::from_column_slice(x.len(), 1, r.states[t + 1].as_slice()),
                &DMatrix::from_column_slice(x.len(), 1, x.as_slice()),
                1e-12,
            ));
        }
    }

    #[test]
    fn simplified_recursion_matches_full_recursion(
        (model, noise) in noisy_system(3, 2),
        seed in 0u64..1000,
        h in 1usize..8,
    ) {
        let (n, m) = (model.n(), model.m());
        let schedule = default_schedule(m, h, seed).unwrap();
        let initial = InitialState::standard(n);
        let ops = mals::LiftedOps::from_model(&model).unwrap();
        let traj = moment_trajectory(
            &ops, initial.mean(), &initial.second_moment(), schedule.nus(), schedule.ubars(),
        ).unwrap();

        // E{Ā ⊗ Ā} = Σ σ_i² A_i ⊗ A_i for rank-one directions.
        let mut ea = DMatrix::zeros(n * n, n * n);
        for (d, &v) in noise.directions_a().iter().zip(noise.variances_a()) {
            ea += kron(d, d) * v;
        }
        let mut eb = DMatrix::zeros(n * n, m * m);
        for (d, &v) in noise.directions_b().iter().zip(noise.variances_b()) {
            eb += kron(d, d) * v;
        }
        let (a, b) = (model.a(), model.b());
        let (aa, bb, ba, ab) = (kron(a, a) + ea, kron(b, b) + eb, kron(b, a), kron(a, b));
        let mut mu = initial.mean().clone();
        let mut s = vec(&initial.second_moment());
        let maps = symmetry_maps(n);
        for t in 0..h {
            let nu = &schedule.nus()[t];
            let uu = vec(&(&schedule.ubars()[t] + nu * nu.transpose()));
            s = &aa * &s + &bb * uu + &ba * vec(&(&mu * nu.transpose()))
                + &ab * vec(&(nu * mu.transpose()));
            mu = a * &mu + b * nu;
            let full = maps.eliminate(&s);
            let scale = full.amax().max(1.0);
            prop_assert!((&full - &traj.x[t + 1]).amax() <= 1e-10 * scale);
            prop_assert!((&mu - &traj.mu[t + 1]).amax() <= 1e-10 * scale);
            prop_assert!(second_moment_is_psd(&maps, &traj.x[t + 1]));
        }
    }

    #[test]
    fn second_stage_needs_more_steps(n in 1usize..12, m in 1usize..12) {
        prop_assert!(min_horizon_second(n, m) >= min_horizon_first(n, m));
    }

    #[test]
    fn schedules_are_reproducible_and_psd(m in 1usize..5, h in 1usize..20, seed in any::<u64>()) {
        let s = default_schedule(m, h, seed).unwrap();
        prop_assert_eq!(&s, &default_schedule(m, h, seed).unwrap());
        prop_assert_eq!(s.horizon(), h);
        for u in s.ubars() {
            prop_assert!(min_eigenvalue(u) >= -1e-12 * u.amax().max(1.0));
        }
    }

    #[test]
    fn normalized_error_of_doubled_variance_is_one(
        vars in prop::collection::vec(0.01f64..10.0, 1..5),
    ) {
        let n = 2;
        let dirs: Vec<DMatrix<f64>> = vars.iter().map(|_| DMatrix::identity(n, n)).collect();
        let truth = EigenNoise::new(n, 1, dirs, vars.clone(), vec![], vec![]).unwrap();
        let est = VarianceResult {
            sigma2: vars.iter().map(|v| 2.0 * v).collect(),
            delta2: vec![],
            negative: false,
            cert: RankCertificate {
                matrix: Regressor::V,
                required_rank: vars.len(),
                computed_rank: vars.len(),
                min_singular_value: 1.0,
                full_rank: true,
                below_proven_horizon: false,
            },
        };
        let errs = variance_errors(&est, &truth).unwrap();
        for e in &errs.sigma {
            prop_assert!((e.unwrap() - 1.0).abs() < 1e-12);
        }
    }
}

fn small_source_batch(seed: u64, count: u64) -> (RolloutBatch, mals::InputSchedule, SystemModel) {
    let model = SystemModel::benchmark();
    let sampler = NoiseSampler::from_model(&model).unwrap();
    let initial = InitialState::standard(model.n());
    let schedule = default_schedule(model.m(), 12, seed).unwrap();
    let source = RolloutSource {
        model: &model,
        sampler: &sampler,
        initial: &initial,
        schedule: &schedule,
        seed,
    };
    let batch = source.batch(0..count).unwrap();
    (batch, schedule, model)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn aggregation_ignores_rollout_order(seed in 0u64..500, shuffle in any::<u64>()) {
        let (batch, schedule, _) = small_source_batch(seed, 40);
        let base = aggregate(&batch, &schedule).unwrap();
        let mut rollouts = batch.rollouts().to_vec();
        use rand::seq::SliceRandom;
        rollouts.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let perm = aggregate(&RolloutBatch::new(rollouts).unwrap(), &schedule).unwrap();
        for (x, y) in base.x.iter().zip(&perm.x).chain(base.mu.iter().zip(&perm.mu)) {
            prop_assert!((x - y).amax() <= 1e-12 * x.amax().max(1.0));
        }
    }

    #[test]
    fn second_stage_residual_is_orthogonal_to_regressor(seed in 0u64..500) {
        let (batch, schedule, model) = small_source_batch(seed, 60);
        let est = aggregate(&batch, &schedule).unwrap();
        let fit = estimate_covariance(&est, model.a(), model.b()).unwrap();
        let ops = lift_ops(model.a(), model.b()).unwrap();
        let c = residuals(&est, &ops);
        let c = DMatrix::from_columns(&c);
        let d = regressor_d(&est.x[..est.horizon()], &est.u);
        let theta = DMatrix::from_fn(fit.tilde_sigma_a.nrows(), d.nrows(), |i, j| {
            let k = fit.tilde_sigma_a.ncols();
            if j < k { fit.tilde_sigma_a[(i, j)] } else { fit.tilde_sigma_b[(i, j - k)] }
        });
        let normal = (&c - &theta * &d) * d.transpose();
        prop_assert!(normal.amax() <= 1e-9 * (c.norm() * d.norm()).max(1.0), "{}", normal.amax());
    }
}

#[test]
fn sampled_inputs_follow_the_schedule() {
    let s = default_schedule(2, 1, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = 100_000;
    let draws: Vec<DVector<f64>> = (0..k).map(|_| sample_input(&s, 0, &mut rng)).collect();
    let mean = draws.iter().fold(DVector::zeros(2), |acc, d| acc + d) / k as f64;
    let cov = draws.iter().fold(DMatrix::zeros(2, 2), |acc, d| {
        acc + (d - &mean) * (d - &mean).transpose()
    }) / (k - 1) as f64;
    let ubar = &s.ubars()[0];
    let scale = ubar.diagonal().max();
    assert!((&mean - &s.nus()[0]).amax() < 5.0 * (scale / k as f64).sqrt());
    assert!((&cov - ubar).amax() < 0.03 * scale, "{cov} vs {ubar}");
}

#[test]
fn sampled_noise_has_the_model_covariance() {
    let model = SystemModel::benchmark();
    let sampler = NoiseSampler::from_model(&model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let k = 1_000_000;
    let n2 = model.n() * model.n();
    let mut sum = DVector::zeros(n2);
    let mut outer = DMatrix::zeros(n2, n2);
    for _ in 0..k {
        let v = vec(&sampler.sample_a(&mut rng));
        sum += &v;
        outer.ger(1.0, &v, &v, 1.0);
    }
    let mean = sum / k as f64;
    let cov = outer / k as f64;
    let target = model.sigma_a();
    assert!(
        mean.amax() < 5.0 * (target.trace() / k as f64).sqrt(),
        "{mean}"
    );
    assert!(
        (&cov - target).amax() < 0.02 * target.amax(),
        "{cov} vs {target}"
    );
}
