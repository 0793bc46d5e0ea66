use meanfield_core::dynamics::{init_sample, pd_integrate, DynamicsConfig, InitSpec, Problem};
use meanfield_core::kernel::{kernel_matrix, rescaled_flow, RescaledFlowConfig};
use meanfield_core::math::dot;
use meanfield_core::model::{
    grad1_potential_u_theta, grad_potential_v_theta, grad_sigma_star, potential_u_theta, potential_v_theta,
    risk_particles, risk_population_mc, sigma_star, AnisotropicGaussians, CoefficientMode, EmpiricalDataset, Ensemble,
    EstimatorStrategy, Parameter, PopulationEstimator, Rotation, TruncatedReluDot,
};
use meanfield_core::oracle::w2_estimate;
use meanfield_core::Sequential;
use proptest::prelude::*;

const T1: f64 = -0.4;
const T2: f64 = 0.6;

fn act() -> TruncatedReluDot {
    TruncatedReluDot::new(-0.3, 1.0, T1, T2).unwrap()
}

fn gaussians(d: usize) -> AnisotropicGaussians {
    AnisotropicGaussians::new(d, 0.5, 0.5, Rotation::Identity).unwrap()
}

fn vec_in(d: usize, r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, d)
}

fn ensemble_from(rows: &[Vec<f64>], mode: CoefficientMode, scale: f64) -> Ensemble {
    let parts: Vec<Parameter> = rows
        .iter()
        .map(|r| Parameter::new(if mode == CoefficientMode::Fixed { 1.0 } else { r[0] }, r[1..].to_vec()))
        .collect();
    Ensemble::new(&parts, mode, scale).unwrap()
}

fn away_from_kinks(x: &[f64], w: &[f64]) -> bool {
    let s = dot(x, w);
    (s - T1).abs() > 1e-3 && (s - T2).abs() > 1e-3
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn interaction_is_symmetric_and_nonnegative_on_the_diagonal(
        w1 in vec_in(3, 1.5), w2 in vec_in(3, 1.5),
    ) {
        let data = gaussians(3);
        let a = act();
        for strategy in [
            EstimatorStrategy::MonteCarlo { n_mc: 256, seed: 4 },
            EstimatorStrategy::GaussHermite { n_nodes: 21 },
        ] {
            let est = PopulationEstimator::new(strategy, &data, &a).unwrap();
            prop_assert_eq!(est.u(&a, &w1, &w2), est.u(&a, &w2, &w1));
            prop_assert!(est.u(&a, &w1, &w1) >= 0.0);
        }
    }

    #[test]
    fn risk_identity_holds_on_the_frozen_set(
        rows in prop::collection::vec(vec_in(4, 1.5), 17),
        n_pick in prop::sample::select(vec![1usize, 3, 17]),
        fixed in any::<bool>(),
        alpha in prop::sample::select(vec![1.0f64, 10.0]),
    ) {
        let data = gaussians(3);
        let a = act();
        let est = PopulationEstimator::new(EstimatorStrategy::MonteCarlo { n_mc: 512, seed: 8 }, &data, &a).unwrap();
        let mode = if fixed { CoefficientMode::Fixed } else { CoefficientMode::General };
        let ens = ensemble_from(&rows[..n_pick], mode, alpha);
        let r1 = risk_particles(&ens, &est, &a, &Sequential).unwrap();
        let r2 = risk_population_mc(&ens, &est, &a, &Sequential).unwrap();
        prop_assert!((r1 - r2).abs() <= 1e-12, "{} vs {}", r1, r2);
    }

    #[test]
    fn risk_is_invariant_under_relabelling(
        rows in prop::collection::vec(vec_in(4, 1.5), 2..24),
        seed in any::<u64>(),
    ) {
        let data = gaussians(3);
        let a = act();
        let est = PopulationEstimator::new(EstimatorStrategy::MonteCarlo { n_mc: 128, seed: 2 }, &data, &a).unwrap();
        let mut shuffled = rows.clone();
        // Fisher–Yates driven by a simple LCG; any permutation will do.
        let mut s = seed | 1;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let e1 = ensemble_from(&rows, CoefficientMode::General, 1.0);
        let e2 = ensemble_from(&shuffled, CoefficientMode::General, 1.0);
        prop_assert_eq!(
            risk_particles(&e1, &est, &a, &Sequential).unwrap(),
            risk_particles(&e2, &est, &a, &Sequential).unwrap()
        );
    }

    #[test]
    fn sigma_star_gradient_matches_central_differences(
        theta in vec_in(4, 1.5), x in vec_in(3, 2.0),
    ) {
        let a = act();
        prop_assume!(away_from_kinks(&x, &theta[1..]));
        let mut g = vec![0.0; 4];
        grad_sigma_star(&theta, &x, &a, CoefficientMode::General, &mut g);
        let h = 1e-7;
        for q in 0..4 {
            let (mut p, mut m) = (theta.clone(), theta.clone());
            p[q] += h;
            m[q] -= h;
            let fd = (sigma_star(&p, &x, &a) - sigma_star(&m, &x, &a)) / (2.0 * h);
            prop_assert!((fd - g[q]).abs() <= 1e-5 * g[q].abs().max(1.0), "q={} {} vs {}", q, fd, g[q]);
        }
    }

    #[test]
    fn potential_gradients_match_central_differences(
        t1 in vec_in(4, 1.2), t2 in vec_in(4, 1.2),
    ) {
        let data = gaussians(3);
        let a = act();
        let est = PopulationEstimator::new(EstimatorStrategy::GaussHermite { n_nodes: 31 }, &data, &a).unwrap();
        let mode = CoefficientMode::General;
        let (mut gv, mut gu) = (vec![0.0; 4], vec![0.0; 4]);
        grad_potential_v_theta(&t1, &est, &a, mode, &mut gv);
        grad1_potential_u_theta(&t1, &t2, &est, &a, mode, &mut gu);
        let h = 1e-6;
        for q in 0..4 {
            let (mut p, mut m) = (t1.clone(), t1.clone());
            p[q] += h;
            m[q] -= h;
            let fv = (potential_v_theta(&p, &est, &a) - potential_v_theta(&m, &est, &a)) / (2.0 * h);
            let fu = (potential_u_theta(&p, &t2, &est, &a) - potential_u_theta(&m, &t2, &est, &a)) / (2.0 * h);
            prop_assert!((fv - gv[q]).abs() <= 1e-5 * gv[q].abs().max(1e-2), "v q={} {} vs {}", q, fv, gv[q]);
            prop_assert!((fu - gu[q]).abs() <= 1e-5 * gu[q].abs().max(1e-2), "u q={} {} vs {}", q, fu, gu[q]);
        }
    }

    #[test]
    fn symmetric_classes_cancel_the_linear_potential(
        rows in prop::collection::vec(vec_in(4, 1.5), 1..6),
    ) {
        let data = AnisotropicGaussians::new(3, 0.5, 0.0, Rotation::Identity).unwrap();
        let a = act();
        let est = PopulationEstimator::new(EstimatorStrategy::GaussHermite { n_nodes: 21 }, &data, &a).unwrap();
        let ens = ensemble_from(&rows, CoefficientMode::General, 1.0);
        for r in &rows {
            prop_assert_eq!(est.v(&a, &r[1..]), 0.0);
        }
        // Zero predictor has risk E y² = 1; nothing does better when Δ = 0.
        prop_assert!(risk_particles(&ens, &est, &a, &Sequential).unwrap() >= 1.0 - 1e-12);
    }

    #[test]
    fn w2_is_a_metric_on_random_triples(
        a in prop::collection::vec(vec_in(3, 2.0), 6),
        b in prop::collection::vec(vec_in(3, 2.0), 6),
        c in prop::collection::vec(vec_in(3, 2.0), 6),
    ) {
        let (ea, eb, ec) = (
            ensemble_from(&a, CoefficientMode::General, 1.0),
            ensemble_from(&b, CoefficientMode::General, 1.0),
            ensemble_from(&c, CoefficientMode::General, 1.0),
        );
        let ab = w2_estimate(&ea, &eb).unwrap();
        prop_assert_eq!(ab, w2_estimate(&eb, &ea).unwrap());
        prop_assert!(ab <= w2_estimate(&ea, &ec).unwrap() + w2_estimate(&ec, &eb).unwrap() + 1e-9);
        prop_assert_eq!(w2_estimate(&ea, &ea).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn kernel_matrix_is_symmetric_and_psd(
        n in 1usize..64, n_part in 1usize..40, seed in 0u64..1000, fixed in any::<bool>(),
    ) {
        let a = act();
        let data = EmpiricalDataset::draw_from(&gaussians(4), n, seed).unwrap();
        let mode = if fixed { CoefficientMode::Fixed } else { CoefficientMode::General };
        let spec = if fixed { InitSpec::PointMass { a0: 1.0 } } else { InitSpec::Uniform { a0: 1.0 } };
        let ens = init_sample(spec, n_part, 4, mode, 1.0, seed + 1).unwrap();
        let h = kernel_matrix(&ens, data.points(), &a, &Sequential).unwrap();
        for j in 0..n {
            prop_assert!(h.get(j, j) >= 0.0);
            for k in 0..n {
                prop_assert_eq!(h.get(j, k), h.get(k, j));
            }
        }
        prop_assert!(h.is_psd(), "min eig {}", h.min_eigenvalue());
    }
}

#[test]
fn rescaled_flow_at_unit_alpha_is_the_particle_flow() {
    let a = act();
    let data = EmpiricalDataset::draw_from(&gaussians(3), 12, 5).unwrap();
    let est = PopulationEstimator::from_frozen(data.points().clone());
    let p = Problem { activation: &a, data: &data, estimator: &est, exec: &Sequential };
    let ens = init_sample(InitSpec::Antithetic { a0: 1.0 }, 20, 3, CoefficientMode::General, 1.0, 6).unwrap();
    let flow_cfg = RescaledFlowConfig { horizon: 1.0, eps: 0.25, h_ode: 0.05, ode_tol: 1e-6 };
    let flow = rescaled_flow(&ens, 1.0, &flow_cfg, &data, &a, &Sequential).unwrap();
    let cfg = DynamicsConfig { eps: 0.25, h_ode: 0.05, horizon: 1.0, ode_tol: 1e-6, ..Default::default() };
    let pd = pd_integrate(&ens, &cfg, &p).unwrap();
    let risks = pd.record.column("risk_population_mc").unwrap();
    assert_eq!(flow.times, pd.record.times());
    for (r_flow, r_pd) in flow.risks().iter().zip(&risks) {
        assert!((r_flow - r_pd).abs() <= 1e-13, "{r_flow} vs {r_pd}");
    }
}
