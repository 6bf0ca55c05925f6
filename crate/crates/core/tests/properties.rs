use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use tfusion::densities::{gaussian_kl, mix_moments, t_moments};
use tfusion::filter::{kf_predict, kf_update, stkf_predict, stkf_update, MeasurementModel, ProcessModel};
use tfusion::fusion::{
    aa_fuse, aa_weights, am_stack, ci_fuse, ci_weights, AaVariant, DofRule, FusionKind, FusionMethod, WeightVector,
};
use tfusion::network::{fuse_beliefs, Belief};
use tfusion::{Gaussian, Moments, StudentT, WeightedTMix};

fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    proptest::collection::vec(-2.0..2.0f64, n * n).prop_map(move |v| {
        let a = DMatrix::from_vec(n, n, v);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.1
    })
}

fn vector(n: usize, range: f64) -> impl Strategy<Value = DVector<f64>> {
    proptest::collection::vec(-range..range, n).prop_map(DVector::from_vec)
}

fn student(n: usize) -> impl Strategy<Value = StudentT> {
    (vector(n, 5.0), spd(n), 2.5..20.0f64).prop_map(|(m, s, nu)| StudentT::new(m, s, nu).unwrap())
}

fn gaussian(n: usize) -> impl Strategy<Value = Gaussian> {
    (vector(n, 5.0), spd(n)).prop_map(|(m, c)| Gaussian::new(m, c).unwrap())
}

fn weights(k: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.05..1.0f64, k).prop_map(|w| {
        let s: f64 = w.iter().sum();
        let mut w: Vec<f64> = w.iter().map(|x| x / s).collect();
        let rest: f64 = w[1..].iter().sum();
        w[0] = 1.0 - rest;
        w
    })
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

fn is_pd(m: &DMatrix<f64>) -> bool {
    (m - m.transpose()).amax() <= 1e-9 * m.amax().max(1.0) && m.clone().cholesky().is_some()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gaussian_kl_is_nonnegative((p, q) in (1usize..5).prop_flat_map(|n| (gaussian(n), gaussian(n)))) {
        prop_assert!(gaussian_kl(&p, &q).unwrap() >= 0.0);
        prop_assert!(gaussian_kl(&p, &p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mixture_moments_are_convex_plus_spread(
        comps in proptest::collection::vec(student(3), 2..5),
        seed in 0.05..1.0f64,
    ) {
        let k = comps.len();
        let mut w: Vec<f64> = (0..k).map(|i| seed + i as f64).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let rest: f64 = w[1..].iter().sum();
        w[0] = 1.0 - rest;

        let mix = WeightedTMix::new(comps.clone(), w.clone()).unwrap();
        let (mean, cov) = mix_moments(&mix);
        let mut convex = DVector::zeros(3);
        let mut within = DMatrix::zeros(3, 3);
        for (c, wi) in comps.iter().zip(&w) {
            convex += c.mean() * *wi;
            within += c.covariance() * *wi;
        }
        prop_assert!((mean - convex).amax() < 1e-12);
        prop_assert!(min_eigenvalue(&(cov - &within)) >= -1e-9 * within.amax());
    }

    #[test]
    fn aa_fused_moments_equal_mixture(comps in proptest::collection::vec(student(2), 2..4)) {
        let fused = aa_fuse(&comps, FusionMethod::new(FusionKind::AaSuboptV1, DofRule::Average)).unwrap();
        let w = fused.weights.as_slice().to_vec();
        let (mean, cov) = mix_moments(&WeightedTMix::new(comps.clone(), w.clone()).unwrap());
        let (fm, fc) = t_moments(&fused.density);
        let convex = comps.iter().zip(&w).fold(DVector::zeros(2), |acc, (c, wi)| acc + c.mean() * *wi);
        prop_assert!((&fm - convex).amax() < 1e-12);
        prop_assert!((fm - mean).amax() < 1e-12);
        prop_assert!((fc - &cov).amax() < 1e-9 * cov.amax());
    }

    #[test]
    fn weights_lie_on_simplex(comps in proptest::collection::vec(student(2), 1..5), v2 in any::<bool>()) {
        let variant = if v2 { AaVariant::V2 } else { AaVariant::V1 };
        for w in [aa_weights(&comps, variant, DofRule::Min).unwrap(), ci_weights(&comps).unwrap()] {
            let s: f64 = w.as_slice().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12, "sum {}", s);
            prop_assert!(w.as_slice().iter().all(|x| *x >= 0.0));
        }
        let aa = aa_weights(&comps, variant, DofRule::Min).unwrap();
        prop_assert!(aa.as_slice().iter().all(|x| *x > 0.0));
    }

    #[test]
    fn ci_is_consistent(a in gaussian(3), b in gaussian(3), w in weights(2)) {
        let g = ci_fuse(&[a.clone(), b.clone()], &WeightVector::ci(w.clone()).unwrap()).unwrap();
        let info = a.cov().clone().try_inverse().unwrap() * w[0] + b.cov().clone().try_inverse().unwrap() * w[1];
        let direct = info.try_inverse().unwrap();
        prop_assert!((g.cov() - &direct).amax() < 1e-9 * direct.amax());

        let half = ci_fuse(&[a.clone(), b.clone()], &WeightVector::ci(vec![0.5, 0.5]).unwrap()).unwrap();
        let naive = (a.cov().clone().try_inverse().unwrap() + b.cov().clone().try_inverse().unwrap())
            .try_inverse()
            .unwrap();
        prop_assert!(min_eigenvalue(&(half.cov() - &naive)) >= -1e-9 * naive.amax());
    }

    #[test]
    fn stacked_update_is_more_informative(
        prior in gaussian(4),
        r1 in spd(2),
        r2 in spd(2),
        h1 in proptest::collection::vec(-1.0..1.0f64, 8),
        h2 in proptest::collection::vec(-1.0..1.0f64, 8),
        z in vector(4, 3.0),
    ) {
        let m1 = MeasurementModel::linear(DMatrix::from_vec(2, 4, h1), r1, 3.0).unwrap();
        let m2 = MeasurementModel::linear(DMatrix::from_vec(2, 4, h2), r2, 3.0).unwrap();
        let stacked = am_stack(&[m1.clone(), m2.clone()]).unwrap();
        let joint = kf_update(&prior, &stacked, &z).unwrap();
        for (m, zi) in [(&m1, z.rows(0, 2).into_owned()), (&m2, z.rows(2, 2).into_owned())] {
            let single = kf_update(&prior, m, &zi).unwrap();
            let gap = single.cov() - joint.cov();
            prop_assert!(min_eigenvalue(&gap) >= -1e-8 * single.cov().amax());
        }
    }

    #[test]
    fn stkf_posterior_stays_pd_and_dof_follows_min_chain(
        q in spd(2),
        r in spd(2),
        nu0 in 2.5..10.0f64,
        nu_q in 2.5..10.0f64,
        nu_r in 2.5..10.0f64,
        zs in proptest::collection::vec(vector(2, 50.0), 100),
    ) {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 0.9]);
        let pm = ProcessModel::linear(f, q, nu_q).unwrap();
        let mm = MeasurementModel::linear(DMatrix::identity(2, 2), r, nu_r).unwrap();
        let mut belief = StudentT::new(DVector::zeros(2), DMatrix::identity(2, 2), nu0).unwrap();
        let mut dof = nu0;
        for z in &zs {
            belief = stkf_update(&stkf_predict(&belief, &pm).unwrap(), &mm, z).unwrap();
            dof = dof.min(nu_q).min(nu_r) + 2.0;
            prop_assert!(is_pd(belief.scale()));
            prop_assert!((belief.dof() - dof).abs() < 1e-12);
        }
    }

    #[test]
    fn stkf_mean_equals_kf_mean(prior in student(3), r in spd(2), h in proptest::collection::vec(-1.0..1.0f64, 6), z in vector(2, 10.0)) {
        let mm = MeasurementModel::linear(DMatrix::from_vec(2, 3, h), r, 4.0).unwrap();
        let g = Gaussian::new(prior.mean().clone(), prior.scale().clone()).unwrap();
        let st = stkf_update(&prior, &mm, &z).unwrap();
        let kf = kf_update(&g, &mm, &z).unwrap();
        prop_assert_eq!(st.mean(), kf.mean());
    }

    #[test]
    fn zero_innovation_alpha_each_step(nu in 2.5..10.0f64, steps in 1usize..20) {
        let pm = ProcessModel::linear(DMatrix::identity(2, 2), DMatrix::identity(2, 2), nu).unwrap();
        let mm = MeasurementModel::linear(DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 2.0, nu).unwrap();
        let mut belief = StudentT::new(DVector::zeros(2), DMatrix::identity(2, 2), nu).unwrap();
        for _ in 0..steps {
            let pred = stkf_predict(&belief, &pm).unwrap();
            let nu_prime = pred.dof().min(nu);
            let p = pred.scale().clone();
            let s = &p + DMatrix::identity(2, 2) * 2.0;
            let plain = &p - &p * s.try_inverse().unwrap() * &p;
            belief = stkf_update(&pred, &mm, &DVector::zeros(2)).unwrap();
            let alpha = nu_prime / (nu_prime + 2.0);
            prop_assert!((belief.scale() - plain * alpha).amax() < 1e-12);
        }
    }

    #[test]
    fn gaussian_limit_tracks_kf(
        q in spd(2),
        r in spd(2),
        zs in proptest::collection::vec(vector(2, 20.0), 50),
    ) {
        // Arbitrary measurements give large innovations, and α − 1 grows like d²/ν.
        let nu = 1e9;
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let pm = ProcessModel::linear(f, q, nu).unwrap();
        let mm = MeasurementModel::linear(DMatrix::identity(2, 2), r, nu).unwrap();
        let p0 = DMatrix::identity(2, 2) * 4.0;
        let mut st = StudentT::from_covariance(DVector::zeros(2), &p0, nu).unwrap();
        let mut kf = Gaussian::new(DVector::zeros(2), p0).unwrap();
        for z in &zs {
            st = stkf_update(&stkf_predict(&st, &pm).unwrap(), &mm, z).unwrap();
            kf = kf_update(&kf_predict(&kf, &pm).unwrap(), &mm, z).unwrap();
            let mean_err = (st.mean() - kf.mean()).norm() / kf.mean().norm().max(1.0);
            let cov_err = (st.covariance() - kf.cov()).norm() / kf.cov().norm();
            prop_assert!(mean_err < 1e-3 && cov_err < 1e-3, "{} {}", mean_err, cov_err);
        }
    }

    #[test]
    fn fused_dof_within_input_range(comps in proptest::collection::vec(student(2), 2..4), min_rule in any::<bool>()) {
        let rule = if min_rule { DofRule::Min } else { DofRule::Average };
        let lo = comps.iter().map(StudentT::dof).fold(f64::INFINITY, f64::min);
        let hi = comps.iter().map(StudentT::dof).fold(0.0, f64::max);
        let beliefs: Vec<Belief> = comps.into_iter().map(Belief::T).collect();
        let refs: Vec<&Belief> = beliefs.iter().collect();
        for kind in [FusionKind::AaSuboptV1, FusionKind::AaUniform, FusionKind::Ci] {
            let (fused, _) = fuse_beliefs(&refs, FusionMethod::new(kind, rule)).unwrap();
            let dof = fused.dof().unwrap();
            prop_assert!(dof >= lo - 1e-12 && dof <= hi + 1e-12);
        }
    }
}
