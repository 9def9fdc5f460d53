mod common;

use approx::assert_relative_eq;
use drcascade::ambiguity::{
    ambiguity_delay, ambiguity_diffusion, ambiguity_for, ambiguity_weights_uniform_delay, ambiguity_weights_zero_delay,
    critical_lambda, dottie_number, weight_perturbation_norm, Family,
};
use drcascade::covariance::{delay_gain, delay_limit, pair_marginal, steady_covariance, NetworkParams};
use drcascade::graph::{generate_topology, graph_spectrum, Topology, WeightedGraph};
use drcascade::Error;
use nalgebra::DMatrix;
use rand::Rng;

/// Smallest eigenvalues of `sigma - (1 - em) sigma0` and `(1 + ep) sigma0 - sigma`.
fn loewner_gaps(sigma: &DMatrix<f64>, sigma0: &DMatrix<f64>, em: f64, ep: f64) -> (f64, f64) {
    let lo = (sigma - sigma0 * (1.0 - em)).symmetric_eigenvalues().min();
    let hi = (sigma0 * (1.0 + ep) - sigma).symmetric_eigenvalues().min();
    (lo, hi)
}

fn cov(g: &WeightedGraph, b: f64, tau: f64) -> DMatrix<f64> {
    let s = graph_spectrum(g).unwrap();
    steady_covariance(&s, NetworkParams::new(b, tau).unwrap()).unwrap().sigma
}

#[test]
fn sampled_perturbations_respect_radii() {
    let mut rng = common::rng(7);
    for inst in 0..6u64 {
        let g0 = common::random_graph(300 + inst, 5 + inst as usize, 0.3, (0.3, 1.5));
        let s0 = graph_spectrum(&g0).unwrap();
        let tau0 = 0.3 * delay_limit(s0.lambda_n());
        let alpha = 0.1;
        let sigma0 = cov(&g0, 1.0, tau0);
        let sigma0_zero = cov(&g0, 1.0, 0.0);

        let d = ambiguity_diffusion(alpha).unwrap();
        let t = ambiguity_delay(&s0, tau0, alpha).unwrap();
        let wz = ambiguity_weights_zero_delay(&g0, &vec![alpha; g0.edges().len()]).unwrap();
        let wu = ambiguity_weights_uniform_delay(&s0, tau0, alpha).ok();
        for _ in 0..100 {
            let th = rng.random_range(-alpha..=alpha);
            let sig = cov(&g0, (1.0 + th).sqrt(), tau0);
            let (a, b) = loewner_gaps(&sig, &sigma0, d.eps_minus, d.eps_plus);
            assert!(a >= -1e-9 && b >= -1e-9, "diffusion {inst}: {a} {b}");

            let sig = cov(&g0, 1.0, tau0 * (1.0 + th));
            let (a, b) = loewner_gaps(&sig, &sigma0, t.eps_minus, t.eps_plus);
            assert!(a >= -1e-9 && b >= -1e-9, "delay {inst}: {a} {b}");

            let w: Vec<f64> = g0.edges().iter().map(|e| e.2 * (1.0 + rng.random_range(-alpha..=alpha))).collect();
            let sig = cov(&g0.with_weights(&w).unwrap(), 1.0, 0.0);
            let (a, b) = loewner_gaps(&sig, &sigma0_zero, wz.eps_minus, wz.eps_plus);
            assert!(a >= -1e-9 && b >= -1e-9, "zero-delay weights {inst}: {a} {b}");

            if let Some(wu) = &wu {
                let sig = cov(&g0.scaled(1.0 + th).unwrap(), 1.0, tau0);
                let (a, b) = loewner_gaps(&sig, &sigma0, wu.eps_minus, wu.eps_plus);
                assert!(a >= -1e-9 && b >= -1e-9, "uniform weights {inst}: {a} {b}");
            }
        }
    }
}

#[test]
fn diffusion_radius_is_alpha_and_preserves_correlation() {
    for a in [0.0, 0.05, 0.3] {
        let spec = ambiguity_diffusion(a).unwrap();
        assert_eq!((spec.eps_minus, spec.eps_plus), (a, a));
        assert!(spec.rho_fixed);
    }
    assert!(matches!(ambiguity_diffusion(1.0), Err(Error::OutOfRange(_))));
    let g = common::random_graph(5, 7, 0.4, (0.2, 2.0));
    let s = graph_spectrum(&g).unwrap();
    let c0 = steady_covariance(&s, NetworkParams::new(1.0, 0.05).unwrap()).unwrap();
    let c1 = steady_covariance(&s, NetworkParams::new(1.07, 0.05).unwrap()).unwrap();
    for j in 1..7 {
        let (r0, r1) = (pair_marginal(&c0, 0, j).unwrap().rho, pair_marginal(&c1, 0, j).unwrap().rho);
        assert!((r0 - r1).abs() < 1e-12);
    }
}

#[test]
fn radii_nondecreasing_in_alpha() {
    let g0 = generate_topology(Topology::Cycle { p: 2 }, 9, 0.8).unwrap();
    let s0 = graph_spectrum(&g0).unwrap();
    let tau0 = 0.2 * delay_limit(s0.lambda_n());
    for family in Family::ALL {
        let tau = if family == Family::WeightsZeroDelay { 0.0 } else { tau0 };
        let mut prev = (0.0, 0.0);
        for k in 0..=20 {
            let spec = ambiguity_for(family, &g0, &s0, tau, 0.01 * k as f64).unwrap();
            assert!(spec.eps_minus >= prev.0 && spec.eps_plus >= prev.1, "{family} at step {k}");
            prev = (spec.eps_minus, spec.eps_plus);
        }
    }
}

#[test]
fn delay_radii_are_asymmetric_upwards() {
    for seed in 0..20 {
        let g = common::random_graph(seed, 6, 0.4, (0.2, 2.0));
        let s = graph_spectrum(&g).unwrap();
        let tau0 = 0.5 * delay_limit(s.lambda_n());
        let spec = ambiguity_delay(&s, tau0, 0.2).unwrap();
        assert!(spec.eps_plus >= spec.eps_minus);
    }
    let s = graph_spectrum(&generate_topology(Topology::Path, 4, 1.0).unwrap()).unwrap();
    let tau = 0.95 * delay_limit(s.lambda_n());
    assert!(matches!(ambiguity_delay(&s, tau, 0.1), Err(Error::UnstableDelay { .. })));
}

#[test]
fn uniform_weights_reduce_to_alpha_ratios() {
    let g0 = generate_topology(Topology::Complete, 5, 1.0).unwrap();
    let spec = ambiguity_weights_zero_delay(&g0, &[0.05; 10]).unwrap();
    assert_relative_eq!(spec.eps_minus, 0.05 / 1.05, max_relative = 1e-12);
    assert_relative_eq!(spec.eps_plus, 0.05 / 0.95, max_relative = 1e-12);
}

#[test]
fn single_edge_on_three_path() {
    let g0 = generate_topology(Topology::Path, 3, 1.0).unwrap();
    let s0 = graph_spectrum(&g0).unwrap();
    let alpha = [0.4, 0.0];
    // Delta = 0.4 (e0 - e1)(e0 - e1)^T; L0^+ of the unit path.
    let mut delta = DMatrix::zeros(3, 3);
    delta[(0, 0)] = 0.4;
    delta[(1, 1)] = 0.4;
    delta[(0, 1)] = -0.4;
    delta[(1, 0)] = -0.4;
    let lp = DMatrix::from_row_slice(3, 3, &[5.0, -1.0, -4.0, -1.0, 2.0, -1.0, -4.0, -1.0, 5.0]) / 9.0;
    let k = (delta * lp).singular_values().max();
    assert_relative_eq!(k, weight_perturbation_norm(&g0, &s0, &alpha).unwrap(), max_relative = 1e-12);
    let spec = ambiguity_weights_zero_delay(&g0, &alpha).unwrap();
    assert_relative_eq!(spec.eps_minus, k / (1.0 + k), max_relative = 1e-12);
    assert_relative_eq!(spec.eps_plus, k / (1.0 - k), max_relative = 1e-12);

    let sigma0 = cov(&g0, 1.0, 0.0);
    let mut rng = common::rng(11);
    for _ in 0..100 {
        let w = [1.0 + rng.random_range(-0.4..=0.4), 1.0];
        let sig = cov(&g0.with_weights(&w).unwrap(), 1.0, 0.0);
        let (a, b) = loewner_gaps(&sig, &sigma0, spec.eps_minus, spec.eps_plus);
        assert!(a >= -1e-9 && b >= -1e-9);
    }
    assert!(matches!(
        ambiguity_weights_zero_delay(&g0, &[0.9, 0.0]),
        Err(Error::PerturbationTooLarge(_))
    ));
}

#[test]
fn critical_eigenvalue_fixed_point() {
    let u = dottie_number();
    let mut v = 1.0f64;
    for _ in 0..200 {
        v = v.cos();
    }
    assert!((u - v).abs() < 1e-12);
    for tau in [0.05, 0.3, 1.0, 4.0] {
        let c = critical_lambda(tau).unwrap();
        assert!((c.lambda_bar * tau - (c.lambda_bar * tau).cos()).abs() < 1e-12);
        // delay_gain is minimised over lambda at the critical eigenvalue.
        let f = |l: f64| delay_gain(l, tau).unwrap();
        let m = c.lambda_bar;
        assert!(f(m) <= f(m * 0.999) && f(m) <= f(m * 1.001));
    }
}

#[test]
fn uniform_scaling_ratios_within_radii_on_k5() {
    let g0 = generate_topology(Topology::Complete, 5, 1.0).unwrap();
    let s0 = graph_spectrum(&g0).unwrap();
    let tau0 = 0.1;
    let alpha = 0.2;
    let spec = ambiguity_weights_uniform_delay(&s0, tau0, alpha).unwrap();
    for k in 0..20 {
        let s = 1.0 - alpha + 2.0 * alpha * k as f64 / 19.0;
        for &lam in s0.eigenvalues.iter().skip(1) {
            let r = delay_gain(s * lam, tau0).unwrap() / delay_gain(lam, tau0).unwrap();
            assert!(r >= 1.0 - spec.eps_minus - 1e-12 && r <= 1.0 + spec.eps_plus + 1e-12);
        }
    }
}

#[test]
fn regime_straddle_and_gates() {
    // lambda in {1, 3} with tau = 0.3: critical eigenvalue ~2.46 sits between them.
    let g = generate_topology(Topology::Path, 3, 1.0).unwrap();
    let s = graph_spectrum(&g).unwrap();
    assert!(matches!(
        ambiguity_weights_uniform_delay(&s, 0.3, 0.1),
        Err(Error::RegimeStraddle { .. })
    ));
    assert_eq!(ambiguity_weights_uniform_delay(&s, 0.3, 0.0).unwrap().eps_plus, 0.0);
    assert!(matches!(
        ambiguity_for(Family::WeightsZeroDelay, &g, &s, 0.1, 0.1),
        Err(Error::OutOfRange(_))
    ));
}
