mod support;

use horizon_core::control::{concatenate_rescaled, dual_map, energy, energy_gradient, rho};
use horizon_core::endpoint::{adjoint_transport, differential, endpoint, integrate_with_fundamental, IntegratorOptions};
use horizon_core::steering::{build_chart, norm_law_exponent};
use horizon_core::{catalog_load, ControlSignal, EnergyParams};
use proptest::prelude::*;

fn signal(d: usize, vals: Vec<f64>, horizon: f64) -> ControlSignal {
    let m = vals.len() / d;
    ControlSignal::uniform(d, m, horizon, vals[..m * d].to_vec()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rho_norm_law(r in 1e-4f64..10.0, neg in any::<bool>(), p in 1.1f64..6.0, frac in 0.05f64..0.95) {
        let r = if neg { -r } else { r };
        let beta = frac * p / (p - 1.0);
        let params = EnergyParams::new(p, beta).unwrap();
        let b = rho(&[r], 1, &params).unwrap();
        let want = r.abs().powf(norm_law_exponent(p, beta));
        prop_assert!(rel(b.lp_norm(p), want) < 1e-12);
    }

    #[test]
    fn rho_zero_is_empty(p in 1.1f64..6.0, frac in 0.05f64..0.95) {
        let b = rho(&[0.3, 0.0], 2, &EnergyParams::new(p, frac * p / (p - 1.0)).unwrap()).unwrap();
        prop_assert_eq!(b.lp_norm(p), 0.0);
    }

    #[test]
    fn concatenation_norm_identity(
        u in prop::collection::vec(-3.0f64..3.0, 2..16),
        v in prop::collection::vec(-3.0f64..3.0, 2..16),
        t in 0.01f64..2.0,
        p in 1.2f64..5.0,
    ) {
        let u = signal(2, u, 1.0);
        let v = signal(2, v, 2.0);
        let c = concatenate_rescaled(&u, &v, t).unwrap();
        let tail = v.restrict(t).unwrap();
        let want = (1.0 + t).powf(p - 1.0) * (energy(&u, p) + energy(&tail, p));
        prop_assert!(rel(energy(&c, p), want) < 1e-12);
        prop_assert!(c.segments() <= u.segments() + v.segments());
        prop_assert!((c.horizon() - 1.0).abs() == 0.0);
    }

    #[test]
    fn dual_map_inverts_gradient(vals in prop::collection::vec(-5.0f64..5.0, 2..20), p in 1.2f64..6.0) {
        let u = signal(1, vals, 1.0);
        let z = energy_gradient(&u, p).scale(1.0 / p);
        let back = dual_map(&z, p);
        for (a, b) in back.values().iter().zip(u.values()) {
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn gradient_matches_finite_differences(
        vals in prop::collection::vec(0.1f64..3.0, 4..12),
        dirs in prop::collection::vec(-1.0f64..1.0, 12),
        p in 1.5f64..5.0,
    ) {
        let u = signal(2, vals, 1.0);
        let h = u.with_values(dirs[..u.values().len()].to_vec()).unwrap();
        let eps = 1e-6;
        let fd = (energy(&u.add(&h.scale(eps)).unwrap(), p) - energy(&u.sub(&h.scale(eps)).unwrap(), p)) / (2.0 * eps);
        let exact = energy_gradient(&u, p).pairing(&h).unwrap();
        prop_assert!((fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn semigroup_on_heisenberg(
        u in prop::collection::vec(-2.0f64..2.0, 2..12),
        v in prop::collection::vec(-2.0f64..2.0, 2..12),
        t in 0.05f64..1.5,
    ) {
        let sys = catalog_load("heisenberg").unwrap();
        let opts = IntegratorOptions::with_substeps(32);
        let x = [0.1, -0.2, 0.3];
        let u = signal(2, u, 1.0);
        let v = signal(2, v, 1.5);
        let mid = endpoint(&sys, &x, &u, &opts).unwrap();
        let two = endpoint(&sys, mid.as_slice(), &v.restrict(t).unwrap(), &opts).unwrap();
        let one = endpoint(&sys, &x, &concatenate_rescaled(&u, &v, t).unwrap(), &opts).unwrap();
        prop_assert!((one - two).norm() <= 1e-8);
    }

    #[test]
    fn differential_matches_finite_differences(
        vals in prop::collection::vec(-1.5f64..1.5, 8),
        dirs in prop::collection::vec(-1.0f64..1.0, 8),
    ) {
        let sys = catalog_load("unicycle").unwrap();
        let opts = IntegratorOptions::with_substeps(16);
        let x = [0.0, 0.0, 0.3];
        let u = signal(2, vals, 1.0);
        let h = u.with_values(dirs).unwrap();
        let eps = 1e-6;
        let fp = endpoint(&sys, &x, &u.add(&h.scale(eps)).unwrap(), &opts).unwrap();
        let fm = endpoint(&sys, &x, &u.sub(&h.scale(eps)).unwrap(), &opts).unwrap();
        let fd = (fp - fm) / (2.0 * eps);
        let exact = differential(&sys, &x, &u, &opts).unwrap().apply(&h).unwrap();
        prop_assert!((&fd - &exact).norm() <= 1e-7 * (1.0 + exact.norm()));
    }

    #[test]
    fn pullback_is_adjoint(
        vals in prop::collection::vec(-1.5f64..1.5, 10),
        dirs in prop::collection::vec(-1.0f64..1.0, 10),
        lambda in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let sys = catalog_load("martinet").unwrap();
        let opts = IntegratorOptions::with_substeps(16);
        let x = [0.2, 0.0, 0.0];
        let u = signal(2, vals, 1.0);
        let h = u.with_values(dirs).unwrap();
        let diff = differential(&sys, &x, &u, &opts).unwrap();
        let lhs: f64 = diff.apply(&h).unwrap().iter().zip(&lambda).map(|(a, b)| a * b).sum();
        let rhs = diff.pullback(&lambda).pairing(&h).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn adjoint_transport_consistency(vals in prop::collection::vec(-1.5f64..1.5, 8)) {
        let sys = catalog_load("unicycle").unwrap();
        let opts = IntegratorOptions::with_substeps(32);
        let x = [0.0, 0.0, 0.0];
        let u = signal(2, vals, 1.0);
        let fwd = integrate_with_fundamental(&sys, &x, &u, &opts).unwrap();
        let mats = fwd.fundamental.unwrap();
        let last = mats.last().unwrap().clone();
        let adj = adjoint_transport(&sys, &x, &u, &opts).unwrap();
        prop_assert_eq!(adj.times.len(), mats.len());
        // N(s) M(s) = M(T)
        for (n, m) in adj.transport.iter().zip(&mats) {
            prop_assert!((n * m - &last).norm() <= 1e-8);
        }
    }

    #[test]
    fn chart_signal_matches_composed_flows(phi in prop::collection::vec(-0.05f64..0.05, 3)) {
        let sys = catalog_load("heisenberg").unwrap();
        let opts = IntegratorOptions::with_substeps(16);
        let x = [0.0, 0.0, 0.0];
        let chart = build_chart(&sys, &x, 4).unwrap();
        let sigma = chart.signal(&phi, 2, 1.0);
        let a = chart.compose_flows(&sys, &phi, &opts).unwrap();
        let b = if sigma.segments() == 0 {
            nalgebra::DVector::from_column_slice(&x)
        } else {
            endpoint(&sys, &x, &sigma, &opts).unwrap()
        };
        prop_assert!((a - b).norm() <= 1e-8);
    }
}

#[test]
fn zero_phi_is_identity() {
    let sys = catalog_load("unicycle").unwrap();
    let x = [0.3, -0.1, 0.7];
    let chart = build_chart(&sys, &x, 4).unwrap();
    let phi = vec![0.0; chart.n()];
    assert_eq!(chart.signal(&phi, 2, 1.0).segments(), 0);
    let z = chart.compose_flows(&sys, &phi, &IntegratorOptions::default()).unwrap();
    assert_eq!(z.as_slice(), &x);
}

#[test]
fn step_halving_is_fourth_order() {
    let sys = catalog_load("unicycle").unwrap();
    let mut rng = support::rng(11);
    let u = support::random_signal(&mut rng, 2, 4, 1.0, 2.0);
    let x = [0.0, 0.0, 0.0];
    let reference = endpoint(&sys, &x, &u, &IntegratorOptions::with_substeps(1024)).unwrap();
    let err = |s| (endpoint(&sys, &x, &u, &IntegratorOptions::with_substeps(s)).unwrap() - &reference).norm();
    for s in [4, 8, 16] {
        let ratio = err(s) / err(2 * s);
        assert!(ratio >= 8.0, "substeps {s}: ratio {ratio}");
    }
}

#[test]
fn remainder_is_quadratic() {
    let sys = catalog_load("martinet").unwrap();
    let opts = IntegratorOptions::with_substeps(16);
    let mut rng = support::rng(5);
    let u = support::random_signal(&mut rng, 2, 6, 1.0, 1.0);
    let h = support::random_signal(&mut rng, 2, 6, 1.0, 1.0);
    let x = [0.1, 0.2, 0.0];
    let f0 = endpoint(&sys, &x, &u, &opts).unwrap();
    let dh = differential(&sys, &x, &u, &opts).unwrap().apply(&h).unwrap();
    let eps: Vec<f64> = (0..6).map(|k| 0.1 * 0.5f64.powi(k)).collect();
    let rem: Vec<f64> = eps
        .iter()
        .map(|&e| (endpoint(&sys, &x, &u.add(&h.scale(e)).unwrap(), &opts).unwrap() - &f0 - &dh * e).norm())
        .collect();
    let slope = support::loglog_slope(&eps, &rem);
    assert!(slope >= 1.9, "slope {slope}");
}
