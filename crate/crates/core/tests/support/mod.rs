#![allow(dead_code)]

use horizon_core::ControlSignal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_signal(rng: &mut ChaCha8Rng, d: usize, m: usize, horizon: f64, amp: f64) -> ControlSignal {
    let values = (0..d * m).map(|_| rng.gen_range(-amp..amp)).collect();
    ControlSignal::uniform(d, m, horizon, values).unwrap()
}

/// Random piecewise-constant signal with uneven breakpoints.
pub fn random_uneven(rng: &mut ChaCha8Rng, d: usize, m: usize, horizon: f64, amp: f64) -> ControlSignal {
    let mut cuts: Vec<f64> = (0..m - 1).map(|_| rng.gen_range(0.05..0.95) * horizon).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
    let mut bp = vec![0.0];
    bp.extend(cuts);
    bp.push(horizon);
    let values = (0..d * (bp.len() - 1)).map(|_| rng.gen_range(-amp..amp)).collect();
    ControlSignal::from_flat(d, bp, values).unwrap()
}

pub fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if r > 0.1 && r <= 1.0 {
            return v.iter().map(|a| a / r).collect();
        }
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

// Heisenberg shooting oracle. Normal extremals from the origin with
// h = (h1, h2, h3): x' = h1, y' = h2, z' = (x h2 - y h1)/2,
// h1' = -h3 h2, h2' = h3 h1. Written out by hand, shares nothing with
// the library's field or integrator code.

fn normal_rhs(s: &[f64; 6]) -> [f64; 6] {
    let [x, y, _z, h1, h2, h3] = *s;
    [h1, h2, 0.5 * (x * h2 - y * h1), -h3 * h2, h3 * h1, 0.0]
}

/// Final state of the normal flow after unit time, started at the origin.
pub fn shoot(h1: f64, h2: f64, h3: f64, steps: usize) -> [f64; 3] {
    let mut s = [0.0, 0.0, 0.0, h1, h2, h3];
    let dt = 1.0 / steps as f64;
    for _ in 0..steps {
        let k1 = normal_rhs(&s);
        let k2 = normal_rhs(&add(&s, &k1, 0.5 * dt));
        let k3 = normal_rhs(&add(&s, &k2, 0.5 * dt));
        let k4 = normal_rhs(&add(&s, &k3, dt));
        for i in 0..6 {
            s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    [s[0], s[1], s[2]]
}

fn add(s: &[f64; 6], k: &[f64; 6], h: f64) -> [f64; 6] {
    let mut o = *s;
    for i in 0..6 {
        o[i] += h * k[i];
    }
    o
}

// planar miss per unit speed; rotation invariance lets h1 = 1, h2 = 0
fn planar_miss(omega: f64) -> f64 {
    let e = shoot(1.0, 0.0, omega, 400);
    (e[0] * e[0] + e[1] * e[1]).sqrt()
}

/// Energies `J_2` of the normal geodesics from 0 to `(0, 0, height)`, lowest
/// first. Dense sweep over the covector frequency, then golden-section
/// refinement of each near-zero of the planar miss. The speed follows from
/// the quadratic scaling of `z` in the speed.
pub fn heisenberg_ladder(height: f64, omega_max: f64, count: usize) -> Vec<f64> {
    let grid = 4000;
    let step = omega_max / grid as f64;
    let samples: Vec<f64> = (0..=grid).map(|i| planar_miss(i as f64 * step)).collect();
    let mut out = Vec::new();
    for i in 1..grid {
        if !(samples[i] < samples[i - 1] && samples[i] <= samples[i + 1]) || samples[i] > 0.05 {
            continue;
        }
        let (mut a, mut b) = ((i - 1) as f64 * step, (i + 1) as f64 * step);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..80 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if planar_miss(c) < planar_miss(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let omega = 0.5 * (a + b);
        if omega < 1e-6 {
            continue;
        }
        let z = shoot(1.0, 0.0, omega, 2000)[2];
        out.push(height / z);
        if out.len() == count {
            break;
        }
    }
    out
}

/// Committed ladder for height 0.5, from `heisenberg_ladder(0.5, 20.0, 3)`.
#[allow(clippy::approx_constant)]
pub const LADDER_HALF: [f64; 3] = [6.283185307, 12.566370614, 18.849555922];
