//! Local steering by products of commutator flows.
//!
//! A chart at `x` assigns to every frame word a coordinate `phi_k` and expands
//! the word into elementary flows `e^{t X_b}`: a leaf `[i]` is one factor and
//! a bracket `[A,B]` is the group commutator `A, B, A^{-1}, B^{-1}` applied in
//! that order, each leaf running for `|phi_k|^{1/nu}` with the sign of
//! `phi_k` carried by the first leaf. `phi` is found by Newton's method on the
//! integrated flow, and each factor becomes one single-field segment of the
//! steering control.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::{ControlSignal, EnergyParams};
use crate::endpoint::{endpoint, IntegratorOptions};
use crate::error::{Error, Result};
use crate::system::{bracket_frame, bracket_frame_over, BracketWord, ControlSystem, DEFAULT_RANK_TOL};

pub const DEFAULT_MAX_DEPTH: usize = 4;

/// One elementary flow `e^{t X_field}` with
/// `t = direction * s * |phi_coord|^{1/root}`, where `s = sign(phi_coord)` if
/// `signed` and 1 otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowFactor {
    pub coord: usize,
    pub field: usize,
    pub direction: f64,
    pub signed: bool,
    pub root: u32,
}

impl FlowFactor {
    pub fn time(&self, phi: &[f64]) -> f64 {
        let v = phi[self.coord];
        if v == 0.0 {
            return 0.0;
        }
        let mag = if self.root == 1 { v.abs() } else { v.abs().powf(1.0 / self.root as f64) };
        let sign = if self.signed { v.signum() } else { 1.0 };
        self.direction * sign * mag
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SteeringChart {
    pub base: Vec<f64>,
    pub words: Vec<BracketWord>,
    pub factors: Vec<FlowFactor>,
    pub step: usize,
}

// leaf index within the word, field, direction
fn expand(word: &BracketWord, first_leaf: usize, out: &mut Vec<(usize, usize, f64)>) -> usize {
    match word {
        BracketWord::Leaf(i) => {
            out.push((first_leaf, *i, 1.0));
            1
        }
        BracketWord::Bracket(a, b) => {
            let start = out.len();
            let la = expand(a, first_leaf, out);
            let mid = out.len();
            let lb = expand(b, first_leaf + la, out);
            let end = out.len();
            let inv = |range: std::ops::Range<usize>, out: &mut Vec<(usize, usize, f64)>| {
                for j in range.rev() {
                    let (l, f, s) = out[j];
                    out.push((l, f, -s));
                }
            };
            inv(start..mid, out);
            inv(mid..end, out);
            la + lb
        }
    }
}

/// The elementary factors of one word in application order.
pub fn word_factors(word: &BracketWord, coord: usize) -> Vec<FlowFactor> {
    let mut raw = Vec::new();
    expand(word, 0, &mut raw);
    let root = word.len() as u32;
    raw.into_iter()
        .map(|(leaf, field, direction)| FlowFactor { coord, field, direction, signed: leaf == 0, root })
        .collect()
}

/// Number of elementary factors for a word with `len` leaves.
pub fn factor_count(len: usize) -> usize {
    3 * (1 << (len - 1)) - 2
}

/// Builds the chart at `x` from words over the controlled fields only.
pub fn build_chart(system: &ControlSystem, x: &[f64], max_depth: usize) -> Result<SteeringChart> {
    let alphabet: Vec<usize> = (1..=system.d()).collect();
    let frame = bracket_frame_over(system, x, max_depth, &alphabet, DEFAULT_RANK_TOL)?;
    let factors = frame.words.iter().enumerate().flat_map(|(k, w)| word_factors(w, k)).collect();
    Ok(SteeringChart { base: x.to_vec(), words: frame.words, factors, step: frame.step })
}

impl SteeringChart {
    pub fn n(&self) -> usize {
        self.words.len()
    }

    pub fn factor_times(&self, phi: &[f64]) -> Vec<f64> {
        self.factors.iter().map(|f| f.time(phi)).collect()
    }

    /// The steering control for `phi`: factor `j` runs field `b_j` at height
    /// `t|t|^{-beta}` for time `|t|^beta`. Zero factors are dropped.
    pub fn signal(&self, phi: &[f64], d: usize, beta: f64) -> ControlSignal {
        let mut bp = vec![0.0];
        let mut values = Vec::new();
        for (f, t) in self.factors.iter().zip(self.factor_times(phi)) {
            if t == 0.0 {
                continue;
            }
            let width = t.abs().powf(beta);
            let end = bp.last().unwrap() + width;
            if end <= *bp.last().unwrap() {
                continue;
            }
            bp.push(end);
            let mut v = vec![0.0; d];
            v[f.field - 1] = t * t.abs().powf(-beta);
            values.extend(v);
        }
        if bp.len() == 1 {
            return ControlSignal::empty(d);
        }
        ControlSignal::from_flat(d, bp, values).expect("steering segments are well formed")
    }

    /// Composes the elementary flows one at a time, each integrated as a
    /// unit-time single-field control.
    pub fn compose_flows(&self, system: &ControlSystem, phi: &[f64], opts: &IntegratorOptions) -> Result<DVector<f64>> {
        let d = system.d();
        let mut z = DVector::from_column_slice(&self.base);
        for (f, t) in self.factors.iter().zip(self.factor_times(phi)) {
            if t == 0.0 {
                continue;
            }
            let mut v = vec![0.0; d];
            v[f.field - 1] = t;
            z = endpoint(system, z.as_slice(), &ControlSignal::constant(&v, 1.0)?, opts)?;
        }
        Ok(z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 50 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhiSolution {
    pub phi: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn residual_map(
    system: &ControlSystem,
    chart: &SteeringChart,
    y: &[f64],
    beta: f64,
    opts: &IntegratorOptions,
    phi: &[f64],
) -> Result<DVector<f64>> {
    let sigma = chart.signal(phi, system.d(), beta);
    let z = endpoint(system, &chart.base, &sigma, opts)?;
    Ok(system.displacement(y, z.as_slice()))
}

/// Damped Newton for `G(phi) = F_x(sigma(phi)) - y` from `phi = 0`.
pub fn solve_phi(
    system: &ControlSystem,
    chart: &SteeringChart,
    y: &[f64],
    newton: &NewtonOptions,
) -> Result<PhiSolution> {
    solve_phi_with(system, chart, y, 1.0, newton, &IntegratorOptions::default())
}

pub fn solve_phi_with(
    system: &ControlSystem,
    chart: &SteeringChart,
    y: &[f64],
    beta: f64,
    newton: &NewtonOptions,
    opts: &IntegratorOptions,
) -> Result<PhiSolution> {
    system.check_point(y)?;
    let n = chart.n();
    let g = |phi: &[f64]| residual_map(system, chart, y, beta, opts, phi);
    let mut phi = vec![0.0; n];
    let mut r = g(&phi)?;
    let mut norm = r.norm();
    let mut iterations = 0;
    while norm > newton.tol {
        if iterations == newton.max_iter {
            return Err(Error::ChartRadiusExceeded { residual: norm, iterations });
        }
        iterations += 1;
        let mut jac = DMatrix::zeros(n, n);
        for k in 0..n {
            let h = 1e-6 * phi[k].abs().max(1e-2);
            let mut plus = phi.clone();
            let mut minus = phi.clone();
            plus[k] += h;
            minus[k] -= h;
            let col = (g(&plus)? - g(&minus)?) / (2.0 * h);
            jac.set_column(k, &col);
        }
        let step = match jac.clone().lu().solve(&r) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => jac.svd(true, true).solve(&r, 1e-12).map_err(|e| Error::NonConvergence(e.to_string()))?,
        };
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = phi.iter().zip(step.iter()).map(|(p, s)| p - lambda * s).collect();
            if let Ok(rt) = g(&trial) {
                let nt = rt.norm();
                if nt < (1.0 - 1e-4 * lambda) * norm {
                    phi = trial;
                    r = rt;
                    norm = nt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-4 {
                return Err(Error::ChartRadiusExceeded { residual: norm, iterations });
            }
        }
    }
    // finite-difference noise leaves tiny bracket coordinates that the root
    // |phi|^{1/nu} turns into visible segments
    for k in 0..n {
        if phi[k] != 0.0 && phi[k].abs() < 1e-4 {
            let mut trial = phi.clone();
            trial[k] = 0.0;
            if let Ok(rt) = g(&trial) {
                if rt.norm() <= newton.tol.max(norm) {
                    phi = trial;
                    norm = rt.norm();
                }
            }
        }
    }
    Ok(PhiSolution { phi, residual: norm, iterations })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteeringPlan {
    pub phi: Vec<f64>,
    pub sigma: ControlSignal,
    pub t_total: f64,
    pub residual: f64,
    pub factor_count: usize,
}

#[derive(Serialize, Deserialize)]
struct PlanJson {
    phi: Vec<f64>,
    #[serde(rename = "T")]
    t_total: f64,
    sigma: ControlSignal,
    residual: f64,
    factor_count: usize,
}

impl Serialize for SteeringPlan {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PlanJson {
            phi: self.phi.clone(),
            t_total: self.t_total,
            sigma: self.sigma.clone(),
            residual: self.residual,
            factor_count: self.factor_count,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SteeringPlan {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let p = PlanJson::deserialize(d)?;
        Ok(SteeringPlan { phi: p.phi, sigma: p.sigma, t_total: p.t_total, residual: p.residual, factor_count: p.factor_count })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SteeringOptions {
    pub max_depth: usize,
    pub newton: NewtonOptions,
    pub steer_tol: f64,
    pub integrator: IntegratorOptions,
    /// Times the substep count is quadrupled when the integrated residual
    /// misses `steer_tol`.
    pub refinements: usize,
}

impl Default for SteeringOptions {
    fn default() -> Self {
        SteeringOptions {
            max_depth: DEFAULT_MAX_DEPTH,
            newton: NewtonOptions::default(),
            steer_tol: 1e-6,
            integrator: IntegratorOptions::with_substeps(16),
            refinements: 2,
        }
    }
}

/// Step of the bracket frame at `x`, drift included.
pub fn bracket_step(system: &ControlSystem, x: &[f64]) -> Result<usize> {
    Ok(bracket_frame(system, x, DEFAULT_MAX_DEPTH)?.step)
}

/// Lower bound for the critical exponent: infinite without drift, and
/// `sigma/(sigma-1)` for the step `sigma` of the full bracket frame otherwise.
pub fn critical_exponent(system: &ControlSystem, x: &[f64]) -> Result<f64> {
    if system.is_driftless() {
        return Ok(f64::INFINITY);
    }
    let step = bracket_step(system, x)? as f64;
    Ok(if step <= 1.0 { f64::INFINITY } else { step / (step - 1.0) })
}

/// Rejects `p >= p_c`.
pub fn check_admissible(system: &ControlSystem, x: &[f64], p: f64) -> Result<()> {
    let pc = critical_exponent(system, x)?;
    if p >= pc {
        return Err(Error::Inadmissible {
            p,
            reason: format!("drift systems of this step require p < {pc} (the bound sigma/(sigma-1))"),
        });
    }
    Ok(())
}

fn zero_plan(d: usize, n: usize) -> SteeringPlan {
    SteeringPlan { phi: vec![0.0; n], sigma: ControlSignal::empty(d), t_total: 0.0, residual: 0.0, factor_count: 0 }
}

fn plan_with(
    system: &ControlSystem,
    x: &[f64],
    y: &[f64],
    beta: f64,
    opts: &SteeringOptions,
) -> Result<SteeringPlan> {
    let chart = build_chart(system, x, opts.max_depth)?;
    if x == y {
        return Ok(zero_plan(system.d(), chart.n()));
    }
    let mut integrator = opts.integrator;
    let mut last = None;
    for _ in 0..=opts.refinements {
        let sol = solve_phi_with(system, &chart, y, beta, &opts.newton, &integrator)?;
        let sigma = chart.signal(&sol.phi, system.d(), beta);
        let check = IntegratorOptions { substeps: integrator.substeps * 4, ..integrator };
        let reached = endpoint(system, x, &sigma, &check)?;
        let residual = system.distance(reached.as_slice(), y);
        let plan = SteeringPlan {
            t_total: sigma.horizon(),
            factor_count: chart.factors.len(),
            phi: sol.phi,
            sigma,
            residual,
        };
        if residual <= opts.steer_tol {
            return Ok(plan);
        }
        last = Some(plan);
        integrator.substeps *= 4;
    }
    let plan = last.expect("at least one attempt");
    Err(Error::ChartRadiusExceeded { residual: plan.residual, iterations: opts.newton.max_iter })
}

/// Steering control from `x` to `y` with horizon `T = sum_j |t_j|^beta`.
pub fn cross_section(
    system: &ControlSystem,
    x: &[f64],
    y: &[f64],
    params: &EnergyParams,
    opts: &SteeringOptions,
) -> Result<SteeringPlan> {
    system.check_point(x)?;
    system.check_point(y)?;
    check_admissible(system, x, params.p)?;
    if !system.is_driftless() {
        return Err(Error::InvalidParameter(
            "system has a drift; use the drift cross-section with an explicit alpha".into(),
        ));
    }
    plan_with(system, x, y, params.beta, opts)
}

/// Drift variant: segments of duration `|t|^{2 alpha}` and height
/// `t |t|^{-2 alpha}`, with `phi` solved against the flow including the drift.
/// Requires `alpha > step/2`, `p < 2 alpha/(2 alpha - 1)` and a chart of step
/// at most 2.
pub fn cross_section_drift(
    system: &ControlSystem,
    x: &[f64],
    y: &[f64],
    alpha: f64,
    p: f64,
    opts: &SteeringOptions,
) -> Result<SteeringPlan> {
    system.check_point(x)?;
    system.check_point(y)?;
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("p must exceed 1, got {p}")));
    }
    let chart = build_chart(system, x, opts.max_depth)?;
    if chart.step > 2 {
        return Err(Error::UnsupportedStep { step: chart.step });
    }
    if !(alpha > chart.step as f64 / 2.0) {
        return Err(Error::InvalidParameter(format!("alpha must exceed step/2 = {}, got {alpha}", chart.step as f64 / 2.0)));
    }
    let bound = 2.0 * alpha / (2.0 * alpha - 1.0);
    if p >= bound {
        return Err(Error::Inadmissible { p, reason: format!("alpha = {alpha} requires p < 2 alpha/(2 alpha - 1) = {bound}") });
    }
    plan_with(system, x, y, 2.0 * alpha, opts)
}

/// Exponent of the norm law `||sigma||_p ~ |t|^{e}` for one factor.
pub fn norm_law_exponent(p: f64, beta: f64) -> f64 {
    (beta + p - beta * p) / p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::catalog_load;

    #[test]
    fn factor_expansion() {
        let one = word_factors(&BracketWord::leaf(1), 0);
        assert_eq!(one.len(), 1);
        let two = word_factors(&"[[1,2]]".parse().unwrap(), 2);
        let fields: Vec<(usize, f64)> = two.iter().map(|f| (f.field, f.direction)).collect();
        assert_eq!(fields, vec![(1, 1.0), (2, 1.0), (1, -1.0), (2, -1.0)]);
        assert_eq!(two.iter().filter(|f| f.signed).count(), 2);
        let three = word_factors(&"[[1,[1,2]]]".parse().unwrap(), 0);
        assert_eq!(three.len(), factor_count(3));
        assert_eq!((factor_count(1), factor_count(2), factor_count(3)), (1, 4, 10));
    }

    #[test]
    fn heisenberg_chart() {
        let h = catalog_load("heisenberg").unwrap();
        let chart = build_chart(&h, &[0.0; 3], 3).unwrap();
        assert_eq!(chart.factors.len(), 6);
        assert_eq!(chart.step, 2);
        let opts = IntegratorOptions::with_substeps(4);
        let id = chart.compose_flows(&h, &[0.0; 3], &opts).unwrap();
        assert_eq!(id.as_slice(), &[0.0; 3]);
        // the commutator square moves +phi along [X1,X2] = dz
        let z = chart.compose_flows(&h, &[0.0, 0.0, 0.04], &opts).unwrap();
        assert!((z - DVector::from_vec(vec![0.0, 0.0, 0.04])).norm() < 1e-14);
        let z = chart.compose_flows(&h, &[0.0, 0.0, -0.04], &opts).unwrap();
        assert!((z[2] + 0.04).abs() < 1e-14);
    }

    #[test]
    fn newton_examples() {
        let h = catalog_load("heisenberg").unwrap();
        let chart = build_chart(&h, &[0.0; 3], 3).unwrap();
        let s = solve_phi(&h, &chart, &[0.0; 3], &NewtonOptions::default()).unwrap();
        assert_eq!((s.phi, s.iterations), (vec![0.0; 3], 0));
        let s = solve_phi(&h, &chart, &[0.01, -0.02, 0.0], &NewtonOptions::default()).unwrap();
        assert!(s.residual <= 1e-10);
        assert!((s.phi[0] - 0.01).abs() < 1e-3 && (s.phi[1] + 0.02).abs() < 1e-3);
        let s = solve_phi(&h, &chart, &[0.0, 0.0, 0.01], &NewtonOptions::default()).unwrap();
        assert!((s.phi[2] - 0.01).abs() < 0.01_f64.powf(1.5));
    }

    #[test]
    fn straight_plan() {
        let h = catalog_load("heisenberg").unwrap();
        let params = EnergyParams::with_p(2.0).unwrap();
        let plan = cross_section(&h, &[0.0; 3], &[0.1, 0.0, 0.0], &params, &SteeringOptions::default()).unwrap();
        assert!((plan.t_total - 0.1).abs() < 1e-9);
        assert_eq!(plan.sigma.segments(), 1);
        assert!((plan.sigma.value(0)[0] - 1.0).abs() < 1e-9 && plan.sigma.value(0)[1] == 0.0);
        assert!(plan.residual < 1e-8);
        let zero = cross_section(&h, &[0.3; 3], &[0.3; 3], &params, &SteeringOptions::default()).unwrap();
        assert_eq!((zero.t_total, zero.sigma.segments()), (0.0, 0));
        let json = serde_json::to_value(&zero).unwrap();
        assert_eq!(json["T"], 0.0);
        assert_eq!(json["factor_count"], 0);
    }

    #[test]
    fn exponent_bookkeeping() {
        let al = catalog_load("agrachev_lee(3)").unwrap();
        assert!((critical_exponent(&al, &[0.0, 0.0]).unwrap() - 1.5).abs() < 1e-15);
        assert!(check_admissible(&al, &[0.0, 0.0], 1.4).is_ok());
        assert!(matches!(check_admissible(&al, &[0.0, 0.0], 1.6), Err(Error::Inadmissible { .. })));
        for name in ["heisenberg", "unicycle"] {
            assert_eq!(critical_exponent(&catalog_load(name).unwrap(), &[0.0; 3]).unwrap(), f64::INFINITY);
        }
        assert!(matches!(
            cross_section_drift(&al, &[0.0, 0.0], &[0.0, -0.1], 3.0, 1.1, &SteeringOptions::default()),
            Err(Error::UnsupportedStep { .. })
        ));
    }
}
