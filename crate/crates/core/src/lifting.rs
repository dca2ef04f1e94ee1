//! Lifting sampled target paths to continuous families of controls.
//!
//! Each sample `g(s_k)` is reached by rescaled concatenation of the anchor
//! control with a steering control from the anchor's endpoint. When steering
//! fails the lift re-anchors at the previous sample and continues from there.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{concatenate_rescaled, ControlSignal, EnergyParams};
use crate::endpoint::{endpoint, IntegratorOptions};
use crate::error::{Error, Result};
use crate::geodesic::{seed_control, solve_critical_record, MultistartOptions};
use crate::steering::{check_admissible, cross_section, SteeringOptions};
use crate::system::ControlSystem;

/// Samples `(s_k, y_k)` with `0 = s_0 < ... < s_K = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PathJson", into = "PathJson")]
pub struct TargetPath {
    s: Vec<f64>,
    y: Vec<Vec<f64>>,
}

#[derive(Clone, Serialize, Deserialize)]
struct PathJson {
    s: Vec<f64>,
    y: Vec<Vec<f64>>,
}

impl TryFrom<PathJson> for TargetPath {
    type Error = Error;
    fn try_from(p: PathJson) -> Result<Self> {
        TargetPath::new(p.s, p.y)
    }
}

impl From<TargetPath> for PathJson {
    fn from(p: TargetPath) -> Self {
        PathJson { s: p.s, y: p.y }
    }
}

impl TargetPath {
    pub fn new(s: Vec<f64>, y: Vec<Vec<f64>>) -> Result<Self> {
        if s.len() != y.len() || s.len() < 2 {
            return Err(Error::InvalidParameter("a path needs at least two samples with one target each".into()));
        }
        if s[0] != 0.0 || *s.last().unwrap() != 1.0 || s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("path parameters must increase strictly from 0 to 1".into()));
        }
        let n = y[0].len();
        if y.iter().any(|v| v.len() != n || v.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidParameter("path targets must be finite points of one dimension".into()));
        }
        Ok(TargetPath { s, y })
    }

    /// `g` sampled at `k + 1` equally spaced parameters.
    pub fn sample(k: usize, g: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let s: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
        let y = s.iter().map(|&t| g(t)).collect();
        Self::new(s, y)
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn params(&self) -> &[f64] {
        &self.s
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.y
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftOptions {
    pub lift_tol: f64,
    pub max_reanchors: usize,
    pub steering: SteeringOptions,
    pub integrator: IntegratorOptions,
}

impl Default for LiftOptions {
    fn default() -> Self {
        LiftOptions {
            lift_tol: 1e-6,
            max_reanchors: 16,
            steering: SteeringOptions::default(),
            integrator: IntegratorOptions::with_substeps(16),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftResult {
    pub params: Vec<f64>,
    pub controls: Vec<ControlSignal>,
    pub endpoint_residuals: Vec<f64>,
    pub lp_modulus: f64,
    /// Sample indices used as anchors, starting with 0.
    pub anchors: Vec<usize>,
}

/// Lifts `path` starting from the control `u0` on `[0,1]`, which must take
/// `x` to the first target.
pub fn lift_path(
    system: &ControlSystem,
    x: &[f64],
    u0: &ControlSignal,
    path: &TargetPath,
    params: &EnergyParams,
    opts: &LiftOptions,
) -> Result<LiftResult> {
    system.check_point(x)?;
    let targets = path.targets();
    if targets[0].len() != system.n() {
        return Err(Error::DimensionMismatch { expected: system.n(), got: targets[0].len() });
    }
    check_admissible(system, &targets[0], params.p)?;
    if !system.is_driftless() {
        return Err(Error::InvalidParameter(
            "lifting by rescaled concatenation needs a driftless system".into(),
        ));
    }
    let start = endpoint(system, x, u0, &opts.integrator)?;
    let distance = system.distance(start.as_slice(), &targets[0]);
    if distance > opts.lift_tol {
        return Err(Error::AnchorMismatch { distance });
    }
    let mut controls = vec![u0.clone()];
    let mut residuals = vec![distance];
    let mut anchors = vec![0];
    let mut anchor = u0.clone();
    let mut base = start;
    let mut k = 1;
    while k < path.len() {
        match cross_section(system, base.as_slice(), &targets[k], params, &opts.steering) {
            Ok(plan) => {
                let u = concatenate_rescaled(&anchor, &plan.sigma, plan.t_total)?;
                let reached = endpoint(system, x, &u, &opts.integrator)?;
                let r = system.distance(reached.as_slice(), &targets[k]);
                if r > opts.lift_tol {
                    return Err(Error::LiftFailed {
                        index: k,
                        reason: format!("endpoint residual {r:.3e} exceeds {:.1e}", opts.lift_tol),
                    });
                }
                controls.push(u);
                residuals.push(r);
                k += 1;
            }
            Err(Error::ChartRadiusExceeded { residual, .. }) => {
                let prev = k - 1;
                if *anchors.last().unwrap() == prev || anchors.len() > opts.max_reanchors {
                    return Err(Error::LiftFailed {
                        index: k,
                        reason: format!("steering from sample {prev} failed with residual {residual:.3e}"),
                    });
                }
                log::info!("re-anchoring lift at sample {prev}");
                anchors.push(prev);
                anchor = controls[prev].clone();
                base = endpoint(system, x, &anchor, &opts.integrator)?;
            }
            Err(e) => return Err(e),
        }
    }
    let lp_modulus = controls
        .windows(2)
        .map(|w| w[1].lp_distance(&w[0], params.p))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(LiftResult { params: path.params().to_vec(), controls, endpoint_residuals: residuals, lp_modulus, anchors })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusRow {
    pub s0: f64,
    pub s1: f64,
    pub modulus: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub rows: Vec<ModulusRow>,
    pub max_modulus: f64,
    pub max_ratio: f64,
}

/// `||u(s_{k+1}) - u(s_k)||_p` against `|s_{k+1} - s_k|`.
pub fn continuity_report(result: &LiftResult, p: f64) -> Result<ContinuityReport> {
    let mut rows = Vec::with_capacity(result.controls.len().saturating_sub(1));
    for k in 0..result.controls.len().saturating_sub(1) {
        let modulus = result.controls[k + 1].lp_distance(&result.controls[k], p)?;
        let (s0, s1) = (result.params[k], result.params[k + 1]);
        rows.push(ModulusRow { s0, s1, modulus, ratio: modulus / (s1 - s0) });
    }
    let max_modulus = rows.iter().map(|r| r.modulus).fold(0.0, f64::max);
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(ContinuityReport { rows, max_modulus, max_ratio })
}

impl ContinuityReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("s0,s1,modulus,ratio\n");
        for r in &self.rows {
            writeln!(s, "{},{},{:.12e},{:.12e}", r.s0, r.s1, r.modulus, r.ratio).unwrap();
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberEnergySample {
    pub target: Vec<f64>,
    /// Least energy among runs that reached the target, if any did.
    pub min_energy: Option<f64>,
    pub feasible_runs: usize,
}

/// Least `J_p` found over the fibers `Omega(y)` for each target, from the
/// same deterministic seeds. Runs count as feasible when they reach the
/// target within the solver's endpoint tolerance, stationary or not.
pub fn fiber_energy_floor(
    system: &ControlSystem,
    x: &[f64],
    targets: &[Vec<f64>],
    p: f64,
    opts: &MultistartOptions,
) -> Result<Vec<FiberEnergySample>> {
    let d = system.d();
    targets
        .iter()
        .map(|y| {
            let energies: Vec<Option<f64>> = (0..opts.n_seeds as u64)
                .into_par_iter()
                .map(|i| {
                    let seed = seed_control(d, i, opts);
                    match solve_critical_record(system, x, y, p, &seed, &opts.solver) {
                        Ok(r) if r.endpoint_residual <= opts.solver.end_tol => Some(r.energy),
                        _ => None,
                    }
                })
                .collect();
            let feasible: Vec<f64> = energies.into_iter().flatten().collect();
            Ok(FiberEnergySample {
                target: y.clone(),
                min_energy: feasible.iter().copied().reduce(f64::min),
                feasible_runs: feasible.len(),
            })
        })
        .collect()
}
