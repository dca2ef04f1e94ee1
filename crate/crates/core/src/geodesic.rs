//! Critical points of the p-energy restricted to a fiber `F_x(u) = y`.
//!
//! Controls live on a fixed piecewise-constant grid over `[0,1]`. A run
//! restores the seed onto the fiber, optionally takes projected-gradient
//! steps on the energy, and then solves the Lagrange system
//! `grad J(u) = lambda o d_uF, F(u) = y` by Levenberg-Marquardt, which also
//! converges to saddle-type critical points.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{dual_map_with, energy_gradient_with, energy_with, ControlSignal, EnergyKind};
use crate::endpoint::{differential, endpoint, fiber_project, EndpointDifferential, IntegratorOptions};
use crate::error::{Error, Result};
use crate::system::ControlSystem;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub kind: EnergyKind,
    pub integrator: IntegratorOptions,
    /// Levenberg-Marquardt iterations on the Lagrange system.
    pub max_iter: usize,
    /// Projected-gradient iterations before the Lagrange phase.
    pub descent_iters: usize,
    /// Relative stationarity tolerance, scaled by `max(1, ||grad J||_q)`.
    pub stat_tol: f64,
    pub end_tol: f64,
    pub ridge: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kind: EnergyKind::Componentwise,
            integrator: IntegratorOptions::default(),
            max_iter: 80,
            descent_iters: 0,
            stat_tol: 1e-6,
            end_tol: 1e-6,
            ridge: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodesicRecord {
    pub seed: Option<u64>,
    pub u: ControlSignal,
    pub lambda: Vec<f64>,
    pub p: f64,
    pub kind: EnergyKind,
    pub energy: f64,
    pub stationarity_residual: f64,
    pub stationarity_tol: f64,
    pub endpoint_residual: f64,
    /// `|u|` per segment.
    pub speed_profile: Vec<f64>,
    /// `max |speed - mean| / mean`.
    pub speed_variation: f64,
    pub iterations: usize,
    pub converged: bool,
    pub rank_deficient: bool,
    /// `L^q` norm of the projected energy gradient at every accepted iterate.
    pub projected_gradient: Vec<f64>,
}

fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

fn dual_norm(z: &ControlSignal, p: f64, kind: EnergyKind) -> f64 {
    z.norm(conjugate(p), kind)
}

/// `|| lambda o d_uF - grad J_p(u) ||_q`.
pub fn lagrange_residual(
    system: &ControlSystem,
    x: &[f64],
    u: &ControlSignal,
    lambda: &[f64],
    p: f64,
    kind: EnergyKind,
    opts: &IntegratorOptions,
) -> Result<f64> {
    let diff = differential(system, x, u, opts)?;
    if lambda.len() != diff.n() {
        return Err(Error::DimensionMismatch { expected: diff.n(), got: lambda.len() });
    }
    Ok(stationarity(&diff, u, lambda, p, kind))
}

fn stationarity(diff: &EndpointDifferential, u: &ControlSignal, lambda: &[f64], p: f64, kind: EnergyKind) -> f64 {
    let g = energy_gradient_with(u, p, kind);
    let r = diff.pullback(lambda).sub(&g).expect("same grid");
    dual_norm(&r, p, kind)
}

/// Least-squares multiplier for `sum_j lambda_j w_j ~ grad J` with a small
/// ridge. The flag reports a Gram matrix too ill-conditioned to trust.
pub fn estimate_multiplier(diff: &EndpointDifferential, grad: &ControlSignal, ridge: f64) -> (Vec<f64>, bool) {
    let n = diff.n();
    let gram = diff.gram() + DMatrix::identity(n, n) * ridge;
    let rhs = &diff.matrix * DVector::from_column_slice(grad.values());
    let flagged = diff.rank < n;
    let lambda = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gram.svd(true, true).solve(&rhs, 1e-14).unwrap_or_else(|_| DVector::zeros(n)),
    };
    (lambda.iter().copied().collect(), flagged)
}

fn speed_profile(u: &ControlSignal) -> (Vec<f64>, f64) {
    let speeds: Vec<f64> = (0..u.segments())
        .map(|k| u.value(k).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if speeds.is_empty() {
        return (speeds, 0.0);
    }
    let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
    let var = if mean > 0.0 {
        speeds.iter().map(|s| (s - mean).abs()).fold(0.0, f64::max) / mean
    } else {
        0.0
    };
    (speeds, var)
}

// Second derivative of the energy density on one segment, d x d row-major.
fn density_hessian(v: &[f64], p: f64, kind: EnergyKind, out: &mut [f64]) {
    let d = v.len();
    out.iter_mut().for_each(|o| *o = 0.0);
    match kind {
        EnergyKind::Componentwise => {
            for i in 0..d {
                let a = v[i].abs();
                out[i * d + i] = p * (p - 1.0) * if p == 2.0 { 1.0 } else { a.max(1e-12).powf(p - 2.0) };
            }
        }
        EnergyKind::Euclidean => {
            let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if p == 2.0 {
                for i in 0..d {
                    out[i * d + i] = 2.0;
                }
                return;
            }
            let r = r.max(1e-12);
            let s = p * r.powf(p - 2.0);
            for i in 0..d {
                for j in 0..d {
                    let id = if i == j { 1.0 } else { 0.0 };
                    out[i * d + j] = s * (id + (p - 2.0) * v[i] * v[j] / (r * r));
                }
            }
        }
    }
}

struct Problem<'a> {
    system: &'a ControlSystem,
    x: &'a [f64],
    y: &'a [f64],
    p: f64,
    opts: &'a SolverOptions,
    breakpoints: Vec<f64>,
    durations: Vec<f64>,
    d: usize,
}

impl Problem<'_> {
    fn signal(&self, c: &[f64]) -> ControlSignal {
        ControlSignal::from_flat(self.d, self.breakpoints.clone(), c.to_vec()).expect("grid fixed")
    }

    fn diff(&self, c: &[f64]) -> Result<EndpointDifferential> {
        differential(self.system, self.x, &self.signal(c), &self.opts.integrator)
    }

    fn miss(&self, end: &DVector<f64>) -> DVector<f64> {
        self.system.displacement(self.y, end.as_slice())
    }

    fn energy(&self, c: &[f64]) -> f64 {
        energy_with(&self.signal(c), self.p, self.opts.kind)
    }

    fn endpoint_miss(&self, c: &[f64]) -> Result<DVector<f64>> {
        let end = endpoint(self.system, self.x, &self.signal(c), &self.opts.integrator)?;
        Ok(self.miss(&end))
    }

    /// Minimal-norm Gauss-Newton onto the fiber.
    fn restore(&self, c: &mut Vec<f64>, tol: f64, max_iter: usize) -> Result<f64> {
        let mut r = self.endpoint_miss(c)?;
        let mut norm = r.norm();
        for _ in 0..max_iter {
            if norm <= tol {
                break;
            }
            let diff = self.diff(c)?;
            let v = diff.min_norm_preimage(&(-&r))?;
            let mut t = 1.0;
            loop {
                let trial: Vec<f64> = c.iter().zip(v.values()).map(|(a, b)| a + t * b).collect();
                if let Ok(rt) = self.endpoint_miss(&trial) {
                    if rt.norm() < norm {
                        *c = trial;
                        r = rt;
                        norm = r.norm();
                        break;
                    }
                }
                t *= 0.5;
                if t < 1e-6 {
                    return Ok(norm);
                }
            }
        }
        Ok(norm)
    }

    // Lagrange residual: sqrt(W)^{-1}(grad J - D^T lambda) stacked on F - y.
    fn kkt_residual(&self, c: &[f64], lambda: &[f64], diff: &EndpointDifferential) -> DVector<f64> {
        let nc = c.len();
        let n = lambda.len();
        let u = self.signal(c);
        let g = energy_gradient_with(&u, self.p, self.opts.kind);
        let dl = diff.matrix.tr_mul(&DVector::from_column_slice(lambda));
        let mut r = DVector::zeros(nc + n);
        for i in 0..nc {
            let dt = self.durations[i / self.d];
            r[i] = (dt * g.values()[i] - dl[i]) / dt.sqrt();
        }
        r.rows_mut(nc, n).copy_from(&self.miss(&diff.endpoint));
        r
    }

    // Hessian of the Lagrangian J - lambda.F in coefficient space, with the
    // second derivative of lambda.F by central differences of D^T lambda.
    fn lagrangian_hessian(&self, c: &[f64], lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
        let nc = c.len();
        let d = self.d;
        let mut h = DMatrix::zeros(nc, nc);
        let mut block = vec![0.0; d * d];
        for k in 0..self.durations.len() {
            density_hessian(&c[k * d..(k + 1) * d], self.p, self.opts.kind, &mut block);
            for i in 0..d {
                for j in 0..d {
                    h[(k * d + i, k * d + j)] = self.durations[k] * block[i * d + j];
                }
            }
        }
        let mut c2 = c.to_vec();
        for i in 0..nc {
            let eps = 1e-5 * c[i].abs().max(1.0);
            c2[i] = c[i] + eps;
            let plus = self.diff(&c2)?.matrix.tr_mul(lambda);
            c2[i] = c[i] - eps;
            let minus = self.diff(&c2)?.matrix.tr_mul(lambda);
            c2[i] = c[i];
            let col = (plus - minus) / (2.0 * eps);
            for j in 0..nc {
                h[(j, i)] -= col[j];
            }
        }
        let sym = (&h + h.transpose()) * 0.5;
        Ok(sym)
    }
}

/// One solver run from `u_init`. Returns a record whether or not the run
/// converged; domain escapes and singular fibers during restoration are
/// errors.
pub fn solve_critical_record(
    system: &ControlSystem,
    x: &[f64],
    y: &[f64],
    p: f64,
    u_init: &ControlSignal,
    opts: &SolverOptions,
) -> Result<GeodesicRecord> {
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("p must exceed 1, got {p}")));
    }
    system.check_point(x)?;
    system.check_point(y)?;
    if u_init.dim() != system.d() {
        return Err(Error::DimensionMismatch { expected: system.d(), got: u_init.dim() });
    }
    if u_init.segments() == 0 {
        return Err(Error::InvalidSignal("initial control needs at least one segment".into()));
    }
    let prob = Problem {
        system,
        x,
        y,
        p,
        opts,
        breakpoints: u_init.breakpoints().to_vec(),
        durations: u_init.durations(),
        d: system.d(),
    };
    let kind = opts.kind;
    let mut c = u_init.values().to_vec();
    let mut pg_history = Vec::new();
    let restore_tol = 1e-12 * (1.0 + y.iter().map(|v| v.abs()).fold(0.0, f64::max));
    prob.restore(&mut c, restore_tol, 30)?;

    // projected gradient on the energy
    let mut t = 1.0;
    for _ in 0..opts.descent_iters {
        let u = prob.signal(&c);
        let diff = prob.diff(&c)?;
        let g = energy_gradient_with(&u, p, kind);
        let dir = fiber_project(&diff, &dual_map_with(&g.scale(1.0 / p), p, kind))?;
        pg_history.push(dual_norm(&fiber_project(&diff, &g)?, p, kind));
        let j0 = prob.energy(&c);
        let mut accepted = false;
        while t > 1e-8 {
            let mut trial: Vec<f64> = c.iter().zip(dir.values()).map(|(a, b)| a - t * b).collect();
            let miss = prob.restore(&mut trial, restore_tol, 8);
            if matches!(miss, Ok(m) if m <= restore_tol.max(1e-10)) && prob.energy(&trial) < j0 {
                c = trial;
                accepted = true;
                t = (t * 2.0).min(1.0);
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    // Levenberg-Marquardt on the Lagrange system
    let nc = c.len();
    let n = system.n();
    let mut diff = prob.diff(&c)?;
    let (l0, mut flagged) = estimate_multiplier(&diff, &energy_gradient_with(&prob.signal(&c), p, kind), opts.ridge);
    let mut lambda = DVector::from_vec(l0);
    let mut r = prob.kkt_residual(&c, lambda.as_slice(), &diff);
    let mut mu = 1e-6;
    let mut iterations = 0;
    let converged_now = |c: &[f64], lambda: &DVector<f64>, diff: &EndpointDifferential| {
        let u = prob.signal(c);
        let g = energy_gradient_with(&u, p, kind);
        let tol = opts.stat_tol * dual_norm(&g, p, kind).max(1.0);
        let stat = stationarity(diff, &u, lambda.as_slice(), p, kind);
        let end = prob.miss(&diff.endpoint).norm();
        (stat <= tol && end <= opts.end_tol, stat, tol, end)
    };
    while iterations < opts.max_iter {
        if converged_now(&c, &lambda, &diff).0 {
            break;
        }
        iterations += 1;
        let h = prob.lagrangian_hessian(&c, &lambda)?;
        let mut jr = DMatrix::zeros(nc + n, nc + n);
        for i in 0..nc {
            let s = 1.0 / prob.durations[i / prob.d].sqrt();
            for j in 0..nc {
                jr[(i, j)] = s * h[(i, j)];
            }
            for j in 0..n {
                jr[(i, nc + j)] = -s * diff.matrix[(j, i)];
            }
        }
        for j in 0..n {
            for i in 0..nc {
                jr[(nc + j, i)] = diff.matrix[(j, i)];
            }
        }
        let jtj = jr.tr_mul(&jr);
        let jtr = jr.tr_mul(&r);
        let scale = jtj.diagonal().max().max(1e-300);
        let norm0 = r.norm();
        let mut improved = false;
        for _ in 0..12 {
            let a = &jtj + DMatrix::identity(nc + n, nc + n) * (mu * scale);
            let Some(step) = a.cholesky().map(|ch| ch.solve(&(-&jtr))) else {
                mu *= 10.0;
                continue;
            };
            let trial_c: Vec<f64> = c.iter().zip(step.rows(0, nc).iter()).map(|(a, b)| a + b).collect();
            let trial_l = &lambda + step.rows(nc, n);
            if let Ok(td) = prob.diff(&trial_c) {
                let tr = prob.kkt_residual(&trial_c, trial_l.as_slice(), &td);
                if tr.norm() < norm0 {
                    c = trial_c;
                    lambda = trial_l;
                    diff = td;
                    r = tr;
                    mu = (mu / 5.0).max(1e-15);
                    improved = true;
                    break;
                }
            }
            mu *= 8.0;
        }
        if let Ok(pg) = fiber_project(&diff, &energy_gradient_with(&prob.signal(&c), p, kind)) {
            pg_history.push(dual_norm(&pg, p, kind));
        }
        if !improved {
            break;
        }
    }

    let u = prob.signal(&c);
    let (mut converged, mut stat, stat_tol, end) = converged_now(&c, &lambda, &diff);
    // the least-squares multiplier can only do better on the stationarity row
    let (ls, f2) = estimate_multiplier(&diff, &energy_gradient_with(&u, p, kind), opts.ridge);
    flagged |= f2 || diff.rank < n;
    let ls_stat = stationarity(&diff, &u, &ls, p, kind);
    if ls_stat < stat {
        stat = ls_stat;
        lambda = DVector::from_vec(ls);
        converged = stat <= stat_tol && end <= opts.end_tol;
    }
    log::debug!(
        "geodesic run: energy {:.6} stationarity {:.2e} endpoint {:.2e} iterations {iterations} converged {converged}",
        energy_with(&u, p, kind),
        stat,
        end
    );
    let (speed, speed_variation) = speed_profile(&u);
    Ok(GeodesicRecord {
        seed: None,
        energy: energy_with(&u, p, kind),
        lambda: lambda.iter().copied().collect(),
        p,
        kind,
        stationarity_residual: stat,
        stationarity_tol: stat_tol,
        endpoint_residual: end,
        speed_profile: speed,
        speed_variation,
        iterations,
        converged,
        rank_deficient: flagged,
        projected_gradient: pg_history,
        u,
    })
}

/// As [`solve_critical_record`], failing unless the run converged.
pub fn solve_critical(
    system: &ControlSystem,
    x: &[f64],
    y: &[f64],
    p: f64,
    u_init: &ControlSignal,
    opts: &SolverOptions,
) -> Result<GeodesicRecord> {
    let rec = solve_critical_record(system, x, y, p, u_init, opts)?;
    if !rec.converged {
        return Err(Error::NonConvergence(format!(
            "stationarity {:.3e} (tol {:.3e}), endpoint {:.3e} after {} iterations",
            rec.stationarity_residual, rec.stationarity_tol, rec.endpoint_residual, rec.iterations
        )));
    }
    Ok(rec)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultistartOptions {
    pub n_seeds: usize,
    pub rng_seed: u64,
    pub segments: usize,
    /// Seed amplitudes are log-uniform in this range.
    pub amplitude: (f64, f64),
    /// Seeds are dominated by one random harmonic up to this order.
    pub harmonics: usize,
    pub dedup_energy_tol: f64,
    pub dedup_lambda_tol: f64,
    pub workers: Option<usize>,
    pub solver: SolverOptions,
}

impl Default for MultistartOptions {
    fn default() -> Self {
        MultistartOptions {
            n_seeds: 32,
            rng_seed: 0,
            segments: 32,
            amplitude: (0.5, 8.0),
            harmonics: 4,
            dedup_energy_tol: 1e-3,
            dedup_lambda_tol: 1e-2,
            workers: None,
            solver: SolverOptions::default(),
        }
    }
}

/// The deterministic seed control with index `index`.
pub fn seed_control(d: usize, index: u64, opts: &MultistartOptions) -> ControlSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
    rng.set_stream(index);
    let m = opts.segments.max(1);
    let (lo, hi) = opts.amplitude;
    let amp = (lo.ln() + rng.gen::<f64>() * (hi.ln() - lo.ln())).exp();
    let harmonics = opts.harmonics.max(1);
    let dominant = rng.gen_range(1..=harmonics);
    let coeffs: Vec<[f64; 2]> = (0..d * harmonics)
        .map(|idx| {
            let w = if idx % harmonics + 1 == dominant { 1.0 } else { 0.2 };
            [w * rng.gen_range(-1.0..1.0), w * rng.gen_range(-1.0..1.0)]
        })
        .collect();
    let mut values = Vec::with_capacity(m * d);
    for k in 0..m {
        let t = (k as f64 + 0.5) / m as f64;
        for i in 0..d {
            let mut v = 0.0;
            for j in 0..harmonics {
                let [a, b] = coeffs[i * harmonics + j];
                let w = 2.0 * std::f64::consts::PI * (j + 1) as f64 * t;
                v += a * w.cos() + b * w.sin();
            }
            values.push(v);
        }
    }
    let noise: Vec<f64> = (0..m * d).map(|_| 0.1 * rng.gen_range(-1.0..1.0)).collect();
    let rms = (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt().max(1e-12);
    let values = values.iter().zip(noise).map(|(v, e)| amp * (v / rms + e)).collect();
    ControlSignal::uniform(d, m, 1.0, values).expect("seed grid is valid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyCluster {
    pub cluster_id: usize,
    pub energy: f64,
    pub members: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultistartReport {
    /// Converged, deduplicated records sorted by energy.
    pub records: Vec<GeodesicRecord>,
    pub seeds_tried: usize,
    pub converged_runs: usize,
    pub failed_runs: usize,
    pub dedup_clusters: usize,
    /// Records grouped by energy alone.
    pub energy_clusters: Vec<EnergyCluster>,
    pub cluster_of: Vec<usize>,
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn same_critical_point(a: &GeodesicRecord, b: &GeodesicRecord, etol: f64, ltol: f64) -> bool {
    if !rel_close(a.energy, b.energy, etol) {
        return false;
    }
    let scale = a.energy.abs().max(b.energy.abs()).max(1e-12);
    let dl = a.lambda.iter().zip(&b.lambda).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() / scale;
    let na = a.lambda.iter().map(|x| x * x).sum::<f64>().sqrt() / scale;
    dl <= ltol * na.max(1.0)
}

/// Runs the solver from `n_seeds` deterministic seeds in parallel and merges
/// the converged runs.
pub fn multistart(
    system: &ControlSystem,
    x: &[f64],
    y: &[f64],
    p: f64,
    opts: &MultistartOptions,
) -> Result<MultistartReport> {
    if opts.n_seeds == 0 {
        return Err(Error::InvalidParameter("n_seeds must be at least 1".into()));
    }
    system.check_point(x)?;
    system.check_point(y)?;
    let d = system.d();
    let run = || -> Vec<(u64, Result<GeodesicRecord>)> {
        (0..opts.n_seeds as u64)
            .into_par_iter()
            .map(|i| {
                let seed = seed_control(d, i, opts);
                let rec = solve_critical_record(system, x, y, p, &seed, &opts.solver).map(|mut r| {
                    r.seed = Some(i);
                    r
                });
                (i, rec)
            })
            .collect()
    };
    let results = match opts.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .install(run),
        None => run(),
    };
    let mut converged = Vec::new();
    let mut failed = 0;
    for (i, r) in results {
        match r {
            Ok(rec) if rec.converged => converged.push(rec),
            Ok(rec) => {
                log::info!("seed {i}: not converged (stationarity {:.2e})", rec.stationarity_residual);
                failed += 1;
            }
            Err(e) => {
                log::info!("seed {i}: {e}");
                failed += 1;
            }
        }
    }
    let converged_runs = converged.len();
    converged.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.seed.cmp(&b.seed)));
    let mut records: Vec<GeodesicRecord> = Vec::new();
    for rec in converged {
        if !records
            .iter()
            .any(|r| same_critical_point(r, &rec, opts.dedup_energy_tol, opts.dedup_lambda_tol))
        {
            records.push(rec);
        }
    }
    let mut energy_clusters: Vec<EnergyCluster> = Vec::new();
    let mut cluster_of = Vec::with_capacity(records.len());
    for rec in &records {
        match energy_clusters.last_mut() {
            Some(c) if rel_close(c.energy, rec.energy, opts.dedup_energy_tol) => {
                c.members += 1;
                cluster_of.push(c.cluster_id);
            }
            _ => {
                let id = energy_clusters.len();
                energy_clusters.push(EnergyCluster { cluster_id: id, energy: rec.energy, members: 1 });
                cluster_of.push(id);
            }
        }
    }
    Ok(MultistartReport {
        dedup_clusters: records.len(),
        records,
        seeds_tried: opts.n_seeds,
        converged_runs,
        failed_runs: failed,
        energy_clusters,
        cluster_of,
    })
}

impl MultistartReport {
    pub fn energies(&self) -> Vec<f64> {
        self.energy_clusters.iter().map(|c| c.energy).collect()
    }

    /// CSV with columns `seed,energy,stationarity,endpoint,speed_variation,cluster_id`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,energy,stationarity,endpoint,speed_variation,cluster_id\n");
        for (r, c) in self.records.iter().zip(&self.cluster_of) {
            writeln!(
                s,
                "{},{:.12e},{:.6e},{:.6e},{:.6e},{}",
                r.seed.map(|v| v.to_string()).unwrap_or_default(),
                r.energy,
                r.stationarity_residual,
                r.endpoint_residual,
                r.speed_variation,
                c
            )
            .unwrap();
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceReport {
    pub mean_speed: f64,
    /// Stationarity residual of the record for its own exponent.
    pub residual_p: f64,
    /// Residual of `eta o d_uF = 2u` with `eta = 2 lambda / (p c^{p-2})`.
    pub residual_2: f64,
    pub eta: Vec<f64>,
    pub coincident: bool,
}

/// Checks that a critical point of `J_p` is also one of `J_2` once the
/// multiplier is rescaled by the (constant) speed `c`.
pub fn coincidence_check(
    record: &GeodesicRecord,
    system: &ControlSystem,
    x: &[f64],
    tol: f64,
    opts: &IntegratorOptions,
) -> Result<CoincidenceReport> {
    if !system.is_driftless() {
        return Err(Error::InvalidParameter("coincidence check needs a driftless system".into()));
    }
    let u = &record.u;
    let (speeds, _) = speed_profile(u);
    let c = if speeds.is_empty() { 0.0 } else { speeds.iter().sum::<f64>() / speeds.len() as f64 };
    let diff = differential(system, x, u, opts)?;
    let residual_p = stationarity(&diff, u, &record.lambda, record.p, record.kind);
    if c == 0.0 {
        if u.is_zero() && record.lambda.iter().all(|l| *l == 0.0) {
            return Ok(CoincidenceReport {
                mean_speed: 0.0,
                residual_p,
                residual_2: 0.0,
                eta: record.lambda.clone(),
                coincident: true,
            });
        }
        return Err(Error::Indeterminate("zero mean speed on a nontrivial record".into()));
    }
    let factor = 2.0 / (record.p * c.powf(record.p - 2.0));
    let eta: Vec<f64> = record.lambda.iter().map(|l| l * factor).collect();
    let r = diff.pullback(&eta).sub(&u.scale(2.0))?;
    let residual_2 = r.lp_norm(2.0);
    let scale = u.lp_norm(2.0).max(1.0);
    Ok(CoincidenceReport { mean_speed: c, residual_p, residual_2, eta, coincident: residual_2 <= tol * scale })
}
