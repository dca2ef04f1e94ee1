//! Trajectories, the endpoint map and its differential.
//!
//! Every integration is fixed-step RK4 with `substeps` steps per segment of
//! the control. The differential is obtained by integrating the variational
//! system alongside the state with the same stages, so it is the exact
//! derivative of the discrete endpoint map rather than an approximation of it.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::ControlSignal;
use crate::error::{Error, Result};
use crate::system::poly::Basis;
use crate::system::ControlSystem;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub substeps: usize,
    pub blowup_bound: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions { substeps: 64, blowup_bound: 1e6 }
    }
}

impl IntegratorOptions {
    pub fn with_substeps(substeps: usize) -> Self {
        IntegratorOptions { substeps, ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be at least 1".into()));
        }
        if !(self.blowup_bound > 0.0) {
            return Err(Error::InvalidParameter("blowup bound must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `M_u(t)` at the same times, when requested.
    pub fundamental: Option<Vec<DMatrix<f64>>>,
}

impl Trajectory {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least the initial state")
    }

    /// Largest distance between states sampled at the same times.
    pub fn max_deviation(&self, other: &Trajectory) -> Result<f64> {
        if self.times.len() != other.times.len() {
            return Err(Error::DimensionMismatch { expected: self.times.len(), got: other.times.len() });
        }
        Ok(self.states.iter().zip(&other.states).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
    }

    /// CSV with columns `t,x_1..x_n`.
    pub fn to_csv(&self) -> String {
        let n = self.states[0].len();
        let mut s = String::from("t");
        for i in 1..=n {
            write!(s, ",x_{i}").unwrap();
        }
        s.push('\n');
        for (t, x) in self.times.iter().zip(&self.states) {
            write!(s, "{t}").unwrap();
            for v in x.iter() {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

// Scratch buffers for the augmented right-hand side.
struct Work {
    n: usize,
    d: usize,
    basis: Basis,
    a: Vec<f64>,
    b: Vec<f64>,
    col: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Work {
    fn new(system: &ControlSystem, x: &[f64], len: usize) -> Self {
        let (n, d) = (system.n(), system.d());
        Work {
            n,
            d,
            basis: system.basis(x),
            a: vec![0.0; n * n],
            b: vec![0.0; n * d],
            col: vec![0.0; n],
            k: std::array::from_fn(|_| vec![0.0; len]),
            tmp: vec![0.0; len],
        }
    }
}

/// Which blocks ride along with the state `x`.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Aug {
    State,
    // x, Phi (n x n) with Phi' = A Phi
    Fundamental,
    // x, Phi, S (n x d) with S' = A S + B
    Sensitivity,
    // x, N (n x n) with N' = -N A
    Adjoint,
}

impl Aug {
    fn len(self, n: usize, d: usize) -> usize {
        match self {
            Aug::State => n,
            Aug::Fundamental | Aug::Adjoint => n + n * n,
            Aug::Sensitivity => n + n * n + n * d,
        }
    }
}

fn rhs(system: &ControlSystem, aug: Aug, u: &[f64], z: &[f64], out: &mut [f64], w: &mut Work) {
    let (n, d) = (w.n, w.d);
    system.refill(&mut w.basis, &z[..n]);
    system.velocity(&w.basis, u, &mut out[..n]);
    if aug == Aug::State {
        return;
    }
    system.velocity_jacobian(&w.basis, u, &mut w.a);
    let a = &w.a;
    let phi = &z[n..n + n * n];
    let dphi = &mut out[n..n + n * n];
    if aug == Aug::Adjoint {
        // (-N A)_{ij} = -sum_k N_ik A_kj
        for i in 0..n {
            for j in 0..n {
                dphi[i * n + j] = -(0..n).map(|k| phi[i * n + k] * a[k * n + j]).sum::<f64>();
            }
        }
        return;
    }
    for i in 0..n {
        for j in 0..n {
            dphi[i * n + j] = (0..n).map(|k| a[i * n + k] * phi[k * n + j]).sum();
        }
    }
    if aug == Aug::Sensitivity {
        system.controlled_matrix(&w.basis, &mut w.b, &mut w.col);
        let s = &z[n + n * n..];
        let ds = &mut out[n + n * n..];
        for i in 0..n {
            for j in 0..d {
                ds[i * d + j] = (0..n).map(|k| a[i * n + k] * s[k * d + j]).sum::<f64>() + w.b[i * d + j];
            }
        }
    }
}

fn rk4_step(system: &ControlSystem, aug: Aug, u: &[f64], z: &mut [f64], h: f64, w: &mut Work) {
    let len = z.len();
    let mut k = std::mem::take(&mut w.k);
    let mut tmp = std::mem::take(&mut w.tmp);
    rhs(system, aug, u, z, &mut k[0], w);
    for i in 0..len {
        tmp[i] = z[i] + 0.5 * h * k[0][i];
    }
    rhs(system, aug, u, &tmp, &mut k[1], w);
    for i in 0..len {
        tmp[i] = z[i] + 0.5 * h * k[1][i];
    }
    rhs(system, aug, u, &tmp, &mut k[2], w);
    for i in 0..len {
        tmp[i] = z[i] + h * k[2][i];
    }
    rhs(system, aug, u, &tmp, &mut k[3], w);
    for i in 0..len {
        z[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
    w.k = k;
    w.tmp = tmp;
}

fn check_state(x: &[f64], time: f64, bound: f64) -> Result<()> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() || norm > bound {
        return Err(Error::DomainEscape { time, norm, bound });
    }
    Ok(())
}

fn check_inputs(system: &ControlSystem, x: &[f64], u: &ControlSignal, opts: &IntegratorOptions) -> Result<()> {
    opts.validate()?;
    system.check_point(x)?;
    if u.dim() != system.d() {
        return Err(Error::DimensionMismatch { expected: system.d(), got: u.dim() });
    }
    check_state(x, 0.0, opts.blowup_bound)
}

fn identity_into(dst: &mut [f64], n: usize) {
    dst.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        dst[i * n + i] = 1.0;
    }
}

/// Integrates `x' = X_0 + sum u_i X_i` from `x` over the horizon of `u`,
/// recording every substep.
pub fn integrate(system: &ControlSystem, x: &[f64], u: &ControlSignal, opts: &IntegratorOptions) -> Result<Trajectory> {
    integrate_impl(system, x, u, opts, false)
}

/// As [`integrate`], also recording the fundamental matrix `M_u(t)`.
pub fn integrate_with_fundamental(
    system: &ControlSystem,
    x: &[f64],
    u: &ControlSignal,
    opts: &IntegratorOptions,
) -> Result<Trajectory> {
    integrate_impl(system, x, u, opts, true)
}

fn integrate_impl(
    system: &ControlSystem,
    x: &[f64],
    u: &ControlSignal,
    opts: &IntegratorOptions,
    fundamental: bool,
) -> Result<Trajectory> {
    check_inputs(system, x, u, opts)?;
    let n = system.n();
    let aug = if fundamental { Aug::Fundamental } else { Aug::State };
    let len = aug.len(n, system.d());
    let mut w = Work::new(system, x, len);
    let mut z = vec![0.0; len];
    z[..n].copy_from_slice(x);
    if fundamental {
        identity_into(&mut z[n..], n);
    }
    let samples = u.segments() * opts.substeps + 1;
    let mut times = Vec::with_capacity(samples);
    let mut states = Vec::with_capacity(samples);
    let mut mats = fundamental.then(|| Vec::with_capacity(samples));
    let mut record = |t: f64, z: &[f64]| {
        times.push(t);
        states.push(DVector::from_column_slice(&z[..n]));
        if let Some(m) = mats.as_mut() {
            m.push(DMatrix::from_row_slice(n, n, &z[n..n + n * n]));
        }
    };
    record(0.0, &z);
    for k in 0..u.segments() {
        let (t0, dt) = (u.breakpoints()[k], u.duration(k));
        let h = dt / opts.substeps as f64;
        for s in 1..=opts.substeps {
            rk4_step(system, aug, u.value(k), &mut z, h, &mut w);
            let t = if s == opts.substeps { u.breakpoints()[k + 1] } else { t0 + s as f64 * h };
            check_state(&z[..n], t, opts.blowup_bound)?;
            record(t, &z);
        }
    }
    Ok(Trajectory { times, states, fundamental: mats })
}

/// `F_x(u)`: the state reached at the end of the horizon of `u`.
pub fn endpoint(system: &ControlSystem, x: &[f64], u: &ControlSignal, opts: &IntegratorOptions) -> Result<DVector<f64>> {
    check_inputs(system, x, u, opts)?;
    let n = system.n();
    let mut w = Work::new(system, x, n);
    let mut z = x.to_vec();
    for k in 0..u.segments() {
        let h = u.duration(k) / opts.substeps as f64;
        for s in 1..=opts.substeps {
            rk4_step(system, Aug::State, u.value(k), &mut z, h, &mut w);
            if s == opts.substeps || !z.iter().all(|v| v.is_finite()) {
                check_state(&z, u.breakpoints()[k] + s as f64 * h, opts.blowup_bound)?;
            }
        }
    }
    Ok(DVector::from_vec(z))
}

/// `d_uF` on the segment basis of the control.
#[derive(Clone, Debug)]
pub struct EndpointDifferential {
    /// `n x (m d)`; column `k d + i` is the response to a unit value of `u_i`
    /// on segment `k`.
    pub matrix: DMatrix<f64>,
    pub endpoint: DVector<f64>,
    pub breakpoints: Vec<f64>,
    pub d: usize,
    /// `M_u(t_k)` at the breakpoints.
    pub fundamental: Vec<DMatrix<f64>>,
    pub rank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
}

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

impl EndpointDifferential {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn segments(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn durations(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    fn check_grid(&self, h: &ControlSignal) -> Result<()> {
        if h.dim() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: h.dim() });
        }
        if h.breakpoints() != self.breakpoints.as_slice() {
            return Err(Error::InvalidSignal("perturbation must share the control's breakpoints".into()));
        }
        Ok(())
    }

    /// `(d_uF) h`.
    pub fn apply(&self, h: &ControlSignal) -> Result<DVector<f64>> {
        self.check_grid(h)?;
        Ok(&self.matrix * DVector::from_column_slice(h.values()))
    }

    /// The dual signal `lambda o d_uF = sum_j lambda_j w_j`, as its `L^2`
    /// representative on the segment basis.
    pub fn pullback(&self, lambda: &[f64]) -> ControlSignal {
        let l = DVector::from_column_slice(lambda);
        let coeffs = self.matrix.tr_mul(&l);
        let durations = self.durations();
        let values = coeffs.iter().enumerate().map(|(c, v)| v / durations[c / self.d]).collect();
        ControlSignal::from_flat(self.d, self.breakpoints.clone(), values).expect("pullback grid is valid")
    }

    /// The rows `w_j(.; u)` projected onto the segment basis.
    pub fn rows_w(&self) -> Vec<ControlSignal> {
        (0..self.n())
            .map(|j| {
                let mut e = vec![0.0; self.n()];
                e[j] = 1.0;
                self.pullback(&e)
            })
            .collect()
    }

    /// Rank with the relative threshold `tol`.
    pub fn rank_with(&self, tol: f64) -> usize {
        let smax = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values.iter().filter(|&&s| s > tol * smax && s > 0.0).count()
    }

    pub fn sigma_min(&self) -> f64 {
        if self.singular_values.len() < self.n() {
            0.0
        } else {
            self.singular_values.last().copied().unwrap_or(0.0)
        }
    }

    /// Gram matrix `D W^{-1} D^T` of the rows `w_j` in `L^2`.
    pub fn gram(&self) -> DMatrix<f64> {
        let scaled = self.scaled_by_inverse_durations();
        &scaled * self.matrix.transpose()
    }

    // D W^{-1}
    fn scaled_by_inverse_durations(&self) -> DMatrix<f64> {
        let durations = self.durations();
        let mut scaled = self.matrix.clone();
        for (c, mut col) in scaled.column_iter_mut().enumerate() {
            col /= durations[c / self.d];
        }
        scaled
    }

    /// Minimal `L^2`-norm `v` with `(d_uF) v = r`.
    pub fn min_norm_preimage(&self, r: &DVector<f64>) -> Result<ControlSignal> {
        if self.rank < self.n() {
            return Err(Error::SingularFiber { rank: self.rank, n: self.n() });
        }
        let gram = self.gram();
        let mu = gram
            .cholesky()
            .ok_or(Error::SingularFiber { rank: self.rank, n: self.n() })?
            .solve(r);
        Ok(self.pullback(mu.as_slice()))
    }
}

fn sorted_singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// The endpoint differential. Each segment is integrated with the
/// variational blocks `Phi' = A Phi`, `S' = A S + B` started at `(I, 0)`; the
/// column block of segment `k` is `Phi_{m-1} ... Phi_{k+1} S_k`.
pub fn differential(
    system: &ControlSystem,
    x: &[f64],
    u: &ControlSignal,
    opts: &IntegratorOptions,
) -> Result<EndpointDifferential> {
    check_inputs(system, x, u, opts)?;
    let (n, d, m) = (system.n(), system.d(), u.segments());
    let len = Aug::Sensitivity.len(n, d);
    let mut w = Work::new(system, x, len);
    let mut z = vec![0.0; len];
    z[..n].copy_from_slice(x);
    let mut jumps = Vec::with_capacity(m);
    let mut sens = Vec::with_capacity(m);
    for k in 0..m {
        identity_into(&mut z[n..n + n * n], n);
        z[n + n * n..].iter_mut().for_each(|v| *v = 0.0);
        let h = u.duration(k) / opts.substeps as f64;
        for s in 1..=opts.substeps {
            rk4_step(system, Aug::Sensitivity, u.value(k), &mut z, h, &mut w);
            if s == opts.substeps || !z[..n].iter().all(|v| v.is_finite()) {
                check_state(&z[..n], u.breakpoints()[k] + s as f64 * h, opts.blowup_bound)?;
            }
        }
        jumps.push(DMatrix::from_row_slice(n, n, &z[n..n + n * n]));
        sens.push(DMatrix::from_row_slice(n, d, &z[n + n * n..]));
    }
    let mut matrix = DMatrix::zeros(n, m * d);
    let mut tail = DMatrix::identity(n, n);
    for k in (0..m).rev() {
        matrix.columns_mut(k * d, d).copy_from(&(&tail * &sens[k]));
        tail = &tail * &jumps[k];
    }
    let mut fundamental = Vec::with_capacity(m + 1);
    fundamental.push(DMatrix::identity(n, n));
    for j in &jumps {
        let next = j * fundamental.last().unwrap();
        fundamental.push(next);
    }
    let singular_values = sorted_singular_values(&matrix);
    let mut diff = EndpointDifferential {
        matrix,
        endpoint: DVector::from_column_slice(&z[..n]),
        breakpoints: u.breakpoints().to_vec(),
        d,
        fundamental,
        rank: 0,
        singular_values,
    };
    diff.rank = diff.rank_with(DEFAULT_RANK_TOL);
    Ok(diff)
}

/// `N_u(s) = M_u(T) M_u(s)^{-1}` on the integration grid, by backward
/// integration of `N' = -N A_u` from `N(T) = I`.
#[derive(Clone, Debug)]
pub struct AdjointTransport {
    pub times: Vec<f64>,
    pub transport: Vec<DMatrix<f64>>,
}

pub fn adjoint_transport(
    system: &ControlSystem,
    x: &[f64],
    u: &ControlSignal,
    opts: &IntegratorOptions,
) -> Result<AdjointTransport> {
    let end = endpoint(system, x, u, opts)?;
    let n = system.n();
    let len = Aug::Adjoint.len(n, system.d());
    let mut w = Work::new(system, x, len);
    let mut z = vec![0.0; len];
    z[..n].copy_from_slice(end.as_slice());
    identity_into(&mut z[n..], n);
    let mut times = vec![u.horizon()];
    let mut transport = vec![DMatrix::identity(n, n)];
    for k in (0..u.segments()).rev() {
        let (t0, dt) = (u.breakpoints()[k], u.duration(k));
        let h = dt / opts.substeps as f64;
        for s in (0..opts.substeps).rev() {
            rk4_step(system, Aug::Adjoint, u.value(k), &mut z, -h, &mut w);
            check_state(&z[..n], t0 + s as f64 * h, opts.blowup_bound)?;
            times.push(if s == 0 { t0 } else { t0 + s as f64 * h });
            transport.push(DMatrix::from_row_slice(n, n, &z[n..]));
        }
    }
    times.reverse();
    transport.reverse();
    Ok(AdjointTransport { times, transport })
}

/// Grid samples of the matrix whose rows are `w_j(t; u)`, i.e.
/// `N_u(t) B_u(t)` (`n x d`).
pub fn w_samples(
    system: &ControlSystem,
    x: &[f64],
    u: &ControlSignal,
    opts: &IntegratorOptions,
) -> Result<Vec<(f64, DMatrix<f64>)>> {
    let traj = integrate(system, x, u, opts)?;
    let adj = adjoint_transport(system, x, u, opts)?;
    let (n, d) = (system.n(), system.d());
    let mut basis = system.basis(x);
    let mut b = vec![0.0; n * d];
    let mut col = vec![0.0; n];
    Ok(traj
        .states
        .iter()
        .zip(&adj.transport)
        .zip(&traj.times)
        .map(|((state, nmat), &t)| {
            system.refill(&mut basis, state.as_slice());
            system.controlled_matrix(&basis, &mut b, &mut col);
            (t, nmat * DMatrix::from_row_slice(n, d, &b))
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub regular: bool,
    pub rank: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
}

/// Whether `u` is a regular point of the endpoint map: full rank `n` with
/// `sigma_min > tol * sigma_max`.
pub fn regular_value_test(
    system: &ControlSystem,
    x: &[f64],
    u: &ControlSignal,
    tol: f64,
    opts: &IntegratorOptions,
) -> Result<RegularityReport> {
    let diff = differential(system, x, u, opts)?;
    Ok(regularity(&diff, tol))
}

pub fn regularity(diff: &EndpointDifferential, tol: f64) -> RegularityReport {
    let rank = diff.rank_with(tol);
    RegularityReport {
        regular: rank == diff.n(),
        rank,
        sigma_min: diff.sigma_min(),
        sigma_max: diff.singular_values.first().copied().unwrap_or(0.0),
    }
}

/// `L^2`-orthogonal projection of `h` onto `ker d_uF`.
pub fn fiber_project(diff: &EndpointDifferential, h: &ControlSignal) -> Result<ControlSignal> {
    let r = diff.apply(h)?;
    let normal = diff.min_norm_preimage(&r)?;
    let values = h.values().iter().zip(normal.values()).map(|(a, b)| a - b).collect();
    h.with_values(values)
}
