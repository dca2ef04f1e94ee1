//! Piecewise-constant controls and the algebra the rest of the crate is built
//! on: p-energies, their differentials, the duality map back to `L^p`, the
//! reparametrized bumps used by steering, and rescaled concatenation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which pointwise norm the p-energy integrates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyKind {
    /// `sum_i ||u_i||_p^p`.
    #[default]
    Componentwise,
    /// `int |u(t)|^p dt` with the Euclidean norm on `R^d`.
    Euclidean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub p: f64,
    pub q: f64,
    pub beta: f64,
}

impl EnergyParams {
    pub fn new(p: f64, beta: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidParameter(format!("p must lie in (1, inf), got {p}")));
        }
        let q = p / (p - 1.0);
        if !(beta > 0.0 && beta < q) {
            return Err(Error::InvalidParameter(format!("beta must lie in (0, {q}) for p = {p}, got {beta}")));
        }
        Ok(EnergyParams { p, q, beta })
    }

    /// `beta = 1`, admissible for every `p > 1`.
    pub fn with_p(p: f64) -> Result<Self> {
        Self::new(p, 1.0)
    }
}

/// A piecewise-constant `R^d`-valued function on `[0, T]`.
///
/// `values[k]` is the value on `[t_k, t_{k+1})`. The empty signal (no segments,
/// horizon 0) represents the zero control on a degenerate interval.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlSignal {
    dim: usize,
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SignalJson {
    breakpoints: Vec<f64>,
    values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
}

impl Serialize for ControlSignal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SignalJson {
            breakpoints: self.breakpoints.clone(),
            values: (0..self.segments()).map(|k| self.value(k).to_vec()).collect(),
            dim: (self.segments() == 0).then_some(self.dim),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ControlSignal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = SignalJson::deserialize(d)?;
        let dim = raw.values.first().map(Vec::len).or(raw.dim).unwrap_or(1);
        let mut flat = Vec::with_capacity(dim * raw.values.len());
        for v in &raw.values {
            if v.len() != dim {
                return Err(serde::de::Error::custom("ragged control values"));
            }
            flat.extend_from_slice(v);
        }
        ControlSignal::from_flat(dim, raw.breakpoints, flat).map_err(serde::de::Error::custom)
    }
}

impl ControlSignal {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        let dim = values
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidSignal("use ControlSignal::empty for a signal with no segments".into()))?;
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidSignal("ragged control values".into()));
        }
        Self::from_flat(dim, breakpoints, values.concat())
    }

    pub fn from_flat(dim: usize, breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSignal("control dimension must be positive".into()));
        }
        if breakpoints.first() != Some(&0.0) {
            return Err(Error::InvalidSignal("breakpoints must start at 0".into()));
        }
        let m = breakpoints.len() - 1;
        if values.len() != m * dim {
            return Err(Error::InvalidSignal(format!(
                "{} values for {m} segments of dimension {dim}",
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidSignal("breakpoints must be finite and strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal("control values must be finite".into()));
        }
        Ok(ControlSignal { dim, breakpoints, values })
    }

    /// The zero signal with no segments and horizon 0.
    pub fn empty(dim: usize) -> Self {
        ControlSignal { dim, breakpoints: vec![0.0], values: Vec::new() }
    }

    pub fn constant(value: &[f64], horizon: f64) -> Result<Self> {
        Self::from_flat(value.len(), vec![0.0, horizon], value.to_vec())
    }

    pub fn zeros(dim: usize, segments: usize, horizon: f64) -> Result<Self> {
        Self::uniform(dim, segments, horizon, vec![0.0; dim * segments])
    }

    /// `segments` equal pieces on `[0, horizon]` with row-major values.
    pub fn uniform(dim: usize, segments: usize, horizon: f64, values: Vec<f64>) -> Result<Self> {
        if segments == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidSignal("uniform grid needs segments > 0 and horizon > 0".into()));
        }
        let mut bp: Vec<f64> = (0..=segments).map(|k| horizon * k as f64 / segments as f64).collect();
        bp[segments] = horizon;
        Self::from_flat(dim, bp, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    /// Row-major `segments x dim` values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn duration(&self, k: usize) -> f64 {
        self.breakpoints[k + 1] - self.breakpoints[k]
    }

    pub fn durations(&self) -> Vec<f64> {
        self.breakpoints.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Value at time `t` (right-continuous; the last segment is closed).
    pub fn value_at(&self, t: f64) -> Option<&[f64]> {
        if self.segments() == 0 || t < 0.0 || t > self.horizon() {
            return None;
        }
        let k = self.breakpoints.partition_point(|&b| b <= t).saturating_sub(1);
        Some(self.value(k.min(self.segments() - 1)))
    }

    /// Same breakpoints, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_flat(self.dim, self.breakpoints.clone(), values)
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        ControlSignal {
            dim: self.dim,
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Applies `f` to each segment's value vector.
    pub fn map_segments(&self, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for k in 0..self.segments() {
            f(self.value(k), &mut values[k * self.dim..(k + 1) * self.dim]);
        }
        ControlSignal { dim: self.dim, breakpoints: self.breakpoints.clone(), values }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_values(|v| v * s)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// `(sum_i int |u_i|^p)^{1/p}`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        energy(self, p).powf(1.0 / p)
    }

    pub fn norm(&self, p: f64, kind: EnergyKind) -> f64 {
        energy_with(self, p, kind).powf(1.0 / p)
    }

    /// Sum over components of `int u_i v_i`.
    pub fn pairing(&self, other: &ControlSignal) -> Result<f64> {
        let (a, b) = self.refine_with(other)?;
        Ok((0..a.segments())
            .map(|k| a.duration(k) * a.value(k).iter().zip(b.value(k)).map(|(x, y)| x * y).sum::<f64>())
            .sum())
    }

    pub fn sub(&self, other: &ControlSignal) -> Result<Self> {
        let (a, b) = self.refine_with(other)?;
        let values = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
        Ok(ControlSignal { dim: a.dim, breakpoints: a.breakpoints, values })
    }

    pub fn add(&self, other: &ControlSignal) -> Result<Self> {
        let (a, b) = self.refine_with(other)?;
        let values = a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect();
        Ok(ControlSignal { dim: a.dim, breakpoints: a.breakpoints, values })
    }

    /// `||self - other||_p` on the common refinement.
    pub fn lp_distance(&self, other: &ControlSignal, p: f64) -> Result<f64> {
        Ok(self.sub(other)?.lp_norm(p))
    }

    /// Both signals re-expressed on the union of their breakpoints. The shorter
    /// one is extended by zero.
    pub fn refine_with(&self, other: &ControlSignal) -> Result<(ControlSignal, ControlSignal)> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        if self.breakpoints == other.breakpoints {
            return Ok((self.clone(), other.clone()));
        }
        let mut bp: Vec<f64> = self.breakpoints.iter().chain(&other.breakpoints).copied().collect();
        bp.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bp.dedup();
        let resample = |s: &ControlSignal| {
            let mut values = Vec::with_capacity((bp.len() - 1) * s.dim);
            let mut k = 0;
            for w in bp.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                if mid >= s.horizon() {
                    values.extend(std::iter::repeat(0.0).take(s.dim));
                    continue;
                }
                while s.breakpoints[k + 1] <= mid {
                    k += 1;
                }
                values.extend_from_slice(s.value(k));
            }
            ControlSignal { dim: s.dim, breakpoints: bp.clone(), values }
        };
        Ok((resample(self), resample(other)))
    }

    /// The restriction to `[0, t_end]`.
    pub fn restrict(&self, t_end: f64) -> Result<Self> {
        if t_end > self.horizon() * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::InvalidSignal(format!(
                "cannot restrict a signal of horizon {} to [0, {t_end}]",
                self.horizon()
            )));
        }
        if t_end <= 0.0 {
            return Ok(Self::empty(self.dim));
        }
        let mut bp = vec![0.0];
        let mut values = Vec::new();
        for k in 0..self.segments() {
            let (a, b) = (self.breakpoints[k], self.breakpoints[k + 1]);
            if a >= t_end {
                break;
            }
            bp.push(b.min(t_end));
            values.extend_from_slice(self.value(k));
        }
        *bp.last_mut().unwrap() = t_end;
        Ok(ControlSignal { dim: self.dim, breakpoints: bp, values })
    }

    /// Plain concatenation `self * other` on `[0, T_self + T_other]`.
    pub fn append(&self, other: &ControlSignal) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let t0 = self.horizon();
        let mut bp = self.breakpoints.clone();
        bp.extend(other.breakpoints[1..].iter().map(|&b| t0 + b));
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Self::from_flat(self.dim, bp, values)
    }

    /// CSV with columns `t_start,t_end,u_1..u_d`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_start,t_end");
        for i in 1..=self.dim {
            write!(s, ",u_{i}").unwrap();
        }
        s.push('\n');
        for k in 0..self.segments() {
            write!(s, "{},{}", self.breakpoints[k], self.breakpoints[k + 1]).unwrap();
            for v in self.value(k) {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Componentwise p-energy `J_p(u) = sum_i ||u_i||_p^p`, exact for piecewise
/// constants.
pub fn energy(u: &ControlSignal, p: f64) -> f64 {
    energy_with(u, p, EnergyKind::Componentwise)
}

pub fn energy_with(u: &ControlSignal, p: f64, kind: EnergyKind) -> f64 {
    (0..u.segments())
        .map(|k| {
            let v = u.value(k);
            let density = match kind {
                EnergyKind::Componentwise => v.iter().map(|x| x.abs().powf(p)).sum::<f64>(),
                EnergyKind::Euclidean => euclid(v).powf(p),
            };
            u.duration(k) * density
        })
        .sum()
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `x |x|^{e}` with `0 -> 0`.
fn signed_pow(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.abs().powf(e)
    }
}

/// The differential of [`energy`] as a dual signal: `p u |u|^{p-2}` per
/// component.
pub fn energy_gradient(u: &ControlSignal, p: f64) -> ControlSignal {
    energy_gradient_with(u, p, EnergyKind::Componentwise)
}

pub fn energy_gradient_with(u: &ControlSignal, p: f64, kind: EnergyKind) -> ControlSignal {
    match kind {
        EnergyKind::Componentwise => u.map_values(|v| p * signed_pow(v, p - 2.0)),
        EnergyKind::Euclidean => u.map_segments(|v, out| {
            let r = euclid(v);
            let s = if r == 0.0 { 0.0 } else { p * r.powf(p - 2.0) };
            out.iter_mut().zip(v).for_each(|(o, x)| *o = s * x);
        }),
    }
}

/// Inverse of `u -> u|u|^{p-2}`: `z -> z |z|^{(2-p)/(p-1)}`.
pub fn dual_map(z: &ControlSignal, p: f64) -> ControlSignal {
    dual_map_with(z, p, EnergyKind::Componentwise)
}

pub fn dual_map_with(z: &ControlSignal, p: f64, kind: EnergyKind) -> ControlSignal {
    let e = (2.0 - p) / (p - 1.0);
    match kind {
        EnergyKind::Componentwise => z.map_values(|v| signed_pow(v, e)),
        EnergyKind::Euclidean => z.map_segments(|v, out| {
            let r = euclid(v);
            let s = if r == 0.0 { 0.0 } else { r.powf(e) };
            out.iter_mut().zip(v).for_each(|(o, x)| *o = s * x);
        }),
    }
}

/// The bump `rho_j(r)`: height `r_j |r_j|^{-beta}` on
/// `[|r_{j-1}|^beta, |r_{j-1}|^beta + |r_j|^beta]` (with `r_0 = 0`), zero
/// elsewhere; the empty signal when `r_j = 0`. `j` is 1-based.
pub fn rho(r: &[f64], j: usize, params: &EnergyParams) -> Result<ControlSignal> {
    if j == 0 || j > r.len() {
        return Err(Error::InvalidParameter(format!("rho index {j} outside 1..={}", r.len())));
    }
    let rj = r[j - 1];
    if rj == 0.0 {
        return Ok(ControlSignal::empty(1));
    }
    let beta = params.beta;
    let offset = if j >= 2 { r[j - 2].abs().powf(beta) } else { 0.0 };
    let width = rj.abs().powf(beta);
    let height = signed_pow(rj, -beta);
    if offset > 0.0 {
        ControlSignal::from_flat(1, vec![0.0, offset, offset + width], vec![0.0, height])
    } else {
        ControlSignal::from_flat(1, vec![0.0, width], vec![height])
    }
}

/// Rescaled concatenation: `(T+1) u((T+1)t)` on `[0, 1/(T+1))` followed by
/// `(T+1) v((T+1)t - 1)`, so that running the result for unit time reaches the
/// endpoint of `u` then `v|[0,T]` (driftless systems).
pub fn concatenate_rescaled(u: &ControlSignal, v: &ControlSignal, t: f64) -> Result<ControlSignal> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("concatenation time must be >= 0, got {t}")));
    }
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch { expected: u.dim(), got: v.dim() });
    }
    if (u.horizon() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidSignal(format!("first control must live on [0,1], horizon is {}", u.horizon())));
    }
    if t == 0.0 {
        return Ok(u.clone());
    }
    let tail = v.restrict(t)?;
    let scale = t + 1.0;
    let mut bp: Vec<f64> = u.breakpoints().iter().map(|&b| b / scale).collect();
    let mut values: Vec<f64> = u.values().iter().map(|&x| x * scale).collect();
    for k in 0..tail.segments() {
        let end = (1.0 + tail.breakpoints()[k + 1]) / scale;
        // rescaling can merge a very short tail segment into its neighbour
        if end > *bp.last().unwrap() {
            bp.push(end);
            values.extend(tail.value(k).iter().map(|&x| x * scale));
        }
    }
    *bp.last_mut().unwrap() = 1.0;
    ControlSignal::from_flat(u.dim(), bp, values)
}
