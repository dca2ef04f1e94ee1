//! Affine control systems `x' = X_0(x) + sum_i u_i X_i(x)` on a single
//! coordinate chart of `R^n`.

mod bracket;
mod catalog;
mod field;
mod json;
pub mod poly;

use std::f64::consts::PI;

use nalgebra::DVector;

pub use bracket::{bracket_frame, bracket_frame_over, enumerate_words, BracketFrame, BracketWord, DEFAULT_RANK_TOL};
pub use catalog::{catalog_load, CATALOG_NAMES};
pub use field::{lie_bracket, VectorField};
pub use json::{PolyTermJson, SystemJson};

use crate::error::{Error, Result};
use poly::Basis;

#[derive(Clone, Debug)]
pub struct ControlSystem {
    name: String,
    n: usize,
    // fields[0] is the drift, fields[1..=d] the controlled fields
    fields: Vec<VectorField>,
    periodic: Vec<bool>,
    driftless: bool,
    trig: bool,
}

impl ControlSystem {
    pub fn new(
        name: impl Into<String>,
        drift: Option<VectorField>,
        controlled: Vec<VectorField>,
        periodic: Option<Vec<bool>>,
    ) -> Result<Self> {
        let d = controlled.len();
        if d == 0 {
            return Err(Error::InvalidSystem("at least one controlled field is required".into()));
        }
        let n = controlled[0].dim();
        let drift = drift.unwrap_or_else(|| VectorField::zero(n));
        if let Some(f) = std::iter::once(&drift).chain(&controlled).find(|f| f.dim() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: f.dim() });
        }
        let periodic = periodic.unwrap_or_else(|| vec![false; n]);
        if periodic.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: periodic.len() });
        }
        let driftless = drift.is_zero();
        let mut fields = Vec::with_capacity(d + 1);
        fields.push(drift);
        fields.extend(controlled);
        let trig = fields.iter().any(VectorField::uses_trig);
        Ok(ControlSystem { name: name.into(), n, fields, periodic, driftless, trig })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of controlled fields.
    pub fn d(&self) -> usize {
        self.fields.len() - 1
    }

    pub fn is_driftless(&self) -> bool {
        self.driftless
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn is_polynomial(&self) -> bool {
        !self.trig
    }

    /// Field by index; 0 is the drift.
    pub fn field(&self, index: usize) -> Result<&VectorField> {
        self.fields
            .get(index)
            .ok_or(Error::IndexOutOfRange { index, count: self.fields.len() })
    }

    pub fn drift(&self) -> &VectorField {
        &self.fields[0]
    }

    pub fn controlled(&self) -> &[VectorField] {
        &self.fields[1..]
    }

    pub fn eval_field(&self, index: usize, point: &[f64]) -> Result<DVector<f64>> {
        self.check_point(point)?;
        Ok(self.field(index)?.eval(point))
    }

    pub(crate) fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: point.len() });
        }
        if point.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("point has non-finite coordinates".into()));
        }
        Ok(())
    }

    /// `to - from`, with periodic coordinates (period 2*pi) wrapped into
    /// `(-pi, pi]`.
    pub fn displacement(&self, from: &[f64], to: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.n,
            (0..self.n).map(|i| {
                let delta = to[i] - from[i];
                if self.periodic[i] {
                    let w = delta.rem_euclid(2.0 * PI);
                    if w > PI {
                        w - 2.0 * PI
                    } else {
                        w
                    }
                } else {
                    delta
                }
            }),
        )
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.displacement(a, b).norm()
    }

    pub(crate) fn basis(&self, x: &[f64]) -> Basis {
        Basis::new(x, self.trig)
    }

    pub(crate) fn refill(&self, basis: &mut Basis, x: &[f64]) {
        basis.refill(x, self.trig);
    }

    /// `out = X_0 + sum_i u_i X_i` at the basis point.
    pub(crate) fn velocity(&self, basis: &Basis, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if !self.driftless {
            self.fields[0].accumulate_value(basis, 1.0, out);
        }
        for (i, &ui) in u.iter().enumerate() {
            if ui != 0.0 {
                self.fields[i + 1].accumulate_value(basis, ui, out);
            }
        }
    }

    /// Row-major `A = dX_0 + sum_i u_i dX_i`.
    pub(crate) fn velocity_jacobian(&self, basis: &Basis, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if !self.driftless {
            self.fields[0].accumulate_jacobian(basis, 1.0, out);
        }
        for (i, &ui) in u.iter().enumerate() {
            if ui != 0.0 {
                self.fields[i + 1].accumulate_jacobian(basis, ui, out);
            }
        }
    }

    /// Row-major `n x d` matrix `B = (X_1 .. X_d)`.
    pub(crate) fn controlled_matrix(&self, basis: &Basis, out: &mut [f64], scratch: &mut [f64]) {
        let d = self.d();
        for i in 0..d {
            self.fields[i + 1].value_into(basis, scratch);
            for r in 0..self.n {
                out[r * d + i] = scratch[r];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_field_examples() {
        let h = catalog_load("heisenberg").unwrap();
        assert_eq!(h.eval_field(1, &[0.0, 0.0, 0.0]).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(h.eval_field(2, &[1.0, 0.0, 0.0]).unwrap().as_slice(), &[0.0, 1.0, 0.5]);
        let al = catalog_load("agrachev_lee(3)").unwrap();
        assert_eq!(al.eval_field(0, &[2.0, 0.0]).unwrap().as_slice(), &[0.0, 4.0]);
        assert!(matches!(h.eval_field(3, &[0.0; 3]), Err(Error::IndexOutOfRange { .. })));
        assert!(h.eval_field(0, &[0.0; 2]).is_err());
    }

    #[test]
    fn periodic_displacement_wraps() {
        let u = catalog_load("unicycle").unwrap();
        let d = u.displacement(&[0.0, 0.0, 3.0], &[0.0, 0.0, -3.0]);
        assert!((d[2] - (2.0 * PI - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn frame_examples() {
        let h = catalog_load("heisenberg").unwrap();
        let f = bracket_frame(&h, &[0.0; 3], 2).unwrap();
        let names: Vec<String> = f.words.iter().map(|w| w.to_string()).collect();
        assert_eq!(names, vec!["[1]", "[2]", "[[1,2]]"]);
        assert_eq!(f.step, 2);

        let m = catalog_load("martinet").unwrap();
        let f = bracket_frame(&m, &[0.0; 3], 3).unwrap();
        assert_eq!(f.step, 3);
        assert_eq!(f.words[2].to_string(), "[[1,[1,2]]]");
        assert!(matches!(
            bracket_frame(&m, &[0.0; 3], 2),
            Err(Error::NotBracketGenerating { rank: 2, .. })
        ));

        let t = catalog_load("trivial(4)").unwrap();
        let f = bracket_frame(&t, &[0.3; 4], 1).unwrap();
        assert_eq!(f.step, 1);
        assert_eq!(f.words, (1..=4).map(BracketWord::leaf).collect::<Vec<_>>());
    }

    #[test]
    fn martinet_bracket() {
        let m = catalog_load("martinet").unwrap();
        let b = lie_bracket(&m.controlled()[0], &m.controlled()[1]).unwrap();
        let v = b.eval(&[0.7, 0.1, -0.2]);
        assert_eq!(v.as_slice(), &[0.0, 0.0, 1.4]);
    }
}
