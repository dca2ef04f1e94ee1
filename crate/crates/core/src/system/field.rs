use nalgebra::{DMatrix, DVector};

use super::poly::{Basis, CompiledPoly, TrigPoly};
use crate::error::{Error, Result};

/// A vector field on a coordinate chart of `R^n` with exact first and second
/// derivatives.
#[derive(Clone, Debug)]
pub struct VectorField {
    components: Vec<TrigPoly>,
    // d comp_i / d x_j, row-major
    jacobian: Vec<TrigPoly>,
    value_c: Vec<CompiledPoly>,
    jacobian_c: Vec<CompiledPoly>,
    // d^2 comp_i / dx_j dx_k at index (i*n + j)*n + k
    hessian_c: Vec<CompiledPoly>,
    trig: bool,
}

impl VectorField {
    pub fn new(components: Vec<TrigPoly>) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return Err(Error::InvalidSystem("vector field needs at least one component".into()));
        }
        if let Some(bad) = components.iter().find(|c| c.nvars() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: bad.nvars() });
        }
        let jacobian: Vec<TrigPoly> = components
            .iter()
            .flat_map(|c| (0..n).map(move |j| c.derivative(j)))
            .collect();
        let hessian_c = jacobian
            .iter()
            .flat_map(|dj| (0..n).map(move |k| dj.derivative(k).compile()))
            .collect();
        let trig = components.iter().any(|c| !c.is_polynomial());
        Ok(VectorField {
            value_c: components.iter().map(TrigPoly::compile).collect(),
            jacobian_c: jacobian.iter().map(TrigPoly::compile).collect(),
            hessian_c,
            components,
            jacobian,
            trig,
        })
    }

    pub fn zero(n: usize) -> Self {
        Self::new(vec![TrigPoly::zero(n); n]).expect("zero field is well formed")
    }

    /// Constant coordinate field `e_i`.
    pub fn coordinate(n: usize, i: usize) -> Self {
        let mut comps = vec![TrigPoly::zero(n); n];
        comps[i] = TrigPoly::constant(n, 1.0);
        Self::new(comps).expect("coordinate field is well formed")
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[TrigPoly] {
        &self.components
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(TrigPoly::is_zero)
    }

    pub fn is_polynomial(&self) -> bool {
        !self.trig
    }

    pub(crate) fn uses_trig(&self) -> bool {
        self.trig
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        let b = Basis::new(x, self.trig);
        DVector::from_iterator(self.dim(), self.value_c.iter().map(|c| c.eval(&b)))
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let b = Basis::new(x, self.trig);
        DMatrix::from_row_iterator(n, n, self.jacobian_c.iter().map(|c| c.eval(&b)))
    }

    /// Second derivative as the bilinear map `(a, b) -> d^2X(x)[a, b]`.
    pub fn second_derivative(&self, x: &[f64], a: &[f64], b: &[f64]) -> DVector<f64> {
        let n = self.dim();
        let basis = Basis::new(x, self.trig);
        let mut out = DVector::zeros(n);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                for k in 0..n {
                    let h = &self.hessian_c[(i * n + j) * n + k];
                    if !h.is_zero() {
                        acc += h.eval(&basis) * a[j] * b[k];
                    }
                }
            }
            out[i] = acc;
        }
        out
    }

    /// Per-component Hessians `d^2 X_i(x)`.
    pub fn hessians(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        let n = self.dim();
        let basis = Basis::new(x, self.trig);
        (0..n)
            .map(|i| {
                DMatrix::from_row_iterator(
                    n,
                    n,
                    (0..n * n).map(|jk| self.hessian_c[i * n * n + jk].eval(&basis)),
                )
            })
            .collect()
    }

    #[inline]
    pub(crate) fn accumulate_value(&self, basis: &Basis, scale: f64, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.value_c) {
            if !c.is_zero() {
                *o += scale * c.eval(basis);
            }
        }
    }

    #[inline]
    pub(crate) fn accumulate_jacobian(&self, basis: &Basis, scale: f64, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.jacobian_c) {
            if !c.is_zero() {
                *o += scale * c.eval(basis);
            }
        }
    }

    #[inline]
    pub(crate) fn value_into(&self, basis: &Basis, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.value_c) {
            *o = c.eval(basis);
        }
    }
}

/// Symbolic Lie bracket `[f, g] = (dg) f - (df) g`.
pub fn lie_bracket(f: &VectorField, g: &VectorField) -> Result<VectorField> {
    let n = f.dim();
    if g.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: g.dim() });
    }
    let comps = (0..n)
        .map(|i| {
            let mut acc = TrigPoly::zero(n);
            for j in 0..n {
                acc = acc
                    .add(&g.jacobian[i * n + j].mul(&f.components[j]))
                    .sub(&f.jacobian[i * n + j].mul(&g.components[j]));
            }
            acc
        })
        .collect();
    VectorField::new(comps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heisenberg_fields() -> (VectorField, VectorField) {
        let n = 3;
        let x1 = VectorField::new(vec![
            TrigPoly::constant(n, 1.0),
            TrigPoly::zero(n),
            TrigPoly::var(n, 1).scale(-0.5),
        ])
        .unwrap();
        let x2 = VectorField::new(vec![
            TrigPoly::zero(n),
            TrigPoly::constant(n, 1.0),
            TrigPoly::var(n, 0).scale(0.5),
        ])
        .unwrap();
        (x1, x2)
    }

    #[test]
    fn heisenberg_bracket_is_dz() {
        let (x1, x2) = heisenberg_fields();
        let b = lie_bracket(&x1, &x2).unwrap();
        assert_eq!(b.components()[0], TrigPoly::zero(3));
        assert_eq!(b.components()[1], TrigPoly::zero(3));
        assert_eq!(b.components()[2], TrigPoly::constant(3, 1.0));
    }

    #[test]
    fn self_bracket_vanishes() {
        let (x1, _) = heisenberg_fields();
        assert!(lie_bracket(&x1, &x1).unwrap().is_zero());
    }

    #[test]
    fn second_derivative_is_symmetric() {
        let n = 2;
        let f = VectorField::new(vec![
            TrigPoly::monomial(1.0, &[2, 1]),
            TrigPoly::var(n, 0).mul(&TrigPoly::sin(n, 1)),
        ])
        .unwrap();
        let x = [0.3, -0.7];
        let (a, b) = ([0.2, 1.1], [-0.4, 0.9]);
        let ab = f.second_derivative(&x, &a, &b);
        let ba = f.second_derivative(&x, &b, &a);
        assert!((ab - ba).norm() < 1e-14);
    }
}
