//! Exact multivariate expressions closed under differentiation.
//!
//! A [`TrigPoly`] is a finite sum of monomials in the coordinates `x_i` and in
//! `cos x_i`, `sin x_i`. Plain polynomials are the special case with no
//! trigonometric factors. The ring is closed under partial differentiation and
//! multiplication, which is all Lie brackets need.

use std::collections::BTreeMap;
use std::fmt;

/// Exponent vector of length `3n`: `[x_0.., cos x_0.., sin x_0..]`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn one(n: usize) -> Self {
        Monomial(vec![0; 3 * n])
    }

    pub fn from_exponents(exponents: &[u32]) -> Self {
        let n = exponents.len();
        let mut m = Self::one(n);
        m.0[..n].copy_from_slice(exponents);
        m
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    fn is_polynomial(&self) -> bool {
        let n = self.0.len() / 3;
        self.0[n..].iter().all(|&e| e == 0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrigPoly {
    n: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl TrigPoly {
    pub fn zero(n: usize) -> Self {
        TrigPoly { n, terms: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut p = Self::zero(n);
        p.add_term(Monomial::one(n), c);
        p
    }

    /// The coordinate function `x_i`.
    pub fn var(n: usize, i: usize) -> Self {
        Self::atom(n, i, 1.0)
    }

    pub fn cos(n: usize, i: usize) -> Self {
        Self::atom(n, n + i, 1.0)
    }

    pub fn sin(n: usize, i: usize) -> Self {
        Self::atom(n, 2 * n + i, 1.0)
    }

    /// `coef * prod_i x_i^{e_i}`.
    pub fn monomial(coef: f64, exponents: &[u32]) -> Self {
        let n = exponents.len();
        let mut p = Self::zero(n);
        p.add_term(Monomial::from_exponents(exponents), coef);
        p
    }

    fn atom(n: usize, slot: usize, coef: f64) -> Self {
        let mut m = Monomial::one(n);
        m.0[slot] = 1;
        let mut p = Self::zero(n);
        p.add_term(m, coef);
        p
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// True when no trigonometric factor appears.
    pub fn is_polynomial(&self) -> bool {
        self.terms.keys().all(Monomial::is_polynomial)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if *o.get() == 0.0 {
                    o.remove();
                }
            }
        }
    }

    pub fn add(&self, other: &TrigPoly) -> TrigPoly {
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &TrigPoly) -> TrigPoly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> TrigPoly {
        let mut out = Self::zero(self.n);
        for (m, &c) in &self.terms {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &TrigPoly) -> TrigPoly {
        let mut out = Self::zero(self.n);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    /// Partial derivative with respect to `x_i`.
    pub fn derivative(&self, i: usize) -> TrigPoly {
        let n = self.n;
        let (xs, cs, ss) = (i, n + i, 2 * n + i);
        let mut out = Self::zero(n);
        for (m, &c) in &self.terms {
            let e = &m.0;
            if e[xs] > 0 {
                let mut d = m.clone();
                d.0[xs] -= 1;
                out.add_term(d, c * e[xs] as f64);
            }
            // d/dx cos^k = -k cos^{k-1} sin
            if e[cs] > 0 {
                let mut d = m.clone();
                d.0[cs] -= 1;
                d.0[ss] += 1;
                out.add_term(d, -c * e[cs] as f64);
            }
            // d/dx sin^k = k sin^{k-1} cos
            if e[ss] > 0 {
                let mut d = m.clone();
                d.0[ss] -= 1;
                d.0[cs] += 1;
                out.add_term(d, c * e[ss] as f64);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.compile().eval(&Basis::new(x, !self.is_polynomial()))
    }

    pub fn compile(&self) -> CompiledPoly {
        let terms = self
            .terms
            .iter()
            .map(|(m, &c)| CompiledTerm {
                coef: c,
                factors: m
                    .0
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(slot, &e)| (slot as u32, e as i32))
                    .collect(),
            })
            .collect();
        CompiledPoly { terms }
    }
}

impl fmt::Display for TrigPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let n = self.n;
        for (k, (m, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            for (slot, &e) in m.0.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let name = match slot / n {
                    0 => format!("x{}", slot % n),
                    1 => format!("cos(x{})", slot % n),
                    _ => format!("sin(x{})", slot % n),
                };
                if e == 1 {
                    write!(f, "*{name}")?;
                } else {
                    write!(f, "*{name}^{e}")?;
                }
            }
        }
        Ok(())
    }
}

/// Values of the atoms `x_i, cos x_i, sin x_i` at one point.
pub struct Basis {
    values: Vec<f64>,
}

impl Basis {
    pub fn new(x: &[f64], trig: bool) -> Self {
        let n = x.len();
        let mut values = vec![0.0; 3 * n];
        values[..n].copy_from_slice(x);
        if trig {
            for i in 0..n {
                let (s, c) = x[i].sin_cos();
                values[n + i] = c;
                values[2 * n + i] = s;
            }
        }
        Basis { values }
    }

    pub fn refill(&mut self, x: &[f64], trig: bool) {
        let n = x.len();
        self.values[..n].copy_from_slice(x);
        if trig {
            for i in 0..n {
                let (s, c) = x[i].sin_cos();
                self.values[n + i] = c;
                self.values[2 * n + i] = s;
            }
        }
    }
}

#[derive(Clone, Debug)]
struct CompiledTerm {
    coef: f64,
    factors: Vec<(u32, i32)>,
}

/// Flattened form of a [`TrigPoly`] for repeated evaluation.
#[derive(Clone, Debug, Default)]
pub struct CompiledPoly {
    terms: Vec<CompiledTerm>,
}

impl CompiledPoly {
    #[inline]
    pub fn eval(&self, basis: &Basis) -> f64 {
        let mut acc = 0.0;
        for t in &self.terms {
            let mut v = t.coef;
            for &(slot, e) in &t.factors {
                let b = basis.values[slot as usize];
                v *= if e == 1 { b } else { b.powi(e) };
            }
            acc += v;
        }
        acc
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_polynomial() {
        // p = 3 x0^2 x1 + x1
        let p = TrigPoly::monomial(3.0, &[2, 1]).add(&TrigPoly::var(2, 1));
        let dx0 = p.derivative(0);
        let dx1 = p.derivative(1);
        assert_eq!(dx0, TrigPoly::monomial(6.0, &[1, 1]));
        assert_eq!(dx1, TrigPoly::monomial(3.0, &[2, 0]).add(&TrigPoly::constant(2, 1.0)));
        assert_eq!(p.eval(&[2.0, 0.5]), 3.0 * 4.0 * 0.5 + 0.5);
    }

    #[test]
    fn trig_derivatives() {
        let c = TrigPoly::cos(1, 0);
        let s = TrigPoly::sin(1, 0);
        assert_eq!(c.derivative(0), s.scale(-1.0));
        assert_eq!(s.derivative(0), c);
        let x = 0.7_f64;
        assert!((c.mul(&s).eval(&[x]) - x.cos() * x.sin()).abs() < 1e-15);
        assert!(!c.is_polynomial());
    }

    #[test]
    fn cancellation_is_canonical() {
        let p = TrigPoly::var(2, 0).mul(&TrigPoly::var(2, 1));
        assert!(p.sub(&p).is_zero());
        let q = TrigPoly::var(2, 0).add(&TrigPoly::constant(2, 2.0));
        assert_eq!(q.sub(&TrigPoly::var(2, 0)), TrigPoly::constant(2, 2.0));
    }
}
