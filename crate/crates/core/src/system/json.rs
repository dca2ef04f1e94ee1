use serde::{Deserialize, Serialize};

use super::field::VectorField;
use super::poly::TrigPoly;
use super::ControlSystem;
use crate::error::{Error, Result};

/// One polynomial term `coef * prod_i x_i^{exponents[i]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyTermJson {
    pub coef: f64,
    pub exponents: Vec<u32>,
}

/// Polynomial system description. A vector field is a list of `n`
/// component polynomials and a polynomial is a list of terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemJson {
    pub name: String,
    pub n: usize,
    pub d: usize,
    #[serde(default)]
    pub drift: Vec<Vec<PolyTermJson>>,
    pub fields: Vec<Vec<Vec<PolyTermJson>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periodic: Option<Vec<bool>>,
}

fn poly_from_terms(n: usize, terms: &[PolyTermJson]) -> Result<TrigPoly> {
    let mut p = TrigPoly::zero(n);
    for t in terms {
        if t.exponents.len() != n {
            return Err(Error::InvalidSystem(format!(
                "term has {} exponents, expected {n}",
                t.exponents.len()
            )));
        }
        if !t.coef.is_finite() {
            return Err(Error::InvalidSystem("non-finite coefficient".into()));
        }
        p = p.add(&TrigPoly::monomial(t.coef, &t.exponents));
    }
    Ok(p)
}

fn field_from_json(n: usize, comps: &[Vec<PolyTermJson>]) -> Result<VectorField> {
    if comps.len() != n {
        return Err(Error::InvalidSystem(format!("field has {} components, expected {n}", comps.len())));
    }
    VectorField::new(comps.iter().map(|c| poly_from_terms(n, c)).collect::<Result<_>>()?)
}

fn field_to_json(f: &VectorField) -> Result<Vec<Vec<PolyTermJson>>> {
    if !f.is_polynomial() {
        return Err(Error::UnsupportedRepresentation(
            "only polynomial fields can be written as JSON".into(),
        ));
    }
    let n = f.dim();
    Ok(f.components()
        .iter()
        .map(|c| {
            c.terms()
                .map(|(m, coef)| PolyTermJson { coef, exponents: m.exponents()[..n].to_vec() })
                .collect()
        })
        .collect())
}

impl SystemJson {
    pub fn into_system(self) -> Result<ControlSystem> {
        let n = self.n;
        if n == 0 || self.d == 0 {
            return Err(Error::InvalidSystem("n and d must be at least 1".into()));
        }
        if self.fields.len() != self.d {
            return Err(Error::InvalidSystem(format!(
                "declared d = {} but {} fields given",
                self.d,
                self.fields.len()
            )));
        }
        let drift = if self.drift.is_empty() { None } else { Some(field_from_json(n, &self.drift)?) };
        let controlled = self.fields.iter().map(|f| field_from_json(n, f)).collect::<Result<Vec<_>>>()?;
        ControlSystem::new(self.name, drift, controlled, self.periodic)
    }

    pub fn from_system(system: &ControlSystem) -> Result<Self> {
        let drift = if system.is_driftless() { Vec::new() } else { field_to_json(system.drift())? };
        Ok(SystemJson {
            name: system.name().to_string(),
            n: system.n(),
            d: system.d(),
            drift,
            fields: system.controlled().iter().map(field_to_json).collect::<Result<_>>()?,
            periodic: system.periodic().iter().any(|&p| p).then(|| system.periodic().to_vec()),
        })
    }
}

impl ControlSystem {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let desc: SystemJson = serde_json::from_str(s).map_err(|e| Error::InvalidSystem(e.to_string()))?;
        desc.into_system()
    }

    pub fn to_json_string(&self) -> Result<String> {
        let desc = SystemJson::from_system(self)?;
        Ok(serde_json::to_string_pretty(&desc).expect("system JSON serializes"))
    }
}
