use super::field::VectorField;
use super::poly::TrigPoly;
use super::ControlSystem;
use crate::error::{Error, Result};

pub const CATALOG_NAMES: &[&str] = &[
    "heisenberg",
    "martinet",
    "unicycle",
    "agrachev_lee(k)",
    "grushin",
    "free_step2_rank2",
    "trivial(n)",
];

fn field(comps: Vec<TrigPoly>) -> VectorField {
    VectorField::new(comps).expect("catalog field is well formed")
}

fn parse_arg(name: &str, prefix: &str) -> Option<Result<u32>> {
    let rest = name.strip_prefix(prefix)?;
    if rest.is_empty() {
        return Some(Err(Error::UnknownSystem(name.to_string())));
    }
    let inner = rest.strip_prefix('(').and_then(|r| r.strip_suffix(')'));
    Some(
        inner
            .and_then(|s| s.trim().parse::<u32>().ok())
            .ok_or_else(|| Error::UnknownSystem(name.to_string())),
    )
}

pub fn catalog_load(name: &str) -> Result<ControlSystem> {
    let key = name.trim().to_ascii_lowercase();
    let c = |n, v| TrigPoly::constant(n, v);
    let z = TrigPoly::zero;
    let x = TrigPoly::var;
    match key.as_str() {
        // X1 = dx - y/2 dz, X2 = dy + x/2 dz
        "heisenberg" => ControlSystem::new(
            "heisenberg",
            None,
            vec![
                field(vec![c(3, 1.0), z(3), x(3, 1).scale(-0.5)]),
                field(vec![z(3), c(3, 1.0), x(3, 0).scale(0.5)]),
            ],
            None,
        ),
        // X1 = dx, X2 = dy + x^2 dz
        "martinet" => ControlSystem::new(
            "martinet",
            None,
            vec![
                field(vec![c(3, 1.0), z(3), z(3)]),
                field(vec![z(3), c(3, 1.0), TrigPoly::monomial(1.0, &[2, 0, 0])]),
            ],
            None,
        ),
        // (x, y, theta): X1 = cos(theta) dx + sin(theta) dy, X2 = dtheta
        "unicycle" => ControlSystem::new(
            "unicycle",
            None,
            vec![
                field(vec![TrigPoly::cos(3, 2), TrigPoly::sin(3, 2), z(3)]),
                field(vec![z(3), z(3), c(3, 1.0)]),
            ],
            Some(vec![false, false, true]),
        ),
        // X1 = dx, X2 = x dy
        "grushin" => ControlSystem::new(
            "grushin",
            None,
            vec![field(vec![c(2, 1.0), z(2)]), field(vec![z(2), x(2, 0)])],
            None,
        ),
        // X1 = dx1, X2 = dx2 + x1 dx3
        "free_step2_rank2" => ControlSystem::new(
            "free_step2_rank2",
            None,
            vec![
                field(vec![c(3, 1.0), z(3), z(3)]),
                field(vec![z(3), c(3, 1.0), x(3, 0)]),
            ],
            None,
        ),
        "agrachev_lee" => agrachev_lee(3),
        _ => {
            if let Some(k) = parse_arg(&key, "agrachev_lee") {
                return agrachev_lee(k?);
            }
            if let Some(n) = parse_arg(&key, "trivial") {
                let n = n? as usize;
                if n == 0 {
                    return Err(Error::UnknownSystem(name.to_string()));
                }
                return ControlSystem::new(
                    format!("trivial({n})"),
                    None,
                    (0..n).map(|i| VectorField::coordinate(n, i)).collect(),
                    None,
                );
            }
            Err(Error::UnknownSystem(name.to_string()))
        }
    }
}

/// X0 = x1^2 dx2, X1 = dx1, X2 = x1^k dx2.
fn agrachev_lee(k: u32) -> Result<ControlSystem> {
    if k < 3 {
        return Err(Error::InvalidSystem(format!("agrachev_lee requires k >= 3, got {k}")));
    }
    let z = TrigPoly::zero(2);
    ControlSystem::new(
        format!("agrachev_lee({k})"),
        Some(field(vec![z.clone(), TrigPoly::monomial(1.0, &[2, 0])])),
        vec![
            field(vec![TrigPoly::constant(2, 1.0), z.clone()]),
            field(vec![z, TrigPoly::monomial(1.0, &[k, 0])]),
        ],
        None,
    )
}
