//! The consistency condition split into derivative coefficients and a
//! pointwise matrix residual, plus the two-particle coefficient equations.

use crate::clifford::{commutator, embed, BasisClass, BasisElement, CMatrix, GammaRep, TensorBasisElement};
use crate::dsl::{EvalError, Expr, SpacetimeConfig};
use crate::potential::{
    sample_configs, MultiTimeSystem, Potential, PotentialError, PotentialTerm, Region,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use std::collections::BTreeMap;
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_SAMPLES: usize = 100;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error)]
pub enum ConsistencyError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid particle pair ({0}, {1})")]
    InvalidPair(usize, usize),
}

impl ConsistencyError {
    pub fn is_numerical(&self) -> bool {
        match self {
            ConsistencyError::Eval(_) => true,
            ConsistencyError::Potential(p) => p.is_numerical(),
            _ => false,
        }
    }
}

fn check_pair(sys: &MultiTimeSystem, j: usize, k: usize) -> Result<(), ConsistencyError> {
    if j == k || j == 0 || k == 0 || j > sys.n || k > sys.n {
        return Err(ConsistencyError::InvalidPair(j, k));
    }
    Ok(())
}

fn embedded_alpha(rep: &GammaRep, a: usize, k: usize, n: usize) -> CMatrix {
    embed(&rep.alpha[a], k, n).expect("particle checked")
}

/// `[α^a_j, V_k]` for a = 1,2,3 followed by `[α^a_k, V_j]`.
pub fn derivative_coefficients(
    sys: &MultiTimeSystem,
    j: usize,
    k: usize,
    x: &SpacetimeConfig,
    rep: &GammaRep,
) -> Result<Vec<CMatrix>, ConsistencyError> {
    check_pair(sys, j, k)?;
    let vj = sys.potential(j).evaluate(x, rep)?;
    let vk = sys.potential(k).evaluate(x, rep)?;
    let mut out = Vec::with_capacity(6);
    for a in 1..4 {
        out.push(commutator(&embedded_alpha(rep, a, j, sys.n), &vk));
    }
    for a in 1..4 {
        out.push(commutator(&embedded_alpha(rep, a, k, sys.n), &vj));
    }
    Ok(out)
}

/// `[V_k,V_j] + m_k[γ⁰_k,V_j] − m_j[γ⁰_j,V_k] − iα^μ_k ∂_{k,μ}V_j + iα^ν_j ∂_{j,ν}V_k`.
pub fn zeroth_order_residual(
    sys: &MultiTimeSystem,
    j: usize,
    k: usize,
    x: &SpacetimeConfig,
    rep: &GammaRep,
) -> Result<CMatrix, ConsistencyError> {
    zeroth_order_residual_with(sys, j, k, x, rep, &[0, 1, 2, 3])
}

/// As [`zeroth_order_residual`] with the derivative sums restricted to
/// `mus`; the line model keeps only μ ∈ {0, 3}.
pub fn zeroth_order_residual_with(
    sys: &MultiTimeSystem,
    j: usize,
    k: usize,
    x: &SpacetimeConfig,
    rep: &GammaRep,
    mus: &[usize],
) -> Result<CMatrix, ConsistencyError> {
    check_pair(sys, j, k)?;
    let n = sys.n;
    let (vj, vk) = (sys.potential(j), sys.potential(k));
    let mj = vj.evaluate(x, rep)?;
    let mk = vk.evaluate(x, rep)?;
    let g0j = embed(&rep.gamma[0], j, n).expect("checked");
    let g0k = embed(&rep.gamma[0], k, n).expect("checked");
    let mut r = commutator(&mk, &mj) + commutator(&g0k, &mj) * Complex64::from(sys.mass(k))
        - commutator(&g0j, &mk) * Complex64::from(sys.mass(j));
    for &mu in mus {
        if vj.depends_on(k, mu) {
            r -= embedded_alpha(rep, mu, k, n) * vj.partial(k, mu, x, rep)? * I;
        }
        if vk.depends_on(j, mu) {
            r += embedded_alpha(rep, mu, j, n) * vk.partial(j, mu, x, rep)? * I;
        }
    }
    Ok(r)
}

/// Matrix decomposition of the curvature operator `F_{kj}`.
#[derive(Debug, Clone)]
pub struct Curvature {
    /// `((particle, a), M)`: F contains `M ∂_{particle,a}`.
    pub first_order: Vec<((usize, usize), CMatrix)>,
    pub zeroth: CMatrix,
}

impl Curvature {
    pub fn norm(&self) -> f64 {
        let first: f64 = self.first_order.iter().map(|(_, m)| m.norm_squared()).sum();
        (first + self.zeroth.norm_squared()).sqrt()
    }
}

/// `F = −i·(commutator operator)`, whose zeroth-order part is
/// `−i·zeroth_order_residual(j,k)`. The first-order coefficients are
/// `−i·(+i[α^a_j,V_k])` on `∂_{j,a}` and `−i·(−i[α^a_k,V_j])` on `∂_{k,a}`.
pub fn curvature(
    sys: &MultiTimeSystem,
    j: usize,
    k: usize,
    x: &SpacetimeConfig,
    rep: &GammaRep,
) -> Result<Curvature, ConsistencyError> {
    let d = derivative_coefficients(sys, j, k, x, rep)?;
    let zeroth = zeroth_order_residual(sys, j, k, x, rep)? * (-I);
    let mut first_order = Vec::with_capacity(6);
    for a in 1..4 {
        first_order.push(((j, a), &d[a - 1] * (-I) * I));
    }
    for a in 1..4 {
        first_order.push(((k, a), &d[a + 2] * (-I) * (-I)));
    }
    Ok(Curvature {
        first_order,
        zeroth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "CONSISTENT_AT_TOL")]
    ConsistentAtTol,
    #[serde(rename = "INCONSISTENT")]
    Inconsistent,
}

/// cc1..cc16 in numeric order.
#[derive(Debug, Clone, PartialEq)]
pub struct CcResiduals(pub Vec<(String, f64)>);

impl CcResiduals {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.0.iter().find(|(k, _)| k == id).map(|(_, v)| *v)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }

    pub fn all_below(&self, tol: f64) -> bool {
        self.0.iter().all(|(_, v)| *v < tol)
    }
}

impl Serialize for CcResiduals {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            m.serialize_entry(k, v)?;
        }
        m.end()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub pair: [usize; 2],
    pub deriv_coeff_sup: Vec<f64>,
    pub zeroth_sup: f64,
    pub zeroth_norms: Vec<f64>,
    pub cc: Option<CcResiduals>,
    pub verdict: Verdict,
    pub tol: f64,
    pub region: Region,
    pub nsamples: usize,
}

/// Draws the samples with a ChaCha8 stream seeded by `seed`.
pub fn draw_samples(
    region: Region,
    n: usize,
    nsamples: usize,
    seed: u64,
) -> Result<Vec<SpacetimeConfig>, ConsistencyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample_configs(region, n, nsamples, &mut rng)?)
}

pub fn check_consistency(
    sys: &MultiTimeSystem,
    region: Region,
    nsamples: usize,
    tol: f64,
    rep: &GammaRep,
    seed: u64,
) -> Result<Vec<ConsistencyReport>, ConsistencyError> {
    if nsamples == 0 {
        return Err(ConsistencyError::Unsupported("nsamples must be at least 1".into()));
    }
    let samples = draw_samples(region, sys.n, nsamples, seed)?;
    check_consistency_on(sys, &samples, region, tol, rep)
}

/// One report per unordered pair `j < k`; the residual for `(k, j)` is the
/// negative of the one for `(j, k)`. The verdict uses the derivative
/// coefficients and zeroth-order residuals; cc residuals are reported
/// alongside when the system has a coefficient form.
pub fn check_consistency_on(
    sys: &MultiTimeSystem,
    samples: &[SpacetimeConfig],
    region: Region,
    tol: f64,
    rep: &GammaRep,
) -> Result<Vec<ConsistencyReport>, ConsistencyError> {
    let cc = if sys.n == 2 {
        match to_coefficient_form(sys) {
            Ok(cs) => Some(cc_residuals(&cs, [sys.masses[0], sys.masses[1]], samples)?),
            Err(ConsistencyError::PreconditionViolated(_)) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let mut reports = Vec::new();
    for j in 1..=sys.n {
        for k in j + 1..=sys.n {
            let mut deriv = vec![0.0f64; 6];
            let mut norms = Vec::with_capacity(samples.len());
            for x in samples {
                for (slot, m) in deriv.iter_mut().zip(derivative_coefficients(sys, j, k, x, rep)?) {
                    *slot = slot.max(m.norm());
                }
                norms.push(zeroth_order_residual(sys, j, k, x, rep)?.norm());
            }
            let zeroth_sup = norms.iter().copied().fold(0.0, f64::max);
            let ok = deriv.iter().all(|d| *d < tol) && zeroth_sup < tol;
            reports.push(ConsistencyReport {
                pair: [j, k],
                deriv_coeff_sup: deriv,
                zeroth_sup,
                zeroth_norms: norms,
                cc: if (j, k) == (1, 2) { cc.clone() } else { None },
                verdict: if ok {
                    Verdict::ConsistentAtTol
                } else {
                    Verdict::Inconsistent
                },
                tol,
                region,
                nsamples: samples.len(),
            });
        }
    }
    Ok(reports)
}

/// Slot of a two-particle basis term in the coefficient expansion. `j` is
/// the potential's particle, `own` its factor on particle `j` and `other`
/// the factor on the other particle.
fn slot_name(j: usize, own: BasisElement, other: BasisElement) -> Option<String> {
    let chiral = if other == BasisElement::IDENTITY {
        false
    } else if other == BasisElement::GAMMA5 {
        true
    } else {
        return None;
    };
    let mu = own.mu;
    let name = match (j, chiral, own.class) {
        (1, false, BasisClass::Alpha) => format!("W1_{mu}"),
        (1, false, BasisClass::G5Alpha) => format!("Y1_{mu}"),
        (1, false, BasisClass::Gamma) => format!("A{mu}"),
        (1, false, BasisClass::G5Gamma) => format!("B{mu}"),
        (1, true, BasisClass::Alpha) => format!("X1_{mu}"),
        (1, true, BasisClass::G5Alpha) => format!("Z1_{mu}"),
        (1, true, BasisClass::Gamma) => format!("C{mu}"),
        (1, true, BasisClass::G5Gamma) => format!("D{mu}"),
        (2, false, BasisClass::Alpha) => format!("W2_{mu}"),
        (2, false, BasisClass::G5Alpha) => format!("X2_{mu}"),
        (2, false, BasisClass::Gamma) => format!("E{mu}"),
        (2, false, BasisClass::G5Gamma) => format!("F{mu}"),
        (2, true, BasisClass::Alpha) => format!("Y2_{mu}"),
        (2, true, BasisClass::G5Alpha) => format!("Z2_{mu}"),
        (2, true, BasisClass::Gamma) => format!("G{mu}"),
        (2, true, BasisClass::G5Gamma) => format!("H{mu}"),
        _ => return None,
    };
    Some(name)
}

/// The 64 scalar fields of a two-particle system whose potentials only
/// carry `𝟙` or `γ⁵` on the other particle.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    fields: BTreeMap<String, Expr>,
}

impl CoefficientSet {
    pub fn zero() -> Self {
        CoefficientSet {
            fields: Self::field_names().into_iter().map(|n| (n, Expr::zero())).collect(),
        }
    }

    /// `A0..H3` then `W1_0..Z2_3`.
    pub fn field_names() -> Vec<String> {
        let mut out = Vec::with_capacity(64);
        for l in ["A", "B", "C", "D", "E", "F", "G", "H"] {
            for mu in 0..4 {
                out.push(format!("{l}{mu}"));
            }
        }
        for l in ["W", "X", "Y", "Z"] {
            for i in 1..=2 {
                for mu in 0..4 {
                    out.push(format!("{l}{i}_{mu}"));
                }
            }
        }
        out
    }

    pub fn field(&self, name: &str) -> Option<&Expr> {
        self.fields.get(name)
    }

    pub fn field_mut(&mut self, name: &str) -> Option<&mut Expr> {
        self.fields.get_mut(name)
    }

    /// `f[name]`; panics on unknown names.
    pub fn get(&self, name: &str) -> &Expr {
        &self.fields[name]
    }

    pub fn set(&mut self, name: &str, e: Expr) {
        *self.fields.get_mut(name).expect("known field") = e;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Expr)> {
        self.fields.iter()
    }

    /// Names of fields that are not identically zero.
    pub fn nonzero_fields(&self) -> Vec<String> {
        Self::field_names()
            .into_iter()
            .filter(|n| !self.fields[n].is_zero())
            .collect()
    }

    /// Rebuilds `V_1`, `V_2` from the fields.
    pub fn to_system(&self, masses: [f64; 2]) -> Result<MultiTimeSystem, PotentialError> {
        let mut v = [Vec::new(), Vec::new()];
        for j in 1..=2 {
            for other in [BasisElement::IDENTITY, BasisElement::GAMMA5] {
                for own in BasisElement::all() {
                    let name = slot_name(j, own, other).expect("valid slot");
                    let e = &self.fields[&name];
                    if e.is_zero() {
                        continue;
                    }
                    let factors = if j == 1 { vec![own, other] } else { vec![other, own] };
                    v[j - 1].push(PotentialTerm::new(TensorBasisElement::new(factors), e.clone()));
                }
            }
        }
        let [v1, v2] = v;
        MultiTimeSystem::new(
            "coefficient_form",
            masses.to_vec(),
            vec![Potential::new(1, v1), Potential::new(2, v2)],
        )
    }
}

/// Reads the 64 fields off the potentials term by term.
pub fn to_coefficient_form(sys: &MultiTimeSystem) -> Result<CoefficientSet, ConsistencyError> {
    if sys.n != 2 {
        return Err(ConsistencyError::Unsupported(format!(
            "coefficient form needs 2 particles, system has {}",
            sys.n
        )));
    }
    let mut cs = CoefficientSet::zero();
    for j in 1..=2 {
        let o = 3 - j;
        for t in &sys.potential(j).terms {
            let own = t.basis.factors[j - 1];
            let other = t.basis.factors[o - 1];
            let name = slot_name(j, own, other).ok_or_else(|| {
                ConsistencyError::PreconditionViolated(format!(
                    "V{j} carries {other} on particle {o}, outside span{{1, g5}}"
                ))
            })?;
            let slot = cs.fields.get_mut(&name).expect("known field");
            *slot = Expr::add(slot.clone(), t.coeff.clone());
        }
    }
    Ok(cs)
}

struct FieldEval<'a> {
    cs: &'a CoefficientSet,
    x: &'a SpacetimeConfig,
    values: BTreeMap<&'a str, Complex64>,
}

impl<'a> FieldEval<'a> {
    fn new(cs: &'a CoefficientSet, x: &'a SpacetimeConfig) -> Result<Self, EvalError> {
        let mut values = BTreeMap::new();
        for (k, e) in &cs.fields {
            values.insert(k.as_str(), e.evaluate(x)?);
        }
        Ok(FieldEval { cs, x, values })
    }

    fn v(&self, name: &str) -> Complex64 {
        self.values[name]
    }

    fn d(&self, name: &str, k: usize, mu: usize) -> Result<Complex64, EvalError> {
        self.cs.fields[name].differentiate(k, mu).evaluate(self.x)
    }
}

/// Sup residuals of cc1..cc16 over samples and all μ, ν. The mass shifts
/// `m_1δ_{0μ}` and `m_2δ_{0ν}` are added to A and E here. Families 7, 8,
/// 11 and 12 carry the derivative with the sign that makes the system
/// equivalent to the matrix residual.
pub fn cc_residuals(
    cs: &CoefficientSet,
    masses: [f64; 2],
    samples: &[SpacetimeConfig],
) -> Result<CcResiduals, EvalError> {
    let mut sup = [0.0f64; 16];
    for x in samples {
        let f = FieldEval::new(cs, x)?;
        for mu in 0..4 {
            for nu in 0..4 {
                let r = cc_values(&f, masses, mu, nu)?;
                for (s, v) in sup.iter_mut().zip(r) {
                    *s = s.max(v.norm());
                }
            }
        }
    }
    Ok(CcResiduals(
        sup.iter()
            .enumerate()
            .map(|(i, v)| (format!("cc{}", i + 1), *v))
            .collect(),
    ))
}

/// `lhs − rhs` of each family at one point and index pair.
fn cc_values(f: &FieldEval, masses: [f64; 2], mu: usize, nu: usize) -> Result<[Complex64; 16], EvalError> {
    let half_i = Complex64::new(0.0, 0.5);
    let delta = |i: usize| if i == 0 { 1.0 } else { 0.0 };
    let s = |l: &str, i: usize| format!("{l}{i}");
    let w = |l: &str, p: usize, i: usize| format!("{l}{p}_{i}");
    let a = f.v(&s("A", mu)) + masses[0] * delta(mu);
    let e = f.v(&s("E", nu)) + masses[1] * delta(nu);
    let (b, c, d) = (f.v(&s("B", mu)), f.v(&s("C", mu)), f.v(&s("D", mu)));
    let (ff, g, h) = (f.v(&s("F", nu)), f.v(&s("G", nu)), f.v(&s("H", nu)));
    let (y2, z2) = (f.v(&w("Y", 2, nu)), f.v(&w("Z", 2, nu)));
    let (x1, z1) = (f.v(&w("X", 1, mu)), f.v(&w("Z", 1, mu)));
    let cross = |l: &str| -> Result<Complex64, EvalError> {
        Ok(f.d(&w(l, 2, nu), 1, mu)? - f.d(&w(l, 1, mu), 2, nu)?)
    };
    let d2 = |l: &str| f.d(&s(l, mu), 2, nu);
    let d1 = |l: &str| f.d(&s(l, nu), 1, mu);
    Ok([
        cross("W")?,
        cross("X")?,
        cross("Y")?,
        cross("Z")?,
        b * y2 + d * z2 - half_i * d2("A")?,
        a * y2 + c * z2 - half_i * d2("B")?,
        b * z2 + d * y2 - half_i * d2("C")?,
        a * z2 + c * y2 - half_i * d2("D")?,
        ff * x1 + h * z1 - half_i * d1("E")?,
        e * x1 + g * z1 - half_i * d1("F")?,
        ff * z1 + h * x1 - half_i * d1("G")?,
        e * z1 + g * x1 - half_i * d1("H")?,
        b * g - c * ff,
        b * h - c * e,
        a * g - d * ff,
        a * h - d * e,
    ])
}

/// Report of one coefficient-form evaluation, for the `cc` command.
#[derive(Debug, Clone, Serialize)]
pub struct CcReport {
    pub nonzero_fields: Vec<String>,
    pub cc: CcResiduals,
    pub max: f64,
    pub tol: f64,
    pub all_below_tol: bool,
    pub nsamples: usize,
    pub region: Region,
}

pub fn cc_report(
    sys: &MultiTimeSystem,
    samples: &[SpacetimeConfig],
    region: Region,
    tol: f64,
) -> Result<CcReport, ConsistencyError> {
    let cs = to_coefficient_form(sys)?;
    let cc = cc_residuals(&cs, [sys.masses[0], sys.masses[1]], samples)?;
    Ok(CcReport {
        nonzero_fields: cs.nonzero_fields(),
        max: cc.max(),
        all_below_tol: cc.all_below(tol),
        cc,
        tol,
        nsamples: samples.len(),
        region,
    })
}
