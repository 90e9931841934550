//! Spin-matrix valued multiplication potentials and named example systems.

use crate::clifford::{
    hermiticity_defect, zeros, BasisClass, BasisElement, CMatrix, GammaRep, TensorBasisElement,
};
use crate::consistency::CoefficientSet;
use crate::dsl::{self, EvalError, Expr, ParseError, SpacetimeConfig};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

/// Half-width of the coordinate box used for random configurations.
pub const SAMPLE_BOX: f64 = 2.0;
const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("{context}: {source}")]
    Parse {
        context: String,
        #[source]
        source: ParseError,
    },
    #[error("invalid spec file: {0}")]
    Json(String),
    #[error("invalid system: {0}")]
    Invalid(String),
    #[error("unknown builtin '{0}' (expected free, example1_vector, hoho, coefficient_form or coulomb_like)")]
    UnknownBuiltin(String),
    #[error("missing parameter: {0}")]
    MissingParameter(String),
    #[error("unknown parameter '{param}' for builtin '{builtin}'")]
    UnknownParameter { builtin: String, param: String },
    #[error("invalid parameter '{param}': {reason}")]
    InvalidParameter { param: String, reason: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("could not draw a {region} configuration after {attempts} attempts")]
    Sampling { region: &'static str, attempts: usize },
}

impl PotentialError {
    /// True for failures of numerical evaluation as opposed to malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, PotentialError::Eval(_) | PotentialError::Sampling { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTerm {
    pub basis: TensorBasisElement,
    pub coeff: Expr,
}

impl PotentialTerm {
    pub fn new(basis: TensorBasisElement, coeff: Expr) -> Self {
        PotentialTerm { basis, coeff }
    }
}

/// Evaluation is refused where `|expr| < min_abs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainGuard {
    pub expr: Expr,
    pub min_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub particle: usize,
    pub terms: Vec<PotentialTerm>,
    pub guards: Vec<DomainGuard>,
}

impl Potential {
    pub fn new(particle: usize, terms: Vec<PotentialTerm>) -> Self {
        Potential {
            particle,
            terms,
            guards: Vec::new(),
        }
    }

    pub fn zero(particle: usize) -> Self {
        Self::new(particle, Vec::new())
    }

    pub fn with_guard(mut self, expr: Expr, min_abs: f64) -> Self {
        self.guards.push(DomainGuard { expr, min_abs });
        self
    }

    fn check_guards(&self, x: &SpacetimeConfig) -> Result<(), EvalError> {
        for g in &self.guards {
            let v = g.expr.evaluate(x)?.norm();
            if v < g.min_abs {
                return Err(EvalError::Domain {
                    value: v,
                    min_abs: g.min_abs,
                });
            }
        }
        Ok(())
    }

    fn sum_terms(
        &self,
        x: &SpacetimeConfig,
        rep: &GammaRep,
        coeff: impl Fn(&Expr) -> Result<Complex64, EvalError>,
    ) -> Result<CMatrix, EvalError> {
        self.check_guards(x)?;
        let mut out = zeros(4usize.pow(x.particles() as u32));
        for t in &self.terms {
            let v = coeff(&t.coeff)?;
            if v != Complex64::new(0.0, 0.0) {
                out += rep.realize_tensor(&t.basis) * v;
            }
        }
        Ok(out)
    }

    /// Term coefficients at `X`, in term order, after the domain guards.
    pub fn coefficients(&self, x: &SpacetimeConfig) -> Result<Vec<Complex64>, EvalError> {
        self.check_guards(x)?;
        self.terms.iter().map(|t| t.coeff.evaluate(x)).collect()
    }

    /// Whether the coefficients or the guards involve `x_k^μ`.
    pub fn depends_on_with_guards(&self, k: usize, mu: usize) -> bool {
        self.depends_on(k, mu) || self.guards.iter().any(|g| g.expr.depends_on(k, mu))
    }

    /// `V(X) = Σ coeff(X) · basis`.
    pub fn evaluate(&self, x: &SpacetimeConfig, rep: &GammaRep) -> Result<CMatrix, EvalError> {
        self.sum_terms(x, rep, |e| e.evaluate(x))
    }

    /// `∂V/∂x_k^μ` at `X`, from symbolic derivatives of the coefficients.
    pub fn partial(
        &self,
        k: usize,
        mu: usize,
        x: &SpacetimeConfig,
        rep: &GammaRep,
    ) -> Result<CMatrix, EvalError> {
        self.sum_terms(x, rep, |e| e.differentiate(k, mu).evaluate(x))
    }

    /// Term-wise symbolic derivative.
    pub fn derivative(&self, k: usize, mu: usize) -> Potential {
        Potential {
            particle: self.particle,
            terms: self
                .terms
                .iter()
                .map(|t| PotentialTerm::new(t.basis.clone(), t.coeff.differentiate(k, mu)))
                .filter(|t| !t.coeff.is_zero())
                .collect(),
            guards: self.guards.clone(),
        }
    }

    pub fn depends_on(&self, k: usize, mu: usize) -> bool {
        self.terms.iter().any(|t| t.coeff.depends_on(k, mu))
    }

    /// No coordinate appears in any coefficient.
    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|t| !t.coeff.has_coordinates())
    }

    /// Every term is a multiple of the identity.
    pub fn is_scalar(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.basis.factors.iter().all(|f| *f == BasisElement::IDENTITY))
    }

    pub fn scaled(&self, factor: Complex64) -> Potential {
        Potential {
            particle: self.particle,
            terms: self
                .terms
                .iter()
                .map(|t| PotentialTerm::new(t.basis.clone(), Expr::mul(Expr::num(factor), t.coeff.clone())))
                .collect(),
            guards: self.guards.clone(),
        }
    }
}

/// Sup over the samples of `‖V(X) − V(X)†‖_F`.
pub fn hermiticity_check(
    v: &Potential,
    rep: &GammaRep,
    samples: &[SpacetimeConfig],
) -> Result<f64, EvalError> {
    let mut worst: f64 = 0.0;
    for x in samples {
        worst = worst.max(hermiticity_defect(&v.evaluate(x, rep)?));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpatialModel {
    #[serde(rename = "FULL_3D_SYMBOLIC")]
    Full3dSymbolic,
    LineZ,
}

#[derive(Debug, Clone)]
pub struct MultiTimeSystem {
    pub name: String,
    pub n: usize,
    pub masses: Vec<f64>,
    pub potentials: Vec<Potential>,
    pub spatial_model: SpatialModel,
    /// Declared (spec files) or established at construction (builtins).
    pub hermitian: bool,
}

impl MultiTimeSystem {
    pub fn new(
        name: &str,
        masses: Vec<f64>,
        potentials: Vec<Potential>,
    ) -> Result<Self, PotentialError> {
        let n = masses.len();
        if n == 0 {
            return Err(PotentialError::Invalid("at least one particle required".into()));
        }
        if let Some(m) = masses.iter().find(|m| !(**m >= 0.0 && m.is_finite())) {
            return Err(PotentialError::Invalid(format!("mass {m} must be finite and >= 0")));
        }
        if potentials.len() != n {
            return Err(PotentialError::Invalid(format!(
                "{} potentials for {n} particles",
                potentials.len()
            )));
        }
        for (i, v) in potentials.iter().enumerate() {
            if v.particle != i + 1 {
                return Err(PotentialError::Invalid(format!(
                    "potential #{} is declared for particle {}",
                    i + 1,
                    v.particle
                )));
            }
            for t in &v.terms {
                if t.basis.particles() != n {
                    return Err(PotentialError::Invalid(format!(
                        "term {} of V{} has {} factors, expected {n}",
                        t.basis,
                        i + 1,
                        t.basis.particles()
                    )));
                }
                if t.coeff.max_particle() > n {
                    return Err(PotentialError::Invalid(format!(
                        "coefficient '{}' of V{} refers to particle {}",
                        t.coeff,
                        i + 1,
                        t.coeff.max_particle()
                    )));
                }
            }
        }
        Ok(MultiTimeSystem {
            name: name.to_string(),
            n,
            masses,
            potentials,
            spatial_model: SpatialModel::Full3dSymbolic,
            hermitian: false,
        })
    }

    /// `V_k`, 1-based.
    pub fn potential(&self, k: usize) -> &Potential {
        &self.potentials[k - 1]
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.masses[k - 1]
    }

    /// Max hermiticity defect over all potentials.
    pub fn hermiticity(&self, rep: &GammaRep, samples: &[SpacetimeConfig]) -> Result<f64, EvalError> {
        let mut worst: f64 = 0.0;
        for v in &self.potentials {
            worst = worst.max(hermiticity_check(v, rep, samples)?);
        }
        Ok(worst)
    }

    /// Sets the hermitian flag from a check at 50 fixed pseudo-random points.
    fn flag_hermitian_by_sampling(mut self, region: Region) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_4e21);
        let rep = GammaRep::dirac();
        self.hermitian = sample_configs(region, self.n, 50, &mut rng)
            .ok()
            .and_then(|s| self.hermiticity(&rep, &s).ok())
            .is_some_and(|r| r < 1e-10);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    All,
    Spacelike,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::All => "all",
            Region::Spacelike => "spacelike",
        }
    }

    pub fn contains(self, x: &SpacetimeConfig) -> bool {
        match self {
            Region::All => true,
            Region::Spacelike => is_spacelike(x),
        }
    }
}

impl std::str::FromStr for Region {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(Region::All),
            "spacelike" => Ok(Region::Spacelike),
            _ => Err(format!("unknown region '{s}' (expected all or spacelike)")),
        }
    }
}

/// `(t_j − t_k)² < |x_j − x_k|²` for every pair.
pub fn is_spacelike(x: &SpacetimeConfig) -> bool {
    let p = &x.0;
    for j in 0..p.len() {
        for k in j + 1..p.len() {
            let dt = p[j][0] - p[k][0];
            let dx2: f64 = (1..4).map(|a| (p[j][a] - p[k][a]).powi(2)).sum();
            if dt * dt >= dx2 {
                return false;
            }
        }
    }
    true
}

/// Draws `count` configurations uniformly from `[−2, 2]^{4n}`, rejecting
/// those outside the region.
pub fn sample_configs<R: Rng>(
    region: Region,
    n: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<SpacetimeConfig>, PotentialError> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut found = None;
        for _ in 0..MAX_REJECTIONS {
            let x = SpacetimeConfig(
                (0..n)
                    .map(|_| std::array::from_fn(|_| rng.gen_range(-SAMPLE_BOX..SAMPLE_BOX)))
                    .collect(),
            );
            if region.contains(&x) {
                found = Some(x);
                break;
            }
        }
        out.push(found.ok_or(PotentialError::Sampling {
            region: region.name(),
            attempts: MAX_REJECTIONS,
        })?);
    }
    Ok(out)
}

fn two(a: BasisElement, b: BasisElement) -> TensorBasisElement {
    TensorBasisElement::new(vec![a, b])
}

fn el(class: BasisClass, mu: usize) -> BasisElement {
    BasisElement::new(class, mu as u8)
}

/// Raw `name=value` pairs; values are DSL text.
pub type BuiltinParams = BTreeMap<String, String>;

struct ParamReader<'a> {
    builtin: &'a str,
    raw: &'a BuiltinParams,
    used: Vec<&'a str>,
}

impl<'a> ParamReader<'a> {
    fn new(builtin: &'a str, raw: &'a BuiltinParams) -> Self {
        ParamReader {
            builtin,
            raw,
            used: Vec::new(),
        }
    }

    fn expr(&mut self, name: &str) -> Result<Option<Expr>, PotentialError> {
        let Some((key, src)) = self.raw.get_key_value(name) else {
            return Ok(None);
        };
        self.used.push(key);
        dsl::parse(src, 2, &HashMap::new())
            .map(Some)
            .map_err(|source| PotentialError::Parse {
                context: format!("parameter {name}"),
                source,
            })
    }

    fn constant(&mut self, name: &str, default: Complex64) -> Result<Complex64, PotentialError> {
        match self.expr(name)? {
            None => Ok(default),
            Some(e) if e.has_coordinates() => Err(PotentialError::InvalidParameter {
                param: name.into(),
                reason: "must be a constant".into(),
            }),
            Some(e) => e
                .evaluate(&SpacetimeConfig::zeros(0))
                .map_err(|err| PotentialError::InvalidParameter {
                    param: name.into(),
                    reason: err.to_string(),
                }),
        }
    }

    fn mass(&mut self, name: &str) -> Result<f64, PotentialError> {
        let m = self.constant(name, Complex64::new(1.0, 0.0))?;
        if m.im != 0.0 || m.re < 0.0 {
            return Err(PotentialError::InvalidParameter {
                param: name.into(),
                reason: "mass must be real and >= 0".into(),
            });
        }
        Ok(m.re)
    }

    fn finish(self) -> Result<(), PotentialError> {
        for k in self.raw.keys() {
            if !self.used.contains(&k.as_str()) {
                return Err(PotentialError::UnknownParameter {
                    builtin: self.builtin.into(),
                    param: k.clone(),
                });
            }
        }
        Ok(())
    }
}

pub const BUILTINS: [&str; 5] = ["free", "example1_vector", "hoho", "coefficient_form", "coulomb_like"];

/// Constructs one of the named systems. All builtins have two particles.
pub fn builtin(name: &str, params: &BuiltinParams) -> Result<MultiTimeSystem, PotentialError> {
    let mut p = ParamReader::new(name, params);
    let sys = match name {
        "free" => {
            let masses = vec![p.mass("m1")?, p.mass("m2")?];
            let mut s = MultiTimeSystem::new(name, masses, vec![Potential::zero(1), Potential::zero(2)])?;
            s.hermitian = true;
            s
        }
        "example1_vector" => example1_vector(&mut p)?,
        "hoho" => hoho(&mut p)?,
        "coefficient_form" => coefficient_form(&mut p)?,
        "coulomb_like" => coulomb_like(&mut p)?,
        _ => return Err(PotentialError::UnknownBuiltin(name.into())),
    };
    p.finish()?;
    Ok(sys)
}

fn example1_vector(p: &mut ParamReader) -> Result<MultiTimeSystem, PotentialError> {
    let masses = vec![p.mass("m1")?, p.mass("m2")?];
    let mut v1 = Vec::new();
    let mut v2 = Vec::new();
    for mu in 0..4 {
        let default_a = if mu == 3 { Expr::one() } else { Expr::zero() };
        let a = p.expr(&format!("A{mu}"))?.unwrap_or(default_a);
        let b = p.expr(&format!("B{mu}"))?.unwrap_or_else(Expr::zero);
        if !a.is_zero() {
            v1.push(PotentialTerm::new(
                two(BasisElement::IDENTITY, el(BasisClass::Alpha, mu)),
                a,
            ));
        }
        if !b.is_zero() {
            v2.push(PotentialTerm::new(
                two(el(BasisClass::Alpha, mu), BasisElement::IDENTITY),
                b,
            ));
        }
    }
    let sys = MultiTimeSystem::new(
        "example1_vector",
        masses,
        vec![Potential::new(1, v1), Potential::new(2, v2)],
    )?;
    Ok(sys.flag_hermitian_by_sampling(Region::All))
}

/// Parameters of the consistent interacting example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HohoParams {
    pub big_c: [Complex64; 4],
    pub small_c: [Complex64; 4],
    pub m1: f64,
    pub m2: f64,
}

impl Default for HohoParams {
    fn default() -> Self {
        let e0 = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        HohoParams {
            big_c: e0,
            small_c: e0,
            m1: 1.0,
            m2: 1.0,
        }
    }
}

impl HohoParams {
    /// Hermitian exactly when `C_0` is imaginary, `C_a` real and `c` real.
    pub fn is_hermitian(&self) -> bool {
        self.big_c[0].re == 0.0
            && self.big_c[1..].iter().all(|c| c.im == 0.0)
            && self.small_c.iter().all(|c| c.im == 0.0)
    }

    /// The phase `2 c_λ (x_2 − x_1)^λ`, skipping vanishing components.
    pub fn phase(&self) -> Expr {
        let mut sum = Expr::zero();
        for (l, c) in self.small_c.iter().enumerate() {
            if *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let diff = Expr::sub(Expr::coord(2, l), Expr::coord(1, l));
            sum = Expr::add(sum, Expr::mul(Expr::param(&format!("c{l}"), *c), diff));
        }
        Expr::mul(Expr::real(2.0), sum)
    }
}

/// `V_1 = −iγ_1^μ C_μ sin(2c·x) + γ_1^5 γ_1^μ C_μ cos(2c·x) − m_1 γ_1^0`,
/// `V_2 = γ_1^5 α_2^ν c_ν`, with `x = x_2 − x_1`.
pub fn hoho_system(hp: &HohoParams) -> Result<MultiTimeSystem, PotentialError> {
    let zero = Complex64::new(0.0, 0.0);
    if hp.big_c.iter().all(|c| *c == zero) {
        return Err(PotentialError::InvalidParameter {
            param: "C".into(),
            reason: "at least one C_mu must be nonzero".into(),
        });
    }
    if hp.small_c.iter().all(|c| *c == zero) {
        return Err(PotentialError::InvalidParameter {
            param: "c".into(),
            reason: "at least one c_mu must be nonzero".into(),
        });
    }
    let phase = hp.phase();
    let sin = Expr::call(dsl::Func::Sin, phase.clone());
    let cos = Expr::call(dsl::Func::Cos, phase);
    let mut v1 = Vec::new();
    for (mu, c) in hp.big_c.iter().enumerate() {
        if *c == zero {
            continue;
        }
        let cmu = Expr::param(&format!("C{mu}"), *c);
        v1.push(PotentialTerm::new(
            two(el(BasisClass::Gamma, mu), BasisElement::IDENTITY),
            Expr::mul(Expr::mul(Expr::num(Complex64::new(0.0, -1.0)), cmu.clone()), sin.clone()),
        ));
        v1.push(PotentialTerm::new(
            two(el(BasisClass::G5Gamma, mu), BasisElement::IDENTITY),
            Expr::mul(cmu, cos.clone()),
        ));
    }
    if hp.m1 != 0.0 {
        v1.push(PotentialTerm::new(
            two(el(BasisClass::Gamma, 0), BasisElement::IDENTITY),
            Expr::real(-hp.m1),
        ));
    }
    let mut v2 = Vec::new();
    for (nu, c) in hp.small_c.iter().enumerate() {
        if *c == zero {
            continue;
        }
        v2.push(PotentialTerm::new(
            two(BasisElement::GAMMA5, el(BasisClass::Alpha, nu)),
            Expr::param(&format!("c{nu}"), *c),
        ));
    }
    let mut sys = MultiTimeSystem::new(
        "hoho",
        vec![hp.m1, hp.m2],
        vec![Potential::new(1, v1), Potential::new(2, v2)],
    )?;
    sys.hermitian = hp.is_hermitian();
    Ok(sys)
}

fn hoho(p: &mut ParamReader) -> Result<MultiTimeSystem, PotentialError> {
    hoho_system(&read_hoho(p)?)
}

/// The example's parameters from builtin `name=value` pairs.
pub fn hoho_params(params: &BuiltinParams) -> Result<HohoParams, PotentialError> {
    let mut p = ParamReader::new("hoho", params);
    let hp = read_hoho(&mut p)?;
    p.finish()?;
    Ok(hp)
}

fn read_hoho(p: &mut ParamReader) -> Result<HohoParams, PotentialError> {
    let d = HohoParams::default();
    let mut hp = HohoParams {
        m1: p.mass("m1")?,
        m2: p.mass("m2")?,
        ..d
    };
    for mu in 0..4 {
        hp.big_c[mu] = p.constant(&format!("C{mu}"), d.big_c[mu])?;
        hp.small_c[mu] = p.constant(&format!("c{mu}"), d.small_c[mu])?;
    }
    Ok(hp)
}

fn coefficient_form(p: &mut ParamReader) -> Result<MultiTimeSystem, PotentialError> {
    let masses = [p.mass("m1")?, p.mass("m2")?];
    let mut cs = CoefficientSet::zero();
    let mut any = false;
    for name in CoefficientSet::field_names() {
        if let Some(e) = p.expr(&name)? {
            *cs.field_mut(&name).expect("known field") = e;
            any = true;
        }
    }
    if !any {
        return Err(PotentialError::MissingParameter(
            "coefficient_form needs at least one field such as A0 or W1_0".into(),
        ));
    }
    let sys = cs.to_system(masses)?;
    Ok(sys.flag_hermitian_by_sampling(Region::All))
}

/// Denominator `(t_1 − t_2)² − |x_1 − x_2|²`.
pub fn interval_squared() -> Expr {
    let sq = |mu: usize| Expr::pow(Expr::sub(Expr::coord(1, mu), Expr::coord(2, mu)), 2);
    let spatial = Expr::add(Expr::add(sq(1), sq(2)), sq(3));
    Expr::sub(sq(0), spatial)
}

pub const COULOMB_GUARD: f64 = 1e-6;

fn coulomb_like(p: &mut ParamReader) -> Result<MultiTimeSystem, PotentialError> {
    let masses = vec![p.mass("m1")?, p.mass("m2")?];
    let g = p.constant("g", Complex64::new(1.0, 0.0))?;
    let den = interval_squared();
    let coeff = Expr::div(Expr::param("g", g), den.clone());
    let make = |k| {
        Potential::new(k, vec![PotentialTerm::new(TensorBasisElement::identity(2), coeff.clone())])
            .with_guard(den.clone(), COULOMB_GUARD)
    };
    let mut sys = MultiTimeSystem::new("coulomb_like", masses, vec![make(1), make(2)])?;
    sys.hermitian = g.im == 0.0;
    Ok(sys)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ComplexJson {
    re: f64,
    #[serde(default)]
    im: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorJson {
    cls: String,
    #[serde(default)]
    mu: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermJson {
    factors: Vec<FactorJson>,
    coeff: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GuardJson {
    expr: String,
    min_abs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialJson {
    particle: usize,
    terms: Vec<TermJson>,
    #[serde(default)]
    guards: Vec<GuardJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecJson {
    #[serde(rename = "N")]
    n: usize,
    masses: Vec<f64>,
    #[serde(default)]
    params: BTreeMap<String, ComplexJson>,
    #[serde(default)]
    hermitian: bool,
    #[serde(default)]
    name: Option<String>,
    potentials: Vec<PotentialJson>,
}

fn factor_from_json(f: &FactorJson) -> Result<BasisElement, String> {
    if f.mu > 3 {
        return Err(format!("mu {} out of range 0..=3", f.mu));
    }
    let class = match f.cls.as_str() {
        "id" => return Ok(BasisElement::IDENTITY),
        "alpha" => BasisClass::Alpha,
        "g5alpha" => BasisClass::G5Alpha,
        "gamma" => BasisClass::Gamma,
        "g5gamma" => BasisClass::G5Gamma,
        other => return Err(format!("unknown basis class '{other}'")),
    };
    Ok(BasisElement::new(class, f.mu))
}

/// Loads a system from the JSON spec format.
pub fn system_from_json(src: &str) -> Result<MultiTimeSystem, PotentialError> {
    let spec: SpecJson = serde_json::from_str(src).map_err(|e| PotentialError::Json(e.to_string()))?;
    if spec.masses.len() != spec.n {
        return Err(PotentialError::Invalid(format!(
            "N = {} but {} masses given",
            spec.n,
            spec.masses.len()
        )));
    }
    let params: HashMap<String, Complex64> = spec
        .params
        .iter()
        .map(|(k, v)| (k.clone(), Complex64::new(v.re, v.im)))
        .collect();
    let mut potentials: Vec<Option<Potential>> = vec![None; spec.n];
    for (pi, pj) in spec.potentials.iter().enumerate() {
        if pj.particle == 0 || pj.particle > spec.n {
            return Err(PotentialError::Invalid(format!(
                "potentials[{pi}]: particle {} out of range 1..={}",
                pj.particle, spec.n
            )));
        }
        let mut terms = Vec::new();
        for (ti, tj) in pj.terms.iter().enumerate() {
            let ctx = format!("potentials[{pi}].terms[{ti}]");
            if tj.factors.len() != spec.n {
                return Err(PotentialError::Invalid(format!(
                    "{ctx}: {} factors, expected {}",
                    tj.factors.len(),
                    spec.n
                )));
            }
            let factors = tj
                .factors
                .iter()
                .map(factor_from_json)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| PotentialError::Invalid(format!("{ctx}: {e}")))?;
            let coeff = dsl::parse(&tj.coeff, spec.n, &params).map_err(|source| {
                PotentialError::Parse {
                    context: format!("{ctx}.coeff"),
                    source,
                }
            })?;
            terms.push(PotentialTerm::new(TensorBasisElement::new(factors), coeff));
        }
        let mut v = Potential::new(pj.particle, terms);
        for (gi, g) in pj.guards.iter().enumerate() {
            let expr = dsl::parse(&g.expr, spec.n, &params).map_err(|source| PotentialError::Parse {
                context: format!("potentials[{pi}].guards[{gi}].expr"),
                source,
            })?;
            v = v.with_guard(expr, g.min_abs);
        }
        let slot = &mut potentials[pj.particle - 1];
        if slot.is_some() {
            return Err(PotentialError::Invalid(format!(
                "particle {} has two potentials",
                pj.particle
            )));
        }
        *slot = Some(v);
    }
    let potentials = potentials
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.unwrap_or_else(|| Potential::zero(i + 1)))
        .collect();
    let name = spec.name.as_deref().unwrap_or("spec");
    let mut sys = MultiTimeSystem::new(name, spec.masses, potentials)?;
    sys.hermitian = spec.hermitian;
    Ok(sys)
}
