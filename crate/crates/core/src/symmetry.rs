//! Poincaré covariance, translation invariance, the f-sector gauge test and
//! the exponential-form residuals of translation invariant systems.

use crate::clifford::{embed, identity, kron, CMatrix, GammaRep};
use crate::consistency::CoefficientSet;
use crate::dsl::{EvalError, Expr, SpacetimeConfig};
use crate::potential::{HohoParams, MultiTimeSystem, Potential};
use nalgebra::Matrix4;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

const I: Complex64 = Complex64::new(0.0, 1.0);
/// Nodes of the composite trapezoid rule for line integrals.
pub const QUAD_NODES: usize = 200;
/// Accepted quadrature discrepancy between reconstructions.
pub const QUAD_TOL: f64 = 1e-4;
const INTERTWINE_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SymmetryError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("invalid transform: {0}")]
    InvalidTransform(String),
}

impl SymmetryError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, SymmetryError::Eval(_))
    }
}

/// Which relation the constructed spin matrix satisfies. `Forward` is
/// `S γ^μ S⁻¹ = Λ^μ_ν γ^ν`; the other orientation swaps S and S⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Forward,
    Inverse,
}

#[derive(Debug, Clone)]
pub struct PoincareTransform {
    pub lambda: Matrix4<f64>,
    pub a: [f64; 4],
    pub s: CMatrix,
    pub s_inv: CMatrix,
    /// Sign in front of the spin generator chosen by the self-test.
    pub generator_sign: f64,
    pub orientation: Orientation,
}

/// `‖S γ^μ S⁻¹ − Λ^μ_ν γ^ν‖` summed in quadrature over μ.
pub fn intertwining_residual(rep: &GammaRep, lambda: &Matrix4<f64>, s: &CMatrix, s_inv: &CMatrix) -> f64 {
    let mut total = 0.0;
    for mu in 0..4 {
        let lhs = s * &rep.gamma[mu] * s_inv;
        let mut rhs = CMatrix::zeros(4, 4);
        for nu in 0..4 {
            rhs += &rep.gamma[nu] * Complex64::from(lambda[(mu, nu)]);
        }
        total += (lhs - rhs).norm_squared();
    }
    total.sqrt()
}

fn unit(n: [f64; 3]) -> Result<[f64; 3], SymmetryError> {
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if (len - 1.0).abs() > 1e-9 {
        return Err(SymmetryError::InvalidTransform(format!(
            "direction must be a unit vector, |n| = {len}"
        )));
    }
    Ok(n)
}

fn levi_civita(a: usize, b: usize, c: usize) -> f64 {
    match (a, b, c) {
        (1, 2, 3) | (2, 3, 1) | (3, 1, 2) => 1.0,
        (3, 2, 1) | (1, 3, 2) | (2, 1, 3) => -1.0,
        _ => 0.0,
    }
}

/// Boost generator, `K^0_i = K^i_0 = n_i`.
pub fn boost_generator(n: [f64; 3]) -> Matrix4<f64> {
    let mut k = Matrix4::zeros();
    for i in 0..3 {
        k[(0, i + 1)] = n[i];
        k[(i + 1, 0)] = n[i];
    }
    k
}

/// Rotation generator, `J^i_j = −ε_ijk n_k`.
pub fn rotation_generator(n: [f64; 3]) -> Matrix4<f64> {
    let mut j = Matrix4::zeros();
    for a in 1..4 {
        for b in 1..4 {
            j[(a, b)] = -(1..4).map(|c| levi_civita(a, b, c) * n[c - 1]).sum::<f64>();
        }
    }
    j
}

/// `Σ^a = (i/2) ε_abc γ^b γ^c`.
pub fn spin_matrix(rep: &GammaRep, a: usize) -> CMatrix {
    let mut out = CMatrix::zeros(4, 4);
    for b in 1..4 {
        for c in 1..4 {
            let e = levi_civita(a, b, c);
            if e != 0.0 {
                out += &rep.gamma[b] * &rep.gamma[c] * Complex64::new(0.0, 0.5 * e);
            }
        }
    }
    out
}

impl PoincareTransform {
    pub fn identity() -> Self {
        PoincareTransform {
            lambda: Matrix4::identity(),
            a: [0.0; 4],
            s: identity(4),
            s_inv: identity(4),
            generator_sign: 1.0,
            orientation: Orientation::Forward,
        }
    }

    pub fn translation(a: [f64; 4]) -> Self {
        PoincareTransform {
            a,
            ..Self::identity()
        }
    }

    pub fn with_translation(mut self, a: [f64; 4]) -> Self {
        self.a = a;
        self
    }

    /// Picks the generator sign whose spin matrix satisfies the forward
    /// intertwining relation.
    fn from_candidates(
        rep: &GammaRep,
        lambda: Matrix4<f64>,
        make: impl Fn(f64) -> (CMatrix, CMatrix),
    ) -> Result<Self, SymmetryError> {
        let mut best: Option<(f64, f64, CMatrix, CMatrix)> = None;
        for sign in [1.0, -1.0] {
            let (s, s_inv) = make(sign);
            let r = intertwining_residual(rep, &lambda, &s, &s_inv);
            if best.as_ref().map_or(true, |b| r < b.0) {
                best = Some((r, sign, s, s_inv));
            }
        }
        let (r, sign, s, s_inv) = best.expect("two candidates");
        if r > INTERTWINE_TOL {
            return Err(SymmetryError::InvalidTransform(format!(
                "no spin generator orientation intertwines (residual {r:e})"
            )));
        }
        Ok(PoincareTransform {
            lambda,
            a: [0.0; 4],
            s,
            s_inv,
            generator_sign: sign,
            orientation: Orientation::Forward,
        })
    }

    /// Boost with rapidity `chi` along the unit vector `n`.
    pub fn boost(rep: &GammaRep, n: [f64; 3], chi: f64) -> Result<Self, SymmetryError> {
        let n = unit(n)?;
        let k = boost_generator(n);
        let lambda = Matrix4::identity() + k * chi.sinh() + k * k * (chi.cosh() - 1.0);
        let mut an = CMatrix::zeros(4, 4);
        for i in 0..3 {
            an += &rep.alpha[i + 1] * Complex64::from(n[i]);
        }
        let (ch, sh) = ((chi / 2.0).cosh(), (chi / 2.0).sinh());
        Self::from_candidates(rep, lambda, |sign| {
            let s = identity(4) * Complex64::from(ch) + &an * Complex64::from(sign * sh);
            let s_inv = identity(4) * Complex64::from(ch) - &an * Complex64::from(sign * sh);
            (s, s_inv)
        })
    }

    /// Rotation by `theta` about the unit vector `n`.
    pub fn rotation(rep: &GammaRep, n: [f64; 3], theta: f64) -> Result<Self, SymmetryError> {
        let n = unit(n)?;
        let j = rotation_generator(n);
        let lambda = Matrix4::identity() + j * theta.sin() + j * j * (1.0 - theta.cos());
        let mut sn = CMatrix::zeros(4, 4);
        for a in 1..4 {
            sn += spin_matrix(rep, a) * Complex64::from(n[a - 1]);
        }
        let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
        Self::from_candidates(rep, lambda, |sign| {
            let m = identity(4) * Complex64::from(c) - &sn * (I * (sign * s));
            let m_inv = identity(4) * Complex64::from(c) + &sn * (I * (sign * s));
            (m, m_inv)
        })
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &PoincareTransform) -> PoincareTransform {
        let a2 = nalgebra::Vector4::from(other.a);
        let a = self.lambda * a2 + nalgebra::Vector4::from(self.a);
        PoincareTransform {
            lambda: self.lambda * other.lambda,
            a: [a[0], a[1], a[2], a[3]],
            s: &self.s * &other.s,
            s_inv: &other.s_inv * &self.s_inv,
            generator_sign: self.generator_sign,
            orientation: self.orientation,
        }
    }

    pub fn inverse(&self) -> PoincareTransform {
        let li = self.lambda_inverse();
        let a = -(li * nalgebra::Vector4::from(self.a));
        PoincareTransform {
            lambda: li,
            a: [a[0], a[1], a[2], a[3]],
            s: self.s_inv.clone(),
            s_inv: self.s.clone(),
            generator_sign: self.generator_sign,
            orientation: self.orientation,
        }
    }

    /// `Λ⁻¹ = g Λᵀ g`.
    pub fn lambda_inverse(&self) -> Matrix4<f64> {
        let g = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, -1.0, -1.0, -1.0));
        g * self.lambda.transpose() * g
    }

    /// `‖Λᵀ g Λ − g‖`.
    pub fn metric_residual(&self) -> f64 {
        let g = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, -1.0, -1.0, -1.0));
        (self.lambda.transpose() * g * self.lambda - g).norm()
    }

    /// `Λ⁻¹(x − a)` for every particle.
    pub fn pull_back(&self, x: &SpacetimeConfig) -> SpacetimeConfig {
        let li = self.lambda_inverse();
        SpacetimeConfig(
            x.0.iter()
                .map(|p| {
                    let d = nalgebra::Vector4::from(std::array::from_fn::<f64, 4, _>(|m| p[m] - self.a[m]));
                    let y = li * d;
                    [y[0], y[1], y[2], y[3]]
                })
                .collect(),
        )
    }

    fn spin_tensor(&self, n: usize) -> (CMatrix, CMatrix) {
        let mut s = identity(1);
        let mut si = identity(1);
        for _ in 0..n {
            s = kron(&s, &self.s);
            si = kron(&si, &self.s_inv);
        }
        (s, si)
    }
}

/// Sup of `‖V(x) − S^{⊗N} V(Λ⁻¹(x−a)) (S⁻¹)^{⊗N}‖_F` over the samples.
pub fn poincare_residual(
    v: &Potential,
    t: &PoincareTransform,
    samples: &[SpacetimeConfig],
    rep: &GammaRep,
) -> Result<f64, EvalError> {
    let mut worst: f64 = 0.0;
    for x in samples {
        let (s, si) = t.spin_tensor(x.particles());
        let here = v.evaluate(x, rep)?;
        let there = v.evaluate(&t.pull_back(x), rep)?;
        worst = worst.max((here - s * there * si).norm());
    }
    Ok(worst)
}

/// Sup of `‖V(x_1, x_2) − V(x_1 + a, x_2 + a)‖_F`.
pub fn translation_residual(
    v: &Potential,
    a: [f64; 4],
    samples: &[SpacetimeConfig],
    rep: &GammaRep,
) -> Result<f64, EvalError> {
    let mut worst: f64 = 0.0;
    for x in samples {
        let d = v.evaluate(x, rep)? - v.evaluate(&x.translated(a), rep)?;
        worst = worst.max(d.norm());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GaugeVerdict {
    #[serde(rename = "GAUGE_REMOVABLE")]
    GaugeRemovable,
    #[serde(rename = "INTERACTING")]
    Interacting,
    #[serde(rename = "UNDECIDED")]
    Undecided,
}

/// A square grid over two configuration coordinates, all others zero.
#[derive(Debug, Clone, Serialize)]
pub struct GaugeGrid {
    /// `(particle, μ)` for the row and column axes.
    pub axes: [(usize, usize); 2],
    pub half_width: f64,
    pub points: usize,
}

impl Default for GaugeGrid {
    fn default() -> Self {
        GaugeGrid {
            axes: [(1, 0), (2, 3)],
            half_width: 1.0,
            points: 9,
        }
    }
}

impl GaugeGrid {
    pub fn coords(&self) -> Vec<f64> {
        let n = self.points.max(2);
        (0..n)
            .map(|i| -self.half_width + 2.0 * self.half_width * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn config(&self, u: f64, v: f64) -> SpacetimeConfig {
        let mut x = SpacetimeConfig::zeros(2);
        x.0[self.axes[0].0 - 1][self.axes[0].1] = u;
        x.0[self.axes[1].0 - 1][self.axes[1].1] += v;
        x
    }
}

const COMPONENTS: [&str; 4] = ["W", "X", "Y", "Z"];

/// One component of a matrix-valued field sampled on a [`GaugeGrid`]; the
/// component multiplies 𝟙, γ⁵_2, γ⁵_1 or γ⁵_1γ⁵_2 for W, X, Y, Z.
#[derive(Debug, Clone, Serialize)]
pub struct ComponentGrid {
    pub component: String,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl ComponentGrid {
    pub fn value(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(self.re[i][j], self.im[i][j])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GaugeReport {
    /// Sup of `|∂_{i,λ} g_{j,μν}|`, i ≠ j.
    pub curl_residual: f64,
    /// Sup of `|∂_{1,μ} f_{2,ν} − ∂_{2,ν} f_{1,μ}|`.
    pub cross_residual: f64,
    /// Sup of `|g_{j,μν}|`; zero when f itself is a gradient.
    pub full_curl_residual: f64,
    /// Straight path against the polyline through `(x_1, 0)`.
    pub path_residual: f64,
    /// Finite-difference gradient of the reconstructed M against h.
    pub gradient_residual: f64,
    pub m_interaction: Option<Vec<ComponentGrid>>,
    /// `∫ f` from the origin, present when f is curl free in every variable.
    pub m_full: Option<Vec<ComponentGrid>>,
    pub verdict: GaugeVerdict,
    pub tol: f64,
    pub grid: GaugeGrid,
}

struct FSector {
    /// `f[c][j-1][μ]` for component c.
    f: Vec<[[Expr; 4]; 2]>,
}

impl FSector {
    fn new(cs: &CoefficientSet) -> Self {
        FSector {
            f: COMPONENTS
                .iter()
                .map(|c| {
                    std::array::from_fn(|j| std::array::from_fn(|mu| cs.get(&format!("{c}{}_{mu}", j + 1)).clone()))
                })
                .collect(),
        }
    }

    fn is_zero(&self) -> bool {
        self.f.iter().all(|c| c.iter().flatten().all(Expr::is_zero))
    }

    /// `h_{j,μ}`: f minus its value with the other particle at the origin.
    fn h(&self, c: usize, j: usize, mu: usize, x: &SpacetimeConfig) -> Result<Complex64, EvalError> {
        let e = &self.f[c][j - 1][mu];
        let mut base = x.clone();
        base.0[2 - j] = [0.0; 4];
        Ok(e.evaluate(x)? - e.evaluate(&base)?)
    }

    fn full(&self, c: usize, j: usize, mu: usize, x: &SpacetimeConfig) -> Result<Complex64, EvalError> {
        self.f[c][j - 1][mu].evaluate(x)
    }
}

/// `∫_0^1 field(s·x)·x ds` by composite trapezoid, optionally starting from
/// `start` and moving only `free` particles.
fn line_integral(
    field: &dyn Fn(usize, usize, &SpacetimeConfig) -> Result<Complex64, EvalError>,
    start: &SpacetimeConfig,
    end: &SpacetimeConfig,
) -> Result<Complex64, EvalError> {
    let n = QUAD_NODES;
    let h = 1.0 / (n - 1) as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    for node in 0..n {
        let s = node as f64 * h;
        let w = if node == 0 || node == n - 1 { 0.5 } else { 1.0 };
        let p = SpacetimeConfig(
            start
                .0
                .iter()
                .zip(&end.0)
                .map(|(a, b)| std::array::from_fn(|m| a[m] + s * (b[m] - a[m])))
                .collect(),
        );
        let mut dot = Complex64::new(0.0, 0.0);
        for j in 1..=2 {
            for mu in 0..4 {
                let d = end.0[j - 1][mu] - start.0[j - 1][mu];
                if d != 0.0 {
                    dot += field(j, mu, &p)? * d;
                }
            }
        }
        sum += dot * (w * h);
    }
    Ok(sum)
}

type Field<'a> = dyn Fn(usize, usize, &SpacetimeConfig) -> Result<Complex64, EvalError> + 'a;

/// Straight-path and polyline reconstructions of a potential for `field`.
fn reconstruct(field: &Field, x: &SpacetimeConfig) -> Result<(Complex64, Complex64), EvalError> {
    let origin = SpacetimeConfig::zeros(2);
    let straight = line_integral(field, &origin, x)?;
    let mut corner = x.clone();
    corner.0[1] = [0.0; 4];
    let poly = line_integral(field, &origin, &corner)? + line_integral(field, &corner, x)?;
    Ok((straight, poly))
}

fn grid_of(component: &str, values: &[Vec<Complex64>]) -> ComponentGrid {
    ComponentGrid {
        component: component.to_string(),
        re: values.iter().map(|r| r.iter().map(|z| z.re).collect()).collect(),
        im: values.iter().map(|r| r.iter().map(|z| z.im).collect()).collect(),
    }
}

/// Integrability tests for `f_{j,μ} = W + γ⁵_2 X + γ⁵_1 Y + γ⁵_1γ⁵_2 Z` and
/// the reconstruction of the gauge function on `grid`.
pub fn classify_gauge(
    cs: &CoefficientSet,
    samples: &[SpacetimeConfig],
    grid: &GaugeGrid,
    tol: f64,
) -> Result<GaugeReport, SymmetryError> {
    let fs = FSector::new(cs);
    let mut curl: f64 = 0.0;
    let mut cross: f64 = 0.0;
    let mut full_curl: f64 = 0.0;
    if !fs.is_zero() {
        for c in 0..4 {
            for j in 1..=2 {
                let i_other = 3 - j;
                for mu in 0..4 {
                    for nu in mu + 1..4 {
                        let g = Expr::sub(
                            fs.f[c][j - 1][nu].differentiate(j, mu),
                            fs.f[c][j - 1][mu].differentiate(j, nu),
                        );
                        let dg: Vec<Expr> = (0..4).map(|l| g.differentiate(i_other, l)).collect();
                        for x in samples {
                            full_curl = full_curl.max(g.evaluate(x)?.norm());
                            for d in &dg {
                                curl = curl.max(d.evaluate(x)?.norm());
                            }
                        }
                    }
                }
            }
            for mu in 0..4 {
                for nu in 0..4 {
                    let e = Expr::sub(
                        fs.f[c][1][nu].differentiate(1, mu),
                        fs.f[c][0][mu].differentiate(2, nu),
                    );
                    for x in samples {
                        cross = cross.max(e.evaluate(x)?.norm());
                    }
                }
            }
        }
    }
    let integrable = curl.max(cross);
    let coords = grid.coords();
    let mut path_residual: f64 = 0.0;
    let mut gradient_residual: f64 = 0.0;
    let mut m_interaction = None;
    let mut m_full = None;
    if integrable < tol {
        let mut comps = Vec::new();
        let mut fulls = Vec::new();
        for (c, name) in COMPONENTS.iter().enumerate() {
            let nonzero = fs.f[c].iter().flatten().any(|e| !e.is_zero());
            let h = |j: usize, mu: usize, x: &SpacetimeConfig| fs.h(c, j, mu, x);
            let f = |j: usize, mu: usize, x: &SpacetimeConfig| fs.full(c, j, mu, x);
            let mut mi = vec![vec![Complex64::new(0.0, 0.0); coords.len()]; coords.len()];
            let mut mf = mi.clone();
            if nonzero {
                for (a, u) in coords.iter().enumerate() {
                    for (b, v) in coords.iter().enumerate() {
                        let x = grid.config(*u, *v);
                        let (s, p) = reconstruct(&h, &x)?;
                        path_residual = path_residual.max((s - p).norm());
                        mi[a][b] = s;
                        if full_curl < tol {
                            let (s, p) = reconstruct(&f, &x)?;
                            path_residual = path_residual.max((s - p).norm());
                            mf[a][b] = s;
                        }
                        // gradient check along both grid axes
                        let eps = 1e-3;
                        for (pj, pmu) in grid.axes.iter() {
                            let shift = |d: f64| {
                                let mut y = x.clone();
                                y.0[pj - 1][*pmu] += d;
                                y
                            };
                            let origin = SpacetimeConfig::zeros(2);
                            let plus = line_integral(&h, &origin, &shift(eps))?;
                            let minus = line_integral(&h, &origin, &shift(-eps))?;
                            let fd = (plus - minus) / (2.0 * eps);
                            let exact = fs.h(c, *pj, *pmu, &x)?;
                            gradient_residual = gradient_residual.max((fd - exact).norm());
                        }
                    }
                }
            }
            if nonzero || c == 0 {
                comps.push(grid_of(name, &mi));
                if full_curl < tol {
                    fulls.push(grid_of(name, &mf));
                }
            }
        }
        m_interaction = Some(comps);
        if full_curl < tol {
            m_full = Some(fulls);
        }
    }
    let verdict = if integrable < tol && path_residual < QUAD_TOL && gradient_residual < QUAD_TOL {
        GaugeVerdict::GaugeRemovable
    } else if integrable < 10.0 * tol {
        GaugeVerdict::Undecided
    } else {
        GaugeVerdict::Interacting
    };
    Ok(GaugeReport {
        curl_residual: curl,
        cross_residual: cross,
        full_curl_residual: full_curl,
        path_residual,
        gradient_residual,
        m_interaction,
        m_full,
        verdict,
        tol,
        grid: grid.clone(),
    })
}

/// `exp(2iγ⁵θ) = cos(2θ) + i sin(2θ) γ⁵`.
fn chiral_phase(rep: &GammaRep, theta: f64) -> CMatrix {
    identity(4) * Complex64::from((2.0 * theta).cos()) + &rep.gamma5 * (I * (2.0 * theta).sin())
}

/// Inf over the samples of `‖α_2^δ c_δ · 2iγ⁵_1 γ_1^μ C_μ exp(2iγ⁵_1 c·x)‖_F`,
/// the obstruction that rules out a gauge function for the example.
pub fn interaction_witness_hoho(
    hp: &HohoParams,
    rep: &GammaRep,
    samples: &[SpacetimeConfig],
) -> f64 {
    let mut a2 = CMatrix::zeros(4, 4);
    let mut gc = CMatrix::zeros(4, 4);
    for m in 0..4 {
        a2 += &rep.alpha[m] * hp.small_c[m];
        gc += &rep.gamma[m] * hp.big_c[m];
    }
    let left = embed(&a2, 2, 2).expect("two particles");
    let mut inf = f64::INFINITY;
    for x in samples {
        let theta: f64 = (0..4)
            .map(|l| (hp.small_c[l] * (x.get(2, l) - x.get(1, l))).re)
            .sum();
        let right = &rep.gamma5 * &gc * chiral_phase(rep, theta) * (I * 2.0);
        let w = &left * embed(&right, 1, 2).expect("two particles");
        inf = inf.min(w.norm());
    }
    if inf.is_finite() {
        inf
    } else {
        0.0
    }
}

/// Whether the system is external by inspection: A, B depend on x_1 only,
/// E, F on x_2 only, C, D, G, H vanish.
pub fn external_by_inspection(cs: &CoefficientSet) -> bool {
    let only = |l: &str, p: usize| {
        (0..4).all(|mu| {
            let e = cs.get(&format!("{l}{mu}"));
            (0..4).all(|nu| !e.depends_on(3 - p, nu))
        })
    };
    let zero = |l: &str| (0..4).all(|mu| cs.get(&format!("{l}{mu}")).is_zero());
    only("A", 1) && only("B", 1) && only("E", 2) && only("F", 2) && ["C", "D", "G", "H"].iter().all(|l| zero(l))
}

/// Overall classification combining the f-sector report, inspection of the
/// remaining fields and, for the example system, its witness.
pub fn classify_interaction(
    cs: &CoefficientSet,
    gauge: &GaugeReport,
    witness: Option<f64>,
) -> GaugeVerdict {
    match gauge.verdict {
        GaugeVerdict::Interacting => return GaugeVerdict::Interacting,
        GaugeVerdict::Undecided => return GaugeVerdict::Undecided,
        GaugeVerdict::GaugeRemovable => {}
    }
    if external_by_inspection(cs) {
        return GaugeVerdict::GaugeRemovable;
    }
    match witness {
        Some(w) if w > gauge.tol => GaugeVerdict::Interacting,
        _ => GaugeVerdict::Undecided,
    }
}

/// Residuals of the second-order equations obeyed by the interaction
/// fields of a translation invariant system with constant W, X, Y, Z:
/// `∂_ν∂_λ P = −4[(Y_νY_λ + Z_νZ_λ) P + (Y_νZ_λ + Z_νY_λ) Q]` for
/// `(P, Q) ∈ {(B,D), (D,B), (A',C), (C,A')}` with `Y = Y_2`, `Z = Z_2` and
/// derivatives in `x_2`, and the analogue for E..H with `X_1`, `Z_1` and
/// derivatives in `x_1`. Keys are the field letters.
pub fn exponential_form_residual(
    cs: &CoefficientSet,
    masses: [f64; 2],
    samples: &[SpacetimeConfig],
) -> Result<BTreeMap<String, f64>, SymmetryError> {
    for l in COMPONENTS {
        for i in 1..=2 {
            for mu in 0..4 {
                let e = cs.get(&format!("{l}{i}_{mu}"));
                if e.has_coordinates() {
                    return Err(SymmetryError::PreconditionViolated(format!(
                        "{l}{i}_{mu} = {e} is not constant"
                    )));
                }
            }
        }
    }
    let origin = SpacetimeConfig::zeros(2);
    let constant = |name: String| cs.get(&name).evaluate(&origin);
    // (particle of the derivatives, Y-like, Z-like, [(P, Q, mass shift of P, mass shift of Q)])
    let sectors: [(usize, &str, &str, [(&str, &str); 4], f64); 2] = [
        (2, "Y2", "Z2", [("B", "D"), ("D", "B"), ("A", "C"), ("C", "A")], masses[0]),
        (1, "X1", "Z1", [("F", "H"), ("H", "F"), ("E", "G"), ("G", "E")], masses[1]),
    ];
    let mut out = BTreeMap::new();
    for (p, yl, zl, pairs, mass) in sectors {
        let y: Vec<Complex64> = (0..4).map(|m| constant(format!("{yl}_{m}"))).collect::<Result<_, _>>()?;
        let z: Vec<Complex64> = (0..4).map(|m| constant(format!("{zl}_{m}"))).collect::<Result<_, _>>()?;
        let shifted = ["A", "E"];
        for (pl, ql) in pairs {
            let mut worst: f64 = 0.0;
            for mu in 0..4 {
                let pe = cs.get(&format!("{pl}{mu}"));
                let qe = cs.get(&format!("{ql}{mu}"));
                let shift = |l: &str| if shifted.contains(&l) && mu == 0 { mass } else { 0.0 };
                let second: Vec<Vec<Expr>> = (0..4)
                    .map(|n| {
                        let d = pe.differentiate(p, n);
                        (0..4).map(|l| d.differentiate(p, l)).collect()
                    })
                    .collect();
                for x in samples {
                    let pv = pe.evaluate(x)? + shift(pl);
                    let qv = qe.evaluate(x)? + shift(ql);
                    for n in 0..4 {
                        for l in 0..4 {
                            let lhs = second[n][l].evaluate(x)?;
                            let rhs = (y[n] * y[l] + z[n] * z[l]) * pv + (y[n] * z[l] + z[n] * y[l]) * qv;
                            worst = worst.max((lhs + rhs * 4.0).norm());
                        }
                    }
                }
            }
            out.insert(pl.to_string(), worst);
        }
    }
    Ok(out)
}

/// `count` shifts with components uniform in `[−2, 2]`.
pub fn random_shifts(count: usize, seed: u64) -> Vec<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| std::array::from_fn(|_| rng.gen_range(-2.0..2.0)))
        .collect()
}

/// Translation residual of every potential for each shift, maximized.
pub fn system_translation_residual(
    sys: &MultiTimeSystem,
    shifts: &[[f64; 4]],
    samples: &[SpacetimeConfig],
    rep: &GammaRep,
) -> Result<f64, EvalError> {
    let mut worst: f64 = 0.0;
    for v in &sys.potentials {
        for a in shifts {
            worst = worst.max(translation_residual(v, *a, samples, rep)?);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consistency::{draw_samples, to_coefficient_form};
    use crate::dsl::parse;
    use crate::potential::{builtin, BuiltinParams, PotentialTerm, Region};
    use crate::clifford::TensorBasisElement;
    use std::collections::HashMap;

    fn params(pairs: &[(&str, &str)]) -> BuiltinParams {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn expr(src: &str) -> Expr {
        parse(src, 2, &HashMap::new()).unwrap()
    }

    #[test]
    fn zero_rapidity_is_identity() {
        let rep = GammaRep::dirac();
        let t = PoincareTransform::boost(&rep, [0.0, 0.0, 1.0], 0.0).unwrap();
        assert!((t.lambda - Matrix4::identity()).norm() < 1e-15);
        assert!((&t.s - identity(4)).norm() < 1e-15);
    }

    #[test]
    fn boost_entry_is_cosh() {
        let rep = GammaRep::dirac();
        for chi in [0.1, 0.5, 1.7] {
            let t = PoincareTransform::boost(&rep, [0.0, 0.0, 1.0], chi).unwrap();
            assert!((t.lambda[(0, 0)] - chi.cosh()).abs() < 1e-14);
            assert!(t.metric_residual() < 1e-12);
            assert!((t.lambda.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_turn_gives_minus_one() {
        // Oracle: numerical matrix exponential of the rotation generator.
        let rep = GammaRep::dirac();
        let t = PoincareTransform::rotation(&rep, [0.0, 1.0, 0.0], 2.0 * std::f64::consts::PI).unwrap();
        assert!((&t.s + identity(4)).norm() < 1e-12);
        let gen = spin_matrix(&rep, 2) * Complex64::new(0.0, -std::f64::consts::PI * t.generator_sign);
        let s = gen.exp();
        assert!((s + identity(4)).norm() < 1e-10);
    }

    #[test]
    fn closed_forms_match_exponentials() {
        let rep = GammaRep::dirac();
        let n = [0.6, 0.0, 0.8];
        let b = PoincareTransform::boost(&rep, n, 0.7).unwrap();
        let l = (boost_generator(n) * 0.7).exp();
        assert!((b.lambda - l).norm() < 1e-12);
        let r = PoincareTransform::rotation(&rep, n, 1.1).unwrap();
        let l = (rotation_generator(n) * 1.1).exp();
        assert!((r.lambda - l).norm() < 1e-12);
    }

    #[test]
    fn transforms_are_proper_and_intertwine() {
        for rep in [GammaRep::dirac(), GammaRep::weyl()] {
            for (n, x) in [([1.0, 0.0, 0.0], 0.3), ([0.0, 0.6, 0.8], -1.2), ([0.0, 0.0, 1.0], 2.5)] {
                for t in [
                    PoincareTransform::boost(&rep, n, x).unwrap(),
                    PoincareTransform::rotation(&rep, n, x).unwrap(),
                ] {
                    assert!(t.metric_residual() < 1e-12);
                    assert!(t.lambda[(0, 0)] >= 1.0);
                    assert!((&t.s * &t.s_inv - identity(4)).norm() < 1e-12);
                    assert!(intertwining_residual(&rep, &t.lambda, &t.s, &t.s_inv) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn rejects_non_unit_direction() {
        let rep = GammaRep::dirac();
        assert!(PoincareTransform::boost(&rep, [1.0, 1.0, 0.0], 0.2).is_err());
    }

    #[test]
    fn identity_and_scalar_potentials_are_invariant() {
        let rep = GammaRep::dirac();
        let samples = draw_samples(Region::All, 2, 10, 1).unwrap();
        let hoho = builtin("hoho", &BuiltinParams::new()).unwrap();
        let id = PoincareTransform::identity();
        assert_eq!(poincare_residual(hoho.potential(1), &id, &samples, &rep).unwrap(), 0.0);
        let scalar = Potential::new(1, vec![PotentialTerm::new(TensorBasisElement::identity(2), Expr::real(2.5))]);
        let t = PoincareTransform::boost(&rep, [0.0, 1.0, 0.0], 0.8)
            .unwrap()
            .compose(&PoincareTransform::rotation(&rep, [1.0, 0.0, 0.0], 0.4).unwrap())
            .with_translation([0.1, 0.2, -0.3, 1.0]);
        assert!(poincare_residual(&scalar, &t, &samples, &rep).unwrap() < 1e-12);
    }

    #[test]
    fn hoho_is_not_boost_invariant() {
        let rep = GammaRep::dirac();
        let samples = draw_samples(Region::All, 2, 20, 2).unwrap();
        let hoho = builtin("hoho", &BuiltinParams::new()).unwrap();
        let t = PoincareTransform::boost(&rep, [0.0, 0.0, 1.0], 0.5).unwrap();
        assert!(poincare_residual(hoho.potential(1), &t, &samples, &rep).unwrap() > 0.1);
    }

    #[test]
    fn composition_with_inverse_is_trivial() {
        let rep = GammaRep::dirac();
        let samples = draw_samples(Region::All, 2, 10, 3).unwrap();
        let hoho = builtin("hoho", &params(&[("c3", "0.4")])).unwrap();
        let t = PoincareTransform::boost(&rep, [0.0, 0.0, 1.0], 0.9)
            .unwrap()
            .with_translation([0.5, 0.0, 1.0, -2.0]);
        let r = poincare_residual(hoho.potential(1), &t.compose(&t.inverse()), &samples, &rep).unwrap();
        assert!(r < 1e-12, "{r}");
    }

    #[test]
    fn translation_examples() {
        let rep = GammaRep::dirac();
        let samples = draw_samples(Region::All, 2, 10, 4).unwrap();
        let hoho = builtin("hoho", &params(&[("c1", "0.7"), ("C2", "1.5")])).unwrap();
        let a = [0.3, -1.1, 2.0, 0.4];
        assert!(translation_residual(hoho.potential(1), a, &samples, &rep).unwrap() < 1e-12);
        let ext = Potential::new(1, vec![PotentialTerm::new(TensorBasisElement::identity(2), expr("sin(x1_0)"))]);
        assert!(translation_residual(&ext, a, &samples, &rep).unwrap() > 0.0);
        assert_eq!(translation_residual(&Potential::zero(1), a, &samples, &rep).unwrap(), 0.0);
    }

    fn gradient_set() -> CoefficientSet {
        // f = ∂M for M = sin(x1_0 + x2_3)
        let mut cs = CoefficientSet::zero();
        cs.set("W1_0", expr("cos(x1_0 + x2_3)"));
        cs.set("W2_3", expr("cos(x1_0 + x2_3)"));
        cs
    }

    #[test]
    fn gradient_field_is_recovered() {
        let samples = draw_samples(Region::All, 2, 20, 5).unwrap();
        let grid = GaugeGrid::default();
        let report = classify_gauge(&gradient_set(), &samples, &grid, 1e-9).unwrap();
        assert_eq!(report.verdict, GaugeVerdict::GaugeRemovable);
        let m = &report.m_full.as_ref().unwrap()[0];
        let coords = grid.coords();
        let mut diffs = Vec::new();
        for (a, u) in coords.iter().enumerate() {
            for (b, v) in coords.iter().enumerate() {
                diffs.push(m.value(a, b).re - (u + v).sin());
            }
        }
        let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((hi - lo) / 2.0 < 1e-5, "{}", hi - lo);
    }

    #[test]
    fn zero_sector_is_removable() {
        let samples = draw_samples(Region::All, 2, 5, 6).unwrap();
        let report = classify_gauge(&CoefficientSet::zero(), &samples, &GaugeGrid::default(), 1e-9).unwrap();
        assert_eq!(report.verdict, GaugeVerdict::GaugeRemovable);
        let m = &report.m_interaction.as_ref().unwrap()[0];
        assert!(m.re.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn non_integrable_sector_is_interacting() {
        let samples = draw_samples(Region::All, 2, 10, 7).unwrap();
        let mut cs = CoefficientSet::zero();
        cs.set("W1_1", expr("x2_0 * x1_2"));
        let report = classify_gauge(&cs, &samples, &GaugeGrid::default(), 1e-9).unwrap();
        assert_eq!(report.verdict, GaugeVerdict::Interacting);
        assert!(report.m_interaction.is_none());
    }

    #[test]
    fn hoho_classification() {
        let rep = GammaRep::dirac();
        let hoho = builtin("hoho", &BuiltinParams::new()).unwrap();
        let cs = to_coefficient_form(&hoho).unwrap();
        let samples = draw_samples(Region::All, 2, 10, 8).unwrap();
        let report = classify_gauge(&cs, &samples, &GaugeGrid::default(), 1e-9).unwrap();
        assert_eq!(report.verdict, GaugeVerdict::GaugeRemovable);
        let hp = HohoParams::default();
        let w = interaction_witness_hoho(&hp, &rep, &[SpacetimeConfig::zeros(2)]);
        assert!((w - 8.0).abs() < 1e-12);
        let overall = classify_interaction(&cs, &report, Some(interaction_witness_hoho(&hp, &rep, &samples)));
        assert_eq!(overall, GaugeVerdict::Interacting);
    }

    #[test]
    fn witness_degenerate_and_linear() {
        let rep = GammaRep::dirac();
        let origin = [SpacetimeConfig::zeros(2)];
        let mut hp = HohoParams::default();
        hp.big_c = [Complex64::new(0.0, 0.0); 4];
        assert_eq!(interaction_witness_hoho(&hp, &rep, &origin), 0.0);
        let base = HohoParams {
            small_c: [0.3, -0.2, 0.5, 0.1].map(Complex64::from),
            ..HohoParams::default()
        };
        let w1 = interaction_witness_hoho(&base, &rep, &origin);
        let scaled = HohoParams {
            small_c: base.small_c.map(|c| c * -2.5),
            ..base
        };
        let w2 = interaction_witness_hoho(&scaled, &rep, &origin);
        assert!((w2 - 2.5 * w1).abs() < 1e-12);
    }

    #[test]
    fn exponential_form_examples() {
        let samples = draw_samples(Region::All, 2, 10, 9).unwrap();
        let hoho = builtin("hoho", &params(&[("C1", "0.5"), ("c0", "0.8"), ("c3", "-0.6")])).unwrap();
        let r = exponential_form_residual(&to_coefficient_form(&hoho).unwrap(), [1.0, 1.0], &samples).unwrap();
        assert_eq!(r.len(), 8);
        assert!(r.values().all(|v| *v < 1e-9), "{r:?}");

        let r = exponential_form_residual(&CoefficientSet::zero(), [1.0, 1.0], &samples).unwrap();
        assert!(r.values().all(|v| *v == 0.0));

        let mut poly = CoefficientSet::zero();
        poly.set("B0", expr("x2_0^2"));
        let r = exponential_form_residual(&poly, [1.0, 1.0], &samples).unwrap();
        assert!((r["B"] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn chiral_exponential_solutions_pass() {
        // Y_2 = 0, Z_2 = c: B = cos(2c·x), D = −sin(2c·x).
        let samples = draw_samples(Region::All, 2, 10, 10).unwrap();
        let mut cs = CoefficientSet::zero();
        cs.set("Z2_0", Expr::real(0.4));
        cs.set("Z2_3", Expr::real(0.3));
        let ph = "2*(0.4*(x2_0 - x1_0) + 0.3*(x2_3 - x1_3))";
        cs.set("B1", expr(&format!("cos({ph})")));
        cs.set("D1", expr(&format!("-sin({ph})")));
        let r = exponential_form_residual(&cs, [0.0, 0.0], &samples).unwrap();
        assert!(r["B"] < 1e-9 && r["D"] < 1e-9, "{r:?}");
    }

    #[test]
    fn exponential_form_requires_constant_wxyz() {
        let mut cs = CoefficientSet::zero();
        cs.set("Y2_1", expr("x1_0"));
        assert!(matches!(
            exponential_form_residual(&cs, [1.0, 1.0], &[]),
            Err(SymmetryError::PreconditionViolated(_))
        ));
    }

    #[test]
    fn external_systems_are_removable() {
        let samples = draw_samples(Region::All, 2, 5, 11).unwrap();
        let mut cs = gradient_set();
        cs.set("A2", expr("sin(x1_1)"));
        cs.set("F0", expr("x2_3"));
        let g = classify_gauge(&cs, &samples, &GaugeGrid::default(), 1e-9).unwrap();
        assert_eq!(classify_interaction(&cs, &g, None), GaugeVerdict::GaugeRemovable);
        cs.set("C0", Expr::real(1.0));
        assert_eq!(classify_interaction(&cs, &g, None), GaugeVerdict::Undecided);
    }
}
