//! Dense complex realization of the Dirac algebra.
//!
//! Everything here works on 4×4 blocks and their Kronecker products. The
//! particle ordering in a product is fixed: particle 1 is the most
//! significant factor, so a two-particle spin index is `4 * s1 + s2`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Square complex matrix. All matrices produced here have dimension `4^n`.
pub type CMatrix = DMatrix<Complex64>;

/// Minkowski metric diagonal, signature (+,-,-,-).
pub const METRIC: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliffordError {
    #[error("particle index {index} out of range 1..={count}")]
    ParticleOutOfRange { index: usize, count: usize },
    #[error("matrix has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn zeros(dim: usize) -> CMatrix {
    CMatrix::zeros(dim, dim)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

/// Frobenius norm.
pub fn frobenius(m: &CMatrix) -> f64 {
    m.norm()
}

/// `‖m − m†‖_F`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    (m - m.adjoint()).norm()
}

/// Hilbert–Schmidt inner product `tr(a† b)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}


fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn pauli() -> [CMatrix; 3] {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let sx = CMatrix::from_row_slice(2, 2, &[z, one, one, z]);
    let sy = CMatrix::from_row_slice(2, 2, &[z, -I, I, z]);
    let sz = CMatrix::from_row_slice(2, 2, &[one, z, z, -one]);
    [sx, sy, sz]
}

fn blocks(tl: &CMatrix, tr: &CMatrix, bl: &CMatrix, br: &CMatrix) -> CMatrix {
    let mut m = zeros(4);
    m.view_mut((0, 0), (2, 2)).copy_from(tl);
    m.view_mut((0, 2), (2, 2)).copy_from(tr);
    m.view_mut((2, 0), (2, 2)).copy_from(bl);
    m.view_mut((2, 2), (2, 2)).copy_from(br);
    m
}

/// A concrete set of gamma matrices together with the derived γ⁵ and α^μ.
#[derive(Debug, Clone)]
pub struct GammaRep {
    pub gamma: [CMatrix; 4],
    pub gamma5: CMatrix,
    pub alpha: [CMatrix; 4],
}

impl GammaRep {
    /// Builds γ⁵ = iγ⁰γ¹γ²γ³ and α^μ = γ⁰γ^μ from the four gammas.
    pub fn from_gammas(gamma: [CMatrix; 4]) -> Self {
        let gamma5 = (&gamma[0] * &gamma[1] * &gamma[2] * &gamma[3]) * I;
        let alpha = std::array::from_fn(|mu| &gamma[0] * &gamma[mu]);
        GammaRep {
            gamma,
            gamma5,
            alpha,
        }
    }

    /// Standard Dirac representation, γ⁰ = diag(1,1,−1,−1).
    pub fn dirac() -> Self {
        let one = identity(2);
        let zero = zeros(2);
        let [sx, sy, sz] = pauli();
        let g0 = blocks(&one, &zero, &zero, &(-&one));
        let spatial = |s: &CMatrix| blocks(&zero, s, &(-s), &zero);
        Self::from_gammas([g0, spatial(&sx), spatial(&sy), spatial(&sz)])
    }

    /// Chiral (Weyl) representation.
    pub fn weyl() -> Self {
        let one = identity(2);
        let zero = zeros(2);
        let [sx, sy, sz] = pauli();
        let g0 = blocks(&zero, &one, &one, &zero);
        let spatial = |s: &CMatrix| blocks(&zero, s, &(-s), &zero);
        Self::from_gammas([g0, spatial(&sx), spatial(&sy), spatial(&sz)])
    }

    /// The representation `u γ^μ u†` for a unitary `u`.
    pub fn conjugated(&self, u: &CMatrix) -> Self {
        let ud = u.adjoint();
        Self::from_gammas(std::array::from_fn(|mu| u * &self.gamma[mu] * &ud))
    }

    /// Sup-norm of `{γ^μ,γ^ν} − 2g^{μν}𝟙` over all index pairs.
    pub fn clifford_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for mu in 0..4 {
            for nu in 0..4 {
                let mut target = zeros(4);
                if mu == nu {
                    target = identity(4) * c(2.0 * METRIC[mu], 0.0);
                }
                let r = anticommutator(&self.gamma[mu], &self.gamma[nu]) - target;
                worst = worst.max(r.norm());
            }
        }
        worst
    }

    /// Largest violation of: γ⁰ hermitian, γ^a anti-hermitian, (γ⁵)² = 𝟙,
    /// {γ⁵,γ^μ} = 0, α⁰ = 𝟙.
    pub fn structure_residual(&self) -> f64 {
        let mut worst = hermiticity_defect(&self.gamma[0]);
        for a in 1..4 {
            worst = worst.max((&self.gamma[a] + self.gamma[a].adjoint()).norm());
        }
        worst = worst.max((&self.gamma5 * &self.gamma5 - identity(4)).norm());
        for g in &self.gamma {
            worst = worst.max(anticommutator(&self.gamma5, g).norm());
        }
        worst.max((&self.alpha[0] - identity(4)).norm())
    }

    pub fn realize(&self, b: BasisElement) -> CMatrix {
        let mu = b.mu as usize;
        match b.class {
            BasisClass::Alpha => self.alpha[mu].clone(),
            BasisClass::G5Alpha => &self.gamma5 * &self.alpha[mu],
            BasisClass::Gamma => self.gamma[mu].clone(),
            BasisClass::G5Gamma => &self.gamma5 * &self.gamma[mu],
        }
    }

    pub fn realize_tensor(&self, t: &TensorBasisElement) -> CMatrix {
        let mut out = identity(1);
        for f in &t.factors {
            out = kron(&out, &self.realize(*f));
        }
        out
    }
}

/// Places a 4×4 matrix at the `k`-th tensor slot (1-based) of an `n`-particle space.
pub fn embed(m: &CMatrix, k: usize, n: usize) -> Result<CMatrix, CliffordError> {
    if k == 0 || k > n {
        return Err(CliffordError::ParticleOutOfRange { index: k, count: n });
    }
    if m.nrows() != 4 || m.ncols() != 4 {
        return Err(CliffordError::DimensionMismatch {
            expected: 4,
            found: m.nrows(),
        });
    }
    let left = identity(4usize.pow(k as u32 - 1));
    let right = identity(4usize.pow((n - k) as u32));
    Ok(kron(&kron(&left, m), &right))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisClass {
    Alpha,
    G5Alpha,
    Gamma,
    G5Gamma,
}

impl BasisClass {
    pub const ALL: [BasisClass; 4] = [
        BasisClass::Alpha,
        BasisClass::G5Alpha,
        BasisClass::Gamma,
        BasisClass::G5Gamma,
    ];
}

/// One of the sixteen single-particle basis matrices α^μ, γ⁵α^μ, γ^μ, γ⁵γ^μ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisElement {
    pub class: BasisClass,
    pub mu: u8,
}

impl BasisElement {
    /// α⁰ = 𝟙.
    pub const IDENTITY: BasisElement = BasisElement {
        class: BasisClass::Alpha,
        mu: 0,
    };
    /// γ⁵α⁰ = γ⁵.
    pub const GAMMA5: BasisElement = BasisElement {
        class: BasisClass::G5Alpha,
        mu: 0,
    };

    pub fn new(class: BasisClass, mu: u8) -> Self {
        assert!(mu < 4, "basis index mu must be 0..=3");
        BasisElement { class, mu }
    }

    pub fn index(self) -> usize {
        (self.class as usize) * 4 + self.mu as usize
    }

    pub fn from_index(i: usize) -> Self {
        BasisElement::new(BasisClass::ALL[i / 4], (i % 4) as u8)
    }

    pub fn all() -> impl Iterator<Item = BasisElement> {
        (0..16).map(BasisElement::from_index)
    }

    /// True for 𝟙 and γ⁵, the only factors that commute with every α^a.
    pub fn is_chiral_scalar(self) -> bool {
        self == Self::IDENTITY || self == Self::GAMMA5
    }
}

impl fmt::Display for BasisElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.class {
            BasisClass::Alpha if self.mu == 0 => write!(f, "1"),
            BasisClass::G5Alpha if self.mu == 0 => write!(f, "g5"),
            BasisClass::Alpha => write!(f, "alpha{}", self.mu),
            BasisClass::G5Alpha => write!(f, "g5alpha{}", self.mu),
            BasisClass::Gamma => write!(f, "gamma{}", self.mu),
            BasisClass::G5Gamma => write!(f, "g5gamma{}", self.mu),
        }
    }
}

/// Kronecker product of one basis element per particle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorBasisElement {
    pub factors: Vec<BasisElement>,
}

impl TensorBasisElement {
    pub fn new(factors: Vec<BasisElement>) -> Self {
        TensorBasisElement { factors }
    }

    pub fn identity(n: usize) -> Self {
        TensorBasisElement {
            factors: vec![BasisElement::IDENTITY; n],
        }
    }

    /// `m` at particle `k` (1-based), identity elsewhere.
    pub fn single(m: BasisElement, k: usize, n: usize) -> Self {
        let mut t = Self::identity(n);
        t.factors[k - 1] = m;
        t
    }

    pub fn particles(&self) -> usize {
        self.factors.len()
    }

    /// All `16^n` elements in lexicographic order.
    pub fn all(n: usize) -> Vec<TensorBasisElement> {
        let count = 16usize.pow(n as u32);
        (0..count)
            .map(|mut idx| {
                let mut factors = vec![BasisElement::IDENTITY; n];
                for slot in (0..n).rev() {
                    factors[slot] = BasisElement::from_index(idx % 16);
                    idx /= 16;
                }
                TensorBasisElement { factors }
            })
            .collect()
    }
}

impl fmt::Display for TensorBasisElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, " ⊗ ")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// The sixteen single-particle basis matrices in index order.
pub fn basis16(rep: &GammaRep) -> Vec<(BasisElement, CMatrix)> {
    BasisElement::all().map(|b| (b, rep.realize(b))).collect()
}

/// Hilbert–Schmidt Gram matrix of the sixteen basis matrices.
pub fn gram16(rep: &GammaRep) -> CMatrix {
    let basis = basis16(rep);
    CMatrix::from_fn(16, 16, |i, j| hs_inner(&basis[i].1, &basis[j].1))
}

/// Coefficients of `m` in the tensor basis, `c_B = tr(B† m) / 4^n`, in the
/// order of [`TensorBasisElement::all`].
pub fn decompose(
    m: &CMatrix,
    n: usize,
    rep: &GammaRep,
) -> Result<Vec<(TensorBasisElement, Complex64)>, CliffordError> {
    let dim = 4usize.pow(n as u32);
    if m.nrows() != dim || m.ncols() != dim {
        return Err(CliffordError::DimensionMismatch {
            expected: dim,
            found: m.nrows(),
        });
    }
    let scale = 1.0 / dim as f64;
    Ok(TensorBasisElement::all(n)
        .into_iter()
        .map(|t| {
            let b = rep.realize_tensor(&t);
            let coeff = hs_inner(&b, m) * scale;
            (t, coeff)
        })
        .collect())
}

/// Inverse of [`decompose`].
pub fn reconstruct(coeffs: &[(TensorBasisElement, Complex64)], rep: &GammaRep) -> CMatrix {
    let n = coeffs.first().map_or(1, |(t, _)| t.particles());
    let mut out = zeros(4usize.pow(n as u32));
    for (t, c) in coeffs {
        if *c != Complex64::new(0.0, 0.0) {
            out += rep.realize_tensor(t) * *c;
        }
    }
    out
}

fn levi_civita(a: usize, b: usize, c: usize) -> f64 {
    match (a, b, c) {
        (1, 2, 3) | (2, 3, 1) | (3, 1, 2) => 1.0,
        (3, 2, 1) | (1, 3, 2) | (2, 1, 3) => -1.0,
        _ => 0.0,
    }
}

/// One row of the α^a commutator table.
#[derive(Debug, Clone, Serialize)]
pub struct CommutatorCheck {
    pub identity: &'static str,
    /// Sup over a, b ∈ {1,2,3} of the Frobenius residual.
    pub residual: f64,
}

/// Checks the eight commutators of α^a with the basis matrices, each as
/// the identity is written (ε₁₂₃ = +1).
pub fn commutator_table(rep: &GammaRep) -> Vec<CommutatorCheck> {
    let g5 = &rep.gamma5;
    let al = &rep.alpha;
    let ga = &rep.gamma;
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let eps_sum = |a: usize, b: usize, f: &dyn Fn(usize) -> CMatrix| {
        (1..4).fold(zeros(4), |acc, cc| acc + f(cc) * c(levi_civita(a, b, cc), 0.0))
    };

    type Rule<'a> = (&'static str, Box<dyn Fn(usize, usize) -> (CMatrix, CMatrix) + 'a>);
    let rules: Vec<Rule> = vec![
        (
            "[α^a, α^0] = 0",
            Box::new(|a, _| (commutator(&al[a], &al[0]), zeros(4))),
        ),
        (
            "[α^a, α^b] = -2i ε_abc γ5 α^c",
            Box::new(|a, b| {
                let rhs = eps_sum(a, b, &|cc| g5 * &al[cc]) * c(0.0, -2.0);
                (commutator(&al[a], &al[b]), rhs)
            }),
        ),
        (
            "[α^a, γ5 α^0] = 0",
            Box::new(|a, _| (commutator(&al[a], &(g5 * &al[0])), zeros(4))),
        ),
        (
            "[α^a, γ5 α^b] = 2i ε_abc α^c",
            Box::new(|a, b| {
                let rhs = eps_sum(a, b, &|cc| al[cc].clone()) * c(0.0, 2.0);
                (commutator(&al[a], &(g5 * &al[b])), rhs)
            }),
        ),
        (
            "[α^a, γ^0] = -2 γ^a",
            Box::new(|a, _| (commutator(&al[a], &ga[0]), &ga[a] * c(-2.0, 0.0))),
        ),
        (
            "[α^a, γ^b] = -2 δ^ab γ^0",
            Box::new(|a, b| {
                (
                    commutator(&al[a], &ga[b]),
                    &ga[0] * c(-2.0 * delta(a, b), 0.0),
                )
            }),
        ),
        (
            "[α^a, γ5 γ^0] = -2 γ5 γ^a",
            Box::new(|a, _| {
                (
                    commutator(&al[a], &(g5 * &ga[0])),
                    g5 * &ga[a] * c(-2.0, 0.0),
                )
            }),
        ),
        (
            "[α^a, γ5 γ^b] = -2 δ^ab γ5 γ^0",
            Box::new(|a, b| {
                (
                    commutator(&al[a], &(g5 * &ga[b])),
                    g5 * &ga[0] * c(-2.0 * delta(a, b), 0.0),
                )
            }),
        ),
    ];

    rules
        .into_iter()
        .map(|(identity, rule)| {
            let mut residual: f64 = 0.0;
            for a in 1..4 {
                for b in 1..4 {
                    let (lhs, rhs) = rule(a, b);
                    residual = residual.max((lhs - rhs).norm());
                }
            }
            CommutatorCheck { identity, residual }
        })
        .collect()
}

/// `[α^a, α^b]` against `s · 2i ε_abc γ5 α^c` for an explicit overall sign `s`.
pub fn alpha_alpha_residual(rep: &GammaRep, sign: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for a in 1..4 {
        for b in 1..4 {
            let rhs = (1..4).fold(zeros(4), |acc, cc| {
                acc + &rep.gamma5 * &rep.alpha[cc] * c(0.0, 2.0 * sign * levi_civita(a, b, cc))
            });
            worst = worst.max((commutator(&rep.alpha[a], &rep.alpha[b]) - rhs).norm());
        }
    }
    worst
}
