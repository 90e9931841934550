//! Two-particle multi-time propagator in the line model: each particle
//! moves along z, keeps its full 4-spinor, and feels potentials evaluated
//! at `(t_k, 0, 0, z_k)`.

use crate::clifford::{commutator, embed, identity, CMatrix, GammaRep};
use crate::consistency::{zeroth_order_residual_with, ConsistencyError};
use crate::dsl::{EvalError, SpacetimeConfig};
use crate::potential::MultiTimeSystem;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
/// Discrepancies below this are treated as exact zeros when fitting orders.
pub const ORDER_FLOOR: f64 = 1e-13;
const CACHE_LIMIT: usize = 1 << 14;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Consistency(#[from] ConsistencyError),
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("time step {dt} exceeds the grid spacing {dz}")]
    StepTooLarge { dt: f64, dz: f64 },
    #[error("invalid path: {0}")]
    Path(String),
    #[error("unsupported system: {0}")]
    Unsupported(String),
}

impl SolverError {
    pub fn is_numerical(&self) -> bool {
        matches!(self, SolverError::Eval(_))
            || matches!(self, SolverError::Consistency(e) if e.is_numerical())
    }
}

/// Periodic grid `z_i = −L/2 + i·dz`, `dz = L/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub length: f64,
    pub n: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Grid { length: 20.0, n: 128 }
    }
}

impl Grid {
    pub fn new(length: f64, n: usize) -> Result<Self, SolverError> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(SolverError::Grid(format!("box length must be positive, got {length}")));
        }
        if n < 16 || !n.is_power_of_two() {
            return Err(SolverError::Grid(format!("n must be a power of two ≥ 16, got {n}")));
        }
        Ok(Grid { length, n })
    }

    pub fn dz(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn z(&self, i: usize) -> f64 {
        -self.length / 2.0 + i as f64 * self.dz()
    }

    /// Wave number of FFT bin `j`.
    pub fn kappa(&self, j: usize) -> f64 {
        let j = if j < self.n / 2 { j as f64 } else { j as f64 - self.n as f64 };
        2.0 * PI * j / self.length
    }

    /// Distance on the circle of circumference L.
    pub fn periodic_distance(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(self.length);
        d.min(self.length - d)
    }
}

/// `(t_1 − t_2)² < d(z_1, z_2)²` with periodic distance, row-major in (z₁, z₂).
pub fn spacelike_mask(grid: &Grid, t1: f64, t2: f64) -> Vec<bool> {
    let dt2 = (t1 - t2).powi(2);
    let mut mask = Vec::with_capacity(grid.n * grid.n);
    for i1 in 0..grid.n {
        for i2 in 0..grid.n {
            mask.push(dt2 < grid.periodic_distance(grid.z(i1), grid.z(i2)).powi(2));
        }
    }
    mask
}

/// ψ on the n×n grid with 16 spin components; `values[(i1·n + i2)·16 + s]`
/// with `s = 4·s1 + s2`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub grid: Grid,
    pub values: Vec<Complex64>,
    pub times: [f64; 2],
}

impl WaveFunction {
    pub fn zeros(grid: Grid) -> Self {
        WaveFunction {
            grid,
            values: vec![ZERO; grid.n * grid.n * 16],
            times: [0.0, 0.0],
        }
    }

    pub fn index(&self, i1: usize, i2: usize, s: usize) -> usize {
        (i1 * self.grid.n + i2) * 16 + s
    }

    /// Product of normalized Gaussians centred at `centers` with `width`,
    /// times `u1 ⊗ u2`; normalized on the grid.
    pub fn gaussian_product(grid: Grid, centers: [f64; 2], width: f64, spinors: [[Complex64; 4]; 2]) -> Self {
        let mut psi = Self::zeros(grid);
        let g = |z: f64, c: f64| {
            let d = grid.periodic_distance(z, c);
            (-(d * d) / (2.0 * width * width)).exp()
        };
        for i1 in 0..grid.n {
            let a = g(grid.z(i1), centers[0]);
            for i2 in 0..grid.n {
                let b = g(grid.z(i2), centers[1]);
                for s1 in 0..4 {
                    for s2 in 0..4 {
                        let idx = psi.index(i1, i2, 4 * s1 + s2);
                        psi.values[idx] = spinors[0][s1] * spinors[1][s2] * (a * b);
                    }
                }
            }
        }
        psi.normalize();
        psi
    }

    /// Width-1 packets at z₁ = −3, z₂ = +3 with fixed generic spinors.
    pub fn default_packet(grid: Grid) -> Self {
        let u1 = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.5),
            Complex64::new(0.3, 0.0),
            Complex64::new(-0.2, 0.1),
        ];
        let u2 = [
            Complex64::new(0.4, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, -0.3),
            Complex64::new(0.2, 0.0),
        ];
        Self::gaussian_product(grid, [-3.0, 3.0], 1.0, [u1, u2])
    }

    pub fn norm(&self) -> f64 {
        let dz = self.grid.dz();
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * dz * dz).sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= n);
        }
    }

    /// L² distance, optionally restricted to grid points where `mask` holds.
    pub fn distance(&self, other: &WaveFunction, mask: Option<&[bool]>) -> f64 {
        let dz = self.grid.dz();
        let mut sum = 0.0;
        for (p, (a, b)) in self.values.chunks(16).zip(other.values.chunks(16)).enumerate() {
            if mask.map_or(true, |m| m[p]) {
                sum += a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>();
            }
        }
        (sum * dz * dz).sqrt()
    }

    /// `⟨z_k⟩`.
    pub fn mean_position(&self, k: usize) -> f64 {
        let n = self.grid.n;
        let mut num = 0.0;
        let mut den = 0.0;
        for (p, chunk) in self.values.chunks(16).enumerate() {
            let i = if k == 1 { p / n } else { p % n };
            let w: f64 = chunk.iter().map(|v| v.norm_sqr()).sum();
            num += w * self.grid.z(i);
            den += w;
        }
        num / den
    }

    /// Spectral derivative `∂_{z_k} ψ`.
    pub fn derivative(&self, k: usize) -> WaveFunction {
        let fft = FftPair::new(self.grid.n);
        let mut buf = fft.gather(self, k);
        fft.forward.process(&mut buf);
        let n = self.grid.n;
        for line in buf.chunks_mut(n) {
            for (j, v) in line.iter_mut().enumerate() {
                *v *= I * self.grid.kappa(j);
            }
        }
        fft.inverse.process(&mut buf);
        let mut out = self.clone();
        fft.scatter(&buf, &mut out, k);
        out
    }
}

struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    n: usize,
}

impl FftPair {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftPair {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            n,
        }
    }

    /// Lines along `z_k`, laid out as `((i_other·16 + s)·n + i_k)`.
    fn gather(&self, psi: &WaveFunction, k: usize) -> Vec<Complex64> {
        let n = self.n;
        let mut buf = vec![ZERO; n * n * 16];
        for i1 in 0..n {
            for i2 in 0..n {
                let (other, own) = if k == 1 { (i2, i1) } else { (i1, i2) };
                let src = (i1 * n + i2) * 16;
                for s in 0..16 {
                    buf[(other * 16 + s) * n + own] = psi.values[src + s];
                }
            }
        }
        buf
    }

    /// Inverse of [`FftPair::gather`], including the 1/n of the inverse FFT.
    fn scatter(&self, buf: &[Complex64], psi: &mut WaveFunction, k: usize) {
        let n = self.n;
        let scale = 1.0 / n as f64;
        for i1 in 0..n {
            for i2 in 0..n {
                let (other, own) = if k == 1 { (i2, i1) } else { (i1, i2) };
                let dst = (i1 * n + i2) * 16;
                for s in 0..16 {
                    psi.values[dst + s] = buf[(other * 16 + s) * n + own] * scale;
                }
            }
        }
    }
}

/// One leg of a path in multi-time: evolve `t_particle` by the signed
/// `duration` in steps of at most `dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Leg {
    pub particle: usize,
    pub duration: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PathSpec {
    pub legs: Vec<Leg>,
}

impl PathSpec {
    /// `t_{order[0]}` by T, then `t_{order[1]}` by T.
    pub fn sequential(order: [usize; 2], t: f64, dt: f64) -> Self {
        PathSpec {
            legs: order.iter().map(|&k| Leg { particle: k, duration: t, dt }).collect(),
        }
    }

    /// `t_1: +δ, t_2: +δ, t_1: −δ, t_2: −δ`.
    pub fn square_loop(delta: f64, dt: f64) -> Self {
        let leg = |particle, duration| Leg { particle, duration, dt };
        PathSpec {
            legs: vec![leg(1, delta), leg(2, delta), leg(1, -delta), leg(2, -delta)],
        }
    }

    fn validate(&self) -> Result<(), SolverError> {
        for (i, l) in self.legs.iter().enumerate() {
            if l.particle != 1 && l.particle != 2 {
                return Err(SolverError::Path(format!("leg {i}: particle must be 1 or 2")));
            }
            if !(l.dt > 0.0 && l.dt.is_finite()) || !l.duration.is_finite() {
                return Err(SolverError::Path(format!("leg {i}: need dt > 0 and a finite duration")));
            }
        }
        Ok(())
    }
}

type ExpKey = (usize, u64, Vec<u64>);

/// Split-step propagator for a two-particle system on a [`Grid`].
pub struct Propagator<'a> {
    sys: &'a MultiTimeSystem,
    rep: &'a GammaRep,
    grid: Grid,
    fft: FftPair,
    alpha3: CMatrix,
    gamma0: CMatrix,
    /// Realized 16×16 basis matrix of every term, per particle.
    basis: [Vec<CMatrix>; 2],
    cache: HashMap<ExpKey, Arc<CMatrix>>,
}

fn bits(v: &[Complex64]) -> Vec<u64> {
    v.iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect()
}

impl<'a> Propagator<'a> {
    pub fn new(sys: &'a MultiTimeSystem, rep: &'a GammaRep, grid: Grid) -> Result<Self, SolverError> {
        if sys.n != 2 {
            return Err(SolverError::Unsupported(format!("the line solver needs 2 particles, got {}", sys.n)));
        }
        let basis = [1, 2].map(|k| {
            sys.potential(k)
                .terms
                .iter()
                .map(|t| rep.realize_tensor(&t.basis))
                .collect()
        });
        Ok(Propagator {
            sys,
            rep,
            grid,
            fft: FftPair::new(grid.n),
            alpha3: rep.alpha[3].clone(),
            gamma0: rep.gamma[0].clone(),
            basis,
            cache: HashMap::new(),
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    fn config(&self, times: [f64; 2], z1: f64, z2: f64) -> SpacetimeConfig {
        SpacetimeConfig(vec![[times[0], 0.0, 0.0, z1], [times[1], 0.0, 0.0, z2]])
    }

    /// `exp(−i τ V)` for a 16×16 `V` given by its term coefficients.
    fn exponential(&mut self, k: usize, tau: f64, coeffs: &[Complex64]) -> Arc<CMatrix> {
        let key = (k, tau.to_bits(), bits(coeffs));
        if let Some(m) = self.cache.get(&key) {
            return m.clone();
        }
        let mut v = CMatrix::zeros(16, 16);
        for (c, b) in coeffs.iter().zip(&self.basis[k - 1]) {
            if *c != ZERO {
                v += b * *c;
            }
        }
        let hermitian = (&v - v.adjoint()).norm() < 1e-12 * (1.0 + v.norm());
        let u = if hermitian {
            let eig = v.symmetric_eigen();
            let phases = CMatrix::from_diagonal(&eig.eigenvalues.map(|l| (-I * (tau * l)).exp()));
            &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
        } else {
            (v * (-I * tau)).exp()
        };
        if self.cache.len() >= CACHE_LIMIT {
            self.cache.clear();
        }
        let u = Arc::new(u);
        self.cache.insert(key, u.clone());
        u
    }

    /// Multiplies ψ by `exp(−i τ V_k)` evaluated at `times`.
    fn potential_factor(&mut self, k: usize, times: [f64; 2], tau: f64) -> Result<PotentialFactor, SolverError> {
        let pot = self.sys.potential(k);
        if pot.terms.is_empty() && pot.guards.is_empty() {
            return Ok(PotentialFactor::None);
        }
        let n = self.grid.n;
        let dz1 = pot.depends_on_with_guards(1, 3);
        let dz2 = pot.depends_on_with_guards(2, 3);
        let (r1, r2) = (if dz1 { n } else { 1 }, if dz2 { n } else { 1 });
        let scalar = pot.is_scalar();
        let mut scalars = Vec::new();
        let mut mats = Vec::new();
        for a in 0..r1 {
            for b in 0..r2 {
                let x = self.config(times, self.grid.z(a), self.grid.z(b));
                let c = pot.coefficients(&x)?;
                if scalar {
                    let v: Complex64 = c.iter().sum();
                    scalars.push((-I * tau * v).exp());
                } else {
                    mats.push(self.exponential(k, tau, &c));
                }
            }
        }
        Ok(if scalar {
            PotentialFactor::Scalar { values: scalars, dz1, dz2 }
        } else {
            PotentialFactor::Matrix { values: mats, dz1, dz2 }
        })
    }

    fn apply_factor(&self, psi: &mut WaveFunction, f: &PotentialFactor) {
        let n = self.grid.n;
        let at = |dz1: bool, dz2: bool, i1: usize, i2: usize| {
            let a = if dz1 { i1 } else { 0 };
            let b = if dz2 { i2 } else { 0 };
            a * if dz2 { n } else { 1 } + b
        };
        match f {
            PotentialFactor::None => {}
            PotentialFactor::Scalar { values, dz1, dz2 } => {
                for i1 in 0..n {
                    for i2 in 0..n {
                        let p = values[at(*dz1, *dz2, i1, i2)];
                        let base = (i1 * n + i2) * 16;
                        psi.values[base..base + 16].iter_mut().for_each(|v| *v *= p);
                    }
                }
            }
            PotentialFactor::Matrix { values, dz1, dz2 } => {
                let mut tmp = [ZERO; 16];
                for i1 in 0..n {
                    for i2 in 0..n {
                        let u = &values[at(*dz1, *dz2, i1, i2)];
                        let base = (i1 * n + i2) * 16;
                        let chunk = &mut psi.values[base..base + 16];
                        for (r, t) in tmp.iter_mut().enumerate() {
                            *t = (0..16).map(|c| u[(r, c)] * chunk[c]).sum();
                        }
                        chunk.copy_from_slice(&tmp);
                    }
                }
            }
        }
    }

    /// `exp(−i dt (α³κ + γ⁰m))` on particle k's spinor, mode by mode.
    fn free_step(&self, psi: &mut WaveFunction, k: usize, dt: f64) {
        if dt == 0.0 {
            return;
        }
        let n = self.grid.n;
        let m = self.sys.mass(k);
        let mut buf = self.fft.gather(psi, k);
        self.fft.forward.process(&mut buf);
        let modes: Vec<CMatrix> = (0..n)
            .map(|j| {
                let kappa = self.grid.kappa(j);
                let h = &self.alpha3 * Complex64::from(kappa) + &self.gamma0 * Complex64::from(m);
                let e = (kappa * kappa + m * m).sqrt();
                if e == 0.0 {
                    identity(4)
                } else {
                    identity(4) * Complex64::from((e * dt).cos()) - h * (I * ((e * dt).sin() / e))
                }
            })
            .collect();
        // buf[((other·16 + s)·n + j)], s = 4 s1 + s2; U acts on s_k.
        for other in 0..n {
            for j in 0..n {
                let u = &modes[j];
                for fixed in 0..4 {
                    let s_of = |own: usize| if k == 1 { 4 * own + fixed } else { 4 * fixed + own };
                    let v: [Complex64; 4] = std::array::from_fn(|own| buf[(other * 16 + s_of(own)) * n + j]);
                    for r in 0..4 {
                        buf[(other * 16 + s_of(r)) * n + j] = (0..4).map(|c| u[(r, c)] * v[c]).sum();
                    }
                }
            }
        }
        self.fft.inverse.process(&mut buf);
        self.fft.scatter(&buf, psi, k);
    }

    /// One Strang step of `t_k` by `dt` (negative `dt` runs backwards).
    pub fn step(&mut self, psi: &mut WaveFunction, k: usize, dt: f64) -> Result<(), SolverError> {
        if k != 1 && k != 2 {
            return Err(SolverError::Path(format!("particle must be 1 or 2, got {k}")));
        }
        let dz = self.grid.dz();
        if dt.abs() > dz * (1.0 + 1e-12) {
            return Err(SolverError::StepTooLarge { dt, dz });
        }
        if dt == 0.0 {
            return Ok(());
        }
        let mut mid = psi.times;
        mid[k - 1] += dt / 2.0;
        let factor = self.potential_factor(k, mid, dt / 2.0)?;
        self.apply_factor(psi, &factor);
        self.free_step(psi, k, dt);
        self.apply_factor(psi, &factor);
        psi.times[k - 1] += dt;
        Ok(())
    }

    pub fn evolve(&mut self, psi: &mut WaveFunction, path: &PathSpec) -> Result<(), SolverError> {
        path.validate()?;
        for leg in &path.legs {
            let steps = (leg.duration.abs() / leg.dt - 1e-9).ceil().max(0.0) as usize;
            if steps == 0 {
                continue;
            }
            let h = leg.duration / steps as f64;
            for _ in 0..steps {
                self.step(psi, leg.particle, h)?;
            }
        }
        Ok(())
    }

    /// `‖[∇_1, ∇_2] ψ‖` on the grid with `∇_k = ∂_{t_k} + iH_k`: the line
    /// model residual plus `i[α³_1,V_2]∂_{z_1} − i[α³_2,V_1]∂_{z_2}`.
    pub fn curvature_norm(&self, psi: &WaveFunction) -> Result<f64, SolverError> {
        let n = self.grid.n;
        let d1 = psi.derivative(1);
        let d2 = psi.derivative(2);
        let a31 = embed(&self.alpha3, 1, 2).expect("two particles");
        let a32 = embed(&self.alpha3, 2, 2).expect("two particles");
        let uniform = (1..=2).all(|k| {
            let p = self.sys.potential(k);
            !p.depends_on(1, 3) && !p.depends_on(2, 3)
        });
        let ops = |x: &SpacetimeConfig| -> Result<[CMatrix; 3], SolverError> {
            let r = zeroth_order_residual_with(self.sys, 1, 2, x, self.rep, &[0, 3])?;
            let v1 = self.sys.potential(1).evaluate(x, self.rep)?;
            let v2 = self.sys.potential(2).evaluate(x, self.rep)?;
            Ok([r, commutator(&a31, &v2) * I, commutator(&a32, &v1) * (-I)])
        };
        let fixed = if uniform {
            Some(ops(&self.config(psi.times, 0.0, 0.0))?)
        } else {
            None
        };
        let mut sum = 0.0;
        for i1 in 0..n {
            for i2 in 0..n {
                let local;
                let m = match &fixed {
                    Some(m) => m,
                    None => {
                        local = ops(&self.config(psi.times, self.grid.z(i1), self.grid.z(i2)))?;
                        &local
                    }
                };
                let base = (i1 * n + i2) * 16;
                for r in 0..16 {
                    let mut acc = ZERO;
                    for c in 0..16 {
                        acc += m[0][(r, c)] * psi.values[base + c]
                            + m[1][(r, c)] * d1.values[base + c]
                            + m[2][(r, c)] * d2.values[base + c];
                    }
                    sum += acc.norm_sqr();
                }
            }
        }
        let dz = self.grid.dz();
        Ok((sum * dz * dz).sqrt())
    }
}

enum PotentialFactor {
    None,
    Scalar { values: Vec<Complex64>, dz1: bool, dz2: bool },
    Matrix { values: Vec<Arc<CMatrix>>, dz1: bool, dz2: bool },
}

/// Applies `path` to a copy of `psi0`.
pub fn evolve_path(
    psi0: &WaveFunction,
    path: &PathSpec,
    sys: &MultiTimeSystem,
    rep: &GammaRep,
) -> Result<WaveFunction, SolverError> {
    let mut prop = Propagator::new(sys, rep, psi0.grid)?;
    let mut psi = psi0.clone();
    prop.evolve(&mut psi, path)?;
    Ok(psi)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

#[derive(Debug, Clone, Serialize)]
pub struct PathRow {
    pub dt: f64,
    pub discrepancy: f64,
    /// Discrepancy restricted to the space-like mask at the final times.
    pub masked_discrepancy: f64,
    /// Order between this row and the previous one.
    pub local_order: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathIndependenceReport {
    pub t: f64,
    pub rows: Vec<PathRow>,
    /// Fitted over rows with discrepancy above [`ORDER_FLOOR`].
    pub fitted_order: Option<f64>,
}

/// Compares `t_1` then `t_2` against `t_2` then `t_1`, both by `t`, for
/// each step size in the descending `dt_list`.
pub fn path_independence_experiment(
    sys: &MultiTimeSystem,
    psi0: &WaveFunction,
    t: f64,
    dt_list: &[f64],
    rep: &GammaRep,
) -> Result<PathIndependenceReport, SolverError> {
    if dt_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(SolverError::Path("dt list must be strictly descending".into()));
    }
    let mut prop = Propagator::new(sys, rep, psi0.grid)?;
    let mut rows: Vec<PathRow> = Vec::new();
    for &dt in dt_list {
        let mut a = psi0.clone();
        prop.evolve(&mut a, &PathSpec::sequential([1, 2], t, dt))?;
        let mut b = psi0.clone();
        prop.evolve(&mut b, &PathSpec::sequential([2, 1], t, dt))?;
        let mask = spacelike_mask(&psi0.grid, a.times[0], a.times[1]);
        let discrepancy = a.distance(&b, None);
        let local_order = rows.last().and_then(|p| {
            (p.discrepancy > ORDER_FLOOR && discrepancy > ORDER_FLOOR)
                .then(|| (p.discrepancy / discrepancy).ln() / (p.dt / dt).ln())
        });
        rows.push(PathRow {
            dt,
            discrepancy,
            masked_discrepancy: a.distance(&b, Some(&mask)),
            local_order,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.discrepancy > ORDER_FLOOR)
        .map(|r| (r.dt, r.discrepancy))
        .collect();
    Ok(PathIndependenceReport {
        t,
        fitted_order: fit_log_slope(&pts),
        rows,
    })
}

/// `‖ψ_loop − ψ_0‖` around the square loop of side δ, one step per leg
/// when δ fits within the grid spacing.
pub fn loop_holonomy(
    sys: &MultiTimeSystem,
    psi0: &WaveFunction,
    delta: f64,
    rep: &GammaRep,
) -> Result<f64, SolverError> {
    let mut prop = Propagator::new(sys, rep, psi0.grid)?;
    loop_deviation(&mut prop, psi0, delta)
}

fn loop_deviation(prop: &mut Propagator, psi0: &WaveFunction, delta: f64) -> Result<f64, SolverError> {
    if !(delta > 0.0) {
        return Err(SolverError::Path(format!("loop size must be positive, got {delta}")));
    }
    let steps = (delta / psi0.grid.dz()).ceil().max(1.0);
    let mut psi = psi0.clone();
    prop.evolve(&mut psi, &PathSpec::square_loop(delta, delta / steps))?;
    Ok(psi.distance(psi0, None))
}

#[derive(Debug, Clone, Serialize)]
pub struct HolonomyRow {
    pub delta: f64,
    pub deviation: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HolonomyReport {
    pub rows: Vec<HolonomyRow>,
    /// Slope of `ln(deviation/δ²)` against `ln δ`.
    pub ratio_slope: Option<f64>,
    /// Grid-evaluated `‖F ψ_0‖`.
    pub curvature_norm: f64,
}

pub fn holonomy_experiment(
    sys: &MultiTimeSystem,
    psi0: &WaveFunction,
    deltas: &[f64],
    rep: &GammaRep,
) -> Result<HolonomyReport, SolverError> {
    let mut prop = Propagator::new(sys, rep, psi0.grid)?;
    let mut rows = Vec::new();
    for &delta in deltas {
        let deviation = loop_deviation(&mut prop, psi0, delta)?;
        rows.push(HolonomyRow {
            delta,
            deviation,
            ratio: deviation / (delta * delta),
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.deviation > ORDER_FLOOR)
        .map(|r| (r.delta, r.ratio))
        .collect();
    Ok(HolonomyReport {
        ratio_slope: fit_log_slope(&pts),
        curvature_norm: prop.curvature_norm(psi0)?,
        rows,
    })
}
