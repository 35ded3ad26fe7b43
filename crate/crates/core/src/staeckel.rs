//! Liouville and Stäckel metrics.
//!
//! A Stäckel metric is given by an `n × n` matrix `M(q)` whose `i`-th row
//! depends on `qᵢ` alone. The metric is diagonal with
//! `gᵢᵢ = (−1)^{1+i} det M / det Mᵢ₁`, the first integrals are
//! `α = ½ M⁻¹ (p₁², …, pₙ²)`, and along a geodesic `pᵢ² = hᵢ(qᵢ, α)` with
//! `hᵢ = 2 Σⱼ uᵢⱼ(qᵢ) αⱼ`. Geodesic diagonals of coordinate boxes are found
//! by solving the separated equations for `α₂, …, αₙ` with `α₁ = ½`.

use std::fmt;
use std::sync::Arc;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_sqrt_ends, QuadOptions};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Finite-difference step for functions without an analytic derivative.
pub const FD_STEP: f64 = 1e-6;

/// A smooth function of one variable on an open interval.
#[derive(Clone)]
pub struct Fn1 {
    f: RealFn,
    df: Option<RealFn>,
    domain: (f64, f64),
}

impl fmt::Debug for Fn1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fn1")
            .field("domain", &self.domain)
            .field("analytic_derivative", &self.df.is_some())
            .finish()
    }
}

impl Fn1 {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            df: None,
            domain: (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c).with_derivative(|_| 0.0)
    }

    /// The identity `t ↦ t`.
    pub fn identity() -> Self {
        Self::new(|t| t).with_derivative(|_| 1.0)
    }

    pub fn with_derivative(mut self, df: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.df = Some(Arc::new(df));
        self
    }

    pub fn on(mut self, lo: f64, hi: f64) -> Self {
        self.domain = (lo, hi);
        self
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn contains(&self, t: f64) -> bool {
        t > self.domain.0 && t < self.domain.1
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    /// Analytic derivative when one was supplied, otherwise a central
    /// difference with step [`FD_STEP`].
    pub fn derivative(&self, t: f64) -> f64 {
        match &self.df {
            Some(df) => df(t),
            None => ((self.f)(t + FD_STEP) - (self.f)(t - FD_STEP)) / (2.0 * FD_STEP),
        }
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.df.is_some()
    }

    pub fn product(&self, other: &Fn1) -> Fn1 {
        let (a, b) = (self.clone(), other.clone());
        let (da, db) = (self.clone(), other.clone());
        Fn1 {
            f: Arc::new(move |t| a.eval(t) * b.eval(t)),
            df: Some(Arc::new(move |t| {
                da.derivative(t) * db.eval(t) + da.eval(t) * db.derivative(t)
            })),
            domain: intersect(self.domain, other.domain),
        }
    }

    pub fn scaled(&self, s: f64) -> Fn1 {
        Fn1::linear_combination(&[(s, self.clone())])
    }

    /// `Σ cₖ fₖ`.
    pub fn linear_combination(terms: &[(f64, Fn1)]) -> Fn1 {
        let domain = terms
            .iter()
            .fold((f64::NEG_INFINITY, f64::INFINITY), |d, (_, f)| {
                intersect(d, f.domain)
            });
        let t1: Vec<(f64, Fn1)> = terms.to_vec();
        let t2 = t1.clone();
        Fn1 {
            f: Arc::new(move |t| t1.iter().map(|(c, f)| c * f.eval(t)).sum()),
            df: Some(Arc::new(move |t| {
                t2.iter().map(|(c, f)| c * f.derivative(t)).sum()
            })),
            domain,
        }
    }
}

fn intersect(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    (a.0.max(b.0), a.1.min(b.1))
}

/// `ds² = (u₁ − u₂)(v₁ dq₁² + v₂ dq₂²)`.
#[derive(Debug, Clone)]
pub struct LiouvilleMetric {
    pub u1: Fn1,
    pub u2: Fn1,
    pub v1: Fn1,
    pub v2: Fn1,
}

impl LiouvilleMetric {
    pub fn new(u1: Fn1, u2: Fn1, v1: Fn1, v2: Fn1) -> Self {
        Self { u1, u2, v1, v2 }
    }

    /// `v₁ = v₂ = 1`.
    pub fn special(u1: Fn1, u2: Fn1) -> Self {
        Self::new(u1, u2, Fn1::constant(1.0), Fn1::constant(1.0))
    }

    /// Stäckel matrix `((u₁v₁, v₁), (−u₂v₂, −v₂))`.
    pub fn to_staeckel(&self) -> Result<StaeckelMetric> {
        let rows = vec![
            vec![self.u1.product(&self.v1), self.v1.clone()],
            vec![self.u2.product(&self.v2).scaled(-1.0), self.v2.scaled(-1.0)],
        ];
        let domain = vec![
            intersect(self.u1.domain, self.v1.domain),
            intersect(self.u2.domain, self.v2.domain),
        ];
        StaeckelMetric::new(rows, domain)
    }

    /// `H = ½ (p₁²/v₁ + p₂²/v₂) / (u₁ − u₂)`.
    pub fn hamiltonian(&self, q: [f64; 2], p: [f64; 2]) -> f64 {
        let d = self.u1.eval(q[0]) - self.u2.eval(q[1]);
        0.5 * (p[0] * p[0] / self.v1.eval(q[0]) + p[1] * p[1] / self.v2.eval(q[1])) / d
    }

    /// `f = ½ (u₂ p₁²/v₁ + u₁ p₂²/v₂) / (u₁ − u₂)`, a first integral of
    /// [`hamiltonian`](Self::hamiltonian). The Stäckel integral `α₂` of
    /// [`to_staeckel`](Self::to_staeckel) equals `−f`.
    pub fn first_integral(&self, q: [f64; 2], p: [f64; 2]) -> f64 {
        let (u1, u2) = (self.u1.eval(q[0]), self.u2.eval(q[1]));
        0.5 * (u2 * p[0] * p[0] / self.v1.eval(q[0]) + u1 * p[1] * p[1] / self.v2.eval(q[1]))
            / (u1 - u2)
    }
}

/// Coordinate parallelepiped `Π [loᵢ, hiᵢ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl CoordBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidParameters(
                "box needs lo <= hi in every coordinate".into(),
            ));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Vertex with `hi` in the coordinates whose bit is set in `mask`.
    pub fn corner(&self, mask: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                if mask >> i & 1 == 1 {
                    self.hi[i]
                } else {
                    self.lo[i]
                }
            })
            .collect()
    }
}

/// Separation data of a geodesic segment joining opposite box corners.
#[derive(Debug, Clone, PartialEq)]
pub struct Geodesic {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    /// Integrals with `α₁ = ½`.
    pub alpha: Vec<f64>,
    /// Direction of motion in each coordinate.
    pub signs: Vec<i8>,
    pub length: f64,
    /// Largest residual of the nonparametric equations.
    pub residual: f64,
}

impl Geodesic {
    /// Unit covector at the start, `pᵢ = sᵢ √hᵢ`.
    pub fn initial_momentum(&self, metric: &StaeckelMetric) -> Vec<f64> {
        (0..self.from.len())
            .map(|i| {
                f64::from(self.signs[i])
                    * metric
                        .separated(i, self.from[i], &self.alpha)
                        .max(0.0)
                        .sqrt()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StaeckelIvoryReport {
    pub diagonals: Vec<Geodesic>,
    pub spread: f64,
    /// Largest difference between the integrals of two diagonals.
    pub alpha_spread: f64,
}

/// A Stäckel matrix of one-variable rows and the open coordinate domain.
#[derive(Debug, Clone)]
pub struct StaeckelMetric {
    rows: Vec<Vec<Fn1>>,
    domain: Vec<(f64, f64)>,
}

fn quad_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-14,
        max_intervals: 600,
    }
}

impl StaeckelMetric {
    pub fn new(rows: Vec<Vec<Fn1>>, domain: Vec<(f64, f64)>) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) || domain.len() != n {
            return Err(Error::InvalidParameters(
                "Staeckel matrix must be square and match the domain".into(),
            ));
        }
        Ok(Self { rows, domain })
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn entry(&self, i: usize, j: usize) -> &Fn1 {
        &self.rows[i][j]
    }

    fn check(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::InvalidParameters(format!(
                "expected {} coordinates",
                self.dim()
            )));
        }
        for (i, (&x, &(lo, hi))) in q.iter().zip(&self.domain).enumerate() {
            if !(x > lo && x < hi) {
                return Err(Error::DomainError(format!(
                    "q[{i}] = {x} outside ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }

    pub fn row(&self, i: usize, qi: f64) -> Vec<f64> {
        self.rows[i].iter().map(|f| f.eval(qi)).collect()
    }

    fn row_derivative(&self, i: usize, qi: f64) -> Vec<f64> {
        self.rows[i].iter().map(|f| f.derivative(qi)).collect()
    }

    pub fn matrix(&self, q: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.rows[i][j].eval(q[i]))
    }

    /// `M` and `M⁻¹`.
    fn inverse(&self, q: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        self.check(q)?;
        let m = self.matrix(q);
        let det = m.determinant();
        if !(det.abs() >= 1e-14) {
            return Err(Error::SingularStaeckelMatrix(det.abs()));
        }
        let inv = m
            .clone()
            .try_inverse()
            .ok_or(Error::SingularStaeckelMatrix(det.abs()))?;
        Ok((m, inv))
    }

    /// `gᵢᵢ = (−1)^{1+i} det M / det Mᵢ₁`.
    pub fn metric_coeffs(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check(q)?;
        let m = self.matrix(q);
        let det = m.determinant();
        if !(det.abs() >= 1e-14) {
            return Err(Error::SingularStaeckelMatrix(det.abs()));
        }
        let n = self.dim();
        let g: Vec<f64> = (0..n)
            .map(|i| {
                let minor = if n == 1 {
                    1.0
                } else {
                    m.clone().remove_row(i).remove_column(0).determinant()
                };
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                sign * det / minor
            })
            .collect();
        if let Some(i) = g.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameters(format!(
                "g[{i}] = {} is not positive at {q:?}",
                g[i]
            )));
        }
        Ok(g)
    }

    /// `H = ½ Σ (−1)^{1+i} (det Mᵢ₁ / det M) pᵢ²`.
    pub fn hamiltonian(&self, q: &[f64], p: &[f64]) -> Result<f64> {
        let g = self.metric_coeffs(q)?;
        Ok(0.5 * p.iter().zip(&g).map(|(p, g)| p * p / g).sum::<f64>())
    }

    /// `α = ½ M⁻¹ (p₁², …, pₙ²)`.
    pub fn integrals_alpha(&self, q: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        let (_, inv) = self.inverse(q)?;
        let p2 = DVector::from_iterator(p.len(), p.iter().map(|x| 0.5 * x * x));
        Ok((inv * p2).iter().copied().collect())
    }

    /// `hᵢ(qᵢ, α) = 2 Σⱼ uᵢⱼ(qᵢ) αⱼ`.
    pub fn separated(&self, i: usize, qi: f64, alpha: &[f64]) -> f64 {
        2.0 * self.rows[i]
            .iter()
            .zip(alpha)
            .map(|(u, a)| u.eval(qi) * a)
            .sum::<f64>()
    }

    /// Hamilton's equations `(q̇, ṗ)`.
    pub fn vector_field(&self, q: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (_, inv) = self.inverse(q)?;
        let n = self.dim();
        let dq: Vec<f64> = (0..n).map(|i| inv[(0, i)] * p[i]).collect();
        let dp: Vec<f64> = (0..n)
            .map(|i| {
                let du = self.row_derivative(i, q[i]);
                // ∂(M⁻¹)₀ⱼ/∂qᵢ = −(M⁻¹)₀ᵢ Σₘ u′ᵢₘ (M⁻¹)ₘⱼ
                let s: f64 = (0..n)
                    .map(|j| {
                        let c: f64 = (0..n).map(|m| du[m] * inv[(m, j)]).sum();
                        c * p[j] * p[j]
                    })
                    .sum();
                0.5 * inv[(0, i)] * s
            })
            .collect();
        Ok((dq, dp))
    }

    fn rk4(&self, q: &[f64], p: &[f64], h: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let shift = |x: &[f64], d: &[f64], s: f64| -> Vec<f64> {
            (0..n).map(|i| x[i] + s * d[i]).collect()
        };
        let (k1q, k1p) = self.vector_field(q, p)?;
        let (k2q, k2p) = self.vector_field(&shift(q, &k1q, 0.5 * h), &shift(p, &k1p, 0.5 * h))?;
        let (k3q, k3p) = self.vector_field(&shift(q, &k2q, 0.5 * h), &shift(p, &k2p, 0.5 * h))?;
        let (k4q, k4p) = self.vector_field(&shift(q, &k3q, h), &shift(p, &k3p, h))?;
        let comb = |x: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| x[i] + h / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]))
                .collect()
        };
        Ok((
            comb(q, &k1q, &k2q, &k3q, &k4q),
            comb(p, &k1p, &k2p, &k3p, &k4p),
        ))
    }

    /// Integrates the geodesic flow for time `t` with classical Runge–Kutta
    /// steps of at most `dt`.
    pub fn flow(&self, q: &[f64], p: &[f64], t: f64, dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let steps = (t.abs() / dt).ceil().max(1.0) as usize;
        let h = t / steps as f64;
        let (mut q, mut p) = (q.to_vec(), p.to_vec());
        for _ in 0..steps {
            (q, p) = self.rk4(&q, &p, h)?;
        }
        Ok((q, p))
    }

    /// `Σᵢ ∫ uᵢₖ dqᵢ / √hᵢ` over the legs, for every column `k`.
    fn leg_integrals(&self, lo: &[f64], hi: &[f64], alpha: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for i in 0..n {
            if lo[i] == hi[i] {
                continue;
            }
            for (k, o) in out.iter_mut().enumerate() {
                let f = |x: f64| self.rows[i][k].eval(x) / self.separated(i, x, alpha).sqrt();
                let r = integrate_sqrt_ends(f, lo[i], hi[i], quad_opts())?;
                if r.intervals >= quad_opts().max_intervals
                    && r.error > 1e-11 * r.value.abs().max(1.0)
                {
                    return Err(Error::SolverDiverged(format!(
                        "leg integral on q[{i}] did not resolve"
                    )));
                }
                *o += r.value;
            }
        }
        Ok(out)
    }

    fn feasible(&self, lo: &[f64], hi: &[f64], alpha: &[f64]) -> bool {
        (0..self.dim()).all(|i| {
            if lo[i] == hi[i] {
                return true;
            }
            (1..64).all(|s| {
                let x = lo[i] + (hi[i] - lo[i]) * s as f64 / 64.0;
                self.separated(i, x, alpha) > 0.0
            })
        })
    }

    /// Chebyshev centre of the sampled region `{α : hᵢ > 0 on every leg}`.
    fn feasible_start(&self, lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
        const R: f64 = 1e6;
        let n = self.dim();
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = (1..n).map(|_| lp.add_var(0.0, (-R, R))).collect();
        let t = lp.add_var(1.0, (-R, R));
        for i in 0..n {
            if lo[i] == hi[i] {
                continue;
            }
            for s in 0..=32 {
                let x = lo[i] + (hi[i] - lo[i]) * s as f64 / 32.0;
                let u = self.row(i, x);
                let w = 2.0 * u[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                if !(w > 0.0 && w.is_finite()) {
                    continue;
                }
                let mut expr: Vec<_> = vars
                    .iter()
                    .zip(&u[1..])
                    .map(|(&v, &c)| (v, 2.0 * c / w))
                    .collect();
                expr.push((t, -1.0));
                lp.add_constraint(&expr[..], ComparisonOp::Ge, -u[0] / w);
            }
        }
        let sol = lp
            .solve()
            .map_err(|e| Error::SolverDiverged(format!("feasibility problem: {e}")))?;
        if !(sol[t] > 0.0) {
            return Err(Error::NoMonotoneDiagonal(
                "no integrals keep every h positive on the box".into(),
            ));
        }
        let mut alpha = vec![0.5];
        alpha.extend(vars.iter().map(|&v| sol[v]));
        Ok(alpha)
    }

    /// Geodesic joining two opposite corners of a coordinate box, monotone in
    /// every coordinate.
    pub fn geodesic_between(&self, c0: &[f64], c1: &[f64]) -> Result<Geodesic> {
        let n = self.dim();
        self.check(c0)?;
        self.check(c1)?;
        let signs: Vec<i8> = (0..n)
            .map(|i| if c1[i] >= c0[i] { 1 } else { -1 })
            .collect();
        if c0 == c1 {
            return Ok(Geodesic {
                from: c0.to_vec(),
                to: c1.to_vec(),
                alpha: vec![0.0; n],
                signs,
                length: 0.0,
                residual: 0.0,
            });
        }
        if let Some(i) = (0..n).find(|&i| c0[i] == c1[i]) {
            return Err(Error::NoMonotoneDiagonal(format!(
                "coordinate {i} does not change"
            )));
        }
        let lo: Vec<f64> = (0..n).map(|i| c0[i].min(c1[i])).collect();
        let hi: Vec<f64> = (0..n).map(|i| c0[i].max(c1[i])).collect();
        if n == 1 {
            let length = integrate(
                |x| self.metric_coeffs(&[x]).map_or(f64::NAN, |g| g[0].sqrt()),
                lo[0],
                hi[0],
                quad_opts(),
            )?
            .value;
            return Ok(Geodesic {
                from: c0.to_vec(),
                to: c1.to_vec(),
                alpha: vec![0.5],
                signs,
                length,
                residual: 0.0,
            });
        }
        let alpha = self.solve_alpha(&lo, &hi)?;
        let ints = self.leg_integrals(&lo, &hi, &alpha)?;
        let residual = ints[1..].iter().fold(0.0f64, |m, r| m.max(r.abs()));
        for i in 0..n {
            for end in [lo[i], hi[i]] {
                let h = self.separated(i, end, &alpha);
                let scale = self
                    .row(i, end)
                    .iter()
                    .zip(&alpha)
                    .map(|(u, a)| (u * a).abs())
                    .sum::<f64>();
                let dh = 2.0
                    * self
                        .row_derivative(i, end)
                        .iter()
                        .zip(&alpha)
                        .map(|(u, a)| u * a)
                        .sum::<f64>();
                if h.abs() <= 1e-12 * scale && dh.abs() < 1e-10 {
                    return Err(Error::AsymptoticApproach(i));
                }
            }
        }
        Ok(Geodesic {
            from: c0.to_vec(),
            to: c1.to_vec(),
            alpha,
            signs,
            length: ints[0],
            residual,
        })
    }

    /// Damped Newton on `α₂, …, αₙ` keeping every `hᵢ` positive on its leg.
    fn solve_alpha(&self, lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        let residual = |a: &[f64]| -> Option<Vec<f64>> {
            if !self.feasible(lo, hi, a) {
                return None;
            }
            let r = self.leg_integrals(lo, hi, a).ok()?;
            r.iter().all(|x| x.is_finite()).then(|| r[1..].to_vec())
        };
        let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut alpha = self.feasible_start(lo, hi)?;
        let mut r = residual(&alpha)
            .ok_or_else(|| Error::SolverDiverged("start point is not admissible".into()))?;
        for _ in 0..100 {
            let scale = 1.0 + alpha[1..].iter().fold(0.0f64, |m, a| m.max(a.abs()));
            if norm(&r) < 1e-13 * scale {
                return Ok(alpha);
            }
            let mut jac = DMatrix::<f64>::zeros(n - 1, n - 1);
            for m in 1..n {
                let step = 1e-7 * (1.0 + alpha[m].abs());
                let mut fwd = alpha.clone();
                fwd[m] += step;
                let col = match residual(&fwd) {
                    Some(rf) => rf
                        .iter()
                        .zip(&r)
                        .map(|(a, b)| (a - b) / step)
                        .collect::<Vec<_>>(),
                    None => {
                        let mut bwd = alpha.clone();
                        bwd[m] -= step;
                        let rb = residual(&bwd).ok_or_else(|| {
                            Error::NoMonotoneDiagonal(
                                "separation constants approach the edge of the admissible set"
                                    .into(),
                            )
                        })?;
                        r.iter().zip(&rb).map(|(a, b)| (a - b) / step).collect()
                    }
                };
                for (k, v) in col.into_iter().enumerate() {
                    jac[(k, m - 1)] = v;
                }
            }
            let rhs = DVector::from_iterator(n - 1, r.iter().map(|x| -x));
            let delta = jac
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::SolverDiverged("singular Jacobian".into()))?;
            let mut s = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = std::iter::once(0.5)
                    .chain((1..n).map(|m| alpha[m] + s * delta[m - 1]))
                    .collect();
                if let Some(rt) = residual(&trial) {
                    if norm(&rt) < (1.0 - 1e-4 * s) * norm(&r) {
                        alpha = trial;
                        r = rt;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if accepted && s < 1e-6 {
                break;
            }
            if !accepted {
                if norm(&r) < 1e-10 * scale {
                    return Ok(alpha);
                }
                return Err(Error::NoMonotoneDiagonal(format!(
                    "separation equations stall at |residual| = {:e}",
                    norm(&r)
                )));
            }
        }
        if norm(&r) < 1e-10 * (1.0 + alpha[1..].iter().fold(0.0f64, |m, a| m.max(a.abs()))) {
            return Ok(alpha);
        }
        let edge = (0..n)
            .filter(|&i| lo[i] != hi[i])
            .flat_map(|i| (0..=64).map(move |s| (i, lo[i] + (hi[i] - lo[i]) * s as f64 / 64.0)))
            .map(|(i, x)| {
                let scale = self
                    .row(i, x)
                    .iter()
                    .zip(&alpha)
                    .map(|(u, a)| (u * a).abs())
                    .sum::<f64>();
                self.separated(i, x, &alpha) / scale
            })
            .fold(f64::INFINITY, f64::min);
        if edge < 1e-3 {
            return Err(Error::NoMonotoneDiagonal(format!(
                "separation constants stall on the edge of the admissible set at |residual| = {:e}",
                norm(&r)
            )));
        }
        Err(Error::SolverDiverged(
            "separation constants did not converge".into(),
        ))
    }

    /// All `2ⁿ⁻¹` great diagonals of the box, each solved independently.
    pub fn ivory_check(&self, bx: &CoordBox) -> Result<StaeckelIvoryReport> {
        let n = self.dim();
        if bx.dim() != n {
            return Err(Error::InvalidParameters(
                "box dimension does not match the metric".into(),
            ));
        }
        let full = (1usize << n) - 1;
        let diagonals = (0..1usize << (n - 1))
            .map(|mask| self.geodesic_between(&bx.corner(mask), &bx.corner(full ^ mask)))
            .collect::<Result<Vec<_>>>()?;
        let lengths: Vec<f64> = diagonals.iter().map(|g| g.length).collect();
        let spread = crate::quadrics::spread(&lengths);
        let alpha_spread = (0..n)
            .map(|k| {
                crate::quadrics::spread(&diagonals.iter().map(|g| g.alpha[k]).collect::<Vec<_>>())
            })
            .fold(0.0, f64::max);
        Ok(StaeckelIvoryReport {
            diagonals,
            spread,
            alpha_spread,
        })
    }

    /// Stäckel metric induced on the hypersurface `qᵢ = c`.
    ///
    /// Column operations that fix the first row of `M⁻¹` turn the frozen
    /// row into a unit vector `eₖ` with `k ≠ 1`; deleting row `i` and column
    /// `k` leaves a Stäckel matrix in the remaining coordinates.
    pub fn induced_metric_on_face(&self, i: usize, c: f64) -> Result<StaeckelMetric> {
        let n = self.dim();
        if n < 2 || i >= n {
            return Err(Error::InvalidParameters(format!(
                "no face {i} in dimension {n}"
            )));
        }
        let (lo, hi) = self.domain[i];
        if !(c > lo && c < hi) {
            return Err(Error::InvalidParameters(format!(
                "q[{i}] = {c} outside ({lo}, {hi})"
            )));
        }
        let w = self.row(i, c);
        let k = (1..n)
            .max_by(|&a, &b| w[a].abs().total_cmp(&w[b].abs()))
            .expect("n >= 2");
        if w[k] == 0.0 {
            return Err(Error::SingularStaeckelMatrix(0.0));
        }
        let mut rows = Vec::with_capacity(n - 1);
        let mut domain = Vec::with_capacity(n - 1);
        for j in (0..n).filter(|&j| j != i) {
            let u = &self.rows[j];
            let uk = u[k].scaled(1.0 / w[k]);
            let mut row = vec![Fn1::linear_combination(&[
                (1.0, u[0].clone()),
                (-w[0], uk.clone()),
            ])];
            for m in (1..n).filter(|&m| m != k) {
                row.push(Fn1::linear_combination(&[
                    (1.0, u[m].clone()),
                    (-w[m], uk.clone()),
                ]));
            }
            rows.push(row);
            domain.push(self.domain[j]);
        }
        StaeckelMetric::new(rows, domain)
    }
}

/// `{f, g} = Σ ∂f/∂qᵢ ∂g/∂pᵢ − ∂f/∂pᵢ ∂g/∂qᵢ` by central differences.
pub fn poisson_bracket<F, G>(f: F, g: G, q: &[f64], p: &[f64], step: f64) -> f64
where
    F: Fn(&[f64], &[f64]) -> f64,
    G: Fn(&[f64], &[f64]) -> f64,
{
    let n = q.len();
    let partial = |h: &dyn Fn(&[f64], &[f64]) -> f64, i: usize, wrt_q: bool| {
        let (mut qa, mut pa) = (q.to_vec(), p.to_vec());
        let (mut qb, mut pb) = (q.to_vec(), p.to_vec());
        if wrt_q {
            qa[i] += step;
            qb[i] -= step;
        } else {
            pa[i] += step;
            pb[i] -= step;
        }
        (h(&qa, &pa) - h(&qb, &pb)) / (2.0 * step)
    };
    (0..n)
        .map(|i| {
            partial(&f, i, true) * partial(&g, i, false)
                - partial(&f, i, false) * partial(&g, i, true)
        })
        .sum()
}

fn rational(
    num: impl Fn(f64) -> f64 + Send + Sync + 'static,
    dnum: impl Fn(f64) -> f64 + Send + Sync + 'static,
    h: [f64; 3],
    lo: f64,
    hi: f64,
) -> Fn1 {
    // num(q) / (4 (h₀ − q)(h₁ − q)(h₂ − q)), with h₂ = NaN meaning a quadratic
    let den = move |q: f64| {
        let base = 4.0 * (h[0] - q) * (h[1] - q);
        if h[2].is_nan() {
            base
        } else {
            base * (h[2] - q)
        }
    };
    let dden = move |q: f64| {
        let (a, b) = (h[0] - q, h[1] - q);
        if h[2].is_nan() {
            -4.0 * (a + b)
        } else {
            let c = h[2] - q;
            -4.0 * (b * c + a * c + a * b)
        }
    };
    let num = Arc::new(num);
    let n2 = num.clone();
    Fn1::new(move |q| num(q) / den(q))
        .with_derivative(move |q| {
            let d = den(q);
            (dnum(q) * d - n2(q) * dden(q)) / (d * d)
        })
        .on(lo, hi)
}

fn ordered(p: &[f64]) -> bool {
    p.windows(2).all(|w| w[0] > w[1])
}

/// Elliptic coordinates `(λ, μ)`, `a > λ > b > μ`, of the plane.
pub fn elliptic_r2(a: f64, b: f64) -> Result<StaeckelMetric> {
    if !(a > b && b.is_finite()) {
        return Err(Error::InvalidParameters(format!(
            "elliptic_R2 needs a > b, got ({a}, {b})"
        )));
    }
    let nan = f64::NAN;
    let v1 = rational(|_| -1.0, |_| 0.0, [a, b, nan], b, a);
    let v2 = rational(|_| 1.0, |_| 0.0, [a, b, nan], f64::NEG_INFINITY, b);
    LiouvilleMetric::new(
        Fn1::identity().on(b, a),
        Fn1::identity().on(f64::NEG_INFINITY, b),
        v1,
        v2,
    )
    .to_staeckel()
}

/// Ellipsoidal coordinates `(λ, μ, ν)`, `a > λ > b > μ > c > ν`, of space.
pub fn ellipsoidal_r3(a: f64, b: f64, c: f64) -> Result<StaeckelMetric> {
    if !ordered(&[a, b, c]) {
        return Err(Error::InvalidParameters(format!(
            "ellipsoidal_R3 needs a > b > c, got ({a}, {b}, {c})"
        )));
    }
    let domain = [(b, a), (c, b), (f64::NEG_INFINITY, c)];
    let rows = domain
        .iter()
        .map(|&(lo, hi)| {
            vec![
                rational(|q| q * q, |q| 2.0 * q, [a, b, c], lo, hi),
                rational(|q| q, |_| 1.0, [a, b, c], lo, hi),
                rational(|_| 1.0, |_| 0.0, [a, b, c], lo, hi),
            ]
        })
        .collect();
    StaeckelMetric::new(rows, domain.to_vec())
}

/// Sphero-conical coordinates `(r, λ, μ)`, `a > λ > b > μ > c`, of space.
pub fn spheroconical_r3(a: f64, b: f64, c: f64) -> Result<StaeckelMetric> {
    if !ordered(&[a, b, c]) {
        return Err(Error::InvalidParameters(format!(
            "spheroconical_R3 needs a > b > c, got ({a}, {b}, {c})"
        )));
    }
    let r_row = vec![
        Fn1::constant(1.0).on(0.0, f64::INFINITY),
        Fn1::new(|r| -1.0 / (r * r))
            .with_derivative(|r| 2.0 / (r * r * r))
            .on(0.0, f64::INFINITY),
        Fn1::constant(0.0).on(0.0, f64::INFINITY),
    ];
    let mut rows = vec![r_row];
    let domain = vec![(0.0, f64::INFINITY), (b, a), (c, b)];
    for &(lo, hi) in &domain[1..] {
        rows.push(vec![
            Fn1::constant(0.0).on(lo, hi),
            rational(|q| q, |_| 1.0, [a, b, c], lo, hi),
            rational(|_| 1.0, |_| 0.0, [a, b, c], lo, hi),
        ]);
    }
    StaeckelMetric::new(rows, domain)
}

/// Intrinsic metric of the ellipsoid `x²/a + y²/b + z²/c = 1` in `(λ, μ)`,
/// `a > λ > b > μ > c > 0`.
pub fn ellipsoid_intrinsic(a: f64, b: f64, c: f64) -> Result<StaeckelMetric> {
    if !(ordered(&[a, b, c]) && c > 0.0) {
        return Err(Error::InvalidParameters(format!(
            "ellipsoid_intrinsic needs a > b > c > 0, got ({a}, {b}, {c})"
        )));
    }
    let v1 = rational(|q| q, |_| 1.0, [a, b, c], b, a);
    let v2 = rational(|q| -q, |_| -1.0, [a, b, c], c, b);
    LiouvilleMetric::new(Fn1::identity().on(b, a), Fn1::identity().on(c, b), v1, v2).to_staeckel()
}

/// Unit sphere in conical coordinates `(λ, μ)`, `a > λ > b > μ > c`.
pub fn sphere_conical(a: f64, b: f64, c: f64) -> Result<StaeckelMetric> {
    if !ordered(&[a, b, c]) {
        return Err(Error::InvalidParameters(format!(
            "sphere_conical needs a > b > c, got ({a}, {b}, {c})"
        )));
    }
    let v1 = rational(|_| 1.0, |_| 0.0, [a, b, c], b, a);
    let v2 = rational(|_| -1.0, |_| 0.0, [a, b, c], c, b);
    LiouvilleMetric::new(Fn1::identity().on(b, a), Fn1::identity().on(c, b), v1, v2).to_staeckel()
}

/// Builtin metric by name: `elliptic_R2`, `ellipsoidal_R3`,
/// `spheroconical_R3`, `ellipsoid_intrinsic`, `sphere_conical`.
pub fn builtin_metric(name: &str, params: &[f64]) -> Result<StaeckelMetric> {
    let need = |k: usize| {
        if params.len() == k {
            Ok(())
        } else {
            Err(Error::InvalidParameters(format!(
                "{name} takes {k} parameters, got {}",
                params.len()
            )))
        }
    };
    match name {
        "elliptic_R2" => need(2).and_then(|_| elliptic_r2(params[0], params[1])),
        "ellipsoidal_R3" => need(3).and_then(|_| ellipsoidal_r3(params[0], params[1], params[2])),
        "spheroconical_R3" => {
            need(3).and_then(|_| spheroconical_r3(params[0], params[1], params[2]))
        }
        "ellipsoid_intrinsic" => {
            need(3).and_then(|_| ellipsoid_intrinsic(params[0], params[1], params[2]))
        }
        "sphere_conical" => need(3).and_then(|_| sphere_conical(params[0], params[1], params[2])),
        _ => Err(Error::InvalidParameters(format!("unknown metric {name:?}"))),
    }
}

/// When a billiard run stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stop {
    /// After this many wall reflections (a corner counts once per wall).
    Bounces(usize),
    Time(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilliardOptions {
    pub dt: f64,
    /// Wall hits closer than this in time are treated as one corner hit.
    pub corner_tol: f64,
}

impl Default for BilliardOptions {
    fn default() -> Self {
        Self {
            dt: 2e-3,
            corner_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounce {
    pub time: f64,
    pub q: Vec<f64>,
    /// `(coordinate, upper wall)` for each wall hit.
    pub walls: Vec<(usize, bool)>,
}

impl Bounce {
    pub fn is_corner(&self) -> bool {
        self.walls.len() > 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilliardOrbit {
    pub bounces: Vec<Bounce>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub time: f64,
    pub alpha0: Vec<f64>,
    /// Largest deviation of `α` from `alpha0` at any bounce or at the end.
    pub alpha_drift: f64,
    pub corner_hits: usize,
}

impl BilliardOrbit {
    pub fn reflections(&self) -> usize {
        self.bounces.iter().map(|b| b.walls.len()).sum()
    }
}

/// Billiard inside the coordinate box `walls` (infinite bounds are open
/// sides). A wall `qᵢ = const` flips the sign of `pᵢ`; simultaneous hits
/// flip every sign involved.
pub fn staeckel_billiard_trajectory(
    metric: &StaeckelMetric,
    walls: &CoordBox,
    q0: &[f64],
    p0: &[f64],
    stop: Stop,
    opts: BilliardOptions,
) -> Result<BilliardOrbit> {
    let n = metric.dim();
    if walls.dim() != n || q0.len() != n || p0.len() != n {
        return Err(Error::InvalidParameters("dimension mismatch".into()));
    }
    let h0 = metric.hamiltonian(q0, p0)?;
    if (h0 - 0.5).abs() > 1e-9 {
        return Err(Error::InvalidParameters(format!(
            "initial state must have H = 1/2, got {h0}"
        )));
    }
    let alpha0 = metric.integrals_alpha(q0, p0)?;
    let drift = |q: &[f64], p: &[f64]| -> Result<f64> {
        let a = metric.integrals_alpha(q, p)?;
        Ok(a.iter()
            .zip(&alpha0)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs())))
    };
    let outside = |q: &[f64], i: usize| -> Option<bool> {
        if q[i] < walls.lo[i] {
            Some(false)
        } else if q[i] > walls.hi[i] {
            Some(true)
        } else {
            None
        }
    };
    let (mut q, mut p) = (q0.to_vec(), p0.to_vec());
    let mut time = 0.0;
    let mut bounces = Vec::new();
    let mut alpha_drift = 0.0f64;
    let mut reflections = 0;
    loop {
        let mut h = opts.dt;
        if let Stop::Time(t_end) = stop {
            if time >= t_end {
                break;
            }
            h = h.min(t_end - time);
        }
        let (q1, p1) = metric.rk4(&q, &p, h)?;
        let crossing: Vec<usize> = (0..n).filter(|&i| outside(&q1, i).is_some()).collect();
        if crossing.is_empty() {
            (q, p) = (q1, p1);
            time += h;
            continue;
        }
        // Hit time of each crossing coordinate, by bisection on the step size.
        let mut hits = Vec::new();
        for &i in &crossing {
            let upper = outside(&q1, i) == Some(true);
            let wall = if upper { walls.hi[i] } else { walls.lo[i] };
            let (mut a, mut b) = (0.0, h);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let (qm, _) = metric.rk4(&q, &p, mid)?;
                let past = if upper { qm[i] > wall } else { qm[i] < wall };
                if past {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            hits.push((b, i, upper, wall));
        }
        let tau = hits.iter().map(|h| h.0).fold(f64::INFINITY, f64::min);
        let (qh, ph) = metric.rk4(&q, &p, tau)?;
        (q, p) = (qh, ph);
        time += tau;
        let mut hit_walls = Vec::new();
        for &(t, i, upper, wall) in &hits {
            if t - tau <= opts.corner_tol {
                q[i] = wall;
                p[i] = -p[i];
                hit_walls.push((i, upper));
            }
        }
        reflections += hit_walls.len();
        alpha_drift = alpha_drift.max(drift(&q, &p)?);
        bounces.push(Bounce {
            time,
            q: q.clone(),
            walls: hit_walls,
        });
        if let Stop::Bounces(k) = stop {
            if reflections >= k {
                break;
            }
        }
    }
    alpha_drift = alpha_drift.max(drift(&q, &p)?);
    let corner_hits = bounces.iter().filter(|b| b.is_corner()).count();
    Ok(BilliardOrbit {
        bounces,
        q,
        p,
        time,
        alpha0,
        alpha_drift,
        corner_hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn liouville_unit_v() {
        let m = LiouvilleMetric::special(Fn1::new(|x| 3.0 + x * x), Fn1::new(|y: f64| y.sin()))
            .to_staeckel()
            .unwrap();
        let g = m.metric_coeffs(&[0.5, 0.3]).unwrap();
        let d = 3.25 - 0.3f64.sin();
        assert!((g[0] - d).abs() < 1e-14 && (g[1] - d).abs() < 1e-14);
    }

    #[test]
    fn fn1_derivatives() {
        let f = Fn1::new(|x: f64| x.powi(3));
        assert!((f.derivative(2.0) - 12.0).abs() < 1e-8);
        let g = f.product(&Fn1::identity());
        assert!((g.derivative(2.0) - 32.0).abs() < 1e-7);
        assert!(Fn1::identity().scaled(3.0).has_analytic_derivative());
    }

    #[test]
    fn corners_by_mask() {
        let b = CoordBox::new(vec![0.0, 1.0, 2.0], vec![5.0, 6.0, 7.0]).unwrap();
        assert_eq!(b.corner(0b101), vec![5.0, 1.0, 7.0]);
        assert!(CoordBox::new(vec![1.0], vec![0.0]).is_err());
    }
}
