//! Confocal families of quadrics in Euclidean space and of quadratic cones
//! cut with the sphere or the hyperboloid.
//!
//! Points of `Eⁿ` are `n`-vectors. Points of `Sⁿ` and `Hⁿ` are `(n+1)`-vectors
//! `(x₀, x₁, …, xₙ)` with `x₀` first; the hyperboloid is the upper sheet of
//! `−x₀² + Σ xᵢ² = −1`.
//!
//! The confocal functions are
//!
//! ```text
//! Euclidean   F(λ) = Σ xᵢ²/(aᵢ − λ) − 1
//! spherical   G(λ) = Σ xᵢ²/(aᵢ − λ) − x₀²/(b + λ),   −b < λ < a₁
//! hyperbolic  G(λ) = Σ xᵢ²/(aᵢ − λ) − x₀²/(b − λ),   aᵢ < b
//! ```
//!
//! Elliptic coordinates are stored largest first, `λ₁ > a₂ > λ₂ > ⋯`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::poly::{bisect, Poly};

/// The three model geometries. The payload is the intrinsic dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    Euclidean(usize),
    Spherical(usize),
    Hyperbolic(usize),
}

impl Geometry {
    pub fn dim(&self) -> usize {
        match *self {
            Geometry::Euclidean(n) | Geometry::Spherical(n) | Geometry::Hyperbolic(n) => n,
        }
    }

    /// Length of coordinate vectors.
    pub fn ambient_dim(&self) -> usize {
        match *self {
            Geometry::Euclidean(n) => n,
            Geometry::Spherical(n) | Geometry::Hyperbolic(n) => n + 1,
        }
    }

    pub fn is_curved(&self) -> bool {
        !matches!(self, Geometry::Euclidean(_))
    }

    /// Checks that `x` lies on the model set.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(Error::NotOnModel(format!(
                "expected {} coordinates, got {}",
                self.ambient_dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotOnModel("non-finite coordinate".into()));
        }
        let sq: f64 = x.iter().map(|v| v * v).sum();
        let tol = 1e-12 * sq.max(1.0);
        match self {
            Geometry::Euclidean(_) => Ok(()),
            Geometry::Spherical(_) => {
                if (sq - 1.0).abs() > tol {
                    return Err(Error::NotOnModel(format!("|x|² = {sq}")));
                }
                Ok(())
            }
            Geometry::Hyperbolic(_) => {
                let m = minkowski(x, x);
                if (m + 1.0).abs() > tol || x[0] <= 0.0 {
                    return Err(Error::NotOnModel(format!("<x,x> = {m}, x0 = {}", x[0])));
                }
                Ok(())
            }
        }
    }

    /// Geodesic distance between two points of the model.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        Ok(match self {
            Geometry::Euclidean(_) => norm(&diff),
            Geometry::Spherical(_) => 2.0 * (0.5 * norm(&diff)).min(1.0).asin(),
            Geometry::Hyperbolic(_) => {
                2.0 * (0.5 * minkowski(&diff, &diff).max(0.0).sqrt()).asinh()
            }
        })
    }
}

/// Free-function form of [`Geometry::distance`].
pub fn geodesic_distance(geometry: Geometry, x: &[f64], y: &[f64]) -> Result<f64> {
    geometry.distance(x, y)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `−x₀y₀ + Σ xᵢyᵢ`
pub fn minkowski(x: &[f64], y: &[f64]) -> f64 {
    -x[0] * y[0] + x[1..].iter().zip(&y[1..]).map(|(a, b)| a * b).sum::<f64>()
}

/// One coordinate's term `σ/(α − βλ)` in the confocal function.
#[derive(Debug, Clone, Copy)]
struct Term {
    sigma: f64,
    alpha: f64,
    beta: f64,
}

impl Term {
    fn denom(&self, lambda: f64) -> f64 {
        self.alpha - self.beta * lambda
    }
    /// λ at which the term has its pole, if any.
    fn pole(&self) -> Option<f64> {
        (self.beta != 0.0).then(|| self.alpha / self.beta)
    }
}

/// A confocal family in one of the three geometries.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfocalFamily {
    geometry: Geometry,
    a: Vec<f64>,
    b: f64,
}

impl ConfocalFamily {
    /// Confocal quadrics `Σ xᵢ²/(aᵢ − λ) = 1` in `Eⁿ`.
    pub fn euclidean(a: &[f64]) -> Result<Self> {
        check_decreasing(a)?;
        if a.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidParameters("semiaxes must be positive".into()));
        }
        Ok(Self {
            geometry: Geometry::Euclidean(a.len()),
            a: a.to_vec(),
            b: 0.0,
        })
    }

    /// Confocal cones `Σ xᵢ²/(aᵢ − λ) = x₀²/(b + λ)` cut with `Sⁿ`.
    ///
    /// `b` may be negative as long as `−b < aₙ`.
    pub fn spherical(a: &[f64], b: f64) -> Result<Self> {
        check_decreasing(a)?;
        if -b >= *a.last().unwrap() {
            return Err(Error::InvalidParameters(format!(
                "need -b < a_n, got b = {b}"
            )));
        }
        Ok(Self {
            geometry: Geometry::Spherical(a.len()),
            a: a.to_vec(),
            b,
        })
    }

    /// Confocal cones `Σ xᵢ²/(aᵢ − λ) = x₀²/(b − λ)` cut with `Hⁿ`, `aᵢ < b`.
    pub fn hyperbolic(a: &[f64], b: f64) -> Result<Self> {
        check_decreasing(a)?;
        if a[0] >= b {
            return Err(Error::InvalidParameters(format!(
                "light-cone condition needs a_i < b, got a_1 = {}, b = {b}",
                a[0]
            )));
        }
        Ok(Self {
            geometry: Geometry::Hyperbolic(a.len()),
            a: a.to_vec(),
            b,
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// The cone constant `b` (zero for Euclidean families).
    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Terms in ambient coordinate order. Euclidean families get one extra
    /// term for the homogenizing coordinate.
    fn terms(&self) -> Vec<Term> {
        let ai = self.a.iter().map(|&a| Term {
            sigma: 1.0,
            alpha: a,
            beta: 1.0,
        });
        match self.geometry {
            Geometry::Euclidean(_) => ai
                .chain(std::iter::once(Term {
                    sigma: -1.0,
                    alpha: 1.0,
                    beta: 0.0,
                }))
                .collect(),
            Geometry::Spherical(_) => std::iter::once(Term {
                sigma: -1.0,
                alpha: self.b,
                beta: -1.0,
            })
            .chain(ai)
            .collect(),
            Geometry::Hyperbolic(_) => std::iter::once(Term {
                sigma: -1.0,
                alpha: self.b,
                beta: 1.0,
            })
            .chain(ai)
            .collect(),
        }
    }

    /// Homogeneous coordinates matching [`Self::terms`].
    fn homogenize(&self, x: &[f64], affine: f64) -> Vec<f64> {
        let mut h = x.to_vec();
        if !self.geometry.is_curved() {
            h.push(affine);
        }
        h
    }

    /// Admissible interval of each elliptic coordinate, largest first.
    pub fn class_intervals(&self) -> Vec<(f64, f64)> {
        let n = self.a.len();
        let mut out: Vec<(f64, f64)> = (0..n - 1).map(|i| (self.a[i + 1], self.a[i])).collect();
        let low = match self.geometry {
            Geometry::Spherical(_) => -self.b,
            _ => f64::NEG_INFINITY,
        };
        out.push((low, self.a[n - 1]));
        out
    }

    /// Index of the class interval containing `λ`.
    pub fn class_of(&self, lambda: f64) -> Option<usize> {
        self.class_intervals()
            .iter()
            .position(|&(lo, hi)| lambda > lo && lambda < hi)
    }

    /// The member of parameter `λ`.
    pub fn member(&self, lambda: f64) -> Result<QuadricMember> {
        let class_index = self.class_of(lambda).ok_or_else(|| {
            Error::InvalidParameters(format!("λ = {lambda} is not in any class interval"))
        })?;
        Ok(QuadricMember {
            lambda,
            class_index,
        })
    }

    /// Value of the confocal function at `λ`.
    pub fn confocal_function(&self, lambda: f64, x: &[f64]) -> f64 {
        let h = self.homogenize(x, 1.0);
        self.terms()
            .iter()
            .zip(&h)
            .map(|(t, v)| t.sigma * v * v / t.denom(lambda))
            .sum()
    }

    /// Gradient of the confocal function `x ↦ F(λ, x)` (ambient coordinates).
    pub fn gradient(&self, lambda: f64, x: &[f64]) -> Vec<f64> {
        let terms = self.terms();
        x.iter()
            .zip(&terms)
            .map(|(v, t)| 2.0 * t.sigma * v / t.denom(lambda))
            .collect()
    }

    /// Elliptic coordinates of `point`.
    ///
    /// A vanishing coordinate `xⱼ` makes `λ = aⱼ` (or the cone pole) a root;
    /// that root is returned with its `degenerate` flag set.
    pub fn confocal_parameters(&self, point: &[f64]) -> Result<EllipticCoords> {
        self.geometry.check_point(point)?;
        let terms = self.terms();
        let h = self.homogenize(point, 1.0);
        // Poles sorted descending, tagged active when the coordinate is nonzero.
        let mut poles: Vec<(f64, bool)> = terms
            .iter()
            .zip(&h)
            .filter_map(|(t, v)| t.pole().map(|p| (p, *v != 0.0)))
            .collect();
        poles.sort_by(|x, y| y.0.total_cmp(&x.0));
        if !poles.iter().any(|p| p.1) {
            return Err(Error::DegeneratePoint("all coordinates vanish".into()));
        }
        let f = |l: f64| self.confocal_function(l, point);
        let mut roots: Vec<(f64, bool)> =
            poles.iter().filter(|p| !p.1).map(|p| (p.0, true)).collect();
        let active: Vec<f64> = poles.iter().filter(|p| p.1).map(|p| p.0).collect();
        for w in active.windows(2) {
            let (hi, lo) = (w[0], w[1]);
            // Hyperbolic: the gap just below the cone pole b holds no root.
            if matches!(self.geometry, Geometry::Hyperbolic(_)) && hi == self.b {
                continue;
            }
            roots.push((bisect(f, lo, hi, true), false));
        }
        if !matches!(self.geometry, Geometry::Spherical(_)) {
            let top = *active.last().unwrap();
            let mut step = 1.0f64.max(top.abs());
            let mut lo = top - step;
            while f(lo) >= 0.0 {
                step *= 2.0;
                lo = top - step;
                if !lo.is_finite() {
                    return Err(Error::DegeneratePoint(
                        "could not bracket the lowest root".into(),
                    ));
                }
            }
            roots.push((bisect(f, lo, top, true), false));
        }
        roots.sort_by(|x, y| y.0.total_cmp(&x.0));
        if roots.len() != self.dim() {
            return Err(Error::DegeneratePoint(format!(
                "found {} roots, expected {}",
                roots.len(),
                self.dim()
            )));
        }
        let signs = point
            .iter()
            .map(|v| v.is_sign_negative() && *v != 0.0)
            .collect();
        Ok(EllipticCoords {
            lambda: roots.iter().map(|r| r.0).collect(),
            negative: signs,
            degenerate: roots.iter().map(|r| r.1).collect(),
        })
    }

    /// As [`Self::confocal_parameters`] but with `DegeneratePoint` for points
    /// on a coordinate hyperplane.
    pub fn confocal_parameters_strict(&self, point: &[f64]) -> Result<EllipticCoords> {
        let c = self.confocal_parameters(point)?;
        if let Some(j) = c.degenerate.iter().position(|&d| d) {
            return Err(Error::DegeneratePoint(format!(
                "root λ = {} collides with a pole",
                c.lambda[j]
            )));
        }
        Ok(c)
    }

    /// The point with elliptic coordinates `coords`.
    pub fn point_from_parameters(&self, coords: &EllipticCoords) -> Result<Vec<f64>> {
        let n = self.dim();
        if coords.lambda.len() != n {
            return Err(Error::InvalidParameters(format!("expected {n} parameters")));
        }
        let mut lam = coords.lambda.clone();
        lam.sort_by(|x, y| y.total_cmp(x));
        if lam.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidParameters(
                "parameters must be distinct".into(),
            ));
        }
        let terms = self.terms();
        let m = self.geometry.ambient_dim();
        // λ equal to a pole pins that coordinate to zero.
        let mut zero = vec![false; m];
        let mut eqs = Vec::new();
        for &l in &lam {
            let hit = (0..m).find(|&k| {
                terms[k]
                    .pole()
                    .is_some_and(|p| (p - l).abs() <= 1e-14 * p.abs().max(1.0))
            });
            match hit {
                Some(k) => zero[k] = true,
                None => eqs.push(l),
            }
        }
        let unknowns: Vec<usize> = (0..m).filter(|&k| !zero[k]).collect();
        let rows = eqs.len() + usize::from(self.geometry.is_curved());
        if rows != unknowns.len() {
            return Err(Error::NoRealPoint(
                "parameters do not determine a point".into(),
            ));
        }
        let mut mat = DMatrix::<f64>::zeros(rows, rows);
        let mut rhs = DVector::<f64>::zeros(rows);
        for (r, &l) in eqs.iter().enumerate() {
            for (c, &k) in unknowns.iter().enumerate() {
                mat[(r, c)] = terms[k].sigma / terms[k].denom(l);
            }
            if !self.geometry.is_curved() {
                rhs[r] = 1.0;
            }
        }
        match self.geometry {
            Geometry::Euclidean(_) => {}
            Geometry::Spherical(_) => {
                for c in 0..rows {
                    mat[(rows - 1, c)] = 1.0;
                }
                rhs[rows - 1] = 1.0;
            }
            Geometry::Hyperbolic(_) => {
                for (c, &k) in unknowns.iter().enumerate() {
                    mat[(rows - 1, c)] = if k == 0 { -1.0 } else { 1.0 };
                }
                rhs[rows - 1] = -1.0;
            }
        }
        let sol = mat
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::NoRealPoint("singular linear system".into()))?;
        let mut sq = vec![0.0; m];
        for (c, &k) in unknowns.iter().enumerate() {
            sq[k] = sol[c];
        }
        let scale = sq.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        let mut x = Vec::with_capacity(m);
        for (k, &s) in sq.iter().enumerate() {
            if s < -1e-12 * scale {
                return Err(Error::NoRealPoint(format!("x_{k}² = {s} < 0")));
            }
            let v = s.max(0.0).sqrt();
            let neg = coords.negative.get(k).copied().unwrap_or(false);
            let force_positive = matches!(self.geometry, Geometry::Hyperbolic(_)) && k == 0;
            x.push(if neg && !force_positive { -v } else { v });
        }
        Ok(x)
    }

    /// Parameters `λ` of the members tangent to a line (Euclidean) or a
    /// geodesic (curved).
    ///
    /// Euclidean: the line `point + t·direction`. Curved: the geodesic through
    /// the model point `point` in the plane spanned with `direction`.
    /// Parameters within `1e−12` of a pole are flagged `focal`.
    pub fn tangent_parameters_of_line(
        &self,
        point: &[f64],
        direction: &[f64],
    ) -> Result<Vec<TangentParameter>> {
        let m = self.geometry.ambient_dim();
        if point.len() != m || direction.len() != m {
            return Err(Error::InvalidParameters("dimension mismatch".into()));
        }
        let u = self.homogenize(point, 1.0);
        let v = self.homogenize(direction, 0.0);
        let terms = self.terms();
        let lin = |t: &Term| Poly::new(vec![t.alpha, -t.beta]);
        let k = terms.len();
        let mut d = Poly::new(vec![0.0]);
        for i in 0..k {
            for j in i + 1..k {
                let mij = u[i] * v[j] - u[j] * v[i];
                if mij == 0.0 {
                    continue;
                }
                let mut prod = Poly::new(vec![-terms[i].sigma * terms[j].sigma * mij * mij]);
                for (l, t) in terms.iter().enumerate() {
                    if l != i && l != j {
                        prod = prod.mul(&lin(t));
                    }
                }
                d = d.add(&prod);
            }
        }
        let d = d.trimmed(1e-14);
        if d.degree() == 0 {
            return Ok(Vec::new());
        }
        let roots = d.real_roots(1e-8).ok_or(Error::ComplexRoots)?;
        let poles: Vec<f64> = terms.iter().filter_map(|t| t.pole()).collect();
        let mut out: Vec<TangentParameter> = roots
            .into_iter()
            .map(|lambda| TangentParameter {
                lambda,
                focal: poles
                    .iter()
                    .any(|p| (p - lambda).abs() < 1e-12 * p.abs().max(1.0)),
            })
            .collect();
        out.sort_by(|x, y| y.lambda.total_cmp(&x.lambda));
        Ok(out)
    }

    /// Discriminant `B² − AC` of the member `λ` restricted to the line (or
    /// geodesic plane) in the same conventions as
    /// [`Self::tangent_parameters_of_line`]. Zero means tangency.
    pub fn restricted_discriminant(&self, lambda: f64, point: &[f64], direction: &[f64]) -> f64 {
        let u = self.homogenize(point, 1.0);
        let v = self.homogenize(direction, 0.0);
        let terms = self.terms();
        let form = |x: &[f64], y: &[f64]| -> f64 {
            terms
                .iter()
                .zip(x.iter().zip(y))
                .map(|(t, (a, b))| t.sigma * a * b / t.denom(lambda))
                .sum()
        };
        let b = form(&u, &v);
        b * b - form(&u, &u) * form(&v, &v)
    }

    /// Builds the vertices of the confocal box `intervals[i] = (λᵢ⁰, λᵢ¹)` in
    /// the positive orthant and compares the lengths of its great diagonals.
    pub fn ivory_parallelepiped_check(
        &self,
        intervals: &[(f64, f64)],
        tol: f64,
    ) -> Result<IvoryReport> {
        let n = self.dim();
        if intervals.len() != n {
            return Err(Error::InvalidParameters(format!("expected {n} intervals")));
        }
        let classes = self.class_intervals();
        for (i, &(l0, l1)) in intervals.iter().enumerate() {
            let (lo, hi) = classes[i];
            if !(l0 > lo && l0 < hi && l1 > lo && l1 < hi) {
                return Err(Error::InvalidParameters(format!(
                    "interval {i} leaves its class ({lo}, {hi})"
                )));
            }
        }
        let m = self.geometry.ambient_dim();
        let mut vertices = Vec::with_capacity(1 << n);
        for mask in 0..(1usize << n) {
            let lambda = (0..n)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        intervals[i].1
                    } else {
                        intervals[i].0
                    }
                })
                .collect();
            let c = EllipticCoords {
                lambda,
                negative: vec![false; m],
                degenerate: vec![false; n],
            };
            vertices.push(self.point_from_parameters(&c)?);
        }
        let full = (1usize << n) - 1;
        let mut diagonals = Vec::with_capacity(1 << (n - 1));
        for mask in 0..(1usize << (n - 1)) {
            diagonals.push(
                self.geometry
                    .distance(&vertices[mask], &vertices[full ^ mask])?,
            );
        }
        let spread = spread(&diagonals);
        Ok(IvoryReport {
            vertices,
            diagonals,
            spread,
            pass: spread < tol,
        })
    }
}

fn check_decreasing(a: &[f64]) -> Result<()> {
    if a.len() < 2 {
        return Err(Error::InvalidParameters(
            "need at least two semiaxes".into(),
        ));
    }
    if a.iter().any(|v| !v.is_finite()) || a.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidParameters(format!(
            "semiaxes must strictly decrease: {a:?}"
        )));
    }
    Ok(())
}

pub(crate) fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() {
        0.0
    } else {
        max - min
    }
}

/// A single member of a confocal family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadricMember {
    pub lambda: f64,
    /// Index into [`ConfocalFamily::class_intervals`].
    pub class_index: usize,
}

/// Elliptic coordinates of a point, largest parameter first.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticCoords {
    pub lambda: Vec<f64>,
    /// Sign bits of the ambient coordinates (`true` = negative).
    pub negative: Vec<bool>,
    /// Set for roots produced by a vanishing coordinate.
    pub degenerate: Vec<bool>,
}

impl EllipticCoords {
    /// Coordinates in the positive orthant.
    pub fn positive(lambda: Vec<f64>, ambient_dim: usize) -> Self {
        let n = lambda.len();
        Self {
            lambda,
            negative: vec![false; ambient_dim],
            degenerate: vec![false; n],
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentParameter {
    pub lambda: f64,
    pub focal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvoryReport {
    /// Indexed by bit mask: bit `i` selects the upper end of interval `i`.
    pub vertices: Vec<Vec<f64>>,
    /// Great diagonal lengths, vertex `m` to vertex `!m`.
    pub diagonals: Vec<f64>,
    pub spread: f64,
    pub pass: bool,
}
