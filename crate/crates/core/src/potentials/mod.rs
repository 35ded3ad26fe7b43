//! Potentials in constant curvature: point charges, homeoids and their
//! homeoidal charges, and the layers of hyperbolic polynomials.
//!
//! Points use the conventions of [`crate::quadrics`]: `(x₀, x₁, …, xₙ)` with
//! `x₀` first, `Sⁿ` the unit sphere and `Hⁿ` the upper sheet of
//! `−x₀² + Σ xᵢ² = −1`. An ellipsoid is kept in a basis that diagonalizes
//! its form,
//!
//! ```text
//! q(x) = Σ xᵢ²/aᵢ − x₀²/b
//! ```
//!
//! and is the component of `{q = 0}` around the `x₀` axis.
//!
//! Sign conventions: the fundamental solution `u` is decreasing with
//! `u′(r) = −φ(r)^{1−n}` (`φ = sin`, `sinh` or the identity), and a field is
//! `−∇U`, returned as an ambient tangent vector at the evaluation point.

mod hyperbolic;

pub use hyperbolic::*;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};
use crate::quadrics::{minkowski, Geometry};

fn quad_opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-16,
        rel_tol: 1e-14,
        max_intervals: 2000,
    }
}

/// Fundamental solution at distance `r`.
///
/// `Sⁿ`: `∫_r^{π/2} dx / sinⁿ⁻¹x`; `Hⁿ`: `∫_r^∞ dx / sinhⁿ⁻¹x`. In three
/// dimensions these are `cot r` and `coth r − 1`. Euclidean space gets
/// `−log r` in the plane and `r^{2−n}/(n−2)` above.
pub fn point_potential(geometry: Geometry, r: f64) -> Result<f64> {
    check_radius(geometry, r)?;
    match geometry {
        Geometry::Spherical(_) if r == std::f64::consts::FRAC_PI_2 => Ok(0.0),
        Geometry::Spherical(1) => Ok(std::f64::consts::FRAC_PI_2 - r),
        Geometry::Spherical(3) => Ok(1.0 / r.tan()),
        Geometry::Hyperbolic(3) => Ok(1.0 / r.tanh() - 1.0),
        Geometry::Euclidean(n) => Ok(match n {
            1 => -r,
            2 => -r.ln(),
            _ => r.powi(2 - n as i32) / (n as f64 - 2.0),
        }),
        _ => point_potential_quadrature(geometry, r),
    }
}

/// [`point_potential`] on `Sⁿ` or `Hⁿ` by adaptive quadrature, with no
/// closed forms.
pub fn point_potential_quadrature(geometry: Geometry, r: f64) -> Result<f64> {
    let n = geometry.dim();
    check_radius(geometry, r)?;
    match geometry {
        Geometry::Spherical(_) => Ok(integrate(
            |x| x.sin().powi(1 - n as i32),
            r,
            std::f64::consts::FRAC_PI_2,
            quad_opts(),
        )?
        .value),
        Geometry::Hyperbolic(1) => Err(Error::DomainError(
            "the hyperbolic line has no decaying point potential".into(),
        )),
        // t = e^{-x} maps [r, ∞) onto (0, e^{-r}].
        Geometry::Hyperbolic(_) => {
            let k = n as i32 - 1;
            let f = |t: f64| 2f64.powi(k) * t.powi(k - 1) / (1.0 - t * t).powi(k);
            Ok(integrate(f, 0.0, (-r).exp(), quad_opts())?.value)
        }
        Geometry::Euclidean(_) => Err(Error::DomainError(
            "no quadrature form in Euclidean space".into(),
        )),
    }
}

/// `u′(r) = −φ(r)^{1−n}`.
pub fn point_potential_derivative(geometry: Geometry, r: f64) -> Result<f64> {
    check_radius(geometry, r)?;
    Ok(-radial_scale(geometry, r).powi(1 - geometry.dim() as i32))
}

fn check_radius(geometry: Geometry, r: f64) -> Result<()> {
    let ok = match geometry {
        Geometry::Spherical(_) => r > 0.0 && r < std::f64::consts::PI,
        _ => r > 0.0 && r.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::DomainError(format!(
            "distance {r} outside the domain of the point potential"
        )))
    }
}

/// `φ(r)`: the radius of the geodesic sphere of radius `r` measured in the
/// tangent space.
fn radial_scale(geometry: Geometry, r: f64) -> f64 {
    match geometry {
        Geometry::Spherical(_) => r.sin(),
        Geometry::Hyperbolic(_) => r.sinh(),
        Geometry::Euclidean(_) => r,
    }
}

fn radial_scale_derivative(geometry: Geometry, r: f64) -> f64 {
    match geometry {
        Geometry::Spherical(_) => r.cos(),
        Geometry::Hyperbolic(_) => r.cosh(),
        Geometry::Euclidean(_) => 1.0,
    }
}

/// `u″ + (n−1)(φ′/φ)u′` with five-point differences of [`point_potential`].
pub fn radial_laplacian(geometry: Geometry, r: f64, h: f64) -> Result<f64> {
    let u = |s: f64| point_potential(geometry, s);
    let (m2, m1, c, p1, p2) = (
        u(r - 2.0 * h)?,
        u(r - h)?,
        u(r)?,
        u(r + h)?,
        u(r + 2.0 * h)?,
    );
    let d1 = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
    let d2 = (-m2 + 16.0 * m1 - 30.0 * c + 16.0 * p1 - p2) / (12.0 * h * h);
    let n = geometry.dim() as f64;
    Ok(d2 + (n - 1.0) * radial_scale_derivative(geometry, r) / radial_scale(geometry, r) * d1)
}

/// `|u(π − r) + u(r)|` on `Sⁿ`.
pub fn antisymmetry_check(n: usize, r: f64) -> Result<f64> {
    let g = Geometry::Spherical(n);
    Ok((point_potential(g, std::f64::consts::PI - r)? + point_potential(g, r)?).abs())
}

/// Area of the unit sphere `Sᵏ ⊂ ℝᵏ⁺¹`.
pub fn unit_sphere_area(k: usize) -> f64 {
    use std::f64::consts::PI;
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * unit_sphere_area(k - 2),
    }
}

/// A quadratic form `x ↦ xᵀ M x` with exactly symmetric `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    m: DMatrix<f64>,
}

impl QuadraticForm {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::InvalidParameters(
                "form matrix must be square and nonempty".into(),
            ));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters(
                "form has non-finite entries".into(),
            ));
        }
        if m != m.transpose() {
            return Err(Error::InvalidParameters(
                "form matrix is not symmetric".into(),
            ));
        }
        Ok(Self { m })
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// `−x₀² + Σ xᵢ²` on `ℝⁿ⁺¹`.
    pub fn minkowski(n: usize) -> Self {
        let mut d = vec![1.0; n + 1];
        d[0] = -1.0;
        Self::diagonal(&d).expect("finite diagonal")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.polar(x, x)
    }

    /// `xᵀ M y`
    pub fn polar(&self, x: &[f64], y: &[f64]) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| x[i] * (0..n).map(|j| self.m[(i, j)] * y[j]).sum::<f64>())
            .sum()
    }

    /// Numbers of negative, zero and positive eigenvalues; eigenvalues within
    /// `tol · max|λ|` of zero count as zero.
    pub fn inertia(&self, tol: f64) -> (usize, usize, usize) {
        let ev = SymmetricEigen::new(self.m.clone()).eigenvalues;
        let scale = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut out = (0, 0, 0);
        for &v in ev.iter() {
            if v.abs() <= tol * scale {
                out.1 += 1;
            } else if v < 0.0 {
                out.0 += 1;
            } else {
                out.2 += 1;
            }
        }
        out
    }
}

/// A basis `B` with `Bᵀ P B` and `Bᵀ Q B` diagonal.
#[derive(Debug, Clone)]
pub struct SimultaneousDiagonalization {
    /// Columns are the new basis vectors, the timelike one first.
    pub basis: DMatrix<f64>,
    /// `±1` entries of `p` in the new basis.
    pub p_diag: Vec<f64>,
    pub q_diag: Vec<f64>,
}

/// Diagonalizes two forms of index one whose light cones are nested, the
/// cone of `q` inside that of `p`.
///
/// Nesting is equivalent to `q − μp` being positive definite for some
/// `μ > 0`; `μ` maximizes the (concave) least eigenvalue of the pencil.
/// With `q − μp = LLᵀ` the eigenvectors of `L⁻¹ P L⁻ᵀ` give the basis.
/// Columns are `p`-normalized, the spacelike ones ordered by increasing
/// `q` entry.
pub fn simultaneous_diagonalize(
    p: &QuadraticForm,
    q: &QuadraticForm,
) -> Result<SimultaneousDiagonalization> {
    let n = p.dim();
    if q.dim() != n {
        return Err(Error::InvalidParameters(
            "forms live in different dimensions".into(),
        ));
    }
    for f in [p, q] {
        let (neg, zero, _) = f.inertia(1e-12);
        if neg != 1 || zero != 0 {
            return Err(Error::InvalidParameters(
                "both forms must be nondegenerate of index 1".into(),
            ));
        }
    }
    let least = |mu: f64| {
        SymmetricEigen::new(q.matrix() - p.matrix() * mu)
            .eigenvalues
            .min()
    };
    let pmax = SymmetricEigen::new(p.matrix().clone()).eigenvalues.max();
    let (mut lo, mut hi) = (0.0, q.matrix().norm() / pmax);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut m1, mut m2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (least(m1), least(m2));
    for _ in 0..200 {
        if f1 < f2 {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + g * (hi - lo);
            f2 = least(m2);
        } else {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - g * (hi - lo);
            f1 = least(m1);
        }
    }
    let mu = 0.5 * (lo + hi);
    let s = q.matrix() - p.matrix() * mu;
    if least(mu) <= 1e-12 * q.matrix().norm() {
        return Err(Error::ConeConditionViolated);
    }
    let l = s.cholesky().ok_or(Error::ConeConditionViolated)?.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or(Error::ConeConditionViolated)?;
    let pt = &linv * p.matrix() * linv.transpose();
    let pt = 0.5 * (&pt + pt.transpose());
    let eig = SymmetricEigen::new(pt);
    let raw = linv.transpose() * &eig.eigenvectors;
    let mut cols: Vec<(f64, f64, DVector<f64>)> = (0..n)
        .map(|k| {
            let d = eig.eigenvalues[k];
            let mut v = raw.column(k) / d.abs().sqrt();
            let lead = v
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(1.0);
            if lead < 0.0 {
                v = -v;
            }
            (d.signum(), 1.0 / d.abs() + mu * d.signum(), v)
        })
        .collect();
    // Bᵀ S B = I, so in a p-normalized column the q entry is 1/|d| + μ·sign d.
    cols.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let basis = DMatrix::from_columns(&cols.iter().map(|c| c.2.clone()).collect::<Vec<_>>());
    Ok(SimultaneousDiagonalization {
        basis,
        p_diag: cols.iter().map(|c| c.0).collect(),
        q_diag: cols.iter().map(|c| c.1).collect(),
    })
}

/// `diag(d₀, d₁, …, dₙ)` acting on ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMap {
    pub diag: Vec<f64>,
}

impl DiagonalMap {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.diag).map(|(v, d)| v * d).collect()
    }

    pub fn apply_inverse(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.diag).map(|(v, d)| v / d).collect()
    }

    pub fn determinant(&self) -> f64 {
        self.diag.iter().product()
    }
}

/// A spherical or hyperbolic ellipsoid `{q = 0}` in its diagonal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvedEllipsoid {
    geometry: Geometry,
    a: Vec<f64>,
    b: f64,
}

impl CurvedEllipsoid {
    /// `a₁ ≥ ⋯ ≥ aₙ > 0`, `b > 0`, and `a₁ < b` in `Hⁿ`.
    pub fn new(geometry: Geometry, a: &[f64], b: f64) -> Result<Self> {
        if !geometry.is_curved() {
            return Err(Error::InvalidParameters(
                "curved ellipsoids live in Sⁿ or Hⁿ".into(),
            ));
        }
        if a.len() != geometry.dim() || a.is_empty() {
            return Err(Error::InvalidParameters(format!(
                "expected {} semiaxis parameters",
                geometry.dim()
            )));
        }
        if a.windows(2).any(|w| w[0] < w[1]) || a.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameters("need a₁ ≥ ⋯ ≥ aₙ > 0".into()));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameters("need b > 0".into()));
        }
        if matches!(geometry, Geometry::Hyperbolic(_)) && a[0] >= b {
            return Err(Error::InvalidParameters(
                "hyperbolic ellipsoids need aᵢ < b".into(),
            ));
        }
        Ok(Self {
            geometry,
            a: a.to_vec(),
            b,
        })
    }

    /// Round sphere of geodesic radius `radius` about `(1, 0, …, 0)`.
    pub fn round(geometry: Geometry, radius: f64) -> Result<Self> {
        let t = match geometry {
            Geometry::Spherical(_) if radius > 0.0 && radius < std::f64::consts::FRAC_PI_2 => {
                radius.tan()
            }
            Geometry::Hyperbolic(_) if radius > 0.0 => radius.tanh(),
            _ => {
                return Err(Error::InvalidParameters(format!(
                    "no round ellipsoid of radius {radius}"
                )))
            }
        };
        Self::new(geometry, &vec![t * t; geometry.dim()], 1.0)
    }

    /// Brings a form that cuts an ellipsoid out of the model into diagonal
    /// position. Returns the ellipsoid and the basis (columns) it lives in.
    pub fn from_form(geometry: Geometry, q: &QuadraticForm) -> Result<(Self, DMatrix<f64>)> {
        let n = geometry.dim();
        if q.dim() != n + 1 {
            return Err(Error::InvalidParameters(
                "form dimension does not match the model".into(),
            ));
        }
        let (basis, diag) = match geometry {
            Geometry::Spherical(_) => {
                let (neg, zero, _) = q.inertia(1e-12);
                if neg != 1 || zero != 0 {
                    return Err(Error::InvalidParameters(
                        "form must be nondegenerate of index 1".into(),
                    ));
                }
                let eig = SymmetricEigen::new(q.matrix().clone());
                let mut idx: Vec<usize> = (0..=n).collect();
                idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
                let cols: Vec<DVector<f64>> = idx
                    .iter()
                    .map(|&k| eig.eigenvectors.column(k).into_owned())
                    .collect();
                (
                    DMatrix::from_columns(&cols),
                    idx.iter().map(|&k| eig.eigenvalues[k]).collect::<Vec<_>>(),
                )
            }
            Geometry::Hyperbolic(_) => {
                let d = simultaneous_diagonalize(&QuadraticForm::minkowski(n), q)?;
                (d.basis, d.q_diag)
            }
            Geometry::Euclidean(_) => {
                return Err(Error::InvalidParameters(
                    "curved ellipsoids live in Sⁿ or Hⁿ".into(),
                ))
            }
        };
        let mut basis = basis;
        if basis.column(0)[0] < 0.0 {
            let c = -basis.column(0);
            basis.set_column(0, &c);
        }
        let a: Vec<f64> = diag[1..].iter().map(|v| 1.0 / v).collect();
        Ok((Self::new(geometry, &a, -1.0 / diag[0])?, basis))
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    fn hyperbolic(&self) -> bool {
        matches!(self.geometry, Geometry::Hyperbolic(_))
    }

    /// Cone constant of the confocal member `λ`: `b + λ` on `Sⁿ`, `b − λ`
    /// on `Hⁿ`.
    fn b_lambda(&self, lambda: f64) -> f64 {
        if self.hyperbolic() {
            self.b - lambda
        } else {
            self.b + lambda
        }
    }

    pub fn q(&self, x: &[f64]) -> f64 {
        self.q_lambda(0.0, x)
    }

    pub fn q_lambda(&self, lambda: f64, x: &[f64]) -> f64 {
        x[1..]
            .iter()
            .zip(&self.a)
            .map(|(v, a)| v * v / (a - lambda))
            .sum::<f64>()
            - x[0] * x[0] / self.b_lambda(lambda)
    }

    /// Open interval of `λ` for which `E_λ` is an ellipsoid.
    pub fn lambda_range(&self) -> (f64, f64) {
        let an = *self.a.last().unwrap();
        if self.hyperbolic() {
            (f64::NEG_INFINITY, an)
        } else {
            (-self.b, an)
        }
    }

    /// The confocal ellipsoid `E_λ`.
    pub fn confocal(&self, lambda: f64) -> Result<Self> {
        let (lo, hi) = self.lambda_range();
        if !(lambda > lo && lambda < hi) {
            return Err(Error::DomainError(format!(
                "λ = {lambda} outside ({lo}, {hi})"
            )));
        }
        let a: Vec<f64> = self.a.iter().map(|a| a - lambda).collect();
        Self::new(self.geometry, &a, self.b_lambda(lambda))
    }

    /// `diag(√((b±λ)/b), √((a₁−λ)/a₁), …)` carrying `E` onto `E_λ`.
    pub fn f_lambda(&self, lambda: f64) -> Result<DiagonalMap> {
        self.confocal(lambda)?;
        let mut diag = vec![(self.b_lambda(lambda) / self.b).sqrt()];
        diag.extend(self.a.iter().map(|a| ((a - lambda) / a).sqrt()));
        Ok(DiagonalMap { diag })
    }

    /// Ambient gradient of `q`, with the first component negated on `Hⁿ`
    /// so that it is the Minkowski gradient.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![-2.0 * x[0] / self.b];
        g.extend(x[1..].iter().zip(&self.a).map(|(v, a)| 2.0 * v / a));
        if self.hyperbolic() {
            g[0] = -g[0];
        }
        g
    }

    /// `‖grad q‖`, Euclidean on `Sⁿ` and Minkowski on `Hⁿ`.
    pub fn gradient_norm(&self, x: &[f64]) -> f64 {
        norm_in(self.geometry, &self.gradient(x))
    }

    fn check_on_surface(&self, x: &[f64]) -> Result<()> {
        self.geometry.check_point(x)?;
        let r = self.q(x);
        if r.abs() > 1e-10 * self.gradient_norm(x).max(1.0) || x[0] <= 0.0 {
            return Err(Error::NotOnSurface(r));
        }
        Ok(())
    }

    /// Homeoidal density `1/‖grad q‖` at a point of the ellipsoid.
    pub fn homeoidal_density(&self, x: &[f64]) -> Result<f64> {
        self.check_on_surface(x)?;
        Ok(1.0 / self.gradient_norm(x))
    }

    /// Strictly inside the component around the `x₀` axis.
    pub fn contains(&self, x: &[f64]) -> bool {
        x[0] > 0.0 && self.q(x) < 0.0
    }

    /// The point of `E` over the unit direction `theta ∈ Sⁿ⁻¹`, together with
    /// the density of the homeoidal measure `δ(q) dV` with respect to the
    /// area of `Sⁿ⁻¹`.
    ///
    /// With `x = (cos ρ, sin ρ θ)` (or `cosh`, `sinh`) the volume element is
    /// `φ(ρ)ⁿ⁻¹ dρ dθ` and the delta function contributes `1/|∂q/∂ρ|`.
    pub fn point_over(&self, theta: &[f64]) -> (Vec<f64>, f64) {
        let n = self.a.len();
        let big_q: f64 = theta.iter().zip(&self.a).map(|(t, a)| t * t / a).sum();
        let t = (1.0 / (self.b * big_q)).sqrt();
        let (c, s, dq) = if self.hyperbolic() {
            let c = 1.0 / (1.0 - t * t).sqrt();
            let s = t * c;
            (c, s, 2.0 * s * c * (big_q - 1.0 / self.b))
        } else {
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = t * c;
            (c, s, 2.0 * s * c * (big_q + 1.0 / self.b))
        };
        let mut x = vec![c];
        x.extend(theta.iter().map(|v| s * v));
        (x, s.powi(n as i32 - 1) / dq)
    }

    /// Orthonormal (for the model metric) basis of the tangent space of `E`.
    fn tangent_basis(&self, x: &[f64]) -> Vec<DVector<f64>> {
        let m = x.len();
        let g = metric_diag(self.geometry, m);
        let grad: Vec<f64> = self.gradient(x);
        // Rows: metric duals of x and of the normal.
        let rows = DMatrix::from_fn(
            2,
            m,
            |r, c| if r == 0 { g[c] * x[c] } else { g[c] * grad[c] },
        );
        let svd = rows.transpose().svd(true, false);
        let u = svd.u.expect("requested");
        // Complement of the column space of rowsᵀ.
        let full = DMatrix::<f64>::identity(m, m) - &u * u.transpose();
        let mut basis: Vec<DVector<f64>> = Vec::new();
        for k in 0..m {
            let mut v = full.column(k).into_owned();
            for w in &basis {
                let c = inner(self.geometry, v.as_slice(), w.as_slice());
                v -= w * c;
            }
            let nv = inner(self.geometry, v.as_slice(), v.as_slice());
            if nv > 1e-10 {
                basis.push(v / nv.sqrt());
            }
            if basis.len() == m - 2 {
                break;
            }
        }
        basis
    }

    /// Density of `f_λ^*(o_λ)` with respect to `o` at `x ∈ E`, where `o`
    /// and `o_λ` are the homeoidal measures `ω/‖grad q‖`.
    pub fn pullback_ratio(&self, lambda: f64, x: &[f64]) -> Result<f64> {
        self.check_on_surface(x)?;
        let f = self.f_lambda(lambda)?;
        let other = self.confocal(lambda)?;
        let basis = self.tangent_basis(x);
        let k = basis.len();
        let pushed: Vec<Vec<f64>> = basis.iter().map(|v| f.apply(v.as_slice())).collect();
        let gram = DMatrix::from_fn(k, k, |i, j| inner(self.geometry, &pushed[i], &pushed[j]));
        let jac = gram.determinant().sqrt();
        let y = f.apply(x);
        Ok(jac * self.gradient_norm(x) / other.gradient_norm(&y))
    }

    /// First-order geodesic distance from `x` to the surface.
    fn distance_estimate(&self, x: &[f64]) -> f64 {
        let g = self.gradient(x);
        let along = inner(self.geometry, &g, x) / inner(self.geometry, x, x);
        let t: Vec<f64> = g.iter().zip(x).map(|(gi, xi)| gi - along * xi).collect();
        self.q(x).abs() / norm_in(self.geometry, &t)
    }
}

fn metric_diag(geometry: Geometry, m: usize) -> Vec<f64> {
    let mut g = vec![1.0; m];
    if matches!(geometry, Geometry::Hyperbolic(_)) {
        g[0] = -1.0;
    }
    g
}

fn inner(geometry: Geometry, x: &[f64], y: &[f64]) -> f64 {
    match geometry {
        Geometry::Hyperbolic(_) => minkowski(x, y),
        _ => x.iter().zip(y).map(|(a, b)| a * b).sum(),
    }
}

fn norm_in(geometry: Geometry, v: &[f64]) -> f64 {
    inner(geometry, v, v).max(0.0).sqrt()
}

/// Distance from `x` to `y` and the unit tangent at `x` pointing to `y`.
fn distance_and_direction(geometry: Geometry, x: &[f64], y: &[f64]) -> (f64, Vec<f64>) {
    let diff: Vec<f64> = y.iter().zip(x).map(|(a, b)| a - b).collect();
    let chord = norm_in(geometry, &diff);
    match geometry {
        Geometry::Spherical(_) => {
            let d = 2.0 * (0.5 * chord).min(1.0).asin();
            let c = inner(geometry, x, y);
            let t: Vec<f64> = y
                .iter()
                .zip(x)
                .map(|(a, b)| (a - c * b) / d.sin())
                .collect();
            (d, t)
        }
        Geometry::Hyperbolic(_) => {
            let d = 2.0 * (0.5 * chord).asinh();
            let c = -inner(geometry, x, y);
            let t: Vec<f64> = y
                .iter()
                .zip(x)
                .map(|(a, b)| (a - c * b) / d.sinh())
                .collect();
            (d, t)
        }
        Geometry::Euclidean(_) => (chord, diff.iter().map(|v| v / chord).collect()),
    }
}

/// Shell `{ε₁ ≤ q ≤ ε₂}` around a curved ellipsoid.
#[derive(Debug, Clone, PartialEq)]
pub struct Homeoid {
    core: CurvedEllipsoid,
    levels: (f64, f64),
}

impl Homeoid {
    /// Checks on 256 radial directions that both levels cut every ray from
    /// the centre, so the shell is a cylinder over the core.
    pub fn new(core: CurvedEllipsoid, eps1: f64, eps2: f64) -> Result<Self> {
        if !(eps1 <= eps2) {
            return Err(Error::InvalidParameters(format!(
                "need ε₁ ≤ ε₂, got {eps1} > {eps2}"
            )));
        }
        let n = core.a.len();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..256 {
            let theta = random_unit(&mut rng, n);
            let big_q: f64 = theta.iter().zip(&core.a).map(|(t, a)| t * t / a).sum();
            // q along the ray runs from −1/b at the centre to Q (sphere, at
            // the equator) or to +∞ (hyperboloid).
            let top = if core.hyperbolic() {
                f64::INFINITY
            } else {
                big_q
            };
            for e in [eps1, eps2] {
                if !(e > -1.0 / core.b && e < top) {
                    return Err(Error::InvalidParameters(format!(
                        "level {e} misses a radial direction"
                    )));
                }
            }
        }
        Ok(Self {
            core,
            levels: (eps1, eps2),
        })
    }

    pub fn core(&self) -> &CurvedEllipsoid {
        &self.core
    }

    pub fn levels(&self) -> (f64, f64) {
        self.levels
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let v = self.core.q(x);
        v >= self.levels.0 && v <= self.levels.1
    }

    /// Lengths of the two arcs the geodesic through `x` with unit tangent `v`
    /// cuts out of the shell. On `Sⁿ` arcs that differ by the antipodal map
    /// are counted once.
    pub fn chord_segments(&self, x: &[f64], v: &[f64]) -> Result<(f64, f64)> {
        let g = self.core.geometry;
        g.check_point(x)?;
        if inner(g, x, v).abs() > 1e-10 || (inner(g, v, v) - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameters(
                "tangent must be a unit vector orthogonal to x".into(),
            ));
        }
        // q∘γ = α + β·c(2t) + γ·s(2t) with (c, s) = (cos, sin) or (cosh, sinh).
        let (qa, qb, qc) = (self.core.q(x), polar(&self.core, x, v), self.core.q(v));
        let hyper = self.core.hyperbolic();
        let (alpha, beta) = if hyper {
            (0.5 * (qa - qc), 0.5 * (qa + qc))
        } else {
            (0.5 * (qa + qc), 0.5 * (qa - qc))
        };
        let gamma = qb;
        let intervals = if hyper {
            shell_intervals_line(alpha, beta, gamma, self.levels)
        } else {
            shell_intervals_circle(alpha, beta, gamma, self.levels)
        }?;
        if intervals.len() != 2 {
            return Err(Error::WrongComponentCount(intervals.len()));
        }
        Ok((
            intervals[0].1 - intervals[0].0,
            intervals[1].1 - intervals[1].0,
        ))
    }
}

fn polar(e: &CurvedEllipsoid, x: &[f64], y: &[f64]) -> f64 {
    x[1..]
        .iter()
        .zip(&y[1..])
        .zip(&e.a)
        .map(|((u, v), a)| u * v / a)
        .sum::<f64>()
        - x[0] * y[0] / e.b
}

/// Real roots of `a₂y² + a₁y + a₀`; a vanishing discriminant is a tangency
/// and is rejected.
fn quadratic_roots(a2: f64, a1: f64, a0: f64) -> Result<Vec<f64>> {
    let scale = a2.abs().max(a1.abs()).max(a0.abs());
    if a2.abs() <= 1e-14 * scale {
        if a1.abs() <= 1e-14 * scale {
            return Ok(Vec::new());
        }
        return Ok(vec![-a0 / a1]);
    }
    let disc = a1 * a1 - 4.0 * a2 * a0;
    if disc.abs() <= 1e-12 * scale * scale {
        return Err(Error::WrongComponentCount(1));
    }
    if disc < 0.0 {
        return Ok(Vec::new());
    }
    let s = disc.sqrt();
    let k = -0.5 * (a1 + a1.signum() * s);
    let mut r = vec![k / a2, a0 / k];
    r.sort_by(f64::total_cmp);
    Ok(r)
}

/// Intervals of `t ∈ [t₀, t₀ + π)` where `α + β cos 2t + γ sin 2t` lies in
/// the shell, with `t₀` chosen outside the shell.
fn shell_intervals_circle(
    alpha: f64,
    beta: f64,
    gamma: f64,
    levels: (f64, f64),
) -> Result<Vec<(f64, f64)>> {
    use std::f64::consts::PI;
    let rho = beta.hypot(gamma);
    let phi = gamma.atan2(beta);
    // Extremes of cos(2t − φ) sit at t = φ/2 and φ/2 + π/2.
    let g = |t: f64| alpha + rho * (2.0 * t - phi).cos();
    let inside = |v: f64| v >= levels.0 && v <= levels.1;
    let t0 = if !inside(alpha + rho) {
        0.5 * phi
    } else if !inside(alpha - rho) {
        0.5 * phi + 0.5 * PI
    } else {
        return Err(Error::WrongComponentCount(1));
    };
    let mut cuts = Vec::new();
    for e in [levels.0, levels.1] {
        let c = (e - alpha) / rho;
        if (c.abs() - 1.0).abs() <= 1e-12 {
            return Err(Error::WrongComponentCount(1));
        }
        if c.abs() < 1.0 {
            let s = c.acos();
            for w in [s, 2.0 * PI - s] {
                cuts.push((w + phi) / 2.0);
            }
        }
    }
    let mut ts: Vec<f64> = cuts.iter().map(|&t| t0 + (t - t0).rem_euclid(PI)).collect();
    ts.sort_by(f64::total_cmp);
    let mut bounds = vec![t0];
    bounds.extend(ts);
    bounds.push(t0 + PI);
    Ok(bounds
        .windows(2)
        .filter(|w| inside(g(0.5 * (w[0] + w[1]))))
        .map(|w| (w[0], w[1]))
        .collect())
}

/// Intervals of `t ∈ ℝ` where `α + β cosh 2t + γ sinh 2t` lies in the shell.
/// Unbounded pieces are an error.
fn shell_intervals_line(
    alpha: f64,
    beta: f64,
    gamma: f64,
    levels: (f64, f64),
) -> Result<Vec<(f64, f64)>> {
    // With w = e^{2t}: (β+γ)w² + 2(α−ε)w + (β−γ) = 0.
    let g = |t: f64| alpha + beta * (2.0 * t).cosh() + gamma * (2.0 * t).sinh();
    let inside = |v: f64| v >= levels.0 && v <= levels.1;
    let mut ts = Vec::new();
    for e in [levels.0, levels.1] {
        for w in quadratic_roots(beta + gamma, 2.0 * (alpha - e), beta - gamma)? {
            if w > 0.0 {
                ts.push(0.5 * w.ln());
            }
        }
    }
    ts.sort_by(f64::total_cmp);
    // Limits of g at ±∞.
    let tiny = 1e-14 * (beta.abs() + gamma.abs());
    let end = |c: f64| {
        if c.abs() > tiny {
            c.signum() * f64::INFINITY
        } else {
            alpha
        }
    };
    let (left, right) = (end(beta - gamma), end(beta + gamma));
    let mut bounded: Vec<(f64, f64)> = ts
        .windows(2)
        .filter(|w| inside(g(0.5 * (w[0] + w[1]))))
        .map(|w| (w[0], w[1]))
        .collect();
    let unbounded = if ts.is_empty() {
        usize::from(inside(g(0.0)))
    } else {
        usize::from(inside(left)) + usize::from(inside(right))
    };
    if unbounded > 0 {
        return Err(Error::WrongComponentCount(bounded.len() + unbounded));
    }
    bounded.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(bounded)
}

/// Monte-Carlo settings. Samples are drawn in batches, each from its own
/// ChaCha stream of one seed; results depend only on the seed and batch
/// size, not on the thread count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerOptions {
    pub samples: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            samples: 100_000,
            batch_size: 4096,
            seed: 0,
        }
    }
}

/// A Monte-Carlo value with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// A field vector with componentwise standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEstimate {
    pub vector: Vec<f64>,
    pub std_error: Vec<f64>,
    /// Model norm of `vector`.
    pub norm: f64,
    /// `√Σ σₖ²`, the expected norm of a vanishing field.
    pub norm_error: f64,
}

impl FieldEstimate {
    fn new(geometry: Geometry, vector: Vec<f64>, std_error: Vec<f64>) -> Self {
        let norm = norm_in(geometry, &vector);
        let norm_error = std_error.iter().map(|s| s * s).sum::<f64>().sqrt();
        Self {
            vector,
            std_error,
            norm,
            norm_error,
        }
    }

    /// `norm < k · norm_error`
    pub fn is_zero_within(&self, k: f64) -> bool {
        self.norm < k * self.norm_error
    }
}

/// Sums over one batch: weights `w` and weighted values `z = w·g`.
#[derive(Debug, Clone)]
struct Moments {
    sw: f64,
    sww: f64,
    sz: Vec<f64>,
    szz: Vec<f64>,
    szw: Vec<f64>,
}

impl Moments {
    fn zero(k: usize) -> Self {
        Self {
            sw: 0.0,
            sww: 0.0,
            sz: vec![0.0; k],
            szz: vec![0.0; k],
            szw: vec![0.0; k],
        }
    }

    fn push(&mut self, w: f64, g: &[f64]) {
        self.sw += w;
        self.sww += w * w;
        for (k, v) in g.iter().enumerate() {
            let z = w * v;
            self.sz[k] += z;
            self.szz[k] += z * z;
            self.szw[k] += z * w;
        }
    }

    fn merge(mut self, o: &Self) -> Self {
        self.sw += o.sw;
        self.sww += o.sww;
        for k in 0..self.sz.len() {
            self.sz[k] += o.sz[k];
            self.szz[k] += o.szz[k];
            self.szw[k] += o.szw[k];
        }
        self
    }

    /// Ratio estimates `Σz/Σw` with delta-method errors.
    fn ratio(&self) -> (Vec<f64>, Vec<f64>) {
        let r: Vec<f64> = self.sz.iter().map(|z| z / self.sw).collect();
        let se = (0..r.len())
            .map(|k| {
                let v = self.szz[k] - 2.0 * r[k] * self.szw[k] + r[k] * r[k] * self.sww;
                v.max(0.0).sqrt() / self.sw
            })
            .collect();
        (r, se)
    }
}

fn pairwise(parts: &[Moments]) -> Moments {
    match parts.len() {
        1 => parts[0].clone(),
        n => pairwise(&parts[..n / 2]).merge(&pairwise(&parts[n / 2..])),
    }
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if r > 1e-12 {
            return v.into_iter().map(|a| a / r).collect();
        }
    }
}

/// Runs `sample` over batches in parallel. `sample` draws one weighted
/// observation `(w, g)`.
fn monte_carlo<F>(opts: &SamplerOptions, k: usize, sample: F) -> Result<Moments>
where
    F: Fn(&mut ChaCha8Rng) -> (f64, Vec<f64>) + Sync,
{
    if opts.samples == 0 || opts.batch_size == 0 {
        return Err(Error::InvalidParameters(
            "sampler needs at least one sample per batch".into(),
        ));
    }
    let batches = opts.samples.div_ceil(opts.batch_size);
    let parts: Vec<Moments> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(b as u64);
            let count = opts.batch_size.min(opts.samples - b * opts.batch_size);
            let mut m = Moments::zero(k);
            for _ in 0..count {
                let (w, g) = sample(&mut rng);
                m.push(w, &g);
            }
            m
        })
        .collect();
    Ok(pairwise(&parts))
}

/// Potential at `x` of the ellipsoid charged with its homeoidal density,
/// normalized to total charge one.
pub fn surface_potential(
    e: &CurvedEllipsoid,
    x: &[f64],
    opts: &SamplerOptions,
) -> Result<Estimate> {
    let g = e.geometry;
    g.check_point(x)?;
    let n = g.dim();
    let m = monte_carlo(opts, 1, |rng| {
        let (y, w) = e.point_over(&random_unit(rng, n));
        let (d, _) = distance_and_direction(g, x, &y);
        (w, vec![point_potential(g, d).unwrap_or(f64::NAN)])
    })?;
    let (r, se) = m.ratio();
    if !r[0].is_finite() {
        return Err(Error::DomainError(
            "potential sample hit the singularity".into(),
        ));
    }
    Ok(Estimate {
        value: r[0],
        std_error: se[0],
    })
}

/// Total mass of the homeoidal measure `δ(q) dV` on `e`.
pub fn homeoidal_mass(e: &CurvedEllipsoid, opts: &SamplerOptions) -> Result<Estimate> {
    let n = e.geometry.dim();
    let area = unit_sphere_area(n - 1);
    let m = monte_carlo(opts, 1, |rng| {
        let (_, w) = e.point_over(&random_unit(rng, n));
        (1.0, vec![w])
    })?;
    let (r, se) = m.ratio();
    Ok(Estimate {
        value: area * r[0],
        std_error: area * se[0],
    })
}

/// Field `−∇U` at `x` of the unit homeoidal charge on `e`.
pub fn field_at(e: &CurvedEllipsoid, x: &[f64], opts: &SamplerOptions) -> Result<FieldEstimate> {
    let g = e.geometry;
    g.check_point(x)?;
    let d = e.distance_estimate(x);
    if d < 1e-3 {
        return Err(Error::TooCloseToSurface(d));
    }
    let n = g.dim();
    let m = monte_carlo(opts, n + 1, |rng| {
        let (y, w) = e.point_over(&random_unit(rng, n));
        let (d, t) = distance_and_direction(g, x, &y);
        let du = -radial_scale(g, d).powi(1 - n as i32);
        (w, t.iter().map(|v| du * v).collect())
    })?;
    let (r, se) = m.ratio();
    Ok(FieldEstimate::new(g, r, se))
}

/// Field `−∇u` at `x` of a unit point charge at `c`.
pub fn point_field(geometry: Geometry, c: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    geometry.check_point(x)?;
    geometry.check_point(c)?;
    let (d, t) = distance_and_direction(geometry, x, c);
    let du = point_potential_derivative(geometry, d)?;
    Ok(t.iter().map(|v| du * v).collect())
}

/// Free-function form of [`CurvedEllipsoid::f_lambda`].
pub fn f_lambda(e: &CurvedEllipsoid, lambda: f64) -> Result<DiagonalMap> {
    e.f_lambda(lambda)
}

/// Free-function form of [`CurvedEllipsoid::homeoidal_density`].
pub fn homeoidal_density(e: &CurvedEllipsoid, x: &[f64]) -> Result<f64> {
    e.homeoidal_density(x)
}

/// Free-function form of [`Homeoid::chord_segments`].
pub fn chord_segments(h: &Homeoid, x: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    h.chord_segments(x, v)
}
