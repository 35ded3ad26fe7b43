//! Hyperbolic polynomials, the root-sum identities behind Arnold's theorem,
//! and Monte-Carlo fields of standard layers.
//!
//! Dense coefficient lists are in graded lexicographic order: all monomials
//! of degree 0, then degree 1, and so on; within a degree, larger powers of
//! the first variable come first. In two variables up to degree 2 that is
//! `1, x, y, x², xy, y²`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{inner, monte_carlo, norm_in, unit_sphere_area, FieldEstimate, SamplerOptions};
use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::quadrics::Geometry;

/// Exponent vectors of all monomials of degree at most `degree`, in graded
/// lexicographic order.
pub fn monomials(nvars: usize, degree: usize) -> Vec<Vec<u32>> {
    fn of_degree(nvars: usize, k: u32) -> Vec<Vec<u32>> {
        if nvars == 1 {
            return vec![vec![k]];
        }
        let mut out = Vec::new();
        for e in (0..=k).rev() {
            for mut rest in of_degree(nvars - 1, k - e) {
                rest.insert(0, e);
                out.push(rest);
            }
        }
        out
    }
    (0..=degree as u32)
        .flat_map(|k| of_degree(nvars, k))
        .collect()
}

/// A real polynomial in several variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl Polynomial {
    /// From a dense graded-lexicographic coefficient list; its length must be
    /// the number of monomials up to some degree.
    pub fn from_graded_lex(nvars: usize, coeffs: &[f64]) -> Result<Self> {
        if nvars == 0 {
            return Err(Error::InvalidParameters(
                "a polynomial needs at least one variable".into(),
            ));
        }
        let mut d = 0;
        loop {
            let count = monomials(nvars, d).len();
            if count == coeffs.len() {
                break;
            }
            if count > coeffs.len() {
                return Err(Error::InvalidParameters(format!(
                    "{} coefficients do not fill the monomials of any degree in {nvars} variables",
                    coeffs.len()
                )));
            }
            d += 1;
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameters("non-finite coefficient".into()));
        }
        let terms = monomials(nvars, d)
            .into_iter()
            .zip(coeffs)
            .filter(|(_, c)| **c != 0.0)
            .map(|(e, c)| (e, *c))
            .collect();
        Ok(Self { nvars, terms })
    }

    /// From explicit `(exponents, coefficient)` pairs.
    pub fn from_terms(nvars: usize, terms: Vec<(Vec<u32>, f64)>) -> Result<Self> {
        if terms
            .iter()
            .any(|(e, c)| e.len() != nvars || !c.is_finite())
        {
            return Err(Error::InvalidParameters("malformed term".into()));
        }
        Ok(Self {
            nvars,
            terms: terms.into_iter().filter(|t| t.1 != 0.0).collect(),
        })
    }

    /// The product of two polynomials in the same variables.
    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut terms: Vec<(Vec<u32>, f64)> = Vec::new();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                let e: Vec<u32> = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                match terms.iter_mut().find(|t| t.0 == e) {
                    Some(t) => t.1 += c1 * c2,
                    None => terms.push((e, c1 * c2)),
                }
            }
        }
        Polynomial {
            nvars: self.nvars,
            terms,
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.terms
            .iter()
            .map(|(e, _)| e.iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn is_homogeneous(&self) -> bool {
        let d = self.degree();
        self.terms
            .iter()
            .all(|(e, _)| e.iter().sum::<u32>() as usize == d)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(x)
                    .map(|(&k, v)| v.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nvars)
            .map(|i| {
                self.terms
                    .iter()
                    .filter(|(e, _)| e[i] > 0)
                    .map(|(e, c)| {
                        let mono: f64 = e
                            .iter()
                            .zip(x)
                            .enumerate()
                            .map(|(j, (&k, v))| {
                                if j == i {
                                    v.powi(k as i32 - 1)
                                } else {
                                    v.powi(k as i32)
                                }
                            })
                            .product();
                        c * f64::from(e[i]) * mono
                    })
                    .sum()
            })
            .collect()
    }

    /// `t ↦ p(x + t v)`.
    pub fn restrict_to_line(&self, x: &[f64], v: &[f64]) -> Poly {
        let mut out = Poly::new(vec![0.0]);
        for (e, c) in &self.terms {
            let mut m = Poly::new(vec![*c]);
            for (i, &k) in e.iter().enumerate() {
                let lin = Poly::new(vec![x[i], v[i]]);
                for _ in 0..k {
                    m = m.mul(&lin);
                }
            }
            out = out.add(&m);
        }
        out
    }
}

/// The zero set of a polynomial of degree `d ≥ 2`; homogeneous in `n + 1`
/// variables on `Sⁿ` and `Hⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicSurface {
    geometry: Geometry,
    p: Polynomial,
}

impl HyperbolicSurface {
    pub fn new(geometry: Geometry, p: Polynomial) -> Result<Self> {
        if p.nvars() != geometry.ambient_dim() {
            return Err(Error::InvalidParameters(format!(
                "polynomial has {} variables, the model needs {}",
                p.nvars(),
                geometry.ambient_dim()
            )));
        }
        if p.degree() < 2 {
            return Err(Error::InvalidParameters("degree must be at least 2".into()));
        }
        if geometry.is_curved() && !p.is_homogeneous() {
            return Err(Error::InvalidParameters(
                "surfaces in Sⁿ and Hⁿ need a homogeneous polynomial".into(),
            ));
        }
        Ok(Self { geometry, p })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn polynomial(&self) -> &Polynomial {
        &self.p
    }

    pub fn degree(&self) -> usize {
        self.p.degree()
    }

    /// `γ(t)` and `γ′(t)` for the unit-speed geodesic through `x` along `v`.
    fn geodesic(&self, x: &[f64], v: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
        let (c, s, dc, ds) = match self.geometry {
            Geometry::Spherical(_) => (t.cos(), t.sin(), -t.sin(), t.cos()),
            Geometry::Hyperbolic(_) => (t.cosh(), t.sinh(), t.sinh(), t.cosh()),
            Geometry::Euclidean(_) => (1.0, t, 0.0, 1.0),
        };
        let at = x.iter().zip(v).map(|(a, b)| c * a + s * b).collect();
        let vel = x.iter().zip(v).map(|(a, b)| dc * a + ds * b).collect();
        (at, vel)
    }

    /// Arc parameters of the points where the geodesic through `x` along `v`
    /// meets the level `{p = level}`, if there are exactly `d` distinct ones.
    /// On `Sⁿ` one point of each antipodal pair is reported, in `(−π/2, π/2]`.
    fn crossings(&self, x: &[f64], v: &[f64], level: f64, imag_tol: f64) -> Option<Vec<f64>> {
        let d = self.degree();
        let mut r = self.p.restrict_to_line(x, v);
        let to_arc: fn(f64) -> f64 = match self.geometry {
            Geometry::Spherical(_) => f64::atan,
            Geometry::Hyperbolic(_) => f64::atanh,
            Geometry::Euclidean(_) => |s| s,
        };
        if level != 0.0 {
            // Along the geodesic p∘γ = cᵈ p(x + s v) with c = cos or cosh.
            let sq = match self.geometry {
                Geometry::Spherical(_) => Some(Poly::new(vec![1.0, 0.0, 1.0])),
                Geometry::Hyperbolic(_) => Some(Poly::new(vec![1.0, 0.0, -1.0])),
                Geometry::Euclidean(_) => None,
            };
            r = match sq {
                None => r.shifted(level),
                Some(sq) => {
                    if d % 2 == 1 {
                        return None;
                    }
                    let mut w = Poly::new(vec![level]);
                    for _ in 0..d / 2 {
                        w = w.mul(&sq);
                    }
                    r.add(&w.scale(-1.0))
                }
            };
        }
        let r = r.trimmed(1e-13);
        let at_infinity = d.saturating_sub(r.degree());
        let roots = r.real_roots(imag_tol).or_else(|| {
            // Companion eigenvalues can smear nearly double roots into
            // complex pairs; the Sturm count decides.
            (r.sturm_real_root_count() == r.degree())
                .then(|| r.real_roots(1e-4))
                .flatten()
        })?;
        let mut ts: Vec<f64> = match self.geometry {
            Geometry::Hyperbolic(_) => {
                if at_infinity > 0 || roots.iter().any(|s| s.abs() >= 1.0) {
                    return None;
                }
                roots.iter().map(|&s| to_arc(s)).collect()
            }
            Geometry::Spherical(_) => {
                if at_infinity > 1 {
                    return None;
                }
                let mut t: Vec<f64> = roots.iter().map(|&s| to_arc(s)).collect();
                if at_infinity == 1 {
                    t.push(std::f64::consts::FRAC_PI_2);
                }
                t
            }
            Geometry::Euclidean(_) => {
                if at_infinity > 1 {
                    return None;
                }
                roots.clone()
            }
        };
        ts.sort_by(f64::total_cmp);
        let scale = 1.0 + ts.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        let distinct = ts.windows(2).all(|w| w[1] - w[0] > 1e-9 * scale);
        let count = ts.len()
            + if matches!(self.geometry, Geometry::Euclidean(_)) {
                at_infinity
            } else {
                0
            };
        (count == d && distinct).then_some(ts)
    }

    /// Orthonormal basis of the tangent space at `x`.
    fn tangent_frame(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let m = x.len();
        let g = self.geometry;
        let mut frame: Vec<Vec<f64>> = Vec::new();
        let mut against: Vec<Vec<f64>> = Vec::new();
        if g.is_curved() {
            let nx = inner(g, x, x).abs().sqrt();
            against.push(x.iter().map(|v| v / nx).collect());
        }
        for k in 0..m {
            let mut v = vec![0.0; m];
            v[k] = 1.0;
            for w in against.iter().chain(&frame) {
                let c = inner(g, &v, w) / inner(g, w, w);
                v.iter_mut().zip(w).for_each(|(a, b)| *a -= c * b);
            }
            let nv = inner(g, &v, &v);
            if nv > 1e-8 {
                frame.push(v.iter().map(|a| a / nv.sqrt()).collect());
            }
            if frame.len() == g.dim() {
                break;
            }
        }
        frame
    }
}

/// Probing of hyperbolicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperbolicityOptions {
    pub probes: usize,
    pub seed: u64,
    /// Imaginary-part threshold (relative to `1 + |z|`) for a real root.
    pub imag_tol: f64,
}

impl Default for HyperbolicityOptions {
    fn default() -> Self {
        Self {
            probes: 64,
            seed: 0,
            imag_tol: 1e-8,
        }
    }
}

/// Verdict of [`is_hyperbolic_at`]; `witness` is a probed direction with too
/// few distinct crossings.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperbolicity {
    pub hyperbolic: bool,
    pub witness: Option<Vec<f64>>,
}

fn unit_gaussian(rng: &mut ChaCha8Rng, frame: &[Vec<f64>], geometry: Geometry) -> Vec<f64> {
    loop {
        let c: Vec<f64> = frame.iter().map(|_| StandardNormal.sample(rng)).collect();
        let mut v = vec![0.0; frame[0].len()];
        for (ck, e) in c.iter().zip(frame) {
            v.iter_mut().zip(e).for_each(|(a, b)| *a += ck * b);
        }
        let r = norm_in(geometry, &v);
        if r > 1e-12 {
            return v.iter().map(|a| a / r).collect();
        }
    }
}

/// Probabilistic test that every geodesic through `x` meets the level
/// `{p = level}` in `d` distinct points. Probes the frame directions and
/// `opts.probes` random ones.
fn hyperbolic_at_level(
    s: &HyperbolicSurface,
    x: &[f64],
    level: f64,
    opts: &HyperbolicityOptions,
) -> Result<Hyperbolicity> {
    s.geometry.check_point(x)?;
    if s.p.eval(x) == level {
        return Err(Error::InvalidParameters("point lies on the surface".into()));
    }
    let frame = s.tangent_frame(x);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut dirs = frame.clone();
    for _ in 0..opts.probes {
        dirs.push(unit_gaussian(&mut rng, &frame, s.geometry));
    }
    for v in dirs {
        if s.crossings(x, &v, level, opts.imag_tol).is_none() {
            return Ok(Hyperbolicity {
                hyperbolic: false,
                witness: Some(v),
            });
        }
    }
    Ok(Hyperbolicity {
        hyperbolic: true,
        witness: None,
    })
}

/// Whether the surface is (strictly) hyperbolic with respect to `x`.
///
/// The verdict is probabilistic: a `true` means no probed direction failed.
pub fn is_hyperbolic_at(
    s: &HyperbolicSurface,
    x: &[f64],
    opts: &HyperbolicityOptions,
) -> Result<Hyperbolicity> {
    hyperbolic_at_level(s, x, 0.0, opts)
}

/// `Σ (tᵢ − tᵢ^ε)` over the roots of `p` and of `p − ε`.
pub fn vieta_segment_sum(p: &Poly, eps: f64) -> Result<f64> {
    let d = p.degree();
    if d < 2 {
        return Err(Error::InvalidParameters("degree must be at least 2".into()));
    }
    let t0 = p.real_roots(1e-8).ok_or(Error::ComplexRoots)?;
    let t1 = p.shifted(eps).real_roots(1e-8).ok_or(Error::ComplexRoots)?;
    Ok(t0.iter().sum::<f64>() - t1.iter().sum::<f64>())
}

/// Root-sum identity for a binary form `p = Σ cₖ x^{d−k} yᵏ` (coefficients
/// in that order).
///
/// On `S¹` the points are taken on a half circle `[t₀, t₀ + π)` whose ends
/// avoid the zeros of `p`; `t` is arc length from `(1, 0)`. On `H¹` the
/// coordinates are light-cone ones, `H¹ = {xy = 1, x > 0}`, with arc length
/// `t = log x`.
///
/// Even `d` returns `Σ (tᵢ − tᵢ^ε)`, odd `d` (spherical only) returns
/// `Σ (tᵢ − (tᵢ^{−ε} + tᵢ^ε)/2)`.
pub fn curved_segment_sum(coeffs: &[f64], eps: f64, geometry: Geometry) -> Result<f64> {
    let d = coeffs
        .len()
        .checked_sub(1)
        .ok_or_else(|| Error::InvalidParameters("empty form".into()))?;
    if d < 2 {
        return Err(Error::InvalidParameters("degree must be at least 2".into()));
    }
    match geometry {
        Geometry::Hyperbolic(1) => {
            if d % 2 == 1 {
                return Err(Error::OddDegreeHyperbolic);
            }
            // x^d p(x, 1/x) = Σ cₖ x^{2(d−k)}; the level ε adds −ε xᵈ.
            let mut c = vec![0.0; 2 * d + 1];
            for (k, ck) in coeffs.iter().enumerate() {
                c[2 * (d - k)] = *ck;
            }
            let big_p = Poly::new(c.clone());
            c[d] -= eps;
            let big_pe = Poly::new(c);
            let logs = |q: &Poly| -> Result<Vec<f64>> {
                let pos: Vec<f64> = q
                    .roots()
                    .iter()
                    .filter(|z| z.im.abs() <= 1e-8 * (1.0 + z.norm()) && z.re > 0.0)
                    .map(|z| z.re.ln())
                    .collect();
                if pos.len() != d {
                    return Err(Error::ComplexRoots);
                }
                Ok(pos)
            };
            Ok(logs(&big_p)?.iter().sum::<f64>() - logs(&big_pe)?.iter().sum::<f64>())
        }
        Geometry::Spherical(1) => {
            use std::f64::consts::PI;
            let f = |t: f64| {
                let (c, s) = (t.cos(), t.sin());
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, ck)| ck * c.powi((d - k) as i32) * s.powi(k as i32))
                    .sum::<f64>()
            };
            // Zeros of p on [0, π) through p(1, s) with s = tan t.
            let r = Poly::new(coeffs.to_vec()).trimmed(1e-13);
            let mut zeros: Vec<f64> = r
                .real_roots(1e-8)
                .ok_or(Error::ComplexRoots)?
                .iter()
                .map(|s| s.atan().rem_euclid(PI))
                .collect();
            if r.degree() < d {
                zeros.push(0.5 * PI);
            }
            if zeros.len() != d {
                return Err(Error::ComplexRoots);
            }
            zeros.sort_by(f64::total_cmp);
            let mut gap = (zeros[0] + PI - zeros[d - 1], zeros[d - 1]);
            for w in zeros.windows(2) {
                if w[1] - w[0] > gap.0 {
                    gap = (w[1] - w[0], w[0]);
                }
            }
            let t0 = gap.1 + 0.5 * gap.0;
            let level = |e: f64| -> Result<Vec<f64>> {
                let steps = 512 * d;
                let h = PI / steps as f64;
                let g = |t: f64| f(t) - e;
                let mut out = Vec::new();
                for k in 0..steps {
                    let (a, b) = (t0 + k as f64 * h, t0 + (k + 1) as f64 * h);
                    if let Some(t) = crate::poly::bracketed_root(g, a, b) {
                        out.push(t);
                    }
                }
                out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
                if out.len() != d {
                    return Err(Error::ComplexRoots);
                }
                Ok(out)
            };
            let base: f64 = level(0.0)?.iter().sum();
            if d % 2 == 0 {
                Ok(base - level(eps)?.iter().sum::<f64>())
            } else {
                Ok(base
                    - 0.5 * (level(eps)?.iter().sum::<f64>() + level(-eps)?.iter().sum::<f64>()))
            }
        }
        _ => Err(Error::InvalidParameters(
            "curved segment sums live on S¹ or H¹".into(),
        )),
    }
}

/// Charge carried by a hyperbolic surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Charge {
    /// Density `1/‖grad p‖`.
    Standard,
    /// Unit density on `{0 ≤ p ≤ ε}` (or `{ε ≤ p ≤ 0}`).
    Layer(f64),
}

/// Field `−∇U` at `x` of the signed standard charge, by Monte Carlo over
/// geodesic rays from `x`.
///
/// Along a ray the area element cancels the decay of the point field, so a
/// ray contributes `−v Σ sᵢ ℓᵢ`: the signed lengths of its layer segments,
/// positive when the zero level is the nearer end. The standard charge is
/// the `ε → 0` limit `ℓᵢ ≈ ε/|(p∘γ)′(tᵢ)|`.
pub fn arnold_field_check(
    s: &HyperbolicSurface,
    charge: Charge,
    x: &[f64],
    opts: &SamplerOptions,
    hopts: &HyperbolicityOptions,
) -> Result<FieldEstimate> {
    let g = s.geometry;
    let d = s.degree();
    if let (Geometry::Hyperbolic(_), 1) = (g, d % 2) {
        return Err(Error::OddDegreeHyperbolic);
    }
    let eps = match charge {
        Charge::Standard => None,
        Charge::Layer(_) if g.is_curved() && d % 2 == 1 => {
            return Err(Error::InvalidParameters(
                "odd-degree layers on Sⁿ are not supported".into(),
            ))
        }
        Charge::Layer(e) if e != 0.0 && e.is_finite() => Some(e),
        Charge::Layer(e) => return Err(Error::InvalidParameters(format!("layer thickness {e}"))),
    };
    if !is_hyperbolic_at(s, x, hopts)?.hyperbolic {
        return Err(Error::NotInHyperbolicityDomain);
    }
    if let Some(e) = eps {
        if !hyperbolic_at_level(s, x, e, hopts)?.hyperbolic {
            return Err(Error::NotInHyperbolicityDomain);
        }
    }
    let frame = s.tangent_frame(x);
    let area = unit_sphere_area(g.dim() - 1);
    let m = x.len();
    let on_ray = |t: f64| t > 0.0;
    // Arc parameter along the ray; on Sⁿ the ray is t ∈ (0, π).
    let ray_param = |t: f64| match g {
        Geometry::Spherical(_) if t < 0.0 => t + std::f64::consts::PI,
        _ => t,
    };
    let failed = std::sync::atomic::AtomicBool::new(false);
    let moments = monte_carlo(opts, m, |rng| {
        let v = unit_gaussian(rng, &frame, g);
        let Some(t0) = s.crossings(x, &v, 0.0, hopts.imag_tol) else {
            failed.store(true, std::sync::atomic::Ordering::Relaxed);
            return (1.0, vec![0.0; m]);
        };
        let weight: f64 = match eps {
            Some(e) => {
                let Some(t1) = s.crossings(x, &v, e, hopts.imag_tol) else {
                    failed.store(true, std::sync::atomic::Ordering::Relaxed);
                    return (1.0, vec![0.0; m]);
                };
                t0.iter()
                    .zip(&t1)
                    .map(|(&a, &b)| (ray_param(a), ray_param(b)))
                    .filter(|(a, _)| on_ray(*a))
                    .map(|(a, b)| (b - a) / e)
                    .sum()
            }
            None => t0
                .iter()
                .map(|&t| ray_param(t))
                .filter(|&t| on_ray(t))
                .map(|t| {
                    let (y, vel) = s.geodesic(x, &v, t);
                    let grad = s.p.gradient(&y);
                    1.0 / grad.iter().zip(&vel).map(|(a, b)| a * b).sum::<f64>()
                })
                .sum(),
        };
        (1.0, v.iter().map(|a| -area * weight * a).collect())
    })?;
    if failed.load(std::sync::atomic::Ordering::Relaxed) {
        return Err(Error::NotInHyperbolicityDomain);
    }
    let (r, se) = moments.ratio();
    Ok(FieldEstimate::new(g, r, se))
}
