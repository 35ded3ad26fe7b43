//! Billiards in confocal conics.
//!
//! A [`PlanarNet`] is the confocal family `x²/(a₁ − λ) + y²/(a₂ − λ) = 1`
//! with `a₁ ≥ a₂ > 0`. Its elliptic coordinates are `(e, h)` with
//! `e < a₂ < h < a₁`: `e` labels the confocal ellipse through a point and `h`
//! the confocal hyperbola. When `a₁ = a₂` the family is concentric circles
//! and `h` is replaced by the polar angle.
//!
//! Lines are [`OrientedLine`]s `{x : n·x = p}` with direction
//! `d = (cos α, sin α)` and normal `n = (−sin α, cos α)`. The parameter of
//! the confocal conic tangent to such a line is
//! `λ = a₁n_x² + a₂n_y² − p²`.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};
use crate::quadrics::spread;

pub type Point = [f64; 2];

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn dist(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    d[0].hypot(d[1])
}

/// An oriented line in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedLine {
    /// Direction angle in `[0, 2π)`.
    pub alpha: f64,
    /// Signed distance from the origin.
    pub p: f64,
}

impl OrientedLine {
    pub fn new(alpha: f64, p: f64) -> Self {
        Self {
            alpha: alpha.rem_euclid(TAU),
            p,
        }
    }

    /// The line through `x` with direction `d` (need not be normalized).
    pub fn through(x: Point, d: Point) -> Self {
        let alpha = d[1].atan2(d[0]);
        let n = [-alpha.sin(), alpha.cos()];
        Self::new(alpha, dot(n, x))
    }

    pub fn through_points(x: Point, y: Point) -> Self {
        Self::through(x, sub(y, x))
    }

    pub fn direction(&self) -> Point {
        [self.alpha.cos(), self.alpha.sin()]
    }

    pub fn normal(&self) -> Point {
        [-self.alpha.sin(), self.alpha.cos()]
    }

    /// Foot of the perpendicular from the origin.
    pub fn base_point(&self) -> Point {
        let n = self.normal();
        [self.p * n[0], self.p * n[1]]
    }

    pub fn point_at(&self, t: f64) -> Point {
        let (b, d) = (self.base_point(), self.direction());
        [b[0] + t * d[0], b[1] + t * d[1]]
    }

    /// Arc-length parameter of the projection of `x` onto the line.
    pub fn param_of(&self, x: Point) -> f64 {
        dot(sub(x, self.base_point()), self.direction())
    }

    /// Signed distance of `x` from the line, positive on the normal side.
    pub fn signed_distance(&self, x: Point) -> f64 {
        dot(self.normal(), x) - self.p
    }

    /// The same line with the opposite orientation.
    pub fn reversed(&self) -> Self {
        Self::new(self.alpha + PI, -self.p)
    }

    pub fn intersect(&self, other: &OrientedLine) -> Option<Point> {
        let (n1, n2) = (self.normal(), other.normal());
        let det = n1[0] * n2[1] - n1[1] * n2[0];
        if det.abs() < 1e-14 {
            return None;
        }
        Some([
            (self.p * n2[1] - other.p * n1[1]) / det,
            (n1[0] * other.p - n2[0] * self.p) / det,
        ])
    }

    /// Distance between phase points, comparing angles on the circle.
    pub fn phase_gap(&self, other: &OrientedLine) -> f64 {
        let mut da = (self.alpha - other.alpha).rem_euclid(TAU);
        if da > PI {
            da = TAU - da;
        }
        da.hypot(self.p - other.p)
    }
}

/// Kind of conic a line is tangent to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CausticKind {
    Ellipse,
    Hyperbola,
    /// The line passes through a focus (or the centre of a concentric net,
    /// or lies on the minor axis).
    Focal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CausticTag {
    pub lambda: f64,
    pub kind: CausticKind,
}

/// Canonical coordinate on an invariant curve, normalized to `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalCoord {
    pub x: f64,
    /// Branch (`±1`, sign of the abscissa) for hyperbola caustics.
    pub branch: Option<i8>,
    /// `+1` if the line runs in the direction of increasing `x`.
    pub orientation: i8,
}

/// A curve that can act as a mirror.
pub trait MirrorCurve {
    /// Defining function; the mirror is its zero set.
    fn value(&self, x: Point) -> f64;
    fn gradient(&self, x: Point) -> Point;
    /// Parameters `t` at which `line.point_at(t)` lies on the mirror,
    /// together with a flag for tangential contact.
    fn intersections(&self, line: &OrientedLine) -> Vec<(f64, bool)>;
}

/// A member of a planar confocal net used as a mirror.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mirror {
    /// Confocal ellipse `e = λ` (a circle in a concentric net).
    Ellipse(f64),
    /// One branch of the confocal hyperbola `h = λ`; `branch` is the sign of
    /// the abscissa.
    Hyperbola { lambda: f64, branch: i8 },
    /// Line through the centre at polar angle `θ` (concentric nets).
    Radial(f64),
}

/// A mirror bound to its net.
#[derive(Debug, Clone, Copy)]
pub struct NetMirror {
    pub net: PlanarNet,
    pub mirror: Mirror,
}

impl MirrorCurve for NetMirror {
    fn value(&self, x: Point) -> f64 {
        match self.mirror {
            Mirror::Ellipse(l) | Mirror::Hyperbola { lambda: l, .. } => {
                x[0] * x[0] / (self.net.a1 - l) + x[1] * x[1] / (self.net.a2 - l) - 1.0
            }
            Mirror::Radial(th) => -th.sin() * x[0] + th.cos() * x[1],
        }
    }

    fn gradient(&self, x: Point) -> Point {
        match self.mirror {
            Mirror::Ellipse(l) | Mirror::Hyperbola { lambda: l, .. } => [
                2.0 * x[0] / (self.net.a1 - l),
                2.0 * x[1] / (self.net.a2 - l),
            ],
            Mirror::Radial(th) => [-th.sin(), th.cos()],
        }
    }

    fn intersections(&self, line: &OrientedLine) -> Vec<(f64, bool)> {
        let (b, d) = (line.base_point(), line.direction());
        match self.mirror {
            Mirror::Ellipse(l) | Mirror::Hyperbola { lambda: l, .. } => {
                let (ca, cb) = (1.0 / (self.net.a1 - l), 1.0 / (self.net.a2 - l));
                let qa = ca * d[0] * d[0] + cb * d[1] * d[1];
                let qb = ca * b[0] * d[0] + cb * b[1] * d[1];
                let qc = ca * b[0] * b[0] + cb * b[1] * b[1] - 1.0;
                let mut ts = Vec::new();
                if qa.abs() < 1e-300 {
                    if qb != 0.0 {
                        ts.push((-qc / (2.0 * qb), false));
                    }
                } else {
                    // disc/qa² is the squared half-length of the chord.
                    let disc = qb * qb - qa * qc;
                    let centre = qb / qa;
                    if disc.abs() <= 1e-12 * qa * qa * (1.0 + centre * centre) {
                        ts.push((-qb / qa, true));
                    } else if disc > 0.0 {
                        let s = disc.sqrt();
                        // Stable pair of roots.
                        let q = -(qb + qb.signum() * s);
                        let (t1, t2) = if q == 0.0 {
                            (s / qa, -s / qa)
                        } else {
                            (q / qa, qc / q)
                        };
                        ts.push((t1, false));
                        ts.push((t2, false));
                    }
                }
                if let Mirror::Hyperbola { branch, .. } = self.mirror {
                    ts.retain(|&(t, _)| line.point_at(t)[0] * f64::from(branch) > 0.0);
                }
                ts
            }
            Mirror::Radial(th) => {
                let n = [-th.sin(), th.cos()];
                let nd = dot(n, d);
                if nd.abs() < 1e-14 {
                    Vec::new()
                } else {
                    vec![(-dot(n, b) / nd, false)]
                }
            }
        }
    }
}

/// Result of a single reflection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflection {
    pub line: OrientedLine,
    pub point: Point,
    /// Set when the line only touches the mirror; `line` is then the input.
    pub tangent_hit: bool,
}

/// Reflects `line` in `mirror`.
///
/// With `origin = None` the forward-most intersection is used, which is the
/// exit point of a chord of a convex table. With an origin on the line, the
/// nearest intersection strictly ahead of the origin is used.
pub fn reflect_in<M: MirrorCurve + ?Sized>(
    line: &OrientedLine,
    mirror: &M,
    origin: Option<Point>,
) -> Result<Reflection> {
    let mut hits = mirror.intersections(line);
    if let Some(o) = origin {
        let t0 = line.param_of(o);
        let eps = 1e-9 * (1.0 + t0.abs());
        hits.retain(|&(t, _)| t > t0 + eps);
        hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    } else {
        hits.sort_by(|a, b| b.0.total_cmp(&a.0));
    }
    let &(t, tangent) = hits.first().ok_or(Error::NoIntersection)?;
    let x = line.point_at(t);
    if tangent {
        return Ok(Reflection {
            line: *line,
            point: x,
            tangent_hit: true,
        });
    }
    let g = mirror.gradient(x);
    let gn = g[0].hypot(g[1]);
    let nh = [g[0] / gn, g[1] / gn];
    let d = line.direction();
    let k = 2.0 * dot(d, nh);
    let out = [d[0] - k * nh[0], d[1] - k * nh[1]];
    Ok(Reflection {
        line: OrientedLine::through(x, out),
        point: x,
        tangent_hit: false,
    })
}

/// Elliptic coordinates of a point in a [`PlanarNet`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetCoords {
    /// Ellipse coordinate, `e < a₂`.
    pub e: f64,
    /// Hyperbola coordinate in `[a₂, a₁]`, or the polar angle for concentric
    /// nets.
    pub h: f64,
}

/// Vertices and diagonals of a quadrilateral cut out by two confocal ellipses
/// and two confocal hyperbolas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvoryQuadrilateral {
    pub e: [f64; 2],
    pub h: [f64; 2],
    /// `A = (e₁,h₁)`, `B = (e₁,h₂)`, `C = (e₂,h₂)`, `D = (e₂,h₁)`.
    pub vertices: [Point; 4],
    pub ac: f64,
    pub bd: f64,
    /// Caustic parameter of the line `BD`.
    pub caustic_bd: f64,
    /// Caustic parameter of the line `AC`.
    pub caustic_ac: f64,
}

impl IvoryQuadrilateral {
    pub fn a(&self) -> Point {
        self.vertices[0]
    }
    pub fn b(&self) -> Point {
        self.vertices[1]
    }
    pub fn c(&self) -> Point {
        self.vertices[2]
    }
    pub fn d(&self) -> Point {
        self.vertices[3]
    }
}

/// A closed four-bounce orbit in an Ivory quadrilateral.
#[derive(Debug, Clone, PartialEq)]
pub struct FourPeriodic {
    /// Bounce points `P, Q, R, S`.
    pub points: [Point; 4],
    pub perimeter: f64,
    /// Distance between the start point and the fourth bounce plus the angle
    /// gap of the final direction.
    pub closure_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircumscribedReport {
    pub a: Point,
    pub b: Point,
    pub c: Point,
    pub d: Point,
    pub center: Point,
    pub radius: f64,
    /// `|AD| − |AC| + |BC| − |BD|` with each length signed along its line,
    /// the lines oriented counter-clockwise about the caustic. This form
    /// vanishes in every configuration.
    pub perimeter_residual: f64,
    /// The same combination of plain lengths. It agrees with the signed form
    /// when `C` and `D` lie between the tangency points and `A`, `B`.
    pub unsigned_residual: f64,
    /// Largest deviation of the circle from tangency with the four lines.
    pub tangency_residual: f64,
    /// Hyperbola coordinates of `C` and `D`.
    pub h_c: f64,
    pub h_d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PonceletGrid {
    pub lines: Vec<OrientedLine>,
    /// Points `ℓᵢ ∩ ℓᵢ₊ₖ` for `k = 1..=⌊(q−1)/2⌋`, one set per `k`.
    pub concentric_sets: Vec<Vec<Point>>,
    /// Mean ellipse coordinate of each concentric set.
    pub concentric_lambda: Vec<f64>,
    pub concentric_spread: f64,
    /// Points `ℓᵢ ∩ ℓⱼ` with `i + j ≡ s (mod q)`, one set per `s`.
    pub radial_sets: Vec<Vec<Point>>,
    pub radial_lambda: Vec<f64>,
    pub radial_spread: f64,
    /// Largest `|AD| − |AC| + |BC| − |BD|` over grid quadrilaterals.
    pub quadrilateral_residual: f64,
    pub quadrilaterals: usize,
}

/// Confocal conics `x²/(a₁ − λ) + y²/(a₂ − λ) = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarNet {
    pub a1: f64,
    pub a2: f64,
}

fn opts() -> QuadOptions {
    QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-14,
        max_intervals: 2000,
    }
}

impl PlanarNet {
    pub fn new(a1: f64, a2: f64) -> Result<Self> {
        if !(a1 >= a2 && a2 > 0.0 && a1.is_finite()) {
            return Err(Error::InvalidParameters(format!(
                "need a1 >= a2 > 0, got ({a1}, {a2})"
            )));
        }
        Ok(Self { a1, a2 })
    }

    pub fn is_concentric(&self) -> bool {
        self.a1 == self.a2
    }

    /// Foci `(±√(a₁ − a₂), 0)`.
    pub fn foci(&self) -> [Point; 2] {
        let c = (self.a1 - self.a2).sqrt();
        [[c, 0.0], [-c, 0.0]]
    }

    pub fn coords(&self, x: Point) -> NetCoords {
        let (x2, y2) = (x[0] * x[0], x[1] * x[1]);
        if self.is_concentric() {
            return NetCoords {
                e: self.a1 - x2 - y2,
                h: x[1].atan2(x[0]),
            };
        }
        let s = self.a1 + self.a2 - x2 - y2;
        let p = self.a1 * self.a2 - self.a2 * x2 - self.a1 * y2;
        let dd = self.a1 - self.a2 - x2 + y2;
        let disc = (dd * dd + 4.0 * x2 * y2).sqrt();
        let h = 0.5 * (s + disc);
        NetCoords {
            e: p / h,
            h: h.clamp(self.a2, self.a1),
        }
    }

    /// Point with coordinates `(e, h)` in the quadrant given by the signs.
    pub fn point(&self, c: NetCoords, sx: f64, sy: f64) -> Result<Point> {
        if self.is_concentric() {
            if c.e > self.a1 {
                return Err(Error::NoRealPoint(format!("e = {} above a", c.e)));
            }
            let r = (self.a1 - c.e).sqrt();
            return Ok([r * c.h.cos(), r * c.h.sin()]);
        }
        let d = self.a1 - self.a2;
        let x2 = (self.a1 - c.e) * (self.a1 - c.h) / d;
        let y2 = (self.a2 - c.e) * (c.h - self.a2) / d;
        let tol = -1e-14 * (1.0 + self.a1.abs());
        if x2 < tol || y2 < tol {
            return Err(Error::NoRealPoint(format!("(e, h) = ({}, {})", c.e, c.h)));
        }
        Ok([
            sx.signum() * x2.max(0.0).sqrt(),
            sy.signum() * y2.max(0.0).sqrt(),
        ])
    }

    pub fn caustic_parameter(&self, line: &OrientedLine) -> f64 {
        let n = line.normal();
        self.a1 * n[0] * n[0] + self.a2 * n[1] * n[1] - line.p * line.p
    }

    pub fn caustic_of_line(&self, line: &OrientedLine) -> CausticTag {
        let lambda = self.caustic_parameter(line);
        let tol = 1e-12 * self.a1.max(1.0);
        let kind = if (lambda - self.a2).abs() <= tol || (lambda - self.a1).abs() <= tol {
            CausticKind::Focal
        } else if lambda < self.a2 {
            CausticKind::Ellipse
        } else {
            CausticKind::Hyperbola
        };
        CausticTag { lambda, kind }
    }

    /// The two lines through `x` tangent to the conic `λ`, oriented so that
    /// the caustic lies on the left, i.e. counter-clockwise for an ellipse.
    pub fn tangent_lines_from(&self, x: Point, lambda: f64) -> Result<[OrientedLine; 2]> {
        // n = (cos β, sin β) with nᵀ (diag(a₁−λ, a₂−λ) − x xᵀ) n = 0.
        let m11 = self.a1 - lambda - x[0] * x[0];
        let m22 = self.a2 - lambda - x[1] * x[1];
        let m12 = -x[0] * x[1];
        let disc = m12 * m12 - m11 * m22;
        if disc < 0.0 {
            return Err(Error::InsideCaustic);
        }
        let s = disc.sqrt();
        let betas: [f64; 2] = if m22.abs() >= m11.abs() {
            // tan β = (−m12 ± s)/m22
            [(-m12 + s).atan2(m22), (-m12 - s).atan2(m22)]
        } else {
            // cot β = (−m12 ± s)/m11
            [m11.atan2(-m12 + s), m11.atan2(-m12 - s)]
        };
        let mut out = [OrientedLine::new(0.0, 0.0); 2];
        for (k, &b) in betas.iter().enumerate() {
            let n = [b.cos(), b.sin()];
            let mut l = OrientedLine::new(b - 0.5 * PI, dot(n, x));
            // The origin is on the left exactly when p < 0.
            if l.p > 0.0 {
                l = l.reversed();
            }
            out[k] = l;
        }
        Ok(out)
    }

    fn ellipse_axes(&self, lambda_c: f64) -> Result<(f64, f64)> {
        let (a, b) = (self.a1 - lambda_c, self.a2 - lambda_c);
        if !(b > 0.0) {
            return Err(Error::InvalidParameters(format!(
                "λ = {lambda_c} is not an ellipse of the net"
            )));
        }
        Ok((a, b))
    }

    /// `G(ψ) = ∫₀^ψ dφ/√(a₂ − λ_c + (a₁ − a₂) sin²φ)`, the canonical measure
    /// on an ellipse caustic in its eccentric angle.
    pub fn ellipse_measure(&self, lambda_c: f64, psi: f64) -> Result<f64> {
        let (_, b) = self.ellipse_axes(lambda_c)?;
        let d = self.a1 - self.a2;
        let f = |t: f64| 1.0 / (b + d * t.sin().powi(2)).sqrt();
        let turns = (psi / PI).floor();
        let rest = psi - turns * PI;
        let half = integrate(f, 0.0, PI, opts())?.value;
        Ok(turns * half + integrate(f, 0.0, rest, opts())?.value)
    }

    fn hyperbola_measure(&self, lambda_c: f64, theta: f64) -> Result<f64> {
        let c = lambda_c - self.a2;
        let d = self.a1 - self.a2;
        let f = |t: f64| 1.0 / (c * t.cos().powi(2) + d * t.sin().powi(2)).sqrt();
        Ok(integrate(f, 0.0, theta, opts())?.value)
    }

    /// Canonical coordinate of a line tangent to the caustic `λ_c`.
    ///
    /// The coordinate depends on the tangency point only.
    /// Ellipse caustics: `x = G(ψ)/G(2π)` where `ψ` is the eccentric angle
    /// of the tangency point; the base point is the positive major-axis
    /// vertex. Hyperbola caustics: each branch separately, with
    /// `θ = atan(y/√(λ_c − a₂))` and `x = ½ + G_h(θ)/G_h(total)`.
    ///
    /// Reflection in a confocal ellipse maps `x ↦ x + σc` with `σ` the
    /// orientation; reflection in a confocal hyperbola maps `x ↦ ±b − x`, with the sign of
    /// the ordinate of the reflection point, and reverses the orientation.
    pub fn canonical_coordinate(
        &self,
        lambda_c: f64,
        line: &OrientedLine,
    ) -> Result<CanonicalCoord> {
        let lam = self.caustic_parameter(line);
        let resid = lam - lambda_c;
        if resid.abs() > 1e-8 * self.a1.max(1.0) {
            return Err(Error::NotTangent(resid));
        }
        let n = line.normal();
        let dir = line.direction();
        let (a, b) = (self.a1 - lambda_c, self.a2 - lambda_c);
        let t = [a * n[0] / line.p, b * n[1] / line.p];
        if b > 0.0 {
            let (sa, sb) = (a.sqrt(), b.sqrt());
            let psi = (t[1] / sb).atan2(t[0] / sa).rem_euclid(TAU);
            let tangent = [-sa * psi.sin(), sb * psi.cos()];
            let sigma = dot(tangent, dir).signum();
            let total = self.ellipse_measure(lambda_c, TAU)?;
            let x = (self.ellipse_measure(lambda_c, psi)? / total).rem_euclid(1.0);
            Ok(CanonicalCoord {
                x: x.min(1.0 - f64::EPSILON),
                branch: None,
                orientation: sigma as i8,
            })
        } else if a > 0.0 {
            let c = -b;
            let branch = if t[0] >= 0.0 { 1i8 } else { -1 };
            let theta = (t[1] / c.sqrt()).atan();
            let tangent = [f64::from(branch) * a.sqrt() * theta.sin(), c.sqrt()];
            let sigma = dot(tangent, dir).signum();
            let total = 2.0 * self.hyperbola_measure(lambda_c, 0.5 * PI)?;
            let x = (0.5 + self.hyperbola_measure(lambda_c, theta)? / total).rem_euclid(1.0);
            Ok(CanonicalCoord {
                x,
                branch: Some(branch),
                orientation: sigma as i8,
            })
        } else {
            Err(Error::InvalidParameters(format!(
                "λ = {lambda_c} is not a caustic of the net"
            )))
        }
    }

    /// Exact canonical shift of the billiard map in the confocal ellipse
    /// `λ₀` on lines tangent to the ellipse caustic `λ_c > λ₀`.
    pub fn ellipse_shift(&self, lambda0: f64, lambda_c: f64) -> Result<f64> {
        let (a, b) = self.ellipse_axes(lambda_c)?;
        if !(lambda0 < lambda_c) {
            return Err(Error::InvalidParameters(
                "mirror must enclose the caustic".into(),
            ));
        }
        let top = (lambda_c - lambda0).sqrt();
        let ie = integrate(
            |s: f64| 1.0 / ((a + s * s) * (b + s * s)).sqrt(),
            0.0,
            top,
            opts(),
        )?
        .value;
        let k = self.ellipse_measure(lambda_c, 0.5 * PI)?;
        Ok(2.0 * ie / (4.0 * k))
    }

    /// Canonical coordinates `(x₁, x₂)` of the two tangency points from an
    /// exterior point to the ellipse caustic `λ_c`, with `x₁ ∈ [0, 1)` and
    /// `x₁ < x₂ < x₁ + 1`.
    pub fn exterior_coordinates(&self, lambda_c: f64, x: Point) -> Result<(f64, f64)> {
        let (phi0, delta) = self.tangency_angles(lambda_c, x)?;
        let total = self.ellipse_measure(lambda_c, TAU)?;
        let lo = (phi0 - delta).rem_euclid(TAU);
        let x1 = (self.ellipse_measure(lambda_c, lo)? / total).rem_euclid(1.0);
        let width = (self.ellipse_measure(lambda_c, lo + 2.0 * delta)?
            - self.ellipse_measure(lambda_c, lo)?)
            / total;
        Ok((x1, x1 + width))
    }

    /// Centre angle and half-width (eccentric angles) of the arc of the
    /// caustic seen from `x`.
    fn tangency_angles(&self, lambda_c: f64, x: Point) -> Result<(f64, f64)> {
        let (a, b) = self.ellipse_axes(lambda_c)?;
        let (u, v) = (x[0] / a.sqrt(), x[1] / b.sqrt());
        let rho = u.hypot(v);
        if rho <= 1.0 {
            return Err(Error::InsideCaustic);
        }
        Ok((v.atan2(u), (1.0 / rho).acos()))
    }

    fn arc_length(&self, lambda_c: f64, t0: f64, t1: f64) -> Result<f64> {
        let (a, b) = self.ellipse_axes(lambda_c)?;
        let f = |t: f64| (a * t.sin().powi(2) + b * t.cos().powi(2)).sqrt();
        Ok(integrate(f, t0, t1, opts())?.value)
    }

    /// Length of a closed string wrapped around the caustic and pulled taut
    /// at `x`.
    pub fn string_length(&self, lambda_c: f64, x: Point) -> Result<f64> {
        let (a, b) = self.ellipse_axes(lambda_c)?;
        let perimeter = self.arc_length(lambda_c, 0.0, TAU)?;
        let (u, v) = (x[0] / a.sqrt(), x[1] / b.sqrt());
        if (u.hypot(v) - 1.0).abs() <= 1e-14 {
            return Ok(perimeter);
        }
        let (phi0, delta) = self.tangency_angles(lambda_c, x)?;
        let at = |t: f64| [a.sqrt() * t.cos(), b.sqrt() * t.sin()];
        let (pa, pb) = (at(phi0 - delta), at(phi0 + delta));
        let near = self.arc_length(lambda_c, phi0 - delta, phi0 + delta)?;
        Ok(dist(x, pa) + dist(x, pb) + perimeter - near)
    }

    /// Builds the Ivory quadrilateral of the ellipses `e` and hyperbolas `h`
    /// in the first quadrant.
    pub fn ivory_quadrilateral(&self, e: [f64; 2], h: [f64; 2]) -> Result<IvoryQuadrilateral> {
        if !self.is_concentric() {
            for &hv in &h {
                if !(hv > self.a2 && hv < self.a1) {
                    return Err(Error::InvalidParameters(format!(
                        "h = {hv} outside ({}, {})",
                        self.a2, self.a1
                    )));
                }
            }
        }
        for &ev in &e {
            if !(ev < self.a2) {
                return Err(Error::InvalidParameters(format!(
                    "e = {ev} is not below a2"
                )));
            }
        }
        let pt = |ev: f64, hv: f64| self.point(NetCoords { e: ev, h: hv }, 1.0, 1.0);
        let vertices = [
            pt(e[0], h[0])?,
            pt(e[0], h[1])?,
            pt(e[1], h[1])?,
            pt(e[1], h[0])?,
        ];
        let [a, b, c, d] = vertices;
        Ok(IvoryQuadrilateral {
            e,
            h,
            vertices,
            ac: dist(a, c),
            bd: dist(b, d),
            caustic_bd: self.caustic_parameter(&OrientedLine::through_points(b, d)),
            caustic_ac: self.caustic_parameter(&OrientedLine::through_points(a, c)),
        })
    }

    fn side_mirrors(&self, q: &IvoryQuadrilateral) -> [(NetMirror, bool, [f64; 2]); 4] {
        // (mirror, range is in h?, range) for AB, BC, CD, DA.
        let m = |mirror| NetMirror { net: *self, mirror };
        let hyp = |l: f64| {
            if self.is_concentric() {
                Mirror::Radial(l)
            } else {
                Mirror::Hyperbola {
                    lambda: l,
                    branch: 1,
                }
            }
        };
        let sort = |r: [f64; 2]| if r[0] <= r[1] { r } else { [r[1], r[0]] };
        [
            (m(Mirror::Ellipse(q.e[0])), true, sort(q.h)),
            (m(hyp(q.h[1])), false, sort(q.e)),
            (m(Mirror::Ellipse(q.e[1])), true, sort(q.h)),
            (m(hyp(q.h[0])), false, sort(q.e)),
        ]
    }

    /// Member `t ∈ [0, 1]` of the family of four-periodic orbits of the
    /// table bounded by the sides of `q`. The start point moves along `DA`
    /// from `D` (`t = 0`, the diagonal `BD`) to `A` (`t = 1`, the diagonal
    /// `AC`).
    pub fn four_periodic_family(&self, q: &IvoryQuadrilateral, t: f64) -> Result<FourPeriodic> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameters(format!("t = {t} outside [0, 1]")));
        }
        let [a, b, c, d] = q.vertices;
        if t == 0.0 {
            return Ok(FourPeriodic {
                points: [d, b, d, b],
                perimeter: 2.0 * q.bd,
                closure_gap: 0.0,
            });
        }
        if t == 1.0 {
            return Ok(FourPeriodic {
                points: [a, c, a, c],
                perimeter: 2.0 * q.ac,
                closure_gap: 0.0,
            });
        }
        let e_start = q.e[1] + t * (q.e[0] - q.e[1]);
        let start = self.point(
            NetCoords {
                e: e_start,
                h: q.h[0],
            },
            1.0,
            1.0,
        )?;
        let gamma = q.caustic_bd;
        let want = sub(b, d);
        let cands = self.tangent_lines_from(start, gamma)?;
        let mut line = cands
            .iter()
            .flat_map(|l| [*l, l.reversed()])
            .max_by(|x, y| dot(x.direction(), want).total_cmp(&dot(y.direction(), want)))
            .unwrap();
        let initial = line;
        let sides = self.side_mirrors(q);
        let mut pos = start;
        let mut points = [start; 4];
        let mut perimeter = 0.0;
        let mut last_side = 3usize;
        for k in 0..4 {
            let mut best: Option<(f64, usize, Point)> = None;
            let t0 = line.param_of(pos);
            for (s, (mirror, in_h, range)) in sides.iter().enumerate() {
                if s == last_side {
                    continue;
                }
                for (tt, _) in mirror.intersections(&line) {
                    if tt <= t0 + 1e-9 {
                        continue;
                    }
                    let x = line.point_at(tt);
                    let nc = self.coords(x);
                    let v = if *in_h { nc.h } else { nc.e };
                    let slack = 1e-9 * (1.0 + v.abs());
                    if x[0] < -slack
                        || x[1] < -slack
                        || v < range[0] - slack
                        || v > range[1] + slack
                    {
                        continue;
                    }
                    if best.is_none_or(|bb| tt < bb.0) {
                        best = Some((tt, s, x));
                    }
                }
            }
            let (_, s, x) = best
                .ok_or_else(|| Error::OrbitEscapesTable(format!("no side hit after bounce {k}")))?;
            let r = reflect_in(&line, &sides[s].0, Some(pos))?;
            perimeter += dist(pos, x);
            pos = x;
            if k < 3 {
                points[k + 1] = x;
            }
            line = r.line;
            last_side = s;
        }
        let gap = dist(pos, start) + line.phase_gap(&initial);
        Ok(FourPeriodic {
            points,
            perimeter,
            closure_gap: gap,
        })
    }

    /// Quadrilateral made by the tangents from `A` and `B` to the ellipse
    /// caustic `λ_c`, with its incircle.
    pub fn circumscribed_check(
        &self,
        a: Point,
        b: Point,
        lambda_c: f64,
    ) -> Result<CircumscribedReport> {
        let la = self.ordered_tangents(a, lambda_c)?;
        let lb = self.ordered_tangents(b, lambda_c)?;
        let (ad, ac) = (la[0], la[1]);
        let (bc, bd) = (lb[0], lb[1]);
        let parallel = || Error::DegenerateConfiguration("tangent lines are parallel".into());
        let c = ac.intersect(&bc).ok_or_else(parallel)?;
        let d = ad.intersect(&bd).ok_or_else(parallel)?;
        let perimeter_residual = pitot_signed(a, b, c, d);
        let unsigned_residual = dist(a, d) - dist(a, c) + dist(b, c) - dist(b, d);
        let lines = [ad, ac, bc, bd];
        let (center, radius, tangency_residual) = incircle(&lines)?;
        Ok(CircumscribedReport {
            a,
            b,
            c,
            d,
            center,
            radius,
            perimeter_residual,
            unsigned_residual,
            tangency_residual,
            h_c: self.coords(c).h,
            h_d: self.coords(d).h,
        })
    }

    /// Tangent lines from an exterior point, ordered by the canonical
    /// coordinates `x₁`, `x₂` of their tangency points.
    fn ordered_tangents(&self, x: Point, lambda_c: f64) -> Result<[OrientedLine; 2]> {
        let (phi0, delta) = self.tangency_angles(lambda_c, x)?;
        let (a, b) = self.ellipse_axes(lambda_c)?;
        let at = |t: f64| [a.sqrt() * t.cos(), b.sqrt() * t.sin()];
        Ok([
            OrientedLine::through_points(x, at(phi0 - delta)),
            OrientedLine::through_points(x, at(phi0 + delta)),
        ])
    }

    /// Canonical shift `c(λ_c)` of the billiard in the ellipse `λ₀`, and the
    /// caustic with shift `ρ`.
    pub fn poncelet_caustic_for_rotation(&self, lambda0: f64, rho: f64) -> Result<f64> {
        if !(lambda0 < self.a2) {
            return Err(Error::InvalidParameters(format!(
                "outer λ = {lambda0} is not an ellipse"
            )));
        }
        if !(rho > 0.0 && rho < 0.5) {
            return Err(Error::NotBracketed(rho));
        }
        let span = self.a2 - lambda0;
        let (mut lo, mut hi) = (lambda0 + 1e-12 * span, self.a2 - 1e-12 * span);
        let shift = |l: f64| self.ellipse_shift(lambda0, l);
        let (mut clo, mut chi) = (shift(lo)?, shift(hi)?);
        if !(rho > clo && rho < chi) {
            return Err(Error::NotBracketed(rho));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let cm = shift(mid)?;
            let slack = 1e-10 * (chi - clo).abs().max(1e-3);
            if !(cm >= clo - slack && cm <= chi + slack) {
                return Err(Error::SolverDiverged(format!(
                    "canonical shift is not monotone near λ = {mid}"
                )));
            }
            if cm < rho {
                lo = mid;
                clo = cm;
            } else {
                hi = mid;
                chi = cm;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Line tangent to the ellipse caustic `λ_c` at eccentric angle `ψ`,
    /// oriented counter-clockwise.
    pub fn tangent_line_at(&self, lambda_c: f64, psi: f64) -> Result<OrientedLine> {
        let (a, b) = self.ellipse_axes(lambda_c)?;
        let (sa, sb) = (a.sqrt(), b.sqrt());
        Ok(OrientedLine::through(
            [sa * psi.cos(), sb * psi.sin()],
            [-sa * psi.sin(), sb * psi.cos()],
        ))
    }

    /// Iterates the billiard map in the ellipse `λ₀`. Returns the successive
    /// lines (starting with `line`) and bounce points.
    pub fn billiard_orbit(
        &self,
        lambda0: f64,
        line: OrientedLine,
        bounces: usize,
    ) -> Result<(Vec<OrientedLine>, Vec<Point>)> {
        let mirror = NetMirror {
            net: *self,
            mirror: Mirror::Ellipse(lambda0),
        };
        let mut lines = vec![line];
        let mut points = Vec::with_capacity(bounces);
        let mut cur = line;
        for _ in 0..bounces {
            let r = reflect_in(&cur, &mirror, None)?;
            points.push(r.point);
            cur = r.line;
            lines.push(cur);
        }
        Ok((lines, points))
    }

    /// Gap after `q` bounces of the orbit tangent to `λ_c` starting at
    /// eccentric angle `ψ`.
    pub fn poncelet_closure_gap(
        &self,
        lambda0: f64,
        lambda_c: f64,
        q: usize,
        psi: f64,
    ) -> Result<f64> {
        let start = self.tangent_line_at(lambda_c, psi)?;
        let (lines, _) = self.billiard_orbit(lambda0, start, q)?;
        Ok(lines[q].phase_gap(&start))
    }

    /// Intersections of the extended sides of a Poncelet `q`-gon with
    /// rotation `p/q`, grouped into concentric and radial sets.
    pub fn poncelet_grid(
        &self,
        lambda0: f64,
        q: usize,
        p: usize,
        psi: f64,
    ) -> Result<PonceletGrid> {
        if q < 3 || p == 0 || 2 * p >= q {
            return Err(Error::InvalidParameters(format!(
                "need 0 < p/q < 1/2, got {p}/{q}"
            )));
        }
        let lambda_c = self.poncelet_caustic_for_rotation(lambda0, p as f64 / q as f64)?;
        let start = self.tangent_line_at(lambda_c, psi)?;
        let (mut lines, _) = self.billiard_orbit(lambda0, start, q - 1)?;
        lines.truncate(q);
        let meet = |i: usize, j: usize| lines[i % q].intersect(&lines[j % q]);
        let radial_coord = |x: Point| self.coords(x).h;

        let mut concentric_sets = Vec::new();
        for k in 1..=(q - 1) / 2 {
            let set: Vec<Point> = (0..q).filter_map(|i| meet(i, i + k)).collect();
            concentric_sets.push(set);
        }
        let mut radial_sets = Vec::new();
        for s in 0..q {
            let mut set = Vec::new();
            for i in 0..q {
                for j in i + 1..q {
                    if (i + j) % q == s {
                        if let Some(x) = meet(i, j) {
                            set.push(x);
                        }
                    }
                }
            }
            radial_sets.push(set);
        }
        let mut concentric_lambda = Vec::new();
        let mut concentric_spread = 0.0f64;
        for set in &concentric_sets {
            let es: Vec<f64> = set.iter().map(|&x| self.coords(x).e).collect();
            concentric_spread = concentric_spread.max(spread(&es));
            concentric_lambda.push(es.iter().sum::<f64>() / es.len() as f64);
        }
        let mut radial_lambda = Vec::new();
        let mut radial_spread = 0.0f64;
        for set in &radial_sets {
            let hs: Vec<f64> = if self.is_concentric() {
                // Radial sets lie on lines through the centre.
                set.iter()
                    .map(|&x| (2.0 * radial_coord(x)).rem_euclid(TAU))
                    .collect()
            } else {
                set.iter().map(|&x| radial_coord(x)).collect()
            };
            if hs.is_empty() {
                continue;
            }
            radial_spread = radial_spread.max(circular_spread(&hs, self.is_concentric()));
            radial_lambda.push(hs[0]);
        }
        let mut quadrilateral_residual = 0.0f64;
        let mut quadrilaterals = 0;
        for i in 0..q {
            for j in i + 2..q {
                if (j + 1) % q == i {
                    continue;
                }
                // A and B see the arc from ℓᵢ to ℓⱼ or its complement.
                let forward = ((j - i) * p % q) * 2 < q;
                let (ci, di) = if forward {
                    ((j, i + 1), (i, j + 1))
                } else {
                    ((i, j + 1), (j, i + 1))
                };
                let (Some(a), Some(b), Some(c), Some(d)) = (
                    meet(i, j),
                    meet(i + 1, j + 1),
                    meet(ci.0, ci.1),
                    meet(di.0, di.1),
                ) else {
                    continue;
                };
                let r = pitot_signed(a, b, c, d);
                let scale = 1.0 + dist(a, b).max(dist(c, d));
                quadrilateral_residual = quadrilateral_residual.max(r.abs() / scale);
                quadrilaterals += 1;
            }
        }
        Ok(PonceletGrid {
            lines,
            concentric_sets,
            concentric_lambda,
            concentric_spread,
            radial_sets,
            radial_lambda,
            radial_spread,
            quadrilateral_residual,
            quadrilaterals,
        })
    }
}

/// Signed form of `|AD| − |AC| + |BC| − |BD|` for tangent lines of an
/// ellipse caustic centred at the origin.
fn pitot_signed(a: Point, b: Point, c: Point, d: Point) -> f64 {
    let leg = |x: Point, y: Point| {
        let mut l = OrientedLine::through_points(x, y);
        if l.p > 0.0 {
            l = l.reversed();
        }
        l.param_of(y) - l.param_of(x)
    };
    leg(a, d) - leg(a, c) - leg(b, c) + leg(b, d)
}

fn circular_spread(values: &[f64], angular: bool) -> f64 {
    if !angular {
        return spread(values);
    }
    let base = values[0];
    values
        .iter()
        .map(|&v| {
            let d = (v - base).rem_euclid(TAU);
            d.min(TAU - d)
        })
        .fold(0.0, f64::max)
}

/// Circle tangent to the four lines: solve with three of them over all sign
/// choices and keep the best fit to the fourth.
pub fn incircle(lines: &[OrientedLine; 4]) -> Result<(Point, f64, f64)> {
    let mut best: Option<(Point, f64, f64)> = None;
    for signs in 0..8u32 {
        let s: Vec<f64> = (0..3)
            .map(|k| if signs >> k & 1 == 1 { -1.0 } else { 1.0 })
            .collect();
        // n_k · c − s_k r = p_k
        let m = nalgebra::Matrix3::from_fn(|r, col| {
            let n = lines[r].normal();
            match col {
                0 => n[0],
                1 => n[1],
                _ => -s[r],
            }
        });
        let rhs = nalgebra::Vector3::new(lines[0].p, lines[1].p, lines[2].p);
        let Some(sol) = m.lu().solve(&rhs) else {
            continue;
        };
        let (c, r) = ([sol[0], sol[1]], sol[2]);
        if !(r > 0.0) {
            continue;
        }
        let res = lines
            .iter()
            .map(|l| (l.signed_distance(c).abs() - r).abs())
            .fold(0.0, f64::max);
        if best.is_none_or(|b| res < b.2) {
            best = Some((c, r, res));
        }
    }
    best.ok_or_else(|| {
        Error::DegenerateConfiguration("no circle touches three of the lines".into())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn caustic_examples() {
        let net = PlanarNet::new(4.0, 1.0).unwrap();
        let vertical = OrientedLine::through([2.0, 0.0], [0.0, 1.0]);
        let tag = net.caustic_of_line(&vertical);
        assert!(tag.lambda.abs() < 1e-15 && tag.kind == CausticKind::Ellipse);
        let focal = OrientedLine::through([3f64.sqrt(), 0.0], [0.4, 0.7]);
        assert_eq!(net.caustic_of_line(&focal).kind, CausticKind::Focal);
    }

    #[test]
    fn diametral_line_reverses() {
        let net = PlanarNet::new(2.0, 2.0).unwrap();
        let m = NetMirror {
            net,
            mirror: Mirror::Ellipse(1.0),
        };
        let line = OrientedLine::through([0.0, 0.0], [1.0, 1.0]);
        let r = reflect_in(&line, &m, None).unwrap();
        assert!(r.line.phase_gap(&line.reversed()) < 1e-14);
    }

    #[test]
    fn coords_round_trip() {
        let net = PlanarNet::new(4.0, 1.0).unwrap();
        let x = [1.3, -0.4];
        let c = net.coords(x);
        let y = net.point(c, 1.0, -1.0).unwrap();
        assert!(dist(x, y) < 1e-14);
    }

    #[test]
    fn circle_string_closed_form() {
        let net = PlanarNet::new(3.0, 3.0).unwrap();
        let (r, d) = (1.0f64, 2.5f64);
        let l = net.string_length(3.0 - r * r, [0.0, d]).unwrap();
        let exact = 2.0 * (d * d - r * r).sqrt() + r * (TAU - 2.0 * (r / d).acos());
        assert!((l - exact).abs() < 1e-12);
    }

    #[test]
    fn concentric_poncelet_radii() {
        let net = PlanarNet::new(5.0, 5.0).unwrap();
        let big_r = 5f64.sqrt();
        let l3 = net.poncelet_caustic_for_rotation(0.0, 1.0 / 3.0).unwrap();
        assert!(((5.0 - l3).sqrt() - big_r / 2.0).abs() < 1e-9);
        let l4 = net.poncelet_caustic_for_rotation(0.0, 0.25).unwrap();
        assert!(((5.0 - l4).sqrt() - big_r / 2f64.sqrt()).abs() < 1e-9);
        assert!(matches!(
            net.poncelet_caustic_for_rotation(0.0, 0.6),
            Err(Error::NotBracketed(_))
        ));
    }
}
