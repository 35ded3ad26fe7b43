//! Univariate real polynomials: evaluation, companion-matrix roots, Sturm
//! sequences, and one-dimensional bracketing.

use nalgebra::{Complex, DMatrix, Schur};

/// Polynomial with real coefficients, lowest degree first.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    coeffs: Vec<f64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    /// Monic polynomial with the given real roots.
    pub fn from_roots(roots: &[f64]) -> Self {
        let mut p = Poly::new(vec![1.0]);
        for &r in roots {
            p = p.mul(&Poly::new(vec![-r, 1.0]));
        }
        p
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        *self.coeffs.last().unwrap()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex<f64>) -> Complex<f64> {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() == 1 {
            return Poly::new(vec![0.0]);
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let c = (0..n)
            .map(|k| {
                self.coeffs.get(k).copied().unwrap_or(0.0)
                    + other.coeffs.get(k).copied().unwrap_or(0.0)
            })
            .collect();
        Poly::new(c)
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// `self - eps`
    pub fn shifted(&self, eps: f64) -> Poly {
        let mut c = self.coeffs.clone();
        c[0] -= eps;
        Poly::new(c)
    }

    /// Drops leading coefficients that are negligible next to the largest one.
    pub fn trimmed(&self, rel: f64) -> Poly {
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        let mut c = self.coeffs.clone();
        while c.len() > 1 && c.last().unwrap().abs() <= rel * scale {
            c.pop();
        }
        Poly::new(c)
    }

    /// All complex roots, from the eigenvalues of the companion matrix and
    /// polished by a few Newton steps.
    pub fn roots(&self) -> Vec<Complex<f64>> {
        let d = self.degree();
        if d == 0 {
            return Vec::new();
        }
        let lead = self.leading();
        let mut comp = DMatrix::<f64>::zeros(d, d);
        for i in 1..d {
            comp[(i, i - 1)] = 1.0;
        }
        for i in 0..d {
            comp[(i, d - 1)] = -self.coeffs[i] / lead;
        }
        let dp = self.derivative();
        companion_eigenvalues(comp)
            .iter()
            .map(|&z0| {
                let mut z = z0;
                for _ in 0..8 {
                    let fz = self.eval_complex(z);
                    let dz = dp.eval_complex(z);
                    if dz.norm() == 0.0 {
                        break;
                    }
                    let step = fz / dz;
                    let next = z - step;
                    if !(next.re.is_finite() && next.im.is_finite()) {
                        break;
                    }
                    if self.eval_complex(next).norm() > fz.norm() {
                        break;
                    }
                    z = next;
                    if step.norm() <= 1e-16 * z.norm() {
                        break;
                    }
                }
                z
            })
            .collect()
    }

    /// Real roots (sorted) if every root is real to within `imag_tol`
    /// (relative to `1 + |z|`), otherwise `None`.
    pub fn real_roots(&self, imag_tol: f64) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(self.degree());
        for z in self.roots() {
            if z.im.abs() > imag_tol * (1.0 + z.norm()) {
                return None;
            }
            out.push(self.polish_real(z.re));
        }
        out.sort_by(f64::total_cmp);
        Some(out)
    }

    /// Number of roots whose imaginary part is below `imag_tol`.
    pub fn count_real_roots(&self, imag_tol: f64) -> usize {
        self.roots()
            .iter()
            .filter(|z| z.im.abs() <= imag_tol * (1.0 + z.norm()))
            .count()
    }

    fn polish_real(&self, x0: f64) -> f64 {
        let dp = self.derivative();
        let mut x = x0;
        for _ in 0..6 {
            let fx = self.eval(x);
            let d = dp.eval(x);
            if d == 0.0 || fx == 0.0 {
                break;
            }
            let next = x - fx / d;
            if !next.is_finite() || self.eval(next).abs() >= fx.abs() {
                break;
            }
            x = next;
        }
        x
    }

    fn rem(&self, divisor: &Poly) -> Poly {
        let mut r = self.coeffs.clone();
        let dd = divisor.degree();
        let lead = divisor.leading();
        while r.len() > dd && r.len() > 1 {
            let k = r.len() - 1 - dd;
            let factor = r[r.len() - 1] / lead;
            for (j, &c) in divisor.coeffs.iter().enumerate() {
                r[k + j] -= factor * c;
            }
            r.pop();
        }
        Poly::new(r)
    }

    /// Sturm sequence of `self`.
    pub fn sturm_sequence(&self) -> Vec<Poly> {
        let scale = self
            .coeffs
            .iter()
            .fold(0.0f64, |m, c| m.max(c.abs()))
            .max(f64::MIN_POSITIVE);
        let mut seq = vec![self.clone(), self.derivative()];
        loop {
            let n = seq.len();
            if seq[n - 1].degree() == 0 {
                break;
            }
            let r = seq[n - 2].rem(&seq[n - 1]).scale(-1.0);
            let rmax = r.coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            if rmax <= 1e-11 * scale {
                break;
            }
            seq.push(r.trimmed(1e-13));
        }
        seq
    }

    /// Number of distinct real roots on the whole line, counted by the
    /// Sturm sequence's sign changes at ±∞.
    pub fn sturm_real_root_count(&self) -> usize {
        let seq = self.sturm_sequence();
        let changes = |signs: Vec<f64>| {
            let s: Vec<f64> = signs.into_iter().filter(|v| *v != 0.0).collect();
            s.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
        };
        let at_pos = changes(seq.iter().map(|p| p.leading().signum()).collect());
        let at_neg = changes(
            seq.iter()
                .map(|p| p.leading().signum() * if p.degree() % 2 == 0 { 1.0 } else { -1.0 })
                .collect(),
        );
        at_neg.saturating_sub(at_pos)
    }
}

/// Eigenvalues through a Schur decomposition with an iteration cap. Francis
/// steps can stall on orthogonal companion matrices such as that of
/// `x⁴ + 1`; a fixed non-orthogonal similarity breaks the symmetry.
fn companion_eigenvalues(comp: DMatrix<f64>) -> Vec<Complex<f64>> {
    let d = comp.nrows();
    if let Some(s) = Schur::try_new(comp.clone(), f64::EPSILON, 2000) {
        return s.complex_eigenvalues().iter().copied().collect();
    }
    let mut sim = DMatrix::<f64>::identity(d, d);
    for i in 0..d {
        for j in i + 1..d {
            sim[(i, j)] = 0.37 / (1.0 + (j - i) as f64);
        }
    }
    let inv = sim.clone().try_inverse().expect("unit upper triangular");
    let conj = inv * comp * sim;
    Schur::try_new(conj, f64::EPSILON, 20000)
        .map(|s| s.complex_eigenvalues().iter().copied().collect())
        .unwrap_or_default()
}

/// Bisection for a root of `f` on `[lo, hi]`, given the sign of `f` at `lo`.
///
/// Runs until the bracket stops shrinking in floating point, so the result
/// is correct to the last representable digit whenever `f` changes sign
/// exactly once on the bracket.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, lo_negative: bool) -> f64 {
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return mid;
        }
        if (v < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Finds a root of `f` on `[lo, hi]` when `f(lo)` and `f(hi)` have opposite
/// signs. Returns `None` otherwise.
pub fn bracketed_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> Option<f64> {
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return None;
    }
    Some(bisect(f, lo, hi, flo < 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_known_cubic() {
        let p = Poly::from_roots(&[-2.0, 0.5, 3.0]);
        let r = p.real_roots(1e-8).unwrap();
        for (a, b) in r.iter().zip([-2.0, 0.5, 3.0]) {
            assert!((a - b).abs() < 1e-13);
        }
        assert_eq!(p.sturm_real_root_count(), 3);
    }

    #[test]
    fn detects_complex_pair() {
        // (x^2 + 1)(x - 1)
        let p = Poly::new(vec![1.0, 0.0, 1.0]).mul(&Poly::new(vec![-1.0, 1.0]));
        assert!(p.real_roots(1e-8).is_none());
        assert_eq!(p.count_real_roots(1e-8), 1);
        assert_eq!(p.sturm_real_root_count(), 1);
    }

    #[test]
    fn quartic_without_real_roots() {
        let p = Poly::new(vec![1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(p.count_real_roots(1e-8), 0);
        assert_eq!(p.sturm_real_root_count(), 0);
    }

    #[test]
    fn bisection_finds_sqrt2() {
        let r = bracketed_root(|x| x * x - 2.0, 0.0, 2.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
        assert!(bracketed_root(|x| x * x + 1.0, -1.0, 1.0).is_none());
    }
}
