//! Numerical kernel for SL(2,C).
//!
//! Everything here is a pure function of its inputs. Distances are measured in
//! the infinity norm (largest absolute entry).

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;

/// Tolerance on `|det - 1|` for matrices built from exact formulas.
pub const TOL_DET_EXACT: f64 = 1e-12;
/// Tolerance on `|det - 1|` after long products.
pub const TOL_DET_PRODUCT: f64 = 1e-9;
/// Default commutator tolerance.
pub const TOL_COMMUTE: f64 = 1e-10;

/// Below this distance from `r = +-2`, [`omega`] switches to the recurrence.
const OMEGA_SWITCH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Mat2Error {
    #[error("determinant drifted from 1 by {drift:e}")]
    DetDrift { drift: f64 },
}

pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub(crate) fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// A 2x2 complex matrix, normally of unit determinant.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a11: C64,
    pub a12: C64,
    pub a21: C64,
    pub a22: C64,
}

impl fmt::Debug for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a11, self.a12, self.a21, self.a22)
    }
}

impl Mat2 {
    pub const fn new(a11: C64, a12: C64, a21: C64, a22: C64) -> Self {
        Mat2 { a11, a12, a21, a22 }
    }

    /// The identity `e`.
    pub fn identity() -> Self {
        Self::scalar(cr(1.0))
    }

    pub fn scalar(s: C64) -> Self {
        Mat2::new(s, cr(0.0), cr(0.0), s)
    }

    pub fn zero() -> Self {
        Self::scalar(cr(0.0))
    }

    /// `d(kappa) = diag(kappa, 1/kappa)`.
    pub fn diag(kappa: C64) -> Self {
        Mat2::new(kappa, cr(0.0), cr(0.0), kappa.inv())
    }

    /// `u(kappa)`: upper triangular with diagonal `(kappa, 1/kappa)` and a unit corner.
    pub fn upper(kappa: C64) -> Self {
        Mat2::new(kappa, cr(1.0), cr(0.0), kappa.inv())
    }

    /// `p(u)`: the unipotent upper triangular matrix with corner `u`.
    pub fn unipotent(u: C64) -> Self {
        Mat2::new(cr(1.0), u, cr(0.0), cr(1.0))
    }

    pub fn det(&self) -> C64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn trace(&self) -> C64 {
        self.a11 + self.a22
    }

    /// Adjugate; equals the inverse when the determinant is one.
    pub fn adjugate(&self) -> Self {
        Mat2::new(self.a22, -self.a12, -self.a21, self.a11)
    }

    /// Inverse of a unit-determinant matrix, rejecting drifted determinants.
    pub fn inv(&self) -> Result<Self, Mat2Error> {
        self.inv_with_tol(TOL_DET_PRODUCT)
    }

    pub fn inv_with_tol(&self, tol: f64) -> Result<Self, Mat2Error> {
        let drift = (self.det() - 1.0).norm();
        if drift > tol {
            return Err(Mat2Error::DetDrift { drift });
        }
        Ok(self.adjugate())
    }

    /// Exact inverse for any invertible matrix.
    pub fn inverse_general(&self) -> Self {
        let d = self.det();
        self.adjugate().scale(d.inv())
    }

    pub fn scale(&self, s: C64) -> Self {
        Mat2::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    /// Rescale to unit determinant (principal square root of the determinant).
    pub fn normalized(&self) -> Self {
        self.scale(self.det().sqrt().inv())
    }

    pub fn entries(&self) -> [C64; 4] {
        [self.a11, self.a12, self.a21, self.a22]
    }

    pub fn from_entries(e: [C64; 4]) -> Self {
        Mat2::new(e[0], e[1], e[2], e[3])
    }

    /// Largest absolute entry.
    pub fn norm_inf(&self) -> f64 {
        self.entries().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn dist(&self, other: &Mat2) -> f64 {
        (*self - *other).norm_inf()
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn det_drift(&self) -> f64 {
        (self.det() - 1.0).norm()
    }

    /// Integer power by repeated squaring; negative exponents use the adjugate.
    pub fn pow(&self, k: i64) -> Self {
        let base = if k < 0 { self.adjugate() } else { *self };
        let mut n = k.unsigned_abs();
        let mut acc = Mat2::identity();
        let mut sq = base;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc * sq;
            }
            sq = sq * sq;
            n >>= 1;
        }
        acc
    }

    pub fn mul_vec(&self, v: [C64; 2]) -> [C64; 2] {
        [self.a11 * v[0] + self.a12 * v[1], self.a21 * v[0] + self.a22 * v[1]]
    }

    pub fn commutator_norm(&self, other: &Mat2) -> f64 {
        ((*self) * (*other) - (*other) * (*self)).norm_inf()
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, y: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 * y.a11 + self.a12 * y.a21,
            self.a11 * y.a12 + self.a12 * y.a22,
            self.a21 * y.a11 + self.a22 * y.a21,
            self.a21 * y.a12 + self.a22 * y.a22,
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, y: Mat2) -> Mat2 {
        Mat2::new(self.a11 + y.a11, self.a12 + y.a12, self.a21 + y.a21, self.a22 + y.a22)
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, y: Mat2) -> Mat2 {
        Mat2::new(self.a11 - y.a11, self.a12 - y.a12, self.a21 - y.a21, self.a22 - y.a22)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale(cr(-1.0))
    }
}

/// Matrix product.
pub fn mul(x: &Mat2, y: &Mat2) -> Mat2 {
    *x * *y
}

/// Inverse of a unit-determinant matrix.
pub fn inv(x: &Mat2) -> Result<Mat2, Mat2Error> {
    x.inv()
}

/// `c x c^-1`.
pub fn conj_by(c: &Mat2, x: &Mat2) -> Mat2 {
    *c * *x * c.inverse_general()
}

/// A trace value together with a fixed eigenvalue branch `kappa + 1/kappa = t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceValue {
    pub t: C64,
    pub kappa: C64,
}

impl TraceValue {
    /// Principal branch `kappa = (t + sqrt(t^2 - 4)) / 2`.
    pub fn new(t: C64) -> Self {
        TraceValue { t, kappa: kappa_of(t) }
    }

    pub fn residual(&self) -> f64 {
        (self.kappa + self.kappa.inv() - self.t).norm()
    }

    /// True when `t` sits on the parabolic locus `+-2` (within `tol`).
    pub fn is_parabolic(&self, tol: f64) -> bool {
        (self.t - 2.0).norm() < tol || (self.t + 2.0).norm() < tol
    }
}

pub fn kappa_of(t: C64) -> C64 {
    (t + (t * t - 4.0).sqrt()) / 2.0
}

/// `omega_k(r) = (mu^k - mu^-k)/(mu - mu^-1)` with `r = mu + 1/mu`.
pub fn omega(k: i64, r: C64) -> C64 {
    if k == 0 {
        return cr(0.0);
    }
    if k < 0 {
        return -omega(-k, r);
    }
    if (r - 2.0).norm() < OMEGA_SWITCH || (r + 2.0).norm() < OMEGA_SWITCH {
        return omega_recurrence(k, r);
    }
    let mu = kappa_of(r);
    let mu_inv = mu.inv();
    (mu.powi(k as i32) - mu_inv.powi(k as i32)) / (mu - mu_inv)
}

/// Chebyshev-style recurrence `omega_{k+1} = r omega_k - omega_{k-1}`.
pub fn omega_recurrence(k: i64, r: C64) -> C64 {
    if k < 0 {
        return -omega_recurrence(-k, r);
    }
    let (mut prev, mut cur) = (cr(0.0), cr(1.0));
    if k == 0 {
        return prev;
    }
    for _ in 1..k {
        let next = r * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `x^k = omega_k(r) x - omega_{k-1}(r) e` with `r = tr x`.
pub fn power_cayley(x: &Mat2, k: i64) -> Mat2 {
    let r = x.trace();
    x.scale(omega(k, r)) - Mat2::scalar(omega(k - 1, r))
}

/// Which root of the centralizer quadratic to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

/// An element `mu a + nu e` of the centralizer of `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralizerElement {
    pub matrix: Mat2,
    pub nu: C64,
    /// The two roots in `nu` coincide, so both branches give the same element.
    pub branch_collision: bool,
}

/// Solve `mu^2 + t mu nu + nu^2 = 1` for `nu` and return `mu a + nu e`.
pub fn centralizer_element(a: &Mat2, t: C64, mu: C64, branch: Branch) -> CentralizerElement {
    // nu^2 + (t mu) nu + (mu^2 - 1) = 0
    let disc = t * t * mu * mu - 4.0 * (mu * mu - 1.0);
    let root = disc.sqrt();
    let nu = match branch {
        Branch::Plus => (-t * mu + root) / 2.0,
        Branch::Minus => (-t * mu - root) / 2.0,
    };
    CentralizerElement {
        matrix: a.scale(mu) + Mat2::scalar(nu),
        nu,
        branch_collision: root.norm() < 1e-12,
    }
}

/// True iff `||ab - ba|| <= tol`.
pub fn is_commuting(a: &Mat2, b: &Mat2, tol: f64) -> bool {
    a.commutator_norm(b) <= tol
}

/// A conjugating frame `p` with `p^-1 a p` in normal form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalForm {
    /// `p^-1 a p = d(kappa)`.
    Diagonal { kappa: C64 },
    /// `p^-1 a p = eps * p(1)`.
    Parabolic { eps: f64 },
    /// `a = +-e`.
    Central { eps: f64 },
}

/// Eigen-frame of a unit-determinant matrix. The frame has unit determinant.
///
/// For the diagonal case the first column is the eigenvector for `kappa`,
/// where `kappa` is the requested eigenvalue branch.
pub fn normal_frame(a: &Mat2, kappa: C64) -> (Mat2, NormalForm) {
    let t = a.trace();
    let disc = t * t - 4.0;
    let scale = 1.0 + a.norm_inf();
    if disc.norm() > 1e-10 * scale * scale {
        let k1 = kappa;
        let k2 = kappa.inv();
        let v1 = eigenvector(a, k1);
        let v2 = eigenvector(a, k2);
        let p = Mat2::new(v1[0], v2[0], v1[1], v2[1]).normalized();
        return (p, NormalForm::Diagonal { kappa: k1 });
    }
    let eps = if t.re >= 0.0 { 1.0 } else { -1.0 };
    let n = *a - Mat2::scalar(cr(eps));
    if n.norm_inf() < 1e-12 * scale {
        return (Mat2::identity(), NormalForm::Central { eps });
    }
    // pick w with n w != 0, then frame (n w, w)
    let w = if n.a11.norm() + n.a21.norm() >= n.a12.norm() + n.a22.norm() {
        [cr(1.0), cr(0.0)]
    } else {
        [cr(0.0), cr(1.0)]
    };
    let v1 = n.mul_vec(w);
    // second column eps w so that p^-1 a p = eps p(1) rather than eps p(eps)
    let p = Mat2::new(v1[0], w[0] * eps, v1[1], w[1] * eps);
    // n w = v1 holds for the unnormalized frame; rescaling both columns by
    // the same factor keeps it, so normalize.
    (p.normalized(), NormalForm::Parabolic { eps })
}

fn eigenvector(a: &Mat2, lambda: C64) -> [C64; 2] {
    // rows of (a - lambda e); the kernel is orthogonal to the larger row
    let r1 = [a.a11 - lambda, a.a12];
    let r2 = [a.a21, a.a22 - lambda];
    let n1 = r1[0].norm() + r1[1].norm();
    let n2 = r2[0].norm() + r2[1].norm();
    let row = if n1 >= n2 { r1 } else { r2 };
    if row[0].norm() + row[1].norm() < 1e-300 {
        return [cr(1.0), cr(0.0)];
    }
    [row[1], -row[0]]
}

/// Common eigenvector search: eigenvectors of `a` tested for invariance under
/// every matrix in `others`. Returns true when some eigenvector of `a` is
/// shared by all of them within `tol` (relative).
pub fn has_common_eigenvector(a: &Mat2, others: &[Mat2], tol: f64) -> bool {
    let t = a.trace();
    let kappa = kappa_of(t);
    let mut candidates = vec![eigenvector(a, kappa), eigenvector(a, kappa.inv())];
    if (t * t - 4.0).norm() < 1e-10 {
        let eps = if t.re >= 0.0 { 1.0 } else { -1.0 };
        candidates.push(eigenvector(a, cr(eps)));
    }
    candidates.into_iter().any(|v| {
        let nv = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
        if nv == 0.0 {
            return false;
        }
        let v = [v[0] / nv, v[1] / nv];
        others.iter().all(|m| {
            let w = m.mul_vec(v);
            // |v ^ w| measures how far w is from the line through v
            let cross = (v[0] * w[1] - v[1] * w[0]).norm();
            cross <= tol * (1.0 + m.norm_inf())
        })
    })
}

impl Mat2 {
    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Mat2::new(self.a11.conj(), self.a21.conj(), self.a12.conj(), self.a22.conj())
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.entries().iter().map(|z| z.norm_sqr()).sum()
    }
}

/// A conjugator `g` that minimizes `sum |g m g^-1|^2` over the given
/// matrices, found by descent along the moment map `sum [A, A*]`. Returns the
/// identity when the orbit has no minimum nearby.
pub fn balancing_conjugator(mats: &[Mat2]) -> Mat2 {
    let cost = |g: &Mat2| {
        let gi = g.adjugate();
        mats.iter().map(|m| (*g * *m * gi).frobenius_sq()).sum::<f64>()
    };
    let mut g = Mat2::identity();
    let mut f = cost(&g);
    let mut eta = 0.25 / f.max(1.0);
    for _ in 0..200 {
        let gi = g.adjugate();
        let mut mu = Mat2::zero();
        for m in mats {
            let a = g * *m * gi;
            mu = mu + a * a.adjoint() - a.adjoint() * a;
        }
        let size = mu.frobenius_sq().sqrt();
        if size <= 1e-9 * f {
            break;
        }
        // mu is Hermitian and traceless: exp(-eta mu) in closed form
        let lam = (mu.a11.norm_sqr() + mu.a12.norm_sqr()).sqrt();
        let mut accepted = false;
        for _ in 0..40 {
            let x = eta * lam;
            let step = Mat2::scalar(cr(x.cosh())) - mu.scale(cr(x.sinh() / lam));
            let trial = step * g;
            let ft = cost(&trial);
            if ft.is_finite() && ft < f {
                g = trial;
                f = ft;
                eta *= 1.5;
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    g
}

/// Trace of a product without forming intermediate matrices twice.
pub fn tr2(x: &Mat2, y: &Mat2) -> C64 {
    x.a11 * y.a11 + x.a12 * y.a21 + x.a21 * y.a12 + x.a22 * y.a22
}

pub fn tr3(x: &Mat2, y: &Mat2, z: &Mat2) -> C64 {
    tr2(&(*x * *y), z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::*;
    use rand::Rng;

    #[test]
    fn identity_and_diagonal_products() {
        let e = Mat2::identity();
        assert_eq!(e * e, e);
        let k = c(1.3, -0.4);
        assert!((Mat2::diag(k) * Mat2::diag(k.inv())).dist(&e) < 1e-15);
        let (u, v) = (c(0.3, 2.0), c(-1.0, 0.5));
        assert!((Mat2::unipotent(u) * Mat2::unipotent(v)).dist(&Mat2::unipotent(u + v)) < 1e-15);
    }

    #[test]
    fn inverse_checks_determinant() {
        let e = Mat2::identity();
        assert_eq!(e.inv().unwrap(), e);
        let k = c(0.7, 0.2);
        assert!(Mat2::diag(k).inv().unwrap().dist(&Mat2::diag(k.inv())) < 1e-15);
        let bad = Mat2::diag(k).scale(cr(1.01));
        assert!(matches!(bad.inv(), Err(Mat2Error::DetDrift { .. })));
        let mut rng = rng(11);
        for _ in 0..200 {
            let x = random_sl2(&mut rng);
            assert!((x * x.inv().unwrap()).dist(&e) < 1e-12);
        }
    }

    #[test]
    fn conjugation_preserves_trace() {
        let mut rng = rng(12);
        let e = Mat2::identity();
        for _ in 0..200 {
            let (cm, x) = (random_sl2(&mut rng), random_sl2(&mut rng));
            assert!(conj_by(&cm, &e).dist(&e) < 1e-12);
            assert!(conj_by(&x, &x).dist(&x) < 1e-12);
            assert!((conj_by(&cm, &x).trace() - x.trace()).norm() < 1e-12);
        }
    }

    #[test]
    fn omega_base_cases_and_degenerate_branch() {
        let r = c(0.3, 1.1);
        assert_eq!(omega(0, r), cr(0.0));
        assert!((omega(1, r) - 1.0).norm() < 1e-15);
        assert!((omega(2, r) - r).norm() < 1e-14);
        for k in -8..=8 {
            assert!((omega(k, cr(2.0)) - k as f64).norm() < 1e-12);
            // mu = -1: k (-1)^(k-1)
            let expect = k as f64 * if (k - 1).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            assert!((omega(k, cr(-2.0)) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn omega_is_continuous_near_parabolic_traces() {
        for k in [-7i64, -2, 3, 9, 20] {
            for base in [2.0, -2.0] {
                let exact = omega(k, cr(base));
                for h in [1e-5, 1e-6, 1e-7, 1e-9] {
                    let near = omega(k, c(base + h, h * 0.5));
                    assert!(
                        (near - exact).norm() < 1e-8 * (1.0 + exact.norm()) + 0.4 * 1.2 * h * (k * k * k).abs() as f64,
                        "k={k} base={base} h={h}"
                    );
                }
            }
        }
    }

    #[test]
    fn cayley_power_special_traces() {
        let mut rng = rng(13);
        for _ in 0..50 {
            let x0 = random_in_trace(&mut rng, cr(0.0));
            assert!(power_cayley(&x0, 2).dist(&-Mat2::identity()) < 1e-10);
            let x1 = random_in_trace(&mut rng, cr(1.0));
            assert!(power_cayley(&x1, 3).dist(&-Mat2::identity()) < 1e-10);
        }
        let k = c(1.1, 0.3);
        for p in -6..=6 {
            assert!(power_cayley(&Mat2::diag(k), p).dist(&Mat2::diag(k.powi(p as i32))) < 1e-12);
        }
    }

    #[test]
    fn centralizer_elements_commute() {
        let a = Mat2::diag(c(0.8, 0.9));
        let t = a.trace();
        let z = centralizer_element(&a, t, cr(0.0), Branch::Plus);
        assert!(z.matrix.dist(&Mat2::identity()) < 1e-15 || z.matrix.dist(&-Mat2::identity()) < 1e-15);
        let one = centralizer_element(&a, t, cr(1.0), Branch::Plus);
        let one_m = centralizer_element(&a, t, cr(1.0), Branch::Minus);
        let hit = [one, one_m].iter().any(|z| z.matrix.dist(&a) < 1e-12);
        assert!(hit);
        let mut rng = rng(14);
        for _ in 0..100 {
            let a = random_in_trace(&mut rng, cr(3.0));
            for br in [Branch::Plus, Branch::Minus] {
                let z = centralizer_element(&a, cr(3.0), cr(2.0), br).matrix;
                assert!(z.commutator_norm(&a) < 1e-10);
                assert!(z.det_drift() < 1e-10);
            }
        }
    }

    #[test]
    fn commuting_predicate() {
        let (k, l) = (c(1.2, 0.1), c(-0.3, 0.7));
        assert!(is_commuting(&Mat2::diag(k), &Mat2::diag(l), TOL_COMMUTE));
        assert!(!is_commuting(&Mat2::diag(k), &Mat2::unipotent(cr(1.0)), TOL_COMMUTE));
        let mut rng = rng(15);
        for _ in 0..100 {
            let x = random_sl2(&mut rng);
            let cm = random_sl2(&mut rng);
            assert!(!is_commuting(&x, &conj_by(&cm, &x), TOL_COMMUTE));
        }
    }

    #[test]
    fn normal_frame_diagonalizes() {
        let mut rng = rng(16);
        for _ in 0..100 {
            let t = c(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let a = random_in_trace(&mut rng, t);
            let kappa = kappa_of(t);
            let (p, nf) = normal_frame(&a, kappa);
            let NormalForm::Diagonal { kappa: k } = nf else {
                panic!()
            };
            let d = p.inverse_general() * a * p;
            assert!(d.dist(&Mat2::diag(k)) < 1e-9 * (1.0 + a.norm_inf()).powi(2));
        }
        let par = conj_by(
            &Mat2::new(cr(1.0), cr(2.0), cr(0.5), cr(2.0)),
            &Mat2::unipotent(cr(1.0)),
        );
        let (p, nf) = normal_frame(&par, cr(1.0));
        assert!(matches!(nf, NormalForm::Parabolic { eps } if eps == 1.0));
        assert!((p.inverse_general() * par * p).dist(&Mat2::unipotent(cr(1.0))) < 1e-12);
    }
}
