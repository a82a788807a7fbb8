//! Small complex least-squares and polynomial utilities.

use nalgebra::{DMatrix, DVector};

use crate::mat2::{cr, C64};

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn norm_max(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Forward-difference Jacobian of a holomorphic map.
pub fn fd_jacobian<F>(f: &F, z: &[C64], fz: &[C64], rel_step: f64) -> DMatrix<C64>
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let (m, n) = (fz.len(), z.len());
    let mut jac = DMatrix::zeros(m, n);
    let mut zz = z.to_vec();
    for j in 0..n {
        let h = rel_step * (1.0 + z[j].norm());
        zz[j] = z[j] + h;
        let fp = f(&zz);
        zz[j] = z[j];
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fz[i]) / h;
        }
    }
    jac
}

/// Central-difference Jacobian; more accurate, twice the cost.
pub fn central_jacobian<F>(f: &F, z: &[C64], step: f64) -> DMatrix<C64>
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let m = f(z).len();
    let n = z.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut zz = z.to_vec();
    for j in 0..n {
        zz[j] = z[j] + step;
        let fp = f(&zz);
        zz[j] = z[j] - step;
        let fm = f(&zz);
        zz[j] = z[j];
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iter: 200,
            tol: 1e-13,
        }
    }
}

/// Levenberg-Marquardt on a holomorphic residual map `C^n -> C^m`.
/// Returns the final point and the max-norm of the residual there.
pub fn levenberg_marquardt<F>(f: &F, z0: &[C64], opts: LmOptions) -> (Vec<C64>, f64)
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let mut z = z0.to_vec();
    let mut fz = f(&z);
    let mut cost = norm2(&fz);
    let mut lambda = 1e-3;
    for _ in 0..opts.max_iter {
        if norm_max(&fz) <= opts.tol || !cost.is_finite() {
            break;
        }
        let jac = fd_jacobian(f, &z, &fz, 1e-8);
        let jh = jac.adjoint();
        let jtj = &jh * &jac;
        let g = &jh * DVector::from_column_slice(&fz);
        let mut improved = false;
        for _ in 0..12 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                let d = a[(i, i)].re.max(1e-12);
                a[(i, i)] += cr(lambda * d);
            }
            let Some(delta) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<C64> = z.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
            let ft = f(&trial);
            let ct = norm2(&ft);
            if ct.is_finite() && ct < cost {
                z = trial;
                fz = ft;
                cost = ct;
                lambda = (lambda * 0.2).max(1e-15);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let err = norm_max(&fz);
    (z, err)
}

/// Coefficients (lowest degree first) of a polynomial sampled on the circle
/// `|s| = radius` at `n` equally spaced points.
pub fn dft_coefficients(samples: &[C64], radius: f64) -> Vec<C64> {
    let n = samples.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = cr(0.0);
        for (j, v) in samples.iter().enumerate() {
            let ang = -std::f64::consts::TAU * (j * k) as f64 / n as f64;
            acc += v * C64::from_polar(1.0, ang);
        }
        out.push(acc / (n as f64 * radius.powi(k as i32)));
    }
    out
}

pub fn sample_points(n: usize, radius: f64) -> Vec<C64> {
    (0..n)
        .map(|j| C64::from_polar(radius, std::f64::consts::TAU * j as f64 / n as f64))
        .collect()
}

/// Drop trailing coefficients whose contribution on `|s| = radius` is below
/// `rel` times the largest one.
pub fn trim_polynomial(coef: &[C64], radius: f64, rel: f64) -> Vec<C64> {
    let scaled: Vec<f64> = coef
        .iter()
        .enumerate()
        .map(|(k, c)| c.norm() * radius.powi(k as i32))
        .collect();
    let top = scaled.iter().cloned().fold(0.0, f64::max);
    let mut deg = 0;
    for (k, s) in scaled.iter().enumerate() {
        if *s > rel * top {
            deg = k;
        }
    }
    coef[..=deg].to_vec()
}

/// All roots of a polynomial given lowest degree first, via the eigenvalues
/// of its companion matrix.
pub fn polynomial_roots(coef: &[C64]) -> Vec<C64> {
    let d = coef.len().saturating_sub(1);
    if d == 0 {
        return vec![];
    }
    let lead = coef[d];
    let mut comp = DMatrix::<C64>::zeros(d, d);
    for i in 1..d {
        comp[(i, i - 1)] = cr(1.0);
    }
    for i in 0..d {
        comp[(i, d - 1)] = -coef[i] / lead;
    }
    match nalgebra::linalg::Schur::new(comp).eigenvalues() {
        Some(ev) => ev.iter().cloned().collect(),
        None => vec![],
    }
}

pub fn horner(coef: &[C64], s: C64) -> C64 {
    coef.iter().rev().fold(cr(0.0), |acc, c| acc * s + c)
}

/// Newton iteration on a scalar holomorphic function with a numerical
/// derivative.
pub fn newton_scalar<F: Fn(C64) -> C64>(f: &F, s0: C64, iters: usize) -> C64 {
    let mut s = s0;
    for _ in 0..iters {
        let v = f(s);
        if !v.is_finite() {
            break;
        }
        let h = 1e-7 * (1.0 + s.norm());
        let d = (f(s + h) - f(s - h)) / (2.0 * h);
        if d.norm() == 0.0 || !d.is_finite() {
            break;
        }
        let step = v / d;
        s -= step;
        if step.norm() < 1e-15 * (1.0 + s.norm()) {
            break;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat2::c;

    #[test]
    fn companion_roots_of_known_cubic() {
        // (s - 1)(s + 2)(s - i)
        let roots = [cr(1.0), cr(-2.0), c(0.0, 1.0)];
        let mut coef = vec![cr(1.0)];
        for r in roots {
            let mut next = vec![cr(0.0); coef.len() + 1];
            for (k, a) in coef.iter().enumerate() {
                next[k + 1] += a;
                next[k] -= a * r;
            }
            coef = next;
        }
        let found = polynomial_roots(&coef);
        for r in roots {
            assert!(found.iter().any(|z| (z - r).norm() < 1e-10));
        }
    }

    #[test]
    fn dft_recovers_coefficients() {
        let coef = vec![c(1.0, 2.0), cr(-3.0), c(0.5, -0.5), cr(0.25)];
        let pts = sample_points(16, 3.0);
        let samples: Vec<C64> = pts.iter().map(|s| horner(&coef, *s)).collect();
        let got = trim_polynomial(&dft_coefficients(&samples, 3.0), 3.0, 1e-12);
        assert_eq!(got.len(), 4);
        for (a, b) in got.iter().zip(coef.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn lm_solves_a_small_system() {
        let f = |z: &[C64]| vec![z[0] * z[0] + z[1] - 3.0, z[0] - z[1] + 1.0];
        let (z, err) = levenberg_marquardt(&f, &[cr(0.3), cr(0.2)], LmOptions::default());
        assert!(err < 1e-12, "{err}");
        assert!(norm_max(&f(&z)) < 1e-12);
    }
}
