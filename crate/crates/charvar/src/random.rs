//! Random sampling helpers shared by the samplers and the verification suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mat2::{c, conj_by, cr, kappa_of, Mat2, C64};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Points excluded from the generic region, with their exclusion radius.
pub const GENERIC_EXCLUSION_RADIUS: f64 = 1e-3;

fn special_traces() -> [f64; 9] {
    let (s2, s3) = (2f64.sqrt(), 3f64.sqrt());
    [0.0, 1.0, -1.0, 2.0, -2.0, s2, -s2, s3, -s3]
}

/// True when `t` lies in the generic region: `|t|` in `[0.5, 3.5]` and away
/// from `0, +-1, +-sqrt 2, +-sqrt 3, +-2`.
pub fn in_generic_region(t: C64) -> bool {
    let r = t.norm();
    (0.5..=3.5).contains(&r)
        && special_traces()
            .iter()
            .all(|&p| (t - p).norm() >= GENERIC_EXCLUSION_RADIUS)
}

/// Uniform draw (in area) from the generic annulus.
pub fn generic_trace<R: Rng>(rng: &mut R) -> C64 {
    loop {
        let r = (rng.gen_range(0.25..12.25f64)).sqrt();
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        let t = C64::from_polar(r, th);
        if in_generic_region(t) {
            return t;
        }
    }
}

/// A complex number with modest real and imaginary parts.
pub fn complex_in_box<R: Rng>(rng: &mut R, half_width: f64) -> C64 {
    c(
        rng.gen_range(-half_width..half_width),
        rng.gen_range(-half_width..half_width),
    )
}

/// Random unit-determinant matrix with entries of order one.
pub fn random_sl2<R: Rng>(rng: &mut R) -> Mat2 {
    loop {
        let m = Mat2::new(
            complex_in_box(rng, 1.0),
            complex_in_box(rng, 1.0),
            complex_in_box(rng, 1.0),
            complex_in_box(rng, 1.0),
        );
        if m.det().norm() > 0.3 {
            return m.normalized();
        }
    }
}

/// Random element of trace `t`, conjugate to `d(kappa)` (or to `+-p` when
/// `t = +-2`).
pub fn random_in_trace<R: Rng>(rng: &mut R, t: C64) -> Mat2 {
    let g = random_sl2(rng);
    let base = if (t * t - 4.0).norm() < 1e-12 {
        let eps = if t.re >= 0.0 { 1.0 } else { -1.0 };
        Mat2::unipotent(cr(1.0)).scale(cr(eps))
    } else {
        Mat2::diag(kappa_of(t))
    };
    conj_by(&g, &base)
}
