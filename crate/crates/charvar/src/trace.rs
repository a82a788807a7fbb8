//! Fricke trace calculus for triples of trace-`t` matrices, canonical pair and
//! triple constructors, fibers `C_t^r(a)`, pair alignment and the chain moduli
//! solver.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mat2::{conj_by, cr, kappa_of, normal_frame, tr2, Mat2, Mat2Error, NormalForm, TraceValue, C64};
use crate::random::seeded;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TraceError {
    #[error("Fricke relation violated: |f_t| = {residual:e}")]
    InconsistentFricke { residual: f64 },
    #[error("pair is reducible (shares an eigenvector)")]
    ReduciblePair,
    #[error("target trace {r} lies on the reducible locus {{2, t^2-2}}")]
    DegenerateTarget { r: C64 },
    #[error("trace data disagree by {mismatch:e}")]
    TraceMismatch { mismatch: f64 },
    #[error("chain trace a_{index} lies outside B_t")]
    DegenerateTrace { index: usize },
    #[error("chain needs n >= 3 constraints, got {0}")]
    ChainTooShort(usize),
    #[error("expected {expected} fiber parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("fiber parameter must be nonzero off the parabolic locus")]
    ZeroFiberParameter,
    #[error("matrix is central, not in G(t)")]
    CentralElement,
    #[error(transparent)]
    Mat2(#[from] Mat2Error),
}

/// Default tolerance on `|f_t|` for accepting Fricke data.
pub const TOL_FRICKE: f64 = 1e-8;
/// Margin for membership in `B_t = C \ {2, t^2 - 2}`.
pub const B_T_MARGIN: f64 = 1e-6;

/// `f_t(r1, r2, r3; r)`, symmetric in `r1, r2, r3` and quadratic in `r`.
pub fn f_t_eval(t: C64, r1: C64, r2: C64, r3: C64, r: C64) -> C64 {
    let s = r1 + r2 + r3;
    let t2 = t * t;
    r * r + t * (t2 - s) * r + t2 * (3.0 - s) + r1 * r1 + r2 * r2 + r3 * r3 + r1 * r2 * r3 - 4.0
}

/// `tr(a1 a3 a2)` from the trace coordinates of a triple with common trace `t`.
pub fn swapped_triple_trace(t: C64, r12: C64, r13: C64, r23: C64, r123: C64) -> C64 {
    t * (r12 + r13 + r23) - t * t * t - r123
}

/// Trace coordinates `(t; t12, t13, t23; t123)` of a triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrickeData {
    pub t: C64,
    pub t12: C64,
    pub t13: C64,
    pub t23: C64,
    pub t123: C64,
}

impl FrickeData {
    pub fn of_triple(a1: &Mat2, a2: &Mat2, a3: &Mat2) -> Self {
        FrickeData {
            t: a1.trace(),
            t12: tr2(a1, a2),
            t13: tr2(a1, a3),
            t23: tr2(a2, a3),
            t123: tr2(&(*a1 * *a2), a3),
        }
    }

    pub fn residual(&self) -> f64 {
        f_t_eval(self.t, self.t12, self.t13, self.t23, self.t123).norm()
    }

    pub fn is_consistent(&self) -> bool {
        self.residual() <= 1e-9
    }
}

/// Roots of `f_t(r1, r2, r3; .)`, ordered lexicographically on `(Re, Im)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrickeRoots {
    pub roots: (C64, C64),
    pub double: bool,
}

pub fn solve_f_t(t: C64, r1: C64, r2: C64, r3: C64) -> FrickeRoots {
    let s = r1 + r2 + r3;
    let t2 = t * t;
    let b = t * (t2 - s);
    let c0 = t2 * (3.0 - s) + r1 * r1 + r2 * r2 + r3 * r3 + r1 * r2 * r3 - 4.0;
    let (p, q, double) = quadratic_roots(b, c0);
    FrickeRoots { roots: (p, q), double }
}

/// Roots of `z^2 + b z + c`, ordered by `(Re, Im)`, with a double-root flag.
pub fn quadratic_roots(b: C64, c0: C64) -> (C64, C64, bool) {
    let disc = b * b - 4.0 * c0;
    let sq = disc.sqrt();
    // avoid cancellation: compute the larger root first
    let q = if (b.conj() * sq).re >= 0.0 {
        -(b + sq) / 2.0
    } else {
        -(b - sq) / 2.0
    };
    let (z1, z2) = if q.norm() == 0.0 {
        (cr(0.0), cr(0.0))
    } else {
        (q, c0 / q)
    };
    let (lo, hi) = order_pair(z1, z2);
    (lo, hi, disc.norm() < 1e-12)
}

/// Lexicographic order on `(Re, Im)`; ties keep the first argument first.
pub fn order_pair(a: C64, b: C64) -> (C64, C64) {
    if lex_less(b, a) {
        (b, a)
    } else {
        (a, b)
    }
}

pub fn lex_less(a: C64, b: C64) -> bool {
    a.re < b.re || (a.re == b.re && a.im < b.im)
}

pub fn sort_lex(v: &mut [C64]) {
    v.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

/// Distance of `r` from the reducible locus `{2, t^2 - 2}`.
pub fn b_t_distance(t: C64, r: C64) -> f64 {
    (r - 2.0).norm().min((r - t * t + 2.0).norm())
}

pub fn in_b_t(t: C64, r: C64, margin: f64) -> bool {
    b_t_distance(t, r) >= margin
}

/// `tr[x, y] - 2`; vanishes exactly on reducible pairs.
pub fn commutator_trace_defect(x: &Mat2, y: &Mat2) -> C64 {
    let comm = *x * *y * x.adjugate() * y.adjugate();
    comm.trace() - 2.0
}

/// Reducibility test for a pair, scaled by the size of the entries.
pub fn is_reducible_pair(x: &Mat2, y: &Mat2, tol: f64) -> bool {
    let scale = (1.0 + x.norm_inf()).powi(2) * (1.0 + y.norm_inf()).powi(2);
    commutator_trace_defect(x, y).norm() <= tol * scale
}

/// The canonical pair `(a1, a2)` in `G(t)^2` with `tr(a1 a2) = t12`.
///
/// Off the parabolic locus `a1 = d(kappa)` and `a2` has a unit upper-right
/// entry; at `t = 2 eps` the first element is `eps p` and `a2` is lower
/// triangular.
pub fn canonical_pair(t: C64, t12: C64) -> (Mat2, Mat2) {
    let tv = TraceValue::new(t);
    if tv.is_parabolic(1e-12) {
        let eps = if t.re >= 0.0 { 1.0 } else { -1.0 };
        let a1 = Mat2::unipotent(cr(1.0)).scale(cr(eps));
        let lower = cr(eps) * (t12 - 2.0);
        let a2 = Mat2::new(cr(eps), cr(0.0), lower, cr(eps));
        return (a1, a2);
    }
    let k = tv.kappa;
    let kinv = k.inv();
    let x = (t12 - kinv * t) / (k - kinv);
    let y = x * (t - x) - 1.0;
    (Mat2::diag(k), Mat2::new(x, cr(1.0), y, t - x))
}

/// The unique `a3` in `G(t)` with prescribed traces against an irreducible
/// pair, written as `alpha e + beta a1 + gamma a2 + delta a1 a2`.
pub fn complete_triple(a1: &Mat2, a2: &Mat2, t: C64, t13: C64, t23: C64, t123: C64) -> Result<Mat2, TraceError> {
    let t12 = tr2(a1, a2);
    let residual = f_t_eval(t, t12, t13, t23, t123).norm();
    let scale = 1.0 + t.norm().powi(3) + t12.norm().powi(2) + t13.norm().powi(2) + t23.norm().powi(2);
    if residual > TOL_FRICKE * scale {
        return Err(TraceError::InconsistentFricke { residual });
    }
    if is_reducible_pair(a1, a2, 1e-10) {
        return Err(TraceError::ReduciblePair);
    }
    let a12 = *a1 * *a2;
    let basis = [Mat2::identity(), *a1, *a2, a12];
    let probes = basis;
    let gram = DMatrix::from_fn(4, 4, |i, j| tr2(&probes[i], &basis[j]));
    let rhs = DVector::from_vec(vec![t, t13, t23, t123]);
    let sv = gram.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smin <= 0.0 || smax / smin > 1e12 {
        return Err(TraceError::ReduciblePair);
    }
    let coef = gram.lu().solve(&rhs).ok_or(TraceError::ReduciblePair)?;
    let mut a3 = Mat2::zero();
    for (b, k) in basis.iter().zip(coef.iter()) {
        a3 = a3 + b.scale(*k);
    }
    Ok(a3)
}

/// A point of `C_t^r(a) = { x in G(t) : tr(a x) = r }`.
///
/// Off the parabolic locus `u` is the upper-right entry in the eigen-frame of
/// `a` (so `u != 0`); at `t = 2 eps` it is the diagonal offset.
pub fn sample_ctr(a: &Mat2, t: C64, r: C64, u: C64) -> Result<Mat2, TraceError> {
    if !in_b_t(t, r, 1e-9) {
        return Err(TraceError::DegenerateTarget { r });
    }
    let (p, nf) = normal_frame(a, kappa_of(t));
    let half = t / 2.0;
    let local = match nf {
        NormalForm::Diagonal { kappa } => {
            if u.norm() == 0.0 {
                return Err(TraceError::ZeroFiberParameter);
            }
            let alpha = (r - t * t / 2.0) / (kappa - kappa.inv());
            let bc = half * half - 1.0 - alpha * alpha;
            Mat2::new(half + alpha, u, bc / u, half - alpha)
        }
        NormalForm::Parabolic { eps } => {
            let lower = cr(eps) * (r - 2.0);
            Mat2::new(half + u, -u * u / lower, lower, half - u)
        }
        NormalForm::Central { .. } => return Err(TraceError::CentralElement),
    };
    Ok(conj_by(&p, &local))
}

fn trace_scale(m: &[Mat2]) -> f64 {
    m.iter().map(|x| 1.0 + x.norm_inf()).fold(1.0, f64::max)
}

/// The conjugator `c` with `c src c^-1 = dst` for irreducible pairs with equal
/// trace data. Unique up to sign; the sign is fixed so that the largest entry
/// of `c` has positive real part.
pub fn align_pair(src: (&Mat2, &Mat2), dst: (&Mat2, &Mat2)) -> Result<Mat2, TraceError> {
    let (p1, p2) = src;
    let (q1, q2) = dst;
    let scale = trace_scale(&[*p1, *p2, *q1, *q2]).powi(2);
    let mismatch = [
        (p1.trace() - q1.trace()).norm(),
        (p2.trace() - q2.trace()).norm(),
        (tr2(p1, p2) - tr2(q1, q2)).norm(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if mismatch > 1e-8 * scale {
        return Err(TraceError::TraceMismatch { mismatch });
    }
    if is_reducible_pair(p1, p2, 1e-10) || is_reducible_pair(q1, q2, 1e-10) {
        return Err(TraceError::ReduciblePair);
    }
    // c p - q c = 0 for both pairs: 8 linear equations in the 4 entries of c
    let basis = [
        Mat2::new(cr(1.0), cr(0.0), cr(0.0), cr(0.0)),
        Mat2::new(cr(0.0), cr(1.0), cr(0.0), cr(0.0)),
        Mat2::new(cr(0.0), cr(0.0), cr(1.0), cr(0.0)),
        Mat2::new(cr(0.0), cr(0.0), cr(0.0), cr(1.0)),
    ];
    let mut sys = DMatrix::<C64>::zeros(8, 4);
    for (j, e) in basis.iter().enumerate() {
        let l1 = (*e * *p1 - *q1 * *e).entries();
        let l2 = (*e * *p2 - *q2 * *e).entries();
        for i in 0..4 {
            sys[(i, j)] = l1[i];
            sys[(i + 4, j)] = l2[i];
        }
    }
    let v = null_vector(&sys);
    let cm = Mat2::from_entries([v[0], v[1], v[2], v[3]]);
    if cm.det().norm() < 1e-14 {
        return Err(TraceError::ReduciblePair);
    }
    Ok(fix_sign(cm.normalized()))
}

/// Right singular vector of the smallest singular value.
pub(crate) fn null_vector(a: &DMatrix<C64>) -> Vec<C64> {
    let n = a.ncols();
    // work with the n x n Gram matrix so the full V is always available
    let gram = a.adjoint() * a;
    let svd = gram.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, s)| if *s < acc.1 { (i, *s) } else { acc });
    (0..n).map(|j| v_t[(imin, j)].conj()).collect()
}

fn fix_sign(m: Mat2) -> Mat2 {
    let e = m.entries();
    let mut best = 0;
    for i in 1..4 {
        if e[i].norm() > e[best].norm() * (1.0 + 1e-9) {
            best = i;
        }
    }
    let lead = e[best];
    if lead.re < 0.0 || (lead.re == 0.0 && lead.im < 0.0) {
        -m
    } else {
        m
    }
}

/// How the pair `(x1, b)` sits, which decides the shape of the bridge fiber.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BridgeCase {
    Irreducible,
    ReducibleNonCommuting,
    /// `x1 = b^eps`.
    Commuting {
        eps: i8,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum BridgeSet {
    Finite(Vec<Mat2>),
    /// The whole fiber `C_t^r(center)`.
    Family {
        center: Mat2,
        trace: C64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeSolution {
    pub case: BridgeCase,
    pub set: BridgeSet,
}

impl BridgeSolution {
    pub fn is_empty(&self) -> bool {
        matches!(&self.set, BridgeSet::Finite(v) if v.is_empty())
    }
}

/// All `x2` in `G(t)` with `tr(x1 x2) = a2` and `tr(x2 b) = a3`.
pub fn solve_bridge(t: C64, x1: &Mat2, b: &Mat2, a2: C64, a3: C64) -> Result<BridgeSolution, TraceError> {
    let scale = trace_scale(&[*x1, *b]);
    if x1.commutator_norm(b) <= 1e-10 * scale * scale {
        let eps: i8 = if x1.dist(b) <= x1.dist(&b.adjugate()) { 1 } else { -1 };
        let consistent = if eps == 1 { a2 - a3 } else { a2 + a3 - t * t };
        let set = if consistent.norm() <= 1e-9 * (1.0 + t.norm().powi(2)) {
            BridgeSet::Family { center: *b, trace: a3 }
        } else {
            BridgeSet::Finite(vec![])
        };
        return Ok(BridgeSolution {
            case: BridgeCase::Commuting { eps },
            set,
        });
    }
    if is_reducible_pair(x1, b, 1e-10) {
        let sol = reducible_bridge(t, x1, b, a2, a3);
        return Ok(BridgeSolution {
            case: BridgeCase::ReducibleNonCommuting,
            set: BridgeSet::Finite(sol.into_iter().collect()),
        });
    }
    let c12 = tr2(x1, b);
    let roots = solve_f_t(t, c12, a2, a3);
    let mut out = Vec::new();
    let (r1, r2) = roots.roots;
    for r in if roots.double { vec![r1] } else { vec![r1, r2] } {
        out.push(complete_triple(x1, b, t, a2, a3, r)?);
    }
    Ok(BridgeSolution {
        case: BridgeCase::Irreducible,
        set: BridgeSet::Finite(out),
    })
}

/// Closed-form bridge for a reducible, non-commuting pair. Only occurs off the
/// parabolic locus: reducible pairs of parabolics with equal trace commute.
fn reducible_bridge(t: C64, x1: &Mat2, b: &Mat2, a2: C64, a3: C64) -> Option<Mat2> {
    let kappa0 = kappa_of(t);
    let (p, nf) = normal_frame(x1, kappa0);
    let NormalForm::Diagonal { .. } = nf else {
        return None;
    };
    // b in the eigenframe of x1; the shared eigenvector is a basis vector
    let bl = p.inverse_general() * *b * p;
    let (frame, kappa, lam) = if bl.a21.norm() <= bl.a12.norm() {
        (p, kappa0, bl.a11)
    } else {
        // swap the basis so the shared eigenvector comes first
        let swap = Mat2::new(cr(0.0), cr(1.0), cr(-1.0), cr(0.0));
        let q = p * swap;
        let bq = q.inverse_general() * *b * q;
        (q, kappa0.inv(), bq.a11)
    };
    let bl = frame.inverse_general() * *b * frame;
    // rescale so the corner of b is one
    let s = bl.a12.sqrt();
    let scale = Mat2::new(s, cr(0.0), cr(0.0), s.inv());
    let frame = frame * scale;
    let eps: f64 = if (lam - kappa).norm() <= (lam - kappa.inv()).norm() {
        1.0
    } else {
        -1.0
    };
    let kinv = kappa.inv();
    let y11 = (a2 - kinv * t) / (kappa - kinv);
    let y22 = (kappa * t - a2) / (kappa - kinv);
    let y21 = a3 - eps * a2 + (eps - 1.0) * t * t / 2.0;
    if y21.norm() <= 1e-12 * (1.0 + a3.norm() + a2.norm()) {
        return None;
    }
    let y12 = (y11 * y22 - 1.0) / y21;
    Some(conj_by(&frame, &Mat2::new(y11, y12, y21, y22)))
}

/// Data for the moduli space of chains `x_0 = a, x_1, ..., x_{n-1}, x_n = b`
/// with `tr(x_{i-1} x_i) = a_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub t: C64,
    pub a: Mat2,
    pub b: Mat2,
    pub traces: Vec<C64>,
}

impl ChainSpec {
    pub fn n(&self) -> usize {
        self.traces.len()
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.n() < 3 {
            return Err(TraceError::ChainTooShort(self.n()));
        }
        for (i, ai) in self.traces.iter().enumerate() {
            if !in_b_t(self.t, *ai, B_T_MARGIN) {
                return Err(TraceError::DegenerateTrace { index: i + 1 });
            }
        }
        Ok(())
    }
}

/// Fiber coordinates for the free steps plus the root used to close the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainParams {
    pub fibers: Vec<C64>,
    pub root_choice: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// `x_1, ..., x_{n-1}`.
    pub links: Vec<Mat2>,
    pub residual: f64,
    pub closing_case: BridgeCase,
}

impl Chain {
    /// The full sequence including the endpoints.
    pub fn with_endpoints(&self, spec: &ChainSpec) -> Vec<Mat2> {
        let mut v = Vec::with_capacity(self.links.len() + 2);
        v.push(spec.a);
        v.extend_from_slice(&self.links);
        v.push(spec.b);
        v
    }
}

/// Largest trace-constraint violation of a chain, including membership in `G(t)`.
pub fn chain_residual(spec: &ChainSpec, links: &[Mat2]) -> f64 {
    let mut all = vec![spec.a];
    all.extend_from_slice(links);
    all.push(spec.b);
    let mut worst: f64 = 0.0;
    for (i, w) in all.windows(2).enumerate() {
        worst = worst.max((tr2(&w[0], &w[1]) - spec.traces[i]).norm());
    }
    for x in links {
        worst = worst.max((x.trace() - spec.t).norm()).max(x.det_drift());
    }
    worst
}

/// Build a chain by walking the fibers `C_t^{a_i}(x_{i-1})` for the first
/// `n - 2` steps and closing with [`solve_bridge`]. Returns `Ok(None)` when the
/// closing bridge has no solution.
pub fn chain_sample(spec: &ChainSpec, params: &ChainParams, seed: u64) -> Result<Option<Chain>, TraceError> {
    spec.validate()?;
    let n = spec.n();
    if params.fibers.len() != n - 2 {
        return Err(TraceError::ParamCount {
            expected: n - 2,
            got: params.fibers.len(),
        });
    }
    let t = spec.t;
    let mut links = Vec::with_capacity(n - 1);
    let mut prev = spec.a;
    for (i, u) in params.fibers.iter().enumerate() {
        let x = sample_ctr(&prev, t, spec.traces[i], *u)?;
        links.push(x);
        prev = x;
    }
    let bridge = solve_bridge(t, &prev, &spec.b, spec.traces[n - 2], spec.traces[n - 1])?;
    let last = match &bridge.set {
        BridgeSet::Finite(v) if v.is_empty() => return Ok(None),
        BridgeSet::Finite(v) => v[params.root_choice % v.len()],
        BridgeSet::Family { center, trace } => {
            let mut rng = seeded(seed);
            let u = crate::random::complex_in_box(&mut rng, 1.0) + cr(0.1);
            sample_ctr(center, t, *trace, u)?
        }
    };
    links.push(last);
    let residual = chain_residual(spec, &links);
    Ok(Some(Chain {
        links,
        residual,
        closing_case: bridge.case,
    }))
}

/// Draw fiber parameters away from zero.
pub fn random_chain_params<R: Rng>(rng: &mut R, n: usize) -> ChainParams {
    let fibers = (0..n - 2)
        .map(|_| {
            let r = rng.gen_range(0.5..1.5f64);
            C64::from_polar(r, rng.gen_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    ChainParams {
        fibers,
        root_choice: rng.gen_range(0..2),
    }
}
