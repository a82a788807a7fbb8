//! Chart constraints, sampling, local dimension estimates and the gluing
//! constructions that produce representations from tangle pieces.

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::diagram::{max_defect, Corner, PortGraph};
use crate::knot::{
    build_pretzel_rep, build_q1_rep, build_q2_rep, builtin, case1_table, character_eval, dehn_filling_solutions,
    filling_residual, reflect_values, vertical_twist_from, ChartRep, KnotError, KnotName, Slope, WirtingerRep,
    WordError,
};
use crate::mat2::{cr, has_common_eigenvector, is_commuting, tr2, tr3, Mat2, C64, TOL_COMMUTE};
use crate::numeric::{central_jacobian, polynomial_roots};
use crate::random::{complex_in_box, generic_trace, seeded};
use crate::tangle::{boundary_data, closure_roots, stack, Closure, SearchBox, TangleDiagram, TangleRep};
use crate::trace::{
    align_pair, b_t_distance, canonical_pair, chain_sample, complete_triple, f_t_eval, in_b_t, solve_f_t,
    swapped_triple_trace, ChainParams, ChainSpec, TraceError, B_T_MARGIN, TOL_FRICKE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplorerError {
    #[error("singular values {near:?} are within a factor 10 of the rank threshold {threshold:e}")]
    IllConditioned { threshold: f64, near: Vec<f64> },
    #[error("analytic and finite-difference gradients differ by {deviation:e}")]
    GradientMismatch { deviation: f64 },
    #[error("point is not on the constraint set (residual {residual:e})")]
    OffVariety { residual: f64 },
    #[error("the closing bridge of the chain has no solution")]
    ChainClosureFailure,
    #[error("alignment failed: {0}")]
    AlignmentFailure(TraceError),
    #[error("boundary traces disagree by {mismatch:e}")]
    TraceMismatch { mismatch: f64 },
    #[error("Fricke relation violated (residual {residual:e})")]
    InconsistentFricke { residual: f64 },
    #[error("invalid gluing data: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Knot(#[from] KnotError),
}

type Evaluator = Box<dyn Fn(&[C64]) -> (C64, Vec<C64>) + Send + Sync>;

/// A holomorphic constraint `f(x) = 0` with its gradient.
pub struct Constraint {
    pub label: String,
    eval: Evaluator,
}

impl Constraint {
    pub fn new<F>(label: impl Into<String>, f: F) -> Constraint
    where
        F: Fn(&[C64]) -> (C64, Vec<C64>) + Send + Sync + 'static,
    {
        Constraint {
            label: label.into(),
            eval: Box::new(f),
        }
    }

    pub fn value(&self, x: &[C64]) -> C64 {
        (self.eval)(x).0
    }

    pub fn gradient(&self, x: &[C64]) -> Vec<C64> {
        (self.eval)(x).1
    }
}

impl std::fmt::Debug for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Constraint").field("label", &self.label).finish()
    }
}

#[derive(Debug)]
pub struct ConstraintSystem {
    pub variables: Vec<String>,
    pub constraints: Vec<Constraint>,
}

impl ConstraintSystem {
    pub fn residuals(&self, x: &[C64]) -> Vec<C64> {
        self.constraints.iter().map(|c| c.value(x)).collect()
    }

    pub fn max_residual(&self, x: &[C64]) -> f64 {
        self.residuals(x).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn jacobian(&self, x: &[C64]) -> DMatrix<C64> {
        let mut jac = DMatrix::zeros(self.constraints.len(), self.variables.len());
        for (i, c) in self.constraints.iter().enumerate() {
            for (j, g) in c.gradient(x).into_iter().enumerate() {
                jac[(i, j)] = g;
            }
        }
        jac
    }
}

/// `f_t(r1, r2, r3; r)` and its partials in `t, r1, r2, r3, r`.
fn f_t_with_gradient(t: C64, r1: C64, r2: C64, r3: C64, r: C64) -> (C64, [C64; 5]) {
    let s = r1 + r2 + r3;
    let tt = t * t;
    let dt = (3.0 * tt - s) * r + 2.0 * t * (3.0 - s);
    let dr = |a: C64, b: C64, c: C64| -t * r - tt + 2.0 * a + b * c;
    (
        f_t_eval(t, r1, r2, r3, r),
        [
            dt,
            dr(r1, r2, r3),
            dr(r2, r1, r3),
            dr(r3, r1, r2),
            2.0 * r + t * (tt - s),
        ],
    )
}

/// `f_t(1, k, u; w)` over the variables `(t, u, w)` placed at the given
/// indices of an `n`-vector.
fn fricke_constraint(label: &str, k: f64, n: usize, idx: [usize; 3]) -> Constraint {
    Constraint::new(label, move |x: &[C64]| {
        let (t, u, w) = (x[idx[0]], x[idx[1]], x[idx[2]]);
        let (v, g) = f_t_with_gradient(t, cr(1.0), cr(k), u, w);
        let mut grad = vec![cr(0.0); n];
        grad[idx[0]] += g[0];
        grad[idx[1]] += g[3];
        grad[idx[2]] += g[4];
        (v, grad)
    })
}

/// Variable names of a chart, in parameter order.
pub fn chart_variables(chart: KnotName) -> &'static [&'static str] {
    match chart {
        KnotName::P334 => &["t", "t13", "t123", "t134"],
        KnotName::Q1 => &["t", "t23", "t123"],
        KnotName::Q2 => &["t", "t13", "t123", "s"],
    }
}

pub fn chart_constraints(chart: KnotName) -> ConstraintSystem {
    let variables = chart_variables(chart).iter().map(|s| s.to_string()).collect();
    let constraints = match chart {
        KnotName::P334 => vec![
            fricke_constraint("f_t(1,1,t13;t123)", 1.0, 4, [0, 1, 2]),
            fricke_constraint("f_t(1,0,t13;t134)", 0.0, 4, [0, 1, 3]),
        ],
        KnotName::Q1 => vec![fricke_constraint("f_t(1,1,t23;t123)", 1.0, 3, [0, 1, 2])],
        KnotName::Q2 => vec![
            fricke_constraint("f_t(1,1,t13;t123)", 1.0, 4, [0, 1, 2]),
            Constraint::new("(s+2-t^2)(s-1)^2-(t13-t^2+2)", |x: &[C64]| {
                let (t, t13, s) = (x[0], x[1], x[3]);
                let k = s + 2.0 - t * t;
                let u = s - 1.0;
                let v = k * u * u - (t13 - t * t + 2.0);
                let grad = vec![-2.0 * t * u * u + 2.0 * t, cr(-1.0), cr(0.0), u * u + 2.0 * k * u];
                (v, grad)
            }),
        ],
    };
    ConstraintSystem { variables, constraints }
}

/// A sampled point of a chart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartPoint {
    pub chart: KnotName,
    pub params: Vec<C64>,
    pub residuals: Vec<f64>,
    /// Distance to the nearest excluded locus.
    pub excluded_margin: f64,
}

impl ChartPoint {
    pub fn from_params(chart: KnotName, params: Vec<C64>) -> ChartPoint {
        let residuals = chart_constraints(chart)
            .residuals(&params)
            .iter()
            .map(|z| z.norm())
            .collect();
        let excluded_margin = excluded_margin(chart, &params);
        ChartPoint {
            chart,
            params,
            residuals,
            excluded_margin,
        }
    }

    pub fn t(&self) -> C64 {
        self.params[0]
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().cloned().fold(0.0, f64::max)
    }

    /// The chart representation at this point.
    pub fn build(&self) -> Result<ChartRep, KnotError> {
        let p = &self.params;
        match self.chart {
            KnotName::P334 => build_pretzel_rep(p[0], p[1], p[2], p[3]),
            KnotName::Q1 => build_q1_rep(p[0], p[1], p[2]),
            KnotName::Q2 => build_q2_rep(p[0], p[1], p[2], p[3]),
        }
    }
}

fn excluded_margin(chart: KnotName, p: &[C64]) -> f64 {
    let t = p[0];
    match chart {
        KnotName::P334 => b_t_distance(t, p[1]),
        KnotName::Q1 => b_t_distance(t, cr(1.0)),
        KnotName::Q2 => b_t_distance(t, p[1]).min(b_t_distance(t, p[3])),
    }
}

fn pick<R: Rng>(rng: &mut R, roots: (C64, C64)) -> C64 {
    if rng.gen::<bool>() {
        roots.0
    } else {
        roots.1
    }
}

/// Roots of `(s + 2 - t^2)(s - 1)^2 = t13 - t^2 + 2`, polished by Newton steps.
pub fn q2_s_roots(t: C64, t13: C64) -> Vec<C64> {
    let k0 = 2.0 - t * t;
    // s^3 + (k0 - 2) s^2 + (1 - 2 k0) s - t13
    let coef = [-t13, 1.0 - 2.0 * k0, k0 - 2.0, cr(1.0)];
    polynomial_roots(&coef)
        .into_iter()
        .map(|mut s| {
            for _ in 0..3 {
                let f = ((s + coef[2]) * s + coef[1]) * s + coef[0];
                let df = (3.0 * s + 2.0 * coef[2]) * s + coef[1];
                if df.norm() > 0.0 {
                    s -= f / df;
                }
            }
            s
        })
        .collect()
}

/// Deterministic chart samples. Free coordinates are drawn from the generic
/// region, the remaining ones solved in closed form; points within
/// `1e-6` of an excluded locus are rejected.
pub fn sample_chart(chart: KnotName, count: usize, seed: u64) -> Vec<ChartPoint> {
    let mut rng = seeded(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let t = generic_trace(&mut rng);
        let params = match chart {
            KnotName::P334 => {
                let t13 = complex_in_box(&mut rng, 2.0);
                let t123 = pick(&mut rng, solve_f_t(t, cr(1.0), cr(1.0), t13).roots);
                let t134 = pick(&mut rng, solve_f_t(t, cr(1.0), cr(0.0), t13).roots);
                vec![t, t13, t123, t134]
            }
            KnotName::Q1 => {
                let t23 = complex_in_box(&mut rng, 2.0);
                let t123 = pick(&mut rng, solve_f_t(t, cr(1.0), cr(1.0), t23).roots);
                vec![t, t23, t123]
            }
            KnotName::Q2 => {
                let t13 = complex_in_box(&mut rng, 2.0);
                let roots = q2_s_roots(t, t13);
                let s = roots[rng.gen_range(0..roots.len())];
                let t123 = pick(&mut rng, solve_f_t(t, cr(1.0), cr(1.0), t13).roots);
                vec![t, t13, t123, s]
            }
        };
        let point = ChartPoint::from_params(chart, params);
        if point.excluded_margin >= B_T_MARGIN && point.max_residual() <= 1e-9 {
            out.push(point);
        }
    }
    out
}

/// The chart point over trace `t` whose free coordinate is `free`, taking the
/// first root wherever a choice is made.
pub fn chart_point_at(chart: KnotName, t: C64, free: C64) -> ChartPoint {
    let params = match chart {
        KnotName::P334 => vec![
            t,
            free,
            solve_f_t(t, cr(1.0), cr(1.0), free).roots.0,
            solve_f_t(t, cr(1.0), cr(0.0), free).roots.0,
        ],
        KnotName::Q1 => vec![t, free, solve_f_t(t, cr(1.0), cr(1.0), free).roots.0],
        KnotName::Q2 => vec![
            t,
            free,
            solve_f_t(t, cr(1.0), cr(1.0), free).roots.0,
            q2_s_roots(t, free)[0],
        ],
    };
    ChartPoint::from_params(chart, params)
}

/// One admissible trace of a Dehn filling with its end-to-end check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DehnRow {
    pub kappa: C64,
    pub t: C64,
    /// Relative residual of `m^a l^b = e` on a chart rep over `t`; `None`
    /// when `t` lies on an excluded locus of the chart.
    pub residual: Option<f64>,
}

pub const DEHN_FREE_COORDINATE: C64 = C64::new(0.3, 0.8);

/// Admissible traces for the slope `a/b`, each replayed on the chart.
pub fn dehn_table(knot: KnotName, slope: Slope) -> Result<Vec<DehnRow>, KnotError> {
    let (n, sigma) = knot.longitude_power();
    dehn_filling_solutions(n, sigma, slope)?
        .into_iter()
        .map(|s| {
            let residual = match chart_point_at(knot, s.t, DEHN_FREE_COORDINATE).build() {
                Ok(rep) => Some(filling_residual(knot, &rep.rep, slope)),
                Err(KnotError::Trace(_) | KnotError::ExcludedLocus(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(DehnRow {
                kappa: s.kappa,
                t: s.t,
                residual,
            })
        })
        .collect()
}

/// Numerical rank data of a constraint Jacobian at a point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionReport {
    pub variables: usize,
    pub constraints: usize,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub dimension: usize,
    pub rank_tol: f64,
    /// Largest relative gap between the analytic and finite-difference Jacobians.
    pub gradient_deviation: f64,
}

pub const DEFAULT_RANK_TOL: f64 = 1e-8;
const FD_STEP: f64 = 1e-6;
const FD_AGREEMENT: f64 = 1e-5;

pub fn estimate_local_dimension(
    sys: &ConstraintSystem,
    point: &[C64],
    rank_tol: f64,
) -> Result<DimensionReport, ExplorerError> {
    let n = sys.variables.len();
    let m = sys.constraints.len();
    let scale = 1.0 + point.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let residual = sys.max_residual(point);
    if residual > 1e-9 * scale * scale {
        return Err(ExplorerError::OffVariety { residual });
    }
    if m == 0 {
        return Ok(DimensionReport {
            variables: n,
            constraints: 0,
            singular_values: vec![],
            rank: 0,
            dimension: n,
            rank_tol,
            gradient_deviation: 0.0,
        });
    }
    let jac = sys.jacobian(point);
    let fd = central_jacobian(&|x: &[C64]| sys.residuals(x), point, FD_STEP);
    let gradient_deviation = jac
        .iter()
        .zip(fd.iter())
        .map(|(a, b)| (a - b).norm() / a.norm().max(1.0))
        .fold(0.0, f64::max);
    if gradient_deviation > FD_AGREEMENT {
        return Err(ExplorerError::GradientMismatch {
            deviation: gradient_deviation,
        });
    }
    let mut sv: Vec<f64> = jac.svd(false, false).singular_values.iter().cloned().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let top = sv.first().cloned().unwrap_or(0.0);
    let threshold = rank_tol * top;
    let near: Vec<f64> = sv
        .iter()
        .cloned()
        .filter(|s| *s > threshold / 10.0 && *s < threshold * 10.0)
        .collect();
    if !near.is_empty() {
        return Err(ExplorerError::IllConditioned { threshold, near });
    }
    let rank = if top == 0.0 {
        0
    } else {
        sv.iter().filter(|s| **s > threshold).count()
    };
    Ok(DimensionReport {
        variables: n,
        constraints: m,
        singular_values: sv,
        rank,
        dimension: n - rank,
        rank_tol,
        gradient_deviation,
    })
}

/// Constraints on the entries of `x_1, ..., x_{n-1}`: each lies in `G(t)`,
/// and consecutive products have the prescribed traces with `x_0 = a`,
/// `x_n = b` fixed.
pub fn chain_constraints(spec: &ChainSpec) -> ConstraintSystem {
    let n = spec.n();
    let nv = 4 * (n - 1);
    let mut variables = Vec::with_capacity(nv);
    for k in 1..n {
        for e in ["11", "12", "21", "22"] {
            variables.push(format!("x{k}_{e}"));
        }
    }
    let mut constraints = Vec::new();
    for k in 0..n - 1 {
        let o = 4 * k;
        constraints.push(Constraint::new(format!("det x{}", k + 1), move |x: &[C64]| {
            let mut g = vec![cr(0.0); nv];
            g[o] = x[o + 3];
            g[o + 1] = -x[o + 2];
            g[o + 2] = -x[o + 1];
            g[o + 3] = x[o];
            (x[o] * x[o + 3] - x[o + 1] * x[o + 2] - 1.0, g)
        }));
        let t = spec.t;
        constraints.push(Constraint::new(format!("tr x{}", k + 1), move |x: &[C64]| {
            let mut g = vec![cr(0.0); nv];
            g[o] = cr(1.0);
            g[o + 3] = cr(1.0);
            (x[o] + x[o + 3] - t, g)
        }));
    }
    let (a, b) = (spec.a.entries(), spec.b.entries());
    for i in 1..=n {
        let target = spec.traces[i - 1];
        // None means a fixed endpoint
        let left = if i == 1 { None } else { Some(4 * (i - 2)) };
        let right = if i == n { None } else { Some(4 * (i - 1)) };
        constraints.push(Constraint::new(format!("tr x{}x{}", i - 1, i), move |x: &[C64]| {
            let xl = left.map_or(a, |o| [x[o], x[o + 1], x[o + 2], x[o + 3]]);
            let xr = right.map_or(b, |o| [x[o], x[o + 1], x[o + 2], x[o + 3]]);
            let v = xl[0] * xr[0] + xl[1] * xr[2] + xl[2] * xr[1] + xl[3] * xr[3];
            let mut g = vec![cr(0.0); nv];
            if let Some(o) = left {
                g[o] += xr[0];
                g[o + 1] += xr[2];
                g[o + 2] += xr[1];
                g[o + 3] += xr[3];
            }
            if let Some(o) = right {
                g[o] += xl[0];
                g[o + 1] += xl[2];
                g[o + 2] += xl[1];
                g[o + 3] += xl[3];
            }
            (v - target, g)
        }));
    }
    ConstraintSystem { variables, constraints }
}

pub fn chain_coordinates(links: &[Mat2]) -> Vec<C64> {
    links.iter().flat_map(|x| x.entries()).collect()
}

/// Boundary representations `rho_0, ..., rho_n` for `D(T_0 * ... * T_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlueSpec {
    pub t: C64,
    pub reps: Vec<TangleRep>,
}

impl GlueSpec {
    pub fn n(&self) -> usize {
        self.reps.len().saturating_sub(1)
    }

    /// `a_i = t^2 - tr_v(rho_i)` for `i = 1..n`.
    pub fn chain_traces(&self) -> Vec<C64> {
        let tt = self.t * self.t;
        self.reps[1..].iter().map(|r| tt - boundary_data(r).tr_v).collect()
    }

    pub fn validate(&self) -> Result<(), ExplorerError> {
        if self.n() < 3 {
            return Err(ExplorerError::InvalidSpec(format!(
                "need at least 4 pieces, got {}",
                self.reps.len()
            )));
        }
        for (i, r) in self.reps.iter().enumerate() {
            let bd = boundary_data(r);
            let scale = r.values.iter().map(|v| v.norm_inf()).fold(1.0, f64::max);
            if bd.g.dist(&Mat2::identity()) > 1e-9 * scale * scale {
                return Err(ExplorerError::InvalidSpec(format!(
                    "g of piece {i} is not the identity"
                )));
            }
            if i > 0 && !in_b_t(self.t, bd.tr_v, B_T_MARGIN) {
                return Err(ExplorerError::InvalidSpec(format!(
                    "tr_v of piece {i} is in {{2, t^2 - 2}}"
                )));
            }
        }
        Ok(())
    }

    pub fn chain_spec(&self) -> ChainSpec {
        let r0 = &self.reps[0];
        ChainSpec {
            t: self.t,
            a: r0.end(Corner::Se),
            b: r0.end(Corner::Ne).adjugate(),
            traces: self.chain_traces(),
        }
    }
}

/// A representation of a closed diagram assembled from pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct GluedRep {
    pub graph: PortGraph,
    pub ports: Vec<Mat2>,
    pub port_defect: f64,
    pub t: C64,
    /// The chain `x_0, ..., x_n` for the stacked construction; empty otherwise.
    pub chain: Vec<Mat2>,
    pub named: Vec<(&'static str, Mat2)>,
    /// Whether the chain endpoints commute; only set by the stacked construction.
    pub endpoints_commute: Option<bool>,
    pub irreducible: bool,
}

impl GluedRep {
    /// View as a chart representation of a builtin knot with the same diagram.
    pub fn chart_rep(&self, knot: KnotName, named: Vec<(&'static str, Mat2)>) -> Result<ChartRep, ExplorerError> {
        let (d, _) = builtin(knot);
        if d.graph != self.graph {
            return Err(ExplorerError::InvalidSpec(format!("glued diagram is not {knot}")));
        }
        Ok(ChartRep {
            knot,
            rep: WirtingerRep::from_ports(d, &self.ports, self.t),
            ports: self.ports.clone(),
            port_defect: self.port_defect,
            named,
        })
    }
}

fn align_onto(rep: &TangleRep, src: (Mat2, Mat2), dst: (Mat2, Mat2)) -> Result<TangleRep, ExplorerError> {
    let c = align_pair((&src.0, &src.1), (&dst.0, &dst.1)).map_err(ExplorerError::AlignmentFailure)?;
    Ok(rep.conj(&c))
}

fn irreducible(gens: &[Mat2]) -> bool {
    !has_common_eigenvector(&gens[0], &gens[1..], 1e-8)
}

fn assemble(graph: PortGraph, offsets: &[usize], pieces: &[Vec<Mat2>]) -> (PortGraph, Vec<Mat2>, f64) {
    let mut ports = vec![Mat2::zero(); graph.port_count()];
    for (off, vals) in offsets.iter().zip(pieces) {
        for (p, v) in vals.iter().enumerate() {
            ports[off + p] = *v;
        }
    }
    let defect = max_defect(&graph.relations(), &ports);
    (graph, ports, defect)
}

/// Glue `rho_0, ..., rho_n` along a chain through `a = rho_0(se)` and
/// `b = rho_0(ne)^-1` into a representation of `D(T_0 * ... * T_n)`.
pub fn glue_theorem_pipeline(spec: &GlueSpec, params: &ChainParams, seed: u64) -> Result<GluedRep, ExplorerError> {
    spec.validate()?;
    let cs = spec.chain_spec();
    let chain = chain_sample(&cs, params, seed)?.ok_or(ExplorerError::ChainClosureFailure)?;
    let xs = chain.with_endpoints(&cs);
    let mut values = vec![spec.reps[0].values.clone()];
    for (i, rep) in spec.reps.iter().enumerate().skip(1) {
        let src = (rep.end(Corner::Ne), rep.end(Corner::Se));
        values.push(align_onto(rep, src, (xs[i - 1].adjugate(), xs[i]))?.values);
    }
    let diagrams: Vec<TangleDiagram> = spec.reps.iter().map(|r| r.diagram.clone()).collect();
    let (stacked, offsets) = stack(&diagrams);
    let (graph, ports, port_defect) = assemble(stacked.close(Closure::D), &offsets, &values);
    Ok(GluedRep {
        graph,
        ports,
        port_defect,
        t: spec.t,
        endpoints_commute: Some(is_commuting(
            &cs.a,
            &cs.b,
            TOL_COMMUTE * (1.0 + cs.a.norm_inf() * cs.b.norm_inf()),
        )),
        irreducible: irreducible(&xs),
        chain: xs,
        named: vec![],
    })
}

fn closure_root_with(p: i64, q: i64, closure: Closure, t: C64, s: C64) -> Result<TangleRep, ExplorerError> {
    let roots = closure_roots(p, q, closure, t, SearchBox::default()).map_err(KnotError::from)?;
    roots
        .into_iter()
        .find(|r| (r.s - s).norm() < 1e-6)
        .map(|r| r.rep)
        .ok_or_else(|| ExplorerError::InvalidSpec(format!("no closure root of [{p}/{q}] at {s}")))
}

/// Boundary representations of the pretzel pieces `[3], [3], [3], [4]` at
/// meridian trace `t`: numerator closure roots with `tr_v = 1, 1, 1, 0`.
pub fn pretzel_glue_spec(t: C64) -> Result<GlueSpec, ExplorerError> {
    let r3 = closure_root_with(3, 1, Closure::N, t, cr(1.0))?;
    let r4 = closure_root_with(4, 1, Closure::N, t, cr(0.0))?;
    Ok(GlueSpec {
        t,
        reps: vec![r3.clone(), r3.clone(), r3, r4],
    })
}

/// Read the pretzel quadruple off a glued chain: the right-hand arcs carry
/// `x2^-1, x3, x4^-1, x1` downward.
pub fn pretzel_from_glue(g: &GluedRep) -> Result<ChartRep, ExplorerError> {
    if g.chain.len() != 4 {
        return Err(ExplorerError::InvalidSpec(
            "pretzel chain must have four elements".into(),
        ));
    }
    let c = &g.chain;
    let named = vec![
        ("x1", c[3]),
        ("x2", c[0].adjugate()),
        ("x3", c[1]),
        ("x4", c[2].adjugate()),
    ];
    g.chart_rep(KnotName::P334, named)
}

fn layout_with_bottom_pair(d: [&TangleDiagram; 4]) -> (PortGraph, Vec<usize>) {
    let bottom = d[2].hcomp(d[3]);
    let (stacked, offs) = stack(&[d[0].clone(), d[1].clone(), bottom]);
    let offsets = vec![offs[0], offs[1], offs[2], offs[2] + d[2].graph.port_count()];
    (stacked.close(Closure::D), offsets)
}

fn mismatch_of(rep: &TangleRep, row: &[Mat2; 4]) -> f64 {
    Corner::ALL
        .iter()
        .map(|c| rep.end(*c).dist(&row[c.index()]))
        .fold(0.0, f64::max)
}

fn trace_scale(vals: &[C64]) -> f64 {
    1.0 + vals.iter().map(|z| z.norm().powi(3)).fold(0.0, f64::max)
}

/// First conditional structure: `D(T1 * T2 * (T3 + T4))` with
/// `tr_v(rho_1) = tr_v(rho_2) = a`, `tr_h(rho_3) = tr_h(rho_4) = b`, and the
/// triple coordinates `c = tr(yz)`, `r = tr(xyz)`.
pub fn case1_glue(t: C64, reps: [&TangleRep; 4], c: C64, r: C64) -> Result<GluedRep, ExplorerError> {
    let bd: Vec<_> = reps.iter().map(|x| boundary_data(x)).collect();
    let (a, b) = (bd[0].tr_v, bd[2].tr_h);
    let mismatch = (bd[0].tr_v - bd[1].tr_v).norm().max((bd[2].tr_h - bd[3].tr_h).norm());
    if mismatch > 1e-8 * trace_scale(&[a, b]) {
        return Err(ExplorerError::TraceMismatch { mismatch });
    }
    for v in [a, b] {
        if !in_b_t(t, v, B_T_MARGIN) {
            return Err(ExplorerError::InvalidSpec(format!(
                "boundary trace {v} is in {{2, t^2 - 2}}"
            )));
        }
    }
    let residual = f_t_eval(t, a, b, c, r).norm();
    if residual > TOL_FRICKE * trace_scale(&[t, a, b, c, r]) {
        return Err(ExplorerError::InconsistentFricke { residual });
    }
    let (x, y) = canonical_pair(t, a);
    let z = complete_triple(&x, &y, t, b, c, r)?;
    let table = case1_table(&x, &y, &z);
    let keys = [
        (Corner::Nw, Corner::Sw),
        (Corner::Nw, Corner::Sw),
        (Corner::Nw, Corner::Ne),
        (Corner::Nw, Corner::Ne),
    ];
    let mut values = Vec::new();
    let mut worst: f64 = 0.0;
    for (k, (rep, (c1, c2))) in reps.iter().zip(keys).enumerate() {
        let row = &table[k];
        let aligned = align_onto(rep, (rep.end(c1), rep.end(c2)), (row[c1.index()], row[c2.index()]))?;
        worst = worst.max(mismatch_of(&aligned, row));
        values.push(aligned.values);
    }
    let scale = trace_scale(&[a, b, c, r]);
    if worst > 1e-8 * scale {
        return Err(ExplorerError::TraceMismatch { mismatch: worst });
    }
    let (graph, offsets) =
        layout_with_bottom_pair([&reps[0].diagram, &reps[1].diagram, &reps[2].diagram, &reps[3].diagram]);
    let (graph, ports, port_defect) = assemble(graph, &offsets, &values);
    Ok(GluedRep {
        graph,
        ports,
        port_defect,
        t,
        chain: vec![],
        named: vec![("x", x), ("y", y), ("z", z)],
        endpoints_commute: None,
        irreducible: irreducible(&[x, y, z]),
    })
}

/// `tr(rho(sw)^-1 rho(nw))`, the trace that matches `tr(xz)` for the third
/// piece of the second conditional structure.
pub fn case2_piece_trace(rep: &TangleRep) -> C64 {
    tr2(&rep.end(Corner::Sw).adjugate(), &rep.end(Corner::Nw))
}

/// Second conditional structure: `D(T1 * T2 * (T3 + sigma(T3)))`, with the
/// fourth piece obtained by reflection transport, `b = tr(xz)` and
/// `r = tr(xyz)`.
pub fn case2_glue(t: C64, reps: [&TangleRep; 3], b: C64, r: C64) -> Result<GluedRep, ExplorerError> {
    let (a1, a2) = (boundary_data(reps[0]).tr_v, boundary_data(reps[1]).tr_v);
    let mismatch = (case2_piece_trace(reps[2]) - b).norm();
    if mismatch > 1e-8 * trace_scale(&[b]) {
        return Err(ExplorerError::TraceMismatch { mismatch });
    }
    for v in [a1, a2, b] {
        if !in_b_t(t, v, B_T_MARGIN) {
            return Err(ExplorerError::InvalidSpec(format!(
                "boundary trace {v} is in {{2, t^2 - 2}}"
            )));
        }
    }
    let residual = f_t_eval(t, a1, a2, b, r).norm();
    if residual > TOL_FRICKE * trace_scale(&[t, a1, a2, b, r]) {
        return Err(ExplorerError::InconsistentFricke { residual });
    }
    let (x, z) = canonical_pair(t, b);
    let y = complete_triple(&x, &z, t, a1, a2, swapped_triple_trace(t, a1, b, a2, r))?;
    let (xi, yi, zi) = (x.adjugate(), y.adjugate(), z.adjugate());
    let rows = [[x, xi, y, yi], [yi, y, zi, z]];
    let mut values = Vec::new();
    let mut worst: f64 = 0.0;
    for (k, rep) in reps[..2].iter().enumerate() {
        let row = &rows[k];
        let aligned = align_onto(rep, (rep.end(Corner::Nw), rep.end(Corner::Sw)), (row[0], row[2]))?;
        worst = worst.max(mismatch_of(&aligned, row));
        values.push(aligned.values);
    }
    let tau = reps[2];
    let rho3 = align_onto(tau, (tau.end(Corner::Sw).adjugate(), tau.end(Corner::Nw)), (x, z))?;
    let rho4 = reflect_values(&rho3.values);
    let d4 = tau.diagram.mirrored();
    let scale = trace_scale(&[a1, a2, b, r]);
    if worst > 1e-8 * scale {
        return Err(ExplorerError::TraceMismatch { mismatch: worst });
    }
    values.push(rho3.values);
    values.push(rho4);
    let (graph, offsets) = layout_with_bottom_pair([&reps[0].diagram, &reps[1].diagram, &tau.diagram, &d4]);
    let (graph, ports, port_defect) = assemble(graph, &offsets, &values);
    Ok(GluedRep {
        graph,
        ports,
        port_defect,
        t,
        chain: vec![],
        named: vec![("x", x), ("y", y), ("z", z)],
        endpoints_commute: None,
        irreducible: irreducible(&[x, y, z]),
    })
}

/// Numerator closure root of `[3]` with `tr_v = 1`, the twist piece shared by
/// all three builtin knots.
pub fn trefoil_piece(t: C64) -> Result<TangleRep, ExplorerError> {
    closure_root_with(3, 1, Closure::N, t, cr(1.0))
}

/// Denominator closure root of `[-1/3]` with `tr_h = b`.
pub fn vertical_piece(t: C64, b: C64) -> Result<TangleRep, ExplorerError> {
    closure_root_with(-1, 3, Closure::D, t, b)
}

/// `[-1/3]` seeded with the canonical pair of trace `s` at nw and ne.
pub fn case2_piece(t: C64, s: C64) -> TangleRep {
    let d = crate::tangle::Tangle::VTwist(-3)
        .compile()
        .expect("vertical twist compiles");
    let (z0, v0) = canonical_pair(t, s);
    let (values, _) = vertical_twist_from(&d, &z0, &v0);
    let residual = max_defect(&d.graph.relations(), &values);
    TangleRep {
        diagram: d,
        values,
        t,
        residual,
    }
}

/// A `Q1` chart point rebuilt through the first conditional structure.
pub fn q1_via_case1(p: &ChartPoint) -> Result<ChartRep, ExplorerError> {
    let (t, t23, t123) = (p.params[0], p.params[1], p.params[2]);
    let r3 = trefoil_piece(t)?;
    let v = vertical_piece(t, cr(1.0))?;
    let glued = case1_glue(t, [&r3, &r3, &v, &v], t23, t123)?;
    glued.chart_rep(KnotName::Q1, glued.named.clone())
}

/// A `Q2` chart point rebuilt through the second conditional structure.
pub fn q2_via_case2(p: &ChartPoint) -> Result<ChartRep, ExplorerError> {
    let (t, t13, t123, s) = (p.params[0], p.params[1], p.params[2], p.params[3]);
    let r3 = trefoil_piece(t)?;
    let tau = case2_piece(t, s);
    let glued = case2_glue(t, [&r3, &r3, &tau], t13, t123)?;
    glued.chart_rep(KnotName::Q2, glued.named.clone())
}

/// Chart coordinates `(t, t13, t123, t134)` of a pretzel rep.
pub fn pretzel_coordinates(rep: &ChartRep) -> Option<[C64; 4]> {
    let (x1, x2, x3, x4) = (rep.get("x1")?, rep.get("x2")?, rep.get("x3")?, rep.get("x4")?);
    Some([x1.trace(), tr2(&x1, &x3), tr3(&x1, &x2, &x3), tr3(&x1, &x3, &x4)])
}

/// Largest relative difference between two reps of the same diagram, over
/// the given words and all traces of pairs of arcs.
pub fn path_gap(a: &ChartRep, b: &ChartRep, words: &[&str]) -> Result<f64, WordError> {
    let mut va = character_eval(a, words)?;
    let mut vb = character_eval(b, words)?;
    for (arcs, out) in [(&a.rep.arcs, &mut va), (&b.rep.arcs, &mut vb)] {
        for i in 0..arcs.len() {
            for j in i..arcs.len() {
                out.push(tr2(&arcs[i], &arcs[j]));
            }
        }
    }
    if va.len() != vb.len() {
        return Ok(f64::INFINITY);
    }
    Ok(va
        .iter()
        .zip(&vb)
        .map(|(x, y)| (x - y).norm() / y.norm().max(1.0))
        .fold(0.0, f64::max))
}

/// Words in the named generators `x, y, z` of the conditional structures.
pub const XYZ_WORDS: [&str; 8] = ["x", "y", "z", "xy", "xz", "yz", "xyz", "xzy"];
