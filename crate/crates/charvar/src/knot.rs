//! Knot diagrams with Wirtinger data, the three builtin knots, their chart
//! representations, longitudes and Dehn filling conditions.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::diagram::{corner_of, crossing_of, max_defect, propagate, trace_component, Corner, Port, PortGraph};
use crate::mat2::{balancing_conjugator, cr, Mat2, C64};
use crate::numeric::{levenberg_marquardt, LmOptions};
use crate::tangle::{stack, Tangle, TangleDiagram, TangleError};
use crate::trace::{
    align_pair, b_t_distance, canonical_pair, complete_triple, f_t_eval, swapped_triple_trace, TraceError, TOL_FRICKE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnotError {
    #[error("parameters lie on the excluded locus: {0}")]
    ExcludedLocus(String),
    #[error("chart equation violated (residual {residual:e})")]
    InconsistentFricke { residual: f64 },
    #[error("no admissible trace: {0}")]
    EmptySolutionSet(String),
    #[error("slope {a}/{b} is not a reduced fraction")]
    InvalidSlope { a: i64, b: i64 },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Tangle(#[from] TangleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum KnotName {
    P334,
    Q1,
    Q2,
}

impl KnotName {
    pub const ALL: [KnotName; 3] = [KnotName::P334, KnotName::Q1, KnotName::Q2];

    /// `(N, sigma)` with `rho(l) = sigma * rho(m)^N` on the chart.
    pub fn longitude_power(self) -> (i64, i8) {
        match self {
            KnotName::P334 => (26, -1),
            KnotName::Q1 => (24, 1),
            KnotName::Q2 => (12, 1),
        }
    }

    pub fn writhe(self) -> i64 {
        match self {
            KnotName::P334 => 13,
            KnotName::Q1 => 12,
            KnotName::Q2 => 6,
        }
    }
}

impl std::str::FromStr for KnotName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "P334" => Ok(KnotName::P334),
            "Q1" => Ok(KnotName::Q1),
            "Q2" => Ok(KnotName::Q2),
            _ => Err(format!("unknown knot {s:?}, expected P334, Q1 or Q2")),
        }
    }
}

impl std::fmt::Display for KnotName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            KnotName::P334 => "P334",
            KnotName::Q1 => "Q1",
            KnotName::Q2 => "Q2",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KnotCrossing {
    pub over_arc: usize,
    pub under_in_arc: usize,
    pub under_out_arc: usize,
    pub sign: i8,
}

/// One under-passage on the longitude walk: the over arc's meridian raised to
/// `exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WalkStep {
    pub crossing: usize,
    pub over_arc: usize,
    pub exponent: i8,
}

/// An oriented knot diagram. Arcs run between under-passages; arc 0 is the
/// preferred arc `x1`, the one leaving through the start port.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnotDiagram {
    pub graph: PortGraph,
    pub start: Port,
    /// Arc of every port.
    pub arc_of: Vec<usize>,
    /// Whether the knot leaves its crossing through the port.
    pub is_exit: Vec<bool>,
    pub crossings: Vec<KnotCrossing>,
    pub arc_count: usize,
    pub writhe: i64,
    pub walk: Vec<WalkStep>,
}

fn cross(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

fn direction(from: Port, to: Port) -> (f64, f64) {
    let (a, b) = (corner_of(from).pos(), corner_of(to).pos());
    (b.0 - a.0, b.1 - a.1)
}

impl KnotDiagram {
    /// Trace a closed one-component port graph, oriented so that the knot
    /// leaves its crossing through `start`.
    pub fn from_graph(graph: PortGraph, start: Port) -> KnotDiagram {
        let n = graph.port_count();
        let visits = trace_component(&graph, start);
        assert_eq!(visits.len(), 2 * graph.crossing_count(), "diagram must be a knot");
        let mut is_exit = vec![false; n];
        for (_, exit) in &visits {
            is_exit[*exit] = true;
        }
        // walk from the start, opening a new arc after each under-passage;
        // the walk returns to the start arc after the last one
        let mut arc_of = vec![0; n];
        let mut arc = 0;
        for (enter, exit) in &visits {
            let (u1, u2) = graph.under_ports(crossing_of(*enter));
            arc_of[*enter] = arc % graph.crossing_count();
            if *enter == u1 || *enter == u2 {
                arc += 1;
            }
            arc_of[*exit] = arc % graph.crossing_count();
        }
        let arc_count = arc;

        let mut crossings = Vec::with_capacity(graph.crossing_count());
        for c in 0..graph.crossing_count() {
            let (o1, o2) = graph.over_ports(c);
            let (u1, u2) = graph.under_ports(c);
            let (oi, oo) = if is_exit[o2] { (o1, o2) } else { (o2, o1) };
            let (ui, uo) = if is_exit[u2] { (u1, u2) } else { (u2, u1) };
            let s = cross(direction(oi, oo), direction(ui, uo));
            crossings.push(KnotCrossing {
                over_arc: arc_of[oo],
                under_in_arc: arc_of[ui],
                under_out_arc: arc_of[uo],
                sign: if s > 0.0 { 1 } else { -1 },
            });
        }
        let writhe = crossings.iter().map(|k| k.sign as i64).sum();
        let walk = visits
            .iter()
            .filter_map(|(enter, _)| {
                let c = crossing_of(*enter);
                let (u1, u2) = graph.under_ports(c);
                (*enter == u1 || *enter == u2).then(|| WalkStep {
                    crossing: c,
                    over_arc: crossings[c].over_arc,
                    exponent: -crossings[c].sign,
                })
            })
            .collect();
        KnotDiagram {
            graph,
            start,
            arc_of,
            is_exit,
            crossings,
            arc_count,
            writhe,
            walk,
        }
    }

    pub fn crossing_count(&self) -> usize {
        self.crossings.len()
    }

    /// Knot-oriented meridian at a port from the outward port value.
    pub fn oriented(&self, p: Port, port_value: &Mat2) -> Mat2 {
        if self.is_exit[p] {
            *port_value
        } else {
            port_value.adjugate()
        }
    }
}

/// Knot-oriented arc values.
#[derive(Debug, Clone, PartialEq)]
pub struct WirtingerRep {
    pub arcs: Vec<Mat2>,
    pub t: C64,
}

impl WirtingerRep {
    pub fn abelian(d: &KnotDiagram, m: Mat2) -> WirtingerRep {
        WirtingerRep {
            arcs: vec![m; d.arc_count],
            t: m.trace(),
        }
    }

    /// Read arc values off port values; each arc takes the value at its first
    /// port.
    pub fn from_ports(d: &KnotDiagram, ports: &[Mat2], t: C64) -> WirtingerRep {
        let mut arcs = vec![None; d.arc_count];
        for (p, v) in ports.iter().enumerate() {
            let a = d.arc_of[p];
            if arcs[a].is_none() {
                arcs[a] = Some(d.oriented(p, v));
            }
        }
        WirtingerRep {
            arcs: arcs.into_iter().map(|v| v.expect("every arc has a port")).collect(),
            t,
        }
    }

    /// Outward port values.
    pub fn to_ports(&self, d: &KnotDiagram) -> Vec<Mat2> {
        (0..d.graph.port_count())
            .map(|p| d.oriented(p, &self.arcs[d.arc_of[p]]))
            .collect()
    }

    pub fn conj(&self, c: &Mat2) -> WirtingerRep {
        let ci = c.inverse_general();
        WirtingerRep {
            arcs: self.arcs.iter().map(|a| *c * *a * ci).collect(),
            t: self.t,
        }
    }

    pub fn meridian(&self) -> Mat2 {
        self.arcs[0]
    }
}

/// Largest crossing defect `|c - a^sign b a^-sign|`.
pub fn validate_rep(d: &KnotDiagram, rep: &WirtingerRep) -> f64 {
    d.crossings
        .iter()
        .map(|k| {
            let a = rep.arcs[k.over_arc];
            let a = if k.sign > 0 { a } else { a.adjugate() };
            let expect = a * rep.arcs[k.under_in_arc] * a.adjugate();
            rep.arcs[k.under_out_arc].dist(&expect)
        })
        .fold(0.0, f64::max)
}

/// `rho(l) = m^w z_1 ... z_n` along the walk from the preferred arc.
pub fn longitude_eval(d: &KnotDiagram, rep: &WirtingerRep) -> Mat2 {
    let mut l = rep.meridian().pow(d.writhe);
    for step in &d.walk {
        l = l * rep.arcs[step.over_arc].pow(step.exponent as i64);
    }
    l
}

/// The composition formula of a builtin knot.
pub fn builtin_tangle(name: KnotName) -> Vec<Tangle> {
    let v3 = |k| Tangle::VTwist(k);
    match name {
        KnotName::P334 => vec![Tangle::Twist(3), Tangle::Twist(3), Tangle::Twist(3), Tangle::Twist(4)],
        KnotName::Q1 => vec![Tangle::Twist(3), Tangle::Twist(3), Tangle::horiz(v3(-3), v3(-3))],
        KnotName::Q2 => vec![Tangle::Twist(3), Tangle::Twist(3), Tangle::horiz(v3(-3), v3(3))],
    }
}

/// Pieces of a builtin knot with the port offsets of each piece inside the
/// stacked diagram. For `Q1` and `Q2` the bottom piece is split into its two
/// halves.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub pieces: Vec<TangleDiagram>,
    pub offsets: Vec<usize>,
    pub stacked: TangleDiagram,
}

impl Layout {
    pub fn end(&self, piece: usize, c: Corner) -> Port {
        self.offsets[piece] + self.pieces[piece].end(c)
    }

    /// Port of piece `i` shifted into the stacked diagram.
    pub fn port(&self, piece: usize, p: Port) -> Port {
        self.offsets[piece] + p
    }
}

pub fn builtin_layout(name: KnotName) -> Layout {
    let compile = |t: Tangle| t.compile().expect("builtin tangles compile");
    match name {
        KnotName::P334 => {
            let pieces: Vec<TangleDiagram> = builtin_tangle(name).into_iter().map(compile).collect();
            let (stacked, offsets) = stack(&pieces);
            Layout {
                pieces,
                offsets,
                stacked,
            }
        }
        KnotName::Q1 | KnotName::Q2 => {
            let t1 = compile(Tangle::Twist(3));
            let t3 = compile(Tangle::VTwist(-3));
            let t4 = if name == KnotName::Q1 {
                t3.clone()
            } else {
                t3.mirrored()
            };
            let bottom = t3.hcomp(&t4);
            let (stacked, offs) = stack(&[t1.clone(), t1.clone(), bottom]);
            let off4 = offs[2] + t3.graph.port_count();
            Layout {
                pieces: vec![t1.clone(), t1, t3, t4],
                offsets: vec![offs[0], offs[1], offs[2], off4],
                stacked,
            }
        }
    }
}

/// Port where the preferred arc starts: the knot leaves the top piece through
/// its northwest end.
pub fn builtin_diagram(name: KnotName) -> KnotDiagram {
    let layout = builtin_layout(name);
    let graph = layout.stacked.close(crate::tangle::Closure::D);
    let start = layout.end(0, Corner::Nw);
    KnotDiagram::from_graph(graph, start)
}

/// Fill every port from seeded outward values; returns the values and the
/// largest relation defect.
pub fn fill_from_seeds(graph: &PortGraph, seeds: &[(Port, Mat2)]) -> Option<(Vec<Mat2>, f64)> {
    let rels = graph.relations();
    let mut vals = vec![None; graph.port_count()];
    for (p, m) in seeds {
        vals[*p] = Some(*m);
    }
    propagate(&rels, &mut vals);
    let vals: Option<Vec<Mat2>> = vals.into_iter().collect();
    let vals = vals?;
    let defect = max_defect(&rels, &vals);
    Some((vals, defect))
}

/// Pretzel chart residuals: the two quadratics in `t123` and `t134`.
pub fn pretzel_chart(t: C64, t13: C64, t123: C64, t134: C64) -> [C64; 2] {
    [
        f_t_eval(t, cr(1.0), cr(1.0), t13, t123),
        f_t_eval(t, cr(1.0), cr(0.0), t13, t134),
    ]
}

/// The core quadruple with `tr(x1x2) = tr(x2x3) = tr(x3x4) = 1`,
/// `tr(x4x1) = 0` and the given chart coordinates.
pub fn pretzel_quadruple(t: C64, t13: C64, t123: C64, t134: C64) -> Result<[Mat2; 4], KnotError> {
    let tt = t * t;
    if (t13 - (tt - 2.0)).norm() < 1e-6 {
        return Err(KnotError::ExcludedLocus("t13 = t^2 - 2".into()));
    }
    if (t13 - 2.0).norm() < 1e-6 && ((tt - 1.0).norm() < 1e-6 || (tt - 2.0).norm() < 1e-6) {
        return Err(KnotError::ExcludedLocus("t13 = 2 with t^2 in {1, 2}".into()));
    }
    let res = pretzel_chart(t, t13, t123, t134);
    let scale = 1.0 + t.norm().powi(3) + t13.norm().powi(2) + t123.norm().powi(2) + t134.norm().powi(2);
    let worst = res[0].norm().max(res[1].norm());
    if worst > TOL_FRICKE * scale {
        return Err(KnotError::InconsistentFricke { residual: worst });
    }
    if b_t_distance(t, t13) < 1e-6 {
        return Err(KnotError::ExcludedLocus("t13 = 2 makes (x1, x3) reducible".into()));
    }
    let (x1, x3) = canonical_pair(t, t13);
    let t132 = t123_reorder(t, t13, t123);
    let x2 = complete_triple(&x1, &x3, t, cr(1.0), cr(1.0), t132)?;
    let x4 = complete_triple(&x1, &x3, t, cr(0.0), cr(1.0), t134)?;
    Ok([x1, x2, x3, x4])
}

/// Given `tr(x1 x2 x3) = t123` with `tr(x1x2) = tr(x2x3) = 1` and
/// `tr(x1x3) = t13`, return `tr(x1 x3 x2)`.
fn t123_reorder(t: C64, t13: C64, t123: C64) -> C64 {
    swapped_triple_trace(t, cr(1.0), t13, cr(1.0), t123)
}

/// A chart representation together with its named core generators.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartRep {
    pub knot: KnotName,
    pub rep: WirtingerRep,
    /// Outward values at every port of the closed diagram.
    pub ports: Vec<Mat2>,
    /// Largest relation defect over the ports.
    pub port_defect: f64,
    pub named: Vec<(&'static str, Mat2)>,
}

impl ChartRep {
    pub fn get(&self, name: &str) -> Option<Mat2> {
        self.named.iter().find(|(n, _)| *n == name).map(|(_, m)| *m)
    }
}

static DIAGRAMS: OnceLock<Vec<(KnotDiagram, Layout)>> = OnceLock::new();

/// Cached diagram and layout of a builtin knot.
pub fn builtin(name: KnotName) -> &'static (KnotDiagram, Layout) {
    let all = DIAGRAMS.get_or_init(|| {
        KnotName::ALL
            .iter()
            .map(|k| (builtin_diagram(*k), builtin_layout(*k)))
            .collect()
    });
    &all[KnotName::ALL.iter().position(|k| *k == name).expect("builtin")]
}

/// Fill the diagram from the seeds after moving everything to a balanced
/// frame, which keeps entries small.
fn finish(knot: KnotName, seeds: &[(Port, Mat2)], t: C64, named: Vec<(&'static str, Mat2)>) -> ChartRep {
    let (d, _) = builtin(knot);
    let (raw, _) = fill_from_seeds(&d.graph, seeds).expect("seeds determine every port");
    let g = balancing_conjugator(&raw);
    let gi = g.adjugate();
    let seeds: Vec<(Port, Mat2)> = seeds.iter().map(|(p, m)| (*p, g * *m * gi)).collect();
    let named = named.into_iter().map(|(n, m)| (n, g * m * gi)).collect();
    let seeds = &seeds[..];
    let (ports, _) = fill_from_seeds(&d.graph, seeds).expect("seeds determine every port");
    let rep = polish_arcs(d, &WirtingerRep::from_ports(d, &ports, t));
    let ports = rep.to_ports(d);
    let port_defect = max_defect(&d.graph.relations(), &ports);
    ChartRep {
        knot,
        rep,
        ports,
        port_defect,
        named,
    }
}

fn wirtinger_residuals(d: &KnotDiagram, arcs: &[Mat2]) -> Vec<C64> {
    let mut out = Vec::with_capacity(5 * d.crossings.len());
    for k in &d.crossings {
        let a = arcs[k.over_arc];
        let a = if k.sign > 0 { a } else { a.adjugate() };
        let defect = arcs[k.under_out_arc] * a - a * arcs[k.under_in_arc];
        out.extend_from_slice(&[defect.a11, defect.a12, defect.a21, defect.a22]);
    }
    out.extend(arcs.iter().map(|m| m.det() - 1.0));
    out
}

/// A few damped Newton steps on the arc entries. Propagation through long
/// twist regions loses several digits; this recovers them.
pub fn polish_arcs(d: &KnotDiagram, rep: &WirtingerRep) -> WirtingerRep {
    if validate_rep(d, rep) < 1e-12 {
        return rep.clone();
    }
    let pack = |arcs: &[Mat2]| {
        arcs.iter()
            .flat_map(|m| [m.a11, m.a12, m.a21, m.a22])
            .collect::<Vec<_>>()
    };
    let unpack = |z: &[C64]| {
        z.chunks(4)
            .map(|q| Mat2::new(q[0], q[1], q[2], q[3]))
            .collect::<Vec<_>>()
    };
    let f = |z: &[C64]| wirtinger_residuals(d, &unpack(z));
    let (z, _) = levenberg_marquardt(
        &f,
        &pack(&rep.arcs),
        LmOptions {
            max_iter: 6,
            tol: 1e-14,
        },
    );
    let polished = WirtingerRep {
        arcs: unpack(&z),
        t: rep.t,
    };
    if validate_rep(d, &polished) < validate_rep(d, rep) {
        polished
    } else {
        rep.clone()
    }
}

fn seed_end(seeds: &mut Vec<(Port, Mat2)>, layout: &Layout, piece: usize, corner: Corner, m: Mat2) {
    seeds.push((layout.end(piece, corner), m));
}

fn chart_scale(vals: &[C64]) -> f64 {
    1.0 + vals.iter().map(|z| z.norm().powi(3)).fold(0.0, f64::max)
}

/// The pretzel representation with core quadruple `x1, ..., x4`. The four
/// arcs joining consecutive twist regions on the right carry `x1`, `x2^-1`,
/// `x3`, `x4^-1` downward.
pub fn build_pretzel_rep(t: C64, t13: C64, t123: C64, t134: C64) -> Result<ChartRep, KnotError> {
    let x = pretzel_quadruple(t, t13, t123, t134)?;
    let (_, layout) = builtin(KnotName::P334);
    let right = [x[1].adjugate(), x[2], x[3].adjugate(), x[0]];
    let mut seeds = Vec::new();
    for (i, v) in right.iter().enumerate() {
        seed_end(&mut seeds, layout, i, Corner::Se, *v);
        seed_end(&mut seeds, layout, (i + 1) % 4, Corner::Ne, v.adjugate());
    }
    let named = vec![("x1", x[0]), ("x2", x[1]), ("x3", x[2]), ("x4", x[3])];
    Ok(finish(KnotName::P334, &seeds, t, named))
}

/// The single chart equation of `Q1`.
pub fn q1_chart(t: C64, t23: C64, t123: C64) -> C64 {
    f_t_eval(t, cr(1.0), cr(1.0), t23, t123)
}

/// Boundary values of the four pieces of `D(T1 * T2 * (T3 + T4))` in the
/// first conditional structure, listed in the order nw, ne, sw, se.
pub fn case1_table(x: &Mat2, y: &Mat2, z: &Mat2) -> [[Mat2; 4]; 4] {
    let (xi, yi, zi) = (x.adjugate(), y.adjugate(), z.adjugate());
    [[*x, xi, *y, yi], [yi, *y, xi, *x], [*x, *z, xi, zi], [zi, xi, *z, *x]]
}

pub fn build_q1_rep(t: C64, t23: C64, t123: C64) -> Result<ChartRep, KnotError> {
    let res = q1_chart(t, t23, t123).norm();
    if res > TOL_FRICKE * chart_scale(&[t, t23, t123]) {
        return Err(KnotError::InconsistentFricke { residual: res });
    }
    let (x, y) = canonical_pair(t, cr(1.0));
    let z = complete_triple(&x, &y, t, cr(1.0), t23, t123)?;
    let (_, layout) = builtin(KnotName::Q1);
    let mut seeds = Vec::new();
    for (k, row) in case1_table(&x, &y, &z).iter().enumerate() {
        for (corner, m) in Corner::ALL.iter().zip(row) {
            seed_end(&mut seeds, layout, k, *corner, *m);
        }
    }
    Ok(finish(KnotName::Q1, &seeds, t, vec![("x", x), ("y", y), ("z", z)]))
}

/// The two chart equations of `Q2`.
pub fn q2_chart(t: C64, t13: C64, t123: C64, s: C64) -> [C64; 2] {
    let tt = t * t;
    [
        f_t_eval(t, cr(1.0), cr(1.0), t13, t123),
        (s + 2.0 - tt) * (s - 1.0) * (s - 1.0) - (t13 - tt + 2.0),
    ]
}

/// Right-hand sides of the two twist trace formulas for `[-1/3]`:
/// `tr(v^-1 x)` and `tr(z^-1 x)` in terms of `s = tr(z v)`.
pub fn q2_twist_traces(t: C64, s: C64) -> (C64, C64) {
    let k = s + 2.0 - t * t;
    (2.0 + k * (s - 2.0), 2.0 - k * (s - 1.0) * (s - 1.0))
}

/// Values of `[-1/3]` seeded with `z` at nw and `v` at ne, plus the derived
/// `x = rho(sw)^-1`.
pub fn vertical_twist_from(t3: &TangleDiagram, z: &Mat2, v: &Mat2) -> (Vec<Mat2>, Mat2) {
    let rels = t3.graph.relations();
    let mut vals = vec![None; t3.graph.port_count()];
    vals[t3.end(Corner::Nw)] = Some(*z);
    vals[t3.end(Corner::Ne)] = Some(*v);
    propagate(&rels, &mut vals);
    let vals: Vec<Mat2> = vals
        .into_iter()
        .map(|v| v.expect("vertical twist is determined"))
        .collect();
    let x = vals[t3.end(Corner::Sw)].adjugate();
    (vals, x)
}

/// Transport values of a tangle to its mirror image: `rho'(sigma(p)) = rho(p)^-1`.
pub fn reflect_values(vals: &[Mat2]) -> Vec<Mat2> {
    let mut out = vec![Mat2::zero(); vals.len()];
    for (p, v) in vals.iter().enumerate() {
        out[PortGraph::mirror_port(p)] = v.adjugate();
    }
    out
}

pub fn build_q2_rep(t: C64, t13: C64, t123: C64, s: C64) -> Result<ChartRep, KnotError> {
    let res = q2_chart(t, t13, t123, s);
    let worst = res[0].norm().max(res[1].norm());
    if worst > TOL_FRICKE * chart_scale(&[t, t13, t123, s]) {
        return Err(KnotError::InconsistentFricke { residual: worst });
    }
    for (name, v) in [("t13", t13), ("s", s)] {
        if b_t_distance(t, v) < 1e-6 {
            return Err(KnotError::ExcludedLocus(format!("{name} in {{2, t^2 - 2}}")));
        }
    }
    let (x, z) = canonical_pair(t, t13);
    let y = complete_triple(&x, &z, t, cr(1.0), cr(1.0), t123_reorder(t, t13, t123))?;
    let (_, layout) = builtin(KnotName::Q2);
    let t3 = &layout.pieces[2];
    let (z0, v0) = canonical_pair(t, s);
    let (vals0, x0) = vertical_twist_from(t3, &z0, &v0);
    let cmat = align_pair((&x0, &z0), (&x, &z))?;
    let ci = cmat.adjugate();
    let rho3: Vec<Mat2> = vals0.iter().map(|m| cmat * *m * ci).collect();
    let rho4 = reflect_values(&rho3);
    let v = rho3[t3.end(Corner::Ne)];

    let (xi, yi, zi) = (x.adjugate(), y.adjugate(), z.adjugate());
    let mut seeds = Vec::new();
    for (corner, m) in Corner::ALL.iter().zip([x, xi, y, yi]) {
        seed_end(&mut seeds, layout, 0, *corner, m);
    }
    for (corner, m) in Corner::ALL.iter().zip([yi, y, zi, z]) {
        seed_end(&mut seeds, layout, 1, *corner, m);
    }
    for (p, m) in rho3.iter().enumerate() {
        seeds.push((layout.port(2, p), *m));
    }
    for (p, m) in rho4.iter().enumerate() {
        seeds.push((layout.port(3, p), *m));
    }
    Ok(finish(
        KnotName::Q2,
        &seeds,
        t,
        vec![("x", x), ("y", y), ("z", z), ("v", v)],
    ))
}

/// Distance of `rho(l)` from `sigma * m^N`, absolute and relative to
/// `max(1, |m^N|)`.
pub fn longitude_gap(knot: KnotName, rep: &WirtingerRep) -> (f64, f64) {
    let (d, _) = builtin(knot);
    let (n, sigma) = knot.longitude_power();
    let target = rep.meridian().pow(n).scale(cr(sigma as f64));
    let abs = longitude_eval(d, rep).dist(&target);
    (abs, abs / target.norm_inf().max(1.0))
}

pub fn longitude_identity_defect(knot: KnotName, rep: &WirtingerRep) -> f64 {
    longitude_gap(knot, rep).1
}

/// A Dehn filling slope `a/b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Slope {
    pub a: i64,
    pub b: i64,
}

impl Slope {
    pub fn new(a: i64, b: i64) -> Result<Slope, KnotError> {
        if crate::tangle::gcd(a, b) != 1 {
            return Err(KnotError::InvalidSlope { a, b });
        }
        Ok(Slope { a, b })
    }
}

impl std::str::FromStr for Slope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once('/')
            .ok_or_else(|| format!("slope {s:?} must look like a/b"))?;
        let a: i64 = a.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
        let b: i64 = b.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
        Slope::new(a, b).map_err(|e| e.to_string())
    }
}

impl std::fmt::Display for Slope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.a, self.b)
    }
}

/// A meridian eigenvalue solving the filling equation, with its trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FillingTrace {
    pub kappa: C64,
    pub t: C64,
}

/// All `t = kappa + 1/kappa` with `m^a (sigma m^N)^b = e`, that is
/// `kappa^(a + N b) = sigma^b` and `kappa != +-1`, one per pair
/// `kappa, 1/kappa`.
pub fn dehn_filling_solutions(n: i64, sigma: i8, slope: Slope) -> Result<Vec<FillingTrace>, KnotError> {
    let m = slope.a + n * slope.b;
    if m.abs() == 1 {
        return Err(KnotError::EmptySolutionSet(format!("a+{n}b = {m}")));
    }
    if m == 0 {
        return Err(KnotError::EmptySolutionSet(format!(
            "a+{n}b = 0: the equation does not constrain kappa"
        )));
    }
    let k = m.unsigned_abs() as i64;
    // sigma^b = exp(i pi delta)
    let delta = if sigma < 0 && slope.b.rem_euclid(2) == 1 { 1 } else { 0 };
    let mut out = Vec::new();
    for j in 0..k {
        let num = 2 * j + delta;
        // kappa = exp(i pi num / k); kappa and 1/kappa pair up as num <-> 2k - num
        let mirror = (2 * k - num).rem_euclid(2 * k);
        if num % k == 0 || mirror < num {
            // num in {0, k} gives kappa = +-1
            continue;
        }
        let kappa = C64::from_polar(1.0, PI * num as f64 / k as f64);
        out.push(FillingTrace {
            kappa,
            t: kappa + kappa.inv(),
        });
    }
    out.sort_by(|a, b| a.t.re.total_cmp(&b.t.re).then(a.t.im.total_cmp(&b.t.im)));
    Ok(out)
}

/// Residual of `m^a l^b = e` for a chart rep.
pub fn filling_residual(knot: KnotName, rep: &WirtingerRep, slope: Slope) -> f64 {
    let (d, _) = builtin(knot);
    let m = rep.meridian();
    let l = longitude_eval(d, rep);
    let lhs = m.pow(slope.a) * l.pow(slope.b);
    let scale = m.pow(slope.a).norm_inf().max(1.0) * l.pow(slope.b).norm_inf().max(1.0);
    lhs.dist(&Mat2::identity()) / scale
}

/// Trace of a word in named generators, e.g. `x1 x3^-1`. Names are matched
/// longest first; `a<k>` refers to arc `k`.
pub fn character_eval(rep: &ChartRep, words: &[&str]) -> Result<Vec<C64>, WordError> {
    words.iter().map(|w| Ok(word_value(rep, w)?.trace())).collect()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WordError {
    #[error("unknown generator at {pos} in {word:?}")]
    UnknownGenerator { word: String, pos: usize },
}

pub fn word_value(rep: &ChartRep, word: &str) -> Result<Mat2, WordError> {
    let mut names: Vec<(String, Mat2)> = rep.named.iter().map(|(n, m)| (n.to_string(), *m)).collect();
    names.extend(rep.rep.arcs.iter().enumerate().map(|(k, m)| (format!("a{k}"), *m)));
    names.sort_by_key(|(n, _)| std::cmp::Reverse(n.len()));
    let chars: Vec<char> = word.chars().collect();
    let mut i = 0;
    let mut acc = Mat2::identity();
    while i < chars.len() {
        if chars[i].is_whitespace() || chars[i] == '*' {
            i += 1;
            continue;
        }
        let rest: String = chars[i..].iter().collect();
        let Some((name, m)) = names.iter().find(|(n, _)| rest.starts_with(n.as_str())) else {
            return Err(WordError::UnknownGenerator {
                word: word.to_string(),
                pos: i,
            });
        };
        i += name.chars().count();
        let rest: String = chars[i..].iter().collect();
        if rest.starts_with("^-1") {
            acc = acc * m.adjugate();
            i += 3;
        } else {
            acc = acc * *m;
        }
    }
    Ok(acc)
}

/// Words whose traces separate pretzel chart points.
pub const PRETZEL_WORDS: [&str; 8] = ["x1", "x1x2", "x1x3", "x2x3", "x3x4", "x1x4", "x1x2x3", "x1x3x4"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mat2::{c, power_cayley, tr2, tr3};
    use crate::random::{generic_trace, seeded};
    use crate::testutil::rng;
    use crate::trace::solve_f_t;
    use rand::Rng;

    fn pretzel_point<R: Rng>(r: &mut R) -> (C64, C64, C64, C64) {
        let t = generic_trace(r);
        let t13 = crate::random::complex_in_box(r, 2.0);
        let t123 = if r.gen::<bool>() {
            solve_f_t(t, cr(1.0), cr(1.0), t13).roots.0
        } else {
            solve_f_t(t, cr(1.0), cr(1.0), t13).roots.1
        };
        let t134 = if r.gen::<bool>() {
            solve_f_t(t, cr(1.0), cr(0.0), t13).roots.0
        } else {
            solve_f_t(t, cr(1.0), cr(0.0), t13).roots.1
        };
        (t, t13, t123, t134)
    }

    #[test]
    fn builtin_writhes() {
        for k in KnotName::ALL {
            assert_eq!(builtin(k).0.writhe, k.writhe(), "{k}");
            assert_eq!(builtin(k).0.walk.len(), builtin(k).0.crossing_count());
        }
    }

    #[test]
    fn walk_exponents_cancel_writhe() {
        for k in KnotName::ALL {
            let d = &builtin(k).0;
            let sum: i64 = d.walk.iter().map(|s| s.exponent as i64).sum();
            assert_eq!(sum + d.writhe, 0);
        }
    }

    #[test]
    fn abelian_reps_have_trivial_longitude() {
        let mut r = rng(3);
        for k in KnotName::ALL {
            let d = &builtin(k).0;
            let m = crate::testutil::random_in_trace(&mut r, c(1.2, -0.4));
            let rep = WirtingerRep::abelian(d, m);
            assert!(validate_rep(d, &rep) < 1e-12);
            assert!(longitude_eval(d, &rep).dist(&Mat2::identity()) < 1e-10);
        }
    }

    #[test]
    fn pretzel_chart_reps() {
        let mut r = seeded(11);
        for _ in 0..20 {
            let (t, t13, t123, t134) = pretzel_point(&mut r);
            let cr_ = build_pretzel_rep(t, t13, t123, t134).unwrap();
            let d = &builtin(KnotName::P334).0;
            assert!(validate_rep(d, &cr_.rep) < 1e-9 * cr_.rep.arcs.iter().map(|a| a.norm_inf()).fold(1.0, f64::max));
            assert!(longitude_identity_defect(KnotName::P334, &cr_.rep) < 1e-8);
            let x = |n: &str| cr_.get(n).unwrap();
            assert!((tr2(&x("x1"), &x("x3")) - t13).norm() < 1e-9);
            assert!((tr3(&x("x1"), &x("x2"), &x("x3")) - t123).norm() < 1e-9);
            assert!((tr3(&x("x1"), &x("x3"), &x("x4")) - t134).norm() < 1e-9);
        }
    }

    #[test]
    fn pretzel_excluded_locus() {
        let t = cr(1.0);
        let t13 = cr(2.0);
        let t134 = solve_f_t(t, cr(1.0), cr(0.0), t13).roots.0;
        let t123 = solve_f_t(t, cr(1.0), cr(1.0), t13).roots.0;
        assert!(matches!(
            build_pretzel_rep(t, t13, t123, t134),
            Err(KnotError::ExcludedLocus(_))
        ));
    }

    #[test]
    fn q_chart_reps() {
        let mut r = seeded(5);
        for _ in 0..20 {
            let t = generic_trace(&mut r);
            let t23 = crate::random::complex_in_box(&mut r, 2.0);
            let t123 = solve_f_t(t, cr(1.0), cr(1.0), t23).roots.1;
            let q1 = build_q1_rep(t, t23, t123).unwrap();
            assert!(q1.port_defect < 1e-9 * q1.ports.iter().map(|a| a.norm_inf()).fold(1.0, f64::max));
            assert!(longitude_identity_defect(KnotName::Q1, &q1.rep) < 1e-8);
            assert!((tr2(&q1.get("y").unwrap(), &q1.get("z").unwrap()) - t23).norm() < 1e-9);

            let s = crate::random::complex_in_box(&mut r, 2.0);
            let t13 = (s + 2.0 - t * t) * (s - 1.0) * (s - 1.0) + t * t - 2.0;
            let t123 = solve_f_t(t, cr(1.0), cr(1.0), t13).roots.0;
            let q2 = build_q2_rep(t, t13, t123, s).unwrap();
            assert!(
                q2.port_defect < 1e-9 * q2.ports.iter().map(|a| a.norm_inf()).fold(1.0, f64::max),
                "{}",
                q2.port_defect
            );
            assert!(
                longitude_identity_defect(KnotName::Q2, &q2.rep) < 1e-8,
                "{}",
                longitude_identity_defect(KnotName::Q2, &q2.rep)
            );
            let (x, z, v) = (q2.get("x").unwrap(), q2.get("z").unwrap(), q2.get("v").unwrap());
            let (e6, e7) = q2_twist_traces(t, s);
            assert!((tr2(&z, &v) - s).norm() < 1e-9);
            assert!((tr2(&v.adjugate(), &x) - e6).norm() < 1e-9);
            assert!((tr2(&z.adjugate(), &x) - e7).norm() < 1e-9);
        }
    }

    #[test]
    fn q1_rejects_off_chart() {
        let t = cr(1.3);
        let t123 = solve_f_t(t, cr(1.0), cr(1.0), cr(0.5)).roots.0 + 1e-3;
        assert!(matches!(
            build_q1_rep(t, cr(0.5), t123),
            Err(KnotError::InconsistentFricke { .. })
        ));
    }

    #[test]
    fn dehn_counts() {
        let p = Slope::new(0, 1).unwrap();
        let sols = dehn_filling_solutions(26, -1, p).unwrap();
        assert_eq!(sols.len(), 13);
        for s in &sols {
            assert!((s.kappa.powi(26) + 1.0).norm() < 1e-12);
        }
        assert!(dehn_filling_solutions(26, -1, Slope::new(1, 0).unwrap()).is_err());
        assert!(dehn_filling_solutions(26, -1, Slope::new(-25, 1).unwrap()).is_err());
    }

    #[test]
    fn dehn_replay_on_chart() {
        let slope = Slope::new(0, 1).unwrap();
        for s in dehn_filling_solutions(26, -1, slope).unwrap() {
            let t13 = c(0.3, 0.8);
            let t123 = solve_f_t(s.t, cr(1.0), cr(1.0), t13).roots.0;
            let t134 = solve_f_t(s.t, cr(1.0), cr(0.0), t13).roots.0;
            let rep = build_pretzel_rep(s.t, t13, t123, t134).unwrap();
            assert!(filling_residual(KnotName::P334, &rep.rep, slope) < 1e-8);
        }
    }

    #[test]
    fn power_cayley_matches_longitude_target() {
        let mut r = seeded(2);
        let (t, t13, t123, t134) = pretzel_point(&mut r);
        let rep = build_pretzel_rep(t, t13, t123, t134).unwrap();
        let m = rep.rep.meridian();
        assert!(power_cayley(&m, 26).dist(&m.pow(26)) / m.pow(26).norm_inf().max(1.0) < 1e-10);
    }

    #[test]
    fn words_and_characters() {
        let rep = build_q1_rep(cr(1.3), cr(0.5), solve_f_t(cr(1.3), cr(1.0), cr(1.0), cr(0.5)).roots.0).unwrap();
        let v = character_eval(&rep, &["x", "", "xy", "x^-1 y"]).unwrap();
        assert!((v[0] - 1.3).norm() < 1e-12);
        assert!((v[1] - 2.0).norm() < 1e-12);
        assert!((v[2] - 1.0).norm() < 1e-12);
        assert!((v[3] - (1.3 * 1.3 - 1.0)).norm() < 1e-12);
        assert!(character_eval(&rep, &["q"]).is_err());
    }
}
