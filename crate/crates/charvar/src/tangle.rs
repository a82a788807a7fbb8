//! Four-ended tangles: composition trees, rational tangles from continued
//! fractions, compiled port diagrams, representation propagation, boundary
//! invariants and closure root finding.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::diagram::{
    determined, max_defect, propagate, relation_defect, solve_ports, Corner, Diagonal, Port, PortGraph,
};
use crate::mat2::{tr2, Mat2, C64};
use crate::numeric::{dft_coefficients, newton_scalar, polynomial_roots, sample_points, trim_polynomial};
use crate::trace::{b_t_distance, canonical_pair, sort_lex};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TangleError {
    #[error("{p}/{q} is not a reduced fraction with nonzero denominator")]
    InvalidFraction { p: i64, q: i64 },
    #[error("the zero tangle has no crossings")]
    ZeroTangle,
    #[error("parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("no representation extends the given boundary values (residual {residual:e})")]
    NoExtension { residual: f64 },
    #[error("no pair of arcs determines the closed diagram")]
    NotPropagable,
}

/// Which strand of the crossing `[1]` is on top.
pub const POSITIVE_OVER: Diagonal = Diagonal::NwSe;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Closure {
    /// Numerator: join nw to ne and sw to se.
    N,
    /// Denominator: join nw to sw and ne to se.
    D,
}

impl std::str::FromStr for Closure {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "N" | "n" => Ok(Closure::N),
            "D" | "d" => Ok(Closure::D),
            _ => Err(format!("unknown closure {s:?}, expected N or D")),
        }
    }
}

/// A composition tree of tangles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tangle {
    /// `[k]`: `|k|` crossings side by side.
    Twist(i64),
    /// `[1/k]`: `|k|` crossings stacked vertically.
    VTwist(i64),
    /// `[p/q]`, expanded through its continued fraction.
    Rational { p: i64, q: i64 },
    /// `a * b`, `a` on top.
    Vert(Box<Tangle>, Box<Tangle>),
    /// `a + b`, `a` on the left.
    Horiz(Box<Tangle>, Box<Tangle>),
}

impl Tangle {
    pub fn vert(a: Tangle, b: Tangle) -> Tangle {
        Tangle::Vert(Box::new(a), Box::new(b))
    }

    pub fn horiz(a: Tangle, b: Tangle) -> Tangle {
        Tangle::Horiz(Box::new(a), Box::new(b))
    }

    /// Reflection in the vertical axis.
    pub fn mirror(&self) -> Tangle {
        match self {
            Tangle::Twist(k) => Tangle::Twist(-k),
            Tangle::VTwist(k) => Tangle::VTwist(-k),
            Tangle::Rational { p, q } => Tangle::Rational { p: -p, q: *q },
            Tangle::Vert(a, b) => Tangle::vert(a.mirror(), b.mirror()),
            Tangle::Horiz(a, b) => Tangle::horiz(b.mirror(), a.mirror()),
        }
    }

    pub fn compile(&self) -> Result<TangleDiagram, TangleError> {
        match self {
            Tangle::Twist(k) | Tangle::VTwist(k) => {
                if *k == 0 {
                    return Err(TangleError::ZeroTangle);
                }
                let one = TangleDiagram::crossing(k.signum() as i8);
                let mut d = one.clone();
                for _ in 1..k.unsigned_abs() {
                    d = if matches!(self, Tangle::Twist(_)) {
                        d.hcomp(&one)
                    } else {
                        d.vcomp(&one)
                    };
                }
                Ok(d)
            }
            Tangle::Rational { p, q } => build_rational_tangle(*p, *q)?.compile(),
            Tangle::Vert(a, b) => Ok(a.compile()?.vcomp(&b.compile()?)),
            Tangle::Horiz(a, b) => Ok(a.compile()?.hcomp(&b.compile()?)),
        }
    }
}

impl fmt::Display for Tangle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tangle::Twist(k) => write!(f, "[{k}]"),
            Tangle::VTwist(k) if *k < 0 => write!(f, "[-1/{}]", -k),
            Tangle::VTwist(k) => write!(f, "[1/{k}]"),
            Tangle::Rational { p, q } => write!(f, "[p/q:{p}/{q}]"),
            Tangle::Vert(a, b) => write!(f, "({a}*{b})"),
            Tangle::Horiz(a, b) => write!(f, "({a}+{b})"),
        }
    }
}

/// A compiled tangle: a port graph with four open ends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangleDiagram {
    pub graph: PortGraph,
    /// Ports of the nw, ne, sw, se ends.
    pub ends: [Port; 4],
}

impl TangleDiagram {
    /// `[1]` for `sign = 1`, `[-1]` for `sign = -1`.
    pub fn crossing(sign: i8) -> TangleDiagram {
        let over = if sign > 0 { POSITIVE_OVER } else { POSITIVE_OVER.other() };
        TangleDiagram {
            graph: PortGraph::single(over),
            ends: [0, 1, 2, 3],
        }
    }

    pub fn end(&self, c: Corner) -> Port {
        self.ends[c.index()]
    }

    pub fn crossing_count(&self) -> usize {
        self.graph.crossing_count()
    }

    /// `self + other`.
    pub fn hcomp(&self, other: &TangleDiagram) -> TangleDiagram {
        let (mut g, off) = self.graph.union(&other.graph);
        g.join(self.end(Corner::Ne), other.end(Corner::Nw) + off);
        g.join(self.end(Corner::Se), other.end(Corner::Sw) + off);
        TangleDiagram {
            graph: g,
            ends: [
                self.end(Corner::Nw),
                other.end(Corner::Ne) + off,
                self.end(Corner::Sw),
                other.end(Corner::Se) + off,
            ],
        }
    }

    /// `self * other`, with `self` on top.
    pub fn vcomp(&self, other: &TangleDiagram) -> TangleDiagram {
        let (mut g, off) = self.graph.union(&other.graph);
        g.join(self.end(Corner::Sw), other.end(Corner::Nw) + off);
        g.join(self.end(Corner::Se), other.end(Corner::Ne) + off);
        TangleDiagram {
            graph: g,
            ends: [
                self.end(Corner::Nw),
                self.end(Corner::Ne),
                other.end(Corner::Sw) + off,
                other.end(Corner::Se) + off,
            ],
        }
    }

    /// Reflection in the vertical axis, keeping crossing indices.
    pub fn mirrored(&self) -> TangleDiagram {
        let m = PortGraph::mirror_port;
        TangleDiagram {
            graph: self.graph.mirrored(),
            ends: [
                m(self.end(Corner::Ne)),
                m(self.end(Corner::Nw)),
                m(self.end(Corner::Se)),
                m(self.end(Corner::Sw)),
            ],
        }
    }

    pub fn close(&self, closure: Closure) -> PortGraph {
        let mut g = self.graph.clone();
        match closure {
            Closure::N => {
                g.join(self.end(Corner::Nw), self.end(Corner::Ne));
                g.join(self.end(Corner::Sw), self.end(Corner::Se));
            }
            Closure::D => {
                g.join(self.end(Corner::Nw), self.end(Corner::Sw));
                g.join(self.end(Corner::Ne), self.end(Corner::Se));
            }
        }
        g
    }
}

/// Stack diagrams top to bottom; returns the composite and the port offset of
/// each part.
pub fn stack(parts: &[TangleDiagram]) -> (TangleDiagram, Vec<usize>) {
    let mut offsets = vec![0];
    let mut acc = parts[0].clone();
    for p in &parts[1..] {
        offsets.push(acc.graph.port_count());
        acc = acc.vcomp(p);
    }
    (acc, offsets)
}

/// Continued fraction `[k_s; k_{s-1}, ..., k_1]` of `p/q`, listed from
/// `k_s` down to `k_1`. Division truncates toward zero, so every partial
/// quotient after the first has the sign of `p/q`.
pub fn cf_expand(p: i64, q: i64) -> Result<Vec<i64>, TangleError> {
    if q == 0 || gcd(p, q) != 1 {
        return Err(TangleError::InvalidFraction { p, q });
    }
    let (mut a, mut b) = if q < 0 { (-p, -q) } else { (p, q) };
    let mut out = Vec::new();
    loop {
        let k = a / b;
        let r = a - k * b;
        out.push(k);
        if r == 0 {
            return Ok(out);
        }
        a = b;
        b = r;
    }
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Evaluate `[k_s; ..., k_1]` exactly as a reduced fraction `(num, den)`.
pub fn cf_value(cf: &[i64]) -> (i64, i64) {
    let mut num = cf[cf.len() - 1];
    let mut den = 1;
    for k in cf[..cf.len() - 1].iter().rev() {
        (num, den) = (k * num + den, num);
    }
    if den < 0 {
        (num, den) = (-num, -den);
    }
    (num, den)
}

/// The rational tangle `[p/q]`: `[k_1] * [1/k_2] + ... + [k_s]` for odd `s`
/// and `[1/k_1] + [k_2] * ... + [k_s]` for even `s`, evaluated left to right.
/// A final `+ [0]` is dropped.
pub fn build_rational_tangle(p: i64, q: i64) -> Result<Tangle, TangleError> {
    let cf = cf_expand(p, q)?;
    if p == 0 {
        return Err(TangleError::ZeroTangle);
    }
    let ks: Vec<i64> = cf.iter().rev().cloned().collect();
    let s = ks.len();
    let odd = s % 2 == 1;
    let mut t = if odd {
        Tangle::Twist(ks[0])
    } else {
        Tangle::VTwist(ks[0])
    };
    for (i, k) in ks.iter().enumerate().skip(1) {
        let pos = i + 1;
        // odd s: even positions are vertical; even s: odd positions are vertical
        let vertical = (pos % 2 == 0) == odd;
        if *k == 0 {
            debug_assert!(pos == s);
            continue;
        }
        t = if vertical {
            Tangle::vert(t, Tangle::VTwist(*k))
        } else {
            Tangle::horiz(t, Tangle::Twist(*k))
        };
    }
    Ok(t)
}

/// Arc values of the twist `[n]`: `a_{k+2} = a_{k+1} a_k a_{k+1}^-1`.
/// Returns `a_2, ..., a_{n+1}`.
pub fn twist_propagate(a0: &Mat2, a1: &Mat2, n: usize) -> Vec<Mat2> {
    let mut out = Vec::with_capacity(n);
    let (mut prev, mut cur) = (*a0, *a1);
    for _ in 0..n {
        let next = cur * prev * cur.adjugate();
        out.push(next);
        prev = cur;
        cur = next;
    }
    out
}

/// Boundary seeds of `[n]` whose arcs, oriented left to right, start as
/// `a_1` at nw and `a_0` at sw.
pub fn twist_seeds(a0: &Mat2, a1: &Mat2) -> [(Corner, Mat2); 2] {
    [(Corner::Nw, a1.adjugate()), (Corner::Sw, a0.adjugate())]
}

/// Residuals of the two trace formulas for `a_3` in a twist.
pub fn twist_trace_check(a0: &Mat2, a1: &Mat2) -> (f64, f64) {
    let t = a0.trace();
    let s = tr2(a0, a1);
    let a3 = twist_propagate(a0, a1, 2)[1];
    let f1 = 2.0 + (s + 2.0 - t * t) * (s - 2.0);
    let f2 = 2.0 + (t * t - s - 2.0) * (s - 1.0) * (s - 1.0);
    (
        (tr2(&a1.adjugate(), &a3) - f1).norm(),
        (tr2(&a0.adjugate(), &a3) - f2).norm(),
    )
}

/// Port values of a tangle satisfying all crossing relations.
#[derive(Debug, Clone, PartialEq)]
pub struct TangleRep {
    pub diagram: TangleDiagram,
    pub values: Vec<Mat2>,
    pub t: C64,
    pub residual: f64,
}

impl TangleRep {
    pub fn end(&self, c: Corner) -> Mat2 {
        self.values[self.diagram.end(c)]
    }

    pub fn conj(&self, c: &Mat2) -> TangleRep {
        let ci = c.inverse_general();
        TangleRep {
            values: self.values.iter().map(|v| *c * *v * ci).collect(),
            ..self.clone()
        }
    }
}

/// Values of the ends of a tangle rep and the two traces built from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundaryData {
    pub g: Mat2,
    pub tr_h: C64,
    pub tr_v: C64,
}

/// Fill a tangle from boundary values. Ports the seeds do not determine are
/// solved for numerically.
pub fn rep_propagate(diagram: &TangleDiagram, seeds: &[(Corner, Mat2)], t: C64) -> Result<TangleRep, TangleError> {
    let ports: Vec<(Port, Mat2)> = seeds.iter().map(|(c, m)| (diagram.end(*c), *m)).collect();
    let solved = solve_ports(&diagram.graph, &ports, t, 0x7a11);
    let scale = solved.values.iter().map(|v| 1.0 + v.norm_inf()).fold(1.0, f64::max);
    if solved.residual > 1e-9 * scale * scale {
        return Err(TangleError::NoExtension {
            residual: solved.residual,
        });
    }
    Ok(TangleRep {
        diagram: diagram.clone(),
        values: solved.values,
        t,
        residual: solved.residual,
    })
}

pub fn boundary_data(rep: &TangleRep) -> BoundaryData {
    let (nw, ne, sw) = (rep.end(Corner::Nw), rep.end(Corner::Ne), rep.end(Corner::Sw));
    let g = nw * ne;
    BoundaryData {
        g,
        tr_h: g.trace(),
        tr_v: tr2(&sw, &nw),
    }
}

/// Largest mismatch across the two identifications made by a closure.
pub fn closure_defect(rep: &TangleRep, closure: Closure) -> f64 {
    let e = Mat2::identity();
    let pairs = match closure {
        Closure::N => [(Corner::Nw, Corner::Ne), (Corner::Sw, Corner::Se)],
        Closure::D => [(Corner::Nw, Corner::Sw), (Corner::Ne, Corner::Se)],
    };
    pairs
        .iter()
        .map(|(a, b)| (rep.end(*a) * rep.end(*b)).dist(&e))
        .fold(0.0, f64::max)
}

/// A root of the closure equations together with the full closed rep.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosureRoot {
    /// `tr_v` for the numerator closure, `tr_h` for the denominator.
    pub s: C64,
    pub defect: f64,
    pub rep: TangleRep,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchBox {
    pub radius: f64,
}

impl Default for SearchBox {
    fn default() -> Self {
        SearchBox { radius: 5.0 }
    }
}

pub fn closure_roots(
    p: i64,
    q: i64,
    closure: Closure,
    t: C64,
    search: SearchBox,
) -> Result<Vec<ClosureRoot>, TangleError> {
    let d = build_rational_tangle(p, q)?.compile()?;
    closure_roots_diagram(&d, closure, t, search)
}

/// Irreducible closure representations of a tangle at meridian trace `t`.
///
/// Two arcs are seeded with the canonical pair of trace `s`; every other arc
/// follows by propagation, so the closure defects are polynomials in `s`.
/// Their coefficients are recovered by sampling on a circle, the roots come
/// from a companion matrix and are polished by Newton's method. Only roots
/// whose reported trace lies in the search disc are kept.
pub fn closure_roots_diagram(
    diagram: &TangleDiagram,
    closure: Closure,
    t: C64,
    search: SearchBox,
) -> Result<Vec<ClosureRoot>, TangleError> {
    let g = diagram.close(closure);
    let rels = g.relations();
    let n = g.port_count();
    let (p0, q0) = match closure {
        Closure::N => (diagram.end(Corner::Nw), diagram.end(Corner::Sw)),
        Closure::D => (diagram.end(Corner::Nw), diagram.end(Corner::Ne)),
    };
    let full = |p: Port, q: Port| determined(&rels, n, &[p, q]).iter().all(|k| *k);
    let (p, q) = if full(p0, q0) {
        (p0, q0)
    } else {
        let mut found = None;
        'outer: for p in 0..n {
            for q in p + 1..n {
                if g.partner[p] != Some(q) && full(p, q) {
                    found = Some((p, q));
                    break 'outer;
                }
            }
        }
        found.ok_or(TangleError::NotPropagable)?
    };
    let eval = |s: C64| -> Vec<Mat2> {
        let (a, b) = canonical_pair(t, s);
        let mut vals = vec![None; n];
        vals[p] = Some(a);
        vals[q] = Some(b);
        propagate(&rels, &mut vals);
        vals.into_iter().map(|v| v.expect("determined")).collect()
    };
    let entries =
        |vals: &[Mat2]| -> Vec<C64> { rels.iter().flat_map(|r| relation_defect(r, vals).entries()).collect() };

    let radius = search.radius + 1.0;
    let mut samples_n = 64;
    let (coefs, live) = loop {
        let pts = sample_points(samples_n, radius);
        let table: Vec<Vec<C64>> = pts.iter().map(|s| entries(&eval(*s))).collect();
        let m = table[0].len();
        let peak = table.iter().flatten().map(|z| z.norm()).fold(1.0, f64::max);
        let mut coefs = Vec::with_capacity(m);
        let mut converged = true;
        let cut = samples_n * 3 / 4;
        for j in 0..m {
            let col: Vec<C64> = table.iter().map(|row| row[j]).collect();
            let c = dft_coefficients(&col, radius);
            let tail = c[cut..]
                .iter()
                .enumerate()
                .map(|(k, z)| z.norm() * radius.powi((k + cut) as i32))
                .fold(0.0, f64::max);
            if tail > 1e-10 * peak {
                converged = false;
            }
            coefs.push(c);
        }
        let live: Vec<usize> = (0..m)
            .filter(|j| {
                coefs[*j]
                    .iter()
                    .enumerate()
                    .map(|(k, z)| z.norm() * radius.powi(k as i32))
                    .fold(0.0, f64::max)
                    > 1e-9 * peak.max(1.0)
            })
            .collect();
        if converged || samples_n >= 2048 {
            break (coefs, live);
        }
        samples_n *= 2;
    };
    if live.is_empty() {
        return Ok(vec![]);
    }
    // the lowest-degree nonvanishing defect entry gives the fewest spurious roots
    let trimmed: Vec<(usize, Vec<C64>)> = live
        .iter()
        .map(|j| (*j, trim_polynomial(&coefs[*j], radius, 1e-11)))
        .collect();
    let (jbest, poly) = trimmed.iter().min_by_key(|(_, c)| c.len()).cloned().expect("nonempty");
    let scalar = |s: C64| entries(&eval(s))[jbest];

    let mut roots: Vec<ClosureRoot> = Vec::new();
    for r0 in polynomial_roots(&poly) {
        if !r0.is_finite() || r0.norm() > search.radius * 1.5 + 1.0 {
            continue;
        }
        let r = newton_scalar(&scalar, r0, 50);
        if !r.is_finite() || r.norm() > search.radius + 1e-9 || b_t_distance(t, r) < 1e-6 {
            continue;
        }
        let vals = eval(r);
        let scale = vals.iter().map(|v| 1.0 + v.norm_inf()).fold(1.0, f64::max);
        let defect = max_defect(&rels, &vals);
        if defect > 1e-8 * scale * scale {
            continue;
        }
        let rep = TangleRep {
            diagram: diagram.clone(),
            values: vals,
            t,
            residual: defect,
        };
        let bd = boundary_data(&rep);
        let s = match closure {
            Closure::N => bd.tr_v,
            Closure::D => bd.tr_h,
        };
        if s.norm() > search.radius + 1e-9 || roots.iter().any(|x| (x.s - s).norm() < 1e-6) {
            continue;
        }
        roots.push(ClosureRoot { s, defect, rep });
    }
    let mut keys: Vec<C64> = roots.iter().map(|r| r.s).collect();
    sort_lex(&mut keys);
    roots.sort_by_key(|r| keys.iter().position(|k| *k == r.s));
    Ok(roots)
}

/// Parse the tangle mini-language. Operators `+` and `*` are applied left
/// to right with equal precedence.
pub fn parse_tangle(src: &str) -> Result<Tangle, TangleError> {
    let chars: Vec<char> = src.chars().map(|c| if c == '\u{2212}' { '-' } else { c }).collect();
    let mut p = Parser { s: chars, i: 0 };
    let t = p.expr()?;
    p.skip_ws();
    if p.i < p.s.len() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(t)
}

struct Parser {
    s: Vec<char>,
    i: usize,
}

impl Parser {
    fn err(&self, msg: &str) -> TangleError {
        TangleError::Parse {
            pos: self.i,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.s.get(self.i).cloned()
    }

    fn expect(&mut self, c: char) -> Result<(), TangleError> {
        if self.peek() == Some(c) {
            self.i += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{c}'")))
        }
    }

    fn expr(&mut self) -> Result<Tangle, TangleError> {
        let mut acc = self.term()?;
        while let Some(op) = self.peek() {
            match op {
                '+' => {
                    self.i += 1;
                    acc = Tangle::horiz(acc, self.term()?);
                }
                '*' => {
                    self.i += 1;
                    acc = Tangle::vert(acc, self.term()?);
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Tangle, TangleError> {
        match self.peek() {
            Some('(') => {
                self.i += 1;
                let t = self.expr()?;
                self.expect(')')?;
                Ok(t)
            }
            Some('[') => {
                self.i += 1;
                let start = self.i;
                if self.s[self.i..].starts_with(&['p', '/', 'q', ':']) {
                    self.i += 4;
                    let p = self.integer()?;
                    self.expect('/')?;
                    let q = self.integer()?;
                    self.expect(']')?;
                    if q == 0 || gcd(p, q) != 1 || p == 0 {
                        self.i = start;
                        return Err(self.err("fraction must be reduced with nonzero terms"));
                    }
                    return Ok(Tangle::Rational { p, q });
                }
                let a = self.integer()?;
                if self.peek() == Some('/') {
                    self.i += 1;
                    let b = self.integer()?;
                    self.expect(']')?;
                    if a.abs() != 1 || b == 0 {
                        self.i = start;
                        return Err(self.err("expected [1/k] or [-1/k]; use [p/q:a/b] for other fractions"));
                    }
                    return Ok(Tangle::VTwist(a * b));
                }
                self.expect(']')?;
                if a == 0 {
                    self.i = start;
                    return Err(self.err("[0] has no crossings"));
                }
                Ok(Tangle::Twist(a))
            }
            _ => Err(self.err("expected '[' or '('")),
        }
    }

    fn integer(&mut self) -> Result<i64, TangleError> {
        self.skip_ws();
        let start = self.i;
        if self.i < self.s.len() && (self.s[self.i] == '-' || self.s[self.i] == '+') {
            self.i += 1;
        }
        while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
            self.i += 1;
        }
        let text: String = self.s[start..self.i].iter().collect();
        text.parse().map_err(|_| TangleError::Parse {
            pos: start,
            msg: "expected an integer".into(),
        })
    }
}

/// Value of `tr_v` or `tr_h` matching a closure.
pub fn closure_trace(bd: &BoundaryData, closure: Closure) -> C64 {
    match closure {
        Closure::N => bd.tr_v,
        Closure::D => bd.tr_h,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::{corner_of, crossing_of, port};
    use crate::mat2::{c, cr};
    use crate::random::generic_trace;
    use crate::testutil::{random_in_trace, rng};
    use crate::trace::canonical_pair;

    #[test]
    fn cf_examples() {
        assert_eq!(cf_expand(3, 1).unwrap(), vec![3]);
        assert_eq!(cf_expand(1, 3).unwrap(), vec![0, 3]);
        assert_eq!(cf_expand(-13, 3).unwrap(), vec![-4, -3]);
        assert_eq!(cf_value(&[-4, -3]), (-13, 3));
        assert_eq!(build_rational_tangle(1, 3).unwrap(), Tangle::VTwist(3));
        assert_eq!(build_rational_tangle(3, 1).unwrap(), Tangle::Twist(3));
        assert!(matches!(cf_expand(2, 4), Err(TangleError::InvalidFraction { .. })));
        assert!(matches!(build_rational_tangle(0, 1), Err(TangleError::ZeroTangle)));
    }

    #[test]
    fn compiled_sizes() {
        let d = Tangle::Twist(1).compile().unwrap();
        assert_eq!(d.crossing_count(), 1);
        assert_eq!(d.graph.over[0], POSITIVE_OVER);
        let t0 = Tangle::horiz(Tangle::vert(Tangle::Twist(3), Tangle::VTwist(2)), Tangle::VTwist(2));
        assert_eq!(t0.compile().unwrap().crossing_count(), 7);
        assert_eq!(
            build_rational_tangle(-13, 3)
                .unwrap()
                .compile()
                .unwrap()
                .crossing_count(),
            7
        );
    }

    #[test]
    fn twist_special_values() {
        let mut r = rng(4);
        for _ in 0..20 {
            let t = generic_trace(&mut r);
            for (s, period) in [(cr(1.0), 3), (cr(0.0), 4)] {
                let (a0, a1) = canonical_pair(t, s);
                let mut all = vec![a0, a1];
                all.extend(twist_propagate(&a0, &a1, 12));
                for k in 0..=8 {
                    assert!(all[k + period].dist(&all[k]) < 1e-9, "s={s} k={k}");
                }
            }
            let a0 = random_in_trace(&mut r, t);
            let a1 = random_in_trace(&mut r, t);
            let a4 = twist_propagate(&a0, &a1, 3)[2];
            let g = (a1 * a0) * (a1 * a0);
            assert!(a4.dist(&(g * a0 * g.adjugate())) < 1e-9 * g.norm_inf().powi(2));
        }
    }

    #[test]
    fn twist_formulas_hold() {
        let mut r = rng(8);
        for _ in 0..500 {
            let t = generic_trace(&mut r);
            let a0 = random_in_trace(&mut r, t);
            let a1 = random_in_trace(&mut r, t);
            let (e1, e2) = twist_trace_check(&a0, &a1);
            let scale = (1.0 + tr2(&a0, &a1).norm()).powi(3);
            assert!(e1 < 1e-9 * scale && e2 < 1e-9 * scale, "{e1} {e2}");
        }
    }

    #[test]
    fn propagation_matches_twist_recursion() {
        let mut r = rng(9);
        for n in 1..7usize {
            let t = generic_trace(&mut r);
            let a0 = random_in_trace(&mut r, t);
            let a1 = random_in_trace(&mut r, t);
            let d = Tangle::Twist(n as i64).compile().unwrap();
            let rep = rep_propagate(&d, &twist_seeds(&a0, &a1), t).unwrap();
            let mut all = vec![a0, a1];
            all.extend(twist_propagate(&a0, &a1, n));
            let (lo, hi) = (all[n], all[n + 1]);
            let scale = lo.norm_inf().max(hi.norm_inf());
            let (se, ne) = (rep.end(Corner::Se), rep.end(Corner::Ne));
            let straight = se.dist(&lo).max(ne.dist(&hi));
            let swapped = se.dist(&hi).max(ne.dist(&lo));
            assert!(straight.min(swapped) < 1e-12 * scale, "n={n}");
        }
    }

    #[test]
    fn single_crossing_relation() {
        let mut r = rng(2);
        let t = c(0.7, 1.1);
        let a = random_in_trace(&mut r, t);
        let b = random_in_trace(&mut r, t);
        let d = TangleDiagram::crossing(1);
        let rep = rep_propagate(&d, &[(Corner::Nw, a), (Corner::Sw, b)], t).unwrap();
        // the over strand runs nw to se, the under strand sw to ne
        assert!(rep.end(Corner::Se).dist(&a.adjugate()) < 1e-14);
        let incoming = b.adjugate();
        let over = a.adjugate();
        assert!(rep.end(Corner::Ne).dist(&(over * incoming * over.adjugate())) < 1e-12);
    }

    /// Orient every strand and give every arc the value `m`.
    fn abelian_rep(d: &TangleDiagram, m: &Mat2) -> TangleRep {
        let g = &d.graph;
        let mut vals = vec![None; g.port_count()];
        for start in d.ends {
            if vals[start].is_some() {
                continue;
            }
            let mut p = start;
            vals[p] = Some(m.adjugate());
            loop {
                let q = port(crossing_of(p), corner_of(p).across());
                vals[q] = Some(*m);
                match g.partner[q] {
                    Some(next) => {
                        vals[next] = Some(m.adjugate());
                        p = next;
                    }
                    None => break,
                }
            }
        }
        TangleRep {
            diagram: d.clone(),
            values: vals.into_iter().map(|v| v.unwrap()).collect(),
            t: m.trace(),
            residual: 0.0,
        }
    }

    #[test]
    fn boundary_and_closures() {
        let mut r = rng(6);
        let t = c(1.4, -0.2);
        let d3 = Tangle::Twist(3).compile().unwrap();
        let (a0, a1) = canonical_pair(t, cr(1.0));
        let rep = rep_propagate(&d3, &twist_seeds(&a0, &a1), t).unwrap();
        assert!(closure_defect(&rep, Closure::N) < 1e-9);
        let bd = boundary_data(&rep);
        assert!((bd.tr_v - 1.0).norm() < 1e-12);
        assert!(bd.g.dist(&Mat2::identity()) < 1e-9);
        assert!((bd.tr_h - 2.0).norm() < 1e-9);
        let sw = rep.end(Corner::Sw);
        assert!((tr2(&sw, &rep.end(Corner::Nw)) - bd.tr_v).norm() < 1e-11);

        let d1 = Tangle::Twist(1).compile().unwrap();
        for k in 0..20 {
            let s = c(-3.0 + 0.3 * k as f64, 0.4);
            let (a0, a1) = canonical_pair(t, s);
            let rep = rep_propagate(&d1, &twist_seeds(&a0, &a1), t).unwrap();
            assert!(closure_defect(&rep, Closure::N) > 0.1);
        }

        let m = random_in_trace(&mut r, t);
        for d in [d3, Tangle::VTwist(-2).compile().unwrap()] {
            let ab = abelian_rep(&d, &m);
            assert!(max_defect(&d.graph.relations(), &ab.values) < 1e-12);
        }
        // a single strand closed up: nw joined to sw carries one arc
        let d = Tangle::VTwist(3).compile().unwrap();
        let ab = abelian_rep(&d, &m);
        assert!(closure_defect(&ab, Closure::N).min(closure_defect(&ab, Closure::D)) < 1e-12);
    }

    #[test]
    fn trefoil_roots_at_generic_traces() {
        let mut r = rng(12);
        for _ in 0..5 {
            let t = generic_trace(&mut r);
            let roots = closure_roots(3, 1, Closure::N, t, SearchBox::default()).unwrap();
            assert_eq!(roots.len(), 1);
            assert!((roots[0].s - 1.0).norm() < 1e-8);
            assert!(closure_roots(1, 1, Closure::N, t, SearchBox::default())
                .unwrap()
                .is_empty());
        }
    }

    #[test]
    fn torus_knot_root_counts() {
        let t = c(1.37, 0.21);
        for q in [3, 5, 7, 9] {
            let roots = closure_roots(q, 1, Closure::N, t, SearchBox::default()).unwrap();
            assert_eq!(roots.len(), (q as usize - 1) / 2, "q={q}");
            for root in &roots {
                assert!(closure_defect(&root.rep, Closure::N) < 1e-8);
            }
        }
    }

    #[test]
    fn two_bridge_example_roots() {
        let t = c(2.5, 0.0);
        let roots = closure_roots(-13, 3, Closure::N, t, SearchBox::default()).unwrap();
        assert_eq!(roots.len(), 6);
        let t0 = Tangle::horiz(Tangle::vert(Tangle::Twist(3), Tangle::VTwist(2)), Tangle::VTwist(2));
        let roots = closure_roots_diagram(&t0.compile().unwrap(), Closure::N, t, SearchBox::default()).unwrap();
        assert!(!roots.is_empty());
    }

    #[test]
    fn composite_propagates() {
        let t0 = parse_tangle("([3]*[1/2])+[1/2]").unwrap();
        let d = t0.compile().unwrap();
        let t = c(1.3, 0.5);
        let roots = closure_roots_diagram(&d, Closure::N, t, SearchBox::default()).unwrap();
        let rep = &roots[0].rep;
        let seeds = [(Corner::Nw, rep.end(Corner::Nw)), (Corner::Sw, rep.end(Corner::Sw))];
        let again = rep_propagate(&d, &seeds, t).unwrap();
        assert!(again.residual < 1e-9);
    }

    #[test]
    fn parser_accepts_the_grammar() {
        assert_eq!(parse_tangle("[3]").unwrap(), Tangle::Twist(3));
        assert_eq!(parse_tangle("[\u{2212}1/3]").unwrap(), Tangle::VTwist(-3));
        assert_eq!(parse_tangle("[p/q:-13/3]").unwrap(), Tangle::Rational { p: -13, q: 3 });
        assert_eq!(
            parse_tangle("[1]+[2]*[3]").unwrap(),
            Tangle::vert(Tangle::horiz(Tangle::Twist(1), Tangle::Twist(2)), Tangle::Twist(3))
        );
        let t = parse_tangle(" ( [3] * [1/2] ) + [1/2] ").unwrap();
        assert_eq!(parse_tangle(&t.to_string()).unwrap(), t);
        for bad in ["[3", "[2/3]", "3", "[3]+", "[0]", "([3]", "[p/q:2/4]"] {
            assert!(matches!(parse_tangle(bad), Err(TangleError::Parse { .. })), "{bad}");
        }
        match parse_tangle("[3]+x") {
            Err(TangleError::Parse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mirror_swaps_signs() {
        let d = Tangle::VTwist(-3).compile().unwrap();
        assert_eq!(d.mirrored(), Tangle::VTwist(3).compile().unwrap());
        assert_eq!(d.mirrored().mirrored(), d);
        assert_eq!(Tangle::VTwist(-3).mirror(), Tangle::VTwist(3));
    }
}
