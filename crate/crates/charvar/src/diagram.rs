//! Port-level diagrams of tangles and links, and the engine that fills in arc
//! values from the crossing relations.
//!
//! Every crossing is drawn as an `X` in a local frame with four corner ports.
//! The value stored at a port is the arc leaving the crossing through it, so
//! an edge joining ports `p` and `q` forces `rho(p) rho(q) = e`.

use serde::{Deserialize, Serialize};

use crate::mat2::{Mat2, C64};
use crate::numeric::{levenberg_marquardt, LmOptions};
use crate::random::{random_in_trace, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Corner {
    Nw,
    Ne,
    Sw,
    Se,
}

impl Corner {
    pub const ALL: [Corner; 4] = [Corner::Nw, Corner::Ne, Corner::Sw, Corner::Se];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Corner {
        Corner::ALL[i % 4]
    }

    pub fn pos(self) -> (f64, f64) {
        match self {
            Corner::Nw => (-1.0, 1.0),
            Corner::Ne => (1.0, 1.0),
            Corner::Sw => (-1.0, -1.0),
            Corner::Se => (1.0, -1.0),
        }
    }

    /// The corner joined to this one by the strand through the crossing.
    pub fn across(self) -> Corner {
        match self {
            Corner::Nw => Corner::Se,
            Corner::Se => Corner::Nw,
            Corner::Ne => Corner::Sw,
            Corner::Sw => Corner::Ne,
        }
    }

    /// Reflection in the vertical axis.
    pub fn mirror(self) -> Corner {
        match self {
            Corner::Nw => Corner::Ne,
            Corner::Ne => Corner::Nw,
            Corner::Sw => Corner::Se,
            Corner::Se => Corner::Sw,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Corner::Nw => "nw",
            Corner::Ne => "ne",
            Corner::Sw => "sw",
            Corner::Se => "se",
        }
    }
}

pub type Port = usize;

pub fn port(crossing: usize, corner: Corner) -> Port {
    4 * crossing + corner.index()
}

pub fn crossing_of(p: Port) -> usize {
    p / 4
}

pub fn corner_of(p: Port) -> Corner {
    Corner::from_index(p % 4)
}

/// Which strand of a crossing passes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Diagonal {
    NwSe,
    NeSw,
}

impl Diagonal {
    pub fn corners(self) -> (Corner, Corner) {
        match self {
            Diagonal::NwSe => (Corner::Nw, Corner::Se),
            Diagonal::NeSw => (Corner::Ne, Corner::Sw),
        }
    }

    pub fn other(self) -> Diagonal {
        match self {
            Diagonal::NwSe => Diagonal::NeSw,
            Diagonal::NeSw => Diagonal::NwSe,
        }
    }
}

fn cross2(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

/// One relation between port values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `rho(a) rho(b) = e`, for edges and for the two halves of an over-strand.
    Inverse(Port, Port),
    /// `rho(to) = A rho(from)^-1 A^-1` with `A = rho(over)`.
    Under { from: Port, to: Port, over: Port },
}

/// Crossings plus the pairing of their ports. Unpaired ports are open ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortGraph {
    pub over: Vec<Diagonal>,
    pub partner: Vec<Option<Port>>,
}

impl PortGraph {
    pub fn single(over: Diagonal) -> Self {
        PortGraph {
            over: vec![over],
            partner: vec![None; 4],
        }
    }

    pub fn crossing_count(&self) -> usize {
        self.over.len()
    }

    pub fn port_count(&self) -> usize {
        self.partner.len()
    }

    pub fn join(&mut self, a: Port, b: Port) {
        assert!(
            a != b && self.partner[a].is_none() && self.partner[b].is_none(),
            "port already joined"
        );
        self.partner[a] = Some(b);
        self.partner[b] = Some(a);
    }

    /// Disjoint union; ports of `other` are shifted by the returned offset.
    pub fn union(&self, other: &PortGraph) -> (PortGraph, usize) {
        let off = self.port_count();
        let mut over = self.over.clone();
        over.extend_from_slice(&other.over);
        let mut partner = self.partner.clone();
        partner.extend(other.partner.iter().map(|p| p.map(|q| q + off)));
        (PortGraph { over, partner }, off)
    }

    pub fn mirror_port(p: Port) -> Port {
        port(crossing_of(p), corner_of(p).mirror())
    }

    pub fn mirrored(&self) -> PortGraph {
        let over = self.over.iter().map(|d| d.other()).collect();
        let mut partner = vec![None; self.port_count()];
        for (p, q) in self.partner.iter().enumerate() {
            partner[Self::mirror_port(p)] = q.map(Self::mirror_port);
        }
        PortGraph { over, partner }
    }

    pub fn over_ports(&self, c: usize) -> (Port, Port) {
        let (a, b) = self.over[c].corners();
        (port(c, a), port(c, b))
    }

    pub fn under_ports(&self, c: usize) -> (Port, Port) {
        let (a, b) = self.over[c].other().corners();
        (port(c, a), port(c, b))
    }

    /// The over port lying to the right of the under strand run from `from`
    /// to `to`.
    pub fn right_over(&self, c: usize, from: Port) -> Port {
        let (u1, u2) = self.under_ports(c);
        let to = if from == u1 { u2 } else { u1 };
        let (pf, pt) = (corner_of(from).pos(), corner_of(to).pos());
        let dir = (pt.0 - pf.0, pt.1 - pf.1);
        let (o1, o2) = self.over_ports(c);
        if cross2(dir, corner_of(o1).pos()) < 0.0 {
            o1
        } else {
            o2
        }
    }

    pub fn open_ports(&self) -> Vec<Port> {
        (0..self.port_count()).filter(|p| self.partner[*p].is_none()).collect()
    }

    pub fn relations(&self) -> Vec<Relation> {
        let mut rels = Vec::new();
        for (p, q) in self.partner.iter().enumerate() {
            if let Some(q) = q {
                if p < *q {
                    rels.push(Relation::Inverse(p, *q));
                }
            }
        }
        for c in 0..self.crossing_count() {
            let (o1, o2) = self.over_ports(c);
            rels.push(Relation::Inverse(o1, o2));
            let (u1, u2) = self.under_ports(c);
            rels.push(Relation::Under {
                from: u1,
                to: u2,
                over: self.right_over(c, u1),
            });
        }
        rels
    }
}

fn inv(m: &Mat2) -> Mat2 {
    m.adjugate()
}

/// Fill in every port reachable from the known ones. Returns the number of
/// ports set.
pub fn propagate(rels: &[Relation], vals: &mut [Option<Mat2>]) -> usize {
    let mut count = 0;
    loop {
        let mut changed = false;
        for r in rels {
            match *r {
                Relation::Inverse(a, b) => match (vals[a], vals[b]) {
                    (Some(x), None) => {
                        vals[b] = Some(inv(&x));
                        count += 1;
                        changed = true;
                    }
                    (None, Some(y)) => {
                        vals[a] = Some(inv(&y));
                        count += 1;
                        changed = true;
                    }
                    _ => {}
                },
                Relation::Under { from, to, over } => {
                    let Some(a) = vals[over] else { continue };
                    match (vals[from], vals[to]) {
                        (Some(f), None) => {
                            vals[to] = Some(a * inv(&f) * inv(&a));
                            count += 1;
                            changed = true;
                        }
                        (None, Some(g)) => {
                            vals[from] = Some(inv(&a) * inv(&g) * a);
                            count += 1;
                            changed = true;
                        }
                        _ => {}
                    }
                }
            }
        }
        if !changed {
            return count;
        }
    }
}

/// Boolean version of [`propagate`]: which ports are determined by the seeds.
pub fn determined(rels: &[Relation], n_ports: usize, seeds: &[Port]) -> Vec<bool> {
    let mut known = vec![false; n_ports];
    for s in seeds {
        known[*s] = true;
    }
    loop {
        let mut changed = false;
        for r in rels {
            match *r {
                Relation::Inverse(a, b) => {
                    if known[a] != known[b] {
                        known[a] = true;
                        known[b] = true;
                        changed = true;
                    }
                }
                Relation::Under { from, to, over } => {
                    if known[over] && known[from] != known[to] {
                        known[from] = true;
                        known[to] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return known;
        }
    }
}

/// Defect matrix of one relation.
pub fn relation_defect(r: &Relation, vals: &[Mat2]) -> Mat2 {
    match *r {
        Relation::Inverse(a, b) => vals[a] * vals[b] - Mat2::identity(),
        Relation::Under { from, to, over } => {
            let a = vals[over];
            vals[to] - a * inv(&vals[from]) * inv(&a)
        }
    }
}

/// Largest defect over all relations, in the infinity norm.
pub fn max_defect(rels: &[Relation], vals: &[Mat2]) -> f64 {
    rels.iter()
        .map(|r| relation_defect(r, vals).norm_inf())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solved {
    pub values: Vec<Mat2>,
    pub residual: f64,
    /// Ports that had to be treated as unknowns and solved for.
    pub free_ports: Vec<Port>,
}

/// Propagate from the seeds; ports left undetermined become unknowns solved
/// by least squares so that all relations hold.
pub fn solve_ports(graph: &PortGraph, seeds: &[(Port, Mat2)], t: C64, seed: u64) -> Solved {
    let rels = graph.relations();
    let n = graph.port_count();
    let mut base: Vec<Option<Mat2>> = vec![None; n];
    for (p, m) in seeds {
        base[*p] = Some(*m);
    }
    // choose free ports greedily until everything is determined
    let mut free = Vec::new();
    let mut known = determined(&rels, n, &seeds.iter().map(|s| s.0).collect::<Vec<_>>());
    while let Some(p) = pick_free(graph, &known) {
        free.push(p);
        let mut all: Vec<Port> = seeds.iter().map(|s| s.0).collect();
        all.extend_from_slice(&free);
        known = determined(&rels, n, &all);
    }
    let fill = |z: &[C64]| -> Vec<Mat2> {
        let mut vals = base.clone();
        for (k, p) in free.iter().enumerate() {
            vals[*p] = Some(Mat2::new(z[4 * k], z[4 * k + 1], z[4 * k + 2], z[4 * k + 3]));
        }
        propagate(&rels, &mut vals);
        vals.into_iter().map(|v| v.unwrap_or_else(Mat2::zero)).collect()
    };
    if free.is_empty() {
        let values = fill(&[]);
        let residual = max_defect(&rels, &values);
        return Solved {
            values,
            residual,
            free_ports: free,
        };
    }
    let resid = |z: &[C64]| -> Vec<C64> {
        let vals = fill(z);
        let mut out = Vec::new();
        for r in &rels {
            out.extend_from_slice(&relation_defect(r, &vals).entries());
        }
        for k in 0..free.len() {
            let m = Mat2::new(z[4 * k], z[4 * k + 1], z[4 * k + 2], z[4 * k + 3]);
            out.push(m.trace() - t);
            out.push(m.det() - 1.0);
        }
        out
    };
    let mut rng = seeded(seed);
    let mut best: Option<(Vec<C64>, f64)> = None;
    for _ in 0..8 {
        let z0: Vec<C64> = free
            .iter()
            .flat_map(|_| random_in_trace(&mut rng, t).entries())
            .collect();
        let (z, err) = levenberg_marquardt(&resid, &z0, LmOptions::default());
        if best.as_ref().is_none_or(|b| err < b.1) {
            best = Some((z, err));
        }
        if err < 1e-12 {
            break;
        }
    }
    let (z, _) = best.expect("at least one restart");
    let values = fill(&z);
    let mut residual = max_defect(&rels, &values);
    for v in &values {
        residual = residual.max((v.trace() - t).norm()).max(v.det_drift());
    }
    Solved {
        values,
        residual,
        free_ports: free,
    }
}

fn pick_free(graph: &PortGraph, known: &[bool]) -> Option<Port> {
    // prefer an over port whose crossing already has an under value, since
    // fixing it unlocks the under strand
    for c in 0..graph.crossing_count() {
        let (o1, _) = graph.over_ports(c);
        let (u1, u2) = graph.under_ports(c);
        if !known[o1] && (known[u1] || known[u2]) {
            return Some(o1);
        }
    }
    known.iter().position(|k| !k)
}

/// One traversal of a closed component: the sequence of `(enter, exit)`
/// port pairs visited, starting by leaving through `start`.
pub fn trace_component(graph: &PortGraph, start: Port) -> Vec<(Port, Port)> {
    let mut out = Vec::new();
    let mut exit = start;
    loop {
        let enter = graph.partner[exit].expect("closed diagram");
        let next_exit = port(crossing_of(enter), corner_of(enter).across());
        out.push((enter, next_exit));
        exit = next_exit;
        if exit == start {
            return out;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn right_over_is_consistent_both_ways() {
        for d in [Diagonal::NwSe, Diagonal::NeSw] {
            let g = PortGraph::single(d);
            let (u1, u2) = g.under_ports(0);
            let (o1, o2) = g.over_ports(0);
            let r12 = g.right_over(0, u1);
            let r21 = g.right_over(0, u2);
            assert!(r12 != r21);
            assert!([o1, o2].contains(&r12) && [o1, o2].contains(&r21));
        }
    }

    #[test]
    fn mirror_is_an_involution() {
        let mut g = PortGraph::single(Diagonal::NwSe);
        let (h, off) = g.union(&PortGraph::single(Diagonal::NeSw));
        g = h;
        g.join(port(0, Corner::Ne), off + Corner::Nw.index());
        assert_eq!(g.mirrored().mirrored(), g);
    }
}
