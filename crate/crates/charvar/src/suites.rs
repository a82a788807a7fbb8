//! Named property suites replayed by the command-line `verify` command.

use std::time::Instant;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::explorer::{
    chain_constraints, chain_coordinates, chart_constraints, estimate_local_dimension, glue_theorem_pipeline, path_gap,
    pretzel_coordinates, pretzel_from_glue, pretzel_glue_spec, q1_via_case1, q2_via_case2, sample_chart, ExplorerError,
    DEFAULT_RANK_TOL, XYZ_WORDS,
};
use crate::knot::{build_pretzel_rep, builtin, longitude_identity_defect, validate_rep, KnotName, PRETZEL_WORDS};
use crate::mat2::{centralizer_element, cr, is_commuting, tr2, Branch};
use crate::random::{complex_in_box, generic_trace, random_in_trace, random_sl2, seeded, SeededRng};
use crate::tangle::twist_trace_check;
use crate::trace::{
    b_t_distance, canonical_pair, chain_residual, chain_sample, complete_triple, random_chain_params, sample_ctr,
    solve_f_t, ChainSpec, FrickeData,
};

pub const SUITES: [&str; 10] = [
    "lemma21",
    "lemma22",
    "lemma23",
    "lemma31",
    "lemma41",
    "eqs12",
    "fricke",
    "longitude",
    "charts",
    "glue",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SuiteError {
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub cases: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub wall_time_s: f64,
}

pub fn default_tolerance(name: &str) -> Option<f64> {
    Some(match name {
        "lemma21" | "lemma22" | "lemma23" | "lemma31" | "lemma41" | "eqs12" | "fricke" | "charts" => 1e-9,
        "longitude" => 1e-8,
        "glue" => 1e-7,
        _ => return None,
    })
}

/// Expand `all` and reject unknown names.
pub fn resolve_suites(names: &[String]) -> Result<Vec<&'static str>, SuiteError> {
    let mut out = Vec::new();
    for n in names {
        if n == "all" {
            out.extend(SUITES);
            continue;
        }
        let s = SUITES
            .iter()
            .find(|s| **s == n.as_str())
            .ok_or_else(|| SuiteError::UnknownSuite(n.clone()))?;
        out.push(*s);
    }
    out.dedup();
    Ok(out)
}

pub fn run_suite(name: &str, seed: u64, tolerance: Option<f64>) -> Result<SuiteReport, SuiteError> {
    let tol = match (tolerance, default_tolerance(name)) {
        (_, None) => return Err(SuiteError::UnknownSuite(name.to_string())),
        (Some(t), _) => t,
        (None, Some(t)) => t,
    };
    let mut rng = seeded(seed);
    let start = Instant::now();
    let (cases, max_residual) = match name {
        "lemma21" => lemma21(&mut rng),
        "lemma22" => lemma22(&mut rng),
        "lemma23" => lemma23(&mut rng),
        "lemma31" => lemma31(&mut rng),
        "lemma41" => lemma41(&mut rng),
        "eqs12" => eqs12(&mut rng),
        "fricke" => fricke(&mut rng),
        "longitude" => longitude(seed),
        "charts" => charts(seed),
        _ => glue(&mut rng, seed),
    };
    Ok(SuiteReport {
        suite: name.to_string(),
        cases,
        max_residual,
        tolerance: tol,
        passed: max_residual <= tol,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// Centralizer elements commute with `a` and have unit determinant; for a
/// non-commuting `b`, none of them except `+-e` commutes with `b`.
fn lemma21(rng: &mut SeededRng) -> (usize, f64) {
    let mut worst: f64 = 0.0;
    let n = 200;
    for _ in 0..n {
        let t = generic_trace(rng);
        let a = random_in_trace(rng, t);
        let b = random_in_trace(rng, t);
        let mu = complex_in_box(rng, 1.5);
        for branch in [Branch::Plus, Branch::Minus] {
            let m = centralizer_element(&a, t, mu, branch).matrix;
            let scale = 1.0 + m.norm_inf() * a.norm_inf();
            worst = worst.max(m.commutator_norm(&a) / scale).max(m.det_drift());
            if mu.norm() > 1e-3 && is_commuting(&m, &b, 1e-10 * scale) {
                worst = f64::INFINITY;
            }
        }
    }
    (n, worst)
}

/// Fiber samples `x` of `C_t^r(a)`: `tr x = t`, `tr(ax) = r`, `det x = 1`.
fn lemma22(rng: &mut SeededRng) -> (usize, f64) {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    while cases < 200 {
        let t = generic_trace(rng);
        let a = random_in_trace(rng, t);
        let r = complex_in_box(rng, 2.5);
        if b_t_distance(t, r) < 1e-3 {
            continue;
        }
        let u = complex_in_box(rng, 1.0) + cr(1.5);
        let Ok(x) = sample_ctr(&a, t, r, u) else {
            return (cases, f64::INFINITY);
        };
        let scale = 1.0 + x.norm_inf();
        worst = worst
            .max((x.trace() - t).norm() / scale)
            .max((tr2(&a, &x) - r).norm() / (scale * (1.0 + a.norm_inf())))
            .max(x.det_drift());
        cases += 1;
    }
    (cases, worst)
}

/// Canonical pairs and completed triples read back their trace data.
fn lemma23(rng: &mut SeededRng) -> (usize, f64) {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    while cases < 200 {
        let t = generic_trace(rng);
        let (t12, t13, t23) = (
            complex_in_box(rng, 2.5),
            complex_in_box(rng, 2.5),
            complex_in_box(rng, 2.5),
        );
        if b_t_distance(t, t12) < 1e-3 {
            continue;
        }
        let t123 = solve_f_t(t, t12, t13, t23).roots.0;
        let (a1, a2) = canonical_pair(t, t12);
        let Ok(a3) = complete_triple(&a1, &a2, t, t13, t23, t123) else {
            return (cases, f64::INFINITY);
        };
        let d = FrickeData::of_triple(&a1, &a2, &a3);
        let scale = 1.0 + t123.norm();
        for (got, want) in [
            (d.t, t),
            (a3.trace(), t),
            (d.t12, t12),
            (d.t13, t13),
            (d.t23, t23),
            (d.t123, t123),
        ] {
            worst = worst.max((got - want).norm() / scale);
        }
        cases += 1;
    }
    (cases, worst)
}

/// Chains meet their trace constraints and have `n - 2` free directions.
fn lemma31(rng: &mut SeededRng) -> (usize, f64) {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in [3usize, 4, 5] {
        let mut done = 0;
        let mut attempts = 0;
        while done < 30 && attempts < 1000 {
            attempts += 1;
            let t = generic_trace(rng);
            let spec = ChainSpec {
                t,
                a: random_in_trace(rng, t),
                b: random_in_trace(rng, t),
                traces: (0..n).map(|_| complex_in_box(rng, 2.0)).collect(),
            };
            if spec.validate().is_err() {
                continue;
            }
            let params = random_chain_params(rng, n);
            let Ok(Some(chain)) = chain_sample(&spec, &params, 1) else {
                continue;
            };
            let scale = chain.links.iter().map(|x| x.norm_inf()).fold(1.0, f64::max);
            worst = worst.max(chain_residual(&spec, &chain.links) / scale);
            match estimate_local_dimension(&chain_constraints(&spec), &chain_coordinates(&chain.links), 1e-6) {
                Ok(rep) if rep.dimension == n - 2 => {}
                Ok(_) => worst = f64::INFINITY,
                Err(ExplorerError::IllConditioned { .. }) => continue,
                Err(_) => worst = f64::INFINITY,
            }
            done += 1;
        }
        cases += done;
    }
    (cases, worst)
}

/// `a b a^k b a = -b^(k-2)` whenever `tr(ab) = 1`.
fn lemma41(rng: &mut SeededRng) -> (usize, f64) {
    let mut worst: f64 = 0.0;
    let n = 100;
    for _ in 0..n {
        let t = generic_trace(rng);
        let (a0, b0) = canonical_pair(t, cr(1.0));
        let g = random_sl2(rng);
        let gi = g.adjugate();
        let (a, b) = (g * a0 * gi, g * b0 * gi);
        for k in -3..=5 {
            let lhs = a * b * a.pow(k) * b * a;
            worst = worst.max((lhs + b.pow(k - 2)).norm_inf());
        }
    }
    (n, worst)
}

/// The twist trace formulas for `tr(a_1^-1 a_3)` and `tr(a_0^-1 a_3)`, with
/// inputs in the canonical frame of `s = tr(a_0 a_1)`.
fn eqs12(rng: &mut SeededRng) -> (usize, f64) {
    let mut worst: f64 = 0.0;
    let n = 500;
    for _ in 0..n {
        let t = generic_trace(rng);
        let (a0, a1) = canonical_pair(t, complex_in_box(rng, 2.5));
        let (e1, e2) = twist_trace_check(&a0, &a1);
        worst = worst.max(e1).max(e2);
    }
    (n, worst)
}

/// Random triples satisfy `f_t = 0`, and their triple trace is a root.
fn fricke(rng: &mut SeededRng) -> (usize, f64) {
    let mut worst: f64 = 0.0;
    let n = 1000;
    for _ in 0..n {
        let t = generic_trace(rng);
        let (a1, a2, a3) = (
            random_in_trace(rng, t),
            random_in_trace(rng, t),
            random_in_trace(rng, t),
        );
        let d = FrickeData::of_triple(&a1, &a2, &a3);
        let roots = solve_f_t(t, d.t12, d.t13, d.t23).roots;
        let miss = (roots.0 - d.t123).norm().min((roots.1 - d.t123).norm());
        worst = worst.max(d.residual());
        if miss > 1e-8 {
            worst = f64::INFINITY;
        }
    }
    (n, worst)
}

fn longitude(seed: u64) -> (usize, f64) {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for k in KnotName::ALL {
        for p in sample_chart(k, 200, seed) {
            let Ok(rep) = p.build() else {
                return (cases, f64::INFINITY);
            };
            worst = worst.max(longitude_identity_defect(k, &rep.rep));
            cases += 1;
        }
    }
    (cases, worst)
}

fn charts(seed: u64) -> (usize, f64) {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for k in KnotName::ALL {
        let sys = chart_constraints(k);
        for p in sample_chart(k, 100, seed) {
            let Ok(rep) = p.build() else {
                return (cases, f64::INFINITY);
            };
            worst = worst.max(validate_rep(&builtin(k).0, &rep.rep)).max(p.max_residual());
            match estimate_local_dimension(&sys, &p.params, DEFAULT_RANK_TOL) {
                Ok(d) if d.dimension == 2 => {}
                _ => worst = f64::INFINITY,
            }
            cases += 1;
        }
    }
    (cases, worst)
}

/// The stacked construction and the two conditional structures agree with
/// the direct chart builders.
fn glue(rng: &mut SeededRng, seed: u64) -> (usize, f64) {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut attempts = 0;
    while cases < 10 && attempts < 100 {
        attempts += 1;
        let t = generic_trace(rng);
        let Ok(spec) = pretzel_glue_spec(t) else {
            return (cases, f64::INFINITY);
        };
        let params = random_chain_params(rng, 3);
        let glued = match glue_theorem_pipeline(&spec, &params, seed) {
            Ok(g) => g,
            Err(ExplorerError::ChainClosureFailure) => continue,
            Err(_) => return (cases, f64::INFINITY),
        };
        if !glued.irreducible {
            return (cases, f64::INFINITY);
        }
        let Ok(via) = pretzel_from_glue(&glued) else {
            return (cases, f64::INFINITY);
        };
        let [t, t13, t123, t134] = pretzel_coordinates(&via).expect("named quadruple");
        let Ok(direct) = build_pretzel_rep(t, t13, t123, t134) else {
            return (cases, f64::INFINITY);
        };
        worst = worst.max(path_gap(&via, &direct, &PRETZEL_WORDS).unwrap_or(f64::INFINITY));
        cases += 1;
    }
    for (k, via) in [
        (KnotName::Q1, q1_via_case1 as fn(&_) -> _),
        (KnotName::Q2, q2_via_case2),
    ] {
        for p in sample_chart(k, 10, seed ^ rng.gen::<u64>()) {
            let (Ok(v), Ok(d)) = (via(&p), p.build()) else {
                return (cases, f64::INFINITY);
            };
            worst = worst.max(path_gap(&v, &d, &XYZ_WORDS).unwrap_or(f64::INFINITY));
            cases += 1;
        }
    }
    (cases, worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        for name in SUITES {
            let r = run_suite(name, 7, None).unwrap();
            assert!(r.passed, "{r:?}");
            assert!(r.cases > 0);
        }
    }

    #[test]
    fn names_resolve() {
        assert_eq!(resolve_suites(&["all".into()]).unwrap().len(), 10);
        assert_eq!(resolve_suites(&["lemma41".into()]).unwrap(), vec!["lemma41"]);
        assert!(matches!(
            resolve_suites(&["bogus".into()]),
            Err(SuiteError::UnknownSuite(_))
        ));
        assert!(run_suite("bogus", 1, None).is_err());
    }
}
