//! `charvar`: verification suites, chart samples, Dehn fillings and tangle
//! closure roots from the command line.

mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;

use charvar::explorer::{
    chart_constraints, chart_variables, dehn_table, estimate_local_dimension, sample_chart, DimensionReport,
    DEFAULT_RANK_TOL,
};
use charvar::knot::{builtin, longitude_gap, validate_rep, KnotError, KnotName, Slope};
use charvar::suites::{default_tolerance, resolve_suites, run_suite, SuiteReport};
use charvar::tangle::{closure_roots_diagram, parse_tangle, Closure, SearchBox};

use output::{emit, parse_complex, render, Envelope, Format, RunConfig};

#[derive(Parser)]
#[command(
    name = "charvar",
    version,
    about = "SL(2,C) character variety experiments on knots and tangles"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Random seed.
    #[arg(long, global = true, env = "CHARVAR_SEED", default_value_t = 1)]
    seed: u64,
    /// Tolerance override, `name=value`; repeatable.
    #[arg(long = "tol", global = true, value_parser = parse_tol)]
    tol: Vec<(String, f64)>,
    /// Output file; stdout when absent.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run named property suites (`all` for every suite).
    Verify {
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        suites: Vec<String>,
    },
    /// Sample points of a chart.
    Sample {
        #[arg(long)]
        chart: KnotName,
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// Local dimension estimates at sampled chart points.
    Dim {
        #[arg(long)]
        chart: KnotName,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Longitude identity at sampled chart points.
    Longitude {
        #[arg(long)]
        knot: KnotName,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// Meridian traces admitted by a Dehn filling slope `a/b`.
    Dehn {
        #[arg(long)]
        knot: KnotName,
        #[arg(long, allow_hyphen_values = true)]
        slope: Slope,
    },
    /// Closure roots of a tangle expression at a meridian trace.
    Tangle {
        #[arg(long)]
        spec: String,
        #[arg(long, default_value = "N")]
        closure: Closure,
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        t: Complex64,
        #[arg(long, default_value_t = 5.0)]
        radius: f64,
    },
}

fn parse_tol(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let v: f64 = v.parse().map_err(|_| format!("bad tolerance value in {s:?}"))?;
    if v.is_nan() || v <= 0.0 {
        return Err(format!("tolerance must be positive in {s:?}"));
    }
    Ok((k.trim().to_string(), v))
}

/// Failure modes mapped onto exit codes.
enum Fail {
    Usage(String),
    Io(std::io::Error),
}

impl From<std::io::Error> for Fail {
    fn from(e: std::io::Error) -> Self {
        Fail::Io(e)
    }
}

#[derive(Serialize)]
struct SampleRecord {
    chart: KnotName,
    seed: u64,
    params: serde_json::Map<String, serde_json::Value>,
    residuals: Vec<f64>,
    excluded_margin: f64,
}

#[derive(Serialize)]
struct DimRecord {
    params: Vec<Complex64>,
    #[serde(flatten)]
    report: DimensionReport,
}

#[derive(Serialize)]
struct LongitudeRecord {
    t: Complex64,
    wirtinger_residual: f64,
    longitude_abs: f64,
    longitude_rel: f64,
    passed: bool,
}

#[derive(Serialize)]
struct DehnRecord {
    kappa: Complex64,
    t: Complex64,
    residual: Option<f64>,
    passed: bool,
}

#[derive(Serialize)]
struct RootRecord {
    s: Complex64,
    defect: f64,
}

fn tol(config: &RunConfig, name: &str, fallback: f64) -> f64 {
    config.tolerances.get(name).copied().unwrap_or(fallback)
}

fn write<R: Serialize>(env: &Envelope<R>, config: &RunConfig) -> Result<(), Fail> {
    emit(&render(env, config.format)?, config.out.as_deref())?;
    Ok(())
}

fn verify(names: &[String], config: &mut RunConfig) -> Result<bool, Fail> {
    let suites = resolve_suites(names).map_err(|e| Fail::Usage(e.to_string()))?;
    for s in &suites {
        let t = tol(config, s, default_tolerance(s).expect("resolved suite"));
        config.tolerances.insert(s.to_string(), t);
    }
    let reports: Vec<SuiteReport> = suites
        .iter()
        .map(|s| run_suite(s, config.seed, config.tolerances.get(*s).copied()).expect("resolved suite"))
        .collect();
    for r in &reports {
        eprintln!(
            "{:<10} {} cases={} max_residual={:.3e} tol={:.0e}",
            r.suite,
            if r.passed { "PASS" } else { "FAIL" },
            r.cases,
            r.max_residual,
            r.tolerance
        );
    }
    let ok = reports.iter().all(|r| r.passed);
    write(&Envelope::new("verify", suites.join(","), config, reports), config)?;
    Ok(ok)
}

fn sample(chart: KnotName, count: usize, config: &RunConfig) -> Result<bool, Fail> {
    let names = chart_variables(chart);
    let records = sample_chart(chart, count, config.seed)
        .into_iter()
        .map(|p| SampleRecord {
            chart,
            seed: config.seed,
            params: names
                .iter()
                .zip(&p.params)
                .map(|(n, z)| (n.to_string(), serde_json::json!([z.re, z.im])))
                .collect(),
            residuals: p.residuals,
            excluded_margin: p.excluded_margin,
        })
        .collect();
    write(&Envelope::new("sample", chart.to_string(), config, records), config)?;
    Ok(true)
}

fn dim(chart: KnotName, count: usize, config: &mut RunConfig) -> Result<bool, Fail> {
    let rank_tol = tol(config, "rank", DEFAULT_RANK_TOL);
    config.tolerances.insert("rank".into(), rank_tol);
    let sys = chart_constraints(chart);
    let mut ok = true;
    let mut records = Vec::new();
    for p in sample_chart(chart, count, config.seed) {
        match estimate_local_dimension(&sys, &p.params, rank_tol) {
            Ok(report) => {
                ok &= report.dimension == 2;
                records.push(DimRecord {
                    params: p.params,
                    report,
                });
            }
            Err(e) => {
                eprintln!("point skipped: {e}");
                ok = false;
            }
        }
    }
    write(&Envelope::new("dim", chart.to_string(), config, records), config)?;
    Ok(ok)
}

fn longitude(knot: KnotName, count: usize, config: &mut RunConfig) -> Result<bool, Fail> {
    let (wt, lt) = (tol(config, "wirtinger", 1e-9), tol(config, "longitude", 1e-8));
    config.tolerances.insert("wirtinger".into(), wt);
    config.tolerances.insert("longitude".into(), lt);
    let d = &builtin(knot).0;
    let mut records = Vec::new();
    for p in sample_chart(knot, count, config.seed) {
        let rep = p.build().map_err(|e| Fail::Usage(e.to_string()))?;
        let w = validate_rep(d, &rep.rep);
        let (abs, rel) = longitude_gap(knot, &rep.rep);
        records.push(LongitudeRecord {
            t: p.t(),
            wirtinger_residual: w,
            longitude_abs: abs,
            longitude_rel: rel,
            passed: w <= wt && rel <= lt,
        });
    }
    let ok = records.iter().all(|r| r.passed);
    write(&Envelope::new("longitude", knot.to_string(), config, records), config)?;
    Ok(ok)
}

fn dehn(knot: KnotName, slope: Slope, config: &mut RunConfig) -> Result<bool, Fail> {
    let limit = tol(config, "dehn", 1e-8);
    config.tolerances.insert("dehn".into(), limit);
    let id = format!("{knot} {slope}");
    let (records, note) = match dehn_table(knot, slope) {
        Ok(rows) => (
            rows.into_iter()
                .map(|r| DehnRecord {
                    kappa: r.kappa,
                    t: r.t,
                    residual: r.residual,
                    passed: r.residual.is_some_and(|x| x <= limit),
                })
                .collect(),
            None,
        ),
        Err(KnotError::EmptySolutionSet(reason)) => (Vec::new(), Some(reason)),
        Err(e) => return Err(Fail::Usage(e.to_string())),
    };
    let ok = records.iter().all(|r: &DehnRecord| r.passed || r.residual.is_none());
    let mut env = Envelope::new("dehn", id, config, records);
    env.note = note;
    write(&env, config)?;
    Ok(ok)
}

fn tangle(spec: &str, closure: Closure, t: Complex64, radius: f64, config: &RunConfig) -> Result<bool, Fail> {
    let diagram = parse_tangle(spec)
        .and_then(|t| t.compile())
        .map_err(|e| Fail::Usage(e.to_string()))?;
    let roots =
        closure_roots_diagram(&diagram, closure, t, SearchBox { radius }).map_err(|e| Fail::Usage(e.to_string()))?;
    let records = roots
        .into_iter()
        .map(|r| RootRecord {
            s: r.s,
            defect: r.defect,
        })
        .collect();
    write(
        &Envelope::new("tangle", format!("{spec} {closure:?} t={t}"), config, records),
        config,
    )?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut config = RunConfig {
        seed: cli.common.seed,
        tolerances: cli.common.tol.into_iter().collect::<BTreeMap<_, _>>(),
        out: cli.common.out,
        format: cli.common.format,
    };
    let result = match &cli.command {
        Command::Verify { suites } => verify(suites, &mut config),
        Command::Sample { chart, count } => sample(*chart, *count, &config),
        Command::Dim { chart, count } => dim(*chart, *count, &mut config),
        Command::Longitude { knot, count } => longitude(*knot, *count, &mut config),
        Command::Dehn { knot, slope } => dehn(*knot, *slope, &mut config),
        Command::Tangle {
            spec,
            closure,
            t,
            radius,
        } => tangle(spec, *closure, *t, *radius, &config),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Fail::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Fail::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
