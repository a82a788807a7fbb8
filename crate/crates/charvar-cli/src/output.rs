//! Report envelopes and file writing.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Settings echoed into every output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub format: Format,
}

#[derive(Debug, Serialize)]
pub struct Envelope<'a, R: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub id: String,
    pub seed: u64,
    pub tolerances: &'a BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub records: Vec<R>,
}

impl<'a, R: Serialize> Envelope<'a, R> {
    pub fn new(command: &'static str, id: String, config: &'a RunConfig, records: Vec<R>) -> Self {
        Envelope {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            id,
            seed: config.seed,
            tolerances: &config.tolerances,
            note: None,
            records,
        }
    }
}

/// Render as JSON, or as CSV with `#` header lines and complex values split
/// into `_re`/`_im` columns.
pub fn render<R: Serialize>(env: &Envelope<R>, format: Format) -> io::Result<Vec<u8>> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_vec_pretty(env).map_err(io::Error::other)?;
            s.push(b'\n');
            Ok(s)
        }
        Format::Csv => render_csv(env),
    }
}

fn render_csv<R: Serialize>(env: &Envelope<R>) -> io::Result<Vec<u8>> {
    let mut out = Vec::new();
    writeln!(out, "# tool: {} {}", env.tool, env.version)?;
    writeln!(out, "# command: {} {}", env.command, env.id)?;
    writeln!(out, "# seed: {}", env.seed)?;
    for (k, v) in env.tolerances {
        writeln!(out, "# tolerance {k}: {v:e}")?;
    }
    if let Some(n) = &env.note {
        writeln!(out, "# note: {n}")?;
    }
    let rows: Vec<Vec<(String, String)>> = env
        .records
        .iter()
        .map(|r| {
            let mut cells = Vec::new();
            flatten("", &serde_json::to_value(r).unwrap_or(Value::Null), &mut cells);
            cells
        })
        .collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = rows.first() {
        w.write_record(first.iter().map(|c| c.0.as_str()))?;
        for row in &rows {
            w.write_record(row.iter().map(|c| c.1.as_str()))?;
        }
    }
    out.extend(w.into_inner().map_err(|e| io::Error::other(e.to_string()))?);
    Ok(out)
}

fn is_complex(v: &[Value]) -> bool {
    v.len() == 2 && v.iter().all(Value::is_number)
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}_{key}")
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(&join(prefix, k), x, out);
            }
        }
        Value::Array(a) if is_complex(a) => {
            out.push((join(prefix, "re"), a[0].to_string()));
            out.push((join(prefix, "im"), a[1].to_string()));
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&join(prefix, &i.to_string()), x, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Write to `path` through a temporary sibling and a rename, or to stdout.
pub fn emit(bytes: &[u8], path: Option<&Path>) -> io::Result<()> {
    let Some(path) = path else {
        return io::stdout().write_all(bytes);
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Parse `2.5`, `-1.2+0.4i`, `0.3i` or `re,im`.
pub fn parse_complex(s: &str) -> Result<Complex64, String> {
    let s = s.trim().replace(' ', "");
    let bad = || format!("cannot read {s:?} as a complex number");
    if let Some((re, im)) = s.split_once(',') {
        return Ok(Complex64::new(
            re.parse().map_err(|_| bad())?,
            im.parse().map_err(|_| bad())?,
        ));
    }
    let Some(body) = s.strip_suffix(['i', 'j']) else {
        return Ok(Complex64::new(s.parse().map_err(|_| bad())?, 0.0));
    };
    // split at the last sign that is not part of an exponent
    let bytes = body.as_bytes();
    let cut = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match cut {
        Some(k) => (&body[..k], &body[k..]),
        None => ("0", body),
    };
    let im = match im {
        "" | "+" => "1",
        "-" => "-1",
        x => x,
    };
    Ok(Complex64::new(
        re.parse().map_err(|_| bad())?,
        im.parse().map_err(|_| bad())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_forms() {
        assert_eq!(parse_complex("2.5").unwrap(), Complex64::new(2.5, 0.0));
        assert_eq!(parse_complex("-1.2+0.4i").unwrap(), Complex64::new(-1.2, 0.4));
        assert_eq!(parse_complex("0.3i").unwrap(), Complex64::new(0.0, 0.3));
        assert_eq!(parse_complex("1e-3-2e+1i").unwrap(), Complex64::new(1e-3, -20.0));
        assert_eq!(parse_complex("1,-2").unwrap(), Complex64::new(1.0, -2.0));
        assert_eq!(parse_complex("-i").unwrap(), Complex64::new(0.0, -1.0));
        assert!(parse_complex("abc").is_err());
    }

    #[test]
    fn csv_splits_complex_values() {
        #[derive(Serialize)]
        struct Row {
            z: Complex64,
            tag: &'static str,
        }
        let cfg = RunConfig {
            seed: 3,
            tolerances: BTreeMap::new(),
            out: None,
            format: Format::Csv,
        };
        let env = Envelope::new(
            "sample",
            "P334".into(),
            &cfg,
            vec![Row {
                z: Complex64::new(1.0, -2.0),
                tag: "a",
            }],
        );
        let text = String::from_utf8(render(&env, Format::Csv).unwrap()).unwrap();
        assert!(text.contains("# seed: 3"));
        assert!(text.contains("z_re,z_im,tag\n1.0,-2.0,a\n"), "{text}");
    }
}
