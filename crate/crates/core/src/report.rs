//! CSV and JSON output for constants tables and simulation reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{BetaRow, SimReport, SCHEMA_VERSION};
use crate::theory::TheoryConstants;

pub const CONSTANTS_HEADER: &str = "dist,beta,f0,x_star,h_star,T,alpha_star,c_non,c_adapt,ratio";
pub const SIM_HEADER: &str = "n,mu,trials_ok,failures,clip_rate,mse,mse_stderr,nmse_over_sigma2,mean_error,\
mean_error_stderr,sigma_mse,sigma_mse_stderr,theory_mse,theory_sigma_mse";
pub const AGGREGATE_HEADER: &str = "salt,n,worst_case_mse,worst_case_mu,average_mse,worst_nmse_over_sigma2,c_adapt,c_non";
pub const BETA_HEADER: &str = "beta,c_non,c_adapt,ratio,empirical_nmse,empirical_nmse_stderr";

const SIG_DIGITS: i32 = 10;

/// Ten significant digits, plain decimal for magnitudes in `[1e-4, 1e10)`
/// and scientific notation outside it.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs();
    if !(1e-4..1e10).contains(&mag) {
        return format!("{:.*e}", (SIG_DIGITS - 1) as usize, x);
    }
    let exponent = mag.log10().floor() as i32;
    let decimals = (SIG_DIGITS - 1 - exponent).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // Rounding can carry into a new leading digit (9.99... -> 10.0...).
    let rounded: f64 = s.parse().expect("formatted float parses");
    if rounded.abs().log10().floor() as i32 > exponent && decimals > 0 {
        format!("{x:.prec$}", prec = decimals - 1)
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn constants_csv_string(rows: &[TheoryConstants]) -> String {
    let mut out = String::new();
    out.push_str(CONSTANTS_HEADER);
    out.push('\n');
    for c in rows {
        let fields = [
            c.dist.name().to_string(),
            opt(c.dist.beta()),
            format_number(c.f0),
            format_number(c.x_star),
            format_number(c.h_star),
            format_number(c.t),
            format_number(c.alpha_star),
            format_number(c.c_non),
            format_number(c.c_adapt),
            format_number(c.ratio),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// One row per density, in the order given.
pub fn write_constants_csv(rows: &[TheoryConstants], path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &constants_csv_string(rows))
}

fn provenance_line(r: &SimReport) -> String {
    format!(
        "# schema={} code_version={} dist={} protocol={} master_seed={} config_hash={} salt={}\n",
        r.provenance.schema_version,
        r.provenance.code_version,
        r.config.dist,
        r.config.protocol.name(),
        r.provenance.master_seed,
        r.provenance.config_hash,
        r.provenance.salt
    )
}

/// Per-point table, preceded by a `#` line carrying seed and config hash.
pub fn sim_csv_string(r: &SimReport) -> String {
    let mut out = provenance_line(r);
    out.push_str(SIM_HEADER);
    out.push('\n');
    for p in &r.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            p.n,
            format_number(p.mu),
            p.trials_ok,
            p.failures,
            format_number(p.clip_rate),
            format_number(p.mse),
            opt(p.mse_stderr),
            format_number(p.normalized_mse(r.config.sigma)),
            format_number(p.mean_error),
            opt(p.mean_error_stderr),
            opt(p.sigma_mse),
            opt(p.sigma_mse_stderr),
            opt(p.theory_mse),
            opt(p.theory_sigma_mse),
        );
    }
    out
}

pub fn write_sim_csv(r: &SimReport, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &sim_csv_string(r))
}

/// Worst-case and average rows for one or more reports, e.g. a split sweep.
pub fn aggregates_csv_string(reports: &[SimReport]) -> String {
    let mut out = String::new();
    if let Some(first) = reports.first() {
        out.push_str(&provenance_line(first));
    }
    out.push_str(AGGREGATE_HEADER);
    out.push('\n');
    for r in reports {
        let s2 = r.config.sigma * r.config.sigma;
        for a in &r.aggregates {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.provenance.salt,
                a.n,
                format_number(a.worst_case_mse),
                format_number(a.worst_case_mu),
                format_number(a.average_mse),
                format_number(a.n as f64 * a.worst_case_mse / s2),
                format_number(r.benchmarks.c_adapt),
                opt(r.benchmarks.c_non),
            );
        }
    }
    out
}

pub fn beta_csv_string(rows: &[BetaRow]) -> String {
    let mut out = String::new();
    out.push_str(BETA_HEADER);
    out.push('\n');
    for b in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            format_number(b.beta),
            format_number(b.c_non),
            format_number(b.c_adapt),
            format_number(b.ratio),
            opt(b.empirical_nmse),
            opt(b.empirical_nmse_stderr),
        );
    }
    out
}

pub fn sim_json_string(r: &SimReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(r)?;
    s.push('\n');
    Ok(s)
}

pub fn write_sim_json(r: &SimReport, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &sim_json_string(r)?)
}

/// Parses a report, rejecting any other schema version before decoding fields.
pub fn parse_sim_json(text: &str) -> Result<SimReport> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let found = value
        .pointer("/provenance/schema_version")
        .and_then(|v| v.as_str())
        .unwrap_or("<missing>");
    if found != SCHEMA_VERSION {
        return Err(Error::Schema {
            expected: SCHEMA_VERSION.to_string(),
            found: found.to_string(),
        });
    }
    Ok(serde_json::from_value(value)?)
}

pub fn read_sim_json(path: impl AsRef<Path>) -> Result<SimReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_sim_json(&text)
}
