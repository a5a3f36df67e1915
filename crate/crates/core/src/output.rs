//! CSV serialization of run artifacts.
//!
//! Numbers use Rust's shortest round-trip formatting, so identical values
//! always produce identical bytes. Missing values are empty fields. Every
//! table may start with `#`-prefixed preamble lines.

use std::fmt::Write as _;

use crate::brownian::BrownianPath;
use crate::ensemble::{EnsembleRow, SweepRow, TailRow};
use crate::model::RadialGrid;
use crate::solver::{Profile, Trajectory};

pub const TRAJECTORY_COLUMNS: [&str; 11] = [
    "t", "xi", "xi_hat", "B", "Bstar", "v0", "vmax", "mean_vr", "mean_vbeta", "K", "dt",
];
pub const SNAPSHOT_COLUMNS: [&str; 3] = ["t", "z", "v"];
pub const PATH_COLUMNS: [&str; 3] = ["t", "B", "Bstar"];
pub const ENSEMBLE_COLUMNS: [&str; 29] = [
    "id",
    "seed",
    "gamma",
    "blew_up",
    "trigger",
    "t_lo",
    "t_b",
    "stop_time",
    "t_lambda",
    "case",
    "theta",
    "bstar_theta",
    "k_theta",
    "gamma_margin",
    "bound",
    "cap",
    "verdict",
    "steps",
    "min_xi_hat_increment",
    "lemma21_worst",
    "c0",
    "eps_star",
    "lemma43_violation",
    "lemma44_ratio",
    "t_hat_lambda",
    "t_hat_bound",
    "t_hat_r",
    "c0_clipped",
    "error",
];
pub const SWEEP_COLUMNS: [&str; 8] = [
    "gamma",
    "paths",
    "blew_up",
    "median_t_b",
    "median_bound",
    "fixed_k_bound",
    "lemma21_worst",
    "min_xi_hat_increment",
];
pub const TAIL_COLUMNS: [&str; 9] = [
    "t", "A", "paths", "hits", "frequency", "ci_low", "ci_high", "bound", "pass",
];

/// Formats a float; non-finite values become `inf`, `-inf` or `nan`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Quotes a text field when it contains a separator, quote or newline.
fn text(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn label<T: serde::Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

struct Table {
    buf: String,
}

impl Table {
    fn new(preamble: &str, columns: &[&str]) -> Self {
        let mut buf = String::new();
        for line in preamble.lines() {
            buf.push_str("# ");
            buf.push_str(line);
            buf.push('\n');
        }
        buf.push_str(&columns.join(","));
        buf.push('\n');
        Table { buf }
    }

    fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.buf, "{}", fields.join(","));
    }
}

/// Each line of `preamble` becomes a `# ` comment line above the header.
pub fn trajectory_csv(preamble: &str, traj: &Trajectory) -> String {
    let mut t = Table::new(preamble, &TRAJECTORY_COLUMNS);
    for s in &traj.samples {
        t.row(&[
            num(s.t),
            num(s.xi),
            num(s.xi_hat),
            num(s.b),
            num(s.bstar),
            num(s.v0),
            num(s.vmax),
            num(s.mean_vr),
            num(s.mean_vbeta),
            num(s.k),
            num(s.dt),
        ]);
    }
    t.buf
}

pub fn snapshot_csv(preamble: &str, profiles: &[Profile], grid: &RadialGrid) -> String {
    let mut t = Table::new(preamble, &SNAPSHOT_COLUMNS);
    for p in profiles {
        for (z, v) in grid.z.iter().zip(&p.v) {
            t.row(&[num(p.t), num(*z), num(*v)]);
        }
    }
    t.buf
}

pub fn path_csv(preamble: &str, path: &BrownianPath) -> String {
    let mut t = Table::new(preamble, &PATH_COLUMNS);
    for (time, b, bstar) in path.rows() {
        t.row(&[num(time), num(b), num(bstar)]);
    }
    t.buf
}

pub fn ensemble_csv(preamble: &str, rows: &[EnsembleRow]) -> String {
    let mut t = Table::new(preamble, &ENSEMBLE_COLUMNS);
    for r in rows {
        let s = r.stopping.as_ref();
        t.row(&[
            r.id.to_string(),
            r.seed.to_string(),
            num(r.gamma),
            r.blew_up.to_string(),
            label(&r.trigger),
            opt(r.t_lo),
            opt(r.t_b),
            num(r.stop_time),
            opt(r.t_lambda),
            r.case.as_ref().map(label).unwrap_or_default(),
            opt(r.theta),
            opt(r.bstar_theta),
            opt(r.k_theta),
            opt(r.gamma_margin),
            opt(r.bound),
            opt(r.cap),
            label(&r.verdict),
            r.steps.to_string(),
            num(r.min_xi_hat_increment),
            num(r.lemma21_worst),
            opt(s.map(|s| s.c0)),
            opt(s.map(|s| s.eps_star)),
            opt(s.map(|s| s.lemma43_violation)),
            opt(s.map(|s| s.lemma44_ratio)),
            opt(s.map(|s| s.t_hat_lambda)),
            opt(s.map(|s| s.t_hat_bound)),
            opt(s.and_then(|s| s.t_hat_r)),
            s.map(|s| s.c0_clipped.to_string()).unwrap_or_default(),
            text(r.error.as_deref().unwrap_or("")),
        ]);
    }
    t.buf
}

pub fn sweep_csv(preamble: &str, rows: &[SweepRow]) -> String {
    let mut t = Table::new(preamble, &SWEEP_COLUMNS);
    for r in rows {
        t.row(&[
            num(r.gamma),
            r.paths.to_string(),
            r.blew_up.to_string(),
            opt(r.median_t_b),
            opt(r.median_bound),
            num(r.fixed_k_bound),
            num(r.lemma21_worst),
            num(r.min_xi_hat_increment),
        ]);
    }
    t.buf
}

pub fn tail_csv(preamble: &str, rows: &[TailRow]) -> String {
    let mut t = Table::new(preamble, &TAIL_COLUMNS);
    for r in rows {
        t.row(&[
            num(r.t),
            num(r.a),
            r.paths.to_string(),
            r.hits.to_string(),
            num(r.frequency),
            num(r.ci_low),
            num(r.ci_high),
            num(r.bound),
            r.pass.to_string(),
        ]);
    }
    t.buf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1e-300, 123456.789, -2.5e17, 0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(opt(None), "");
    }

    #[test]
    fn preamble_lines_are_commented() {
        let csv = sweep_csv("config_hash: abc\nx = 1", &[]);
        assert_eq!(csv, "# config_hash: abc\n# x = 1\ngamma,paths,blew_up,median_t_b,median_bound,fixed_k_bound,lemma21_worst,min_xi_hat_increment\n");
    }

    #[test]
    fn text_fields_are_quoted() {
        assert_eq!(text("plain"), "plain");
        assert_eq!(text("a, \"b\""), "\"a, \"\"b\"\"\"");
    }
}
