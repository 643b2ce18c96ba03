//! Markdown summary of JSON artifacts.

use serde_json::Value;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, CliResult};

fn field(v: &Value, key: &str) -> String {
    match v.get(key) {
        Some(Value::Number(n)) => match n.as_f64() {
            Some(x) if x.fract() != 0.0 || x.abs() >= 1e6 => format!("{x:.6e}"),
            _ => n.to_string(),
        },
        Some(Value::String(s)) => s.clone(),
        Some(Value::Bool(b)) => b.to_string(),
        Some(Value::Null) | None => "-".into(),
        Some(other) => other.to_string(),
    }
}

fn section(out: &mut String, path: &Path, v: &Value) {
    let kind = field(v, "kind");
    let _ = writeln!(out, "## {} ({kind})\n", path.display());
    let _ = writeln!(out, "config `{}`\n", field(v, "config_hash"));
    let keys: &[&str] = match kind.as_str() {
        "spectrum" => &[
            "count",
            "alpha",
            "trace_min",
            "trace_max",
            "growth_exponent",
        ],
        "responses" => &[
            "horizon",
            "step",
            "modes",
            "max_route_gap",
            "residual_slope",
        ],
        "gram" => &["label", "horizon", "N", "m_N", "M_N", "condition"],
        "synthesis" => &["status", "family", "horizon", "m_N", "condition"],
        "verdict" => &[
            "target_error",
            "tail_energy",
            "route_gap",
            "route_tolerance",
            "passed",
        ],
        "sweep" => &["step"],
        _ => &[],
    };
    let _ = writeln!(out, "| field | value |\n|---|---|");
    for k in keys {
        let _ = writeln!(out, "| {k} | {} |", field(v, k));
    }
    if let Some(r) = v.get("report") {
        for k in ["k", "condition", "m_n", "max_residual", "norm", "max_imag"] {
            let _ = writeln!(out, "| {k} | {} |", field(r, k));
        }
    }
    if let Some(Value::Array(cs)) = v.get("crossings") {
        for c in cs {
            let _ = writeln!(
                out,
                "| crossing {} | telegraph {} / viscoelastic {} (within step: {}) |",
                field(c, "threshold"),
                field(c, "telegraph"),
                field(c, "viscoelastic"),
                field(c, "within_step")
            );
        }
    }
    out.push('\n');
}

/// Renders the JSON artifacts at `paths` as one markdown document.
pub fn render(paths: &[impl AsRef<Path>]) -> CliResult<String> {
    let mut out = String::from("# viscoctl report\n\n");
    for p in paths {
        let p = p.as_ref();
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::MissingArtifact(format!("{}: {e}", p.display())))?;
        let v: Value = serde_json::from_str(&text)?;
        section(&mut out, p, &v);
    }
    Ok(out)
}
