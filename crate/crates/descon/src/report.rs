//! Report rendering: a human-readable text form and a flat `key=value`
//! form that survives a parse/serialize round trip byte for byte. Files are
//! written atomically (temp file in the target directory, then rename).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::run::{Command, RunReport};

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn command_name(c: Command) -> &'static str {
    match c {
        Command::Verify => "verify",
        Command::Simulate => "simulate",
        Command::Full => "full",
    }
}

fn push_matrix(out: &mut String, name: &str, m: &nalgebra::DMatrix<f64>) {
    out.push_str(name);
    out.push_str(":\n");
    for i in 0..m.nrows() {
        out.push(' ');
        for j in 0..m.ncols() {
            out.push_str(&format!(" {:.7}", m[(i, j)]));
        }
        out.push('\n');
    }
}

/// Render the text report. Condition lines use the fixed shape
/// `<id>  <PASS|FAIL>  margin=<value>` so the first FAIL line names the
/// first failing condition.
pub fn format_text(r: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("command: {}\n", command_name(r.command)));
    out.push_str(&format!(
        "lambda bounds: [{:.6}, {:.6}]\n",
        r.bounds.lambda_min, r.bounds.lambda_max
    ));
    out.push_str(&format!("decomposition residual: {:.3e}\n", r.block_residual));
    push_matrix(&mut out, "K_u", &r.gains.k_u);
    push_matrix(&mut out, "K_z", &r.gains.k_z);

    if let Some(conds) = &r.conditions {
        out.push_str("conditions:\n");
        for c in &conds.conditions {
            out.push_str(&format!(
                "{}  {}  margin={:.6e}",
                c.id,
                verdict(c.pass),
                c.margin
            ));
            if let Some(n) = &c.note {
                out.push_str(&format!("  ({n})"));
            }
            out.push('\n');
        }
        if r.shrink_attempted {
            match r.feasible_lambda_sup {
                Some(sup) => out.push_str(&format!(
                    "feasible eigenvalue range: (0, {sup:.6}] (block matrix fails at lambda_max)\n"
                )),
                None => out.push_str(
                    "feasible eigenvalue range: empty (block matrix fails at lambda_min)\n",
                ),
            }
        }
    }

    if !r.pair_checks.is_empty() {
        out.push_str("pair checks:\n");
        for (label, p) in &r.pair_checks {
            out.push_str(&format!(
                "{label}  {}  rank {}/{}\n",
                verdict(p.regular && p.impulse_free),
                p.lemma1_rank,
                p.lemma1_target
            ));
        }
    }

    if let Some(s) = &r.sim {
        out.push_str("simulation:\n");
        out.push_str(&format!(
            "  dt={} horizon={} hbar={}",
            s.dt, s.horizon, s.hbar
        ));
        if let Some(seed) = s.seed {
            out.push_str(&format!(" seed={seed}"));
        }
        out.push('\n');
        out.push_str(&format!("  initial disagreement: {:.6e}\n", s.initial_disagreement));
        out.push_str(&format!("  terminal disagreement: {:.6e}\n", s.terminal_disagreement));
        out.push_str(&format!(
            "  J_e(hbar)={:.6e}  budget={:.6e}\n",
            s.j_e_hbar, s.j_e_star
        ));
        out.push_str(&format!("budget  {}  margin={:.6e}\n", verdict(s.budget_pass), s.j_e_star - s.j_e_hbar));
        if let Some(p) = &s.csv_path {
            out.push_str(&format!("  trajectory: {}\n", p.display()));
        }
    }

    out.push_str(&format!("overall: {}\n", verdict(r.overall)));
    out
}

/// Render the flat `key=value` report, one pair per line, stable order.
pub fn format_kv(r: &RunReport) -> String {
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut kv = |k: &str, v: String| pairs.push((k.to_string(), v));

    kv("command", command_name(r.command).to_string());
    kv("lambda_min", format!("{}", r.bounds.lambda_min));
    kv("lambda_max", format!("{}", r.bounds.lambda_max));
    kv("block_residual", format!("{}", r.block_residual));
    for (name, m) in [("k_u", &r.gains.k_u), ("k_z", &r.gains.k_z)] {
        kv(&format!("{name}_rows"), format!("{}", m.nrows()));
        kv(&format!("{name}_cols"), format!("{}", m.ncols()));
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                kv(&format!("{name}_{}_{}", i + 1, j + 1), format!("{}", m[(i, j)]));
            }
        }
    }

    if let Some(conds) = &r.conditions {
        for c in &conds.conditions {
            kv(&format!("condition_{}_pass", c.id), format!("{}", c.pass));
            kv(&format!("condition_{}_margin", c.id), format!("{}", c.margin));
        }
        kv("conditions_pass", format!("{}", conds.overall));
        kv("shrink_attempted", format!("{}", r.shrink_attempted));
        if r.shrink_attempted {
            kv(
                "feasible_lambda_sup",
                match r.feasible_lambda_sup {
                    Some(s) => format!("{s}"),
                    None => "none".to_string(),
                },
            );
        }
    }

    for (i, (label, p)) in r.pair_checks.iter().enumerate() {
        let tag = format!("pair_{}", i + 1);
        kv(&format!("{tag}_label"), label.clone());
        kv(
            &format!("{tag}_pass"),
            format!("{}", p.regular && p.impulse_free),
        );
        kv(&format!("{tag}_rank"), format!("{}", p.lemma1_rank));
        kv(&format!("{tag}_target"), format!("{}", p.lemma1_target));
    }

    if let Some(s) = &r.sim {
        kv("sim_dt", format!("{}", s.dt));
        kv("sim_horizon", format!("{}", s.horizon));
        kv("sim_hbar", format!("{}", s.hbar));
        if let Some(seed) = s.seed {
            kv("sim_seed", format!("{seed}"));
        }
        kv("initial_disagreement", format!("{}", s.initial_disagreement));
        kv("terminal_disagreement", format!("{}", s.terminal_disagreement));
        kv("j_e_hbar", format!("{}", s.j_e_hbar));
        kv("j_e_star", format!("{}", s.j_e_star));
        kv("budget_pass", format!("{}", s.budget_pass));
        if let Some(p) = &s.csv_path {
            kv("csv_path", p.display().to_string());
        }
    }

    kv("overall", format!("{}", r.overall));
    serialize_kv(&pairs)
}

/// Join pairs back into the `key=value` text form.
pub fn serialize_kv(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    out
}

/// Parse a `key=value` document, preserving order. Values may contain `=`;
/// the split is on the first one.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::invalid_input(format!("line {}: expected key=value, got {line:?}", ln + 1))
        })?;
        pairs.push((k.to_string(), v.to_string()));
    }
    Ok(pairs)
}

/// Write bytes to `path` via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "report".to_string())
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Write `report.txt` and `report.kv` under `out_dir`.
pub fn write_reports(r: &RunReport, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let txt = out_dir.join("report.txt");
    let kvp = out_dir.join("report.kv");
    write_atomic(&txt, format_text(r).as_bytes())?;
    write_atomic(&kvp, format_kv(r).as_bytes())?;
    Ok((txt, kvp))
}
