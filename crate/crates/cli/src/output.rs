//! Output formatting. JSON numbers use the shortest representation that parses
//! back to the same `f64`; CSV numbers are written with 17 significant digits.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use specstab::experiments::{FrequencyTable, SweepPoint};
use specstab::SdaReport;

use crate::Failure;

pub fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

pub fn json<T: Serialize + ?Sized>(v: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Failure::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes to `path`, or to stdout when `None`.
pub fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Argument(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

#[derive(Serialize)]
pub struct SdaSummary {
    k: usize,
    epsilon_star: f64,
    scaled_gap: f64,
    certificate_residual: f64,
    feasible: bool,
    converged: bool,
}

impl From<&SdaReport> for SdaSummary {
    fn from(r: &SdaReport) -> Self {
        Self {
            k: r.k,
            epsilon_star: r.epsilon_star,
            scaled_gap: r.gap.scaled_gap,
            certificate_residual: r.certificate_residual,
            feasible: r.feasible,
            converged: r.converged,
        }
    }
}

const SDA_HEADER: &str = "k,epsilon_star,gap,scaled_gap,certificate_residual,terminal_gap,eps_lb,eps_ub,c_used,feasible,converged";

pub fn sda_summary_csv(r: &SdaReport) -> String {
    format!(
        "{SDA_HEADER}\n{},{},{},{},{},{},{},{},{},{},{}\n",
        r.k,
        fmt_f(r.epsilon_star),
        fmt_f(r.gap.gap),
        fmt_f(r.gap.scaled_gap),
        fmt_f(r.certificate_residual),
        fmt_f(r.terminal_gap),
        fmt_f(r.bracket[0]),
        fmt_f(r.bracket[1]),
        fmt_f(r.c_used),
        r.feasible,
        r.converged
    )
}

/// Summary row, then the edges of `W*` and `E*`, then the trace if present,
/// each block with its own header and separated by a blank line.
pub fn sda_csv(r: &SdaReport) -> String {
    let mut s = sda_summary_csv(r);
    s.push_str("\ni,j,w_star,e_star\n");
    for ((i, j, w), (_, _, e)) in r.w_star.iter().zip(&r.e_star) {
        s.push_str(&format!("{i},{j},{},{}\n", fmt_f(*w), fmt_f(*e)));
    }
    if let Some(trace) = &r.trace {
        s.push_str("\nc,eps,f,fprime,kappa,inner_steps,inner_status,eps_lb,eps_ub,action\n");
        for t in trace {
            let status = serde_json::to_value(t.inner_status).expect("status serializes");
            let action = serde_json::to_value(t.action).expect("action serializes");
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                fmt_f(t.c),
                fmt_f(t.eps),
                fmt_f(t.f),
                fmt_f(t.fprime),
                fmt_f(t.kappa),
                t.inner_steps,
                status.as_str().unwrap_or_default(),
                fmt_f(t.eps_lb),
                fmt_f(t.eps_ub),
                action.as_str().unwrap_or_default()
            ));
        }
    }
    s
}

/// `param,delta_{k_min}..,g_{k_min}..,k_opt_delta,k_opt_g`; a failed `δ_k` is left empty.
pub fn sweep_csv(points: &[SweepPoint], k_min: usize, k_max: usize, chain: bool) -> String {
    let mut head = vec![if chain { "mu1".to_string() } else { "p1".to_string() }];
    head.extend((k_min..=k_max).map(|k| format!("delta_{k}")));
    head.extend((k_min..=k_max).map(|k| format!("g_{k}")));
    head.push("k_opt_delta".into());
    head.push("k_opt_g".into());
    let mut s = head.join(",") + "\n";
    for p in points {
        let mut row = vec![fmt_f(p.param)];
        row.extend(p.table.rows.iter().map(|r| fmt_opt(r.delta)));
        row.extend(p.table.rows.iter().map(|r| fmt_f(r.gap)));
        row.push(p.table.k_opt_delta.map(|k| k.to_string()).unwrap_or_default());
        row.push(p.table.k_opt_gap.map(|k| k.to_string()).unwrap_or_default());
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn freq_csv(t: &FrequencyTable) -> String {
    let mut s = String::from("k,gap_percent,delta_percent\n");
    for (i, k) in t.k_values.iter().enumerate() {
        s.push_str(&format!("{k},{},{}\n", fmt_f(t.gap_percent[i]), fmt_f(t.delta_percent[i])));
    }
    s
}
