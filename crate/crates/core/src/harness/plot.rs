//! Summaries and a simple SVG chart of sweep CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::harness::sweep::{RowKind, SweepRow};

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub agent: String,
    pub kind: RowKind,
    pub level: f64,
    pub n: usize,
    pub mean: f64,
    /// Standard error of the mean over seeds (0 for a single seed).
    pub stderr: f64,
}

fn level_of(row: &SweepRow, axis_is_action: bool) -> f64 {
    if axis_is_action {
        row.sigma_action
    } else {
        row.sigma_init
    }
}

/// Mean and standard error of the success rate for every
/// `(agent, summary kind, level)`. The axis is whichever noise column varies.
pub fn summarize(rows: &[SweepRow]) -> (bool, Vec<CellSummary>) {
    let axis_is_action = rows
        .first()
        .is_some_and(|f| rows.iter().any(|r| r.sigma_action != f.sigma_action));
    let mut groups: BTreeMap<(String, u8, u64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        let kind = match r.kind {
            RowKind::FinalOffline => 0,
            RowKind::FinalOnline => 1,
            RowKind::Eval => continue,
        };
        let level = level_of(r, axis_is_action);
        groups
            .entry((r.agent.to_string(), kind, level.to_bits()))
            .or_default()
            .push(r.success_rate);
    }
    let mut out: Vec<CellSummary> = groups
        .into_iter()
        .map(|((agent, kind, bits), xs)| {
            let (mean, stderr) = mean_stderr(&xs);
            CellSummary {
                agent,
                kind: if kind == 0 {
                    RowKind::FinalOffline
                } else {
                    RowKind::FinalOnline
                },
                level: f64::from_bits(bits),
                n: xs.len(),
                mean,
                stderr,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        (a.agent.as_str(), a.kind as u8)
            .cmp(&(b.agent.as_str(), b.kind as u8))
            .then(a.level.total_cmp(&b.level))
    });
    (axis_is_action, out)
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn table(summaries: &[CellSummary], axis_is_action: bool) -> String {
    let axis = if axis_is_action { "sigma_action" } else { "sigma_init" };
    let mut s = format!(
        "{:<14} {:<13} {:>12} {:>6} {:>8} {:>8}\n",
        "agent", "phase", axis, "seeds", "success", "stderr"
    );
    for c in summaries {
        let phase = match c.kind {
            RowKind::FinalOffline => "offline",
            _ => "online",
        };
        let _ = writeln!(
            s,
            "{:<14} {:<13} {:>12.3} {:>6} {:>8.3} {:>8.3}",
            c.agent, phase, c.level, c.n, c.mean, c.stderr
        );
    }
    s
}

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Success rate against noise level, one line per agent and phase
/// (dashed = offline).
pub fn svg(summaries: &[CellSummary], axis_is_action: bool) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let max_level = summaries.iter().map(|c| c.level).fold(0.0_f64, f64::max).max(1e-9);
    let x = |l: f64| pad + (w - 2.0 * pad) * l / max_level;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * v;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#,
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#,
            pad - 6.0,
            y(v) + 4.0
        );
        let l = max_level * v;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{l:.3}</text>"#,
            x(l),
            h - pad + 16.0
        );
    }
    let axis = if axis_is_action { "sigma_action" } else { "sigma_init" };
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{axis}</text>"#,
        w / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">success rate</text>"#,
        h / 2.0,
        h / 2.0
    );

    let mut series: BTreeMap<(String, u8), Vec<&CellSummary>> = BTreeMap::new();
    for c in summaries {
        series.entry((c.agent.clone(), c.kind as u8)).or_default().push(c);
    }
    let agents: Vec<String> = {
        let mut a: Vec<String> = summaries.iter().map(|c| c.agent.clone()).collect();
        a.dedup();
        a
    };
    for (i, ((agent, kind), pts)) in series.iter().enumerate() {
        let color = COLORS[agents.iter().position(|a| a == agent).unwrap_or(i) % COLORS.len()];
        let dash = if *kind == RowKind::FinalOffline as u8 {
            r#" stroke-dasharray="5,4""#
        } else {
            ""
        };
        let path: Vec<String> = pts
            .iter()
            .map(|c| format!("{:.1},{:.1}", x(c.level), y(c.mean)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{}"/>"#,
            path.join(" ")
        );
        for c in pts {
            let _ = writeln!(
                s,
                r#"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="{color}"/>"#,
                x(c.level),
                y((c.mean - c.stderr).max(0.0)),
                y((c.mean + c.stderr).min(1.0))
            );
        }
        let phase = if *kind == RowKind::FinalOffline as u8 {
            "offline"
        } else {
            "online"
        };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{agent} ({phase})</text>"#,
            w - pad - 140.0,
            pad + 14.0 * i as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::AgentKind;

    fn row(agent: AgentKind, kind: RowKind, sigma: f64, seed: u64, success: f64) -> SweepRow {
        SweepRow {
            agent,
            env: "point_reach".into(),
            sigma_init: sigma,
            sigma_action: 0.0,
            kind,
            seed,
            env_step: 0,
            success_rate: success,
            mean_return: 0.0,
            wall_clock: 0.0,
            mixture_ratio: 0.0,
        }
    }

    #[test]
    fn groups_summary_rows_only() {
        let rows = vec![
            row(AgentKind::Ebc, RowKind::Eval, 0.02, 0, 0.0),
            row(AgentKind::Ebc, RowKind::FinalOffline, 0.02, 0, 0.5),
            row(AgentKind::Ebc, RowKind::FinalOffline, 0.02, 1, 1.0),
            row(AgentKind::Ebc, RowKind::FinalOffline, 0.4, 0, 0.25),
        ];
        let (is_action, cells) = summarize(&rows);
        assert!(!is_action);
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].n, 2);
        assert_eq!(cells[0].mean, 0.75);
        assert!((cells[0].stderr - 0.25).abs() < 1e-12);
        assert_eq!(cells[1].level, 0.4);
        let svg = svg(&cells, is_action);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(table(&cells, is_action).contains("ebc"));
    }
}
