//! JSON is the canonical form; tables are for reading.

use std::fmt::Write;

use hqc_core::HPoint;

use crate::error::CliError;
use crate::run::{Report, Results};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Table,
}

pub fn render(report: &Report, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => to_json(report),
        Format::Table => Ok(to_table(report)),
    }
}

pub fn to_json(report: &Report) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| CliError::Serialize(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn pt(p: &HPoint) -> String {
    let c: Vec<String> = p.coords().iter().map(|v| format!("{v:.4}")).collect();
    format!("({})", c.join(", "))
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| format!("{x:.4}"))
}

struct Table {
    head: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(head: &[&str]) -> Self {
        Self {
            head: head.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    fn write(&self, out: &mut String) {
        let mut w: Vec<usize> = self.head.iter().map(|h| h.len()).collect();
        for r in &self.rows {
            for (i, c) in r.iter().enumerate() {
                w[i] = w[i].max(c.len());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| format!("{c:>width$}", width = w[i]))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let _ = writeln!(out, "{}", line(&self.head));
        let _ = writeln!(out, "{}", w.iter().map(|k| "-".repeat(*k)).collect::<Vec<_>>().join("  "));
        for r in &self.rows {
            let _ = writeln!(out, "{}", line(r));
        }
    }
}

pub fn to_table(report: &Report) -> String {
    let mut out = String::new();
    let cfg = &report.config;
    let _ = writeln!(out, "{}  kind={}  n={}  seed={}", report.version, cfg.kind.name(), cfg.n, cfg.seed);
    let _ = writeln!(out);
    match &report.results {
        Results::Distortion(p) => {
            let mut t = Table::new(&["point", "r", "K (lower)", "sup", "inf"]);
            for prof in &p.profiles {
                for row in &prof.rows {
                    t.row(vec![
                        pt(&prof.point),
                        format!("{:.6}", row.radius),
                        format!("{:.6}", row.k),
                        format!("{:.6e}", row.sup),
                        format!("{:.6e}", row.inf),
                    ]);
                }
            }
            t.write(&mut out);
            let _ = writeln!(out, "\nplateau {:.6}, threshold {}", p.plateau, p.threshold);
        }
        Results::Bmo(b) => {
            let mut t = Table::new(&["radius", "max oscillation"]);
            for (r, v) in &b.per_radius {
                t.row(vec![format!("{r:.6}"), format!("{v:.6}")]);
            }
            t.write(&mut out);
            let _ = writeln!(
                out,
                "\nnorm (lower) {:.6} +- {:.2e}, refined {:.6}, {} balls x {} samples",
                b.value, b.argmax_std_error, b.refined, b.balls, b.samples_per_ball
            );
        }
        Results::JnTail { norm, fits } => {
            let _ = writeln!(out, "BMO norm (lower) {:.6}\n", norm.value);
            let mut t = Table::new(&["ball", "A", "envelope A", "C", "R^2", "points", "pass"]);
            for (i, f) in fits.iter().enumerate() {
                t.row(vec![
                    i.to_string(),
                    opt(f.a_hat),
                    opt(f.envelope_a),
                    format!("{:.4}", f.prefactor),
                    format!("{:.4}", f.r_squared),
                    f.fitted_points.to_string(),
                    f.pass.to_string(),
                ]);
            }
            t.write(&mut out);
        }
        Results::Transfer(rows) => {
            let mut t = Table::new(&["map", "function", "source", "image", "ratio"]);
            for r in rows {
                t.row(vec![
                    r.map.clone(),
                    r.field.clone(),
                    format!("{:.6}", r.source.value),
                    format!("{:.6}", r.image.value),
                    opt(r.ratio),
                ]);
            }
            t.write(&mut out);
        }
        Results::Gotoh(g) => {
            let mut t = Table::new(&["pair", "left", "right", "K at alpha=1", "satisfied"]);
            for r in &g.reports {
                t.row(vec![
                    r.pair.to_string(),
                    format!("{:.6e}", r.left.value),
                    format!("{:.6e}", r.right.value),
                    r.required.first().map_or("-".into(), |q| opt(q.k)),
                    r.satisfied.map_or("UNSAT".into(), |(k, a)| format!("K={k} a={a}")),
                ]);
            }
            t.write(&mut out);
        }
        Results::GotohLadder(l) => {
            let mut t = Table::new(&["r", "direction", "best K"]);
            for row in &l.rows {
                t.row(vec![
                    format!("{:.6}", row.r),
                    pt(&row.direction),
                    row.best_k.map_or("UNSAT".into(), |k| format!("{k}")),
                ]);
            }
            t.write(&mut out);
            let _ = writeln!(out, "\ngrows: {}", l.grows);
        }
        Results::Necessity(rows) => {
            let mut t = Table::new(&["r", "lambda_max", "min pair", "13/16 r lambda", "dist", "3/4 r lambda", "diam", "roundness"]);
            for r in rows {
                t.row(vec![
                    format!("{}", r.r),
                    format!("{:.6}", r.lambda_max.value),
                    format!("{:.6}", r.pairwise.min_distance),
                    format!("{:.6}", r.pairwise.bound),
                    format!("{:.6}", r.distance.value),
                    format!("{:.6}", r.distance_bound),
                    format!("{:.6}", r.diameter.value),
                    format!("{:.6}", r.roundness.ratio),
                ]);
            }
            t.write(&mut out);
        }
        Results::Roundness(l) => {
            let mut t = Table::new(&["r", "volume", "diameter (lower)", "ratio (upper)", "+-", "running min"]);
            for ((r, row), m) in l.radii.iter().zip(&l.rows).zip(&l.running_min) {
                t.row(vec![
                    format!("{r}"),
                    format!("{:.6}", row.volume),
                    format!("{:.6}", row.diameter.value),
                    format!("{:.6}", row.ratio),
                    format!("{:.1e}", row.std_error),
                    format!("{m:.6}"),
                ]);
            }
            t.write(&mut out);
            let _ = writeln!(out, "\nidentity reference {:.6}, threshold {:.6}", l.reference, l.threshold);
        }
        Results::Pansu(rows) => {
            for e in rows {
                let _ = writeln!(out, "point {}  mu {:.6}", pt(&e.point), e.differential.mu());
                let mut t = Table::new(&["scale", "residual", "noise floor"]);
                for r in &e.rows {
                    t.row(vec![
                        format!("{:.3e}", r.scale),
                        format!("{:.6e}", r.residual),
                        format!("{:.1e}", r.noise_floor),
                    ]);
                }
                t.write(&mut out);
                let _ = writeln!(out);
            }
        }
        Results::Ccdist { ladder, comparison } => {
            if !ladder.is_empty() {
                let mut t = Table::new(&["segments", "d_cc (upper)", "|dz|", "residual", "converged"]);
                for e in ladder {
                    t.row(vec![
                        e.segments.to_string(),
                        format!("{:.6}", e.distance),
                        format!("{:.6}", e.horizontal_bound),
                        format!("{:.1e}", e.constraint_residual),
                        e.converged.to_string(),
                    ]);
                }
                t.write(&mut out);
            }
            if let Some(c) = comparison {
                let _ = writeln!(
                    out,
                    "d_cc / d_K over {} pairs in B(0, {}): [{:.6}, {:.6}]",
                    c.pairs, c.sample_radius, c.lower, c.upper
                );
            }
        }
    }
    let _ = writeln!(out);
    for c in &report.verdict.checks {
        let _ = writeln!(out, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    out
}
