//! Per-individual output records and the bar-chart rendering of one record.

use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::format_number;
use crate::error::{Error, Result};
use crate::privilege::BootstrapInterval;
use crate::psc::{PscIntervals, PscResult, Route};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl From<&BootstrapInterval> for Bounds {
    fn from(ci: &BootstrapInterval) -> Self {
        Bounds {
            lower: ci.lower,
            upper: ci.upper,
        }
    }
}

/// One explained individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsRecord {
    pub id: String,
    pub pred_real: f64,
    pub pred_warped: f64,
    pub ps: f64,
    pub delta_g: f64,
    pub delta_x: f64,
    pub gamma: Vec<f64>,
    pub route: Route,
    pub alpha: Option<f64>,
    pub replicates: Option<usize>,
    pub ps_ci: Option<Bounds>,
    pub delta_g_ci: Option<Bounds>,
    pub delta_x_ci: Option<Bounds>,
    pub gamma_ci: Vec<Bounds>,
    /// Names of the privileges, one per gamma entry.
    #[serde(default)]
    pub arrow_names: Vec<String>,
}

impl PsRecord {
    pub fn new(
        id: impl Into<String>,
        r: &PscResult,
        ci: Option<&PscIntervals>,
        arrow_names: Vec<String>,
    ) -> Self {
        let k = r.k();
        PsRecord {
            id: id.into(),
            pred_real: r.pred_real,
            pred_warped: r.pred_warped,
            ps: r.ps,
            delta_g: r.delta_g,
            delta_x: r.delta_x,
            gamma: r.gamma.clone(),
            route: r.route,
            alpha: ci.map(|c| c.ps().alpha),
            replicates: ci.map(|c| c.ps().b()),
            ps_ci: ci.map(|c| c.ps().into()),
            delta_g_ci: ci.map(|c| c.delta_g().into()),
            delta_x_ci: ci.map(|c| c.delta_x().into()),
            gamma_ci: ci.map_or_else(Vec::new, |c| (0..k).map(|j| c.gamma(j).into()).collect()),
            arrow_names,
        }
    }

    pub fn k(&self) -> usize {
        self.gamma.len()
    }
}

fn header(k: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "id",
        "pred_real",
        "pred_warped",
        "ps",
        "ci_lower",
        "ci_upper",
        "alpha",
        "B",
        "delta_g",
        "delta_x",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=k).map(|j| format!("gamma_{j}")));
    h.push("route".into());
    for c in ["delta_g", "delta_x"] {
        h.push(format!("{c}_lower"));
        h.push(format!("{c}_upper"));
    }
    for j in 1..=k {
        h.push(format!("gamma_{j}_lower"));
        h.push(format!("gamma_{j}_upper"));
    }
    h
}

fn opt(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

/// CSV with a fixed column layout; numbers use shortest round-trip form so
/// reloading reproduces them exactly.
pub fn write_records<W: Write>(records: &[PsRecord], writer: W) -> Result<()> {
    let k = records.first().map_or(0, PsRecord::k);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header(k))?;
    for r in records {
        if r.k() != k {
            return Err(Error::InvalidArgument(
                "records with different arrow counts".into(),
            ));
        }
        let mut row = vec![
            r.id.clone(),
            format_number(r.pred_real),
            format_number(r.pred_warped),
            format_number(r.ps),
            opt(r.ps_ci.as_ref().map(|b| b.lower)),
            opt(r.ps_ci.as_ref().map(|b| b.upper)),
            opt(r.alpha),
            r.replicates.map(|b| b.to_string()).unwrap_or_default(),
            format_number(r.delta_g),
            format_number(r.delta_x),
        ];
        row.extend(r.gamma.iter().map(|g| format_number(*g)));
        row.push(match r.route {
            Route::Real => "real".into(),
            Route::Warped => "warped".into(),
        });
        for b in [&r.delta_g_ci, &r.delta_x_ci] {
            row.push(opt(b.as_ref().map(|b| b.lower)));
            row.push(opt(b.as_ref().map(|b| b.upper)));
        }
        for j in 0..k {
            let b = r.gamma_ci.get(j);
            row.push(opt(b.map(|b| b.lower)));
            row.push(opt(b.map(|b| b.upper)));
        }
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

/// Reads records written by [`write_records`]. Arrow names are not part of
/// the CSV and come back empty.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<PsRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let head: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let k = head
        .iter()
        .filter(|h| h.starts_with("gamma_") && !h.ends_with("_lower") && !h.ends_with("_upper"))
        .count();
    if head != header(k) {
        return Err(Error::Schema(format!(
            "unexpected record header: {}",
            head.join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let num = |c: usize| -> Result<f64> {
            rec[c].parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: head[c].clone(),
                value: rec[c].to_string(),
            })
        };
        let opt_num = |c: usize| -> Result<Option<f64>> {
            if rec[c].is_empty() {
                Ok(None)
            } else {
                num(c).map(Some)
            }
        };
        let bounds = |c: usize| -> Result<Option<Bounds>> {
            Ok(match (opt_num(c)?, opt_num(c + 1)?) {
                (Some(lower), Some(upper)) => Some(Bounds { lower, upper }),
                _ => None,
            })
        };
        let gamma = (0..k).map(|j| num(10 + j)).collect::<Result<Vec<_>>>()?;
        let route = match &rec[10 + k] {
            "real" => Route::Real,
            "warped" => Route::Warped,
            other => {
                return Err(Error::Parse {
                    row,
                    column: "route".into(),
                    value: other.into(),
                })
            }
        };
        let base = 11 + k;
        let gamma_ci = (0..k)
            .map(|j| bounds(base + 4 + 2 * j))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        out.push(PsRecord {
            id: rec[0].to_string(),
            pred_real: num(1)?,
            pred_warped: num(2)?,
            ps: num(3)?,
            ps_ci: bounds(4)?,
            alpha: opt_num(6)?,
            replicates: if rec[7].is_empty() {
                None
            } else {
                Some(rec[7].parse().map_err(|_| Error::Parse {
                    row,
                    column: "B".into(),
                    value: rec[7].to_string(),
                })?)
            },
            delta_g: num(8)?,
            delta_x: num(9)?,
            gamma,
            route,
            delta_g_ci: bounds(base)?,
            delta_x_ci: bounds(base + 2)?,
            gamma_ci,
            arrow_names: Vec::new(),
        });
    }
    Ok(out)
}

/// Horizontal bar chart: the privilege score on top, then the global and
/// individual intercepts and one bar per privilege, with interval whiskers
/// where available. Numbers are printed with six decimals.
pub fn render_svg(record: &PsRecord) -> String {
    let mut bars: Vec<(String, f64, Option<&Bounds>)> = vec![
        ("PS".into(), record.ps, record.ps_ci.as_ref()),
        (
            "global intercept".into(),
            record.delta_g,
            record.delta_g_ci.as_ref(),
        ),
        (
            "individual intercept".into(),
            record.delta_x,
            record.delta_x_ci.as_ref(),
        ),
    ];
    for (j, g) in record.gamma.iter().enumerate() {
        let name = record
            .arrow_names
            .get(j)
            .cloned()
            .unwrap_or_else(|| format!("privilege {}", j + 1));
        bars.push((name, *g, record.gamma_ci.get(j)));
    }
    let extent = bars
        .iter()
        .flat_map(|(_, v, b)| {
            let mut xs = vec![v.abs()];
            if let Some(b) = b {
                xs.push(b.lower.abs());
                xs.push(b.upper.abs());
            }
            xs
        })
        .fold(0.0f64, f64::max)
        .max(1e-6)
        * 1.1;
    let (label_w, plot_w, row_h, top) = (170.0, 420.0, 34.0, 30.0);
    let width = label_w + plot_w + 100.0;
    let height = top + row_h * bars.len() as f64 + 20.0;
    let x0 = label_w + plot_w / 2.0;
    let sx = |v: f64| x0 + v / extent * (plot_w / 2.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="8" y="18" font-weight="bold">id {}</text>"#,
        escape(&record.id)
    );
    let _ = writeln!(
        s,
        r#"<line x1="{x0:.6}" y1="{:.6}" x2="{x0:.6}" y2="{:.6}" stroke="black" stroke-width="1"/>"#,
        top - 6.0,
        height - 14.0
    );
    for (i, (name, v, b)) in bars.iter().enumerate() {
        let y = top + row_h * i as f64;
        let (a, c) = (sx(0.0).min(sx(*v)), sx(0.0).max(sx(*v)));
        let fill = if i == 0 {
            "#444444"
        } else if *v < 0.0 {
            "#c0504d"
        } else {
            "#4f81bd"
        };
        let _ = writeln!(s, r#"<g class="bar">"#);
        let _ = writeln!(
            s,
            r#"<text x="8" y="{:.6}">{}</text>"#,
            y + 18.0,
            escape(name)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{a:.6}" y="{:.6}" width="{:.6}" height="{:.6}" fill="{fill}"/>"#,
            y + 6.0,
            c - a,
            row_h - 12.0
        );
        if let Some(b) = b {
            let ym = y + row_h / 2.0;
            let _ = writeln!(
                s,
                r#"<line x1="{:.6}" y1="{ym:.6}" x2="{:.6}" y2="{ym:.6}" stroke="black"/>"#,
                sx(b.lower),
                sx(b.upper)
            );
            for e in [b.lower, b.upper] {
                let _ = writeln!(
                    s,
                    r#"<line x1="{0:.6}" y1="{1:.6}" x2="{0:.6}" y2="{2:.6}" stroke="black"/>"#,
                    sx(e),
                    ym - 6.0,
                    ym + 6.0
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.6}" y="{:.6}">{v:.6}</text>"#,
            label_w + plot_w + 8.0,
            y + 18.0
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(k: usize, with_ci: bool) -> PsRecord {
        let b = |l: f64, u: f64| Some(Bounds { lower: l, upper: u });
        PsRecord {
            id: "7".into(),
            pred_real: 0.3,
            pred_warped: 0.97,
            ps: 0.3 - 0.97,
            delta_g: 0.1,
            delta_x: -0.4,
            gamma: (0..k).map(|j| -0.1 * (j + 1) as f64).collect(),
            route: Route::Real,
            alpha: with_ci.then_some(0.05),
            replicates: with_ci.then_some(41),
            ps_ci: if with_ci { b(-0.9, -0.55) } else { None },
            delta_g_ci: if with_ci { b(0.0, 0.2) } else { None },
            delta_x_ci: if with_ci { b(-0.6, -0.2) } else { None },
            gamma_ci: if with_ci {
                (0..k)
                    .map(|_| Bounds {
                        lower: -0.3,
                        upper: 0.1,
                    })
                    .collect()
            } else {
                vec![]
            },
            arrow_names: vec![],
        }
    }

    #[test]
    fn csv_round_trip() {
        for (k, ci) in [(2, true), (0, false), (3, false)] {
            let recs = vec![
                record(k, ci),
                PsRecord {
                    id: "x,y".into(),
                    ..record(k, ci)
                },
            ];
            let mut buf = Vec::new();
            write_records(&recs, &mut buf).unwrap();
            let back = read_records(buf.as_slice()).unwrap();
            assert_eq!(back, recs);
        }
    }

    #[test]
    fn svg_bar_count() {
        assert_eq!(
            render_svg(&record(2, true))
                .matches(r#"<g class="bar">"#)
                .count(),
            5
        );
        assert_eq!(
            render_svg(&record(0, false))
                .matches(r#"<g class="bar">"#)
                .count(),
            3
        );
    }
}
