//! Result tables (CSV) and the SVG metric plot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::format_metric;

/// Column order of every results table.
pub const CSV_COLUMNS: [&str; 8] = ["task", "algorithm", "mode", "seed", "psnr", "ssim", "nfe", "wall_ms"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: String,
    pub algorithm: String,
    pub mode: String,
    pub seed: u64,
    pub psnr: f64,
    pub ssim: f64,
    pub nfe: usize,
    pub wall_ms: f64,
}

impl ResultRow {
    fn sort_key(&self) -> (&str, &str, &str, u64) {
        (&self.task, &self.algorithm, &self.mode, self.seed)
    }

    fn fields(&self) -> [String; 8] {
        [
            self.task.clone(),
            self.algorithm.clone(),
            self.mode.clone(),
            self.seed.to_string(),
            format_metric(self.psnr),
            format_metric(self.ssim),
            self.nfe.to_string(),
            format!("{:.3}", self.wall_ms),
        ]
    }
}

/// CSV text with rows sorted by (task, algorithm, mode, seed).
pub fn results_csv(rows: &[ResultRow]) -> Result<String> {
    let mut sorted: Vec<&ResultRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for row in sorted {
        w.write_record(row.fields())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    std::fs::write(path, results_csv(rows)?)?;
    Ok(())
}

fn parse_metric(s: &str) -> Result<f64> {
    if s == "inf" {
        return Ok(f64::INFINITY);
    }
    s.parse().map_err(|_| Error::Config(format!("bad metric value {s:?}")))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Config(format!("unexpected CSV header {header:?}")));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> { parse_metric(&rec[i]) };
            Ok(ResultRow {
                task: rec[0].to_string(),
                algorithm: rec[1].to_string(),
                mode: rec[2].to_string(),
                seed: rec[3].parse().map_err(|_| Error::Config(format!("bad seed {:?}", &rec[3])))?,
                psnr: num(4)?,
                ssim: num(5)?,
                nfe: rec[6].parse().map_err(|_| Error::Config(format!("bad nfe {:?}", &rec[6])))?,
                wall_ms: num(7)?,
            })
        })
        .collect()
}

/// Drops the wall-time column, leaving the deterministic part of a table.
pub fn strip_wall_time(csv_text: &str) -> String {
    csv_text
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Mean PSNR/SSIM per (task, algorithm, mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub task: String,
    pub algorithm: String,
    pub mode: String,
    pub n: usize,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_nfe: f64,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<(String, String, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.task.clone(), r.algorithm.clone(), r.mode.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((task, algorithm, mode), rs)| {
            let n = rs.len() as f64;
            GroupSummary {
                task,
                algorithm,
                mode,
                n: rs.len(),
                mean_psnr: rs.iter().map(|r| r.psnr).sum::<f64>() / n,
                mean_ssim: rs.iter().map(|r| r.ssim).sum::<f64>() / n,
                mean_nfe: rs.iter().map(|r| r.nfe as f64).sum::<f64>() / n,
            }
        })
        .collect()
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter of mean PSNR (x) against mean SSIM (y), one panel per task.
pub fn render_svg(rows: &[ResultRow]) -> String {
    let summary: Vec<GroupSummary> = summarize(rows).into_iter().filter(|g| g.mean_psnr.is_finite()).collect();
    let tasks: Vec<String> = {
        let mut t: Vec<String> = summary.iter().map(|g| g.task.clone()).collect();
        t.dedup();
        t
    };
    let series: Vec<String> = {
        let mut s: Vec<String> = summary.iter().map(|g| format!("{} {}", g.algorithm, g.mode)).collect();
        s.sort();
        s.dedup();
        s
    };
    let (pw, ph, margin) = (320.0, 240.0, 50.0);
    let width = margin + tasks.len().max(1) as f64 * (pw + margin) + 180.0;
    let height = ph + 2.0 * margin;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (ti, task) in tasks.iter().enumerate() {
        let x0 = margin + ti as f64 * (pw + margin);
        let y0 = margin;
        let pts: Vec<&GroupSummary> = summary.iter().filter(|g| &g.task == task).collect();
        let (mut pmin, mut pmax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut smin, mut smax) = (f64::INFINITY, f64::NEG_INFINITY);
        for g in &pts {
            pmin = pmin.min(g.mean_psnr);
            pmax = pmax.max(g.mean_psnr);
            smin = smin.min(g.mean_ssim);
            smax = smax.max(g.mean_ssim);
        }
        let pad = |lo: f64, hi: f64| if hi - lo < 1e-9 { (lo - 0.5, hi + 0.5) } else { (lo - 0.1 * (hi - lo), hi + 0.1 * (hi - lo)) };
        let ((pmin, pmax), (smin, smax)) = (pad(pmin, pmax), pad(smin, smax));
        let _ = writeln!(svg, r#"<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" font-weight="bold">{}</text>"#, x0 + pw / 2.0, y0 - 10.0, escape(task));
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">PSNR (dB)</text>"#, x0 + pw / 2.0, y0 + ph + 32.0);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" transform="rotate(-90 {} {})">SSIM</text>"#,
            x0 - 36.0,
            y0 + ph / 2.0,
            x0 - 36.0,
            y0 + ph / 2.0
        );
        for (label, v, is_x) in [(pmin, pmin, true), (pmax, pmax, true), (smin, smin, false), (smax, smax, false)] {
            if is_x {
                let x = x0 + (v - pmin) / (pmax - pmin) * pw;
                let _ = writeln!(svg, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{label:.2}</text>"#, y0 + ph + 14.0);
            } else {
                let y = y0 + ph - (v - smin) / (smax - smin) * ph;
                let _ = writeln!(svg, r#"<text x="{}" y="{y:.1}" text-anchor="end">{label:.3}</text>"#, x0 - 4.0);
            }
        }
        for g in pts {
            let key = format!("{} {}", g.algorithm, g.mode);
            let color = PALETTE[series.iter().position(|s| *s == key).unwrap_or(0) % PALETTE.len()];
            let x = x0 + (g.mean_psnr - pmin) / (pmax - pmin) * pw;
            let y = y0 + ph - (g.mean_ssim - smin) / (smax - smin) * ph;
            let _ = writeln!(
                svg,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="{color}"><title>{} psnr={:.3} ssim={:.4} nfe={}</title></circle>"#,
                escape(&key),
                g.mean_psnr,
                g.mean_ssim,
                g.mean_nfe
            );
        }
    }
    let lx = margin + tasks.len().max(1) as f64 * (pw + margin);
    for (i, s) in series.iter().enumerate() {
        let y = margin + 16.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(svg, r#"<circle cx="{lx}" cy="{y}" r="5" fill="{color}"/>"#);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 10.0, y + 4.0, escape(s));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Reads `results.csv` from `in_dir` and writes the plot to `out`.
pub fn report(in_dir: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<()> {
    let rows = read_csv(in_dir.as_ref().join("results.csv"))?;
    std::fs::write(out, render_svg(&rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(task: &str, alg: &str, seed: u64, psnr: f64) -> ResultRow {
        ResultRow {
            task: task.into(),
            algorithm: alg.into(),
            mode: "mmse".into(),
            seed,
            psnr,
            ssim: 0.5,
            nfe: 20,
            wall_ms: 1.23456,
        }
    }

    #[test]
    fn golden_csv_bytes() {
        let rows = vec![row("inpaint", "dpir", 2, f64::INFINITY), row("gaussian_blur", "dpir", 1, 25.5)];
        let text = results_csv(&rows).unwrap();
        let golden = "task,algorithm,mode,seed,psnr,ssim,nfe,wall_ms\n\
                      gaussian_blur,dpir,mmse,1,25.5,0.5,20,1.235\n\
                      inpaint,dpir,mmse,2,inf,0.5,20,1.235\n";
        assert_eq!(text, golden);
    }

    #[test]
    fn csv_round_trip_and_wall_strip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let rows = vec![row("hdr", "daps", 3, 20.0), row("hdr", "daps", 1, f64::INFINITY)];
        write_csv(&path, &rows).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].seed, 1);
        assert_eq!(back[0].psnr, f64::INFINITY);
        let stripped = strip_wall_time(&results_csv(&rows).unwrap());
        assert!(stripped.starts_with("task,algorithm,mode,seed,psnr,ssim,nfe\n"));
        assert!(!stripped.contains("1.235"));
    }

    #[test]
    fn svg_has_one_point_per_group() {
        let rows = vec![row("hdr", "daps", 1, 20.0), row("hdr", "daps", 2, 22.0), row("hdr", "dpir", 1, 21.0)];
        let svg = render_svg(&rows);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<title>").count(), 2);
        assert!(svg.contains("psnr=21.000"));
    }
}
