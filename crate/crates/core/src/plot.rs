//! Static SVG line charts of sweep results: accuracy against τ, one chart
//! per `(fd, d⁺)` pair.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::SweepRow;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotSpec {
    pub width: f64,
    pub height: f64,
}

impl Default for PlotSpec {
    fn default() -> Self {
        PlotSpec {
            width: 480.0,
            height: 320.0,
        }
    }
}

const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 48.0;

/// Groups rows by `(fd, d⁺)` in first-appearance order, each group sorted
/// by τ.
pub fn group_rows(rows: &[SweepRow]) -> Vec<((f64, usize), Vec<&SweepRow>)> {
    let mut groups: Vec<((f64, usize), Vec<&SweepRow>)> = Vec::new();
    for r in rows {
        let key = (r.fd_param, r.d_plus);
        match groups.iter_mut().find(|(k, _)| k.0.to_bits() == key.0.to_bits() && k.1 == key.1) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    for (_, g) in &mut groups {
        g.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    }
    groups
}

/// SVG text for one group of rows.
pub fn render_svg(fd: f64, d_plus: usize, points: &[&SweepRow], spec: &PlotSpec) -> String {
    let (w, h) = (spec.width, spec.height);
    let plot_w = w - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = h - MARGIN_TOP - MARGIN_BOTTOM;
    let mut lo = points.iter().map(|p| p.tau).fold(f64::INFINITY, f64::min);
    let mut hi = points.iter().map(|p| p.tau).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let sx = |t: f64| MARGIN_LEFT + (t - lo) / (hi - lo) * plot_w;
    let sy = |a: f64| MARGIN_TOP + (1.0 - a.clamp(0.0, 1.0)) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">FD = {fd}, d+ = {d_plus}</text>"#,
        w / 2.0
    );
    // axes and gridlines
    for i in 0..=5 {
        let a = i as f64 / 5.0;
        let y = sy(a);
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{a:.1}</text>"#,
            MARGIN_LEFT - 6.0,
            y + 4.0
        );
    }
    for i in 0..=4 {
        let t = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{t:.2}</text>"#,
            sx(t),
            MARGIN_TOP + plot_h + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">tau</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">test accuracy</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    // ±std band
    let upper: Vec<String> = points
        .iter()
        .map(|p| format!("{:.2},{:.2}", sx(p.tau), sy(p.acc_mean + p.acc_std)))
        .collect();
    let lower: Vec<String> = points
        .iter()
        .rev()
        .map(|p| format!("{:.2},{:.2}", sx(p.tau), sy(p.acc_mean - p.acc_std)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polygon points="{} {}" fill="#4c72b0" fill-opacity="0.2" stroke="none"/>"##,
        upper.join(" "),
        lower.join(" ")
    );
    let line: Vec<String> = points
        .iter()
        .map(|p| format!("{:.2},{:.2}", sx(p.tau), sy(p.acc_mean)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#4c72b0" stroke-width="2"/>"##,
        line.join(" ")
    );
    for p in points {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#4c72b0"/>"##,
            sx(p.tau),
            sy(p.acc_mean)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn plot_file_name(fd: f64, d_plus: usize) -> String {
    format!("acc_fd{fd}_dplus{d_plus}.svg")
}

/// Writes one chart per `(fd, d⁺)` pair into `dir`. Nothing is written for
/// an empty row set.
pub fn emit_plots(rows: &[SweepRow], dir: &Path, spec: &PlotSpec) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("no sweep rows to plot".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    group_rows(rows)
        .into_iter()
        .map(|((fd, d_plus), points)| {
            let path = dir.join(plot_file_name(fd, d_plus));
            std::fs::write(&path, render_svg(fd, d_plus, &points, spec)).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
