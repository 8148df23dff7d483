//! Static SVG charts: drift per category against lookahead, and rating
//! boxes per listening-test condition.

use std::collections::BTreeMap;
use std::fmt::Write;

use itts_core::corpus::Category;
use itts_core::drift::GroupStats;
use itts_core::mushra::{Condition, RatingSet};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

const COLOURS: [&str; 5] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#7f7f7f"];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{title}</text>"#, (LEFT + W - RIGHT) / 2.0);
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str, y_ticks: &[f64]) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(out, r#"<path d="M{l},{t} L{l},{b} L{r},{b}" fill="none" stroke="black"/>"#);
    for &y in y_ticks {
        let py = f.py(y);
        let _ = writeln!(out, r#"<line x1="{}" y1="{py}" x2="{l}" y2="{py}" stroke="black"/>"#, l - 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, l - 6.0, py + 4.0, tick_label(y));
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, (l + r) / 2.0, H - 10.0);
    let _ = writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{y_label}</text>"#,
        (t + b) / 2.0
    );
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() < 1e-2 || v.abs() >= 1e4 {
        format!("{v:.1e}")
    } else {
        format!("{}", (v * 1000.0).round() / 1000.0)
    }
}

fn ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| lo + (hi - lo) * i as f64 / count as f64).collect()
}

fn legend(out: &mut String, entries: &[(&str, &str)]) {
    for (i, (name, colour)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let x = W - RIGHT + 15.0;
        let _ = writeln!(out, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{colour}"/>"#, y - 9.0);
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{name}</text>"#, x + 15.0);
    }
}

/// Mean drift with population-std error bars, one series per token
/// category, against lookahead `k`.
pub fn drift_svg(rows: &[(usize, Option<Category>, GroupStats)]) -> String {
    let mut series: BTreeMap<Category, Vec<(usize, GroupStats)>> = BTreeMap::new();
    for (k, c, g) in rows {
        if let Some(c) = c {
            series.entry(*c).or_default().push((*k, *g));
        }
    }
    let k_max = rows.iter().map(|r| r.0).max().unwrap_or(1).max(1);
    let y_max = rows.iter().filter(|r| r.1.is_some()).map(|r| r.2.mean + r.2.std).fold(0.0f64, f64::max);
    let y_max = if y_max > 0.0 { y_max * 1.05 } else { 1.0 };
    let f = Frame { x0: -0.5, x1: k_max as f64 + 0.5, y0: 0.0, y1: y_max };

    let mut out = String::new();
    header(&mut out, "Embedding drift by lookahead");
    axes(&mut out, &f, "lookahead k", "cosine distance", &ticks(0.0, y_max, 5));
    for k in 0..=k_max {
        let px = f.px(k as f64);
        let _ = writeln!(out, r#"<text x="{px}" y="{}" text-anchor="middle">{k}</text>"#, H - BOTTOM + 16.0);
    }
    let n = series.len().max(1) as f64;
    let mut entries = Vec::new();
    for (i, (cat, points)) in series.iter().enumerate() {
        let colour = COLOURS[i % COLOURS.len()];
        entries.push((cat.as_str(), colour));
        // small horizontal offset per series keeps the error bars apart
        let dx = (i as f64 - (n - 1.0) / 2.0) * 0.12;
        let path: Vec<String> =
            points.iter().map(|(k, g)| format!("{:.2},{:.2}", f.px(*k as f64 + dx), f.py(g.mean))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{colour}"/>"#, path.join(" "));
        for (k, g) in points {
            let x = f.px(*k as f64 + dx);
            let (lo, hi) = (f.py((g.mean - g.std).max(0.0)), f.py(g.mean + g.std));
            let _ = writeln!(out, r#"<line x1="{x:.2}" y1="{lo:.2}" x2="{x:.2}" y2="{hi:.2}" stroke="{colour}"/>"#);
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#, f.py(g.mean));
        }
    }
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Box per condition: quartiles, median, whiskers at min and max.
pub fn mushra_svg(ratings: &RatingSet) -> String {
    let f = Frame { x0: 0.0, x1: Condition::ALL.len() as f64, y0: 0.0, y1: 100.0 };
    let mut out = String::new();
    header(&mut out, "Listening test ratings");
    axes(&mut out, &f, "condition", "score", &ticks(0.0, 100.0, 5));
    for (i, &c) in Condition::ALL.iter().enumerate() {
        let centre = i as f64 + 0.5;
        let px = f.px(centre);
        let _ = writeln!(out, r#"<text x="{px}" y="{}" text-anchor="middle">{}</text>"#, H - BOTTOM + 16.0, c.as_str());
        let mut v: Vec<f64> = ratings.scores.iter().filter(|((_, _, k), _)| *k == c).map(|(_, s)| *s).collect();
        if v.is_empty() {
            continue;
        }
        v.sort_by(f64::total_cmp);
        let colour = COLOURS[i % COLOURS.len()];
        let (q1, med, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
        let (lo, hi) = (v[0], v[v.len() - 1]);
        let half = 0.3 * (f.px(1.0) - f.px(0.0));
        let _ = writeln!(out, r#"<line x1="{px}" y1="{:.2}" x2="{px}" y2="{:.2}" stroke="black"/>"#, f.py(lo), f.py(hi));
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{colour}" fill-opacity="0.6" stroke="black"/>"#,
            px - half,
            f.py(q3),
            2.0 * half,
            f.py(q1) - f.py(q3)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{2:.2}" x2="{:.2}" y2="{2:.2}" stroke="black" stroke-width="2"/>"#,
            px - half,
            px + half,
            f.py(med)
        );
    }
    out.push_str("</svg>\n");
    out
}
