//! Deterministic SVG line plots of KL curves.

use std::fmt::Write as _;
use std::path::Path;

use super::curves::KlCurve;
use crate::error::{Error, Result};

const PALETTE: [&str; 10] = [
    "#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Clone, Debug, PartialEq)]
pub struct PlotOptions {
    pub log_y: bool,
    /// Draw the per-unit sub-curves instead of the totals where present.
    pub per_unit: bool,
    pub title: String,
    pub width: u32,
    pub height: u32,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            log_y: false,
            per_unit: false,
            title: "Error vs samples seen".into(),
            width: 760,
            height: 460,
        }
    }
}

struct Series {
    label: String,
    points: Vec<(u64, f64)>,
    markers: Vec<u64>,
}

fn series(curves: &[KlCurve], opts: &PlotOptions) -> Vec<Series> {
    let mut out = Vec::new();
    for c in curves {
        match (&c.per_unit, opts.per_unit) {
            (Some(pu), true) => {
                for u in 0..pu.len() {
                    out.push(Series {
                        label: format!("{} urn {}", c.label, u + 1),
                        points: c.unit_curve(u).expect("unit exists"),
                        markers: if u == 0 {
                            c.markers.clone()
                        } else {
                            Vec::new()
                        },
                    });
                }
            }
            _ => out.push(Series {
                label: c.label.clone(),
                points: c.points.clone(),
                markers: c.markers.clone(),
            }),
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// "Nice" tick spacing near `span / 5`.
fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

pub fn render_svg(curves: &[KlCurve], opts: &PlotOptions) -> String {
    let (w, h) = (opts.width as f64, opts.height as f64);
    let (left, right, top, bottom) = (70.0, 190.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let all = series(curves, opts);
    let usable = |y: f64| y.is_finite() && (!opts.log_y || y > 0.0);

    let xs = all.iter().flat_map(|s| s.points.iter().map(|p| p.0 as f64));
    let (mut x0, mut x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
        (a.min(x), b.max(x))
    });
    let ys = all
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .filter(|&y| usable(y))
        .map(|y| if opts.log_y { y.log10() } else { y });
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
        (a.min(y), b.max(y))
    });
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if opts.log_y {
        y0 = y0.floor();
        y1 = y1.ceil();
    } else {
        y0 = y0.min(0.0);
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| {
        let t = if opts.log_y { y.log10() } else { y };
        top + ph - (t - y0) / (y1 - y0) * ph
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        left + pw / 2.0,
        escape(&opts.title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );

    // axes ticks
    let xstep = tick_step(x1 - x0);
    let mut t = (x0 / xstep).ceil() * xstep;
    while t <= x1 + 1e-9 {
        let x = px(t);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            top + ph,
            top + ph + 5.0,
            top + ph + 18.0,
            t
        );
        t += xstep;
    }
    if opts.log_y {
        for e in (y0 as i32)..=(y1 as i32) {
            let y = top + ph - (e as f64 - y0) / (y1 - y0) * ph;
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"#,
                left - 5.0,
                left - 8.0,
                y + 4.0
            );
        }
    } else {
        let ystep = tick_step(y1 - y0);
        let mut t = (y0 / ystep).ceil() * ystep;
        while t <= y1 + 1e-12 {
            let y = py(t);
            let _ = writeln!(
                svg,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                left - 5.0,
                left - 8.0,
                y + 4.0,
                (t * 1e6).round() / 1e6
            );
            t += ystep;
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">samples seen</text>"#,
        left + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">KL error</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    for (i, s) in all.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        // split into runs of drawable points
        let mut segment: Vec<String> = Vec::new();
        let flush = |segment: &mut Vec<String>, svg: &mut String| {
            if segment.len() > 1 {
                let _ = writeln!(
                    svg,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    segment.join(" ")
                );
            }
            segment.clear();
        };
        for &(x, y) in &s.points {
            if usable(y) {
                segment.push(format!("{:.2},{:.2}", px(x as f64), py(y)));
            } else {
                flush(&mut segment, &mut svg);
            }
        }
        flush(&mut segment, &mut svg);
        for &m in &s.markers {
            let at = s.points.iter().find(|p| p.0 >= m).filter(|p| usable(p.1));
            if let Some(&(x, y)) = at {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    px(x as f64),
                    py(y)
                );
            }
        }
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_svg(curves: &[KlCurve], opts: &PlotOptions, path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(curves, opts)).map_err(|e| Error::io(path, e))
}
