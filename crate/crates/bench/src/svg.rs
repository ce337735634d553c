//! Minimal SVG plots. Every document carries the manifest hash in its
//! `<metadata>` element.

use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 320.0;
const PAD_L: f64 = 64.0;
const PAD_R: f64 = 16.0;
const PAD_T: f64 = 32.0;
const PAD_B: f64 = 44.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    Line,
    Markers,
    Bars,
}

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub style: Style,
    /// `(x, y, half-width of error bar)`
    pub points: Vec<(f64, f64, f64)>,
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    /// Category labels for bar plots, indexed by x.
    pub categories: &'a [String],
    pub series: Vec<Series>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

impl Plot<'_> {
    pub fn render(&self, manifest_hash: &str) -> String {
        let pts = || self.series.iter().flat_map(|s| s.points.iter());
        let bars = self.series.iter().any(|s| s.style == Style::Bars);
        let (x0, x1) = if bars {
            (-0.5, self.categories.len().max(1) as f64 - 0.5)
        } else {
            bounds(pts().map(|p| p.0))
        };
        let (mut y0, y1) = bounds(pts().flat_map(|p| [p.1 - p.2, p.1 + p.2]));
        if bars {
            y0 = y0.min(0.0);
        }
        let sx = |x: f64| PAD_L + (x - x0) / (x1 - x0) * (W - PAD_L - PAD_R);
        let sy = |y: f64| H - PAD_B - (y - y0) / (y1 - y0) * (H - PAD_T - PAD_B);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, "<metadata>manifest-sha256:{manifest_hash}</metadata>");
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
            W / 2.0,
            esc(self.title)
        );
        let _ = writeln!(
            s,
            r#"<path d="M{:.1} {:.1} V{:.1} H{:.1}" stroke="black" fill="none"/>"#,
            PAD_L,
            PAD_T,
            H - PAD_B,
            W - PAD_R
        );
        for k in 0..=4 {
            let y = y0 + (y1 - y0) * k as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.4}</text>"#,
                PAD_L - 4.0,
                sy(y) + 4.0,
                y
            );
        }
        if bars {
            for (i, c) in self.categories.iter().enumerate() {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                    sx(i as f64),
                    H - PAD_B + 14.0,
                    esc(c)
                );
            }
        } else {
            for k in 0..=4 {
                let x = x0 + (x1 - x0) * k as f64 / 4.0;
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.4}</text>"#,
                    sx(x),
                    H - PAD_B + 14.0,
                    x
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (PAD_L + W - PAD_R) / 2.0,
            H - 8.0,
            esc(self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            esc(self.y_label)
        );

        let nbar = self.series.iter().filter(|s| s.style == Style::Bars).count().max(1) as f64;
        let bar_w = (W - PAD_L - PAD_R) / self.categories.len().max(1) as f64 * 0.8 / nbar;
        let mut bar_k = 0.0;
        for (k, series) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let finite: Vec<_> = series.points.iter().filter(|p| p.1.is_finite()).collect();
            match series.style {
                Style::Line => {
                    let d: Vec<String> = finite
                        .iter()
                        .enumerate()
                        .map(|(i, p)| format!("{}{:.2} {:.2}", if i == 0 { 'M' } else { 'L' }, sx(p.0), sy(p.1)))
                        .collect();
                    let _ = writeln!(s, r#"<path d="{}" stroke="{color}" fill="none"/>"#, d.join(" "));
                }
                Style::Markers => {}
                Style::Bars => {
                    for p in &finite {
                        let x = sx(p.0) - 0.4 * bar_w * nbar + bar_k * bar_w;
                        let (ya, yb) = (sy(p.1.max(y0.max(0.0))), sy(y0.max(0.0).min(p.1)));
                        let _ = writeln!(
                            s,
                            r#"<rect x="{x:.2}" y="{:.2}" width="{bar_w:.2}" height="{:.2}" fill="{color}"/>"#,
                            ya.min(yb),
                            (yb - ya).abs()
                        );
                    }
                    bar_k += 1.0;
                }
            }
            if series.style != Style::Bars {
                for p in &finite {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                        sx(p.0),
                        sy(p.1)
                    );
                    if p.2 > 0.0 {
                        let _ = writeln!(
                            s,
                            r#"<path d="M{:.2} {:.2} V{:.2}" stroke="{color}"/>"#,
                            sx(p.0),
                            sy(p.1 - p.2),
                            sy(p.1 + p.2)
                        );
                    }
                }
            }
            let ly = PAD_T + 4.0 + 14.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                W - PAD_R - 110.0,
                ly,
                W - PAD_R - 96.0,
                ly + 9.0,
                esc(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}
