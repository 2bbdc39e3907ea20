//! Minimal deterministic SVG charts: axes, lines, min/max ribbons, points
//! and reference lines. Coordinates are printed with two decimals so the
//! same data always yields the same bytes.

use std::fmt::Write;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f"];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;

/// Axis-aligned data range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    /// Smallest range covering `values`, padded by 5% and never empty.
    pub fn covering(values: impl IntoIterator<Item = f64>) -> Self {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.into_iter().filter(|v| v.is_finite()) {
            min = min.min(v);
            max = max.max(v);
        }
        if !min.is_finite() {
            return Range { min: 0.0, max: 1.0 };
        }
        if max - min < 1e-12 {
            return Range {
                min: min - 0.5,
                max: max + 0.5,
            };
        }
        let pad = 0.05 * (max - min);
        Range {
            min: min - pad,
            max: max + pad,
        }
    }

    pub fn including(self, v: f64) -> Self {
        Range {
            min: self.min.min(v),
            max: self.max.max(v),
        }
    }
}

pub struct Chart {
    x: Range,
    y: Range,
    body: String,
    legend: Vec<(String, String)>,
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str, x: Range, y: Range) -> Self {
        let mut c = Chart {
            x,
            y,
            body: String::new(),
            legend: Vec::new(),
        };
        c.axes(title, x_label, y_label);
        c
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.min) / (self.x.max - self.x.min) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.min) / (self.y.max - self.y.min) * (HEIGHT - TOP - BOTTOM)
    }

    fn axes(&mut self, title: &str, x_label: &str, y_label: &str) {
        let (x0, x1) = (LEFT, WIDTH - RIGHT);
        let (y0, y1) = (HEIGHT - BOTTOM, TOP);
        let b = &mut self.body;
        let _ = write!(
            b,
            r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            (x0 + x1) / 2.0,
            escape(title)
        );
        let _ = write!(
            b,
            r#"<path d="M{x0:.2} {y1:.2} L{x0:.2} {y0:.2} L{x1:.2} {y0:.2}" stroke="black" fill="none"/>"#
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = self.x.min + f * (self.x.max - self.x.min);
            let yv = self.y.min + f * (self.y.max - self.y.min);
            let (xp, yp) = (self.px(xv), self.py(yv));
            let b = &mut self.body;
            let _ = write!(
                b,
                r#"<text x="{xp:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
                y0 + 14.0,
                tick(xv)
            );
            let _ = write!(
                b,
                r#"<text x="{:.2}" y="{yp:.2}" text-anchor="end" font-size="10">{}</text>"#,
                x0 - 4.0,
                tick(yv)
            );
        }
        let b = &mut self.body;
        let _ = write!(
            b,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
        let _ = write!(
            b,
            r#"<text x="14" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {:.2})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }

    fn path(&self, pts: &[(f64, f64)]) -> String {
        let mut d = String::new();
        for (i, &(x, y)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{:.2} {:.2} ", if i == 0 { 'M' } else { 'L' }, self.px(x), self.py(y));
        }
        d.trim_end().to_string()
    }

    pub fn line(&mut self, pts: &[(f64, f64)], color: &str, label: Option<&str>) {
        if pts.is_empty() {
            return;
        }
        let d = self.path(pts);
        let _ = write!(self.body, r#"<path d="{d}" stroke="{color}" stroke-width="1.5" fill="none"/>"#);
        if let Some(l) = label {
            self.legend.push((l.to_string(), color.to_string()));
        }
    }

    /// Shaded band between `lo` and `hi` at the given x positions.
    pub fn ribbon(&mut self, xs: &[f64], lo: &[f64], hi: &[f64], color: &str) {
        if xs.is_empty() {
            return;
        }
        let mut pts: Vec<(f64, f64)> = xs.iter().copied().zip(hi.iter().copied()).collect();
        pts.extend(xs.iter().copied().zip(lo.iter().copied()).rev());
        let d = self.path(&pts);
        let _ = write!(self.body, r#"<path d="{d} Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#);
    }

    pub fn points(&mut self, pts: &[(f64, f64)], color: &str, label: Option<&str>) {
        for &(x, y) in pts {
            let _ = write!(
                self.body,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                self.px(x),
                self.py(y)
            );
        }
        if let Some(l) = label {
            self.legend.push((l.to_string(), color.to_string()));
        }
    }

    pub fn hline(&mut self, y: f64) {
        let (x0, x1, yp) = (self.px(self.x.min), self.px(self.x.max), self.py(y));
        let _ = write!(
            self.body,
            r#"<path d="M{x0:.2} {yp:.2} L{x1:.2} {yp:.2}" stroke="gray" stroke-dasharray="4 3" fill="none"/>"#
        );
    }

    pub fn vline(&mut self, x: f64) {
        let (xp, y0, y1) = (self.px(x), self.py(self.y.min), self.py(self.y.max));
        let _ = write!(
            self.body,
            r#"<path d="M{xp:.2} {y0:.2} L{xp:.2} {y1:.2}" stroke="gray" stroke-dasharray="4 3" fill="none"/>"#
        );
    }

    pub fn label(&mut self, x: f64, y: f64, text: &str) {
        let _ = write!(
            self.body,
            r#"<text x="{:.2}" y="{:.2}" font-size="9">{}</text>"#,
            self.px(x) + 4.0,
            self.py(y) - 4.0,
            escape(text)
        );
    }

    pub fn finish(self) -> String {
        let mut s = format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        s.push_str(r#"<rect width="100%" height="100%" fill="white"/>"#);
        s.push_str(&self.body);
        for (i, (label, color)) in self.legend.iter().enumerate() {
            let y = TOP + 16.0 * i as f64;
            let x = WIDTH - RIGHT + 12.0;
            let _ = write!(
                s,
                r#"<rect x="{x:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
                y,
                x + 14.0,
                y + 9.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e5).contains(&a) {
        format!("{v:.1e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_data_same_bytes() {
        let draw = || {
            let mut c = Chart::new("t", "x", "y", Range { min: 0.0, max: 10.0 }, Range { min: 0.0, max: 1.0 });
            c.ribbon(&[0.0, 5.0, 10.0], &[0.1, 0.2, 0.3], &[0.5, 0.6, 0.9], PALETTE[0]);
            c.line(&[(0.0, 0.3), (5.0, 0.4), (10.0, 0.6)], PALETTE[0], Some("a & b"));
            c.hline(1.0);
            c.finish()
        };
        let a = draw();
        assert_eq!(a, draw());
        assert!(a.contains("a &amp; b"));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
    }

    #[test]
    fn range_padding() {
        let r = Range::covering([1.0, 3.0]);
        assert!(r.min < 1.0 && r.max > 3.0);
        let flat = Range::covering([2.0, 2.0]);
        assert!(flat.max > flat.min);
        assert_eq!(Range::covering(std::iter::empty()), Range { min: 0.0, max: 1.0 });
    }
}
