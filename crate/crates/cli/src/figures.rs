//! SVG figures: probability histograms, risk-coverage curves and metric
//! radars, one file of each per regime.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use svg::node::element::{Group, Line, Polygon, Polyline, Rectangle, Text};
use svg::Document;
use tabrisk::harness::{ExperimentReport, MetricSet, RegimeReport};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const NEGATIVE: &str = "#4c72b0";
const POSITIVE: &str = "#dd8452";
const BINS: usize = 20;

fn f(v: f64) -> String {
    format!("{v:.2}")
}

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn text(x: f64, y: f64, size: u32, anchor: &str, s: impl Into<String>) -> Text {
    Text::new(s)
        .set("x", f(x))
        .set("y", f(y))
        .set("font-size", size)
        .set("font-family", "sans-serif")
        .set("text-anchor", anchor)
}

fn line(x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) -> Line {
    Line::new()
        .set("x1", f(x1))
        .set("y1", f(y1))
        .set("x2", f(x2))
        .set("y2", f(y2))
        .set("stroke", stroke)
        .set("stroke-width", 1)
}

fn points(pts: impl IntoIterator<Item = (f64, f64)>) -> String {
    pts.into_iter().map(|(x, y)| format!("{},{}", f(x), f(y))).collect::<Vec<_>>().join(" ")
}

fn document(w: f64, h: f64) -> Document {
    Document::new()
        .set("width", f(w))
        .set("height", f(h))
        .set("viewBox", format!("0 0 {} {}", f(w), f(h)))
        .add(Rectangle::new().set("width", "100%").set("height", "100%").set("fill", "white"))
}

/// Plot frame with unit axes mapped to `(x0, y0, w, h)`.
struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    ymax: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.x0 + x * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + self.h - (y / self.ymax) * self.h
    }

    fn axes(&self, xlabel: &str, ylabel: &str) -> Group {
        let mut g = Group::new()
            .add(line(self.x0, self.y0 + self.h, self.x0 + self.w, self.y0 + self.h, "black"))
            .add(line(self.x0, self.y0, self.x0, self.y0 + self.h, "black"));
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let x = self.px(t);
            g = g
                .add(line(x, self.y0 + self.h, x, self.y0 + self.h + 4.0, "black"))
                .add(text(x, self.y0 + self.h + 16.0, 10, "middle", format!("{t:.2}")));
            let yv = t * self.ymax;
            let y = self.py(yv);
            g = g
                .add(line(self.x0 - 4.0, y, self.x0, y, "black"))
                .add(text(self.x0 - 6.0, y + 3.0, 10, "end", format!("{yv:.*}", if self.ymax < 0.4 { 3 } else { 2 })));
        }
        g.add(text(self.x0 + self.w / 2.0, self.y0 + self.h + 32.0, 11, "middle", xlabel))
            .add(
                text(0.0, 0.0, 11, "middle", ylabel).set(
                    "transform",
                    format!("translate({},{}) rotate(-90)", f(self.x0 - 40.0), f(self.y0 + self.h / 2.0)),
                ),
            )
    }
}

/// Smallest axis maximum at or above `peak` whose quarter ticks are round.
fn axis_max(peak: f64) -> f64 {
    if peak <= 0.0 {
        return 1.0;
    }
    let unit = if peak > 0.4 { 0.05 } else { 0.005 };
    4.0 * (peak / 4.0 / unit).ceil() * unit
}

fn histogram(p: &[f64], labels: &[u8], class: u8) -> Vec<f64> {
    let mut counts = vec![0.0; BINS];
    let mut n = 0.0;
    for (&v, &y) in p.iter().zip(labels) {
        if y == class {
            let b = ((v * BINS as f64) as usize).min(BINS - 1);
            counts[b] += 1.0;
            n += 1.0;
        }
    }
    if n > 0.0 {
        counts.iter_mut().for_each(|c| *c /= n);
    }
    counts
}

/// Test-set probability histograms per model, split by true class and
/// normalised within each class.
pub fn histograms(r: &RegimeReport, labels: &[u8]) -> Document {
    let (pw, ph) = (340.0, 240.0);
    let cols = 2;
    let rows = r.models.len().div_ceil(cols).max(1);
    let (w, h) = (pw * cols as f64, ph * rows as f64 + 40.0);
    let mut doc = document(w, h).add(text(w / 2.0, 22.0, 14, "middle", format!("Predicted probability, test set ({})", r.regime)));
    for (i, m) in r.models.iter().enumerate() {
        let (ox, oy) = ((i % cols) as f64 * pw, 40.0 + (i / cols) as f64 * ph);
        let neg = histogram(&m.test_proba, labels, 0);
        let pos = histogram(&m.test_proba, labels, 1);
        let peak = neg.iter().chain(&pos).fold(0.0f64, |a, &b| a.max(b));
        let frame = Frame {
            x0: ox + 60.0,
            y0: oy + 24.0,
            w: pw - 80.0,
            h: ph - 80.0,
            ymax: axis_max(peak),
        };
        let bw = frame.w / BINS as f64;
        let mut g = Group::new().add(text(ox + pw / 2.0, oy + 14.0, 12, "middle", m.model.clone()));
        for (series, fill) in [(&neg, NEGATIVE), (&pos, POSITIVE)] {
            for (b, &v) in series.iter().enumerate() {
                if v > 0.0 {
                    let top = frame.py(v);
                    g = g.add(
                        Rectangle::new()
                            .set("x", f(frame.x0 + b as f64 * bw))
                            .set("y", f(top))
                            .set("width", f(bw))
                            .set("height", f(frame.y0 + frame.h - top))
                            .set("fill", fill)
                            .set("fill-opacity", 0.6),
                    );
                }
            }
        }
        g = g.add(frame.axes("probability", "fraction of class"));
        for (k, (label, fill)) in [("negative", NEGATIVE), ("positive", POSITIVE)].into_iter().enumerate() {
            let y = frame.y0 + 8.0 + k as f64 * 14.0;
            g = g
                .add(
                    Rectangle::new()
                        .set("x", f(frame.x0 + frame.w - 70.0))
                        .set("y", f(y - 8.0))
                        .set("width", 10)
                        .set("height", 10)
                        .set("fill", fill)
                        .set("fill-opacity", 0.6),
                )
                .add(text(frame.x0 + frame.w - 56.0, y, 10, "start", label));
        }
        doc = doc.add(g);
    }
    doc
}

/// Risk-coverage curves of every model in one frame.
pub fn risk_coverage(r: &RegimeReport) -> Document {
    let (w, h) = (560.0, 400.0);
    let peak = r
        .models
        .iter()
        .flat_map(|m| m.rc.risk.iter().copied())
        .fold(0.0f64, f64::max);
    let frame = Frame {
        x0: 70.0,
        y0: 40.0,
        w: 300.0,
        h: 300.0,
        ymax: axis_max(peak),
    };
    let mut doc = document(w, h)
        .add(text(w / 2.0, 22.0, 14, "middle", format!("Risk-coverage, test set ({})", r.regime)))
        .add(frame.axes("coverage", "risk"));
    for (i, m) in r.models.iter().enumerate() {
        let pts = m.rc.coverage.iter().zip(&m.rc.risk).map(|(&c, &k)| (frame.px(c), frame.py(k)));
        doc = doc.add(
            Polyline::new()
                .set("points", points(pts))
                .set("fill", "none")
                .set("stroke", color(i))
                .set("stroke-width", 1.5),
        );
        let y = frame.y0 + 10.0 + i as f64 * 16.0;
        doc = doc
            .add(line(400.0, y - 4.0, 420.0, y - 4.0, color(i)).set("stroke-width", 2))
            .add(text(426.0, y, 11, "start", format!("{} ({:.3})", m.model, m.rc.auc_rc)));
    }
    doc
}

/// Test metrics of every model on radial axes from 0 to 1.
pub fn radar(r: &RegimeReport) -> Document {
    let (w, h) = (600.0, 460.0);
    let (cx, cy, rad) = (220.0, 250.0, 160.0);
    let names = MetricSet::NAMES;
    let k = names.len();
    let at = |j: usize, v: f64| {
        let a = -PI / 2.0 + 2.0 * PI * j as f64 / k as f64;
        (cx + rad * v * a.cos(), cy + rad * v * a.sin())
    };
    let mut doc = document(w, h).add(text(w / 2.0, 22.0, 14, "middle", format!("Test metrics ({})", r.regime)));
    for ring in 1..=4 {
        let v = ring as f64 / 4.0;
        doc = doc.add(
            Polygon::new()
                .set("points", points((0..k).map(|j| at(j, v))))
                .set("fill", "none")
                .set("stroke", "#cccccc"),
        );
    }
    for (j, name) in names.iter().enumerate() {
        let (x, y) = at(j, 1.0);
        let (lx, ly) = at(j, 1.12);
        doc = doc.add(line(cx, cy, x, y, "#999999")).add(text(lx, ly + 4.0, 10, "middle", *name));
    }
    for (i, m) in r.models.iter().enumerate() {
        let s = m.test_metrics();
        let pts = names.iter().enumerate().map(|(j, n)| at(j, s.get(n).unwrap_or(0.0).clamp(0.0, 1.0)));
        doc = doc.add(
            Polygon::new()
                .set("points", points(pts))
                .set("fill", color(i))
                .set("fill-opacity", 0.12)
                .set("stroke", color(i))
                .set("stroke-width", 1.5),
        );
        let y = 60.0 + i as f64 * 16.0;
        doc = doc
            .add(line(440.0, y - 4.0, 460.0, y - 4.0, color(i)).set("stroke-width", 2))
            .add(text(466.0, y, 11, "start", m.model.clone()));
    }
    doc
}

/// File-name form of a regime label.
pub fn slug(regime: &str) -> String {
    regime
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '-' })
        .collect()
}

pub fn write_report_figures(report: &ExperimentReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for r in &report.regimes {
        let s = slug(&r.regime);
        for (name, doc) in [
            (format!("hist_{s}.svg"), histograms(r, &report.test_labels)),
            (format!("rc_{s}.svg"), risk_coverage(r)),
            (format!("radar_{s}.svg"), radar(r)),
        ] {
            let path = dir.join(name);
            fs::write(&path, format!("{doc}\n")).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_is_normalised_per_class() {
        let h = histogram(&[0.01, 0.02, 0.99, 1.0], &[0, 0, 1, 1], 1);
        assert_eq!(h.len(), BINS);
        assert_eq!(h[BINS - 1], 1.0);
        assert_eq!(histogram(&[0.5], &[0], 1), vec![0.0; BINS]);
    }

    #[test]
    fn axis_maxima_are_round() {
        assert!((axis_max(0.7) - 0.8).abs() < 1e-12);
        assert!((axis_max(0.6) - 0.6).abs() < 1e-12);
        assert!((axis_max(0.09) - 0.1).abs() < 1e-12);
        assert_eq!(axis_max(0.0), 1.0);
    }

    #[test]
    fn slugs_are_file_safe() {
        assert_eq!(slug("arf_500+edge_500"), "arf_500-edge_500");
        assert_eq!(slug("edge_1.5x"), "edge_1.5x");
    }
}
