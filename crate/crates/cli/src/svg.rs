//! SVG rendering of points and minimal rectangles, one panel per report.

use std::fmt::Write;

use blockscan::{Dataset, DetectionReport};

const PANEL: f64 = 480.0;
const MARGIN: f64 = 24.0;
const TITLE: f64 = 20.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn of(dataset: &Dataset) -> Self {
        let fold = |v: &[f64]| {
            v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
        };
        let (x0, x1) = fold(dataset.xs());
        let (y0, y1) = fold(dataset.ys());
        let pad = |lo: f64, hi: f64| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let ((x0, x1), (y0, y1)) = (pad(x0, x1), pad(y0, y1));
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64, offset: f64) -> f64 {
        offset + MARGIN + (x - self.x0) / (self.x1 - self.x0) * PANEL
    }

    fn py(&self, y: f64) -> f64 {
        TITLE + MARGIN + (self.y1 - y) / (self.y1 - self.y0) * PANEL
    }
}

/// Label-1 points in red, label-0 in black, minimal rectangles outlined.
/// Each report gets its own panel; with no reports a single panel of points is drawn.
pub fn render(dataset: &Dataset, reports: &[DetectionReport]) -> String {
    let frame = Frame::of(dataset);
    let panels = reports.len().max(1);
    let width = panels as f64 * (PANEL + 2.0 * MARGIN);
    let height = PANEL + 2.0 * MARGIN + TITLE;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    for p in 0..panels {
        let offset = p as f64 * (PANEL + 2.0 * MARGIN);
        let _ = writeln!(s, "<g>");
        if let Some(r) = reports.get(p) {
            let name = match r.method {
                blockscan::Method::Blocked => "blocked",
                blockscan::Method::Conventional => "conventional",
            };
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="14">{name} (alpha = {})</text>"#,
                offset + MARGIN,
                TITLE,
                r.alpha
            );
        }
        let _ = writeln!(
            s,
            r#"<path d="M{:.1} {:.1}h{PANEL}v{PANEL}h-{PANEL}z" fill="none" stroke="gray"/>"#,
            offset + MARGIN,
            TITLE + MARGIN
        );
        for pt in dataset.points() {
            let color = if pt.label == 1 { "red" } else { "black" };
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="1.6" fill="{color}"/>"#,
                frame.px(pt.x, offset),
                frame.py(pt.y)
            );
        }
        if let Some(r) = reports.get(p) {
            for m in &r.minimal {
                let (x, y) = (frame.px(m.x_lo, offset), frame.py(m.y_hi));
                let w = frame.px(m.x_hi, offset) - x;
                let h = frame.py(m.y_lo) - y;
                let _ = writeln!(
                    s,
                    r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="blue" stroke-width="1.5"/>"#
                );
            }
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}
