//! Interval bar chart: one vertical bar per off-diagonal pair `(i, j)`, `i < j`,
//! in lexicographic order, with an optional dot at the true value.

use std::fmt::Write as _;
use std::path::Path;

use qbgraph::{GraphEstimate, PrecisionMatrix};

use crate::error::{CliError, Result};

const STEP: f64 = 4.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 380.0;
const HEIGHT: f64 = 400.0;

fn value_range(estimate: &GraphEstimate, truth: Option<&PrecisionMatrix>) -> (f64, f64) {
    let p = estimate.theta_hat.p();
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for i in 0..p {
        for j in i + 1..p {
            let iv = estimate.intervals[i][j];
            lo = lo.min(iv.lower);
            hi = hi.max(iv.upper);
            if let Some(t) = truth {
                lo = lo.min(t.get(i, j));
                hi = hi.max(t.get(i, j));
            }
        }
    }
    if hi - lo <= 0.0 {
        return (-1.0, 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// SVG document for `estimate`, with `comment` embedded verbatim when given.
pub fn interval_svg(
    estimate: &GraphEstimate,
    truth: Option<&PrecisionMatrix>,
    comment: Option<&str>,
) -> String {
    let p = estimate.theta_hat.p();
    let pairs = p * (p - 1) / 2;
    let width = LEFT + STEP * pairs.max(1) as f64 + RIGHT;
    let (lo, hi) = value_range(estimate, truth);
    let y = |v: f64| TOP + (hi - v) / (hi - lo) * (BOTTOM - TOP);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{HEIGHT:.0}" viewBox="0 0 {width:.0} {HEIGHT:.0}">"#
    );
    if let Some(c) = comment {
        let _ = writeln!(s, "<!-- {} -->", c.replace("--", "- -"));
    }
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{width:.0}" height="{HEIGHT:.0}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{BOTTOM:.2}" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r##"<line class="zero" x1="{LEFT:.2}" y1="{z:.2}" x2="{x2:.2}" y2="{z:.2}" stroke="#999999" stroke-dasharray="4 2"/>"##,
        z = y(0.0),
        x2 = width - RIGHT
    );
    for v in [lo, 0.0, hi] {
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="10" text-anchor="end" font-family="sans-serif">{v:.3}</text>"#,
            x = LEFT - 4.0,
            y = y(v) + 3.0
        );
    }
    let mut k = 0;
    for i in 0..p {
        for j in i + 1..p {
            let x = LEFT + STEP * (k as f64 + 0.5);
            let iv = estimate.intervals[i][j];
            let _ = writeln!(
                s,
                r##"<line class="bar" data-pair="{i},{j}" x1="{x:.2}" y1="{y1:.2}" x2="{x:.2}" y2="{y2:.2}" stroke="#1f4e79" stroke-width="2"/>"##,
                y1 = y(iv.upper),
                y2 = y(iv.lower)
            );
            if let Some(t) = truth {
                let _ = writeln!(
                    s,
                    r##"<circle class="truth" cx="{x:.2}" cy="{cy:.2}" r="1.8" fill="#c0392b"/>"##,
                    cy = y(t.get(i, j))
                );
            }
            k += 1;
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn render_interval_svg(
    estimate: &GraphEstimate,
    truth: Option<&PrecisionMatrix>,
    comment: Option<&str>,
    path: &Path,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, interval_svg(estimate, truth, comment)).map_err(|e| CliError::io(path, e))
}
