//! Static SVG scatter plots of a front projected on two objectives.

use std::fmt::Write;

use cmgd::pareto::ParetoFront;

use crate::CliError;

pub const WIDTH: f64 = 640.0;
pub const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 60.0;

/// Data-to-pixel transform for one plot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
}

impl Frame {
    fn fit(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        Self {
            x_range: padded(xs),
            y_range: padded(ys),
        }
    }

    pub fn px(&self, x: f64) -> f64 {
        let (lo, hi) = self.x_range;
        MARGIN_LEFT + (x - lo) / (hi - lo) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    pub fn py(&self, y: f64) -> f64 {
        let (lo, hi) = self.y_range;
        HEIGHT - MARGIN_BOTTOM - (y - lo) / (hi - lo) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn padded(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let span = hi - lo;
    if span > 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
        (lo - 0.05 * span, hi + 0.05 * span)
    } else {
        let half = 0.1 * lo.abs().max(1e-3);
        (lo - half, hi + half)
    }
}

/// About five round tick values covering `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|k| k as f64 * step).collect(), step)
}

fn label(v: f64, step: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if step < 1e-3 || v.abs() >= 1e5 {
        return format!("{v:.2e}");
    }
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

/// Objectives `i` and `j` (0-based) of `front` as a standalone SVG, with an
/// optional reference curve drawn as a polyline.
pub fn emit_plot(
    front: &ParetoFront,
    (i, j): (usize, usize),
    overlay: Option<&[(f64, f64)]>,
) -> Result<String, CliError> {
    if front.is_empty() {
        return Err(CliError::Config("cannot plot an empty front".into()));
    }
    let k = front.num_objectives().unwrap_or(0);
    if i >= k || j >= k {
        return Err(CliError::Config(format!(
            "objective pair ({}, {}) out of range for {k} objectives",
            i + 1,
            j + 1
        )));
    }
    let pts: Vec<(f64, f64)> = front
        .entries()
        .iter()
        .map(|e| (e.objectives[i], e.objectives[j]))
        .collect();
    let frame = plot_frame(front, (i, j), overlay);
    Ok(render(&frame, &pts, overlay, (i, j)))
}

/// Transform used by [`emit_plot`] for the same inputs.
pub fn plot_frame(
    front: &ParetoFront,
    (i, j): (usize, usize),
    overlay: Option<&[(f64, f64)]>,
) -> Frame {
    let pts = front
        .entries()
        .iter()
        .map(|e| (e.objectives[i], e.objectives[j]));
    let curve = overlay.unwrap_or(&[]).iter().copied();
    let all = pts.chain(curve);
    Frame::fit(all.clone().map(|p| p.0), all.map(|p| p.1))
}

fn render(
    frame: &Frame,
    pts: &[(f64, f64)],
    overlay: Option<&[(f64, f64)]>,
    (i, j): (usize, usize),
) -> String {
    let mut s = String::new();
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<path class="axes" d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="black"/>"#
    )
    .unwrap();

    let (xt, xstep) = ticks(frame.x_range.0, frame.x_range.1);
    for v in xt {
        let x = frame.px(v);
        writeln!(
            s,
            r#"<line class="tick" x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 20.0,
            label(v, xstep)
        )
        .unwrap();
    }
    let (yt, ystep) = ticks(frame.y_range.0, frame.y_range.1);
    for v in yt {
        let y = frame.py(v);
        writeln!(
            s,
            r#"<line class="tick" x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0,
            label(v, ystep)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">f{}</text>"#,
        0.5 * (x0 + x1),
        HEIGHT - 15.0,
        i + 1
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">f{}</text>"#,
        0.5 * (y0 + y1),
        0.5 * (y0 + y1),
        j + 1
    )
    .unwrap();

    if let Some(curve) = overlay {
        let points: Vec<String> = curve
            .iter()
            .map(|&(a, b)| format!("{:.2},{:.2}", frame.px(a), frame.py(b)))
            .collect();
        writeln!(
            s,
            r#"<polyline class="reference" points="{}" fill="none" stroke="gray"/>"#,
            points.join(" ")
        )
        .unwrap();
    }
    for &(a, b) in pts {
        writeln!(
            s,
            r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#,
            frame.px(a),
            frame.py(b)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use cmgd::pareto::{non_dominated_filter, FrontEntry};

    fn front(points: &[[f64; 2]]) -> ParetoFront {
        non_dominated_filter(
            points
                .iter()
                .enumerate()
                .map(|(k, p)| FrontEntry {
                    decision: vec![],
                    objectives: p.to_vec(),
                    origin: k,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_point_has_one_marker() {
        let svg = emit_plot(&front(&[[1.0, 2.0]]), (0, 1), None).unwrap();
        assert_eq!(svg.matches("class=\"marker\"").count(), 1);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn empty_front_is_an_error() {
        assert!(emit_plot(&ParetoFront::default(), (0, 1), None).is_err());
    }

    #[test]
    fn output_is_deterministic() {
        let f = front(&[[0.1, 0.9], [0.5, 0.4], [0.8, 0.1]]);
        assert_eq!(
            emit_plot(&f, (0, 1), None).unwrap(),
            emit_plot(&f, (0, 1), None).unwrap()
        );
    }

    #[test]
    fn ticks_are_round() {
        let (t, step) = ticks(0.03, 0.97);
        assert_eq!(step, 0.2);
        assert_eq!(t.len(), 4);
        assert_eq!(label(t[0], step), "0.2");
    }
}
