//! Minimal standalone SVG scatter plots with an optional model overlay.
//!
//! No drawing dependencies: the output is a fixed-size document with axes,
//! tick labels, round markers for the data, and a single polyline path when a
//! fitted model is supplied. Byte-stable for fixed inputs so plots can be
//! diffed across runs.

use std::fmt::Write;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SvgError {
    #[error("nothing to plot")]
    EmptyData,
    #[error("non-finite data value ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 58.0;
const TICKS: usize = 5;
const CURVE_SAMPLES: usize = 200;

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn from_points(points: &[(f64, f64)]) -> Frame {
        let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        // pad so markers never sit on the frame; degenerate ranges get a unit
        let pad = |lo: &mut f64, hi: &mut f64| {
            let span = *hi - *lo;
            if span <= 0.0 {
                *lo -= 0.5;
                *hi += 0.5;
            } else {
                *lo -= 0.05 * span;
                *hi += 0.05 * span;
            }
        };
        pad(&mut x_min, &mut x_max);
        pad(&mut y_min, &mut y_max);
        Frame { x_min, x_max, y_min, y_max }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

/// Compact tick label: plain decimal in a sane range, scientific outside it.
fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() || s == "-" {
            "0".to_string()
        } else {
            s
        }
    } else {
        format!("{v:.2e}")
    }
}

/// Renders a scatter plot, optionally overlaying a model curve sampled across
/// the x range. Returns a complete standalone SVG document.
pub fn render_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    points: &[(f64, f64)],
    model: Option<&dyn Fn(f64) -> f64>,
) -> Result<String, SvgError> {
    if points.is_empty() {
        return Err(SvgError::EmptyData);
    }
    for &(x, y) in points {
        if !(x.is_finite() && y.is_finite()) {
            return Err(SvgError::NonFinite { x, y });
        }
    }

    let frame = Frame::from_points(points);
    let mut svg = String::new();
    let w = &mut svg;

    writeln!(
        w,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">"
    )
    .unwrap();
    writeln!(w, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>").unwrap();
    writeln!(
        w,
        "<text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        escape(title)
    )
    .unwrap();

    // axes
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
    writeln!(
        w,
        "<path d=\"M {x0:.1} {y1:.1} L {x0:.1} {y0:.1} L {x1:.1} {y0:.1}\" fill=\"none\" \
         stroke=\"black\" stroke-width=\"1\"/>"
    )
    .unwrap();

    // ticks and grid
    for i in 0..TICKS {
        let f = i as f64 / (TICKS - 1) as f64;
        let xv = frame.x_min + f * (frame.x_max - frame.x_min);
        let yv = frame.y_min + f * (frame.y_max - frame.y_min);
        let xp = frame.px(xv);
        let yp = frame.py(yv);
        writeln!(
            w,
            "<line x1=\"{xp:.1}\" y1=\"{y0:.1}\" x2=\"{xp:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
            y0 + 5.0
        )
        .unwrap();
        writeln!(
            w,
            "<text x=\"{xp:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
            y0 + 18.0,
            tick_label(xv)
        )
        .unwrap();
        writeln!(
            w,
            "<line x1=\"{:.1}\" y1=\"{yp:.1}\" x2=\"{x0:.1}\" y2=\"{yp:.1}\" stroke=\"black\"/>",
            x0 - 5.0
        )
        .unwrap();
        writeln!(
            w,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{}</text>",
            x0 - 8.0,
            yp + 4.0,
            tick_label(yv)
        )
        .unwrap();
    }

    // axis labels, units included by the caller
    writeln!(
        w,
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
        (x0 + x1) / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    )
    .unwrap();
    writeln!(
        w,
        "<text x=\"20\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 20 {:.1})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    )
    .unwrap();

    // model curve under the markers, one path element
    if let Some(f) = model {
        let mut d = String::new();
        for i in 0..CURVE_SAMPLES {
            let x = frame.x_min + (frame.x_max - frame.x_min) * i as f64 / (CURVE_SAMPLES - 1) as f64;
            let y = f(x);
            if !y.is_finite() {
                return Err(SvgError::NonFinite { x, y });
            }
            let cmd = if i == 0 { 'M' } else { 'L' };
            write!(d, "{cmd} {:.2} {:.2} ", frame.px(x), frame.py(y.clamp(frame.y_min, frame.y_max)))
                .unwrap();
        }
        writeln!(
            w,
            "<path d=\"{}\" fill=\"none\" stroke=\"#d95f02\" stroke-width=\"1.5\"/>",
            d.trim_end()
        )
        .unwrap();
    }

    for &(x, y) in points {
        writeln!(
            w,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\"/>",
            frame.px(x),
            frame.py(y)
        )
        .unwrap();
    }

    writeln!(w, "</svg>").unwrap();
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marker_count_matches_data() {
        let points: Vec<(f64, f64)> = (0..41).map(|i| (i as f64, (i as f64).sin())).collect();
        let svg = render_plot("fringe", "detuning (Hz)", "p (population)", &points, None).unwrap();
        assert_eq!(svg.matches("<circle").count(), 41);
        assert!(svg.contains("detuning (Hz)"));
        assert!(svg.contains("p (population)"));
    }

    #[test]
    fn overlay_adds_one_curve_path() {
        let points = vec![(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)];
        let f = |x: f64| (std::f64::consts::PI * x / 2.0).sin();
        let svg = render_plot("t", "x", "y", &points, Some(&f)).unwrap();
        // one axis path plus exactly one model path
        assert_eq!(svg.matches("<path").count(), 2);
    }

    #[test]
    fn empty_data_is_an_error() {
        assert!(matches!(render_plot("t", "x", "y", &[], None), Err(SvgError::EmptyData)));
    }

    #[test]
    fn output_is_deterministic() {
        let points = vec![(0.0, 0.3), (0.5, 0.9), (1.0, 0.1)];
        let a = render_plot("t", "x", "y", &points, None).unwrap();
        let b = render_plot("t", "x", "y", &points, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_vertical_range_still_renders() {
        let points = vec![(0.0, 0.5), (1.0, 0.5)];
        let svg = render_plot("flat", "x", "y", &points, None).unwrap();
        assert_eq!(svg.matches("<circle").count(), 2);
    }
}
