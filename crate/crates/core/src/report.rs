//! Matrix dumps and static SVG plots.

use nalgebra::DMatrix;

use crate::analysis::StabilityChart;
use crate::spectra::MultiplierSet;
use crate::{Error, Result};

/// Serializes a dense matrix in MatrixMarket array format (column-major).
pub fn matrix_to_market(m: &DMatrix<f64>) -> String {
    let mut out = String::from("%%MatrixMarket matrix array real general\n");
    out.push_str(&format!("{} {}\n", m.nrows(), m.ncols()));
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out.push_str(&format!("{:e}\n", m[(i, j)]));
        }
    }
    out
}

/// Parses a MatrixMarket array-format dump written by [`matrix_to_market`].
pub fn matrix_from_market(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('%') && !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty matrix file".into()))?;
    let mut dims = header.split_whitespace();
    let parse_dim = |s: Option<&str>| -> Result<usize> {
        s.and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Config(format!("bad matrix header `{header}`")))
    };
    let rows = parse_dim(dims.next())?;
    let cols = parse_dim(dims.next())?;
    let mut values = Vec::with_capacity(rows * cols);
    for line in lines {
        values.push(
            line.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad matrix entry `{line}`")))?,
        );
    }
    if values.len() != rows * cols {
        return Err(Error::Config(format!(
            "matrix file holds {} entries, expected {}",
            values.len(),
            rows * cols
        )));
    }
    Ok(DMatrix::from_vec(rows, cols, values))
}

const SVG_SIZE: f64 = 480.0;
const SVG_MARGIN: f64 = 40.0;

struct Frame {
    x_min: f64,
    x_span: f64,
    y_min: f64,
    y_span: f64,
}

impl Frame {
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let px = SVG_MARGIN + (x - self.x_min) / self.x_span * (SVG_SIZE - 2.0 * SVG_MARGIN);
        let py =
            SVG_SIZE - SVG_MARGIN - (y - self.y_min) / self.y_span * (SVG_SIZE - 2.0 * SVG_MARGIN);
        (px, py)
    }
}

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{s}\" height=\"{s}\" \
         viewBox=\"0 0 {s} {s}\">\n<rect width=\"{s}\" height=\"{s}\" fill=\"white\"/>\n\
         <text x=\"{m}\" y=\"20\" font-family=\"monospace\" font-size=\"13\">{title}</text>\n",
        s = SVG_SIZE,
        m = SVG_MARGIN,
    )
}

fn frame_box(f: &Frame) -> String {
    let (x0, y0) = f.map(f.x_min, f.y_min + f.y_span);
    let (x1, y1) = f.map(f.x_min + f.x_span, f.y_min);
    format!(
        "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" \
         fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n\
         <text x=\"{x0:.2}\" y=\"{ly:.2}\" font-family=\"monospace\" font-size=\"11\">{xa:.3}</text>\n\
         <text x=\"{lx:.2}\" y=\"{ly:.2}\" font-family=\"monospace\" font-size=\"11\" text-anchor=\"end\">{xb:.3}</text>\n",
        w = x1 - x0,
        h = y1 - y0,
        ly = y1 + 16.0,
        lx = x1,
        xa = f.x_min,
        xb = f.x_min + f.x_span,
    )
}

/// Scatter plot of the multipliers in the complex plane with the unit
/// circle overlaid.
pub fn svg_multiplier_scatter(ms: &MultiplierSet, title: &str) -> String {
    let reach = ms
        .multipliers
        .iter()
        .fold(1.0f64, |m, v| m.max(v.re.abs()).max(v.im.abs()))
        * 1.15;
    let frame = Frame {
        x_min: -reach,
        x_span: 2.0 * reach,
        y_min: -reach,
        y_span: 2.0 * reach,
    };
    let mut out = svg_open(title);
    out.push_str(&frame_box(&frame));
    let (cx, cy) = frame.map(0.0, 0.0);
    let (rx, _) = frame.map(1.0, 0.0);
    out.push_str(&format!(
        "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"none\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n",
        r = rx - cx,
    ));
    for m in &ms.multipliers {
        let (px, py) = frame.map(m.re, m.im);
        out.push_str(&format!(
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3\" fill=\"#1f5fbf\" fill-opacity=\"0.8\"/>\n"
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Chart polylines over the parameter rectangle.
pub fn svg_chart(chart: &StabilityChart, title: &str) -> String {
    let [a_min, a_max, b_min, b_max] = chart.region;
    let frame = Frame {
        x_min: a_min,
        x_span: a_max - a_min,
        y_min: b_min,
        y_span: b_max - b_min,
    };
    let mut out = svg_open(title);
    out.push_str(&frame_box(&frame));
    for line in &chart.polylines {
        let pts: Vec<String> = line
            .iter()
            .map(|&(a, b)| {
                let (px, py) = frame.map(a, b);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#bf1f1f\" stroke-width=\"1.5\"/>\n",
            pts.join(" ")
        ));
    }
    out.push_str("</svg>\n");
    out
}
