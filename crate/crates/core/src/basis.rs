//! Collocation node families, barycentric Lagrange interpolation, exact
//! sub-interval integration of interpolants and quadrature rules.
//!
//! All node sets live on the reference interval `[0, 1]` and always include
//! both endpoints; evaluation on an arbitrary interval `[a, b]` maps the
//! nodes affinely. Barycentric weights are invariant under that map up to a
//! common scale, which the barycentric formula cancels.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Families of collocation nodes on `[0, 1]`, endpoints always included.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeFamily {
    /// Chebyshev extrema (Chebyshev points of the second kind). Default.
    #[serde(rename = "cheb-extrema")]
    ChebExtrema,
    /// Uniformly spaced points.
    #[serde(rename = "equidistant")]
    Equidistant,
    /// Interior Chebyshev zeros with the endpoints prepended/appended.
    #[serde(rename = "cheb-zeros-plus-endpoints")]
    ChebZerosPlusEndpoints,
    /// Interior Gauss-Legendre zeros with the endpoints prepended/appended.
    #[serde(rename = "legendre-zeros-plus-endpoints")]
    LegendreZerosPlusEndpoints,
}

impl NodeFamily {
    pub fn name(&self) -> &'static str {
        match self {
            NodeFamily::ChebExtrema => "cheb-extrema",
            NodeFamily::Equidistant => "equidistant",
            NodeFamily::ChebZerosPlusEndpoints => "cheb-zeros-plus-endpoints",
            NodeFamily::LegendreZerosPlusEndpoints => "legendre-zeros-plus-endpoints",
        }
    }
}

impl std::str::FromStr for NodeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cheb-extrema" => Ok(NodeFamily::ChebExtrema),
            "equidistant" => Ok(NodeFamily::Equidistant),
            "cheb-zeros-plus-endpoints" => Ok(NodeFamily::ChebZerosPlusEndpoints),
            "legendre-zeros-plus-endpoints" => Ok(NodeFamily::LegendreZerosPlusEndpoints),
            other => Err(Error::Config(format!("unknown node family `{other}`"))),
        }
    }
}

/// A degree-`M` collocation node set on `[0, 1]` with barycentric weights.
///
/// Invariants: `nodes[0] = 0`, `nodes[M] = 1`, nodes strictly increasing,
/// barycentric weights alternating in sign and normalized to unit maximum
/// magnitude.
#[derive(Clone, Debug)]
pub struct NodeSet {
    family: NodeFamily,
    nodes: Vec<f64>,
    bary_weights: Vec<f64>,
    // Gauss-Legendre rule on [-1, 1] of the minimal order that integrates
    // degree-M interpolants exactly; used by `integ_row`.
    gl_nodes: Vec<f64>,
    gl_weights: Vec<f64>,
}

impl NodeSet {
    /// Builds the node set for `family` with polynomial degree `degree >= 1`.
    pub fn new(family: NodeFamily, degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidDegree);
        }
        let m = degree;
        let nodes = match family {
            NodeFamily::ChebExtrema => (0..=m)
                .map(|j| (1.0 - (j as f64 * std::f64::consts::PI / m as f64).cos()) / 2.0)
                .collect::<Vec<_>>(),
            NodeFamily::Equidistant => (0..=m).map(|j| j as f64 / m as f64).collect(),
            NodeFamily::ChebZerosPlusEndpoints => {
                let mut v = Vec::with_capacity(m + 1);
                v.push(0.0);
                // zeros of T_{m-1}, mapped to (0, 1) in ascending order
                for i in 1..m {
                    let x = ((2 * i - 1) as f64 * std::f64::consts::PI
                        / (2 * (m - 1)) as f64)
                        .cos();
                    v.push((1.0 - x) / 2.0);
                }
                v.push(1.0);
                v
            }
            NodeFamily::LegendreZerosPlusEndpoints => {
                let mut v = Vec::with_capacity(m + 1);
                v.push(0.0);
                if m >= 2 {
                    let (xs, _) = gauss_legendre(m - 1);
                    for x in xs {
                        v.push((x + 1.0) / 2.0);
                    }
                }
                v.push(1.0);
                v
            }
        };
        let mut nodes = nodes;
        nodes[0] = 0.0;
        nodes[m] = 1.0;

        let mut bary_weights = match family {
            // Closed form for Chebyshev extrema.
            NodeFamily::ChebExtrema => (0..=m)
                .map(|j| {
                    let half = if j == 0 || j == m { 0.5 } else { 1.0 };
                    half * if j % 2 == 0 { 1.0 } else { -1.0 }
                })
                .collect(),
            _ => product_weights(&nodes),
        };
        let scale = bary_weights.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        bary_weights.iter_mut().for_each(|v| *v /= scale);

        let k = m / 2 + 1; // ceil((M+1)/2)
        let (gl_nodes, gl_weights) = gauss_legendre(k);

        Ok(NodeSet {
            family,
            nodes,
            bary_weights,
            gl_nodes,
            gl_weights,
        })
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    /// Polynomial degree `M` (the set has `M + 1` nodes).
    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Reference nodes in `[0, 1]`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn bary_weights(&self) -> &[f64] {
        &self.bary_weights
    }

    /// Evaluates at `x` the interpolant of `values` on the nodes mapped to
    /// `[a, b]`, with the second barycentric formula. An `x` within rounding
    /// distance of a node returns the nodal value exactly.
    pub fn interpolate(&self, values: &[f64], a: f64, b: f64, x: f64) -> f64 {
        debug_assert_eq!(values.len(), self.nodes.len());
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, &c) in self.nodes.iter().enumerate() {
            let xj = a + (b - a) * c;
            if near_node(x, xj) {
                return values[j];
            }
            let d = self.bary_weights[j] / (x - xj);
            num += d * values[j];
            den += d;
        }
        num / den
    }

    /// The linear-functional form of [`NodeSet::interpolate`]: returns the
    /// row `r` with `interpolant(x) = sum_j r[j] * values[j]`. At a node the
    /// row is the corresponding unit coordinate row.
    pub fn eval_row(&self, a: f64, b: f64, x: f64) -> Vec<f64> {
        let n = self.nodes.len();
        let mut row = vec![0.0; n];
        let mut den = 0.0;
        for (j, &c) in self.nodes.iter().enumerate() {
            let xj = a + (b - a) * c;
            if near_node(x, xj) {
                row.iter_mut().for_each(|v| *v = 0.0);
                row[j] = 1.0;
                return row;
            }
            let d = self.bary_weights[j] / (x - xj);
            row[j] = d;
            den += d;
        }
        row.iter_mut().for_each(|v| *v /= den);
        row
    }

    /// Returns the row `r` with `int_a^t interpolant = sum_j r[j] * values[j]`,
    /// exact for interpolants of degree up to `M`. The integral is carried
    /// out by a Gauss-Legendre rule on `[a, t]` of order `ceil((M+1)/2)`.
    pub fn integ_row(&self, a: f64, b: f64, t: f64) -> Result<Vec<f64>> {
        let slack = 16.0 * f64::EPSILON * (b - a).abs().max(1.0);
        if t < a - slack || t > b + slack {
            return Err(Error::Domain(format!(
                "integration endpoint {t} outside piece [{a}, {b}]"
            )));
        }
        let mid = 0.5 * (a + t);
        let half = 0.5 * (t - a);
        let n = self.nodes.len();
        let mut row = vec![0.0; n];
        for (&xg, &wg) in self.gl_nodes.iter().zip(&self.gl_weights) {
            let x = mid + half * xg;
            let er = self.eval_row(a, b, x);
            let w = wg * half;
            for j in 0..n {
                row[j] += w * er[j];
            }
        }
        Ok(row)
    }
}

fn near_node(x: f64, xj: f64) -> bool {
    (x - xj).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0)
}

/// Barycentric weights by the product formula, normalized to unit maximum
/// magnitude so that large degrees do not overflow.
fn product_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for j in 0..n {
        let mut p = 1.0;
        for i in 0..n {
            if i != j {
                p *= nodes[j] - nodes[i];
            }
        }
        w[j] = 1.0 / p;
    }
    let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    w.iter_mut().for_each(|v| *v /= scale);
    w
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi-style initial guess for the i-th root (descending order).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence: p holds P_n(x), dp its derivative.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            dp = if n == 1 {
                1.0
            } else {
                n as f64 * (x * p1 - p0) / (x * x - 1.0)
            };
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Clenshaw-Curtis nodes and weights for `n >= 2` points on `[a, b]`:
/// the interpolatory rule at Chebyshev extrema, exact for polynomials of
/// degree `n - 1`.
pub fn clenshaw_curtis_rule(n: usize, a: f64, b: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 2 {
        return Err(Error::Domain(
            "Clenshaw-Curtis rule needs at least 2 nodes".into(),
        ));
    }
    let set = NodeSet::new(NodeFamily::ChebExtrema, n - 1)?;
    let nodes = set.nodes().iter().map(|&c| a + (b - a) * c).collect();
    let weights = set.integ_row(a, b, b)?;
    Ok((nodes, weights))
}

/// Clenshaw-Curtis approximation of `int_a^b f` on `n` Chebyshev extrema.
pub fn clenshaw_curtis<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (xs, ws) = clenshaw_curtis_rule(n, a, b)?;
    Ok(xs.iter().zip(&ws).map(|(&x, &w)| w * f(x)).sum())
}

/// Choice of quadrature for the distributed-delay kernel integrals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureRule {
    /// Interpolatory rule at `order` Chebyshev extrema.
    ClenshawCurtis { order: usize },
    /// Bisection-based adaptive Simpson rule with an absolute tolerance.
    Adaptive { tolerance: f64 },
}

const ADAPTIVE_MAX_DEPTH: usize = 48;

/// Integrates `f` over `[a, b]` with the given rule.
pub fn quad<F: FnMut(f64) -> f64>(rule: QuadratureRule, mut f: F, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    match rule {
        QuadratureRule::ClenshawCurtis { order } => clenshaw_curtis(f, a, b, order),
        QuadratureRule::Adaptive { tolerance } => {
            let fa = f(a);
            let fb = f(b);
            let m = 0.5 * (a + b);
            let fm = f(m);
            let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
            adaptive_step(&mut f, a, b, fa, fm, fb, whole, tolerance, ADAPTIVE_MAX_DEPTH)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: FnMut(f64) -> f64>(
    f: &mut F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::QuadratureFailure {
            a,
            b,
            max_depth: ADAPTIVE_MAX_DEPTH,
        });
    }
    let lv = adaptive_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?;
    let rv = adaptive_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?;
    Ok(lv + rv)
}
