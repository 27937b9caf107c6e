//! Stability verdicts, bifurcation location by scalar root-finding and
//! stability-chart tracing.

use num_complex::Complex64;

use crate::discretize::{assemble, MethodOptions};
use crate::model::DelaySystem;
use crate::spectra::{multipliers_standard, trivial_index, MultiplierSet};
use crate::{Error, Result};

/// `max |mu| - 1` over the computed multipliers: negative means every
/// multiplier is inside the unit circle and the equilibrium or periodic
/// solution is asymptotically stable.
pub fn stability_test(system: &DelaySystem, options: &MethodOptions) -> Result<f64> {
    let ms = multipliers_standard(&assemble(system, options)?)?;
    Ok(ms.max_magnitude() - 1.0)
}

/// The product `prod (|mu| - 1)` over all multipliers except the trivial
/// one (the one closest to `1`). A sign change locates a single real
/// multiplier crossing the unit circle; a conjugate pair crossing does not
/// change the sign and is not detected by this test.
pub fn nontrivial_test(system: &DelaySystem, options: &MethodOptions) -> Result<f64> {
    let ms = multipliers_standard(&assemble(system, options)?)?;
    Ok(nontrivial_product(&ms))
}

/// The test-function arithmetic behind [`nontrivial_test`]; the empty
/// product is `1`.
pub fn nontrivial_product(ms: &MultiplierSet) -> f64 {
    if ms.multipliers.is_empty() {
        return 1.0;
    }
    let skip = trivial_index(ms);
    ms.multipliers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != skip)
        .map(|(_, m)| m.norm() - 1.0)
        .product()
}

/// How the root search of [`find_bifurcation`] is seeded.
#[derive(Clone, Copy, Debug)]
pub enum BracketOrStart {
    /// An interval on which the test function changes sign.
    Bracket(f64, f64),
    /// A starting point; an expanding search looks for a sign change first.
    Start(f64),
}

const EXPANSION_BUDGET: usize = 60;

/// Locates a zero of a scalar test function by Brent's method.
///
/// The function may return NaN to signal that a parameter value is outside
/// its domain (for instance when no periodic solution exists there); the
/// expanding bracket search then bisects towards the domain edge. If the
/// sign change turns out to lie just beyond the edge - the test function
/// tends to zero at the boundary without crossing inside - the crossing is
/// estimated by low-order extrapolation of the boundary samples. In that
/// case the returned point may lie marginally outside the evaluable domain
/// and no sign flip across it can be verified.
pub fn find_bifurcation<F: FnMut(f64) -> f64>(
    mut test: F,
    spec: BracketOrStart,
    tol: f64,
) -> Result<f64> {
    match spec {
        BracketOrStart::Bracket(a, b) => {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            let fa = test(a);
            let fb = test(b);
            if !fa.is_finite() || !fb.is_finite() || fa * fb > 0.0 {
                return Err(Error::NoBracket);
            }
            brent(&mut test, a, b, fa, fb, tol)
        }
        BracketOrStart::Start(x0) => expand_from_start(&mut test, x0, tol),
    }
}

fn expand_from_start<F: FnMut(f64) -> f64>(test: &mut F, x0: f64, tol: f64) -> Result<f64> {
    let f0 = test(x0);
    if !f0.is_finite() {
        return Err(Error::NoBracket);
    }
    if f0 == 0.0 {
        return Ok(x0);
    }
    let scale = x0.abs().max(1.0);
    let mut step = scale / 50.0;
    // per side: the outermost point evaluated so far and its value, plus a
    // flag set once the domain edge has been located on that side
    let mut lo = (x0, f0);
    let mut hi = (x0, f0);
    let mut lo_blocked = false;
    let mut hi_blocked = false;

    for k in 0..EXPANSION_BUDGET {
        if lo_blocked && hi_blocked {
            break;
        }
        let go_low = k % 2 == 0;
        if !go_low {
            step *= std::f64::consts::SQRT_2;
        }
        if (go_low && lo_blocked) || (!go_low && hi_blocked) {
            continue;
        }
        let probe = if go_low { x0 - step } else { x0 + step };
        let fp = test(probe);
        if !fp.is_finite() {
            // bisect between the last finite point on this side and the
            // failed probe to find the innermost evaluable point
            let anchor = if go_low { lo.0 } else { hi.0 };
            let (edge, f_edge) = bisect_domain_edge(test, anchor, probe);
            if go_low {
                lo = (edge, f_edge);
                lo_blocked = true;
            } else {
                hi = (edge, f_edge);
                hi_blocked = true;
            }
            if f_edge.is_finite() && f_edge * f0 < 0.0 {
                let (a, b, fa, fb) = if go_low {
                    (edge, x0, f_edge, f0)
                } else {
                    (x0, edge, f0, f_edge)
                };
                return brent(test, a, b, fa, fb, tol);
            }
            continue;
        }
        if fp * f0 < 0.0 {
            let (a, b, fa, fb) = if go_low {
                (probe, lo.0, fp, lo.1)
            } else {
                (hi.0, probe, hi.1, fp)
            };
            return brent(test, a, b, fa, fb, tol);
        }
        if go_low {
            lo = (probe, fp);
        } else {
            hi = (probe, fp);
        }
    }

    // no sign change inside the evaluable domain; if the function tends to
    // zero at a domain edge, the crossing sits just beyond it
    for (edge, blocked, dir) in [(lo, lo_blocked, 1.0), (hi, hi_blocked, -1.0)] {
        if !blocked || !edge.1.is_finite() {
            continue;
        }
        if let Some(root) = extrapolate_boundary_root(test, edge.0, edge.1, dir, f0) {
            return Ok(root);
        }
    }
    Err(Error::NoBracket)
}

/// Bisects between a finite point and a NaN probe; returns the innermost
/// finite point and its value.
fn bisect_domain_edge<F: FnMut(f64) -> f64>(
    test: &mut F,
    mut finite: f64,
    mut nan: f64,
) -> (f64, f64) {
    let mut f_finite = f64::NAN;
    for _ in 0..80 {
        let mid = 0.5 * (finite + nan);
        if mid == finite || mid == nan {
            break;
        }
        let fm = test(mid);
        if fm.is_finite() {
            finite = mid;
            f_finite = fm;
        } else {
            nan = mid;
        }
    }
    if !f_finite.is_finite() {
        f_finite = test(finite);
    }
    (finite, f_finite)
}

/// Fits a quadratic through three samples marching inward from the domain
/// edge and returns its root just beyond the edge, provided the function
/// has decayed on the way there. `dir` is `+1` when the domain continues to
/// the right of the edge.
fn extrapolate_boundary_root<F: FnMut(f64) -> f64>(
    test: &mut F,
    edge: f64,
    f_edge: f64,
    dir: f64,
    f_start: f64,
) -> Option<f64> {
    if f_edge == 0.0 {
        return Some(edge);
    }
    if f_edge.abs() > 1e-2 * f_start.abs() {
        return None;
    }
    let h = dir * edge.abs().max(1.0) * 1e-5;
    let (f1, f2) = (test(edge + h), test(edge + 2.0 * h));
    if !f1.is_finite() || !f2.is_finite() {
        return None;
    }
    let d1 = (f1 - f_edge) / h;
    let d2 = ((f2 - f1) / h - d1) / (2.0 * h);
    // p(s) = f_edge + d1 s + d2 s (s - h), s measured from the edge
    let (a, b, c) = (d2, d1 - d2 * h, f_edge);
    let root_s = if a.abs() * h.abs() * 10.0 < b.abs() {
        -c / b
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        let r1 = (-b + disc.sqrt()) / (2.0 * a);
        let r2 = (-b - disc.sqrt()) / (2.0 * a);
        if r1.abs() < r2.abs() {
            r1
        } else {
            r2
        }
    };
    // accept only a root marginally outside the evaluable domain
    if root_s * dir > 0.0 || root_s.abs() > 10.0 * h.abs() {
        return None;
    }
    Some(edge + root_s)
}

/// Brent's method on a bracketing interval.
fn brent<F: FnMut(f64) -> f64>(
    test: &mut F,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    tol: f64,
) -> Result<f64> {
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(Error::NoBracket);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.abs() > fc.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol * b.abs().max(1.0);
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1 * xm.signum() };
        fb = test(b);
        if !fb.is_finite() {
            return Err(Error::Numeric(format!(
                "test function not finite at {b} during root refinement"
            )));
        }
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
    }
    Err(Error::Numeric("Brent iteration did not converge".into()))
}

// ---------------------------------------------------------------------------
// Stability charts
// ---------------------------------------------------------------------------

/// A level-set chart of a two-parameter scalar test function.
#[derive(Clone, Debug)]
pub struct StabilityChart {
    /// `[a_min, a_max, b_min, b_max]`
    pub region: [f64; 4],
    pub grid_step: f64,
    pub level: f64,
    pub polylines: Vec<Vec<(f64, f64)>>,
}

impl StabilityChart {
    /// CSV export: `polyline,a,b` with one row per vertex.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("polyline,a,b\n");
        for (k, line) in self.polylines.iter().enumerate() {
            for (a, b) in line {
                out.push_str(&format!("{k},{a},{b}\n"));
            }
        }
        out
    }
}

/// Traces the `level` set of `test` over a rectangular region by marching
/// squares with linear interpolation along cell edges; ambiguous (saddle)
/// cells are disambiguated by an extra sample at the cell center.
pub fn stability_chart<F: FnMut(f64, f64) -> Result<f64>>(
    mut test: F,
    region: [f64; 4],
    grid_step: f64,
    level: f64,
) -> Result<StabilityChart> {
    let [a_min, a_max, b_min, b_max] = region;
    if !(grid_step > 0.0) {
        return Err(Error::Config(format!("grid step {grid_step} must be positive")));
    }
    if a_min >= a_max || b_min >= b_max {
        return Err(Error::Config(format!(
            "empty chart region [{a_min}, {a_max}] x [{b_min}, {b_max}]"
        )));
    }
    let nx = (((a_max - a_min) / grid_step).round() as usize).max(1);
    let ny = (((b_max - b_min) / grid_step).round() as usize).max(1);
    let ax = |i: usize| a_min + (a_max - a_min) * i as f64 / nx as f64;
    let by = |j: usize| b_min + (b_max - b_min) * j as f64 / ny as f64;

    let mut values = vec![0.0; (nx + 1) * (ny + 1)];
    for j in 0..=ny {
        for i in 0..=nx {
            let v = test(ax(i), by(j))?;
            if !v.is_finite() {
                return Err(Error::Domain(format!(
                    "test function not finite at ({}, {})",
                    ax(i),
                    by(j)
                )));
            }
            values[j * (nx + 1) + i] = v - level;
        }
    }

    let mut segments: Vec<((f64, f64), (f64, f64))> = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let v00 = values[j * (nx + 1) + i];
            let v10 = values[j * (nx + 1) + i + 1];
            let v01 = values[(j + 1) * (nx + 1) + i];
            let v11 = values[(j + 1) * (nx + 1) + i + 1];
            let (x0, x1, y0, y1) = (ax(i), ax(i + 1), by(j), by(j + 1));

            // linear interpolation of the zero on each crossing edge
            let cross = |va: f64, vb: f64, pa: f64, pb: f64| pa + (pb - pa) * va / (va - vb);
            let bottom = (v00 * v10 < 0.0).then(|| (cross(v00, v10, x0, x1), y0));
            let top = (v01 * v11 < 0.0).then(|| (cross(v01, v11, x0, x1), y1));
            let left = (v00 * v01 < 0.0).then(|| (x0, cross(v00, v01, y0, y1)));
            let right = (v10 * v11 < 0.0).then(|| (x1, cross(v10, v11, y0, y1)));

            let pts: Vec<(f64, f64)> =
                [bottom, right, top, left].into_iter().flatten().collect();
            match pts.len() {
                2 => segments.push((pts[0], pts[1])),
                4 => {
                    // saddle: the center sample decides the pairing
                    let vc = test(0.5 * (x0 + x1), 0.5 * (y0 + y1))? - level;
                    if vc * v00 > 0.0 {
                        segments.push((pts[0], pts[1])); // bottom-right
                        segments.push((pts[2], pts[3])); // top-left
                    } else {
                        segments.push((pts[3], pts[0])); // left-bottom
                        segments.push((pts[1], pts[2])); // right-top
                    }
                }
                _ => {}
            }
        }
    }

    let h = ((a_max - a_min) / nx as f64).max((b_max - b_min) / ny as f64);
    Ok(StabilityChart {
        region,
        grid_step,
        level,
        polylines: chain_segments(segments, 1e-9 * h.max(1.0)),
    })
}

/// Joins raw marching-squares segments into polylines by matching endpoints.
fn chain_segments(segments: Vec<((f64, f64), (f64, f64))>, tol: f64) -> Vec<Vec<(f64, f64)>> {
    use std::collections::HashMap;
    let key = |p: (f64, f64)| -> (i64, i64) {
        ((p.0 / tol).round() as i64, (p.1 / tol).round() as i64)
    };
    let mut adjacency: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (idx, (p, q)) in segments.iter().enumerate() {
        adjacency.entry(key(*p)).or_default().push(idx);
        adjacency.entry(key(*q)).or_default().push(idx);
    }
    let mut used = vec![false; segments.len()];
    let mut polylines = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (p, q) = segments[start];
        let mut line = vec![p, q];
        // grow from the tail, flip, grow from the other end
        for pass in 0..2 {
            loop {
                let tail = *line.last().unwrap();
                let Some(cands) = adjacency.get(&key(tail)) else { break };
                let Some(&next) = cands.iter().find(|&&i| !used[i]) else { break };
                used[next] = true;
                let (a, b) = segments[next];
                let next_pt = if key(a) == key(tail) { b } else { a };
                line.push(next_pt);
            }
            if pass == 0 {
                line.reverse();
            }
        }
        polylines.push(line);
    }
    polylines
}

// ---------------------------------------------------------------------------
// Convergence studies
// ---------------------------------------------------------------------------

/// Reference values for a convergence study.
#[derive(Clone, Debug)]
pub enum ConvergenceReference {
    /// Known dominant multipliers, sorted by descending magnitude.
    Analytic(Vec<Complex64>),
    /// Compare against the run at the largest degree in the list.
    FinestDegree,
}

#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub degree: usize,
    /// Per-reference-multiplier absolute error, magnitude-sorted pairing.
    pub errors: Vec<f64>,
}

/// Dominant-multiplier errors against a reference for each degree in
/// `degrees` (strictly increasing).
pub fn convergence_study(
    system: &DelaySystem,
    options: &MethodOptions,
    degrees: &[usize],
    reference: &ConvergenceReference,
) -> Result<Vec<ConvergenceRow>> {
    if degrees.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "convergence degrees must be strictly increasing".into(),
        ));
    }
    let run = |m: usize| -> Result<Vec<Complex64>> {
        let mut opts = options.clone();
        opts.degree = m;
        Ok(multipliers_standard(&assemble(system, &opts)?)?.multipliers)
    };
    let reference_values: Vec<Complex64> = match reference {
        ConvergenceReference::Analytic(v) => v.clone(),
        ConvergenceReference::FinestDegree => {
            let finest = *degrees
                .last()
                .ok_or_else(|| Error::Config("convergence study needs at least one degree".into()))?;
            run(finest)?.into_iter().take(4).collect()
        }
    };
    let mut rows = Vec::with_capacity(degrees.len());
    for &m in degrees {
        let mu = run(m)?;
        let errors = reference_values
            .iter()
            .enumerate()
            .map(|(i, r)| mu.get(i).map_or(f64::INFINITY, |m| (m - r).norm()))
            .collect();
        rows.push(ConvergenceRow { degree: m, errors });
    }
    Ok(rows)
}

/// CSV export of a convergence table: `degree,err1,err2,...`.
pub fn convergence_to_csv(rows: &[ConvergenceRow]) -> String {
    let width = rows.iter().map(|r| r.errors.len()).max().unwrap_or(0);
    let mut out = String::from("degree");
    for k in 1..=width {
        out.push_str(&format!(",err{k}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.degree.to_string());
        for e in &row.errors {
            out.push_str(&format!(",{e}"));
        }
        out.push('\n');
    }
    out
}
