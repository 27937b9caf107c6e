//! Oracles shared by the integration suites: characteristic roots of
//! constant-coefficient delay equations by damped Newton iteration, and the
//! analytic stability boundary of the scalar first-order case.

use num_complex::Complex64;

/// Finds roots of `lambda = a + b exp(-tau lambda)` by damped Newton from a
/// grid of starts covering `re in [-12, 4]`, `im in [0, im_max]`. Returns
/// distinct roots with conjugates included.
pub fn characteristic_roots(a: f64, b: f64, tau: f64, im_max: f64) -> Vec<Complex64> {
    let mut starts = Vec::new();
    let mut re = -12.0;
    while re <= 4.0 {
        let mut im = 0.0;
        while im <= im_max {
            starts.push(Complex64::new(re, im));
            im += 0.5;
        }
        re += 2.0;
    }
    newton_roots(a, b, tau, &starts)
}

/// Damped Newton on `f(lambda) = lambda - a - b exp(-tau lambda)` from the
/// given starts; deduplicated, conjugates added.
pub fn newton_roots(a: f64, b: f64, tau: f64, starts: &[Complex64]) -> Vec<Complex64> {
    let f = |l: Complex64| l - a - b * (-tau * l).exp();
    let df = |l: Complex64| Complex64::new(1.0, 0.0) + b * tau * (-tau * l).exp();
    let mut roots: Vec<Complex64> = Vec::new();
    for &start in starts {
        let mut lambda = start;
        let mut fval = f(lambda);
        let mut converged = false;
        for _ in 0..80 {
            let d = df(lambda);
            if d.norm() < 1e-300 {
                break;
            }
            let step = fval / d;
            // halve the step until the residual decreases
            let mut damping = 1.0;
            let mut next = lambda - step;
            let mut fnext = f(next);
            while damping > 1e-8 && !(fnext.norm() <= fval.norm()) {
                damping *= 0.5;
                next = lambda - step * damping;
                fnext = f(next);
            }
            let moved = (next - lambda).norm();
            lambda = next;
            fval = fnext;
            if moved <= 1e-14 * lambda.norm().max(1.0) {
                converged = true;
                break;
            }
        }
        if converged && fval.norm() <= 1e-11 * lambda.norm().max(1.0) {
            let lambda = if lambda.im.abs() < 1e-12 {
                Complex64::new(lambda.re, 0.0)
            } else {
                lambda
            };
            if !roots.iter().any(|r| (r - lambda).norm() <= 1e-8) {
                roots.push(lambda);
                if lambda.im != 0.0 {
                    roots.push(lambda.conj());
                }
            }
        }
    }
    roots
}

/// Exact stability of the zero equilibrium of `y' = a y + b y(t-1)`:
/// true when the rightmost characteristic root has negative real part.
#[allow(dead_code)]
pub fn hayes_stable(a: f64, b: f64) -> bool {
    let roots = characteristic_roots(a, b, 1.0, 60.0);
    let rightmost = roots.iter().map(|r| r.re).fold(f64::NEG_INFINITY, f64::max);
    rightmost < 0.0
}

/// Distance from `(a, b)` to the analytic stability boundary of the Hayes
/// equation with `tau = 1`: the fold line `b = -a` (for `a <= 1`) together
/// with the Hopf curve `(nu cot nu, -nu / sin nu)` for `nu in (0, pi)`.
#[allow(dead_code)]
pub fn hayes_boundary_distance(a: f64, b: f64) -> f64 {
    let mut best = f64::INFINITY;
    // fold line segment: lambda = 0 on b = -a, a stability boundary up to
    // the tangency with the Hopf curve at (1, -1)
    {
        // distance to the line b = -a restricted to a <= 1
        let t = (a - b) / 2.0; // foot of the perpendicular is (t, -t)
        let (fa, fb) = if t <= 1.0 { (t, -t) } else { (1.0, -1.0) };
        best = best.min(((a - fa).powi(2) + (b - fb).powi(2)).sqrt());
    }
    let n = 4000;
    for k in 1..n {
        let nu = std::f64::consts::PI * k as f64 / n as f64;
        let ca = nu / nu.tan();
        let cb = -nu / nu.sin();
        let d = ((a - ca).powi(2) + (b - cb).powi(2)).sqrt();
        if d < best {
            best = d;
        }
    }
    best
}
