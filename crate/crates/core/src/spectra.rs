//! Floquet multipliers from the assembled monodromy matrices.
//!
//! Two routes are provided. The standard route takes the eigenvalues of the
//! dense real matrix `T` by a real Schur decomposition. The generalized
//! route never forms `(I - U2)^{-1}`: it poses the pencil
//!
//! ```text
//! ( [T1 T2]     )            (I  0)
//! ( [U1 U2] - I ) v = (mu-1) (0  0) v
//! ```
//!
//! and solves it by the QZ algorithm; the singular right-hand side produces
//! structural infinite eigenvalues, which are discarded. The two routes are
//! algebraically equivalent on the finite spectrum and serve as mutual
//! cross-checks.

use dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::ComputeEigenvectors;
use faer::linalg::gevd::{gevd_real, gevd_scratch};
use faer::{Mat, Par};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discretize::MonodromyMatrices;
use crate::{Error, Result};

/// Which eigenvalue formulation produced a [`MultiplierSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigMethod {
    Standard,
    Generalized,
}

impl std::str::FromStr for EigMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(EigMethod::Standard),
            "generalized" => Ok(EigMethod::Generalized),
            other => Err(Error::Config(format!("unknown eigenvalue method `{other}`"))),
        }
    }
}

/// Computed multipliers, sorted by descending magnitude; ties broken by
/// descending real part, then descending imaginary part, so output order is
/// deterministic. Real input matrices make the set closed under
/// conjugation.
#[derive(Clone, Debug)]
pub struct MultiplierSet {
    pub multipliers: Vec<Complex64>,
    pub method: EigMethod,
    /// Values with `|mu|` below this floor are numerically indistinguishable
    /// from zero and are not Floquet multipliers in the operator sense.
    pub zero_floor: f64,
    pub dim_state: usize,
    pub dim_forward: usize,
    pub condition_estimate: f64,
}

impl MultiplierSet {
    fn new(
        mut multipliers: Vec<Complex64>,
        method: EigMethod,
        dim_state: usize,
        dim_forward: usize,
        condition_estimate: f64,
    ) -> Self {
        sort_multipliers(&mut multipliers);
        let max = multipliers.first().map_or(0.0, |m| m.norm());
        MultiplierSet {
            multipliers,
            method,
            zero_floor: 1e-12 * max,
            dim_state,
            dim_forward,
            condition_estimate,
        }
    }

    /// Constructor from raw values; used by tests and by re-imported matrix
    /// dumps.
    pub fn from_values(multipliers: Vec<Complex64>, method: EigMethod) -> Self {
        Self::new(multipliers, method, 0, 0, 1.0)
    }

    /// The `k` largest multipliers by magnitude.
    pub fn dominant(&self, k: usize) -> &[Complex64] {
        &self.multipliers[..k.min(self.multipliers.len())]
    }

    /// Multipliers above the numerical zero floor.
    pub fn nonzero(&self) -> impl Iterator<Item = &Complex64> {
        self.multipliers.iter().filter(|m| m.norm() > self.zero_floor)
    }

    pub fn max_magnitude(&self) -> f64 {
        self.multipliers.first().map_or(0.0, |m| m.norm())
    }

    /// CSV export, one row per multiplier with columns `re,im,abs`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im,abs\n");
        for m in &self.multipliers {
            out.push_str(&format!("{},{},{}\n", m.re, m.im, m.norm()));
        }
        out
    }
}

fn sort_multipliers(v: &mut [Complex64]) {
    v.sort_by(|a, b| {
        b.norm()
            .partial_cmp(&a.norm())
            .unwrap()
            .then(b.re.partial_cmp(&a.re).unwrap())
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
}

/// Eigenvalues of a dense real matrix by the real Schur decomposition.
pub fn standard_eigenvalues(t: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let schur = nalgebra::linalg::Schur::try_new(t.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("Schur iteration failed to converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Multipliers via the standard eigenvalue problem on `T`.
pub fn multipliers_standard(mm: &MonodromyMatrices) -> Result<MultiplierSet> {
    let eigs = standard_eigenvalues(&mm.t)?;
    Ok(MultiplierSet::new(
        eigs,
        EigMethod::Standard,
        mm.info.dim_state(),
        mm.info.dim_forward(),
        mm.info.condition_estimate,
    ))
}

/// Multipliers via the generalized eigenvalue problem on the block pencil,
/// solved by QZ; infinite eigenvalues (from the singular right-hand side)
/// are discarded.
///
/// The pencil is handed to QZ in reversed orientation, `B v = theta A v`
/// with `theta = 1 / (mu - 1)`: the right-hand matrix of the reversed pair
/// is nonsingular (up to the near-1 trivial multiplier), so the structural
/// infinite eigenvalues of the original pencil become harmless zeros
/// instead of triggering the QZ infinite-eigenvalue deflation.
pub fn multipliers_generalized(mm: &MonodromyMatrices) -> Result<MultiplierSet> {
    let n1 = mm.t1.nrows();
    let n2 = mm.u2.nrows();
    let n = n1 + n2;

    let mut a = Mat::<f64>::from_fn(n, n, |i, j| {
        let v = match (i < n1, j < n1) {
            (true, true) => mm.t1[(i, j)],
            (true, false) => mm.t2[(i, j - n1)],
            (false, true) => mm.u1[(i - n1, j)],
            (false, false) => mm.u2[(i - n1, j - n1)],
        };
        if i == j {
            v - 1.0
        } else {
            v
        }
    });
    let mut b = Mat::<f64>::from_fn(n, n, |i, j| if i == j && i < n1 { 1.0 } else { 0.0 });

    let mut alpha_re = faer::diag::Diag::<f64>::zeros(n);
    let mut alpha_im = faer::diag::Diag::<f64>::zeros(n);
    let mut beta = faer::diag::Diag::<f64>::zeros(n);
    let params = faer::Spec::default();
    gevd_real(
        b.as_mut(),
        a.as_mut(),
        alpha_re.as_mut(),
        alpha_im.as_mut(),
        beta.as_mut(),
        None,
        None,
        Par::Seq,
        MemStack::new(&mut MemBuffer::new(gevd_scratch::<f64>(
            n,
            ComputeEigenvectors::No,
            ComputeEigenvectors::No,
            Par::Seq,
            params,
        ))),
        params,
    )
    .map_err(|e| Error::Numeric(format!("QZ iteration failed: {e:?}")))?;

    let one = Complex64::new(1.0, 0.0);
    let mut finite = Vec::with_capacity(n1);
    let mut i = 0;
    while i < n {
        // conjugate pairs occupy two slots; the first one carries the pair's
        // (alpha, beta) data
        let pair = alpha_im[i] != 0.0 && i + 1 < n;
        let alpha = Complex64::new(alpha_re[i], alpha_im[i]);
        let b_i = beta[i];
        i += if pair { 2 } else { 1 };
        let scale = alpha.norm().hypot(b_i);
        if scale == 0.0 {
            continue;
        }
        // theta at rounding level marks a structural infinity of the
        // original pencil, not a multiplier
        if alpha.norm() <= 1e-10 * scale {
            continue;
        }
        let mu = if b_i.abs() <= 1e-14 * scale {
            // theta infinite: the multiplier sits at 1 exactly
            one
        } else {
            one + b_i / alpha
        };
        if mu.norm() > 1e12 {
            continue;
        }
        finite.push(mu);
        if pair {
            finite.push(mu.conj());
        }
    }

    Ok(MultiplierSet::new(
        finite,
        EigMethod::Generalized,
        mm.info.dim_state(),
        mm.info.dim_forward(),
        mm.info.condition_estimate,
    ))
}

/// Index of the multiplier closest to `1`, the trivial multiplier of a
/// linearization around a periodic solution.
pub fn trivial_index(ms: &MultiplierSet) -> usize {
    assert!(!ms.multipliers.is_empty(), "empty multiplier set");
    let one = Complex64::new(1.0, 0.0);
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, m) in ms.multipliers.iter().enumerate() {
        let d = (m - one).norm();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}
