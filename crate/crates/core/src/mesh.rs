//! Forward partition of `[0, omega]`, its backward extension to
//! `[-tau_eff, 0]` and the global collocation grids.
//!
//! The backward partition is obtained by shifting the forward partition by
//! multiples of `omega`. When the maximum delay `tau` does not land on a
//! shifted point, the leftmost incomplete piece is handled by one of the
//! [`LeftmostStrategy`] variants.

use serde::{Deserialize, Serialize};

use crate::basis::NodeSet;
use crate::{Error, Result};

/// How the forward partition of `[0, omega]` is specified.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeshSpec {
    /// `L` uniform pieces.
    Pieces(usize),
    /// Explicit endpoints, starting at `0` and ending at `omega`.
    Endpoints(Vec<f64>),
}

impl Default for MeshSpec {
    fn default() -> Self {
        MeshSpec::Pieces(1)
    }
}

/// Treatment of the leftmost incomplete piece of `[-tau, 0]`.
///
/// With `theta1 < -tau < theta2` the two shifted points bracketing `-tau`:
/// `Exact` keeps `[-tau, theta2]` as the leftmost piece, `Extend` enlarges
/// the delay interval to `[theta1, theta2]`. The two threshold variants act
/// like `Exact` unless the leftmost piece is shorter than
/// `threshold * omega`, in which case `ExactDrop` falls back to `Extend`
/// and `ExactMerge` merges the tiny piece with its right neighbour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeftmostStrategy {
    Exact,
    Extend,
    ExactDrop,
    ExactMerge,
}

impl std::str::FromStr for LeftmostStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(LeftmostStrategy::Exact),
            "extend" => Ok(LeftmostStrategy::Extend),
            "exact-drop" => Ok(LeftmostStrategy::ExactDrop),
            "exact-merge" => Ok(LeftmostStrategy::ExactMerge),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Which branch the leftmost-piece handling actually took; echoed in output
/// metadata for reproducibility.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResolvedLeftmost {
    /// `-tau` coincided with a shifted point.
    Coincident,
    Exact,
    Extended,
    Merged,
}

/// Builds the forward partition of `[0, omega]`.
pub fn build_forward(omega: f64, spec: &MeshSpec) -> Result<Vec<f64>> {
    if !(omega > 0.0) {
        return Err(Error::InvalidSystem(format!("omega = {omega} must be positive")));
    }
    match spec {
        MeshSpec::Pieces(l) => {
            if *l < 1 {
                return Err(Error::MeshMismatch("piece count L must be at least 1".into()));
            }
            let mut t: Vec<f64> = (0..=*l).map(|i| omega * i as f64 / *l as f64).collect();
            t[0] = 0.0;
            t[*l] = omega;
            Ok(t)
        }
        MeshSpec::Endpoints(t) => {
            let slack = 1e-10 * omega;
            if t.len() < 2 {
                return Err(Error::MeshMismatch(
                    "explicit partition needs at least two endpoints".into(),
                ));
            }
            if t[0].abs() > slack {
                return Err(Error::MeshMismatch(format!(
                    "partition must start at 0, got {}",
                    t[0]
                )));
            }
            if (t[t.len() - 1] - omega).abs() > slack {
                return Err(Error::MeshMismatch(format!(
                    "partition must end at omega = {omega}, got {}",
                    t[t.len() - 1]
                )));
            }
            if t.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::MeshMismatch(
                    "partition endpoints must be strictly increasing".into(),
                ));
            }
            let mut t = t.clone();
            t[0] = 0.0;
            let n = t.len();
            t[n - 1] = omega;
            Ok(t)
        }
    }
}

/// Builds the backward partition of `[-tau_eff, 0]` from the forward one.
///
/// Returns the partition and the effective maximum delay `tau_eff`
/// (`tau` itself, or `-theta1` under the `Extend` strategy).
pub fn build_backward(
    forward: &[f64],
    omega: f64,
    tau: f64,
    strategy: LeftmostStrategy,
    threshold: f64,
) -> Result<(Vec<f64>, f64)> {
    let (partition, tau_eff, _) = build_backward_resolved(forward, omega, tau, strategy, threshold)?;
    Ok((partition, tau_eff))
}

pub(crate) fn build_backward_resolved(
    forward: &[f64],
    omega: f64,
    tau: f64,
    strategy: LeftmostStrategy,
    threshold: f64,
) -> Result<(Vec<f64>, f64, ResolvedLeftmost)> {
    if tau <= threshold * omega {
        return Err(Error::DelayTooSmall {
            tau,
            limit: threshold * omega,
        });
    }
    let lo = -tau - omega;
    let scale = tau.max(omega);
    let dedup_slack = 1e-12 * scale;
    let mut provisional: Vec<f64> = Vec::new();
    let mut k = 1usize;
    loop {
        let shift = k as f64 * omega;
        let mut any = false;
        for &t in forward {
            let p = t - shift;
            if p >= lo - dedup_slack && p <= dedup_slack {
                any = true;
                provisional.push(p.min(0.0));
            }
        }
        if !any {
            break;
        }
        k += 1;
    }
    provisional.sort_by(|a, b| a.partial_cmp(b).unwrap());
    provisional.dedup_by(|a, b| (*a - *b).abs() <= dedup_slack);

    let slack = 1e-10 * scale;
    let tail = |from: f64| -> Vec<f64> {
        provisional
            .iter()
            .copied()
            .filter(|&p| p > from + slack)
            .collect()
    };

    if let Some(&p) = provisional.iter().find(|&&p| (p + tau).abs() <= slack) {
        let mut partition = vec![-tau];
        partition.extend(tail(p));
        return Ok((partition, tau, ResolvedLeftmost::Coincident));
    }

    let theta1 = provisional
        .iter()
        .copied()
        .filter(|&p| p < -tau)
        .// largest provisional point below -tau
        fold(f64::NEG_INFINITY, f64::max);
    let theta2 = provisional
        .iter()
        .copied()
        .filter(|&p| p > -tau)
        .fold(f64::INFINITY, f64::min);
    debug_assert!(theta1.is_finite() && theta2.is_finite());

    let tiny = theta2 + tau < threshold * omega;
    let exact = |partition_from: f64| -> Vec<f64> {
        let mut v = vec![-tau];
        v.extend(
            provisional
                .iter()
                .copied()
                .filter(|&p| p >= partition_from - slack),
        );
        v
    };

    match strategy {
        LeftmostStrategy::Exact => Ok((exact(theta2), tau, ResolvedLeftmost::Exact)),
        LeftmostStrategy::Extend => {
            let partition: Vec<f64> = provisional
                .iter()
                .copied()
                .filter(|&p| p >= theta1 - slack)
                .collect();
            Ok((partition, -theta1, ResolvedLeftmost::Extended))
        }
        LeftmostStrategy::ExactDrop => {
            if tiny {
                let partition: Vec<f64> = provisional
                    .iter()
                    .copied()
                    .filter(|&p| p >= theta1 - slack)
                    .collect();
                Ok((partition, -theta1, ResolvedLeftmost::Extended))
            } else {
                Ok((exact(theta2), tau, ResolvedLeftmost::Exact))
            }
        }
        LeftmostStrategy::ExactMerge => {
            if tiny {
                let theta3 = provisional.iter().copied().find(|&p| p > theta2 + slack);
                match theta3 {
                    Some(t3) => Ok((exact(t3), tau, ResolvedLeftmost::Merged)),
                    None => {
                        let partition: Vec<f64> = provisional
                            .iter()
                            .copied()
                            .filter(|&p| p >= theta1 - slack)
                            .collect();
                        Ok((partition, -theta1, ResolvedLeftmost::Extended))
                    }
                }
            } else {
                Ok((exact(theta2), tau, ResolvedLeftmost::Exact))
            }
        }
    }
}

/// Per-piece affine images of the reference nodes with shared endpoints
/// deduplicated; continuity of the piecewise polynomials is imposed
/// implicitly by the shared values.
pub fn build_grids(forward: &[f64], backward: &[f64], nodeset: &NodeSet) -> (Vec<f64>, Vec<f64>) {
    (grid_of(backward, nodeset), grid_of(forward, nodeset))
}

fn grid_of(partition: &[f64], nodeset: &NodeSet) -> Vec<f64> {
    let m = nodeset.degree();
    let mut g = Vec::with_capacity((partition.len() - 1) * m + 1);
    g.push(partition[0]);
    for w in partition.windows(2) {
        let (a, b) = (w[0], w[1]);
        for (j, &c) in nodeset.nodes().iter().enumerate().skip(1) {
            g.push(if j == m { b } else { a + (b - a) * c });
        }
    }
    g
}

/// Index of the piece containing `x`; ties at interior endpoints resolve to
/// the left piece.
pub fn locate(partition: &[f64], x: f64) -> Result<usize> {
    let n = partition.len();
    let span = partition[n - 1] - partition[0];
    let slack = 1e-10 * span.max(1.0);
    if x < partition[0] - slack || x > partition[n - 1] + slack {
        return Err(Error::Domain(format!(
            "point {x} outside partition [{}, {}]",
            partition[0],
            partition[n - 1]
        )));
    }
    let mut i = partition.partition_point(|&p| p < x);
    if i > 0 {
        i -= 1;
    }
    Ok(i.min(n - 2))
}

/// A fully built piecewise mesh: the forward and backward partitions and the
/// corresponding global collocation grids.
#[derive(Clone, Debug)]
pub struct PiecewiseMesh {
    pub omega: f64,
    pub tau: f64,
    pub tau_eff: f64,
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
    pub degree: usize,
    pub grid_backward: Vec<f64>,
    pub grid_forward: Vec<f64>,
    pub resolved: ResolvedLeftmost,
}

impl PiecewiseMesh {
    pub fn build(
        omega: f64,
        tau: f64,
        spec: &MeshSpec,
        nodeset: &NodeSet,
        strategy: LeftmostStrategy,
        threshold: f64,
    ) -> Result<Self> {
        let forward = build_forward(omega, spec)?;
        let (backward, tau_eff, resolved) =
            build_backward_resolved(&forward, omega, tau, strategy, threshold)?;
        let (grid_backward, grid_forward) = build_grids(&forward, &backward, nodeset);
        Ok(PiecewiseMesh {
            omega,
            tau,
            tau_eff,
            forward,
            backward,
            degree: nodeset.degree(),
            grid_backward,
            grid_forward,
            resolved,
        })
    }

    /// Number of backward collocation points, `L⁻·M + 1`.
    pub fn n_backward(&self) -> usize {
        self.grid_backward.len()
    }

    /// Number of forward collocation points, `L·M + 1`.
    pub fn n_forward(&self) -> usize {
        self.grid_forward.len()
    }
}
