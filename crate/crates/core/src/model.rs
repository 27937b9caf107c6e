//! The prototype linear coupled equation and ingested periodic solutions.
//!
//! A [`DelaySystem`] couples a renewal component `x` (dimension `dim_x`)
//! with a delay-differential component `y` (dimension `dim_y`):
//!
//! ```text
//! x(t)  = A_XX(t) x(t) + sum_k B_XX^k(t) x(t - tau_k)
//!         + sum_k int_{-tau_k}^{-tau_{k-1}} C_XX^k(t, th) x(t + th) dth
//!         + (same terms with XY acting on y)
//! y'(t) = (same terms with YX acting on x and YY acting on y)
//! ```
//!
//! with delays `0 < tau_1 < ... < tau_p = tau`. Absent coefficients are
//! treated as zero. Coefficient functions receive the absolute time and the
//! current [`Params`]; they are required to be pure so that assembly may
//! evaluate them in any order.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{NodeFamily, NodeSet};
use crate::mesh::MeshSpec;
use crate::{Error, Result};

/// Matrix-valued coefficient of the current-time (`A`) or discrete-delay
/// (`B`) kind: maps `(t, params)` to a `d_row x d_col` matrix.
pub type MatrixFn = Arc<dyn Fn(f64, &Params) -> DMatrix<f64> + Send + Sync>;

/// Matrix-valued distributed-delay kernel: maps `(t, theta, params)` to a
/// `d_row x d_col` matrix.
pub type KernelFn = Arc<dyn Fn(f64, f64, &Params) -> DMatrix<f64> + Send + Sync>;

/// Wraps a scalar function as a `1 x 1` coefficient matrix.
pub fn scalar_fn<F: Fn(f64, &Params) -> f64 + Send + Sync + 'static>(f: F) -> MatrixFn {
    Arc::new(move |t, p| DMatrix::from_element(1, 1, f(t, p)))
}

/// Wraps a scalar kernel as a `1 x 1` coefficient matrix.
pub fn scalar_kernel<F: Fn(f64, f64, &Params) -> f64 + Send + Sync + 'static>(f: F) -> KernelFn {
    Arc::new(move |t, th, p| DMatrix::from_element(1, 1, f(t, th, p)))
}

/// The `x`/`y` block axes of the coupled equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// The four coefficient blocks of a coupled equation, indexed by
/// (equation axis, state axis).
#[derive(Clone, Default)]
pub struct Blocks<T> {
    pub xx: T,
    pub xy: T,
    pub yx: T,
    pub yy: T,
}

impl<T> Blocks<T> {
    pub fn get(&self, row: Axis, col: Axis) -> &T {
        match (row, col) {
            (Axis::X, Axis::X) => &self.xx,
            (Axis::X, Axis::Y) => &self.xy,
            (Axis::Y, Axis::X) => &self.yx,
            (Axis::Y, Axis::Y) => &self.yy,
        }
    }

    fn get_mut(&mut self, row: Axis, col: Axis) -> &mut T {
        match (row, col) {
            (Axis::X, Axis::X) => &mut self.xx,
            (Axis::X, Axis::Y) => &mut self.xy,
            (Axis::Y, Axis::X) => &mut self.yx,
            (Axis::Y, Axis::Y) => &mut self.yy,
        }
    }

    fn for_each(&self, mut f: impl FnMut(Axis, Axis, &T)) {
        f(Axis::X, Axis::X, &self.xx);
        f(Axis::X, Axis::Y, &self.xy);
        f(Axis::Y, Axis::X, &self.yx);
        f(Axis::Y, Axis::Y, &self.yy);
    }
}

pub(crate) fn block_name(prefix: &str, row: Axis, col: Axis) -> String {
    let ax = |a: Axis| match a {
        Axis::X => "X",
        Axis::Y => "Y",
    };
    format!("{prefix}_{}{}", ax(row), ax(col))
}

/// Named scalar parameters plus an optionally bound periodic solution.
///
/// Parameter order is preserved, so positional references (`par[i]` in the
/// expression language, 1-based) are meaningful.
#[derive(Clone, Default)]
pub struct Params {
    values: IndexMap<String, f64>,
    solution: Option<Arc<PeriodicSolutionPW>>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn with_solution(mut self, sol: Arc<PeriodicSolutionPW>) -> Self {
        self.solution = Some(sol);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<f64> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    /// Positional access, 1-based.
    pub fn get_index(&self, index: usize) -> Option<f64> {
        if index == 0 {
            return None;
        }
        self.values.get_index(index - 1).map(|(_, v)| *v)
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.values.insert(name.to_string(), value);
    }

    pub fn set_solution(&mut self, sol: Arc<PeriodicSolutionPW>) {
        self.solution = Some(sol);
    }

    pub fn solution(&self) -> Option<&Arc<PeriodicSolutionPW>> {
        self.solution.as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

impl fmt::Debug for Params {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Params")
            .field("values", &self.values)
            .field("solution", &self.solution.as_ref().map(|_| "<bound>"))
            .finish()
    }
}

impl FromIterator<(String, f64)> for Params {
    fn from_iter<I: IntoIterator<Item = (String, f64)>>(iter: I) -> Self {
        Params {
            values: iter.into_iter().collect(),
            solution: None,
        }
    }
}

/// A validated linear coupled renewal/delay equation.
#[derive(Clone)]
pub struct DelaySystem {
    dim_x: usize,
    dim_y: usize,
    delays: Vec<f64>,
    omega: f64,
    start_time: f64,
    pub(crate) a: Blocks<Option<MatrixFn>>,
    pub(crate) b: Blocks<Vec<Option<MatrixFn>>>,
    pub(crate) c: Blocks<Vec<Option<KernelFn>>>,
    pub params: Params,
    mesh_spec: MeshSpec,
}

impl fmt::Debug for DelaySystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DelaySystem")
            .field("dim_x", &self.dim_x)
            .field("dim_y", &self.dim_y)
            .field("delays", &self.delays)
            .field("omega", &self.omega)
            .field("start_time", &self.start_time)
            .field("params", &self.params)
            .field("mesh_spec", &self.mesh_spec)
            .finish_non_exhaustive()
    }
}

impl DelaySystem {
    /// Starts building a system with dimensions `[dim_x, dim_y]`, the vector
    /// of delays in ascending order, the time horizon `omega` and the
    /// initial time `start_time`.
    pub fn builder(dims: [usize; 2], delays: Vec<f64>, omega: f64, start_time: f64) -> SystemBuilder {
        SystemBuilder {
            system: DelaySystem {
                dim_x: dims[0],
                dim_y: dims[1],
                delays,
                omega,
                start_time,
                a: Blocks::default(),
                b: Blocks::default(),
                c: Blocks::default(),
                params: Params::new(),
                mesh_spec: MeshSpec::default(),
            },
        }
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_y(&self) -> usize {
        self.dim_y
    }

    pub fn dim_total(&self) -> usize {
        self.dim_x + self.dim_y
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    /// Maximum delay `tau = tau_p`.
    pub fn tau(&self) -> f64 {
        *self.delays.last().expect("validated system has delays")
    }

    /// Number of delays `p`.
    pub fn n_delays(&self) -> usize {
        self.delays.len()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn mesh_spec(&self) -> &MeshSpec {
        &self.mesh_spec
    }

    /// Replaces the forward-partition specification; useful when sweeping
    /// mesh resolutions over a fixed system.
    pub fn set_mesh_spec(&mut self, spec: MeshSpec) {
        self.mesh_spec = spec;
    }

    pub fn dim_of(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => self.dim_x,
            Axis::Y => self.dim_y,
        }
    }

    /// Checks the structural invariants and normalizes coefficient lists.
    ///
    /// Idempotent; `SystemBuilder::build` calls it, so manual calls are only
    /// needed after direct field surgery.
    pub fn validate(mut self) -> Result<Self> {
        if self.dim_x == 0 && self.dim_y == 0 {
            return Err(Error::InvalidSystem(
                "dimensions (0, 0): at least one of dim_x, dim_y must be positive".into(),
            ));
        }
        if self.delays.is_empty() {
            return Err(Error::InvalidSystem("at least one delay is required".into()));
        }
        if self.delays[0] <= 0.0 {
            return Err(Error::InvalidSystem(format!(
                "delays must be positive, got {}",
                self.delays[0]
            )));
        }
        if self.delays.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSystem(
                "delays must be strictly increasing (the delays are not re-sorted)".into(),
            ));
        }
        if !(self.omega > 0.0) {
            return Err(Error::InvalidSystem(format!(
                "omega = {} must be positive",
                self.omega
            )));
        }
        let p = self.delays.len();
        for (blocks, kind) in [(&mut self.b, "B")] {
            let mut err = None;
            for (row, col) in [
                (Axis::X, Axis::X),
                (Axis::X, Axis::Y),
                (Axis::Y, Axis::X),
                (Axis::Y, Axis::Y),
            ] {
                let list = blocks.get_mut(row, col);
                if list.is_empty() {
                    list.resize_with(p, || None);
                } else if list.len() != p {
                    err = Some(format!(
                        "{} has {} entries but there are {} delays",
                        block_name(kind, row, col),
                        list.len(),
                        p
                    ));
                }
            }
            if let Some(msg) = err {
                return Err(Error::InvalidSystem(msg));
            }
        }
        for (row, col) in [
            (Axis::X, Axis::X),
            (Axis::X, Axis::Y),
            (Axis::Y, Axis::X),
            (Axis::Y, Axis::Y),
        ] {
            let list = self.c.get_mut(row, col);
            if list.is_empty() {
                list.resize_with(p, || None);
            } else if list.len() != p {
                return Err(Error::InvalidSystem(format!(
                    "{} has {} entries but there are {} delay intervals",
                    block_name("C", row, col),
                    list.len(),
                    p
                )));
            }
        }
        // a zero-dimensional axis admits no coefficients touching it
        let mut offending = None;
        let check = |name: String, row: Axis, col: Axis, present: bool, sys: &DelaySystem| {
            if present && (sys.dim_of(row) == 0 || sys.dim_of(col) == 0) {
                Some(name)
            } else {
                None
            }
        };
        self.a.for_each(|row, col, slot| {
            if offending.is_none() {
                offending = check(block_name("A", row, col), row, col, slot.is_some(), &self);
            }
        });
        self.b.for_each(|row, col, list| {
            if offending.is_none() {
                offending = check(
                    block_name("B", row, col),
                    row,
                    col,
                    list.iter().any(Option::is_some),
                    &self,
                );
            }
        });
        self.c.for_each(|row, col, list| {
            if offending.is_none() {
                offending = check(
                    block_name("C", row, col),
                    row,
                    col,
                    list.iter().any(Option::is_some),
                    &self,
                );
            }
        });
        if let Some(name) = offending {
            return Err(Error::InvalidSystem(format!(
                "coefficient {name} present although the corresponding dimension is zero"
            )));
        }
        Ok(self)
    }
}

/// Builder mirroring the positional-plus-named construction of the system.
pub struct SystemBuilder {
    system: DelaySystem,
}

macro_rules! coef_setters {
    ($($a:ident, $b:ident, $c:ident => $row:ident, $col:ident);* $(;)?) => {
        $(
            pub fn $a(mut self, f: MatrixFn) -> Self {
                *self.system.a.get_mut(Axis::$row, Axis::$col) = Some(f);
                self
            }

            pub fn $b(mut self, list: Vec<Option<MatrixFn>>) -> Self {
                *self.system.b.get_mut(Axis::$row, Axis::$col) = list;
                self
            }

            pub fn $c(mut self, list: Vec<Option<KernelFn>>) -> Self {
                *self.system.c.get_mut(Axis::$row, Axis::$col) = list;
                self
            }
        )*
    };
}

impl SystemBuilder {
    coef_setters! {
        a_xx, b_xx, c_xx => X, X;
        a_xy, b_xy, c_xy => X, Y;
        a_yx, b_yx, c_yx => Y, X;
        a_yy, b_yy, c_yy => Y, Y;
    }

    pub fn params(mut self, params: Params) -> Self {
        self.system.params = params;
        self
    }

    pub fn mesh(mut self, spec: MeshSpec) -> Self {
        self.system.mesh_spec = spec;
        self
    }

    pub fn build(self) -> Result<DelaySystem> {
        self.system.validate()
    }
}

// ---------------------------------------------------------------------------
// Periodic solutions
// ---------------------------------------------------------------------------

/// A piecewise-polynomial periodic solution, stored as nodal values on a
/// partition of one period, evaluated with periodic reduction of the time
/// argument.
#[derive(Clone, Debug)]
pub struct PeriodicSolutionPW {
    components: usize,
    period: f64,
    piece_mesh: Vec<f64>,
    degree: usize,
    node_family: NodeFamily,
    /// piece-major, component-major, node-minor
    values: Vec<Vec<Vec<f64>>>,
    nodeset: NodeSet,
}

/// On-disk schema of a solution fixture.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolutionFile {
    components: usize,
    period: f64,
    mesh: Vec<f64>,
    degree: usize,
    node_family: NodeFamily,
    values: Vec<Vec<Vec<f64>>>,
}

/// Relative tolerance for the piece-interface continuity warning. Renewal
/// components may genuinely jump, so violations are reported, not fatal.
const CONTINUITY_TOL: f64 = 1e-8;

impl PeriodicSolutionPW {
    /// Samples `f(component, t)` (component 1-based) on the given partition
    /// of `[0, period]` at degree-`degree` nodes of `family`.
    pub fn from_samples<F: Fn(usize, f64) -> f64>(
        components: usize,
        period: f64,
        piece_mesh: Vec<f64>,
        degree: usize,
        family: NodeFamily,
        f: F,
    ) -> Result<Self> {
        let nodeset = NodeSet::new(family, degree)?;
        check_solution_mesh(&piece_mesh, period)?;
        let mut values = Vec::with_capacity(piece_mesh.len() - 1);
        for w in piece_mesh.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mut per_comp = Vec::with_capacity(components);
            for comp in 1..=components {
                per_comp.push(
                    nodeset
                        .nodes()
                        .iter()
                        .map(|&c| f(comp, a + (b - a) * c))
                        .collect(),
                );
            }
            values.push(per_comp);
        }
        Ok(PeriodicSolutionPW {
            components,
            period,
            piece_mesh,
            degree,
            node_family: family,
            values,
            nodeset,
        })
    }

    /// Evaluates component `component` (1-based) at time `t`, reduced
    /// modulo the period into `[0, period)`.
    pub fn eval(&self, component: usize, t: f64) -> Result<f64> {
        if component == 0 || component > self.components {
            return Err(Error::Domain(format!(
                "solution component {component} out of range 1..={}",
                self.components
            )));
        }
        let mut tr = t - self.period * (t / self.period).floor();
        if tr >= self.period {
            tr = 0.0;
        }
        let piece = crate::mesh::locate(&self.piece_mesh, tr)?;
        let (a, b) = (self.piece_mesh[piece], self.piece_mesh[piece + 1]);
        Ok(self
            .nodeset
            .interpolate(&self.values[piece][component - 1], a, b, tr))
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn piece_mesh(&self) -> &[f64] {
        &self.piece_mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn node_family(&self) -> NodeFamily {
        self.node_family
    }

    /// Resamples onto a new partition/degree through the current interpolant.
    pub fn resampled(
        &self,
        piece_mesh: Vec<f64>,
        degree: usize,
        family: NodeFamily,
    ) -> Result<Self> {
        Self::from_samples(
            self.components,
            self.period,
            piece_mesh,
            degree,
            family,
            |comp, t| self.eval(comp, t).unwrap_or(f64::NAN),
        )
    }

    /// Parses a JSON fixture. Returns the solution together with non-fatal
    /// ingestion warnings (continuity violations at piece interfaces).
    pub fn from_json(text: &str) -> Result<(Self, Vec<String>)> {
        let file: SolutionFile = serde_json::from_str(text)
            .map_err(|e| Error::Ingestion(e.to_string()))?;
        let nodeset = NodeSet::new(file.node_family, file.degree)?;
        check_solution_mesh(&file.mesh, file.period)?;
        let pieces = file.mesh.len() - 1;
        if file.values.len() != pieces {
            return Err(Error::Ingestion(format!(
                "expected values for {pieces} pieces, found {}",
                file.values.len()
            )));
        }
        for (i, piece) in file.values.iter().enumerate() {
            if piece.len() != file.components {
                return Err(Error::Ingestion(format!(
                    "piece {i} holds {} components, expected {}",
                    piece.len(),
                    file.components
                )));
            }
            for (c, comp) in piece.iter().enumerate() {
                if comp.len() != file.degree + 1 {
                    return Err(Error::Ingestion(format!(
                        "piece {i} component {} holds {} values, expected {}",
                        c + 1,
                        comp.len(),
                        file.degree + 1
                    )));
                }
            }
        }
        let mut warnings = Vec::new();
        for c in 0..file.components {
            let scale = file
                .values
                .iter()
                .flat_map(|p| p[c].iter())
                .fold(0.0f64, |m, v| m.max(v.abs()))
                .max(1.0);
            for i in 0..pieces - 1 {
                let left = *file.values[i][c].last().unwrap();
                let right = file.values[i + 1][c][0];
                if (left - right).abs() > CONTINUITY_TOL * scale {
                    warnings.push(format!(
                        "component {} jumps by {:.3e} at piece interface t = {}",
                        c + 1,
                        (left - right).abs(),
                        file.mesh[i + 1]
                    ));
                }
            }
        }
        Ok((
            PeriodicSolutionPW {
                components: file.components,
                period: file.period,
                piece_mesh: file.mesh,
                degree: file.degree,
                node_family: file.node_family,
                values: file.values,
                nodeset,
            },
            warnings,
        ))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<String>)> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = SolutionFile {
            components: self.components,
            period: self.period,
            mesh: self.piece_mesh.clone(),
            degree: self.degree,
            node_family: self.node_family,
            values: self.values.clone(),
        };
        serde_json::to_string_pretty(&file).expect("fixture serialization cannot fail")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

fn check_solution_mesh(mesh: &[f64], period: f64) -> Result<()> {
    if !(period > 0.0) {
        return Err(Error::Ingestion(format!("period {period} must be positive")));
    }
    if mesh.len() < 2 {
        return Err(Error::Ingestion("mesh needs at least two endpoints".into()));
    }
    let slack = 1e-10 * period;
    if mesh[0].abs() > slack {
        return Err(Error::Ingestion(format!("mesh must start at 0, got {}", mesh[0])));
    }
    if (mesh[mesh.len() - 1] - period).abs() > slack {
        return Err(Error::Ingestion(format!(
            "mesh must end at the period {period}, got {}",
            mesh[mesh.len() - 1]
        )));
    }
    if mesh.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Ingestion("mesh must be strictly increasing".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Builtin catalog
// ---------------------------------------------------------------------------

/// Closed-form periodic solution of the quadratic renewal equation: the
/// branch of 4-periodic solutions parameterized by `gamma`. NaN below the
/// branch point where the amplitude radicand turns negative.
pub fn quadratic_re_solution(t: f64, gamma: f64) -> f64 {
    use std::f64::consts::PI;
    let amplitude =
        (0.5 - 1.0 / gamma - PI / (2.0 * gamma * gamma) * (1.0 + PI / 4.0)).sqrt();
    0.5 + PI / (4.0 * gamma) + amplitude * (PI / 2.0 * t).sin()
}

/// Instantiates a system from the builtin catalog.
///
/// Names: `quadratic-re` (parameter `gamma`; optionally a bound solution
/// fixture replacing the closed form), `belair-mackey` (parameters `gamma`,
/// `q0`, `n`, `theta`, `tau_m`, `tau_s`; requires a solution fixture),
/// `logistic-daphnia` (parameters `beta`, `abar`, `r`, `K`, `gamma`, `tau`;
/// requires a two-component fixture), `hayes` (parameters `a`, `b`).
pub fn builtin(name: &str, params: Params) -> Result<DelaySystem> {
    match name {
        "quadratic-re" => quadratic_re(params),
        "belair-mackey" => belair_mackey(params),
        "logistic-daphnia" => logistic_daphnia(params),
        "hayes" => hayes(params),
        other => Err(Error::Config(format!(
            "unknown builtin system `{other}` (available: quadratic-re, belair-mackey, logistic-daphnia, hayes)"
        ))),
    }
}

fn quadratic_re(params: Params) -> Result<DelaySystem> {
    params.require("gamma")?;
    let kernel = scalar_kernel(|t, theta, p: &Params| {
        let gamma = p.get("gamma").unwrap_or(f64::NAN);
        if gamma == 0.0 {
            return 0.0;
        }
        let xbar = match p.solution() {
            Some(sol) => sol.eval(1, t + theta).unwrap_or(f64::NAN),
            None => quadratic_re_solution(t + theta, gamma),
        };
        gamma / 2.0 * (1.0 - 2.0 * xbar)
    });
    DelaySystem::builder([1, 0], vec![1.0, 3.0], 4.0, 0.0)
        .c_xx(vec![None, Some(kernel)])
        .params(params)
        .build()
}

fn belair_mackey(params: Params) -> Result<DelaySystem> {
    for name in ["gamma", "q0", "n", "theta", "tau_m", "tau_s"] {
        params.require(name)?;
    }
    let sol = params
        .solution()
        .ok_or_else(|| {
            Error::MissingFixture("belair-mackey needs the numerically computed periodic solution".into())
        })?
        .clone();
    let tau_m = params.require("tau_m")?;
    let tau_s = params.require("tau_s")?;

    // derivative of the platelet production rate q(x) = q0 th^n x / (th^n + x^n)
    fn dq(x: f64, q0: f64, n: f64, theta: f64) -> f64 {
        let thn = theta.powf(n);
        let xn = x.powf(n);
        q0 * thn * ((1.0 - n) * xn + thn) / (thn + xn).powi(2)
    }

    let b1 = scalar_fn(|t, p: &Params| {
        let (q0, n, th) = (p.get("q0").unwrap(), p.get("n").unwrap(), p.get("theta").unwrap());
        let tau_m = p.get("tau_m").unwrap();
        let x = p.solution().and_then(|s| s.eval(1, t - tau_m).ok()).unwrap_or(f64::NAN);
        dq(x, q0, n, th)
    });
    let b2 = scalar_fn(|t, p: &Params| {
        let (q0, n, th) = (p.get("q0").unwrap(), p.get("n").unwrap(), p.get("theta").unwrap());
        let gamma = p.get("gamma").unwrap();
        let (tau_m, tau_s) = (p.get("tau_m").unwrap(), p.get("tau_s").unwrap());
        let x = p
            .solution()
            .and_then(|s| s.eval(1, t - tau_m - tau_s).ok())
            .unwrap_or(f64::NAN);
        -dq(x, q0, n, th) * (-gamma * tau_s).exp()
    });

    DelaySystem::builder([0, 1], vec![tau_m, tau_m + tau_s], sol.period(), 0.0)
        .a_yy(scalar_fn(|_, p: &Params| -p.get("gamma").unwrap()))
        .b_yy(vec![Some(b1), Some(b2)])
        .params(params)
        .mesh(MeshSpec::Endpoints(sol.piece_mesh().to_vec()))
        .build()
}

fn logistic_daphnia(params: Params) -> Result<DelaySystem> {
    for name in ["beta", "abar", "r", "K", "gamma", "tau"] {
        params.require(name)?;
    }
    let sol = params
        .solution()
        .ok_or_else(|| {
            Error::MissingFixture("logistic-daphnia needs the numerically computed periodic solution".into())
        })?
        .clone();
    if sol.components() != 2 {
        return Err(Error::MissingFixture(format!(
            "logistic-daphnia needs a two-component solution, fixture has {}",
            sol.components()
        )));
    }
    let abar = params.require("abar")?;
    let tau = params.require("tau")?;

    // int_abar^tau bbar(t - a) da, through the fixture interpolant
    fn birth_integral(t: f64, p: &Params) -> f64 {
        let (abar, tau) = (p.get("abar").unwrap(), p.get("tau").unwrap());
        let Some(sol) = p.solution() else { return f64::NAN };
        crate::basis::quad(
            crate::basis::QuadratureRule::Adaptive { tolerance: 1e-10 },
            |a| sol.eval(1, t - a).unwrap_or(f64::NAN),
            abar,
            tau,
        )
        .unwrap_or(f64::NAN)
    }

    let a_xy = scalar_fn(|t, p: &Params| p.get("beta").unwrap() * birth_integral(t, p));
    let a_yy = scalar_fn(|t, p: &Params| {
        let (r, k, gamma, tau) = (
            p.get("r").unwrap(),
            p.get("K").unwrap(),
            p.get("gamma").unwrap(),
            p.get("tau").unwrap(),
        );
        let s_delayed = p.solution().and_then(|s| s.eval(2, t - tau).ok()).unwrap_or(f64::NAN);
        r * (1.0 - s_delayed / k) - gamma * birth_integral(t, p)
    });
    let b_yy = scalar_fn(|t, p: &Params| {
        let (r, k) = (p.get("r").unwrap(), p.get("K").unwrap());
        let s = p.solution().and_then(|s| s.eval(2, t).ok()).unwrap_or(f64::NAN);
        -r / k * s
    });
    let c_xx = scalar_kernel(|t, _, p: &Params| {
        p.get("beta").unwrap()
            * p.solution().and_then(|s| s.eval(2, t).ok()).unwrap_or(f64::NAN)
    });
    let c_yx = scalar_kernel(|t, _, p: &Params| {
        -p.get("gamma").unwrap()
            * p.solution().and_then(|s| s.eval(2, t).ok()).unwrap_or(f64::NAN)
    });

    DelaySystem::builder([1, 1], vec![abar, tau], sol.period(), 0.0)
        .a_xy(a_xy)
        .a_yy(a_yy)
        .b_yy(vec![None, Some(b_yy)])
        .c_xx(vec![None, Some(c_xx)])
        .c_yx(vec![None, Some(c_yx)])
        .params(params)
        .mesh(MeshSpec::Endpoints(sol.piece_mesh().to_vec()))
        .build()
}

fn hayes(params: Params) -> Result<DelaySystem> {
    params.require("a")?;
    params.require("b")?;
    DelaySystem::builder([0, 1], vec![1.0], 1.0, 0.0)
        .a_yy(scalar_fn(|_, p: &Params| p.get("a").unwrap()))
        .b_yy(vec![Some(scalar_fn(|_, p: &Params| p.get("b").unwrap()))])
        .params(params)
        .build()
}
