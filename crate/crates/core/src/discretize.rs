//! Assembly of the finite-dimensional monodromy approximation.
//!
//! The state of the coupled equation on `[-tau_eff, omega]` is represented
//! by nodal values of continuous piecewise polynomials: `(Phi, Psi)` on the
//! backward grid and `(W, Z)` on the forward grid, where `W` plays the role
//! of the renewal component on `[0, omega]` and `Z` the derivative of the
//! delay-differential component. The pieced-together solution reads
//!
//! ```text
//! x(u) = Phi(u)     (u < 0)        x(u) = W(u)                  (u > 0)
//! y(u) = Psi(u)     (u < 0)        y(u) = Psi(0) + int_0^u Z    (u > 0)
//! ```
//!
//! with ownership of `u = 0` decided by [`ZeroDirection`]. Collocating the
//! right-hand side at the forward grid yields the blocks `U1`, `U2` of the
//! discrete fixed-point equation `(W, Z) = U1 (Phi, Psi) + U2 (W, Z)`;
//! sampling the solution at `omega + theta_i` yields `T1`, `T2`; and the
//! monodromy matrix is `T = T1 + T2 (I - U2)^{-1} U1`.
//!
//! Unknown vectors are ordered `(Phi, Psi)` then `(W, Z)`, grid-point-major
//! and vector-component-minor within each block.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{clenshaw_curtis_rule, NodeFamily, NodeSet, QuadratureRule};
use crate::mesh::{locate, LeftmostStrategy, PiecewiseMesh, ResolvedLeftmost};
use crate::model::{block_name, Axis, DelaySystem, KernelFn};
use crate::{Error, Result};

/// Which side of the pieced-together solution owns the evaluation at time
/// exactly `0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroDirection {
    /// `0` belongs to the history interval `[-tau, 0]`.
    DelayOwned,
    /// `0` belongs to the evolution interval `[0, omega]`. Default; for
    /// non-neutral problems the two choices agree.
    EvolutionOwned,
}

impl std::str::FromStr for ZeroDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delay-owned" => Ok(ZeroDirection::DelayOwned),
            "evolution-owned" => Ok(ZeroDirection::EvolutionOwned),
            other => Err(Error::Config(format!("unknown zero direction `{other}`"))),
        }
    }
}

fn default_degree() -> usize {
    10
}

fn default_family() -> NodeFamily {
    NodeFamily::ChebExtrema
}

fn default_strategy() -> LeftmostStrategy {
    LeftmostStrategy::Exact
}

fn default_threshold() -> f64 {
    f64::EPSILON
}

fn default_zero_direction() -> ZeroDirection {
    ZeroDirection::EvolutionOwned
}

/// Discretization controls.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct MethodOptions {
    /// Degree `M` of the piecewise polynomials.
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_family")]
    pub family: NodeFamily,
    #[serde(default = "default_strategy")]
    pub strategy: LeftmostStrategy,
    /// Tiny-piece threshold, relative to `omega`; also the lower bound on
    /// `tau / omega`.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Quadrature for the distributed-delay kernels; `None` selects
    /// Clenshaw-Curtis with `M + 1` nodes, matching the resolution of the
    /// collocation.
    #[serde(default)]
    pub quadrature: Option<QuadratureRule>,
    #[serde(default = "default_zero_direction")]
    pub zero_direction: ZeroDirection,
}

impl Default for MethodOptions {
    fn default() -> Self {
        MethodOptions {
            degree: default_degree(),
            family: default_family(),
            strategy: default_strategy(),
            threshold: default_threshold(),
            quadrature: None,
            zero_direction: default_zero_direction(),
        }
    }
}

impl MethodOptions {
    pub fn with_degree(degree: usize) -> Self {
        MethodOptions {
            degree,
            ..Default::default()
        }
    }

    pub fn kernel_quadrature(&self) -> QuadratureRule {
        self.quadrature.unwrap_or(QuadratureRule::ClenshawCurtis {
            order: self.degree + 1,
        })
    }
}

/// Value of the pieced-together solution at one time, for one scalar
/// component, as a linear functional of the unknown blocks. Entries are
/// `(grid index, weight)` pairs; the component offset is applied when the
/// functional is scattered into matrix rows.
#[derive(Clone, Debug, Default)]
pub struct StateFunctional {
    pub phi: Vec<(usize, f64)>,
    pub psi: Vec<(usize, f64)>,
    pub w: Vec<(usize, f64)>,
    pub z: Vec<(usize, f64)>,
}

/// Dimension and mesh bookkeeping of an assembled discretization.
#[derive(Clone, Debug)]
pub struct DiscretizationInfo {
    pub dim_x: usize,
    pub dim_y: usize,
    pub n_backward: usize,
    pub n_forward: usize,
    pub omega: f64,
    pub tau: f64,
    pub tau_eff: f64,
    pub resolved_strategy: ResolvedLeftmost,
    pub forward_partition: Vec<f64>,
    pub backward_partition: Vec<f64>,
    pub condition_estimate: f64,
}

impl DiscretizationInfo {
    /// `n = (dim_x + dim_y) * N_backward`, the order of `T`.
    pub fn dim_state(&self) -> usize {
        (self.dim_x + self.dim_y) * self.n_backward
    }

    pub fn dim_forward(&self) -> usize {
        (self.dim_x + self.dim_y) * self.n_forward
    }
}

/// The dense blocks of the discretized monodromy operator and the assembled
/// matrix `T = T1 + T2 (I - U2)^{-1} U1`.
#[derive(Clone, Debug)]
pub struct MonodromyMatrices {
    pub t1: DMatrix<f64>,
    pub t2: DMatrix<f64>,
    pub u1: DMatrix<f64>,
    pub u2: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub info: DiscretizationInfo,
}

/// A collocation discretization: the mesh, the node set and the options,
/// bound to one system.
pub struct Discretization<'a> {
    system: &'a DelaySystem,
    pub options: MethodOptions,
    pub mesh: PiecewiseMesh,
    nodeset: NodeSet,
}

impl<'a> Discretization<'a> {
    pub fn new(system: &'a DelaySystem, options: &MethodOptions) -> Result<Self> {
        let nodeset = NodeSet::new(options.family, options.degree)?;
        let mesh = PiecewiseMesh::build(
            system.omega(),
            system.tau(),
            system.mesh_spec(),
            &nodeset,
            options.strategy,
            options.threshold,
        )?;
        Ok(Discretization {
            system,
            options: options.clone(),
            mesh,
            nodeset,
        })
    }

    fn zero_tol(&self) -> f64 {
        1e-12 * self.mesh.omega.max(self.mesh.tau_eff).max(1.0)
    }

    /// The value of the pieced-together solution at time `u`, for the `part`
    /// component family, as a linear functional of `(Phi, Psi, W, Z)`.
    pub fn state_row(&self, u: f64, part: Axis) -> Result<StateFunctional> {
        let slack = 1e-10 * self.mesh.omega.max(self.mesh.tau_eff).max(1.0);
        if u < -self.mesh.tau_eff - slack || u > self.mesh.omega + slack {
            return Err(Error::Domain(format!(
                "state time {u} outside [{}, {}]",
                -self.mesh.tau_eff, self.mesh.omega
            )));
        }
        let u = if u.abs() <= self.zero_tol() { 0.0 } else { u };
        let history =
            u < 0.0 || (u == 0.0 && self.options.zero_direction == ZeroDirection::DelayOwned);

        let mut f = StateFunctional::default();
        if history {
            let piece = locate(&self.mesh.backward, u)?;
            let (a, b) = (self.mesh.backward[piece], self.mesh.backward[piece + 1]);
            let row = self.nodeset.eval_row(a, b, u);
            let base = piece * self.mesh.degree;
            let entries = row
                .into_iter()
                .enumerate()
                .filter(|(_, v)| *v != 0.0)
                .map(|(k, v)| (base + k, v));
            match part {
                Axis::X => f.phi.extend(entries),
                Axis::Y => f.psi.extend(entries),
            }
            return Ok(f);
        }

        match part {
            Axis::X => {
                let piece = locate(&self.mesh.forward, u)?;
                let (a, b) = (self.mesh.forward[piece], self.mesh.forward[piece + 1]);
                let row = self.nodeset.eval_row(a, b, u);
                let base = piece * self.mesh.degree;
                f.w.extend(
                    row.into_iter()
                        .enumerate()
                        .filter(|(_, v)| *v != 0.0)
                        .map(|(k, v)| (base + k, v)),
                );
            }
            Axis::Y => {
                // y(u) = Psi(0) + int_0^u z
                f.psi.push((self.mesh.n_backward() - 1, 1.0));
                let piece = locate(&self.mesh.forward, u)?;
                let m = self.mesh.degree;
                for p in 0..piece {
                    let (a, b) = (self.mesh.forward[p], self.mesh.forward[p + 1]);
                    let row = self.nodeset.integ_row(a, b, b)?;
                    let base = p * m;
                    for (k, v) in row.into_iter().enumerate() {
                        accumulate(&mut f.z, base + k, v);
                    }
                }
                let a = self.mesh.forward[piece];
                if u > a + self.zero_tol() {
                    let b = self.mesh.forward[piece + 1];
                    let row = self.nodeset.integ_row(a, b, u)?;
                    let base = piece * m;
                    for (k, v) in row.into_iter().enumerate() {
                        accumulate(&mut f.z, base + k, v);
                    }
                }
            }
        }
        Ok(f)
    }

    /// One block-row of `(U1 | U2)`: the collocation of the right-hand side
    /// at forward node `j`, time-shifted by the initial time. Row `r` is the
    /// X-equation component `r` for `r < dim_x`, then the Y-equation
    /// components.
    pub fn rhs_row(&self, j: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let dtot = self.system.dim_total();
        let mut u1 = DMatrix::zeros(dtot, self.dim_state());
        let mut u2 = DMatrix::zeros(dtot, self.dim_forward());
        self.rhs_row_into(j, &mut u1, &mut u2)?;
        Ok((u1, u2))
    }

    /// One block-row of `(T1 | T2)`: the solution value at `omega + theta_i`
    /// for backward node `i`, same row layout as [`Discretization::rhs_row`].
    pub fn output_row(&self, i: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let dtot = self.system.dim_total();
        let mut t1 = DMatrix::zeros(dtot, self.dim_state());
        let mut t2 = DMatrix::zeros(dtot, self.dim_forward());
        self.output_row_into(i, &mut t1, &mut t2)?;
        Ok((t1, t2))
    }

    fn dim_state(&self) -> usize {
        self.system.dim_total() * self.mesh.n_backward()
    }

    fn dim_forward(&self) -> usize {
        self.system.dim_total() * self.mesh.n_forward()
    }

    fn col_backward(&self, axis: Axis, g: usize, c: usize) -> usize {
        match axis {
            Axis::X => g * self.system.dim_x() + c,
            Axis::Y => self.system.dim_x() * self.mesh.n_backward() + g * self.system.dim_y() + c,
        }
    }

    fn col_forward(&self, axis: Axis, g: usize, c: usize) -> usize {
        match axis {
            Axis::X => g * self.system.dim_x() + c,
            Axis::Y => self.system.dim_x() * self.mesh.n_forward() + g * self.system.dim_y() + c,
        }
    }

    /// Scatters `weight * m[(r, c)] * functional(component c)` into row
    /// `local(eq) + r` of the backward/forward destination blocks.
    fn scatter(
        &self,
        dest_b: &mut DMatrix<f64>,
        dest_f: &mut DMatrix<f64>,
        eq: Axis,
        var: Axis,
        m: &DMatrix<f64>,
        functional: &StateFunctional,
        weight: f64,
    ) {
        let local0 = match eq {
            Axis::X => 0,
            Axis::Y => self.system.dim_x(),
        };
        for r in 0..self.system.dim_of(eq) {
            let row = local0 + r;
            for c in 0..self.system.dim_of(var) {
                let coef = weight * m[(r, c)];
                if coef == 0.0 {
                    continue;
                }
                for &(g, v) in &functional.phi {
                    dest_b[(row, self.col_backward(Axis::X, g, c))] += coef * v;
                }
                for &(g, v) in &functional.psi {
                    dest_b[(row, self.col_backward(Axis::Y, g, c))] += coef * v;
                }
                for &(g, v) in &functional.w {
                    dest_f[(row, self.col_forward(Axis::X, g, c))] += coef * v;
                }
                for &(g, v) in &functional.z {
                    dest_f[(row, self.col_forward(Axis::Y, g, c))] += coef * v;
                }
            }
        }
    }

    fn check_coef(
        &self,
        m: DMatrix<f64>,
        name: &dyn Fn() -> String,
        t: f64,
        theta: Option<f64>,
        eq: Axis,
        var: Axis,
    ) -> Result<DMatrix<f64>> {
        if m.nrows() != self.system.dim_of(eq) || m.ncols() != self.system.dim_of(var) {
            return Err(Error::InvalidSystem(format!(
                "coefficient {} returned a {}x{} matrix, expected {}x{}",
                name(),
                m.nrows(),
                m.ncols(),
                self.system.dim_of(eq),
                self.system.dim_of(var)
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Assembly { name: name(), t, theta });
        }
        Ok(m)
    }

    fn rhs_row_into(
        &self,
        j: usize,
        u1: &mut DMatrix<f64>,
        u2: &mut DMatrix<f64>,
    ) -> Result<()> {
        let tj = self.mesh.grid_forward[j];
        let t_abs = self.system.start_time() + tj;
        for (eq, var) in AXIS_PAIRS {
            if self.system.dim_of(eq) == 0 || self.system.dim_of(var) == 0 {
                continue;
            }
            if let Some(f) = self.system.a.get(eq, var) {
                let name = || block_name("A", eq, var);
                let m = self.check_coef(f(t_abs, &self.system.params), &name, t_abs, None, eq, var)?;
                let sf = self.state_row(tj, var)?;
                self.scatter(u1, u2, eq, var, &m, &sf, 1.0);
            }
            for (k, slot) in self.system.b.get(eq, var).iter().enumerate() {
                if let Some(f) = slot {
                    let name = || format!("{}[{}]", block_name("B", eq, var), k + 1);
                    let m =
                        self.check_coef(f(t_abs, &self.system.params), &name, t_abs, None, eq, var)?;
                    let sf = self.state_row(tj - self.system.delays()[k], var)?;
                    self.scatter(u1, u2, eq, var, &m, &sf, 1.0);
                }
            }
            for (k, slot) in self.system.c.get(eq, var).iter().enumerate() {
                if let Some(kern) = slot {
                    let lo = -self.system.delays()[k];
                    let hi = if k == 0 { 0.0 } else { -self.system.delays()[k - 1] };
                    self.kernel_term(j, u1, u2, eq, var, kern, k, lo, hi)?;
                }
            }
        }
        Ok(())
    }

    /// Distributed-delay term over `theta in [lo, hi]`. The interval is
    /// split at every point where `T_j + theta` crosses a piece endpoint or
    /// `0`: the interpolated state is only piecewise smooth, and splitting
    /// restores per-piece smoothness before the quadrature rule is applied.
    #[allow(clippy::too_many_arguments)]
    fn kernel_term(
        &self,
        j: usize,
        u1: &mut DMatrix<f64>,
        u2: &mut DMatrix<f64>,
        eq: Axis,
        var: Axis,
        kern: &KernelFn,
        k: usize,
        lo: f64,
        hi: f64,
    ) -> Result<()> {
        let tj = self.mesh.grid_forward[j];
        let t_abs = self.system.start_time() + tj;
        let name = || format!("{}[{}]", block_name("C", eq, var), k + 1);

        let tol = self.zero_tol();
        let mut cuts = vec![lo, hi];
        for m in self
            .mesh
            .backward
            .iter()
            .chain(self.mesh.forward.iter().skip(1))
        {
            let theta = m - tj;
            if theta > lo + tol && theta < hi - tol {
                cuts.push(theta);
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| (*a - *b).abs() <= tol);

        let rule = self.options.kernel_quadrature();
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            match rule {
                QuadratureRule::ClenshawCurtis { order } => {
                    let (xs, ws) = clenshaw_curtis_rule(order.max(2), a, b)?;
                    for (&theta, &wq) in xs.iter().zip(&ws) {
                        let m = self.check_coef(
                            kern(t_abs, theta, &self.system.params),
                            &name,
                            t_abs,
                            Some(theta),
                            eq,
                            var,
                        )?;
                        let sf = self.state_row(tj + theta, var)?;
                        self.scatter(u1, u2, eq, var, &m, &sf, wq);
                    }
                }
                QuadratureRule::Adaptive { tolerance } => {
                    self.kernel_adaptive(j, u1, u2, eq, var, kern, &name, a, b, tolerance, 64)?;
                }
            }
        }
        Ok(())
    }

    /// Bisection refinement for the adaptive kernel rule: a subinterval is
    /// accepted when roughly doubling the Clenshaw-Curtis order moves the
    /// scattered block by less than the tolerance.
    #[allow(clippy::too_many_arguments)]
    fn kernel_adaptive(
        &self,
        j: usize,
        u1: &mut DMatrix<f64>,
        u2: &mut DMatrix<f64>,
        eq: Axis,
        var: Axis,
        kern: &KernelFn,
        name: &dyn Fn() -> String,
        a: f64,
        b: f64,
        tol: f64,
        depth: usize,
    ) -> Result<()> {
        let tj = self.mesh.grid_forward[j];
        let t_abs = self.system.start_time() + tj;
        let dtot = self.system.dim_total();
        let mut block = |order: usize| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
            let mut b1 = DMatrix::zeros(dtot, self.dim_state());
            let mut b2 = DMatrix::zeros(dtot, self.dim_forward());
            let (xs, ws) = clenshaw_curtis_rule(order, a, b)?;
            for (&theta, &wq) in xs.iter().zip(&ws) {
                let m = self.check_coef(
                    kern(t_abs, theta, &self.system.params),
                    name,
                    t_abs,
                    Some(theta),
                    eq,
                    var,
                )?;
                let sf = self.state_row(tj + theta, var)?;
                self.scatter(&mut b1, &mut b2, eq, var, &m, &sf, wq);
            }
            Ok((b1, b2))
        };
        let coarse = block(9)?;
        let fine = block(17)?;
        let err = (&fine.0 - &coarse.0)
            .amax()
            .max((&fine.1 - &coarse.1).amax());
        // the width floor stops the bisection cascade next to a zero-direction
        // cut, where the endpoint column routing never agrees between orders;
        // the contribution left unresolved there is O(width)
        let width_floor = 32.0 * f64::EPSILON * a.abs().max(b.abs()).max(1.0);
        if err <= tol || b - a <= width_floor {
            *u1 += fine.0;
            *u2 += fine.1;
            return Ok(());
        }
        if depth == 0 {
            return Err(Error::QuadratureFailure { a, b, max_depth: 64 });
        }
        let mid = 0.5 * (a + b);
        self.kernel_adaptive(j, u1, u2, eq, var, kern, name, a, mid, tol / 2.0, depth - 1)?;
        self.kernel_adaptive(j, u1, u2, eq, var, kern, name, mid, b, tol / 2.0, depth - 1)
    }

    fn output_row_into(
        &self,
        i: usize,
        t1: &mut DMatrix<f64>,
        t2: &mut DMatrix<f64>,
    ) -> Result<()> {
        let u = self.mesh.omega + self.mesh.grid_backward[i];
        for axis in [Axis::X, Axis::Y] {
            let dim = self.system.dim_of(axis);
            if dim == 0 {
                continue;
            }
            let sf = self.state_row(u, axis)?;
            let local0 = match axis {
                Axis::X => 0,
                Axis::Y => self.system.dim_x(),
            };
            for r in 0..dim {
                let row = local0 + r;
                for &(g, v) in &sf.phi {
                    t1[(row, self.col_backward(Axis::X, g, r))] += v;
                }
                for &(g, v) in &sf.psi {
                    t1[(row, self.col_backward(Axis::Y, g, r))] += v;
                }
                for &(g, v) in &sf.w {
                    t2[(row, self.col_forward(Axis::X, g, r))] += v;
                }
                for &(g, v) in &sf.z {
                    t2[(row, self.col_forward(Axis::Y, g, r))] += v;
                }
            }
        }
        Ok(())
    }

    /// Builds all four blocks row by row and solves the dense fixed-point
    /// system for the assembled monodromy matrix.
    pub fn assemble(&self) -> Result<MonodromyMatrices> {
        let n_state = self.dim_state();
        let n_fwd = self.dim_forward();
        let dtot = self.system.dim_total();
        let dx = self.system.dim_x();
        let dy = self.system.dim_y();
        let n_b = self.mesh.n_backward();
        let n_f = self.mesh.n_forward();

        let mut u1 = DMatrix::zeros(n_fwd, n_state);
        let mut u2 = DMatrix::zeros(n_fwd, n_fwd);
        let mut b1 = DMatrix::zeros(dtot, n_state);
        let mut b2 = DMatrix::zeros(dtot, n_fwd);
        for j in 0..n_f {
            b1.fill(0.0);
            b2.fill(0.0);
            self.rhs_row_into(j, &mut b1, &mut b2)?;
            for r in 0..dx {
                copy_row(&mut u1, &b1, j * dx + r, r);
                copy_row(&mut u2, &b2, j * dx + r, r);
            }
            for r in 0..dy {
                copy_row(&mut u1, &b1, dx * n_f + j * dy + r, dx + r);
                copy_row(&mut u2, &b2, dx * n_f + j * dy + r, dx + r);
            }
        }

        let mut t1 = DMatrix::zeros(n_state, n_state);
        let mut t2 = DMatrix::zeros(n_state, n_fwd);
        for i in 0..n_b {
            b1.fill(0.0);
            b2.fill(0.0);
            self.output_row_into(i, &mut b1, &mut b2)?;
            for r in 0..dx {
                copy_row(&mut t1, &b1, i * dx + r, r);
                copy_row(&mut t2, &b2, i * dx + r, r);
            }
            for r in 0..dy {
                copy_row(&mut t1, &b1, dx * n_b + i * dy + r, dx + r);
                copy_row(&mut t2, &b2, dx * n_b + i * dy + r, dx + r);
            }
        }

        let fixed_point = DMatrix::identity(n_fwd, n_fwd) - &u2;
        let sv = fixed_point.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if cond > 1.0 / (100.0 * f64::EPSILON) {
            return Err(Error::SingularFixedPoint { cond });
        }
        let solved = fixed_point
            .lu()
            .solve(&u1)
            .ok_or(Error::SingularFixedPoint { cond })?;
        let t = &t1 + &t2 * &solved;

        Ok(MonodromyMatrices {
            t1,
            t2,
            u1,
            u2,
            t,
            info: DiscretizationInfo {
                dim_x: dx,
                dim_y: dy,
                n_backward: n_b,
                n_forward: n_f,
                omega: self.mesh.omega,
                tau: self.mesh.tau,
                tau_eff: self.mesh.tau_eff,
                resolved_strategy: self.mesh.resolved,
                forward_partition: self.mesh.forward.clone(),
                backward_partition: self.mesh.backward.clone(),
                condition_estimate: cond,
            },
        })
    }
}

const AXIS_PAIRS: [(Axis, Axis); 4] = [
    (Axis::X, Axis::X),
    (Axis::X, Axis::Y),
    (Axis::Y, Axis::X),
    (Axis::Y, Axis::Y),
];

fn accumulate(entries: &mut Vec<(usize, f64)>, index: usize, value: f64) {
    if value == 0.0 {
        return;
    }
    if let Some(e) = entries.iter_mut().find(|(g, _)| *g == index) {
        e.1 += value;
    } else {
        entries.push((index, value));
    }
}

fn copy_row(dest: &mut DMatrix<f64>, src: &DMatrix<f64>, dest_row: usize, src_row: usize) {
    for c in 0..src.ncols() {
        dest[(dest_row, c)] = src[(src_row, c)];
    }
}

/// Assembles the monodromy matrices of `system` under `options`.
pub fn assemble(system: &DelaySystem, options: &MethodOptions) -> Result<MonodromyMatrices> {
    Discretization::new(system, options)?.assemble()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::quad;
    use crate::mesh::MeshSpec;
    use crate::model::{builtin, scalar_fn, scalar_kernel, Params};
    use approx::assert_relative_eq;

    fn hayes(a: f64, b: f64) -> DelaySystem {
        builtin("hayes", Params::new().with("a", a).with("b", b)).unwrap()
    }

    #[test]
    fn state_row_unit_at_backward_node() {
        let sys = hayes(0.0, 0.0);
        let d = Discretization::new(&sys, &MethodOptions::with_degree(6)).unwrap();
        for (i, &u) in d.mesh.grid_backward.iter().enumerate() {
            if u >= 0.0 {
                continue;
            }
            let sf = d.state_row(u, Axis::Y).unwrap();
            assert!(sf.z.is_empty() && sf.w.is_empty() && sf.phi.is_empty());
            assert_eq!(sf.psi, vec![(i, 1.0)]);
        }
    }

    #[test]
    fn state_row_y_at_zero_both_directions() {
        let sys = hayes(0.0, 0.0);
        for dir in [ZeroDirection::DelayOwned, ZeroDirection::EvolutionOwned] {
            let mut opts = MethodOptions::with_degree(5);
            opts.zero_direction = dir;
            let d = Discretization::new(&sys, &opts).unwrap();
            let sf = d.state_row(0.0, Axis::Y).unwrap();
            assert_eq!(sf.psi, vec![(d.mesh.n_backward() - 1, 1.0)]);
            assert!(sf.z.is_empty());
        }
    }

    #[test]
    fn state_row_y_integral_of_constant() {
        let sys = hayes(0.0, 0.0);
        let d = Discretization::new(&sys, &MethodOptions::with_degree(7)).unwrap();
        let sf = d.state_row(d.mesh.omega, Axis::Y).unwrap();
        assert_eq!(sf.psi, vec![(d.mesh.n_backward() - 1, 1.0)]);
        let total: f64 = sf.z.iter().map(|(_, v)| v).sum();
        assert_relative_eq!(total, d.mesh.omega, max_relative = 1e-13);
    }

    #[test]
    fn state_row_x_zero_direction_ownership() {
        let sys = builtin("quadratic-re", Params::new().with("gamma", 4.0)).unwrap();
        let mut opts = MethodOptions::with_degree(4);
        opts.zero_direction = ZeroDirection::EvolutionOwned;
        let d = Discretization::new(&sys, &opts).unwrap();
        let sf = d.state_row(0.0, Axis::X).unwrap();
        assert_eq!(sf.w, vec![(0, 1.0)]);
        assert!(sf.phi.is_empty());

        opts.zero_direction = ZeroDirection::DelayOwned;
        let d = Discretization::new(&sys, &opts).unwrap();
        let sf = d.state_row(0.0, Axis::X).unwrap();
        assert_eq!(sf.phi, vec![(d.mesh.n_backward() - 1, 1.0)]);
        assert!(sf.w.is_empty());
    }

    #[test]
    fn state_row_out_of_range() {
        let sys = hayes(0.0, 0.0);
        let d = Discretization::new(&sys, &MethodOptions::with_degree(4)).unwrap();
        assert!(d.state_row(2.0, Axis::Y).is_err());
        assert!(d.state_row(-1.5, Axis::Y).is_err());
    }

    #[test]
    fn rhs_row_hayes_structure() {
        // Z_j = a * (Psi(0) + int_0^{T_j} Z) + b * Psi-interp(T_j - 1)
        let (a, b) = (0.7, -1.3);
        let sys = hayes(a, b);
        let d = Discretization::new(&sys, &MethodOptions::with_degree(8)).unwrap();
        for j in [0, 3, d.mesh.n_forward() - 1] {
            let (u1, u2) = d.rhs_row(j).unwrap();
            let tj = d.mesh.grid_forward[j];
            let current = d.state_row(tj, Axis::Y).unwrap();
            let delayed = d.state_row(tj - 1.0, Axis::Y).unwrap();
            let mut want_u1 = vec![0.0; d.mesh.n_backward()];
            for &(g, v) in &current.psi {
                want_u1[g] += a * v;
            }
            for &(g, v) in &delayed.psi {
                want_u1[g] += b * v;
            }
            for (g, want) in want_u1.iter().enumerate() {
                assert_relative_eq!(u1[(0, g)], *want, epsilon = 1e-14);
            }
            let mut want_u2 = vec![0.0; d.mesh.n_forward()];
            for &(g, v) in &current.z {
                want_u2[g] += a * v;
            }
            for (g, want) in want_u2.iter().enumerate() {
                assert_relative_eq!(u2[(0, g)], *want, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn zero_system_conserves_psi0() {
        let sys = DelaySystem::builder([0, 1], vec![1.0], 1.0, 0.0)
            .build()
            .unwrap();
        let mm = assemble(&sys, &MethodOptions::with_degree(5)).unwrap();
        assert_eq!(mm.u1.amax(), 0.0);
        assert_eq!(mm.u2.amax(), 0.0);
        // T maps everything to the constant Psi(0) column
        for i in 0..mm.t.nrows() {
            for jcol in 0..mm.t.ncols() {
                let want = if jcol == mm.t.ncols() - 1 { 1.0 } else { 0.0 };
                assert_relative_eq!(mm.t[(i, jcol)], want, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn kernel_row_splits_and_matches_scalar_quadrature() {
        // against a constant-1 state, the kernel row reproduces the plain
        // integral of the kernel; the oracle is the adaptive scalar rule
        let sys = builtin("quadratic-re", Params::new().with("gamma", 4.0)).unwrap();
        let d = Discretization::new(&sys, &MethodOptions::default()).unwrap();
        for j in [0, 2, 7, d.mesh.n_forward() - 1] {
            let (u1, u2) = d.rhs_row(j).unwrap();
            let row_sum: f64 = u1.row(0).iter().sum::<f64>() + u2.row(0).iter().sum::<f64>();
            let tj = d.mesh.grid_forward[j];
            let oracle = quad(
                QuadratureRule::Adaptive { tolerance: 1e-12 },
                |theta| 2.0 * (1.0 - 2.0 * crate::model::quadratic_re_solution(tj + theta, 4.0)),
                -3.0,
                -1.0,
            )
            .unwrap();
            assert_relative_eq!(row_sum, oracle, epsilon = 1e-9);
        }
    }

    #[test]
    fn adaptive_kernel_rule_agrees_with_clenshaw_curtis() {
        // the matrices differ in the columns routing the jump at time 0, so
        // the comparison is on the spectra, not the entries
        let sys = builtin("quadratic-re", Params::new().with("gamma", 4.0)).unwrap();
        let mm_cc = assemble(&sys, &MethodOptions::default()).unwrap();
        let mut opts = MethodOptions::default();
        opts.quadrature = Some(QuadratureRule::Adaptive { tolerance: 1e-12 });
        let mm_ad = assemble(&sys, &opts).unwrap();
        let sorted = |m: &DMatrix<f64>| {
            let mut e: Vec<_> = m.complex_eigenvalues().iter().copied().collect();
            e.sort_by(|x, y| y.norm().partial_cmp(&x.norm()).unwrap());
            e
        };
        let (ecc, ead) = (sorted(&mm_cc.t), sorted(&mm_ad.t));
        for k in 0..5 {
            // the two rules integrate the kernel to different truncation
            // levels; CC at M+1 nodes carries a few units in the 6th digit
            assert!(
                (ecc[k] - ead[k]).norm() < 2e-5,
                "eigenvalue {k}: {} vs {}",
                ecc[k],
                ead[k]
            );
        }
    }

    #[test]
    fn output_rows_are_unit_selections_when_grids_coincide() {
        // tau = 3 lands on the shifted mesh and omega > tau, so every output
        // time omega + theta_i is itself a forward grid point
        let sys = DelaySystem::builder([1, 0], vec![1.0, 3.0], 4.0, 0.0)
            .c_xx(vec![None, Some(scalar_kernel(|_, _, _| 1.0))])
            .mesh(MeshSpec::Pieces(4))
            .build()
            .unwrap();
        let d = Discretization::new(&sys, &MethodOptions::with_degree(6)).unwrap();
        for i in 0..d.mesh.n_backward() {
            let (t1, t2) = d.output_row(i).unwrap();
            assert_eq!(t1.amax(), 0.0);
            let ones: Vec<usize> = (0..t2.ncols()).filter(|&c| t2[(0, c)] != 0.0).collect();
            assert_eq!(ones.len(), 1, "row {i} should be a unit selection");
            assert_eq!(t2[(0, ones[0])], 1.0);
            let u = d.mesh.omega + d.mesh.grid_backward[i];
            assert_relative_eq!(d.mesh.grid_forward[ones[0]], u, epsilon = 1e-12);
        }
    }

    #[test]
    fn output_row_pulls_history_when_omega_below_tau() {
        let sys = DelaySystem::builder([1, 0], vec![2.5], 1.0, 0.0)
            .c_xx(vec![Some(scalar_kernel(|_, _, _| 0.5))])
            .build()
            .unwrap();
        let d = Discretization::new(&sys, &MethodOptions::with_degree(5)).unwrap();
        let mut saw_history = false;
        for (i, &th) in d.mesh.grid_backward.iter().enumerate() {
            let u = d.mesh.omega + th;
            let (t1, t2) = d.output_row(i).unwrap();
            if u < 0.0 {
                saw_history = true;
                assert_eq!(t2.amax(), 0.0, "theta_i = {th}: T2 row must be empty");
                assert!(t1.amax() > 0.0);
            }
        }
        assert!(saw_history);
    }

    #[test]
    fn assembly_reports_nonfinite_coefficient() {
        let sys = DelaySystem::builder([0, 1], vec![1.0], 1.0, 0.0)
            .a_yy(scalar_fn(|t, _| if t > 0.5 { f64::NAN } else { 1.0 }))
            .build()
            .unwrap();
        match assemble(&sys, &MethodOptions::with_degree(6)) {
            Err(Error::Assembly { name, .. }) => assert_eq!(name, "A_YY"),
            other => panic!("expected assembly error, got {other:?}"),
        }
    }

    #[test]
    fn assemble_self_consistency() {
        for sys in [
            hayes(0.4, -0.9),
            builtin("quadratic-re", Params::new().with("gamma", 4.0)).unwrap(),
        ] {
            let mm = assemble(&sys, &MethodOptions::default()).unwrap();
            let n = mm.u2.nrows();
            let recomputed = &mm.t1
                + &mm.t2 * (DMatrix::identity(n, n) - &mm.u2).lu().solve(&mm.u1).unwrap();
            let denom = mm.t.amax().max(1.0);
            assert!((recomputed - &mm.t).amax() <= 1e-12 * denom);
        }
    }

    #[test]
    fn coupled_system_block_layout() {
        // x(t) = c y(t-1), y'(t) = a y(t) + b x(t-1)
        let sys = DelaySystem::builder([1, 1], vec![1.0], 1.0, 0.0)
            .b_xy(vec![Some(scalar_fn(|_, p| p.get("c").unwrap()))])
            .a_yy(scalar_fn(|_, p| p.get("a").unwrap()))
            .b_yx(vec![Some(scalar_fn(|_, p| p.get("b").unwrap()))])
            .params(Params::new().with("a", -0.5).with("b", 0.8).with("c", 0.9))
            .build()
            .unwrap();
        let d = Discretization::new(&sys, &MethodOptions::with_degree(4)).unwrap();
        let mm = d.assemble().unwrap();
        let n_b = d.mesh.n_backward();
        let n_f = d.mesh.n_forward();
        assert_eq!(mm.t.nrows(), 2 * n_b);
        assert_eq!(mm.u2.nrows(), 2 * n_f);
        // the X-equation row references only Psi (through y(t-1))
        let (u1, _) = d.rhs_row(2).unwrap();
        assert_eq!(u1.row(0).columns(0, n_b).amax(), 0.0);
        assert!(u1.row(0).columns(n_b, n_b).amax() > 0.0);
    }
}
