//! Pseudo-time iteration for
//!
//! ```text
//! -eps L u - |D u + p|^gamma I(u) = f   in B_1,     u = g outside B_1,
//! ```
//!
//! with `L` the fractional Laplacian of the family's order and `I` an Isaacs
//! family. Residuals use the sign `r = eps L u + |Du + p|^gamma I u + f`, so
//! that `u <- u + dt r` is the explicit monotone march.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{domain, usage, Result};
use crate::gridfn::{ExteriorExtension, GridFunction};
use crate::kernels::{IsaacsOperator, KernelSpec};
use crate::nonlocal_ops::{eval_i_delta, interior_index, Quadratic, QuadratureScheme, Stencil};

/// Right-hand side `f` on `B_1`.
#[derive(Clone)]
pub enum Source {
    Constant(f64),
    Function(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Source {
    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Source::Function(Arc::new(f))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Source::Constant(c) => *c,
            Source::Function(f) => f(x),
        }
    }
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Constant(c) => write!(f, "Constant({c})"),
            Source::Function(_) => f.write_str("Function(..)"),
        }
    }
}

/// Discretization of `|Du + p|` in the degenerate factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradientEstimate {
    /// `|(u(x+h) - u(x-h)) / 2h + p|`
    Central,
    /// `max(|D+ u + p|, |D- u + p|)`, nonzero at discrete extrema.
    Upwind,
}

#[derive(Clone, Debug)]
pub struct ProblemSpec {
    gamma: f64,
    shift_p: f64,
    rhs: Source,
    /// Dirichlet data on grid nodes with `|x| >= 1` and the extension beyond.
    boundary: GridFunction,
    operator: IsaacsOperator,
    gradient: GradientEstimate,
    quadrature: QuadratureScheme,
}

impl ProblemSpec {
    pub fn new(
        operator: IsaacsOperator,
        gamma: f64,
        shift_p: f64,
        rhs: Source,
        boundary: GridFunction,
    ) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(domain(format!("gamma = {gamma} must be >= 0")));
        }
        if !shift_p.is_finite() {
            return Err(domain("shift p must be finite"));
        }
        let grid = boundary.grid();
        for x in grid.nodes().filter(|x| x.abs() < 1.0) {
            let v = rhs.eval(x);
            if !v.is_finite() {
                return Err(domain(format!("f({x}) = {v} is not finite")));
            }
        }
        if boundary.values().iter().any(|v| !v.is_finite()) {
            return Err(domain("exterior data must be finite"));
        }
        boundary.tail_norm(operator.sigma())?;
        Ok(ProblemSpec {
            gamma,
            shift_p,
            rhs,
            boundary,
            operator,
            gradient: GradientEstimate::Upwind,
            quadrature: QuadratureScheme::default(),
        })
    }

    pub fn with_gradient(mut self, gradient: GradientEstimate) -> Self {
        self.gradient = gradient;
        self
    }

    pub fn with_quadrature(mut self, q: QuadratureScheme) -> Self {
        self.quadrature = q;
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn shift_p(&self) -> f64 {
        self.shift_p
    }

    pub fn rhs(&self) -> &Source {
        &self.rhs
    }

    pub fn boundary(&self) -> &GridFunction {
        &self.boundary
    }

    pub fn operator(&self) -> &IsaacsOperator {
        &self.operator
    }

    pub fn gradient(&self) -> GradientEstimate {
        self.gradient
    }

    pub fn quadrature(&self) -> &QuadratureScheme {
        &self.quadrature
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveConfig {
    pub epsilon_schedule: Vec<f64>,
    pub cfl_factor: f64,
    pub tol_residual: f64,
    pub max_iters: usize,
    pub sweep: Sweep,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            epsilon_schedule: (0..6).map(|k| 0.1 * 0.5f64.powi(k)).collect(),
            cfl_factor: 0.9,
            tol_residual: 1e-6,
            max_iters: 500_000,
            sweep: Sweep::Sor(1.5),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epsilon_schedule.is_empty() {
            return Err(usage("epsilon schedule is empty"));
        }
        if self.epsilon_schedule.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(domain("epsilon values must be positive"));
        }
        if self.epsilon_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return Err(domain("epsilon schedule must be strictly decreasing"));
        }
        if !(self.cfl_factor > 0.0 && self.cfl_factor < 1.0) {
            return Err(domain(format!("cfl factor {} outside (0, 1)", self.cfl_factor)));
        }
        if !(self.tol_residual > 0.0) {
            return Err(domain("residual tolerance must be positive"));
        }
        if self.max_iters == 0 {
            return Err(domain("max_iters must be positive"));
        }
        Ok(())
    }
}

/// Update order of the pseudo-time march.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sweep {
    /// Simultaneous update with per-node steps `cfl / stiffness`.
    Jacobi,
    /// In-place sweep in node order with relaxation factor `omega`.
    Sor(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViscousStatus {
    pub epsilon: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub u: GridFunction,
    pub stages: Vec<ViscousStatus>,
    /// `sup_{B_1/2} |u_k - u_{k+1}|` between consecutive stages.
    pub increments: Vec<f64>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.stages.iter().all(|s| s.converged)
    }

    /// First non-convergent stage, if any.
    pub fn failed_stage(&self) -> Option<usize> {
        self.stages.iter().position(|s| !s.converged)
    }
}

/// One kernel restricted to the unknowns `|x| < 1`: `I u = fixed - diag u_i + Σ_{j≠i} w_|i-j| u_j`.
struct Block {
    fixed: Vec<f64>,
    diag: f64,
}

/// Precomputed linear pieces of every kernel in the problem.
struct Assembly {
    lo: usize,
    n: usize,
    /// Kernel count: the Isaacs family followed by the fractional Laplacian.
    q: usize,
    /// Per kernel, `w[k]` for `k = 0..n` (`w[0] = 0`).
    w: Vec<Vec<f64>>,
    /// The same weights reversed, so that `j < i` sums run forward in memory.
    w_rev: Vec<Vec<f64>>,
    blocks: Vec<Block>,
}

/// Dot product with four fixed accumulators; the order is independent of threading.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl Assembly {
    fn new(prob: &ProblemSpec) -> Result<Self> {
        let g = &prob.boundary;
        let grid = g.grid();
        let r = grid.radius();
        let growth = g.exterior().growth(r);
        let idx: Vec<usize> = (0..grid.len()).filter(|&i| grid.node(i as i64).abs() < 1.0).collect();
        let (lo, n) = (idx[0], idx.len());
        let frac = KernelSpec::frac_laplacian(prob.operator.sigma())?;
        let stencils: Vec<Stencil> = prob
            .operator
            .kernels()
            .chain(std::iter::once(&frac))
            .map(|k| Stencil::new(k, grid, growth, &prob.quadrature))
            .collect::<Result<_>>()?;
        let q = stencils.len();
        let w: Vec<Vec<f64>> = stencils
            .iter()
            .map(|st| {
                (0..n)
                    .map(|k| if k == 0 { 0.0 } else { st.node_weights()[k - 1] })
                    .collect()
            })
            .collect();
        let w_rev = w.iter().map(|ws| ws.iter().rev().copied().collect()).collect();
        // Dirichlet data with the unknowns zeroed: the stencil applied to it
        // yields the fixed part plus `-2 u_i * mass` with u_i = 0.
        let mut data = g.values().to_vec();
        for v in &mut data[lo..lo + n] {
            *v = 0.0;
        }
        let known = g.with_values(data)?;
        let blocks = stencils
            .iter()
            .map(|st| Block {
                fixed: (0..n).into_par_iter().map(|i| st.apply(&known, lo + i)).collect(),
                diag: st.diagonal(),
            })
            .collect();
        Ok(Assembly {
            lo,
            n,
            q,
            w,
            w_rev,
            blocks,
        })
    }

    /// All kernel values at local node `i`.
    fn apply(&self, u: &[f64], i: usize, out: &mut [f64]) {
        let n = self.n;
        for (s, b) in self.blocks.iter().enumerate() {
            // j < i uses w[i - j] = w_rev[n - 1 - i + j]; j > i uses w[j - i]
            let left = dot(&self.w_rev[s][n - 1 - i..n - 1], &u[..i]);
            let right = dot(&self.w[s][1..n - i], &u[i + 1..]);
            out[s] = b.fixed[i] - b.diag * u[i] + left + right;
        }
    }

    fn max_family_diag(&self) -> f64 {
        self.blocks[..self.q - 1].iter().map(|b| b.diag).fold(0.0, f64::max)
    }
}

struct NodeEval {
    residual: f64,
    /// Local stability denominator.
    stiffness: f64,
    /// Part of `stiffness` coming from the integral operators.
    diffusive: f64,
}

fn gradient_size(values: &[f64], g: usize, h: f64, p: f64, kind: GradientEstimate) -> f64 {
    match kind {
        GradientEstimate::Central => ((values[g + 1] - values[g - 1]) / (2.0 * h) + p).abs(),
        GradientEstimate::Upwind => {
            let fwd = ((values[g + 1] - values[g]) / h + p).abs();
            let bwd = ((values[g] - values[g - 1]) / h + p).abs();
            fwd.max(bwd)
        }
    }
}

/// `G^gamma` with `0^0 = 1`: for `gamma = 0` the equation is not degenerate.
fn degenerate_factor(g: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        1.0
    } else {
        g.powf(gamma)
    }
}

struct Evaluator<'a> {
    prob: &'a ProblemSpec,
    asm: Assembly,
    rhs: Vec<f64>,
    h: f64,
}

impl<'a> Evaluator<'a> {
    fn new(prob: &'a ProblemSpec) -> Result<Self> {
        let asm = Assembly::new(prob)?;
        let grid = prob.boundary.grid();
        let rhs = (0..asm.n)
            .map(|i| prob.rhs.eval(grid.node((asm.lo + i) as i64)))
            .collect();
        Ok(Evaluator {
            prob,
            asm,
            rhs,
            h: grid.h(),
        })
    }

    fn check_compatible(&self, u: &GridFunction) -> Result<()> {
        if u.grid() != self.prob.boundary.grid() {
            return Err(usage("grid function and problem use different grids"));
        }
        Ok(())
    }

    fn eval_node(&self, values: &[f64], epsilon: f64, i: usize, buf: &mut [f64]) -> NodeEval {
        let asm = &self.asm;
        asm.apply(&values[asm.lo..asm.lo + asm.n], i, buf);
        let family = self.prob.operator.inf_sup(&buf[..asm.q - 1]);
        let frac = buf[asm.q - 1];
        let gamma = self.prob.gamma;
        let g = gradient_size(values, asm.lo + i, self.h, self.prob.shift_p, self.prob.gradient);
        let factor = degenerate_factor(g, gamma);
        let mut residual = factor * family + self.rhs[i];
        if epsilon > 0.0 {
            residual += epsilon * frac;
        }
        let slope = if gamma > 0.0 {
            gamma * g.max(self.h).powf(gamma - 1.0) * family.abs() / self.h
        } else {
            0.0
        };
        let diffusive = epsilon * asm.blocks[asm.q - 1].diag + factor * asm.max_family_diag();
        NodeEval {
            residual,
            stiffness: diffusive + slope + 1.0,
            diffusive,
        }
    }

    fn eval_all(&self, values: &[f64], epsilon: f64) -> Vec<NodeEval> {
        (0..self.asm.n)
            .into_par_iter()
            .map_init(
                || vec![0.0; self.asm.q],
                |buf, i| self.eval_node(values, epsilon, i, buf),
            )
            .collect()
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(domain(format!("epsilon = {epsilon} must be >= 0")));
    }
    Ok(())
}

/// Residual on the nodes of `B_1`; zero elsewhere.
pub fn residual(u: &GridFunction, prob: &ProblemSpec, epsilon: f64) -> Result<GridFunction> {
    check_epsilon(epsilon)?;
    let ev = Evaluator::new(prob)?;
    ev.check_compatible(u)?;
    Ok(residual_with(&ev, u, epsilon))
}

fn residual_with(ev: &Evaluator, u: &GridFunction, epsilon: f64) -> GridFunction {
    let mut out = vec![0.0; u.grid().len()];
    for (i, e) in ev.eval_all(u.values(), epsilon).into_iter().enumerate() {
        out[ev.asm.lo + i] = e.residual;
    }
    GridFunction::new(*u.grid(), out, ExteriorExtension::zero()).expect("same grid")
}

/// Largest stable global step for `pseudo_time_step` at `u`.
pub fn stability_bound(u: &GridFunction, prob: &ProblemSpec, epsilon: f64) -> Result<f64> {
    check_epsilon(epsilon)?;
    let ev = Evaluator::new(prob)?;
    ev.check_compatible(u)?;
    let worst = ev
        .eval_all(u.values(), epsilon)
        .iter()
        .map(|e| e.stiffness)
        .fold(0.0, f64::max);
    Ok(1.0 / worst)
}

/// `u + dt * residual(u)` on `B_1`, data outside left untouched.
pub fn pseudo_time_step(u: &GridFunction, prob: &ProblemSpec, epsilon: f64, dt: f64) -> Result<GridFunction> {
    check_epsilon(epsilon)?;
    let ev = Evaluator::new(prob)?;
    ev.check_compatible(u)?;
    let evals = ev.eval_all(u.values(), epsilon);
    let bound = 1.0 / evals.iter().map(|e| e.stiffness).fold(0.0, f64::max);
    if !(dt > 0.0) || dt > bound {
        return Err(usage(format!("dt = {dt} violates the stability bound {bound}")));
    }
    let mut values = u.values().to_vec();
    for (i, e) in evals.iter().enumerate() {
        values[ev.asm.lo + i] += dt * e.residual;
    }
    u.with_values(values)
}

const RELAX_WINDOW: usize = 50;

fn march(ev: &Evaluator, start: &GridFunction, epsilon: f64, config: &SolveConfig) -> (GridFunction, ViscousStatus) {
    let mut values = start.values().to_vec();
    let lo = ev.asm.lo;
    let mut status = ViscousStatus {
        epsilon,
        iterations: 0,
        residual: f64::INFINITY,
        converged: false,
    };
    let mut omega = match config.sweep {
        Sweep::Sor(w) => w,
        Sweep::Jacobi => 1.0,
    };
    let mut checkpoint = f64::INFINITY;
    loop {
        let evals = ev.eval_all(&values, epsilon);
        status.residual = evals.iter().map(|e| e.residual.abs()).fold(0.0, f64::max);
        if status.residual <= config.tol_residual {
            status.converged = true;
            break;
        }
        if status.iterations >= config.max_iters {
            break;
        }
        if status.iterations % RELAX_WINDOW == 0 {
            // no progress over a window: back off towards plain Gauss-Seidel
            if status.residual >= checkpoint {
                omega = 1.0 + 0.5 * (omega - 1.0);
            }
            checkpoint = status.residual;
        }
        match config.sweep {
            // local time stepping: each node marches with its own stable step
            Sweep::Jacobi => {
                for (i, e) in evals.iter().enumerate() {
                    values[lo + i] += config.cfl_factor * e.residual / e.stiffness;
                }
            }
            Sweep::Sor(_) => {
                let mut buf = vec![0.0; ev.asm.q];
                for i in 0..ev.asm.n {
                    let e = ev.eval_node(&values, epsilon, i, &mut buf);
                    // over-relax only the diffusive share; the gradient part is transport-like
                    let w = 1.0 + (omega - 1.0) * e.diffusive / e.stiffness;
                    values[lo + i] += w * e.residual / e.stiffness;
                }
            }
        }
        status.iterations += 1;
    }
    (start.with_values(values).expect("same grid"), status)
}

fn initial_guess(prob: &ProblemSpec) -> GridFunction {
    let mut values = prob.boundary.values().to_vec();
    let grid = prob.boundary.grid();
    for (i, v) in values.iter_mut().enumerate() {
        if grid.node(i as i64).abs() < 1.0 {
            *v = 0.0;
        }
    }
    prob.boundary.with_values(values).expect("same grid")
}

/// Pseudo-time iteration at fixed `epsilon > 0`, from `start` or from zero.
pub fn solve_viscous(
    prob: &ProblemSpec,
    epsilon: f64,
    config: &SolveConfig,
    start: Option<&GridFunction>,
) -> Result<(GridFunction, ViscousStatus)> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(domain(format!("epsilon = {epsilon} must be positive")));
    }
    let probe = SolveConfig {
        epsilon_schedule: vec![epsilon],
        ..config.clone()
    };
    probe.validate()?;
    let ev = Evaluator::new(prob)?;
    let init = match start {
        Some(u) => {
            ev.check_compatible(u)?;
            with_boundary(u, prob)
        }
        None => initial_guess(prob),
    };
    Ok(march(&ev, &init, epsilon, config))
}

/// `u` inside `B_1`, Dirichlet data outside.
fn with_boundary(u: &GridFunction, prob: &ProblemSpec) -> GridFunction {
    let grid = prob.boundary.grid();
    let values = (0..grid.len())
        .map(|i| {
            if grid.node(i as i64).abs() < 1.0 {
                u.values()[i]
            } else {
                prob.boundary.values()[i]
            }
        })
        .collect();
    prob.boundary.with_values(values).expect("same grid")
}

/// `sup_{|x| <= r} |u - v|`.
pub fn sup_distance(u: &GridFunction, v: &GridFunction, r: f64) -> f64 {
    u.grid()
        .nodes()
        .zip(u.values().iter().zip(v.values()))
        .filter(|(x, _)| x.abs() <= r)
        .map(|(_, (a, b))| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Warm-started sweep over the epsilon schedule.
pub fn solve_vanishing_viscosity(prob: &ProblemSpec, config: &SolveConfig) -> Result<SolveReport> {
    config.validate()?;
    let ev = Evaluator::new(prob)?;
    let mut u = initial_guess(prob);
    let mut stages = Vec::new();
    let mut increments = Vec::new();
    for (k, &eps) in config.epsilon_schedule.iter().enumerate() {
        let (next, status) = march(&ev, &u, eps, config);
        if k > 0 {
            increments.push(sup_distance(&u, &next, 0.5));
        }
        u = next;
        stages.push(status);
    }
    Ok(SolveReport { u, stages, increments })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TouchKind {
    /// Test function touches from above at a local maximum of `u - phi`.
    Sub,
    /// Test function touches from below.
    Super,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ViscosityCheck {
    Pass {
        lhs: f64,
    },
    Fail {
        lhs: f64,
    },
    /// `D phi(x) = -p`: the definition imposes nothing.
    Skipped,
}

const CONTACT_SLACK: f64 = 1e-12;

/// Discrete viscosity inequality at the node `x` for the `epsilon = 0` equation.
pub fn check_viscosity_inequality(
    u: &GridFunction,
    x: f64,
    test: &Quadratic,
    kind: TouchKind,
    prob: &ProblemSpec,
    delta: f64,
) -> Result<ViscosityCheck> {
    let grid = u.grid();
    let i = interior_index(grid, x)?;
    let scale = u.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let slack = CONTACT_SLACK * scale;
    if (test.value - u.values()[i]).abs() > slack {
        return Err(usage(format!(
            "test value {} does not touch u({x}) = {}",
            test.value,
            u.values()[i]
        )));
    }
    for j in grid.ball(x, delta) {
        let y = grid.node(j as i64);
        let gap = test.eval(y - x) - u.values()[j];
        let ok = match kind {
            TouchKind::Sub => gap >= -slack,
            TouchKind::Super => gap <= slack,
        };
        if !ok {
            return Err(usage(format!("test function crosses u at y = {y} (gap {gap:e})")));
        }
    }
    let g = (test.slope + prob.shift_p).abs();
    if g == 0.0 {
        return Ok(ViscosityCheck::Skipped);
    }
    let i_delta = eval_i_delta(u, test, &prob.operator, x, delta, &prob.quadrature)?;
    let lhs = -degenerate_factor(g, prob.gamma) * i_delta;
    let f = prob.rhs.eval(x);
    let tol = CONTACT_SLACK * lhs.abs().max(f.abs()).max(1.0);
    let holds = match kind {
        TouchKind::Sub => lhs <= f + tol,
        TouchKind::Super => lhs >= f - tol,
    };
    Ok(if holds {
        ViscosityCheck::Pass { lhs }
    } else {
        ViscosityCheck::Fail { lhs }
    })
}
