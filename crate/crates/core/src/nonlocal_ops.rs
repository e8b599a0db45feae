//! Quadrature for the nonlocal operators.
//!
//! For a symmetric kernel the principal value disappears after symmetrization:
//!
//! ```text
//! I_K u(x) = ∫_0^∞ g(z) K(z) dz,      g(z) = u(x+z) + u(x-z) - 2u(x).
//! ```
//!
//! With `G(z) = g(z) / z^2` (smooth and bounded near `z = 0`), the integral is
//! `∫_0^∞ G(z) C kappa(z) z^{1-sigma} dz`. On `[0, delta]` `G` is replaced by the
//! central second difference `G(h)`; on each later cell `[kh, (k+1)h]` it is
//! interpolated linearly between grid values and integrated exactly against the
//! weight (product integration). Beyond `z = 2R` both `x ± z` lie outside the grid
//! and the extension formula is integrated on a fixed tail rule.

use rayon::prelude::*;

use crate::error::{domain, usage, Result};
use crate::gridfn::{Grid, GridFunction};
use crate::kernels::{IsaacsOperator, KernelSpec};
use crate::quadrature::{kernel_tail, mapped, Growth, CELL_POINTS};

/// Number of dyadic pieces used for the first cell `[0, h]`.
const FIRST_CELL_PIECES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureScheme {
    /// Inner cutoff `delta`; `None` means one grid spacing.
    pub delta_inner: Option<f64>,
    /// Target accuracy of the tail integral beyond the grid.
    pub tail_tol: f64,
}

impl Default for QuadratureScheme {
    fn default() -> Self {
        QuadratureScheme {
            delta_inner: None,
            tail_tol: 1e-10,
        }
    }
}

impl QuadratureScheme {
    fn inner_cells(&self, h: f64) -> Result<usize> {
        if !(self.tail_tol > 0.0) {
            return Err(usage("tail tolerance must be positive"));
        }
        match self.delta_inner {
            None => Ok(1),
            Some(d) if d > 0.0 && d <= 1.0 => Ok(((d / h).round() as usize).max(1)),
            Some(d) => Err(usage(format!("inner cutoff delta = {d} outside (0, 1]"))),
        }
    }
}

/// Second-order test polynomial `phi(y) = value + slope (y-x) + second (y-x)^2 / 2`
/// centered at the evaluation point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadratic {
    pub value: f64,
    pub slope: f64,
    pub second: f64,
}

impl Quadratic {
    pub fn eval(&self, dy: f64) -> f64 {
        self.value + self.slope * dy + 0.5 * self.second * dy * dy
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PucciSign {
    Plus,
    Minus,
}

/// Precomputed weights of one kernel on one grid.
#[derive(Clone, Debug)]
pub struct Stencil {
    h: f64,
    /// `∫_{0}^{h} C kappa z^{1-sigma} dz`
    first_cell: f64,
    /// Weights of cell `[kh, (k+1)h]` on `G(kh)` and `G((k+1)h)`, index `k >= 1`.
    cell_lo: Vec<f64>,
    cell_hi: Vec<f64>,
    inner_cells: usize,
    /// Weight on `g(kh)`, index `k = 0..=M` (index 0 unused).
    node: Vec<f64>,
    /// `(z, C kappa(z) w)` pairs of the exterior rule.
    tail_near: Vec<(f64, f64)>,
    /// Mass `∫ K` of the unsampled far tail (multiplies `-2u(x)` only).
    tail_far_mass: f64,
}

impl Stencil {
    pub fn new(spec: &KernelSpec, grid: &Grid, growth: Growth, q: &QuadratureScheme) -> Result<Self> {
        let h = grid.h();
        let sigma = spec.sigma();
        let norm = spec.normalization();
        let inner_cells = q.inner_cells(h)?;
        let cells = 2 * grid.center_index();
        let weight = |z: f64| norm * spec.kappa(z) * z.powf(1.0 - sigma);

        // First cell in t = z^{2-sigma}: dt = (2-sigma) z^{1-sigma} dz, split at
        // dyadic z-breakpoints so that dyadic multipliers are integrated piecewise.
        let e = 2.0 - sigma;
        let mut first_cell = 0.0;
        let mut hi = h;
        for piece in 0..=FIRST_CELL_PIECES {
            let lo = if piece == FIRST_CELL_PIECES { 0.0 } else { 0.5 * hi };
            let (t0, t1) = (lo.powf(e), hi.powf(e));
            first_cell += mapped(t0, t1, CELL_POINTS)
                .map(|(t, w)| w * norm * spec.kappa(t.powf(1.0 / e)))
                .sum::<f64>()
                / e;
            hi = lo;
        }

        let mut cell_lo = vec![0.0; cells];
        let mut cell_hi = vec![0.0; cells];
        for k in 1..cells {
            let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
            for (z, w) in mapped(a, b, CELL_POINTS) {
                let kw = w * weight(z);
                cell_lo[k] += kw * (b - z) / h;
                cell_hi[k] += kw * (z - a) / h;
            }
        }

        let mut coef = vec![0.0; cells + 1];
        coef[1] += first_cell;
        for k in 1..cells {
            if k < inner_cells {
                coef[1] += cell_lo[k] + cell_hi[k];
            } else {
                coef[k] += cell_lo[k];
                coef[k + 1] += cell_hi[k];
            }
        }
        let node: Vec<f64> = coef
            .iter()
            .enumerate()
            .map(|(k, c)| if k == 0 { 0.0 } else { c / (k as f64 * h).powi(2) })
            .collect();

        let start = cells as f64 * h;
        let tail = kernel_tail(start, sigma, growth, q.tail_tol);
        let tail_near = tail.near.iter().map(|&(z, w)| (z, w * norm * spec.kappa(z))).collect();
        let tail_far_mass = tail.far.iter().map(|&(z, w)| w * norm * spec.kappa(z)).sum();

        Ok(Stencil {
            h,
            first_cell,
            cell_lo,
            cell_hi,
            inner_cells,
            node,
            tail_near,
            tail_far_mass,
        })
    }

    pub fn cells(&self) -> usize {
        self.node.len() - 1
    }

    /// Nodal weights on `g(kh)`, `k = 1..=M`.
    pub fn node_weights(&self) -> &[f64] {
        &self.node[1..]
    }

    /// Total kernel mass outside the grid band (weights of `-2u(x)` in the tail).
    pub fn tail_mass(&self) -> f64 {
        self.tail_near.iter().map(|p| p.1).sum::<f64>() + self.tail_far_mass
    }

    /// Diagonal coefficient: `d I / d u(x) = -diagonal()` with neighbours held.
    pub fn diagonal(&self) -> f64 {
        2.0 * (self.node.iter().sum::<f64>() + self.tail_mass())
    }

    /// `∫_0^{m h} C kappa z^{1-sigma} dz`, the second moment of the kernel.
    pub fn second_moment(&self, m: usize) -> f64 {
        self.first_cell
            + (1..m.min(self.cell_lo.len()))
                .map(|k| self.cell_lo[k] + self.cell_hi[k])
                .sum::<f64>()
    }

    /// Exterior contribution `∫_{2R}^∞ (u(x+z) + u(x-z) - 2u(x)) K dz`, sign-split
    /// through `rho` so that the Pucci envelopes reuse the same nodes.
    fn tail_with(&self, u: &GridFunction, x: f64, ux: f64, rho: impl Fn(f64) -> f64) -> f64 {
        let ext = u.exterior();
        let near: f64 = self
            .tail_near
            .iter()
            .map(|&(z, w)| w * rho(ext.eval(x + z) + ext.eval(x - z) - 2.0 * ux))
            .sum();
        near + self.tail_far_mass * rho(-2.0 * ux)
    }

    /// `I_K u` at node `i`.
    pub fn apply(&self, u: &GridFunction, i: usize) -> f64 {
        self.apply_with(u, i, |g| g)
    }

    fn apply_with(&self, u: &GridFunction, i: usize, rho: impl Fn(f64) -> f64) -> f64 {
        let i = i as i64;
        let ux = u.at_index(i);
        let mut s = 0.0;
        for (k, w) in self.node.iter().enumerate().skip(1) {
            let k = k as i64;
            s += w * rho(u.at_index(i + k) + u.at_index(i - k) - 2.0 * ux);
        }
        s + self.tail_with(u, u.grid().node(i), ux, rho)
    }

    /// Split evaluation: `phi` on `[0, delta]`, `u` beyond, with `delta = m h`.
    fn apply_split(&self, u: &GridFunction, i: usize, phi: &Quadratic, m: usize) -> f64 {
        let i = i as i64;
        let ux = u.at_index(i);
        let g = |k: usize| {
            let k = k as i64;
            (u.at_index(i + k) + u.at_index(i - k) - 2.0 * ux) / (k as f64 * self.h).powi(2)
        };
        let inner = phi.second * self.second_moment(m);
        let mut outer = 0.0;
        for k in m..self.cell_lo.len() {
            outer += self.cell_lo[k] * g(k) + self.cell_hi[k] * g(k + 1);
        }
        inner + outer + self.tail_with(u, u.grid().node(i), ux, |v| v)
    }

    pub fn inner_cells(&self) -> usize {
        self.inner_cells
    }
}

/// Node index of an interior evaluation point `|x| < R - 1`.
pub fn interior_index(grid: &Grid, x: f64) -> Result<usize> {
    if !(x.abs() < grid.radius() - 1.0) {
        return Err(domain(format!(
            "x = {x} is not interior (need |x| < R - 1 = {})",
            grid.radius() - 1.0
        )));
    }
    grid.index_of(x)
        .ok_or_else(|| domain(format!("x = {x} is not a grid node")))
}

fn stencil_for(u: &GridFunction, spec: &KernelSpec, q: &QuadratureScheme) -> Result<Stencil> {
    let r = u.grid().radius();
    u.exterior().check_integrable(r, spec.sigma())?;
    Stencil::new(spec, u.grid(), u.exterior().growth(r), q)
}

/// `P.V. ∫ (u(y) - u(x)) K(x - y) dy` at the node `x`.
pub fn eval_linear(u: &GridFunction, spec: &KernelSpec, x: f64, q: &QuadratureScheme) -> Result<f64> {
    let i = interior_index(u.grid(), x)?;
    Ok(stencil_for(u, spec, q)?.apply(u, i))
}

/// Stencils of every kernel of an Isaacs family, row-major.
pub fn isaacs_stencils(u: &GridFunction, op: &IsaacsOperator, q: &QuadratureScheme) -> Result<Vec<Stencil>> {
    op.kernels().map(|k| stencil_for(u, k, q)).collect()
}

/// `inf_i sup_j I_{K_ij} u(x)`.
pub fn eval_isaacs(u: &GridFunction, op: &IsaacsOperator, x: f64, q: &QuadratureScheme) -> Result<f64> {
    let i = interior_index(u.grid(), x)?;
    let values: Vec<f64> = isaacs_stencils(u, op, q)?.iter().map(|s| s.apply(u, i)).collect();
    Ok(op.inf_sup(&values))
}

fn pucci_rho(sign: PucciSign, lambda: f64, big_lambda: f64) -> impl Fn(f64) -> f64 {
    let (up, down) = match sign {
        PucciSign::Plus => (big_lambda, lambda),
        PucciSign::Minus => (lambda, big_lambda),
    };
    move |g: f64| if g >= 0.0 { up * g } else { down * g }
}

/// Extremal operator of the class `[lambda, Lambda]`:
/// `∫ (Lambda g+ - lambda g-) K_frac` for `Plus`, roles swapped for `Minus`.
pub fn eval_pucci(
    u: &GridFunction,
    x: f64,
    sign: PucciSign,
    sigma: f64,
    lambda: f64,
    big_lambda: f64,
    q: &QuadratureScheme,
) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= big_lambda) {
        return Err(domain(format!(
            "need 0 < lambda <= Lambda, got [{lambda}, {big_lambda}]"
        )));
    }
    let i = interior_index(u.grid(), x)?;
    let st = stencil_for(u, &KernelSpec::frac_laplacian(sigma)?, q)?;
    Ok(st.apply_with(u, i, pucci_rho(sign, lambda, big_lambda)))
}

/// Viscosity evaluation with the test polynomial on `B_delta(x)` and `u` outside:
/// `inf_i sup_j ( I_ij[B_delta](phi) + I_ij[B_delta^c](u) )`.
pub fn eval_i_delta(
    u: &GridFunction,
    phi: &Quadratic,
    op: &IsaacsOperator,
    x: f64,
    delta: f64,
    q: &QuadratureScheme,
) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(domain(format!("delta = {delta} outside (0, 1]")));
    }
    let i = interior_index(u.grid(), x)?;
    let m = ((delta / u.grid().h()).round() as usize).max(1);
    let values: Vec<f64> = isaacs_stencils(u, op, q)?
        .iter()
        .map(|s| s.apply_split(u, i, phi, m))
        .collect();
    Ok(op.inf_sup(&values))
}

/// Central second difference `(u(x+h) + u(x-h) - 2u(x)) / h^2`.
pub fn second_difference(u: &GridFunction, i: usize) -> f64 {
    let i = i as i64;
    let h = u.grid().h();
    (u.at_index(i + 1) + u.at_index(i - 1) - 2.0 * u.at_index(i)) / (h * h)
}

/// Central first difference.
pub fn central_gradient(u: &GridFunction, i: usize) -> f64 {
    let i = i as i64;
    (u.at_index(i + 1) - u.at_index(i - 1)) / (2.0 * u.grid().h())
}

/// Local limit `inf_i sup_j k_ij D_h^2 u(x)` of the Isaacs family.
pub fn eval_local_limit(u: &GridFunction, multipliers: &[Vec<f64>], x: f64) -> Result<f64> {
    let cols = multipliers.first().map_or(0, Vec::len);
    if cols == 0 || multipliers.iter().any(|r| r.len() != cols) {
        return Err(usage("multiplier matrix must be a nonempty rectangle"));
    }
    if multipliers.iter().flatten().any(|k| !(*k > 0.0 && k.is_finite())) {
        return Err(domain("multipliers k_ij must be positive"));
    }
    let i = interior_index(u.grid(), x)?;
    let d2 = second_difference(u, i);
    Ok(multipliers
        .iter()
        .map(|row| row.iter().map(|k| k * d2).fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min))
}

/// Nonlocal p-Laplacian with jump `j_p(q) = |q|^{(p-2)/2} (1 + r_p)` in one dimension.
///
/// The symmetrized integrand `u(x + j z) + u(x - j z) - 2u(x)` cancels the
/// compensator; substituting `w = j z` gives `|j|^sigma` times the fractional
/// Laplacian, which is what is evaluated.
pub fn eval_frac_p_laplacian(
    u: &GridFunction,
    sigma: f64,
    p_exp: f64,
    r_p: f64,
    x: f64,
    q: &QuadratureScheme,
) -> Result<f64> {
    if !(p_exp > 2.0) {
        return Err(domain(format!("p = {p_exp} must exceed 2")));
    }
    if !(r_p >= 0.0) {
        return Err(domain(format!("r_p = {r_p} must be nonnegative")));
    }
    let i = interior_index(u.grid(), x)?;
    let grad = central_gradient(u, i);
    let jump = grad.abs().powf(0.5 * (p_exp - 2.0)) * (1.0 + r_p);
    if jump == 0.0 {
        return Ok(0.0);
    }
    let base = stencil_for(u, &KernelSpec::frac_laplacian(sigma)?, q)?.apply(u, i);
    Ok(jump.powf(sigma) * base)
}

/// Operator selection for grid sweeps.
#[derive(Clone, Debug)]
pub enum OperatorKind {
    Linear(KernelSpec),
    Isaacs(IsaacsOperator),
    Pucci {
        sign: PucciSign,
        sigma: f64,
        lambda: f64,
        big_lambda: f64,
    },
    LocalLimit(Vec<Vec<f64>>),
    FracP {
        sigma: f64,
        p_exp: f64,
        r_p: f64,
    },
}

/// Evaluates an operator at every interior node `|x| < R - 1`.
pub fn eval_sweep(u: &GridFunction, kind: &OperatorKind, q: &QuadratureScheme) -> Result<Vec<(f64, f64)>> {
    let grid = *u.grid();
    let idx: Vec<usize> = (0..grid.len())
        .filter(|&i| grid.node(i as i64).abs() < grid.radius() - 1.0)
        .collect();
    let values: Vec<f64> = match kind {
        OperatorKind::Linear(spec) => {
            let st = stencil_for(u, spec, q)?;
            idx.par_iter().map(|&i| st.apply(u, i)).collect()
        }
        OperatorKind::Isaacs(op) => {
            let sts = isaacs_stencils(u, op, q)?;
            idx.par_iter()
                .map(|&i| op.inf_sup(&sts.iter().map(|s| s.apply(u, i)).collect::<Vec<_>>()))
                .collect()
        }
        OperatorKind::Pucci {
            sign,
            sigma,
            lambda,
            big_lambda,
        } => {
            if !(*lambda > 0.0 && lambda <= big_lambda) {
                return Err(domain("need 0 < lambda <= Lambda"));
            }
            let st = stencil_for(u, &KernelSpec::frac_laplacian(*sigma)?, q)?;
            let rho = pucci_rho(*sign, *lambda, *big_lambda);
            idx.par_iter().map(|&i| st.apply_with(u, i, &rho)).collect()
        }
        OperatorKind::LocalLimit(k) => idx
            .iter()
            .map(|&i| eval_local_limit(u, k, grid.node(i as i64)))
            .collect::<Result<_>>()?,
        OperatorKind::FracP { sigma, p_exp, r_p } => idx
            .par_iter()
            .map(|&i| eval_frac_p_laplacian(u, *sigma, *p_exp, *r_p, grid.node(i as i64), q))
            .collect::<Result<_>>()?,
    };
    Ok(idx.iter().map(|&i| grid.node(i as i64)).zip(values).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridfn::{ExteriorExtension, TailFormula};
    use approx::assert_relative_eq;

    fn q() -> QuadratureScheme {
        QuadratureScheme::default()
    }

    fn odd_kink(x: f64) -> f64 {
        if x <= -1.0 {
            x + 1.0
        } else if x >= 1.0 {
            x - 1.0
        } else {
            0.0
        }
    }

    fn kink_fn(grid: Grid) -> GridFunction {
        let ext = ExteriorExtension::two_sided(
            TailFormula::Affine { a: 1.0, b: 1.0 },
            TailFormula::Affine { a: -1.0, b: 1.0 },
        );
        GridFunction::from_fn(grid, ext, odd_kink).unwrap()
    }

    #[test]
    fn constants_and_affine_are_annihilated() {
        let g = Grid::new(4.0, 1.0 / 64.0).unwrap();
        let c = GridFunction::from_fn(g, ExteriorExtension::constant(2.5), |_| 2.5).unwrap();
        let spec = KernelSpec::band(1.5, 1.0, 2.0, 4).unwrap();
        assert_eq!(eval_linear(&c, &spec, 0.5, &q()).unwrap(), 0.0);

        let lin = GridFunction::from_fn(g, ExteriorExtension::affine(0.0, 1.0), |x| x).unwrap();
        for x in [-2.0, 0.0, 0.75] {
            assert!(eval_linear(&lin, &spec, x, &q()).unwrap().abs() < 1e-10);
        }
        assert!(eval_linear(&lin, &spec, 3.5, &q()).is_err());
        assert!(eval_linear(&lin, &spec, 0.001, &q()).is_err());
    }

    #[test]
    fn odd_kink_vanishes_at_origin() {
        let g = Grid::new(4.0, 1.0 / 64.0).unwrap();
        let u = kink_fn(g);
        let spec = KernelSpec::frac_laplacian(1.5).unwrap();
        assert!(eval_linear(&u, &spec, 0.0, &q()).unwrap().abs() < 1e-10);
        // sigma <= 1: affine growth is not in L1_sigma
        let spec = KernelSpec::frac_laplacian(0.8).unwrap();
        assert!(eval_linear(&u, &spec, 0.0, &q()).is_err());
    }

    #[test]
    fn odd_kink_matches_closed_form() {
        // For |x| < 1: C/(sigma(sigma-1)) ((1-x)^{1-sigma} - (1+x)^{1-sigma}).
        let g = Grid::new(4.0, 1.0 / 256.0).unwrap();
        let u = kink_fn(g);
        let sigma = 1.5;
        let spec = KernelSpec::frac_laplacian(sigma).unwrap();
        let c = spec.normalization() / (sigma * (sigma - 1.0));
        for x in [0.25f64, 0.5, 0.75] {
            let exact = c * ((1.0 - x).powf(1.0 - sigma) - (1.0 + x).powf(1.0 - sigma));
            let v = eval_linear(&u, &spec, x, &q()).unwrap();
            assert_relative_eq!(v, exact, max_relative = 1e-3);
        }
    }

    #[test]
    fn isaacs_examples() {
        let g = Grid::new(4.0, 1.0 / 64.0).unwrap();
        let u = GridFunction::analytic(g, "gauss", 0.0, |x| (-x * x).exp()).unwrap();
        let frac = KernelSpec::frac_laplacian(1.3).unwrap();
        let single = IsaacsOperator::single(frac.clone());
        assert_eq!(
            eval_isaacs(&u, &single, 0.5, &q()).unwrap(),
            eval_linear(&u, &frac, 0.5, &q()).unwrap()
        );
        let lo = KernelSpec::new(1.3, 0.5, 3.0, crate::kernels::Multiplier::Constant(0.5)).unwrap();
        let hi = KernelSpec::new(1.3, 0.5, 3.0, crate::kernels::Multiplier::Constant(3.0)).unwrap();
        let pair = IsaacsOperator::new(vec![vec![lo, hi]]).unwrap();
        for x in [0.0, 1.5] {
            let base = eval_linear(&u, &frac, x, &q()).unwrap();
            let v = eval_isaacs(&u, &pair, x, &q()).unwrap();
            assert_relative_eq!(v, (0.5 * base).max(3.0 * base), max_relative = 1e-12);
        }
    }

    #[test]
    fn pucci_on_convex_function() {
        // u = x^2 inside [-1, 1], spliced with tangent lines outside: g >= 0 everywhere.
        let g = Grid::new(4.0, 1.0 / 64.0).unwrap();
        let f = |x: f64| if x.abs() <= 1.0 { x * x } else { 2.0 * x.abs() - 1.0 };
        let ext = ExteriorExtension::two_sided(
            TailFormula::Affine { a: -1.0, b: -2.0 },
            TailFormula::Affine { a: -1.0, b: 2.0 },
        );
        let u = GridFunction::from_fn(g, ext, f).unwrap();
        let frac = KernelSpec::frac_laplacian(1.6).unwrap();
        let base = eval_linear(&u, &frac, 0.25, &q()).unwrap();
        let plus = eval_pucci(&u, 0.25, PucciSign::Plus, 1.6, 0.5, 2.0, &q()).unwrap();
        let minus = eval_pucci(&u, 0.25, PucciSign::Minus, 1.6, 0.5, 2.0, &q()).unwrap();
        assert!(base > 0.0);
        assert_relative_eq!(plus, 2.0 * base, max_relative = 1e-12);
        assert_relative_eq!(minus, 0.5 * base, max_relative = 1e-12);
    }

    #[test]
    fn i_delta_is_exact_for_quadratics() {
        let g = Grid::new(4.0, 1.0 / 64.0).unwrap();
        // quadratic inside, bounded outside so that the tail is integrable
        let u = GridFunction::analytic(g, "quad", 0.0, |x: f64| {
            let x = x.clamp(-3.0, 3.0);
            0.5 - 0.3 * x + 0.7 * x * x
        })
        .unwrap();
        let op = IsaacsOperator::band_family(1.5, 1.0, 2.0, 2, 2, 11).unwrap();
        let x = 0.25;
        let phi = Quadratic {
            value: 0.5 - 0.3 * x + 0.7 * x * x,
            slope: -0.3 + 1.4 * x,
            second: 1.4,
        };
        let full = eval_isaacs(&u, &op, x, &q()).unwrap();
        for delta in [1.0 / 64.0, 0.1, 0.5, 1.0] {
            let v = eval_i_delta(&u, &phi, &op, x, delta, &q()).unwrap();
            assert!(
                (v - full).abs() < 1e-9 * full.abs().max(1.0),
                "delta {delta}: {v} vs {full}"
            );
        }
    }

    #[test]
    fn i_delta_converges_as_delta_shrinks() {
        let g = Grid::new(4.0, 1.0 / 256.0).unwrap();
        let u = GridFunction::analytic(g, "cos", 0.0, f64::cos).unwrap();
        let op = IsaacsOperator::single(KernelSpec::frac_laplacian(1.5).unwrap());
        let x: f64 = 0.5;
        let phi = Quadratic {
            value: x.cos(),
            slope: -x.sin(),
            second: -x.cos(),
        };
        let full = eval_isaacs(&u, &op, x, &q()).unwrap();
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&d| (eval_i_delta(&u, &phi, &op, x, d, &q()).unwrap() - full).abs())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");

        // a test with zero slope is still evaluated
        let flat = Quadratic {
            value: 1.0,
            slope: 0.0,
            second: -1.0,
        };
        assert!(eval_i_delta(&u, &flat, &op, 0.0, 0.1, &q()).unwrap().is_finite());
    }

    #[test]
    fn local_limit_examples() {
        let g = Grid::new(2.0, 1.0 / 32.0).unwrap();
        let sq = GridFunction::from_fn(g, ExteriorExtension::zero(), |x| x * x).unwrap();
        let k = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_relative_eq!(eval_local_limit(&sq, &k, 0.5).unwrap(), 2.0 * 2.0, epsilon = 1e-9);
        let neg = GridFunction::from_fn(g, ExteriorExtension::zero(), |x| -x * x).unwrap();
        // brute force: rows -> sup(-2, -4) = -2, sup(-6, -8) = -6; inf = -6
        assert_relative_eq!(eval_local_limit(&neg, &k, 0.0).unwrap(), -6.0, epsilon = 1e-9);
        let aff = GridFunction::from_fn(g, ExteriorExtension::zero(), |x| 3.0 * x - 1.0).unwrap();
        assert!(eval_local_limit(&aff, &k, 0.25).unwrap().abs() < 1e-9);
        assert!(eval_local_limit(&aff, &[vec![1.0], vec![]], 0.25).is_err());
    }

    #[test]
    fn frac_p_laplacian_examples() {
        let g = Grid::new(4.0, 1.0 / 64.0).unwrap();
        let c = GridFunction::from_fn(g, ExteriorExtension::constant(1.0), |_| 1.0).unwrap();
        assert_eq!(eval_frac_p_laplacian(&c, 1.5, 3.0, 0.0, 0.5, &q()).unwrap(), 0.0);
        let even = GridFunction::analytic(g, "gauss", 0.0, |x| (-x * x).exp()).unwrap();
        assert_eq!(eval_frac_p_laplacian(&even, 1.5, 3.0, 0.2, 0.0, &q()).unwrap(), 0.0);
        let lin = GridFunction::from_fn(g, ExteriorExtension::affine(0.0, 1.0), |x| x).unwrap();
        assert!(eval_frac_p_laplacian(&lin, 1.5, 4.0, 0.0, 0.5, &q()).unwrap().abs() < 1e-10);
        assert!(eval_frac_p_laplacian(&lin, 1.5, 2.0, 0.0, 0.5, &q()).is_err());
    }

    #[test]
    fn frac_p_laplacian_matches_direct_quadrature() {
        // Oracle: integrate u(x + j z) + u(x - j z) - 2u(x) against C z^{-1-sigma}
        // directly with a fine midpoint rule on the analytic function.
        let g = Grid::new(4.0, 1.0 / 512.0).unwrap();
        let f = |x: f64| (-x * x).exp();
        let u = GridFunction::analytic(g, "gauss", 0.0, f).unwrap();
        let (sigma, p, rp, x) = (1.4, 3.0, 0.3, 0.375);
        let v = eval_frac_p_laplacian(&u, sigma, p, rp, x, &q()).unwrap();
        let grad = (f(x + g.h()) - f(x - g.h())) / (2.0 * g.h());
        let j = grad.abs().powf(0.5 * (p - 2.0)) * (1.0 + rp);
        let c = crate::kernels::normalization_constant(sigma).unwrap();
        let d2 = -2.0 * (1.0 - 2.0 * x * x) * f(x);
        let z0: f64 = 1e-3;
        // small-z part via Taylor: g(z) ≈ f''(x) j^2 z^2
        let mut oracle = c * d2 * j * j * z0.powf(2.0 - sigma) / (2.0 - sigma);
        let n = 400_000;
        let zmax = 60.0;
        let dz = (zmax - z0) / n as f64;
        for k in 0..n {
            let z = z0 + (k as f64 + 0.5) * dz;
            oracle += c * (f(x + j * z) + f(x - j * z) - 2.0 * f(x)) * z.powf(-1.0 - sigma) * dz;
        }
        oracle += c * (-2.0 * f(x)) * zmax.powf(-sigma) / sigma;
        assert_relative_eq!(v, oracle, max_relative = 2e-3);
    }

    #[test]
    fn translation_covariance() {
        let g = Grid::new(4.0, 1.0 / 64.0).unwrap();
        let f = |x: f64| (-(x - 0.25) * (x - 0.25)).exp();
        let shifted = |x: f64| (-x * x).exp();
        let u = GridFunction::analytic(g, "a", 0.0, f).unwrap();
        let v = GridFunction::analytic(g, "b", 0.0, shifted).unwrap();
        let spec = KernelSpec::frac_laplacian(1.2).unwrap();
        let a = eval_linear(&u, &spec, 0.75, &q()).unwrap();
        let b = eval_linear(&v, &spec, 0.5, &q()).unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}
