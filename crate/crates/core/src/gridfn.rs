//! Grid-sampled functions on `[-R, R]` with an explicit extension to the whole
//! line, and the measurements used by the regularity probes.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde_json::{json, Value};

use crate::error::{usage, Error, Result};
use crate::kernels::check_order;
use crate::quadrature::{weighted_tail_integral, Growth};

/// Default truncation point for callable extensions.
pub const CALLABLE_CUTOFF: f64 = 2048.0;

const TAIL_NORM_TOL: f64 = 1e-12;

/// Uniform grid `{-R, -R+h, ..., R}`; `0` is always a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    radius: f64,
    h: f64,
    half: usize,
}

impl Grid {
    pub fn new(radius: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(usage(format!("grid spacing h = {h} must be positive")));
        }
        if !(radius >= 2.0) {
            return Err(usage(format!("truncation radius R = {radius} must be >= 2")));
        }
        let ratio = radius / h;
        let half = ratio.round();
        if (ratio - half).abs() > 1e-9 * ratio {
            return Err(usage(format!("R/h = {ratio} must be an integer")));
        }
        Ok(Grid {
            radius,
            h,
            half: half as usize,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        2 * self.half + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of the node `x = 0`.
    pub fn center_index(&self) -> usize {
        self.half
    }

    /// Coordinate of node `i`; also valid for indices beyond the grid.
    #[inline]
    pub fn node(&self, i: i64) -> f64 {
        (i - self.half as i64) as f64 * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len() as i64).map(move |i| self.node(i))
    }

    /// Index of the node at `x`, if `x` is a node up to rounding.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let t = x / self.h + self.half as f64;
        let i = t.round();
        if (t - i).abs() > 1e-6 || i < 0.0 || i >= self.len() as f64 {
            None
        } else {
            Some(i as usize)
        }
    }

    /// Indices of nodes in the closed ball `|x - center| <= r`.
    pub fn ball(&self, center: f64, r: f64) -> std::ops::Range<usize> {
        let slack = 1e-9 * self.h;
        let lo = ((center - r - slack) / self.h + self.half as f64).ceil().max(0.0);
        let hi = ((center + r + slack) / self.h + self.half as f64)
            .floor()
            .min((self.len() - 1) as f64);
        if hi < lo {
            0..0
        } else {
            lo as usize..hi as usize + 1
        }
    }
}

/// Callable extension used by analytic fixtures (e.g. `cos`).
#[derive(Clone)]
pub struct Callable {
    pub name: String,
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Growth exponent at infinity, used for the `L1_sigma` check.
    pub growth: f64,
    pub cutoff: f64,
}

/// Formula for `u(y)` on one side of the grid, `|y| > R`.
#[derive(Clone)]
pub enum TailFormula {
    Zero,
    Constant(f64),
    /// `a + b y`
    Affine {
        a: f64,
        b: f64,
    },
    /// `s |y|^beta`
    Power {
        s: f64,
        beta: f64,
    },
    Callable(Callable),
}

impl TailFormula {
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        match self {
            TailFormula::Zero => 0.0,
            TailFormula::Constant(c) => *c,
            TailFormula::Affine { a, b } => a + b * y,
            TailFormula::Power { s, beta } => s * y.abs().powf(*beta),
            TailFormula::Callable(c) => (c.f)(y),
        }
    }

    /// Growth bound valid for `|y| >= radius`.
    fn growth(&self, radius: f64) -> Growth {
        let power = |amplitude: f64, exponent: f64| Growth::Power { amplitude, exponent };
        match self {
            TailFormula::Zero => power(0.0, 0.0),
            TailFormula::Constant(c) => power(c.abs(), 0.0),
            TailFormula::Affine { a, b } if *b == 0.0 => power(a.abs(), 0.0),
            TailFormula::Affine { a, b } => power(a.abs() / radius + b.abs(), 1.0),
            TailFormula::Power { s, beta } => power(s.abs(), if *s == 0.0 { 0.0 } else { *beta }),
            TailFormula::Callable(c) => Growth::Sampled {
                exponent: c.growth,
                cutoff: c.cutoff,
            },
        }
    }

    fn to_json(&self) -> Result<Value> {
        Ok(match self {
            TailFormula::Zero => json!({"tag": "zero"}),
            TailFormula::Constant(c) => json!({"tag": "constant", "c": c}),
            TailFormula::Affine { a, b } => json!({"tag": "affine", "a": a, "b": b}),
            TailFormula::Power { s, beta } => json!({"tag": "power", "s": s, "beta": beta}),
            TailFormula::Callable(c) => {
                return Err(usage(format!("callable extension '{}' cannot be serialized", c.name)))
            }
        })
    }

    fn from_json(v: &Value) -> Option<Self> {
        let num = |k: &str| v.get(k).and_then(Value::as_f64);
        Some(match v.get("tag")?.as_str()? {
            "zero" => TailFormula::Zero,
            "constant" => TailFormula::Constant(num("c")?),
            "affine" => TailFormula::Affine {
                a: num("a")?,
                b: num("b")?,
            },
            "power" => TailFormula::Power {
                s: num("s")?,
                beta: num("beta")?,
            },
            _ => return None,
        })
    }
}

impl fmt::Debug for TailFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TailFormula::Zero => f.write_str("Zero"),
            TailFormula::Constant(c) => write!(f, "Constant({c})"),
            TailFormula::Affine { a, b } => write!(f, "Affine({a} + {b} y)"),
            TailFormula::Power { s, beta } => write!(f, "Power({s} |y|^{beta})"),
            TailFormula::Callable(c) => write!(f, "Callable({})", c.name),
        }
    }
}

/// Values of `u` outside the grid: one formula per side.
#[derive(Clone, Debug)]
pub struct ExteriorExtension {
    pub left: TailFormula,
    pub right: TailFormula,
}

impl ExteriorExtension {
    pub fn two_sided(left: TailFormula, right: TailFormula) -> Self {
        ExteriorExtension { left, right }
    }

    fn both(t: TailFormula) -> Self {
        ExteriorExtension {
            left: t.clone(),
            right: t,
        }
    }

    pub fn zero() -> Self {
        Self::both(TailFormula::Zero)
    }

    pub fn constant(c: f64) -> Self {
        Self::both(TailFormula::Constant(c))
    }

    pub fn affine(a: f64, b: f64) -> Self {
        Self::both(TailFormula::Affine { a, b })
    }

    pub fn power(s: f64, beta: f64) -> Result<Self> {
        if beta < 0.0 {
            return Err(usage(format!("power extension needs beta >= 0, got {beta}")));
        }
        Ok(Self::both(TailFormula::Power { s, beta }))
    }

    pub fn callable(name: &str, growth: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::both(TailFormula::Callable(Callable {
            name: name.to_string(),
            f: Arc::new(f),
            growth,
            cutoff: CALLABLE_CUTOFF,
        }))
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        if y < 0.0 {
            self.left.eval(y)
        } else {
            self.right.eval(y)
        }
    }

    /// Combined growth bound of both sides for `|y| >= radius`.
    pub fn growth(&self, radius: f64) -> Growth {
        match (self.left.growth(radius), self.right.growth(radius)) {
            (
                Growth::Power {
                    amplitude: a1,
                    exponent: e1,
                },
                Growth::Power {
                    amplitude: a2,
                    exponent: e2,
                },
            ) => Growth::Power {
                amplitude: a1.max(a2),
                exponent: if a1 == 0.0 {
                    e2
                } else if a2 == 0.0 {
                    e1
                } else {
                    e1.max(e2)
                },
            },
            (Growth::Sampled { exponent: e, cutoff }, other) | (other, Growth::Sampled { exponent: e, cutoff }) => {
                Growth::Sampled {
                    exponent: e.max(other.exponent()),
                    cutoff,
                }
            }
        }
    }

    /// Fails with [`Error::NotInL1Sigma`] when the tail weight cannot absorb the growth.
    pub fn check_integrable(&self, radius: f64, sigma: f64) -> Result<()> {
        let g = self.growth(radius).exponent();
        if g >= sigma {
            Err(Error::NotInL1Sigma { growth: g, sigma })
        } else {
            Ok(())
        }
    }

    fn to_json(&self) -> Result<Value> {
        Ok(json!({"left": self.left.to_json()?, "right": self.right.to_json()?}))
    }

    fn from_json(v: &Value) -> Option<Self> {
        Some(ExteriorExtension {
            left: TailFormula::from_json(v.get("left")?)?,
            right: TailFormula::from_json(v.get("right")?)?,
        })
    }
}

/// Solution of the affine Chebyshev fit `u ≈ a + p (x - center)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineFit {
    pub a: f64,
    pub p: f64,
    pub dev: f64,
}

#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
    exterior: ExteriorExtension,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>, exterior: ExteriorExtension) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(usage(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(usage(format!("non-finite value at x = {}", grid.node(i as i64))));
        }
        Ok(GridFunction { grid, values, exterior })
    }

    pub fn from_fn(grid: Grid, exterior: ExteriorExtension, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().map(f).collect();
        Self::new(grid, values, exterior)
    }

    /// A function given everywhere by `f`, used as its own extension.
    pub fn analytic(
        grid: Grid,
        name: &str,
        growth: f64,
        f: impl Fn(f64) -> f64 + Send + Sync + Clone + 'static,
    ) -> Result<Self> {
        let ext = ExteriorExtension::callable(name, growth, f.clone());
        Self::from_fn(grid, ext, f)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn exterior(&self) -> &ExteriorExtension {
        &self.exterior
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid, values, self.exterior.clone())
    }

    /// `u` at the (possibly off-grid) node index `i`.
    #[inline]
    pub fn at_index(&self, i: i64) -> f64 {
        if i >= 0 && (i as usize) < self.values.len() {
            self.values[i as usize]
        } else {
            self.exterior.eval(self.grid.node(i))
        }
    }

    /// `u(y)` for any real `y`: linear interpolation inside, extension outside.
    pub fn value_at(&self, y: f64) -> f64 {
        let r = self.grid.radius;
        if y.abs() > r {
            return self.exterior.eval(y);
        }
        let t = (y + r) / self.grid.h;
        let i = (t.floor() as usize).min(self.values.len() - 2);
        let s = t - i as f64;
        (1.0 - s) * self.values[i] + s * self.values[i + 1]
    }

    /// Pointwise linear combination; the extension is taken from `self`.
    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = self.grid.nodes().zip(&self.values).map(|(x, &v)| f(x, v)).collect();
        self.with_values(values)
    }

    fn ball_indices(&self, center: f64, r: f64, min_nodes: usize) -> Result<std::ops::Range<usize>> {
        let idx = self.grid.ball(center, r);
        if idx.len() < min_nodes {
            return Err(usage(format!(
                "ball B_{r}({center}) holds {} nodes, need at least {min_nodes}",
                idx.len()
            )));
        }
        Ok(idx)
    }

    /// `∫ |u(y)| (1 + |y|)^{-1-sigma} dy` over the whole line.
    pub fn tail_norm(&self, sigma: f64) -> Result<f64> {
        check_order(sigma)?;
        let r = self.grid.radius;
        self.exterior.check_integrable(r, sigma)?;
        let h = self.grid.h;
        let weight = |y: f64| (1.0 + y.abs()).powf(-1.0 - sigma);
        let n = self.values.len();
        let mut inner = 0.0;
        for (i, (y, v)) in self.grid.nodes().zip(&self.values).enumerate() {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            inner += w * v.abs() * weight(y);
        }
        inner *= h;
        let right = weighted_tail_integral(r, sigma, self.exterior.right.growth(r), TAIL_NORM_TOL, |y| {
            self.exterior.right.eval(y).abs()
        });
        let left = weighted_tail_integral(r, sigma, self.exterior.left.growth(r), TAIL_NORM_TOL, |y| {
            self.exterior.left.eval(-y).abs()
        });
        Ok(inner + left + right)
    }

    /// `max - min` of the nodal values in the closed ball.
    pub fn oscillation(&self, center: f64, r: f64) -> Result<f64> {
        let idx = self.ball_indices(center, r, 1)?;
        let vals = &self.values[idx];
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(max - min)
    }

    /// `max |u(x) - u(y)| / |x - y|^alpha` over node pairs in the ball.
    pub fn holder_seminorm(&self, alpha: f64, center: f64, r: f64) -> Result<f64> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(usage(format!("Hölder exponent {alpha} outside (0, 1]")));
        }
        let idx = self.ball_indices(center, r, 2)?;
        let h = self.grid.h;
        let vals = &self.values[idx];
        let mut best = 0.0f64;
        for i in 0..vals.len() {
            for j in i + 1..vals.len() {
                let d = (j - i) as f64 * h;
                best = best.max((vals[j] - vals[i]).abs() / d.powf(alpha));
            }
        }
        Ok(best)
    }

    /// Sup-norm best affine approximation on the ball.
    ///
    /// The width `W(p) = max(u - p t) - min(u - p t)` is convex and piecewise
    /// linear in `p`, with breakpoints at the edge slopes of the upper and lower
    /// convex hulls of the points `(t, u)`; the minimum is attained at one of them.
    pub fn best_affine_fit(&self, center: f64, r: f64) -> Result<AffineFit> {
        let idx = self.ball_indices(center, r, 3)?;
        let pts: Vec<(f64, f64)> = idx
            .map(|i| (self.grid.node(i as i64) - center, self.values[i]))
            .collect();
        Ok(chebyshev_affine(&pts))
    }

    /// Writes the CSV form: a sidecar line with grid and extension, then `x,value`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let side = json!({
            "R": self.grid.radius,
            "h": self.grid.h,
            "exterior": self.exterior.to_json()?,
        });
        writeln!(out, "# gridfn {side}")?;
        writeln!(out, "x,value")?;
        for (x, v) in self.grid.nodes().zip(&self.values) {
            writeln!(out, "{x:.16e},{v:.16e}")?;
        }
        Ok(())
    }

    /// Reads the CSV form written by [`write_csv`](Self::write_csv). Other
    /// comment lines are skipped.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let fmt_err = |line: usize, msg: &str| Error::Format {
            line,
            msg: msg.to_string(),
        };
        let mut side: Option<(Grid, ExteriorExtension)> = None;
        let mut header = false;
        let mut values = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let lineno = n + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(js) = rest.trim_start().strip_prefix("gridfn ") {
                    let v: Value =
                        serde_json::from_str(js).map_err(|e| fmt_err(lineno, &format!("bad sidecar: {e}")))?;
                    let r = v.get("R").and_then(Value::as_f64);
                    let h = v.get("h").and_then(Value::as_f64);
                    let ext = v.get("exterior").and_then(ExteriorExtension::from_json);
                    match (r, h, ext) {
                        (Some(r), Some(h), Some(ext)) => {
                            let grid = Grid::new(r, h).map_err(|e| fmt_err(lineno, &e.to_string()))?;
                            side = Some((grid, ext));
                        }
                        _ => return Err(fmt_err(lineno, "sidecar needs R, h and exterior")),
                    }
                }
                continue;
            }
            if !header {
                if line != "x,value" {
                    return Err(fmt_err(lineno, "expected header 'x,value'"));
                }
                header = true;
                continue;
            }
            let (grid, _) = side
                .as_ref()
                .ok_or_else(|| fmt_err(lineno, "data before the gridfn sidecar line"))?;
            let mut parts = line.split(',');
            let (xs, vs) = match (parts.next(), parts.next(), parts.next()) {
                (Some(x), Some(v), None) => (x, v),
                _ => return Err(fmt_err(lineno, "expected two columns")),
            };
            let x: f64 = xs.trim().parse().map_err(|_| fmt_err(lineno, "bad x"))?;
            let v: f64 = vs.trim().parse().map_err(|_| fmt_err(lineno, "bad value"))?;
            let expect = grid.node(values.len() as i64);
            if (x - expect).abs() > 1e-9 * grid.h {
                return Err(fmt_err(lineno, &format!("x = {x} is not node {expect}")));
            }
            values.push(v);
        }
        let (grid, ext) = side.ok_or_else(|| fmt_err(0, "missing gridfn sidecar line"))?;
        GridFunction::new(grid, values, ext)
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Monotone-chain hull of points sorted by abscissa; `upper` keeps right turns.
fn hull(pts: &[(f64, f64)], upper: bool) -> Vec<(f64, f64)> {
    let mut h: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for &p in pts {
        while h.len() >= 2 {
            let c = cross(h[h.len() - 2], h[h.len() - 1], p);
            if (upper && c >= 0.0) || (!upper && c <= 0.0) {
                h.pop();
            } else {
                break;
            }
        }
        h.push(p);
    }
    h
}

/// Minimax affine fit of points sorted by increasing abscissa.
pub(crate) fn chebyshev_affine(pts: &[(f64, f64)]) -> AffineFit {
    let mut slopes: Vec<f64> = Vec::new();
    for upper in [true, false] {
        let hl = hull(pts, upper);
        slopes.extend(hl.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)));
    }
    let scale = pts.iter().map(|p| p.1.abs()).fold(0.0, f64::max).max(1e-300);
    let mut best: Option<AffineFit> = None;
    for p in slopes {
        let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
        for &(t, u) in pts {
            let e = u - p * t;
            hi = hi.max(e);
            lo = lo.min(e);
        }
        let cand = AffineFit {
            a: 0.5 * (hi + lo),
            p,
            dev: 0.5 * (hi - lo),
        };
        best = Some(match best {
            None => cand,
            Some(b) => {
                let tie = (cand.dev - b.dev).abs() <= 1e-14 * scale;
                if (!tie && cand.dev < b.dev) || (tie && (cand.a, cand.p) < (b.a, b.p)) {
                    cand
                } else {
                    b
                }
            }
        });
    }
    best.expect("at least two points")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> Grid {
        Grid::new(4.0, 1.0 / 128.0).unwrap()
    }

    #[test]
    fn grid_invariants() {
        assert!(Grid::new(1.0, 0.1).is_err());
        assert!(Grid::new(2.0, 0.3).is_err());
        assert!(Grid::new(2.0, 0.0).is_err());
        let g = grid();
        assert_eq!(g.len(), 1025);
        assert_eq!(g.node(g.center_index() as i64), 0.0);
        assert_eq!(g.node(0), -4.0);
        assert_eq!(g.index_of(0.5), Some(512 + 64));
        assert_eq!(g.index_of(0.5 + 1.0 / 256.0), None);
        assert_eq!(g.ball(0.0, 0.5).len(), 129);
    }

    #[test]
    fn tail_norm_examples() {
        let g = grid();
        let zero = GridFunction::from_fn(g, ExteriorExtension::zero(), |_| 0.0).unwrap();
        assert_eq!(zero.tail_norm(1.0).unwrap(), 0.0);

        let one = GridFunction::from_fn(g, ExteriorExtension::constant(1.0), |_| 1.0).unwrap();
        // trapezoid error at the kink of the weight is O(h^2)
        assert_relative_eq!(one.tail_norm(1.5).unwrap(), 2.0 / 1.5, max_relative = 1e-4);

        let pw = GridFunction::from_fn(g, ExteriorExtension::power(1.0, 1.8).unwrap(), |x| x.abs().powf(1.8)).unwrap();
        assert!(matches!(pw.tail_norm(1.5), Err(Error::NotInL1Sigma { .. })));

        let aff = GridFunction::from_fn(g, ExteriorExtension::affine(0.0, 1.0), |x| x).unwrap();
        assert!(aff.tail_norm(0.9).is_err());
        assert!(aff.tail_norm(1.2).is_ok());
    }

    #[test]
    fn oscillation_examples() {
        let g = grid();
        let c = GridFunction::from_fn(g, ExteriorExtension::constant(3.0), |_| 3.0).unwrap();
        assert_eq!(c.oscillation(0.0, 0.5).unwrap(), 0.0);
        let lin = GridFunction::from_fn(g, ExteriorExtension::zero(), |x| x).unwrap();
        assert!((lin.oscillation(0.0, 0.3).unwrap() - 0.6).abs() <= 2.0 * g.h());
        let abs = GridFunction::from_fn(g, ExteriorExtension::zero(), f64::abs).unwrap();
        assert!((abs.oscillation(0.0, 0.3).unwrap() - 0.3).abs() <= g.h());
        assert!(abs.oscillation(10.0, 0.1).is_err());
    }

    #[test]
    fn holder_seminorm_examples() {
        let g = grid();
        let abs = GridFunction::from_fn(g, ExteriorExtension::zero(), f64::abs).unwrap();
        assert_relative_eq!(abs.holder_seminorm(1.0, 0.0, 0.5).unwrap(), 1.0, epsilon = 1e-12);

        let sq = GridFunction::from_fn(g, ExteriorExtension::zero(), |x| x.abs().sqrt()).unwrap();
        // brute force oracle over all node pairs of B_{1/2}(0)
        let idx = g.ball(0.0, 0.5);
        let mut oracle = 0.0f64;
        for i in idx.clone() {
            for j in idx.clone() {
                if i != j {
                    let (x, y) = (g.node(i as i64), g.node(j as i64));
                    oracle = oracle.max((x.abs().sqrt() - y.abs().sqrt()).abs() / (x - y).abs().sqrt());
                }
            }
        }
        let v = sq.holder_seminorm(0.5, 0.0, 0.5).unwrap();
        assert_relative_eq!(v, oracle, epsilon = 1e-14);
        // sqrt|x| is even, so the worst pair is (0, y)
        assert_relative_eq!(v, 1.0, epsilon = 1e-12);

        let c = GridFunction::from_fn(g, ExteriorExtension::zero(), |_| 2.0).unwrap();
        assert_eq!(c.holder_seminorm(0.3, 0.0, 0.5).unwrap(), 0.0);
        assert!(c.holder_seminorm(0.3, 0.0, 0.001).is_err());
        assert!(c.holder_seminorm(1.3, 0.0, 0.5).is_err());
    }

    /// Brute-force minimax over a fine slope grid.
    fn brute_affine(u: &GridFunction, center: f64, r: f64) -> f64 {
        let g = u.grid();
        let pts: Vec<(f64, f64)> = g
            .ball(center, r)
            .map(|i| (g.node(i as i64) - center, u.values()[i]))
            .collect();
        (-2000..=2000)
            .map(|k| {
                let p = k as f64 * 1e-3;
                let hi = pts.iter().map(|&(t, v)| v - p * t).fold(f64::NEG_INFINITY, f64::max);
                let lo = pts.iter().map(|&(t, v)| v - p * t).fold(f64::INFINITY, f64::min);
                0.5 * (hi - lo)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn best_affine_fit_examples() {
        let g = grid();
        let aff = GridFunction::from_fn(g, ExteriorExtension::zero(), |x| 1.5 - 0.25 * x).unwrap();
        let fit = aff.best_affine_fit(0.5, 0.4).unwrap();
        assert!(fit.dev < 1e-14);
        assert_relative_eq!(fit.p, -0.25, epsilon = 1e-12);
        assert_relative_eq!(fit.a, 1.5 - 0.125, epsilon = 1e-12);

        let sq = GridFunction::from_fn(g, ExteriorExtension::zero(), |x| x * x).unwrap();
        let fit = sq.best_affine_fit(0.0, 0.5).unwrap();
        assert_relative_eq!(fit.dev, 0.125, epsilon = 1e-12);
        assert_relative_eq!(fit.a, 0.125, epsilon = 1e-12);
        assert!(fit.p.abs() < 1e-12);
        assert!((fit.dev - brute_affine(&sq, 0.0, 0.5)).abs() < 1e-6);

        let abs = GridFunction::from_fn(g, ExteriorExtension::zero(), f64::abs).unwrap();
        let fit = abs.best_affine_fit(0.0, 0.5).unwrap();
        assert!(fit.p.abs() < 1e-12);
        assert!((fit.dev - 0.25).abs() <= g.h());
        assert!((fit.dev - brute_affine(&abs, 0.0, 0.5)).abs() < 1e-6);

        let wiggly =
            GridFunction::from_fn(g, ExteriorExtension::zero(), |x| (3.0 * x).sin() + x.abs().powf(1.3)).unwrap();
        let fit = wiggly.best_affine_fit(0.2, 0.6).unwrap();
        assert!(fit.dev <= brute_affine(&wiggly, 0.2, 0.6) + 1e-12);
        assert!(abs.best_affine_fit(0.0, 1e-4).is_err());
    }

    #[test]
    fn csv_roundtrip_is_bit_exact() {
        let g = Grid::new(2.0, 0.25).unwrap();
        let ext = ExteriorExtension::two_sided(
            TailFormula::Affine { a: 1.0, b: 1.0 },
            TailFormula::Power { s: 0.1, beta: 1.3 },
        );
        let u = GridFunction::from_fn(g, ext, |x| (x * 0.7).sin() / 3.0).unwrap();
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let back = GridFunction::read_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(back.grid(), u.grid());
        for (a, b) in back.values().iter().zip(u.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back.exterior().eval(-5.0), -4.0);
        assert_eq!(back.exterior().eval(5.0), u.exterior().eval(5.0));
    }

    #[test]
    fn csv_errors_are_line_anchored() {
        let text = "# gridfn {\"R\":2,\"h\":1,\"exterior\":{\"left\":{\"tag\":\"zero\"},\"right\":{\"tag\":\"zero\"}}}\nx,value\n-2,0\n-1,zz\n";
        match GridFunction::read_csv(std::io::Cursor::new(text)) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let callable = GridFunction::analytic(Grid::new(2.0, 1.0).unwrap(), "cos", 0.0, f64::cos).unwrap();
        assert!(callable.write_csv(&mut Vec::new()).is_err());
    }
}
