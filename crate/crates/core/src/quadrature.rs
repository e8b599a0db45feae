//! Fixed-node quadrature building blocks.
//!
//! Every rule here produces node sets that depend only on geometry (`sigma`,
//! start point, growth of the integrand) and never on integrand values, so two
//! kernels evaluated on the same rule see exactly the same nodes.

use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

/// Gauss-Legendre points used on each regular cell.
pub(crate) const CELL_POINTS: usize = 8;
/// Gauss-Legendre points used on each geometric tail panel.
pub(crate) const PANEL_POINTS: usize = 20;

const MAX_PANELS: usize = 900;

fn build(n: usize) -> Vec<(f64, f64)> {
    let mut pairs = GaussLegendre::new(n)
        .expect("Gauss-Legendre degree >= 2")
        .as_node_weight_pairs()
        .to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs
}

/// Nodes and weights on `[-1, 1]`, sorted by node.
pub(crate) fn gauss_rule(n: usize) -> &'static [(f64, f64)] {
    static R8: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    static R20: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    match n {
        CELL_POINTS => R8.get_or_init(|| build(CELL_POINTS)),
        PANEL_POINTS => R20.get_or_init(|| build(PANEL_POINTS)),
        _ => panic!("unsupported Gauss-Legendre rule size {n}"),
    }
}

/// Mapped nodes and weights of an `n`-point rule on `[a, b]`.
pub(crate) fn mapped(a: f64, b: f64, n: usize) -> impl Iterator<Item = (f64, f64)> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_rule(n).iter().map(move |&(t, w)| (mid + half * t, half * w))
}

pub(crate) fn integrate(a: f64, b: f64, n: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    mapped(a, b, n).map(|(z, w)| w * f(z)).sum()
}

/// How an exterior integrand grows at infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Growth {
    /// `|F(y)| <= amplitude * |y|^exponent`, smooth and non-oscillatory.
    Power { amplitude: f64, exponent: f64 },
    /// Arbitrary callable: sampled on unit panels up to `cutoff`, dropped beyond.
    Sampled { exponent: f64, cutoff: f64 },
}

impl Growth {
    pub fn exponent(&self) -> f64 {
        match *self {
            Growth::Power { amplitude, exponent } => {
                if amplitude == 0.0 {
                    0.0
                } else {
                    exponent
                }
            }
            Growth::Sampled { exponent, .. } => exponent,
        }
    }
}

/// Nodes for `∫_start^∞ F(z) z^{-1-sigma} dz`.
///
/// `near` nodes carry weights `w` with the power weight `z^{-1-sigma}` folded
/// in; `far` nodes only cover the region where `F` is not sampled (sampled
/// growth beyond its cutoff) and are used for the constant part of `F`.
#[derive(Clone, Debug, Default)]
pub struct TailNodes {
    pub near: Vec<(f64, f64)>,
    pub far: Vec<(f64, f64)>,
}

/// Geometric panels `[a 2^m, a 2^(m+1)]`, integrated in `s = ln z`.
fn geometric_panels(start: f64, panels: usize, power: f64, out: &mut Vec<(f64, f64)>) {
    let ln2 = std::f64::consts::LN_2;
    let mut a = start;
    for _ in 0..panels {
        let s0 = a.ln();
        for (s, w) in mapped(s0, s0 + ln2, PANEL_POINTS) {
            let z = s.exp();
            // dz = z ds
            out.push((z, w * z.powf(power + 1.0)));
        }
        a *= 2.0;
    }
}

/// Number of doubling panels after which `∫_{Z}^∞ A z^{g - d} dz < tol`,
/// with `d = 1 + decay`.
fn panel_count(start: f64, decay: f64, amplitude: f64, growth: f64, tol: f64) -> usize {
    let rate = decay - growth;
    if rate <= 0.0 {
        return MAX_PANELS;
    }
    let amp = amplitude.max(1.0);
    // amp * Zmax^{-rate} / rate <= tol
    let zmax = (amp / (rate * tol)).powf(1.0 / rate);
    if zmax <= start {
        return 4;
    }
    ((zmax / start).log2().ceil() as usize).clamp(4, MAX_PANELS)
}

/// Tail rule for the kernel weight `z^{-1-sigma}` starting at `start`.
///
/// For power growth `F ~ A z^g` the panel count is chosen so that the neglected
/// remainder is below `tol`; the integrand itself is never inspected.
pub fn kernel_tail(start: f64, sigma: f64, growth: Growth, tol: f64) -> TailNodes {
    let mut nodes = TailNodes::default();
    match growth {
        Growth::Power { amplitude, .. } => {
            let g = growth.exponent();
            // F(z) = ext(x+z) + ext(x-z) - 2u(x) is bounded by ~2A(2z)^g + const.
            let amp = 2.0 * amplitude * 2f64.powf(g) + 2.0;
            let p = panel_count(start, sigma, amp, g, tol);
            geometric_panels(start, p, -1.0 - sigma, &mut nodes.near);
        }
        Growth::Sampled { cutoff, .. } => {
            let cutoff = cutoff.max(start);
            let cells = ((cutoff - start).ceil() as usize).max(1);
            let width = (cutoff - start) / cells as f64;
            for c in 0..cells {
                let a = start + c as f64 * width;
                for (z, w) in mapped(a, a + width, CELL_POINTS) {
                    nodes.near.push((z, w * z.powf(-1.0 - sigma)));
                }
            }
            if cutoff > start {
                let p = panel_count(cutoff, sigma, 2.0, 0.0, tol);
                geometric_panels(cutoff, p, -1.0 - sigma, &mut nodes.far);
            }
        }
    }
    nodes
}

/// `∫_start^∞ F(y) (1 + y)^{-1-sigma} dy` for the L1_sigma tail norm.
pub(crate) fn weighted_tail_integral(start: f64, sigma: f64, growth: Growth, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let weight = |y: f64| (1.0 + y).powf(-1.0 - sigma);
    match growth {
        Growth::Power { amplitude, .. } => {
            let g = growth.exponent();
            let p = panel_count(start, sigma, amplitude, g, tol);
            let ln2 = std::f64::consts::LN_2;
            let mut a = start;
            let mut sum = 0.0;
            for _ in 0..p {
                let s0 = a.ln();
                sum += integrate(s0, s0 + ln2, PANEL_POINTS, |s| {
                    let y = s.exp();
                    y * f(y) * weight(y)
                });
                a *= 2.0;
            }
            sum
        }
        Growth::Sampled { cutoff, .. } => {
            let cutoff = cutoff.max(start);
            let cells = ((cutoff - start).ceil() as usize).max(1);
            let width = (cutoff - start) / cells as f64;
            (0..cells)
                .map(|c| {
                    let a = start + c as f64 * width;
                    integrate(a, a + width, CELL_POINTS, |y| f(y) * weight(y))
                })
                .sum()
        }
    }
}
