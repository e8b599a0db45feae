//! Admissible symmetric kernels of order `sigma` in one space dimension.
//!
//! A kernel is stored through its multiplier profile `kappa(z)`:
//!
//! ```text
//! K(z) = C(sigma) * kappa(z) / |z|^(1 + sigma),     lambda <= kappa(z) <= Lambda
//! ```
//!
//! where `C(sigma)` is the fractional-Laplacian normalization, chosen so that
//! the operator with `kappa == 1` has Fourier symbol `-|xi|^sigma`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, usage, Result};

/// Lowest and highest dyadic shell index stored by [`Multiplier::Dyadic`].
const SHELL_MIN: i32 = -64;
const SHELL_COUNT: usize = 129;

pub(crate) fn check_order(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma < 2.0 {
        Ok(())
    } else {
        Err(domain(format!("order sigma = {sigma} outside (0, 2)")))
    }
}

/// Normalization `C(sigma)` of the one-dimensional fractional Laplacian.
///
/// With `K(z) = C |z|^{-1-sigma}` the operator `PV ∫ (u(x+z) - u(x)) K(z) dz`
/// maps `cos(xi x)` to `-|xi|^sigma cos(xi x)`. In closed form
/// `C = Gamma(1 + sigma) sin(pi sigma / 2) / pi`.
pub fn normalization_constant(sigma: f64) -> Result<f64> {
    check_order(sigma)?;
    Ok(libm::tgamma(1.0 + sigma) * (0.5 * PI * sigma).sin() / PI)
}

/// Multiplier profile `kappa(z)`, always evaluated through `|z|`.
#[derive(Clone)]
pub enum Multiplier {
    Constant(f64),
    /// Piecewise constant on the dyadic shells `2^m <= |z| < 2^(m+1)`.
    /// Shells outside the stored range reuse the nearest stored value.
    Dyadic(Arc<[f64]>),
    /// `limit * (1 + amplitude * min(|z|, 1)^exponent)`.
    Perturbed {
        limit: f64,
        amplitude: f64,
        exponent: f64,
    },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Multiplier {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Multiplier::Custom(Arc::new(f))
    }

    pub fn value(&self, z: f64) -> f64 {
        let t = z.abs();
        match self {
            Multiplier::Constant(c) => *c,
            Multiplier::Dyadic(shells) => {
                let m = t.log2().floor();
                let idx = (m - SHELL_MIN as f64).clamp(0.0, (shells.len() - 1) as f64);
                shells[idx as usize]
            }
            Multiplier::Perturbed {
                limit,
                amplitude,
                exponent,
            } => limit * (1.0 + amplitude * t.min(1.0).powf(*exponent)),
            Multiplier::Custom(f) => f(t),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Multiplier::Constant(_))
    }
}

impl fmt::Debug for Multiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Multiplier::Constant(c) => write!(f, "Constant({c})"),
            Multiplier::Dyadic(s) => write!(f, "Dyadic({} shells)", s.len()),
            Multiplier::Perturbed {
                limit,
                amplitude,
                exponent,
            } => write!(f, "Perturbed({limit}, {amplitude}, {exponent})"),
            Multiplier::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Nondecreasing modulus of continuity `omega` with `omega(0+) = 0`.
#[derive(Clone)]
pub struct Modulus(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl Modulus {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Modulus(Arc::new(f))
    }

    /// `omega(t) = coef * t^exponent`.
    pub fn power(coef: f64, exponent: f64) -> Self {
        Modulus::new(move |t| coef * t.powf(exponent))
    }

    pub fn zero() -> Self {
        Modulus::new(|_| 0.0)
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

impl fmt::Debug for Modulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Modulus(..)")
    }
}

/// Data for the continuity condition `|kappa(z) - k| <= omega(|z|)` on `|z| <= 1`.
#[derive(Clone, Debug)]
pub struct Continuity {
    pub limit: f64,
    pub modulus: Modulus,
}

#[derive(Clone, Debug)]
pub struct KernelSpec {
    sigma: f64,
    lambda: f64,
    big_lambda: f64,
    multiplier: Multiplier,
    continuity: Option<Continuity>,
    norm: f64,
}

impl KernelSpec {
    pub fn new(sigma: f64, lambda: f64, big_lambda: f64, multiplier: Multiplier) -> Result<Self> {
        let norm = normalization_constant(sigma)?;
        if !(lambda > 0.0 && lambda <= big_lambda && big_lambda.is_finite()) {
            return Err(domain(format!(
                "ellipticity band [{lambda}, {big_lambda}] must satisfy 0 < lambda <= Lambda"
            )));
        }
        Ok(KernelSpec {
            sigma,
            lambda,
            big_lambda,
            multiplier,
            continuity: None,
            norm,
        })
    }

    /// The fractional Laplacian: `kappa == 1`, `lambda = Lambda = 1`.
    pub fn frac_laplacian(sigma: f64) -> Result<Self> {
        Self::new(sigma, 1.0, 1.0, Multiplier::Constant(1.0)).map(|k| k.with_continuity(1.0, Modulus::zero()))
    }

    /// Deterministic piecewise-constant multiplier on dyadic shells with
    /// values drawn uniformly from `[lambda, Lambda]`.
    pub fn band(sigma: f64, lambda: f64, big_lambda: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shells: Vec<f64> = (0..SHELL_COUNT)
            .map(|_| lambda + (big_lambda - lambda) * rng.gen::<f64>())
            .collect();
        Self::new(sigma, lambda, big_lambda, Multiplier::Dyadic(shells.into()))
    }

    /// `kappa(z) = k (1 + min(|z|,1)^a / 2)` in the band `[k/2, 2k]`, with
    /// continuity data `(k, omega(t) = k t^a / 2)`.
    pub fn perturbed(sigma: f64, limit: f64, exponent: f64) -> Result<Self> {
        if !(limit > 0.0 && exponent > 0.0) {
            return Err(domain(format!(
                "perturbed kernel needs k > 0 and omega exponent > 0 (got {limit}, {exponent})"
            )));
        }
        let mult = Multiplier::Perturbed {
            limit,
            amplitude: 0.5,
            exponent,
        };
        Ok(Self::new(sigma, 0.5 * limit, 2.0 * limit, mult)?
            .with_continuity(limit, Modulus::power(0.5 * limit, exponent)))
    }

    pub fn with_continuity(mut self, limit: f64, modulus: Modulus) -> Self {
        self.continuity = Some(Continuity { limit, modulus });
        self
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn big_lambda(&self) -> f64 {
        self.big_lambda
    }

    pub fn multiplier(&self) -> &Multiplier {
        &self.multiplier
    }

    pub fn continuity(&self) -> Option<&Continuity> {
        self.continuity.as_ref()
    }

    /// `C(sigma)`.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    #[inline]
    pub fn kappa(&self, z: f64) -> f64 {
        self.multiplier.value(z)
    }

    /// `K(z) = C(sigma) kappa(z) |z|^{-1-sigma}`.
    pub fn kernel_value(&self, z: f64) -> Result<f64> {
        if z == 0.0 || !z.is_finite() {
            return Err(domain("kernel is singular at z = 0"));
        }
        Ok(self.norm * self.kappa(z) * z.abs().powf(-1.0 - self.sigma))
    }
}

/// Outcome of a sampled condition check; on failure, the worst sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Verdict {
    Pass,
    Fail { z: f64, value: f64 },
}

impl Verdict {
    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// Symmetric, log-spaced sample set in `[r_max * 1e-8, r_max]` and its mirror.
pub fn log_spaced_samples(r_max: f64, per_side: usize) -> Vec<f64> {
    let per_side = per_side.max(2);
    let decades = 8.0;
    let mut out = Vec::with_capacity(2 * per_side);
    for i in 0..per_side {
        let t = r_max * 10f64.powf(-decades * i as f64 / (per_side - 1) as f64);
        out.push(t);
        out.push(-t);
    }
    out
}

/// Checks `lambda <= kappa(z) <= Lambda` on the samples.
pub fn check_ellipticity(spec: &KernelSpec, samples: &[f64]) -> Result<Verdict> {
    if samples.is_empty() {
        return Err(usage("ellipticity check needs at least one sample"));
    }
    let mut worst: Option<(f64, f64, f64)> = None;
    for &z in samples {
        if z == 0.0 {
            return Err(usage("sample set must exclude z = 0"));
        }
        let k = spec.kappa(z);
        let excess = (spec.lambda - k).max(k - spec.big_lambda);
        if excess > 0.0 && worst.map_or(true, |(_, _, e)| excess > e) {
            worst = Some((z, k, excess));
        }
    }
    Ok(match worst {
        None => Verdict::Pass,
        Some((z, value, _)) => Verdict::Fail { z, value },
    })
}

const ROUNDING_SLACK: f64 = 1e-12;

/// Checks `|kappa(z) - k| <= omega(|z|)` on the samples with `0 < |z| <= 1`.
pub fn check_continuity_modulus(spec: &KernelSpec, samples: &[f64]) -> Result<Verdict> {
    let cont = spec
        .continuity
        .as_ref()
        .ok_or_else(|| usage("kernel has no continuity data (k, omega)"))?;
    let mut worst: Option<(f64, f64, f64)> = None;
    let mut tested = 0;
    for &z in samples {
        let t = z.abs();
        if t == 0.0 || t > 1.0 {
            continue;
        }
        tested += 1;
        let gap = (spec.kappa(z) - cont.limit).abs();
        let bound = cont.modulus.eval(t);
        let excess = gap - bound;
        if excess > ROUNDING_SLACK * bound.max(cont.limit.abs()) && worst.map_or(true, |(_, _, e)| excess > e) {
            worst = Some((z, gap, excess));
        }
    }
    if tested == 0 {
        return Err(usage("continuity check needs samples with 0 < |z| <= 1"));
    }
    Ok(match worst {
        None => Verdict::Pass,
        Some((z, value, _)) => Verdict::Fail { z, value },
    })
}

/// `inf_i sup_j` family of kernels sharing order and ellipticity band.
#[derive(Clone, Debug)]
pub struct IsaacsOperator {
    kernels: Vec<Vec<KernelSpec>>,
}

impl IsaacsOperator {
    pub fn new(kernels: Vec<Vec<KernelSpec>>) -> Result<Self> {
        let first = kernels
            .first()
            .and_then(|row| row.first())
            .ok_or_else(|| usage("Isaacs family needs at least one row and one column"))?
            .clone();
        let cols = kernels[0].len();
        for row in &kernels {
            if row.len() != cols {
                return Err(usage("Isaacs family must be rectangular"));
            }
            for k in row {
                if k.sigma != first.sigma || k.lambda != first.lambda || k.big_lambda != first.big_lambda {
                    return Err(usage(
                        "all kernels of an Isaacs family must share sigma, lambda and Lambda",
                    ));
                }
            }
        }
        Ok(IsaacsOperator { kernels })
    }

    pub fn single(spec: KernelSpec) -> Self {
        IsaacsOperator {
            kernels: vec![vec![spec]],
        }
    }

    /// `rows x cols` band kernels; entry `(i, j)` uses seed `seed + i*cols + j`.
    pub fn band_family(sigma: f64, lambda: f64, big_lambda: f64, rows: usize, cols: usize, seed: u64) -> Result<Self> {
        let kernels = (0..rows)
            .map(|i| {
                (0..cols)
                    .map(|j| KernelSpec::band(sigma, lambda, big_lambda, seed + (i * cols + j) as u64))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(kernels)
    }

    pub fn rows(&self) -> usize {
        self.kernels.len()
    }

    pub fn cols(&self) -> usize {
        self.kernels[0].len()
    }

    pub fn get(&self, i: usize, j: usize) -> &KernelSpec {
        &self.kernels[i][j]
    }

    pub fn kernels(&self) -> impl Iterator<Item = &KernelSpec> {
        self.kernels.iter().flatten()
    }

    pub fn sigma(&self) -> f64 {
        self.kernels[0][0].sigma
    }

    pub fn lambda(&self) -> f64 {
        self.kernels[0][0].lambda
    }

    pub fn big_lambda(&self) -> f64 {
        self.kernels[0][0].big_lambda
    }

    /// `min_i max_j values[i][j]`, with `values` laid out row-major.
    pub fn inf_sup(&self, values: &[f64]) -> f64 {
        let cols = self.cols();
        values
            .chunks(cols)
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .fold(f64::INFINITY, f64::min)
    }
}
