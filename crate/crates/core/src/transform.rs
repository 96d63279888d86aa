//! Scale-type transforms tabulated on a uniform grid.
//!
//! For a homogeneous drift `â` the scale function is
//! `f(x) = ∫₀ˣ exp{E(u)} du` with exponent `E(u) = −2∫₀ᵘ â(v) dv`.
//! Everything is built by cumulative composite Simpson sums anchored at
//! `x = 0`; between grid points `f` uses a monotone cubic Hermite interpolant
//! and `f′` a linear one.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{Model, ScalarFn};
use crate::quad::{cumulative_simpson, hermite, monotone_slopes};

const EXPONENT_LIMIT: f64 = 700.0;
const MAX_REFINEMENTS: u32 = 6;

/// Which function plays the role of `G_T`.
#[derive(Clone, Default)]
pub enum TransformChoice {
    /// `G_T = f_T`.
    #[default]
    ScaleFunction,
    Identity,
    /// `G(x) = x³`.
    Cube,
    /// User-provided `G` and `G′`.
    Custom { g: ScalarFn, g_prime: ScalarFn },
}

impl std::fmt::Debug for TransformChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Self::ScaleFunction => "ScaleFunction",
            Self::Identity => "Identity",
            Self::Cube => "Cube",
            Self::Custom { .. } => "Custom",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone)]
pub struct TransformOptions {
    /// Half-width of the grid `[−x_max, x_max]`.
    pub x_max: f64,
    /// Relative tolerance on `f`, estimated by step doubling.
    pub tol: f64,
    /// Normalize the exponent by a constant shift so very large drifts stay
    /// representable. Only ratios `f′(x)/f′(u)` are then meaningful.
    pub log_space: bool,
    /// Upper bound on the grid spacing; the default rule
    /// `min(0.005, 1/(20 b))` is always applied as well.
    pub max_spacing: Option<f64>,
    pub choice: TransformChoice,
}

impl Default for TransformOptions {
    fn default() -> Self {
        Self {
            x_max: 8.0,
            tol: 1e-8,
            log_space: false,
            max_spacing: None,
            choice: TransformChoice::ScaleFunction,
        }
    }
}

/// Default grid spacing rule for drift oscillating at wavelength `~1/b`.
pub fn default_spacing(b: f64) -> f64 {
    0.005_f64.min(1.0 / (20.0 * b))
}

#[derive(Debug, Clone)]
pub struct TransformTable {
    pub b: f64,
    pub h: f64,
    /// Index of the grid point `x = 0`.
    pub anchor: usize,
    pub x: Vec<f64>,
    /// `â` samples.
    pub hat_drift: Vec<f64>,
    /// `E = −2∫₀ˣ â − shift`.
    pub exponent: Vec<f64>,
    pub shift: f64,
    pub f_prime: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub g_prime: Vec<f64>,
    /// `R(x) = ∫₀ˣ 1/f′`.
    pub recip: Vec<f64>,
    pub log_space: bool,
    /// Step-doubling estimate of the relative error of `f`.
    pub error_estimate: f64,
    g_is_f: bool,
}

struct Scale {
    exponent: Vec<f64>,
    f_prime: Vec<f64>,
    f: Vec<f64>,
}

fn scale_on_grid(hat: &[f64], h: f64, anchor: usize) -> Vec<f64> {
    let mut e = cumulative_simpson(hat, h, anchor);
    for v in &mut e {
        *v *= -2.0;
    }
    e
}

fn exponentiate(exponent: &[f64], h: f64, anchor: usize) -> (Vec<f64>, Vec<f64>) {
    let fp: Vec<f64> = exponent.iter().map(|e| e.exp()).collect();
    let f = cumulative_simpson(&fp, h, anchor);
    (fp, f)
}

fn check_exponent(x: &[f64], e: &[f64], log_space: bool) -> Result<f64> {
    let (lo, hi) = e
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    let shift = if log_space { 0.5 * (lo + hi) } else { 0.0 };
    if let Some((i, v)) = e
        .iter()
        .enumerate()
        .find(|(_, v)| (**v - shift).abs() > EXPONENT_LIMIT)
    {
        return Err(Error::ExponentOverflow {
            x: x[i],
            magnitude: (v - shift).abs(),
        });
    }
    Ok(shift)
}

fn build_scale(
    x: &[f64],
    hat: &[f64],
    h: f64,
    anchor: usize,
    log_space: bool,
) -> Result<(Scale, f64)> {
    let mut exponent = scale_on_grid(hat, h, anchor);
    let shift = check_exponent(x, &exponent, log_space)?;
    if shift != 0.0 {
        for e in &mut exponent {
            *e -= shift;
        }
    }
    let (f_prime, f) = exponentiate(&exponent, h, anchor);
    Ok((
        Scale {
            exponent,
            f_prime,
            f,
        },
        shift,
    ))
}

/// Relative step-doubling error estimate of `f` against the same rule on
/// every other grid point.
fn doubling_estimate(x: &[f64], hat: &[f64], h: f64, anchor: usize, scale: &Scale, shift: f64) -> f64 {
    let start = anchor % 2;
    let coarse_hat: Vec<f64> = hat[start..].iter().step_by(2).copied().collect();
    if coarse_hat.len() < 3 {
        return f64::INFINITY;
    }
    let coarse_anchor = (anchor - start) / 2;
    let mut e = scale_on_grid(&coarse_hat, 2.0 * h, coarse_anchor);
    for v in &mut e {
        *v -= shift;
    }
    let (_, coarse_f) = exponentiate(&e, 2.0 * h, coarse_anchor);
    let mut worst: f64 = 0.0;
    for (k, cf) in coarse_f.iter().enumerate() {
        let j = start + 2 * k;
        if j == anchor || x[j] == 0.0 {
            continue;
        }
        let fine = scale.f[j];
        let rel = (fine - cf).abs() / 15.0 / fine.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
    }
    worst
}

/// Tabulate `f_T`, `f′_T` and `G_T` for one model instance.
pub fn build_f(model: &Model, opts: &TransformOptions) -> Result<TransformTable> {
    if !(opts.x_max > 0.0) || !opts.x_max.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "x_max = {} must be positive",
            opts.x_max
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tol = {} must be positive",
            opts.tol
        )));
    }
    let mut target = default_spacing(model.b);
    if let Some(s) = opts.max_spacing {
        target = target.min(s);
    }
    let mut half = (opts.x_max / target).ceil().max(2.0) as usize;

    let mut refinements = 0;
    loop {
        let h = opts.x_max / half as f64;
        let n = 2 * half + 1;
        let x: Vec<f64> = (0..n).map(|j| (j as f64 - half as f64) * h).collect();
        let hat: Vec<f64> = x.iter().map(|&v| (model.homogeneous_drift)(v)).collect();
        if let Some(i) = hat.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation(format!(
                "homogeneous drift is not finite at x = {}",
                x[i]
            )));
        }
        let (scale, shift) = build_scale(&x, &hat, h, half, opts.log_space)?;
        let estimate = doubling_estimate(&x, &hat, h, half, &scale, shift);
        if estimate > opts.tol {
            if refinements < MAX_REFINEMENTS {
                refinements += 1;
                half *= 2;
                continue;
            }
            return Err(Error::Tolerance {
                tol: opts.tol,
                estimate,
            });
        }
        return Ok(assemble(model.b, x, hat, h, half, scale, shift, opts, estimate));
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    b: f64,
    x: Vec<f64>,
    hat: Vec<f64>,
    h: f64,
    anchor: usize,
    scale: Scale,
    shift: f64,
    opts: &TransformOptions,
    estimate: f64,
) -> TransformTable {
    let recip_samples: Vec<f64> = scale.exponent.iter().map(|e| (-e).exp()).collect();
    let recip = cumulative_simpson(&recip_samples, h, anchor);
    let (g, g_prime, g_is_f) = match &opts.choice {
        TransformChoice::ScaleFunction => (scale.f.clone(), scale.f_prime.clone(), true),
        TransformChoice::Identity => (x.clone(), vec![1.0; x.len()], false),
        TransformChoice::Cube => (
            x.iter().map(|v| v * v * v).collect(),
            x.iter().map(|v| 3.0 * v * v).collect(),
            false,
        ),
        TransformChoice::Custom { g, g_prime } => (
            x.iter().map(|v| g(*v)).collect(),
            x.iter().map(|v| g_prime(*v)).collect(),
            false,
        ),
    };
    TransformTable {
        b,
        h,
        anchor,
        x,
        hat_drift: hat,
        exponent: scale.exponent,
        shift,
        f_prime: scale.f_prime,
        f: scale.f,
        g,
        g_prime,
        recip,
        log_space: opts.log_space,
        error_estimate: estimate,
        g_is_f,
    }
}

impl TransformTable {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    pub fn g_is_scale_function(&self) -> bool {
        self.g_is_f
    }

    /// Cell index and local coordinate of `x`.
    fn locate(&self, x: f64) -> Result<(usize, f64)> {
        let (lo, hi) = (self.x_min(), self.x_max());
        if !(x >= lo && x <= hi) {
            return Err(Error::OutOfRange { x, lo, hi });
        }
        let pos = (x - lo) / self.h;
        let i = (pos.floor() as usize).min(self.x.len() - 2);
        Ok((i, (pos - i as f64).clamp(0.0, 1.0)))
    }

    /// Grid indices with `|x| <= window`.
    pub fn window(&self, window: f64) -> std::ops::RangeInclusive<usize> {
        let k = ((window / self.h) + 1e-9).floor() as usize;
        let k = k.min(self.anchor).min(self.x.len() - 1 - self.anchor);
        (self.anchor - k)..=(self.anchor + k)
    }

    fn monotone_at(&self, values: &[f64], slopes: &[f64], x: f64) -> Result<f64> {
        let (i, s) = self.locate(x)?;
        let (d0, d1) = monotone_slopes(values[i], values[i + 1], slopes[i], slopes[i + 1], self.h);
        Ok(hermite(values[i], values[i + 1], d0, d1, self.h, s))
    }

    pub fn f_at(&self, x: f64) -> Result<f64> {
        self.monotone_at(&self.f, &self.f_prime, x)
    }

    pub fn f_prime_at(&self, x: f64) -> Result<f64> {
        let (i, s) = self.locate(x)?;
        Ok(self.f_prime[i] + s * (self.f_prime[i + 1] - self.f_prime[i]))
    }

    pub fn g_at(&self, x: f64) -> Result<f64> {
        if self.g_is_f {
            return self.f_at(x);
        }
        let (i, s) = self.locate(x)?;
        let (y0, y1) = (self.g[i], self.g[i + 1]);
        let (d0, d1) = if y1 > y0 {
            monotone_slopes(y0, y1, self.g_prime[i], self.g_prime[i + 1], self.h)
        } else {
            (self.g_prime[i], self.g_prime[i + 1])
        };
        Ok(hermite(y0, y1, d0, d1, self.h, s))
    }

    pub fn g_prime_at(&self, x: f64) -> Result<f64> {
        let (i, s) = self.locate(x)?;
        Ok(self.g_prime[i] + s * (self.g_prime[i + 1] - self.g_prime[i]))
    }

    /// `R(x) = ∫₀ˣ du / f′(u)`.
    pub fn recip_at(&self, x: f64) -> Result<f64> {
        let (i, s) = self.locate(x)?;
        let d0 = 1.0 / self.f_prime[i];
        let d1 = 1.0 / self.f_prime[i + 1];
        let (d0, d1) = monotone_slopes(self.recip[i], self.recip[i + 1], d0, d1, self.h);
        Ok(hermite(self.recip[i], self.recip[i + 1], d0, d1, self.h, s))
    }

    /// Whether `G` is strictly increasing on the grid.
    pub fn g_strictly_increasing(&self) -> bool {
        self.g.windows(2).all(|w| w[1] > w[0])
    }

    /// Inverse of `G` on the grid range, by bracketing plus bisection on the
    /// interpolant.
    pub fn g_inverse(&self, y: f64) -> Result<f64> {
        let (lo, hi) = (self.g[0], self.g[self.g.len() - 1]);
        if !(y >= lo && y <= hi) {
            return Err(Error::OutOfRange { x: y, lo, hi });
        }
        let i = match self.g.partition_point(|v| *v <= y) {
            0 => 0,
            p => (p - 1).min(self.g.len() - 2),
        };
        let (mut a, mut b) = (self.x[i], self.x[i + 1]);
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if self.g_at(m)? <= y {
                a = m;
            } else {
                b = m;
            }
            if b - a <= f64::EPSILON * a.abs().max(b.abs()).max(1e-300) {
                break;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// Centered finite-difference `G″` at every grid point (one-sided at the
    /// ends).
    pub fn g_second_derivative(&self) -> Vec<f64> {
        let n = self.g_prime.len();
        let h = self.h;
        (0..n)
            .map(|i| {
                if i == 0 {
                    (self.g_prime[1] - self.g_prime[0]) / h
                } else if i == n - 1 {
                    (self.g_prime[n - 1] - self.g_prime[n - 2]) / h
                } else {
                    (self.g_prime[i + 1] - self.g_prime[i - 1]) / (2.0 * h)
                }
            })
            .collect()
    }

    /// Grid profile of the functional `f′(x)·∫₀ˣ q(v)/f′(v) dv` for `q`
    /// sampled on the grid.
    pub fn q_profile(&self, q: &[f64]) -> QProfile {
        assert_eq!(q.len(), self.len(), "q must be sampled on the table grid");
        let weighted: Vec<f64> = q
            .iter()
            .zip(&self.exponent)
            .map(|(q, e)| q * (-e).exp())
            .collect();
        let integral = cumulative_simpson(&weighted, self.h, self.anchor);
        let values = integral
            .iter()
            .zip(&self.f_prime)
            .map(|(i, fp)| i * fp)
            .collect();
        QProfile {
            integral,
            weighted,
            values,
        }
    }

    /// Sample a function on the grid.
    pub fn sample(&self, q: &dyn Fn(f64) -> f64) -> Vec<f64> {
        self.x.iter().map(|x| q(*x)).collect()
    }

    pub fn write_csv<W: Write>(&self, phi: Option<&NestedTransform>, mut w: W) -> Result<()> {
        writeln!(w, "x,f_prime,f,G,phi")?;
        for i in 0..self.len() {
            let p = phi.map_or(f64::NAN, |p| p.phi[i]);
            writeln!(
                w,
                "{},{},{},{},{}",
                self.x[i], self.f_prime[i], self.f[i], self.g[i], p
            )?;
        }
        Ok(())
    }
}

/// `f′(x)·∫₀ˣ q/f′` on the table grid.
#[derive(Debug, Clone)]
pub struct QProfile {
    /// `∫₀ˣ q/f′`.
    pub integral: Vec<f64>,
    /// `q/f′` samples, the derivative of `integral`.
    pub weighted: Vec<f64>,
    pub values: Vec<f64>,
}

impl QProfile {
    pub fn at(&self, table: &TransformTable, x: f64) -> Result<f64> {
        let (i, s) = table.locate(x)?;
        let inner = hermite(
            self.integral[i],
            self.integral[i + 1],
            self.weighted[i],
            self.weighted[i + 1],
            table.h,
            s,
        );
        Ok(table.f_prime_at(x)? * inner)
    }

    /// `sup_{|x| <= window} |f′ ∫ q/f′|` over grid points.
    pub fn sup_abs(&self, table: &TransformTable, window: f64) -> f64 {
        self.values[table.window(window)]
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// The (A3)-type functional `f′(x)·∫₀ˣ q(v)/f′(v) dv` at a single point.
pub fn a3_functional(table: &TransformTable, q: &dyn Fn(f64) -> f64, x: f64) -> Result<f64> {
    table.locate(x)?;
    let samples = table.sample(q);
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("q is not finite on the grid".into()));
    }
    table.q_profile(&samples).at(table, x)
}

/// `Φ(x) = 2∫₀ˣ f′(u) I(u) du` with `I(u) = ∫₀ᵘ g/f′`.
#[derive(Debug, Clone)]
pub struct NestedTransform {
    pub inner: Vec<f64>,
    pub inner_derivative: Vec<f64>,
    pub phi: Vec<f64>,
    /// `Φ′ = 2 f′ I`.
    pub phi_prime: Vec<f64>,
}

pub fn build_phi(table: &TransformTable, model: &Model) -> Result<NestedTransform> {
    build_phi_with(table, &*model.integrand_g)
}

pub fn build_phi_with(table: &TransformTable, g: &dyn Fn(f64) -> f64) -> Result<NestedTransform> {
    let samples = table.sample(g);
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::Evaluation(format!(
            "integrand is not finite at x = {}",
            table.x[i]
        )));
    }
    let profile = table.q_profile(&samples);
    let phi_prime: Vec<f64> = profile.values.iter().map(|v| 2.0 * v).collect();
    let phi = cumulative_simpson(&phi_prime, table.h, table.anchor);
    Ok(NestedTransform {
        inner: profile.integral,
        inner_derivative: profile.weighted,
        phi,
        phi_prime,
    })
}

impl NestedTransform {
    pub fn phi_at(&self, table: &TransformTable, x: f64) -> Result<f64> {
        let (i, s) = table.locate(x)?;
        Ok(hermite(
            self.phi[i],
            self.phi[i + 1],
            self.phi_prime[i],
            self.phi_prime[i + 1],
            table.h,
            s,
        ))
    }

    pub fn inner_at(&self, table: &TransformTable, x: f64) -> Result<f64> {
        let (i, s) = table.locate(x)?;
        Ok(hermite(
            self.inner[i],
            self.inner[i + 1],
            self.inner_derivative[i],
            self.inner_derivative[i + 1],
            table.h,
            s,
        ))
    }
}
