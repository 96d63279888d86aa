//! Coefficient families, parameter schedules and the built-in model catalog.
//!
//! The parameter `T` enters every family only through the scale constant
//! `b_T > 1`, so families are indexed directly by `b`. A family is turned into
//! concrete coefficient functions with [`ModelFamily::at`], which is where
//! per-`b` constants (powers, phases) get precomputed.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `x -> value`.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// `(t, x) -> value`.
pub type TimeStateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// `b -> T`: something that depends on the schedule parameter.
pub type Indexed<T> = Arc<dyn Fn(f64) -> T + Send + Sync>;

pub fn scalar_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(f)
}

/// Drift-side coefficients of the equation at a fixed `b`.
#[derive(Clone)]
pub struct Coefficients {
    /// `a_T(t, x)`.
    pub drift: TimeStateFn,
    /// `â_T(x)`.
    pub homogeneous_drift: ScalarFn,
    /// `L_T` with `|a_T(t, x)| <= L_T`.
    pub drift_bound: f64,
    /// Closed-form `sup_x |a_T(t, x) - â_T(x)|` as a function of `t`, when known.
    pub sup_gap: Option<ScalarFn>,
}

/// A parameterized family `dξ = a_T(t, ξ) dt + dW`, `ξ(0) = x0`, together
/// with the integrand `g_T` and terminal function `F_T` of the functionals.
#[derive(Clone)]
pub struct ModelFamily {
    pub name: String,
    pub x0: f64,
    coefficients: Indexed<Coefficients>,
    integrand: Indexed<ScalarFn>,
    terminal: Indexed<ScalarFn>,
}

/// A [`ModelFamily`] evaluated at one value of `b`.
#[derive(Clone)]
pub struct Model {
    pub b: f64,
    pub x0: f64,
    pub drift: TimeStateFn,
    pub homogeneous_drift: ScalarFn,
    pub drift_bound: f64,
    pub sup_gap: Option<ScalarFn>,
    pub integrand_g: ScalarFn,
    pub terminal_f: ScalarFn,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("b", &self.b)
            .field("x0", &self.x0)
            .field("drift_bound", &self.drift_bound)
            .field("has_sup_gap", &self.sup_gap.is_some())
            .finish()
    }
}

impl fmt::Debug for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelFamily")
            .field("name", &self.name)
            .field("x0", &self.x0)
            .finish()
    }
}

impl ModelFamily {
    pub fn new(
        name: impl Into<String>,
        x0: f64,
        coefficients: Indexed<Coefficients>,
    ) -> Self {
        let zero: Indexed<ScalarFn> = Arc::new(|_| scalar_fn(|_| 0.0));
        Self {
            name: name.into(),
            x0,
            coefficients,
            integrand: zero.clone(),
            terminal: zero,
        }
    }

    pub fn with_integrand(mut self, integrand: Indexed<ScalarFn>) -> Self {
        self.integrand = integrand;
        self
    }

    pub fn with_terminal(mut self, terminal: Indexed<ScalarFn>) -> Self {
        self.terminal = terminal;
        self
    }

    pub fn with_x0(mut self, x0: f64) -> Self {
        self.x0 = x0;
        self
    }

    pub fn at(&self, b: f64) -> Model {
        let c = (self.coefficients)(b);
        Model {
            b,
            x0: self.x0,
            drift: c.drift,
            homogeneous_drift: c.homogeneous_drift,
            drift_bound: c.drift_bound,
            sup_gap: c.sup_gap,
            integrand_g: (self.integrand)(b),
            terminal_f: (self.terminal)(b),
        }
    }

    // Pointwise accessors. They rebuild the per-b closures on every call, so
    // hot loops should go through `at` instead.

    pub fn drift(&self, t: f64, x: f64, b: f64) -> f64 {
        (self.at(b).drift)(t, x)
    }

    pub fn homogeneous_drift(&self, x: f64, b: f64) -> f64 {
        (self.at(b).homogeneous_drift)(x)
    }

    pub fn drift_bound(&self, b: f64) -> f64 {
        self.at(b).drift_bound
    }

    pub fn integrand_g(&self, x: f64, b: f64) -> f64 {
        (self.at(b).integrand_g)(x)
    }

    pub fn terminal_f(&self, x: f64, b: f64) -> f64 {
        (self.at(b).terminal_f)(x)
    }

    pub fn sup_gap(&self, t: f64, b: f64) -> Option<f64> {
        self.at(b).sup_gap.map(|g| g(t))
    }
}

/// Coefficients of the limit equation `dζ = a0(ζ) dt + σ0(ζ) dŴ`, `ζ(0) = y0`,
/// and of the limit functionals.
#[derive(Clone)]
pub struct LimitModel {
    pub a0: ScalarFn,
    pub sigma0: ScalarFn,
    pub g0: ScalarFn,
    pub f0: ScalarFn,
    pub y0: f64,
    pub c0: Option<f64>,
    pub b0: Option<f64>,
}

impl fmt::Debug for LimitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LimitModel")
            .field("y0", &self.y0)
            .field("c0", &self.c0)
            .field("b0", &self.b0)
            .finish()
    }
}

impl LimitModel {
    /// Standard Wiener limit `ζ = y0 + Ŵ` with `g0 ≡ 0`, `F0 ≡ 0`.
    pub fn wiener(y0: f64) -> Self {
        Self {
            a0: scalar_fn(|_| 0.0),
            sigma0: scalar_fn(|_| 1.0),
            g0: scalar_fn(|_| 0.0),
            f0: scalar_fn(|_| 0.0),
            y0,
            c0: None,
            b0: None,
        }
    }

    pub fn with_g0(mut self, g0: ScalarFn) -> Self {
        self.g0 = g0;
        self
    }

    pub fn with_f0(mut self, f0: ScalarFn) -> Self {
        self.f0 = f0;
        self
    }
}

/// Increasing list of scale constants `b_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSchedule {
    values: Vec<f64>,
    pub gamma: Option<f64>,
}

impl ParamSchedule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("schedule is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 1.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "schedule value {v} must be finite and > 1"
            )));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "schedule must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            values,
            gamma: None,
        })
    }

    /// `b = 2^k` for `k = k_min..=k_max`.
    pub fn dyadic(k_min: i32, k_max: i32) -> Result<Self> {
        if k_min > k_max {
            return Err(Error::InvalidParameter(format!(
                "empty dyadic range 2^{k_min}..2^{k_max}"
            )));
        }
        Self::new((k_min..=k_max).map(|k| 2f64.powi(k)).collect())
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = Some(gamma);
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Default for ParamSchedule {
    fn default() -> Self {
        Self::dyadic(3, 10).expect("static schedule").with_gamma(0.5)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "gamma = {gamma} must lie in [0, 1)"
        )))
    }
}

/// Drift `b^γ cos(x b) + t b / (1 + t² b²) · sin((x − 1) b)` with
/// homogeneous part `b^γ cos(x b)`; the transformed process tends to `x0 + Ŵ`.
pub fn example1_model(gamma: f64) -> Result<(ModelFamily, LimitModel)> {
    check_gamma(gamma)?;
    let coefficients: Indexed<Coefficients> = Arc::new(move |b: f64| {
        let amp = b.powf(gamma);
        let (sin_b, cos_b) = b.sin_cos();
        let drift: TimeStateFn = Arc::new(move |t, x| {
            let (s, c) = (x * b).sin_cos();
            // sin((x - 1) b) expanded so one sin_cos serves both terms
            let shifted = s * cos_b - c * sin_b;
            amp * c + t * b / (1.0 + t * t * b * b) * shifted
        });
        Coefficients {
            drift,
            homogeneous_drift: scalar_fn(move |x| amp * (x * b).cos()),
            drift_bound: amp + 0.5,
            sup_gap: Some(scalar_fn(move |t| t * b / (1.0 + t * t * b * b))),
        }
    });
    let family = ModelFamily::new("example1", 0.0, coefficients);
    Ok((family, LimitModel::wiener(0.0)))
}

/// `g_T(x) = b^γ / (1 + b² x²)`; its limit integrand is `g0 ≡ 0`.
pub fn example2_integrand(gamma: f64) -> Result<Indexed<ScalarFn>> {
    check_gamma(gamma)?;
    Ok(Arc::new(move |b: f64| {
        let amp = b.powf(gamma);
        let b2 = b * b;
        scalar_fn(move |x| amp / (1.0 + b2 * x * x))
    }))
}

/// Example 1 drift with the example 2 integrand attached.
pub fn example2_model(gamma: f64) -> Result<(ModelFamily, LimitModel)> {
    let (family, limit) = example1_model(gamma)?;
    let mut family = family.with_integrand(example2_integrand(gamma)?);
    family.name = "example2".into();
    Ok((family, limit))
}

/// Oracle models with trivially known solutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SyntheticKind {
    ZeroDrift,
    ConstantDrift(f64),
    /// `−x` clipped to `[−10, 10]`.
    LinearDrift,
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero_drift" => Ok(Self::ZeroDrift),
            "linear_drift" => Ok(Self::LinearDrift),
            _ => match s.strip_prefix("constant_drift") {
                Some(rest) => {
                    let c = rest
                        .trim_start_matches(['(', ':'])
                        .trim_end_matches(')')
                        .parse::<f64>()
                        .map_err(|_| {
                            Error::InvalidParameter(format!("bad constant in '{s}'"))
                        })?;
                    Ok(Self::ConstantDrift(c))
                }
                None => Err(Error::InvalidParameter(format!(
                    "unknown synthetic model '{s}'"
                ))),
            },
        }
    }
}

/// Synthetic model with `a_T ≡ â_T` (so the inhomogeneous gap is zero).
pub fn synthetic_model(kind: SyntheticKind) -> ModelFamily {
    let (name, drift, bound): (&str, ScalarFn, f64) = match kind {
        SyntheticKind::ZeroDrift => ("zero_drift", scalar_fn(|_| 0.0), 0.0),
        SyntheticKind::ConstantDrift(c) => ("constant_drift", scalar_fn(move |_| c), c.abs()),
        SyntheticKind::LinearDrift => (
            "linear_drift",
            scalar_fn(|x| (-x).clamp(-10.0, 10.0)),
            10.0,
        ),
    };
    let coefficients: Indexed<Coefficients> = Arc::new(move |_b| {
        let d = drift.clone();
        Coefficients {
            drift: Arc::new(move |_t, x| d(x)),
            homogeneous_drift: drift.clone(),
            drift_bound: bound,
            sup_gap: Some(scalar_fn(|_| 0.0)),
        }
    });
    ModelFamily::new(name, 0.0, coefficients)
}

/// Parameter-free real functions selectable by name in configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NamedFn {
    Zero,
    One,
    Constant(f64),
    Identity,
    NegIdentity,
    Sign,
    /// `(π/2)·sign(x)`, the limit of `arctan(b x)`.
    HalfPiSign,
    Sin,
    Tanh,
    Square,
}

impl NamedFn {
    pub fn to_fn(self) -> ScalarFn {
        match self {
            Self::Zero => scalar_fn(|_| 0.0),
            Self::One => scalar_fn(|_| 1.0),
            Self::Constant(c) => scalar_fn(move |_| c),
            Self::Identity => scalar_fn(|x| x),
            Self::NegIdentity => scalar_fn(|x| -x),
            Self::Sign => scalar_fn(sign),
            Self::HalfPiSign => scalar_fn(|x| FRAC_PI_2 * sign(x)),
            Self::Sin => scalar_fn(f64::sin),
            Self::Tanh => scalar_fn(f64::tanh),
            Self::Square => scalar_fn(|x| x * x),
        }
    }
}

/// `sign(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl FromStr for NamedFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Ok(match s {
            "zero" | "0" => Self::Zero,
            "one" | "1" => Self::One,
            "identity" | "x" => Self::Identity,
            "neg_identity" | "-x" => Self::NegIdentity,
            "sign" => Self::Sign,
            "half_pi_sign" => Self::HalfPiSign,
            "sin" => Self::Sin,
            "tanh" => Self::Tanh,
            "square" | "x^2" => Self::Square,
            _ => match s.strip_prefix("const:") {
                Some(c) => Self::Constant(c.trim().parse().map_err(|_| {
                    Error::InvalidParameter(format!("bad constant in '{s}'"))
                })?),
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown function name '{s}'"
                    )))
                }
            },
        })
    }
}

/// Integrand families `g_T`, indexed by `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IntegrandKind {
    /// `b^γ / (1 + b² x²)`.
    Example2 { gamma: f64 },
    /// `b / (1 + b² x²)`; `∫ g_T` tends to `(π/2) sign(x)`.
    Cauchy,
    /// `b · sin(b x)`; with `â ≡ 0` its constants are `c0 = 1`, `b0 = 1/√2`.
    ScaledSine,
    /// `sign(sin(b x))`.
    SignSin,
    /// The same function for every `b`.
    Fixed(NamedFn),
}

impl IntegrandKind {
    pub fn family(self) -> Result<Indexed<ScalarFn>> {
        Ok(match self {
            Self::Example2 { gamma } => example2_integrand(gamma)?,
            Self::Cauchy => Arc::new(|b: f64| {
                let b2 = b * b;
                scalar_fn(move |x| b / (1.0 + b2 * x * x))
            }),
            Self::ScaledSine => Arc::new(|b: f64| scalar_fn(move |x| b * (b * x).sin())),
            Self::SignSin => Arc::new(|b: f64| scalar_fn(move |x| sign((b * x).sin()))),
            Self::Fixed(f) => {
                let g = f.to_fn();
                Arc::new(move |_| g.clone())
            }
        })
    }

    pub fn parse(s: &str, gamma: f64) -> Result<Self> {
        Ok(match s.trim() {
            "example2" => Self::Example2 { gamma },
            "cauchy" => Self::Cauchy,
            "scaled_sine" => Self::ScaledSine,
            "sign_sin" => Self::SignSin,
            "none" => Self::Fixed(NamedFn::Zero),
            other => Self::Fixed(other.parse()?),
        })
    }
}
