//! Euler–Maruyama simulation of the parameterized equation and of the limit
//! equation, plus the integral functionals along the simulated paths.
//!
//! Two entry points share one step kernel: the `simulate_*ensemble`
//! functions keep every step of every path (small runs, debugging, exact
//! identities), while the `*_summaries` functions stream each path through
//! an [`Observation`] and keep only what the statistics need.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LimitModel, Model, ScalarFn};
use crate::noise::{brownian_increments, stream, Domain};
use crate::quad::{cumulative_simpson, hermite};
use crate::transform::TransformTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Time horizon `L`.
    pub horizon: f64,
    pub paths: usize,
    pub base_seed: u64,
    /// Share Wiener paths across the schedule.
    pub crn: bool,
    /// Paths leaving `[−x_max, x_max]` are flagged.
    pub x_max: f64,
    /// Fixed step, which must be `horizon / 2^k`. `None` applies the
    /// resolution rule `dt <= min(1e-3, b^-2)`.
    pub dt: Option<f64>,
    /// Accept a fixed `dt` coarser than the resolution rule.
    pub allow_coarse_dt: bool,
    /// Summaries are recorded every `horizon / 2^record_level`.
    pub record_level: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            paths: 10_000,
            base_seed: 20_170_922,
            crn: true,
            x_max: 8.0,
            dt: None,
            allow_coarse_dt: false,
            record_level: 6,
        }
    }
}

/// Largest step allowed by the resolution rule.
pub fn max_step(b: Option<f64>) -> f64 {
    match b {
        Some(b) => 1e-3_f64.min(1.0 / (b * b)),
        None => 1e-3,
    }
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(Error::InvalidParameter("path count must be >= 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon {} must be positive",
                self.horizon
            )));
        }
        if !(self.x_max > 0.0) {
            return Err(Error::InvalidParameter("x_max must be positive".into()));
        }
        Ok(())
    }

    /// Dyadic level `k` with `dt = horizon / 2^k`.
    pub fn step_level(&self, b: Option<f64>) -> Result<u32> {
        let limit = max_step(b);
        match self.dt {
            Some(dt) => {
                let ratio = (self.horizon / dt).log2();
                if !(dt > 0.0) || (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 0.0 {
                    return Err(Error::Config(format!(
                        "dt = {dt} is not horizon / 2^k for horizon {}",
                        self.horizon
                    )));
                }
                if dt > limit * (1.0 + 1e-12) && !self.allow_coarse_dt {
                    return Err(Error::StepRefused(format!(
                        "dt = {dt} exceeds min(1e-3, b^-2) = {limit:e}; the drift oscillates \
                         on a scale 1/b that this step cannot resolve (set allow_coarse_dt to override)"
                    )));
                }
                Ok(ratio.round() as u32)
            }
            None => {
                let mut k = (self.horizon / limit).log2().ceil().max(0.0) as u32;
                while self.horizon / (1u64 << k) as f64 > limit {
                    k += 1;
                }
                Ok(k)
            }
        }
    }

    fn domain(&self, b: Option<f64>) -> Domain {
        match b {
            Some(b) if !self.crn => Domain::PerParameter(b.to_bits()),
            _ => Domain::Primary,
        }
    }
}

/// Drift and diffusion of a scalar equation.
trait Dynamics: Sync {
    fn drift(&self, t: f64, x: f64) -> f64;
    fn diffusion(&self, x: f64) -> f64;
}

struct Primary<'a>(&'a Model);

impl Dynamics for Primary<'_> {
    #[inline]
    fn drift(&self, t: f64, x: f64) -> f64 {
        let a = (self.0.drift)(t, x);
        debug_assert!(
            a.abs() <= self.0.drift_bound * (1.0 + 1e-12) + 1e-12,
            "drift {a} exceeds its bound {} at (t, x) = ({t}, {x})",
            self.0.drift_bound
        );
        a
    }

    #[inline]
    fn diffusion(&self, _x: f64) -> f64 {
        1.0
    }
}

struct Limit<'a>(&'a LimitModel);

impl Dynamics for Limit<'_> {
    #[inline]
    fn drift(&self, _t: f64, x: f64) -> f64 {
        (self.0.a0)(x)
    }

    #[inline]
    fn diffusion(&self, x: f64) -> f64 {
        (self.0.sigma0)(x)
    }
}

trait StepObserver {
    /// Called once per step with the state before and after the step.
    fn step(&mut self, k: usize, x: f64, sigma: f64, dw: f64, next: f64);
}

/// Paths advanced in lockstep. Each path is one long dependency chain
/// through the drift, so interleaving independent paths hides latency.
const LANES: usize = 8;

fn run_batch<D: Dynamics, O: StepObserver>(
    dynamics: &D,
    x0: f64,
    dws: &[Vec<f64>],
    dt: f64,
    obs: &mut [O],
) {
    let lanes = dws.len();
    debug_assert!(lanes <= LANES && obs.len() == lanes);
    let n = dws[0].len();
    let mut x = [x0; LANES];
    for k in 0..n {
        let t = k as f64 * dt;
        for l in 0..lanes {
            let xl = x[l];
            let d = dws[l][k];
            let a = dynamics.drift(t, xl);
            let s = dynamics.diffusion(xl);
            let next = xl + a * dt + s * d;
            obs[l].step(k, xl, s, d, next);
            x[l] = next;
        }
    }
}

/// Batches of path indices, each at most `LANES` long.
fn batches(paths: usize) -> Vec<std::ops::Range<usize>> {
    (0..paths)
        .step_by(LANES)
        .map(|start| start..(start + LANES).min(paths))
        .collect()
}

fn fill_noise(
    sim: &SimConfig,
    domain: Domain,
    level: u32,
    range: std::ops::Range<usize>,
    w: &mut Vec<f64>,
    dws: &mut Vec<Vec<f64>>,
) {
    dws.resize_with(range.len(), Vec::new);
    dws.truncate(range.len());
    for (dw, j) in dws.iter_mut().zip(range) {
        let mut rng = stream(sim.base_seed, domain, j as u64);
        brownian_increments(&mut rng, sim.horizon, level, w, dw);
    }
}

/// One stored path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    /// States at `t_k = k dt`, `k = 0..=n`.
    pub x: Vec<f64>,
    /// Wiener increments, length `n`.
    pub dw: Vec<f64>,
    pub exited: bool,
}

/// Fully stored ensemble on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub b: Option<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub base_seed: u64,
    pub x_max: f64,
    pub paths: Vec<PathRecord>,
}

impl PathEnsemble {
    pub fn n_steps(&self) -> usize {
        self.paths.first().map_or(0, |p| p.dw.len())
    }

    pub fn exit_count(&self) -> usize {
        self.paths.iter().filter(|p| p.exited).count()
    }

    pub fn exit_flags(&self) -> Vec<bool> {
        self.paths.iter().map(|p| p.exited).collect()
    }

    /// CSV dump with columns `path_id,t,xi,dW` (the last row of each path has
    /// an empty increment).
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "path_id,t,xi,dW")?;
        for (j, p) in self.paths.iter().enumerate() {
            for (k, x) in p.x.iter().enumerate() {
                let t = k as f64 * self.dt;
                match p.dw.get(k) {
                    Some(d) => writeln!(w, "{j},{t},{x},{d}")?,
                    None => writeln!(w, "{j},{t},{x},")?,
                }
            }
        }
        Ok(())
    }
}

struct Store<'a> {
    x: &'a mut Vec<f64>,
    x_max: f64,
    exited: bool,
}

impl StepObserver for Store<'_> {
    #[inline]
    fn step(&mut self, _k: usize, _x: f64, _s: f64, _dw: f64, next: f64) {
        self.exited |= next.abs() > self.x_max;
        self.x.push(next);
    }
}

fn full_ensemble<D: Dynamics>(
    dynamics: &D,
    x0: f64,
    b: Option<f64>,
    sim: &SimConfig,
    domain: Domain,
) -> Result<PathEnsemble> {
    sim.validate()?;
    let level = sim.step_level(b)?;
    let dt = sim.horizon / (1u64 << level) as f64;
    let groups: Vec<Vec<PathRecord>> = batches(sim.paths)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(w, dws), range| {
                fill_noise(sim, domain, level, range, w, dws);
                let mut xs: Vec<Vec<f64>> = dws
                    .iter()
                    .map(|dw| {
                        let mut x = Vec::with_capacity(dw.len() + 1);
                        x.push(x0);
                        x
                    })
                    .collect();
                let mut stores: Vec<Store> = xs
                    .iter_mut()
                    .map(|x| Store {
                        x,
                        x_max: sim.x_max,
                        exited: x0.abs() > sim.x_max,
                    })
                    .collect();
                run_batch(dynamics, x0, dws, dt, &mut stores);
                let exited: Vec<bool> = stores.iter().map(|s| s.exited).collect();
                xs.into_iter()
                    .zip(dws.iter())
                    .zip(exited)
                    .map(|((x, dw), exited)| PathRecord {
                        x,
                        dw: dw.clone(),
                        exited,
                    })
                    .collect()
            },
        )
        .collect();
    let paths = groups.into_iter().flatten().collect();
    Ok(PathEnsemble {
        b,
        dt,
        horizon: sim.horizon,
        base_seed: sim.base_seed,
        x_max: sim.x_max,
        paths,
    })
}

/// Euler–Maruyama ensemble of `dξ = a_T(t, ξ) dt + dW`, `ξ(0) = x0`.
pub fn simulate_ensemble(model: &Model, sim: &SimConfig) -> Result<PathEnsemble> {
    full_ensemble(&Primary(model), model.x0, Some(model.b), sim, sim.domain(Some(model.b)))
}

/// Euler–Maruyama ensemble of `dζ = a0(ζ) dt + σ0(ζ) dŴ`, `ζ(0) = y0`, on a
/// noise stream independent of every primary ensemble.
pub fn simulate_limit(limit: &LimitModel, sim: &SimConfig) -> Result<PathEnsemble> {
    full_ensemble(&Limit(limit), limit.y0, None, sim, Domain::Limit)
}

/// Per-path time series of the functionals.
#[derive(Debug, Clone)]
pub struct FunctionalSample {
    pub dt: f64,
    /// `∫₀ᵗ g(ξ) ds`, left-endpoint sums.
    pub beta1: Vec<Vec<f64>>,
    /// `∫₀ᵗ g(ξ) dW`, Itô sums.
    pub beta2: Vec<Vec<f64>>,
    /// `F(ξ(t)) + β2(t)`.
    pub ito: Vec<Vec<f64>>,
    zeta: Option<Vec<Option<Vec<f64>>>>,
}

impl FunctionalSample {
    /// `G(ξ(t))` per path; `None` for paths that left the table window.
    pub fn zeta(&self) -> Result<&[Option<Vec<f64>>]> {
        self.zeta
            .as_deref()
            .ok_or_else(|| Error::Config("no transform table was supplied for ζ".into()))
    }
}

/// Integrate `g` and `F` of `model` along every stored path. With a table,
/// also maps paths through `G`.
pub fn compute_functionals(
    ens: &PathEnsemble,
    model: &Model,
    table: Option<&TransformTable>,
) -> Result<FunctionalSample> {
    let g = &model.integrand_g;
    let f = &model.terminal_f;
    let dt = ens.dt;
    let mut beta1 = Vec::with_capacity(ens.paths.len());
    let mut beta2 = Vec::with_capacity(ens.paths.len());
    let mut ito = Vec::with_capacity(ens.paths.len());
    for p in &ens.paths {
        let n = p.dw.len();
        let mut b1 = Vec::with_capacity(n + 1);
        let mut b2 = Vec::with_capacity(n + 1);
        let (mut s1, mut s2) = (0.0, 0.0);
        b1.push(0.0);
        b2.push(0.0);
        for k in 0..n {
            let gx = g(p.x[k]);
            s1 += gx * dt;
            s2 += gx * p.dw[k];
            b1.push(s1);
            b2.push(s2);
        }
        ito.push(p.x.iter().zip(&b2).map(|(x, s)| f(*x) + s).collect());
        beta1.push(b1);
        beta2.push(b2);
    }
    let zeta = match table {
        None => None,
        Some(t) => Some(
            ens.paths
                .iter()
                .map(|p| {
                    if p.exited {
                        return Ok(None);
                    }
                    p.x.iter()
                        .map(|x| t.g_at(*x))
                        .collect::<Result<Vec<_>>>()
                        .map(Some)
                })
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    Ok(FunctionalSample {
        dt,
        beta1,
        beta2,
        ito,
        zeta,
    })
}

/// Tabulated antiderivative `A(x) = ∫_{origin}^{x} g`.
#[derive(Debug, Clone)]
pub struct Antiderivative {
    lo: f64,
    h: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl Antiderivative {
    pub fn new(g: &ScalarFn, origin: f64, half_width: f64, h: f64) -> Self {
        let n = (half_width / h).ceil().max(1.0) as usize;
        let xs: Vec<f64> = (0..=2 * n).map(|j| origin + (j as f64 - n as f64) * h).collect();
        let slopes: Vec<f64> = xs.iter().map(|x| g(*x)).collect();
        let values = cumulative_simpson(&slopes, h, n);
        Self {
            lo: xs[0],
            h,
            values,
            slopes,
        }
    }

    pub fn at(&self, x: f64) -> Result<f64> {
        let hi = self.lo + self.h * (self.values.len() - 1) as f64;
        if !(x >= self.lo && x <= hi) {
            return Err(Error::OutOfRange { x, lo: self.lo, hi });
        }
        let pos = (x - self.lo) / self.h;
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let s = (pos - i as f64).clamp(0.0, 1.0);
        Ok(hermite(
            self.values[i],
            self.values[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
            self.h,
            s,
        ))
    }
}

const ANTIDERIVATIVE_STEP: f64 = 1e-3;

/// Per-path `2(∫_{y0}^{ζ(t)} g0 − ∫₀ᵗ g0(ζ) σ0(ζ) dŴ)` on a stored limit ensemble.
pub fn theorem4_limit_functional(ens: &PathEnsemble, limit: &LimitModel) -> Result<Vec<Vec<f64>>> {
    let anti = Antiderivative::new(&limit.g0, limit.y0, ens.x_max + 1.0, ANTIDERIVATIVE_STEP);
    ens.paths
        .iter()
        .map(|p| {
            let mut out = Vec::with_capacity(p.x.len());
            let mut stoch = 0.0;
            out.push(2.0 * (anti.at(p.x[0])? - stoch));
            for k in 0..p.dw.len() {
                let z = p.x[k];
                stoch += (limit.g0)(z) * (limit.sigma0)(z) * p.dw[k];
                out.push(2.0 * (anti.at(p.x[k + 1])? - stoch));
            }
            Ok(out)
        })
        .collect()
}

/// What a streamed path keeps.
#[derive(Clone, Default)]
pub struct Observation {
    /// `g` integrated along the path: `Σ g dt`, `Σ g σ dW`, `Σ g² σ² dt`.
    pub integrand: Option<ScalarFn>,
    /// State-space intervals whose occupation time is accumulated.
    pub occupation: Vec<(f64, f64)>,
}

/// Streamed statistics of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    /// Values at the record times `r · record_dt`.
    pub state: Vec<f64>,
    pub wiener: Vec<f64>,
    pub time_integral: Vec<f64>,
    pub stoch_integral: Vec<f64>,
    pub quadratic_integral: Vec<f64>,
    pub state_min: f64,
    pub state_max: f64,
    /// `max_k |Σ_{i<k} g dt|` over every step.
    pub time_integral_sup: f64,
    pub occupation: Vec<f64>,
    pub exited: bool,
}

struct Summarizer<'a> {
    obs: &'a Observation,
    dt: f64,
    stride: usize,
    x_max: f64,
    w: f64,
    s1: f64,
    s2: f64,
    s3: f64,
    out: PathSummary,
}

impl StepObserver for Summarizer<'_> {
    #[inline]
    fn step(&mut self, k: usize, x: f64, sigma: f64, dw: f64, next: f64) {
        if let Some(g) = &self.obs.integrand {
            let gx = g(x);
            self.s1 += gx * self.dt;
            self.s2 += gx * sigma * dw;
            self.s3 += gx * gx * sigma * sigma * self.dt;
            self.out.time_integral_sup = self.out.time_integral_sup.max(self.s1.abs());
        }
        for (acc, (lo, hi)) in self.out.occupation.iter_mut().zip(&self.obs.occupation) {
            if x >= *lo && x <= *hi {
                *acc += self.dt;
            }
        }
        self.w += dw;
        self.out.state_min = self.out.state_min.min(next);
        self.out.state_max = self.out.state_max.max(next);
        self.out.exited |= next.abs() > self.x_max;
        if (k + 1).is_multiple_of(self.stride) {
            self.out.state.push(next);
            self.out.wiener.push(self.w);
            self.out.time_integral.push(self.s1);
            self.out.stoch_integral.push(self.s2);
            self.out.quadratic_integral.push(self.s3);
        }
    }
}

/// Streamed ensemble: one [`PathSummary`] per path.
#[derive(Debug, Clone)]
pub struct SummaryEnsemble {
    pub b: Option<f64>,
    pub dt: f64,
    pub horizon: f64,
    pub record_dt: f64,
    pub paths: Vec<PathSummary>,
}

impl SummaryEnsemble {
    pub fn n_records(&self) -> usize {
        self.paths.first().map_or(0, |p| p.state.len())
    }

    /// Record index of time `t`, which must lie on the record grid.
    pub fn record_index(&self, t: f64) -> Result<usize> {
        let r = t / self.record_dt;
        let k = r.round();
        if (r - k).abs() > 1e-9 || k < 0.0 || k as usize >= self.n_records() {
            return Err(Error::Config(format!(
                "time {t} is not on the record grid (step {})",
                self.record_dt
            )));
        }
        Ok(k as usize)
    }

    pub fn exit_count(&self) -> usize {
        self.paths.iter().filter(|p| p.exited).count()
    }
}

fn summary_ensemble<D: Dynamics>(
    dynamics: &D,
    x0: f64,
    b: Option<f64>,
    sim: &SimConfig,
    domain: Domain,
    obs: &Observation,
) -> Result<SummaryEnsemble> {
    sim.validate()?;
    let level = sim.step_level(b)?;
    let record_level = sim.record_level.min(level);
    let stride = 1usize << (level - record_level);
    let dt = sim.horizon / (1u64 << level) as f64;
    let n_records = (1usize << record_level) + 1;
    let groups: Vec<Vec<PathSummary>> = batches(sim.paths)
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(w, dws), range| {
                fill_noise(sim, domain, level, range, w, dws);
                let mut lanes: Vec<Summarizer> = dws
                    .iter()
                    .map(|_| {
                        let mut out = PathSummary {
                            state: Vec::with_capacity(n_records),
                            wiener: Vec::with_capacity(n_records),
                            time_integral: Vec::with_capacity(n_records),
                            stoch_integral: Vec::with_capacity(n_records),
                            quadratic_integral: Vec::with_capacity(n_records),
                            state_min: x0,
                            state_max: x0,
                            time_integral_sup: 0.0,
                            occupation: vec![0.0; obs.occupation.len()],
                            exited: x0.abs() > sim.x_max,
                        };
                        out.state.push(x0);
                        out.wiener.push(0.0);
                        out.time_integral.push(0.0);
                        out.stoch_integral.push(0.0);
                        out.quadratic_integral.push(0.0);
                        Summarizer {
                            obs,
                            dt,
                            stride,
                            x_max: sim.x_max,
                            w: 0.0,
                            s1: 0.0,
                            s2: 0.0,
                            s3: 0.0,
                            out,
                        }
                    })
                    .collect();
                run_batch(dynamics, x0, dws, dt, &mut lanes);
                lanes.into_iter().map(|s| s.out).collect()
            },
        )
        .collect();
    let paths = groups.into_iter().flatten().collect();
    Ok(SummaryEnsemble {
        b,
        dt,
        horizon: sim.horizon,
        record_dt: sim.horizon / (1u64 << record_level) as f64,
        paths,
    })
}

pub fn simulate_summaries(model: &Model, sim: &SimConfig, obs: &Observation) -> Result<SummaryEnsemble> {
    summary_ensemble(
        &Primary(model),
        model.x0,
        Some(model.b),
        sim,
        sim.domain(Some(model.b)),
        obs,
    )
}

pub fn simulate_limit_summaries(
    limit: &LimitModel,
    sim: &SimConfig,
    obs: &Observation,
) -> Result<SummaryEnsemble> {
    summary_ensemble(&Limit(limit), limit.y0, None, sim, Domain::Limit, obs)
}
