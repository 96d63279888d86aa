//! Distributional statistics and the across-schedule convergence checks.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LimitModel, ModelFamily, ParamSchedule};
use crate::noise::{stream, Domain};
use crate::simulate::{
    simulate_limit_summaries, simulate_summaries, Antiderivative, Observation, SimConfig,
    SummaryEnsemble,
};
use crate::transform::{build_f, TransformOptions, TransformTable};

/// Every report carries this caveat: marginals and sups are a proxy for
/// convergence of laws on path space.
pub const PROXY_CAVEAT: &str = "weak convergence is assessed through one-time marginals and a sup \
functional; a discrepancy visible only in joint path behaviour can go undetected";

/// Sorted scalar sample at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSample {
    pub t: f64,
    values: Vec<f64>,
}

impl MarginalSample {
    pub fn new(t: f64, mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "marginal sample needs at least 2 values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("marginal sample contains non-finite values".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { t, values })
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

/// Asymptotic Kolmogorov coefficient `c(α) = sqrt(−ln(α/2) / 2)`.
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Critical value `c(α) sqrt((n + m) / (n m))`.
pub fn ks_critical(alpha: f64, n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    ks_coefficient(alpha) * ((n + m) / (n * m)).sqrt()
}

/// Two-sample KS distance of two sorted samples.
pub fn ks_sorted(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// KS distance of two unsorted samples.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    ks_sorted(&a, &b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub distance: f64,
    pub critical: f64,
}

pub fn ks_two_sample(a: &MarginalSample, b: &MarginalSample, alpha: f64) -> Result<KsResult> {
    Ok(KsResult {
        distance: ks_sorted(&a.values, &b.values)?,
        critical: ks_critical(alpha, a.len(), b.len()),
    })
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample quantile by linear interpolation between order statistics.
pub fn quantile(v: &[f64], p: f64) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    Ok(if i + 1 < s.len() {
        s[i] + frac * (s[i + 1] - s[i])
    } else {
        s[i]
    })
}

pub fn median(v: &[f64]) -> Result<f64> {
    quantile(v, 0.5)
}

/// Bootstrap standard error of `stat` over `reps` resamples.
pub fn bootstrap_se(v: &[f64], reps: usize, seed: u64, stat: impl Fn(&[f64]) -> f64) -> Result<f64> {
    if v.len() < 2 {
        return Err(Error::EmptySample);
    }
    if reps < 2 {
        return Err(Error::InvalidParameter("bootstrap needs at least 2 resamples".into()));
    }
    let mut rng = stream(seed, Domain::Bootstrap, v.len() as u64);
    let mut buf = vec![0.0; v.len()];
    let stats: Vec<f64> = (0..reps)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = v[rng.gen_range(0..v.len())];
            }
            stat(&buf)
        })
        .collect();
    let m = mean(&stats);
    let var = stats.iter().map(|s| (s - m) * (s - m)).sum::<f64>() / (reps - 1) as f64;
    Ok(var.sqrt())
}

/// Decay rule for a limit "as T → ∞" checked on a finite schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendRule {
    /// Required ratio final / first.
    pub factor: f64,
    /// Steps allowed to not strictly decrease.
    pub allowed_exceptions: usize,
    /// Values at or below this are treated as exact zeros: a sequence that
    /// is zero throughout has already converged.
    pub zero_floor: f64,
}

impl Default for TrendRule {
    fn default() -> Self {
        Self {
            factor: 0.1,
            allowed_exceptions: 1,
            zero_floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendVerdict {
    pub decreasing_steps: usize,
    pub steps: usize,
    /// `final / first`, `None` when the first value is zero.
    pub ratio: Option<f64>,
    pub identically_zero: bool,
    pub pass: bool,
}

impl TrendRule {
    pub fn evaluate(&self, values: &[f64]) -> TrendVerdict {
        let steps = values.len().saturating_sub(1);
        let identically_zero = values.iter().all(|v| v.abs() <= self.zero_floor);
        let decreasing_steps = values.windows(2).filter(|w| w[1] < w[0]).count();
        let ratio = match (values.first(), values.last()) {
            (Some(f), Some(l)) if *f != 0.0 => Some(l / f),
            _ => None,
        };
        let pass = identically_zero
            || (steps >= 1
                && decreasing_steps + self.allowed_exceptions >= steps
                && ratio.is_some_and(|r| r < self.factor));
        TrendVerdict {
            decreasing_steps,
            steps,
            ratio,
            identically_zero,
            pass,
        }
    }
}

/// Number of steps `v[k+1] <= v[k]`.
pub fn non_increasing_steps(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] <= w[0]).count()
}

/// The functional whose law is compared with its limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// `ζ_T = G_T(ξ_T)` against the limit diffusion.
    Zeta,
    /// `∫ g_T(ξ_T) ds` against `∫ g0(ζ) ds`.
    Beta1,
    /// `∫ g_T(ξ_T) ds` against `2(∫_{y0}^{ζ} g0 − ∫ g0 σ0 dŴ)`.
    Beta1Tilde,
    /// `∫ g_T(ξ_T) ds` against `2 b0 W`.
    Beta1Wiener,
    /// `∫ g_T(ξ_T) dW_T` against `∫ g0(ζ) σ0(ζ) dŴ`.
    Beta2,
    /// `F_T(ξ_T) + β⁽²⁾` against `F0(ζ) + ∫ g0 σ0 dŴ`.
    Ito,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Self::Zeta => "zeta",
            Self::Beta1 => "beta1",
            Self::Beta1Tilde => "beta1_tilde",
            Self::Beta1Wiener => "beta1_wiener",
            Self::Beta2 => "beta2",
            Self::Ito => "I",
        }
    }

    /// Quantity examined by theorem number 2..=7.
    pub fn for_theorem(n: u32) -> Result<Self> {
        Ok(match n {
            2 => Self::Zeta,
            3 => Self::Beta1,
            4 => Self::Beta1Tilde,
            5 => Self::Beta1Wiener,
            6 => Self::Beta2,
            7 => Self::Ito,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "no convergence check for theorem {n} (expected 2..=7)"
                )))
            }
        })
    }

    fn is_time_integral(self) -> bool {
        matches!(self, Self::Beta1 | Self::Beta1Tilde | Self::Beta1Wiener)
    }
}

impl std::str::FromStr for Quantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "zeta" => Self::Zeta,
            "beta1" => Self::Beta1,
            "beta1_tilde" => Self::Beta1Tilde,
            "beta1_wiener" => Self::Beta1Wiener,
            "beta2" => Self::Beta2,
            "I" | "ito" => Self::Ito,
            _ => return Err(Error::InvalidParameter(format!("unknown quantity '{s}'"))),
        })
    }
}

/// Statistics settings shared by the convergence checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub times: Vec<f64>,
    pub alpha: f64,
    /// Lower bound on the KS threshold, absorbing scheme bias.
    pub ks_floor: f64,
    /// Threshold on the final median sup when the limit is a point mass.
    pub quantile_threshold: f64,
    pub trend: TrendRule,
    /// KS verdict: `t = L` distances must not increase on at least this many
    /// steps, unless every distance is already below threshold.
    pub min_non_increasing: Option<usize>,
    pub bootstrap_reps: usize,
    /// Occupation intervals `[0, λ]`.
    pub lambdas: Vec<f64>,
    /// Lags for the fourth-moment increment ratio.
    pub lags: Vec<f64>,
    pub uniformity_factor: f64,
    pub fourth_moment_bound: f64,
    pub occupation_residual: f64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            times: vec![0.25, 0.5, 1.0],
            alpha: 0.01,
            ks_floor: 0.03,
            quantile_threshold: 0.05,
            trend: TrendRule::default(),
            min_non_increasing: None,
            bootstrap_reps: 500,
            lambdas: vec![0.4, 0.2, 0.1, 0.05],
            lags: vec![1.0 / 16.0, 1.0 / 64.0],
            uniformity_factor: 2.0,
            fourth_moment_bound: 6.0,
            occupation_residual: 0.3,
        }
    }
}

/// One ensemble of the schedule with its transform table.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub b: f64,
    pub table: TransformTable,
    pub ensemble: SummaryEnsemble,
}

/// Streamed ensembles over a whole schedule plus the independent limit
/// ensemble. One sweep serves every quantity and the moment suite.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub entries: Vec<SweepEntry>,
    pub limit: SummaryEnsemble,
    pub lambdas: Vec<f64>,
}

/// Simulate the schedule and the limit with integrands, terminals and
/// occupation intervals attached.
pub fn run_sweep(
    family: &ModelFamily,
    schedule: &ParamSchedule,
    limit: &LimitModel,
    sim: &SimConfig,
    transform: &TransformOptions,
    lambdas: &[f64],
) -> Result<Sweep> {
    let mut entries = Vec::with_capacity(schedule.len());
    for &b in schedule.values() {
        let model = family.at(b);
        let table = build_f(&model, &TransformOptions {
            x_max: sim.x_max,
            ..transform.clone()
        })?;
        let occupation = lambdas
            .iter()
            .map(|l| Ok((table.g_inverse(0.0)?, table.g_inverse(*l)?)))
            .collect::<Result<Vec<_>>>()?;
        let obs = Observation {
            integrand: Some(model.integrand_g.clone()),
            occupation,
        };
        let ensemble = simulate_summaries(&model, sim, &obs)?;
        entries.push(SweepEntry { b, table, ensemble });
    }
    let obs = Observation {
        integrand: Some(limit.g0.clone()),
        occupation: lambdas.iter().map(|l| (0.0, *l)).collect(),
    };
    let limit = simulate_limit_summaries(limit, sim, &obs)?;
    Ok(Sweep {
        entries,
        limit,
        lambdas: lambdas.to_vec(),
    })
}

/// Per-path values of `quantity` at record `r` on the primary ensemble;
/// exited paths are dropped.
fn primary_values(
    quantity: Quantity,
    entry: &SweepEntry,
    family: &ModelFamily,
    r: usize,
) -> Result<Vec<f64>> {
    let model = family.at(entry.b);
    entry
        .ensemble
        .paths
        .iter()
        .filter(|p| !p.exited)
        .map(|p| {
            Ok(match quantity {
                Quantity::Zeta => entry.table.g_at(p.state[r])?,
                Quantity::Beta1 | Quantity::Beta1Tilde | Quantity::Beta1Wiener => p.time_integral[r],
                Quantity::Beta2 => p.stoch_integral[r],
                Quantity::Ito => (model.terminal_f)(p.state[r]) + p.stoch_integral[r],
            })
        })
        .collect()
}

fn limit_values(
    quantity: Quantity,
    ens: &SummaryEnsemble,
    limit: &LimitModel,
    anti: Option<&Antiderivative>,
    r: usize,
) -> Result<Vec<f64>> {
    ens.paths
        .iter()
        .filter(|p| !p.exited)
        .map(|p| {
            Ok(match quantity {
                Quantity::Zeta => p.state[r],
                Quantity::Beta1 => p.time_integral[r],
                Quantity::Beta1Tilde => {
                    let a = anti.expect("antiderivative built for beta1_tilde");
                    2.0 * (a.at(p.state[r])? - p.stoch_integral[r])
                }
                Quantity::Beta1Wiener => {
                    let b0 = limit.b0.ok_or_else(|| {
                        Error::Config("beta1_wiener needs b0 in the limit model".into())
                    })?;
                    2.0 * b0 * p.wiener[r]
                }
                Quantity::Beta2 => p.stoch_integral[r],
                Quantity::Ito => (limit.f0)(p.state[r]) + p.stoch_integral[r],
            })
        })
        .collect()
}

/// Outcome of the hypothesis audit that precedes a convergence check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypotheses {
    Skipped,
    Checked { passed: bool, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    Ks,
    /// The limit is a point mass; the check tracks quantiles of the sup
    /// distance to it.
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsEntry {
    pub t_index: usize,
    pub b: f64,
    pub time: f64,
    pub ks: f64,
    pub critical: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupEntry {
    pub t_index: usize,
    pub b: f64,
    /// Median and 90% quantile over paths of `sup_t |X_T(t) − X_limit|`
    /// (quantile mode) or of `sup_t |X_T(t)|`.
    pub median: f64,
    pub q90: f64,
    /// Median of `sup_t |X(t)|` on the limit ensemble.
    pub limit_median: f64,
    pub exits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub quantity: Quantity,
    pub caveat: String,
    pub mode: CheckMode,
    pub notes: Vec<String>,
    pub alpha: f64,
    pub times: Vec<f64>,
    pub hypotheses: Hypotheses,
    pub ks: Vec<KsEntry>,
    pub sup: Vec<SupEntry>,
    pub trend: TrendVerdict,
    pub non_increasing_steps: usize,
    pub pass: bool,
    pub config_hash: Option<String>,
}

impl ConvergenceReport {
    /// KS distances at `time` ordered by schedule index.
    pub fn ks_series(&self, time: f64) -> Vec<f64> {
        self.ks
            .iter()
            .filter(|e| (e.time - time).abs() < 1e-12)
            .map(|e| e.ks)
            .collect()
    }

    pub fn sup_medians(&self) -> Vec<f64> {
        self.sup.iter().map(|e| e.median).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Evaluation(e.to_string()))
    }

    /// CSV with columns `quantity,T_index,b_T,time,ks,critical,pass`. In
    /// quantile mode `time` is `sup` and `ks` holds the median sup distance.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if let Some(h) = &self.config_hash {
            writeln!(w, "# config_sha256={h}")?;
        }
        writeln!(w, "# {}", self.caveat)?;
        writeln!(w, "quantity,T_index,b_T,time,ks,critical,pass")?;
        let name = self.quantity.name();
        match self.mode {
            CheckMode::Ks => {
                for e in &self.ks {
                    writeln!(
                        w,
                        "{name},{},{},{},{},{},{}",
                        e.t_index, e.b, e.time, e.ks, e.critical, e.pass
                    )?;
                }
            }
            CheckMode::Quantile => {
                for e in &self.sup {
                    writeln!(w, "{name},{},{},sup,{},,", e.t_index, e.b, e.median)?;
                }
            }
        }
        Ok(())
    }
}

fn check_hypotheses(h: &Hypotheses) -> Result<()> {
    match h {
        Hypotheses::Checked { passed: false, detail } => Err(Error::HypothesisFailed(format!(
            "hypothesis audit failed ({detail}); skip the audit explicitly to run anyway"
        ))),
        _ => Ok(()),
    }
}

/// Per-path `sup` over record times of `|X(t) − c(t)|`.
fn sup_distance(series: &[Vec<f64>], centre: &[f64]) -> Vec<f64> {
    series
        .iter()
        .map(|s| {
            s.iter()
                .zip(centre)
                .fold(0.0f64, |m, (x, c)| m.max((x - c).abs()))
        })
        .collect()
}

/// Compare the law of `quantity` on every schedule entry of `sweep` with
/// its limit.
pub fn evaluate_quantity(
    quantity: Quantity,
    sweep: &Sweep,
    family: &ModelFamily,
    limit: &LimitModel,
    cfg: &StatsConfig,
    hypotheses: Hypotheses,
) -> Result<ConvergenceReport> {
    check_hypotheses(&hypotheses)?;
    if sweep.entries.is_empty() {
        return Err(Error::Config("empty schedule".into()));
    }
    let x_window = sweep.entries[0].table.x_max() + 1.0;
    let anti = (quantity == Quantity::Beta1Tilde)
        .then(|| Antiderivative::new(&limit.g0, limit.y0, x_window, 1e-3));
    let lim = &sweep.limit;
    let n_records = lim.n_records();
    let mut notes = Vec::new();

    // Limit series on the record grid, per path.
    let limit_series: Vec<Vec<f64>> = {
        let per_record = (0..n_records)
            .map(|r| limit_values(quantity, lim, limit, anti.as_ref(), r))
            .collect::<Result<Vec<_>>>()?;
        transpose(&per_record)
    };
    let degenerate = (0..n_records).all(|r| {
        let col: Vec<f64> = limit_series.iter().map(|s| s[r]).collect();
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        hi - lo <= 1e-12 * (1.0 + hi.abs())
    });
    let centre: Vec<f64> = if degenerate {
        limit_series[0].clone()
    } else {
        vec![0.0; n_records]
    };
    let mode = if degenerate {
        notes.push(
            "limit is a point mass: KS is uninformative, switched to quantiles of the sup \
             distance to the limit"
                .into(),
        );
        CheckMode::Quantile
    } else {
        CheckMode::Ks
    };
    let limit_sup_median = median(&sup_distance(&limit_series, &vec![0.0; n_records]))?;

    let mut ks = Vec::new();
    let mut sup = Vec::new();
    for (ti, entry) in sweep.entries.iter().enumerate() {
        let ens = &entry.ensemble;
        if ens.n_records() != n_records {
            return Err(Error::Config("primary and limit record grids differ".into()));
        }
        let per_record = (0..n_records)
            .map(|r| primary_values(quantity, entry, family, r))
            .collect::<Result<Vec<_>>>()?;
        let series = transpose(&per_record);
        let sups: Vec<f64> = if quantity.is_time_integral() && degenerate && centre.iter().all(|c| *c == 0.0) {
            // exact step-level sup of |∫ g ds| is tracked during simulation
            ens.paths
                .iter()
                .filter(|p| !p.exited)
                .map(|p| p.time_integral_sup)
                .collect()
        } else {
            sup_distance(&series, &centre)
        };
        let exits = ens.exit_count();
        sup.push(SupEntry {
            t_index: ti,
            b: entry.b,
            median: median(&sups)?,
            q90: quantile(&sups, 0.9)?,
            limit_median: limit_sup_median,
            exits,
        });
        if mode == CheckMode::Ks {
            for &t in &cfg.times {
                let r = ens.record_index(t)?;
                let a = MarginalSample::new(t, per_record[r].clone())?;
                let b = MarginalSample::new(t, limit_series.iter().map(|s| s[r]).collect())?;
                let res = ks_two_sample(&a, &b, cfg.alpha)?;
                let threshold = res.critical.max(cfg.ks_floor);
                ks.push(KsEntry {
                    t_index: ti,
                    b: entry.b,
                    time: t,
                    ks: res.distance,
                    critical: res.critical,
                    threshold,
                    pass: res.distance < threshold,
                });
            }
        }
        if exits > 0 {
            notes.push(format!(
                "b_T = {}: {exits} paths left the transform window and were excluded",
                entry.b
            ));
        }
    }

    let k = sweep.entries.len();
    let (trend, non_inc, pass) = match mode {
        CheckMode::Ks => {
            let last_time = *cfg
                .times
                .iter()
                .max_by(|a, b| a.total_cmp(b))
                .ok_or_else(|| Error::Config("no comparison times".into()))?;
            let series = ks_series(&ks, last_time);
            let trend = cfg.trend.evaluate(&series);
            let non_inc = non_increasing_steps(&series);
            let final_ok = ks.iter().filter(|e| e.t_index == k - 1).all(|e| e.pass);
            let all_ok = ks.iter().all(|e| e.pass);
            let needed = cfg.min_non_increasing.unwrap_or(k.saturating_sub(3));
            (trend, non_inc, final_ok && (all_ok || non_inc >= needed))
        }
        CheckMode::Quantile => {
            let medians: Vec<f64> = sup.iter().map(|e| e.median).collect();
            let trend = cfg.trend.evaluate(&medians);
            let non_inc = non_increasing_steps(&medians);
            let last = medians[k - 1];
            let decreasing = trend.decreasing_steps + cfg.trend.allowed_exceptions >= trend.steps;
            (trend, non_inc, decreasing && last < cfg.quantile_threshold)
        }
    };
    Ok(ConvergenceReport {
        quantity,
        caveat: PROXY_CAVEAT.into(),
        mode,
        notes,
        alpha: cfg.alpha,
        times: cfg.times.clone(),
        hypotheses,
        ks,
        sup,
        trend,
        non_increasing_steps: non_inc,
        pass,
        config_hash: None,
    })
}

fn ks_series(ks: &[KsEntry], time: f64) -> Vec<f64> {
    ks.iter()
        .filter(|e| (e.time - time).abs() < 1e-12)
        .map(|e| e.ks)
        .collect()
}

fn transpose(per_record: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n_paths = per_record.first().map_or(0, Vec::len);
    (0..n_paths)
        .map(|j| per_record.iter().map(|col| col[j]).collect())
        .collect()
}

/// Simulate and evaluate one quantity.
#[allow(clippy::too_many_arguments)]
pub fn theorem_check(
    quantity: Quantity,
    family: &ModelFamily,
    schedule: &ParamSchedule,
    limit: &LimitModel,
    sim: &SimConfig,
    transform: &TransformOptions,
    cfg: &StatsConfig,
    hypotheses: Hypotheses,
) -> Result<ConvergenceReport> {
    check_hypotheses(&hypotheses)?;
    let sweep = run_sweep(family, schedule, limit, sim, transform, &[])?;
    evaluate_quantity(quantity, &sweep, family, limit, cfg, hypotheses)
}

/// `ζ` on the record grid for one ensemble, with the sup of `ζ²` over every
/// step and occupation times.
#[derive(Debug, Clone)]
pub struct ZetaPaths {
    pub b: Option<f64>,
    pub record_dt: f64,
    /// Per path, `ζ` at the record times.
    pub grid: Vec<Vec<f64>>,
    /// Per path, `sup_t ζ(t)²`.
    pub sup_sq: Vec<f64>,
    /// Per path, occupation time of each `[0, λ]`.
    pub occupation: Vec<Vec<f64>>,
}

impl ZetaPaths {
    /// From a primary sweep entry: `G` is increasing, so the sup of `ζ²`
    /// is attained at the running minimum or maximum of `ξ`.
    pub fn from_entry(entry: &SweepEntry) -> Result<Self> {
        let mut grid = Vec::new();
        let mut sup_sq = Vec::new();
        let mut occupation = Vec::new();
        for p in entry.ensemble.paths.iter().filter(|p| !p.exited) {
            grid.push(
                p.state
                    .iter()
                    .map(|x| entry.table.g_at(*x))
                    .collect::<Result<Vec<_>>>()?,
            );
            let lo = entry.table.g_at(p.state_min)?;
            let hi = entry.table.g_at(p.state_max)?;
            sup_sq.push((lo * lo).max(hi * hi));
            occupation.push(p.occupation.clone());
        }
        Ok(Self {
            b: Some(entry.b),
            record_dt: entry.ensemble.record_dt,
            grid,
            sup_sq,
            occupation,
        })
    }

    /// From a limit ensemble, where `ζ` is the state itself.
    pub fn from_limit(ens: &SummaryEnsemble) -> Self {
        let kept = ens.paths.iter().filter(|p| !p.exited);
        Self {
            b: None,
            record_dt: ens.record_dt,
            grid: kept.clone().map(|p| p.state.clone()).collect(),
            sup_sq: kept
                .clone()
                .map(|p| (p.state_min * p.state_min).max(p.state_max * p.state_max))
                .collect(),
            occupation: kept.map(|p| p.occupation.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourthMoment {
    pub lag: f64,
    /// Per-path mean over all pairs of `(Δζ)⁴ / lag²`, averaged over paths.
    pub pooled: Estimate,
    /// Largest single-pair estimate.
    pub max_pair: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub b: Option<f64>,
    pub sup_sq: Estimate,
    pub fourth: Vec<FourthMoment>,
    /// Mean occupation time of each `[0, λ]`.
    pub occupation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub entries: Vec<MomentEntry>,
    /// `max / min` of `E sup ζ²` across entries.
    pub sup_sq_spread: f64,
    pub uniform_pass: bool,
    pub fourth_max: f64,
    pub fourth_pass: bool,
    pub lambdas: Vec<f64>,
    /// `C` from a least-squares fit `occupation ≈ C λ` over all entries.
    pub occupation_constant: Option<f64>,
    /// `max |occupation − C λ| / (C λ)`.
    pub occupation_residual: Option<f64>,
    pub occupation_pass: Option<bool>,
    pub pass: bool,
}

fn lag_steps(lag: f64, record_dt: f64) -> Result<usize> {
    let s = lag / record_dt;
    if (s - s.round()).abs() > 1e-9 || s.round() < 1.0 {
        return Err(Error::Config(format!(
            "lag {lag} is not a multiple of the record step {record_dt}"
        )));
    }
    Ok(s.round() as usize)
}

/// Moment bounds across a schedule: uniformity of `E sup ζ²`, the
/// fourth-moment increment ratio, and linear occupation scaling.
pub fn moment_suite(inputs: &[ZetaPaths], lambdas: &[f64], cfg: &StatsConfig, seed: u64) -> Result<MomentSummary> {
    if inputs.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut entries = Vec::with_capacity(inputs.len());
    for z in inputs {
        let sup_sq = Estimate {
            value: mean(&z.sup_sq),
            se: bootstrap_se(&z.sup_sq, cfg.bootstrap_reps, seed, mean)?,
        };
        let mut fourth = Vec::new();
        for &lag in &cfg.lags {
            let s = lag_steps(lag, z.record_dt)?;
            let n_records = z.grid.first().map_or(0, Vec::len);
            if n_records <= s {
                return Err(Error::Config(format!("lag {lag} exceeds the horizon")));
            }
            let pairs = n_records - s;
            let mut per_pair = vec![0.0; pairs];
            let per_path: Vec<f64> = z
                .grid
                .iter()
                .map(|g| {
                    let mut acc = 0.0;
                    for (k, slot) in per_pair.iter_mut().enumerate() {
                        let d = g[k + s] - g[k];
                        let v = d * d * d * d / (lag * lag);
                        *slot += v;
                        acc += v;
                    }
                    acc / pairs as f64
                })
                .collect();
            let n = z.grid.len() as f64;
            let max_pair = per_pair.iter().fold(0.0f64, |m, v| m.max(v / n));
            fourth.push(FourthMoment {
                lag,
                pooled: Estimate {
                    value: mean(&per_path),
                    se: bootstrap_se(&per_path, cfg.bootstrap_reps, seed, mean)?,
                },
                max_pair,
            });
        }
        let occupation = (0..lambdas.len())
            .map(|i| mean(&z.occupation.iter().map(|o| o[i]).collect::<Vec<_>>()))
            .collect();
        entries.push(MomentEntry {
            b: z.b,
            sup_sq,
            fourth,
            occupation,
        });
    }
    let sups: Vec<f64> = entries.iter().map(|e| e.sup_sq.value).collect();
    let lo = sups.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sups.iter().cloned().fold(0.0, f64::max);
    let sup_sq_spread = if lo > 0.0 { hi / lo } else if hi == 0.0 { 1.0 } else { f64::INFINITY };
    let uniform_pass = sup_sq_spread < cfg.uniformity_factor;
    let fourth_max = entries
        .iter()
        .flat_map(|e| e.fourth.iter().map(|f| f.max_pair))
        .fold(0.0, f64::max);
    let fourth_pass = fourth_max <= cfg.fourth_moment_bound;

    let (occupation_constant, occupation_residual, occupation_pass) = if lambdas.is_empty() {
        (None, None, None)
    } else {
        let (mut num, mut den) = (0.0, 0.0);
        for e in &entries {
            for (l, o) in lambdas.iter().zip(&e.occupation) {
                num += l * o;
                den += l * l;
            }
        }
        let c = num / den;
        let resid = entries
            .iter()
            .flat_map(|e| lambdas.iter().zip(&e.occupation).map(|(l, o)| (o - c * l).abs() / (c * l)))
            .fold(0.0, f64::max);
        (Some(c), Some(resid), Some(resid < cfg.occupation_residual))
    };
    let pass = uniform_pass && fourth_pass && occupation_pass.unwrap_or(true);
    Ok(MomentSummary {
        entries,
        sup_sq_spread,
        uniform_pass,
        fourth_max,
        fourth_pass,
        lambdas: lambdas.to_vec(),
        occupation_constant,
        occupation_residual,
        occupation_pass,
        pass,
    })
}

impl MomentSummary {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Evaluation(e.to_string()))
    }

    /// CSV with columns `statistic,T_index,b_T,value,se`.
    pub fn write_csv<W: Write>(&self, mut w: W, config_hash: Option<&str>) -> Result<()> {
        if let Some(h) = config_hash {
            writeln!(w, "# config_sha256={h}")?;
        }
        writeln!(w, "statistic,T_index,b_T,value,se")?;
        for (i, e) in self.entries.iter().enumerate() {
            let b = e.b.map_or("limit".to_string(), |b| b.to_string());
            writeln!(w, "sup_zeta_sq,{i},{b},{},{}", e.sup_sq.value, e.sup_sq.se)?;
            for f in &e.fourth {
                writeln!(w, "fourth_ratio_lag_{},{i},{b},{},{}", f.lag, f.pooled.value, f.pooled.se)?;
                writeln!(w, "fourth_ratio_max_pair_lag_{},{i},{b},{},", f.lag, f.max_pair)?;
            }
            for (l, o) in self.lambdas.iter().zip(&e.occupation) {
                writeln!(w, "occupation_{l},{i},{b},{o},")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{example1_model, synthetic_model, SyntheticKind};

    #[test]
    fn ks_examples() {
        assert_eq!(ks_distance(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(ks_distance(&[0.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(ks_distance(&[1.0, 2.0], &[1.5, 2.5]).unwrap(), 0.5);
        assert!(matches!(ks_distance(&[], &[1.0]), Err(Error::EmptySample)));
    }

    #[test]
    fn ks_ties_across_samples() {
        assert_eq!(ks_distance(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn critical_value_at_one_percent() {
        assert!((ks_coefficient(0.01) - 1.628).abs() < 1e-3);
        assert!((ks_critical(0.01, 10_000, 10_000) - 0.0230).abs() < 1e-4);
    }

    #[test]
    fn marginal_sample_rejects_tiny_and_sorts() {
        assert!(MarginalSample::new(1.0, vec![0.0]).is_err());
        let s = MarginalSample::new(1.0, vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn trend_rule() {
        let r = TrendRule::default();
        assert!(r.evaluate(&[1.0, 0.5, 0.3, 0.2, 0.05]).pass);
        assert!(r.evaluate(&[1.0, 0.5, 0.6, 0.2, 0.05]).pass);
        assert!(!r.evaluate(&[1.0, 0.5, 0.6, 0.7, 0.05]).pass);
        assert!(!r.evaluate(&[1.0, 0.9, 0.8, 0.7, 0.6]).pass);
        assert!(r.evaluate(&[0.0; 5]).pass);
        assert!(!r.evaluate(&[0.1, 0.2, 0.4]).pass);
    }

    #[test]
    fn quantiles() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(median(&v).unwrap(), 2.5);
        assert_eq!(quantile(&v, 1.0).unwrap(), 4.0);
        assert_eq!(quantile(&v, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn bootstrap_se_of_mean_is_close_to_textbook() {
        let mut rng = stream(3, Domain::Primary, 0);
        let v: Vec<f64> = (0..2000).map(|_| rng.gen::<f64>()).collect();
        let se = bootstrap_se(&v, 500, 9, mean).unwrap();
        let textbook = (1.0 / 12.0f64).sqrt() / (2000.0f64).sqrt();
        assert!((se / textbook - 1.0).abs() < 0.15, "{se} vs {textbook}");
    }

    fn small_sim(paths: usize) -> SimConfig {
        SimConfig {
            paths,
            ..Default::default()
        }
    }

    #[test]
    fn identity_case_passes_at_every_t() {
        // ξ already solves the limit equation when the drift vanishes
        let fam = synthetic_model(SyntheticKind::ZeroDrift)
            .with_integrand(std::sync::Arc::new(|_| crate::model::scalar_fn(f64::tanh)))
            .with_terminal(std::sync::Arc::new(|_| crate::model::scalar_fn(f64::sin)));
        let limit = LimitModel::wiener(0.0)
            .with_g0(crate::model::scalar_fn(f64::tanh))
            .with_f0(crate::model::scalar_fn(f64::sin));
        let schedule = ParamSchedule::dyadic(3, 5).unwrap();
        let report = theorem_check(
            Quantity::Ito,
            &fam,
            &schedule,
            &limit,
            &small_sim(2000),
            &TransformOptions::default(),
            &StatsConfig::default(),
            Hypotheses::Skipped,
        )
        .unwrap();
        assert_eq!(report.mode, CheckMode::Ks);
        assert!(report.ks.iter().all(|e| e.ks < e.critical), "{:?}", report.ks);
        assert!(report.pass);
    }

    #[test]
    fn failed_hypotheses_refuse() {
        let (fam, limit) = example1_model(0.5).unwrap();
        let r = theorem_check(
            Quantity::Zeta,
            &fam,
            &ParamSchedule::dyadic(3, 4).unwrap(),
            &limit,
            &small_sim(10),
            &TransformOptions::default(),
            &StatsConfig::default(),
            Hypotheses::Checked {
                passed: false,
                detail: "A1".into(),
            },
        );
        assert!(matches!(r, Err(Error::HypothesisFailed(_))));
    }

    #[test]
    fn point_mass_limit_switches_to_quantiles() {
        let (fam, limit) = crate::model::example2_model(0.5).unwrap();
        let report = theorem_check(
            Quantity::Beta1,
            &fam,
            &ParamSchedule::dyadic(3, 5).unwrap(),
            &limit,
            &small_sim(200),
            &TransformOptions::default(),
            &StatsConfig::default(),
            Hypotheses::Skipped,
        )
        .unwrap();
        assert_eq!(report.mode, CheckMode::Quantile);
        assert!(report.ks.is_empty());
        assert_eq!(report.sup.len(), 3);
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.contains("quantity,T_index,b_T,time,ks,critical,pass"));
        assert!(text.contains("beta1,0,8,sup,"));
    }

    #[test]
    fn brownian_moments() {
        let fam = synthetic_model(SyntheticKind::ZeroDrift);
        let limit = LimitModel::wiener(0.0);
        let sim = small_sim(4000);
        let sweep = run_sweep(
            &fam,
            &ParamSchedule::new(vec![2.0]).unwrap(),
            &limit,
            &sim,
            &TransformOptions::default(),
            &[0.4, 0.2, 0.1, 0.05],
        )
        .unwrap();
        let z = ZetaPaths::from_entry(&sweep.entries[0]).unwrap();
        let cfg = StatsConfig::default();
        let m = moment_suite(std::slice::from_ref(&z), &sweep.lambdas, &cfg, 1).unwrap();
        for f in &m.entries[0].fourth {
            assert!((f.pooled.value - 3.0).abs() < 3.0 * f.pooled.se, "{f:?}");
        }
        // E sup_{t<=1} W² by direct Monte Carlo on the same paths' record grid
        // is a lower bound; the step-level sup is at most slightly larger.
        let grid_sup: Vec<f64> = z
            .grid
            .iter()
            .map(|g| g.iter().fold(0.0f64, |m, v| m.max(v * v)))
            .collect();
        assert!(m.entries[0].sup_sq.value >= mean(&grid_sup));
        assert!(m.entries[0].sup_sq.value < mean(&grid_sup) * 1.1);
        assert!(m.pass, "{m:?}");
    }

    #[test]
    fn frozen_limit_has_zero_moments() {
        let limit = LimitModel {
            sigma0: crate::model::scalar_fn(|_| 0.0),
            ..LimitModel::wiener(0.0)
        };
        let ens = simulate_limit_summaries(&limit, &small_sim(50), &Observation {
            integrand: None,
            occupation: vec![(0.0, 0.1)],
        })
        .unwrap();
        let z = ZetaPaths::from_limit(&ens);
        let cfg = StatsConfig {
            lambdas: vec![],
            ..Default::default()
        };
        let m = moment_suite(&[z], &[], &cfg, 1).unwrap();
        assert_eq!(m.entries[0].sup_sq.value, 0.0);
        assert!(m.entries[0].fourth.iter().all(|f| f.pooled.value == 0.0 && f.max_pair == 0.0));
    }
}
