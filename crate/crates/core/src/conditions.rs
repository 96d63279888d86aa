//! Numerical audit of the structural conditions on a coefficient family:
//! the drift-gap integral, the transform inequalities, the growth bound,
//! occupation control, and the decay functionals used by the limit theorems.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Indexed, LimitModel, Model, ModelFamily, ParamSchedule, ScalarFn};
use crate::quad::{adaptive_simpson, cumulative_simpson};
use crate::stats::{TrendRule, TrendVerdict};
use crate::transform::{build_f, default_spacing, TransformOptions, TransformTable};

/// Which `q_T` an (A3)-type decay check examines.
#[derive(Clone)]
pub enum QFamily {
    /// `G′ â + ½ G″ − a0(G)`.
    Theorem2Drift,
    /// `G′² − σ0²(G)`.
    Theorem2Diffusion,
    /// `g_T − g0(G)`.
    Theorem3,
    /// `(g_T − g0(G) G′)²`.
    Theorem6,
    /// `â_T`.
    HomogeneousDrift,
    Custom { name: String, q: Indexed<ScalarFn> },
}

impl std::fmt::Debug for QFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl QFamily {
    pub fn name(&self) -> String {
        match self {
            Self::Theorem2Drift => "theorem2_drift".into(),
            Self::Theorem2Diffusion => "theorem2_diffusion".into(),
            Self::Theorem3 => "theorem3".into(),
            Self::Theorem6 => "theorem6".into(),
            Self::HomogeneousDrift => "homogeneous_drift".into(),
            Self::Custom { name, .. } => name.clone(),
        }
    }

    /// `q_T` sampled on the table grid.
    pub fn sample(&self, table: &TransformTable, model: &Model, limit: &LimitModel) -> Vec<f64> {
        let n = table.len();
        match self {
            Self::Theorem2Drift => {
                let g2 = table.g_second_derivative();
                (0..n)
                    .map(|i| table.g_prime[i] * table.hat_drift[i] + 0.5 * g2[i] - (limit.a0)(table.g[i]))
                    .collect()
            }
            Self::Theorem2Diffusion => (0..n)
                .map(|i| {
                    let s = (limit.sigma0)(table.g[i]);
                    table.g_prime[i] * table.g_prime[i] - s * s
                })
                .collect(),
            Self::Theorem3 => (0..n)
                .map(|i| (model.integrand_g)(table.x[i]) - (limit.g0)(table.g[i]))
                .collect(),
            Self::Theorem6 => (0..n)
                .map(|i| {
                    let d = (model.integrand_g)(table.x[i]) - (limit.g0)(table.g[i]) * table.g_prime[i];
                    d * d
                })
                .collect(),
            Self::HomogeneousDrift => table.hat_drift.clone(),
            Self::Custom { q, .. } => {
                let q = q(table.b);
                table.sample(&*q)
            }
        }
    }
}

/// A finite union of intervals in the range of `G`.
pub type BorelSet = Vec<(f64, f64)>;

#[derive(Debug, Clone)]
pub struct ConditionConfig {
    /// Window radius `N` for the sup norms.
    pub window: f64,
    /// Time horizon `L`.
    pub horizon: f64,
    /// Uniform time points for (A1), supplemented by `L 2^-j`.
    pub t_points: usize,
    /// Inner-sup window for (A0) when the model has no closed-form envelope.
    pub a0_window: Option<f64>,
    pub a0_tol: f64,
    pub b_sets: Vec<BorelSet>,
    /// `ψ(λ) = C₁ λ`; fitted when absent.
    pub psi_c1: Option<f64>,
    /// Growth exponent `m` of the occupation bound.
    pub m: f64,
    /// Growth bound `|G(x)| >= C |x|^α`.
    pub growth_alpha: f64,
    pub growth_c: f64,
    /// Constant of (A1); fitted as the largest per-T minimum when absent.
    pub a1_c: Option<f64>,
    pub trend: TrendRule,
    /// Final-value threshold for decay checks.
    pub threshold: f64,
    pub transform: TransformOptions,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        Self {
            window: 2.0,
            horizon: 1.0,
            t_points: 201,
            a0_window: None,
            a0_tol: 1e-9,
            b_sets: vec![vec![(0.0, 0.1)], vec![(0.0, 0.4)], vec![(-0.5, -0.2), (0.3, 0.35)]],
            psi_c1: None,
            m: 1.0,
            growth_alpha: 1.0,
            growth_c: 0.1,
            a1_c: None,
            trend: TrendRule::default(),
            threshold: 0.1,
            transform: TransformOptions::default(),
        }
    }
}

impl ConditionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window > 0.0 && self.horizon > 0.0) {
            return Err(Error::Config("window and horizon must be positive".into()));
        }
        if !(self.growth_alpha > 0.0 && self.growth_c > 0.0) {
            return Err(Error::Config("growth alpha and C must be positive".into()));
        }
        if self.psi_c1.is_some_and(|c| !(c > 0.0)) || self.a1_c.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config("psi_c1 and a1_c must be positive when given".into()));
        }
        if self.t_points < 2 {
            return Err(Error::Config("t_points must be at least 2".into()));
        }
        for set in &self.b_sets {
            for (lo, hi) in set {
                if !(lo <= hi) {
                    return Err(Error::Config(format!("interval [{lo}, {hi}] is empty or reversed")));
                }
            }
        }
        Ok(())
    }

    fn t_grid(&self) -> Vec<f64> {
        let l = self.horizon;
        let mut t: Vec<f64> = (0..self.t_points)
            .map(|i| l * i as f64 / (self.t_points - 1) as f64)
            .chain((1..=40).map(|j| l * 0.5f64.powi(j)))
            .collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// One named per-T series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: String,
    pub b_values: Vec<f64>,
    pub series: Vec<Series>,
    pub threshold: Option<f64>,
    pub trend: Option<TrendVerdict>,
    pub verdict: Verdict,
    pub notes: Vec<String>,
}

impl ConditionResult {
    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.series
            .iter()
            .find(|s| s.name == name)
            .map(|s| s.values.as_slice())
    }

    fn check_finite(&self) -> Result<()> {
        for s in &self.series {
            if let Some(v) = s.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::Evaluation(format!("{} has non-finite value {v}", s.name)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub model: String,
    pub results: Vec<ConditionResult>,
    pub config_hash: Option<String>,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|r| r.verdict == Verdict::Pass)
    }

    pub fn get(&self, condition: &str) -> Option<&ConditionResult> {
        self.results.iter().find(|r| r.condition == condition)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Evaluation(e.to_string()))
    }

    /// CSV with columns `condition,T_index,b_T,value`; the condition column
    /// carries the series name.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        if let Some(h) = &self.config_hash {
            writeln!(w, "# config_sha256={h}")?;
        }
        writeln!(w, "condition,T_index,b_T,value")?;
        for r in &self.results {
            for s in &r.series {
                for (i, (b, v)) in r.b_values.iter().zip(&s.values).enumerate() {
                    writeln!(w, "{},{i},{b},{v}", s.name)?;
                }
            }
        }
        Ok(())
    }
}

/// Transform tables for every schedule value, built in parallel.
pub fn build_tables(family: &ModelFamily, schedule: &ParamSchedule, opts: &TransformOptions) -> Result<Vec<TransformTable>> {
    schedule
        .values()
        .par_iter()
        .map(|&b| build_f(&family.at(b), opts))
        .collect()
}

fn decay_result(
    condition: String,
    b_values: Vec<f64>,
    series: Vec<Series>,
    decaying: &[f64],
    cfg: &ConditionConfig,
    notes: Vec<String>,
) -> Result<ConditionResult> {
    let trend = cfg.trend.evaluate(decaying);
    let last = decaying.last().copied().unwrap_or(f64::INFINITY);
    let verdict = if trend.pass && last < cfg.threshold {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    let r = ConditionResult {
        condition,
        b_values,
        series,
        threshold: Some(cfg.threshold),
        trend: Some(trend),
        verdict,
        notes,
    };
    r.check_finite()?;
    Ok(r)
}

/// `∫₀ᴸ sup_x |a_T(t, x) − â_T(x)| dt` per T.
pub fn check_a0(family: &ModelFamily, schedule: &ParamSchedule, cfg: &ConditionConfig) -> Result<ConditionResult> {
    cfg.validate()?;
    let mut notes = Vec::new();
    let use_envelope = family.sup_gap(0.0, schedule.values()[0]).is_some() && cfg.a0_window.is_none();
    if use_envelope {
        notes.push("sup over x taken from the closed-form envelope".into());
    } else {
        match cfg.a0_window {
            Some(w) => notes.push(format!("sup over x taken on a grid over [-{w}, {w}]")),
            None => {
                return Err(Error::Config(
                    "model has no closed-form drift gap envelope; configure a0_window".into(),
                ))
            }
        }
    }
    let values: Vec<f64> = schedule
        .values()
        .par_iter()
        .map(|&b| {
            let model = family.at(b);
            if use_envelope {
                let gap = model.sup_gap.clone().expect("checked above");
                adaptive_simpson(|t| gap(t), 0.0, cfg.horizon, cfg.a0_tol)
            } else {
                a0_grid(&model, cfg.a0_window.expect("checked above"), cfg)
            }
        })
        .collect();
    decay_result(
        "A0".into(),
        schedule.values().to_vec(),
        vec![Series {
            name: "a0_integral".into(),
            values: values.clone(),
        }],
        &values,
        cfg,
        notes,
    )
}

/// Windowed-sup fallback for (A0).
pub fn a0_grid(model: &Model, window: f64, cfg: &ConditionConfig) -> f64 {
    let h = default_spacing(model.b);
    let n = (window / h).ceil() as usize;
    let xs: Vec<f64> = (0..=2 * n).map(|j| -window + j as f64 * window / n as f64).collect();
    let hat: Vec<f64> = xs.iter().map(|x| (model.homogeneous_drift)(*x)).collect();
    let inner = |t: f64| {
        xs.iter()
            .zip(&hat)
            .fold(0.0f64, |m, (x, a)| m.max(((model.drift)(t, *x) - a).abs()))
    };
    adaptive_simpson(inner, 0.0, cfg.horizon, cfg.a0_tol.max(1e-7))
}

/// Per-T output of the (A1) evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A1Value {
    /// Smallest `C` with `[G′a + ½G″]² + G′² <= C (1 + G²)` on the grid.
    pub constant: f64,
    /// `max ([G′a + ½G″]² + G′² − C (1 + G²))` for the given `C`.
    pub max_violation: f64,
    pub g_at_x0: f64,
}

pub fn a1_value(model: &Model, table: &TransformTable, c: f64, cfg: &ConditionConfig) -> Result<A1Value> {
    let g2 = table.g_second_derivative();
    if let Some(i) = g2.iter().position(|v| !v.is_finite()) {
        return Err(Error::Evaluation(format!(
            "finite-difference G'' is not finite at x = {}",
            table.x[i]
        )));
    }
    let ts = cfg.t_grid();
    let mut constant: f64 = 0.0;
    let mut max_violation = f64::NEG_INFINITY;
    for i in 0..table.len() {
        let (x, gp, g) = (table.x[i], table.g_prime[i], table.g[i]);
        let denom = 1.0 + g * g;
        for &t in &ts {
            let lhs = gp * (model.drift)(t, x) + 0.5 * g2[i];
            let e = lhs * lhs + gp * gp;
            constant = constant.max(e / denom);
            max_violation = max_violation.max(e - c * denom);
        }
    }
    Ok(A1Value {
        constant,
        max_violation,
        g_at_x0: table.g_at(model.x0)?,
    })
}

pub fn check_a1(
    family: &ModelFamily,
    schedule: &ParamSchedule,
    tables: &[TransformTable],
    cfg: &ConditionConfig,
) -> Result<ConditionResult> {
    cfg.validate()?;
    let provisional = cfg.a1_c.unwrap_or(0.0);
    let per_t: Vec<A1Value> = schedule
        .values()
        .par_iter()
        .zip(tables.par_iter())
        .map(|(&b, t)| a1_value(&family.at(b), t, provisional, cfg))
        .collect::<Result<_>>()?;
    let mut notes = vec!["(A1) checked at grid points; G'' by centered differences".into()];
    let c = match cfg.a1_c {
        Some(c) => c,
        None => {
            let c = per_t.iter().map(|v| v.constant).fold(0.0, f64::max);
            notes.push(format!("C fitted as the largest per-T minimum: {c}"));
            c
        }
    };
    let violation: Vec<f64> = if cfg.a1_c.is_some() {
        per_t.iter().map(|v| v.max_violation).collect()
    } else {
        schedule
            .values()
            .par_iter()
            .zip(tables.par_iter())
            .map(|(&b, t)| a1_value(&family.at(b), t, c, cfg).map(|v| v.max_violation))
            .collect::<Result<_>>()?
    };
    let g0_ok = per_t.iter().all(|v| v.g_at_x0.abs() <= c);
    let pass = g0_ok && violation.iter().all(|v| *v <= 0.0);
    if !g0_ok {
        notes.push("|G(x0)| exceeds C".into());
    }
    let r = ConditionResult {
        condition: "A1".into(),
        b_values: schedule.values().to_vec(),
        series: vec![
            Series {
                name: "a1_max_violation".into(),
                values: violation,
            },
            Series {
                name: "a1_constant".into(),
                values: per_t.iter().map(|v| v.constant).collect(),
            },
        ],
        threshold: Some(c),
        trend: None,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        notes,
    };
    r.check_finite()?;
    Ok(r)
}

/// `min |G(x)| / |x|^α` over grid points with `|x| >= h`.
pub fn growth_margin(table: &TransformTable, alpha: f64) -> f64 {
    table
        .x
        .iter()
        .zip(&table.g)
        .filter(|(x, _)| x.abs() >= table.h * (1.0 - 1e-9))
        .map(|(x, g)| g.abs() / x.abs().powf(alpha))
        .fold(f64::INFINITY, f64::min)
}

pub fn check_growth(schedule: &ParamSchedule, tables: &[TransformTable], cfg: &ConditionConfig) -> Result<ConditionResult> {
    cfg.validate()?;
    let values: Vec<f64> = tables.iter().map(|t| growth_margin(t, cfg.growth_alpha)).collect();
    let pass = values.iter().all(|v| *v >= cfg.growth_c);
    let r = ConditionResult {
        condition: "growth".into(),
        b_values: schedule.values().to_vec(),
        series: vec![Series {
            name: "growth_margin".into(),
            values,
        }],
        threshold: Some(cfg.growth_c),
        trend: None,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        notes: vec![format!("alpha = {}", cfg.growth_alpha)],
    };
    r.check_finite()?;
    Ok(r)
}

/// Merge overlapping intervals; returns the union and its Lebesgue measure.
fn normalize(set: &BorelSet) -> (BorelSet, f64) {
    let mut v = set.clone();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: BorelSet = Vec::new();
    for (lo, hi) in v {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    let measure = out.iter().map(|(a, b)| b - a).sum();
    (out, measure)
}

/// `max_{|x| <= N} |f′(x) ∫₀ˣ χ_B(G(u)) / f′(u) du| / (λ(B) (1 + |x|^m))`,
/// the smallest `C₁` that works for this set. Zero for an empty set.
pub fn a2_required_c1(table: &TransformTable, set: &BorelSet, cfg: &ConditionConfig) -> Result<f64> {
    let (set, measure) = normalize(set);
    if set.is_empty() || measure == 0.0 {
        return Ok(0.0);
    }
    let (glo, ghi) = (table.g[0], table.g[table.len() - 1]);
    // preimages of the intervals under the increasing map G
    let pre = set
        .iter()
        .map(|(lo, hi)| {
            if *lo < glo || *hi > ghi {
                return Err(Error::Config(format!(
                    "set [{lo}, {hi}] leaves the G range [{glo}, {ghi}] of the grid"
                )));
            }
            Ok((table.g_inverse(*lo)?, table.g_inverse(*hi)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let r_at = |u: f64, p: f64, q: f64| table.recip_at(u.clamp(p, q));
    let mut worst: f64 = 0.0;
    for i in table.window(cfg.window) {
        let x = table.x[i];
        let mut integral = 0.0;
        for &(p, q) in &pre {
            integral += r_at(x, p, q)? - r_at(0.0, p, q)?;
        }
        let v = (table.f_prime[i] * integral).abs() / (measure * (1.0 + x.abs().powf(cfg.m)));
        worst = worst.max(v);
    }
    Ok(worst)
}

pub fn check_a2(schedule: &ParamSchedule, tables: &[TransformTable], cfg: &ConditionConfig) -> Result<ConditionResult> {
    cfg.validate()?;
    if cfg.b_sets.is_empty() {
        return Err(Error::Config("no sets configured for the occupation check".into()));
    }
    for t in tables {
        if !t.g_strictly_increasing() {
            return Err(Error::Evaluation(format!("G is not strictly increasing at b = {}", t.b)));
        }
    }
    let required: Vec<f64> = tables
        .par_iter()
        .map(|t| {
            cfg.b_sets
                .iter()
                .map(|s| a2_required_c1(t, s, cfg))
                .try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))
        })
        .collect::<Result<_>>()?;
    let mut notes = vec![format!(
        "pass on tested family of {} sets; other sets are not certified",
        cfg.b_sets.len()
    )];
    let c1 = match cfg.psi_c1 {
        Some(c) => c,
        None => {
            let c = required.iter().cloned().fold(0.0, f64::max);
            notes.push(format!("psi(lambda) = C1 lambda with C1 fitted: {c}"));
            c
        }
    };
    let ratios: Vec<f64> = required
        .iter()
        .map(|r| if c1 > 0.0 { r / c1 } else { 0.0 })
        .collect();
    let pass = ratios.iter().all(|r| *r <= 1.0);
    let r = ConditionResult {
        condition: "A2".into(),
        b_values: schedule.values().to_vec(),
        series: vec![
            Series {
                name: "a2_max_ratio".into(),
                values: ratios,
            },
            Series {
                name: "a2_required_c1".into(),
                values: required,
            },
        ],
        threshold: Some(1.0),
        trend: None,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        notes,
    };
    r.check_finite()?;
    Ok(r)
}

/// `sup_{|x| <= N} |f′(x) ∫₀ˣ q/f′|` for `q` sampled on the grid.
pub fn a3_sup(table: &TransformTable, q: &[f64], window: f64) -> Result<f64> {
    if let Some(i) = q.iter().position(|v| !v.is_finite()) {
        return Err(Error::Evaluation(format!("q is not finite at x = {}", table.x[i])));
    }
    Ok(table.q_profile(q).sup_abs(table, window))
}

pub fn check_a3(
    family: &ModelFamily,
    limit: &LimitModel,
    schedule: &ParamSchedule,
    tables: &[TransformTable],
    q: &QFamily,
    cfg: &ConditionConfig,
) -> Result<ConditionResult> {
    cfg.validate()?;
    let values: Vec<f64> = schedule
        .values()
        .par_iter()
        .zip(tables.par_iter())
        .map(|(&b, t)| a3_sup(t, &q.sample(t, &family.at(b), limit), cfg.window))
        .collect::<Result<_>>()?;
    let name = format!("a3_sup:{}", q.name());
    decay_result(
        format!("A3:{}", q.name()),
        schedule.values().to_vec(),
        vec![Series {
            name,
            values: values.clone(),
        }],
        &values,
        cfg,
        vec![format!("window |x| <= {}", cfg.window)],
    )
}

/// `(C_N, sup_{|x| <= N} |f′∫g/f′ − g0(G) G′|)` on one table.
pub fn a4_values(table: &TransformTable, model: &Model, g0: &ScalarFn, window: f64) -> Result<(f64, f64)> {
    let q = table.sample(&*model.integrand_g);
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation("integrand is not finite on the grid".into()));
    }
    let profile = table.q_profile(&q);
    let mut bound: f64 = 0.0;
    let mut resid: f64 = 0.0;
    for i in table.window(window) {
        let p = profile.values[i];
        bound = bound.max(p.abs());
        resid = resid.max((p - g0(table.g[i]) * table.g_prime[i]).abs());
    }
    Ok((bound, resid))
}

pub fn check_a4(
    family: &ModelFamily,
    limit: &LimitModel,
    schedule: &ParamSchedule,
    tables: &[TransformTable],
    cfg: &ConditionConfig,
) -> Result<ConditionResult> {
    cfg.validate()?;
    let pairs: Vec<(f64, f64)> = schedule
        .values()
        .par_iter()
        .zip(tables.par_iter())
        .map(|(&b, t)| a4_values(t, &family.at(b), &limit.g0, cfg.window))
        .collect::<Result<_>>()?;
    let resid: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    decay_result(
        "A4".into(),
        schedule.values().to_vec(),
        vec![
            Series {
                name: "a4_sup".into(),
                values: resid.clone(),
            },
            Series {
                name: "a4_bound".into(),
                values: pairs.iter().map(|p| p.0).collect(),
            },
        ],
        &resid,
        cfg,
        vec![format!("window |x| <= {}", cfg.window)],
    )
}

/// Per-T residuals of the two-constant condition.
pub fn theorem5_values(table: &TransformTable, model: &Model, c0: f64, b0: f64, window: f64) -> Result<(f64, f64)> {
    let q = table.sample(&*model.integrand_g);
    let p = table.q_profile(&q).values;
    let centered: Vec<f64> = p.iter().map(|v| v - c0).collect();
    let integral = cumulative_simpson(&centered, table.h, table.anchor);
    let range = table.window(window);
    let first = integral[range.clone()].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let qq: Vec<f64> = centered.iter().map(|v| v * v - b0 * b0).collect();
    let second = a3_sup(table, &qq, window)?;
    Ok((first, second))
}

/// `c0` as the window mean of `f′∫g/f′`, `b0` as the root mean square of
/// the remainder, both at the given table.
pub fn fit_c0_b0(table: &TransformTable, model: &Model, window: f64) -> (f64, f64) {
    let q = table.sample(&*model.integrand_g);
    let p = table.q_profile(&q).values;
    let range = table.window(window);
    let n = range.clone().count() as f64;
    let c0 = p[range.clone()].iter().sum::<f64>() / n;
    let b0 = (p[range].iter().map(|v| (v - c0) * (v - c0)).sum::<f64>() / n).sqrt();
    (c0, b0)
}

pub fn check_theorem5(
    family: &ModelFamily,
    limit: &LimitModel,
    schedule: &ParamSchedule,
    tables: &[TransformTable],
    cfg: &ConditionConfig,
) -> Result<ConditionResult> {
    cfg.validate()?;
    let mut notes = Vec::new();
    let (c0, b0) = match (limit.c0, limit.b0) {
        (Some(c), Some(b)) => (c, b),
        _ => {
            let last = tables.last().ok_or_else(|| Error::Config("empty schedule".into()))?;
            let (c, b) = fit_c0_b0(last, &family.at(last.b), cfg.window);
            notes.push(format!("c0 = {c}, b0 = {b} fitted at the largest b_T"));
            (limit.c0.unwrap_or(c), limit.b0.unwrap_or(b))
        }
    };
    let pairs: Vec<(f64, f64)> = schedule
        .values()
        .par_iter()
        .zip(tables.par_iter())
        .map(|(&b, t)| theorem5_values(t, &family.at(b), c0, b0, cfg.window))
        .collect::<Result<_>>()?;
    let first: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let second: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let t1 = cfg.trend.evaluate(&first);
    let t2 = cfg.trend.evaluate(&second);
    let ok = |t: &TrendVerdict, v: &[f64]| t.pass && v.last().is_some_and(|l| *l < cfg.threshold);
    let pass = ok(&t1, &first) && ok(&t2, &second);
    let trend = TrendVerdict {
        pass: t1.pass && t2.pass,
        ..t1
    };
    let r = ConditionResult {
        condition: "theorem5".into(),
        b_values: schedule.values().to_vec(),
        series: vec![
            Series {
                name: "c0_b0_residuals:integral".into(),
                values: first,
            },
            Series {
                name: "c0_b0_residuals:q_sup".into(),
                values: second,
            },
        ],
        threshold: Some(cfg.threshold),
        trend: Some(trend),
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        notes,
    };
    r.check_finite()?;
    Ok(r)
}

/// A condition to audit.
#[derive(Debug, Clone)]
pub enum Condition {
    A0,
    A1,
    Growth,
    A2,
    A3(QFamily),
    A4,
    Theorem5,
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "A0" | "a0" => Self::A0,
            "A1" | "a1" => Self::A1,
            "growth" => Self::Growth,
            "A2" | "a2" => Self::A2,
            "A4" | "a4" => Self::A4,
            "theorem5" => Self::Theorem5,
            other => match other.strip_prefix("A3:").or_else(|| other.strip_prefix("a3:")) {
                Some("theorem2_drift") => Self::A3(QFamily::Theorem2Drift),
                Some("theorem2_diffusion") => Self::A3(QFamily::Theorem2Diffusion),
                Some("theorem3") => Self::A3(QFamily::Theorem3),
                Some("theorem6") => Self::A3(QFamily::Theorem6),
                Some("homogeneous_drift") => Self::A3(QFamily::HomogeneousDrift),
                _ => return Err(Error::Config(format!("unknown condition '{s}'"))),
            },
        })
    }
}

/// Audit `conditions` over the schedule.
pub fn run_conditions(
    family: &ModelFamily,
    limit: &LimitModel,
    schedule: &ParamSchedule,
    conditions: &[Condition],
    cfg: &ConditionConfig,
) -> Result<ConditionReport> {
    cfg.validate()?;
    let needs_tables = conditions.iter().any(|c| !matches!(c, Condition::A0));
    let tables = if needs_tables {
        build_tables(family, schedule, &cfg.transform)?
    } else {
        Vec::new()
    };
    let results = conditions
        .iter()
        .map(|c| match c {
            Condition::A0 => check_a0(family, schedule, cfg),
            Condition::A1 => check_a1(family, schedule, &tables, cfg),
            Condition::Growth => check_growth(schedule, &tables, cfg),
            Condition::A2 => check_a2(schedule, &tables, cfg),
            Condition::A3(q) => check_a3(family, limit, schedule, &tables, q, cfg),
            Condition::A4 => check_a4(family, limit, schedule, &tables, cfg),
            Condition::Theorem5 => check_theorem5(family, limit, schedule, &tables, cfg),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConditionReport {
        model: family.name.clone(),
        results,
        config_hash: None,
    })
}

/// Custom `q` family from a closure over `b`.
pub fn custom_q(name: &str, q: impl Fn(f64) -> ScalarFn + Send + Sync + 'static) -> QFamily {
    QFamily::Custom {
        name: name.into(),
        q: Arc::new(q),
    }
}
