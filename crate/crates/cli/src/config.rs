//! Experiment configuration: a TOML file with one section per stage.

use std::f64::consts::E;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sdelimit_core::conditions::{Condition, ConditionConfig};
use sdelimit_core::model::{
    example1_model, example2_model, synthetic_model, IntegrandKind, LimitModel, ModelFamily,
    NamedFn, ParamSchedule, SyntheticKind,
};
use sdelimit_core::simulate::SimConfig;
use sdelimit_core::stats::{StatsConfig, TrendRule};
use sdelimit_core::transform::{TransformChoice, TransformOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub conditions: ConditionsSection,
    #[serde(default)]
    pub stats: StatsSection,
    #[serde(default)]
    pub limit: LimitSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `example1`, `example2`, `zero_drift`, `constant_drift(c)` or `linear_drift`.
    pub name: String,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub x0: f64,
    /// Integrand family, e.g. `example2`, `cauchy`, `sign_sin`, `one`.
    pub integrand: Option<String>,
    /// Terminal function `F`, e.g. `zero`, `sin`.
    pub terminal: Option<String>,
}

fn default_gamma() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    /// Explicit `b_T` values; overrides the dyadic range.
    pub values: Option<Vec<f64>>,
    pub k_min: i32,
    pub k_max: i32,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            values: None,
            k_min: 3,
            k_max: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub horizon: f64,
    pub paths: usize,
    /// Required, either here or through `--seed`.
    pub seed: Option<u64>,
    pub crn: bool,
    pub x_max: f64,
    pub dt: Option<f64>,
    pub allow_coarse_dt: bool,
    pub record_level: u32,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            horizon: d.horizon,
            paths: d.paths,
            seed: None,
            crn: d.crn,
            x_max: d.x_max,
            dt: d.dt,
            allow_coarse_dt: d.allow_coarse_dt,
            record_level: d.record_level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditionsSection {
    pub checks: Vec<String>,
    pub window: f64,
    pub t_points: usize,
    pub a0_window: Option<f64>,
    pub b_sets: Vec<Vec<[f64; 2]>>,
    pub psi_c1: Option<f64>,
    pub m: f64,
    pub growth_alpha: f64,
    pub growth_c: f64,
    pub a1_c: Option<f64>,
    pub threshold: f64,
    pub trend_factor: f64,
    /// `scale`, `identity` or `cube`.
    pub transform: String,
    pub log_space: bool,
}

impl Default for ConditionsSection {
    fn default() -> Self {
        let d = ConditionConfig::default();
        Self {
            checks: vec!["A0".into(), "A1".into(), "growth".into(), "A2".into()],
            window: d.window,
            t_points: d.t_points,
            a0_window: d.a0_window,
            b_sets: d
                .b_sets
                .iter()
                .map(|s| s.iter().map(|(a, b)| [*a, *b]).collect())
                .collect(),
            psi_c1: d.psi_c1,
            m: d.m,
            growth_alpha: d.growth_alpha,
            growth_c: d.growth_c,
            a1_c: d.a1_c,
            threshold: d.threshold,
            trend_factor: d.trend.factor,
            transform: "scale".into(),
            log_space: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub times: Vec<f64>,
    pub alpha: f64,
    pub ks_floor: f64,
    pub quantile_threshold: f64,
    pub bootstrap_reps: usize,
    pub lambdas: Vec<f64>,
    pub lags: Vec<f64>,
    /// Conditions audited before `verify`; empty uses the theorem's own list.
    pub hypotheses: Vec<String>,
    pub skip_hypotheses: bool,
}

impl Default for StatsSection {
    fn default() -> Self {
        let d = StatsConfig::default();
        Self {
            times: d.times,
            alpha: d.alpha,
            ks_floor: d.ks_floor,
            quantile_threshold: d.quantile_threshold,
            bootstrap_reps: d.bootstrap_reps,
            lambdas: d.lambdas,
            lags: d.lags,
            hypotheses: Vec::new(),
            skip_hypotheses: false,
        }
    }
}

/// Limit coefficients by name; absent entries keep the catalog's choice.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitSection {
    pub a0: Option<String>,
    pub sigma0: Option<String>,
    pub g0: Option<String>,
    pub f0: Option<String>,
    pub y0: Option<f64>,
    pub c0: Option<f64>,
    pub b0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid experiment config")?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    /// Built-in configuration for a catalog example.
    pub fn example(name: &str) -> Result<Self> {
        let mut cfg = Self {
            model: ModelSection {
                name: name.into(),
                gamma: 0.5,
                x0: 0.0,
                integrand: None,
                terminal: None,
            },
            schedule: ScheduleSection::default(),
            sim: SimSection {
                seed: Some(SimConfig::default().base_seed),
                ..Default::default()
            },
            conditions: ConditionsSection::default(),
            stats: StatsSection::default(),
            limit: LimitSection::default(),
            output: OutputSection::default(),
        };
        match name {
            "example1" | "example2" => {
                cfg.conditions.a1_c = Some(2.0 * E.powi(4) + 1.0);
                cfg.conditions.growth_c = (-2.0f64).exp();
                cfg.conditions.growth_alpha = 1.0;
                cfg.conditions.psi_c1 = Some(E.powi(4));
                cfg.conditions.m = 1.0;
            }
            other => bail!("unknown example '{other}' (expected example1 or example2)"),
        }
        Ok(cfg)
    }

    /// Theorem verified by `example NAME`.
    pub fn example_theorem(&self) -> u32 {
        if self.model.name == "example2" {
            3
        } else {
            2
        }
    }

    /// Canonical TOML of the resolved configuration.
    pub fn canonical(&self) -> Result<String> {
        toml::to_string(self).context("serializing config")
    }

    /// SHA-256 of the canonical config. The output directory is left out so
    /// that the same experiment written to two places hashes the same.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output = OutputSection::default();
        Ok(hex::encode(Sha256::digest(c.canonical()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        self.family()?;
        self.limit()?;
        self.condition_list(&self.conditions.checks)?;
        if self.sim.seed.is_none() {
            bail!("sim.seed is required (or pass --seed)");
        }
        if self.sim.paths == 0 {
            bail!("sim.paths must be at least 1");
        }
        self.condition_config()?.validate()?;
        Ok(())
    }

    pub fn schedule(&self) -> Result<ParamSchedule> {
        let s = match &self.schedule.values {
            Some(v) => ParamSchedule::new(v.clone())?,
            None => ParamSchedule::dyadic(self.schedule.k_min, self.schedule.k_max)?,
        };
        Ok(s.with_gamma(self.model.gamma))
    }

    pub fn family(&self) -> Result<ModelFamily> {
        let m = &self.model;
        let mut family = match m.name.as_str() {
            "example1" => example1_model(m.gamma)?.0,
            "example2" => example2_model(m.gamma)?.0,
            other => synthetic_model(other.parse::<SyntheticKind>()?),
        }
        .with_x0(m.x0);
        if let Some(g) = &m.integrand {
            family = family.with_integrand(IntegrandKind::parse(g, m.gamma)?.family()?);
        }
        if let Some(f) = &m.terminal {
            let f = f.parse::<NamedFn>()?.to_fn();
            family = family.with_terminal(std::sync::Arc::new(move |_| f.clone()));
        }
        Ok(family)
    }

    pub fn limit(&self) -> Result<LimitModel> {
        let l = &self.limit;
        let mut limit = LimitModel::wiener(l.y0.unwrap_or(self.model.x0));
        let named = |s: &Option<String>| -> Result<Option<_>> {
            Ok(match s {
                Some(s) => Some(s.parse::<NamedFn>()?.to_fn()),
                None => None,
            })
        };
        if let Some(f) = named(&l.a0)? {
            limit.a0 = f;
        }
        if let Some(f) = named(&l.sigma0)? {
            limit.sigma0 = f;
        }
        if let Some(f) = named(&l.g0)? {
            limit.g0 = f;
        }
        if let Some(f) = named(&l.f0)? {
            limit.f0 = f;
        }
        limit.c0 = l.c0;
        limit.b0 = l.b0;
        Ok(limit)
    }

    pub fn sim(&self) -> Result<SimConfig> {
        let s = &self.sim;
        Ok(SimConfig {
            horizon: s.horizon,
            paths: s.paths,
            base_seed: s.seed.context("sim.seed is required (or pass --seed)")?,
            crn: s.crn,
            x_max: s.x_max,
            dt: s.dt,
            allow_coarse_dt: s.allow_coarse_dt,
            record_level: s.record_level,
        })
    }

    pub fn transform(&self) -> Result<TransformOptions> {
        let choice = match self.conditions.transform.as_str() {
            "scale" => TransformChoice::ScaleFunction,
            "identity" => TransformChoice::Identity,
            "cube" => TransformChoice::Cube,
            other => bail!("unknown transform '{other}' (expected scale, identity or cube)"),
        };
        Ok(TransformOptions {
            x_max: self.sim.x_max,
            log_space: self.conditions.log_space,
            choice,
            ..Default::default()
        })
    }

    pub fn condition_config(&self) -> Result<ConditionConfig> {
        let c = &self.conditions;
        Ok(ConditionConfig {
            window: c.window,
            horizon: self.sim.horizon,
            t_points: c.t_points,
            a0_window: c.a0_window,
            b_sets: c
                .b_sets
                .iter()
                .map(|s| s.iter().map(|[a, b]| (*a, *b)).collect())
                .collect(),
            psi_c1: c.psi_c1,
            m: c.m,
            growth_alpha: c.growth_alpha,
            growth_c: c.growth_c,
            a1_c: c.a1_c,
            trend: TrendRule {
                factor: c.trend_factor,
                ..Default::default()
            },
            threshold: c.threshold,
            transform: self.transform()?,
            ..Default::default()
        })
    }

    pub fn stats(&self) -> StatsConfig {
        let s = &self.stats;
        StatsConfig {
            times: s.times.clone(),
            alpha: s.alpha,
            ks_floor: s.ks_floor,
            quantile_threshold: s.quantile_threshold,
            trend: TrendRule {
                factor: self.conditions.trend_factor,
                ..Default::default()
            },
            bootstrap_reps: s.bootstrap_reps,
            lambdas: s.lambdas.clone(),
            lags: s.lags.clone(),
            ..Default::default()
        }
    }

    pub fn condition_list(&self, names: &[String]) -> Result<Vec<Condition>> {
        names
            .iter()
            .map(|n| n.parse::<Condition>().map_err(Into::into))
            .collect()
    }

    /// Conditions audited before verifying `theorem`.
    pub fn hypotheses_for(&self, theorem: u32) -> Result<Vec<Condition>> {
        if !self.stats.hypotheses.is_empty() {
            return self.condition_list(&self.stats.hypotheses);
        }
        let mut names = vec!["A1", "growth", "A2", "A3:theorem2_drift", "A3:theorem2_diffusion"];
        match theorem {
            3 => names.push("A3:theorem3"),
            4 => names.push("A4"),
            5 => names.extend(["A3:homogeneous_drift", "theorem5"]),
            6 | 7 => names.push("A3:theorem6"),
            _ => {}
        }
        self.condition_list(&names.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
name = "example1"

[sim]
seed = 7
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.schedule().unwrap().len(), 8);
        assert_eq!(cfg.sim().unwrap().paths, 10_000);
        assert_eq!(cfg.conditions.checks.len(), 4);
    }

    #[test]
    fn missing_seed_is_rejected() {
        let cfg = ExperimentConfig::parse("[model]\nname = \"example1\"\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_keys_and_names_are_rejected() {
        assert!(ExperimentConfig::parse("[model]\nname = \"example1\"\ncolour = 1\n").is_err());
        let cfg = ExperimentConfig::parse("[model]\nname = \"example9\"\n[sim]\nseed = 1\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::parse("[model]\nname = \"example1\"\n[sim]\nseed = 1\n[schedule]\nvalues = []\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.output.dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.sim.seed = Some(8);
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn examples_carry_the_derived_constants() {
        let cfg = ExperimentConfig::example("example1").unwrap();
        assert_eq!(cfg.conditions.a1_c, Some(2.0 * E.powi(4) + 1.0));
        assert_eq!(cfg.example_theorem(), 2);
        assert_eq!(ExperimentConfig::example("example2").unwrap().example_theorem(), 3);
        assert!(ExperimentConfig::example("example3").is_err());
        let text = cfg.canonical().unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }
}
