//! Subcommand implementations. Each returns whether its verdict passed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde_json::json;

use sdelimit_core::conditions::{run_conditions, ConditionReport};
use sdelimit_core::simulate::simulate_ensemble;
use sdelimit_core::stats::{moment_suite, run_sweep, theorem_check, Hypotheses, Quantity, ZetaPaths};
use sdelimit_core::transform::{build_f, build_phi};

use crate::config::ExperimentConfig;

/// Resolved config plus where to write.
pub struct Workspace {
    pub cfg: ExperimentConfig,
    pub hash: String,
    pub out: PathBuf,
}

impl Workspace {
    pub fn new(cfg: ExperimentConfig, out: Option<PathBuf>) -> Result<Self> {
        let mut cfg = cfg;
        if let Some(o) = out {
            cfg.output.dir = o;
        }
        let hash = cfg.hash()?;
        let out = cfg.output.dir.clone();
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        Ok(Self { cfg, hash, out })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.out.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    /// Resolved config and a metadata record. The timestamp lives only here.
    pub fn write_metadata(&self, command: &str, workers: Option<usize>, pass: bool) -> Result<()> {
        self.write_text("config.toml", &self.cfg.canonical()?)?;
        let now = SystemTime::now().duration_since(UNIX_EPOCH)?.as_secs();
        let meta = json!({
            "command": command,
            "config_sha256": self.hash,
            "pass": pass,
            "workers": workers,
            "timestamp_unix": now,
            "version": env!("CARGO_PKG_VERSION"),
        });
        self.write_text("metadata.json", &serde_json::to_string_pretty(&meta)?)
    }

    fn write_conditions(&self, stem: &str, report: &mut ConditionReport) -> Result<()> {
        report.config_hash = Some(self.hash.clone());
        let mut w = self.create(&format!("{stem}.csv"))?;
        report.write_csv(&mut w)?;
        w.flush()?;
        self.write_text(&format!("{stem}.json"), &report.to_json()?)
    }
}

fn print_conditions(report: &ConditionReport) {
    for r in &report.results {
        println!("{:<24} {:?}", r.condition, r.verdict);
        for n in &r.notes {
            println!("    {n}");
        }
    }
}

pub fn check(ctx: &Workspace) -> Result<bool> {
    let cfg = &ctx.cfg;
    let conditions = cfg.condition_list(&cfg.conditions.checks)?;
    let mut report = run_conditions(
        &cfg.family()?,
        &cfg.limit()?,
        &cfg.schedule()?,
        &conditions,
        &cfg.condition_config()?,
    )?;
    print_conditions(&report);
    ctx.write_conditions("conditions", &mut report)?;
    Ok(report.all_pass())
}

pub fn verify(ctx: &Workspace, theorem: u32) -> Result<bool> {
    let cfg = &ctx.cfg;
    let family = cfg.family()?;
    let limit = cfg.limit()?;
    let schedule = cfg.schedule()?;
    let sim = cfg.sim()?;
    let transform = cfg.transform()?;
    let stats = cfg.stats();

    if theorem == 1 {
        let sweep = run_sweep(&family, &schedule, &limit, &sim, &transform, &stats.lambdas)?;
        let inputs = sweep
            .entries
            .iter()
            .map(ZetaPaths::from_entry)
            .collect::<sdelimit_core::Result<Vec<_>>>()?;
        let summary = moment_suite(&inputs, &stats.lambdas, &stats, sim.base_seed)?;
        let mut w = ctx.create("theorem1.csv")?;
        summary.write_csv(&mut w, Some(&ctx.hash))?;
        w.flush()?;
        let body: serde_json::Value = serde_json::from_str(&summary.to_json()?)?;
        let doc = json!({ "config_sha256": ctx.hash, "summary": body });
        ctx.write_text("theorem1.json", &serde_json::to_string_pretty(&doc)?)?;
        println!(
            "theorem 1: sup spread {:.3} ({}), fourth ratio {:.3} ({}), occupation {}",
            summary.sup_sq_spread,
            verdict(summary.uniform_pass),
            summary.fourth_max,
            verdict(summary.fourth_pass),
            summary.occupation_pass.map_or("n/a", verdict),
        );
        return Ok(summary.pass);
    }

    let quantity = Quantity::for_theorem(theorem)?;
    let hypotheses = if cfg.stats.skip_hypotheses {
        Hypotheses::Skipped
    } else {
        let conditions = cfg.hypotheses_for(theorem)?;
        let mut report = run_conditions(&family, &limit, &schedule, &conditions, &cfg.condition_config()?)?;
        print_conditions(&report);
        ctx.write_conditions(&format!("theorem{theorem}_hypotheses"), &mut report)?;
        let failed: Vec<_> = report
            .results
            .iter()
            .filter(|r| r.verdict != sdelimit_core::conditions::Verdict::Pass)
            .map(|r| r.condition.clone())
            .collect();
        Hypotheses::Checked {
            passed: failed.is_empty(),
            detail: if failed.is_empty() {
                "all pass".into()
            } else {
                format!("not passed: {}", failed.join(", "))
            },
        }
    };
    let mut report = theorem_check(quantity, &family, &schedule, &limit, &sim, &transform, &stats, hypotheses)?;
    report.config_hash = Some(ctx.hash.clone());
    let mut w = ctx.create(&format!("theorem{theorem}.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    ctx.write_text(&format!("theorem{theorem}.json"), &report.to_json()?)?;
    println!("theorem {theorem} ({}): {}", quantity.name(), verdict(report.pass));
    for n in &report.notes {
        println!("    {n}");
    }
    Ok(report.pass)
}

pub fn dump_transform(ctx: &Workspace, b: f64) -> Result<()> {
    let model = ctx.cfg.family()?.at(b);
    let table = build_f(&model, &ctx.cfg.transform()?)?;
    let phi = build_phi(&table, &model).ok();
    let mut w = ctx.create(&format!("transform_b{b}.csv"))?;
    writeln!(w, "# config_sha256={}", ctx.hash)?;
    table.write_csv(phi.as_ref(), &mut w)?;
    w.flush()?;
    println!("wrote {} rows to {}", table.len(), path(&ctx.out, &format!("transform_b{b}.csv")));
    Ok(())
}

pub fn simulate(ctx: &Workspace, b: f64) -> Result<()> {
    let model = ctx.cfg.family()?.at(b);
    let ens = simulate_ensemble(&model, &ctx.cfg.sim()?)?;
    let mut w = ctx.create(&format!("paths_b{b}.csv"))?;
    writeln!(w, "# config_sha256={}", ctx.hash)?;
    ens.write_csv(&mut w)?;
    w.flush()?;
    println!(
        "{} paths x {} steps, {} exited",
        ens.paths.len(),
        ens.n_steps(),
        ens.exit_count()
    );
    Ok(())
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "FAIL"
    }
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}
