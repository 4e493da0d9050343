//! Batch runner over scenarios, variants, prediction modes and config overrides.

use crate::baselines::{PlannerFlags, PlannerVariant};
use crate::config::{ConfigError, PlannerConfig};
use crate::scenario::{Scenario, ScenarioError};
use crate::simloop::{compute_metrics, run_closed_loop, MetricsReport, NoiseSpec, SimLog, SimOptions};
use rayon::prelude::*;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

pub const CSV_HEADER: [&str; 10] = ["scenario", "variant", "pred_k", "overrides", "DIST", "FR", "JERK", "RC", "CT", "RCT"];

/// One `key=value` config override set; empty means defaults.
pub type Overrides = Vec<(String, String)>;

pub fn overrides_label(o: &Overrides) -> String {
    if o.is_empty() {
        "-".to_string()
    } else {
        o.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub scenarios: Vec<(String, Scenario)>,
    pub variants: Vec<PlannerVariant>,
    pub pred_ks: Vec<usize>,
    pub override_sets: Vec<Overrides>,
    /// Replaces each variant's default flags when set.
    pub rp: Option<bool>,
    pub ird: Option<bool>,
    pub seed: u64,
    pub noise: NoiseSpec,
    pub base_config: PlannerConfig,
}

impl ExperimentPlan {
    pub fn new(scenarios: Vec<(String, Scenario)>, variants: Vec<PlannerVariant>) -> Self {
        Self {
            scenarios,
            variants,
            pred_ks: vec![1],
            override_sets: vec![Vec::new()],
            rp: None,
            ird: None,
            seed: 0,
            noise: NoiseSpec::default(),
            base_config: PlannerConfig::default(),
        }
    }

    fn flags(&self, v: PlannerVariant) -> PlannerFlags {
        let d = v.default_flags();
        PlannerFlags {
            rp: self.rp.unwrap_or(d.rp),
            ird: self.ird.unwrap_or(d.ird),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub scenario: String,
    pub variant: PlannerVariant,
    pub pred_k: usize,
    pub overrides: Overrides,
    pub outcome: Result<SimLog, String>,
}

impl RunRecord {
    pub fn metrics(&self) -> Option<MetricsReport> {
        self.outcome.as_ref().ok().map(|l| compute_metrics(std::slice::from_ref(l)))
    }

    /// Stable file stem for this run's log and plots.
    pub fn stem(&self, override_index: usize) -> String {
        format!("{}__{}__k{}__o{}", self.scenario.replace('/', "_"), self.variant, self.pred_k, override_index)
    }
}

/// Applies overrides to `base`.
pub fn apply_overrides(base: &PlannerConfig, o: &Overrides) -> Result<PlannerConfig, ConfigError> {
    let mut cfg = base.clone();
    for (k, v) in o {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

/// Runs the cross product in parallel. Output order is scenario, variant,
/// pred_k, override set regardless of scheduling.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Vec<RunRecord>, ConfigError> {
    let configs: Vec<PlannerConfig> = plan
        .override_sets
        .iter()
        .map(|o| apply_overrides(&plan.base_config, o))
        .collect::<Result<_, _>>()?;
    let mut scen: Vec<usize> = (0..plan.scenarios.len()).collect();
    scen.sort_by(|&a, &b| plan.scenarios[a].0.cmp(&plan.scenarios[b].0));
    let mut variants = plan.variants.clone();
    variants.sort();
    variants.dedup();
    let mut jobs = Vec::new();
    for &si in &scen {
        for &v in &variants {
            for &k in &plan.pred_ks {
                for oi in 0..configs.len() {
                    jobs.push((si, v, k, oi));
                }
            }
        }
    }
    Ok(jobs
        .par_iter()
        .map(|&(si, variant, k, oi)| {
            let (name, scenario) = &plan.scenarios[si];
            let mut opts = SimOptions::new(variant, k, plan.seed);
            opts.flags = plan.flags(variant);
            opts.noise = plan.noise;
            let cfg = &configs[oi];
            let outcome = catch_unwind(AssertUnwindSafe(|| run_closed_loop(scenario, name, &opts, cfg))).map_err(|e| {
                e.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "simulation panicked".to_string())
            });
            RunRecord {
                scenario: name.clone(),
                variant,
                pred_k: k,
                overrides: plan.override_sets[oi].clone(),
                outcome,
            }
        })
        .collect())
}

fn fmt4(x: f64) -> String {
    let s = format!("{x:.4}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

/// `metrics.csv` bytes: one row per run; failed runs carry `failed` metrics.
pub fn metrics_csv(records: &[RunRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory csv");
    for r in records {
        let head = [r.scenario.clone(), r.variant.to_string(), r.pred_k.to_string(), overrides_label(&r.overrides)];
        let tail: Vec<String> = match r.metrics() {
            Some(m) => vec![fmt4(m.dist), fmt4(m.fr), fmt4(m.jerk), fmt4(m.rc), m.ct.to_string(), m.rct.to_string()],
            None => vec!["failed".to_string(); 6],
        };
        w.write_record(head.iter().chain(tail.iter())).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
}

/// Pooled metrics of the successful runs matching `pred`.
pub fn pooled(records: &[RunRecord], pred: impl Fn(&RunRecord) -> bool) -> MetricsReport {
    let logs: Vec<SimLog> = records
        .iter()
        .filter(|r| pred(r))
        .filter_map(|r| r.outcome.as_ref().ok().cloned())
        .collect();
    compute_metrics(&logs)
}

/// Loads every `*.json` under `dir` recursively, named by relative path without extension.
pub fn load_scenario_dir(dir: &Path) -> Result<Vec<(String, Scenario)>, ScenarioError> {
    let mut files = Vec::new();
    collect_json(dir, &mut files).map_err(|source| ScenarioError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    files.sort();
    files
        .into_iter()
        .map(|f| {
            let rel = if dir.is_file() {
                PathBuf::from(f.file_stem().unwrap_or_default())
            } else {
                f.strip_prefix(dir).unwrap_or(&f).with_extension("")
            };
            let name = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Scenario::load(&f).map(|s| (name, s))
        })
        .collect()
}

fn collect_json(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if dir.is_file() {
        out.push(dir.to_path_buf());
        return Ok(());
    }
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_json(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "json") {
            out.push(p);
        }
    }
    Ok(())
}
