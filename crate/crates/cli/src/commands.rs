use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use fmgrid::backend::{sample_binary, MockBackend, MockSpec, ResponseCache, SharedBackend};
use fmgrid::eval::{
    self, compare_auc, model_location_sampler, probe_fidelity, run_pretrained, run_scratch, test_binary_distribution,
    test_location_distribution, BinaryRow, CurveSet, DistributionReport, EvalError, Phase, WorldFactory,
};
use fmgrid::fa::{self, fa_benchmark, scripts, FaConfig, SummaryRow};
use fmgrid::fwm::{FoundationWorldModel, FwmConfig};
use fmgrid::prompt::{Strategy, TemplateId, TemplateSet};
use fmgrid::seed::derive_seed;
use fmgrid::{Action, GridConfig, GridEnv, World};
use serde::{Deserialize, Serialize};

use crate::backends::BackendFactory;
use crate::config::{ExperimentConfig, RewardSetting, SamplerSource, Script, Setting, TrainMode};

/// A loaded experiment with command-line overrides applied.
pub struct Run {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub cache: Option<Arc<ResponseCache>>,
    pub templates: TemplateSet,
}

/// Jobs attempted and the ones that failed.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct Outcome {
    pub jobs: usize,
    pub failures: Vec<String>,
}

impl Outcome {
    fn record<T, E: std::fmt::Display>(&mut self, label: impl std::fmt::Display, r: Result<T, E>) -> Option<T> {
        self.jobs += 1;
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.failures.push(format!("{label}: {e}"));
                None
            }
        }
    }
}

/// Written to every run directory; `report` uses it to find runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub command: String,
    pub name: String,
    pub seed: u64,
    pub n: i32,
    pub setting: Setting,
}

pub const META_FILE: &str = "run.json";

impl Run {
    pub fn new(config: ExperimentConfig, out: Option<PathBuf>, cache: Option<PathBuf>, seed: Option<u64>) -> Result<Self> {
        let out = out
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| Path::new("runs").join(&config.name));
        let cache = match cache.or_else(|| config.cache.clone()) {
            Some(p) => Some(Arc::new(
                ResponseCache::open(&p).with_context(|| format!("opening cache {}", p.display()))?,
            )),
            None => None,
        };
        Ok(Run {
            seed: seed.unwrap_or(config.seed),
            config,
            out,
            cache,
            templates: TemplateSet::default(),
        })
    }

    fn factory(&self, backend: Option<&crate::config::BackendConfig>) -> Result<BackendFactory> {
        let b = backend.context("config has no [backend] table")?;
        BackendFactory::new(b, self.cache.clone())
    }

    fn begin(&self, command: &str) -> Result<()> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let meta = RunMeta {
            command: command.into(),
            name: self.config.name.clone(),
            seed: self.seed,
            n: self.config.grid.n,
            setting: self.config.grid.setting,
        };
        self.write(META_FILE, serde_json::to_string_pretty(&meta)? + "\n")
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    fn write_with(&self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, buf)
    }

    fn finish(&self, outcome: Outcome) -> Result<Outcome> {
        self.write("status.json", serde_json::to_string_pretty(&outcome)? + "\n")?;
        Ok(outcome)
    }
}

/// File-name-safe form of a template or strategy label.
fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

pub fn fidelity(run: &Run) -> Result<Outcome> {
    let section = run.config.fidelity.as_ref().context("config has no [fidelity] table")?;
    let factory = run.factory(run.config.backend.as_ref())?;
    let grid = run.config.grid.config();
    run.begin("fidelity")?;
    let mut outcome = Outcome::default();
    let mut reports = Vec::new();
    for (i, &template) in section.templates.iter().enumerate() {
        let result = factory.build(derive_seed(run.seed, "fidelity", i as u64)).and_then(|backend| {
            let fwm = FoundationWorldModel::new(FwmConfig::new(grid.clone(), template), backend)?;
            Ok(probe_fidelity(&fwm)?)
        });
        if let Some(r) = outcome.record(template, result) {
            reports.push(r);
        }
    }
    run.write_with("accuracy.csv", |b| eval::write_accuracy_csv(&reports, b))?;
    run.write("probes.json", serde_json::to_string_pretty(&reports)? + "\n")?;
    for r in &reports {
        let name = slug(r.template.name());
        run.write_with(&format!("ledger_{name}.csv"), |b| r.write_ledger_csv(b))?;
        run.write_with(&format!("errors_{name}.csv"), |b| r.write_errors_csv(b))?;
        run.write(&format!("heatmap_{name}.svg"), eval::svg::probe_heatmap(r))?;
    }
    run.finish(outcome)
}

pub fn distribution(run: &Run) -> Result<Outcome> {
    let section = run.config.distribution.as_ref().context("config has no [distribution] table")?;
    let factory = match section.source {
        SamplerSource::Backend => Some(run.factory(run.config.backend.as_ref())?),
        SamplerSource::Environment => None,
    };
    let n = run.config.grid.n;
    run.begin("distribution")?;
    let mut outcome = Outcome::default();
    let mut reports: Vec<DistributionReport> = Vec::new();
    let mut rows = Vec::new();

    if section.location {
        let seed = derive_seed(run.seed, "location", 0);
        let result = match &factory {
            Some(f) => f.build(seed).and_then(|backend| {
                let sampler = model_location_sampler(&*backend, &run.templates, n, section.max_retries)?;
                Ok(test_location_distribution(sampler, n, section.support(), section.samples, section.alpha)?)
            }),
            None => {
                let grid = GridConfig::stochastic(n);
                let mut k = 0;
                let sampler = || {
                    k += 1;
                    let (state, _) = fmgrid::grid::reset(&grid, derive_seed(seed, "draw", k)).map_err(fmgrid::WorldError::from)?;
                    Ok(state.reward)
                };
                test_location_distribution(sampler, n, section.support(), section.samples, section.alpha).map_err(Into::into)
            }
        };
        if let Some(r) = outcome.record("location", result) {
            if let Some(svg) = eval::svg::density_heatmap(&r) {
                run.write("density.svg", svg)?;
            }
            reports.push(r);
        }
    }
    if let Some(f) = &factory {
        for (i, &p1) in section.binary.iter().enumerate() {
            let result = f.build(derive_seed(run.seed, "binary", i as u64)).and_then(|backend| {
                let sampler = || sample_binary(&*backend, &run.templates, p1, section.max_retries).map_err(EvalError::from);
                Ok(test_binary_distribution(sampler, p1, section.samples, section.alpha)?)
            });
            if let Some(r) = outcome.record(format!("binary p1={p1}"), result) {
                rows.extend(BinaryRow::from_report(f.label(), &r));
                reports.push(r);
            }
        }
    }
    run.write_with("distribution.csv", |b| eval::dist::write_distribution_csv(&reports, b))?;
    run.write("distribution.json", serde_json::to_string_pretty(&reports)? + "\n")?;
    if !section.binary.is_empty() {
        if section.reference_rows {
            rows.extend(eval::reference_rows());
        }
        run.write_with("binary_sweep.csv", |b| eval::dist::write_binary_csv(&rows, b))?;
    }
    run.finish(outcome)
}

struct TrainWorlds {
    grid: GridConfig,
    template: TemplateId,
    model: Option<BackendFactory>,
    rewards: Option<BackendFactory>,
}

impl WorldFactory for TrainWorlds {
    fn true_world(&self) -> Box<dyn World> {
        Box::new(GridEnv::new(self.grid.clone()).expect("grid validated with the config"))
    }

    fn model_world(&self, seed: u64) -> Result<Box<dyn World>, String> {
        let build = || -> Result<Box<dyn World>> {
            let model = self.model.as_ref().context("no world-model backend")?;
            let config = FwmConfig::new(self.grid.clone(), self.template);
            let fwm = match &self.rewards {
                Some(r) => FoundationWorldModel::with_reward_backend(config, model.build(seed)?, r.build(seed)?)?,
                None => FoundationWorldModel::new(config, model.build(seed)?)?,
            };
            Ok(Box::new(fwm))
        };
        build().map_err(|e| format!("{e:#}"))
    }
}

#[derive(Serialize)]
struct TrainSummary {
    seeds: Vec<u64>,
    final_success: Vec<(Phase, Option<f64>)>,
    auc: Vec<(Phase, f64)>,
    finetune_vs_scratch: Vec<eval::AucComparison>,
}

pub fn train(run: &Run) -> Result<Outcome> {
    let section = run.config.train.as_ref().context("config has no [train] table")?;
    let rewards = match &section.reward_backend {
        Some(b) => Some(BackendFactory::new(b, run.cache.clone())?),
        None => None,
    };
    let model = if section.needs_model() { Some(run.factory(run.config.backend.as_ref())?) } else { None };
    let worlds = TrainWorlds { grid: run.config.grid.config(), template: section.template, model, rewards };
    run.begin("train")?;
    let seeds: Vec<u64> = (0..section.seeds as u64).map(|i| derive_seed(run.seed, "train", i)).collect();
    let cfg = section.train_config();
    let mut set = CurveSet::default();
    if section.mode != TrainMode::Scratch {
        let pre = run_pretrained(&section.pretrain_config(), &cfg, &seeds, &worlds);
        set.phases.extend(pre.phases);
        set.failures.extend(pre.failures);
    }
    if section.mode != TrainMode::Pretrained {
        let scratch = run_scratch(&cfg, &seeds, &worlds);
        set.phases.extend(scratch.phases);
        set.failures.extend(scratch.failures);
    }
    let mut outcome = Outcome { jobs: seeds.len() * if section.mode == TrainMode::Both { 2 } else { 1 }, failures: vec![] };
    outcome.failures = set.failures.iter().map(|(p, s, e)| format!("{p} seed {s}: {e}")).collect();

    run.write_with("curves.csv", |b| set.write_csv(b))?;
    run.write("curves.svg", eval::svg::learning_curves(&set, &[]))?;
    let comparison = match (set.curve(Phase::Finetune), set.curve(Phase::Scratch)) {
        (Some(f), Some(s)) => compare_auc(f, s),
        _ => vec![],
    };
    let summary = TrainSummary {
        seeds,
        final_success: set.phases.iter().map(|(p, c)| (*p, c.final_success())).collect(),
        auc: set.phases.iter().map(|(p, c)| (*p, c.auc())).collect(),
        finetune_vs_scratch: comparison,
    };
    run.write("summary.json", serde_json::to_string_pretty(&summary)? + "\n")?;
    run.finish(outcome)
}

fn script_actions(script: Script, n: i32) -> Vec<Action> {
    match script {
        Script::Optimal => scripts::optimal(n),
        Script::Sweep => scripts::boustrophedon(n),
        Script::AlwaysUp => vec![Action::Up],
        Script::AlwaysLeft => vec![Action::Left],
    }
}

fn script_label(script: Script) -> &'static str {
    match script {
        Script::Optimal => "scripted-optimal",
        Script::Sweep => "scripted-sweep",
        Script::AlwaysUp => "scripted-always-up",
        Script::AlwaysLeft => "scripted-always-left",
    }
}

#[derive(Serialize)]
struct FaEntry {
    strategy: Strategy,
    setting: RewardSetting,
    episodes: usize,
    success_rate: f64,
    mean_steps: f64,
    faults: u32,
    errors: usize,
}

pub fn fa(run: &Run) -> Result<Outcome> {
    let section = run.config.fa.as_ref().context("config has no [fa] table")?;
    let factory = match section.script {
        Some(_) => None,
        None => Some(run.factory(run.config.backend.as_ref())?),
    };
    let model = match (&section.model, section.script, &factory) {
        (Some(m), _, _) => m.clone(),
        (None, Some(s), _) => script_label(s).to_string(),
        (None, None, Some(f)) => f.label(),
        (None, None, None) => unreachable!("validated: fa needs a backend or a script"),
    };
    if let Some(f) = &factory {
        f.build(0)?;
    }
    let n = run.config.grid.n;
    run.begin("fa")?;
    let mut outcome = Outcome::default();
    let mut rows: Vec<SummaryRow> = section
        .strategies
        .iter()
        .map(|&strategy| SummaryRow { model: model.clone(), strategy, fixed_percent: None, random_percent: None })
        .collect();
    let mut entries = Vec::new();
    for (si, &setting) in section.settings.iter().enumerate() {
        let base = match setting {
            RewardSetting::Fixed => GridConfig::deterministic(n),
            RewardSetting::Random => GridConfig::stochastic(n),
        };
        let grid = match run.config.grid.max_steps {
            Some(m) => base.with_max_steps(m),
            None => base,
        };
        let episode_seed = derive_seed(run.seed, "fa", si as u64);
        for (row, &strategy) in rows.iter_mut().zip(&section.strategies) {
            let config = FaConfig {
                max_memory_lines: section.max_memory_lines,
                fallback: section.fallback,
                ..FaConfig::new(strategy)
            };
            let backend_for = |seed: u64| -> SharedBackend {
                match (section.script, &factory) {
                    (Some(s), _) => {
                        let spec = MockSpec::scripted(scripts::responses(&script_actions(s, n), strategy.has_plan()));
                        Arc::new(MockBackend::new(spec, seed).expect("scripts are non-empty"))
                    }
                    (None, Some(f)) => f.build(seed).expect("backend built once above"),
                    (None, None) => unreachable!(),
                }
            };
            let world_for = || Box::new(GridEnv::new(grid.clone()).expect("grid validated")) as Box<dyn World>;
            let result = fa_benchmark(&config, &run.templates, backend_for, world_for, section.episodes, episode_seed);
            let label = format!("{strategy}_{}", slug(&format!("{setting:?}").to_lowercase()));
            run.write_with(&format!("episodes_{label}.jsonl"), |b| fa::write_records(&result.records, b))?;
            for r in &result.records {
                outcome.record(
                    format!("{label} episode {}", r.episode),
                    r.error.as_ref().map_or(Ok(()), |e| Err(e.clone())),
                );
            }
            match setting {
                RewardSetting::Fixed => row.fixed_percent = Some(result.success_percent()),
                RewardSetting::Random => row.random_percent = Some(result.success_percent()),
            }
            entries.push(FaEntry {
                strategy,
                setting,
                episodes: result.episodes,
                success_rate: result.success_rate,
                mean_steps: result.mean_steps,
                faults: result.faults,
                errors: result.errors,
            });
        }
    }
    run.write_with("fa_summary.csv", |b| fa::write_summary_csv(&rows, b))?;
    run.write("fa_summary.json", serde_json::to_string_pretty(&entries)? + "\n")?;
    run.finish(outcome)
}

/// Run directories under `root` (including `root`), sorted, skipping `exclude`.
fn find_runs(root: &Path, exclude: &Path, depth: usize, found: &mut Vec<PathBuf>) -> Result<()> {
    if root == exclude {
        return Ok(());
    }
    if root.join(META_FILE).is_file() {
        found.push(root.to_path_buf());
    }
    if depth == 0 {
        return Ok(());
    }
    let mut children: Vec<PathBuf> = std::fs::read_dir(root)
        .with_context(|| format!("reading {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    for c in children {
        find_runs(&c, exclude, depth - 1, found)?;
    }
    Ok(())
}

/// Appends `text` (a CSV with header) to `combined`, prefixing every row with `run`.
fn merge_csv(combined: &mut String, run: &str, text: &str) {
    let mut lines = text.lines();
    let Some(header) = lines.next() else { return };
    if combined.is_empty() {
        combined.push_str(&format!("run,{header}\n"));
    }
    for l in lines {
        combined.push_str(&format!("{run},{l}\n"));
    }
}

pub fn report(run_dir: &Path, out: Option<PathBuf>) -> Result<usize> {
    if !run_dir.is_dir() {
        bail!("{} is not a directory", run_dir.display());
    }
    let out = out.unwrap_or_else(|| run_dir.join("report"));
    let mut runs = Vec::new();
    find_runs(run_dir, &out, 4, &mut runs)?;
    if runs.is_empty() {
        bail!("no runs found in {}", run_dir.display());
    }
    let mut metas = Vec::new();
    for dir in &runs {
        let text = std::fs::read_to_string(dir.join(META_FILE))?;
        let meta: RunMeta = serde_json::from_str(&text).with_context(|| format!("reading {}", dir.join(META_FILE).display()))?;
        let rel = dir.strip_prefix(run_dir).unwrap_or(dir).to_string_lossy().replace(',', "_");
        metas.push((if rel.is_empty() { ".".to_string() } else { rel }, dir.clone(), meta));
    }

    let mut combined: Vec<(&str, String)> = ["accuracy.csv", "distribution.csv", "binary_sweep.csv", "curves.csv", "fa_summary.csv"]
        .iter()
        .map(|n| (*n, String::new()))
        .collect();
    let mut fa_rows: Vec<(String, Strategy, Option<f64>, Option<f64>)> = Vec::new();
    for (rel, dir, _) in &metas {
        for (name, acc) in combined.iter_mut() {
            if let Ok(text) = std::fs::read_to_string(dir.join(name)) {
                merge_csv(acc, rel, &text);
            }
        }
        if let Ok(text) = std::fs::read_to_string(dir.join("fa_summary.csv")) {
            for line in text.lines().skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                let Some(strategy) = Strategy::ALL.into_iter().find(|s| s.short_name() == f.get(1).copied().unwrap_or("")) else {
                    continue;
                };
                let pct = |i: usize| f.get(i).and_then(|v| v.parse::<f64>().ok());
                fa_rows.push((f[0].to_string(), strategy, pct(2), pct(3)));
            }
        }
    }
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for (name, text) in &combined {
        if !text.is_empty() {
            std::fs::write(out.join(name), text)?;
        }
    }
    for (rel, dir, meta) in &metas {
        if meta.command != "train" {
            continue;
        }
        let set = CurveSet::read_csv(&std::fs::read_to_string(dir.join("curves.csv"))?)
            .map_err(anyhow::Error::msg)
            .with_context(|| format!("reading curves of {rel}"))?;
        let bars: Vec<(String, f64)> = fa_rows
            .iter()
            .filter_map(|(model, s, fixed, random)| {
                let v = match meta.setting {
                    Setting::Deterministic => *fixed,
                    Setting::Stochastic => *random,
                }?;
                Some((format!("{model} {s}"), v / 100.0))
            })
            .collect();
        std::fs::write(out.join(format!("curves_{}.svg", slug(rel))), eval::svg::learning_curves(&set, &bars))?;
    }
    let index: Vec<_> = metas.iter().map(|(rel, _, m)| serde_json::json!({ "run": rel, "meta": m })).collect();
    std::fs::write(out.join("index.json"), serde_json::to_string_pretty(&index)? + "\n")?;
    Ok(metas.len())
}
