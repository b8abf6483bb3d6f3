//! Subcommand implementations behind the `collab-har` binary.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::config::{DatasetKind, RunConfig};
use crate::data::cache::{load_cache, write_cache, CacheStatus, WindowCache};
use crate::data::{
    clean, load_harth, load_pamap2, make_windows, rotated_profile, split_train_test,
    synthesize_network_data, synthesize_windows, AgentDataset, ClassMap, SubjectSeries,
    SyntheticConfig,
};
use crate::error::{Error, Result};
use crate::eval::{
    read_results_csv, run_plan, summarize, summarize_points, write_final_table_csv,
    write_results_csv, write_summary_csv, ExperimentPlan, Mode, ResultRow, RunMeta, Scope,
    TrainingSettings,
};
use crate::nn::SensorWindow;
use crate::seed::derive_seed;

/// Process exit status for an error: 1 configuration, 2 data, 3 runtime.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_config_error() {
        1
    } else if e.is_data_error() || matches!(e, Error::Compare(_)) {
        2
    } else {
        3
    }
}

#[derive(Debug)]
pub enum PrepareOutcome {
    /// A valid cache already existed; nothing was rebuilt.
    Hit,
    Built,
    /// An existing cache was invalid and has been rebuilt.
    Rebuilt(String),
}

fn data_root(cfg: &RunConfig) -> Result<PathBuf> {
    let root = cfg.data_root().ok_or_else(|| {
        Error::Ingestion(format!(
            "no dataset directory for {}: set `data_dir` in the config, pass --data-dir, or export {}",
            cfg.dataset,
            crate::config::DATA_ROOT_ENV
        ))
    })?;
    if !root.is_dir() {
        return Err(Error::Ingestion(format!(
            "dataset directory {} does not exist",
            root.display()
        )));
    }
    Ok(root)
}

fn load_subjects(cfg: &RunConfig, root: &Path, ids: &[u32]) -> Result<Vec<SubjectSeries>> {
    let activities = cfg.resolved_activities();
    let raw = match cfg.dataset {
        DatasetKind::Pamap2 => load_pamap2(root, ids, &cfg.resolved_pamap2_columns(), &activities)?,
        DatasetKind::Harth => load_harth(root, ids, &activities)?,
        DatasetKind::Synthetic => unreachable!("synthetic data is generated, not loaded"),
    };
    raw.iter().map(clean).collect()
}

fn windows_of(
    cfg: &RunConfig,
    series: &[SubjectSeries],
    class_map: &ClassMap,
) -> Vec<Vec<SensorWindow>> {
    series
        .iter()
        .map(|s| make_windows(s, cfg.window_length, cfg.stride(), class_map))
        .collect()
}

/// Runs load → clean → window → split for the configured dataset.
pub fn build_windows(cfg: &RunConfig) -> Result<WindowCache> {
    let arch = cfg.arch()?;
    let class_map = ClassMap::from_activities(cfg.resolved_activities());
    let (agents, global_test) = match cfg.dataset {
        DatasetKind::Synthetic => {
            let s = &cfg.synthetic;
            let synth = SyntheticConfig {
                num_classes: s.classes,
                channels: s.channels,
                window_length: cfg.window_length,
                profile: rotated_profile(
                    s.agents,
                    s.classes,
                    s.classes_per_agent,
                    s.windows_per_class,
                ),
                noise_level: s.noise,
                train_ratio: (cfg.scope == Scope::Local).then_some(cfg.split_ratio),
                seed: cfg.seed,
            };
            let agents = synthesize_network_data(&synth).map_err(|e| Error::Plan(e.to_string()))?;
            let global_test = match cfg.scope {
                Scope::Global => synthesize_windows(
                    &vec![s.test_windows_per_class; s.classes],
                    s.channels,
                    cfg.window_length,
                    s.noise,
                    s.agents as u32,
                    derive_seed(cfg.seed, "synthetic-test", 0),
                ),
                Scope::Local => Vec::new(),
            };
            (agents, global_test)
        }
        DatasetKind::Pamap2 | DatasetKind::Harth => {
            let root = data_root(cfg)?;
            let train_ids = cfg.resolved_train_subjects();
            let series = load_subjects(cfg, &root, &train_ids)?;
            let per_subject = windows_of(cfg, &series, &class_map);
            let mut agents = Vec::with_capacity(per_subject.len());
            for (i, windows) in per_subject.into_iter().enumerate() {
                info!("subject {}: {} windows", train_ids[i], windows.len());
                let (train, test) = match cfg.scope {
                    Scope::Global => (windows, Vec::new()),
                    Scope::Local => split_train_test(
                        &windows,
                        cfg.split_ratio,
                        derive_seed(cfg.seed, "split", i as u64),
                    )?,
                };
                agents.push(AgentDataset {
                    agent_id: i,
                    train,
                    test,
                    class_map: class_map.clone(),
                });
            }
            let global_test = match cfg.scope {
                Scope::Global => {
                    let test = load_subjects(cfg, &root, &cfg.resolved_test_subjects())?;
                    windows_of(cfg, &test, &class_map).concat()
                }
                Scope::Local => Vec::new(),
            };
            (agents, global_test)
        }
    };
    Ok(WindowCache {
        key: cfg.cache_key(),
        input_channels: arch.input_channels,
        window_length: cfg.window_length,
        class_map,
        agents,
        global_test,
    })
}

/// Builds the window cache unless a valid one already exists.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<(PrepareOutcome, WindowCache)> {
    cfg.validate()?;
    let dir = cfg.cache_dir().join(cfg.dataset.to_string());
    let reason = match load_cache(&dir, &cfg.cache_key())? {
        CacheStatus::Hit(cache) => {
            info!("window cache hit at {}", dir.display());
            return Ok((PrepareOutcome::Hit, cache));
        }
        CacheStatus::Missing => None,
        CacheStatus::Stale(msg) => {
            warn!("window cache at {} invalidated: {msg}", dir.display());
            Some(msg)
        }
    };
    let cache = build_windows(cfg)?;
    write_cache(&dir, &cache)?;
    info!(
        "window cache written to {} ({} agents, {} held-out windows)",
        dir.display(),
        cache.agents.len(),
        cache.global_test.len()
    );
    let outcome = match reason {
        Some(msg) => PrepareOutcome::Rebuilt(msg),
        None => PrepareOutcome::Built,
    };
    Ok((outcome, cache))
}

/// Files written by one run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub final_table: PathBuf,
    pub round_log: PathBuf,
    pub checkpoints: PathBuf,
    pub config: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Runs the configured harness and writes its artifacts into
/// `output_dir`. File names embed the config hash. A `RUNNING_<hash>`
/// marker exists while a run is in progress, so artifacts next to a
/// leftover marker are from an interrupted run.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let hash = cfg.hash();
    let out = &cfg.output_dir;
    fs::create_dir_all(out)?;
    let marker = out.join(format!("RUNNING_{hash}"));
    if marker.exists() {
        warn!("artifacts for config {hash} are stale from an interrupted run and will be replaced");
    }
    fs::write(&marker, cfg.canonical())?;

    let (_, cache) = cmd_prepare(cfg)?;
    let plan = ExperimentPlan {
        experiment_id: cfg.experiment_id.clone(),
        dataset: cfg.dataset.to_string(),
        agents: cache.agents,
        global_test: cache.global_test,
        test_subjects: cfg.resolved_test_subjects(),
        settings: TrainingSettings {
            arch: cfg.arch()?,
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            adam: cfg.adam,
            topology: cfg.topology,
            include_self: cfg.include_self,
            reset_adam_on_aggregate: cfg.reset_adam_on_aggregate,
            standardize: cfg.standardize,
            workers: cfg.workers,
            seed: cfg.seed,
        },
    };
    info!(
        "running {} {} on {} with {} agents, {} epochs",
        cfg.mode,
        cfg.scope,
        cfg.dataset,
        plan.agents.len(),
        cfg.epochs
    );
    let result = run_plan(&plan, cfg.mode, cfg.scope)?;
    let meta = RunMeta {
        experiment_id: cfg.experiment_id.clone(),
        dataset: cfg.dataset.to_string(),
        mode: cfg.mode,
        scope: cfg.scope,
    };

    let artifacts = RunArtifacts {
        results: out.join(format!("results_{hash}.csv")),
        summary: out.join(format!("summary_{hash}.csv")),
        final_table: out.join(format!("final_{hash}.csv")),
        round_log: out.join(format!("roundlog_{hash}.csv")),
        checkpoints: out.join(format!("checkpoints_{hash}")),
        config: out.join(format!("config_{hash}.txt")),
    };
    write_results_csv(create(&artifacts.results)?, &meta, &result.records)?;
    let summary = summarize(&result.records)?;
    write_summary_csv(create(&artifacts.summary)?, &meta, &summary)?;
    write_final_table_csv(create(&artifacts.final_table)?, &summary)?;
    result.log.write_csv(create(&artifacts.round_log)?)?;
    fs::create_dir_all(&artifacts.checkpoints)?;
    for a in &result.agents {
        fs::write(
            artifacts
                .checkpoints
                .join(format!("agent_{}.ckpt", a.agent_id)),
            a.checkpoint(),
        )?;
    }
    fs::write(&artifacts.config, cfg.canonical())?;
    fs::remove_file(&marker)?;
    info!(
        "final network-average macro-F1 {:.4} at epoch {}",
        summary.final_average(),
        summary.final_epoch
    );
    Ok(artifacts)
}

/// Per-epoch network averages of several runs side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub dataset: String,
    pub scope: Scope,
    pub curves: BTreeMap<Mode, Vec<(u64, f64)>>,
}

impl Comparison {
    fn value(&self, mode: Mode, epoch: u64) -> Option<f64> {
        self.curves
            .get(&mode)?
            .iter()
            .find(|(e, _)| *e == epoch)
            .map(|p| p.1)
    }

    pub fn epochs(&self) -> Vec<u64> {
        let mut e: Vec<u64> = self.curves.values().flatten().map(|p| p.0).collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// `(collab − isolated) / isolated` at `epoch`, if both runs are present.
    pub fn relative_improvement(&self, epoch: u64) -> Option<f64> {
        let c = self.value(Mode::Collab, epoch)?;
        let i = self.value(Mode::Isolated, epoch)?;
        Some((c - i) / i)
    }

    /// `epoch,<mode>...[,relative_improvement]`.
    pub fn write_table<W: std::io::Write>(&self, w: W) -> Result<()> {
        let modes: Vec<Mode> = self.curves.keys().copied().collect();
        let with_rel =
            self.curves.contains_key(&Mode::Collab) && self.curves.contains_key(&Mode::Isolated);
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["epoch".to_string()];
        header.extend(modes.iter().map(Mode::to_string));
        if with_rel {
            header.push("relative_improvement".into());
        }
        wr.write_record(&header)?;
        for epoch in self.epochs() {
            let mut row = vec![epoch.to_string()];
            row.extend(modes.iter().map(|&m| {
                self.value(m, epoch)
                    .map(|v| v.to_string())
                    .unwrap_or_default()
            }));
            if with_rel {
                row.push(
                    self.relative_improvement(epoch)
                        .map(|v| v.to_string())
                        .unwrap_or_default(),
                );
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Long format: `dataset,scope,mode,epoch,avg_macro_f1`.
    pub fn write_long<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["dataset", "scope", "mode", "epoch", "avg_macro_f1"])?;
        for (mode, curve) in &self.curves {
            for (epoch, v) in curve {
                wr.write_record([
                    self.dataset.clone(),
                    self.scope.to_string(),
                    mode.to_string(),
                    epoch.to_string(),
                    v.to_string(),
                ])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

fn results_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = fs::read_dir(path).map_err(|e| {
        Error::Compare(format!("cannot read run directory {}: {e}", path.display()))
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("results_") && name.ends_with(".csv")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Compare(format!(
            "no results_*.csv in {}",
            path.display()
        )));
    }
    Ok(files)
}

/// Joins the results of several runs of one dataset and scope.
pub fn compare_runs(paths: &[PathBuf]) -> Result<Comparison> {
    let mut rows: Vec<ResultRow> = Vec::new();
    for p in paths {
        for f in results_files(p)? {
            rows.extend(read_results_csv(File::open(&f)?)?);
        }
    }
    let first = rows
        .first()
        .ok_or_else(|| Error::Compare("no result rows to compare".into()))?;
    let (dataset, scope) = (first.dataset.clone(), first.scope);
    if let Some(r) = rows.iter().find(|r| r.dataset != dataset) {
        return Err(Error::Compare(format!(
            "runs mix datasets `{dataset}` and `{}`",
            r.dataset
        )));
    }
    if let Some(r) = rows.iter().find(|r| r.scope != scope) {
        return Err(Error::Compare(format!(
            "runs mix scopes {scope} and {}",
            r.scope
        )));
    }
    let mut by_mode: BTreeMap<Mode, Vec<&ResultRow>> = BTreeMap::new();
    let mut ids: BTreeMap<Mode, &str> = BTreeMap::new();
    for r in &rows {
        if let Some(prev) = ids.insert(r.mode, &r.experiment_id) {
            if prev != r.experiment_id {
                return Err(Error::Compare(format!(
                    "two {} runs given (`{prev}` and `{}`)",
                    r.mode, r.experiment_id
                )));
            }
        }
        by_mode.entry(r.mode).or_default().push(r);
    }
    let mut curves = BTreeMap::new();
    for (mode, rs) in by_mode {
        let s = summarize_points(rs.iter().map(|r| (r.agent_id, r.epoch, r.macro_f1)))?;
        curves.insert(mode, s.curve.iter().map(|&(e, v, _)| (e, v)).collect());
    }
    Ok(Comparison {
        dataset,
        scope,
        curves,
    })
}

/// Writes `comparison.csv` and `curves_long.csv` into `out_dir`.
pub fn cmd_compare(paths: &[PathBuf], out_dir: &Path) -> Result<Comparison> {
    let cmp = compare_runs(paths)?;
    fs::create_dir_all(out_dir)?;
    cmp.write_table(create(&out_dir.join("comparison.csv"))?)?;
    cmp.write_long(create(&out_dir.join("curves_long.csv"))?)?;
    Ok(cmp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::config("k", 1, "m")), 1);
        assert_eq!(exit_code(&Error::Ingestion("x".into())), 2);
        assert_eq!(exit_code(&Error::Compare("x".into())), 2);
        assert_eq!(exit_code(&Error::Usage("x".into())), 3);
    }

    #[test]
    fn missing_dataset_root_is_actionable() {
        let cfg = RunConfig::parse("dataset = pamap2", None).unwrap();
        let e = build_windows(&cfg).unwrap_err();
        assert_eq!(exit_code(&e), 2);
        assert!(e.to_string().contains("data_dir"));
    }

    #[test]
    fn synthetic_windows_cover_profile() {
        let cfg =
            RunConfig::parse("window_length = 20\nsynthetic_windows_per_class = 3", None).unwrap();
        let cache = build_windows(&cfg).unwrap();
        assert_eq!(cache.agents.len(), 6);
        assert!(cache
            .agents
            .iter()
            .all(|a| a.train.len() == 6 && a.test.is_empty()));
        assert_eq!(cache.global_test.len(), 4 * 25);
        assert!(cache.global_test.iter().all(|w| w.source == 6));
    }

    #[test]
    fn synthetic_local_scope_splits() {
        let cfg = RunConfig::parse(
            "window_length = 20\nscope = local\nsynthetic_windows_per_class = 5",
            None,
        )
        .unwrap();
        let cache = build_windows(&cfg).unwrap();
        assert!(cache.global_test.is_empty());
        assert!(cache
            .agents
            .iter()
            .all(|a| a.train.len() == 8 && a.test.len() == 2));
    }
}
