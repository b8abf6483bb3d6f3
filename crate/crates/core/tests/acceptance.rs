//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use collab_har::cli::{build_windows, cmd_run};
use collab_har::config::RunConfig;
use collab_har::data::{synthesize_network_data, synthesize_windows, SyntheticConfig};
use collab_har::eval::{
    run_plan, summarize, write_results_csv, ExperimentPlan, Mode, RunMeta, Scope, TrainingSettings,
};
use collab_har::network::{
    aggregate, build_topology, derive_weights, NeighborContribution, Network, NetworkOptions,
    TopologyKind,
};
use collab_har::nn::{
    cross_entropy, forward, init_params, loss_and_grad, AdamConfig, ModelArchitecture,
    ParameterVector, SensorWindow,
};
use collab_har::seed::rng_from_seed;
use rand::Rng;

const GRADIENT_TOLERANCE: f64 = 1e-4;
const GRADIENT_ARCHS: usize = 20;
const MAX_PARAMS: usize = 200;
const AGGREGATION_INSTANCES: usize = 100;
const SYMMETRY_ROUNDS: usize = 50;
const UPLIFT_FLOOR: f64 = 0.5;
const STARVED_ISOLATED_CEILING: f64 = 0.3;
const STARVED_RESCUE_FACTOR: f64 = 2.0;
const PARITY_FLOOR: f64 = 0.9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- 1

fn batch_loss(params: &ParameterVector, arch: &ModelArchitecture, batch: &[SensorWindow]) -> f64 {
    batch
        .iter()
        .map(|w| cross_entropy(&forward(params, arch, w).unwrap(), w.label))
        .sum::<f64>()
        / batch.len() as f64
}

fn random_arch(rng: &mut impl Rng) -> ModelArchitecture {
    loop {
        let window_length = rng.random_range(4..=24);
        let conv_kernel = rng.random_range(1..=3);
        let arch = ModelArchitecture {
            input_channels: rng.random_range(1..=3),
            window_length,
            conv_out_channels: rng.random_range(1..=6),
            conv_kernel,
            pool_kernel: rng.random_range(1..=3).min(window_length - conv_kernel + 1),
            num_classes: rng.random_range(2..=4),
        };
        if arch.validate().is_ok() && arch.param_count() <= MAX_PARAMS {
            return arch;
        }
    }
}

fn gradient_oracle() -> Outcome {
    let mut rng = rng_from_seed(2024);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut largest = 0;
    for i in 0..GRADIENT_ARCHS {
        let arch = random_arch(&mut rng);
        largest = largest.max(arch.param_count());
        let params = init_params(&arch, i as u64);
        let batch: Vec<SensorWindow> = (0..rng.random_range(1..=8))
            .map(|_| {
                let n = arch.input_channels * arch.window_length;
                let data = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                SensorWindow::new(
                    data,
                    arch.input_channels,
                    rng.random_range(0..arch.num_classes),
                    0,
                )
            })
            .collect();
        let (_, grad) = loss_and_grad(&params, &arch, &batch).unwrap();
        for k in 0..params.len() {
            let mut plus = params.clone();
            plus.as_mut_slice()[k] += h;
            let mut minus = params.clone();
            minus.as_mut_slice()[k] -= h;
            let numeric =
                (batch_loss(&plus, &arch, &batch) - batch_loss(&minus, &arch, &batch)) / (2.0 * h);
            let scale = grad[k].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((grad[k] - numeric).abs() / scale);
        }
    }
    outcome(
        worst < GRADIENT_TOLERANCE,
        format!("{GRADIENT_ARCHS} archs (p <= {largest}), max relative error {worst:.2e} (< {GRADIENT_TOLERANCE:.0e})"),
    )
}

// ---------------------------------------------------------------- 2

fn aggregation_oracle() -> Outcome {
    let mut rng = rng_from_seed(77);
    let mut mismatches = 0;
    let mut scale_breaks = 0;
    let mut max_literal_gap: f64 = 0.0;
    for _ in 0..AGGREGATION_INSTANCES {
        let n = rng.random_range(1..=8);
        let p = rng.random_range(1..=64);
        let thetas: Vec<ParameterVector> = (0..n)
            .map(|_| ParameterVector::new((0..p).map(|_| rng.random_range(-10.0..10.0)).collect()))
            .collect();
        let mut weights: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.random_range(0u32..=500)))
            .collect();
        weights[0] += 1.0;
        let contribs = |w: &[f64]| -> Vec<NeighborContribution<'_>> {
            thetas
                .iter()
                .zip(w)
                .enumerate()
                .map(|(j, (t, &w))| NeighborContribution {
                    sender_id: j,
                    params: t,
                    weight: w,
                })
                .collect()
        };
        let got = aggregate(&contribs(&weights)).unwrap().unwrap();
        let total: f64 = weights.iter().sum();
        for k in 0..p {
            let column: Vec<f64> = thetas.iter().map(|t| t.as_slice()[k]).collect();
            let mut normalized = 0.0;
            for (v, w) in column.iter().zip(&weights).filter(|(_, &w)| w > 0.0) {
                normalized += (w / total) * v;
            }
            let live = column
                .iter()
                .zip(&weights)
                .filter(|(_, &w)| w > 0.0)
                .map(|(v, _)| *v);
            let (lo, hi) = live.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v), b.max(v))
            });
            if got.as_slice()[k].to_bits() != normalized.clamp(lo, hi).to_bits() {
                mismatches += 1;
            }
            let literal = column.iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>() / total;
            max_literal_gap = max_literal_gap.max((got.as_slice()[k] - literal).abs());
        }
        let scale = f64::from(rng.random_range(2u32..=1000));
        let scaled: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        if aggregate(&contribs(&scaled)).unwrap().unwrap() != got {
            scale_breaks += 1;
        }
    }
    outcome(
        mismatches == 0 && scale_breaks == 0 && max_literal_gap < 1e-12,
        format!(
            "{AGGREGATION_INSTANCES} instances, {mismatches} bitwise mismatches, {scale_breaks} scale-invariance breaks, max gap to literal form {max_literal_gap:.1e}"
        ),
    )
}

// ---------------------------------------------------------------- shared setup

fn synthetic_config(extra: &str) -> RunConfig {
    let text = String::from(
        "synthetic_agents = 6\nsynthetic_classes = 4\nsynthetic_classes_per_agent = 2\n\
         synthetic_windows_per_class = 40\nsynthetic_channels = 3\nsynthetic_noise = 0.3\n\
         synthetic_test_windows_per_class = 25\nwindow_length = 50\nconv_out_channels = 16\n\
         epochs = 40\nbatch_size = 64\nseed = 1\n",
    );
    let mut cfg = RunConfig::parse(&text, None).unwrap();
    cfg.apply_overrides(extra.lines().filter(|l| !l.trim().is_empty()))
        .unwrap();
    cfg
}

fn settings(cfg: &RunConfig) -> TrainingSettings {
    TrainingSettings {
        arch: cfg.arch().unwrap(),
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        adam: cfg.adam,
        topology: cfg.topology,
        include_self: cfg.include_self,
        reset_adam_on_aggregate: cfg.reset_adam_on_aggregate,
        standardize: cfg.standardize,
        workers: cfg.workers,
        seed: cfg.seed,
    }
}

fn plan_from_config(cfg: &RunConfig) -> ExperimentPlan {
    let cache = build_windows(cfg).unwrap();
    ExperimentPlan {
        experiment_id: cfg.experiment_id.clone(),
        dataset: cfg.dataset.to_string(),
        agents: cache.agents,
        global_test: cache.global_test,
        test_subjects: cfg.resolved_test_subjects(),
        settings: settings(cfg),
    }
}

fn final_average(plan: &ExperimentPlan, mode: Mode) -> (f64, collab_har::eval::RunResult) {
    let r = run_plan(plan, mode, Scope::Global).unwrap();
    (summarize(&r.records).unwrap().final_average(), r)
}

// ---------------------------------------------------------------- 3

fn metric_csv(records: &[collab_har::eval::MetricsRecord], mode: Mode) -> String {
    let meta = RunMeta {
        experiment_id: "degenerate".into(),
        dataset: "synthetic".into(),
        mode,
        scope: Scope::Global,
    };
    let mut buf = Vec::new();
    write_results_csv(&mut buf, &meta, records).unwrap();
    // drop the mode column, the only one that must differ
    String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| {
            let mut cells: Vec<&str> = l.split(',').collect();
            cells.remove(2);
            cells.join(",") + "\n"
        })
        .collect()
}

fn degenerate_network() -> Outcome {
    let cfg = synthetic_config(
        "synthetic_agents = 1\nsynthetic_classes_per_agent = 4\nepochs = 8\nbatch_size = 16",
    );
    let plan = plan_from_config(&cfg);
    let collab = run_plan(&plan, Mode::Collab, Scope::Global).unwrap();
    let central = run_plan(&plan, Mode::Centralized, Scope::Global).unwrap();
    let a = metric_csv(&collab.records, Mode::Collab);
    let b = metric_csv(&central.records, Mode::Centralized);
    let same_batches = collab.total_batches == central.total_batches;
    let same_params = collab.agents[0].params() == central.agents[0].params();
    outcome(
        a == b && same_batches && same_params && collab.records.len() == 8,
        format!(
            "{} epochs, {} batches each, metric CSVs {}, final parameters {}",
            collab.records.len(),
            collab.total_batches,
            if a == b { "identical" } else { "differ" },
            if same_params { "identical" } else { "differ" }
        ),
    )
}

// ---------------------------------------------------------------- 4

fn symmetry() -> Outcome {
    let arch = ModelArchitecture {
        input_channels: 3,
        window_length: 30,
        conv_out_channels: 8,
        conv_kernel: 3,
        pool_kernel: 2,
        num_classes: 3,
    };
    let data = synthesize_windows(&[10, 10, 10], 3, 30, 0.3, 0, 5);
    let agents: Vec<_> = (0..2)
        .map(|i| {
            let dataset = collab_har::data::AgentDataset {
                agent_id: i,
                train: data.clone(),
                test: Vec::new(),
                class_map: collab_har::data::ClassMap::from_activities(0..3),
            };
            collab_har::agent::AgentState::new(
                i,
                arch,
                init_params(&arch, 9),
                dataset,
                AdamConfig::default(),
                13,
                false,
            )
            .unwrap()
        })
        .collect();
    let topology = build_topology(2, TopologyKind::Full).unwrap();
    let weights = derive_weights(&topology, &[30, 30], true).unwrap();
    let options = NetworkOptions {
        batch_size: 8,
        ..NetworkOptions::default()
    };
    let mut net = Network::new(agents, topology, weights, options).unwrap();
    let mut equal_rounds = 0;
    for _ in 0..SYMMETRY_ROUNDS {
        let e = net.run_round().unwrap();
        if e[0].post_checksum == e[1].post_checksum
            && net.agents()[0].params().checksum() == net.agents()[1].params().checksum()
        {
            equal_rounds += 1;
        }
    }
    let moved = net.agents()[0].params() != &init_params(&arch, 9);
    outcome(
        equal_rounds == SYMMETRY_ROUNDS && moved,
        format!("checksums equal in {equal_rounds}/{SYMMETRY_ROUNDS} rounds"),
    )
}

// ---------------------------------------------------------------- 5

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let variants = [
        "mode = collab\ntopology = ring",
        "mode = collab\ntopology = random-2@5\ninclude_self = false",
        "mode = isolated",
        "mode = centralized",
        "mode = collab\nscope = local",
    ];
    let mut identical = 0;
    for (i, v) in variants.iter().enumerate() {
        let outputs: Vec<Vec<u8>> = [1usize, 4]
            .iter()
            .flat_map(|&workers| [workers, workers])
            .enumerate()
            .map(|(rep, workers)| {
                let dir: PathBuf = root.path().join(format!("v{i}-r{rep}"));
                let cfg = synthetic_config(&format!(
                    "{v}\nepochs = 4\nsynthetic_windows_per_class = 12\nworkers = {workers}\noutput_dir = {}",
                    dir.display()
                ));
                fs::read(cmd_run(&cfg).unwrap().results).unwrap()
            })
            .collect();
        if outputs.windows(2).all(|w| w[0] == w[1]) {
            identical += 1;
        }
    }
    outcome(
        identical == variants.len(),
        format!(
            "{identical}/{} configurations byte-identical over 2 reruns x workers {{1, 4}}",
            variants.len()
        ),
    )
}

// ---------------------------------------------------------------- 6, 8

fn uplift_and_parity() -> (Outcome, Outcome) {
    let plan = plan_from_config(&synthetic_config(""));
    let (collab, _) = final_average(&plan, Mode::Collab);
    let (isolated, _) = final_average(&plan, Mode::Isolated);
    let (central, c) = final_average(&plan, Mode::Centralized);
    let relative = (collab - isolated) / isolated;
    let batches = run_plan(&plan, Mode::Collab, Scope::Global)
        .unwrap()
        .total_batches;
    let uplift = outcome(
        relative >= UPLIFT_FLOOR,
        format!(
            "collab {collab:.4} vs isolated {isolated:.4}: +{:.1}% (floor +{:.0}%)",
            relative * 100.0,
            UPLIFT_FLOOR * 100.0
        ),
    );
    let parity = outcome(
        collab >= PARITY_FLOOR * central && batches == c.total_batches,
        format!(
            "collab {collab:.4} vs centralized {central:.4}, ratio {:.3} (floor {PARITY_FLOOR}), batches {batches} vs {}",
            collab / central,
            c.total_batches
        ),
    )
    ;
    (uplift, parity)
}

// ---------------------------------------------------------------- 7

fn starved_agent() -> Outcome {
    let base = synthetic_config("");
    let mut profile = collab_har::data::rotated_profile(6, 4, 2, 40);
    let starved = 5;
    profile[starved] = vec![40, 0, 0, 0];
    let agents = synthesize_network_data(&SyntheticConfig {
        num_classes: 4,
        channels: 3,
        window_length: 50,
        profile,
        noise_level: 0.3,
        train_ratio: None,
        seed: base.seed,
    })
    .unwrap();
    let plan = ExperimentPlan {
        experiment_id: "starved".into(),
        dataset: "synthetic".into(),
        agents,
        global_test: synthesize_windows(&[25; 4], 3, 50, 0.3, 6, 99),
        test_subjects: vec![6],
        settings: settings(&base),
    };
    let score = |mode| {
        let r = run_plan(&plan, mode, Scope::Global).unwrap();
        let s = summarize(&r.records).unwrap();
        s.final_table.iter().find(|(a, _)| *a == starved).unwrap().1
    };
    let isolated = score(Mode::Isolated);
    let collab = score(Mode::Collab);
    outcome(
        isolated < STARVED_ISOLATED_CEILING && collab > STARVED_RESCUE_FACTOR * isolated,
        format!("agent {starved}: isolated {isolated:.4} (< {STARVED_ISOLATED_CEILING}), collab {collab:.4} (> {STARVED_RESCUE_FACTOR}x)"),
    )
}

// ---------------------------------------------------------------- 9, 10

fn full_dataset(env: &str, dataset: &str, floor: f64) -> Option<Outcome> {
    let root = std::env::var(env).ok()?;
    let epochs = std::env::var("COLLAB_HAR_FULL_EPOCHS").unwrap_or_else(|_| "20".into());
    let out = tempfile::tempdir().unwrap();
    let run = |mode: &str| {
        let cfg = RunConfig::parse(
            &format!(
                "dataset = {dataset}\ndata_dir = {root}\nmode = {mode}\nepochs = {epochs}\nstandardize = true\nworkers = 8\noutput_dir = {}",
                out.path().display()
            ),
            None,
        )
        .unwrap();
        let a = cmd_run(&cfg).unwrap();
        let rows = collab_har::eval::read_results_csv(fs::File::open(a.results).unwrap()).unwrap();
        collab_har::eval::summarize_points(rows.iter().map(|r| (r.agent_id, r.epoch, r.macro_f1)))
            .unwrap()
            .final_average()
    };
    let collab = run("collab");
    let isolated = run("isolated");
    let relative = (collab - isolated) / isolated;
    Some(outcome(
        relative >= floor,
        format!(
            "collab {collab:.4} vs isolated {isolated:.4}: +{:.1}% (floor +{:.0}%)",
            relative * 100.0,
            floor * 100.0
        ),
    ))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut failed = 0;
    let mut report = |id: u32, name: &str, o: Option<Outcome>| match o {
        Some(o) => {
            if !o.pass {
                failed += 1;
            }
            println!(
                "criterion {id:>2} {:<4} {name}: {}",
                if o.pass { "PASS" } else { "FAIL" },
                o.detail
            );
        }
        None => println!("criterion {id:>2} SKIP {name}: dataset not available"),
    };
    report(1, "gradient oracle", Some(gradient_oracle()));
    report(2, "aggregation oracle", Some(aggregation_oracle()));
    report(3, "degenerate network", Some(degenerate_network()));
    report(4, "symmetry", Some(symmetry()));
    report(5, "determinism", Some(determinism()));
    let (uplift, parity) = uplift_and_parity();
    report(6, "collaboration uplift", Some(uplift));
    report(7, "starved agent rescue", Some(starved_agent()));
    report(8, "centralized parity", Some(parity));
    report(
        9,
        "PAMAP2 full protocol",
        full_dataset("COLLAB_HAR_PAMAP2_DIR", "pamap2", 0.5),
    );
    report(
        10,
        "HARTH full protocol",
        full_dataset("COLLAB_HAR_HARTH_DIR", "harth", 1.0),
    );
    println!(
        "acceptance finished in {:.1}s, {failed} failed",
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
