//! Experiment harnesses: global generalization, local generalization and
//! the centralized baseline.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use log::info;

use crate::agent::AgentState;
use crate::data::AgentDataset;
use crate::error::{Error, Result};
use crate::eval::MetricsRecord;
use crate::network::{
    build_topology, derive_weights, Network, NetworkOptions, RoundLog, RoundLogEntry, TopologyKind,
};
use crate::nn::{init_params, AdamConfig, ModelArchitecture, SensorWindow};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Collab,
    Isolated,
    Centralized,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Collab => "collab",
            Mode::Isolated => "isolated",
            Mode::Centralized => "centralized",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "collab" => Ok(Mode::Collab),
            "isolated" => Ok(Mode::Isolated),
            "centralized" => Ok(Mode::Centralized),
            other => Err(Error::config("mode", 0, format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    Global,
    Local,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Global => "global",
            Scope::Local => "local",
        })
    }
}

impl FromStr for Scope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "global" => Ok(Scope::Global),
            "local" => Ok(Scope::Local),
            other => Err(Error::config(
                "scope",
                0,
                format!("unknown scope `{other}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSettings {
    pub arch: ModelArchitecture,
    pub epochs: u64,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub topology: TopologyKind,
    pub include_self: bool,
    pub reset_adam_on_aggregate: bool,
    pub standardize: bool,
    pub workers: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub experiment_id: String,
    pub dataset: String,
    /// One dataset per agent; agent ids equal positions.
    pub agents: Vec<AgentDataset>,
    /// Windows of the held-out subjects (global scope).
    pub global_test: Vec<SensorWindow>,
    pub test_subjects: Vec<u32>,
    pub settings: TrainingSettings,
}

impl ExperimentPlan {
    pub fn validate(&self, scope: Scope) -> Result<()> {
        let s = &self.settings;
        s.arch.validate()?;
        if s.epochs == 0 {
            return Err(Error::Plan("epochs must be at least 1".into()));
        }
        if s.batch_size == 0 {
            return Err(Error::Plan("batch size must be positive".into()));
        }
        let first = self
            .agents
            .first()
            .ok_or_else(|| Error::Plan("plan has no agents".into()))?;
        for (i, a) in self.agents.iter().enumerate() {
            if a.agent_id != i {
                return Err(Error::Plan(format!(
                    "agent at position {i} has id {}",
                    a.agent_id
                )));
            }
            if a.class_map != first.class_map {
                return Err(Error::Plan(format!("agent {i} uses a different class map")));
            }
        }
        if first.class_map.num_classes() != s.arch.num_classes {
            return Err(Error::Plan(format!(
                "class map has {} classes, architecture {}",
                first.class_map.num_classes(),
                s.arch.num_classes
            )));
        }
        if self.agents.iter().all(|a| a.train.is_empty()) {
            return Err(Error::Plan("no agent has training windows".into()));
        }
        if scope == Scope::Global {
            if self.global_test.is_empty() {
                return Err(Error::Plan(
                    "global scope needs held-out test windows".into(),
                ));
            }
            let present: BTreeSet<usize> = self.global_test.iter().map(|w| w.label).collect();
            let missing: Vec<i64> = first
                .class_map
                .activities()
                .enumerate()
                .filter(|(c, _)| !present.contains(c))
                .map(|(_, a)| a)
                .collect();
            if !missing.is_empty() {
                return Err(Error::Plan(format!(
                    "held-out test data lacks activities {missing:?}"
                )));
            }
            let held_out: BTreeSet<u32> = self.test_subjects.iter().copied().collect();
            for a in &self.agents {
                if let Some(w) = a.train.iter().find(|w| held_out.contains(&w.source)) {
                    return Err(Error::Plan(format!(
                        "agent {} trains on a window of held-out subject {}",
                        a.agent_id, w.source
                    )));
                }
            }
        }
        Ok(())
    }

    /// Initial parameters and shuffle seed of agent `i`; identical across
    /// modes so paired runs start from the same state.
    fn build_agent(&self, i: usize, dataset: AgentDataset) -> Result<AgentState> {
        let s = &self.settings;
        AgentState::new(
            i,
            s.arch,
            init_params(&s.arch, derive_seed(s.seed, "init", i as u64)),
            dataset,
            s.adam,
            derive_seed(s.seed, "agent", i as u64),
            s.standardize,
        )
    }

    /// Batches one epoch of every agent adds up to.
    pub fn batches_per_network_epoch(&self) -> usize {
        self.agents
            .iter()
            .map(|a| a.train.len().div_ceil(self.settings.batch_size))
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub mode: Mode,
    pub scope: Scope,
    pub records: Vec<MetricsRecord>,
    pub log: RoundLog,
    pub agents: Vec<AgentState>,
    pub total_batches: u64,
}

fn run_decentralized(plan: &ExperimentPlan, scope: Scope, collaborate: bool) -> Result<RunResult> {
    plan.validate(scope)?;
    let s = &plan.settings;
    let agents = plan
        .agents
        .iter()
        .enumerate()
        .map(|(i, d)| plan.build_agent(i, d.clone()))
        .collect::<Result<Vec<_>>>()?;
    let sizes: Vec<usize> = agents.iter().map(|a| a.size_weight()).collect();
    let kind = if collaborate {
        s.topology
    } else {
        TopologyKind::Empty
    };
    let topology = build_topology(agents.len(), kind)?;
    let weights = derive_weights(&topology, &sizes, s.include_self)?;
    let mut net = Network::new(
        agents,
        topology,
        weights,
        NetworkOptions {
            batch_size: s.batch_size,
            collaborate,
            reset_adam_on_aggregate: s.reset_adam_on_aggregate,
            workers: s.workers,
        },
    )?;

    let global = &plan.global_test;
    let evaluate = |a: &AgentState| -> Result<Option<MetricsRecord>> {
        match scope {
            Scope::Global => a.evaluate(global).map(Some),
            Scope::Local if a.dataset().test.is_empty() => {
                info!("agent {} has no local test windows; excluded", a.agent_id);
                Ok(None)
            }
            Scope::Local => a.evaluate(&a.dataset().test).map(Some),
        }
    };
    let records = net.run_training(s.epochs, &evaluate)?;
    let total_batches = net
        .log()
        .entries()
        .iter()
        .filter(|e| e.loss.is_some())
        .count() as u64;
    Ok(RunResult {
        mode: if collaborate {
            Mode::Collab
        } else {
            Mode::Isolated
        },
        scope,
        records,
        log: net.log().clone(),
        agents: net.into_agents(),
        total_batches,
    })
}

/// Agents evaluated on the held-out subjects at each of their epoch
/// boundaries.
pub fn run_global_generalization(plan: &ExperimentPlan, collaborate: bool) -> Result<RunResult> {
    run_decentralized(plan, Scope::Global, collaborate)
}

/// Agents evaluated on their own test partitions at each epoch boundary.
pub fn run_local_generalization(plan: &ExperimentPlan, collaborate: bool) -> Result<RunResult> {
    run_decentralized(plan, Scope::Local, collaborate)
}

/// One model trained on the union of all agents' training windows with the
/// same batch budget as the decentralized run: every "epoch" is
/// [`ExperimentPlan::batches_per_network_epoch`] batches. Global scope
/// yields one record per epoch (agent 0); local scope evaluates the model
/// on every agent's test partition under that agent's id.
pub fn run_centralized_baseline(plan: &ExperimentPlan, scope: Scope) -> Result<RunResult> {
    plan.validate(scope)?;
    let s = &plan.settings;
    let union = AgentDataset {
        agent_id: 0,
        train: plan
            .agents
            .iter()
            .flat_map(|a| a.train.iter().cloned())
            .collect(),
        test: plan
            .agents
            .iter()
            .flat_map(|a| a.test.iter().cloned())
            .collect(),
        class_map: plan.agents[0].class_map.clone(),
    };
    let mut agent = plan.build_agent(0, union)?;
    let per_epoch = plan.batches_per_network_epoch();

    let mut records = Vec::new();
    let mut log = Vec::new();
    let mut batch = 0u64;
    for epoch in 1..=s.epochs {
        for _ in 0..per_epoch {
            let checksum = agent.params().checksum();
            let loss = agent.train_one_batch(s.batch_size)?;
            log.push(RoundLogEntry {
                round: batch,
                agent: 0,
                pre_checksum: checksum,
                post_checksum: checksum,
                loss,
            });
            batch += 1;
        }
        match scope {
            Scope::Global => {
                let mut r = agent.evaluate(&plan.global_test)?;
                r.epoch = epoch;
                records.push(r);
            }
            Scope::Local => {
                for a in plan.agents.iter().filter(|a| !a.test.is_empty()) {
                    let mut r = agent.evaluate(&a.test)?;
                    r.agent_id = a.agent_id;
                    r.epoch = epoch;
                    records.push(r);
                }
            }
        }
    }
    Ok(RunResult {
        mode: Mode::Centralized,
        scope,
        records,
        log: RoundLog::from_entries(log),
        agents: vec![agent],
        total_batches: batch,
    })
}

/// Dispatches on mode and scope.
pub fn run_plan(plan: &ExperimentPlan, mode: Mode, scope: Scope) -> Result<RunResult> {
    match (mode, scope) {
        (Mode::Centralized, scope) => run_centralized_baseline(plan, scope),
        (mode, Scope::Global) => run_global_generalization(plan, mode == Mode::Collab),
        (mode, Scope::Local) => run_local_generalization(plan, mode == Mode::Collab),
    }
}
