//! Bulk-synchronous round scheduler.
//!
//! A round, for every agent in parallel: drain the messages neighbors
//! published at the end of the previous round and replace θ_i with their
//! weighted mean (skipped in round 0); train one batch; then, after a
//! barrier, publish the new θ_i to every out-neighbor. Aggregation therefore
//! never sees parameters trained in the same round, and the outcome does not
//! depend on how many workers run the round.

use std::io::Write;
use std::sync::Arc;

use log::debug;
use rayon::prelude::*;

use super::aggregation::{aggregate, InteractionWeights, NeighborContribution};
use super::topology::Topology;
use super::transport::{InProcessTransport, Message, MessageHeader, Transport};
use crate::agent::AgentState;
use crate::error::{Error, Result};
use crate::eval::MetricsRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkOptions {
    pub batch_size: usize,
    /// `false` turns every agent into an isolated learner.
    pub collaborate: bool,
    /// Zero Adam moments whenever aggregation replaces θ_i.
    pub reset_adam_on_aggregate: bool,
    /// Worker threads; 1 runs rounds on the calling thread.
    pub workers: usize,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        Self {
            batch_size: 64,
            collaborate: true,
            reset_adam_on_aggregate: false,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundLogEntry {
    pub round: u64,
    pub agent: usize,
    /// Parameters before aggregation.
    pub pre_checksum: u64,
    /// Parameters after aggregation, before training.
    pub post_checksum: u64,
    /// Batch loss, `None` if the agent did not train this round.
    pub loss: Option<f64>,
}

/// Append-only audit trail of all rounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundLog {
    entries: Vec<RoundLogEntry>,
}

impl RoundLog {
    pub fn from_entries(entries: Vec<RoundLogEntry>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[RoundLogEntry] {
        &self.entries
    }

    pub fn round(&self, round: u64) -> impl Iterator<Item = &RoundLogEntry> {
        self.entries.iter().filter(move |e| e.round == round)
    }

    fn extend(&mut self, entries: Vec<RoundLogEntry>) {
        self.entries.extend(entries);
    }

    /// `round,agent,pre_checksum,post_checksum,loss`; checksums in hex, an
    /// empty loss cell for rounds without training.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["round", "agent", "pre_checksum", "post_checksum", "loss"])?;
        for e in &self.entries {
            wr.write_record([
                e.round.to_string(),
                e.agent.to_string(),
                format!("{:016x}", e.pre_checksum),
                format!("{:016x}", e.post_checksum),
                e.loss.map(|l| l.to_string()).unwrap_or_default(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub struct Network {
    agents: Vec<AgentState>,
    topology: Topology,
    weights: InteractionWeights,
    transport: Box<dyn Transport>,
    options: NetworkOptions,
    pool: Option<rayon::ThreadPool>,
    round: u64,
    /// Agents that completed this many epochs stop training.
    target_epochs: Option<u64>,
    log: RoundLog,
}

impl Network {
    pub fn new(
        agents: Vec<AgentState>,
        topology: Topology,
        weights: InteractionWeights,
        options: NetworkOptions,
    ) -> Result<Self> {
        let n = agents.len();
        Self::with_transport(
            agents,
            topology,
            weights,
            options,
            Box::new(InProcessTransport::new(n)),
        )
    }

    pub fn with_transport(
        agents: Vec<AgentState>,
        topology: Topology,
        weights: InteractionWeights,
        options: NetworkOptions,
        transport: Box<dyn Transport>,
    ) -> Result<Self> {
        if agents.len() != topology.num_agents() {
            return Err(Error::Usage(format!(
                "{} agents for a topology of {}",
                agents.len(),
                topology.num_agents()
            )));
        }
        if !weights.is_consistent_with(&topology) {
            return Err(Error::Usage(
                "interaction weights do not match the topology".into(),
            ));
        }
        if agents.iter().enumerate().any(|(i, a)| a.agent_id != i) {
            return Err(Error::Usage("agent ids must equal their position".into()));
        }
        if let Some(a) = agents.first() {
            if agents.iter().any(|b| b.arch() != a.arch()) {
                return Err(Error::Architecture(
                    "agents do not share one architecture".into(),
                ));
            }
        }
        if options.batch_size == 0 {
            return Err(Error::Usage("batch size must be positive".into()));
        }
        let pool = if options.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(options.workers)
                    .build()
                    .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?,
            )
        } else {
            None
        };
        Ok(Self {
            agents,
            topology,
            weights,
            transport,
            options,
            pool,
            round: 0,
            target_epochs: None,
            log: RoundLog::default(),
        })
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn into_agents(self) -> Vec<AgentState> {
        self.agents
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn rounds_completed(&self) -> u64 {
        self.round
    }

    pub fn log(&self) -> &RoundLog {
        &self.log
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(p) => p.install(f),
            None => f(),
        }
    }

    fn should_train(agent: &AgentState, target: Option<u64>) -> bool {
        !agent.is_passive() && target.is_none_or(|t| agent.epoch() < t)
    }

    /// Runs one collect → aggregate → train → publish round and returns its
    /// log entries.
    pub fn run_round(&mut self) -> Result<Vec<RoundLogEntry>> {
        let round = self.round;
        let n = self.agents.len();
        let incoming: Vec<Vec<Message>> = (0..n).map(|i| self.transport.drain(i)).collect();
        let aggregate_now = self.options.collaborate && round > 0;
        let weights = &self.weights;
        let options = self.options;
        let target = self.target_epochs;

        let step = |(agent, msgs): (&mut AgentState, Vec<Message>)| -> Result<RoundLogEntry> {
            let pre_checksum = agent.params().checksum();
            if aggregate_now {
                aggregate_into(agent, &msgs, weights, options.reset_adam_on_aggregate)?;
            }
            let post_checksum = agent.params().checksum();
            let loss = if Self::should_train(agent, target) {
                agent.train_one_batch(options.batch_size)?
            } else {
                None
            };
            Ok(RoundLogEntry {
                round,
                agent: agent.agent_id,
                pre_checksum,
                post_checksum,
                loss,
            })
        };

        let mut agents = std::mem::take(&mut self.agents);
        let entries: Result<Vec<RoundLogEntry>> = self.install(|| {
            if options.workers > 1 {
                agents.par_iter_mut().zip(incoming).map(step).collect()
            } else {
                agents.iter_mut().zip(incoming).map(step).collect()
            }
        });
        self.agents = agents;
        let entries = entries?;

        // barrier passed: publish post-training snapshots for the next round
        if self.options.collaborate {
            for agent in &self.agents {
                let header = MessageHeader {
                    sender_id: agent.agent_id,
                    round,
                    weight: agent.size_weight() as f64,
                    fingerprint: agent.arch().fingerprint(),
                };
                let params = Arc::new(agent.get_params());
                for receiver in self.topology.out_neighbors(agent.agent_id) {
                    self.transport.send(
                        receiver,
                        Message {
                            header,
                            params: Arc::clone(&params),
                        },
                    );
                }
            }
        }

        self.round += 1;
        self.log.extend(entries.clone());
        Ok(entries)
    }

    fn all_done(&self, epochs: u64) -> bool {
        self.agents
            .iter()
            .all(|a| a.is_passive() || a.epoch() >= epochs)
    }

    /// Runs rounds until every non-passive agent has completed `epochs`
    /// epochs. Agents that finish early stop training but keep aggregating
    /// and publishing. `evaluate` runs at each agent's epoch boundary; it may
    /// return `None` to skip an agent. Records are ordered by round, then
    /// agent id.
    pub fn run_training(
        &mut self,
        epochs: u64,
        evaluate: &(dyn Fn(&AgentState) -> Result<Option<MetricsRecord>> + Sync),
    ) -> Result<Vec<MetricsRecord>> {
        if epochs == 0 {
            return Err(Error::Usage("epochs must be at least 1".into()));
        }
        if self.agents.iter().all(|a| a.is_passive()) {
            return Err(Error::Usage("no agent has training data".into()));
        }
        self.target_epochs = Some(epochs);
        let mut records = Vec::new();
        while !self.all_done(epochs) {
            let before: Vec<u64> = self.agents.iter().map(|a| a.epoch()).collect();
            self.run_round()?;
            let due: Vec<&AgentState> = self
                .agents
                .iter()
                .zip(&before)
                .filter(|(a, &b)| a.epoch() > b && a.epoch() <= epochs)
                .map(|(a, _)| a)
                .collect();
            let evaluated: Result<Vec<Option<MetricsRecord>>> = self.install(|| {
                if self.options.workers > 1 {
                    due.par_iter().map(|a| evaluate(a)).collect()
                } else {
                    due.iter().map(|a| evaluate(a)).collect()
                }
            });
            records.extend(evaluated?.into_iter().flatten());
        }
        Ok(records)
    }
}

fn aggregate_into(
    agent: &mut AgentState,
    msgs: &[Message],
    weights: &InteractionWeights,
    reset_adam: bool,
) -> Result<()> {
    let me = agent.agent_id;
    let own = agent.get_params();
    let mut contributions = Vec::with_capacity(msgs.len() + 1);
    for m in msgs {
        let sender = m.header.sender_id;
        let weight = weights.weight(me, sender).ok_or_else(|| {
            Error::Usage(format!(
                "agent {me} received a message from non-neighbor {sender}"
            ))
        })?;
        if m.header.fingerprint != agent.arch().fingerprint() {
            return Err(Error::Architecture(format!(
                "agent {me} received parameters of a different architecture from {sender}"
            )));
        }
        if weight > 0.0 {
            contributions.push(NeighborContribution {
                sender_id: sender,
                params: &m.params,
                weight,
            });
        }
    }
    if let Some(w) = weights.weight(me, me).filter(|&w| w > 0.0) {
        contributions.push(NeighborContribution {
            sender_id: me,
            params: &own,
            weight: w,
        });
    }
    match aggregate(&contributions)? {
        Some(p) => {
            agent.set_params(p)?;
            if reset_adam {
                agent.reset_adam();
            }
        }
        None => debug!("agent {me}: total contribution weight is zero, aggregation skipped"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize_windows, AgentDataset, ClassMap};
    use crate::network::{build_topology, derive_weights, TopologyKind};
    use crate::nn::{init_params, AdamConfig, ModelArchitecture};

    fn arch() -> ModelArchitecture {
        ModelArchitecture {
            input_channels: 2,
            window_length: 12,
            conv_out_channels: 3,
            conv_kernel: 3,
            pool_kernel: 2,
            num_classes: 3,
        }
    }

    fn agent(id: usize, counts: &[usize], init_seed: u64, data_seed: u64) -> AgentState {
        let a = arch();
        let dataset = AgentDataset {
            agent_id: id,
            train: synthesize_windows(counts, 2, 12, 0.2, id as u32, data_seed),
            test: Vec::new(),
            class_map: ClassMap::from_activities(0..3),
        };
        AgentState::new(
            id,
            a,
            init_params(&a, init_seed),
            dataset,
            AdamConfig::default(),
            7,
            false,
        )
        .unwrap()
    }

    fn network(
        agents: Vec<AgentState>,
        kind: TopologyKind,
        include_self: bool,
        options: NetworkOptions,
    ) -> Network {
        let sizes: Vec<usize> = agents.iter().map(|a| a.size_weight()).collect();
        let t = build_topology(agents.len(), kind).unwrap();
        let w = derive_weights(&t, &sizes, include_self).unwrap();
        Network::new(agents, t, w, options).unwrap()
    }

    fn opts(batch_size: usize, workers: usize) -> NetworkOptions {
        NetworkOptions {
            batch_size,
            workers,
            ..NetworkOptions::default()
        }
    }

    #[test]
    fn round_zero_trains_without_aggregating() {
        let agents = vec![agent(0, &[4, 4, 0], 1, 10), agent(1, &[0, 4, 4], 2, 11)];
        let mut net = network(agents, TopologyKind::Full, true, opts(4, 1));
        let r0 = net.run_round().unwrap();
        assert!(r0
            .iter()
            .all(|e| e.pre_checksum == e.post_checksum && e.loss.is_some()));
        let r1 = net.run_round().unwrap();
        assert!(r1.iter().all(|e| e.pre_checksum != e.post_checksum));
        assert_eq!(net.rounds_completed(), 2);
        assert_eq!(net.log().entries().len(), 4);
    }

    #[test]
    fn single_agent_matches_plain_training() {
        let mut plain = agent(0, &[5, 3, 2], 3, 12);
        let mut net = network(vec![plain.clone()], TopologyKind::Full, true, opts(4, 1));
        for _ in 0..9 {
            plain.train_one_batch(4).unwrap();
            net.run_round().unwrap();
        }
        assert_eq!(net.agents()[0].params(), plain.params());
    }

    #[test]
    fn symmetric_pair_stays_identical() {
        let agents = vec![agent(0, &[3, 3, 3], 5, 20), agent(1, &[3, 3, 3], 5, 20)];
        let mut net = network(agents, TopologyKind::Full, true, opts(4, 1));
        for _ in 0..12 {
            let entries = net.run_round().unwrap();
            assert_eq!(entries[0].post_checksum, entries[1].post_checksum);
        }
        assert_eq!(net.agents()[0].params(), net.agents()[1].params());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let build = || {
            (0..4)
                .map(|i| agent(i, &[2 + i, 3, 1 + (i % 2)], 30 + i as u64, 40 + i as u64))
                .collect::<Vec<_>>()
        };
        let mut serial = network(build(), TopologyKind::Ring, true, opts(3, 1));
        let mut parallel = network(build(), TopologyKind::Ring, true, opts(3, 3));
        for _ in 0..8 {
            serial.run_round().unwrap();
            parallel.run_round().unwrap();
        }
        assert_eq!(serial.log(), parallel.log());
    }

    #[test]
    fn isolated_agents_never_aggregate() {
        let agents = vec![agent(0, &[4, 0, 0], 1, 1), agent(1, &[0, 4, 0], 2, 2)];
        let options = NetworkOptions {
            collaborate: false,
            ..opts(2, 1)
        };
        let mut net = network(agents, TopologyKind::Full, true, options);
        for _ in 0..5 {
            let entries = net.run_round().unwrap();
            assert!(entries.iter().all(|e| e.pre_checksum == e.post_checksum));
        }
    }

    #[test]
    fn training_stops_at_target_epochs() {
        // agent 0 has 2 batches per epoch, agent 1 has 5
        let agents = vec![agent(0, &[2, 2, 0], 1, 1), agent(1, &[4, 3, 3], 2, 2)];
        let mut net = network(agents, TopologyKind::Full, true, opts(2, 1));
        let eval = |a: &AgentState| a.evaluate(&a.dataset().train).map(Some);
        let records = net.run_training(2, &eval).unwrap();
        assert!(net.agents().iter().all(|a| a.epoch() == 2));
        assert_eq!(net.rounds_completed(), 10);
        let epochs: Vec<(usize, u64)> = records.iter().map(|r| (r.agent_id, r.epoch)).collect();
        assert_eq!(epochs, vec![(0, 1), (0, 2), (1, 1), (1, 2)]);
        // agent 0 idles after round 3 but keeps aggregating
        let idle: Vec<&RoundLogEntry> = net
            .log()
            .entries()
            .iter()
            .filter(|e| e.agent == 0 && e.round >= 4)
            .collect();
        assert!(idle.iter().all(|e| e.loss.is_none()));
    }

    #[test]
    fn zero_epochs_rejected() {
        let mut net = network(
            vec![agent(0, &[2, 2, 2], 1, 1)],
            TopologyKind::Full,
            true,
            opts(2, 1),
        );
        assert!(net.run_training(0, &|_| Ok(None)).is_err());
    }

    #[test]
    fn mismatched_weights_rejected() {
        let agents = vec![agent(0, &[2, 2, 2], 1, 1), agent(1, &[2, 2, 2], 2, 2)];
        let empty = build_topology(2, TopologyKind::Empty).unwrap();
        let full = build_topology(2, TopologyKind::Full).unwrap();
        let w = derive_weights(&full, &[6, 6], true).unwrap();
        assert!(Network::new(agents, empty, w, opts(2, 1)).is_err());
    }
}
