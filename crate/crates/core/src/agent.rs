//! Runtime state of one agent: model, optimizer, private data and the
//! seeded batch iterator.

use rand::seq::SliceRandom;

use crate::data::{standardize, standardize_one, AgentDataset, ChannelStats};
use crate::error::{Error, Result};
use crate::eval::{macro_f1, ConfusionMatrix, MetricsRecord};
use crate::nn::{
    argmax, cross_entropy, decode_params, encode_params, forward, loss_and_grad, write_f64_array,
    AdamConfig, AdamState, ByteReader, ModelArchitecture, ParameterVector, SensorWindow,
};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone)]
pub struct AgentState {
    pub agent_id: usize,
    arch: ModelArchitecture,
    params: ParameterVector,
    adam: AdamState,
    dataset: AgentDataset,
    /// Training windows as the model sees them (standardized if enabled).
    train: Vec<SensorWindow>,
    stats: Option<ChannelStats>,
    order: Vec<usize>,
    batch_cursor: usize,
    epoch: u64,
    rng_seed: u64,
}

impl AgentState {
    /// With `standardize`, inputs are scaled by statistics of this agent's
    /// own training windows, both for training and for every evaluation.
    pub fn new(
        agent_id: usize,
        arch: ModelArchitecture,
        params: ParameterVector,
        dataset: AgentDataset,
        adam: AdamConfig,
        rng_seed: u64,
        standardize_inputs: bool,
    ) -> Result<Self> {
        arch.validate()?;
        params.check_arch(&arch)?;
        let stats = if standardize_inputs && !dataset.train.is_empty() {
            Some(ChannelStats::from_windows(&dataset.train)?)
        } else {
            None
        };
        let train = match &stats {
            Some(s) => standardize(&dataset.train, s),
            None => dataset.train.clone(),
        };
        let mut agent = Self {
            agent_id,
            arch,
            adam: AdamState::new(params.len(), adam),
            params,
            dataset,
            train,
            stats,
            order: Vec::new(),
            batch_cursor: 0,
            epoch: 0,
            rng_seed,
        };
        agent.reshuffle();
        Ok(agent)
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.train.len()).collect();
        let seed = derive_seed(self.rng_seed, "shuffle", self.epoch);
        self.order.shuffle(&mut rng_from_seed(seed));
    }

    pub fn arch(&self) -> &ModelArchitecture {
        &self.arch
    }

    pub fn dataset(&self) -> &AgentDataset {
        &self.dataset
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn reset_adam(&mut self) {
        self.adam.reset();
    }

    /// Completed passes over the training set.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn batch_cursor(&self) -> usize {
        self.batch_cursor
    }

    /// An agent without training data never trains; it only aggregates.
    pub fn is_passive(&self) -> bool {
        self.train.is_empty()
    }

    pub fn size_weight(&self) -> usize {
        self.dataset.size_weight()
    }

    pub fn batches_per_epoch(&self, batch_size: usize) -> usize {
        self.train.len().div_ceil(batch_size)
    }

    /// Snapshot of θ_i; later training does not affect it.
    pub fn get_params(&self) -> ParameterVector {
        self.params.clone()
    }

    pub fn params(&self) -> &ParameterVector {
        &self.params
    }

    /// Replaces θ_i. Adam moments are kept.
    pub fn set_params(&mut self, params: ParameterVector) -> Result<()> {
        params.check_arch(&self.arch)?;
        self.params = params;
        Ok(())
    }

    /// One Adam step on the next batch of the shuffled order. The last batch
    /// of an epoch may be short. Returns `None` for a passive agent.
    pub fn train_one_batch(&mut self, batch_size: usize) -> Result<Option<f64>> {
        if batch_size == 0 {
            return Err(Error::Usage("batch size must be positive".into()));
        }
        if self.is_passive() {
            return Ok(None);
        }
        let start = self.batch_cursor * batch_size;
        if start >= self.train.len() {
            return Err(Error::Usage(format!(
                "batch cursor {} past the end of {} windows; batch size changed mid-epoch?",
                self.batch_cursor,
                self.train.len()
            )));
        }
        let end = (start + batch_size).min(self.train.len());
        let batch: Vec<SensorWindow> = self.order[start..end]
            .iter()
            .map(|&i| self.train[i].clone())
            .collect();
        let (loss, grad) = loss_and_grad(&self.params, &self.arch, &batch)?;
        self.adam.step(&mut self.params, &grad)?;

        self.batch_cursor += 1;
        if end == self.train.len() {
            self.batch_cursor = 0;
            self.epoch += 1;
            self.reshuffle();
        }
        Ok(Some(loss))
    }

    /// Metrics of the current model on `windows`. Pure.
    pub fn evaluate(&self, windows: &[SensorWindow]) -> Result<MetricsRecord> {
        evaluate_params(
            self.agent_id,
            self.epoch,
            &self.params,
            &self.arch,
            self.stats.as_ref(),
            windows,
        )
    }

    pub fn checkpoint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&self.arch.fingerprint().to_le_bytes());
        for v in [
            self.agent_id as u64,
            self.epoch,
            self.batch_cursor as u64,
            self.rng_seed,
            self.adam.step_count,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let c = self.adam.config;
        for v in [c.alpha, c.beta1, c.beta2, c.epsilon] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&encode_params(&self.params, &self.arch));
        write_f64_array(&mut out, &self.adam.first_moment);
        write_f64_array(&mut out, &self.adam.second_moment);
        out
    }

    /// Restores parameters, optimizer state and iterator position written by
    /// [`checkpoint`](Self::checkpoint). The dataset is not part of a
    /// checkpoint.
    pub fn restore(&mut self, bytes: &[u8]) -> Result<()> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Codec("bad checkpoint magic".into()));
        }
        if r.u64()? != self.arch.fingerprint() {
            return Err(Error::Architecture(
                "checkpoint architecture fingerprint mismatch".into(),
            ));
        }
        let agent_id = r.u64()? as usize;
        if agent_id != self.agent_id {
            return Err(Error::Usage(format!(
                "checkpoint belongs to agent {agent_id}, not {}",
                self.agent_id
            )));
        }
        let epoch = r.u64()?;
        let cursor = r.u64()? as usize;
        let rng_seed = r.u64()?;
        let step_count = r.u64()?;
        let config = AdamConfig {
            alpha: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            epsilon: r.f64()?,
        };
        let (params, used) = decode_params(&bytes[r.position()..], &self.arch)?;
        r.take(used)?;
        let first_moment = r.f64_array()?;
        let second_moment = r.f64_array()?;
        if first_moment.len() != params.len() || second_moment.len() != params.len() {
            return Err(Error::Codec("checkpoint moment length mismatch".into()));
        }
        self.params = params;
        self.adam = AdamState {
            config,
            first_moment,
            second_moment,
            step_count,
        };
        self.epoch = epoch;
        self.rng_seed = rng_seed;
        self.reshuffle();
        self.batch_cursor = cursor;
        Ok(())
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"CLCK";

/// Shared evaluation path for agents and the centralized baseline.
pub fn evaluate_params(
    agent_id: usize,
    epoch: u64,
    params: &ParameterVector,
    arch: &ModelArchitecture,
    stats: Option<&ChannelStats>,
    windows: &[SensorWindow],
) -> Result<MetricsRecord> {
    if windows.is_empty() {
        return Err(Error::Usage("evaluate on an empty window list".into()));
    }
    let mut confusion = ConfusionMatrix::new(arch.num_classes);
    let mut loss = 0.0;
    for w in windows {
        let logits = match stats {
            Some(s) => forward(params, arch, &standardize_one(w, s))?,
            None => forward(params, arch, w)?,
        };
        loss += cross_entropy(&logits, w.label);
        confusion.record(w.label, argmax(&logits));
    }
    Ok(MetricsRecord {
        agent_id,
        epoch,
        macro_f1: macro_f1(&confusion)?,
        per_class_f1: confusion.per_class_f1(),
        confusion,
        mean_loss: loss / windows.len() as f64,
    })
}
