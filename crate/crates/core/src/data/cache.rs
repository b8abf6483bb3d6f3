//! Windowed dataset cache: `manifest.txt` plus `windows.bin`.
//!
//! The manifest is plain `key = value` text. `windows.bin` is a flat array
//! of little-endian f64 values. Each window is stored as
//! `[label, source, data[0 .. channels·window_length]]` with `data` in
//! channel-major order, and windows appear in the order
//! agent 0 train, agent 0 test, agent 1 train, …, global test.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::series::ClassMap;
use super::split::AgentDataset;
use crate::error::{Error, Result};
use crate::nn::SensorWindow;
use crate::seed::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const WINDOWS_FILE: &str = "windows.bin";
const FORMAT: &str = "collab-har-window-cache/1";

#[derive(Debug, Clone, PartialEq)]
pub struct WindowCache {
    /// Hash of every configuration value that shaped the windows.
    pub key: String,
    pub input_channels: usize,
    pub window_length: usize,
    pub class_map: ClassMap,
    pub agents: Vec<AgentDataset>,
    /// Held-out subjects' windows, empty for local-scope runs.
    pub global_test: Vec<SensorWindow>,
}

#[derive(Debug)]
pub enum CacheStatus {
    Hit(WindowCache),
    Missing,
    /// The cache exists but cannot be used; the message says why.
    Stale(String),
}

pub fn write_cache(dir: &Path, cache: &WindowCache) -> Result<()> {
    fs::create_dir_all(dir)?;
    let stride = 2 + cache.input_channels * cache.window_length;
    let total: usize = cache
        .agents
        .iter()
        .map(|a| a.train.len() + a.test.len())
        .sum::<usize>()
        + cache.global_test.len();
    let mut bin = Vec::with_capacity(total * stride * 8);
    let mut push = |w: &SensorWindow| {
        bin.extend_from_slice(&(w.label as f64).to_le_bytes());
        bin.extend_from_slice(&f64::from(w.source).to_le_bytes());
        for v in w.data.iter() {
            bin.extend_from_slice(&v.to_le_bytes());
        }
    };
    for a in &cache.agents {
        a.train.iter().chain(&a.test).for_each(&mut push);
    }
    cache.global_test.iter().for_each(&mut push);

    let mut m = String::new();
    m.push_str(&format!("format = {FORMAT}\n"));
    m.push_str(&format!("key = {}\n", cache.key));
    m.push_str(&format!("input_channels = {}\n", cache.input_channels));
    m.push_str(&format!("window_length = {}\n", cache.window_length));
    m.push_str(&format!(
        "num_classes = {}\n",
        cache.class_map.num_classes()
    ));
    m.push_str(&format!(
        "class_map = {}\n",
        cache.class_map.to_manifest_value()
    ));
    m.push_str(&format!("agents = {}\n", cache.agents.len()));
    for a in &cache.agents {
        m.push_str(&format!("agent.{}.id = {}\n", a.agent_id, a.agent_id));
        m.push_str(&format!("agent.{}.train = {}\n", a.agent_id, a.train.len()));
        m.push_str(&format!("agent.{}.test = {}\n", a.agent_id, a.test.len()));
    }
    m.push_str(&format!("global_test = {}\n", cache.global_test.len()));
    m.push_str(&format!("windows_sha256 = {}\n", sha256_hex(&bin)));

    // binary first so a crash never leaves a manifest pointing at stale data
    fs::write(dir.join(WINDOWS_FILE), &bin)?;
    fs::write(dir.join(MANIFEST_FILE), m)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Cache(format!("manifest line {} is not `key = value`", i + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Loads the cache if it exists, matches `expected_key` and passes its
/// checksum.
pub fn load_cache(dir: &Path, expected_key: &str) -> Result<CacheStatus> {
    if !dir.join(MANIFEST_FILE).exists() {
        return Ok(CacheStatus::Missing);
    }
    let m = read_manifest(dir)?;
    let get = |k: &str| {
        m.get(k)
            .ok_or_else(|| Error::Cache(format!("manifest missing `{k}`")))
    };
    let num = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| Error::Cache(format!("manifest `{k}` is not a count")))
    };
    if get("format")? != FORMAT {
        return Ok(CacheStatus::Stale(format!(
            "unknown cache format `{}`",
            get("format")?
        )));
    }
    if get("key")? != expected_key {
        return Ok(CacheStatus::Stale(format!(
            "cache built for config {}, current config is {expected_key}",
            get("key")?
        )));
    }
    let bin = match fs::read(dir.join(WINDOWS_FILE)) {
        Ok(b) => b,
        Err(e) => {
            return Ok(CacheStatus::Stale(format!(
                "cannot read {WINDOWS_FILE}: {e}"
            )))
        }
    };
    if sha256_hex(&bin) != *get("windows_sha256")? {
        return Ok(CacheStatus::Stale(format!(
            "{WINDOWS_FILE} checksum mismatch"
        )));
    }

    let channels = num("input_channels")?;
    let length = num("window_length")?;
    let class_map = ClassMap::parse_manifest_value(get("class_map")?)
        .ok_or_else(|| Error::Cache("malformed class_map".into()))?;
    if class_map.num_classes() != num("num_classes")? {
        return Err(Error::Cache("class_map disagrees with num_classes".into()));
    }
    let stride = 2 + channels * length;
    let values: Vec<f64> = bin
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut cursor = 0usize;
    let mut take = |n: usize| -> Result<Vec<SensorWindow>> {
        let end = cursor + n * stride;
        if end > values.len() {
            return Err(Error::Cache(
                "window file shorter than manifest counts".into(),
            ));
        }
        let out = values[cursor..end]
            .chunks_exact(stride)
            .map(|w| SensorWindow::new(w[2..].to_vec(), channels, w[0] as usize, w[1] as u32))
            .collect();
        cursor = end;
        Ok(out)
    };

    let n_agents = num("agents")?;
    let mut agents = Vec::with_capacity(n_agents);
    for i in 0..n_agents {
        let train = take(num(&format!("agent.{i}.train"))?)?;
        let test = take(num(&format!("agent.{i}.test"))?)?;
        agents.push(AgentDataset {
            agent_id: num(&format!("agent.{i}.id"))?,
            train,
            test,
            class_map: class_map.clone(),
        });
    }
    let global_test = take(num("global_test")?)?;
    if cursor != values.len() {
        return Err(Error::Cache(
            "window file longer than manifest counts".into(),
        ));
    }
    Ok(CacheStatus::Hit(WindowCache {
        key: expected_key.to_string(),
        input_channels: channels,
        window_length: length,
        class_map,
        agents,
        global_test,
    }))
}
