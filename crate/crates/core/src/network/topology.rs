use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    /// Every ordered pair `i ≠ j`.
    Full,
    /// `i ↔ i+1 mod n`.
    Ring,
    /// Each agent receives from `k` distinct random senders.
    RandomK { k: usize, seed: u64 },
    /// No edges.
    Empty,
}

impl FromStr for TopologyKind {
    type Err = Error;

    /// `full`, `ring`, `none`, or `random-K[@SEED]`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "full" => return Ok(Self::Full),
            "ring" => return Ok(Self::Ring),
            "none" | "empty" => return Ok(Self::Empty),
            _ => {}
        }
        let bad = || Error::config("topology", 0, format!("unknown topology kind `{s}`"));
        let rest = s.strip_prefix("random-").ok_or_else(bad)?;
        let (k, seed) = match rest.split_once('@') {
            Some((k, seed)) => (k, seed.parse().map_err(|_| bad())?),
            None => (rest, 0),
        };
        Ok(Self::RandomK {
            k: k.parse().map_err(|_| bad())?,
            seed,
        })
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Full => write!(f, "full"),
            Self::Ring => write!(f, "ring"),
            Self::Empty => write!(f, "none"),
            Self::RandomK { k, seed } => write!(f, "random-{k}@{seed}"),
        }
    }
}

/// Directed communication graph; `(sender, receiver)` pairs, no self edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    num_agents: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Topology {
    pub fn from_edges(
        num_agents: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (s, r) in edges {
            if s >= num_agents || r >= num_agents {
                return Err(Error::Usage(format!(
                    "edge ({s}, {r}) outside {num_agents} agents"
                )));
            }
            if s != r {
                set.insert((s, r));
            }
        }
        Ok(Self {
            num_agents,
            edges: set,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, sender: usize, receiver: usize) -> bool {
        self.edges.contains(&(sender, receiver))
    }

    /// Senders that `receiver` hears from, ascending.
    pub fn in_neighbors(&self, receiver: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|(_, r)| *r == receiver)
            .map(|(s, _)| *s)
            .collect()
    }

    /// Receivers that `sender` talks to, ascending.
    pub fn out_neighbors(&self, sender: usize) -> Vec<usize> {
        self.edges
            .range((sender, 0)..(sender + 1, 0))
            .map(|(_, r)| *r)
            .collect()
    }
}

pub fn build_topology(num_agents: usize, kind: TopologyKind) -> Result<Topology> {
    if num_agents == 0 {
        return Err(Error::Usage("a network needs at least one agent".into()));
    }
    let n = num_agents;
    let edges: Vec<(usize, usize)> = match kind {
        TopologyKind::Full => (0..n)
            .flat_map(|s| (0..n).filter(move |&r| r != s).map(move |r| (s, r)))
            .collect(),
        TopologyKind::Ring => (0..n)
            .flat_map(|i| [(i, (i + 1) % n), ((i + 1) % n, i)])
            .collect(),
        TopologyKind::Empty => Vec::new(),
        TopologyKind::RandomK { k, seed } => {
            if k >= n && n > 1 {
                return Err(Error::config(
                    "topology",
                    0,
                    format!("random-{k} needs more than {k} agents, have {n}"),
                ));
            }
            let mut rng = rng_from_seed(seed);
            let mut edges = Vec::new();
            for r in 0..n {
                let mut others: Vec<usize> = (0..n).filter(|&s| s != r).collect();
                others.shuffle(&mut rng);
                edges.extend(others.into_iter().take(k).map(|s| (s, r)));
            }
            edges
        }
    };
    Topology::from_edges(n, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_counts() {
        assert_eq!(
            build_topology(4, TopologyKind::Full).unwrap().num_edges(),
            12
        );
        assert_eq!(
            build_topology(1, TopologyKind::Full).unwrap().num_edges(),
            0
        );
    }

    #[test]
    fn ring_of_three() {
        let t = build_topology(3, TopologyKind::Ring).unwrap();
        let edges: Vec<_> = t.edges().collect();
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]);
        let t = build_topology(5, TopologyKind::Ring).unwrap();
        assert_eq!(t.in_neighbors(0), vec![1, 4]);
        assert_eq!(t.out_neighbors(2), vec![1, 3]);
    }

    #[test]
    fn random_k_is_seeded() {
        let k = TopologyKind::RandomK { k: 2, seed: 4 };
        let a = build_topology(6, k).unwrap();
        assert_eq!(a, build_topology(6, k).unwrap());
        assert!((0..6).all(|r| a.in_neighbors(r).len() == 2));
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("full".parse::<TopologyKind>().unwrap(), TopologyKind::Full);
        assert_eq!(
            "random-3@9".parse::<TopologyKind>().unwrap(),
            TopologyKind::RandomK { k: 3, seed: 9 }
        );
        assert!(matches!(
            "star".parse::<TopologyKind>(),
            Err(Error::Config { .. })
        ));
        assert!(build_topology(0, TopologyKind::Full).is_err());
    }

    #[test]
    fn self_edges_dropped() {
        let t = Topology::from_edges(2, [(0, 0), (0, 1)]).unwrap();
        assert_eq!(t.num_edges(), 1);
    }
}
