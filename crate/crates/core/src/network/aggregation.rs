use super::topology::Topology;
use crate::error::{Error, Result};
use crate::nn::ParameterVector;

/// Per-receiver weights over the senders it aggregates.
///
/// The weight of sender `j` is `|D_j|` regardless of the receiver, so every
/// column of the full weight matrix is the vector of dataset sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionWeights {
    /// `per_receiver[i]` = `(sender, weight)` sorted by sender.
    per_receiver: Vec<Vec<(usize, f64)>>,
    include_self: bool,
}

impl InteractionWeights {
    pub fn derive(
        topology: &Topology,
        dataset_sizes: &[usize],
        include_self: bool,
    ) -> Result<Self> {
        if dataset_sizes.len() != topology.num_agents() {
            return Err(Error::Usage(format!(
                "{} dataset sizes for {} agents",
                dataset_sizes.len(),
                topology.num_agents()
            )));
        }
        let per_receiver = (0..topology.num_agents())
            .map(|i| {
                let mut senders = topology.in_neighbors(i);
                if include_self {
                    senders.push(i);
                    senders.sort_unstable();
                }
                senders
                    .into_iter()
                    .map(|j| (j, dataset_sizes[j] as f64))
                    .collect()
            })
            .collect();
        Ok(Self {
            per_receiver,
            include_self,
        })
    }

    pub fn include_self(&self) -> bool {
        self.include_self
    }

    pub fn num_agents(&self) -> usize {
        self.per_receiver.len()
    }

    /// `w_i` as `(sender, weight)` pairs.
    pub fn for_receiver(&self, receiver: usize) -> &[(usize, f64)] {
        &self.per_receiver[receiver]
    }

    pub fn weight(&self, receiver: usize, sender: usize) -> Option<f64> {
        let w = &self.per_receiver[receiver];
        w.binary_search_by_key(&sender, |(s, _)| *s)
            .ok()
            .map(|i| w[i].1)
    }

    /// `w_i / (w_iᵀ 1)`; `None` when the total is zero.
    pub fn normalized(&self, receiver: usize) -> Option<Vec<(usize, f64)>> {
        let w = &self.per_receiver[receiver];
        let total: f64 = w.iter().map(|(_, v)| v).sum();
        (total > 0.0).then(|| w.iter().map(|&(s, v)| (s, v / total)).collect())
    }

    pub fn is_consistent_with(&self, topology: &Topology) -> bool {
        self.num_agents() == topology.num_agents()
            && (0..self.num_agents()).all(|i| {
                let mut expected = topology.in_neighbors(i);
                if self.include_self {
                    expected.push(i);
                    expected.sort_unstable();
                }
                expected
                    .iter()
                    .copied()
                    .eq(self.per_receiver[i].iter().map(|(s, _)| *s))
            })
    }
}

pub fn derive_weights(
    topology: &Topology,
    dataset_sizes: &[usize],
    include_self: bool,
) -> Result<InteractionWeights> {
    InteractionWeights::derive(topology, dataset_sizes, include_self)
}

/// One column of Θ with its weight.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborContribution<'a> {
    pub sender_id: usize,
    pub params: &'a ParameterVector,
    pub weight: f64,
}

/// Weighted mean `Θ w / (wᵀ 1)`.
///
/// Weights are normalized first (`w_j / Σw`) and the sum over senders runs in
/// ascending `sender_id` order, so the result does not depend on the order of
/// `contributions`. Each coordinate is clamped to the range spanned by the
/// inputs, which makes identical inputs map to themselves exactly.
///
/// Returns `Ok(None)` when the total weight is zero, which callers treat as
/// "keep current parameters".
pub fn aggregate(contributions: &[NeighborContribution<'_>]) -> Result<Option<ParameterVector>> {
    let Some(first) = contributions.first() else {
        return Ok(None);
    };
    let p = first.params.len();
    for c in contributions {
        if c.params.len() != p {
            return Err(Error::Architecture(format!(
                "contribution from agent {} has length {}, expected {p}",
                c.sender_id,
                c.params.len()
            )));
        }
        if !(c.weight >= 0.0 && c.weight.is_finite()) {
            return Err(Error::Usage(format!(
                "contribution from agent {} has invalid weight {}",
                c.sender_id, c.weight
            )));
        }
    }
    let mut sorted: Vec<&NeighborContribution<'_>> = contributions.iter().collect();
    sorted.sort_by_key(|c| c.sender_id);

    let total: f64 = sorted.iter().map(|c| c.weight).sum();
    if total <= 0.0 {
        return Ok(None);
    }
    let mut out = vec![0.0; p];
    let mut lo = vec![f64::INFINITY; p];
    let mut hi = vec![f64::NEG_INFINITY; p];
    for c in sorted {
        if c.weight == 0.0 {
            continue;
        }
        let w = c.weight / total;
        for (k, &v) in c.params.as_slice().iter().enumerate() {
            out[k] += w * v;
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    for k in 0..p {
        out[k] = out[k].clamp(lo[k], hi[k]);
    }
    Ok(Some(ParameterVector::new(out)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::topology::{build_topology, TopologyKind};

    fn contrib(
        sender_id: usize,
        params: &ParameterVector,
        weight: f64,
    ) -> NeighborContribution<'_> {
        NeighborContribution {
            sender_id,
            params,
            weight,
        }
    }

    #[test]
    fn dataset_size_weights() {
        let t = build_topology(2, TopologyKind::Full).unwrap();
        let w = derive_weights(&t, &[100, 300], false).unwrap();
        assert_eq!(w.for_receiver(0), &[(1, 300.0)]);
        assert_eq!(w.for_receiver(1), &[(0, 100.0)]);
        let w = derive_weights(&t, &[100, 300], true).unwrap();
        assert_eq!(w.for_receiver(0), &[(0, 100.0), (1, 300.0)]);
        assert_eq!(w.weight(1, 0), Some(100.0));
        assert!(w.is_consistent_with(&t));
    }

    #[test]
    fn symmetric_sizes_normalize_to_half() {
        let t = build_topology(3, TopologyKind::Full).unwrap();
        let w = derive_weights(&t, &[1, 1, 1], false).unwrap();
        for i in 0..3 {
            assert!(w.normalized(i).unwrap().iter().all(|&(_, v)| v == 0.5));
        }
    }

    #[test]
    fn zero_sized_receivers_skip() {
        let t = build_topology(2, TopologyKind::Full).unwrap();
        let w = derive_weights(&t, &[0, 5], false).unwrap();
        assert_eq!(w.normalized(1), None);
        assert!(w.normalized(0).is_some());
    }

    #[test]
    fn hand_evaluated_mean() {
        let a = ParameterVector::new(vec![0.0, 0.0]);
        let b = ParameterVector::new(vec![1.0, 1.0]);
        let out = aggregate(&[contrib(0, &a, 1.0), contrib(1, &b, 3.0)])
            .unwrap()
            .unwrap();
        assert_eq!(out.as_slice(), &[0.75, 0.75]);
    }

    #[test]
    fn single_and_identical() {
        let v = ParameterVector::new(vec![0.1, -2.5, 3.3]);
        assert_eq!(aggregate(&[contrib(4, &v, 7.0)]).unwrap().unwrap(), v);
        let out = aggregate(&[
            contrib(0, &v, 2.0),
            contrib(1, &v, 5.0),
            contrib(2, &v, 9.0),
        ])
        .unwrap()
        .unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn order_independent() {
        let a = ParameterVector::new(vec![0.3, 1.7]);
        let b = ParameterVector::new(vec![-0.9, 0.2]);
        let c = ParameterVector::new(vec![5.1, -4.4]);
        let x = aggregate(&[
            contrib(0, &a, 3.0),
            contrib(1, &b, 5.0),
            contrib(2, &c, 7.0),
        ])
        .unwrap();
        let y = aggregate(&[
            contrib(2, &c, 7.0),
            contrib(0, &a, 3.0),
            contrib(1, &b, 5.0),
        ])
        .unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn errors_and_skip() {
        let a = ParameterVector::new(vec![0.0; 2]);
        let b = ParameterVector::new(vec![0.0; 3]);
        assert!(matches!(
            aggregate(&[contrib(0, &a, 1.0), contrib(1, &b, 1.0)]),
            Err(Error::Architecture(_))
        ));
        assert_eq!(aggregate(&[contrib(0, &a, 0.0)]).unwrap(), None);
        assert_eq!(aggregate(&[]).unwrap(), None);
        assert!(aggregate(&[contrib(0, &a, -1.0)]).is_err());
    }
}
