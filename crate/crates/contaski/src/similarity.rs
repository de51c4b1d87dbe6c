//! Cosine similarity over capability sets and the threshold test that gates
//! cluster membership.

use serde::{Deserialize, Serialize};

use crate::model::CapabilitySet;

/// Minimum similarity for a neighbor to join a node's cluster.
/// Defaults to 0.65.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityThreshold(pub f64);

impl SimilarityThreshold {
    pub const DEFAULT: SimilarityThreshold = SimilarityThreshold(0.65);

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.0)
    }
}

impl Default for SimilarityThreshold {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, thiserror::Error)]
#[error("capability similarity is undefined for an empty set")]
pub struct EmptySetError;

/// Cosine similarity between two capability sets:
/// `|a ∩ b| / sqrt(|a| * |b|)`. Symmetric, in [0, 1], and equal to 1 only
/// when the sets are equal.
pub fn capability_similarity(a: &CapabilitySet, b: &CapabilitySet) -> Result<f64, EmptySetError> {
    if a.is_empty() || b.is_empty() {
        return Err(EmptySetError);
    }
    let inter = a.intersection_len(b) as f64;
    Ok(inter / ((a.len() as f64) * (b.len() as f64)).sqrt())
}

/// Threshold test for cluster membership. Inclusive comparison: similarity
/// exactly at the threshold admits the neighbor.
pub fn is_similar(
    a: &CapabilitySet,
    b: &CapabilitySet,
    t: SimilarityThreshold,
) -> Result<bool, EmptySetError> {
    Ok(capability_similarity(a, b)? >= t.0)
}

/// True iff every required capability is owned.
pub fn required_subset(required: &CapabilitySet, owned: &CapabilitySet) -> bool {
    required.is_subset(owned)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(names: &[&str]) -> CapabilitySet {
        CapabilitySet::from_names(names.iter().copied())
    }

    #[test]
    fn worked_example_values() {
        // sim({C1,C2}, {C1,C2,C3}) = 2/sqrt(6)
        let a = set(&["c1", "c2"]);
        let b = set(&["c1", "c2", "c3"]);
        let s = capability_similarity(&a, &b).unwrap();
        assert!((s - 2.0 / 6.0f64.sqrt()).abs() < 1e-12);

        // sim({C1,C2}, {C1,C2}) = 2/sqrt(4) = 1
        let c = set(&["c1", "c2"]);
        assert_eq!(capability_similarity(&a, &c).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_and_identity() {
        let a = set(&["c1"]);
        let b = set(&["c2"]);
        assert_eq!(capability_similarity(&a, &b).unwrap(), 0.0);
        assert_eq!(capability_similarity(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn empty_set_is_a_domain_error() {
        let a = set(&["c1"]);
        let empty = CapabilitySet::new();
        assert!(capability_similarity(&a, &empty).is_err());
        assert!(capability_similarity(&empty, &a).is_err());
        assert!(is_similar(&empty, &a, SimilarityThreshold::DEFAULT).is_err());
    }

    #[test]
    fn threshold_is_inclusive() {
        let a = set(&["c1", "c2"]);
        let b = set(&["c1", "c2", "c3"]);
        // 2/sqrt(6) = 0.8165 clears 0.65 but not 0.82.
        assert!(is_similar(&a, &b, SimilarityThreshold(0.65)).unwrap());
        assert!(!is_similar(&a, &b, SimilarityThreshold(0.82)).unwrap());
        // sim = 1 >= 1 for identical sets.
        assert!(is_similar(&a, &a, SimilarityThreshold(1.0)).unwrap());
    }

    #[test]
    fn required_subset_cases() {
        let owned = set(&["temperature", "humidity", "presence"]);
        assert!(required_subset(&set(&["temperature", "humidity"]), &owned));
        assert!(!required_subset(&set(&["temperature", "light"]), &owned));
        assert!(required_subset(&owned, &owned));
    }
}
