use serde::{Deserialize, Serialize};

/// Domain of every position in an encoder sequence. `None` marks positions
/// that are not catalog items (padding, bottleneck tokens, other specials).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainMap {
    domains: Vec<Option<usize>>,
}

impl DomainMap {
    pub fn new(domains: Vec<Option<usize>>) -> Self {
        Self { domains }
    }

    pub fn from_domains(domains: &[usize]) -> Self {
        Self { domains: domains.iter().map(|&d| Some(d)).collect() }
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<usize> {
        self.domains[i]
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.domains
    }

    /// Number of content (catalog item) positions.
    pub fn content_len(&self) -> usize {
        self.domains.iter().filter(|d| d.is_some()).count()
    }

    /// Pads with non-item positions up to `len`.
    pub fn padded(&self, len: usize) -> Self {
        let mut domains = self.domains.clone();
        domains.resize(len.max(domains.len()), None);
        Self { domains }
    }
}

/// One timestamped interaction inside a single-domain history.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stamped {
    pub item: usize,
    pub timestamp: i64,
}

/// Merges per-domain histories into one globally time-ordered sequence.
///
/// The merge is stable: equal timestamps keep each domain's own order, and
/// across domains the smaller domain id goes first.
pub fn stitch(per_domain: &[(usize, Vec<Stamped>)]) -> (Vec<(usize, usize, i64)>, DomainMap) {
    let mut all: Vec<(i64, usize, usize, usize)> = Vec::new();
    for (domain, seq) in per_domain {
        for (k, s) in seq.iter().enumerate() {
            all.push((s.timestamp, *domain, k, s.item));
        }
    }
    all.sort_by_key(|&(ts, d, k, _)| (ts, d, k));
    let merged: Vec<(usize, usize, i64)> = all.iter().map(|&(ts, d, _, item)| (item, d, ts)).collect();
    let map = DomainMap::from_domains(&merged.iter().map(|&(_, d, _)| d).collect::<Vec<_>>());
    (merged, map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(item: usize, timestamp: i64) -> Stamped {
        Stamped { item, timestamp }
    }

    #[test]
    fn single_domain_is_identity() {
        let seq = vec![s(3, 1), s(1, 5), s(2, 9)];
        let (merged, map) = stitch(&[(0, seq.clone())]);
        assert_eq!(merged.iter().map(|m| m.0).collect::<Vec<_>>(), vec![3, 1, 2]);
        assert_eq!(map.content_len(), 3);
    }

    #[test]
    fn interleaves_by_time() {
        let (merged, map) = stitch(&[(0, vec![s(10, 1), s(11, 3)]), (1, vec![s(20, 2)])]);
        assert_eq!(merged.iter().map(|m| m.1).collect::<Vec<_>>(), vec![0, 1, 0]);
        assert_eq!(map.as_slice(), &[Some(0), Some(1), Some(0)]);
    }
}
