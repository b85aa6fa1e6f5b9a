use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Item universe: every global item id belongs to exactly one domain.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub domain_names: Vec<String>,
    /// Domain of every global item id.
    pub item_domain: Vec<usize>,
    /// External item ids, when they differ from the global ids.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub item_names: Vec<String>,
}

impl Catalog {
    /// Contiguous ranges: domain `d` owns `sizes[d]` consecutive ids.
    pub fn contiguous(domain_names: Vec<String>, sizes: &[usize]) -> Result<Self> {
        if domain_names.len() != sizes.len() {
            return Err(Error::Shape("one size per domain".into()));
        }
        let item_domain = sizes.iter().enumerate().flat_map(|(d, &n)| std::iter::repeat(d).take(n)).collect();
        Ok(Self { domain_names, item_domain, item_names: Vec::new() })
    }

    pub fn num_items(&self) -> usize {
        self.item_domain.len()
    }

    pub fn num_domains(&self) -> usize {
        self.domain_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_domain.is_empty()
    }

    pub fn domain_of(&self, item: usize) -> Option<usize> {
        self.item_domain.get(item).copied()
    }

    pub fn items_of(&self, domain: usize) -> Vec<usize> {
        (0..self.item_domain.len()).filter(|&i| self.item_domain[i] == domain).collect()
    }

    pub fn domain_index(&self, name: &str) -> Option<usize> {
        self.domain_names.iter().position(|n| n == name)
    }

    pub fn item_name(&self, item: usize) -> String {
        self.item_names.get(item).cloned().unwrap_or_else(|| item.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub item: usize,
    pub domain: usize,
    pub timestamp: i64,
}

/// One user's time-ordered interactions across all domains.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionSequence {
    pub user: String,
    pub events: Vec<Event>,
}

impl InteractionSequence {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn items(&self) -> Vec<usize> {
        self.events.iter().map(|e| e.item).collect()
    }

    pub fn domains(&self) -> Vec<usize> {
        self.events.iter().map(|e| e.domain).collect()
    }

    /// Events of a single domain, order preserved.
    pub fn filter_domain(&self, domain: usize) -> InteractionSequence {
        InteractionSequence {
            user: self.user.clone(),
            events: self.events.iter().filter(|e| e.domain == domain).copied().collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub catalog: Catalog,
    pub sequences: Vec<InteractionSequence>,
}

impl Dataset {
    pub fn interactions(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }

    /// Keeps only one domain's events; users left without events are dropped.
    pub fn filter_domain(&self, domain: usize) -> Dataset {
        Dataset {
            catalog: self.catalog.clone(),
            sequences: self
                .sequences
                .iter()
                .map(|s| s.filter_domain(domain))
                .filter(|s| !s.is_empty())
                .collect(),
        }
    }
}
