//! Interaction data: catalog, TSV ingestion, synthetic generation, splits and
//! batching.

mod batch;
mod catalog;
mod split;
mod synth;
mod tsv;

pub use batch::{make_batches, make_example, Batch, BatchSpec, Example};
pub use catalog::{Catalog, Dataset, Event, InteractionSequence};
pub use split::{corrupt_domains, leave_one_out, Holdout, LeaveOneOut, Target};
pub use synth::{synthesize, GroundTruth, Scenario, SynthConfig};
pub use tsv::{load_tsv, read_tsv, save_tsv, write_tsv};

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub name: String,
    pub items: usize,
    pub interactions: usize,
}

/// Summary counts written next to a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub mean_length: f64,
    /// `1 - interactions / (users · items)`.
    pub sparsity: f64,
    pub domains: Vec<DomainStats>,
    pub catalog: Catalog,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
}

impl Manifest {
    pub fn describe(data: &Dataset, synth: Option<&SynthConfig>) -> Self {
        let users = data.sequences.len();
        let items = data.catalog.num_items();
        let interactions = data.interactions();
        let mut per = vec![0usize; data.catalog.num_domains()];
        for e in data.sequences.iter().flat_map(|s| &s.events) {
            per[e.domain] += 1;
        }
        let domains = data
            .catalog
            .domain_names
            .iter()
            .enumerate()
            .map(|(d, name)| DomainStats {
                name: name.clone(),
                items: data.catalog.items_of(d).len(),
                interactions: per[d],
            })
            .collect();
        let cells = (users * items) as f64;
        Manifest {
            users,
            items,
            interactions,
            mean_length: if users == 0 { 0.0 } else { interactions as f64 / users as f64 },
            sparsity: if cells == 0.0 { 1.0 } else { 1.0 - interactions as f64 / cells },
            domains,
            catalog: data.catalog.clone(),
            synth: synth.cloned(),
        }
    }
}
