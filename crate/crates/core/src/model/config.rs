use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training objective, which also fixes the attention mask and readout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Next-item prediction under a causal mask; readout is the last real token.
    #[default]
    CausalNextItem,
    /// Masked-token prediction with bidirectional attention; readout is the
    /// last masked position.
    MaskedToken,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    /// Maximum number of item positions per sequence.
    pub max_seq_len: usize,
    /// Number of catalog items (all domains).
    pub vocab_size: usize,
    /// Number of domains; sizes the bottleneck-token table.
    pub num_domains: usize,
    pub ffn_multiplier: usize,
    pub objective: Objective,
    pub mask_probability: f64,
    /// Bottleneck tokens per domain; 0 disables the bottleneck layout.
    pub ib_tokens: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            num_layers: 6,
            num_heads: 4,
            max_seq_len: 50,
            vocab_size: 0,
            num_domains: 2,
            ffn_multiplier: 4,
            objective: Objective::CausalNextItem,
            mask_probability: 0.2,
            ib_tokens: 0,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::config("model.embed_dim", "must be positive"));
        }
        if self.num_heads == 0 || self.embed_dim % self.num_heads != 0 {
            return Err(Error::config("model.num_heads", "must divide embed_dim"));
        }
        if self.num_layers == 0 {
            return Err(Error::config("model.num_layers", "must be positive"));
        }
        if self.max_seq_len < 2 {
            return Err(Error::config("model.max_seq_len", "must be at least 2"));
        }
        if self.vocab_size == 0 {
            return Err(Error::config("model.vocab_size", "must be positive"));
        }
        if self.ffn_multiplier == 0 {
            return Err(Error::config("model.ffn_multiplier", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.mask_probability) {
            return Err(Error::config("model.mask_probability", "must lie in [0, 1]"));
        }
        if self.ib_tokens > 0 && self.num_domains == 0 {
            return Err(Error::config("model.num_domains", "bottleneck tokens need at least one domain"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    pub fn tokens(&self) -> TokenSpace {
        TokenSpace { items: self.vocab_size, domains: self.num_domains, ib_per_domain: self.ib_tokens }
    }

    /// Rows in the positional table: bottleneck slots come first in each block.
    pub fn positions(&self) -> usize {
        self.max_seq_len + self.ib_tokens
    }
}

/// Layout of the embedding table: catalog items first, then padding, mask and
/// the per-domain bottleneck tokens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenSpace {
    pub items: usize,
    pub domains: usize,
    pub ib_per_domain: usize,
}

impl TokenSpace {
    pub fn pad(&self) -> usize {
        self.items
    }

    pub fn mask(&self) -> usize {
        self.items + 1
    }

    pub fn ib(&self, domain: usize, slot: usize) -> usize {
        debug_assert!(domain < self.domains && slot < self.ib_per_domain);
        self.items + 2 + domain * self.ib_per_domain + slot
    }

    pub fn table_rows(&self) -> usize {
        self.items + 2 + self.domains * self.ib_per_domain
    }

    pub fn is_item(&self, token: usize) -> bool {
        token < self.items
    }
}
