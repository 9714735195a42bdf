//! Seeded synthetic session logs drawn from a sparse Markov chain.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Interaction;
use crate::error::DataError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_items: usize,
    pub n_sessions: usize,
    /// Expected number of extra items after the first two.
    pub mean_extra_length: f64,
    /// Successors per item in the transition graph.
    pub branching: usize,
    /// Probability of jumping to a popularity-weighted random item instead
    /// of following the chain.
    pub jump_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_items: 200,
            n_sessions: 5000,
            mean_extra_length: 3.0,
            branching: 4,
            jump_prob: 0.15,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_items < 2 {
            return Err(format!("synth.n_items must be at least 2, got {}", self.n_items));
        }
        if self.branching == 0 || self.branching > self.n_items {
            return Err(format!("synth.branching must lie in 1..={}, got {}", self.n_items, self.branching));
        }
        if !(0.0..=1.0).contains(&self.jump_prob) {
            return Err(format!("synth.jump_prob must lie in [0, 1], got {}", self.jump_prob));
        }
        if !(self.mean_extra_length.is_finite() && self.mean_extra_length >= 0.0) {
            return Err(format!("synth.mean_extra_length must be nonnegative, got {}", self.mean_extra_length));
        }
        Ok(())
    }
}

/// Generates interactions. Item tokens are `i{k}`, session ids `s{k}`, and
/// timestamps increase by one per interaction in generation order.
pub fn generate(config: &SynthConfig) -> Vec<Interaction> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_items;
    // Zipf-like popularity over a random permutation of items
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    let mut popularity = vec![0.0; n];
    for (rank, &item) in perm.iter().enumerate() {
        popularity[item] = 1.0 / (rank as f64 + 1.0).powf(0.8);
    }
    let popular = WeightedIndex::new(&popularity).expect("positive weights");

    let successors: Vec<(Vec<usize>, WeightedIndex<f64>)> = (0..n)
        .map(|i| {
            let picks: Vec<usize> = sample(&mut rng, n - 1, config.branching.min(n - 1))
                .into_iter()
                .map(|k| if k >= i { k + 1 } else { k })
                .collect();
            let weights: Vec<f64> = (0..picks.len()).map(|r| 1.0 / (r as f64 + 1.0)).collect();
            (picks, WeightedIndex::new(weights).expect("positive weights"))
        })
        .collect();

    let stop = 1.0 / (config.mean_extra_length + 1.0);
    let mut out = Vec::new();
    let mut clock = 0i64;
    for s in 0..config.n_sessions {
        let mut item = popular.sample(&mut rng);
        let mut len = 0;
        loop {
            clock += 1;
            out.push(Interaction {
                session_id: format!("s{s}"),
                item_id: format!("i{item}"),
                timestamp: clock,
            });
            len += 1;
            if len >= 2 && rng.gen_bool(stop) {
                break;
            }
            item = if rng.gen_bool(config.jump_prob) {
                popular.sample(&mut rng)
            } else {
                let (next, dist) = &successors[item];
                next[dist.sample(&mut rng)]
            };
        }
    }
    out
}

pub fn write_log(interactions: &[Interaction], path: impl AsRef<Path>, delimiter: char) -> Result<(), DataError> {
    let path = path.as_ref();
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for it in interactions {
        writeln!(w, "{}{delimiter}{}{delimiter}{}", it.session_id, it.item_id, it.timestamp).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::group_sessions;

    #[test]
    fn same_seed_same_log() {
        let cfg = SynthConfig {
            n_sessions: 50,
            n_items: 20,
            ..SynthConfig::default()
        };
        assert_eq!(generate(&cfg), generate(&cfg));
        let other = SynthConfig { seed: 7, ..cfg.clone() };
        assert_ne!(generate(&cfg), generate(&other));
    }

    #[test]
    fn sessions_have_at_least_two_items() {
        let cfg = SynthConfig {
            n_sessions: 100,
            n_items: 10,
            ..SynthConfig::default()
        };
        let sessions = group_sessions(&generate(&cfg));
        assert_eq!(sessions.len(), 100);
        assert!(sessions.iter().all(|s| s.len() >= 2));
    }

    #[test]
    fn validation() {
        assert!(SynthConfig::default().validate().is_ok());
        assert!(SynthConfig { n_items: 1, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { branching: 0, ..SynthConfig::default() }.validate().is_err());
    }
}
