//! Message-to-user aggregation.
//!
//! Each user's vector is the unweighted mean of their message vectors.
//! Messages are sorted by message id before accumulation and sums are kept
//! in `f64`, so the result does not depend on input row order or on how
//! many threads run the aggregation.

use std::collections::BTreeMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, Level};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationConfig {
    /// At most this many messages per user, sampled without replacement.
    pub message_cap: Option<usize>,
    pub seed: u64,
}

pub fn aggregate_users(messages: &EmbeddingTable, cfg: &AggregationConfig) -> Result<EmbeddingTable> {
    if messages.level() != Level::Message {
        return Err(Error::data("aggregation needs a message-level table"));
    }
    if messages.rows() == 0 {
        return Err(Error::data("no messages to aggregate"));
    }
    if cfg.message_cap == Some(0) {
        return Err(Error::Config("message_cap must be at least 1".into()));
    }
    let groups = messages.groups().expect("message-level tables carry groups");

    let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (row, g) in groups.iter().enumerate() {
        by_user.entry(g.as_str()).or_default().push(row);
    }

    let dims = messages.dims();
    let users: Vec<(&str, Vec<usize>)> = by_user.into_iter().collect();
    let rows: Vec<Vec<f32>> = users
        .par_iter()
        .map(|(user, rows)| {
            let mut rows = rows.clone();
            rows.sort_by(|&a, &b| messages.ids()[a].cmp(&messages.ids()[b]));
            let chosen = match cfg.message_cap {
                Some(cap) if rows.len() > cap => {
                    let mut rng = seed::rng(seed::derive(cfg.seed, user.as_bytes()));
                    let mut picks = index::sample(&mut rng, rows.len(), cap).into_vec();
                    picks.sort_unstable();
                    picks.into_iter().map(|i| rows[i]).collect()
                }
                _ => rows,
            };
            let mut acc = vec![0f64; dims];
            for &r in &chosen {
                for (a, &v) in acc.iter_mut().zip(messages.row(r)) {
                    *a += v as f64;
                }
            }
            let n = chosen.len() as f64;
            acc.into_iter().map(|s| (s / n) as f32).collect()
        })
        .collect();

    let ids = users.iter().map(|(u, _)| u.to_string()).collect();
    EmbeddingTable::users(ids, rows.concat(), dims)
}
