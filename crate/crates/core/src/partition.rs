//! Splitting a retrieved list into consecutive fixed-size batches.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::ranking::Ranking;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub index: usize,
    pub doc_ids: Vec<String>,
}

/// Slices `ids` into batches of `batch_size` in order. The last batch holds
/// the remainder when the length is not a multiple of the batch size.
pub fn partition_ids(ids: &[String], batch_size: usize) -> Vec<Partition> {
    assert!(batch_size >= 1, "batch size must be at least 1");
    ids.chunks(batch_size)
        .enumerate()
        .map(|(index, chunk)| Partition { index, doc_ids: chunk.to_vec() })
        .collect()
}

pub fn context_map(retrieved: &Ranking, batch_size: usize) -> Vec<Partition> {
    partition_ids(&retrieved.id_vec(), batch_size)
}

/// Number of partitions `context_map` produces: `ceil(len / batch_size)`.
pub fn partition_count(len: usize, batch_size: usize) -> usize {
    len.div_ceil(batch_size)
}
