//! Shared workloads for the criterion benchmarks.

use pcarpet_core::{CellWord, Partition};

/// The level-1 word at the lower-left corner of a scheme.
pub fn corner_word(partition: &Partition) -> CellWord {
    CellWord::from_symbols(vec![partition.scheme().corner_symbol()])
}
