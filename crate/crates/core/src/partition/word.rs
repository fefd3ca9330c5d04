use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A vertex of the partition tree: the sequence of child symbols from the root.
///
/// The empty word is the reference point. `level()` is the word length.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellWord(Vec<u16>);

impl CellWord {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn from_symbols(symbols: impl Into<Vec<u16>>) -> Self {
        Self(symbols.into())
    }

    pub fn symbols(&self) -> &[u16] {
        &self.0
    }

    pub fn level(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    /// Parent in the tree; the root is its own parent.
    pub fn parent(&self) -> Self {
        self.ancestor(1)
    }

    /// `pi^k(self)`.
    pub fn ancestor(&self, k: usize) -> Self {
        let keep = self.0.len().saturating_sub(k);
        Self(self.0[..keep].to_vec())
    }

    pub fn child(&self, symbol: u16) -> Self {
        let mut s = self.0.clone();
        s.push(symbol);
        Self(s)
    }

    /// Lexicographic index among the words of the same level (`branching^level` of them).
    pub fn index(&self, branching: usize) -> usize {
        self.0.iter().fold(0, |acc, &s| acc * branching + s as usize)
    }

    pub fn from_index(level: usize, mut idx: usize, branching: usize) -> Self {
        let mut s = vec![0u16; level];
        for slot in s.iter_mut().rev() {
            *slot = (idx % branching) as u16;
            idx /= branching;
        }
        Self(s)
    }

    pub(crate) fn check(&self, branching: usize) -> Result<()> {
        if let Some(&bad) = self.0.iter().find(|&&s| s as usize >= branching) {
            return Err(Error::InvalidWord {
                word: self.to_string(),
                msg: format!("symbol {bad} >= branching {branching}"),
            });
        }
        Ok(())
    }
}

impl fmt::Display for CellWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("∅");
        }
        for (k, s) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(".")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl FromStr for CellWord {
    type Err = Error;

    /// Dotted or comma separated symbols; `∅`, `root` or the empty string give the root.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "∅" || s == "root" {
            return Ok(Self::root());
        }
        s.split(['.', ','])
            .map(|t| {
                t.trim().parse::<u16>().map_err(|e| Error::InvalidWord {
                    word: s.to_string(),
                    msg: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parent_of_root_is_root() {
        assert_eq!(CellWord::root().parent(), CellWord::root());
        let w: CellWord = "3".parse().unwrap();
        assert!(w.parent().is_root());
        let w: CellWord = "1.2.3".parse().unwrap();
        assert_eq!(w.parent().parent(), w.ancestor(2));
        assert_eq!(w.ancestor(2).to_string(), "1");
    }

    #[test]
    fn index_round_trip() {
        for idx in 0..512 {
            let w = CellWord::from_index(3, idx, 8);
            assert_eq!(w.level(), 3);
            assert_eq!(w.index(8), idx);
        }
        assert_eq!("∅".parse::<CellWord>().unwrap(), CellWord::root());
        assert!("1.x".parse::<CellWord>().is_err());
    }
}
