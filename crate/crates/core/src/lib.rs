//! Discrete p-energy analysis on self-similar grid partitions.
//!
//! The crate builds the partition tree of a subdivision pattern (generalised
//! Sierpinski carpets and L-adic intervals), evaluates discrete p-energies on its
//! level graphs, solves p-harmonic Dirichlet problems for effective conductances,
//! estimates neighbour disparity constants, fits the conductance scaling exponent
//! and runs the cutoff construction of an unbounded function with bounded scaled
//! energies.

pub mod construction;
pub mod error;
pub mod disparity;
pub mod graph;
pub mod homogeneity;
pub mod measure;
pub mod partition;
pub mod penergy;

pub use error::{Error, Result};
pub use graph::Graph;
pub use measure::{CellFunction, SelfSimilarMeasure, SparseCellFunction};
pub use partition::{AdjacencyMode, CellSet, CellWord, LevelGraph, Partition, SubdivisionScheme};
pub use penergy::{ConductanceResult, DirichletProblem, SolverOptions};
