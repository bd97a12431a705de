//! Pseudospectral simulator for coarse-grained free quantum fields.
//!
//! The projected evolution equation is integrated per spectral mode with its
//! memory kernel and fluctuation drive, Madelung hydrodynamic fields are
//! extracted from the snapshots, and a set of quantitative diagnostics tests
//! whether the run behaves like a classical perfect fluid: stationarity under
//! changes of the averaging length, absence of nodal regions in the smeared
//! amplitude, a bound on the quantum force, and the associated temperature.

pub mod calculus;
pub mod classicality;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod hydro;
pub mod madelung;
pub mod pipeline;
pub mod projector;
pub mod states;

pub use error::{Error, Result};

/// Size the global worker pool; must run before any parallel work and has no
/// effect once the pool exists.
pub fn build_thread_pool(threads: usize) -> std::result::Result<(), rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
}
pub use evolution::{
    evolve_zwanzig, schrodinger_reference, EvolveOptions, FluctuationMode, FluctuationSource,
    MemoryStrategy, Trajectory,
};
pub use grid::{dispersion, Grid, OmegaTable, Representation, WaveFunction};
pub use hydro::{EnergyBreakdown, FieldSet, KappaParenthesization, PrefactorMode};
pub use madelung::{HydroFields, MadelungDecomposition, PhaseStructure};
pub use projector::{ExponentFactor, KernelSet, ProjectorSymbol};
