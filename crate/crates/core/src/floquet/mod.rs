//! Quantum layer: grids and states, split-step propagation, Floquet spectra,
//! band diagrams and exact splittings.

mod grid;
mod propagate;
mod spectrum;

pub use grid::{
    coherent_overlap, coherent_state, husimi, isotropic_width, width_for_momentum_spread, PhaseGrid, SpatialGrid,
    WaveFunction,
};
pub use propagate::{evolve_period, evolve_static, BetaSchedule, Propagator};
pub use spectrum::{
    band_diagram, circular_distance, doublet, floquet_spectrum, propagator_matrix, quasienergy, splitting, BandDiagram,
    FloquetSpectrum, IslandKind, IslandPair, PropagatorMatrix, SplittingMethod, SplittingSample, SplittingSettings,
    TagSettings,
};
