//! Simulation and reconstruction toolkit for in-line measurement of
//! two-mode multi-photon states in a detuned waveguide coupler.
//!
//! A pair of coupled waveguides carries an N-photon two-mode state past
//! a set of weakly coupled click detectors. Each detector position and
//! waveguide choice fixes a single-photon analysis state on the Bloch
//! sphere; N-fold coincidences across detector subsets probe the
//! permutation-symmetric sector of the state. This crate models the
//! coupler, builds the resulting measurement frames, scores their
//! conditioning, and reconstructs states from (optionally noisy)
//! coincidence data, including a pipeline that starts from raw
//! fluorescence-style intensity traces.

pub mod cli;
pub mod conditioning;
pub mod coupler;
pub mod error;
pub mod fluorescence;
pub mod measurement;
pub mod reconstruction;
pub mod state;

pub use conditioning::{
    condition_number, minimal_even_detectors, optimize_dz, optimize_free_positions, sweep_beta,
    sweep_detectors, ConditioningReport, DzOptimum, FreeOptimum, SweepPoint,
    OPTIMAL_DETUNING_RATIO,
};
pub use coupler::{bloch_coords, AnalysisState, BlochVector, CouplerParams, Waveguide};
pub use error::{Error, Result};
pub use fluorescence::{
    device_coupler, load_trace, save_trace, simulate_trace, sweep_windows, theory_state,
    window_reconstruct, write_trajectory_csv, IntensityTrace, WindowReport, WindowSweep,
    DEFAULT_SAMPLE_SPACING_MM, DEVICE_COUPLING, DEVICE_DETUNING, DEVICE_LENGTH_MM,
};
pub use measurement::{
    build_b, coincidence_operator, combination_count, enumerate_combinations, gamma_fock_oracle,
    gamma_tensor, sample_counts, BMatrix, Combination, CorrelationValues, CorrelationVector,
    Detector, DetectorLayout,
};
pub use reconstruction::{
    linear_reconstruct, ml_reconstruct, psd_project, reconstruct_and_score, score_over_seeds,
    Likelihood, Method, MlModel, MlOptions, ReconstructionResult,
};
pub use state::{
    density_to_params, dim_params, fidelity, fock_bridge, make_noon, make_product, make_single,
    params_to_density, params_to_matrix, twirl, DensityMatrix, ParamVector, PhotonNumber,
    SymPauliBasis,
};
