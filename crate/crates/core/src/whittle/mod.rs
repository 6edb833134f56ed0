//! Whittle-type estimation from the periodogram of a renewal-sampled series.

pub mod estimate;
pub mod optimize;
pub mod periodogram;
pub mod spectrum;

pub use estimate::{
    aliasing_diagnostic, estimate, estimate_noise_variance, objective_k, objective_k_against, objective_khat,
    AliasingReport, EstimationMode, EstimationResult, EstimatorConfig, WhittleObjective,
};
pub use periodogram::{integrated_periodogram, periodogram, IntegrationMethod, PeriodogramGrid};
pub use spectrum::{
    spectral_density_z, spectral_density_z_general, truncated_spectral_density_z, DensityGrid, RescaledDensity,
    SpectralContext,
};
