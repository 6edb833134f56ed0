//! Asymptotic covariance of the estimator: weights, `W`, `Q` and `Σ₀`.

pub mod covariance;
pub mod derivative;
pub mod moments;
pub mod monte_carlo;
pub mod series;
pub mod weight;

pub use covariance::{
    asymptotic_covariance, limit_j, monte_carlo_covariance, sandwich, series_covariance, AsymptoticCovariance,
    CovarianceMethod,
};
pub use derivative::{derivative_weight, hessian_k, matrix_w, richardson_ratio, DerivativeWeights, FdScheme, FdStep};
pub use moments::{
    case_folds, case_layout, classify, covariance_u, expected_u, fourth_moment_m, matching_cases, CovarianceTerm,
    FourthMoment, MomentKernel, NodeSettings,
};
pub use monte_carlo::{monte_carlo_q_weights, MonteCarloQ, MonteCarloSettings};
pub use series::{matrix_q_weights, q_entry_by_terms, variance_sigma_j, SeriesQ, SeriesSettings, Truncation};
pub use weight::{CauchyWeight, GridWeight, WeightFunction};

/// Serializes matrices as nested rows.
pub(crate) mod rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let n = rows.len();
        let c = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != c) {
            return Err("ragged matrix rows".into());
        }
        Ok(DMatrix::from_fn(n, c, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
            m.as_ref().map(to_rows).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
            Option::<Vec<Vec<f64>>>::deserialize(d)?
                .map(|r| from_rows(&r).map_err(serde::de::Error::custom))
                .transpose()
        }
    }
}
