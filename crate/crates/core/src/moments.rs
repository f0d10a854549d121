//! Closed-form moments of complex Gaussian vectors and of the inverse of a
//! complex Wishart matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which set of inverse-Wishart constants the ZF closed forms use.
///
/// `Complex` holds the moments of `(G^H G)^{-1}` for circularly-symmetric
/// complex Gaussian `G`, which is what the channel model produces.
/// `Printed` reproduces the real-Wishart constants of the published
/// closed form (shift `N - 2K - 1` in the mean, `(N - 2K)(N - 2K - 3)` in
/// the pair sum, and self-interference without the cross term) for
/// side-by-side comparison; the sampling oracle rejects it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WishartConvention {
    #[default]
    Complex,
    Printed,
}

/// Moments of `Omega = (hat G^H hat G)^{-1}` where the columns of `hat G`
/// are independent `CN(0, s_j I_N)`. All `s` arguments are column variances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseWishart {
    pub convention: WishartConvention,
    /// Degrees of freedom in excess of the dimension, `N - 2K`.
    q: f64,
}

impl InverseWishart {
    /// Needs `N - 2K > 3`, the range over which every constant is finite
    /// under both conventions.
    pub fn new(n_antennas: usize, n_users: usize, convention: WishartConvention) -> Result<Self> {
        if n_antennas <= n_users + 3 {
            return Err(Error::NotApplicable(format!(
                "inverse-Wishart moments need N > 2K + 3 (N = {n_antennas}, 2K = {n_users})"
            )));
        }
        Ok(InverseWishart {
            convention,
            q: (n_antennas - n_users) as f64,
        })
    }

    /// `E[omega_jj]`.
    pub fn diag_mean(&self, s: f64) -> f64 {
        match self.convention {
            WishartConvention::Complex => 1.0 / (self.q * s),
            WishartConvention::Printed => 1.0 / ((self.q - 1.0) * s),
        }
    }

    /// `E[omega_jj^2]`.
    pub fn diag_second(&self, s: f64) -> f64 {
        let q = self.q;
        match self.convention {
            WishartConvention::Complex => 1.0 / (q * (q - 1.0) * s * s),
            WishartConvention::Printed => {
                (2.0 / (q * (q - 1.0).powi(2) * (q - 3.0)) + 1.0 / (q - 1.0).powi(2)) / (s * s)
            }
        }
    }

    /// `E[omega_jj omega_ll]` for `j != l`.
    pub fn diag_cross(&self, s_j: f64, s_l: f64) -> f64 {
        let q = self.q;
        let c = match self.convention {
            WishartConvention::Complex => 1.0 / (q * q - 1.0),
            WishartConvention::Printed => 2.0 / (q * (q - 1.0).powi(2) * (q - 3.0)) + 1.0 / (q - 1.0).powi(2),
        };
        c / (s_j * s_l)
    }

    /// `E[|omega_jl|^2]` for `j != l`.
    pub fn offdiag_second(&self, s_j: f64, s_l: f64) -> f64 {
        let q = self.q;
        let c = match self.convention {
            WishartConvention::Complex => 1.0 / (q * (q * q - 1.0)),
            WishartConvention::Printed => 2.0 / ((q - 1.0).powi(2) * (q - 3.0)),
        };
        c / (s_j * s_l)
    }

    /// `eta = E[Tr(Omega^* T Omega T)]`, a sum over users of
    /// `E[omega_jj omega_j'j'] + E[|omega_jj'|^2]`.
    pub fn eta(&self, est_var: &[f64]) -> f64 {
        let q = self.q;
        let c = match self.convention {
            WishartConvention::Complex => 1.0 / (q * (q - 1.0)),
            WishartConvention::Printed => 1.0 / (q * (q - 3.0)),
        };
        (0..est_var.len())
            .map(|j| c / (est_var[j] * est_var[crate::partner(j)]))
            .sum()
    }
}

/// Moments of independent `a ~ CN(0, s_a I_N)`, `b ~ CN(0, s_b I_N)`.
pub mod gaussian {
    /// `E[|a^H b|^2]`.
    pub fn inner_second(n: usize, s_a: f64, s_b: f64) -> f64 {
        n as f64 * s_a * s_b
    }

    /// `E[||a||^4]`.
    pub fn norm_fourth(n: usize, s_a: f64) -> f64 {
        let n = n as f64;
        n * (n + 1.0) * s_a * s_a
    }

    /// `E[|a^H b|^4]`.
    pub fn inner_fourth(n: usize, s_a: f64, s_b: f64) -> f64 {
        let n = n as f64;
        2.0 * n * (n + 1.0) * (s_a * s_b).powi(2)
    }

    /// `E[||a||^2 |a^H b|^2]`.
    pub fn norm_inner(n: usize, s_a: f64, s_b: f64) -> f64 {
        let n = n as f64;
        n * (n + 1.0) * s_a * s_a * s_b
    }
}
