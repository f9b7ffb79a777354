//! Least-energy block-wise and fully nontrivial solutions of weakly
//! coupled elliptic systems
//!
//! ```text
//! -Δu_i + λ_i u_i = Σ_j β_ij |u_j|^p |u_i|^{p-2} u_i,   i = 1..ℓ,
//! ```
//!
//! with mixed cooperative/competitive coupling, in the radial sector.
//! The solver reduces the problem to minimizing the functional
//! `Ψ(u) = 𝒥(s_u u)` over a product of unit spheres, where `s_u` places a
//! normalized block function on the natural constraint set, and also
//! solves the finite-dimensional synchronized system for amplitudes `c`.

pub mod cli;
pub mod discretize;
pub mod linalg;
pub mod minimize;
pub mod model;
pub mod nehari;
pub mod oracle;
pub mod perturb;
pub mod synchronized;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
    pub fn no_convergence(msg: impl Into<String>) -> Self {
        Error::NoConvergence(msg.into())
    }
}
