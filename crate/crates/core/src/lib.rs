//! Capacity maximization for point-to-point MIMO links whose antennas can
//! move along a line, with the mutual coupling between closely spaced
//! elements taken into account.
//!
//! The effective channel is `C_R^{-1/2} F^H Sigma G C_T^{-1/2}`, where `G`
//! and `F` stack the steering vectors of the propagation paths and `C_T`,
//! `C_R` are the sinc coupling matrices of the two arrays. Capacity is
//! maximized by block coordinate ascent: water-filling for the transmit
//! covariance, then a scalar trust-region step for each antenna position.

pub mod allocation;
pub mod bca;
pub mod channel;
pub mod config;
pub mod coupling;
pub mod derivcheck;
pub mod error;
pub mod experiment;
pub mod optimizer;

pub use allocation::{capacity, optimal_allocation, waterfill, PowerAllocation};
pub use bca::{baseline_cla, baseline_ncma, baseline_ula, optimize, BcaTrace, Scheme, SchemeResult};
pub use channel::{raw_channel, sample_realization, AntennaLayout, CMat, ChannelRealization, RMat};
pub use config::{PrmModel, SystemConfig};
pub use coupling::{decompose, mc_matrix, CouplingDecomposition};
pub use error::{Error, Result};
pub use experiment::{run_experiment, ExperimentSpec, ResultRow, SweepAxis};
pub use optimizer::{CouplingModel, DerivativePair, LinkState};
