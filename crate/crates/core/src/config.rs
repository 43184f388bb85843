//! Scenario configuration.
//!
//! Positions and lengths are measured in wavelengths. Powers are linear and
//! normalized so that the default transmit budget is 1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Statistics of the path response matrix drawn by
/// [`sample_realization`](crate::channel::sample_realization).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrmModel {
    /// Square, diagonal, i.i.d. CN(0, 1/L) entries. Requires `L_T == L_R`.
    Diagonal,
    /// Every entry i.i.d. CN(0, 1/(L_T L_R)).
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub num_tx: usize,
    pub num_rx: usize,
    pub num_tx_paths: usize,
    pub num_rx_paths: usize,
    pub aperture_tx: f64,
    pub aperture_rx: f64,
    pub min_spacing: f64,
    pub power_budget: f64,
    pub noise_power: f64,
    pub trm_rho1: f64,
    pub trm_rho2: f64,
    pub trm_nu1: f64,
    pub trm_nu2: f64,
    pub trm_delta0: f64,
    pub trm_radius_tol: f64,
    pub trm_step_tol: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    pub convergence_tol: f64,
    pub rng_seed: u64,
    pub prm_model: PrmModel,
    /// Extra random feasible initializations tried by the optimizer on top of
    /// the uniform-grid and compact starts. The best final capacity wins.
    pub random_restarts: usize,
}

impl Default for SystemConfig {
    /// 8x8 link, three paths per side, 16 wavelength apertures, 0.1 wavelength
    /// minimum spacing and 5 dB SNR.
    fn default() -> Self {
        Self {
            num_tx: 8,
            num_rx: 8,
            num_tx_paths: 3,
            num_rx_paths: 3,
            aperture_tx: 16.0,
            aperture_rx: 16.0,
            min_spacing: 0.1,
            power_budget: 1.0,
            noise_power: 10f64.powf(-0.5),
            trm_rho1: 0.25,
            trm_rho2: 0.75,
            trm_nu1: 2.0,
            trm_nu2: 4.0,
            trm_delta0: 0.25,
            trm_radius_tol: 1e-6,
            trm_step_tol: 1e-8,
            max_outer_iters: 50,
            max_inner_iters: 10,
            convergence_tol: 1e-4,
            rng_seed: 1,
            prm_model: PrmModel::Diagonal,
            random_restarts: 0,
        }
    }
}

impl SystemConfig {
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.power_budget / self.noise_power).log10()
    }

    /// Sets the noise power so that `P_max / sigma^2` equals `snr_db`.
    pub fn with_snr_db(mut self, snr_db: f64) -> Self {
        self.noise_power = self.power_budget / 10f64.powf(snr_db / 10.0);
        self
    }

    /// Sets `M = N = count`, scaling both apertures by the same factor as the
    /// transmit antenna count.
    pub fn with_antennas(mut self, count: usize) -> Self {
        let scale = count as f64 / self.num_tx as f64;
        self.aperture_tx *= scale;
        self.aperture_rx *= count as f64 / self.num_rx as f64;
        self.num_tx = count;
        self.num_rx = count;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, v) in [
            ("num_tx", self.num_tx),
            ("num_rx", self.num_rx),
            ("num_tx_paths", self.num_tx_paths),
            ("num_rx_paths", self.num_rx_paths),
            ("max_inner_iters", self.max_inner_iters),
            ("max_outer_iters", self.max_outer_iters),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        for (name, v) in [
            ("aperture_tx", self.aperture_tx),
            ("aperture_rx", self.aperture_rx),
            ("min_spacing", self.min_spacing),
            ("power_budget", self.power_budget),
            ("noise_power", self.noise_power),
            ("trm_delta0", self.trm_delta0),
            ("trm_radius_tol", self.trm_radius_tol),
            ("trm_step_tol", self.trm_step_tol),
            ("convergence_tol", self.convergence_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and strictly positive, got {v}"));
            }
        }
        if !(0.0 < self.trm_rho1 && self.trm_rho1 < self.trm_rho2 && self.trm_rho2 < 1.0) {
            return bad(format!(
                "need 0 < trm_rho1 < trm_rho2 < 1, got {} and {}",
                self.trm_rho1, self.trm_rho2
            ));
        }
        if !(self.trm_nu1 > 1.0 && self.trm_nu2 > 1.0) {
            return bad("trm_nu1 and trm_nu2 must exceed 1".into());
        }
        if (self.num_tx - 1) as f64 * self.min_spacing > self.aperture_tx {
            return bad(format!(
                "{} transmit antennas at spacing {} do not fit in aperture {}",
                self.num_tx, self.min_spacing, self.aperture_tx
            ));
        }
        if (self.num_rx - 1) as f64 * self.min_spacing > self.aperture_rx {
            return bad(format!(
                "{} receive antennas at spacing {} do not fit in aperture {}",
                self.num_rx, self.min_spacing, self.aperture_rx
            ));
        }
        if self.prm_model == PrmModel::Diagonal && self.num_tx_paths != self.num_rx_paths {
            return bad("diagonal path response model requires num_tx_paths == num_rx_paths".into());
        }
        Ok(())
    }

    /// Parses `key = value` text. Every key must name a field of this struct,
    /// except `snr_db`, which is accepted in place of `noise_power`. Missing
    /// keys keep their default values.
    pub fn from_text(text: &str) -> std::result::Result<Self, String> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
        let snr_db = match table.remove("snr_db") {
            None => None,
            Some(v) => {
                if table.contains_key("noise_power") {
                    return Err("snr_db and noise_power are mutually exclusive".into());
                }
                Some(
                    v.as_float()
                        .or_else(|| v.as_integer().map(|i| i as f64))
                        .ok_or("snr_db must be a number")?,
                )
            }
        };
        let mut cfg: SystemConfig = table.try_into().map_err(|e: toml::de::Error| e.to_string())?;
        if let Some(db) = snr_db {
            cfg = cfg.with_snr_db(db);
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text).map_err(|message| Error::Parse {
            path: path.to_path_buf(),
            message,
        })
    }
}
