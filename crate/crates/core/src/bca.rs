//! Block coordinate ascent over the transmit covariance and every antenna
//! position, plus the fixed-array and coupling-blind baselines.

use std::cell::RefCell;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::allocation::{capacity, optimal_allocation, PowerAllocation};
use crate::channel::{AntennaLayout, ChannelRealization};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::experiment::{snr_matrix_eigenvalues, superdirectivity_metric};
use crate::optimizer::{
    coordinate_bounds, rx_objective, rx_objective_derivatives, trm_update_coordinate, tx_objective,
    tx_objective_derivatives, CouplingModel, LinkState, TrmParams,
};

/// Spacing that zeroes coupling between isotropic elements.
pub const HALF_WAVELENGTH: f64 = 0.5;

/// Water-filling, or a silent allocation when the channel vanishes.
pub fn allocate(state: &LinkState, cfg: &SystemConfig) -> Result<PowerAllocation> {
    match optimal_allocation(&state.h, cfg.power_budget, cfg.noise_power) {
        Err(Error::ZeroChannel) => Ok(PowerAllocation::silent(state.h.ncols(), state.h.nrows())),
        other => other,
    }
}

#[derive(Debug, Clone)]
pub struct BcaTrace {
    /// Capacity in nats after each covariance update; entry 0 is the initial
    /// layout.
    pub capacities: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub converged: bool,
    pub final_layout: AntennaLayout,
    pub final_allocation: PowerAllocation,
}

impl BcaTrace {
    /// Completed outer sweeps.
    pub fn iterations(&self) -> usize {
        self.capacities.len() - 1
    }

    pub fn final_capacity(&self) -> f64 {
        *self.capacities.last().expect("trace holds the initial capacity")
    }
}

/// Caches the link state at the most recent trial coordinate so the
/// derivative call after an accepted step reuses it.
struct TrialCache<'a> {
    realization: &'a ChannelRealization,
    model: CouplingModel,
    base: AntennaLayout,
    tx_side: bool,
    index: usize,
    last: Option<(f64, LinkState)>,
}

impl<'a> TrialCache<'a> {
    fn state_at(&mut self, x: f64) -> Result<&LinkState> {
        let hit = matches!(&self.last, Some((v, _)) if *v == x);
        if !hit {
            let mut layout = self.base.clone();
            if self.tx_side {
                layout.tx[self.index] = x;
            } else {
                layout.rx[self.index] = x;
            }
            let state = LinkState::new(self.realization, &layout, self.model)?;
            self.last = Some((x, state));
        }
        Ok(&self.last.as_ref().expect("just filled").1)
    }
}

fn update_side(
    cfg: &SystemConfig,
    realization: &ChannelRealization,
    model: CouplingModel,
    layout: &mut AntennaLayout,
    cov: &nalgebra::DMatrix<num_complex::Complex64>,
    tx_side: bool,
    params: &TrmParams,
    counts: &mut (usize, usize),
) -> Result<()> {
    let count = if tx_side { layout.tx.len() } else { layout.rx.len() };
    let aperture = if tx_side { cfg.aperture_tx } else { cfg.aperture_rx };
    for index in 0..count {
        let positions = if tx_side { &layout.tx } else { &layout.rx };
        let bounds = coordinate_bounds(positions, index, aperture, cfg.min_spacing);
        let start = positions[index];
        let cache = RefCell::new(TrialCache {
            realization,
            model,
            base: layout.clone(),
            tx_side,
            index,
            last: None,
        });
        let noise = cfg.noise_power;
        let outcome = trm_update_coordinate(
            |x| {
                let mut c = cache.borrow_mut();
                let st = c.state_at(x)?;
                Ok(if tx_side {
                    tx_objective(st, cov, noise)
                } else {
                    rx_objective(st, cov, noise)
                })
            },
            |x| {
                let mut c = cache.borrow_mut();
                let st = c.state_at(x)?;
                if tx_side {
                    tx_objective_derivatives(st, realization, cov, noise, index)
                } else {
                    rx_objective_derivatives(st, realization, cov, noise, index)
                }
            },
            start,
            bounds,
            params,
        )?;
        counts.0 += outcome.accepted();
        counts.1 += outcome.rejected();
        if tx_side {
            layout.tx[index] = outcome.value;
        } else {
            layout.rx[index] = outcome.value;
        }
    }
    Ok(())
}

/// Runs the alternating optimization from `initial` under `model`.
///
/// Each sweep updates every transmit position against the current
/// covariance, re-solves the water-filling to obtain the reverse-link
/// covariance, updates every receive position against it, and finally
/// re-solves the covariance and records the capacity.
pub fn optimize_with_model(
    cfg: &SystemConfig,
    realization: &ChannelRealization,
    initial: &AntennaLayout,
    model: CouplingModel,
) -> Result<BcaTrace> {
    cfg.validate()?;
    initial.check_config(cfg).map_err(Error::InfeasibleInit)?;
    let params = TrmParams::from(cfg);
    let mut layout = initial.clone();
    let state = LinkState::new(realization, &layout, model)?;
    let mut allocation = allocate(&state, cfg)?;
    let mut capacities = vec![capacity(&state.h, &allocation.q, cfg.noise_power)];
    let mut counts = (0, 0);
    let mut converged = false;

    for _ in 0..cfg.max_outer_iters {
        update_side(cfg, realization, model, &mut layout, &allocation.q, true, &params, &mut counts)?;
        // Reverse-link covariance at the updated transmit layout; its
        // objective equals the capacity there, so the receive block can
        // only raise it.
        let state = LinkState::new(realization, &layout, model)?;
        let reverse = allocate(&state, cfg)?;
        update_side(cfg, realization, model, &mut layout, &reverse.s, false, &params, &mut counts)?;

        let state = LinkState::new(realization, &layout, model)?;
        allocation = allocate(&state, cfg)?;
        let cap = capacity(&state.h, &allocation.q, cfg.noise_power);
        let prev = *capacities.last().expect("non-empty");
        capacities.push(cap);
        if (cap - prev).abs() < cfg.convergence_tol {
            converged = true;
            break;
        }
    }
    debug_assert!(layout.check_config(cfg).is_ok());
    Ok(BcaTrace {
        capacities,
        accepted_steps: counts.0,
        rejected_steps: counts.1,
        converged,
        final_layout: layout,
        final_allocation: allocation,
    })
}

/// Coupling-aware optimization from `initial`.
pub fn optimize(cfg: &SystemConfig, realization: &ChannelRealization, initial: &AntennaLayout) -> Result<BcaTrace> {
    optimize_with_model(cfg, realization, initial, CouplingModel::Full)
}

/// Runs from the uniform grid, from the compact layout at `d_min` spacing
/// and from `cfg.random_restarts` random feasible layouts; keeps the run
/// with the highest final capacity (earliest wins ties).
///
/// Coordinate moves cannot escape the basin they start in, and the grid
/// start alone never reaches the superdirective packed layouts.
pub fn optimize_with_restarts<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    realization: &ChannelRealization,
    model: CouplingModel,
    rng: &mut R,
) -> Result<BcaTrace> {
    let mut starts = vec![AntennaLayout::uniform_grid(
        cfg.num_tx,
        cfg.num_rx,
        cfg.aperture_tx,
        cfg.aperture_rx,
    )];
    let compact = AntennaLayout::fixed_spacing(cfg.num_tx, cfg.num_rx, cfg.min_spacing);
    if compact.check_config(cfg).is_ok() && compact != starts[0] {
        starts.push(compact);
    }
    for _ in 0..cfg.random_restarts {
        starts.push(AntennaLayout::random_feasible(
            cfg.num_tx,
            cfg.num_rx,
            cfg.aperture_tx,
            cfg.aperture_rx,
            cfg.min_spacing,
            rng,
        ));
    }
    let mut best: Option<BcaTrace> = None;
    for init in &starts {
        let run = optimize_with_model(cfg, realization, init, model)?;
        if best.as_ref().is_none_or(|b| run.final_capacity() > b.final_capacity()) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one start"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    CMa,
    NcMa,
    Ula,
    Cla,
    /// NC-MA layouts re-evaluated under the true coupling model.
    NcMaAudit,
}

impl Scheme {
    pub const PRIMARY: [Scheme; 4] = [Scheme::CMa, Scheme::NcMa, Scheme::Ula, Scheme::Cla];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::CMa => "C-MA",
            Scheme::NcMa => "NC-MA",
            Scheme::Ula => "ULA",
            Scheme::Cla => "CLA",
            Scheme::NcMaAudit => "NC-MA-audit",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "c-ma" | "cma" => Ok(Scheme::CMa),
            "nc-ma" | "ncma" => Ok(Scheme::NcMa),
            "ula" => Ok(Scheme::Ula),
            "cla" => Ok(Scheme::Cla),
            "nc-ma-audit" => Ok(Scheme::NcMaAudit),
            other => Err(format!("unknown scheme '{other}' (expected c-ma, nc-ma, ula, cla)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub capacity_nats: f64,
    pub capacity_bits: f64,
    pub layout: AntennaLayout,
    pub allocation: PowerAllocation,
    pub model: CouplingModel,
    /// Outer sweeps; zero for fixed arrays.
    pub iterations: usize,
    /// Capacity after each covariance update, nats. Empty for fixed arrays.
    pub capacity_trace: Vec<f64>,
    pub p_trans: f64,
    pub gammas: Vec<f64>,
}

fn evaluate_fixed(
    scheme: Scheme,
    cfg: &SystemConfig,
    realization: &ChannelRealization,
    layout: AntennaLayout,
    model: CouplingModel,
    iterations: usize,
    capacity_trace: Vec<f64>,
) -> Result<SchemeResult> {
    let state = LinkState::new(realization, &layout, model)?;
    let allocation = allocate(&state, cfg)?;
    finish(scheme, cfg, realization, &state, allocation, iterations, capacity_trace)
}

fn finish(
    scheme: Scheme,
    cfg: &SystemConfig,
    realization: &ChannelRealization,
    state: &LinkState,
    allocation: PowerAllocation,
    iterations: usize,
    capacity_trace: Vec<f64>,
) -> Result<SchemeResult> {
    let capacity_nats = capacity(&state.h, &allocation.q, cfg.noise_power);
    let p_trans = superdirectivity_metric(realization, &state.layout, &allocation.q, &state.tx);
    let gammas = snr_matrix_eigenvalues(&state.h, &allocation.q, cfg.noise_power);
    Ok(SchemeResult {
        scheme,
        capacity_nats,
        capacity_bits: capacity_nats / std::f64::consts::LN_2,
        layout: state.layout.clone(),
        allocation,
        model: state.model,
        iterations,
        capacity_trace,
        p_trans,
        gammas,
    })
}

/// Half-wavelength fixed arrays; coupling is the identity.
pub fn baseline_ula(cfg: &SystemConfig, realization: &ChannelRealization) -> Result<SchemeResult> {
    let layout = AntennaLayout::fixed_spacing(cfg.num_tx, cfg.num_rx, HALF_WAVELENGTH);
    evaluate_fixed(Scheme::Ula, cfg, realization, layout, CouplingModel::Identity, 0, Vec::new())
}

/// Fixed arrays at the minimum spacing under the full coupling model.
pub fn baseline_cla(cfg: &SystemConfig, realization: &ChannelRealization) -> Result<SchemeResult> {
    let layout = AntennaLayout::fixed_spacing(cfg.num_tx, cfg.num_rx, cfg.min_spacing);
    evaluate_fixed(Scheme::Cla, cfg, realization, layout, CouplingModel::Full, 0, Vec::new())
}

/// Configuration used by the coupling-blind optimizer.
pub fn ncma_config(cfg: &SystemConfig) -> SystemConfig {
    SystemConfig {
        min_spacing: HALF_WAVELENGTH,
        ..cfg.clone()
    }
}

/// Coupling-blind position optimization at half-wavelength minimum spacing.
pub fn baseline_ncma<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    realization: &ChannelRealization,
    rng: &mut R,
) -> Result<SchemeResult> {
    let ncfg = ncma_config(cfg);
    let trace = optimize_with_restarts(&ncfg, realization, CouplingModel::Identity, rng)?;
    let state = LinkState::new(realization, &trace.final_layout, CouplingModel::Identity)?;
    let iterations = trace.iterations();
    finish(
        Scheme::NcMa,
        cfg,
        realization,
        &state,
        trace.final_allocation,
        iterations,
        trace.capacities,
    )
}

/// Re-evaluates an NC-MA result under the full coupling model with a fresh
/// water-filling step.
pub fn audit_ncma(cfg: &SystemConfig, realization: &ChannelRealization, ncma: &SchemeResult) -> Result<SchemeResult> {
    evaluate_fixed(
        Scheme::NcMaAudit,
        cfg,
        realization,
        ncma.layout.clone(),
        CouplingModel::Full,
        ncma.iterations,
        Vec::new(),
    )
}

/// Coupling-aware position optimization.
pub fn run_cma<R: Rng + ?Sized>(cfg: &SystemConfig, realization: &ChannelRealization, rng: &mut R) -> Result<SchemeResult> {
    let trace = optimize_with_restarts(cfg, realization, CouplingModel::Full, rng)?;
    let state = LinkState::new(realization, &trace.final_layout, CouplingModel::Full)?;
    let iterations = trace.iterations();
    finish(
        Scheme::CMa,
        cfg,
        realization,
        &state,
        trace.final_allocation,
        iterations,
        trace.capacities,
    )
}
