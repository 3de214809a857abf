//! Bistatic OFDM sensing simulator: target motion, geometric channel,
//! received-grid synthesis, delay-Doppler matched filtering and the RESI
//! statistic.

mod channel;
mod filter;
mod grid;
mod scenario;

use std::sync::Arc;

use thiserror::Error;

pub use channel::{
    inner, propagate_target, realize_channel, steering_vector, ChannelRealization, NlosComponent,
    TargetState,
};
pub use filter::{
    compute_resi, matched_filter, null_set_rms, resi_with_floor, DelayDopplerMap, MatchedFilter,
    NullSet, ResiSample, SearchWindow,
};
pub use grid::{add_noise, echo_response, synthesize_rx_grid, synthesize_with_pilot, Pilot, RxGrid};
pub use scenario::{
    db_to_linear, dbm_to_watts, Geometry, NlosConfig, Region, ScenarioConfig, SPEED_OF_LIGHT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario configuration: {0}")]
    Config(String),
    #[error("degenerate geometry: {0}")]
    Geometry(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl SimError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }
}

/// Per-scenario cache of everything a sensing frame needs that does not
/// change between frames (pilot, filter phase tables, null set).
#[derive(Debug, Clone)]
pub struct Simulator {
    scenario: ScenarioConfig,
    pilot: Arc<Pilot>,
    filter: MatchedFilter,
    null: NullSet,
}

impl Simulator {
    pub fn new(scenario: ScenarioConfig) -> Result<Self, SimError> {
        scenario.validate()?;
        let pilot = Arc::new(Pilot::for_scenario(&scenario));
        let filter = MatchedFilter::for_scenario(&scenario)?;
        let null = NullSet::for_scenario(&scenario);
        Ok(Self {
            scenario,
            pilot,
            filter,
            null,
        })
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn null_set(&self) -> &NullSet {
        &self.null
    }

    pub fn filter(&self) -> &MatchedFilter {
        &self.filter
    }

    /// One sensing frame: grid synthesis, matched filter, RESI.
    pub fn sense(
        &self,
        channel: &ChannelRealization,
        beam_index: usize,
        power: f64,
        seed: u64,
    ) -> Result<ResiSample, SimError> {
        let grid =
            synthesize_with_pilot(&self.scenario, channel, beam_index, power, seed, &self.pilot)?;
        let z = grid.demodulated();
        let map = self.filter.apply_demodulated(&z);
        let rms = null_set_rms(&z, grid.n_subcarriers, grid.n_symbols, &self.null);
        filter::resi_from_rms(&map, rms, grid.n_subcarriers, grid.n_symbols)
    }
}
