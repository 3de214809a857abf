use std::io::Write;

use serde::{Deserialize, Serialize};

use super::thresholds::{classify, HypothesisState, ThresholdVector};
use super::FeedbackError;
use crate::seed::{self, Stream};
use crate::sim::{propagate_target, realize_channel, Geometry, ScenarioConfig, Simulator, TargetState};

/// Per-state feedback actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateActionTable {
    /// Fraction of the power budget used for the next sensing frame.
    pub power_scale: [f64; 4],
    /// Frames between sensing measurements (1 = every frame).
    pub sensing_period: [u32; 4],
    /// Whether the sweep holds its current beam instead of advancing.
    pub hold_beam: [bool; 4],
}

impl Default for StateActionTable {
    fn default() -> Self {
        Self {
            power_scale: [1.0, 0.8, 0.5, 0.2],
            sensing_period: [1, 1, 1, 1],
            hold_beam: [false, true, true, true],
        }
    }
}

impl StateActionTable {
    pub fn validate(&self) -> Result<(), FeedbackError> {
        if self.power_scale.iter().any(|&e| !(0.0..=1.0).contains(&e)) {
            return Err(FeedbackError::Config("power scale factors must lie in [0, 1]".into()));
        }
        if self.power_scale.windows(2).any(|w| w[1] > w[0]) {
            return Err(FeedbackError::Config(
                "power scale factors must be non-increasing in the state index".into(),
            ));
        }
        if self.sensing_period.contains(&0) {
            return Err(FeedbackError::Config("sensing periods must be >= 1".into()));
        }
        Ok(())
    }

    pub fn max_power_scale(&self) -> f64 {
        self.power_scale.iter().copied().fold(0.0, f64::max)
    }
}

/// Frame-by-frame record of one closed-loop episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub resi: Vec<f64>,
    pub states: Vec<HypothesisState>,
    pub in_region: Vec<bool>,
    pub in_beam: Vec<bool>,
    /// Sensing power as a fraction of the budget.
    pub power: Vec<f64>,
    pub beams: Vec<usize>,
}

impl EpisodeTrace {
    pub fn horizon(&self) -> usize {
        self.resi.len()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), FeedbackError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x_t", "state", "in_region", "in_beam", "power_fraction"])?;
        for t in 0..self.horizon() {
            w.write_record([
                t.to_string(),
                format!("{:.6}", self.resi[t]),
                self.states[t].index().to_string(),
                u8::from(self.in_region[t]).to_string(),
                u8::from(self.in_beam[t]).to_string(),
                format!("{:.6}", self.power[t]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Frames simulated at `fidelity` out of `full` frames: `ceil(fidelity * full)`.
pub fn frames_at_fidelity(full: usize, fidelity: f64) -> usize {
    // tolerance absorbs products such as 0.2 * 100 = 20.000000000000004
    ((fidelity * full as f64 - 1e-9).ceil() as usize).clamp(1, full)
}

/// Closed-loop episode runner bound to one scenario, geometry and action table.
#[derive(Debug, Clone)]
pub struct EpisodeRunner {
    sim: Simulator,
    geometry: Geometry,
    actions: StateActionTable,
}

impl EpisodeRunner {
    pub fn new(
        scenario: ScenarioConfig,
        geometry: Geometry,
        actions: StateActionTable,
    ) -> Result<Self, FeedbackError> {
        actions.validate()?;
        Ok(Self {
            sim: Simulator::new(scenario)?,
            geometry,
            actions,
        })
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        self.sim.scenario()
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn actions(&self) -> &StateActionTable {
        &self.actions
    }

    pub fn full_frames(&self) -> usize {
        self.sim.scenario().frames_per_episode()
    }

    /// Runs `ceil(fidelity * frames)` frames. The state decided at frame `t`
    /// sets the power, beam and cadence used at frame `t + 1`; the first
    /// frame uses state 0.
    pub fn run(
        &self,
        thresholds: &ThresholdVector,
        seed: u64,
        fidelity: f64,
    ) -> Result<EpisodeTrace, FeedbackError> {
        if !(fidelity > 0.0 && fidelity <= 1.0) {
            return Err(FeedbackError::Fidelity(fidelity));
        }
        let sc = self.sim.scenario();
        let frames = frames_at_fidelity(self.full_frames(), fidelity);
        let budget = sc.tx_power_watts();

        let mut target = TargetState::spawn(&sc.region, sc.target_speed, seed::child(seed, Stream::Episode, 0, 0));
        let mut beam = (seed::child(seed, Stream::Episode, 1, 0) % sc.n_beams as u64) as usize;
        let mut state = HypothesisState::LOST;
        let mut last_x = 0.0;
        let mut idle = 0u32;

        let mut trace = EpisodeTrace {
            resi: Vec::with_capacity(frames),
            states: Vec::with_capacity(frames),
            in_region: Vec::with_capacity(frames),
            in_beam: Vec::with_capacity(frames),
            power: Vec::with_capacity(frames),
            beams: Vec::with_capacity(frames),
        };

        for t in 0..frames {
            if t > 0 && !self.actions.hold_beam[state.index()] {
                beam = (beam + 1) % sc.n_beams;
            }
            let offset = target.position - self.geometry.bs;
            let departure = offset.y.atan2(offset.x);
            trace.in_region.push(target.inside_region);
            trace.in_beam.push(sc.covering_beam(departure) == Some(beam));
            trace.beams.push(beam);

            if idle > 0 {
                idle -= 1;
                trace.resi.push(last_x);
                trace.states.push(state);
                trace.power.push(0.0);
            } else {
                let frac = self.actions.power_scale[state.index()];
                let channel = realize_channel(sc, &target, &self.geometry)?;
                let x = self
                    .sim
                    .sense(&channel, beam, frac * budget, seed::child(seed, Stream::Frame, t as u64, 0))?
                    .value;
                state = classify(x, thresholds);
                last_x = x;
                idle = self.actions.sensing_period[state.index()] - 1;
                trace.resi.push(x);
                trace.states.push(state);
                trace.power.push(frac);
            }

            if t + 1 < frames {
                target = propagate_target(
                    &target,
                    sc.frame_interval,
                    &sc.region,
                    seed::child(seed, Stream::Frame, t as u64, 1),
                )?;
            }
        }
        Ok(trace)
    }
}

pub fn run_episode(
    scenario: &ScenarioConfig,
    geometry: &Geometry,
    thresholds: &ThresholdVector,
    actions: &StateActionTable,
    seed: u64,
    fidelity: f64,
) -> Result<EpisodeTrace, FeedbackError> {
    EpisodeRunner::new(scenario.clone(), *geometry, actions.clone())?.run(thresholds, seed, fidelity)
}
