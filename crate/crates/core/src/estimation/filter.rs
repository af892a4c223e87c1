//! Per-robot filter with the two delay-handling front-ends.
//!
//! Each slot the owner calls [`RobotFilter::step`] once with the slot's
//! noisy control and whatever measurements became available. `Naive` applies
//! fresh-enough measurements on top of the current estimate regardless of
//! their timestamp. `Iree` files each measurement under its generation slot
//! and re-runs the filter forward from the earliest slot that changed.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::ekf::{predict, r_gps, r_lidar, update, EkfState, EstimationError, FilterParams};
use crate::kinematics::ControlInput;
use crate::sensing::{GpsMeasurement, InterRobotMeasurement};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measurement {
    Gps(GpsMeasurement),
    Inter(InterRobotMeasurement),
}

impl Measurement {
    pub fn slot(&self) -> u32 {
        match self {
            Measurement::Gps(m) => m.slot,
            Measurement::Inter(m) => m.slot,
        }
    }

    pub fn z(&self) -> [f64; 2] {
        match self {
            Measurement::Gps(m) => [m.x, m.y],
            Measurement::Inter(m) => [m.x, m.y],
        }
    }

    pub fn r(&self, p: &FilterParams) -> [[f64; 2]; 2] {
        match self {
            Measurement::Gps(_) => r_gps(p.sigma_gps),
            Measurement::Inter(m) => r_lidar(p.sigma_process, m.d_hat, p.workspace),
        }
    }

    /// GPS first, then inter-robot readings by (sender, target).
    fn order_key(&self) -> (u8, u16, u16, u32) {
        match self {
            Measurement::Gps(m) => (0, m.robot_id, 0, m.slot),
            Measurement::Inter(m) => (1, m.sender_id, m.target_id, m.slot),
        }
    }
}

/// Within-slot application order.
pub fn canonical_order(a: &Measurement, b: &Measurement) -> Ordering {
    a.order_key().cmp(&b.order_key())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayHandling {
    Naive,
    Iree,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropCounts {
    /// Older than the window.
    pub stale: u64,
    /// Within the window but older than the filter's first slot.
    pub underrun: u64,
    /// Stamped after the current slot.
    pub future: u64,
}

#[derive(Debug, Clone)]
struct SlotEntry {
    slot: u32,
    /// Estimate at the end of the previous slot.
    prior: EkfState,
    /// `None` for the initialization slot, which has no prediction.
    control: Option<ControlInput>,
    measurements: Vec<Measurement>,
    /// Estimate for this slot given everything filed so far.
    posterior: EkfState,
}

/// Last `D + 1` slots of checkpoints, controls and measurements.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    window: u32,
    entries: VecDeque<SlotEntry>,
}

impl ReplayBuffer {
    fn new(window: u32) -> Self {
        ReplayBuffer { window, entries: VecDeque::with_capacity(window as usize + 2) }
    }

    fn push(&mut self, entry: SlotEntry) {
        self.entries.push_back(entry);
        while self.entries.len() > self.window as usize + 1 {
            self.entries.pop_front();
        }
    }

    fn index_of(&self, slot: u32) -> Option<usize> {
        let first = self.entries.front()?.slot;
        let idx = slot.checked_sub(first)? as usize;
        (idx < self.entries.len()).then_some(idx)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn oldest_slot(&self) -> Option<u32> {
        self.entries.front().map(|e| e.slot)
    }

    /// `(slot, posterior)` for every buffered slot, oldest first.
    pub fn posteriors(&self) -> impl Iterator<Item = (u32, &EkfState)> + '_ {
        self.entries.iter().map(|e| (e.slot, &e.posterior))
    }
}

#[derive(Debug, Clone)]
pub struct RobotFilter {
    params: FilterParams,
    mode: DelayHandling,
    window: u32,
    state: EkfState,
    slot: u32,
    history: ReplayBuffer,
    drops: DropCounts,
    applied: u64,
}

impl RobotFilter {
    /// Start at `slot` with `initial` as the estimate for that slot.
    pub fn new(initial: EkfState, slot: u32, params: FilterParams, mode: DelayHandling, window: u32) -> Self {
        let mut history = ReplayBuffer::new(window);
        history.push(SlotEntry { slot, prior: initial, control: None, measurements: Vec::new(), posterior: initial });
        RobotFilter { params, mode, window, state: initial, slot, history, drops: DropCounts::default(), applied: 0 }
    }

    pub fn estimate(&self) -> &EkfState {
        &self.state
    }

    pub fn slot(&self) -> u32 {
        self.slot
    }

    pub fn drops(&self) -> DropCounts {
        self.drops
    }

    /// Measurements incorporated so far (replays not double counted).
    pub fn applied(&self) -> u64 {
        self.applied
    }

    pub fn history(&self) -> &ReplayBuffer {
        &self.history
    }

    /// Measurements that arrived at the initialization slot.
    pub fn ingest_initial(&mut self, batch: Vec<Measurement>) -> Result<(), EstimationError> {
        self.ingest(batch)
    }

    /// Advance to `slot` (must be the next slot) with control `u`, then
    /// incorporate `batch`.
    pub fn step(&mut self, slot: u32, u: ControlInput, batch: Vec<Measurement>) -> Result<(), EstimationError> {
        assert_eq!(slot, self.slot + 1, "filter slots must be consecutive");
        let prior = self.state;
        self.state = predict(&prior, u, &self.params)?;
        self.slot = slot;
        self.history.push(SlotEntry { slot, prior, control: Some(u), measurements: Vec::new(), posterior: self.state });
        self.ingest(batch)
    }

    fn ingest(&mut self, batch: Vec<Measurement>) -> Result<(), EstimationError> {
        let now = self.slot;
        let mut accepted = Vec::with_capacity(batch.len());
        for m in batch {
            let tau = m.slot();
            if tau > now {
                self.drops.future += 1;
            } else if now - tau > self.window {
                self.drops.stale += 1;
            } else if self.history.index_of(tau).is_none() {
                self.drops.underrun += 1;
            } else {
                accepted.push(m);
            }
        }
        if accepted.is_empty() {
            return Ok(());
        }
        self.applied += accepted.len() as u64;
        match self.mode {
            DelayHandling::Naive => {
                accepted.sort_by(canonical_order);
                let entry = self.history.entries.back_mut().expect("current slot entry");
                for m in accepted {
                    self.state = update(&self.state, m.z(), m.r(&self.params))?;
                    entry.measurements.push(m);
                }
                entry.posterior = self.state;
                Ok(())
            }
            DelayHandling::Iree => {
                let mut earliest = usize::MAX;
                for m in accepted {
                    let idx = self.history.index_of(m.slot()).expect("checked above");
                    earliest = earliest.min(idx);
                    let list = &mut self.history.entries[idx].measurements;
                    let pos = list.partition_point(|x| canonical_order(x, &m) != Ordering::Greater);
                    list.insert(pos, m);
                }
                self.replay_from(earliest)
            }
        }
    }

    fn replay_from(&mut self, idx: usize) -> Result<(), EstimationError> {
        let mut state = self.history.entries[idx].prior;
        let n = self.history.entries.len();
        for k in idx..n {
            if k > idx {
                self.history.entries[k].prior = state;
            }
            let entry = &mut self.history.entries[k];
            if let Some(u) = entry.control {
                state = predict(&state, u, &self.params)?;
            }
            for m in &entry.measurements {
                state = update(&state, m.z(), m.r(&self.params))?;
            }
            entry.posterior = state;
        }
        self.state = state;
        Ok(())
    }
}

/// Reference filter that knows every measurement's timestamp up front and
/// processes slots strictly in order. `controls[k]` drives slot `start + k + 1`.
pub fn chronological_filter(
    initial: EkfState,
    start: u32,
    controls: &[ControlInput],
    measurements: &[Measurement],
    params: &FilterParams,
) -> Result<Vec<EkfState>, EstimationError> {
    let mut by_slot: Vec<Vec<Measurement>> = alloc::vec![Vec::new(); controls.len() + 1];
    for m in measurements {
        if let Some(k) = m.slot().checked_sub(start) {
            if let Some(list) = by_slot.get_mut(k as usize) {
                list.push(*m);
            }
        }
    }
    let mut out = Vec::with_capacity(controls.len() + 1);
    let mut state = initial;
    for (k, list) in by_slot.iter_mut().enumerate() {
        if k > 0 {
            state = predict(&state, controls[k - 1], params)?;
        }
        list.sort_by(canonical_order);
        for m in list.iter() {
            state = update(&state, m.z(), m.r(params))?;
        }
        out.push(state);
    }
    Ok(out)
}
