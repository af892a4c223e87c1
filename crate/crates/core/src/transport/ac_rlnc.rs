//! Adaptive causal RLNC over a sliding window.
//!
//! New sources go out systematically (a unit coefficient vector over the
//! current window). Repair frames are random combinations of every source in
//! the window `[w_min, w_max]`. Each slot's `beta` opportunities are spent in
//! this order:
//!
//! 1. reactive FEC, one repair per degree of freedom the latest feedback
//!    reports missing, less the repairs sent since that feedback's cutoff;
//! 2. a-priori FEC, paid from a credit that grows by `e / (1 - e)` per new
//!    source, `e` being the EWMA erasure estimate;
//! 3. new sources, while the window span is below `W_AC`;
//! 4. filler repair frames over the window for whatever is left.
//!
//! Feedback is produced every slot and reports the receiver's delivered
//! count, rank and cumulative frame count; the last drives the estimate.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::{AppMessage, ProtocolParams, ReceiverMachine, SenderMachine, SenderStats};
use crate::gf256::{self, Gf256};
use crate::rlnc::{random_coefficients, CodedPacket, Decoder};
use crate::rng::StreamRng;

/// Cap on the erasure estimate used for rate decisions; keeps `e / (1 - e)` finite.
pub const MAX_ERASURE_ESTIMATE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcFeedback {
    pub slot: u32,
    /// Sources released in order so far.
    pub delivered: u64,
    /// Independent rows held for undelivered sources.
    pub rank: u32,
    /// One past the highest source seen in any frame.
    pub seen_end: u64,
    /// Frames received so far.
    pub frames_received: u64,
}

#[derive(Debug, Clone, Copy)]
struct SlotLog {
    slot: u32,
    frames: u32,
    new: u32,
    /// `next_new` after this slot's transmissions.
    end_after: u64,
}

#[derive(Debug)]
pub struct AcRlncSender {
    beta: u32,
    max_window: usize,
    one_way: u32,
    payload_len: usize,
    rng: StreamRng,
    /// Sources `w_min..next_new`.
    window: VecDeque<Vec<u8>>,
    w_min: u64,
    next_new: u64,
    pending: VecDeque<AppMessage>,
    estimate: f64,
    memory: f64,
    fec_credit: f64,
    unconfirmed: VecDeque<SlotLog>,
    confirmed_frames: u64,
    confirmed_end: u64,
    frames_received_seen: u64,
    missing_dofs: u64,
    stats: SenderStats,
}

impl AcRlncSender {
    pub fn new(params: &ProtocolParams, rng: StreamRng) -> Self {
        AcRlncSender {
            beta: params.beta,
            max_window: params.ac_window(),
            one_way: params.one_way_delay(),
            payload_len: params.payload_len,
            rng,
            window: VecDeque::new(),
            w_min: 0,
            next_new: 0,
            pending: VecDeque::new(),
            estimate: params.initial_erasure_estimate,
            memory: params.estimate_memory,
            fec_credit: 0.0,
            unconfirmed: VecDeque::new(),
            confirmed_frames: 0,
            confirmed_end: 0,
            frames_received_seen: 0,
            missing_dofs: 0,
            stats: SenderStats::default(),
        }
    }

    pub fn erasure_estimate(&self) -> f64 {
        self.estimate
    }

    pub fn window_limit(&self) -> usize {
        self.max_window
    }

    fn clamped_estimate(&self) -> f64 {
        self.estimate.clamp(0.0, MAX_ERASURE_ESTIMATE)
    }

    fn repair_frame(&mut self, slot: u32) -> CodedPacket {
        let coefficients = random_coefficients(&mut self.rng, self.window.len());
        let mut payload = vec![0u8; self.payload_len];
        for (src, &c) in self.window.iter().zip(&coefficients) {
            gf256::mul_add_slice(&mut payload, src, c);
        }
        CodedPacket { window_start: self.w_min, coefficients, payload, sender_id: 0, receiver_id: 0, gen_slot: slot }
    }

    fn systematic_frame(&self, slot: u32) -> CodedPacket {
        let mut coefficients = vec![Gf256::ZERO; self.window.len()];
        *coefficients.last_mut().expect("window holds the new source") = Gf256::ONE;
        CodedPacket {
            window_start: self.w_min,
            coefficients,
            payload: self.window.back().expect("window holds the new source").clone(),
            sender_id: 0,
            receiver_id: 0,
            gen_slot: slot,
        }
    }

    /// Reactive repair frames wanted now, before the budget cap: one per
    /// missing degree of freedom not already answered by a repair in flight.
    fn reactive_demand(&self) -> u32 {
        let (frames, new) =
            self.unconfirmed.iter().fold((0u64, 0u64), |(f, n), log| (f + log.frames as u64, n + log.new as u64));
        self.missing_dofs.saturating_sub(frames - new) as u32
    }
}

impl SenderMachine for AcRlncSender {
    type Frame = CodedPacket;
    type Feedback = AcFeedback;

    fn submit(&mut self, msg: AppMessage) {
        self.pending.push_back(msg);
    }

    fn on_feedback(&mut self, fb: AcFeedback) {
        while self.w_min < fb.delivered.min(self.next_new) {
            self.window.pop_front();
            self.w_min += 1;
        }
        let Some(covered) = fb.slot.checked_sub(self.one_way) else { return };
        let before = self.confirmed_frames;
        while self.unconfirmed.front().is_some_and(|log| log.slot <= covered) {
            let log = self.unconfirmed.pop_front().expect("front checked");
            self.confirmed_frames += log.frames as u64;
            self.confirmed_end = log.end_after;
        }
        let sent = self.confirmed_frames - before;
        let received = fb.frames_received.saturating_sub(self.frames_received_seen).min(sent);
        self.frames_received_seen = fb.frames_received;
        let w = self.memory;
        for _ in 0..(sent - received) {
            self.estimate = w * self.estimate + (1.0 - w);
        }
        for _ in 0..received {
            self.estimate *= w;
        }
        let unknown = self.confirmed_end.saturating_sub(fb.delivered);
        self.missing_dofs = unknown.saturating_sub(fb.rank as u64);
    }

    fn step(&mut self, slot: u32, out: &mut Vec<CodedPacket>) {
        let mut budget = self.beta;
        let mut new_count = 0u32;
        let start = out.len();

        if !self.window.is_empty() {
            let reactive = self.reactive_demand().min(budget);
            for _ in 0..reactive {
                let f = self.repair_frame(slot);
                out.push(f);
            }
            budget -= reactive;
            self.stats.reactive_fec += reactive as u64;

            while budget > 0 && self.fec_credit >= 1.0 {
                let f = self.repair_frame(slot);
                out.push(f);
                self.fec_credit -= 1.0;
                budget -= 1;
                self.stats.apriori_fec += 1;
            }
        }

        while budget > 0 && self.window.len() < self.max_window {
            let Some(msg) = self.pending.pop_front() else { break };
            debug_assert_eq!(msg.seq, self.next_new);
            self.window.push_back(msg.body);
            self.next_new += 1;
            out.push(self.systematic_frame(slot));
            let e = self.clamped_estimate();
            self.fec_credit += e / (1.0 - e);
            budget -= 1;
            new_count += 1;
            self.stats.new_frames += 1;
        }

        if !self.window.is_empty() {
            for _ in 0..budget {
                let f = self.repair_frame(slot);
                out.push(f);
                self.stats.filler_fec += 1;
            }
        }

        let frames = (out.len() - start) as u32;
        if frames > 0 {
            self.unconfirmed.push_back(SlotLog { slot, frames, new: new_count, end_after: self.next_new });
        }
    }

    fn stats(&self) -> SenderStats {
        self.stats
    }

    fn window_span(&self) -> usize {
        self.window.len()
    }
}

#[derive(Debug)]
pub struct AcRlncReceiver {
    decoder: Decoder,
    frames_received: u64,
    redundant: u64,
    rejected: u64,
}

impl AcRlncReceiver {
    pub fn new(payload_len: usize) -> Self {
        AcRlncReceiver { decoder: Decoder::new(payload_len), frames_received: 0, redundant: 0, rejected: 0 }
    }

    /// Frames that arrived intact but added no degree of freedom.
    pub fn redundant(&self) -> u64 {
        self.redundant
    }

    pub fn decoder(&self) -> &Decoder {
        &self.decoder
    }

    /// Frames the decoder refused (malformed or stale).
    pub fn rejected(&self) -> u64 {
        self.rejected
    }
}

impl ReceiverMachine for AcRlncReceiver {
    type Frame = CodedPacket;
    type Feedback = AcFeedback;

    fn on_arrival(&mut self, frame: CodedPacket, _slot: u32, out: &mut Vec<(u64, Vec<u8>)>) {
        self.frames_received += 1;
        match self.decoder.absorb(&frame) {
            Ok(absorbed) => {
                self.redundant += u64::from(!absorbed.innovative);
                out.extend(absorbed.released);
            }
            Err(_) => self.rejected += 1,
        }
    }

    fn feedback(&mut self, slot: u32) -> Option<AcFeedback> {
        Some(AcFeedback {
            slot,
            delivered: self.decoder.delivered_count(),
            rank: self.decoder.rank() as u32,
            seen_end: self.decoder.seen_end(),
            frames_received: self.frames_received,
        })
    }
}
