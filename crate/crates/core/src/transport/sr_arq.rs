//! Selective-repeat ARQ.
//!
//! The receiver reports every slot: the next sequence number it expects
//! (cumulative ACK) plus the buffered sequence numbers above it (selective
//! ACK). Feedback produced at receiver slot `f` reflects every frame sent at
//! or before `f - RTT/2`, so a transmission that is still unacknowledged by
//! such a report was erased and is queued for retransmission. Each
//! transmission is judged exactly once, one RTT after it was sent, which
//! bounds retransmissions to one per RTT per packet.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use super::{AppMessage, ProtocolParams, ReceiverMachine, SenderMachine, SenderStats};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SrFrame {
    pub seq: u64,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SrFeedback {
    /// Receiver slot at which the report was produced.
    pub slot: u32,
    /// Every seq below this has been received.
    pub next_expected: u64,
    /// Buffered (received, not yet releasable) seqs above `next_expected`, ascending.
    pub received_above: Vec<u64>,
}

#[derive(Debug)]
struct Outstanding {
    body: Vec<u8>,
    last_tx: u32,
    acked: bool,
    lost: bool,
}

#[derive(Debug)]
pub struct SrArqSender {
    beta: u32,
    window: usize,
    one_way: u32,
    /// Lowest unacknowledged seq; `outstanding[0]` holds it.
    una: u64,
    outstanding: VecDeque<Outstanding>,
    pending: VecDeque<AppMessage>,
    stats: SenderStats,
}

impl SrArqSender {
    pub fn new(params: &ProtocolParams) -> Self {
        SrArqSender {
            beta: params.beta,
            window: params.sr_window(),
            one_way: params.one_way_delay(),
            una: 0,
            outstanding: VecDeque::new(),
            pending: VecDeque::new(),
            stats: SenderStats::default(),
        }
    }

    pub fn window_limit(&self) -> usize {
        self.window
    }

    fn next_new_seq(&self) -> u64 {
        self.una + self.outstanding.len() as u64
    }
}

impl SenderMachine for SrArqSender {
    type Frame = SrFrame;
    type Feedback = SrFeedback;

    fn submit(&mut self, msg: AppMessage) {
        self.pending.push_back(msg);
    }

    fn on_feedback(&mut self, fb: SrFeedback) {
        let mark = |this: &mut Self, seq: u64| {
            if let Some(idx) = seq.checked_sub(this.una) {
                if let Some(o) = this.outstanding.get_mut(idx as usize) {
                    o.acked = true;
                    o.lost = false;
                }
            }
        };
        let cum_end = fb.next_expected.min(self.next_new_seq());
        for seq in self.una..cum_end {
            mark(self, seq);
        }
        for &seq in &fb.received_above {
            mark(self, seq);
        }
        // Whatever was sent early enough to be covered by this report and is
        // still unacknowledged did not make it.
        if let Some(covered) = fb.slot.checked_sub(self.one_way) {
            for o in self.outstanding.iter_mut() {
                if !o.acked && o.last_tx <= covered {
                    o.lost = true;
                }
            }
        }
        while self.outstanding.front().is_some_and(|o| o.acked) {
            self.outstanding.pop_front();
            self.una += 1;
        }
    }

    fn step(&mut self, slot: u32, out: &mut Vec<SrFrame>) {
        let mut budget = self.beta;
        // Repairs first, lowest seq first.
        for (i, o) in self.outstanding.iter_mut().enumerate() {
            if budget == 0 {
                break;
            }
            if o.lost && !o.acked {
                o.lost = false;
                o.last_tx = slot;
                budget -= 1;
                self.stats.retransmissions += 1;
                out.push(SrFrame { seq: self.una + i as u64, body: o.body.clone() });
            }
        }
        while budget > 0 && self.outstanding.len() < self.window {
            let Some(msg) = self.pending.pop_front() else { break };
            debug_assert_eq!(msg.seq, self.next_new_seq());
            out.push(SrFrame { seq: msg.seq, body: msg.body.clone() });
            self.outstanding.push_back(Outstanding { body: msg.body, last_tx: slot, acked: false, lost: false });
            budget -= 1;
            self.stats.new_frames += 1;
        }
    }

    fn stats(&self) -> SenderStats {
        self.stats
    }

    fn window_span(&self) -> usize {
        self.outstanding.len()
    }
}

#[derive(Debug, Default)]
pub struct SrArqReceiver {
    next_expected: u64,
    buffered: BTreeMap<u64, Vec<u8>>,
    duplicates: u64,
}

impl SrArqReceiver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    /// Sequence numbers received but held back behind a gap.
    pub fn blocked(&self) -> usize {
        self.buffered.len()
    }
}

impl ReceiverMachine for SrArqReceiver {
    type Frame = SrFrame;
    type Feedback = SrFeedback;

    fn on_arrival(&mut self, frame: SrFrame, _slot: u32, out: &mut Vec<(u64, Vec<u8>)>) {
        if frame.seq < self.next_expected || self.buffered.contains_key(&frame.seq) {
            self.duplicates += 1;
            return;
        }
        self.buffered.insert(frame.seq, frame.body);
        while let Some(body) = self.buffered.remove(&self.next_expected) {
            out.push((self.next_expected, body));
            self.next_expected += 1;
        }
    }

    fn feedback(&mut self, slot: u32) -> Option<SrFeedback> {
        Some(SrFeedback {
            slot,
            next_expected: self.next_expected,
            received_above: self.buffered.keys().copied().collect(),
        })
    }
}
