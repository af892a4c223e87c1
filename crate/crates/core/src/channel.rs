//! Slot-indexed binary erasure channel with a fixed one-way delay of RTT/2
//! slots, and the reliable feedback path that runs alongside it.
//!
//! Erasures are drawn from a counter-addressed stream: the uniform variate for
//! the `k`-th frame sent in slot `s` sits at a fixed position in the channel's
//! ChaCha stream. Two protocols driven over channels with the same seed
//! therefore see the same erasure for "frame `k` of slot `s`", regardless of
//! how many frames either of them sent earlier.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::Rng;

use crate::rng::StreamRng;

/// Upper bound on frames per slot addressed by the erasure stream.
pub const MAX_FRAMES_PER_SLOT: u32 = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChannelError {
    #[error("round-trip time must be a positive even number of slots, got {0}")]
    OddRtt(u32),
    #[error("slot {slot} is outside the horizon of {horizon} slots")]
    OutOfHorizon { slot: u32, horizon: u32 },
    #[error("deliver called for slot {slot} after slot {last}")]
    NonMonotone { slot: u32, last: u32 },
    #[error("erasure probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("piecewise profile needs at least one interval of positive length")]
    EmptyProfile,
    #[error("more than {MAX_FRAMES_PER_SLOT} frames sent in slot {0}")]
    TooManyFrames(u32),
}

/// Erasure probability as a function of the slot index.
#[derive(Debug, Clone, PartialEq)]
pub enum ErasureProfile {
    Constant {
        epsilon: f64,
        horizon: u32,
    },
    /// `epsilons[j]` holds for slots `j * interval_len .. (j + 1) * interval_len`.
    Piecewise {
        interval_len: u32,
        epsilons: Vec<f64>,
    },
}

impl ErasureProfile {
    pub fn constant(epsilon: f64, horizon: u32) -> Result<Self, ChannelError> {
        check_probability(epsilon)?;
        Ok(ErasureProfile::Constant { epsilon, horizon })
    }

    pub fn piecewise(interval_len: u32, epsilons: Vec<f64>) -> Result<Self, ChannelError> {
        if interval_len == 0 || epsilons.is_empty() {
            return Err(ChannelError::EmptyProfile);
        }
        for &e in &epsilons {
            check_probability(e)?;
        }
        Ok(ErasureProfile::Piecewise { interval_len, epsilons })
    }

    /// `intervals` intervals whose success probabilities `1 - epsilon` are
    /// linearly spaced from `first_success` to `last_success`.
    pub fn success_ramp(
        intervals: u32,
        interval_len: u32,
        first_success: f64,
        last_success: f64,
    ) -> Result<Self, ChannelError> {
        if intervals == 0 {
            return Err(ChannelError::EmptyProfile);
        }
        let epsilons = (0..intervals)
            .map(|j| {
                let frac = if intervals == 1 { 0.0 } else { j as f64 / (intervals - 1) as f64 };
                1.0 - (first_success + (last_success - first_success) * frac)
            })
            .collect();
        Self::piecewise(interval_len, epsilons)
    }

    pub fn horizon(&self) -> u32 {
        match self {
            ErasureProfile::Constant { horizon, .. } => *horizon,
            ErasureProfile::Piecewise { interval_len, epsilons } => interval_len * epsilons.len() as u32,
        }
    }

    pub fn epsilon_at(&self, slot: u32) -> Result<f64, ChannelError> {
        let horizon = self.horizon();
        if slot >= horizon {
            return Err(ChannelError::OutOfHorizon { slot, horizon });
        }
        Ok(match self {
            ErasureProfile::Constant { epsilon, .. } => *epsilon,
            ErasureProfile::Piecewise { interval_len, epsilons } => epsilons[(slot / interval_len) as usize],
        })
    }
}

fn check_probability(p: f64) -> Result<(), ChannelError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ChannelError::BadProbability(p))
    }
}

/// One-way delay in slots for a round-trip time, rejecting odd or zero RTTs.
pub fn one_way_delay(rtt: u32) -> Result<u32, ChannelError> {
    if rtt == 0 || !rtt.is_multiple_of(2) {
        Err(ChannelError::OddRtt(rtt))
    } else {
        Ok(rtt / 2)
    }
}

/// Fixed-delay FIFO shared by both directions.
#[derive(Debug, Clone)]
struct DelayLine<T> {
    delay: u32,
    queue: VecDeque<(u32, T)>,
    last_poll: Option<u32>,
}

impl<T> DelayLine<T> {
    fn new(delay: u32) -> Self {
        DelayLine { delay, queue: VecDeque::new(), last_poll: None }
    }

    fn push(&mut self, slot: u32, item: T) {
        self.queue.push_back((slot + self.delay, item));
    }

    fn poll(&mut self, slot: u32) -> Result<Vec<T>, ChannelError> {
        if let Some(last) = self.last_poll {
            if slot < last {
                return Err(ChannelError::NonMonotone { slot, last });
            }
        }
        self.last_poll = Some(slot);
        let mut out = Vec::new();
        while self.queue.front().is_some_and(|(arrive, _)| *arrive <= slot) {
            out.push(self.queue.pop_front().expect("front checked").1);
        }
        Ok(out)
    }

    fn in_flight(&self) -> usize {
        self.queue.len()
    }
}

/// Where erasure decisions come from.
#[derive(Debug, Clone)]
enum Erasures {
    Random {
        rng: StreamRng,
        profile: ErasureProfile,
    },
    /// Fixed realization by global send index; sends beyond the script survive.
    Scripted(Vec<bool>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelStats {
    pub sent: u64,
    pub erased: u64,
    pub feedback_sent: u64,
}

/// A directed link: erasure-prone forward path carrying `F`, reliable
/// feedback path carrying `B`, both delayed by RTT/2.
#[derive(Debug, Clone)]
pub struct SlottedChannel<F, B> {
    erasures: Erasures,
    horizon: Option<u32>,
    forward: DelayLine<F>,
    backward: DelayLine<B>,
    slot_of_last_send: Option<u32>,
    frames_this_slot: u32,
    stats: ChannelStats,
}

impl<F, B> SlottedChannel<F, B> {
    pub fn new(rtt: u32, profile: ErasureProfile, rng: StreamRng) -> Result<Self, ChannelError> {
        let delay = one_way_delay(rtt)?;
        let horizon = Some(profile.horizon());
        Ok(Self::build(delay, Erasures::Random { rng, profile }, horizon))
    }

    /// Channel whose `i`-th forward send is erased iff `script[i]`.
    pub fn scripted(rtt: u32, script: Vec<bool>) -> Result<Self, ChannelError> {
        let delay = one_way_delay(rtt)?;
        Ok(Self::build(delay, Erasures::Scripted(script), None))
    }

    fn build(delay: u32, erasures: Erasures, horizon: Option<u32>) -> Self {
        SlottedChannel {
            erasures,
            horizon,
            forward: DelayLine::new(delay),
            backward: DelayLine::new(delay),
            slot_of_last_send: None,
            frames_this_slot: 0,
            stats: ChannelStats::default(),
        }
    }

    pub fn one_way_delay(&self) -> u32 {
        self.forward.delay
    }

    pub fn stats(&self) -> ChannelStats {
        self.stats
    }

    pub fn frames_in_flight(&self) -> usize {
        self.forward.in_flight()
    }

    /// Transmit one frame; returns `true` if it survived and was scheduled
    /// for delivery at `slot + RTT/2`.
    pub fn send(&mut self, frame: F, slot: u32) -> Result<bool, ChannelError> {
        if let Some(horizon) = self.horizon {
            if slot >= horizon {
                return Err(ChannelError::OutOfHorizon { slot, horizon });
            }
        }
        if self.slot_of_last_send != Some(slot) {
            self.slot_of_last_send = Some(slot);
            self.frames_this_slot = 0;
        }
        let k = self.frames_this_slot;
        if k >= MAX_FRAMES_PER_SLOT {
            return Err(ChannelError::TooManyFrames(slot));
        }
        let index = self.stats.sent;
        let erased = match &mut self.erasures {
            Erasures::Random { rng, profile } => {
                let eps = profile.epsilon_at(slot)?;
                // Two 32-bit words per f64 draw.
                let position = (slot as u128 * MAX_FRAMES_PER_SLOT as u128 + k as u128) * 2;
                rng.set_word_pos(position);
                let u: f64 = rng.random();
                u < eps
            }
            Erasures::Scripted(script) => script.get(index as usize).copied().unwrap_or(false),
        };
        self.frames_this_slot += 1;
        self.stats.sent += 1;
        if erased {
            self.stats.erased += 1;
        } else {
            self.forward.push(slot, frame);
        }
        Ok(!erased)
    }

    /// Frames arriving at `slot`, in send order.
    pub fn deliver(&mut self, slot: u32) -> Result<Vec<F>, ChannelError> {
        self.forward.poll(slot)
    }

    /// Feedback is never erased.
    pub fn send_feedback(&mut self, feedback: B, slot: u32) {
        self.stats.feedback_sent += 1;
        self.backward.push(slot, feedback);
    }

    pub fn deliver_feedback(&mut self, slot: u32) -> Result<Vec<B>, ChannelError> {
        self.backward.poll(slot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seed_stream;

    type Chan = SlottedChannel<u32, u32>;

    fn chan(rtt: u32, eps: f64) -> Chan {
        SlottedChannel::new(rtt, ErasureProfile::constant(eps, 100_000).unwrap(), seed_stream(1, "test")).unwrap()
    }

    #[test]
    fn epsilon_at_examples() {
        let c = ErasureProfile::constant(0.3, 100).unwrap();
        assert_eq!(c.epsilon_at(17).unwrap(), 0.3);
        let p = ErasureProfile::success_ramp(10, 16, 0.1, 0.9).unwrap();
        assert_eq!(p.horizon(), 160);
        assert!((p.epsilon_at(0).unwrap() - 0.9).abs() < 1e-12);
        assert!((p.epsilon_at(159).unwrap() - 0.1).abs() < 1e-12);
        assert!((p.epsilon_at(16).unwrap() - (1.0 - (0.1 + 0.8 / 9.0))).abs() < 1e-12);
        assert!(matches!(p.epsilon_at(160), Err(ChannelError::OutOfHorizon { .. })));
    }

    #[test]
    fn invalid_profiles_and_rtts_rejected() {
        assert!(ErasureProfile::constant(1.5, 10).is_err());
        assert!(ErasureProfile::piecewise(0, alloc::vec![0.1]).is_err());
        assert_eq!(one_way_delay(5), Err(ChannelError::OddRtt(5)));
        assert_eq!(one_way_delay(0), Err(ChannelError::OddRtt(0)));
        assert_eq!(one_way_delay(8), Ok(4));
    }

    #[test]
    fn lossless_delivers_after_half_rtt() {
        let mut c = chan(4, 0.0);
        for s in 0..20 {
            assert!(c.send(s, s).unwrap());
            let got = c.deliver(s).unwrap();
            if s >= 2 {
                assert_eq!(got, alloc::vec![s - 2]);
            } else {
                assert!(got.is_empty());
            }
        }
    }

    #[test]
    fn send_at_10_arrives_at_12() {
        let mut c = chan(4, 0.0);
        c.send(7, 10).unwrap();
        assert!(c.deliver(11).unwrap().is_empty());
        assert_eq!(c.deliver(12).unwrap(), alloc::vec![7]);
    }

    #[test]
    fn rtt_8_send_3_arrives_7_and_ties_keep_order() {
        let mut c = chan(8, 0.0);
        c.send(1, 3).unwrap();
        c.send(2, 3).unwrap();
        assert!(c.deliver(6).unwrap().is_empty());
        assert_eq!(c.deliver(7).unwrap(), alloc::vec![1, 2]);
        assert!(c.deliver(8).unwrap().is_empty());
    }

    #[test]
    fn fully_erased_never_delivers_but_feedback_does() {
        let mut c = chan(4, 1.0);
        for s in 0..50 {
            assert!(!c.send(s, s).unwrap());
            assert!(c.deliver(s).unwrap().is_empty());
        }
        c.send_feedback(9, 2);
        assert!(c.deliver_feedback(3).unwrap().is_empty());
        assert_eq!(c.deliver_feedback(4).unwrap(), alloc::vec![9]);
        assert!(c.deliver_feedback(5).unwrap().is_empty());
    }

    #[test]
    fn non_monotone_deliver_rejected() {
        let mut c = chan(4, 0.0);
        c.deliver(5).unwrap();
        assert_eq!(c.deliver(4), Err(ChannelError::NonMonotone { slot: 4, last: 5 }));
    }

    #[test]
    fn empirical_erasure_rate() {
        let mut c = chan(2, 0.3);
        let n = 100_000u32;
        for s in 0..n {
            c.send(0, s).unwrap();
            c.deliver(s).unwrap();
        }
        let rate = c.stats().erased as f64 / n as f64;
        assert!((rate - 0.3).abs() < 0.01, "rate = {rate}");
    }

    #[test]
    fn realization_is_addressed_by_slot_and_index() {
        // One channel skips slots the other uses; shared slots agree.
        let mut a = chan(2, 0.5);
        let mut b = chan(2, 0.5);
        let mut ra = alloc::vec::Vec::new();
        let mut rb = alloc::vec::Vec::new();
        for s in 0..200 {
            ra.push(a.send(0, s).unwrap());
            if s % 3 == 0 {
                rb.push((s, b.send(0, s).unwrap()));
            }
        }
        for (s, outcome) in rb {
            assert_eq!(ra[s as usize], outcome);
        }
    }

    #[test]
    fn scripted_realization() {
        let mut c: Chan = SlottedChannel::scripted(4, alloc::vec![true, false]).unwrap();
        assert!(!c.send(0, 0).unwrap());
        assert!(c.send(1, 1).unwrap());
        assert!(c.send(2, 2).unwrap());
        assert!(c.deliver(2).unwrap().is_empty());
        assert_eq!(c.deliver(3).unwrap(), alloc::vec![1]);
    }
}
