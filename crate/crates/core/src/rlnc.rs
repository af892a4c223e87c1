//! Sliding-window random linear network coding over GF(256).
//!
//! A coded packet is `sum_i c_i * p_i` over a contiguous range of source
//! sequence numbers. The decoder keeps its rows in reduced row-echelon form
//! relative to the first undelivered sequence number, so any prefix of the
//! window that becomes fully determined can be released immediately. Rows
//! for released packets are projected out; the released payloads are cached
//! only until arriving packets stop referencing them.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::gf256::{self, Gf256};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("coefficient vector is empty")]
    EmptyWindow,
    #[error("{coefficients} coefficients for a window of {window} payloads")]
    CoefficientCount { coefficients: usize, window: usize },
    #[error("payload length {got} differs from the expected {expected}")]
    PayloadLength { expected: usize, got: usize },
    #[error("packet references seq {seq}, which was released and is no longer cached")]
    StaleWindow { seq: u64 },
}

/// A linear combination of the source packets `window_start..window_start + coefficients.len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedPacket {
    pub window_start: u64,
    pub coefficients: Vec<Gf256>,
    pub payload: Vec<u8>,
    pub sender_id: u16,
    pub receiver_id: u16,
    pub gen_slot: u32,
}

impl CodedPacket {
    /// One past the last sequence number covered.
    pub fn window_end(&self) -> u64 {
        self.window_start + self.coefficients.len() as u64
    }

    /// Exactly one nonzero coefficient, equal to one.
    pub fn is_systematic(&self) -> bool {
        let mut nonzero = self.coefficients.iter().filter(|c| !c.is_zero());
        matches!((nonzero.next(), nonzero.next()), (Some(&Gf256::ONE), None))
    }
}

/// `sum_i coefficients[i] * window[i]`, byte-wise.
pub fn encode<P: AsRef<[u8]>>(window: &[P], coefficients: &[Gf256]) -> Result<Vec<u8>, CodecError> {
    if window.is_empty() {
        return Err(CodecError::EmptyWindow);
    }
    if coefficients.len() != window.len() {
        return Err(CodecError::CoefficientCount { coefficients: coefficients.len(), window: window.len() });
    }
    let len = window[0].as_ref().len();
    let mut out = vec![0u8; len];
    for (payload, &c) in window.iter().zip(coefficients) {
        let payload = payload.as_ref();
        if payload.len() != len {
            return Err(CodecError::PayloadLength { expected: len, got: payload.len() });
        }
        gf256::mul_add_slice(&mut out, payload, c);
    }
    Ok(out)
}

/// Uniform coefficients from 1..=255, so every source in the window participates.
pub fn random_coefficients<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<Gf256> {
    (0..len).map(|_| Gf256(rng.random_range(1..=255u8))).collect()
}

/// Result of feeding one coded packet to the decoder.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Absorbed {
    /// The packet increased the rank.
    pub innovative: bool,
    /// Payloads that became decodable, in sequence order.
    pub released: Vec<(u64, Vec<u8>)>,
}

#[derive(Debug, Clone)]
struct Row {
    /// Coefficients for columns `base..base + coeffs.len()`.
    coeffs: Vec<Gf256>,
    payload: Vec<u8>,
    /// Column index (relative to base) of the leading one.
    pivot: usize,
}

/// Receiver-side decoding state for one coded stream.
#[derive(Debug, Clone)]
pub struct Decoder {
    payload_len: usize,
    /// First sequence number not yet released.
    base: u64,
    /// One past the highest sequence number referenced by any absorbed packet.
    seen_end: u64,
    rows: Vec<Row>,
    released_cache: VecDeque<(u64, Vec<u8>)>,
    absorbed: u64,
}

impl Decoder {
    pub fn new(payload_len: usize) -> Self {
        Decoder { payload_len, base: 0, seen_end: 0, rows: Vec::new(), released_cache: VecDeque::new(), absorbed: 0 }
    }

    pub fn payload_len(&self) -> usize {
        self.payload_len
    }

    /// Highest released sequence number, if any.
    pub fn delivered_upto(&self) -> Option<u64> {
        self.base.checked_sub(1)
    }

    /// Number of sequence numbers released so far.
    pub fn delivered_count(&self) -> u64 {
        self.base
    }

    /// Independent rows held for the undelivered part of the window.
    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// One past the highest sequence number seen in any packet.
    pub fn seen_end(&self) -> u64 {
        self.seen_end
    }

    /// Undelivered sequence numbers seen so far minus the rank.
    pub fn missing_dofs(&self) -> u64 {
        (self.seen_end - self.base).saturating_sub(self.rows.len() as u64)
    }

    pub fn packets_absorbed(&self) -> u64 {
        self.absorbed
    }

    fn span(&self) -> usize {
        (self.seen_end - self.base) as usize
    }

    /// Gaussian elimination of one packet into the basis; releases any fully
    /// determined prefix. On error the state is unchanged.
    pub fn absorb(&mut self, pkt: &CodedPacket) -> Result<Absorbed, CodecError> {
        if pkt.coefficients.is_empty() {
            return Err(CodecError::EmptyWindow);
        }
        if pkt.payload.len() != self.payload_len {
            return Err(CodecError::PayloadLength { expected: self.payload_len, got: pkt.payload.len() });
        }
        let start = pkt.window_start;
        let end = pkt.window_end();

        // Everything in this packet is already released.
        if end <= self.base {
            self.absorbed += 1;
            self.prune_cache(start);
            return Ok(Absorbed::default());
        }

        let mut payload = pkt.payload.clone();
        // Project out released sources using the cache; validate first so a
        // failure leaves the state untouched.
        for seq in start..self.base {
            if self.cached(seq).is_none() {
                return Err(CodecError::StaleWindow { seq });
            }
        }
        for seq in start..self.base {
            let c = pkt.coefficients[(seq - start) as usize];
            let known = self.cached(seq).expect("checked above");
            gf256::mul_add_slice(&mut payload, known, c);
        }
        self.absorbed += 1;
        self.prune_cache(start);

        if end > self.seen_end {
            self.seen_end = end;
            let span = self.span();
            for row in &mut self.rows {
                row.coeffs.resize(span, Gf256::ZERO);
            }
        }
        let span = self.span();
        let mut coeffs = vec![Gf256::ZERO; span];
        let first = start.max(self.base);
        for seq in first..end {
            coeffs[(seq - self.base) as usize] = pkt.coefficients[(seq - start) as usize];
        }

        // Reduce against existing pivots.
        for row in &self.rows {
            let c = coeffs[row.pivot];
            if !c.is_zero() {
                axpy(&mut coeffs, &row.coeffs, c);
                gf256::mul_add_slice(&mut payload, &row.payload, c);
            }
        }
        let Some(pivot) = coeffs.iter().position(|c| !c.is_zero()) else {
            return Ok(Absorbed::default());
        };
        let scale = coeffs[pivot].inv().expect("nonzero pivot");
        coeffs.iter_mut().for_each(|c| *c *= scale);
        gf256::scale_slice(&mut payload, scale);

        // Back-substitute the new pivot out of the existing rows.
        for row in &mut self.rows {
            let c = row.coeffs[pivot];
            if !c.is_zero() {
                axpy(&mut row.coeffs, &coeffs, c);
                gf256::mul_add_slice(&mut row.payload, &payload, c);
            }
        }
        let at = self.rows.partition_point(|r| r.pivot < pivot);
        self.rows.insert(at, Row { coeffs, payload, pivot });

        let released = self.release_prefix();
        Ok(Absorbed { innovative: true, released })
    }

    fn release_prefix(&mut self) -> Vec<(u64, Vec<u8>)> {
        let mut out = Vec::new();
        loop {
            let Some(first) = self.rows.first() else { break };
            if first.pivot != 0 || first.coeffs[1..].iter().any(|c| !c.is_zero()) {
                break;
            }
            let row = self.rows.remove(0);
            let seq = self.base;
            self.base += 1;
            for r in &mut self.rows {
                r.coeffs.remove(0);
                r.pivot -= 1;
            }
            self.released_cache.push_back((seq, row.payload.clone()));
            out.push((seq, row.payload));
        }
        out
    }

    fn cached(&self, seq: u64) -> Option<&[u8]> {
        let front = self.released_cache.front()?.0;
        let idx = seq.checked_sub(front)? as usize;
        self.released_cache.get(idx).map(|(s, p)| {
            debug_assert_eq!(*s, seq);
            p.as_slice()
        })
    }

    /// Arrivals are in send order and window starts never move backwards, so
    /// anything below `window_start` will not be referenced again.
    fn prune_cache(&mut self, window_start: u64) {
        while self.released_cache.front().is_some_and(|(s, _)| *s < window_start) {
            self.released_cache.pop_front();
        }
    }
}

#[inline]
fn axpy(dst: &mut [Gf256], src: &[Gf256], c: Gf256) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * *s;
    }
}
