//! End-to-end delivery protocols driven slot by slot over a [`SlottedChannel`].
//!
//! Three protocols share one session harness:
//!
//! * [`udp`]: each message is sent once; arrivals go straight to the application.
//! * [`sr_arq`]: selective-repeat ARQ with cumulative + selective feedback and
//!   in-order release.
//! * [`ac_rlnc`]: systematic sliding-window RLNC with a-priori and reactive
//!   FEC and in-order release of decoded prefixes.
//!
//! Within a slot a [`Session`] runs: forward arrivals, feedback arrivals,
//! application submissions, sender transmissions, receiver feedback.

pub mod ac_rlnc;
pub mod metrics;
pub mod sr_arq;
pub mod udp;

use alloc::vec::Vec;
use core::fmt;

use crate::channel::{ChannelError, ErasureProfile, SlottedChannel};
use crate::rng::StreamRng;

pub use metrics::{collect_metrics, DeliveryRecord, TransportMetrics};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("denominator floor lambda must be positive, got {0}")]
    NonPositiveFloor(f64),
    #[error("erasure probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("message body of {got} bytes exceeds the payload length {max}")]
    BodyTooLong { max: usize, got: usize },
    #[error("invalid protocol parameter: {0}")]
    BadParameter(&'static str),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Rate factor `ceil(1 / max(1 - epsilon - alpha, lambda))`.
pub fn compute_beta(epsilon: f64, alpha: f64, lambda: f64) -> Result<u32, TransportError> {
    if lambda <= 0.0 || lambda.is_nan() {
        return Err(TransportError::NonPositiveFloor(lambda));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(TransportError::BadProbability(epsilon));
    }
    let denom = (1.0 - epsilon - alpha).max(lambda);
    Ok(libm::ceil(1.0 / denom) as u32)
}

/// `ceil(factor * beta * rtt)`, tolerant of float noise in exact products.
pub fn window_size(factor: f64, beta: u32, rtt: u32) -> usize {
    let w = libm::ceil(factor * beta as f64 * rtt as f64 - 1e-9);
    (w as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    Udp,
    SrArq,
    AcRlnc,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Udp, Protocol::SrArq, Protocol::AcRlnc];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Udp => "udp",
            Protocol::SrArq => "sr_arq",
            Protocol::AcRlnc => "ac_rlnc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "udp" => Some(Protocol::Udp),
            "sr_arq" => Some(Protocol::SrArq),
            "ac_rlnc" => Some(Protocol::AcRlnc),
            _ => None,
        }
    }

    /// Releases strictly in sequence order.
    pub fn is_ordered(self) -> bool {
        !matches!(self, Protocol::Udp)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolParams {
    /// Round-trip time in slots (even).
    pub rtt: u32,
    /// SR-ARQ window factor `a`.
    pub sr_factor: f64,
    /// AC-RLNC window factor `b`.
    pub ac_factor: f64,
    /// Safety margin used when deriving `beta`.
    pub alpha: f64,
    /// Denominator floor used when deriving `beta`.
    pub lambda: f64,
    /// Frame opportunities per slot.
    pub beta: u32,
    /// Fixed coding symbol size; bodies are zero-padded to it.
    pub payload_len: usize,
    /// Starting value of the AC-RLNC erasure estimate.
    pub initial_erasure_estimate: f64,
    /// EWMA weight kept on the previous estimate.
    pub estimate_memory: f64,
}

impl ProtocolParams {
    pub fn sr_window(&self) -> usize {
        window_size(self.sr_factor, self.beta, self.rtt)
    }

    pub fn ac_window(&self) -> usize {
        window_size(self.ac_factor, self.beta, self.rtt)
    }

    pub fn one_way_delay(&self) -> u32 {
        self.rtt / 2
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        crate::channel::one_way_delay(self.rtt)?;
        if self.beta == 0 || self.beta > crate::channel::MAX_FRAMES_PER_SLOT {
            return Err(TransportError::BadParameter("beta must be in 1..=64"));
        }
        if !(self.sr_factor > 0.0 && self.ac_factor > 0.0) {
            return Err(TransportError::BadParameter("window factors must be positive"));
        }
        if self.payload_len == 0 {
            return Err(TransportError::BadParameter("payload length must be positive"));
        }
        if !(0.0..=1.0).contains(&self.initial_erasure_estimate) {
            return Err(TransportError::BadProbability(self.initial_erasure_estimate));
        }
        if !(0.0..1.0).contains(&self.estimate_memory) {
            return Err(TransportError::BadParameter("estimate memory must be in [0, 1)"));
        }
        Ok(())
    }
}

/// One application message on a directed pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppMessage {
    pub seq: u64,
    pub gen_slot: u32,
    pub body: Vec<u8>,
}

/// A message handed to the application at the receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub seq: u64,
    pub gen_slot: u32,
    pub delivered_slot: u32,
    pub body: Vec<u8>,
}

/// Frames put on the wire, by purpose.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SenderStats {
    pub new_frames: u64,
    pub retransmissions: u64,
    pub apriori_fec: u64,
    pub reactive_fec: u64,
    pub filler_fec: u64,
}

impl SenderStats {
    pub fn total(&self) -> u64 {
        self.new_frames + self.retransmissions + self.apriori_fec + self.reactive_fec + self.filler_fec
    }
}

pub trait SenderMachine {
    type Frame;
    type Feedback;

    fn submit(&mut self, msg: AppMessage);
    fn on_feedback(&mut self, feedback: Self::Feedback);
    /// Append at most `beta` frames for `slot` to `out`.
    fn step(&mut self, slot: u32, out: &mut Vec<Self::Frame>);
    fn stats(&self) -> SenderStats;
    /// Current span of unacknowledged (SR-ARQ) or undecoded (AC-RLNC) sequence numbers.
    fn window_span(&self) -> usize;
}

pub trait ReceiverMachine {
    type Frame;
    type Feedback;

    /// Push `(seq, body)` pairs released to the application, in release order.
    fn on_arrival(&mut self, frame: Self::Frame, slot: u32, out: &mut Vec<(u64, Vec<u8>)>);
    fn feedback(&mut self, slot: u32) -> Option<Self::Feedback>;
}

/// Sender, receiver and link for one directed pair.
pub struct Session<S: SenderMachine, R> {
    sender: S,
    receiver: R,
    channel: SlottedChannel<S::Frame, S::Feedback>,
    payload_len: usize,
    records: Vec<DeliveryRecord>,
    next_seq: u64,
    max_window_span: usize,
    frames: Vec<S::Frame>,
    released: Vec<(u64, Vec<u8>)>,
}

impl<S, R> Session<S, R>
where
    S: SenderMachine,
    R: ReceiverMachine<Frame = S::Frame, Feedback = S::Feedback>,
{
    pub fn from_parts(
        sender: S,
        receiver: R,
        channel: SlottedChannel<S::Frame, S::Feedback>,
        payload_len: usize,
    ) -> Self {
        Session {
            sender,
            receiver,
            channel,
            payload_len,
            records: Vec::new(),
            next_seq: 0,
            max_window_span: 0,
            frames: Vec::new(),
            released: Vec::new(),
        }
    }

    /// Advance one slot, submitting `bodies` as new messages generated at `slot`.
    pub fn tick<I>(&mut self, slot: u32, bodies: I) -> Result<Vec<Delivery>, TransportError>
    where
        I: IntoIterator<Item = Vec<u8>>,
    {
        let mut deliveries = Vec::new();
        for frame in self.channel.deliver(slot)? {
            self.receiver.on_arrival(frame, slot, &mut self.released);
        }
        for (seq, body) in self.released.drain(..) {
            let rec = &mut self.records[seq as usize];
            // UDP never duplicates, but guard against double release anyway.
            if rec.delivered_slot.is_none() {
                rec.delivered_slot = Some(slot);
                deliveries.push(Delivery { seq, gen_slot: rec.gen_slot, delivered_slot: slot, body });
            }
        }
        for fb in self.channel.deliver_feedback(slot)? {
            self.sender.on_feedback(fb);
        }
        for mut body in bodies {
            if body.len() > self.payload_len {
                return Err(TransportError::BodyTooLong { max: self.payload_len, got: body.len() });
            }
            body.resize(self.payload_len, 0);
            let seq = self.next_seq;
            self.next_seq += 1;
            self.records.push(DeliveryRecord { seq, gen_slot: slot, delivered_slot: None });
            self.sender.submit(AppMessage { seq, gen_slot: slot, body });
        }
        self.sender.step(slot, &mut self.frames);
        for frame in self.frames.drain(..) {
            self.channel.send(frame, slot)?;
        }
        self.max_window_span = self.max_window_span.max(self.sender.window_span());
        if let Some(fb) = self.receiver.feedback(slot) {
            self.channel.send_feedback(fb, slot);
        }
        Ok(deliveries)
    }

    pub fn records(&self) -> &[DeliveryRecord] {
        &self.records
    }

    pub fn sender(&self) -> &S {
        &self.sender
    }

    pub fn receiver(&self) -> &R {
        &self.receiver
    }

    pub fn channel(&self) -> &SlottedChannel<S::Frame, S::Feedback> {
        &self.channel
    }

    pub fn max_window_span(&self) -> usize {
        self.max_window_span
    }

    pub fn metrics(&self) -> TransportMetrics {
        collect_metrics(&self.records, self.sender.stats().total())
    }
}

pub type UdpSession = Session<udp::UdpSender, udp::UdpReceiver>;
pub type SrArqSession = Session<sr_arq::SrArqSender, sr_arq::SrArqReceiver>;
pub type AcRlncSession = Session<ac_rlnc::AcRlncSender, ac_rlnc::AcRlncReceiver>;

/// Any of the three protocols behind one type.
pub enum TransportSession {
    Udp(UdpSession),
    SrArq(SrArqSession),
    AcRlnc(AcRlncSession),
}

/// Where the forward channel's erasures come from.
pub enum LinkErasures {
    Random { profile: ErasureProfile, rng: StreamRng },
    Scripted(Vec<bool>),
}

macro_rules! dispatch {
    ($self:expr, $s:ident => $body:expr) => {
        match $self {
            TransportSession::Udp($s) => $body,
            TransportSession::SrArq($s) => $body,
            TransportSession::AcRlnc($s) => $body,
        }
    };
}

impl TransportSession {
    /// `coding_rng` feeds AC-RLNC coefficients and is ignored by the others.
    pub fn new(
        protocol: Protocol,
        params: &ProtocolParams,
        erasures: LinkErasures,
        coding_rng: StreamRng,
    ) -> Result<Self, TransportError> {
        params.validate()?;
        fn link<F, B>(rtt: u32, erasures: LinkErasures) -> Result<SlottedChannel<F, B>, ChannelError> {
            match erasures {
                LinkErasures::Random { profile, rng } => SlottedChannel::new(rtt, profile, rng),
                LinkErasures::Scripted(script) => SlottedChannel::scripted(rtt, script),
            }
        }
        let len = params.payload_len;
        Ok(match protocol {
            Protocol::Udp => TransportSession::Udp(Session::from_parts(
                udp::UdpSender::new(params),
                udp::UdpReceiver::new(),
                link(params.rtt, erasures)?,
                len,
            )),
            Protocol::SrArq => TransportSession::SrArq(Session::from_parts(
                sr_arq::SrArqSender::new(params),
                sr_arq::SrArqReceiver::new(),
                link(params.rtt, erasures)?,
                len,
            )),
            Protocol::AcRlnc => TransportSession::AcRlnc(Session::from_parts(
                ac_rlnc::AcRlncSender::new(params, coding_rng),
                ac_rlnc::AcRlncReceiver::new(len),
                link(params.rtt, erasures)?,
                len,
            )),
        })
    }

    pub fn protocol(&self) -> Protocol {
        match self {
            TransportSession::Udp(_) => Protocol::Udp,
            TransportSession::SrArq(_) => Protocol::SrArq,
            TransportSession::AcRlnc(_) => Protocol::AcRlnc,
        }
    }

    pub fn tick<I>(&mut self, slot: u32, bodies: I) -> Result<Vec<Delivery>, TransportError>
    where
        I: IntoIterator<Item = Vec<u8>>,
    {
        dispatch!(self, s => s.tick(slot, bodies))
    }

    pub fn records(&self) -> &[DeliveryRecord] {
        dispatch!(self, s => s.records())
    }

    pub fn sender_stats(&self) -> SenderStats {
        dispatch!(self, s => s.sender().stats())
    }

    pub fn max_window_span(&self) -> usize {
        dispatch!(self, s => s.max_window_span())
    }

    pub fn metrics(&self) -> TransportMetrics {
        dispatch!(self, s => s.metrics())
    }
}
