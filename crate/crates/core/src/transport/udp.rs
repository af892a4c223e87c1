//! Best-effort datagrams: one transmission per message, no feedback, no ordering.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use super::{AppMessage, ProtocolParams, ReceiverMachine, SenderMachine, SenderStats};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Datagram {
    pub seq: u64,
    pub body: Vec<u8>,
}

#[derive(Debug)]
pub struct UdpSender {
    beta: u32,
    queue: VecDeque<AppMessage>,
    stats: SenderStats,
}

impl UdpSender {
    pub fn new(params: &ProtocolParams) -> Self {
        UdpSender { beta: params.beta, queue: VecDeque::new(), stats: SenderStats::default() }
    }
}

impl SenderMachine for UdpSender {
    type Frame = Datagram;
    type Feedback = ();

    fn submit(&mut self, msg: AppMessage) {
        self.queue.push_back(msg);
    }

    fn on_feedback(&mut self, _: ()) {}

    fn step(&mut self, _slot: u32, out: &mut Vec<Datagram>) {
        // Spare opportunities stay idle: no copies.
        for _ in 0..self.beta {
            let Some(msg) = self.queue.pop_front() else { break };
            self.stats.new_frames += 1;
            out.push(Datagram { seq: msg.seq, body: msg.body });
        }
    }

    fn stats(&self) -> SenderStats {
        self.stats
    }

    fn window_span(&self) -> usize {
        0
    }
}

#[derive(Debug, Default)]
pub struct UdpReceiver;

impl UdpReceiver {
    pub fn new() -> Self {
        UdpReceiver
    }
}

impl ReceiverMachine for UdpReceiver {
    type Frame = Datagram;
    type Feedback = ();

    fn on_arrival(&mut self, frame: Datagram, _slot: u32, out: &mut Vec<(u64, Vec<u8>)>) {
        out.push((frame.seq, frame.body));
    }

    fn feedback(&mut self, _slot: u32) -> Option<()> {
        None
    }
}
