//! Transparent wireless serial channel between the central unit and the
//! on-vehicle unit. One byte per frame, no acknowledgement, no retry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("byte 0x{0:02x} is not a link payload")]
    BadPayload(u8),
    #[error("invalid link parameter {field}: {value}")]
    BadParam { field: &'static str, value: f64 },
}

/// Bytes that travel the link. `H` is the uplink halt frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FramePayload {
    #[serde(rename = "E")]
    Enable,
    #[serde(rename = "D")]
    Disable,
    #[serde(rename = "H")]
    Halt,
}

impl FramePayload {
    pub fn as_byte(self) -> u8 {
        match self {
            FramePayload::Enable => b'E',
            FramePayload::Disable => b'D',
            FramePayload::Halt => b'H',
        }
    }
}

impl TryFrom<u8> for FramePayload {
    type Error = LinkError;
    fn try_from(b: u8) -> Result<Self, Self::Error> {
        match b {
            b'E' => Ok(FramePayload::Enable),
            b'D' => Ok(FramePayload::Disable),
            b'H' => Ok(FramePayload::Halt),
            other => Err(LinkError::BadPayload(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// central -> vehicle
    Downlink,
    /// vehicle -> central
    Uplink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fate {
    Delivered,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub seq: u64,
    pub payload: FramePayload,
    pub direction: Direction,
    pub sent_t: f64,
    pub deliver_t: f64,
    pub fate: Fate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub base_latency: f64,
    /// Upper bound of the uniform extra delay.
    pub jitter: f64,
    pub drop_probability: f64,
    pub seed: u64,
    pub in_order: bool,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self::ideal()
    }
}

impl LinkParams {
    pub fn ideal() -> Self {
        Self { base_latency: 0.0, jitter: 0.0, drop_probability: 0.0, seed: 0, in_order: true }
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        let finite_non_neg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_non_neg(self.base_latency) {
            return Err(LinkError::BadParam { field: "base_latency", value: self.base_latency });
        }
        if !finite_non_neg(self.jitter) {
            return Err(LinkError::BadParam { field: "jitter", value: self.jitter });
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(LinkError::BadParam { field: "drop_probability", value: self.drop_probability });
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct WirelessLink {
    params: LinkParams,
    rng: ChaCha8Rng,
    next_seq: u64,
    in_flight: Vec<Frame>,
    /// Latest scheduled delivery per direction, for FIFO clamping.
    tail: [f64; 2],
}

impl WirelessLink {
    pub fn new(params: LinkParams) -> Result<Self, LinkError> {
        params.validate()?;
        Ok(Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            next_seq: 0,
            in_flight: Vec::new(),
            tail: [f64::NEG_INFINITY; 2],
        })
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    pub fn send(&mut self, payload: u8, direction: Direction, t: f64) -> Result<Frame, LinkError> {
        let payload = FramePayload::try_from(payload)?;
        // Both draws happen for every frame so the stream stays aligned.
        let drop_draw: f64 = self.rng.gen();
        let jitter_draw: f64 = self.rng.gen();
        let mut deliver_t = t + self.params.base_latency + jitter_draw * self.params.jitter;
        let lane = direction as usize;
        if self.params.in_order {
            deliver_t = deliver_t.max(self.tail[lane]);
        }
        let fate = if drop_draw < self.params.drop_probability { Fate::Dropped } else { Fate::Delivered };
        let frame = Frame { seq: self.next_seq, payload, direction, sent_t: t, deliver_t, fate };
        self.next_seq += 1;
        if fate == Fate::Delivered {
            if self.params.in_order {
                self.tail[lane] = deliver_t;
            }
            self.in_flight.push(frame);
        }
        Ok(frame)
    }

    /// Frames due at or before `t`, ordered by delivery time then send order.
    pub fn poll(&mut self, t: f64) -> Vec<Frame> {
        let (mut due, pending): (Vec<Frame>, Vec<Frame>) =
            self.in_flight.drain(..).partition(|f| f.deliver_t <= t);
        self.in_flight = pending;
        due.sort_by(|a, b| a.deliver_t.total_cmp(&b.deliver_t).then(a.seq.cmp(&b.seq)));
        due
    }

    /// Frames still travelling; removes them.
    pub fn drain_in_flight(&mut self) -> Vec<Frame> {
        let mut rest = std::mem::take(&mut self.in_flight);
        rest.sort_by_key(|f| f.seq);
        rest
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }
}
