//! Sliding majority vote over the last 100 window decisions.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::DetectorError;

pub const RING_LEN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionVerdict {
    pub radar_present: bool,
    pub vote_fraction: f64,
    /// Inference time of the batch that produced the verdict.
    pub latency_s: f64,
    /// Index of the last window that entered the ring.
    pub window_index: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoteState {
    ring: VecDeque<bool>,
    positives: usize,
    batch_size: usize,
    filled: bool,
    windows_seen: u64,
    batch_latency_s: f64,
}

impl VoteState {
    pub fn new(batch_size: usize, batch_latency_s: f64) -> Result<Self, DetectorError> {
        if batch_size == 0 || batch_size > RING_LEN {
            return Err(DetectorError::InvalidParams(format!("batch size {batch_size} outside 1..={RING_LEN}")));
        }
        Ok(Self {
            ring: VecDeque::with_capacity(RING_LEN),
            positives: 0,
            batch_size,
            filled: false,
            windows_seen: 0,
            batch_latency_s,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn positives(&self) -> usize {
        self.positives
    }

    pub fn ring(&self) -> impl Iterator<Item = bool> + '_ {
        self.ring.iter().copied()
    }

    pub fn windows_seen(&self) -> u64 {
        self.windows_seen
    }

    /// Pushes one batch of thresholded decisions; a verdict is returned once
    /// the ring has been full at least once.
    pub fn push_bits(&mut self, bits: &[bool]) -> Result<Option<DetectionVerdict>, DetectorError> {
        if bits.len() != self.batch_size {
            return Err(DetectorError::BatchSizeMismatch { expected: self.batch_size, got: bits.len() });
        }
        for &b in bits {
            if self.ring.len() == RING_LEN && self.ring.pop_front() == Some(true) {
                self.positives -= 1;
            }
            self.ring.push_back(b);
            self.positives += usize::from(b);
        }
        self.windows_seen += bits.len() as u64;
        self.filled |= self.ring.len() == RING_LEN;
        Ok(self.filled.then(|| DetectionVerdict {
            radar_present: self.positives > RING_LEN / 2,
            vote_fraction: self.positives as f64 / RING_LEN as f64,
            latency_s: self.batch_latency_s,
            window_index: self.windows_seen - 1,
        }))
    }

    /// Like [`push_bits`](Self::push_bits) with probabilities thresholded at 0.5.
    pub fn push(&mut self, probs: &[f64]) -> Result<Option<DetectionVerdict>, DetectorError> {
        let bits: Vec<bool> = probs.iter().map(|&p| p >= 0.5).collect();
        self.push_bits(&bits)
    }
}

/// Functional form of [`VoteState::push`].
pub fn vote_step(state: &VoteState, probs: &[f64]) -> Result<(VoteState, Option<DetectionVerdict>), DetectorError> {
    let mut next = state.clone();
    let v = next.push(probs)?;
    Ok((next, v))
}
