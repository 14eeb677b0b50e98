//! Per-window classifiers used by the detection loop.

use num_complex::Complex32;

use super::weights::Network;
use super::DetectorError;
use crate::channel::{correlate_template, ChannelError};
use crate::dataset::window_features;
use crate::iqcore::{Domain, IqBuffer, Window1024, WINDOW_LEN};

/// Maps time-domain windows to radar probabilities.
pub trait WindowClassifier {
    fn classify(&mut self, windows: &[Window1024]) -> Result<Vec<f64>, DetectorError>;
}

/// The CNN on record-style features.
pub struct CnnClassifier {
    pub net: Network,
    pub domain: Domain,
}

impl WindowClassifier for CnnClassifier {
    fn classify(&mut self, windows: &[Window1024]) -> Result<Vec<f64>, DetectorError> {
        let feats = windows
            .iter()
            .map(|w| window_features(w, self.domain).map_err(|e| DetectorError::InvalidParams(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        self.net.forward(&feats)
    }
}

/// Streaming matched filter: each window is correlated, together with the
/// samples that preceded it, against a single radar pulse. Output is 1.0
/// when the peak reaches the threshold and 0.0 otherwise.
pub struct MatchedFilterClassifier {
    template: IqBuffer,
    threshold: f64,
    history: Vec<Complex32>,
    history_len: usize,
}

impl MatchedFilterClassifier {
    /// `history_len` samples of context are kept; it should cover the
    /// longest gap between pulses plus one pulse so that every pulse is seen
    /// whole at least once.
    pub fn new(template: IqBuffer, threshold: f64, history_len: usize) -> Result<Self, DetectorError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(DetectorError::InvalidParams(format!("threshold {threshold} outside (0, 1)")));
        }
        if template.len() > history_len + WINDOW_LEN {
            return Err(DetectorError::InvalidParams("template longer than history plus window".into()));
        }
        Ok(Self { template, threshold, history: Vec::new(), history_len })
    }

    pub fn peak(&mut self, w: &Window1024) -> Result<f64, ChannelError> {
        self.history.extend_from_slice(w.values());
        let excess = self.history.len().saturating_sub(self.history_len + WINDOW_LEN);
        self.history.drain(..excess);
        if self.history.len() < self.template.len() {
            return Ok(0.0);
        }
        let rx = IqBuffer::new(self.history.clone(), self.template.sample_rate_hz())
            .map_err(|e| ChannelError::InvalidParams(e.to_string()))?;
        Ok(correlate_template(&rx, &self.template)?.into_iter().fold(0.0, f64::max))
    }
}

impl WindowClassifier for MatchedFilterClassifier {
    fn classify(&mut self, windows: &[Window1024]) -> Result<Vec<f64>, DetectorError> {
        windows
            .iter()
            .map(|w| {
                let p = self.peak(w).map_err(|e| DetectorError::InvalidParams(e.to_string()))?;
                Ok(if p >= self.threshold { 1.0 } else { 0.0 })
            })
            .collect()
    }
}
