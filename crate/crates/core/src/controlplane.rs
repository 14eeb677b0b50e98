//! Base-station vacate/resume loop, KPI proxy and end-to-end experiments.
//!
//! [`run_experiment`] advances model time one detector batch at a time.
//! Each step captures ten windows at the BS receiver (ship radar and UE
//! uplink through the scenario taps plus thermal noise), classifies them,
//! feeds the vote ring and steps the state machine at the time the batch
//! result becomes available.

use std::io::Write;
use std::num::NonZeroUsize;
use std::path::Path;

use log::debug;
use num_complex::Complex32;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{fir_apply, ChannelError};
use crate::detector::{DetectionVerdict, DetectorError, MatchedFilterClassifier, VoteState, WindowClassifier};
use crate::iqcore::{mean_power, segment_windows, IqBuffer, WINDOW_LEN};
use crate::rng::derive_seed;
use crate::scenario::{build_scenario_taps, find_link, NodeRole, ScenarioError, ScenarioSpec, TapSet};
use crate::waveforms::{gen_cellular, gen_noise, gen_radar, radar_pulse_template, CellularParams, RadarParams, WaveformError};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("illegal transition {from:?} -> {to:?}")]
    IllegalTransition { from: BsMode, to: BsMode },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BsMode {
    Transmitting,
    Vacated,
    PoweringUp,
}

/// Whether `from -> to` is one of the three permitted transitions (or no
/// change).
pub fn is_legal(from: BsMode, to: BsMode) -> bool {
    use BsMode::*;
    from == to || matches!((from, to), (Transmitting, Vacated) | (Vacated, PoweringUp) | (PoweringUp, Transmitting))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsState {
    pub mode: BsMode,
    pub since_s: f64,
    pub clear_streak: usize,
    pub ues_connected: bool,
    pub reconnect_at_s: Option<f64>,
}

impl BsState {
    pub fn transmitting(t_s: f64) -> Self {
        Self { mode: BsMode::Transmitting, since_s: t_s, clear_streak: 0, ues_connected: true, reconnect_at_s: None }
    }

    /// Downlink carries traffic.
    pub fn serving(&self) -> bool {
        self.mode == BsMode::Transmitting && self.ues_connected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    pub clear_streak: usize,
    pub powerup_delay_s: f64,
    pub reconnect_delay_s: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self { clear_streak: 5, powerup_delay_s: 10.0, reconnect_delay_s: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    RadarOnsetTruth,
    RadarEndTruth,
    VerdictChange,
    BSShutdown,
    BSPowerUpStart,
    BSResumed,
    UEReconnected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t_s: f64,
    pub event: EventKind,
    #[serde(default)]
    pub payload: serde_json::Value,
}

impl LogEntry {
    pub fn new(t_s: f64, event: EventKind) -> Self {
        Self { t_s, event, payload: serde_json::Value::Null }
    }
}

/// Advances the BS state machine to `t_s` and applies `verdict`.
///
/// Timers fire first: a power-up that completed before `t_s` is stamped at
/// its exact completion time, as is a due UE reconnection. A missing
/// verdict (vote ring still filling) counts as clear.
pub fn step_state(
    s: &BsState,
    verdict: Option<&DetectionVerdict>,
    t_s: f64,
    cfg: &ControlConfig,
) -> Result<(BsState, Vec<LogEntry>), ControlError> {
    let mut n = s.clone();
    let mut events = Vec::new();
    let go = |n: &mut BsState, to: BsMode, at: f64, ev: EventKind, events: &mut Vec<LogEntry>| {
        if !is_legal(n.mode, to) {
            return Err(ControlError::IllegalTransition { from: n.mode, to });
        }
        n.mode = to;
        n.since_s = at;
        events.push(LogEntry::new(at, ev));
        Ok(())
    };
    if n.mode == BsMode::PoweringUp && t_s >= n.since_s + cfg.powerup_delay_s {
        let at = n.since_s + cfg.powerup_delay_s;
        go(&mut n, BsMode::Transmitting, at, EventKind::BSResumed, &mut events)?;
        n.reconnect_at_s = Some(at + cfg.reconnect_delay_s);
    }
    if n.mode == BsMode::Transmitting && !n.ues_connected {
        if let Some(at) = n.reconnect_at_s.filter(|&at| t_s >= at) {
            n.ues_connected = true;
            n.reconnect_at_s = None;
            events.push(LogEntry::new(at, EventKind::UEReconnected));
        }
    }
    let radar = verdict.is_some_and(|v| v.radar_present);
    match n.mode {
        BsMode::Transmitting if radar => {
            go(&mut n, BsMode::Vacated, t_s, EventKind::BSShutdown, &mut events)?;
            n.ues_connected = false;
            n.reconnect_at_s = None;
            n.clear_streak = 0;
        }
        BsMode::Vacated => {
            n.clear_streak = if radar { 0 } else { n.clear_streak + 1 };
            if n.clear_streak >= cfg.clear_streak {
                go(&mut n, BsMode::PoweringUp, t_s, EventKind::BSPowerUpStart, &mut events)?;
                n.clear_streak = 0;
            }
        }
        _ => {}
    }
    Ok((n, events))
}

/// Spectral efficiency (bit/s/Hz) of CQI 1..=15, 4-bit CQI table.
pub const CQI_EFFICIENCY: [f64; 15] = [
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152,
    5.5547,
];

/// SINR at which each CQI becomes available: evenly spaced from -6 dB
/// (CQI 1) to 20 dB (CQI 15).
pub fn cqi_thresholds_db() -> [f64; 15] {
    std::array::from_fn(|i| -6.0 + 26.0 * i as f64 / 14.0)
}

pub fn cqi_for_sinr(sinr_db: f64) -> u8 {
    let th = cqi_thresholds_db();
    (th.iter().rposition(|&t| sinr_db >= t).unwrap_or(0) + 1) as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiConfig {
    pub offered_mbps: f64,
    pub bandwidth_hz: f64,
    /// Fraction of resources left for user data.
    pub data_fraction: f64,
    /// Round-robin share among this many UEs.
    pub num_ues: usize,
}

impl Default for KpiConfig {
    fn default() -> Self {
        Self { offered_mbps: 10.0, bandwidth_hz: 10e6, data_fraction: 0.6, num_ues: 6 }
    }
}

impl KpiConfig {
    /// Mbps per unit spectral efficiency for one UE.
    pub fn mbps_per_efficiency(&self) -> f64 {
        self.bandwidth_hz * self.data_fraction / self.num_ues.max(1) as f64 / 1e6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSample {
    pub t_s: f64,
    pub ue_id: String,
    pub sinr_db: f64,
    pub cqi: u8,
    pub throughput_mbps: f64,
}

pub fn kpi_proxy(t_s: f64, ue_id: &str, sinr_db: f64, bs: &BsState, cfg: &KpiConfig) -> KpiSample {
    let cqi = cqi_for_sinr(sinr_db);
    let rate = (CQI_EFFICIENCY[usize::from(cqi) - 1] * cfg.mbps_per_efficiency()).min(cfg.offered_mbps);
    KpiSample {
        t_s,
        ue_id: ue_id.to_string(),
        sinr_db,
        cqi,
        throughput_mbps: if bs.serving() { rate } else { 0.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarSchedule {
    pub on_s: f64,
    pub off_s: f64,
}

/// Everything [`run_experiment`] needs besides the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSpec,
    pub schedule: Option<RadarSchedule>,
    pub radar: RadarParams,
    pub cellular: CellularParams,
    pub control: ControlConfig,
    pub kpi: KpiConfig,
    pub batch_size: usize,
    /// Model time between consecutive batch results.
    pub batch_period_s: f64,
    pub noise_figure_db: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::waikiki(),
            schedule: None,
            radar: RadarParams::default(),
            cellular: CellularParams::default(),
            control: ControlConfig::default(),
            kpi: KpiConfig::default(),
            batch_size: 10,
            batch_period_s: 0.0274,
            noise_figure_db: 7.0,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Thermal noise power at the receiver in mW.
    pub fn noise_mw(&self) -> f64 {
        dbm_to_mw(-174.0 + 10.0 * self.radar.sample_rate_hz.log10() + self.noise_figure_db)
    }

    pub fn radar_active(&self, t_s: f64) -> bool {
        self.schedule.is_some_and(|s| t_s >= s.on_s && t_s < s.off_s)
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Matched filter over one radar pulse, with enough context to see every
/// pulse whole.
pub fn baseline_classifier(radar: &RadarParams, threshold: f64) -> Result<MatchedFilterClassifier, ControlError> {
    let template = radar_pulse_template(radar)?;
    let gap = (radar.pri_s * (1.0 + radar.pri_jitter) * radar.sample_rate_hz).ceil() as usize;
    let history = (gap + radar.pulse_span_samples()).div_ceil(WINDOW_LEN) * WINDOW_LEN;
    Ok(MatchedFilterClassifier::new(template, threshold, history)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRow {
    pub t_s: f64,
    pub band_active: u8,
    pub radar_active: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub events: Vec<LogEntry>,
    pub kpi: Vec<KpiSample>,
    pub occupancy: Vec<OccupancyRow>,
    /// BS state after each batch, stamped with the batch result time.
    pub states: Vec<(f64, BsState)>,
    pub verdicts: Vec<(f64, Option<DetectionVerdict>)>,
}

impl ExperimentResult {
    pub fn first(&self, kind: EventKind) -> Option<f64> {
        self.events.iter().find(|e| e.event == kind).map(|e| e.t_s)
    }

    /// BSShutdown minus RadarOnsetTruth.
    pub fn detection_delay_s(&self) -> Option<f64> {
        Some(self.first(EventKind::BSShutdown)? - self.first(EventKind::RadarOnsetTruth)?)
    }

    /// State in force at `t_s`.
    pub fn state_at(&self, t_s: f64) -> Option<&BsState> {
        self.states.iter().take_while(|(t, _)| *t <= t_s).last().map(|(_, s)| s)
    }

    pub fn write_events_jsonl(&self, path: &Path) -> Result<(), ControlError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_kpi_csv(&self, path: &Path) -> Result<(), ControlError> {
        let mut w = csv::Writer::from_path(path)?;
        for k in &self.kpi {
            w.serialize(k)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_occupancy_csv(&self, path: &Path) -> Result<(), ControlError> {
        let mut w = csv::Writer::from_path(path)?;
        for o in &self.occupancy {
            w.serialize(o)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Samples of FIR history carried ahead of each capture.
const LEAD_IN: usize = 128;

struct Links {
    ship: Vec<TapSet>,
    ues: Vec<(String, Vec<TapSet>, Vec<TapSet>)>,
}

fn collect_links(spec: &ScenarioSpec, seed: u64) -> Result<Links, ControlError> {
    let taps = build_scenario_taps(spec, seed)?;
    let steps = spec.num_timesteps();
    let by_role = |r: NodeRole| spec.nodes.iter().filter(move |n| n.role == r);
    let bs = by_role(NodeRole::Bs).next().ok_or_else(|| ControlError::InvalidParams("scenario has no BS".into()))?;
    let ship = by_role(NodeRole::Ship).next();
    let timeline = |a: &str, b: &str| -> Vec<TapSet> {
        (0..steps).map(|k| find_link(&taps, a, b, k).cloned().expect("every link is built")).collect()
    };
    let ship_taps = ship.map(|s| timeline(&s.id, &bs.id)).unwrap_or_default();
    let ues = by_role(NodeRole::Ue)
        .map(|u| {
            let to_ship = ship.map(|s| timeline(&s.id, &u.id)).unwrap_or_default();
            (u.id.clone(), timeline(&u.id, &bs.id), to_ship)
        })
        .collect();
    Ok(Links { ship: ship_taps, ues })
}

/// Runs the closed loop over the scenario duration. With `classifier` set to
/// `None` no verdicts are produced and the BS never vacates.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    mut classifier: Option<&mut dyn WindowClassifier>,
) -> Result<ExperimentResult, ControlError> {
    cfg.scenario.validate()?;
    cfg.radar.validate()?;
    cfg.cellular.validate()?;
    if cfg.cellular.sample_rate_hz != cfg.radar.sample_rate_hz {
        return Err(ControlError::InvalidParams("radar and cellular sample rates differ".into()));
    }
    if !(cfg.batch_period_s > 0.0) || cfg.batch_size == 0 {
        return Err(ControlError::InvalidParams("batch size and period must be positive".into()));
    }
    let duration = cfg.scenario.duration_s;
    if let Some(s) = cfg.schedule {
        if !(s.on_s >= 0.0 && s.on_s < s.off_s && s.off_s <= duration) {
            return Err(ControlError::InvalidParams(format!("schedule {s:?} outside [0, {duration}] s")));
        }
    }
    let fs = cfg.radar.sample_rate_hz;
    let links = collect_links(&cfg.scenario, cfg.seed)?;
    let steps = cfg.scenario.num_timesteps();
    let step_of = |t: f64| ((t / cfg.scenario.sampling_time_s).floor() as usize).min(steps - 1);

    let radar = gen_radar(&cfg.radar)?;
    let radar_scale = (dbm_to_mw(ship_power(cfg)) / mean_power(radar.samples())).sqrt() as f32;
    let ue_scale = dbm_to_mw(ue_power(cfg)).sqrt() as f32;
    let noise_mw = cfg.noise_mw();
    let capture = cfg.batch_size * WINDOW_LEN;
    let total = capture + LEAD_IN;
    let symbols = total.div_ceil(cfg.cellular.symbol_len());

    let mut vote = VoteState::new(cfg.batch_size, cfg.batch_period_s)?;
    let mut state = BsState::transmitting(0.0);
    let mut events = Vec::new();
    let mut states = Vec::new();
    let mut verdicts = Vec::new();
    let mut occupancy = Vec::new();
    let mut last_flag: Option<bool> = None;

    let mut k: u64 = 0;
    loop {
        let t0 = k as f64 * cfg.batch_period_s;
        let t_done = t0 + cfg.batch_period_s;
        if t_done > duration + 1e-9 {
            break;
        }
        let step = step_of(t0);
        let start_sample = (t0 * fs).round() as i64 - LEAD_IN as i64;
        let mut rx = vec![Complex32::new(0.0, 0.0); total];

        if !links.ship.is_empty() && cfg.schedule.is_some() {
            let gated: Vec<Complex32> = (0..total)
                .map(|i| {
                    let n = start_sample + i as i64;
                    let t = n as f64 / fs;
                    if n >= 0 && cfg.radar_active(t) {
                        radar.samples()[(n as usize) % radar.len()] * radar_scale
                    } else {
                        Complex32::new(0.0, 0.0)
                    }
                })
                .collect();
            if gated.iter().any(|s| s.re != 0.0 || s.im != 0.0) {
                let out = fir_apply(&IqBuffer::new(gated, fs).expect("finite"), &links.ship[step])?;
                rx.iter_mut().zip(out.samples()).for_each(|(r, s)| *r += s);
            }
        }
        if state.serving() {
            for (ui, (_, up, _)) in links.ues.iter().enumerate() {
                let cell = gen_cellular(&cfg.cellular, symbols, derive_seed(cfg.seed, &[1, ui as u64, k]))?;
                let tx = cell.slice(0, total).scaled(Complex32::new(ue_scale, 0.0));
                let out = fir_apply(&tx, &up[step])?;
                rx.iter_mut().zip(out.samples()).for_each(|(r, s)| *r += s);
            }
        }
        let noise = gen_noise(total, noise_mw, derive_seed(cfg.seed, &[2, k]), fs)?;
        rx.iter_mut().zip(noise.samples()).for_each(|(r, s)| *r += s);
        let buf = IqBuffer::new(rx[LEAD_IN..].to_vec(), fs).expect("finite");

        let verdict = match classifier.as_deref_mut() {
            Some(c) => {
                let windows = segment_windows(&buf, NonZeroUsize::new(WINDOW_LEN).unwrap());
                let probs = c.classify(&windows)?;
                vote.push(&probs)?
            }
            None => None,
        };
        let flag = verdict.map(|v| v.radar_present);
        if flag.is_some() && flag != last_flag {
            let mut e = LogEntry::new(t_done, EventKind::VerdictChange);
            e.payload = serde_json::json!({
                "radar_present": flag,
                "vote_fraction": verdict.map(|v| v.vote_fraction),
                "window_index": verdict.map(|v| v.window_index),
            });
            events.push(e);
            last_flag = flag;
        }
        let (next, ev) = step_state(&state, verdict.as_ref(), t_done, &cfg.control)?;
        if !ev.is_empty() {
            debug!("t={t_done:.4}s {ev:?}");
        }
        events.extend(ev);
        state = next;
        states.push((t_done, state.clone()));
        verdicts.push((t_done, verdict));
        occupancy.push(OccupancyRow {
            t_s: t_done,
            band_active: u8::from(state.serving()),
            radar_active: u8::from(cfg.radar_active(t0)),
        });
        k += 1;
    }
    if let Some(s) = cfg.schedule {
        events.push(LogEntry::new(s.on_s, EventKind::RadarOnsetTruth));
        events.push(LogEntry::new(s.off_s, EventKind::RadarEndTruth));
    }
    events.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));

    let mut result = ExperimentResult { events, kpi: Vec::new(), occupancy, states, verdicts };
    result.kpi = kpi_rows(cfg, &links, &result)?;
    Ok(result)
}

fn ship_power(cfg: &ExperimentConfig) -> f64 {
    role_power(cfg, NodeRole::Ship)
}

fn ue_power(cfg: &ExperimentConfig) -> f64 {
    role_power(cfg, NodeRole::Ue)
}

fn role_power(cfg: &ExperimentConfig, role: NodeRole) -> f64 {
    cfg.scenario.nodes.iter().find(|n| n.role == role).map_or(role.default_tx_power_dbm(), |n| n.tx_power_dbm)
}

/// Downlink SINR per UE once a second: BS power over thermal noise plus
/// radar interference arriving from the ship.
fn kpi_rows(cfg: &ExperimentConfig, links: &Links, res: &ExperimentResult) -> Result<Vec<KpiSample>, ControlError> {
    let bs_dbm = role_power(cfg, NodeRole::Bs);
    let ship_mw = dbm_to_mw(ship_power(cfg));
    let noise_mw = cfg.noise_mw();
    let steps = cfg.scenario.num_timesteps();
    let initial = BsState::transmitting(0.0);
    let mut rows = Vec::new();
    for sec in 0..cfg.scenario.duration_s.floor() as usize {
        let t = sec as f64;
        let step = ((t / cfg.scenario.sampling_time_s).floor() as usize).min(steps - 1);
        let bs = res.state_at(t).unwrap_or(&initial);
        for (id, up, from_ship) in &links.ues {
            let signal = dbm_to_mw(bs_dbm) * up[step].total_power();
            let interference =
                if cfg.radar_active(t) && !from_ship.is_empty() { ship_mw * from_ship[step].total_power() } else { 0.0 };
            let sinr_db = 10.0 * (signal / (noise_mw + interference)).log10();
            rows.push(kpi_proxy(t, id, sinr_db, bs, &cfg.kpi));
        }
    }
    Ok(rows)
}
