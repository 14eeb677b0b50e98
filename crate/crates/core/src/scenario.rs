//! Scenario geometry and channel taps.
//!
//! A [`ScenarioSpec`] places a base station, its UEs and a radar ship in a
//! rectangular area. For every node pair and every sampling instant a raw
//! multipath profile is synthesized (analytic line-of-sight plus
//! exponentially decaying reflections) and then reduced by power-weighted
//! k-means over tap delays to the emulator limits: at most four non-zero taps
//! within a 5.12 µs delay spread.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, hash_str, rng_from_seed};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Emulator limit on non-zero taps per link.
pub const MAX_TAPS: usize = 4;

/// Emulator limit on delay spread.
pub const MAX_DELAY_SPREAD_S: f64 = 5.12e-6;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("time {t_s} s outside [0, {duration_s}] s")]
    OutOfRange { t_s: f64, duration_s: f64 },
    #[error("nodes {0} and {1} are coincident")]
    CoincidentNodes(String, String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("empty tap list")]
    EmptyInput,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("tap set violates constraints: {0}")]
    InvalidTapSet(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRole {
    #[serde(rename = "BS")]
    Bs,
    #[serde(rename = "UE")]
    Ue,
    Ship,
}

impl NodeRole {
    pub fn default_height_m(self) -> f64 {
        match self {
            NodeRole::Bs | NodeRole::Ship => 3.0,
            NodeRole::Ue => 1.0,
        }
    }

    pub fn default_tx_power_dbm(self) -> f64 {
        match self {
            NodeRole::Bs | NodeRole::Ship => 30.0,
            NodeRole::Ue => 20.0,
        }
    }
}

pub type Position = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub role: NodeRole,
    pub position_m: Position,
    pub tx_power_dbm: f64,
}

impl Node {
    /// Node at ground coordinates `(x, y)` with role-default antenna height
    /// and transmit power.
    pub fn new(id: impl Into<String>, role: NodeRole, x: f64, y: f64) -> Self {
        Self {
            id: id.into(),
            role,
            position_m: [x, y, role.default_height_m()],
            tx_power_dbm: role.default_tx_power_dbm(),
        }
    }

    pub fn at(&self, position_m: Position) -> Node {
        Node { position_m, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t_s: f64,
    pub position_m: Position,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    pub speed_mps: f64,
}

impl Trajectory {
    /// Straight line from `start` along `heading` (unit vector in the x/y
    /// plane) for `duration_s` seconds.
    pub fn straight(start: Position, heading: [f64; 2], speed_mps: f64, duration_s: f64) -> Self {
        let d = speed_mps * duration_s;
        let end = [start[0] + heading[0] * d, start[1] + heading[1] * d, start[2]];
        Self {
            waypoints: vec![Waypoint { t_s: 0.0, position_m: start }, Waypoint { t_s: duration_s, position_m: end }],
            speed_mps,
        }
    }

    /// Linear interpolation, clamped to the end points.
    pub fn position_at(&self, t_s: f64) -> Position {
        let w = &self.waypoints;
        if t_s <= w[0].t_s {
            return w[0].position_m;
        }
        for pair in w.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if t_s <= b.t_s {
                let f = (t_s - a.t_s) / (b.t_s - a.t_s);
                return std::array::from_fn(|i| a.position_m[i] + f * (b.position_m[i] - a.position_m[i]));
            }
        }
        w[w.len() - 1].position_m
    }

    fn validate(&self, id: &str) -> Result<(), ScenarioError> {
        if self.waypoints.is_empty() {
            return Err(ScenarioError::InvalidScenario(format!("trajectory of {id} has no waypoints")));
        }
        for pair in self.waypoints.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.t_s <= a.t_s {
                return Err(ScenarioError::InvalidScenario(format!("trajectory of {id}: timestamps not increasing")));
            }
            let speed = distance(&a.position_m, &b.position_m) / (b.t_s - a.t_s);
            if (speed - self.speed_mps).abs() > 1e-6 {
                return Err(ScenarioError::InvalidScenario(format!(
                    "trajectory of {id}: segment speed {speed} m/s differs from {} m/s",
                    self.speed_mps
                )));
            }
        }
        Ok(())
    }
}

/// Knobs of the synthetic multipath generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileConfig {
    pub num_paths: usize,
    pub max_excess_delay_s: f64,
    pub decay_s: f64,
    /// Extra loss of every reflection relative to line of sight.
    pub reflection_loss_db: f64,
    pub land_exponent: f64,
    pub water_exponent: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            num_paths: 12,
            max_excess_delay_s: 8e-6,
            decay_s: 2e-6,
            reflection_loss_db: 6.0,
            land_exponent: 2.7,
            water_exponent: 2.0,
        }
    }
}

impl ProfileConfig {
    /// Links touching the ship propagate over water.
    pub fn exponent_for(&self, a: NodeRole, b: NodeRole) -> f64 {
        if a == NodeRole::Ship || b == NodeRole::Ship {
            self.water_exponent
        } else {
            self.land_exponent
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub nodes: Vec<Node>,
    pub trajectories: BTreeMap<String, Trajectory>,
    pub duration_s: f64,
    pub sampling_time_s: f64,
    pub area_m: [f64; 2],
    pub carrier_hz: f64,
    #[serde(default)]
    pub profile: ProfileConfig,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self::waikiki()
    }
}

impl ScenarioSpec {
    /// Coastal scenario: one BS with six UEs inland and a ship sailing
    /// 400 m north to south along the shore at 10 m/s.
    pub fn waikiki() -> Self {
        let ues = [(520.0, 460.0), (390.0, 500.0), (470.0, 330.0), (610.0, 540.0), (360.0, 340.0), (640.0, 250.0)];
        let mut nodes = vec![Node::new("BS", NodeRole::Bs, 450.0, 420.0)];
        nodes.extend(ues.iter().enumerate().map(|(i, &(x, y))| Node::new(format!("UE-{:02}", i + 2), NodeRole::Ue, x, y)));
        let ship = Node::new("SHIP", NodeRole::Ship, 100.0, 700.0);
        let mut trajectories = BTreeMap::new();
        trajectories.insert(ship.id.clone(), Trajectory::straight(ship.position_m, [0.0, -1.0], 10.0, 40.0));
        nodes.push(ship);
        Self {
            nodes,
            trajectories,
            duration_s: 40.0,
            sampling_time_s: 1.0,
            area_m: [700.0, 800.0],
            carrier_hz: 3.6e9,
            profile: ProfileConfig::default(),
        }
    }

    pub fn num_timesteps(&self) -> usize {
        (self.duration_s / self.sampling_time_s).round() as usize
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::InvalidScenario(m));
        if !(self.duration_s > 0.0 && self.sampling_time_s > 0.0) {
            return bad("duration and sampling time must be positive".into());
        }
        let steps = self.duration_s / self.sampling_time_s;
        if (steps - steps.round()).abs() > 1e-9 {
            return bad(format!("duration/sampling_time = {steps} is not an integer"));
        }
        if !(self.carrier_hz > 0.0) {
            return bad("carrier_hz must be positive".into());
        }
        let in_area = |p: &Position| {
            (0.0..=self.area_m[0]).contains(&p[0]) && (0.0..=self.area_m[1]).contains(&p[1])
        };
        for (i, n) in self.nodes.iter().enumerate() {
            if self.nodes[..i].iter().any(|m| m.id == n.id) {
                return bad(format!("duplicate node id {}", n.id));
            }
            if !(n.position_m[2] > 0.0) {
                return bad(format!("node {} must have z > 0", n.id));
            }
            if !in_area(&n.position_m) {
                return bad(format!("node {} outside the area", n.id));
            }
        }
        for (id, tr) in &self.trajectories {
            if self.node(id).is_none() {
                return bad(format!("trajectory for unknown node {id}"));
            }
            tr.validate(id)?;
            if let Some(w) = tr.waypoints.iter().find(|w| !in_area(&w.position_m) || !(w.position_m[2] > 0.0)) {
                return bad(format!("waypoint at t={} of {id} outside the area", w.t_s));
            }
        }
        Ok(())
    }

    /// Unordered node pairs in declaration order.
    pub fn links(&self) -> Vec<(usize, usize)> {
        let n = self.nodes.len();
        (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect()
    }

    fn position_of(&self, node: &Node, t_s: f64) -> Position {
        self.trajectories.get(&node.id).map_or(node.position_m, |tr| tr.position_at(t_s))
    }

    /// Nodes moved to their positions at `t_s`.
    pub fn nodes_at(&self, t_s: f64) -> Result<Vec<Node>, ScenarioError> {
        self.check_time(t_s)?;
        Ok(self.nodes.iter().map(|n| n.at(self.position_of(n, t_s))).collect())
    }

    fn check_time(&self, t_s: f64) -> Result<(), ScenarioError> {
        if !(0.0..=self.duration_s).contains(&t_s) {
            return Err(ScenarioError::OutOfRange { t_s, duration_s: self.duration_s });
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let spec: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub fn distance(a: &Position, b: &Position) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Node positions at `t_s`; static nodes stay put, trajectory nodes are
/// linearly interpolated.
pub fn sample_positions(spec: &ScenarioSpec, t_s: f64) -> Result<BTreeMap<String, Position>, ScenarioError> {
    Ok(spec.nodes_at(t_s)?.into_iter().map(|n| (n.id, n.position_m)).collect())
}

/// Log-distance path loss with a 1 m free-space reference.
pub fn path_loss_db(a: &Position, b: &Position, carrier_hz: f64, exponent: f64) -> Result<f64, ScenarioError> {
    let d = distance(a, b);
    if d <= 0.0 {
        return Err(ScenarioError::CoincidentNodes(format!("{a:?}"), format!("{b:?}")));
    }
    Ok(free_space_1m_db(carrier_hz) + 10.0 * exponent * d.log10())
}

fn free_space_1m_db(carrier_hz: f64) -> f64 {
    20.0 * (4.0 * PI * carrier_hz / SPEED_OF_LIGHT).log10()
}

/// Pairwise path loss in dB at `t_s`, `NaN` on the diagonal.
pub fn path_loss_matrix(spec: &ScenarioSpec, t_s: f64) -> Result<Vec<Vec<f64>>, ScenarioError> {
    let nodes = spec.nodes_at(t_s)?;
    let n = nodes.len();
    let mut m = vec![vec![f64::NAN; n]; n];
    for (i, j) in spec.links() {
        let (a, b) = (&nodes[i], &nodes[j]);
        let pl = path_loss_db(&a.position_m, &b.position_m, spec.carrier_hz, spec.profile.exponent_for(a.role, b.role))
            .map_err(|_| ScenarioError::CoincidentNodes(a.id.clone(), b.id.clone()))?;
        m[i][j] = pl;
        m[j][i] = pl;
    }
    Ok(m)
}

pub fn write_heatmap_csv(spec: &ScenarioSpec, matrix: &[Vec<f64>], path: &Path) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["node".to_string()];
    header.extend(spec.nodes.iter().map(|n| n.id.clone()));
    w.write_record(&header)?;
    for (node, row) in spec.nodes.iter().zip(matrix) {
        let mut rec = vec![node.id.clone()];
        rec.extend(row.iter().map(|v| if v.is_nan() { String::new() } else { format!("{v:.3}") }));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tap {
    pub delay_s: f64,
    pub gain: Complex64,
}

pub fn total_power(taps: &[Tap]) -> f64 {
    taps.iter().map(|t| t.gain.norm_sqr()).sum()
}

pub fn delay_spread(taps: &[Tap]) -> f64 {
    let (lo, hi) = taps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t.delay_s), hi.max(t.delay_s)));
    if taps.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Taps of one link at one instant, within emulator limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapSet {
    pub taps: Vec<Tap>,
    pub link: (String, String),
    pub t_s: f64,
}

impl TapSet {
    pub fn new(taps: Vec<Tap>, link: (String, String), t_s: f64) -> Result<Self, ScenarioError> {
        let set = Self { taps, link, t_s };
        set.validate()?;
        Ok(set)
    }

    /// Single unit tap at zero delay.
    pub fn identity() -> Self {
        Self {
            taps: vec![Tap { delay_s: 0.0, gain: Complex64::new(1.0, 0.0) }],
            link: (String::new(), String::new()),
            t_s: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let nonzero = self.taps.iter().filter(|t| t.gain.norm_sqr() > 0.0).count();
        if nonzero > MAX_TAPS {
            return Err(ScenarioError::InvalidTapSet(format!("{nonzero} non-zero taps")));
        }
        if self.taps.iter().any(|t| !(t.delay_s >= 0.0 && t.delay_s.is_finite()) || !t.gain.is_finite()) {
            return Err(ScenarioError::InvalidTapSet("negative or non-finite tap".into()));
        }
        let spread = delay_spread(&self.taps);
        if spread > MAX_DELAY_SPREAD_S * (1.0 + 1e-12) {
            return Err(ScenarioError::InvalidTapSet(format!("delay spread {spread:e} s")));
        }
        if !(self.total_power() > 0.0) {
            return Err(ScenarioError::InvalidTapSet("zero total power".into()));
        }
        Ok(())
    }

    pub fn total_power(&self) -> f64 {
        total_power(&self.taps)
    }

    pub fn delay_spread(&self) -> f64 {
        delay_spread(&self.taps)
    }

    pub fn min_delay(&self) -> f64 {
        self.taps.iter().map(|t| t.delay_s).fold(f64::INFINITY, f64::min)
    }

    /// Channel power gain in dB (negative of the effective path loss).
    pub fn power_gain_db(&self) -> f64 {
        10.0 * self.total_power().log10()
    }
}

/// Line-of-sight tap plus `num_paths - 1` reflections with uniformly drawn
/// excess delays and exponentially decaying power. Reflection draws depend
/// only on `seed`, so a link keeps its multipath shape as nodes move.
pub fn synth_tap_profile(
    a: &Node,
    b: &Node,
    carrier_hz: f64,
    cfg: &ProfileConfig,
    seed: u64,
) -> Result<Vec<Tap>, ScenarioError> {
    if cfg.num_paths == 0 {
        return Err(ScenarioError::InvalidParams("num_paths must be at least 1".into()));
    }
    if !(cfg.max_excess_delay_s > 0.0 && cfg.decay_s > 0.0) {
        return Err(ScenarioError::InvalidParams("excess delay and decay must be positive".into()));
    }
    let exponent = cfg.exponent_for(a.role, b.role);
    let pl = path_loss_db(&a.position_m, &b.position_m, carrier_hz, exponent)
        .map_err(|_| ScenarioError::CoincidentNodes(a.id.clone(), b.id.clone()))?;
    let d = distance(&a.position_m, &b.position_m);
    let los_delay = d / SPEED_OF_LIGHT;
    let los_amp = 10f64.powf(-pl / 20.0);
    let los_phase = (-2.0 * PI * carrier_hz * los_delay).rem_euclid(2.0 * PI);
    let mut taps = vec![Tap { delay_s: los_delay, gain: Complex64::from_polar(los_amp, los_phase) }];

    let mut rng = rng_from_seed(seed);
    let refl = 10f64.powf(-cfg.reflection_loss_db / 10.0);
    for _ in 1..cfg.num_paths {
        let excess = cfg.max_excess_delay_s * (1.0 - rng.random::<f64>());
        let phase = rng.random_range(0.0..2.0 * PI);
        let power = los_amp * los_amp * refl * (-excess / cfg.decay_s).exp();
        taps.push(Tap { delay_s: los_delay + excess, gain: Complex64::from_polar(power.sqrt(), phase) });
    }
    taps.sort_by(|x, y| x.delay_s.total_cmp(&y.delay_s));
    Ok(taps)
}

/// Result of one power-weighted 1-D k-means run.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centroids: Vec<f64>,
    pub assignment: Vec<usize>,
    pub objective: f64,
    /// Objective after the initial assignment and after every iteration.
    pub trace: Vec<f64>,
}

fn weighted_objective(points: &[f64], weights: &[f64], centroids: &[f64], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(weights)
        .zip(assignment)
        .map(|((x, w), &c)| w * (x - centroids[c]).powi(2))
        .sum()
}

fn nearest(x: f64, centroids: &[f64]) -> usize {
    let mut best = 0;
    for (i, c) in centroids.iter().enumerate() {
        if (x - c).abs() < (x - centroids[best]).abs() {
            best = i;
        }
    }
    best
}

/// Lloyd iterations from a k-means++ seeding. `k` is capped at the number
/// of distinct points.
pub fn weighted_kmeans_1d(points: &[f64], weights: &[f64], k: usize, seed: u64, max_iter: usize) -> KMeansFit {
    assert_eq!(points.len(), weights.len());
    let mut distinct: Vec<f64> = points.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let k = k.min(distinct.len()).max(1);

    let mut rng = rng_from_seed(seed);
    let mut centroids: Vec<f64> = Vec::with_capacity(k);
    let pick = |scores: &[f64], rng: &mut crate::rng::TwinRng| -> Option<usize> {
        let total: f64 = scores.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let mut r = rng.random::<f64>() * total;
        for (i, s) in scores.iter().enumerate() {
            if *s > 0.0 {
                if r < *s {
                    return Some(i);
                }
                r -= s;
            }
        }
        scores.iter().rposition(|s| *s > 0.0)
    };
    let first = pick(weights, &mut rng).unwrap_or(0);
    centroids.push(points[first]);
    while centroids.len() < k {
        let scores: Vec<f64> = points
            .iter()
            .zip(weights)
            .map(|(x, w)| w * centroids.iter().map(|c| (x - c).powi(2)).fold(f64::INFINITY, f64::min))
            .collect();
        let next = match pick(&scores, &mut rng) {
            Some(i) => points[i],
            // all weighted points already chosen; fall back to an unused distinct value
            None => match distinct.iter().find(|d| !centroids.contains(d)) {
                Some(&d) => d,
                None => break,
            },
        };
        centroids.push(next);
    }

    let mut assignment: Vec<usize> = points.iter().map(|&x| nearest(x, &centroids)).collect();
    let mut trace = vec![weighted_objective(points, weights, &centroids, &assignment)];
    for _ in 0..max_iter {
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let (sw, swx) = points
                .iter()
                .zip(weights)
                .zip(&assignment)
                .filter(|(_, &a)| a == c)
                .fold((0.0, 0.0), |(sw, swx), ((x, w), _)| (sw + w, swx + w * x));
            if sw > 0.0 {
                *centroid = swx / sw;
            }
        }
        let next: Vec<usize> = points.iter().map(|&x| nearest(x, &centroids)).collect();
        let changed = next != assignment;
        assignment = next;
        trace.push(weighted_objective(points, weights, &centroids, &assignment));
        if !changed {
            break;
        }
    }
    let objective = *trace.last().unwrap();
    KMeansFit { centroids, assignment, objective, trace }
}

/// Clustering options for [`approx_taps`].
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxConfig {
    pub k: usize,
    pub max_spread_s: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self { k: MAX_TAPS, max_spread_s: MAX_DELAY_SPREAD_S, max_iter: 100, restarts: 8, seed: 0x7a95_1c4e }
    }
}

#[derive(Debug, Clone)]
struct Cluster {
    delay_s: f64,
    power: f64,
    lead_amp: f64,
    lead_phase: f64,
    single: Option<Tap>,
}

impl Cluster {
    fn merge(self, other: Cluster) -> Cluster {
        let power = self.power + other.power;
        let delay_s = if power > 0.0 {
            (self.delay_s * self.power + other.delay_s * other.power) / power
        } else {
            0.5 * (self.delay_s + other.delay_s)
        };
        let (lead_amp, lead_phase) = if other.lead_amp > self.lead_amp {
            (other.lead_amp, other.lead_phase)
        } else {
            (self.lead_amp, self.lead_phase)
        };
        Cluster { delay_s, power, lead_amp, lead_phase, single: None }
    }

    fn to_tap(&self) -> Tap {
        self.single.unwrap_or(Tap { delay_s: self.delay_s, gain: Complex64::from_polar(self.power.sqrt(), self.lead_phase) })
    }
}

/// Best-of-restarts k-means assignment of raw taps to clusters.
pub fn cluster_taps(raw: &[Tap], cfg: &ApproxConfig) -> KMeansFit {
    let total = total_power(raw);
    // microseconds and unit total power keep the objective well scaled
    let points: Vec<f64> = raw.iter().map(|t| t.delay_s * 1e6).collect();
    let weights: Vec<f64> = raw.iter().map(|t| if total > 0.0 { t.gain.norm_sqr() / total } else { 1.0 }).collect();
    (0..cfg.restarts.max(1))
        .map(|r| weighted_kmeans_1d(&points, &weights, cfg.k, derive_seed(cfg.seed, &[r as u64]), cfg.max_iter))
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("at least one restart")
}

/// Reduces a raw profile to at most `k` taps within `max_spread_s`.
///
/// Each k-means cluster collapses to one tap at the power-weighted mean
/// delay, with magnitude `sqrt(sum |g|^2)` and the phase of its strongest
/// member, so total power is conserved. If the clustered taps still span
/// more than `max_spread_s`, the weaker end cluster is folded into its
/// neighbour until the spread fits.
pub fn approx_taps(raw: &[Tap], cfg: &ApproxConfig) -> Result<TapSet, ScenarioError> {
    if raw.is_empty() {
        return Err(ScenarioError::EmptyInput);
    }
    if cfg.k == 0 {
        return Err(ScenarioError::InvalidParams("k must be at least 1".into()));
    }
    if raw.iter().any(|t| !(t.delay_s >= 0.0 && t.delay_s.is_finite()) || !t.gain.is_finite()) {
        return Err(ScenarioError::InvalidParams("raw taps must have finite, non-negative delays".into()));
    }
    if !(total_power(raw) > 0.0) {
        return Err(ScenarioError::InvalidParams("raw taps carry no power".into()));
    }
    let fit = cluster_taps(raw, cfg);
    let mut clusters: Vec<Cluster> = (0..fit.centroids.len())
        .filter_map(|c| {
            let members: Vec<&Tap> = raw.iter().zip(&fit.assignment).filter(|(_, &a)| a == c).map(|(t, _)| t).collect();
            let first = members.first()?;
            let start = Cluster {
                delay_s: first.delay_s,
                power: first.gain.norm_sqr(),
                lead_amp: first.gain.norm(),
                lead_phase: first.gain.arg(),
                single: Some(**first),
            };
            Some(members[1..].iter().fold(start, |acc, t| {
                acc.merge(Cluster {
                    delay_s: t.delay_s,
                    power: t.gain.norm_sqr(),
                    lead_amp: t.gain.norm(),
                    lead_phase: t.gain.arg(),
                    single: None,
                })
            }))
        })
        .filter(|c| c.power > 0.0)
        .collect();
    clusters.sort_by(|a, b| a.delay_s.total_cmp(&b.delay_s));

    while clusters.len() > 1 && clusters[clusters.len() - 1].delay_s - clusters[0].delay_s > cfg.max_spread_s {
        let last = clusters.len() - 1;
        if clusters[0].power < clusters[last].power {
            let head = clusters.remove(0);
            let merged = head.merge(clusters[0].clone());
            clusters[0] = merged;
        } else {
            let tail = clusters.pop().expect("non-empty");
            let merged = clusters[last - 1].clone().merge(tail);
            clusters[last - 1] = merged;
        }
    }
    TapSet::new(clusters.iter().map(Cluster::to_tap).collect(), (String::new(), String::new()), 0.0)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkKey {
    pub a: String,
    pub b: String,
    pub step: usize,
}

/// Seed shared by all timesteps of the link `a`-`b`.
pub fn link_seed(seed: u64, a: &str, b: &str) -> u64 {
    derive_seed(seed, &[hash_str(a), hash_str(b)])
}

/// Constrained taps for every unordered node pair at every sampling instant.
pub fn build_scenario_taps(spec: &ScenarioSpec, seed: u64) -> Result<BTreeMap<LinkKey, TapSet>, ScenarioError> {
    spec.validate()?;
    let steps = spec.num_timesteps();
    let links = spec.links();
    let jobs: Vec<(usize, usize, usize)> =
        (0..steps).flat_map(|s| links.iter().map(move |&(i, j)| (i, j, s))).collect();
    let cfg = ApproxConfig::default();
    jobs.par_iter()
        .map(|&(i, j, step)| {
            let t = step as f64 * spec.sampling_time_s;
            let a = spec.nodes[i].at(spec.position_of(&spec.nodes[i], t));
            let b = spec.nodes[j].at(spec.position_of(&spec.nodes[j], t));
            let raw = synth_tap_profile(&a, &b, spec.carrier_hz, &spec.profile, link_seed(seed, &a.id, &b.id))?;
            let mut set = approx_taps(&raw, &cfg)?;
            set.link = (a.id.clone(), b.id.clone());
            set.t_s = t;
            Ok((LinkKey { a: a.id, b: b.id, step }, set))
        })
        .collect()
}

/// Looks a link up in either orientation.
pub fn find_link<'m>(taps: &'m BTreeMap<LinkKey, TapSet>, a: &str, b: &str, step: usize) -> Option<&'m TapSet> {
    taps.get(&LinkKey { a: a.into(), b: b.into(), step })
        .or_else(|| taps.get(&LinkKey { a: b.into(), b: a.into(), step }))
}

/// Reads `delay_s,gain_re,gain_im` rows (header required).
pub fn read_taps_csv(path: &Path) -> Result<Vec<Tap>, ScenarioError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut taps = Vec::new();
    for rec in r.deserialize() {
        let (delay_s, re, im): (f64, f64, f64) = rec?;
        taps.push(Tap { delay_s, gain: Complex64::new(re, im) });
    }
    Ok(taps)
}

pub fn write_taps_csv(path: &Path, taps: &[Tap]) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["delay_s", "gain_re", "gain_im"])?;
    for t in taps {
        w.write_record([format!("{:e}", t.delay_s), format!("{:e}", t.gain.re), format!("{:e}", t.gain.im)])?;
    }
    w.flush()?;
    Ok(())
}
