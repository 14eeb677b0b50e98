//! Labeled window corpus: generation, record files, manifest and splits.
//!
//! Every record is one 1024-sample capture of a signal combination
//! (nothing, cellular only, radar only, both) with its radar and cellular
//! parts sent through separately drawn scenario links before mixing, so the
//! requested SNR/SINR hold for what the receiver actually sees.
//!
//! Record file layout (little endian):
//!
//! ```text
//! header  "SPTW" | u32 version | u32 record_size
//! record  f32 features[1024][2] | u8 label | u8 combo
//!         | u8 has_snr f32 snr_db | u8 has_sinr f32 sinr_db | u8 has_inr f32 inr_db
//!         | u64 seed | u32 crc32(all preceding record bytes)
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use log::{info, warn};
use num_complex::Complex32;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{fir_apply, ChannelError};
use crate::iqcore::{normalize_time, segment_windows, to_frequency, Domain, IqBuffer, IqError, Window1024, WINDOW_LEN};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scenario::{build_scenario_taps, LinkKey, NodeRole, ScenarioError, ScenarioSpec, TapSet};
use crate::waveforms::{
    gen_cellular, gen_noise, gen_radar, mix_components, radar_pulse_starts, CellularParams, RadarParams, WaveformError,
};

pub const RECORD_MAGIC: &[u8; 4] = b"SPTW";
pub const FORMAT_VERSION: u32 = 1;
pub const FEATURE_LEN: usize = WINDOW_LEN * 2;
pub const RECORD_SIZE: usize = FEATURE_LEN * 4 + 2 + 3 * 5 + 8 + 4;
pub const RECORDS_FILE: &str = "records.sptw";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Samples captured ahead of the window so that delayed taps see real
/// input rather than the FIR zero prefix.
const LEAD_IN: usize = 128;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("not a record file: {0}")]
    BadHeader(String),
    #[error("corrupt record {index}: {reason}")]
    CorruptRecord { index: usize, reason: String },
    #[error("cell {cell} has {records} records, too few for every split")]
    CellTooSmall { cell: usize, records: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Iq(#[from] IqError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Combo {
    Empty,
    CellOnly,
    RadarOnly,
    Both,
}

impl Combo {
    pub const ALL: [Combo; 4] = [Combo::Empty, Combo::CellOnly, Combo::RadarOnly, Combo::Both];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(c: u8) -> Option<Combo> {
        Combo::ALL.get(usize::from(c)).copied()
    }

    pub fn has_radar(self) -> bool {
        matches!(self, Combo::RadarOnly | Combo::Both)
    }

    pub fn name(self) -> &'static str {
        match self {
            Combo::Empty => "Empty",
            Combo::CellOnly => "CellOnly",
            Combo::RadarOnly => "RadarOnly",
            Combo::Both => "Both",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub combo: Combo,
    pub snr_db: Option<f32>,
    pub sinr_db: Option<f32>,
    /// Cellular-to-noise ratio of cellular-only records.
    pub inr_db: Option<f32>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    /// `[position][Re, Im]`, row major.
    pub features: Vec<[f32; 2]>,
    pub label: u8,
    pub meta: RecordMeta,
}

impl DatasetRecord {
    pub fn from_window(w: &Window1024, meta: RecordMeta) -> Self {
        Self {
            features: w.values().iter().map(|c| [c.re, c.im]).collect(),
            label: u8::from(meta.combo.has_radar()),
            meta,
        }
    }

    pub fn mean_power(&self) -> f64 {
        self.features.iter().map(|[a, b]| f64::from(*a).powi(2) + f64::from(*b).powi(2)).sum::<f64>()
            / self.features.len().max(1) as f64
    }

    /// Label matches the combo, features are finite and at unit power.
    pub fn validate(&self) -> Result<(), String> {
        if self.features.len() != WINDOW_LEN {
            return Err(format!("{} feature rows", self.features.len()));
        }
        if self.label != u8::from(self.meta.combo.has_radar()) {
            return Err(format!("label {} inconsistent with {:?}", self.label, self.meta.combo));
        }
        if self.features.iter().flatten().any(|v| !v.is_finite()) {
            return Err("non-finite feature".into());
        }
        let p = self.mean_power();
        if (p - 1.0).abs() > 1e-4 {
            return Err(format!("feature power {p}"));
        }
        Ok(())
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        let start = out.len();
        for [re, im] in &self.features {
            out.extend_from_slice(&re.to_le_bytes());
            out.extend_from_slice(&im.to_le_bytes());
        }
        out.push(self.label);
        out.push(self.meta.combo.code());
        for v in [self.meta.snr_db, self.meta.sinr_db, self.meta.inr_db] {
            out.push(u8::from(v.is_some()));
            out.extend_from_slice(&v.unwrap_or(0.0).to_le_bytes());
        }
        out.extend_from_slice(&self.meta.seed.to_le_bytes());
        let crc = crc32fast::hash(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
    }

    pub fn decode(bytes: &[u8], index: usize) -> Result<Self, DatasetError> {
        let corrupt = |reason: String| DatasetError::CorruptRecord { index, reason };
        if bytes.len() != RECORD_SIZE {
            return Err(corrupt(format!("{} bytes", bytes.len())));
        }
        let body = &bytes[..RECORD_SIZE - 4];
        let crc = u32::from_le_bytes(bytes[RECORD_SIZE - 4..].try_into().unwrap());
        if crc32fast::hash(body) != crc {
            return Err(corrupt("checksum mismatch".into()));
        }
        let f32_at = |o: usize| f32::from_le_bytes(body[o..o + 4].try_into().unwrap());
        let features = (0..WINDOW_LEN).map(|i| [f32_at(8 * i), f32_at(8 * i + 4)]).collect();
        let mut o = FEATURE_LEN * 4;
        let label = body[o];
        let combo = Combo::from_code(body[o + 1]).ok_or_else(|| corrupt(format!("combo code {}", body[o + 1])))?;
        o += 2;
        let mut opt = [None; 3];
        for slot in &mut opt {
            *slot = match body[o] {
                0 => None,
                1 => Some(f32_at(o + 1)),
                b => return Err(corrupt(format!("flag byte {b}"))),
            };
            o += 5;
        }
        let seed = u64::from_le_bytes(body[o..o + 8].try_into().unwrap());
        let rec = DatasetRecord {
            features,
            label,
            meta: RecordMeta { combo, snr_db: opt[0], sinr_db: opt[1], inr_db: opt[2], seed },
        };
        rec.validate().map_err(corrupt)?;
        Ok(rec)
    }
}

fn header_bytes() -> Vec<u8> {
    let mut h = RECORD_MAGIC.to_vec();
    h.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    h.extend_from_slice(&(RECORD_SIZE as u32).to_le_bytes());
    h
}

pub fn write_records(path: &Path, records: &[DatasetRecord]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&header_bytes())?;
    let mut buf = Vec::with_capacity(RECORD_SIZE);
    for r in records {
        buf.clear();
        r.encode(&mut buf);
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

/// Streaming reader; yields records in file order and stops after the first
/// error.
pub struct RecordReader<R> {
    inner: R,
    index: usize,
    done: bool,
}

impl<R: Read> RecordReader<R> {
    pub fn new(mut inner: R) -> Result<Self, DatasetError> {
        let mut h = [0u8; 12];
        inner.read_exact(&mut h).map_err(|_| DatasetError::BadHeader("file shorter than header".into()))?;
        if &h[..4] != RECORD_MAGIC {
            return Err(DatasetError::BadHeader("bad magic".into()));
        }
        let version = u32::from_le_bytes(h[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(DatasetError::FormatVersionMismatch { found: version, expected: FORMAT_VERSION });
        }
        let size = u32::from_le_bytes(h[8..12].try_into().unwrap()) as usize;
        if size != RECORD_SIZE {
            return Err(DatasetError::BadHeader(format!("record size {size}, expected {RECORD_SIZE}")));
        }
        Ok(Self { inner, index: 0, done: false })
    }
}

impl<R: Read> Iterator for RecordReader<R> {
    type Item = Result<DatasetRecord, DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut buf = vec![0u8; RECORD_SIZE];
        let mut filled = 0;
        while filled < RECORD_SIZE {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => break,
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            }
        }
        if filled == 0 {
            self.done = true;
            return None;
        }
        let index = self.index;
        self.index += 1;
        if filled < RECORD_SIZE {
            self.done = true;
            return Some(Err(DatasetError::CorruptRecord { index, reason: format!("truncated after {filled} bytes") }));
        }
        let rec = DatasetRecord::decode(&buf, index);
        self.done = rec.is_err();
        Some(rec)
    }
}

pub fn read_records(path: &Path) -> Result<RecordReader<BufReader<File>>, DatasetError> {
    RecordReader::new(BufReader::new(File::open(path)?))
}

/// Sweep configuration; JSON files mirror these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub snr_grid_db: Vec<f64>,
    pub sinr_grid_db: Vec<f64>,
    pub records_per_cell: usize,
    pub seed: u64,
    pub domain: Domain,
    pub radar: RadarParams,
    pub cellular: CellularParams,
    pub scenario: ScenarioSpec,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_grid_db: (-4..=4).map(|i| f64::from(i) * 5.0).collect(),
            sinr_grid_db: (-6..=2).map(|i| f64::from(i) * 5.0).collect(),
            records_per_cell: 50,
            seed: 0,
            domain: Domain::Frequency,
            radar: RadarParams::default(),
            cellular: CellularParams::default(),
            scenario: ScenarioSpec::waikiki(),
        }
    }
}

impl SweepConfig {
    /// SINR values usable with `snr_db` (strictly below it).
    pub fn feasible_sinr(&self, snr_db: f64) -> Vec<f64> {
        self.sinr_grid_db.iter().copied().filter(|&s| s < snr_db).collect()
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: String| Err(DatasetError::InvalidParams(m));
        if self.snr_grid_db.is_empty() || self.sinr_grid_db.is_empty() {
            return bad("grids must be nonempty".into());
        }
        if self.records_per_cell == 0 {
            return bad("records_per_cell must be at least 1".into());
        }
        if self.snr_grid_db.iter().chain(&self.sinr_grid_db).any(|v| !v.is_finite()) {
            return bad("grid values must be finite".into());
        }
        if let Some(s) = self.snr_grid_db.iter().find(|&&s| self.feasible_sinr(s).is_empty()) {
            return bad(format!("no SINR grid value below SNR {s} dB"));
        }
        self.radar.validate()?;
        self.cellular.validate()?;
        if self.cellular.sample_rate_hz != self.radar.sample_rate_hz {
            return bad("radar and cellular sample rates differ".into());
        }
        let has = |r: NodeRole| self.scenario.nodes.iter().any(|n| n.role == r);
        if !(has(NodeRole::Bs) && has(NodeRole::Ue) && has(NodeRole::Ship)) {
            return bad("scenario needs a BS, a UE and a ship".into());
        }
        Ok(())
    }

    pub fn params_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A block of consecutive records sharing a combo and SNR grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInfo {
    pub combo: Combo,
    pub grid_snr_db: f64,
    pub start: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for Fractions {
    fn default() -> Self {
        Self { train: 0.7, val: 0.15, test: 0.15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub fractions: Fractions,
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub records_file: String,
    pub record_count: usize,
    pub counts_per_combo: BTreeMap<Combo, usize>,
    pub counts_per_label: BTreeMap<u8, usize>,
    pub params_hash: String,
    pub domain: Domain,
    pub cells: Vec<CellInfo>,
    pub splits: Option<Splits>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Scenario links feeding the generator: ship-to-BS for radar, UE-to-BS for
/// cellular, over every timestep.
struct LinkPools {
    radar: Vec<TapSet>,
    cellular: Vec<TapSet>,
}

impl LinkPools {
    fn build(spec: &ScenarioSpec, seed: u64) -> Result<Self, DatasetError> {
        let taps = build_scenario_taps(spec, seed)?;
        let role = |id: &str| spec.node(id).map(|n| n.role);
        let pick = |want: NodeRole| -> Vec<TapSet> {
            taps.iter()
                .filter(|(LinkKey { a, b, .. }, _)| {
                    let (ra, rb) = (role(a), role(b));
                    (ra == Some(NodeRole::Bs) && rb == Some(want)) || (rb == Some(NodeRole::Bs) && ra == Some(want))
                })
                .map(|(_, t)| t.clone())
                .collect()
        };
        Ok(Self { radar: pick(NodeRole::Ship), cellular: pick(NodeRole::Ue) })
    }
}

struct Job {
    combo: Combo,
    snr_db: f64,
    sinr_db: f64,
    seed: u64,
}

fn plan_jobs(cfg: &SweepConfig) -> (Vec<Job>, Vec<CellInfo>) {
    let mut jobs = Vec::new();
    let mut cells = Vec::new();
    for combo in Combo::ALL {
        for (si, &snr) in cfg.snr_grid_db.iter().enumerate() {
            let sinrs = cfg.feasible_sinr(snr);
            cells.push(CellInfo { combo, grid_snr_db: snr, start: jobs.len(), count: cfg.records_per_cell });
            for k in 0..cfg.records_per_cell {
                jobs.push(Job {
                    combo,
                    snr_db: snr,
                    sinr_db: sinrs[k % sinrs.len()],
                    seed: derive_seed(cfg.seed, &[u64::from(combo.code()), si as u64, k as u64]),
                });
            }
        }
    }
    (jobs, cells)
}

/// Interference-to-noise ratio of the cellular part of a record mixed at
/// `snr_db`/`sinr_db`.
pub fn implied_inr_db(snr_db: f64, sinr_db: f64) -> f64 {
    10.0 * (10f64.powf(snr_db / 10.0) / 10f64.powf(sinr_db / 10.0) - 1.0).log10()
}

fn capture_len() -> usize {
    WINDOW_LEN + LEAD_IN
}

fn radar_capture(cfg: &SweepConfig, full: &IqBuffer, starts: &[usize], rng: &mut impl Rng) -> IqBuffer {
    // place one whole pulse inside the window part of the capture
    let span = cfg.radar.pulse_span_samples();
    let n = capture_len();
    let slack = WINDOW_LEN.saturating_sub(span);
    let usable: Vec<usize> = starts.iter().copied().filter(|&s| s + span >= n && s + span + slack <= full.len()).collect();
    let start = usable[rng.random_range(0..usable.len())];
    full.slice(start + span - n + rng.random_range(0..=slack), n)
}

fn window_of(buf: &IqBuffer) -> IqBuffer {
    buf.slice(LEAD_IN, WINDOW_LEN)
}

fn gen_record(
    cfg: &SweepConfig,
    pools: &LinkPools,
    radar: &IqBuffer,
    starts: &[usize],
    job: &Job,
) -> Result<Option<DatasetRecord>, DatasetError> {
    let mut rng = rng_from_seed(job.seed);
    let fs = cfg.radar.sample_rate_hz;
    let noise_seed = derive_seed(job.seed, &[1]);
    let radar_rx = |rng: &mut crate::rng::TwinRng| -> Result<IqBuffer, DatasetError> {
        let taps = &pools.radar[rng.random_range(0..pools.radar.len())];
        Ok(window_of(&fir_apply(&radar_capture(cfg, radar, starts, rng), taps)?))
    };
    let cell_rx = |rng: &mut crate::rng::TwinRng| -> Result<IqBuffer, DatasetError> {
        let taps = &pools.cellular[rng.random_range(0..pools.cellular.len())];
        let symbols = capture_len().div_ceil(cfg.cellular.symbol_len());
        let cell = gen_cellular(&cfg.cellular, symbols, derive_seed(job.seed, &[2]))?;
        Ok(window_of(&fir_apply(&cell.slice(0, capture_len()), taps)?))
    };
    let snr = job.snr_db as f32;
    let (mixed, meta) = match job.combo {
        Combo::Empty => (
            gen_noise(WINDOW_LEN, 1.0, noise_seed, fs)?,
            RecordMeta { combo: job.combo, snr_db: None, sinr_db: None, inr_db: None, seed: job.seed },
        ),
        Combo::RadarOnly => (
            mix_components(&radar_rx(&mut rng)?, None, job.snr_db, None, noise_seed)?.sum(),
            RecordMeta { combo: job.combo, snr_db: Some(snr), sinr_db: None, inr_db: None, seed: job.seed },
        ),
        Combo::Both => {
            let r = radar_rx(&mut rng)?;
            let c = cell_rx(&mut rng)?;
            (
                mix_components(&r, Some(&c), job.snr_db, Some(job.sinr_db), noise_seed)?.sum(),
                RecordMeta {
                    combo: job.combo,
                    snr_db: Some(snr),
                    sinr_db: Some(job.sinr_db as f32),
                    inr_db: None,
                    seed: job.seed,
                },
            )
        }
        Combo::CellOnly => {
            let inr = implied_inr_db(job.snr_db, job.sinr_db);
            (
                mix_components(&cell_rx(&mut rng)?, None, inr, None, noise_seed)?.sum(),
                RecordMeta { combo: job.combo, snr_db: None, sinr_db: None, inr_db: Some(inr as f32), seed: job.seed },
            )
        }
    };
    let window = segment_windows(&mixed, NonZeroUsize::new(WINDOW_LEN).unwrap()).remove(0);
    let feat = match cfg.domain {
        Domain::Frequency => to_frequency(&window),
        Domain::Time => normalize_time(&window),
    };
    match feat {
        Ok(w) => Ok(Some(DatasetRecord::from_window(&w, meta))),
        Err(IqError::ZeroWindow) => {
            warn!("record with seed {} has an all-zero window; discarded", job.seed);
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

/// Generates every record of the sweep in cell order. Cells are blocks of
/// `records_per_cell` records per (combo, SNR grid point); records carry
/// their own seeds so generation order does not matter.
pub fn generate_records(cfg: &SweepConfig) -> Result<(Vec<DatasetRecord>, Vec<CellInfo>), DatasetError> {
    cfg.validate()?;
    let pools = LinkPools::build(&cfg.scenario, cfg.seed)?;
    let radar = gen_radar(&cfg.radar)?;
    let starts = radar_pulse_starts(&cfg.radar);
    let (jobs, mut cells) = plan_jobs(cfg);
    let produced: Vec<Option<DatasetRecord>> =
        jobs.par_iter().map(|job| gen_record(cfg, &pools, &radar, &starts, job)).collect::<Result<_, _>>()?;

    let mut records = Vec::with_capacity(produced.len());
    for cell in &mut cells {
        let kept: Vec<DatasetRecord> = produced[cell.start..cell.start + cell.count].iter().flatten().cloned().collect();
        cell.start = records.len();
        cell.count = kept.len();
        records.extend(kept);
    }
    Ok((records, cells))
}

pub fn manifest_for(cfg: &SweepConfig, records: &[DatasetRecord], cells: Vec<CellInfo>) -> DatasetManifest {
    let mut counts_per_combo = BTreeMap::new();
    let mut counts_per_label = BTreeMap::new();
    for r in records {
        *counts_per_combo.entry(r.meta.combo).or_insert(0) += 1;
        *counts_per_label.entry(r.label).or_insert(0) += 1;
    }
    DatasetManifest {
        format_version: FORMAT_VERSION,
        records_file: RECORDS_FILE.into(),
        record_count: records.len(),
        counts_per_combo,
        counts_per_label,
        params_hash: cfg.params_hash(),
        domain: cfg.domain,
        cells,
        splits: None,
    }
}

/// Writes `records.sptw` and `manifest.json` (unsplit) into `out_dir`.
pub fn gen_dataset(cfg: &SweepConfig, out_dir: &Path) -> Result<DatasetManifest, DatasetError> {
    let (records, cells) = generate_records(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    write_records(&out_dir.join(RECORDS_FILE), &records)?;
    let manifest = manifest_for(cfg, &records, cells);
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    info!("wrote {} records to {}", records.len(), out_dir.display());
    Ok(manifest)
}

pub fn records_path(manifest_path: &Path, manifest: &DatasetManifest) -> PathBuf {
    manifest_path.parent().unwrap_or(Path::new(".")).join(&manifest.records_file)
}

/// Largest-remainder apportionment of `n` items over `fractions`.
pub fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| n as f64 * f).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| (e + 1e-9).floor() as usize).collect();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - counts[b] as f64).total_cmp(&(exact[a] - counts[a] as f64)).then(a.cmp(&b)));
    let mut left = n.saturating_sub(counts.iter().sum());
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Stratified split: each cell is shuffled with its own derived seed and
/// cut by largest-remainder counts, so every cell reaches every split.
pub fn split_dataset(manifest: &DatasetManifest, fractions: &Fractions, seed: u64) -> Result<DatasetManifest, DatasetError> {
    let f = [fractions.train, fractions.val, fractions.test];
    if f.iter().any(|v| !(*v > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DatasetError::InvalidParams("fractions must be positive and sum to 1".into()));
    }
    let mut parts: [Vec<usize>; 3] = Default::default();
    for (ci, cell) in manifest.cells.iter().enumerate() {
        let counts = apportion(cell.count, &f);
        if counts.contains(&0) {
            return Err(DatasetError::CellTooSmall { cell: ci, records: cell.count });
        }
        let mut idx: Vec<usize> = (cell.start..cell.start + cell.count).collect();
        let mut rng = rng_from_seed(derive_seed(seed, &[ci as u64]));
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        let mut rest = idx.as_slice();
        for (part, &c) in parts.iter_mut().zip(&counts) {
            let (head, tail) = rest.split_at(c);
            part.extend_from_slice(head);
            rest = tail;
        }
    }
    parts.iter_mut().for_each(|p| p.sort_unstable());
    let [train, val, test] = parts;
    Ok(DatasetManifest {
        splits: Some(Splits { fractions: fractions.clone(), seed, train, val, test }),
        ..manifest.clone()
    })
}

/// Features of a time-domain capture laid out as in records, for
/// inference on raw IQ.
pub fn window_features(w: &Window1024, domain: Domain) -> Result<Vec<[f32; 2]>, IqError> {
    let f = match domain {
        Domain::Frequency => to_frequency(w)?,
        Domain::Time => normalize_time(w)?,
    };
    Ok(f.values().iter().map(|c: &Complex32| [c.re, c.im]).collect())
}
