use std::collections::BTreeMap;
use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::warn;
use serde::de::DeserializeOwned;
use serde::Serialize;

use sptw_core::channel::{correlate_template, emulate_link, LinkConfig};
use sptw_core::controlplane::{baseline_classifier, run_experiment, EventKind, ExperimentConfig, RadarSchedule};
use sptw_core::dataset::{
    gen_dataset, read_records, records_path, split_dataset, DatasetManifest, DatasetRecord, Fractions, SweepConfig,
    MANIFEST_FILE,
};
use sptw_core::detector::{
    bench_latency, ArchSpec, CnnClassifier, ModelWeights, Network, VoteState, WindowClassifier,
};
use sptw_core::iqcore::{
    load_iq_file, load_with_manifest, manifest_path, psd_bin_freqs, psd_estimate, save_with_manifest, segment_windows,
    Domain, IqBuffer, WINDOW_LEN,
};
use sptw_core::scenario::{
    approx_taps, build_scenario_taps, path_loss_matrix, read_taps_csv, write_heatmap_csv, write_taps_csv,
    ApproxConfig, ScenarioSpec, TapSet,
};
use sptw_core::waveforms::{gen_cellular, gen_radar, CellularParams, RadarParams};

use crate::{Cli, Command, Common, DomainArg, SourceArg, UsageError};

pub fn run(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    match &cli.command {
        Command::SynthRadar => synth_radar(c),
        Command::SynthCellular { symbols } => synth_cellular(c, *symbols),
        Command::MakeScenario { heatmap_t } => make_scenario(c, *heatmap_t),
        Command::ApproxTaps { input } => approx(c, input),
        Command::GenDataset { records_per_cell, split } => dataset(c, *records_per_cell, *split),
        Command::Emulate { input, taps, noise_power, rx_gain_db, rate, template, correlation_out } => emulate(
            c,
            input,
            taps.as_deref(),
            LinkConfig { epoch_s: f64::MAX, noise_power: *noise_power, rx_gain_db: *rx_gain_db, seed: c.seed.unwrap_or(0) },
            *rate,
            template.as_deref(),
            correlation_out.as_deref(),
        ),
        Command::Detect { weights, baseline: _, input, dataset, batch, domain, threshold, rate } => match (input, dataset) {
            (Some(input), _) => detect_iq(c, weights.as_deref(), input, *batch, (*domain).into(), *threshold, *rate),
            (None, Some(manifest)) => detect_dataset(c, weights.as_deref(), manifest, *threshold),
            (None, None) => Err(UsageError("detect needs --input or --dataset".into()).into()),
        },
        Command::RunExperiment { weights, domain, threshold, radar_on, radar_off } => {
            experiment(c, weights.as_deref(), (*domain).into(), *threshold, radar_on.zip(*radar_off))
        }
        Command::BenchLatency { weights, batches, trials } => bench(c, weights.as_deref(), batches, *trials),
        Command::ExportPsd { input, source, nfft, rate } => export_psd(c, input.as_deref(), *source, *nfft, *rate),
    }
}

impl From<DomainArg> for Domain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Time => Domain::Time,
            DomainArg::Frequency => Domain::Frequency,
        }
    }
}

fn load_config<T: DeserializeOwned + Default>(c: &Common) -> Result<T> {
    match &c.config {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn out_path(c: &Common, default: &str) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn ensure_parent(p: &Path) -> Result<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads an `.iq` file with its sidecar rate, or with `--rate` when there
/// is no sidecar.
fn load_iq(path: &Path, rate: Option<f64>) -> Result<IqBuffer> {
    let buf = match rate {
        Some(r) => load_iq_file(path, r)?,
        None if manifest_path(path).exists() => load_with_manifest(path)?,
        None => {
            return Err(UsageError(format!("{} has no sidecar manifest; pass --rate", path.display())).into());
        }
    };
    Ok(buf)
}

/// Radar parameters from `--config`, with `--seed` selecting the pulse code.
fn radar_params(c: &Common) -> Result<RadarParams> {
    let mut p: RadarParams = load_config(c)?;
    if let Some(s) = c.seed {
        p.seed = s;
    }
    Ok(p)
}

fn synth_radar(c: &Common) -> Result<()> {
    let p = radar_params(c)?;
    let buf = gen_radar(&p)?;
    let out = out_path(c, "radar.iq");
    ensure_parent(&out)?;
    save_with_manifest(&buf, &out, "radar pulse train")?;
    println!("{}: {} samples at {} S/s ({:.3} ms)", out.display(), buf.len(), buf.sample_rate_hz(), buf.duration_s() * 1e3);
    Ok(())
}

fn synth_cellular(c: &Common, symbols: usize) -> Result<()> {
    let p: CellularParams = load_config(c)?;
    let buf = gen_cellular(&p, symbols, c.seed.unwrap_or(0))?;
    let out = out_path(c, "cellular.iq");
    ensure_parent(&out)?;
    save_with_manifest(&buf, &out, "OFDM cellular proxy")?;
    println!("{}: {} samples at {} S/s, {symbols} symbols", out.display(), buf.len(), buf.sample_rate_hz());
    Ok(())
}

#[derive(Serialize)]
struct LinkRow<'a> {
    a: &'a str,
    b: &'a str,
    step: usize,
    t_s: f64,
    num_taps: usize,
    min_delay_s: f64,
    delay_spread_s: f64,
    power_gain_db: f64,
    file: String,
}

fn make_scenario(c: &Common, heatmap_t: f64) -> Result<()> {
    let spec = match &c.config {
        Some(p) => ScenarioSpec::load(p).with_context(|| format!("loading scenario {}", p.display()))?,
        None => ScenarioSpec::waikiki(),
    };
    let dir = out_path(c, "scenario");
    let taps_dir = dir.join("taps");
    fs::create_dir_all(&taps_dir)?;
    spec.save(&dir.join("scenario.json"))?;
    let heat = path_loss_matrix(&spec, heatmap_t)?;
    write_heatmap_csv(&spec, &heat, &dir.join("heatmap.csv"))?;
    let taps = build_scenario_taps(&spec, c.seed.unwrap_or(0))?;
    let mut rows = Vec::with_capacity(taps.len());
    for (key, set) in &taps {
        let file = format!("{}__{}__{:03}.csv", key.a, key.b, key.step);
        write_taps_csv(&taps_dir.join(&file), &set.taps)?;
        rows.push(LinkRow {
            a: &key.a,
            b: &key.b,
            step: key.step,
            t_s: set.t_s,
            num_taps: set.taps.len(),
            min_delay_s: set.min_delay(),
            delay_spread_s: set.delay_spread(),
            power_gain_db: set.power_gain_db(),
            file: format!("taps/{file}"),
        });
    }
    write_csv(&dir.join("links.csv"), &rows)?;
    println!(
        "{}: {} nodes, {} timesteps, {} link taps",
        dir.display(),
        spec.nodes.len(),
        spec.num_timesteps(),
        taps.len()
    );
    Ok(())
}

fn approx(c: &Common, input: &Path) -> Result<()> {
    let raw = read_taps_csv(input).with_context(|| format!("reading {}", input.display()))?;
    let cfg = ApproxConfig { seed: c.seed.unwrap_or(ApproxConfig::default().seed), ..Default::default() };
    let set = approx_taps(&raw, &cfg)?;
    let out = out_path(c, "taps.csv");
    ensure_parent(&out)?;
    write_taps_csv(&out, &set.taps)?;
    println!(
        "{}: {} raw taps -> {} taps, spread {:.3} us, gain {:.2} dB",
        out.display(),
        raw.len(),
        set.taps.len(),
        set.delay_spread() * 1e6,
        set.power_gain_db()
    );
    Ok(())
}

fn dataset(c: &Common, per_cell: Option<usize>, split: bool) -> Result<()> {
    let mut cfg: SweepConfig = load_config(c)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(n) = per_cell {
        cfg.records_per_cell = n;
    }
    let dir = out_path(c, "dataset");
    let mut manifest = gen_dataset(&cfg, &dir)?;
    if split {
        manifest = split_dataset(&manifest, &Fractions::default(), cfg.seed)?;
        manifest.save(&dir.join(MANIFEST_FILE))?;
    }
    println!("{}: {} records", dir.display(), manifest.record_count);
    for (combo, n) in &manifest.counts_per_combo {
        println!("  {:<10} {n}", combo.name());
    }
    for (label, n) in &manifest.counts_per_label {
        println!("  label {label}    {n}");
    }
    if let Some(s) = &manifest.splits {
        println!("  split      train {} / val {} / test {}", s.train.len(), s.val.len(), s.test.len());
    }
    Ok(())
}

#[derive(Serialize)]
struct CorrRow {
    lag: usize,
    correlation: f64,
}

fn emulate(
    c: &Common,
    input: &Path,
    taps: Option<&Path>,
    link: LinkConfig,
    rate: Option<f64>,
    template: Option<&Path>,
    corr_out: Option<&Path>,
) -> Result<()> {
    let tx = load_iq(input, rate)?;
    let set = match taps {
        Some(p) => {
            let raw = read_taps_csv(p).with_context(|| format!("reading {}", p.display()))?;
            TapSet::new(raw, ("tx".into(), "rx".into()), 0.0)
                .with_context(|| format!("{} (reduce raw profiles with approx-taps first)", p.display()))?
        }
        None => TapSet::identity(),
    };
    let rx = emulate_link(&tx, std::slice::from_ref(&set), &link)?;
    let out = out_path(c, "rx.iq");
    ensure_parent(&out)?;
    save_with_manifest(&rx, &out, "emulated link output")?;
    println!("{}: {} samples through {} taps", out.display(), rx.len(), set.taps.len());
    if let Some(t) = template {
        let tpl = load_iq(t, rate)?;
        let corr = correlate_template(&rx, &tpl)?;
        let (lag, peak) = corr.iter().enumerate().fold((0, 0.0), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        println!("peak correlation {peak:.4} at lag {lag}");
        if let Some(p) = corr_out {
            let rows: Vec<CorrRow> = corr.iter().enumerate().map(|(lag, &correlation)| CorrRow { lag, correlation }).collect();
            write_csv(p, &rows)?;
        }
    }
    Ok(())
}

fn load_network(path: &Path) -> Result<Network> {
    let (_, net) = ModelWeights::load(path).with_context(|| format!("loading weights {}", path.display()))?;
    Ok(net)
}

#[derive(Serialize)]
struct WindowRow {
    window_index: usize,
    probability: f64,
    vote_fraction: Option<f64>,
    radar_present: Option<bool>,
}

fn detect_iq(
    c: &Common,
    weights: Option<&Path>,
    input: &Path,
    batch: usize,
    domain: Domain,
    threshold: f64,
    rate: Option<f64>,
) -> Result<()> {
    let buf = load_iq(input, rate)?;
    let mut clf: Box<dyn WindowClassifier> = match weights {
        Some(w) => Box::new(CnnClassifier { net: load_network(w)?, domain }),
        None => Box::new(baseline_classifier(&radar_params(c)?, threshold)?),
    };
    let mut vote = VoteState::new(batch, 0.0).map_err(|e| UsageError(e.to_string()))?;
    let windows = segment_windows(&buf, NonZeroUsize::new(WINDOW_LEN).expect("nonzero"));
    let whole = windows.len() / batch * batch;
    if whole < windows.len() {
        warn!("dropping {} trailing windows that do not fill a batch", windows.len() - whole);
    }
    let mut rows = Vec::with_capacity(whole);
    let mut last = None;
    for (bi, chunk) in windows[..whole].chunks(batch).enumerate() {
        let probs = clf.classify(chunk)?;
        let verdict = vote.push(&probs)?;
        for (i, &p) in probs.iter().enumerate() {
            let at_end = i + 1 == probs.len();
            rows.push(WindowRow {
                window_index: bi * batch + i,
                probability: p,
                vote_fraction: verdict.filter(|_| at_end).map(|v| v.vote_fraction),
                radar_present: verdict.filter(|_| at_end).map(|v| v.radar_present),
            });
        }
        last = verdict.or(last);
    }
    let out = out_path(c, "detections.csv");
    write_csv(&out, &rows)?;
    match last {
        Some(v) => println!(
            "{} windows; final verdict radar_present={} (vote {:.2}); per-window output in {}",
            rows.len(),
            v.radar_present,
            v.vote_fraction,
            out.display()
        ),
        None => println!("{} windows, fewer than the vote ring holds; no verdict", rows.len()),
    }
    Ok(())
}

#[derive(Serialize)]
struct AccuracyRow {
    axis: &'static str,
    value: f64,
    records: usize,
    accuracy: f64,
}

#[derive(Default)]
struct Tally {
    n: usize,
    correct: usize,
}

impl Tally {
    fn add(&mut self, ok: bool) {
        self.n += 1;
        self.correct += usize::from(ok);
    }
}

fn detect_dataset(c: &Common, weights: Option<&Path>, manifest_file: &Path, threshold: f64) -> Result<()> {
    let manifest = DatasetManifest::load(manifest_file).with_context(|| format!("loading {}", manifest_file.display()))?;
    let records: Vec<DatasetRecord> =
        read_records(&records_path(manifest_file, &manifest))?.collect::<Result<_, _>>()?;
    let chosen: Vec<usize> = match &manifest.splits {
        Some(s) => s.test.clone(),
        None => (0..records.len()).collect(),
    };
    let probs: Vec<f64> = match weights {
        Some(w) => {
            let net = load_network(w)?;
            let mut out = Vec::with_capacity(chosen.len());
            for chunk in chosen.chunks(64) {
                let feats: Vec<Vec<[f32; 2]>> = chunk.iter().map(|&i| records[i].features.clone()).collect();
                out.extend(net.forward(&feats)?);
            }
            out
        }
        None => {
            if manifest.domain != Domain::Time {
                bail!("the matched-filter baseline needs a time-domain dataset");
            }
            let radar = radar_params(c)?;
            let template = sptw_core::waveforms::radar_pulse_template(&radar)?;
            chosen
                .iter()
                .map(|&i| {
                    let s = records[i].features.iter().map(|[a, b]| sptw_core::Complex32::new(*a, *b)).collect();
                    let rx = IqBuffer::new(s, radar.sample_rate_hz)?;
                    let peak = correlate_template(&rx, &template)?.into_iter().fold(0.0, f64::max);
                    Ok(if peak >= threshold { 1.0 } else { 0.0 })
                })
                .collect::<Result<_>>()?
        }
    };
    let key = |v: f32| (f64::from(v) * 1000.0).round() as i64;
    let (mut snr, mut sinr): (BTreeMap<i64, Tally>, BTreeMap<i64, Tally>) = Default::default();
    let (mut all, mut tp, mut fp, mut fneg) = (Tally::default(), 0usize, 0usize, 0usize);
    for (&i, &p) in chosen.iter().zip(&probs) {
        let r = &records[i];
        let pred = p >= 0.5;
        let truth = r.label == 1;
        all.add(pred == truth);
        tp += usize::from(pred && truth);
        fp += usize::from(pred && !truth);
        fneg += usize::from(!pred && truth);
        if let Some(s) = r.meta.snr_db {
            snr.entry(key(s)).or_default().add(pred == truth);
        }
        if let Some(s) = r.meta.sinr_db {
            sinr.entry(key(s)).or_default().add(pred == truth);
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let mut rows = vec![
        AccuracyRow { axis: "overall", value: 0.0, records: all.n, accuracy: ratio(all.correct, all.n) },
        AccuracyRow { axis: "precision", value: 0.0, records: tp + fp, accuracy: ratio(tp, tp + fp) },
        AccuracyRow { axis: "recall", value: 0.0, records: tp + fneg, accuracy: ratio(tp, tp + fneg) },
    ];
    for (axis, map) in [("snr_db", &snr), ("sinr_db", &sinr)] {
        rows.extend(map.iter().map(|(k, t)| AccuracyRow {
            axis,
            value: *k as f64 / 1000.0,
            records: t.n,
            accuracy: ratio(t.correct, t.n),
        }));
    }
    let out = out_path(c, "accuracy.csv");
    write_csv(&out, &rows)?;
    println!(
        "{} records: accuracy {:.4}, precision {:.4}, recall {:.4}; curves in {}",
        all.n,
        rows[0].accuracy,
        rows[1].accuracy,
        rows[2].accuracy,
        out.display()
    );
    Ok(())
}

fn experiment(
    c: &Common,
    weights: Option<&Path>,
    domain: Domain,
    threshold: f64,
    schedule: Option<(f64, f64)>,
) -> Result<()> {
    let mut cfg: ExperimentConfig = load_config(c)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some((on_s, off_s)) = schedule {
        cfg.schedule = Some(RadarSchedule { on_s, off_s });
    }
    let mut clf: Box<dyn WindowClassifier> = match weights {
        Some(w) => Box::new(CnnClassifier { net: load_network(w)?, domain }),
        None => Box::new(baseline_classifier(&cfg.radar, threshold)?),
    };
    let res = run_experiment(&cfg, Some(clf.as_mut()))?;
    let dir = out_path(c, "experiment");
    fs::create_dir_all(&dir)?;
    res.write_events_jsonl(&dir.join("events.jsonl"))?;
    res.write_kpi_csv(&dir.join("kpi.csv"))?;
    res.write_occupancy_csv(&dir.join("occupancy.csv"))?;
    println!("{}: {} events, {} KPI rows", dir.display(), res.events.len(), res.kpi.len());
    for e in res.events.iter().filter(|e| e.event != EventKind::VerdictChange) {
        println!("  {:>9.4} s  {:?}", e.t_s, e.event);
    }
    if let Some(d) = res.detection_delay_s() {
        println!("  detection delay {:.1} ms", d * 1e3);
    }
    Ok(())
}

fn bench(c: &Common, weights: Option<&Path>, batches: &[usize], trials: usize) -> Result<()> {
    if trials < 10 {
        return Err(UsageError("--trials must be at least 10".into()).into());
    }
    if batches.is_empty() || batches.contains(&0) {
        return Err(UsageError("--batches must list positive sizes".into()).into());
    }
    let net = match weights {
        Some(w) => load_network(w)?,
        None => Network::compile(&ModelWeights::random(&ArchSpec::default(), c.seed.unwrap_or(0)))?,
    };
    let rep = bench_latency(&net, batches, trials, c.seed.unwrap_or(0))?;
    let out = out_path(c, "latency.csv");
    write_csv(&out, &rep.rows)?;
    for r in &rep.rows {
        println!("batch {:>4}: {:>10.3} ms +- {:.3} ms", r.batch_size, r.mean_s * 1e3, r.std_s * 1e3);
    }
    println!("monotone {}, linear fit R^2 {:.4}; written to {}", rep.monotone, rep.r_squared, out.display());
    Ok(())
}

#[derive(Serialize)]
struct PsdRow {
    freq_hz: f64,
    psd_db: f64,
}

fn export_psd(c: &Common, input: Option<&Path>, source: Option<SourceArg>, nfft: usize, rate: Option<f64>) -> Result<()> {
    let buf = match (input, source) {
        (Some(p), _) => load_iq(p, rate)?,
        (None, Some(SourceArg::Radar)) => gen_radar(&radar_params(c)?)?,
        (None, Some(SourceArg::Cellular)) => {
            let p: CellularParams = load_config(c)?;
            gen_cellular(&p, 200, c.seed.unwrap_or(0))?
        }
        (None, None) => return Err(UsageError("export-psd needs --input or --source".into()).into()),
    };
    let n = NonZeroUsize::new(nfft).ok_or_else(|| UsageError("--nfft must be positive".into()))?;
    let psd = psd_estimate(&buf, n)?;
    let rows: Vec<PsdRow> =
        psd_bin_freqs(nfft, buf.sample_rate_hz()).into_iter().zip(psd).map(|(freq_hz, psd_db)| PsdRow { freq_hz, psd_db }).collect();
    let out = out_path(c, "psd.csv");
    write_csv(&out, &rows)?;
    println!("{}: {} bins over {} S/s", out.display(), rows.len(), buf.sample_rate_hz());
    Ok(())
}
