use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use dgforecast_core::baselines::run_two_phase;
use dgforecast_core::eval::{evaluate_model, EvalMetadata, Evaluation};
use dgforecast_core::model::Checkpoint;
use dgforecast_core::pipeline::{
    apply_mcar, format_timestamp, ingest_csv, synth, write_csv, ColumnSpec, TimeSeries,
};
use dgforecast_core::train::{fit, TrainReport};

use crate::config::{Method, RunConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.json";
pub const LEVELS_FILE: &str = "levels.csv";
pub const FORECASTS_FILE: &str = "forecasts.csv";

/// Reads the configured CSV and drops `missing_rate` of its observed points.
pub fn load_series(cfg: &RunConfig) -> Result<TimeSeries> {
    let path = cfg
        .data
        .as_deref()
        .context("no data file given (use --data or set \"data\" in the config)")?;
    let series = ingest_csv(path, &ColumnSpec::default())?;
    Ok(apply_mcar(&series, cfg.missing_rate, cfg.seed)?)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
    /// KNN could not find enough complete windows and used linear fill.
    pub imputer_fallback: bool,
}

pub fn train_series(series: &TimeSeries, cfg: &RunConfig) -> Result<TrainOutcome> {
    let (out, fallback) = match cfg.method {
        Method::EndToEnd => (fit(series, &cfg.train, &cfg.split)?, false),
        Method::Li | Method::Knn => {
            let tp = run_two_phase(series, &cfg.imputer(), &cfg.train, &cfg.split)?;
            (tp.fit, tp.fallback)
        }
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params: out.params,
            quantiles: cfg.train.quantiles.clone(),
            normalization: out.scaler,
        },
        report: out.report,
        imputer_fallback: fallback,
    })
}

/// Scores a checkpoint on the test split of `series` (same split and
/// normalization as training).
pub fn evaluate_checkpoint(ckpt: &Checkpoint, series: &TimeSeries, cfg: &RunConfig) -> Result<Evaluation> {
    let normalized = ckpt.normalization.apply_series(series);
    let [_, _, test] = cfg.split.apply(&normalized)?;
    let metadata = EvalMetadata {
        missing_rate: Some(cfg.missing_rate),
        seed: Some(cfg.seed),
        model_id: Some(ckpt.content_hash()?),
        quantiles: ckpt.quantiles.clone(),
    };
    Ok(evaluate_model(&ckpt.params, &test, &ckpt.quantiles, metadata)?)
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn cmd_train(cfg: &RunConfig, out_dir: &Path) -> Result<TrainOutcome> {
    let cfg = cfg.clone().resolve()?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let series = load_series(&cfg)?;
    let outcome = train_series(&series, &cfg)?;
    if outcome.imputer_fallback {
        eprintln!("warning: too few complete windows for KNN; used linear interpolation");
    }
    write_file(out_dir, CHECKPOINT_FILE, &outcome.checkpoint.to_json()?)?;
    let mut report = serde_json::to_string_pretty(&outcome.report)?;
    report.push('\n');
    write_file(out_dir, TRAIN_REPORT_FILE, &report)?;
    write_file(out_dir, CONFIG_FILE, &cfg.to_json()?)?;
    Ok(outcome)
}

/// Long-format forecasts in data units: target timestamp, observation,
/// mask bit, then one column per quantile level.
pub fn write_forecasts_csv<W: Write>(
    w: W,
    ev: &Evaluation,
    ckpt: &Checkpoint,
    test_start: i64,
    resolution: i64,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["timestamp".to_string(), "observation".into(), "mask".into()];
    header.extend(ckpt.quantiles.iter().map(|a| format!("q{a:.2}")));
    out.write_record(&header)?;
    let scaler = ckpt.normalization;
    for (fan, target) in ev.fans.iter().zip(&ev.targets) {
        let t = fan.origin + fan.lead;
        let mut row = vec![
            format_timestamp(test_start + resolution * t as i64),
            target.map(|x| scaler.inverse(x).to_string()).unwrap_or_default(),
            if target.is_some() { "1" } else { "0" }.to_string(),
        ];
        row.extend(fan.values.iter().map(|v| scaler.inverse(*v).to_string()));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_evaluate(checkpoint: &Path, cfg: &RunConfig, out_dir: &Path) -> Result<Evaluation> {
    let cfg = cfg.clone().resolve()?;
    let ckpt = Checkpoint::load(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let series = load_series(&cfg)?;
    let ev = evaluate_checkpoint(&ckpt, &series, &cfg)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_file(out_dir, REPORT_FILE, &ev.report.to_json()?)?;
    ev.report
        .write_levels_csv(fs::File::create(out_dir.join(LEVELS_FILE))?)?;
    let test_start = series.timestamp(cfg.split.ranges(series.len())?[2].start);
    write_forecasts_csv(
        fs::File::create(out_dir.join(FORECASTS_FILE))?,
        &ev,
        &ckpt,
        test_start,
        series.resolution,
    )?;
    Ok(ev)
}

/// Writes a synthetic series plus a `.params.json` sidecar holding the
/// generator settings.
pub fn cmd_simulate(spec: &synth::SynthSpec, out: &Path) -> Result<TimeSeries> {
    let series = synth::generate(spec)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_csv(file, &series, &ColumnSpec::default())?;
    let mut params = serde_json::to_string_pretty(spec)?;
    params.push('\n');
    fs::write(out.with_extension("params.json"), params)?;
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dgforecast_core::train::TrainConfig;

    fn tiny(dir: &Path, method: Method, rate: f64) -> RunConfig {
        let data = dir.join("data.csv");
        if !data.exists() {
            let spec = synth::SynthSpec { length: 400, seed: 3, ..Default::default() };
            cmd_simulate(&spec, &data).unwrap();
        }
        RunConfig {
            data: Some(data),
            method,
            missing_rate: rate,
            seed: 5,
            train: TrainConfig {
                quantiles: dgforecast_core::train::default_levels(),
                layers: 1,
                hidden: 3,
                seq_len: 4,
                batch_size: 8,
                max_epochs: 2,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn simulate_is_byte_stable_and_bounded() {
        let dir = tempfile::tempdir().unwrap();
        let spec = synth::SynthSpec { length: 300, seed: 1, ..Default::default() };
        cmd_simulate(&spec, &dir.path().join("a.csv")).unwrap();
        cmd_simulate(&spec, &dir.path().join("b.csv")).unwrap();
        let a = fs::read(dir.path().join("a.csv")).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b.csv")).unwrap());
        assert!(dir.path().join("a.params.json").exists());
        let s = ingest_csv(&dir.path().join("a.csv"), &ColumnSpec::default()).unwrap();
        assert!(s.observed().all(|(_, v)| (0.0..=52.5).contains(&v)));
    }

    #[test]
    fn empty_simulation_keeps_header() {
        let dir = tempfile::tempdir().unwrap();
        let spec = synth::SynthSpec { length: 0, ..Default::default() };
        cmd_simulate(&spec, &dir.path().join("e.csv")).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("e.csv")).unwrap(), "timestamp,power\n");
    }

    #[test]
    fn train_then_evaluate_writes_everything() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path(), Method::EndToEnd, 0.2);
        let out = dir.path().join("run");
        cmd_train(&cfg, &out).unwrap();
        for f in [CHECKPOINT_FILE, TRAIN_REPORT_FILE, CONFIG_FILE] {
            assert!(out.join(f).exists(), "{f}");
        }
        let ev = cmd_evaluate(&out.join(CHECKPOINT_FILE), &cfg, &out).unwrap();
        let text = fs::read_to_string(out.join(FORECASTS_FILE)).unwrap();
        let mut rows = csv::Reader::from_reader(text.as_bytes());
        let mut count = 0;
        for r in rows.records() {
            let r = r.unwrap();
            let q: Vec<f64> = r.iter().skip(3).map(|v| v.parse().unwrap()).collect();
            assert_eq!(q.len(), 19);
            assert!(q.windows(2).all(|w| w[0] <= w[1]));
            count += 1;
        }
        assert_eq!(count, ev.fans.len());
        let ck = Checkpoint::load(&out.join(CHECKPOINT_FILE)).unwrap();
        assert_eq!(ev.report.metadata.model_id, Some(ck.content_hash().unwrap()));
    }

    #[test]
    fn missing_data_path_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { data: None, ..Default::default() };
        assert!(cmd_train(&cfg, dir.path()).is_err());
    }
}
