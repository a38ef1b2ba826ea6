//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dgforecast_cli::{
    cmd_evaluate, cmd_simulate, cmd_train, evaluate_checkpoint, train_series, Method, RunConfig,
    CHECKPOINT_FILE, CONFIG_FILE, FORECASTS_FILE, LEVELS_FILE, REPORT_FILE, TRAIN_REPORT_FILE,
};
use dgforecast_core::eval::{evaluate_model, reliability, sharpness, skill, EvalMetadata};
use dgforecast_core::model::{Architecture, ForecasterParams, QuantileFan, QuantileModel};
use dgforecast_core::pipeline::{apply_mcar, make_instances, synth, TimeSeries};
use dgforecast_core::train::{
    default_levels, pinball, rollout_sequence, run_schedule, sequence_loss_and_grad, InputSource,
    StopReason, TrainConfig,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random_series(rng: &mut ChaCha8Rng, n: usize, missing: f64) -> TimeSeries {
    let v: Vec<Option<f64>> = (0..n)
        .map(|_| {
            let x: f64 = rng.gen();
            (rng.gen::<f64>() >= missing).then_some(x)
        })
        .collect();
    TimeSeries::from_options(&v).unwrap()
}

fn gradient_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let levels = [0.1, 0.5, 0.9];
    let configs = 24;
    let mut worst: f64 = 0.0;
    let mut imputed_steps = 0;
    for c in 0..configs {
        let arch = Architecture {
            layers: rng.gen_range(1..=2),
            hidden: rng.gen_range(1..=4),
            lag: rng.gen_range(1..=3),
        };
        let steps = rng.gen_range(2..=5);
        let params = ForecasterParams::init(arch, &mut rng).unwrap();
        let series = random_series(&mut rng, arch.lag + steps, 0.4);
        let inst = make_instances(&series, arch.lag, steps, steps)
            .map_err(|e| format!("config {c}: {e}"))?
            .remove(0);
        imputed_steps += inst.mask[arch.lag..].iter().filter(|m| !**m).count();
        let (_, grads) = sequence_loss_and_grad(&params, &inst, &levels, true).unwrap();
        let analytic = grads.to_flat();
        let flat = params.to_flat();
        let mut probe = params.clone();
        let eps = 1e-5;
        for k in 0..flat.len() {
            let mut f = flat.clone();
            f[k] += eps;
            probe.set_flat(&f).unwrap();
            let up = rollout_sequence(&probe, &inst, &levels).unwrap().loss;
            f[k] -= 2.0 * eps;
            probe.set_flat(&f).unwrap();
            let down = rollout_sequence(&probe, &inst, &levels).unwrap().loss;
            let numeric = (up - down) / (2.0 * eps);
            let rel = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    check(imputed_steps > 0, "no imputed steps exercised")?;
    check(worst <= 1e-4, format!("max relative error {worst:.3e}"))?;
    Ok(format!("{configs} configs, {imputed_steps} imputed targets, max rel err {worst:.2e}"))
}

fn brute_reliability(fans: &[Vec<f64>], obs: &[f64], levels: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, a) in levels.iter().enumerate() {
        let mut below = 0usize;
        for (f, x) in fans.iter().zip(obs) {
            if f[i] - x >= 0.0 {
                below += 1;
            }
        }
        total += (a - below as f64 / obs.len() as f64).abs();
    }
    100.0 * total / levels.len() as f64
}

fn brute_sharpness(fans: &[Vec<f64>]) -> f64 {
    // level i and level 18 - i form a central interval for i = 0..9
    let mut total = 0.0;
    for i in 0..9 {
        for f in fans {
            total += f[18 - i] - f[i];
        }
    }
    total / (9.0 * fans.len() as f64)
}

fn brute_skill(fans: &[Vec<f64>], obs: &[f64], levels: &[f64]) -> f64 {
    let mut total = 0.0;
    for (f, x) in fans.iter().zip(obs) {
        for (i, a) in levels.iter().enumerate() {
            let h = if f[i] - x >= 0.0 { 1.0 } else { 0.0 };
            total += (h - a) * (x - f[i]);
        }
    }
    total / obs.len() as f64
}

fn metric_oracles() -> Outcome {
    let levels = default_levels();
    let mut rng = ChaCha8Rng::seed_from_u64(2002);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=40);
        let raw: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut v: Vec<f64> = (0..19).map(|_| rng.gen_range(-1.0..2.0)).collect();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        let obs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let fans: Vec<QuantileFan> = raw
            .iter()
            .map(|v| QuantileFan::new(0, levels.clone(), v.clone()).unwrap())
            .collect();
        let r = reliability(&fans, &obs).unwrap().1;
        let s = sharpness(&fans).unwrap().1;
        let sk = skill(&fans, &obs).unwrap();
        let pin = -raw.iter().zip(&obs).map(|(f, x)| pinball(*x, f, &levels)).sum::<f64>() / n as f64;
        worst = worst
            .max((r - brute_reliability(&raw, &obs, &levels)).abs())
            .max((s - brute_sharpness(&raw)).abs())
            .max((sk - brute_skill(&raw, &obs, &levels)).abs())
            .max((sk - pin).abs());
    }
    check(worst <= 1e-12, format!("max abs difference {worst:.3e}"))?;
    Ok(format!("1000 sets, max abs difference {worst:.1e}"))
}

struct TrueUniform;

impl QuantileModel for TrueUniform {
    fn lag(&self) -> usize {
        3
    }

    fn predict(&self, _windows: ArrayView2<'_, f64>, alphas: ArrayView1<'_, f64>) -> dgforecast_core::Result<Array1<f64>> {
        Ok(alphas.to_owned())
    }
}

fn calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3003);
    let obs: Vec<f64> = (0..10_003).map(|_| rng.gen()).collect();
    let series = TimeSeries::from_observed(obs).unwrap();
    let ev = evaluate_model(&TrueUniform, &series, &default_levels(), EvalMetadata::default()).unwrap();
    let r = ev.report.reliability;
    let s = ev.report.sharpness;
    check(ev.report.n == 10_000, format!("N = {}", ev.report.n))?;
    check(r <= 1.5, format!("R = {r:.3}%"))?;
    check((s - 0.5).abs() <= 0.01, format!("S = {s}"))?;
    Ok(format!("N 10000, R {r:.3}%, S {s:.4}"))
}

fn small_train() -> TrainConfig {
    TrainConfig {
        layers: 2,
        hidden: 4,
        seq_len: 8,
        batch_size: 8,
        max_epochs: 3,
        ..Default::default()
    }
}

fn zero_missing() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    cmd_simulate(&synth::SynthSpec { length: 1500, seed: 4, ..Default::default() }, &data).unwrap();
    let mut checkpoints = Vec::new();
    let mut reports = Vec::new();
    for method in [Method::EndToEnd, Method::Li, Method::Knn] {
        let cfg = RunConfig {
            data: Some(data.clone()),
            method,
            missing_rate: 0.0,
            seed: 17,
            train: small_train(),
            ..Default::default()
        };
        let out = dir.path().join(method.name());
        cmd_train(&cfg, &out).map_err(|e| e.to_string())?;
        cmd_evaluate(&out.join(CHECKPOINT_FILE), &cfg, &out).map_err(|e| e.to_string())?;
        checkpoints.push(std::fs::read(out.join(CHECKPOINT_FILE)).unwrap());
        reports.push(std::fs::read(out.join(REPORT_FILE)).unwrap());
    }
    check(checkpoints.windows(2).all(|w| w[0] == w[1]), "checkpoints differ")?;
    check(reports.windows(2).all(|w| w[0] == w[1]), "evaluation reports differ")?;
    Ok("endtoend, li and knn give byte-identical checkpoints and reports".into())
}

fn desk_config(method: Method, seed: u64) -> RunConfig {
    RunConfig {
        method,
        missing_rate: 0.25,
        seed,
        train: TrainConfig {
            layers: 2,
            hidden: 32,
            max_epochs: 50,
            seq_len: 16,
            batch_size: 16,
            learning_rate: 3e-3,
            max_train_instances: Some(256),
            max_val_instances: Some(32),
            ..Default::default()
        },
        ..Default::default()
    }
}

fn table_ordering() -> Outcome {
    let seeds = [0u64, 1, 2];
    let methods = [Method::EndToEnd, Method::Li, Method::Knn];
    let mut r = [0.0f64; 3];
    let mut sk = [0.0f64; 3];
    let mut lines = Vec::new();
    for &seed in &seeds {
        let clean = synth::generate(&synth::SynthSpec { seed, ..Default::default() }).unwrap();
        let series = apply_mcar(&clean, 0.25, seed).unwrap();
        for (m, &method) in methods.iter().enumerate() {
            let t = Instant::now();
            let cfg = desk_config(method, seed).resolve().unwrap();
            let out = train_series(&series, &cfg).map_err(|e| e.to_string())?;
            let ev = evaluate_checkpoint(&out.checkpoint, &series, &cfg).map_err(|e| e.to_string())?;
            eprintln!(
                "  seed {seed} {:<8} R {:.3}%  S {:.4}  Sk {:.5}  ({} epochs, {:.0}s)",
                method.name(),
                ev.report.reliability,
                ev.report.sharpness,
                ev.report.skill,
                out.report.stop_epoch,
                t.elapsed().as_secs_f64()
            );
            r[m] += ev.report.reliability / seeds.len() as f64;
            sk[m] += ev.report.skill / seeds.len() as f64;
        }
    }
    for (m, method) in methods.iter().enumerate() {
        lines.push(format!("{} R {:.3}% Sk {:.4}", method.name(), r[m], sk[m]));
    }
    let summary = lines.join("; ");
    check(sk[0] > sk[1] && sk[0] > sk[2], format!("skill ordering violated: {summary}"))?;
    check(r[0] < r[1] && r[0] < r[2], format!("reliability ordering violated: {summary}"))?;
    Ok(format!("means over {} seeds: {summary}", seeds.len()))
}

fn imputation_audit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6006);
    let clean = synth::generate(&synth::SynthSpec { length: 20_000, seed: 6, ..Default::default() }).unwrap();
    let series = apply_mcar(&clean, 0.25, 6).unwrap().map_observed(|v| v / 52.5);
    let arch = Architecture { layers: 2, hidden: 4, lag: 3 };
    let params = ForecasterParams::init(arch, &mut rng).unwrap();
    let levels = default_levels();
    let mid = levels.iter().position(|a| (a - 0.5).abs() < 1e-9).unwrap();
    let instances = make_instances(&series, 3, 16, 16).unwrap();
    let instances = &instances[..1000];
    let (mut observed, mut imputed) = (0usize, 0usize);
    for inst in instances {
        let roll = rollout_sequence(&params, inst, &levels).unwrap();
        for j in 0..inst.steps {
            let pos = inst.lag + j;
            match roll.sources[j] {
                InputSource::Observed => {
                    check(inst.mask[pos], "observed source at a missing target")?;
                    check(roll.next_values[j].to_bits() == inst.values[pos].to_bits(), "observed value altered")?;
                    observed += 1;
                }
                InputSource::Imputed => {
                    check(!inst.mask[pos], "imputed source at an observed target")?;
                    check(roll.next_values[j].to_bits() == roll.fans[j][mid].to_bits(), "imputed value is not the median")?;
                    imputed += 1;
                }
            }
            // the value is what the following windows actually received
            for k in j + 1..inst.steps.min(j + 1 + inst.lag) {
                let slot = inst.lag - (k - j);
                check(roll.windows[k][slot].to_bits() == roll.next_values[j].to_bits(), "window disagrees with trail")?;
            }
        }
    }
    let total = observed + imputed;
    Ok(format!("1000 instances, {total} inputs: {observed} observed, {imputed} imputed, 0 other"))
}

fn early_stop() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7007);
    let patience = 20;
    for case in 0..200 {
        let max_epochs = rng.gen_range(1..=150);
        let p_hold: f64 = rng.gen_range(0.5..1.0);
        let script: Vec<bool> = (0..max_epochs).map(|_| rng.gen::<f64>() < p_hold).collect();
        // expected stop from a direct scan
        let mut streak = 0;
        let mut expected = (max_epochs, StopReason::MaxEpochs);
        for (i, hold) in script.iter().enumerate() {
            streak = if *hold { streak + 1 } else { 0 };
            if streak == patience {
                expected = (i + 1, StopReason::EarlyStop);
                break;
            }
        }
        let report = run_schedule(max_epochs, patience, |e| {
            Ok(if script[e - 1] { (0.1, 0.2) } else { (0.3, 0.2) })
        })
        .unwrap();
        check(
            (report.stop_epoch, report.stop_reason) == expected,
            format!("case {case}: stopped at {} expected {:?}", report.stop_epoch, expected),
        )?;
    }
    let exact = run_schedule(100, patience, |_| Ok((0.1, 0.2))).unwrap();
    check(exact.stop_epoch == 20, format!("constant script stopped at {}", exact.stop_epoch))?;
    Ok("200 scripted schedules stop exactly where the 20-epoch rule first holds".into())
}

fn mcar_statistics() -> Outcome {
    let clean = TimeSeries::from_observed(vec![1.0; 10_000]).unwrap();
    let mut outliers = Vec::new();
    for seed in 0..100u64 {
        let dropped = apply_mcar(&clean, 0.25, seed).unwrap().missing_count();
        if !(2356..=2645).contains(&dropped) {
            outliers.push((seed, dropped));
        }
    }
    check(outliers.len() <= 1, format!("outliers {outliers:?}"))?;
    Ok(format!("100 seeds, {} outside [2356, 2645]", outliers.len()))
}

fn run_cli(args: &[&str], out_dir: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_dgforecast"))
        .args(args)
        .env("DGFORECAST_OUT", out_dir)
        .status()
        .map_err(|e| e.to_string())?;
    check(status.success(), format!("dgforecast {args:?} exited with {status}"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data.csv");
    let cfg = RunConfig {
        train: small_train(),
        ..Default::default()
    };
    std::fs::write(d.join("base.json"), cfg.to_json().unwrap()).unwrap();
    let data_s = data.to_str().unwrap();
    run_cli(&["simulate", "--out", data_s, "--length", "1500", "--seed", "9"], d)?;

    let first = d.join("first");
    let base = d.join("base.json");
    let base_s = base.to_str().unwrap();
    let common = ["--config", base_s, "--data", data_s, "--method", "endtoend", "--missing-rate", "0.2", "--seed", "5"];
    run_cli(&[&["train"][..], &common[..]].concat(), &first)?;
    let ck = first.join(CHECKPOINT_FILE);
    run_cli(&[&["evaluate", "--checkpoint", ck.to_str().unwrap()][..], &common[..]].concat(), &first)?;

    // second run driven by the snapshot alone
    let second = d.join("second");
    let snap = first.join(CONFIG_FILE);
    let snap_s = snap.to_str().unwrap();
    run_cli(&["train", "--config", snap_s], &second)?;
    let ck2 = second.join(CHECKPOINT_FILE);
    run_cli(&["evaluate", "--checkpoint", ck2.to_str().unwrap(), "--config", snap_s], &second)?;

    let files = [CHECKPOINT_FILE, TRAIN_REPORT_FILE, CONFIG_FILE, REPORT_FILE, LEVELS_FILE, FORECASTS_FILE];
    for f in files {
        let a = std::fs::read(first.join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(second.join(f)).map_err(|e| format!("{f}: {e}"))?;
        check(a == b, format!("{f} differs between runs"))?;
    }
    Ok(format!("{} output files byte-identical on rerun from the snapshot", files.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient suite", gradient_suite),
        ("metric oracles", metric_oracles),
        ("calibration sanity", calibration),
        ("zero-missing degeneracy", zero_missing),
        ("desk-scale method ordering", table_ordering),
        ("imputation audit", imputation_audit),
        ("early-stop rule", early_stop),
        ("MCAR statistics", mcar_statistics),
        ("determinism", determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {detail} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
