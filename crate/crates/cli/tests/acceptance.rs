//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any failed. Pass substrings of
//! criterion names as arguments to run a subset.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rwresnet::audio::{
    parse_protocol, parse_wav, serialize_wav, synth_dataset, write_protocol, Label, MemorySource, Waveform,
};
use rwresnet::frontend::{FrontendConfig, Preset, Variant};
use rwresnet::metrics::{compute_eer, compute_eer_records, compute_min_tdcf, read_scores, score_logits, write_scores};
use rwresnet::metrics::{ScoreRecord, TdcfCost};
use rwresnet::model::{ModelConfig, RwResnet};
use rwresnet::ops::Mode;
use rwresnet::tensor::Tensor;
use rwresnet::training::{
    decode_checkpoint, encode_checkpoint, init_params, load_checkpoint, save_checkpoint, score_trials, train,
    DataSplit, ScheduleConfig, TrainConfig,
};

type Criterion = fn() -> Result<String, String>;

const BIN: &str = env!("CARGO_BIN_EXE_rwresnet");

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, Criterion); 9] = [
        ("shape_conformance", shape_conformance),
        ("gradient_suite", gradient_suite),
        ("metric_oracles", metric_oracles),
        ("logit_difference_identity", logit_difference_identity),
        ("overfit_smoke", overfit_smoke),
        ("variant_ordering", variant_ordering),
        ("schedule_conformance", schedule_conformance),
        ("determinism", determinism),
        ("format_round_trips", format_round_trips),
    ];
    let mut run = 0;
    let mut failed = 0;
    for (name, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        run += 1;
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} of {run} criteria passed", run - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run_cli(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env("RUST_LOG", "warn");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("failed to launch the binary")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn last_stderr_line(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).lines().last().unwrap_or("").to_string()
}

fn ok_or_report(o: &Output, what: &str) -> Result<(), String> {
    ensure(o.status.success(), || format!("{what} exited with {:?}: {}", o.status.code(), last_stderr_line(o)))
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

// ---------------------------------------------------------------- shapes

fn shape_conformance() -> Result<String, String> {
    let start = Instant::now();
    let frames = 400;
    let presets = [(Preset::S, 64), (Preset::M, 128), (Preset::L, 256)];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let wave = Tensor::from_fn(&[1, 1, 128_000], |_| rng.random_range(-0.5f32..0.5));
    for (preset, c3) in presets {
        for cg in [1, 2, 4] {
            let f = c3 / cg;
            let mut model = RwResnet::<f32>::new(ModelConfig::new(FrontendConfig::new(preset, Variant::ResWavegram, cg)))
                .map_err(|e| e.to_string())?;
            init_params(&mut model, 0);
            let fm = model.frontend.forward(wave.clone(), Mode::Eval).map_err(|e| e.to_string())?;
            ensure(fm.data.shape() == [1, cg, frames, f], || {
                format!("{preset:?}/cg={cg}: frontend {:?}, expected {:?}", fm.data.shape(), [1, cg, frames, f])
            })?;
            let mut trace = Vec::new();
            let logits = model
                .backbone
                .forward_traced(fm.data, Mode::Eval, &mut trace)
                .map_err(|e| e.to_string())?;
            let expected: Vec<Vec<usize>> = vec![
                vec![1, 16, frames, f],
                vec![1, 16, frames, f],
                vec![1, 32, frames / 2, f / 2],
                vec![1, 64, frames / 4, f / 4],
                vec![1, 128, frames / 8, f / 8],
            ];
            ensure(trace == expected, || format!("{preset:?}/cg={cg}: stage chain {trace:?}, expected {expected:?}"))?;
            ensure(logits.values.shape() == [1, 2], || format!("logits {:?}", logits.values.shape()))?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}, budget 10 s"))?;
    Ok(format!("9 preset x cg combinations exact in {:.1}s", elapsed.as_secs_f64()))
}

// ------------------------------------------------------------- gradients

fn gradient_suite() -> Result<String, String> {
    let start = Instant::now();
    let out = run_cli(&["gradcheck", "--seeds", "20"], &[]);
    let elapsed = start.elapsed();
    ok_or_report(&out, "gradcheck")?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}, budget 60 s"))?;
    let text = stdout(&out);
    let mut worst = (String::new(), 0.0f64);
    let mut layers = Vec::new();
    for line in text.lines() {
        let name = line.split_whitespace().next().unwrap_or_default().to_string();
        let field = |key: &str| -> Option<f64> {
            line.split_whitespace()
                .find_map(|w| w.strip_prefix(key))
                .and_then(|v| v.parse().ok())
        };
        let err = field("max_rel_error=").ok_or_else(|| format!("unparsable line {line:?}"))?;
        let seeds = field("seeds=").ok_or_else(|| format!("unparsable line {line:?}"))?;
        let limit = if name.starts_with("batchnorm") { 1e-5 } else { 1e-6 };
        ensure(err < limit, || format!("{name}: max relative error {err:e} above {limit:e}"))?;
        ensure(seeds >= 20.0, || format!("{name}: only {seeds} seeds"))?;
        if err > worst.1 {
            worst = (name.clone(), err);
        }
        layers.push(name);
    }
    for kind in ["conv1d", "conv2d", "batchnorm", "maxpool1d", "relu", "adaptive_avg_pool", "linear", "cross_entropy"] {
        ensure(layers.iter().any(|l| l.starts_with(kind)), || format!("no {kind} case in the suite"))?;
    }
    let faulty = run_cli(&["gradcheck", "--seeds", "2"], &[("RWRESNET_GRADCHECK_FAULT", "conv2d")]);
    ensure(faulty.status.code() == Some(3), || format!("fault injection exited with {:?}", faulty.status.code()))?;
    ensure(last_stderr_line(&faulty).starts_with("ERROR 3 "), || {
        format!("fault injection stderr ended with {:?}", last_stderr_line(&faulty))
    })?;
    Ok(format!(
        "{} layer cases, worst {} at {:.2e}, {:.1}s; injected fault exits 3",
        layers.len(),
        worst.0,
        worst.1,
        elapsed.as_secs_f64()
    ))
}

// --------------------------------------------------------------- metrics

fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let ties = rng.random_bool(0.5);
    let (mut bona, mut spoof) = (Vec::new(), Vec::new());
    for i in 0..n {
        let is_bona = match i {
            0 => true,
            1 => false,
            _ => rng.random_bool(0.5),
        };
        let mut x = if ties {
            f64::from(rng.random_range(-12i32..12)) / 4.0
        } else {
            rng.random_range(-3.0..3.0)
        };
        if is_bona {
            x += rng.random_range(0.0..1.5);
            bona.push(x);
        } else {
            spoof.push(x);
        }
    }
    (bona, spoof)
}

/// Every distinct score plus `+inf`, ascending.
fn thresholds(bona: &[f64], spoof: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = bona.iter().chain(spoof).copied().collect();
    t.push(f64::INFINITY);
    t.sort_by(f64::total_cmp);
    t.dedup();
    t
}

/// Rates at `tau` by counting every score: a trial is accepted as bona
/// fide when its score is at least `tau`.
fn rates_at(bona: &[f64], spoof: &[f64], tau: f64) -> (f64, f64) {
    let miss = bona.iter().filter(|&&s| s < tau).count() as f64 / bona.len() as f64;
    let fa = spoof.iter().filter(|&&s| s >= tau).count() as f64 / spoof.len() as f64;
    (miss, fa)
}

/// Exhaustive sweep; linear interpolation across the sign change of
/// `miss - fa`.
fn eer_oracle(bona: &[f64], spoof: &[f64]) -> (f64, f64) {
    let t = thresholds(bona, spoof);
    let r: Vec<(f64, f64)> = t.iter().map(|&tau| rates_at(bona, spoof, tau)).collect();
    for k in 0..t.len() {
        let d = r[k].0 - r[k].1;
        if d == 0.0 {
            return (r[k].0, t[k]);
        }
        if d > 0.0 {
            let dp = r[k - 1].0 - r[k - 1].1;
            let a = dp / (dp - d);
            let eer = r[k - 1].0 + a * (r[k].0 - r[k - 1].0);
            let thr = if t[k].is_finite() { t[k - 1] + a * (t[k] - t[k - 1]) } else { t[k - 1] };
            return (eer, thr);
        }
    }
    unreachable!("miss reaches 1 at +inf")
}

fn tdcf_oracle(bona: &[f64], spoof: &[f64], c: &TdcfCost) -> f64 {
    let mut best = f64::INFINITY;
    for tau in thresholds(bona, spoof) {
        let (pmiss_cm, pfa_cm) = rates_at(bona, spoof, tau);
        // expected tandem cost minus the cost of the ASV alone
        let w_miss = c.p_target * c.c_miss_cm - c.p_target * c.c_miss_asv * c.p_miss_asv
            - c.p_nontarget * c.c_fa_asv * c.p_fa_asv;
        let w_fa = c.c_fa_cm * c.p_spoof * (1.0 - c.p_miss_spoof_asv);
        let v = (w_miss * pmiss_cm + w_fa * pfa_cm) / w_miss.min(w_fa);
        best = best.min(v);
    }
    best
}

fn monotone_map(i: usize, rng: &mut ChaCha8Rng) -> Box<dyn Fn(f64) -> f64> {
    let a = rng.random_range(0.2..3.0);
    let b = rng.random_range(-5.0..5.0);
    match i % 5 {
        0 => Box::new(move |x| a * x + b),
        1 => Box::new(move |x: f64| (x / a).exp()),
        2 => Box::new(move |x: f64| a * x.powi(3) + x + b),
        3 => Box::new(move |x: f64| (a * x).atan()),
        _ => Box::new(move |x: f64| b + a * x.sinh()),
    }
}

fn metric_oracles() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_eer = 0.0f64;
    for set in 0..50 {
        let (b, s) = random_scores(&mut rng, 1000);
        let got = compute_eer(&b, &s).map_err(|e| e.to_string())?;
        let (eer, thr) = eer_oracle(&b, &s);
        let err = (got.value - eer).abs().max((got.threshold - thr).abs());
        ensure(err <= 1e-12, || format!("EER set {set}: {got:?} vs oracle ({eer}, {thr})"))?;
        worst_eer = worst_eer.max(err);
    }
    let mut worst_tdcf = 0.0f64;
    for set in 0..50 {
        let (b, s) = random_scores(&mut rng, 200);
        let cost = TdcfCost::with_asv_rates(
            rng.random_range(0.0..0.1),
            rng.random_range(0.0..0.1),
            rng.random_range(0.0..0.9),
        );
        let got = compute_min_tdcf(&b, &s, &cost).map_err(|e| e.to_string())?.value;
        let want = tdcf_oracle(&b, &s, &cost);
        ensure((got - want).abs() <= 1e-12, || format!("t-DCF set {set}: {got} vs oracle {want}"))?;
        worst_tdcf = worst_tdcf.max((got - want).abs());
    }
    for i in 0..20 {
        let (b, s) = random_scores(&mut rng, 1000);
        let f = monotone_map(i, &mut rng);
        let (fb, fs): (Vec<f64>, Vec<f64>) = (b.iter().map(|&x| f(x)).collect(), s.iter().map(|&x| f(x)).collect());
        // the map must stay strictly increasing on these samples in floating point
        let mut pairs: Vec<(f64, f64)> = b.iter().chain(&s).copied().zip(fb.iter().chain(&fs).copied()).collect();
        pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
        let strict = pairs.windows(2).all(|w| (w[0].0 < w[1].0) == (w[0].1 < w[1].1) && w[0].1 <= w[1].1);
        ensure(strict, || format!("map {i} is not order-preserving in floating point"))?;
        let before = compute_eer(&b, &s).map_err(|e| e.to_string())?.value;
        let after = compute_eer(&fb, &fs).map_err(|e| e.to_string())?.value;
        ensure(before == after, || format!("map {i}: EER {before} became {after}"))?;
    }
    Ok(format!(
        "EER max deviation {worst_eer:.1e}, min t-DCF max deviation {worst_tdcf:.1e}, 20 monotone maps exact"
    ))
}

// ---------------------------------------------------------- score identity

fn logit_difference_identity() -> Result<String, String> {
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let logits = Tensor::from_fn(&[n, 2], |_| rng.random_range(-10.0f64..10.0));
    let scores = score_logits(&logits);
    let mut worst = 0.0f64;
    for (row, &score) in logits.data().chunks_exact(2).zip(&scores) {
        let (spoof, bona) = (row[0], row[1]);
        let z = spoof.exp() + bona.exp();
        let literal = (bona.exp() / z).ln() - (spoof.exp() / z).ln();
        worst = worst.max((score - literal).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("{n} pairs, max deviation {worst:.1e}"))
}

// ------------------------------------------------------------- training

fn read_history(path: &Path) -> Result<Vec<(f64, f64)>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .skip(1)
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            let loss = cols.get(1).and_then(|v| v.parse().ok());
            let acc = cols.get(2).and_then(|v| v.parse().ok());
            loss.zip(acc).ok_or_else(|| format!("bad history row {l:?}"))
        })
        .collect()
}

fn overfit_smoke() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ck = dir.path().join("ck");
    let start = Instant::now();
    let out = run_cli(
        &[
            "train", "--synth", "32", "--input-len", "8000", "--epochs", "30", "--preset", "S", "--cg", "1",
            "--variant", "reswavegram", "--checkpoint-dir", path_str(&ck),
        ],
        &[],
    );
    let elapsed = start.elapsed();
    ok_or_report(&out, "train")?;
    let history = read_history(&ck.join("history.csv"))?;
    ensure(history.len() == 30, || format!("{} epochs recorded", history.len()))?;
    ensure(history.iter().all(|h| h.0.is_finite()), || "non-finite epoch loss".into())?;
    let reached = history.iter().position(|h| h.1 >= 0.95);
    let reached = reached.ok_or_else(|| {
        let best = history.iter().map(|h| h.1).fold(0.0, f64::max);
        format!("best train accuracy {best:.3} < 0.95")
    })?;
    let initial: f64 = stdout(&out)
        .lines()
        .find_map(|l| l.strip_prefix("initial_loss="))
        .and_then(|v| v.parse().ok())
        .ok_or("no initial_loss in train output")?;
    let ln2 = std::f64::consts::LN_2;
    for (what, loss) in [("initial", initial), ("epoch-0 mean", history[0].0)] {
        ensure((loss - ln2).abs() <= 0.15, || format!("{what} loss {loss:.4} outside ln2 +- 0.15"))?;
    }
    ensure(elapsed < Duration::from_secs(20 * 60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "accuracy >= 0.95 at epoch {reached}, final {:.3}; initial loss {initial:.3}, epoch-0 loss {:.3}; {:.0}s",
        history.last().map_or(0.0, |h| h.1),
        history[0].0,
        elapsed.as_secs_f64()
    ))
}

/// Synthetic EER of one variant: train on one seeded synthetic set and
/// score a disjointly seeded one.
fn synthetic_eer(variant: Variant, seed: u64) -> Result<f64, String> {
    const INPUT_LEN: usize = 3200;
    // enough data that train and eval EER agree; smaller sets overfit and
    // the comparison then measures noise
    let train_data = synth_dataset(512, INPUT_LEN, seed);
    let eval_data = synth_dataset(128, INPUT_LEN, 10_000 + seed);
    let (train_src, eval_src) = (MemorySource::from(&train_data), MemorySource::from(&eval_data));
    let cfg = ModelConfig::new(FrontendConfig::new(Preset::S, variant, 1).with_input_len(INPUT_LEN));
    let mut model = RwResnet::<f32>::new(cfg).map_err(|e| e.to_string())?;
    let train_cfg = TrainConfig {
        epochs: 4,
        seed,
        schedule: ScheduleConfig {
            lr0: 1e-3,
            total_epochs: 4,
            ..ScheduleConfig::default()
        },
        ..TrainConfig::default()
    };
    let outcome = train(&mut model, DataSplit { set: &train_data.trials, source: &train_src }, None, &train_cfg)
        .map_err(|e| e.to_string())?;
    model.load_params(&outcome.best).map_err(|e| e.to_string())?;
    let records = score_trials(&mut model, DataSplit { set: &eval_data.trials, source: &eval_src }, 16)
        .map_err(|e| e.to_string())?;
    Ok(compute_eer_records(&records).map_err(|e| e.to_string())?.value)
}

fn variant_ordering() -> Result<String, String> {
    let seeds = 0..5u64;
    let mut wav = Vec::new();
    let mut res = Vec::new();
    for seed in seeds {
        wav.push(synthetic_eer(Variant::Wavegram, seed)?);
        res.push(synthetic_eer(Variant::ResWavegram, seed)?);
    }
    let mean = |v: &[f64]| 100.0 * v.iter().sum::<f64>() / v.len() as f64;
    let (mw, mr) = (mean(&wav), mean(&res));
    let per_seed: Vec<String> = wav.iter().zip(&res).map(|(w, r)| format!("{:.1}/{:.1}", 100.0 * w, 100.0 * r)).collect();
    let detail = format!(
        "mean EER wavegram {mw:.2}%, reswavegram {mr:.2}% (per seed wav/res: {})",
        per_seed.join(" ")
    );
    ensure(mr <= mw + 2.0, || detail.clone())?;
    Ok(detail)
}

// -------------------------------------------------------------- schedule

fn schedule_conformance() -> Result<String, String> {
    let s = ScheduleConfig::default();
    let (lr0, eta_min) = (1e-4, 1e-8);
    let cycles = [(0.0, 10.0), (10.0, 20.0), (30.0, 40.0)];
    ensure(s.restarts() == vec![10.0, 30.0], || format!("restarts {:?}", s.restarts()))?;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    for (start, len) in cycles {
        let at_start = s.lr_at(start);
        let at_end = s.lr_in_cycle(len, len);
        let near_end = s.lr_at(start + len - 1e-7);
        let mid = s.lr_at(start + len / 2.0);
        ensure(close(at_start, lr0), || format!("cycle at {start}: start lr {at_start:e}"))?;
        ensure(close(at_end, eta_min) && close(near_end, eta_min), || {
            format!("cycle at {start}: end lr {at_end:e} / {near_end:e}")
        })?;
        ensure(close(mid, (lr0 + eta_min) / 2.0), || format!("cycle at {start}: midpoint lr {mid:e}"))?;
    }
    // every epoch against the closed form
    for epoch in 0..70 {
        let t = epoch as f64;
        let (mut start, mut len) = (0.0, 10.0);
        while t >= start + len {
            start += len;
            len *= 2.0;
        }
        let want = eta_min + 0.5 * (lr0 - eta_min) * (1.0 + (std::f64::consts::PI * (t - start) / len).cos());
        ensure(close(s.lr_at(t), want), || format!("epoch {epoch}: {:e} vs {want:e}", s.lr_at(t)))?;
    }
    Ok("cycle starts, ends and midpoints plus 70 epochs within 1e-12".into())
}

// ----------------------------------------------------------- determinism

fn tree_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let p = entry.map_err(|e| e.to_string())?.path();
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        out.push((name, std::fs::read(&p).map_err(|e| e.to_string())?));
    }
    out.sort();
    Ok(out)
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let data = root.join("data");
    ok_or_report(
        &run_cli(&["synth-data", "--n", "6", "--length", "3200", "--seed", "4", "--out-dir", path_str(&data)], &[]),
        "synth-data",
    )?;
    let protocol = data.join("protocol.txt");
    let mut checkpoint_sets = Vec::new();
    for run in ["a", "b"] {
        let ck = root.join(format!("ck_{run}"));
        let out = run_cli(
            &[
                "train", "--train-protocol", path_str(&protocol), "--audio-root", path_str(&data),
                "--preset", "S", "--cg", "2", "--input-len", "3200", "--epochs", "3", "--batch", "4",
                "--seed", "9", "--random-crop", "--checkpoint-dir", path_str(&ck),
            ],
            &[],
        );
        ok_or_report(&out, "train")?;
        let files: Vec<(String, Vec<u8>)> =
            tree_files(&ck)?.into_iter().filter(|(n, _)| n.ends_with(".ckpt") || n == "history.csv").collect();
        checkpoint_sets.push(files);
    }
    ensure(checkpoint_sets[0].len() == 5, || format!("{} checkpoint files", checkpoint_sets[0].len()))?;
    for (a, b) in checkpoint_sets[0].iter().zip(&checkpoint_sets[1]) {
        ensure(a == b, || format!("{} differs between runs", a.0))?;
    }
    let ckpt = root.join("ck_a").join("best.ckpt");
    let mut score_files = Vec::new();
    for run in ["1", "2"] {
        let out_path = root.join(format!("scores_{run}.txt"));
        let out = run_cli(
            &[
                "score", "--checkpoint", path_str(&ckpt), "--protocol", path_str(&protocol),
                "--audio-root", path_str(&data), "--output", path_str(&out_path),
            ],
            &[],
        );
        ok_or_report(&out, "score")?;
        score_files.push(std::fs::read(&out_path).map_err(|e| e.to_string())?);
    }
    ensure(score_files[0] == score_files[1], || "score files differ".into())?;
    let lines = String::from_utf8_lossy(&score_files[0]).lines().count();
    ensure(lines == 12, || format!("{lines} score lines for 12 trials"))?;
    Ok(format!(
        "{} checkpoints and history bit-identical across runs; score files byte-identical",
        checkpoint_sets[0].len() - 1
    ))
}

// ------------------------------------------------------------ round trips

fn format_round_trips() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    // WAV
    for case in 0..200 {
        let len = if case == 0 { 0 } else { rng.random_range(1..3000) };
        let mut samples: Vec<f32> = (0..len).map(|_| f32::from(rng.random::<i16>())).collect();
        if len >= 2 {
            samples[0] = -32768.0;
            samples[1] = 32767.0;
        }
        let rate = if case % 3 == 0 { 16_000 } else { rng.random_range(8000..48_000) };
        let w = Waveform::new(samples, rate, format!("w{case}"));
        let bytes = serialize_wav(&w).map_err(|e| e.to_string())?;
        let back = parse_wav(&bytes, &w.source_id).map_err(|e| e.to_string())?.waveform;
        ensure(back == w, || format!("wav case {case} changed"))?;
    }
    // checkpoint
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = ModelConfig::new(FrontendConfig::new(Preset::S, Variant::ResWavegram, 2).with_input_len(3200));
    let mut model = RwResnet::<f32>::new(cfg).map_err(|e| e.to_string())?;
    init_params(&mut model, 31);
    let x = Tensor::from_fn(&[3, 1, 3200], |_| rng.random_range(-1.0f32..1.0));
    model.forward(x.clone(), Mode::Train).map_err(|e| e.to_string())?;
    let snap = model.snapshot();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&snap, &path).map_err(|e| e.to_string())?;
    let loaded = load_checkpoint::<f32>(&path).map_err(|e| e.to_string())?;
    let bitwise = snap.tensors.len() == loaded.tensors.len()
        && snap.tensors.iter().zip(&loaded.tensors).all(|(a, b)| {
            a.name == b.name
                && a.value.shape() == b.value.shape()
                && a.value.data().iter().zip(b.value.data()).all(|(p, q)| p.to_bits() == q.to_bits())
        });
    ensure(bitwise && loaded.config == snap.config, || "checkpoint tensors changed".into())?;
    ensure(encode_checkpoint(&decode_checkpoint::<f32>(&encode_checkpoint(&snap)).unwrap()) == encode_checkpoint(&snap), || {
        "re-encoding changed bytes".into()
    })?;
    let mut fresh = RwResnet::<f32>::new(loaded.config.clone()).map_err(|e| e.to_string())?;
    fresh.load_params(&loaded).map_err(|e| e.to_string())?;
    let a = model.forward(x.clone(), Mode::Eval).map_err(|e| e.to_string())?;
    let b = fresh.forward(x, Mode::Eval).map_err(|e| e.to_string())?;
    ensure(a.values == b.values, || "eval logits changed after reload".into())?;
    // scores
    let records: Vec<ScoreRecord> = (0..1000)
        .map(|i| ScoreRecord {
            utt_id: format!("U{i:05}"),
            score: rng.random_range(-50.0..50.0),
            label: None,
        })
        .collect();
    let back = read_scores(&write_scores(&records)).map_err(|e| e.to_string())?;
    ensure(back.len() == records.len(), || "score count changed".into())?;
    let mut worst = 0.0f64;
    for (a, b) in records.iter().zip(&back) {
        ensure(a.utt_id == b.utt_id, || "score order changed".into())?;
        worst = worst.max((a.score - b.score).abs());
    }
    ensure(worst < 5e-7, || format!("score delta {worst:e}"))?;
    // protocol and audio generated on disk
    let out_dir = dir.path().join("synth");
    ok_or_report(
        &run_cli(&["synth-data", "--n", "5", "--length", "1000", "--seed", "3", "--out-dir", path_str(&out_dir)], &[]),
        "synth-data",
    )?;
    let text = std::fs::read_to_string(out_dir.join("protocol.txt")).map_err(|e| e.to_string())?;
    let set = parse_protocol(&text).map_err(|e| e.to_string())?;
    ensure(write_protocol(&set) == text, || "protocol text changed".into())?;
    ensure(parse_protocol(&write_protocol(&set)).map_err(|e| e.to_string())? == set, || "protocol changed".into())?;
    let reference = synth_dataset(5, 1000, 3);
    ensure(set.trials == reference.trials.trials, || "generated protocol differs from the dataset".into())?;
    ensure(set.count(Label::Bonafide) == 5 && set.count(Label::Spoof) == 5, || "class counts".into())?;
    for w in &reference.waveforms {
        let p: PathBuf = out_dir.join(format!("{}.wav", w.source_id));
        let bytes = std::fs::read(&p).map_err(|e| e.to_string())?;
        let parsed = parse_wav(&bytes, &w.source_id).map_err(|e| e.to_string())?;
        ensure(&parsed.waveform == w && parsed.warnings.is_empty(), || format!("{} changed on disk", w.source_id))?;
    }
    Ok(format!(
        "200 WAVs, {} checkpoint tensors bitwise, 1000 scores (max delta {worst:.3e}), protocol of 10 trials",
        snap.tensors.len()
    ))
}
