use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rwresnet::audio::{
    parse_protocol, serialize_wav, synth_dataset, write_protocol, DataError, DirSource, Label, MemorySource, TrialSet,
    WaveSource,
};
use rwresnet::config::KeyValues;
use rwresnet::frontend::FrontendConfig;
use rwresnet::gradcheck::run_suite;
use rwresnet::metrics::{
    compute_eer_records, compute_min_tdcf_records, read_scores, report_csv, write_scores, EvalReport, ScoreRecord,
    TdcfCost,
};
use rwresnet::model::{ModelConfig, RwResnet};
use rwresnet::training::{
    atomic_write, load_checkpoint, score_trials, train as run_training, DataSplit, ScheduleConfig, TrainConfig,
};

use crate::args::{EvalArgs, GradcheckArgs, ScoreArgs, SynthArgs, TrainArgs};
use crate::error::CliError;

/// Names the layer whose backward the gradient check should corrupt.
pub const FAULT_ENV: &str = "RWRESNET_GRADCHECK_FAULT";
pub const PROTOCOL_FILE: &str = "protocol.txt";
/// Missing utterance ids listed in an eval error.
const MAX_LISTED: usize = 10;

fn require_file(flag: &str, path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::config(format!("--{flag}: no such file {}", path.display())))
    }
}

fn require_dir(flag: &str, path: &Path) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::config(format!("--{flag}: no such directory {}", path.display())))
    }
}

/// The directory an output file will be created in must already exist.
fn require_output(flag: &str, path: &Path) -> Result<(), CliError> {
    if path.is_dir() {
        return Err(CliError::config(format!("--{flag}: {} is a directory", path.display())));
    }
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(CliError::config(format!(
            "--{flag}: directory {} does not exist",
            p.display()
        ))),
        _ => Ok(()),
    }
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    atomic_write(path, bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn read_protocol(path: &Path) -> Result<TrialSet, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let mut set = parse_protocol(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    set.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(set)
}

/// Reads every utterance once so unreadable audio fails before training
/// writes anything.
fn check_audio(set: &TrialSet, source: &dyn WaveSource) -> Result<(), CliError> {
    for t in &set.trials {
        if source.load(t)?.is_empty() {
            return Err(DataError::Empty(t.utt_id.clone()).into());
        }
    }
    Ok(())
}

pub fn model_config(a: &TrainArgs) -> Result<ModelConfig, CliError> {
    let mut fe = FrontendConfig::new(a.preset, a.variant, a.cg).with_input_len(a.input_len);
    match (a.c1, a.c2, a.c3) {
        (None, None, None) => {}
        (Some(c1), Some(c2), Some(c3)) => {
            fe.c1 = c1;
            fe.c2 = c2;
            fe.c3 = c3;
        }
        _ => return Err(CliError::config("--c1, --c2 and --c3 must be given together")),
    }
    let cfg = ModelConfig::new(fe);
    cfg.validate()?;
    Ok(cfg)
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig, CliError> {
    let schedule = ScheduleConfig {
        lr0: a.lr,
        eta_min: a.eta_min,
        t0: a.t0,
        t_mult: a.t_mult,
        total_epochs: a.epochs,
    };
    schedule.validate()?;
    if a.epochs == 0 || a.batch == 0 {
        return Err(CliError::config("--epochs and --batch must be positive"));
    }
    Ok(TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        schedule,
        random_crop: a.random_crop,
        select_by_dev: a.select_by_dev,
        checkpoint_dir: Some(a.checkpoint_dir.clone()),
        ..TrainConfig::default()
    })
}

pub fn train(a: &TrainArgs, effective: &KeyValues) -> Result<(), CliError> {
    let model_cfg = model_config(a)?;
    let cfg = train_config(a)?;
    if a.checkpoint_dir.exists() && !a.checkpoint_dir.is_dir() {
        return Err(CliError::config(format!(
            "--checkpoint-dir: {} is not a directory",
            a.checkpoint_dir.display()
        )));
    }
    if a.synth.is_some() && (a.train_protocol.is_some() || a.dev_protocol.is_some()) {
        return Err(CliError::config("--synth replaces --train-protocol and --dev-protocol"));
    }
    if a.synth.is_none() {
        let train = a
            .train_protocol
            .as_deref()
            .ok_or_else(|| CliError::config("--train-protocol is required unless --synth is given"))?;
        require_file("train-protocol", train)?;
        if let Some(dev) = &a.dev_protocol {
            require_file("dev-protocol", dev)?;
        }
        let root = a
            .audio_root
            .as_deref()
            .ok_or_else(|| CliError::config("--audio-root is required with --train-protocol"))?;
        require_dir("audio-root", root)?;
    } else if a.select_by_dev {
        return Err(CliError::config("--select-by-dev needs --dev-protocol"));
    }

    let mut model = RwResnet::<f32>::new(model_cfg)?;
    let outcome = if let Some(n) = a.synth {
        let data = synth_dataset(n, a.input_len, a.seed);
        let source = MemorySource::from(&data);
        let split = DataSplit { set: &data.trials, source: &source };
        write_run_config(a, effective)?;
        run_training(&mut model, split, None, &cfg)?
    } else {
        let source = DirSource::new(a.audio_root.clone().expect("checked above"));
        let train_set = read_protocol(a.train_protocol.as_deref().expect("checked above"))?;
        let dev_set = a.dev_protocol.as_deref().map(read_protocol).transpose()?;
        if a.select_by_dev && dev_set.is_none() {
            return Err(CliError::config("--select-by-dev needs --dev-protocol"));
        }
        check_audio(&train_set, &source)?;
        if let Some(dev) = &dev_set {
            check_audio(dev, &source)?;
        }
        write_run_config(a, effective)?;
        let split = DataSplit { set: &train_set, source: &source };
        let dev = dev_set.as_ref().map(|set| DataSplit { set, source: &source });
        run_training(&mut model, split, dev, &cfg)?
    };

    let last = outcome.history.last().expect("at least one epoch");
    println!("initial_loss={:.6}", outcome.initial_loss);
    println!("final_loss={:.6}", last.mean_loss);
    println!("final_accuracy={:.6}", last.accuracy);
    println!("best_epoch={}", outcome.best_epoch);
    println!("best_checkpoint={}", a.checkpoint_dir.join("best.ckpt").display());
    Ok(())
}

fn write_run_config(a: &TrainArgs, effective: &KeyValues) -> Result<(), CliError> {
    std::fs::create_dir_all(&a.checkpoint_dir)
        .map_err(|e| CliError::data(format!("{}: {e}", a.checkpoint_dir.display())))?;
    write_output(&a.checkpoint_dir.join("run.cfg"), effective.to_text().as_bytes())
}

pub fn score(a: &ScoreArgs) -> Result<(), CliError> {
    require_file("checkpoint", &a.checkpoint)?;
    require_file("protocol", &a.protocol)?;
    require_dir("audio-root", &a.audio_root)?;
    require_output("output", &a.output)?;
    if a.batch == 0 {
        return Err(CliError::config("--batch must be positive"));
    }
    let set = read_protocol(&a.protocol)?;
    let params = load_checkpoint::<f32>(&a.checkpoint)?;
    let mut model = RwResnet::new(params.config.clone())
        .map_err(|e| CliError::data(format!("checkpoint config: {e}")))?;
    model
        .load_params(&params)
        .map_err(|e| CliError::data(format!("checkpoint {}: {e}", a.checkpoint.display())))?;
    let source = DirSource::new(&a.audio_root);
    let records = score_trials(&mut model, DataSplit { set: &set, source: &source }, a.batch)?;
    write_output(&a.output, write_scores(&records).as_bytes())?;
    println!("scored={}", records.len());
    Ok(())
}

/// Attaches protocol labels to scores, in protocol order.
pub fn join_scores(scores: &[ScoreRecord], set: &TrialSet) -> Result<Vec<ScoreRecord>, CliError> {
    let mut by_id: HashMap<&str, f64> = HashMap::with_capacity(scores.len());
    for s in scores {
        if by_id.insert(&s.utt_id, s.score).is_some() {
            return Err(CliError::data(format!("utterance {} is scored twice", s.utt_id)));
        }
    }
    let mut joined = Vec::with_capacity(set.len());
    let mut missing = Vec::new();
    for t in &set.trials {
        match by_id.get(t.utt_id.as_str()) {
            Some(&score) => joined.push(ScoreRecord {
                utt_id: t.utt_id.clone(),
                score,
                label: Some(t.label),
            }),
            None => missing.push(t.utt_id.as_str()),
        }
    }
    if !missing.is_empty() {
        let shown = missing[..missing.len().min(MAX_LISTED)].join(", ");
        let more = if missing.len() > MAX_LISTED { ", ..." } else { "" };
        return Err(CliError::data(format!(
            "{} protocol utterances have no score: {shown}{more}",
            missing.len()
        )));
    }
    let extra = scores.len() - joined.len();
    if extra > 0 {
        log::warn!("{extra} scored utterances are not in the protocol and were ignored");
    }
    Ok(joined)
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    require_file("scores", &a.scores)?;
    require_file("protocol", &a.protocol)?;
    if let Some(c) = &a.cost_file {
        require_file("cost-file", c)?;
    }
    if let Some(r) = &a.report {
        require_output("report", r)?;
    }
    let cost = a
        .cost_file
        .as_deref()
        .map(|path| {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            KeyValues::parse(&text)
                .and_then(|kv| TdcfCost::from_kv(&kv))
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
        })
        .transpose()?;
    let text =
        std::fs::read_to_string(&a.scores).map_err(|e| CliError::data(format!("{}: {e}", a.scores.display())))?;
    let scores = read_scores(&text).map_err(|e| CliError::data(format!("{}: {e}", a.scores.display())))?;
    let set = read_protocol(&a.protocol)?;
    let joined = join_scores(&scores, &set)?;
    log::info!(
        "{} bona fide and {} spoof trials",
        set.count(Label::Bonafide),
        set.count(Label::Spoof)
    );
    let report = EvalReport {
        eer: compute_eer_records(&joined)?,
        min_tdcf: cost.map(|c| compute_min_tdcf_records(&joined, &c)).transpose()?,
    };
    let csv = report_csv(&report);
    if let Some(r) = &a.report {
        write_output(r, csv.as_bytes())?;
    }
    print!("{csv}");
    Ok(())
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<(), CliError> {
    if a.seeds == 0 || !(a.step > 0.0) {
        return Err(CliError::config("--seeds and --step must be positive"));
    }
    let fault = std::env::var(FAULT_ENV).ok().filter(|f| !f.is_empty());
    if let Some(f) = &fault {
        log::warn!("{FAULT_ENV}={f}: corrupting the backward pass of matching layers");
    }
    let reports = run_suite(a.seeds, a.step, fault.as_deref())?;
    let mut failed = Vec::new();
    for r in &reports {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<40} max_rel_error={:.3e} threshold={:.0e} seeds={} {verdict}",
            r.layer, r.max_rel_error, r.threshold, r.seeds
        );
        if !r.passed() {
            failed.push(r.layer.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::numeric(format!("gradient check failed for {}", failed.join(", "))))
    }
}

pub fn synth_data(a: &SynthArgs) -> Result<(), CliError> {
    if a.length == 0 {
        return Err(CliError::config("--length must be positive"));
    }
    let out = &a.out_dir;
    if out.exists() {
        let empty = out.is_dir()
            && std::fs::read_dir(out)
                .map_err(|e| CliError::config(format!("--out-dir: {}: {e}", out.display())))?
                .next()
                .is_none();
        if !empty {
            return Err(CliError::config(format!(
                "--out-dir: {} exists and is not an empty directory",
                out.display()
            )));
        }
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    require_dir("out-dir parent", &parent)?;

    let data = synth_dataset(a.n, a.length, a.seed);
    let io = |e: std::io::Error| CliError::data(format!("{}: {e}", out.display()));
    // build the tree next to its destination, then rename it into place
    let tmp = tempfile::Builder::new().prefix(".synth-").tempdir_in(&parent).map_err(io)?;
    for w in &data.waveforms {
        let bytes = serialize_wav(w).map_err(|e| CliError::data(format!("{}: {e}", w.source_id)))?;
        std::fs::write(tmp.path().join(format!("{}.wav", w.source_id)), bytes).map_err(io)?;
    }
    std::fs::write(tmp.path().join(PROTOCOL_FILE), write_protocol(&data.trials)).map_err(io)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(tmp.path(), std::fs::Permissions::from_mode(0o755)).map_err(io)?;
    }
    if out.exists() {
        std::fs::remove_dir(out).map_err(io)?;
    }
    std::fs::rename(tmp.path(), out).map_err(io)?;
    let _ = tmp.keep();
    println!("utterances={}", data.trials.len());
    println!("protocol={}", out.join(PROTOCOL_FILE).display());
    Ok(())
}
