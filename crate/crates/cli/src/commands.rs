use std::path::{Path, PathBuf};
use std::time::Instant;

use cocsi_core::config::ModelKind;
use cocsi_core::eval::{
    allocate_bits, ber_sweep, evaluate_magnitude, evaluate_phase, fine_tune_mismatch, gnuplot_script, run_comparison,
    save_reports, weight_attention, MetricsReport, ModelTemplate,
};
use cocsi_core::models::{AnyModel, FeedbackModel, MagnitudeNet, PhaseNet, PlaneSet};
use cocsi_core::nn::load_checkpoint;
use cocsi_core::train::{train as fit, TrainConfig};
use cocsi_core::{generate_dataset, load_dataset, save_dataset, ChannelDataset, SplitKind};

use crate::error::{CliError, CliResult};
use crate::Context;

fn load_data(ctx: &Context) -> CliResult<ChannelDataset> {
    if !ctx.data.exists() {
        return Err(CliError::MissingDataset(ctx.data.clone()));
    }
    let ds = load_dataset(&ctx.data)?;
    let want = &ctx.cfg.dataset;
    if ds.geometry != want.geometry || ds.users_per_group() != want.users_per_group {
        return Err(CliError::Mismatch(format!(
            "dataset {} has {}x{} antennas and {} users per group, config asks for {}x{} and {}",
            ctx.data.display(),
            ds.geometry.n_rx,
            ds.geometry.n_tx,
            ds.users_per_group(),
            want.geometry.n_rx,
            want.geometry.n_tx,
            want.users_per_group
        )));
    }
    Ok(ds)
}

fn load_model(ctx: &Context) -> CliResult<AnyModel> {
    if !ctx.model.exists() {
        return Err(CliError::MissingModel(ctx.model.clone()));
    }
    Ok(AnyModel::from_checkpoint(&load_checkpoint(&ctx.model)?)?)
}

fn load_magnitude(ctx: &Context, command: &str) -> CliResult<MagnitudeNet> {
    match load_model(ctx)? {
        AnyModel::Magnitude(m) => Ok(m),
        AnyModel::Phase(_) => Err(CliError::Unsupported(format!(
            "{command} needs a magnitude model, {} holds a phase model",
            ctx.model.display()
        ))),
    }
}

fn check_magnitude(net: &MagnitudeNet, data: &PlaneSet) -> CliResult<()> {
    if net.cfg.dims() != data.dims() || net.cfg.users != data.users {
        return Err(CliError::Mismatch(format!(
            "model expects {} dims and {} users, dataset has {} and {}",
            net.cfg.dims(),
            net.cfg.users,
            data.dims(),
            data.users
        )));
    }
    Ok(())
}

fn check_phase(net: &PhaseNet, data: &PlaneSet) -> CliResult<()> {
    if net.cfg.dims() != data.dims() || net.cfg.user >= data.users {
        return Err(CliError::Mismatch(format!(
            "phase model expects {} dims and user {}, dataset has {} dims and {} users",
            net.cfg.dims(),
            net.cfg.user,
            data.dims(),
            data.users
        )));
    }
    Ok(())
}

fn write_reports(path: PathBuf, rows: &[MetricsReport]) -> CliResult<PathBuf> {
    save_reports(rows, &path)?;
    Ok(path)
}

fn write_text(path: PathBuf, text: &str) -> CliResult<PathBuf> {
    std::fs::write(&path, text).map_err(CliError::io(&path))?;
    Ok(path)
}

fn elapsed(start: Instant, deterministic: bool) -> f64 {
    if deterministic {
        0.0
    } else {
        start.elapsed().as_secs_f64()
    }
}

fn plain_train_config(ctx: &Context) -> TrainConfig {
    TrainConfig {
        checkpoint_dir: None,
        ..ctx.cfg.train.clone()
    }
}

pub fn gen_data(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let ds = generate_dataset(&ctx.cfg.dataset)?;
    if let Some(dir) = ctx.data.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    save_dataset(&ds, &ctx.data)?;
    log::info!("{} groups of {} users", ds.groups.len(), ds.users_per_group());
    Ok(vec![ctx.data.clone()])
}

pub fn train(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let ds = load_data(ctx)?;
    let tr = PlaneSet::from_dataset(&ds, SplitKind::Train);
    let va = PlaneSet::from_dataset(&ds, SplitKind::Val);
    let model_dir = ctx.out.join("model");
    std::fs::create_dir_all(&model_dir).map_err(CliError::io(&model_dir))?;
    let cfg = TrainConfig {
        checkpoint_dir: Some(model_dir.clone()),
        ..ctx.cfg.train.clone()
    };
    let outcome = match ctx.cfg.model.kind {
        ModelKind::Magnitude => {
            let mut net = MagnitudeNet::build(ctx.cfg.magnitude_config()?, cfg.seed)?;
            check_magnitude(&net, &tr)?;
            fit(&mut net, &tr, &va, &cfg)?
        }
        ModelKind::Phase => {
            let mut net = PhaseNet::build(ctx.cfg.phase_config()?, cfg.seed)?;
            check_phase(&net, &tr)?;
            fit(&mut net, &tr, &va, &cfg)?
        }
    };
    let log_path = ctx.out.join("train_log.csv");
    outcome.log.save_csv(&log_path)?;
    if let Some(v) = outcome.log.final_val_loss() {
        log::info!("final validation loss {v:.6}");
    }
    Ok(vec![model_dir.join("best.cocw"), model_dir.join("last.cocw"), log_path])
}

pub fn eval(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let model = load_model(ctx)?;
    let ds = load_data(ctx)?;
    let te = PlaneSet::from_dataset(&ds, SplitKind::Test);
    let start = Instant::now();
    let row = match &model {
        AnyModel::Magnitude(net) => {
            check_magnitude(net, &te)?;
            let v = evaluate_magnitude(net, &te, None)?;
            MetricsReport {
                experiment: "eval".into(),
                model: net.cfg.arch.name().into(),
                bpd: net.cfg.feedback_bits as f64 / net.cfg.dims() as f64,
                nmse_db: v.db(),
                phase_nmse_db: None,
                ber: None,
                params: net.param_count(),
                seed: ctx.cfg.train.seed,
                seconds: elapsed(start, ctx.cfg.train.deterministic),
            }
        }
        AnyModel::Phase(net) => {
            check_phase(net, &te)?;
            let (weighted, complex) = evaluate_phase(net, &te)?;
            MetricsReport {
                experiment: "eval".into(),
                model: net.cfg.variant.name().into(),
                bpd: net.cfg.feedback_bits as f64 / net.cfg.dims() as f64,
                nmse_db: complex.db(),
                phase_nmse_db: Some(weighted.db()),
                ber: None,
                params: net.param_count(),
                seed: ctx.cfg.train.seed,
                seconds: elapsed(start, ctx.cfg.train.deterministic),
            }
        }
    };
    log::info!("{} NMSE {:.3} dB", row.model, row.nmse_db);
    Ok(vec![write_reports(ctx.out.join("eval.csv"), &[row])?])
}

pub fn finetune(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let net = load_magnitude(ctx, "finetune")?;
    let ds = load_data(ctx)?;
    let te = PlaneSet::from_dataset(&ds, SplitKind::Test);
    check_magnitude(&net, &te)?;
    let shifted = generate_dataset(&ctx.cfg.shifted_dataset())?;
    let rows = fine_tune_mismatch(
        &net,
        &te,
        &shifted,
        &ctx.cfg.eval.finetune_sizes,
        &plain_train_config(ctx),
    )?;
    Ok(vec![write_reports(ctx.out.join("finetune.csv"), &rows)?])
}

pub fn sweep_bpd(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let template = match ctx.cfg.model.kind {
        ModelKind::Magnitude => ModelTemplate::Magnitude(ctx.cfg.magnitude_config()?),
        ModelKind::Phase => ModelTemplate::Phase(ctx.cfg.phase_config()?),
    };
    let cmp = cocsi_core::eval::sweep_bpd(template, &ctx.cfg.comparison_config())?;
    let mut paths = cmp.save(&ctx.out)?;
    let script = gnuplot_script(&paths[..1], "sweep_bpd.png")?;
    paths.push(write_text(ctx.out.join("sweep_bpd.gp"), &script)?);
    Ok(paths)
}

pub fn sweep_ber(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let net = load_magnitude(ctx, "sweep-ber")?;
    let ds = load_data(ctx)?;
    let te = PlaneSet::from_dataset(&ds, SplitKind::Test);
    check_magnitude(&net, &te)?;
    let e = &ctx.cfg.eval;
    let points = ber_sweep(&net, &te, &e.ber_list, e.ber_seeds, ctx.cfg.train.seed)?;
    let bpd = net.cfg.feedback_bits as f64 / net.cfg.dims() as f64;
    let rows: Vec<MetricsReport> = points
        .iter()
        .map(|p| MetricsReport {
            experiment: "sweep_ber".into(),
            model: net.cfg.arch.name().into(),
            bpd,
            nmse_db: p.nmse.db(),
            phase_nmse_db: None,
            ber: Some(p.ber),
            params: net.param_count(),
            seed: ctx.cfg.train.seed,
            seconds: 0.0,
        })
        .collect();
    Ok(vec![write_reports(ctx.out.join("sweep_ber.csv"), &rows)?])
}

pub fn alloc_bits(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let ds = load_data(ctx)?;
    let cfg = ctx.cfg.allocation_config()?;
    let tr = PlaneSet::from_dataset(&ds, SplitKind::Train);
    let va = PlaneSet::from_dataset(&ds, SplitKind::Val);
    let te = PlaneSet::from_dataset(&ds, SplitKind::Test);
    let table = allocate_bits(&cfg, &tr, &va, &te)?;
    let (m, p) = table.best_split();
    log::info!("best split: {m} magnitude bits, {p} phase bits");
    let path = ctx.out.join("alloc_bits.csv");
    table.save_csv(&path)?;
    Ok(vec![path])
}

fn attention_script(files: &[PathBuf], output_png: &str) -> String {
    let mut s = String::from("set datafile separator ','\nset terminal pngcairo size 900,600\n");
    s.push_str(&format!("set output '{output_png}'\n"));
    s.push_str("set xlabel 'input index'\nset ylabel 'normalized weight'\nset grid\n");
    let plots: Vec<String> = files
        .iter()
        .enumerate()
        .map(|(k, f)| format!("'{}' using 1:2 skip 1 with lines title 'user {k}'", file_name(f)))
        .collect();
    s.push_str("plot ");
    s.push_str(&plots.join(", \\\n     "));
    s.push('\n');
    s
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn visualize_weights(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let net = load_magnitude(ctx, "visualize-weights")?;
    let mut paths = Vec::new();
    for (k, enc) in net.encoders.iter().enumerate() {
        let profile = weight_attention(enc, &net.params)?;
        let path = ctx.out.join(format!("attention_user{k}.csv"));
        profile.save_csv(&path)?;
        paths.push(path);
    }
    let script = attention_script(&paths, "attention.png");
    paths.push(write_text(ctx.out.join("attention.gp"), &script)?);
    Ok(paths)
}

pub fn compare(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let suite = ctx.cfg.eval.suite;
    let cmp = run_comparison(suite, &ctx.cfg.comparison_config())?;
    let mut paths = cmp.save(&ctx.out)?;
    let script = gnuplot_script(&paths[..1], &format!("{}.png", suite.name()))?;
    paths.push(write_text(ctx.out.join("plot.gp"), &script)?);
    Ok(paths)
}
