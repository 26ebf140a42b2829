//! Experiment drivers: BER sweeps, bit allocation, comparison suites and the
//! distribution-mismatch fine-tuning run.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use super::metrics::{nmse, nmse_complex, phase_nmse, save_reports, MetricsReport, Nmse};
use crate::bitstream::BitMode;
use crate::channel::{generate_dataset, CMatrix, ChannelDataset, DatasetConfig, SplitKind};
use crate::error::{Error, Result};
use crate::models::{
    bit_mode_name, combine_complex, AnyModel, BitErrors, FeedbackModel, MagnitudeArch, MagnitudeConfig, MagnitudeNet,
    PhaseConfig, PhaseNet, PhaseVariant, PlaneSet,
};
use crate::rng::{domain, KeyedRng};
use crate::train::{fine_tune, train, TrainConfig, TrainLog};

fn all_rows(data: &PlaneSet) -> Vec<usize> {
    (0..data.len()).collect()
}

/// NMSE of the reconstructed normalized magnitude, pooled over users.
pub fn evaluate_magnitude(net: &MagnitudeNet, data: &PlaneSet, errors: Option<&mut BitErrors<'_>>) -> Result<Nmse> {
    let rows = all_rows(data);
    let outs = net.reconstruct(data, &rows, errors)?;
    let parts = outs
        .iter()
        .enumerate()
        .map(|(k, y)| nmse(&data.gather_magnitude(k, &rows), y))
        .collect::<Result<Vec<_>>>()?;
    Ok(Nmse::pooled(&parts))
}

/// Weighted phase NMSE and the complex NMSE of `|H| exp(j phase_hat)`.
pub fn evaluate_phase(net: &PhaseNet, data: &PlaneSet) -> Result<(Nmse, Nmse)> {
    let rows = all_rows(data);
    let user = net.cfg.user;
    let phase_hat = net.reconstruct(data, &rows, None)?;
    let mag = data.gather_magnitude(user, &rows);
    let weighted = phase_nmse(&data.gather_phase(user, &rows), &phase_hat, &mag)?;
    let (truth, est): (Vec<CMatrix>, Vec<CMatrix>) = rows
        .iter()
        .map(|&s| {
            let m = data.magnitude(user, s);
            Ok((
                combine_complex(m, data.phase(user, s), data.mag_scale, data.n_rx, data.n_tx)?,
                combine_complex(m, phase_hat.row(s), data.mag_scale, data.n_rx, data.n_tx)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok((weighted, nmse_complex(&truth, &est)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerPoint {
    pub ber: f64,
    /// Mean linear NMSE over the corruption seeds.
    pub nmse: Nmse,
    pub seeds: usize,
}

/// Evaluate `net` with every emitted bit flipped independently at each rate
/// in `ber_list`. Linear NMSE is averaged over `n_seeds` corruption streams,
/// keyed by the rate itself; a zero rate is evaluated once, without corruption.
pub fn ber_sweep(
    net: &MagnitudeNet,
    data: &PlaneSet,
    ber_list: &[f64],
    n_seeds: usize,
    seed: u64,
) -> Result<Vec<BerPoint>> {
    if n_seeds == 0 {
        return Err(Error::invalid("ber_sweep needs at least one corruption seed"));
    }
    let root = KeyedRng::new(seed).child(domain::CHANNEL_ERRORS);
    ber_list
        .iter()
        .map(|&ber| {
            if ber == 0.0 {
                return Ok(BerPoint {
                    ber,
                    nmse: evaluate_magnitude(net, data, None)?,
                    seeds: 1,
                });
            }
            let parts = (0..n_seeds)
                .into_par_iter()
                .map(|s| {
                    let mut rng = root.stream_for(&[ber.to_bits(), s as u64]);
                    let mut errors = BitErrors { ber, rng: &mut rng };
                    evaluate_magnitude(net, data, Some(&mut errors))
                })
                .collect::<Result<Vec<_>>>()?;
            let linear = parts.iter().map(|p| p.linear).sum::<f64>() / n_seeds as f64;
            Ok(BerPoint {
                ber,
                nmse: Nmse { linear, ..parts[0] },
                seeds: n_seeds,
            })
        })
        .collect()
}

/// Feedback bits per UE for a bits-per-dimension target, rounded down to a
/// whole number of codeword entries.
pub fn bits_for_bpd(bpd: f64, dims: usize, mode: BitMode) -> Result<usize> {
    if !(bpd > 0.0 && bpd.is_finite()) {
        return Err(Error::invalid(format!("bpd must be positive, got {bpd}")));
    }
    let b = mode.bits_per_value() as usize;
    let bits = (bpd * dims as f64 + 1e-9).floor() as usize / b * b;
    if bits == 0 {
        return Err(Error::invalid(format!(
            "bpd {bpd} leaves no feedback bits for {dims} dimensions"
        )));
    }
    Ok(bits)
}

#[derive(Debug, Clone)]
pub struct AllocationConfig {
    /// Template for the magnitude network; `feedback_bits` is set per split.
    pub magnitude: MagnitudeConfig,
    pub phase_variant: PhaseVariant,
    pub phase_bit_mode: BitMode,
    pub total_bits: usize,
    /// Candidate `(magnitude_bits, phase_bits)` pairs.
    pub splits: Vec<(usize, usize)>,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationRow {
    pub mag_bits: usize,
    pub phase_bits: usize,
    pub nmse: Nmse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationTable {
    pub rows: Vec<AllocationRow>,
    pub best: usize,
}

impl AllocationTable {
    pub fn best_split(&self) -> (usize, usize) {
        let r = &self.rows[self.best];
        (r.mag_bits, r.phase_bits)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = csv::Writer::from_path(path)?;
        out.write_record(["mag_bits", "phase_bits", "nmse_db"])?;
        for r in &self.rows {
            out.write_record([
                r.mag_bits.to_string(),
                r.phase_bits.to_string(),
                r.nmse.db().to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Magnitude estimate per user: a trained network, or the training mean
/// when the split gives magnitude no bits.
fn magnitude_estimates(
    cfg: &AllocationConfig,
    bits: usize,
    tr: &PlaneSet,
    va: &PlaneSet,
    te: &PlaneSet,
) -> Result<Vec<Vec<f64>>> {
    let rows = all_rows(te);
    let users = cfg.magnitude.users;
    if bits == 0 {
        return Ok((0..users).map(|k| tr.mean_magnitude(k).repeat(te.len())).collect());
    }
    let mut net = MagnitudeNet::build(
        MagnitudeConfig {
            feedback_bits: bits,
            ..cfg.magnitude
        },
        cfg.train.seed,
    )?;
    train(&mut net, tr, va, &cfg.train)?;
    Ok(net
        .reconstruct(te, &rows, None)?
        .into_iter()
        .map(|t| t.into_data())
        .collect())
}

fn phase_estimates(
    cfg: &AllocationConfig,
    bits: usize,
    tr: &PlaneSet,
    va: &PlaneSet,
    te: &PlaneSet,
) -> Result<Vec<Vec<f64>>> {
    let rows = all_rows(te);
    (0..cfg.magnitude.users)
        .map(|user| {
            if bits == 0 {
                return Ok(vec![0.0; te.len() * te.dims()]);
            }
            let mut net = PhaseNet::build(
                PhaseConfig {
                    n_rx: cfg.magnitude.n_rx,
                    n_tx: cfg.magnitude.n_tx,
                    feedback_bits: bits,
                    bit_mode: cfg.phase_bit_mode,
                    variant: cfg.phase_variant,
                    user,
                },
                cfg.train.seed,
            )?;
            train(&mut net, tr, va, &cfg.train)?;
            Ok(net.reconstruct(te, &rows, None)?.into_data())
        })
        .collect()
}

/// Exhaustive search over magnitude/phase bit splits by complex NMSE on
/// `test`. A zero-bit magnitude share predicts the training mean magnitude;
/// a zero-bit phase share predicts zero phase.
pub fn allocate_bits(cfg: &AllocationConfig, tr: &PlaneSet, va: &PlaneSet, te: &PlaneSet) -> Result<AllocationTable> {
    if cfg.splits.is_empty() {
        return Err(Error::invalid("allocate_bits needs at least one candidate split"));
    }
    if let Some(&(m, p)) = cfg.splits.iter().find(|(m, p)| m + p != cfg.total_bits) {
        return Err(Error::invalid(format!(
            "split {m}+{p} does not add up to {} bits",
            cfg.total_bits
        )));
    }
    let (d, n_rx, n_tx) = (te.dims(), te.n_rx, te.n_tx);
    let rows = cfg
        .splits
        .par_iter()
        .map(|&(mag_bits, phase_bits)| {
            let mags = magnitude_estimates(cfg, mag_bits, tr, va, te)?;
            let phases = phase_estimates(cfg, phase_bits, tr, va, te)?;
            let mut parts = Vec::with_capacity(mags.len());
            for (k, (m, p)) in mags.iter().zip(&phases).enumerate() {
                let mut truth = Vec::with_capacity(te.len());
                let mut est = Vec::with_capacity(te.len());
                for s in 0..te.len() {
                    truth.push(combine_complex(
                        te.magnitude(k, s),
                        te.phase(k, s),
                        te.mag_scale,
                        n_rx,
                        n_tx,
                    )?);
                    let span = s * d..(s + 1) * d;
                    est.push(combine_complex(&m[span.clone()], &p[span], te.mag_scale, n_rx, n_tx)?);
                }
                parts.push(nmse_complex(&truth, &est)?);
            }
            Ok(AllocationRow {
                mag_bits,
                phase_bits,
                nmse: Nmse::pooled(&parts),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.nmse.linear.total_cmp(&b.1.nmse.linear))
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(AllocationTable { rows, best })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Suite {
    CoopVsAlone,
    LstmVsFc,
    QuantVsBinary,
    Mdpf,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::CoopVsAlone, Suite::LstmVsFc, Suite::QuantVsBinary, Suite::Mdpf];

    pub fn name(self) -> &'static str {
        match self {
            Suite::CoopVsAlone => "coop_vs_alone",
            Suite::LstmVsFc => "lstm_vs_fc",
            Suite::QuantVsBinary => "quant_vs_binary",
            Suite::Mdpf => "mdpf",
        }
    }

    fn arms(self, bit_mode: BitMode) -> Result<Vec<Arm>> {
        let magnitude = |tag: String, arch, lstm, bit_mode, solo| Arm {
            tag,
            kind: ArmKind::Magnitude {
                arch,
                lstm,
                bit_mode,
                tied: false,
                solo,
            },
        };
        Ok(match self {
            Suite::CoopVsAlone => MagnitudeArch::ALL
                .iter()
                .map(|&arch| magnitude(arch.name().into(), arch, false, bit_mode, false))
                .collect(),
            Suite::LstmVsFc => vec![
                magnitude("fcnn".into(), MagnitudeArch::Alone, false, bit_mode, true),
                magnitude("lstm".into(), MagnitudeArch::Alone, true, bit_mode, true),
            ],
            Suite::QuantVsBinary => [BitMode::Binarize, BitMode::quantize(1)?, BitMode::quantize(4)?]
                .iter()
                .map(|&m| magnitude(bit_mode_name(m), MagnitudeArch::Alone, false, m, true))
                .collect(),
            Suite::Mdpf => PhaseVariant::ALL
                .iter()
                .map(|&variant| Arm {
                    tag: variant.name().into(),
                    kind: ArmKind::Phase {
                        variant,
                        bit_mode,
                        user: 0,
                    },
                })
                .collect(),
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::config(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Arm {
    tag: String,
    kind: ArmKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ArmKind {
    /// `solo` arms use only the first UE of each group.
    Magnitude {
        arch: MagnitudeArch,
        lstm: bool,
        bit_mode: BitMode,
        tied: bool,
        solo: bool,
    },
    Phase {
        variant: PhaseVariant,
        bit_mode: BitMode,
        user: usize,
    },
}

/// A single network configuration to sweep over BPD; the feedback bits of
/// the template are replaced for every BPD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelTemplate {
    Magnitude(MagnitudeConfig),
    Phase(PhaseConfig),
}

impl ModelTemplate {
    fn arm(&self, dataset_users: usize) -> Result<Arm> {
        Ok(match *self {
            ModelTemplate::Magnitude(m) => {
                if m.users != dataset_users && m.users != 1 {
                    return Err(Error::config(format!(
                        "magnitude model for {} users cannot use groups of {dataset_users}",
                        m.users
                    )));
                }
                Arm {
                    tag: m.arch.name().into(),
                    kind: ArmKind::Magnitude {
                        arch: m.arch,
                        lstm: m.lstm_refine,
                        bit_mode: m.bit_mode,
                        tied: m.tied,
                        solo: m.users == 1,
                    },
                }
            }
            ModelTemplate::Phase(p) => Arm {
                tag: p.variant.name().into(),
                kind: ArmKind::Phase {
                    variant: p.variant,
                    bit_mode: p.bit_mode,
                    user: p.user,
                },
            },
        })
    }
}

#[derive(Debug, Clone)]
pub struct ComparisonConfig {
    /// Base dataset; the per-run seed is added to its seed.
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub bpd_list: Vec<f64>,
    pub seeds: Vec<u64>,
    pub bit_mode: BitMode,
}

impl ComparisonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bpd_list.is_empty() {
            return Err(Error::invalid("comparison needs at least one bpd value"));
        }
        if self.seeds.is_empty() {
            return Err(Error::invalid("comparison needs at least one seed"));
        }
        self.train.validate()
    }
}

/// One trained arm: metrics for the best-validation and the final
/// parameters, and the selected model.
#[derive(Debug, Clone)]
pub struct ArmResult {
    pub arm: String,
    pub best: MetricsReport,
    pub last: MetricsReport,
    pub model: AnyModel,
    pub log: TrainLog,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    /// Experiment id: the suite name, or `sweep_bpd`.
    pub experiment: String,
    pub arms: Vec<ArmResult>,
}

/// Suffix on the model tag of rows computed with final-epoch parameters.
pub const FINAL_SUFFIX: &str = "@final";

impl Comparison {
    /// Best-validation rows, then final-parameter rows.
    pub fn reports(&self) -> Vec<MetricsReport> {
        self.arms
            .iter()
            .map(|a| a.best.clone())
            .chain(self.arms.iter().map(|a| a.last.clone()))
            .collect()
    }

    pub fn best_reports(&self) -> Vec<MetricsReport> {
        self.arms.iter().map(|a| a.best.clone()).collect()
    }

    /// Write `<experiment>.csv` with every row and `<experiment>_<arm>.csv`
    /// per arm.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let merged = dir.join(format!("{}.csv", self.experiment));
        save_reports(&self.reports(), &merged)?;
        let mut paths = vec![merged];
        let mut tags: Vec<&str> = Vec::new();
        for a in &self.arms {
            if !tags.contains(&a.arm.as_str()) {
                tags.push(&a.arm);
            }
        }
        for tag in tags {
            let rows: Vec<MetricsReport> = self
                .arms
                .iter()
                .filter(|a| a.arm == tag)
                .flat_map(|a| [a.best.clone(), a.last.clone()])
                .collect();
            let path = dir.join(format!("{}_{}.csv", self.experiment, tag));
            save_reports(&rows, &path)?;
            paths.push(path);
        }
        Ok(paths)
    }
}

struct Splits {
    train: PlaneSet,
    val: PlaneSet,
    test: PlaneSet,
}

impl Splits {
    fn new(ds: &ChannelDataset) -> Self {
        Splits {
            train: PlaneSet::from_dataset(ds, SplitKind::Train),
            val: PlaneSet::from_dataset(ds, SplitKind::Val),
            test: PlaneSet::from_dataset(ds, SplitKind::Test),
        }
    }
}

struct Job {
    seed_index: usize,
    seed: u64,
    bpd: f64,
    arm: Arm,
}

fn run_arm(experiment: &str, job: &Job, data: &(Splits, Splits), cfg: &ComparisonConfig) -> Result<ArmResult> {
    let start = Instant::now();
    let tcfg = TrainConfig {
        seed: job.seed,
        checkpoint_dir: None,
        checkpoint_every: 0,
        ..cfg.train.clone()
    };
    let tag = job.arm.tag.clone();
    let elapsed = || {
        if tcfg.deterministic {
            0.0
        } else {
            start.elapsed().as_secs_f64()
        }
    };
    let report = |model: String, nmse_db: f64, phase_db: Option<f64>, params: usize, seconds: f64| MetricsReport {
        experiment: experiment.into(),
        model,
        bpd: job.bpd,
        nmse_db,
        phase_nmse_db: phase_db,
        ber: None,
        params,
        seed: job.seed,
        seconds,
    };
    let g = cfg.dataset.geometry;
    let (n_rx, n_tx) = (g.n_rx, g.n_tx);
    let result = match job.arm.kind {
        ArmKind::Magnitude {
            arch,
            lstm,
            bit_mode,
            tied,
            solo,
        } => {
            let s = if solo { &data.1 } else { &data.0 };
            let mcfg = MagnitudeConfig {
                n_rx,
                n_tx,
                users: s.train.users,
                feedback_bits: bits_for_bpd(job.bpd, g.dims(), bit_mode)?,
                bit_mode,
                arch,
                lstm_refine: lstm,
                tied,
            };
            let mut net = MagnitudeNet::build(mcfg, job.seed)?;
            let out = train(&mut net, &s.train, &s.val, &tcfg)?;
            let best = evaluate_magnitude(&net, &s.test, None)?;
            let mut last_net = net.clone();
            last_net.params = out.final_params;
            let last = evaluate_magnitude(&last_net, &s.test, None)?;
            let (secs, params) = (elapsed(), net.param_count());
            ArmResult {
                best: report(tag.clone(), best.db(), None, params, secs),
                last: report(format!("{tag}{FINAL_SUFFIX}"), last.db(), None, params, secs),
                arm: tag,
                model: AnyModel::Magnitude(net),
                log: out.log,
            }
        }
        ArmKind::Phase {
            variant,
            bit_mode,
            user,
        } => {
            let s = &data.0;
            let pcfg = PhaseConfig {
                n_rx,
                n_tx,
                feedback_bits: bits_for_bpd(job.bpd, g.dims(), bit_mode)?,
                bit_mode,
                variant,
                user,
            };
            let mut net = PhaseNet::build(pcfg, job.seed)?;
            let out = train(&mut net, &s.train, &s.val, &tcfg)?;
            let (bw, bc) = evaluate_phase(&net, &s.test)?;
            let mut last_net = net.clone();
            last_net.params = out.final_params;
            let (lw, lc) = evaluate_phase(&last_net, &s.test)?;
            let (secs, params) = (elapsed(), net.param_count());
            ArmResult {
                best: report(tag.clone(), bc.db(), Some(bw.db()), params, secs),
                last: report(format!("{tag}{FINAL_SUFFIX}"), lc.db(), Some(lw.db()), params, secs),
                arm: tag,
                model: AnyModel::Phase(net),
                log: out.log,
            }
        }
    };
    log::info!(
        "{experiment} seed {} bpd {} {}: {:.3} dB",
        job.seed,
        job.bpd,
        result.arm,
        result.best.nmse_db
    );
    Ok(result)
}

/// Train every arm for each seed and BPD. Arms at the same seed share the
/// dataset (seeded by `dataset.seed + seed`), the initialization seed and the
/// shuffling seed. Results are ordered by seed, BPD, then arm.
fn run_arms(experiment: &str, arms: &[Arm], cfg: &ComparisonConfig) -> Result<Comparison> {
    cfg.validate()?;
    let datasets = cfg
        .seeds
        .iter()
        .map(|&s| {
            let ds = generate_dataset(&DatasetConfig {
                seed: cfg.dataset.seed.wrapping_add(s),
                ..cfg.dataset.clone()
            })?;
            let solo = ds.truncate_users(1)?;
            Ok((Splits::new(&ds), Splits::new(&solo)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for (seed_index, &seed) in cfg.seeds.iter().enumerate() {
        for &bpd in &cfg.bpd_list {
            for arm in arms {
                jobs.push(Job {
                    seed_index,
                    seed,
                    bpd,
                    arm: arm.clone(),
                });
            }
        }
    }
    let arms = jobs
        .par_iter()
        .map(|j| run_arm(experiment, j, &datasets[j.seed_index], cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        experiment: experiment.into(),
        arms,
    })
}

pub fn run_comparison(suite: Suite, cfg: &ComparisonConfig) -> Result<Comparison> {
    run_arms(suite.name(), &suite.arms(cfg.bit_mode)?, cfg)
}

/// Train one configuration at every BPD of `cfg`; rows carry experiment
/// `sweep_bpd`. `cfg.bit_mode` is ignored in favor of the template's.
pub fn sweep_bpd(template: ModelTemplate, cfg: &ComparisonConfig) -> Result<Comparison> {
    let arm = template.arm(cfg.dataset.users_per_group)?;
    run_arms("sweep_bpd", &[arm], cfg)
}

/// Model tag of the mismatch rows for a fine-tuning sample count.
pub fn online_tag(n_samples: usize) -> String {
    format!("online-{n_samples}")
}

/// Fine-tune copies of a trained magnitude network on the first `n` samples
/// of a shifted training split for each `n` in `sizes` (0 is the untouched
/// model). Rows carry experiment `finetune_shifted` (NMSE on the shifted test
/// split) and `finetune_original` (NMSE on the original test split).
pub fn fine_tune_mismatch(
    net: &MagnitudeNet,
    original_test: &PlaneSet,
    shifted: &ChannelDataset,
    sizes: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<MetricsReport>> {
    let s = Splits::new(shifted);
    let bpd = net.cfg.feedback_bits as f64 / net.cfg.dims() as f64;
    let results = sizes
        .par_iter()
        .map(|&n| {
            let start = Instant::now();
            let mut m = net.clone();
            fine_tune(&mut m, &s.train, &s.val, n, cfg)?;
            let secs = if cfg.deterministic {
                0.0
            } else {
                start.elapsed().as_secs_f64()
            };
            let shifted_nmse = evaluate_magnitude(&m, &s.test, None)?;
            let original_nmse = evaluate_magnitude(&m, original_test, None)?;
            let row = |experiment: &str, v: Nmse| MetricsReport {
                experiment: experiment.into(),
                model: online_tag(n),
                bpd,
                nmse_db: v.db(),
                phase_nmse_db: None,
                ber: None,
                params: m.param_count(),
                seed: cfg.seed,
                seconds: secs,
            };
            Ok([
                row("finetune_shifted", shifted_nmse),
                row("finetune_original", original_nmse),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for [x, y] in results {
        a.push(x);
        b.push(y);
    }
    a.extend(b);
    Ok(a)
}

/// gnuplot script drawing BPD against NMSE (dB) for every model tag found in
/// `csv_files`, one curve per (file, model).
pub fn gnuplot_script(csv_files: &[PathBuf], output_png: &str) -> Result<String> {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 900,600\n");
    s.push_str(&format!("set output '{output_png}'\n"));
    s.push_str("set xlabel 'BPD'\nset ylabel 'NMSE (dB)'\nset key outside right\nset grid\n");
    let mut plots = Vec::new();
    for f in csv_files {
        let rows = super::metrics::read_reports(f)?;
        let mut tags: Vec<String> = Vec::new();
        for r in rows {
            if !tags.contains(&r.model) {
                tags.push(r.model);
            }
        }
        let path = f.display().to_string().replace('\'', "");
        for t in tags {
            plots.push(format!(
                "'{path}' using (strcol(2) eq '{t}' ? $3 : 1/0):4 skip 1 with linespoints title '{t}'"
            ));
        }
    }
    if plots.is_empty() {
        return Err(Error::invalid("no rows to plot"));
    }
    s.push_str("plot ");
    s.push_str(&plots.join(", \\\n     "));
    s.push('\n');
    Ok(s)
}
