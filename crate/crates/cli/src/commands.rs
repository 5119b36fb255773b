use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use hthc_core::baselines::{reference_scd, st_train};
use hthc_core::coordinator::{
    suboptimality, train, BatchSize, StopConfig, StopReason, TrainConfig, TrainResult,
};
use hthc_core::data::{
    load_binary, load_libsvm, save_binary, synth_classification, synth_lasso, write_libsvm,
    DataMatrix, Dataset,
};
use hthc_core::gap_task::GapTaskConfig;
use hthc_core::glm::{ModelKind, Problem};
use hthc_core::solver::{SolverConfig, SyncMode, DEFAULT_STRIPE_LEN};
use hthc_core::trace::write_trace_csv;
use hthc_core::tuner::{choose_parameters, profile_tasks, ProfileGrid, TimingTable, TunedConfig};
use hthc_core::Scalar;

use crate::args::*;

pub const EXIT_OK: u8 = 0;
pub const EXIT_NOT_CONVERGED: u8 = 2;

pub fn run(command: Command) -> Result<u8> {
    match command {
        Command::Train(a) => match a.problem.precision {
            Precision::F32 => cmd_train::<f32>(&a),
            Precision::F64 => cmd_train::<f64>(&a),
        },
        Command::Compare(a) => match a.problem.precision {
            Precision::F32 => cmd_compare::<f32>(&a),
            Precision::F64 => cmd_compare::<f64>(&a),
        },
        Command::Profile(a) => cmd_profile(&a),
        Command::Tune(a) => cmd_tune(&a),
        Command::Convert(a) => match a.precision {
            Precision::F32 => cmd_convert::<f32>(&a),
            Precision::F64 => cmd_convert::<f64>(&a),
        },
        Command::Gen(a) => cmd_gen(&a),
    }
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Lasso => ModelKind::Lasso,
            Model::Svm => ModelKind::Svm,
        }
    }
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Hthc => "hthc",
            Mode::St => "st",
        }
    }
}

impl Precision {
    fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

pub fn labels_path(data: &Path) -> PathBuf {
    let mut s = OsString::from(data.as_os_str());
    s.push(".labels");
    s.into()
}

fn load_dataset<F: Scalar>(p: &ProblemArgs) -> Result<Dataset<F>> {
    let (samples, labels) = match p.format {
        Format::Libsvm => {
            let d = load_libsvm::<F>(&p.data, true)
                .with_context(|| format!("reading {}", p.data.display()))?;
            (d.matrix, d.labels)
        }
        Format::Bin => {
            let m = load_binary::<F>(&p.data).with_context(|| format!("reading {}", p.data.display()))?;
            let lp = labels_path(&p.data);
            let l = load_binary::<F>(&lp).with_context(|| format!("reading labels {}", lp.display()))?;
            ensure!(l.d() == 1, "label file {} must hold a single row", lp.display());
            (m, l.values().to_vec())
        }
    };
    Ok(Dataset::from_samples(p.model.into(), samples, labels)?)
}

fn problem_for<F: Scalar>(p: &ProblemArgs, ds: &Dataset<F>) -> Result<Problem> {
    let n = ds.matrix.n();
    Ok(match p.model {
        Model::Lasso => Problem::lasso(p.lambda, n, &ds.targets)?,
        Model::Svm => Problem::svm(p.lambda, n)?,
    })
}

fn default_cores() -> usize {
    std::thread::available_parallelism().map_or(1, |c| c.get()).max(2)
}

/// Builds the training configuration; with `--auto-tune` the batch size and
/// worker counts come from the timing table.
pub fn train_config(s: &SolveArgs, n: usize, d: usize) -> Result<(TrainConfig, Option<TunedConfig>)> {
    let mode = match s.sync {
        Sync::Atomic => SyncMode::Atomic,
        Sync::Wild => SyncMode::Wild,
    };
    let stop = StopConfig {
        tol: s.tol,
        max_epochs: s.max_epochs,
        timeout_s: s.timeout_s,
        gap_every: s.gap_every,
        check_consistency: false,
    };
    let (batch, t_a, t_b, v_b, tuned) = match &s.auto_tune {
        Some(path) => {
            let table = TimingTable::load(path).with_context(|| format!("reading timing table {}", path.display()))?;
            let tuned = choose_parameters(&table, n, d, s.r_tilde, s.cores.unwrap_or_else(default_cores))?;
            if !tuned.feasible {
                log::warn!(
                    "no configuration reaches r_tilde={}; using the best coverage {:.3}",
                    s.r_tilde,
                    tuned.predicted_coverage
                );
            }
            (BatchSize::Count(tuned.m), tuned.t_a, tuned.t_b, tuned.v_b, Some(tuned))
        }
        None => {
            let batch = match (s.batch_size, s.batch_frac) {
                (Some(m), _) => BatchSize::Count(m),
                (None, Some(f)) => BatchSize::Fraction(f),
                (None, None) => TrainConfig::default().batch,
            };
            (batch, s.ta.unwrap_or(1), s.tb.unwrap_or(1), s.vb.unwrap_or(1), None)
        }
    };
    let mut cfg = TrainConfig {
        batch,
        r_tilde: s.r_tilde,
        seed: s.seed,
        solver: SolverConfig {
            t_b,
            v_b,
            mode,
            stripe_len: DEFAULT_STRIPE_LEN,
        },
        gap: GapTaskConfig {
            t_a,
            seed: s.seed,
            quota: None,
        },
        stop,
        instrument: false,
    };
    cfg.validate()?;
    // echo the gap settings that actually run, including an implied quota
    cfg.gap = cfg.effective_gap(n);
    Ok((cfg, tuned))
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub model: ModelKind,
    pub mode: &'static str,
    pub sync: SyncMode,
    pub precision: &'static str,
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub config: TrainConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuned: Option<TunedConfig>,
    pub epochs: usize,
    pub wall_s: f64,
    pub final_gap: f64,
    pub final_objective: f64,
    pub converged: bool,
    pub stop: StopReason,
    #[serde(rename = "coverage_A")]
    pub coverage_a: Vec<f64>,
}

fn solve<F: Scalar>(ds: &Dataset<F>, problem: &Problem, cfg: &TrainConfig, mode: Mode) -> Result<TrainResult<F>> {
    let res = match mode {
        Mode::Hthc => train(&ds.matrix, &ds.targets, problem, cfg),
        Mode::St => st_train(&ds.matrix, &ds.targets, problem, &cfg.solver, &cfg.stop, cfg.seed),
    };
    res.with_context(|| {
        format!(
            "{} training failed (t_b={}, v_b={}, sync={})",
            mode.name(),
            cfg.solver.t_b,
            cfg.solver.v_b,
            cfg.solver.mode
        )
    })
}

fn summarize<F: Scalar>(
    p: &ProblemArgs,
    ds: &Dataset<F>,
    mode: Mode,
    cfg: TrainConfig,
    tuned: Option<TunedConfig>,
    res: &TrainResult<F>,
) -> Summary {
    Summary {
        model: p.model.into(),
        mode: mode.name(),
        sync: cfg.solver.mode,
        precision: p.precision.name(),
        n: ds.matrix.n(),
        d: ds.matrix.d(),
        lambda: p.lambda,
        config: cfg,
        tuned,
        epochs: res.epochs(),
        wall_s: res.wall_s,
        final_gap: res.final_gap,
        final_objective: res.final_objective,
        converged: res.converged(),
        stop: res.stop,
        coverage_a: res.coverage_a(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn cmd_train<F: Scalar>(a: &TrainArgs) -> Result<u8> {
    let ds = load_dataset::<F>(&a.problem)?;
    let problem = problem_for(&a.problem, &ds)?;
    let (cfg, tuned) = train_config(&a.solve, ds.matrix.n(), ds.matrix.d())?;
    log::info!("training {} on n={} d={}", a.mode.name(), ds.matrix.n(), ds.matrix.d());
    let res = solve(&ds, &problem, &cfg, a.mode)?;

    if let Some(path) = &a.trace {
        let mut out = create(path)?;
        write_trace_csv(&mut out, &res.trace, true)?;
        out.flush()?;
    }
    let summary = summarize(&a.problem, &ds, a.mode, cfg, tuned, &res);
    let json = serde_json::to_string_pretty(&summary)?;
    match &a.summary {
        Some(path) => std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(if res.converged() { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn cmd_compare<F: Scalar>(a: &CompareArgs) -> Result<u8> {
    ensure!(!a.modes.is_empty(), "no modes to compare");
    let ds = load_dataset::<F>(&a.problem)?;
    let problem = problem_for(&a.problem, &ds)?;
    let (cfg, tuned) = train_config(&a.solve, ds.matrix.n(), ds.matrix.d())?;

    let f_star = if a.no_reference {
        None
    } else {
        let reference = reference_scd(&ds.matrix, &ds.targets, &problem, 1e-9, 100_000)?;
        if !reference.converged {
            log::warn!("reference run stopped at gap {:e}; suboptimality is approximate", reference.gap);
        }
        Some(reference.f_star)
    };

    let mut out = create(&a.trace)?;
    let mut summaries = Vec::new();
    let mut all_converged = true;
    for (k, &mode) in a.modes.iter().enumerate() {
        let mut res = solve(&ds, &problem, &cfg, mode)?;
        if let Some(f) = f_star {
            suboptimality(&mut res.trace, f)?;
        }
        write_trace_csv(&mut out, &res.trace, k == 0)?;
        all_converged &= res.converged();
        summaries.push(summarize(&a.problem, &ds, mode, cfg, tuned, &res));
    }
    out.flush()?;
    println!("{}", serde_json::to_string_pretty(&summaries)?);
    Ok(if all_converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let Some((a, b)) = s.split_once(['x', 'X']) else {
        bail!("expected T_BxV_B, got {s:?}");
    };
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn cmd_profile(a: &ProfileArgs) -> Result<u8> {
    let grid = ProfileGrid {
        d: a.d_grid.clone(),
        a_workers: a.ta_grid.clone(),
        b_workers: a.tb_grid.iter().map(|s| parse_pair(s)).collect::<Result<_>>()?,
        reps: a.reps,
        n: a.n,
    };
    let table = match a.precision {
        Precision::F32 => profile_tasks::<f32>(&grid)?,
        Precision::F64 => profile_tasks::<f64>(&grid)?,
    };
    table.save(&a.out)?;
    for e in &table.a {
        eprintln!("A T_A={} d={} {:.3e} s/update", e.t_a_workers, e.d, e.sec_per_update);
    }
    for e in &table.b {
        eprintln!("B T_B={} V_B={} d={} {:.3e} s/update", e.t_b, e.v_b, e.d, e.sec_per_update);
    }
    Ok(EXIT_OK)
}

fn cmd_tune(a: &TuneArgs) -> Result<u8> {
    let table = TimingTable::load(&a.table).with_context(|| format!("reading {}", a.table.display()))?;
    let tuned = choose_parameters(&table, a.n, a.d, a.r_tilde, a.cores.unwrap_or_else(default_cores))?;
    if !tuned.feasible {
        log::warn!("constraint cannot be met; reporting the best-coverage configuration");
    }
    println!("{}", serde_json::to_string_pretty(&tuned)?);
    Ok(EXIT_OK)
}

fn cmd_convert<F: Scalar>(a: &ConvertArgs) -> Result<u8> {
    let data = load_libsvm::<F>(&a.input, true).with_context(|| format!("reading {}", a.input.display()))?;
    save_binary(&data.matrix, &a.output)?;
    let labels = DataMatrix::new(1, data.labels.len(), data.labels)?;
    save_binary(&labels, labels_path(&a.output))?;
    eprintln!(
        "wrote {} samples x {} features to {}",
        data.matrix.n(),
        data.matrix.d(),
        a.output.display()
    );
    Ok(EXIT_OK)
}

fn cmd_gen(a: &GenArgs) -> Result<u8> {
    let mut out = create(&a.out)?;
    match a.model {
        Model::Lasso => {
            let s = synth_lasso::<f64>(a.features, a.samples, a.support, a.noise, a.seed)?;
            write_libsvm(&mut out, &s.matrix.transpose(), &s.targets)?;
        }
        Model::Svm => {
            let (m, labels) = synth_classification::<f64>(a.samples, a.features, a.noise, a.seed)?;
            write_libsvm(&mut out, &m, &labels)?;
        }
    }
    out.flush()?;
    Ok(EXIT_OK)
}
