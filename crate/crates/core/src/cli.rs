//! Command-line driver: one task per module, reports and CSV tables.
//!
//! Exit status is 0 when every asserted check passes, 2 when a check fails
//! and 1 on input errors. All files are written at the end of a run.

use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::json;
use thiserror::Error;

use crate::coeff_file::{matrix_to_json, CoeffFile, FileError, Representation};
use crate::coeffs::{
    add_generators, check_ito_unitarity_tol, check_strat_selfadjoint_tol, compare_diffusive_sum,
    explicit_choices, hp_from_ito_tol, ito_to_strat, printed_inverse_g00, strat_to_ito, CoeffError, CoefficientBlock,
    GaugeParameter, TOL_ALGEBRA, TOL_SERIES,
};
use crate::config::{read_config, Experiment, RawConfig, RunConfig, Task};
use crate::flow::{flow_report, FlowError};
use crate::linalg::{c, fro, identity, pauli, Mat, I};
use crate::report::Report;
use crate::toyfock::{
    convergence_sweep, default_test_functions, default_vectors, SweepSetup, ToyFockError, HALVING_RATIO,
};
use crate::wongzakai::{wz_convergence, WzError, WzSetup, WZ_HALVING_RATIO};

#[derive(Debug, Parser)]
#[command(name = "qstoch", version, about = "Quantum stochastic generator calculus")]
pub struct Cli {
    /// Task to run; may instead come from the config file.
    #[arg(value_enum)]
    pub task: Option<Task>,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Coefficient file (repeat for `add`).
    #[arg(long = "input", short = 'i')]
    pub inputs: Vec<PathBuf>,
    /// Gauge parameter as `re,im`.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub kappa: Option<[f64; 2]>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// First seed of the `wz` sweep.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of seeds of the `wz` sweep.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub dt_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub lambda_list: Option<Vec<f64>>,
    /// Algebraic tolerance for the coefficient checks.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Built-in model for `simulate`.
    #[arg(long, value_enum)]
    pub experiment: Option<Experiment>,
    /// Final time of `simulate` and `wz`.
    #[arg(long)]
    pub t_end: Option<f64>,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => Ok([
            a.parse().map_err(|e| format!("{a}: {e}"))?,
            b.parse().map_err(|e| format!("{b}: {e}"))?,
        ]),
        _ => Err(format!("expected <re>,<im>, got {s}")),
    }
}

impl Cli {
    pub fn overrides(&self) -> RawConfig {
        RawConfig {
            task: self.task,
            inputs: self.inputs.clone(),
            kappa: self.kappa,
            out: self.out.clone(),
            tol: self.tol,
            dt_list: self.dt_list.clone(),
            lambda_list: self.lambda_list.clone(),
            seed: self.seed,
            seeds: self.seeds,
            t_end: self.t_end,
            experiment: self.experiment,
        }
    }

    /// Config file values overlaid with flags, then validated.
    pub fn resolve(&self) -> Result<RunConfig, FileError> {
        match &self.config {
            Some(path) => {
                let (raw, text) = read_config(path)?;
                let merged = raw.overlay(self.overrides());
                RunConfig::from_raw(merged, Some(&text)).map_err(|e| FileError::schema(path, e))
            }
            None => RunConfig::from_raw(self.overrides(), None).map_err(|e| FileError::schema(Path::new("<flags>"), e)),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    File(#[from] FileError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Simulation(#[from] ToyFockError),
    #[error(transparent)]
    ColoredNoise(#[from] WzError),
    #[error("{0}")]
    Input(String),
    #[error("writing {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_CHECK: i32 = 2;

/// A file to be written under the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub artifacts: Vec<Artifact>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.passed {
            EXIT_OK
        } else {
            EXIT_CHECK
        }
    }
}

fn artifact(name: &str, contents: String) -> Artifact {
    Artifact {
        name: name.to_string(),
        contents,
    }
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values serialize") + "\n"
}

fn load(path: &Path) -> Result<CoeffFile, RunError> {
    let f = CoeffFile::from_path(path)?;
    if f.is_super {
        return Err(RunError::Input(format!(
            "{}: superoperator files are not accepted by this task",
            path.display()
        )));
    }
    Ok(f)
}

fn kappa_for(cfg: &RunConfig, file: &CoeffFile) -> GaugeParameter {
    cfg.kappa.unwrap_or(file.kappa)
}

fn tol(cfg: &RunConfig) -> f64 {
    cfg.tol.unwrap_or(TOL_ALGEBRA)
}

/// Itô coefficients of a file, converting from Stratonovich form if needed.
fn as_ito(file: &CoeffFile, kappa: GaugeParameter) -> Result<CoefficientBlock, CoeffError> {
    match file.representation {
        Representation::Ito => Ok(file.coefficients.clone()),
        Representation::Stratonovich => strat_to_ito(&file.coefficients, kappa),
    }
}

fn as_strat(file: &CoeffFile, kappa: GaugeParameter) -> Result<CoefficientBlock, CoeffError> {
    match file.representation {
        Representation::Stratonovich => Ok(file.coefficients.clone()),
        Representation::Ito => ito_to_strat(&file.coefficients, kappa),
    }
}

pub fn run(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let mut report = Report::new(format!("{:?}", cfg.task).to_lowercase());
    report.set("config", cfg);
    let artifacts = match cfg.task {
        Task::Convert => run_convert(cfg, &mut report)?,
        Task::Check => run_check(cfg, &mut report)?,
        Task::Hp => run_hp(cfg, &mut report)?,
        Task::Add => run_add(cfg, &mut report)?,
        Task::Flow => run_flow(cfg, &mut report)?,
        Task::Simulate => run_simulate(cfg, &mut report)?,
        Task::Wz => run_wz(cfg, &mut report)?,
    };
    Ok(Outcome { report, artifacts })
}

fn run_convert(cfg: &RunConfig, report: &mut Report) -> Result<Vec<Artifact>, RunError> {
    let file = load(&cfg.inputs[0])?;
    let kappa = kappa_for(cfg, &file);
    let x = &file.coefficients;
    let k = kappa.value();
    let nd = x.dim() * x.channels();
    let (converted, back, duality) = match file.representation {
        Representation::Stratonovich => {
            let g = strat_to_ito(x, kappa)?;
            let back = ito_to_strat(&g, kappa)?;
            let duality = (identity(nd) - g.channel_block() * (I * k)) * (identity(nd) + x.channel_block() * (I * k));
            (g, back, duality)
        }
        Representation::Ito => {
            let e = ito_to_strat(x, kappa)?;
            let back = strat_to_ito(&e, kappa)?;
            let duality = (identity(nd) - x.channel_block() * (I * k)) * (identity(nd) + e.channel_block() * (I * k));
            (e, back, duality)
        }
    };
    let strat = match file.representation {
        Representation::Stratonovich => x,
        Representation::Ito => &converted,
    };
    let g = match file.representation {
        Representation::Stratonovich => &converted,
        Representation::Ito => x,
    };
    let printed_dev = fro(&(printed_inverse_g00(strat, kappa)? - g.block(0, 0)));
    report.set("printed_g00_deviation", printed_dev);
    if printed_dev > tol(cfg) {
        report.note(format!(
            "printed inverse-table G00 (+iκ correction) deviates from the compact form by {printed_dev:.3e}"
        ));
    }
    let scale = 1.0 + x.max_block_norm();
    report.check("roundtrip", back.distance(x) / scale, tol(cfg));
    report.check("resolvent duality", fro(&(duality - identity(nd))), TOL_SERIES * scale);
    report.set("kappa", kappa);
    report.set("output_representation", file.representation.other());
    let out = CoeffFile::new(file.representation.other(), kappa, converted);
    Ok(vec![artifact("converted.json", out.to_string_pretty())])
}

fn run_check(cfg: &RunConfig, report: &mut Report) -> Result<Vec<Artifact>, RunError> {
    let t = tol(cfg);
    for path in &cfg.inputs {
        let file = load(path)?;
        let name = path.display().to_string();
        match file.representation {
            Representation::Ito => {
                report.conversion(&format!("{name} unitarity"), &check_ito_unitarity_tol(&file.coefficients, t));
            }
            Representation::Stratonovich => {
                let kappa = kappa_for(cfg, &file);
                report.conversion(
                    &format!("{name} self-adjoint"),
                    &check_strat_selfadjoint_tol(&file.coefficients, t),
                );
                let g = strat_to_ito(&file.coefficients, kappa)?;
                report.conversion(&format!("{name} unitarity"), &check_ito_unitarity_tol(&g, t));
            }
        }
    }
    Ok(Vec::new())
}

fn run_hp(cfg: &RunConfig, report: &mut Report) -> Result<Vec<Artifact>, RunError> {
    let file = load(&cfg.inputs[0])?;
    let kappa = kappa_for(cfg, &file);
    let t = tol(cfg);
    let g = as_ito(&file, kappa)?;
    report.set("kappa", kappa);
    let (hp, rep) = match hp_from_ito_tol(&g, t) {
        Ok(pair) => pair,
        Err(CoeffError::UnitarityViolated { residual }) => {
            report.check("unitarity", residual, t);
            report.note("coefficients admit no Hudson–Parthasarathy triple");
            return Ok(Vec::new());
        }
        Err(e) => return Err(e.into()),
    };
    report.conversion("hp", &rep);
    let mut doc = json!({
        "W": matrix_to_json(hp.w()),
        "K": matrix_to_json(hp.k()),
        "H": matrix_to_json(hp.h()),
    });
    if file.representation == Representation::Stratonovich {
        let ex = explicit_choices(&file.coefficients, kappa)?;
        report.check("Cayley W", fro(&(&ex.w - hp.w())), t);
        report.check("explicit K", fro(&(&ex.k - hp.k())), t);
        let printed_dev = fro(&(&ex.h_printed - hp.h()));
        let printed_herm = fro(&(&ex.h_printed - ex.h_printed.adjoint()));
        report.set("printed_h_deviation", printed_dev);
        report.set("printed_h_antihermitian_norm", printed_herm);
        if printed_dev > t {
            report.note(format!(
                "printed H formula deviates from the self-adjoint part of G00 by {printed_dev:.3e}"
            ));
        }
        doc["H_printed"] = matrix_to_json(&ex.h_printed);
    }
    Ok(vec![artifact("hp.json", pretty(&doc))])
}

fn run_add(cfg: &RunConfig, report: &mut Report) -> Result<Vec<Artifact>, RunError> {
    let files: Vec<CoeffFile> = cfg.inputs.iter().map(|p| load(p)).collect::<Result<_, _>>()?;
    let kappa = cfg.kappa.unwrap_or(files[0].kappa);
    let terms: Vec<CoefficientBlock> = files.iter().map(|f| as_strat(f, kappa)).collect::<Result<_, _>>()?;
    let t = tol(cfg);
    let sum = add_generators(&terms, kappa)?;
    let sa = check_strat_selfadjoint_tol(&sum.strat, t);
    report.conversion("sum self-adjoint", &sa);
    if sa.passed {
        report.conversion("sum unitarity", &check_ito_unitarity_tol(&sum.ito, t));
    }
    if let Ok(cmp) = compare_diffusive_sum(&terms, kappa) {
        report.check("K additivity", cmp.k_residual, t);
        report.check("H general rule", cmp.general_rule_residual, t);
        report.set("diffusive_comparison", &cmp);
        report.note(format!(
            "per-summand H formula deviates by {:.3e}; omitted cross terms have norm {:.3e}",
            cmp.h_deviation, cmp.cross_term_norm
        ));
    }
    Ok(vec![
        artifact("sum_strat.json", CoeffFile::new(Representation::Stratonovich, kappa, sum.strat).to_string_pretty()),
        artifact("sum_ito.json", CoeffFile::new(Representation::Ito, kappa, sum.ito).to_string_pretty()),
    ])
}

fn run_flow(cfg: &RunConfig, report: &mut Report) -> Result<Vec<Artifact>, RunError> {
    let file = load(&cfg.inputs[0])?;
    let kappa = kappa_for(cfg, &file);
    let g = as_ito(&file, kappa)?;
    let t = tol(cfg);
    report.set("kappa", kappa);
    match flow_report(&g, t) {
        Ok(fr) => {
            report.check("unital", fr.unital_residual, t);
            report.check("reality", fr.reality_residual, t);
            report.check("structure equations", fr.structure_residual, t);
            report.check("Lindblad form", fr.lindblad_residual, t);
            report.check("differential oracle", fr.oracle_residual, t);
        }
        Err(FlowError::UnitarityViolated { residual }) | Err(FlowError::Coeff(CoeffError::UnitarityViolated { residual })) => {
            report.check("unitarity", residual, t);
        }
        Err(e) => return Err(e.into()),
    }
    Ok(Vec::new())
}

fn builtin_experiment(exp: Experiment) -> CoefficientBlock {
    match exp {
        Experiment::Diffusion => CoefficientBlock::zeros(2, 1)
            .and_then(|e| e.with(0, 0, pauli::z()))
            .and_then(|e| e.with(1, 0, pauli::minus()))
            .and_then(|e| e.with(0, 1, pauli::plus())),
        Experiment::EdVsSd => CoefficientBlock::zeros(1, 1)
            .and_then(|e| e.with(1, 1, Mat::from_element(1, 1, c(std::f64::consts::FRAC_PI_2, 0.0)))),
    }
    .expect("built-in coefficients are well formed")
}

fn c64_json(z: crate::linalg::C64) -> serde_json::Value {
    json!([z.re, z.im])
}

fn run_simulate(cfg: &RunConfig, report: &mut Report) -> Result<Vec<Artifact>, RunError> {
    let tf = default_test_functions(cfg.t_end)?;
    let setup = match cfg.experiment {
        Some(exp) => {
            let e = builtin_experiment(exp);
            let (u, v) = match exp {
                Experiment::Diffusion => (vec![c(0.6, 0.0), c(0.0, 0.8)], vec![c(0.0, 0.0), c(1.0, 0.0)]),
                Experiment::EdVsSd => (vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]),
            };
            SweepSetup::from_strat(e, cfg.kappa.unwrap_or_default(), tf, u, v)?
        }
        None => {
            let file = load(&cfg.inputs[0])?;
            let kappa = kappa_for(cfg, &file);
            let (u, v) = default_vectors(file.coefficients.dim());
            match file.representation {
                Representation::Ito => SweepSetup::from_ito(file.coefficients, kappa, tf, u, v)?,
                Representation::Stratonovich => SweepSetup::from_strat(file.coefficients, kappa, tf, u, v)?,
            }
        }
    };
    let r = convergence_sweep(&setup, &cfg.dt_list)?;

    let worst_ratio = |errs: Vec<f64>| -> f64 {
        let k = errs.len();
        errs.windows(2).skip(k.saturating_sub(4)).map(|w| w[1] / w[0]).fold(0.0, f64::max)
    };
    let ito_errs: Vec<f64> = r.rows.iter().map(|x| x.abs_error_ito).collect();
    let ed_errs: Vec<f64> = r.rows.iter().map(|x| x.abs_error_ed_target).collect();
    report.check_with("ITO_EULER halving ratio", worst_ratio(ito_errs), HALVING_RATIO, r.ito_converging);
    report.check_with("SLOT_EXP halving ratio", worst_ratio(ed_errs), HALVING_RATIO, r.slot_converging_to_ed);
    let finest = r.rows.last().expect("at least two rows");
    let scheme_err = finest.abs_error_ito.max(finest.abs_error_ed_target);
    let limits_gap = (r.extrapolated_ito - r.extrapolated_slot).norm();
    if r.target_gap <= 1e-8 {
        report.check("extrapolated limits agree", limits_gap, 3.0 * scheme_err);
    } else {
        report.check_with(
            "SD target separated",
            r.extrapolated_error_sd,
            10.0 * r.extrapolated_error_ed,
            r.extrapolated_error_sd > 10.0 * r.extrapolated_error_ed,
        );
    }
    report.set("sweep", &r);

    let mut csv = csv::Writer::from_writer(Vec::new());
    csv.write_record(["dt", "abs_error_ito", "abs_error_ed_target", "abs_error_sd_target"])
        .and_then(|_| {
            r.rows.iter().try_for_each(|row| {
                csv.write_record(&[
                    row.dt.to_string(),
                    format!("{:e}", row.abs_error_ito),
                    format!("{:e}", row.abs_error_ed_target),
                    format!("{:e}", row.abs_error_sd_target),
                ])
            })
        })
        .map_err(|e| RunError::Input(e.to_string()))?;
    let csv_text = String::from_utf8(csv.into_inner().map_err(|e| RunError::Input(e.to_string()))?)
        .expect("CSV output is UTF-8");

    let sidecar = json!({
        "config": cfg,
        "t_end": cfg.t_end,
        "dt_list": cfg.dt_list,
        "u": setup.u.iter().map(|z| c64_json(*z)).collect::<Vec<_>>(),
        "v": setup.v.iter().map(|z| c64_json(*z)).collect::<Vec<_>>(),
        "oracle_sd": c64_json(r.oracle_sd),
        "oracle_ed": c64_json(r.oracle_ed),
        "extrapolated_ito": c64_json(r.extrapolated_ito),
        "extrapolated_slot": c64_json(r.extrapolated_slot),
        "strat": CoeffFile::new(Representation::Stratonovich, cfg.kappa.unwrap_or_default(), setup.strat.clone()).to_json(),
        "ito_sd": CoeffFile::new(Representation::Ito, cfg.kappa.unwrap_or_default(), setup.ito_sd.clone()).to_json(),
        "ito_ed": CoeffFile::new(Representation::Ito, cfg.kappa.unwrap_or_default(), setup.ito_ed.clone()).to_json(),
    });
    Ok(vec![artifact("simulate.csv", csv_text), artifact("simulate.json", pretty(&sidecar))])
}

/// `V` and `H` from a Stratonovich file with `E₁₁ = 0` and `E₁₀ = E₀₁`.
fn dipole_from_file(file: &CoeffFile) -> Result<(Mat, Mat), RunError> {
    let e = &file.coefficients;
    if file.representation != Representation::Stratonovich || e.channels() != 1 {
        return Err(RunError::Input("wz takes a single-channel Stratonovich file".into()));
    }
    if fro(e.block(1, 1)) != 0.0 {
        return Err(RunError::Input("wz needs E11 = 0 (classical noise)".into()));
    }
    if fro(&(e.block(1, 0) - e.block(0, 1))) > TOL_ALGEBRA {
        return Err(RunError::Input("wz needs E10 = E01 (one real noise)".into()));
    }
    Ok((e.block(1, 0).clone(), e.block(0, 0).clone()))
}

fn run_wz(cfg: &RunConfig, report: &mut Report) -> Result<Vec<Artifact>, RunError> {
    let (v, h) = match cfg.inputs.first() {
        Some(p) => dipole_from_file(&load(p)?)?,
        None => (pauli::x(), pauli::z()),
    };
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|k| cfg.seed.wrapping_add(k)).collect();
    let setup = WzSetup::new(cfg.t_end, cfg.lambda_list.clone(), seeds.clone());
    let r = wz_convergence(&v, &h, &setup)?;

    let means: Vec<f64> = r.rows.iter().map(|x| x.mean_err).collect();
    let worst_step = means.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    report.check_with("monotone mean error", worst_step, 0.0, r.monotone);
    let k = r.ratios.len();
    let last = r.ratios[k.saturating_sub(3)..].iter().copied().fold(0.0, f64::max);
    report.check_with("halving ratio", last, WZ_HALVING_RATIO, r.converging);
    report.set("rows", &r.rows);
    report.set("ratios", &r.ratios);

    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut write = || -> Result<(), csv::Error> {
        csv.write_record(["lambda", "mean_err", "max_err", "n_seeds"])?;
        for row in &r.rows {
            csv.write_record(&[
                row.lambda.to_string(),
                format!("{:e}", row.mean_err),
                format!("{:e}", row.max_err),
                row.n_seeds.to_string(),
            ])?;
        }
        Ok(())
    };
    write().map_err(|e| RunError::Input(e.to_string()))?;
    let csv_text = String::from_utf8(csv.into_inner().map_err(|e| RunError::Input(e.to_string()))?)
        .expect("CSV output is UTF-8");
    let sidecar = json!({
        "config": cfg,
        "V": matrix_to_json(&v),
        "H": matrix_to_json(&h),
        "T": cfg.t_end,
        "dt_path": r.dt_path,
        "dt_ode": r.dt_ode,
        "lambdas": cfg.lambda_list,
        "seeds": seeds,
        "reference": setup.reference,
    });
    Ok(vec![artifact("wz.csv", csv_text), artifact("wz.json", pretty(&sidecar))])
}

/// Writes the artifacts, `report.txt`, `report.json` and `run_meta.json`.
///
/// `report.json` holds no timestamp, so identical runs produce identical
/// reports; wall-clock data goes to `run_meta.json`.
pub fn write_outcome(out: &Path, outcome: &Outcome) -> Result<(), RunError> {
    let write = |name: &str, contents: &str| -> Result<(), RunError> {
        let path = out.join(name);
        std::fs::write(&path, contents).map_err(|source| RunError::Write { path, source })
    };
    std::fs::create_dir_all(out).map_err(|source| RunError::Write {
        path: out.to_path_buf(),
        source,
    })?;
    for a in &outcome.artifacts {
        write(&a.name, &a.contents)?;
    }
    write("report.txt", &outcome.report.to_text())?;
    write("report.json", &outcome.report.to_json())?;
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0);
    let meta = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp_unix": now,
        "threads": rayon::current_num_threads(),
    });
    write("run_meta.json", &pretty(&meta))
}

/// Caps the global thread pool from `QSTOCH_THREADS` when it is set.
pub fn configure_threads() -> Result<(), String> {
    match std::env::var("QSTOCH_THREADS") {
        Ok(s) => {
            let n: usize = s
                .trim()
                .parse()
                .map_err(|_| format!("QSTOCH_THREADS must be a positive integer, got {s:?}"))?;
            if n == 0 {
                return Err("QSTOCH_THREADS must be at least 1".into());
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| e.to_string())
        }
        Err(_) => Ok(()),
    }
}

/// Full command-line entry point; returns the process exit status.
pub fn main_with(cli: Cli) -> i32 {
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_INPUT;
    }
    let cfg = match cli.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let outcome = match run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    if let Err(e) = write_outcome(&cfg.out, &outcome) {
        eprintln!("error: {e}");
        return EXIT_INPUT;
    }
    print!("{}", outcome.report.to_text());
    for f in outcome.report.failures() {
        eprintln!(
            "check failed: {} (residual {:e} > tolerance {:e})",
            f.name, f.residual, f.tolerance
        );
    }
    outcome.exit_code()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_pair_parsing() {
        assert_eq!(parse_pair("0.5,-1").unwrap(), [0.5, -1.0]);
        assert!(parse_pair("0.5").is_err());
        assert!(parse_pair("a,b").is_err());
    }

    #[test]
    fn builtin_experiments_are_self_adjoint() {
        for exp in [Experiment::Diffusion, Experiment::EdVsSd] {
            assert!(crate::coeffs::check_strat_selfadjoint(&builtin_experiment(exp)).passed);
        }
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "qstoch", "wz", "--kappa", "0.5,-0.3", "--lambda-list", "0.1,0.05", "--seeds", "4",
        ])
        .unwrap();
        let cfg = cli.resolve().unwrap();
        assert_eq!(cfg.task, Task::Wz);
        assert_eq!(cfg.lambda_list, vec![0.1, 0.05]);
        assert_eq!(cfg.kappa.unwrap().imag(), -0.3);
    }
}
