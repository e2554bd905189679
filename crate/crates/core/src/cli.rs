//! `sobolev-lab` command line.
//!
//! Every report is a JSON object `{command, config, result}` whose `config`
//! lists all effective settings, defaults included. Exit codes: 0 success,
//! 1 numerical failure, 2 invalid arguments or potential spec, 3 the
//! hypotheses of the perturbation bound do not hold for the input.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::beckner::{self, Mode, Objective};
use crate::error::{Error, Result};
use crate::measure::{Domain, GridConfig, GridFunction, DEFAULT_TAIL_TOL};
use crate::moments::{self, Suite};
use crate::perturbation::{self, DEFAULT_P_LIST, DEFAULT_SIGMA_LIST};
use crate::potential::PotentialSpec;
use crate::report::{format_f64, to_json_string};
use crate::spectral;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;

/// Directory for exported files given by relative path.
pub const OUT_DIR_ENV: &str = "SOBOLEV_LAB_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "sobolev-lab", version, about = "Poincaré, Beckner and log-Sobolev constants of 1-D measures e^{-V}dx")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Number of grid nodes.
    #[arg(long = "grid-n", default_value_t = 4001)]
    grid_n: usize,
    /// Domain `a,b`; automatic when omitted.
    #[arg(long, value_parser = parse_domain)]
    domain: Option<(f64, f64)>,
    /// Largest mass allowed outside the domain.
    #[arg(long = "tail-tol", default_value_t = DEFAULT_TAIL_TOL)]
    tail_tol: f64,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,
}

impl GridArgs {
    fn config(&self) -> GridConfig {
        GridConfig {
            n: self.grid_n,
            domain: self.domain.map_or(Domain::Auto, |(a, b)| Domain::Interval(a, b)),
            tail_tol: self.tail_tol,
        }
    }

    fn describe(&self) -> Value {
        json!({
            "grid_n": self.grid_n,
            "domain": self.domain.map_or(json!("auto"), |(a, b)| json!([a, b])),
            "tail_tol": self.tail_tol,
            "out": self.out,
        })
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Poincaré constant from the spectral gap.
    Gap {
        #[arg(long, value_parser = parse_potential)]
        potential: PotentialSpec,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Variational lower bound on the Beckner constant C_p.
    Cp {
        #[arg(long, value_parser = parse_potential)]
        potential: PotentialSpec,
        #[arg(long)]
        p: f64,
        #[arg(long, value_enum, default_value_t = ModeArg::Unrestricted)]
        mode: ModeArg,
        /// Write the maximizing function as CSV.
        #[arg(long)]
        witness: Option<PathBuf>,
        #[arg(long = "out-dir", env = OUT_DIR_ENV)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Lower bound on the log-Sobolev constant and the C_p sweep toward p = 1.
    C1 {
        #[arg(long, value_parser = parse_potential)]
        potential: PotentialSpec,
        #[arg(long = "p-list", value_delimiter = ',', default_values_t = beckner::C1_SWEEP)]
        p_list: Vec<f64>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Perturbative upper bound from a reference measure.
    Bound {
        #[arg(long, value_parser = parse_potential)]
        potential: PotentialSpec,
        #[arg(long, value_parser = parse_potential)]
        reference: PotentialSpec,
        #[arg(long)]
        p: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// The upper bound along a decreasing list of p.
    Sweep {
        #[arg(long, value_parser = parse_potential)]
        potential: PotentialSpec,
        #[arg(long, value_parser = parse_potential)]
        reference: PotentialSpec,
        #[arg(long = "p-list", value_delimiter = ',', default_values_t = DEFAULT_P_LIST)]
        p_list: Vec<f64>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Gaussian references x²/(2σ²) over a list of σ.
    Cor5 {
        #[arg(long, value_parser = parse_potential)]
        potential: PotentialSpec,
        #[arg(long = "sigma-list", value_delimiter = ',', default_values_t = DEFAULT_SIGMA_LIST)]
        sigma_list: Vec<f64>,
        #[arg(long)]
        p: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Randomized property suites.
    Check {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = OutFormat::Json)]
        out: OutFormat,
    },
    /// Analytic gradients against finite differences, and grid convergence.
    Selftest {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        points: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Unrestricted,
    Restricted,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Unrestricted => Mode::Unrestricted,
            ModeArg::Restricted => Mode::Restricted,
        }
    }
}

fn parse_potential(s: &str) -> std::result::Result<PotentialSpec, String> {
    PotentialSpec::parse(s).map_err(|e| e.to_string())
}

fn parse_domain(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `a,b`")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("`{a}` is not a number"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("`{b}` is not a number"))?;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(format!("need finite a < b, got {a},{b}"));
    }
    Ok((a, b))
}

/// Parses `args` (program name first), runs the command and writes the report
/// to `out`. Diagnostics go to standard error.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    eprint!("{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

struct Output<'a> {
    out: &'a mut dyn Write,
}

impl Output<'_> {
    fn json(&mut self, command: &str, config: Value, result: &impl Serialize) -> Result<()> {
        let doc = json!({ "command": command, "config": config, "result": result });
        let text = to_json_string(&doc).map_err(|e| Error::InvalidInput(e.to_string()))?;
        self.write(text.as_bytes())
    }

    fn csv(&mut self, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut wr = csv::Writer::from_writer(Vec::new());
        wr.write_record(header)?;
        for r in rows {
            wr.write_record(r)?;
        }
        let bytes = wr.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        self.write(&bytes)
    }

    fn write(&mut self, bytes: &[u8]) -> Result<()> {
        self.out.write_all(bytes).map_err(|source| Error::Io {
            path: "<stdout>".into(),
            source,
        })
    }
}

fn num(v: f64) -> String {
    format_f64(v)
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn resolve(path: &Path, dir: Option<&Path>) -> PathBuf {
    match dir {
        Some(d) if path.is_relative() => d.join(path),
        _ => path.to_path_buf(),
    }
}

fn check_p(p: f64, lo_closed: bool, hi: f64) -> Result<()> {
    let ok = if lo_closed { p >= 1.0 } else { p > 1.0 };
    if ok && p <= hi && p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("p = {p} is out of range")))
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32> {
    let mut o = Output { out };
    match command {
        Command::Gap { potential, grid } => {
            let mu = grid.config().build(&potential)?;
            let gap = spectral::solve_gap(&mu)?;
            let f = &gap.eigenfunction;
            let v = f.values();
            let mut config = grid.describe();
            config["potential"] = json!(potential.render());
            match grid.out {
                OutFormat::Json => {
                    let sign_changes = v.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
                    let result = json!({
                        "c2": gap.estimate,
                        "lambda0": gap.lambda0,
                        "lambda1": gap.lambda1,
                        "eigenfunction": {
                            "mean": f.mean(),
                            "l2_norm": f.map(|x| x * x).integrate().sqrt(),
                            "min": v.iter().copied().fold(f64::INFINITY, f64::min),
                            "max": v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                            "sign_changes": sign_changes,
                        },
                    });
                    o.json("gap", config, &result)?;
                }
                OutFormat::Csv => {
                    let rows: Vec<Vec<String>> =
                        mu.nodes().iter().zip(v).map(|(x, v)| vec![num(*x), num(*v)]).collect();
                    o.csv(&["x", "eigenfunction"], &rows)?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Cp {
            potential,
            p,
            mode,
            witness,
            out_dir,
            grid,
        } => {
            check_p(p, false, 2.0)?;
            let mu = grid.config().build(&potential)?;
            let est = beckner::estimate_cp(&mu, p, mode.into())?;
            let witness_path = witness.map(|w| resolve(&w, out_dir.as_deref()));
            if let Some(path) = &witness_path {
                est.witness.save_csv(path)?;
            }
            let mut config = grid.describe();
            config["potential"] = json!(potential.render());
            config["p"] = json!(p);
            config["mode"] = json!(Mode::from(mode));
            config["out_dir"] = json!(out_dir);
            match grid.out {
                OutFormat::Json => {
                    let result = json!({
                        "estimate": est.estimate,
                        "best_seed": est.best_seed,
                        "seeds": est.seeds,
                        "witness_path": witness_path,
                    });
                    o.json("cp", config, &result)?;
                }
                OutFormat::Csv => {
                    let rows: Vec<Vec<String>> = mu
                        .nodes()
                        .iter()
                        .zip(est.witness.values())
                        .map(|(x, v)| vec![num(*x), num(*v)])
                        .collect();
                    o.csv(&["x", "witness"], &rows)?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::C1 {
            potential,
            p_list,
            grid,
        } => {
            for &p in &p_list {
                check_p(p, false, 2.0)?;
            }
            if p_list.len() < 2 {
                return Err(Error::InvalidInput("the p list needs at least two values".into()));
            }
            let mu = grid.config().build(&potential)?;
            let c1 = beckner::estimate_c1_with_sweep(&mu, &p_list)?;
            let mut config = grid.describe();
            config["potential"] = json!(potential.render());
            config["p_list"] = json!(p_list);
            match grid.out {
                OutFormat::Json => {
                    let sweep: Vec<Value> = c1
                        .sweep
                        .iter()
                        .map(|(p, e)| json!({ "p": p, "estimate": e }))
                        .collect();
                    let result = json!({
                        "c1": c1.entropy.estimate,
                        "best_seed": c1.entropy.best_seed,
                        "sweep": sweep,
                        "ratios": c1.ratios,
                        "trend": c1.trend,
                    });
                    o.json("c1", config, &result)?;
                }
                OutFormat::Csv => {
                    let mut rows: Vec<Vec<String>> = c1
                        .sweep
                        .iter()
                        .map(|(p, e)| vec![num(*p), num(e.value)])
                        .collect();
                    rows.push(vec![num(1.0), num(c1.entropy.estimate.value)]);
                    o.csv(&["p", "estimate"], &rows)?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Bound {
            potential,
            reference,
            p,
            grid,
        } => {
            check_p(p, true, 2.0)?;
            let report = perturbation::theorem1_bound(&potential, &reference, p, &grid.config())?;
            let mut config = grid.describe();
            config["potential"] = json!(potential.render());
            config["reference"] = json!(reference.render());
            config["p"] = json!(p);
            match grid.out {
                OutFormat::Json => o.json("bound", config, &report)?,
                OutFormat::Csv => o.csv(
                    &["p", "p_prime", "z_norm_nu", "z_norm_mu", "m", "c2_mu", "cp_nu", "t_star", "cp_star", "cp_bound"],
                    &[report_row(&report)],
                )?,
            }
            Ok(if report.hypotheses_hold() { EXIT_OK } else { EXIT_HYPOTHESIS })
        }
        Command::Sweep {
            potential,
            reference,
            p_list,
            grid,
        } => {
            let sweep = perturbation::corollary2_sweep(&potential, &reference, &p_list, &grid.config())?;
            let mut config = grid.describe();
            config["potential"] = json!(potential.render());
            config["reference"] = json!(reference.render());
            config["p_list"] = json!(p_list);
            match grid.out {
                OutFormat::Json => o.json("sweep", config, &sweep)?,
                OutFormat::Csv => {
                    let rows: Vec<Vec<String>> = sweep
                        .entries
                        .iter()
                        .chain(sweep.endpoint.iter())
                        .map(|e| match &e.report {
                            Some(r) => report_row(r),
                            None => vec![num(e.p)],
                        })
                        .collect();
                    o.csv(
                        &["p", "p_prime", "z_norm_nu", "z_norm_mu", "m", "c2_mu", "cp_nu", "t_star", "cp_star", "cp_bound"],
                        &rows,
                    )?;
                }
            }
            let any = sweep
                .entries
                .iter()
                .any(|e| e.report.as_ref().is_some_and(|r| r.hypotheses_hold()));
            Ok(if any { EXIT_OK } else { EXIT_HYPOTHESIS })
        }
        Command::Cor5 {
            potential,
            sigma_list,
            p,
            grid,
        } => {
            check_p(p, true, 2.0)?;
            let report = perturbation::corollary5_check(&potential, &sigma_list, p, &grid.config())?;
            let mut config = grid.describe();
            config["potential"] = json!(potential.render());
            config["sigma_list"] = json!(sigma_list);
            config["p"] = json!(p);
            match grid.out {
                OutFormat::Json => o.json("cor5", config, &report)?,
                OutFormat::Csv => {
                    let rows: Vec<Vec<String>> = report
                        .entries
                        .iter()
                        .map(|e| {
                            vec![
                                num(e.sigma),
                                num(e.energy_inf),
                                e.energy_bounded_below.to_string(),
                                e.z_integrable.to_string(),
                                e.passed.to_string(),
                                opt(e.report.as_ref().and_then(|r| r.cp_bound)),
                            ]
                        })
                        .collect();
                    o.csv(&["sigma", "energy_inf", "energy_bounded_below", "z_integrable", "passed", "cp_bound"], &rows)?;
                }
            }
            Ok(if report.any_passed() { EXIT_OK } else { EXIT_HYPOTHESIS })
        }
        Command::Check {
            suite,
            trials,
            seed,
            out,
        } => {
            let report = moments::run_suite(suite, trials, seed)?;
            if !report.passed() && out == OutFormat::Json {
                report.write_failures_csv(std::io::stderr())?;
            }
            match out {
                OutFormat::Json => {
                    let config = json!({ "suite": suite, "trials": trials, "seed": seed, "out": out });
                    let result = json!({
                        "suite": report.suite,
                        "trials": report.trials,
                        "tolerance": report.tolerance,
                        "worst": report.worst,
                        "worst_trial": report.worst_trial,
                        "failures": report.failures.len(),
                        "passed": report.passed(),
                    });
                    o.json("check", config, &result)?;
                }
                OutFormat::Csv => {
                    let mut buf = Vec::new();
                    report.write_failures_csv(&mut buf)?;
                    o.write(&buf)?;
                }
            }
            Ok(if report.passed() { EXIT_OK } else { EXIT_NUMERICAL })
        }
        Command::Selftest { seed, points } => {
            let checks = selftest(seed, points)?;
            let passed = checks.iter().all(|c| c.passed);
            let config = json!({ "seed": seed, "points": points });
            o.json("selftest", config, &json!({ "checks": checks, "passed": passed }))?;
            Ok(if passed { EXIT_OK } else { EXIT_NUMERICAL })
        }
    }
}

fn report_row(r: &perturbation::PerturbationReport) -> Vec<String> {
    vec![
        num(r.p),
        num(r.p_prime),
        num(r.z_norm_nu),
        num(r.z_norm_mu),
        num(r.m),
        num(r.c2_mu.value),
        num(r.cp_nu.value),
        opt(r.t_star),
        opt(r.cp_star),
        opt(r.cp_bound),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfCheck {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

pub const GRADIENT_TOL: f64 = 1e-5;

/// Worst relative gap between analytic and finite-difference directional
/// derivatives of the ascent objectives at `points` random smooth functions.
pub fn gradient_deviation(seed: u64, points: usize) -> Result<f64> {
    let specs = ["gaussian:sigma=1", "poly:2=0.5,4=0.25", "power:alpha=1.5"];
    let measures = specs
        .iter()
        .map(|s| GridConfig { n: 201, ..GridConfig::default() }.build(&PotentialSpec::parse(s)?))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0_f64;
    for k in 0..points {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mu = &measures[k % measures.len()];
        let objective = if k % 4 == 3 {
            Objective::Entropy
        } else {
            Objective::Beckner { p: rng.gen_range(1.05..=2.0) }
        };
        let smooth = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
            mu.nodes()
                .iter()
                .map(|x| c[0] + c[1] * (c[2] * x).sin() + c[3] * (x * c[4]).cos() + 0.1 * c[5] * x)
                .collect()
        };
        let u: Vec<f64> = smooth(&mut rng).iter().map(|v| v + 2.0).collect();
        let dir = smooth(&mut rng);
        let (a, fd) = beckner::directional_check(mu, objective, &u, &dir, 1e-4)?;
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-8));
    }
    Ok(worst)
}

fn selftest(seed: u64, points: usize) -> Result<Vec<SelfCheck>> {
    let mut checks = Vec::new();
    let dev = gradient_deviation(seed, points)?;
    checks.push(SelfCheck {
        name: "ascent_gradient_vs_finite_difference".into(),
        value: dev,
        threshold: GRADIENT_TOL,
        passed: dev <= GRADIENT_TOL,
    });

    // Gaussian C₂ = 1: the error shrinks at least 3× per grid doubling
    let gaussian = PotentialSpec::gaussian(1.0)?;
    let errors = [501, 1001, 2001]
        .iter()
        .map(|&n| {
            let mu = GridConfig { n, ..GridConfig::default() }.build(&gaussian)?;
            Ok((spectral::spectral_gap(&mu)?.value - 1.0).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    let ratio = (errors[0] / errors[1]).min(errors[1] / errors[2]);
    checks.push(SelfCheck {
        name: "gap_grid_convergence_ratio".into(),
        value: ratio,
        threshold: 3.0,
        passed: ratio >= 3.0,
    });

    let residuals = [2001, 4001]
        .iter()
        .map(|&n| {
            let zd = moments::perturbation_pair(n)?;
            let f = GridFunction::from_fn(&zd.mu, f64::sin);
            Ok(perturbation::ground_state_energy_identity(&zd, &f)?.residual)
        })
        .collect::<Result<Vec<f64>>>()?;
    checks.push(SelfCheck {
        name: "ground_state_identity_residual".into(),
        value: residuals[1],
        threshold: 1e-3,
        passed: residuals[1] <= 1e-3,
    });
    let ratio = residuals[0] / residuals[1];
    checks.push(SelfCheck {
        name: "ground_state_grid_convergence_ratio".into(),
        value: ratio,
        threshold: 3.0,
        passed: ratio >= 3.0,
    });
    Ok(checks)
}

