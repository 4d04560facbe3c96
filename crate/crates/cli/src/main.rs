use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rrr_core::diagnostics::EstimationReport;
use rrr_core::io::{
    format_number, read_dataset, read_statistics, write_dataset, write_report, RunConfig,
};
use rrr_core::models::AircraftModel;
use rrr_core::simulator::{builtin_scenario, simulate_dataset, ScenarioSpec, SimulatedRun};
use rrr_core::statespace::StateSpaceModel;
use rrr_core::tuning::{estimate, replay, Method, COST_NAMES};
use rrr_core::{Dataset, Error, Result};

const THREADS_VAR: &str = "RRR_EKF_THREADS";

#[derive(Parser, Debug)]
#[command(name = "rrr-ekf", version, about = "Aircraft parameter and noise estimation with an adaptive EKF")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a built-in case and write the dataset plus the truth record.
    Simulate(SimulateArgs),
    /// Run one method on a dataset and write its report.
    Fit(FitArgs),
    /// Run Ref, MT and MS on one dataset and tabulate them side by side.
    Compare(CompareArgs),
    /// Rewrite a report from the statistics saved by an earlier fit.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Built-in model: 1, 2 or 3.
    #[arg(long)]
    case: Option<String>,
    /// key = value run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// key = value overrides of the tabulated model constants.
    #[arg(long)]
    constants: Option<PathBuf>,
    /// Dynamic pressure (case 2).
    #[arg(long)]
    qbar: Option<f64>,
    /// Air density; dynamic pressure then follows the measured airspeed (case 2).
    #[arg(long)]
    rho: Option<f64>,
    /// Rolling-moment reference length for case 3: b or cbar.
    #[arg(long)]
    roll_reference: Option<String>,
    #[arg(long)]
    cbar: Option<f64>,
}

#[derive(Args, Debug)]
struct RecipeArgs {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    plateau: Option<usize>,
    #[arg(long)]
    p0_scale: Option<f64>,
    #[arg(long)]
    q_seed: Option<f64>,
    /// Comma-separated diagonal of the initial R.
    #[arg(long)]
    r_seed: Option<String>,
    #[arg(long)]
    mt_window: Option<usize>,
    /// Drop the smoother covariance term from the EM Q update.
    #[arg(long)]
    no_em_cross_term: bool,
    #[arg(long)]
    no_extrapolation: bool,
    /// Estimate full Q and R instead of diagonals.
    #[arg(long)]
    full_covariance: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    n_samples: usize,
    #[arg(long, default_value_t = 0.02)]
    dt: f64,
    /// Control doublet amplitude in degrees.
    #[arg(long, default_value_t = 0.3)]
    excitation_deg: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    recipe: RecipeArgs,
    /// reference, mt or ms.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    recipe: RecipeArgs,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    data: PathBuf,
    /// Directory of the earlier report (its qr.csv is read).
    #[arg(long)]
    from: PathBuf,
    /// Defaults to `--from`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_config(model: &ModelArgs, recipe: Option<&RecipeArgs>, method: Option<&str>) -> Result<RunConfig> {
    let mut c = match &model.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut overrides: Vec<(&str, String)> = Vec::new();
    let mut put = |k: &'static str, v: Option<String>| {
        if let Some(v) = v {
            overrides.push((k, v));
        }
    };
    put("case", model.case.clone());
    put("constants", model.constants.as_ref().map(|p| p.display().to_string()));
    put("qbar", model.qbar.map(|v| v.to_string()));
    put("rho", model.rho.map(|v| v.to_string()));
    put("roll_reference", model.roll_reference.clone());
    put("cbar", model.cbar.map(|v| v.to_string()));
    put("method", method.map(str::to_string));
    if let Some(r) = recipe {
        put("iterations", r.iterations.map(|v| v.to_string()));
        put("tolerance", r.tolerance.map(|v| v.to_string()));
        put("plateau", r.plateau.map(|v| v.to_string()));
        put("p0_scale", r.p0_scale.map(|v| v.to_string()));
        put("q_seed", r.q_seed.map(|v| v.to_string()));
        put("r_seed", r.r_seed.clone());
        put("mt_window", r.mt_window.map(|v| v.to_string()));
        put("em_cross_term", r.no_em_cross_term.then(|| "false".into()));
        put("extrapolation", r.no_extrapolation.then(|| "false".into()));
        put("diagonal_only", r.full_covariance.then(|| "false".into()));
    }
    for (k, v) in overrides {
        c.set(k, &v)?;
    }
    Ok(c)
}

fn load(config: &RunConfig, data: &Path) -> Result<(AircraftModel, Dataset)> {
    let model = config.build_model()?;
    let dataset = read_dataset(data, &model)?;
    Ok((model, dataset))
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let config = run_config(&args.model, None, None)?;
    let model = config.build_model()?;
    let spec = ScenarioSpec {
        dt: args.dt,
        n_samples: args.n_samples,
        seed: args.seed,
        excitation_deg: args.excitation_deg,
    };
    let sim = builtin_scenario(&model, &spec)?;
    let run = simulate_dataset(&model, &sim)?;
    fs::create_dir_all(&args.out)?;
    write_dataset(&args.out.join("data.csv"), &model, &run.dataset)?;
    write_truth(&args.out, &model, &run)?;
    log::info!(
        "wrote {} samples of {} to {}",
        run.dataset.len(),
        config.require_case()?,
        args.out.display()
    );
    Ok(())
}

fn write_truth(dir: &Path, model: &dyn StateSpaceModel, run: &SimulatedRun) -> Result<()> {
    let states = model.state_names();
    let meas = model.measurement_names();
    let mut w = csv::Writer::from_path(dir.join("truth.csv")).map_err(Error::from)?;
    let mut header = vec!["time_s".to_string()];
    header.extend(states.iter().map(|s| format!("x_{s}")));
    header.extend(states.iter().map(|s| format!("w_{s}")));
    header.extend(meas.iter().map(|m| format!("v_{m}")));
    w.write_record(&header).map_err(Error::from)?;
    for (k, &t) in run.dataset.times.iter().enumerate() {
        let mut row = vec![format_number(t)];
        row.extend(run.states[k].iter().map(|&v| format_number(v)));
        match run.process_noise.get(k) {
            Some(wk) => row.extend(wk.iter().map(|&v| format_number(v))),
            None => row.extend(states.iter().map(|_| String::new())),
        }
        row.extend(run.measurement_noise[k].iter().map(|&v| format_number(v)));
        w.write_record(&row).map_err(Error::from)?;
    }
    w.flush()?;

    let cfg = &run.config;
    let mut w = csv::Writer::from_path(dir.join("truth_params.csv")).map_err(Error::from)?;
    w.write_record(["kind", "name", "value"]).map_err(Error::from)?;
    let params = model.parameter_names();
    let rows = params
        .iter()
        .zip(cfg.theta.iter())
        .map(|(n, &v)| ("theta", n, v))
        .chain(states.iter().enumerate().map(|(i, n)| ("Q", n, cfg.q[(i, i)])))
        .chain(meas.iter().enumerate().map(|(i, n)| ("R", n, cfg.r[(i, i)])))
        .chain(states.iter().zip(cfg.x0.iter()).map(|(n, &v)| ("x0", n, v)));
    for (kind, name, v) in rows {
        w.write_record([kind, name.as_str(), &format_number(v)]).map_err(Error::from)?;
    }
    w.flush()?;
    Ok(())
}

fn summarise(report: &EstimationReport) {
    let costs = report.final_costs();
    let js: Vec<String> = COST_NAMES
        .iter()
        .zip(costs.values)
        .map(|(n, v)| format!("{n}={v:.4}"))
        .collect();
    println!(
        "{}: {} iterations, {}; {}",
        report.method,
        report.history.len(),
        if report.converged { "converged" } else { "not converged" },
        js.join(" ")
    );
    for f in &report.flags {
        println!("  flag: {f}");
    }
}

fn fit(args: &FitArgs) -> Result<()> {
    let config = run_config(&args.model, Some(&args.recipe), args.method.as_deref())?;
    let (model, data) = load(&config, &args.data)?;
    let recipe = config.recipe_config(config.method, model.n_meas())?;
    let report = estimate(&model, &data, &model.initial_theta(), &recipe)?;
    write_report(&report, &data, &args.out)?;
    summarise(&report);
    Ok(())
}

/// Upper bound on concurrently running methods.
fn thread_cap() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!(
                "{THREADS_VAR} must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn compare(args: &CompareArgs) -> Result<()> {
    let cap = thread_cap()?;
    let config = run_config(&args.model, Some(&args.recipe), None)?;
    let (model, data) = load(&config, &args.data)?;
    let recipes = Method::ALL
        .iter()
        .map(|&m| {
            // the MT window is meaningless for the other two
            let c = RunConfig {
                mt_window: if m == Method::Mt { config.mt_window } else { None },
                ..config.clone()
            };
            c.recipe_config(m, model.n_meas())
        })
        .collect::<Result<Vec<_>>>()?;
    let theta0 = model.initial_theta();
    let mut reports: Vec<Result<EstimationReport>> = Vec::new();
    for chunk in recipes.chunks(cap) {
        let done: Vec<Result<EstimationReport>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|r| s.spawn(|| estimate(&model, &data, &theta0, r)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("method thread panicked"))
                .collect()
        });
        reports.extend(done);
    }
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;

    fs::create_dir_all(&args.out)?;
    for r in &reports {
        write_report(r, &data, &args.out.join(r.method.label().to_lowercase()))?;
        summarise(r);
    }
    let labels: Vec<&str> = reports.iter().map(|r| r.method.label()).collect();
    let table = |file: &str, first: &[&str], rows: Vec<(Vec<String>, Vec<f64>)>| -> Result<()> {
        let mut w = csv::Writer::from_path(args.out.join(file)).map_err(Error::from)?;
        let mut header: Vec<&str> = first.to_vec();
        header.extend(&labels);
        w.write_record(&header).map_err(Error::from)?;
        for (keys, values) in rows {
            let mut rec = keys;
            rec.extend(values.into_iter().map(format_number));
            w.write_record(&rec).map_err(Error::from)?;
        }
        w.flush()?;
        Ok(())
    };
    let names = &reports[0].parameter_names;
    let per_param = |f: &dyn Fn(&EstimationReport, usize) -> f64| {
        names
            .iter()
            .enumerate()
            .map(|(i, n)| (vec![n.clone()], reports.iter().map(|r| f(r, i)).collect()))
            .collect::<Vec<_>>()
    };
    table("compare.csv", &["name"], per_param(&|r, i| r.theta_hat[i]))?;
    table("compare_sigma.csv", &["name"], per_param(&|r, i| r.sigma_theta[i]))?;
    let mut noise = Vec::new();
    for (i, s) in reports[0].state_names.iter().enumerate() {
        noise.push((vec!["Q".into(), s.clone()], reports.iter().map(|r| r.q_diag()[i]).collect()));
    }
    for (i, m) in reports[0].measurement_names.iter().enumerate() {
        noise.push((vec!["R".into(), m.clone()], reports.iter().map(|r| r.r_diag()[i]).collect()));
    }
    table("compare_noise.csv", &["kind", "name"], noise)?;
    Ok(())
}

fn report(args: &ReportArgs) -> Result<()> {
    let config = run_config(&args.model, None, None)?;
    let (model, data) = load(&config, &args.data)?;
    let stored = read_statistics(
        &args.from.join("qr.csv"),
        model.n_states(),
        model.n_meas(),
        model.n_params(),
    )?;
    let outcome = replay(&model, &data, &stored.setup, stored.method)?;
    let report = EstimationReport::from_outcome(&model, outcome)?;
    write_report(&report, &data, args.out.as_ref().unwrap_or(&args.from))?;
    summarise(&report);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Compare(a) => compare(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
