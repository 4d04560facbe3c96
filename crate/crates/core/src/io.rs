//! CSV ingestion and report serialisation, plus the key = value run
//! configuration.
//!
//! Internally angles are radians, rates rad/s, speeds ft/s and
//! accelerometer channels g. Column headers carry a unit suffix and are
//! converted on the way in.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::diagnostics::EstimationReport;
use crate::error::{Error, Result};
use crate::filter::FilterSetup;
use crate::models::{
    builtin_model, AircraftModel, CaseId, DynamicPressure, ModelConstants, ModelOptions,
    RollReference,
};
use crate::statespace::{ChannelSeries, StateSpaceModel};
use crate::tuning::{Method, ParamPrior, RecipeConfig, COST_NAMES};

pub const TIME_COLUMN: &str = "time_s";

/// Standard gravity in ft/s², for `_fps2` columns.
pub const STANDARD_GRAVITY_FPS2: f64 = 32.174;

/// Unit suffix of a data column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unit {
    Deg,
    Rad,
    Fps,
    Fps2,
    G,
}

impl Unit {
    pub fn suffix(self) -> &'static str {
        match self {
            Unit::Deg => "deg",
            Unit::Rad => "rad",
            Unit::Fps => "fps",
            Unit::Fps2 => "fps2",
            Unit::G => "g",
        }
    }

    pub fn from_suffix(s: &str) -> Option<Unit> {
        Some(match s {
            "deg" => Unit::Deg,
            "rad" => Unit::Rad,
            "fps" => Unit::Fps,
            "fps2" => Unit::Fps2,
            "g" => Unit::G,
            _ => return None,
        })
    }

    pub fn to_internal(self, v: f64) -> f64 {
        match self {
            Unit::Deg => v.to_radians(),
            Unit::Fps2 => v / STANDARD_GRAVITY_FPS2,
            Unit::Rad | Unit::Fps | Unit::G => v,
        }
    }

    pub fn from_internal(self, v: f64) -> f64 {
        match self {
            Unit::Deg => v.to_degrees(),
            Unit::Fps2 => v * STANDARD_GRAVITY_FPS2,
            Unit::Rad | Unit::Fps | Unit::G => v,
        }
    }

    /// Unit a channel is held in internally, judged from its name.
    pub fn internal_for(name: &str) -> Unit {
        match name {
            "an_m" | "ax_m" | "ay_m" => Unit::G,
            "V_m" => Unit::Fps,
            _ => Unit::Rad,
        }
    }
}

/// Split `alpha_m_deg` into the channel name and its unit.
pub fn split_header(header: &str) -> Result<(String, Unit)> {
    let (name, suffix) = header
        .rsplit_once('_')
        .ok_or_else(|| Error::Dataset(format!("column `{header}` has no unit suffix")))?;
    let unit = Unit::from_suffix(suffix).ok_or_else(|| {
        Error::Dataset(format!("column `{header}`: unknown unit suffix `_{suffix}`"))
    })?;
    if name.is_empty() {
        return Err(Error::Dataset(format!("column `{header}` has an empty name")));
    }
    Ok((name.to_string(), unit))
}

/// Shortest text that reads back to the same `f64` (17 significant digits).
pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

/// Sample times and channels of a data file, converted to internal units.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelTable {
    pub times: Vec<f64>,
    pub channels: Vec<ChannelSeries>,
}

pub fn read_channels(path: &Path) -> Result<ChannelTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let time_col = headers
        .iter()
        .position(|h| h == TIME_COLUMN)
        .ok_or_else(|| Error::Dataset(format!("missing column `{TIME_COLUMN}`")))?;
    let mut columns: Vec<(usize, String, Unit)> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if i == time_col {
            continue;
        }
        let (name, unit) = split_header(h)?;
        if columns.iter().any(|(_, n, _)| *n == name) {
            return Err(Error::Dataset(format!("channel `{name}` appears twice")));
        }
        columns.push((i, name, unit));
    }

    let mut times = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |i: usize| -> Result<f64> {
            let text = record.get(i).unwrap_or("");
            if text.is_empty() {
                return Err(Error::Dataset(format!(
                    "empty cell in column `{}` at data row {row}",
                    headers[i]
                )));
            }
            text.parse::<f64>().map_err(|_| {
                Error::Dataset(format!(
                    "column `{}`, data row {row}: cannot parse `{text}`",
                    headers[i]
                ))
            })
        };
        let t = cell(time_col)?;
        if let Some(&prev) = times.last() {
            if !(t > prev) {
                return Err(Error::Dataset(format!(
                    "`{TIME_COLUMN}` not strictly increasing at data row {row}"
                )));
            }
        }
        times.push(t);
        for ((i, _, unit), out) in columns.iter().zip(values.iter_mut()) {
            out.push(unit.to_internal(cell(*i)?));
        }
    }
    if times.is_empty() {
        return Err(Error::EmptyData(format!("{} has no data rows", path.display())));
    }
    let channels = columns
        .into_iter()
        .zip(values)
        .map(|((_, name, _), v)| ChannelSeries::new(name, times.clone(), v))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelTable { times, channels })
}

/// Read a data file and route its columns to the measurements and inputs
/// of `model`.
pub fn read_dataset(path: &Path, model: &dyn StateSpaceModel) -> Result<Dataset> {
    let table = read_channels(path)?;
    Dataset::from_channels(model, table.times, &table.channels)
}

/// Write channels sampled on `times`, each in its internal unit.
pub fn write_channels(path: &Path, times: &[f64], channels: &[ChannelSeries]) -> Result<()> {
    for c in channels {
        if c.times() != times {
            return Err(Error::Dimension(format!(
                "channel `{}` is not sampled on the output grid",
                c.name()
            )));
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![TIME_COLUMN.to_string()];
    header.extend(channels.iter().map(|c| {
        format!("{}_{}", c.name(), Unit::internal_for(c.name()).suffix())
    }));
    w.write_record(&header)?;
    for (k, &t) in times.iter().enumerate() {
        let mut row = vec![format_number(t)];
        row.extend(channels.iter().map(|c| format_number(c.values()[k])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Measurements and inputs of `data` in one file that `read_dataset`
/// reads back unchanged.
pub fn write_dataset(path: &Path, model: &dyn StateSpaceModel, data: &Dataset) -> Result<()> {
    let names = model.measurement_names();
    let mut channels = Vec::new();
    for (i, n) in names.iter().enumerate() {
        channels.push(data.measurement_channel(i, n)?);
    }
    for c in data.inputs.channels() {
        if names.iter().any(|n| n == c.name()) {
            continue;
        }
        let values = data.times.iter().map(|&t| c.at(t)).collect::<Result<Vec<_>>>()?;
        channels.push(ChannelSeries::new(c.name(), data.times.clone(), values)?);
    }
    write_channels(path, &data.times, &channels)
}

fn csv_writer(dir: &Path, file: &str, written: &mut Vec<PathBuf>) -> Result<csv::Writer<fs::File>> {
    let path = dir.join(file);
    let w = csv::Writer::from_path(&path)?;
    written.push(path);
    Ok(w)
}

fn augmented_names(report: &EstimationReport) -> Vec<String> {
    report
        .state_names
        .iter()
        .chain(&report.parameter_names)
        .cloned()
        .collect()
}

/// Serialise a report into `dir`. Returns the files written.
pub fn write_report(report: &EstimationReport, data: &Dataset, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let num = format_number;

    let mut w = csv_writer(dir, "theta.csv", &mut written)?;
    w.write_record(["name", "estimate", "sigma", "pct_crb"])?;
    for (i, name) in report.parameter_names.iter().enumerate() {
        w.write_record([
            name.clone(),
            num(report.theta_hat[i]),
            num(report.sigma_theta[i]),
            num(report.pct_crb[i]),
        ])?;
    }
    w.flush()?;

    let mut w = csv_writer(dir, "corr100.csv", &mut written)?;
    let mut header = vec!["name".to_string()];
    header.extend(report.parameter_names.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in report.parameter_names.iter().zip(&report.corr_100) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    write_statistics(report, &mut csv_writer(dir, "qr.csv", &mut written)?)?;

    let mut w = csv_writer(dir, "costs.csv", &mut written)?;
    let mut header = vec!["iteration".to_string()];
    header.extend(COST_NAMES.iter().map(|s| s.to_string()));
    header.push("skipped".into());
    w.write_record(&header)?;
    for (rec, costs) in report.history.iter().zip(&report.cost_history) {
        let mut row = vec![rec.iteration.to_string()];
        row.extend(costs.values.iter().map(|&v| num(v)));
        row.push(costs.total_skipped().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv_writer(dir, "residues.csv", &mut written)?;
    let mut header = vec![TIME_COLUMN.to_string()];
    for m in &report.measurement_names {
        for col in ["nu", "nu_sigma", "rf", "rf_sigma", "rf_neg", "rs", "rs_sigma", "rs_neg"] {
            header.push(format!("{col}_{m}"));
        }
    }
    w.write_record(&header)?;
    let res = &report.residues;
    for (k, step) in report.trajectory.steps.iter().enumerate() {
        let b = &res.bounds[k];
        let mut row = vec![num(step.t)];
        for j in 0..report.measurement_names.len() {
            row.push(num(res.innovation[k][j]));
            row.push(num(b.innovation[j]));
            row.push(num(res.filtered[k][j]));
            row.push(num(b.filtered[j]));
            row.push(u8::from(b.filtered_negative[j]).to_string());
            row.push(num(res.smoothed[k][j]));
            row.push(num(b.smoothed[j]));
            row.push(u8::from(b.smoothed_negative[j]).to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv_writer(dir, "trajectory.csv", &mut written)?;
    let aug = augmented_names(report);
    let mut header = vec![TIME_COLUMN.to_string()];
    header.extend(report.state_names.iter().map(|s| format!("x_pred_{s}")));
    for prefix in ["x_prior", "x_post", "x_smooth"] {
        header.extend(aug.iter().map(|a| format!("{prefix}_{a}")));
    }
    header.extend(report.measurement_names.iter().map(|m| format!("z_{m}")));
    w.write_record(&header)?;
    let traj = &report.trajectory;
    for (k, step) in traj.steps.iter().enumerate() {
        let mut row = vec![num(step.t)];
        match traj.predicted.get(k) {
            Some(x) => row.extend(x.iter().map(|&v| num(v))),
            None => row.extend(report.state_names.iter().map(|_| String::new())),
        }
        for x in [&step.x_prior, &step.x_post, &step.x_smooth] {
            row.extend(x.iter().map(|&v| num(v)));
        }
        match data.measurements.get(k) {
            Some(z) => row.extend(z.iter().map(|&v| num(v))),
            None => return Err(Error::Dimension("report and data lengths differ".into())),
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let path = dir.join("flags.txt");
    let mut text = String::new();
    for f in &report.flags {
        text.push_str(f);
        text.push('\n');
    }
    fs::write(&path, text)?;
    written.push(path);
    Ok(written)
}

fn write_statistics(report: &EstimationReport, w: &mut csv::Writer<fs::File>) -> Result<()> {
    w.write_record(["kind", "i", "j", "name", "value"])?;
    w.write_record(["method", "", "", report.method.label(), ""])?;
    let vector = |w: &mut csv::Writer<fs::File>, kind: &str, v: &DVector<f64>, names: &[String]| {
        v.iter().enumerate().try_for_each(|(i, &x)| {
            w.write_record([kind, &i.to_string(), "", &names[i], &format_number(x)])
        })
    };
    let matrix = |w: &mut csv::Writer<fs::File>, kind: &str, m: &DMatrix<f64>, names: &[String]| {
        (0..m.nrows()).try_for_each(|i| {
            (0..m.ncols()).try_for_each(|j| {
                let name = if i == j { names[i].clone() } else { format!("{}/{}", names[i], names[j]) };
                w.write_record([kind, &i.to_string(), &j.to_string(), &name, &format_number(m[(i, j)])])
            })
        })
    };
    let stats = &report.statistics;
    matrix(w, "Q", &stats.q, &report.state_names)?;
    matrix(w, "R", &stats.r, &report.measurement_names)?;
    vector(w, "x0", &report.x0, &report.state_names)?;
    vector(w, "theta0", &report.theta0, &report.parameter_names)?;
    matrix(w, "P0", &stats.p0, &augmented_names(report))?;
    w.flush()?;
    Ok(())
}

/// Statistics and starting point stored in a report's `qr.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredRun {
    pub method: Method,
    pub setup: FilterSetup,
}

/// Read back the `qr.csv` written by `write_report` for a model with `n`
/// states, `m` measurements and `p` parameters.
pub fn read_statistics(path: &Path, n: usize, m: usize, p: usize) -> Result<StoredRun> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    let mut method = None;
    let mut q = DMatrix::zeros(n, n);
    let mut r = DMatrix::zeros(m, m);
    let mut p0 = DMatrix::zeros(n + p, n + p);
    let mut x0 = DVector::zeros(n);
    let mut theta0 = DVector::zeros(p);
    let mut seen = [0usize; 5];
    let bad = |row: usize, what: &str| Error::Dataset(format!("qr.csv data row {row}: {what}"));
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let kind = record.get(0).unwrap_or("");
        if kind == "method" {
            method = Some(record.get(3).unwrap_or("").parse::<Method>()?);
            continue;
        }
        let index = |c: usize| -> Result<usize> {
            record
                .get(c)
                .unwrap_or("")
                .parse()
                .map_err(|_| bad(row, "bad index"))
        };
        let value: f64 = record
            .get(4)
            .unwrap_or("")
            .parse()
            .map_err(|_| bad(row, "bad value"))?;
        let i = index(1)?;
        let (target, slot): (&mut dyn FnMut(usize, usize, f64) -> bool, usize) = match kind {
            "Q" => (&mut |i, j, v| set_entry(&mut q, i, j, v), 0),
            "R" => (&mut |i, j, v| set_entry(&mut r, i, j, v), 1),
            "P0" => (&mut |i, j, v| set_entry(&mut p0, i, j, v), 2),
            "x0" => (&mut |i, _, v| set_item(&mut x0, i, v), 3),
            "theta0" => (&mut |i, _, v| set_item(&mut theta0, i, v), 4),
            other => return Err(bad(row, &format!("unknown kind `{other}`"))),
        };
        let j = if slot >= 3 { 0 } else { index(2)? };
        if !target(i, j, value) {
            return Err(bad(row, "index out of range for this model"));
        }
        seen[slot] += 1;
    }
    let expected = [n * n, m * m, (n + p) * (n + p), n, p];
    let kinds = ["Q", "R", "P0", "x0", "theta0"];
    for ((got, want), kind) in seen.iter().zip(expected).zip(kinds) {
        if *got != want {
            return Err(Error::Dataset(format!(
                "qr.csv holds {got} `{kind}` entries, the model needs {want}"
            )));
        }
    }
    let method = method.ok_or_else(|| Error::Dataset("qr.csv does not name the method".into()))?;
    Ok(StoredRun {
        method,
        setup: FilterSetup {
            x0,
            theta0,
            p0,
            q,
            r,
        },
    })
}

fn set_entry(m: &mut DMatrix<f64>, i: usize, j: usize, v: f64) -> bool {
    if i < m.nrows() && j < m.ncols() {
        m[(i, j)] = v;
        true
    } else {
        false
    }
}

fn set_item(x: &mut DVector<f64>, i: usize, v: f64) -> bool {
    if i < x.len() {
        x[i] = v;
        true
    } else {
        false
    }
}

/// `key = value` lines; `#` starts a comment. Later keys may not repeat
/// earlier ones.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: key `{k}` given twice", n + 1)));
        }
    }
    Ok(out)
}

/// Constants file: the case's tabulated constants with `key = value`
/// overrides.
pub fn parse_constants(text: &str, base: ModelConstants) -> Result<ModelConstants> {
    let mut c = base;
    for (k, v) in parse_key_values(text)? {
        c.set(&k, parse_value(&k, &v)?)?;
    }
    Ok(c)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| parse_value(key, s.trim())).collect()
}

/// Everything a run can be configured with.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub case: Option<CaseId>,
    pub constants_file: Option<PathBuf>,
    pub method: Method,
    pub iterations: usize,
    pub tolerance: f64,
    pub plateau: usize,
    pub p0_scale: Option<f64>,
    pub q_seed: f64,
    /// Diagonal of the initial R; estimated from the data when absent.
    pub r_seed: Option<Vec<f64>>,
    pub state_prior_variance: f64,
    /// Include the smoother covariance correction in the EM Q update.
    pub em_cross_term: bool,
    pub diagonal_only: bool,
    /// Aitken steps on the reference method's noise iterates (never used
    /// for MT and MS).
    pub extrapolation: bool,
    pub mt_window: Option<usize>,
    pub param_fraction: f64,
    pub param_floor: f64,
    pub roll_reference: RollReference,
    pub cbar: Option<f64>,
    pub qbar: Option<f64>,
    pub rho: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let recipe = RecipeConfig::default();
        let (param_fraction, param_floor) = match recipe.param_prior {
            ParamPrior::Fixed { fraction, floor } => (fraction, floor),
            ParamPrior::Smoothed => (1.0, 10.0),
        };
        Self {
            case: None,
            constants_file: None,
            method: Method::Reference,
            iterations: recipe.max_iterations,
            tolerance: recipe.tolerance,
            plateau: recipe.plateau,
            p0_scale: None,
            q_seed: recipe.q_seed,
            r_seed: None,
            state_prior_variance: recipe.state_prior_variance,
            em_cross_term: recipe.covariance_correction,
            diagonal_only: recipe.diagonal_only,
            extrapolation: recipe.extrapolation.is_some(),
            mt_window: None,
            param_fraction,
            param_floor,
            roll_reference: RollReference::Span,
            cbar: None,
            qbar: None,
            rho: None,
        }
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 20] = [
        "case",
        "constants",
        "method",
        "iterations",
        "tolerance",
        "plateau",
        "p0_scale",
        "q_seed",
        "r_seed",
        "state_prior_variance",
        "em_cross_term",
        "diagonal_only",
        "extrapolation",
        "mt_window",
        "param_fraction",
        "param_floor",
        "roll_reference",
        "cbar",
        "qbar",
        "rho",
    ];

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "case" => self.case = Some(v.parse()?),
            "constants" => self.constants_file = Some(PathBuf::from(v)),
            "method" => self.method = v.parse()?,
            "iterations" => self.iterations = parse_value(key, v)?,
            "tolerance" => self.tolerance = parse_value(key, v)?,
            "plateau" => self.plateau = parse_value(key, v)?,
            "p0_scale" => self.p0_scale = Some(parse_value(key, v)?),
            "q_seed" => self.q_seed = parse_value(key, v)?,
            "r_seed" => self.r_seed = Some(parse_list(key, v)?),
            "state_prior_variance" => self.state_prior_variance = parse_value(key, v)?,
            "em_cross_term" => self.em_cross_term = parse_bool(key, v)?,
            "diagonal_only" => self.diagonal_only = parse_bool(key, v)?,
            "extrapolation" => self.extrapolation = parse_bool(key, v)?,
            "mt_window" => self.mt_window = Some(parse_value(key, v)?),
            "param_fraction" => self.param_fraction = parse_value(key, v)?,
            "param_floor" => self.param_floor = parse_value(key, v)?,
            "roll_reference" => {
                self.roll_reference = match v {
                    "b" | "span" => RollReference::Span,
                    "cbar" | "chord" => RollReference::Chord,
                    _ => {
                        return Err(Error::Config(format!(
                            "`roll_reference`: expected b or cbar, got `{v}`"
                        )))
                    }
                }
            }
            "cbar" => self.cbar = Some(parse_value(key, v)?),
            "qbar" => self.qbar = Some(parse_value(key, v)?),
            "rho" => self.rho = Some(parse_value(key, v)?),
            other => return Err(Error::Config(format!("unknown configuration key `{other}`"))),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        for (k, v) in parse_key_values(text)? {
            c.set(&k, &v)?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn model_options(&self) -> Result<ModelOptions> {
        let case = self.require_case()?;
        let mut constants = match &self.constants_file {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                parse_constants(&text, case.constants())?
            }
            None => case.constants(),
        };
        if let Some(c) = self.cbar {
            constants.cbar = Some(c);
        }
        let dynamic_pressure = match (self.qbar, self.rho) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give either `qbar` or `rho`, not both".into()))
            }
            (Some(q), None) => Some(DynamicPressure::Constant(q)),
            (None, Some(rho)) => Some(DynamicPressure::FromDensity(rho)),
            (None, None) => None,
        };
        Ok(ModelOptions {
            constants: Some(constants),
            dynamic_pressure,
            roll_reference: self.roll_reference,
        })
    }

    pub fn require_case(&self) -> Result<CaseId> {
        self.case
            .ok_or_else(|| Error::Config("no model selected (`case`)".into()))
    }

    pub fn build_model(&self) -> Result<AircraftModel> {
        builtin_model(self.require_case()?, &self.model_options()?)
    }

    /// Recipe settings for `method`, after checking the method-specific
    /// fields.
    pub fn recipe_config(&self, method: Method, n_meas: usize) -> Result<RecipeConfig> {
        if self.mt_window.is_some() && method != Method::Mt {
            return Err(Error::Config(format!(
                "`mt_window` only applies to the MT method, not {method}"
            )));
        }
        let r_seed = match &self.r_seed {
            Some(v) if v.len() != n_meas => {
                return Err(Error::Config(format!(
                    "`r_seed` has {} entries, the model has {n_meas} measurements",
                    v.len()
                )))
            }
            Some(v) => Some(DMatrix::from_diagonal(&DVector::from_column_slice(v))),
            None => None,
        };
        let base = RecipeConfig::for_method(method);
        let config = RecipeConfig {
            max_iterations: self.iterations,
            tolerance: self.tolerance,
            plateau: self.plateau,
            p0_scale: self.p0_scale.or(base.p0_scale),
            param_prior: ParamPrior::Fixed {
                fraction: self.param_fraction,
                floor: self.param_floor,
            },
            state_prior_variance: self.state_prior_variance,
            q_seed: self.q_seed,
            r_seed,
            diagonal_only: self.diagonal_only,
            covariance_correction: self.em_cross_term,
            mt_window: self.mt_window,
            extrapolation: if self.extrapolation { base.extrapolation } else { None },
            ..base
        };
        config.validate()?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers_split_on_last_underscore() {
        assert_eq!(split_header("alpha_m_deg").unwrap(), ("alpha_m".into(), Unit::Deg));
        assert_eq!(split_header("an_m_fps2").unwrap(), ("an_m".into(), Unit::Fps2));
        let e = split_header("alpha_m_furlong").unwrap_err().to_string();
        assert!(e.contains("_furlong"), "{e}");
        assert!(split_header("alpha").is_err());
    }

    #[test]
    fn degrees_convert_to_radians() {
        assert!((Unit::Deg.to_internal(5.0) - 0.0872665).abs() < 1e-7);
        assert!((Unit::Fps2.to_internal(32.174) - 1.0).abs() < 1e-15);
        assert_eq!(Unit::Deg.from_internal(Unit::Deg.to_internal(5.0)), 5.0);
    }

    #[test]
    fn number_format_round_trips() {
        for v in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, 0.0] {
            let s = format_number(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn key_values_reject_junk() {
        let m = parse_key_values("# comment\n method = mt \n\niterations=5 # trailing").unwrap();
        assert_eq!(m["method"], "mt");
        assert_eq!(m["iterations"], "5");
        assert!(parse_key_values("no equals sign").is_err());
        assert!(parse_key_values("a = 1\na = 2").is_err());
    }

    #[test]
    fn run_config_reads_every_key() {
        let text = "case = 3\nmethod = ms\niterations = 7\ntolerance = 1e-5\nplateau = 2\n\
                    p0_scale = 50\nq_seed = 1e-7\nr_seed = 1e-6, 2e-6\nstate_prior_variance = 1e-3\n\
                    em_cross_term = false\ndiagonal_only = no\nextrapolation = off\n\
                    param_fraction = 0.5\nparam_floor = 2\nroll_reference = cbar\ncbar = 1.2\nrho = 0.002";
        let c = RunConfig::from_text(text).unwrap();
        assert_eq!(c.case, Some(CaseId::Case3Lateral));
        assert_eq!(c.method, Method::Ms);
        assert_eq!(c.iterations, 7);
        assert_eq!(c.r_seed, Some(vec![1e-6, 2e-6]));
        assert!(!c.em_cross_term && !c.diagonal_only && !c.extrapolation);
        assert_eq!(c.roll_reference, RollReference::Chord);
        assert_eq!(c.rho, Some(0.002));
        assert!(RunConfig::from_text("colour = blue").is_err());
        assert!(RunConfig::from_text("iterations = many").is_err());
    }

    #[test]
    fn method_specific_fields_are_checked() {
        let c = RunConfig {
            mt_window: Some(50),
            ..RunConfig::default()
        };
        assert!(c.recipe_config(Method::Reference, 5).is_err());
        assert!(c.recipe_config(Method::Mt, 5).is_ok());
        let c = RunConfig {
            r_seed: Some(vec![1.0]),
            ..RunConfig::default()
        };
        assert!(c.recipe_config(Method::Reference, 5).is_err());
    }

    #[test]
    fn case_two_needs_dynamic_pressure() {
        let c = RunConfig {
            case: Some(CaseId::Case2Longitudinal),
            ..RunConfig::default()
        };
        let e = c.build_model().unwrap_err().to_string();
        assert!(e.contains("qbar"), "{e}");
        let c = RunConfig {
            qbar: Some(200.0),
            ..c
        };
        assert!(c.build_model().is_ok());
    }
}
