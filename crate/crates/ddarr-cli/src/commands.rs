//! Pipeline stages. Each reads and writes documented files under the output
//! directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ddarr::arrgen::{generate_residual_bank, ResidualSpec};
use ddarr::detect::{detection_report, learn_bank_thresholds, roc_curve, roc_experiment, Labelled, RocCurve};
use ddarr::evaluate::{isolability_matrix, SignatureMatrix};
use ddarr::tanksim::{simulate_run, FaultScenario};
use ddarr::timeseries::{add_integral_columns, integral_name, read_csv, write_csv, Dataset, INTEGRAL_PREFIX};
use serde::Serialize;

use crate::config::{FaultData, RunConfig};
use crate::error::{CliError, CliResult};

/// Process exit status of a successful command.
pub const EXIT_OK: i32 = 0;
/// `detect` found a fault.
pub const EXIT_FAULT: i32 = 10;

/// Provenance block attached to every JSON artifact. Only `generated_at`
/// varies between identical runs.
#[derive(Debug, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub mode: ddarr::arrgen::SearchMode,
    pub generated_at: u64,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    metadata: &'a Metadata,
    #[serde(flatten)]
    body: T,
}

fn metadata(config: &RunConfig, command: &'static str) -> Metadata {
    Metadata {
        tool: "ddarr",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: config.seed,
        mode: config.mode,
        generated_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn create_out(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, meta: &Metadata, body: T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(&Envelope { metadata: meta, body })?;
    text.push('\n');
    write_text(path, &text)
}

fn write_dataset(path: &Path, ds: &Dataset) -> CliResult<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    write_csv(ds, std::io::BufWriter::new(file))?;
    Ok(())
}

/// Reads a CSV dataset, appending integrals when configured.
pub fn load_dataset(path: &Path, integrals: bool) -> CliResult<Dataset> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open dataset {}: {e}", path.display())))?;
    let ds = read_csv(std::io::BufReader::new(file))?;
    if !integrals {
        return Ok(ds);
    }
    let missing: Vec<String> = ds
        .names()
        .iter()
        .filter(|n| !n.starts_with(INTEGRAL_PREFIX) && !ds.contains(&integral_name(n)))
        .cloned()
        .collect();
    let refs: Vec<&str> = missing.iter().map(String::as_str).collect();
    Ok(add_integral_columns(&ds, &refs)?)
}

pub fn load_bank(path: &Path) -> CliResult<Vec<ResidualSpec>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read residual bank {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct SimulatedFile {
    scenario: String,
    file: String,
    states_file: Option<String>,
    rows: usize,
    clamped: usize,
    noise_sigma: Vec<f64>,
}

/// Writes the fault-free baseline and one dataset per configured scenario.
/// All runs share the configured seed, so they differ only by the fault.
pub fn simulate(config: &RunConfig) -> CliResult<i32> {
    create_out(&config.out)?;
    let mut files = Vec::new();
    let scenarios = std::iter::once(FaultScenario::none()).chain(config.simulator.scenarios.iter().cloned());
    for scenario in scenarios {
        let run = simulate_run(&config.simulator.params, &scenario, config.seed)?;
        let file = format!("{}.csv", scenario.name);
        write_dataset(&config.out.join(&file), &run.measured)?;
        let states_file = if config.simulator.keep_states {
            let f = format!("states_{}.csv", scenario.name);
            write_dataset(&config.out.join(&f), &run.states)?;
            Some(f)
        } else {
            None
        };
        if run.clamped > 0 {
            eprintln!("warning: {}: {} pressure samples clamped at zero", scenario.name, run.clamped);
        }
        println!("wrote {file} ({} rows)", run.measured.len());
        files.push(SimulatedFile {
            scenario: scenario.name.clone(),
            file,
            states_file,
            rows: run.measured.len(),
            clamped: run.clamped,
            noise_sigma: run.noise_sigma,
        });
    }
    #[derive(Serialize)]
    struct Manifest<'a> {
        params: &'a ddarr::tanksim::TankParams,
        scenarios: &'a [FaultScenario],
        files: Vec<SimulatedFile>,
    }
    let body = Manifest { params: &config.simulator.params, scenarios: &config.simulator.scenarios, files };
    write_json(&config.out.join("simulate.json"), &metadata(config, "simulate"), body)?;
    Ok(EXIT_OK)
}

/// Renders a bank as a three-column table: target, selected variables and
/// residual, with `×` where no residual was found.
pub fn bank_table(targets: &[String], bank: &[ResidualSpec]) -> String {
    let mut rows = vec![["target".to_string(), "selected variables".to_string(), "residual".to_string()]];
    for target in targets {
        let specs: Vec<&ResidualSpec> = bank.iter().filter(|s| &s.target == target).collect();
        if specs.is_empty() {
            rows.push([target.clone(), "×".into(), "×".into()]);
        }
        for spec in specs {
            let loads = spec.loads.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ");
            let residual = format!("{} = {} - model({})", spec.name(), target, loads);
            rows.push([target.clone(), loads, residual]);
        }
    }
    let width = |c: usize| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0);
    let (w0, w1) = (width(0), width(1));
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w - s.chars().count()));
        out.push_str(format!("{}  {}  {}", pad(&r[0], w0), pad(&r[1], w1), r[2]).trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(w0 + w1 + 4 + width(2)));
            out.push('\n');
        }
    }
    out
}

/// Searches the normal dataset for residuals and writes `bank.json` and
/// `bank_table.txt`.
pub fn generate(config: &RunConfig) -> CliResult<i32> {
    let normal = load_dataset(&config.normal_path(), config.data.integrals)?;
    let bank = generate_residual_bank(&normal, &config.search, config.mode)?;
    create_out(&config.out)?;
    let mut text = serde_json::to_string_pretty(&bank)?;
    text.push('\n');
    write_text(&config.out.join("bank.json"), &text)?;
    let targets = config.search.candidate_variables.clone().unwrap_or_else(|| normal.names().to_vec());
    let table = bank_table(&targets, &bank);
    write_text(&config.out.join("bank_table.txt"), &table)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        dataset: String,
        search: &'a ddarr::arrgen::SearchConfig,
        residuals: Vec<String>,
    }
    let body = Summary {
        dataset: display_path(&config.normal_path(), &config.out),
        search: &config.search,
        residuals: bank.iter().map(ResidualSpec::name).collect(),
    };
    write_json(&config.out.join("generate.json"), &metadata(config, "generate"), body)?;
    if bank.is_empty() {
        eprintln!("warning: no residual satisfies the acceptance threshold");
    }
    print!("{table}");
    Ok(EXIT_OK)
}

/// `path` relative to the output directory when it lies inside it, so that
/// artifacts do not depend on where the output directory is.
fn display_path(path: &Path, out: &Path) -> String {
    path.strip_prefix(out).unwrap_or(path).display().to_string()
}

fn faulty_segment(data: &FaultData, integrals: bool) -> CliResult<Dataset> {
    let ds = load_dataset(&data.path, integrals)?;
    match data.onset {
        Some(t) => Ok(ds.since(t)?),
        None => Ok(ds),
    }
}

/// Z-tests every residual against every configured fault and writes the
/// signature matrix.
pub fn evaluate(config: &RunConfig) -> CliResult<i32> {
    let bank = load_bank(&config.bank_path())?;
    let normal = load_dataset(&config.normal_path(), config.data.integrals)?;
    let faults = config
        .fault_data()
        .iter()
        .map(|f| Ok((f.name.clone(), faulty_segment(f, config.data.integrals)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let alpha = config.evaluation.effective_alpha(bank.len());
    let matrix: SignatureMatrix = isolability_matrix(&bank, &faults, &normal, alpha)?;
    create_out(&config.out)?;
    let csv = matrix.to_csv();
    write_text(&config.out.join("signature.csv"), &csv)?;
    write_json(&config.out.join("signature.json"), &metadata(config, "evaluate"), &matrix)?;
    print!("{csv}");
    for p in &matrix.pairs {
        println!(
            "{} vs {}: {}",
            p.fault_a,
            p.fault_b,
            if p.isolable { format!("isolable by {}", p.distinguishing.join(", ")) } else { "not isolable".into() }
        );
    }
    Ok(EXIT_OK)
}

/// Runs the 3σ detector over the configured fault datasets, or over `data`
/// when given. Returns [`EXIT_FAULT`] when any run raises an alarm.
pub fn detect(config: &RunConfig, data: Option<&Path>, onset: Option<f64>) -> CliResult<i32> {
    let bank = load_bank(&config.bank_path())?;
    let normal = load_dataset(&config.normal_path(), config.data.integrals)?;
    let thresholds = learn_bank_thresholds(&bank, &normal, config.detection.persistence)?;
    let targets = match data {
        Some(path) => {
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| CliError::Usage(format!("cannot name dataset {}", path.display())))?
                .to_string();
            vec![FaultData { name, path: path.to_path_buf(), onset }]
        }
        None => config.fault_data(),
    };
    create_out(&config.out)?;
    let meta = metadata(config, "detect");
    let mut any = false;
    for target in &targets {
        let ds = load_dataset(&target.path, config.data.integrals)?;
        let scenario = config.scenario_for(target);
        let report = detection_report(&bank, &ds, &scenario, &thresholds)?;
        write_json(&config.out.join(format!("detection_{}.json", target.name)), &meta, &report)?;
        let delay = report.detection_delay.map_or_else(|| "-".to_string(), |d| format!("{d:.1} s"));
        println!(
            "{}: detected={} delay={} false_alarms={}",
            target.name, report.detected, delay, report.false_alarms
        );
        any |= report.detected;
    }
    Ok(if any { EXIT_FAULT } else { EXIT_OK })
}

fn write_roc(out: &Path, name: &str, curve: &RocCurve) -> CliResult<PathBuf> {
    let path = out.join(name);
    write_text(&path, &curve.to_csv())?;
    Ok(path)
}

/// Reads `score,label` rows (label 0 or 1).
fn read_scores(path: &Path) -> CliResult<(Vec<f64>, Vec<bool>)> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').map(str::trim).collect();
    if header != ["score", "label"] {
        return Err(CliError::Validation(format!("{}: expected header `score,label`", path.display())));
    }
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let bad = || CliError::Validation(format!("{}: malformed row {}", path.display(), i + 1));
        let (s, l) = line.split_once(',').ok_or_else(bad)?;
        scores.push(s.trim().parse::<f64>().map_err(|_| bad())?);
        labels.push(match l.trim() {
            "0" => false,
            "1" => true,
            _ => return Err(bad()),
        });
    }
    Ok((scores, labels))
}

/// Compares classifiers with and without the configured residual, or scores
/// a precomputed `score,label` file.
pub fn roc(config: &RunConfig, scores: Option<&Path>) -> CliResult<i32> {
    create_out(&config.out)?;
    let meta = metadata(config, "roc");
    if let Some(path) = scores {
        let (s, l) = read_scores(path)?;
        let curve = roc_curve(&s, &l)?;
        write_roc(&config.out, "roc_scores.csv", &curve)?;
        write_json(&config.out.join("roc_scores.json"), &meta, &curve)?;
        println!("AUC {:.6}", curve.auc);
        return Ok(EXIT_OK);
    }
    let bank = load_bank(&config.bank_path())?;
    let residual = bank.iter().find(|s| s.target == config.roc.residual).ok_or_else(|| {
        CliError::Config(format!("residual bank has no residual for target `{}`", config.roc.residual))
    })?;
    let faults = config.fault_data();
    let pick = |name: &str| -> CliResult<(Dataset, f64)> {
        let f = faults
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| CliError::Config(format!("no fault dataset named `{name}`")))?;
        let onset = f.onset.ok_or_else(|| CliError::Config(format!("fault dataset `{name}` has no onset")))?;
        Ok((load_dataset(&f.path, config.data.integrals)?, onset))
    };
    let (train, train_onset) = pick(&config.roc.train)?;
    let (test, test_onset) = pick(&config.roc.test)?;
    let cmp = roc_experiment(
        Labelled { data: &train, onset: train_onset },
        Labelled { data: &test, onset: test_onset },
        &config.roc.sensors,
        Some(residual),
        &config.roc.logistic,
    )?;
    write_roc(&config.out, "roc_without.csv", &cmp.without_residual)?;
    let with = cmp.with_residual.as_ref().expect("residual supplied");
    write_roc(&config.out, "roc_with.csv", with)?;
    #[derive(Serialize)]
    struct Body<'a> {
        train: &'a str,
        test: &'a str,
        auc_without: f64,
        auc_with: f64,
        auc_gain: f64,
        comparison: &'a ddarr::detect::RocComparison,
    }
    let body = Body {
        train: &config.roc.train,
        test: &config.roc.test,
        auc_without: cmp.without_residual.auc,
        auc_with: with.auc,
        auc_gain: with.auc - cmp.without_residual.auc,
        comparison: &cmp,
    };
    write_json(&config.out.join("roc.json"), &meta, body)?;
    println!("AUC without {}: {:.4}", residual.name(), cmp.without_residual.auc);
    println!("AUC with {}: {:.4}", residual.name(), with.auc);
    Ok(EXIT_OK)
}
