use std::path::{Path, PathBuf};
use std::time::Instant;

use bss_core::metrics::metrics as support_metrics;
use bss_core::multicomponent::{
    fit as fit_model, q2, CanonicalDenominator, FitOptions, MsepSource, PickStrategy, DEFAULT_FOLDS,
};
use bss_core::oracle::exhaustive_path;
use bss_core::path::{dynamic_grid, GridConfig, PathDocument};
use bss_core::simulate::{generate, Scenario, SimConfig, Truth};
use bss_core::solver::{Method, SolverConfig};
use bss_core::{BssError, Dataset, Matrix, ModelKind, ModelSpec, PlsMode, Subset};
use serde::Serialize;

use crate::error::CliError;
use crate::io::{self, InputDigest};
use crate::{DataArgs, FitArgs, MetricsArgs, OracleArgs, PathArgs, SearchArgs, SimulateArgs};

#[derive(Debug, Serialize)]
struct Manifest<'a, F: Serialize> {
    command: &'a str,
    version: &'a str,
    flags: &'a F,
    seed: Option<u64>,
    duration_seconds: f64,
    inputs: Vec<InputDigest>,
}

fn write_manifest<F: Serialize>(
    out: &Path,
    command: &str,
    flags: &F,
    seed: Option<u64>,
    started: Instant,
    inputs: &[&Path],
) -> Result<(), CliError> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        flags,
        seed,
        duration_seconds: started.elapsed().as_secs_f64(),
        inputs: inputs.iter().map(|p| io::digest(p)).collect::<Result<_, _>>()?,
    };
    io::write_json(&out.join("manifest.json"), &manifest)
}

struct Loaded {
    kind: ModelKind,
    x: Matrix,
    y: Option<Matrix>,
    inputs: Vec<PathBuf>,
}

fn load(data: &DataArgs) -> Result<Loaded, CliError> {
    let kind: ModelKind = data.model.parse().map_err(parse_err)?;
    let x = io::read_matrix(&data.x)?;
    let mut inputs = vec![data.x.clone()];
    let y = match (&data.y, kind.needs_response()) {
        (Some(path), true) => {
            inputs.push(path.clone());
            Some(io::read_matrix(path)?)
        }
        (None, true) => {
            return Err(BssError::dimension(format!("model {kind} needs --y")).into());
        }
        (_, false) => None,
    };
    Ok(Loaded { kind, x, y, inputs })
}

fn dataset(l: &Loaded, center: bool) -> Result<Dataset, CliError> {
    Ok(if center {
        Dataset::centered(&l.x, l.y.as_ref())?.0
    } else {
        Dataset::new(l.x.clone(), l.y.clone())?
    })
}

fn parse_err(e: BssError) -> CliError {
    CliError::Parse(e.to_string())
}

fn configs(search: &SearchArgs, p: usize) -> Result<(GridConfig, SolverConfig), CliError> {
    let mut grid = GridConfig::new(search.k_max.unwrap_or(p), search.budget);
    grid.rho = search.rho;
    let method: Method = search.solver.parse().map_err(parse_err)?;
    let solver = SolverConfig {
        method,
        learning_rate: search.learning_rate,
        max_iter: search.max_iter,
        seed: search.seed,
        ..SolverConfig::default()
    };
    Ok((grid, solver))
}

fn paths_of(l: &Loaded) -> Vec<&Path> {
    l.inputs.iter().map(PathBuf::as_path).collect()
}

pub fn path(args: &PathArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let loaded = load(&args.data)?;
    let ds = dataset(&loaded, !args.data.no_center)?;
    let (grid, solver) = configs(&args.search, ds.p())?;
    let path = dynamic_grid(&ds, loaded.kind, &grid, &solver)?;

    io::ensure_dir(&args.out)?;
    io::write_json(&args.out.join("path.json"), &path.document())?;
    io::write_rows(
        &args.out.join("lambda_grid.csv"),
        &["lambda", "terminal_size"],
        path.lambda_grid
            .iter()
            .map(|g| vec![g.lambda.to_string(), g.terminal_size.to_string()]),
    )?;
    for run in path.diagnostics.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "warning: run at lambda {} failed: {}",
            run.lambda,
            run.error.as_deref().unwrap_or_default()
        );
    }
    write_manifest(&args.out, "path", args, Some(args.search.seed), started, &paths_of(&loaded))
}

fn parse_denominator(s: &str) -> Result<CanonicalDenominator, CliError> {
    match s {
        "score-cross" => Ok(CanonicalDenominator::ScoreCross),
        "response-score" => Ok(CanonicalDenominator::ResponseScore),
        other => Err(CliError::Parse(format!(
            "unknown canonical denominator {other:?} (score-cross or response-score)"
        ))),
    }
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let loaded = load(&args.data)?;
    let center = !args.data.no_center;
    let (grid, solver) = configs(&args.search, loaded.x.ncols())?;
    let mode: PlsMode = args.mode.parse().map_err(parse_err)?;
    let spec = ModelSpec::new(loaded.kind)
        .with_mode(mode)
        .with_components(args.components);
    let mut strategy: PickStrategy = args.pick.parse().map_err(parse_err)?;
    if let (PickStrategy::MinMsep(MsepSource::Folds(_)), Some(v)) = (strategy, args.folds) {
        strategy = PickStrategy::MinMsep(MsepSource::Folds(v));
    }
    let mut inputs = loaded.inputs.clone();
    let test = match &args.test {
        Some(files) => {
            let (xt, yt) = (io::read_matrix(&files[0])?, io::read_matrix(&files[1])?);
            inputs.extend(files.iter().cloned());
            Some((xt, yt))
        }
        None => None,
    };

    let mut opts = FitOptions::new(spec, strategy, grid);
    opts.solver = solver;
    opts.center = center;
    opts.seed = args.search.seed;
    opts.canonical_denominator = parse_denominator(&args.canonical_denominator)?;
    opts.test = test.clone();
    let (model, paths) = fit_model(&loaded.x, loaded.y.as_ref(), &opts)?;

    let q2_rows = match (&loaded.y, loaded.kind, mode) {
        (Some(y), ModelKind::Pls1 | ModelKind::Pls2, PlsMode::Regression) => {
            match q2(
                &loaded.x,
                y,
                spec,
                &model.supports(),
                args.folds.unwrap_or(DEFAULT_FOLDS),
                args.search.seed,
            ) {
                Ok(rows) => Some(rows),
                Err(e) => {
                    eprintln!("warning: Q2 not reported: {e}");
                    None
                }
            }
        }
        _ => None,
    };

    io::ensure_dir(&args.out)?;
    io::write_json(&args.out.join("model.json"), &model.document())?;
    let paths_doc: Vec<PathDocument> = paths.iter().map(|p| p.document()).collect();
    io::write_json(&args.out.join("paths.json"), &paths_doc)?;
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    io::write_rows(
        &args.out.join("report.csv"),
        &["h", "k", "pev", "cpev", "q2"],
        model.components.iter().enumerate().map(|(i, c)| {
            let q = q2_rows.as_ref().and_then(|rows| rows[i].total);
            vec![
                c.h.to_string(),
                c.subset.size().to_string(),
                model.pev[i].to_string(),
                model.cpev[i].to_string(),
                fmt_opt(q),
            ]
        }),
    )?;
    if let Some((xt, _)) = &test {
        let yhat = model.predict(xt)?;
        io::write_matrix(&args.out.join("predictions.csv"), &yhat, "y")?;
    }
    let input_paths: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&args.out, "fit", args, Some(args.search.seed), started, &input_paths)
}

#[derive(Debug, Serialize)]
struct MatchRow {
    k: usize,
    heuristic_bits: String,
    oracle_bits: String,
    #[serde(rename = "match")]
    matched: bool,
}

pub fn oracle(args: &OracleArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let loaded = load(&args.data)?;
    let ds = dataset(&loaded, !args.data.no_center)?;
    let max_k = args.max_k.unwrap_or(ds.p());
    let result = exhaustive_path(&ds, loaded.kind, max_k)?;

    io::ensure_dir(&args.out)?;
    io::write_json(&args.out.join("oracle.json"), &result.document())?;
    let mut inputs = loaded.inputs.clone();
    if let Some(compare) = &args.compare {
        let heuristic: PathDocument = io::read_json(compare)?;
        if heuristic.p != ds.p() {
            return Err(BssError::dimension(format!(
                "{} has p = {}, data has p = {}",
                compare.display(),
                heuristic.p,
                ds.p()
            ))
            .into());
        }
        let rows: Vec<MatchRow> = heuristic
            .buckets
            .iter()
            .filter_map(|b| {
                let oracle = result.winner(b.k)?;
                let oracle_bits = oracle.to_bit_string();
                Some(MatchRow {
                    k: b.k,
                    matched: oracle_bits == b.bits,
                    heuristic_bits: b.bits.clone(),
                    oracle_bits,
                })
            })
            .collect();
        let hits = rows.iter().filter(|r| r.matched).count();
        println!("{hits}/{} sizes match the exhaustive optimum", rows.len());
        io::write_rows(
            &args.out.join("compare.csv"),
            &["k", "heuristic_bits", "oracle_bits", "match"],
            rows.iter().map(|r| {
                vec![
                    r.k.to_string(),
                    r.heuristic_bits.clone(),
                    r.oracle_bits.clone(),
                    r.matched.to_string(),
                ]
            }),
        )?;
        inputs.push(compare.clone());
    }
    let input_paths: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    write_manifest(&args.out, "oracle", args, None, started, &input_paths)
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let scenario: Scenario = args.scenario.parse().map_err(parse_err)?;
    let mut cfg = SimConfig::defaults_for(scenario).with_seed(args.seed);
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.p {
        cfg.p = v;
    }
    if let Some(v) = args.q {
        cfg.q = v;
    }
    if let Some(v) = args.sigma {
        cfg.sigma = v;
    }
    if let Some(v) = args.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = args.snr {
        cfg.snr = v;
    }
    if let Some(v) = args.n_test {
        cfg.n_test = v;
    }
    // every parameter problem is a usage error here
    let sim = generate(&cfg).map_err(parse_err)?;

    io::ensure_dir(&args.out)?;
    io::write_matrix(&args.out.join("X.csv"), &sim.x, "x")?;
    let y_name = if scenario == Scenario::Univariate { "y" } else { "Y" };
    if let Some(y) = &sim.y {
        io::write_matrix(&args.out.join(format!("{y_name}.csv")), y, "y")?;
    }
    if let Some(x) = &sim.x_test {
        io::write_matrix(&args.out.join("X_test.csv"), x, "x")?;
    }
    if let Some(y) = &sim.y_test {
        io::write_matrix(&args.out.join(format!("{y_name}_test.csv")), y, "y")?;
    }
    io::write_json(&args.out.join("truth.json"), &sim.truth)?;
    write_manifest(&args.out, "simulate", args, Some(args.seed), started, &[])
}

/// A bit string of length `p`, or comma-separated column indices.
pub fn parse_subset(s: &str, p: usize) -> Result<Subset, CliError> {
    let s = s.trim();
    if s.len() == p && s.chars().all(|c| c == '0' || c == '1') {
        return Subset::parse_bits(s).map_err(parse_err);
    }
    let indices = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| CliError::Parse(format!("bad subset entry {t:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Subset::from_indices(p, &indices)?)
}

pub fn metrics(args: &MetricsArgs) -> Result<(), CliError> {
    let truth: Truth = io::read_json(&args.truth)?;
    let s_true = match args.component {
        None => truth.support_subset(),
        Some(h) => truth
            .component_subsets()
            .get(h.wrapping_sub(1))
            .cloned()
            .ok_or_else(|| {
                BssError::dimension(format!(
                    "truth has {} components, asked for {h}",
                    truth.supports.len()
                ))
            })?,
    };
    let s_hat = parse_subset(&args.subset, truth.p)?;
    let pair = match (&args.pred, &args.test) {
        (Some(p), Some(t)) => Some((io::read_matrix(p)?, io::read_matrix(t)?)),
        _ => None,
    };
    let report = support_metrics(&s_hat, &s_true, pair.as_ref().map(|(a, b)| (a, b)))?;
    let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let header = ["msep", "sensitivity", "specificity", "f1"];
    let row = vec![
        fmt_opt(report.msep),
        fmt_opt(report.sensitivity),
        fmt_opt(report.specificity),
        report.f1.to_string(),
    ];
    println!("{}", header.join(","));
    println!("{}", row.join(","));
    if let Some(out) = &args.out {
        io::write_rows(out, &header, [row])?;
    }
    Ok(())
}
