use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Parser, Subcommand};
use lpcmci::bench::{
    oracle_check, oracle_suite_config, parse_experiments, run_experiment, run_method, CiKind, LinkClass, Method,
    MethodSpec,
};
use lpcmci::ci::{CiTest, GTest, ParCorr};
use lpcmci::data::DataFrame;
use lpcmci::discovery::{run_lpcmci, LpcmciConfig};
use lpcmci::graph::WindowGraph;
use lpcmci::model::GroundTruthModel;
use lpcmci::simulate::{default_burn_in, random_model, sample_with_burn_in, ModelConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "lpcmci", version, about = "Causal discovery for time series with latent confounders")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw or load a model and write a sampled time series as CSV.
    #[command(group(ArgGroup::new("source").required(true).args(["config", "model", "example"])))]
    Simulate {
        /// Random model family (model config JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Fixed model (model JSON).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Built-in model: the three-variable latent confounder example.
        #[arg(long)]
        example: bool,
        /// Number of time steps.
        #[arg(short = 'T', long = "length")]
        t: usize,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Data CSV to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write the model JSON here.
        #[arg(long)]
        model_out: Option<PathBuf>,
    },
    /// Estimate a graph from a data CSV.
    Discover {
        data: PathBuf,
        #[arg(long, default_value = "lpcmci", value_parser = parse_method)]
        method: Method,
        #[arg(long, default_value = "parcorr", value_parser = parse_data_ci)]
        ci: CiKind,
        #[arg(long, default_value_t = 0.05, value_parser = parse_alpha)]
        alpha: f64,
        #[arg(long)]
        tau_max: usize,
        /// Preliminary iterations (LPCMCI only).
        #[arg(long, default_value_t = 0)]
        k: usize,
        /// Cap on conditioning-set size in the last removal phase.
        #[arg(long)]
        max_cond: Option<usize>,
        /// Graph JSON to write.
        #[arg(long)]
        out: PathBuf,
        /// Write every CI test of an LPCMCI run as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run LPCMCI with the oracle CI test and compare to the true PAG.
    #[command(group(ArgGroup::new("target").required(true).args(["model", "batch"])))]
    OracleCheck {
        model: Option<PathBuf>,
        #[arg(long)]
        tau_max: usize,
        #[arg(long, default_value_t = 0)]
        k: usize,
        /// Compare against this graph JSON instead of the true PAG.
        #[arg(long, conflicts_with = "batch")]
        expected: Option<PathBuf>,
        /// Check this many generated models instead of one file.
        #[arg(long)]
        batch: Option<usize>,
        /// Model config JSON for batch mode; defaults to the oracle suite family.
        #[arg(long, requires = "batch")]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an experiment config and write the report.
    Benchmark {
        config: PathBuf,
        /// Added to the seed_base of every cell.
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Report JSON to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write a CSV table.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha must lie in (0, 1), got {a}"))
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

fn parse_data_ci(s: &str) -> Result<CiKind, String> {
    match s.parse()? {
        CiKind::Oracle => Err("the oracle test needs a model; use oracle-check".into()),
        c => Ok(c),
    }
}

fn seed_or_generate(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        println!("seed: {s}");
        s
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn simulate(
    config: Option<PathBuf>,
    model: Option<PathBuf>,
    t: usize,
    burn_in: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    model_out: Option<PathBuf>,
) -> Result<()> {
    let seed = seed_or_generate(seed);
    let (model_seed, data_seed) = lpcmci::bench::replication_seeds(seed);
    let m = if let Some(p) = config {
        let cfg: ModelConfig = serde_json::from_str(&read(&p)?).with_context(|| format!("invalid model config {}", p.display()))?;
        random_model(&cfg, model_seed)?
    } else if let Some(p) = model {
        GroundTruthModel::from_json_str(&read(&p)?).with_context(|| format!("invalid model {}", p.display()))?
    } else {
        GroundTruthModel::latent_confounder_example()
    };
    let burn = burn_in.unwrap_or_else(|| default_burn_in(&m));
    let data = sample_with_burn_in(&m, t, burn, data_seed)?;
    data.write_csv_path(out, m.is_discrete())?;
    if let Some(p) = model_out {
        write(&p, &m.to_json_string())?;
    }
    println!("wrote {} rows x {} columns to {}", data.n_rows(), data.n_cols(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn discover(
    data: &Path,
    method: Method,
    ci: CiKind,
    alpha: f64,
    tau_max: usize,
    k: usize,
    max_cond: Option<usize>,
    out: &Path,
    trace: Option<PathBuf>,
) -> Result<()> {
    if trace.is_some() && method != Method::Lpcmci {
        bail!("--trace is only available for --method lpcmci");
    }
    let df = DataFrame::read_csv_path(data)?;
    df.validate()?;
    if df.n_rows() <= tau_max + 10 {
        bail!("T = {} rows is too short for tau_max = {}; need T > tau_max + 10", df.n_rows(), tau_max);
    }
    let mut test: Box<dyn CiTest> = match ci {
        CiKind::Gtest => Box::new(GTest::new(&df)),
        _ => Box::new(ParCorr::new(&df)),
    };
    let start = Instant::now();
    let graph = if let Some(path) = trace {
        let mut cfg = LpcmciConfig::new(tau_max, alpha, k);
        if max_cond.is_some() {
            cfg.max_cond_nonancestral = max_cond;
        }
        cfg.trace = true;
        let st = run_lpcmci(&mut test, &cfg)?;
        write(&path, &serde_json::to_string_pretty(&st.trace)?)?;
        report_warnings(&st.warnings);
        st.graph
    } else {
        let spec = MethodSpec { method, k, alpha, tau_max, max_cond };
        let o = run_method(&spec, &mut test)?;
        report_warnings(&o.warnings);
        o.graph
    };
    let secs = start.elapsed().as_secs_f64();
    write(out, &graph.to_json_string())?;
    print_summary(&graph, secs);
    Ok(())
}

fn report_warnings(w: &[String]) {
    if !w.is_empty() {
        eprintln!("{} degenerate tests treated as dependent; first: {}", w.len(), w[0]);
    }
}

fn print_summary(g: &WindowGraph, secs: f64) {
    let mut by = [0usize; 3];
    for (i, tau, j, _) in g.canonical_edges() {
        by[LinkClass::ALL.iter().position(|&c| c == LinkClass::of(i, tau, j)).unwrap()] += 1;
    }
    println!("edges: {} total", g.n_edges());
    for (c, n) in LinkClass::ALL.iter().zip(by) {
        println!("  {}: {n}", c.name());
    }
    for line in g.to_string().lines() {
        println!("  {line}");
    }
    println!("runtime: {secs:.3}s");
}

fn oracle_check_cmd(
    model: Option<PathBuf>,
    tau_max: usize,
    k: usize,
    expected: Option<PathBuf>,
    batch: Option<usize>,
    config: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<bool> {
    if let Some(n) = batch {
        let seed = seed_or_generate(seed);
        let cfg: Option<ModelConfig> = match config {
            Some(p) => Some(serde_json::from_str(&read(&p)?).with_context(|| format!("invalid model config {}", p.display()))?),
            None => None,
        };
        let mut passed = 0;
        for r in 0..n {
            let c = cfg.clone().unwrap_or_else(|| oracle_suite_config(r));
            let s = seed.wrapping_add(r as u64);
            let m = random_model(&c, s).with_context(|| format!("model {r} (seed {s})"))?;
            let res = oracle_check(&m, tau_max, k, None).map_err(anyhow::Error::msg)?;
            if res.passed() {
                passed += 1;
            } else {
                println!("FAIL model {r} (seed {s}), {} unsound marks:", res.violations.len());
                for d in &res.diff {
                    println!("  {d}");
                }
            }
        }
        println!("PASS {passed}/{n}");
        return Ok(passed == n);
    }
    let p = model.expect("clap enforces model or batch");
    let m = GroundTruthModel::from_json_str(&read(&p)?).with_context(|| format!("invalid model {}", p.display()))?;
    let exp = match expected {
        Some(e) => Some(WindowGraph::from_json_str(&read(&e)?).with_context(|| format!("invalid graph {}", e.display()))?),
        None => None,
    };
    let res = oracle_check(&m, tau_max, k, exp.as_ref()).map_err(anyhow::Error::msg)?;
    if res.passed() {
        println!("PASS");
    } else {
        println!("FAIL: {} differing edges (estimated vs expected)", res.diff.len());
        for d in &res.diff {
            println!("  {d}");
        }
    }
    Ok(res.passed())
}

fn benchmark(config: &Path, seed: u64, jobs: usize, out: &Path, csv: Option<PathBuf>) -> Result<()> {
    let mut cells = parse_experiments(&read(config)?)?;
    for c in &mut cells {
        c.seed_base = c.seed_base.wrapping_add(seed);
    }
    let report = run_experiment(&cells, jobs)?;
    write(out, &report.to_json_string()?)?;
    if let Some(p) = csv {
        write(&p, &report.to_csv()?)?;
    }
    for (n, c) in report.cells.iter().enumerate() {
        let m = &c.metrics;
        println!(
            "cell {n} {}: ok {}/{}{} | contemp recall {:.3} | lagged FPR {:.3} | {:.3}s/run",
            c.config.method,
            c.n_ok,
            c.config.reps,
            if c.failed { " FAILED" } else { "" },
            m.contemporaneous.edgemark_recall.value,
            m.lagged_cross.adj_fpr.value,
            c.runtime.mean_s
        );
        for e in c.errors.iter().take(3) {
            eprintln!("  cell {n} seed {}: {}", e.seed, e.message);
        }
    }
    if report.cells.iter().any(|c| c.failed) {
        bail!("at least one cell had more than 10% failed replications");
    }
    Ok(())
}

fn run(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Simulate { config, model, example: _, t, burn_in, seed, out, model_out } => {
            simulate(config, model, t, burn_in, seed, &out, model_out)?;
        }
        Cmd::Discover { data, method, ci, alpha, tau_max, k, max_cond, out, trace } => {
            discover(&data, method, ci, alpha, tau_max, k, max_cond, &out, trace)?;
        }
        Cmd::OracleCheck { model, tau_max, k, expected, batch, config, seed } => {
            return oracle_check_cmd(model, tau_max, k, expected, batch, config, seed);
        }
        Cmd::Benchmark { config, seed, jobs, out, csv } => benchmark(&config, seed, jobs, &out, csv)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
