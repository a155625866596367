//! Command-line front end. Summary lines on stdout start with `#`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{run_grid, summarize, write_results_csv, write_summary, ExperimentGrid, LambdaPolicy};
use crate::data::{load_csv, read_labels, simulate, write_csv, write_labels, Dataset, SimulationDesign};
use crate::error::{Error, Result};
use crate::eval::adjusted_rand_index;
use crate::fit::{fit_multistart, select_lambda, select_lambda_default, FitConfig, FitReport, LambdaGrid, LambdaRow};
use crate::linalg::count_nonzero;
use crate::model::{bic, log_likelihood, ModelDocument};
use crate::scores::estimate_scores;
use crate::stiefel::GpConfig;

#[derive(Debug, Parser)]
#[command(name = "sparsemix", version, about = "Sparse subspace clustering of binary data")]
pub struct Cli {
    /// Worker threads for multi-start fits and benchmark replications
    /// (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic block-design sample.
    Simulate(SimulateArgs),
    /// Fit the model for one penalty value.
    Fit(FitArgs),
    /// Choose the penalty by BIC over a grid.
    Select(SelectArgs),
    /// Estimate per-row subspace scores from a fitted model.
    Scores(ScoresArgs),
    /// Adjusted Rand Index of two label files.
    Eval(EvalArgs),
    /// Run the cluster-recovery experiment grid.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub l: usize,
    /// Proportion of informative variables, in (0, 1].
    #[arg(long)]
    pub m: f64,
    /// Loading magnitude.
    #[arg(long)]
    pub c: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Randomly rotate the cluster configuration.
    #[arg(long)]
    pub rotate: bool,
    /// Output directory for data.csv, labels.txt and truth.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Binary data CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// The first line of the data file is a header.
    #[arg(long)]
    pub header: bool,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub l: usize,
    #[arg(long, default_value_t = 50)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
}

impl ModelArgs {
    fn config(&self, lambda: f64) -> FitConfig {
        FitConfig {
            max_outer_iters: self.max_iter,
            outer_tol: self.tol,
            ..FitConfig::new(self.k, self.l, lambda).with_starts(self.starts).with_seed(self.seed)
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, conflicts_with = "auto_lambda", required_unless_present = "auto_lambda")]
    pub lambda: Option<f64>,
    /// Pick the penalty by BIC over the default grid.
    #[arg(long)]
    pub auto_lambda: bool,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated ascending penalty values; defaults to a 20-point grid.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoresArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Fitted model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Labels appended as a final `label` column.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value = "scores.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub labels_a: PathBuf,
    #[arg(long)]
    pub labels_b: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [100, 300])]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [10])]
    pub d: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0])]
    pub m: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub replications: usize,
    #[arg(long, default_value_t = 10)]
    pub starts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 2)]
    pub l: usize,
    /// Full factorial grid: d in {10, 1000}, 50 replications, 50 starts.
    #[arg(long)]
    pub full: bool,
    /// Loading magnitude for other dimensions, as `D=C` pairs.
    #[arg(long, value_delimiter = ',')]
    pub c: Vec<String>,
    /// Fixed penalty instead of BIC selection.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Select the penalty on the first replication of each cell only.
    #[arg(long, conflicts_with = "lambda")]
    pub first_replication: bool,
    #[arg(long, default_value = "results.csv")]
    pub out: PathBuf,
    /// Per-cell quartile summary CSV.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn check_lambda(v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::invalid(format!("lambda must be finite and nonnegative, got {v}")))
    }
}

pub fn parse_grid(text: &str) -> Result<LambdaGrid> {
    let values = text
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad grid value {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    LambdaGrid::new(values)
}

fn print_summary(report: &FitReport) {
    println!("# loglik {:.6}", report.loglik);
    println!("# penalized {:.6}", report.penalized);
    println!("# bic {:.6}", report.bic);
    println!("# lambda {}", report.lambda);
    println!("# nonzero_loadings {}", report.nonzero_loadings());
    println!("# iterations {} converged {}", report.iterations, report.converged);
    if !report.empty_clusters.is_empty() {
        eprintln!("warning: clusters {:?} became empty during fitting", report.empty_clusters);
    }
}

fn responsibilities_csv(report: &FitReport) -> String {
    let u = &report.responsibilities.u;
    let mut text = (1..=u.ncols()).map(|k| format!("u{k}")).collect::<Vec<_>>().join(",");
    text.push('\n');
    for row in u.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    text
}

/// Cluster positions `f_k` and variable loadings `a_d` in the subspace.
fn plot_csv(report: &FitReport) -> String {
    let p = &report.params;
    let mut text = String::from("kind,index,xi");
    for l in 1..=p.n_dims() {
        let _ = write!(text, ",dim{l}");
    }
    text.push('\n');
    for k in 0..p.n_clusters() {
        let _ = write!(text, "centroid,{},{}", k + 1, p.xi[k]);
        for v in p.f.row(k).iter() {
            let _ = write!(text, ",{v}");
        }
        text.push('\n');
    }
    for d in 0..p.n_vars() {
        let _ = write!(text, "loading,{},", d + 1);
        for v in p.a.row(d).iter() {
            let _ = write!(text, ",{v}");
        }
        text.push('\n');
    }
    text
}

fn bic_csv(table: &[LambdaRow]) -> String {
    let mut text = String::from("lambda,loglik,df,bic,nonzeros\n");
    for r in table {
        let _ = writeln!(text, "{},{},{},{},{}", r.lambda, r.loglik, r.df, r.bic, r.nonzeros);
    }
    text
}

fn write_fit_outputs(report: &FitReport, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    ModelDocument::new(&report.params, report.lambda, report.loglik, report.bic).write(out.join("model.json"))?;
    write_text(&out.join("responsibilities.csv"), &responsibilities_csv(report))?;
    write_labels(&report.hard_labels, out.join("labels.txt"))?;
    write_text(&out.join("plot.csv"), &plot_csv(report))
}

fn load(args: &DataArgs) -> Result<Dataset> {
    load_csv(&args.data, args.header)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let design = SimulationDesign {
        rotate: a.rotate,
        ..SimulationDesign::new(a.n, a.d, a.m, a.c, a.seed).with_clusters(a.k, a.l)
    };
    let s = simulate(&design)?;
    ensure_dir(&a.out)?;
    write_csv(&s.data, a.out.join("data.csv"))?;
    write_labels(&s.true_labels, a.out.join("labels.txt"))?;
    let ll = log_likelihood(&s.data, &s.true_params);
    ModelDocument::new(&s.true_params, 0.0, ll, bic(&s.data, &s.true_params)).write(a.out.join("truth.json"))?;
    println!("# wrote {} rows x {} columns to {}", a.n, a.d, a.out.display());
    Ok(())
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let data = load(&a.data)?;
    let report = if a.auto_lambda {
        let cfg = a.model.config(0.0);
        cfg.validate()?;
        select_lambda_default(&data, &cfg)?.report
    } else {
        let lambda = check_lambda(a.lambda.expect("clap requires --lambda without --auto-lambda"))?;
        fit_multistart(&data, &a.model.config(lambda))?
    };
    write_fit_outputs(&report, &a.out)?;
    print_summary(&report);
    Ok(())
}

fn cmd_select(a: &SelectArgs) -> Result<()> {
    let data = load(&a.data)?;
    let cfg = a.model.config(0.0);
    cfg.validate()?;
    let sel = match &a.grid {
        Some(text) => select_lambda(&data, &cfg, &parse_grid(text)?)?,
        None => select_lambda_default(&data, &cfg)?,
    };
    ensure_dir(&a.out)?;
    write_text(&a.out.join("bic.csv"), &bic_csv(&sel.table))?;
    let r = &sel.report;
    ModelDocument::new(&r.params, r.lambda, r.loglik, r.bic).write(a.out.join("model.json"))?;
    println!("# selected lambda {}", sel.best_lambda);
    print_summary(r);
    Ok(())
}

fn cmd_scores(a: &ScoresArgs) -> Result<()> {
    let data = load(&a.data)?;
    let params = ModelDocument::read(&a.model)?.params()?;
    let labels = a.labels.as_ref().map(read_labels).transpose()?;
    if let Some(l) = &labels {
        if l.len() != data.n_rows() {
            return Err(Error::Dimension(format!("{} labels for {} rows", l.len(), data.n_rows())));
        }
    }
    if count_nonzero(&params.a) == 0 {
        eprintln!("warning: all loadings are zero; scores are the initializer and carry no information");
    }
    let est = estimate_scores(&data, &params, &GpConfig::default())?;
    let mut text = (1..=params.n_dims()).map(|l| format!("g{l}")).collect::<Vec<_>>().join(",");
    if labels.is_some() {
        text.push_str(",label");
    }
    text.push('\n');
    for (n, row) in est.scores.g.row_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&cells.join(","));
        if let Some(l) = &labels {
            let _ = write!(text, ",{}", l[n]);
        }
        text.push('\n');
    }
    write_text(&a.out, &text)?;
    println!("# score objective {:.6} (initial {:.6}, {} iterations)", est.objective, est.initial_objective, est.iterations);
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let x = read_labels(&a.labels_a)?;
    let y = read_labels(&a.labels_b)?;
    let out = adjusted_rand_index(&x, &y)?;
    println!("{:.6}", out.value);
    if out.degenerate {
        eprintln!("warning: chance correction undefined for these partitions");
    }
    Ok(())
}

fn parse_overrides(pairs: &[String]) -> Result<BTreeMap<usize, f64>> {
    pairs
        .iter()
        .map(|p| {
            let (d, c) = p.split_once('=').ok_or_else(|| Error::invalid(format!("expected D=C, got {p:?}")))?;
            let d = d.trim().parse().map_err(|_| Error::invalid(format!("bad dimension in {p:?}")))?;
            let c = c.trim().parse().map_err(|_| Error::invalid(format!("bad magnitude in {p:?}")))?;
            Ok((d, c))
        })
        .collect()
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let mut grid = ExperimentGrid {
        n_values: a.n.clone(),
        d_values: a.d.clone(),
        m_values: a.m.clone(),
        replications: a.replications,
        starts: a.starts,
        seed: a.seed,
        k: a.k,
        l: a.l,
        c_overrides: parse_overrides(&a.c)?,
        lambda: match (a.lambda, a.first_replication) {
            (Some(v), _) => LambdaPolicy::Fixed(check_lambda(v)?),
            (None, true) => LambdaPolicy::FirstReplication(None),
            (None, false) => LambdaPolicy::PerReplication(None),
        },
    };
    if a.full {
        grid.n_values = vec![100, 300];
        grid.d_values = vec![10, 1000];
        grid.m_values = vec![0.5, 1.0];
        grid.replications = 50;
        grid.starts = 50;
    }
    let rows = run_grid(&grid, &FitConfig::new(grid.k, grid.l, 0.0))?;
    write_results_csv(&rows, &a.out)?;
    let cells = summarize(&rows)?;
    for c in &cells {
        println!(
            "# n={} d={} m={} ari min {:.3} q1 {:.3} median {:.3} q3 {:.3} max {:.3}",
            c.n, c.d, c.m, c.min, c.q1, c.median, c.q3, c.max
        );
    }
    if let Some(path) = &a.summary {
        let mut buf = Vec::new();
        write_summary(&cells, &mut buf).expect("writing to memory");
        write_text(path, &String::from_utf8(buf).expect("ascii summary"))?;
    }
    Ok(())
}

fn configure_threads(threads: usize) {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        // a second initialization only fails when a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

pub fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads);
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Select(a) => cmd_select(a),
        Command::Scores(a) => cmd_scores(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    }
}
