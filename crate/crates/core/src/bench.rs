//! Monte Carlo cluster-recovery experiment over a factorial grid of sample
//! size `n`, dimension `d` and informative proportion `m`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::data::{create_parent, simulate, SimulationDesign};
use crate::error::{Error, Result};
use crate::eval::{ari, support_recovery};
use crate::fit::{fit_multistart, select_lambda, select_lambda_default, FitConfig, FitReport, LambdaGrid};

/// How the penalty is chosen for each replication.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaPolicy {
    Fixed(f64),
    /// BIC selection on every replication. `None` uses the default grid of
    /// each sample.
    PerReplication(Option<LambdaGrid>),
    /// BIC selection on the first replication of a cell; later replications
    /// reuse the selected value.
    FirstReplication(Option<LambdaGrid>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub n_values: Vec<usize>,
    pub d_values: Vec<usize>,
    pub m_values: Vec<f64>,
    pub replications: usize,
    pub starts: usize,
    pub seed: u64,
    pub k: usize,
    pub l: usize,
    /// Loading magnitude for dimensions other than 10 and 1000.
    pub c_overrides: BTreeMap<usize, f64>,
    pub lambda: LambdaPolicy,
}

impl ExperimentGrid {
    /// Desk-scale defaults: the `d = 10` half of the factorial design with 10
    /// replications and 10 starts per fit, penalty chosen by BIC.
    pub fn desk_scale(seed: u64) -> Self {
        ExperimentGrid {
            n_values: vec![100, 300],
            d_values: vec![10],
            m_values: vec![0.5, 1.0],
            replications: 10,
            starts: 10,
            seed,
            k: 3,
            l: 2,
            c_overrides: BTreeMap::new(),
            lambda: LambdaPolicy::PerReplication(None),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.d_values.is_empty() || self.m_values.is_empty() {
            return Err(Error::invalid("experiment grid needs at least one value per factor"));
        }
        if self.replications == 0 || self.starts == 0 {
            return Err(Error::invalid("replications and starts must be positive"));
        }
        if self.n_values.contains(&0) || self.d_values.contains(&0) {
            return Err(Error::invalid("n and d values must be positive"));
        }
        if self.m_values.iter().any(|m| !(*m > 0.0 && *m <= 1.0)) {
            return Err(Error::invalid("m values must lie in (0, 1]"));
        }
        if self.l == 0 || self.l > self.k {
            return Err(Error::invalid(format!("need 1 <= l <= k, got k={}, l={}", self.k, self.l)));
        }
        if let LambdaPolicy::Fixed(v) = self.lambda {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid("fixed lambda must be finite and nonnegative"));
            }
        }
        for &d in &self.d_values {
            self.loading_magnitude(d)?;
        }
        Ok(())
    }

    /// 2.5 for `d = 10`, 0.5 for `d = 1000`, otherwise the user override.
    pub fn loading_magnitude(&self, d: usize) -> Result<f64> {
        if let Some(&c) = self.c_overrides.get(&d) {
            return Ok(c);
        }
        match d {
            10 => Ok(2.5),
            1000 => Ok(0.5),
            _ => Err(Error::invalid(format!("no loading magnitude for d={d}; supply one explicitly"))),
        }
    }
}

/// One replication of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub n: usize,
    pub d: usize,
    pub m: f64,
    /// 1-based.
    pub replication: usize,
    pub ari: f64,
    pub nonzeros: usize,
    pub lambda: f64,
    pub seconds: f64,
    pub true_zero_rate: f64,
    pub true_nonzero_rate: f64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed for one (cell, replication, purpose) triple, independent of the
/// order in which replications run.
fn derive_seed(base: u64, n: usize, d: usize, m: f64, rep: usize, purpose: u64) -> u64 {
    [n as u64, d as u64, m.to_bits(), rep as u64, purpose]
        .into_iter()
        .fold(splitmix64(base), |acc, part| splitmix64(acc ^ part))
}

fn run_replication(
    grid: &ExperimentGrid,
    base: &FitConfig,
    (n, d, m): (usize, usize, f64),
    rep: usize,
    fixed_lambda: Option<f64>,
) -> Result<ResultRow> {
    let timer = Instant::now();
    let c = grid.loading_magnitude(d)?;
    let design = SimulationDesign::new(n, d, m, c, derive_seed(grid.seed, n, d, m, rep, 0)).with_clusters(grid.k, grid.l);
    let sample = simulate(&design)?;
    let cfg = FitConfig {
        k: grid.k,
        l: grid.l,
        n_starts: grid.starts,
        seed: derive_seed(grid.seed, n, d, m, rep, 1),
        ..base.clone()
    };
    let fixed = match grid.lambda {
        LambdaPolicy::Fixed(v) => Some(v),
        _ => fixed_lambda,
    };
    let report: FitReport = match (fixed, &grid.lambda) {
        (Some(v), _) => fit_multistart(&sample.data, &cfg.with_lambda(v))?,
        (None, LambdaPolicy::Fixed(_)) => unreachable!("fixed policy always carries a value"),
        (None, LambdaPolicy::PerReplication(g) | LambdaPolicy::FirstReplication(g)) => {
            match g {
                Some(g) => select_lambda(&sample.data, &cfg, g)?.report,
                None => select_lambda_default(&sample.data, &cfg)?.report,
            }
        }
    };
    let support = support_recovery(&sample.true_params.a, &report.params.a)?;
    Ok(ResultRow {
        n,
        d,
        m,
        replication: rep,
        ari: ari(&sample.true_labels, &report.hard_labels)?,
        nonzeros: report.nonzero_loadings(),
        lambda: report.lambda,
        seconds: timer.elapsed().as_secs_f64(),
        true_zero_rate: support.true_zero_rate,
        true_nonzero_rate: support.true_nonzero_rate,
    })
}

fn with_cell<T>(r: Result<T>, (n, d, m): (usize, usize, f64), replication: usize) -> Result<T> {
    r.map_err(|e| Error::Cell {
        n,
        d,
        m,
        replication,
        source: Box::new(e),
    })
}

fn map_reps<F>(reps: std::ops::RangeInclusive<usize>, f: F) -> Vec<Result<ResultRow>>
where
    F: Fn(usize) -> Result<ResultRow> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        reps.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        reps.map(f).collect()
    }
}

/// Runs every cell × replication and returns rows ordered by `n`, `d`, `m`
/// and replication. `base` supplies the inner solver settings; its `k`, `l`,
/// starts and seed are replaced from the grid.
pub fn run_grid(grid: &ExperimentGrid, base: &FitConfig) -> Result<Vec<ResultRow>> {
    grid.validate()?;
    let mut rows = Vec::new();
    for &n in &grid.n_values {
        for &d in &grid.d_values {
            for &m in &grid.m_values {
                let cell = (n, d, m);
                let (fixed, rest) = match grid.lambda {
                    LambdaPolicy::FirstReplication(_) => {
                        let first = with_cell(run_replication(grid, base, cell, 1, None), cell, 1)?;
                        let lambda = first.lambda;
                        rows.push(first);
                        (Some(lambda), 2..=grid.replications)
                    }
                    _ => (None, 1..=grid.replications),
                };
                for (rep, row) in rest.clone().zip(map_reps(rest, |rep| run_replication(grid, base, cell, rep, fixed))) {
                    rows.push(with_cell(row, cell, rep)?);
                }
            }
        }
    }
    Ok(rows)
}

/// Five-number summary of the ARI within one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub n: usize,
    pub d: usize,
    pub m: f64,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile by linear interpolation between order statistics: position
/// `h = (len - 1) p` in the sorted sample (the common "type 7" rule).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-cell summaries in order of first appearance.
pub fn summarize(rows: &[ResultRow]) -> Result<Vec<CellSummary>> {
    if rows.is_empty() {
        return Err(Error::invalid("no result rows to summarize"));
    }
    let mut cells: Vec<((usize, usize, u64), Vec<f64>)> = Vec::new();
    for r in rows {
        let key = (r.n, r.d, r.m.to_bits());
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.ari),
            None => cells.push((key, vec![r.ari])),
        }
    }
    Ok(cells
        .into_iter()
        .map(|((n, d, m), mut v)| {
            v.sort_by(f64::total_cmp);
            CellSummary {
                n,
                d,
                m: f64::from_bits(m),
                count: v.len(),
                min: v[0],
                q1: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q3: quantile(&v, 0.75),
                max: v[v.len() - 1],
            }
        })
        .collect())
}

pub const RESULTS_HEADER: &str = "n,d,m,replication,ari,nonzeros,lambda,seconds";

pub fn write_results<W: Write>(rows: &[ResultRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{},{},{}", r.n, r.d, r.m, r.replication, r.ari, r.nonzeros, r.lambda, r.seconds)?;
    }
    Ok(())
}

pub fn write_results_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    create_parent(path)?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write_results(rows, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub const SUMMARY_HEADER: &str = "n,d,m,count,min,q1,median,q3,max";

pub fn write_summary<W: Write>(cells: &[CellSummary], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for c in cells {
        writeln!(out, "{},{},{},{},{},{},{},{},{}", c.n, c.d, c.m, c.count, c.min, c.q1, c.median, c.q3, c.max)?;
    }
    Ok(())
}
