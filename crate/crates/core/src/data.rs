//! Binary datasets: CSV ingestion, label files and the synthetic block design.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::orthonormalize_columns;
use crate::model::{inverse_logit, ModelParams};

/// An N×D matrix of 0/1 responses together with its sign coding `q = 2y - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_rows: usize,
    n_cols: usize,
    y: Vec<u8>,
    q: Vec<f64>,
}

impl Dataset {
    /// Builds a dataset from row-major 0/1 values.
    pub fn from_flat(n_rows: usize, n_cols: usize, y: Vec<u8>) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::Dimension(format!("dataset must be nonempty, got {n_rows}x{n_cols}")));
        }
        if y.len() != n_rows * n_cols {
            return Err(Error::Dimension(format!("{} values for a {n_rows}x{n_cols} dataset", y.len())));
        }
        if let Some(i) = y.iter().position(|&v| v > 1) {
            return Err(Error::invalid(format!(
                "entry ({}, {}) is {}, expected 0 or 1",
                i / n_cols,
                i % n_cols,
                y[i]
            )));
        }
        let q = y.iter().map(|&v| 2.0 * v as f64 - 1.0).collect();
        Ok(Dataset { n_rows, n_cols, y, q })
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Dimension(format!("row {r} has {} entries, expected {d}", rows[r].len())));
        }
        Self::from_flat(rows.len(), d, rows.concat())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn y(&self, n: usize, d: usize) -> u8 {
        self.y[n * self.n_cols + d]
    }

    #[inline]
    pub fn q(&self, n: usize, d: usize) -> f64 {
        self.q[n * self.n_cols + d]
    }

    pub fn y_row(&self, n: usize) -> &[u8] {
        &self.y[n * self.n_cols..(n + 1) * self.n_cols]
    }

    pub fn q_row(&self, n: usize) -> &[f64] {
        &self.q[n * self.n_cols..(n + 1) * self.n_cols]
    }

    /// Column means of `y`.
    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.n_cols];
        for n in 0..self.n_rows {
            for (m, &v) in means.iter_mut().zip(self.y_row(n)) {
                *m += v as f64;
            }
        }
        means.iter_mut().for_each(|m| *m /= self.n_rows as f64);
        means
    }

    /// Parses comma-separated 0/1 cells. Errors carry 1-based row and column
    /// numbers counted in the file (header included).
    pub fn read_csv<R: std::io::Read>(reader: R, has_header: bool, origin: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut y = Vec::new();
        let mut width = None;
        let mut n_rows = 0;
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 1 + has_header as usize;
            let rec = rec.map_err(|e| Error::invalid(format!("{}: line {line}: {e}", origin.display())))?;
            if rec.len() == 1 && rec[0].is_empty() {
                continue;
            }
            let expected = *width.get_or_insert(rec.len());
            if rec.len() != expected {
                return Err(Error::RaggedRow {
                    path: origin.to_path_buf(),
                    row: line,
                    expected,
                    found: rec.len(),
                });
            }
            for (j, cell) in rec.iter().enumerate() {
                y.push(match cell {
                    "0" => 0,
                    "1" => 1,
                    other => {
                        return Err(Error::BadCell {
                            path: origin.to_path_buf(),
                            row: line,
                            col: j + 1,
                            found: other.to_string(),
                        })
                    }
                });
            }
            n_rows += 1;
        }
        match width {
            Some(d) if n_rows > 0 => Self::from_flat(n_rows, d, y),
            _ => Err(Error::EmptyFile(origin.to_path_buf())),
        }
    }

    pub fn write_csv_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = String::with_capacity(2 * self.n_cols);
        for n in 0..self.n_rows {
            line.clear();
            for (j, v) in self.y_row(n).iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push(if *v == 1 { '1' } else { '0' });
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }
}

pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Dataset::read_csv(std::io::BufReader::new(file), has_header, path)
}

/// Writes the dataset without a header; missing parent directories are created.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    create_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    data.write_csv_to(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

/// Reads one 1-based integer label per line; blank lines are skipped.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: usize = t.parse().map_err(|_| Error::BadLabel {
            path: path.to_path_buf(),
            line: i + 1,
            msg: format!("{t:?} is not a nonnegative integer"),
        })?;
        labels.push(v);
    }
    Ok(labels)
}

pub fn write_labels(labels: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    create_parent(path)?;
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Factor settings of the synthetic block design.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationDesign {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub l: usize,
    /// Proportion of informative variables, in `(0, 1]`.
    pub m: f64,
    /// Loading magnitude on the logit scale.
    pub c: f64,
    pub seed: u64,
    /// Mixing proportions; `None` means equal proportions.
    pub mixing: Option<Vec<f64>>,
    /// Apply a seed-driven random rotation to the centroid configuration.
    pub rotate: bool,
}

impl SimulationDesign {
    /// Three clusters in two dimensions with equal proportions.
    pub fn new(n: usize, d: usize, m: f64, c: f64, seed: u64) -> Self {
        SimulationDesign {
            n,
            d,
            k: 3,
            l: 2,
            m,
            c,
            seed,
            mixing: None,
            rotate: false,
        }
    }

    pub fn with_clusters(mut self, k: usize, l: usize) -> Self {
        self.k = k;
        self.l = l;
        self
    }

    /// Rows per informative block: `floor(m D / L)`, i.e. `floor(m D / 2)` in
    /// the two-dimensional design.
    pub fn block_rows(&self) -> usize {
        (self.m * self.d as f64 / self.l as f64 + 1e-9).floor() as usize
    }

    /// Number of pure-noise variables.
    pub fn noise_rows(&self) -> usize {
        self.d - self.l * self.block_rows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.k == 0 || self.l == 0 {
            return Err(Error::invalid("n, d, k and l must be positive"));
        }
        if self.l > self.k {
            return Err(Error::invalid(format!("l={} must not exceed k={}", self.l, self.k)));
        }
        if !(self.m > 0.0 && self.m <= 1.0) {
            return Err(Error::invalid(format!("m must lie in (0, 1], got {}", self.m)));
        }
        if !self.c.is_finite() {
            return Err(Error::invalid("c must be finite"));
        }
        if let Some(mix) = &self.mixing {
            if mix.len() != self.k || mix.iter().any(|&p| !(p >= 0.0)) || (mix.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::invalid("mixing proportions must be K nonnegative values summing to 1"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedSample {
    pub data: Dataset,
    /// Generating cluster of each row, 1-based.
    pub true_labels: Vec<usize>,
    pub true_params: ModelParams,
}

/// Centroid configuration: the first `l` columns of a Fourier basis of the
/// centered vectors on `k` points (a regular `k`-gon for `l = 2`, so an
/// equilateral triangle when `k = 3`), followed by a constant column if
/// `l = k`. Columns are orthonormalized.
pub fn centroid_scores(k: usize, l: usize) -> DMatrix<f64> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    for j in 1..=k / 2 {
        let angle = |i: usize| 2.0 * std::f64::consts::PI * (j * i) as f64 / k as f64;
        cols.push((0..k).map(|i| angle(i).cos()).collect());
        if 2 * j != k {
            cols.push((0..k).map(|i| angle(i).sin()).collect());
        }
    }
    cols.push(vec![1.0; k]);
    let raw = DMatrix::from_fn(k, l, |i, j| cols[j][i]);
    orthonormalize_columns(&raw)
}

/// Draws a dataset from the block design: `mu = 0`, loadings `c` on `L`
/// disjoint blocks of `block_rows()` variables, zero rows for the rest.
pub fn simulate(design: &SimulationDesign) -> Result<SimulatedSample> {
    design.validate()?;
    let SimulationDesign { n, d, k, l, .. } = *design;
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);

    let mut f = centroid_scores(k, l);
    if design.rotate {
        let g = DMatrix::from_fn(l, l, |_, _| rng.sample::<f64, _>(StandardNormal));
        f = &f * g.qr().q();
    }
    let d1 = design.block_rows();
    let mut a = DMatrix::zeros(d, l);
    for col in 0..l {
        for row in col * d1..(col + 1) * d1 {
            a[(row, col)] = design.c;
        }
    }
    let xi = match &design.mixing {
        Some(m) => DVector::from_vec(m.clone()),
        None => DVector::from_element(k, 1.0 / k as f64),
    };
    let params = ModelParams {
        xi,
        mu: DVector::zeros(d),
        f,
        a,
    };
    params.validate()?;

    let theta = params.theta();
    let prob = theta.map(inverse_logit);
    let picker = WeightedIndex::new(params.xi.iter().copied()).map_err(|e| Error::invalid(e.to_string()))?;
    let mut labels = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n * d);
    for _ in 0..n {
        let c = picker.sample(&mut rng);
        labels.push(c + 1);
        for j in 0..d {
            y.push(u8::from(rng.random::<f64>() < prob[(c, j)]));
        }
    }
    Ok(SimulatedSample {
        data: Dataset::from_flat(n, d, y)?,
        true_labels: labels,
        true_params: params,
    })
}
