//! Toy 2D samplers, Gaussian-mixture oracles and tabular CSV ingestion.
//!
//! CSV format accepted by [`parse_csv`]: UTF-8, comma separated, an optional
//! single header row, plain decimal numbers (anything `f64::from_str` takes
//! that is finite), no quoting, no comment lines. Blank lines are skipped; a
//! trailing newline is optional. Every data row must have the same number of
//! fields.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::app::seeds::{stream, stream_rng};
use crate::error::{Error, Result};
use crate::samples::Samples;

/// Isotropic Gaussian mixture with a shared standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    sigma: f64,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, sigma: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        if weights.len() != means.len() {
            return Err(Error::DimensionMismatch {
                what: "mixture means vs weights",
                expected: weights.len(),
                actual: means.len(),
            });
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::invalid("weights", "all weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("weights", format!("sum to {total}, not 1")));
        }
        let d = means[0].len();
        if d == 0 || means.iter().any(|m| m.len() != d) {
            return Err(Error::invalid("means", "all means need the same positive dimension"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", format!("{sigma} must be positive")));
        }
        Ok(GaussianMixture { weights, means, sigma })
    }

    /// `k` equal-weight components evenly spaced on a circle of the given radius.
    pub fn ring(k: usize, radius: f64, sigma: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Empty("mixture components"));
        }
        let means = (0..k)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / k as f64;
                vec![radius * a.cos(), radius * a.sin()]
            })
            .collect();
        GaussianMixture::new(vec![1.0 / k as f64; k], means, sigma)
    }

    /// The 8-component benchmark: unit circle, σ = 0.1.
    pub fn eight_gaussians() -> Self {
        GaussianMixture::ring(8, 1.0, 0.1).expect("valid mixture")
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Samples {
        let d = self.dim();
        let mut out = Samples::zeros(n, d);
        for row in out.as_mut_slice().chunks_exact_mut(d) {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut comp = self.weights.len() - 1;
            for (i, w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    comp = i;
                    break;
                }
            }
            for (v, m) in row.iter_mut().zip(&self.means[comp]) {
                let g: f64 = StandardNormal.sample(rng);
                *v = m + self.sigma * g;
            }
        }
        out
    }

    /// Exact log-density (log-sum-exp over components).
    pub fn logpdf(&self, x: &[f64]) -> f64 {
        let d = self.dim() as f64;
        let s2 = self.sigma * self.sigma;
        let norm = -0.5 * d * (2.0 * PI * s2).ln();
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.means)
            .map(|(w, m)| {
                let r2: f64 = x.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum();
                w.ln() + norm - 0.5 * r2 / s2
            })
            .collect();
        let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (w, mu) in self.weights.iter().zip(&self.means) {
            for (a, b) in m.iter_mut().zip(mu) {
                *a += w * b;
            }
        }
        m
    }
}

/// Polar rose `r = cos(kθ)` with uniform θ plus isotropic noise. Even `k`
/// gives `2k` petals, odd `k` gives `k`.
pub fn sample_rose<R: Rng + ?Sized>(n: usize, petals: u32, noise: f64, rng: &mut R) -> Result<Samples> {
    if petals == 0 {
        return Err(Error::invalid("petals", "must be at least 1"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid("noise", format!("{noise} must be non-negative")));
    }
    let mut out = Samples::zeros(n, 2);
    for row in out.as_mut_slice().chunks_exact_mut(2) {
        let theta = rng.gen_range(0.0..2.0 * PI);
        let r = (petals as f64 * theta).cos();
        let gx: f64 = StandardNormal.sample(rng);
        let gy: f64 = StandardNormal.sample(rng);
        row[0] = r * theta.cos() + noise * gx;
        row[1] = r * theta.sin() + noise * gy;
    }
    Ok(out)
}

/// 4×4 checkerboard on `[−2, 2]²`; cell `(i, j)` is occupied when `i + j` is even.
pub fn sample_checkerboard<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Samples {
    let mut out = Samples::zeros(n, 2);
    for row in out.as_mut_slice().chunks_exact_mut(2) {
        let cell = rng.gen_range(0..8usize);
        let i = cell / 2;
        let j = 2 * (cell % 2) + (i % 2);
        row[0] = -2.0 + i as f64 + rng.gen::<f64>();
        row[1] = -2.0 + j as f64 + rng.gen::<f64>();
    }
    out
}

/// Cell index `(i, j)` in `0..4` of a point in `[−2, 2]²`.
pub fn checkerboard_cell(x: &[f64]) -> Option<(usize, usize)> {
    let inside = |v: f64| (-2.0..=2.0).contains(&v);
    if !(inside(x[0]) && inside(x[1])) {
        return None;
    }
    let idx = |v: f64| ((v + 2.0).floor() as usize).min(3);
    Some((idx(x[0]), idx(x[1])))
}

#[derive(Debug, Error, PartialEq)]
pub enum CsvError {
    #[error("CSV input is empty")]
    Empty,
    #[error("CSV line {line}: expected {expected} fields, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("CSV line {line}, column {column}: '{field}' is not a finite number")]
    NonNumeric { line: usize, column: usize, field: String },
    #[error("CSV line {line}: quoted fields are not supported")]
    Quoted { line: usize },
}

/// Parse CSV text into a row-major matrix. Line and column numbers in errors are 1-based.
pub fn parse_csv(text: &str, has_header: bool) -> std::result::Result<Samples, CsvError> {
    let mut width = None;
    let mut data = Vec::new();
    let mut header_pending = has_header;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let row = raw.strip_suffix('\r').unwrap_or(raw);
        if row.trim().is_empty() {
            continue;
        }
        if row.contains('"') {
            return Err(CsvError::Quoted { line });
        }
        let fields: Vec<&str> = row.split(',').collect();
        if header_pending {
            header_pending = false;
            width = Some(fields.len());
            continue;
        }
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(CsvError::Ragged {
                line,
                expected,
                found: fields.len(),
            });
        }
        for (c, f) in fields.iter().enumerate() {
            let v = f
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CsvError::NonNumeric {
                    line,
                    column: c + 1,
                    field: f.to_string(),
                })?;
            data.push(v);
        }
    }
    match width {
        Some(w) if !data.is_empty() => Ok(Samples::new(w, data).expect("width checked per row")),
        _ => Err(CsvError::Empty),
    }
}

/// Write samples as CSV, one point per row, shortest round-trip float formatting.
pub fn to_csv(samples: &Samples, header: Option<&[&str]>) -> String {
    let mut s = String::new();
    if let Some(h) = header {
        s.push_str(&h.join(","));
        s.push('\n');
    }
    for row in samples.rows() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

/// Standardized train/test split of a tabular dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSet {
    pub name: String,
    pub train: Samples,
    pub test: Samples,
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
    pub test_fraction: f64,
}

impl TabularSet {
    /// Shuffle rows with `seed`, hold out `test_fraction` of them, and
    /// standardize both splits with the train split's column statistics.
    pub fn from_matrix(name: &str, matrix: &Samples, test_fraction: f64, seed: u64) -> Result<Self> {
        if matrix.is_empty() {
            return Err(Error::Empty("tabular matrix"));
        }
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::invalid("test_fraction", format!("{test_fraction} must lie in [0, 1)")));
        }
        let n = matrix.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream_rng(seed, stream::SPLIT));
        let n_test = ((n as f64) * test_fraction).round() as usize;
        let n_test = n_test.min(n - 1);
        let test_indices = order[..n_test].to_vec();
        let train_indices = order[n_test..].to_vec();
        let raw_train = matrix.gather(&train_indices);
        let column_means = raw_train.mean();
        let column_stds: Vec<f64> = raw_train.variance().iter().map(|v| v.sqrt()).collect();
        if let Some(c) = column_stds.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::invalid(
                "data",
                format!("column {} is constant on the train split", c + 1),
            ));
        }
        let mut set = TabularSet {
            name: name.to_string(),
            train: raw_train,
            test: matrix.gather(&test_indices),
            column_means,
            column_stds,
            train_indices,
            test_indices,
            seed,
            test_fraction,
        };
        set.train = set.standardize(&set.train)?;
        set.test = set.standardize(&set.test)?;
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.column_means.len()
    }

    pub fn standardize(&self, xs: &Samples) -> Result<Samples> {
        self.affine(xs, |v, m, s| (v - m) / s)
    }

    pub fn destandardize(&self, xs: &Samples) -> Result<Samples> {
        self.affine(xs, |v, m, s| v * s + m)
    }

    fn affine(&self, xs: &Samples, f: impl Fn(f64, f64, f64) -> f64) -> Result<Samples> {
        if xs.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "tabular columns",
                expected: self.dim(),
                actual: xs.dim(),
            });
        }
        let d = self.dim();
        let data = xs
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, self.column_means[i % d], self.column_stds[i % d]))
            .collect();
        Samples::new(d, data)
    }
}

/// Read and split a CSV file. See the module docs for the accepted format.
pub fn load_csv(path: &Path, has_header: bool, test_fraction: f64, seed: u64) -> Result<TabularSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let matrix = parse_csv(&text, has_header)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    TabularSet::from_matrix(&name, &matrix, test_fraction, seed)
}
