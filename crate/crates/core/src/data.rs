//! Synthetic mixture data, k-means++ component allocation and CSV I/O.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradkit::Tensor;
use crate::rng::{fill_standard_normal, seeded};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub labels: Option<Vec<usize>>,
    pub source: String,
}

impl Dataset {
    pub fn new(x: Tensor, labels: Option<Vec<usize>>, source: impl Into<String>) -> Result<Self> {
        if x.rank() != 2 {
            return Err(Error::shape("dataset", format!("expected a matrix, got {:?}", x.shape())));
        }
        if !x.is_finite() {
            return Err(Error::InvalidArgument("dataset contains non-finite values".into()));
        }
        if let Some(l) = &labels {
            if l.len() != x.rows() {
                return Err(Error::InvalidArgument(format!("{} labels for {} rows", l.len(), x.rows())));
            }
        }
        Ok(Self {
            x,
            labels,
            source: source.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }
}

/// Axis-aligned Gaussian mixture with `n_per_component` draws per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub n_per_component: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    /// Two components at `[±3.5, 0, …, 0]` with variance `diag(0.5, 1, …, 1)`.
    pub fn two_cluster(dim: usize, n_per_component: usize, seed: u64) -> Self {
        let mut means = vec![vec![0.0; dim], vec![0.0; dim]];
        means[0][0] = -3.5;
        means[1][0] = 3.5;
        let mut var = vec![1.0; dim];
        var[0] = 0.5;
        Self {
            means,
            variances: vec![var.clone(), var],
            n_per_component,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.means.is_empty() || d == 0 {
            return Err(Error::InvalidArgument("synthetic spec needs at least one non-empty mean".into()));
        }
        if self.variances.len() != self.means.len() {
            return Err(Error::InvalidArgument(format!(
                "{} means but {} variance vectors",
                self.means.len(),
                self.variances.len()
            )));
        }
        for (m, v) in self.means.iter().zip(&self.variances) {
            if m.len() != d || v.len() != d {
                return Err(Error::InvalidArgument("inconsistent dimensions in synthetic spec".into()));
            }
            if v.iter().any(|s| !(*s > 0.0 && s.is_finite())) || m.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument("synthetic variances must be positive and means finite".into()));
            }
        }
        Ok(())
    }
}

/// Sample the mixture in component order; labels record the component.
pub fn gen_mixture(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let d = spec.dim();
    let n = spec.n_per_component * spec.means.len();
    let mut rng = seeded(spec.seed);
    let mut data = vec![0.0; n * d];
    fill_standard_normal(&mut rng, &mut data);
    let mut labels = Vec::with_capacity(n);
    for (c, (m, v)) in spec.means.iter().zip(&spec.variances).enumerate() {
        for r in 0..spec.n_per_component {
            let row = &mut data[(c * spec.n_per_component + r) * d..][..d];
            for j in 0..d {
                row[j] = m[j] + v[j].sqrt() * row[j];
            }
            labels.push(c);
        }
    }
    Dataset::new(Tensor::matrix(n, d, data)?, Some(labels), "synthetic-mixture")
}

/// `n` draws from N(0, variance·I).
pub fn gen_ood(dim: usize, n: usize, variance: f64, seed: u64) -> Result<Dataset> {
    if dim == 0 {
        return Err(Error::InvalidArgument("ood data needs dim ≥ 1".into()));
    }
    if !(variance > 0.0) {
        return Err(Error::InvalidArgument(format!("ood variance must be positive, got {variance}")));
    }
    let mut rng = seeded(seed);
    let mut data = vec![0.0; n * dim];
    fill_standard_normal(&mut rng, &mut data);
    let sd = variance.sqrt();
    data.iter_mut().for_each(|v| *v *= sd);
    Dataset::new(Tensor::matrix(n, dim, data)?, None, "synthetic-ood")
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every Lloyd iteration.
    pub inertia_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding: first centre uniform, then D² sampling.
fn kmeans_pp<R: Rng>(x: &Tensor, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = x.rows();
    let mut centroids = vec![x.row(rng.gen_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|r| sq_dist(x.row(r), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = x.row(pick).to_vec();
        for (r, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(r), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm from k-means++ seeding, until the assignment stops
/// changing or `max_iter` iterations. A cluster that empties is re-seeded at
/// the point farthest from its current centroid (lowest index on ties).
pub fn kmeans(x: &Tensor, k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    let n = x.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must be in 1..={n}, got {k}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be ≥ 1".into()));
    }
    let d = x.cols();
    let mut rng = seeded(seed);
    let mut centroids = kmeans_pp(x, k, &mut rng);
    let mut assignment: Vec<usize> = (0..n).map(|r| nearest(x.row(r), &centroids).0).collect();
    let mut trace = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        // Update step.
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for r in 0..n {
            let c = assignment[r];
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(x.row(r)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            } else {
                let far = (0..n)
                    .map(|r| (r, sq_dist(x.row(r), &centroids[c])))
                    .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
                centroids[c] = x.row(far.0).to_vec();
            }
        }
        // Assignment step.
        let mut changed = false;
        let mut inertia = 0.0;
        for r in 0..n {
            let (c, dist) = nearest(x.row(r), &centroids);
            inertia += dist;
            if c != assignment[r] {
                assignment[r] = c;
                changed = true;
            }
        }
        trace.push(inertia);
        if !changed {
            break;
        }
    }

    let inertia = (0..n).map(|r| sq_dist(x.row(r), &centroids[assignment[r]])).sum();
    Ok(KMeansResult {
        centroids,
        assignment,
        inertia,
        iterations,
        inertia_trace: trace,
    })
}

/// How training rows are matched to prior components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum AssignmentMode {
    Labels,
    Kmeans {
        k: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
}

fn default_max_iter() -> usize {
    100
}

/// Reorder k-means clusters so cluster `i` has the `i`-th smallest centroid
/// first coordinate. Returns the relabelled assignment and centroids.
pub fn canonicalize(result: &KMeansResult) -> (Vec<usize>, Vec<Vec<f64>>) {
    let mut order: Vec<usize> = (0..result.centroids.len()).collect();
    order.sort_by(|&a, &b| result.centroids[a][0].total_cmp(&result.centroids[b][0]).then(a.cmp(&b)));
    let mut rank = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let assignment = result.assignment.iter().map(|&c| rank[c]).collect();
    let centroids = order.iter().map(|&o| result.centroids[o].clone()).collect();
    (assignment, centroids)
}

pub fn assign_components(data: &Dataset, mode: &AssignmentMode) -> Result<Vec<usize>> {
    match mode {
        AssignmentMode::Labels => data
            .labels
            .clone()
            .ok_or_else(|| Error::InvalidArgument(format!("dataset {:?} has no labels", data.source))),
        AssignmentMode::Kmeans { k, seed, max_iter } => {
            let r = kmeans(&data.x, *k, *seed, *max_iter)?;
            Ok(canonicalize(&r).0)
        }
    }
}

/// Write `x0,…,x{d-1}[,label]` with full round-trip precision. `comment`
/// lines are written first, each prefixed with `# `.
pub fn csv_write(path: &Path, data: &Dataset, comment: &[String]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    for c in comment {
        writeln!(out, "# {c}").map_err(io)?;
    }
    let d = data.dim();
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    if data.labels.is_some() {
        header.push("label".into());
    }
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    let mut line = String::new();
    for r in 0..data.len() {
        line.clear();
        for (j, v) in data.x.row(r).iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            // `{:?}` prints the shortest string that parses back exactly.
            line.push_str(&format!("{v:?}"));
        }
        if let Some(l) = &data.labels {
            line.push_str(&format!(",{}", l[r]));
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Streaming CSV reader; lines starting with `#` are skipped.
pub fn csv_read(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(std::io::BufReader::new(file));
    let parse_err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(e.position().map_or(1, |p| p.line()), e.to_string()))?
        .clone();
    let has_label = headers.iter().last() == Some("label");
    let d = headers.len() - usize::from(has_label);
    for (j, h) in headers.iter().take(d).enumerate() {
        if h != format!("x{j}") {
            return Err(parse_err(1, format!("header column {j} is {h:?}, expected \"x{j}\"")));
        }
    }
    if d == 0 {
        return Err(parse_err(1, "no feature columns".into()));
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(parse_err(e.position().map_or(0, |p| p.line()), e.to_string())),
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(parse_err(line, format!("expected {} fields, got {}", headers.len(), record.len())));
        }
        for j in 0..d {
            let v: f64 = record[j]
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("bad number {:?} in column x{j}", &record[j])))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value in column x{j}")));
            }
            values.push(v);
        }
        if has_label {
            let l: usize = record[d]
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("bad label {:?}", &record[d])))?;
            labels.push(l);
        }
    }
    let n = values.len() / d;
    Dataset::new(
        Tensor::matrix(n, d, values)?,
        has_label.then_some(labels),
        path.display().to_string(),
    )
}
