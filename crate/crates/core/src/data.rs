//! Dataset ingestion, vertical splitting, synthetic mixtures, standardization
//! and run-artifact serialization.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ColupiError, Result};
use crate::orchestrator::{RunReport, REPORT_SCHEMA};
use crate::stats::RankTable;
use crate::types::DataMatrix;

/// A CSV column, by header name or zero-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColumnRef {
    Name(String),
    Index(usize),
}

impl ColumnRef {
    /// Parses a plain integer as an index and anything else as a name.
    pub fn parse(s: &str) -> Self {
        s.parse().map_or_else(|_| ColumnRef::Name(s.to_string()), ColumnRef::Index)
    }

    fn resolve(&self, header: Option<&[String]>, width: usize, path: &Path) -> Result<usize> {
        let idx = match self {
            ColumnRef::Index(i) => Some(*i),
            ColumnRef::Name(name) => header.and_then(|h| h.iter().position(|c| c == name)),
        };
        idx.filter(|&i| i < width)
            .ok_or_else(|| ColupiError::InvalidData(format!("{}: no column {self:?}", path.display())))
    }
}

#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Column holding ground-truth labels; kept away from the features.
    pub label_column: Option<ColumnRef>,
    /// Non-feature columns to drop, e.g. row identifiers.
    pub ignore_columns: Vec<ColumnRef>,
}

/// Ground-truth labels as read, plus dense ids in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    pub raw: Vec<String>,
    pub ids: Vec<usize>,
    pub classes: Vec<String>,
}

impl Labels {
    pub fn from_raw(raw: Vec<String>) -> Self {
        let mut classes: Vec<String> = Vec::new();
        let ids = raw
            .iter()
            .map(|r| match classes.iter().position(|c| c == r) {
                Some(i) => i,
                None => {
                    classes.push(r.clone());
                    classes.len() - 1
                }
            })
            .collect();
        Self { raw, ids, classes }
    }

    pub fn from_ids(ids: &[usize]) -> Self {
        Self::from_raw(ids.iter().map(|i| i.to_string()).collect())
    }
}

pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<(DataMatrix, Option<Labels>)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;

    let mut records = reader.records();
    let header: Option<Vec<String>> = if opts.has_header {
        match records.next() {
            Some(r) => Some(r?.iter().map(str::to_string).collect()),
            None => return Err(ColupiError::EmptyFile(path.to_path_buf())),
        }
    } else {
        None
    };

    let mut width = header.as_ref().map(Vec::len);
    let mut feature_cols: Vec<usize> = Vec::new();
    let mut label_col = None;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;

    for (line, record) in records.enumerate() {
        let record = record?;
        // 1-based line in the file, header included.
        let row = line + 1 + usize::from(opts.has_header);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(ColupiError::RaggedRow {
                path: path.to_path_buf(),
                row,
                found: record.len(),
                expected: w,
            });
        }
        if n == 0 {
            label_col = opts
                .label_column
                .as_ref()
                .map(|c| c.resolve(header.as_deref(), w, path))
                .transpose()?;
            let ignored = opts
                .ignore_columns
                .iter()
                .map(|c| c.resolve(header.as_deref(), w, path))
                .collect::<Result<Vec<_>>>()?;
            feature_cols = (0..w)
                .filter(|c| Some(*c) != label_col && !ignored.contains(c))
                .collect();
        }
        for &c in &feature_cols {
            let cell = &record[c];
            let v: f64 = cell.parse().map_err(|_| ColupiError::NonNumericCell {
                path: path.to_path_buf(),
                row,
                col: c + 1,
                cell: cell.to_string(),
            })?;
            values.push(v);
        }
        if let Some(c) = label_col {
            labels.push(record[c].to_string());
        }
        n += 1;
    }

    if n == 0 {
        return Err(ColupiError::EmptyFile(path.to_path_buf()));
    }
    let names = match &header {
        Some(h) => feature_cols.iter().map(|&c| h[c].clone()).collect(),
        None => feature_cols.iter().map(|c| format!("f{c}")).collect(),
    };
    let matrix = Array2::from_shape_vec((n, feature_cols.len()), values)
        .expect("every row contributes one value per feature column");
    let data = DataMatrix::new(matrix, names)?;
    Ok((data, label_col.map(|_| Labels::from_raw(labels))))
}

/// Writes a header row of feature names (plus `label` if given) and one row
/// per observation, with 17 significant digits.
pub fn write_csv(path: impl AsRef<Path>, data: &DataMatrix, labels: Option<&[usize]>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header: Vec<String> = data.feature_names().to_vec();
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for i in 0..data.n_obs() {
        let mut row: Vec<String> = data.row(i).iter().map(|&v| fmt_float(v)).collect();
        if let Some(l) = labels {
            row.push(l[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| ColupiError::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> ColupiError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => ColupiError::io(path, io),
        other => ColupiError::InvalidData(format!("{}: {other:?}", path.display())),
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// Consecutive blocks of features; earlier sites take the remainder.
    Contiguous,
    /// Feature j goes to site j mod P.
    RoundRobin,
    /// A seeded shuffle followed by contiguous blocks.
    SeededRandom,
    /// Site id for every feature.
    Explicit(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub sites: usize,
    pub strategy: SplitStrategy,
}

/// Feature indices (ascending) owned by each site.
pub fn feature_assignment(n_features: usize, spec: &SplitSpec, seed: u64) -> Result<Vec<Vec<usize>>> {
    let p = spec.sites;
    if p == 0 || n_features < p {
        return Err(ColupiError::TooFewFeatures {
            features: n_features,
            sites: p,
        });
    }
    let blocks = |order: &[usize]| -> Vec<Vec<usize>> {
        let (base, extra) = (n_features / p, n_features % p);
        let mut start = 0;
        (0..p)
            .map(|s| {
                let len = base + usize::from(s < extra);
                let mut block = order[start..start + len].to_vec();
                block.sort_unstable();
                start += len;
                block
            })
            .collect()
    };
    let sites = match &spec.strategy {
        SplitStrategy::Contiguous => blocks(&(0..n_features).collect::<Vec<_>>()),
        SplitStrategy::RoundRobin => (0..p)
            .map(|s| (s..n_features).step_by(p).collect())
            .collect(),
        SplitStrategy::SeededRandom => {
            let mut order: Vec<usize> = (0..n_features).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            blocks(&order)
        }
        SplitStrategy::Explicit(assign) => {
            if assign.len() != n_features {
                return Err(ColupiError::DimensionMismatch(format!(
                    "assignment covers {} features, data has {n_features}",
                    assign.len()
                )));
            }
            if let Some(&bad) = assign.iter().find(|&&s| s >= p) {
                return Err(ColupiError::InvalidData(format!("site id {bad} out of range for {p} sites")));
            }
            (0..p)
                .map(|s| (0..n_features).filter(|&j| assign[j] == s).collect())
                .collect()
        }
    };
    if let Some(empty) = sites.iter().position(Vec::is_empty) {
        return Err(ColupiError::InvalidData(format!("site {empty} receives no features")));
    }
    Ok(sites)
}

/// Splits features across sites; every site keeps all observations.
pub fn split_vertical(data: &DataMatrix, spec: &SplitSpec, seed: u64) -> Result<Vec<DataMatrix>> {
    feature_assignment(data.n_features(), spec, seed)?
        .iter()
        .map(|cols| data.select_features(cols))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_points: usize,
    pub n_gaussians: usize,
    pub noise_fraction: f64,
    pub dims: usize,
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 2000 points in 6 dimensions: four unit-variance Gaussians plus a
    /// uniform noise component.
    pub fn mv2_like(seed: u64) -> Self {
        Self {
            n_points: 2000,
            n_gaussians: 4,
            noise_fraction: 0.2,
            dims: 6,
            separation: 6.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(ColupiError::InvalidConfig(m.to_string()));
        if self.n_gaussians < 1 {
            return fail("n_gaussians must be at least 1");
        }
        if !(0.0..1.0).contains(&self.noise_fraction) {
            return fail("noise_fraction must be in [0, 1)");
        }
        if self.dims < 1 {
            return fail("dims must be at least 1");
        }
        if !self.separation.is_finite() || self.separation < 0.0 {
            return fail("separation must be a non-negative number");
        }
        if self.n_points < 2 {
            return fail("n_points must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub data: DataMatrix,
    /// Component id per point; noise points carry `n_gaussians`.
    pub labels: Vec<usize>,
    /// Generating means, `n_gaussians` x `dims`.
    pub means: Array2<f64>,
}

const PLACEMENT_ATTEMPTS: usize = 10_000;

pub fn generate_mixture(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (g, d) = (spec.n_gaussians, spec.dims);

    let half_width = spec.separation * (g as f64).powf(1.0 / d as f64).max(1.0);
    let means = place_means(&mut rng, g, d, spec.separation, half_width)?;

    let n_noise = (spec.n_points as f64 * spec.noise_fraction).round() as usize;
    let n_signal = spec.n_points - n_noise;
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::with_capacity(spec.n_points);
    for c in 0..g {
        let count = n_signal / g + usize::from(c < n_signal % g);
        for _ in 0..count {
            let x = (0..d)
                .map(|j| means[[c, j]] + rng.sample::<f64, _>(StandardNormal))
                .collect();
            rows.push((x, c));
        }
    }

    if n_noise > 0 {
        let (mut lo, mut hi) = (vec![f64::INFINITY; d], vec![f64::NEG_INFINITY; d]);
        for (x, _) in &rows {
            for j in 0..d {
                lo[j] = lo[j].min(x[j]);
                hi[j] = hi[j].max(x[j]);
            }
        }
        if rows.is_empty() {
            lo = vec![-half_width; d];
            hi = vec![half_width; d];
        }
        for _ in 0..n_noise {
            let x = (0..d).map(|j| rng.random_range(lo[j]..=hi[j])).collect();
            rows.push((x, g));
        }
    }
    rows.shuffle(&mut rng);

    let labels = rows.iter().map(|(_, l)| *l).collect();
    let flat: Vec<f64> = rows.into_iter().flat_map(|(x, _)| x).collect();
    let data = DataMatrix::from_values(Array2::from_shape_vec((spec.n_points, d), flat).expect("n x d values"))?;
    Ok(Synthetic { data, labels, means })
}

/// Rejection-samples `g` means in `[-half_width, half_width]^d`, pairwise at
/// least `separation` apart.
fn place_means(rng: &mut ChaCha8Rng, g: usize, d: usize, separation: f64, half_width: f64) -> Result<Array2<f64>> {
    let mut means = Array2::<f64>::zeros((g, d));
    for c in 0..g {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let candidate: Vec<f64> = (0..d).map(|_| rng.random_range(-half_width..=half_width)).collect();
            let far_enough = (0..c).all(|o| {
                let dist2: f64 = means
                    .row(o)
                    .iter()
                    .zip(&candidate)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                dist2.sqrt() >= separation
            });
            if far_enough {
                means.row_mut(c).assign(&ndarray::Array1::from(candidate));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(ColupiError::Placement {
                components: g,
                separation,
                attempts: PLACEMENT_ATTEMPTS,
            });
        }
    }
    Ok(means)
}

/// Zero mean and unit population variance per feature. Constant features
/// become zeros.
pub fn standardize(data: &DataMatrix) -> DataMatrix {
    let x = data.values();
    let n = x.nrows() as f64;
    let mean = x.mean_axis(Axis(0)).expect("data has rows");
    let mut out = x.clone();
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|v| v - mean[j]);
        let std = (col.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        if std > 0.0 && std.is_finite() {
            col.mapv_inplace(|v| v / std);
        } else {
            log::warn!("feature {} is constant; mapped to zeros", data.feature_names()[j]);
            col.fill(0.0);
        }
    }
    DataMatrix::new(out, data.feature_names().to_vec()).expect("shape and finiteness preserved")
}

/// Parses a methods x datasets score table. Datasets with any missing cell
/// (`--`, `-`, `NA` or empty) are left out and returned separately.
pub fn load_score_table(path: impl AsRef<Path>) -> Result<(RankTable, Vec<String>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| ColupiError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records.next().ok_or_else(|| ColupiError::EmptyFile(path.to_path_buf()))??;
    let datasets: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let d = datasets.len();

    let mut methods = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    for (line, record) in records.enumerate() {
        let record = record?;
        let row = line + 2;
        if record.len() != d + 1 {
            return Err(ColupiError::RaggedRow {
                path: path.to_path_buf(),
                row,
                found: record.len(),
                expected: d + 1,
            });
        }
        methods.push(record[0].to_string());
        let parsed = (1..=d)
            .map(|c| {
                let cell = &record[c];
                if matches!(cell, "" | "-" | "--" | "NA" | "na" | "nan") {
                    Ok(None)
                } else {
                    cell.parse().map(Some).map_err(|_| ColupiError::NonNumericCell {
                        path: path.to_path_buf(),
                        row,
                        col: c + 1,
                        cell: cell.to_string(),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        cells.push(parsed);
    }
    if methods.is_empty() {
        return Err(ColupiError::EmptyFile(path.to_path_buf()));
    }

    let complete: Vec<usize> = (0..d).filter(|&j| cells.iter().all(|r| r[j].is_some())).collect();
    let excluded = (0..d)
        .filter(|j| !complete.contains(j))
        .map(|j| datasets[j].clone())
        .collect();
    let scores = cells
        .iter()
        .map(|r| complete.iter().map(|&j| r[j].expect("complete column")).collect())
        .collect();
    let kept = complete.iter().map(|&j| datasets[j].clone()).collect();
    Ok((RankTable::from_scores(methods, kept, scores)?, excluded))
}

/// On-disk layout of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema: String,
    /// Seconds since the Unix epoch; the only non-deterministic field.
    pub created_at: u64,
    #[serde(flatten)]
    pub report: RunReport,
}

pub const REPORT_FILE: &str = "report.json";
pub const QUALITIES_FILE: &str = "qualities.csv";

pub fn confidence_file(round: usize) -> String {
    format!("confidence_round_{round}.csv")
}

pub fn partition_file(site: usize) -> String {
    format!("final_partition_site_{site}.csv")
}

/// Writes every artifact of a run into `out_dir` and returns the paths.
pub fn write_run_report(report: &RunReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| ColupiError::io(dir, e))?;
    let mut written = Vec::new();
    let site_headers: Vec<String> = (0..report.n_sites()).map(|p| format!("site_{p}")).collect();

    let file = ReportFile {
        schema: REPORT_SCHEMA.to_string(),
        created_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        report: report.clone(),
    };
    let path = dir.join(REPORT_FILE);
    let json = serde_json::to_string_pretty(&file)?;
    fs::write(&path, json + "\n").map_err(|e| ColupiError::io(&path, e))?;
    written.push(path);

    for round in &report.rounds {
        let path = dir.join(confidence_file(round.round));
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_io(&path, e))?;
        w.write_record(std::iter::once(String::new()).chain(site_headers.iter().cloned()))?;
        for (p, row) in round.confidence.weights.iter().enumerate() {
            w.write_record(std::iter::once(site_headers[p].clone()).chain(row.iter().map(|&v| fmt_float(v))))?;
        }
        w.flush().map_err(|e| ColupiError::io(&path, e))?;
        written.push(path);
    }

    for (p, partition) in report.final_partitions.iter().enumerate() {
        let path = dir.join(partition_file(p));
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_io(&path, e))?;
        w.write_record((0..partition.n_clusters()).map(|k| format!("cluster_{k}")))?;
        for row in partition.resp().outer_iter() {
            w.write_record(row.iter().map(|&v| fmt_float(v)))?;
        }
        w.flush().map_err(|e| ColupiError::io(&path, e))?;
        written.push(path);
    }

    let path = dir.join(QUALITIES_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_io(&path, e))?;
    w.write_record(std::iter::once("round".to_string()).chain(site_headers.iter().cloned()))?;
    for (r, row) in report.quality_table().iter().enumerate() {
        w.write_record(std::iter::once(r.to_string()).chain(row.iter().map(|&v| fmt_float(v))))?;
    }
    w.flush().map_err(|e| ColupiError::io(&path, e))?;
    written.push(path);

    Ok(written)
}

pub fn read_run_report(dir: impl AsRef<Path>) -> Result<ReportFile> {
    let path = dir.as_ref().join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| ColupiError::io(&path, e))?;
    let file: ReportFile = serde_json::from_str(&text)?;
    if file.schema != REPORT_SCHEMA {
        return Err(ColupiError::InvalidData(format!(
            "{}: unsupported schema {:?}, expected {REPORT_SCHEMA:?}",
            path.display(),
            file.schema
        )));
    }
    Ok(file)
}

/// Reads a square site x site matrix written by [`write_run_report`].
pub fn read_confidence_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let (data, _) = load_csv(
        path,
        &CsvOptions {
            has_header: true,
            label_column: None,
            ignore_columns: vec![ColumnRef::Index(0)],
        },
    )?;
    Ok(data.values().outer_iter().map(|r| r.to_vec()).collect())
}
