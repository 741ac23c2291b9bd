//! Paired multi-modal datasets: CSV ingest, unit normalization, stratified
//! subsampling, and a synthetic generator with known ground truth.
//!
//! Files are sample-per-row CSV (the common export shape); internally every
//! modality is stored column-per-sample as a `d x n` matrix so that column
//! `i` of every modality describes document `i`. Labels live in a separate
//! single-column CSV of integers `1..=c`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, Mat};

/// A set of feature matrices over the same samples, in the same order.
///
/// Invariants checked on construction: at least one modality, all modalities
/// share the sample count, all entries finite, and labels (when present)
/// cover `1..=c` with every class id used at least once.
#[derive(Clone, Debug)]
pub struct PairedDataset {
    modalities: Vec<Mat>,
    labels: Option<Vec<usize>>,
    names: Option<Vec<String>>,
}

impl PairedDataset {
    pub fn new(modalities: Vec<Mat>, labels: Option<Vec<usize>>) -> Result<Self> {
        if modalities.is_empty() {
            return Err(Error::ShapeError("dataset needs at least one modality".into()));
        }
        let n = modalities[0].ncols();
        if n == 0 {
            return Err(Error::ShapeError("dataset has no samples".into()));
        }
        for (i, m) in modalities.iter().enumerate() {
            if m.ncols() != n {
                return Err(Error::ShapeError(format!(
                    "modality {} has {} samples, expected {}",
                    i,
                    m.ncols(),
                    n
                )));
            }
            if !all_finite(m) {
                return Err(Error::ShapeError(format!("modality {i} contains non-finite entries")));
            }
        }
        if let Some(ref l) = labels {
            validate_labels(l, n)?;
        }
        Ok(Self { modalities, labels, names: None })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.modalities.len() {
            return Err(Error::ShapeError(format!(
                "{} names for {} modalities",
                names.len(),
                self.modalities.len()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn n_samples(&self) -> usize {
        self.modalities[0].ncols()
    }

    pub fn n_modalities(&self) -> usize {
        self.modalities.len()
    }

    pub fn modality(&self, i: usize) -> &Mat {
        &self.modalities[i]
    }

    pub fn modalities(&self) -> &[Mat] {
        &self.modalities
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Number of classes, i.e. the largest label.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| *l.iter().max().unwrap())
    }

    /// New dataset keeping the given sample columns (same selection applied
    /// to every modality and to the labels), preserving the pairing.
    pub fn select_columns(&self, idx: &[usize]) -> Result<PairedDataset> {
        let n = self.n_samples();
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::ShapeError(format!("column index {bad} out of range {n}")));
        }
        let modalities = self
            .modalities
            .iter()
            .map(|m| {
                let mut out = Mat::zeros(m.nrows(), idx.len());
                for (dst, &src) in idx.iter().enumerate() {
                    out.set_column(dst, &m.column(src));
                }
                out
            })
            .collect();
        let labels = self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect());
        // A sub-view of a valid labeling may legitimately drop whole
        // classes, so class coverage is not re-validated here.
        Ok(PairedDataset { modalities, labels, names: self.names.clone() })
    }

    /// Replaces every modality with its unit-normalized version; returns per
    /// modality the indices of zero columns that were left untouched.
    pub fn normalize_columns(&self) -> (PairedDataset, Vec<Vec<usize>>) {
        let mut warn = Vec::new();
        let modalities = self
            .modalities
            .iter()
            .map(|m| {
                let (normed, zeros) = unit_normalize_columns(m);
                warn.push(zeros);
                normed
            })
            .collect();
        let ds = PairedDataset {
            modalities,
            labels: self.labels.clone(),
            names: self.names.clone(),
        };
        (ds, warn)
    }
}

fn validate_labels(labels: &[usize], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::ShapeError(format!("{} labels for {} samples", labels.len(), n)));
    }
    let c = *labels.iter().max().unwrap_or(&0);
    if c == 0 {
        return Err(Error::LabelError { label: 0, c: 0 });
    }
    let mut seen = vec![false; c];
    for &l in labels {
        if l == 0 {
            return Err(Error::LabelError { label: 0, c });
        }
        seen[l - 1] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::LabelError { label: missing + 1, c });
    }
    Ok(())
}

/// Loads a sample-per-row numeric CSV and returns the transposed `d x n`
/// feature matrix (column-per-sample). Row and column indices in errors are
/// 1-based file coordinates.
pub fn load_modality_csv(path: &Path) -> Result<Mat> {
    load_modality_csv_opts(path, false)
}

/// [`load_modality_csv`] with an optional single header row to skip.
pub fn load_modality_csv_opts(path: &Path, skip_header: bool) -> Result<Mat> {
    let reader = BufReader::new(File::open(path)?);
    let mut flat: Vec<f64> = Vec::new();
    let mut n_cols = 0usize;
    let mut n_rows = 0usize;
    for (line_idx, line) in reader.lines().enumerate() {
        let line = line?;
        let row_no = line_idx + 1;
        if skip_header && line_idx == 0 {
            continue;
        }
        if line.trim().is_empty() {
            // Tolerate a trailing newline but nothing in the middle.
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if n_rows == 0 {
            n_cols = cells.len();
        } else if cells.len() != n_cols {
            return Err(Error::MalformedInput {
                row: row_no,
                reason: format!("{} fields, expected {}", cells.len(), n_cols),
            });
        }
        for (col_idx, cell) in cells.iter().enumerate() {
            let trimmed = cell.trim();
            let value: f64 = trimmed.parse().map_err(|_| Error::ParseError {
                row: row_no,
                col: col_idx + 1,
                value: trimmed.to_string(),
            })?;
            if !value.is_finite() {
                return Err(Error::ParseError {
                    row: row_no,
                    col: col_idx + 1,
                    value: trimmed.to_string(),
                });
            }
            flat.push(value);
        }
        n_rows += 1;
    }
    if n_rows == 0 || n_cols == 0 {
        return Err(Error::MalformedInput { row: 1, reason: "file has no data rows".into() });
    }
    // Rows are samples; transpose into the internal column-per-sample shape.
    Ok(Mat::from_row_slice(n_rows, n_cols, &flat).transpose())
}

/// Writes a `d x n` modality back to sample-per-row CSV. Values are printed
/// with the shortest round-trip representation, so a reload reproduces the
/// matrix exactly.
pub fn save_modality_csv(m: &Mat, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for j in 0..m.ncols() {
        let row: Vec<String> = (0..m.nrows()).map(|i| format!("{}", m[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Loads a single-column CSV of integer class ids `1..=c`.
pub fn load_labels_csv(path: &Path) -> Result<Vec<usize>> {
    let reader = BufReader::new(File::open(path)?);
    let mut labels = Vec::new();
    for (line_idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let trimmed = line.trim();
        let value: usize = trimmed.parse().map_err(|_| Error::ParseError {
            row: line_idx + 1,
            col: 1,
            value: trimmed.to_string(),
        })?;
        labels.push(value);
    }
    if labels.is_empty() {
        return Err(Error::MalformedInput { row: 1, reason: "label file has no rows".into() });
    }
    Ok(labels)
}

pub fn save_labels_csv(labels: &[usize], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in labels {
        writeln!(w, "{l}")?;
    }
    Ok(())
}

/// Scales every column to unit l2 norm. Zero columns are left as zero and
/// reported in the second return value instead of failing.
pub fn unit_normalize_columns(x: &Mat) -> (Mat, Vec<usize>) {
    let mut out = x.clone();
    let mut zeros = Vec::new();
    for j in 0..x.ncols() {
        let norm = x.column(j).norm();
        if norm == 0.0 {
            zeros.push(j);
        } else {
            let scaled = x.column(j) / norm;
            out.set_column(j, &scaled);
        }
    }
    (out, zeros)
}

/// Draws exactly `per_class` samples from every class, applying the same
/// column selection to every modality. Deterministic for a fixed seed;
/// selected samples are grouped by ascending class id.
pub fn stratified_subsample(ds: &PairedDataset, per_class: usize, seed: u64) -> Result<PairedDataset> {
    let labels = ds
        .labels()
        .ok_or_else(|| Error::InvalidConfig("stratified subsampling requires labels".into()))?;
    let c = ds.num_classes().unwrap();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l - 1].push(i);
    }
    for (class_idx, members) in by_class.iter().enumerate() {
        if members.len() < per_class {
            return Err(Error::InsufficientSamples {
                class: class_idx + 1,
                available: members.len(),
                requested: per_class,
            });
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut selected = Vec::with_capacity(per_class * c);
    for members in &mut by_class {
        members.shuffle(&mut rng);
        selected.extend_from_slice(&members[..per_class]);
    }
    ds.select_columns(&selected)
}

/// Configuration for the synthetic paired-subspace generator.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    /// Number of modalities, at least 2.
    pub modalities: usize,
    /// Number of clusters (classes).
    pub clusters: usize,
    /// Samples drawn per cluster.
    pub points_per_cluster: usize,
    /// Ambient feature dimension per modality (length = `modalities`).
    pub ambient_dims: Vec<usize>,
    /// Dimension of the random linear subspace underlying each cluster.
    pub subspace_dim: usize,
    /// Standard deviation of additive Gaussian noise.
    pub noise_sigma: f64,
    /// Fraction of samples whose pairing is corrupted: those samples get
    /// independently redrawn latent coefficients in every modality after
    /// the first, breaking the pairwise constraint for them.
    pub outlier_pair_fraction: f64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.modalities < 2 {
            return Err(Error::InvalidConfig("need at least 2 modalities".into()));
        }
        if self.clusters == 0 || self.points_per_cluster == 0 {
            return Err(Error::InvalidConfig("clusters and points_per_cluster must be positive".into()));
        }
        if self.ambient_dims.len() != self.modalities {
            return Err(Error::InvalidConfig(format!(
                "{} ambient dims for {} modalities",
                self.ambient_dims.len(),
                self.modalities
            )));
        }
        if self.subspace_dim == 0 {
            return Err(Error::InvalidConfig("subspace_dim must be positive".into()));
        }
        for (i, &d) in self.ambient_dims.iter().enumerate() {
            if self.subspace_dim >= d {
                return Err(Error::InvalidConfig(format!(
                    "subspace_dim {} must be < ambient dim {} of modality {}",
                    self.subspace_dim, d, i
                )));
            }
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig("noise_sigma must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_pair_fraction) {
            return Err(Error::InvalidConfig("outlier_pair_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.clusters * self.points_per_cluster
    }
}

/// A generated dataset plus the indices of corrupted pairs.
#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub data: PairedDataset,
    /// Sample indices whose pairing was broken (ascending).
    pub corrupted: Vec<usize>,
}

/// Generates paired multi-modal data: per cluster, each modality gets its
/// own random orthonormal basis, while the latent coefficient vector of a
/// sample is shared across modalities. Shared coefficients realize the
/// pairwise constraint; modalities live in different ambient spaces but
/// carry a common latent structure.
pub fn generate_synthetic_paired(cfg: &SynthConfig, seed: u64) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let m = cfg.modalities;
    let c = cfg.clusters;
    let s = cfg.subspace_dim;
    let n = cfg.n_samples();

    // One orthonormal basis per (cluster, modality).
    let mut bases: Vec<Vec<Mat>> = Vec::with_capacity(c);
    for _ in 0..c {
        let mut per_modality = Vec::with_capacity(m);
        for &d in &cfg.ambient_dims {
            let g = Mat::from_fn(d, s, |_, _| StandardNormal.sample(&mut rng));
            per_modality.push(g.qr().q());
        }
        bases.push(per_modality);
    }

    let mut columns: Vec<Vec<DVector<f64>>> = (0..m).map(|_| Vec::with_capacity(n)).collect();
    let mut labels = Vec::with_capacity(n);
    for k in 0..c {
        for _ in 0..cfg.points_per_cluster {
            let coeff = DVector::from_fn(s, |_, _| StandardNormal.sample(&mut rng));
            for (modality, cols) in columns.iter_mut().enumerate() {
                let mut col = &bases[k][modality] * &coeff;
                if cfg.noise_sigma > 0.0 {
                    for v in col.iter_mut() {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        *v += cfg.noise_sigma * e;
                    }
                }
                cols.push(col);
            }
            labels.push(k + 1);
        }
    }

    // Corrupt the pairing for a fixed count of samples: redraw independent
    // latent coefficients in every modality after the first.
    let n_corrupt = (cfg.outlier_pair_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut corrupted: Vec<usize> = order.into_iter().take(n_corrupt).collect();
    corrupted.sort_unstable();
    for &idx in &corrupted {
        let k = labels[idx] - 1;
        for modality in 1..m {
            let coeff = DVector::from_fn(s, |_, _| StandardNormal.sample(&mut rng));
            let mut col = &bases[k][modality] * &coeff;
            if cfg.noise_sigma > 0.0 {
                for v in col.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *v += cfg.noise_sigma * e;
                }
            }
            columns[modality][idx] = col;
        }
    }

    let modalities: Vec<Mat> = columns
        .into_iter()
        .enumerate()
        .map(|(i, cols)| {
            Mat::from_fn(cfg.ambient_dims[i], n, |r, col_idx| cols[col_idx][r])
        })
        .collect();
    let data = PairedDataset::new(modalities, Some(labels))?;
    Ok(SyntheticDataset { data, corrupted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::io::Write as _;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_csv_transposes() {
        let f = write_temp("1,2\n3,4\n");
        let m = load_modality_csv(f.path()).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (2, 2));
        // Column 0 is the first sample (1, 2).
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(1, 0)], 2.0);
        assert_eq!(m[(0, 1)], 3.0);
        assert_eq!(m[(1, 1)], 4.0);
    }

    #[test]
    fn load_csv_empty_file_is_malformed() {
        let f = write_temp("");
        assert!(matches!(load_modality_csv(f.path()), Err(Error::MalformedInput { .. })));
    }

    #[test]
    fn load_csv_ragged_row_reports_position() {
        let f = write_temp("1,2\n3\n");
        match load_modality_csv(f.path()) {
            Err(Error::MalformedInput { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected MalformedInput, got {other:?}"),
        }
    }

    #[test]
    fn load_csv_bad_cell_reports_coordinates() {
        let f = write_temp("1,2\n3,abc\n");
        match load_modality_csv(f.path()) {
            Err(Error::ParseError { row, col, value }) => {
                assert_eq!((row, col), (2, 2));
                assert_eq!(value, "abc");
            }
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn csv_roundtrip_exact() {
        let m = Mat::from_row_slice(3, 2, &[0.1, -2.5e-7, 1.0 / 3.0, 4.0, 5.5, 0.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        save_modality_csv(&m, &path).unwrap();
        let back = load_modality_csv(&path).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn normalize_three_four_five() {
        let x = Mat::from_row_slice(2, 1, &[3.0, 4.0]);
        let (n, zeros) = unit_normalize_columns(&x);
        assert!(zeros.is_empty());
        assert_relative_eq!(n[(0, 0)], 0.6, epsilon = 1e-12);
        assert_relative_eq!(n[(1, 0)], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn normalize_idempotent_and_reports_zero_columns() {
        let x = Mat::from_row_slice(2, 2, &[3.0, 0.0, 4.0, 0.0]);
        let (once, zeros) = unit_normalize_columns(&x);
        assert_eq!(zeros, vec![1]);
        let (twice, _) = unit_normalize_columns(&once);
        assert_relative_eq!(once, twice, epsilon = 1e-15);
        assert_eq!(once.column(1).norm(), 0.0);
    }

    #[test]
    fn labels_must_cover_every_class() {
        let m = Mat::zeros(2, 3);
        // Label 3 present but 2 missing.
        let err = PairedDataset::new(vec![m.clone()], Some(vec![1, 1, 3]));
        assert!(matches!(err, Err(Error::LabelError { label: 2, .. })));
        assert!(PairedDataset::new(vec![m], Some(vec![1, 2, 2])).is_ok());
    }

    fn toy_dataset() -> PairedDataset {
        // Modality B columns mirror modality A plus an offset so pairing is
        // checkable after subsampling.
        let a = Mat::from_fn(2, 6, |r, c| (c * 10 + r) as f64);
        let b = Mat::from_fn(3, 6, |r, c| 1000.0 + (c * 10 + r) as f64);
        let labels = vec![1, 1, 1, 2, 2, 2];
        PairedDataset::new(vec![a, b], Some(labels)).unwrap()
    }

    #[test]
    fn subsample_deterministic_and_paired() {
        let ds = toy_dataset();
        let s1 = stratified_subsample(&ds, 2, 44).unwrap();
        let s2 = stratified_subsample(&ds, 2, 44).unwrap();
        assert_eq!(s1.modality(0), s2.modality(0));
        assert_eq!(s1.labels(), s2.labels());
        assert_eq!(s1.n_samples(), 4);
        // Column tags confirm the same selection hit both modalities.
        for j in 0..s1.n_samples() {
            assert_relative_eq!(s1.modality(1)[(0, j)] - s1.modality(0)[(0, j)], 1000.0);
        }
    }

    #[test]
    fn subsample_full_class_is_permutation() {
        let ds = toy_dataset();
        let s = stratified_subsample(&ds, 3, 7).unwrap();
        let mut tags: Vec<i64> = (0..s.n_samples()).map(|j| s.modality(0)[(0, j)] as i64).collect();
        tags.sort_unstable();
        assert_eq!(tags, vec![0, 10, 20, 30, 40, 50]);
    }

    #[test]
    fn subsample_insufficient_names_class() {
        let ds = toy_dataset();
        match stratified_subsample(&ds, 4, 0) {
            Err(Error::InsufficientSamples { class, available, requested }) => {
                assert_eq!((class, available, requested), (1, 3, 4));
            }
            other => panic!("expected InsufficientSamples, got {other:?}"),
        }
    }

    fn synth_cfg() -> SynthConfig {
        SynthConfig {
            modalities: 2,
            clusters: 3,
            points_per_cluster: 10,
            ambient_dims: vec![8, 12],
            subspace_dim: 3,
            noise_sigma: 0.0,
            outlier_pair_fraction: 0.0,
        }
    }

    #[test]
    fn synth_deterministic() {
        let cfg = synth_cfg();
        let a = generate_synthetic_paired(&cfg, 5).unwrap();
        let b = generate_synthetic_paired(&cfg, 5).unwrap();
        assert_eq!(a.data.modality(0), b.data.modality(0));
        assert_eq!(a.data.modality(1), b.data.modality(1));
        assert_eq!(a.corrupted, b.corrupted);
    }

    #[test]
    fn synth_noiseless_cluster_blocks_have_subspace_rank() {
        let cfg = synth_cfg();
        let out = generate_synthetic_paired(&cfg, 11).unwrap();
        for modality in 0..2 {
            for k in 0..cfg.clusters {
                let cols: Vec<usize> = (k * 10..(k + 1) * 10).collect();
                let block = out.data.select_columns(&cols).unwrap().modality(modality).clone();
                let svd = block.svd(false, false);
                let rank = svd.singular_values.iter().filter(|&&s| s > 1e-8).count();
                assert_eq!(rank, cfg.subspace_dim, "modality {modality} cluster {k}");
            }
        }
    }

    #[test]
    fn synth_corrupted_count_exact() {
        let mut cfg = synth_cfg();
        cfg.points_per_cluster = 34;
        cfg.clusters = 3;
        cfg.outlier_pair_fraction = 0.1;
        // n = 102, round(10.2) = 10 corrupted pairs.
        let out = generate_synthetic_paired(&cfg, 2).unwrap();
        assert_eq!(out.corrupted.len(), 10);
        // First modality untouched by corruption; second differs on flagged columns.
        let clean = {
            let mut c = cfg.clone();
            c.outlier_pair_fraction = 0.0;
            generate_synthetic_paired(&c, 2).unwrap()
        };
        assert_eq!(out.data.modality(0), clean.data.modality(0));
        for &idx in &out.corrupted {
            let diff = (out.data.modality(1).column(idx) - clean.data.modality(1).column(idx)).norm();
            assert!(diff > 1e-6);
        }
    }

    #[test]
    fn synth_rejects_bad_config() {
        let mut cfg = synth_cfg();
        cfg.subspace_dim = 8;
        assert!(generate_synthetic_paired(&cfg, 0).is_err());
        let mut cfg = synth_cfg();
        cfg.outlier_pair_fraction = 1.0;
        assert!(generate_synthetic_paired(&cfg, 0).is_err());
    }
}
