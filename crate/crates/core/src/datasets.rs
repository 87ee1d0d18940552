//! Synthetic samplers with closed-form reference distances plus ingestion of
//! CSV point clouds and plain-PGM grayscale grids.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimators::{DatasetPair, Sampler};
use crate::measure::DiscreteMeasure;

/// Isotropic Gaussian `N(mean, tau I)`.
pub struct GaussianSampler {
    mean: Vec<f64>,
    std: f64,
    label: String,
}

impl Sampler for GaussianSampler {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn descriptor(&self) -> String {
        self.label.clone()
    }
    fn draw(&self, count: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let d = self.mean.len();
        let mut out = Array2::zeros((count, d));
        for mut row in out.outer_iter_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                *v = self.mean[c] + self.std * z;
            }
        }
        out
    }
}

/// `N(0_d, tau I)` vs `N(1_d, tau I)`; the reference distance is `sqrt(d)`
/// independent of `tau` (identical covariances cancel).
pub fn gaussian_pair(d: usize, tau: f64) -> Result<DatasetPair> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be >= 1".into()));
    }
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let std = tau.sqrt();
    let descriptor = format!("gaussian(d={d},tau={tau})");
    Ok(DatasetPair {
        mu: Arc::new(GaussianSampler {
            mean: vec![0.0; d],
            std,
            label: format!("{descriptor}:mu"),
        }),
        nu: Arc::new(GaussianSampler {
            mean: vec![1.0; d],
            std,
            label: format!("{descriptor}:nu"),
        }),
        true_w2: Some((d as f64).sqrt()),
        descriptor,
    })
}

/// Uniform distribution on a centered unit square in the first two
/// coordinates (uniform `[0,1]` fillers beyond), optionally pushed through
/// `T(x) = x + 2 sign(x)` on those two coordinates.
pub struct HypercubeSampler {
    d: usize,
    transformed: bool,
}

impl Sampler for HypercubeSampler {
    fn dim(&self) -> usize {
        self.d
    }
    fn descriptor(&self) -> String {
        format!(
            "hypercube(d={}){}",
            self.d,
            if self.transformed {
                ":pushforward"
            } else {
                ":base"
            }
        )
    }
    fn draw(&self, count: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut out = Array2::zeros((count, self.d));
        for mut row in out.outer_iter_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                let u: f64 = rng.random();
                *v = if c < 2 { u - 0.5 } else { u };
            }
            if self.transformed {
                for c in 0..2 {
                    let x = row[c];
                    row[c] = x + 2.0 * sign(x);
                }
            }
        }
        out
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Fragmented hypercube: the base square is centered so `sign` takes both
/// values and the displacement `||2 sign(x)||^2 = 8` yields `W_2 = sqrt(8)`
/// regardless of the filler dimensions.
pub fn fragmented_hypercube(d: usize) -> Result<DatasetPair> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!(
            "fragmented hypercube needs d >= 2, got {d}"
        )));
    }
    Ok(DatasetPair {
        mu: Arc::new(HypercubeSampler {
            d,
            transformed: false,
        }),
        nu: Arc::new(HypercubeSampler {
            d,
            transformed: true,
        }),
        true_w2: Some(8.0f64.sqrt()),
        descriptor: format!("hypercube(d={d})"),
    })
}

/// Deterministic point mass, mostly for tests and smoke runs.
pub struct DiracSampler {
    point: Vec<f64>,
}

impl Sampler for DiracSampler {
    fn dim(&self) -> usize {
        self.point.len()
    }
    fn descriptor(&self) -> String {
        format!("dirac(d={})", self.point.len())
    }
    fn draw(&self, count: usize, _rng: &mut ChaCha8Rng) -> Array2<f64> {
        let d = self.point.len();
        let mut out = Array2::zeros((count, d));
        for mut row in out.outer_iter_mut() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.point[c];
            }
        }
        out
    }
}

/// Diracs at the origin and at `1_d`; reference distance `sqrt(d)`.
pub fn dirac_pair(d: usize) -> Result<DatasetPair> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be >= 1".into()));
    }
    Ok(DatasetPair {
        mu: Arc::new(DiracSampler {
            point: vec![0.0; d],
        }),
        nu: Arc::new(DiracSampler {
            point: vec![1.0; d],
        }),
        true_w2: Some((d as f64).sqrt()),
        descriptor: format!("dirac(d={d})"),
    })
}

/// Samples atoms of a fixed discrete measure with replacement,
/// proportionally to their weights.
pub struct DiscreteCloudSampler {
    measure: DiscreteMeasure,
    index: WeightedIndex<f64>,
    label: String,
}

impl DiscreteCloudSampler {
    pub fn new(measure: DiscreteMeasure, label: impl Into<String>) -> Result<Self> {
        let index = WeightedIndex::new(measure.weights().iter().cloned())
            .map_err(|e| Error::InvalidWeights(format!("cannot sample cloud: {e}")))?;
        Ok(Self {
            measure,
            index,
            label: label.into(),
        })
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.measure
    }
}

impl Sampler for DiscreteCloudSampler {
    fn dim(&self) -> usize {
        self.measure.dim()
    }
    fn descriptor(&self) -> String {
        self.label.clone()
    }
    fn draw(&self, count: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut out = Array2::zeros((count, self.measure.dim()));
        for mut row in out.outer_iter_mut() {
            let at = self.index.sample(rng);
            row.assign(&self.measure.support().row(at));
        }
        out
    }
}

/// Two frozen point clouds of `n_tot` points each, drawn once from Gaussian
/// mixtures whose `m` component means are uniform in the unit cube with
/// covariance `tau I`. `tau = 0` yields the means themselves, repeated.
pub fn sampled_mixtures(
    m: usize,
    d: usize,
    tau: f64,
    n_tot: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    if m == 0 || d == 0 || n_tot == 0 {
        return Err(Error::InvalidArgument(
            "sampled mixtures need m >= 1, d >= 1, n_tot >= 1".into(),
        ));
    }
    if tau < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tau must be >= 0, got {tau}"
        )));
    }
    let std = tau.sqrt();
    let draw_cloud = |rng: &mut ChaCha8Rng| -> Result<DiscreteMeasure> {
        let mut means = Array2::zeros((m, d));
        for v in means.iter_mut() {
            *v = rng.random::<f64>();
        }
        let mut cloud = Array2::zeros((n_tot, d));
        for mut row in cloud.outer_iter_mut() {
            let comp = rng.random_range(0..m);
            for (c, v) in row.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(rng);
                *v = means[(comp, c)] + std * z;
            }
        }
        DiscreteMeasure::uniform(cloud)
    };
    let x = draw_cloud(rng)?;
    let y = draw_cloud(rng)?;
    Ok((x, y))
}

/// Loads a rectangular numeric CSV as a discrete measure. A non-numeric first
/// line is treated as a header. `weight_col` selects a zero-based column used
/// as weights (which must already sum to 1); the remaining columns form the
/// support. With `standardize`, each support column is centered and scaled to
/// unit variance (population convention); zero-variance columns are left
/// centered but unscaled, with a warning.
pub fn load_csv_pointcloud(
    path: &Path,
    standardize: bool,
    weight_col: Option<usize>,
) -> Result<DiscreteMeasure> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let path_str = path.display().to_string();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut header_skipped = false;
    for (line_idx, line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, usize> = cells
            .iter()
            .enumerate()
            .map(|(c, s)| s.parse::<f64>().map_err(|_| c))
            .collect();
        match parsed {
            Ok(values) => {
                if let Some(w) = width {
                    if values.len() != w {
                        return Err(Error::Parse {
                            path: path_str,
                            line: line_no,
                            message: format!(
                                "ragged row: expected {w} columns, found {}",
                                values.len()
                            ),
                        });
                    }
                } else {
                    width = Some(values.len());
                }
                rows.push(values);
            }
            Err(col) => {
                if rows.is_empty() && !header_skipped {
                    header_skipped = true; // header row auto-detected
                    continue;
                }
                return Err(Error::Parse {
                    path: path_str,
                    line: line_no,
                    message: format!("non-numeric cell in column {}", col + 1),
                });
            }
        }
    }
    let width = width.ok_or(Error::EmptyInput("CSV has no data rows"))?;
    let n = rows.len();

    let (support_cols, weights): (Vec<usize>, Array1<f64>) = match weight_col {
        Some(wc) => {
            if wc >= width {
                return Err(Error::InvalidArgument(format!(
                    "weight column {wc} out of range for {width}-column file"
                )));
            }
            let w = Array1::from_iter(rows.iter().map(|r| r[wc]));
            ((0..width).filter(|&c| c != wc).collect(), w)
        }
        None => ((0..width).collect(), Array1::from_elem(n, 1.0 / n as f64)),
    };
    if support_cols.is_empty() {
        return Err(Error::InvalidArgument(
            "no support columns left after weight extraction".into(),
        ));
    }

    let d = support_cols.len();
    let mut support = Array2::zeros((n, d));
    for (i, row) in rows.iter().enumerate() {
        for (c_out, &c_in) in support_cols.iter().enumerate() {
            support[(i, c_out)] = row[c_in];
        }
    }

    if standardize {
        for c in 0..d {
            let mut col = support.column_mut(c);
            let mean = col.sum() / n as f64;
            col.mapv_inplace(|x| x - mean);
            let var = col.iter().map(|x| x * x).sum::<f64>() / n as f64;
            if var > 0.0 {
                let sd = var.sqrt();
                col.mapv_inplace(|x| x / sd);
            } else {
                log::warn!(
                    "column {c} of {} has zero variance; centered but not scaled",
                    path.display()
                );
            }
        }
    }

    DiscreteMeasure::new(support, weights)
}

/// Loads a plain-text "P2" PGM image as a measure on the unit square: pixel
/// centers at `((col + 0.5)/W, (row + 0.5)/H)` in row-major order, weights
/// proportional to intensity, zero-intensity pixels dropped.
pub fn load_grid_image(path: &Path) -> Result<DiscreteMeasure> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let path_str = path.display().to_string();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path_str.clone(),
        line,
        message,
    };

    // Tokenize, stripping '#' comments, keeping line numbers for diagnostics.
    let mut tokens: Vec<(&str, usize)> = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("");
        for tok in content.split_whitespace() {
            tokens.push((tok, line_idx + 1));
        }
    }
    let mut cursor = tokens.into_iter();
    let (magic, line) = cursor
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    if magic != "P2" {
        return Err(parse_err(
            line,
            format!("expected plain PGM magic \"P2\", found \"{magic}\""),
        ));
    }
    let mut next_usize = |what: &str| -> Result<usize> {
        let (tok, line) = cursor
            .next()
            .ok_or_else(|| parse_err(0, format!("missing {what}")))?;
        tok.parse::<usize>()
            .map_err(|_| parse_err(line, format!("invalid {what}: \"{tok}\"")))
    };
    let width = next_usize("width")?;
    let height = next_usize("height")?;
    let maxval = next_usize("maxval")?;
    if width == 0 || height == 0 || maxval == 0 {
        return Err(parse_err(
            line,
            "width, height, and maxval must be positive".into(),
        ));
    }

    let mut intensities = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        let v = next_usize("pixel value")?;
        if v > maxval {
            return Err(parse_err(
                0,
                format!("pixel value {v} exceeds maxval {maxval}"),
            ));
        }
        intensities.push(v as f64);
    }
    if cursor.next().is_some() {
        return Err(parse_err(0, "trailing data after pixel raster".into()));
    }

    let total: f64 = intensities.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptyInput(
            "empty measure: image has zero total intensity",
        ));
    }
    let kept: Vec<usize> = (0..intensities.len())
        .filter(|&i| intensities[i] > 0.0)
        .collect();
    let mut support = Array2::zeros((kept.len(), 2));
    let mut weights = Array1::zeros(kept.len());
    for (out, &i) in kept.iter().enumerate() {
        let row = i / width;
        let col = i % width;
        support[(out, 0)] = (col as f64 + 0.5) / width as f64;
        support[(out, 1)] = (row as f64 + 0.5) / height as f64;
        weights[out] = intensities[i] / total;
    }
    DiscreteMeasure::new(support, weights)
}
