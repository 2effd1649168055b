//! Three-regime speed–density model calibrated by weighted least squares.
//!
//! `v = a_r − b_r ρ` on the regimes `ρ ≤ ρ₁`, `ρ₁ < ρ ≤ ρ₂`, `ρ > ρ₂`.
//! Each regime's weighted sum of squared speed residuals is one objective;
//! the decision vector is `(a₁, b₁, a₂, b₂, a₃, b₃)`. Eight affine rows keep
//! the fitted curve non-negative and non-increasing across the density range.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{AffineMap, Oracle, ProblemSpec};

pub const DEFAULT_BREAKPOINTS: (f64, f64) = (40.0, 65.0);
pub const DEFAULT_BIN_WIDTH: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeedRecord {
    pub flow: f64,
    pub density: f64,
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedDensityDataset {
    records: Vec<SpeedRecord>,
    max_density: f64,
}

impl SpeedDensityDataset {
    pub fn new(records: Vec<SpeedRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Construction("dataset has no records".into()));
        }
        for (i, r) in records.iter().enumerate() {
            if let Some(msg) = record_problem(r) {
                return Err(Error::Construction(format!("record {i}: {msg}")));
            }
        }
        let max_density = records.iter().map(|r| r.density).fold(f64::MIN, f64::max);
        Ok(Self {
            records,
            max_density,
        })
    }

    pub fn records(&self) -> &[SpeedRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn max_density(&self) -> f64 {
        self.max_density
    }
}

fn record_problem(r: &SpeedRecord) -> Option<String> {
    if !(r.flow.is_finite() && r.density.is_finite() && r.speed.is_finite()) {
        Some("non-finite value".into())
    } else if r.density <= 0.0 {
        Some(format!("density {} is not positive", r.density))
    } else if r.speed < 0.0 {
        Some(format!("speed {} is negative", r.speed))
    } else {
        None
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineWarning {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub dataset: SpeedDensityDataset,
    /// Lines that were skipped.
    pub warnings: Vec<LineWarning>,
}

/// Read a whitespace-separated `flow density speed` file. Blank lines and
/// lines starting with `#` are ignored; malformed lines are skipped and
/// reported.
pub fn load_speed_density(path: impl AsRef<Path>) -> Result<LoadedDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_record(line) {
            Ok(r) => records.push(r),
            Err(message) => warnings.push(LineWarning {
                line: i + 1,
                message,
            }),
        }
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset {
            path: path.to_path_buf(),
            skipped: warnings.len(),
        });
    }
    Ok(LoadedDataset {
        dataset: SpeedDensityDataset::new(records)?,
        warnings,
    })
}

fn parse_record(line: &str) -> std::result::Result<SpeedRecord, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(format!("expected 3 columns, found {}", fields.len()));
    }
    let mut v = [0.0; 3];
    for (slot, field) in v.iter_mut().zip(&fields) {
        *slot = field
            .parse()
            .map_err(|_| format!("'{field}' is not a number"))?;
    }
    let r = SpeedRecord {
        flow: v[0],
        density: v[1],
        speed: v[2],
    };
    match record_problem(&r) {
        Some(msg) => Err(msg),
        None => Ok(r),
    }
}

/// Write a dataset in the format read by [`load_speed_density`]. Values use
/// the shortest representation that parses back to the same `f64`.
pub fn save_speed_density(dataset: &SpeedDensityDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("# flow density speed\n");
    for r in dataset.records() {
        let _ = writeln!(out, "{} {} {}", r.flow, r.density, r.speed);
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Regime intercepts and slopes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdModelParams {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub a3: f64,
    pub b3: f64,
}

impl FdModelParams {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.a1, self.b1, self.a2, self.b2, self.a3, self.b3]
    }

    pub fn from_slice(p: &[f64]) -> Result<Self> {
        crate::error::check_len(6, p.len())?;
        Ok(Self {
            a1: p[0],
            b1: p[1],
            a2: p[2],
            b2: p[3],
            a3: p[4],
            b3: p[5],
        })
    }

    pub fn speed(&self, density: f64, breakpoints: (f64, f64)) -> f64 {
        match regime(density, breakpoints) {
            0 => self.a1 - self.b1 * density,
            1 => self.a2 - self.b2 * density,
            _ => self.a3 - self.b3 * density,
        }
    }
}

fn regime(density: f64, (r1, r2): (f64, f64)) -> usize {
    if density <= r1 {
        0
    } else if density <= r2 {
        1
    } else {
        2
    }
}

const REGIME_NAMES: [&str; 3] = ["free-flow", "transition", "congested"];

#[derive(Clone, Debug, PartialEq)]
pub enum WeightingScheme {
    Uniform,
    /// See [`compute_bin_weights`].
    InverseBinFrequency {
        bin_width: f64,
    },
    /// One weight per record.
    Custom(Vec<f64>),
}

impl Default for WeightingScheme {
    fn default() -> Self {
        Self::InverseBinFrequency {
            bin_width: DEFAULT_BIN_WIDTH,
        }
    }
}

/// Weight each record by the inverse population of its density bin:
/// `N / (count_bin · nonempty_bins)`, rescaled to mean one. Sparse density
/// ranges get proportionally more weight.
pub fn compute_bin_weights(data: &SpeedDensityDataset, bin_width: f64) -> Result<Vec<f64>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::Contract(format!(
            "bin width {bin_width} must be positive"
        )));
    }
    let bins: Vec<i64> = data
        .records()
        .iter()
        .map(|r| (r.density / bin_width).floor() as i64)
        .collect();
    let mut counts = std::collections::BTreeMap::new();
    for &b in &bins {
        *counts.entry(b).or_insert(0usize) += 1;
    }
    let n = bins.len() as f64;
    let nonempty = counts.len() as f64;
    let raw: Vec<f64> = bins
        .iter()
        .map(|b| n / (counts[b] as f64 * nonempty))
        .collect();
    let mean = raw.iter().sum::<f64>() / n;
    Ok(raw.into_iter().map(|w| w / mean).collect())
}

fn record_weights(data: &SpeedDensityDataset, weighting: &WeightingScheme) -> Result<Vec<f64>> {
    match weighting {
        WeightingScheme::Uniform => Ok(vec![1.0; data.len()]),
        WeightingScheme::InverseBinFrequency { bin_width } => compute_bin_weights(data, *bin_width),
        WeightingScheme::Custom(w) => {
            crate::error::check_len(data.len(), w.len())?;
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Construction(
                    "weights must be finite and non-negative".into(),
                ));
            }
            Ok(w.clone())
        }
    }
}

/// Weighted SSE of one regime. Parameters live at `block * 2..block * 2 + 2`.
struct RegimeSse {
    block: usize,
    density: Vec<f64>,
    speed: Vec<f64>,
    weight: Vec<f64>,
}

impl RegimeSse {
    fn residuals<'a>(&'a self, x: &[f64]) -> impl Iterator<Item = (f64, f64, f64)> + 'a {
        let (a, b) = (x[2 * self.block], x[2 * self.block + 1]);
        self.density
            .iter()
            .zip(&self.speed)
            .zip(&self.weight)
            .map(move |((&rho, &v), &w)| (w, rho, v - (a - b * rho)))
    }
}

impl Oracle for RegimeSse {
    fn value(&self, x: &[f64]) -> f64 {
        self.residuals(x).map(|(w, _, e)| w * e * e).sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (mut ga, mut gb) = (0.0, 0.0);
        for (w, rho, e) in self.residuals(x) {
            ga -= 2.0 * w * e;
            gb += 2.0 * w * e * rho;
        }
        let mut g = vec![0.0; 6];
        g[2 * self.block] = ga;
        g[2 * self.block + 1] = gb;
        g
    }
}

/// Monotonicity and non-negativity rows `A p ≤ 0` for breakpoints
/// `(ρ₁, ρ₂)` and largest observed density `ρ_max`.
///
/// In order: `a₁ ≥ 0`, `b₁ ≥ 0` (as `ρ₁ b₁ ≥ 0`), `v(ρ₁⁻) ≥ 0`,
/// `v(ρ₁⁻) ≥ v(ρ₁⁺)`, `b₂ ≥ 0` (as `(ρ₂ − ρ₁) b₂ ≥ 0`), `v(ρ₂⁻) ≥ v(ρ₂⁺)`,
/// `b₃ ≥ 0` (as `(ρ_max − ρ₂) b₃ ≥ 0`), `v(ρ_max) ≥ 0`.
pub fn fd_constraint_rows((r1, r2): (f64, f64), max_density: f64) -> Vec<Vec<f64>> {
    vec![
        vec![-1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.0, -r1, 0.0, 0.0, 0.0, 0.0],
        vec![-1.0, r1, 0.0, 0.0, 0.0, 0.0],
        vec![-1.0, r1, 1.0, -r1, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, -(r2 - r1), 0.0, 0.0],
        vec![0.0, 0.0, -1.0, r2, 1.0, -r2],
        vec![0.0, 0.0, 0.0, 0.0, 0.0, -(max_density - r2)],
        vec![0.0, 0.0, 0.0, 0.0, -1.0, max_density],
    ]
}

/// Calibration problem over `(a₁, b₁, a₂, b₂, a₃, b₃)`.
pub fn fd_problem(
    data: &SpeedDensityDataset,
    breakpoints: (f64, f64),
    weighting: &WeightingScheme,
) -> Result<ProblemSpec> {
    let (r1, r2) = breakpoints;
    if !(r1.is_finite() && r2.is_finite() && 0.0 < r1 && r1 < r2) {
        return Err(Error::Construction(format!(
            "breakpoints ({r1}, {r2}) must satisfy 0 < ρ₁ < ρ₂"
        )));
    }
    let weights = record_weights(data, weighting)?;
    let mut regimes: Vec<RegimeSse> = (0..3)
        .map(|block| RegimeSse {
            block,
            density: Vec::new(),
            speed: Vec::new(),
            weight: Vec::new(),
        })
        .collect();
    for (r, &w) in data.records().iter().zip(&weights) {
        let sse = &mut regimes[regime(r.density, breakpoints)];
        sse.density.push(r.density);
        sse.speed.push(r.speed);
        sse.weight.push(w);
    }
    for (k, sse) in regimes.iter().enumerate() {
        if sse.density.is_empty() {
            return Err(Error::Construction(format!(
                "{} regime (#{}) has no records",
                REGIME_NAMES[k],
                k + 1
            )));
        }
    }
    let mut builder = ProblemSpec::builder(6);
    for sse in regimes {
        builder = builder.objective(sse);
    }
    builder
        .linear_constraints(
            fd_constraint_rows(breakpoints, data.max_density()),
            vec![0.0; 8],
        )
        .build()
}

/// Sampling box for parameter starts: intercepts in `[0, 1.5 v_max]`,
/// slopes in `[0, 1.5 v_max / ρ₁]`, with `v_max` the largest observed speed.
pub fn fd_start_box(data: &SpeedDensityDataset, (r1, _): (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    let vmax = data.records().iter().map(|r| r.speed).fold(1.0, f64::max);
    let (a, b) = (1.5 * vmax, 1.5 * vmax / r1);
    (vec![0.0; 6], vec![a, b, a, b, a, b])
}

/// Change of variables `θ = M z` under which each regime's objective has
/// Hessian `I`.
///
/// Per regime with weight total `S`, weighted mean density `ρ̄` and standard
/// deviation `σ`, the intercept is centred (`α = a − b ρ̄`) and both
/// coordinates are scaled: `α = z₁ / √(2S)`, `b = z₂ / (σ √(2S))`. In `z`
/// every objective reads `‖z_r − z_r*‖² + const`, which removes the
/// intercept/slope coupling that makes the raw parametrization converge
/// slowly. Regimes with a single distinct density use `σ = 1`.
pub fn fd_preconditioner(
    data: &SpeedDensityDataset,
    breakpoints: (f64, f64),
    weighting: &WeightingScheme,
) -> Result<AffineMap> {
    let weights = record_weights(data, weighting)?;
    let mut sums = [[0.0f64; 3]; 3];
    for (r, &w) in data.records().iter().zip(&weights) {
        let s = &mut sums[regime(r.density, breakpoints)];
        s[0] += w;
        s[1] += w * r.density;
        s[2] += w * r.density * r.density;
    }
    let mut m = vec![vec![0.0; 6]; 6];
    for (k, [sw, swr, swrr]) in sums.into_iter().enumerate() {
        if !(sw > 0.0) {
            return Err(Error::Construction(format!(
                "{} regime (#{}) has no weighted records",
                REGIME_NAMES[k],
                k + 1
            )));
        }
        let mean = swr / sw;
        let var = (swrr / sw - mean * mean).max(0.0);
        let sigma = if var.sqrt() > 1e-9 * (1.0 + mean) {
            var.sqrt()
        } else {
            1.0
        };
        let c = 1.0 / (2.0 * sw).sqrt();
        let (ia, ib) = (2 * k, 2 * k + 1);
        m[ia][ia] = c;
        m[ia][ib] = c * mean / sigma;
        m[ib][ib] = c / sigma;
    }
    AffineMap::new(m, vec![0.0; 6])
}

/// Generator for records lying on (or scattered around) a known model.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticFd {
    pub params: FdModelParams,
    pub records: usize,
    pub max_density: f64,
    /// Standard deviation of additive Gaussian speed noise.
    pub noise_sigma: f64,
    pub seed: u64,
    pub breakpoints: (f64, f64),
}

impl Default for SyntheticFd {
    /// A strictly feasible model: speeds 70 → 50 | 44 → 21.5 | 20.5 → 4 mph
    /// over densities up to 120 veh/mile.
    fn default() -> Self {
        Self {
            params: FdModelParams {
                a1: 70.0,
                b1: 0.5,
                a2: 80.0,
                b2: 0.9,
                a3: 40.0,
                b3: 0.3,
            },
            records: 500,
            max_density: 120.0,
            noise_sigma: 0.0,
            seed: 0,
            breakpoints: DEFAULT_BREAKPOINTS,
        }
    }
}

/// Records whose densities skew towards free flow, as in loop-detector data.
/// The first three records sit at regime midpoints and the last at
/// `max_density`, so every regime is populated and the largest density is
/// exact. Speeds below zero after noise are clamped to zero.
pub fn synthetic_dataset(cfg: &SyntheticFd) -> Result<SpeedDensityDataset> {
    let (r1, r2) = cfg.breakpoints;
    if cfg.records < 4 || !(cfg.max_density > r2) || !(cfg.noise_sigma >= 0.0) {
        return Err(Error::Construction(
            "synthetic data needs ≥ 4 records, max density above the last breakpoint and σ ≥ 0"
                .into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise =
        Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Construction(e.to_string()))?;
    let mut densities = vec![0.5 * r1, 0.5 * (r1 + r2), 0.5 * (r2 + cfg.max_density)];
    while densities.len() < cfg.records - 1 {
        let u: f64 = rng.random();
        densities.push((cfg.max_density * u.powf(1.5)).max(1e-3 * cfg.max_density));
    }
    densities.push(cfg.max_density);
    let records = densities
        .into_iter()
        .map(|rho| {
            let speed = (cfg.params.speed(rho, cfg.breakpoints) + noise.sample(&mut rng)).max(0.0);
            SpeedRecord {
                flow: rho * speed,
                density: rho,
                speed,
            }
        })
        .collect();
    SpeedDensityDataset::new(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(points: &[(f64, f64)]) -> SpeedDensityDataset {
        SpeedDensityDataset::new(
            points
                .iter()
                .map(|&(density, speed)| SpeedRecord {
                    flow: density * speed,
                    density,
                    speed,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn bin_weights_two_bins() {
        let mut pts = vec![(1.0, 60.0); 90];
        pts.extend(vec![(7.0, 55.0); 10]);
        let w = compute_bin_weights(&dataset(&pts), 5.0).unwrap();
        // Raw weights 100/180 and 100/20 already average to one.
        assert!((w[0] - 100.0 / 180.0).abs() < 1e-12);
        assert!((w[99] - 5.0).abs() < 1e-12);
        assert!((w[99] / w[0] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn bin_weights_balanced_and_single() {
        let w = compute_bin_weights(&dataset(&[(1.0, 1.0), (6.0, 1.0), (11.0, 1.0)]), 5.0).unwrap();
        assert!(w.iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert_eq!(
            compute_bin_weights(&dataset(&[(3.0, 1.0)]), 5.0).unwrap(),
            vec![1.0]
        );
        assert!(compute_bin_weights(&dataset(&[(3.0, 1.0)]), 0.0).is_err());
    }

    #[test]
    fn continuity_row_is_tight_at_equal_edges() {
        let rows = fd_constraint_rows(DEFAULT_BREAKPOINTS, 120.0);
        let p = [60.0, 1.0, 60.0, 1.0, 0.0, 0.0];
        assert_eq!(crate::linalg::dot(&rows[3], &p), 0.0);
    }

    #[test]
    fn reference_model_is_strictly_feasible() {
        let p = SyntheticFd::default().params.to_vec();
        for row in fd_constraint_rows(DEFAULT_BREAKPOINTS, 120.0) {
            assert!(crate::linalg::dot(&row, &p) <= -1.0);
        }
    }

    #[test]
    fn unweighted_objectives_are_plain_sse() {
        let data = dataset(&[(10.0, 60.0), (20.0, 58.0), (50.0, 30.0), (80.0, 10.0)]);
        let p = fd_problem(&data, DEFAULT_BREAKPOINTS, &WeightingScheme::Uniform).unwrap();
        let x = [65.0, 0.4, 70.0, 0.8, 30.0, 0.25];
        let f = p.evaluate_objectives(&x).unwrap();
        let e = |v: f64, a: f64, b: f64, rho: f64| (v - (a - b * rho)).powi(2);
        assert!((f[0] - (e(60.0, 65.0, 0.4, 10.0) + e(58.0, 65.0, 0.4, 20.0))).abs() < 1e-12);
        assert!((f[1] - e(30.0, 70.0, 0.8, 50.0)).abs() < 1e-12);
        assert!((f[2] - e(10.0, 30.0, 0.25, 80.0)).abs() < 1e-12);
    }

    #[test]
    fn empty_regime_is_named() {
        let data = dataset(&[(10.0, 60.0), (80.0, 10.0)]);
        let err = fd_problem(&data, DEFAULT_BREAKPOINTS, &WeightingScheme::Uniform).unwrap_err();
        assert!(err.to_string().contains("transition"), "{err}");
    }

    #[test]
    fn synthetic_reference_is_exact_when_noiseless() {
        let cfg = SyntheticFd::default();
        let data = synthetic_dataset(&cfg).unwrap();
        assert_eq!(data.len(), 500);
        assert_eq!(data.max_density(), 120.0);
        let p = fd_problem(&data, DEFAULT_BREAKPOINTS, &WeightingScheme::default()).unwrap();
        let f = p.evaluate_objectives(&cfg.params.to_vec()).unwrap();
        assert!(f.iter().all(|v| *v < 1e-20), "{f:?}");
    }
}
