//! Seeded generators for the simulation studies: grids, exposure surfaces,
//! missingness mechanisms and train/test splits.
//!
//! Gaussian fields are sampled only at the sites a replicate actually uses,
//! so a 100 x 100 grid never requires a 10,000-point factorization.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{ObservedMatrix, SiteFrame};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_jitter, quantile, sample_variance};
use crate::spatial::{exp_cov_matrix, ExponentialCovParams};

/// Which generator a scenario uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    ThreePollutantCorr,
    ThreePollutantIndep,
    HighDimS1,
    HighDimS2,
}

impl ScenarioKind {
    pub fn tag(self) -> &'static str {
        match self {
            Self::ThreePollutantCorr => "three_pollutant_corr",
            Self::ThreePollutantIndep => "three_pollutant_indep",
            Self::HighDimS1 => "high_dim_s1",
            Self::HighDimS2 => "high_dim_s2",
        }
    }

    pub fn is_high_dim(self) -> bool {
        matches!(self, Self::HighDimS1 | Self::HighDimS2)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "three_pollutant_corr" => Ok(Self::ThreePollutantCorr),
            "three_pollutant_indep" => Ok(Self::ThreePollutantIndep),
            "high_dim_s1" => Ok(Self::HighDimS1),
            "high_dim_s2" => Ok(Self::HighDimS2),
            other => Err(Error::InvalidConfig(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Missingness applied to the training rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Missingness {
    Complete,
    Mcar(f64),
    Mar,
}

impl fmt::Display for Missingness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Complete => f.write_str("complete"),
            Self::Mcar(rate) => write!(f, "mcar:{rate}"),
            Self::Mar => f.write_str("mar"),
        }
    }
}

impl FromStr for Missingness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" | "none" => Ok(Self::Complete),
            "mar" => Ok(Self::Mar),
            _ => {
                let rate = s
                    .strip_prefix("mcar:")
                    .and_then(|r| r.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown missingness `{s}`")))?;
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::InvalidConfig(format!("MCAR rate {rate} outside [0, 1)")));
                }
                Ok(Self::Mcar(rate))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub grid_size: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub missing: Missingness,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(kind: ScenarioKind, missing: Missingness, seed: u64) -> Self {
        Self {
            kind,
            grid_size: 100,
            n_train: 400,
            n_test: 100,
            missing,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::InvalidConfig("grid_size must be at least 2".into()));
        }
        if self.n_train + self.n_test > self.grid_size * self.grid_size {
            return Err(Error::InvalidConfig(format!(
                "{} + {} sites do not fit on a {}x{} grid",
                self.n_train, self.n_test, self.grid_size, self.grid_size
            )));
        }
        if self.n_train < 10 || self.n_test < 3 {
            return Err(Error::InvalidConfig("need at least 10 training and 3 test sites".into()));
        }
        if let Missingness::Mcar(rate) = self.missing {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::InvalidConfig(format!("MCAR rate {rate} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Independent random streams of one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Split = 1,
    Covariates = 2,
    Noise = 3,
    Missing = 4,
    Knots = 5,
    Impute = 6,
}

/// RNG for one purpose of one seed.
pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed of replicate `rep` derived from a base seed (SplitMix64 finalizer).
pub fn replicate_seed(base: u64, rep: u64) -> u64 {
    let mut z = base ^ rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Unit-spaced `side x side` lattice in row-major order: row `k` is
/// `(k mod side, k div side)`.
pub fn gen_grid(side: usize) -> Result<DMatrix<f64>> {
    if side < 2 {
        return Err(Error::InvalidConfig("grid side must be at least 2".into()));
    }
    Ok(DMatrix::from_fn(side * side, 2, |k, c| {
        if c == 0 {
            (k % side) as f64
        } else {
            (k / side) as f64
        }
    }))
}

/// Disjoint uniformly random training and test indices out of `0..n`.
pub fn split_train_test(
    n: usize,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_train + n_test > n {
        return Err(Error::InvalidConfig(format!(
            "cannot draw {n_train} + {n_test} sites out of {n}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Split);
    let picked = sample(&mut rng, n, n_train + n_test).into_vec();
    let test = picked[n_train..].to_vec();
    let mut train = picked;
    train.truncate(n_train);
    Ok((train, test))
}

fn standard_normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `fields` independent draws of a zero-mean Gaussian field at `coords`.
pub fn sample_gaussian_field(
    coords: &DMatrix<f64>,
    params: &ExponentialCovParams,
    fields: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    let cov = exp_cov_matrix(coords, coords, params);
    let chol = cholesky_jitter(cov, 1e-10)?;
    let z = standard_normal(coords.nrows(), fields, rng);
    Ok(chol.l() * z)
}

/// Noise covariance of the correlated three-pollutant scenario.
pub const THREE_POLLUTANT_NOISE: ExponentialCovParams = ExponentialCovParams {
    partial_sill: 12.25,
    nugget: 1.0,
    range: 50.0,
};

/// `x1 = 4 r1 + 2 r3 + e1`, `x2 = 3 r2 + e2`, `x3 = 2 r1 + 4 r2 + e3`.
pub fn three_pollutant_surface(r: &DMatrix<f64>, eps: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(r.nrows(), 3, |i, j| {
        let (r1, r2, r3) = (r[(i, 0)], r[(i, 1)], r[(i, 2)]);
        let mean = match j {
            0 => 4.0 * r1 + 2.0 * r3,
            1 => 3.0 * r2,
            _ => 2.0 * r1 + 4.0 * r2,
        };
        mean + eps[(i, j)]
    })
}

/// Three-pollutant data at the given sites. Only `r1` is returned as a covariate.
pub fn three_pollutant_at(
    coords: &DMatrix<f64>,
    correlated: bool,
    seed: u64,
) -> Result<(ObservedMatrix, SiteFrame)> {
    let n = coords.nrows();
    let r = standard_normal(n, 3, &mut stream_rng(seed, Stream::Covariates));
    let mut noise_rng = stream_rng(seed, Stream::Noise);
    let eps = if correlated {
        sample_gaussian_field(coords, &THREE_POLLUTANT_NOISE, 3, &mut noise_rng)?
    } else {
        standard_normal(n, 3, &mut noise_rng)
    };
    let x = ObservedMatrix::complete(three_pollutant_surface(&r, &eps))?;
    let frame = SiteFrame::new(coords.clone(), r.columns(0, 1).into_owned())?;
    Ok((x, frame))
}

/// Sites of one replicate: the training sites followed by the test sites.
pub fn replicate_sites(cfg: &ScenarioConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let grid = gen_grid(cfg.grid_size)?;
    let (train, test) = split_train_test(grid.nrows(), cfg.n_train, cfg.n_test, cfg.seed)?;
    let rows: Vec<usize> = train.into_iter().chain(test).collect();
    Ok(grid.select_rows(&rows))
}

/// Complete three-pollutant data at the `n_train + n_test` sites of a
/// replicate (training rows first).
pub fn gen_three_pollutant(cfg: &ScenarioConfig) -> Result<(ObservedMatrix, SiteFrame)> {
    let correlated = match cfg.kind {
        ScenarioKind::ThreePollutantCorr => true,
        ScenarioKind::ThreePollutantIndep => false,
        other => {
            return Err(Error::InvalidConfig(format!("{other} is not a three-pollutant scenario")))
        }
    };
    three_pollutant_at(&replicate_sites(cfg)?, correlated, cfg.seed)
}

/// Construction constants of the 15-pollutant generator.
#[derive(Debug, Clone, PartialEq)]
pub struct HighDimDesign {
    /// Weights of `r1`, `r2` and the smooth field in `u1` (before scaling).
    pub u1_mix: [f64; 3],
    /// Weights of `r3` and the rough field in `u2` (before scaling).
    pub u2_mix: [f64; 2],
    pub smooth_range: f64,
    pub rough_range: f64,
    /// Loading magnitudes within each block of five pollutants.
    pub block_loading: [f64; 5],
    pub noise_sd: f64,
}

impl Default for HighDimDesign {
    fn default() -> Self {
        Self {
            u1_mix: [0.75, 0.75, 0.5],
            u2_mix: [0.8, 0.6],
            smooth_range: 25.0,
            rough_range: 2.0,
            block_loading: [0.3, 0.4, 0.5, 0.4, 0.58],
            noise_sd: 1.1,
        }
    }
}

/// Target `(Var u1, Var u2, Var u3)` per scenario.
pub fn score_variances(kind: ScenarioKind) -> Result<[f64; 3]> {
    match kind {
        ScenarioKind::HighDimS1 => Ok([10.0, 7.5, 5.0]),
        ScenarioKind::HighDimS2 => Ok([7.5, 5.0, 10.0]),
        other => Err(Error::InvalidConfig(format!("{other} is not a high-dimensional scenario"))),
    }
}

fn unit(v: &DVector<f64>) -> DVector<f64> {
    let mean = v.mean();
    let sd = sample_variance(v).sqrt();
    v.map(|x| (x - mean) / sd)
}

/// 15-pollutant data at given sites, with the three true scores.
///
/// `u1` mixes `r1`, `r2` and a smooth field, `u2` mixes `r3` and a rough
/// field, `u3` is independent noise; each is rescaled to the scenario's
/// empirical variance. Pollutants `5l..5l+5` load on `u_l` only.
pub fn high_dim_at(
    coords: &DMatrix<f64>,
    kind: ScenarioKind,
    design: &HighDimDesign,
    seed: u64,
) -> Result<(ObservedMatrix, SiteFrame, DMatrix<f64>)> {
    let vars = score_variances(kind)?;
    let n = coords.nrows();
    let r = standard_normal(n, 3, &mut stream_rng(seed, Stream::Covariates));
    let mut noise_rng = stream_rng(seed, Stream::Noise);
    let smooth = sample_gaussian_field(
        coords,
        &ExponentialCovParams { partial_sill: 1.0, nugget: 0.0, range: design.smooth_range },
        1,
        &mut noise_rng,
    )?;
    let rough = sample_gaussian_field(
        coords,
        &ExponentialCovParams { partial_sill: 1.0, nugget: 0.0, range: design.rough_range },
        1,
        &mut noise_rng,
    )?;
    let iid = standard_normal(n, 1, &mut noise_rng);

    let [a1, a2, a3] = design.u1_mix;
    let [b1, b2] = design.u2_mix;
    let raw = [
        DVector::from_fn(n, |i, _| a1 * r[(i, 0)] + a2 * r[(i, 1)] + a3 * smooth[(i, 0)]),
        DVector::from_fn(n, |i, _| b1 * r[(i, 2)] + b2 * rough[(i, 0)]),
        iid.column(0).into_owned(),
    ];
    let mut scores = DMatrix::zeros(n, 3);
    for l in 0..3 {
        scores.set_column(l, &(unit(&raw[l]) * vars[l].sqrt()));
    }

    let w = DVector::from_row_slice(&design.block_loading).normalize();
    let noise = standard_normal(n, 15, &mut noise_rng) * design.noise_sd;
    let vals = DMatrix::from_fn(n, 15, |i, j| scores[(i, j / 5)] * w[j % 5] + noise[(i, j)]);
    let x = ObservedMatrix::complete(vals)?;
    let frame = SiteFrame::new(coords.clone(), r)?;
    Ok((x, frame, scores))
}

/// Complete 15-pollutant data at the sites of a replicate (training first).
pub fn gen_high_dim(cfg: &ScenarioConfig) -> Result<(ObservedMatrix, SiteFrame, DMatrix<f64>)> {
    if !cfg.kind.is_high_dim() {
        return Err(Error::InvalidConfig(format!("{} is not a high-dimensional scenario", cfg.kind)));
    }
    high_dim_at(&replicate_sites(cfg)?, cfg.kind, &HighDimDesign::default(), cfg.seed)
}

/// Redraws a candidate mask until every row keeps an observed cell and every
/// column keeps two. `draw(i, j, rng)` returns `true` for a missing cell.
fn constrained_mask<F>(x: &ObservedMatrix, rng: &mut ChaCha8Rng, draw: F) -> Result<ObservedMatrix>
where
    F: Fn(usize, usize, &mut ChaCha8Rng) -> bool,
{
    let (n, p) = (x.nrows(), x.ncols());
    let mut missing = DMatrix::from_fn(n, p, |i, j| x.is_observed(i, j) && draw(i, j, rng));
    let keeps = |m: &DMatrix<bool>, i: usize, j: usize| x.is_observed(i, j) && !m[(i, j)];
    for _ in 0..1000 {
        let mut clean = true;
        for i in 0..n {
            if !(0..p).any(|j| keeps(&missing, i, j)) {
                clean = false;
                for j in 0..p {
                    missing[(i, j)] = x.is_observed(i, j) && draw(i, j, rng);
                }
            }
        }
        for j in 0..p {
            if (0..n).filter(|&i| keeps(&missing, i, j)).count() < 2 {
                clean = false;
                for i in 0..n {
                    missing[(i, j)] = x.is_observed(i, j) && draw(i, j, rng);
                }
            }
        }
        if clean {
            return x.mask_more(|i, j| missing[(i, j)]);
        }
    }
    Err(Error::InvalidConfig(
        "could not draw a missingness pattern that keeps every row and column identifiable".into(),
    ))
}

/// Masks each observed cell independently with probability `rate`.
pub fn apply_mcar(x: &ObservedMatrix, rate: f64, seed: u64) -> Result<ObservedMatrix> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!("MCAR rate {rate} outside [0, 1)")));
    }
    if rate == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = stream_rng(seed, Stream::Missing);
    constrained_mask(x, &mut rng, |_, _, rng| rng.random::<f64>() < rate)
}

fn first_covariate(x: &ObservedMatrix, frame: &SiteFrame) -> Result<DVector<f64>> {
    if frame.n() != x.nrows() || frame.k() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} data rows, frame with {} sites and {} covariates",
            x.nrows(),
            frame.n(),
            frame.k()
        )));
    }
    Ok(frame.covars().column(0).into_owned())
}

/// `x1` missing wherever `r1` exceeds its 80th sample percentile; `x2`, `x3`
/// 20% MCAR.
pub fn apply_mar_3d(x: &ObservedMatrix, frame: &SiteFrame, seed: u64) -> Result<ObservedMatrix> {
    if x.ncols() != 3 {
        return Err(Error::DimensionMismatch(format!("expected 3 pollutants, got {}", x.ncols())));
    }
    let r1 = first_covariate(x, frame)?;
    let cut = quantile(r1.as_slice(), 0.8);
    let high: Vec<bool> = r1.iter().map(|&r| r > cut).collect();
    let hidden = x.mask_more(|i, j| j == 0 && high[i])?;
    let mut rng = stream_rng(seed, Stream::Missing);
    constrained_mask(&hidden, &mut rng, |_, j, rng| j != 0 && rng.random::<f64>() < 0.2)
}

/// Probability that a site loses pollutants 1-5 when `|r1|` is extreme.
pub const MAR_HD_EXTREME: f64 = 0.75;
/// Same probability at the remaining sites.
pub const MAR_HD_BASE: f64 = 0.10;

/// Pollutants 1-5 are dropped together at a site with probability
/// [`MAR_HD_EXTREME`] where `|r1|` exceeds its 70th sample percentile and
/// [`MAR_HD_BASE`] elsewhere; pollutants 6-15 get 20% MCAR.
pub fn apply_mar_hd(x: &ObservedMatrix, frame: &SiteFrame, seed: u64) -> Result<ObservedMatrix> {
    if x.ncols() != 15 {
        return Err(Error::DimensionMismatch(format!("expected 15 pollutants, got {}", x.ncols())));
    }
    let extremity: Vec<f64> = first_covariate(x, frame)?.iter().map(|v| v.abs()).collect();
    let cut = quantile(&extremity, 0.7);
    let mut rng = stream_rng(seed, Stream::Missing);
    let site_draw: Vec<f64> = (0..x.nrows()).map(|_| rng.random::<f64>()).collect();
    constrained_mask(x, &mut rng, |i, j, rng| {
        if j >= 5 {
            rng.random::<f64>() < 0.2
        } else if extremity[i] > cut {
            site_draw[i] < MAR_HD_EXTREME
        } else {
            site_draw[i] < MAR_HD_BASE
        }
    })
}

/// Applies the configured missingness to training data.
pub fn apply_missingness(
    x: &ObservedMatrix,
    frame: &SiteFrame,
    missing: Missingness,
    seed: u64,
) -> Result<ObservedMatrix> {
    match missing {
        Missingness::Complete => Ok(x.clone()),
        Missingness::Mcar(rate) => apply_mcar(x, rate, seed),
        Missingness::Mar if x.ncols() == 3 => apply_mar_3d(x, frame, seed),
        Missingness::Mar => apply_mar_hd(x, frame, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_grid() {
        let g = gen_grid(2).unwrap();
        assert_eq!(g, nalgebra::dmatrix![0.0, 0.0; 1.0, 0.0; 0.0, 1.0; 1.0, 1.0]);
        assert_eq!(gen_grid(100).unwrap().nrows(), 10_000);
        assert!(gen_grid(1).is_err());
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let (a, b) = split_train_test(10_000, 400, 100, 3).unwrap();
        assert_eq!((a.len(), b.len()), (400, 100));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 500);
        assert_eq!(split_train_test(10_000, 400, 100, 3).unwrap(), (a.clone(), b));
        assert_ne!(split_train_test(10_000, 400, 100, 4).unwrap().0, a);
        assert!(split_train_test(10, 8, 3, 0).is_err());
    }

    #[test]
    fn noiseless_surface() {
        let r = nalgebra::dmatrix![1.0, 2.0, 3.0; -1.0, 0.5, 0.0];
        let x = three_pollutant_surface(&r, &DMatrix::zeros(2, 3));
        assert_eq!(x.column(1), (r.column(1) * 3.0));
        assert_eq!(x[(0, 0)], 10.0);
        assert_eq!(x[(1, 2)], 0.0);
    }

    #[test]
    fn mcar_rate_zero_is_identity() {
        let x = ObservedMatrix::complete(DMatrix::from_element(20, 4, 1.0)).unwrap();
        assert_eq!(apply_mcar(&x, 0.0, 1).unwrap(), x);
        assert!(apply_mcar(&x, 1.0, 1).is_err());
    }

    #[test]
    fn missingness_parses() {
        assert_eq!("mcar:0.35".parse::<Missingness>().unwrap(), Missingness::Mcar(0.35));
        assert_eq!("mar".parse::<Missingness>().unwrap(), Missingness::Mar);
        assert!("mcar:1.5".parse::<Missingness>().is_err());
        assert_eq!("high_dim_s2".parse::<ScenarioKind>().unwrap(), ScenarioKind::HighDimS2);
    }

    #[test]
    fn field_covariance_matches_exponential_model() {
        let coords = nalgebra::dmatrix![0.0, 0.0; 25.0, 0.0; 50.0, 0.0];
        let mut rng = stream_rng(11, Stream::Noise);
        let f = sample_gaussian_field(&coords, &THREE_POLLUTANT_NOISE, 20_000, &mut rng).unwrap();
        let m = f.ncols() as f64;
        for (k, d) in [(0, 0.0), (1, 25.0), (2, 50.0)] {
            let emp = f.row(0).dot(&f.row(k)) / m;
            let mut want = THREE_POLLUTANT_NOISE.partial_sill * (-d / THREE_POLLUTANT_NOISE.range).exp();
            if k == 0 {
                want += THREE_POLLUTANT_NOISE.nugget;
            }
            assert!((emp / want - 1.0).abs() < 0.15, "lag {d}: {emp} vs {want}");
        }
    }

    #[test]
    fn mcar_fraction_and_determinism() {
        let x = ObservedMatrix::complete(DMatrix::from_element(400, 15, 1.0)).unwrap();
        let a = apply_mcar(&x, 0.35, 5).unwrap();
        let observed = a.mask().iter().filter(|&&o| o).count() as f64 / 6000.0;
        assert!((observed - 0.65).abs() < 0.02, "{observed}");
        assert_eq!(apply_mcar(&x, 0.35, 5).unwrap().mask(), a.mask());
        assert_ne!(apply_mcar(&x, 0.35, 6).unwrap().mask(), a.mask());
    }

    #[test]
    fn mar_three_pollutant_rule() {
        let cfg = ScenarioConfig::new(ScenarioKind::ThreePollutantIndep, Missingness::Mar, 3);
        let (x, frame) = gen_three_pollutant(&cfg).unwrap();
        let m = apply_mar_3d(&x, &frame, 3).unwrap();
        let n = x.nrows() as f64;
        let r1 = frame.covars().column(0);
        let cut = quantile(r1.as_slice(), 0.8);
        let missing = |j: usize| (0..x.nrows()).filter(|&i| !m.is_observed(i, j)).count() as f64 / n;
        assert!((missing(0) - 0.2).abs() <= 1.0 / n.sqrt());
        assert!((0..x.nrows()).all(|i| m.is_observed(i, 0) || r1[i] > cut));
        for j in 1..3 {
            assert!((missing(j) - 0.2).abs() < 0.05, "{}", missing(j));
        }
    }

    #[test]
    fn mar_high_dim_properties() {
        let cfg = ScenarioConfig::new(ScenarioKind::HighDimS1, Missingness::Mar, 8);
        let (x, frame, _) = gen_high_dim(&cfg).unwrap();
        let m = apply_mar_hd(&x, &frame, 8).unwrap();
        let total = m.mask().iter().filter(|&&o| !o).count() as f64 / m.mask().len() as f64;
        assert!((0.15..=0.30).contains(&total), "{total}");
        let r1 = frame.covars().column(0);
        for j in 0..5 {
            let (mut hid, mut kept) = (Vec::new(), Vec::new());
            for i in 0..x.nrows() {
                if m.is_observed(i, j) { &mut kept } else { &mut hid }.push(r1[i].abs());
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            assert!(mean(&hid) > mean(&kept));
        }
        assert_eq!(apply_mar_hd(&x, &frame, 8).unwrap().mask(), m.mask());
    }

    #[test]
    fn high_dim_score_structure() {
        let coords = gen_grid(30).unwrap().rows(0, 600).into_owned();
        let (_, frame, u) = high_dim_at(&coords, ScenarioKind::HighDimS1, &HighDimDesign::default(), 4).unwrap();
        let var = |l: usize| sample_variance(&u.column(l).into_owned());
        assert!((var(0) / var(2) / 2.0 - 1.0).abs() < 0.05);
        // R^2 of an OLS fit on the three covariates
        let design = frame.covars().clone().insert_column(0, 1.0);
        let r2 = |l: usize| {
            let y = u.column(l).into_owned();
            let beta = design.clone().svd(true, true).solve(&y, 1e-12).unwrap();
            let resid = &y - &design * beta;
            1.0 - resid.norm_squared() / (var(l) * (y.len() as f64 - 1.0))
        };
        assert!(r2(0) > r2(2));
        assert!(r2(2).abs() < 0.02, "{}", r2(2));
    }
}
