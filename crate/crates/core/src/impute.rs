//! SoftImpute low-rank matrix completion.
//!
//! The fit is `1 mu' + Z`: unpenalized column offsets `mu`, re-estimated at
//! every step, plus a low-rank part `Z` obtained by singular-value
//! soft-thresholding. Observed cells of the output always equal the input.

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::ObservedMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SoftImputeFit {
    /// Completed matrix on the original scale.
    pub filled: DMatrix<f64>,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `0.5 |P(X - 1 mu' - Z)|^2 + lambda |Z|_*`, one entry per iterate,
    /// starting from the observed column means and `Z = 0`.
    pub objective: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SoftImputeCv {
    pub fit: SoftImputeFit,
    pub lambda: f64,
    /// Held-out RMSE per grid value, in grid order. Empty for a singleton grid.
    pub holdout_rmse: Vec<f64>,
}

pub const DEFAULT_HOLDOUT: f64 = 0.1;

struct Centered {
    xc: DMatrix<f64>,
    mask: DMatrix<bool>,
    means: DVector<f64>,
}

fn center(x: &ObservedMatrix) -> Result<Centered> {
    let means = x.observed_column_means()?;
    let xc = x.filled_with(|_, j| means[j]);
    let xc = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| xc[(i, j)] - means[j]);
    Ok(Centered {
        xc,
        mask: x.mask().clone(),
        means,
    })
}

/// Current fit `1 mu' + z`.
#[derive(Debug, Clone)]
struct State {
    mu: DVector<f64>,
    z: DMatrix<f64>,
}

impl State {
    fn start(c: &Centered) -> Self {
        State {
            mu: c.means.clone(),
            z: DMatrix::zeros(c.xc.nrows(), c.xc.ncols()),
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.mu[j] + self.z[(i, j)]
    }
}

fn objective(c: &Centered, s: &State, nuclear: f64, lambda: f64) -> f64 {
    let mut rss = 0.0;
    for j in 0..c.xc.ncols() {
        for i in 0..c.xc.nrows() {
            if c.mask[(i, j)] {
                let e = c.xc[(i, j)] + c.means[j] - s.at(i, j);
                rss += e * e;
            }
        }
    }
    0.5 * rss + lambda * nuclear
}

/// Soft-thresholded SVD truncated at `rank_cap`; returns the matrix and its
/// nuclear norm.
fn svt(m: DMatrix<f64>, lambda: f64, rank_cap: usize) -> (DMatrix<f64>, f64) {
    let (n, p) = m.shape();
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut out = DMatrix::zeros(n, p);
    let mut nuclear = 0.0;
    for &k in order.iter().take(rank_cap) {
        let s = svd.singular_values[k] - lambda;
        if s <= 0.0 {
            break;
        }
        nuclear += s;
        out += s * u.column(k) * v_t.row(k);
    }
    (out, nuclear)
}

fn run(
    c: &Centered,
    lambda: f64,
    rank_cap: usize,
    tol: f64,
    max_iter: usize,
    mut state: State,
) -> (State, usize, bool, Vec<f64>) {
    let (n, p) = c.xc.shape();
    let nuclear0 = if state.z.iter().all(|&v| v == 0.0) {
        0.0
    } else {
        state.z.clone().singular_values().sum()
    };
    let mut trace = vec![objective(c, &state, nuclear0, lambda)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let fill = DMatrix::from_fn(n, p, |i, j| {
            if c.mask[(i, j)] {
                c.xc[(i, j)] + c.means[j]
            } else {
                state.at(i, j)
            }
        });
        let mu = DVector::from_fn(p, |j, _| fill.column(j).mean());
        let (z, nuclear) = svt(DMatrix::from_fn(n, p, |i, j| fill[(i, j)] - mu[j]), lambda, rank_cap);
        let next = State { mu, z };
        let change: f64 = (0..p)
            .flat_map(|j| (0..n).map(move |i| (i, j)))
            .map(|(i, j)| (next.at(i, j) - state.at(i, j)).powi(2))
            .sum();
        let base = state.z.norm_squared();
        state = next;
        trace.push(objective(c, &state, nuclear, lambda));
        if change == 0.0 || change < tol * base {
            converged = true;
            break;
        }
    }
    (state, iterations, converged, trace)
}

fn finish(x: &ObservedMatrix, s: &State) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x.get(i, j).unwrap_or(s.at(i, j)))
}

fn check_args(lambda: f64, rank_cap: usize) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    if rank_cap == 0 {
        return Err(Error::InvalidConfig("rank_cap must be positive".into()));
    }
    Ok(())
}

/// Completes `x` by alternating `mu <- colmeans(F)` and
/// `Z <- SVT_lambda(F - 1 mu')` with `F = P(X) + P_perp(1 mu' + Z)`, until the
/// relative squared change drops below `tol`.
pub fn soft_impute(
    x: &ObservedMatrix,
    lambda: f64,
    rank_cap: usize,
    tol: f64,
    max_iter: usize,
) -> Result<SoftImputeFit> {
    check_args(lambda, rank_cap)?;
    let c = center(x)?;
    let (state, iterations, converged, objective) =
        run(&c, lambda, rank_cap, tol, max_iter, State::start(&c));
    if !converged {
        warn!("soft_impute did not converge in {max_iter} iterations (lambda {lambda})");
    }
    Ok(SoftImputeFit {
        filled: finish(x, &state),
        lambda,
        iterations,
        converged,
        objective,
    })
}

/// Ten log-spaced values from `0.01 s1` to `s1`, largest first, where `s1`
/// is the top singular value of the column-centered mean-imputed matrix.
pub fn default_lambda_grid(x: &ObservedMatrix) -> Result<Vec<f64>> {
    let c = center(x)?;
    let s1 = c.xc.singular_values().max();
    if !(s1 > 0.0) {
        return Err(Error::DegenerateInput("matrix is constant".into()));
    }
    Ok((0..10)
        .map(|k| s1 * 10f64.powf(-2.0 * k as f64 / 9.0))
        .collect())
}

/// Observed cells to hold out: a seeded shuffle, skipping cells whose removal
/// would leave a row empty or a column with fewer than two entries.
fn holdout_cells(x: &ObservedMatrix, frac: f64, seed: u64) -> Vec<(usize, usize)> {
    let mut cells: Vec<(usize, usize)> = x.iter_observed().map(|(i, j, _)| (i, j)).collect();
    let target = (frac * cells.len() as f64).round() as usize;
    cells.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut row_left: Vec<usize> = (0..x.nrows())
        .map(|i| (0..x.ncols()).filter(|&j| x.is_observed(i, j)).count())
        .collect();
    let mut col_left: Vec<usize> = (0..x.ncols())
        .map(|j| (0..x.nrows()).filter(|&i| x.is_observed(i, j)).count())
        .collect();
    let mut out = Vec::with_capacity(target);
    for (i, j) in cells {
        if out.len() == target {
            break;
        }
        if row_left[i] > 1 && col_left[j] > 2 {
            row_left[i] -= 1;
            col_left[j] -= 1;
            out.push((i, j));
        }
    }
    out
}

const CV_TOL: f64 = 1e-7;
const CV_MAX_ITER: usize = 1000;

/// Chooses `lambda` from `grid` by held-out RMSE, then refits on every
/// observed entry. The grid is traversed from the largest value down with
/// warm starts; ties go to the larger `lambda`.
pub fn soft_impute_cv(
    x: &ObservedMatrix,
    grid: &[f64],
    holdout_frac: f64,
    seed: u64,
) -> Result<SoftImputeCv> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    for &l in grid {
        check_args(l, 1)?;
    }
    if !(holdout_frac > 0.0 && holdout_frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "holdout fraction must be in (0, 1), got {holdout_frac}"
        )));
    }
    let rank_cap = x.nrows().min(x.ncols());
    if grid.len() == 1 {
        let fit = soft_impute(x, grid[0], rank_cap, CV_TOL, CV_MAX_ITER)?;
        return Ok(SoftImputeCv {
            lambda: grid[0],
            fit,
            holdout_rmse: Vec::new(),
        });
    }

    let held = holdout_cells(x, holdout_frac, seed);
    if held.is_empty() {
        return Err(Error::DegenerateInput(
            "no observed entry can be held out".into(),
        ));
    }
    let held_set: std::collections::HashSet<(usize, usize)> = held.iter().copied().collect();
    let train = x.mask_more(|i, j| held_set.contains(&(i, j)))?;
    let c = center(&train)?;

    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let mut rmse = vec![f64::NAN; grid.len()];
    let mut state = State::start(&c);
    for &g in &order {
        state = run(&c, grid[g], rank_cap, CV_TOL, CV_MAX_ITER, state).0;
        let sse: f64 = held
            .iter()
            .map(|&(i, j)| {
                let e = x.get(i, j).expect("held-out cell is observed") - state.at(i, j);
                e * e
            })
            .sum();
        rmse[g] = (sse / held.len() as f64).sqrt();
    }
    let best = order
        .iter()
        .copied()
        .fold(order[0], |b, g| if rmse[g] < rmse[b] { g } else { b });
    let lambda = grid[best];
    let fit = soft_impute(x, lambda, rank_cap, CV_TOL, CV_MAX_ITER)?;
    Ok(SoftImputeCv {
        fit,
        lambda,
        holdout_rmse: rmse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn rank_one_with_holes(n: usize, p: usize, frac: f64, seed: u64) -> (DMatrix<f64>, ObservedMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..p).map(|_| 1.0 + rng.random::<f64>()).collect();
        let full = DMatrix::from_fn(n, p, |i, j| a[i] * b[j]);
        let drop = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() < frac);
        let x = ObservedMatrix::complete(full.clone())
            .unwrap()
            .mask_more(|i, j| drop[(i, j)])
            .unwrap();
        (full, x)
    }

    #[test]
    fn identity_on_complete() {
        let (full, _) = rank_one_with_holes(10, 4, 0.0, 1);
        let x = ObservedMatrix::complete(full.clone()).unwrap();
        let fit = soft_impute(&x, 0.5, 4, 1e-9, 100).unwrap();
        assert_eq!(fit.filled, full);
    }

    #[test]
    fn full_shrinkage_gives_column_means() {
        let (_, x) = rank_one_with_holes(30, 5, 0.2, 2);
        let s1 = default_lambda_grid(&x).unwrap()[0];
        let fit = soft_impute(&x, s1 * 1.0001, 5, 1e-9, 100).unwrap();
        let means = x.observed_column_means().unwrap();
        for i in 0..30 {
            for j in 0..5 {
                let want = x.get(i, j).unwrap_or(means[j]);
                assert!((fit.filled[(i, j)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hard_impute_recovers_rank_one() {
        // the column offsets absorb the mean of u v', so cap 1 is exact
        let (full, x) = rank_one_with_holes(60, 6, 0.2, 3);
        let fit = soft_impute(&x, 0.0, 1, 1e-14, 20_000).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..60 {
            for j in 0..6 {
                if !x.is_observed(i, j) {
                    num += (fit.filled[(i, j)] - full[(i, j)]).powi(2);
                    den += full[(i, j)].powi(2);
                }
            }
        }
        assert!((num / den).sqrt() < 1e-3, "rel err {}", (num / den).sqrt());
    }

    #[test]
    fn objective_non_increasing() {
        let (full, x) = rank_one_with_holes(40, 6, 0.3, 4);
        let noisy = ObservedMatrix::new(
            full.map(|v| v + 0.3),
            x.mask().clone(),
        )
        .unwrap();
        let grid = default_lambda_grid(&noisy).unwrap();
        for &l in &[grid[3], grid[9], 0.0] {
            let fit = soft_impute(&noisy, l, 6, 1e-12, 300).unwrap();
            for w in fit.objective.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn cv_singleton_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (full, x) = rank_one_with_holes(50, 5, 0.2, 5);
        let noisy = ObservedMatrix::new(
            full.map(|v| {
                let e: f64 = StandardNormal.sample(&mut rng);
                v + 0.1 * e
            }),
            x.mask().clone(),
        )
        .unwrap();
        let one = soft_impute_cv(&noisy, &[0.7], 0.1, 1).unwrap();
        let direct = soft_impute(&noisy, 0.7, 5, CV_TOL, CV_MAX_ITER).unwrap();
        assert_eq!(one.fit.filled, direct.filled);

        let grid = default_lambda_grid(&noisy).unwrap();
        let a = soft_impute_cv(&noisy, &grid, 0.1, 11).unwrap();
        let b = soft_impute_cv(&noisy, &grid, 0.1, 11).unwrap();
        assert_eq!(a.lambda, b.lambda);
        assert_eq!(a.fit.filled, b.fit.filled);
        let best = a.holdout_rmse.iter().copied().fold(f64::INFINITY, f64::min);
        let chosen = grid.iter().position(|&l| l == a.lambda).unwrap();
        assert_eq!(a.holdout_rmse[chosen], best);
    }

    #[test]
    fn rejects_bad_arguments() {
        let (_, x) = rank_one_with_holes(10, 3, 0.1, 6);
        assert!(soft_impute(&x, -1.0, 3, 1e-6, 10).is_err());
        assert!(soft_impute(&x, 1.0, 0, 1e-6, 10).is_err());
        assert!(soft_impute_cv(&x, &[], 0.1, 0).is_err());
        assert!(soft_impute_cv(&x, &[1.0, 2.0], 1.5, 0).is_err());
    }
}
