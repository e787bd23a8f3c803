//! Derivative-free minimizers used for covariance parameters.

/// Result of a minimization.
#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
}

/// Nelder-Mead simplex minimization inside a box. Trial points are clamped
/// onto the box, so `f` is only ever evaluated at feasible points.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    lower: &[f64],
    upper: &[f64],
    max_evals: usize,
    ftol: f64,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    let clamp = |x: &mut Vec<f64>| {
        for k in 0..dim {
            x[k] = x[k].clamp(lower[k], upper[k]);
        }
    };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let mut start = x0.to_vec();
    clamp(&mut start);
    let f0 = eval(&start, &mut evals);
    simplex.push((start.clone(), f0));
    for k in 0..dim {
        let mut p = start.clone();
        p[k] += step[k];
        if p[k] > upper[k] {
            p[k] = start[k] - step[k];
        }
        clamp(&mut p);
        let fp = eval(&p, &mut evals);
        simplex.push((p, fp));
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if (worst - best).abs() <= ftol * (best.abs() + ftol) {
            break;
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|p| p.0[k]).sum::<f64>() / dim as f64)
            .collect();
        let toward = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = (0..dim)
                .map(|k| centroid[k] + t * (simplex[dim].0[k] - centroid[k]))
                .collect();
            for k in 0..dim {
                p[k] = p[k].clamp(lower[k], upper[k]);
            }
            p
        };

        let xr = toward(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = toward(-2.0);
            let fe = eval(&xe, &mut evals);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[dim].1 {
                let xc = toward(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = toward(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < simplex[dim].1.min(fr) {
                simplex[dim] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    let shrunk: Vec<f64> = (0..dim)
                        .map(|k| x_best[k] + 0.5 * (p.0[k] - x_best[k]))
                        .collect();
                    let fs = eval(&shrunk, &mut evals);
                    *p = (shrunk, fs);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, evals }
}

/// Brent's method on `[lo, hi]` with an optional known interior point.
pub fn brent<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    start: Option<(f64, f64)>,
    tol: f64,
    max_evals: usize,
) -> Minimum
where
    F: FnMut(f64) -> f64,
{
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (lo, hi);
    let mut evals = 0usize;
    let (mut x, mut fx) = match start {
        Some((x, fx)) => (x.clamp(lo, hi), fx),
        None => {
            let x = a + GOLD * (b - a);
            evals += 1;
            (x, f(x))
        }
    };
    let (mut w, mut fw, mut v, mut fv) = (x, fx, x, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    while evals < max_evals {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-10;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if x < m { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let mut fu = f(u);
        evals += 1;
        if fu.is_nan() {
            fu = f64::INFINITY;
        }
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Minimum {
        x: vec![x],
        value: fx,
        evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(
            f,
            &[-1.0, 1.5],
            &[0.5, 0.5],
            &[-5.0, -5.0],
            &[5.0, 5.0],
            2000,
            1e-14,
        );
        assert!((m.x[0] - 1.0).abs() < 1e-3, "{:?}", m);
        assert!((m.x[1] - 1.0).abs() < 2e-3, "{:?}", m);
    }

    #[test]
    fn nelder_mead_respects_bounds() {
        let f = |x: &[f64]| (x[0] + 3.0).powi(2);
        let m = nelder_mead(f, &[0.0], &[0.5], &[-1.0], &[1.0], 200, 1e-12);
        assert!((m.x[0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn brent_minimizes_parabola() {
        let m = brent(|x| (x - 0.3).powi(2) + 1.0, -2.0, 4.0, None, 1e-8, 100);
        assert!((m.x[0] - 0.3).abs() < 1e-6);
        assert!((m.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brent_boundary_minimum() {
        let m = brent(|x| x, 0.0, 1.0, None, 1e-8, 100);
        assert!(m.x[0] < 1e-6);
    }
}
