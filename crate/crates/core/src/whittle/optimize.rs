//! Derivative-free maximizers on a box: a scanned golden-section search for
//! one parameter and a projected Nelder–Mead simplex for several.

use serde::{Deserialize, Serialize};

/// Outcome of one local search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalResult {
    pub start: Vec<f64>,
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Maximizes `f` on `[lo, hi]`: scan `scan_points` equally spaced values, then
/// refine by golden section between the neighbours of the best one.
pub fn scan_golden<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    scan_points: usize,
    x_tol: f64,
    max_iter: usize,
) -> LocalResult {
    let n = scan_points.max(3);
    let step = (hi - lo) / (n - 1) as f64;
    let mut evals = 0;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for i in 0..n {
        let x = lo + i as f64 * step;
        let v = f(x);
        evals += 1;
        if v > best.0 {
            best = (v, i);
        }
    }
    let i = best.1;
    let mut a = lo + i.saturating_sub(1) as f64 * step;
    let mut b = (lo + (i + 1) as f64 * step).min(hi);
    let scan_best = (lo + i as f64 * step, best.0);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    evals += 2;
    let mut iters = 0;
    while (b - a) > x_tol && iters < max_iter {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        evals += 1;
        iters += 1;
    }
    let (mut x, mut v) = if fc >= fd { (c, fc) } else { (d, fd) };
    // Endpoints are never probed by the interior golden points.
    for e in [a, b] {
        let fe = if e == scan_best.0 {
            scan_best.1
        } else {
            evals += 1;
            f(e)
        };
        if fe > v {
            x = e;
            v = fe;
        }
    }
    if scan_best.1 > v {
        x = scan_best.0;
        v = scan_best.1;
    }
    LocalResult {
        start: vec![0.5 * (lo + hi)],
        x: vec![x],
        value: v,
        iterations: iters,
        evaluations: evals,
        converged: (b - a) <= x_tol,
    }
}

/// Settings for [`nelder_mead`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplexSettings {
    pub x_tol: f64,
    pub f_tol: f64,
    pub max_iter: usize,
    /// Initial edge length as a fraction of the box width.
    pub initial_scale: f64,
}

impl Default for SimplexSettings {
    fn default() -> Self {
        Self { x_tol: 1e-6, f_tol: 1e-10, max_iter: 4000, initial_scale: 0.1 }
    }
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

/// Maximizes `f` on the box `[lo, hi]` by Nelder–Mead, projecting every trial
/// point onto the box. Non-finite values count as `−∞`. The search is
/// restarted once from its own optimum to guard against a collapsed simplex.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    start: &[f64],
    lo: &[f64],
    hi: &[f64],
    s: SimplexSettings,
) -> LocalResult {
    let mut total_iters = 0;
    let mut total_evals = 0;
    let mut x0 = start.to_vec();
    project(&mut x0, lo, hi);
    let mut last = None;
    for _round in 0..2 {
        let r = nm_once(&mut f, &x0, lo, hi, s);
        total_iters += r.iterations;
        total_evals += r.evaluations;
        let done = last.as_ref().is_some_and(|l: &LocalResult| (r.value - l.value).abs() <= s.f_tol);
        x0 = r.x.clone();
        last = Some(r);
        if done {
            break;
        }
    }
    let mut r = last.expect("at least one round");
    r.start = start.to_vec();
    r.iterations = total_iters;
    r.evaluations = total_evals;
    r
}

fn nm_once<F: FnMut(&[f64]) -> f64>(f: &mut F, x0: &[f64], lo: &[f64], hi: &[f64], s: SimplexSettings) -> LocalResult {
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evals)));
    for i in 0..n {
        let mut x = x0.to_vec();
        let step = s.initial_scale * (hi[i] - lo[i]);
        x[i] = if x[i] + step <= hi[i] { x[i] + step } else { x[i] - step };
        project(&mut x, lo, hi);
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let mut iters = 0;
    let mut converged = false;
    while iters < s.max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let worst_f = simplex[n].1;
        let diam = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&best.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let scale = best.0.iter().map(|v| v.abs()).fold(1.0, f64::max);
        if diam <= s.x_tol * scale && (worst_f - best.1).abs() <= s.f_tol * best.1.abs().max(1.0) {
            converged = true;
            break;
        }
        iters += 1;
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for i in 0..n {
                centroid[i] += x[i] / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = (0..n).map(|i| centroid[i] + t * (simplex[n].0[i] - centroid[i])).collect();
            project(&mut x, lo, hi);
            x
        };
        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let mut x: Vec<f64> = (0..n).map(|i| x_best[i] + 0.5 * (v.0[i] - x_best[i])).collect();
                    project(&mut x, lo, hi);
                    let fx = eval(&x, &mut evals);
                    *v = (x, fx);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, v) = simplex.swap_remove(0);
    LocalResult { start: x0.to_vec(), x, value: -v, iterations: iters, evaluations: evals, converged }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn golden_finds_interior_max() {
        let r = scan_golden(|x| -(x - 1.234_567).powi(2), 0.0, 10.0, 50, 1e-8, 200);
        assert_abs_diff_eq!(r.x[0], 1.234_567, epsilon = 1e-6);
    }

    #[test]
    fn golden_finds_boundary_max() {
        let r = scan_golden(|x| -x, 0.5, 3.0, 20, 1e-8, 200);
        assert_abs_diff_eq!(r.x[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn simplex_rosenbrock() {
        let f = |x: &[f64]| -((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2));
        let r = nelder_mead(f, &[-1.0, 2.0], &[-3.0, -3.0], &[3.0, 3.0], SimplexSettings::default());
        assert_abs_diff_eq!(r.x[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(r.x[1], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn simplex_respects_box() {
        let f = |x: &[f64]| x[0] + x[1];
        let r = nelder_mead(f, &[0.5, 0.5], &[0.0, 0.0], &[1.0, 2.0], SimplexSettings::default());
        assert_abs_diff_eq!(r.x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.x[1], 2.0, epsilon = 1e-6);
    }
}
