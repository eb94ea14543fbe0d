//! Dense BFGS ascent with Armijo backtracking.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Options {
    pub max_iters: usize,
    /// Stop once `‖∇F‖∞ · grad_scale` drops to this value.
    pub grad_tol: f64,
    pub grad_scale: f64,
    /// Largest allowed component of a trial step.
    pub max_step: f64,
    /// Backtracking gives up once the largest step component falls below this.
    pub min_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    MaxIterations,
    LineSearchFailure,
    Degenerate,
}

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    /// Objective at the start point and at every accepted iterate.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// Maximizes `f`. `f(x, true)` must return the gradient; `f(x, false)` may
/// skip it.
pub(crate) fn maximize<F>(mut f: F, x0: Vec<f64>, opts: Options) -> Result<Outcome>
where
    F: FnMut(&[f64], bool) -> Result<(f64, Option<Vec<f64>>)>,
{
    let n = x0.len();
    let mut x = DVector::from_vec(x0);
    let gradient = |f: &mut F, x: &DVector<f64>| -> Result<(f64, DVector<f64>)> {
        let (v, g) = f(x.as_slice(), true)?;
        Ok((v, DVector::from_vec(g.expect("gradient requested"))))
    };
    let (mut fx, mut g) = gradient(&mut f, &x)?;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut trace = vec![fx];
    let mut iterations = 0;

    let stop = loop {
        if g.amax() * opts.grad_scale <= opts.grad_tol {
            break StopReason::GradientTolerance;
        }
        if iterations >= opts.max_iters {
            break StopReason::MaxIterations;
        }
        let mut p = &h * &g;
        let mut slope = g.dot(&p);
        if !(slope > 0.0) {
            h = DMatrix::identity(n, n);
            scaled = false;
            p = g.clone();
            slope = g.dot(&p);
        }
        let big = p.amax();
        if big > opts.max_step {
            p *= opts.max_step / big;
            slope = g.dot(&p);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            if t * p.amax() < opts.min_step {
                break;
            }
            let trial = &x + t * &p;
            let (ft, _) = f(trial.as_slice(), false)?;
            if ft.is_finite() && ft >= fx + ARMIJO_C1 * t * slope && ft > fx {
                let (_, gt) = gradient(&mut f, &trial)?;
                accepted = Some((trial, ft, gt));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break StopReason::LineSearchFailure;
        };
        iterations += 1;

        // Curvature pair for the minimization of -F.
        let s = &x_new - &x;
        let y = &g - &g_new;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() && sy > 0.0 {
            if !scaled {
                h = DMatrix::identity(n, n) * (sy / y.dot(&y));
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H+ = H - ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            h -= rho * (&hy * s.transpose() + &s * hy.transpose());
            h += (rho * rho * yhy + rho) * (&s * s.transpose());
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);
    };

    Ok(Outcome {
        x: x.as_slice().to_vec(),
        trace,
        iterations,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concave_quadratic() {
        // F = -(x-3)² - 10(y+1)² - xy
        let f = |p: &[f64], _: bool| {
            let (x, y) = (p[0], p[1]);
            let v = -(x - 3.0).powi(2) - 10.0 * (y + 1.0).powi(2) - x * y;
            Ok((v, Some(vec![-2.0 * (x - 3.0) - y, -20.0 * (y + 1.0) - x])))
        };
        let opts = Options {
            max_iters: 100,
            grad_tol: 1e-10,
            grad_scale: 1.0,
            max_step: 10.0,
            min_step: 0.0,
        };
        let out = maximize(f, vec![0.0, 0.0], opts).unwrap();
        // stationary point solves [[2,1],[1,20]] p = [6,-20]
        let det = 2.0 * 20.0 - 1.0;
        let xs = (6.0 * 20.0 + 20.0) / det;
        let ys = (2.0 * -20.0 - 6.0) / det;
        assert!((out.x[0] - xs).abs() < 1e-8 && (out.x[1] - ys).abs() < 1e-8, "{:?}", out.x);
        assert_eq!(out.stop, StopReason::GradientTolerance);
        assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn rosenbrock_ascent() {
        let f = |p: &[f64], _: bool| {
            let (a, b) = (p[0], p[1]);
            let v = -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2));
            let ga = 2.0 * (1.0 - a) + 400.0 * a * (b - a * a);
            let gb = -200.0 * (b - a * a);
            Ok((v, Some(vec![ga, gb])))
        };
        let opts = Options {
            max_iters: 500,
            grad_tol: 1e-9,
            grad_scale: 1.0,
            max_step: 0.5,
            min_step: 0.0,
        };
        let out = maximize(f, vec![-1.2, 1.0], opts).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }
}
