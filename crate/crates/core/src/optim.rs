//! Bound-projected Nelder–Mead.
//!
//! Every trial point is projected before evaluation, so the simplex never
//! leaves the feasible box. The best point seen is tracked across all
//! evaluations; with a fixed start the evaluation sequence does not depend on
//! the budget, so a larger budget never returns a worse optimum.

use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when every vertex lies within this of the best vertex, per coordinate.
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 500,
            f_tol: 1e-12,
            x_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    /// `(value, best so far)` per evaluation, in evaluation order.
    pub trace: Vec<(f64, f64)>,
}

struct Evaluator<'a, F, P> {
    f: &'a F,
    project: &'a P,
    budget: usize,
    trace: Vec<(f64, f64)>,
    best: (Vec<f64>, f64),
}

impl<F, P> Evaluator<'_, F, P>
where
    F: Fn(&[f64]) -> f64 + Sync,
    P: Fn(&mut [f64]) + Sync,
{
    fn remaining(&self) -> usize {
        self.budget - self.trace.len()
    }

    fn record(&mut self, x: &[f64], v: f64) {
        if v < self.best.1 || self.trace.is_empty() {
            self.best = (x.to_vec(), v);
        }
        self.trace.push((v, self.best.1));
    }

    /// Projects in place, evaluates, records.
    fn eval(&mut self, x: &mut [f64]) -> Option<f64> {
        if self.remaining() == 0 {
            return None;
        }
        (self.project)(x);
        let v = sanitize((self.f)(x));
        self.record(x, v);
        Some(v)
    }

    /// Evaluates a batch concurrently, recording results in batch order.
    /// Points beyond the remaining budget are left unevaluated.
    fn eval_batch(&mut self, xs: &mut [Vec<f64>]) -> Vec<f64> {
        let n = xs.len().min(self.remaining());
        let (f, project) = (self.f, self.project);
        let values: Vec<f64> = xs[..n]
            .par_iter_mut()
            .map(|x| {
                project(x);
                sanitize(f(x))
            })
            .collect();
        for (x, &v) in xs.iter().zip(&values) {
            self.record(x, v);
        }
        values
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimizes `f` from `x0` with initial simplex edges `steps`.
///
/// Returns `None` when the budget cannot evaluate the initial simplex
/// (`max_evals < x0.len() + 1`).
pub fn nelder_mead<F, P>(f: &F, x0: &[f64], steps: &[f64], project: &P, opts: &NelderMeadOptions) -> Option<NelderMeadResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
    P: Fn(&mut [f64]) + Sync,
{
    let n = x0.len();
    assert_eq!(steps.len(), n, "one step per coordinate");
    if opts.max_evals < n + 1 {
        return None;
    }
    let mut ev = Evaluator {
        f,
        project,
        budget: opts.max_evals,
        trace: Vec::with_capacity(opts.max_evals),
        best: (x0.to_vec(), f64::INFINITY),
    };

    let mut simplex: Vec<Vec<f64>> = (0..=n)
        .map(|i| {
            let mut v = x0.to_vec();
            if i > 0 {
                v[i - 1] += steps[i - 1];
            }
            v
        })
        .collect();
    let mut values = ev.eval_batch(&mut simplex);

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    while ev.remaining() > 0 {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread_f = values[n] - values[0];
        let spread_x = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (spread_f.is_finite() && spread_f <= opts.f_tol) || spread_x <= opts.x_tol {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let mut xr = along(alpha);
        let Some(fr) = ev.eval(&mut xr) else { break };
        if fr < values[0] {
            let mut xe = along(gamma);
            let Some(fe) = ev.eval(&mut xe) else { break };
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (mut xc, outside) = if fr < values[n] { (along(rho), true) } else { (along(-rho), false) };
        let Some(fc) = ev.eval(&mut xc) else { break };
        if (outside && fc <= fr) || (!outside && fc < values[n]) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        let best = simplex[0].clone();
        let mut shrunk: Vec<Vec<f64>> = simplex[1..]
            .iter()
            .map(|v| best.iter().zip(v).map(|(b, x)| b + sigma * (x - b)).collect())
            .collect();
        let fs = ev.eval_batch(&mut shrunk);
        for (i, (x, v)) in shrunk.into_iter().zip(fs).enumerate() {
            simplex[i + 1] = x;
            values[i + 1] = v;
        }
    }

    let evals = ev.trace.len();
    Some(NelderMeadResult {
        x: ev.best.0,
        f: ev.best.1,
        evals,
        trace: ev.trace,
    })
}
