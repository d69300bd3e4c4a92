//! Classical Runge-Kutta for linear (affine) systems with step-doubling error
//! control: the step count is doubled until the solutions at `n` and `2n`
//! steps agree to the requested relative tolerance.

use crate::par::Execution;
use crate::{Error, Result};

pub(crate) trait LinearRhs: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, y: &[f64], dy: &mut [f64], exec: Execution);
    /// Upper bound on the spectral radius, used to pick the first step.
    fn norm_bound(&self) -> f64;
}

const MAX_STEPS: usize = 1 << 22;

pub(crate) fn integrate<S: LinearRhs>(
    sys: &S,
    y0: &[f64],
    t: f64,
    rel_tol: f64,
    exec: Execution,
) -> Result<Vec<f64>> {
    assert_eq!(y0.len(), sys.dim());
    if t == 0.0 {
        return Ok(y0.to_vec());
    }
    let mut steps = ((t * sys.norm_bound() / 0.25).ceil() as usize).max(4);
    let mut coarse = rk4(sys, y0, t, steps, exec);
    loop {
        let fine = rk4(sys, y0, t, 2 * steps, exec);
        let diff = coarse
            .iter()
            .zip(&fine)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = fine.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let estimate = diff / 15.0;
        if estimate <= rel_tol * scale || estimate == 0.0 {
            return Ok(fine);
        }
        steps *= 2;
        if 2 * steps > MAX_STEPS {
            return Err(Error::Integrator {
                tol: rel_tol,
                estimate: estimate / scale,
                steps,
            });
        }
        coarse = fine;
    }
}

fn rk4<S: LinearRhs>(sys: &S, y0: &[f64], t: f64, steps: usize, exec: Execution) -> Vec<f64> {
    let n = sys.dim();
    let h = t / steps as f64;
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for _ in 0..steps {
        sys.eval(&y, &mut k1, exec);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        sys.eval(&tmp, &mut k2, exec);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        sys.eval(&tmp, &mut k3, exec);
        for i in 0..n {
            tmp[i] = y[i] + h * k3[i];
        }
        sys.eval(&tmp, &mut k4, exec);
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}
