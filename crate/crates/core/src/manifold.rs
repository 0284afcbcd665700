//! Riemannian conjugate gradient on the complex circle manifold
//! `{x : |x_t| = r for all t}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{norm, real_inner};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleManifold {
    radius: f64,
    dim: usize,
}

impl CircleManifold {
    pub fn new(radius: f64, dim: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("manifold radius must be positive"));
        }
        if dim == 0 {
            return Err(Error::invalid("manifold dimension must be positive"));
        }
        Ok(CircleManifold { radius, dim })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check_len(&self, v: &[Complex64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                axis: "n_tot",
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Largest relative modulus error of `x`.
    pub fn deviation(&self, x: &[Complex64]) -> f64 {
        x.iter()
            .map(|z| (z.norm() - self.radius).abs() / self.radius)
            .fold(0.0, f64::max)
    }

    pub fn check_point(&self, x: &[Complex64], tol: f64) -> Result<()> {
        self.check_len(x)?;
        let deviation = self.deviation(x);
        if deviation > tol {
            return Err(Error::OffManifold { deviation });
        }
        Ok(())
    }

    /// `r * exp(j angle(z))` entrywise; a zero entry has no phase.
    pub fn project_point(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(z)?;
        z.iter()
            .enumerate()
            .map(|(index, v)| {
                if !(v.re.is_finite() && v.im.is_finite()) {
                    Err(Error::NonFinite(format!("entry {index} of retraction")))
                } else if *v == Complex64::new(0.0, 0.0) {
                    Err(Error::ZeroEntry { index })
                } else {
                    Ok(Complex64::from_polar(self.radius, v.arg()))
                }
            })
            .collect()
    }

    /// Orthogonal projection onto the tangent space at `x`:
    /// `z - Re{z . conj(x)} . x / r^2`.
    pub fn project_tangent(&self, x: &[Complex64], z: &[Complex64]) -> Vec<Complex64> {
        let inv_r2 = 1.0 / (self.radius * self.radius);
        z.iter()
            .zip(x)
            .map(|(zv, xv)| zv - xv * ((zv * xv.conj()).re * inv_r2))
            .collect()
    }

    pub fn retract(&self, x: &[Complex64], v: &[Complex64], alpha: f64) -> Result<Vec<Complex64>> {
        self.check_len(v)?;
        let moved: Vec<Complex64> = x.iter().zip(v).map(|(a, b)| a + b * alpha).collect();
        self.project_point(&moved)
    }
}

/// State carried between inner iterations.
#[derive(Debug, Clone)]
pub struct RcgState {
    pub x: Vec<Complex64>,
    /// Riemannian gradient at `x`.
    pub grad: Vec<Complex64>,
    pub dir: Vec<Complex64>,
    pub step: f64,
    pub q: usize,
}

/// Polak-Ribiere+ direction at `x_new` from the Riemannian gradient there and
/// the previous state, with both previous vectors carried over by tangent
/// projection. Falls back to steepest descent when the previous gradient is
/// zero or the result is not a descent direction.
pub fn pr_direction(
    manifold: &CircleManifold,
    prev: &RcgState,
    x_new: &[Complex64],
    grad_new: &[Complex64],
) -> Vec<Complex64> {
    let steepest = || grad_new.iter().map(|g| -g).collect::<Vec<_>>();
    let denom = real_inner(&prev.grad, &prev.grad);
    if denom == 0.0 || !denom.is_finite() {
        return steepest();
    }
    let g_old = manifold.project_tangent(x_new, &prev.grad);
    let d_old = manifold.project_tangent(x_new, &prev.dir);
    let diff: Vec<Complex64> = grad_new.iter().zip(&g_old).map(|(a, b)| a - b).collect();
    let beta = (real_inner(grad_new, &diff) / denom).max(0.0);
    if beta == 0.0 || !beta.is_finite() {
        return steepest();
    }
    let dir: Vec<Complex64> = grad_new
        .iter()
        .zip(&d_old)
        .map(|(g, d)| d * beta - g)
        .collect();
    if real_inner(grad_new, &dir) < 0.0 {
        dir
    } else {
        steepest()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmijoParams {
    pub alpha_init: f64,
    pub c1: f64,
    pub shrink: f64,
    pub max_trials: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        ArmijoParams {
            alpha_init: 1.0,
            c1: 1e-4,
            shrink: 0.5,
            max_trials: 50,
        }
    }
}

impl ArmijoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_init > 0.0 && self.alpha_init.is_finite()) {
            return Err(Error::Config("armijo.alpha_init must be positive".into()));
        }
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return Err(Error::Config("armijo.c1 must lie in (0, 1)".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Config("armijo.shrink must lie in (0, 1)".into()));
        }
        if self.max_trials == 0 {
            return Err(Error::Config("armijo.max_trials must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    pub point: Vec<Complex64>,
    pub value: f64,
    /// No trial satisfied the sufficient-decrease test; `point` is the start.
    pub stalled: bool,
    pub evaluations: usize,
}

/// Backtracking Armijo search along `dir` from `x`, where `slope` is
/// `Re<grad, dir>` (negative for a descent direction).
pub fn armijo_search(
    manifold: &CircleManifold,
    f: &mut impl FnMut(&[Complex64]) -> Result<f64>,
    x: &[Complex64],
    fx: f64,
    dir: &[Complex64],
    slope: f64,
    params: &ArmijoParams,
) -> Result<LineSearchOutcome> {
    let mut alpha = params.alpha_init;
    let mut evaluations = 0;
    if slope < 0.0 {
        for _ in 0..params.max_trials {
            match manifold.retract(x, dir, alpha) {
                Ok(point) => {
                    let value = f(&point)?;
                    evaluations += 1;
                    if value.is_finite() && value <= fx + params.c1 * alpha * slope {
                        return Ok(LineSearchOutcome {
                            alpha,
                            point,
                            value,
                            stalled: false,
                            evaluations,
                        });
                    }
                }
                // a trial landing on the origin is just a rejected step
                Err(Error::ZeroEntry { .. }) => {}
                Err(e) => return Err(e),
            }
            alpha *= params.shrink;
        }
    }
    Ok(LineSearchOutcome {
        alpha: 0.0,
        point: x.to_vec(),
        value: fx,
        stalled: true,
        evaluations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RcgParams {
    /// Stop once an accepted step is at most this long.
    pub alpha_th: f64,
    pub max_inner: usize,
    pub armijo: ArmijoParams,
}

impl Default for RcgParams {
    fn default() -> Self {
        RcgParams {
            alpha_th: 1e-6,
            max_inner: 500,
            armijo: ArmijoParams::default(),
        }
    }
}

/// A smooth real function on `C^n` with its real-coordinate gradient.
pub trait SmoothObjective {
    fn value(&mut self, x: &[Complex64]) -> Result<f64>;
    fn value_and_gradient(&mut self, x: &[Complex64]) -> Result<(f64, Vec<Complex64>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InnerIterate {
    pub q: usize,
    pub value: f64,
    pub step: f64,
    /// Norm of the Riemannian gradient at the point the step started from.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerStop {
    StepBelowThreshold,
    LineSearchStalled,
    ZeroGradient,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct RcgOutcome {
    pub x: Vec<Complex64>,
    pub value: f64,
    pub iterations: usize,
    pub stop: InnerStop,
}

/// Minimizes `obj` over the manifold starting at `x0`. `on_step` sees every
/// accepted iterate. Objective values are non-increasing.
pub fn rcg_minimize(
    manifold: &CircleManifold,
    obj: &mut impl SmoothObjective,
    x0: Vec<Complex64>,
    params: &RcgParams,
    mut on_step: impl FnMut(&InnerIterate, &[Complex64]),
) -> Result<RcgOutcome> {
    params.armijo.validate()?;
    manifold.check_point(&x0, 1e-9)?;
    let (mut fx, egrad) = obj.value_and_gradient(&x0)?;
    ensure_finite(fx, &egrad)?;
    let grad = manifold.project_tangent(&x0, &egrad);
    let mut state = RcgState {
        dir: grad.iter().map(|g| -g).collect(),
        grad,
        x: x0,
        step: 0.0,
        q: 0,
    };

    loop {
        let grad_norm = norm(&state.grad);
        if grad_norm == 0.0 {
            return Ok(finish(state, fx, InnerStop::ZeroGradient));
        }
        if state.q >= params.max_inner {
            return Ok(finish(state, fx, InnerStop::MaxIterations));
        }
        let slope = real_inner(&state.grad, &state.dir);
        let ls = armijo_search(
            manifold,
            &mut |x: &[Complex64]| obj.value(x),
            &state.x,
            fx,
            &state.dir,
            slope,
            &params.armijo,
        )?;
        if ls.stalled {
            return Ok(finish(state, fx, InnerStop::LineSearchStalled));
        }
        state.q += 1;
        state.step = ls.alpha;
        fx = ls.value;
        on_step(
            &InnerIterate {
                q: state.q,
                value: fx,
                step: ls.alpha,
                grad_norm,
            },
            &ls.point,
        );
        if ls.alpha <= params.alpha_th || state.q >= params.max_inner {
            let stop = if ls.alpha <= params.alpha_th {
                InnerStop::StepBelowThreshold
            } else {
                InnerStop::MaxIterations
            };
            state.x = ls.point;
            return Ok(finish(state, fx, stop));
        }
        let (f_new, egrad) = obj.value_and_gradient(&ls.point)?;
        ensure_finite(f_new, &egrad)?;
        fx = f_new;
        let grad_new = manifold.project_tangent(&ls.point, &egrad);
        let dir = pr_direction(manifold, &state, &ls.point, &grad_new);
        state.x = ls.point;
        state.grad = grad_new;
        state.dir = dir;
    }
}

fn finish(state: RcgState, value: f64, stop: InnerStop) -> RcgOutcome {
    RcgOutcome {
        x: state.x,
        value,
        iterations: state.q,
        stop,
    }
}

fn ensure_finite(value: f64, grad: &[Complex64]) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("objective value {value}")));
    }
    if let Some(i) = grad
        .iter()
        .position(|z| !(z.re.is_finite() && z.im.is_finite()))
    {
        return Err(Error::NonFinite(format!("gradient entry {i}")));
    }
    Ok(())
}
