//! Image losses, a mesh smoothness regularizer and first/second-order
//! optimizers.

use nalgebra::{DMatrix, DVector};

use crate::autodiff::{Dual, Scalar};
use crate::imagebuf::Image;
use crate::math::Vec3;
use crate::scene::TriangleMesh;
use crate::{Error, Result};

/// Mean squared difference over pixels and RGBA channels.
pub fn loss_l2<S: Scalar>(rendered: &Image<S>, target: &Image<f64>) -> Result<S> {
    rendered.same_shape(target)?;
    let mut acc = S::zero();
    for (r, t) in rendered.pixels.iter().zip(&target.pixels) {
        for k in 0..4 {
            acc += (r[k] - t[k]).square();
        }
    }
    Ok(acc * (1.0 / (4 * rendered.pixels.len()).max(1) as f64))
}

/// Mean absolute difference; the subgradient at zero is zero.
pub fn loss_l1<S: Scalar>(rendered: &Image<S>, target: &Image<f64>) -> Result<S> {
    rendered.same_shape(target)?;
    let mut acc = S::zero();
    for (r, t) in rendered.pixels.iter().zip(&target.pixels) {
        for k in 0..4 {
            acc += (r[k] - t[k]).abs();
        }
    }
    Ok(acc * (1.0 / (4 * rendered.pixels.len()).max(1) as f64))
}

/// Per-pixel residuals `rendered - target`, four per pixel.
pub fn residuals<S: Scalar>(rendered: &Image<S>, target: &Image<f64>) -> Result<Vec<S>> {
    rendered.same_shape(target)?;
    Ok(rendered
        .pixels
        .iter()
        .zip(&target.pixels)
        .flat_map(|(r, t)| [0, 1, 2, 3].map(|k| r[k] - t[k]))
        .collect())
}

/// Mean over vertices of `|v - mean(1-ring)|²`; isolated vertices add zero.
pub fn laplacian_energy<S: Scalar>(positions: &[Vec3<S>], neighbors: &[Vec<u32>]) -> S {
    let mut acc = S::zero();
    for (p, ring) in positions.iter().zip(neighbors) {
        if ring.is_empty() {
            continue;
        }
        let mut mean = Vec3::zero();
        for &j in ring {
            mean = mean + positions[j as usize];
        }
        acc += (*p - mean.scale_f(1.0 / ring.len() as f64)).norm_squared();
    }
    acc * (1.0 / positions.len().max(1) as f64)
}

pub fn regularize_laplacian<S: Scalar>(mesh: &TriangleMesh<S>) -> S {
    laplacian_energy(&mesh.positions, &mesh.value().vertex_neighbors())
}

pub fn step_gd(params: &mut [f64], grad: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
}

/// Bias-corrected Adam.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Vector-valued function of the parameters, evaluated in any scalar type.
pub trait Residual {
    fn residuals<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>>;
}

/// Levenberg-Marquardt damping state.
#[derive(Clone, Debug)]
pub struct LevenbergMarquardt {
    pub lambda: f64,
    /// Damping beyond which a still-rejected step is reported as singular.
    pub lambda_max: f64,
    /// Rejected trial steps allowed per call to [`Self::step`].
    pub max_retries: usize,
    pub last_loss: Option<f64>,
    pub jacobian: DMatrix<f64>,
    pub residual: DVector<f64>,
}

/// Outcome of one LM iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmStep {
    pub accepted: bool,
    /// Sum of squared residuals after the iteration.
    pub loss: f64,
}

impl Default for LevenbergMarquardt {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            lambda_max: 1e12,
            max_retries: 12,
            last_loss: None,
            jacobian: DMatrix::zeros(0, 0),
            residual: DVector::zeros(0),
        }
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

impl LevenbergMarquardt {
    /// Residuals and forward-mode Jacobian at `x`, seeding `N` directions per pass.
    fn linearize<const N: usize, R: Residual>(f: &R, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let n = x.len();
        let mut jac: Option<DMatrix<f64>> = None;
        let mut res = None;
        for start in (0..n.max(1)).step_by(N) {
            let xs: Vec<Dual<N>> = x
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    if i >= start && i < start + N {
                        Dual::seed(v, i - start)
                    } else {
                        Dual::new(v, [0.0; N])
                    }
                })
                .collect();
            let r = f.residuals(&xs)?;
            if let Some(bad) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid("residual", format!("non-finite residual {bad}")));
            }
            let j = jac.get_or_insert_with(|| DMatrix::zeros(r.len(), n));
            for (row, v) in r.iter().enumerate() {
                for k in 0..N.min(n.saturating_sub(start)) {
                    j[(row, start + k)] = v.d[k];
                }
            }
            res.get_or_insert_with(|| DVector::from_iterator(r.len(), r.iter().map(|v| v.v)));
        }
        Ok((res.unwrap_or_else(|| DVector::zeros(0)), jac.unwrap_or_else(|| DMatrix::zeros(0, n))))
    }

    /// One damped Gauss-Newton iteration on `x`.
    ///
    /// Solves `(JᵀJ + λ·diag(JᵀJ)) δ = -Jᵀr`. Accepted steps halve λ; each
    /// rejection multiplies it by four and retries. When no step is accepted
    /// `x` is left unchanged.
    pub fn step<const N: usize, R: Residual>(&mut self, f: &R, x: &mut [f64]) -> Result<LmStep> {
        let (r, j) = Self::linearize::<N, R>(f, x)?;
        let loss = r.norm_squared();
        self.last_loss = Some(loss);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        self.jacobian = j;
        self.residual = r;
        if g.iter().all(|&v| v == 0.0) {
            return Ok(LmStep {
                accepted: true,
                loss,
            });
        }
        for _ in 0..=self.max_retries {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += self.lambda * jtj[(i, i)];
            }
            let delta = match a.clone().cholesky() {
                Some(c) => Some(c.solve(&(-&g))),
                None => a.lu().solve(&(-&g)),
            };
            if let Some(delta) = delta.filter(|d| d.iter().all(|v| v.is_finite())) {
                let trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, b)| a + b).collect();
                let trial_loss = f.residuals(&trial).map(|r| sum_sq(&r));
                if let Ok(tl) = trial_loss {
                    if tl < loss {
                        x.copy_from_slice(&trial);
                        self.lambda = (self.lambda * 0.5).max(1e-12);
                        self.last_loss = Some(tl);
                        return Ok(LmStep {
                            accepted: true,
                            loss: tl,
                        });
                    }
                }
            }
            self.lambda *= 4.0;
            if self.lambda > self.lambda_max {
                return Err(Error::Singular { lambda: self.lambda });
            }
        }
        Ok(LmStep {
            accepted: false,
            loss,
        })
    }
}

/// One row of a loss curve.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub loss: f64,
    /// Hex digest of the parameter vector's little-endian bytes.
    pub param_hash: String,
    pub wall_seconds: f64,
}
