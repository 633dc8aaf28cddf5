//! Forward- and reverse-mode automatic differentiation.
//!
//! Pixel losses use the reverse-mode [`Tape`] (many inputs, one output);
//! Levenberg-Marquardt Jacobians use batched forward-mode [`Dual`]s (few
//! inputs, one residual per pixel). Both implement [`Scalar`], so the
//! rendering stages are written once and evaluated with either.

mod dual;
mod scalar;
mod tape;

pub use dual::Dual;
pub use scalar::Scalar;
pub use tape::{Gradient, Tape, Var};

use nalgebra::DMatrix;

use crate::{Error, Result};

/// A scalar function that can be evaluated over any [`Scalar`].
///
/// Needed wherever the same function is evaluated along two routes, e.g.
/// autodiff against finite differences in [`check_gradient`].
pub trait Objective {
    fn eval<S: Scalar>(&self, x: &[S]) -> S;
}

/// Gradient of a scalar function via one reverse sweep.
pub fn grad<F>(f: F, x: &[f64]) -> Result<Vec<f64>>
where
    F: for<'t> FnOnce(&[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let inputs = tape.vars(x);
    let out = f(&inputs);
    if let Some(node) = tape.first_non_finite() {
        return Err(Error::NonFinite { node });
    }
    Ok(tape.gradient(out).wrt_all(&inputs))
}

/// Full `m × n` Jacobian, seeding `N` input directions per evaluation of `f`.
pub fn jacobian_forward<const N: usize, F>(f: F, x: &[f64]) -> Result<DMatrix<f64>>
where
    F: Fn(&[Dual<N>]) -> Vec<Dual<N>>,
{
    assert!(N > 0, "at least one seed direction per pass");
    let n = x.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut m = None;
    for start in (0..n.max(1)).step_by(N) {
        let inputs: Vec<Dual<N>> = x
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                if j >= start && j < start + N {
                    Dual::seed(v, j - start)
                } else {
                    Dual::constant(v)
                }
            })
            .collect();
        let outputs = f(&inputs);
        if let Some(bad) = outputs.iter().position(|o| !o.v.is_finite()) {
            return Err(Error::NonFinite { node: bad });
        }
        m = Some(outputs.len());
        for (k, col) in columns.iter_mut().enumerate().skip(start).take(N) {
            *col = outputs.iter().map(|o| o.d[k - start]).collect();
        }
    }
    let m = m.unwrap_or(0);
    Ok(DMatrix::from_fn(m, n, |i, j| columns[j][i]))
}

/// Denominator floor for the relative error reported by [`check_gradient`].
///
/// Central differences with `h ≈ 1e-5` carry roundoff of order `ε·|f|/h`,
/// so derivatives much smaller than this are not resolvable anyway.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-4;

/// Worst componentwise relative error between the reverse-mode gradient and
/// central differences with step `h`.
///
/// Each component's error is `|g - fd| / max(|g|, |fd|, GRADIENT_CHECK_FLOOR)`.
/// A non-finite gradient yields `f64::INFINITY`.
pub fn check_gradient<O: Objective>(f: &O, x: &[f64], h: f64) -> f64 {
    assert!(h > 0.0, "finite-difference step must be positive");
    let analytic = match grad(|v| f.eval(v), x) {
        Ok(g) => g,
        Err(_) => return f64::INFINITY,
    };
    let mut worst: f64 = 0.0;
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f.eval(&probe);
        probe[i] = x[i] - h;
        let fm = f.eval(&probe);
        probe[i] = x[i];
        let fd = (fp - fm) / (2.0 * h);
        let g = analytic[i];
        let denom = g.abs().max(fd.abs()).max(GRADIENT_CHECK_FLOOR);
        let err = (g - fd).abs() / denom;
        if !err.is_finite() {
            return f64::INFINITY;
        }
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_of_square() {
        assert_eq!(grad(|x| x[0] * x[0], &[3.0]).unwrap(), vec![6.0]);
    }

    #[test]
    fn grad_of_product() {
        assert_eq!(grad(|x| x[0] * x[1], &[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn grad_of_even_gaussian_at_zero() {
        let g = grad(|x| (-(x[0] * x[0]) / 0.5).exp(), &[0.0]).unwrap();
        assert_eq!(g[0].abs(), 0.0);
    }

    #[test]
    fn grad_reports_non_finite_node() {
        let err = grad(|x| (x[0] - 1.0).ln() * x[0], &[1.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { node: 2 }), "{err:?}");
    }

    #[test]
    fn jacobian_of_identity() {
        let j = jacobian_forward::<2, _>(|x| x.to_vec(), &[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(j, DMatrix::identity(3, 3));
    }

    #[test]
    fn jacobian_of_polynomial_pair() {
        let j = jacobian_forward::<1, _>(|x| vec![x[0] * x[0], x[0] * 2.0], &[1.0]).unwrap();
        assert_eq!(j.shape(), (2, 1));
        assert_eq!(j[(0, 0)], 2.0);
        assert_eq!(j[(1, 0)], 2.0);
    }

    #[test]
    fn jacobian_of_linear_map() {
        let j = jacobian_forward::<4, _>(|x| vec![x[0] + x[1], x[0] - x[1]], &[5.0, -7.0]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]));
    }

    struct Cube;
    impl Objective for Cube {
        fn eval<S: Scalar>(&self, x: &[S]) -> S {
            x[0] * x[0] * x[0]
        }
    }

    struct Linear;
    impl Objective for Linear {
        fn eval<S: Scalar>(&self, x: &[S]) -> S {
            x[0] * 3.0 - x[1] * 0.5 + 2.0
        }
    }

    struct Exp;
    impl Objective for Exp {
        fn eval<S: Scalar>(&self, x: &[S]) -> S {
            x[0].exp()
        }
    }

    #[test]
    fn check_gradient_examples() {
        // 12 vs (8.00120001 - 7.99880001) / 2e-4, truncation error h^2 = 1e-8.
        assert!(check_gradient(&Cube, &[2.0], 1e-4) < 1e-6);
        for h in [1e-3, 0.5, 4.0] {
            assert!(check_gradient(&Linear, &[0.25, -3.0], h) < 1e-12);
        }
        assert!(check_gradient(&Exp, &[0.0], 1e-5) < 1e-8);
    }

    #[test]
    fn max_tie_follows_first_argument() {
        let g = grad(|x| x[0].max(x[1]), &[1.0, 1.0]).unwrap();
        assert_eq!(g, vec![1.0, 0.0]);
        let g = grad(|x| x[1].max(x[0]), &[1.0, 1.0]).unwrap();
        assert_eq!(g, vec![0.0, 1.0]);
        let g = grad(|x| x[0].max(x[1]), &[0.0, 1.0]).unwrap();
        assert_eq!(g, vec![0.0, 1.0]);
    }

    #[test]
    fn floor_is_locally_constant() {
        let g = grad(|x| x[0] * x[0].floor_const(), &[2.7]).unwrap();
        assert_eq!(g, vec![2.0]);
    }

    #[test]
    fn abs_subgradient_at_zero_is_zero() {
        assert_eq!(grad(|x| x[0].abs(), &[0.0]).unwrap(), vec![0.0]);
        assert_eq!(grad(|x| x[0].abs(), &[-2.0]).unwrap(), vec![-1.0]);
    }
}
