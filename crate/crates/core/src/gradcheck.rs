//! Finite-difference verification of tape gradients.

use alloc::vec::Vec;

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;
use crate::Result;

/// Maximum relative error between the tape gradient of `f` at `x` and a
/// central difference with step `h`, over every coordinate of `x`.
///
/// The relative error of a coordinate is
/// `|analytic − numeric| / max(1e-8, |numeric|)`.
pub fn grad_check<'p, F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph<'p>, Var) -> Result<Var>,
{
    let all: Vec<usize> = (0..x.len()).collect();
    grad_check_at(f, x, h, &all)
}

/// Like [`grad_check`] but only probes the listed coordinates.
pub fn grad_check_at<'p, F>(f: F, x: &Tensor, h: f64, coords: &[usize]) -> Result<f64>
where
    F: Fn(&mut Graph<'p>, Var) -> Result<Var>,
{
    let analytic = analytic_grad(&f, x)?;
    check_against(&f, x, h, coords, &analytic)
}

/// Compares a caller-supplied gradient against central differences.
/// Exposed so a deliberately wrong gradient can be shown to be detected.
pub fn check_against<'p, F>(
    f: &F,
    x: &Tensor,
    h: f64,
    coords: &[usize],
    analytic: &[f64],
) -> Result<f64>
where
    F: Fn(&mut Graph<'p>, Var) -> Result<Var>,
{
    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for &i in coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = eval(f, &probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = eval(f, &probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Tape gradient of `f` at `x`.
pub fn analytic_grad<'p, F>(f: &F, x: &Tensor) -> Result<Vec<f64>>
where
    F: Fn(&mut Graph<'p>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.variable(x.clone());
    let loss = f(&mut g, xv)?;
    g.backward(loss)?;
    Ok(g.grad(xv)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| alloc::vec![0.0; x.len()]))
}

fn eval<'p, F>(f: &F, x: &Tensor) -> Result<f64>
where
    F: Fn(&mut Graph<'p>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.constant(x.clone());
    let out = f(&mut g, xv)?;
    Ok(g.scalar(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn linear_function_is_exact() {
        let x = Tensor::new(&[4], vec![0.3, -1.2, 2.0, 0.5]).unwrap();
        let err = grad_check(
            |g, x| {
                let y = g.mul_const(x, vec![1.0, 2.0, -3.0, 0.5])?;
                Ok(g.sum(y))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn sum_of_squares() {
        let x = Tensor::new(&[3], vec![1.0, -2.0, 0.7]).unwrap();
        let err = grad_check(
            |g, x| {
                let y = g.mul(x, x)?;
                Ok(g.sum(y))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let x = Tensor::new(&[3], vec![1.0, -2.0, 0.7]).unwrap();
        let f = |g: &mut Graph<'_>, x: Var| -> Result<Var> {
            let y = g.mul(x, x)?;
            Ok(g.sum(y))
        };
        let doubled: Vec<f64> = analytic_grad(&f, &x)
            .unwrap()
            .iter()
            .map(|v| 2.0 * v)
            .collect();
        let err = check_against(&f, &x, 1e-5, &[0, 1, 2], &doubled).unwrap();
        assert!((err - 1.0).abs() < 1e-6, "{err}");
    }
}
