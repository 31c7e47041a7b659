//! Dense linear algebra and differentiable primitives.
//!
//! Every primitive exists twice: as a plain function over slices/matrices,
//! and as a node type on the reverse-mode [`Tape`]. The tape nodes reuse the
//! plain forward kernels, so the two never disagree on values.

mod gradcheck;
mod matrix;
mod tape;

pub use gradcheck::{check_tape_function, grad_check, GradCheckOptions, GradCheckReport};
pub(crate) use matrix::dot;
pub use matrix::Matrix;
pub use tape::{Gradients, Tape, Var};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    a.matmul(b)
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    check_scores(v, "softmax")?;
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub fn log_softmax(v: &[f64]) -> Result<Vec<f64>> {
    check_scores(v, "log_softmax")?;
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    Ok(v.iter().map(|x| x - log_z).collect())
}

fn check_scores(v: &[f64], op: &str) -> Result<()> {
    if v.is_empty() {
        return Err(Error::Domain(format!("{op} of an empty vector")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("{op} input")));
    }
    Ok(())
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    /// Derivative expressed through the activation's own output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn elementwise(v: &[f64], f: Activation) -> Vec<f64> {
    v.iter().map(|x| f.apply(*x)).collect()
}

pub fn tanh(v: &[f64]) -> Vec<f64> {
    elementwise(v, Activation::Tanh)
}

pub fn sigmoid(v: &[f64]) -> Vec<f64> {
    elementwise(v, Activation::Sigmoid)
}

/// `-log softmax(logits)[target]`.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::Index {
            what: "vocabulary",
            index: target,
            len: logits.len(),
        });
    }
    Ok(-log_softmax(logits)?[target])
}

/// Gradient of [`cross_entropy`] with respect to the logits:
/// `softmax(logits) - one_hot(target)`.
pub fn cross_entropy_grad(logits: &[f64], target: usize) -> Result<Vec<f64>> {
    if target >= logits.len() {
        return Err(Error::Index {
            what: "vocabulary",
            index: target,
            len: logits.len(),
        });
    }
    let mut g = softmax(logits)?;
    g[target] -= 1.0;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_inputs_do_not_overflow() {
        assert_eq!(softmax(&[1000.0, 1000.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_analytic() {
        let p = softmax(&[0.0, 3f64.ln()]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn softmax_empty_is_domain_error() {
        assert!(matches!(softmax(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn activations_at_zero() {
        assert_eq!(tanh(&[0.0]), vec![0.0]);
        assert_eq!(sigmoid(&[0.0]), vec![0.5]);
        let s = sigmoid(&[-800.0, 800.0]);
        assert!(s[0] >= 0.0);
        assert!(s[1] <= 1.0);
    }

    #[test]
    fn cross_entropy_uniform_is_log_v() {
        let l = cross_entropy(&[0.3; 4], 2).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn cross_entropy_confident_is_near_zero() {
        let mut logits = vec![0.0; 5];
        logits[1] = 1e6;
        assert!(cross_entropy(&logits, 1).unwrap().abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_target_out_of_range() {
        assert!(matches!(
            cross_entropy(&[0.0, 1.0], 2),
            Err(Error::Index {
                index: 2,
                len: 2,
                ..
            })
        ));
    }

    #[test]
    fn cross_entropy_gradient_matches_differences() {
        let logits = [0.3, -1.2, 2.0, 0.7];
        let g = cross_entropy_grad(&logits, 2).unwrap();
        let eps = 1e-5;
        for i in 0..logits.len() {
            let mut up = logits;
            let mut dn = logits;
            up[i] += eps;
            dn[i] -= eps;
            let num =
                (cross_entropy(&up, 2).unwrap() - cross_entropy(&dn, 2).unwrap()) / (2.0 * eps);
            let rel = (num - g[i]).abs() / num.abs().max(g[i].abs()).max(1e-8);
            assert!(rel < 1e-5, "coord {i}: {num} vs {}", g[i]);
        }
    }
}
