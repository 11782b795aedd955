//! Affine reparameterisation `x = L u` used by both samplers.
//!
//! `L` is either diagonal (per-coordinate scales) or the Cholesky factor of
//! an estimated posterior covariance. Sampling in `u` with an identity
//! metric is equivalent to sampling in `x` with inverse metric `L Lᵀ`.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub enum Metric {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl Metric {
    pub fn identity(dim: usize) -> Self {
        Metric::Diagonal(vec![1.0; dim])
    }

    pub fn to_x(&self, u: &[f64], x: &mut [f64]) {
        match self {
            Metric::Diagonal(s) => {
                for i in 0..u.len() {
                    x[i] = s[i] * u[i];
                }
            }
            Metric::Dense(l) => {
                let n = u.len();
                for i in 0..n {
                    let mut acc = 0.0;
                    for j in 0..=i {
                        acc += l[(i, j)] * u[j];
                    }
                    x[i] = acc;
                }
            }
        }
    }

    pub fn to_u(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Metric::Diagonal(s) => x.iter().zip(s).map(|(a, b)| a / b).collect(),
            Metric::Dense(l) => {
                let v = DVector::from_column_slice(x);
                l.solve_lower_triangular(&v)
                    .expect("metric factor is non-singular")
                    .as_slice()
                    .to_vec()
            }
        }
    }

    /// `∂/∂u = Lᵀ ∂/∂x`.
    pub fn grad_to_u(&self, gx: &[f64], gu: &mut [f64]) {
        match self {
            Metric::Diagonal(s) => {
                for i in 0..gx.len() {
                    gu[i] = s[i] * gx[i];
                }
            }
            Metric::Dense(l) => {
                let n = gx.len();
                for j in 0..n {
                    let mut acc = 0.0;
                    for i in j..n {
                        acc += l[(i, j)] * gx[i];
                    }
                    gu[j] = acc;
                }
            }
        }
    }

    /// Regularised estimate from warmup draws (rows of `xs`).
    pub fn estimate(xs: &[Vec<f64>], dense: bool) -> Option<Metric> {
        let n = xs.len();
        if n < 3 {
            return None;
        }
        let dim = xs[0].len();
        let nf = n as f64;
        let mut mean = vec![0.0; dim];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / nf;
            }
        }
        // shrink towards a small multiple of the identity
        let w = nf / (nf + 5.0);
        let ridge = 1e-3 * 5.0 / (nf + 5.0);
        if dense {
            let mut cov = DMatrix::<f64>::zeros(dim, dim);
            for x in xs {
                let d = DVector::from_iterator(dim, x.iter().zip(&mean).map(|(a, b)| a - b));
                cov.ger(1.0 / (nf - 1.0), &d, &d, 1.0);
            }
            cov *= w;
            for i in 0..dim {
                cov[(i, i)] += ridge;
            }
            cov.cholesky().map(|c| Metric::Dense(c.unpack()))
        } else {
            let sd = (0..dim)
                .map(|i| {
                    let v = xs.iter().map(|x| (x[i] - mean[i]).powi(2)).sum::<f64>() / (nf - 1.0);
                    (w * v + ridge).sqrt()
                })
                .collect();
            Some(Metric::Diagonal(sd))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn dense_round_trip_and_gradient_transform() {
        let l = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.5, 1.0, 0.0, -0.3, 0.2, 0.7]);
        let m = Metric::Dense(l.clone());
        let u = [0.3, -1.2, 2.0];
        let mut x = [0.0; 3];
        m.to_x(&u, &mut x);
        let expect = &l * DVector::from_column_slice(&u);
        for i in 0..3 {
            assert_abs_diff_eq!(x[i], expect[i], epsilon = 1e-14);
        }
        let back = m.to_u(&x);
        for i in 0..3 {
            assert_abs_diff_eq!(back[i], u[i], epsilon = 1e-12);
        }
        let gx = [1.0, 2.0, 3.0];
        let mut gu = [0.0; 3];
        m.grad_to_u(&gx, &mut gu);
        let expect = l.transpose() * DVector::from_column_slice(&gx);
        for i in 0..3 {
            assert_abs_diff_eq!(gu[i], expect[i], epsilon = 1e-14);
        }
    }
}
