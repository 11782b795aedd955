//! Multivariate normal approximation of a posterior and conditional
//! sampling of nuisance coordinates given target values.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Split of coordinates into targets `Θ` and nuisances `Φ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSelection {
    pub theta: Vec<usize>,
    pub phi: Vec<usize>,
}

impl TargetSelection {
    /// Targets `theta`; every other coordinate in `0..dim` is a nuisance.
    pub fn new(theta: Vec<usize>, dim: usize) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::invalid("target selection needs at least one coordinate"));
        }
        let mut seen = vec![false; dim];
        for &t in &theta {
            if t >= dim || seen[t] {
                return Err(Error::invalid(format!("invalid or repeated target coordinate {t}")));
            }
            seen[t] = true;
        }
        let phi = (0..dim).filter(|&i| !seen[i]).collect();
        Ok(Self { theta, phi })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MvnApproximation {
    pub mean_theta: DVector<f64>,
    pub mean_phi: DVector<f64>,
    pub cov_theta: DMatrix<f64>,
    pub cov_phi: DMatrix<f64>,
    /// `Σ_ΦΘ`, rows indexed by `Φ`.
    pub cov_phi_theta: DMatrix<f64>,
    pub num_draws: usize,
    /// All sample covariances are zero.
    pub degenerate: bool,
}

/// Sample mean and unbiased covariance of the draws, partitioned by
/// `selection`. Coordinates refer to positions within each draw.
pub fn fit_mvn<'a, I>(draws: I, selection: &TargetSelection) -> Result<MvnApproximation>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let order: Vec<usize> = selection.theta.iter().chain(&selection.phi).copied().collect();
    let k = order.len();
    let mut rows: Vec<f64> = Vec::new();
    let mut l = 0usize;
    for d in draws {
        if let Some(&bad) = order.iter().find(|&&i| i >= d.len()) {
            return Err(Error::invalid(format!("coordinate {bad} outside draw of length {}", d.len())));
        }
        rows.extend(order.iter().map(|&i| d[i]));
        l += 1;
    }
    if l < 2 {
        return Err(Error::invalid("MVN fit needs at least two draws"));
    }
    if l < 10 * k {
        return Err(Error::invalid(format!(
            "MVN fit over {k} coordinates needs at least {} draws, got {l}",
            10 * k
        )));
    }
    let x = DMatrix::from_row_slice(l, k, &rows);
    let mean = x.row_mean().transpose();
    let mut centred = x;
    for mut row in centred.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centred.transpose() * &centred / (l as f64 - 1.0);
    let t = selection.theta.len();
    let p = selection.phi.len();
    let degenerate = cov.iter().all(|v| *v == 0.0);
    Ok(MvnApproximation {
        mean_theta: mean.rows(0, t).into_owned(),
        mean_phi: mean.rows(t, p).into_owned(),
        cov_theta: cov.view((0, 0), (t, t)).into_owned(),
        cov_phi: cov.view((t, t), (p, p)).into_owned(),
        cov_phi_theta: cov.view((t, 0), (p, t)).into_owned(),
        num_draws: l,
        degenerate,
    })
}

/// Symmetric square root factor `F` with `F Fᵀ = S`, clipping tiny negative
/// eigenvalues. Fails when `S` is clearly indefinite.
pub(crate) fn psd_factor(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = s.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let sym = (s + s.transpose()) * 0.5;
    if let Some(c) = sym.clone().cholesky() {
        return Ok(c.unpack());
    }
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().any(|&v| v < -1e-8 * scale) {
        return Err(Error::Numerical("conditional covariance is not positive semidefinite".into()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * d)
}

/// `p(Φ | Θ)` for the approximation: mean `μ_Φ + A (θ - μ_Θ)` and covariance
/// `Σ_Φ - A Σ_ΦΘᵀ` with `A = Σ_ΦΘ Σ_Θ⁻¹`.
#[derive(Debug, Clone)]
pub struct ConditionalMvn {
    pub mean_theta: DVector<f64>,
    pub mean_phi: DVector<f64>,
    pub gain: DMatrix<f64>,
    pub cov: DMatrix<f64>,
    pub factor: DMatrix<f64>,
}

impl ConditionalMvn {
    pub fn new(mvn: &MvnApproximation) -> Result<Self> {
        let t = mvn.cov_theta.nrows();
        let trace = mvn.cov_theta.trace();
        let ridge = 1e-9 * if trace > 0.0 { trace / t as f64 } else { 1.0 };
        let reg = &mvn.cov_theta + DMatrix::identity(t, t) * ridge;
        let chol = reg
            .cholesky()
            .ok_or_else(|| Error::Numerical("target covariance is singular after regularisation".into()))?;
        // A = Σ_ΦΘ Σ_Θ⁻¹, i.e. Aᵀ = Σ_Θ⁻¹ Σ_ΦΘᵀ
        let gain = chol.solve(&mvn.cov_phi_theta.transpose()).transpose();
        let cov = &mvn.cov_phi - &gain * mvn.cov_phi_theta.transpose();
        let factor = psd_factor(&cov)?;
        Ok(Self {
            mean_theta: mvn.mean_theta.clone(),
            mean_phi: mvn.mean_phi.clone(),
            gain,
            cov,
            factor,
        })
    }

    pub fn mean_given(&self, theta: &[f64]) -> DVector<f64> {
        let dt = DVector::from_column_slice(theta) - &self.mean_theta;
        &self.mean_phi + &self.gain * dt
    }

    pub fn sample<R: Rng>(&self, theta: &[f64], rng: &mut R) -> Vec<f64> {
        let mean = self.mean_given(theta);
        let z = DVector::from_iterator(self.factor.ncols(), (0..self.factor.ncols()).map(|_| rng.sample(StandardNormal)));
        (mean + &self.factor * z).as_slice().to_vec()
    }
}

/// `count` draws of `Φ | Θ = theta`, reproducible from `seed`.
pub fn conditional_nuisance_sample(mvn: &MvnApproximation, theta: &[f64], count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if theta.len() != mvn.mean_theta.len() {
        return Err(Error::invalid("theta has the wrong dimension"));
    }
    let cond = ConditionalMvn::new(mvn)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| cond.sample(theta, &mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mvn_2d() -> MvnApproximation {
        MvnApproximation {
            mean_theta: DVector::from_vec(vec![0.0]),
            mean_phi: DVector::from_vec(vec![0.0]),
            cov_theta: DMatrix::from_element(1, 1, 1.0),
            cov_phi: DMatrix::from_element(1, 1, 1.0),
            cov_phi_theta: DMatrix::from_element(1, 1, 0.5),
            num_draws: 0,
            degenerate: false,
        }
    }

    #[test]
    fn schur_complement_in_two_dimensions() {
        let c = ConditionalMvn::new(&mvn_2d()).unwrap();
        assert_abs_diff_eq!(c.mean_given(&[1.0])[0], 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(c.cov[(0, 0)], 0.75, epsilon = 1e-8);
    }

    #[test]
    fn independence_gives_the_marginal() {
        let mut m = mvn_2d();
        m.cov_phi_theta[(0, 0)] = 0.0;
        m.mean_phi[0] = 3.0;
        let c = ConditionalMvn::new(&m).unwrap();
        assert_eq!(c.mean_given(&[7.0])[0], 3.0);
        assert_eq!(c.cov[(0, 0)], 1.0);
    }

    #[test]
    fn identical_draws_are_degenerate() {
        let draws = vec![vec![1.0, 2.0, 3.0]; 50];
        let sel = TargetSelection::new(vec![0], 3).unwrap();
        let m = fit_mvn(draws.iter().map(Vec::as_slice), &sel).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.cov_phi.iter().copied().fold(0.0, f64::max), 0.0);
    }

    #[test]
    fn selection_must_be_valid() {
        assert!(TargetSelection::new(vec![], 3).is_err());
        assert!(TargetSelection::new(vec![3], 3).is_err());
        assert!(TargetSelection::new(vec![1, 1], 3).is_err());
        assert_eq!(TargetSelection::new(vec![1], 3).unwrap().phi, vec![0, 2]);
    }
}
