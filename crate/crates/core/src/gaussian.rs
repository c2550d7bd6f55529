//! Gaussian moment algebra for the linear-Gaussian model.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{domain, numerical, Result};
use crate::multitarget::{GaussianDensity, MotionModel};

/// Eigenvalues down to `-PSD_REPAIR_TOL * max(1, trace)` are clamped to zero.
pub const PSD_REPAIR_TOL: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Conditional density of the state at `k` given the state at `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardConditional {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl BackwardConditional {
    pub fn into_density(self) -> GaussianDensity {
        GaussianDensity::from_parts(self.mean, self.cov)
    }
}

fn check_dims(g: &GaussianDensity, model: &MotionModel) -> Result<()> {
    if g.dim() != model.state_dim() {
        return Err(domain(format!(
            "density has dimension {} but the model has {}",
            g.dim(),
            model.state_dim()
        )));
    }
    Ok(())
}

fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| numerical(format!("{what} is not positive definite")))
}

/// Returns `(F m, F P F^T + Q)`.
pub fn predict_moments(g: &GaussianDensity, model: &MotionModel) -> Result<GaussianDensity> {
    check_dims(g, model)?;
    let f = &model.transition;
    let mean = f * &g.mean;
    let mut cov = f * &g.cov * f.transpose() + &model.process_noise;
    symmetrize(&mut cov);
    Ok(GaussianDensity::from_parts(mean, cov))
}

/// Log of `N(x; mean, cov)`.
pub fn logpdf(mean: &DVector<f64>, cov: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    if x.len() != mean.len() {
        return Err(domain("point and density differ in dimension"));
    }
    let chol = cholesky(cov, "covariance")?;
    let diff = x - mean;
    let y = chol.l_dirty().solve_lower_triangular(&diff).expect("triangular factor is nonsingular");
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * (mean.len() as f64 * LN_2PI + log_det + y.norm_squared()))
}

pub fn gaussian_logpdf(g: &GaussianDensity, x: &DVector<f64>) -> Result<f64> {
    logpdf(&g.mean, &g.cov, x)
}

/// Conditions the prior at `k` on the successor state `x_next` at `k + 1`.
pub fn backward_condition(
    prior: &GaussianDensity,
    model: &MotionModel,
    x_next: &DVector<f64>,
) -> Result<BackwardConditional> {
    check_dims(prior, model)?;
    if x_next.len() != prior.dim() {
        return Err(domain("successor state has the wrong dimension"));
    }
    let f = &model.transition;
    let fp = f * &prior.cov;
    let predicted_cov = &fp * f.transpose() + &model.process_noise;
    let chol = cholesky(&predicted_cov, "predicted covariance")?;
    // S^-1 F P, so the gain P F^T S^-1 is its transpose.
    let gain_t = chol.solve(&fp);
    let innovation = x_next - f * &prior.mean;
    let mean = &prior.mean + gain_t.transpose() * innovation;
    let cov = repair_psd(&prior.cov - fp.transpose() * gain_t)?;
    Ok(BackwardConditional { mean, cov })
}

/// `(x_next - F m)^T (F P F^T + Q)^-1 (x_next - F m)`.
pub fn mahalanobis_sq(prior: &GaussianDensity, model: &MotionModel, x_next: &DVector<f64>) -> Result<f64> {
    check_dims(prior, model)?;
    let f = &model.transition;
    let s = f * &prior.cov * f.transpose() + &model.process_noise;
    innovation_distance_sq(&(x_next - f * &prior.mean), &s)
}

/// Squared-distance threshold enclosing `probability` of a `dim`-variate
/// Gaussian. A probability of one disables gating.
pub fn gate_threshold(probability: f64, dim: usize) -> Result<f64> {
    if !(probability > 0.0 && probability <= 1.0) || dim == 0 {
        return Err(domain(format!("invalid gate probability {probability} for dimension {dim}")));
    }
    if probability == 1.0 {
        return Ok(f64::INFINITY);
    }
    let chi2 = ChiSquared::new(dim as f64).map_err(|e| domain(e.to_string()))?;
    Ok(chi2.inverse_cdf(probability))
}

/// `d^T S^-1 d` via a Cholesky solve.
pub fn innovation_distance_sq(d: &DVector<f64>, s: &DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(s, "innovation covariance")?;
    let y = chol.l_dirty().solve_lower_triangular(d).expect("triangular factor is nonsingular");
    Ok(y.norm_squared())
}

/// Symmetrizes in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Symmetrizes and clamps slightly negative eigenvalues to zero.
pub fn repair_psd(mut m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    symmetrize(&mut m);
    if m.nrows() == 0 || Cholesky::new(m.clone()).is_some() {
        return Ok(m);
    }
    let tol = PSD_REPAIR_TOL * m.trace().abs().max(1.0);
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return Ok(m);
    }
    let min = eig.eigenvalues.min();
    if min < -tol {
        return Err(numerical(format!("covariance eigenvalue {min:e} below repair tolerance")));
    }
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// A matrix `A` with `A A^T = cov`; falls back to an eigen square root for PSD input.
pub fn sqrt_factor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = Cholesky::new(cov.clone()) {
        return chol.unpack();
    }
    let eig = cov.clone().symmetric_eigen();
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root)
}

/// Draws one sample from `N(mean, cov)`.
pub fn sample<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let n = mean.len();
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    if cov.iter().all(|v| *v == 0.0) {
        return mean.clone();
    }
    mean + sqrt_factor(cov) * z
}

/// Moment-matches a weighted Gaussian mixture into one Gaussian.
pub fn moment_match(weights: &[f64], densities: &[GaussianDensity]) -> Option<GaussianDensity> {
    let total: f64 = weights.iter().sum();
    if densities.is_empty() || !(total > 0.0) {
        return None;
    }
    let n = densities[0].dim();
    let mut mean = DVector::zeros(n);
    for (w, d) in weights.iter().zip(densities) {
        mean += &d.mean * (*w / total);
    }
    let mut cov = DMatrix::zeros(n, n);
    for (w, d) in weights.iter().zip(densities) {
        let diff = &d.mean - &mean;
        cov += (&d.cov + &diff * diff.transpose()) * (*w / total);
    }
    symmetrize(&mut cov);
    Some(GaussianDensity::from_parts(mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multitarget::GaussianMixture;
    use nalgebra::dvector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(f: DMatrix<f64>, q: DMatrix<f64>) -> MotionModel {
        MotionModel::new(f, q, 1.0, GaussianMixture::empty()).unwrap()
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng, scale: f64) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() * scale + DMatrix::identity(n, n) * 0.05
    }

    #[test]
    fn gate_threshold_quantiles() {
        assert!((gate_threshold(0.999, 4).unwrap() - 18.4668).abs() < 1e-3);
        assert!((gate_threshold(0.999, 2).unwrap() - 13.8155).abs() < 1e-3);
        assert_eq!(gate_threshold(1.0, 2).unwrap(), f64::INFINITY);
        assert!(gate_threshold(0.0, 2).is_err());
    }

    #[test]
    fn identity_dynamics_preserve_density() {
        let g = GaussianDensity::new(dvector![1.0, 2.0], DMatrix::identity(2, 2) * 3.0).unwrap();
        let m = model(DMatrix::identity(2, 2), DMatrix::zeros(2, 2));
        assert_eq!(predict_moments(&g, &m).unwrap(), g);
    }

    #[test]
    fn example1_prediction() {
        let g = GaussianDensity::point_mass(dvector![2.0, -1.0]);
        let m = model(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]), DMatrix::identity(2, 2));
        let p = predict_moments(&g, &m).unwrap();
        assert_eq!(p.mean, dvector![1.0, -1.0]);
        assert_eq!(p.cov, DMatrix::identity(2, 2));
    }

    #[test]
    fn random_prediction_matches_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let q = random_spd(4, &mut rng, 0.3);
        let p = random_spd(4, &mut rng, 1.0);
        let mean = DVector::from_fn(4, |_, _| rng.random_range(-3.0..3.0));
        let g = GaussianDensity::new(mean.clone(), p.clone()).unwrap();
        let out = predict_moments(&g, &model(f.clone(), q.clone())).unwrap();
        // Element-wise triple loop as the independent route.
        for i in 0..4 {
            let mi: f64 = (0..4).map(|j| f[(i, j)] * mean[j]).sum();
            assert!((out.mean[i] - mi).abs() < 1e-12);
            for j in 0..4 {
                let mut c = q[(i, j)];
                for a in 0..4 {
                    for b in 0..4 {
                        c += f[(i, a)] * p[(a, b)] * f[(j, b)];
                    }
                }
                assert!((out.cov[(i, j)] - c).abs() < 1e-12);
            }
        }
        assert!(out.cov.clone().symmetric_eigenvalues().min() >= -1e-12 * out.cov.trace());
    }

    #[test]
    fn logpdf_cases() {
        let v = logpdf(&dvector![0.0], &DMatrix::identity(1, 1), &dvector![0.0]).unwrap();
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        let v = logpdf(&dvector![1.0, -1.0], &DMatrix::identity(2, 2), &dvector![1.0, 0.0]).unwrap();
        assert!((v - (-(2.0 * std::f64::consts::PI).ln() - 0.5)).abs() < 1e-14);
        assert!(matches!(
            logpdf(&dvector![0.0], &DMatrix::zeros(1, 1), &dvector![0.0]),
            Err(crate::Error::Numerical(_))
        ));
    }

    #[test]
    fn logpdf_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let s = random_spd(3, &mut rng, 1.0);
            let m = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let x = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let inv = s.clone().try_inverse().unwrap();
            let d = &x - &m;
            let quad = (d.transpose() * inv * &d)[(0, 0)];
            let want = -0.5 * (3.0 * (2.0 * std::f64::consts::PI).ln() + s.determinant().ln() + quad);
            assert!((logpdf(&m, &s, &x).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn backward_condition_degenerate_prior() {
        let g = GaussianDensity::point_mass(dvector![2.0, -1.0]);
        let m = model(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]), DMatrix::identity(2, 2));
        let bc = backward_condition(&g, &m, &dvector![1.0, 0.0]).unwrap();
        assert_eq!(bc.mean, dvector![2.0, -1.0]);
        assert!(bc.cov.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn backward_condition_scalar_gain() {
        let g = GaussianDensity::new(dvector![0.0], DMatrix::identity(1, 1)).unwrap();
        let m = model(DMatrix::identity(1, 1), DMatrix::identity(1, 1));
        let bc = backward_condition(&g, &m, &dvector![2.0]).unwrap();
        assert!((bc.mean[0] - 1.0).abs() < 1e-15);
        assert!((bc.cov[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn singular_predicted_covariance_is_error() {
        let g = GaussianDensity::point_mass(dvector![0.0]);
        let m = model(DMatrix::identity(1, 1), DMatrix::zeros(1, 1));
        assert!(matches!(backward_condition(&g, &m, &dvector![1.0]), Err(crate::Error::Numerical(_))));
        assert!(mahalanobis_sq(&g, &m, &dvector![1.0]).is_err());
    }

    #[test]
    fn mahalanobis_cases() {
        let g = GaussianDensity::point_mass(dvector![0.0]);
        let m = model(DMatrix::identity(1, 1), DMatrix::identity(1, 1) * 4.0);
        assert!((mahalanobis_sq(&g, &m, &dvector![4.0]).unwrap() - 4.0).abs() < 1e-15);
        assert_eq!(mahalanobis_sq(&g, &m, &dvector![0.0]).unwrap(), 0.0);
    }

    #[test]
    fn mahalanobis_invariant_under_coordinate_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.random_range(1..=4);
            let f = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let q = random_spd(n, &mut rng, 0.5);
            let p = random_spd(n, &mut rng, 1.0);
            let mean = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let x = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
            let t = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)) + DMatrix::identity(n, n) * 2.0;
            let t_inv = t.clone().try_inverse().unwrap();
            let base = mahalanobis_sq(
                &GaussianDensity::from_parts(mean.clone(), p.clone()),
                &model(f.clone(), q.clone()),
                &x,
            )
            .unwrap();
            let moved = mahalanobis_sq(
                &GaussianDensity::from_parts(&t * &mean, &t * &p * t.transpose()),
                &model(&t * &f * &t_inv, &t * &q * t.transpose()),
                &(&t * &x),
            )
            .unwrap();
            assert!((base - moved).abs() <= 1e-9 * base.abs().max(1.0));
        }
    }

    #[test]
    fn repair_rejects_clearly_negative() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-3]);
        assert!(repair_psd(m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-13]);
        let r = repair_psd(m).unwrap();
        assert!(r.symmetric_eigenvalues().min() >= 0.0);
    }

    #[test]
    fn sampling_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let mean = dvector![1.0, -1.0];
        let n = 40_000;
        let xs: Vec<_> = (0..n).map(|_| sample(&mean, &cov, &mut rng)).collect();
        let mut m = DVector::zeros(2);
        for x in &xs {
            m += x / n as f64;
        }
        let mut c = DMatrix::zeros(2, 2);
        for x in &xs {
            let d = x - &m;
            c += &d * d.transpose() / n as f64;
        }
        assert!((m - mean).amax() < 0.03);
        assert!((c - cov).amax() < 0.06);
    }
}
