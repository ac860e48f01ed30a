//! Stochastic Cramer-Rao bounds on the DoAs for the fully digital receiver
//! (which also bounds PMPM when evaluated with `K` snapshots) and for a set of
//! partially-connected combiners.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::array_model::{steering_matrix, ArrayConfig, SourceSet};
use crate::error::{DoaError, Result};
use crate::linalg::{orthogonal_projector, pinv};
use crate::pencil::PINV_RCOND;
use crate::CMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CrlbInputs {
    pub array: ArrayConfig,
    pub sources: SourceSet,
    /// `K~` for the FD bound, `K` per combiner for the combiner bound.
    pub snapshots: usize,
    pub noise_variance: f64,
    /// Analog combiners; each must satisfy `W^H W = c I` for a common `c`.
    pub combiners: Option<Vec<CMatrix>>,
}

impl CrlbInputs {
    pub fn fd(array: ArrayConfig, sources: SourceSet, snapshots: usize) -> Self {
        Self {
            array,
            sources,
            snapshots,
            noise_variance: 1.0,
            combiners: None,
        }
    }

    pub fn with_combiners(array: ArrayConfig, sources: SourceSet, snapshots: usize, combiners: Vec<CMatrix>) -> Self {
        Self {
            combiners: Some(combiners),
            ..Self::fd(array, sources, snapshots)
        }
    }

    fn validate(&self) -> Result<()> {
        if self.snapshots == 0 {
            return Err(DoaError::Config("CRLB needs at least one snapshot".into()));
        }
        if !(self.noise_variance > 0.0) {
            return Err(DoaError::Config(format!("noise variance must be positive, got {}", self.noise_variance)));
        }
        Ok(())
    }
}

/// Bound on the DoA covariance, radians squared.
#[derive(Debug, Clone, PartialEq)]
pub struct CrlbMatrix {
    pub entries: DMatrix<f64>,
}

impl CrlbMatrix {
    pub fn num_sources(&self) -> usize {
        self.entries.nrows()
    }

    /// Per-source root bound in degrees.
    pub fn root_diag_deg(&self) -> Vec<f64> {
        self.entries.diagonal().iter().map(|v| v.sqrt().to_degrees()).collect()
    }

    /// `sqrt(trace / R)` in degrees, comparable with an RMSE pooled over sources.
    pub fn root_mean_deg(&self) -> f64 {
        (self.entries.trace() / self.num_sources() as f64).sqrt().to_degrees()
    }
}

/// `F = dA/dtheta` with `theta` in radians.
pub fn steering_derivative(array: &ArrayConfig, sources: &SourceSet) -> Result<CMatrix> {
    let a = steering_matrix(array, sources)?;
    let k = 2.0 * std::f64::consts::PI * array.spacing_ratio();
    let mut f = a.entries;
    for (r, theta) in sources.angles_deg().iter().enumerate() {
        let slope = k * theta.to_radians().cos();
        for m in 0..f.nrows() {
            f[(m, r)] *= Complex64::new(0.0, m as f64 * slope);
        }
    }
    Ok(f)
}

fn hermitian_inverse(m: &CMatrix, context: &str) -> Result<CMatrix> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| DoaError::Numerical(format!("{context}: covariance is not positive definite")))
}

/// `Re{X ⊙ Y^T}`.
fn hadamard_real(x: &CMatrix, y: &CMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] * y[(j, i)]).re)
}

fn invert_fim(info: DMatrix<f64>, scale: f64) -> Result<CrlbMatrix> {
    let sym = (&info + info.transpose()) * 0.5;
    let max = sym.diagonal().amax();
    if !(max > 0.0) || !max.is_finite() {
        return Err(DoaError::SingularFim("information matrix vanishes".into()));
    }
    let inv = sym
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| DoaError::SingularFim("information matrix is not positive definite".into()))?;
    let entries = inv * scale;
    let entries = (&entries + entries.transpose()) * 0.5;
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(DoaError::SingularFim("bound is not finite".into()));
    }
    Ok(CrlbMatrix { entries })
}

/// `sigma^2 / (2 K~) (Re{(F^H P_A F) ⊙ (Phi A^H Sigma^-1 A Phi)^T})^-1`.
pub fn crlb_fd(input: &CrlbInputs) -> Result<CrlbMatrix> {
    input.validate()?;
    if input.combiners.is_some() {
        return Err(DoaError::Config("crlb_fd takes no combiners; use crlb_spc".into()));
    }
    let a = steering_matrix(&input.array, &input.sources)?.entries;
    let f = steering_derivative(&input.array, &input.sources)?;
    let phi = input.sources.power_matrix();
    let m = a.nrows();
    let sigma = &a * &phi * a.adjoint() + CMatrix::identity(m, m) * Complex64::new(input.noise_variance, 0.0);
    let sigma_inv = hermitian_inverse(&sigma, "crlb_fd")?;
    let proj = orthogonal_projector(&a, PINV_RCOND)?;
    let left = f.adjoint() * proj * &f;
    let right = &phi * a.adjoint() * sigma_inv * &a * &phi;
    let info = hadamard_real(&left, &right);
    invert_fim(info, input.noise_variance / (2.0 * input.snapshots as f64))
}

/// `sigma^2 c / (2K) (Re{sum_n (F^H W_n P_En W_n^H F) ⊙ (Phi E_n^H U_n^-1 E_n Phi)^T})^-1`
/// with `E_n = W_n^H A`, `U_n = E_n Phi E_n^H + sigma^2 c I` and `c` the common
/// combiner gram scale (`M/L` for PC combiners).
pub fn crlb_spc(input: &CrlbInputs) -> Result<CrlbMatrix> {
    input.validate()?;
    let combiners = input
        .combiners
        .as_deref()
        .filter(|c| !c.is_empty())
        .ok_or_else(|| DoaError::Config("crlb_spc needs a combiner set".into()))?;
    let a = steering_matrix(&input.array, &input.sources)?.entries;
    let f = steering_derivative(&input.array, &input.sources)?;
    let phi = input.sources.power_matrix();
    let m = a.nrows();
    let l = combiners[0].ncols();
    let scale = combiners[0].column(0).norm_squared();
    let mut info = DMatrix::<f64>::zeros(a.ncols(), a.ncols());
    for w in combiners {
        if w.nrows() != m || w.ncols() != l {
            return Err(DoaError::shape("crlb_spc", format!("{m}x{l}"), format!("{}x{}", w.nrows(), w.ncols())));
        }
        let gram = w.ad_mul(w);
        if (gram - CMatrix::identity(l, l) * Complex64::new(scale, 0.0)).norm() > 1e-9 * scale * l as f64 {
            return Err(DoaError::Config("combiners must have orthogonal columns of equal norm".into()));
        }
        let e = w.ad_mul(&a);
        let wf = w.ad_mul(&f);
        let upsilon =
            &e * &phi * e.adjoint() + CMatrix::identity(l, l) * Complex64::new(scale * input.noise_variance, 0.0);
        let upsilon_inv = hermitian_inverse(&upsilon, "crlb_spc")?;
        let proj = CMatrix::identity(l, l) - &e * pinv(&e, PINV_RCOND)?;
        let left = wf.adjoint() * proj * &wf;
        let right = &phi * e.adjoint() * upsilon_inv * &e * &phi;
        info += hadamard_real(&left, &right);
    }
    invert_fim(info, input.noise_variance * scale / (2.0 * input.snapshots as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combiners::{build_pc_codebook, Architecture, HadConfig};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn array(m: usize) -> ArrayConfig {
        ArrayConfig::half_wavelength(m).unwrap()
    }

    #[test]
    fn derivative_entries() {
        let f = steering_derivative(&array(4), &SourceSet::new(vec![0.0], vec![1.0]).unwrap()).unwrap();
        assert_eq!(f[(0, 0)], c(0.0, 0.0));
        assert!((f[(1, 0)] - c(0.0, PI)).norm() < 1e-15);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let cfg = ArrayConfig::new(12, 0.4).unwrap();
        let angles = vec![-52.0, 3.5, 71.0];
        let f = steering_derivative(&cfg, &SourceSet::new(angles.clone(), vec![1.0; 3]).unwrap()).unwrap();
        let h = 1e-5f64;
        let shifted = |d: f64| {
            let src = SourceSet::new(angles.iter().map(|a| a + d.to_degrees()).collect(), vec![1.0; 3]).unwrap();
            steering_matrix(&cfg, &src).unwrap().entries
        };
        let fd = (shifted(h) - shifted(-h)) / c(2.0 * h, 0.0);
        assert!((fd - f).iter().all(|v| v.norm() < 1e-6));
    }

    fn fd_bound(m: usize, angles: Vec<f64>, snr_db: f64, k: usize) -> CrlbMatrix {
        let src = SourceSet::with_snr_db(angles, snr_db).unwrap();
        crlb_fd(&CrlbInputs::fd(array(m), src, k)).unwrap()
    }

    #[test]
    fn fd_scales_inversely_with_snapshots() {
        let one = fd_bound(10, vec![-20.0, 30.0], 5.0, 16);
        let two = fd_bound(10, vec![-20.0, 30.0], 5.0, 32);
        assert!((&one.entries * 0.5 - &two.entries).amax() < 1e-12 * one.entries.amax());
    }

    #[test]
    fn fd_example_one_level() {
        let b = fd_bound(32, vec![0.0], 20.0, 32);
        let root = b.root_diag_deg()[0];
        assert!((root - 0.004).abs() < 0.2 * 0.004 + 0.0004, "root={root}");
        // closed form for one source: 6 (1 + 1/(M snr)) / (K snr M (M^2 - 1) pi^2)
        let snr = 100.0;
        let mf = 32.0;
        let closed = 6.0 * (1.0 + 1.0 / (mf * snr)) / (32.0 * snr * mf * (mf * mf - 1.0) * PI * PI);
        assert!((b.entries[(0, 0)] / closed - 1.0).abs() < 1e-9, "{} vs {closed}", b.entries[(0, 0)]);
    }

    #[test]
    fn fd_decreases_with_power() {
        let roots: Vec<f64> = [0.0, 10.0, 20.0]
            .iter()
            .map(|&snr| fd_bound(8, vec![-10.0, 25.0], snr, 10).root_mean_deg())
            .collect();
        assert!(roots[0] > roots[1] && roots[1] > roots[2]);
    }

    #[test]
    fn bounds_are_positive_definite() {
        let b = fd_bound(16, vec![-60.0, -15.0, 35.0, 75.0], 0.0, 8);
        let eig = b.entries.clone().symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&v| v > 0.0));
        let spc = spc_bound(32, 8, vec![-30.0, 10.0], 20.0, 16);
        let eig = spc.entries.clone().symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn close_sources_blow_up() {
        let tight = fd_bound(8, vec![10.0, 10.5], 10.0, 10);
        let loose = fd_bound(8, vec![10.0, 30.0], 10.0, 10);
        assert!(tight.root_mean_deg() > 50.0 * loose.root_mean_deg());
        let src = SourceSet::with_snr_db(vec![10.0, 10.0 + 1e-9], 10.0).unwrap();
        assert!(matches!(
            crlb_fd(&CrlbInputs::fd(array(8), src, 10)),
            Err(DoaError::SingularFim(_))
        ));
    }

    #[test]
    fn inputs_are_validated() {
        let src = SourceSet::new(vec![0.0], vec![1.0]).unwrap();
        assert!(crlb_fd(&CrlbInputs::fd(array(4), src.clone(), 0)).is_err());
        let mut bad = CrlbInputs::fd(array(4), src.clone(), 2);
        bad.noise_variance = 0.0;
        assert!(crlb_fd(&bad).is_err());
        assert!(crlb_spc(&CrlbInputs::fd(array(4), src.clone(), 2)).is_err());
        let non_orth = vec![CMatrix::from_element(4, 2, c(1.0, 0.0))];
        assert!(crlb_spc(&CrlbInputs::with_combiners(array(4), src, 2, non_orth)).is_err());
    }

    fn spc_bound(m: usize, l: usize, angles: Vec<f64>, snr_db: f64, k: usize) -> CrlbMatrix {
        let had = HadConfig::new(Architecture::PartiallyConnected, m, l).unwrap();
        let set = build_pc_codebook(&had).unwrap();
        let src = SourceSet::with_snr_db(angles, snr_db).unwrap();
        crlb_spc(&CrlbInputs::with_combiners(array(m), src, k, set.matrices)).unwrap()
    }

    #[test]
    fn spc_scales_inversely_with_snapshots() {
        let one = spc_bound(32, 8, vec![5.0, 40.0], 10.0, 12);
        let two = spc_bound(32, 8, vec![5.0, 40.0], 10.0, 6);
        assert!((&one.entries * 2.0 - &two.entries).amax() < 1e-12 * two.entries.amax());
    }

    #[test]
    fn spc_example_one_level() {
        // 128 snapshots over 4 combiners
        let root = spc_bound(32, 8, vec![0.0], 20.0, 32).root_diag_deg()[0];
        assert!((root - 0.004).abs() < 0.25 * 0.004 + 0.0005, "root={root}");
    }

    #[test]
    fn spc_survives_nulled_sources() {
        // on-grid source: three of the four single-phase combiners null it
        let b = spc_bound(16, 4, vec![30.0], 10.0, 8);
        assert!(b.entries[(0, 0)].is_finite() && b.entries[(0, 0)] > 0.0);
    }

    /// Gaussian FIM `K tr(S^-1 dS_i S^-1 dS_j)` by central differences of the
    /// covariance, over DoAs, the source covariance and the noise power.
    fn numeric_crb(cov: &dyn Fn(&[f64]) -> CMatrix, params: &[f64], k: usize, n_theta: usize) -> DMatrix<f64> {
        let p = params.len();
        let h = 1e-6;
        let s_inv = cov(params).try_inverse().unwrap();
        let grads: Vec<CMatrix> = (0..p)
            .map(|i| {
                let mut up = params.to_vec();
                let mut dn = params.to_vec();
                up[i] += h;
                dn[i] -= h;
                (cov(&up) - cov(&dn)) / c(2.0 * h, 0.0)
            })
            .collect();
        let fim = DMatrix::from_fn(p, p, |i, j| {
            (&s_inv * &grads[i] * &s_inv * &grads[j]).trace().re * k as f64
        });
        let inv = fim.try_inverse().unwrap();
        inv.view((0, 0), (n_theta, n_theta)).into_owned()
    }

    fn ula(m: usize, thetas: &[f64]) -> CMatrix {
        CMatrix::from_fn(m, thetas.len(), |i, r| c(0.0, PI * i as f64 * thetas[r].sin()).exp())
    }

    #[test]
    fn fd_matches_numeric_fim_single_source() {
        let (m, k) = (4, 7);
        let theta = 0.35f64;
        let cov = |p: &[f64]| {
            let a = ula(m, &p[..1]);
            &a * a.adjoint() * c(p[1], 0.0) + CMatrix::identity(m, m) * c(p[2], 0.0)
        };
        let oracle = numeric_crb(&cov, &[theta, 2.0, 1.0], k, 1);
        let src = SourceSet::new(vec![theta.to_degrees()], vec![2.0]).unwrap();
        let b = crlb_fd(&CrlbInputs::fd(array(m), src, k)).unwrap();
        assert!((b.entries[(0, 0)] / oracle[(0, 0)] - 1.0).abs() < 0.01);
    }

    #[test]
    fn fd_matches_numeric_fim_two_sources() {
        // full Hermitian source covariance as nuisance
        let (m, k) = (5, 9);
        let thetas = [-0.4f64, 0.5];
        let cov = |p: &[f64]| {
            let a = ula(m, &p[..2]);
            let phi = CMatrix::from_row_slice(2, 2, &[c(p[2], 0.0), c(p[4], p[5]), c(p[4], -p[5]), c(p[3], 0.0)]);
            &a * phi * a.adjoint() + CMatrix::identity(m, m) * c(p[6], 0.0)
        };
        let oracle = numeric_crb(&cov, &[thetas[0], thetas[1], 1.5, 0.7, 0.0, 0.0, 1.0], k, 2);
        let src = SourceSet::new(thetas.iter().map(|t| t.to_degrees()).collect(), vec![1.5, 0.7]).unwrap();
        let b = crlb_fd(&CrlbInputs::fd(array(m), src, k)).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((b.entries[(i, j)] - oracle[(i, j)]).abs() < 0.01 * oracle[(i, i)].abs(), "{i}{j}");
            }
        }
    }

    #[test]
    fn single_combiner_matches_numeric_fim() {
        // a single PC combiner observed K times: q = W^H x
        let had = HadConfig::new(Architecture::PartiallyConnected, 8, 4).unwrap();
        let w = build_pc_codebook(&had).unwrap().matrices[1].clone();
        let k = 5;
        let theta = 0.2f64;
        let cov = |p: &[f64]| {
            let e = w.ad_mul(&ula(8, &p[..1]));
            &e * e.adjoint() * c(p[1], 0.0) + w.ad_mul(&w) * c(p[2], 0.0)
        };
        let oracle = numeric_crb(&cov, &[theta, 3.0, 1.0], k, 1);
        let src = SourceSet::new(vec![theta.to_degrees()], vec![3.0]).unwrap();
        let b = crlb_spc(&CrlbInputs::with_combiners(array(8), src, k, vec![w.clone()])).unwrap();
        assert!((b.entries[(0, 0)] / oracle[(0, 0)] - 1.0).abs() < 0.01);
    }
}
