//! Uniform linear array model: steering vectors, source and noise synthesis,
//! and RMSE bookkeeping.
//!
//! Public APIs take and return angles in degrees; the phase between adjacent
//! antennas, `mu = 2*pi*(spacing/wavelength)*sin(theta)`, is in radians.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{DoaError, Result};
use crate::CMatrix;

/// Geometry of the receive ULA.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayConfig {
    num_antennas: usize,
    spacing_ratio: f64,
}

impl ArrayConfig {
    pub fn new(num_antennas: usize, spacing_ratio: f64) -> Result<Self> {
        if num_antennas < 2 {
            return Err(DoaError::Config(format!(
                "num_antennas must be at least 2, got {num_antennas}"
            )));
        }
        if !(spacing_ratio > 0.0 && spacing_ratio <= 0.5) {
            return Err(DoaError::Config(format!(
                "spacing_ratio must lie in (0, 0.5], got {spacing_ratio}"
            )));
        }
        Ok(Self {
            num_antennas,
            spacing_ratio,
        })
    }

    /// Half-wavelength array.
    pub fn half_wavelength(num_antennas: usize) -> Result<Self> {
        Self::new(num_antennas, 0.5)
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn spacing_ratio(&self) -> f64 {
        self.spacing_ratio
    }

    /// Inter-element phase for a DoA in degrees.
    pub fn phase(&self, angle_deg: f64) -> f64 {
        phase_of(angle_deg, self.spacing_ratio)
    }
}

/// `2*pi*spacing*sin(theta)` for `theta` in degrees.
pub fn phase_of(angle_deg: f64, spacing_ratio: f64) -> f64 {
    2.0 * PI * spacing_ratio * angle_deg.to_radians().sin()
}

/// Inverse of [`phase_of`], clamping the arcsin argument to [-1, 1].
pub fn angle_of(phase: f64, spacing_ratio: f64) -> f64 {
    (phase / (2.0 * PI * spacing_ratio))
        .clamp(-1.0, 1.0)
        .asin()
        .to_degrees()
}

/// Ground-truth DoAs with their average powers (linear scale, noise power 1).
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet {
    angles_deg: Vec<f64>,
    powers: Vec<f64>,
}

impl SourceSet {
    pub fn new(angles_deg: Vec<f64>, powers: Vec<f64>) -> Result<Self> {
        if angles_deg.is_empty() {
            return Err(DoaError::Config("at least one source is required".into()));
        }
        if angles_deg.len() != powers.len() {
            return Err(DoaError::Config(format!(
                "{} angles but {} powers",
                angles_deg.len(),
                powers.len()
            )));
        }
        if let Some(a) = angles_deg.iter().find(|a| !(a.abs() < 90.0)) {
            return Err(DoaError::Config(format!(
                "angle {a} deg outside (-90, 90)"
            )));
        }
        if let Some(p) = powers.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(DoaError::Config(format!("source power {p} is not positive")));
        }
        for (i, a) in angles_deg.iter().enumerate() {
            if angles_deg[i + 1..].contains(a) {
                return Err(DoaError::DegenerateSources(format!(
                    "angle {a} deg appears more than once"
                )));
            }
        }
        Ok(Self { angles_deg, powers })
    }

    /// Equal-power sources at the given per-source SNR (dB, noise power 1).
    pub fn with_snr_db(angles_deg: Vec<f64>, snr_db: f64) -> Result<Self> {
        let p = 10f64.powf(snr_db / 10.0);
        let powers = vec![p; angles_deg.len()];
        Self::new(angles_deg, powers)
    }

    pub fn num_sources(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    /// Source power matrix `diag(P_1, ..., P_R)`.
    pub fn power_matrix(&self) -> CMatrix {
        CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.powers.len(),
            self.powers.iter().map(|&p| Complex64::new(p, 0.0)),
        ))
    }
}

/// `M x R` array response with the phases used to build it.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringMatrix {
    pub entries: CMatrix,
    pub phases: Vec<f64>,
}

/// Unit-modulus vector `[1, e^{j beta}, ..., e^{j (len-1) beta}]`.
pub fn phase_ramp(len: usize, beta: f64) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_fn(len, |m, _| Complex64::from_polar(1.0, m as f64 * beta))
}

pub fn steering_matrix(cfg: &ArrayConfig, sources: &SourceSet) -> Result<SteeringMatrix> {
    let phases: Vec<f64> = sources.angles_deg().iter().map(|&a| cfg.phase(a)).collect();
    for (i, mu) in phases.iter().enumerate() {
        if phases[i + 1..].contains(mu) {
            return Err(DoaError::DegenerateSources(format!(
                "two sources share the phase {mu}"
            )));
        }
    }
    debug_assert!(phases.iter().all(|mu| mu.abs() <= PI));
    let m = cfg.num_antennas();
    let entries = CMatrix::from_fn(m, phases.len(), |row, col| {
        Complex64::from_polar(1.0, row as f64 * phases[col])
    });
    Ok(SteeringMatrix { entries, phases })
}

/// Seed plus a derived stream identifier. Identical specs yield identical
/// draws; [`RngSpec::label`] and [`RngSpec::index`] derive independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSpec {
    pub seed: u64,
    pub stream: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    pub fn label(&self, label: &str) -> Self {
        // FNV-1a
        let h = label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        });
        self.index(h)
    }

    pub fn index(&self, i: u64) -> Self {
        Self {
            seed: self.seed,
            stream: splitmix64(self.stream ^ splitmix64(i)),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Circularly-symmetric complex Gaussian with total variance `variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Channel-by-time sample matrix of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotBlock {
    pub samples: CMatrix,
    pub segment_index: usize,
}

impl SnapshotBlock {
    pub fn new(samples: CMatrix, segment_index: usize) -> Self {
        Self {
            samples,
            segment_index,
        }
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn snapshots(&self) -> usize {
        self.samples.ncols()
    }
}

/// `n` source blocks of `R x k` samples. With `periodic`, one block is drawn
/// and replicated across all segments.
pub fn generate_signals(
    sources: &SourceSet,
    k: usize,
    n: usize,
    periodic: bool,
    rng: &RngSpec,
) -> Result<Vec<CMatrix>> {
    if k == 0 || n == 0 {
        return Err(DoaError::Config(format!(
            "signal blocks need k >= 1 and n >= 1, got k={k}, n={n}"
        )));
    }
    let draw = |spec: RngSpec| {
        let mut g = spec.rng();
        let r = sources.num_sources();
        // column-major fill: sample by sample, source by source
        let mut s = CMatrix::zeros(r, k);
        for col in 0..k {
            for (row, &p) in sources.powers().iter().enumerate() {
                s[(row, col)] = complex_gaussian(&mut g, p);
            }
        }
        s
    };
    if periodic {
        let s = draw(rng.index(0));
        Ok(vec![s; n])
    } else {
        Ok((0..n).map(|i| draw(rng.index(i as u64))).collect())
    }
}

/// Unit-variance white noise, `c x k`.
pub fn generate_noise(c: usize, k: usize, rng: &RngSpec) -> Result<SnapshotBlock> {
    if c == 0 || k == 0 {
        return Err(DoaError::Config(format!(
            "noise block needs c >= 1 and k >= 1, got c={c}, k={k}"
        )));
    }
    let mut g = rng.rng();
    let mut z = CMatrix::zeros(c, k);
    for col in 0..k {
        for row in 0..c {
            z[(row, col)] = complex_gaussian(&mut g, 1.0);
        }
    }
    Ok(SnapshotBlock::new(z, 0))
}

/// `X = A S + Z`.
pub fn receive_fd(a: &SteeringMatrix, s: &CMatrix, z: &SnapshotBlock) -> Result<SnapshotBlock> {
    let (m, r) = a.entries.shape();
    if s.nrows() != r {
        return Err(DoaError::shape("receive_fd signal", format!("{r} rows"), s.nrows()));
    }
    if z.samples.shape() != (m, s.ncols()) {
        return Err(DoaError::shape(
            "receive_fd noise",
            format!("{m}x{}", s.ncols()),
            format!("{}x{}", z.samples.nrows(), z.samples.ncols()),
        ));
    }
    Ok(SnapshotBlock::new(&a.entries * s + &z.samples, z.segment_index))
}

/// Noiseless received block `A S`.
pub fn receive_noiseless(a: &SteeringMatrix, s: &CMatrix) -> Result<CMatrix> {
    if s.nrows() != a.entries.ncols() {
        return Err(DoaError::shape(
            "receive_noiseless signal",
            format!("{} rows", a.entries.ncols()),
            s.nrows(),
        ));
    }
    Ok(&a.entries * s)
}

/// Root-mean-square error in degrees over trials. Estimates and truth are
/// both sorted ascending and paired positionally.
pub fn rmse(estimates: &[Vec<f64>], truth: &SourceSet) -> Result<f64> {
    let per_trial: Vec<&[f64]> = vec![truth.angles_deg(); estimates.len()];
    rmse_varying(estimates, &per_trial)
}

/// RMSE when the true angles change from trial to trial.
pub fn rmse_varying(estimates: &[Vec<f64>], truths: &[&[f64]]) -> Result<f64> {
    if estimates.is_empty() {
        return Err(DoaError::EmptyInput("rmse needs at least one trial"));
    }
    if estimates.len() != truths.len() {
        return Err(DoaError::shape("rmse truths", estimates.len(), truths.len()));
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for (trial, (est, truth)) in estimates.iter().zip(truths).enumerate() {
        if est.len() != truth.len() {
            return Err(DoaError::TrialArity {
                trial,
                expected: truth.len(),
                found: est.len(),
            });
        }
        let mut e = est.clone();
        let mut t = truth.to_vec();
        e.sort_by(f64::total_cmp);
        t.sort_by(f64::total_cmp);
        acc += e.iter().zip(&t).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += t.len();
    }
    Ok((acc / count as f64).sqrt())
}

/// Mean per-channel power of the noiseless signal, `Tr(A Phi A^H) / M`.
pub fn mean_signal_power(a: &SteeringMatrix, sources: &SourceSet) -> f64 {
    let cov = &a.entries * sources.power_matrix() * a.entries.adjoint();
    cov.trace().re / a.entries.nrows() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn broadside_column_is_all_ones() {
        let cfg = ArrayConfig::new(2, 0.5).unwrap();
        let src = SourceSet::new(vec![0.0], vec![1.0]).unwrap();
        let a = steering_matrix(&cfg, &src).unwrap();
        assert_eq!(a.phases, vec![0.0]);
        for v in a.entries.iter() {
            assert!((v - c(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn thirty_degrees_is_quarter_turn() {
        let cfg = ArrayConfig::new(4, 0.5).unwrap();
        let src = SourceSet::new(vec![30.0], vec![1.0]).unwrap();
        let a = steering_matrix(&cfg, &src).unwrap();
        assert!((a.phases[0] - PI / 2.0).abs() < 1e-12);
        let want = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        for (got, w) in a.entries.column(0).iter().zip(want) {
            assert!((got - w).norm() < 1e-12);
        }
    }

    #[test]
    fn two_source_steering_matches_scalar_loop() {
        let cfg = ArrayConfig::new(8, 0.5).unwrap();
        let src = SourceSet::new(vec![-15.0, 35.0], vec![1.0, 1.0]).unwrap();
        let a = steering_matrix(&cfg, &src).unwrap();
        assert!((a.phases[0] - (-0.813_100)).abs() < 1e-4);
        assert!((a.phases[1] - 1.801_937).abs() < 1e-4);
        for (r, theta) in [-15.0f64, 35.0].iter().enumerate() {
            let mu = PI * theta.to_radians().sin();
            for m in 0..8 {
                let want = c((m as f64 * mu).cos(), (m as f64 * mu).sin());
                assert!((a.entries[(m, r)] - want).norm() < 1e-12);
                assert!((a.entries[(m, r)].norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicate_angles_are_rejected() {
        let err = SourceSet::new(vec![10.0, 10.0], vec![1.0, 1.0]).unwrap_err();
        assert!(matches!(err, DoaError::DegenerateSources(_)));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ArrayConfig::new(1, 0.5).is_err());
        assert!(ArrayConfig::new(4, 0.6).is_err());
        assert!(ArrayConfig::new(4, 0.0).is_err());
        assert!(SourceSet::new(vec![90.0], vec![1.0]).is_err());
        assert!(SourceSet::new(vec![0.0], vec![0.0]).is_err());
        assert!(SourceSet::new(vec![0.0, 1.0], vec![1.0]).is_err());
    }

    #[test]
    fn signal_power_moment() {
        let src = SourceSet::new(vec![0.0], vec![1.0]).unwrap();
        let s = generate_signals(&src, 1000, 1, false, &RngSpec::new(11)).unwrap();
        let p = s[0].iter().map(|v| v.norm_sqr()).sum::<f64>() / 1000.0;
        assert!((0.9..=1.1).contains(&p), "sample power {p}");
    }

    #[test]
    fn periodic_blocks_repeat_exactly() {
        let src = SourceSet::new(vec![0.0, 20.0], vec![1.0, 2.0]).unwrap();
        let s = generate_signals(&src, 16, 4, true, &RngSpec::new(3)).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s[0], s[3]);
        let s = generate_signals(&src, 16, 4, false, &RngSpec::new(3)).unwrap();
        assert_ne!(s[0], s[3]);
    }

    #[test]
    fn seeded_draws_are_reproducible() {
        let src = SourceSet::new(vec![5.0], vec![4.0]).unwrap();
        let a = generate_signals(&src, 1, 1, false, &RngSpec::new(99)).unwrap();
        let b = generate_signals(&src, 1, 1, false, &RngSpec::new(99)).unwrap();
        assert_eq!(a, b);
        let z1 = generate_noise(1, 1, &RngSpec::new(5)).unwrap();
        let z2 = generate_noise(1, 1, &RngSpec::new(5)).unwrap();
        assert_eq!(z1, z2);
        assert!(generate_signals(&src, 0, 1, false, &RngSpec::new(1)).is_err());
    }

    #[test]
    fn noise_covariance_is_identity() {
        let k = 10_000;
        let z = generate_noise(4, k, &RngSpec::new(7).label("noise")).unwrap().samples;
        let cov = &z * z.adjoint() / Complex64::new(k as f64, 0.0);
        let err = (cov - CMatrix::identity(4, 4)).norm();
        assert!(err < 0.05 * 4.0, "frobenius error {err}");
        for row in z.row_iter() {
            let re = row.iter().map(|v| v.re * v.re).sum::<f64>() / k as f64;
            assert!((re - 0.5).abs() < 0.05, "real-part variance {re}");
        }
    }

    #[test]
    fn distinct_labels_give_independent_streams() {
        let k = 10_000;
        let base = RngSpec::new(42);
        let a = generate_noise(1, k, &base.label("signal")).unwrap().samples;
        let b = generate_noise(1, k, &base.label("noise")).unwrap().samples;
        let cross = a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| x * y.conj())
            .sum::<Complex64>()
            / k as f64;
        assert!(cross.norm() < 0.05, "cross moment {cross}");
    }

    #[test]
    fn receive_propagates_identity_and_noise() {
        let cfg = ArrayConfig::new(5, 0.5).unwrap();
        let src = SourceSet::new(vec![12.0], vec![1.0]).unwrap();
        let a = steering_matrix(&cfg, &src).unwrap();
        let s = CMatrix::from_element(1, 3, c(1.0, 0.0));
        let z = SnapshotBlock::new(CMatrix::zeros(5, 3), 0);
        let x = receive_fd(&a, &s, &z).unwrap();
        for col in x.samples.column_iter() {
            assert!((col - a.entries.column(0)).norm() < 1e-15);
        }
        let z = generate_noise(5, 3, &RngSpec::new(1)).unwrap();
        let x = receive_fd(&a, &CMatrix::zeros(1, 3), &z).unwrap();
        assert_eq!(x.samples, z.samples);
        assert!(receive_fd(&a, &CMatrix::zeros(2, 3), &z).is_err());
    }

    #[test]
    fn receive_matches_triple_loop() {
        let cfg = ArrayConfig::new(3, 0.5).unwrap();
        let src = SourceSet::new(vec![-20.0, 40.0], vec![1.0, 1.0]).unwrap();
        let a = steering_matrix(&cfg, &src).unwrap();
        let s = generate_signals(&src, 2, 1, false, &RngSpec::new(8)).unwrap().remove(0);
        let z = generate_noise(3, 2, &RngSpec::new(9)).unwrap();
        let x = receive_fd(&a, &s, &z).unwrap();
        for m in 0..3 {
            for k in 0..2 {
                let mut acc = z.samples[(m, k)];
                for r in 0..2 {
                    acc += a.entries[(m, r)] * s[(r, k)];
                }
                assert!((x.samples[(m, k)] - acc).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rmse_cases() {
        let truth = SourceSet::new(vec![3.0], vec![1.0]).unwrap();
        assert_eq!(rmse(&[vec![3.0], vec![3.0]], &truth).unwrap(), 0.0);
        let v = rmse(&[vec![4.0], vec![2.0]], &truth).unwrap();
        assert!((v - 1.0).abs() < 1e-12);

        let truth = SourceSet::new(vec![-10.0, 10.0], vec![1.0, 1.0]).unwrap();
        let v = rmse(&[vec![9.0, -11.0]], &truth).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // the other pairing would give sqrt((19^2 + 21^2) / 2)
        let cross = ((19.0f64.powi(2) + 21.0f64.powi(2)) / 2.0).sqrt();
        assert!(v < cross);

        let err = rmse(&[vec![1.0]], &truth).unwrap_err();
        assert!(matches!(err, DoaError::TrialArity { trial: 0, .. }));
    }

    #[test]
    fn fd_snr_equals_source_power() {
        let cfg = ArrayConfig::new(16, 0.5).unwrap();
        let src = SourceSet::new(vec![17.0], vec![3.5]).unwrap();
        let a = steering_matrix(&cfg, &src).unwrap();
        assert!((mean_signal_power(&a, &src) - 3.5).abs() < 1e-12);
    }

    #[test]
    fn phase_is_monotone_in_angle() {
        let mut prev = f64::NEG_INFINITY;
        for i in -899..900 {
            let mu = phase_of(i as f64 / 10.0, 0.5);
            assert!(mu > prev);
            prev = mu;
        }
        assert!((angle_of(phase_of(37.0, 0.5), 0.5) - 37.0).abs() < 1e-12);
    }
}
