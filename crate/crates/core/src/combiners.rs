//! DFT-codebook analog combiners for fully- and partially-connected hybrid
//! receivers, the subarray gain (Dirichlet kernel) and the spatial sectors
//! covered by single-phase PC combiners.
//!
//! DFT columns carry the positive exponent `e^{+j (m-1) phi}`; combiners are
//! applied as `W^H X`, so conjugation happens at application time.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::array_model::phase_ramp;
use crate::error::{DoaError, Result};
use crate::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    /// Every RF chain sees all antennas.
    FullyConnected,
    /// Each RF chain sees a disjoint subarray.
    PartiallyConnected,
}

/// Hybrid receiver geometry: `M` antennas feeding `L` RF chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HadConfig {
    architecture: Architecture,
    num_antennas: usize,
    rf_chains: usize,
}

impl HadConfig {
    pub fn new(architecture: Architecture, num_antennas: usize, rf_chains: usize) -> Result<Self> {
        if rf_chains == 0 || rf_chains >= num_antennas {
            return Err(DoaError::Config(format!(
                "need 1 <= L < M, got L={rf_chains}, M={num_antennas}"
            )));
        }
        if !num_antennas.is_multiple_of(rf_chains) {
            return Err(DoaError::Config(format!(
                "M={num_antennas} is not a multiple of L={rf_chains}"
            )));
        }
        Ok(Self {
            architecture,
            num_antennas,
            rf_chains,
        })
    }

    pub fn architecture(&self) -> Architecture {
        self.architecture
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn rf_chains(&self) -> usize {
        self.rf_chains
    }

    /// Antennas behind one RF chain (`M_RF`): `M` for FC, `M/L` for PC.
    pub fn subarray_len(&self) -> usize {
        match self.architecture {
            Architecture::FullyConnected => self.num_antennas,
            Architecture::PartiallyConnected => self.num_antennas / self.rf_chains,
        }
    }

    /// Number of combiners in the exhaustive codebook, `N = M/L`.
    pub fn num_combiners(&self) -> usize {
        self.num_antennas / self.rf_chains
    }

    /// Power-splitting amplitude of the nonzero combiner entries.
    pub fn alpha(&self) -> f64 {
        match self.architecture {
            Architecture::FullyConnected => 1.0 / (self.rf_chains as f64).sqrt(),
            Architecture::PartiallyConnected => 1.0,
        }
    }

    pub fn gain_model(&self) -> GainModel {
        GainModel {
            subarray_len: self.subarray_len(),
            alpha: self.alpha(),
            architecture: self.architecture,
        }
    }
}

/// Phase of the `n`-th DFT column (1-based) of an `m_rf`-point DFT, wrapped
/// for the upper half of the index range.
pub fn dft_phase(n: usize, m_rf: usize) -> Result<f64> {
    if n == 0 || n > m_rf {
        return Err(DoaError::Index { index: n, max: m_rf });
    }
    let raw = 2.0 * PI * (n - 1) as f64 / m_rf as f64;
    if n <= m_rf.div_ceil(2) {
        Ok(raw)
    } else {
        Ok(raw - 2.0 * PI)
    }
}

/// An exhaustive ordered set of `M x L` analog combiners.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinerSet {
    pub config: HadConfig,
    pub matrices: Vec<CMatrix>,
    /// Phase of each DFT column in use, in codebook order.
    pub phase_grid: Vec<f64>,
}

impl CombinerSet {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// `alpha^2 * M_RF`, the scale of `W^H W`.
    pub fn gram_scale(&self) -> f64 {
        self.config.alpha().powi(2) * self.config.subarray_len() as f64
    }
}

pub fn build_fc_codebook(cfg: &HadConfig) -> Result<CombinerSet> {
    if cfg.architecture() != Architecture::FullyConnected {
        return Err(DoaError::Config("FC codebook requested for a PC receiver".into()));
    }
    let m = cfg.num_antennas();
    let l = cfg.rf_chains();
    let scale = Complex64::new(cfg.alpha(), 0.0);
    let phase_grid = (1..=m).map(|n| dft_phase(n, m)).collect::<Result<Vec<_>>>()?;
    let matrices = (0..cfg.num_combiners())
        .map(|n| {
            let mut w = CMatrix::zeros(m, l);
            for col in 0..l {
                let v = phase_ramp(m, phase_grid[n * l + col]);
                w.set_column(col, &(v * scale));
            }
            w
        })
        .collect();
    Ok(CombinerSet {
        config: *cfg,
        matrices,
        phase_grid,
    })
}

/// Block-diagonal combiner with one `len`-long column per RF chain.
pub fn block_diagonal(columns: &[nalgebra::DVector<Complex64>]) -> CMatrix {
    let len = columns.first().map_or(0, |c| c.len());
    let mut w = CMatrix::zeros(len * columns.len(), columns.len());
    for (l, col) in columns.iter().enumerate() {
        w.view_mut((l * len, l), (len, 1)).copy_from(col);
    }
    w
}

pub fn build_pc_codebook(cfg: &HadConfig) -> Result<CombinerSet> {
    if cfg.architecture() != Architecture::PartiallyConnected {
        return Err(DoaError::Config("PC codebook requested for an FC receiver".into()));
    }
    let m_rf = cfg.subarray_len();
    let l = cfg.rf_chains();
    let phase_grid = (1..=m_rf).map(|n| dft_phase(n, m_rf)).collect::<Result<Vec<_>>>()?;
    let matrices = phase_grid
        .iter()
        .map(|&phi| block_diagonal(&vec![phase_ramp(m_rf, phi); l]))
        .collect();
    Ok(CombinerSet {
        config: *cfg,
        matrices,
        phase_grid,
    })
}

pub fn build_codebook(cfg: &HadConfig) -> Result<CombinerSet> {
    match cfg.architecture() {
        Architecture::FullyConnected => build_fc_codebook(cfg),
        Architecture::PartiallyConnected => build_pc_codebook(cfg),
    }
}

/// `W^H X`.
pub fn apply_combiner(w: &CMatrix, x: &CMatrix) -> Result<CMatrix> {
    if w.nrows() != x.nrows() {
        return Err(DoaError::shape(
            "apply_combiner",
            format!("{} rows", w.nrows()),
            format!("{} rows", x.nrows()),
        ));
    }
    Ok(w.ad_mul(x))
}

/// Subarray response model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainModel {
    pub subarray_len: usize,
    pub alpha: f64,
    pub architecture: Architecture,
}

impl GainModel {
    /// Dirichlet-kernel gain `sum_{m<M_RF} e^{j m (mu - phi)}` in closed form.
    pub fn gain(&self, mu: f64, phi: f64) -> Complex64 {
        gain(mu, phi, self)
    }

    /// Phase picked up by the `ell`-th (1-based) RF chain from a source at `mu`.
    pub fn subarray_phase(&self, mu: f64, ell: usize) -> f64 {
        match self.architecture {
            Architecture::PartiallyConnected => (ell - 1) as f64 * mu * self.subarray_len as f64,
            Architecture::FullyConnected => 0.0,
        }
    }
}

pub fn gain(mu: f64, phi: f64, model: &GainModel) -> Complex64 {
    let n = model.subarray_len as f64;
    let delta = mu - phi;
    let half = 0.5 * delta;
    let den = half.sin();
    let amplitude = if den.abs() < 1e-9 {
        // removable singularity at delta = 2*pi*k
        let k = (delta / (2.0 * PI)).round();
        let sign = if (k as i64 * (model.subarray_len as i64 - 1)) % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        let eps = delta - 2.0 * PI * k;
        sign * n * (1.0 - (n * n - 1.0) * eps * eps / 24.0)
    } else {
        (n * half).sin() / den
    };
    Complex64::from_polar(1.0, (n - 1.0) * half) * amplitude
}

/// Angular interval `(lower, upper]` in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleInterval {
    pub lower_deg: f64,
    pub upper_deg: f64,
}

impl AngleInterval {
    pub fn contains(&self, angle_deg: f64) -> bool {
        angle_deg > self.lower_deg && angle_deg <= self.upper_deg
    }
}

/// Spatial sector of one combiner; the wrap-around sector holds two pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct Sector {
    pub intervals: Vec<AngleInterval>,
}

impl Sector {
    pub fn contains(&self, angle_deg: f64) -> bool {
        self.intervals.iter().any(|i| i.contains(angle_deg))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorSet {
    pub sectors: Vec<Sector>,
}

impl SectorSet {
    /// 0-based index of the sector containing `angle_deg`.
    pub fn sector_of(&self, angle_deg: f64) -> Option<usize> {
        self.sectors.iter().position(|s| s.contains(angle_deg))
    }
}

/// Sectors of the single-phase PC codebook for a half-wavelength array.
pub fn sectors(cfg: &HadConfig, spacing_ratio: f64) -> Result<SectorSet> {
    if cfg.architecture() != Architecture::PartiallyConnected {
        return Err(DoaError::Config("sectors are defined for PC receivers".into()));
    }
    if (spacing_ratio - 0.5).abs() > 1e-12 {
        return Err(DoaError::UnsupportedGeometry(format!(
            "sectors require half-wavelength spacing, got {spacing_ratio}"
        )));
    }
    let m_rf = cfg.subarray_len() as f64;
    let split = cfg.subarray_len().div_ceil(2);
    let asin_deg = |x: f64| x.clamp(-1.0, 1.0).asin().to_degrees();
    let sectors = (1..=cfg.subarray_len())
        .map(|n| {
            let lo = (2.0 * n as f64 - 3.0) / m_rf;
            let hi = (2.0 * n as f64 - 1.0) / m_rf;
            let intervals = if n <= split {
                vec![AngleInterval {
                    lower_deg: asin_deg(lo),
                    upper_deg: asin_deg(hi),
                }]
            } else if n == split + 1 {
                vec![
                    AngleInterval {
                        lower_deg: -90.0,
                        upper_deg: asin_deg(hi - 2.0),
                    },
                    AngleInterval {
                        lower_deg: asin_deg(lo),
                        upper_deg: 90.0,
                    },
                ]
            } else {
                vec![AngleInterval {
                    lower_deg: asin_deg(lo - 2.0),
                    upper_deg: asin_deg(hi - 2.0),
                }]
            };
            Sector { intervals }
        })
        .collect();
    Ok(SectorSet { sectors })
}
