//! Hankel construction, rank-R denoising and the matrix-pencil eigenvalue
//! solve shared by every estimator.

use num_complex::Complex64;

use crate::array_model::angle_of;
use crate::error::{DoaError, Result, Warning};
use crate::linalg::{eigenvalues, svd};
use crate::CMatrix;

/// Arcsin arguments beyond `1 + OUT_OF_RANGE_TOL` raise a warning.
pub const OUT_OF_RANGE_TOL: f64 = 0.05;

/// Relative singular-value cutoff used for pseudo-inverses.
pub const PINV_RCOND: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PencilConfig {
    pencil_parameter: usize,
    num_sources: usize,
    channel_count: usize,
}

impl PencilConfig {
    pub fn new(pencil_parameter: usize, num_sources: usize, channel_count: usize) -> Result<Self> {
        if num_sources == 0 {
            return Err(DoaError::Config("at least one source is required".into()));
        }
        let max = channel_count.saturating_sub(num_sources);
        if pencil_parameter < num_sources || pencil_parameter > max {
            return Err(DoaError::PencilParam {
                xi: pencil_parameter,
                min: num_sources,
                max,
                channels: channel_count,
                sources: num_sources,
            });
        }
        Ok(Self {
            pencil_parameter,
            num_sources,
            channel_count,
        })
    }

    /// `xi = floor(C/2)`. Values in `[C/3, C/2]` generally work well.
    pub fn with_default(num_sources: usize, channel_count: usize) -> Result<Self> {
        Self::new(channel_count / 2, num_sources, channel_count)
    }

    pub fn pencil_parameter(&self) -> usize {
        self.pencil_parameter
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn channel_count(&self) -> usize {
        self.channel_count
    }
}

/// `(C - xi) x (xi + 1)` Hankel matrix with entry `(i, j) = x[i + j]`.
pub fn hankel(x: &[Complex64], xi: usize) -> Result<CMatrix> {
    let c = x.len();
    if xi == 0 || xi >= c {
        return Err(DoaError::PencilParam {
            xi,
            min: 1,
            max: c.saturating_sub(1),
            channels: c,
            sources: 1,
        });
    }
    Ok(CMatrix::from_fn(c - xi, xi + 1, |i, j| x[i + j]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HankelStack {
    pub pencil_parameter: usize,
    pub blocks: Vec<CMatrix>,
    pub augmented: CMatrix,
}

impl HankelStack {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }
}

/// Hankelizes every column of `snapshots` (`C x K_A`) and concatenates the
/// blocks left to right.
pub fn augment(snapshots: &CMatrix, xi: usize) -> Result<HankelStack> {
    if snapshots.ncols() == 0 || snapshots.nrows() == 0 {
        return Err(DoaError::EmptyInput("augment: no snapshots"));
    }
    let blocks = snapshots
        .column_iter()
        .map(|col| hankel(col.as_slice(), xi))
        .collect::<Result<Vec<_>>>()?;
    let rows = blocks[0].nrows();
    let width = xi + 1;
    let mut augmented = CMatrix::zeros(rows, width * blocks.len());
    for (k, b) in blocks.iter().enumerate() {
        augmented.columns_mut(k * width, width).copy_from(b);
    }
    Ok(HankelStack {
        pencil_parameter: xi,
        blocks,
        augmented,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoised {
    pub matrix: CMatrix,
    pub singular_values: Vec<f64>,
    /// `sigma_R / sigma_{R+1}`; infinite when nothing is discarded.
    pub gap: f64,
}

/// Best rank-`r` approximation of the augmented Hankel matrix.
pub fn svd_denoise(stack: &HankelStack, r: usize) -> Result<Denoised> {
    truncate(&stack.augmented, r)
}

pub(crate) fn truncate(h: &CMatrix, r: usize) -> Result<Denoised> {
    let max = h.nrows().min(h.ncols());
    if r == 0 || r > max {
        return Err(DoaError::shape("svd_denoise", format!("rank in 1..={max}"), r));
    }
    let svd = svd(h, "svd_denoise")?;
    let mut matrix = CMatrix::zeros(h.nrows(), h.ncols());
    for i in 0..r {
        let scaled = svd.u.column(i) * Complex64::new(svd.s[i], 0.0);
        matrix += scaled * svd.v.column(i).adjoint();
    }
    let gap = match svd.s.get(r) {
        Some(&next) if next > 0.0 => svd.s[r - 1] / next,
        _ => f64::INFINITY,
    };
    Ok(Denoised {
        matrix,
        singular_values: svd.s,
        gap,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PencilPair {
    pub left: CMatrix,
    pub right: CMatrix,
}

/// Drops the last column of every block for `left` and the first for `right`.
pub fn split_pencil(h: &CMatrix, xi: usize, k_a: usize) -> Result<PencilPair> {
    let width = xi + 1;
    if xi == 0 || k_a == 0 || h.ncols() != k_a * width {
        return Err(DoaError::shape(
            "split_pencil",
            format!("{} columns", k_a * width),
            h.ncols(),
        ));
    }
    let rows = h.nrows();
    let mut left = CMatrix::zeros(rows, k_a * xi);
    let mut right = CMatrix::zeros(rows, k_a * xi);
    for k in 0..k_a {
        left.columns_mut(k * xi, xi).copy_from(&h.columns(k * width, xi));
        right.columns_mut(k * xi, xi).copy_from(&h.columns(k * width + 1, xi));
    }
    Ok(PencilPair { left, right })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    /// Largest-modulus eigenvalues, in descending modulus.
    pub eigenvalues: Vec<Complex64>,
    /// Smallest retained singular value of the left pencil matrix.
    pub smallest_retained: f64,
    /// Largest singular value below the retained set, 0 if none.
    pub largest_discarded: f64,
}

/// The `r` largest-modulus eigenvalues of `pinv(left) * right`.
///
/// With `left = U S V^H` truncated at the pseudo-inverse cutoff, the nonzero
/// spectrum of `V S^-1 U^H right` equals that of the small matrix
/// `S^-1 U^H right V`, which is what gets diagonalized.
pub fn pencil_eigenvalues(pair: &PencilPair, r: usize) -> Result<EigenResult> {
    if pair.left.shape() != pair.right.shape() {
        return Err(DoaError::shape(
            "pencil_eigenvalues",
            format!("{:?}", pair.left.shape()),
            format!("{:?}", pair.right.shape()),
        ));
    }
    let svd = svd(&pair.left, "pencil_eigenvalues")?;
    let sigma_max = svd.s.first().copied().unwrap_or(0.0);
    let rank = svd.rank(PINV_RCOND);
    if rank < r {
        return Err(DoaError::Rank {
            rank,
            required: r,
            sigma_max,
        });
    }
    let u = svd.u.columns(0, rank);
    let v = svd.v.columns(0, rank);
    let mut t = u.adjoint() * &pair.right * v;
    for i in 0..rank {
        t.row_mut(i).scale_mut(1.0 / svd.s[i]);
    }
    let mut eig = eigenvalues(&t)?;
    eig.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    eig.truncate(r);
    Ok(EigenResult {
        eigenvalues: eig,
        smallest_retained: svd.s[r - 1],
        largest_discarded: svd.s.get(r).copied().unwrap_or(0.0),
    })
}

/// Maps pencil eigenvalues to angles in degrees, sorted ascending.
///
/// `dilation` is 1 for fully digital data and `M_RF` for SPC first-stage
/// eigenvalues, whose phase is `M_RF` times the source phase.
pub fn eigen_to_angles(eig: &EigenResult, spacing_ratio: f64, dilation: usize) -> (Vec<f64>, Vec<Warning>) {
    let mut warnings = Vec::new();
    let scale = 2.0 * std::f64::consts::PI * spacing_ratio * dilation as f64;
    let mut angles: Vec<f64> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(source, nu)| {
            let argument = nu.arg() / scale;
            if argument.abs() > 1.0 + OUT_OF_RANGE_TOL {
                warnings.push(Warning::OutOfRange { source, argument });
            }
            angle_of(nu.arg() / dilation as f64, spacing_ratio)
        })
        .collect();
    angles.sort_by(f64::total_cmp);
    (angles, warnings)
}

/// Augment, denoise, split and solve for `snapshots` laid out as `C x K_A`.
pub fn run_pencil(snapshots: &CMatrix, cfg: &PencilConfig) -> Result<(EigenResult, f64)> {
    if snapshots.nrows() != cfg.channel_count() {
        return Err(DoaError::shape(
            "run_pencil",
            format!("{} channels", cfg.channel_count()),
            snapshots.nrows(),
        ));
    }
    let xi = cfg.pencil_parameter();
    let stack = augment(snapshots, xi)?;
    let denoised = svd_denoise(&stack, cfg.num_sources())?;
    let pair = split_pencil(&denoised.matrix, xi, stack.num_blocks())?;
    let eig = pencil_eigenvalues(&pair, cfg.num_sources())?;
    Ok((eig, denoised.gap))
}
