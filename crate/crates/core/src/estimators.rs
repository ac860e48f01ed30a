//! End-to-end DoA estimators: the fully digital matrix pencil, the periodic
//! multi-combiner pencil (PMPM) for FC/PC hybrid receivers, and the
//! single-phase-combiner pencil (SPC-MPM) with grating-lobe disambiguation.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::array_model::{angle_of, phase_of, phase_ramp, ArrayConfig};
use crate::combiners::{apply_combiner, block_diagonal, build_pc_codebook, Architecture, CombinerSet, HadConfig};
use crate::error::{DoaError, Result, Warning};
use crate::pencil::{eigen_to_angles, run_pencil, EigenResult, PencilConfig};
use crate::CMatrix;

/// Eigenvalues closer than this are treated as coincident.
pub const DISTINCT_EIGEN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    /// Sorted ascending, degrees.
    pub angles_deg: Vec<f64>,
    pub warnings: Vec<Warning>,
    /// `sigma_R / sigma_{R+1}` of the augmented Hankel matrix.
    pub singular_gap: f64,
}

/// Wraps a phase into `(-pi, pi]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

fn check_channels(x: &CMatrix, expected: usize, context: &'static str) -> Result<()> {
    if x.nrows() != expected {
        return Err(DoaError::shape(context, format!("{expected} rows"), x.nrows()));
    }
    if x.ncols() == 0 {
        return Err(DoaError::EmptyInput(context));
    }
    Ok(())
}

/// Matrix pencil on fully digital snapshots `X` (`M x K`).
pub fn estimate_fd_mpm(x: &CMatrix, cfg: &PencilConfig, array: &ArrayConfig) -> Result<Estimate> {
    check_channels(x, array.num_antennas(), "estimate_fd_mpm")?;
    let (eig, gap) = run_pencil(x, cfg)?;
    let (angles_deg, warnings) = eigen_to_angles(&eig, array.spacing_ratio(), 1);
    Ok(Estimate {
        angles_deg,
        warnings,
        singular_gap: gap,
    })
}

/// Analog codebook plus the matched digital combiners `W_A,n / (alpha^2 M_RF)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PmpmPlan {
    pub codebook: CombinerSet,
    pub digital: Vec<CMatrix>,
}

impl PmpmPlan {
    pub fn new(codebook: CombinerSet) -> Self {
        let scale = Complex64::new(1.0 / codebook.gram_scale(), 0.0);
        let digital = codebook.matrices.iter().map(|w| w * scale).collect();
        Self { codebook, digital }
    }

    pub fn num_combiners(&self) -> usize {
        self.codebook.len()
    }
}

/// `Y = sum_n W_D,n Q_n`; with periodic signals this is `A S` plus projected noise.
pub fn pmpm_aggregate(q_blocks: &[CMatrix], plan: &PmpmPlan) -> Result<CMatrix> {
    if q_blocks.len() != plan.num_combiners() {
        return Err(DoaError::shape(
            "pmpm_aggregate",
            format!("{} combiner outputs", plan.num_combiners()),
            q_blocks.len(),
        ));
    }
    let l = plan.codebook.config.rf_chains();
    let k = q_blocks[0].ncols();
    if k == 0 {
        return Err(DoaError::EmptyInput("pmpm_aggregate"));
    }
    let mut y = CMatrix::zeros(plan.codebook.config.num_antennas(), k);
    for (q, wd) in q_blocks.iter().zip(&plan.digital) {
        if q.shape() != (l, k) {
            return Err(DoaError::shape("pmpm_aggregate", format!("{l}x{k}"), format!("{:?}", q.shape())));
        }
        y += wd * q;
    }
    Ok(y)
}

/// PMPM on `N` raw segments (`M x K` each), one per codebook entry.
pub fn estimate_pmpm(
    segments: &[CMatrix],
    plan: &PmpmPlan,
    cfg: &PencilConfig,
    array: &ArrayConfig,
) -> Result<Estimate> {
    if segments.len() != plan.num_combiners() {
        return Err(DoaError::shape(
            "estimate_pmpm",
            format!("{} segments", plan.num_combiners()),
            segments.len(),
        ));
    }
    let q = segments
        .iter()
        .zip(&plan.codebook.matrices)
        .map(|(x, w)| apply_combiner(w, x))
        .collect::<Result<Vec<_>>>()?;
    let y = pmpm_aggregate(&q, plan)?;
    estimate_fd_mpm(&y, cfg, array)
}

/// Candidate phases for each source: the base phase shifted by multiples of
/// `2 pi / M_RF`, wrapped into `(-pi, pi]` and sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySet {
    pub subarray_len: usize,
    pub spacing_ratio: f64,
    pub per_source: Vec<Vec<f64>>,
}

impl AmbiguitySet {
    /// Candidates flattened source by source; index `j` maps to slot
    /// `(j / L, j % L)` of the disambiguation codebook.
    pub fn flat(&self) -> Vec<f64> {
        self.per_source.iter().flatten().copied().collect()
    }

    pub fn num_sources(&self) -> usize {
        self.per_source.len()
    }
}

pub fn ambiguity_from_phases(base_phases: &[f64], m_rf: usize, spacing_ratio: f64) -> AmbiguitySet {
    let step = 2.0 * PI / m_rf as f64;
    let per_source = base_phases
        .iter()
        .map(|&mu| {
            let mut c: Vec<f64> = (0..m_rf).map(|i| wrap_phase(mu + step * i as f64)).collect();
            c.sort_by(f64::total_cmp);
            c
        })
        .collect();
    AmbiguitySet {
        subarray_len: m_rf,
        spacing_ratio,
        per_source,
    }
}

/// Ambiguity set from base angles (degrees) produced by the SPC pencil.
pub fn ambiguity_set(base_angles: &[f64], m_rf: usize, spacing_ratio: f64) -> AmbiguitySet {
    let phases: Vec<f64> = base_angles.iter().map(|&a| phase_of(a, spacing_ratio)).collect();
    ambiguity_from_phases(&phases, m_rf, spacing_ratio)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisambiguationPlan {
    pub config: HadConfig,
    pub combiners: Vec<CMatrix>,
    /// Candidate phase steered by each `(combiner, RF chain)` slot.
    pub slot_phases: Vec<Vec<f64>>,
    /// Slots that repeat the last candidate.
    pub padded: usize,
}

impl DisambiguationPlan {
    pub fn num_combiners(&self) -> usize {
        self.combiners.len()
    }
}

/// Number of disambiguation combiners, `ceil(M_RF R / L)`.
pub fn disambiguation_count(cfg: &HadConfig, num_sources: usize) -> usize {
    (cfg.subarray_len() * num_sources).div_ceil(cfg.rf_chains())
}

pub fn build_disambiguation(amb: &AmbiguitySet, cfg: &HadConfig) -> Result<DisambiguationPlan> {
    if cfg.architecture() != Architecture::PartiallyConnected {
        return Err(DoaError::Config("disambiguation requires a PC receiver".into()));
    }
    if amb.subarray_len != cfg.subarray_len() {
        return Err(DoaError::shape("build_disambiguation", cfg.subarray_len(), amb.subarray_len));
    }
    let flat = amb.flat();
    let last = *flat.last().ok_or(DoaError::EmptyInput("build_disambiguation"))?;
    let l = cfg.rf_chains();
    let g = disambiguation_count(cfg, amb.num_sources());
    let padded = g * l - flat.len();
    let m_rf = cfg.subarray_len();
    let slot_phases: Vec<Vec<f64>> = (0..g)
        .map(|gi| (0..l).map(|li| flat.get(gi * l + li).copied().unwrap_or(last)).collect())
        .collect();
    let combiners = slot_phases
        .iter()
        .map(|phases| block_diagonal(&phases.iter().map(|&mu| phase_ramp(m_rf, mu)).collect::<Vec<_>>()))
        .collect();
    Ok(DisambiguationPlan {
        config: *cfg,
        combiners,
        slot_phases,
        padded,
    })
}

/// Splits `K` columns into `parts` contiguous runs, giving the remainder to
/// the leading runs.
pub fn split_columns(x: &CMatrix, parts: usize) -> Result<Vec<CMatrix>> {
    let k = x.ncols();
    if parts == 0 || k < parts {
        return Err(DoaError::Config(format!("cannot split {k} snapshots into {parts} segments")));
    }
    let base = k / parts;
    let extra = k % parts;
    let mut start = 0;
    Ok((0..parts)
        .map(|p| {
            let len = base + usize::from(p < extra);
            let seg = x.columns(start, len).into_owned();
            start += len;
            seg
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub angles_deg: Vec<f64>,
    /// Chosen candidate phase per source, in source order.
    pub chosen_phases: Vec<f64>,
    /// Metric of every candidate, grouped by source.
    pub metrics: Vec<Vec<f64>>,
    pub warnings: Vec<Warning>,
}

/// Picks, for each source, the candidate whose steered RF chain collects the
/// most power above the unit noise floor.
pub fn resolve_ambiguity(plan: &DisambiguationPlan, segments: &[CMatrix], amb: &AmbiguitySet) -> Result<Resolution> {
    if segments.len() != plan.num_combiners() {
        return Err(DoaError::shape(
            "resolve_ambiguity",
            format!("{} segments", plan.num_combiners()),
            segments.len(),
        ));
    }
    let m_rf = plan.config.subarray_len() as f64;
    let l = plan.config.rf_chains();
    let outputs = segments
        .iter()
        .zip(&plan.combiners)
        .map(|(x, w)| {
            if x.ncols() == 0 {
                return Err(DoaError::EmptyInput("resolve_ambiguity: empty segment"));
            }
            apply_combiner(w, x)
        })
        .collect::<Result<Vec<_>>>()?;
    let metric_of = |j: usize| {
        let q = &outputs[j / l];
        q.row(j % l).norm_squared() / (q.ncols() as f64 * m_rf) - 1.0
    };
    let mut chosen_phases = Vec::with_capacity(amb.num_sources());
    let mut metrics = Vec::with_capacity(amb.num_sources());
    let mut warnings = Vec::new();
    let mut j = 0;
    for (source, candidates) in amb.per_source.iter().enumerate() {
        let m: Vec<f64> = (0..candidates.len()).map(|i| metric_of(j + i)).collect();
        j += candidates.len();
        let best = (0..candidates.len())
            .max_by(|&a, &b| {
                m[a].total_cmp(&m[b])
                    .then_with(|| candidates[b].abs().total_cmp(&candidates[a].abs()))
            })
            .ok_or(DoaError::EmptyInput("resolve_ambiguity: no candidates"))?;
        if m.iter().all(|&v| v <= 0.0) {
            warnings.push(Warning::LowSnr { source });
        }
        chosen_phases.push(candidates[best]);
        metrics.push(m);
    }
    let mut angles_deg: Vec<f64> = chosen_phases.iter().map(|&mu| angle_of(mu, amb.spacing_ratio)).collect();
    angles_deg.sort_by(f64::total_cmp);
    Ok(Resolution {
        angles_deg,
        chosen_phases,
        metrics,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpcEstimate {
    pub estimate: Estimate,
    /// Stage-one phases in `(-pi/M_RF, pi/M_RF]`.
    pub base_phases: Vec<f64>,
    pub ambiguity: AmbiguitySet,
    pub resolution: Resolution,
}

/// Stage one of SPC-MPM: concatenates the single-phase combiner outputs,
/// `[Q_1 ... Q_N]` (`L x NK`), and runs the pencil on the virtual array of `L`
/// elements spaced `M_RF` antennas apart.
pub fn spc_stage_one(segments: &[CMatrix], had: &HadConfig, cfg: &PencilConfig) -> Result<EigenResult> {
    let codebook = build_pc_codebook(had)?;
    if segments.len() != codebook.len() {
        return Err(DoaError::shape("spc_stage_one", format!("{} segments", codebook.len()), segments.len()));
    }
    if cfg.channel_count() != had.rf_chains() {
        return Err(DoaError::shape("spc_stage_one", had.rf_chains(), cfg.channel_count()));
    }
    let q = segments
        .iter()
        .zip(&codebook.matrices)
        .map(|(x, w)| {
            check_channels(x, had.num_antennas(), "spc_stage_one")?;
            apply_combiner(w, x)
        })
        .collect::<Result<Vec<_>>>()?;
    let total: usize = q.iter().map(|b| b.ncols()).sum();
    let mut stacked = CMatrix::zeros(had.rf_chains(), total);
    let mut col = 0;
    for b in &q {
        stacked.columns_mut(col, b.ncols()).copy_from(b);
        col += b.ncols();
    }
    let (eig, _) = run_pencil(&stacked, cfg).map_err(|e| match e {
        DoaError::Rank { rank, required, .. } => DoaError::AmbiguousGeometry(format!(
            "virtual array has rank {rank} for {required} sources; sources may share a virtual bin"
        )),
        other => other,
    })?;
    for a in 0..eig.eigenvalues.len() {
        for b in a + 1..eig.eigenvalues.len() {
            if (eig.eigenvalues[a] - eig.eigenvalues[b]).norm() < DISTINCT_EIGEN_TOL {
                return Err(DoaError::AmbiguousGeometry(format!(
                    "eigenvalues {a} and {b} coincide; sources share a virtual bin"
                )));
            }
        }
    }
    Ok(eig)
}

/// SPC-MPM. `segments` holds one `M x K` raw block per single-phase combiner,
/// `stage_two` the raw `M x K2` snapshots reserved for disambiguation.
pub fn estimate_spc_mpm(
    segments: &[CMatrix],
    stage_two: &CMatrix,
    had: &HadConfig,
    cfg: &PencilConfig,
    array: &ArrayConfig,
) -> Result<SpcEstimate> {
    if array.num_antennas() != had.num_antennas() {
        return Err(DoaError::shape("estimate_spc_mpm", had.num_antennas(), array.num_antennas()));
    }
    let m_rf = had.subarray_len();
    let eig = spc_stage_one(segments, had, cfg)?;
    let (_, mut warnings) = eigen_to_angles(&eig, array.spacing_ratio(), m_rf);
    let base_phases: Vec<f64> = eig.eigenvalues.iter().map(|nu| nu.arg() / m_rf as f64).collect();
    let gap = eig.smallest_retained / eig.largest_discarded;
    let ambiguity = ambiguity_from_phases(&base_phases, m_rf, array.spacing_ratio());
    let plan = build_disambiguation(&ambiguity, had)?;
    if plan.padded > 0 {
        warnings.push(Warning::PaddedCombiner { filled: plan.padded });
    }
    check_channels(stage_two, had.num_antennas(), "estimate_spc_mpm")?;
    let parts = split_columns(stage_two, plan.num_combiners())?;
    let resolution = resolve_ambiguity(&plan, &parts, &ambiguity)?;
    warnings.extend(resolution.warnings.iter().copied());
    Ok(SpcEstimate {
        estimate: Estimate {
            angles_deg: resolution.angles_deg.clone(),
            warnings,
            singular_gap: gap,
        },
        base_phases,
        ambiguity,
        resolution,
    })
}
