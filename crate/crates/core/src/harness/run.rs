//! Monte-Carlo execution. Every trial draws from its own RNG stream derived
//! from `(seed, sweep index, trial index)`, so results do not depend on the
//! number of worker threads.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use super::config::{AngleSpec, ExperimentConfig, ScenarioKind, SweepAxis};
use crate::array_model::{
    angle_of, generate_noise, generate_signals, phase_of, rmse_varying, steering_matrix, ArrayConfig, RngSpec,
    SourceSet,
};
use crate::combiners::{build_codebook, build_pc_codebook, Architecture, CombinerSet, HadConfig};
use crate::crlb::{crlb_fd, crlb_spc, CrlbInputs};
use crate::error::{DoaError, Result};
use crate::estimators::{
    ambiguity_from_phases, disambiguation_count, estimate_fd_mpm, estimate_pmpm, estimate_spc_mpm, wrap_phase,
    PmpmPlan,
};
use crate::pencil::{run_pencil, PencilConfig};
use crate::CMatrix;

/// Records whose failure share exceeds this carry [`FAILED_RMSE`].
pub const MAX_FAILURE_RATE: f64 = 0.2;

/// Sentinel RMSE for records with too many failed trials.
pub const FAILED_RMSE: f64 = -1.0;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "PENCIL_DOA_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub sweep: f64,
    pub scenario: ScenarioKind,
    /// `None` for bound-only scenarios.
    pub rmse_deg: Option<f64>,
    pub root_crlb_deg: Option<f64>,
    pub trials: usize,
    pub failures: usize,
    pub wall_ms: f64,
}

/// Snapshot bookkeeping for one total budget `K~`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnapshotSplit {
    pub total: usize,
    /// Per-combiner snapshots for PMPM, `K~ / N`.
    pub pmpm_per_combiner: usize,
    /// Disambiguation snapshots `K~2`.
    pub stage_two: usize,
    /// Per-combiner snapshots for the SPC pencil, `(K~ - K~2) / N`.
    pub spc_per_combiner: usize,
}

impl SnapshotSplit {
    /// `K~2 = max(1, K~/divisor, G)`; the SPC pencil stage keeps at least one
    /// snapshot per combiner even when that overdraws a tiny budget.
    pub fn new(total: usize, num_combiners: usize, divisor: usize, min_stage_two: usize) -> Self {
        let stage_two = (total / divisor.max(1)).max(1).max(min_stage_two);
        let stage_one = total.saturating_sub(stage_two);
        Self {
            total,
            pmpm_per_combiner: total / num_combiners,
            stage_two,
            spc_per_combiner: (stage_one / num_combiners).max(1),
        }
    }
}

/// Everything fixed at one sweep point.
#[derive(Debug, Clone)]
pub struct PointSetup {
    pub index: usize,
    pub value: f64,
    pub array: ArrayConfig,
    pub angles: AngleSpec,
    pub snr_db: Vec<f64>,
    pub noiseless: bool,
    pub split: SnapshotSplit,
    pub fd_pencil: PencilConfig,
    pub spc_pencil: Option<PencilConfig>,
    pub had_pc: Option<HadConfig>,
    pub fc_plan: Option<PmpmPlan>,
    pub pc_plan: Option<PmpmPlan>,
    pub pc_codebook: Option<CombinerSet>,
    pub num_sources: usize,
}

impl PointSetup {
    fn num_combiners(&self) -> usize {
        self.had_pc.map_or(1, |h| h.num_combiners())
    }

    fn sources(&self, angles: Vec<f64>) -> Result<SourceSet> {
        let powers = if self.snr_db.len() == 1 {
            vec![10f64.powf(self.snr_db[0] / 10.0); angles.len()]
        } else if self.snr_db.len() == angles.len() {
            self.snr_db.iter().map(|s| 10f64.powf(s / 10.0)).collect()
        } else {
            return Err(DoaError::Config(format!(
                "field `snr_db`: {} values for {} sources",
                self.snr_db.len(),
                angles.len()
            )));
        };
        SourceSet::new(angles, powers)
    }
}

fn point_angles(cfg: &ExperimentConfig, value: f64) -> Result<AngleSpec> {
    match (cfg.sweep, &cfg.angles) {
        (SweepAxis::Theta, AngleSpec::Fixed(a)) => {
            let mut a = a.clone();
            if a.is_empty() {
                a.push(value);
            } else {
                a[0] = value;
            }
            Ok(AngleSpec::Fixed(a))
        }
        (SweepAxis::Theta, AngleSpec::Random { .. }) => {
            Err(DoaError::Config("field `sweep`: theta sweep needs fixed `angles`".into()))
        }
        (SweepAxis::Separation, AngleSpec::Fixed(a)) if !a.is_empty() => Ok(AngleSpec::Fixed(vec![a[0], a[0] - value])),
        (SweepAxis::Separation, _) => Err(DoaError::Config(
            "field `sweep`: separation sweep needs a fixed first angle".into(),
        )),
        (_, spec) => Ok(spec.clone()),
    }
}

fn validate_angles(spec: &AngleSpec) -> Result<usize> {
    match spec {
        AngleSpec::Fixed(a) => {
            if a.is_empty() {
                return Err(DoaError::Config("field `angles`: at least one angle is required".into()));
            }
            // duplicate and range checks happen in SourceSet
            SourceSet::new(a.clone(), vec![1.0; a.len()])?;
            Ok(a.len())
        }
        AngleSpec::Random {
            count,
            min_deg,
            max_deg,
            min_separation,
        } => {
            if *count == 0 {
                return Err(DoaError::Config("field `num_sources`: must be positive".into()));
            }
            if !(min_deg < max_deg) || *min_deg <= -90.0 || *max_deg >= 90.0 {
                return Err(DoaError::Config(format!(
                    "fields `theta_min`/`theta_max`: need -90 < {min_deg} < {max_deg} < 90"
                )));
            }
            if *min_separation * (*count as f64 - 1.0) >= max_deg - min_deg {
                return Err(DoaError::Config("field `min_separation`: too large for the angle range".into()));
            }
            Ok(*count)
        }
    }
}

/// Validates the whole configuration and resolves every sweep point.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Vec<PointSetup>> {
    if cfg.scenarios.is_empty() {
        return Err(DoaError::Config("field `scenarios`: at least one scenario is required".into()));
    }
    if cfg.trials == 0 {
        return Err(DoaError::Config("field `trials`: must be positive".into()));
    }
    if cfg.snr_db.is_empty() {
        return Err(DoaError::Config("field `snr_db`: at least one value is required".into()));
    }
    if cfg.stage_two_divisor == 0 {
        return Err(DoaError::Config("field `stage_two_divisor`: must be positive".into()));
    }
    let array = ArrayConfig::new(cfg.num_antennas, cfg.spacing_ratio)
        .map_err(|e| e.in_context("fields `num_antennas`/`spacing_ratio`"))?;
    let hybrid = cfg.scenarios.iter().any(|s| s.needs_hybrid());
    let partial = cfg.scenarios.iter().any(|s| s.needs_partially_connected());
    let (had_fc, had_pc) = if hybrid {
        let err = |e: DoaError| e.in_context("field `rf_chains`");
        (
            Some(HadConfig::new(Architecture::FullyConnected, cfg.num_antennas, cfg.rf_chains).map_err(err)?),
            Some(HadConfig::new(Architecture::PartiallyConnected, cfg.num_antennas, cfg.rf_chains).map_err(err)?),
        )
    } else {
        (None, None)
    };
    let fc_plan = had_fc.map(|h| build_codebook(&h).map(PmpmPlan::new)).transpose()?;
    let pc_plan = had_pc.map(|h| build_codebook(&h).map(PmpmPlan::new)).transpose()?;
    let pc_codebook = if partial { had_pc.map(|h| build_pc_codebook(&h)).transpose()? } else { None };

    let values = cfg.sweep_values();
    values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            let angles = point_angles(cfg, value)?;
            let num_sources = validate_angles(&angles)?;
            let snr_db = if cfg.sweep == SweepAxis::Snr { vec![value] } else { cfg.snr_db.clone() };
            if snr_db.len() != 1 && snr_db.len() != num_sources {
                return Err(DoaError::Config(format!(
                    "field `snr_db`: {} values for {num_sources} sources",
                    snr_db.len()
                )));
            }
            let total = if cfg.sweep == SweepAxis::Snapshots {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(DoaError::Config(format!("field `grid`: snapshot count {value} is not a positive integer")));
                }
                value as usize
            } else {
                cfg.snapshots
            };
            if total == 0 {
                return Err(DoaError::Config("field `snapshots`: must be positive".into()));
            }
            let n = had_pc.map_or(1, |h| h.num_combiners());
            let g = had_pc.map_or(1, |h| disambiguation_count(&h, num_sources));
            let split = SnapshotSplit::new(total, n, cfg.stage_two_divisor, g);
            if hybrid && split.pmpm_per_combiner == 0 {
                return Err(DoaError::Config(format!(
                    "field `snapshots`: {total} snapshots cannot cover {n} combiners"
                )));
            }
            let fd_pencil = match cfg.pencil_parameter {
                Some(xi) => PencilConfig::new(xi, num_sources, cfg.num_antennas),
                None => PencilConfig::with_default(num_sources, cfg.num_antennas),
            }
            .map_err(|e| e.in_context("field `pencil_parameter`"))?;
            let spc_pencil = if partial {
                Some(
                    match cfg.spc_pencil_parameter {
                        Some(xi) => PencilConfig::new(xi, num_sources, cfg.rf_chains),
                        None => PencilConfig::with_default(num_sources, cfg.rf_chains),
                    }
                    .map_err(|e| e.in_context("field `spc_pencil_parameter`"))?,
                )
            } else {
                None
            };
            Ok(PointSetup {
                index,
                value,
                array,
                angles,
                snr_db,
                noiseless: cfg.noiseless,
                split,
                fd_pencil,
                spc_pencil,
                had_pc,
                fc_plan: fc_plan.clone(),
                pc_plan: pc_plan.clone(),
                pc_codebook: pc_codebook.clone(),
                num_sources,
            })
        })
        .collect()
}

/// Per-trial stream root.
pub fn trial_rng(seed: u64, point: usize, trial: usize) -> RngSpec {
    RngSpec::new(seed).index(point as u64).index(trial as u64)
}

fn draw_angles(spec: &AngleSpec, rng: &RngSpec) -> Result<Vec<f64>> {
    match spec {
        AngleSpec::Fixed(a) => Ok(a.clone()),
        AngleSpec::Random {
            count,
            min_deg,
            max_deg,
            min_separation,
        } => {
            let mut g = rng.label("angles").rng();
            for _ in 0..10_000 {
                let mut a: Vec<f64> = (0..*count).map(|_| g.random_range(*min_deg..=*max_deg)).collect();
                a.sort_by(f64::total_cmp);
                if a.windows(2).all(|w| w[1] - w[0] >= *min_separation) {
                    return Ok(a);
                }
            }
            Err(DoaError::Config("could not draw separated angles".into()))
        }
    }
}

/// Received raw blocks `A S_n (+ Z_n)` for `n` segments of `k` snapshots.
fn receive_segments(
    a: &CMatrix,
    src: &SourceSet,
    k: usize,
    n: usize,
    periodic: bool,
    noiseless: bool,
    rng: &RngSpec,
) -> Result<Vec<CMatrix>> {
    let s = generate_signals(src, k, n, periodic, &rng.label("signal"))?;
    s.iter()
        .enumerate()
        .map(|(i, s)| {
            let clean = a * s;
            if noiseless {
                Ok(clean)
            } else {
                let z = generate_noise(a.nrows(), k, &rng.label("noise").index(i as u64))?;
                Ok(clean + z.samples)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct TrialOutcome {
    truth: Vec<f64>,
    estimate: Result<Vec<f64>>,
    /// Mean CRLB diagonal in rad^2, when the scenario has a bound.
    bound: Option<f64>,
}

fn bound_for(point: &PointSetup, scenario: ScenarioKind, src: &SourceSet) -> Option<f64> {
    if point.noiseless {
        return None;
    }
    let fd = |k: usize| crlb_fd(&CrlbInputs::fd(point.array, src.clone(), k));
    let b = match scenario {
        ScenarioKind::FdMpm | ScenarioKind::CrlbFd => fd(point.split.total),
        ScenarioKind::PmpmFc | ScenarioKind::PmpmPc | ScenarioKind::CrlbFdK => fd(point.split.pmpm_per_combiner),
        ScenarioKind::SpcMpm | ScenarioKind::CrlbSpc => {
            let codebook = point.pc_codebook.as_ref()?;
            crlb_spc(&CrlbInputs::with_combiners(
                point.array,
                src.clone(),
                point.split.spc_per_combiner,
                codebook.matrices.clone(),
            ))
        }
        ScenarioKind::FdMpmVirtual => return None,
    };
    b.ok().map(|m| m.entries.trace() / m.num_sources() as f64)
}

/// FD pencil on the `L`-element array with `M_RF`-fold spacing; the grating
/// lobe nearest the true phase is kept.
fn virtual_fd(point: &PointSetup, src: &SourceSet, rng: &RngSpec) -> Result<Vec<f64>> {
    let had = point.had_pc.ok_or_else(|| DoaError::Config("virtual array needs rf_chains".into()))?;
    let pencil = point.spc_pencil.ok_or_else(|| DoaError::Config("virtual array needs a pencil".into()))?;
    let l = had.rf_chains();
    let m_rf = had.subarray_len();
    let spacing = point.array.spacing_ratio();
    let mus: Vec<f64> = src.angles_deg().iter().map(|&t| phase_of(t, spacing)).collect();
    let a = CMatrix::from_fn(l, mus.len(), |row, col| {
        num_complex::Complex64::from_polar(1.0, row as f64 * m_rf as f64 * mus[col])
    });
    let k = point.split.spc_per_combiner;
    let x = receive_segments(&a, src, k, 1, false, point.noiseless, rng)?.remove(0);
    let (eig, _) = run_pencil(&x, &pencil)?;
    let base: Vec<f64> = eig.eigenvalues.iter().map(|nu| nu.arg() / m_rf as f64).collect();
    let amb = ambiguity_from_phases(&base, m_rf, spacing);
    let mut picked: Vec<f64> = Vec::with_capacity(mus.len());
    let mut used = vec![false; amb.num_sources()];
    // each true source claims the closest candidate of a distinct eigenvalue
    for &mu in &mus {
        let mut best: Option<(usize, f64, f64)> = None;
        for (r, cands) in amb.per_source.iter().enumerate() {
            if used[r] {
                continue;
            }
            for &c in cands {
                let d = wrap_phase(c - mu).abs();
                if best.is_none_or(|(_, bd, _)| d < bd) {
                    best = Some((r, d, c));
                }
            }
        }
        let (r, _, c) = best.ok_or(DoaError::EmptyInput("virtual array: no candidates"))?;
        used[r] = true;
        picked.push(angle_of(c, spacing));
    }
    picked.sort_by(f64::total_cmp);
    Ok(picked)
}

fn run_trial(point: &PointSetup, scenario: ScenarioKind, seed: u64, trial: usize) -> Result<TrialOutcome> {
    let rng = trial_rng(seed, point.index, trial);
    let truth = draw_angles(&point.angles, &rng)?;
    let src = point.sources(truth.clone())?;
    let bound = bound_for(point, scenario, &src);
    let a = steering_matrix(&point.array, &src)?.entries;
    let split = point.split;
    let estimate = match scenario {
        ScenarioKind::FdMpm => receive_segments(&a, &src, split.total, 1, false, point.noiseless, &rng)
            .and_then(|x| estimate_fd_mpm(&x[0], &point.fd_pencil, &point.array))
            .map(|e| e.angles_deg),
        ScenarioKind::PmpmFc | ScenarioKind::PmpmPc => {
            let plan = if scenario == ScenarioKind::PmpmFc { &point.fc_plan } else { &point.pc_plan };
            let plan = plan.as_ref().ok_or_else(|| DoaError::Config("PMPM needs rf_chains".into()))?;
            let n = plan.num_combiners();
            receive_segments(&a, &src, split.pmpm_per_combiner, n, true, point.noiseless, &rng)
                .and_then(|x| estimate_pmpm(&x, plan, &point.fd_pencil, &point.array))
                .map(|e| e.angles_deg)
        }
        ScenarioKind::SpcMpm => {
            let had = point.had_pc.ok_or_else(|| DoaError::Config("SPC needs rf_chains".into()))?;
            let pencil = point.spc_pencil.ok_or_else(|| DoaError::Config("SPC needs a pencil".into()))?;
            let n = point.num_combiners();
            (|| {
                let x = receive_segments(&a, &src, split.spc_per_combiner, n, false, point.noiseless, &rng)?;
                let x2 = receive_segments(&a, &src, split.stage_two, 1, false, point.noiseless, &rng.label("stage2"))?;
                estimate_spc_mpm(&x, &x2[0], &had, &pencil, &point.array)
            })()
            .map(|e| e.estimate.angles_deg)
        }
        ScenarioKind::FdMpmVirtual => virtual_fd(point, &src, &rng),
        ScenarioKind::CrlbFd | ScenarioKind::CrlbFdK | ScenarioKind::CrlbSpc => Ok(Vec::new()),
    };
    Ok(TrialOutcome { truth, estimate, bound })
}

fn root_bound(bounds: &[Option<f64>]) -> Option<f64> {
    let vals: Vec<f64> = bounds.iter().flatten().copied().collect();
    if vals.is_empty() || vals.len() != bounds.len() {
        return None;
    }
    Some((vals.iter().sum::<f64>() / vals.len() as f64).sqrt().to_degrees())
}

fn run_point(point: &PointSetup, scenario: ScenarioKind, cfg: &ExperimentConfig) -> Result<ResultRecord> {
    let start = Instant::now();
    let random = matches!(point.angles, AngleSpec::Random { .. });
    let record = if scenario.is_bound() {
        let draws = if random { cfg.trials } else { 1 };
        let bounds: Vec<Option<f64>> = (0..draws)
            .into_par_iter()
            .map(|t| {
                let rng = trial_rng(cfg.seed, point.index, t);
                let src = point.sources(draw_angles(&point.angles, &rng)?)?;
                Ok(bound_for(point, scenario, &src))
            })
            .collect::<Result<_>>()?;
        ResultRecord {
            sweep: point.value,
            scenario,
            rmse_deg: None,
            root_crlb_deg: root_bound(&bounds),
            trials: draws,
            failures: bounds.iter().filter(|b| b.is_none()).count(),
            wall_ms: 0.0,
        }
    } else {
        let outcomes: Vec<TrialOutcome> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(point, scenario, cfg.seed, t))
            .collect::<Result<_>>()?;
        let mut estimates = Vec::new();
        let mut truths: Vec<&[f64]> = Vec::new();
        let mut failures = 0;
        for o in &outcomes {
            match &o.estimate {
                Ok(e) if e.len() == o.truth.len() => {
                    estimates.push(e.clone());
                    truths.push(&o.truth);
                }
                _ => failures += 1,
            }
        }
        let rmse = if failures as f64 > MAX_FAILURE_RATE * cfg.trials as f64 || estimates.is_empty() {
            FAILED_RMSE
        } else {
            rmse_varying(&estimates, &truths)?
        };
        let bounds: Vec<Option<f64>> = outcomes.iter().map(|o| o.bound).collect();
        ResultRecord {
            sweep: point.value,
            scenario,
            rmse_deg: Some(rmse),
            root_crlb_deg: root_bound(&bounds),
            trials: cfg.trials,
            failures,
            wall_ms: 0.0,
        }
    };
    let wall_ms = if cfg.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    Ok(ResultRecord { wall_ms, ..record })
}

/// Worker count: `requested` if nonzero, else the environment variable, else
/// the machine default (0).
pub fn thread_count(requested: usize) -> usize {
    if requested > 0 {
        return requested;
    }
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

/// Runs every scenario at every sweep point. Records are ordered by sweep
/// point, then by scenario in configuration order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    let points = prepare(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(cfg.threads))
        .build()
        .map_err(|e| DoaError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        let mut records = Vec::with_capacity(points.len() * cfg.scenarios.len());
        for point in &points {
            for &scenario in &cfg.scenarios {
                records.push(run_point(point, scenario, cfg)?);
            }
        }
        Ok(records)
    })
}
