//! Built-in experiment configurations at desk scale (200 trials).

use super::config::{AngleSpec, ExperimentConfig, ScenarioKind, SweepAxis};
use crate::error::{DoaError, Result};

pub const PRESET_NAMES: [&str; 4] = ["example1", "example2", "example3", "example4"];

pub const DESK_TRIALS: usize = 200;

/// Keeps random DoAs this far from endfire.
pub const ENDFIRE_MARGIN_DEG: f64 = 1.8;

fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((stop - start) / step).round() as usize;
    (0..=n).map(|i| start + i as f64 * step).collect()
}

/// One-line summaries for `list-presets`.
pub fn list_presets() -> Vec<(&'static str, &'static str)> {
    vec![
        ("example1", "M=32, L=8, K~=128, 20 dB, theta sweep -80..80 deg"),
        ("example2", "M=64, L=8, theta=30 deg, K~=256 (224/32 split), SNR sweep -10..20 dB"),
        ("example3", "M=128, L=16, K~=64, 10 dB, theta_1=-15 deg, separation 0.3/0.5/2 deg"),
        ("example4", "M=32, L=8, 10 dB, random theta, K~ in 4..512"),
    ]
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    use ScenarioKind::*;
    let base = ExperimentConfig {
        name: name.to_string(),
        trials: DESK_TRIALS,
        ..ExperimentConfig::default()
    };
    let cfg = match name {
        "example1" => ExperimentConfig {
            scenarios: vec![PmpmFc, PmpmPc, SpcMpm, FdMpm, CrlbFdK, CrlbFd, CrlbSpc],
            num_antennas: 32,
            rf_chains: 8,
            angles: AngleSpec::Fixed(vec![0.0]),
            snr_db: vec![20.0],
            snapshots: 128,
            sweep: SweepAxis::Theta,
            grid: grid(-80.0, 80.0, 10.0),
            ..base
        },
        "example2" => ExperimentConfig {
            scenarios: vec![PmpmFc, PmpmPc, SpcMpm, FdMpm, FdMpmVirtual, CrlbFdK, CrlbFd, CrlbSpc],
            num_antennas: 64,
            rf_chains: 8,
            angles: AngleSpec::Fixed(vec![30.0]),
            snr_db: vec![10.0],
            snapshots: 256,
            sweep: SweepAxis::Snr,
            grid: grid(-10.0, 20.0, 2.0),
            ..base
        },
        "example3" => ExperimentConfig {
            scenarios: vec![PmpmFc, PmpmPc, SpcMpm, FdMpm, CrlbFdK, CrlbFd, CrlbSpc],
            num_antennas: 128,
            rf_chains: 16,
            angles: AngleSpec::Fixed(vec![-15.0, -17.0]),
            snr_db: vec![10.0],
            snapshots: 64,
            sweep: SweepAxis::Separation,
            grid: vec![0.3, 0.5, 2.0],
            ..base
        },
        "example4" => ExperimentConfig {
            scenarios: vec![PmpmFc, SpcMpm, CrlbFdK, CrlbSpc],
            num_antennas: 32,
            rf_chains: 8,
            angles: AngleSpec::Random {
                count: 1,
                min_deg: -90.0 + ENDFIRE_MARGIN_DEG,
                max_deg: 90.0 - ENDFIRE_MARGIN_DEG,
                min_separation: 0.0,
            },
            snr_db: vec![10.0],
            snapshots: 128,
            sweep: SweepAxis::Snapshots,
            grid: vec![4.0, 8.0, 32.0, 128.0, 512.0],
            ..base
        },
        other => {
            return Err(DoaError::UnknownPreset(other.to_string()));
        }
    };
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::prepare;

    #[test]
    fn every_preset_validates() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.trials, DESK_TRIALS);
            assert!(!prepare(&cfg).unwrap().is_empty(), "{name}");
        }
        assert_eq!(list_presets().len(), PRESET_NAMES.len());
    }

    #[test]
    fn documented_settings() {
        let e1 = preset("example1").unwrap();
        assert_eq!((e1.num_antennas, e1.rf_chains, e1.snapshots), (32, 8, 128));
        assert_eq!(e1.sweep, SweepAxis::Theta);
        assert_eq!(e1.grid.len(), 17);

        let e2 = prepare(&preset("example2").unwrap()).unwrap();
        let s = e2[0].split;
        assert_eq!((s.spc_per_combiner * 8, s.stage_two), (224, 32));
        assert!(e2.iter().any(|p| p.value == 10.0));

        let e3 = preset("example3").unwrap();
        assert_eq!((e3.num_antennas, e3.rf_chains, e3.snapshots), (128, 16, 64));
        assert_eq!(e3.grid, vec![0.3, 0.5, 2.0]);
        let pts = prepare(&e3).unwrap();
        assert_eq!(pts[0].angles, AngleSpec::Fixed(vec![-15.0, -15.3]));

        assert!(matches!(preset("example5"), Err(DoaError::UnknownPreset(_))));
    }
}
