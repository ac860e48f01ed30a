use std::process::Command;

use pencil_doa::harness::HEADER;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pencil-doa"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: &str = "\
# two sources, three SNR points
scenarios = fd_mpm, pmpm_pc, crlb_fd
num_antennas = 16
rf_chains = 4
angles = -20, 25
snapshots = 32
sweep = snr
grid = 0, 10, 20
trials = 6
seed = 11
timing = false
";

#[test]
fn list_presets_names_all_four() {
    let text = run_ok(bin().arg("list-presets"));
    for name in ["example1", "example2", "example3", "example4"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{text}");
    }
}

#[test]
fn run_writes_csv_to_stdout_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    std::fs::write(&cfg, SMALL).unwrap();
    let stdout = run_ok(bin().arg("run").arg("--config").arg(&cfg));
    let lines: Vec<&str> = stdout.split('\n').collect();
    assert_eq!(lines[0], HEADER);
    // 3 points x 3 scenarios, then the trailing empty piece after the last LF
    assert_eq!(lines.len(), 1 + 9 + 1);
    assert_eq!(*lines.last().unwrap(), "");
    assert!(!stdout.contains('\r'));
    for line in &lines[1..10] {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 7, "{line}");
        match f[1] {
            "crlb_fd" => assert!(f[2].is_empty() && !f[3].is_empty()),
            "fd_mpm" | "pmpm_pc" => {
                assert!(f[2].parse::<f64>().unwrap() >= 0.0);
                assert_eq!(f[4], "6");
            }
            other => panic!("unexpected scenario {other}"),
        }
        assert_eq!(f[6], "0.00000000");
    }

    let out = dir.path().join("small.csv");
    run_ok(bin().arg("run").arg("--config").arg(&cfg).arg("--out").arg(&out));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), stdout);
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    std::fs::write(&cfg, SMALL).unwrap();
    let base = run_ok(bin().arg("run").arg("-c").arg(&cfg));
    let reseeded = run_ok(bin().args(["run", "--seed", "12", "-c"]).arg(&cfg));
    assert_ne!(base, reseeded);
    let text = run_ok(bin().args(["run", "--trials", "3", "--grid=-5", "--scenarios", "fd_mpm", "-c"]).arg(&cfg));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("-5.00000000,fd_mpm,"));
    assert!(lines[1].contains(",3,"));
}

#[test]
fn crlb_subcommand_emits_bounds_only() {
    let text = run_ok(bin().args([
        "crlb",
        "--num-antennas",
        "16",
        "--rf-chains",
        "4",
        "--sweep",
        "snapshots",
        "--grid",
        "16,64",
    ]));
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert!(r[1].starts_with("crlb_"));
        assert!(r[2].is_empty());
        assert!(r[3].parse::<f64>().unwrap() > 0.0);
    }
    // four times the snapshots halves the root bound
    let fd: Vec<f64> = rows.iter().filter(|r| r[1] == "crlb_fd").map(|r| r[3].parse().unwrap()).collect();
    assert!((fd[0] / fd[1] - 2.0).abs() < 1e-6);
}

#[test]
fn preset_accepts_overrides() {
    let text = run_ok(bin().args([
        "preset",
        "example4",
        "--trials",
        "4",
        "--grid",
        "32",
        "--timing",
        "false",
    ]));
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.starts_with("32.0000000,")));
}

#[test]
fn errors_name_the_field_and_fail() {
    let out = bin().args(["run", "--rf-chains", "5", "--scenarios", "spc_mpm"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("rf_chains"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "num_antennas = 16\nfrobnicate = 3\n").unwrap();
    let out = bin().arg("run").arg("-c").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("frobnicate"), "{err}");

    let out = bin().args(["run", "-c", "/nonexistent/file.cfg"]).output().unwrap();
    assert!(!out.status.success());

    let out = bin().args(["preset", "example9"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn thread_env_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    std::fs::write(&cfg, SMALL.replace("fd_mpm, pmpm_pc, crlb_fd", "pmpm_fc, spc_mpm")).unwrap();
    let one = run_ok(bin().env("PENCIL_DOA_THREADS", "1").arg("run").arg("-c").arg(&cfg));
    let four = run_ok(bin().env("PENCIL_DOA_THREADS", "4").arg("run").arg("-c").arg(&cfg));
    assert_eq!(one, four);
}
