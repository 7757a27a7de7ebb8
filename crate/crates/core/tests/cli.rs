use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entropy-lab"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("entropy-lab-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], config: Option<(&Path, &str)>) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    if let Some((path, text)) = config {
        fs::write(path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

#[test]
fn list_prints_eleven_entries() {
    let out = bin().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 11);
    assert!(lines.iter().any(|l| l.starts_with("all — ")));
    assert!(lines.iter().any(|l| l.starts_with("mu-curve — ")));
}

#[test]
fn config_errors_exit_two_without_outputs() {
    let dir = scratch("config");
    for (i, text) in [
        "experiment = monotonicity\ntime.dt = -0.1\n",
        "experiment = monotonicity\nbogus.key = 1\n",
        "experiment = monotonicity\nsamples.count = 3\n",
        "experiment = symmetrize\nmanifold.kind = sphere\n",
        "experiment = pointwise\n",
    ]
    .iter()
    .enumerate()
    {
        let out_dir = dir.join(format!("out{i}"));
        let requested = if i == 4 { "growth" } else { text.split('\n').next().unwrap().trim_start_matches("experiment = ") };
        let out = run(&["run", requested, "--out", out_dir.to_str().unwrap()], Some((&dir.join("c.cfg"), text)));
        assert_eq!(out.status.code(), Some(2), "{text}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out_dir.exists(), "{text}");
    }
    let missing = run(&["run", "monotonicity", "--config", dir.join("absent.cfg").to_str().unwrap()], None);
    assert_eq!(missing.status.code(), Some(2));
    let unknown = run(&["run", "nothing"], None);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn monotonicity_writes_deterministic_outputs() {
    let dir = scratch("mono");
    let cfg = "experiment = monotonicity\nmanifold.kind = sphere\ngrid.n0 = 64\ngrid.n1 = 8\ntime.t0 = 0.05\ntime.dt = 0.01\ntime.t_end = 1.05\n";
    let mut snapshots = Vec::new();
    for k in 0..2 {
        let out_dir = dir.join(format!("run{k}"));
        let out = run(&["run", "monotonicity", "--out", out_dir.to_str().unwrap(), "--seed", "3"], Some((&dir.join("m.cfg"), cfg)));
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let files: Vec<Vec<u8>> = ["w.csv", "w.svg", "manifest.txt"].iter().map(|f| fs::read(out_dir.join(f)).unwrap()).collect();
        snapshots.push(files);
    }
    assert_eq!(snapshots[0], snapshots[1]);

    let csv = String::from_utf8(snapshots[0][0].clone()).unwrap();
    assert!(!csv.contains('\r'));
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,w,nash_term,dirichlet_term,predicted_dwdt,boundary_term,nonincreasing");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 101);
    assert!(rows.iter().all(|r| r[6] == "1"));
    let w: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(w.windows(2).all(|p| p[1] <= p[0] + 1e-8));
    assert!(rows[0][1].contains('e') && rows[0][1].split('e').next().unwrap().trim_start_matches('-').len() == 18);

    let svg = String::from_utf8(snapshots[0][1].clone()).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains(r#"width="800" height="600""#));
    assert_eq!(svg.matches("<svg").count(), 1);

    let manifest = String::from_utf8(snapshots[0][2].clone()).unwrap();
    assert!(manifest.starts_with("experiment = monotonicity\n"));
    assert!(manifest.contains("seed = 3") && manifest.contains("grid.n0 = 64") && manifest.contains("status = pass"));
    assert!(manifest.contains(&format!("version = {}", env!("CARGO_PKG_VERSION"))));
}

#[test]
fn failed_checks_exit_one_with_marker() {
    let dir = scratch("fail");
    let out_dir = dir.join("out");
    let cfg = "experiment = dissipation-match\nmanifold.kind = circle\ntolerance.relerr = 1e-12\n";
    let out = run(&["run", "dissipation-match", "--out", out_dir.to_str().unwrap()], Some((&dir.join("d.cfg"), cfg)));
    assert_eq!(out.status.code(), Some(1));
    let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.starts_with("FAILED\n"));
    assert!(manifest.contains("base_relerr = FAIL"));
    assert!(out_dir.join("dissipation.csv").exists());
}

#[test]
fn thread_cap_does_not_change_results() {
    let dir = scratch("threads");
    let cfg = "experiment = symmetrize\ngrid.n0 = 128\ngrid.n1 = 128\nsamples.count = 6\n";
    let cfg_path = dir.join("s.cfg");
    fs::write(&cfg_path, cfg).unwrap();
    let mut tables = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.join(format!("t{threads}"));
        let out = bin()
            .env("ENTROPY_LAB_THREADS", threads)
            .args(["run", "symmetrize", "--seed", "5", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        tables.push(fs::read(out_dir.join("samples.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
}
