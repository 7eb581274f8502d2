use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lrp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("LRP_OUT_DIR")
        .output()
        .unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

#[test]
fn exponents_row_three_is_fourteen_ninths() {
    let dir = tempfile::tempdir().unwrap();
    let o = lrp(&["exponents", "--d", "1", "--s", "1.5", "--set", "n_max=15"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&dir.path().join("exponents.csv"));
    assert_eq!(r.len(), 16);
    let theta3: f64 = r[3][1].parse().unwrap();
    assert!((theta3 - 14.0 / 9.0).abs() < 1e-12);
    assert_eq!(r[3][4], "2");
    assert_eq!(r[6][4], "2");
    assert_eq!(r[7][4], "3");
}

#[test]
fn limit_curve_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let o = lrp(&["limit-curve"], dir.path());
    assert!(o.status.success());
    let r = rows(&dir.path().join("limit_curve.csv"));
    assert_eq!(r.len(), 101);
    let target = 0.5f64.powf(1.0 / (4.0f64 / 3.0).log2());
    for row in [&r[0], &r[100]] {
        let v: f64 = row[1].parse().unwrap();
        assert!((v - target).abs() < 1e-12);
    }
    assert!((target - 0.188231392503972).abs() < 1e-14);
}

#[test]
fn every_output_names_its_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let o = lrp(&["distances", "--radius", "50", "--beta", "2", "--set", "beta2=4"], dir.path());
    assert!(o.status.success());
    let config = fs::read(dir.path().join("config.txt")).unwrap();
    let hash = sha256_hex(&config);
    let first = fs::read_to_string(dir.path().join("distances.csv")).unwrap();
    assert_eq!(first.lines().next().unwrap(), format!("# config_hash={hash}"));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_hash"], hash.as_str());
    assert_eq!(manifest["command"], "distances");
    let r = rows(&dir.path().join("distances.csv"));
    assert_eq!(r.len(), 101);
    for row in &r {
        let (a, b): (u32, u32) = (row[1].parse().unwrap(), row[2].parse().unwrap());
        assert!(b <= a);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["estimate-phi", "--beta", "3", "--set", "radii=200,400", "--replicas", "5", "--seed", "9"];
    assert!(lrp(&args, a.path()).status.success());
    let mut with_jobs = args.to_vec();
    with_jobs.extend(["--jobs", "1"]);
    assert!(lrp(&with_jobs, b.path()).status.success());
    for name in ["phi_replicas.csv", "phi_summary.csv", "config.txt"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn config_file_and_overrides_compose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# sample run\nd = 2\ns = 3\nbeta=2\nradius=4\n").unwrap();
    let out = dir.path().join("out");
    let o = lrp(&["sample", "--config", cfg.to_str().unwrap(), "--set", "beta=3", "--seed", "5"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(text.contains("beta=3\n") && text.contains("d=2\n") && text.contains("seed=5\n"));
    let csv = fs::read_to_string(out.join("edges.csv")).unwrap();
    assert!(csv.contains("x1,x2,y1,y2\n"));
    assert!(csv.contains("generator=philox4x32-10/v1"));
}

#[test]
fn figure1_columns_are_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let o = lrp(&["figure1"], dir.path());
    assert!(o.status.success());
    let r = rows(&dir.path().join("figure1_distances.csv"));
    assert_eq!(r.len(), 2001);
    for row in &r {
        let (lo, hi): (u32, u32) = (row[1].parse().unwrap(), row[2].parse().unwrap());
        assert!(hi <= lo);
    }
    assert!(!rows(&dir.path().join("figure1_edges_beta5.csv")).is_empty());
}

#[test]
fn selfcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = lrp(&["selfcheck"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&dir.path().join("selfcheck.csv"));
    assert_eq!(r.len(), 4);
    assert!(r.iter().all(|row| row[1] == "pass"));
}

#[test]
fn configuration_errors_exit_two_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    for args in [
        vec!["exponents", "--set", "bogus=1"],
        vec!["exponents", "--s", "2.5"],
        vec!["sample", "--beta", "-1"],
        vec!["collapse", "--set", "betas=2"],
        vec!["distances", "--set", "source=999"],
        vec!["nonsense"],
    ] {
        let o = lrp(&args, &out);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
        assert!(err.starts_with("error["), "{err}");
        assert!(!out.exists());
    }
}

#[test]
fn resource_errors_exit_three_and_clean_up() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cap");
    let o = lrp(&["sample", "--radius", "100000", "--beta", "50", "--set", "memory_cap_mb=1"], &out);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error[resource]"));
    assert!(!out.exists());
}

#[test]
fn out_dir_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lrp"))
        .args(["limit-curve", "--set", "t_points=3"])
        .env("LRP_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(rows(&dir.path().join("limit_curve.csv")).len(), 3);
}
