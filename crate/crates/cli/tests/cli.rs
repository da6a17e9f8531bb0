use rto_cli::config::{self, Scale};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn rto(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rto")).args(args).output().unwrap()
}

/// A shipped config with some fields replaced, written to `dir`.
fn patched(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(configs().join(name)).unwrap()).unwrap();
    edit(&mut v);
    let path = dir.join(name);
    std::fs::write(&path, v.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn shipped_configs_parse_and_reduced_ones_build() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        let cfg = config::parse(&std::fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{name}: {e:#}"));
        if name.ends_with("_reduced.json") {
            assert_eq!(cfg.scale, Scale::Reduced, "{name}");
            cfg.build().unwrap_or_else(|e| panic!("{name}: {e:#}"));
        } else {
            assert_eq!(cfg.scale, Scale::Native, "{name}");
        }
        cfg.opt_config().unwrap();
        n += 1;
    }
    assert_eq!(n, 61);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = patched(dir.path(), "compression_block_det_reduced.json", |v| v["design"]["filter_radus"] = 3.into());
    let out = rto(&["analyze", "--config", &bad, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 1") && err.contains("filter_radus"), "{err}");
    let neg = patched(dir.path(), "compression_block_det_reduced.json", |v| v["mesh"]["lx"] = (-1.0).into());
    assert_eq!(rto(&["analyze", "--config", &neg, "--out", dir.path().to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn solver_failure_exits_with_3_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = patched(dir.path(), "compression_block_det_reduced.json", |v| {
        v["solver"] = serde_json::json!({"max_iter": 0});
    });
    let out_dir = dir.path().join("out");
    let out = rto(&["optimize", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint.csv"));
    assert!(out_dir.join("checkpoint.csv").exists());
}

#[test]
fn optimize_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = patched(dir.path(), "compression_block_rd1_reduced.json", |v| {
        v["design"]["max_iterations"] = 6.into();
        v["run"]["snapshot_interval"] = 5.into();
    });
    let out = dir.path().join("out");
    let st = rto(&["optimize", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    for f in ["history.csv", "design.csv", "design.pgm", "mesh.vtk", "snapshots/iter_00005.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let hist = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(hist.lines().count(), 7);
    assert!(hist.starts_with("iter,p,p_l,beta,c_max_this_iter,objective,mean,std,constraint\n"));
    let pgm = std::fs::read(out.join("design.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n40 40\n255\n"));
    assert_eq!(pgm.len(), b"P5\n40 40\n255\n".len() + 1600);

    // an eigenmode sweep on the saved design
    let design = out.join("design.csv");
    let st = rto(&[
        "evaluate", "--config", &cfg, "--out", out.to_str().unwrap(), "--design", design.to_str().unwrap(),
        "--source", "load", "--eigenmode", "1", "--coeff-range", "-10:10:21",
    ]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let curve = std::fs::read_to_string(out.join("evaluate.csv")).unwrap();
    let rows: Vec<&str> = curve.lines().collect();
    assert_eq!(rows.len(), 22);
    assert!(rows[1].starts_with("-10.0,") && rows[21].starts_with("10.0,"));
    // the material source does not exist in this config
    let st = rto(&[
        "evaluate", "--config", &cfg, "--out", out.to_str().unwrap(), "--design", design.to_str().unwrap(),
        "--source", "material", "--eigenmode", "1", "--coeff-range", "0:1:2",
    ]);
    assert_eq!(st.status.code(), Some(2));
}

#[test]
fn verification_csvs_have_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = patched(dir.path(), "verification_beam.json", |v| {
        v["run"]["mc_samples"] = 200.into();
        v["run"]["sigma_p_list"] = serde_json::json!([2.0]);
    });
    let out = dir.path().join("out");
    let st = rto(&["uq-verify", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "11"]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let csv = std::fs::read_to_string(out.join("uq_verify.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "sigma_P,pert_mean,pert_std,mc_mean,mc_std,rel_err_mean_pct,rel_err_std_pct,n_samples,seed");
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("2.0,") && rows[1].ends_with(",200,11"));

    let st = rto(&["grad-verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let csv = std::fs::read_to_string(out.join("grad_verify.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "element,g_adjoint,g_cdm,rel_err");
    assert_eq!(rows.len(), 201);
    let worst = rows[1..].iter().map(|r| r.rsplit(',').next().unwrap().parse::<f64>().unwrap()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}
