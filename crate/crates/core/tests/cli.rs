use std::process::Command;

fn aniscale() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_aniscale"));
    c.env_remove("ANISCALE_OUT");
    c
}

#[test]
fn help_lists_every_flag() {
    let out = aniscale().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in [
        "--config",
        "--regime",
        "--upsilon",
        "--mu",
        "--ell",
        "--gamma-grid",
        "--lambda-grid",
        "--replicas",
        "--law",
        "--seed",
        "--mode",
        "--out",
        "--tol",
        "--threads",
    ] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
    for cmd in ["predict", "kappa", "oracle", "synth", "scan", "report"] {
        assert!(text.contains(cmd));
    }
}

#[test]
fn exit_codes() {
    let code = |args: &[&str]| {
        aniscale()
            .args(args)
            .output()
            .unwrap()
            .status
            .code()
            .unwrap()
    };
    assert_eq!(
        code(&["predict", "--regime", "lrd", "--upsilon", "0.5", "1.2"]),
        0
    );
    assert_eq!(
        code(&[
            "predict",
            "--regime",
            "lrd",
            "--upsilon",
            "0.5",
            "1.2",
            "--frobnicate"
        ]),
        2
    );
    assert_eq!(code(&["predict", "--regime", "lrd"]), 2);
    assert_eq!(
        code(&[
            "predict",
            "--regime",
            "lrnd2",
            "--upsilon",
            "1",
            "0.8",
            "--mu",
            "0.3"
        ]),
        4
    );
    assert_eq!(code(&["predict", "--config", "/nonexistent/run.toml"]), 2);
}

#[test]
fn predict_outputs() {
    let out = aniscale()
        .args(["predict", "--regime", "lrd", "--upsilon", "0.5", "1.2"])
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let g0 = v["result"]["gamma0"].as_f64().unwrap();
    assert!((g0 - 0.416667).abs() < 1e-6);
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);

    let out = aniscale()
        .args([
            "predict",
            "--regime",
            "hyperbolic",
            "--upsilon",
            "0.4",
            "-0.2",
        ])
        .output()
        .unwrap();
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["transition"], false);

    let out = aniscale()
        .args([
            "predict",
            "--regime",
            "lrnd2",
            "--upsilon",
            "1",
            "0.8",
            "--mu",
            "0.3",
        ])
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("υ₁ ≠ 1"));
}

#[test]
fn config_file_and_env_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[model]\nregime = \"nd\"\nupsilon1 = 0.5\nupsilon2 = 0.5\n\n[run]\ngammas = [2.0]\nlambdas = [8.0, 16.0]\n",
    )
    .unwrap();
    let env_out = dir.path().join("env");
    let st = aniscale()
        .args([
            "oracle",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().join("flag").to_str().unwrap(),
        ])
        .env("ANISCALE_OUT", &env_out)
        .status()
        .unwrap();
    assert!(st.success());
    assert!(env_out.join("convergence.csv").exists());
    assert!(!dir.path().join("flag").exists());

    std::fs::write(
        &cfg,
        "[model]\nregime = \"nd\"\nupsilon1 = 0.5\nupsilon2 = 0.5\nbogus = 1\n",
    )
    .unwrap();
    assert_eq!(
        aniscale()
            .args(["predict", "--config", cfg.to_str().unwrap()])
            .status()
            .unwrap()
            .code(),
        Some(2)
    );
}

#[test]
fn synth_and_scan_byte_identical_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let run = |cmd: &str, threads: &str, sub: &str| {
        let out = dir.path().join(sub);
        let st = aniscale()
            .args([
                cmd,
                "--regime",
                "lrd",
                "--upsilon",
                "0.5",
                "0.5",
                "--seed",
                "5",
                "--threads",
                threads,
            ])
            .args([
                "--lambda-grid",
                "8,16,32,64",
                "--gamma-grid",
                "0.5,1,1.5,2,2.5,3",
                "--replicas",
                "2",
                "--law",
                "rademacher",
            ])
            .args(["--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(st.success());
        out
    };
    let a = run("synth", "1", "s1");
    let b = run("synth", "3", "s3");
    for f in [
        "field_r00000.f64",
        "field_r00001.f64",
        "field_r00001.json",
        "synth.json",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let a = run("scan", "1", "c1");
    let b = run("scan", "2", "c2");
    for f in ["scan.csv", "scan.json", "scan.gp"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let rep = aniscale()
        .args(["report", "--out", a.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(rep.status.success());
    assert!(String::from_utf8_lossy(&rep.stdout).contains("overall"));
}
