use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hodge_cli::{run_scatter, run_verify, RunConfig};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn hodge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hodge")).args(args).output().unwrap()
}

fn small(psi: &str, extra: &str) -> String {
    format!(
        "tasks = [\"verify\", \"scatter\"]\n\
         [manifold]\nm = 2\nb = 0.0\nf = \"1\"\nr_max = 10.0\ncross_section = {{ kind = \"circle\" }}\n\
         [conformal]\npsi = \"{psi}\"\n\
         [numerics]\nseed = 3\nfiber_samples = 100\n[numerics.grid]\nnr = 40\nntheta = 8\nlevels = 2\n{extra}"
    )
}

fn json(dir: &Path, task: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{task}.json"))).unwrap()).unwrap()
}

#[test]
fn shipped_configs_round_trip() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let c = RunConfig::load(&p).unwrap();
            let again = RunConfig::from_toml(&c.to_toml()).unwrap();
            assert_eq!(again, c, "{}", p.display());
            let raw: toml::Value = toml::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
            let echo: toml::Value = toml::from_str(&c.to_toml()).unwrap();
            // Every field written in the file survives re-emission unchanged.
            fn covered(a: &toml::Value, b: &toml::Value) -> bool {
                match (a, b) {
                    (toml::Value::Table(x), toml::Value::Table(y)) => x.iter().all(|(k, v)| y.get(k).is_some_and(|w| covered(v, w))),
                    (toml::Value::Integer(i), toml::Value::Float(f)) => *i as f64 == *f,
                    _ => a == b,
                }
            }
            assert!(covered(&raw, &echo), "{}", p.display());
            n += 1;
        }
    }
    assert!(n >= 5);
}

#[test]
fn zero_psi_verify_is_exact() {
    let c = RunConfig::from_toml(&small("0", "")).unwrap();
    let r = run_verify(&c).unwrap();
    assert!(r.pass, "{:#?}", r.failures().collect::<Vec<_>>());
    for name in ["d_squared", "codifferential_convergence", "dirac_commutator_convergence"] {
        let ch = r.checks.iter().find(|c| c.name == name).unwrap();
        assert_eq!(ch.value, Some(0.0), "{name}");
    }
}

#[test]
fn bump_verify_reports_orders() {
    let c = RunConfig::from_toml(&small("0.4*bump((r - 5)/3)", "").replace("levels = 2", "levels = 3")).unwrap();
    let r = run_verify(&c).unwrap();
    assert!(r.pass, "{:#?}", r.failures().collect::<Vec<_>>());
    let rows = r.outputs["codifferential"]["data"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[1..].iter().all(|row| row["order"].as_f64().unwrap() >= 0.9));
    assert_eq!(r.outputs["codifferential"]["provenance"], "probe-estimate");
    let csv = &r.artifacts.iter().find(|a| a.name == "codifferential_convergence.csv").unwrap().contents;
    assert!(csv.starts_with("level,nr,ntheta,dr,residual,order\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn every_check_has_provenance_and_failures_have_reasons() {
    let c = RunConfig::from_toml(&small("0.3", "")).unwrap();
    let r = run_scatter(&c).unwrap();
    assert!(!r.pass);
    let ch = &r.checks[0];
    assert_eq!(ch.name, "scattering_integral");
    assert!(r.failures().all(|c| c.reason.is_some()));
    let v = serde_json::to_value(&r).unwrap();
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["provenance"].is_string()));
    assert_eq!(v["checks"][0]["reason"], "divergent");
    assert_eq!(v["outputs"]["deviation"]["data"]["tail"]["kind"], "divergent");
}

#[test]
fn inconclusive_and_contaminated_are_distinct() {
    let c = RunConfig::from_toml(&small("0.1*(1 + sin(r))/r^2", "")).unwrap();
    let r = run_scatter(&c).unwrap();
    assert_eq!(r.checks[0].reason, Some(hodge_cli::ReasonCode::InconclusiveTail));

    let wave = "[numerics.wave]\nr_max = 30.0\nnr = 120\ncenter = 5.0\nwidth = 1.5\nschedule = [10.0, 40.0]\nlambda_max = 0.6\nramp = 0.15\n";
    let c = RunConfig::from_toml(&small("0.4*bump((r - 5)/3)", wave)).unwrap();
    let r = run_scatter(&c).unwrap();
    let w = r.checks.iter().find(|c| c.name == "wave_operator").unwrap();
    assert_eq!(w.reason, Some(hodge_cli::ReasonCode::Contaminated));
    assert!(w.detail.contains("boundary mass fraction"));
}

#[test]
fn binary_exit_codes_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, small("0.4*bump((r - 5)/3)", "")).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg_s = cfg.to_str().unwrap();
    let out = hodge(&["verify", "--config", cfg_s, "--out", a.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let out = hodge(&["verify", "--config", cfg_s, "--out", b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "verify.json"), read(&b, "verify.json"));
    assert_eq!(read(&a, "codifferential_convergence.csv"), read(&b, "codifferential_convergence.csv"));

    let out = hodge(&["verify", "--config", cfg_s, "--out", b.to_str().unwrap(), "--seed", "5", "--grid-levels", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&b, "verify");
    assert_eq!(v["config"]["numerics"]["seed"], 5);
    assert_eq!(v["outputs"]["codifferential"]["data"].as_array().unwrap().len(), 3);
    assert_ne!(v["run_id"], json(&a, "verify")["run_id"]);

    let out = hodge(&["scatter", "--config", cfg_s, "--out", a.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    std::fs::write(&cfg, small("0.3", "")).unwrap();
    let out = hodge(&["scatter", "--config", cfg_s, "--out", a.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL scattering_integral [divergent]"));
}

#[test]
fn malformed_configs_are_diagnosed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let out_dir = dir.path().join("o");
    let run = |src: &str| {
        std::fs::write(&cfg, src).unwrap();
        let o = hodge(&["verify", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        (o.status.code(), String::from_utf8_lossy(&o.stderr).into_owned())
    };
    let (code, err) = run(&small("0.4*bump((r - 5)/3)", "").replace("nr = 40", "nr = \"twenty\""));
    assert_eq!(code, Some(2));
    assert!(err.contains("line") && err.contains("nr"), "{err}");
    let (code, err) = run(&small("exp(", ""));
    assert_eq!(code, Some(2));
    assert!(err.contains("conformal.psi"), "{err}");
    let (code, err) = run(&small("0", "").replace("[\"verify\", \"scatter\"]", "[\"scatter\"]"));
    assert_eq!(code, Some(2));
    assert!(err.contains("tasks"), "{err}");
    let (code, err) = run(&small("0", "").replace("b = 0.0", "b = 0.0\nwarp = 1"));
    assert_eq!(code, Some(2));
    assert!(err.contains("warp"), "{err}");
    assert!(!out_dir.exists());
}
