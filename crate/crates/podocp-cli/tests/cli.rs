//! End-to-end tests of the `podocp` binary: exit codes, artifact layout,
//! and the offline → online → validate round trip on coarse instances.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_podocp"));
    cmd.env_remove("PODOCP_OUT");
    cmd.env("RUST_LOG", "warn");
    cmd
}

fn scratch(label: &str) -> PathBuf {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let id = COUNTER.fetch_add(1, Ordering::Relaxed);
    let dir = std::env::temp_dir().join(format!(
        "podocp-cli-{}-{id}-{label}",
        std::process::id()
    ));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let out = cmd.output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// The single subdirectory of `root` whose name starts with `prefix`.
fn find_dir(root: &Path, prefix: &str) -> PathBuf {
    let mut hits: Vec<PathBuf> = fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .is_some_and(|n| n.to_string_lossy().starts_with(prefix))
        })
        .collect();
    assert_eq!(hits.len(), 1, "expected one {prefix}-* dir under {root:?}");
    hits.pop().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

const NS_CONFIG: &str = "\
problem = \"ns_steady\"
h = 0.5
n_train = 2
eps_tol = 0.0
n_max = 2
test_size = 2
n_list = [1, 2]
";

const STOKES_CONFIG: &str = "\
problem = \"stokes_td\"
h = 0.45
nt = 4
n_train = 2
eps_tol = 0.0
n_max = 2
test_size = 2
n_list = [2]
";

#[test]
fn usage_and_io_failures_use_the_documented_exit_codes() {
    // No subcommand: clap usage error.
    let (code, _, _) = run(&mut bin());
    assert_eq!(code, 2);

    // Unknown flag: clap usage error.
    let (code, _, _) = run(bin().args(["online", "--grid", "3"]));
    assert_eq!(code, 2);

    // Online without a model source: usage error from the tool itself.
    let (code, _, err) = run(bin().args(["online", "--mu", "1.0"]));
    assert_eq!(code, 2, "stderr: {err}");

    // Malformed --mu component.
    let (code, _, _) = run(bin().args(["online", "x.podc", "--mu", "1.0,abc"]));
    assert_eq!(code, 2);

    // Missing model file: I/O failure.
    let (code, _, err) = run(bin().args(["online", "/nonexistent/model.podc", "--mu", "1.0"]));
    assert_eq!(code, 4, "stderr: {err}");

    // Missing config file: I/O failure.
    let (code, _, _) = run(bin().args(["validate", "--config", "/nonexistent/c.toml"]));
    assert_eq!(code, 4);

    // Config that fails validation: config error.
    let root = scratch("badcfg");
    let cfg = write_config(&root, "problem = \"ns_steady\"\nn_train = 0\n");
    let (code, _, err) = run(bin().args(["offline", "--config"]).arg(&cfg));
    assert_eq!(code, 2, "stderr: {err}");
    fs::remove_dir_all(&root).unwrap();
}

#[test]
fn ns_round_trip_offline_online_validate() {
    let root = scratch("ns");
    let cfg = write_config(&root, NS_CONFIG);
    let out = root.join("runs");

    let (code, stdout, stderr) = run(bin()
        .args(["offline", "--jobs", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out));
    assert_eq!(code, 0, "offline failed:\n{stdout}\n{stderr}");
    assert!(stdout.contains("model persisted"), "stdout: {stdout}");

    let offline_dir = find_dir(&out, "offline-");
    for name in ["config.toml", "MANIFEST.json", "mesh.vtk", "snapshots.podc", "basis.podc", "model.podc"] {
        assert!(offline_dir.join(name).is_file(), "missing {name}");
    }
    let manifest = fs::read_to_string(offline_dir.join("MANIFEST.json")).unwrap();
    assert!(manifest.contains("\"complete\": true"), "manifest: {manifest}");
    let run_cfg = offline_dir.join("config.toml");

    // Plain online solve straight from the model container.
    let (code, stdout, stderr) = run(bin()
        .args(["online", "--mu", "1.1", "--config"])
        .arg(&run_cfg)
        .arg("--out")
        .arg(&out));
    assert_eq!(code, 0, "online failed:\n{stdout}\n{stderr}");
    assert!(stdout.contains("J_N = "), "stdout: {stdout}");

    // Parameter arity is checked against the model's problem.
    let (code, _, stderr) = run(bin()
        .args(["online", "--mu", "1.0,2.0", "--config"])
        .arg(&run_cfg)
        .arg("--out")
        .arg(&out));
    assert_eq!(code, 2, "stderr: {stderr}");

    // Truncated re-projection, truth comparison, and field export together.
    let online_out = root.join("online-runs");
    let (code, stdout, stderr) = run(bin()
        .args(["online", "--mu", "1.1", "--n", "1", "--compare-truth", "--export-vtk", "--config"])
        .arg(&run_cfg)
        .arg("--out")
        .arg(&online_out));
    assert_eq!(code, 0, "online -n failed:\n{stdout}\n{stderr}");
    assert!(stdout.contains("relative errors:"), "stdout: {stdout}");
    assert!(stdout.contains("N = 1 modes"), "stdout: {stdout}");
    let online_dir = find_dir(&online_out, "online-");
    assert!(online_dir.join("run.json").is_file());
    assert!(online_dir.join("truth.json").is_file());
    assert!(online_dir.join("comparison.json").is_file());
    let vtk_count = fs::read_dir(&online_dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "vtk")
        })
        .count();
    assert_eq!(vtk_count, 1, "steady problem exports one field file");

    // Validation sweep writes the CSV/JSON report set.
    let (code, stdout, stderr) = run(bin()
        .args(["validate", "--jobs", "2", "--config"])
        .arg(&run_cfg)
        .arg("--out")
        .arg(&out));
    assert_eq!(code, 0, "validate failed:\n{stdout}\n{stderr}");
    let validate_dir = find_dir(&out, "validate-");
    let names: Vec<String> = fs::read_dir(&validate_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    for stem in ["errors", "speedup", "eigen_decay"] {
        assert!(
            names.iter().any(|n| n.starts_with(&format!("ns_steady_{stem}_")) && n.ends_with(".csv")),
            "missing {stem} csv in {names:?}"
        );
    }
    assert!(
        names.iter().any(|n| n.starts_with("ns_steady_report_") && n.ends_with(".json")),
        "missing report json in {names:?}"
    );
    assert!(names.contains(&"config.toml".to_string()));

    fs::remove_dir_all(&root).unwrap();
}

#[test]
fn stokes_online_exports_three_time_slices() {
    let root = scratch("stokes");
    let cfg = write_config(&root, STOKES_CONFIG);
    let out = root.join("runs");

    let (code, stdout, stderr) = run(bin()
        .args(["offline", "--jobs", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out));
    assert_eq!(code, 0, "offline failed:\n{stdout}\n{stderr}");
    let run_cfg = find_dir(&out, "offline-").join("config.toml");

    let (code, stdout, stderr) = run(bin()
        .args(["online", "--mu", "0.5,1.5,1", "--export-vtk", "--config"])
        .arg(&run_cfg)
        .arg("--out")
        .arg(&out));
    assert_eq!(code, 0, "online failed:\n{stdout}\n{stderr}");
    let online_dir = find_dir(&out, "online-");
    let names: Vec<String> = fs::read_dir(&online_dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    for label in ["t0.05", "t0.5", "t1"] {
        assert!(
            names
                .iter()
                .any(|n| n.starts_with(&format!("stokes_td_fields_{label}_")) && n.ends_with(".vtk")),
            "missing {label} export in {names:?}"
        );
    }
    fs::remove_dir_all(&root).unwrap();
}

#[test]
fn mesh_command_honors_the_output_env_var() {
    let root = scratch("mesh");
    let cfg = write_config(&root, NS_CONFIG);
    let out = root.join("from-env");

    let (code, stdout, stderr) = run(bin()
        .env("PODOCP_OUT", &out)
        .args(["mesh", "--config"])
        .arg(&cfg));
    assert_eq!(code, 0, "mesh failed:\n{stdout}\n{stderr}");
    let mesh_dir = find_dir(&out, "mesh-");
    assert!(mesh_dir.join("mesh.vtk").is_file());
    assert!(mesh_dir.join("mesh.txt").is_file());
    assert!(mesh_dir.join("config.toml").is_file());

    fs::remove_dir_all(&root).unwrap();
}
