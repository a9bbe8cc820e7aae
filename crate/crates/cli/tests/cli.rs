use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use erwlab::config::{ConfigFile, Experiment, ExperimentConfig, Overrides};
use erwlab::manifest::{run, RunManifest, MANIFEST_FILE};
use erwlab::output::csv_body;
use erwlab_core::io::read_trajectory_csv;
use proptest::prelude::*;

fn erwlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_erwlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"
seed = 11

[simulate]
alpha = 0.4
n = 300
walkers = 12
checkpoints = 6

[oracle]
alpha = -0.25
m = 4
events = 5

[kernels]
k_max = 64
n = 16
l1_samples = 500
table_k = 6

[scaling]
alphas = [0.0, 0.75]
n_min = 10
n_max = 400
points = 6
walks = 60
stability_n = 100
stability_walks = 60
a_grid = [1.0]

[recurrence]
second_moment_ns = [16, 32]
second_moment_samples = 200
alphas = [0.3]
window_ns = [27]
window_samples = 300
triadic = true
j_min = 2
j_max = 3
j_delta = 2
prefixes = 10
pilot_continuations = 50
max_continuations = 200000

[contiguity]
n = 64
calibration_samples = 300
windows = 300
checkpoints = 4
bound_samples = 400
"#;

#[test]
fn every_experiment_writes_hashed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for e in Experiment::ALL {
        let out = dir.path().join(e.name());
        let o = erwlab(&[e.name(), "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(
            o.status.success(),
            "{e}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let manifest = RunManifest::load(&out.join(MANIFEST_FILE)).unwrap();
        assert_eq!(manifest.experiment, e);
        assert!(!manifest.outputs.is_empty());
        for f in &manifest.outputs {
            let text = fs::read_to_string(out.join(&f.name)).unwrap();
            assert!(
                text.contains(&manifest.config_hash),
                "{} lacks the config hash",
                f.name
            );
            if f.name.ends_with(".csv") {
                assert!(text.starts_with("# erwlab "));
                assert!(!text.contains('\r'));
            }
        }
    }
}

#[test]
fn trajectory_output_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("sim");
    let o = erwlab(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let traj = read_trajectory_csv(
        fs::File::open(out.join("trajectory.csv"))
            .map(std::io::BufReader::new)
            .unwrap(),
    )
    .unwrap();
    assert_eq!(traj.len(), 300);
    let checkpoints = fs::read_to_string(out.join("checkpoints.csv")).unwrap();
    let last_walker0 = csv_body(&checkpoints)
        .lines()
        .rfind(|l| l.starts_with("0,"))
        .unwrap()
        .to_string();
    let fields: Vec<i64> = last_walker0
        .split(',')
        .map(|f| f.parse().unwrap())
        .collect();
    assert_eq!(fields[1], 300);
    assert_eq!((fields[2], fields[3]), (traj.end().x, traj.end().y));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("sim");
    let o = erwlab(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--alpha",
        "-0.2",
        "--n",
        "50",
        "--seed",
        "3",
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(out.join("checkpoints.csv")).unwrap();
    assert!(text.contains("# alpha: -0.2\n"));
    assert!(text.contains("# seed: 3\n"));
    assert!(csv_body(&text).lines().all(|l| !l.starts_with("0,300,")));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let out = out.to_str().unwrap();
    // alpha is required for simulate
    assert_eq!(erwlab(&["simulate", "--out", out]).status.code(), Some(2));
    assert_eq!(
        erwlab(&["simulate", "--alpha", "1.5", "--out", out])
            .status
            .code(),
        Some(2)
    );
    let bad = write_config(dir.path(), "[scaling]\nwalkz = 3\n");
    assert_eq!(
        erwlab(&["scaling", "--config", &bad]).status.code(),
        Some(2)
    );
    assert_eq!(
        erwlab(&["validate", "--config", &bad]).status.code(),
        Some(2)
    );
    assert_eq!(
        erwlab(&["validate", "--config", "/nonexistent.toml"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        erwlab(&["simulate", "--workers", "0", "--alpha", "0"])
            .status
            .code(),
        Some(2)
    );

    // the k·p_k profile is far from flat over [4, 8]
    let cfg = write_config(
        dir.path(),
        "[kernels]\nk_max = 8\nn = 4\nl1_samples = 50\ntable_k = 2\n",
    );
    let o = erwlab(&["kernels", "--config", &cfg, "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL kernel_bound_stable"));
    let o = erwlab(&["kernels", "--config", &cfg, "--out", out, "--check"]);
    assert_eq!(o.status.code(), Some(3));

    let manifest = format!("{out}/manifest.json");
    assert_eq!(
        erwlab(&["plot", "--manifest", &manifest, "--kind", "bogus"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        erwlab(&["plot", "--manifest", &manifest, "--kind", "msd"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn validate_prints_derived_quantities() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let o = erwlab(&["validate", "--config", &cfg, "--experiment", "recurrence"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("derived.return_window.n27"));
    assert!(text.contains("[68, 81]"));
    assert!(text.contains("derived.triadic.p"));
    let o = erwlab(&["validate", "--config", &cfg]);
    let text = String::from_utf8(o.stdout).unwrap();
    for e in Experiment::ALL {
        assert!(text.contains(&format!("[{e}]")));
    }
}

#[test]
fn plot_data_is_tidy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let sc = dir.path().join("scaling");
    assert!(
        erwlab(&["scaling", "--config", &cfg, "--out", sc.to_str().unwrap()])
            .status
            .success()
    );
    let rec = dir.path().join("rec");
    assert!(erwlab(&[
        "recurrence",
        "--config",
        &cfg,
        "--out",
        rec.to_str().unwrap()
    ])
    .status
    .success());
    for (dir, kind, rows) in [
        (&sc, "msd", 12),
        (&sc, "ks", 2),
        (&rec, "return-scaling", 1),
        (&rec, "triadic", 20),
    ] {
        let m = dir.join(MANIFEST_FILE);
        let o = erwlab(&["plot", "--manifest", m.to_str().unwrap(), "--kind", kind]);
        assert!(o.status.success(), "{kind}");
        let path = String::from_utf8(o.stdout).unwrap();
        let text = fs::read_to_string(path.trim()).unwrap();
        let body = csv_body(&text);
        let mut lines = body.lines();
        assert_eq!(lines.next(), Some("plot,series,x,y,stderr"));
        assert_eq!(lines.count(), rows, "{kind}");
    }
}

fn bodies(dir: &Path) -> Vec<(String, String)> {
    let m = RunManifest::load(&dir.join(MANIFEST_FILE)).unwrap();
    m.outputs
        .iter()
        .filter(|f| f.name.ends_with(".csv"))
        .map(|f| {
            (
                f.name.clone(),
                fs::read_to_string(dir.join(&f.name)).unwrap(),
            )
        })
        .collect()
}

#[test]
fn csv_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    for e in Experiment::ALL {
        let runs: Vec<_> = ["1", "3"]
            .iter()
            .map(|w| {
                let out = dir.path().join(format!("{e}-{w}"));
                let o = erwlab(&[
                    e.name(),
                    "--config",
                    &cfg,
                    "--workers",
                    w,
                    "--out",
                    out.to_str().unwrap(),
                ]);
                assert!(o.status.success());
                bodies(&out)
            })
            .collect();
        assert!(!runs[0].is_empty());
        assert_eq!(runs[0], runs[1], "{e}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn reruns_are_byte_identical(seed in any::<u64>(), workers in 1usize..4, alpha in -0.3f64..0.95) {
        let dir = tempfile::tempdir().unwrap();
        let file = ConfigFile::parse("[simulate]\nn = 200\nwalkers = 9\ncheckpoints = 5\n").unwrap();
        let mut o = Overrides { seed: Some(seed), alpha: Some(alpha), ..Default::default() };
        let mut outputs = Vec::new();
        for (i, w) in [1, workers].into_iter().enumerate() {
            o.workers = Some(w);
            o.out = Some(dir.path().join(i.to_string()));
            let cfg = ExperimentConfig::resolve(Experiment::Simulate, &file, &o).unwrap();
            outputs.push(run(&cfg).unwrap().outputs);
        }
        prop_assert_eq!(&outputs[0], &outputs[1]);
    }
}
