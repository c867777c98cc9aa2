//! End-to-end tests of the `mvngrad` binary: exit codes, file emission,
//! config precedence, sidecar contents, and byte reproducibility.

use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn run(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mvngrad"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn mvngrad");
    (
        out.status.code().expect("exit code"),
        String::from_utf8(out.stdout).expect("utf8 stdout"),
        String::from_utf8(out.stderr).expect("utf8 stderr"),
    )
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

fn sidecar(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&read(dir, name)).expect("sidecar parses as JSON")
}

fn data_rows(csv: &str) -> usize {
    csv.lines().count() - 1
}

#[test]
fn help_lists_every_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = run(dir.path(), &["--help"]);
    assert_eq!(code, 0);
    for sub in ["spike", "vgap", "vgap-mlp", "separation", "train", "bounds"] {
        assert!(stdout.contains(sub), "help must mention {sub}");
    }
}

#[test]
fn spike_run_writes_data_aggregate_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(
        dir.path(),
        &[
            "spike",
            "--T",
            "50",
            "--M",
            "1e2,1e4",
            "--seeds",
            "1,2",
            "--aggregate",
            "--out",
            "spike.csv",
        ],
    );
    assert_eq!(code, 0, "{stderr}");

    let data = read(dir.path(), "spike.csv");
    assert_eq!(
        data.lines().next().unwrap(),
        "kind,M,seed,peak_update,peak_time,t_star,delta_at_t_star,analytic_bound,bound_ok,\
         moment_max_rel_err,moment_ok,bias_corrected"
    );
    assert_eq!(
        data_rows(&data),
        4 * 2 * 2,
        "4 kinds x 2 magnitudes x 2 seeds"
    );

    let agg = read(dir.path(), "spike.agg.csv");
    assert_eq!(
        data_rows(&agg),
        4 * 2,
        "aggregation reduces over seeds only"
    );
    assert!(agg.lines().next().unwrap().starts_with("kind,M,"));

    let side = sidecar(dir.path(), "spike.csv.meta.json");
    assert_eq!(side["subcommand"], "spike");
    assert_eq!(side["rng_algorithm"], "chacha8/box-muller");
    assert!(side["artifact_version"].is_string());
    assert_eq!(side["config"]["beta1"], "0.9", "default echoed");
    assert_eq!(side["config"]["T"], "50", "flag echoed");
    let started = side["started_unix_ms"].as_u64().unwrap();
    let finished = side["finished_unix_ms"].as_u64().unwrap();
    assert!(started <= finished);

    let partials: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with(".partial")
        })
        .collect();
    assert!(partials.is_empty(), "no partial files may survive a run");
}

#[test]
fn json_format_emits_parseable_records() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(
        dir.path(),
        &[
            "vgap",
            "--K",
            "2000",
            "--format",
            "json",
            "--out",
            "vgap.json",
        ],
    );
    assert_eq!(code, 0, "{stderr}");
    let rows: Value = serde_json::from_str(&read(dir.path(), "vgap.json")).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["law"], "gaussian");
    assert_eq!(rows[0]["gap_ok"], true);
    assert!(rows[0]["mc_gap"].as_f64().unwrap().is_finite());
}

#[test]
fn cli_flags_override_config_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "beta2 = 0.8\nu = 0.01\n").unwrap();
    let (code, _, stderr) = run(
        dir.path(),
        &[
            "spike", "--config", "run.cfg", "--u", "0.5", "--T", "20", "--out", "s.csv",
        ],
    );
    assert_eq!(code, 0, "{stderr}");
    let side = sidecar(dir.path(), "s.csv.meta.json");
    assert_eq!(side["config"]["beta2"], "0.8", "file key applies");
    assert_eq!(side["config"]["u"], "0.5", "CLI flag wins over the file");
    assert_eq!(side["config"]["beta1"], "0.9", "default fills the rest");
}

#[test]
fn json_and_flat_config_files_resolve_identically() {
    let flat_dir = tempfile::tempdir().unwrap();
    let json_dir = tempfile::tempdir().unwrap();
    std::fs::write(
        flat_dir.path().join("c.cfg"),
        "beta2 = 0.8\nT = 40\nM = 1e3\n",
    )
    .unwrap();
    std::fs::write(
        json_dir.path().join("c.cfg"),
        "{\"beta2\": 0.8, \"T\": 40, \"M\": \"1e3\"}",
    )
    .unwrap();
    for dir in [flat_dir.path(), json_dir.path()] {
        let (code, _, stderr) = run(dir, &["spike", "--config", "c.cfg", "--out", "s.csv"]);
        assert_eq!(code, 0, "{stderr}");
    }
    assert_eq!(
        read(flat_dir.path(), "s.csv"),
        read(json_dir.path(), "s.csv"),
        "both config syntaxes must produce identical data"
    );
}

#[test]
fn underscore_config_keys_alias_dashed_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.cfg"),
        "eps_s = 0.001\nbias_corrected = true\n",
    )
    .unwrap();
    let (code, _, stderr) = run(
        dir.path(),
        &["spike", "--config", "c.cfg", "--T", "20", "--out", "s.csv"],
    );
    assert_eq!(code, 0, "{stderr}");
    let side = sidecar(dir.path(), "s.csv.meta.json");
    assert_eq!(side["config"]["eps-s"], "0.001");
    assert_eq!(side["config"]["bias-corrected"], "true");
}

#[test]
fn unknown_config_keys_are_rejected_by_name() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.cfg"), "beta1 = 0.8\nbogus_key = 3\n").unwrap();
    let (code, _, stderr) = run(
        dir.path(),
        &["spike", "--config", "c.cfg", "--out", "s.csv"],
    );
    assert_eq!(code, 2);
    assert!(
        stderr.contains("bogus-key"),
        "stderr names the key: {stderr}"
    );
    assert!(
        stderr.contains("spike"),
        "stderr names the subcommand: {stderr}"
    );
    assert!(
        !dir.path().join("s.csv").exists(),
        "no output on config error"
    );
}

#[test]
fn malformed_config_values_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.cfg"), "beta1 = banana\n").unwrap();
    let (code, _, stderr) = run(dir.path(), &["spike", "--config", "c.cfg"]);
    assert_eq!(code, 2);
    assert!(
        stderr.contains("beta1") && stderr.contains("banana"),
        "{stderr}"
    );
}

#[test]
fn invalid_hyperparameters_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(dir.path(), &["vgap", "--beta1", "1.5", "--out", "v.csv"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("beta1"), "{stderr}");
    assert!(!dir.path().join("v.csv").exists());
}

#[test]
fn unparseable_flags_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run(dir.path(), &["spike", "--T", "notanint"]);
    assert_eq!(code, 2);
}

#[test]
fn missing_idx_paths_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(dir.path(), &["train", "--data", "idx", "--out", "t.csv"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("images"), "{stderr}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let args = [
        "spike",
        "--T",
        "60",
        "--M",
        "1e2,1e6",
        "--seeds",
        "1,2",
        "--aggregate",
        "--out",
        "s.csv",
    ];
    for dir in [dir_a.path(), dir_b.path()] {
        let (code, _, stderr) = run(dir, &args);
        assert_eq!(code, 0, "{stderr}");
    }
    assert_eq!(read(dir_a.path(), "s.csv"), read(dir_b.path(), "s.csv"));
    assert_eq!(
        read(dir_a.path(), "s.agg.csv"),
        read(dir_b.path(), "s.agg.csv")
    );
    let strip = |v: Value| {
        let mut v = v;
        v.as_object_mut().unwrap().remove("started_unix_ms");
        v.as_object_mut().unwrap().remove("finished_unix_ms");
        v
    };
    assert_eq!(
        strip(sidecar(dir_a.path(), "s.csv.meta.json")),
        strip(sidecar(dir_b.path(), "s.csv.meta.json")),
        "sidecars agree on everything but timestamps"
    );
}

#[test]
fn every_resolved_field_is_echoed_with_its_value() {
    // Values are chosen so the canonical rendering of the parsed value
    // matches the flag text verbatim.
    let cases: &[(&str, &str)] = &[
        ("beta1", "0.8"),
        ("beta2", "0.7"),
        ("eps", "0.0000001"),
        ("eps-s", "0.000000001"),
        ("dbar", "2"),
        ("u", "0.002"),
        ("T", "10"),
        ("M", "1e3"),
        ("kinds", "adam"),
        ("seeds", "5"),
        ("format", "json"),
    ];
    for (key, value) in cases {
        let dir = tempfile::tempdir().unwrap();
        let flag = format!("--{key}");
        let (code, _, stderr) = run(dir.path(), &["spike", &flag, value, "--out", "s.out"]);
        assert_eq!(code, 0, "--{key} {value}: {stderr}");
        let side = sidecar(dir.path(), "s.out.meta.json");
        assert_eq!(side["config"][*key], *value, "echo of `{key}`");
    }
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(
        dir.path(),
        &["spike", "--bias-corrected", "--T", "10", "--out", "s.csv"],
    );
    assert_eq!(code, 0, "{stderr}");
    let side = sidecar(dir.path(), "s.csv.meta.json");
    assert_eq!(side["config"]["bias-corrected"], "true");
    assert_eq!(side["config"]["out"], "s.csv");
}

#[test]
fn aggregate_file_reduces_seeds_to_mean_and_std() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(
        dir.path(),
        &[
            "vgap",
            "--seeds",
            "1,2,3",
            "--K",
            "2000",
            "--aggregate",
            "--out",
            "v.csv",
        ],
    );
    assert_eq!(code, 0, "{stderr}");
    let data = read(dir.path(), "v.csv");
    let gap_col = data
        .lines()
        .next()
        .unwrap()
        .split(',')
        .position(|c| c == "mc_gap")
        .unwrap();
    let gaps: Vec<f64> = data
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(gap_col).unwrap().parse().unwrap())
        .collect();
    assert_eq!(gaps.len(), 3);

    let agg = read(dir.path(), "v.agg.csv");
    assert_eq!(data_rows(&agg), 1, "one aggregate row for one sweep point");
    let header: Vec<&str> = agg.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = agg.lines().nth(1).unwrap().split(',').collect();
    let mean_col = header.iter().position(|c| *c == "mc_gap_mean").unwrap();
    let n_col = header.iter().position(|c| *c == "n").unwrap();
    let mean: f64 = row[mean_col].parse().unwrap();
    assert_eq!(row[n_col], "3");
    let expected = gaps.iter().sum::<f64>() / 3.0;
    assert!((mean - expected).abs() <= 1e-15 * expected.abs());
    assert!(!header.contains(&"seed"), "seed column is consumed");
}

#[test]
fn frozen_mean_off_the_draw_mean_fails_the_identity_check() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(
        dir.path(),
        &["vgap", "--m-prev", "0.9", "--K", "2000", "--out", "v.csv"],
    );
    assert_eq!(code, 1, "{stderr}");
    assert!(stderr.contains("checks failed"), "{stderr}");
    let data = read(dir.path(), "v.csv");
    assert!(data.lines().nth(1).unwrap().ends_with("false"));
}

#[test]
fn easy_blobs_break_checkpoint_gap_positivity() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(
        dir.path(),
        &[
            "vgap-mlp",
            "--spread",
            "1",
            "--seeds",
            "1,2",
            "--K",
            "64",
            "--checkpoints",
            "32,64",
            "--out",
            "vm.csv",
        ],
    );
    assert_eq!(code, 1, "{stderr}");
    let data = read(dir.path(), "vm.csv");
    assert!(
        data.contains(",false"),
        "some checkpoint mean fails: {data}"
    );
}

#[test]
fn divergent_training_exits_one_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(
        dir.path(),
        &[
            "train",
            "--eta",
            "1e150",
            "--kinds",
            "adam",
            "--seeds",
            "1",
            "--epochs",
            "2",
            "--n",
            "64",
            "--p",
            "4",
            "--classes",
            "2",
            "--batch",
            "32",
            "--h1",
            "8",
            "--h2",
            "8",
            "--out",
            "t.csv",
        ],
    );
    assert_eq!(code, 1, "{stderr}");
    assert!(stderr.contains("diverged"), "{stderr}");
}

#[test]
fn unpinned_overstep_breaks_the_rate_bound() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(
        dir.path(),
        &[
            "separation",
            "--arm",
            "mvn",
            "--unpinned",
            "--eta",
            "100",
            "--out",
            "sep.csv",
        ],
    );
    assert_eq!(code, 1, "{stderr}");
    let data = read(dir.path(), "sep.csv");
    assert!(data.lines().nth(1).unwrap().ends_with("false"));
}

#[test]
fn separation_defaults_pass_both_arms() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(dir.path(), &["separation", "--out", "sep.csv"]);
    assert_eq!(code, 0, "{stderr}");
    let data = read(dir.path(), "sep.csv");
    assert_eq!(
        data.lines().next().unwrap(),
        "arm,d,T,beta,seed,min_grad_norm,analytic_value,trajectory_match_err,orthant_ok,\
         grad_norm_decreasing,max_potential_increase,telescope_slack,pinned,arm_ok"
    );
    assert_eq!(data_rows(&data), 2);
    for line in data.lines().skip(1) {
        assert!(line.ends_with("true"), "{line}");
    }
}

#[test]
fn short_training_run_records_every_step() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(
        dir.path(),
        &[
            "train",
            "--kinds",
            "adam",
            "--seeds",
            "1",
            "--epochs",
            "2",
            "--n",
            "64",
            "--p",
            "4",
            "--classes",
            "2",
            "--batch",
            "32",
            "--h1",
            "8",
            "--h2",
            "8",
            "--eta",
            "0.001",
            "--eval-every",
            "2",
            "--out",
            "t.csv",
        ],
    );
    assert_eq!(code, 0, "{stderr}");
    let data = read(dir.path(), "t.csv");
    assert_eq!(
        data.lines().next().unwrap(),
        "kind,seed,step,epoch,batch_loss,grad_norm,eval_loss,final_loss"
    );
    assert_eq!(data_rows(&data), 4, "2 epochs x 2 steps per epoch");
    let eval_col = 6;
    for (i, line) in data.lines().skip(1).enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        let step: usize = cells[2].parse().unwrap();
        assert_eq!(step, i + 1, "steps are 1-based and contiguous");
        let has_eval = !cells[eval_col].is_empty();
        assert_eq!(
            has_eval,
            step.is_multiple_of(2),
            "eval every two steps: {line}"
        );
        let final_loss: f64 = cells[7].parse().unwrap();
        assert!(final_loss.is_finite());
    }
}

#[test]
fn bounds_reports_the_tail_bounds_per_kind() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = run(dir.path(), &["bounds", "--out", "b.csv"]);
    assert_eq!(code, 0, "{stderr}");
    let data = read(dir.path(), "b.csv");
    assert_eq!(
        data.lines().next().unwrap(),
        "kind,beta1,beta2,eps,u,dbar,bound"
    );
    assert_eq!(data_rows(&data), 4);
    for line in data.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        match cells[0] {
            // No gradient-independent bound exists for these two at
            // beta2 = 0.6 < beta1^2.
            "adam" | "adabelief" => assert!(cells[6].is_empty(), "{line}"),
            // max(1/sqrt(1 - beta2), u/eps) = u/eps = 1e5 for both.
            "laprop" | "mvngrad" => assert_eq!(cells[6], "1.0000000000000000e5", "{line}"),
            other => panic!("unexpected kind {other}"),
        }
    }

    let (code, _, _) = run(
        dir.path(),
        &[
            "bounds", "--beta2", "0.99", "--kinds", "adam", "--out", "b2.csv",
        ],
    );
    assert_eq!(code, 0);
    let data = read(dir.path(), "b2.csv");
    let bound: f64 = data
        .lines()
        .nth(1)
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    let expected = 0.1 / (0.01f64 * (1.0 - 0.81 / 0.99)).sqrt();
    assert!(
        (bound - expected).abs() < 1e-12,
        "slow-normalizer bound {bound} vs {expected}"
    );
}

#[test]
fn occupied_output_name_fails_without_leaving_partials() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("s.csv")).unwrap();
    let (code, _, stderr) = run(dir.path(), &["spike", "--T", "10", "--out", "s.csv"]);
    assert_eq!(code, 2, "{stderr}");
    assert!(dir.path().join("s.csv").is_dir(), "occupant untouched");
    assert!(
        !dir.path().join("s.csv.partial").exists(),
        "partial removed"
    );
}
