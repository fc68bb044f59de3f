use std::path::{Path, PathBuf};

use cpoverlap_cli::{run, EXIT_INPUT, EXIT_OK, EXIT_UNDEFINED, EXIT_USAGE};
use cpoverlap_core::dataio::{read_predictor, read_report};

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("cpoverlap").chain(args.iter().copied()))
}

fn synth_bundle(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("bundle");
    let mut args = vec![
        "synth",
        "--classes",
        "4",
        "--n-cal",
        "300",
        "--n-test",
        "200",
        "--annotators",
        "6",
        "--out",
    ];
    let out_s = s(&out);
    args.push(&out_s);
    args.extend_from_slice(extra);
    assert_eq!(cli(&args), EXIT_OK);
    out
}

#[test]
fn usage_and_input_errors_have_distinct_codes() {
    assert_eq!(cli(&["evaluate", "--no-such-flag"]), EXIT_USAGE);
    assert_eq!(cli(&["frobnicate"]), EXIT_USAGE);
    assert_eq!(cli(&["calibrate", "--method", "bogus"]), EXIT_USAGE);
    assert_eq!(
        cli(&["calibrate", "--bundle", "/definitely/not/here"]),
        EXIT_INPUT
    );
    assert_eq!(cli(&["calibrate"]), EXIT_INPUT);
    assert_eq!(cli(&["--help"]), EXIT_OK);
}

#[test]
fn malformed_rows_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let b = synth_bundle(dir.path(), &[]);
    let probs = b.join("cal_probs.csv");
    let mut text = std::fs::read_to_string(&probs).unwrap();
    text.push_str("extra,0.9,0.9,0.1,0.1\n");
    std::fs::write(&probs, text).unwrap();
    assert_eq!(cli(&["calibrate", "--bundle", &s(&b)]), EXIT_INPUT);
}

#[test]
fn lambda_is_rejected_outside_raps() {
    let dir = tempfile::tempdir().unwrap();
    let b = synth_bundle(dir.path(), &[]);
    assert_eq!(
        cli(&[
            "calibrate",
            "--bundle",
            &s(&b),
            "--method",
            "aps",
            "--lambda",
            "0.1"
        ]),
        EXIT_INPUT
    );
    let out = dir.path().join("p.json");
    assert_eq!(
        cli(&[
            "calibrate",
            "--bundle",
            &s(&b),
            "--method",
            "raps",
            "--lambda",
            "0.2",
            "--k-reg",
            "2",
            "--out",
            &s(&out)
        ]),
        EXIT_OK
    );
    let p = read_predictor(&out).unwrap().to_predictor::<f64>().unwrap();
    assert_eq!((p.config.lambda, p.config.k_reg), (0.2, 2));
}

#[test]
fn lac_empty_sets_flow_through_correlate() {
    let dir = tempfile::tempdir().unwrap();
    let b = synth_bundle(dir.path(), &["--concentration", "5"]);
    let pred = dir.path().join("lac.json");
    assert_eq!(
        cli(&[
            "calibrate",
            "--bundle",
            &s(&b),
            "--method",
            "lac",
            "--alpha",
            "0.5",
            "--out",
            &s(&pred)
        ]),
        EXIT_OK
    );

    let sets = dir.path().join("sets.csv");
    assert_eq!(
        cli(&[
            "predict",
            "--bundle",
            &s(&b),
            "--predictor",
            &s(&pred),
            "--out",
            &s(&sets)
        ]),
        EXIT_OK
    );
    let text = std::fs::read_to_string(&sets).unwrap();
    let empty = text
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(1) == Some("0"))
        .count();
    assert!(empty > 0);
    assert!(dir.path().join("sets.csv.manifest.json").exists());

    let eval = dir.path().join("eval.json");
    assert_eq!(
        cli(&[
            "evaluate",
            "--bundle",
            &s(&b),
            "--predictor",
            &s(&pred),
            "--out",
            &s(&eval)
        ]),
        EXIT_OK
    );
    assert_eq!(
        read_report(&eval).unwrap().performance.unwrap().empty_sets,
        empty
    );

    let corr = dir.path().join("corr.json");
    assert_eq!(
        cli(&[
            "correlate",
            "--bundle",
            &s(&b),
            "--predictor",
            &s(&pred),
            "--out",
            &s(&corr)
        ]),
        EXIT_OK
    );
    let c = read_report(&corr).unwrap().correlation.unwrap();
    assert_eq!(c.overlap.n_used, 200 - empty);
    assert_eq!(c.overlap.n_excluded, empty);

    let kept = dir.path().join("kept.json");
    assert_eq!(
        cli(&[
            "similarity",
            "--bundle",
            &s(&b),
            "--predictor",
            &s(&pred),
            "--exclude-empty",
            "false",
            "--out",
            &s(&kept)
        ]),
        EXIT_OK
    );
    let sim = read_report(&kept).unwrap().similarity.unwrap();
    assert_eq!((sim.n_used, sim.n_excluded), (200, 0));
}

#[test]
fn constant_inputs_exit_with_undefined() {
    let dir = tempfile::tempdir().unwrap();
    let b = synth_bundle(dir.path(), &["--deterministic"]);
    let out = dir.path().join("corr.json");
    assert_eq!(
        cli(&[
            "correlate",
            "--bundle",
            &s(&b),
            "--method",
            "aps",
            "--out",
            &s(&out)
        ]),
        EXIT_UNDEFINED
    );
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.contains("\"r_s\": null"));
    let c = read_report(&out).unwrap().correlation.unwrap();
    assert_eq!(c.overlap_fraction, 0.0);
}

#[test]
fn sweep_then_calibrate_matches_direct_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let b = synth_bundle(dir.path(), &[]);
    for method in ["lac", "aps", "raps"] {
        let chosen = dir.path().join(format!("{method}-sweep.json"));
        let report = dir.path().join(format!("{method}-report.json"));
        assert_eq!(
            cli(&[
                "sweep-alpha",
                "--bundle",
                &s(&b),
                "--method",
                method,
                "--seed",
                "3",
                "--predictor-out",
                &s(&chosen),
                "--out",
                &s(&report)
            ]),
            EXIT_OK
        );
        let sweep = read_report(&report).unwrap().alpha_sweep.unwrap();
        assert_eq!(sweep.evaluated_on, "calibration-holdout");
        assert_eq!(sweep.candidates.len(), 4);
        let alpha = sweep.selected_alpha.to_string();
        let direct = dir.path().join(format!("{method}-direct.json"));
        assert_eq!(
            cli(&[
                "calibrate",
                "--bundle",
                &s(&b),
                "--method",
                method,
                "--seed",
                "3",
                "--alpha",
                &alpha,
                "--out",
                &s(&direct)
            ]),
            EXIT_OK
        );
        let a = read_predictor(&chosen).unwrap();
        let d = read_predictor(&direct).unwrap();
        assert_eq!(
            a.to_predictor::<f64>().unwrap(),
            d.to_predictor::<f64>().unwrap(),
            "{method}"
        );
    }
}

#[test]
fn explicit_paths_override_the_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let b = synth_bundle(dir.path(), &[]);
    let other = dir.path().join("other.csv");
    std::fs::write(&other, "id,x,y\nq,0.5,0.5\n").unwrap();
    // class names of the overriding file disagree with the label file
    assert_eq!(
        cli(&["calibrate", "--bundle", &s(&b), "--cal-probs", &s(&other)]),
        EXIT_INPUT
    );
}
