use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use shrinktune::pgm::{load_pgm, save_pgm};
use shrinktune::Image;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shrinktune"))
}

fn small_image(dir: &Path) -> PathBuf {
    let x = load_pgm(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/cameraman64.pgm")).unwrap();
    let path = dir.join("crop.pgm");
    save_pgm(&path, &Image::from_fn(16, 16, |r, c| x.get(20 + r, 24 + c))).unwrap();
    path
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let image = small_image(dir.path());
    let out = dir.path().join("out");
    let config = dir.path().join("run.cfg");
    fs::write(
        &config,
        format!(
            "# small run\nproblem = 2\nimage = {}\nmethod = greedy\ncriterion = gsure\nkmax = 40\nn_gs = 5\n",
            image.display()
        ),
    )
    .unwrap();
    let status = bin()
        .args(["--config", config.to_str().unwrap(), "--method", "global-k", "--kmax", "8"])
        .args(["--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));

    let selection = fs::read_to_string(out.join("selection.csv")).unwrap();
    let rows: Vec<&str> = selection.lines().collect();
    assert_eq!(rows.len(), 2, "{selection}");
    assert!(rows[0].starts_with("method,criterion,lambda,k,true_mse,isnr_db,solver_steps"));
    assert!(rows[1].starts_with("global-k,gsure,"));

    let risk = fs::read_to_string(out.join("risk_curve.csv")).unwrap();
    assert_eq!(risk.lines().count(), 1 + 8);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("kernel = ker2"));
    assert!(summary.contains("sigma2 = 0.308"));
    assert!(summary.contains("kmax = 8"));
    for name in ["degraded.pgm", "global-k_gsure.pgm"] {
        assert_eq!(load_pgm(out.join(name)).unwrap().dims(), (16, 16));
    }
    assert!(fs::read_dir(&out)
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn scale_up_reports_psnr() {
    let dir = tempfile::tempdir().unwrap();
    let image = small_image(dir.path());
    let out = dir.path().join("out");
    let status = bin()
        .args(["--problem", "4", "--image", image.to_str().unwrap()])
        .args(["--method", "global-lambda", "--criterion", "projected-gsure"])
        .args(["--set", "k=3", "--set", "n_gs=5", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let risk = fs::read_to_string(out.join("risk_curve.csv")).unwrap();
    assert!(risk.lines().next().unwrap().ends_with("psnr_db"));
    assert_eq!(load_pgm(out.join("degraded.pgm")).unwrap().dims(), (8, 8));
    assert_eq!(
        load_pgm(out.join("global-lambda_projected_gsure.pgm")).unwrap().dims(),
        (16, 16)
    );
}

#[test]
fn bad_input_exits_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let image = small_image(dir.path());
    let out = dir.path().join("out");
    let cases: Vec<Vec<String>> = vec![
        vec!["--problem".into(), "7".into()],
        vec!["--image".into(), dir.path().join("missing.pgm").display().to_string()],
        vec!["--image".into(), image.display().to_string(), "--criterion".into(), "sure".into()],
        vec!["--image".into(), image.display().to_string(), "--set".into(), "decimation=3".into()],
        vec!["--image".into(), image.display().to_string(), "--delta=-1".into()],
    ];
    for args in cases {
        let output = bin().args(&args).args(["--out", out.to_str().unwrap()]).output().unwrap();
        assert!(!output.status.success(), "{args:?}");
        let stderr = String::from_utf8_lossy(&output.stderr);
        assert!(stderr.starts_with("shrinktune: "), "{args:?}: {stderr}");
        assert!(!out.exists(), "{args:?} left output behind");
    }
}

#[test]
fn malformed_config_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.cfg");
    fs::write(&config, "problem = 1\n\nthis line has no separator\n").unwrap();
    let output = bin().args(["--config", config.to_str().unwrap()]).output().unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 3"));
}

#[test]
fn failed_write_removes_partial_outputs() {
    use shrinktune::experiment::{run_experiment, CriterionChoice, ExperimentSpec, Method};
    use shrinktune::Criterion;

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    fs::create_dir_all(out.join("summary.txt")).unwrap();
    let mut spec = ExperimentSpec {
        image: Some(small_image(dir.path())),
        method: Method::GlobalK,
        criterion: CriterionChoice::One(Criterion::Gsure),
        out: out.clone(),
        ..ExperimentSpec::default()
    };
    spec.tuning.k_max = 4;
    assert!(run_experiment(&spec).is_err());
    let left: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(left, vec!["summary.txt".to_string()]);
}

#[test]
fn every_selection_was_an_evaluated_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let image = small_image(dir.path());
    let out = dir.path().join("out");
    let status = bin()
        .args(["--problem", "3", "--image", image.to_str().unwrap(), "--method", "all"])
        .args(["--kmax", "8", "--set", "k=3", "--set", "n_gs=5", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let risk = fs::read_to_string(out.join("risk_curve.csv")).unwrap();
    let evaluated: Vec<(String, String, String)> = risk
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string(), f[2].to_string())
        })
        .collect();
    let selection = fs::read_to_string(out.join("selection.csv")).unwrap();
    let mut rows = 0;
    for line in selection.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let run = format!("{}/{}", f[0], f[1]);
        let found = evaluated.iter().any(|(r, l, k)| {
            (r == &run || (r == "global-lambda/grid" && f[0] == "global-lambda")) && l == f[2] && k == f[3]
        });
        assert!(found, "{line}");
        rows += 1;
    }
    // 6 global-λ, 6 global-K, 5 greedy and 5 look-ahead selections.
    assert_eq!(rows, 22);
}
