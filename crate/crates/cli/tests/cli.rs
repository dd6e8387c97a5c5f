use std::path::Path;
use std::process::{Command, Output};

fn osamtl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osamtl")).args(args).env("OSAMTL_THREADS", "2").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn shipped_proofs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/reasonings"))
}

fn copy_proofs(to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(shipped_proofs()).unwrap() {
        let p = e.unwrap().path();
        std::fs::copy(&p, to.join(p.file_name().unwrap())).unwrap();
    }
}

#[test]
fn prove_shipped_corpus_exits_zero() {
    let o = osamtl(&["prove", shipped_proofs().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).matches(": valid").count(), 7);
    assert_eq!(osamtl(&["prove"]).status.code(), Some(0));
}

#[test]
fn prove_tampered_file_names_the_step() {
    let dir = tempfile::tempdir().unwrap();
    copy_proofs(dir.path());
    let f = dir.path().join("reasoning1.proof");
    let text = std::fs::read_to_string(&f).unwrap().replace("; mp 2 12", "; mp 2 13");
    std::fs::write(&f, text).unwrap();
    let o = osamtl(&["prove", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("reasoning1: invalid at step 17"), "{}", stdout(&o));
}

#[test]
fn prove_missing_dir_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = osamtl(&["prove", dir.path().join("absent").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_then_abduce() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let o = osamtl(&["gen", "--out-dir", corpus.to_str().unwrap(), "--n-train", "3", "--n-val", "1", "--n-test", "1", "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(corpus.join("manifest.json").is_file());
    let out = dir.path().join("abduced");
    let o = osamtl(&["abduce", "--corpus", corpus.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_dir(out.join("targets")).unwrap().count(), 10);
    let csv = std::fs::read_to_string(out.join("abduction.csv")).unwrap();
    assert!(csv.starts_with("target,precision,recall,f1,iou\n"));
}

const SMALL: &str = r#"
solutions = ["None_T1", "None_OSAMTLF"]
bootstrap_resamples = 50
[corpus]
n_train = 6
n_val = 2
n_test = 3
[train]
epochs = 2
batch_size = 3
[report]
overlays = 1
"#;

#[test]
fn run_train_eval_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let cfg = cfg.to_str().unwrap();

    let run_dir = dir.path().join("run");
    let o = osamtl(&["run", "--config", cfg, "--seed", "3", "--out-dir", run_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = std::fs::read_to_string(run_dir.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 3);
    assert!(results.contains("\nNone_OSAMTLF,"));
    assert!(run_dir.join("report/lfiou.svg").is_file());
    assert!(run_dir.join("report/overlays").is_dir());
    let saved = std::fs::read_to_string(run_dir.join("config.toml")).unwrap();
    assert!(saved.contains("seed = 3"));

    let train_dir = dir.path().join("train");
    let o = osamtl(&["train", "--config", cfg, "--seed", "3", "--solution", "None_T1", "--out-dir", train_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model = train_dir.join("models/None_T1.json");
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(run_dir.join("models/None_T1.json")).unwrap());

    let eval_dir = dir.path().join("eval");
    let o = osamtl(&["eval", "--config", cfg, "--seed", "3", "--model", model.to_str().unwrap(), "--out-dir", eval_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let eval = std::fs::read_to_string(eval_dir.join("eval.csv")).unwrap();
    let micro = eval.lines().nth(1).unwrap();
    let run_row = results.lines().find(|l| l.starts_with("None_T1,")).unwrap();
    assert_eq!(micro.split_once(',').unwrap().1, run_row.split_once(',').unwrap().1);

    let o = osamtl(&["report", "--out-dir", run_dir.to_str().unwrap()]);
    assert!(o.status.success());
}

#[test]
fn unknown_solution_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = osamtl(&["train", "--solution", "D2L_T1", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("D2L"));
}

#[test]
fn report_without_results_fails() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("results.csv"), "solution,lf1\n").unwrap();
    let o = osamtl(&["report", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nothing to report"));
}
