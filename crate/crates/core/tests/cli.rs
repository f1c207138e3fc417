use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use roiranknet::cli::{flag_registry, help_text, subcommand_names, EXIT_DATA, EXIT_OK, EXIT_USAGE};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_roiranknet"));
    c.env_remove(roiranknet::cli::JOBS_ENV);
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn gen(dir: &Path, extra: &[&str]) -> String {
    let mut args = vec!["gen-synthetic", "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("manifest.csv").to_string_lossy().into_owned()
}

#[test]
fn help_lists_every_flag_of_every_subcommand() {
    let names = subcommand_names();
    for want in ["gen-synthetic", "validate", "train", "rank-roi", "sweep", "compare", "report"] {
        assert!(names.iter().any(|n| n == want), "missing subcommand {want}");
    }
    for sub in &names {
        let help = help_text(sub).unwrap();
        for flag in flag_registry(sub) {
            assert!(help.contains(&format!("--{flag}")), "{sub} help lacks --{flag}");
        }
        let out = run(&[sub, "--help"]);
        assert_eq!(code(&out), EXIT_OK);
    }
    let rank = flag_registry("rank-roi");
    for f in ["manifest", "atlas-size", "rois", "config", "set", "out-dir", "seed", "jobs"] {
        assert!(rank.iter().any(|x| x == f), "rank-roi lacks --{f}");
    }
}

#[test]
fn generated_dataset_validates() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path(), &["--sites", "3", "--per-class", "20", "--rois", "12", "--planted", "1,7"]);
    let series = fs::read_dir(dir.path().join("series")).unwrap().count();
    assert_eq!(series, 120);
    assert_eq!(fs::read_to_string(&manifest).unwrap().lines().count(), 121);
    let out = run(&["validate", "--manifest", &manifest]);
    assert_eq!(code(&out), EXIT_OK);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("120 subjects, 3 sites, 0 errors, 0 warnings"), "{stdout}");
}

#[test]
fn exit_codes_by_failure_category() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.csv");
    assert_eq!(code(&run(&["validate", "--manifest", missing.to_str().unwrap()])), EXIT_DATA);
    assert_eq!(code(&run(&["frobnicate"])), EXIT_USAGE);
    assert_eq!(code(&run(&["train"])), EXIT_USAGE);

    let manifest = gen(dir.path(), &["--sites", "2", "--per-class", "2", "--rois", "4", "--planted", "1"]);
    let bad_key = run(&["train", "--manifest", &manifest, "--set", "momentum=0.5"]);
    assert_eq!(code(&bad_key), EXIT_USAGE);
    assert!(String::from_utf8_lossy(&bad_key.stderr).contains("momentum"));
    assert_eq!(code(&run(&["train", "--manifest", &manifest, "--set", "batch_size=7"])), EXIT_USAGE);
    assert_eq!(code(&run(&["sweep", "--manifest", &manifest, "--ranking", &manifest])), EXIT_DATA);

    let series = dir.path().join("series");
    let first = fs::read_dir(&series).unwrap().next().unwrap().unwrap().path();
    fs::write(&first, "4 24\n").unwrap();
    assert_eq!(code(&run(&["validate", "--manifest", &manifest])), EXIT_DATA);
}

fn rank_outputs(manifest: &str, jobs: &str, out_dir: &Path) -> Vec<Vec<u8>> {
    let out = run(&[
        "rank-roi",
        "--manifest",
        manifest,
        "--rois",
        "0,1,2",
        "--set",
        "epochs=1",
        "--set",
        "batch_size=8",
        "--set",
        "learning_rate=0.001",
        "--seed",
        "3",
        "--jobs",
        jobs,
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    ["ranking.json", "ranking.txt", "ranking.csv"]
        .iter()
        .map(|f| fs::read(out_dir.join(f)).unwrap())
        .collect()
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path(), &["--sites", "2", "--per-class", "4", "--rois", "4", "--time-len", "24", "--planted", "1"]);
    let (one, eight) = (dir.path().join("one"), dir.path().join("eight"));
    fs::create_dir_all(&one).unwrap();
    fs::create_dir_all(&eight).unwrap();
    assert_eq!(rank_outputs(&manifest, "1", &one), rank_outputs(&manifest, "8", &eight));

    let json = one.join("ranking.json");
    let out = run(&["report", "--input", json.to_str().unwrap(), "--format", "plotdata"]);
    assert_eq!(code(&out), EXIT_OK);
    assert_eq!(out.stdout, fs::read(one.join("ranking.csv")).unwrap());

    let sweep = run(&[
        "sweep",
        "--manifest",
        &manifest,
        "--ranking",
        json.to_str().unwrap(),
        "--k-max",
        "2",
        "--direction",
        "reverse",
        "--set",
        "epochs=1",
        "--set",
        "batch_size=8",
        "--out-dir",
        one.to_str().unwrap(),
    ]);
    assert_eq!(code(&sweep), EXIT_OK, "{}", String::from_utf8_lossy(&sweep.stderr));
    assert!(one.join("sweep_reverse.csv").exists());
}

#[test]
fn config_file_and_overrides_compose() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen(dir.path(), &["--sites", "2", "--per-class", "4", "--rois", "3", "--time-len", "24", "--planted", "1"]);
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "# quick run\nepochs = 1\nbatch_size = 4\nvariant = ASDRNN\n").unwrap();
    let out = run(&[
        "train",
        "--manifest",
        &manifest,
        "--rois",
        "0,1",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "batch_size=8",
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--save-model",
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("loso.csv")).unwrap();
    assert!(csv.contains("# batch_size = 8"), "{csv}");
    assert!(csv.contains("# variant = ASDRNN"), "{csv}");
    assert!(dir.path().join("model.ckpt").exists());
}
