use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

fn wikicite(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wikicite"))
        .current_dir(cwd)
        .env_remove("WIKICITE_OUTPUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_args<'a>(dump: &'a str, lexicon: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["run", "--dump", dump, "--lexicon", lexicon, "--output-dir", "out"];
    v.extend_from_slice(extra);
    v
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn full_run_then_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let dump = fixture("sample-pages-articles.xml");
    let lexicon = fixture("journals.xml");
    let (dump, lexicon) = (dump.to_str().unwrap(), lexicon.to_str().unwrap());
    let args = run_args(dump, lexicon, &["--k-max", "3", "--iterations", "2000"]);

    let first = wikicite(tmp.path(), &args);
    assert!(first.status.success(), "{}", stderr(&first));
    let out = tmp.path().join("out");
    for f in [
        "citations.jsonl",
        "bush.svg",
        "report.html",
        "growth.csv",
        "run.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    for f in ["triplets.txt", "rows.txt", "cols.txt", "meta.json"] {
        assert!(out.join("matrix").join(f).is_file(), "missing matrix/{f}");
    }
    for k in ["k01", "k02", "k03"] {
        assert!(out.join("models").join(k).join("W.f64").is_file());
    }
    let html = fs::read_to_string(out.join("report.html")).unwrap();
    assert_eq!(html.matches("<section class=\"model\"").count(), 3);
    let entries: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(entries, ["out"], "files written outside the output directory");

    let second = wikicite(tmp.path(), &args);
    assert!(second.status.success(), "{}", stderr(&second));
    let run = fs::read_to_string(out.join("run.json")).unwrap();
    assert_eq!(run.matches("\"skipped\": true").count(), 5, "{run}");
}

#[test]
fn changed_overlap_reruns_only_the_bush() {
    let tmp = tempfile::tempdir().unwrap();
    let dump = fixture("sample-pages-articles.xml");
    let lexicon = fixture("journals.xml");
    let (dump, lexicon) = (dump.to_str().unwrap(), lexicon.to_str().unwrap());
    let a = wikicite(
        tmp.path(),
        &run_args(dump, lexicon, &["--k-max", "2", "--iterations", "200"]),
    );
    assert!(a.status.success(), "{}", stderr(&a));
    let b = wikicite(
        tmp.path(),
        &run_args(
            dump,
            lexicon,
            &["--k-max", "2", "--iterations", "200", "--min-overlap", "0.5"],
        ),
    );
    assert!(b.status.success(), "{}", stderr(&b));
    let run = fs::read_to_string(tmp.path().join("out/run.json")).unwrap();
    assert_eq!(run.matches("\"skipped\": true").count(), 4, "{run}");
    assert!(
        run.contains("\"name\": \"bush\",\n      \"skipped\": false"),
        "{run}"
    );
}

#[test]
fn invalid_config_fails_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let o = wikicite(
        tmp.path(),
        &run_args("dump.xml", "journals.xml", &["--k-min", "0"]),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("k_min"));
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("wikicite.toml");
    fs::write(
        &cfg,
        format!(
            "dump_path = {:?}\nlexicon_path = {:?}\nk_max = 4\niterations = 100\nexclude_journals = [\"Nature\", \"Science\", \"PNAS\"]\n",
            fixture("sample-pages-articles.xml"),
            fixture("journals.xml")
        ),
    )
    .unwrap();
    let o = wikicite(
        tmp.path(),
        &[
            "run",
            "--config",
            "wikicite.toml",
            "--k-max",
            "2",
            "--output-dir",
            "o",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let models = tmp.path().join("o/models");
    assert!(models.join("k02").is_dir());
    assert!(!models.join("k03").exists());
    let cols = fs::read_to_string(models.join("k01/cols.txt")).unwrap();
    assert_eq!(cols.lines().count(), 17);
    assert!(!cols
        .lines()
        .any(|c| c == "Nature" || c == "PNAS" || c == "Science"));

    fs::write(&cfg, "k_maximum = 3\n").unwrap();
    let bad = wikicite(tmp.path(), &["run", "--config", "wikicite.toml"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn missing_dump_is_a_data_error_naming_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let lexicon = fixture("journals.xml");
    let o = wikicite(
        tmp.path(),
        &run_args("no-such-dump.xml.bz2", lexicon.to_str().unwrap(), &[]),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("extract"), "{}", stderr(&o));
}

#[test]
fn malformed_lexicon_names_matrix_stage() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("bad.xml"), "<journals><journal>").unwrap();
    let dump = fixture("two_pages.xml");
    let o = wikicite(tmp.path(), &run_args(dump.to_str().unwrap(), "bad.xml", &[]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("matrix failed"), "{}", stderr(&o));
}

#[test]
fn subcommands_chain_through_env_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let dump = fixture("sample-pages-articles.xml");
    let lexicon = fixture("journals.xml");
    let step = |args: &[&str]| {
        let o = Command::new(env!("CARGO_BIN_EXE_wikicite"))
            .current_dir(tmp.path())
            .env("WIKICITE_OUTPUT_DIR", "work")
            .args(args)
            .output()
            .unwrap();
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    };
    step(&["extract", "--dump", dump.to_str().unwrap()]);
    step(&[
        "matrix",
        "--lexicon",
        lexicon.to_str().unwrap(),
        "--dump-id",
        "2008-03-12",
    ]);
    step(&[
        "nmf",
        "--k-min",
        "2",
        "--k-max",
        "3",
        "--iterations",
        "300",
        "--exclude",
        "Nature",
        "--jobs",
        "2",
    ]);
    step(&["bush", "--labels-per-node", "2"]);
    step(&["report", "--top-n", "5"]);
    let work = tmp.path().join("work");
    let csv = fs::read_to_string(work.join("growth.csv")).unwrap();
    assert_eq!(
        csv,
        "dump_id,total_citations,n_articles,n_journal_columns\n2008-03-12,36,8,20\n"
    );
    let html = fs::read_to_string(work.join("report.html")).unwrap();
    assert_eq!(html.matches("<section class=\"model\"").count(), 2);
    assert!(work.join("bush.svg").is_file());
}

#[test]
fn usage_errors_and_help() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(wikicite(tmp.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        wikicite(tmp.path(), &["nmf", "--k-min", "3", "--k-max", "2"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        wikicite(tmp.path(), &["bush", "--min-overlap", "2"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(wikicite(tmp.path(), &["--help"]).status.code(), Some(0));
}
