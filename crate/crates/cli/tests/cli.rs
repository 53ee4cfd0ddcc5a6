use std::fs;
use std::process::{Command, Output};

const HEADER: &str = "preset,kernel,n,ew,lmul,unroll,seed,cycles,fpu_busy,utilization,vrf_conflicts,tcdm_conflicts,chain_stalls,reduction_cycles";

fn troop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_troop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field<'a>(csv: &'a str, row: usize, col: &str) -> &'a str {
    let idx = HEADER.split(',').position(|c| c == col).unwrap();
    csv.lines().nth(row + 1).unwrap().split(',').nth(idx).unwrap()
}

#[test]
fn single_run_emits_header_and_row() {
    let o = troop(&["--preset", "2xBW_TROOP", "--kernel", "dotp", "--n", "4096", "--ew", "64"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = stdout(&o);
    assert_eq!(csv.lines().next(), Some(HEADER));
    assert_eq!(csv.lines().count(), 2);
    let u: f64 = field(&csv, 0, "utilization").parse().unwrap();
    assert!((u - 0.76).abs() <= 0.05, "utilization {u}");
    // reference shape of the optimized preset
    assert_eq!(field(&csv, 0, "lmul"), "4");
    assert_eq!(field(&csv, 0, "unroll"), "2");
}

#[test]
fn empty_vector_is_zero_cycles() {
    let o = troop(&["--preset", "BASELINE", "--kernel", "axpy", "--n", "0"]);
    assert!(o.status.success());
    let csv = stdout(&o);
    assert_eq!(field(&csv, 0, "cycles"), "0");
    assert_eq!(field(&csv, 0, "fpu_busy"), "0");
}

#[test]
fn rejected_configs_exit_nonzero() {
    for args in [
        &["--preset", "nope"][..],
        &["--preset", "BASELINE", "--feature", "decoupled_vlsu=on"],
        &["--preset", "BASELINE", "--feature", "warp_drive=on"],
        &["--preset", "BASELINE", "--feature", "shadow_buffers=maybe"],
        &["--preset", "BASELINE", "--kernel", "fft"],
        &["--preset", "BASELINE", "--lmul", "3"],
        &["--bogus-flag"],
    ] {
        let o = troop(args);
        assert!(!o.status.success(), "{args:?} should fail");
        assert!(o.stdout.is_empty(), "{args:?} printed a row");
    }
}

#[test]
fn csv_and_trace_files_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for i in 0..2 {
        let csv = dir.path().join(format!("run{i}.csv"));
        let trace = dir.path().join(format!("run{i}.trace"));
        let o = troop(&[
            "--preset",
            "2xBW",
            "--kernel",
            "axpy",
            "--n",
            "256",
            "--seed",
            "7",
            "--csv",
            csv.to_str().unwrap(),
            "--trace",
            trace.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        assert!(o.stdout.is_empty());
        texts.push((fs::read(&csv).unwrap(), fs::read(&trace).unwrap()));
    }
    assert_eq!(texts[0], texts[1]);
    let trace = String::from_utf8(texts[0].1.clone()).unwrap();
    let first = trace.lines().next().unwrap();
    assert!(first.starts_with("cycle="), "{first}");
    for key in ["space=", "unit=", "action=", "bank=", "loc="] {
        assert!(first.contains(key), "{first}");
    }
}

#[test]
fn config_file_and_feature_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mine.cfg");
    fs::write(&path, "# doubled bandwidth\npreset = 2xBW\nnum_cores = 1\n").unwrap();
    let o = troop(&[
        "--config",
        path.to_str().unwrap(),
        "--kernel",
        "dotp",
        "--n",
        "256",
        "--feature",
        "decoupled_vlsu=on",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(field(&stdout(&o), 0, "preset"), "mine");

    fs::write(&path, "tcdm_banks = 12\n").unwrap();
    assert!(!troop(&["--config", path.to_str().unwrap()]).status.success());
}

#[test]
fn listing_has_one_instruction_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("axpy.lst");
    let o = troop(&["--kernel", "axpy", "--n", "128", "--listing", path.to_str().unwrap()]);
    assert!(o.status.success());
    let text = fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# core 0\n"));
    assert!(text.lines().any(|l| l.starts_with("VFMACC ")), "{text}");
}

#[test]
fn sweep_rows_sorted_and_single_point_matches_run() {
    let o = troop(&["sweep", "--preset", "2xBW", "--kernel", "dotp", "--sizes", "1024,512"]);
    assert!(o.status.success());
    let csv = stdout(&o);
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(field(&csv, 0, "n"), "512");
    assert_eq!(field(&csv, 1, "n"), "1024");

    let single = troop(&["sweep", "--preset", "2xBW", "--kernel", "dotp", "--n", "512"]);
    let run = troop(&["--preset", "2xBW", "--kernel", "dotp", "--n", "512"]);
    assert_eq!(stdout(&single), stdout(&run));
}

#[test]
fn sweep_keeps_going_past_failed_rows() {
    // unroll 3 is rejected; the other rows still run
    let o = troop(&[
        "sweep", "--preset", "2xBW", "--kernel", "dotp", "--sizes", "512", "--unrolls", "3,1", "--toggle", "",
        "--toggle", "decoupled_vlsu=on",
    ]);
    assert!(!o.status.success());
    let csv = stdout(&o);
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(field(&csv, 0, "preset"), "2xBW");
    assert_eq!(field(&csv, 1, "preset"), "2xBW[decoupled_vlsu=on]");
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.matches("unroll=3").count(), 2, "{err}");
}

#[test]
fn unaligned_per_core_arrays_complete() {
    // 50 elements per core puts core 1's operands off a TCDM row boundary
    for kernel in ["dotp", "axpy"] {
        let o = troop(&["--preset", "2xBW", "--kernel", kernel, "--n", "100"]);
        assert!(o.status.success(), "{kernel}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn figure5_and_roofline_reports() {
    let o = troop(&["figure5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("2xBW_TROOP  dotp"));
    assert!(text.contains("unanchored"));

    let o = troop(&["roofline"]);
    assert!(o.status.success());
    let csv = stdout(&o);
    assert!(csv.starts_with("kernel,m,ratio,ceiling,achieved,gap\n"));
    assert!(csv.contains("2xBW_TROOP:gemv"));
    assert!(csv.contains("Ara:dotp"));
}
