use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hybridrec_bench::load_model;
use hybridrec_bench::report::{parse_csv, CSV_HEADER};

fn hybridrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hybridrec")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.cfg");
    fs::write(&p, "training.epochs = 1\ntraining.lora_epochs = 1\ndims.d_g = 8\ndims.d_s = 8\ndims.d_h = 8\neval.n_latency_requests = 100\neval.warmup = 5\n").unwrap();
    p.display().to_string()
}

#[test]
fn synth_bench_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let data_s = data.display().to_string();
    let o = hybridrec(&["synth", "--out", &data_s, "--users", "200", "--items", "80", "--seed", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["ratings.csv", "items.jsonl", "users.jsonl"] {
        assert!(data.join(f).exists(), "{f}");
    }

    let cfg = small_config(dir.path());
    let csv = dir.path().join("r.csv").display().to_string();
    let o = hybridrec(&["bench", "--data", &data_s, "--config", &cfg, "--rows", "gnn_only,hybrid_lora", "--out", &csv]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    let rows = parse_csv(&text).unwrap();
    assert_eq!(rows.iter().map(|r| r.config.as_str()).collect::<Vec<_>>(), ["GNN Only", "Hybrid + LoRA"]);
    assert!(rows.iter().all(|r| r.seed == 7 && (0.0..=1.0).contains(&r.ndcg_at_10)));

    let o = hybridrec(&["report", &csv, "--format", "table"]);
    assert_eq!(code(&o), 0);
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.starts_with("Configuration") && table.contains(" ± ") && table.contains("Hybrid + LoRA"));

    let o = hybridrec(&["report", &csv, "--tradeoff"]);
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("config,latency_mean_ms,ndcg_at_10\n"));
}

#[test]
fn train_writes_a_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let model = dir.path().join("m.bin");
    let o = hybridrec(&[
        "train", "--config", &cfg, "--rows", "hybrid_quant", "--users", "150", "--items", "60", "--seed", "4", "--out",
        &model.display().to_string(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = parse_csv(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(rows[0].config, "Hybrid + Quantization");
    assert_eq!(rows[0].seed, 4);
    let m = load_model(&model).unwrap();
    assert!(m.quantized);
    assert_eq!(m.params.dims.d_g, 8);
    assert!(m.graph.is_some());
}

#[test]
fn exit_codes() {
    assert_eq!(code(&hybridrec(&[])), 1);
    assert_eq!(code(&hybridrec(&["bench", "--bogus"])), 1);
    assert_eq!(code(&hybridrec(&["bench", "--rows", "nope"])), 1);
    assert_eq!(code(&hybridrec(&["bench", "--rows", "hybrid", "--format", "xml"])), 1);
    assert_eq!(code(&hybridrec(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing").display().to_string();
    assert_eq!(code(&hybridrec(&["bench", "--data", &missing])), 2);
    let bad = dir.path().join("ratings.csv");
    fs::write(&bad, "userId,movieId,rating,timestamp\n1,2,5,3\n1,oops\n").unwrap();
    let o = hybridrec(&["bench", "--data", &dir.path().display().to_string()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains(":3:"), "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = dir.path().join("inf.cfg");
    fs::write(&cfg, "training.lr = inf\n").unwrap();
    assert_eq!(code(&hybridrec(&["bench", "--config", &cfg.display().to_string()])), 1);
}
