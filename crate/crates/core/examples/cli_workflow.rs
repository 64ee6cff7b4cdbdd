//! Runs the command-line workflow in-process: generate data, build IVs,
//! train, evaluate and export.
//!
//! ```bash
//! cargo run --release --example cli_workflow
//! ```

use iv4rec::cli;

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let steps: Vec<Vec<String>> = vec![
        vec!["gen-synthetic", "--seed", "7", "--out", &p("data")],
        vec![
            "build-ivs", "--search", &p("data/search.tsv"), "--queries", &p("data/queries.tsv"), "--items",
            &p("data/items.tsv"), "-N", "5", "--out", &p("ivs.tsv"),
        ],
        vec![
            "train", "--rec", &p("data/rec.tsv"), "--items", &p("data/items.tsv"), "--contexts",
            &p("data/contexts.tsv"), "--iv-store", &p("ivs.tsv"), "--model", "nrhub_lite", "--variant", "weighted",
            "--epochs", "3", "--out", &p("run"),
        ],
        vec![
            "eval", "--checkpoint", &p("run/checkpoint.json"), "--test", &p("run/test.tsv"), "--history",
            &p("data/rec.tsv"), "--items", &p("data/items.tsv"), "--contexts", &p("data/contexts.tsv"),
            "--iv-store", &p("ivs.tsv"), "--out", &p("eval"),
        ],
        vec![
            "export-embeddings", "--checkpoint", &p("run/checkpoint.json"), "--items", &p("data/items.tsv"),
            "--iv-store", &p("ivs.tsv"), "--out", &p("emb.tsv"),
        ],
    ]
    .into_iter()
    .map(|s| s.into_iter().map(String::from).collect())
    .collect();

    for args in steps {
        println!("$ iv4rec {}", args.join(" "));
        let code = cli::run(std::iter::once("iv4rec".to_string()).chain(args));
        if code != cli::EXIT_OK {
            eprintln!("step failed with exit code {code}");
            std::process::exit(code);
        }
    }
    let metrics = std::fs::read_to_string(dir.path().join("eval/metrics.json")).expect("eval output");
    println!("\n{metrics}");
}
