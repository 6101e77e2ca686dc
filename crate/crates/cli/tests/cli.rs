// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dendrowave"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .map(|it| {
            it.map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
                .collect()
        })
        .unwrap_or_default();
    v.sort();
    v
}

#[test]
fn pipeline_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = run(&[
        "pipeline",
        "--events",
        s(&fixture("events.csv")),
        "--signal",
        s(&fixture("price.csv")),
        "--sweep",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        listing(&out),
        [
            "breakpoints_price.txt",
            "decomposition.csv",
            "dendrogram.json",
            "dendrogram.nwk",
            "factors.json",
            "fit_price.csv",
            "manifest.json",
            "sweep_price.csv",
            "table.csv",
        ]
    );
    let sweep = std::fs::read_to_string(out.join("sweep_price.csv")).unwrap();
    assert!(sweep.starts_with("keep,mse\n"));
    assert!(sweep.trim_end().ends_with(",0"), "{sweep}");
}

#[test]
fn both_inputs_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&[
        "pipeline",
        "--events",
        s(&fixture("events.csv")),
        "--table",
        s(&fixture("events.csv")),
        "--keep",
        "1",
        "--out",
        s(&tmp.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(listing(&tmp.path().join("out")).is_empty());
}

#[test]
fn bad_signal_is_named_and_nothing_is_written() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("short_series.csv");
    std::fs::write(&bad, "label,value\n2003-01,1\n").unwrap();
    let out = tmp.path().join("out");
    let o = run(&[
        "pipeline",
        "--events",
        s(&fixture("events.csv")),
        "--signal",
        s(&bad),
        "--keep",
        "2",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("short_series.csv"), "{stderr}");
    assert!(listing(&out).is_empty());
}

#[test]
fn malformed_events_exit_with_data_code() {
    let tmp = tempfile::tempdir().unwrap();
    let ev = tmp.path().join("ev.csv");
    std::fs::write(&ev, "date,a\n2003-01-04,1\nnot-a-date,2\n").unwrap();
    let o = run(&[
        "ingest",
        "--events",
        s(&ev),
        "--out",
        s(&tmp.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn stage_commands_chain_to_the_pipeline_result() {
    let tmp = tempfile::tempdir().unwrap();
    let d = |n: &str| tmp.path().join(n);
    let ok = |o: Output| assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    ok(run(&[
        "pipeline",
        "--events",
        s(&fixture("events.csv")),
        "--signal",
        s(&fixture("price.csv")),
        "--keep",
        "2",
        "--out",
        s(&d("full")),
    ]));
    ok(run(&[
        "ingest",
        "--events",
        s(&fixture("events.csv")),
        "--out",
        s(&d("i")),
    ]));
    ok(run(&[
        "ca",
        "--table",
        s(&d("i").join("table.csv")),
        "--out",
        s(&d("c")),
    ]));
    ok(run(&[
        "cluster",
        "--factors",
        s(&d("c").join("factors.json")),
        "--out",
        s(&d("t")),
    ]));
    ok(run(&[
        "haar",
        "--tree",
        s(&d("t").join("dendrogram.json")),
        "--factors",
        s(&d("c").join("factors.json")),
        "--out",
        s(&d("h")),
    ]));
    ok(run(&[
        "--sequential",
        "regress",
        "--tree",
        s(&d("t").join("dendrogram.json")),
        "--signal",
        s(&fixture("price.csv")),
        "--keep",
        "2",
        "--out",
        s(&d("r")),
    ]));
    ok(run(&[
        "sweep",
        "--tree",
        s(&d("t").join("dendrogram.json")),
        "--signal",
        s(&fixture("price.csv")),
        "--out",
        s(&d("s")),
    ]));

    let same = |a: PathBuf, b: PathBuf| {
        assert_eq!(
            std::fs::read_to_string(&a).unwrap(),
            std::fs::read_to_string(&b).unwrap(),
            "{} vs {}",
            a.display(),
            b.display()
        )
    };
    let full = d("full");
    same(full.join("table.csv"), d("i").join("table.csv"));
    same(full.join("factors.json"), d("c").join("factors.json"));
    same(full.join("dendrogram.json"), d("t").join("dendrogram.json"));
    same(full.join("dendrogram.nwk"), d("t").join("dendrogram.nwk"));
    same(
        full.join("decomposition.csv"),
        d("h").join("decomposition.csv"),
    );
    same(full.join("fit_price.csv"), d("r").join("fit_price.csv"));
    same(
        full.join("breakpoints_price.txt"),
        d("r").join("breakpoints_price.txt"),
    );
    same(full.join("sweep_price.csv"), d("s").join("sweep_price.csv"));
}

#[test]
fn keep_out_of_range_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&[
        "pipeline",
        "--events",
        s(&fixture("events.csv")),
        "--signal",
        s(&fixture("price.csv")),
        "--keep",
        "99",
        "--out",
        s(&tmp.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
