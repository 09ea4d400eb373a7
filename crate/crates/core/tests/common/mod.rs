#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gnas::evaluation::oracle::OracleTable;
use gnas::space::{lookup_space, SearchSpaceDef};
use serde_json::Value;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn test_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

/// Additive score computed straight from the weights file, without the
/// library's surrogate code: split the canonical by hand and sum.
pub fn additive_score(weights_file: &str, canonical: &str) -> f64 {
    let w: Value = serde_json::from_str(&std::fs::read_to_string(fixture(weights_file)).unwrap()).unwrap();
    let mut total = w["base"].as_f64().unwrap();
    for seg in canonical.split('|').skip(1) {
        let (k, v) = seg.split_once('=').unwrap();
        if k != "conn" {
            total += w["weights"][k][v].as_f64().unwrap();
        }
    }
    (total * 1e4).round() / 1e4
}

/// Best canonical of `space` under the weights file, by exhaustive
/// enumeration; the smallest canonical wins ties.
pub fn exhaustive_argmax(space: &SearchSpaceDef, weights_file: &str) -> (String, f64) {
    let mut best = (String::new(), f64::MIN);
    for d in space.enumerate() {
        let c = d.canonical();
        let v = additive_score(weights_file, &c);
        if v > best.1 {
            best = (c, v);
        }
    }
    best
}

pub fn nbg_full_table() -> OracleTable {
    OracleTable::load(fixture("oracle_nbg_full.json"), &lookup_space("nbg").unwrap()).unwrap()
}

/// Maximum of the raw table file, read without the library.
pub fn raw_table_max(file: &str) -> (String, f64) {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(fixture(file)).unwrap()).unwrap();
    let mut best = (String::new(), f64::MIN);
    for (k, x) in v["entries"].as_object().unwrap() {
        let x = x.as_f64().unwrap();
        if x > best.1 {
            best = (k.clone(), x);
        }
    }
    best
}

pub fn corpus() -> Vec<String> {
    std::fs::read_to_string(fixture("corpus.txt"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

/// One adversarial completion and the diagnostics it must produce when
/// `N` proposals are requested in autogel:v1.
pub struct Case {
    pub name: &'static str,
    pub completion: String,
    pub accepted: usize,
    pub rejected: BTreeMap<&'static str, usize>,
    pub truncated: usize,
}

pub const ADVERSARIAL_N: usize = 5;

fn autogel(l1: &str, l2: &str, skip: &str, pool: &str) -> String {
    format!(
        "autogel:v1|conn=stack2|l1.act=relu|l1.agg={l1}|l1.comb=sum|l2.act=relu|l2.agg={l2}|l2.comb=sum|pool={pool}|skip={skip}"
    )
}

fn classes(pairs: &[(&'static str, usize)]) -> BTreeMap<&'static str, usize> {
    pairs.iter().copied().collect()
}

pub fn adversarial_cases() -> Vec<Case> {
    let a = autogel("add", "add", "none", "none");
    let b = autogel("mean", "max", "res", "mean");
    let c = autogel("max", "mean", "jk", "sum");
    let foreign = "nbg:v1|conn=chain|op0=gcn|op1=gcn|op2=gcn|op3=gcn";
    let many: Vec<String> = ["add", "mean", "max"]
        .iter()
        .flat_map(|x| ["none", "res", "jk"].iter().map(move |s| autogel(x, "add", s, "max")))
        .take(7)
        .collect();
    vec![
        Case {
            name: "prose only",
            completion: "I think a deep model with attention would do well here.\nLet me know how it goes.".into(),
            accepted: 0,
            rejected: classes(&[("unparseable", 2)]),
            truncated: 0,
        },
        Case {
            name: "empty",
            completion: String::new(),
            accepted: 0,
            rejected: classes(&[]),
            truncated: 0,
        },
        Case {
            name: "fenced with chatter outside",
            completion: format!("Here you go:\n```\n{a}\n{b}\n```\nGood luck!"),
            accepted: 2,
            rejected: classes(&[]),
            truncated: 0,
        },
        Case {
            name: "unterminated fence",
            completion: format!("```text\n{a}\n{b}"),
            accepted: 2,
            rejected: classes(&[]),
            truncated: 0,
        },
        Case {
            name: "duplicates",
            completion: format!("```\n{a}\n{a}\n{b}\n{a}\n```"),
            accepted: 2,
            rejected: classes(&[("duplicate", 2)]),
            truncated: 0,
        },
        Case {
            name: "foreign space",
            completion: format!("```\n{foreign}\n{a}\n```"),
            accepted: 1,
            rejected: classes(&[("wrong_space", 1)]),
            truncated: 0,
        },
        Case {
            name: "numbered and bulleted",
            completion: format!("1. {a}\n2) {b}\n- {c}"),
            accepted: 3,
            rejected: classes(&[]),
            truncated: 0,
        },
        Case {
            name: "unknown operation",
            completion: format!("```\n{}\n{b}\n```", a.replace("l1.agg=add", "l1.agg=sum")),
            accepted: 1,
            rejected: classes(&[("unknown_operation", 1)]),
            truncated: 0,
        },
        Case {
            name: "unknown and missing slots",
            completion: format!(
                "```\n{}\n{}\n```",
                a.replace("skip=none", "bogus=none"),
                a.replace("|pool=none", "")
            ),
            accepted: 0,
            rejected: classes(&[("unknown_slot", 1), ("unparseable", 1)]),
            truncated: 0,
        },
        Case {
            name: "too many",
            completion: format!("```\n{}\n```", many.join("\n")),
            accepted: 5,
            rejected: classes(&[]),
            truncated: 2,
        },
        Case {
            name: "reordered in backticks",
            completion: format!(
                "`autogel:v1|skip=jk|pool=sum|l2.comb=sum|l2.agg=mean|l2.act=relu|l1.comb=sum|l1.agg=max|l1.act=relu|conn=stack2`\n\
                 {c}"
            ),
            accepted: 1,
            rejected: classes(&[("duplicate", 1)]),
            truncated: 0,
        },
        Case {
            name: "two fences mixed",
            completion: format!(
                "```\n{a}\n```\nAlso consider {c}\n```\nnote: these are good\n{a}\n{}\n```",
                b.replace("autogel:v1", "autogel:v2")
            ),
            accepted: 1,
            rejected: classes(&[("unparseable", 1), ("duplicate", 1), ("wrong_space", 1)]),
            truncated: 0,
        },
    ]
}
