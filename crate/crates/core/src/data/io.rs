//! Line-delimited JSON dataset files.
//!
//! One sequence per line:
//!
//! ```text
//! {"id":"seq-0001","statics":{"f_init":…,"f_empty":…,"f_final":…,"d_cup":…,"h_cup":…,"d_cta":…,"h_cta":…,"rho":…},"steps":[{"theta":…,"f":…},…]}
//! ```
//!
//! Numbers are written with 17 significant digits, which round-trips every f64.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;
use serde_json::error::Category;

use super::{PouringSequence, StaticFeatures, TimeStep};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    statics: StaticsRecord,
    steps: Vec<StepRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StaticsRecord {
    f_init: f64,
    f_empty: f64,
    f_final: f64,
    d_cup: f64,
    h_cup: f64,
    d_cta: f64,
    h_cta: f64,
    rho: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepRecord {
    theta: f64,
    f: f64,
}

fn num(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String cannot fail");
}

fn encode(seq: &PouringSequence) -> String {
    let s = &seq.statics;
    let mut line = String::with_capacity(64 + 60 * seq.steps.len());
    line.push_str("{\"id\":");
    line.push_str(&serde_json::to_string(&seq.id).expect("strings always serialize"));
    line.push_str(",\"statics\":{");
    for (i, (name, v)) in [
        ("f_init", s.f_init),
        ("f_empty", s.f_empty),
        ("f_final", s.f_final),
        ("d_cup", s.d_cup),
        ("h_cup", s.h_cup),
        ("d_cta", s.d_cta),
        ("h_cta", s.h_cta),
        ("rho", s.rho),
    ]
    .into_iter()
    .enumerate()
    {
        if i > 0 {
            line.push(',');
        }
        write!(line, "\"{name}\":").unwrap();
        num(&mut line, v);
    }
    line.push_str("},\"steps\":[");
    for (i, st) in seq.steps.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        line.push_str("{\"theta\":");
        num(&mut line, st.theta_deg);
        line.push_str(",\"f\":");
        num(&mut line, st.f_lbf);
        line.push('}');
    }
    line.push_str("]}");
    line
}

fn decode(text: &str, line: usize) -> Result<PouringSequence> {
    let rec: Record = serde_json::from_str(text).map_err(|e| match e.classify() {
        Category::Data => Error::Schema { line, message: e.to_string() },
        _ => Error::Parse { line, message: e.to_string() },
    })?;
    let st = rec.statics;
    let seq = PouringSequence {
        id: rec.id,
        steps: rec.steps.into_iter().map(|s| TimeStep { theta_deg: s.theta, f_lbf: s.f }).collect(),
        statics: StaticFeatures {
            f_init: st.f_init,
            f_empty: st.f_empty,
            f_final: st.f_final,
            d_cup: st.d_cup,
            h_cup: st.h_cup,
            d_cta: st.d_cta,
            h_cta: st.h_cta,
            rho: st.rho,
        },
    };
    seq.validate().map_err(|e| Error::Schema { line, message: e.to_string() })?;
    Ok(seq)
}

pub fn write_dataset<W: Write>(seqs: &[PouringSequence], mut out: W) -> std::io::Result<()> {
    for seq in seqs {
        writeln!(out, "{}", encode(seq))?;
    }
    out.flush()
}

/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn read_dataset<R: BufRead>(input: R) -> Result<Vec<PouringSequence>> {
    let mut seqs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        if text.trim().is_empty() {
            continue;
        }
        seqs.push(decode(&text, line_no)?);
    }
    Ok(seqs)
}

pub fn save_dataset(seqs: &[PouringSequence], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(seqs, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<PouringSequence>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file))
}
