//! Strategy tables as CSV: `t,kind,state,prefix,control`.
//!
//! One row per time, state and (for adapted policies) uncertainty prefix.
//! `prefix` lists the past uncertainty labels joined by `/`, empty for Markov
//! rows and at time 0.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use resilience_core::strategy::{prefix_count, prefix_from_rank};
use resilience_core::{Policy, Strategy, SystemModel};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    t: usize,
    kind: String,
    state: String,
    prefix: String,
    control: String,
}

#[derive(Debug, thiserror::Error)]
pub enum StrategyFileError {
    #[error("strategy file: {0}")]
    Csv(#[from] csv::Error),
    #[error("strategy file row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("strategy file: {0}")]
    Shape(String),
}

fn prefix_text(model: &SystemModel, t: usize, rank: usize) -> String {
    prefix_from_rank(model, t, rank)
        .iter()
        .enumerate()
        .map(|(r, &w)| model.uncertainty().sets()[r][w].as_str())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn write_strategy(model: &SystemModel, strategy: &Strategy) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (t, policy) in strategy.policies().iter().enumerate() {
        let n = policy.table().len() / model.n_states();
        for x in 0..model.n_states() {
            for rank in 0..n {
                let (kind, prefix) = match policy {
                    Policy::Markov(_) => ("markov", String::new()),
                    Policy::Adapted(_) => ("adapted", prefix_text(model, t, rank)),
                };
                w.serialize(Row {
                    t,
                    kind: kind.into(),
                    state: model.state_label(x).into(),
                    prefix,
                    control: model.controls().label(policy.table()[x * n + rank]).into(),
                })
                .expect("writing to memory");
            }
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("labels are UTF-8")
}

pub fn read_strategy(model: &SystemModel, text: &str) -> Result<Strategy, StrategyFileError> {
    let k = model.horizon();
    let nx = model.n_states();
    let mut kinds: Vec<Option<bool>> = vec![None; k];
    let mut cells: BTreeMap<(usize, usize, usize), (usize, usize)> = BTreeMap::new();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row_no = i + 2;
        let bad = |message: String| StrategyFileError::Row { row: row_no, message };
        let r = row?;
        if r.t >= k {
            return Err(bad(format!("time {} beyond horizon {k}", r.t)));
        }
        let adapted = match r.kind.as_str() {
            "markov" => false,
            "adapted" => true,
            other => return Err(bad(format!("unknown kind `{other}`; expected markov or adapted"))),
        };
        if let Some(prev) = kinds[r.t].replace(adapted) {
            if prev != adapted {
                return Err(bad(format!("time {} mixes markov and adapted rows", r.t)));
            }
        }
        let x = model.state_index(&r.state).ok_or_else(|| bad(format!("unknown state `{}`", r.state)))?;
        let u = model
            .control_index(&r.control)
            .ok_or_else(|| bad(format!("unknown control `{}`", r.control)))?;
        let rank = if adapted {
            let labels: Vec<&str> = if r.prefix.is_empty() { Vec::new() } else { r.prefix.split('/').collect() };
            if labels.len() != r.t {
                return Err(bad(format!("prefix `{}` must list {} labels", r.prefix, r.t)));
            }
            let mut rank = 0;
            for (s, l) in labels.iter().enumerate() {
                let w = model
                    .noise_index(s, l)
                    .ok_or_else(|| bad(format!("unknown uncertainty label `{l}` at time {s}")))?;
                rank = rank * model.n_noise(s) + w;
            }
            rank
        } else {
            if !r.prefix.is_empty() {
                return Err(bad("markov rows take an empty prefix".into()));
            }
            0
        };
        if let Some((prev, _)) = cells.insert((r.t, x, rank), (row_no, u)) {
            return Err(bad(format!("duplicate entry (first at row {prev})")));
        }
    }
    let mut policies = Vec::with_capacity(k);
    for (t, kind) in kinds.iter().enumerate() {
        let adapted = kind.ok_or_else(|| StrategyFileError::Shape(format!("no rows for time {t}")))?;
        let n = if adapted { prefix_count(model, t) as usize } else { 1 };
        let mut table = Vec::with_capacity(nx * n);
        for x in 0..nx {
            for rank in 0..n {
                let (_, u) = cells.get(&(t, x, rank)).ok_or_else(|| {
                    StrategyFileError::Shape(format!(
                        "missing entry at time {t}, state {}{}",
                        model.state_label(x),
                        if adapted { format!(", prefix `{}`", prefix_text(model, t, rank)) } else { String::new() }
                    ))
                })?;
                table.push(*u);
            }
        }
        policies.push(if adapted { Policy::Adapted(table) } else { Policy::Markov(table) });
    }
    Ok(Strategy::new(policies))
}
