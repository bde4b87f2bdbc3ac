//! The line/section model file format.
//!
//! ```text
//! # comments run to end of line
//! [time]
//! horizon = 3
//!
//! [states]            # label : coordinates (default: the row index)
//! low : 0
//! high : 1
//!
//! [controls]
//! rest : 0
//! push : 1
//!
//! [uncertainty]       # `*` applies to every time; explicit times override it
//! set * : calm storm
//! prob * : 0.5 0.5
//! robust * : calm
//! robust_scenario : calm storm calm     # explicit robust list, one label per time
//! joint : calm calm calm = 0.125        # joint distribution entry
//!
//! [dynamics]          # t x u w -> x'   (target `∂` is the cemetery)
//! * low push calm -> high
//! 0 low push storm -> ∂
//!
//! [constraints]       # t x : allowed controls (default: all)
//! * high : rest
//!
//! [cost]              # tables for the tabular cost (default 0)
//! state * : 0 1
//! control * : 0 0.5
//!
//! [risk]
//! kind = composed
//! cost = control_effort
//! outer = cvar 0.25
//!
//! [regime]
//! kind = viability
//! set = high
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use resilience_core::model::PROBABILITY_SUM_TOL;
use resilience_core::{
    CostFunction, CostKind, Outer, PointSet, RegimeSpec, RiskMeasureSpec, Scenario, Subset, SystemModel, TimeGrid,
    UncertaintyStructure,
};

/// Label written for the cemetery state.
pub const CEMETERY: &str = "∂";

const SECTIONS: [&str; 9] = [
    "time",
    "states",
    "controls",
    "uncertainty",
    "dynamics",
    "constraints",
    "cost",
    "risk",
    "regime",
];

const REGIME_KINDS: [&str; 9] = [
    "viability",
    "robust_recovery",
    "stochastic_viability",
    "bounded",
    "prob_excursion",
    "at_most_k_exits",
    "stabilize",
    "control_event",
    "risk_containment",
];

const RISK_KINDS: [&str; 5] = [
    "worst_case_violation",
    "exceedance",
    "ambiguity_exceedance",
    "exit_count",
    "composed",
];

const COST_KINDS: [&str; 5] = ["time_outside", "control_effort", "terminal", "tabular", "recovery_time"];

/// A parsed model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: SystemModel,
    pub regime: RegimeSpec,
    pub risk: Option<RiskMeasureSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

type PResult<T> = std::result::Result<T, ParseError>;

fn err<T>(line: usize, message: impl Into<String>) -> PResult<T> {
    Err(ParseError {
        line,
        message: message.into(),
    })
}

struct Section<'a> {
    line: usize,
    rows: Vec<(usize, &'a str)>,
}

fn is_valid_label(s: &str) -> bool {
    !s.is_empty()
        && s != "*"
        && s != CEMETERY
        && !s.chars().any(|c| c.is_whitespace() || ":=#[],/".contains(c))
}

fn split_sections(text: &str) -> PResult<BTreeMap<&str, Section<'_>>> {
    let mut sections: BTreeMap<&str, Section> = BTreeMap::new();
    let mut current: Option<&str> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|c| c.strip_suffix(']')) {
            let name = name.trim();
            let Some(&known) = SECTIONS.iter().find(|&&s| s == name) else {
                return err(line, format!("unknown section [{name}]; expected one of: {}", SECTIONS.join(", ")));
            };
            if let Some(prev) = sections.get(known) {
                return err(line, format!("duplicate section [{known}] (first at line {})", prev.line));
            }
            sections.insert(known, Section { line, rows: Vec::new() });
            current = Some(known);
            continue;
        }
        match current {
            Some(name) => sections.get_mut(name).expect("inserted").rows.push((line, content)),
            None => return err(line, "content before the first section header"),
        }
    }
    Ok(sections)
}

/// `left : right`, both trimmed.
fn split_colon(line: usize, row: &str) -> PResult<(&str, &str)> {
    match row.split_once(':') {
        Some((l, r)) => Ok((l.trim(), r.trim())),
        None => err(line, format!("expected `… : …`, found `{row}`")),
    }
}

fn key_value(line: usize, row: &str) -> PResult<(&str, &str)> {
    match row.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim(), v.trim())),
        _ => err(line, format!("expected `key = value`, found `{row}`")),
    }
}

fn parse_f64(line: usize, s: &str) -> PResult<f64> {
    s.parse::<f64>()
        .map_err(|_| ParseError {
            line,
            message: format!("`{s}` is not a number"),
        })
}

fn parse_usize(line: usize, s: &str) -> PResult<usize> {
    s.parse::<usize>().map_err(|_| ParseError {
        line,
        message: format!("`{s}` is not a nonnegative integer"),
    })
}

/// Time selector `*` or an index below `bound`.
fn parse_times(line: usize, s: &str, bound: usize) -> PResult<Option<usize>> {
    if s == "*" {
        return Ok(None);
    }
    let t = parse_usize(line, s)?;
    if t >= bound {
        return err(line, format!("time {t} out of range (must be below {bound})"));
    }
    Ok(Some(t))
}

fn required<'a>(sections: &'a BTreeMap<&str, Section<'a>>, name: &str) -> PResult<&'a Section<'a>> {
    sections.get(name).ok_or_else(|| ParseError {
        line: 0,
        message: format!("missing section [{name}]"),
    })
}

fn parse_points(section: &Section) -> PResult<PointSet> {
    let mut labels = Vec::new();
    let mut coords = Vec::new();
    for &(line, row) in &section.rows {
        let (label, c) = match row.split_once(':') {
            Some((l, r)) => (l.trim(), Some(r.trim())),
            None => (row, None),
        };
        if !is_valid_label(label) {
            return err(line, format!("invalid label `{label}`"));
        }
        if labels.iter().any(|l: &String| l == label) {
            return err(line, format!("duplicate label `{label}`"));
        }
        let point = match c {
            Some(c) => c.split_whitespace().map(|v| parse_f64(line, v)).collect::<PResult<Vec<_>>>()?,
            None => vec![labels.len() as f64],
        };
        if point.is_empty() {
            return err(line, format!("`{label}` has no coordinates"));
        }
        if let Some(first) = coords.first() {
            let first: &Vec<f64> = first;
            if first.len() != point.len() {
                return err(line, format!("`{label}` has {} coordinates, expected {}", point.len(), first.len()));
            }
        }
        labels.push(label.to_string());
        coords.push(point);
    }
    if labels.is_empty() {
        return err(section.line, "no points declared");
    }
    PointSet::new(labels, coords).map_err(|e| ParseError {
        line: section.line,
        message: e.to_string(),
    })
}

/// Per-time values with `*` defaults and explicit overrides.
struct PerTime<T> {
    wildcard: Option<(usize, T)>,
    explicit: BTreeMap<usize, (usize, T)>,
}

impl<T: Clone> PerTime<T> {
    fn new() -> Self {
        PerTime {
            wildcard: None,
            explicit: BTreeMap::new(),
        }
    }

    fn set(&mut self, line: usize, t: Option<usize>, v: T, what: &str) -> PResult<()> {
        let slot = match t {
            None => self.wildcard.replace((line, v)).map(|p| p.0),
            Some(t) => self.explicit.insert(t, (line, v)).map(|p| p.0),
        };
        match slot {
            Some(prev) => err(line, format!("duplicate {what} row (first at line {prev})")),
            None => Ok(()),
        }
    }

    fn get(&self, t: usize) -> Option<&(usize, T)> {
        self.explicit.get(&t).or(self.wildcard.as_ref())
    }

    fn is_empty(&self) -> bool {
        self.wildcard.is_none() && self.explicit.is_empty()
    }
}

fn noise_index(sets: &[Vec<String>], t: usize, label: &str) -> Option<usize> {
    sets[t].iter().position(|l| l == label)
}

fn parse_scenario(line: usize, sets: &[Vec<String>], labels: &str) -> PResult<Scenario> {
    let tokens: Vec<&str> = labels.split_whitespace().collect();
    if tokens.len() != sets.len() {
        return err(line, format!("scenario has {} entries, horizon is {}", tokens.len(), sets.len()));
    }
    tokens
        .iter()
        .enumerate()
        .map(|(t, l)| {
            noise_index(sets, t, l).ok_or_else(|| ParseError {
                line,
                message: format!("unknown uncertainty label `{l}` at time {t}"),
            })
        })
        .collect::<PResult<Vec<_>>>()
        .map(Scenario)
}

fn parse_uncertainty(section: &Section, k: usize) -> PResult<UncertaintyStructure> {
    let mut sets = PerTime::<Vec<String>>::new();
    let mut probs = PerTime::<Vec<f64>>::new();
    let mut robust = PerTime::<Vec<String>>::new();
    let mut scenario_rows = Vec::new();
    let mut joint_rows = Vec::new();
    for &(line, row) in &section.rows {
        let (head, rest) = split_colon(line, row)?;
        let mut words = head.split_whitespace();
        let kind = words.next().unwrap_or("");
        let selector = words.next();
        if words.next().is_some() {
            return err(line, format!("unexpected tokens in `{head}`"));
        }
        match (kind, selector) {
            ("set", Some(sel)) => {
                let labels: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                if let Some(bad) = labels.iter().find(|l| !is_valid_label(l)) {
                    return err(line, format!("invalid uncertainty label `{bad}`"));
                }
                let distinct: BTreeSet<&String> = labels.iter().collect();
                if labels.is_empty() || distinct.len() != labels.len() {
                    return err(line, "uncertainty set must be nonempty with distinct labels");
                }
                sets.set(line, parse_times(line, sel, k)?, labels, "set")?;
            }
            ("prob", Some(sel)) => {
                let p = rest.split_whitespace().map(|v| parse_f64(line, v)).collect::<PResult<Vec<_>>>()?;
                probs.set(line, parse_times(line, sel, k)?, p, "prob")?;
            }
            ("robust", Some(sel)) => {
                let labels: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
                robust.set(line, parse_times(line, sel, k)?, labels, "robust")?;
            }
            ("robust_scenario", None) => scenario_rows.push((line, rest)),
            ("joint", None) => joint_rows.push((line, rest)),
            _ => {
                return err(
                    line,
                    format!("unknown uncertainty row `{head}`; expected set, prob, robust, robust_scenario or joint"),
                )
            }
        }
    }
    let mut all_sets = Vec::with_capacity(k);
    for t in 0..k {
        match sets.get(t) {
            Some((_, s)) => all_sets.push(s.clone()),
            None => return err(section.line, format!("no uncertainty set for time {t}")),
        }
    }
    let mut u = UncertaintyStructure::new(all_sets.clone());
    if !probs.is_empty() {
        let mut p = Vec::with_capacity(k);
        for (t, set) in all_sets.iter().enumerate() {
            let Some((line, v)) = probs.get(t) else {
                return err(section.line, format!("no prob row for time {t}"));
            };
            if v.len() != set.len() {
                return err(*line, format!("{} probabilities for {} labels at time {t}", v.len(), set.len()));
            }
            if let Some(bad) = v.iter().find(|&&x| !(x >= 0.0)) {
                return err(*line, format!("negative probability {bad}"));
            }
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
                return err(*line, format!("probabilities sum to {sum} ≠ 1"));
            }
            p.push(v.clone());
        }
        u = u.with_probabilities(p);
    }
    if !robust.is_empty() {
        let mut subsets = Vec::with_capacity(k);
        for (t, set) in all_sets.iter().enumerate() {
            let Some((line, labels)) = robust.get(t) else {
                return err(section.line, format!("no robust row for time {t}"));
            };
            let mut s = Subset::empty(set.len());
            for l in labels {
                match noise_index(&all_sets, t, l) {
                    Some(w) => s.insert(w),
                    None => return err(*line, format!("unknown uncertainty label `{l}` at time {t}")),
                }
            }
            if s.is_empty() {
                return err(*line, format!("robust subset at time {t} is empty"));
            }
            subsets.push(s);
        }
        u = u.with_robust(subsets);
    }
    if !scenario_rows.is_empty() {
        let list = scenario_rows
            .iter()
            .map(|&(line, rest)| parse_scenario(line, &all_sets, rest))
            .collect::<PResult<Vec<_>>>()?;
        u = u.with_robust_scenarios(list);
    }
    if !joint_rows.is_empty() {
        let mut entries = Vec::new();
        let mut seen = BTreeMap::new();
        let mut sum = 0.0;
        for &(line, rest) in &joint_rows {
            let (labels, p) = key_value(line, rest)?;
            let s = parse_scenario(line, &all_sets, labels)?;
            let p = parse_f64(line, p)?;
            if !(p >= 0.0) {
                return err(line, format!("negative probability {p}"));
            }
            if let Some(prev) = seen.insert(s.clone(), line) {
                return err(line, format!("duplicate joint entry (first at line {prev})"));
            }
            sum += p;
            entries.push((s, p));
        }
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
            return err(joint_rows[0].0, format!("probabilities sum to {sum} ≠ 1"));
        }
        u = u.with_joint(entries);
    }
    Ok(u)
}

fn state_ref(states: &PointSet, line: usize, label: &str) -> PResult<usize> {
    states.index_of(label).ok_or_else(|| ParseError {
        line,
        message: format!("unknown state `{label}`"),
    })
}

fn control_ref(controls: &PointSet, line: usize, label: &str) -> PResult<usize> {
    controls.index_of(label).ok_or_else(|| ParseError {
        line,
        message: format!("unknown control `{label}`"),
    })
}

fn state_subset(states: &PointSet, line: usize, labels: &str) -> PResult<Subset> {
    let mut s = Subset::empty(states.len());
    for l in labels.split_whitespace() {
        s.insert(state_ref(states, line, l)?);
    }
    Ok(s)
}

type DynamicsTable = Vec<Vec<Vec<Vec<usize>>>>;

fn parse_dynamics(section: &Section, states: &PointSet, controls: &PointSet, sets: &[Vec<String>]) -> PResult<DynamicsTable> {
    let k = sets.len();
    let (nx, nu) = (states.len(), controls.len());
    // (target, line, explicit)
    let mut cells: Vec<Vec<Vec<Vec<Option<(usize, usize, bool)>>>>> =
        (0..k).map(|t| vec![vec![vec![None; sets[t].len()]; nu]; nx]).collect();
    for &(line, row) in &section.rows {
        let Some((lhs, rhs)) = row.split_once("->") else {
            return err(line, format!("expected `t x u w -> x'`, found `{row}`"));
        };
        let tokens: Vec<&str> = lhs.split_whitespace().collect();
        if tokens.len() != 4 {
            return err(line, format!("expected `t x u w -> x'`, found `{row}`"));
        }
        let times = parse_times(line, tokens[0], k)?;
        let x = state_ref(states, line, tokens[1])?;
        let u = control_ref(controls, line, tokens[2])?;
        let target = match rhs.trim() {
            CEMETERY | "cemetery" => nx,
            l => state_ref(states, line, l)?,
        };
        let explicit = times.is_some();
        let ts: Vec<usize> = match times {
            Some(t) => vec![t],
            None => (0..k).filter(|&t| noise_index(sets, t, tokens[3]).is_some()).collect(),
        };
        if ts.is_empty() || (explicit && noise_index(sets, ts[0], tokens[3]).is_none()) {
            return err(line, format!("unknown uncertainty label `{}`", tokens[3]));
        }
        for t in ts {
            let w = noise_index(sets, t, tokens[3]).expect("filtered");
            let cell = &mut cells[t][x][u][w];
            match cell {
                Some((_, prev, prev_explicit)) if *prev_explicit == explicit => {
                    return err(line, format!("duplicate dynamics row (first at line {prev})"));
                }
                Some((_, _, true)) => {}
                _ => *cell = Some((target, line, explicit)),
            }
        }
    }
    let mut table = Vec::with_capacity(k);
    for (t, block) in cells.into_iter().enumerate() {
        let mut rows = Vec::with_capacity(nx);
        for (x, row) in block.into_iter().enumerate() {
            let mut out = Vec::with_capacity(nu);
            for (u, cell) in row.into_iter().enumerate() {
                let mut ws = Vec::with_capacity(cell.len());
                for (w, v) in cell.into_iter().enumerate() {
                    match v {
                        Some((y, _, _)) => ws.push(y),
                        None => {
                            return err(
                                section.line,
                                format!(
                                    "dynamics not total at (t={t}, x={}, u={}, w={})",
                                    states.label(x),
                                    controls.label(u),
                                    sets[t][w]
                                ),
                            )
                        }
                    }
                }
                out.push(ws);
            }
            rows.push(out);
        }
        table.push(rows);
    }
    Ok(table)
}

fn parse_constraints(section: Option<&Section>, states: &PointSet, controls: &PointSet, k: usize) -> PResult<Vec<Vec<Subset>>> {
    let mut per_state: Vec<PerTime<Subset>> = (0..states.len()).map(|_| PerTime::new()).collect();
    for &(line, row) in section.map(|s| s.rows.as_slice()).unwrap_or(&[]) {
        let (head, rest) = split_colon(line, row)?;
        let tokens: Vec<&str> = head.split_whitespace().collect();
        if tokens.len() != 2 {
            return err(line, format!("expected `t x : controls`, found `{row}`"));
        }
        let t = parse_times(line, tokens[0], k)?;
        let x = state_ref(states, line, tokens[1])?;
        let mut allowed = Subset::empty(controls.len());
        for l in rest.split_whitespace() {
            allowed.insert(control_ref(controls, line, l)?);
        }
        if allowed.is_empty() {
            return err(line, "constraint set is empty");
        }
        per_state[x].set(line, t, allowed, "constraint")?;
    }
    Ok((0..k)
        .map(|t| {
            per_state
                .iter()
                .map(|p| p.get(t).map(|(_, s)| s.clone()).unwrap_or_else(|| Subset::full(controls.len())))
                .collect()
        })
        .collect())
}

fn parse_cost_tables(section: Option<&Section>, model: &SystemModel) -> PResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let (k, nx, nu) = (model.horizon(), model.n_states(), model.n_controls());
    let mut state = PerTime::<Vec<f64>>::new();
    let mut control = PerTime::<Vec<f64>>::new();
    for &(line, row) in section.map(|s| s.rows.as_slice()).unwrap_or(&[]) {
        let (head, rest) = split_colon(line, row)?;
        let tokens: Vec<&str> = head.split_whitespace().collect();
        let values = rest.split_whitespace().map(|v| parse_f64(line, v)).collect::<PResult<Vec<_>>>()?;
        match tokens.as_slice() {
            ["state", sel] => {
                if values.len() != nx {
                    return err(line, format!("{} state costs for {nx} states", values.len()));
                }
                state.set(line, parse_times(line, sel, k + 1)?, values, "state cost")?;
            }
            ["control", sel] => {
                if values.len() != nu {
                    return err(line, format!("{} control costs for {nu} controls", values.len()));
                }
                control.set(line, parse_times(line, sel, k)?, values, "control cost")?;
            }
            _ => return err(line, format!("expected `state <t|*> : …` or `control <t|*> : …`, found `{row}`")),
        }
    }
    let state = (0..=k).map(|t| state.get(t).map(|p| p.1.clone()).unwrap_or_else(|| vec![0.0; nx])).collect();
    let control = (0..k).map(|t| control.get(t).map(|p| p.1.clone()).unwrap_or_else(|| vec![0.0; nu])).collect();
    Ok((state, control))
}

/// `key = value` rows of a section, rejecting unknown and repeated keys.
struct Keys<'a> {
    section_line: usize,
    section: &'static str,
    values: BTreeMap<&'a str, (usize, &'a str)>,
}

impl<'a> Keys<'a> {
    fn new(section: &'a Section<'a>, name: &'static str, allowed: &[&str], extra: &mut Vec<(usize, &'a str)>) -> PResult<Self> {
        let mut values = BTreeMap::new();
        for &(line, row) in &section.rows {
            if !row.contains('=') {
                extra.push((line, row));
                continue;
            }
            let (k, v) = key_value(line, row)?;
            if !allowed.contains(&k) {
                return err(line, format!("unknown key `{k}` in [{name}]; expected one of: {}", allowed.join(", ")));
            }
            if let Some((prev, _)) = values.insert(k, (line, v)) {
                return err(line, format!("duplicate key `{k}` (first at line {prev})"));
            }
        }
        Ok(Keys {
            section_line: section.line,
            section: name,
            values,
        })
    }

    fn get(&self, key: &str) -> Option<(usize, &'a str)> {
        self.values.get(key).copied()
    }

    fn need(&self, key: &str) -> PResult<(usize, &'a str)> {
        self.get(key).ok_or_else(|| ParseError {
            line: self.section_line,
            message: format!("[{}] is missing `{key}`", self.section),
        })
    }

    fn kind(&self, kinds: &[&str]) -> PResult<(usize, &'a str)> {
        let (line, kind) = self.need("kind")?;
        if !kinds.contains(&kind) {
            return err(line, format!("unknown {} kind `{kind}`; expected one of: {}", self.section, kinds.join(", ")));
        }
        Ok((line, kind))
    }
}

fn parse_outer(line: usize, s: &str) -> PResult<Outer> {
    let tokens: Vec<&str> = s.split_whitespace().collect();
    match tokens.as_slice() {
        ["expectation"] => Ok(Outer::Expectation),
        ["worst_case"] => Ok(Outer::WorstCase),
        ["cvar", a] => Ok(Outer::Cvar(parse_f64(line, a)?)),
        _ => err(line, format!("unknown outer `{s}`; expected expectation, worst_case or cvar <alpha>")),
    }
}

fn parse_risk(section: &Section, model: &SystemModel, cost_section: Option<&Section>) -> PResult<RiskMeasureSpec> {
    let mut member_rows = Vec::new();
    let keys = Keys::new(
        section,
        "risk",
        &["kind", "set", "outer", "cost", "effort", "cemetery_penalty"],
        &mut member_rows,
    )?;
    let (_, kind) = keys.kind(&RISK_KINDS)?;
    let set = |keys: &Keys| -> PResult<Subset> {
        let (line, v) = keys.need("set")?;
        state_subset(model.states(), line, v)
    };
    let outer = |keys: &Keys| -> PResult<Outer> {
        let (line, v) = keys.need("outer")?;
        parse_outer(line, v)
    };
    if kind != "ambiguity_exceedance" {
        if let Some(&(line, row)) = member_rows.first() {
            return err(line, format!("unexpected row `{row}` in [risk]"));
        }
    }
    let spec = match kind {
        "worst_case_violation" => RiskMeasureSpec::WorstCaseViolation(set(&keys)?),
        "exceedance" => RiskMeasureSpec::Exceedance(set(&keys)?),
        "exit_count" => RiskMeasureSpec::ExitCount {
            set: set(&keys)?,
            outer: outer(&keys)?,
        },
        "ambiguity_exceedance" => {
            let k = model.horizon();
            let mut members: BTreeMap<usize, PerTime<Vec<f64>>> = BTreeMap::new();
            for &(line, row) in &member_rows {
                let (head, rest) = split_colon(line, row)?;
                let tokens: Vec<&str> = head.split_whitespace().collect();
                let ["member", i, sel] = tokens.as_slice() else {
                    return err(line, format!("expected `member <i> <t|*> : probabilities`, found `{row}`"));
                };
                let i = parse_usize(line, i)?;
                let p = rest.split_whitespace().map(|v| parse_f64(line, v)).collect::<PResult<Vec<_>>>()?;
                members.entry(i).or_insert_with(PerTime::new).set(line, parse_times(line, sel, k)?, p, "member")?;
            }
            let mut family = Vec::new();
            for (i, m) in &members {
                let mut assignment = Vec::with_capacity(k);
                for t in 0..k {
                    let Some((line, p)) = m.get(t) else {
                        return err(section.line, format!("member {i} has no probabilities for time {t}"));
                    };
                    if p.len() != model.n_noise(t) {
                        return err(*line, format!("{} probabilities for {} labels at time {t}", p.len(), model.n_noise(t)));
                    }
                    let sum: f64 = p.iter().sum();
                    if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
                        return err(*line, format!("probabilities sum to {sum} ≠ 1"));
                    }
                    assignment.push(p.clone());
                }
                family.push(assignment);
            }
            RiskMeasureSpec::AmbiguityExceedance { set: set(&keys)?, family }
        }
        _ => {
            let (cost_line, cost_kind) = keys.need("cost")?;
            let kind = match cost_kind {
                "time_outside" => CostKind::TimeOutside(set(&keys)?),
                "terminal" => CostKind::Terminal(set(&keys)?),
                "recovery_time" => CostKind::RecoveryOffset(set(&keys)?),
                "control_effort" => CostKind::ControlEffort(match keys.get("effort") {
                    Some((line, v)) => Some(v.split_whitespace().map(|x| parse_f64(line, x)).collect::<PResult<_>>()?),
                    None => None,
                }),
                "tabular" => {
                    let (state, control) = parse_cost_tables(cost_section, model)?;
                    CostKind::Tabular { state, control }
                }
                other => {
                    return err(cost_line, format!("unknown cost `{other}`; expected one of: {}", COST_KINDS.join(", ")))
                }
            };
            let mut cost = CostFunction::new(kind);
            if let Some((line, v)) = keys.get("cemetery_penalty") {
                cost.cemetery_penalty = parse_f64(line, v)?;
            }
            RiskMeasureSpec::Composed {
                cost,
                outer: outer(&keys)?,
            }
        }
    };
    spec.validate(model).map_err(|e| ParseError {
        line: section.line,
        message: e.to_string(),
    })?;
    Ok(spec)
}

fn parse_regime(section: &Section, model: &SystemModel, risk: Option<&RiskMeasureSpec>) -> PResult<RegimeSpec> {
    let mut extra = Vec::new();
    let keys = Keys::new(
        section,
        "regime",
        &["kind", "set", "deadline", "beta", "k", "center", "radius", "window", "controls", "alpha"],
        &mut extra,
    )?;
    if let Some(&(line, row)) = extra.first() {
        return err(line, format!("unexpected row `{row}` in [regime]"));
    }
    let (_, kind) = keys.kind(&REGIME_KINDS)?;
    let set = || -> PResult<Subset> {
        let (line, v) = keys.need("set")?;
        state_subset(model.states(), line, v)
    };
    let real = |key: &str| -> PResult<f64> {
        let (line, v) = keys.need(key)?;
        parse_f64(line, v)
    };
    let int = |key: &str| -> PResult<usize> {
        let (line, v) = keys.need(key)?;
        parse_usize(line, v)
    };
    let regime = match kind {
        "viability" => RegimeSpec::Viability { set: set()? },
        "robust_recovery" => RegimeSpec::RobustRecovery {
            set: set()?,
            deadline: int("deadline")?,
        },
        "stochastic_viability" => RegimeSpec::StochasticViability {
            set: set()?,
            beta: real("beta")?,
        },
        "bounded" => RegimeSpec::Bounded { set: set()? },
        "prob_excursion" => RegimeSpec::ProbExcursion {
            set: set()?,
            beta: real("beta")?,
        },
        "at_most_k_exits" => RegimeSpec::AtMostKExits { set: set()?, k: int("k")? },
        "stabilize" => {
            let (line, c) = keys.need("center")?;
            RegimeSpec::Stabilize {
                center: state_ref(model.states(), line, c)?,
                radius: real("radius")?,
                window: int("window")?,
            }
        }
        "control_event" => {
            let (line, v) = keys.need("controls")?;
            let mut controls = Subset::empty(model.n_controls());
            for l in v.split_whitespace() {
                controls.insert(control_ref(model.controls(), line, l)?);
            }
            RegimeSpec::ControlEvent { controls }
        }
        _ => match risk {
            Some(measure) => RegimeSpec::RiskContainment {
                measure: measure.clone(),
                alpha: real("alpha")?,
            },
            None => return err(section.line, "risk_containment needs a [risk] section"),
        },
    };
    regime.validate(model).map_err(|e| ParseError {
        line: section.line,
        message: e.to_string(),
    })?;
    Ok(regime)
}

/// Parses and validates a model file.
pub fn parse_model(text: &str) -> PResult<ModelFile> {
    let sections = split_sections(text)?;
    let time = required(&sections, "time")?;
    let mut horizon = None;
    for &(line, row) in &time.rows {
        let (key, v) = key_value(line, row)?;
        if key != "horizon" || horizon.is_some() {
            return err(line, "[time] takes exactly one `horizon = K` row");
        }
        horizon = Some((line, parse_usize(line, v)?));
    }
    let Some((hline, k)) = horizon else {
        return err(time.line, "[time] is missing `horizon`");
    };
    let grid = TimeGrid::new(k).map_err(|e| ParseError {
        line: hline,
        message: e.to_string(),
    })?;
    let states = parse_points(required(&sections, "states")?)?;
    let controls = parse_points(required(&sections, "controls")?)?;
    let usec = required(&sections, "uncertainty")?;
    let uncertainty = parse_uncertainty(usec, k)?;
    let sets = uncertainty.sets().to_vec();
    let dynamics = parse_dynamics(required(&sections, "dynamics")?, &states, &controls, &sets)?;
    let constraints = parse_constraints(sections.get("constraints"), &states, &controls, k)?;
    let model = SystemModel::new(grid, states, controls, uncertainty, dynamics, constraints).map_err(|e| ParseError {
        line: usec.line,
        message: e.to_string(),
    })?;
    let risk = match sections.get("risk") {
        Some(s) => Some(parse_risk(s, &model, sections.get("cost"))?),
        None => None,
    };
    let regime = parse_regime(required(&sections, "regime")?, &model, risk.as_ref())?;
    Ok(ModelFile { model, regime, risk })
}

fn labels_of<'a>(names: &'a [String], set: &Subset) -> String {
    set.iter().map(|i| names[i].as_str()).collect::<Vec<_>>().join(" ")
}

fn join_f64(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

/// Rows keyed by time, collapsed to a single `*` row when identical at every time.
fn per_time_rows(out: &mut String, prefix: &str, rows: &[String]) {
    if !rows.is_empty() && rows.iter().all(|r| r == &rows[0]) {
        let _ = writeln!(out, "{prefix} * : {}", rows[0]);
    } else {
        for (t, r) in rows.iter().enumerate() {
            let _ = writeln!(out, "{prefix} {t} : {r}");
        }
    }
}

fn points(out: &mut String, header: &str, p: &PointSet) {
    let _ = writeln!(out, "[{header}]");
    for i in 0..p.len() {
        let _ = writeln!(out, "{} : {}", p.label(i), join_f64(p.coords(i)));
    }
    out.push('\n');
}

fn outer_text(o: &Outer) -> String {
    match o {
        Outer::Expectation => "expectation".into(),
        Outer::WorstCase => "worst_case".into(),
        Outer::Cvar(a) => format!("cvar {a:?}"),
    }
}

fn risk_text(out: &mut String, m: &SystemModel, risk: &RiskMeasureSpec) {
    let names = m.states().labels();
    let mut cost_tables = None;
    let _ = writeln!(out, "[risk]\nkind = {}", risk.name());
    match risk {
        RiskMeasureSpec::WorstCaseViolation(s) | RiskMeasureSpec::Exceedance(s) => {
            let _ = writeln!(out, "set = {}", labels_of(names, s));
        }
        RiskMeasureSpec::ExitCount { set, outer } => {
            let _ = writeln!(out, "set = {}\nouter = {}", labels_of(names, set), outer_text(outer));
        }
        RiskMeasureSpec::AmbiguityExceedance { set, family } => {
            let _ = writeln!(out, "set = {}", labels_of(names, set));
            for (i, member) in family.iter().enumerate() {
                let rows: Vec<String> = member.iter().map(|p| join_f64(p)).collect();
                per_time_rows(out, &format!("member {i}"), &rows);
            }
        }
        RiskMeasureSpec::Composed { cost, outer } => {
            let _ = writeln!(out, "cost = {}", cost.name());
            match &cost.kind {
                CostKind::TimeOutside(s) | CostKind::Terminal(s) | CostKind::RecoveryOffset(s) => {
                    let _ = writeln!(out, "set = {}", labels_of(names, s));
                }
                CostKind::ControlEffort(Some(c)) => {
                    let _ = writeln!(out, "effort = {}", join_f64(c));
                }
                CostKind::ControlEffort(None) => {}
                CostKind::Tabular { state, control } => cost_tables = Some((state, control)),
            }
            let _ = writeln!(out, "outer = {}", outer_text(outer));
            if cost.cemetery_penalty != resilience_core::risk::CEMETERY_PENALTY {
                let _ = writeln!(out, "cemetery_penalty = {:?}", cost.cemetery_penalty);
            }
        }
    }
    out.push('\n');
    if let Some((state, control)) = cost_tables {
        out.push_str("[cost]\n");
        let rows: Vec<String> = state.iter().map(|r| join_f64(r)).collect();
        per_time_rows(out, "state", &rows);
        let rows: Vec<String> = control.iter().map(|r| join_f64(r)).collect();
        per_time_rows(out, "control", &rows);
        out.push('\n');
    }
}

fn regime_text(out: &mut String, m: &SystemModel, regime: &RegimeSpec) {
    let names = m.states().labels();
    let _ = writeln!(out, "[regime]\nkind = {}", regime.name());
    let _ = match regime {
        RegimeSpec::Viability { set } | RegimeSpec::Bounded { set } => writeln!(out, "set = {}", labels_of(names, set)),
        RegimeSpec::RobustRecovery { set, deadline } => {
            writeln!(out, "set = {}\ndeadline = {deadline}", labels_of(names, set))
        }
        RegimeSpec::StochasticViability { set, beta } | RegimeSpec::ProbExcursion { set, beta } => {
            writeln!(out, "set = {}\nbeta = {beta:?}", labels_of(names, set))
        }
        RegimeSpec::AtMostKExits { set, k } => writeln!(out, "set = {}\nk = {k}", labels_of(names, set)),
        RegimeSpec::Stabilize { center, radius, window } => writeln!(
            out,
            "center = {}\nradius = {radius:?}\nwindow = {window}",
            m.state_label(*center)
        ),
        RegimeSpec::ControlEvent { controls } => {
            writeln!(out, "controls = {}", labels_of(m.controls().labels(), controls))
        }
        RegimeSpec::RiskContainment { alpha, .. } => writeln!(out, "alpha = {alpha:?}"),
    };
}

/// Canonical text of a model file. A risk-containment regime writes its
/// measure as the `[risk]` section, which must then equal `risk` if both are set.
pub fn serialize_model(file: &ModelFile) -> String {
    let m = &file.model;
    let k = m.horizon();
    let u = m.uncertainty();
    let sets = u.sets();
    let mut out = String::new();
    let _ = writeln!(out, "[time]\nhorizon = {k}\n");
    points(&mut out, "states", m.states());
    points(&mut out, "controls", m.controls());

    out.push_str("[uncertainty]\n");
    let rows: Vec<String> = sets.iter().map(|s| s.join(" ")).collect();
    per_time_rows(&mut out, "set", &rows);
    if let Some(p) = u.probabilities() {
        let rows: Vec<String> = p.iter().map(|v| join_f64(v)).collect();
        per_time_rows(&mut out, "prob", &rows);
    }
    if let Some(r) = u.robust() {
        let rows: Vec<String> = r.iter().enumerate().map(|(t, s)| labels_of(&sets[t], s)).collect();
        per_time_rows(&mut out, "robust", &rows);
    }
    let scenario_labels = |s: &Scenario| -> String {
        s.0.iter().enumerate().map(|(t, &w)| sets[t][w].as_str()).collect::<Vec<_>>().join(" ")
    };
    for s in u.robust_scenarios().unwrap_or(&[]) {
        let _ = writeln!(out, "robust_scenario : {}", scenario_labels(s));
    }
    for (s, p) in u.joint().into_iter().flatten() {
        let _ = writeln!(out, "joint : {} = {p:?}", scenario_labels(s));
    }
    out.push('\n');

    out.push_str("[dynamics]\n");
    let invariant = (1..k).all(|t| {
        sets[t] == sets[0]
            && (0..m.n_states()).all(|x| {
                (0..m.n_controls()).all(|c| (0..sets[t].len()).all(|w| m.dynamics(t, x, c, w) == m.dynamics(0, x, c, w)))
            })
    });
    let times: Vec<(String, usize)> = if invariant {
        vec![("*".into(), 0)]
    } else {
        (0..k).map(|t| (t.to_string(), t)).collect()
    };
    for (sel, t) in &times {
        for x in 0..m.n_states() {
            for c in 0..m.n_controls() {
                for (w, wl) in sets[*t].iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{sel} {} {} {wl} -> {}",
                        m.state_label(x),
                        m.controls().label(c),
                        m.state_label(m.dynamics(*t, x, c, w))
                    );
                }
            }
        }
    }
    out.push('\n');

    let mut constraint_rows = String::new();
    for x in 0..m.n_states() {
        let per: Vec<&Subset> = (0..k).map(|t| m.constraint_set(t, x)).collect();
        let full = |s: &Subset| s.len() == m.n_controls();
        if per.iter().all(|s| *s == per[0]) {
            if !full(per[0]) {
                let _ = writeln!(constraint_rows, "* {} : {}", m.state_label(x), labels_of(m.controls().labels(), per[0]));
            }
        } else {
            for (t, s) in per.iter().enumerate() {
                if !full(s) {
                    let _ = writeln!(constraint_rows, "{t} {} : {}", m.state_label(x), labels_of(m.controls().labels(), s));
                }
            }
        }
    }
    if !constraint_rows.is_empty() {
        let _ = writeln!(out, "[constraints]\n{constraint_rows}");
    }

    let risk = match &file.regime {
        RegimeSpec::RiskContainment { measure, .. } => Some(measure),
        _ => file.risk.as_ref(),
    };
    if let Some(r) = risk {
        risk_text(&mut out, m, r);
    }
    regime_text(&mut out, m, &file.regime);
    out
}
