//! Plain-text formats for models, policies and datasets.
//!
//! All files are sequences of `[section args...]` headers followed by body
//! lines. `#` starts a comment that runs to the end of the line; blank lines
//! are ignored. Numbers are decimal literals. The full grammar is in the
//! repository README.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimate::{EstimatedModel, IntervalModelSet, Provenance};
use crate::mdp::{FiniteMdp, Policy, RewardDist, Sample, TrajectoryDataset};

/// One `[name args]` block with its body lines (already split on whitespace).
#[derive(Debug, Clone)]
pub struct Section {
    pub name: String,
    pub args: Vec<String>,
    pub line: usize,
    pub body: Vec<(usize, Vec<String>)>,
}

impl Section {
    /// All body tokens in order, each with its line number.
    pub fn tokens(&self) -> impl Iterator<Item = (usize, &str)> {
        self.body.iter().flat_map(|(l, toks)| toks.iter().map(move |t| (*l, t.as_str())))
    }

    pub fn numbers(&self) -> Result<Vec<f64>> {
        self.tokens().map(|(l, t)| parse_f64(t, l)).collect()
    }

    pub fn index_args(&self, n: usize) -> Result<Vec<usize>> {
        if self.args.len() != n {
            return Err(Error::Parse {
                line: self.line,
                msg: format!("[{}] expects {n} index arguments, got {}", self.name, self.args.len()),
            });
        }
        self.args.iter().map(|a| parse_usize(a, self.line)).collect()
    }

    /// `key = value` lines.
    pub fn key_values(&self) -> Result<Vec<(usize, String, String)>> {
        self.body
            .iter()
            .map(|(l, toks)| {
                let joined = toks.join(" ");
                let (k, v) = joined.split_once('=').ok_or_else(|| Error::Parse {
                    line: *l,
                    msg: format!("expected `key = value`, got `{joined}`"),
                })?;
                Ok((*l, k.trim().to_string(), v.trim().to_string()))
            })
            .collect()
    }
}

pub fn parse_f64(t: &str, line: usize) -> Result<f64> {
    let x: f64 = t.parse().map_err(|_| Error::Parse { line, msg: format!("`{t}` is not a number") })?;
    if !x.is_finite() {
        return Err(Error::Parse { line, msg: format!("`{t}` is not finite") });
    }
    Ok(x)
}

pub fn parse_usize(t: &str, line: usize) -> Result<usize> {
    t.parse().map_err(|_| Error::Parse { line, msg: format!("`{t}` is not a nonnegative integer") })
}

fn parse_u64(t: &str, line: usize) -> Result<u64> {
    t.parse().map_err(|_| Error::Parse { line, msg: format!("`{t}` is not a nonnegative integer") })
}

/// Splits `text` into sections. Body lines before the first header are an error.
pub fn parse_sections(text: &str) -> Result<Vec<Section>> {
    let mut out: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let inner = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Parse { line, msg: "unterminated section header".into() })?;
            let mut parts = inner.split_whitespace();
            let name = parts
                .next()
                .ok_or_else(|| Error::Parse { line, msg: "empty section header".into() })?
                .to_string();
            out.push(Section { name, args: parts.map(str::to_string).collect(), line, body: Vec::new() });
        } else {
            let sec = out
                .last_mut()
                .ok_or_else(|| Error::Parse { line, msg: "content before first section header".into() })?;
            sec.body.push((line, content.split_whitespace().map(str::to_string).collect()));
        }
    }
    Ok(out)
}

/// `states`, `actions`, `horizon` from a `[dims]` section.
pub(crate) fn parse_dims(sec: &Section) -> Result<(usize, usize, usize)> {
    let (mut s, mut a, mut h) = (None, None, None);
    for (l, k, v) in sec.key_values()? {
        let slot = match k.as_str() {
            "states" => &mut s,
            "actions" => &mut a,
            "horizon" => &mut h,
            _ => return Err(Error::Parse { line: l, msg: format!("unknown key `{k}` in [dims]") }),
        };
        let n = parse_usize(&v, l)?;
        if n == 0 {
            return Err(Error::Parse { line: l, msg: format!("`{k}` must be positive") });
        }
        *slot = Some(n);
    }
    let missing = |k: &str| Error::Parse { line: sec.line, msg: format!("[dims] is missing `{k}`") };
    Ok((s.ok_or_else(|| missing("states"))?, a.ok_or_else(|| missing("actions"))?, h.ok_or_else(|| missing("horizon"))?))
}

/// Per-pair sections collected into dense tables with duplicate and range checks.
pub(crate) struct PairTable<T> {
    pub entries: Vec<Option<(usize, T)>>,
    n_actions: usize,
}

impl<T> PairTable<T> {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self { entries: (0..n_states * n_actions).map(|_| None).collect(), n_actions }
    }

    pub fn insert(&mut self, sec: &Section, value: T) -> Result<()> {
        let idx = sec.index_args(2)?;
        let (s, a) = (idx[0], idx[1]);
        if s * self.n_actions + a >= self.entries.len() || a >= self.n_actions {
            return Err(Error::Parse { line: sec.line, msg: format!("pair ({s}, {a}) out of range") });
        }
        let slot = &mut self.entries[s * self.n_actions + a];
        if let Some((prev, _)) = slot {
            return Err(Error::Parse { line: sec.line, msg: format!("duplicate [{} {s} {a}] (first at line {prev})", sec.name) });
        }
        *slot = Some((sec.line, value));
        Ok(())
    }

    pub fn complete(self, what: &str, header_line: usize) -> Result<Vec<T>> {
        let na = self.n_actions;
        self.entries
            .into_iter()
            .enumerate()
            .map(|(k, e)| {
                e.map(|(_, v)| v).ok_or_else(|| Error::Parse {
                    line: header_line,
                    msg: format!("missing [{what} {} {}]", k / na, k % na),
                })
            })
            .collect()
    }
}

pub(crate) fn vector_of_len(sec: &Section, n: usize) -> Result<Vec<f64>> {
    let v = sec.numbers()?;
    if v.len() != n {
        return Err(Error::Parse { line: sec.line, msg: format!("[{}] needs {n} numbers, got {}", sec.name, v.len()) });
    }
    Ok(v)
}

pub(crate) fn reward_lines(sec: &Section) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut values = Vec::new();
    let mut probs = Vec::new();
    for (l, toks) in &sec.body {
        if toks.len() != 2 {
            return Err(Error::Parse { line: *l, msg: "reward lines are `value prob`".into() });
        }
        values.push(parse_f64(&toks[0], *l)?);
        probs.push(parse_f64(&toks[1], *l)?);
    }
    Ok((values, probs))
}

/// Parses and validates an MDP file body.
pub fn parse_mdp(text: &str) -> Result<FiniteMdp> {
    let sections = parse_sections(text)?;
    let dims = sections
        .iter()
        .find(|s| s.name == "dims")
        .ok_or_else(|| Error::Parse { line: 1, msg: "missing [dims] section".into() })?;
    let (ns, na, h) = parse_dims(dims)?;
    let mut initial = None;
    let mut transitions = PairTable::new(ns, na);
    let mut rewards = PairTable::new(ns, na);
    for sec in &sections {
        match sec.name.as_str() {
            "dims" if !std::ptr::eq(sec, dims) => {
                return Err(Error::Parse { line: sec.line, msg: "duplicate [dims]".into() })
            }
            "dims" => {}
            "initial" => {
                if initial.is_some() {
                    return Err(Error::Parse { line: sec.line, msg: "duplicate [initial]".into() });
                }
                initial = Some(vector_of_len(sec, ns)?);
            }
            "transition" => {
                let row = vector_of_len(sec, ns)?;
                transitions.insert(sec, row)?;
            }
            "reward" => {
                let (v, p) = reward_lines(sec)?;
                let dist = RewardDist::new(v, p).map_err(|e| Error::Parse { line: sec.line, msg: e.to_string() })?;
                rewards.insert(sec, dist)?;
            }
            other => return Err(Error::Parse { line: sec.line, msg: format!("unknown section [{other}]") }),
        }
    }
    let initial = initial.ok_or_else(|| Error::Parse { line: dims.line, msg: "missing [initial]".into() })?;
    let transition: Vec<f64> = transitions.complete("transition", dims.line)?.concat();
    let reward = rewards.complete("reward", dims.line)?;
    FiniteMdp::new(ns, na, h, transition, reward, initial)
}

pub(crate) fn write_numbers(out: &mut String, xs: &[f64]) {
    let line: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
    out.push_str(&line.join(" "));
    out.push('\n');
}

/// Serializes an MDP. Floats use the shortest representation that parses
/// back to the same value, so a round trip is exact.
pub fn write_mdp(mdp: &FiniteMdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[dims]\nstates = {}\nactions = {}\nhorizon = {}", mdp.n_states(), mdp.n_actions(), mdp.horizon());
    out.push_str("\n[initial]\n");
    write_numbers(&mut out, mdp.initial());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let _ = writeln!(out, "\n[transition {s} {a}]");
            write_numbers(&mut out, mdp.row(s, a));
            let _ = writeln!(out, "[reward {s} {a}]");
            let r = mdp.reward(s, a);
            for (v, p) in r.values().iter().zip(r.probs()) {
                let _ = writeln!(out, "{v} {p}");
            }
        }
    }
    out
}

pub fn load_mdp(path: impl AsRef<Path>) -> Result<FiniteMdp> {
    parse_mdp(&std::fs::read_to_string(path)?)
}

pub fn save_mdp(mdp: &FiniteMdp, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, write_mdp(mdp))?)
}

/// Parses a `[policy]` section. Lines are `h s -> a`, or `* s -> a` for a
/// stationary policy. A non-stationary policy must cover every `(h, s)` for
/// `h` below the largest step mentioned.
pub fn parse_policy(text: &str, n_states: usize) -> Result<Policy> {
    let sections = parse_sections(text)?;
    let [sec] = sections.as_slice() else {
        return Err(Error::Parse { line: 1, msg: "expected exactly one [policy] section".into() });
    };
    if sec.name != "policy" {
        return Err(Error::Parse { line: sec.line, msg: format!("expected [policy], got [{}]", sec.name) });
    }
    let mut stationary: Vec<Option<usize>> = vec![None; n_states];
    let mut steps: Vec<Vec<Option<usize>>> = Vec::new();
    let (mut star, mut numbered) = (false, false);
    for (l, toks) in &sec.body {
        let l = *l;
        let [h, s, arrow, a] = toks.as_slice() else {
            return Err(Error::Parse { line: l, msg: "policy lines are `h s -> a`".into() });
        };
        if arrow != "->" {
            return Err(Error::Parse { line: l, msg: "policy lines are `h s -> a`".into() });
        }
        let s = parse_usize(s, l)?;
        let a = parse_usize(a, l)?;
        if s >= n_states {
            return Err(Error::Parse { line: l, msg: format!("state {s} out of range") });
        }
        let slot = if h == "*" {
            star = true;
            &mut stationary[s]
        } else {
            numbered = true;
            let h = parse_usize(h, l)?;
            if steps.len() <= h {
                steps.resize(h + 1, vec![None; n_states]);
            }
            &mut steps[h][s]
        };
        if slot.replace(a).is_some() {
            return Err(Error::Parse { line: l, msg: "duplicate policy entry".into() });
        }
    }
    if star && numbered {
        return Err(Error::Parse { line: sec.line, msg: "cannot mix `*` and numbered steps".into() });
    }
    let missing = |what: String| Error::Parse { line: sec.line, msg: format!("policy has no entry for {what}") };
    if star || !numbered {
        let map = stationary
            .into_iter()
            .enumerate()
            .map(|(s, a)| a.ok_or_else(|| missing(format!("state {s}"))))
            .collect::<Result<_>>()?;
        return Ok(Policy::Stationary(map));
    }
    let maps = steps
        .into_iter()
        .enumerate()
        .map(|(h, row)| {
            row.into_iter()
                .enumerate()
                .map(|(s, a)| a.ok_or_else(|| missing(format!("step {h}, state {s}"))))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(Policy::NonStationary(maps))
}

pub fn write_policy(policy: &Policy) -> String {
    let mut out = String::from("[policy]\n");
    match policy {
        Policy::Stationary(map) => {
            for (s, a) in map.iter().enumerate() {
                let _ = writeln!(out, "* {s} -> {a}");
            }
        }
        Policy::NonStationary(maps) => {
            for (h, map) in maps.iter().enumerate() {
                for (s, a) in map.iter().enumerate() {
                    let _ = writeln!(out, "{h} {s} -> {a}");
                }
            }
        }
    }
    out
}

/// Dataset container: a `[dataset]` header with `states`, `actions`,
/// `horizon`, `lists`, `seed`, `scale`, then one `[list i]` section per list
/// whose lines are `s a r s'`.
pub fn write_dataset(data: &TrajectoryDataset, out: &mut impl std::io::Write) -> Result<()> {
    writeln!(
        out,
        "[dataset]\nstates = {}\nactions = {}\nhorizon = {}\nlists = {}\nseed = {}\nscale = {}",
        data.n_states,
        data.n_actions,
        data.horizon,
        data.lists.len(),
        data.seed,
        data.scale
    )?;
    for (i, list) in data.lists.iter().enumerate() {
        writeln!(out, "\n[list {i}]")?;
        for x in list {
            writeln!(out, "{} {} {} {}", x.state, x.action, x.reward, x.next)?;
        }
    }
    Ok(())
}

pub fn dataset_to_string(data: &TrajectoryDataset) -> String {
    let mut buf = Vec::new();
    write_dataset(data, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii")
}

pub fn parse_dataset(text: &str) -> Result<TrajectoryDataset> {
    let sections = parse_sections(text)?;
    let (head, rest) = sections
        .split_first()
        .filter(|(h, _)| h.name == "dataset")
        .ok_or_else(|| Error::Parse { line: 1, msg: "dataset must start with [dataset]".into() })?;
    let mut fields = std::collections::BTreeMap::new();
    for (l, k, v) in head.key_values()? {
        fields.insert(k, (l, v));
    }
    let get = |k: &str| {
        fields.get(k).cloned().ok_or_else(|| Error::Parse { line: head.line, msg: format!("[dataset] is missing `{k}`") })
    };
    let (l, v) = get("states")?;
    let n_states = parse_usize(&v, l)?;
    let (l, v) = get("actions")?;
    let n_actions = parse_usize(&v, l)?;
    let (l, v) = get("horizon")?;
    let horizon = parse_usize(&v, l)?;
    let (l, v) = get("lists")?;
    let n_lists = parse_usize(&v, l)?;
    let (l, v) = get("seed")?;
    let seed = parse_u64(&v, l)?;
    let (l, v) = get("scale")?;
    let scale = parse_f64(&v, l)?;
    if rest.len() != n_lists {
        return Err(Error::Parse { line: head.line, msg: format!("header says {n_lists} lists, found {}", rest.len()) });
    }
    let mut lists = Vec::with_capacity(n_lists);
    for (i, sec) in rest.iter().enumerate() {
        if sec.name != "list" || sec.index_args(1)? != [i] {
            return Err(Error::Parse { line: sec.line, msg: format!("expected [list {i}]") });
        }
        let list = sec
            .body
            .iter()
            .map(|(l, toks)| {
                let [s, a, r, n] = toks.as_slice() else {
                    return Err(Error::Parse { line: *l, msg: "tuple lines are `s a r s'`".into() });
                };
                Ok(Sample {
                    state: parse_usize(s, *l)?,
                    action: parse_usize(a, *l)?,
                    reward: parse_f64(r, *l)?,
                    next: parse_usize(n, *l)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        lists.push(list);
    }
    let data = TrajectoryDataset { n_states, n_actions, horizon, seed, scale, lists };
    data.validate()?;
    Ok(data)
}

/// Serializes an interval set. The layout is the MDP format with rewards as
/// point masses at the mean estimate, plus `[provenance]`, `[initial-width]`,
/// and per-pair `[width s a]` and `[count s a]` sections.
pub fn write_model_set(set: &IntervalModelSet) -> String {
    let c = &set.center;
    let mut out = String::new();
    let _ = writeln!(out, "[dims]\nstates = {}\nactions = {}\nhorizon = {}", c.n_states, c.n_actions, c.horizon);
    let _ = writeln!(out, "\n[provenance]\n{}", c.provenance.as_str());
    out.push_str("\n[initial]\n");
    write_numbers(&mut out, &c.initial);
    out.push_str("[initial-width]\n");
    write_numbers(&mut out, &set.initial_width);
    for s in 0..c.n_states {
        for a in 0..c.n_actions {
            let _ = writeln!(out, "\n[transition {s} {a}]");
            write_numbers(&mut out, c.row(s, a));
            let _ = writeln!(out, "[width {s} {a}]");
            write_numbers(&mut out, set.widths(s, a));
            let _ = writeln!(out, "[reward {s} {a}]\n{} 1", c.mean_reward(s, a));
            let _ = writeln!(out, "[count {s} {a}]\n{}", c.count(s, a));
        }
    }
    out
}

/// Parses [`write_model_set`] output. Missing width sections mean zero width
/// and missing counts mean zero, so a plain MDP file loads as a zero-width set.
pub fn parse_model_set(text: &str) -> Result<IntervalModelSet> {
    let sections = parse_sections(text)?;
    let dims = sections
        .iter()
        .find(|s| s.name == "dims")
        .ok_or_else(|| Error::Parse { line: 1, msg: "missing [dims] section".into() })?;
    let (ns, na, horizon) = parse_dims(dims)?;
    let mut provenance = Provenance::Exact;
    let mut initial = None;
    let mut initial_width = vec![0.0; ns];
    let mut rows = PairTable::new(ns, na);
    let mut widths = PairTable::new(ns, na);
    let mut rewards = PairTable::new(ns, na);
    let mut counts = PairTable::new(ns, na);
    for sec in &sections {
        match sec.name.as_str() {
            "dims" => {}
            "provenance" => {
                let tok = sec.tokens().next().map(|(_, t)| t).unwrap_or("");
                provenance = Provenance::parse(tok)
                    .ok_or_else(|| Error::Parse { line: sec.line, msg: format!("unknown provenance `{tok}`") })?;
            }
            "initial" => initial = Some(vector_of_len(sec, ns)?),
            "initial-width" => initial_width = vector_of_len(sec, ns)?,
            "transition" => rows.insert(sec, vector_of_len(sec, ns)?)?,
            "width" => widths.insert(sec, vector_of_len(sec, ns)?)?,
            "reward" => {
                let (v, p) = reward_lines(sec)?;
                let mean = RewardDist::new(v, p).map_err(|e| Error::Parse { line: sec.line, msg: e.to_string() })?.mean();
                rewards.insert(sec, mean)?;
            }
            "count" => {
                let (l, t) = sec
                    .tokens()
                    .next()
                    .ok_or_else(|| Error::Parse { line: sec.line, msg: "empty [count]".into() })?;
                counts.insert(sec, parse_u64(t, l)?)?;
            }
            other => return Err(Error::Parse { line: sec.line, msg: format!("unknown section [{other}]") }),
        }
    }
    let zero_filled = |t: PairTable<Vec<f64>>| -> Vec<f64> {
        t.entries.into_iter().flat_map(|e| e.map(|(_, v)| v).unwrap_or_else(|| vec![0.0; ns])).collect()
    };
    let center = EstimatedModel {
        n_states: ns,
        n_actions: na,
        horizon,
        transition: rows.complete("transition", dims.line)?.concat(),
        reward: rewards.complete("reward", dims.line)?,
        initial: initial.ok_or_else(|| Error::Parse { line: dims.line, msg: "missing [initial]".into() })?,
        counts: counts.entries.into_iter().map(|e| e.map(|(_, v)| v).unwrap_or(0)).collect(),
        provenance,
    };
    let set = IntervalModelSet { center, transition_width: zero_filled(widths), initial_width };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{random_dense, twostate_exit};

    const MINIMAL: &str = "\
# one state, one action
[dims]
states = 1
actions = 1
horizon = 3

[initial]
1.0
[transition 0 0]
1
[reward 0 0]
0.5 1.0
";

    #[test]
    fn minimal_file() {
        let m = parse_mdp(MINIMAL).unwrap();
        assert_eq!((m.n_states(), m.n_actions(), m.horizon()), (1, 1, 3));
        assert_eq!(m.mean_reward(0, 0), 0.5);
    }

    #[test]
    fn bad_row_is_an_invariant_error() {
        let text = MINIMAL.replace("[transition 0 0]\n1", "[transition 0 0]\n0.9");
        assert!(matches!(parse_mdp(&text), Err(Error::Invariant(_))));
    }

    #[test]
    fn parse_errors_carry_lines() {
        let text = MINIMAL.replace("0.5 1.0", "0.5 x");
        match parse_mdp(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 12),
            other => panic!("{other:?}"),
        }
        let text = MINIMAL.replace("[transition 0 0]\n1\n", "");
        assert!(matches!(parse_mdp(&text), Err(Error::Parse { .. })));
        assert!(matches!(parse_mdp("1 2 3"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn round_trip_is_exact() {
        for m in [twostate_exit(7).unwrap(), random_dense(3, 2, 5, 4).unwrap()] {
            assert_eq!(parse_mdp(&write_mdp(&m)).unwrap(), m);
        }
    }

    #[test]
    fn policies_round_trip() {
        let st = Policy::Stationary(vec![1, 0, 1]);
        assert_eq!(parse_policy(&write_policy(&st), 3).unwrap(), st);
        let ns = Policy::NonStationary(vec![vec![0, 1], vec![1, 1]]);
        assert_eq!(parse_policy(&write_policy(&ns), 2).unwrap(), ns);
        assert!(parse_policy("[policy]\n0 0 -> 1\n", 2).is_err());
        assert!(parse_policy("[policy]\n* 0 -> 1\n0 1 -> 1\n", 2).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let data = TrajectoryDataset {
            n_states: 1,
            n_actions: 1,
            horizon: 2,
            seed: 9,
            scale: 0.25,
            lists: vec![vec![
                Sample { state: 0, action: 0, reward: 0.1, next: 0 },
                Sample { state: 0, action: 0, reward: 0.3, next: 0 },
            ]],
        };
        let text = dataset_to_string(&data);
        assert_eq!(parse_dataset(&text).unwrap(), data);
        assert!(parse_dataset(&text.replace("lists = 1", "lists = 2")).is_err());
    }

    #[test]
    fn model_sets_round_trip() {
        let m = random_dense(2, 2, 4, 1).unwrap();
        let mut set = IntervalModelSet::zero_width(EstimatedModel::from_mdp(&m));
        set.transition_width[3] = 0.125;
        set.initial_width = vec![0.5, 0.25];
        set.center.counts[1] = 17;
        set.center.transition[4..6].copy_from_slice(&[0.0, 0.0]);
        assert_eq!(parse_model_set(&write_model_set(&set)).unwrap(), set);
        let plain = parse_model_set(&write_mdp(&m)).unwrap();
        assert_eq!(plain.center.transition, m.transition());
        assert!(plain.transition_width.iter().all(|&w| w == 0.0));
    }
}
