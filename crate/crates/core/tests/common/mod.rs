//! Random small compositions described as plain data, and a brute-force
//! product-automaton oracle over them.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use prodcell::sync_core::{
    Binding, Composition, CompositionBuilder, Offer, Rendezvous, Value, Visibility,
};
use rand::Rng;

/// Values range over `0..DOMAIN`.
pub const DOMAIN: i64 = 4;

#[derive(Debug, Clone)]
pub enum SlotSpec {
    Emit(i64),
    Accept,
}

#[derive(Debug, Clone)]
pub enum PredSpec {
    Eq(usize, i64),
    Ne(usize, i64),
    Le(usize, i64),
}

#[derive(Debug, Clone)]
pub enum ToSpec {
    Fixed(u8),
    /// `(value at an accepted position + k) mod states`.
    Shift(usize, u8),
}

#[derive(Debug, Clone)]
pub struct TransSpec {
    pub from: u8,
    pub gate: usize,
    pub slots: Vec<SlotSpec>,
    pub pred: Option<PredSpec>,
    pub to: ToSpec,
}

#[derive(Debug, Clone)]
pub struct GateSpec {
    pub arity: usize,
    pub participants: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ProcSpec {
    pub states: u8,
    pub trans: Vec<TransSpec>,
}

#[derive(Debug, Clone)]
pub struct Spec {
    pub gates: Vec<GateSpec>,
    pub procs: Vec<ProcSpec>,
}

pub fn var(pos: usize) -> String {
    format!("x{pos}")
}

fn value_of(v: &Value) -> i64 {
    v.as_real().expect("numeric value") as i64
}

fn num(k: i64) -> Value {
    Value::Real(k as f64)
}

impl PredSpec {
    /// Evaluated on the binding of one offer. Positions the offer does not
    /// accept make the predicate false.
    pub fn holds(&self, b: &BTreeMap<String, i64>) -> bool {
        match *self {
            PredSpec::Eq(p, k) => b.get(&var(p)) == Some(&k),
            PredSpec::Ne(p, k) => b.get(&var(p)).is_some_and(|v| *v != k),
            PredSpec::Le(p, k) => b.get(&var(p)).is_some_and(|v| *v <= k),
        }
    }
}

impl ToSpec {
    pub fn next(&self, values: &[i64], states: u8) -> u8 {
        match *self {
            ToSpec::Fixed(s) => s,
            ToSpec::Shift(p, k) => ((values[p] + i64::from(k)) % i64::from(states)) as u8,
        }
    }
}

pub fn random_spec(rng: &mut impl Rng) -> Spec {
    let n_procs = rng.gen_range(1..=4);
    let n_gates = rng.gen_range(1..=5);
    let gates: Vec<GateSpec> = (0..n_gates)
        .map(|_| {
            let mut participants: Vec<usize> = (0..n_procs).filter(|_| rng.gen_bool(0.5)).collect();
            if participants.is_empty() {
                participants.push(rng.gen_range(0..n_procs));
            }
            GateSpec {
                arity: rng.gen_range(0..=2),
                participants,
            }
        })
        .collect();
    let procs = (0..n_procs)
        .map(|p| {
            let states = rng.gen_range(1..=8u8);
            let mine: Vec<usize> = (0..n_gates)
                .filter(|g| gates[*g].participants.contains(&p))
                .collect();
            let n_trans = if mine.is_empty() {
                0
            } else {
                rng.gen_range(0..=10)
            };
            let trans = (0..n_trans)
                .map(|_| {
                    let gate = mine[rng.gen_range(0..mine.len())];
                    let arity = gates[gate].arity;
                    let slots: Vec<SlotSpec> = (0..arity)
                        .map(|_| {
                            if rng.gen_bool(0.5) {
                                SlotSpec::Emit(rng.gen_range(0..DOMAIN))
                            } else {
                                SlotSpec::Accept
                            }
                        })
                        .collect();
                    let pred = (arity > 0 && rng.gen_bool(0.4)).then(|| {
                        let pos = rng.gen_range(0..arity);
                        let k = rng.gen_range(0..DOMAIN);
                        match rng.gen_range(0..3) {
                            0 => PredSpec::Eq(pos, k),
                            1 => PredSpec::Ne(pos, k),
                            _ => PredSpec::Le(pos, k),
                        }
                    });
                    let accepted: Vec<usize> = (0..arity)
                        .filter(|p| matches!(slots[*p], SlotSpec::Accept))
                        .collect();
                    let to = if !accepted.is_empty() && rng.gen_bool(0.3) {
                        let pos = accepted[rng.gen_range(0..accepted.len())];
                        ToSpec::Shift(pos, rng.gen_range(0..states))
                    } else {
                        ToSpec::Fixed(rng.gen_range(0..states))
                    };
                    TransSpec {
                        from: rng.gen_range(0..states),
                        gate,
                        slots,
                        pred,
                        to,
                    }
                })
                .collect();
            ProcSpec { states, trans }
        })
        .collect();
    Spec { gates, procs }
}

/// Offer built from a transition. Accepted positions bind `x<pos>`.
pub fn offer(t: &TransSpec, gate: prodcell::sync_core::GateId, states: u8) -> Offer<u8> {
    let to = t.to.clone();
    let arity = t.slots.len();
    let mut o = Offer::with(gate, move |b: &Binding| {
        let vals: Vec<i64> = (0..arity)
            .map(|p| b.get(&var(p)).map(value_of).unwrap_or(0))
            .collect();
        to.next(&vals, states)
    });
    for (pos, s) in t.slots.iter().enumerate() {
        o = match s {
            SlotSpec::Emit(k) => o.emit(num(*k)),
            SlotSpec::Accept => o.accept(var(pos)),
        };
    }
    if let Some(p) = t.pred.clone() {
        o = o.when(move |b| p.holds(&to_ints(b)));
    }
    o
}

fn to_ints(b: &Binding) -> BTreeMap<String, i64> {
    b.iter().map(|(k, v)| (k.clone(), value_of(v))).collect()
}

/// Builds the spec on the engine, plus optional extra processes appended
/// after the spec's own.
pub fn build(spec: &Spec) -> Composition<u8> {
    build_with(spec, |_, _| {})
}

pub fn build_with(
    spec: &Spec,
    extra: impl FnOnce(&mut CompositionBuilder<u8>, &[prodcell::sync_core::GateId]),
) -> Composition<u8> {
    let mut b = CompositionBuilder::new();
    let gates: Vec<_> = spec
        .gates
        .iter()
        .enumerate()
        .map(|(i, g)| {
            b.gate(&format!("g{i}"), Visibility::External, g.arity)
                .unwrap()
        })
        .collect();
    let mut ids = Vec::new();
    for (i, p) in spec.procs.iter().enumerate() {
        let trans = p.trans.clone();
        let gates = gates.clone();
        let states = p.states;
        ids.push(
            b.process(&format!("p{i}"), move |s: &u8| {
                trans
                    .iter()
                    .filter(|t| t.from == *s)
                    .map(|t| offer(t, gates[t.gate], states))
                    .collect()
            })
            .unwrap(),
        );
    }
    for (g, spec_g) in gates.iter().zip(&spec.gates) {
        let parts: Vec<usize> = spec_g.participants.iter().map(|&p| ids[p]).collect();
        b.participate(*g, &parts).unwrap();
    }
    extra(&mut b, &gates);
    b.build().unwrap()
}

/// One enabled synchronization found by the oracle: gate, the transition
/// index chosen for each participant (in participant order), slot values.
pub type Sync = (usize, Vec<usize>, Vec<i64>);

/// All enabled synchronizations of `spec` in `states`, by enumerating every
/// combination of transitions and every value vector of the domain.
pub fn oracle_enabled(spec: &Spec, states: &[u8]) -> BTreeSet<Sync> {
    let mut out = BTreeSet::new();
    for (g, gs) in spec.gates.iter().enumerate() {
        let per_part: Vec<Vec<usize>> = gs
            .participants
            .iter()
            .map(|&p| {
                spec.procs[p]
                    .trans
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| t.gate == g && t.from == states[p])
                    .map(|(i, _)| i)
                    .collect()
            })
            .collect();
        if per_part.iter().any(Vec::is_empty) {
            continue;
        }
        for combo in product(&per_part.iter().map(Vec::len).collect::<Vec<_>>()) {
            let chosen: Vec<&TransSpec> = gs
                .participants
                .iter()
                .zip(&combo)
                .enumerate()
                .map(|(k, (&p, &c))| &spec.procs[p].trans[per_part[k][c]])
                .collect();
            for values in product(&vec![DOMAIN as usize; gs.arity]) {
                let values: Vec<i64> = values.iter().map(|v| *v as i64).collect();
                if admits(&chosen, &values) {
                    let idx = combo
                        .iter()
                        .enumerate()
                        .map(|(k, &c)| per_part[k][c])
                        .collect();
                    out.insert((g, idx, values));
                }
            }
        }
    }
    out
}

fn admits(chosen: &[&TransSpec], values: &[i64]) -> bool {
    for (pos, v) in values.iter().enumerate() {
        let mut emitted = false;
        for t in chosen {
            if let SlotSpec::Emit(k) = t.slots[pos] {
                if k != *v {
                    return false;
                }
                emitted = true;
            }
        }
        if !emitted {
            return false;
        }
    }
    chosen.iter().all(|t| {
        let b: BTreeMap<String, i64> = t
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, SlotSpec::Accept))
            .map(|(p, _)| (var(p), values[p]))
            .collect();
        t.pred.as_ref().is_none_or(|p| p.holds(&b))
    })
}

/// Successor states after an oracle synchronization.
pub fn oracle_fire(spec: &Spec, states: &[u8], s: &Sync) -> Vec<u8> {
    let (g, idx, values) = s;
    let mut next = states.to_vec();
    for (&p, &i) in spec.gates[*g].participants.iter().zip(idx) {
        let t = &spec.procs[p].trans[i];
        next[p] = t.to.next(values, spec.procs[p].states);
    }
    next
}

/// Cartesian product of `0..n` ranges.
pub fn product(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &n in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..n).map(move |i| {
                    let mut v = prefix.clone();
                    v.push(i);
                    v
                })
            })
            .collect();
    }
    out
}

/// Engine rendezvous mapped to the oracle's representation. Offers are
/// listed in transition order, so offer indices equal the indices among the
/// transitions leaving the current state.
pub fn engine_enabled(spec: &Spec, comp: &Composition<u8>, states: &[u8]) -> BTreeSet<Sync> {
    comp.enabled(states)
        .into_iter()
        .map(|r| {
            let idx = r
                .choice
                .iter()
                .map(|&(p, k)| {
                    spec.procs[p]
                        .trans
                        .iter()
                        .enumerate()
                        .filter(|(_, t)| t.from == states[p])
                        .nth(k)
                        .unwrap()
                        .0
                })
                .collect();
            (r.gate.0, idx, r.values.iter().map(value_of).collect())
        })
        .collect()
}

/// State vectors reachable in at most `depth` oracle steps, capped at `cap`.
pub fn reachable(spec: &Spec, depth: usize, cap: usize) -> Vec<Vec<u8>> {
    let init = vec![0u8; spec.procs.len()];
    let mut seen = BTreeSet::from([init.clone()]);
    let mut frontier = vec![init];
    for _ in 0..depth {
        let mut next = Vec::new();
        for s in &frontier {
            for sync in oracle_enabled(spec, s) {
                let n = oracle_fire(spec, s, &sync);
                if seen.len() < cap && seen.insert(n.clone()) {
                    next.push(n);
                }
            }
        }
        frontier = next;
    }
    seen.into_iter().collect()
}

/// A visible label: gate index and slot values.
pub type Label = (usize, Vec<i64>);

type Det = BTreeMap<Label, BTreeSet<Vec<u8>>>;

/// Labels enabled from a set of states, each with the set of successors.
fn step_set(comp: &Composition<u8>, set: &BTreeSet<Vec<u8>>) -> Det {
    let mut out = Det::new();
    for s in set {
        for r in comp.enabled(s) {
            let mut t = s.clone();
            comp.fire(&mut t, &r).unwrap();
            let vals = r.values.iter().map(value_of).collect();
            out.entry((r.gate.0, vals)).or_default().insert(t);
        }
    }
    out
}

/// Checks `rel` on the label sets of every pair of state sets reached by a
/// common trace of length below `depth`, starting from all-zero states of
/// `na` and `nb` processes. With `rel` equality this decides equality of
/// the trace sets up to `depth`; with inclusion it decides inclusion.
pub fn traces_related(
    a: &Composition<u8>,
    na: usize,
    b: &Composition<u8>,
    nb: usize,
    depth: usize,
    rel: impl Fn(&BTreeSet<&Label>, &BTreeSet<&Label>) -> bool,
) -> bool {
    type Pair = (BTreeSet<Vec<u8>>, BTreeSet<Vec<u8>>);
    let start: Pair = (BTreeSet::from([vec![0; na]]), BTreeSet::from([vec![0; nb]]));
    // most remaining depth each pair has been explored with
    let mut seen: BTreeMap<Pair, usize> = BTreeMap::new();
    let mut work = vec![(start, depth)];
    while let Some((pair, left)) = work.pop() {
        if left == 0 || seen.get(&pair).is_some_and(|d| *d >= left) {
            continue;
        }
        seen.insert(pair.clone(), left);
        let (da, db) = (step_set(a, &pair.0), step_set(b, &pair.1));
        if !rel(&da.keys().collect(), &db.keys().collect()) {
            return false;
        }
        for (label, na_next) in da {
            if let Some(nb_next) = db.get(&label) {
                work.push(((na_next, nb_next.clone()), left - 1));
            }
        }
    }
    true
}

/// The spec plus a one-state process on `gate` that accepts whatever is
/// offered.
pub fn with_pass_through(spec: &Spec, gate: usize) -> Composition<u8> {
    let arity = spec.gates[gate].arity;
    build_with(spec, |b, gates| {
        let g = gates[gate];
        let obs = b
            .process("observer", move |_: &u8| {
                vec![(0..arity).fold(Offer::to(g, 0), |o, i| o.accept(format!("o{i}")))]
            })
            .unwrap();
        b.participate(g, &[obs]).unwrap();
    })
}

/// The spec plus a process that lets `gate` fire once, with a first value
/// other than `banned`.
pub fn with_supervisor(spec: &Spec, gate: usize, banned: i64) -> Composition<u8> {
    let arity = spec.gates[gate].arity;
    build_with(spec, |b, gates| {
        let g = gates[gate];
        let sup = b
            .process("supervisor", move |s: &u8| {
                if *s != 0 {
                    return vec![];
                }
                let o = (0..arity).fold(Offer::to(g, 1), |o, i| o.accept(format!("o{i}")));
                vec![o.when(move |b| b.get("o0").is_none_or(|v| *v != num(banned)))]
            })
            .unwrap();
        b.participate(g, &[sup]).unwrap();
    })
}

/// Engine and oracle agree on enabled sets and successors in every state
/// reachable within a few steps. Returns the first disagreement.
pub fn oracle_agrees(spec: &Spec) -> Result<(), String> {
    let comp = build(spec);
    for states in reachable(spec, 4, 64) {
        let expected = oracle_enabled(spec, &states);
        let got = engine_enabled(spec, &comp, &states);
        if expected != got {
            return Err(format!("{states:?}: oracle {expected:?} engine {got:?}"));
        }
        for r in comp.enabled(&states) {
            let mut next = states.clone();
            comp.fire(&mut next, &r).map_err(|e| e.to_string())?;
            let sync = engine_enabled(spec, &comp, &states)
                .into_iter()
                .find(|s| s.0 == r.gate.0 && same_choice(spec, &states, s, &r))
                .unwrap();
            let want = oracle_fire(spec, &states, &sync);
            if next != want {
                return Err(format!(
                    "{states:?} via {sync:?}: engine {next:?} oracle {want:?}"
                ));
            }
        }
    }
    Ok(())
}

fn same_choice(spec: &Spec, states: &[u8], s: &Sync, r: &Rendezvous) -> bool {
    r.choice.iter().zip(&s.1).all(|(&(p, k), &t)| {
        spec.procs[p]
            .trans
            .iter()
            .enumerate()
            .filter(|(_, tr)| tr.from == states[p])
            .nth(k)
            .is_some_and(|(i, _)| i == t)
    })
}
