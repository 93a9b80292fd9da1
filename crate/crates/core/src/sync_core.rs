//! Executable multiway rendezvous.
//!
//! A [`Composition`] holds a set of named processes, each an explicit state
//! machine mapping its current state to the [`Offer`]s it is ready to take,
//! and a static participation map (the synchronization vector) from every
//! gate to the processes that must all agree before an action on that gate
//! can happen. A [`Rendezvous`] fires atomically: every participant moves to
//! the continuation of its chosen offer and nobody else moves.
//!
//! Value passing follows the `!`/`?` convention: each slot position must carry
//! at least one emitted value, all emitted values must be equal, and every
//! accepting variable is bound to that value. Selection predicates are then
//! evaluated under the offer's own bindings.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GateId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Visibility {
    External,
    Internal,
    Status,
}

#[derive(Debug, Clone)]
pub struct Gate {
    pub name: String,
    pub visibility: Visibility,
    pub arity: usize,
}

/// A datum carried by a slot. Equality is structural and reals compare
/// exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Real(f64),
    Token(&'static str),
    Str(String),
    Tuple(Vec<Value>),
}

// NaN breaks reflexivity; no composition in this crate emits one.
impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        std::mem::discriminant(self).hash(state);
        match self {
            Value::Bool(b) => b.hash(state),
            Value::Real(x) => {
                // -0.0 == 0.0, so both must hash alike.
                let bits = if *x == 0.0 { 0 } else { x.to_bits() };
                bits.hash(state)
            }
            Value::Token(t) => t.hash(state),
            Value::Str(s) => s.hash(state),
            Value::Tuple(vs) => vs.hash(state),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Real(x) => write!(f, "{x}"),
            Value::Token(t) => f.write_str(t),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Tuple(vs) => {
                f.write_str("(")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Real(x)
    }
}

impl From<&'static str> for Value {
    fn from(t: &'static str) -> Self {
        Value::Token(t)
    }
}

impl Value {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(x) => Some(*x),
            _ => None,
        }
    }

    pub fn as_token(&self) -> Option<&'static str> {
        match self {
            Value::Token(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    Emit(Value),
    Accept(String),
}

pub type Binding = BTreeMap<String, Value>;

pub type Predicate = Box<dyn Fn(&Binding) -> bool + Send + Sync>;

/// Where a process goes once its offer fires.
pub enum Next<S> {
    To(S),
    With(Box<dyn Fn(&Binding) -> S + Send + Sync>),
}

impl<S: Clone> Next<S> {
    fn resolve(&self, binding: &Binding) -> S {
        match self {
            Next::To(s) => s.clone(),
            Next::With(f) => f(binding),
        }
    }
}

pub struct Offer<S> {
    pub gate: GateId,
    pub slots: Vec<Slot>,
    pub predicate: Option<Predicate>,
    pub next: Next<S>,
}

impl<S> Offer<S> {
    /// Offer on `gate` moving to `next` when it fires.
    pub fn to(gate: GateId, next: S) -> Self {
        Offer {
            gate,
            slots: Vec::new(),
            predicate: None,
            next: Next::To(next),
        }
    }

    /// Offer whose continuation depends on the values bound by the rendezvous.
    pub fn with(gate: GateId, next: impl Fn(&Binding) -> S + Send + Sync + 'static) -> Self {
        Offer {
            gate,
            slots: Vec::new(),
            predicate: None,
            next: Next::With(Box::new(next)),
        }
    }

    pub fn emit(mut self, v: impl Into<Value>) -> Self {
        self.slots.push(Slot::Emit(v.into()));
        self
    }

    pub fn accept(mut self, var: impl Into<String>) -> Self {
        self.slots.push(Slot::Accept(var.into()));
        self
    }

    pub fn when(mut self, pred: impl Fn(&Binding) -> bool + Send + Sync + 'static) -> Self {
        self.predicate = Some(Box::new(pred));
        self
    }
}

impl<S> fmt::Debug for Offer<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Offer")
            .field("gate", &self.gate)
            .field("slots", &self.slots)
            .field("guarded", &self.predicate.is_some())
            .finish()
    }
}

/// Why a set of offers cannot synchronize.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UnifyFailure {
    /// Offers disagree on the number of slots.
    Arity,
    /// Two emitted values differ at this position.
    Mismatch(usize),
    /// Nobody emits at this position.
    Unconstrained(usize),
    /// The predicate of the offer at this index is false.
    Predicate(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unified {
    /// One value per slot position.
    pub values: Vec<Value>,
    /// Bindings seen by each offer, in input order.
    pub bindings: Vec<Binding>,
}

/// Unifies the offers of one gate.
pub fn unify<S>(offers: &[&Offer<S>]) -> Result<Unified, UnifyFailure> {
    unify_with(offers, None)
}

/// Like [`unify`], with `env` acting as one more emitter on every position.
pub fn unify_with<S>(offers: &[&Offer<S>], env: Option<&[Value]>) -> Result<Unified, UnifyFailure> {
    let arity = match (offers.first(), env) {
        (Some(o), _) => o.slots.len(),
        (None, Some(e)) => e.len(),
        (None, None) => 0,
    };
    if offers.iter().any(|o| o.slots.len() != arity) || env.is_some_and(|e| e.len() != arity) {
        return Err(UnifyFailure::Arity);
    }

    let mut values = Vec::with_capacity(arity);
    for pos in 0..arity {
        let mut chosen: Option<&Value> = env.map(|e| &e[pos]);
        for o in offers {
            if let Slot::Emit(v) = &o.slots[pos] {
                match chosen {
                    None => chosen = Some(v),
                    Some(c) if c == v => {}
                    Some(_) => return Err(UnifyFailure::Mismatch(pos)),
                }
            }
        }
        match chosen {
            Some(v) => values.push(v.clone()),
            None => return Err(UnifyFailure::Unconstrained(pos)),
        }
    }

    let mut bindings = Vec::with_capacity(offers.len());
    for (i, o) in offers.iter().enumerate() {
        let mut b = Binding::new();
        for (pos, slot) in o.slots.iter().enumerate() {
            if let Slot::Accept(var) = slot {
                b.insert(var.clone(), values[pos].clone());
            }
        }
        if let Some(p) = &o.predicate {
            if !p(&b) {
                return Err(UnifyFailure::Predicate(i));
            }
        }
        bindings.push(b);
    }
    Ok(Unified { values, bindings })
}

/// Produces the offers of one process in a given local state.
pub trait Behavior<S>: Send + Sync {
    fn offers(&self, state: &S) -> Vec<Offer<S>>;
}

impl<S, F> Behavior<S> for F
where
    F: Fn(&S) -> Vec<Offer<S>> + Send + Sync,
{
    fn offers(&self, state: &S) -> Vec<Offer<S>> {
        self(state)
    }
}

pub struct Process<S> {
    pub name: String,
    behavior: Box<dyn Behavior<S>>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompositionError {
    #[error("duplicate gate name {0}")]
    DuplicateGate(String),
    #[error("duplicate process name {0}")]
    DuplicateProcess(String),
    #[error("gate {0} has no participants")]
    NoParticipants(String),
    #[error("process index {0} out of range")]
    UnknownProcess(usize),
    #[error("process {process} offers gate {gate} it does not participate in")]
    NotParticipant { process: String, gate: String },
    #[error("process {process} offers {got} slots on gate {gate} of arity {arity}")]
    Arity {
        process: String,
        gate: String,
        arity: usize,
        got: usize,
    },
    #[error("expected {expected} process states, got {got}")]
    StateCount { expected: usize, got: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error("rendezvous on {0} is not enabled")]
    NotEnabled(String),
}

pub struct CompositionBuilder<S> {
    gates: Vec<Gate>,
    gate_index: HashMap<String, GateId>,
    processes: Vec<Process<S>>,
    participation: Vec<Vec<usize>>,
}

impl<S> Default for CompositionBuilder<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S> CompositionBuilder<S> {
    pub fn new() -> Self {
        CompositionBuilder {
            gates: Vec::new(),
            gate_index: HashMap::new(),
            processes: Vec::new(),
            participation: Vec::new(),
        }
    }

    pub fn gate(
        &mut self,
        name: &str,
        visibility: Visibility,
        arity: usize,
    ) -> Result<GateId, CompositionError> {
        if self.gate_index.contains_key(name) {
            return Err(CompositionError::DuplicateGate(name.to_string()));
        }
        let id = GateId(self.gates.len());
        self.gates.push(Gate {
            name: name.to_string(),
            visibility,
            arity,
        });
        self.gate_index.insert(name.to_string(), id);
        self.participation.push(Vec::new());
        Ok(id)
    }

    pub fn process(
        &mut self,
        name: &str,
        behavior: impl Behavior<S> + 'static,
    ) -> Result<usize, CompositionError> {
        if self.processes.iter().any(|p| p.name == name) {
            return Err(CompositionError::DuplicateProcess(name.to_string()));
        }
        self.processes.push(Process {
            name: name.to_string(),
            behavior: Box::new(behavior),
        });
        Ok(self.processes.len() - 1)
    }

    pub fn participate(&mut self, gate: GateId, procs: &[usize]) -> Result<(), CompositionError> {
        for &p in procs {
            if p >= self.processes.len() {
                return Err(CompositionError::UnknownProcess(p));
            }
            let set = &mut self.participation[gate.0];
            if let Err(at) = set.binary_search(&p) {
                set.insert(at, p);
            }
        }
        Ok(())
    }

    pub fn build(self) -> Result<Composition<S>, CompositionError> {
        for (g, parts) in self.gates.iter().zip(&self.participation) {
            if parts.is_empty() {
                return Err(CompositionError::NoParticipants(g.name.clone()));
            }
        }
        Ok(Composition {
            gates: self.gates,
            gate_index: self.gate_index,
            processes: self.processes,
            participation: self.participation,
        })
    }
}

/// Processes composed in parallel, synchronizing on shared gates.
pub struct Composition<S> {
    gates: Vec<Gate>,
    gate_index: HashMap<String, GateId>,
    processes: Vec<Process<S>>,
    participation: Vec<Vec<usize>>,
}

/// A matched n-party synchronization.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendezvous {
    pub gate: GateId,
    /// (process index, offer index) for every participant, by process index.
    pub choice: Vec<(usize, usize)>,
    pub values: Vec<Value>,
    pub binding: Binding,
}

/// What happened when a rendezvous fired.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub gate: GateId,
    pub gate_name: String,
    pub participants: Vec<String>,
    pub values: Vec<Value>,
    pub binding: Binding,
}

/// An [`Event`] stamped with its position in a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub step: u64,
    pub event: Event,
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} gate={} participants={} binding=",
            self.step,
            self.event.gate_name,
            self.event.participants.join(",")
        )?;
        for (i, (k, v)) in self.event.binding.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Offers of every process, computed once per step.
pub struct OfferTable<S> {
    offers: Vec<Vec<Offer<S>>>,
}

impl<S> OfferTable<S> {
    pub fn of(&self, process: usize) -> &[Offer<S>] {
        &self.offers[process]
    }
}

impl<S: Clone> Composition<S> {
    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn gate(&self, id: GateId) -> &Gate {
        &self.gates[id.0]
    }

    pub fn gate_id(&self, name: &str) -> Option<GateId> {
        self.gate_index.get(name).copied()
    }

    pub fn process_count(&self) -> usize {
        self.processes.len()
    }

    pub fn process_name(&self, i: usize) -> &str {
        &self.processes[i].name
    }

    pub fn process_index(&self, name: &str) -> Option<usize> {
        self.processes.iter().position(|p| p.name == name)
    }

    /// Participant process indices of `gate`, ascending.
    pub fn participation(&self, gate: GateId) -> &[usize] {
        &self.participation[gate.0]
    }

    /// Evaluates every process's offers and checks them against the
    /// composition's participation map and gate arities.
    pub fn offer_table(&self, states: &[S]) -> Result<OfferTable<S>, CompositionError> {
        if states.len() != self.processes.len() {
            return Err(CompositionError::StateCount {
                expected: self.processes.len(),
                got: states.len(),
            });
        }
        let mut offers = Vec::with_capacity(states.len());
        for (i, (p, s)) in self.processes.iter().zip(states).enumerate() {
            let os = p.behavior.offers(s);
            for o in &os {
                let gate = &self.gates[o.gate.0];
                if self.participation[o.gate.0].binary_search(&i).is_err() {
                    return Err(CompositionError::NotParticipant {
                        process: p.name.clone(),
                        gate: gate.name.clone(),
                    });
                }
                if o.slots.len() != gate.arity {
                    return Err(CompositionError::Arity {
                        process: p.name.clone(),
                        gate: gate.name.clone(),
                        arity: gate.arity,
                        got: o.slots.len(),
                    });
                }
            }
            offers.push(os);
        }
        Ok(OfferTable { offers })
    }

    /// All rendezvous on `gate` given precomputed offers, optionally with an
    /// environment emitting `env` on every slot.
    pub fn enabled_on(
        &self,
        table: &OfferTable<S>,
        gate: GateId,
        env: Option<&[Value]>,
    ) -> Vec<Rendezvous> {
        let parts = &self.participation[gate.0];
        let mut candidates: Vec<Vec<usize>> = Vec::with_capacity(parts.len());
        for &p in parts {
            let idx: Vec<usize> = table.offers[p]
                .iter()
                .enumerate()
                .filter(|(_, o)| o.gate == gate)
                .map(|(i, _)| i)
                .collect();
            if idx.is_empty() {
                return Vec::new();
            }
            candidates.push(idx);
        }

        let mut out = Vec::new();
        let mut cursor = vec![0usize; parts.len()];
        loop {
            let chosen: Vec<&Offer<S>> = parts
                .iter()
                .zip(&cursor)
                .enumerate()
                .map(|(k, (&p, &c))| &table.offers[p][candidates[k][c]])
                .collect();
            if let Ok(u) = unify_with(&chosen, env) {
                let mut binding = Binding::new();
                for b in u.bindings {
                    for (k, v) in b {
                        binding.entry(k).or_insert(v);
                    }
                }
                out.push(Rendezvous {
                    gate,
                    choice: parts
                        .iter()
                        .zip(&cursor)
                        .enumerate()
                        .map(|(k, (&p, &c))| (p, candidates[k][c]))
                        .collect(),
                    values: u.values,
                    binding,
                });
            }
            // odometer over the offer combinations
            let mut k = parts.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                cursor[k] += 1;
                if cursor[k] < candidates[k].len() {
                    break;
                }
                cursor[k] = 0;
            }
        }
    }

    /// Every rendezvous that can fire from `states`, gate by gate.
    pub fn enabled(&self, states: &[S]) -> Vec<Rendezvous> {
        self.try_enabled(states)
            .unwrap_or_else(|e| panic!("malformed composition: {e}"))
    }

    pub fn try_enabled(&self, states: &[S]) -> Result<Vec<Rendezvous>, CompositionError> {
        let table = self.offer_table(states)?;
        Ok(self.enabled_in(&table, |_| true))
    }

    /// Enabled rendezvous restricted to gates accepted by `filter`.
    pub fn enabled_in(
        &self,
        table: &OfferTable<S>,
        filter: impl Fn(GateId) -> bool,
    ) -> Vec<Rendezvous> {
        (0..self.gates.len())
            .map(GateId)
            .filter(|g| filter(*g))
            .flat_map(|g| self.enabled_on(table, g, None))
            .collect()
    }

    /// Fires `r`, advancing exactly its participants.
    pub fn fire(&self, states: &mut [S], r: &Rendezvous) -> Result<Event, EngineError> {
        self.fire_with(states, r, None)
    }

    /// Fires a rendezvous computed with an environment emitter.
    pub fn fire_with(
        &self,
        states: &mut [S],
        r: &Rendezvous,
        env: Option<&[Value]>,
    ) -> Result<Event, EngineError> {
        let table = self.offer_table(states)?;
        self.fire_in(&table, states, r, env)
    }

    /// Fires `r` using an offer table already computed for `states`.
    pub fn fire_in(
        &self,
        table: &OfferTable<S>,
        states: &mut [S],
        r: &Rendezvous,
        env: Option<&[Value]>,
    ) -> Result<Event, EngineError> {
        let gate = &self.gates[r.gate.0];
        let not_enabled = || EngineError::NotEnabled(gate.name.clone());
        let parts = &self.participation[r.gate.0];
        if r.choice.len() != parts.len() || r.choice.iter().zip(parts).any(|((p, _), q)| p != q) {
            return Err(not_enabled());
        }
        let mut chosen = Vec::with_capacity(parts.len());
        for &(p, i) in &r.choice {
            match table.offers[p].get(i) {
                Some(o) if o.gate == r.gate => chosen.push(o),
                _ => return Err(not_enabled()),
            }
        }
        let unified = unify_with(&chosen, env).map_err(|_| not_enabled())?;
        if unified.values != r.values {
            return Err(not_enabled());
        }
        let next: Vec<S> = chosen
            .iter()
            .zip(&unified.bindings)
            .map(|(o, b)| o.next.resolve(b))
            .collect();
        for (&(p, _), s) in r.choice.iter().zip(next) {
            states[p] = s;
        }
        Ok(Event {
            gate: r.gate,
            gate_name: gate.name.clone(),
            participants: parts
                .iter()
                .map(|&p| self.processes[p].name.clone())
                .collect(),
            values: unified.values,
            binding: r.binding.clone(),
        })
    }

    /// Repeatedly fires one rendezvous chosen by `policy` until the budget is
    /// spent or nothing is enabled.
    pub fn run(&self, states: &mut [S], policy: &SchedulerPolicy, budget: u64) -> Trace {
        self.run_until(states, policy, budget, |_| false)
    }

    /// Like [`Composition::run`]; `stop` is consulted after every event.
    pub fn run_until(
        &self,
        states: &mut [S],
        policy: &SchedulerPolicy,
        budget: u64,
        mut stop: impl FnMut(&EventRecord) -> bool,
    ) -> Trace {
        let mut scheduler = Scheduler::new(policy);
        let mut events = Vec::new();
        for step in 0..budget {
            let enabled = self.enabled(states);
            let Some(pick) = scheduler.choose(&enabled) else {
                return Trace {
                    events,
                    outcome: Outcome::Deadlock,
                };
            };
            let event = self
                .fire(states, &enabled[pick])
                .expect("scheduler picked an enabled rendezvous");
            let record = EventRecord { step, event };
            let halt = stop(&record);
            events.push(record);
            if halt {
                return Trace {
                    events,
                    outcome: Outcome::Stopped,
                };
            }
        }
        Trace {
            events,
            outcome: Outcome::Budget,
        }
    }
}

/// Priority classes over gates plus a seed for tie-breaking.
#[derive(Debug, Clone)]
pub struct SchedulerPolicy {
    /// Class of each gate, indexed by `GateId`; higher classes fire first.
    /// Gates beyond the end of the vector are in class 0.
    pub priority: Vec<u8>,
    pub seed: u64,
}

impl SchedulerPolicy {
    pub fn uniform(seed: u64) -> Self {
        SchedulerPolicy {
            priority: Vec::new(),
            seed,
        }
    }

    /// STATUS gates below everything else.
    pub fn by_visibility<S: Clone>(c: &Composition<S>, seed: u64) -> Self {
        SchedulerPolicy {
            priority: c
                .gates()
                .iter()
                .map(|g| u8::from(g.visibility != Visibility::Status))
                .collect(),
            seed,
        }
    }

    fn class(&self, g: GateId) -> u8 {
        self.priority.get(g.0).copied().unwrap_or(0)
    }
}

/// Seeded choice among enabled rendezvous.
pub struct Scheduler {
    rng: ChaCha8Rng,
    policy: SchedulerPolicy,
}

impl Scheduler {
    pub fn new(policy: &SchedulerPolicy) -> Self {
        Scheduler {
            rng: ChaCha8Rng::seed_from_u64(policy.seed),
            policy: policy.clone(),
        }
    }

    /// Index into `enabled` of the rendezvous to fire: uniform over the
    /// highest nonempty priority class.
    pub fn choose(&mut self, enabled: &[Rendezvous]) -> Option<usize> {
        let top = enabled.iter().map(|r| self.policy.class(r.gate)).max()?;
        let best: Vec<usize> = (0..enabled.len())
            .filter(|&i| self.policy.class(enabled[i].gate) == top)
            .collect();
        Some(best[self.rng.gen_range(0..best.len())])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Budget,
    Deadlock,
    Stopped,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub events: Vec<EventRecord>,
    pub outcome: Outcome,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn valueless(gate: GateId, next: u8) -> Offer<u8> {
        Offer::to(gate, next)
    }

    #[test]
    fn unify_single_emitter_binds() {
        let g = GateId(0);
        let a = valueless(g, 0).emit(Value::Real(5.0));
        let b = valueless(g, 0).accept("x");
        let u = unify(&[&a, &b]).unwrap();
        assert_eq!(u.values, vec![Value::Real(5.0)]);
        assert_eq!(u.bindings[1]["x"], Value::Real(5.0));
    }

    #[test]
    fn unify_unequal_emissions_fail() {
        let g = GateId(0);
        let a = valueless(g, 0).emit(Value::Real(5.0));
        let b = valueless(g, 0).emit(Value::Real(6.0));
        assert_eq!(unify(&[&a, &b]), Err(UnifyFailure::Mismatch(0)));
    }

    #[test]
    fn unify_predicate_forbids() {
        let g = GateId(0);
        let a = valueless(g, 0).emit(Value::Real(2.0));
        let b = valueless(g, 0)
            .accept("x")
            .when(|b| b["x"].as_real().unwrap() > 3.0);
        assert_eq!(unify(&[&a, &b]), Err(UnifyFailure::Predicate(1)));
    }

    #[test]
    fn unify_rejects_accept_only_position() {
        let g = GateId(0);
        let a = valueless(g, 0).accept("x");
        let b = valueless(g, 0).accept("y");
        assert_eq!(unify(&[&a, &b]), Err(UnifyFailure::Unconstrained(0)));
        let env = [Value::Bool(true)];
        let u = unify_with(&[&a, &b], Some(&env)).unwrap();
        assert_eq!(u.bindings[0]["x"], Value::Bool(true));
    }

    #[test]
    fn unify_arity_mismatch() {
        let g = GateId(0);
        let a = valueless(g, 0).emit(true);
        let b = valueless(g, 0);
        assert_eq!(unify(&[&a, &b]), Err(UnifyFailure::Arity));
    }

    fn three_way() -> Composition<u8> {
        let mut b = CompositionBuilder::new();
        let ft = b.gate("FT", Visibility::Internal, 0).unwrap();
        let local = b.gate("LOCAL", Visibility::Internal, 0).unwrap();
        let mut ids = Vec::new();
        for (i, name) in ["P12", "P7", "P8", "P1"].into_iter().enumerate() {
            ids.push(
                b.process(name, move |s: &u8| match (*s, i) {
                    (0, 3) => vec![Offer::to(local, 2)],
                    (0, _) => vec![Offer::to(ft, 1), Offer::to(local, 2)],
                    _ => vec![],
                })
                .unwrap(),
            );
        }
        b.participate(ft, &ids[..3]).unwrap();
        b.participate(local, &ids[..]).unwrap();
        b.build().unwrap()
    }

    #[test]
    fn three_party_rendezvous_advances_only_participants() {
        let c = three_way();
        let mut states = vec![0u8, 0, 0, 0];
        let en = c.enabled(&states);
        let ft = c.gate_id("FT").unwrap();
        let r = en.iter().find(|r| r.gate == ft).unwrap();
        let ev = c.fire(&mut states, r).unwrap();
        assert_eq!(ev.participants, ["P12", "P7", "P8"]);
        assert_eq!(states, vec![1, 1, 1, 0]);
    }

    #[test]
    fn missing_participant_blocks() {
        let c = three_way();
        let states = vec![0u8, 1, 0, 0];
        let ft = c.gate_id("FT").unwrap();
        assert!(c.enabled(&states).iter().all(|r| r.gate != ft));
    }

    #[test]
    fn non_participant_offer_is_rejected() {
        let mut b = CompositionBuilder::new();
        let g = b.gate("G", Visibility::Internal, 0).unwrap();
        let h = b.gate("H", Visibility::Internal, 0).unwrap();
        let p = b.process("P", move |_: &u8| vec![Offer::to(h, 0)]).unwrap();
        let q = b.process("Q", |_: &u8| vec![]).unwrap();
        b.participate(g, &[p]).unwrap();
        b.participate(h, &[q]).unwrap();
        let c = b.build().unwrap();
        assert!(matches!(
            c.try_enabled(&[0, 0]),
            Err(CompositionError::NotParticipant { .. })
        ));
    }

    #[test]
    fn gate_without_participants_is_rejected() {
        let mut b = CompositionBuilder::<u8>::new();
        b.gate("G", Visibility::Internal, 0).unwrap();
        assert!(matches!(
            b.build(),
            Err(CompositionError::NoParticipants(_))
        ));
    }

    #[test]
    fn firing_stale_rendezvous_is_an_error() {
        let c = three_way();
        let mut states = vec![0u8, 0, 0, 0];
        let ft = c.gate_id("FT").unwrap();
        let r = c
            .enabled(&states)
            .into_iter()
            .find(|r| r.gate == ft)
            .unwrap();
        c.fire(&mut states, &r).unwrap();
        assert!(matches!(
            c.fire(&mut states, &r),
            Err(EngineError::NotEnabled(_))
        ));
    }

    #[test]
    fn single_participant_gate_is_a_local_action() {
        let mut b = CompositionBuilder::new();
        let g = b.gate("TICK", Visibility::Internal, 0).unwrap();
        let p = b
            .process("P", move |s: &u8| vec![Offer::to(g, s + 1)])
            .unwrap();
        b.participate(g, &[p]).unwrap();
        let c = b.build().unwrap();
        let mut states = vec![0u8];
        let trace = c.run(&mut states, &SchedulerPolicy::uniform(1), 3);
        assert_eq!(trace.outcome, Outcome::Budget);
        assert_eq!(trace.events.len(), 3);
        assert_eq!(states, vec![3]);
    }

    #[test]
    fn deadlock_at_step_zero() {
        let mut b = CompositionBuilder::new();
        let g = b.gate("G", Visibility::Internal, 0).unwrap();
        let p = b.process("P", |_: &u8| vec![]).unwrap();
        b.participate(g, &[p]).unwrap();
        let c = b.build().unwrap();
        let trace = c.run(&mut [0u8], &SchedulerPolicy::uniform(0), 10);
        assert_eq!(trace.outcome, Outcome::Deadlock);
        assert!(trace.events.is_empty());
    }

    #[test]
    fn actuator_class_beats_status_class() {
        let mut b = CompositionBuilder::new();
        let cmd = b.gate("PRESS_STOP", Visibility::External, 0).unwrap();
        let status = b.gate("GET_STATUS", Visibility::Status, 0).unwrap();
        let p = b
            .process("P", move |_: &u8| {
                vec![Offer::to(cmd, 0), Offer::to(status, 0)]
            })
            .unwrap();
        b.participate(cmd, &[p]).unwrap();
        b.participate(status, &[p]).unwrap();
        let c = b.build().unwrap();
        for seed in 0..50 {
            let policy = SchedulerPolicy::by_visibility(&c, seed);
            let trace = c.run(&mut [0u8], &policy, 5);
            assert!(trace.events.iter().all(|e| e.event.gate == cmd));
        }
    }

    #[test]
    fn event_record_line_format() {
        let mut binding = Binding::new();
        binding.insert("p".into(), Value::Token("MIDDLE"));
        binding.insert("x".into(), Value::Real(0.5));
        let rec = EventRecord {
            step: 7,
            event: Event {
                gate: GateId(0),
                gate_name: "G1".into(),
                participants: vec!["DISPATCHER".into(), "P1".into()],
                values: vec![],
                binding,
            },
        };
        assert_eq!(
            rec.to_string(),
            "step=7 gate=G1 participants=DISPATCHER,P1 binding=p=MIDDLE;x=0.5"
        );
    }
}
