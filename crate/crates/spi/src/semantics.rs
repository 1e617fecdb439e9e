//! Executable labelled transition system.
//!
//! A [`State`] keeps every restriction lifted to the top level, so a state is
//! a list of restricted names with their types and a list of parallel atoms
//! (anything but `0`, `|` and `new`). Internal steps unfold thread calls,
//! decide matches and synchronise an emission with a `present`; emissions
//! persist for the rest of the instant. When no internal step is possible
//! the instant ends: emitted values are collected, suspended `present`s
//! fall through to their continuation, dereferences are replaced by the list
//! of emitted values and restricted types are shifted.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::{DefaultHasher, Hash, Hasher};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::parser::{pretty, pretty_expr, pretty_value};
use crate::syntax::{match_value, Cont, Expr, Fresh, FunPat, Module, Name, Pattern, Proc, Value};
use crate::types::{canonicalize, ctor_fields, Ctx, Type};

pub const DEFAULT_FUEL: u64 = 100_000;
pub const DEFAULT_STEP_BUDGET: usize = 100_000;
/// Orderings per signal enumerated exhaustively (5!).
pub const EXHAUSTIVE_PERMUTATIONS: usize = 120;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SemError {
    #[error("evaluation of `{expr}` ran out of fuel")]
    OutOfFuel { expr: String },
    #[error("no equation of `{fun}` matches ({args})")]
    NoEquation { fun: Name, args: String },
    #[error("unknown function `{0}`")]
    UnknownFunction(Name),
    #[error("unknown thread `{0}` or wrong number of arguments")]
    BadCall(Name),
    #[error("`{0}` is not a value")]
    NotAValue(String),
    #[error("the program can still perform an internal step")]
    NotSuspended,
    #[error("the value list for `{0}` is not an ordering of the emitted values")]
    BadValueMap(Name),
    #[error("more than {0} internal steps in one instant")]
    Divergence(usize),
    #[error("module has no main program")]
    NoEntry,
}

/// A running program with its restrictions lifted to the top level.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct State {
    pub binders: Vec<(Name, Type)>,
    pub atoms: Vec<Proc>,
    /// Types of the free signals.
    pub free: Ctx,
    pub fresh: Fresh,
    /// Names extruded so far by outputs.
    pub extruded: u32,
}

/// Identifies an internal step by the atoms involved.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Redex {
    Rec(usize),
    IfSig(usize),
    Match(usize),
    Synch { reader: usize, emitter: usize },
}

impl std::fmt::Display for Redex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Redex::Rec(i) => write!(f, "rec@{i}"),
            Redex::IfSig(i) => write!(f, "ifsig@{i}"),
            Redex::Match(i) => write!(f, "match@{i}"),
            Redex::Synch { reader, emitter } => write!(f, "synch@{reader}<-{emitter}"),
        }
    }
}

/// Values emitted on each signal during an instant.
pub type EmitMap = BTreeMap<Name, BTreeSet<Value>>;
/// An ordering of the emitted values of each signal.
pub type ValueMap = BTreeMap<Name, Vec<Value>>;

/// Observable actions of an open state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    /// Output of `value` on `sig`; `extruded` are the restricted names it
    /// makes public, already renamed in `value`.
    Out {
        sig: Name,
        value: Value,
        extruded: Vec<Name>,
    },
    In {
        sig: Name,
        value: Value,
    },
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::Out {
                sig,
                value,
                extruded,
            } if extruded.is_empty() => {
                write!(f, "out {sig} {}", pretty_value(value))
            }
            Action::Out {
                sig,
                value,
                extruded,
            } => {
                let names: Vec<String> = extruded.iter().map(|n| n.to_string()).collect();
                write!(
                    f,
                    "(new {}) out {sig} {}",
                    names.join(", "),
                    pretty_value(value)
                )
            }
            Action::In { sig, value } => write!(f, "in {sig} {}", pretty_value(value)),
        }
    }
}

/// How the interpreter resolves choices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    /// First redex, values in their natural order.
    Leftmost,
    /// Pseudo-random redexes and orderings from a seed.
    Seeded(u64),
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRecord {
    pub instant: usize,
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub redex: Option<String>,
    #[serde(rename = "E", skip_serializing_if = "Option::is_none")]
    pub e: Option<BTreeMap<String, Vec<String>>>,
    #[serde(rename = "V", skip_serializing_if = "Option::is_none")]
    pub v: Option<BTreeMap<String, Vec<String>>>,
    pub hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
}

#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    /// Emitted values per completed instant.
    pub emitted: Vec<EmitMap>,
    pub error: Option<SemError>,
    pub final_state: Option<String>,
}

impl Trace {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace records serialise"));
            out.push('\n');
        }
        out
    }
}

pub fn emit_map_strings(e: &EmitMap) -> BTreeMap<String, Vec<String>> {
    e.iter()
        .map(|(s, vs)| (s.to_string(), vs.iter().map(pretty_value).collect()))
        .collect()
}

pub fn value_map_strings(v: &ValueMap) -> BTreeMap<String, Vec<String>> {
    v.iter()
        .map(|(s, vs)| (s.to_string(), vs.iter().map(pretty_value).collect()))
        .collect()
}

/// Hex SHA-256 prefix of a canonical key.
pub fn key_hash(key: &str) -> String {
    let d = Sha256::digest(key.as_bytes());
    d.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// All orderings of `vals`.
pub fn permutations<T: Clone>(vals: &[T]) -> Vec<Vec<T>> {
    if vals.len() <= 1 {
        return vec![vals.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..vals.len() {
        let mut rest = vals.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x.clone());
            out.push(p);
        }
    }
    out
}

/// Interpreter over the declarations of a module.
#[derive(Clone, Copy)]
pub struct Machine<'m> {
    pub module: &'m Module,
    pub fuel: u64,
    pub step_budget: usize,
}

impl<'m> Machine<'m> {
    pub fn new(module: &'m Module) -> Self {
        Machine {
            module,
            fuel: DEFAULT_FUEL,
            step_budget: DEFAULT_STEP_BUDGET,
        }
    }

    // ---- expressions ----

    /// Call-by-value evaluation of a closed expression.
    pub fn eval(&self, e: &Expr) -> Result<Value, SemError> {
        let mut fuel = self.fuel;
        self.eval_fuel(e, &BTreeMap::new(), &mut fuel)
            .map_err(|err| match err {
                SemError::OutOfFuel { .. } => SemError::OutOfFuel {
                    expr: pretty_expr(e),
                },
                other => other,
            })
    }

    fn eval_fuel(
        &self,
        e: &Expr,
        env: &BTreeMap<Name, Value>,
        fuel: &mut u64,
    ) -> Result<Value, SemError> {
        if *fuel == 0 {
            return Err(SemError::OutOfFuel {
                expr: String::new(),
            });
        }
        *fuel -= 1;
        match e {
            Expr::Var(x) => Ok(env.get(x).cloned().unwrap_or_else(|| Value::Sig(x.clone()))),
            Expr::Con(c, args) => Ok(Value::Con(
                c.clone(),
                args.iter()
                    .map(|a| self.eval_fuel(a, env, fuel))
                    .collect::<Result<_, _>>()?,
            )),
            Expr::Fun(f, args) => {
                let vals: Vec<Value> = args
                    .iter()
                    .map(|a| self.eval_fuel(a, env, fuel))
                    .collect::<Result<_, _>>()?;
                self.apply(f, &vals, fuel)
            }
            Expr::Deref(_) => Err(SemError::NotAValue(pretty_expr(e))),
        }
    }

    pub fn apply(&self, f: &Name, vals: &[Value], fuel: &mut u64) -> Result<Value, SemError> {
        let def = self
            .module
            .funs
            .get(f)
            .ok_or_else(|| SemError::UnknownFunction(f.clone()))?;
        for c in &def.clauses {
            let mut th = BTreeMap::new();
            if c.pats.len() == vals.len()
                && c.pats
                    .iter()
                    .zip(vals)
                    .all(|(p, v)| match_fun_pat(p, v, &mut th))
            {
                return self.eval_fuel(&c.body, &th, fuel);
            }
        }
        Err(SemError::NoEquation {
            fun: f.clone(),
            args: vals.iter().map(pretty_value).collect::<Vec<_>>().join(", "),
        })
    }

    // ---- states ----

    /// Initial state of the entry program.
    pub fn initial(&self) -> Result<State, SemError> {
        let e = self.module.entry.as_ref().ok_or(SemError::NoEntry)?;
        Ok(self.state_of(e.ctx.iter().cloned().collect(), &e.body))
    }

    /// State running `p` with free signals typed by `free`.
    pub fn state_of(&self, free: Ctx, p: &Proc) -> State {
        let mut st = State {
            binders: vec![],
            atoms: vec![],
            free,
            fresh: Fresh::default(),
            extruded: 0,
        };
        let mut names: BTreeSet<Name> = p.free_vars();
        collect_binders(p, &mut names);
        st.fresh.avoid(names.iter());
        let mut atoms = Vec::new();
        lift(p.clone(), &mut st.binders, &mut atoms, &mut st.fresh);
        st.atoms = atoms;
        st
    }

    /// Replaces atom `i` by the normalised program `p`.
    fn splice(&self, st: &State, i: usize, p: Proc) -> State {
        let mut next = st.clone();
        let mut atoms = Vec::new();
        lift(p, &mut next.binders, &mut atoms, &mut next.fresh);
        next.atoms.splice(i..=i, atoms);
        next
    }

    pub fn sig_type<'a>(&self, st: &'a State, s: &Name) -> Option<&'a Type> {
        st.binders
            .iter()
            .rev()
            .find(|(n, _)| n == s)
            .map(|(_, t)| t)
            .or_else(|| st.free.get(s))
    }

    fn sig_kind(&self, st: &State, s: &Name) -> Option<u8> {
        self.sig_type(st, s)
            .and_then(Type::usage)
            .map(|u| u.kind().index())
    }

    /// Internal redexes, in atom order.
    pub fn redexes(&self, st: &State) -> Vec<Redex> {
        let mut out = Vec::new();
        for (i, a) in st.atoms.iter().enumerate() {
            match a {
                Proc::Call(..) => out.push(Redex::Rec(i)),
                Proc::IfSig { .. } => out.push(Redex::IfSig(i)),
                Proc::Match { .. } => out.push(Redex::Match(i)),
                Proc::Present { sig, .. } => {
                    for (j, b) in st.atoms.iter().enumerate() {
                        if matches!(b, Proc::Emit { sig: s2, .. } if s2 == sig) {
                            out.push(Redex::Synch {
                                reader: i,
                                emitter: j,
                            });
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn is_suspended(&self, st: &State) -> bool {
        let emitting: BTreeSet<&Name> = st
            .atoms
            .iter()
            .filter_map(|a| match a {
                Proc::Emit { sig, .. } => Some(sig),
                _ => None,
            })
            .collect();
        st.atoms.iter().all(|a| match a {
            Proc::Emit { .. } => true,
            Proc::Present { sig, .. } => !emitting.contains(sig),
            _ => false,
        })
    }

    /// Performs one internal step.
    pub fn fire(&self, st: &State, r: &Redex) -> Result<State, SemError> {
        match *r {
            Redex::Rec(i) => {
                let Proc::Call(a, args) = &st.atoms[i] else {
                    unreachable!("redex points at a call")
                };
                let vals: Vec<Value> = args
                    .iter()
                    .map(|e| self.eval(e))
                    .collect::<Result<_, _>>()?;
                let mut fresh = st.fresh.clone();
                let body = self
                    .module
                    .unfold(a, &vals, &mut fresh)
                    .ok_or_else(|| SemError::BadCall(a.clone()))?;
                let mut next = self.splice(st, i, body);
                next.fresh.next = next.fresh.next.max(fresh.next);
                Ok(next)
            }
            Redex::IfSig(i) => {
                let Proc::IfSig {
                    left,
                    right,
                    then,
                    els,
                } = &st.atoms[i]
                else {
                    unreachable!("redex points at a signal match")
                };
                let p = if left == right {
                    (**then).clone()
                } else {
                    (**els).clone()
                };
                Ok(self.splice(st, i, p))
            }
            Redex::Match(i) => {
                let Proc::Match {
                    scrut,
                    pat,
                    then,
                    els,
                    ..
                } = &st.atoms[i]
                else {
                    unreachable!("redex points at a match")
                };
                let v = self.eval(scrut)?;
                let mut fresh = st.fresh.clone();
                let p = match match_value(&v, pat) {
                    Some(th) => then.subst(&th, &mut fresh),
                    None => (**els).clone(),
                };
                let mut next = self.splice(st, i, p);
                next.fresh.next = next.fresh.next.max(fresh.next);
                Ok(next)
            }
            Redex::Synch { reader, emitter } => {
                let Proc::Present { sig, var, body, .. } = &st.atoms[reader] else {
                    unreachable!("redex points at a present")
                };
                let Proc::Emit { val, .. } = &st.atoms[emitter] else {
                    unreachable!("redex points at an emission")
                };
                let v = self.eval(val)?;
                let mut fresh = st.fresh.clone();
                let p = body.subst(&BTreeMap::from([(var.clone(), v)]), &mut fresh);
                let mut base = st.clone();
                if self.sig_kind(st, sig) == Some(5) {
                    if let Proc::Emit { marked, .. } = &mut base.atoms[emitter] {
                        *marked = true;
                    }
                }
                let mut next = self.splice(&base, reader, p);
                next.fresh.next = next.fresh.next.max(fresh.next);
                Ok(next)
            }
        }
    }

    /// Every internal successor.
    pub fn step_internal(&self, st: &State) -> Result<Vec<(Redex, State)>, SemError> {
        self.redexes(st)
            .into_iter()
            .map(|r| self.fire(st, &r).map(|s| (r, s)))
            .collect()
    }

    /// Values emitted so far in the instant.
    pub fn emit_map(&self, st: &State) -> Result<EmitMap, SemError> {
        let mut e = EmitMap::new();
        for a in &st.atoms {
            if let Proc::Emit { sig, val, .. } = a {
                e.entry(sig.clone()).or_default().insert(self.eval(val)?);
            }
        }
        Ok(e)
    }

    /// Number of emission atoms per signal.
    pub fn emission_counts(&self, st: &State) -> BTreeMap<Name, usize> {
        let mut out = BTreeMap::new();
        for a in &st.atoms {
            if let Proc::Emit { sig, .. } = a {
                *out.entry(sig.clone()).or_insert(0) += 1;
            }
        }
        out
    }

    /// Signals dereferenced by a suspended continuation.
    pub fn dereferenced(&self, st: &State) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        for a in &st.atoms {
            if let Proc::Present { cont, .. } = a {
                cont.args.iter().for_each(|e| e.derefs(&mut out));
            }
        }
        out
    }

    /// End-of-instant value maps. Orderings matter only for dereferenced
    /// signals with at least two values; those are enumerated exhaustively
    /// when there are at most `limit` combinations, and sampled otherwise.
    /// The flag tells whether the enumeration is exhaustive.
    pub fn value_maps(
        &self,
        st: &State,
        limit: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<ValueMap>, bool), SemError> {
        let e = self.emit_map(st)?;
        let derefs = self.dereferenced(st);
        let base: ValueMap = e
            .iter()
            .map(|(s, vs)| (s.clone(), vs.iter().cloned().collect()))
            .collect();
        let varying: Vec<(&Name, Vec<Value>)> = e
            .iter()
            .filter(|(s, vs)| vs.len() >= 2 && derefs.contains(*s))
            .map(|(s, vs)| (s, vs.iter().cloned().collect()))
            .collect();
        let mut total: usize = 1;
        let mut exhaustive = true;
        for (_, vs) in &varying {
            let f = (1..=vs.len()).try_fold(1usize, |acc, k| acc.checked_mul(k));
            match f.and_then(|f| total.checked_mul(f)) {
                Some(t) if t <= limit && vs.len() <= 5 => total = t,
                _ => {
                    exhaustive = false;
                    break;
                }
            }
        }
        if exhaustive {
            let mut maps = vec![base.clone()];
            for (s, vs) in &varying {
                let perms = permutations(vs);
                maps = maps
                    .into_iter()
                    .flat_map(|m| {
                        perms.iter().map(move |p| {
                            let mut m = m.clone();
                            m.insert((*s).clone(), p.clone());
                            m
                        })
                    })
                    .collect();
            }
            return Ok((maps, true));
        }
        let mut seen = BTreeSet::new();
        let mut maps = Vec::new();
        for _ in 0..limit.max(1) {
            let mut m = base.clone();
            for (s, vs) in &varying {
                let mut p = vs.clone();
                p.shuffle(rng);
                m.insert((*s).clone(), p);
            }
            if seen.insert(m.clone()) {
                maps.push(m);
            }
        }
        Ok((maps, false))
    }

    /// The end-of-instant transition with the orderings in `vmap`; signals
    /// missing from `vmap` use the natural order of their values.
    pub fn end_of_instant(
        &self,
        st: &State,
        vmap: &ValueMap,
    ) -> Result<(EmitMap, State), SemError> {
        if !self.is_suspended(st) {
            return Err(SemError::NotSuspended);
        }
        let e = self.emit_map(st)?;
        let mut lists: BTreeMap<Name, Value> = BTreeMap::new();
        for (s, vs) in &e {
            let order: Vec<Value> = match vmap.get(s) {
                Some(o) => {
                    let as_set: BTreeSet<Value> = o.iter().cloned().collect();
                    if as_set != *vs || as_set.len() != o.len() {
                        return Err(SemError::BadValueMap(s.clone()));
                    }
                    o.clone()
                }
                None => vs.iter().cloned().collect(),
            };
            lists.insert(s.clone(), Value::list(order));
        }
        let mut atoms = Vec::new();
        for a in &st.atoms {
            if let Proc::Present { cont, .. } = a {
                atoms.push(Proc::Call(
                    cont.thread.clone(),
                    cont.args.iter().map(|r| r.subst_deref(&lists)).collect(),
                ));
            }
        }
        let mut next = State {
            binders: st
                .binders
                .iter()
                .map(|(n, t)| (n.clone(), t.shift()))
                .collect(),
            atoms,
            free: st
                .free
                .iter()
                .map(|(n, t)| (n.clone(), t.shift()))
                .collect(),
            fresh: st.fresh.clone(),
            extruded: st.extruded,
        };
        gc_binders(&mut next);
        Ok((e, next))
    }

    /// Output and input actions of an open state. Inputs range over
    /// `universe`, a list of values per free signal.
    pub fn observable_actions(
        &self,
        st: &State,
        universe: &BTreeMap<Name, Vec<Value>>,
    ) -> Result<Vec<(Action, State)>, SemError> {
        let mut out = Vec::new();
        let bound: BTreeSet<&Name> = st.binders.iter().map(|(n, _)| n).collect();
        let mut seen = BTreeSet::new();
        for (i, a) in st.atoms.iter().enumerate() {
            let Proc::Emit { sig, val, .. } = a else {
                continue;
            };
            if bound.contains(sig) {
                continue;
            }
            let v = self.eval(val)?;
            if !seen.insert((sig.clone(), v.clone())) {
                continue;
            }
            let mut names = Vec::new();
            value_names_ordered(&v, &mut names);
            let exported: Vec<Name> = names.into_iter().filter(|n| bound.contains(n)).collect();
            let mut next = st.clone();
            if self.sig_kind(st, sig) == Some(5) {
                if let Proc::Emit { marked, .. } = &mut next.atoms[i] {
                    *marked = true;
                }
            }
            let mut ren = BTreeMap::new();
            let mut extruded = Vec::new();
            for n in &exported {
                let fresh_name = crate::syntax::name(&format!("^{}", next.extruded));
                next.extruded += 1;
                let pos = next
                    .binders
                    .iter()
                    .position(|(b, _)| b == n)
                    .expect("exported name is bound");
                let (_, ty) = next.binders.remove(pos);
                next.free.insert(fresh_name.clone(), ty);
                ren.insert(n.clone(), fresh_name.clone());
                extruded.push(fresh_name);
            }
            if !ren.is_empty() {
                let mut fresh = next.fresh.clone();
                next.atoms = next
                    .atoms
                    .iter()
                    .map(|p| p.rename(&ren, &mut fresh))
                    .collect();
                next.fresh = fresh;
            }
            out.push((
                Action::Out {
                    sig: sig.clone(),
                    value: v.rename(&ren),
                    extruded,
                },
                next,
            ));
        }
        for (s, vals) in universe {
            if bound.contains(s) || !st.free.contains_key(s) {
                continue;
            }
            for v in vals {
                let mut next = st.clone();
                next.atoms.push(Proc::Emit {
                    sig: s.clone(),
                    val: Expr::from(v),
                    marked: false,
                });
                out.push((
                    Action::In {
                        sig: s.clone(),
                        value: v.clone(),
                    },
                    next,
                ));
            }
        }
        Ok(out)
    }

    // ---- canonical forms ----

    /// Rewrites every value in a set-typed position into its normal form.
    pub fn canonical_values(&self, st: &State) -> State {
        let mut env: Ctx = st.free.clone();
        for (n, t) in &st.binders {
            env.insert(n.clone(), t.clone());
        }
        let mut next = st.clone();
        next.atoms = st.atoms.iter().map(|a| self.canon_proc(a, &env)).collect();
        next
    }

    fn canon_expr(&self, e: &Expr, ty: &Type) -> Expr {
        if let Some(v) = e.as_value() {
            return Expr::from(canonicalize(&v, ty, &self.module.datas));
        }
        match e {
            Expr::Con(c, args) => match ctor_fields(&self.module.datas, ty, c) {
                Some(fs) if fs.len() == args.len() => Expr::Con(
                    c.clone(),
                    args.iter()
                        .zip(&fs)
                        .map(|(a, t)| self.canon_expr(a, t))
                        .collect(),
                ),
                _ => e.clone(),
            },
            Expr::Fun(f, args) => match self.module.funs.get(f) {
                Some(d) => Expr::Fun(
                    f.clone(),
                    args.iter()
                        .zip(&d.params)
                        .map(|(a, t)| self.canon_expr(a, t))
                        .collect(),
                ),
                None => e.clone(),
            },
            _ => e.clone(),
        }
    }

    fn canon_args(&self, thread: &Name, args: &[Expr]) -> Vec<Expr> {
        match self.module.thread_params(thread) {
            Some(ps) if ps.len() == args.len() => args
                .iter()
                .zip(&ps)
                .map(|(a, t)| self.canon_expr(a, t))
                .collect(),
            _ => args.to_vec(),
        }
    }

    fn canon_proc(&self, p: &Proc, env: &Ctx) -> Proc {
        match p {
            Proc::Nil => Proc::Nil,
            Proc::Call(a, args) => Proc::Call(a.clone(), self.canon_args(a, args)),
            Proc::Emit { sig, val, marked } => {
                let val = match env.get(sig).and_then(Type::payload) {
                    Some(t) => self.canon_expr(val, t),
                    None => val.clone(),
                };
                Proc::Emit {
                    sig: sig.clone(),
                    val,
                    marked: *marked,
                }
            }
            Proc::Present {
                sig,
                var,
                body,
                cont,
            } => {
                let mut inner = env.clone();
                match env.get(sig).and_then(Type::payload) {
                    Some(t) => {
                        inner.insert(var.clone(), t.clone());
                    }
                    None => {
                        inner.remove(var);
                    }
                }
                Proc::Present {
                    sig: sig.clone(),
                    var: var.clone(),
                    body: Box::new(self.canon_proc(body, &inner)),
                    cont: Cont {
                        thread: cont.thread.clone(),
                        args: self.canon_args(&cont.thread, &cont.args),
                    },
                }
            }
            Proc::IfSig {
                left,
                right,
                then,
                els,
            } => Proc::IfSig {
                left: left.clone(),
                right: right.clone(),
                then: Box::new(self.canon_proc(then, env)),
                els: Box::new(self.canon_proc(els, env)),
            },
            Proc::Match {
                scrut,
                pat,
                ty,
                then,
                els,
            } => {
                let mut inner = env.clone();
                let fields = ty
                    .as_ref()
                    .and_then(|t| ctor_fields(&self.module.datas, t, &pat.ctor));
                for (i, x) in pat.vars.iter().enumerate() {
                    match fields.as_ref().and_then(|f| f.get(i)) {
                        Some(t) => inner.insert(x.clone(), t.clone()),
                        None => inner.remove(x),
                    };
                }
                Proc::Match {
                    scrut: match ty {
                        Some(t) => self.canon_expr(scrut, t),
                        None => scrut.clone(),
                    },
                    pat: pat.clone(),
                    ty: ty.clone(),
                    then: Box::new(self.canon_proc(then, &inner)),
                    els: Box::new(self.canon_proc(els, env)),
                }
            }
            Proc::New { name, ty, body } => {
                let mut inner = env.clone();
                inner.insert(name.clone(), ty.clone());
                Proc::New {
                    name: name.clone(),
                    ty: ty.clone(),
                    body: Box::new(self.canon_proc(body, &inner)),
                }
            }
            Proc::Par(ps) => Proc::Par(ps.iter().map(|q| self.canon_proc(q, env)).collect()),
        }
    }

    /// Key identifying a state up to set equivalence of values, structural
    /// congruence, alpha-renaming and garbage restrictions.
    pub fn canonical_key(&self, st: &State) -> String {
        let mut st = self.canonical_values(st);
        gc_binders(&mut st);
        canonical_print(&st)
    }

    /// Same as [`canonical_key`](Self::canonical_key) but without quotienting
    /// set-typed values; used to tell list from set behaviour apart.
    pub fn structural_key(&self, st: &State) -> String {
        let mut st = st.clone();
        gc_binders(&mut st);
        canonical_print(&st)
    }

    // ---- driver ----

    /// Runs the entry program for `instants` instants.
    pub fn run(&self, instants: usize, policy: Policy, emit_states: bool) -> Trace {
        let mut trace = Trace::default();
        let mut st = match self.initial() {
            Ok(s) => s,
            Err(e) => {
                trace.error = Some(e);
                return trace;
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(match policy {
            Policy::Seeded(s) => s,
            Policy::Leftmost => 0,
        });
        let record = |instant: usize,
                      kind: &'static str,
                      redex: Option<String>,
                      e: Option<&EmitMap>,
                      v: Option<&ValueMap>,
                      st: &State| {
            let key = self.canonical_key(st);
            TraceRecord {
                instant,
                kind,
                redex,
                e: e.map(emit_map_strings),
                v: v.map(value_map_strings),
                hash: key_hash(&key),
                state: emit_states.then(|| state_text(st)),
            }
        };
        for instant in 0..instants {
            let mut steps = 0usize;
            loop {
                let rs = self.redexes(&st);
                if rs.is_empty() {
                    break;
                }
                steps += 1;
                if steps > self.step_budget {
                    trace.error = Some(SemError::Divergence(self.step_budget));
                    trace.final_state = Some(state_text(&st));
                    return trace;
                }
                let r = match policy {
                    Policy::Leftmost => rs[0].clone(),
                    Policy::Seeded(_) => rs[rng.gen_range(0..rs.len())].clone(),
                };
                match self.fire(&st, &r) {
                    Ok(next) => {
                        st = next;
                        trace.records.push(record(
                            instant,
                            "tau",
                            Some(r.to_string()),
                            None,
                            None,
                            &st,
                        ));
                    }
                    Err(e) => {
                        trace.error = Some(e);
                        trace.final_state = Some(state_text(&st));
                        return trace;
                    }
                }
            }
            let result = self.emit_map(&st).and_then(|e| {
                let mut v: ValueMap = e
                    .iter()
                    .map(|(s, vs)| (s.clone(), vs.iter().cloned().collect()))
                    .collect();
                if let Policy::Seeded(_) = policy {
                    for vs in v.values_mut() {
                        vs.shuffle(&mut rng);
                    }
                }
                self.end_of_instant(&st, &v).map(|(e, next)| (e, v, next))
            });
            match result {
                Ok((e, v, next)) => {
                    st = next;
                    trace
                        .records
                        .push(record(instant, "eoi", None, Some(&e), Some(&v), &st));
                    trace.emitted.push(e);
                }
                Err(e) => {
                    trace.error = Some(e);
                    break;
                }
            }
        }
        trace.final_state = Some(state_text(&st));
        trace
    }
}

fn match_fun_pat(p: &FunPat, v: &Value, th: &mut BTreeMap<Name, Value>) -> bool {
    match p {
        FunPat::Wild => true,
        FunPat::Var(x) => {
            th.insert(x.clone(), v.clone());
            true
        }
        FunPat::Con(c, ps) => match v {
            Value::Con(d, vs) if c == d && ps.len() == vs.len() => {
                ps.iter().zip(vs).all(|(q, w)| match_fun_pat(q, w, th))
            }
            _ => false,
        },
    }
}

fn collect_binders(p: &Proc, out: &mut BTreeSet<Name>) {
    match p {
        Proc::New { name, body, .. } => {
            out.insert(name.clone());
            collect_binders(body, out);
        }
        Proc::Present { var, body, .. } => {
            out.insert(var.clone());
            collect_binders(body, out);
        }
        Proc::Match { pat, then, els, .. } => {
            out.extend(pat.vars.iter().cloned());
            collect_binders(then, out);
            collect_binders(els, out);
        }
        Proc::IfSig { then, els, .. } => {
            collect_binders(then, out);
            collect_binders(els, out);
        }
        Proc::Par(ps) => ps.iter().for_each(|q| collect_binders(q, out)),
        Proc::Nil | Proc::Call(..) | Proc::Emit { .. } => {}
    }
}

/// Flattens `p` into atoms, lifting restrictions with fresh names.
fn lift(p: Proc, binders: &mut Vec<(Name, Type)>, atoms: &mut Vec<Proc>, fresh: &mut Fresh) {
    match p {
        Proc::Nil => {}
        Proc::Par(ps) => ps.into_iter().for_each(|q| lift(q, binders, atoms, fresh)),
        Proc::New { name, ty, body } => {
            let n = fresh.name(&name);
            let body = body.rename(&BTreeMap::from([(name, n.clone())]), fresh);
            binders.push((n, ty));
            lift(body, binders, atoms, fresh);
        }
        other => atoms.push(other),
    }
}

fn value_names_ordered(v: &Value, out: &mut Vec<Name>) {
    match v {
        Value::Sig(s) => {
            if !out.contains(s) {
                out.push(s.clone());
            }
        }
        Value::Con(_, args) => args.iter().for_each(|a| value_names_ordered(a, out)),
    }
}

/// Drops restrictions whose name no atom mentions.
pub fn gc_binders(st: &mut State) {
    let mut used = BTreeSet::new();
    for a in &st.atoms {
        used.extend(a.free_vars());
    }
    st.binders.retain(|(n, _)| used.contains(n));
}

/// Human-readable state: `new s: T in A | B`.
pub fn state_text(st: &State) -> String {
    let body = if st.atoms.is_empty() {
        "0".to_string()
    } else {
        st.atoms
            .iter()
            .map(atom_text)
            .collect::<Vec<_>>()
            .join(" | ")
    };
    if st.binders.is_empty() {
        body
    } else {
        let bs: Vec<String> = st
            .binders
            .iter()
            .map(|(n, t)| format!("{n}: {t}"))
            .collect();
        format!("new {} in {body}", bs.join(", "))
    }
}

fn atom_text(p: &Proc) -> String {
    match p {
        Proc::New { .. } | Proc::Par(_) => format!("({})", pretty(p)),
        _ => pretty(p),
    }
}

/// Renames every nested binder of `p` after its binding depth, so that
/// alpha-equivalent atoms print identically.
pub fn debruijn(p: &Proc) -> Proc {
    fn go(p: &Proc, depth: usize, map: &BTreeMap<Name, Name>) -> Proc {
        let r = |x: &Name| map.get(x).cloned().unwrap_or_else(|| x.clone());
        let re = |e: &Expr| e.rename(map);
        let bind = |xs: &[Name], depth: usize| {
            let mut m = map.clone();
            let mut names = Vec::new();
            for (i, x) in xs.iter().enumerate() {
                let n = crate::syntax::name(&format!("%{}", depth + i));
                m.insert(x.clone(), n.clone());
                names.push(n);
            }
            (m, names)
        };
        match p {
            Proc::Nil => Proc::Nil,
            Proc::Call(a, args) => Proc::Call(a.clone(), args.iter().map(re).collect()),
            Proc::Emit { sig, val, marked } => Proc::Emit {
                sig: r(sig),
                val: re(val),
                marked: *marked,
            },
            Proc::Present {
                sig,
                var,
                body,
                cont,
            } => {
                let (m, names) = bind(std::slice::from_ref(var), depth);
                Proc::Present {
                    sig: r(sig),
                    var: names[0].clone(),
                    body: Box::new(go(body, depth + 1, &m)),
                    cont: Cont {
                        thread: cont.thread.clone(),
                        args: cont.args.iter().map(re).collect(),
                    },
                }
            }
            Proc::IfSig {
                left,
                right,
                then,
                els,
            } => Proc::IfSig {
                left: r(left),
                right: r(right),
                then: Box::new(go(then, depth, map)),
                els: Box::new(go(els, depth, map)),
            },
            Proc::Match {
                scrut,
                pat,
                ty,
                then,
                els,
            } => {
                let (m, names) = bind(&pat.vars, depth);
                Proc::Match {
                    scrut: re(scrut),
                    pat: Pattern {
                        ctor: pat.ctor.clone(),
                        vars: names,
                    },
                    ty: ty.clone(),
                    then: Box::new(go(then, depth + pat.vars.len(), &m)),
                    els: Box::new(go(els, depth, map)),
                }
            }
            Proc::New { name, ty, body } => {
                let (m, names) = bind(std::slice::from_ref(name), depth);
                Proc::New {
                    name: names[0].clone(),
                    ty: ty.clone(),
                    body: Box::new(go(body, depth + 1, &m)),
                }
            }
            Proc::Par(ps) => Proc::Par(ps.iter().map(|q| go(q, depth, map)).collect()),
        }
    }
    go(p, 0, &BTreeMap::new())
}

fn hash_str(s: &str) -> u64 {
    let mut h = DefaultHasher::new();
    s.hash(&mut h);
    h.finish()
}

/// Maximum number of tie-breaking orders tried when naming binders.
const TIE_ORDERS: usize = 720;

/// Prints a state with binders renamed `#0, #1, ...` in an order determined
/// by colour refinement over the atoms, and atoms sorted.
fn canonical_print(st: &State) -> String {
    let atoms: Vec<Proc> = st.atoms.iter().map(debruijn).collect();
    let n = st.binders.len();
    let names: Vec<Name> = st.binders.iter().map(|(b, _)| b.clone()).collect();
    let mut mentions: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (ai, a) in atoms.iter().enumerate() {
        let fv = a.free_vars();
        for (bi, b) in names.iter().enumerate() {
            if fv.contains(b) {
                mentions[bi].push(ai);
            }
        }
    }
    let mut colour: Vec<u64> = st
        .binders
        .iter()
        .map(|(_, t)| hash_str(&t.to_string()))
        .collect();
    let mut classes = colour.iter().collect::<BTreeSet<_>>().len();
    for _ in 0..=n {
        let mut next = Vec::with_capacity(n);
        for bi in 0..n {
            let mut sigs: Vec<String> = mentions[bi]
                .iter()
                .map(|&ai| {
                    let map: BTreeMap<Name, Name> = names
                        .iter()
                        .enumerate()
                        .map(|(ci, c)| {
                            let tag = if ci == bi {
                                "@".to_string()
                            } else {
                                format!("${:x}", colour[ci])
                            };
                            (c.clone(), crate::syntax::name(&tag))
                        })
                        .collect();
                    print_atom_renamed(&atoms[ai], &map)
                })
                .collect();
            sigs.sort();
            next.push(hash_str(&format!("{:x}|{}", colour[bi], sigs.join("||"))));
        }
        let c = next.iter().collect::<BTreeSet<_>>().len();
        colour = next;
        if c == classes {
            break;
        }
        classes = c;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| colour[i]);
    // Groups of binders that refinement could not separate.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match groups.last_mut() {
            Some(g) if colour[g[0]] == colour[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    let combos = groups.iter().try_fold(1usize, |acc, g| {
        (1..=g.len()).try_fold(acc, |a, k| a.checked_mul(k).filter(|x| *x <= TIE_ORDERS))
    });
    let render = |order: &[usize]| {
        let map: BTreeMap<Name, Name> = order
            .iter()
            .enumerate()
            .map(|(pos, &i)| (names[i].clone(), crate::syntax::name(&format!("#{pos}"))))
            .collect();
        let mut printed: Vec<String> = atoms.iter().map(|a| print_atom_renamed(a, &map)).collect();
        printed.sort();
        let bs: Vec<String> = order
            .iter()
            .enumerate()
            .map(|(pos, &i)| format!("#{pos}: {}", st.binders[i].1))
            .collect();
        let free: Vec<String> = st
            .free
            .keys()
            .filter(|k| k.starts_with('^'))
            .map(|k| k.to_string())
            .collect();
        format!(
            "[{}] new {} in {}",
            free.join(","),
            bs.join(", "),
            printed.join(" | ")
        )
    };
    match combos {
        Some(c) if c > 1 => {
            let mut orders: Vec<Vec<usize>> = vec![Vec::new()];
            for g in &groups {
                let perms = permutations(g);
                orders = orders
                    .into_iter()
                    .flat_map(|o| {
                        perms.iter().map(move |p| {
                            let mut o = o.clone();
                            o.extend(p.iter().copied());
                            o
                        })
                    })
                    .collect();
            }
            orders
                .iter()
                .map(|o| render(o))
                .min()
                .expect("at least one order")
        }
        _ => render(&order),
    }
}

fn print_atom_renamed(p: &Proc, map: &BTreeMap<Name, Name>) -> String {
    // Nested binders are named `%k`, which never clash with state binders.
    let mut fresh = Fresh::default();
    atom_text(&p.rename(map, &mut fresh))
}

/// Groups states by canonical key, keeping the first representative.
pub fn dedup_states(m: &Machine<'_>, states: Vec<State>) -> Vec<(String, State)> {
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut out = Vec::new();
    for s in states {
        let k = m.canonical_key(&s);
        if seen.insert(k.clone(), ()).is_none() {
            out.push((k, s));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_module;
    use crate::typecheck::elaborate;

    fn module(src: &str) -> Module {
        elaborate(&parse_module(src).unwrap_or_else(|e| panic!("{e}")))
    }

    #[test]
    fn emission_persists_after_synch() {
        let m = module("type V = v; thread P(x: V) = 0; main(s: Sig<k2:(1,w,w)w>(V)) = emit s v | present s(x) { P(x) } else 0;");
        let mach = Machine::new(&m);
        let st = mach.initial().unwrap();
        let succ = mach.step_internal(&st).unwrap();
        assert_eq!(succ.len(), 1);
        let next = &succ[0].1;
        assert!(next.atoms.iter().any(|a| matches!(a, Proc::Emit { .. })));
        assert!(next.atoms.iter().any(|a| matches!(a, Proc::Call(..))));
    }

    #[test]
    fn signal_match_steps() {
        let m = module("thread A() = 0; thread B() = 0; main(s: Sig<k1:(w,0,w)w>(Unit)) = match s = s { A() } else { B() };");
        let mach = Machine::new(&m);
        let st = mach.initial().unwrap();
        let succ = mach.step_internal(&st).unwrap();
        assert_eq!(
            succ[0].1.atoms,
            vec![Proc::Call(crate::syntax::name("A"), vec![])]
        );
    }

    #[test]
    fn empty_deref_is_nil() {
        let m = module("type V = v; thread A(l: List<w>(V)) = 0; main(s: Sig<k2:(1,w,w)w>(V)) = present s(x) { 0 } else A(!s);");
        let mach = Machine::new(&m);
        let st = mach.initial().unwrap();
        let (e, next) = mach.end_of_instant(&st, &ValueMap::new()).unwrap();
        assert!(e.is_empty());
        assert_eq!(
            next.atoms,
            vec![Proc::Call(
                crate::syntax::name("A"),
                vec![Expr::from(Value::nil())]
            )]
        );
    }

    #[test]
    fn kind5_synch_marks_emitter() {
        let m = module(
            "type V = v; main(s: Sig<k5:(1,1,0)w>(V)) = emit s v | present s(x) { 0 } else 0;",
        );
        let mach = Machine::new(&m);
        let st = mach.initial().unwrap();
        let succ = mach.step_internal(&st).unwrap();
        assert!(succ[0]
            .1
            .atoms
            .iter()
            .any(|a| matches!(a, Proc::Emit { marked: true, .. })));
    }

    #[test]
    fn keys_ignore_binder_names_and_order() {
        let m = module("type V = v; thread A(x: Sig<k1:(w,0,w)w>(V), y: Sig<k1:(w,0,w)w>(V)) = 0;");
        let mach = Machine::new(&m);
        let t = "Sig<k1:(w,0,w)w>(V)";
        let p1 = crate::parser::parse_proc(
            &m,
            &[],
            &format!("new a: {t}, b: {t} in A(a, b) | emit a v"),
        )
        .unwrap();
        let p2 = crate::parser::parse_proc(
            &m,
            &[],
            &format!("new c: {t}, d: {t} in emit d v | A(d, c)"),
        )
        .unwrap();
        let k1 = mach.canonical_key(&mach.state_of(Ctx::new(), &p1));
        let k2 = mach.canonical_key(&mach.state_of(Ctx::new(), &p2));
        assert_eq!(k1, k2);
    }

    #[test]
    fn permutation_counts() {
        assert_eq!(permutations(&[1, 2, 3]).len(), 6);
        assert_eq!(permutations::<u8>(&[]).len(), 1);
    }
}
