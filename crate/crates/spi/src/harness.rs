//! Executable metatheory over bounded state spaces: typed transitions and
//! residual contexts, subject reduction, confluence of internal steps,
//! determinacy at the end of an instant and over whole runs, bounded weak
//! bisimulation and randomized checks of the permutation-invariance
//! assumptions on set-typed parameters.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::parser::pretty_value;
use crate::semantics::{
    state_text, value_map_strings, Action, EmitMap, Machine, Policy, SemError, State, ValueMap,
};
use crate::syntax::{name, Cont, Expr, Module, Name, Proc, Value};
use crate::typecheck::{check_module, check_proc, demand};
use crate::types::{
    canonicalize, ctor_fields, ctx_add, ctx_display, ctx_shift, ctx_sub, delta, emit_point,
    value_equiv, Ctx, Datas, Type,
};
use crate::usage::{Kind, Mult, Point, Usage};

/// Bounds shared by the checks.
#[derive(Clone, Debug)]
pub struct Options {
    /// Transitions along a path for subject reduction.
    pub depth: usize,
    /// Instants explored by the closed-system checks.
    pub instants: usize,
    /// Maximum number of distinct states per exploration.
    pub budget: usize,
    pub seed: u64,
    /// Inputs from the environment per instant.
    pub max_inputs: usize,
    /// Orderings tried per end of instant before sampling.
    pub perm_limit: usize,
    /// Random walks complementing the bounded breadth-first search.
    pub walks: usize,
    /// Random trials per permutation-invariance obligation.
    pub trials: usize,
    /// Nesting depth of values offered as inputs.
    pub universe_depth: usize,
    /// Values per signal offered as inputs.
    pub universe_cap: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            depth: 200,
            instants: 2,
            budget: 20_000,
            seed: 0,
            max_inputs: 1,
            perm_limit: 120,
            walks: 8,
            trials: 100,
            universe_depth: 2,
            universe_cap: 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

/// Outcome of one check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub check: &'static str,
    pub status: Status,
    pub seed: u64,
    /// False when a budget cut the exploration short or sampling was used.
    pub exhaustive: bool,
    pub metrics: BTreeMap<String, u64>,
    pub details: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Vec<String>>,
}

impl CheckReport {
    fn new(check: &'static str, seed: u64) -> Self {
        CheckReport {
            check,
            status: Status::Pass,
            seed,
            exhaustive: true,
            metrics: BTreeMap::new(),
            details: Vec::new(),
            counterexample: None,
        }
    }

    fn metric(&mut self, k: &str, v: usize) {
        self.metrics.insert(k.to_string(), v as u64);
    }

    fn fail(&mut self, msg: String, trace: Option<Vec<String>>) {
        self.status = Status::Fail;
        self.details.push(msg);
        if self.counterexample.is_none() {
            self.counterexample = trace;
        }
    }
}

// ---- typed actions ----

/// Actions of typed transitions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Act {
    Tau,
    /// End of instant.
    N,
    /// Output, with the types of the extruded names.
    Out {
        sig: Name,
        value: Value,
        extruded: Vec<(Name, Type)>,
    },
    In {
        sig: Name,
        value: Value,
    },
    /// Auxiliary reception by a `present`.
    Recv {
        sig: Name,
        value: Value,
    },
    /// Auxiliary end of instant: emitted values and assumed orderings.
    Eoi {
        e: EmitMap,
        v: ValueMap,
    },
}

impl std::fmt::Display for Act {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Act::Tau => write!(f, "tau"),
            Act::N => write!(f, "N"),
            Act::Out {
                sig,
                value,
                extruded,
            } => {
                let a = Action::Out {
                    sig: sig.clone(),
                    value: value.clone(),
                    extruded: extruded.iter().map(|(n, _)| n.clone()).collect(),
                };
                write!(f, "{a}")
            }
            Act::In { sig, value } => write!(f, "in {sig} {}", pretty_value(value)),
            Act::Recv { sig, value } => write!(f, "{sig}?{}", pretty_value(value)),
            Act::Eoi { e, v } => write!(
                f,
                "eoi E={:?} V={:?}",
                crate::semantics::emit_map_strings(e),
                value_map_strings(v)
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ResidualError {
    #[error("`{0}` has no signal type in the context")]
    NotASignal(Name),
    #[error("residual context undefined: {0}")]
    Undefined(String),
}

fn sig_parts(g: &Ctx, s: &Name) -> Result<(Usage, Type), ResidualError> {
    match g.get(s) {
        Some(Type::Sig { usage, payload }) => Ok((*usage, (**payload).clone())),
        _ => Err(ResidualError::NotASignal(s.clone())),
    }
}

fn undefined(e: impl std::fmt::Display) -> ResidualError {
    ResidualError::Undefined(e.to_string())
}

/// Values emitted per signal during one instant.
type Emitted = BTreeMap<Name, BTreeSet<Value>>;

/// Least usage of `kind` allowing an output within the instant.
pub fn output_usage(kind: Kind) -> Usage {
    Usage::once(kind, emit_point(kind))
}

/// Usage left to the program after the environment receives on a kind-5
/// signal; neutral for the other kinds.
pub fn received_usage(kind: Kind) -> Usage {
    if kind.index() == 5 {
        Usage::once(kind, Point(Mult::Zero, Mult::One, Mult::Zero))
    } else {
        Usage::neutral(kind)
    }
}

/// Least program allowing `act`.
pub fn minimal_program(act: &Act) -> Proc {
    match act {
        Act::Tau | Act::N => Proc::Nil,
        Act::In { sig, value } | Act::Recv { sig, value } => Proc::Emit {
            sig: sig.clone(),
            val: Expr::from(value),
            marked: false,
        },
        Act::Out { sig, .. } => Proc::Present {
            sig: sig.clone(),
            var: name("x"),
            body: Box::new(Proc::Nil),
            cont: Cont::stop(),
        },
        Act::Eoi { e, v } => {
            let mut ps = Vec::new();
            for (s, vs) in v {
                for x in vs {
                    if !e.get(s).is_some_and(|es| es.contains(x)) {
                        ps.push(Proc::Emit {
                            sig: s.clone(),
                            val: Expr::from(x),
                            marked: false,
                        });
                    }
                }
            }
            Proc::par(ps)
        }
    }
}

/// Whether some context typing the minimal program of `act` can be added
/// to `g`.
pub fn compatible(m: &Module, g: &Ctx, act: &Act) -> bool {
    let p = minimal_program(act);
    match demand(m, g, &p) {
        Ok(d) => ctx_add(g, &d).is_ok(),
        Err(_) => false,
    }
}

/// Context left after a typed transition labelled `act`.
pub fn residual(m: &Module, g: &Ctx, act: &Act) -> Result<Ctx, ResidualError> {
    let datas = &m.datas;
    match act {
        Act::Tau => Ok(g.clone()),
        Act::N => Ok(ctx_shift(g)),
        Act::Out {
            sig,
            value,
            extruded,
        } => {
            let (u, payload) = sig_parts(g, sig)?;
            let mut g1 = g.clone();
            for (t, ty) in extruded {
                g1.insert(t.clone(), ty.clone());
            }
            let d = delta(value, &payload, datas).map_err(undefined)?;
            let g2 = ctx_sub(&g1, &d).map_err(undefined)?;
            let r = Ctx::from([(sig.clone(), Type::sig(received_usage(u.kind()), payload))]);
            ctx_add(&g2, &r).map_err(undefined)
        }
        Act::In { sig, value } => {
            let (u, payload) = sig_parts(g, sig)?;
            let d = delta(value, &payload, datas).map_err(undefined)?;
            let o = Ctx::from([(sig.clone(), Type::sig(output_usage(u.kind()), payload))]);
            let g1 = ctx_add(g, &d).map_err(undefined)?;
            ctx_add(&g1, &o).map_err(undefined)
        }
        Act::Recv { sig, value } => {
            let (u, payload) = sig_parts(g, sig)?;
            let r = Ctx::from([(
                sig.clone(),
                Type::sig(received_usage(u.kind()), payload.clone()),
            )]);
            let g1 = ctx_sub(g, &r).map_err(undefined)?;
            let d = delta(value, &payload, datas).map_err(undefined)?;
            ctx_add(&g1, &d).map_err(undefined)
        }
        Act::Eoi { e, v } => {
            let mut export = Ctx::new();
            for (s, vs) in e {
                let Ok((u, payload)) = sig_parts(g, s) else {
                    continue;
                };
                if !payload.is_affine() || u.now().2 == Mult::One {
                    continue;
                }
                for x in vs {
                    export = ctx_add(&export, &delta(x, &payload, datas).map_err(undefined)?)
                        .map_err(undefined)?;
                }
            }
            let mut import = Ctx::new();
            for (s, vs) in v {
                let Ok((u, payload)) = sig_parts(g, s) else {
                    continue;
                };
                if u.now().2 == Mult::Zero {
                    continue;
                }
                for x in vs
                    .iter()
                    .filter(|x| !e.get(s).is_some_and(|es| es.contains(*x)))
                {
                    import = ctx_add(&import, &delta(x, &payload, datas).map_err(undefined)?)
                        .map_err(undefined)?;
                }
            }
            let g1 = ctx_sub(&ctx_shift(g), &export).map_err(undefined)?;
            ctx_add(&g1, &import).map_err(undefined)
        }
    }
}

/// The program denoted by a state: its restrictions around its atoms.
pub fn state_proc(st: &State) -> Proc {
    let mut p = Proc::par(st.atoms.clone());
    for (n, t) in st.binders.iter().rev() {
        p = Proc::New {
            name: n.clone(),
            ty: t.clone(),
            body: Box::new(p),
        };
    }
    p
}

// ---- value universes ----

/// Values of `ty` up to nesting `depth`, at most `cap` of them; signal
/// leaves come from `pool`.
pub fn enumerate_values(
    ty: &Type,
    depth: usize,
    datas: &Datas,
    cap: usize,
    pool: &dyn Fn(&Type) -> Vec<Name>,
) -> Vec<Value> {
    let mut out = Vec::new();
    match ty {
        Type::Sig { .. } => out.extend(pool(ty).into_iter().map(Value::Sig)),
        Type::Param(_) => {}
        Type::List { elem, .. } | Type::Set { elem, .. } => {
            out.push(Value::nil());
            if depth > 0 {
                let elems = enumerate_values(elem, depth - 1, datas, cap, pool);
                for x in &elems {
                    out.push(Value::list([x.clone()]));
                }
                if depth > 1 {
                    for (i, x) in elems.iter().enumerate() {
                        for y in &elems[i + 1..] {
                            out.push(Value::list([x.clone(), y.clone()]));
                        }
                    }
                }
            }
        }
        Type::Data { name: dn, .. } => {
            let Some(decl) = datas.get(dn) else {
                return out;
            };
            for c in &decl.ctors {
                let Some(fields) = ctor_fields(datas, ty, &c.name) else {
                    continue;
                };
                if fields.is_empty() {
                    out.push(Value::Con(c.name.clone(), vec![]));
                    continue;
                }
                if depth == 0 {
                    continue;
                }
                let mut tuples: Vec<Vec<Value>> = vec![vec![]];
                for f in &fields {
                    let vs = enumerate_values(f, depth - 1, datas, cap, pool);
                    tuples = tuples
                        .into_iter()
                        .flat_map(|t| {
                            vs.iter().map(move |v| {
                                let mut t = t.clone();
                                t.push(v.clone());
                                t
                            })
                        })
                        .take(cap)
                        .collect();
                }
                out.extend(
                    tuples
                        .into_iter()
                        .map(|args| Value::Con(c.name.clone(), args)),
                );
            }
        }
    }
    out.truncate(cap);
    out
}

/// Inputs offered on each signal of `g`: small values of its payload type
/// whose signals are names of `g` of the same kind and payload.
pub fn default_universe(m: &Module, g: &Ctx, opts: &Options) -> BTreeMap<Name, Vec<Value>> {
    let pool = |ty: &Type| -> Vec<Name> {
        let Type::Sig { usage, payload } = ty else {
            return vec![];
        };
        g.iter()
            .filter(|(_, t)| matches!(t, Type::Sig { usage: u2, payload: p2 } if u2.kind() == usage.kind() && p2 == payload))
            .map(|(n, _)| n.clone())
            .collect()
    };
    g.iter()
        .filter_map(|(s, t)| {
            let p = t.payload()?;
            Some((
                s.clone(),
                enumerate_values(p, opts.universe_depth, &m.datas, opts.universe_cap, &pool),
            ))
        })
        .collect()
}

// ---- typed transition systems ----

/// A state together with its typing context (absent for untyped runs) and
/// the number of inputs received this instant.
#[derive(Clone, Debug)]
pub struct Node {
    pub st: State,
    pub gamma: Option<Ctx>,
    pub inputs: usize,
}

impl Node {
    pub fn key(&self, mach: &Machine<'_>) -> String {
        let g = self.gamma.as_ref().map(ctx_display).unwrap_or_default();
        format!("{}||{}||{}", mach.canonical_key(&self.st), g, self.inputs)
    }
}

pub struct Transition {
    pub act: Act,
    pub target: Node,
    /// Set when the action is compatible but its residual is undefined.
    pub residual_error: Option<ResidualError>,
}

/// Every (typed, when the node carries a context) transition of `node`.
pub fn successors(
    mach: &Machine<'_>,
    node: &Node,
    universe: &BTreeMap<Name, Vec<Value>>,
    opts: &Options,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Transition>, SemError> {
    let m = mach.module;
    let mut out = Vec::new();
    let mut push = |act: Act, st: State, inputs: usize| {
        let (gamma, residual_error) = match &node.gamma {
            None => (None, None),
            Some(g) => {
                if !compatible(m, g, &act) {
                    return;
                }
                match residual(m, g, &act) {
                    Ok(r) => (Some(r), None),
                    Err(e) => (Some(g.clone()), Some(e)),
                }
            }
        };
        out.push(Transition {
            act,
            target: Node { st, gamma, inputs },
            residual_error,
        });
    };
    for (_, st) in mach.step_internal(&node.st)? {
        push(Act::Tau, st, node.inputs);
    }
    if mach.is_suspended(&node.st) {
        let (maps, _) = mach.value_maps(&node.st, opts.perm_limit, rng)?;
        for v in maps {
            let (_, st) = mach.end_of_instant(&node.st, &v)?;
            push(Act::N, st, 0);
        }
    }
    let room = node.inputs < opts.max_inputs;
    let no_inputs = BTreeMap::new();
    for (a, st) in mach.observable_actions(&node.st, if room { universe } else { &no_inputs })? {
        match a {
            Action::Out {
                sig,
                value,
                extruded,
            } => {
                let ex = extruded
                    .iter()
                    .map(|n| {
                        (
                            n.clone(),
                            st.free.get(n).cloned().expect("extruded names are typed"),
                        )
                    })
                    .collect();
                push(
                    Act::Out {
                        sig,
                        value,
                        extruded: ex,
                    },
                    st,
                    node.inputs,
                );
            }
            Action::In { sig, value } => push(Act::In { sig, value }, st, node.inputs + 1),
        }
    }
    Ok(out)
}

fn trace_of(parents: &[(Option<usize>, String)], mut i: usize) -> Vec<String> {
    let mut out = Vec::new();
    while let Some(p) = parents[i].0 {
        out.push(parents[i].1.clone());
        i = p;
    }
    out.reverse();
    out
}

/// Typed root of the entry program.
pub fn initial_node(mach: &Machine<'_>) -> Result<Node, SemError> {
    let st = mach.initial()?;
    let g = mach.module.entry_ctx();
    Ok(Node {
        st,
        gamma: Some(g),
        inputs: 0,
    })
}

/// Checks that the target of a typed transition is typable in the residual
/// context.
fn check_target(m: &Module, t: &Transition) -> Result<(), String> {
    if let Some(e) = &t.residual_error {
        return Err(format!("after {}: {e}", t.act));
    }
    let g = t.target.gamma.as_ref().expect("typed transition");
    check_proc(m, g, &state_proc(&t.target.st)).map_err(|e| {
        format!(
            "after {}: residual context [{}] does not type {}: {e}",
            t.act,
            ctx_display(g),
            crate::semantics::state_text(&t.target.st)
        )
    })
}

/// Explores typed transitions breadth-first up to `opts.depth` (bounded by
/// `opts.budget` states), then along `opts.walks` seeded random walks of
/// length `opts.depth`, asserting that each target is typable in the
/// residual context.
pub fn check_subject_reduction(m: &Module, opts: &Options) -> CheckReport {
    let mach = Machine::new(m);
    let mut rep = CheckReport::new("subject-reduction", opts.seed);
    let root = match initial_node(&mach) {
        Ok(n) => n,
        Err(e) => {
            rep.fail(format!("cannot start: {e}"), None);
            return rep;
        }
    };
    if let Err(e) = check_proc(
        m,
        root.gamma.as_ref().expect("typed"),
        &state_proc(&root.st),
    ) {
        rep.fail(format!("initial state is not typable: {e}"), Some(vec![]));
        return rep;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut parents: Vec<(Option<usize>, String)> = vec![(None, String::new())];
    let mut nodes: Vec<Node> = vec![root.clone()];
    let mut queue = VecDeque::from([(0usize, 0usize)]);
    seen.insert(root.key(&mach), ());
    let mut transitions = 0usize;
    let mut max_depth = 0usize;
    let mut universes: HashMap<String, BTreeMap<Name, Vec<Value>>> = HashMap::new();
    let mut universe_for = |g: &Ctx| -> BTreeMap<Name, Vec<Value>> {
        universes
            .entry(ctx_display(g))
            .or_insert_with(|| default_universe(m, g, opts))
            .clone()
    };
    while let Some((i, d)) = queue.pop_front() {
        max_depth = max_depth.max(d);
        if d >= opts.depth {
            continue;
        }
        let node = nodes[i].clone();
        let uni = universe_for(node.gamma.as_ref().expect("typed"));
        let succ = match successors(&mach, &node, &uni, opts, &mut rng) {
            Ok(s) => s,
            Err(e) => {
                rep.fail(format!("run error: {e}"), Some(trace_of(&parents, i)));
                break;
            }
        };
        for t in succ {
            transitions += 1;
            if let Err(msg) = check_target(m, &t) {
                let mut tr = trace_of(&parents, i);
                tr.push(t.act.to_string());
                rep.fail(msg, Some(tr));
                continue;
            }
            let k = t.target.key(&mach);
            if seen.contains_key(&k) {
                continue;
            }
            if seen.len() >= opts.budget {
                rep.exhaustive = false;
                continue;
            }
            seen.insert(k, ());
            parents.push((Some(i), t.act.to_string()));
            nodes.push(t.target);
            queue.push_back((nodes.len() - 1, d + 1));
        }
        if rep.status == Status::Fail {
            break;
        }
    }
    rep.metric("bfs_states", seen.len());
    // The whole reachable typed system was explored: every path of any
    // length stays inside it.
    rep.metric(
        "bfs_saturated",
        (rep.exhaustive && max_depth < opts.depth) as usize,
    );
    rep.metric("bfs_max_depth", max_depth);
    let mut walk_steps = 0usize;
    let mut longest = 0usize;
    for w in 0..opts.walks {
        if rep.status == Status::Fail {
            break;
        }
        let seed = opts.seed.wrapping_add(w as u64 + 1);
        let mut wr = ChaCha8Rng::seed_from_u64(seed);
        let mut node = root.clone();
        let mut path = Vec::new();
        for _ in 0..opts.depth {
            let uni = universe_for(node.gamma.as_ref().expect("typed"));
            let succ = match successors(&mach, &node, &uni, opts, &mut wr) {
                Ok(s) => s,
                Err(e) => {
                    rep.fail(
                        format!("run error on walk with seed {seed}: {e}"),
                        Some(path.clone()),
                    );
                    break;
                }
            };
            if succ.is_empty() {
                break;
            }
            let idx = wr.gen_range(0..succ.len());
            let t = succ.into_iter().nth(idx).expect("index in range");
            transitions += 1;
            walk_steps += 1;
            path.push(t.act.to_string());
            if let Err(msg) = check_target(m, &t) {
                rep.fail(format!("walk with seed {seed}: {msg}"), Some(path.clone()));
                break;
            }
            node = t.target;
        }
        longest = longest.max(path.len());
    }
    rep.metric("transitions", transitions);
    rep.metric("walk_steps", walk_steps);
    rep.metric("max_depth", max_depth.max(longest));
    rep
}

// ---- closed-system exploration ----

/// A diamond `left <- state -> right` that cannot be closed in one step.
#[derive(Clone, Debug, Serialize)]
pub struct DiamondFailure {
    pub state: String,
    pub left: String,
    pub right: String,
}

/// Two orderings at the end of an instant leading to different states.
#[derive(Clone, Debug, Serialize)]
pub struct EoiFailure {
    pub state: String,
    pub first: BTreeMap<String, Vec<String>>,
    pub second: BTreeMap<String, Vec<String>>,
    pub first_next: String,
    pub second_next: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct InstantSummary {
    pub states: usize,
    pub suspended: usize,
    /// Canonical keys of the states reached at the end of the instant.
    pub frontier: Vec<String>,
    /// Distinct emissions on free signals at the end of the instant.
    pub outputs: Vec<String>,
}

/// All schedules of a closed program over a number of instants.
#[derive(Clone, Debug, Default, Serialize)]
pub struct ClosedExploration {
    pub instants: Vec<InstantSummary>,
    pub states: usize,
    pub transitions: usize,
    pub exhaustive: bool,
    pub diamond_failures: Vec<DiamondFailure>,
    pub eoi_failures: Vec<EoiFailure>,
    /// Largest number of distinct successors of one suspended state.
    pub max_eoi_variants: usize,
    pub eoi_exhaustive: bool,
    /// Largest number of emissions on one signal in a suspended state.
    pub max_emissions: usize,
}

/// Explores every internal schedule and every end-of-instant ordering of
/// `init` for `instants` instants.
pub fn explore_closed(
    mach: &Machine<'_>,
    init: &State,
    instants: usize,
    opts: &Options,
) -> Result<ClosedExploration, SemError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = ClosedExploration {
        exhaustive: true,
        eoi_exhaustive: true,
        ..Default::default()
    };
    let mut frontier: Vec<(String, State)> = vec![(mach.canonical_key(init), init.clone())];
    for _ in 0..instants {
        let mut succ_keys: HashMap<String, Vec<String>> = HashMap::new();
        let mut texts: HashMap<String, String> = HashMap::new();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        let mut queue: VecDeque<(String, State)> = VecDeque::new();
        for (k, s) in &frontier {
            if seen.insert(k.clone()) {
                queue.push_back((k.clone(), s.clone()));
            }
        }
        let mut summary = InstantSummary::default();
        let mut next: BTreeMap<String, State> = BTreeMap::new();
        let mut outputs: BTreeSet<String> = BTreeSet::new();
        while let Some((k, st)) = queue.pop_front() {
            let succ = mach.step_internal(&st)?;
            out.transitions += succ.len();
            if succ.is_empty() {
                summary.suspended += 1;
                outputs.insert(observable_emits(mach, &st)?);
                if let Some(c) = mach.emission_counts(&st).values().max() {
                    out.max_emissions = out.max_emissions.max(*c);
                }
                let (maps, exhaustive) = mach.value_maps(&st, opts.perm_limit, &mut rng)?;
                out.eoi_exhaustive &= exhaustive;
                let mut variants: BTreeMap<String, (ValueMap, State)> = BTreeMap::new();
                for v in maps {
                    let (_, ns) = mach.end_of_instant(&st, &v)?;
                    out.transitions += 1;
                    variants.entry(mach.canonical_key(&ns)).or_insert((v, ns));
                }
                out.max_eoi_variants = out.max_eoi_variants.max(variants.len());
                if variants.len() > 1 && out.eoi_failures.len() < 4 {
                    let mut it = variants.iter();
                    let (k1, (v1, _)) = it.next().expect("two variants");
                    let (k2, (v2, _)) = it.next().expect("two variants");
                    out.eoi_failures.push(EoiFailure {
                        state: crate::semantics::state_text(&st),
                        first: value_map_strings(v1),
                        second: value_map_strings(v2),
                        first_next: k1.clone(),
                        second_next: k2.clone(),
                    });
                }
                for (vk, (_, ns)) in variants {
                    next.entry(vk).or_insert(ns);
                }
                continue;
            }
            let mut keys = Vec::new();
            for (_, ns) in succ {
                let nk = mach.canonical_key(&ns);
                if !keys.contains(&nk) {
                    keys.push(nk.clone());
                }
                if seen.contains(&nk) {
                    continue;
                }
                if out.states + seen.len() >= opts.budget {
                    out.exhaustive = false;
                    continue;
                }
                seen.insert(nk.clone());
                queue.push_back((nk, ns));
            }
            texts.insert(k.clone(), crate::semantics::state_text(&st));
            succ_keys.insert(k, keys);
        }
        // Diamonds: any two distinct successors share a state reachable in
        // at most one step from each.
        for (k, keys) in &succ_keys {
            for (i, a) in keys.iter().enumerate() {
                for b in &keys[i + 1..] {
                    let (ca, cb) = (one_step(&succ_keys, a), one_step(&succ_keys, b));
                    // Successors cut off by the budget were never visited.
                    let unexplored = !seen.contains(a) || !seen.contains(b);
                    if ca.is_disjoint(&cb) && !unexplored && out.diamond_failures.len() < 4 {
                        out.diamond_failures.push(DiamondFailure {
                            state: texts.get(k).cloned().unwrap_or_default(),
                            left: a.clone(),
                            right: b.clone(),
                        });
                    }
                }
            }
        }
        summary.states = seen.len();
        out.states += seen.len();
        summary.frontier = next.keys().cloned().collect();
        summary.outputs = outputs.into_iter().collect();
        out.instants.push(summary);
        frontier = next.into_iter().collect();
        if frontier.is_empty() {
            break;
        }
    }
    Ok(out)
}

/// Emissions on the free signals of a suspended state, in canonical form.
fn observable_emits(mach: &Machine<'_>, st: &State) -> Result<String, SemError> {
    let e = mach.emit_map(st)?;
    let parts: Vec<String> = canonical_emits(mach.module, &st.free, &e)
        .into_iter()
        .filter(|(s, _)| st.free.contains_key(s))
        .map(|(s, vs)| {
            let vs: Vec<String> = vs.iter().map(pretty_value).collect();
            format!("{s}: {{{}}}", vs.join(", "))
        })
        .collect();
    Ok(parts.join("; "))
}

/// `x` and its successors.
fn one_step<'a>(succ: &'a HashMap<String, Vec<String>>, x: &'a String) -> BTreeSet<&'a String> {
    let mut s = BTreeSet::from([x]);
    if let Some(n) = succ.get(x) {
        s.extend(n.iter());
    }
    s
}

fn closed_exploration(
    m: &Module,
    opts: &Options,
    rep: &mut CheckReport,
) -> Option<ClosedExploration> {
    let mach = Machine::new(m);
    let init = match mach.initial() {
        Ok(s) => s,
        Err(e) => {
            rep.fail(format!("cannot start: {e}"), None);
            return None;
        }
    };
    match explore_closed(&mach, &init, opts.instants, opts) {
        Ok(x) => {
            rep.metric("states", x.states);
            rep.metric("transitions", x.transitions);
            rep.exhaustive = x.exhaustive;
            Some(x)
        }
        Err(e) => {
            rep.fail(format!("run error: {e}"), None);
            None
        }
    }
}

fn confluence_report(rep: &mut CheckReport, x: &ClosedExploration) {
    rep.metric("failed_diamonds", x.diamond_failures.len());
    for d in &x.diamond_failures {
        rep.fail(
            format!("diamond from `{}` does not close", d.state),
            Some(vec![d.state.clone(), d.left.clone(), d.right.clone()]),
        );
    }
}

fn eoi_report(rep: &mut CheckReport, x: &ClosedExploration) {
    rep.exhaustive &= x.eoi_exhaustive;
    rep.metric("max_variants", x.max_eoi_variants);
    for f in &x.eoi_failures {
        rep.fail(
            format!(
                "orderings {:?} and {:?} of `{}` lead to different states",
                f.first, f.second, f.state
            ),
            Some(vec![
                f.state.clone(),
                f.first_next.clone(),
                f.second_next.clone(),
            ]),
        );
    }
}

fn determinacy_report(m: &Module, opts: &Options, rep: &mut CheckReport, x: &ClosedExploration) {
    rep.metric("max_emissions_per_signal", x.max_emissions);
    for (i, s) in x.instants.iter().enumerate() {
        rep.metric(&format!("instant{i}_states"), s.states);
        rep.metric(&format!("instant{i}_frontier"), s.frontier.len());
        rep.metric(&format!("instant{i}_outputs"), s.outputs.len());
    }
    if x.exhaustive {
        for (i, s) in x.instants.iter().enumerate() {
            if s.frontier.len() > 1 {
                rep.fail(
                    format!("instant {i} ends in {} distinct states", s.frontier.len()),
                    Some(s.frontier.iter().take(2).cloned().collect()),
                );
            }
            if s.outputs.len() > 1 {
                rep.fail(
                    format!(
                        "instant {i} has {} distinct emissions on free signals",
                        s.outputs.len()
                    ),
                    Some(s.outputs.iter().take(2).cloned().collect()),
                );
            }
        }
        return;
    }
    // Sampled fallback: seeded runs must agree instant by instant.
    let mach = Machine::new(m);
    let free = m.entry_ctx();
    let mut reference: Option<(Vec<String>, Vec<Emitted>)> = None;
    for t in 0..opts.trials.max(1) {
        let seed = opts.seed.wrapping_add(t as u64);
        let trace = mach.run(opts.instants, Policy::Seeded(seed), false);
        if let Some(e) = &trace.error {
            rep.fail(format!("run with seed {seed} failed: {e}"), None);
            return;
        }
        let emitted: Vec<_> = trace
            .emitted
            .iter()
            .map(|e| {
                let mut c = canonical_emits(m, &free, e);
                c.retain(|s, _| free.contains_key(s));
                c
            })
            .collect();
        let hashes: Vec<String> = trace
            .records
            .iter()
            .filter(|r| r.kind == "eoi")
            .map(|r| r.hash.clone())
            .collect();
        match &reference {
            None => reference = Some((hashes, emitted)),
            Some(r) if r.0 != hashes || r.1 != emitted => {
                rep.fail(
                    format!("seeded runs {} and {seed} disagree", opts.seed),
                    Some(vec![format!("seed {}", opts.seed), format!("seed {seed}")]),
                );
                return;
            }
            _ => {}
        }
    }
    rep.details.push(format!(
        "budget exceeded; sampled {} seeded runs",
        opts.trials.max(1)
    ));
}

/// Every pair of internal steps from a reachable state can be closed in at
/// most one step on each side.
pub fn check_tau_confluence(m: &Module, opts: &Options) -> CheckReport {
    let mut rep = CheckReport::new("tau-confluence", opts.seed);
    if let Some(x) = closed_exploration(m, opts, &mut rep) {
        confluence_report(&mut rep, &x);
    }
    rep
}

/// All orderings at the end of an instant lead to the same canonical state.
pub fn check_eoi_determinacy(m: &Module, opts: &Options) -> CheckReport {
    let mut rep = CheckReport::new("eoi-determinacy", opts.seed);
    if let Some(x) = closed_exploration(m, opts, &mut rep) {
        eoi_report(&mut rep, &x);
    }
    rep
}

/// All schedules reach the same canonical state at the end of every
/// instant. Falls back to seeded runs when the budget is exceeded.
pub fn check_determinacy(m: &Module, opts: &Options) -> CheckReport {
    let mut rep = CheckReport::new("determinacy", opts.seed);
    if let Some(x) = closed_exploration(m, opts, &mut rep) {
        determinacy_report(m, opts, &mut rep, &x);
    }
    rep
}

// ---- permutation-invariance obligations ----

/// A random value of `ty`; signal leaves come from `sig`.
pub fn random_value(
    ty: &Type,
    depth: usize,
    datas: &Datas,
    rng: &mut ChaCha8Rng,
    sig: &mut dyn FnMut(&Type) -> Name,
) -> Option<Value> {
    match ty {
        Type::Sig { .. } => Some(Value::Sig(sig(ty))),
        Type::Param(_) => None,
        Type::List { elem, .. } | Type::Set { elem, .. } => {
            let len = if depth == 0 { 0 } else { rng.gen_range(0..=3) };
            let mut items = Vec::new();
            for _ in 0..len {
                items.push(random_value(elem, depth - 1, datas, rng, sig)?);
            }
            Some(Value::list(items))
        }
        Type::Data { name: dn, .. } => {
            let decl = datas.get(dn)?;
            let ctors: Vec<(Name, Vec<Type>)> = decl
                .ctors
                .iter()
                .filter_map(|c| ctor_fields(datas, ty, &c.name).map(|f| (c.name.clone(), f)))
                .collect();
            let pool: Vec<&(Name, Vec<Type>)> = if depth == 0 {
                ctors.iter().filter(|(_, f)| f.is_empty()).collect()
            } else {
                ctors.iter().collect()
            };
            let (c, fields) = *pool.choose(rng)?;
            let mut args = Vec::new();
            for f in fields {
                args.push(random_value(f, depth.saturating_sub(1), datas, rng, sig)?);
            }
            Some(Value::Con(c.clone(), args))
        }
    }
}

/// Shuffles every set-typed list inside `v`.
pub fn permute_sets(v: &Value, ty: &Type, datas: &Datas, rng: &mut ChaCha8Rng) -> Value {
    match (ty, v) {
        (Type::Set { elem, .. }, _) | (Type::List { elem, .. }, _) => {
            let Some(items) = v.as_list() else {
                return v.clone();
            };
            let mut items: Vec<Value> = items
                .iter()
                .map(|x| permute_sets(x, elem, datas, rng))
                .collect();
            if matches!(ty, Type::Set { .. }) {
                items.shuffle(rng);
            }
            Value::list(items)
        }
        (Type::Data { .. }, Value::Con(c, args)) => match ctor_fields(datas, ty, c) {
            Some(fs) if fs.len() == args.len() => Value::Con(
                c.clone(),
                args.iter()
                    .zip(&fs)
                    .map(|(a, t)| permute_sets(a, t, datas, rng))
                    .collect(),
            ),
            _ => v.clone(),
        },
        _ => v.clone(),
    }
}

/// Canonical summary of a thread call over some instants: per instant, the
/// canonical emitted values and the set of states reached.
fn thread_behaviour(
    mach: &Machine<'_>,
    free: &Ctx,
    call: &Proc,
    opts: &Options,
) -> Result<Option<Vec<String>>, SemError> {
    let st = mach.state_of(free.clone(), call);
    let x = explore_closed(
        mach,
        &st,
        opts.instants,
        &Options {
            budget: 2_000,
            ..opts.clone()
        },
    )?;
    if !x.exhaustive {
        return Ok(None);
    }
    Ok(Some(
        x.instants.iter().map(|s| s.frontier.join(" || ")).collect(),
    ))
}

/// Random tests that functions and threads with set-typed parameters
/// respect permutations of those sets.
pub fn check_function_obligations(m: &Module, opts: &Options) -> CheckReport {
    let mach = Machine::new(m);
    let mut rep = CheckReport::new("function-obligations", opts.seed);
    let report = check_module(m);
    let owners: BTreeSet<(String, bool)> = report
        .obligations
        .iter()
        .map(|o| (o.owner.clone(), o.is_thread))
        .collect();
    rep.metric("obligations", report.obligations.len());
    let mut trials_run = 0usize;
    let mut skipped = 0usize;
    for (owner, is_thread) in owners {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ key_seed(&owner));
        let params: Vec<Type> = if is_thread {
            m.thread_params(&owner).unwrap_or_default()
        } else {
            m.funs
                .get(owner.as_str())
                .map(|f| f.params.clone())
                .unwrap_or_default()
        };
        for trial in 0..opts.trials {
            let mut free = Ctx::new();
            let mut counter = 0usize;
            let mut fresh_sig = |t: &Type| {
                let n = name(&format!("arg{counter}"));
                counter += 1;
                free.insert(n.clone(), t.clone());
                n
            };
            let Some(args) = params
                .iter()
                .map(|t| random_value(t, 3, &m.datas, &mut rng, &mut fresh_sig))
                .collect::<Option<Vec<Value>>>()
            else {
                skipped += 1;
                continue;
            };
            let permuted: Vec<Value> = args
                .iter()
                .zip(&params)
                .map(|(a, t)| permute_sets(a, t, &m.datas, &mut rng))
                .collect();
            let shown = |vs: &[Value]| vs.iter().map(pretty_value).collect::<Vec<_>>().join(", ");
            let verdict = if is_thread {
                let call =
                    |vs: &[Value]| Proc::Call(name(&owner), vs.iter().map(Expr::from).collect());
                match (
                    thread_behaviour(&mach, &free, &call(&args), opts),
                    thread_behaviour(&mach, &free, &call(&permuted), opts),
                ) {
                    (Ok(Some(a)), Ok(Some(b))) => Some(a == b),
                    _ => None,
                }
            } else {
                let f = m.funs.get(owner.as_str()).expect("obligation owner exists");
                let mut fuel = mach.fuel;
                let r1 = mach.apply(&f.name, &args, &mut fuel);
                let mut fuel = mach.fuel;
                let r2 = mach.apply(&f.name, &permuted, &mut fuel);
                match (r1, r2) {
                    (Ok(a), Ok(b)) => Some(value_equiv(&a, &b, &f.ret, &m.datas)),
                    _ => None,
                }
            };
            match verdict {
                None => skipped += 1,
                Some(true) => trials_run += 1,
                Some(false) => {
                    rep.fail(
                        format!(
                            "{owner}({}) and {owner}({}) differ (trial {trial})",
                            shown(&args),
                            shown(&permuted)
                        ),
                        Some(vec![shown(&args), shown(&permuted)]),
                    );
                    break;
                }
            }
        }
    }
    rep.metric("trials", trials_run);
    rep.metric("skipped", skipped);
    rep
}

fn key_seed(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x1000_0000_01b3)
    })
}

/// Runs the five module-level checks, sharing one closed-system
/// exploration between the confluence and determinacy checks.
pub fn check_all(m: &Module, opts: &Options) -> Vec<CheckReport> {
    let mut conf = CheckReport::new("tau-confluence", opts.seed);
    let mut eoi = CheckReport::new("eoi-determinacy", opts.seed);
    let mut det = CheckReport::new("determinacy", opts.seed);
    let mut shared = CheckReport::new("exploration", opts.seed);
    match closed_exploration(m, opts, &mut shared) {
        Some(x) => {
            for r in [&mut conf, &mut eoi, &mut det] {
                r.metrics = shared.metrics.clone();
                r.exhaustive = shared.exhaustive;
            }
            confluence_report(&mut conf, &x);
            eoi_report(&mut eoi, &x);
            determinacy_report(m, opts, &mut det, &x);
        }
        None => {
            for r in [&mut conf, &mut eoi, &mut det] {
                r.status = shared.status;
                r.details = shared.details.clone();
            }
        }
    }
    vec![
        check_subject_reduction(m, opts),
        conf,
        eoi,
        det,
        check_function_obligations(m, opts),
    ]
}

// ---- weak bisimulation ----

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Bisimilar,
    NotBisimilar,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct BisimResult {
    pub verdict: Verdict,
    pub states: usize,
    pub blocks: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Label {
    Tau,
    N,
    Visible(String),
}

/// Decides weak bisimilarity of two states on their reachable transition
/// system, typed by `gamma` when given. Inputs range over `universe`;
/// an end of instant is never followed by internal steps in a weak
/// transition. `Inconclusive` when more than `cap` states are reachable.
pub fn weak_bisim(
    m: &Module,
    s1: &State,
    s2: &State,
    gamma: Option<&Ctx>,
    universe: &BTreeMap<Name, Vec<Value>>,
    cap: usize,
    opts: &Options,
) -> BisimResult {
    let mach = Machine::new(m);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut nodes: Vec<Node> = Vec::new();
    let mut edges: Vec<Vec<(Label, usize)>> = Vec::new();
    let mut roots = Vec::new();
    for s in [s1, s2] {
        let n = Node {
            st: s.clone(),
            gamma: gamma.cloned(),
            inputs: 0,
        };
        let k = n.key(&mach);
        let i = *index.entry(k).or_insert_with(|| {
            nodes.push(n);
            edges.push(vec![]);
            nodes.len() - 1
        });
        roots.push(i);
    }
    let inconclusive = |states| BisimResult {
        verdict: Verdict::Inconclusive,
        states,
        blocks: 0,
    };
    let mut todo: VecDeque<usize> = roots.iter().copied().collect();
    let mut expanded = vec![false; nodes.len()];
    while let Some(i) = todo.pop_front() {
        if expanded.get(i).copied().unwrap_or(false) {
            continue;
        }
        if expanded.len() <= i {
            expanded.resize(i + 1, false);
        }
        expanded[i] = true;
        let node = nodes[i].clone();
        let succ = match successors(&mach, &node, universe, opts, &mut rng) {
            Ok(s) => s,
            Err(_) => return inconclusive(nodes.len()),
        };
        for t in succ {
            if t.residual_error.is_some() {
                continue;
            }
            let label = match &t.act {
                Act::Tau => Label::Tau,
                Act::N => Label::N,
                a => Label::Visible(a.to_string()),
            };
            let k = t.target.key(&mach);
            let j = match index.get(&k) {
                Some(&j) => j,
                None => {
                    if nodes.len() >= cap {
                        return inconclusive(nodes.len());
                    }
                    nodes.push(t.target);
                    edges.push(vec![]);
                    index.insert(k, nodes.len() - 1);
                    todo.push_back(nodes.len() - 1);
                    nodes.len() - 1
                }
            };
            if !edges[i].contains(&(label.clone(), j)) {
                edges[i].push((label, j));
            }
        }
    }
    let n = nodes.len();
    // Reflexive-transitive internal closure.
    let mut closure: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut seen = vec![false; n];
        let mut stack = vec![i];
        seen[i] = true;
        let mut c = Vec::new();
        while let Some(x) = stack.pop() {
            c.push(x);
            for (l, y) in &edges[x] {
                if *l == Label::Tau && !seen[*y] {
                    seen[*y] = true;
                    stack.push(*y);
                }
            }
        }
        closure.push(c);
    }
    // Weak transitions.
    let mut weak: Vec<BTreeSet<(Label, usize)>> = vec![BTreeSet::new(); n];
    for i in 0..n {
        for &x in &closure[i] {
            weak[i].insert((Label::Tau, x));
            for (l, y) in &edges[x] {
                match l {
                    Label::Tau => {}
                    Label::N => {
                        weak[i].insert((Label::N, *y));
                    }
                    Label::Visible(_) => {
                        for &z in &closure[*y] {
                            weak[i].insert((l.clone(), z));
                        }
                    }
                }
            }
        }
    }
    // Partition refinement on the saturated system.
    let mut block = vec![0usize; n];
    let mut count = 1;
    loop {
        let mut ids: HashMap<(usize, BTreeSet<(Label, usize)>), usize> = HashMap::new();
        let mut next = vec![0usize; n];
        for i in 0..n {
            let sig: BTreeSet<(Label, usize)> = weak[i]
                .iter()
                .map(|(l, j)| (l.clone(), block[*j]))
                .collect();
            let len = ids.len();
            next[i] = *ids.entry((block[i], sig)).or_insert(len);
        }
        let c = ids.len();
        block = next;
        if c == count {
            break;
        }
        count = c;
    }
    BisimResult {
        verdict: if block[roots[0]] == block[roots[1]] {
            Verdict::Bisimilar
        } else {
            Verdict::NotBisimilar
        },
        states: n,
        blocks: count,
    }
}

/// Runs the entry program to its first suspension, once choosing the
/// leftmost redex and once per random walk, and compares the suspended
/// states by typed weak bisimilarity.
pub fn check_bisim_determinacy(m: &Module, opts: &Options) -> CheckReport {
    let mach = Machine::new(m);
    let mut rep = CheckReport::new("bisim-determinacy", opts.seed);
    let gamma = m.entry_ctx();
    let universe = default_universe(m, &gamma, opts);
    let settle = |seed: Option<u64>| -> Result<State, SemError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
        let mut st = mach.initial()?;
        for _ in 0..mach.step_budget {
            let mut succ = mach.step_internal(&st)?;
            if succ.is_empty() {
                return Ok(st);
            }
            let i = if seed.is_some() {
                rng.gen_range(0..succ.len())
            } else {
                0
            };
            st = succ.swap_remove(i).1;
        }
        Err(SemError::Divergence(mach.step_budget))
    };
    let reference = match settle(None) {
        Ok(s) => s,
        Err(e) => {
            rep.fail(format!("run error: {e}"), None);
            return rep;
        }
    };
    let mut largest = 0;
    for w in 0..opts.walks.max(1) {
        let seed = opts.seed.wrapping_add(w as u64);
        let other = match settle(Some(seed)) {
            Ok(s) => s,
            Err(e) => {
                rep.fail(format!("run with seed {seed} failed: {e}"), None);
                return rep;
            }
        };
        let r = weak_bisim(
            m,
            &reference,
            &other,
            Some(&gamma),
            &universe,
            opts.budget,
            opts,
        );
        largest = largest.max(r.states);
        match r.verdict {
            Verdict::Bisimilar => {}
            Verdict::NotBisimilar => rep.fail(
                format!("schedule with seed {seed} suspends in a state not bisimilar to the leftmost one"),
                Some(vec![state_text(&reference), state_text(&other)]),
            ),
            Verdict::Inconclusive => {
                rep.exhaustive = false;
                if rep.status == Status::Pass {
                    rep.status = Status::Inconclusive;
                }
                rep.details.push(format!("more than {} states with seed {seed}", opts.budget));
            }
        }
    }
    rep.metric("lts_states", largest);
    rep
}

/// Canonical form of the values of `e` at the payload types of `free`.
pub fn canonical_emits(m: &Module, free: &Ctx, e: &EmitMap) -> BTreeMap<Name, BTreeSet<Value>> {
    e.iter()
        .map(|(s, vs)| {
            let vs = match free.get(s).and_then(Type::payload) {
                Some(t) => vs.iter().map(|v| canonicalize(v, t, &m.datas)).collect(),
                None => vs.clone(),
            };
            (s.clone(), vs)
        })
        .collect()
}

/// Replay helper: the redex sequence chosen by a seeded run.
pub fn replay(m: &Module, instants: usize, seed: u64) -> Vec<String> {
    Machine::new(m)
        .run(instants, Policy::Seeded(seed), false)
        .records
        .iter()
        .map(|r| r.redex.clone().unwrap_or_else(|| "eoi".into()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_module;
    use crate::typecheck::elaborate;

    fn module(src: &str) -> Module {
        elaborate(&parse_module(src).unwrap_or_else(|e| panic!("{e}")))
    }

    fn u(s: &str) -> Usage {
        s.parse().unwrap()
    }

    #[test]
    fn output_usage_is_least_emitting() {
        assert_eq!(output_usage(Kind::new(2).unwrap()), u("k2:(1,w,w)(0,w,w)w"));
        assert_eq!(output_usage(Kind::new(5).unwrap()), u("k5:(1,0,0)(0,0,0)w"));
        assert_eq!(output_usage(Kind::new(3).unwrap()), u("k3:(w,0,0)w"));
        assert_eq!(output_usage(Kind::new(1).unwrap()), u("k1:(w,0,w)w"));
    }

    #[test]
    fn tau_is_always_compatible() {
        let m = module("main() = 0;");
        assert!(compatible(&m, &Ctx::new(), &Act::Tau));
        assert_eq!(residual(&m, &Ctx::new(), &Act::Tau).unwrap(), Ctx::new());
    }

    #[test]
    fn input_on_kind5_reader() {
        let m = module("type V = v; main() = 0;");
        let g = Ctx::from([(name("s"), Type::sig(u("k5:(0,1,0)w"), Type::data("V")))]);
        let act = Act::In {
            sig: name("s"),
            value: Value::con("v", vec![]),
        };
        assert!(compatible(&m, &g, &act));
        let r = residual(&m, &g, &act).unwrap();
        assert_eq!(r[&name("s")].usage(), Some(u("k5:(1,1,0)(0,1,0)w")));
    }

    #[test]
    fn affine_value_already_owned_is_incompatible() {
        let m = module("main() = 0;");
        let inner = Type::sig(u("k5:(1,1,0)w"), Type::unit());
        let g = Ctx::from([
            (name("s"), Type::sig(u("k5:(1,1,0)w"), inner.clone())),
            (name("t"), inner),
        ]);
        let act = Act::In {
            sig: name("s"),
            value: Value::sig("t"),
        };
        assert!(!compatible(&m, &g, &act));
    }

    #[test]
    fn residual_shift_at_end_of_instant() {
        let m = module("main() = 0;");
        let g = Ctx::from([(name("s"), Type::sig(u("k4:(0,0,1)(0,0,0)w"), Type::unit()))]);
        let r = residual(&m, &g, &Act::N).unwrap();
        assert_eq!(r[&name("s")].usage(), Some(u("k4:(0,0,0)w")));
    }

    #[test]
    fn auxiliary_eoi_exports_and_imports() {
        // s1 may be received at the end of the instant, s2 may not: the
        // value emitted on s2 leaves, the one only assumed on s1 arrives.
        let m = module("main() = 0;");
        let aff = Type::sig(u("k4:(1,0,1)w"), Type::unit());
        let g = Ctx::from([
            (name("s1"), Type::sig(u("k3:(w,0,1)w"), aff.clone())),
            (name("s2"), Type::sig(u("k3:(w,0,0)w"), aff.clone())),
            (name("t1"), aff.clone()),
            (name("t2"), aff.clone()),
        ]);
        let e = EmitMap::from([
            (name("s1"), BTreeSet::from([Value::sig("t1")])),
            (name("s2"), BTreeSet::from([Value::sig("t2")])),
        ]);
        let v = ValueMap::from([
            (name("s1"), vec![Value::sig("t1"), Value::sig("t3")]),
            (name("s2"), vec![Value::sig("t4"), Value::sig("t2")]),
        ]);
        let r = residual(&m, &g, &Act::Eoi { e, v }).unwrap();
        assert!(r.contains_key(&name("t1")));
        assert!(!r.get(&name("t2")).is_some_and(Type::is_affine));
        assert_eq!(r.get(&name("t3")), Some(&aff));
        assert!(!r.contains_key(&name("t4")));
    }

    #[test]
    fn enumerated_values_respect_cap() {
        let m = module("type N = z | s(N); main() = 0;");
        let vs = enumerate_values(&Type::data("N"), 5, &m.datas, 3, &|_| vec![]);
        assert_eq!(vs.len(), 3);
        assert!(vs.contains(&Value::con("z", vec![])));
    }

    #[test]
    fn suspended_states_are_bisimilar_across_schedules() {
        let m = module(
            "type V = v; thread R(s: Sig<k2:(0,w,w)w>(V), o: Sig<k1:(w,0,w)w>(V)) = present s(x) { emit o x } else 0;\n\
             main(o: Sig<k1:(w,0,w)w>(V)) = new s: Sig<k2:(1,w,w)w>(V) in emit s v | R(s, o) | R(s, o);",
        );
        let r = check_bisim_determinacy(
            &m,
            &Options {
                walks: 3,
                ..Options::default()
            },
        );
        assert_eq!(r.status, Status::Pass, "{:?}", r.details);
    }
}
