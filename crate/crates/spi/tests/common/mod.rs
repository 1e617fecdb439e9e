//! Shared test support: an independent, bottom-up model of the declarative
//! typing rules used to cross-check the demand-inference checker.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use spi::parser::{parse_module, parse_type};
use spi::syntax::{name, Cont, Expr, Module, Pattern, Proc, STOP};
use spi::typecheck::{annotate, check_proc};
use spi::types::Ctx;

pub fn corpus(file: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(file);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Multiplicity encoded as 0, 1, 2 (= w).
pub const W: u8 = 2;
pub type Pt = [u8; 3];

/// Derived usage sets, main usage first, transcribed from the published table.
pub fn derived(k: u8) -> &'static [Pt] {
    match k {
        1 => &[[W, 0, W]],
        2 => &[[1, W, W], [0, W, W]],
        3 => &[[W, 0, 1], [W, 0, 0]],
        4 => &[[1, 0, 1], [1, 0, 0], [0, 0, 1], [0, 0, 0]],
        5 => &[[1, 1, 0], [1, 0, 0], [0, 1, 0], [0, 0, 0]],
        _ => &[],
    }
}

fn madd(a: u8, b: u8) -> Option<u8> {
    match (a, b) {
        (0, x) | (x, 0) => Some(x),
        (W, W) => Some(W),
        _ => None,
    }
}

pub fn padd(k: u8, a: Pt, b: Pt) -> Option<Pt> {
    let p = [madd(a[0], b[0])?, madd(a[1], b[1])?, madd(a[2], b[2])?];
    derived(k).contains(&p).then_some(p)
}

/// `a <= b` within kind `k`: some point of the kind added to `a` gives `b`.
pub fn ple(k: u8, a: Pt, b: Pt) -> bool {
    derived(k).iter().any(|c| padd(k, a, *c) == Some(b))
}

pub fn pt_text(p: Pt) -> String {
    let m = |x: u8| {
        if x == W {
            "w".to_string()
        } else {
            x.to_string()
        }
    };
    format!("({},{},{})", m(p[0]), m(p[1]), m(p[2]))
}

/// A usage: first point now, second point at every later instant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OU {
    pub k: u8,
    pub now: Pt,
    pub later: Pt,
}

impl OU {
    pub fn all(k: u8) -> Vec<OU> {
        let mut out = Vec::new();
        for &now in derived(k) {
            for &later in derived(k) {
                out.push(OU { k, now, later });
            }
        }
        out
    }

    pub fn main(k: u8) -> OU {
        OU {
            k,
            now: derived(k)[0],
            later: derived(k)[0],
        }
    }

    pub fn add(self, o: OU) -> Option<OU> {
        if self.k != o.k {
            return None;
        }
        Some(OU {
            k: self.k,
            now: padd(self.k, self.now, o.now)?,
            later: padd(self.k, self.later, o.later)?,
        })
    }

    pub fn below(self, o: OU) -> bool {
        OU::all(self.k).into_iter().any(|c| self.add(c) == Some(o))
    }

    pub fn bottom(k: u8) -> OU {
        let all = OU::all(k);
        *all.iter()
            .find(|b| all.iter().all(|x| b.below(*x)))
            .expect("kind has a least usage")
    }

    pub fn text(self) -> String {
        if self.now == self.later {
            format!("k{}:{}w", self.k, pt_text(self.now))
        } else {
            format!("k{}:{}{}w", self.k, pt_text(self.now), pt_text(self.later))
        }
    }
}

/// Types of the oracle's small fragment: one data type `D = c`, signals,
/// lists and sets.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum OTy {
    D,
    /// `usage` is `None` for variables whose usage comes from the context.
    Sig {
        k: u8,
        usage: Option<OU>,
        payload: Box<OTy>,
    },
    List {
        m: u8,
        elem: Box<OTy>,
    },
    Set {
        m: u8,
        elem: Box<OTy>,
    },
}

impl OTy {
    fn same_shape(&self, o: &OTy) -> bool {
        match (self, o) {
            (
                OTy::Sig { k, payload, .. },
                OTy::Sig {
                    k: k2, payload: p2, ..
                },
            ) => k == k2 && payload == p2,
            _ => self == o,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Entry {
    Data,
    Sig(OU),
}

pub type OCtx = BTreeMap<String, Entry>;

fn entry_add(a: &Entry, b: &Entry) -> Option<Entry> {
    match (a, b) {
        (Entry::Data, Entry::Data) => Some(Entry::Data),
        (Entry::Sig(u), Entry::Sig(v)) => u.add(*v).map(Entry::Sig),
        _ => None,
    }
}

fn entry_le(a: &Entry, b: &Entry) -> bool {
    match (a, b) {
        (Entry::Data, Entry::Data) => true,
        (Entry::Sig(u), Entry::Sig(v)) => u.below(*v),
        _ => false,
    }
}

pub fn octx_add(a: &OCtx, b: &OCtx) -> Option<OCtx> {
    let mut out = a.clone();
    for (x, e) in b {
        let v = match out.get(x) {
            Some(prev) => entry_add(prev, e)?,
            None => e.clone(),
        };
        out.insert(x.clone(), v);
    }
    Some(out)
}

pub fn octx_le(a: &OCtx, g: &OCtx) -> bool {
    a.iter()
        .all(|(x, e)| g.get(x).is_some_and(|f| entry_le(e, f)))
}

pub fn minimal(set: Vec<OCtx>) -> Vec<OCtx> {
    let mut uniq: Vec<OCtx> = Vec::new();
    for c in set {
        if !uniq.contains(&c) {
            uniq.push(c);
        }
    }
    uniq.iter()
        .filter(|c| !uniq.iter().any(|d| d != *c && octx_le(d, c)))
        .cloned()
        .collect()
}

fn sums(a: &[OCtx], b: &[OCtx]) -> Vec<OCtx> {
    minimal(
        a.iter()
            .flat_map(|x| b.iter().filter_map(move |y| octx_add(x, y)))
            .collect(),
    )
}

/// Minimal contexts above both `a` and `b`, by brute force per variable.
fn upper_bounds(a: &OCtx, b: &OCtx) -> Vec<OCtx> {
    let mut out = vec![OCtx::new()];
    let vars: Vec<&String> = a.keys().chain(b.keys()).collect();
    let mut seen = Vec::new();
    for x in vars {
        if seen.contains(&x) {
            continue;
        }
        seen.push(x);
        let cands: Vec<Entry> = match (a.get(x), b.get(x)) {
            (Some(e), None) | (None, Some(e)) => vec![e.clone()],
            (Some(Entry::Data), Some(Entry::Data)) => vec![Entry::Data],
            (Some(Entry::Sig(u)), Some(Entry::Sig(v))) if u.k == v.k => {
                let ups: Vec<OCtx> = OU::all(u.k)
                    .into_iter()
                    .filter(|w| u.below(*w) && v.below(*w))
                    .map(|w| OCtx::from([(x.clone(), Entry::Sig(w))]))
                    .collect();
                minimal(ups).into_iter().map(|c| c[x].clone()).collect()
            }
            _ => vec![],
        };
        out = out
            .into_iter()
            .flat_map(|c| {
                cands.iter().map(move |e| {
                    let mut c = c.clone();
                    c.insert(x.clone(), e.clone());
                    c
                })
            })
            .collect();
    }
    out
}

fn meets(a: &[OCtx], b: &[OCtx]) -> Vec<OCtx> {
    minimal(
        a.iter()
            .flat_map(|x| b.iter().flat_map(move |y| upper_bounds(x, y)))
            .collect(),
    )
}

pub type Env = Vec<(String, OTy)>;
pub type Threads = HashMap<String, Vec<OTy>>;

fn lookup<'a>(env: &'a Env, x: &str) -> Option<&'a OTy> {
    env.iter().rev().find(|(y, _)| y == x).map(|(_, t)| t)
}

fn single(x: &str, e: Entry) -> OCtx {
    OCtx::from([(x.to_string(), e)])
}

/// Minimal contexts typing expression `e` at `expected` in the present instant.
fn expr(env: &Env, e: &Expr, expected: &OTy) -> Vec<OCtx> {
    match e {
        Expr::Con(c, args) if &**c == "c" && args.is_empty() && *expected == OTy::D => {
            vec![OCtx::new()]
        }
        Expr::Var(y) => match (lookup(env, y), expected) {
            (Some(OTy::D), OTy::D) => vec![single(y, Entry::Data)],
            (Some(t @ OTy::Sig { .. }), OTy::Sig { usage: Some(u), .. })
                if t.same_shape(expected) =>
            {
                vec![single(y, Entry::Sig(*u))]
            }
            _ => vec![],
        },
        _ => vec![],
    }
}

/// Minimal contexts typing continuation argument `e` at `expected` from the next instant on.
fn rexpr(env: &Env, e: &Expr, expected: &OTy) -> Vec<OCtx> {
    match e {
        Expr::Con(..) => expr(env, e, expected),
        Expr::Var(y) => match (lookup(env, y), expected) {
            (Some(OTy::D), OTy::D) => vec![single(y, Entry::Data)],
            (Some(t @ OTy::Sig { k, .. }), OTy::Sig { usage: Some(u), .. })
                if t.same_shape(expected) =>
            {
                minimal(
                    OU::all(*k)
                        .into_iter()
                        .filter(|w| {
                            u.below(OU {
                                k: *k,
                                now: w.later,
                                later: w.later,
                            })
                        })
                        .map(|w| single(y, Entry::Sig(w)))
                        .collect(),
                )
            }
            _ => vec![],
        },
        Expr::Deref(y) => {
            let Some(OTy::Sig { k, payload, .. }) = lookup(env, y) else {
                return vec![];
            };
            let (need_kind, floor): (u8, Pt) = match expected {
                OTy::Set { m: W, elem } if elem == payload => (1, [W, 0, W]),
                OTy::Set { m: 1, elem } if elem == payload => (3, [W, 0, 1]),
                OTy::List { m: W, elem } if elem == payload => (2, [0, W, W]),
                OTy::List { m: 1, elem } if elem == payload => (4, [0, 0, 1]),
                _ => return vec![],
            };
            if *k != need_kind {
                return vec![];
            }
            minimal(
                OU::all(*k)
                    .into_iter()
                    .filter(|w| ple(*k, floor, w.now))
                    .map(|w| single(y, Entry::Sig(w)))
                    .collect(),
            )
        }
        _ => vec![],
    }
}

fn sig_of(env: &Env, s: &str) -> Option<(u8, OTy)> {
    match lookup(env, s)? {
        OTy::Sig { k, payload, .. } => Some((*k, (**payload).clone())),
        _ => None,
    }
}

/// Antichain of minimal contexts under which `p` is derivable.
pub fn derivable(env: &Env, threads: &Threads, p: &Proc) -> Vec<OCtx> {
    match p {
        Proc::Nil => vec![OCtx::new()],
        Proc::Call(a, args) => {
            let Some(params) = threads.get(&**a) else {
                return vec![];
            };
            if params.len() != args.len() {
                return vec![];
            }
            args.iter()
                .zip(params)
                .fold(vec![OCtx::new()], |acc, (e, t)| {
                    sums(&acc, &expr(env, e, t))
                })
        }
        Proc::Emit {
            sig,
            val,
            marked: false,
        } => {
            let Some((k, payload)) = sig_of(env, sig) else {
                return vec![];
            };
            let emit: Vec<OCtx> = minimal(
                OU::all(k)
                    .into_iter()
                    .filter(|u| u.now[0] != 0)
                    .map(|u| single(sig, Entry::Sig(u)))
                    .collect(),
            );
            sums(&emit, &expr(env, val, &payload))
        }
        Proc::Present {
            sig,
            var,
            body,
            cont,
        } => {
            let Some((k, payload)) = sig_of(env, sig) else {
                return vec![];
            };
            let recv: Vec<OCtx> = minimal(
                OU::all(k)
                    .into_iter()
                    .filter(|u| u.now[1] != 0)
                    .map(|u| single(sig, Entry::Sig(u)))
                    .collect(),
            );
            let mut inner = env.clone();
            inner.push((var.to_string(), payload.clone()));
            let bound = Entry::Sig(match &payload {
                OTy::Sig { usage: Some(u), .. } => *u,
                _ => OU::main(1),
            });
            let body: Vec<OCtx> = derivable(&inner, threads, body)
                .into_iter()
                .filter(|d| match (d.get(&**var), &payload) {
                    (None, _) | (Some(Entry::Data), OTy::D) => true,
                    (Some(e @ Entry::Sig(_)), OTy::Sig { .. }) => entry_le(e, &bound),
                    _ => false,
                })
                .map(|mut d| {
                    d.remove(&**var);
                    d
                })
                .collect();
            let now = sums(&recv, &minimal(body));
            let Some(params) = threads.get(&*cont.thread) else {
                return vec![];
            };
            if params.len() != cont.args.len() {
                return vec![];
            }
            let later = cont
                .args
                .iter()
                .zip(params)
                .fold(vec![OCtx::new()], |acc, (e, t)| {
                    sums(&acc, &rexpr(env, e, t))
                });
            meets(&now, &later)
        }
        Proc::IfSig {
            left,
            right,
            then,
            els,
        } => {
            let (Some((kl, _)), Some((kr, _))) = (sig_of(env, left), sig_of(env, right)) else {
                return vec![];
            };
            let mut present = single(left, Entry::Sig(OU::bottom(kl)));
            present.insert(right.to_string(), Entry::Sig(OU::bottom(kr)));
            let both = meets(
                &derivable(env, threads, then),
                &derivable(env, threads, els),
            );
            meets(&[present], &both)
        }
        Proc::Match {
            scrut,
            pat,
            then,
            els,
            ..
        } => {
            if &*pat.ctor != "c" || !pat.vars.is_empty() {
                return vec![];
            }
            let first = sums(&expr(env, scrut, &OTy::D), &derivable(env, threads, then));
            meets(&first, &derivable(env, threads, els))
        }
        Proc::Par(ps) => ps.iter().fold(vec![OCtx::new()], |acc, q| {
            sums(&acc, &derivable(env, threads, q))
        }),
        _ => vec![],
    }
}

/// The fragment for one payload kind: a module with one thread per
/// continuation shape, and the oracle's view of the thread parameters.
pub struct Family {
    pub kt: u8,
    pub module: Module,
    pub threads: Threads,
}

impl Family {
    pub fn new(kt: u8) -> Family {
        let elem = format!("Sig<{}>(D)", OU::main(kt).text());
        let t = OTy::Sig {
            k: kt,
            usage: Some(OU::main(kt)),
            payload: Box::new(OTy::D),
        };
        let mut text = format!("type D = c;\nthread A(x: {elem}) = 0;\n");
        let mut threads = Threads::new();
        threads.insert(STOP.to_string(), vec![]);
        threads.insert("A".into(), vec![t.clone()]);
        let mut coll = vec![(
            "L1",
            "List<1>",
            OTy::List {
                m: 1,
                elem: Box::new(t.clone()),
            },
        )];
        coll.push((
            "S1",
            "Set<1>",
            OTy::Set {
                m: 1,
                elem: Box::new(t.clone()),
            },
        ));
        if kt == 1 {
            coll.push((
                "Lw",
                "List<w>",
                OTy::List {
                    m: W,
                    elem: Box::new(t.clone()),
                },
            ));
            coll.push((
                "Sw",
                "Set<w>",
                OTy::Set {
                    m: W,
                    elem: Box::new(t.clone()),
                },
            ));
        }
        for (n, c, ty) in coll {
            text.push_str(&format!("thread {n}(l: {c}({elem})) = 0;\n"));
            threads.insert(n.to_string(), vec![ty]);
        }
        let module = parse_module(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
        Family {
            kt,
            module,
            threads,
        }
    }

    pub fn t_type(&self) -> OTy {
        OTy::Sig {
            k: self.kt,
            usage: Some(OU::main(self.kt)),
            payload: Box::new(OTy::D),
        }
    }

    /// Free variables: `s` carries a `t`-like signal, `t` carries data.
    pub fn env(&self, ks: u8) -> Env {
        vec![
            (
                "s".into(),
                OTy::Sig {
                    k: ks,
                    usage: None,
                    payload: Box::new(self.t_type()),
                },
            ),
            (
                "t".into(),
                OTy::Sig {
                    k: self.kt,
                    usage: None,
                    payload: Box::new(OTy::D),
                },
            ),
        ]
    }

    /// Every well-formed assignment of usages to `s`, with `t` at its main usage.
    pub fn contexts(&self) -> Vec<(u8, OU, Ctx, OCtx)> {
        let mut out = Vec::new();
        for ks in 1..=5u8 {
            if self.kt != 1 && ks < 3 {
                continue;
            }
            for us in OU::all(ks) {
                let elem = format!("Sig<{}>(D)", OU::main(self.kt).text());
                let s_ty =
                    parse_type(&self.module, &format!("Sig<{}>({elem})", us.text())).unwrap();
                let t_ty = parse_type(&self.module, &elem).unwrap();
                let ctx = Ctx::from([(name("s"), s_ty), (name("t"), t_ty)]);
                let o = OCtx::from([
                    ("s".to_string(), Entry::Sig(us)),
                    ("t".to_string(), Entry::Sig(OU::main(self.kt))),
                ]);
                out.push((ks, us, ctx, o));
            }
        }
        out
    }

    pub fn checker_accepts(&self, ctx: &Ctx, p: &Proc) -> bool {
        check_proc(&self.module, ctx, &annotate(&self.module, ctx, p)).is_ok()
    }
}

/// All programs of the fragment up to `max` syntax nodes.
pub struct Gen<'a> {
    threads: &'a Threads,
    memo: HashMap<(usize, String), Vec<Proc>>,
    env: Env,
}

impl<'a> Gen<'a> {
    pub fn new(threads: &'a Threads, env: Env) -> Gen<'a> {
        Gen {
            threads,
            memo: HashMap::new(),
            env,
        }
    }

    pub fn upto(&mut self, max: usize) -> Vec<Proc> {
        let base = self.env.clone();
        (1..=max).flat_map(|n| self.sized(n, &base)).collect()
    }

    fn sized(&mut self, n: usize, scope: &Env) -> Vec<Proc> {
        let key = (n, format!("{scope:?}"));
        if let Some(v) = self.memo.get(&key) {
            return v.clone();
        }
        let out = self.build(n, scope);
        self.memo.insert(key, out.clone());
        out
    }

    fn build(&mut self, n: usize, scope: &Env) -> Vec<Proc> {
        let sigs: Vec<String> = scope
            .iter()
            .filter(|(_, t)| matches!(t, OTy::Sig { .. }))
            .map(|(x, _)| x.clone())
            .collect();
        let datas: Vec<String> = scope
            .iter()
            .filter(|(_, t)| *t == OTy::D)
            .map(|(x, _)| x.clone())
            .collect();
        let mut values = vec![Expr::Con(name("c"), vec![])];
        values.extend(scope.iter().map(|(x, _)| Expr::var(x)));
        let mut out = Vec::new();
        if n == 1 {
            out.push(Proc::Nil);
            out.push(Proc::Call(name(STOP), vec![]));
        }
        if n == 2 {
            for s in &sigs {
                for v in &values {
                    out.push(Proc::emit(s, v.clone()));
                }
            }
            for v in &values {
                out.push(Proc::Call(name("A"), vec![v.clone()]));
            }
        }
        // present s(x) { body } else K
        let mut conts = vec![(Cont::stop(), 1)];
        for s in &sigs {
            conts.push((
                Cont {
                    thread: name("A"),
                    args: vec![Expr::var(s)],
                },
                2,
            ));
            let mut colls: Vec<&String> = self
                .threads
                .keys()
                .filter(|t| *t != "A" && *t != STOP)
                .collect();
            colls.sort();
            for c in colls {
                conts.push((
                    Cont {
                        thread: name(c),
                        args: vec![Expr::Deref(name(s))],
                    },
                    2,
                ));
            }
        }
        let var = format!("x{}", scope.len());
        for s in &sigs {
            let payload = match lookup(scope, s) {
                Some(OTy::Sig { payload, .. }) => (**payload).clone(),
                _ => unreachable!(),
            };
            let mut inner = scope.clone();
            inner.push((var.clone(), payload));
            for (k, ksize) in &conts {
                if n < 2 + ksize {
                    continue;
                }
                for body in self.sized(n - 1 - ksize, &inner) {
                    out.push(Proc::Present {
                        sig: name(s),
                        var: name(&var),
                        body: Box::new(body),
                        cont: k.clone(),
                    });
                }
            }
        }
        // binary forms
        for a in 1..n.saturating_sub(1) {
            let b = n - 1 - a;
            if b == 0 {
                continue;
            }
            let left = self.sized(a, scope);
            let right = self.sized(b, scope);
            for l in &sigs {
                for r in &sigs {
                    for p in &left {
                        for q in &right {
                            out.push(Proc::IfSig {
                                left: name(l),
                                right: name(r),
                                then: Box::new(p.clone()),
                                els: Box::new(q.clone()),
                            });
                        }
                    }
                }
            }
            if a <= b {
                for (i, p) in left.iter().enumerate() {
                    for (j, q) in right.iter().enumerate() {
                        if a == b && j < i {
                            continue;
                        }
                        out.push(Proc::Par(vec![p.clone(), q.clone()]));
                    }
                }
            }
        }
        // match e with c { P } else { Q }
        if n >= 4 {
            let mut scruts = vec![Expr::Con(name("c"), vec![])];
            scruts.extend(datas.iter().map(|x| Expr::var(x)));
            for a in 1..n - 2 {
                let b = n - 2 - a;
                let left = self.sized(a, scope);
                let right = self.sized(b, scope);
                for e in &scruts {
                    for p in &left {
                        for q in &right {
                            out.push(Proc::Match {
                                scrut: e.clone(),
                                pat: Pattern {
                                    ctor: name("c"),
                                    vars: vec![],
                                },
                                ty: None,
                                then: Box::new(p.clone()),
                                els: Box::new(q.clone()),
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Compares the checker with the declarative oracle on every small program
/// and every well-formed context, and returns (programs, judgements, accepted, mismatches).
pub fn compare(max: usize) -> (usize, usize, usize, Vec<String>) {
    let mut programs = 0;
    let mut accepted = 0;
    let mut judgements = 0;
    let mut bad = Vec::new();
    for kt in 1..=5u8 {
        let fam = Family::new(kt);
        let contexts = fam.contexts();
        for ks in 1..=5u8 {
            let ctxs: Vec<_> = contexts.iter().filter(|c| c.0 == ks).collect();
            if ctxs.is_empty() {
                continue;
            }
            let env = fam.env(ks);
            let mut gen = Gen::new(&fam.threads, env.clone());
            for p in gen.upto(max) {
                programs += 1;
                let mins = derivable(&env, &fam.threads, &p);
                for (_, us, ctx, octx) in &ctxs {
                    judgements += 1;
                    let expected = mins.iter().any(|d| octx_le(d, octx));
                    accepted += expected as usize;
                    if fam.checker_accepts(ctx, &p) != expected && bad.len() < 20 {
                        bad.push(format!(
                            "t: k{kt}, s: {}, expected {expected}: {}",
                            us.text(),
                            spi::parser::pretty(&p)
                        ));
                    }
                }
            }
        }
    }
    (programs, judgements, accepted, bad)
}
