//! Abstract syntax of programs, expressions, values and module declarations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::types::{DataDecl, Type};

pub type Name = Arc<str>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

/// Name of the builtin thread `Stop() = 0`, used for `else 0` continuations.
pub const STOP: &str = "Stop";

/// Closed value: a signal name or a constructor applied to values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Sig(Name),
    Con(Name, Vec<Value>),
}

impl Value {
    pub fn con(c: &str, args: Vec<Value>) -> Value {
        Value::Con(name(c), args)
    }

    pub fn sig(s: &str) -> Value {
        Value::Sig(name(s))
    }

    pub fn nil() -> Value {
        Value::con("nil", vec![])
    }

    /// `cons(v1, cons(v2, ... nil))`.
    pub fn list(items: impl IntoIterator<Item = Value>) -> Value {
        let items: Vec<Value> = items.into_iter().collect();
        items
            .into_iter()
            .rev()
            .fold(Value::nil(), |acc, v| Value::con("cons", vec![v, acc]))
    }

    /// Elements of a `cons`/`nil` chain.
    pub fn as_list(&self) -> Option<Vec<Value>> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Value::Con(c, args) if &**c == "nil" && args.is_empty() => return Some(out),
                Value::Con(c, args) if &**c == "cons" && args.len() == 2 => {
                    out.push(args[0].clone());
                    cur = &args[1];
                }
                _ => return None,
            }
        }
    }

    pub fn names(&self, out: &mut BTreeSet<Name>) {
        match self {
            Value::Sig(s) => {
                out.insert(s.clone());
            }
            Value::Con(_, args) => args.iter().for_each(|a| a.names(out)),
        }
    }

    pub fn rename(&self, map: &BTreeMap<Name, Name>) -> Value {
        match self {
            Value::Sig(s) => Value::Sig(map.get(s).cloned().unwrap_or_else(|| s.clone())),
            Value::Con(c, args) => {
                Value::Con(c.clone(), args.iter().map(|a| a.rename(map)).collect())
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Value::Sig(_) => 0,
            Value::Con(_, args) => 1 + args.iter().map(Value::depth).max().unwrap_or(0),
        }
    }
}

/// Expressions. `Deref` is only legal inside continuation arguments.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Var(Name),
    Con(Name, Vec<Expr>),
    Fun(Name, Vec<Expr>),
    Deref(Name),
}

impl Expr {
    pub fn var(s: &str) -> Expr {
        Expr::Var(name(s))
    }

    /// Reads the expression as a closed value, treating variables as signal names.
    pub fn as_value(&self) -> Option<Value> {
        match self {
            Expr::Var(s) => Some(Value::Sig(s.clone())),
            Expr::Con(c, args) => Some(Value::Con(
                c.clone(),
                args.iter().map(Expr::as_value).collect::<Option<_>>()?,
            )),
            _ => None,
        }
    }

    pub fn has_deref(&self) -> bool {
        match self {
            Expr::Deref(_) => true,
            Expr::Var(_) => false,
            Expr::Con(_, a) | Expr::Fun(_, a) => a.iter().any(Expr::has_deref),
        }
    }

    pub fn free_vars(&self, out: &mut BTreeSet<Name>) {
        match self {
            Expr::Var(x) | Expr::Deref(x) => {
                out.insert(x.clone());
            }
            Expr::Con(_, a) | Expr::Fun(_, a) => a.iter().for_each(|e| e.free_vars(out)),
        }
    }

    pub fn derefs(&self, out: &mut BTreeSet<Name>) {
        match self {
            Expr::Deref(x) => {
                out.insert(x.clone());
            }
            Expr::Var(_) => {}
            Expr::Con(_, a) | Expr::Fun(_, a) => a.iter().for_each(|e| e.derefs(out)),
        }
    }

    pub fn subst(&self, theta: &BTreeMap<Name, Value>) -> Expr {
        match self {
            Expr::Var(x) => theta.get(x).map(Expr::from).unwrap_or_else(|| self.clone()),
            Expr::Deref(x) => match theta.get(x) {
                Some(Value::Sig(s)) => Expr::Deref(s.clone()),
                _ => self.clone(),
            },
            Expr::Con(c, a) => Expr::Con(c.clone(), a.iter().map(|e| e.subst(theta)).collect()),
            Expr::Fun(f, a) => Expr::Fun(f.clone(), a.iter().map(|e| e.subst(theta)).collect()),
        }
    }

    /// Replaces `!s` by the list bound to `s`.
    pub fn subst_deref(&self, lists: &BTreeMap<Name, Value>) -> Expr {
        match self {
            Expr::Deref(s) => Expr::from(lists.get(s).cloned().unwrap_or_else(Value::nil)),
            Expr::Var(_) => self.clone(),
            Expr::Con(c, a) => {
                Expr::Con(c.clone(), a.iter().map(|e| e.subst_deref(lists)).collect())
            }
            Expr::Fun(f, a) => {
                Expr::Fun(f.clone(), a.iter().map(|e| e.subst_deref(lists)).collect())
            }
        }
    }

    pub fn rename(&self, map: &BTreeMap<Name, Name>) -> Expr {
        let r = |x: &Name| map.get(x).cloned().unwrap_or_else(|| x.clone());
        match self {
            Expr::Var(x) => Expr::Var(r(x)),
            Expr::Deref(x) => Expr::Deref(r(x)),
            Expr::Con(c, a) => Expr::Con(c.clone(), a.iter().map(|e| e.rename(map)).collect()),
            Expr::Fun(f, a) => Expr::Fun(f.clone(), a.iter().map(|e| e.rename(map)).collect()),
        }
    }
}

impl From<&Value> for Expr {
    fn from(v: &Value) -> Expr {
        match v {
            Value::Sig(s) => Expr::Var(s.clone()),
            Value::Con(c, a) => Expr::Con(c.clone(), a.iter().map(Expr::from).collect()),
        }
    }
}

impl From<Value> for Expr {
    fn from(v: Value) -> Expr {
        Expr::from(&v)
    }
}

/// Flat pattern `c(x1, ..., xn)` with distinct variables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pattern {
    pub ctor: Name,
    pub vars: Vec<Name>,
}

/// `match(v, p)`: the substitution matching `v` against `p`, if any.
pub fn match_value(v: &Value, p: &Pattern) -> Option<BTreeMap<Name, Value>> {
    match v {
        Value::Con(c, args) if *c == p.ctor && args.len() == p.vars.len() => {
            Some(p.vars.iter().cloned().zip(args.iter().cloned()).collect())
        }
        _ => None,
    }
}

/// Continuation `A(r1, ..., rn)` run at the next instant.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cont {
    pub thread: Name,
    pub args: Vec<Expr>,
}

impl Cont {
    pub fn stop() -> Cont {
        Cont {
            thread: name(STOP),
            args: vec![],
        }
    }
}

/// Programs. `Emit::marked` is the instrumentation mark on kind-5 emissions
/// that have already been received.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Proc {
    Nil,
    Call(Name, Vec<Expr>),
    Emit {
        sig: Name,
        val: Expr,
        marked: bool,
    },
    Present {
        sig: Name,
        var: Name,
        body: Box<Proc>,
        cont: Cont,
    },
    IfSig {
        left: Name,
        right: Name,
        then: Box<Proc>,
        els: Box<Proc>,
    },
    Match {
        scrut: Expr,
        pat: Pattern,
        ty: Option<Type>,
        then: Box<Proc>,
        els: Box<Proc>,
    },
    New {
        name: Name,
        ty: Type,
        body: Box<Proc>,
    },
    Par(Vec<Proc>),
}

/// Supply of fresh names `base#n`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Fresh {
    pub next: u64,
}

impl Fresh {
    pub fn name(&mut self, base: &str) -> Name {
        let base = base
            .split('#')
            .next()
            .filter(|b| !b.is_empty())
            .unwrap_or("n");
        let n = self.next;
        self.next += 1;
        name(&format!("{base}#{n}"))
    }

    /// Makes sure future names do not collide with any `x#n` in `names`.
    pub fn avoid<'a>(&mut self, names: impl IntoIterator<Item = &'a Name>) {
        for n in names {
            if let Some((_, idx)) = n.rsplit_once('#') {
                if let Ok(i) = idx.parse::<u64>() {
                    self.next = self.next.max(i + 1);
                }
            }
        }
    }
}

impl Proc {
    pub fn par(items: Vec<Proc>) -> Proc {
        let mut flat = Vec::new();
        for p in items {
            match p {
                Proc::Par(inner) => flat.extend(inner),
                Proc::Nil => {}
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => Proc::Nil,
            1 => flat.pop().unwrap(),
            _ => Proc::Par(flat),
        }
    }

    pub fn emit(sig: &str, val: Expr) -> Proc {
        Proc::Emit {
            sig: name(sig),
            val,
            marked: false,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<Name> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<Name>) {
        match self {
            Proc::Nil => {}
            Proc::Call(_, args) => args.iter().for_each(|e| e.free_vars(out)),
            Proc::Emit { sig, val, .. } => {
                out.insert(sig.clone());
                val.free_vars(out);
            }
            Proc::Present {
                sig,
                var,
                body,
                cont,
            } => {
                out.insert(sig.clone());
                let mut inner = body.free_vars();
                inner.remove(var);
                out.extend(inner);
                cont.args.iter().for_each(|e| e.free_vars(out));
            }
            Proc::IfSig {
                left,
                right,
                then,
                els,
            } => {
                out.insert(left.clone());
                out.insert(right.clone());
                then.collect_free(out);
                els.collect_free(out);
            }
            Proc::Match {
                scrut,
                pat,
                then,
                els,
                ..
            } => {
                scrut.free_vars(out);
                let mut inner = then.free_vars();
                for v in &pat.vars {
                    inner.remove(v);
                }
                out.extend(inner);
                els.collect_free(out);
            }
            Proc::New { name, body, .. } => {
                let mut inner = body.free_vars();
                inner.remove(name);
                out.extend(inner);
            }
            Proc::Par(ps) => ps.iter().for_each(|p| p.collect_free(out)),
        }
    }

    /// Free names among the variables satisfying `is_signal`. On closed runtime
    /// states every free variable is a signal name.
    pub fn free_names(&self, is_signal: impl Fn(&Name) -> bool) -> BTreeSet<Name> {
        self.free_vars()
            .into_iter()
            .filter(|n| is_signal(n))
            .collect()
    }

    /// Capture-avoiding simultaneous substitution.
    pub fn subst(&self, theta: &BTreeMap<Name, Value>, fresh: &mut Fresh) -> Proc {
        if theta.is_empty() {
            return self.clone();
        }
        match self {
            Proc::Nil => Proc::Nil,
            Proc::Call(a, args) => {
                Proc::Call(a.clone(), args.iter().map(|e| e.subst(theta)).collect())
            }
            Proc::Emit { sig, val, marked } => Proc::Emit {
                sig: subst_name(sig, theta),
                val: val.subst(theta),
                marked: *marked,
            },
            Proc::Present {
                sig,
                var,
                body,
                cont,
            } => {
                let (var, body) = under_binder(std::slice::from_ref(var), body, theta, fresh);
                Proc::Present {
                    sig: subst_name(sig, theta),
                    var: var[0].clone(),
                    body: Box::new(body),
                    cont: Cont {
                        thread: cont.thread.clone(),
                        args: cont.args.iter().map(|e| e.subst(theta)).collect(),
                    },
                }
            }
            Proc::IfSig {
                left,
                right,
                then,
                els,
            } => Proc::IfSig {
                left: subst_name(left, theta),
                right: subst_name(right, theta),
                then: Box::new(then.subst(theta, fresh)),
                els: Box::new(els.subst(theta, fresh)),
            },
            Proc::Match {
                scrut,
                pat,
                ty,
                then,
                els,
            } => {
                let (vars, then) = under_binder(&pat.vars, then, theta, fresh);
                Proc::Match {
                    scrut: scrut.subst(theta),
                    pat: Pattern {
                        ctor: pat.ctor.clone(),
                        vars,
                    },
                    ty: ty.clone(),
                    then: Box::new(then),
                    els: Box::new(els.subst(theta, fresh)),
                }
            }
            Proc::New { name, ty, body } => {
                let (names, body) = under_binder(std::slice::from_ref(name), body, theta, fresh);
                Proc::New {
                    name: names[0].clone(),
                    ty: ty.clone(),
                    body: Box::new(body),
                }
            }
            Proc::Par(ps) => Proc::Par(ps.iter().map(|p| p.subst(theta, fresh)).collect()),
        }
    }

    /// Renames free occurrences according to `map` (names to names).
    pub fn rename(&self, map: &BTreeMap<Name, Name>, fresh: &mut Fresh) -> Proc {
        let theta: BTreeMap<Name, Value> = map
            .iter()
            .map(|(k, v)| (k.clone(), Value::Sig(v.clone())))
            .collect();
        self.subst(&theta, fresh)
    }

    /// Drops instrumentation marks.
    pub fn unmarked(&self) -> Proc {
        self.map_emits(&|_, _, _| false)
    }

    pub fn map_emits(&self, f: &dyn Fn(&Name, &Expr, bool) -> bool) -> Proc {
        match self {
            Proc::Emit { sig, val, marked } => Proc::Emit {
                sig: sig.clone(),
                val: val.clone(),
                marked: f(sig, val, *marked),
            },
            Proc::Present {
                sig,
                var,
                body,
                cont,
            } => Proc::Present {
                sig: sig.clone(),
                var: var.clone(),
                body: Box::new(body.map_emits(f)),
                cont: cont.clone(),
            },
            Proc::IfSig {
                left,
                right,
                then,
                els,
            } => Proc::IfSig {
                left: left.clone(),
                right: right.clone(),
                then: Box::new(then.map_emits(f)),
                els: Box::new(els.map_emits(f)),
            },
            Proc::Match {
                scrut,
                pat,
                ty,
                then,
                els,
            } => Proc::Match {
                scrut: scrut.clone(),
                pat: pat.clone(),
                ty: ty.clone(),
                then: Box::new(then.map_emits(f)),
                els: Box::new(els.map_emits(f)),
            },
            Proc::New { name, ty, body } => Proc::New {
                name: name.clone(),
                ty: ty.clone(),
                body: Box::new(body.map_emits(f)),
            },
            Proc::Par(ps) => Proc::Par(ps.iter().map(|p| p.map_emits(f)).collect()),
            Proc::Nil | Proc::Call(..) => self.clone(),
        }
    }

    pub fn has_marks(&self) -> bool {
        match self {
            Proc::Emit { marked, .. } => *marked,
            Proc::Present { body, .. } | Proc::New { body, .. } => body.has_marks(),
            Proc::IfSig { then, els, .. } | Proc::Match { then, els, .. } => {
                then.has_marks() || els.has_marks()
            }
            Proc::Par(ps) => ps.iter().any(Proc::has_marks),
            Proc::Nil | Proc::Call(..) => false,
        }
    }

    /// Number of AST nodes (programs and expressions).
    pub fn size(&self) -> usize {
        fn esize(e: &Expr) -> usize {
            match e {
                Expr::Var(_) | Expr::Deref(_) => 1,
                Expr::Con(_, a) | Expr::Fun(_, a) => 1 + a.iter().map(esize).sum::<usize>(),
            }
        }
        match self {
            Proc::Nil => 1,
            Proc::Call(_, a) => 1 + a.iter().map(esize).sum::<usize>(),
            Proc::Emit { val, .. } => 1 + esize(val),
            Proc::Present { body, cont, .. } => {
                1 + body.size() + cont.args.iter().map(esize).sum::<usize>()
            }
            Proc::IfSig { then, els, .. } => 1 + then.size() + els.size(),
            Proc::Match {
                scrut, then, els, ..
            } => 1 + esize(scrut) + then.size() + els.size(),
            Proc::New { body, .. } => 1 + body.size(),
            Proc::Par(ps) => ps.iter().map(Proc::size).sum::<usize>() + ps.len().saturating_sub(1),
        }
    }

    /// Alpha-equivalence on programs.
    pub fn alpha_eq(&self, other: &Proc) -> bool {
        alpha(self, other, &mut Vec::new())
    }
}

fn subst_name(n: &Name, theta: &BTreeMap<Name, Value>) -> Name {
    match theta.get(n) {
        Some(Value::Sig(s)) => s.clone(),
        _ => n.clone(),
    }
}

/// Pushes `theta` under binders `vars`, renaming binders that would capture.
fn under_binder(
    vars: &[Name],
    body: &Proc,
    theta: &BTreeMap<Name, Value>,
    fresh: &mut Fresh,
) -> (Vec<Name>, Proc) {
    let mut inner: BTreeMap<Name, Value> = theta
        .iter()
        .filter(|(k, _)| !vars.contains(k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    if inner.is_empty() {
        return (vars.to_vec(), body.clone());
    }
    let body_free = body.free_vars();
    inner.retain(|k, _| body_free.contains(k));
    let mut range = BTreeSet::new();
    inner.values().for_each(|v| v.names(&mut range));
    let mut new_vars = Vec::with_capacity(vars.len());
    for v in vars {
        if range.contains(v) {
            let nv = fresh.name(v);
            inner.insert(v.clone(), Value::Sig(nv.clone()));
            new_vars.push(nv);
        } else {
            new_vars.push(v.clone());
        }
    }
    (new_vars, body.subst(&inner, fresh))
}

fn alpha(a: &Proc, b: &Proc, env: &mut Vec<(Name, Name)>) -> bool {
    fn lookup(env: &[(Name, Name)], x: &Name, y: &Name) -> bool {
        for (l, r) in env.iter().rev() {
            if l == x || r == y {
                return l == x && r == y;
            }
        }
        x == y
    }
    fn ex(env: &[(Name, Name)], a: &Expr, b: &Expr) -> bool {
        match (a, b) {
            (Expr::Var(x), Expr::Var(y)) | (Expr::Deref(x), Expr::Deref(y)) => lookup(env, x, y),
            (Expr::Con(c, xs), Expr::Con(d, ys)) | (Expr::Fun(c, xs), Expr::Fun(d, ys)) => {
                c == d && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| ex(env, x, y))
            }
            _ => false,
        }
    }
    fn with<T>(
        env: &mut Vec<(Name, Name)>,
        pairs: &[(Name, Name)],
        f: impl FnOnce(&mut Vec<(Name, Name)>) -> T,
    ) -> T {
        let n = env.len();
        env.extend(pairs.iter().cloned());
        let r = f(env);
        env.truncate(n);
        r
    }
    match (a, b) {
        (Proc::Nil, Proc::Nil) => true,
        (Proc::Call(x, xs), Proc::Call(y, ys)) => {
            x == y && xs.len() == ys.len() && xs.iter().zip(ys).all(|(p, q)| ex(env, p, q))
        }
        (
            Proc::Emit {
                sig: s1,
                val: v1,
                marked: m1,
            },
            Proc::Emit {
                sig: s2,
                val: v2,
                marked: m2,
            },
        ) => m1 == m2 && lookup(env, s1, s2) && ex(env, v1, v2),
        (
            Proc::Present {
                sig: s1,
                var: x1,
                body: b1,
                cont: k1,
            },
            Proc::Present {
                sig: s2,
                var: x2,
                body: b2,
                cont: k2,
            },
        ) => {
            lookup(env, s1, s2)
                && k1.thread == k2.thread
                && k1.args.len() == k2.args.len()
                && k1.args.iter().zip(&k2.args).all(|(p, q)| ex(env, p, q))
                && with(env, &[(x1.clone(), x2.clone())], |env| alpha(b1, b2, env))
        }
        (
            Proc::IfSig {
                left: l1,
                right: r1,
                then: t1,
                els: e1,
            },
            Proc::IfSig {
                left: l2,
                right: r2,
                then: t2,
                els: e2,
            },
        ) => lookup(env, l1, l2) && lookup(env, r1, r2) && alpha(t1, t2, env) && alpha(e1, e2, env),
        (
            Proc::Match {
                scrut: u1,
                pat: p1,
                then: t1,
                els: e1,
                ..
            },
            Proc::Match {
                scrut: u2,
                pat: p2,
                then: t2,
                els: e2,
                ..
            },
        ) => {
            ex(env, u1, u2)
                && p1.ctor == p2.ctor
                && p1.vars.len() == p2.vars.len()
                && alpha(e1, e2, env)
                && {
                    let pairs: Vec<(Name, Name)> = p1
                        .vars
                        .iter()
                        .cloned()
                        .zip(p2.vars.iter().cloned())
                        .collect();
                    with(env, &pairs, |env| alpha(t1, t2, env))
                }
        }
        (
            Proc::New {
                name: n1,
                ty: ty1,
                body: b1,
            },
            Proc::New {
                name: n2,
                ty: ty2,
                body: b2,
            },
        ) => ty1 == ty2 && with(env, &[(n1.clone(), n2.clone())], |env| alpha(b1, b2, env)),
        (Proc::Par(xs), Proc::Par(ys)) => {
            xs.len() == ys.len() && xs.iter().zip(ys).all(|(p, q)| alpha(p, q, env))
        }
        _ => false,
    }
}

/// `pause.K` is `new s (present s(x) { 0 } else K)` for a neutral kind-2 unit signal.
pub fn desugar_pause(k: Cont) -> Proc {
    Proc::New {
        name: name(PAUSE_SIGNAL),
        ty: Type::pause_signal(),
        body: Box::new(Proc::Present {
            sig: name(PAUSE_SIGNAL),
            var: name("_"),
            body: Box::new(Proc::Nil),
            cont: k,
        }),
    }
}

/// Binder name used by `pause`; it is a keyword, so no continuation can mention it.
pub const PAUSE_SIGNAL: &str = "pause";

/// Recognises the shape produced by [`desugar_pause`].
pub fn as_pause(p: &Proc) -> Option<&Cont> {
    if let Proc::New { name: n, ty, body } = p {
        if let Proc::Present {
            sig,
            body: inner,
            cont,
            ..
        } = &**body
        {
            let mentions = cont.args.iter().any(|a| {
                let mut fv = BTreeSet::new();
                a.free_vars(&mut fv);
                fv.contains(n)
            });
            if sig == n && **inner == Proc::Nil && *ty == Type::pause_signal() && !mentions {
                return Some(cont);
            }
        }
    }
    None
}

/// Source span, byte offsets plus 1-based line and column of the start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Pattern of a function equation; may be nested.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum FunPat {
    Wild,
    Var(Name),
    Con(Name, Vec<FunPat>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clause {
    pub pats: Vec<FunPat>,
    pub body: Expr,
}

/// First-order function `f : (params) -> ret`, defined by equations tried in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunDef {
    pub name: Name,
    pub params: Vec<Type>,
    pub ret: Type,
    pub clauses: Vec<Clause>,
    pub span: Span,
}

/// Thread equation `A(x1: T1, ..., xn: Tn) = P`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThreadDef {
    pub name: Name,
    pub params: Vec<(Name, Type)>,
    pub body: Proc,
    pub span: Span,
}

impl ThreadDef {
    pub fn param_types(&self) -> Vec<Type> {
        self.params.iter().map(|(_, t)| t.clone()).collect()
    }
}

/// Entry program with the types of its free signals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub ctx: Vec<(Name, Type)>,
    pub body: Proc,
    pub span: Span,
}

/// A parsed program unit.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Module {
    pub datas: BTreeMap<Name, DataDecl>,
    /// Declaration order of data types, for printing.
    pub data_order: Vec<Name>,
    pub funs: BTreeMap<Name, FunDef>,
    pub fun_order: Vec<Name>,
    pub threads: BTreeMap<Name, ThreadDef>,
    pub thread_order: Vec<Name>,
    pub entry: Option<Entry>,
}

impl Module {
    /// A module holding only the builtin `Unit` type.
    pub fn empty() -> Module {
        let mut m = Module::default();
        m.datas
            .insert(Arc::from(crate::types::UNIT), DataDecl::unit());
        m
    }

    pub fn thread(&self, a: &str) -> Option<&ThreadDef> {
        self.threads.get(a)
    }

    /// Parameter types of a thread, including the builtin `Stop`.
    pub fn thread_params(&self, a: &str) -> Option<Vec<Type>> {
        if a == STOP {
            return Some(vec![]);
        }
        self.threads.get(a).map(ThreadDef::param_types)
    }

    /// Instantiates thread `a` with values; `None` if unknown or arity mismatch.
    pub fn unfold(&self, a: &str, args: &[Value], fresh: &mut Fresh) -> Option<Proc> {
        if a == STOP {
            return args.is_empty().then_some(Proc::Nil);
        }
        let def = self.threads.get(a)?;
        if def.params.len() != args.len() {
            return None;
        }
        let theta: BTreeMap<Name, Value> = def
            .params
            .iter()
            .map(|(x, _)| x.clone())
            .zip(args.iter().cloned())
            .collect();
        Some(def.body.subst(&theta, fresh))
    }

    pub fn entry_ctx(&self) -> BTreeMap<Name, Type> {
        self.entry
            .as_ref()
            .map(|e| e.ctx.iter().cloned().collect())
            .unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn match_examples() {
        let p = Pattern {
            ctor: name("cons"),
            vars: vec![name("x"), name("l")],
        };
        let v = Value::list([Value::con(
            "req",
            vec![Value::sig("s'"), Value::con("d", vec![])],
        )]);
        let th = match_value(&v, &p).unwrap();
        assert_eq!(th[&name("l")], Value::nil());
        assert!(match_value(&Value::nil(), &p).is_none());
    }

    #[test]
    fn free_names_examples() {
        let p = Proc::New {
            name: name("s"),
            ty: Type::pause_signal(),
            body: Box::new(Proc::emit("s", Expr::Con(name("v"), vec![]))),
        };
        assert!(p.free_vars().is_empty());
        let q = Proc::par(vec![
            Proc::emit("s", Expr::var("t")),
            Proc::Present {
                sig: name("s"),
                var: name("x"),
                body: Box::new(Proc::Nil),
                cont: Cont {
                    thread: name("A"),
                    args: vec![],
                },
            },
        ]);
        let fv: Vec<_> = q.free_vars().into_iter().map(|n| n.to_string()).collect();
        assert_eq!(fv, vec!["s", "t"]);
    }

    #[test]
    fn substitution_avoids_capture() {
        let body = Proc::New {
            name: name("s"),
            ty: Type::pause_signal(),
            body: Box::new(Proc::emit("x", Expr::var("s"))),
        };
        let theta = BTreeMap::from([(name("x"), Value::sig("s"))]);
        let mut fresh = Fresh::default();
        let out = body.subst(&theta, &mut fresh);
        match out {
            Proc::New { name: n, body, .. } => {
                assert_ne!(&*n, "s");
                assert_eq!(*body, Proc::emit("s", Expr::Var(n.clone())));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pause_desugars_to_restricted_present() {
        let inner = desugar_pause(Cont {
            thread: name("A"),
            args: vec![],
        });
        assert!(as_pause(&inner).is_some());
        assert_eq!(inner.size(), 3);
    }
}
