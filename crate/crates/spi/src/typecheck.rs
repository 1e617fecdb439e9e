//! Algorithmic affine usage checker.
//!
//! Every judgment is decided by computing the least context a term needs
//! (its demand) and comparing it with the available context. Expected types
//! flow from thread signatures, constructor fields, function signatures and
//! restriction annotations, so each leaf has a unique least demand.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::parser::{pretty, pretty_expr};
use crate::syntax::{Cont, Expr, FunPat, Module, Name, Proc, Span, STOP};
use crate::types::{
    ctor_fields, ctor_owner, ctx_add, ctx_join, ctx_le, emit_point, receive_point, type_le,
    type_wf, Ctx, CtxError, IllFormed, Type, TypeClass,
};
use crate::usage::{Mult, Point, Usage};

/// Whether an expression is evaluated now, or at the start of the next
/// instant as a continuation argument.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Now,
    Later,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("usage conflict on `{var}` in `{term}`: {left} and {right} cannot be combined")]
    UsageConflict {
        var: Name,
        left: String,
        right: String,
        term: String,
    },
    #[error("`{var}` in `{term}` needs {demand} but only {declared} is available")]
    UsageExceeds {
        var: Name,
        demand: String,
        declared: String,
        term: String,
    },
    #[error("`!{sig}` in `{term}`: kind 5 signals cannot be read at the end of the instant")]
    DerefOnKind5 { sig: Name, term: String },
    #[error("`{sig}` has a usage of kind {kind}, which does not allow {what} (in `{term}`)")]
    NoCapability {
        sig: Name,
        kind: u8,
        what: &'static str,
        term: String,
    },
    #[error("`{term}`: expected {expected}, found {found}")]
    WrongType {
        term: String,
        expected: String,
        found: String,
    },
    #[error("unbound variable `{var}` in `{term}`")]
    Unbound { var: Name, term: String },
    #[error("unknown symbol `{sym}` in `{term}`")]
    UnknownSymbol { sym: Name, term: String },
    #[error("`{sym}` expects {expected} arguments, got {found} (in `{term}`)")]
    Arity {
        sym: Name,
        expected: usize,
        found: usize,
        term: String,
    },
    #[error(transparent)]
    IllFormed(#[from] IllFormed),
    #[error("function `{fun}` must have classical types, found {ty}")]
    NotClassical { fun: Name, ty: String },
    #[error("parameter `{param}` of thread `{thread}` must have a uniform type, found {ty}")]
    NotUniform {
        thread: Name,
        param: Name,
        ty: String,
    },
}

impl TypeError {
    pub fn code(&self) -> &'static str {
        match self {
            TypeError::UsageConflict { .. } => "usage-conflict",
            TypeError::UsageExceeds { .. } => "usage-exceeds",
            TypeError::DerefOnKind5 { .. } => "deref-on-kind5",
            TypeError::NoCapability { .. } => "no-capability",
            TypeError::WrongType { .. } => "wrong-type",
            TypeError::Unbound { .. } => "unbound",
            TypeError::UnknownSymbol { .. } => "unknown-symbol",
            TypeError::Arity { .. } => "arity",
            TypeError::IllFormed(_) => "ill-formed-type",
            TypeError::NotClassical { .. } => "not-classical",
            TypeError::NotUniform { .. } => "not-uniform",
        }
    }

    /// Errors caused by usages rather than by shapes of types.
    pub fn is_usage_class(&self) -> bool {
        matches!(
            self,
            TypeError::UsageConflict { .. }
                | TypeError::UsageExceeds { .. }
                | TypeError::DerefOnKind5 { .. }
                | TypeError::NoCapability { .. }
        )
    }
}

/// A type error located at a declaration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: &'static str,
    pub decl: String,
    pub span: Span,
    pub message: String,
    #[serde(skip)]
    pub error: TypeError,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: in {}: error[{}]: {}",
            self.span, self.decl, self.code, self.message
        )
    }
}

/// A semantic assumption that cannot be checked statically: the named
/// parameter has a set type, so results must not depend on list order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Obligation {
    pub owner: String,
    pub is_thread: bool,
    pub param: usize,
    pub ty: String,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub diagnostics: Vec<Diagnostic>,
    pub obligations: Vec<Obligation>,
}

impl Report {
    pub fn ok(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

const TERM_WIDTH: usize = 160;

fn short(s: String) -> String {
    if s.chars().count() <= TERM_WIDTH {
        s
    } else {
        let cut: String = s.chars().take(TERM_WIDTH).collect();
        format!("{cut} ...")
    }
}

fn pterm(p: &Proc) -> String {
    short(pretty(p))
}

fn eterm(e: &Expr) -> String {
    short(pretty_expr(e))
}

fn lift(err: CtxError, term: String) -> TypeError {
    match err {
        CtxError::Conflict { var, left, right } => TypeError::UsageConflict {
            var,
            left: left.to_string(),
            right: right.to_string(),
            term,
        },
        CtxError::Exceeds {
            var,
            demand,
            declared,
        } => TypeError::UsageExceeds {
            var,
            demand: demand.to_string(),
            declared: declared
                .map(|t| t.to_string())
                .unwrap_or_else(|| "nothing".into()),
            term,
        },
    }
}

fn sig_parts(t: &Type) -> Option<(Usage, &Type)> {
    match t {
        Type::Sig { usage, payload } => Some((*usage, payload)),
        _ => None,
    }
}

fn contains_set(t: &Type) -> bool {
    match t {
        Type::Set { .. } => true,
        Type::List { elem, .. } => contains_set(elem),
        Type::Data { args, .. } => args.iter().any(contains_set),
        Type::Sig { payload, .. } => contains_set(payload),
        Type::Param(_) => false,
    }
}

/// Demand checker over the declarations of a module.
pub struct Checker<'m> {
    pub module: &'m Module,
}

impl<'m> Checker<'m> {
    pub fn new(module: &'m Module) -> Self {
        Checker { module }
    }

    /// Least context typing `e` at `expected`.
    pub fn expr(&self, env: &Ctx, e: &Expr, expected: &Type, mode: Mode) -> Result<Ctx, TypeError> {
        let datas = &self.module.datas;
        match e {
            Expr::Var(x) => {
                let declared = env.get(x).ok_or_else(|| TypeError::Unbound {
                    var: x.clone(),
                    term: eterm(e),
                })?;
                let wrong = || TypeError::WrongType {
                    term: eterm(e),
                    expected: expected.to_string(),
                    found: declared.to_string(),
                };
                match (sig_parts(declared), sig_parts(expected)) {
                    (Some((du, dp)), Some((eu, ep))) => {
                        if dp != ep || du.kind() != eu.kind() {
                            return Err(wrong());
                        }
                        let demand = match mode {
                            Mode::Now => eu,
                            Mode::Later => {
                                let k = eu.kind();
                                let tail = k
                                    .join(eu.now(), eu.later())
                                    .expect("derived sets are lattices");
                                Usage::delayed(k, tail)
                            }
                        };
                        Ok(Ctx::from([(x.clone(), expected.with_usage(demand))]))
                    }
                    (None, None) if declared == expected => {
                        Ok(Ctx::from([(x.clone(), expected.clone())]))
                    }
                    _ => Err(wrong()),
                }
            }
            Expr::Con(c, args) => {
                let fields = ctor_fields(datas, expected, c).ok_or_else(|| {
                    if c.as_ref() == "nil" || c.as_ref() == "cons" || ctor_owner(datas, c).is_some()
                    {
                        TypeError::WrongType {
                            term: eterm(e),
                            expected: expected.to_string(),
                            found: format!("constructor `{c}`"),
                        }
                    } else {
                        TypeError::UnknownSymbol {
                            sym: c.clone(),
                            term: eterm(e),
                        }
                    }
                })?;
                if fields.len() != args.len() {
                    return Err(TypeError::Arity {
                        sym: c.clone(),
                        expected: fields.len(),
                        found: args.len(),
                        term: eterm(e),
                    });
                }
                self.sum_args(env, args, &fields, mode, e)
            }
            Expr::Fun(f, args) => {
                let def = self
                    .module
                    .funs
                    .get(f)
                    .ok_or_else(|| TypeError::UnknownSymbol {
                        sym: f.clone(),
                        term: eterm(e),
                    })?;
                if &def.ret != expected {
                    return Err(TypeError::WrongType {
                        term: eterm(e),
                        expected: expected.to_string(),
                        found: def.ret.to_string(),
                    });
                }
                if def.params.len() != args.len() {
                    return Err(TypeError::Arity {
                        sym: f.clone(),
                        expected: def.params.len(),
                        found: args.len(),
                        term: eterm(e),
                    });
                }
                self.sum_args(env, args, &def.params, mode, e)
            }
            Expr::Deref(s) => {
                if mode == Mode::Now {
                    return Err(TypeError::WrongType {
                        term: eterm(e),
                        expected: expected.to_string(),
                        found: "a dereference outside a continuation".into(),
                    });
                }
                let declared = env.get(s).ok_or_else(|| TypeError::Unbound {
                    var: s.clone(),
                    term: eterm(e),
                })?;
                let wrong = || TypeError::WrongType {
                    term: eterm(e),
                    expected: expected.to_string(),
                    found: format!("dereference of {declared}"),
                };
                let (u, payload) = sig_parts(declared).ok_or_else(wrong)?;
                let k = u.kind().index();
                if k == 5 {
                    return Err(TypeError::DerefOnKind5 {
                        sig: s.clone(),
                        term: eterm(e),
                    });
                }
                let point = match (expected, k) {
                    (
                        Type::Set {
                            mult: Mult::Many,
                            elem,
                        },
                        1,
                    ) if **elem == *payload => Point(Mult::Many, Mult::Zero, Mult::Many),
                    (
                        Type::Set {
                            mult: Mult::One,
                            elem,
                        },
                        3,
                    ) if **elem == *payload => Point(Mult::Many, Mult::Zero, Mult::One),
                    (
                        Type::List {
                            mult: Mult::Many,
                            elem,
                        },
                        2,
                    ) if **elem == *payload => Point(Mult::Zero, Mult::Many, Mult::Many),
                    (
                        Type::List {
                            mult: Mult::One,
                            elem,
                        },
                        4,
                    ) if **elem == *payload => Point(Mult::Zero, Mult::Zero, Mult::One),
                    _ => return Err(wrong()),
                };
                Ok(Ctx::from([(
                    s.clone(),
                    declared.with_usage(Usage::once(u.kind(), point)),
                )]))
            }
        }
    }

    fn sum_args(
        &self,
        env: &Ctx,
        args: &[Expr],
        tys: &[Type],
        mode: Mode,
        whole: &Expr,
    ) -> Result<Ctx, TypeError> {
        let mut acc = Ctx::new();
        for (a, t) in args.iter().zip(tys) {
            let d = self.expr(env, a, t, mode)?;
            acc = ctx_add(&acc, &d).map_err(|err| lift(err, eterm(whole)))?;
        }
        Ok(acc)
    }

    fn call_args(
        &self,
        env: &Ctx,
        thread: &Name,
        args: &[Expr],
        mode: Mode,
        term: &dyn Fn() -> String,
    ) -> Result<Ctx, TypeError> {
        let params = self
            .module
            .thread_params(thread)
            .ok_or_else(|| TypeError::UnknownSymbol {
                sym: thread.clone(),
                term: term(),
            })?;
        if params.len() != args.len() {
            return Err(TypeError::Arity {
                sym: thread.clone(),
                expected: params.len(),
                found: args.len(),
                term: term(),
            });
        }
        let mut acc = Ctx::new();
        for (a, t) in args.iter().zip(&params) {
            let d = self.expr(env, a, t, mode)?;
            acc = ctx_add(&acc, &d).map_err(|err| lift(err, term()))?;
        }
        Ok(acc)
    }

    /// Least context for the continuation `[A(r)]`.
    pub fn cont(&self, env: &Ctx, k: &Cont) -> Result<Ctx, TypeError> {
        let term = || {
            short(format!(
                "{}({})",
                k.thread,
                k.args
                    .iter()
                    .map(pretty_expr)
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        };
        self.call_args(env, &k.thread, &k.args, Mode::Later, &term)
    }

    fn sig_of<'a>(&self, env: &'a Ctx, s: &Name, p: &Proc) -> Result<(Usage, &'a Type), TypeError> {
        let t = env.get(s).ok_or_else(|| TypeError::Unbound {
            var: s.clone(),
            term: pterm(p),
        })?;
        sig_parts(t).ok_or_else(|| TypeError::WrongType {
            term: pterm(p),
            expected: "a signal".into(),
            found: t.to_string(),
        })
    }

    /// Removes a bound variable from a demand after checking it fits its type.
    fn discharge(&self, mut d: Ctx, x: &Name, ty: &Type, p: &Proc) -> Result<Ctx, TypeError> {
        if let Some(need) = d.remove(x) {
            if !type_le(&need, ty) {
                return Err(TypeError::UsageExceeds {
                    var: x.clone(),
                    demand: need.to_string(),
                    declared: ty.to_string(),
                    term: pterm(p),
                });
            }
        }
        Ok(d)
    }

    /// Least context typing the program `p`.
    pub fn proc(&self, env: &Ctx, p: &Proc) -> Result<Ctx, TypeError> {
        match p {
            Proc::Nil => Ok(Ctx::new()),
            Proc::Call(a, args) => self.call_args(env, a, args, Mode::Now, &|| pterm(p)),
            Proc::Emit { sig, val, marked } => {
                let (u, payload) = self.sig_of(env, sig, p)?;
                let k = u.kind();
                if *marked {
                    if k.index() != 5 {
                        return Err(TypeError::NoCapability {
                            sig: sig.clone(),
                            kind: k.index(),
                            what: "an instrumented emission",
                            term: pterm(p),
                        });
                    }
                    let ds = Usage::once(k, k.main());
                    return Ok(Ctx::from([(sig.clone(), Type::sig(ds, payload.clone()))]));
                }
                let ds = Ctx::from([(
                    sig.clone(),
                    Type::sig(Usage::once(k, emit_point(k)), payload.clone()),
                )]);
                let dv = self.expr(env, val, payload, Mode::Now)?;
                ctx_add(&ds, &dv).map_err(|e| lift(e, pterm(p)))
            }
            Proc::Present {
                sig,
                var,
                body,
                cont,
            } => {
                let (u, payload) = self.sig_of(env, sig, p)?;
                let k = u.kind();
                let rp = receive_point(k).ok_or_else(|| TypeError::NoCapability {
                    sig: sig.clone(),
                    kind: k.index(),
                    what: "reception during the instant",
                    term: pterm(p),
                })?;
                let ds = Ctx::from([(sig.clone(), Type::sig(Usage::once(k, rp), payload.clone()))]);
                let mut inner = env.clone();
                inner.insert(var.clone(), payload.clone());
                let db = self.proc(&inner, body)?;
                let db = self.discharge(db, var, payload, p)?;
                let now = ctx_add(&ds, &db).map_err(|e| lift(e, pterm(p)))?;
                let dk = self.cont(env, cont)?;
                ctx_join(&now, &dk).map_err(|e| lift(e, pterm(p)))
            }
            Proc::IfSig {
                left,
                right,
                then,
                els,
            } => {
                let mut d = Ctx::new();
                for s in [left, right] {
                    let (u, payload) = self.sig_of(env, s, p)?;
                    d.insert(
                        s.clone(),
                        Type::sig(Usage::neutral(u.kind()), payload.clone()),
                    );
                }
                let d1 = self.proc(env, then)?;
                let d2 = self.proc(env, els)?;
                let j = ctx_join(&d1, &d2).map_err(|e| lift(e, pterm(p)))?;
                ctx_join(&j, &d).map_err(|e| lift(e, pterm(p)))
            }
            Proc::Match {
                scrut,
                pat,
                ty,
                then,
                els,
            } => {
                let t = match ty {
                    Some(t) => t.clone(),
                    None => self.synth(env, scrut)?,
                };
                let du = self.expr(env, scrut, &t, Mode::Now)?;
                let fields = ctor_fields(&self.module.datas, &t, &pat.ctor).ok_or_else(|| {
                    TypeError::WrongType {
                        term: pterm(p),
                        expected: t.to_string(),
                        found: format!("pattern `{}`", pat.ctor),
                    }
                })?;
                if fields.len() != pat.vars.len() {
                    return Err(TypeError::Arity {
                        sym: pat.ctor.clone(),
                        expected: fields.len(),
                        found: pat.vars.len(),
                        term: pterm(p),
                    });
                }
                let mut inner = env.clone();
                for (x, ft) in pat.vars.iter().zip(&fields) {
                    inner.insert(x.clone(), ft.clone());
                }
                let mut d1 = self.proc(&inner, then)?;
                for (x, ft) in pat.vars.iter().zip(&fields) {
                    d1 = self.discharge(d1, x, ft, p)?;
                }
                let d2 = self.proc(env, els)?;
                let now = ctx_add(&du, &d1).map_err(|e| lift(e, pterm(p)))?;
                ctx_join(&now, &d2).map_err(|e| lift(e, pterm(p)))
            }
            Proc::New { name, ty, body } => {
                if sig_parts(ty).is_none() {
                    return Err(TypeError::WrongType {
                        term: pterm(p),
                        expected: "a signal type".into(),
                        found: ty.to_string(),
                    });
                }
                type_wf(ty, &self.module.datas)?;
                let mut inner = env.clone();
                inner.insert(name.clone(), ty.clone());
                let d = self.proc(&inner, body)?;
                self.discharge(d, name, ty, p)
            }
            Proc::Par(ps) => {
                let mut acc = Ctx::new();
                for q in ps {
                    let d = self.proc(env, q)?;
                    acc = ctx_add(&acc, &d).map_err(|e| lift(e, pterm(p)))?;
                }
                Ok(acc)
            }
        }
    }

    /// Type of a match scrutinee that carries no annotation.
    pub fn synth(&self, env: &Ctx, e: &Expr) -> Result<Type, TypeError> {
        match e {
            Expr::Var(x) => env.get(x).cloned().ok_or_else(|| TypeError::Unbound {
                var: x.clone(),
                term: eterm(e),
            }),
            Expr::Fun(f, _) => self
                .module
                .funs
                .get(f)
                .map(|d| d.ret.clone())
                .ok_or_else(|| TypeError::UnknownSymbol {
                    sym: f.clone(),
                    term: eterm(e),
                }),
            Expr::Con(c, _) => match ctor_owner(&self.module.datas, c) {
                Some(d) if d.params.is_empty() => Ok(Type::Data {
                    name: d.name.clone(),
                    mult: Mult::Many,
                    args: vec![],
                }),
                _ => Err(TypeError::WrongType {
                    term: eterm(e),
                    expected: "a scrutinee whose type can be inferred".into(),
                    found: format!("constructor `{c}`"),
                }),
            },
            Expr::Deref(_) => Err(TypeError::WrongType {
                term: eterm(e),
                expected: "an expression".into(),
                found: "a dereference".into(),
            }),
        }
    }

    /// `env |- p`.
    pub fn check(&self, env: &Ctx, p: &Proc) -> Result<(), TypeError> {
        let d = self.proc(env, p)?;
        ctx_le(&d, env).map_err(|e| lift(e, pterm(p)))
    }

    fn check_fun(&self, f: &crate::syntax::FunDef) -> Result<(), TypeError> {
        for t in f.params.iter().chain(std::iter::once(&f.ret)) {
            if type_wf(t, &self.module.datas)? != TypeClass::Classical {
                return Err(TypeError::NotClassical {
                    fun: f.name.clone(),
                    ty: t.to_string(),
                });
            }
        }
        for c in &f.clauses {
            let mut env = Ctx::new();
            for (p, t) in c.pats.iter().zip(&f.params) {
                self.bind_pat(p, t, &mut env)?;
            }
            let d = self.expr(&env, &c.body, &f.ret, Mode::Now)?;
            ctx_le(&d, &env).map_err(|e| lift(e, eterm(&c.body)))?;
        }
        Ok(())
    }

    fn bind_pat(&self, p: &FunPat, t: &Type, env: &mut Ctx) -> Result<(), TypeError> {
        match p {
            FunPat::Wild => Ok(()),
            FunPat::Var(x) => {
                env.insert(x.clone(), t.clone());
                Ok(())
            }
            FunPat::Con(c, ps) => {
                let fields =
                    ctor_fields(&self.module.datas, t, c).ok_or_else(|| TypeError::WrongType {
                        term: format!("pattern {c}"),
                        expected: t.to_string(),
                        found: format!("constructor `{c}`"),
                    })?;
                if fields.len() != ps.len() {
                    return Err(TypeError::Arity {
                        sym: c.clone(),
                        expected: fields.len(),
                        found: ps.len(),
                        term: format!("pattern {c}"),
                    });
                }
                for (q, ft) in ps.iter().zip(&fields) {
                    self.bind_pat(q, ft, env)?;
                }
                Ok(())
            }
        }
    }

    fn check_thread(&self, t: &crate::syntax::ThreadDef) -> Result<(), TypeError> {
        for (x, ty) in &t.params {
            if type_wf(ty, &self.module.datas)? == TypeClass::NonUniform {
                return Err(TypeError::NotUniform {
                    thread: t.name.clone(),
                    param: x.clone(),
                    ty: ty.to_string(),
                });
            }
        }
        let env: Ctx = t.params.iter().cloned().collect();
        self.check(&env, &t.body)
    }
}

/// Fills in the type annotation of every match whose scrutinee type can be
/// determined, in the typing environment `env`.
pub fn annotate(m: &Module, env: &Ctx, p: &Proc) -> Proc {
    let c = Checker::new(m);
    match p {
        Proc::Match {
            scrut,
            pat,
            ty,
            then,
            els,
        } => {
            let t = ty.clone().or_else(|| c.synth(env, scrut).ok());
            let mut inner = env.clone();
            if let Some(fields) = t.as_ref().and_then(|t| ctor_fields(&m.datas, t, &pat.ctor)) {
                for (x, ft) in pat.vars.iter().zip(fields) {
                    inner.insert(x.clone(), ft);
                }
            }
            Proc::Match {
                scrut: scrut.clone(),
                pat: pat.clone(),
                ty: t,
                then: Box::new(annotate(m, &inner, then)),
                els: Box::new(annotate(m, env, els)),
            }
        }
        Proc::Present {
            sig,
            var,
            body,
            cont,
        } => {
            let mut inner = env.clone();
            if let Some(payload) = env.get(sig).and_then(|t| t.payload()) {
                inner.insert(var.clone(), payload.clone());
            }
            Proc::Present {
                sig: sig.clone(),
                var: var.clone(),
                body: Box::new(annotate(m, &inner, body)),
                cont: cont.clone(),
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
            then: Box::new(annotate(m, env, then)),
            els: Box::new(annotate(m, env, els)),
        },
        Proc::New { name, ty, body } => {
            let mut inner = env.clone();
            inner.insert(name.clone(), ty.clone());
            Proc::New {
                name: name.clone(),
                ty: ty.clone(),
                body: Box::new(annotate(m, &inner, body)),
            }
        }
        Proc::Par(ps) => Proc::Par(ps.iter().map(|q| annotate(m, env, q)).collect()),
        Proc::Nil | Proc::Call(..) | Proc::Emit { .. } => p.clone(),
    }
}

/// Annotates every thread body and the entry program.
pub fn elaborate(m: &Module) -> Module {
    let mut out = m.clone();
    for t in out.threads.values_mut() {
        let env: Ctx = t.params.iter().cloned().collect();
        t.body = annotate(m, &env, &t.body);
    }
    if let Some(e) = out.entry.as_mut() {
        let env: Ctx = e.ctx.iter().cloned().collect();
        e.body = annotate(m, &env, &e.body);
    }
    out
}

/// Checks every declaration of `m` (which should be elaborated) and collects
/// the permutation-invariance obligations of set-typed parameters.
pub fn check_module(m: &Module) -> Report {
    let c = Checker::new(m);
    let mut report = Report::default();
    let mut push = |decl: String, span: Span, error: TypeError| {
        report.diagnostics.push(Diagnostic {
            code: error.code(),
            decl,
            span,
            message: error.to_string(),
            error,
        });
    };
    for f in m.fun_order.iter().filter_map(|n| m.funs.get(n)) {
        if let Err(e) = c.check_fun(f) {
            push(format!("fun {}", f.name), f.span, e);
        }
    }
    for t in m.thread_order.iter().filter_map(|n| m.threads.get(n)) {
        if let Err(e) = c.check_thread(t) {
            push(format!("thread {}", t.name), t.span, e);
        }
    }
    if let Some(e) = &m.entry {
        let env: Ctx = e.ctx.iter().cloned().collect();
        let res = e
            .ctx
            .iter()
            .try_for_each(|(_, t)| type_wf(t, &m.datas).map(|_| ()).map_err(TypeError::from))
            .and_then(|_| c.check(&env, &e.body));
        if let Err(err) = res {
            push("main".into(), e.span, err);
        }
    }
    for f in m.fun_order.iter().filter_map(|n| m.funs.get(n)) {
        for (i, t) in f.params.iter().enumerate() {
            if contains_set(t) {
                report.obligations.push(Obligation {
                    owner: f.name.to_string(),
                    is_thread: false,
                    param: i,
                    ty: t.to_string(),
                });
            }
        }
    }
    for t in m.thread_order.iter().filter_map(|n| m.threads.get(n)) {
        for (i, (_, ty)) in t.params.iter().enumerate() {
            if contains_set(ty) {
                report.obligations.push(Obligation {
                    owner: t.name.to_string(),
                    is_thread: true,
                    param: i,
                    ty: ty.to_string(),
                });
            }
        }
    }
    report
}

/// Parses-level convenience: elaborate then check.
pub fn typecheck(m: &Module) -> (Module, Report) {
    let e = elaborate(m);
    let r = check_module(&e);
    (e, r)
}

/// `env |- p` for a runtime program.
pub fn check_proc(m: &Module, env: &Ctx, p: &Proc) -> Result<(), TypeError> {
    Checker::new(m).check(env, p)
}

/// Least context of a program, if defined.
pub fn demand(m: &Module, env: &Ctx, p: &Proc) -> Result<Ctx, TypeError> {
    Checker::new(m).proc(env, p)
}

/// Names of threads reachable from the entry program.
pub fn reachable_threads(m: &Module) -> BTreeSet<Name> {
    fn calls(p: &Proc, out: &mut Vec<Name>) {
        match p {
            Proc::Call(a, _) => out.push(a.clone()),
            Proc::Present { body, cont, .. } => {
                out.push(cont.thread.clone());
                calls(body, out);
            }
            Proc::IfSig { then, els, .. } | Proc::Match { then, els, .. } => {
                calls(then, out);
                calls(els, out);
            }
            Proc::New { body, .. } => calls(body, out),
            Proc::Par(ps) => ps.iter().for_each(|q| calls(q, out)),
            Proc::Nil | Proc::Emit { .. } => {}
        }
    }
    let mut seen = BTreeSet::new();
    let mut todo = Vec::new();
    if let Some(e) = &m.entry {
        calls(&e.body, &mut todo);
    }
    while let Some(a) = todo.pop() {
        if &*a == STOP || !seen.insert(a.clone()) {
            continue;
        }
        if let Some(t) = m.threads.get(&a) {
            calls(&t.body, &mut todo);
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_module;
    use crate::syntax::name;

    fn check_src(src: &str) -> Report {
        let m = parse_module(src).unwrap_or_else(|e| panic!("{e}"));
        typecheck(&m).1
    }

    #[test]
    fn double_affine_emission_conflicts() {
        let r = check_src("type D = a | b; main(s: Sig<k5:(1,1,0)w>(D)) = emit s a | emit s b;");
        assert_eq!(r.diagnostics.len(), 1);
        let e = &r.diagnostics[0].error;
        assert!(
            matches!(e, TypeError::UsageConflict { var, .. } if &**var == "s"),
            "{e}"
        );
    }

    #[test]
    fn kind5_deref_rejected() {
        let r = check_src(
            "type D = a; thread A(l: List<1>(D)) = 0;
             main(s: Sig<k5:(1,1,0)w>(D)) = present s(x) { 0 } else A(!s);",
        );
        assert!(matches!(
            r.diagnostics[0].error,
            TypeError::DerefOnKind5 { .. }
        ));
    }

    #[test]
    fn kind4_split_between_deref_and_tail() {
        let r = check_src(
            "type D = a;
             thread A(l: List<1>(D), s: Sig<k4:(0,0,1)w>(D)) = pause.A(!s, s);
             main(s: Sig<k4:(0,0,1)w>(D)) = A([], s);",
        );
        assert!(r.ok(), "{:?}", r.diagnostics);
    }

    #[test]
    fn var_leaf_demand() {
        let m = parse_module("type D = a;").unwrap();
        let c = Checker::new(&m);
        let t: Type = Type::sig("k5:(1,0,0)(0,0,0)w".parse().unwrap(), Type::data("D"));
        let env = Ctx::from([(
            name("s"),
            Type::sig("k5:(1,1,0)w".parse().unwrap(), Type::data("D")),
        )]);
        let d = c.expr(&env, &Expr::var("s"), &t, Mode::Now).unwrap();
        assert_eq!(d[&name("s")], t);
    }
}
