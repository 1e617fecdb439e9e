//! Concrete syntax: lexer, recursive-descent parser and pretty-printer.
//!
//! ```text
//! // comment
//! type D = d0 | d1;
//! type Req(a, b) = req(a, b);
//! alias S1 = Sig<k5:(1,0,0)w>(D);
//! fun f(D) -> D { (d0) => d1; (x) => x; }
//! thread Server(s: Sig<k3:(w,0,1)w>(Req<1>(S1, D))) = pause.Handle(s, !s);
//! main(s: ..., t: ...) = Server(s) | Client(d0, s, t);
//! ```
//!
//! Programs: `0`, `A(e, ..)`, `emit s e`, `emitted s e` (instrumented),
//! `present s(x) { P } else K`, `match s = t { P } else { Q }`,
//! `match e with c(x, y) { P } else { Q }`, `new s: T, t: T in P`,
//! `pause.K`, `P | Q` and `( P )`. A continuation `K` is `0` (the builtin
//! `Stop()`) or `A(r, ..)` where arguments may dereference with `!s`.
//! Lists may be written `[e1; e2]`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::syntax::{
    as_pause, desugar_pause, name, Clause, Cont, Entry, Expr, FunDef, FunPat, Module, Name,
    Pattern, Proc, Span, ThreadDef, Value, STOP,
};
use crate::types::{CtorDecl, DataDecl, Type, UNIT};
use crate::usage::{Mult, Usage};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub offset: usize,
    pub message: String,
    /// Tokens that would have been accepted, when known.
    pub expected: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(String),
    Sym(&'static str),
    Eof,
}

impl Tok {
    fn text(&self) -> String {
        match self {
            Tok::Ident(s) | Tok::Num(s) => s.clone(),
            Tok::Sym(s) => s.to_string(),
            Tok::Eof => "end of input".into(),
        }
    }
}

const SYMS: [&str; 19] = [
    "->", "=>", "(", ")", "{", "}", "[", "]", "<", ">", ",", ";", ":", "|", "=", ".", "!", "*", "+",
];

const KEYWORDS: [&str; 15] = [
    "emit", "emitted", "present", "else", "match", "with", "new", "in", "pause", "type", "alias",
    "fun", "thread", "main", "Sig",
];

fn ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\'' || c == '#'
}

fn lex(src: &str) -> Result<Vec<(Tok, Span)>, ParseError> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize| {
        if chars[*i].1 == '\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
        *i += 1;
    };
    while i < chars.len() {
        let (off, c) = chars[i];
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col);
            continue;
        }
        if c == '/' && chars.get(i + 1).map(|p| p.1) == Some('/') {
            while i < chars.len() && chars[i].1 != '\n' {
                advance(&mut i, &mut line, &mut col);
            }
            continue;
        }
        let (sl, sc) = (line, col);
        let tok = if ident_start(c) {
            let mut s = String::new();
            while i < chars.len() && ident_char(chars[i].1) {
                s.push(chars[i].1);
                advance(&mut i, &mut line, &mut col);
            }
            Tok::Ident(s)
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while i < chars.len() && chars[i].1.is_ascii_digit() {
                s.push(chars[i].1);
                advance(&mut i, &mut line, &mut col);
            }
            Tok::Num(s)
        } else if let Some(sym) = SYMS.iter().find(|s| src[off..].starts_with(**s)) {
            for _ in 0..sym.chars().count() {
                advance(&mut i, &mut line, &mut col);
            }
            Tok::Sym(sym)
        } else {
            return Err(ParseError {
                line,
                col,
                offset: off,
                message: format!("unexpected character `{c}`"),
                expected: vec![],
            });
        };
        let end = chars.get(i).map(|p| p.0).unwrap_or(src.len());
        out.push((
            tok,
            Span {
                start: off,
                end,
                line: sl,
                col: sc,
            },
        ));
    }
    out.push((
        Tok::Eof,
        Span {
            start: src.len(),
            end: src.len(),
            line,
            col,
        },
    ));
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, Span)>,
    pos: usize,
    m: Module,
    aliases: BTreeMap<Name, Type>,
    scope: Vec<Name>,
    /// Thread calls, checked once every equation has been read.
    calls: Vec<(Name, usize, Span)>,
    /// Functions currently being defined: name, arity.
    fun_sigs: BTreeMap<Name, usize>,
}

type PResult<T> = Result<T, ParseError>;

impl Parser {
    fn new(src: &str) -> PResult<Self> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
            m: Module::empty(),
            aliases: BTreeMap::new(),
            scope: Vec::new(),
            calls: Vec::new(),
            fun_sigs: BTreeMap::new(),
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].0
    }

    fn span(&self) -> Span {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err_at(&self, span: Span, message: String, expected: &[&str]) -> ParseError {
        ParseError {
            line: span.line,
            col: span.col,
            offset: span.start,
            message,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn expected(&self, what: &[&str]) -> ParseError {
        let found = self.peek().text();
        self.err_at(
            self.span(),
            format!("expected {}, found `{found}`", what.join(" or ")),
            what,
        )
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn sym(&mut self, s: &'static str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.expected(&[s]))
        }
    }

    fn kw(&mut self, k: &'static str) -> PResult<()> {
        if self.is_kw(k) {
            self.bump();
            Ok(())
        } else {
            Err(self.expected(&[k]))
        }
    }

    fn ident(&mut self) -> PResult<Name> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok(name(&s))
            }
            _ => Err(self.expected(&["identifier"])),
        }
    }

    fn comma_list<T>(
        &mut self,
        close: &'static str,
        mut item: impl FnMut(&mut Self) -> PResult<T>,
    ) -> PResult<Vec<T>> {
        let mut out = Vec::new();
        if self.eat_sym(close) {
            return Ok(out);
        }
        loop {
            out.push(item(self)?);
            if self.eat_sym(close) {
                return Ok(out);
            }
            if !self.eat_sym(",") {
                return Err(self.expected(&[",", close]));
            }
        }
    }

    fn is_ctor(&self, c: &str) -> Option<usize> {
        match c {
            "nil" => return Some(0),
            "cons" => return Some(2),
            _ => {}
        }
        self.m
            .datas
            .values()
            .flat_map(|d| d.ctors.iter())
            .find(|k| &*k.name == c)
            .map(|k| k.fields.len())
    }

    fn fun_arity(&self, f: &str) -> Option<usize> {
        self.fun_sigs.get(f).copied()
    }

    // ---- declarations ----

    fn module(mut self) -> PResult<Module> {
        while *self.peek() != Tok::Eof {
            let start = self.span();
            match self.peek().clone() {
                Tok::Ident(k) if k == "type" => self.data_decl()?,
                Tok::Ident(k) if k == "alias" => self.alias_decl()?,
                Tok::Ident(k) if k == "fun" => self.fun_decl(start)?,
                Tok::Ident(k) if k == "thread" => self.thread_decl(start)?,
                Tok::Ident(k) if k == "main" => self.main_decl(start)?,
                _ => return Err(self.expected(&["type", "alias", "fun", "thread", "main"])),
            }
        }
        for (a, arity, span) in std::mem::take(&mut self.calls) {
            match self.m.thread_params(&a) {
                None => return Err(self.err_at(span, format!("unknown thread `{a}`"), &[])),
                Some(ps) if ps.len() != arity => {
                    return Err(self.err_at(
                        span,
                        format!("thread `{a}` expects {} arguments, got {arity}", ps.len()),
                        &[],
                    ))
                }
                _ => {}
            }
        }
        Ok(self.m)
    }

    fn check_fresh_type_name(&self, n: &Name, span: Span) -> PResult<()> {
        let builtin = ["List", "Set", "Sig", UNIT];
        if self.m.datas.contains_key(n) || self.aliases.contains_key(n) || builtin.contains(&&**n) {
            return Err(self.err_at(span, format!("type `{n}` is already defined"), &[]));
        }
        Ok(())
    }

    fn data_decl(&mut self) -> PResult<()> {
        self.kw("type")?;
        let span = self.span();
        let tname = self.ident()?;
        self.check_fresh_type_name(&tname, span)?;
        let params = if self.eat_sym("(") {
            self.comma_list(")", |p| p.ident())?
        } else {
            vec![]
        };
        self.sym("=")?;
        // Register first so that fields may refer to the type itself.
        self.m.datas.insert(
            tname.clone(),
            DataDecl {
                name: tname.clone(),
                params: params.clone(),
                ctors: vec![],
                builtin: false,
            },
        );
        let mut ctors: Vec<CtorDecl> = Vec::new();
        loop {
            let cspan = self.span();
            let cname = self.ident()?;
            if self.is_ctor(&cname).is_some() || ctors.iter().any(|c| c.name == cname) {
                return Err(self.err_at(
                    cspan,
                    format!("constructor `{cname}` is already defined"),
                    &[],
                ));
            }
            let fields = if self.eat_sym("(") {
                self.comma_list(")", |p| p.ty(&params))?
            } else {
                vec![]
            };
            ctors.push(CtorDecl {
                name: cname,
                fields,
            });
            if !self.eat_sym("|") {
                break;
            }
        }
        self.sym(";")?;
        self.m.datas.get_mut(&tname).unwrap().ctors = ctors;
        self.m.data_order.push(tname);
        Ok(())
    }

    fn alias_decl(&mut self) -> PResult<()> {
        self.kw("alias")?;
        let span = self.span();
        let n = self.ident()?;
        self.check_fresh_type_name(&n, span)?;
        self.sym("=")?;
        let t = self.ty(&[])?;
        self.sym(";")?;
        self.aliases.insert(n, t);
        Ok(())
    }

    fn mult_arg(&mut self) -> PResult<Mult> {
        let m = match self.bump() {
            Tok::Num(n) if n == "1" => Mult::One,
            Tok::Ident(w) if w == "w" => Mult::Many,
            _ => {
                self.pos -= 1;
                return Err(self.expected(&["1", "w"]));
            }
        };
        self.sym(">")?;
        Ok(m)
    }

    fn ty(&mut self, params: &[Name]) -> PResult<Type> {
        let span = self.span();
        let head = match self.bump() {
            Tok::Ident(s) => s,
            _ => {
                self.pos -= 1;
                return Err(self.expected(&["type"]));
            }
        };
        match head.as_str() {
            "Sig" => {
                self.sym("<")?;
                let ustart = self.span();
                let mut text = String::new();
                while !self.is_sym(">") {
                    if *self.peek() == Tok::Eof {
                        return Err(self.expected(&[">"]));
                    }
                    text.push_str(&self.bump().text());
                }
                let usage: Usage = text
                    .parse()
                    .map_err(|e| self.err_at(ustart, format!("{e}"), &[]))?;
                self.sym(">")?;
                self.sym("(")?;
                let payload = self.ty(params)?;
                self.sym(")")?;
                Ok(Type::sig(usage, payload))
            }
            "List" | "Set" => {
                let mult = if self.eat_sym("<") {
                    self.mult_arg()?
                } else {
                    Mult::Many
                };
                self.sym("(")?;
                let elem = self.ty(params)?;
                self.sym(")")?;
                Ok(if head == "List" {
                    Type::list(mult, elem)
                } else {
                    Type::set(mult, elem)
                })
            }
            _ => {
                let n = name(&head);
                if params.contains(&n) {
                    return Ok(Type::Param(n));
                }
                if let Some(t) = self.aliases.get(&n) {
                    return Ok(t.clone());
                }
                let Some(decl) = self.m.datas.get(&n) else {
                    return Err(self.err_at(span, format!("unknown type `{head}`"), &[]));
                };
                let arity = decl.params.len();
                let mult = if self.eat_sym("<") {
                    self.mult_arg()?
                } else {
                    Mult::Many
                };
                let args = if self.eat_sym("(") {
                    self.comma_list(")", |p| p.ty(params))?
                } else {
                    vec![]
                };
                if args.len() != arity {
                    return Err(self.err_at(
                        span,
                        format!(
                            "type `{head}` expects {arity} arguments, got {}",
                            args.len()
                        ),
                        &[],
                    ));
                }
                Ok(Type::Data {
                    name: n,
                    mult,
                    args,
                })
            }
        }
    }

    fn fun_decl(&mut self, start: Span) -> PResult<()> {
        self.kw("fun")?;
        let span = self.span();
        let fname = self.ident()?;
        if self.fun_sigs.contains_key(&fname) || self.is_ctor(&fname).is_some() {
            return Err(self.err_at(span, format!("`{fname}` is already defined"), &[]));
        }
        self.sym("(")?;
        let params = self.comma_list(")", |p| p.ty(&[]))?;
        self.sym("->")?;
        let ret = self.ty(&[])?;
        self.fun_sigs.insert(fname.clone(), params.len());
        self.sym("{")?;
        let mut clauses = Vec::new();
        while !self.eat_sym("}") {
            let cspan = self.span();
            self.sym("(")?;
            let pats = self.comma_list(")", |p| p.fun_pat())?;
            if pats.len() != params.len() {
                return Err(self.err_at(
                    cspan,
                    format!(
                        "equation has {} patterns, `{fname}` takes {}",
                        pats.len(),
                        params.len()
                    ),
                    &[],
                ));
            }
            let mut bound = BTreeSet::new();
            for p in &pats {
                pat_vars(p, &mut bound);
            }
            self.sym("=>")?;
            let saved = std::mem::replace(&mut self.scope, bound.into_iter().collect());
            let body = self.expr(false)?;
            self.scope = saved;
            self.sym(";")?;
            clauses.push(Clause { pats, body });
        }
        let span = self.finish_span(start);
        self.m.funs.insert(
            fname.clone(),
            FunDef {
                name: fname.clone(),
                params,
                ret,
                clauses,
                span,
            },
        );
        self.m.fun_order.push(fname);
        Ok(())
    }

    fn fun_pat(&mut self) -> PResult<FunPat> {
        let span = self.span();
        if self.eat_sym("[") {
            self.sym("]")?;
            return Ok(FunPat::Con(name("nil"), vec![]));
        }
        let id = match self.bump() {
            Tok::Ident(s) => name(&s),
            _ => {
                self.pos -= 1;
                return Err(self.expected(&["pattern"]));
            }
        };
        if &*id == "_" {
            return Ok(FunPat::Wild);
        }
        match self.is_ctor(&id) {
            Some(arity) => {
                let args = if self.eat_sym("(") {
                    self.comma_list(")", |p| p.fun_pat())?
                } else {
                    vec![]
                };
                if args.len() != arity {
                    return Err(self.err_at(
                        span,
                        format!(
                            "constructor `{id}` expects {arity} arguments, got {}",
                            args.len()
                        ),
                        &[],
                    ));
                }
                Ok(FunPat::Con(id, args))
            }
            None if self.is_sym("(") => {
                Err(self.err_at(span, format!("unknown constructor `{id}`"), &[]))
            }
            None => Ok(FunPat::Var(id)),
        }
    }

    fn params(&mut self) -> PResult<Vec<(Name, Type)>> {
        self.sym("(")?;
        let ps = self.comma_list(")", |p| {
            let x = p.ident()?;
            p.sym(":")?;
            Ok((x, p.ty(&[])?))
        })?;
        let mut seen = BTreeSet::new();
        for (x, _) in &ps {
            if !seen.insert(x.clone()) {
                return Err(self.err_at(self.span(), format!("duplicate parameter `{x}`"), &[]));
            }
        }
        Ok(ps)
    }

    fn thread_decl(&mut self, start: Span) -> PResult<()> {
        self.kw("thread")?;
        let span = self.span();
        let a = self.ident()?;
        if self.m.threads.contains_key(&a) || &*a == STOP {
            return Err(self.err_at(span, format!("duplicate definition of thread `{a}`"), &[]));
        }
        let params = self.params()?;
        self.sym("=")?;
        self.scope = params.iter().map(|(x, _)| x.clone()).collect();
        let body = self.proc()?;
        self.scope.clear();
        self.sym(";")?;
        let span = self.finish_span(start);
        self.m.threads.insert(
            a.clone(),
            ThreadDef {
                name: a.clone(),
                params,
                body,
                span,
            },
        );
        self.m.thread_order.push(a);
        Ok(())
    }

    fn main_decl(&mut self, start: Span) -> PResult<()> {
        self.kw("main")?;
        if self.m.entry.is_some() {
            return Err(self.err_at(start, "duplicate `main`".into(), &[]));
        }
        let ctx = self.params()?;
        self.sym("=")?;
        self.scope = ctx.iter().map(|(x, _)| x.clone()).collect();
        let body = self.proc()?;
        self.scope.clear();
        self.sym(";")?;
        let span = self.finish_span(start);
        self.m.entry = Some(Entry { ctx, body, span });
        Ok(())
    }

    fn finish_span(&self, start: Span) -> Span {
        let end = self.toks[self.pos.saturating_sub(1)].1.end;
        Span { end, ..start }
    }

    // ---- programs ----

    fn proc(&mut self) -> PResult<Proc> {
        let mut items = vec![self.prefix()?];
        while self.eat_sym("|") {
            items.push(self.prefix()?);
        }
        Ok(if items.len() == 1 {
            items.pop().unwrap()
        } else {
            Proc::par(items)
        })
    }

    fn bind<T>(&mut self, xs: &[Name], f: impl FnOnce(&mut Self) -> PResult<T>) -> PResult<T> {
        let n = self.scope.len();
        self.scope.extend(xs.iter().cloned());
        let r = f(self);
        self.scope.truncate(n);
        r
    }

    fn block(&mut self) -> PResult<Proc> {
        self.sym("{")?;
        let p = self.proc()?;
        self.sym("}")?;
        Ok(p)
    }

    fn prefix(&mut self) -> PResult<Proc> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Num(n) if n == "0" => {
                self.bump();
                Ok(Proc::Nil)
            }
            Tok::Sym("(") => {
                self.bump();
                let p = self.proc()?;
                self.sym(")")?;
                Ok(p)
            }
            Tok::Ident(k) if k == "emit" || k == "emitted" => {
                self.bump();
                let sig = self.ident()?;
                let val = self.expr(false)?;
                Ok(Proc::Emit {
                    sig,
                    val,
                    marked: k == "emitted",
                })
            }
            Tok::Ident(k) if k == "present" => {
                self.bump();
                let sig = self.ident()?;
                self.sym("(")?;
                let var = self.ident()?;
                self.sym(")")?;
                let body = self.bind(std::slice::from_ref(&var), |p| p.block())?;
                self.kw("else")?;
                let cont = self.cont()?;
                Ok(Proc::Present {
                    sig,
                    var,
                    body: Box::new(body),
                    cont,
                })
            }
            Tok::Ident(k) if k == "match" => {
                self.bump();
                if matches!(self.peek(), Tok::Ident(_)) && *self.peek_at(1) == Tok::Sym("=") {
                    let left = self.ident()?;
                    self.sym("=")?;
                    let right = self.ident()?;
                    let then = self.block()?;
                    self.kw("else")?;
                    let els = self.block()?;
                    return Ok(Proc::IfSig {
                        left,
                        right,
                        then: Box::new(then),
                        els: Box::new(els),
                    });
                }
                let scrut = self.expr(false)?;
                self.kw("with")?;
                let pspan = self.span();
                let ctor = self.ident()?;
                let Some(arity) = self.is_ctor(&ctor) else {
                    return Err(self.err_at(pspan, format!("unknown constructor `{ctor}`"), &[]));
                };
                let vars = if self.eat_sym("(") {
                    self.comma_list(")", |p| p.ident())?
                } else {
                    vec![]
                };
                if vars.len() != arity {
                    return Err(self.err_at(
                        pspan,
                        format!(
                            "constructor `{ctor}` expects {arity} arguments, got {}",
                            vars.len()
                        ),
                        &[],
                    ));
                }
                let distinct: BTreeSet<&Name> = vars.iter().collect();
                if distinct.len() != vars.len() {
                    return Err(self.err_at(
                        pspan,
                        "pattern variables must be distinct".into(),
                        &[],
                    ));
                }
                if let Expr::Var(x) = &scrut {
                    if vars.contains(x) {
                        return Err(self.err_at(
                            pspan,
                            format!("pattern rebinds the scrutinee `{x}`"),
                            &[],
                        ));
                    }
                }
                let then = self.bind(&vars, |p| p.block())?;
                if let Expr::Var(x) = &scrut {
                    if then.free_vars().contains(x) {
                        return Err(self.err_at(
                            span,
                            format!("matched variable `{x}` occurs in the success branch"),
                            &[],
                        ));
                    }
                }
                self.kw("else")?;
                let els = self.block()?;
                Ok(Proc::Match {
                    scrut,
                    pat: Pattern { ctor, vars },
                    ty: None,
                    then: Box::new(then),
                    els: Box::new(els),
                })
            }
            Tok::Ident(k) if k == "new" => {
                self.bump();
                let mut binders = Vec::new();
                loop {
                    let x = self.ident()?;
                    self.sym(":")?;
                    let t = self.ty(&[])?;
                    binders.push((x, t));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.kw("in")?;
                let names: Vec<Name> = binders.iter().map(|b| b.0.clone()).collect();
                let body = self.bind(&names, |p| p.proc())?;
                Ok(binders
                    .into_iter()
                    .rev()
                    .fold(body, |acc, (x, t)| Proc::New {
                        name: x,
                        ty: t,
                        body: Box::new(acc),
                    }))
            }
            Tok::Ident(k) if k == "pause" => {
                self.bump();
                self.sym(".")?;
                Ok(desugar_pause(self.cont()?))
            }
            Tok::Ident(_) => {
                let a = self.ident()?;
                self.sym("(")?;
                let args = self.comma_list(")", |p| p.expr(false))?;
                self.calls.push((a.clone(), args.len(), span));
                Ok(Proc::Call(a, args))
            }
            _ => Err(self.expected(&["program"])),
        }
    }

    fn cont(&mut self) -> PResult<Cont> {
        let span = self.span();
        if matches!(self.peek(), Tok::Num(n) if n == "0") {
            self.bump();
            return Ok(Cont::stop());
        }
        let a = self.ident()?;
        self.sym("(")?;
        let args = self.comma_list(")", |p| p.expr(true))?;
        self.calls.push((a.clone(), args.len(), span));
        Ok(Cont { thread: a, args })
    }

    // ---- expressions ----

    fn expr(&mut self, allow_deref: bool) -> PResult<Expr> {
        let span = self.span();
        if self.eat_sym("!") {
            if !allow_deref {
                return Err(self.err_at(
                    span,
                    "dereference is only allowed in continuation arguments".into(),
                    &[],
                ));
            }
            return Ok(Expr::Deref(self.ident()?));
        }
        if self.eat_sym("[") {
            let mut items = Vec::new();
            if !self.eat_sym("]") {
                loop {
                    items.push(self.expr(allow_deref)?);
                    if self.eat_sym("]") {
                        break;
                    }
                    if !self.eat_sym(";") {
                        return Err(self.expected(&[";", "]"]));
                    }
                }
            }
            return Ok(items
                .into_iter()
                .rev()
                .fold(Expr::Con(name("nil"), vec![]), |acc, e| {
                    Expr::Con(name("cons"), vec![e, acc])
                }));
        }
        let id = self.ident()?;
        if self.eat_sym("(") {
            let args = self.comma_list(")", |p| p.expr(allow_deref))?;
            if let Some(arity) = self.is_ctor(&id) {
                if arity != args.len() {
                    return Err(self.err_at(
                        span,
                        format!(
                            "constructor `{id}` expects {arity} arguments, got {}",
                            args.len()
                        ),
                        &[],
                    ));
                }
                return Ok(Expr::Con(id, args));
            }
            if let Some(arity) = self.fun_arity(&id) {
                if arity != args.len() {
                    return Err(self.err_at(
                        span,
                        format!(
                            "function `{id}` expects {arity} arguments, got {}",
                            args.len()
                        ),
                        &[],
                    ));
                }
                return Ok(Expr::Fun(id, args));
            }
            return Err(self.err_at(span, format!("unknown constructor or function `{id}`"), &[]));
        }
        if !self.scope.contains(&id) {
            if let Some(arity) = self.is_ctor(&id) {
                if arity != 0 {
                    return Err(self.err_at(
                        span,
                        format!("constructor `{id}` expects {arity} arguments"),
                        &[],
                    ));
                }
                return Ok(Expr::Con(id, vec![]));
            }
        }
        Ok(Expr::Var(id))
    }
}

fn pat_vars(p: &FunPat, out: &mut BTreeSet<Name>) {
    match p {
        FunPat::Var(x) => {
            out.insert(x.clone());
        }
        FunPat::Con(_, args) => args.iter().for_each(|a| pat_vars(a, out)),
        FunPat::Wild => {}
    }
}

/// Parses a whole module.
pub fn parse_module(text: &str) -> Result<Module, ParseError> {
    Parser::new(text)?.module()
}

/// Parses a program in the scope of `m`, with `free` as the bound names.
pub fn parse_proc(m: &Module, free: &[Name], text: &str) -> Result<Proc, ParseError> {
    let mut p = Parser::new(text)?;
    p.m = m.clone();
    p.fun_sigs = m
        .funs
        .iter()
        .map(|(f, d)| (f.clone(), d.params.len()))
        .collect();
    p.scope = free.to_vec();
    let out = p.proc()?;
    if *p.peek() != Tok::Eof {
        return Err(p.expected(&["end of input"]));
    }
    for (a, arity, span) in std::mem::take(&mut p.calls) {
        if m.thread_params(&a).map(|ps| ps.len()) != Some(arity) {
            return Err(p.err_at(span, format!("unknown thread `{a}/{arity}`"), &[]));
        }
    }
    Ok(out)
}

/// Parses a type in the scope of `m`.
pub fn parse_type(m: &Module, text: &str) -> Result<Type, ParseError> {
    let mut p = Parser::new(text)?;
    p.m = m.clone();
    let t = p.ty(&[])?;
    if *p.peek() != Tok::Eof {
        return Err(p.expected(&["end of input"]));
    }
    Ok(t)
}

// ---- printing ----

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(", ")
}

fn expr_list(e: &Expr) -> Option<Vec<&Expr>> {
    let mut out = Vec::new();
    let mut cur = e;
    loop {
        match cur {
            Expr::Con(c, a) if &**c == "nil" && a.is_empty() => return Some(out),
            Expr::Con(c, a) if &**c == "cons" && a.len() == 2 => {
                out.push(&a[0]);
                cur = &a[1];
            }
            _ => return None,
        }
    }
}

pub fn pretty_expr(e: &Expr) -> String {
    if let Some(items) = expr_list(e) {
        let inner: Vec<String> = items.iter().map(|x| pretty_expr(x)).collect();
        return format!("[{}]", inner.join("; "));
    }
    match e {
        Expr::Var(x) => x.to_string(),
        Expr::Deref(x) => format!("!{x}"),
        Expr::Con(c, a) if a.is_empty() => c.to_string(),
        Expr::Con(c, a) => format!("{c}({})", join(a, pretty_expr)),
        Expr::Fun(f, a) => format!("{f}({})", join(a, pretty_expr)),
    }
}

pub fn pretty_value(v: &Value) -> String {
    pretty_expr(&Expr::from(v))
}

fn pretty_cont(k: &Cont) -> String {
    if &*k.thread == STOP && k.args.is_empty() {
        "0".into()
    } else {
        format!("{}({})", k.thread, join(&k.args, pretty_expr))
    }
}

pub fn pretty(p: &Proc) -> String {
    let mut s = String::new();
    write_proc(&mut s, p);
    s
}

fn write_proc(out: &mut String, p: &Proc) {
    if let Some(k) = as_pause(p) {
        let _ = write!(out, "pause.{}", pretty_cont(k));
        return;
    }
    match p {
        Proc::Nil => out.push('0'),
        Proc::Call(a, args) => {
            let _ = write!(out, "{a}({})", join(args, pretty_expr));
        }
        Proc::Emit { sig, val, marked } => {
            let kw = if *marked { "emitted" } else { "emit" };
            let _ = write!(out, "{kw} {sig} {}", pretty_expr(val));
        }
        Proc::Present {
            sig,
            var,
            body,
            cont,
        } => {
            let _ = write!(out, "present {sig}({var}) {{ ");
            write_proc(out, body);
            let _ = write!(out, " }} else {}", pretty_cont(cont));
        }
        Proc::IfSig {
            left,
            right,
            then,
            els,
        } => {
            let _ = write!(out, "match {left} = {right} {{ ");
            write_proc(out, then);
            out.push_str(" } else { ");
            write_proc(out, els);
            out.push_str(" }");
        }
        Proc::Match {
            scrut,
            pat,
            then,
            els,
            ..
        } => {
            let _ = write!(out, "match {} with {}", pretty_expr(scrut), pat.ctor);
            if !pat.vars.is_empty() {
                let _ = write!(out, "({})", join(&pat.vars, |x| x.to_string()));
            }
            out.push_str(" { ");
            write_proc(out, then);
            out.push_str(" } else { ");
            write_proc(out, els);
            out.push_str(" }");
        }
        Proc::New { name, ty, body } => {
            let _ = write!(out, "new {name}: {ty} in ");
            write_proc(out, body);
        }
        Proc::Par(ps) => {
            for (i, q) in ps.iter().enumerate() {
                if i > 0 {
                    out.push_str(" | ");
                }
                let wrap = matches!(q, Proc::New { .. } | Proc::Par(_)) && as_pause(q).is_none();
                if wrap {
                    out.push('(');
                    write_proc(out, q);
                    out.push(')');
                } else {
                    write_proc(out, q);
                }
            }
        }
    }
}

fn pretty_fun_pat(p: &FunPat) -> String {
    match p {
        FunPat::Wild => "_".into(),
        FunPat::Var(x) => x.to_string(),
        FunPat::Con(c, a) if a.is_empty() => c.to_string(),
        FunPat::Con(c, a) => format!("{c}({})", join(a, pretty_fun_pat)),
    }
}

/// Prints a module; the output parses back to an equivalent module.
pub fn pretty_module(m: &Module) -> String {
    let mut out = String::new();
    for d in m.data_order.iter().filter_map(|n| m.datas.get(n)) {
        if d.builtin {
            continue;
        }
        let _ = write!(out, "type {}", d.name);
        if !d.params.is_empty() {
            let _ = write!(out, "({})", join(&d.params, |p| p.to_string()));
        }
        out.push_str(" = ");
        let ctors: Vec<String> = d
            .ctors
            .iter()
            .map(|c| {
                if c.fields.is_empty() {
                    c.name.to_string()
                } else {
                    format!("{}({})", c.name, join(&c.fields, |t| t.to_string()))
                }
            })
            .collect();
        let _ = writeln!(out, "{};", ctors.join(" | "));
    }
    for f in m.fun_order.iter().filter_map(|n| m.funs.get(n)) {
        let _ = writeln!(
            out,
            "fun {}({}) -> {} {{",
            f.name,
            join(&f.params, |t| t.to_string()),
            f.ret
        );
        for c in &f.clauses {
            let _ = writeln!(
                out,
                "  ({}) => {};",
                join(&c.pats, pretty_fun_pat),
                pretty_expr(&c.body)
            );
        }
        out.push_str("}\n");
    }
    for t in m.thread_order.iter().filter_map(|n| m.threads.get(n)) {
        let _ = writeln!(
            out,
            "thread {}({}) =\n  {};",
            t.name,
            join(&t.params, |(x, ty)| format!("{x}: {ty}")),
            pretty(&t.body)
        );
    }
    if let Some(e) = &m.entry {
        let _ = writeln!(
            out,
            "main({}) =\n  {};",
            join(&e.ctx, |(x, ty)| format!("{x}: {ty}")),
            pretty(&e.body)
        );
    }
    out
}

/// Structural equality of modules up to alpha-renaming and source positions.
pub fn modules_equivalent(a: &Module, b: &Module) -> bool {
    let funs_eq = a.funs.len() == b.funs.len()
        && a.funs.iter().all(|(n, f)| {
            b.funs
                .get(n)
                .is_some_and(|g| f.params == g.params && f.ret == g.ret && f.clauses == g.clauses)
        });
    let threads_eq = a.threads.len() == b.threads.len()
        && a.threads.iter().all(|(n, t)| {
            b.threads.get(n).is_some_and(|u| {
                t.param_types() == u.param_types() && {
                    let ren: BTreeMap<Name, Name> = u
                        .params
                        .iter()
                        .zip(&t.params)
                        .map(|((y, _), (x, _))| (y.clone(), x.clone()))
                        .collect();
                    t.body
                        .alpha_eq(&u.body.rename(&ren, &mut Default::default()))
                }
            })
        });
    let entry_eq = match (&a.entry, &b.entry) {
        (None, None) => true,
        (Some(x), Some(y)) => x.ctx == y.ctx && x.body.alpha_eq(&y.body),
        _ => false,
    };
    a.datas == b.datas && funs_eq && threads_eq && entry_eq
}

#[cfg(test)]
mod tests {
    use super::*;

    const SERVER: &str = r#"
        type D = d0 | d1;
        type Req(a, b) = req(a, b);
        alias S1 = Sig<k5:(1,0,0)w>(D);
        alias R = Req<1>(S1, D);
        fun f(D) -> D { (d0) => d1; (x) => x; }
        thread Server(s: Sig<k3:(w,0,1)w>(R)) = pause.Handle(s, !s);
        thread Handle(s: Sig<k3:(w,0,1)w>(R), l: Set<1>(R)) =
            match l with cons(r, l2) {
                match r with req(s2, x) { emit s2 f(x) | Handle(s, l2) } else { Server(s) }
            } else { Server(s) };
        thread Client(x: D, s: Sig<k3:(w,0,0)w>(R), t: Sig<k1:(w,0,w)w>(D)) =
            new s2: Sig<k5:(1,1,0)w>(D) in (emit s req(s2, x) | pause.Wait(s2, t));
        thread Wait(s2: Sig<k5:(0,1,0)w>(D), t: Sig<k1:(w,0,w)w>(D)) =
            present s2(x) { emit t x } else 0;
        main(s: Sig<k3:(w,0,1)w>(R), t: Sig<k1:(w,0,w)w>(D)) = Server(s) | Client(d0, s, t);
    "#;

    #[test]
    fn server_module_parses() {
        let m = parse_module(SERVER).unwrap();
        assert_eq!(m.thread_order.len(), 4);
        assert!(m.entry.is_some());
        let c = &m.threads[&name("Client")];
        assert!(matches!(c.body, Proc::New { .. }));
    }

    #[test]
    fn round_trip() {
        let m = parse_module(SERVER).unwrap();
        let text = pretty_module(&m);
        let m2 = parse_module(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        assert!(modules_equivalent(&m, &m2));
    }

    #[test]
    fn duplicate_thread_rejected() {
        let err = parse_module("thread A(x: Sig<k1:(w,0,w)w>(Unit)) = emit x unit; thread A(x: Sig<k1:(w,0,w)w>(Unit)) = 0;")
            .unwrap_err();
        assert!(err.message.contains("duplicate"), "{err}");
        assert_eq!(err.line, 1);
    }

    #[test]
    fn emit_without_value_rejected() {
        let err = parse_module("main(s: Sig<k1:(w,0,w)w>(Unit)) = emit s;").unwrap_err();
        assert!(err.offset <= "main(s: Sig<k1:(w,0,w)w>(Unit)) = emit s;".len());
        assert!(err.message.contains("expected"), "{err}");
    }

    #[test]
    fn pretty_nil() {
        assert_eq!(pretty(&Proc::Nil), "0");
    }

    #[test]
    fn usage_annotation_survives() {
        let src = "type D = d; main() = new s: Sig<k5:(1,1,0)w>(D) in emit s d;";
        let m = parse_module(src).unwrap();
        let text = pretty(&m.entry.as_ref().unwrap().body);
        assert!(text.contains("Sig<k5:(1,1,0)w>(D)"), "{text}");
        let m2 = parse_module(&pretty_module(&m)).unwrap();
        assert!(modules_equivalent(&m, &m2));
    }

    #[test]
    fn deref_outside_continuation_rejected() {
        let err = parse_module("main(s: Sig<k1:(w,0,w)w>(Unit)) = emit s !s;").unwrap_err();
        assert!(err.message.contains("dereference"));
    }

    #[test]
    fn list_sugar() {
        let m = parse_module("type D = a | b; main(s: Sig<k1:(w,0,w)w>(List(D))) = emit s [a; b];")
            .unwrap();
        match &m.entry.unwrap().body {
            Proc::Emit { val, .. } => {
                assert_eq!(
                    val.as_value().unwrap(),
                    Value::list([Value::con("a", vec![]), Value::con("b", vec![])])
                )
            }
            other => panic!("{other:?}"),
        }
    }
}
