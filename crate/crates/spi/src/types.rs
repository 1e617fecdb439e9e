//! Types, type and context addition, shift, minimal contexts and value
//! equivalence.
//!
//! Grammar classes: classical types carry no affine usage; affine uniform
//! types carry one, nested only under affine-preserving constructors;
//! non-uniform signal types may only appear at top level.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::syntax::{name, Name, Value};
use crate::usage::{Kind, Mult, Point, Usage};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    /// User inductive type (or `Unit`) with usage `1` or `w`.
    Data {
        name: Name,
        mult: Mult,
        args: Vec<Type>,
    },
    List {
        mult: Mult,
        elem: Box<Type>,
    },
    Set {
        mult: Mult,
        elem: Box<Type>,
    },
    Sig {
        usage: Usage,
        payload: Box<Type>,
    },
    /// Type parameter; only inside data declarations.
    Param(Name),
}

pub const UNIT: &str = "Unit";

impl Type {
    pub fn data(n: &str) -> Type {
        Type::Data {
            name: name(n),
            mult: Mult::Many,
            args: vec![],
        }
    }

    pub fn unit() -> Type {
        Type::data(UNIT)
    }

    pub fn sig(usage: Usage, payload: Type) -> Type {
        Type::Sig {
            usage,
            payload: Box::new(payload),
        }
    }

    pub fn list(mult: Mult, elem: Type) -> Type {
        Type::List {
            mult,
            elem: Box::new(elem),
        }
    }

    pub fn set(mult: Mult, elem: Type) -> Type {
        Type::Set {
            mult,
            elem: Box::new(elem),
        }
    }

    /// Type of the signal introduced by `pause`.
    pub fn pause_signal() -> Type {
        let k2 = Kind::new(2).unwrap();
        Type::sig(Usage::neutral(k2), Type::unit())
    }

    pub fn usage(&self) -> Option<Usage> {
        match self {
            Type::Sig { usage, .. } => Some(*usage),
            _ => None,
        }
    }

    pub fn payload(&self) -> Option<&Type> {
        match self {
            Type::Sig { payload, .. } => Some(payload),
            _ => None,
        }
    }

    pub fn with_usage(&self, u: Usage) -> Type {
        match self {
            Type::Sig { payload, .. } => Type::Sig {
                usage: u,
                payload: payload.clone(),
            },
            other => other.clone(),
        }
    }

    /// Contains an affine usage anywhere.
    pub fn is_affine(&self) -> bool {
        match self {
            Type::Data { mult, args, .. } => *mult == Mult::One || args.iter().any(Type::is_affine),
            Type::List { mult, elem } | Type::Set { mult, elem } => {
                *mult == Mult::One || elem.is_affine()
            }
            Type::Sig { usage, payload } => usage.is_affine() || payload.is_affine(),
            Type::Param(_) => false,
        }
    }

    /// Every signal usage inside is uniform.
    pub fn is_uniform(&self) -> bool {
        match self {
            Type::Data { args, .. } => args.iter().all(Type::is_uniform),
            Type::List { elem, .. } | Type::Set { elem, .. } => elem.is_uniform(),
            Type::Sig { usage, payload } => usage.is_uniform() && payload.is_uniform(),
            Type::Param(_) => true,
        }
    }

    pub fn is_classical(&self) -> bool {
        self.is_uniform() && !self.is_affine()
    }

    /// `Sig_u(s) -> Sig_{shift u}(s)`, identity otherwise.
    pub fn shift(&self) -> Type {
        match self {
            Type::Sig { usage, payload } => Type::Sig {
                usage: usage.shift(),
                payload: payload.clone(),
            },
            other => other.clone(),
        }
    }

    fn subst_params(&self, params: &[Name], args: &[Type], self_name: &Name, inst: &Type) -> Type {
        match self {
            Type::Param(p) => params
                .iter()
                .position(|q| q == p)
                .map(|i| args[i].clone())
                .unwrap_or_else(|| self.clone()),
            Type::Data { name, .. } if name == self_name => inst.clone(),
            Type::Data {
                name,
                mult,
                args: a,
            } => Type::Data {
                name: name.clone(),
                mult: *mult,
                args: a
                    .iter()
                    .map(|t| t.subst_params(params, args, self_name, inst))
                    .collect(),
            },
            Type::List { mult, elem } => Type::List {
                mult: *mult,
                elem: Box::new(elem.subst_params(params, args, self_name, inst)),
            },
            Type::Set { mult, elem } => Type::Set {
                mult: *mult,
                elem: Box::new(elem.subst_params(params, args, self_name, inst)),
            },
            Type::Sig { usage, payload } => Type::Sig {
                usage: *usage,
                payload: Box::new(payload.subst_params(params, args, self_name, inst)),
            },
        }
    }
}

fn mult_tag(m: Mult) -> &'static str {
    match m {
        Mult::One => "1",
        _ => "w",
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Data { name, mult, args } => {
                write!(f, "{name}")?;
                if *mult == Mult::One {
                    write!(f, "<1>")?;
                }
                if !args.is_empty() {
                    write!(f, "(")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        write!(f, "{a}")?;
                    }
                    write!(f, ")")?;
                }
                Ok(())
            }
            Type::List { mult, elem } => write!(f, "List<{}>({elem})", mult_tag(*mult)),
            Type::Set { mult, elem } => write!(f, "Set<{}>({elem})", mult_tag(*mult)),
            Type::Sig { usage, payload } => write!(f, "Sig<{usage}>({payload})"),
            Type::Param(p) => write!(f, "{p}"),
        }
    }
}

/// Constructor `c of fields`; fields may mention the declaration's
/// parameters and the declared type itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CtorDecl {
    pub name: Name,
    pub fields: Vec<Type>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataDecl {
    pub name: Name,
    pub params: Vec<Name>,
    pub ctors: Vec<CtorDecl>,
    pub builtin: bool,
}

impl DataDecl {
    pub fn unit() -> DataDecl {
        DataDecl {
            name: name(UNIT),
            params: vec![],
            ctors: vec![CtorDecl {
                name: name("unit"),
                fields: vec![],
            }],
            builtin: true,
        }
    }
}

pub type Datas = BTreeMap<Name, DataDecl>;

/// Field types of constructor `ctor` when building a value of type `expected`.
pub fn ctor_fields(datas: &Datas, expected: &Type, ctor: &str) -> Option<Vec<Type>> {
    match expected {
        Type::List { elem, .. } | Type::Set { elem, .. } => match ctor {
            "nil" => Some(vec![]),
            "cons" => Some(vec![(**elem).clone(), expected.clone()]),
            _ => None,
        },
        Type::Data { name, args, .. } => {
            let decl = datas.get(name)?;
            if decl.params.len() != args.len() {
                return None;
            }
            let c = decl.ctors.iter().find(|c| &*c.name == ctor)?;
            Some(
                c.fields
                    .iter()
                    .map(|t| t.subst_params(&decl.params, args, &decl.name, expected))
                    .collect(),
            )
        }
        _ => None,
    }
}

/// Data declaration owning constructor `ctor`.
pub fn ctor_owner<'a>(datas: &'a Datas, ctor: &str) -> Option<&'a DataDecl> {
    datas
        .values()
        .find(|d| d.ctors.iter().any(|c| &*c.name == ctor))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum TypeClass {
    Classical,
    AffineUniform,
    NonUniform,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("ill-formed type {ty} at {path}: {reason}")]
pub struct IllFormed {
    pub ty: String,
    pub path: String,
    pub reason: String,
}

/// Assigns a grammar class to a top-level type.
pub fn type_wf(ty: &Type, datas: &Datas) -> Result<TypeClass, IllFormed> {
    let fail = |path: &str, reason: &str| IllFormed {
        ty: ty.to_string(),
        path: path.to_string(),
        reason: reason.to_string(),
    };
    if let Type::Sig { usage, payload } = ty {
        if !usage.is_uniform() {
            let aff = uniform_affine(payload, datas, "payload")?;
            if aff && !usage.kind().affine_preserving() {
                return Err(fail(
                    "payload",
                    "affine payload under a non-affine-preserving usage",
                ));
            }
            return Ok(TypeClass::NonUniform);
        }
    }
    if uniform_affine(ty, datas, "")? {
        Ok(TypeClass::AffineUniform)
    } else {
        Ok(TypeClass::Classical)
    }
}

/// Checks a uniform type; returns whether it is affine.
fn uniform_affine(ty: &Type, datas: &Datas, path: &str) -> Result<bool, IllFormed> {
    let fail = |reason: String| IllFormed {
        ty: ty.to_string(),
        path: path.to_string(),
        reason,
    };
    let sub = |i: usize| {
        if path.is_empty() {
            format!("{i}")
        } else {
            format!("{path}.{i}")
        }
    };
    match ty {
        Type::Data { name, mult, args } => {
            let decl = datas
                .get(name)
                .ok_or_else(|| fail(format!("unknown type {name}")))?;
            if decl.params.len() != args.len() {
                return Err(fail(format!(
                    "{name} expects {} arguments",
                    decl.params.len()
                )));
            }
            if *mult == Mult::Zero {
                return Err(fail("inductive usage must be 1 or w".into()));
            }
            let mut aff = false;
            for (i, a) in args.iter().enumerate() {
                aff |= uniform_affine(a, datas, &sub(i))?;
            }
            for c in &decl.ctors {
                let fields = ctor_fields(datas, ty, &c.name).unwrap_or_default();
                for f in fields.iter().filter(|f| *f != ty) {
                    aff |= f.is_affine();
                }
            }
            if aff && *mult != Mult::One {
                return Err(fail("affine component under usage w".into()));
            }
            Ok(aff || *mult == Mult::One)
        }
        Type::List { mult, elem } | Type::Set { mult, elem } => {
            if *mult == Mult::Zero {
                return Err(fail("collection usage must be 1 or w".into()));
            }
            let aff = uniform_affine(elem, datas, &sub(0))?;
            if aff && *mult != Mult::One {
                return Err(fail("affine element under usage w".into()));
            }
            Ok(aff || *mult == Mult::One)
        }
        Type::Sig { usage, payload } => {
            if !usage.is_uniform() {
                return Err(fail("non-uniform usage nested inside a type".into()));
            }
            let aff = uniform_affine(payload, datas, &sub(0))?;
            if aff && !usage.kind().affine_preserving() {
                return Err(fail(
                    "affine payload under a non-affine-preserving usage".into(),
                ));
            }
            Ok(aff || usage.is_affine())
        }
        Type::Param(p) => Err(fail(format!("unbound type parameter {p}"))),
    }
}

/// `Op_u1(s) + Op_u2(s) = Op_{u1+u2}(s)`.
pub fn type_add(a: &Type, b: &Type) -> Option<Type> {
    match (a, b) {
        (
            Type::Sig {
                usage: u1,
                payload: p1,
            },
            Type::Sig {
                usage: u2,
                payload: p2,
            },
        ) if p1 == p2 => Some(Type::Sig {
            usage: u1.add(u2)?,
            payload: p1.clone(),
        }),
        (
            Type::Data {
                name: n1,
                mult: m1,
                args: a1,
            },
            Type::Data {
                name: n2,
                mult: m2,
                args: a2,
            },
        ) if n1 == n2 && a1 == a2 => Some(Type::Data {
            name: n1.clone(),
            mult: m1.add(*m2)?,
            args: a1.clone(),
        }),
        (Type::List { mult: m1, elem: e1 }, Type::List { mult: m2, elem: e2 }) if e1 == e2 => {
            Some(Type::List {
                mult: m1.add(*m2)?,
                elem: e1.clone(),
            })
        }
        (Type::Set { mult: m1, elem: e1 }, Type::Set { mult: m2, elem: e2 }) if e1 == e2 => {
            Some(Type::Set {
                mult: m1.add(*m2)?,
                elem: e1.clone(),
            })
        }
        _ => None,
    }
}

pub fn type_le(a: &Type, b: &Type) -> bool {
    match (a, b) {
        (
            Type::Sig {
                usage: u1,
                payload: p1,
            },
            Type::Sig {
                usage: u2,
                payload: p2,
            },
        ) => p1 == p2 && u1.le(u2),
        _ => a == b,
    }
}

/// `a - b`; the inner `None` means the binding is used up.
pub fn type_sub(a: &Type, b: &Type) -> Option<Option<Type>> {
    match (a, b) {
        (
            Type::Sig {
                usage: u1,
                payload: p1,
            },
            Type::Sig {
                usage: u2,
                payload: p2,
            },
        ) if p1 == p2 => Some(Some(Type::Sig {
            usage: u1.sub(u2)?,
            payload: p1.clone(),
        })),
        _ if a == b => {
            let m = match a {
                Type::Data { mult, .. } | Type::List { mult, .. } | Type::Set { mult, .. } => *mult,
                _ => return None,
            };
            match m.sub(m)? {
                Mult::Zero => Some(None),
                _ => Some(Some(a.clone())),
            }
        }
        _ => None,
    }
}

pub fn type_join(a: &Type, b: &Type) -> Option<Type> {
    match (a, b) {
        (
            Type::Sig {
                usage: u1,
                payload: p1,
            },
            Type::Sig {
                usage: u2,
                payload: p2,
            },
        ) if p1 == p2 => Some(Type::Sig {
            usage: u1.join(u2)?,
            payload: p1.clone(),
        }),
        _ if a == b => Some(a.clone()),
        _ => None,
    }
}

/// Typing context.
pub type Ctx = BTreeMap<Name, Type>;

/// Why a context operation is undefined.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum CtxError {
    #[error("usage conflict on {var}: {left} and {right} cannot be combined")]
    Conflict { var: Name, left: Type, right: Type },
    #[error("{var}: demand {demand} exceeds {}", .declared.as_ref().map(|t| t.to_string()).unwrap_or_else(|| "nothing (unbound)".into()))]
    Exceeds {
        var: Name,
        demand: Type,
        declared: Option<Type>,
    },
}

pub fn ctx_add(a: &Ctx, b: &Ctx) -> Result<Ctx, CtxError> {
    let mut out = a.clone();
    for (x, t) in b {
        match out.get(x) {
            None => {
                out.insert(x.clone(), t.clone());
            }
            Some(s) => {
                let sum = type_add(s, t).ok_or_else(|| CtxError::Conflict {
                    var: x.clone(),
                    left: s.clone(),
                    right: t.clone(),
                })?;
                out.insert(x.clone(), sum);
            }
        }
    }
    Ok(out)
}

pub fn ctx_sub(a: &Ctx, b: &Ctx) -> Result<Ctx, CtxError> {
    let mut out = a.clone();
    for (x, t) in b {
        let exceeds = || CtxError::Exceeds {
            var: x.clone(),
            demand: t.clone(),
            declared: a.get(x).cloned(),
        };
        let s = out.get(x).ok_or_else(exceeds)?;
        match type_sub(s, t).ok_or_else(exceeds)? {
            Some(r) => {
                out.insert(x.clone(), r);
            }
            None => {
                out.remove(x);
            }
        }
    }
    Ok(out)
}

pub fn ctx_join(a: &Ctx, b: &Ctx) -> Result<Ctx, CtxError> {
    let mut out = a.clone();
    for (x, t) in b {
        match out.get(x) {
            None => {
                out.insert(x.clone(), t.clone());
            }
            Some(s) => {
                let j = type_join(s, t).ok_or_else(|| CtxError::Conflict {
                    var: x.clone(),
                    left: s.clone(),
                    right: t.clone(),
                })?;
                out.insert(x.clone(), j);
            }
        }
    }
    Ok(out)
}

/// `d <= g`: every demand is covered by the context.
pub fn ctx_le(d: &Ctx, g: &Ctx) -> Result<(), CtxError> {
    for (x, t) in d {
        match g.get(x) {
            Some(s) if type_le(t, s) => {}
            other => {
                return Err(CtxError::Exceeds {
                    var: x.clone(),
                    demand: t.clone(),
                    declared: other.cloned(),
                })
            }
        }
    }
    Ok(())
}

pub fn ctx_shift(g: &Ctx) -> Ctx {
    g.iter().map(|(x, t)| (x.clone(), t.shift())).collect()
}

pub fn ctx_is_neutral(g: &Ctx) -> bool {
    g.values().all(|t| match t {
        Type::Sig { usage, .. } => usage.is_neutral(),
        other => !other.is_affine(),
    })
}

pub fn ctx_display(g: &Ctx) -> String {
    let parts: Vec<String> = g.iter().map(|(x, t)| format!("{x}: {t}")).collect();
    format!("{{{}}}", parts.join(", "))
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum DeltaError {
    #[error("value {value} does not inhabit {ty}")]
    Mismatch { value: String, ty: String },
    #[error(transparent)]
    Ctx(#[from] CtxError),
}

/// Least context typing `v` at `ty`.
pub fn delta(v: &Value, ty: &Type, datas: &Datas) -> Result<Ctx, DeltaError> {
    let mismatch = || DeltaError::Mismatch {
        value: crate::parser::pretty_value(v),
        ty: ty.to_string(),
    };
    match v {
        Value::Sig(s) => match ty {
            Type::Sig { .. } => Ok(Ctx::from([(s.clone(), ty.clone())])),
            _ => Err(mismatch()),
        },
        Value::Con(c, args) => {
            let fields = ctor_fields(datas, ty, c).ok_or_else(mismatch)?;
            if fields.len() != args.len() {
                return Err(mismatch());
            }
            let mut out = Ctx::new();
            for (a, t) in args.iter().zip(&fields) {
                out = ctx_add(&out, &delta(a, t, datas)?)?;
            }
            Ok(out)
        }
    }
}

/// `v1 ~ v2` at `ty`: structural, with set-typed lists compared up to permutation.
pub fn value_equiv(v1: &Value, v2: &Value, ty: &Type, datas: &Datas) -> bool {
    match ty {
        Type::Set { elem, .. } => {
            let (Some(xs), Some(ys)) = (v1.as_list(), v2.as_list()) else {
                return false;
            };
            xs.len() == ys.len()
                && perfect_matching(&xs, &ys, &mut vec![false; ys.len()], elem, datas)
        }
        Type::List { elem, .. } => match (v1.as_list(), v2.as_list()) {
            (Some(xs), Some(ys)) => {
                xs.len() == ys.len()
                    && xs
                        .iter()
                        .zip(&ys)
                        .all(|(a, b)| value_equiv(a, b, elem, datas))
            }
            _ => false,
        },
        _ => match (v1, v2) {
            (Value::Sig(a), Value::Sig(b)) => a == b,
            (Value::Con(c, xs), Value::Con(d, ys)) if c == d && xs.len() == ys.len() => {
                match ctor_fields(datas, ty, c) {
                    Some(fields) if fields.len() == xs.len() => xs
                        .iter()
                        .zip(ys)
                        .zip(&fields)
                        .all(|((a, b), t)| value_equiv(a, b, t, datas)),
                    _ => xs == ys,
                }
            }
            _ => false,
        },
    }
}

fn perfect_matching(
    xs: &[Value],
    ys: &[Value],
    used: &mut Vec<bool>,
    elem: &Type,
    datas: &Datas,
) -> bool {
    let Some((x, rest)) = xs.split_first() else {
        return true;
    };
    for j in 0..ys.len() {
        if !used[j] && value_equiv(x, &ys[j], elem, datas) {
            used[j] = true;
            if perfect_matching(rest, ys, used, elem, datas) {
                return true;
            }
            used[j] = false;
        }
    }
    false
}

/// Normal form for `~`: every set-typed list is sorted after normalising its elements.
pub fn canonicalize(v: &Value, ty: &Type, datas: &Datas) -> Value {
    match ty {
        Type::Set { elem, .. } => match v.as_list() {
            Some(xs) => {
                let mut xs: Vec<Value> = xs.iter().map(|x| canonicalize(x, elem, datas)).collect();
                xs.sort();
                Value::list(xs)
            }
            None => v.clone(),
        },
        Type::List { elem, .. } => match v.as_list() {
            Some(xs) => Value::list(xs.iter().map(|x| canonicalize(x, elem, datas))),
            None => v.clone(),
        },
        _ => match v {
            Value::Con(c, xs) => match ctor_fields(datas, ty, c) {
                Some(fields) if fields.len() == xs.len() => Value::Con(
                    c.clone(),
                    xs.iter()
                        .zip(&fields)
                        .map(|(x, t)| canonicalize(x, t, datas))
                        .collect(),
                ),
                _ => v.clone(),
            },
            Value::Sig(_) => v.clone(),
        },
    }
}

/// Least point of `kind` allowing emission.
pub fn emit_point(kind: Kind) -> Point {
    kind.least(|p| p.0 != Mult::Zero)
        .expect("every main usage can emit")
}

/// Least point of `kind` allowing reception within the instant, if any.
pub fn receive_point(kind: Kind) -> Option<Point> {
    kind.least(|p| p.1 != Mult::Zero)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u(s: &str) -> Usage {
        s.parse().unwrap()
    }

    fn datas() -> Datas {
        let mut d = Datas::new();
        d.insert(name(UNIT), DataDecl::unit());
        d.insert(
            name("D"),
            DataDecl {
                name: name("D"),
                params: vec![],
                ctors: vec![
                    CtorDecl {
                        name: name("d0"),
                        fields: vec![],
                    },
                    CtorDecl {
                        name: name("d1"),
                        fields: vec![],
                    },
                ],
                builtin: false,
            },
        );
        d.insert(
            name("Req"),
            DataDecl {
                name: name("Req"),
                params: vec![name("a"), name("b")],
                ctors: vec![CtorDecl {
                    name: name("req"),
                    fields: vec![Type::Param(name("a")), Type::Param(name("b"))],
                }],
                builtin: false,
            },
        );
        d
    }

    #[test]
    fn wf_examples() {
        let d = datas();
        let affine_set = Type::set(Mult::Many, Type::sig(u("k5:(1,1,0)w"), Type::data("D")));
        assert!(type_wf(&affine_set, &d).is_err());
        let sigma1 = Type::sig(u("k5:(1,0,0)w"), Type::data("D"));
        let req = Type::Data {
            name: name("Req"),
            mult: Mult::One,
            args: vec![sigma1, Type::data("D")],
        };
        let sigma = Type::sig(u("k3:(w,0,1)w"), req);
        assert_eq!(type_wf(&sigma, &d), Ok(TypeClass::AffineUniform));
        let cell = Type::list(Mult::Many, Type::sig(u("k1:(w,0,w)w"), Type::data("D")));
        assert_eq!(type_wf(&cell, &d), Ok(TypeClass::Classical));
        let nested = Type::list(
            Mult::One,
            Type::sig(u("k5:(1,0,0)(0,1,0)w"), Type::data("D")),
        );
        assert!(type_wf(&nested, &d).is_err());
    }

    #[test]
    fn list1_sum_undefined() {
        let l = Type::list(Mult::One, Type::data("D"));
        assert_eq!(type_add(&l, &l), None);
        let lw = Type::list(Mult::Many, Type::data("D"));
        assert_eq!(type_add(&lw, &lw), Some(lw.clone()));
    }

    #[test]
    fn context_shift_and_sum() {
        let t = Type::sig(u("k4:(0,0,1)(0,0,0)w"), Type::data("D"));
        let g = Ctx::from([(name("s"), t)]);
        assert_eq!(
            ctx_shift(&g)[&name("s")],
            Type::sig(u("k4:(0,0,0)w"), Type::data("D"))
        );
        let a = Ctx::from([(
            name("s"),
            Type::sig(u("k5:(1,0,0)(0,1,0)w"), Type::data("D")),
        )]);
        let b = Ctx::from([(
            name("s"),
            Type::sig(u("k5:(0,1,0)(1,0,0)w"), Type::data("D")),
        )]);
        assert_eq!(
            ctx_add(&a, &b).unwrap()[&name("s")],
            Type::sig(u("k5:(1,1,0)w"), Type::data("D"))
        );
    }

    #[test]
    fn delta_examples() {
        let d = datas();
        let sigma1 = Type::sig(u("k5:(1,0,0)w"), Type::data("D"));
        let req = Type::Data {
            name: name("Req"),
            mult: Mult::One,
            args: vec![sigma1.clone(), Type::data("D")],
        };
        let v = Value::con("req", vec![Value::sig("s'"), Value::con("d0", vec![])]);
        assert_eq!(
            delta(&v, &req, &d).unwrap(),
            Ctx::from([(name("s'"), sigma1)])
        );
        assert!(delta(&Value::con("d0", vec![]), &Type::data("D"), &d)
            .unwrap()
            .is_empty());
        let k4 = Type::sig(u("k4:(1,0,1)w"), Type::data("D"));
        let set = Type::set(Mult::One, k4.clone());
        assert_eq!(
            delta(&Value::list([Value::sig("s")]), &set, &d).unwrap(),
            Ctx::from([(name("s"), k4)])
        );
    }

    #[test]
    fn equivalence_examples() {
        let d = datas();
        let v1 = Value::con("d0", vec![]);
        let v2 = Value::con("d1", vec![]);
        let a = Value::list([v1.clone(), v2.clone()]);
        let b = Value::list([v2, v1]);
        assert!(value_equiv(
            &a,
            &b,
            &Type::set(Mult::Many, Type::data("D")),
            &d
        ));
        assert!(!value_equiv(
            &a,
            &b,
            &Type::list(Mult::Many, Type::data("D")),
            &d
        ));
        let st = Type::set(Mult::Many, Type::data("D"));
        assert_eq!(canonicalize(&a, &st, &d), canonicalize(&b, &st, &d));
    }

    #[test]
    fn capability_points() {
        let k = |i| Kind::new(i).unwrap();
        assert_eq!(emit_point(k(2)), Point(Mult::One, Mult::Many, Mult::Many));
        assert_eq!(
            receive_point(k(5)),
            Some(Point(Mult::Zero, Mult::One, Mult::Zero))
        );
        assert_eq!(receive_point(k(1)), None);
    }
}
