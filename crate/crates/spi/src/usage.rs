//! Multiplicities, point usages and signal usages.
//!
//! A multiplicity is one of `0`, `1`, `w` (unbounded). A point usage is a
//! triple of multiplicities giving the capability to emit, to receive during
//! the instant and to receive at the end of the instant. A signal usage is a
//! word `x y^w` of point usages drawn from the derived set of one of five
//! main usages; it is stored as `(kind, now, later)`.
//!
//! Every partial operation returns `None` when undefined.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Element of `{0, 1, w}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mult {
    Zero,
    One,
    Many,
}

// Partial operations, so not the `Add` and `Sub` traits.
#[allow(clippy::should_implement_trait)]
impl Mult {
    pub const ALL: [Mult; 3] = [Mult::Zero, Mult::One, Mult::Many];

    pub fn add(self, other: Mult) -> Option<Mult> {
        match (self, other) {
            (Mult::Zero, x) | (x, Mult::Zero) => Some(x),
            (Mult::Many, Mult::Many) => Some(Mult::Many),
            _ => None,
        }
    }

    /// `a <= b` iff `a + c = b` for some `c`.
    pub fn le(self, other: Mult) -> bool {
        Mult::ALL.iter().any(|&c| self.add(c) == Some(other))
    }

    /// Largest `c` with `self = other + c`.
    pub fn sub(self, other: Mult) -> Option<Mult> {
        let cands: Vec<Mult> = Mult::ALL
            .iter()
            .copied()
            .filter(|&c| other.add(c) == Some(self))
            .collect();
        cands
            .iter()
            .copied()
            .find(|&c| cands.iter().all(|&d| d.le(c)))
    }

    pub fn symbol(self) -> char {
        match self {
            Mult::Zero => '0',
            Mult::One => '1',
            Mult::Many => 'w',
        }
    }

    pub fn from_symbol(c: &str) -> Option<Mult> {
        match c {
            "0" => Some(Mult::Zero),
            "1" => Some(Mult::One),
            "w" => Some(Mult::Many),
            _ => None,
        }
    }
}

impl fmt::Display for Mult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// A point usage `(emit, receive now, receive at end of instant)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Point(pub Mult, pub Mult, pub Mult);

impl Point {
    pub fn comps(self) -> [Mult; 3] {
        [self.0, self.1, self.2]
    }

    fn from_comps(c: [Mult; 3]) -> Point {
        Point(c[0], c[1], c[2])
    }

    /// Componentwise sum, without any kind constraint.
    pub fn add_raw(self, other: Point) -> Option<Point> {
        Some(Point(
            self.0.add(other.0)?,
            self.1.add(other.1)?,
            self.2.add(other.2)?,
        ))
    }

    pub fn has_one(self) -> bool {
        self.comps().contains(&Mult::One)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0, self.1, self.2)
    }
}

/// Usage kind, `1..=5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Kind(u8);

impl Kind {
    pub const ALL: [Kind; 5] = [Kind(1), Kind(2), Kind(3), Kind(4), Kind(5)];

    pub fn new(k: u8) -> Option<Kind> {
        (1..=5).contains(&k).then_some(Kind(k))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn main(self) -> Point {
        use Mult::*;
        match self.0 {
            1 => Point(Many, Zero, Many),
            2 => Point(One, Many, Many),
            3 => Point(Many, Zero, One),
            4 => Point(One, Zero, One),
            _ => Point(One, One, Zero),
        }
    }

    /// Points obtained from the main usage by turning some `1`s into `0`s.
    pub fn derived(self) -> Vec<Point> {
        let main = self.main().comps();
        let ones: Vec<usize> = (0..3).filter(|&i| main[i] == Mult::One).collect();
        let mut out = Vec::new();
        for mask in 0..(1u32 << ones.len()) {
            let mut c = main;
            for (bit, &i) in ones.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    c[i] = Mult::Zero;
                }
            }
            out.push(Point::from_comps(c));
        }
        out
    }

    pub fn contains(self, p: Point) -> bool {
        self.derived().contains(&p)
    }

    pub fn affine_preserving(self) -> bool {
        self.0 >= 3
    }

    /// Sum of two points of this kind.
    pub fn add(self, a: Point, b: Point) -> Option<Point> {
        let s = a.add_raw(b)?;
        (self.contains(a) && self.contains(b) && self.contains(s)).then_some(s)
    }

    pub fn le(self, a: Point, b: Point) -> bool {
        self.derived()
            .into_iter()
            .any(|c| self.add(a, c) == Some(b))
    }

    /// Largest `c` of this kind with `a = b + c`.
    pub fn sub(self, a: Point, b: Point) -> Option<Point> {
        let cands: Vec<Point> = self
            .derived()
            .into_iter()
            .filter(|&c| self.add(b, c) == Some(a))
            .collect();
        cands
            .iter()
            .copied()
            .find(|&c| cands.iter().all(|&d| self.le(d, c)))
    }

    /// Least point of this kind.
    pub fn bottom(self) -> Point {
        self.least(|_| true)
            .expect("derived sets have a least element")
    }

    /// Least point satisfying `pred`, if the satisfying points have one.
    pub fn least(self, pred: impl Fn(Point) -> bool) -> Option<Point> {
        let cands: Vec<Point> = self.derived().into_iter().filter(|&p| pred(p)).collect();
        cands
            .iter()
            .copied()
            .find(|&c| cands.iter().all(|&d| self.le(c, d)))
    }

    pub fn join(self, a: Point, b: Point) -> Option<Point> {
        self.least(|p| self.le(a, p) && self.le(b, p))
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k{}", self.0)
    }
}

/// Signal usage `now · later^w` of a given kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Usage {
    kind: Kind,
    now: Point,
    later: Point,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UsageError {
    #[error("point {point} is not derived from the main usage of kind {kind}")]
    NotDerived { kind: Kind, point: Point },
    #[error("malformed usage literal `{0}`")]
    Syntax(String),
}

/// Classification flags of a usage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Class {
    pub affine: bool,
    pub uniform: bool,
    pub neutral: bool,
    pub affine_preserving: bool,
}

impl Usage {
    pub fn new(kind: Kind, now: Point, later: Point) -> Result<Usage, UsageError> {
        for p in [now, later] {
            if !kind.contains(p) {
                return Err(UsageError::NotDerived { kind, point: p });
            }
        }
        Ok(Usage { kind, now, later })
    }

    pub fn uniform(kind: Kind, p: Point) -> Result<Usage, UsageError> {
        Usage::new(kind, p, p)
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }
    pub fn now(&self) -> Point {
        self.now
    }
    pub fn later(&self) -> Point {
        self.later
    }

    /// Every usage of a kind.
    pub fn all(kind: Kind) -> Vec<Usage> {
        let d = kind.derived();
        let mut out = Vec::new();
        for &a in &d {
            for &b in &d {
                out.push(Usage {
                    kind,
                    now: a,
                    later: b,
                });
            }
        }
        out
    }

    /// The identity of addition within a kind.
    pub fn neutral(kind: Kind) -> Usage {
        Usage::all(kind)
            .into_iter()
            .find(|u| u.is_neutral())
            .expect("every kind has a neutral usage")
    }

    /// `main^w` of a kind.
    pub fn main(kind: Kind) -> Usage {
        Usage {
            kind,
            now: kind.main(),
            later: kind.main(),
        }
    }

    pub fn add(&self, other: &Usage) -> Option<Usage> {
        if self.kind != other.kind {
            return None;
        }
        let k = self.kind;
        Some(Usage {
            kind: k,
            now: k.add(self.now, other.now)?,
            later: k.add(self.later, other.later)?,
        })
    }

    pub fn le(&self, other: &Usage) -> bool {
        self.kind == other.kind
            && self.kind.le(self.now, other.now)
            && self.kind.le(self.later, other.later)
    }

    /// Largest `c` with `self = other + c`.
    pub fn sub(&self, other: &Usage) -> Option<Usage> {
        if self.kind != other.kind {
            return None;
        }
        let k = self.kind;
        Some(Usage {
            kind: k,
            now: k.sub(self.now, other.now)?,
            later: k.sub(self.later, other.later)?,
        })
    }

    /// Least upper bound in the usage order.
    pub fn join(&self, other: &Usage) -> Option<Usage> {
        if self.kind != other.kind {
            return None;
        }
        let k = self.kind;
        Some(Usage {
            kind: k,
            now: k.join(self.now, other.now)?,
            later: k.join(self.later, other.later)?,
        })
    }

    /// Drops the first character.
    pub fn shift(&self) -> Usage {
        Usage {
            kind: self.kind,
            now: self.later,
            later: self.later,
        }
    }

    pub fn is_affine(&self) -> bool {
        self.now.has_one() || self.later.has_one()
    }

    pub fn is_uniform(&self) -> bool {
        self.now == self.later
    }

    pub fn is_neutral(&self) -> bool {
        Usage::all(self.kind)
            .iter()
            .all(|w| self.add(w).as_ref() == Some(w))
    }

    pub fn classify(&self) -> Class {
        Class {
            affine: self.is_affine(),
            uniform: self.is_uniform(),
            neutral: self.is_neutral(),
            affine_preserving: self.kind.affine_preserving(),
        }
    }

    /// Usage with the kind's bottom now and `later` afterwards.
    pub fn delayed(kind: Kind, later: Point) -> Usage {
        Usage {
            kind,
            now: kind.bottom(),
            later,
        }
    }

    /// Usage with `now` first and the kind's bottom afterwards.
    pub fn once(kind: Kind, now: Point) -> Usage {
        Usage {
            kind,
            now,
            later: kind.bottom(),
        }
    }
}

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_uniform() {
            write!(f, "{}:{}w", self.kind, self.now)
        } else {
            write!(f, "{}:{}{}w", self.kind, self.now, self.later)
        }
    }
}

impl FromStr for Usage {
    type Err = UsageError;

    /// Accepts `k<kind>:(a,b,c)(a,b,c)w` and the uniform shorthand `k<kind>:(a,b,c)w`.
    fn from_str(s: &str) -> Result<Usage, UsageError> {
        let bad = || UsageError::Syntax(s.to_string());
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let rest = compact.strip_prefix('k').ok_or_else(bad)?;
        let (kind, rest) = rest.split_once(':').ok_or_else(bad)?;
        let kind = kind
            .parse::<u8>()
            .ok()
            .and_then(Kind::new)
            .ok_or_else(bad)?;
        let rest = rest.strip_suffix('w').ok_or_else(bad)?;
        let mut points = Vec::new();
        for chunk in rest.split(')') {
            if chunk.is_empty() {
                continue;
            }
            let inner = chunk.strip_prefix('(').ok_or_else(bad)?;
            let comps: Vec<Mult> = inner
                .split(',')
                .map(Mult::from_symbol)
                .collect::<Option<_>>()
                .ok_or_else(bad)?;
            if comps.len() != 3 {
                return Err(bad());
            }
            points.push(Point(comps[0], comps[1], comps[2]));
        }
        match points.as_slice() {
            [p] => Usage::new(kind, *p, *p),
            [a, b] => Usage::new(kind, *a, *b),
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Mult::*;

    fn u(s: &str) -> Usage {
        s.parse().unwrap()
    }

    #[test]
    fn mult_table() {
        assert_eq!(One.add(One), None);
        assert_eq!(One.add(Many), None);
        assert_eq!(Many.add(Many), Some(Many));
        assert_eq!(Many.sub(Many), Some(Many));
        assert_eq!(One.sub(One), Some(Zero));
        assert_eq!(One.sub(Zero), Some(One));
        assert!(!One.le(Many) && !Many.le(One));
        assert!(Zero.le(One) && Zero.le(Many));
    }

    #[test]
    fn kind5_decomposition() {
        let a = u("k5:(1,0,0)(0,1,0)w");
        let b = u("k5:(0,1,0)(1,0,0)w");
        assert_eq!(a.add(&b), Some(u("k5:(1,1,0)w")));
        assert_eq!(u("k5:(1,1,0)w").sub(&a), Some(b));
    }

    #[test]
    fn kind4_decomposition() {
        let a = u("k4:(0,0,1)(0,0,0)w");
        let b = u("k4:(0,0,0)(0,0,1)w");
        assert_eq!(a.add(&b), Some(u("k4:(0,0,1)w")));
    }

    #[test]
    fn cross_kind_rejected() {
        assert!(!u("k3:(w,0,1)w").le(&u("k1:(w,0,w)w")));
        assert_eq!(u("k4:(1,0,0)w").add(&u("k5:(0,1,0)w")), None);
    }

    #[test]
    fn literal_round_trip() {
        for k in Kind::ALL {
            for x in Usage::all(k) {
                assert_eq!(x.to_string().parse::<Usage>().unwrap(), x);
            }
        }
        assert!("k6:(1,0,0)w".parse::<Usage>().is_err());
        assert!("k4:(1,1,0)w".parse::<Usage>().is_err());
    }

    #[test]
    fn shift_examples() {
        assert_eq!(u("k5:(1,0,0)(0,1,0)w").shift(), u("k5:(0,1,0)w"));
        assert_eq!(u("k4:(0,0,1)w").shift(), u("k4:(0,0,1)w"));
    }

    #[test]
    fn classification_rows() {
        let c = Usage::main(Kind::new(1).unwrap()).classify();
        assert_eq!(
            c,
            Class {
                affine: false,
                uniform: true,
                neutral: true,
                affine_preserving: false
            }
        );
        let c = u("k5:(1,1,0)w").classify();
        assert_eq!(
            c,
            Class {
                affine: true,
                uniform: true,
                neutral: false,
                affine_preserving: true
            }
        );
    }
}
