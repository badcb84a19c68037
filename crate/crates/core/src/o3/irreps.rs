use std::fmt;
use std::ops::Mul;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    /// Parity `(-1)^l` of the degree-`l` spherical harmonics.
    pub fn of_harmonic(l: u32) -> Self {
        if l % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }
}

impl Mul for Parity {
    type Output = Parity;

    fn mul(self, rhs: Parity) -> Parity {
        if self == rhs {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Irreducible representation of O(3): degree `l` with a parity label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Irrep {
    pub l: u32,
    pub parity: Parity,
}

impl Irrep {
    pub const SCALAR: Irrep = Irrep {
        l: 0,
        parity: Parity::Even,
    };

    pub fn new(l: u32, parity: Parity) -> Self {
        Self { l, parity }
    }

    /// The irrep carried by degree-`l` spherical harmonics.
    pub fn harmonic(l: u32) -> Self {
        Self::new(l, Parity::of_harmonic(l))
    }

    pub fn dim(self) -> usize {
        2 * self.l as usize + 1
    }

    pub fn is_scalar(self) -> bool {
        self == Self::SCALAR
    }

    /// Whether `self ⊗ other` contains `out`: triangle inequality plus
    /// multiplicative parity.
    pub fn couples_to(self, other: Irrep, out: Irrep) -> bool {
        triangle(self.l, other.l, out.l) && self.parity * other.parity == out.parity
    }
}

pub fn triangle(l1: u32, l2: u32, l: u32) -> bool {
    l1.abs_diff(l2) <= l && l <= l1 + l2
}

impl fmt::Display for Irrep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.parity {
            Parity::Even => 'e',
            Parity::Odd => 'o',
        };
        write!(f, "{}{}", self.l, p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Term {
    pub mult: usize,
    pub irrep: Irrep,
}

/// One copy of one irrep inside a layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub term: usize,
    pub copy: usize,
    pub irrep: Irrep,
    pub offset: usize,
}

/// Ordered direct sum `mult₁×irrep₁ ⊕ mult₂×irrep₂ ⊕ …`. Terms are kept in the
/// order given; repeated irreps are not merged.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IrrepsLayout {
    terms: Vec<Term>,
}

impl IrrepsLayout {
    pub fn new(terms: Vec<(usize, Irrep)>) -> Result<Self> {
        let terms: Vec<Term> = terms
            .into_iter()
            .map(|(mult, irrep)| Term { mult, irrep })
            .collect();
        let layout = Self { terms };
        if layout.terms.iter().any(|t| t.mult == 0) {
            return Err(Error::LayoutParse {
                input: layout.to_string(),
                reason: "multiplicities must be positive".into(),
            });
        }
        if layout.terms.is_empty() {
            return Err(Error::LayoutParse {
                input: String::new(),
                reason: "layout is empty".into(),
            });
        }
        Ok(layout)
    }

    /// `1x0e + 1x1o + … + 1x(lmax)` with harmonic parities.
    pub fn spherical_harmonics(lmax: u32) -> Self {
        Self {
            terms: (0..=lmax)
                .map(|l| Term {
                    mult: 1,
                    irrep: Irrep::harmonic(l),
                })
                .collect(),
        }
    }

    pub fn scalars(n: usize) -> Result<Self> {
        Self::new(vec![(n, Irrep::SCALAR)])
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.terms.iter().map(|t| t.mult * t.irrep.dim()).sum()
    }

    /// Start offset of every term.
    pub fn term_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.terms
            .iter()
            .map(|t| {
                let o = acc;
                acc += t.mult * t.irrep.dim();
                o
            })
            .collect()
    }

    pub fn slots(&self) -> Vec<Slot> {
        let mut out = Vec::new();
        let mut offset = 0;
        for (ti, t) in self.terms.iter().enumerate() {
            for copy in 0..t.mult {
                out.push(Slot {
                    term: ti,
                    copy,
                    irrep: t.irrep,
                    offset,
                });
                offset += t.irrep.dim();
            }
        }
        out
    }

    pub fn num_slots(&self) -> usize {
        self.terms.iter().map(|t| t.mult).sum()
    }

    pub fn lmax(&self) -> u32 {
        self.terms.iter().map(|t| t.irrep.l).max().unwrap_or(0)
    }

    /// Total multiplicity of `0e`.
    pub fn num_scalars(&self) -> usize {
        self.terms
            .iter()
            .filter(|t| t.irrep.is_scalar())
            .map(|t| t.mult)
            .sum()
    }

    pub fn contains(&self, irrep: Irrep) -> bool {
        self.terms.iter().any(|t| t.irrep == irrep)
    }

    /// Direct sum of `self` followed by `other`.
    pub fn concat(&self, other: &IrrepsLayout) -> IrrepsLayout {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        IrrepsLayout { terms }
    }

    /// Layout holding only the terms satisfying `keep`, or `None` if empty.
    pub fn filter(&self, keep: impl Fn(Irrep) -> bool) -> Option<IrrepsLayout> {
        let terms: Vec<Term> = self.terms.iter().copied().filter(|t| keep(t.irrep)).collect();
        (!terms.is_empty()).then_some(IrrepsLayout { terms })
    }
}

impl fmt::Display for IrrepsLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str("+")?;
            }
            write!(f, "{}x{}", t.mult, t.irrep)?;
        }
        Ok(())
    }
}

impl FromStr for IrrepsLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let fail = |reason: String| Error::LayoutParse {
            input: s.to_string(),
            reason,
        };
        if compact.is_empty() {
            return Err(fail("layout is empty".into()));
        }
        let mut terms = Vec::new();
        for term in compact.split('+') {
            let (mult, rest) = term
                .split_once('x')
                .ok_or_else(|| fail(format!("term `{term}` lacks `x`")))?;
            let mult: usize = mult
                .parse()
                .map_err(|_| fail(format!("bad multiplicity in `{term}`")))?;
            let parity = match rest.chars().last() {
                Some('e') => Parity::Even,
                Some('o') => Parity::Odd,
                _ => return Err(fail(format!("term `{term}` must end in `e` or `o`"))),
            };
            let l: u32 = rest[..rest.len() - 1]
                .parse()
                .map_err(|_| fail(format!("bad degree in `{term}`")))?;
            terms.push((mult, Irrep::new(l, parity)));
        }
        IrrepsLayout::new(terms).map_err(|e| match e {
            Error::LayoutParse { reason, .. } => fail(reason),
            other => other,
        })
    }
}

impl Serialize for IrrepsLayout {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for IrrepsLayout {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
