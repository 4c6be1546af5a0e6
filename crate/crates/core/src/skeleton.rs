//! Skeletons: the shape of a term with every constant and variable
//! replaced by a hole.
//!
//! Rewriting function symbols out of a mapping represents each compound
//! value by the skeleton of its term, baked into a relation name, plus
//! the leaf values that fill the holes in left-to-right order. A column
//! of shape `f[00]` therefore spans two value columns.

use std::fmt;

use indexmap::IndexMap;

use crate::term::Term;

/// Shape of a term: function structure kept, leaves abstracted away.
/// `Hole` sorts before applications, so flat shapes enumerate first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Skeleton {
    Hole,
    App(String, Vec<Skeleton>),
}

impl Skeleton {
    /// Number of holes: how many value columns a column of this shape
    /// occupies.
    pub fn arity(&self) -> usize {
        match self {
            Skeleton::Hole => 1,
            Skeleton::App(_, args) => args.iter().map(Skeleton::arity).sum(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Skeleton::Hole => 0,
            Skeleton::App(_, args) => 1 + args.iter().map(Skeleton::depth).max().unwrap_or(0),
        }
    }

    pub fn of_term(term: &Term) -> Skeleton {
        match term {
            Term::Var(_) | Term::Const(_) => Skeleton::Hole,
            Term::App(f, args) => {
                Skeleton::App(f.clone(), args.iter().map(Skeleton::of_term).collect())
            }
        }
    }

    /// Replaces the i-th hole by `parts[i]`. `parts` must have exactly
    /// `arity` entries.
    pub fn compose(&self, parts: &[Skeleton]) -> Skeleton {
        assert_eq!(parts.len(), self.arity(), "compose arity mismatch");
        let mut next = 0;
        self.fill(parts, &mut next)
    }

    fn fill(&self, parts: &[Skeleton], next: &mut usize) -> Skeleton {
        match self {
            Skeleton::Hole => {
                let s = parts[*next].clone();
                *next += 1;
                s
            }
            Skeleton::App(f, args) => Skeleton::App(
                f.clone(),
                args.iter().map(|a| a.fill(parts, next)).collect(),
            ),
        }
    }

    /// Compact name fragment: a hole is `0`, an application wraps its
    /// argument encodings in square brackets, so `f(g(.,.),.)` becomes
    /// `f[g[00]0]`. Brackets keep the encoding injective and the text
    /// format accepts them inside identifiers.
    pub fn encode(&self) -> String {
        match self {
            Skeleton::Hole => "0".to_string(),
            Skeleton::App(f, args) => {
                let inner: String = args.iter().map(Skeleton::encode).collect();
                format!("{f}[{inner}]")
            }
        }
    }
}

impl fmt::Display for Skeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.encode())
    }
}

/// Relation name carrying one shape per original column: `T_0_f[00]`.
pub fn relation_name(base: &str, shapes: &[Skeleton]) -> String {
    let mut out = base.to_string();
    for s in shapes {
        out.push('_');
        out.push_str(&s.encode());
    }
    out
}

/// All shapes of depth at most `max_depth` over the given function
/// symbols, sorted. Grows as a tower of products in `max_depth`; callers
/// bound the budget before instantiating constraints over the result.
pub fn enumerate_up_to(functions: &IndexMap<String, usize>, max_depth: usize) -> Vec<Skeleton> {
    let mut names: Vec<(&str, usize)> = functions
        .iter()
        .map(|(f, &n)| (f.as_str(), n))
        .collect();
    names.sort();
    let mut layer = vec![Skeleton::Hole];
    for _ in 0..max_depth {
        let mut next = vec![Skeleton::Hole];
        for &(f, n) in &names {
            // Odometer over argument choices from the previous layer.
            let mut idx = vec![0usize; n];
            loop {
                let args: Vec<Skeleton> = idx.iter().map(|&i| layer[i].clone()).collect();
                next.push(Skeleton::App(f.to_string(), args));
                let mut pos = n;
                while pos > 0 {
                    idx[pos - 1] += 1;
                    if idx[pos - 1] < layer.len() {
                        break;
                    }
                    idx[pos - 1] = 0;
                    pos -= 1;
                }
                if pos == 0 {
                    break;
                }
            }
        }
        next.sort();
        next.dedup();
        layer = next;
    }
    layer
}

/// Leaf terms of `term` in left-to-right order, duplicates kept: the
/// arguments that fill the holes of its skeleton.
pub fn leaves(term: &Term) -> Vec<Term> {
    match term {
        Term::Var(_) | Term::Const(_) => vec![term.clone()],
        Term::App(_, args) => args.iter().flat_map(leaves).collect(),
    }
}
