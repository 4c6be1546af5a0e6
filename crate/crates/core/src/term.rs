//! Terms and atoms as they appear in constraints and queries.

use std::collections::BTreeMap;
use std::fmt;

use crate::value::{Constant, Value};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Var(String),
    Const(Constant),
    /// Function application; only second-order constraints use these.
    App(String, Vec<Term>),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term::Var(name.into())
    }

    pub fn is_first_order(&self) -> bool {
        match self {
            Term::Var(_) | Term::Const(_) => true,
            Term::App(_, _) => false,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::Var(_) | Term::Const(_) => 0,
            Term::App(_, args) => 1 + args.iter().map(Term::depth).max().unwrap_or(0),
        }
    }

    /// Variables in first-occurrence order (left to right, depth first).
    pub fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Term::Var(v) => {
                if !out.iter().any(|x| x == v) {
                    out.push(v.clone());
                }
            }
            Term::Const(_) => {}
            Term::App(_, args) => args.iter().for_each(|t| t.collect_vars(out)),
        }
    }

    pub fn mentions_var(&self, name: &str) -> bool {
        match self {
            Term::Var(v) => v == name,
            Term::Const(_) => false,
            Term::App(_, args) => args.iter().any(|t| t.mentions_var(name)),
        }
    }

    /// Applies a variable-to-term substitution.
    pub fn apply(&self, subst: &BTreeMap<String, Term>) -> Term {
        match self {
            Term::Var(v) => subst.get(v).cloned().unwrap_or_else(|| self.clone()),
            Term::Const(_) => self.clone(),
            Term::App(f, args) => {
                Term::App(f.clone(), args.iter().map(|t| t.apply(subst)).collect())
            }
        }
    }

    /// Evaluates the term to a ground value under a variable assignment.
    /// Returns `None` if some variable is unassigned.
    pub fn evaluate(&self, assignment: &BTreeMap<String, Value>) -> Option<Value> {
        match self {
            Term::Var(v) => assignment.get(v).cloned(),
            Term::Const(c) => Some(Value::Const(c.clone())),
            Term::App(f, args) => {
                let vals: Option<Vec<Value>> =
                    args.iter().map(|t| t.evaluate(assignment)).collect();
                Some(Value::Compound(f.clone(), vals?))
            }
        }
    }

    /// Function symbols used in the term, with arities.
    pub fn collect_functions(&self, out: &mut BTreeMap<String, usize>) {
        if let Term::App(f, args) = self {
            out.insert(f.clone(), args.len());
            args.iter().for_each(|t| t.collect_functions(out));
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "{c}"),
            Term::App(name, args) => {
                write!(f, "{name}(")?;
                for (i, t) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub relation: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(relation: impl Into<String>, args: Vec<Term>) -> Self {
        Atom {
            relation: relation.into(),
            args,
        }
    }

    pub fn is_first_order(&self) -> bool {
        self.args.iter().all(Term::is_first_order)
    }

    /// Variables in first-occurrence order.
    pub fn collect_vars(&self, out: &mut Vec<String>) {
        self.args.iter().for_each(|t| t.collect_vars(out));
    }

    pub fn apply(&self, subst: &BTreeMap<String, Term>) -> Atom {
        Atom {
            relation: self.relation.clone(),
            args: self.args.iter().map(|t| t.apply(subst)).collect(),
        }
    }
}

/// Variables of a sequence of atoms, in first-occurrence order.
pub fn atoms_vars(atoms: &[Atom]) -> Vec<String> {
    let mut out = Vec::new();
    atoms.iter().for_each(|a| a.collect_vars(&mut out));
    out
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, t) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, ")")
    }
}
