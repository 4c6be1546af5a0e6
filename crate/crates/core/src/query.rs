//! Conjunctive queries and unions of conjunctive queries.

use std::collections::BTreeSet;
use std::fmt;

use crate::hom::find_homomorphisms;
use crate::schema::{Instance, Schema};
use crate::term::{atoms_vars, Atom, Term};
use crate::value::Value;
use crate::{Error, Result};

/// One conjunctive query: `head :- body`. Head terms are variables or
/// constants; every head variable must occur in the body.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Cq {
    pub head: Vec<Term>,
    pub body: Vec<Atom>,
}

impl Cq {
    pub fn new(head: Vec<Term>, body: Vec<Atom>) -> Self {
        Cq { head, body }
    }

    pub fn head_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.head.iter().for_each(|t| t.collect_vars(&mut out));
        out
    }

    /// Body variables not appearing in the head, in first-occurrence order.
    pub fn existential_vars(&self) -> Vec<String> {
        let head: BTreeSet<String> = self.head_vars().into_iter().collect();
        atoms_vars(&self.body)
            .into_iter()
            .filter(|v| !head.contains(v))
            .collect()
    }
}

/// Union of conjunctive queries over a single answer arity. The disjunct
/// list may be empty (a query that returns nothing); parsers reject that
/// form, but rewriting stages can produce it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ucq {
    pub name: String,
    pub arity: usize,
    pub disjuncts: Vec<Cq>,
}

impl Ucq {
    pub fn new(name: impl Into<String>, arity: usize, disjuncts: Vec<Cq>) -> Result<Self> {
        let name = name.into();
        for cq in &disjuncts {
            if cq.head.len() != arity {
                return Err(Error::Schema(format!(
                    "query {name}: disjunct head has {} terms, expected {arity}",
                    cq.head.len()
                )));
            }
        }
        Ok(Ucq {
            name,
            arity,
            disjuncts,
        })
    }

    /// Checks relations, arities, head terms, and head-variable safety
    /// against a schema.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        for cq in &self.disjuncts {
            for atom in &cq.body {
                match schema.arity(&atom.relation) {
                    None => {
                        return Err(Error::Schema(format!(
                            "query {}: unknown relation {} in {atom}",
                            self.name, atom.relation
                        )))
                    }
                    Some(n) if n != atom.args.len() => {
                        return Err(Error::Schema(format!(
                            "query {}: atom {atom} has {} arguments but {} has arity {n}",
                            self.name,
                            atom.args.len(),
                            atom.relation
                        )))
                    }
                    Some(_) => {}
                }
                if !atom.is_first_order() {
                    return Err(Error::Schema(format!(
                        "query {}: function application in body atom {atom}",
                        self.name
                    )));
                }
            }
            let body: BTreeSet<String> = atoms_vars(&cq.body).into_iter().collect();
            for t in &cq.head {
                match t {
                    Term::Var(v) => {
                        if !body.contains(v) {
                            return Err(Error::Schema(format!(
                                "query {}: head variable {v} does not occur in the body",
                                self.name
                            )));
                        }
                    }
                    Term::Const(_) => {}
                    Term::App(_, _) => {
                        return Err(Error::Schema(format!(
                            "query {}: function application in the head",
                            self.name
                        )))
                    }
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Ucq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, cq) in self.disjuncts.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "query {}(", self.name)?;
            for (j, t) in cq.head.iter().enumerate() {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{t}")?;
            }
            write!(f, ") :- ")?;
            for (j, a) in cq.body.iter().enumerate() {
                if j > 0 {
                    write!(f, " & ")?;
                }
                write!(f, "{a}")?;
            }
        }
        Ok(())
    }
}

/// Evaluates a union of conjunctive queries over an instance. Nulls and
/// compound values participate like ordinary values.
pub fn eval_ucq(q: &Ucq, inst: &Instance) -> Result<BTreeSet<Vec<Value>>> {
    let mut out = BTreeSet::new();
    for cq in &q.disjuncts {
        for h in find_homomorphisms(&cq.body, inst)? {
            let tuple: Vec<Value> = cq
                .head
                .iter()
                .map(|t| match t {
                    Term::Var(v) => h
                        .get(v)
                        .cloned()
                        .expect("head variables occur in the body"),
                    Term::Const(c) => Value::Const(c.clone()),
                    Term::App(_, _) => unreachable!("validated before evaluation"),
                })
                .collect();
            out.insert(tuple);
        }
    }
    Ok(out)
}

/// Evaluates a union of conjunctive queries and keeps only answer tuples
/// built entirely from constants. This is the certain-answer projection:
/// tuples mentioning labelled nulls or functional terms are discarded.
pub fn eval_ucq_nullfree(q: &Ucq, inst: &Instance) -> Result<BTreeSet<Vec<Value>>> {
    Ok(eval_ucq(q, inst)?
        .into_iter()
        .filter(|tuple| tuple.iter().all(Value::is_constant))
        .collect())
}
