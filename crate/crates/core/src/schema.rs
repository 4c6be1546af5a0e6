//! Relational schemas, facts, and instances.
//!
//! An instance is an ordered set of facts, so iteration order, equality,
//! and serialization are all canonical. Instances do not carry their
//! schema; validation happens where a schema is in scope.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use indexmap::IndexMap;

use crate::value::{Constant, Value};
use crate::{Error, Result};

/// Relation names with arities, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schema {
    relations: IndexMap<String, usize>,
}

impl Schema {
    pub fn new() -> Self {
        Schema::default()
    }

    pub fn from_pairs<I, S>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, usize)>,
        S: Into<String>,
    {
        let mut s = Schema::new();
        for (name, arity) in pairs {
            s.declare(name.into(), arity)?;
        }
        Ok(s)
    }

    pub fn declare(&mut self, name: impl Into<String>, arity: usize) -> Result<()> {
        let name = name.into();
        if let Some(&prev) = self.relations.get(&name) {
            if prev != arity {
                return Err(Error::Schema(format!(
                    "relation {name} declared with arity {arity} but already has arity {prev}"
                )));
            }
            return Ok(());
        }
        self.relations.insert(name, arity);
        Ok(())
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.relations.get(name).copied()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.relations.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    /// Relations in declaration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.relations.iter().map(|(n, &a)| (n.as_str(), a))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.relations.keys().map(String::as_str)
    }

    pub fn is_disjoint_from(&self, other: &Schema) -> bool {
        self.relations.keys().all(|n| !other.contains(n))
    }

    /// Union of two schemas; arities must agree on shared names.
    pub fn union(&self, other: &Schema) -> Result<Schema> {
        let mut out = self.clone();
        for (name, arity) in other.iter() {
            out.declare(name, arity)?;
        }
        Ok(out)
    }

    /// Keeps only the named relations, preserving declaration order.
    pub fn restrict(&self, keep: &BTreeSet<String>) -> Schema {
        Schema {
            relations: self
                .relations
                .iter()
                .filter(|(n, _)| keep.contains(*n))
                .map(|(n, a)| (n.clone(), *a))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub relation: String,
    pub args: Vec<Value>,
}

impl Fact {
    pub fn new(relation: impl Into<String>, args: Vec<Value>) -> Self {
        Fact {
            relation: relation.into(),
            args,
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.relation)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// Ordered set of facts, indexed by relation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Instance {
    tuples: BTreeMap<String, BTreeSet<Vec<Value>>>,
}

impl Instance {
    pub fn empty() -> Self {
        Instance::default()
    }

    /// Builds an instance, checking every fact against `schema`.
    pub fn new(schema: &Schema, facts: impl IntoIterator<Item = Fact>) -> Result<Self> {
        let mut inst = Instance::empty();
        for fact in facts {
            match schema.arity(&fact.relation) {
                None => {
                    return Err(Error::Schema(format!(
                        "fact {fact} uses undeclared relation {}",
                        fact.relation
                    )))
                }
                Some(a) if a != fact.args.len() => {
                    return Err(Error::Schema(format!(
                        "fact {fact} has {} arguments but {} has arity {a}",
                        fact.args.len(),
                        fact.relation
                    )))
                }
                Some(_) => inst.insert(fact),
            }
        }
        Ok(inst)
    }

    pub fn from_facts(facts: impl IntoIterator<Item = Fact>) -> Self {
        let mut inst = Instance::empty();
        for f in facts {
            inst.insert(f);
        }
        inst
    }

    pub fn insert(&mut self, fact: Fact) {
        self.tuples.entry(fact.relation).or_default().insert(fact.args);
    }

    pub fn contains(&self, fact: &Fact) -> bool {
        self.tuples
            .get(&fact.relation)
            .is_some_and(|ts| ts.contains(&fact.args))
    }

    pub fn remove(&mut self, fact: &Fact) -> bool {
        let Some(ts) = self.tuples.get_mut(&fact.relation) else {
            return false;
        };
        let removed = ts.remove(&fact.args);
        if ts.is_empty() {
            self.tuples.remove(&fact.relation);
        }
        removed
    }

    pub fn len(&self) -> usize {
        self.tuples.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Facts in canonical order: relation name, then tuple.
    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.tuples.iter().flat_map(|(rel, ts)| {
            ts.iter().map(move |args| Fact::new(rel.clone(), args.clone()))
        })
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.tuples.keys().map(String::as_str)
    }

    pub fn tuples(&self, relation: &str) -> impl Iterator<Item = &Vec<Value>> {
        self.tuples.get(relation).into_iter().flatten()
    }

    pub fn is_subset_of(&self, other: &Instance) -> bool {
        self.tuples.iter().all(|(rel, ts)| {
            other
                .tuples
                .get(rel)
                .is_some_and(|os| ts.is_subset(os))
        })
    }

    pub fn union(&self, other: &Instance) -> Instance {
        let mut out = self.clone();
        for fact in other.facts() {
            out.insert(fact);
        }
        out
    }

    /// Facts in exactly one of the two instances.
    pub fn symmetric_difference(&self, other: &Instance) -> Instance {
        let mut out = Instance::empty();
        for f in self.facts() {
            if !other.contains(&f) {
                out.insert(f);
            }
        }
        for f in other.facts() {
            if !self.contains(&f) {
                out.insert(f);
            }
        }
        out
    }

    /// Keeps the facts of the named relations.
    pub fn restrict_to<'a>(&self, relations: impl IntoIterator<Item = &'a str>) -> Instance {
        let keep: BTreeSet<&str> = relations.into_iter().collect();
        Instance {
            tuples: self
                .tuples
                .iter()
                .filter(|(rel, _)| keep.contains(rel.as_str()))
                .map(|(rel, ts)| (rel.clone(), ts.clone()))
                .collect(),
        }
    }

    /// All values appearing in facts (top-level positions).
    pub fn values(&self) -> BTreeSet<Value> {
        self.tuples
            .values()
            .flatten()
            .flat_map(|args| args.iter().cloned())
            .collect()
    }

    /// Constants of the active domain. Compound values contribute the
    /// constants at their leaves.
    pub fn constants(&self) -> BTreeSet<Constant> {
        fn collect(v: &Value, out: &mut BTreeSet<Constant>) {
            match v {
                Value::Const(c) => {
                    out.insert(c.clone());
                }
                Value::Null(_) => {}
                Value::Compound(_, args) => args.iter().for_each(|a| collect(a, out)),
            }
        }
        let mut out = BTreeSet::new();
        for args in self.tuples.values().flatten() {
            for v in args {
                collect(v, &mut out);
            }
        }
        out
    }

    pub fn has_nulls(&self) -> bool {
        self.tuples
            .values()
            .flatten()
            .flat_map(|args| args.iter())
            .any(Value::contains_null)
    }

    /// Replaces every occurrence of `from` with `to` across all facts.
    pub fn substitute(&self, from: &Value, to: &Value) -> Instance {
        let mut out = Instance::empty();
        for fact in self.facts() {
            out.insert(Fact::new(
                fact.relation,
                fact.args.iter().map(|a| a.substitute(from, to)).collect(),
            ));
        }
        out
    }
}

impl FromIterator<Fact> for Instance {
    fn from_iter<T: IntoIterator<Item = Fact>>(iter: T) -> Self {
        Instance::from_facts(iter)
    }
}
