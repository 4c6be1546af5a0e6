//! Homomorphism search: matching conjunctions of first-order atoms into an
//! instance.
//!
//! The search picks the atom with the most bound arguments next, which
//! keeps typical chase and query workloads close to linear. Results are
//! returned in sorted order, so every caller inherits determinism.

use std::collections::BTreeMap;

use crate::schema::Instance;
use crate::term::{Atom, Term};
use crate::value::Value;
use crate::{Error, Result};

pub type Assignment = BTreeMap<String, Value>;

/// All homomorphisms from `pattern` into `inst`, sorted.
pub fn find_homomorphisms(pattern: &[Atom], inst: &Instance) -> Result<Vec<Assignment>> {
    extend_homomorphisms(pattern, inst, &Assignment::new())
}

/// All extensions of `seed` matching `pattern` into `inst`, sorted.
/// Variables bound by the seed must match; the rest are solved for.
pub fn extend_homomorphisms(
    pattern: &[Atom],
    inst: &Instance,
    seed: &Assignment,
) -> Result<Vec<Assignment>> {
    let mut search = Search::new(pattern, inst, false)?;
    let mut out = Vec::new();
    let mut assignment = seed.clone();
    let mut remaining: Vec<usize> = (0..pattern.len()).collect();
    search.run(&mut remaining, &mut assignment, &mut |h| out.push(h));
    out.sort();
    out.dedup();
    Ok(out)
}

/// True when at least one extension of `seed` matches `pattern`.
pub fn exists_extension(pattern: &[Atom], inst: &Instance, seed: &Assignment) -> Result<bool> {
    let mut search = Search::new(pattern, inst, true)?;
    let mut assignment = seed.clone();
    let mut remaining: Vec<usize> = (0..pattern.len()).collect();
    let mut any = false;
    search.run(&mut remaining, &mut assignment, &mut |_| any = true);
    Ok(any)
}

struct Search<'a> {
    pattern: &'a [Atom],
    inst: &'a Instance,
    stop_at_first: bool,
    done: bool,
}

impl<'a> Search<'a> {
    fn new(pattern: &'a [Atom], inst: &'a Instance, stop_at_first: bool) -> Result<Self> {
        for atom in pattern {
            if !atom.is_first_order() {
                return Err(Error::Unsupported(format!(
                    "cannot match atom {atom}: function applications have no interpretation in an instance"
                )));
            }
        }
        Ok(Search {
            pattern,
            inst,
            stop_at_first,
            done: false,
        })
    }

    fn run(
        &mut self,
        remaining: &mut Vec<usize>,
        assignment: &mut Assignment,
        emit: &mut dyn FnMut(Assignment),
    ) {
        if self.done {
            return;
        }
        if remaining.is_empty() {
            emit(assignment.clone());
            if self.stop_at_first {
                self.done = true;
            }
            return;
        }
        // Most-constrained next: maximize bound arguments, break ties by
        // the smaller candidate tuple set, then by position.
        let (slot, _) = remaining
            .iter()
            .enumerate()
            .map(|(slot, &idx)| {
                let atom = &self.pattern[idx];
                let bound = atom
                    .args
                    .iter()
                    .filter(|t| match t {
                        Term::Const(_) => true,
                        Term::Var(v) => assignment.contains_key(v),
                        Term::App(_, _) => false,
                    })
                    .count();
                let tuples = self.inst.tuples(&atom.relation).count();
                (slot, (usize::MAX - bound, tuples, slot))
            })
            .min_by_key(|(_, key)| *key)
            .expect("remaining is nonempty");
        let idx = remaining.swap_remove(slot);
        let atom = &self.pattern[idx];

        // Tuples iterate in canonical order, so bindings are explored in
        // canonical order too.
        let tuples: Vec<&Vec<Value>> = self.inst.tuples(&atom.relation).collect();
        for tuple in tuples {
            if tuple.len() != atom.args.len() {
                continue;
            }
            let mut bound_here: Vec<&str> = Vec::new();
            let mut ok = true;
            for (term, value) in atom.args.iter().zip(tuple) {
                match term {
                    Term::Const(c) => {
                        if !matches!(value, Value::Const(vc) if vc == c) {
                            ok = false;
                            break;
                        }
                    }
                    Term::Var(v) => match assignment.get(v) {
                        Some(bound) => {
                            if bound != value {
                                ok = false;
                                break;
                            }
                        }
                        None => {
                            assignment.insert(v.clone(), value.clone());
                            bound_here.push(v);
                        }
                    },
                    Term::App(_, _) => unreachable!("rejected in Search::new"),
                }
            }
            if ok {
                self.run(remaining, assignment, emit);
            }
            for v in bound_here {
                assignment.remove(v);
            }
            if self.done {
                break;
            }
        }
        remaining.push(idx);
        let last = remaining.len() - 1;
        remaining.swap(slot, last);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Fact;
    use crate::term::Term;

    fn fact(rel: &str, args: &[&str]) -> Fact {
        Fact::new(rel, args.iter().map(|s| Value::str(*s)).collect())
    }

    fn atom(rel: &str, vars: &[&str]) -> Atom {
        Atom::new(rel, vars.iter().map(|v| Term::var(*v)).collect())
    }

    #[test]
    fn join_enumerates_all_matches() {
        let inst = Instance::from_facts([
            fact("E", &["a", "b"]),
            fact("E", &["b", "c"]),
            fact("E", &["a", "c"]),
        ]);
        let pattern = vec![atom("E", &["x", "y"]), atom("E", &["y", "z"])];
        let homs = find_homomorphisms(&pattern, &inst).unwrap();
        // Only the a->b->c chain joins.
        assert_eq!(homs.len(), 1);
        assert_eq!(homs[0]["x"], Value::str("a"));
        assert_eq!(homs[0]["y"], Value::str("b"));
        assert_eq!(homs[0]["z"], Value::str("c"));
    }

    #[test]
    fn enumeration_is_complete() {
        let inst = Instance::from_facts([
            fact("R", &["a"]),
            fact("R", &["b"]),
            fact("S", &["c"]),
            fact("S", &["d"]),
        ]);
        let homs =
            find_homomorphisms(&[atom("R", &["x"]), atom("S", &["y"])], &inst).unwrap();
        assert_eq!(homs.len(), 4);
    }

    #[test]
    fn repeated_variables_constrain() {
        let inst = Instance::from_facts([fact("E", &["a", "a"]), fact("E", &["a", "b"])]);
        let homs = find_homomorphisms(&[atom("E", &["x", "x"])], &inst).unwrap();
        assert_eq!(homs.len(), 1);
        assert_eq!(homs[0]["x"], Value::str("a"));
    }

    #[test]
    fn constants_filter_tuples() {
        let inst = Instance::from_facts([fact("E", &["a", "b"]), fact("E", &["c", "b"])]);
        let pattern = vec![Atom::new(
            "E",
            vec![Term::Const(crate::value::Constant::str("a")), Term::var("y")],
        )];
        let homs = find_homomorphisms(&pattern, &inst).unwrap();
        assert_eq!(homs.len(), 1);
        assert_eq!(homs[0]["y"], Value::str("b"));
    }

    #[test]
    fn seed_must_be_respected() {
        let inst = Instance::from_facts([fact("E", &["a", "b"]), fact("E", &["c", "d"])]);
        let mut seed = Assignment::new();
        seed.insert("x".to_string(), Value::str("c"));
        let homs = extend_homomorphisms(&[atom("E", &["x", "y"])], &inst, &seed).unwrap();
        assert_eq!(homs.len(), 1);
        assert_eq!(homs[0]["y"], Value::str("d"));
        assert!(exists_extension(&[atom("E", &["x", "y"])], &inst, &seed).unwrap());
        seed.insert("x".to_string(), Value::str("zzz"));
        assert!(!exists_extension(&[atom("E", &["x", "y"])], &inst, &seed).unwrap());
    }

    #[test]
    fn empty_pattern_yields_seed() {
        let inst = Instance::empty();
        let homs = find_homomorphisms(&[], &inst).unwrap();
        assert_eq!(homs, vec![Assignment::new()]);
    }

    #[test]
    fn missing_relation_yields_nothing() {
        let inst = Instance::from_facts([fact("E", &["a", "b"])]);
        let homs = find_homomorphisms(&[atom("Q", &["x"])], &inst).unwrap();
        assert!(homs.is_empty());
    }

    #[test]
    fn results_are_sorted() {
        let inst = Instance::from_facts([
            fact("R", &["b"]),
            fact("R", &["a"]),
            fact("R", &["c"]),
        ]);
        let homs = find_homomorphisms(&[atom("R", &["x"])], &inst).unwrap();
        let vals: Vec<&Value> = homs.iter().map(|h| &h["x"]).collect();
        assert_eq!(vals, vec![&Value::str("a"), &Value::str("b"), &Value::str("c")]);
    }

    #[test]
    fn nulls_match_like_any_value() {
        let inst = Instance::from_facts([
            Fact::new("T", vec![Value::str("a"), Value::Null(1)]),
            Fact::new("T", vec![Value::str("b"), Value::Null(1)]),
        ]);
        let pattern = vec![atom("T", &["x", "u"]), atom("T", &["y", "u"])];
        let homs = find_homomorphisms(&pattern, &inst).unwrap();
        // u must be the shared null; x and y range over a, b.
        assert_eq!(homs.len(), 4);
        assert!(homs.iter().all(|h| h["u"] == Value::Null(1)));
    }
}
