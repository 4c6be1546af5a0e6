//! GAV unfolding: rewriting target queries and target egds to the
//! source schema.
//!
//! For a mapping whose source-to-target constraints are GAV tgds (full
//! tgds count, split one head atom per rule) and whose target
//! constraints are egds only, every target atom can be replaced by the
//! body of a rule defining its relation. Unfolding the target egds
//! yields source egds whose subset-repairs are exactly the source
//! repairs of the mapping, so XR-certain answers reduce to consistent
//! query answering over the source.

use std::collections::{BTreeMap, BTreeSet};

use crate::mapping::{split_full_to_gav, Egd, SchemaMapping, StConstraint, TargetConstraint, Tgd};
use crate::query::{eval_ucq_nullfree, Cq, Ucq};
use crate::repair::{egd_subset_repairs, RepairOptions};
use crate::schema::Instance;
use crate::term::{atoms_vars, Atom, Term};
use crate::value::Value;
use crate::{Error, Result};

/// Variable bindings accumulated while matching rule heads against
/// target atoms. Bindings form no cycles: a variable is only ever bound
/// while unresolved, and always to an already-resolved term.
#[derive(Debug, Clone, Default)]
struct Unifier {
    binding: BTreeMap<String, Term>,
}

impl Unifier {
    fn resolve(&self, t: &Term) -> Term {
        let mut current = t.clone();
        while let Term::Var(v) = &current {
            match self.binding.get(v) {
                Some(next) => current = next.clone(),
                None => break,
            }
        }
        current
    }

    /// Unifies two terms; false means two distinct constants collided
    /// and the enclosing combination must be discarded.
    fn merge(&mut self, a: &Term, b: &Term) -> bool {
        let ra = self.resolve(a);
        let rb = self.resolve(b);
        if ra == rb {
            return true;
        }
        match (ra, rb) {
            (Term::Var(v), t) | (t, Term::Var(v)) => {
                self.binding.insert(v, t);
                true
            }
            _ => false,
        }
    }

    fn apply_atom(&self, atom: &Atom) -> Atom {
        Atom {
            relation: atom.relation.clone(),
            args: atom.args.iter().map(|t| self.resolve(t)).collect(),
        }
    }
}

/// Defining rules per target relation, in constraint order. Heads must
/// be variable-only; a constant head argument has no counterpart in the
/// unfolding definition.
fn definitions(st_tgds: &[&Tgd]) -> Result<BTreeMap<String, Vec<Tgd>>> {
    let mut defs: BTreeMap<String, Vec<Tgd>> = BTreeMap::new();
    for tgd in st_tgds {
        for gav in split_full_to_gav(tgd)? {
            let head = &gav.head[0];
            if head.args.iter().any(|t| !matches!(t, Term::Var(_))) {
                return Err(Error::Unsupported(format!(
                    "unfolding requires variable-only rule heads, but a rule defines {head}"
                )));
            }
            defs.entry(head.relation.clone()).or_default().push(gav);
        }
    }
    Ok(defs)
}

struct FreshNames<'a> {
    forbidden: &'a BTreeSet<String>,
    next: usize,
}

impl<'a> FreshNames<'a> {
    fn take(&mut self) -> String {
        loop {
            let name = format!("u{}", self.next);
            self.next += 1;
            if !self.forbidden.contains(&name) {
                return name;
            }
        }
    }
}

/// One way of unfolding a list of target atoms: the substituted source
/// atoms plus the unifier that must be applied to surrounding terms.
struct Combination {
    atoms: Vec<Atom>,
    unifier: Unifier,
    fresh_next: usize,
}

/// Expands target atoms into source-atom combinations: the cartesian
/// product of defining-rule choices per atom. An atom over a relation
/// with no defining rule kills every combination through it.
fn unfold_atoms(
    atoms: &[Atom],
    defs: &BTreeMap<String, Vec<Tgd>>,
    forbidden: &BTreeSet<String>,
) -> Result<Vec<(Vec<Atom>, Unifier)>> {
    let mut partial = vec![Combination {
        atoms: Vec::new(),
        unifier: Unifier::default(),
        fresh_next: 0,
    }];
    for atom in atoms {
        let choices = match defs.get(&atom.relation) {
            Some(c) => c,
            None => return Ok(Vec::new()),
        };
        let mut grown = Vec::new();
        for combo in &partial {
            'choice: for rule in choices {
                let mut names = FreshNames {
                    forbidden,
                    next: combo.fresh_next,
                };
                let mut rename: BTreeMap<String, Term> = BTreeMap::new();
                for var in rule.body_vars() {
                    rename.insert(var, Term::Var(names.take()));
                }
                let mut unifier = combo.unifier.clone();
                let head = &rule.head[0];
                for (head_arg, atom_arg) in head.args.iter().zip(&atom.args) {
                    let renamed = head_arg.apply(&rename);
                    if !unifier.merge(&renamed, atom_arg) {
                        continue 'choice;
                    }
                }
                let mut atoms_acc = combo.atoms.clone();
                atoms_acc.extend(rule.body.iter().map(|a| a.apply(&rename)));
                grown.push(Combination {
                    atoms: atoms_acc,
                    unifier,
                    fresh_next: names.next,
                });
            }
        }
        partial = grown;
        if partial.is_empty() {
            return Ok(Vec::new());
        }
    }
    Ok(partial
        .into_iter()
        .map(|c| {
            let atoms = c.atoms.iter().map(|a| c.unifier.apply_atom(a)).collect();
            (atoms, c.unifier)
        })
        .collect())
}

/// Unfolds a union of conjunctive queries over the target into one over
/// the source: the union, across disjuncts, of every combination of
/// per-atom rule choices. A result with no disjuncts means the query
/// can never produce answers over the source.
pub fn gav_unfold_query(q: &Ucq, st_tgds: &[&Tgd]) -> Result<Ucq> {
    let defs = definitions(st_tgds)?;
    let mut disjuncts = Vec::new();
    for cq in &q.disjuncts {
        let mut forbidden: BTreeSet<String> = atoms_vars(&cq.body).into_iter().collect();
        for t in &cq.head {
            if let Term::Var(v) = t {
                forbidden.insert(v.clone());
            }
        }
        for (atoms, unifier) in unfold_atoms(&cq.body, &defs, &forbidden)? {
            let head = cq.head.iter().map(|t| unifier.resolve(t)).collect();
            disjuncts.push(Cq { head, body: atoms });
        }
    }
    Ucq::new(format!("{}_s", q.name), q.arity, disjuncts)
}

/// Unfolds target egds into source egds, one per combination of rule
/// choices. Combinations whose sides unify away are dropped (the egd
/// became trivial); combinations forcing a side to a constant are not
/// expressible as an egd here.
pub fn gav_unfold_egds(egds: &[&Egd], st_tgds: &[&Tgd]) -> Result<Vec<Egd>> {
    let defs = definitions(st_tgds)?;
    let mut out = Vec::new();
    for egd in egds {
        let mut forbidden: BTreeSet<String> = atoms_vars(&egd.body).into_iter().collect();
        forbidden.insert(egd.left.clone());
        forbidden.insert(egd.right.clone());
        for (atoms, unifier) in unfold_atoms(&egd.body, &defs, &forbidden)? {
            let left = unifier.resolve(&Term::Var(egd.left.clone()));
            let right = unifier.resolve(&Term::Var(egd.right.clone()));
            match (left, right) {
                (l, r) if l == r => continue,
                (Term::Var(l), Term::Var(r)) => out.push(Egd::new(atoms, l, r)),
                _ => {
                    return Err(Error::Unsupported(format!(
                        "unfolding {} pins one side of the equality to a constant",
                        egd
                    )))
                }
            }
        }
    }
    Ok(out)
}

/// The source-schema rewriting of a GAV+egd mapping: source egds that
/// characterize solvability, plus query unfolding over the same rules.
#[derive(Debug, Clone)]
pub struct SourceRewriting {
    pub source_egds: Vec<Egd>,
    gav_st: Vec<Tgd>,
}

impl SourceRewriting {
    /// Checks the mapping class (GAV source-to-target constraints,
    /// egd-only target constraints) and unfolds the target egds.
    pub fn build(m: &SchemaMapping) -> Result<Self> {
        let mut st = Vec::new();
        for c in &m.st {
            match c {
                StConstraint::Tgd(t) if t.is_full() => st.push(t.clone()),
                StConstraint::Tgd(t) => {
                    return Err(Error::Class(format!(
                        "source rewriting needs GAV source-to-target constraints, but {t} invents values"
                    )))
                }
                StConstraint::So(s) => {
                    return Err(Error::Class(format!(
                        "source rewriting needs GAV source-to-target constraints, but {s} is second-order"
                    )))
                }
            }
        }
        let mut egds = Vec::new();
        for c in &m.t {
            match c {
                TargetConstraint::Egd(e) => egds.push(e),
                TargetConstraint::Tgd(t) => {
                    return Err(Error::Class(format!(
                        "source rewriting supports egd-only target constraints, but found {t}"
                    )))
                }
                TargetConstraint::So(s) => {
                    return Err(Error::Class(format!(
                        "source rewriting supports egd-only target constraints, but found {s}"
                    )))
                }
            }
        }
        let st_refs: Vec<&Tgd> = st.iter().collect();
        let source_egds = gav_unfold_egds(&egds, &st_refs)?;
        Ok(SourceRewriting {
            source_egds,
            gav_st: st,
        })
    }

    pub fn unfold_query(&self, q: &Ucq) -> Result<Ucq> {
        let st_refs: Vec<&Tgd> = self.gav_st.iter().collect();
        gav_unfold_query(q, &st_refs)
    }
}

/// XR-certain answers through the consistent-query-answering route:
/// unfold the target egds and the query to the source, then intersect
/// the query over the maximal egd-consistent subsets of the source.
pub fn xr_certain_via_cqa(
    q: &Ucq,
    i: &Instance,
    m: &SchemaMapping,
    opts: &RepairOptions,
) -> Result<BTreeSet<Vec<Value>>> {
    q.validate(&m.target)?;
    let rewriting = SourceRewriting::build(m)?;
    let qs = rewriting.unfold_query(q)?;
    let egd_refs: Vec<&Egd> = rewriting.source_egds.iter().collect();
    let repairs = egd_subset_repairs(i, &egd_refs, opts)?;
    let mut per_repair = Vec::with_capacity(repairs.len());
    for r in &repairs {
        per_repair.push(eval_ucq_nullfree(&qs, r)?);
    }
    let mut sets = per_repair.into_iter();
    let first = match sets.next() {
        Some(s) => s,
        None => return Ok(BTreeSet::new()),
    };
    Ok(sets.fold(first, |acc, s| acc.intersection(&s).cloned().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chase::{RUNNING_INSTANCE, RUNNING_MAPPING};
    use crate::repair::{has_solution, satisfies_all_egds, xr_certain};
    use crate::schema::Fact;
    use crate::textio::{parse_instance, parse_mapping, parse_query, InstanceMode};

    fn running() -> (SchemaMapping, Instance, Ucq) {
        let m = parse_mapping(RUNNING_MAPPING).unwrap();
        let i = parse_instance(RUNNING_INSTANCE, &m.source, InstanceMode::Source).unwrap();
        let q = parse_query("query boss(p, s) :- Tasks(p, t) & Stakeholders_new(t, s)").unwrap();
        (m, i, q)
    }

    fn opts() -> RepairOptions {
        RepairOptions {
            max_facts: 24,
            parallel: false,
        }
    }

    /// Renames variables to their first-occurrence index so that
    /// alpha-equivalent structures compare equal.
    fn canon_atoms(atoms: &[Atom], extra: &[&str]) -> (Vec<Atom>, Vec<String>) {
        let mut names: BTreeMap<String, String> = BTreeMap::new();
        let mut order = 0usize;
        let mut canon_term = |t: &Term, names: &mut BTreeMap<String, String>| match t {
            Term::Var(v) => {
                let n = names.entry(v.clone()).or_insert_with(|| {
                    let n = format!("c{order}");
                    order += 1;
                    n
                });
                Term::Var(n.clone())
            }
            other => other.clone(),
        };
        let atoms = atoms
            .iter()
            .map(|a| Atom {
                relation: a.relation.clone(),
                args: a.args.iter().map(|t| canon_term(t, &mut names)).collect(),
            })
            .collect();
        let extras = extra
            .iter()
            .map(|v| match canon_term(&Term::Var(v.to_string()), &mut names) {
                Term::Var(n) => n,
                _ => unreachable!(),
            })
            .collect();
        (atoms, extras)
    }

    fn canon_egd(e: &Egd) -> (Vec<Atom>, Vec<String>) {
        canon_atoms(&e.body, &[&e.left, &e.right])
    }

    #[test]
    fn running_example_egd_unfolds_to_the_source_key() {
        let (m, _, _) = running();
        let rewriting = SourceRewriting::build(&m).unwrap();
        assert_eq!(rewriting.source_egds.len(), 1);
        let want = Egd::new(
            vec![
                Atom {
                    relation: "Task_Assignments".into(),
                    args: vec![
                        Term::Var("p".into()),
                        Term::Var("t".into()),
                        Term::Var("d".into()),
                    ],
                },
                Atom {
                    relation: "Task_Assignments".into(),
                    args: vec![
                        Term::Var("p".into()),
                        Term::Var("t2".into()),
                        Term::Var("d2".into()),
                    ],
                },
            ],
            "d",
            "d2",
        );
        assert_eq!(canon_egd(&rewriting.source_egds[0]), canon_egd(&want));
    }

    #[test]
    fn running_example_query_unfolds_to_the_documented_join() {
        let (m, _, q) = running();
        let rewriting = SourceRewriting::build(&m).unwrap();
        let qs = rewriting.unfold_query(&q).unwrap();
        assert_eq!(qs.name, "boss_s");
        assert_eq!(qs.arity, 2);
        assert_eq!(qs.disjuncts.len(), 1);
        let got = &qs.disjuncts[0];
        let want_body = vec![
            Atom {
                relation: "Task_Assignments".into(),
                args: vec![
                    Term::Var("p".into()),
                    Term::Var("t".into()),
                    Term::Var("d".into()),
                ],
            },
            Atom {
                relation: "Stakeholders_old".into(),
                args: vec![Term::Var("t".into()), Term::Var("s".into())],
            },
        ];
        let got_head: Vec<&str> = got
            .head
            .iter()
            .map(|t| match t {
                Term::Var(v) => v.as_str(),
                _ => panic!("head should stay variables"),
            })
            .collect();
        assert_eq!(
            canon_atoms(&got.body, &got_head),
            canon_atoms(&want_body, &["p", "s"])
        );
    }

    #[test]
    fn two_rules_per_relation_multiply_combinations() {
        let m = parse_mapping(
            "source: A/1; B/1\n\
             target: T/1\n\
             st-tgd: A(x) -> T(x)\n\
             st-tgd: B(x) -> T(x)\n",
        )
        .unwrap();
        let st: Vec<&Tgd> = m.st_tgds().collect();
        let q = parse_query("query pairs(x, y) :- T(x) & T(y)").unwrap();
        let qs = gav_unfold_query(&q, &st).unwrap();
        assert_eq!(qs.disjuncts.len(), 4);
    }

    #[test]
    fn copy_mapping_unfolds_to_renamed_bodies() {
        let m = parse_mapping(
            "source: P/2\n\
             target: P_t/2\n\
             st-tgd: P(x, y) -> P_t(x, y)\n\
             t-egd: P_t(x, y) & P_t(x, y2) -> y = y2\n",
        )
        .unwrap();
        let rewriting = SourceRewriting::build(&m).unwrap();
        assert_eq!(rewriting.source_egds.len(), 1);
        assert_eq!(rewriting.source_egds[0].body[0].relation, "P");
        let q = parse_query("query all(x, y) :- P_t(x, y)").unwrap();
        let qs = rewriting.unfold_query(&q).unwrap();
        assert_eq!(qs.disjuncts.len(), 1);
        assert_eq!(qs.disjuncts[0].body[0].relation, "P");
        assert_eq!(qs.disjuncts[0].body.len(), 1);
    }

    #[test]
    fn undefined_relation_drops_combinations() {
        let m = parse_mapping(
            "source: A/1\n\
             target: T/1; U/1\n\
             st-tgd: A(x) -> T(x)\n",
        )
        .unwrap();
        let st: Vec<&Tgd> = m.st_tgds().collect();
        // Query over the undefined relation: no disjunct survives.
        let q = parse_query("query dead(x) :- U(x)").unwrap();
        let qs = gav_unfold_query(&q, &st).unwrap();
        assert!(qs.disjuncts.is_empty());
        let i: Instance = std::iter::once(Fact {
            relation: "A".to_string(),
            args: vec![Value::str("a")],
        })
        .collect();
        assert!(eval_ucq_nullfree(&qs, &i).unwrap().is_empty());
        // An egd whose body mentions the undefined relation is dropped.
        let egd = Egd::new(
            vec![
                Atom {
                    relation: "U".into(),
                    args: vec![Term::Var("x".into())],
                },
                Atom {
                    relation: "T".into(),
                    args: vec![Term::Var("y".into())],
                },
            ],
            "x",
            "y",
        );
        assert!(gav_unfold_egds(&[&egd], &st).unwrap().is_empty());
    }

    #[test]
    fn repeated_head_variables_unify_query_arguments() {
        let m = parse_mapping(
            "source: P/2\n\
             target: T/2\n\
             st-tgd: P(x, y) -> T(x, x)\n",
        )
        .unwrap();
        let st: Vec<&Tgd> = m.st_tgds().collect();
        let q = parse_query("query both(a, b) :- T(a, b)").unwrap();
        let qs = gav_unfold_query(&q, &st).unwrap();
        assert_eq!(qs.disjuncts.len(), 1);
        let d = &qs.disjuncts[0];
        // Both answer positions collapse to one variable.
        assert_eq!(d.head[0], d.head[1]);
        assert_eq!(d.body[0].relation, "P");
        assert_eq!(d.body[0].args[0], d.head[0]);
        // Constant arguments conflict with each other through the head.
        let q2 = parse_query("query conflict() :- T(\"a\", \"b\")").unwrap();
        let qs2 = gav_unfold_query(&q2, &st).unwrap();
        assert!(qs2.disjuncts.is_empty());
        let q3 = parse_query("query pinned(z) :- T(\"a\", z)").unwrap();
        let qs3 = gav_unfold_query(&q3, &st).unwrap();
        assert_eq!(qs3.disjuncts.len(), 1);
        assert_eq!(
            qs3.disjuncts[0].head[0],
            Term::Const(crate::value::Constant::Str("a".into()))
        );
    }

    #[test]
    fn class_violations_are_reported() {
        let lav = parse_mapping(
            "source: A/1\n\
             target: T/2\n\
             st-tgd: A(x) -> T(x, y)\n",
        )
        .unwrap();
        match SourceRewriting::build(&lav) {
            Err(Error::Class(msg)) => assert!(msg.contains("invents values")),
            other => panic!("expected class error, got {other:?}"),
        }
        let target_tgd = parse_mapping(
            "source: A/1\n\
             target: T/1; U/1\n\
             st-tgd: A(x) -> T(x)\n\
             t-tgd: T(x) -> U(x)\n",
        )
        .unwrap();
        match SourceRewriting::build(&target_tgd) {
            Err(Error::Class(msg)) => assert!(msg.contains("egd-only")),
            other => panic!("expected class error, got {other:?}"),
        }
    }

    #[test]
    fn solvability_matches_source_egd_satisfaction() {
        let (m, i, _) = running();
        let rewriting = SourceRewriting::build(&m).unwrap();
        let egd_refs: Vec<&Egd> = rewriting.source_egds.iter().collect();
        let facts: Vec<Fact> = i.facts().collect();
        for mask in 0..(1u64 << facts.len()) {
            let sub: Instance = facts
                .iter()
                .enumerate()
                .filter(|(k, _)| mask & (1 << k) != 0)
                .map(|(_, f)| f.clone())
                .collect();
            assert_eq!(
                satisfies_all_egds(&sub, &egd_refs).unwrap(),
                has_solution(&sub, &m).unwrap(),
                "divergence on mask {mask:b}"
            );
        }
    }

    #[test]
    fn cqa_route_matches_brute_force_on_running_example() {
        let (m, i, q) = running();
        let via_cqa = xr_certain_via_cqa(&q, &i, &m, &opts()).unwrap();
        let brute = xr_certain(&q, &i, &m, &opts()).unwrap();
        assert_eq!(via_cqa, brute);
        let want: BTreeSet<Vec<Value>> =
            [vec![Value::str("peter"), Value::str("bobs")]].into();
        assert_eq!(via_cqa, want);
    }
}
