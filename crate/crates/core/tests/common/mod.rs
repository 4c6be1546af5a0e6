//! Shared fixtures, seeded generators, and independent oracles for the
//! integration suites. Generators are deterministic given the seed;
//! oracles recompute expectations by a different method than the code
//! under test (exhaustive scans, union-find, closure iteration).

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::PathBuf;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xr_core::chase::{chase, ChaseOutcome};
use xr_core::compile::{compile_to_gav, CompileOptions};
use xr_core::depgraph::analyze_mapping;
use xr_core::hom::{exists_extension, find_homomorphisms};
use xr_core::mapping::{Egd, SchemaMapping, StConstraint, TargetConstraint, Tgd};
use xr_core::query::{eval_ucq_nullfree, Cq, Ucq};
use xr_core::repair::{has_solution, satisfies_all_egds, RepairOptions};
use xr_core::schema::{Fact, Instance, Schema};
use xr_core::term::{Atom, Term};
use xr_core::textio::{parse_instance, parse_mapping, parse_query, InstanceMode};
use xr_core::value::{Constant, Value};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Sequential options so failures reproduce deterministically.
pub fn opts() -> RepairOptions {
    RepairOptions {
        max_facts: 16,
        parallel: false,
    }
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn fixture(name: &str) -> String {
    fs::read_to_string(fixture_path(name))
        .unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn running_mapping() -> SchemaMapping {
    parse_mapping(&fixture("running.xmap")).unwrap()
}

pub fn running_instance(m: &SchemaMapping) -> Instance {
    parse_instance(&fixture("running.xinst"), &m.source, InstanceMode::Source).unwrap()
}

pub fn boss_query() -> Ucq {
    parse_query(fixture("boss.xq").trim()).unwrap()
}

pub fn chain_mapping() -> SchemaMapping {
    parse_mapping(&fixture("chain.xmap")).unwrap()
}

pub fn chain_instance(m: &SchemaMapping) -> Instance {
    parse_instance(&fixture("chain.xinst"), &m.source, InstanceMode::Source).unwrap()
}

pub fn reach_query() -> Ucq {
    parse_query(fixture("reach.xq").trim()).unwrap()
}

pub fn str_tuple(parts: &[&str]) -> Vec<Value> {
    parts
        .iter()
        .map(|s| Value::Const(Constant::str(*s)))
        .collect()
}

pub fn answer_set(tuples: &[&[&str]]) -> BTreeSet<Vec<Value>> {
    tuples.iter().map(|t| str_tuple(t)).collect()
}

fn var(name: &str) -> Term {
    Term::var(name)
}

fn atom(relation: &str, args: Vec<Term>) -> Atom {
    Atom {
        relation: relation.to_string(),
        args,
    }
}

fn body_vars(body: &[Atom]) -> Vec<String> {
    let mut seen = Vec::new();
    for a in body {
        for t in &a.args {
            if let Term::Var(v) = t {
                if !seen.contains(v) {
                    seen.push(v.clone());
                }
            }
        }
    }
    seen
}

const SOURCE_RELS: [&str; 2] = ["A", "B"];
const TARGET_RELS: [&str; 2] = ["P", "Q"];
const VAR_POOL: [&str; 4] = ["x", "y", "z", "w"];

pub fn source_schema() -> Schema {
    Schema::from_pairs(SOURCE_RELS.iter().map(|r| (*r, 2))).unwrap()
}

pub fn target_schema() -> Schema {
    Schema::from_pairs(TARGET_RELS.iter().map(|r| (*r, 2))).unwrap()
}

fn rand_atom(rng: &mut impl Rng, rels: &[&str]) -> Atom {
    let rel = rels[rng.gen_range(0..rels.len())];
    let args = (0..2)
        .map(|_| var(VAR_POOL[rng.gen_range(0..VAR_POOL.len())]))
        .collect();
    atom(rel, args)
}

/// A full single-head tgd from `body_rels` atoms into one `head_rels`
/// atom whose arguments are variables of the body.
fn rand_full_tgd(rng: &mut impl Rng, body_rels: &[&str], head_rels: &[&str]) -> Tgd {
    let body: Vec<Atom> = (0..rng.gen_range(1..=2))
        .map(|_| rand_atom(rng, body_rels))
        .collect();
    let vars = body_vars(&body);
    let rel = head_rels[rng.gen_range(0..head_rels.len())];
    let args = (0..2)
        .map(|_| var(&vars[rng.gen_range(0..vars.len())]))
        .collect();
    Tgd::new(body, vec![atom(rel, args)])
}

/// A key constraint on one position of a binary target relation.
fn rand_key_egd(rng: &mut impl Rng) -> Egd {
    let rel = TARGET_RELS[rng.gen_range(0..TARGET_RELS.len())];
    let key_pos = rng.gen_range(0..2);
    let mk = |dep: &str| {
        let mut args = vec![var("k"), var("k")];
        args[1 - key_pos] = var(dep);
        atom(rel, args)
    };
    Egd::new(vec![mk("a"), mk("b")], "a", "b")
}

/// Random mapping with full single-head source-to-target tgds and key
/// constraints on the target: class GAV+egd.
pub fn gen_gav_egd_mapping(rng: &mut impl Rng) -> SchemaMapping {
    let st: Vec<StConstraint> = (0..rng.gen_range(2..=3))
        .map(|_| StConstraint::Tgd(rand_full_tgd(rng, &SOURCE_RELS, &TARGET_RELS)))
        .collect();
    let t: Vec<TargetConstraint> = (0..rng.gen_range(1..=2))
        .map(|_| TargetConstraint::Egd(rand_key_egd(rng)))
        .collect();
    SchemaMapping::new(source_schema(), target_schema(), IndexMap::new(), st, t).unwrap()
}

/// As [`gen_gav_egd_mapping`] plus full single-head target tgds: class
/// GAV+GAV+egd.
pub fn gen_gav_gav_egd_mapping(rng: &mut impl Rng) -> SchemaMapping {
    let st: Vec<StConstraint> = (0..rng.gen_range(2..=3))
        .map(|_| StConstraint::Tgd(rand_full_tgd(rng, &SOURCE_RELS, &TARGET_RELS)))
        .collect();
    let mut t: Vec<TargetConstraint> = (0..rng.gen_range(1..=2))
        .map(|_| TargetConstraint::Tgd(rand_full_tgd(rng, &TARGET_RELS, &TARGET_RELS)))
        .collect();
    t.extend((0..rng.gen_range(1..=2)).map(|_| TargetConstraint::Egd(rand_key_egd(rng))));
    SchemaMapping::new(source_schema(), target_schema(), IndexMap::new(), st, t).unwrap()
}

/// A source-to-target tgd whose head may invent values: single source
/// atom body, one or two target atoms over body variables plus an
/// optional existential.
fn rand_glav_st_tgd(rng: &mut impl Rng) -> Tgd {
    let body = vec![atom(
        SOURCE_RELS[rng.gen_range(0..SOURCE_RELS.len())],
        vec![var("x"), var("y")],
    )];
    let mut pool = vec!["x", "y"];
    if rng.gen_bool(0.8) {
        pool.push("u");
    }
    let head: Vec<Atom> = (0..rng.gen_range(1..=2))
        .map(|_| {
            let args = (0..2)
                .map(|_| var(pool[rng.gen_range(0..pool.len())]))
                .collect();
            atom(TARGET_RELS[rng.gen_range(0..TARGET_RELS.len())], args)
        })
        .collect();
    Tgd::new(body, head)
}

/// Random weakly acyclic mapping with inventing source-to-target tgds,
/// at most one target tgd (possibly inventing), and one key constraint.
/// Rejection-samples until the dependency rank is at most `max_rank`
/// and the whole rewriting pipeline accepts the mapping (equality
/// singularization can introduce cycles the plain analysis does not
/// see, so weak acyclicity alone is not enough).
pub fn gen_glav_wa_mapping(rng: &mut impl Rng, max_rank: usize) -> SchemaMapping {
    loop {
        let st: Vec<StConstraint> = (0..rng.gen_range(1..=2))
            .map(|_| StConstraint::Tgd(rand_glav_st_tgd(rng)))
            .collect();
        let mut t: Vec<TargetConstraint> = Vec::new();
        if rng.gen_bool(0.5) {
            let body = vec![rand_atom(rng, &TARGET_RELS)];
            let vars = body_vars(&body);
            let mut pool: Vec<String> = vars.clone();
            if rng.gen_bool(0.5) {
                pool.push("u2".to_string());
            }
            let args = (0..2)
                .map(|_| var(&pool[rng.gen_range(0..pool.len())]))
                .collect();
            let head = vec![atom(TARGET_RELS[rng.gen_range(0..TARGET_RELS.len())], args)];
            t.push(TargetConstraint::Tgd(Tgd::new(body, head)));
        }
        t.push(TargetConstraint::Egd(rand_key_egd(rng)));
        let m =
            SchemaMapping::new(source_schema(), target_schema(), IndexMap::new(), st, t).unwrap();
        let report = analyze_mapping(&m);
        if report.weakly_acyclic
            && report.rank.unwrap_or(usize::MAX) <= max_rank
            && compile_to_gav(&m, &CompileOptions::default()).is_ok()
        {
            return m;
        }
    }
}

/// Copy mapping over `schema`: a disjoint source copy of every relation
/// and one tgd per relation moving the data over, with the given target
/// constraints kept verbatim.
pub fn copy_mapping(schema: &Schema, t: Vec<TargetConstraint>) -> SchemaMapping {
    let source =
        Schema::from_pairs(schema.iter().map(|(n, a)| (format!("{n}_src"), a))).unwrap();
    let st = schema
        .iter()
        .map(|(n, a)| {
            let args: Vec<Term> = (0..a).map(|k| var(&format!("x{k}"))).collect();
            StConstraint::Tgd(Tgd::new(
                vec![atom(&format!("{n}_src"), args.clone())],
                vec![atom(n, args)],
            ))
        })
        .collect();
    SchemaMapping::new(source, schema.clone(), IndexMap::new(), st, t).unwrap()
}

/// Random ground instance over the schema with at most `max_facts`
/// facts drawn from a `pool`-constant universe.
pub fn gen_instance(rng: &mut impl Rng, schema: &Schema, max_facts: usize, pool: usize) -> Instance {
    let rels: Vec<(String, usize)> = schema.iter().map(|(n, a)| (n.to_string(), a)).collect();
    let mut facts = Vec::new();
    for _ in 0..rng.gen_range(0..=max_facts) {
        let (rel, arity) = &rels[rng.gen_range(0..rels.len())];
        let args = (0..*arity)
            .map(|_| Value::Const(Constant::str(format!("c{}", rng.gen_range(0..pool)))))
            .collect();
        facts.push(Fact::new(rel.clone(), args));
    }
    Instance::new(schema, facts).unwrap()
}

/// Random single-disjunct query over the schema: one or two atoms, one
/// or two distinct answer variables taken from the body.
pub fn gen_query(rng: &mut impl Rng, schema: &Schema) -> Ucq {
    let rels: Vec<(String, usize)> = schema.iter().map(|(n, a)| (n.to_string(), a)).collect();
    let qvars = ["v0", "v1", "v2"];
    let body: Vec<Atom> = (0..rng.gen_range(1..=2))
        .map(|_| {
            let (rel, arity) = &rels[rng.gen_range(0..rels.len())];
            let args = (0..*arity)
                .map(|_| var(qvars[rng.gen_range(0..qvars.len())]))
                .collect();
            atom(rel, args)
        })
        .collect();
    let vars = body_vars(&body);
    let width = rng.gen_range(1..=vars.len().min(2));
    let head: Vec<Term> = vars
        .choose_multiple(rng, width)
        .map(|v| var(v))
        .collect();
    Ucq::new("q", head.len(), vec![Cq::new(head, body)]).unwrap()
}

pub struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        self.parent[ra] = rb;
    }
}

/// Transitive closure of a binary relation by iteration to fixpoint.
pub fn transitive_closure(edges: &BTreeSet<(Value, Value)>) -> BTreeSet<(Value, Value)> {
    let mut closure = edges.clone();
    loop {
        let mut added = Vec::new();
        for (a, b) in &closure {
            for (c, d) in &closure {
                if b == c && !closure.contains(&(a.clone(), d.clone())) {
                    added.push((a.clone(), d.clone()));
                }
            }
        }
        if added.is_empty() {
            return closure;
        }
        closure.extend(added);
    }
}

/// Exhaustive oracle for subset source-repairs: scans every subset of
/// the instance, keeps the solvable ones, and filters to the maximal
/// sets by pairwise comparison.
pub fn subset_repairs_oracle(i: &Instance, m: &SchemaMapping) -> Vec<BTreeSet<Fact>> {
    let facts: Vec<Fact> = i.facts().collect();
    assert!(facts.len() <= 16, "oracle scans every subset");
    let mut solvable: Vec<u32> = Vec::new();
    for mask in 0..(1u32 << facts.len()) {
        let sub: Instance = Instance::from_facts(
            facts
                .iter()
                .enumerate()
                .filter(|(k, _)| mask & (1 << k) != 0)
                .map(|(_, f)| f.clone()),
        );
        if has_solution(&sub, m).unwrap() {
            solvable.push(mask);
        }
    }
    solvable
        .iter()
        .filter(|&&mask| {
            solvable
                .iter()
                .all(|&other| other == mask || (mask | other) != other)
        })
        .map(|&mask| {
            facts
                .iter()
                .enumerate()
                .filter(|(k, _)| mask & (1 << k) != 0)
                .map(|(_, f)| f.clone())
                .collect()
        })
        .collect()
}

/// Exhaustive oracle for exchange-repair certain answers: chases every
/// repair from [`subset_repairs_oracle`] and intersects the null-free
/// answers.
pub fn xr_certain_oracle(q: &Ucq, i: &Instance, m: &SchemaMapping) -> BTreeSet<Vec<Value>> {
    let mut result: Option<BTreeSet<Vec<Value>>> = None;
    for repair in subset_repairs_oracle(i, m) {
        let sub = Instance::from_facts(repair);
        let j = match chase(&sub, m).unwrap().outcome {
            ChaseOutcome::Success(j) => j,
            ChaseOutcome::Failure(_) => unreachable!("repairs are solvable"),
        };
        let answers = eval_ucq_nullfree(q, &j).unwrap();
        result = Some(match result {
            None => answers,
            Some(acc) => acc.intersection(&answers).cloned().collect(),
        });
    }
    result.unwrap_or_default()
}

fn canon_term(t: &Term, map: &mut BTreeMap<String, String>) -> Term {
    match t {
        Term::Var(v) => {
            if !map.contains_key(v) {
                let fresh = format!("_v{}", map.len());
                map.insert(v.clone(), fresh);
            }
            Term::Var(map[v].clone())
        }
        Term::Const(c) => Term::Const(c.clone()),
        Term::App(f, args) => {
            Term::App(f.clone(), args.iter().map(|a| canon_term(a, map)).collect())
        }
    }
}

fn canon_atoms(atoms: &[Atom], map: &mut BTreeMap<String, String>) -> Vec<Atom> {
    atoms
        .iter()
        .map(|a| Atom {
            relation: a.relation.clone(),
            args: a.args.iter().map(|t| canon_term(t, map)).collect(),
        })
        .collect()
}

/// Equality of tgds up to a consistent renaming of variables, atom
/// order preserved.
pub fn tgds_alpha_equivalent(a: &Tgd, b: &Tgd) -> bool {
    let canon = |t: &Tgd| {
        let mut map = BTreeMap::new();
        (canon_atoms(&t.body, &mut map), canon_atoms(&t.head, &mut map))
    };
    canon(a) == canon(b)
}

/// Equality of egds up to a consistent renaming of variables.
pub fn egds_alpha_equivalent(a: &Egd, b: &Egd) -> bool {
    let canon = |e: &Egd| {
        let mut map = BTreeMap::new();
        let body = canon_atoms(&e.body, &mut map);
        let left = canon_term(&Term::var(&e.left), &mut map);
        let right = canon_term(&Term::var(&e.right), &mut map);
        (body, left, right)
    };
    canon(a) == canon(b)
}

/// Equality of queries up to a consistent renaming of variables within
/// each disjunct; disjunct order and atom order preserved.
pub fn queries_alpha_equivalent(a: &Ucq, b: &Ucq) -> bool {
    let canon_cq = |cq: &Cq| {
        let mut map = BTreeMap::new();
        let head: Vec<Term> = cq.head.iter().map(|t| canon_term(t, &mut map)).collect();
        let body = canon_atoms(&cq.body, &mut map);
        (head, body)
    };
    a.name == b.name
        && a.arity == b.arity
        && a.disjuncts.len() == b.disjuncts.len()
        && a.disjuncts
            .iter()
            .zip(&b.disjuncts)
            .all(|(x, y)| canon_cq(x) == canon_cq(y))
}

/// Whether the pair (i, j) satisfies every constraint of the mapping:
/// each body match of a tgd extends to its head, and no egd equates
/// two distinct values.
pub fn pair_satisfies(i: &Instance, j: &Instance, m: &SchemaMapping) -> bool {
    let egds: Vec<&Egd> = m.target_egds().collect();
    if !satisfies_all_egds(j, &egds).unwrap() {
        return false;
    }
    for tgd in m.st_tgds() {
        for h in find_homomorphisms(&tgd.body, i).unwrap() {
            if !exists_extension(&tgd.head, j, &h).unwrap() {
                return false;
            }
        }
    }
    for tgd in m.target_tgds() {
        for h in find_homomorphisms(&tgd.body, j).unwrap() {
            if !exists_extension(&tgd.head, j, &h).unwrap() {
                return false;
            }
        }
    }
    true
}

fn fact_pattern(f: &Fact) -> Atom {
    Atom {
        relation: f.relation.clone(),
        args: f
            .args
            .iter()
            .map(|v| match v {
                Value::Const(c) => Term::Const(c.clone()),
                Value::Null(k) => Term::Var(format!("_n{k}")),
                Value::Compound(_, _) => panic!("isomorphism check expects first-order values"),
            })
            .collect(),
    }
}

/// Whether two instances are equal up to a bijection between their
/// nulls. Decided by searching for a null-injective homomorphism
/// between instances of equal size.
pub fn isomorphic_instances(a: &Instance, b: &Instance) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let pattern: Vec<Atom> = a.facts().map(|f| fact_pattern(&f)).collect();
    let homs = find_homomorphisms(&pattern, b).unwrap();
    homs.iter().any(|h| {
        let mut seen = BTreeSet::new();
        h.values()
            .all(|v| matches!(v, Value::Null(_)) && seen.insert(v.clone()))
    })
}
