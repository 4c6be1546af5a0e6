//! Compiling away existential quantification and equalities: any weakly
//! acyclic mapping becomes GAV source-to-target tgds plus GAV target tgds
//! and at most one egd, while solvability of every source subset and the
//! certain answers of rewritten queries are preserved.
//!
//! Three stages, each exposed for inspection:
//!
//! 1. [`skolemize`]: existential head variables become fresh functions of
//!    the universal variables, one second-order clause per head atom.
//! 2. [`equality_singularize`]: egds and repeated body variables are
//!    routed through an explicit congruence relation with reflexivity,
//!    symmetry, and transitivity rules, making the mapping equality-free
//!    so that chasing it can never fail.
//! 3. [`skeleton_rewrite`]: compound terms are flattened into relations
//!    indexed by term shapes. Free solutions only hold terms up to a
//!    depth bounded by the dependency rank times the deepest head term,
//!    so finitely many shapes suffice.
//!
//! [`compile_to_gav`] chains the stages, prunes relations no chase can
//! populate, and re-adds a single egd that equates values the congruence
//! relation declares equal at flat shape. Source-to-target constraints
//! carrying equalities are first moved to the target side over copy
//! relations ([`copy_extend`]), since singularization only rewrites the
//! target side.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;

use crate::depgraph::analyze_mapping;
use crate::mapping::{Egd, SchemaMapping, SoClause, StConstraint, TargetConstraint, Tgd};
use crate::query::{Cq, Ucq};
use crate::schema::Schema;
use crate::skeleton::{enumerate_up_to, leaves, relation_name, Skeleton};
use crate::term::{atoms_vars, Atom, Term};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct CompileOptions {
    /// Drop relations and rules no chase can ever populate.
    pub prune: bool,
    /// Cap on generated shape-indexed relations.
    pub max_relations: usize,
    /// Cap on generated dependencies and on shape combinations per rule
    /// or query disjunct.
    pub max_constraints: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            prune: true,
            max_relations: 20_000,
            max_constraints: 200_000,
        }
    }
}

/// Replaces each existential head variable of a tgd by a fresh function
/// of the body variables in first-occurrence order, emitting one
/// second-order clause per head atom. Full tgds and existing clauses
/// pass through unchanged.
pub fn skolemize(m: &SchemaMapping) -> Result<SchemaMapping> {
    let mut functions = m.functions.clone();
    let mut counter = 0usize;
    let mut fresh = |functions: &IndexMap<String, usize>| loop {
        let name = format!("f{counter}");
        counter += 1;
        if !functions.contains_key(&name) {
            return name;
        }
    };

    let mut clauses_of = |tgd: &Tgd, functions: &mut IndexMap<String, usize>| -> Result<Vec<SoClause>> {
        let body_vars = tgd.body_vars();
        if body_vars.is_empty() {
            return Err(Error::Unsupported(format!(
                "cannot skolemize {tgd}: existential head variables but no universal body variables"
            )));
        }
        let args: Vec<Term> = body_vars.iter().map(Term::var).collect();
        let mut subst: BTreeMap<String, Term> = BTreeMap::new();
        for v in tgd.existential_vars() {
            let f = fresh(functions);
            functions.insert(f.clone(), args.len());
            subst.insert(v, Term::App(f, args.clone()));
        }
        Ok(tgd
            .head
            .iter()
            .map(|h| SoClause::new(tgd.body.clone(), vec![], vec![h.apply(&subst)]))
            .collect())
    };

    let mut st = Vec::new();
    for c in &m.st {
        match c {
            StConstraint::Tgd(t) if !t.is_full() => {
                for cl in clauses_of(t, &mut functions)? {
                    st.push(StConstraint::So(cl));
                }
            }
            other => st.push(other.clone()),
        }
    }
    let mut t = Vec::new();
    for c in &m.t {
        match c {
            TargetConstraint::Tgd(tgd) if !tgd.is_full() => {
                for cl in clauses_of(tgd, &mut functions)? {
                    t.push(TargetConstraint::So(cl));
                }
            }
            other => t.push(other.clone()),
        }
    }
    SchemaMapping::new(m.source.clone(), m.target.clone(), functions, st, t)
}

/// Moves every source-to-target constraint to the target side over fresh
/// copy relations, leaving plain copy tgds source-to-target. Needed when
/// source-to-target clauses carry equalities, which singularization only
/// rewrites on the target side.
pub fn copy_extend(m: &SchemaMapping) -> Result<SchemaMapping> {
    let mut taken: BTreeSet<String> = m.source.names().map(str::to_string).collect();
    taken.extend(m.target.names().map(str::to_string));
    let mut copy_of: BTreeMap<String, String> = BTreeMap::new();
    let mut target_pairs: Vec<(String, usize)> =
        m.target.iter().map(|(r, a)| (r.to_string(), a)).collect();
    for (rel, arity) in m.source.iter() {
        let mut name = format!("{rel}_copy");
        while taken.contains(&name) {
            name.push('_');
        }
        taken.insert(name.clone());
        copy_of.insert(rel.to_string(), name.clone());
        target_pairs.push((name, arity));
    }

    let rename = |atoms: &[Atom]| -> Vec<Atom> {
        atoms
            .iter()
            .map(|a| match copy_of.get(&a.relation) {
                Some(c) => Atom::new(c.clone(), a.args.clone()),
                None => a.clone(),
            })
            .collect()
    };

    let mut st = Vec::new();
    for (rel, arity) in m.source.iter() {
        let args: Vec<Term> = (0..arity).map(|i| Term::var(format!("x{i}"))).collect();
        st.push(StConstraint::Tgd(Tgd::new(
            vec![Atom::new(rel, args.clone())],
            vec![Atom::new(copy_of[rel].clone(), args)],
        )));
    }
    let mut t = m.t.clone();
    for c in &m.st {
        t.push(match c {
            StConstraint::Tgd(tgd) => {
                TargetConstraint::Tgd(Tgd::new(rename(&tgd.body), tgd.head.clone()))
            }
            StConstraint::So(cl) => TargetConstraint::So(SoClause::new(
                rename(&cl.body),
                cl.equalities.clone(),
                cl.head.clone(),
            )),
        });
    }
    SchemaMapping::new(
        m.source.clone(),
        Schema::from_pairs(target_pairs)?,
        m.functions.clone(),
        st,
        t,
    )
}

/// Renames every repeated variable occurrence (scanning atoms and their
/// arguments left to right) to a fresh variable and records the
/// equivalence in a congruence atom placed just before the atom using
/// the new name.
fn singularize_atoms(atoms: &[Atom], eq_rel: &str, forbidden: &BTreeSet<String>) -> Vec<Atom> {
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut counter = 0usize;
    let mut out = Vec::new();
    for atom in atoms {
        let mut pending = Vec::new();
        let mut args = Vec::with_capacity(atom.args.len());
        for term in &atom.args {
            match term {
                Term::Var(v) if !seen.insert(v.clone()) => {
                    let z = loop {
                        let cand = format!("z{counter}");
                        counter += 1;
                        if !forbidden.contains(&cand) {
                            break cand;
                        }
                    };
                    pending.push(Atom::new(
                        eq_rel,
                        vec![Term::var(v.clone()), Term::var(z.clone())],
                    ));
                    args.push(Term::var(z));
                }
                other => args.push(other.clone()),
            }
        }
        out.extend(pending);
        out.push(Atom::new(atom.relation.clone(), args));
    }
    out
}

fn constraint_var_set(body: &[Atom], head: &[Atom], equalities: &[(Term, Term)]) -> BTreeSet<String> {
    let mut vars: Vec<String> = atoms_vars(body);
    vars.extend(atoms_vars(head));
    for (l, r) in equalities {
        l.collect_vars(&mut vars);
        r.collect_vars(&mut vars);
    }
    vars.into_iter().collect()
}

#[derive(Debug, Clone)]
pub struct Singularized {
    pub mapping: SchemaMapping,
    /// Binary congruence relation added to the target schema.
    pub eq_relation: String,
}

/// Rewrites every equality into the congruence relation: egds become GAV
/// tgds concluding congruence, clause equalities become congruence body
/// atoms, and repeated body variables are split so that joins go through
/// congruence too. Reflexivity rules per target position plus symmetry
/// and transitivity make the relation a congruence on populated values.
/// The source-to-target constraints are left untouched and must be
/// equality-free.
pub fn equality_singularize(m: &SchemaMapping) -> Result<Singularized> {
    for c in &m.st {
        if let StConstraint::So(cl) = c {
            if !cl.equalities.is_empty() {
                return Err(Error::Precondition(
                    "source-to-target equalities cannot be singularized in place; apply the copy extension first"
                        .to_string(),
                ));
            }
        }
    }
    let mut eq = "Eq".to_string();
    while m.source.contains(&eq) || m.target.contains(&eq) {
        eq.push('_');
    }
    let mut target_pairs: Vec<(String, usize)> =
        m.target.iter().map(|(r, a)| (r.to_string(), a)).collect();
    target_pairs.push((eq.clone(), 2));

    let mut t: Vec<TargetConstraint> = Vec::new();
    for c in &m.t {
        match c {
            TargetConstraint::Egd(e) => {
                let vars =
                    constraint_var_set(&e.body, &[], &[(Term::var(&e.left), Term::var(&e.right))]);
                t.push(TargetConstraint::Tgd(Tgd::new(
                    singularize_atoms(&e.body, &eq, &vars),
                    vec![Atom::new(
                        eq.clone(),
                        vec![Term::var(&e.left), Term::var(&e.right)],
                    )],
                )));
            }
            TargetConstraint::Tgd(tgd) => {
                if !tgd.is_full() {
                    return Err(Error::Precondition(format!(
                        "target tgd {tgd} has existential variables; skolemize before singularizing"
                    )));
                }
                let vars = constraint_var_set(&tgd.body, &tgd.head, &[]);
                t.push(TargetConstraint::Tgd(Tgd::new(
                    singularize_atoms(&tgd.body, &eq, &vars),
                    tgd.head.clone(),
                )));
            }
            TargetConstraint::So(cl) => {
                let vars = constraint_var_set(&cl.body, &cl.head, &cl.equalities);
                let mut body = singularize_atoms(&cl.body, &eq, &vars);
                for (l, r) in &cl.equalities {
                    body.push(Atom::new(eq.clone(), vec![l.clone(), r.clone()]));
                }
                t.push(TargetConstraint::So(SoClause::new(
                    body,
                    vec![],
                    cl.head.clone(),
                )));
            }
        }
    }
    // Every value in a populated target position is congruent to itself.
    for (rel, arity) in m.target.iter() {
        let args: Vec<Term> = (0..arity).map(|i| Term::var(format!("x{i}"))).collect();
        for i in 0..arity {
            t.push(TargetConstraint::Tgd(Tgd::new(
                vec![Atom::new(rel, args.clone())],
                vec![Atom::new(eq.clone(), vec![args[i].clone(), args[i].clone()])],
            )));
        }
    }
    t.push(TargetConstraint::Tgd(Tgd::new(
        vec![Atom::new(eq.clone(), vec![Term::var("x0"), Term::var("x1")])],
        vec![Atom::new(eq.clone(), vec![Term::var("x1"), Term::var("x0")])],
    )));
    t.push(TargetConstraint::Tgd(Tgd::new(
        vec![
            Atom::new(eq.clone(), vec![Term::var("x0"), Term::var("x1")]),
            Atom::new(eq.clone(), vec![Term::var("x1"), Term::var("x2")]),
        ],
        vec![Atom::new(eq.clone(), vec![Term::var("x0"), Term::var("x2")])],
    )));

    let mapping = SchemaMapping::new(
        m.source.clone(),
        Schema::from_pairs(target_pairs)?,
        m.functions.clone(),
        m.st.clone(),
        t,
    )?;
    Ok(Singularized {
        mapping,
        eq_relation: eq,
    })
}

/// Query counterpart of [`equality_singularize`]: repeated body variables
/// are split through congruence atoms so the query matches values merged
/// by congruence rather than literal repeats.
pub fn singularize_query(q: &Ucq, eq_relation: &str) -> Ucq {
    let disjuncts = q
        .disjuncts
        .iter()
        .map(|cq| {
            let mut vars = constraint_var_set(&cq.body, &[], &[]);
            cq.head.iter().for_each(|t| {
                let mut hv = Vec::new();
                t.collect_vars(&mut hv);
                vars.extend(hv);
            });
            Cq::new(
                cq.head.clone(),
                singularize_atoms(&cq.body, eq_relation, &vars),
            )
        })
        .collect();
    Ucq::new(q.name.clone(), q.arity, disjuncts).expect("head arity unchanged")
}

/// Index tuples of length `n` over `0..k`, rightmost position cycling
/// fastest. Errors when the count exceeds `cap`.
pub(crate) fn index_tuples(k: usize, n: usize, cap: usize, what: &str) -> Result<Vec<Vec<usize>>> {
    let count = k
        .checked_pow(u32::try_from(n).unwrap_or(u32::MAX))
        .ok_or_else(|| Error::Resource(format!("{what}: shape combination count overflows")))?;
    if count > cap {
        return Err(Error::Resource(format!(
            "{what} needs {count} shape combinations; limit {cap}"
        )));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(count);
    let mut idx = vec![0usize; n];
    loop {
        out.push(idx.clone());
        let mut pos = n;
        while pos > 0 {
            idx[pos - 1] += 1;
            if idx[pos - 1] < k {
                break;
            }
            idx[pos - 1] = 0;
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
    }
    Ok(out)
}

/// Rebuilds an atom over shape-indexed relations: each argument
/// contributes the shape of its term under the variable assignment and
/// the block of columns carrying its leaves. `None` when a shape exceeds
/// the depth bound, meaning no value of that shape can ever exist.
fn instantiate_atom(
    atom: &Atom,
    shape_of: &BTreeMap<String, Skeleton>,
    block_of: &BTreeMap<String, Vec<Term>>,
    bound: usize,
) -> Option<Atom> {
    let mut shapes = Vec::with_capacity(atom.args.len());
    let mut args = Vec::new();
    for term in &atom.args {
        match term {
            Term::Var(v) => {
                shapes.push(shape_of[v].clone());
                args.extend(block_of[v].iter().cloned());
            }
            Term::Const(_) => {
                shapes.push(Skeleton::Hole);
                args.push(term.clone());
            }
            Term::App(_, _) => {
                let base = Skeleton::of_term(term);
                let leaf_terms = leaves(term);
                let parts: Vec<Skeleton> = leaf_terms
                    .iter()
                    .map(|l| match l {
                        Term::Var(v) => shape_of[v].clone(),
                        _ => Skeleton::Hole,
                    })
                    .collect();
                shapes.push(base.compose(&parts));
                for l in &leaf_terms {
                    match l {
                        Term::Var(v) => args.extend(block_of[v].iter().cloned()),
                        other => args.push(other.clone()),
                    }
                }
            }
        }
    }
    if shapes.iter().any(|s| s.depth() > bound) {
        return None;
    }
    Some(Atom::new(relation_name(&atom.relation, &shapes), args))
}

#[derive(Debug, Clone)]
pub struct SkeletonRewriting {
    pub mapping: SchemaMapping,
    /// Uniform shape depth bound: dependency rank times deepest term.
    pub depth_bound: usize,
    /// All shapes within the bound, sorted.
    pub shapes: Vec<Skeleton>,
    /// Cap carried over for query rewriting.
    pub combination_cap: usize,
}

fn deepest_term(m: &SchemaMapping) -> usize {
    fn scan(atoms: &[Atom], d: &mut usize) {
        for a in atoms {
            for t in &a.args {
                *d = (*d).max(t.depth());
            }
        }
    }
    let mut d = 0;
    for c in &m.st {
        match c {
            StConstraint::Tgd(t) => {
                scan(&t.body, &mut d);
                scan(&t.head, &mut d);
            }
            StConstraint::So(cl) => {
                scan(&cl.body, &mut d);
                scan(&cl.head, &mut d);
            }
        }
    }
    for c in &m.t {
        match c {
            TargetConstraint::Tgd(t) => {
                scan(&t.body, &mut d);
                scan(&t.head, &mut d);
            }
            TargetConstraint::So(cl) => {
                scan(&cl.body, &mut d);
                scan(&cl.head, &mut d);
                for (l, r) in &cl.equalities {
                    d = d.max(l.depth()).max(r.depth());
                }
            }
            TargetConstraint::Egd(e) => scan(&e.body, &mut d),
        }
    }
    d
}

fn used_functions(m: &SchemaMapping) -> IndexMap<String, usize> {
    fn scan(atoms: &[Atom], fns: &mut BTreeMap<String, usize>) {
        for a in atoms {
            for t in &a.args {
                t.collect_functions(fns);
            }
        }
    }
    let mut fns: BTreeMap<String, usize> = BTreeMap::new();
    for c in &m.st {
        match c {
            StConstraint::Tgd(t) => {
                scan(&t.body, &mut fns);
                scan(&t.head, &mut fns);
            }
            StConstraint::So(cl) => {
                scan(&cl.body, &mut fns);
                scan(&cl.head, &mut fns);
            }
        }
    }
    for c in &m.t {
        match c {
            TargetConstraint::Tgd(t) => {
                scan(&t.body, &mut fns);
                scan(&t.head, &mut fns);
            }
            TargetConstraint::So(cl) => {
                scan(&cl.body, &mut fns);
                scan(&cl.head, &mut fns);
                for (l, r) in &cl.equalities {
                    l.collect_functions(&mut fns);
                    r.collect_functions(&mut fns);
                }
            }
            TargetConstraint::Egd(e) => scan(&e.body, &mut fns),
        }
    }
    fns.into_iter().collect()
}

/// Flattens compound terms into shape-indexed relations: each target
/// relation splits into one relation per tuple of column shapes, and
/// each rule is instantiated for every assignment of shapes to its
/// variables. Requires an equality-free, existential-free, weakly
/// acyclic mapping; the output is first-order and GAV.
pub fn skeleton_rewrite(m: &SchemaMapping, opts: &CompileOptions) -> Result<SkeletonRewriting> {
    for c in &m.st {
        match c {
            StConstraint::Tgd(t) if !t.is_full() => {
                return Err(Error::Precondition(format!(
                    "skolemize before the skeleton step: {t} has existential variables"
                )))
            }
            StConstraint::So(cl) if !cl.equalities.is_empty() => {
                return Err(Error::Precondition(format!(
                    "singularize equalities away before the skeleton step: {cl}"
                )))
            }
            _ => {}
        }
    }
    for c in &m.t {
        match c {
            TargetConstraint::Tgd(t) if !t.is_full() => {
                return Err(Error::Precondition(format!(
                    "skolemize before the skeleton step: {t} has existential variables"
                )))
            }
            TargetConstraint::So(cl) if !cl.equalities.is_empty() => {
                return Err(Error::Precondition(format!(
                    "singularize equalities away before the skeleton step: {cl}"
                )))
            }
            TargetConstraint::Egd(e) => {
                return Err(Error::Precondition(format!(
                    "singularize equalities away before the skeleton step: {e}"
                )))
            }
            _ => {}
        }
    }

    let report = analyze_mapping(m);
    let Some(rank) = report.rank else {
        return Err(Error::Class(
            "skeleton rewriting requires a weakly acyclic mapping".to_string(),
        ));
    };
    let bound = rank * deepest_term(m);
    let shapes = enumerate_up_to(&used_functions(m), bound);

    // Shape-indexed target relations.
    let mut target_pairs: Vec<(String, usize)> = Vec::new();
    let mut names: BTreeSet<String> = BTreeSet::new();
    let mut total = 0usize;
    for (rel, arity) in m.target.iter() {
        let tuples = index_tuples(
            shapes.len(),
            arity,
            opts.max_relations.saturating_sub(total),
            &format!("splitting relation {rel} by shape"),
        )?;
        total += tuples.len();
        for idx in tuples {
            let tuple: Vec<Skeleton> = idx.iter().map(|&i| shapes[i].clone()).collect();
            let name = relation_name(rel, &tuple);
            if !names.insert(name.clone()) {
                return Err(Error::Schema(format!(
                    "shape-indexed relation names collide at {name}"
                )));
            }
            target_pairs.push((name, tuple.iter().map(Skeleton::arity).sum()));
        }
    }

    // Source-to-target rules keep their bodies; head values are source
    // constants, so every head position gets the flat shape.
    let mut st = Vec::new();
    for c in &m.st {
        let (body, heads) = match c {
            StConstraint::Tgd(t) => (&t.body, &t.head),
            StConstraint::So(cl) => (&cl.body, &cl.head),
        };
        let mut shape_of = BTreeMap::new();
        let mut block_of = BTreeMap::new();
        for v in atoms_vars(heads) {
            shape_of.insert(v.clone(), Skeleton::Hole);
            block_of.insert(v.clone(), vec![Term::var(v)]);
        }
        for h in heads {
            let new_head = instantiate_atom(h, &shape_of, &block_of, bound)
                .expect("source-side head shapes stay within the depth bound");
            st.push(StConstraint::Tgd(Tgd::new(body.clone(), vec![new_head])));
        }
    }

    // Target rules are instantiated per assignment of shapes to their
    // variables; combinations whose shapes outgrow the bound name values
    // that can never exist and are dropped.
    let mut t = Vec::new();
    for c in &m.t {
        let (body, heads, display) = match c {
            TargetConstraint::Tgd(tgd) => (&tgd.body, &tgd.head, tgd.to_string()),
            TargetConstraint::So(cl) => (&cl.body, &cl.head, cl.to_string()),
            TargetConstraint::Egd(_) => unreachable!("rejected above"),
        };
        let vars = atoms_vars(body);
        let combos = index_tuples(
            shapes.len(),
            vars.len(),
            opts.max_constraints,
            &format!("instantiating {display}"),
        )?;
        for idx in combos {
            let mut shape_of = BTreeMap::new();
            let mut block_of = BTreeMap::new();
            let mut next = 0usize;
            for (v, &i) in vars.iter().zip(idx.iter()) {
                let shape = shapes[i].clone();
                let block: Vec<Term> = (0..shape.arity())
                    .map(|_| {
                        let t = Term::var(format!("x{next}"));
                        next += 1;
                        t
                    })
                    .collect();
                shape_of.insert(v.clone(), shape);
                block_of.insert(v.clone(), block);
            }
            let new_body: Option<Vec<Atom>> = body
                .iter()
                .map(|a| instantiate_atom(a, &shape_of, &block_of, bound))
                .collect();
            let Some(new_body) = new_body else {
                continue;
            };
            for h in heads {
                if let Some(new_head) = instantiate_atom(h, &shape_of, &block_of, bound) {
                    if t.len() >= opts.max_constraints {
                        return Err(Error::Resource(format!(
                            "skeleton rewriting generates more than {} dependencies",
                            opts.max_constraints
                        )));
                    }
                    t.push(TargetConstraint::Tgd(Tgd::new(
                        new_body.clone(),
                        vec![new_head],
                    )));
                }
            }
        }
    }

    let mapping = SchemaMapping::new(
        m.source.clone(),
        Schema::from_pairs(target_pairs)?,
        IndexMap::new(),
        st,
        t,
    )?;
    Ok(SkeletonRewriting {
        mapping,
        depth_bound: bound,
        shapes,
        combination_cap: opts.max_constraints,
    })
}

impl SkeletonRewriting {
    /// Rewrites a query over the pre-rewriting target schema: answer
    /// variables keep the flat shape, existential variables range over
    /// all shapes within the bound. Disjuncts touching relations absent
    /// from the rewritten schema are dropped as unsatisfiable.
    pub fn rewrite_query(&self, q: &Ucq) -> Result<Ucq> {
        rewrite_query_shapes(
            q,
            &self.shapes,
            self.depth_bound,
            &self.mapping.target,
            self.combination_cap,
        )
    }
}

fn rewrite_query_shapes(
    q: &Ucq,
    shapes: &[Skeleton],
    bound: usize,
    available: &Schema,
    cap: usize,
) -> Result<Ucq> {
    let mut disjuncts = Vec::new();
    for cq in &q.disjuncts {
        let head_vars: BTreeSet<String> = cq.head_vars().into_iter().collect();
        let existentials = cq.existential_vars();
        let forbidden: BTreeSet<String> = atoms_vars(&cq.body).into_iter().collect();
        let combos = index_tuples(
            shapes.len(),
            existentials.len(),
            cap,
            &format!("rewriting a disjunct of query {}", q.name),
        )?;
        for idx in combos {
            let mut shape_of = BTreeMap::new();
            let mut block_of = BTreeMap::new();
            for v in &head_vars {
                shape_of.insert(v.clone(), Skeleton::Hole);
                block_of.insert(v.clone(), vec![Term::var(v.clone())]);
            }
            let mut counter = 0usize;
            for (v, &i) in existentials.iter().zip(idx.iter()) {
                let shape = shapes[i].clone();
                let block: Vec<Term> = (0..shape.arity())
                    .map(|_| loop {
                        let cand = format!("z{counter}");
                        counter += 1;
                        if !forbidden.contains(&cand) {
                            break Term::var(cand);
                        }
                    })
                    .collect();
                shape_of.insert(v.clone(), shape);
                block_of.insert(v.clone(), block);
            }
            let new_body: Option<Vec<Atom>> = cq
                .body
                .iter()
                .map(|a| instantiate_atom(a, &shape_of, &block_of, bound))
                .collect();
            let Some(new_body) = new_body else {
                continue;
            };
            if new_body.iter().all(|a| available.contains(&a.relation)) {
                disjuncts.push(Cq::new(cq.head.clone(), new_body));
            }
        }
    }
    Ucq::new(format!("{}_c", q.name), q.arity, disjuncts)
}

/// Drops target relations no chase can populate, and with them every
/// rule whose body mentions one. Derivability starts from the
/// source-to-target rule heads and closes under target rule heads.
pub fn prune_unreachable(r: &SkeletonRewriting) -> SkeletonRewriting {
    let m = &r.mapping;
    let mut derivable: BTreeSet<String> = m
        .st_tgds()
        .flat_map(|t| t.head.iter().map(|a| a.relation.clone()))
        .collect();
    loop {
        let mut changed = false;
        for tgd in m.target_tgds() {
            if tgd.body.iter().all(|a| derivable.contains(&a.relation))
                && tgd
                    .head
                    .iter()
                    .any(|a| !derivable.contains(&a.relation))
            {
                for a in &tgd.head {
                    derivable.insert(a.relation.clone());
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let t: Vec<TargetConstraint> = m
        .t
        .iter()
        .filter(|c| {
            let body = match c {
                TargetConstraint::Tgd(t) => &t.body,
                TargetConstraint::So(cl) => &cl.body,
                TargetConstraint::Egd(e) => &e.body,
            };
            body.iter().all(|a| derivable.contains(&a.relation))
        })
        .cloned()
        .collect();
    let mapping = SchemaMapping::new(
        m.source.clone(),
        m.target.restrict(&derivable),
        IndexMap::new(),
        m.st.clone(),
        t,
    )
    .expect("pruning a valid mapping preserves validity");
    SkeletonRewriting {
        mapping,
        depth_bound: r.depth_bound,
        shapes: r.shapes.clone(),
        combination_cap: r.combination_cap,
    }
}

/// A mapping compiled to GAV dependencies plus at most one egd, with the
/// query rewriting that preserves certain answers over it.
#[derive(Debug, Clone)]
pub struct CompiledMapping {
    pub mapping: SchemaMapping,
    /// Congruence relation introduced when the input had equalities; its
    /// flat-shape relation drives the final egd. `None` means the input
    /// was equality-free and the compiled mapping has no egd.
    pub eq_relation: Option<String>,
    shapes: Vec<Skeleton>,
    depth_bound: usize,
    combination_cap: usize,
}

impl CompiledMapping {
    /// Depth bound the shape enumeration was cut at.
    pub fn depth_bound(&self) -> usize {
        self.depth_bound
    }

    /// Shapes the target relations were split over.
    pub fn shapes(&self) -> &[Skeleton] {
        &self.shapes
    }

    /// Rewrites a query over the input target schema into one over the
    /// compiled schema with the same certain answers on corresponding
    /// solutions.
    pub fn transform_query(&self, q: &Ucq) -> Result<Ucq> {
        let staged = match &self.eq_relation {
            Some(eq) => singularize_query(q, eq),
            None => q.clone(),
        };
        rewrite_query_shapes(
            &staged,
            &self.shapes,
            self.depth_bound,
            &self.mapping.target,
            self.combination_cap,
        )
    }
}

/// Runs the full pipeline. The result is function-free with GAV
/// source-to-target and target tgds; when the input had equalities, one
/// egd equates values congruent at flat shape, restoring the failure
/// behavior the singularization removed.
pub fn compile_to_gav(m: &SchemaMapping, opts: &CompileOptions) -> Result<CompiledMapping> {
    let st_equalities = m.st.iter().any(|c| match c {
        StConstraint::So(cl) => !cl.equalities.is_empty(),
        StConstraint::Tgd(_) => false,
    });
    let staged = if st_equalities {
        copy_extend(m)?
    } else {
        m.clone()
    };
    let staged = skolemize(&staged)?;
    let (staged, eq_relation) = if staged.has_equalities() {
        let s = equality_singularize(&staged)?;
        (s.mapping, Some(s.eq_relation))
    } else {
        (staged, None)
    };
    let rewriting = skeleton_rewrite(&staged, opts)?;
    let rewriting = if opts.prune {
        prune_unreachable(&rewriting)
    } else {
        rewriting
    };
    let SkeletonRewriting {
        mapping,
        depth_bound,
        shapes,
        combination_cap,
    } = rewriting;

    let mut t = mapping.t.clone();
    if let Some(eq) = &eq_relation {
        let flat = relation_name(eq, &[Skeleton::Hole, Skeleton::Hole]);
        // When no rule can ever populate the flat congruence relation,
        // the egd is vacuous and pruning already removed the relation.
        if mapping.target.contains(&flat) {
            t.push(TargetConstraint::Egd(Egd::new(
                vec![Atom::new(flat, vec![Term::var("x0"), Term::var("x1")])],
                "x0",
                "x1",
            )));
        }
    }
    let mapping = SchemaMapping::new(
        mapping.source,
        mapping.target,
        IndexMap::new(),
        mapping.st,
        t,
    )?;
    Ok(CompiledMapping {
        mapping,
        eq_relation,
        shapes,
        depth_bound,
        combination_cap,
    })
}
