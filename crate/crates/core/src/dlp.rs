//! Exchange-repair query answering as cautious reasoning over a positive
//! disjunctive logic program.
//!
//! The source instance is viewed indefinitely: every source fact is
//! guessed kept or deleted, dependencies fire over the kept copies, and
//! egds become denial constraints. Models that are minimal in the deleted
//! relations while the source relations stay fixed correspond one-to-one
//! to exchange-repair solutions, so intersecting query answers over those
//! models computes the same certain answers as enumerating repairs.
//!
//! [`export_dlp_text`] emits the program in solver-oriented syntax
//! (lowercase predicates, uppercase variables, `v` disjunction, `:-`
//! rules, `!=` builtins) with a comment header recording which relations
//! are minimized and which are fixed; [`parse_dlp_text`] reads that
//! format back.

use std::collections::{BTreeMap, BTreeSet};

use indexmap::IndexMap;

use crate::compile::{compile_to_gav, index_tuples, CompileOptions};
use crate::hom::{find_homomorphisms, Assignment};
use crate::lattice;
use crate::mapping::{SchemaMapping, StConstraint};
use crate::query::{eval_ucq, Ucq};
use crate::repair::RepairOptions;
use crate::schema::{Fact, Instance, Schema};
use crate::term::{Atom, Term};
use crate::value::{Constant, Value};
use crate::{Error, Result};

/// One rule: disjunctive head (empty means a denial constraint), positive
/// body atoms, and inequality builtins over body terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DlpRule {
    pub head: Vec<Atom>,
    pub body: Vec<Atom>,
    pub inequalities: Vec<(Term, Term)>,
}

impl DlpRule {
    fn new(head: Vec<Atom>, body: Vec<Atom>, inequalities: Vec<(Term, Term)>) -> Self {
        DlpRule {
            head,
            body,
            inequalities,
        }
    }

    /// Variables in first-occurrence order across head, body, and
    /// inequalities.
    fn vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        for a in self.head.iter().chain(&self.body) {
            a.collect_vars(&mut out);
        }
        for (l, r) in &self.inequalities {
            l.collect_vars(&mut out);
            r.collect_vars(&mut out);
        }
        out
    }
}

/// A positive disjunctive logic program with its minimization contract:
/// models are compared on the `minimized` relations while the `fixed`
/// relations are pinned to the input instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DlpArtifact {
    pub program: Vec<DlpRule>,
    pub schema: Schema,
    pub minimized: BTreeSet<String>,
    pub fixed: BTreeSet<String>,
}

/// Variable names for the per-relation guess rules: borrowed from the
/// first dependency body atom over the relation when its arguments are
/// pairwise distinct variables, else positional.
fn guess_vars(m: &SchemaMapping, relation: &str, arity: usize) -> Vec<Term> {
    for c in &m.st {
        let body = match c {
            StConstraint::Tgd(t) => &t.body,
            StConstraint::So(cl) => &cl.body,
        };
        for atom in body {
            if atom.relation != relation {
                continue;
            }
            let mut names = BTreeSet::new();
            let all_distinct_vars = atom.args.iter().all(|t| match t {
                Term::Var(v) => names.insert(v.clone()),
                _ => false,
            });
            if all_distinct_vars {
                return atom.args.clone();
            }
        }
    }
    (0..arity).map(|i| Term::var(format!("x{i}"))).collect()
}

/// Encodes a GAV mapping with egds as a positive program: per source
/// relation a kept-or-deleted guess, an exclusion constraint, and a
/// support rule pinning kept facts inside the source; dependencies as
/// rules (source-to-target ones over the kept copies); egds as denial
/// constraints with an inequality. Minimize the deleted relations, fix
/// the source relations.
pub fn build_dlp(m: &SchemaMapping) -> Result<DlpArtifact> {
    if m.has_second_order() {
        return Err(Error::Class(
            "the logic program construction needs first-order dependencies; compile the mapping to GAV form first"
                .to_string(),
        ));
    }
    for t in m.st_tgds().chain(m.target_tgds()) {
        if !t.is_full() {
            return Err(Error::Class(format!(
                "tgd {t} has existential head variables; compile the mapping to GAV form first"
            )));
        }
    }

    let mut taken: BTreeSet<String> = m.source.names().map(str::to_string).collect();
    taken.extend(m.target.names().map(str::to_string));
    let fresh = |base: String, taken: &mut BTreeSet<String>| {
        let mut name = base;
        while !taken.insert(name.clone()) {
            name.push('_');
        }
        name
    };

    let mut pairs: Vec<(String, usize)> = m
        .source
        .iter()
        .chain(m.target.iter())
        .map(|(r, a)| (r.to_string(), a))
        .collect();
    let mut kept_of: BTreeMap<String, String> = BTreeMap::new();
    let mut deleted_of: BTreeMap<String, String> = BTreeMap::new();
    for (rel, arity) in m.source.iter() {
        let k = fresh(format!("{rel}_k"), &mut taken);
        let d = fresh(format!("{rel}_d"), &mut taken);
        pairs.push((k.clone(), arity));
        pairs.push((d.clone(), arity));
        kept_of.insert(rel.to_string(), k);
        deleted_of.insert(rel.to_string(), d);
    }

    let keep_body = |atoms: &[Atom]| -> Vec<Atom> {
        atoms
            .iter()
            .map(|a| Atom::new(kept_of[&a.relation].clone(), a.args.clone()))
            .collect()
    };

    let mut program = Vec::new();
    for (rel, arity) in m.source.iter() {
        let args = guess_vars(m, rel, arity);
        let source = Atom::new(rel, args.clone());
        let kept = Atom::new(kept_of[rel].clone(), args.clone());
        let deleted = Atom::new(deleted_of[rel].clone(), args);
        program.push(DlpRule::new(
            vec![kept.clone(), deleted.clone()],
            vec![source.clone()],
            vec![],
        ));
        program.push(DlpRule::new(vec![], vec![kept.clone(), deleted], vec![]));
        program.push(DlpRule::new(vec![source], vec![kept], vec![]));
    }
    for tgd in m.st_tgds() {
        for h in &tgd.head {
            program.push(DlpRule::new(vec![h.clone()], keep_body(&tgd.body), vec![]));
        }
    }
    for tgd in m.target_tgds() {
        for h in &tgd.head {
            program.push(DlpRule::new(vec![h.clone()], tgd.body.clone(), vec![]));
        }
    }
    for egd in m.target_egds() {
        program.push(DlpRule::new(
            vec![],
            egd.body.clone(),
            vec![(Term::var(&egd.left), Term::var(&egd.right))],
        ));
    }

    Ok(DlpArtifact {
        program,
        schema: Schema::from_pairs(pairs)?,
        minimized: deleted_of.into_values().collect(),
        fixed: m.source.names().map(str::to_string).collect(),
    })
}

fn ground_value(term: &Term) -> Result<Value> {
    match term {
        Term::Const(c) => Ok(Value::Const(c.clone())),
        other => Err(Error::Precondition(format!(
            "term {other} in a ground rule is not a constant"
        ))),
    }
}

fn ground_fact(atom: &Atom) -> Result<Fact> {
    let args = atom.args.iter().map(ground_value).collect::<Result<_>>()?;
    Ok(Fact::new(atom.relation.clone(), args))
}

fn instance_constants(i: &Instance) -> Result<Vec<Constant>> {
    if i.has_nulls() {
        return Err(Error::Precondition(
            "the program instance must be null-free".to_string(),
        ));
    }
    Ok(i.constants().into_iter().collect())
}

fn term_of_value(v: &Value) -> Result<Term> {
    match v {
        Value::Const(c) => Ok(Term::Const(c.clone())),
        other => Err(Error::Precondition(format!(
            "value {other} cannot appear in a ground rule"
        ))),
    }
}

/// The assignments extending `h` that also cover `free` by ranging over
/// the instance constants.
fn complete_assignments(
    free: &[String],
    h: &Assignment,
    domain: &[Constant],
    cap: usize,
) -> Result<Vec<Assignment>> {
    if free.is_empty() {
        return Ok(vec![h.clone()]);
    }
    let mut out = Vec::new();
    for idx in index_tuples(domain.len(), free.len(), cap, "grounding the program")? {
        let mut a = h.clone();
        for (v, &j) in free.iter().zip(idx.iter()) {
            a.insert(v.clone(), Value::Const(domain[j].clone()));
        }
        out.push(a);
    }
    Ok(out)
}

fn atom_under(atom: &Atom, a: &Assignment) -> Result<Atom> {
    let args = atom
        .args
        .iter()
        .map(|t| match t {
            Term::Const(_) => Ok(t.clone()),
            Term::Var(v) => term_of_value(&a[v]),
            Term::App(_, _) => Err(Error::Precondition(format!(
                "term {t} in a program rule is not first-order"
            ))),
        })
        .collect::<Result<_>>()?;
    Ok(Atom::new(atom.relation.clone(), args))
}

/// Instantiates every rule over the derivable facts: bodies are matched
/// homomorphically against a saturation of the instance under all rule
/// heads (a guess counts as deriving both sides), so only
/// instantiations that can ever fire survive. Head or inequality
/// variables outside the body range over the instance constants.
/// Instantiations whose inequalities fail are dropped, ones that hold
/// are erased, and the facts of `i` are appended as rules with empty
/// bodies. Capped to keep adversarial programs from exhausting memory.
pub fn ground(artifact: &DlpArtifact, i: &Instance) -> Result<Vec<DlpRule>> {
    const GROUND_RULE_LIMIT: usize = 1_000_000;
    let domain = instance_constants(i)?;

    let program_facts: Vec<Fact> = artifact
        .program
        .iter()
        .filter(|r| r.body.is_empty() && r.head.len() == 1 && r.vars().is_empty())
        .map(|r| ground_fact(&r.head[0]))
        .collect::<Result<_>>()?;
    let mut possible: BTreeSet<Fact> = i.facts().chain(program_facts).collect();
    loop {
        let inst = Instance::from_facts(possible.iter().cloned());
        let mut added = Vec::new();
        for rule in &artifact.program {
            if rule.head.is_empty() {
                continue;
            }
            let homs = if rule.body.is_empty() {
                vec![Assignment::new()]
            } else {
                find_homomorphisms(&rule.body, &inst)?
            };
            for h in homs {
                for head in &rule.head {
                    let mut head_vars = Vec::new();
                    head.collect_vars(&mut head_vars);
                    head_vars.retain(|v| !h.contains_key(v));
                    for a in complete_assignments(&head_vars, &h, &domain, GROUND_RULE_LIMIT)? {
                        let fact = ground_fact(&atom_under(head, &a)?)?;
                        if !possible.contains(&fact) {
                            added.push(fact);
                        }
                    }
                }
            }
        }
        if added.is_empty() {
            break;
        }
        possible.extend(added);
        if possible.len() > GROUND_RULE_LIMIT {
            return Err(Error::Resource(
                "grounding the program exceeds the fact limit".to_string(),
            ));
        }
    }

    let inst = Instance::from_facts(possible);
    let mut out = Vec::new();
    for rule in &artifact.program {
        let mut body_vars = Vec::new();
        for atom in &rule.body {
            atom.collect_vars(&mut body_vars);
        }
        let mut free = rule.vars();
        free.retain(|v| !body_vars.contains(v));
        let homs = if rule.body.is_empty() {
            vec![Assignment::new()]
        } else {
            find_homomorphisms(&rule.body, &inst)?
        };
        for h in homs {
            for a in complete_assignments(&free, &h, &domain, GROUND_RULE_LIMIT)? {
                let value_of = |t: &Term| match t {
                    Term::Var(v) => a[v].clone(),
                    Term::Const(c) => Value::Const(c.clone()),
                    Term::App(_, _) => unreachable!("inequalities are first-order"),
                };
                if rule
                    .inequalities
                    .iter()
                    .any(|(l, r)| value_of(l) == value_of(r))
                {
                    continue;
                }
                let head = rule
                    .head
                    .iter()
                    .map(|atom| atom_under(atom, &a))
                    .collect::<Result<_>>()?;
                let body = rule
                    .body
                    .iter()
                    .map(|atom| atom_under(atom, &a))
                    .collect::<Result<_>>()?;
                out.push(DlpRule::new(head, body, vec![]));
                if out.len() > GROUND_RULE_LIMIT {
                    return Err(Error::Resource(
                        "grounding the program exceeds the rule limit".to_string(),
                    ));
                }
            }
        }
    }
    for fact in i.facts() {
        let args = fact
            .args
            .iter()
            .map(term_of_value)
            .collect::<Result<_>>()?;
        out.push(DlpRule::new(vec![Atom::new(fact.relation, args)], vec![], vec![]));
    }
    Ok(out)
}

fn saturate(facts: &mut BTreeSet<Fact>, definite: &[(Vec<Fact>, Fact)]) {
    loop {
        let mut changed = false;
        for (body, head) in definite {
            if !facts.contains(head) && body.iter().all(|f| facts.contains(f)) {
                facts.insert(head.clone());
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

/// Enumerates the canonical minimal models of a ground kept/deleted guess
/// program: the `fixed` relations are pinned to `i`, each two-atom
/// disjunction is a guess over one source fact, the definite rules close
/// off under a least fixpoint, and minimality in the `minimized`
/// relations is exactly maximality of the kept set. Each returned model
/// carries the least target part for its guess; unions of conjunctive
/// queries cannot distinguish these from the other models sharing the
/// guess, so cautious answers over the returned set are exact.
pub fn minimal_models(
    rules: &[DlpRule],
    minimized: &BTreeSet<String>,
    fixed: &BTreeSet<String>,
    i: &Instance,
    opts: &RepairOptions,
) -> Result<Vec<Instance>> {
    let mut base: BTreeSet<Fact> = i.facts().collect();
    let mut guesses: Vec<(Fact, Fact, Fact)> = Vec::new();
    let mut definite: Vec<(Vec<Fact>, Fact)> = Vec::new();
    let mut denials: Vec<Vec<Fact>> = Vec::new();
    for rule in rules {
        if !rule.vars().is_empty() {
            return Err(Error::Precondition(
                "the program must be grounded before model enumeration".to_string(),
            ));
        }
        // Leftover ground inequalities: a false one satisfies the rule
        // vacuously, a true one is dropped from the body.
        if rule
            .inequalities
            .iter()
            .any(|(l, r)| ground_value(l).ok() == ground_value(r).ok())
        {
            continue;
        }
        let body: Vec<Fact> = rule.body.iter().map(ground_fact).collect::<Result<_>>()?;
        match rule.head.len() {
            0 => denials.push(body),
            1 => {
                let head = ground_fact(&rule.head[0])?;
                if body.is_empty() {
                    base.insert(head);
                } else {
                    definite.push((body, head));
                }
            }
            2 => {
                let kept = ground_fact(&rule.head[0])?;
                let deleted = ground_fact(&rule.head[1])?;
                if body.len() != 1
                    || !minimized.contains(&deleted.relation)
                    || !fixed.contains(&body[0].relation)
                {
                    return Err(Error::Precondition(
                        "disjunctive rules must guess a kept/deleted split of one fixed fact"
                            .to_string(),
                    ));
                }
                guesses.push((kept, deleted, body[0].clone()));
            }
            n => {
                return Err(Error::Precondition(format!(
                    "a rule with {n} head atoms is not a kept/deleted guess"
                )))
            }
        }
    }
    guesses.retain(|(_, _, source)| base.contains(source));
    guesses.sort();
    guesses.dedup();

    let model_facts = |mask: u64| -> BTreeSet<Fact> {
        let mut facts = base.clone();
        for (bit, (kept, deleted, _)) in guesses.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                facts.insert(kept.clone());
            } else {
                facts.insert(deleted.clone());
            }
        }
        saturate(&mut facts, &definite);
        facts
    };
    let masks = lattice::maximal_satisfying_subsets(guesses.len(), &opts.lattice(), |mask| {
        let facts = model_facts(mask);
        Ok(denials
            .iter()
            .all(|body| !body.iter().all(|f| facts.contains(f))))
    })?;
    Ok(masks
        .into_iter()
        .map(|mask| Instance::from_facts(model_facts(mask)))
        .collect())
}

fn answers_over_models(
    q: &Ucq,
    i: &Instance,
    m: &SchemaMapping,
    opts: &RepairOptions,
) -> Result<BTreeSet<Vec<Value>>> {
    q.validate(&m.target)?;
    let artifact = build_dlp(m)?;
    let rules = ground(&artifact, i)?;
    let models = minimal_models(&rules, &artifact.minimized, &artifact.fixed, i, opts)?;
    let mut per_model = Vec::with_capacity(models.len());
    for model in &models {
        per_model.push(eval_ucq(q, &model.restrict_to(m.target.names()))?);
    }
    let mut it = per_model.into_iter();
    let first = it
        .next()
        .unwrap_or_else(|| unreachable!("the all-deleted guess is always a model"));
    Ok(it.fold(first, |acc, s| acc.intersection(&s).cloned().collect()))
}

/// XR-certain answers through the logic program route. GAV mappings are
/// encoded directly; anything else is first compiled to GAV form and the
/// query rewritten along with it.
pub fn xr_certain_via_dlp(
    q: &Ucq,
    i: &Instance,
    m: &SchemaMapping,
    opts: &RepairOptions,
) -> Result<BTreeSet<Vec<Value>>> {
    let direct = !m.has_second_order()
        && m.st_tgds().all(|t| t.is_full())
        && m.target_tgds().all(|t| t.is_full());
    if direct {
        return answers_over_models(q, i, m, opts);
    }
    let compiled = compile_to_gav(m, &CompileOptions::default())?;
    let rewritten = compiled.transform_query(q)?;
    answers_over_models(&rewritten, i, &compiled.mapping, opts)
}

// ---------------------------------------------------------------------
// Text export and import

/// Lowercases relation names for the solver-oriented export, replacing
/// the shape-subscript brackets with underscores; collisions get a
/// numeric suffix in schema declaration order.
fn mangle_relations(schema: &Schema) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    let mut used: BTreeSet<String> = BTreeSet::new();
    for (rel, _) in schema.iter() {
        let base: String = rel
            .to_lowercase()
            .chars()
            .map(|c| if c == '[' || c == ']' { '_' } else { c })
            .collect();
        let mut name = base.clone();
        let mut k = 1;
        while !used.insert(name.clone()) {
            name = format!("{base}_r{k}");
            k += 1;
        }
        map.insert(rel.to_string(), name);
    }
    map
}

/// Uppercases the first character of each variable so the export reads
/// as solver variables; collisions within a rule get a numeric suffix.
fn mangle_vars(vars: &[String]) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    let mut used: BTreeSet<String> = BTreeSet::new();
    for v in vars {
        let mut chars = v.chars();
        let base = match chars.next() {
            Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
            None => continue,
        };
        let mut name = base.clone();
        let mut k = 1;
        while !used.insert(name.clone()) {
            name = format!("{base}_{k}");
            k += 1;
        }
        map.insert(v.clone(), name);
    }
    map
}

fn write_term(out: &mut String, term: &Term, vars: &BTreeMap<String, String>) {
    match term {
        Term::Var(v) => out.push_str(&vars[v]),
        Term::Const(c) => out.push_str(&c.to_string()),
        Term::App(_, _) => unreachable!("program rules are first-order"),
    }
}

fn write_atom(
    out: &mut String,
    atom: &Atom,
    rels: &BTreeMap<String, String>,
    vars: &BTreeMap<String, String>,
) {
    out.push_str(&rels[&atom.relation]);
    if atom.args.is_empty() {
        return;
    }
    out.push('(');
    for (k, arg) in atom.args.iter().enumerate() {
        if k > 0 {
            out.push_str(", ");
        }
        write_term(out, arg, vars);
    }
    out.push(')');
}

/// Renders the program as solver-oriented text; facts of `i` are inlined
/// when given. The header records the minimization contract in exported
/// names.
pub fn export_dlp_text(artifact: &DlpArtifact, i: Option<&Instance>) -> Result<String> {
    let rels = mangle_relations(&artifact.schema);
    let exported_names = |set: &BTreeSet<String>| -> Vec<String> {
        set.iter().map(|r| rels[r].clone()).collect()
    };
    let mut out = String::new();
    out.push_str("% positive disjunctive logic program; read under (R_M, R_F)-minimal models\n");
    out.push_str(&format!(
        "% minimize (R_M): {}\n",
        exported_names(&artifact.minimized).join(", ")
    ));
    out.push_str(&format!(
        "% fixed (R_F): {}\n",
        exported_names(&artifact.fixed).join(", ")
    ));
    for rule in &artifact.program {
        let vars = mangle_vars(&rule.vars());
        for (k, atom) in rule.head.iter().enumerate() {
            if k > 0 {
                out.push_str(" v ");
            }
            write_atom(&mut out, atom, &rels, &vars);
        }
        if !rule.body.is_empty() || !rule.inequalities.is_empty() {
            if !rule.head.is_empty() {
                out.push(' ');
            }
            out.push_str(":- ");
            let mut first = true;
            for atom in &rule.body {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                write_atom(&mut out, atom, &rels, &vars);
            }
            for (l, r) in &rule.inequalities {
                if !first {
                    out.push_str(", ");
                }
                first = false;
                write_term(&mut out, l, &vars);
                out.push_str(" != ");
                write_term(&mut out, r, &vars);
            }
        }
        out.push_str(".\n");
    }
    if let Some(inst) = i {
        instance_constants(inst)?;
        for fact in inst.facts() {
            out.push_str(&rels[&fact.relation]);
            out.push('(');
            for (k, v) in fact.args.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                out.push_str(&v.to_string());
            }
            out.push_str(").\n");
        }
    }
    Ok(out)
}

/// Splits on a separator that only counts outside quoted strings and
/// parentheses. The separator must not start with `"`, `(`, or `\`.
fn split_outside(s: &str, sep: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut current = String::new();
    let chars: Vec<char> = s.chars().collect();
    let sep_chars: Vec<char> = sep.chars().collect();
    let mut i = 0;
    let mut depth = 0usize;
    let mut in_str = false;
    while i < chars.len() {
        let c = chars[i];
        if in_str {
            current.push(c);
            if c == '\\' && i + 1 < chars.len() {
                current.push(chars[i + 1]);
                i += 2;
                continue;
            }
            if c == '"' {
                in_str = false;
            }
            i += 1;
            continue;
        }
        if depth == 0 && chars[i..].starts_with(&sep_chars[..]) {
            parts.push(current.clone());
            current.clear();
            i += sep_chars.len();
            continue;
        }
        match c {
            '"' => in_str = true,
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            _ => {}
        }
        current.push(c);
        i += 1;
    }
    parts.push(current);
    parts
}

fn parse_exported_term(s: &str, line: usize) -> Result<Term> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix('"') {
        let Some(inner) = rest.strip_suffix('"') else {
            return Err(Error::parse(line, 1, format!("unterminated string {s}")));
        };
        let mut out = String::new();
        let mut chars = inner.chars();
        while let Some(c) = chars.next() {
            if c == '\\' {
                match chars.next() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    _ => {
                        return Err(Error::parse(
                            line,
                            1,
                            "unknown escape; only \\\" and \\\\ are recognized",
                        ))
                    }
                }
            } else {
                out.push(c);
            }
        }
        return Ok(Term::Const(Constant::Str(out)));
    }
    if s.chars().next().is_some_and(|c| c.is_ascii_digit() || c == '-') {
        let n: i64 = s
            .parse()
            .map_err(|_| Error::parse(line, 1, format!("integer {s} out of range")))?;
        return Ok(Term::Const(Constant::Int(n)));
    }
    if s.chars().next().is_some_and(char::is_uppercase)
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        return Ok(Term::var(s));
    }
    Err(Error::parse(
        line,
        1,
        format!("expected a variable or constant, found {s}"),
    ))
}

fn parse_exported_atom(s: &str, line: usize) -> Result<Atom> {
    let s = s.trim();
    let (name, args) = match s.split_once('(') {
        None => (s, vec![]),
        Some((name, rest)) => {
            let Some(inner) = rest.strip_suffix(')') else {
                return Err(Error::parse(line, 1, format!("missing ')' in atom {s}")));
            };
            let args = if inner.trim().is_empty() {
                vec![]
            } else {
                split_outside(inner, ",")
                    .iter()
                    .map(|part| parse_exported_term(part, line))
                    .collect::<Result<_>>()?
            };
            (name.trim(), args)
        }
    };
    if name.is_empty()
        || !name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_')
        || name.chars().next().is_some_and(|c| c.is_ascii_digit())
    {
        return Err(Error::parse(line, 1, format!("invalid predicate name {name}")));
    }
    Ok(Atom::new(name, args))
}

/// Reads the solver-oriented text back into an artifact plus any inlined
/// facts. Exported names are kept verbatim; the schema covers exactly
/// the relations that occur in rules or facts.
pub fn parse_dlp_text(text: &str) -> Result<(DlpArtifact, Vec<Fact>)> {
    let mut minimized = BTreeSet::new();
    let mut fixed = BTreeSet::new();
    let mut program = Vec::new();
    let mut facts = Vec::new();
    let mut arities: IndexMap<String, usize> = IndexMap::new();
    let mut record = |atom: &Atom, line: usize| -> Result<()> {
        match arities.get(&atom.relation) {
            Some(&a) if a != atom.args.len() => Err(Error::parse(
                line,
                1,
                format!(
                    "relation {} used with arity {} and {}",
                    atom.relation,
                    a,
                    atom.args.len()
                ),
            )),
            Some(_) => Ok(()),
            None => {
                arities.insert(atom.relation.clone(), atom.args.len());
                Ok(())
            }
        }
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('%') {
            let comment = comment.trim();
            let names = |rest: &str| -> BTreeSet<String> {
                rest.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            };
            if let Some(rest) = comment.strip_prefix("minimize (R_M):") {
                minimized = names(rest);
            } else if let Some(rest) = comment.strip_prefix("fixed (R_F):") {
                fixed = names(rest);
            }
            continue;
        }
        let Some(stmt) = line.strip_suffix('.') else {
            return Err(Error::parse(lineno, line.len(), "a rule must end with '.'"));
        };
        let (head_text, body_text) = match stmt.split_once(":-") {
            Some((h, b)) => (h.trim(), Some(b.trim())),
            None => (stmt.trim(), None),
        };
        let head: Vec<Atom> = if head_text.is_empty() {
            vec![]
        } else {
            split_outside(head_text, " v ")
                .iter()
                .map(|part| parse_exported_atom(part, lineno))
                .collect::<Result<_>>()?
        };
        let mut body = Vec::new();
        let mut inequalities = Vec::new();
        if let Some(body_text) = body_text {
            for item in split_outside(body_text, ",") {
                let item = item.trim();
                if let Some((l, r)) = item.split_once("!=") {
                    inequalities.push((
                        parse_exported_term(l, lineno)?,
                        parse_exported_term(r, lineno)?,
                    ));
                } else {
                    body.push(parse_exported_atom(item, lineno)?);
                }
            }
        }
        for atom in head.iter().chain(&body) {
            record(atom, lineno)?;
        }
        let is_fact = body.is_empty()
            && inequalities.is_empty()
            && head.len() == 1
            && head[0].args.iter().all(|t| matches!(t, Term::Const(_)));
        if is_fact {
            facts.push(ground_fact(&head[0])?);
        } else {
            program.push(DlpRule::new(head, body, inequalities));
        }
    }
    let artifact = DlpArtifact {
        program,
        schema: Schema::from_pairs(arities)?,
        minimized,
        fixed,
    };
    Ok((artifact, facts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{Egd, TargetConstraint, Tgd};
    use crate::repair::{enumerate_source_repairs, xr_certain};
    use crate::textio::{parse_instance, parse_mapping, parse_query, InstanceMode};

    fn atom(rel: &str, vars: &[&str]) -> Atom {
        Atom::new(rel, vars.iter().map(|v| Term::var(*v)).collect())
    }

    fn running() -> (SchemaMapping, Instance) {
        let m = parse_mapping(crate::chase::RUNNING_MAPPING).unwrap();
        let i = parse_instance(
            crate::chase::RUNNING_INSTANCE,
            &m.source,
            InstanceMode::Source,
        )
        .unwrap();
        (m, i)
    }

    fn values(names: &[&str]) -> Vec<Value> {
        names.iter().map(|n| Value::str(*n)).collect()
    }

    fn opts() -> RepairOptions {
        RepairOptions::default()
    }

    #[test]
    fn build_rejects_existential_dependencies() {
        let m = SchemaMapping::new(
            Schema::from_pairs([("R", 2)]).unwrap(),
            Schema::from_pairs([("T", 2)]).unwrap(),
            IndexMap::new(),
            vec![StConstraint::Tgd(Tgd::new(
                vec![atom("R", &["x", "y"])],
                vec![atom("T", &["x", "u"])],
            ))],
            vec![],
        )
        .unwrap();
        let err = build_dlp(&m).unwrap_err();
        assert!(matches!(err, Error::Class(_)), "got {err}");
    }

    #[test]
    fn running_program_has_figure_shape() {
        let (m, _) = running();
        let art = build_dlp(&m).unwrap();
        // Three rules per source relation, one per dependency head atom,
        // one denial for the key.
        assert_eq!(art.program.len(), 3 + 3 + 2 + 1 + 1);
        assert_eq!(
            art.minimized,
            BTreeSet::from([
                "Task_Assignments_d".to_string(),
                "Stakeholders_old_d".to_string()
            ])
        );
        assert_eq!(
            art.fixed,
            BTreeSet::from([
                "Task_Assignments".to_string(),
                "Stakeholders_old".to_string()
            ])
        );
        assert_eq!(art.schema.arity("Task_Assignments_k"), Some(3));
        assert_eq!(art.schema.arity("Stakeholders_old_d"), Some(2));
        let guess = &art.program[0];
        assert_eq!(guess.head.len(), 2);
        assert_eq!(guess.head[0], atom("Task_Assignments_k", &["p", "t", "d"]));
        assert_eq!(guess.head[1], atom("Task_Assignments_d", &["p", "t", "d"]));
        assert_eq!(guess.body, vec![atom("Task_Assignments", &["p", "t", "d"])]);
        let denial = art.program.last().unwrap();
        assert!(denial.head.is_empty());
        assert_eq!(
            denial.inequalities,
            vec![(Term::var("d"), Term::var("d2"))]
        );
    }

    #[test]
    fn empty_mapping_builds_empty_program() {
        let m = SchemaMapping::new(
            Schema::new(),
            Schema::new(),
            IndexMap::new(),
            vec![],
            vec![],
        )
        .unwrap();
        let art = build_dlp(&m).unwrap();
        assert!(art.program.is_empty());
        assert!(art.minimized.is_empty());
        let text = export_dlp_text(&art, None).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().all(|l| l.starts_with('%')));
    }

    #[test]
    fn copy_mapping_rule_counts() {
        let m = parse_mapping(
            "source: edges/2\ntarget: links/2\nst-tgd: edges(x, y) -> links(x, y)\nt-egd: links(x, y) & links(x, y2) -> y = y2\n",
        )
        .unwrap();
        let art = build_dlp(&m).unwrap();
        assert_eq!(art.program.len(), 3 + 1 + 1);
    }

    #[test]
    fn export_running_program_matches_documented_text() {
        let (m, _) = running();
        let text = export_dlp_text(&build_dlp(&m).unwrap(), None).unwrap();
        let expected = "\
% positive disjunctive logic program; read under (R_M, R_F)-minimal models
% minimize (R_M): stakeholders_old_d, task_assignments_d
% fixed (R_F): stakeholders_old, task_assignments
task_assignments_k(P, T, D) v task_assignments_d(P, T, D) :- task_assignments(P, T, D).
:- task_assignments_k(P, T, D), task_assignments_d(P, T, D).
task_assignments(P, T, D) :- task_assignments_k(P, T, D).
stakeholders_old_k(T, S) v stakeholders_old_d(T, S) :- stakeholders_old(T, S).
:- stakeholders_old_k(T, S), stakeholders_old_d(T, S).
stakeholders_old(T, S) :- stakeholders_old_k(T, S).
departments(P, D) :- task_assignments_k(P, T, D).
tasks(P, T) :- task_assignments_k(P, T, D).
stakeholders_new(T, S) :- stakeholders_old_k(T, S).
:- departments(P, D), departments(P, D2), D != D2.
";
        assert_eq!(text, expected);
    }

    #[test]
    fn export_round_trips_through_the_parser() {
        let m = parse_mapping(
            "source: edges/2\ntarget: links/2\nst-tgd: edges(x, y) -> links(x, y)\nt-egd: links(x, y) & links(x, y2) -> y = y2\n",
        )
        .unwrap();
        let i = Instance::new(
            &m.source,
            [
                Fact::new("edges", values(&["a", "b"])),
                Fact::new("edges", vec![Value::int(1), Value::str("b \"v\" c")]),
            ],
        )
        .unwrap();
        let art = build_dlp(&m).unwrap();
        let text = export_dlp_text(&art, Some(&i)).unwrap();
        let (parsed, facts) = parse_dlp_text(&text).unwrap();
        // Relation names are already solver-safe; only variables get
        // re-cased, so everything else survives the round trip.
        assert_eq!(parsed.minimized, art.minimized);
        assert_eq!(parsed.fixed, art.fixed);
        assert_eq!(parsed.schema, art.schema);
        assert_eq!(parsed.program.len(), art.program.len());
        assert_eq!(
            Instance::from_facts(facts),
            Instance::from_facts(i.facts())
        );
        // One round of export fixes the spelling: from then on the text
        // and the parsed artifact are both stable.
        let text2 = export_dlp_text(&parsed, Some(&i)).unwrap();
        assert_eq!(text2, text);
        assert_eq!(parse_dlp_text(&text2).unwrap().0, parsed);
    }

    #[test]
    fn reparsed_mixed_case_export_is_stable() {
        let (m, i) = running();
        let art = build_dlp(&m).unwrap();
        let text = export_dlp_text(&art, Some(&i)).unwrap();
        let (parsed, facts) = parse_dlp_text(&text).unwrap();
        let inst = Instance::from_facts(facts);
        assert_eq!(export_dlp_text(&parsed, Some(&inst)).unwrap(), text);
    }

    fn tiny_inequality_artifact() -> DlpArtifact {
        DlpArtifact {
            program: vec![DlpRule::new(
                vec![],
                vec![atom("r", &["x", "y"])],
                vec![(Term::var("x"), Term::var("y"))],
            )],
            schema: Schema::from_pairs([("r", 2)]).unwrap(),
            minimized: BTreeSet::new(),
            fixed: BTreeSet::new(),
        }
    }

    #[test]
    fn grounding_resolves_inequalities() {
        let art = tiny_inequality_artifact();
        let schema = Schema::from_pairs([("r", 2)]).unwrap();
        let one = Instance::new(&schema, [Fact::new("r", values(&["a", "a"]))]).unwrap();
        let rules = ground(&art, &one).unwrap();
        // The only instantiation fails x != y; just the fact remains.
        assert_eq!(rules.len(), 1);
        assert!(rules[0].body.is_empty());

        // Only the satisfiable instantiation survives; the inequality
        // holds on it and is erased.
        let two = Instance::new(&schema, [Fact::new("r", values(&["a", "b"]))]).unwrap();
        let rules = ground(&art, &two).unwrap();
        let denials: Vec<&DlpRule> = rules.iter().filter(|r| r.head.is_empty()).collect();
        assert_eq!(denials.len(), 1);
        assert!(denials[0].inequalities.is_empty());
        assert_eq!(denials[0].body[0], Atom::new("r", vec![Term::Const(Constant::str("a")), Term::Const(Constant::str("b"))]));
    }

    #[test]
    fn grounding_includes_the_key_violation_instance() {
        let (m, i) = running();
        let rules = ground(&build_dlp(&m).unwrap(), &i).unwrap();
        let violation = vec![
            Fact::new("Departments", values(&["peter", "software"])),
            Fact::new("Departments", values(&["peter", "exec"])),
        ];
        assert!(rules.iter().any(|r| {
            r.head.is_empty()
                && r.body.len() == 2
                && r.body
                    .iter()
                    .map(|a| ground_fact(a).unwrap())
                    .collect::<Vec<_>>()
                    == violation
        }));
    }

    #[test]
    fn minimal_models_match_source_repairs() {
        let (m, i) = running();
        let art = build_dlp(&m).unwrap();
        let rules = ground(&art, &i).unwrap();
        let models = minimal_models(&rules, &art.minimized, &art.fixed, &i, &opts()).unwrap();
        assert_eq!(models.len(), 2);

        // Guess coherence: every source fact lands in exactly one side.
        for model in &models {
            for fact in i.facts() {
                let kept = Fact::new(format!("{}_k", fact.relation), fact.args.clone());
                let deleted = Fact::new(format!("{}_d", fact.relation), fact.args.clone());
                assert!(model.contains(&kept) != model.contains(&deleted));
            }
        }

        let repairs = enumerate_source_repairs(&i, &m, &opts()).unwrap();
        let kept_sources: BTreeSet<Vec<Fact>> = models
            .iter()
            .map(|model| {
                model
                    .facts()
                    .filter_map(|f| {
                        let rel = f.relation.strip_suffix("_k")?;
                        Some(Fact::new(rel, f.args))
                    })
                    .collect()
            })
            .collect();
        let repair_sources: BTreeSet<Vec<Fact>> = repairs
            .repairs
            .iter()
            .map(|r| r.source.facts().collect())
            .collect();
        assert_eq!(kept_sources, repair_sources);

        let model_targets: BTreeSet<Vec<Fact>> = models
            .iter()
            .map(|model| model.restrict_to(m.target.names()).facts().collect())
            .collect();
        let repair_targets: BTreeSet<Vec<Fact>> = repairs
            .repairs
            .iter()
            .map(|r| r.solution.facts().collect())
            .collect();
        assert_eq!(model_targets, repair_targets);
    }

    #[test]
    fn consistent_instance_has_one_model_without_deletions() {
        let (m, _) = running();
        let i = parse_instance(
            "Task_Assignments(\"peter\", \"tpsreport\", \"software\").\nStakeholders_old(\"tpsreport\", \"lumbergh\").\n",
            &m.source,
            InstanceMode::Source,
        )
        .unwrap();
        let art = build_dlp(&m).unwrap();
        let rules = ground(&art, &i).unwrap();
        let models = minimal_models(&rules, &art.minimized, &art.fixed, &i, &opts()).unwrap();
        assert_eq!(models.len(), 1);
        assert!(models[0]
            .facts()
            .all(|f| !art.minimized.contains(&f.relation)));
    }

    #[test]
    fn self_conflicting_fact_is_deleted() {
        let m = parse_mapping(
            "source: s/2\ntarget: t/2\nst-tgd: s(x, y) -> t(x, y)\nt-egd: t(x, y) -> x = y\n",
        )
        .unwrap();
        let i = Instance::new(&m.source, [Fact::new("s", values(&["a", "b"]))]).unwrap();
        let art = build_dlp(&m).unwrap();
        let rules = ground(&art, &i).unwrap();
        let models = minimal_models(&rules, &art.minimized, &art.fixed, &i, &opts()).unwrap();
        assert_eq!(models.len(), 1);
        assert!(models[0].contains(&Fact::new("s_d", values(&["a", "b"]))));
    }

    #[test]
    fn running_example_answers_match_brute_force() {
        let (m, i) = running();
        let q = parse_query(
            "query boss(p, s) :- Tasks(p, t) & Stakeholders_new(t, s)",
        )
        .unwrap();
        let via_dlp = xr_certain_via_dlp(&q, &i, &m, &opts()).unwrap();
        assert_eq!(via_dlp, BTreeSet::from([values(&["peter", "bobs"])]));
        assert_eq!(via_dlp, xr_certain(&q, &i, &m, &opts()).unwrap());
    }

    #[test]
    fn glav_mapping_is_compiled_automatically() {
        // Values sharing a successor under a key: the certain answers
        // are undirected connectivity, beyond any GAV encoding.
        let m = SchemaMapping::new(
            Schema::from_pairs([("R", 2)]).unwrap(),
            Schema::from_pairs([("T", 2)]).unwrap(),
            IndexMap::new(),
            vec![StConstraint::Tgd(Tgd::new(
                vec![atom("R", &["x", "y"])],
                vec![atom("T", &["x", "u"]), atom("T", &["y", "u"])],
            ))],
            vec![TargetConstraint::Egd(Egd::new(
                vec![atom("T", &["x", "y"]), atom("T", &["x", "y2"])],
                "y",
                "y2",
            ))],
        )
        .unwrap();
        let q = parse_query("query reach(x, y) :- T(x, u) & T(y, u)").unwrap();
        let i = Instance::new(
            &m.source,
            [
                Fact::new("R", values(&["a", "b"])),
                Fact::new("R", values(&["b", "c"])),
                Fact::new("R", values(&["d", "e"])),
            ],
        )
        .unwrap();
        let via_dlp = xr_certain_via_dlp(&q, &i, &m, &opts()).unwrap();
        assert_eq!(via_dlp, xr_certain(&q, &i, &m, &opts()).unwrap());
        assert_eq!(via_dlp.len(), 13);
    }

    #[test]
    fn target_closure_rules_reach_fixpoint() {
        // Transitive closure on the target side: the program computes
        // directed reachability.
        let m = parse_mapping(
            "source: R/2\ntarget: T/2\nst-tgd: R(x, y) -> T(x, y)\nt-tgd: T(x, y) & T(y, z) -> T(x, z)\n",
        )
        .unwrap();
        let q = parse_query("query path(x, y) :- T(x, y)").unwrap();
        let i = Instance::new(
            &m.source,
            [
                Fact::new("R", values(&["a", "b"])),
                Fact::new("R", values(&["b", "c"])),
                Fact::new("R", values(&["d", "e"])),
            ],
        )
        .unwrap();
        let got = xr_certain_via_dlp(&q, &i, &m, &opts()).unwrap();
        let expected: BTreeSet<Vec<Value>> = [
            values(&["a", "b"]),
            values(&["b", "c"]),
            values(&["a", "c"]),
            values(&["d", "e"]),
        ]
        .into();
        assert_eq!(got, expected);
        assert_eq!(got, xr_certain(&q, &i, &m, &opts()).unwrap());
    }
}
