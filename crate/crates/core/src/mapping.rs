//! Schema mappings: dependencies between a source and a target schema.
//!
//! A mapping consists of source-to-target constraints (first-order tgds or
//! second-order clauses with function symbols) and target constraints
//! (tgds, second-order clauses, egds). Second-order clauses are stored
//! flat, one struct per implication; the function symbol table lives on
//! the mapping itself.

use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexMap;

use crate::term::{atoms_vars, Atom, Term};
use crate::{Error, Result};

/// Tuple-generating dependency `body -> exists? head` with first-order
/// atoms on both sides. Head variables absent from the body are
/// existentially quantified.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Tgd {
    pub body: Vec<Atom>,
    pub head: Vec<Atom>,
}

impl Tgd {
    pub fn new(body: Vec<Atom>, head: Vec<Atom>) -> Self {
        Tgd { body, head }
    }

    pub fn body_vars(&self) -> Vec<String> {
        atoms_vars(&self.body)
    }

    /// Head variables that do not occur in the body, in first-occurrence
    /// order.
    pub fn existential_vars(&self) -> Vec<String> {
        let body: BTreeSet<String> = self.body_vars().into_iter().collect();
        atoms_vars(&self.head)
            .into_iter()
            .filter(|v| !body.contains(v))
            .collect()
    }

    pub fn is_full(&self) -> bool {
        self.existential_vars().is_empty()
    }

    /// GAV form: full with a single head atom.
    pub fn is_gav(&self) -> bool {
        self.is_full() && self.head.len() == 1
    }

    pub fn is_lav(&self) -> bool {
        self.body.len() == 1
    }
}

impl fmt::Display for Tgd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_atoms(f, &self.body)?;
        write!(f, " -> ")?;
        write_atoms(f, &self.head)
    }
}

/// Equality-generating dependency `body -> left = right`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Egd {
    pub body: Vec<Atom>,
    pub left: String,
    pub right: String,
}

impl Egd {
    pub fn new(body: Vec<Atom>, left: impl Into<String>, right: impl Into<String>) -> Self {
        Egd {
            body,
            left: left.into(),
            right: right.into(),
        }
    }
}

impl fmt::Display for Egd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_atoms(f, &self.body)?;
        write!(f, " -> {} = {}", self.left, self.right)
    }
}

/// One clause of a second-order dependency: relational body atoms,
/// optional term equalities, and a head whose arguments may apply
/// function symbols. No existential variables. Body arguments may be
/// compound (equality singularization produces congruence atoms over
/// terms), but every variable must be introduced at a plain variable
/// position of some body atom.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SoClause {
    pub body: Vec<Atom>,
    pub equalities: Vec<(Term, Term)>,
    pub head: Vec<Atom>,
}

impl SoClause {
    pub fn new(body: Vec<Atom>, equalities: Vec<(Term, Term)>, head: Vec<Atom>) -> Self {
        SoClause {
            body,
            equalities,
            head,
        }
    }

    pub fn body_vars(&self) -> Vec<String> {
        atoms_vars(&self.body)
    }
}

impl fmt::Display for SoClause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_atoms(f, &self.body)?;
        for (l, r) in &self.equalities {
            write!(f, " & {l} = {r}")?;
        }
        write!(f, " -> ")?;
        write_atoms(f, &self.head)
    }
}

fn write_atoms(f: &mut fmt::Formatter<'_>, atoms: &[Atom]) -> fmt::Result {
    for (i, a) in atoms.iter().enumerate() {
        if i > 0 {
            write!(f, " & ")?;
        }
        write!(f, "{a}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StConstraint {
    Tgd(Tgd),
    So(SoClause),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetConstraint {
    Tgd(Tgd),
    So(SoClause),
    Egd(Egd),
}

use crate::schema::Schema;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaMapping {
    pub source: Schema,
    pub target: Schema,
    /// Function symbols usable in second-order clauses, with arities.
    pub functions: IndexMap<String, usize>,
    pub st: Vec<StConstraint>,
    pub t: Vec<TargetConstraint>,
}

impl SchemaMapping {
    /// Builds and validates a mapping. Schemas must be disjoint; every
    /// constraint must respect relation sides, arities, and the rules for
    /// its kind.
    pub fn new(
        source: Schema,
        target: Schema,
        functions: IndexMap<String, usize>,
        st: Vec<StConstraint>,
        t: Vec<TargetConstraint>,
    ) -> Result<Self> {
        let m = SchemaMapping {
            source,
            target,
            functions,
            st,
            t,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if !self.source.is_disjoint_from(&self.target) {
            let shared: Vec<&str> = self
                .source
                .names()
                .filter(|n| self.target.contains(n))
                .collect();
            return Err(Error::Schema(format!(
                "source and target schemas share relations: {}",
                shared.join(", ")
            )));
        }
        for c in &self.st {
            match c {
                StConstraint::Tgd(tgd) => {
                    self.check_tgd(tgd, &self.source, &self.target, "st-tgd")?
                }
                StConstraint::So(cl) => {
                    self.check_clause(cl, &self.source, &self.target, "st-so")?
                }
            }
        }
        for c in &self.t {
            match c {
                TargetConstraint::Tgd(tgd) => {
                    self.check_tgd(tgd, &self.target, &self.target, "t-tgd")?
                }
                TargetConstraint::So(cl) => {
                    self.check_clause(cl, &self.target, &self.target, "t-so")?
                }
                TargetConstraint::Egd(egd) => self.check_egd(egd)?,
            }
        }
        Ok(())
    }

    fn check_atoms(&self, atoms: &[Atom], schema: &Schema, what: &str) -> Result<()> {
        for a in atoms {
            match schema.arity(&a.relation) {
                None => {
                    return Err(Error::Schema(format!(
                        "{what}: atom {a} uses relation {} outside its schema",
                        a.relation
                    )))
                }
                Some(n) if n != a.args.len() => {
                    return Err(Error::Schema(format!(
                        "{what}: atom {a} has {} arguments but {} has arity {n}",
                        a.args.len(),
                        a.relation
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    fn check_terms_functions(&self, term: &Term, what: &str) -> Result<()> {
        if let Term::App(f, args) = term {
            match self.functions.get(f) {
                None => {
                    return Err(Error::Schema(format!(
                        "{what}: undeclared function symbol {f}"
                    )))
                }
                Some(&n) if n != args.len() => {
                    return Err(Error::Schema(format!(
                        "{what}: function {f} applied to {} arguments but has arity {n}",
                        args.len()
                    )))
                }
                Some(_) => {}
            }
            for a in args {
                self.check_terms_functions(a, what)?;
            }
        }
        Ok(())
    }

    fn check_tgd(&self, tgd: &Tgd, body_schema: &Schema, head_schema: &Schema, what: &str) -> Result<()> {
        if tgd.body.is_empty() || tgd.head.is_empty() {
            return Err(Error::Schema(format!("{what}: empty body or head in {tgd}")));
        }
        self.check_atoms(&tgd.body, body_schema, what)?;
        self.check_atoms(&tgd.head, head_schema, what)?;
        for a in tgd.body.iter().chain(&tgd.head) {
            for t in &a.args {
                if !t.is_first_order() {
                    return Err(Error::Schema(format!(
                        "{what}: function application in first-order dependency {tgd}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_clause(
        &self,
        cl: &SoClause,
        body_schema: &Schema,
        head_schema: &Schema,
        what: &str,
    ) -> Result<()> {
        if cl.body.is_empty() || cl.head.is_empty() {
            return Err(Error::Schema(format!("{what}: empty body or head in {cl}")));
        }
        self.check_atoms(&cl.body, body_schema, what)?;
        self.check_atoms(&cl.head, head_schema, what)?;
        // Variables must be introduced at a plain variable position;
        // compound body arguments may only reuse them.
        let body_vars: BTreeSet<String> = cl
            .body
            .iter()
            .flat_map(|a| a.args.iter())
            .filter_map(|t| match t {
                Term::Var(v) => Some(v.clone()),
                _ => None,
            })
            .collect();
        for a in &cl.body {
            for t in &a.args {
                self.check_terms_functions(t, what)?;
                if let Term::App(_, _) = t {
                    let mut vars = Vec::new();
                    t.collect_vars(&mut vars);
                    if let Some(v) = vars.iter().find(|v| !body_vars.contains(*v)) {
                        return Err(Error::Schema(format!(
                            "{what}: variable {v} occurs only inside a compound body term in {cl}"
                        )));
                    }
                }
            }
        }
        for (l, r) in &cl.equalities {
            self.check_terms_functions(l, what)?;
            self.check_terms_functions(r, what)?;
            let mut vars = Vec::new();
            l.collect_vars(&mut vars);
            r.collect_vars(&mut vars);
            if let Some(v) = vars.iter().find(|v| !body_vars.contains(*v)) {
                return Err(Error::Schema(format!(
                    "{what}: equality variable {v} not bound by a relational atom in {cl}"
                )));
            }
        }
        for a in &cl.head {
            for t in &a.args {
                self.check_terms_functions(t, what)?;
                let mut vars = Vec::new();
                t.collect_vars(&mut vars);
                if let Some(v) = vars.iter().find(|v| !body_vars.contains(*v)) {
                    return Err(Error::Schema(format!(
                        "{what}: head variable {v} not bound by a relational atom in {cl}"
                    )));
                }
                // A functional head term without variables is a constant
                // in disguise and breaks the term-depth bound of the
                // skolem chase.
                if matches!(t, Term::App(_, _)) && vars.is_empty() {
                    return Err(Error::Schema(format!(
                        "{what}: head term {t} applies a function to constants only"
                    )));
                }
            }
        }
        Ok(())
    }

    fn check_egd(&self, egd: &Egd) -> Result<()> {
        if egd.body.is_empty() {
            return Err(Error::Schema(format!("t-egd: empty body in {egd}")));
        }
        self.check_atoms(&egd.body, &self.target, "t-egd")?;
        for a in &egd.body {
            for t in &a.args {
                if !t.is_first_order() {
                    return Err(Error::Schema(format!(
                        "t-egd: function application in {egd}"
                    )));
                }
            }
        }
        let body_vars: BTreeSet<String> = atoms_vars(&egd.body).into_iter().collect();
        for v in [&egd.left, &egd.right] {
            if !body_vars.contains(v) {
                return Err(Error::Schema(format!(
                    "t-egd: equated variable {v} does not occur in the body of {egd}"
                )));
            }
        }
        Ok(())
    }

    pub fn st_tgds(&self) -> impl Iterator<Item = &Tgd> {
        self.st.iter().filter_map(|c| match c {
            StConstraint::Tgd(t) => Some(t),
            StConstraint::So(_) => None,
        })
    }

    pub fn target_tgds(&self) -> impl Iterator<Item = &Tgd> {
        self.t.iter().filter_map(|c| match c {
            TargetConstraint::Tgd(t) => Some(t),
            _ => None,
        })
    }

    pub fn target_egds(&self) -> impl Iterator<Item = &Egd> {
        self.t.iter().filter_map(|c| match c {
            TargetConstraint::Egd(e) => Some(e),
            _ => None,
        })
    }

    pub fn is_first_order(&self) -> bool {
        self.st.iter().all(|c| matches!(c, StConstraint::Tgd(_)))
            && self
                .t
                .iter()
                .all(|c| !matches!(c, TargetConstraint::So(_)))
    }

    pub fn has_second_order(&self) -> bool {
        !self.is_first_order()
    }

    pub fn has_equalities(&self) -> bool {
        let st_eq = self.st.iter().any(|c| match c {
            StConstraint::So(cl) => !cl.equalities.is_empty(),
            StConstraint::Tgd(_) => false,
        });
        let t_eq = self.t.iter().any(|c| match c {
            TargetConstraint::So(cl) => !cl.equalities.is_empty(),
            TargetConstraint::Egd(_) => true,
            TargetConstraint::Tgd(_) => false,
        });
        st_eq || t_eq
    }

    /// Human-readable class of the st and target parts, e.g. `GAV+egd` for
    /// full st dependencies with target egds, or `GAV+GAV+egd` when GAV
    /// target tgds are present too. Full tgds count as GAV because they
    /// split into single-head form.
    pub fn class_label(&self) -> String {
        let st = if self.st.iter().any(|c| matches!(c, StConstraint::So(_))) {
            "SO"
        } else if self.st_tgds().all(Tgd::is_full) {
            "GAV"
        } else if self.st_tgds().all(Tgd::is_lav) {
            "LAV"
        } else {
            "GLAV"
        };
        let has_so = self.t.iter().any(|c| matches!(c, TargetConstraint::So(_)));
        let n_tgds = self.target_tgds().count();
        let n_egds = self.target_egds().count();
        let mut parts = vec![st.to_string()];
        if has_so {
            parts.push("SO".to_string());
        } else if n_tgds > 0 {
            if self.target_tgds().all(Tgd::is_full) {
                parts.push("GAV".to_string());
            } else {
                parts.push("GLAV".to_string());
            }
        }
        if n_egds > 0 {
            parts.push("egd".to_string());
        }
        parts.join("+")
    }
}

/// Splits a full tgd into one GAV tgd per head atom. Errors on
/// existential variables, since the split would change meaning.
pub fn split_full_to_gav(tgd: &Tgd) -> Result<Vec<Tgd>> {
    if !tgd.is_full() {
        return Err(Error::Class(format!(
            "cannot split non-full dependency {tgd} into GAV form"
        )));
    }
    Ok(tgd
        .head
        .iter()
        .map(|h| Tgd::new(tgd.body.clone(), vec![h.clone()]))
        .collect())
}
