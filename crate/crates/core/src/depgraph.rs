//! Dependency graph over schema positions: weak acyclicity and ranks.
//!
//! Nodes are positions (relation, attribute index). A first-order tgd
//! adds, for each universal variable that survives into the head, normal
//! edges from its body positions to its head positions and special edges
//! from its body positions to every position holding an existential
//! variable. A second-order clause adds a normal edge where a body
//! variable reappears directly in the head and a special edge where it
//! reappears inside a compound term.
//!
//! A constraint set is weakly acyclic when no cycle passes through a
//! special edge; the rank of a position is then the maximum number of
//! special edges on any incoming path, and the rank of the set is the
//! maximum over positions.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::mapping::{SchemaMapping, SoClause, StConstraint, TargetConstraint, Tgd};
use crate::schema::Schema;
use crate::term::{Atom, Term};

/// A relation attribute position, 0-based.
pub type Position = (String, usize);

#[derive(Debug, Clone)]
pub struct AcyclicityReport {
    pub weakly_acyclic: bool,
    /// `None` when not weakly acyclic.
    pub rank: Option<usize>,
    /// Per-position ranks; empty when not weakly acyclic.
    pub position_ranks: BTreeMap<Position, usize>,
    pub normal_edges: BTreeSet<(Position, Position)>,
    pub special_edges: BTreeSet<(Position, Position)>,
    /// Maximum nesting depth of a head term across the constraints.
    pub max_head_term_depth: usize,
}

/// A dependency that contributes edges: a first-order tgd or one clause
/// of a second-order dependency.
#[derive(Debug, Clone, Copy)]
pub enum TgdLike<'a> {
    Fo(&'a Tgd),
    So(&'a SoClause),
}

/// Positions of each variable across a list of atoms.
fn var_positions(atoms: &[Atom]) -> BTreeMap<String, BTreeSet<Position>> {
    let mut out: BTreeMap<String, BTreeSet<Position>> = BTreeMap::new();
    for atom in atoms {
        for (i, t) in atom.args.iter().enumerate() {
            if let Term::Var(v) = t {
                out.entry(v.clone())
                    .or_default()
                    .insert((atom.relation.clone(), i));
            }
        }
    }
    out
}

/// Like [`var_positions`], but a variable nested inside a compound
/// argument also occupies that position. Clause bodies may carry
/// compound arguments after equality singularization; counting their
/// variables keeps the edge set an over-approximation, which is the safe
/// direction for acyclicity and ranks.
fn var_positions_nested(atoms: &[Atom]) -> BTreeMap<String, BTreeSet<Position>> {
    let mut out: BTreeMap<String, BTreeSet<Position>> = BTreeMap::new();
    for atom in atoms {
        for (i, t) in atom.args.iter().enumerate() {
            let mut vars = Vec::new();
            t.collect_vars(&mut vars);
            for v in vars {
                out.entry(v)
                    .or_default()
                    .insert((atom.relation.clone(), i));
            }
        }
    }
    out
}

fn fo_edges(
    tgd: &Tgd,
    normal: &mut BTreeSet<(Position, Position)>,
    special: &mut BTreeSet<(Position, Position)>,
) {
    let body_pos = var_positions(&tgd.body);
    let head_pos = var_positions(&tgd.head);
    let existentials: BTreeSet<&String> = head_pos
        .keys()
        .filter(|v| !body_pos.contains_key(*v))
        .collect();
    let existential_positions: BTreeSet<&Position> = existentials
        .iter()
        .flat_map(|v| head_pos[*v].iter())
        .collect();
    for (var, from_positions) in &body_pos {
        let Some(to_positions) = head_pos.get(var) else {
            continue; // variable does not survive into the head
        };
        for from in from_positions {
            for to in to_positions {
                normal.insert((from.clone(), to.clone()));
            }
            for to in &existential_positions {
                special.insert((from.clone(), (*to).clone()));
            }
        }
    }
}

fn so_edges(
    cl: &SoClause,
    normal: &mut BTreeSet<(Position, Position)>,
    special: &mut BTreeSet<(Position, Position)>,
) {
    let body_pos = var_positions_nested(&cl.body);
    for (var, from_positions) in &body_pos {
        for atom in &cl.head {
            for (j, t) in atom.args.iter().enumerate() {
                let to = (atom.relation.clone(), j);
                match t {
                    Term::Var(v) if v == var => {
                        for from in from_positions {
                            normal.insert((from.clone(), to.clone()));
                        }
                    }
                    Term::App(_, _) if t.mentions_var(var) => {
                        for from in from_positions {
                            special.insert((from.clone(), to.clone()));
                        }
                    }
                    _ => {}
                }
            }
        }
    }
}

/// Analyzes a set of dependencies over the positions of `schema`.
pub fn analyze_dependencies<'a>(
    schema: &Schema,
    constraints: impl IntoIterator<Item = TgdLike<'a>>,
) -> AcyclicityReport {
    let mut normal = BTreeSet::new();
    let mut special = BTreeSet::new();
    let mut max_depth = 0;
    for c in constraints {
        match c {
            TgdLike::Fo(tgd) => fo_edges(tgd, &mut normal, &mut special),
            TgdLike::So(cl) => {
                so_edges(cl, &mut normal, &mut special);
                for atom in &cl.head {
                    for t in &atom.args {
                        max_depth = max_depth.max(t.depth());
                    }
                }
            }
        }
    }

    let mut graph: DiGraph<Position, bool> = DiGraph::new();
    let mut nodes: BTreeMap<Position, NodeIndex> = BTreeMap::new();
    for (rel, arity) in schema.iter() {
        for i in 0..arity {
            let pos = (rel.to_string(), i);
            let idx = graph.add_node(pos.clone());
            nodes.insert(pos, idx);
        }
    }
    // Edges over relations outside the schema would indicate an
    // unvalidated constraint set; positions are created on demand so the
    // analysis stays total.
    let node_of = |graph: &mut DiGraph<Position, bool>,
                   nodes: &mut BTreeMap<Position, NodeIndex>,
                   pos: &Position| {
        *nodes
            .entry(pos.clone())
            .or_insert_with(|| graph.add_node(pos.clone()))
    };
    for (from, to) in &normal {
        let f = node_of(&mut graph, &mut nodes, from);
        let t = node_of(&mut graph, &mut nodes, to);
        graph.add_edge(f, t, false);
    }
    for (from, to) in &special {
        let f = node_of(&mut graph, &mut nodes, from);
        let t = node_of(&mut graph, &mut nodes, to);
        graph.add_edge(f, t, true);
    }

    // Strongly connected components in reverse topological order.
    let sccs = tarjan_scc(&graph);
    let mut scc_of = vec![usize::MAX; graph.node_count()];
    for (i, scc) in sccs.iter().enumerate() {
        for &n in scc {
            scc_of[n.index()] = i;
        }
    }
    let weakly_acyclic = graph
        .edge_indices()
        .all(|e| {
            let (u, v) = graph.edge_endpoints(e).expect("edge exists");
            !graph[e] || scc_of[u.index()] != scc_of[v.index()]
        });

    let (rank, position_ranks) = if weakly_acyclic {
        // Process SCCs in topological order; every edge within an SCC is
        // normal, so the rank is constant on each SCC.
        let mut scc_rank = vec![0usize; sccs.len()];
        for i in (0..sccs.len()).rev() {
            for &n in &sccs[i] {
                for e in graph.edges(n) {
                    let target_scc = scc_of[petgraph::visit::EdgeRef::target(&e).index()];
                    if target_scc != i {
                        let candidate = scc_rank[i] + usize::from(*e.weight());
                        if candidate > scc_rank[target_scc] {
                            scc_rank[target_scc] = candidate;
                        }
                    }
                }
            }
        }
        let mut ranks = BTreeMap::new();
        for (pos, idx) in &nodes {
            ranks.insert(pos.clone(), scc_rank[scc_of[idx.index()]]);
        }
        let overall = ranks.values().copied().max().unwrap_or(0);
        (Some(overall), ranks)
    } else {
        (None, BTreeMap::new())
    };

    AcyclicityReport {
        weakly_acyclic,
        rank,
        position_ranks,
        normal_edges: normal,
        special_edges: special,
        max_head_term_depth: max_depth,
    }
}

/// Dependency views of every tgd and second-order clause in a mapping,
/// source-to-target and target side together.
pub fn mapping_dependencies(m: &SchemaMapping) -> Vec<TgdLike<'_>> {
    let mut out = Vec::new();
    for c in &m.st {
        match c {
            StConstraint::Tgd(t) => out.push(TgdLike::Fo(t)),
            StConstraint::So(cl) => out.push(TgdLike::So(cl)),
        }
    }
    for c in &m.t {
        match c {
            TargetConstraint::Tgd(t) => out.push(TgdLike::Fo(t)),
            TargetConstraint::So(cl) => out.push(TgdLike::So(cl)),
            TargetConstraint::Egd(_) => {}
        }
    }
    out
}

/// Analyzes the combined source-to-target and target dependencies of a
/// mapping. Source-to-target edges cannot close a cycle (they leave the
/// source side and never return), so the weak-acyclicity verdict agrees
/// with analyzing the target set alone, while ranks account for the
/// depth already introduced by the source-to-target constraints.
pub fn analyze_mapping(m: &SchemaMapping) -> AcyclicityReport {
    let schema = m
        .source
        .union(&m.target)
        .expect("mapping schemas are disjoint");
    analyze_dependencies(&schema, mapping_dependencies(m))
}

/// Analyzes the target-side dependencies only: the precondition the
/// chase needs.
pub fn analyze_target(m: &SchemaMapping) -> AcyclicityReport {
    let deps = m.t.iter().filter_map(|c| match c {
        TargetConstraint::Tgd(t) => Some(TgdLike::Fo(t)),
        TargetConstraint::So(cl) => Some(TgdLike::So(cl)),
        TargetConstraint::Egd(_) => None,
    });
    analyze_dependencies(&m.target, deps)
}
