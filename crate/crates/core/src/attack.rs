//! Attack graphs.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{CqaError, Result};
use crate::fd::{check_var, fd_of_query, k_closure_at, VarSet};
use crate::graph::{component_ids, tarjan_scc};
use crate::model::{Atom, Mode, Query, RelationDecl, Term, Var};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Weak,
    Strong,
}

/// `F_0 -z_1-> F_1 ... -z_n-> F_n`, atoms given by query position.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Witness {
    pub start: usize,
    pub steps: Vec<(Var, usize)>,
}

impl Witness {
    pub fn end(&self) -> usize {
        self.steps.last().map_or(self.start, |s| s.1)
    }

    /// Checks every step against `K(F_0, q)`.
    pub fn is_valid(&self, q: &Query) -> bool {
        let Some(k) = q.atoms().get(self.start).map(|_| k_closure_at(q, self.start, false)) else {
            return false;
        };
        let mut prev = self.start;
        for (z, next) in &self.steps {
            let (Some(a), Some(b)) = (q.atoms().get(prev), q.atoms().get(*next)) else {
                return false;
            };
            if k.contains(z) || !a.vars().contains(z) || !b.vars().contains(z) {
                return false;
            }
            prev = *next;
        }
        true
    }

    pub fn display(&self, q: &Query) -> String {
        let mut s = q.atoms()[self.start].relation().to_string();
        for (z, i) in &self.steps {
            let _ = write!(s, " -{z}- {}", q.atoms()[*i].relation());
        }
        s
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AttackEdge {
    pub from: usize,
    pub to: usize,
    pub strength: Strength,
    pub witness: Witness,
}

#[derive(Clone, Debug)]
pub struct AttackGraph {
    query: Query,
    edges: Vec<AttackEdge>,
    adj: Vec<Vec<usize>>,
}

/// Breadth-first search from atom `i` over atoms sharing a variable outside `k`.
/// Returns parent links `(var, predecessor)` per reached atom.
fn search(q: &Query, i: usize, k: &VarSet) -> Vec<Option<(Var, usize)>> {
    let atoms = q.atoms();
    let vars: Vec<VarSet> = atoms.iter().map(Atom::vars).collect();
    let mut parent: Vec<Option<(Var, usize)>> = vec![None; atoms.len()];
    let mut seen = vec![false; atoms.len()];
    seen[i] = true;
    let mut queue = VecDeque::from([i]);
    while let Some(a) = queue.pop_front() {
        for b in 0..atoms.len() {
            if seen[b] {
                continue;
            }
            if let Some(z) = vars[a].intersection(&vars[b]).find(|z| !k.contains(*z)) {
                seen[b] = true;
                parent[b] = Some((z.clone(), a));
                queue.push_back(b);
            }
        }
    }
    parent
}

fn witness_to(parent: &[Option<(Var, usize)>], start: usize, end: usize) -> Option<Witness> {
    let mut steps = Vec::new();
    let mut cur = end;
    while cur != start {
        let (z, prev) = parent[cur].clone()?;
        steps.push((z, cur));
        cur = prev;
    }
    steps.reverse();
    Some(Witness { start, steps })
}

/// A witness for `F` attacking `G`, if the attack exists.
pub fn attacks_atom(q: &Query, f: &Atom, g: &Atom) -> Result<Option<Witness>> {
    let i = q.index_of(f)?;
    let j = q.index_of(g)?;
    if i == j {
        return Err(CqaError::Precondition(format!(
            "an atom is never said to attack itself ({f})"
        )));
    }
    let k = k_closure_at(q, i, false);
    Ok(witness_to(&search(q, i, &k), i, j))
}

/// Whether `F` attacks the variable `z`, decided by adding a fresh atom
/// `N(z)` of signature [1,1] and testing the atom attack.
pub fn attacks_variable(q: &Query, f: &Atom, z: &Var) -> Result<bool> {
    q.index_of(f)?;
    check_var(q, z)?;
    let mut name = String::from("$N");
    while q.atom(&name).is_some() {
        name.push('$');
    }
    let n = Atom {
        decl: RelationDecl::new(name, 1, 1, Mode::Inconsistent),
        terms: vec![Term::Var(z.clone())],
    };
    let mut atoms = q.atoms().to_vec();
    atoms.push(n.clone());
    let extended = Query::new(atoms)?;
    Ok(attacks_atom(&extended, f, &n)?.is_some())
}

/// Every variable attacked by atom `i`.
pub fn attacked_variables(q: &Query, i: usize) -> VarSet {
    let k = k_closure_at(q, i, false);
    let parent = search(q, i, &k);
    let atoms = q.atoms();
    (0..atoms.len())
        .filter(|&j| j == i || parent[j].is_some())
        .flat_map(|j| atoms[j].vars())
        .filter(|z| !k.contains(z))
        .collect()
}

pub fn attack_graph(q: &Query) -> AttackGraph {
    let fds = fd_of_query(q.atoms());
    let n = q.len();
    let keys: Vec<VarSet> = q.atoms().iter().map(Atom::key_vars).collect();
    let key_closures: Vec<VarSet> = keys.iter().map(|k| fds.closure(k)).collect();
    let mut edges = Vec::new();
    for (i, closure) in key_closures.iter().enumerate() {
        let k = k_closure_at(q, i, false);
        let parent = search(q, i, &k);
        for (j, key) in keys.iter().enumerate() {
            if j == i {
                continue;
            }
            if let Some(witness) = witness_to(&parent, i, j) {
                let strength = if key.is_subset(closure) {
                    Strength::Weak
                } else {
                    Strength::Strong
                };
                edges.push(AttackEdge {
                    from: i,
                    to: j,
                    strength,
                    witness,
                });
            }
        }
    }
    let mut adj = vec![Vec::new(); n];
    for e in &edges {
        adj[e.from].push(e.to);
    }
    AttackGraph {
        query: q.clone(),
        edges,
        adj,
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum CycleStatus {
    Acyclic,
    WeakCycle(usize, usize),
    StrongCycle(usize, usize),
}

/// Strong components of the attack graph with their predecessor relation.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StrongComponentSet {
    /// Components ordered by their least atom position.
    pub components: Vec<Vec<usize>>,
    pub predecessors: Vec<BTreeSet<usize>>,
    pub initial: Vec<bool>,
}

impl StrongComponentSet {
    pub fn initial_components(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.components
            .iter()
            .zip(&self.initial)
            .filter(|(_, init)| **init)
            .map(|(c, _)| c)
    }

    pub fn component_of(&self, atom: usize) -> Option<usize> {
        self.components.iter().position(|c| c.contains(&atom))
    }
}

impl AttackGraph {
    pub fn query(&self) -> &Query {
        &self.query
    }

    pub fn edges(&self) -> &[AttackEdge] {
        &self.edges
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&AttackEdge> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    pub fn attacks(&self, from: usize, to: usize) -> bool {
        self.adj[from].contains(&to)
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn in_degree(&self, j: usize) -> usize {
        self.edges.iter().filter(|e| e.to == j).count()
    }

    /// Atoms without incoming attacks, in query order.
    pub fn unattacked(&self) -> Vec<usize> {
        (0..self.query.len())
            .filter(|&j| self.in_degree(j) == 0)
            .collect()
    }

    pub fn is_acyclic(&self) -> bool {
        self.cycle_status() == CycleStatus::Acyclic
    }

    /// Decided from cycles of length two.
    pub fn cycle_status(&self) -> CycleStatus {
        let n = self.query.len();
        let mut weak = None;
        for i in 0..n {
            for j in i + 1..n {
                let (Some(a), Some(b)) = (self.edge(i, j), self.edge(j, i)) else {
                    continue;
                };
                if a.strength == Strength::Strong || b.strength == Strength::Strong {
                    return CycleStatus::StrongCycle(i, j);
                }
                weak.get_or_insert((i, j));
            }
        }
        match weak {
            Some((i, j)) => CycleStatus::WeakCycle(i, j),
            None => CycleStatus::Acyclic,
        }
    }

    pub fn has_strong_cycle(&self) -> bool {
        matches!(self.cycle_status(), CycleStatus::StrongCycle(..))
    }

    /// Cycle detection from strong components, independent of the
    /// two-cycle shortcut: `(cyclic, has_strong_cycle)`.
    pub fn cycles_by_components(&self) -> (bool, bool) {
        let comps = tarjan_scc(&self.adj);
        let id = component_ids(self.query.len(), &comps);
        let cyclic = comps.iter().any(|c| c.len() > 1);
        let strong = self
            .edges
            .iter()
            .any(|e| e.strength == Strength::Strong && id[e.from] == id[e.to]);
        (cyclic, strong)
    }

    /// A topological order of the atoms, if the graph is acyclic.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.query.len();
        let mut indeg: Vec<usize> = (0..n).map(|j| self.in_degree(j)).collect();
        let mut order = Vec::with_capacity(n);
        let mut done = vec![false; n];
        while order.len() < n {
            let next = (0..n).find(|&j| !done[j] && indeg[j] == 0)?;
            done[next] = true;
            order.push(next);
            for &s in &self.adj[next] {
                indeg[s] -= 1;
            }
        }
        Some(order)
    }

    pub fn strong_components(&self) -> StrongComponentSet {
        let n = self.query.len();
        let mut components = tarjan_scc(&self.adj);
        components.sort_by_key(|c| c[0]);
        let id = component_ids(n, &components);
        let mut predecessors = vec![BTreeSet::new(); components.len()];
        for e in &self.edges {
            if id[e.from] != id[e.to] {
                predecessors[id[e.to]].insert(id[e.from]);
            }
        }
        let initial = predecessors.iter().map(BTreeSet::is_empty).collect();
        StrongComponentSet {
            components,
            predecessors,
            initial,
        }
    }

    /// DOT rendering: solid edges are strong, dashed edges weak.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph attack {\n");
        for (i, a) in self.query.atoms().iter().enumerate() {
            let _ = writeln!(s, "  n{i} [label=\"{}\"];", a.to_string().replace('"', "\\\""));
        }
        for e in &self.edges {
            let (style, label) = match e.strength {
                Strength::Strong => ("solid", "strong"),
                Strength::Weak => ("dashed", "weak"),
            };
            let _ = writeln!(s, "  n{} -> n{} [style={style}, label=\"{label}\"];", e.from, e.to);
        }
        s.push_str("}\n");
        s
    }
}

pub fn cycle_status(g: &AttackGraph) -> CycleStatus {
    g.cycle_status()
}

pub fn initial_strong_components(g: &AttackGraph) -> StrongComponentSet {
    g.strong_components()
}
