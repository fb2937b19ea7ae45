use std::fmt::Write as _;

use crate::attack::attack_graph;
use crate::error::{CqaError, Result};
use crate::fd::{fd_of_query, VarSet};
use crate::graph::{elementary_cycles, reachable};
use crate::model::{Atom, Query, Var};

use super::saturate::is_saturated;

/// Variables of a query with an edge `x -> y` whenever the clutch of `x`
/// together with the consistent atoms determines `y` from `x`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkovGraph {
    vars: Vec<Var>,
    /// Atom positions of the clutch of each vertex.
    clutches: Vec<Vec<usize>>,
    adj: Vec<Vec<usize>>,
    query: Query,
}

fn in_clutch(a: &Atom, x: &Var) -> bool {
    let key = a.key_vars();
    !a.is_consistent() && key.len() == 1 && key.contains(x)
}

/// Inconsistent atoms whose key variables are exactly `{x}`.
pub fn clutch<'a>(q: &'a Query, x: &Var) -> Vec<&'a Atom> {
    q.atoms().iter().filter(|a| in_clutch(a, x)).collect()
}

pub fn markov_graph(q: &Query) -> Result<MarkovGraph> {
    if let Some(a) = q.atoms().iter().find(|a| !a.is_consistent() && !a.decl.is_simple_key()) {
        return Err(CqaError::Shape(format!("inconsistent atom {a} is not simple-key")));
    }
    let vars = q.vars_in_order();
    let mut clutches = Vec::with_capacity(vars.len());
    let mut adj = Vec::with_capacity(vars.len());
    for x in &vars {
        let members: Vec<usize> = q
            .atoms()
            .iter()
            .enumerate()
            .filter(|(_, a)| in_clutch(a, x))
            .map(|(i, _)| i)
            .collect();
        let fds = fd_of_query(
            members
                .iter()
                .map(|&i| &q.atoms()[i])
                .chain(q.consistent_atoms()),
        );
        let reach = fds.closure(&[x.clone()].into());
        adj.push(
            vars.iter()
                .enumerate()
                .filter(|(_, y)| *y != x && reach.contains(*y))
                .map(|(j, _)| j)
                .collect(),
        );
        clutches.push(members);
    }
    Ok(MarkovGraph {
        vars,
        clutches,
        adj,
        query: q.clone(),
    })
}

impl MarkovGraph {
    pub fn vertices(&self) -> &[Var] {
        &self.vars
    }

    pub fn index(&self, x: &Var) -> Option<usize> {
        self.vars.iter().position(|v| v == x)
    }

    pub fn clutch(&self, x: &Var) -> Vec<&Atom> {
        self.index(x)
            .map(|i| self.clutches[i].iter().map(|&a| &self.query.atoms()[a]).collect())
            .unwrap_or_default()
    }

    pub fn has_edge(&self, x: &Var, y: &Var) -> bool {
        match (self.index(x), self.index(y)) {
            (Some(i), Some(j)) => self.adj[i].contains(&j),
            _ => false,
        }
    }

    pub fn successors(&self, x: &Var) -> Vec<&Var> {
        self.index(x)
            .map(|i| self.adj[i].iter().map(|&j| &self.vars[j]).collect())
            .unwrap_or_default()
    }

    pub fn edges(&self) -> Vec<(&Var, &Var)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, out)| out.iter().map(move |&j| (&self.vars[i], &self.vars[j])))
            .collect()
    }

    /// True when the Markov graph has a path from `x` to `y` (possibly empty).
    pub fn path(&self, x: &Var, y: &Var) -> bool {
        match (self.index(x), self.index(y)) {
            (Some(i), Some(j)) => reachable(&self.adj, i, &vec![false; self.vars.len()])[j],
            _ => false,
        }
    }

    pub fn is_cycle(&self, c: &[Var]) -> bool {
        let distinct: VarSet = c.iter().cloned().collect();
        c.len() >= 2
            && distinct.len() == c.len()
            && (0..c.len()).all(|i| self.has_edge(&c[i], &c[(i + 1) % c.len()]))
    }

    /// Elementary cycles, each starting from its earliest variable.
    pub fn cycles(&self) -> Vec<Vec<Var>> {
        elementary_cycles(&self.adj)
            .into_iter()
            .map(|c| c.into_iter().map(|i| self.vars[i].clone()).collect())
            .collect()
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph markov {\n");
        for (i, v) in self.vars.iter().enumerate() {
            let clutch: Vec<&str> = self.clutches[i]
                .iter()
                .map(|&a| self.query.atoms()[a].relation())
                .collect();
            let _ = writeln!(s, "  \"{v}\" [label=\"{v} {{{}}}\"];", clutch.join(", "));
        }
        for (x, y) in self.edges() {
            let _ = writeln!(s, "  \"{x}\" -> \"{y}\";");
        }
        s.push('}');
        s.push('\n');
        s
    }
}

/// Checks the premier condition: some variable `x` is the sole key
/// variable of an inconsistent atom in an initial strong component of the
/// attack graph, reaches a cycle variable `y` in the Markov graph, and is
/// determined by `y`.
pub fn is_premier(q: &Query, m: &MarkovGraph, c: &[Var]) -> bool {
    let g = attack_graph(q);
    let comps = g.strong_components();
    let fds = fd_of_query(q.atoms());
    let anchors: VarSet = comps
        .initial_components()
        .flatten()
        .map(|&i| &q.atoms()[i])
        .filter(|a| !a.is_consistent() && a.key_vars().len() == 1)
        .flat_map(|a| a.key_vars())
        .collect();
    anchors.iter().any(|x| {
        c.iter().any(|y| m.path(x, y) && fds.closure(&[y.clone()].into()).contains(x))
    })
}

/// A pair `(i, j)` with `x_i` a variable of the clutch of `x_j`, where
/// `x_i` is neither `x_j` nor its successor on the cycle.
pub fn shortcut(m: &MarkovGraph, c: &[Var]) -> Option<(usize, usize)> {
    let k = c.len();
    let clutch_vars: Vec<VarSet> = c
        .iter()
        .map(|x| m.clutch(x).iter().flat_map(|a| a.vars()).collect())
        .collect();
    (0..k).find_map(|j| {
        (0..k)
            .find(|&i| i != j && i != (j + 1) % k && clutch_vars[j].contains(&c[i]))
            .map(|i| (i, j))
    })
}

/// Replaces `c` by `x_j, x_i, x_{i+1}, .., x_{j-1}` for the shortcut `(i, j)`.
fn contract(c: &[Var], i: usize, j: usize) -> Vec<Var> {
    let k = c.len();
    let mut out = vec![c[j].clone()];
    let mut p = i;
    while p != j {
        out.push(c[p].clone());
        p = (p + 1) % k;
    }
    out
}

fn rotate_to_first(m: &MarkovGraph, mut c: Vec<Var>) -> Vec<Var> {
    let start = (0..c.len())
        .min_by_key(|&p| m.index(&c[p]))
        .unwrap_or(0);
    c.rotate_left(start);
    c
}

/// Shortest premier Markov cycle whose variables all have a nonempty
/// clutch and that has no shortcut, starting at its earliest variable.
pub fn find_premier_cycle(q: &Query) -> Result<Vec<Var>> {
    if let Some(a) = q
        .atoms()
        .iter()
        .find(|a| !a.is_consistent() && (!a.decl.is_simple_key() || a.key_vars().is_empty()))
    {
        return Err(CqaError::Precondition(format!(
            "inconsistent atom {a} needs a single key variable"
        )));
    }
    let g = attack_graph(q);
    if g.has_strong_cycle() {
        return Err(CqaError::Precondition("attack graph has a strong cycle".into()));
    }
    if !is_saturated(q) {
        return Err(CqaError::Precondition("query is not saturated".into()));
    }
    if !g.strong_components().initial_components().any(|c| c.len() >= 2) {
        return Err(CqaError::Precondition(
            "no initial strong component with two or more atoms".into(),
        ));
    }
    let m = markov_graph(q)?;
    let mut candidates: Vec<Vec<Var>> = m
        .cycles()
        .into_iter()
        .filter(|c| c.iter().all(|x| !m.clutch(x).is_empty()))
        .collect();
    candidates.sort_by_key(|c| (c.len(), c.iter().map(|x| m.index(x)).collect::<Vec<_>>()));
    for c in candidates {
        if !is_premier(q, &m, &c) {
            continue;
        }
        let mut c = c;
        while let Some((i, j)) = shortcut(&m, &c) {
            c = contract(&c, i, j);
        }
        if is_premier(q, &m, &c) {
            return Ok(rotate_to_first(&m, c));
        }
    }
    Err(CqaError::Precondition("no premier Markov cycle with nonempty clutches".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_query;
    use crate::ptime::saturate::saturate;
    use crate::Database;

    fn v(n: &str) -> Var {
        Var::new(n)
    }

    fn fig2() -> Query {
        parse_query("R(x | y, v)\nS(y | x)\nconsistent V1(v | w)\nW(w | v)\nconsistent V2(w | y)")
            .unwrap()
    }

    fn succ(m: &MarkovGraph, x: &str) -> Vec<String> {
        let mut s: Vec<String> = m.successors(&v(x)).iter().map(|v| v.to_string()).collect();
        s.sort();
        s
    }

    #[test]
    fn fig2_edges() {
        let m = markov_graph(&fig2()).unwrap();
        assert_eq!(succ(&m, "x"), ["v", "w", "y"]);
        assert_eq!(succ(&m, "y"), ["x"]);
        assert_eq!(succ(&m, "v"), ["w", "y"]);
        assert_eq!(succ(&m, "w"), ["v", "y"]);
    }

    #[test]
    fn unsaturated_example_is_a_path() {
        let q = parse_query("R(x | y)\nS1(y | z)\nS2(y | z)\nconsistent T0(x, z | w)\nU(w | x)")
            .unwrap();
        let m = markov_graph(&q).unwrap();
        let mut e: Vec<String> = m.edges().iter().map(|(a, b)| format!("{a}{b}")).collect();
        e.sort();
        assert_eq!(e, ["wx", "xy", "yz"]);
        assert!(m.cycles().is_empty());
        assert!(matches!(find_premier_cycle(&q), Err(CqaError::Precondition(_))));

        let (q2, _) = saturate(&q, &Database::for_query(&q)).unwrap();
        assert_eq!(find_premier_cycle(&q2).unwrap(), [v("x"), v("w")]);
    }

    #[test]
    fn triangle_cycle() {
        let m = markov_graph(&parse_query("R(x|y)\nS(y|z)\nV(z|x)").unwrap()).unwrap();
        assert_eq!(m.cycles(), [vec![v("x"), v("y"), v("z")]]);
    }

    #[test]
    fn two_cycle_premier() {
        let q = parse_query("R(x0 | x1)\nS(x1 | x0)").unwrap();
        assert_eq!(find_premier_cycle(&q).unwrap(), [v("x0"), v("x1")]);
        let m = markov_graph(&q).unwrap();
        assert!(is_premier(&q, &m, &[v("x0"), v("x1")]));
        assert!(shortcut(&m, &[v("x0"), v("x1")]).is_none());
    }

    #[test]
    fn fig2_cycles_premier() {
        let q = fig2();
        let m = markov_graph(&q).unwrap();
        for c in m.cycles() {
            assert!(m.is_cycle(&c));
            assert!(is_premier(&q, &m, &c), "{c:?}");
        }
    }

    #[test]
    fn shortcut_contraction() {
        // Clutch of x mentions z, so x -> y -> z -> x has the shortcut x -> z.
        let q = parse_query("R(x | y, z)\nS(y | z)\nV(z | x)").unwrap();
        let m = markov_graph(&q).unwrap();
        let long = [v("x"), v("y"), v("z")];
        assert_eq!(shortcut(&m, &long), Some((2, 0)));
        assert_eq!(contract(&long, 2, 0), [v("x"), v("z")]);
        let c = find_premier_cycle(&q).unwrap();
        assert!(shortcut(&m, &c).is_none());
        assert!(is_premier(&q, &m, &c));
    }

    #[test]
    fn dot_lists_edges() {
        let dot = markov_graph(&parse_query("R(x|y)\nS(y|x)").unwrap()).unwrap().to_dot();
        assert!(dot.starts_with("digraph markov {"));
        assert!(dot.contains("\"x\" -> \"y\";"));
        assert!(dot.contains("\"y\" [label=\"y {S}\"];"));
    }
}
