//! Dissolving a Markov cycle: the clutches along the cycle are replaced by
//! one inconsistent atom `T(u | x0 .. xk-1, y..)` and consistent atoms
//! `Ui(xi | u)`, at the query level and at the database level.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::fresh::{Namer, ValueSupply};
use super::markov::markov_graph;
use crate::error::{CqaError, Result};
use crate::eval::embeddings;
use crate::fd::VarSet;
use crate::graph::{component_ids, reachable, tarjan_scc};
use crate::model::{Atom, Database, Mode, Query, RelationDecl, Term, Valuation, Value, Var};

/// Query-level result of dissolving a cycle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Resolved {
    pub query: Query,
    pub cycle: Vec<Var>,
    /// Positions in the original query of the atoms that were replaced.
    pub replaced: Vec<usize>,
    /// Variables of each clutch along the cycle.
    pub clutch_vars: Vec<VarSet>,
    pub t: Atom,
    pub u: Vec<Atom>,
    pub u_var: Var,
    /// Replaced variables outside the cycle, in first-occurrence order.
    pub rest: Vec<Var>,
}

pub fn resolve(q: &Query, cycle: &[Var]) -> Result<Resolved> {
    let m = markov_graph(q)?;
    if !m.is_cycle(cycle) {
        return Err(CqaError::Precondition(format!(
            "({}) is not an elementary Markov cycle",
            cycle.iter().map(Var::name).collect::<Vec<_>>().join(", ")
        )));
    }
    let clutch_vars: Vec<VarSet> = cycle
        .iter()
        .map(|x| m.clutch(x).iter().flat_map(|a| a.vars()).chain([x.clone()]).collect())
        .collect();
    let replaced: Vec<usize> = q
        .atoms()
        .iter()
        .enumerate()
        .filter(|(_, a)| {
            !a.is_consistent() && a.key_vars().len() == 1 && cycle.iter().any(|x| a.key_vars().contains(x))
        })
        .map(|(i, _)| i)
        .collect();
    let mut rest: Vec<Var> = Vec::new();
    for &i in &replaced {
        for v in q.atoms()[i].vars_in_order() {
            if !cycle.contains(&v) && !rest.contains(&v) {
                rest.push(v);
            }
        }
    }
    let mut namer = Namer::for_query(q);
    let u_var = namer.var("u");
    let k = cycle.len();
    let t_terms: Vec<Term> = [u_var.clone()]
        .iter()
        .chain(cycle)
        .chain(&rest)
        .cloned()
        .map(Term::Var)
        .collect();
    let t = Atom {
        decl: RelationDecl::new(namer.relation("T"), t_terms.len(), 1, Mode::Inconsistent),
        terms: t_terms,
    };
    let u: Vec<Atom> = (0..k)
        .map(|i| Atom {
            decl: RelationDecl::new(namer.relation(&format!("U{i}")), 2, 1, Mode::Consistent),
            terms: vec![Term::Var(cycle[i].clone()), Term::Var(u_var.clone())],
        })
        .collect();
    let mut atoms: Vec<Atom> = q
        .atoms()
        .iter()
        .enumerate()
        .filter(|(i, _)| !replaced.contains(i))
        .map(|(_, a)| a.clone())
        .collect();
    atoms.push(t.clone());
    atoms.extend(u.iter().cloned());
    Ok(Resolved {
        query: Query::from_atoms_unchecked(atoms),
        cycle: cycle.to_vec(),
        replaced,
        clutch_vars,
        t,
        u,
        u_var,
        rest,
    })
}

/// `(q \ q0) ∪ {T(u | x0..xk-1, y..), Ui(xi | u)}` where `q0` is the union
/// of the clutches of the cycle variables.
pub fn dissolve_query(q: &Query, cycle: &[Var]) -> Result<Query> {
    resolve(q, cycle).map(|r| r.query)
}

/// How one strong component of the cycle graph of a database was handled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// Emitted with the given fresh key constant.
    Encoded(Value),
    /// Has an elementary cycle longer than the query cycle.
    LongCycle,
    /// Some cycle's realizations disagree on a shared variable.
    Unsupported(Vec<Value>),
}

/// A k-partite graph over the cycle-variable values of a database: an
/// edge `a -> b` for `a` at `x_i` and `b` at `x_{i+1}` realized by some
/// embedding, labelled with the clutch restrictions of those embeddings.
#[derive(Clone, Debug)]
pub struct DissolutionPlan {
    pub resolved: Resolved,
    pub vertices: Vec<(usize, Value)>,
    pub edges: BTreeMap<(usize, usize), BTreeSet<Valuation>>,
    pub components: Vec<Vec<usize>>,
    pub verdicts: Vec<Verdict>,
    pub database: Database,
}

impl fmt::Display for DissolutionPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (comp, verdict) in self.components.iter().zip(&self.verdicts) {
            let vs: Vec<String> = comp.iter().map(|&v| self.vertices[v].1.to_string()).collect();
            let what = match verdict {
                Verdict::Encoded(d) => format!("encoded as {d}"),
                Verdict::LongCycle => "deleted: cycle longer than the query cycle".to_string(),
                Verdict::Unsupported(c) => {
                    let c: Vec<String> = c.iter().map(Value::to_string).collect();
                    format!("deleted: cycle {} does not support the query", c.join(", "))
                }
            };
            writeln!(f, "{{{}}} {what}", vs.join(", "))?;
        }
        Ok(())
    }
}

struct CycleGraph {
    k: usize,
    adj: Vec<Vec<usize>>,
    part: Vec<usize>,
}

impl CycleGraph {
    /// Paths `a0 .. a_{k-1}, end` following one edge per part.
    fn k_paths(&self, a0: usize, mut visit: impl FnMut(&[usize], usize)) {
        fn go(g: &CycleGraph, path: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize], usize)) {
            let last = *path.last().expect("nonempty");
            for &b in &g.adj[last] {
                if path.len() == g.k {
                    visit(path, b);
                } else {
                    path.push(b);
                    go(g, path, visit);
                    path.pop();
                }
            }
        }
        let mut path = vec![a0];
        go(self, &mut path, &mut visit);
    }

    /// True when the component through `a0` has an elementary cycle longer than k.
    fn has_long_cycle(&self, a0: usize) -> bool {
        let mut found = false;
        self.k_paths(a0, |path, end| {
            if found || end == a0 {
                return;
            }
            let mut blocked = vec![false; self.adj.len()];
            for &v in &path[1..] {
                blocked[v] = true;
            }
            found = reachable(&self.adj, end, &blocked)[a0];
        });
        found
    }
}

/// Builds the cycle graph of `db` and decides each strong component.
pub fn plan_dissolution(q: &Query, cycle: &[Var], db: &Database) -> Result<DissolutionPlan> {
    let resolved = resolve(q, cycle)?;
    let k = cycle.len();
    let thetas = embeddings(q, db);

    let mut index: BTreeMap<(usize, Value), usize> = BTreeMap::new();
    let mut vertices: Vec<(usize, Value)> = Vec::new();
    let mut vertex = |i: usize, a: &Value| -> usize {
        *index.entry((i, a.clone())).or_insert_with(|| {
            vertices.push((i, a.clone()));
            vertices.len() - 1
        })
    };
    let mut edges: BTreeMap<(usize, usize), BTreeSet<Valuation>> = BTreeMap::new();
    for theta in &thetas {
        for i in 0..k {
            let a = vertex(i, theta.get(&cycle[i]).expect("bound"));
            let b = vertex((i + 1) % k, theta.get(&cycle[(i + 1) % k]).expect("bound"));
            edges
                .entry((a, b))
                .or_default()
                .insert(theta.restrict(&resolved.clutch_vars[i]));
        }
    }
    let n = vertices.len();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges.keys() {
        adj[a].push(b);
    }
    let mut components = tarjan_scc(&adj);
    components.sort_by_key(|c| c[0]);
    let comp_id = component_ids(n, &components);
    if let Some(&(a, b)) = edges.keys().find(|(a, b)| comp_id[*a] != comp_id[*b]) {
        return Err(CqaError::NotGPurified(format!(
            "edge {} -> {} joins two strong components",
            vertices[a].1, vertices[b].1
        )));
    }
    let g = CycleGraph {
        k,
        adj,
        part: vertices.iter().map(|(i, _)| *i).collect(),
    };

    let mut supply = ValueSupply::new(q, db);
    let mut out = db.restrict_to(&resolved.query);
    let mut verdicts = Vec::with_capacity(components.len());
    for comp in &components {
        let starts: Vec<usize> = comp.iter().copied().filter(|&v| g.part[v] == 0).collect();
        if starts.iter().any(|&a0| g.has_long_cycle(a0)) {
            verdicts.push(Verdict::LongCycle);
            continue;
        }
        let mut cycles: Vec<Vec<usize>> = Vec::new();
        for &a0 in &starts {
            g.k_paths(a0, |path, end| {
                if end == a0 {
                    cycles.push(path.to_vec());
                }
            });
        }
        let deltas = |c: &[usize]| -> Vec<&BTreeSet<Valuation>> {
            (0..k).map(|i| &edges[&(c[i], c[(i + 1) % k])]).collect()
        };
        if let Some(bad) = cycles.iter().find(|c| !supports(&deltas(c))) {
            verdicts.push(Verdict::Unsupported(bad.iter().map(|&v| vertices[v].1.clone()).collect()));
            continue;
        }
        let d = supply.mint(&resolved.u_var);
        for c in &cycles {
            for mu in product(&deltas(c)) {
                let row: Vec<Value> = [d.clone()]
                    .into_iter()
                    .chain(c.iter().map(|&v| vertices[v].1.clone()))
                    .chain(resolved.rest.iter().map(|y| mu.get(y).expect("rest variable bound").clone()))
                    .collect();
                out.insert_tuple(resolved.t.relation(), row);
            }
            for (i, u) in resolved.u.iter().enumerate() {
                out.insert_tuple(u.relation(), vec![vertices[c[i]].1.clone(), d.clone()]);
            }
        }
        verdicts.push(Verdict::Encoded(d));
    }
    Ok(DissolutionPlan {
        resolved,
        vertices,
        edges,
        components,
        verdicts,
        database: out,
    })
}

/// Realizations of different cycle edges agree on every variable they
/// share, so such a variable takes a single value across all of them.
fn supports(deltas: &[&BTreeSet<Valuation>]) -> bool {
    let mut owners: BTreeMap<&Var, BTreeSet<usize>> = BTreeMap::new();
    let mut values: BTreeMap<&Var, BTreeSet<&Value>> = BTreeMap::new();
    for (i, d) in deltas.iter().enumerate() {
        for (v, a) in d.iter().flat_map(|mu| mu.iter()) {
            owners.entry(v).or_default().insert(i);
            values.entry(v).or_default().insert(a);
        }
    }
    owners
        .iter()
        .all(|(v, edges)| edges.len() < 2 || values[v].len() == 1)
}

/// Unions of one valuation per set, for valuations that agree.
fn product(deltas: &[&BTreeSet<Valuation>]) -> Vec<Valuation> {
    let mut acc = vec![Valuation::new()];
    for d in deltas {
        let mut next = Vec::new();
        for base in &acc {
            for mu in d.iter() {
                if base.agrees_with(mu) {
                    let mut joined = base.clone();
                    for (v, a) in mu.iter() {
                        joined.insert(v.clone(), a.clone());
                    }
                    next.push(joined);
                }
            }
        }
        acc = next;
    }
    acc
}

/// Database counterpart of [`dissolve_query`]: a legal database for the
/// dissolved query with the same certain answer, given a typed, purified
/// and gpurified input.
pub fn dissolve_database(q: &Query, cycle: &[Var], db: &Database) -> Result<Database> {
    plan_dissolution(q, cycle, db).map(|p| p.database)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::certain_oracle;
    use crate::parse::{parse_database, parse_query};
    use crate::ptime::{gpurify::gpurify, typing::type_tag};

    fn vs(names: &[&str]) -> Vec<Var> {
        names.iter().map(Var::new).collect()
    }

    fn prepared(q: &str, db: &str) -> (Query, Database) {
        let q = parse_query(q).unwrap();
        let db = parse_database(db, &q).unwrap();
        let db = type_tag(&q, &db).unwrap();
        let db = gpurify(&q, &db).unwrap();
        (q, db)
    }

    #[test]
    fn fig2_resolve() {
        let q = parse_query(
            "R(x | y, v)\nS(y | x)\nconsistent V1(v | w)\nW(w | v)\nconsistent V2(w | y)",
        )
        .unwrap();
        let r = dissolve_query(&q, &vs(&["x", "w", "y"])).unwrap();
        let shown: Vec<String> = r.atoms().iter().map(|a| a.to_string()).collect();
        assert_eq!(
            shown,
            [
                "consistent V1(v | w)",
                "consistent V2(w | y)",
                "T$2(u$1 | x, w, y, v)",
                "consistent U0$3(x | u$1)",
                "consistent U1$4(w | u$1)",
                "consistent U2$5(y | u$1)",
            ]
        );
        assert_eq!(r.icard(), 1);
    }

    #[test]
    fn two_cycle_resolve() {
        let q = parse_query("R(x0 | x1)\nS(x1 | x0)").unwrap();
        let r = dissolve_query(&q, &vs(&["x0", "x1"])).unwrap();
        assert_eq!(r.to_string(), "T$2(u$1 | x0, x1)\nconsistent U0$3(x0 | u$1)\nconsistent U1$4(x1 | u$1)\n");
    }

    #[test]
    fn not_a_cycle() {
        let q = parse_query("R(x | y)\nS(y | z)").unwrap();
        assert!(matches!(dissolve_query(&q, &vs(&["x", "y"])), Err(CqaError::Precondition(_))));
    }

    #[test]
    fn two_cycle_database() {
        let (q, db) = prepared("R(x0 | x1)\nS(x1 | x0)", "R(a, 1)\nR(a, 2)\nS(1, a)\nS(2, a)");
        let c = vs(&["x0", "x1"]);
        let p = plan_dissolution(&q, &c, &db).unwrap();
        let out = &p.database;
        assert_eq!(out.relation_len("T$2"), 2);
        assert_eq!(out.relation_len("U0$3"), 1);
        assert_eq!(out.relation_len("U1$4"), 2);
        let q2 = dissolve_query(&q, &c).unwrap();
        assert!(certain_oracle(&q, &db).unwrap());
        assert!(certain_oracle(&q2, out).unwrap());
    }

    #[test]
    fn block_of_t_facts() {
        let (q, db) = prepared("R(x0 | x1, y)\nS(x1 | x0)", "R(a, 1, p)\nR(a, 1, r)\nS(1, a)");
        let p = plan_dissolution(&q, &vs(&["x0", "x1"]), &db).unwrap();
        assert_eq!(p.verdicts.len(), 1);
        assert!(matches!(p.verdicts[0], Verdict::Encoded(_)));
        let t = p.database.blocks("T$2").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].len(), 2);
    }

    #[test]
    fn disagreeing_cycle_deleted() {
        // The cycle a, 1, a is realized with y = p on one edge and y = r on the other.
        let (q, db) = prepared("R(x0 | x1, y)\nS(x1 | x0, y)", "R(a, 1, p)\nS(1, a, p)\nR(a, 1, r)\nS(1, a, r)");
        let c = vs(&["x0", "x1"]);
        let p = plan_dissolution(&q, &c, &db).unwrap();
        assert!(matches!(p.verdicts[0], Verdict::Unsupported(_)));
        assert_eq!(p.database.relation_len("T$2"), 0);
        let q2 = dissolve_query(&q, &c).unwrap();
        assert_eq!(certain_oracle(&q, &db).unwrap(), certain_oracle(&q2, &p.database).unwrap());
    }

    #[test]
    fn long_cycle_deleted() {
        let (q, db) = prepared(
            "R(x0 | x1)\nS(x1 | x0)",
            "R(a, 1)\nS(1, a)\nR(b, 1)\nS(1, b)\nR(b, 2)\nS(2, b)\nR(a, 2)\nS(2, a)",
        );
        let c = vs(&["x0", "x1"]);
        let p = plan_dissolution(&q, &c, &db).unwrap();
        assert_eq!(p.verdicts, [Verdict::LongCycle]);
        let q2 = dissolve_query(&q, &c).unwrap();
        assert_eq!(certain_oracle(&q, &db).unwrap(), certain_oracle(&q2, &p.database).unwrap());
    }
}
