//! Certainty for queries with an acyclic attack graph: the recursive
//! algorithm, the first-order rewriting it induces, and a model checker
//! for that rewriting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::attack::{attack_graph, AttackGraph, CycleStatus};
use crate::error::{CqaError, Result};
use crate::model::{Atom, Database, Query, Term, Valuation, Value, Var};

fn require_acyclic(q: &Query) -> Result<AttackGraph> {
    let g = attack_graph(q);
    match g.cycle_status() {
        CycleStatus::Acyclic => Ok(g),
        CycleStatus::WeakCycle(i, j) | CycleStatus::StrongCycle(i, j) => Err(CqaError::NotFoQuery(
            format!(
                "{} and {} attack each other",
                q.atoms()[i].relation(),
                q.atoms()[j].relation()
            ),
        )),
    }
}

/// Picks the atom eliminated next: the first unattacked one in query order.
fn first_unattacked(g: &AttackGraph) -> usize {
    *g.unattacked().first().expect("an acyclic graph has a source")
}

/// Decides certainty of `q` on `db` by the recursive first-order algorithm.
pub fn certain_fo(q: &Query, db: &Database) -> Result<bool> {
    require_acyclic(q)?;
    Ok(certain_fo_with(q, db, &mut |g| first_unattacked(g)))
}

/// Like [`certain_fo`] but lets `choose` pick among unattacked atoms.
pub fn certain_fo_with(
    q: &Query,
    db: &Database,
    choose: &mut dyn FnMut(&AttackGraph) -> usize,
) -> bool {
    if q.is_empty() {
        return true;
    }
    let g = attack_graph(q);
    debug_assert!(g.is_acyclic(), "residual query lost acyclicity:\n{q}");
    let i = choose(&g);
    debug_assert_eq!(g.in_degree(i), 0, "chosen atom is attacked");
    let f = &q.atoms()[i];
    let rest = q.without(i);
    let key_prefix: Vec<Value> = f
        .key_terms()
        .iter()
        .map_while(|t| match t {
            Term::Const(c) => Some(c.clone()),
            Term::Var(_) => None,
        })
        .collect();
    let Ok(blocks) = db.blocks(f.relation()) else {
        return false;
    };
    blocks
        .iter()
        .filter(|b| b.key.starts_with(&key_prefix))
        .any(|b| {
            let k = f.decl.key_len;
            let Some(theta) = f.match_key(&b.key, &Valuation::new()) else {
                return false;
            };
            b.tuples.iter().all(|tuple| {
                debug_assert_eq!(&tuple[..k], &b.key[..]);
                match f.match_tuple(tuple, &theta) {
                    Some(full) => certain_fo_with(&rest.apply(&full), db, choose),
                    None => false,
                }
            })
        })
}

/// First-order formulas over the query's relations.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Formula {
    True,
    Atom { relation: String, terms: Vec<Term> },
    Eq(Term, Term),
    And(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Exists(Vec<Var>, Box<Formula>),
    Forall(Vec<Var>, Box<Formula>),
}

impl Formula {
    fn atom(a: &Atom) -> Formula {
        Formula::Atom {
            relation: a.relation().to_string(),
            terms: a.terms.clone(),
        }
    }

    fn and(mut parts: Vec<Formula>) -> Formula {
        parts.retain(|p| *p != Formula::True);
        match parts.len() {
            0 => Formula::True,
            1 => parts.pop().expect("one part"),
            _ => Formula::And(parts),
        }
    }

    fn exists(vars: Vec<Var>, body: Formula) -> Formula {
        if vars.is_empty() {
            body
        } else {
            Formula::Exists(vars, Box::new(body))
        }
    }

    /// Variables not bound by a quantifier.
    pub fn free_vars(&self) -> BTreeSet<Var> {
        fn term_vars(ts: &[&Term], out: &mut BTreeSet<Var>) {
            out.extend(ts.iter().filter_map(|t| t.as_var()).cloned());
        }
        let mut out = BTreeSet::new();
        match self {
            Formula::True => {}
            Formula::Atom { terms, .. } => term_vars(&terms.iter().collect::<Vec<_>>(), &mut out),
            Formula::Eq(a, b) => term_vars(&[a, b], &mut out),
            Formula::And(ps) => ps.iter().for_each(|p| out.extend(p.free_vars())),
            Formula::Implies(a, b) => {
                out.extend(a.free_vars());
                out.extend(b.free_vars());
            }
            Formula::Exists(vs, body) | Formula::Forall(vs, body) => {
                out = body.free_vars();
                for v in vs {
                    out.remove(v);
                }
            }
        }
        out
    }

    pub fn is_closed(&self) -> bool {
        self.free_vars().is_empty()
    }

    fn write_sexpr(&self, out: &mut String) {
        let term = |t: &Term| t.to_string();
        match self {
            Formula::True => out.push_str("true"),
            Formula::Atom { relation, terms } => {
                out.push('(');
                out.push_str(relation);
                for t in terms {
                    out.push(' ');
                    out.push_str(&term(t));
                }
                out.push(')');
            }
            Formula::Eq(a, b) => {
                out.push_str(&format!("(= {} {})", term(a), term(b)));
            }
            Formula::And(ps) => {
                out.push_str("(and");
                for p in ps {
                    out.push(' ');
                    p.write_sexpr(out);
                }
                out.push(')');
            }
            Formula::Implies(a, b) => {
                out.push_str("(implies ");
                a.write_sexpr(out);
                out.push(' ');
                b.write_sexpr(out);
                out.push(')');
            }
            Formula::Exists(vs, body) | Formula::Forall(vs, body) => {
                let q = if matches!(self, Formula::Exists(..)) {
                    "exists"
                } else {
                    "forall"
                };
                let names: Vec<&str> = vs.iter().map(Var::name).collect();
                out.push_str(&format!("({q} ({}) ", names.join(" ")));
                body.write_sexpr(out);
                out.push(')');
            }
        }
    }

    /// Renders the formula in infix notation.
    pub fn to_infix(&self) -> String {
        match self {
            Formula::True => "true".into(),
            Formula::Atom { relation, terms } => {
                let ts: Vec<String> = terms.iter().map(Term::to_string).collect();
                format!("{relation}({})", ts.join(", "))
            }
            Formula::Eq(a, b) => format!("{a} = {b}"),
            Formula::And(ps) => {
                let parts: Vec<String> = ps.iter().map(Formula::to_infix).collect();
                format!("({})", parts.join(" & "))
            }
            Formula::Implies(a, b) => format!("({} -> {})", a.to_infix(), b.to_infix()),
            Formula::Exists(vs, body) => {
                let qs: String = vs.iter().map(|v| format!("E{v}.")).collect();
                format!("{qs}{}", body.to_infix())
            }
            Formula::Forall(vs, body) => {
                let qs: String = vs.iter().map(|v| format!("A{v}.")).collect();
                format!("{qs}{}", body.to_infix())
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        self.write_sexpr(&mut s);
        f.write_str(&s)
    }
}

struct Names {
    taken: BTreeSet<String>,
}

impl Names {
    fn fresh(&mut self) -> Var {
        let name = (0..)
            .map(|i| if i == 0 { "z".to_string() } else { format!("z{i}") })
            .find(|n| !self.taken.contains(n))
            .expect("unbounded supply");
        self.taken.insert(name.clone());
        Var::new(name)
    }
}

fn placeholder(v: &Var) -> Value {
    Value::plain(format!("${v}"))
}

fn emit(q: &Query, bound: &BTreeSet<Var>, names: &mut Names) -> Formula {
    if q.is_empty() {
        return Formula::True;
    }
    let frozen: Valuation = bound.iter().map(|v| (v.clone(), placeholder(v))).collect();
    let g = attack_graph(&q.apply(&frozen));
    debug_assert!(g.is_acyclic());
    let i = first_unattacked(&g);
    let f = &q.atoms()[i];
    let rest = q.without(i);

    let key_vars = f.key_vars();
    let mut introduced: Vec<Var> = Vec::new();
    for v in f.vars_in_order() {
        if !bound.contains(&v) {
            introduced.push(v);
        }
    }
    let guard = Formula::atom(f);

    let mut inner_bound = bound.clone();
    inner_bound.extend(f.vars());

    let nonkey = f.nonkey_terms();
    if nonkey.is_empty() {
        let body = Formula::and(vec![guard, emit(&rest, &inner_bound, names)]);
        return Formula::exists(introduced, body);
    }

    let mut universal: Vec<Var> = Vec::new();
    let mut equalities: Vec<Formula> = Vec::new();
    let mut pattern: Vec<Term> = f.key_terms().to_vec();
    for t in nonkey {
        match t {
            Term::Var(v) if !key_vars.contains(v) && !bound.contains(v) && !universal.contains(v) => {
                universal.push(v.clone());
                pattern.push(t.clone());
            }
            _ => {
                let z = names.fresh();
                equalities.push(Formula::Eq(Term::Var(z.clone()), t.clone()));
                universal.push(z.clone());
                pattern.push(Term::Var(z));
            }
        }
    }
    let mut conclusion = equalities;
    conclusion.push(emit(&rest, &inner_bound, names));
    let conclusion = Formula::and(conclusion);
    let body = if conclusion == Formula::True {
        guard
    } else {
        let premise = Formula::Atom {
            relation: f.relation().to_string(),
            terms: pattern,
        };
        Formula::And(vec![
            guard,
            Formula::Forall(universal, Box::new(Formula::Implies(Box::new(premise), Box::new(conclusion)))),
        ])
    };
    Formula::exists(introduced, body)
}

/// The first-order rewriting of `q`.
pub fn emit_rewriting(q: &Query) -> Result<Formula> {
    require_acyclic(q)?;
    let mut names = Names {
        taken: q.vars().iter().map(|v| v.name().to_string()).collect(),
    };
    Ok(emit(q, &BTreeSet::new(), &mut names))
}

type Env = BTreeMap<Var, Value>;

fn term_value<'a>(t: &'a Term, env: &'a Env) -> Option<&'a Value> {
    match t {
        Term::Const(c) => Some(c),
        Term::Var(v) => env.get(v),
    }
}

/// Extensions of `env` binding `vars` so that the atom pattern holds in `db`.
fn guarded_bindings(relation: &str, terms: &[Term], vars: &[Var], env: &Env, db: &Database) -> Vec<Env> {
    let mut inner = env.clone();
    for v in vars {
        inner.remove(v);
    }
    let mut out = Vec::new();
    'tuples: for tuple in db.tuples(relation) {
        if tuple.len() != terms.len() {
            continue;
        }
        let mut e = inner.clone();
        for (t, val) in terms.iter().zip(tuple) {
            match t {
                Term::Const(c) => {
                    if c != val {
                        continue 'tuples;
                    }
                }
                Term::Var(v) => match e.get(v) {
                    Some(b) if b != val => continue 'tuples,
                    Some(_) => {}
                    None if vars.contains(v) => {
                        e.insert(v.clone(), val.clone());
                    }
                    None => continue 'tuples,
                },
            }
        }
        if vars.iter().all(|v| e.contains_key(v)) {
            out.push(e);
        }
    }
    out
}

fn all_assignments(vars: &[Var], env: &Env, domain: &[Value]) -> Vec<Env> {
    let mut out = vec![env.clone()];
    for v in vars {
        out = out
            .into_iter()
            .flat_map(|e| {
                domain.iter().map(move |d| {
                    let mut e = e.clone();
                    e.insert(v.clone(), d.clone());
                    e
                })
            })
            .collect();
    }
    out
}

fn check(f: &Formula, db: &Database, env: &Env, domain: &[Value]) -> bool {
    match f {
        Formula::True => true,
        Formula::Atom { relation, terms } => {
            let vals: Option<Vec<Value>> = terms.iter().map(|t| term_value(t, env).cloned()).collect();
            vals.is_some_and(|v| db.contains(relation, &v))
        }
        Formula::Eq(a, b) => match (term_value(a, env), term_value(b, env)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        },
        Formula::And(ps) => ps.iter().all(|p| check(p, db, env, domain)),
        Formula::Implies(a, b) => !check(a, db, env, domain) || check(b, db, env, domain),
        Formula::Exists(vs, body) => {
            let guard = match body.as_ref() {
                Formula::Atom { relation, terms } => Some((relation, terms)),
                Formula::And(ps) => match ps.first() {
                    Some(Formula::Atom { relation, terms }) => Some((relation, terms)),
                    _ => None,
                },
                _ => None,
            };
            let candidates = match guard {
                Some((r, ts)) => guarded_bindings(r, ts, vs, env, db),
                None => all_assignments(vs, env, domain),
            };
            candidates.iter().any(|e| check(body, db, e, domain))
        }
        Formula::Forall(vs, body) => match body.as_ref() {
            Formula::Implies(premise, conclusion) => match premise.as_ref() {
                Formula::Atom { relation, terms } => guarded_bindings(relation, terms, vs, env, db)
                    .iter()
                    .all(|e| check(conclusion, db, e, domain)),
                _ => all_assignments(vs, env, domain)
                    .iter()
                    .all(|e| check(body, db, e, domain)),
            },
            _ => all_assignments(vs, env, domain)
                .iter()
                .all(|e| check(body, db, e, domain)),
        },
    }
}

/// Evaluates a closed formula on `db` under active-domain semantics.
pub fn model_check(f: &Formula, db: &Database) -> bool {
    let domain: Vec<Value> = db.active_domain().into_iter().collect();
    check(f, db, &Env::new(), &domain)
}

/// Structural equality up to renaming of bound variables.
pub fn alpha_equivalent(a: &Formula, b: &Formula) -> bool {
    fn term_eq(x: &Term, y: &Term, scope: &[(Var, Var)]) -> bool {
        match (x, y) {
            (Term::Const(c), Term::Const(d)) => c == d,
            (Term::Var(v), Term::Var(w)) => {
                match scope.iter().rev().find(|(l, r)| l == v || r == w) {
                    Some((l, r)) => l == v && r == w,
                    None => v == w,
                }
            }
            _ => false,
        }
    }
    fn go(a: &Formula, b: &Formula, scope: &mut Vec<(Var, Var)>) -> bool {
        match (a, b) {
            (Formula::True, Formula::True) => true,
            (
                Formula::Atom { relation: r, terms: ts },
                Formula::Atom { relation: s, terms: us },
            ) => r == s && ts.len() == us.len() && ts.iter().zip(us).all(|(t, u)| term_eq(t, u, scope)),
            (Formula::Eq(a1, a2), Formula::Eq(b1, b2)) => term_eq(a1, b1, scope) && term_eq(a2, b2, scope),
            (Formula::And(ps), Formula::And(qs)) => {
                ps.len() == qs.len() && ps.iter().zip(qs).all(|(p, q)| go(p, q, scope))
            }
            (Formula::Implies(a1, a2), Formula::Implies(b1, b2)) => go(a1, b1, scope) && go(a2, b2, scope),
            (Formula::Exists(vs, x), Formula::Exists(ws, y)) | (Formula::Forall(vs, x), Formula::Forall(ws, y)) => {
                if vs.len() != ws.len() {
                    return false;
                }
                let n = scope.len();
                scope.extend(vs.iter().cloned().zip(ws.iter().cloned()));
                let ok = go(x, y, scope);
                scope.truncate(n);
                ok
            }
            _ => false,
        }
    }
    go(a, b, &mut Vec::new())
}
