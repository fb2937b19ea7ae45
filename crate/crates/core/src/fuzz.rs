//! Seeded random queries and databases, and differential checks of every
//! engine against the repair oracle.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::attack::{attack_graph, CycleStatus, Strength};
use crate::classify::{classify, ComplexityClass};
use crate::error::CqaError;
use crate::fo::{certain_fo, emit_rewriting, model_check};
use crate::model::{Atom, Database, Mode, Query, RelationDecl, Term, Value, Var};
use crate::oracle::{certain_oracle_capped, DEFAULT_CAP};
use crate::ptime::PtimeEngine;

const VARS: [&str; 5] = ["x", "y", "z", "w", "v"];
const CONSTS: [&str; 2] = ["a", "b"];
const DOMAIN: [&str; 4] = ["1", "2", "a", "b"];

#[derive(Clone, Debug)]
pub struct FuzzConfig {
    pub seed: u64,
    pub cases: usize,
    pub max_atoms: usize,
    pub max_facts: usize,
    /// Oracle cap; cases above it are skipped, not failed.
    pub cap: u128,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            seed: 0,
            cases: 1000,
            max_atoms: 5,
            max_facts: 12,
            cap: DEFAULT_CAP,
        }
    }
}

fn case_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Atom count biased toward two and three atoms.
fn atom_count(rng: &mut impl Rng, max: usize) -> usize {
    const WEIGHTS: [u32; 6] = [1, 5, 5, 3, 2, 1];
    let max = max.clamp(1, WEIGHTS.len());
    let total: u32 = WEIGHTS[..max].iter().sum();
    let mut pick = rng.gen_range(0..total);
    for (i, w) in WEIGHTS[..max].iter().enumerate() {
        if pick < *w {
            return i + 1;
        }
        pick -= w;
    }
    max
}

fn random_term(rng: &mut impl Rng, pool: usize) -> Term {
    if rng.gen_bool(0.88) {
        Term::var(VARS[rng.gen_range(0..pool)])
    } else {
        Term::constant(CONSTS[rng.gen_range(0..CONSTS.len())])
    }
}

fn random_mode(rng: &mut impl Rng) -> Mode {
    if rng.gen_bool(0.2) {
        Mode::Consistent
    } else {
        Mode::Inconsistent
    }
}

/// A random self-join-free query over a small variable pool. Some queries
/// start with a ring `R0(x | y ..), R1(y | z ..), ..` closing back on `x`,
/// so that attack cycles are common.
pub fn random_query(rng: &mut impl Rng, max_atoms: usize) -> Query {
    let n = atom_count(rng, max_atoms);
    let pool = rng.gen_range(2..=VARS.len().min(n + 1).max(2));
    let ring = if n >= 2 && rng.gen_bool(0.4) {
        rng.gen_range(2..=n.min(pool).min(3))
    } else {
        0
    };
    let atoms = (0..n)
        .map(|i| {
            if i < ring {
                let mut terms = vec![Term::var(VARS[i]), Term::var(VARS[(i + 1) % ring])];
                let extra = rng.gen_bool(0.4);
                if extra {
                    terms.insert(rng.gen_range(1..=2), random_term(rng, pool));
                }
                let key_len = if extra && terms[1].as_var().is_some() && rng.gen_bool(0.3) { 2 } else { 1 };
                let decl = RelationDecl::new(format!("R{i}"), terms.len(), key_len, random_mode(rng));
                return Atom { decl, terms };
            }
            let arity = [1, 2, 2, 2, 3, 3][rng.gen_range(0..6)];
            // Mostly leave a nonkey position, so atoms can attack.
            let key_len = if arity > 1 && rng.gen_bool(0.85) {
                rng.gen_range(1..arity)
            } else {
                arity
            };
            let terms = (0..arity).map(|_| random_term(rng, pool)).collect();
            Atom {
                decl: RelationDecl::new(format!("R{i}"), arity, key_len, random_mode(rng)),
                terms,
            }
        })
        .collect();
    Query::new(atoms).expect("distinct names and matching arities")
}

/// A random legal database for `q`: images of random valuations mixed
/// with noise facts, keeping consistent relations consistent.
pub fn random_database(rng: &mut impl Rng, q: &Query, max_facts: usize) -> Database {
    let mut db = Database::for_query(q);
    if q.is_empty() {
        return db;
    }
    let target = rng.gen_range(0..=max_facts);
    let vars = q.vars_in_order();
    let mut tries = 0;
    while db.len() < target && tries < 4 * max_facts {
        tries += 1;
        let theta: BTreeMap<Var, Value> = vars
            .iter()
            .map(|v| (v.clone(), Value::plain(DOMAIN[rng.gen_range(0..DOMAIN.len())])))
            .collect();
        let atoms: Vec<&Atom> = if rng.gen_bool(0.5) {
            q.atoms().iter().collect()
        } else {
            vec![q.atoms().choose(rng).expect("nonempty")]
        };
        for a in atoms {
            let tuple: Vec<Value> = a
                .terms
                .iter()
                .map(|t| match t {
                    Term::Var(v) => theta[v].clone(),
                    Term::Const(c) if rng.gen_bool(0.8) => c.clone(),
                    Term::Const(_) => Value::plain(DOMAIN[rng.gen_range(0..DOMAIN.len())]),
                })
                .collect();
            if a.is_consistent() {
                let k = a.decl.key_len;
                if db.tuples_with_prefix(a.relation(), &tuple[..k]).next().is_some() {
                    continue;
                }
            }
            if db.len() < max_facts {
                db.insert_tuple(a.relation(), tuple);
            }
        }
    }
    db
}

#[derive(Clone, Debug)]
pub struct FuzzCase {
    pub index: usize,
    pub query: Query,
    pub db: Database,
}

pub fn generate_case(config: &FuzzConfig, index: usize) -> FuzzCase {
    let mut rng = case_rng(config.seed, index);
    let query = random_query(&mut rng, config.max_atoms);
    let db = random_database(&mut rng, &query, config.max_facts);
    FuzzCase { index, query, db }
}

/// Engine or stage whose answer differed from the oracle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Disagreement {
    pub check: String,
    pub query: Query,
    pub db: Database,
    pub expected: bool,
    pub got: String,
}

impl fmt::Display for Disagreement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "check {}: oracle says {}, got {}", self.check, self.expected, self.got)?;
        writeln!(f, "query:")?;
        write!(f, "{}", self.query)?;
        writeln!(f, "database:")?;
        write!(f, "{}", self.db)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CaseOutcome {
    pub class: Option<ComplexityClass>,
    /// Names of the checks that ran.
    pub checked: Vec<String>,
    /// Set when the oracle exceeded its cap.
    pub skipped: bool,
    pub disagreements: Vec<Disagreement>,
}

fn oracle(q: &Query, db: &Database, cap: u128) -> Option<bool> {
    match certain_oracle_capped(q, db, cap) {
        Ok(v) => Some(v),
        Err(CqaError::RepairSpaceTooLarge { .. }) => None,
        Err(e) => panic!("oracle failed on a legal input: {e}"),
    }
}

fn verdict(r: &Result<bool, CqaError>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => format!("error: {e}"),
    }
}

/// Runs every applicable engine on one query/database pair.
pub fn check_pair(q: &Query, db: &Database, cap: u128) -> CaseOutcome {
    let class = classify(q).class;
    let mut out = CaseOutcome {
        class: Some(class),
        ..CaseOutcome::default()
    };
    let Some(expected) = oracle(q, db, cap) else {
        out.skipped = true;
        return out;
    };
    let differ = |check: &str, got: Result<bool, CqaError>| -> Option<Disagreement> {
        (got.as_ref().ok() != Some(&expected)).then(|| Disagreement {
            check: check.to_string(),
            query: q.clone(),
            db: db.clone(),
            expected,
            got: verdict(&got),
        })
    };
    if class == ComplexityClass::Fo {
        out.checked.push("fo".into());
        out.disagreements.extend(differ("fo", certain_fo(q, db)));
        out.checked.push("rewriting".into());
        let got = emit_rewriting(q).map(|f| model_check(&f, db));
        out.disagreements.extend(differ("rewriting", got));
    }
    if class != ComplexityClass::ConpComplete {
        out.checked.push("ptime".into());
        let stage_failures: RefCell<Vec<Disagreement>> = RefCell::new(Vec::new());
        let got = PtimeEngine::new()
            .on_stage(|s| {
                let (Some(before), Some(after)) = (
                    oracle(s.before.0, s.before.1, cap),
                    oracle(s.after.0, s.after.1, cap),
                ) else {
                    return;
                };
                if before != after {
                    stage_failures.borrow_mut().push(Disagreement {
                        check: format!("stage {} at depth {}", s.name, s.depth),
                        query: s.before.0.clone(),
                        db: s.before.1.clone(),
                        expected: before,
                        got: after.to_string(),
                    });
                }
            })
            .certain(q, db);
        out.disagreements.extend(differ("ptime", got));
        out.checked.push("stages".into());
        out.disagreements.extend(stage_failures.into_inner());
    }
    out
}

/// Drops facts, then atoms, while the named check still disagrees.
pub fn minimize(d: &Disagreement, cap: u128) -> Disagreement {
    let still_fails = |q: &Query, db: &Database| -> Option<Disagreement> {
        check_pair(q, db, cap)
            .disagreements
            .into_iter()
            .find(|x| x.check.split(' ').next() == d.check.split(' ').next())
    };
    let mut best = d.clone();
    let (mut q, mut db) = (d.query.clone(), d.db.clone());
    loop {
        let mut shrunk = false;
        for fact in db.facts().collect::<Vec<_>>() {
            let smaller = db.filtered(|r, t| !(r == fact.relation && t == fact.values.as_slice()));
            if let Some(found) = still_fails(&q, &smaller) {
                db = smaller;
                best = found;
                shrunk = true;
            }
        }
        for i in 0..q.len() {
            if q.len() == 1 {
                break;
            }
            let smaller_q = q.without(i);
            let smaller_db = db.restrict_to(&smaller_q);
            if let Some(found) = still_fails(&smaller_q, &smaller_db) {
                q = smaller_q;
                db = smaller_db;
                best = found;
                shrunk = true;
                break;
            }
        }
        if !shrunk {
            return best;
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct FuzzReport {
    pub cases: usize,
    pub skipped: usize,
    pub by_class: BTreeMap<ComplexityClass, usize>,
    pub checks: BTreeMap<String, usize>,
    /// Minimized, in case order.
    pub disagreements: Vec<(usize, Disagreement)>,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.disagreements.is_empty()
    }
}

impl fmt::Display for FuzzReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} cases, {} skipped over the oracle cap", self.cases, self.skipped)?;
        for (c, n) in &self.by_class {
            write!(f, ", {n} {c}")?;
        }
        writeln!(f)?;
        for (name, n) in &self.checks {
            writeln!(f, "  {name}: {n} checked")?;
        }
        for (i, d) in &self.disagreements {
            writeln!(f, "case {i}:")?;
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Runs `config.cases` seeded cases in parallel; results are in case order
/// and depend only on the configuration.
pub fn run_fuzz(config: &FuzzConfig) -> FuzzReport {
    let outcomes: Vec<(usize, CaseOutcome)> = (0..config.cases)
        .into_par_iter()
        .map(|i| {
            let case = generate_case(config, i);
            (i, check_pair(&case.query, &case.db, config.cap))
        })
        .collect();
    let mut report = FuzzReport {
        cases: config.cases,
        ..FuzzReport::default()
    };
    for (i, o) in outcomes {
        if let Some(c) = o.class {
            *report.by_class.entry(c).or_default() += 1;
        }
        report.skipped += usize::from(o.skipped);
        for name in o.checked {
            *report.checks.entry(name).or_default() += 1;
        }
        if let Some(d) = o.disagreements.first() {
            report.disagreements.push((i, minimize(d, config.cap)));
        }
    }
    report
}

/// Violations of structural attack-graph properties on one query:
/// quasi-transitivity, agreement of the two-cycle scan with the component
/// scan, monotonicity of the class under substitution, and invariance of
/// the class under renaming and reordering.
pub fn query_property_violations(q: &Query, rng: &mut impl Rng) -> Vec<String> {
    let mut out = Vec::new();
    let g = attack_graph(q);
    let n = q.len();
    for f in 0..n {
        for h in 0..n {
            for k in 0..n {
                if f != h && h != k && f != k && g.attacks(f, h) && g.attacks(h, k) && !g.attacks(f, k) && !g.attacks(h, f) {
                    out.push(format!("quasi-transitivity fails for {f}, {h}, {k}"));
                }
            }
        }
    }
    let status = g.cycle_status();
    let (cyclic, strong) = g.cycles_by_components();
    let scan_cyclic = !matches!(status, CycleStatus::Acyclic);
    if scan_cyclic != cyclic || g.has_strong_cycle() != strong {
        out.push(format!("two-cycle scan {status:?} disagrees with components ({cyclic}, {strong})"));
    }
    let adj: Vec<Vec<usize>> = (0..n).map(|i| g.successors(i).to_vec()).collect();
    let cycles = crate::graph::elementary_cycles(&adj);
    let any_strong = cycles.iter().any(|c| {
        (0..c.len()).any(|i| {
            g.edge(c[i], c[(i + 1) % c.len()])
                .is_some_and(|e| e.strength == Strength::Strong)
        })
    });
    if scan_cyclic != !cycles.is_empty() || g.has_strong_cycle() != any_strong {
        out.push(format!(
            "two-cycle scan {status:?} disagrees with {} enumerated cycles (strong: {any_strong})",
            cycles.len()
        ));
    }
    let class = classify(q).class;
    for x in q.vars_in_order() {
        let theta = [(x.clone(), Value::plain("c0"))].into_iter().collect();
        let sub = q.apply(&theta);
        let c = classify(&sub).class;
        if c > class {
            out.push(format!("substituting {x} raises {class} to {c}"));
        }
    }
    let mut atoms = q.atoms().to_vec();
    atoms.shuffle(rng);
    let renaming: BTreeMap<Var, Var> = q
        .vars_in_order()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, Var::new(format!("r{i}"))))
        .collect();
    let moved = Query::new(atoms).expect("same atoms").rename_vars(&renaming);
    let c = classify(&moved).class;
    if c != class {
        out.push(format!("renaming and reordering changes {class} to {c}"));
    }
    out
}

/// Checks [`query_property_violations`] on `cases` seeded random queries.
pub fn run_query_properties(seed: u64, cases: usize, max_atoms: usize) -> Vec<(usize, Query, String)> {
    (0..cases)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = case_rng(seed, i);
            let q = random_query(&mut rng, max_atoms);
            query_property_violations(&q, &mut rng)
                .into_iter()
                .map(move |v| (i, q.clone(), v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_reproducible() {
        let c = FuzzConfig::default();
        for i in 0..20 {
            let (a, b) = (generate_case(&c, i), generate_case(&c, i));
            assert_eq!(a.query, b.query);
            assert_eq!(a.db, b.db);
            assert!(a.db.len() <= c.max_facts);
            assert!(a.query.len() <= c.max_atoms);
            a.db.check_consistent_relations().unwrap();
        }
    }

    #[test]
    fn small_run_agrees() {
        let r = run_fuzz(&FuzzConfig {
            seed: 7,
            cases: 60,
            ..FuzzConfig::default()
        });
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn minimizer_keeps_failure() {
        let q = crate::parse::parse_query("R(x | y)").unwrap();
        let db = crate::parse::parse_database("R(1, a)\nR(2, b)", &q).unwrap();
        let d = Disagreement {
            check: "none".into(),
            query: q,
            db,
            expected: false,
            got: "true".into(),
        };
        // No real check fails, so the input comes back unchanged.
        assert_eq!(minimize(&d, DEFAULT_CAP), d);
    }
}
