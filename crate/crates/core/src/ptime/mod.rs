//! Polynomial-time certainty for queries whose attack graph has no strong
//! cycle.
//!
//! Each level of the recursion prepares the pair (purify, simplify, type,
//! saturate, purify, gpurify) and then either branches on the blocks of an
//! unattacked inconsistent atom or dissolves a premier Markov cycle. Both
//! steps lower the number of inconsistent atoms.

mod desugar;
mod dissolve;
mod fresh;
mod gpurify;
mod markov;
mod purify;
mod saturate;
mod simplify;
mod typing;

pub use desugar::{desugar_all, desugar_consistent, Desugared};
pub use dissolve::{dissolve_database, dissolve_query, plan_dissolution, resolve, DissolutionPlan, Resolved, Verdict};
pub use gpurify::{gblocks, gpurify, gpurify_capped, is_gpurified, DEFAULT_GBLOCK_CAP};
pub use markov::{clutch, find_premier_cycle, is_premier, markov_graph, shortcut, MarkovGraph};
pub use purify::{is_purified, purify};
pub use saturate::{is_saturated, saturate, violations};
pub use simplify::{canonicalize_atoms, simple_key_normalize, simplify};
pub use typing::{is_canonical, type_tag};

use crate::attack::attack_graph;
use crate::error::{CqaError, Result};
use crate::eval::eval_bcq;
use crate::model::{Database, Query, Valuation};

/// One transformation applied by the engine.
#[derive(Debug)]
pub struct Stage<'a> {
    pub depth: usize,
    pub name: &'static str,
    pub before: (&'a Query, &'a Database),
    pub after: (&'a Query, &'a Database),
}

type TraceFn<'h> = Box<dyn FnMut(&str) + 'h>;
type StageFn<'h> = Box<dyn FnMut(&Stage<'_>) + 'h>;

/// Configurable polynomial-time engine.
///
/// ```
/// use cqa_core::{parse_database, parse_query, PtimeEngine};
/// let q = parse_query("R(x | y)\nS(y | x)").unwrap();
/// let db = parse_database("R(1, a)\nR(1, b)\nS(a, 1)\nS(b, 1)", &q).unwrap();
/// assert!(PtimeEngine::new().certain(&q, &db).unwrap());
/// ```
pub struct PtimeEngine<'h> {
    gblock_cap: u128,
    trace: Option<TraceFn<'h>>,
    stage: Option<StageFn<'h>>,
}

impl Default for PtimeEngine<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'h> PtimeEngine<'h> {
    pub fn new() -> Self {
        PtimeEngine {
            gblock_cap: DEFAULT_GBLOCK_CAP,
            trace: None,
            stage: None,
        }
    }

    /// Bound on the repairs enumerated per gblock during gpurification.
    pub fn gblock_cap(mut self, cap: u128) -> Self {
        self.gblock_cap = cap;
        self
    }

    /// Receives one line per pipeline step.
    pub fn on_trace(mut self, f: impl FnMut(&str) + 'h) -> Self {
        self.trace = Some(Box::new(f));
        self
    }

    /// Receives every certainty-preserving transformation with its input
    /// and output.
    pub fn on_stage(mut self, f: impl FnMut(&Stage<'_>) + 'h) -> Self {
        self.stage = Some(Box::new(f));
        self
    }

    pub fn certain(&mut self, q: &Query, db: &Database) -> Result<bool> {
        db.restrict_to(q).check_consistent_relations()?;
        self.solve(q, db, 0)
    }

    fn log(&mut self, depth: usize, msg: impl FnOnce() -> String) {
        if let Some(t) = self.trace.as_mut() {
            t(&format!("{}{}", "  ".repeat(depth), msg()));
        }
    }

    fn step(
        &mut self,
        depth: usize,
        name: &'static str,
        before: (&Query, &Database),
        after: (&Query, &Database),
    ) {
        self.log(depth, || {
            format!(
                "{name}: {} atoms ({} inconsistent), {} facts -> {} atoms ({} inconsistent), {} facts",
                before.0.len(),
                before.0.icard(),
                before.1.len(),
                after.0.len(),
                after.0.icard(),
                after.1.len()
            )
        });
        if let Some(h) = self.stage.as_mut() {
            h(&Stage {
                depth,
                name,
                before,
                after,
            });
        }
    }

    fn solve(&mut self, q: &Query, db: &Database, depth: usize) -> Result<bool> {
        if attack_graph(q).has_strong_cycle() {
            return Err(CqaError::Precondition(
                "the attack graph has a strong cycle".into(),
            ));
        }
        let db0 = db.restrict_to(q);
        if q.icard() == 0 {
            let v = eval_bcq(q, &db0);
            self.log(depth, || format!("consistent query: {v}"));
            return Ok(v);
        }

        let db1 = purify(q, &db0);
        self.step(depth, "purify", (q, &db0), (q, &db1));
        let (q2, db2) = simplify(q, &db1);
        self.step(depth, "simplify", (q, &db1), (&q2, &db2));
        let db3 = type_tag(&q2, &db2)?;
        self.step(depth, "type", (&q2, &db2), (&q2, &db3));
        let (q4, db4) = saturate(&q2, &db3)?;
        self.step(depth, "saturate", (&q2, &db3), (&q4, &db4));
        let db5 = purify(&q4, &db4);
        self.step(depth, "purify", (&q4, &db4), (&q4, &db5));
        let db6 = gpurify_capped(&q4, &db5, self.gblock_cap)?;
        self.step(depth, "gpurify", (&q4, &db5), (&q4, &db6));
        let (q, db) = (q4, db6);

        if !eval_bcq(&q, &db) {
            self.log(depth, || "no embedding left: false".into());
            return Ok(false);
        }

        let g = attack_graph(&q);
        let unattacked = q
            .atoms()
            .iter()
            .enumerate()
            .find(|(i, a)| !a.is_consistent() && g.in_degree(*i) == 0)
            .map(|(i, _)| i);
        if let Some(i) = unattacked {
            return self.branch(&q, &db, i, depth);
        }

        if let Some(a) = q.atoms().iter().find(|a| !a.is_consistent() && a.has_constants()) {
            return Err(CqaError::UnsupportedStructure(format!(
                "inconsistent atom {a} holds a constant but is attacked"
            )));
        }
        let cycle = find_premier_cycle(&q)?;
        let plan = plan_dissolution(&q, &cycle, &db)?;
        let q_star = plan.resolved.query.clone();
        assert!(
            q_star.icard() < q.icard(),
            "dissolving a cycle with nonempty clutches lowers the inconsistency count"
        );
        self.log(depth, || {
            let names: Vec<&str> = cycle.iter().map(|v| v.name()).collect();
            format!("dissolve cycle ({})", names.join(", "))
        });
        self.step(depth, "dissolve", (&q, &db), (&q_star, &plan.database));
        self.solve(&q_star, &plan.database, depth + 1)
    }

    /// Certain iff some block of the unattacked atom has every fact leading
    /// to a certain residual query.
    fn branch(&mut self, q: &Query, db: &Database, i: usize, depth: usize) -> Result<bool> {
        let f = &q.atoms()[i];
        let rest = q.without(i);
        self.log(depth, || format!("branch on unattacked atom {f}"));
        'blocks: for block in db.blocks(f.relation())? {
            for t in &block.tuples {
                let Some(theta) = f.match_tuple(t, &Valuation::new()) else {
                    continue 'blocks;
                };
                if !self.solve(&rest.apply(&theta), db, depth + 1)? {
                    continue 'blocks;
                }
            }
            self.log(depth, || "block with all residuals certain: true".into());
            return Ok(true);
        }
        Ok(false)
    }
}

/// Certain answer of `q` on `db` by the polynomial-time pipeline.
pub fn certain_ptime(q: &Query, db: &Database) -> Result<bool> {
    PtimeEngine::new().certain(q, db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::certain_oracle;
    use crate::parse::{parse_database, parse_query};

    fn check(q: &str, db: &str) -> bool {
        let q = parse_query(q).unwrap();
        let db = parse_database(db, &q).unwrap();
        let p = certain_ptime(&q, &db).unwrap();
        assert_eq!(p, certain_oracle(&q, &db).unwrap(), "{q}\n{db}");
        p
    }

    #[test]
    fn two_cycle_false() {
        assert!(!check("R0(x | y)\nS0(y | x)", "R0(1, a)\nR0(1, b)\nS0(a, 1)\nS0(b, 2)"));
    }

    #[test]
    fn two_cycle_true() {
        assert!(check("R(x | y)\nS(y | x)", "R(1, a)\nR(1, b)\nS(a, 1)\nS(b, 1)"));
    }

    #[test]
    fn empty_db_false() {
        assert!(!check("R(x | y)\nS(y | x)", ""));
    }

    #[test]
    fn triangle_components() {
        let db = "R(a, 1)\nR(a, 2)\nS(1, p)\nS(2, p)\nV(p, a)\n\
                  R(b, 3)\nS(3, r)\nS(3, s)\nV(r, b)\nV(s, c)\n\
                  R(c, 4)\nS(4, t)\nV(t, c)";
        check("R(x | y)\nS(y | z)\nV(z | x)", db);
    }

    #[test]
    fn strong_cycle_rejected() {
        let q = parse_query("R(x | z)\nS(y | z)").unwrap();
        assert!(attack_graph(&q).has_strong_cycle());
        let db = Database::for_query(&q);
        assert!(matches!(certain_ptime(&q, &db), Err(CqaError::Precondition(_))));
    }

    #[test]
    fn stages_reported() {
        let q = parse_query("R(x | y)\nS(y | x)").unwrap();
        let db = parse_database("R(1, a)\nR(1, b)\nS(a, 1)\nS(b, 1)", &q).unwrap();
        let mut names = Vec::new();
        let mut lines = 0;
        PtimeEngine::new()
            .on_stage(|s| names.push(s.name))
            .on_trace(|_| lines += 1)
            .certain(&q, &db)
            .unwrap();
        assert!(names.contains(&"dissolve"));
        assert!(names.contains(&"gpurify"));
        assert!(lines > names.len());
    }
}
