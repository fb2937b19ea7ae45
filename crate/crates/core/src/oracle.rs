//! Exhaustive repair enumeration.

use crate::error::{CqaError, Result};
use crate::eval::eval_bcq;
use crate::model::{Block, Database, Query};

/// Default bound on the number of repairs the oracle will enumerate.
pub const DEFAULT_CAP: u128 = 1 << 20;

fn product(blocks: &[Block], cap: u128) -> Result<u128> {
    let mut count: u128 = 1;
    for b in blocks {
        count = count.saturating_mul(b.len() as u128);
        if count > cap {
            let exact = blocks
                .iter()
                .try_fold(1u128, |acc, b| acc.checked_mul(b.len() as u128));
            return Err(CqaError::RepairSpaceTooLarge {
                count: exact.map_or_else(|| "more than 2^128".to_string(), |c| c.to_string()),
                cap,
            });
        }
    }
    Ok(count)
}

/// Number of repairs of `db`: the product of the block sizes.
pub fn count_repairs(db: &Database, cap: u128) -> Result<u128> {
    product(&db.all_blocks(), cap)
}

/// Mixed-radix counter over the blocks of a database, ordered by
/// (relation, key). Each position selects one tuple of its block.
#[derive(Clone, Debug)]
pub struct RepairCursor {
    base: Database,
    blocks: Vec<Block>,
    choice: Vec<usize>,
    done: bool,
}

impl RepairCursor {
    /// Enumerates every repair of `db`.
    pub fn new(db: &Database, cap: u128) -> Result<Self> {
        Self::over(db, db.all_blocks(), cap)
    }

    /// Enumerates repairs of the non-singleton blocks of the relations in
    /// `q`; all other facts of `db` are kept in every yielded database.
    fn for_query(q: &Query, db: &Database, cap: u128) -> Result<Self> {
        let blocks: Vec<Block> = q
            .atoms()
            .iter()
            .filter_map(|a| db.blocks(a.relation()).ok())
            .flatten()
            .filter(|b| b.len() > 1)
            .collect();
        Self::over(db, blocks, cap)
    }

    fn over(db: &Database, blocks: Vec<Block>, cap: u128) -> Result<Self> {
        product(&blocks, cap)?;
        let mut base = db.clone();
        base.retain(|r, t| {
            !blocks
                .iter()
                .any(|b| b.relation == r && t.starts_with(&b.key))
        });
        Ok(RepairCursor {
            choice: vec![0; blocks.len()],
            base,
            blocks,
            done: false,
        })
    }

    /// Returns to the first repair.
    pub fn restart(&mut self) {
        self.choice.iter_mut().for_each(|c| *c = 0);
        self.done = false;
    }

    pub fn choices(&self) -> &[usize] {
        &self.choice
    }

    fn current(&self) -> Database {
        let mut r = self.base.clone();
        for (b, &c) in self.blocks.iter().zip(&self.choice) {
            r.insert_tuple(&b.relation, b.tuples[c].clone());
        }
        r
    }

    fn advance(&mut self) {
        for (i, b) in self.blocks.iter().enumerate() {
            self.choice[i] += 1;
            if self.choice[i] < b.len() {
                return;
            }
            self.choice[i] = 0;
        }
        self.done = true;
    }
}

impl Iterator for RepairCursor {
    type Item = Database;

    fn next(&mut self) -> Option<Database> {
        if self.done {
            return None;
        }
        let r = self.current();
        self.advance();
        Some(r)
    }
}

pub fn repairs(db: &Database, cap: u128) -> Result<RepairCursor> {
    RepairCursor::new(db, cap)
}

/// True iff every repair of `db` satisfies `q`.
pub fn certain_oracle(q: &Query, db: &Database) -> Result<bool> {
    certain_oracle_capped(q, db, DEFAULT_CAP)
}

pub fn certain_oracle_capped(q: &Query, db: &Database, cap: u128) -> Result<bool> {
    Ok(falsifier(q, db, cap)?.is_none())
}

fn falsifier(q: &Query, db: &Database, cap: u128) -> Result<Option<Database>> {
    let db = db.restrict_to(q);
    Ok(RepairCursor::for_query(q, &db, cap)?.find(|r| !eval_bcq(q, r)))
}

/// The first repair, in block order, that falsifies `q`.
pub fn falsifying_repair(q: &Query, db: &Database) -> Result<Option<Database>> {
    falsifying_repair_capped(q, db, DEFAULT_CAP)
}

pub fn falsifying_repair_capped(q: &Query, db: &Database, cap: u128) -> Result<Option<Database>> {
    let mut cursor = RepairCursor::new(db, cap)?;
    Ok(cursor.find(|r| !eval_bcq(q, r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Fact;
    use crate::parse::{parse_database, parse_query};
    use proptest::prelude::*;

    fn setup(q: &str, db: &str) -> (Query, Database) {
        let q = parse_query(q).unwrap();
        let db = parse_database(db, &q).unwrap();
        (q, db)
    }

    #[test]
    fn counts() {
        let (_, db) = setup("R(x|y)", "R(1,a)\nR(2,b)");
        assert_eq!(count_repairs(&db, DEFAULT_CAP).unwrap(), 1);
        let (_, db) = setup("R(x|y)", "R(1,a)\nR(1,b)\nR(2,a)\nR(2,b)\nR(3,a)\nR(3,b)");
        assert_eq!(count_repairs(&db, DEFAULT_CAP).unwrap(), 8);
        assert!(matches!(
            count_repairs(&db, 7),
            Err(CqaError::RepairSpaceTooLarge { cap: 7, .. })
        ));
    }

    #[test]
    fn empty_db_is_not_certain() {
        let (q, db) = setup("R(x|y)", "");
        assert!(!certain_oracle(&q, &db).unwrap());
        let falsifier = falsifying_repair(&q, &db).unwrap().unwrap();
        assert!(falsifier.is_empty());
    }

    #[test]
    fn path_database_is_not_certain() {
        let (q, db) = setup("R0(x|y)\nS0(y|x)", "R0(1,a)\nR0(1,b)\nS0(a,1)\nS0(b,2)");
        assert!(!certain_oracle(&q, &db).unwrap());
        let r = falsifying_repair(&q, &db).unwrap().unwrap();
        assert!(r.contains("R0", &[crate::Value::plain("1"), crate::Value::plain("b")]));
    }

    #[test]
    fn consistent_satisfying_db_has_no_falsifier() {
        let (q, db) = setup("R(x|y)\nS(y|x)", "R(1,a)\nS(a,1)");
        assert!(falsifying_repair(&q, &db).unwrap().is_none());
    }

    #[test]
    fn cursor_restarts() {
        let (_, db) = setup("R(x|y)", "R(1,a)\nR(1,b)\nR(2,c)\nR(2,d)");
        let mut c = RepairCursor::new(&db, DEFAULT_CAP).unwrap();
        let first: Vec<Database> = c.by_ref().collect();
        assert_eq!(first.len(), 4);
        c.restart();
        let second: Vec<Database> = c.collect();
        assert_eq!(first, second);
    }

    proptest! {
        #[test]
        fn repairs_pick_one_fact_per_block(rows in prop::collection::vec((0u8..3, 0u8..3), 0..9)) {
            let q = parse_query("R(x|y)").unwrap();
            let mut db = Database::for_query(&q);
            for (a, b) in rows {
                db.insert(Fact::plain("R", &[&a.to_string(), &b.to_string()])).unwrap();
            }
            let blocks = db.all_blocks();
            let n = count_repairs(&db, DEFAULT_CAP).unwrap();
            let all: Vec<Database> = repairs(&db, DEFAULT_CAP).unwrap().collect();
            prop_assert_eq!(all.len() as u128, n);
            for r in &all {
                prop_assert!(r.is_consistent());
                prop_assert!(r.is_subset_of(&db));
                for b in &blocks {
                    let hits = b.tuples.iter().filter(|t| r.contains(&b.relation, t)).count();
                    prop_assert_eq!(hits, 1);
                }
            }
        }
    }
}
