use std::collections::{BTreeMap, BTreeSet};

use super::purify::purify;
use crate::error::{CqaError, Result};
use crate::eval::eval_bcq;
use crate::model::{Block, Database, Query, Value};

/// Default bound on the repairs of one gblock.
pub const DEFAULT_GBLOCK_CAP: u128 = 1 << 20;

/// Inconsistent-relation facts of `db` grouped by their key tuple, across
/// relations. Each group is listed as its per-relation blocks.
pub fn gblocks(q: &Query, db: &Database) -> Vec<Vec<Block>> {
    let mut groups: BTreeMap<Vec<Value>, Vec<Block>> = BTreeMap::new();
    for a in q.atoms().iter().filter(|a| !a.is_consistent()) {
        for b in db.blocks(a.relation()).unwrap_or_default() {
            groups.entry(b.key.clone()).or_default().push(b);
        }
    }
    groups.into_values().collect()
}

/// True when some repair of `group` is not grelevant: replacing the
/// facts of its relations by the repair alone falsifies `q`.
fn falsifying_choice(q: &Query, db: &Database, group: &[Block], cap: u128) -> Result<bool> {
    let count = group
        .iter()
        .try_fold(1u128, |acc, b| acc.checked_mul(b.len() as u128).filter(|&c| c <= cap));
    let Some(count) = count else {
        return Err(CqaError::RepairSpaceTooLarge {
            count: format!("more than {cap} for one gblock"),
            cap,
        });
    };
    let relations: BTreeSet<&str> = group.iter().map(|b| b.relation.as_str()).collect();
    let rest = db.filtered(|r, _| !relations.contains(r));
    let mut choice = vec![0usize; group.len()];
    for _ in 0..count {
        let mut probe = rest.clone();
        for (b, &c) in group.iter().zip(&choice) {
            probe.insert_tuple(&b.relation, b.tuples[c].clone());
        }
        if !eval_bcq(q, &probe) {
            return Ok(true);
        }
        for (slot, b) in choice.iter_mut().zip(group) {
            *slot += 1;
            if *slot < b.len() {
                break;
            }
            *slot = 0;
        }
    }
    Ok(false)
}

/// Deletes gblocks having a repair that is not grelevant, purifying after
/// each deletion, until every gblock is grelevant throughout.
pub fn gpurify(q: &Query, db: &Database) -> Result<Database> {
    gpurify_capped(q, db, DEFAULT_GBLOCK_CAP)
}

pub fn gpurify_capped(q: &Query, db: &Database, cap: u128) -> Result<Database> {
    if let Some(r) = db.schema().keys().find(|r| q.atom(r).is_none()) {
        return Err(CqaError::Shape(format!("relation {r} does not occur in the query")));
    }
    let mut cur = purify(q, db);
    'outer: loop {
        for group in gblocks(q, &cur) {
            if falsifying_choice(q, &cur, &group, cap)? {
                let doomed: BTreeSet<(&str, &[Value])> = group
                    .iter()
                    .flat_map(|b| b.tuples.iter().map(move |t| (b.relation.as_str(), t.as_slice())))
                    .collect();
                let next = cur.filtered(|r, t| !doomed.contains(&(r, t)));
                cur = purify(q, &next);
                continue 'outer;
            }
        }
        return Ok(cur);
    }
}

/// True when no gblock of `db` has a repair that fails to be grelevant.
pub fn is_gpurified(q: &Query, db: &Database) -> Result<bool> {
    for group in gblocks(q, db) {
        if falsifying_choice(q, db, &group, DEFAULT_GBLOCK_CAP)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::certain_oracle;
    use crate::parse::{parse_database, parse_query};

    #[test]
    fn drops_gblock_with_irrelevant_choice() {
        // The gblock keyed 1 spans R and S; choosing R(1, a) with S(1, q)
        // leaves no embedding, so all four facts go.
        let q = parse_query("R(x | y)\nS(x | z)\nconsistent C(y | z)").unwrap();
        let db = parse_database(
            "R(1, a)\nR(1, b)\nS(1, p)\nS(1, q)\nC(a, p)\nC(b, q)\nR(2, c)\nS(2, r)\nC(c, r)",
            &q,
        )
        .unwrap();
        assert!(!is_gpurified(&q, &db).unwrap());
        let g = gpurify(&q, &db).unwrap();
        assert_eq!(g.len(), 3);
        assert!(is_gpurified(&q, &g).unwrap());
        assert_eq!(certain_oracle(&q, &db).unwrap(), certain_oracle(&q, &g).unwrap());
    }

    #[test]
    fn foreign_relation_is_shape_error() {
        let q = parse_query("R(x | y)").unwrap();
        let other = parse_query("S(x | y)").unwrap();
        let db = parse_database("S(1, 2)", &other).unwrap();
        assert!(matches!(gpurify(&q, &db), Err(CqaError::Shape(_))));
    }
}
