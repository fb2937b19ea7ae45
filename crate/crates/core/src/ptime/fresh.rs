//! Fresh relation names, variables and constants.
//!
//! Generated names carry a `$n` suffix; a namer starts above every suffix
//! already present in the query, so names never clash with user input
//! (which cannot contain `$`) or with earlier reductions. Fresh constant
//! ids start above every id present in the query and the database.

use crate::model::{Database, Query, Term, Value, Var};

fn suffix(name: &str) -> Option<u64> {
    name.rsplit_once('$').and_then(|(_, n)| n.parse().ok())
}

/// Part of a name before any generated suffix.
pub(crate) fn base(name: &str) -> &str {
    name.split('$').next().unwrap_or(name)
}

#[derive(Debug, Clone)]
pub(crate) struct Namer {
    next: u64,
}

impl Namer {
    pub(crate) fn for_query(q: &Query) -> Self {
        let mut max = 0;
        for a in q.atoms() {
            max = max.max(suffix(a.relation()).unwrap_or(0));
            for t in &a.terms {
                if let Term::Var(v) = t {
                    max = max.max(suffix(v.name()).unwrap_or(0));
                }
            }
        }
        Namer { next: max + 1 }
    }

    fn bump(&mut self) -> u64 {
        let n = self.next;
        self.next += 1;
        n
    }

    pub(crate) fn relation(&mut self, base_name: &str) -> String {
        format!("{}${}", base(base_name), self.bump())
    }

    pub(crate) fn var(&mut self, base_name: &str) -> Var {
        Var::new(format!("{}${}", base(base_name), self.bump()))
    }
}

/// Supplies constant ids not used anywhere in `q` or `db`.
#[derive(Debug, Clone)]
pub(crate) struct ValueSupply {
    next: u64,
}

impl ValueSupply {
    pub(crate) fn new(q: &Query, db: &Database) -> Self {
        let in_query = q.atoms().iter().flat_map(|a| &a.terms).filter_map(|t| match t {
            Term::Const(c) => c.fresh_id(),
            Term::Var(_) => None,
        });
        let in_db = db.facts().flat_map(|f| f.values).filter_map(|v| v.fresh_id());
        let max = in_query.chain(in_db).max();
        ValueSupply {
            next: max.map_or(0, |m| m + 1),
        }
    }

    pub(crate) fn mint(&mut self, var: &Var) -> Value {
        let v = Value::Fresh(self.next, var.clone());
        self.next += 1;
        v
    }
}
