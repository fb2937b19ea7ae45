//! Functional dependencies induced by a query.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;

use crate::error::{CqaError, Result};
use crate::model::{Atom, Query, Var};

pub type VarSet = BTreeSet<Var>;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct FunctionalDependency {
    pub lhs: VarSet,
    pub rhs: VarSet,
}

impl fmt::Display for FunctionalDependency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", fmt_vars(&self.lhs), fmt_vars(&self.rhs))
    }
}

/// Formats a variable set as `{x, y}`.
pub fn fmt_vars<'a>(vars: impl IntoIterator<Item = &'a Var>) -> String {
    let names: Vec<&str> = vars.into_iter().map(Var::name).collect();
    format!("{{{}}}", names.join(", "))
}

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct FdSet {
    pub deps: Vec<FunctionalDependency>,
}

impl FdSet {
    pub fn new(deps: Vec<FunctionalDependency>) -> Self {
        FdSet { deps }
    }

    pub fn len(&self) -> usize {
        self.deps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deps.is_empty()
    }

    /// Attribute closure of `x`.
    pub fn closure(&self, x: &VarSet) -> VarSet {
        let mut missing: Vec<usize> = Vec::with_capacity(self.deps.len());
        let mut waiting: BTreeMap<&Var, Vec<usize>> = BTreeMap::new();
        let mut out = x.clone();
        let mut queue: VecDeque<usize> = VecDeque::new();
        for (i, d) in self.deps.iter().enumerate() {
            let m = d.lhs.iter().filter(|v| !x.contains(*v)).count();
            missing.push(m);
            if m == 0 {
                queue.push_back(i);
            }
            for v in d.lhs.iter().filter(|v| !x.contains(*v)) {
                waiting.entry(v).or_default().push(i);
            }
        }
        while let Some(i) = queue.pop_front() {
            for v in &self.deps[i].rhs {
                if out.insert(v.clone()) {
                    for &j in waiting.get(v).into_iter().flatten() {
                        missing[j] -= 1;
                        if missing[j] == 0 {
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        out
    }

    /// True iff the dependencies imply `x -> y`.
    pub fn implies(&self, x: &VarSet, y: &VarSet) -> bool {
        y.is_subset(x) || y.is_subset(&self.closure(x))
    }
}

impl fmt::Display for FdSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.deps {
            writeln!(f, "{d}")?;
        }
        Ok(())
    }
}

/// One dependency `keyVars(F) -> vars(F)` per atom.
pub fn fd_of_query<'a>(atoms: impl IntoIterator<Item = &'a Atom>) -> FdSet {
    FdSet::new(
        atoms
            .into_iter()
            .map(|a| FunctionalDependency {
                lhs: a.key_vars(),
                rhs: a.vars(),
            })
            .collect(),
    )
}

pub fn closure(fds: &FdSet, x: &VarSet) -> VarSet {
    fds.closure(x)
}

pub fn implies(fds: &FdSet, x: &VarSet, y: &VarSet) -> bool {
    fds.implies(x, y)
}

/// Dependencies of every atom except `skip`, plus those of the mode-c atoms.
pub(crate) fn fd_without(q: &Query, skip: usize) -> FdSet {
    fd_of_query(
        q.atoms()
            .iter()
            .enumerate()
            .filter(|(i, a)| *i != skip || a.is_consistent())
            .map(|(_, a)| a),
    )
}

/// `K(F,q)` when `plus` is false, `K+(F,q)` when true.
pub fn k_closure(q: &Query, f: &Atom, plus: bool) -> Result<VarSet> {
    let i = q.index_of(f)?;
    Ok(k_closure_at(q, i, plus))
}

pub(crate) fn k_closure_at(q: &Query, i: usize, plus: bool) -> VarSet {
    let fds = if plus { fd_of_query(q.atoms()) } else { fd_without(q, i) };
    fds.closure(&q.atoms()[i].key_vars())
}

/// Checks the two conditions of a sequential proof of `FD(q) |= X -> y`.
pub fn is_sequential_proof(x: &VarSet, y: &Var, proof: &[Atom]) -> bool {
    let mut known = x.clone();
    for h in proof {
        if !h.key_vars().is_subset(&known) {
            return false;
        }
        known.extend(h.vars());
    }
    known.contains(y)
}

/// A shortest sequential proof of `FD(q) |= X -> y`, if the dependency holds.
pub fn sequential_proof(q: &Query, x: &VarSet, y: &Var) -> Option<Vec<Atom>> {
    if x.contains(y) {
        return Some(Vec::new());
    }
    let atoms = q.atoms();
    let mut seen: HashSet<VarSet> = HashSet::new();
    seen.insert(x.clone());
    let mut frontier: VecDeque<(VarSet, Vec<usize>)> = VecDeque::from([(x.clone(), Vec::new())]);
    while let Some((known, path)) = frontier.pop_front() {
        for (i, a) in atoms.iter().enumerate() {
            if !a.key_vars().is_subset(&known) || a.vars().is_subset(&known) {
                continue;
            }
            let mut next = known.clone();
            next.extend(a.vars());
            let mut p = path.clone();
            p.push(i);
            if next.contains(y) {
                return Some(p.into_iter().map(|j| atoms[j].clone()).collect());
            }
            if seen.insert(next.clone()) {
                frontier.push_back((next, p));
            }
        }
    }
    None
}

/// Checks that `var` occurs in `q`.
pub(crate) fn check_var(q: &Query, var: &Var) -> Result<()> {
    if q.vars().contains(var) {
        Ok(())
    } else {
        Err(CqaError::UnknownVariable(var.to_string()))
    }
}

pub fn vars<const N: usize>(names: [&str; N]) -> VarSet {
    names.into_iter().map(Var::new).collect()
}
