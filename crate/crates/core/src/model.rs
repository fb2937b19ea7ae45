//! Queries, uncertain databases, valuations and blocks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{CqaError, Result};

/// A query variable.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: impl AsRef<str>) -> Self {
        Var(Arc::from(name.as_ref()))
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}", self.0)
    }
}

impl From<&str> for Var {
    fn from(s: &str) -> Self {
        Var::new(s)
    }
}

/// A database constant.
///
/// `Typed` wraps a constant with the variable whose type it was assigned
/// to; `Fresh` constants are minted by reductions (surrogate keys,
/// component identifiers) and already carry their type.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Plain(Arc<str>),
    Typed(Box<Value>, Var),
    Fresh(u64, Var),
}

impl Value {
    pub fn plain(s: impl AsRef<str>) -> Self {
        Value::Plain(Arc::from(s.as_ref()))
    }

    /// Assigns this constant to `type(var)`; constants already of that type
    /// are returned unchanged.
    pub fn typed(&self, var: &Var) -> Value {
        match self {
            Value::Typed(_, v) | Value::Fresh(_, v) if v == var => self.clone(),
            _ => Value::Typed(Box::new(self.clone()), var.clone()),
        }
    }

    pub(crate) fn fresh_id(&self) -> Option<u64> {
        match self {
            Value::Fresh(id, _) => Some(*id),
            Value::Typed(inner, _) => inner.fresh_id(),
            Value::Plain(_) => None,
        }
    }
}

pub(crate) fn is_bare_constant(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_digit() || c.is_uppercase() => {
            chars.all(|c| c.is_alphanumeric() || c == '_')
        }
        _ => false,
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Plain(s) if is_bare_constant(s) => f.write_str(s),
            Value::Plain(s) => write!(f, "'{s}'"),
            Value::Typed(inner, var) => write!(f, "{inner}@{var}"),
            Value::Fresh(id, var) => write!(f, "#{id}@{var}"),
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Term {
    Var(Var),
    Const(Value),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(Var::new(name))
    }

    pub fn constant(name: &str) -> Term {
        Term::Const(Value::plain(name))
    }

    pub fn as_var(&self) -> Option<&Var> {
        match self {
            Term::Var(v) => Some(v),
            Term::Const(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "{v}"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

/// `i` relations may violate their key; `c` relations never do.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum Mode {
    Inconsistent,
    Consistent,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct RelationDecl {
    pub name: String,
    pub arity: usize,
    pub key_len: usize,
    pub mode: Mode,
}

impl RelationDecl {
    pub fn new(name: impl Into<String>, arity: usize, key_len: usize, mode: Mode) -> Self {
        let name = name.into();
        assert!(
            key_len >= 1 && key_len <= arity,
            "relation {name}: key length {key_len} outside 1..={arity}"
        );
        RelationDecl {
            name,
            arity,
            key_len,
            mode,
        }
    }

    pub fn is_simple_key(&self) -> bool {
        self.key_len == 1
    }
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Atom {
    pub decl: RelationDecl,
    pub terms: Vec<Term>,
}

impl Atom {
    pub fn new(decl: RelationDecl, terms: Vec<Term>) -> Result<Self> {
        if terms.len() != decl.arity {
            return Err(CqaError::ArityMismatch {
                relation: decl.name,
                expected: decl.arity,
                found: terms.len(),
            });
        }
        Ok(Atom { decl, terms })
    }

    /// Builds an atom from variable/constant names; lowercase-initial names
    /// are variables.
    pub fn build(name: &str, key: &[&str], rest: &[&str], mode: Mode) -> Atom {
        let term = |s: &&str| {
            if s.starts_with(|c: char| c.is_lowercase()) {
                Term::var(s)
            } else {
                Term::constant(s.trim_matches('\''))
            }
        };
        let terms: Vec<Term> = key.iter().chain(rest).map(term).collect();
        let decl = RelationDecl::new(name, terms.len(), key.len(), mode);
        Atom { decl, terms }
    }

    pub fn relation(&self) -> &str {
        &self.decl.name
    }

    pub fn mode(&self) -> Mode {
        self.decl.mode
    }

    pub fn is_consistent(&self) -> bool {
        self.decl.mode == Mode::Consistent
    }

    pub fn key_terms(&self) -> &[Term] {
        &self.terms[..self.decl.key_len]
    }

    pub fn nonkey_terms(&self) -> &[Term] {
        &self.terms[self.decl.key_len..]
    }

    pub fn key_vars(&self) -> BTreeSet<Var> {
        self.key_terms().iter().filter_map(Term::as_var).cloned().collect()
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        self.terms.iter().filter_map(Term::as_var).cloned().collect()
    }

    /// Variables in order of first occurrence.
    pub fn vars_in_order(&self) -> Vec<Var> {
        let mut out: Vec<Var> = Vec::new();
        for v in self.terms.iter().filter_map(Term::as_var) {
            if !out.contains(v) {
                out.push(v.clone());
            }
        }
        out
    }

    pub fn has_constants(&self) -> bool {
        self.terms.iter().any(|t| matches!(t, Term::Const(_)))
    }

    pub fn apply(&self, theta: &Valuation) -> Atom {
        Atom {
            decl: self.decl.clone(),
            terms: self.terms.iter().map(|t| theta.apply_term(t)).collect(),
        }
    }

    pub fn rename_vars(&self, renaming: &BTreeMap<Var, Var>) -> Atom {
        let terms = self
            .terms
            .iter()
            .map(|t| match t {
                Term::Var(v) => Term::Var(renaming.get(v).unwrap_or(v).clone()),
                c => c.clone(),
            })
            .collect();
        Atom {
            decl: self.decl.clone(),
            terms,
        }
    }

    /// Extends `theta` so that the atom maps onto `tuple`, or returns `None`
    /// when constants or repeated variables disagree.
    pub fn match_tuple(&self, tuple: &[Value], theta: &Valuation) -> Option<Valuation> {
        debug_assert_eq!(tuple.len(), self.terms.len());
        let mut out = theta.clone();
        for (term, value) in self.terms.iter().zip(tuple) {
            match term {
                Term::Const(c) => {
                    if c != value {
                        return None;
                    }
                }
                Term::Var(v) => match out.get(v) {
                    Some(bound) if bound != value => return None,
                    Some(_) => {}
                    None => {
                        out.insert(v.clone(), value.clone());
                    }
                },
            }
        }
        Some(out)
    }

    /// Like [`Atom::match_tuple`] restricted to the key positions.
    pub fn match_key(&self, key: &[Value], theta: &Valuation) -> Option<Valuation> {
        let probe = Atom {
            decl: RelationDecl {
                key_len: key.len(),
                arity: key.len(),
                ..self.decl.clone()
            },
            terms: self.key_terms().to_vec(),
        };
        probe.match_tuple(key, theta)
    }

    /// The fact `theta(self)`, defined when every variable is bound.
    pub fn ground(&self, theta: &Valuation) -> Option<Vec<Value>> {
        self.terms
            .iter()
            .map(|t| match t {
                Term::Const(c) => Some(c.clone()),
                Term::Var(v) => theta.get(v).cloned(),
            })
            .collect()
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_consistent() {
            f.write_str("consistent ")?;
        }
        write!(f, "{}(", self.decl.name)?;
        let join = |ts: &[Term]| ts.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", ");
        f.write_str(&join(self.key_terms()))?;
        if self.decl.key_len < self.decl.arity {
            write!(f, " | {}", join(self.nonkey_terms()))?;
        }
        f.write_str(")")
    }
}

/// A self-join-free Boolean conjunctive query. Atom order is preserved.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Default)]
pub struct Query {
    atoms: Vec<Atom>,
}

impl Query {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for a in &atoms {
            if a.terms.len() != a.decl.arity {
                return Err(CqaError::ArityMismatch {
                    relation: a.decl.name.clone(),
                    expected: a.decl.arity,
                    found: a.terms.len(),
                });
            }
            if !seen.insert(a.relation()) {
                return Err(CqaError::SelfJoin(a.relation().to_string()));
            }
        }
        Ok(Query { atoms })
    }

    pub fn empty() -> Self {
        Query::default()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom(&self, relation: &str) -> Option<&Atom> {
        self.atoms.iter().find(|a| a.relation() == relation)
    }

    pub fn position(&self, relation: &str) -> Option<usize> {
        self.atoms.iter().position(|a| a.relation() == relation)
    }

    /// Index of `atom` in the query, checking that the atom matches exactly.
    pub fn index_of(&self, atom: &Atom) -> Result<usize> {
        match self.position(atom.relation()) {
            Some(i) if &self.atoms[i] == atom => Ok(i),
            _ => Err(CqaError::AtomNotInQuery(atom.to_string())),
        }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        self.atoms.iter().flat_map(|a| a.vars()).collect()
    }

    pub fn vars_in_order(&self) -> Vec<Var> {
        let mut out: Vec<Var> = Vec::new();
        for a in &self.atoms {
            for v in a.vars_in_order() {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
        }
        out
    }

    /// Mode-c atoms.
    pub fn consistent_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.atoms.iter().filter(|a| a.is_consistent())
    }

    /// Number of mode-i atoms.
    pub fn icard(&self) -> usize {
        self.atoms.iter().filter(|a| !a.is_consistent()).count()
    }

    pub fn without(&self, index: usize) -> Query {
        let mut atoms = self.atoms.clone();
        atoms.remove(index);
        Query { atoms }
    }

    pub fn apply(&self, theta: &Valuation) -> Query {
        Query {
            atoms: self.atoms.iter().map(|a| a.apply(theta)).collect(),
        }
    }

    pub fn rename_vars(&self, renaming: &BTreeMap<Var, Var>) -> Query {
        Query {
            atoms: self.atoms.iter().map(|a| a.rename_vars(renaming)).collect(),
        }
    }

    /// Relation declarations of the query, keyed by name.
    pub fn schema(&self) -> BTreeMap<String, RelationDecl> {
        self.atoms
            .iter()
            .map(|a| (a.decl.name.clone(), a.decl.clone()))
            .collect()
    }

    pub(crate) fn from_atoms_unchecked(atoms: Vec<Atom>) -> Query {
        debug_assert!(Query::new(atoms.clone()).is_ok());
        Query { atoms }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.atoms {
            writeln!(f, "{a}")?;
        }
        Ok(())
    }
}

/// Replaces every occurrence of `xs[i]` by `values[i]`.
pub fn substitute(q: &Query, xs: &[Var], values: &[Value]) -> Result<Query> {
    if xs.len() != values.len() {
        return Err(CqaError::LengthMismatch {
            vars: xs.len(),
            values: values.len(),
        });
    }
    let mut theta = Valuation::new();
    for (x, a) in xs.iter().zip(values) {
        if theta.insert(x.clone(), a.clone()).is_some() {
            return Err(CqaError::Precondition(format!(
                "variable {x} listed twice in substitution"
            )));
        }
    }
    Ok(q.apply(&theta))
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Fact {
    pub relation: String,
    pub values: Vec<Value>,
}

impl Fact {
    pub fn new(relation: impl Into<String>, values: Vec<Value>) -> Self {
        Fact {
            relation: relation.into(),
            values,
        }
    }

    /// Convenience constructor from plain constant names.
    pub fn plain(relation: &str, values: &[&str]) -> Self {
        Fact::new(relation, values.iter().map(Value::plain).collect())
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vals: Vec<String> = self
            .values
            .iter()
            .map(|v| match v {
                Value::Plain(s) if s.chars().all(|c| c.is_alphanumeric() || c == '_') => {
                    s.to_string()
                }
                other => other.to_string(),
            })
            .collect();
        write!(f, "{}({})", self.relation, vals.join(", "))
    }
}

/// A maximal set of key-equal facts.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Block {
    pub relation: String,
    pub key: Vec<Value>,
    pub tuples: Vec<Vec<Value>>,
}

impl Block {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.tuples
            .iter()
            .map(|t| Fact::new(self.relation.clone(), t.clone()))
    }
}

/// An uncertain database over a fixed schema.
///
/// Tuples of a relation are kept sorted, so key-equal facts are adjacent
/// and blocks come out ordered by key value.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Database {
    schema: BTreeMap<String, RelationDecl>,
    relations: BTreeMap<String, BTreeSet<Vec<Value>>>,
}

impl Database {
    pub fn new(schema: BTreeMap<String, RelationDecl>) -> Self {
        let relations = schema.keys().map(|k| (k.clone(), BTreeSet::new())).collect();
        Database { schema, relations }
    }

    pub fn for_query(q: &Query) -> Self {
        Database::new(q.schema())
    }

    pub fn from_facts(q: &Query, facts: impl IntoIterator<Item = Fact>) -> Result<Self> {
        let mut db = Database::for_query(q);
        for f in facts {
            db.insert(f)?;
        }
        Ok(db)
    }

    pub fn schema(&self) -> &BTreeMap<String, RelationDecl> {
        &self.schema
    }

    pub fn decl(&self, relation: &str) -> Option<&RelationDecl> {
        self.schema.get(relation)
    }

    pub fn declare(&mut self, decl: RelationDecl) {
        self.relations.entry(decl.name.clone()).or_default();
        self.schema.insert(decl.name.clone(), decl);
    }

    pub fn insert(&mut self, fact: Fact) -> Result<bool> {
        let decl = self
            .schema
            .get(&fact.relation)
            .ok_or_else(|| CqaError::UnknownRelation(fact.relation.clone()))?;
        if decl.arity != fact.values.len() {
            return Err(CqaError::ArityMismatch {
                relation: fact.relation,
                expected: decl.arity,
                found: fact.values.len(),
            });
        }
        Ok(self
            .relations
            .get_mut(&fact.relation)
            .expect("declared relation")
            .insert(fact.values))
    }

    pub(crate) fn insert_tuple(&mut self, relation: &str, tuple: Vec<Value>) {
        debug_assert_eq!(self.schema[relation].arity, tuple.len());
        self.relations
            .get_mut(relation)
            .expect("declared relation")
            .insert(tuple);
    }

    pub fn tuples(&self, relation: &str) -> impl Iterator<Item = &Vec<Value>> {
        self.relations.get(relation).into_iter().flatten()
    }

    /// Tuples whose leading values equal `prefix`.
    pub fn tuples_with_prefix<'a>(
        &'a self,
        relation: &str,
        prefix: &'a [Value],
    ) -> impl Iterator<Item = &'a Vec<Value>> + 'a {
        self.relations
            .get(relation)
            .into_iter()
            .flat_map(move |set| {
                set.range(prefix.to_vec()..)
                    .take_while(move |t| t.starts_with(prefix))
            })
    }

    pub fn contains(&self, relation: &str, tuple: &[Value]) -> bool {
        self.relations
            .get(relation)
            .is_some_and(|s| s.contains(tuple))
    }

    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.relations
            .iter()
            .flat_map(|(r, ts)| ts.iter().map(move |t| Fact::new(r.clone(), t.clone())))
    }

    pub fn len(&self) -> usize {
        self.relations.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn relation_len(&self, relation: &str) -> usize {
        self.relations.get(relation).map_or(0, BTreeSet::len)
    }

    /// Blocks of `relation` sorted by key value.
    pub fn blocks(&self, relation: &str) -> Result<Vec<Block>> {
        let decl = self
            .schema
            .get(relation)
            .ok_or_else(|| CqaError::UnknownRelation(relation.to_string()))?;
        let k = decl.key_len;
        let mut out: Vec<Block> = Vec::new();
        for t in self.tuples(relation) {
            match out.last_mut() {
                Some(b) if b.key[..] == t[..k] => b.tuples.push(t.clone()),
                _ => out.push(Block {
                    relation: relation.to_string(),
                    key: t[..k].to_vec(),
                    tuples: vec![t.clone()],
                }),
            }
        }
        Ok(out)
    }

    /// Blocks of every relation, ordered by (relation, key).
    pub fn all_blocks(&self) -> Vec<Block> {
        self.schema
            .keys()
            .flat_map(|r| self.blocks(r).expect("declared relation"))
            .collect()
    }

    pub fn is_consistent(&self) -> bool {
        self.all_blocks().iter().all(|b| b.len() == 1)
    }

    /// Checks that every mode-c relation is consistent.
    pub fn check_consistent_relations(&self) -> Result<()> {
        for (name, decl) in &self.schema {
            if decl.mode != Mode::Consistent {
                continue;
            }
            for b in self.blocks(name)? {
                if b.len() > 1 {
                    let key: Vec<String> = b.key.iter().map(|v| v.to_string()).collect();
                    return Err(CqaError::InconsistentConsistentRelation {
                        relation: name.clone(),
                        key: key.join(", "),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn active_domain(&self) -> BTreeSet<Value> {
        self.relations
            .values()
            .flatten()
            .flat_map(|t| t.iter().cloned())
            .collect()
    }

    /// Keeps the facts for which `keep` returns true.
    pub fn retain(&mut self, mut keep: impl FnMut(&str, &[Value]) -> bool) {
        for (r, ts) in self.relations.iter_mut() {
            ts.retain(|t| keep(r, t));
        }
    }

    pub fn filtered(&self, mut keep: impl FnMut(&str, &[Value]) -> bool) -> Database {
        let mut out = self.clone();
        out.retain(|r, t| keep(r, t));
        out
    }

    /// Copy restricted to the relations of `q`, with the schema of `q`.
    pub fn restrict_to(&self, q: &Query) -> Database {
        let mut out = Database::for_query(q);
        for a in q.atoms() {
            if let Some(ts) = self.relations.get(a.relation()) {
                out.relations.insert(a.relation().to_string(), ts.clone());
            }
        }
        out
    }

    pub fn remove_relation(&mut self, relation: &str) {
        self.schema.remove(relation);
        self.relations.remove(relation);
    }

    pub fn is_subset_of(&self, other: &Database) -> bool {
        self.relations
            .iter()
            .all(|(r, ts)| ts.iter().all(|t| other.contains(r, t)))
    }
}

impl fmt::Display for Database {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for fact in self.facts() {
            writeln!(f, "{fact}")?;
        }
        Ok(())
    }
}

/// A partial map from variables to constants; identity elsewhere.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Default)]
pub struct Valuation(BTreeMap<Var, Value>);

impl Valuation {
    pub fn new() -> Self {
        Valuation::default()
    }

    pub fn get(&self, v: &Var) -> Option<&Value> {
        self.0.get(v)
    }

    pub fn insert(&mut self, v: Var, value: Value) -> Option<Value> {
        self.0.insert(v, value)
    }

    pub fn contains(&self, v: &Var) -> bool {
        self.0.contains_key(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Value)> {
        self.0.iter()
    }

    pub fn apply_term(&self, t: &Term) -> Term {
        match t {
            Term::Var(v) => match self.0.get(v) {
                Some(c) => Term::Const(c.clone()),
                None => t.clone(),
            },
            c => c.clone(),
        }
    }

    /// Restriction to `vars`.
    pub fn restrict<'a>(&self, vars: impl IntoIterator<Item = &'a Var>) -> Valuation {
        Valuation(
            vars.into_iter()
                .filter_map(|v| self.0.get(v).map(|c| (v.clone(), c.clone())))
                .collect(),
        )
    }

    /// True when both valuations agree on every variable they share.
    pub fn agrees_with(&self, other: &Valuation) -> bool {
        self.0
            .iter()
            .all(|(v, c)| other.0.get(v).is_none_or(|d| d == c))
    }
}

impl FromIterator<(Var, Value)> for Valuation {
    fn from_iter<I: IntoIterator<Item = (Var, Value)>>(iter: I) -> Self {
        Valuation(iter.into_iter().collect())
    }
}
