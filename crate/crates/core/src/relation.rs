//! Bag-semantics relations.
//!
//! A [`Relation`] stores each distinct tuple once together with its
//! multiplicity (`cnt`). Tuples are dictionary-encoded through a shared
//! [`ValueDict`] and kept sorted by their value-id tuple, which makes every
//! derived relation byte-stable.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use rustc_hash::FxHashMap;
use smallvec::SmallVec;
use thiserror::Error;

/// Tuple multiplicity and sensitivity values.
pub type Count = u128;

/// A dictionary-encoded tuple.
pub type Tuple = SmallVec<[ValueId; 4]>;

/// Schema and rows of a relation with values resolved to strings.
pub type ResolvedRelation = (Vec<String>, BTreeMap<Vec<String>, Count>);

/// Dense id of an interned attribute value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValueId(pub u32);

impl ValueId {
    /// Placeholder value `*`, used when a free attribute has no active value.
    pub const SENTINEL: ValueId = ValueId(u32::MAX);
}

impl fmt::Display for ValueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Spelling of [`ValueId::SENTINEL`].
pub const SENTINEL_TEXT: &str = "*";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelationError {
    #[error("relation {relation}: tuple has arity {found}, schema has {expected}")]
    ArityMismatch {
        relation: String,
        expected: usize,
        found: usize,
    },
    #[error("relation {relation}: multiplicity must be at least 1")]
    ZeroCount { relation: String },
    #[error("relation {relation}: duplicate attribute {attr} in schema")]
    DuplicateAttribute { relation: String, attr: String },
    #[error("relation {relation}: unknown attribute {attr}")]
    UnknownAttribute { relation: String, attr: String },
    #[error("count overflow in {context}")]
    Overflow { context: String },
    #[error("intermediate result exceeds the row budget of {limit} rows ({context})")]
    MemoryBudget { limit: usize, context: String },
}

/// Interned strings with dense ids issued in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValueDict {
    values: Vec<String>,
    ids: HashMap<String, ValueId>,
}

impl ValueDict {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, value: &str) -> ValueId {
        if value == SENTINEL_TEXT {
            return ValueId::SENTINEL;
        }
        if let Some(id) = self.ids.get(value) {
            return *id;
        }
        let id = ValueId(self.values.len() as u32);
        self.values.push(value.to_owned());
        self.ids.insert(value.to_owned(), id);
        id
    }

    pub fn get(&self, value: &str) -> Option<ValueId> {
        if value == SENTINEL_TEXT {
            return Some(ValueId::SENTINEL);
        }
        self.ids.get(value).copied()
    }

    pub fn resolve(&self, id: ValueId) -> &str {
        if id == ValueId::SENTINEL {
            return SENTINEL_TEXT;
        }
        &self.values[id.0 as usize]
    }

    pub fn resolve_tuple(&self, tuple: &[ValueId]) -> Vec<String> {
        tuple.iter().map(|v| self.resolve(*v).to_owned()).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A canonical bag relation: distinct tuples in ascending value-id order,
/// each with a multiplicity of at least one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relation {
    name: String,
    schema: Vec<String>,
    rows: Arc<Vec<(Tuple, Count)>>,
}

impl Relation {
    /// Merge duplicate tuples (summing their counts) into a canonical relation.
    pub fn canonicalize<I>(name: impl Into<String>, schema: Vec<String>, raw: I) -> Result<Relation, RelationError>
    where
        I: IntoIterator<Item = (Tuple, Count)>,
    {
        let name = name.into();
        check_schema(&name, &schema)?;
        let mut rows: Vec<(Tuple, Count)> = Vec::new();
        for (tuple, cnt) in raw {
            if tuple.len() != schema.len() {
                return Err(RelationError::ArityMismatch {
                    relation: name,
                    expected: schema.len(),
                    found: tuple.len(),
                });
            }
            if cnt == 0 {
                return Err(RelationError::ZeroCount { relation: name });
            }
            rows.push((tuple, cnt));
        }
        let context = format!("canonicalizing {name}");
        let rows = merge_sorted(rows, &context)?;
        Ok(Relation {
            name,
            schema,
            rows: Arc::new(rows),
        })
    }

    /// Builds a relation from rows that are already sorted, distinct and positive.
    fn from_canonical(name: String, schema: Vec<String>, rows: Vec<(Tuple, Count)>) -> Relation {
        debug_assert!(rows.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(rows.iter().all(|(t, c)| *c > 0 && t.len() == schema.len()));
        Relation {
            name,
            schema,
            rows: Arc::new(rows),
        }
    }

    pub fn empty(name: impl Into<String>, schema: Vec<String>) -> Relation {
        Relation {
            name: name.into(),
            schema,
            rows: Arc::default(),
        }
    }

    /// The nullary relation holding one empty tuple with count 1; the identity of `cnt_join`.
    pub fn unit() -> Relation {
        Relation {
            name: String::new(),
            schema: Vec::new(),
            rows: Arc::new(vec![(Tuple::new(), 1)]),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn arity(&self) -> usize {
        self.schema.len()
    }

    pub fn rows(&self) -> &[(Tuple, Count)] {
        &self.rows
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[ValueId], Count)> + '_ {
        self.rows.iter().map(|(t, c)| (t.as_slice(), *c))
    }

    /// Number of distinct tuples.
    pub fn distinct_len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Sum of all multiplicities.
    pub fn total(&self) -> Result<Count, RelationError> {
        self.rows.iter().try_fold(0u128, |acc, (_, c)| {
            acc.checked_add(*c).ok_or_else(|| RelationError::Overflow {
                context: format!("total count of {}", self.name),
            })
        })
    }

    pub fn count_of(&self, tuple: &[ValueId]) -> Count {
        match self.rows.binary_search_by(|(t, _)| t.as_slice().cmp(tuple)) {
            Ok(i) => self.rows[i].1,
            Err(_) => 0,
        }
    }

    pub fn position(&self, attr: &str) -> Option<usize> {
        self.schema.iter().position(|a| a == attr)
    }

    /// Distinct values of one column, ascending.
    pub fn active_domain(&self, column: usize) -> Vec<ValueId> {
        let mut values: Vec<ValueId> = self.rows.iter().map(|(t, _)| t[column]).collect();
        values.sort_unstable();
        values.dedup();
        values
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Relation {
        self.name = name.into();
        self
    }

    /// Same rows under new attribute names (positional).
    pub fn renamed(&self, schema: Vec<String>) -> Result<Relation, RelationError> {
        if schema.len() != self.schema.len() {
            return Err(RelationError::ArityMismatch {
                relation: self.name.clone(),
                expected: self.schema.len(),
                found: schema.len(),
            });
        }
        check_schema(&self.name, &schema)?;
        Ok(Relation {
            name: self.name.clone(),
            schema,
            rows: self.rows.clone(),
        })
    }

    /// Keep the rows satisfying `keep`; counts are untouched.
    pub fn filter<F>(&self, mut keep: F) -> Relation
    where
        F: FnMut(&[ValueId]) -> bool,
    {
        let rows = self.rows.iter().filter(|(t, _)| keep(t)).cloned().collect();
        Relation::from_canonical(self.name.clone(), self.schema.clone(), rows)
    }

    /// Replace every count through `f`; rows mapped to zero are dropped.
    pub fn map_counts<F>(&self, mut f: F) -> Relation
    where
        F: FnMut(&[ValueId], Count) -> Count,
    {
        let rows = self
            .rows
            .iter()
            .filter_map(|(t, c)| {
                let c = f(t, *c);
                (c > 0).then(|| (t.clone(), c))
            })
            .collect();
        Relation::from_canonical(self.name.clone(), self.schema.clone(), rows)
    }

    /// Multiply every count by `factor`; a zero factor empties the relation.
    pub fn scaled(&self, factor: Count) -> Result<Relation, RelationError> {
        if factor == 0 {
            return Ok(Relation::empty(self.name.clone(), self.schema.clone()));
        }
        let mut rows = Vec::with_capacity(self.rows.len());
        for (t, c) in self.rows.iter() {
            let c = c.checked_mul(factor).ok_or_else(|| RelationError::Overflow {
                context: format!("scaling {}", self.name),
            })?;
            rows.push((t.clone(), c));
        }
        Ok(Relation::from_canonical(self.name.clone(), self.schema.clone(), rows))
    }

    /// Natural join on shared attribute names; output counts are products.
    pub fn cnt_join(&self, other: &Relation) -> Result<Relation, RelationError> {
        self.cnt_join_limited(other, usize::MAX)
    }

    /// [`Relation::cnt_join`] that fails once the output exceeds `limit` distinct rows.
    pub fn cnt_join_limited(&self, other: &Relation, limit: usize) -> Result<Relation, RelationError> {
        let mut left_key = Vec::new();
        let mut right_key = Vec::new();
        for (i, attr) in self.schema.iter().enumerate() {
            if let Some(j) = other.position(attr) {
                left_key.push(i);
                right_key.push(j);
            }
        }
        let right_extra: Vec<usize> = (0..other.arity()).filter(|j| !right_key.contains(j)).collect();
        let mut schema = self.schema.clone();
        schema.extend(right_extra.iter().map(|&j| other.schema[j].clone()));
        let name = join_name(&self.name, &other.name);

        if self.is_empty() || other.is_empty() {
            return Ok(Relation::empty(name, schema));
        }

        if right_extra.is_empty() {
            return self.scaled_by(other, &name, limit);
        }

        let mut index: FxHashMap<Tuple, Vec<usize>> = FxHashMap::default();
        for (i, (t, _)) in other.rows.iter().enumerate() {
            index.entry(project(t, &right_key)).or_default().push(i);
        }

        let mut rows: Vec<(Tuple, Count)> = Vec::new();
        for (lt, lc) in self.rows.iter() {
            let Some(matches) = index.get(&project(lt, &left_key)) else {
                continue;
            };
            for &j in matches {
                let (rt, rc) = &other.rows[j];
                let cnt = lc.checked_mul(*rc).ok_or_else(|| RelationError::Overflow {
                    context: format!("joining {} with {}", self.name, other.name),
                })?;
                if rows.len() >= limit {
                    return Err(RelationError::MemoryBudget {
                        limit,
                        context: format!("joining {} with {}", self.name, other.name),
                    });
                }
                let mut tuple = lt.clone();
                tuple.extend(right_extra.iter().map(|&k| rt[k]));
                rows.push((tuple, cnt));
            }
        }
        // Left rows are distinct and sorted, and the matches of one key are
        // sorted on their remaining columns, so the output is canonical.
        Ok(Relation::from_canonical(name, schema, rows))
    }

    /// Join with a relation whose attributes all occur in `self`: every row
    /// keeps its tuple and is weighted by the matching row of `weights`.
    fn scaled_by(&self, weights: &Relation, name: &str, limit: usize) -> Result<Relation, RelationError> {
        let columns: Vec<usize> = weights
            .schema
            .iter()
            .map(|a| self.position(a).expect("weight attributes occur in the left schema"))
            .collect();
        let prefix = is_prefix(&columns);
        let packed = columns.len() <= 2;
        let index: FxHashMap<&[ValueId], Count> = if prefix || packed {
            FxHashMap::default()
        } else {
            weights.rows.iter().map(|(t, c)| (t.as_slice(), *c)).collect()
        };
        let packed_index: FxHashMap<u64, Count> = if !prefix && packed {
            weights.rows.iter().map(|(t, c)| (pack(t, 0..t.len()), *c)).collect()
        } else {
            FxHashMap::default()
        };
        // With prefix columns both sides are sorted on the key, so a cursor suffices.
        let mut cursor = 0;
        let mut rows: Vec<(Tuple, Count)> = Vec::new();
        for (t, c) in self.rows.iter() {
            let w = if prefix {
                let key = &t[..columns.len()];
                while cursor < weights.rows.len() && weights.rows[cursor].0.as_slice() < key {
                    cursor += 1;
                }
                match weights.rows.get(cursor) {
                    Some((k, w)) if k.as_slice() == key => *w,
                    _ => continue,
                }
            } else if packed {
                match packed_index.get(&pack(t, columns.iter().copied())) {
                    Some(&w) => w,
                    None => continue,
                }
            } else {
                match index.get(project(t, &columns).as_slice()) {
                    Some(&w) => w,
                    None => continue,
                }
            };
            if rows.len() >= limit {
                return Err(RelationError::MemoryBudget {
                    limit,
                    context: format!("joining {} with {}", self.name, weights.name),
                });
            }
            let cnt = c.checked_mul(w).ok_or_else(|| RelationError::Overflow {
                context: format!("joining {} with {}", self.name, weights.name),
            })?;
            rows.push((t.clone(), cnt));
        }
        Ok(Relation::from_canonical(name.to_owned(), self.schema.clone(), rows))
    }

    /// Group on `attrs` (output schema in that order), summing counts.
    pub fn groupby_sum<S: AsRef<str>>(&self, attrs: &[S]) -> Result<Relation, RelationError> {
        let mut columns = Vec::with_capacity(attrs.len());
        for attr in attrs {
            let attr = attr.as_ref();
            let pos = self.position(attr).ok_or_else(|| RelationError::UnknownAttribute {
                relation: self.name.clone(),
                attr: attr.to_owned(),
            })?;
            columns.push(pos);
        }
        let schema: Vec<String> = attrs.iter().map(|a| a.as_ref().to_owned()).collect();
        check_schema(&self.name, &schema)?;
        let overflow = || RelationError::Overflow {
            context: format!("grouping {}", self.name),
        };
        if is_prefix(&columns) {
            let mut rows: Vec<(Tuple, Count)> = Vec::new();
            for (t, c) in self.rows.iter() {
                let key = &t[..columns.len()];
                match rows.last_mut() {
                    Some((last, acc)) if last.as_slice() == key => *acc = acc.checked_add(*c).ok_or_else(overflow)?,
                    _ => rows.push((key.iter().copied().collect(), *c)),
                }
            }
            return Ok(Relation::from_canonical(self.name.clone(), schema, rows));
        }
        if columns.len() <= 2 {
            let mut keyed: Vec<(u64, Count)> = self
                .rows
                .iter()
                .map(|(t, c)| (pack(t, columns.iter().copied()), *c))
                .collect();
            keyed.sort_unstable_by_key(|(k, _)| *k);
            let mut rows: Vec<(Tuple, Count)> = Vec::new();
            let mut last = None;
            for (k, c) in keyed {
                match rows.last_mut() {
                    Some((_, acc)) if last == Some(k) => *acc = acc.checked_add(c).ok_or_else(overflow)?,
                    _ => {
                        let ids = (0..columns.len()).rev().map(|i| ValueId((k >> (32 * i)) as u32));
                        rows.push((ids.collect(), c));
                        last = Some(k);
                    }
                }
            }
            return Ok(Relation::from_canonical(self.name.clone(), schema, rows));
        }
        let mut groups: FxHashMap<Tuple, Count> = FxHashMap::default();
        for (t, c) in self.rows.iter() {
            let acc = groups.entry(project(t, &columns)).or_insert(0);
            *acc = acc.checked_add(*c).ok_or_else(overflow)?;
        }
        let mut rows: Vec<(Tuple, Count)> = groups.into_iter().collect();
        rows.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        Ok(Relation::from_canonical(self.name.clone(), schema, rows))
    }

    /// Expand into (tuple, count) with resolved strings, keyed canonically by text.
    pub fn resolved(&self, dict: &ValueDict) -> BTreeMap<Vec<String>, Count> {
        self.rows.iter().map(|(t, c)| (dict.resolve_tuple(t), *c)).collect()
    }
}

fn join_name(left: &str, right: &str) -> String {
    match (left.is_empty(), right.is_empty()) {
        (true, _) => right.to_owned(),
        (_, true) => left.to_owned(),
        _ => format!("{left}⋈{right}"),
    }
}

fn check_schema(name: &str, schema: &[String]) -> Result<(), RelationError> {
    for (i, a) in schema.iter().enumerate() {
        if schema[..i].contains(a) {
            return Err(RelationError::DuplicateAttribute {
                relation: name.to_owned(),
                attr: a.clone(),
            });
        }
    }
    Ok(())
}

/// Up to two ids packed into a u64 whose order is the lexicographic order of the ids.
fn pack(tuple: &[ValueId], columns: impl Iterator<Item = usize>) -> u64 {
    columns.fold(0u64, |acc, c| (acc << 32) | u64::from(tuple[c].0))
}

/// Whether `columns` is `0, 1, ..., k-1`, i.e. a prefix of the sort order.
fn is_prefix(columns: &[usize]) -> bool {
    columns.iter().enumerate().all(|(i, &c)| i == c)
}

pub(crate) fn project(tuple: &[ValueId], columns: &[usize]) -> Tuple {
    columns.iter().map(|&c| tuple[c]).collect()
}

/// Sort and merge equal tuples, adding counts with overflow checks.
fn merge_sorted(mut rows: Vec<(Tuple, Count)>, context: &str) -> Result<Vec<(Tuple, Count)>, RelationError> {
    rows.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let mut out: Vec<(Tuple, Count)> = Vec::with_capacity(rows.len());
    for (t, c) in rows {
        match out.last_mut() {
            Some((last, acc)) if *last == t => {
                *acc = acc.checked_add(c).ok_or_else(|| RelationError::Overflow {
                    context: context.to_owned(),
                })?;
            }
            _ => out.push((t, c)),
        }
    }
    Ok(out)
}

/// Named relations over one shared dictionary.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Database {
    dict: ValueDict,
    relations: BTreeMap<String, Relation>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(dict: ValueDict, relations: impl IntoIterator<Item = Relation>) -> Self {
        Database {
            dict,
            relations: relations.into_iter().map(|r| (r.name().to_owned(), r)).collect(),
        }
    }

    pub fn dict(&self) -> &ValueDict {
        &self.dict
    }

    pub fn dict_mut(&mut self) -> &mut ValueDict {
        &mut self.dict
    }

    /// Intern string rows and add them as a canonical relation, replacing any
    /// relation of the same name.
    pub fn add_relation<S, R, V>(&mut self, name: &str, schema: &[S], rows: R) -> Result<&Relation, RelationError>
    where
        S: AsRef<str>,
        R: IntoIterator<Item = (Vec<V>, Count)>,
        V: AsRef<str>,
    {
        let schema: Vec<String> = schema.iter().map(|s| s.as_ref().to_owned()).collect();
        let dict = &mut self.dict;
        let raw: Vec<(Tuple, Count)> = rows
            .into_iter()
            .map(|(vals, c)| (vals.iter().map(|v| dict.intern(v.as_ref())).collect(), c))
            .collect();
        let rel = Relation::canonicalize(name, schema, raw)?;
        self.relations.insert(name.to_owned(), rel);
        Ok(&self.relations[name])
    }

    pub fn insert(&mut self, relation: Relation) {
        self.relations.insert(relation.name().to_owned(), relation);
    }

    pub fn relation(&self, name: &str) -> Option<&Relation> {
        self.relations.get(name)
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> + '_ {
        self.relations.values()
    }

    /// Total number of physical tuples (sum of multiplicities).
    pub fn size(&self) -> Result<Count, RelationError> {
        self.relations.values().try_fold(0u128, |acc, r| {
            acc.checked_add(r.total()?).ok_or_else(|| RelationError::Overflow {
                context: "database size".to_owned(),
            })
        })
    }

    pub fn distinct_rows(&self) -> usize {
        self.relations.values().map(Relation::distinct_len).sum()
    }

    /// Dictionary-independent view: relation → (schema, resolved rows).
    pub fn resolved(&self) -> BTreeMap<String, ResolvedRelation> {
        self.relations
            .iter()
            .map(|(n, r)| (n.clone(), (r.schema().to_vec(), r.resolved(&self.dict))))
            .collect()
    }
}
