//! Factorized multiplicity tables.

use crate::error::{Error, Result};
use crate::query::{Atom, CmpOp};
use crate::relation::{project, Count, Relation, RelationError, Tuple, ValueDict, ValueId};

/// A selection predicate with its literal resolved against the dictionary.
/// A literal absent from the dictionary equals no stored value.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct ColumnPredicate {
    pub column: usize,
    pub op: CmpOp,
    pub literal: Option<ValueId>,
}

impl ColumnPredicate {
    pub fn accepts(&self, value: ValueId) -> bool {
        match (self.op, self.literal) {
            (CmpOp::Eq, Some(l)) => value == l,
            (CmpOp::Eq, None) => false,
            (CmpOp::Ne, Some(l)) => value != l,
            (CmpOp::Ne, None) => true,
        }
    }

    pub fn resolve_all(atom: &Atom, dict: &ValueDict) -> Vec<ColumnPredicate> {
        atom.selections
            .iter()
            .map(|s| ColumnPredicate {
                column: atom
                    .position(&s.attr)
                    .expect("selection attribute validated by the query"),
                op: s.op,
                literal: dict.get(&s.literal),
            })
            .collect()
    }
}

/// One independent factor: counts over a subset of the key columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Factor {
    /// Atom columns covered, ascending; the table's schema follows this order.
    pub columns: Vec<usize>,
    pub table: Relation,
}

/// Tuple sensitivities of one relation.
///
/// The sensitivity of a tuple depends only on its key columns (attributes
/// shared with other atoms) and equals `scale` times the product of the
/// factor counts at the tuple's projections. Factors cover pairwise disjoint
/// column sets, so the full table is their cross product and is never built
/// unless [`MultiplicityTable::materialize`] is called.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiplicityTable {
    pub(crate) relation: String,
    pub(crate) schema: Vec<String>,
    pub(crate) key_columns: Vec<usize>,
    pub(crate) factors: Vec<Factor>,
    pub(crate) scale: Count,
    pub(crate) predicates: Vec<ColumnPredicate>,
}

impl MultiplicityTable {
    pub fn relation(&self) -> &str {
        &self.relation
    }

    /// Attributes of the atom, in column order.
    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    /// Columns that determine the sensitivity; every other column may take any value.
    pub fn key_columns(&self) -> &[usize] {
        &self.key_columns
    }

    pub fn key_attrs(&self) -> Vec<String> {
        self.key_columns.iter().map(|&c| self.schema[c].clone()).collect()
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn scale(&self) -> Count {
        self.scale
    }

    fn overflow(&self) -> Error {
        Error::Relation(RelationError::Overflow {
            context: format!("tuple sensitivity in {}", self.relation),
        })
    }

    /// Sensitivity of a full tuple of the relation; zero when it fails a predicate.
    pub fn lookup(&self, tuple: &[ValueId]) -> Result<Count> {
        self.lookup_skipping(tuple, &[])
    }

    /// [`MultiplicityTable::lookup`] ignoring predicates on the `skip` columns.
    pub(crate) fn lookup_skipping(&self, tuple: &[ValueId], skip: &[usize]) -> Result<Count> {
        if tuple.len() != self.schema.len() {
            return Err(Error::TupleArity {
                relation: self.relation.clone(),
                expected: self.schema.len(),
                found: tuple.len(),
            });
        }
        if !self
            .predicates
            .iter()
            .all(|p| skip.contains(&p.column) || p.accepts(tuple[p.column]))
        {
            return Ok(0);
        }
        let mut acc = self.scale;
        for f in &self.factors {
            if acc == 0 {
                return Ok(0);
            }
            let c = f.table.count_of(&project(tuple, &f.columns));
            acc = acc.checked_mul(c).ok_or_else(|| self.overflow())?;
        }
        Ok(acc)
    }

    /// Largest sensitivity and the smallest key (values at `key_columns`)
    /// attaining it. `None` when every key has sensitivity zero.
    pub fn max(&self) -> Result<(Count, Option<Tuple>)> {
        let mut best = self.scale;
        let mut key: Tuple = std::iter::repeat_n(ValueId(0), self.key_columns.len()).collect();
        for f in &self.factors {
            // rows are sorted, so the first maximal row is the smallest one
            let Some((row, c)) = f
                .table
                .rows()
                .iter()
                .fold(None::<&(Tuple, Count)>, |acc, r| match acc {
                    Some(a) if a.1 >= r.1 => Some(a),
                    _ => Some(r),
                })
                .map(|(t, c)| (t, *c))
            else {
                return Ok((0, None));
            };
            best = best.checked_mul(c).ok_or_else(|| self.overflow())?;
            for (v, col) in row.iter().zip(&f.columns) {
                let slot = self
                    .key_columns
                    .iter()
                    .position(|k| k == col)
                    .expect("factor column is a key column");
                key[slot] = *v;
            }
        }
        if best == 0 {
            return Ok((0, None));
        }
        Ok((best, Some(key)))
    }

    /// Number of keys with non-zero sensitivity.
    pub fn key_count(&self) -> u128 {
        if self.scale == 0 {
            return 0;
        }
        self.factors
            .iter()
            .fold(1u128, |acc, f| acc.saturating_mul(f.table.distinct_len() as u128))
    }

    /// The table as a relation over the key attributes, failing once it
    /// would exceed `limit` rows.
    pub fn materialize(&self, limit: usize) -> Result<Relation> {
        let mut acc = Relation::unit();
        for f in &self.factors {
            acc = acc.cnt_join_limited(&f.table, limit)?;
        }
        let attrs = self.key_attrs();
        let acc = acc.groupby_sum(&attrs)?.scaled(self.scale)?;
        Ok(acc.with_name(self.relation.clone()))
    }
}
