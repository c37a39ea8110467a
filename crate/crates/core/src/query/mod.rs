//! Conjunctive counting queries: the DSL, the query hypergraph, GYO
//! decomposition into join trees, and user-supplied hypertree decompositions.

mod gyo;
mod parser;
mod tree;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::relation::{ValueDict, ValueId};

pub use gyo::{build_hypergraph, connected_components, gyo_decompose, is_acyclic, Gyo, Hypergraph};
pub use parser::parse_query;
pub use tree::{is_doubly_acyclic, validate_ghd, DoublyAcyclic, GhdNodeSpec, JoinTree, TreeNode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("relation {0} appears more than once; self-joins are not supported")]
    SelfJoinUnsupported(String),
    #[error("query body is empty")]
    EmptyBody,
    #[error("atom {relation}: attribute {attr} is repeated")]
    RepeatedAttribute { relation: String, attr: String },
    #[error("atom {relation}: selection on unknown attribute {attr}")]
    UnknownSelectionAttribute { relation: String, attr: String },
    #[error("head attributes {head:?} differ from body attributes {body:?}; projections are not supported")]
    HeadMismatch { head: Vec<String>, body: Vec<String> },
    #[error("query hypergraph is disconnected")]
    Disconnected,
    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),
    #[error("malformed decomposition file: {0}")]
    DecompositionFormat(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
        })
    }
}

/// A per-atom predicate `attr op 'literal'`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Selection {
    pub attr: String,
    pub op: CmpOp,
    pub literal: String,
}

impl Selection {
    /// Evaluate against an interned value. A literal missing from the
    /// dictionary equals no stored value.
    pub fn accepts(&self, value: ValueId, dict: &ValueDict) -> bool {
        let equal = dict.get(&self.literal) == Some(value);
        match self.op {
            CmpOp::Eq => equal,
            CmpOp::Ne => !equal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub relation: String,
    pub attrs: Vec<String>,
    pub selections: Vec<Selection>,
}

impl Atom {
    pub fn new<S: Into<String>>(relation: impl Into<String>, attrs: impl IntoIterator<Item = S>) -> Atom {
        Atom {
            relation: relation.into(),
            attrs: attrs.into_iter().map(Into::into).collect(),
            selections: Vec::new(),
        }
    }

    pub fn with_selection(mut self, attr: &str, op: CmpOp, literal: &str) -> Atom {
        self.selections.push(Selection {
            attr: attr.to_owned(),
            op,
            literal: literal.to_owned(),
        });
        self
    }

    pub fn position(&self, attr: &str) -> Option<usize> {
        self.attrs.iter().position(|a| a == attr)
    }

    pub fn attr_set(&self) -> BTreeSet<String> {
        self.attrs.iter().cloned().collect()
    }

    /// Whether a full tuple (in atom attribute order) passes every selection.
    pub fn accepts(&self, tuple: &[ValueId], dict: &ValueDict) -> bool {
        self.selections.iter().all(|s| match self.position(&s.attr) {
            Some(i) => s.accepts(tuple[i], dict),
            None => false,
        })
    }

    /// Whether `value` passes the selections placed on column `column`.
    pub fn accepts_value(&self, column: usize, value: ValueId, dict: &ValueDict) -> bool {
        let attr = &self.attrs[column];
        self.selections
            .iter()
            .filter(|s| &s.attr == attr)
            .all(|s| s.accepts(value, dict))
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.relation, self.attrs.join(","))?;
        if !self.selections.is_empty() {
            let preds: Vec<String> = self
                .selections
                .iter()
                .map(|s| format!("{} {} '{}'", s.attr, s.op, s.literal.replace('\'', "''")))
                .collect();
            write!(f, "[{}]", preds.join(", "))?;
        }
        Ok(())
    }
}

/// A full conjunctive query without self-joins; the head is the union of body attributes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConjunctiveQuery {
    pub name: String,
    pub atoms: Vec<Atom>,
}

impl ConjunctiveQuery {
    /// Validates structure: non-empty, no self-joins, distinct attributes per
    /// atom, selections on known attributes.
    pub fn new(name: impl Into<String>, atoms: Vec<Atom>) -> Result<ConjunctiveQuery, QueryError> {
        if atoms.is_empty() {
            return Err(QueryError::EmptyBody);
        }
        let mut seen = BTreeSet::new();
        for atom in &atoms {
            if !seen.insert(atom.relation.as_str()) {
                return Err(QueryError::SelfJoinUnsupported(atom.relation.clone()));
            }
        }
        for atom in &atoms {
            for (i, a) in atom.attrs.iter().enumerate() {
                if atom.attrs[..i].contains(a) {
                    return Err(QueryError::RepeatedAttribute {
                        relation: atom.relation.clone(),
                        attr: a.clone(),
                    });
                }
            }
            for s in &atom.selections {
                if atom.position(&s.attr).is_none() {
                    return Err(QueryError::UnknownSelectionAttribute {
                        relation: atom.relation.clone(),
                        attr: s.attr.clone(),
                    });
                }
            }
        }
        Ok(ConjunctiveQuery {
            name: name.into(),
            atoms,
        })
    }

    pub fn atom(&self, relation: &str) -> Option<&Atom> {
        self.atoms.iter().find(|a| a.relation == relation)
    }

    pub fn atom_index(&self, relation: &str) -> Option<usize> {
        self.atoms.iter().position(|a| a.relation == relation)
    }

    /// All body attributes, sorted.
    pub fn attributes(&self) -> BTreeSet<String> {
        self.atoms.iter().flat_map(|a| a.attrs.iter().cloned()).collect()
    }

    /// Number of atoms mentioning `attr`.
    pub fn occurrences(&self, attr: &str) -> usize {
        self.atoms.iter().filter(|a| a.position(attr).is_some()).count()
    }

    pub fn has_selections(&self) -> bool {
        self.atoms.iter().any(|a| !a.selections.is_empty())
    }
}

impl fmt::Display for ConjunctiveQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: Vec<String> = self.attributes().into_iter().collect();
        let body: Vec<String> = self.atoms.iter().map(ToString::to_string).collect();
        write!(f, "{}({}) :- {}.", self.name, head.join(","), body.join(", "))
    }
}
