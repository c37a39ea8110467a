//! Binding query atoms to stored relations.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::query::{Atom, CmpOp, ConjunctiveQuery};
use crate::relation::{Database, Relation, ValueDict, ValueId};

/// Restrict every relation of the query to the rows passing its atom's
/// selections. Selection literals are interned into the returned database's
/// dictionary so that tuples built from them can be represented.
pub fn apply_selections<'a>(db: &'a Database, q: &ConjunctiveQuery) -> Result<Cow<'a, Database>> {
    let mut out = Cow::Borrowed(db);
    for atom in &q.atoms {
        let stored = stored_relation(db, atom)?;
        if atom.selections.is_empty() {
            continue;
        }
        let out = out.to_mut();
        for s in &atom.selections {
            out.dict_mut().intern(&s.literal);
        }
        out.insert(stored.filter(|t| atom.accepts(t, db.dict())));
    }
    Ok(out)
}

pub(crate) fn stored_relation<'a>(db: &'a Database, atom: &Atom) -> Result<&'a Relation> {
    let rel = db
        .relation(&atom.relation)
        .ok_or_else(|| Error::UnknownRelation(atom.relation.clone()))?;
    if rel.arity() != atom.attrs.len() {
        return Err(Error::AtomArity {
            relation: atom.relation.clone(),
            atom: atom.attrs.len(),
            stored: rel.arity(),
        });
    }
    Ok(rel)
}

/// The stored relation filtered by the atom's selections, with columns renamed
/// to the atom's variables.
pub(crate) fn bind_atom(db: &Database, atom: &Atom) -> Result<Relation> {
    let rel = stored_relation(db, atom)?;
    let rel = if atom.selections.is_empty() {
        rel.renamed(atom.attrs.clone())?
    } else {
        rel.filter(|t| atom.accepts(t, db.dict())).renamed(atom.attrs.clone())?
    };
    Ok(rel)
}

/// Value used for a column whose attribute occurs in no other atom: the
/// smallest active value of the (selected) relation, else an equality
/// literal, else the `*` placeholder, whichever first passes the column's
/// selections.
pub(crate) fn free_value(atom: &Atom, column: usize, bound: &Relation, dict: &ValueDict) -> Option<ValueId> {
    let attr = &atom.attrs[column];
    let active = bound.rows().iter().map(|(t, _)| t[column]).min();
    let literals = atom
        .selections
        .iter()
        .filter(|s| &s.attr == attr && s.op == CmpOp::Eq)
        .filter_map(|s| dict.get(&s.literal));
    active
        .into_iter()
        .chain(literals)
        .chain(std::iter::once(ValueId::SENTINEL))
        .find(|v| atom.accepts_value(column, *v, dict))
}
