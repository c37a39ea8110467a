//! Single-sweep sensitivity for path queries.
//!
//! For a chain `R1 - R2 - ... - Rm`, the prefix join up to `R(i-1)` grouped
//! onto the attributes `Ri` shares with its predecessor, and the suffix join
//! from `R(i+1)` grouped onto those shared with its successor, are
//! independent. The most sensitive tuple of `Ri` pairs the most frequent
//! prefix key with the most frequent suffix key.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::query::{build_hypergraph, gyo_decompose, ConjunctiveQuery, Gyo};
use crate::relation::{Count, Database, Relation, RelationError, Tuple, ValueId};

use super::bind::{apply_selections, bind_atom};
use super::table::ColumnPredicate;
use super::{complete_tuple, RelationBest, SensitivityReport, Stats};

pub fn ls_path(db: &Database, q: &ConjunctiveQuery) -> Result<SensitivityReport> {
    let start = Instant::now();
    let order = chain_order(q)?;
    let db = apply_selections(db, q)?;
    let atoms: Vec<_> = order.iter().map(|&i| &q.atoms[i]).collect();
    let bound: Vec<Relation> = atoms.iter().map(|a| bind_atom(&db, a)).collect::<Result<_>>()?;
    let m = atoms.len();

    // attributes of atom i shared with atom i-1 / i+1, in atom i's column order
    let shared = |i: usize, j: usize| -> Vec<String> {
        atoms[i]
            .attrs
            .iter()
            .filter(|a| atoms[j].position(a).is_some())
            .cloned()
            .collect()
    };
    let left: Vec<Vec<String>> = (0..m).map(|i| if i == 0 { vec![] } else { shared(i, i - 1) }).collect();
    let right: Vec<Vec<String>> = (0..m)
        .map(|i| if i + 1 == m { vec![] } else { shared(i, i + 1) })
        .collect();

    let mut top: Vec<Relation> = vec![Relation::unit(); m];
    for i in 1..m {
        top[i] = bound[i - 1].cnt_join(&top[i - 1])?.groupby_sum(&left[i])?;
    }
    let mut bot: Vec<Relation> = vec![Relation::unit(); m];
    for i in (0..m.saturating_sub(1)).rev() {
        bot[i] = bound[i + 1].cnt_join(&bot[i + 1])?.groupby_sum(&right[i])?;
    }
    let join_size = bound[m - 1].cnt_join(&top[m - 1])?.cnt_join(&bot[m - 1])?.total()?;

    let mut bests = Vec::with_capacity(m);
    for i in 0..m {
        let atom = atoms[i];
        let predicates = ColumnPredicate::resolve_all(atom, db.dict());
        let passes = |rel: &Relation| {
            if predicates.is_empty() {
                return rel.clone();
            }
            let cols: Vec<usize> = rel
                .schema()
                .iter()
                .map(|a| atom.position(a).expect("shared attribute"))
                .collect();
            rel.filter(|t| {
                predicates
                    .iter()
                    .all(|p| match cols.iter().position(|&c| c == p.column) {
                        Some(k) => p.accepts(t[k]),
                        None => true,
                    })
            })
        };
        let (tc, tk) = argmax(&passes(&top[i]));
        let (bc, bk) = argmax(&passes(&bot[i]));
        let tsens = tc.checked_mul(bc).ok_or_else(|| {
            Error::Relation(RelationError::Overflow {
                context: format!("tuple sensitivity in {}", atom.relation),
            })
        })?;
        let mut best = RelationBest {
            relation: atom.relation.clone(),
            tuple: None,
            values: None,
            tsens: 0,
        };
        if tsens > 0 {
            let mut keyed: Vec<(usize, ValueId)> = left[i]
                .iter()
                .zip(tk.expect("positive count has a row"))
                .chain(right[i].iter().zip(bk.expect("positive count has a row")))
                .map(|(a, v)| (atom.position(a).expect("shared attribute"), v))
                .collect();
            keyed.sort_unstable();
            let key_columns: Vec<usize> = keyed.iter().map(|(c, _)| *c).collect();
            let key: Vec<ValueId> = keyed.iter().map(|(_, v)| *v).collect();
            if let Some(t) = complete_tuple(&key_columns, &key, atom, &bound[i], db.dict()) {
                best.values = Some(db.dict().resolve_tuple(&t));
                best.tuple = Some(t);
                best.tsens = tsens;
            }
        }
        bests.push(best);
    }

    let mut table_rows = Vec::new();
    for i in 0..m {
        if i > 0 {
            table_rows.push((format!("top:{}", atoms[i].relation), top[i].distinct_len()));
        }
        if i + 1 < m {
            table_rows.push((format!("bot:{}", atoms[i].relation), bot[i].distinct_len()));
        }
    }
    let stats = Stats {
        timings: vec![("path".to_owned(), start.elapsed())],
        table_rows,
        max_atoms_per_node: 1,
    };
    Ok(SensitivityReport::from_bests(bests, join_size, stats))
}

/// Largest count and the smallest row attaining it.
fn argmax(rel: &Relation) -> (Count, Option<Tuple>) {
    rel.rows().iter().fold(
        (0, None),
        |(bc, bt), (t, c)| if *c > bc { (*c, Some(t.clone())) } else { (bc, bt) },
    )
}

/// Atom indices along the chain, starting from the end with the smaller
/// relation name. Every inner atom must share disjoint attribute sets with
/// its two neighbours.
fn chain_order(q: &ConjunctiveQuery) -> Result<Vec<usize>> {
    let h = build_hypergraph(q);
    let tree = match gyo_decompose(&h) {
        Ok(Gyo::Tree(t)) => t,
        Ok(Gyo::Cyclic(_)) => return Err(Error::NotAPath("query is cyclic".into())),
        Err(e) => return Err(Error::NotAPath(e.to_string())),
    };
    let nodes = tree
        .path_order()
        .ok_or_else(|| Error::NotAPath("join tree is not a chain".into()))?;
    let order: Vec<usize> = nodes
        .iter()
        .map(|&v| {
            q.atom_index(&tree.atoms()[tree.nodes()[v].atoms[0]].relation)
                .expect("tree atom")
        })
        .collect();
    for w in order.windows(3) {
        let (prev, cur, next) = (&q.atoms[w[0]], &q.atoms[w[1]], &q.atoms[w[2]]);
        if cur
            .attrs
            .iter()
            .any(|a| prev.position(a).is_some() && next.position(a).is_some())
        {
            return Err(Error::NotAPath(format!(
                "{} shares an attribute with both neighbours",
                cur.relation
            )));
        }
    }
    Ok(order)
}
