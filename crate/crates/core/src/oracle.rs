//! Ground truth by exhaustive recomputation.
//!
//! Nothing here uses the join or grouping operators of [`crate::relation`]:
//! query answers are counted by nested-loop backtracking and sensitivities by
//! literally inserting or removing one copy of a tuple and recounting.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Error, Result};
use crate::query::{Atom, CmpOp, ConjunctiveQuery};
use crate::relation::{Count, Database, Relation, RelationError, Tuple, ValueId};
use crate::sensitivity::{RelationBest, SensitivityReport, Stats};

/// Largest representative domain the brute-force search will enumerate.
pub const ORACLE_LIMIT: u128 = 1_000_000;

/// Witness order key: shared-attribute projection, inserted flag, full tuple.
type Rank = (Vec<ValueId>, bool, Tuple);

/// Candidate values per attribute for tuples inserted into one relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RepresentativeDomain {
    pub relation: String,
    pub attrs: Vec<String>,
    /// Ascending candidate values per attribute, in column order.
    pub values: Vec<Vec<ValueId>>,
}

impl RepresentativeDomain {
    pub fn size(&self) -> u128 {
        self.values
            .iter()
            .fold(1u128, |acc, v| acc.saturating_mul(v.len() as u128))
    }

    /// Every tuple of the cross product, in lexicographic order.
    pub fn tuples(&self) -> impl Iterator<Item = Tuple> + '_ {
        let empty = self.values.iter().any(Vec::is_empty);
        let mut index = vec![0usize; self.values.len()];
        let mut done = empty;
        std::iter::from_fn(move || {
            if done {
                return None;
            }
            let t: Tuple = index.iter().zip(&self.values).map(|(&i, v)| v[i]).collect();
            done = true;
            for col in (0..index.len()).rev() {
                index[col] += 1;
                if index[col] < self.values[col].len() {
                    done = false;
                    break;
                }
                index[col] = 0;
            }
            Some(t)
        })
    }
}

/// The database restricted to rows passing each atom's selections, with
/// selection literals interned.
pub fn selected(db: &Database, q: &ConjunctiveQuery) -> Result<Database> {
    let mut out = db.clone();
    for atom in &q.atoms {
        let rel = stored(db, atom)?;
        for s in &atom.selections {
            out.dict_mut().intern(&s.literal);
        }
        let kept: Vec<(Tuple, Count)> = rel
            .rows()
            .iter()
            .filter(|(t, _)| passes(atom, t, &out))
            .cloned()
            .collect();
        out.insert(Relation::canonicalize(rel.name(), rel.schema().to_vec(), kept)?);
    }
    Ok(out)
}

fn stored<'a>(db: &'a Database, atom: &Atom) -> Result<&'a Relation> {
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

fn value_passes(atom: &Atom, column: usize, value: ValueId, db: &Database) -> bool {
    atom.selections
        .iter()
        .filter(|s| s.attr == atom.attrs[column])
        .all(|s| {
            let equal = db.dict().get(&s.literal) == Some(value);
            match s.op {
                CmpOp::Eq => equal,
                CmpOp::Ne => !equal,
            }
        })
}

fn passes(atom: &Atom, tuple: &[ValueId], db: &Database) -> bool {
    (0..atom.attrs.len()).all(|c| value_passes(atom, c, tuple[c], db))
}

fn active(db: &Database, atom: &Atom, attr: &str) -> BTreeSet<ValueId> {
    let col = atom.position(attr).expect("attribute of atom");
    db.relation(&atom.relation)
        .map(|r| r.rows().iter().map(|(t, _)| t[col]).collect())
        .unwrap_or_default()
}

/// Representative domain of `relation` on an instance whose selections are
/// already applied (see [`selected`]). Shared attributes range over the
/// intersection of the other relations' active domains; an attribute no
/// other atom mentions gets one value: the smallest active value, else an
/// equality literal, else `*`. Values failing the atom's selections are
/// dropped.
pub fn representative_domain(db: &Database, q: &ConjunctiveQuery, relation: &str) -> Result<RepresentativeDomain> {
    let atom = q
        .atom(relation)
        .ok_or_else(|| Error::UnknownRelation(relation.to_owned()))?;
    let mut values = Vec::with_capacity(atom.attrs.len());
    for (col, attr) in atom.attrs.iter().enumerate() {
        let others: Vec<&Atom> = q
            .atoms
            .iter()
            .filter(|a| a.relation != atom.relation && a.position(attr).is_some())
            .collect();
        let column: Vec<ValueId> = if others.is_empty() {
            let own = active(db, atom, attr).into_iter().next();
            let literals = atom
                .selections
                .iter()
                .filter(|s| &s.attr == attr && s.op == CmpOp::Eq)
                .filter_map(|s| db.dict().get(&s.literal));
            own.into_iter()
                .chain(literals)
                .chain(std::iter::once(ValueId::SENTINEL))
                .find(|v| value_passes(atom, col, *v, db))
                .into_iter()
                .collect()
        } else {
            let mut common = active(db, others[0], attr);
            for other in &others[1..] {
                let next = active(db, other, attr);
                common.retain(|v| next.contains(v));
            }
            common.into_iter().filter(|v| value_passes(atom, col, *v, db)).collect()
        };
        values.push(column);
    }
    Ok(RepresentativeDomain {
        relation: relation.to_owned(),
        attrs: atom.attrs.clone(),
        values,
    })
}

/// Bag-semantics answer size by backtracking over the atoms in query order.
pub fn naive_join_count(db: &Database, q: &ConjunctiveQuery) -> Result<Count> {
    let mut rels = Vec::with_capacity(q.atoms.len());
    for atom in &q.atoms {
        let rel = stored(db, atom)?;
        if rel.is_empty() {
            return Ok(0);
        }
        rels.push(rel);
    }
    let vars: Vec<String> = q.attributes().into_iter().collect();
    let slots: Vec<Vec<usize>> = q
        .atoms
        .iter()
        .map(|a| {
            a.attrs
                .iter()
                .map(|x| vars.binary_search(x).expect("query attribute"))
                .collect()
        })
        .collect();
    let mut binding: Vec<Option<ValueId>> = vec![None; vars.len()];
    count_from(0, q, db, &rels, &slots, &mut binding)
}

fn count_from(
    depth: usize,
    q: &ConjunctiveQuery,
    db: &Database,
    rels: &[&Relation],
    slots: &[Vec<usize>],
    binding: &mut Vec<Option<ValueId>>,
) -> Result<Count> {
    if depth == rels.len() {
        return Ok(1);
    }
    let atom = &q.atoms[depth];
    let mut total: Count = 0;
    'rows: for (t, c) in rels[depth].rows() {
        if !passes(atom, t, db) {
            continue;
        }
        let mut newly = Vec::new();
        for (col, &slot) in slots[depth].iter().enumerate() {
            match binding[slot] {
                Some(v) if v != t[col] => {
                    for s in newly {
                        binding[s] = None;
                    }
                    continue 'rows;
                }
                Some(_) => {}
                None => {
                    binding[slot] = Some(t[col]);
                    newly.push(slot);
                }
            }
        }
        let below = count_from(depth + 1, q, db, rels, slots, binding)?;
        for s in newly {
            binding[s] = None;
        }
        let term = below.checked_mul(*c).ok_or_else(overflow)?;
        total = total.checked_add(term).ok_or_else(overflow)?;
    }
    Ok(total)
}

fn overflow() -> Error {
    Error::Relation(RelationError::Overflow {
        context: "oracle join count".into(),
    })
}

/// `db` with one more copy of `tuple` in `relation`.
pub fn add_copy(db: &Database, relation: &str, tuple: &[ValueId]) -> Result<Database> {
    perturbed(db, relation, tuple, 1)
}

/// `db` with one copy of `tuple` removed from `relation`; the tuple must be present.
pub fn remove_copy(db: &Database, relation: &str, tuple: &[ValueId]) -> Result<Database> {
    perturbed(db, relation, tuple, -1)
}

/// `db` with the count of `tuple` in `relation` changed by `delta` copies.
fn perturbed(db: &Database, relation: &str, tuple: &[ValueId], delta: i8) -> Result<Database> {
    let rel = db
        .relation(relation)
        .ok_or_else(|| Error::UnknownRelation(relation.to_owned()))?;
    let mut rows: Vec<(Tuple, Count)> = rel.rows().to_vec();
    match rows.iter().position(|(t, _)| t.as_slice() == tuple) {
        Some(i) if delta < 0 => {
            rows[i].1 -= 1;
            if rows[i].1 == 0 {
                rows.remove(i);
            }
        }
        Some(i) => rows[i].1 = rows[i].1.checked_add(1).ok_or_else(overflow)?,
        None if delta > 0 => rows.push((tuple.iter().copied().collect(), 1)),
        None => return Err(Error::Config(format!("no copy of the tuple in {relation} to remove"))),
    }
    let mut out = db.clone();
    out.insert(Relation::canonicalize(rel.name(), rel.schema().to_vec(), rows)?);
    Ok(out)
}

/// Increase of the answer when one copy of `tuple` is inserted into
/// `relation` of an already-selected instance. Tuples failing the atom's
/// selections would be filtered out, so their sensitivity is zero.
pub fn upward_sensitivity(db: &Database, q: &ConjunctiveQuery, relation: &str, tuple: &[ValueId]) -> Result<Count> {
    let atom = q
        .atom(relation)
        .ok_or_else(|| Error::UnknownRelation(relation.to_owned()))?;
    if tuple.len() != atom.attrs.len() {
        return Err(Error::TupleArity {
            relation: relation.to_owned(),
            expected: atom.attrs.len(),
            found: tuple.len(),
        });
    }
    if !passes(atom, tuple, db) {
        return Ok(0);
    }
    let before = naive_join_count(db, q)?;
    let after = naive_join_count(&perturbed(db, relation, tuple, 1)?, q)?;
    Ok(after - before)
}

/// Decrease of the answer when one existing copy of `tuple` is removed.
pub fn downward_sensitivity(db: &Database, q: &ConjunctiveQuery, relation: &str, tuple: &[ValueId]) -> Result<Count> {
    let before = naive_join_count(db, q)?;
    let after = naive_join_count(&perturbed(db, relation, tuple, -1)?, q)?;
    Ok(before - after)
}

/// Local sensitivity by trying every one-copy removal of an existing tuple
/// and every one-copy insertion from the representative domains.
///
/// Ties are broken by relation name, then the tuple's values on attributes
/// shared with other atoms, then existing tuples before inserted ones, then
/// the whole tuple.
pub fn brute_force_ls(db: &Database, q: &ConjunctiveQuery) -> Result<SensitivityReport> {
    let db = selected(db, q)?;
    let join_size = naive_join_count(&db, q)?;
    let mut bests = Vec::with_capacity(q.atoms.len());
    for atom in &q.atoms {
        let domain = representative_domain(&db, q, &atom.relation)?;
        let size = domain.size();
        if size > ORACLE_LIMIT {
            return Err(Error::OracleGuard {
                relation: atom.relation.clone(),
                size,
                limit: ORACLE_LIMIT,
            });
        }
        let key: Vec<usize> = (0..atom.attrs.len())
            .filter(|&c| q.occurrences(&atom.attrs[c]) > 1)
            .collect();
        let rank = |t: &Tuple, inserted: bool| {
            let k: Vec<ValueId> = key.iter().map(|&c| t[c]).collect();
            (k, inserted, t.clone())
        };

        let mut best: Option<(Count, Rank)> = None;
        let mut consider = |tsens: Count, r: Rank| {
            let better = match &best {
                None => true,
                Some((b, br)) => tsens > *b || (tsens == *b && r < *br),
            };
            if better {
                best = Some((tsens, r));
            }
        };
        let existing: Vec<Tuple> = stored(&db, atom)?.rows().iter().map(|(t, _)| t.clone()).collect();
        for t in existing {
            let s = downward_sensitivity(&db, q, &atom.relation, &t)?;
            consider(s, rank(&t, false));
        }
        for t in domain.tuples() {
            let s = upward_sensitivity(&db, q, &atom.relation, &t)?;
            consider(s, rank(&t, true));
        }
        bests.push(match best {
            Some((tsens, (_, _, t))) if tsens > 0 => RelationBest {
                relation: atom.relation.clone(),
                values: Some(db.dict().resolve_tuple(&t)),
                tuple: Some(t),
                tsens,
            },
            _ => RelationBest {
                relation: atom.relation.clone(),
                tuple: None,
                values: None,
                tsens: 0,
            },
        });
    }
    Ok(SensitivityReport::from_bests(bests, join_size, Stats::default()))
}

/// A literal of a propositional formula; variables are numbered from 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Literal {
    pub var: u32,
    pub negated: bool,
}

impl Literal {
    fn holds(self, assignment: u32) -> bool {
        ((assignment >> (self.var - 1)) & 1 == 1) != self.negated
    }
}

/// A formula in conjunctive normal form with exactly three literals per clause.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cnf3 {
    num_vars: u32,
    clauses: Vec<[Literal; 3]>,
}

/// Largest variable count accepted by [`Cnf3::is_satisfiable`].
pub const TRUTH_TABLE_VARS: u32 = 20;

impl Cnf3 {
    pub fn new(num_vars: u32, clauses: Vec<[Literal; 3]>) -> Result<Cnf3> {
        if num_vars == 0 {
            return Err(Error::Cnf("at least one variable is required".into()));
        }
        if clauses.is_empty() {
            return Err(Error::Cnf("at least one clause is required".into()));
        }
        if let Some(l) = clauses.iter().flatten().find(|l| l.var == 0 || l.var > num_vars) {
            return Err(Error::Cnf(format!("variable {} out of range 1..={num_vars}", l.var)));
        }
        Ok(Cnf3 { num_vars, clauses })
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn clauses(&self) -> &[[Literal; 3]] {
        &self.clauses
    }

    /// Parse DIMACS CNF. Clauses with one or two literals are padded by
    /// repeating their last literal.
    pub fn parse_dimacs(text: &str) -> Result<Cnf3> {
        let mut header: Option<(u32, usize)> = None;
        let mut clauses = Vec::new();
        let mut current: Vec<Literal> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('p') {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                match parts.as_slice() {
                    ["cnf", v, c] => {
                        let v = v
                            .parse()
                            .map_err(|_| Error::Cnf(format!("line {}: bad variable count", n + 1)))?;
                        let c = c
                            .parse()
                            .map_err(|_| Error::Cnf(format!("line {}: bad clause count", n + 1)))?;
                        header = Some((v, c));
                    }
                    _ => return Err(Error::Cnf(format!("line {}: expected 'p cnf VARS CLAUSES'", n + 1))),
                }
                continue;
            }
            if header.is_none() {
                return Err(Error::Cnf(format!("line {}: clause before header", n + 1)));
            }
            for token in line.split_whitespace() {
                let x: i64 = token
                    .parse()
                    .map_err(|_| Error::Cnf(format!("line {}: bad literal {token:?}", n + 1)))?;
                if x == 0 {
                    clauses.push(pad(std::mem::take(&mut current), n + 1)?);
                    continue;
                }
                let var = u32::try_from(x.unsigned_abs())
                    .map_err(|_| Error::Cnf(format!("line {}: variable too large", n + 1)))?;
                current.push(Literal { var, negated: x < 0 });
            }
        }
        if !current.is_empty() {
            clauses.push(pad(current, text.lines().count())?);
        }
        let (vars, count) = header.ok_or_else(|| Error::Cnf("missing 'p cnf' header".into()))?;
        if count != clauses.len() {
            return Err(Error::Cnf(format!(
                "header declares {count} clauses, found {}",
                clauses.len()
            )));
        }
        Cnf3::new(vars, clauses)
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        for clause in &self.clauses {
            for l in clause {
                let v = l.var as i64;
                out.push_str(&format!("{} ", if l.negated { -v } else { v }));
            }
            out.push_str("0\n");
        }
        out
    }

    /// Uniform random formula; each clause draws three variables with replacement.
    pub fn random<R: Rng + ?Sized>(num_vars: u32, num_clauses: usize, rng: &mut R) -> Cnf3 {
        let clauses = (0..num_clauses)
            .map(|_| {
                std::array::from_fn(|_| Literal {
                    var: rng.random_range(1..=num_vars),
                    negated: rng.random_bool(0.5),
                })
            })
            .collect();
        Cnf3::new(num_vars, clauses).expect("generated formula is well formed")
    }

    /// Satisfiability by enumerating every assignment.
    pub fn is_satisfiable(&self) -> Result<bool> {
        if self.num_vars > TRUTH_TABLE_VARS {
            return Err(Error::Cnf(format!(
                "{} variables exceed the truth-table limit of {TRUTH_TABLE_VARS}",
                self.num_vars
            )));
        }
        Ok((0..1u32 << self.num_vars).any(|a| self.clauses.iter().all(|c| c.iter().any(|l| l.holds(a)))))
    }
}

fn pad(mut literals: Vec<Literal>, line: usize) -> Result<[Literal; 3]> {
    match literals.len() {
        0 => Err(Error::Cnf(format!("line {line}: empty clause"))),
        1..=3 => {
            while literals.len() < 3 {
                literals.push(*literals.last().expect("non-empty"));
            }
            Ok([literals[0], literals[1], literals[2]])
        }
        n => Err(Error::Cnf(format!(
            "line {line}: clause has {n} literals, at most 3 allowed"
        ))),
    }
}

/// Instance whose local sensitivity is positive exactly when `f` is
/// satisfiable: an empty relation `R0` over every variable joined with one
/// relation per clause holding the assignments of its variables that
/// satisfy it. Variables are attributes `X1..Xn` with values `0` and `1`.
pub fn reduce_3sat(f: &Cnf3) -> Result<(Database, ConjunctiveQuery)> {
    let name = |v: u32| format!("X{v}");
    let mut db = Database::new();
    let all: Vec<String> = (1..=f.num_vars).map(name).collect();
    db.add_relation::<_, Vec<(Vec<&str>, Count)>, &str>("R0", &all, vec![])?;
    let mut atoms = vec![Atom::new("R0", all.clone())];
    for (i, clause) in f.clauses.iter().enumerate() {
        let vars: Vec<u32> = clause
            .iter()
            .map(|l| l.var)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let attrs: Vec<String> = vars.iter().map(|&v| name(v)).collect();
        let mut rows = Vec::new();
        for bits in 0..1u32 << vars.len() {
            let value = |v: u32| bits >> vars.iter().position(|&x| x == v).expect("clause variable") & 1 == 1;
            if clause.iter().any(|l| value(l.var) != l.negated) {
                let row: Vec<&str> = vars.iter().map(|&v| if value(v) { "1" } else { "0" }).collect();
                rows.push((row, 1));
            }
        }
        let rel = format!("R{}", i + 1);
        db.add_relation(&rel, &attrs, rows)?;
        atoms.push(Atom::new(rel, attrs));
    }
    let q = ConjunctiveQuery::new("Q", atoms)?;
    Ok((db, q))
}
