//! Seeded generators of queries, decompositions and small instances.

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::query::{validate_ghd, Atom, CmpOp, ConjunctiveQuery, GhdNodeSpec, JoinTree};
use crate::relation::{Count, Database};

/// Size limits for random instances.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    pub max_atoms: usize,
    pub max_rows: usize,
    pub max_cnt: Count,
    pub domain: usize,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            max_atoms: 4,
            max_rows: 6,
            max_cnt: 3,
            domain: 4,
        }
    }
}

fn query(atoms: Vec<Atom>) -> ConjunctiveQuery {
    ConjunctiveQuery::new("Q", atoms).expect("generated query is well formed")
}

/// Random acyclic query: each new atom copies one or two attributes of an
/// earlier atom and may add a fresh one. Occasionally an atom starts a new
/// component or carries a selection.
pub fn acyclic_query<R: Rng + ?Sized>(rng: &mut R, shape: &Shape) -> ConjunctiveQuery {
    let m = rng.random_range(1..=shape.max_atoms.max(1));
    let mut fresh = 0usize;
    let mut next_attr = || {
        fresh += 1;
        format!("A{fresh}")
    };
    let mut atoms: Vec<Atom> = Vec::with_capacity(m);
    for i in 0..m {
        let mut attrs: Vec<String> = Vec::new();
        if i > 0 && rng.random_bool(0.9) {
            let parent = &atoms[rng.random_range(0..i)];
            let take = rng.random_range(1..=parent.attrs.len().min(2));
            let mut pool = parent.attrs.clone();
            for _ in 0..take {
                let k = rng.random_range(0..pool.len());
                attrs.push(pool.swap_remove(k));
            }
            if attrs.len() < 3 && rng.random_bool(0.6) {
                attrs.push(next_attr());
            }
        } else {
            for _ in 0..rng.random_range(1..=2) {
                attrs.push(next_attr());
            }
        }
        let mut atom = Atom::new(format!("R{}", i + 1), attrs);
        if rng.random_bool(0.1) {
            let attr = atom.attrs.choose(rng).expect("atom has attributes").clone();
            let op = if rng.random_bool(0.5) { CmpOp::Eq } else { CmpOp::Ne };
            let literal = value(&attr, rng.random_range(0..shape.domain));
            atom = atom.with_selection(&attr, op, &literal);
        }
        atoms.push(atom);
    }
    query(atoms)
}

/// `R1(A1,A2), R2(A2,A3), ..., Rm(Am,Am+1)`.
pub fn path_query(m: usize) -> ConjunctiveQuery {
    query(
        (1..=m)
            .map(|i| Atom::new(format!("R{i}"), [format!("A{i}"), format!("A{}", i + 1)]))
            .collect(),
    )
}

/// Path query with its relations listed in a random order and random names.
pub fn shuffled_path_query<R: Rng + ?Sized>(rng: &mut R, m: usize) -> ConjunctiveQuery {
    let mut names: Vec<usize> = (1..=m).collect();
    for i in (1..names.len()).rev() {
        names.swap(i, rng.random_range(0..=i));
    }
    query(
        (1..=m)
            .map(|i| Atom::new(format!("R{}", names[i - 1]), [format!("A{i}"), format!("A{}", i + 1)]))
            .collect(),
    )
}

pub fn triangle() -> ConjunctiveQuery {
    query(vec![
        Atom::new("R1", ["A", "B"]),
        Atom::new("R2", ["B", "C"]),
        Atom::new("R3", ["C", "A"]),
    ])
}

pub fn four_cycle() -> ConjunctiveQuery {
    query(vec![
        Atom::new("R1", ["A", "B"]),
        Atom::new("R2", ["B", "C"]),
        Atom::new("R3", ["C", "D"]),
        Atom::new("R4", ["D", "A"]),
    ])
}

pub fn star() -> ConjunctiveQuery {
    query(vec![
        Atom::new("R1", ["A", "B", "C"]),
        Atom::new("R2", ["A", "B"]),
        Atom::new("R3", ["B", "C"]),
        Atom::new("R4", ["C", "A"]),
    ])
}

fn ghd(q: &ConjunctiveQuery, nodes: &[(&[&str], Option<usize>)]) -> JoinTree {
    let spec: Vec<GhdNodeSpec> = nodes
        .iter()
        .map(|(atoms, parent)| GhdNodeSpec {
            atoms: atoms.iter().map(|s| s.to_string()).collect(),
            parent: *parent,
            attrs: None,
        })
        .collect();
    validate_ghd(q, &spec).expect("generated decomposition is valid")
}

/// A cyclic (or GHD-evaluated) query with a valid decomposition, chosen uniformly
/// among the triangle, the 4-cycle and the star.
pub fn cyclic_query<R: Rng + ?Sized>(rng: &mut R) -> (ConjunctiveQuery, JoinTree) {
    match rng.random_range(0..3) {
        0 => {
            let q = triangle();
            let t = ghd(&q, &[(&["R1", "R2", "R3"], None)]);
            (q, t)
        }
        1 => {
            let q = four_cycle();
            let t = ghd(&q, &[(&["R1", "R2"], None), (&["R3", "R4"], Some(0))]);
            (q, t)
        }
        _ => {
            let q = star();
            let t = ghd(&q, &[(&["R1", "R2"], None), (&["R3"], Some(0)), (&["R4"], Some(0))]);
            (q, t)
        }
    }
}

fn value(attr: &str, i: usize) -> String {
    format!("{}{}", attr.to_lowercase(), i)
}

/// Random instance for `q`: every relation gets up to `max_rows` distinct
/// rows over a per-attribute domain of `domain` values.
pub fn instance<R: Rng + ?Sized>(rng: &mut R, q: &ConjunctiveQuery, shape: &Shape) -> Database {
    let mut db = Database::new();
    for atom in &q.atoms {
        let n = rng.random_range(0..=shape.max_rows);
        let rows: Vec<(Vec<String>, Count)> = (0..n)
            .map(|_| {
                let t = atom
                    .attrs
                    .iter()
                    .map(|a| value(a, rng.random_range(0..shape.domain)))
                    .collect();
                (t, rng.random_range(1..=shape.max_cnt))
            })
            .collect();
        db.add_relation(&atom.relation, &atom.attrs, rows)
            .expect("generated rows fit the schema");
    }
    db
}

/// Chain instance for [`path_query`]: relation `Ri` holds `rows` random
/// pairs over a domain of `rows / 2` values per attribute.
pub fn chain_instance<R: Rng + ?Sized>(rng: &mut R, m: usize, rows: usize) -> Database {
    let q = path_query(m);
    let domain = (rows / 2).max(1);
    let mut db = Database::new();
    for atom in &q.atoms {
        let data = (0..rows).map(|_| {
            let t: Vec<String> = atom
                .attrs
                .iter()
                .map(|a| value(a, rng.random_range(0..domain)))
                .collect();
            (t, 1)
        });
        db.add_relation(&atom.relation, &atom.attrs, data)
            .expect("generated rows fit the schema");
    }
    db
}
