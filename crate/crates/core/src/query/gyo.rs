//! Query hypergraphs and GYO ear elimination.

use std::collections::{BTreeMap, BTreeSet};

use super::tree::JoinTree;
use super::{Atom, ConjunctiveQuery, QueryError};

/// Attributes as vertices, one hyperedge per atom (keyed by relation name).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hypergraph {
    pub vertices: BTreeSet<String>,
    pub edges: BTreeMap<String, BTreeSet<String>>,
    atoms: Vec<Atom>,
}

impl Hypergraph {
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Restriction to the given relations.
    pub fn subgraph(&self, relations: &[String]) -> Hypergraph {
        let atoms: Vec<Atom> = self
            .atoms
            .iter()
            .filter(|a| relations.contains(&a.relation))
            .cloned()
            .collect();
        hypergraph_of(atoms)
    }
}

/// Outcome of GYO elimination on a connected hypergraph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Gyo {
    Tree(JoinTree),
    /// No ear exists; the residual (with vertices exclusive to one edge
    /// removed) witnesses the cycle.
    Cyclic(Hypergraph),
}

pub fn build_hypergraph(q: &ConjunctiveQuery) -> Hypergraph {
    hypergraph_of(q.atoms.clone())
}

fn hypergraph_of(atoms: Vec<Atom>) -> Hypergraph {
    let edges: BTreeMap<String, BTreeSet<String>> = atoms.iter().map(|a| (a.relation.clone(), a.attr_set())).collect();
    let vertices = edges.values().flatten().cloned().collect();
    Hypergraph { vertices, edges, atoms }
}

/// Relation names of each connected component, ordered by their smallest name.
pub fn connected_components(h: &Hypergraph) -> Vec<Vec<String>> {
    let names: Vec<&String> = h.edges.keys().collect();
    let mut component: Vec<usize> = (0..names.len()).collect();
    fn find(c: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while c[r] != r {
            r = c[r];
        }
        let mut y = x;
        while c[y] != r {
            let next = c[y];
            c[y] = r;
            y = next;
        }
        r
    }
    for i in 0..names.len() {
        for j in (i + 1)..names.len() {
            if !h.edges[names[i]].is_disjoint(&h.edges[names[j]]) {
                let (a, b) = (find(&mut component, i), find(&mut component, j));
                if a != b {
                    component[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        let root = find(&mut component, i);
        groups.entry(root).or_default().push((*name).clone());
    }
    groups.into_values().collect()
}

struct Elimination {
    /// (ear, witness) in elimination order; `None` when the ear shared nothing.
    links: Vec<(usize, Option<usize>)>,
    remaining: Vec<usize>,
}

/// Repeatedly remove the first eligible ear in the given edge order. When
/// `keep_first` is set, edge 0 is never removed so it ends as the root.
fn eliminate(edges: &[&BTreeSet<String>], keep_first: bool) -> Elimination {
    let mut remaining: Vec<usize> = (0..edges.len()).collect();
    let mut links = Vec::new();
    'outer: while remaining.len() > 1 {
        for (pos, &e) in remaining.iter().enumerate() {
            if keep_first && e == 0 {
                continue;
            }
            let others: Vec<usize> = remaining.iter().copied().filter(|&o| o != e).collect();
            let shared: BTreeSet<&String> = edges[e]
                .iter()
                .filter(|v| others.iter().any(|&o| edges[o].contains(*v)))
                .collect();
            let witness = if shared.is_empty() {
                None
            } else {
                match others
                    .iter()
                    .copied()
                    .find(|&o| shared.iter().all(|v| edges[o].contains(*v)))
                {
                    Some(w) => Some(w),
                    None => continue,
                }
            };
            links.push((e, witness));
            remaining.remove(pos);
            continue 'outer;
        }
        break;
    }
    Elimination { links, remaining }
}

/// GYO decomposition of a connected hypergraph.
///
/// Ears are taken in relation-name order and linked to the first witness in
/// name order. The relation with the smallest name is held back and becomes
/// the root.
pub fn gyo_decompose(h: &Hypergraph) -> Result<Gyo, QueryError> {
    if h.edges.is_empty() {
        return Err(QueryError::EmptyBody);
    }
    if connected_components(h).len() > 1 {
        return Err(QueryError::Disconnected);
    }
    let names: Vec<&String> = h.edges.keys().collect();
    let edges: Vec<&BTreeSet<String>> = h.edges.values().collect();
    let elim = eliminate(&edges, true);
    if elim.remaining.len() > 1 {
        let residual: Vec<&BTreeSet<String>> = elim.remaining.iter().map(|&i| edges[i]).collect();
        let mut out = BTreeMap::new();
        for &i in &elim.remaining {
            let kept: BTreeSet<String> = edges[i]
                .iter()
                .filter(|v| residual.iter().filter(|e| e.contains(*v)).count() > 1)
                .cloned()
                .collect();
            out.insert(names[i].clone(), kept);
        }
        let vertices = out.values().flatten().cloned().collect();
        let atoms = h
            .atoms
            .iter()
            .filter(|a| out.contains_key(&a.relation))
            .cloned()
            .collect();
        return Ok(Gyo::Cyclic(Hypergraph {
            vertices,
            edges: out,
            atoms,
        }));
    }

    // Node i of the tree holds atom i of the hypergraph.
    let edge_of_atom: Vec<usize> = h
        .atoms
        .iter()
        .map(|a| names.iter().position(|n| **n == a.relation).expect("edge per atom"))
        .collect();
    let atom_of_edge = |e: usize| edge_of_atom.iter().position(|&x| x == e).unwrap();
    let mut parent: Vec<Option<usize>> = vec![None; h.atoms.len()];
    for (ear, witness) in &elim.links {
        let w = witness.expect("connected hypergraph ears always have a witness");
        parent[atom_of_edge(*ear)] = Some(atom_of_edge(w));
    }
    let layout = (0..h.atoms.len()).map(|i| (vec![i], parent[i], None)).collect();
    JoinTree::new(h.atoms.clone(), layout).map(Gyo::Tree)
}

/// GYO acyclicity of an arbitrary (possibly disconnected) family of attribute sets.
pub fn is_acyclic(edges: &[BTreeSet<String>]) -> bool {
    let refs: Vec<&BTreeSet<String>> = edges.iter().filter(|e| !e.is_empty()).collect();
    eliminate(&refs, false).remaining.len() <= 1
}
