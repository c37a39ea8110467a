//! Join trees and generalized hypertree decompositions.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::gyo::is_acyclic;
use super::{Atom, ConjunctiveQuery, QueryError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    /// Indices into [`JoinTree::atoms`], ordered by relation name.
    pub atoms: Vec<usize>,
    /// Attribute bag of the node, sorted.
    pub attrs: Vec<String>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Attributes shared with the parent, sorted; empty for the root.
    pub shared: Vec<String>,
}

/// Atom indices, parent node and optional explicit bag of one node.
pub type NodeLayout = (Vec<usize>, Option<usize>, Option<Vec<String>>);

/// A rooted tree over atoms satisfying the running-intersection property.
/// Plain join trees hold one atom per node; hypertree decompositions may
/// group several atoms in a node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JoinTree {
    atoms: Vec<Atom>,
    nodes: Vec<TreeNode>,
    root: usize,
}

/// One node of a decomposition file: `{"atoms": [...], "parent": index|null}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GhdNodeSpec {
    pub atoms: Vec<String>,
    pub parent: Option<usize>,
    /// Optional explicit bag; defaults to the union of the node's atom attributes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attrs: Option<Vec<String>>,
}

impl GhdNodeSpec {
    pub fn parse_file(text: &str) -> Result<Vec<GhdNodeSpec>, QueryError> {
        serde_json::from_str(text).map_err(|e| QueryError::DecompositionFormat(e.to_string()))
    }
}

impl JoinTree {
    /// Builds and validates a tree from `(atom indices, parent, explicit bag)` per node.
    pub fn new(atoms: Vec<Atom>, layout: Vec<NodeLayout>) -> Result<JoinTree, QueryError> {
        let invalid = |m: String| Err(QueryError::InvalidDecomposition(m));
        if layout.is_empty() {
            return invalid("decomposition has no nodes".into());
        }
        let n = layout.len();
        let mut owner: Vec<Option<usize>> = vec![None; atoms.len()];
        for (node, (members, _, _)) in layout.iter().enumerate() {
            if members.is_empty() {
                return invalid(format!("node {node} holds no atoms"));
            }
            for &a in members {
                if a >= atoms.len() {
                    return invalid(format!("node {node} references atom index {a}"));
                }
                if let Some(prev) = owner[a] {
                    return invalid(format!(
                        "atom {} assigned to nodes {prev} and {node}",
                        atoms[a].relation
                    ));
                }
                owner[a] = Some(node);
            }
        }
        if let Some(a) = owner.iter().position(Option::is_none) {
            return invalid(format!("atom {} is not assigned to any node", atoms[a].relation));
        }

        let roots: Vec<usize> = (0..n).filter(|&i| layout[i].1.is_none()).collect();
        if roots.len() != 1 {
            return invalid(format!("expected exactly one root, found {}", roots.len()));
        }
        let root = roots[0];
        for (i, (_, parent, _)) in layout.iter().enumerate() {
            if let Some(p) = parent {
                if *p >= n || *p == i {
                    return invalid(format!("node {i} has invalid parent {p}"));
                }
            }
        }
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(p) = layout[cur].1 {
                cur = p;
                steps += 1;
                if steps > n {
                    return invalid(format!("parent pointers from node {start} form a cycle"));
                }
            }
        }

        let mut nodes = Vec::with_capacity(n);
        for (i, (members, parent, bag)) in layout.iter().enumerate() {
            let mut members = members.clone();
            members.sort_by(|&a, &b| atoms[a].relation.cmp(&atoms[b].relation));
            let covered: BTreeSet<String> = members.iter().flat_map(|&a| atoms[a].attrs.iter().cloned()).collect();
            let attrs: BTreeSet<String> = match bag {
                Some(bag) => {
                    let bag: BTreeSet<String> = bag.iter().cloned().collect();
                    if let Some(missing) = covered.difference(&bag).next() {
                        return invalid(format!("node {i} does not cover attribute {missing} of its atoms"));
                    }
                    bag
                }
                None => covered,
            };
            nodes.push(TreeNode {
                atoms: members,
                attrs: attrs.into_iter().collect(),
                parent: *parent,
                children: Vec::new(),
                shared: Vec::new(),
            });
        }
        for i in 0..n {
            if let Some(p) = nodes[i].parent {
                nodes[p].children.push(i);
                let shared = nodes[i]
                    .attrs
                    .iter()
                    .filter(|a| nodes[p].attrs.contains(a))
                    .cloned()
                    .collect();
                nodes[i].shared = shared;
            }
        }

        // Running intersection: the nodes holding an attribute form a subtree,
        // i.e. exactly (holders - 1) tree edges join two holders.
        let all: BTreeSet<&String> = nodes.iter().flat_map(|nd| nd.attrs.iter()).collect();
        for attr in all {
            let holders = nodes.iter().filter(|nd| nd.attrs.contains(attr)).count();
            let links = nodes
                .iter()
                .filter(|nd| nd.attrs.contains(attr) && nd.parent.is_some_and(|p| nodes[p].attrs.contains(attr)))
                .count();
            if links + 1 != holders {
                return invalid(format!("running intersection violated for attribute {attr}"));
            }
        }

        Ok(JoinTree { atoms, nodes, root })
    }

    /// The trivial decomposition: every atom in one node.
    pub fn single_node(q: &ConjunctiveQuery) -> JoinTree {
        let all = (0..q.atoms.len()).collect();
        JoinTree::new(q.atoms.clone(), vec![(all, None, None)]).expect("single node is always valid")
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Node holding the atom over `relation`.
    pub fn node_of(&self, relation: &str) -> Option<usize> {
        let a = self.atoms.iter().position(|x| x.relation == relation)?;
        self.nodes.iter().position(|nd| nd.atoms.contains(&a))
    }

    /// Display name of a node: its relations joined by `+`.
    pub fn node_name(&self, node: usize) -> String {
        let names: Vec<&str> = self.nodes[node]
            .atoms
            .iter()
            .map(|&a| self.atoms[a].relation.as_str())
            .collect();
        names.join("+")
    }

    /// Maximum number of atoms grouped in one node.
    pub fn max_atoms_per_node(&self) -> usize {
        self.nodes.iter().map(|n| n.atoms.len()).max().unwrap_or(0)
    }

    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.nodes[v].children.iter().rev());
        }
        out
    }

    pub fn postorder(&self) -> Vec<usize> {
        let mut out = self.preorder();
        // reverse preorder visits every child before its parent
        out.reverse();
        out
    }

    /// For a tree whose undirected shape is a simple path of single-atom
    /// nodes, the node sequence starting from the endpoint with the smaller
    /// relation name.
    pub fn path_order(&self) -> Option<Vec<usize>> {
        if self.nodes.iter().any(|n| n.atoms.len() != 1) {
            return None;
        }
        let n = self.nodes.len();
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                adj[i].push(p);
                adj[p].push(i);
            }
        }
        if adj.iter().any(|a| a.len() > 2) {
            return None;
        }
        if n == 1 {
            return Some(vec![0]);
        }
        let start = (0..n)
            .filter(|&i| adj[i].len() == 1)
            .min_by(|&a, &b| self.node_name(a).cmp(&self.node_name(b)))?;
        let mut order = vec![start];
        let mut prev = usize::MAX;
        let mut cur = start;
        while let Some(&next) = adj[cur].iter().find(|&&x| x != prev) {
            order.push(next);
            prev = cur;
            cur = next;
        }
        Some(order)
    }
}

/// Validate a user-supplied decomposition against the query.
pub fn validate_ghd(q: &ConjunctiveQuery, spec: &[GhdNodeSpec]) -> Result<JoinTree, QueryError> {
    let mut layout = Vec::with_capacity(spec.len());
    for node in spec {
        let mut members = Vec::with_capacity(node.atoms.len());
        for rel in &node.atoms {
            let idx = q
                .atom_index(rel)
                .ok_or_else(|| QueryError::InvalidDecomposition(format!("unknown atom {rel}")))?;
            if members.contains(&idx) {
                return Err(QueryError::InvalidDecomposition(format!(
                    "atom {rel} listed twice in one node"
                )));
            }
            members.push(idx);
        }
        layout.push((members, node.parent, node.attrs.clone()));
    }
    JoinTree::new(q.atoms.clone(), layout)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DoublyAcyclic {
    pub value: bool,
    /// A node whose surrounding parent/children schemas form a cycle.
    pub witness: Option<String>,
}

/// Whether, at every node, the parent-shared schema together with the
/// children-shared schemas forms an acyclic hypergraph.
pub fn is_doubly_acyclic(t: &JoinTree) -> DoublyAcyclic {
    for v in t.preorder() {
        let node = &t.nodes[v];
        let mut edges: Vec<BTreeSet<String>> = Vec::new();
        if node.parent.is_some() {
            edges.push(node.shared.iter().cloned().collect());
        }
        for &c in &node.children {
            edges.push(t.nodes[c].shared.iter().cloned().collect());
        }
        if !is_acyclic(&edges) {
            return DoublyAcyclic {
                value: false,
                witness: Some(t.node_name(v)),
            };
        }
    }
    DoublyAcyclic {
        value: true,
        witness: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{build_hypergraph, gyo_decompose, parse_query, Gyo};

    fn acyclic_tree(text: &str) -> JoinTree {
        match gyo_decompose(&build_hypergraph(&parse_query(text).unwrap())).unwrap() {
            Gyo::Tree(t) => t,
            Gyo::Cyclic(_) => panic!("cyclic"),
        }
    }

    fn specs(json: &str) -> Vec<GhdNodeSpec> {
        GhdNodeSpec::parse_file(json).unwrap()
    }

    #[test]
    fn doubly_acyclic_examples() {
        assert!(is_doubly_acyclic(&acyclic_tree("Q :- R1(A,B), R2(B,C), R3(C,D), R4(D,E).")).value);
        let star = acyclic_tree("Q :- R1(A,B,C), R2(A,B), R3(B,C), R4(C,A).");
        assert_eq!(star.node_name(star.root()), "R1");
        let d = is_doubly_acyclic(&star);
        assert!(!d.value);
        assert_eq!(d.witness.as_deref(), Some("R1"));
        assert!(is_doubly_acyclic(&acyclic_tree("Q :- R(A,B).")).value);
    }

    #[test]
    fn ghd_single_node_triangle() {
        let q = parse_query("Q :- R1(A,B), R2(B,C), R3(C,A).").unwrap();
        let t = validate_ghd(&q, &specs(r#"[{"atoms":["R1","R2","R3"],"parent":null}]"#)).unwrap();
        assert_eq!(t.max_atoms_per_node(), 3);
        assert_eq!(JoinTree::single_node(&q), t);
    }

    #[test]
    fn ghd_matching_join_tree() {
        let q = parse_query("Q :- R1(A,B), R2(B,C), R3(C,D).").unwrap();
        let t = validate_ghd(
            &q,
            &specs(r#"[{"atoms":["R1"],"parent":null},{"atoms":["R2"],"parent":0},{"atoms":["R3"],"parent":1}]"#),
        )
        .unwrap();
        assert_eq!(t.max_atoms_per_node(), 1);
        assert_eq!(t.nodes()[1].shared, vec!["B".to_string()]);
    }

    #[test]
    fn ghd_four_cycle() {
        let q = parse_query("Q :- R1(A,B), R2(B,C), R3(C,D), R4(D,A).").unwrap();
        let t = validate_ghd(
            &q,
            &specs(r#"[{"atoms":["R1","R2"],"parent":null},{"atoms":["R3","R4"],"parent":0}]"#),
        )
        .unwrap();
        assert_eq!(t.max_atoms_per_node(), 2);
        assert_eq!(t.nodes()[1].shared, vec!["A".to_string(), "C".to_string()]);
        // one atom per node cannot satisfy running intersection on a cycle
        let bad = validate_ghd(
            &q,
            &specs(
                r#"[{"atoms":["R1"],"parent":null},{"atoms":["R2"],"parent":0},{"atoms":["R3"],"parent":1},{"atoms":["R4"],"parent":2}]"#,
            ),
        );
        assert!(matches!(bad, Err(QueryError::InvalidDecomposition(m)) if m.contains("running intersection")));
    }

    #[test]
    fn ghd_assignment_errors() {
        let q = parse_query("Q :- R1(A,B), R2(B,C).").unwrap();
        let e = validate_ghd(&q, &specs(r#"[{"atoms":["R1"],"parent":null}]"#));
        assert!(matches!(e, Err(QueryError::InvalidDecomposition(m)) if m.contains("not assigned")));
        let e = validate_ghd(
            &q,
            &specs(r#"[{"atoms":["R1","R2"],"parent":null},{"atoms":["R2"],"parent":0}]"#),
        );
        assert!(matches!(e, Err(QueryError::InvalidDecomposition(m)) if m.contains("assigned to nodes")));
        let e = validate_ghd(&q, &specs(r#"[{"atoms":["R9","R1","R2"],"parent":null}]"#));
        assert!(matches!(e, Err(QueryError::InvalidDecomposition(m)) if m.contains("unknown atom")));
        let e = validate_ghd(
            &q,
            &specs(r#"[{"atoms":["R1"],"parent":1},{"atoms":["R2"],"parent":0}]"#),
        );
        assert!(e.is_err());
        let e = validate_ghd(&q, &specs(r#"[{"atoms":["R1","R2"],"parent":null,"attrs":["A","B"]}]"#));
        assert!(matches!(e, Err(QueryError::InvalidDecomposition(m)) if m.contains("does not cover")));
        assert!(GhdNodeSpec::parse_file("{").is_err());
    }

    #[test]
    fn traversal_orders() {
        let t = acyclic_tree("Q :- R1(A,B,C), R2(A,B,D), R3(A,E), R4(B,F).");
        let pre = t.preorder();
        assert_eq!(pre[0], t.root());
        let post = t.postorder();
        assert_eq!(*post.last().unwrap(), t.root());
        assert!(t.path_order().is_none());
    }
}
