//! Botjoin/topjoin passes and multiplicity-table construction over a join tree.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::query::JoinTree;
use crate::relation::{Count, Database, Relation, RelationError};

use super::bind::bind_atom;
use super::table::{ColumnPredicate, Factor, MultiplicityTable};

/// Environment variable overriding [`Engine::mem_rows`].
pub const MEM_ROWS_ENV: &str = "TSENS_MEM_ROWS";

/// Evaluation settings shared by all passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Engine {
    /// Maximum distinct rows of any intermediate join.
    pub mem_rows: usize,
    /// Keep only the `k` most frequent keys exactly in each pass table.
    pub topk: Option<usize>,
}

impl Default for Engine {
    fn default() -> Self {
        Engine {
            mem_rows: 50_000_000,
            topk: None,
        }
    }
}

impl Engine {
    /// Default settings with the memory budget taken from [`MEM_ROWS_ENV`] when set.
    pub fn from_env() -> Result<Engine> {
        let mut engine = Engine::default();
        if let Ok(raw) = std::env::var(MEM_ROWS_ENV) {
            engine.mem_rows = raw
                .trim()
                .parse()
                .ok()
                .filter(|&n: &usize| n > 0)
                .ok_or_else(|| Error::Config(format!("{MEM_ROWS_ENV} must be a positive integer, got {raw:?}")))?;
        }
        Ok(engine)
    }

    pub fn with_topk(mut self, k: usize) -> Result<Engine> {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        self.topk = Some(k);
        Ok(self)
    }

    /// Join `parts` and group onto the attributes of `out` that occur in
    /// them. Parts are taken in the given order, except that the next part
    /// is the first one sharing an attribute with the result so far; columns
    /// no longer needed are summed out after each join.
    pub(crate) fn join_group(&self, parts: &[&Relation], out: &[String]) -> Result<Relation> {
        let mut remaining: Vec<&Relation> = parts.to_vec();
        let mut acc = Relation::unit();
        while !remaining.is_empty() {
            let pick = remaining
                .iter()
                .position(|r| r.schema().iter().any(|a| acc.position(a).is_some()))
                .unwrap_or(0);
            let next = remaining.remove(pick);
            acc = acc.cnt_join_limited(next, self.mem_rows)?;
            let needed: Vec<String> = acc
                .schema()
                .iter()
                .filter(|a| out.contains(a) || remaining.iter().any(|r| r.position(a).is_some()))
                .cloned()
                .collect();
            if needed.len() < acc.arity() {
                acc = acc.groupby_sum(&needed)?;
            }
        }
        let present: Vec<&String> = out.iter().filter(|a| acc.position(a).is_some()).collect();
        Ok(acc.groupby_sum(&present)?)
    }

    /// Raise every count below the k-th largest to that value.
    fn truncate(&self, rel: Relation) -> Relation {
        let Some(k) = self.topk else { return rel };
        if rel.distinct_len() <= k {
            return rel;
        }
        let mut counts: Vec<Count> = rel.rows().iter().map(|(_, c)| *c).collect();
        counts.sort_unstable_by(|a, b| b.cmp(a));
        let kth = counts[k - 1];
        rel.map_counts(|_, c| c.max(kth))
    }

    pub(crate) fn bind(&self, db: &Database, tree: &JoinTree) -> Result<Vec<Relation>> {
        tree.atoms().iter().map(|a| bind_atom(db, a)).collect()
    }

    /// Botjoin of every node. Non-root nodes are grouped onto their
    /// parent-shared attributes; the root is grouped onto no attributes, so
    /// its single count is the join size.
    pub(crate) fn botjoins(&self, tree: &JoinTree, bound: &[Relation]) -> Result<Vec<Relation>> {
        let nodes = tree.nodes();
        let mut bot = vec![Relation::unit(); nodes.len()];
        for v in tree.postorder() {
            let node = &nodes[v];
            let rel = {
                let mut parts: Vec<&Relation> = node.atoms.iter().map(|&a| &bound[a]).collect();
                parts.extend(node.children.iter().map(|&c| &bot[c]));
                let out: &[String] = if node.parent.is_some() { &node.shared } else { &[] };
                self.join_group(&parts, out)?
                    .with_name(format!("bot:{}", tree.node_name(v)))
            };
            bot[v] = if node.parent.is_some() { self.truncate(rel) } else { rel };
        }
        Ok(bot)
    }

    /// Topjoin of every non-root node, grouped onto its parent-shared attributes.
    pub(crate) fn topjoins(
        &self,
        tree: &JoinTree,
        bound: &[Relation],
        bot: &[Relation],
    ) -> Result<Vec<Option<Relation>>> {
        let nodes = tree.nodes();
        let mut top: Vec<Option<Relation>> = vec![None; nodes.len()];
        for v in tree.preorder() {
            let node = &nodes[v];
            for &c in &node.children {
                let rel = {
                    let mut parts: Vec<&Relation> = node.atoms.iter().map(|&a| &bound[a]).collect();
                    parts.extend(top[v].as_ref());
                    parts.extend(node.children.iter().filter(|&&s| s != c).map(|&s| &bot[s]));
                    self.join_group(&parts, &nodes[c].shared)?
                        .with_name(format!("top:{}", tree.node_name(c)))
                };
                top[c] = Some(self.truncate(rel));
            }
        }
        Ok(top)
    }

    /// Multiplicity table of every atom of the tree (in tree atom order),
    /// each multiplied by `scale`.
    ///
    /// The context of an atom is its node's topjoin, its node's child
    /// botjoins and the other atoms of its node. Context parts are split into
    /// groups connected by shared attributes; each group becomes one factor
    /// over the key attributes it covers, or a scalar if it covers none.
    pub(crate) fn tables(
        &self,
        db: &Database,
        tree: &JoinTree,
        bound: &[Relation],
        passes: &PassTables,
        scale: Count,
    ) -> Result<Vec<MultiplicityTable>> {
        let atoms = tree.atoms();
        let mut out: Vec<Option<MultiplicityTable>> = vec![None; atoms.len()];
        for (v, node) in tree.nodes().iter().enumerate() {
            for &a in &node.atoms {
                let atom = &atoms[a];
                let mut parts: Vec<&Relation> = Vec::new();
                parts.extend(passes.top[v].as_ref());
                parts.extend(node.children.iter().map(|&c| &passes.bot[c]));
                parts.extend(node.atoms.iter().filter(|&&b| b != a).map(|&b| &bound[b]));

                let key_columns: Vec<usize> = (0..atom.attrs.len())
                    .filter(|&c| {
                        atoms
                            .iter()
                            .enumerate()
                            .any(|(b, other)| b != a && other.position(&atom.attrs[c]).is_some())
                    })
                    .collect();
                let predicates = ColumnPredicate::resolve_all(atom, db.dict());

                let mut table_scale = scale;
                let mut factors = Vec::new();
                for group in connected_groups(&parts) {
                    let group_parts: Vec<&Relation> = group.iter().map(|&i| parts[i]).collect();
                    let attrs: BTreeSet<&String> = group_parts.iter().flat_map(|r| r.schema().iter()).collect();
                    let columns: Vec<usize> = key_columns
                        .iter()
                        .copied()
                        .filter(|&c| attrs.contains(&atom.attrs[c]))
                        .collect();
                    let names: Vec<String> = columns.iter().map(|&c| atom.attrs[c].clone()).collect();
                    let grouped = self.join_group(&group_parts, &names)?;
                    if columns.is_empty() {
                        let total = grouped.total()?;
                        table_scale = table_scale.checked_mul(total).ok_or_else(|| RelationError::Overflow {
                            context: format!("multiplicity table of {}", atom.relation),
                        })?;
                    } else {
                        let table = grouped
                            .filter(|t| {
                                predicates
                                    .iter()
                                    .all(|p| match columns.iter().position(|&c| c == p.column) {
                                        Some(i) => p.accepts(t[i]),
                                        None => true,
                                    })
                            })
                            .with_name(format!("T:{}", atom.relation));
                        factors.push(Factor { columns, table });
                    }
                }
                // factors in ascending order of their first column
                factors.sort_by_key(|f| f.columns[0]);
                out[a] = Some(MultiplicityTable {
                    relation: atom.relation.clone(),
                    schema: atom.attrs.clone(),
                    key_columns,
                    factors,
                    scale: table_scale,
                    predicates,
                });
            }
        }
        Ok(out.into_iter().map(|t| t.expect("every atom sits in a node")).collect())
    }
}

/// Indices of `parts` grouped into classes connected through shared
/// attributes, in order of each class's first member. Nullary parts are
/// classes of their own.
fn connected_groups(parts: &[&Relation]) -> Vec<Vec<usize>> {
    let mut class: Vec<usize> = (0..parts.len()).collect();
    for i in 0..parts.len() {
        for j in (i + 1)..parts.len() {
            if parts[i].schema().iter().any(|a| parts[j].position(a).is_some()) {
                let (ci, cj) = (class[i], class[j]);
                let (keep, drop) = (ci.min(cj), ci.max(cj));
                for c in class.iter_mut() {
                    if *c == drop {
                        *c = keep;
                    }
                }
            }
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for (i, c) in class.into_iter().enumerate() {
        match groups.iter_mut().find(|(k, _)| *k == c) {
            Some((_, g)) => g.push(i),
            None => groups.push((c, vec![i])),
        }
    }
    groups.into_iter().map(|(_, g)| g).collect()
}

/// Topjoins and botjoins of every node of a join tree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PassTables {
    /// Botjoin per node, over the node's parent-shared attributes. The root's
    /// entry is nullary and holds the join size.
    pub bot: Vec<Relation>,
    /// Topjoin per node; `None` exactly at the root.
    pub top: Vec<Option<Relation>>,
}

impl PassTables {
    pub fn join_size(&self, tree: &JoinTree) -> Result<Count> {
        Ok(self.bot[tree.root()].total()?)
    }

    /// Largest distinct-key count over all topjoins and non-root botjoins.
    pub fn max_keys(&self, tree: &JoinTree) -> usize {
        let bots = self
            .bot
            .iter()
            .enumerate()
            .filter(|(v, _)| *v != tree.root())
            .map(|(_, r)| r.distinct_len());
        let tops = self.top.iter().flatten().map(|r| r.distinct_len());
        bots.chain(tops).max().unwrap_or(0)
    }
}

/// Botjoins of every node (topjoins left empty).
pub fn compute_botjoins(db: &Database, tree: &JoinTree) -> Result<PassTables> {
    let engine = Engine::default();
    let bound = engine.bind(db, tree)?;
    Ok(PassTables {
        bot: engine.botjoins(tree, &bound)?,
        top: vec![None; tree.len()],
    })
}

/// Fill in the topjoins given computed botjoins.
pub fn compute_topjoins(db: &Database, tree: &JoinTree, bot: PassTables) -> Result<PassTables> {
    let engine = Engine::default();
    let bound = engine.bind(db, tree)?;
    let top = engine.topjoins(tree, &bound, &bot.bot)?;
    Ok(PassTables { bot: bot.bot, top })
}

/// Multiplicity table of every atom of the tree, in tree atom order.
pub fn compute_multiplicity_tables(
    db: &Database,
    tree: &JoinTree,
    passes: &PassTables,
) -> Result<Vec<MultiplicityTable>> {
    let engine = Engine::default();
    let bound = engine.bind(db, tree)?;
    engine.tables(db, tree, &bound, passes, 1)
}
