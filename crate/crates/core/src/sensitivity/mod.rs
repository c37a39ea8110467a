//! Local sensitivity of counting conjunctive queries.
//!
//! A query is evaluated over one join tree per connected component. Two
//! passes over each tree (botjoins leaf to root, topjoins root to leaf)
//! yield, for every atom, a multiplicity table giving the number of join
//! results that one copy of any tuple of that relation participates in.

mod bind;
mod passes;
mod path;
mod table;

use std::time::{Duration, Instant};

pub use bind::apply_selections;
pub use passes::{compute_botjoins, compute_multiplicity_tables, compute_topjoins, Engine, PassTables, MEM_ROWS_ENV};
pub use path::ls_path;
pub use table::{Factor, MultiplicityTable};

use crate::error::{Error, Result};
use crate::query::{
    build_hypergraph, connected_components, gyo_decompose, Atom, CmpOp, ConjunctiveQuery, Gyo, JoinTree,
};
use crate::relation::{project, Count, Database, Relation, RelationError, Tuple, ValueDict, ValueId};

/// The most sensitive tuple of the instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub relation: String,
    pub tuple: Tuple,
    pub values: Vec<String>,
    pub tsens: Count,
}

/// The most sensitive tuple of one relation; `tuple` is `None` when every
/// candidate has sensitivity zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationBest {
    pub relation: String,
    pub tuple: Option<Tuple>,
    pub values: Option<Vec<String>>,
    pub tsens: Count,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub timings: Vec<(String, Duration)>,
    /// Distinct rows of every pass table and multiplicity-table factor.
    pub table_rows: Vec<(String, usize)>,
    pub max_atoms_per_node: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SensitivityReport {
    pub ls: Count,
    pub witness: Option<Witness>,
    /// One entry per atom, ordered by relation name.
    pub per_relation: Vec<RelationBest>,
    /// Size of the query answer on the (selected) instance.
    pub join_size: Count,
    pub stats: Stats,
}

impl SensitivityReport {
    /// Equality of everything but the statistics.
    pub fn same_result(&self, other: &SensitivityReport) -> bool {
        self.ls == other.ls
            && self.witness == other.witness
            && self.per_relation == other.per_relation
            && self.join_size == other.join_size
    }

    pub(crate) fn from_bests(per_relation: Vec<RelationBest>, join_size: Count, stats: Stats) -> SensitivityReport {
        let mut per_relation = per_relation;
        per_relation.sort_by(|a, b| a.relation.cmp(&b.relation));
        let ls = per_relation.iter().map(|b| b.tsens).max().unwrap_or(0);
        let witness = per_relation.iter().find(|b| ls > 0 && b.tsens == ls).map(|b| Witness {
            relation: b.relation.clone(),
            tuple: b.tuple.clone().expect("positive sensitivity has a tuple"),
            values: b.values.clone().expect("positive sensitivity has a tuple"),
            tsens: b.tsens,
        });
        SensitivityReport {
            ls,
            witness,
            per_relation,
            join_size,
            stats,
        }
    }
}

/// Join trees covering the atoms of a query, one per evaluated component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plan {
    trees: Vec<JoinTree>,
}

impl Plan {
    /// GYO join tree of each connected component; fails on a cyclic component.
    pub fn acyclic(q: &ConjunctiveQuery) -> Result<Plan> {
        Self::per_component(q, false)
    }

    /// GYO join trees where possible; a cyclic component is evaluated as one node.
    pub fn auto(q: &ConjunctiveQuery) -> Result<Plan> {
        Self::per_component(q, true)
    }

    fn per_component(q: &ConjunctiveQuery, fallback: bool) -> Result<Plan> {
        let h = build_hypergraph(q);
        let mut trees = Vec::new();
        for component in connected_components(&h) {
            let sub = h.subgraph(&component);
            match gyo_decompose(&sub)? {
                Gyo::Tree(t) => trees.push(t),
                Gyo::Cyclic(_) if fallback => {
                    let all = (0..sub.atoms().len()).collect();
                    trees.push(JoinTree::new(sub.atoms().to_vec(), vec![(all, None, None)])?);
                }
                Gyo::Cyclic(_) => return Err(Error::Cyclic),
            }
        }
        Ok(Plan { trees })
    }

    /// A single decomposition covering every atom of `q`.
    pub fn from_tree(q: &ConjunctiveQuery, tree: JoinTree) -> Result<Plan> {
        let mut covered: Vec<&str> = tree.atoms().iter().map(|a| a.relation.as_str()).collect();
        let mut wanted: Vec<&str> = q.atoms.iter().map(|a| a.relation.as_str()).collect();
        covered.sort_unstable();
        wanted.sort_unstable();
        if covered != wanted {
            return Err(Error::Config(
                "decomposition does not cover exactly the query atoms".into(),
            ));
        }
        Ok(Plan { trees: vec![tree] })
    }

    pub fn trees(&self) -> &[JoinTree] {
        &self.trees
    }

    pub fn max_atoms_per_node(&self) -> usize {
        self.trees.iter().map(JoinTree::max_atoms_per_node).max().unwrap_or(0)
    }
}

/// Per-tree intermediate state.
#[derive(Clone, Debug)]
pub struct TreeAnalysis {
    pub tree: JoinTree,
    /// Atom relations after selection and renaming, in tree atom order.
    pub bound: Vec<Relation>,
    pub passes: PassTables,
    pub join_size: Count,
}

/// Everything computed for one query on one instance.
#[derive(Clone, Debug)]
pub struct Analysis {
    db: Database,
    query: ConjunctiveQuery,
    trees: Vec<TreeAnalysis>,
    tables: Vec<MultiplicityTable>,
    report: SensitivityReport,
}

impl Analysis {
    /// The instance after selections, with selection literals interned.
    pub fn database(&self) -> &Database {
        &self.db
    }

    pub fn query(&self) -> &ConjunctiveQuery {
        &self.query
    }

    pub fn trees(&self) -> &[TreeAnalysis] {
        &self.trees
    }

    /// Multiplicity tables in query atom order.
    pub fn tables(&self) -> &[MultiplicityTable] {
        &self.tables
    }

    pub fn table(&self, relation: &str) -> Option<&MultiplicityTable> {
        self.tables.iter().find(|t| t.relation == relation)
    }

    pub fn report(&self) -> &SensitivityReport {
        &self.report
    }

    pub fn into_report(self) -> SensitivityReport {
        self.report
    }

    pub fn join_size(&self) -> Count {
        self.report.join_size
    }

    /// Largest distinct-key count over every topjoin and non-root botjoin.
    pub fn max_pass_keys(&self) -> usize {
        self.trees.iter().map(|t| t.passes.max_keys(&t.tree)).max().unwrap_or(0)
    }

    /// Sensitivity of a tuple given as strings; values unknown to the
    /// dictionary have no join partners.
    pub fn tuple_sensitivity_str<S: AsRef<str>>(&self, relation: &str, values: &[S]) -> Result<Count> {
        let table = self
            .table(relation)
            .ok_or_else(|| Error::UnknownRelation(relation.to_owned()))?;
        if values.len() != table.schema.len() {
            return Err(Error::TupleArity {
                relation: relation.to_owned(),
                expected: table.schema.len(),
                found: values.len(),
            });
        }
        let mut ids = Tuple::new();
        let mut unseen = Vec::new();
        for (col, v) in values.iter().enumerate() {
            match self.db.dict().get(v.as_ref()) {
                Some(id) => ids.push(id),
                // an unseen value joins with nothing
                None if table.key_columns.contains(&col) => return Ok(0),
                None => {
                    if !free_value_passes(table, col, v.as_ref(), self.db.dict()) {
                        return Ok(0);
                    }
                    unseen.push(col);
                    ids.push(ValueId::SENTINEL);
                }
            }
        }
        table.lookup_skipping(&ids, &unseen)
    }
}

/// Whether a literal string value passes the predicates on a column.
fn free_value_passes(table: &MultiplicityTable, col: usize, value: &str, dict: &ValueDict) -> bool {
    table.predicates.iter().filter(|p| p.column == col).all(|p| {
        let equal = p.literal.map(|l| dict.resolve(l) == value).unwrap_or(false);
        match p.op {
            CmpOp::Eq => equal,
            CmpOp::Ne => !equal,
        }
    })
}

impl Engine {
    /// Full analysis of `q` on `db` over the trees of `plan`.
    pub fn analyze(&self, db: &Database, q: &ConjunctiveQuery, plan: &Plan) -> Result<Analysis> {
        let mut timings = Vec::new();
        let mut clock = Instant::now();
        let mut lap = |name: &str, timings: &mut Vec<(String, Duration)>| {
            let now = Instant::now();
            timings.push((name.to_owned(), now - clock));
            clock = now;
        };

        let db = apply_selections(db, q)?;
        lap("selections", &mut timings);

        let mut trees = Vec::with_capacity(plan.trees.len());
        for tree in &plan.trees {
            let bound = self.bind(&db, tree)?;
            let bot = self.botjoins(tree, &bound)?;
            let join_size = if self.topk.is_some() {
                Engine { topk: None, ..*self }.botjoins(tree, &bound)?[tree.root()].total()?
            } else {
                bot[tree.root()].total()?
            };
            trees.push(TreeAnalysis {
                tree: tree.clone(),
                bound,
                passes: PassTables {
                    bot,
                    top: vec![None; tree.len()],
                },
                join_size,
            });
        }
        lap("botjoins", &mut timings);

        for t in &mut trees {
            t.passes.top = self.topjoins(&t.tree, &t.bound, &t.passes.bot)?;
        }
        lap("topjoins", &mut timings);

        let overflow = |context: &str| {
            Error::Relation(RelationError::Overflow {
                context: context.to_owned(),
            })
        };
        // component sizes as seen by the passes (inflated under top-k)
        let pass_sizes: Vec<Count> = trees
            .iter()
            .map(|t| t.passes.join_size(&t.tree))
            .collect::<Result<_>>()?;
        let mut tables: Vec<Option<MultiplicityTable>> = vec![None; q.atoms.len()];
        for (i, t) in trees.iter().enumerate() {
            let mut scale: Count = 1;
            for (j, s) in pass_sizes.iter().enumerate() {
                if i != j {
                    scale = scale.checked_mul(*s).ok_or_else(|| overflow("component join sizes"))?;
                }
            }
            for table in self.tables(&db, &t.tree, &t.bound, &t.passes, scale)? {
                let slot = q.atom_index(&table.relation).expect("plan covers the query atoms");
                tables[slot] = Some(table);
            }
        }
        let tables: Vec<MultiplicityTable> = tables
            .into_iter()
            .map(|t| t.ok_or_else(|| Error::Config("plan does not cover every atom".into())))
            .collect::<Result<_>>()?;
        lap("tables", &mut timings);

        let mut join_size: Count = 1;
        for t in &trees {
            join_size = join_size
                .checked_mul(t.join_size)
                .ok_or_else(|| overflow("join size"))?;
        }

        let mut bests = Vec::with_capacity(q.atoms.len());
        for (atom, table) in q.atoms.iter().zip(&tables) {
            let bound = trees
                .iter()
                .find_map(|t| {
                    t.tree
                        .atoms()
                        .iter()
                        .position(|a| a.relation == atom.relation)
                        .map(|k| &t.bound[k])
                })
                .expect("plan covers the query atoms");
            bests.push(best_of(table, atom, bound, db.dict())?);
        }
        lap("argmax", &mut timings);

        let mut table_rows = Vec::new();
        for t in &trees {
            for (v, r) in t.passes.bot.iter().enumerate() {
                if v != t.tree.root() {
                    table_rows.push((r.name().to_owned(), r.distinct_len()));
                }
            }
            for r in t.passes.top.iter().flatten() {
                table_rows.push((r.name().to_owned(), r.distinct_len()));
            }
        }
        for table in &tables {
            let rows = table.factors.iter().map(|f| f.table.distinct_len()).sum();
            table_rows.push((format!("T:{}", table.relation), rows));
        }

        let stats = Stats {
            timings,
            table_rows,
            max_atoms_per_node: plan.max_atoms_per_node(),
        };
        let report = SensitivityReport::from_bests(bests, join_size, stats);
        Ok(Analysis {
            db: db.into_owned(),
            query: q.clone(),
            trees,
            tables,
            report,
        })
    }

    /// Size of the query answer, from botjoins only.
    pub fn join_size(&self, db: &Database, plan: &Plan) -> Result<Count> {
        let exact = Engine { topk: None, ..*self };
        let mut size: Count = 1;
        for tree in &plan.trees {
            let bound = exact.bind(db, tree)?;
            let s = exact.botjoins(tree, &bound)?[tree.root()].total()?;
            size = size.checked_mul(s).ok_or_else(|| {
                Error::Relation(RelationError::Overflow {
                    context: "join size".into(),
                })
            })?;
        }
        Ok(size)
    }
}

/// Most sensitive tuple of one relation. Free columns copy the smallest
/// existing row matching the best key, or else take the extrapolated value.
pub(crate) fn best_of(
    table: &MultiplicityTable,
    atom: &Atom,
    bound: &Relation,
    dict: &ValueDict,
) -> Result<RelationBest> {
    let none = RelationBest {
        relation: table.relation.clone(),
        tuple: None,
        values: None,
        tsens: 0,
    };
    let (tsens, Some(key)) = table.max()? else {
        return Ok(none);
    };
    let Some(tuple) = complete_tuple(&table.key_columns, &key, atom, bound, dict) else {
        return Ok(none);
    };
    Ok(RelationBest {
        relation: table.relation.clone(),
        values: Some(dict.resolve_tuple(&tuple)),
        tuple: Some(tuple),
        tsens,
    })
}

pub(crate) fn complete_tuple(
    key_columns: &[usize],
    key: &[ValueId],
    atom: &Atom,
    bound: &Relation,
    dict: &ValueDict,
) -> Option<Tuple> {
    if let Some((row, _)) = bound
        .rows()
        .iter()
        .find(|(t, _)| project(t, key_columns).as_slice() == key)
    {
        return Some(row.clone());
    }
    let mut tuple = Tuple::new();
    for col in 0..atom.attrs.len() {
        match key_columns.iter().position(|&k| k == col) {
            Some(i) => tuple.push(key[i]),
            None => tuple.push(bind::free_value(atom, col, bound, dict)?),
        }
    }
    Some(tuple)
}

/// Sensitivity of tuple `t` of `relation`: the change in the query answer
/// from adding, or removing, one copy of it.
pub fn tuple_sensitivity(tables: &[MultiplicityTable], relation: &str, t: &[ValueId]) -> Result<Count> {
    tables
        .iter()
        .find(|x| x.relation == relation)
        .ok_or_else(|| Error::UnknownRelation(relation.to_owned()))?
        .lookup(t)
}

/// Local sensitivity of an acyclic (possibly disconnected) query.
pub fn ls_acyclic(db: &Database, q: &ConjunctiveQuery) -> Result<SensitivityReport> {
    Ok(Engine::default().analyze(db, q, &Plan::acyclic(q)?)?.into_report())
}

/// Local sensitivity over a hypertree decomposition of `q`.
pub fn ls_general(db: &Database, q: &ConjunctiveQuery, ghd: &JoinTree) -> Result<SensitivityReport> {
    let plan = Plan::from_tree(q, ghd.clone())?;
    Ok(Engine::default().analyze(db, q, &plan)?.into_report())
}

/// Upper bound on the local sensitivity keeping only `k` exact keys per pass table.
pub fn topk_bound(db: &Database, q: &ConjunctiveQuery, plan: &Plan, k: usize) -> Result<SensitivityReport> {
    Ok(Engine::default().with_topk(k)?.analyze(db, q, plan)?.into_report())
}
