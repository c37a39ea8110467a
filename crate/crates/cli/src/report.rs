//! JSON rendering. Counts are decimal strings; keys come out sorted.

use serde_json::{json, Map, Value};
use tsens::dp::DpAnswer;
use tsens::query::{DoublyAcyclic, Hypergraph, JoinTree};
use tsens::relation::Count;
use tsens::sensitivity::{SensitivityReport, Stats};

pub const SCHEMA_VERSION: u32 = 1;

pub fn count(c: Count) -> Value {
    Value::String(c.to_string())
}

pub fn envelope(command: &str, config: Value, result: Value) -> Value {
    json!({
        "schema": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "result": result,
    })
}

pub fn error(kind: &str, code: i32, message: &str) -> Value {
    json!({
        "schema": SCHEMA_VERSION,
        "error": { "kind": kind, "exit_code": code, "message": message },
    })
}

fn stats(s: &Stats, timings: bool) -> Value {
    let mut out = Map::new();
    out.insert("max_atoms_per_node".into(), json!(s.max_atoms_per_node));
    out.insert(
        "table_rows".into(),
        s.table_rows
            .iter()
            .map(|(name, rows)| json!({ "table": name, "rows": rows }))
            .collect(),
    );
    if timings {
        let ms: Map<String, Value> = s
            .timings
            .iter()
            .map(|(phase, d)| (phase.clone(), json!(d.as_secs_f64() * 1e3)))
            .collect();
        out.insert("timings_ms".into(), Value::Object(ms));
    }
    Value::Object(out)
}

pub fn sensitivity(r: &SensitivityReport, timings: bool) -> Value {
    let witness = r.witness.as_ref().map_or(
        Value::Null,
        |w| json!({ "relation": w.relation, "values": w.values, "tsens": count(w.tsens) }),
    );
    let per_relation: Vec<Value> = r
        .per_relation
        .iter()
        .map(|b| json!({ "relation": b.relation, "values": b.values, "tsens": count(b.tsens) }))
        .collect();
    json!({
        "ls": count(r.ls),
        "join_size": count(r.join_size),
        "witness": witness,
        "per_relation": per_relation,
        "stats": stats(&r.stats, timings),
    })
}

pub fn dp_answer(a: &DpAnswer) -> Value {
    json!({
        "value": a.value,
        "tau": count(a.tau),
        "noise_scale": a.noise_scale,
        "budget": {
            "epsilon": a.budget.epsilon,
            "epsilon_tsens": a.budget.epsilon_tsens,
            "estimate": a.budget.estimate,
            "sparse_vector": a.budget.sparse_vector,
            "answer": a.budget.answer,
        },
        "debug": {
            "raw_truncated": count(a.raw_truncated),
            "unclamped": a.unclamped,
        },
    })
}

pub fn tree(t: &JoinTree) -> Value {
    let nodes: Vec<Value> = t
        .preorder()
        .into_iter()
        .map(|v| {
            let node = &t.nodes()[v];
            let relations: Vec<&str> = node.atoms.iter().map(|&i| t.atoms()[i].relation.as_str()).collect();
            json!({
                "name": t.node_name(v),
                "relations": relations,
                "attrs": node.attrs,
                "parent": node.parent.map(|p| t.node_name(p)),
                "shared": node.shared,
            })
        })
        .collect();
    json!({
        "root": t.node_name(t.root()),
        "max_atoms_per_node": t.max_atoms_per_node(),
        "nodes": nodes,
    })
}

pub fn residual(h: &Hypergraph) -> Value {
    h.edges
        .iter()
        .map(|(rel, attrs)| (rel.clone(), json!(attrs)))
        .collect::<Map<String, Value>>()
        .into()
}

pub fn doubly_acyclic(d: &DoublyAcyclic) -> Value {
    json!({ "value": d.value, "witness": d.witness })
}

/// JSON Schema every emitted document validates against.
pub const JSON_SCHEMA: &str = include_str!("../schema/report.schema.json");
