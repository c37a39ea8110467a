//! End-to-end acceptance checks. Prints one verdict line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use tsens::dp::{laplace_cdf, Noise, TruncationCurve};
use tsens::oracle::{
    add_copy, brute_force_ls, reduce_3sat, remove_copy, representative_domain, selected, upward_sensitivity, Cnf3,
    Literal,
};
use tsens::query::{parse_query, ConjunctiveQuery};
use tsens::relation::{Count, Database, Tuple};
use tsens::sensitivity::{
    ls_acyclic, ls_general, ls_path, topk_bound, tuple_sensitivity, Analysis, Engine, Plan, SensitivityReport,
};
use tsens::synth::{self, Shape};

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn same(engine: &SensitivityReport, oracle: &SensitivityReport, ctx: &str) -> Result<(), String> {
    ensure(engine.same_result(oracle), || {
        format!(
            "{ctx}: engine ls {} witness {:?}, oracle ls {} witness {:?}",
            engine.ls, engine.witness, oracle.ls, oracle.witness
        )
    })
}

fn acyclic_suite() -> impl Iterator<Item = (u64, ConjunctiveQuery, Database)> {
    (0..200u64).map(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = Shape::default();
        let q = synth::acyclic_query(&mut rng, &shape);
        let db = synth::instance(&mut rng, &q, &shape);
        (seed, q, db)
    })
}

/// Compares every multiplicity-table entry (over the representative domain
/// and every materialized key) with the oracle's per-tuple recomputation.
fn tables_match(analysis: &Analysis, db: &Database, q: &ConjunctiveQuery, ctx: &str) -> Result<usize, String> {
    let sel = selected(db, q).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for atom in &q.atoms {
        let domain = representative_domain(&sel, q, &atom.relation).map_err(|e| e.to_string())?;
        let mut candidates: Vec<Tuple> = domain.tuples().collect();
        let table = analysis.table(&atom.relation).expect("table per atom");
        let free: Vec<Option<_>> = (0..atom.attrs.len())
            .map(|c| (!table.key_columns().contains(&c)).then(|| domain.values[c].first().copied()))
            .collect();
        let rows = table.materialize(1 << 20).map_err(|e| e.to_string())?;
        'rows: for (key, _) in rows.rows() {
            let mut full = Tuple::new();
            let mut k = key.iter();
            for f in &free {
                match f {
                    None => full.push(*k.next().expect("key column")),
                    Some(Some(v)) => full.push(*v),
                    Some(None) => continue 'rows,
                }
            }
            candidates.push(full);
        }
        for t in candidates {
            let expected = upward_sensitivity(&sel, q, &atom.relation, &t).map_err(|e| e.to_string())?;
            let got = tuple_sensitivity(analysis.tables(), &atom.relation, &t).map_err(|e| e.to_string())?;
            ensure(got == expected, || {
                format!("{ctx}: T[{}]{t:?} = {got}, oracle {expected}", atom.relation)
            })?;
            checked += 1;
        }
    }
    Ok(checked)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut entries = 0;
    for (seed, q, db) in acyclic_suite() {
        let ctx = format!("seed {seed}, {q}");
        let oracle = brute_force_ls(&db, &q).map_err(|e| e.to_string())?;
        let engine = ls_acyclic(&db, &q).map_err(|e| e.to_string())?;
        same(&engine, &oracle, &ctx)?;
        if let Some(w) = &engine.witness {
            let sel = selected(&db, &q).map_err(|e| e.to_string())?;
            let again = upward_sensitivity(&sel, &q, &w.relation, &w.tuple).map_err(|e| e.to_string())?;
            ensure(again == engine.ls, || format!("{ctx}: witness recomputes to {again}"))?;
        }
        let analysis = Engine::default()
            .analyze(&db, &q, &Plan::acyclic(&q).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        entries += tables_match(&analysis, &db, &q, &ctx)?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("200 instances, {entries} table entries, {elapsed:.2?}"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
        let (q, ghd) = synth::cyclic_query(&mut rng);
        let db = synth::instance(&mut rng, &q, &Shape::default());
        let engine = ls_general(&db, &q, &ghd).map_err(|e| e.to_string())?;
        let oracle = brute_force_ls(&db, &q).map_err(|e| e.to_string())?;
        same(&engine, &oracle, &format!("seed {seed}, {q}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("100 instances, {elapsed:.2?}"))
}

fn criterion_3() -> Outcome {
    let mut db = Database::new();
    let rows = |pairs: &[(&str, &str)]| -> Vec<(Vec<String>, Count)> {
        pairs
            .iter()
            .map(|(a, b)| (vec![a.to_string(), b.to_string()], 1))
            .collect()
    };
    let add = |db: &mut Database, name: &str, schema: [&str; 2], data| {
        db.add_relation(name, &schema, data).unwrap();
    };
    add(&mut db, "R1", ["A", "B"], rows(&[("a1", "b1"), ("a2", "b1")]));
    add(&mut db, "R2", ["B", "C"], rows(&[("b1", "c1")]));
    add(&mut db, "R3", ["C", "D"], rows(&[("c1", "d1"), ("c1", "d2")]));
    add(&mut db, "R4", ["D", "E"], rows(&[("d1", "e1"), ("d2", "e1")]));
    let q = parse_query("Q(A,B,C,D,E) :- R1(A,B), R2(B,C), R3(C,D), R4(D,E).").unwrap();
    let oracle = brute_force_ls(&db, &q).map_err(|e| e.to_string())?;
    for (name, r) in [
        ("path", ls_path(&db, &q)),
        ("acyclic", ls_acyclic(&db, &q)),
        ("oracle", Ok(oracle.clone())),
    ] {
        let r = r.map_err(|e| e.to_string())?;
        let w = r.witness.as_ref().ok_or("no witness")?;
        ensure(r.ls == 4 && w.relation == "R2" && w.values == ["b1", "c1"], || {
            format!("{name}: ls {} witness {w:?}", r.ls)
        })?;
    }
    Ok("LS = 4, witness R2(b1, c1)".into())
}

fn criterion_4() -> Outcome {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2_000 + seed);
        let m = rng.random_range(1..=5);
        let q = synth::shuffled_path_query(&mut rng, m);
        let db = synth::instance(
            &mut rng,
            &q,
            &Shape {
                max_rows: 8,
                ..Shape::default()
            },
        );
        let path = ls_path(&db, &q).map_err(|e| e.to_string())?;
        let tree = ls_acyclic(&db, &q).map_err(|e| e.to_string())?;
        same(&path, &tree, &format!("seed {seed}, {q}"))?;
    }
    Ok("100 instances".into())
}

/// Every sign pattern over three random variables, plus up to four random
/// clauses, in shuffled order.
fn unsatisfiable_core(vars: u32, rng: &mut ChaCha8Rng) -> Cnf3 {
    let picked: Vec<u32> = rand::seq::index::sample(rng, vars as usize, 3)
        .into_iter()
        .map(|v| v as u32 + 1)
        .collect();
    let mut clauses: Vec<[Literal; 3]> = (0..8u8)
        .map(|signs| {
            std::array::from_fn(|k| Literal {
                var: picked[k],
                negated: signs >> k & 1 == 1,
            })
        })
        .collect();
    let padding = rng.random_range(1..=4);
    clauses.extend_from_slice(Cnf3::random(vars, padding, rng).clauses());
    clauses.shuffle(rng);
    Cnf3::new(vars, clauses).expect("well-formed clauses")
}

fn criterion_5() -> Outcome {
    let mut satisfiable = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3_000 + seed);
        let vars = rng.random_range(3..=8);
        let f = if seed % 2 == 0 {
            Cnf3::random(vars, rng.random_range(1..=12), &mut rng)
        } else {
            unsatisfiable_core(vars, &mut rng)
        };
        let (db, q) = reduce_3sat(&f).map_err(|e| e.to_string())?;
        let ls = brute_force_ls(&db, &q).map_err(|e| e.to_string())?.ls;
        let sat = f.is_satisfiable().map_err(|e| e.to_string())?;
        ensure((ls > 0) == sat, || {
            format!("seed {seed}: ls {ls}, satisfiable {sat}\n{}", f.to_dimacs())
        })?;
        satisfiable += usize::from(sat);
    }
    Ok(format!("20 formulas, {satisfiable} satisfiable"))
}

fn truncated_counts(
    db: &Database,
    q: &ConjunctiveQuery,
    plan: &Plan,
    primary: &str,
    max_tau: Count,
) -> Result<Vec<Count>, String> {
    let analysis = Engine::default().analyze(db, q, plan).map_err(|e| e.to_string())?;
    let mut curve = TruncationCurve::new(db, plan, &analysis, primary, Engine::default()).map_err(|e| e.to_string())?;
    (0..=max_tau)
        .map(|tau| curve.count(tau).map_err(|e| e.to_string()))
        .collect()
}

fn criterion_6() -> Outcome {
    let mut pairs = 0usize;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4_000 + seed);
        let shape = Shape::default();
        let q = synth::acyclic_query(&mut rng, &shape);
        let db = selected(&synth::instance(&mut rng, &q, &shape), &q).map_err(|e| e.to_string())?;
        let plan = Plan::acyclic(&q).map_err(|e| e.to_string())?;
        let ls = ls_acyclic(&db, &q).map_err(|e| e.to_string())?.ls;
        for atom in &q.atoms {
            let primary = atom.relation.as_str();
            let base = truncated_counts(&db, &q, &plan, primary, ls + 1)?;
            let domain = representative_domain(&db, &q, primary).map_err(|e| e.to_string())?;
            let mut neighbours = Vec::new();
            for t in domain.tuples() {
                neighbours.push(add_copy(&db, primary, &t).map_err(|e| e.to_string())?);
            }
            for (t, _) in db.relation(primary).expect("primary loaded").rows() {
                neighbours.push(remove_copy(&db, primary, t).map_err(|e| e.to_string())?);
            }
            for other in &neighbours {
                let moved = truncated_counts(other, &q, &plan, primary, ls + 1)?;
                for (tau, (a, b)) in base.iter().zip(&moved).enumerate() {
                    ensure(a.abs_diff(*b) <= tau as Count, || {
                        format!("seed {seed}, primary {primary}, tau {tau}: {a} vs {b}")
                    })?;
                    pairs += 1;
                }
            }
        }
    }
    Ok(format!("50 instances, {pairs} (neighbour, tau) pairs, 0 violations"))
}

fn criterion_7() -> Outcome {
    const N: usize = 100_000;
    let critical = 1.6276 / (N as f64).sqrt();
    let mut worst = 0.0f64;
    for (i, b) in [0.5, 1.0, 5.0].into_iter().enumerate() {
        let mut noise = Noise::seeded(7_000 + i as u64);
        let mut xs = Vec::with_capacity(N);
        for _ in 0..N {
            xs.push(noise.laplace(b).map_err(|e| e.to_string())?);
        }
        let mean = xs.iter().sum::<f64>() / N as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (N - 1) as f64;
        ensure((var - 2.0 * b * b).abs() <= 0.1 * 2.0 * b * b, || {
            format!("scale {b}: variance {var}")
        })?;
        xs.sort_by(f64::total_cmp);
        let d = xs
            .iter()
            .enumerate()
            .map(|(k, &x)| {
                let f = laplace_cdf(x, b);
                (f - k as f64 / N as f64).max((k + 1) as f64 / N as f64 - f)
            })
            .fold(0.0, f64::max);
        ensure(d < critical, || format!("scale {b}: KS statistic {d} >= {critical}"))?;
        worst = worst.max(d);
    }
    Ok(format!("3 scales, max KS statistic {worst:.5} < {critical:.5}"))
}

fn criterion_8() -> Outcome {
    let mut tight = 0;
    for (seed, q, db) in acyclic_suite() {
        let plan = Plan::acyclic(&q).map_err(|e| e.to_string())?;
        let exact = Engine::default().analyze(&db, &q, &plan).map_err(|e| e.to_string())?;
        for k in [1usize, 2, 4] {
            let bound = topk_bound(&db, &q, &plan, k).map_err(|e| e.to_string())?;
            let ls = exact.report().ls;
            ensure(bound.ls >= ls, || {
                format!("seed {seed}, k {k}: bound {} < ls {ls}", bound.ls)
            })?;
            if k > exact.max_pass_keys() {
                ensure(bound.ls == ls, || {
                    format!("seed {seed}, k {k}: bound {} != ls {ls}", bound.ls)
                })?;
                tight += 1;
            }
        }
    }
    Ok(format!("600 runs, {tight} with k above every key count"))
}

fn time_path(rows: usize) -> Result<Duration, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9_000 + rows as u64);
    let db = synth::chain_instance(&mut rng, 5, rows);
    let q = synth::path_query(5);
    let mut best = Duration::MAX;
    for _ in 0..3 {
        let start = Instant::now();
        let r = ls_path(&db, &q).map_err(|e| e.to_string())?;
        best = best.min(start.elapsed());
        std::hint::black_box(r);
    }
    Ok(best)
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let small = time_path(10_000)?;
    let large = time_path(100_000)?;
    let ratio = large.as_secs_f64() / small.as_secs_f64();
    let total = start.elapsed();
    ensure(ratio <= 15.0, || {
        format!("ratio {ratio:.1} ({small:.2?} vs {large:.2?})")
    })?;
    ensure(total < Duration::from_secs(30), || format!("took {total:?}"))?;
    Ok(format!(
        "{small:.2?} vs {large:.2?}, ratio {ratio:.1}, total {total:.2?}"
    ))
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (data, query) = chain_fixture(dir.path());
    let triangle = write(dir.path(), "t.cq", "Q(A,B,C) :- R1(A,B), R2(B,C), R3(C,A).");
    let cnf = write(dir.path(), "f.cnf", "p cnf 4 3\n1 -2 3 0\n-1 2 4 0\n-3 -4 1 0\n");
    let sat_out = dir.path().join("sat");
    let commands: Vec<Vec<&str>> = vec![
        vec!["decompose", "--query", arg(&query)],
        vec!["decompose", "--query", arg(&triangle)],
        vec!["sensitivity", "--data", arg(&data), "--query", arg(&query)],
        vec![
            "sensitivity",
            "--data",
            arg(&data),
            "--query",
            arg(&query),
            "--mode",
            "topk",
            "--k",
            "1",
        ],
        vec!["oracle", "--data", arg(&data), "--query", arg(&query)],
        vec![
            "dp-answer",
            "--data",
            arg(&data),
            "--query",
            arg(&query),
            "--epsilon",
            "1",
            "--ell",
            "8",
            "--primary-private",
            "R2",
            "--seed",
            "7",
        ],
        vec![
            "dp-answer",
            "--data",
            arg(&data),
            "--query",
            arg(&query),
            "--epsilon",
            "1",
            "--ell",
            "8",
            "--primary-private",
            "R2",
            "--seed",
            "7",
            "--test-mode",
        ],
        vec!["reduce-sat", "--cnf", arg(&cnf), "--out", arg(&sat_out), "--check"],
        vec![
            "sensitivity",
            "--data",
            "/nonexistent/manifest.json",
            "--query",
            arg(&query),
        ],
    ];
    for args in &commands {
        let first = tsens(args);
        let second = tsens(args);
        ensure(
            !first.stdout.is_empty() && first.stdout == second.stdout && first.code == second.code,
            || format!("{args:?} differs:\n{}\n{}", first.stdout, second.stdout),
        )?;
    }
    Ok(format!("{} commands repeated", commands.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 10] = [
        ("oracle equivalence, acyclic", criterion_1),
        ("oracle equivalence, cyclic via decomposition", criterion_2),
        ("path micro-instance", criterion_3),
        ("path and acyclic agreement", criterion_4),
        ("3SAT reduction", criterion_5),
        ("truncated count sensitivity bound", criterion_6),
        ("Laplace statistics", criterion_7),
        ("top-k dominance", criterion_8),
        ("path scalability", criterion_9),
        ("deterministic JSON", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
