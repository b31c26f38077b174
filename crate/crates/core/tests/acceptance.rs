mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bpnet::bayes::{compile_bn, CompileMode};
use bpnet::factorize::{factorize_by_order, marginal_net, trivial_factorization};
use bpnet::factors::Factor;
use bpnet::gen::{bounded_width_bn, random_bn, random_module, rain5, BnConfig, ModuleConfig};
use bpnet::interpret::{interpret_naive, interpret_turbo, measure_cost};
use bpnet::net::{bnet, isomorphic, polarized_orient, switching_acyclic, well_labelled};
use bpnet::oracle::{
    brute_force_marginal, clique_tree_from_order, forward_sample, heuristic_order_bn, heuristic_order_net,
    message_passing, variable_elimination, Heuristic,
};
use bpnet::rewrite::{apply_move, candidate_moves, normalize, normalize_with, show, Strategy};
use bpnet::VariableId;
use common::{rng, vs};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn diff(a: &Factor<f64>, b: &Factor<f64>) -> f64 {
    a.max_abs_diff(b).unwrap_or(f64::INFINITY)
}

fn within(t: Duration, limit: Duration, what: &str) -> Result<(), String> {
    if t < limit {
        Ok(())
    } else {
        Err(format!("{what} took {t:.2?}, limit {limit:.0?}"))
    }
}

fn set(names: &[&str]) -> BTreeSet<VariableId> {
    vs(names).into_iter().collect()
}

fn width_fixture() -> Outcome {
    let start = Instant::now();
    let (_, net, _) = common::rain5_empty();
    let rd = show(&net, &VariableId::new("D")).map_err(|e| e.to_string())?;
    let t = trivial_factorization(&rd).map_err(|e| e.to_string())?;
    let f = factorize_by_order(&rd, &vs(&["A", "B", "C", "E"])).map_err(|e| e.to_string())?;
    let sets = f.wiring_atom_sets();
    within(start.elapsed(), Duration::from_secs(1), "fixture")?;
    let want = vec![set(&["A", "B", "C"]), set(&["B", "C", "D"]), set(&["C", "D", "E"])];
    if t.width() != 4 || f.width() != 2 || sets != want {
        return Err(format!("trivial {} ordered {} sets {sets:?}", t.width(), f.width()));
    }
    Ok("trivial width 4, ordered width 2, sets ABC BCD CDE".into())
}

fn component_bound() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = r.gen_range(3..=12);
        let bn = random_bn(&mut r, &BnConfig { n, ..BnConfig::default() });
        let (net, _) = compile_bn(&bn, CompileMode::Empty);
        let mut order = bn.var_ids();
        order.shuffle(&mut r);
        let f = factorize_by_order(&net, &order).map_err(|e| e.to_string())?;
        if f.comps.len() > 2 * n {
            return Err(format!("{} components over {n} atoms", f.comps.len()));
        }
        worst = worst.max(f.comps.len() as f64 / n as f64);
    }
    within(start.elapsed(), Duration::from_secs(30), "500 factorizations")?;
    Ok(format!("500 nets, max components/atoms {worst:.2}"))
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(3);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let n = r.gen_range(1..=10);
        let cfg = BnConfig { n, state_cap: Some(1 << 16), ..BnConfig::default() };
        let bn = random_bn(&mut r, &cfg);
        let (net, val) = compile_bn(&bn, CompileMode::Empty);
        let order = heuristic_order_net(&net, &Heuristic::MinFill).order;
        let f = factorize_by_order(&net, &order).map_err(|e| e.to_string())?;
        let tree = clique_tree_from_order(&bn, &order).map_err(|e| e.to_string())?;
        for y in bn.var_ids() {
            let brute = brute_force_marginal(&bn, std::slice::from_ref(&y)).map_err(|e| e.to_string())?;
            let turbo = interpret_turbo(&marginal_net(&f, &y).map_err(|e| e.to_string())?, &val)
                .map_err(|e| e.to_string())?;
            let naive = interpret_naive(&show(&net, &y).map_err(|e| e.to_string())?, &val).map_err(|e| e.to_string())?;
            let rest: Vec<VariableId> = order.iter().filter(|z| **z != y).cloned().collect();
            let ve = variable_elimination(&bn, std::slice::from_ref(&y), &rest).map_err(|e| e.to_string())?;
            let root = tree.cliques.iter().position(|c| c.contains(&y)).ok_or("no clique holds the query")?;
            let mp = message_passing(&bn, &tree, root, std::slice::from_ref(&y)).map_err(|e| e.to_string())?;
            for (name, got) in [("turbo", &turbo), ("naive", &naive), ("ve", &ve), ("mp", &mp)] {
                let d = diff(got, &brute);
                worst = worst.max(d);
                if d > 1e-12 {
                    return Err(format!("network {i}, {y}: {name} off by {d:e}"));
                }
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(120), "200 networks")?;
    Ok(format!("200 networks, max deviation {worst:.1e}"))
}

fn equal_cost_marginals() -> Outcome {
    let mut r = rng(4);
    let mut spread = 0.0f64;
    let mut over = vec![];
    for i in 0..100 {
        let n = r.gen_range(2..=9);
        let cfg = BnConfig { n, state_cap: Some(1 << 16), ..BnConfig::default() };
        let bn = random_bn(&mut r, &cfg);
        let (net, val) = compile_bn(&bn, CompileMode::Empty);
        let order = heuristic_order_net(&net, &Heuristic::MinFill).order;
        let f = factorize_by_order(&net, &order).map_err(|e| e.to_string())?;
        let mut reports = vec![];
        for y in bn.var_ids() {
            let m = marginal_net(&f, &y).map_err(|e| e.to_string())?;
            reports.push(measure_cost(&m, &val).map_err(|e| e.to_string())?.1);
        }
        let first = &reports[0];
        if reports.iter().any(|c| c.width != first.width || c.m_r != first.m_r) {
            return Err(format!("network {i}: width or m_R differs across queries"));
        }
        let lo = reports.iter().map(|c| c.cells).min().unwrap() as f64;
        let hi = reports.iter().map(|c| c.cells).max().unwrap() as f64;
        let s = (hi - lo) / lo;
        spread = spread.max(s);
        if s >= 0.05 {
            over.push(format!("#{i} {lo}..{hi}"));
        }
    }
    let msg = format!("100 networks, max cell spread {:.2}%", spread * 100.0);
    if over.is_empty() {
        Ok(msg)
    } else {
        Err(format!("{msg}; {} at or above 5%: {}", over.len(), over.join(", ")))
    }
}

fn width_domination() -> Outcome {
    let mut r = rng(5);
    let mut strict = 0;
    for i in 0..200 {
        let n = r.gen_range(2..=12);
        let bn = random_bn(&mut r, &BnConfig { n, ..BnConfig::default() });
        let (net, _) = compile_bn(&bn, CompileMode::Empty);
        let mut order = bn.var_ids();
        order.shuffle(&mut r);
        let f = factorize_by_order(&net, &order).map_err(|e| e.to_string())?;
        let t = clique_tree_from_order(&bn, &order).map_err(|e| e.to_string())?;
        if f.width() > t.width() {
            return Err(format!("pair {i}: factorized width {} above clique width {}", f.width(), t.width()));
        }
        if f.width() < t.width() {
            strict += 1;
        }
    }
    Ok(format!("200 pairs, 0 violations, {strict} strictly narrower"))
}

fn characterization() -> Outcome {
    let mut r = rng(6);
    let (mut correct, mut wrong) = (0, 0);
    for i in 0..1000 {
        let cfg = ModuleConfig { atoms: r.gen_range(1..=4), pieces: r.gen_range(1..=10), joins: r.gen_range(0..=12) };
        let m = random_module(&mut r, &cfg);
        let switching = switching_acyclic(&m).is_ok();
        let polarized = polarized_orient(&m).map_err(|e| e.to_string())?.is_dag();
        if switching != polarized {
            return Err(format!("module {i}: switching {switching}, polarized {polarized}"));
        }
        if switching {
            correct += 1;
            well_labelled(&m).map_err(|e| format!("module {i}: {e}"))?;
        } else {
            wrong += 1;
        }
    }
    Ok(format!("1000 modules ({correct} correct, {wrong} cyclic), 0 disagreements"))
}

fn rewrite_invariance() -> Outcome {
    let mut r = rng(7);
    let mut moves = 0;
    let mut nets = 0;
    while moves < 1000 {
        let n = r.gen_range(2..=7);
        let bn = random_bn(&mut r, &BnConfig { n, state_cap: Some(1 << 12), ..BnConfig::default() });
        let mode = if r.gen_bool(0.5) { CompileMode::Empty } else { CompileMode::Positive };
        let (mut net, val) = compile_bn(&bn, mode);
        let dag = bnet(&net).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let Some(m) = candidate_moves(&net).choose(&mut r).cloned() else { break };
            let next = apply_move(&net, &m).map_err(|e| format!("{m}: {e}"))?;
            if bnet(&next).map_err(|e| e.to_string())? != dag {
                return Err(format!("{m} changed the box graph"));
            }
            let a = interpret_naive(&net, &val).map_err(|e| e.to_string())?;
            let b = interpret_naive(&next, &val).map_err(|e| e.to_string())?;
            let keep: Vec<VariableId> = a.vars().iter().filter(|x| b.contains(x)).cloned().collect();
            let d = diff(&a.project(&keep).map_err(|e| e.to_string())?, &b.project(&keep).map_err(|e| e.to_string())?);
            if d > 1e-12 {
                return Err(format!("{m} moved the interpretation by {d:e}"));
            }
            net = next;
            moves += 1;
        }
        let n1 = normalize(&net).map_err(|e| e.to_string())?.net;
        let n2 = normalize_with(&net, Strategy::Random(r.gen())).map_err(|e| e.to_string())?.net;
        let n3 = normalize_with(&net, Strategy::Random(r.gen())).map_err(|e| e.to_string())?.net;
        if !isomorphic(&n2, &n3) || !isomorphic(&n1, &n2) {
            return Err("random strategies reached different normal forms".into());
        }
        nets += 1;
    }
    Ok(format!("{moves} moves over {nets} nets, all normal forms isomorphic"))
}

fn desk_scale() -> Outcome {
    let bn = bounded_width_bn(&mut rng(8), 30, 5);
    let (net, val) = compile_bn(&bn, CompileMode::Empty);
    let order = heuristic_order_bn(&bn, &Heuristic::MinFill);
    let start = Instant::now();
    let f = factorize_by_order(&net, &order.order).map_err(|e| e.to_string())?;
    let mut results = vec![];
    for y in bn.var_ids() {
        let m = marginal_net(&f, &y).map_err(|e| e.to_string())?;
        results.push((y.clone(), interpret_turbo(&m, &val).map_err(|e| e.to_string())?));
    }
    let t = start.elapsed();
    let mut worst = 0.0f64;
    for (y, got) in &results {
        let rest: Vec<VariableId> = order.order.iter().filter(|z| *z != y).cloned().collect();
        let ve = variable_elimination(&bn, std::slice::from_ref(y), &rest).map_err(|e| e.to_string())?;
        worst = worst.max(diff(got, &ve));
    }
    within(t, Duration::from_secs(1), "factorize + 30 marginals")?;
    if worst > 1e-9 {
        return Err(format!("turbo differs from VE by {worst:e}"));
    }
    Ok(format!("width {} net, 30 marginals in {t:.2?}, max deviation {worst:.1e}", f.width()))
}

fn sampling() -> Outcome {
    let bn = rain5();
    let n = 100_000;
    let samples = forward_sample(&bn, 9, n).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for x in bn.var_ids() {
        let p = brute_force_marginal(&bn, std::slice::from_ref(&x)).map_err(|e| e.to_string())?.table()[0];
        let hits = samples.iter().filter(|a| a[&x] == 0).count() as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let z = (hits / n as f64 - p).abs() / sigma;
        worst = worst.max(z);
        if z > 3.0 {
            return Err(format!("{x}: {z:.2} sigma"));
        }
    }
    Ok(format!("100k samples, max {worst:.2} sigma"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("width fixture", width_fixture),
        ("component bound", component_bound),
        ("oracle equivalence", oracle_equivalence),
        ("equal-cost marginals", equal_cost_marginals),
        ("width domination", width_domination),
        ("characterization", characterization),
        ("rewrite invariance", rewrite_invariance),
        ("desk-scale performance", desk_scale),
        ("sampling sanity", sampling),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let t = start.elapsed();
        match out {
            Ok(msg) => println!("PASS {} {name}: {msg} ({t:.2?})", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {} {name}: {msg} ({t:.2?})", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    ExitCode::SUCCESS
}
