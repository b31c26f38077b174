use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use bpnet::bayes::{compile_bn, extract_bn, parse_bn, parse_evidence, state_cap, BayesNet, CompileMode, Valuation};
use bpnet::dot::{bn_to_dot, boxdag_to_dot, cliques_to_dot, net_to_dot};
use bpnet::factorize::{clique_tree_of, factorize_by_order, marginal_net, FactorizedNet};
use bpnet::factors::{Assignment, Factor, VariableId};
use bpnet::interpret::{interpret_naive, interpret_turbo};
use bpnet::net::{bnet, check_pre_module, is_bpn, Net, Pol};
use bpnet::oracle::{
    brute_force_marginal, clique_tree_from_order, heuristic_order_bn, heuristic_order_net, message_passing,
    variable_elimination, Heuristic,
};
use bpnet::rewrite::{hide, is_normal, normalize, show};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "bpnet", version, about = "Exact inference on Bayesian networks via proof-nets")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Positive,
    Empty,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Turbo,
    Naive,
    Ve,
    Mp,
    Brute,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Net,
    Cliques,
    Bnet,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a net and report correctness and Bayesian proof-net conditions.
    Check { input: PathBuf },
    /// Compile a network into a proof-net plus a valuation sidecar.
    Compile {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "empty")]
        mode: Mode,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Factorize a net along an elimination order.
    Factorize {
        input: PathBuf,
        /// Comma-separated elimination order.
        #[arg(long, conflicts_with = "heuristic")]
        order: Option<String>,
        /// min-fill or min-degree.
        #[arg(long)]
        heuristic: Option<String>,
        #[arg(long)]
        valuation: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Marginal (or posterior under evidence) of one variable, or of all.
    Marginal {
        input: PathBuf,
        #[arg(long = "var", required_unless_present = "all")]
        var: Option<String>,
        #[arg(long, value_enum, default_value = "turbo")]
        method: Method,
        /// X=value, repeatable.
        #[arg(long)]
        evidence: Vec<String>,
        #[arg(long)]
        all: bool,
        /// Cross-check against a second method.
        #[arg(long)]
        verify: bool,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        valuation: Option<PathBuf>,
        #[arg(long, default_value = "min-fill")]
        heuristic: String,
    },
    /// Graphviz output for a net, its clique tree or its box DAG.
    ExportDot {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "net")]
        what: What,
        #[arg(long)]
        valuation: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Failure with its exit code.
struct Fail(u8, anyhow::Error);

impl Fail {
    fn io(e: impl Into<anyhow::Error>) -> Fail {
        Fail(3, e.into())
    }
    fn invalid(e: impl Into<anyhow::Error>) -> Fail {
        Fail(2, e.into())
    }
}

type Res<T> = Result<T, Fail>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Check { input } => cmd_check(&input),
        Cmd::Compile { input, mode, output } => cmd_compile(&input, mode, &output),
        Cmd::Factorize { input, order, heuristic, valuation, output } => {
            cmd_factorize(&input, order, heuristic, valuation, output)
        }
        Cmd::Marginal { input, var, method, evidence, all, verify, tol, valuation, heuristic } => {
            cmd_marginal(&input, var, method, &evidence, all, verify, tol, valuation, &heuristic)
        }
        Cmd::ExportDot { input, what, valuation, output } => cmd_export_dot(&input, what, valuation, output),
    };
    match r {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

fn read(path: &Path) -> Res<Vec<u8>> {
    fs::read(path).map_err(|e| Fail::io(anyhow!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str) -> Res<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Fail::io(anyhow!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

enum Input {
    Bn(BayesNet<f64>),
    Net(Net),
    Fact(FactorizedNet),
}

/// Detects the input kind from its top-level keys.
fn load(path: &Path) -> Res<Input> {
    let bytes = read(path)?;
    let v: Value = serde_json::from_slice(&bytes).map_err(|e| Fail::io(anyhow!("{}: {e}", path.display())))?;
    let obj = v.as_object().ok_or_else(|| Fail::io(anyhow!("{}: expected a JSON object", path.display())))?;
    if obj.contains_key("tree") {
        let f = FactorizedNet::from_json(&serde_json::from_value(v).map_err(|e| Fail::io(anyhow!("{e}")))?)
            .map_err(|e| Fail::io(anyhow!("{}: {e}", path.display())))?;
        Ok(Input::Fact(f))
    } else if obj.contains_key("nodes") {
        let net = Net::from_json(&serde_json::from_value(v).map_err(|e| Fail::io(anyhow!("{e}")))?)
            .map_err(|e| Fail::io(anyhow!("{}: {e}", path.display())))?;
        Ok(Input::Net(net))
    } else if obj.contains_key("variables") {
        let bn = parse_bn::<f64>(&bytes).map_err(|e| Fail::invalid(anyhow!("{}: {e}", path.display())))?;
        Ok(Input::Bn(bn))
    } else {
        Err(Fail::io(anyhow!("{}: not a net, factorized net or network", path.display())))
    }
}

/// `<dir>/<stem>.valuation.json` next to a net file.
fn sidecar(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.valuation.json"))
}

fn load_valuation(explicit: Option<&Path>, input: &Path) -> Res<Valuation<f64>> {
    let p = explicit.map(Path::to_path_buf).unwrap_or_else(|| sidecar(input));
    let bytes = read(&p)?;
    Valuation::from_json_bytes(&bytes).map_err(|e| Fail::io(anyhow!("{}: {e}", p.display())))
}

fn cmd_check(input: &Path) -> Res<u8> {
    let bytes = read(input)?;
    let net = Net::from_json_str(std::str::from_utf8(&bytes).map_err(Fail::io)?)
        .map_err(|e| Fail::io(anyhow!("{}: {e}", input.display())))?;
    let report = match check_pre_module(&net) {
        Ok(r) => r,
        Err(e) => {
            print!("{}", pretty(&json!({ "valid": false, "error": e.to_string() })));
            return Ok(2);
        }
    };
    let has_premises = !net.premises().is_empty();
    let valid = report.switching_acyclic && !has_premises;
    let bpn = if valid { Some(is_bpn(&net).map_err(Fail::invalid)?) } else { None };
    let out = json!({
        "valid": valid,
        "pending_premises": net.premises(),
        "correctness": report,
        "bpn": bpn,
    });
    print!("{}", pretty(&out));
    Ok(if !valid {
        2
    } else if bpn.is_some_and(|b| b.is_bpn) {
        0
    } else {
        1
    })
}

fn cmd_compile(input: &Path, mode: Mode, output: &Path) -> Res<u8> {
    let bn = parse_bn::<f64>(&read(input)?).map_err(|e| Fail::invalid(anyhow!("{}: {e}", input.display())))?;
    let mode = match mode {
        Mode::Positive => CompileMode::Positive,
        Mode::Empty => CompileMode::Empty,
    };
    let (net, val) = compile_bn(&bn, mode);
    write_out(Some(output), &(net.to_json_string() + "\n"))?;
    let side = sidecar(output);
    write_out(Some(&side), &(val.to_json_string() + "\n"))?;
    eprintln!("wrote {} ({} boxes) and {}", output.display(), net.box_nodes().len(), side.display());
    Ok(0)
}

fn parse_order(s: &str) -> Vec<VariableId> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(VariableId::new).collect()
}

fn predicted_cost(f: &FactorizedNet, val: Option<&Valuation<f64>>) -> u128 {
    let space = |atoms: &[VariableId]| -> u128 {
        atoms
            .iter()
            .map(|x| val.and_then(|v| v.domains.get(x)).map_or(2, |d| d.size() as u128))
            .product()
    };
    let ws = f.wirings();
    let max = if ws.is_empty() {
        f.comps.iter().map(|c| space(&c.atoms)).max().unwrap_or(1)
    } else {
        ws.iter().map(|&w| space(&f.comps[w].atoms)).max().unwrap_or(1)
    };
    (f.m_r().max(1) as u128) * max
}

fn cmd_factorize(
    input: &Path,
    order: Option<String>,
    heuristic: Option<String>,
    valuation: Option<PathBuf>,
    output: Option<PathBuf>,
) -> Res<u8> {
    let net = match load(input)? {
        Input::Net(n) => n,
        Input::Fact(f) => f.net,
        Input::Bn(_) => return Err(Fail::invalid(anyhow!("factorize expects a net; compile the network first"))),
    };
    let val = match &valuation {
        Some(p) => Some(load_valuation(Some(p), input)?),
        None => {
            let side = sidecar(input);
            if side.exists() {
                Some(load_valuation(Some(&side), input)?)
            } else {
                None
            }
        }
    };
    let order = match (order, heuristic) {
        (Some(o), _) => parse_order(&o),
        (None, h) => {
            let h: Heuristic = h.as_deref().unwrap_or("min-fill").parse().map_err(Fail::invalid)?;
            heuristic_order_net(&net, &h).order
        }
    };
    let f = factorize_by_order(&net, &order).map_err(Fail::invalid)?;
    let report = json!({
        "width": f.width(),
        "m_r": f.m_r(),
        "components": f.comps.len(),
        "predicted_cost": predicted_cost(&f, val.as_ref()),
        "order": order,
        "wiring_atoms": f.wiring_atom_sets(),
    });
    match &output {
        Some(p) => {
            write_out(Some(p), &f.to_json_string())?;
            if let Some(v) = &val {
                write_out(Some(&sidecar(p)), &(v.to_json_string() + "\n"))?;
            }
            print!("{}", pretty(&report));
        }
        None => {
            print!("{}", f.to_json_string());
            println!();
            eprintln!("{}", serde_json::to_string(&report).unwrap());
        }
    }
    if val.is_none() {
        eprintln!("note: no valuation found; predicted cost assumes binary atoms");
    }
    Ok(0)
}

/// Everything a marginal query may need, built lazily from the input.
struct Model {
    bn: BayesNet<f64>,
    val: Valuation<f64>,
    /// Conclusion-free normal net.
    net: Net,
    fact: Option<FactorizedNet>,
}

fn empty_normal(net: &Net) -> Res<Net> {
    let mut n = net.clone();
    for &c in net.conclusions() {
        match net.edge(c).atom() {
            Some((x, Pol::Pos)) => n = hide(&n, x).map_err(Fail::invalid)?,
            _ => return Err(Fail::invalid(anyhow!("net has a conclusion that is not a positive atom"))),
        }
    }
    if !is_normal(&n) {
        n = normalize(&n).map_err(Fail::invalid)?.net;
    }
    Ok(n)
}

fn build_model(input: &Path, valuation: Option<&Path>, heuristic: &str) -> Res<Model> {
    let h: Heuristic = heuristic.parse().map_err(Fail::invalid)?;
    let (bn, val, net, fact) = match load(input)? {
        Input::Bn(bn) => {
            let (net, val) = compile_bn(&bn, CompileMode::Empty);
            (bn, val, net, None)
        }
        Input::Net(net) => {
            let val = load_valuation(valuation, input)?;
            let bn = extract_bn(&net, &val).map_err(Fail::invalid)?;
            (bn, val, empty_normal(&net)?, None)
        }
        Input::Fact(f) => {
            let val = load_valuation(valuation, input)?;
            let bn = extract_bn(&f.net, &val).map_err(Fail::invalid)?;
            if !f.net.conclusions().is_empty() {
                return Err(Fail::invalid(anyhow!("factorized net must have no conclusions")));
            }
            let net = f.net.clone();
            (bn, val, net, Some(f))
        }
    };
    let fact = match fact {
        Some(f) => f,
        None => {
            let order = heuristic_order_net(&net, &h).order;
            factorize_by_order(&net, &order).map_err(Fail::invalid)?
        }
    };
    Ok(Model { bn, val, net, fact: Some(fact) })
}

/// Multiplies an indicator of the observed value into the CPT of each evidence
/// variable.
fn with_evidence(val: &Valuation<f64>, ev: &Assignment) -> Res<Valuation<f64>> {
    let mut v = val.clone();
    for (x, &i) in ev {
        let d = v.domains[x].clone();
        let ind = Factor::indicator(x.clone(), d, i).map_err(Fail::invalid)?;
        let f = v.cpts.get_mut(x).ok_or_else(|| Fail::invalid(anyhow!("no CPT for {x}")))?;
        *f = f.multiply(&ind).map_err(Fail::invalid)?;
    }
    Ok(v)
}

fn run_method(m: &Model, y: &VariableId, method: Method, ev: &Assignment) -> Res<Factor<f64>> {
    let fail = |e: String| Fail::invalid(anyhow!(e));
    let unnorm = match method {
        Method::Turbo => {
            let f = marginal_net(m.fact.as_ref().unwrap(), y).map_err(|e| fail(e.to_string()))?;
            interpret_turbo(&f, &with_evidence(&m.val, ev)?).map_err(|e| fail(e.to_string()))?
        }
        Method::Naive => {
            let n = show(&m.net, y).map_err(|e| fail(e.to_string()))?;
            interpret_naive(&n, &with_evidence(&m.val, ev)?).map_err(|e| fail(e.to_string()))?
        }
        Method::Ve | Method::Brute => {
            let mut q: Vec<VariableId> = ev.keys().cloned().collect();
            q.push(y.clone());
            q.sort();
            q.dedup();
            let joint = if method == Method::Brute {
                brute_force_marginal(&m.bn, &q).map_err(|e| fail(e.to_string()))?
            } else {
                let rest: Vec<VariableId> = heuristic_order_bn(&m.bn, &Heuristic::MinFill)
                    .order
                    .into_iter()
                    .filter(|v| !q.contains(v))
                    .collect();
                variable_elimination(&m.bn, &q, &rest).map_err(|e| fail(e.to_string()))?
            };
            joint
                .condition(ev)
                .and_then(|f| f.project_extend(&[(y.clone(), m.val.domains[y].clone())], &mut Default::default()))
                .map_err(|e| fail(e.to_string()))?
        }
        Method::Mp => {
            let mut order = heuristic_order_bn(&m.bn, &Heuristic::MinFill).order;
            order.retain(|v| v != y);
            order.push(y.clone());
            let t = clique_tree_from_order(&m.bn, &order).map_err(|e| fail(e.to_string()))?;
            let root = t.cliques.iter().position(|c| c.contains(y)).expect("query has a clique");
            message_passing(&m.bn, &t, root, std::slice::from_ref(y)).map_err(|e| fail(e.to_string()))?
        }
    };
    if ev.is_empty() {
        Ok(unnorm)
    } else {
        unnorm.normalize().map_err(|e| fail(e.to_string()))
    }
}

fn table_json(f: &Factor<f64>, y: &VariableId) -> Value {
    let d = f.domain_of(y).expect("query in scope");
    Value::Array(
        d.values().iter().zip(f.table()).map(|(v, p)| json!({ "value": v, "p": p })).collect(),
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_marginal(
    input: &Path,
    var: Option<String>,
    method: Method,
    evidence: &[String],
    all: bool,
    verify: bool,
    tol: f64,
    valuation: Option<PathBuf>,
    heuristic: &str,
) -> Res<u8> {
    if method == Method::Mp && !evidence.is_empty() {
        return Err(Fail::invalid(anyhow!("--method mp does not take evidence")));
    }
    let model = build_model(input, valuation.as_deref(), heuristic)?;
    let ev = parse_evidence(&model.val.domains, evidence).map_err(Fail::invalid)?;
    let vars: Vec<VariableId> = if all {
        model.bn.var_ids()
    } else {
        let y = VariableId::new(var.as_deref().unwrap_or_default());
        if !model.val.domains.contains_key(&y) {
            return Err(Fail::invalid(anyhow!("unknown variable {y}")));
        }
        vec![y]
    };
    let check_with = if method == Method::Brute || model.bn.state_space() > state_cap() { Method::Ve } else { Method::Brute };
    let mut results = vec![];
    let mut worst = 0.0f64;
    for y in &vars {
        let f = run_method(&model, y, method, &ev)?;
        let mut entry: BTreeMap<&str, Value> = BTreeMap::new();
        entry.insert("var", json!(y));
        entry.insert("method", json!(method));
        entry.insert("table", table_json(&f, y));
        if verify {
            let g = run_method(&model, y, check_with, &ev)?;
            let d = f.max_abs_diff(&g).unwrap_or(f64::INFINITY);
            worst = worst.max(d);
            entry.insert("verified_against", json!(check_with));
            entry.insert("max_abs_diff", json!(d));
        }
        results.push(entry);
    }
    let out = if all { json!(results) } else { json!(results.pop().unwrap()) };
    print!("{}", pretty(&out));
    if verify && (worst.is_nan() || worst > tol) {
        eprintln!("methods disagree by {worst:e} (tolerance {tol:e})");
        return Ok(1);
    }
    Ok(0)
}

fn cmd_export_dot(input: &Path, what: What, valuation: Option<PathBuf>, output: Option<PathBuf>) -> Res<u8> {
    let loaded = load(input)?;
    let text = match (what, &loaded) {
        (What::Net, Input::Net(n)) => net_to_dot(n),
        (What::Net, Input::Fact(f)) => net_to_dot(&f.net),
        (What::Net, Input::Bn(bn)) => net_to_dot(&compile_bn(bn, CompileMode::Empty).0),
        (What::Bnet, Input::Bn(bn)) => bn_to_dot(bn),
        (What::Bnet, Input::Net(n)) => boxdag_to_dot(&bnet(n).map_err(Fail::invalid)?),
        (What::Bnet, Input::Fact(f)) => boxdag_to_dot(&bnet(&f.net).map_err(Fail::invalid)?),
        (What::Cliques, Input::Fact(f)) => cliques_to_dot(&clique_tree_of(f).map_err(Fail::invalid)?.pruned()),
        (What::Cliques, _) => {
            let net = match &loaded {
                Input::Bn(bn) => compile_bn(bn, CompileMode::Empty).0,
                Input::Net(n) => {
                    if valuation.is_some() {
                        load_valuation(valuation.as_deref(), input)?;
                    }
                    empty_normal(n)?
                }
                Input::Fact(_) => unreachable!(),
            };
            let order = heuristic_order_net(&net, &Heuristic::MinFill).order;
            let f = factorize_by_order(&net, &order).map_err(Fail::invalid)?;
            cliques_to_dot(&clique_tree_of(&f).map_err(Fail::invalid)?.pruned())
        }
    };
    write_out(output.as_deref(), &text)?;
    Ok(0)
}
