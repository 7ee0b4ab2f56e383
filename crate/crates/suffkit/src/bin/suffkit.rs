//! Command-line surface: model/structure file I/O, comparison and
//! sufficiency commands, certificate emission, and the randomized
//! theorem-verification harness.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use suffkit::channels::{
    apply_choi, choi_from_kraus, find_cptp_map, measure_prepare_extension,
    superoperator_of_choi, ChoiMatrix, CptpOutcome,
};
use suffkit::classical::{
    check_ordering_tol, optimal_expected_payoff, ClassicalModel, DecisionProblem,
    SufficiencyVerdict, TransitionMatrix,
};
use suffkit::gen;
use suffkit::linalg::{
    trace_distance, ComplexMatrix, DensityMatrix, HermitianOperator,
};
use suffkit::quantum::{
    fit_povm_to_statistics, optimal_quantum_payoff, FitOutcome, Povm, QuantumModel,
};
use suffkit::structures::{
    apply_morphism_on_b, check_sufficiency as structure_sufficiency, compose_structures,
    construct_morphism, game_payoff, isotropic_structure, InfoStructure, MorphismOutcome,
    PayoffOperators, SufficiencyOutcome,
};
use suffkit::SuffError;

const DEFAULT_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "suffkit", version, about = "Comparison and sufficiency of statistical models and information structures")]
struct Cli {
    /// Numerical tolerance; overrides the SUFFKIT_TOL environment variable.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SufficiencyMode {
    Classical,
    Quantum,
    Structure,
}

#[derive(Clone, Copy, ValueEnum)]
enum PayoffMode {
    Classical,
    Quantum,
    Game,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Bss,
    Ncbss,
    Semiclassical,
    Structures,
}

impl Suite {
    fn name(self) -> &'static str {
        match self {
            Suite::Bss => "bss",
            Suite::Ncbss => "ncbss",
            Suite::Semiclassical => "semiclassical",
            Suite::Structures => "structures",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decide the classical ordering in both directions.
    CompareClassical { e_path: PathBuf, f_path: PathBuf },
    /// Decide one-directional sufficiency.
    CheckSufficiency {
        #[arg(long, value_enum)]
        mode: SufficiencyMode,
        r_path: PathBuf,
        s_path: PathBuf,
    },
    /// Construct the statistical morphism between two structures.
    ConstructMorphism { src_path: PathBuf, tgt_path: PathBuf },
    /// Optimal expected payoff of a model or game.
    OptimalPayoff {
        #[arg(long, value_enum)]
        mode: PayoffMode,
        model_path: PathBuf,
        problem_path: PathBuf,
    },
    /// Randomized theorem-verification harness.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 50)]
        trials: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        max_dim: usize,
    },
}

struct Report {
    command: String,
    verdict: String,
    certificate: Value,
    exit: u8,
}

fn emit(report: &Report, format: Format, started: Instant) -> ExitCode {
    match format {
        Format::Json => {
            // Timing is deliberately omitted from JSON so identical
            // configurations replay byte-identically.
            let doc = json!({
                "schema": 1,
                "command": report.command,
                "verdict": report.verdict,
                "certificate": report.certificate,
            });
            println!("{}", serde_json::to_string_pretty(&doc).expect("report serializes"));
        }
        Format::Text => {
            println!("command: {}", report.command);
            println!("verdict: {}", report.verdict);
            println!(
                "certificate: {}",
                serde_json::to_string(&report.certificate).expect("report serializes")
            );
            println!("elapsed_ms: {}", started.elapsed().as_millis());
        }
    }
    ExitCode::from(report.exit)
}

fn parse_fail(msg: &str, format: Format, started: Instant) -> ExitCode {
    let report = Report {
        command: "error".into(),
        verdict: "error".into(),
        certificate: json!({ "message": msg }),
        exit: 2,
    };
    emit(&report, format, started)
}

fn load<T: DeserializeOwned>(path: &PathBuf) -> Result<T, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
}

fn resolve_tol(flag: Option<f64>) -> Result<f64, String> {
    let tol = match flag {
        Some(t) => t,
        None => match std::env::var("SUFFKIT_TOL") {
            Ok(s) => s
                .parse::<f64>()
                .map_err(|_| format!("SUFFKIT_TOL is not a number: {s}"))?,
            Err(_) => DEFAULT_TOL,
        },
    };
    if !(tol > 0.0) {
        return Err(format!("tolerance must be positive, got {tol}"));
    }
    Ok(tol)
}

fn hermitian_json(ops: &[HermitianOperator]) -> Value {
    serde_json::to_value(ops).expect("operators serialize")
}

fn choi_json(choi: &ChoiMatrix) -> Value {
    serde_json::to_value(choi).expect("Choi matrix serializes")
}

fn verdict_json(v: &SufficiencyVerdict) -> Value {
    serde_json::to_value(v).expect("verdict serializes")
}

fn main() -> ExitCode {
    let started = Instant::now();
    let cli = Cli::parse();
    let format = cli.format;
    let tol = match resolve_tol(cli.tol) {
        Ok(t) => t,
        Err(msg) => return parse_fail(&msg, format, started),
    };
    let outcome = run(cli.command, tol);
    match outcome {
        Ok(report) => emit(&report, format, started),
        Err(msg) => parse_fail(&msg, format, started),
    }
}

fn run(command: Command, tol: f64) -> Result<Report, String> {
    match command {
        Command::CompareClassical { e_path, f_path } => {
            let e: ClassicalModel = load(&e_path)?;
            let f: ClassicalModel = load(&f_path)?;
            if e.theta_size() != f.theta_size() {
                return Err(format!(
                    "parameter sets differ: {} vs {}",
                    e.theta_size(),
                    f.theta_size()
                ));
            }
            let forward = check_ordering_tol(&e, &f, tol).map_err(solver_msg)?;
            let reverse = check_ordering_tol(&f, &e, tol).map_err(solver_msg)?;
            let fwd_ok = matches!(forward, SufficiencyVerdict::Sufficient { .. });
            let rev_ok = matches!(reverse, SufficiencyVerdict::Sufficient { .. });
            let (verdict, exit) = match (fwd_ok, rev_ok) {
                (true, true) => ("equivalent", 0),
                (true, false) => ("E≻F", 0),
                (false, true) => ("F≻E", 0),
                (false, false) => ("incomparable", 1),
            };
            Ok(Report {
                command: "compare-classical".into(),
                verdict: verdict.into(),
                certificate: json!({
                    "forward": verdict_json(&forward),
                    "reverse": verdict_json(&reverse),
                }),
                exit,
            })
        }
        Command::CheckSufficiency { mode, r_path, s_path } => {
            cmd_check_sufficiency(mode, &r_path, &s_path, tol)
        }
        Command::ConstructMorphism { src_path, tgt_path } => {
            let src: InfoStructure = load(&src_path)?;
            let tgt: InfoStructure = load(&tgt_path)?;
            match construct_morphism(&src, &tgt, tol).map_err(solver_msg)? {
                MorphismOutcome::Constructed(res) => Ok(Report {
                    command: "construct-morphism".into(),
                    verdict: "constructed".into(),
                    certificate: json!({
                        "morphism": {
                            "dim_in": res.morphism.dim_in(),
                            "dim_out": res.morphism.dim_out(),
                            "matrix": res.morphism.matrix(),
                        },
                        "realizing_povm": hermitian_json(res.realizing_povm.elements()),
                        "residual": res.residual,
                    }),
                    exit: 0,
                }),
                MorphismOutcome::Failed(w) => Ok(Report {
                    command: "construct-morphism".into(),
                    verdict: "not-ordered".into(),
                    certificate: json!({
                        "witness_game": serde_json::to_value(&w.operators)
                            .expect("operators serialize"),
                        "target_value": w.target_value,
                        "povm_bound": w.povm_bound,
                        "gap": w.gap,
                    }),
                    exit: 1,
                }),
            }
        }
        Command::OptimalPayoff { mode, model_path, problem_path } => {
            cmd_optimal_payoff(mode, &model_path, &problem_path, tol)
        }
        Command::Verify { suite, trials, seed, max_dim } => {
            if trials == 0 {
                return Err("trials must be at least 1".into());
            }
            if !(2..=4).contains(&max_dim) {
                return Err(format!("max_dim must be in 2..=4, got {max_dim}"));
            }
            Ok(cmd_verify(suite, trials, seed, max_dim, tol))
        }
    }
}

fn solver_msg(e: SuffError) -> String {
    format!("solver error: {e}")
}

fn cmd_check_sufficiency(
    mode: SufficiencyMode,
    r_path: &PathBuf,
    s_path: &PathBuf,
    tol: f64,
) -> Result<Report, String> {
    let command = "check-sufficiency".to_string();
    match mode {
        SufficiencyMode::Classical => {
            let r: ClassicalModel = load(r_path)?;
            let s: ClassicalModel = load(s_path)?;
            if r.theta_size() != s.theta_size() {
                return Err("parameter sets differ".into());
            }
            match check_ordering_tol(&r, &s, tol).map_err(solver_msg)? {
                SufficiencyVerdict::Sufficient { transition } => Ok(Report {
                    command,
                    verdict: "sufficient".into(),
                    certificate: json!({ "transition": serde_json::to_value(&transition)
                        .expect("transition serializes") }),
                    exit: 0,
                }),
                SufficiencyVerdict::NotSufficient { witness, gap } => Ok(Report {
                    command,
                    verdict: "not-sufficient".into(),
                    certificate: json!({
                        "witness_problem": serde_json::to_value(&witness)
                            .expect("problem serializes"),
                        "gap": gap,
                    }),
                    exit: 1,
                }),
            }
        }
        SufficiencyMode::Quantum => {
            let r: QuantumModel = load(r_path)?;
            let s: QuantumModel = load(s_path)?;
            if r.theta_size() != s.theta_size() {
                return Err("parameter sets differ".into());
            }
            match find_cptp_map(r.states(), s.states(), tol).map_err(solver_msg)? {
                CptpOutcome::Feasible(choi) => {
                    let residual = max_action_residual(&choi, r.states(), s.states())
                        .map_err(solver_msg)?;
                    Ok(Report {
                        command,
                        verdict: "sufficient".into(),
                        certificate: json!({ "choi": choi_json(&choi), "residual": residual }),
                        exit: 0,
                    })
                }
                CptpOutcome::Infeasible { residual, witness } => Ok(Report {
                    command,
                    verdict: "not-sufficient".into(),
                    certificate: json!({
                        "residual": residual,
                        "monotonicity_witness": witness.map(|w| json!({
                            "theta": w.theta,
                            "theta_prime": w.theta_prime,
                            "input_distance": w.input_distance,
                            "output_distance": w.output_distance,
                        })),
                    }),
                    exit: 1,
                }),
            }
        }
        SufficiencyMode::Structure => {
            let r: InfoStructure = load(r_path)?;
            let s: InfoStructure = load(s_path)?;
            match structure_sufficiency(&r, &s, tol).map_err(solver_msg)? {
                SufficiencyOutcome::Sufficient(choi) => Ok(Report {
                    command,
                    verdict: "sufficient".into(),
                    certificate: json!({ "choi": choi_json(&choi) }),
                    exit: 0,
                }),
                SufficiencyOutcome::NotSufficient { residual } => Ok(Report {
                    command,
                    verdict: "not-sufficient".into(),
                    certificate: json!({ "residual": residual }),
                    exit: 1,
                }),
            }
        }
    }
}

fn max_action_residual(
    choi: &ChoiMatrix,
    inputs: &[DensityMatrix],
    outputs: &[DensityMatrix],
) -> Result<f64, SuffError> {
    let mut worst = 0.0f64;
    for (rho, sigma) in inputs.iter().zip(outputs) {
        let image = apply_choi(choi, rho)?;
        worst = worst.max(trace_distance(image.matrix(), sigma.matrix())?);
    }
    Ok(worst)
}

fn cmd_optimal_payoff(
    mode: PayoffMode,
    model_path: &PathBuf,
    problem_path: &PathBuf,
    tol: f64,
) -> Result<Report, String> {
    let command = "optimal-payoff".to_string();
    match mode {
        PayoffMode::Classical => {
            let model: ClassicalModel = load(model_path)?;
            let problem: DecisionProblem = load(problem_path)?;
            let (value, rdf) = optimal_expected_payoff(&model, &problem).map_err(solver_msg)?;
            let table: Vec<Vec<f64>> = (0..rdf.decision_size())
                .map(|i| (0..rdf.delta_size()).map(|d| rdf.prob(i, d)).collect())
                .collect();
            Ok(Report {
                command,
                verdict: "optimal".into(),
                certificate: json!({ "value": value, "decision_function": table }),
                exit: 0,
            })
        }
        PayoffMode::Quantum => {
            let model: QuantumModel = load(model_path)?;
            let problem: DecisionProblem = load(problem_path)?;
            let sol = optimal_quantum_payoff(&model, &problem, tol).map_err(solver_msg)?;
            Ok(Report {
                command,
                verdict: "optimal".into(),
                certificate: json!({
                    "value": sol.value,
                    "dual_bound": sol.dual_bound,
                    "gap": sol.gap,
                    "povm": hermitian_json(sol.povm.elements()),
                }),
                exit: 0,
            })
        }
        PayoffMode::Game => {
            let structure: InfoStructure = load(model_path)?;
            let operators: PayoffOperators = load(problem_path)?;
            let sol = game_payoff(&structure, &operators, tol).map_err(solver_msg)?;
            Ok(Report {
                command,
                verdict: "optimal".into(),
                certificate: json!({
                    "value": sol.value,
                    "dual_bound": sol.dual_bound,
                    "gap": sol.gap,
                    "povm": hermitian_json(sol.povm.elements()),
                }),
                exit: 0,
            })
        }
    }
}

fn cmd_verify(suite: Suite, trials: u64, seed: u64, max_dim: usize, tol: f64) -> Report {
    let mut failures = 0u64;
    let mut first_counterexample: Option<Value> = None;
    for trial in 0..trials {
        let result = match suite {
            Suite::Bss => trial_bss(seed, trial, tol),
            Suite::Ncbss => trial_ncbss(seed, trial, max_dim, tol),
            Suite::Semiclassical => trial_semiclassical(seed, trial, max_dim, tol),
            Suite::Structures => trial_structures(seed, trial, tol),
        };
        let counterexample = match result {
            Ok(None) => None,
            Ok(Some(ce)) => Some(ce),
            Err(e) => Some(json!({ "trial": trial, "error": format!("{e}") })),
        };
        if let Some(ce) = counterexample {
            failures += 1;
            if first_counterexample.is_none() {
                first_counterexample = Some(ce);
            }
        }
    }
    let passes = trials - failures;
    let verdict = if failures == 0 { "pass" } else { "fail" };
    Report {
        command: format!(
            "verify --suite {} --trials {trials} --seed {seed} --max-dim {max_dim}",
            suite.name()
        ),
        verdict: verdict.into(),
        certificate: json!({
            "suite": suite.name(),
            "trials": trials,
            "seed": seed,
            "max_dim": max_dim,
            "tol": tol,
            "passes": passes,
            "failures": failures,
            "first_counterexample": first_counterexample,
        }),
        exit: u8::from(failures > 0),
    }
}

fn random_problem(rng: &mut rand_chacha::ChaCha12Rng, nt: usize, nx: usize) -> DecisionProblem {
    let payoff: Vec<Vec<f64>> = (0..nt)
        .map(|_| (0..nx).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect())
        .collect();
    DecisionProblem::new(nx, payoff).expect("random problem is well formed")
}

/// Theorem 1: the payoff ordering holds exactly when a garbling exists.
fn trial_bss(seed: u64, trial: u64, tol: f64) -> Result<Option<Value>, SuffError> {
    let mut rng = gen::rng_for(seed, trial);
    let nt = rng.gen_range(2..=4usize);
    let nd = rng.gen_range(2..=5usize);
    let ndp = rng.gen_range(2..=5usize);
    let e = gen::random_classical_model(&mut rng, nt, nd);
    let planted = rng.gen_bool(0.5);
    let f = if planted {
        let mut columns = vec![vec![0.0; nd]; ndp];
        for delta in 0..nd {
            let col = gen::dirichlet_uniform(&mut rng, ndp);
            for (row, &x) in col.iter().enumerate() {
                columns[row][delta] = x;
            }
        }
        TransitionMatrix::new(columns)?.garble(&e)?
    } else {
        gen::random_classical_model(&mut rng, nt, ndp)
    };
    let instance = || {
        json!({
            "trial": trial,
            "planted": planted,
            "e": serde_json::to_value(&e).expect("model serializes"),
            "f": serde_json::to_value(&f).expect("model serializes"),
        })
    };
    match check_ordering_tol(&e, &f, tol)? {
        SufficiencyVerdict::Sufficient { transition } => {
            let garbled = transition.garble(&e)?;
            let mut worst = 0.0f64;
            for (p, q) in garbled.probs().iter().zip(f.probs()) {
                for (a, b) in p.iter().zip(q) {
                    worst = worst.max((a - b).abs());
                }
            }
            if worst > 1e-6 {
                let mut ce = instance();
                ce["failure"] = json!(format!("garbling misses F by {worst:.3e}"));
                return Ok(Some(ce));
            }
            for _ in 0..20 {
                let nx = rng.gen_range(2..=4usize);
                let problem = random_problem(&mut rng, nt, nx);
                let (ve, _) = optimal_expected_payoff(&e, &problem)?;
                let (vf, _) = optimal_expected_payoff(&f, &problem)?;
                if ve < vf - 1e-8 {
                    let mut ce = instance();
                    ce["failure"] =
                        json!(format!("dominance violated: {ve} < {vf} despite garbling"));
                    return Ok(Some(ce));
                }
            }
            Ok(None)
        }
        SufficiencyVerdict::NotSufficient { witness, gap } => {
            if planted {
                let mut ce = instance();
                ce["failure"] = json!("planted garbling judged not sufficient");
                return Ok(Some(ce));
            }
            let (ve, _) = optimal_expected_payoff(&e, &witness)?;
            let (vf, _) = optimal_expected_payoff(&f, &witness)?;
            if vf - ve <= 1e-9 {
                let mut ce = instance();
                ce["failure"] = json!(format!(
                    "witness gap not re-evaluable: {vf} - {ve} vs certified {gap}"
                ));
                return Ok(Some(ce));
            }
            Ok(None)
        }
    }
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("t{i}")).collect()
}

/// Theorem 3: CPTP feasibility implies payoff dominance; infeasibility
/// witnesses must violate trace-distance monotonicity.
fn trial_ncbss(seed: u64, trial: u64, max_dim: usize, tol: f64) -> Result<Option<Value>, SuffError> {
    let mut rng = gen::rng_for(seed, trial);
    let d = rng.gen_range(2..=max_dim);
    let nt = rng.gen_range(2..=3usize);
    let r_states: Vec<DensityMatrix> = (0..nt).map(|_| gen::random_density(&mut rng, d)).collect();
    let planted = rng.gen_bool(0.5);
    let s_states: Vec<DensityMatrix> = if planted {
        let choi = choi_from_kraus(&gen::random_kraus(&mut rng, d, d, d))?;
        r_states
            .iter()
            .map(|rho| apply_choi(&choi, rho))
            .collect::<Result<_, _>>()?
    } else {
        (0..nt).map(|_| gen::random_density(&mut rng, d)).collect()
    };
    let r = QuantumModel::new(labels(nt), d, r_states.clone())?;
    let s = QuantumModel::new(labels(nt), d, s_states.clone())?;
    let instance = || {
        json!({
            "trial": trial,
            "planted": planted,
            "r": serde_json::to_value(&r).expect("model serializes"),
            "s": serde_json::to_value(&s).expect("model serializes"),
        })
    };
    match find_cptp_map(&r_states, &s_states, tol)? {
        CptpOutcome::Feasible(choi) => {
            let residual = max_action_residual(&choi, &r_states, &s_states)?;
            if residual > tol {
                let mut ce = instance();
                ce["failure"] = json!(format!("channel action residual {residual:.3e}"));
                return Ok(Some(ce));
            }
            for _ in 0..10 {
                let nx = rng.gen_range(2..=3usize);
                let problem = random_problem(&mut rng, nt, nx);
                let vr = optimal_quantum_payoff(&r, &problem, 1e-8)?;
                let vs = optimal_quantum_payoff(&s, &problem, 1e-8)?;
                if vr.dual_bound < vs.value - 1e-6 {
                    let mut ce = instance();
                    ce["failure"] = json!(format!(
                        "dominance violated: bound {} < value {}",
                        vr.dual_bound, vs.value
                    ));
                    return Ok(Some(ce));
                }
            }
            Ok(None)
        }
        CptpOutcome::Infeasible { residual, witness } => {
            if planted {
                let mut ce = instance();
                ce["failure"] =
                    json!(format!("planted channel judged infeasible ({residual:.3e})"));
                return Ok(Some(ce));
            }
            if let Some(w) = witness {
                let din = trace_distance(
                    r_states[w.theta].matrix(),
                    r_states[w.theta_prime].matrix(),
                )?;
                let dout = trace_distance(
                    s_states[w.theta].matrix(),
                    s_states[w.theta_prime].matrix(),
                )?;
                if din + 1e-9 >= dout {
                    let mut ce = instance();
                    ce["failure"] = json!(format!(
                        "monotonicity witness invalid: {din} vs {dout}"
                    ));
                    return Ok(Some(ce));
                }
            }
            Ok(None)
        }
    }
}

/// Semi-classical case: for abelian targets, CPTP feasibility must agree
/// with measured-statistics realizability, and the measure-and-prepare
/// closed form must reproduce the channel.
fn trial_semiclassical(
    seed: u64,
    trial: u64,
    max_dim: usize,
    tol: f64,
) -> Result<Option<Value>, SuffError> {
    let mut rng = gen::rng_for(seed, trial);
    let d = rng.gen_range(2..=max_dim);
    let nt = rng.gen_range(2..=3usize);
    let r_states: Vec<DensityMatrix> = (0..nt).map(|_| gen::random_density(&mut rng, d)).collect();
    let planted = rng.gen_bool(0.5);
    let s_states: Vec<DensityMatrix> = if planted {
        let povm = gen::random_povm(&mut rng, d, d);
        r_states
            .iter()
            .map(|rho| {
                let p: Vec<f64> = povm
                    .iter()
                    .map(|e| e.matrix().trace_product(rho.matrix()).re)
                    .collect();
                DensityMatrix::from_matrix(ComplexMatrix::diag(&p))
            })
            .collect::<Result<_, _>>()?
    } else {
        (0..nt)
            .map(|_| DensityMatrix::from_matrix(ComplexMatrix::diag(&gen::dirichlet_uniform(&mut rng, d))))
            .collect::<Result<_, _>>()?
    };
    let instance = || {
        json!({
            "trial": trial,
            "planted": planted,
            "r": serde_json::to_value(&r_states).expect("states serialize"),
            "s": serde_json::to_value(&s_states).expect("states serialize"),
        })
    };
    let cptp = matches!(
        find_cptp_map(&r_states, &s_states, tol)?,
        CptpOutcome::Feasible(_)
    );
    let span: Vec<HermitianOperator> = r_states.iter().map(|r| r.operator().clone()).collect();
    let targets: Vec<Vec<f64>> = (0..d)
        .map(|i| s_states.iter().map(|s| s.matrix()[(i, i)].re).collect())
        .collect();
    let fit = fit_povm_to_statistics(&span, &targets, tol)?;
    let measured = matches!(fit, FitOutcome::Feasible(_));
    if cptp != measured {
        let mut ce = instance();
        ce["failure"] = json!(format!(
            "semi-classical disagreement: cptp {cptp} vs measured {measured}"
        ));
        return Ok(Some(ce));
    }
    if let FitOutcome::Feasible(povm) = fit {
        let projectors: Vec<HermitianOperator> = (0..d)
            .map(|i| {
                let mut diag = vec![0.0; d];
                diag[i] = 1.0;
                HermitianOperator::from_symmetrized(&ComplexMatrix::diag(&diag))
            })
            .collect::<Result<_, _>>()?;
        let choi = measure_prepare_extension(&Povm::new(povm.elements().to_vec())?, &projectors)?;
        let residual = max_action_residual(&choi, &r_states, &s_states)?;
        if residual > 10.0 * tol {
            let mut ce = instance();
            ce["failure"] = json!(format!("measure-prepare residual {residual:.3e}"));
            return Ok(Some(ce));
        }
    }
    Ok(None)
}

/// Comparison of structures: direct sufficiency must agree with the
/// morphism construction on isotropic-composed structures.
fn trial_structures(seed: u64, trial: u64, tol: f64) -> Result<Option<Value>, SuffError> {
    let mut rng = gen::rng_for(seed, trial);
    let source = InfoStructure::new(2, 2, gen::random_density(&mut rng, 4))?;
    let planted = rng.gen_bool(0.5);
    let target = if planted {
        let choi = choi_from_kraus(&gen::random_kraus(&mut rng, 2, 2, 2))?;
        let sup = superoperator_of_choi(&choi)?;
        let mapped = apply_morphism_on_b(&sup, source.state().matrix(), 2)?;
        InfoStructure::new(2, 2, DensityMatrix::from_matrix(mapped)?)?
    } else {
        InfoStructure::new(2, 2, gen::random_density(&mut rng, 4))?
    };
    let instance = || {
        json!({
            "trial": trial,
            "planted": planted,
            "source": serde_json::to_value(&source).expect("structure serializes"),
            "target": serde_json::to_value(&target).expect("structure serializes"),
        })
    };
    let direct = structure_sufficiency(&source, &target, tol)?;
    let sufficient = matches!(direct, SufficiencyOutcome::Sufficient(_));
    if planted && !sufficient {
        let mut ce = instance();
        ce["failure"] = json!("planted channel judged not sufficient");
        return Ok(Some(ce));
    }
    let ancilla = isotropic_structure(2, 0.5)?;
    let src_c = compose_structures(&source, &ancilla)?;
    let tgt_c = compose_structures(&target, &ancilla)?;
    match construct_morphism(&src_c, &tgt_c, tol)? {
        MorphismOutcome::Constructed(res) => {
            if !sufficient {
                let mut ce = instance();
                ce["failure"] = json!(
                    "composed morphism constructed although direct sufficiency failed"
                );
                return Ok(Some(ce));
            }
            if res.residual > tol {
                let mut ce = instance();
                ce["failure"] = json!(format!("morphism residual {:.3e}", res.residual));
                return Ok(Some(ce));
            }
            Ok(None)
        }
        MorphismOutcome::Failed(w) => {
            if sufficient {
                let mut ce = instance();
                ce["failure"] =
                    json!("direct sufficiency holds but composed morphism failed");
                return Ok(Some(ce));
            }
            if w.gap <= 1e-9 {
                let mut ce = instance();
                ce["failure"] = json!(format!("witness gap too small: {:.3e}", w.gap));
                return Ok(Some(ce));
            }
            Ok(None)
        }
    }
}
