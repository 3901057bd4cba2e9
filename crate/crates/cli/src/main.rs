//! Command-line front end: simulate, probe stability, derive equation/model
//! representations, solve them, and run the verification suite.
//!
//! Exit codes: 0 ok/pass, 1 refuted/fail, 2 usage or parse error,
//! 3 inconclusive, 4 derivation refused (structural solvability).

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ode2scm::dynamics::{
    integrate_with_outcome, probe_stability, FlowOptions, IntegrateOptions, ProbeOptions,
    StabilityVerdict, StabilityWitness,
};
use ode2scm::equilibrium::{solve_lee, Lee, SolveOptions, SolveStatus};
use ode2scm::model::{builtin_lotka_volterra, builtin_mass_spring, MassSpringParams, ModelCore};
use ode2scm::scm::{derive_scm, solve_scm, DeriveOptions, ScmError};
use ode2scm::system::{Intervention, OdeSystem};
use ode2scm::verify::{
    check_commutative_diagram, default_suite_models, render_commutation_report,
    run_verification_suite, CheckVerdict, VerifyOptions,
};

type System = ode2scm::OdeSystem64;

const EXIT_OK: u8 = 0;
const EXIT_REFUTED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;
const EXIT_UNSOLVABLE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ode2scm",
    version,
    about = "Deterministic ODE systems, equilibrium equations, and structural causal models \
             with shared perfect-intervention semantics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the (optionally intervened) system and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Probe stability from sampled initial states.
    Stability(StabilityArgs),
    /// Render equilibrium equations and/or the derived causal model.
    Derive(DeriveArgs),
    /// Solve the equilibrium equations or the structural equations.
    Solve(SolveArgs),
    /// Run the commutation checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Model file in the declaration language.
    #[arg(long, conflicts_with = "builtin", value_name = "FILE")]
    model: Option<PathBuf>,
    /// Built-in model.
    #[arg(long, value_enum)]
    builtin: Option<Builtin>,
    /// Predator-prey parameters th11,th12,th21,th22.
    #[arg(long, value_delimiter = ',', value_name = "T,T,T,T")]
    theta: Option<Vec<f64>>,
    /// Predator-prey initial abundances a,b.
    #[arg(long, value_delimiter = ',', value_name = "A,B")]
    lv_init: Option<Vec<f64>>,
    /// Number of masses in the mass-spring chain.
    #[arg(long, default_value_t = 4)]
    d: usize,
    /// Masses m1..mD (default: all 1).
    #[arg(long, value_delimiter = ',')]
    masses: Option<Vec<f64>>,
    /// Spring constants k0..kD (default: all 1).
    #[arg(long, value_delimiter = ',')]
    springs: Option<Vec<f64>>,
    /// Rest lengths l0..lD (default: all 1).
    #[arg(long, value_delimiter = ',')]
    lengths: Option<Vec<f64>>,
    /// Friction coefficients b1..bD (default: all 1).
    #[arg(long, value_delimiter = ',')]
    frictions: Option<Vec<f64>>,
    /// Right wall position (default: D + 1).
    #[arg(long)]
    wall: Option<f64>,
    /// Initial positions Q1..QD.
    #[arg(long, value_delimiter = ',')]
    init_q: Option<Vec<f64>>,
    /// Initial momenta P1..PD (default: all 0).
    #[arg(long, value_delimiter = ',')]
    init_p: Option<Vec<f64>>,
    /// Perfect intervention, e.g. `--do X2=2`, `--do "X2=(3,0)"`, or the
    /// coordinate sugar `--do Q2=3` (clamps the whole block, momenta at 0).
    /// Repeats compose into one joint intervention.
    #[arg(long = "do", value_name = "NAME=VALUE[,NAME=VALUE...]")]
    clamps: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    /// Predator-prey (two coupled populations).
    Lv,
    /// Damped mass-spring chain between fixed walls.
    MassSpring,
}

impl ModelArgs {
    fn build_system(&self) -> Result<System> {
        let spec = match (&self.model, self.builtin) {
            (Some(path), None) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read model file `{}`", path.display()))?;
                ode2scm::parser::parse_model::<f64>(&text)
                    .map_err(|e| anyhow!("{}: {e}", path.display()))?
            }
            (None, Some(Builtin::Lv)) => {
                let t = self.theta.clone().unwrap_or_else(|| vec![1.0; 4]);
                if t.len() != 4 {
                    bail!("--theta takes exactly four values");
                }
                let i = self.lv_init.clone().unwrap_or_else(|| vec![1.0, 1.0]);
                if i.len() != 2 {
                    bail!("--lv-init takes exactly two values");
                }
                builtin_lotka_volterra((t[0], t[1], t[2], t[3]), (i[0], i[1]))?
            }
            (None, Some(Builtin::MassSpring)) => {
                let mut p = MassSpringParams::<f64>::uniform(self.d);
                if let Some(v) = &self.masses {
                    p.masses = v.clone();
                }
                if let Some(v) = &self.springs {
                    p.springs = v.clone();
                }
                if let Some(v) = &self.lengths {
                    p.lengths = v.clone();
                }
                if let Some(v) = &self.frictions {
                    p.frictions = v.clone();
                }
                if let Some(w) = self.wall {
                    p.wall = w;
                }
                if let Some(v) = &self.init_q {
                    p.init_positions = v.clone();
                }
                if let Some(v) = &self.init_p {
                    p.init_momenta = v.clone();
                }
                builtin_mass_spring(&p)?
            }
            (None, None) => bail!("one of --model or --builtin is required"),
            (Some(_), Some(_)) => unreachable!("clap conflict"),
        };
        let sys = OdeSystem::build(&spec);
        for w in sys.warnings() {
            eprintln!("warning: {}", w.message);
        }
        Ok(sys)
    }

    fn intervention(&self, core: &ModelCore<f64>) -> Result<Intervention<f64>> {
        let mut merged: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for spec in &self.clamps {
            for item in split_top_level(spec) {
                let (name, values) = parse_clamp_item(&item)?;
                let (block, values) = resolve_clamp(core, &name, values)?;
                merged.insert(block, values);
            }
        }
        let clamps: Vec<(&str, Vec<f64>)> = merged
            .iter()
            .map(|(n, v)| (n.as_str(), v.clone()))
            .collect();
        Ok(Intervention::new(core, &clamps)?)
    }
}

/// Split `a=1,b=(2,3)` on commas outside parentheses.
fn split_top_level(spec: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for ch in spec.chars() {
        match ch {
            '(' => {
                depth += 1;
                current.push(ch);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                current.push(ch);
            }
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut current));
            }
            _ => current.push(ch),
        }
    }
    if !current.trim().is_empty() {
        out.push(current);
    }
    out
}

fn parse_clamp_item(item: &str) -> Result<(String, Vec<f64>)> {
    let (name, value) = item
        .split_once('=')
        .ok_or_else(|| anyhow!("intervention `{item}` is not of the form NAME=VALUE"))?;
    let name = name.trim().to_string();
    let value = value.trim();
    let values: Vec<f64> = if let Some(inner) = value.strip_prefix('(') {
        let inner = inner
            .strip_suffix(')')
            .ok_or_else(|| anyhow!("unbalanced parentheses in `{item}`"))?;
        inner
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| anyhow!("bad number in `{item}`")))
            .collect::<Result<_>>()?
    } else {
        vec![value
            .parse::<f64>()
            .map_err(|_| anyhow!("bad number in `{item}`"))?]
    };
    Ok((name, values))
}

/// Resolve a clamp name: a block name directly, or a coordinate name as sugar
/// for clamping its whole block with the remaining coordinates at zero.
fn resolve_clamp(
    core: &ModelCore<f64>,
    name: &str,
    values: Vec<f64>,
) -> Result<(String, Vec<f64>)> {
    if let Some(b) = core.block_index(name) {
        return Ok((core.blocks()[b].name.clone(), values));
    }
    if let Some(c) = core.coord_index(name) {
        if values.len() != 1 {
            bail!("coordinate clamp `{name}` takes a single value");
        }
        let b = core.block_of_coord(c);
        let range = core.block_range(b);
        let mut full = vec![0.0; range.len()];
        full[c - range.start] = values[0];
        return Ok((core.blocks()[b].name.clone(), full));
    }
    bail!("unknown intervention target `{name}`")
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Integration horizon.
    #[arg(long, default_value_t = 50.0)]
    t_end: f64,
    /// Number of uniformly spaced output samples.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Realize interventions softly with this restoring gain instead of hard
    /// clamping.
    #[arg(long)]
    soft_kappa: Option<f64>,
    #[arg(long, default_value_t = 1e-9)]
    abs_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    rel_tol: f64,
    /// Drift max-norm threshold for the convergence report.
    #[arg(long, default_value_t = 1e-8)]
    eq_tol: f64,
    /// Write the CSV here instead of standard output.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Also write a gnuplot script that plots the CSV (requires --out).
    #[arg(long, value_name = "FILE", requires = "out")]
    gnuplot: Option<PathBuf>,
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8> {
    let sys = args.model.build_system()?;
    let iv = args.model.intervention(sys.core())?;
    let sys = match args.soft_kappa {
        Some(kappa) => sys.intervene_soft(&iv, kappa)?,
        None => sys.intervene_hard(&iv)?,
    };
    let n = args.samples.max(1);
    let grid: Vec<f64> = (0..=n)
        .map(|i| args.t_end * i as f64 / n as f64)
        .collect();
    let flow = FlowOptions {
        eq_tol: args.eq_tol,
        t_max: args.t_end,
        integrate: IntegrateOptions {
            abs_tol: args.abs_tol,
            rel_tol: args.rel_tol,
            sample_times: Some(grid),
            ..IntegrateOptions::default()
        },
        ..FlowOptions::default()
    };
    let (traj, outcome) = integrate_with_outcome(&sys, sys.init(), &flow);
    let csv = traj.to_csv(sys.core());
    let mut summary = format!("status: {}\n", outcome.status);
    if let Some(eq) = &outcome.equilibrium {
        summary.push_str(&format!(
            "equilibrium: [{}]\n",
            eq.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
        ));
    }
    if let Some(r) = outcome.residual {
        summary.push_str(&format!("residual: {r:e}\n"));
    }
    if let Some(t) = outcome.convergence_time {
        summary.push_str(&format!("convergence time: {t}\n"));
    }
    if let Some(d) = &outcome.diagnostic {
        summary.push_str(&format!("diagnostic: {d}\n"));
    }
    match &args.out {
        Some(path) => {
            std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?;
            if let Some(script) = &args.gnuplot {
                std::fs::write(script, gnuplot_script(path, sys.core()))
                    .with_context(|| format!("writing {}", script.display()))?;
            }
            print!("{summary}");
        }
        None => {
            print!("{csv}");
            eprint!("{summary}");
        }
    }
    Ok(match traj.termination {
        ode2scm::dynamics::TerminationReason::StepUnderflow => EXIT_REFUTED,
        _ => EXIT_OK,
    })
}

fn gnuplot_script(csv: &std::path::Path, core: &ModelCore<f64>) -> String {
    let mut plots = Vec::new();
    for (i, name) in core.coord_names().enumerate() {
        plots.push(format!(
            "'{}' using 1:{} with lines title '{name}'",
            csv.display(),
            i + 2
        ));
    }
    format!(
        "set datafile separator ','\nset key outside\nset xlabel 't'\nplot {}\npause -1\n",
        plots.join(", \\\n     ")
    )
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 1e-5)]
    match_tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    eq_tol: f64,
    #[arg(long, default_value_t = 1e3)]
    t_max: f64,
    #[arg(long, env = "ODE2SCM_SEED", default_value_t = 0)]
    seed: u64,
}

fn cmd_stability(args: StabilityArgs) -> Result<u8> {
    let sys = args.model.build_system()?;
    let iv = args.model.intervention(sys.core())?;
    let sys = sys.intervene_hard(&iv)?;
    let opts = ProbeOptions {
        trials: args.trials,
        match_tol: args.match_tol,
        seed: args.seed,
        flow: FlowOptions {
            eq_tol: args.eq_tol,
            t_max: args.t_max,
            ..FlowOptions::default()
        },
        ..ProbeOptions::default()
    };
    let report = probe_stability(&sys, &opts);
    println!("verdict: {}", report.verdict);
    for (i, t) in report.trials.iter().enumerate() {
        println!(
            "trial {i}: {}{}",
            t.outcome.status,
            t.outcome
                .convergence_time
                .map(|tc| format!(" (t = {tc:.3})"))
                .unwrap_or_default()
        );
    }
    if let Some(d) = report.max_pairwise_distance {
        println!("max pairwise limit distance: {d:e}");
    }
    match &report.witness {
        Some(StabilityWitness::DistinctLimits { limit_a, limit_b, .. }) => {
            println!("witness: two initial states with distinct limits");
            println!(
                "  limit a: [{}]",
                limit_a.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", ")
            );
            println!(
                "  limit b: [{}]",
                limit_b.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", ")
            );
        }
        Some(StabilityWitness::NonConvergence { status, .. }) => {
            println!("witness: a non-converging initial state ({status})");
        }
        None => {}
    }
    Ok(match report.verdict {
        StabilityVerdict::StableWrtProbes => EXIT_OK,
        StabilityVerdict::Refuted => EXIT_REFUTED,
        StabilityVerdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

#[derive(Clone, Copy, ValueEnum)]
enum DeriveTarget {
    Lee,
    Scm,
    Both,
}

#[derive(Args)]
struct DeriveArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Which representation to derive.
    #[arg(long, value_enum, default_value_t = DeriveTarget::Both)]
    to: DeriveTarget,
    /// Derive the causal model even when the solvability probes refuse.
    #[arg(long)]
    force: bool,
    /// Omit constant-zero coordinates (e.g. momenta) from the model text.
    #[arg(long)]
    project_zero: bool,
    /// Write files (lee.txt, scm.txt, system.dot, scm.dot) here instead of
    /// printing.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long, env = "ODE2SCM_SEED", default_value_t = 0)]
    seed: u64,
}

fn cmd_derive(args: DeriveArgs) -> Result<u8> {
    let sys = args.model.build_system()?;
    let iv = args.model.intervention(sys.core())?;
    let sys = sys.intervene_hard(&iv)?;
    let lee = Lee::from_system(&sys);

    let mut outputs: Vec<(&str, String)> = Vec::new();
    outputs.push(("system.dot", sys.graph().to_dot()));
    if matches!(args.to, DeriveTarget::Lee | DeriveTarget::Both) {
        outputs.push(("lee.txt", lee.render()));
    }
    if matches!(args.to, DeriveTarget::Scm | DeriveTarget::Both) {
        let mut derive_opts = DeriveOptions::<f64> {
            force: args.force,
            ..DeriveOptions::default()
        };
        derive_opts.solvability.seed = args.seed;
        match derive_scm(&lee, &derive_opts) {
            Ok(scm) => {
                if args.force {
                    eprintln!(
                        "warning: --force skips the structural-solvability probes; \
                         mechanisms may be degenerate for some parent values"
                    );
                }
                let text = if args.project_zero {
                    scm.render_projected()
                } else {
                    scm.render()
                };
                outputs.push(("scm.txt", text));
                outputs.push(("scm.dot", scm.graph().to_dot()));
            }
            Err(e @ ScmError::NotStructurallySolvable { .. }) => {
                eprintln!("derivation refused: {e}");
                eprintln!("(use --force to derive anyway)");
                return Ok(EXIT_UNSOLVABLE);
            }
            Err(e) => return Err(e.into()),
        }
    }
    match &args.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for (name, content) in &outputs {
                std::fs::write(dir.join(name), content)?;
            }
            println!("wrote {} files to {}", outputs.len(), dir.display());
        }
        None => {
            for (name, content) in &outputs {
                println!("--- {name} ---");
                print!("{content}");
            }
        }
    }
    Ok(EXIT_OK)
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveTarget {
    Lee,
    Scm,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Solve the equilibrium equations or the derived structural equations.
    #[arg(long, value_enum, default_value_t = SolveTarget::Lee)]
    what: SolveTarget,
    #[arg(long, default_value_t = 32)]
    starts: usize,
    #[arg(long, env = "ODE2SCM_SEED", default_value_t = 0)]
    seed: u64,
    /// Needed for `--what scm` on models that fail the solvability probes.
    #[arg(long)]
    force: bool,
}

fn cmd_solve(args: SolveArgs) -> Result<u8> {
    let sys = args.model.build_system()?;
    let iv = args.model.intervention(sys.core())?;
    let sys = sys.intervene_hard(&iv)?;
    let lee = Lee::from_system(&sys);
    let opts = SolveOptions {
        starts: args.starts,
        seed: args.seed,
        ..SolveOptions::default()
    };
    let result = match args.what {
        SolveTarget::Lee => solve_lee(&lee, &opts),
        SolveTarget::Scm => {
            let derive_opts = DeriveOptions {
                force: args.force,
                ..DeriveOptions::default()
            };
            match derive_scm(&lee, &derive_opts) {
                Ok(scm) => solve_scm(&scm, &opts),
                Err(e @ ScmError::NotStructurallySolvable { .. }) => {
                    eprintln!("derivation refused: {e}");
                    return Ok(EXIT_UNSOLVABLE);
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    println!("status: {}", result.status);
    let names: Vec<&str> = sys.core().coord_names().collect();
    println!("coordinates: [{}]", names.join(", "));
    for (i, sol) in result.solutions.iter().enumerate() {
        println!(
            "solution {i}: [{}]",
            sol.iter().map(|v| format!("{v:.12}")).collect::<Vec<_>>().join(", ")
        );
    }
    if let Some(r) = result.residual {
        println!("residual: {r:e}");
    }
    println!(
        "starts: {} converged, {} failed, {} total ({} Newton iterations)",
        result.stats.converged, result.stats.failed, result.stats.starts, result.stats.iterations
    );
    Ok(match result.status {
        SolveStatus::NoneFound => EXIT_REFUTED,
        _ => EXIT_OK,
    })
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Run the default model sweep instead of a single model.
    #[arg(long, conflicts_with_all = ["model", "builtin"])]
    suite: bool,
    /// Random interventions sampled per model in suite mode.
    #[arg(long, default_value_t = 3)]
    random_interventions: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, env = "ODE2SCM_SEED", default_value_t = 0)]
    seed: u64,
    /// Write the report here as well as printing it.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

fn cmd_verify(args: VerifyArgs) -> Result<u8> {
    let opts = VerifyOptions {
        tol: args.tol,
        seed: args.seed,
        ..VerifyOptions::default()
    };
    if args.suite || (args.model.model.is_none() && args.model.builtin.is_none()) {
        let models = default_suite_models::<f64>();
        let report = run_verification_suite(&models, args.random_interventions, &opts);
        let rendered = report.render();
        print!("{rendered}");
        if let Some(path) = &args.out {
            std::fs::write(path, &rendered)?;
        }
        return Ok(if report.any_failure() { EXIT_REFUTED } else { EXIT_OK });
    }
    let sys = args.model.build_system()?;
    let iv = args.model.intervention(sys.core())?;
    let name = match args.model.builtin {
        Some(Builtin::Lv) => "lotka-volterra".to_string(),
        Some(Builtin::MassSpring) => format!("mass-spring-d{}", args.model.d),
        None => "custom".to_string(),
    };
    let report = check_commutative_diagram(&sys, &iv, &name, &opts);
    let rendered = render_commutation_report(&report);
    print!("{rendered}");
    if let Some(path) = &args.out {
        std::fs::write(path, &rendered)?;
    }
    Ok(match report.verdict {
        CheckVerdict::Fail => EXIT_REFUTED,
        CheckVerdict::Pass | CheckVerdict::PreconditionUnmet => EXIT_OK,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Stability(args) => cmd_stability(args),
        Command::Derive(args) => cmd_derive(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_items_parse() {
        assert_eq!(
            split_top_level("X2=(3,0),X1=0.5"),
            vec!["X2=(3,0)".to_string(), "X1=0.5".to_string()]
        );
        let (name, values) = parse_clamp_item("X2=(3,0)").unwrap();
        assert_eq!(name, "X2");
        assert_eq!(values, vec![3.0, 0.0]);
        let (name, values) = parse_clamp_item(" X1 = 2.5 ").unwrap();
        assert_eq!(name, "X1");
        assert_eq!(values, vec![2.5]);
        assert!(parse_clamp_item("X1").is_err());
        assert!(parse_clamp_item("X1=(1,").is_err());
    }

    #[test]
    fn coordinate_sugar_expands_to_a_block_clamp() {
        let spec = builtin_mass_spring(&MassSpringParams::<f64>::uniform(2)).unwrap();
        let core = spec.core();
        let (block, values) = resolve_clamp(core, "Q2", vec![3.0]).unwrap();
        assert_eq!(block, "X2");
        assert_eq!(values, vec![3.0, 0.0]);
        let (block, values) = resolve_clamp(core, "X1", vec![1.0, 0.5]).unwrap();
        assert_eq!(block, "X1");
        assert_eq!(values, vec![1.0, 0.5]);
        assert!(resolve_clamp(core, "nope", vec![1.0]).is_err());
    }
}
