//! Labeled equilibrium equations: construction from an ODE system,
//! intervention semantics, multistart Newton solving, and solvability probing.
//!
//! Each block label `i` carries either the equation `0 = g_i(X_pa(i))` with
//! `g_i` taken verbatim from the block's dynamics, or a clamp equation
//! `0 = X_i - xi_i` recording an intervention. Replacing a label's equation by
//! a clamp commutes with the hard intervention on the ODE side, and the
//! equality is structural, not numeric.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::expr::{Expr, MapEnv};
use crate::model::ModelCore;
use crate::newton::{self, NewtonFailure, NewtonOptions};
use crate::rng::{Purpose, Stream};
use crate::scalar::Scalar;
use crate::system::{inflated_box, CExpr, Intervention, InterventionError, OdeSystem};

/// One labeled equation: the equilibrium residual of a block, or a clamp.
#[derive(Debug, Clone)]
pub enum LeeEquation<T> {
    Residual {
        /// One residual expression per coordinate of the block.
        exprs: Vec<Expr<T>>,
        parents: BTreeSet<usize>,
    },
    Clamp { xi: Vec<T> },
}

impl<T: Scalar> PartialEq for LeeEquation<T> {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                LeeEquation::Residual { exprs: a, parents: pa },
                LeeEquation::Residual { exprs: b, parents: pb },
            ) => a == b && pa == pb,
            (LeeEquation::Clamp { xi: a }, LeeEquation::Clamp { xi: b }) => a == b,
            _ => false,
        }
    }
}

/// A system of labeled equilibrium equations, one label per block.
#[derive(Debug, Clone)]
pub struct Lee<T> {
    core: Arc<ModelCore<T>>,
    equations: Vec<LeeEquation<T>>,
    /// Start hint for solvers; tracks clamp values under interventions.
    init: Vec<T>,
}

impl<T: Scalar> PartialEq for Lee<T> {
    fn eq(&self, other: &Self) -> bool {
        self.core == other.core && self.equations == other.equations && self.init == other.init
    }
}

impl<T: Scalar> Lee<T> {
    /// Equilibrium equations of an ODE system: `g_i := f_i` with identical
    /// parent sets; hard-clamped blocks map to clamp equations.
    pub fn from_system(sys: &OdeSystem<T>) -> Lee<T> {
        let core = sys.core().clone();
        let equations = (0..core.n_blocks())
            .map(|b| match sys.clamped().get(&b) {
                Some(xi) => LeeEquation::Clamp { xi: xi.clone() },
                None => LeeEquation::Residual {
                    exprs: core.block_range(b).map(|c| sys.dynamics()[c].clone()).collect(),
                    parents: sys.parents(b).clone(),
                },
            })
            .collect();
        Lee {
            core,
            equations,
            init: sys.init().to_vec(),
        }
    }

    pub fn core(&self) -> &Arc<ModelCore<T>> {
        &self.core
    }

    pub fn equations(&self) -> &[LeeEquation<T>] {
        &self.equations
    }

    pub fn init(&self) -> &[T] {
        &self.init
    }

    /// Parent set of label `i`; clamp equations depend on their own block
    /// only.
    pub fn parents(&self, label: usize) -> BTreeSet<usize> {
        match &self.equations[label] {
            LeeEquation::Residual { parents, .. } => parents.clone(),
            LeeEquation::Clamp { .. } => BTreeSet::from([label]),
        }
    }

    /// Replace the labeled equations of the targeted blocks by clamps; all
    /// other labels are untouched.
    pub fn intervene(&self, iv: &Intervention<T>) -> Result<Lee<T>, InterventionError> {
        crate::system::validate_intervention(&self.core, iv)?;
        let mut out = self.clone();
        for (&b, values) in iv.targets() {
            out.equations[b] = LeeEquation::Clamp { xi: values.clone() };
            for (k, c) in self.core.block_range(b).enumerate() {
                out.init[c] = values[k];
            }
        }
        Ok(out)
    }

    /// Canonical text rendering, one line per label:
    /// `E[<block>]: 0 = <expr>[; 0 = <expr>]*`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (b, eq) in self.equations.iter().enumerate() {
            let block = &self.core.blocks()[b];
            let _ = write!(out, "E[{}]:", block.name);
            match eq {
                LeeEquation::Residual { exprs, .. } => {
                    for (k, e) in exprs.iter().enumerate() {
                        let sep = if k == 0 { " " } else { "; " };
                        let _ = write!(out, "{sep}0 = {e}");
                    }
                }
                LeeEquation::Clamp { xi } => {
                    for (k, coord) in block.coords.iter().enumerate() {
                        let sep = if k == 0 { " " } else { "; " };
                        let clamp: Expr<T> =
                            Expr::Sub(Box::new(Expr::var(coord.clone())), Box::new(Expr::Const(xi[k])));
                        let _ = write!(out, "{sep}0 = {clamp}");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    /// All residual expressions with the clamp equations appended in
    /// `0 = X - xi` form; used by solvers and equivalence tests.
    fn scalar_equations(&self) -> Vec<(usize, Expr<T>)> {
        let mut out = Vec::new();
        for (b, eq) in self.equations.iter().enumerate() {
            match eq {
                LeeEquation::Residual { exprs, .. } => {
                    for (k, e) in exprs.iter().enumerate() {
                        let c = self.core.block_range(b).nth(k).unwrap();
                        out.push((c, e.clone()));
                    }
                }
                LeeEquation::Clamp { xi } => {
                    for (k, c) in self.core.block_range(b).enumerate() {
                        let coord = self.core.coord_name(c).to_string();
                        out.push((
                            c,
                            Expr::Sub(Box::new(Expr::var(coord)), Box::new(Expr::Const(xi[k]))),
                        ));
                    }
                }
            }
        }
        out
    }

    /// Max-norm residual of the full labeled system at `x`, evaluated through
    /// the plain (symbolic) expression path.
    pub fn residual_at(&self, x: &[T]) -> Result<T, crate::expr::EvalError> {
        let coords: Vec<(String, T)> = self
            .core
            .coord_names()
            .map(str::to_string)
            .zip(x.iter().copied())
            .collect();
        let params: Vec<(String, T)> = self.core.params().to_vec();
        let env = MapEnv {
            coords: &coords,
            params: &params,
        };
        let mut worst = T::zero();
        for (_, e) in self.scalar_equations() {
            worst = worst.max(e.eval(&env)?.abs());
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Exactly one solution cluster and at least half the starts converged.
    UniqueWrtProbes,
    /// Two or more distinct solution clusters.
    Multiple,
    /// No start produced a reliable solution.
    NoneFound,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::UniqueWrtProbes => "unique-w.r.t.-probes",
            SolveStatus::Multiple => "multiple",
            SolveStatus::NoneFound => "none-found",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveStats {
    pub starts: usize,
    pub converged: usize,
    pub failed: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult<T> {
    pub status: SolveStatus,
    /// The solution when the probes found exactly one cluster.
    pub solution: Option<Vec<T>>,
    /// Residual max-norm at `solution`, re-evaluated symbolically.
    pub residual: Option<T>,
    /// Distinct solutions found, lexicographically sorted.
    pub solutions: Vec<Vec<T>>,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions<T> {
    pub starts: usize,
    pub newton: NewtonOptions<T>,
    /// Distinct-solution clustering distance (max-norm).
    pub cluster_tol: T,
    pub seed: u64,
    /// Multistart box: the initial-value box inflated by this factor and
    /// clipped to the domains.
    pub box_inflation: T,
    pub sample_box: Option<Vec<(T, T)>>,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        SolveOptions {
            starts: 32,
            newton: NewtonOptions::default(),
            cluster_tol: T::of(1e-6),
            seed: 0,
            box_inflation: T::of(3.0),
            sample_box: None,
        }
    }
}

/// Slack when filtering Newton roots against coordinate domains.
const DOMAIN_ROOT_SLACK: f64 = 1e-9;

/// Solve the labeled equations by damped Newton from multiple starts. Clamp
/// equations are eliminated by substitution first; the nonlinear solve runs
/// over the remaining coordinates with the symbolic Jacobian.
pub fn solve_lee<T: Scalar>(lee: &Lee<T>, opts: &SolveOptions<T>) -> SolveResult<T> {
    let core = lee.core().clone();
    let n = lee.init.len();
    // Unknowns: coordinates of residual-labeled blocks.
    let mut unknowns: Vec<usize> = Vec::new();
    let mut template = lee.init.to_vec();
    let mut residual_exprs: Vec<Expr<T>> = Vec::new();
    for (b, eq) in lee.equations.iter().enumerate() {
        match eq {
            LeeEquation::Residual { exprs, .. } => {
                unknowns.extend(core.block_range(b));
                residual_exprs.extend(exprs.iter().cloned());
            }
            LeeEquation::Clamp { xi } => {
                for (k, c) in core.block_range(b).enumerate() {
                    template[c] = xi[k];
                }
            }
        }
    }
    let m = unknowns.len();
    debug_assert_eq!(m, residual_exprs.len());

    if m == 0 {
        // Everything clamped: the template is the unique solution.
        let residual = lee.residual_at(&template).unwrap_or_else(|_| T::infinity());
        return SolveResult {
            status: SolveStatus::UniqueWrtProbes,
            solution: Some(template.clone()),
            residual: Some(residual),
            solutions: vec![template],
            stats: SolveStats {
                starts: 1,
                converged: 1,
                failed: 0,
                iterations: 0,
            },
        };
    }

    let compiled: Vec<CExpr<T>> = residual_exprs
        .iter()
        .map(|e| CExpr::compile(e, &core))
        .collect();
    let jac_compiled: Vec<Vec<CExpr<T>>> = residual_exprs
        .iter()
        .map(|e| {
            unknowns
                .iter()
                .map(|&c| CExpr::compile(&e.differentiate(core.coord_name(c)), &core))
                .collect()
        })
        .collect();

    let eval_residual = |u: &[T], out: &mut [T], state: &mut Vec<T>| -> Result<(), ()> {
        for (k, &c) in unknowns.iter().enumerate() {
            state[c] = u[k];
        }
        for (r, e) in compiled.iter().enumerate() {
            out[r] = e.eval(state)?;
        }
        Ok(())
    };

    let boxes_full = opts
        .sample_box
        .clone()
        .unwrap_or_else(|| inflated_box(&core, &lee.init, opts.box_inflation));

    let mut stats = SolveStats {
        starts: opts.starts,
        ..SolveStats::default()
    };
    let mut found: Vec<Vec<T>> = Vec::new();
    for start_idx in 0..opts.starts {
        let start: Vec<T> = if start_idx == 0 {
            unknowns.iter().map(|&c| lee.init[c]).collect()
        } else {
            let mut stream = Stream::new(opts.seed, Purpose::NewtonStart, start_idx as u64);
            unknowns
                .iter()
                .map(|&c| stream.uniform(boxes_full[c].0, boxes_full[c].1))
                .collect()
        };
        let mut state_mut = template.clone();
        let mut res_fn = |u: &[T], out: &mut [T]| eval_residual(u, out, &mut state_mut);
        let mut state_jac = template.clone();
        let mut jac_fn = |u: &[T], out: &mut [Vec<T>]| -> Result<(), ()> {
            for (k, &c) in unknowns.iter().enumerate() {
                state_jac[c] = u[k];
            }
            for (r, row) in jac_compiled.iter().enumerate() {
                for (k, e) in row.iter().enumerate() {
                    out[r][k] = e.eval(&state_jac)?;
                }
            }
            Ok(())
        };
        match newton::damped_newton(&start, &mut res_fn, &mut jac_fn, &opts.newton) {
            Ok(sol) => {
                stats.iterations += sol.iterations;
                let mut full = template.clone();
                for (k, &c) in unknowns.iter().enumerate() {
                    full[c] = sol.x[k];
                }
                // Independent re-check through the symbolic path, and domain
                // membership with slack.
                let ok_res = lee
                    .residual_at(&full)
                    .map(|r| r < opts.newton.residual_tol)
                    .unwrap_or(false);
                let slack = T::of(DOMAIN_ROOT_SLACK);
                let ok_dom = (0..n).all(|c| {
                    core.domain(c)
                        .contains_slack(full[c], slack * (T::one() + full[c].abs()))
                });
                if ok_res && ok_dom {
                    stats.converged += 1;
                    found.push(full);
                } else {
                    stats.failed += 1;
                }
            }
            Err(NewtonFailure::EvalFailed)
            | Err(NewtonFailure::SingularJacobian)
            | Err(NewtonFailure::LineSearchStalled)
            | Err(NewtonFailure::MaxIterations) => {
                stats.failed += 1;
            }
        }
    }

    let clusters = newton::cluster_solutions(found, opts.cluster_tol);
    let solutions: Vec<Vec<T>> = clusters.iter().map(|(rep, _)| rep.clone()).collect();
    let status = match solutions.len() {
        0 => SolveStatus::NoneFound,
        1 if stats.converged * 2 >= stats.starts => SolveStatus::UniqueWrtProbes,
        1 => SolveStatus::NoneFound,
        _ => SolveStatus::Multiple,
    };
    let solution = if status == SolveStatus::UniqueWrtProbes {
        Some(solutions[0].clone())
    } else {
        None
    };
    let residual = solution
        .as_ref()
        .map(|s| lee.residual_at(s).unwrap_or_else(|_| T::infinity()));
    SolveResult {
        status,
        solution,
        residual,
        solutions,
        stats,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvabilityVerdict {
    /// Unique solution at every sampled clamp value.
    Solvable,
    /// Unique at some sampled clamp values, not at others.
    GenericOnly,
    /// No sampled clamp value gave a unique solution.
    Unsolvable,
}

impl std::fmt::Display for SolvabilityVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolvabilityVerdict::Solvable => "solvable-w.r.t.-probes",
            SolvabilityVerdict::GenericOnly => "generic-only",
            SolvabilityVerdict::Unsolvable => "unsolvable",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSolvability<T> {
    pub verdict: SolvabilityVerdict,
    pub draws: Vec<(Intervention<T>, SolveResult<T>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XiSampleOptions<T> {
    /// Random clamp draws per target set.
    pub draws: usize,
    /// Additionally probe the current initial value of the targets first.
    /// This deterministically exercises degenerate clamp values that happen
    /// to sit at the model's initial condition.
    pub include_init_value: bool,
    pub seed: u64,
    pub solve: SolveOptions<T>,
}

impl<T: Scalar> Default for XiSampleOptions<T> {
    fn default() -> Self {
        XiSampleOptions {
            draws: 5,
            include_init_value: true,
            seed: 0,
            solve: SolveOptions::default(),
        }
    }
}

/// Solvability with respect to a family of target sets: solve the intervened
/// equations at sampled clamp values for each target set.
pub fn check_solvability<T: Scalar>(
    lee: &Lee<T>,
    targets: &[Vec<usize>],
    opts: &XiSampleOptions<T>,
) -> BTreeMap<Vec<usize>, TargetSolvability<T>> {
    let core = lee.core().clone();
    let boxes = inflated_box(&core, lee.init(), T::of(1.5));
    let mut out = BTreeMap::new();
    for (ti, target) in targets.iter().enumerate() {
        let mut draws = Vec::new();
        let extra = usize::from(opts.include_init_value && !target.is_empty());
        for draw in 0..opts.draws + extra {
            let mut stream = Stream::new(
                opts.seed,
                Purpose::ClampValue,
                ((ti as u64) << 32) | draw as u64,
            );
            let clamps: Vec<(usize, Vec<T>)> = target
                .iter()
                .map(|&b| {
                    let values: Vec<T> = core
                        .block_range(b)
                        .map(|c| {
                            if draw == 0 && extra == 1 {
                                lee.init[c]
                            } else {
                                stream.uniform(boxes[c].0, boxes[c].1)
                            }
                        })
                        .collect();
                    (b, values)
                })
                .collect();
            let iv = match Intervention::from_indices(&core, &clamps) {
                Ok(iv) => iv,
                Err(_) => continue,
            };
            let cut = match lee.intervene(&iv) {
                Ok(l) => l,
                Err(_) => continue,
            };
            let result = solve_lee(&cut, &opts.solve);
            draws.push((iv, result));
        }
        let unique = draws
            .iter()
            .filter(|(_, r)| r.status == SolveStatus::UniqueWrtProbes)
            .count();
        let verdict = if unique == draws.len() && !draws.is_empty() {
            SolvabilityVerdict::Solvable
        } else if unique > 0 {
            SolvabilityVerdict::GenericOnly
        } else {
            SolvabilityVerdict::Unsolvable
        };
        out.insert(target.clone(), TargetSolvability { verdict, draws });
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSolvability<T> {
    pub label: usize,
    /// The minimal admissible target set `pa(i) \ {i}`.
    pub targets: Vec<usize>,
    pub verdict: SolvabilityVerdict,
    /// A clamp draw that failed to solve uniquely, when one exists.
    pub failure_witness: Option<Intervention<T>>,
    pub draws: Vec<(Intervention<T>, SolveResult<T>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralSolvabilityReport<T> {
    pub labels: Vec<LabelSolvability<T>>,
}

impl<T: Scalar> StructuralSolvabilityReport<T> {
    /// True when every label solved uniquely at every sampled clamp value.
    pub fn passed(&self) -> bool {
        self.labels
            .iter()
            .all(|l| l.verdict == SolvabilityVerdict::Solvable)
    }

    pub fn summary(&self, core: &ModelCore<T>) -> String {
        let mut out = String::new();
        for l in &self.labels {
            let targets: Vec<&str> = l
                .targets
                .iter()
                .map(|&b| core.blocks()[b].name.as_str())
                .collect();
            let _ = writeln!(
                out,
                "label {}: clamp {{{}}} -> {}",
                core.blocks()[l.label].name,
                targets.join(", "),
                l.verdict
            );
        }
        out
    }
}

/// Structural solvability probe: for each label `i`, clamp the minimal
/// admissible target set `pa(i) \ {i}` at sampled values and require a unique
/// solution of the intervened equations.
pub fn check_structural_solvability<T: Scalar>(
    lee: &Lee<T>,
    opts: &XiSampleOptions<T>,
) -> StructuralSolvabilityReport<T> {
    let labels = (0..lee.core().n_blocks())
        .map(|label| {
            let mut targets: Vec<usize> = lee.parents(label).into_iter().collect();
            targets.retain(|&b| b != label);
            let per_target = check_solvability(lee, &[targets.clone()], opts);
            let ts = per_target.into_iter().next().map(|(_, v)| v).unwrap();
            let failure_witness = ts
                .draws
                .iter()
                .find(|(_, r)| r.status != SolveStatus::UniqueWrtProbes)
                .map(|(iv, _)| iv.clone());
            LabelSolvability {
                label,
                targets,
                verdict: ts.verdict,
                failure_witness,
                draws: ts.draws,
            }
        })
        .collect();
    StructuralSolvabilityReport { labels }
}

/// Max-norm of the residual of a solve candidate; helper for tests and the
/// verification suite.
pub fn residual_norm<T: Scalar>(lee: &Lee<T>, x: &[T]) -> T {
    lee.residual_at(x).unwrap_or_else(|_| T::infinity())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{builtin_lotka_volterra, builtin_mass_spring, MassSpringParams};
    use crate::scalar::max_norm;

    fn lv_sys() -> OdeSystem<f64> {
        OdeSystem::build(&builtin_lotka_volterra((1.0, 1.0, 1.0, 1.0), (1.0, 1.0)).unwrap())
    }

    fn spring_sys(d: usize, wall: f64) -> OdeSystem<f64> {
        let mut p = MassSpringParams::<f64>::uniform(d);
        p.wall = wall;
        OdeSystem::build(&builtin_mass_spring(&p).unwrap())
    }

    #[test]
    fn lee_from_lv_has_verbatim_residuals() {
        let sys = lv_sys();
        let lee = Lee::from_system(&sys);
        match &lee.equations()[0] {
            LeeEquation::Residual { exprs, parents } => {
                assert_eq!(exprs[0], sys.dynamics()[0]);
                assert_eq!(parents.iter().copied().collect::<Vec<_>>(), vec![0, 1]);
            }
            _ => panic!("expected residual"),
        }
        let rendered = lee.render();
        assert_eq!(
            rendered,
            "E[X1]: 0 = X1 * (th11 - th12 * X2)\nE[X2]: 0 = -X2 * (th22 - th21 * X1)\n"
        );
    }

    #[test]
    fn intervening_lee_matches_lee_of_intervened_system() {
        let sys = lv_sys();
        let iv = Intervention::new(sys.core(), &[("X2", vec![2.0])]).unwrap();
        let a = Lee::from_system(&sys).intervene(&iv).unwrap();
        let b = Lee::from_system(&sys.intervene_hard(&iv).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.render(), b.render());
        assert_eq!(
            a.render(),
            "E[X1]: 0 = X1 * (th11 - th12 * X2)\nE[X2]: 0 = X2 - 2\n"
        );
        // Clamp labels depend on their own block only.
        assert_eq!(a.parents(1).into_iter().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn identity_intervention_is_identity() {
        let lee = Lee::from_system(&lv_sys());
        assert_eq!(lee.intervene(&Intervention::identity()).unwrap(), lee);
    }

    #[test]
    fn disjoint_interventions_compose() {
        let sys = spring_sys(3, 4.0);
        let lee = Lee::from_system(&sys);
        let iv1 = Intervention::new(sys.core(), &[("X1", vec![0.5, 0.0])]).unwrap();
        let iv2 = Intervention::new(sys.core(), &[("X3", vec![3.0, 0.0])]).unwrap();
        let seq = lee.intervene(&iv1).unwrap().intervene(&iv2).unwrap();
        let joint = lee.intervene(&iv1.compose(&iv2)).unwrap();
        assert_eq!(seq, joint);
    }

    #[test]
    fn lv_has_two_equilibria() {
        let lee = Lee::from_system(&lv_sys());
        let result = solve_lee(&lee, &SolveOptions::default());
        assert_eq!(result.status, SolveStatus::Multiple);
        assert_eq!(result.solutions.len(), 2);
        assert!(max_norm(&result.solutions[0]) < 1e-9, "origin cluster");
        assert!((result.solutions[1][0] - 1.0).abs() < 1e-9);
        assert!((result.solutions[1][1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn intervened_lv_solves_uniquely() {
        let sys = lv_sys();
        let iv = Intervention::new(sys.core(), &[("X2", vec![2.0])]).unwrap();
        let lee = Lee::from_system(&sys).intervene(&iv).unwrap();
        let result = solve_lee(&lee, &SolveOptions::default());
        assert_eq!(result.status, SolveStatus::UniqueWrtProbes);
        let sol = result.solution.unwrap();
        assert!(sol[0].abs() < 1e-10 && (sol[1] - 2.0).abs() < 1e-12);
        assert!(result.residual.unwrap() < 1e-10);
    }

    #[test]
    fn degenerate_clamp_yields_a_family() {
        let sys = lv_sys();
        let iv = Intervention::new(sys.core(), &[("X2", vec![1.0])]).unwrap();
        let lee = Lee::from_system(&sys).intervene(&iv).unwrap();
        let result = solve_lee(&lee, &SolveOptions::default());
        assert_eq!(result.status, SolveStatus::Multiple);
        assert!(result.solutions.len() > 5, "family of solutions");
    }

    #[test]
    fn mass_spring_newton_is_essentially_direct() {
        let sys = spring_sys(2, 3.0);
        let lee = Lee::from_system(&sys);
        let result = solve_lee(&lee, &SolveOptions::default());
        assert_eq!(result.status, SolveStatus::UniqueWrtProbes);
        let sol = result.solution.unwrap();
        for (got, want) in sol.iter().zip(&[1.0, 0.0, 2.0, 0.0]) {
            assert!((got - want).abs() < 1e-9, "{sol:?}");
        }
        // Linear system: every start converges in about one iteration.
        assert!(result.stats.iterations <= result.stats.starts * 3);
        assert_eq!(result.stats.failed, 0);
    }

    #[test]
    fn clamps_only_lee_is_trivially_unique() {
        let sys = lv_sys();
        let iv =
            Intervention::new(sys.core(), &[("X1", vec![0.5]), ("X2", vec![2.5])]).unwrap();
        let lee = Lee::from_system(&sys).intervene(&iv).unwrap();
        let result = solve_lee(&lee, &SolveOptions::default());
        assert_eq!(result.status, SolveStatus::UniqueWrtProbes);
        assert_eq!(result.solution.unwrap(), vec![0.5, 2.5]);
    }

    #[test]
    fn structural_solvability_of_mass_spring_passes() {
        let lee = Lee::from_system(&spring_sys(3, 4.0));
        let report = check_structural_solvability(&lee, &XiSampleOptions::default());
        assert!(report.passed(), "{}", report.summary(lee.core()));
        // Chosen targets are the non-self parents: neighbors in the chain.
        assert_eq!(report.labels[1].targets, vec![0, 2]);
    }

    #[test]
    fn mass_spring_is_solvable_under_singleton_clamps() {
        let lee = Lee::from_system(&spring_sys(3, 4.0));
        let targets = vec![vec![0], vec![1], vec![2]];
        let report = check_solvability(&lee, &targets, &XiSampleOptions::default());
        for (target, t) in &report {
            assert_eq!(t.verdict, SolvabilityVerdict::Solvable, "target {target:?}");
        }
    }

    #[test]
    fn clamps_only_lee_is_trivially_structurally_solvable() {
        let sys = lv_sys();
        let iv =
            Intervention::new(sys.core(), &[("X1", vec![0.5]), ("X2", vec![2.5])]).unwrap();
        let lee = Lee::from_system(&sys).intervene(&iv).unwrap();
        let report = check_structural_solvability(&lee, &XiSampleOptions::default());
        assert!(report.passed());
        // Clamp labels have no non-self parents: the chosen target is empty.
        assert!(report.labels.iter().all(|l| l.targets.is_empty()));
    }

    #[test]
    fn structural_solvability_of_lv_is_generic_only() {
        // The initial-value clamp probe xi2 = 1 = th11/th12 hits the
        // degenerate family, so the verdict is generic-only with a witness.
        let lee = Lee::from_system(&lv_sys());
        let report = check_structural_solvability(&lee, &XiSampleOptions::default());
        assert!(!report.passed());
        let l1 = &report.labels[0];
        assert_eq!(l1.targets, vec![1]);
        assert_eq!(l1.verdict, SolvabilityVerdict::GenericOnly);
        assert!(l1.failure_witness.is_some());
    }

    #[test]
    fn solvability_for_explicit_degenerate_value() {
        let sys = lv_sys();
        let lee = Lee::from_system(&sys);
        // Force the clamp draws to include only the degenerate value by
        // solving the explicitly intervened system instead.
        let iv = Intervention::new(sys.core(), &[("X2", vec![1.0])]).unwrap();
        let cut = lee.intervene(&iv).unwrap();
        assert_eq!(solve_lee(&cut, &SolveOptions::default()).status, SolveStatus::Multiple);
    }

    #[test]
    fn soft_clamp_equilibria_approach_the_hard_clamp_in_the_gain() {
        // Solving the equilibrium equations of the softly intervened system
        // for increasing gains walks toward the hard clamp's solution.
        let sys = lv_sys();
        let iv = Intervention::new(sys.core(), &[("X2", vec![2.0])]).unwrap();
        let mut last = f64::INFINITY;
        for kappa in [1e1, 1e2, 1e3, 1e4] {
            let soft = sys.intervene_soft(&iv, kappa).unwrap();
            let result = solve_lee(&Lee::from_system(&soft), &SolveOptions::default());
            // The soft system keeps the (0, *) branch and the interior branch;
            // compare the branch near the hard solution (0, 2).
            let near = result
                .solutions
                .iter()
                .min_by(|a, b| {
                    let da = crate::scalar::max_dist(a, &[0.0, 2.0]);
                    let db = crate::scalar::max_dist(b, &[0.0, 2.0]);
                    da.partial_cmp(&db).unwrap()
                })
                .expect("at least one solution");
            let dist = crate::scalar::max_dist(near, &[0.0, 2.0]);
            assert!(dist < last, "distance must shrink with the gain");
            last = dist;
        }
        assert!(last < 2.5e-4, "2 kappa / (1 + kappa) limit, got {last}");
    }

    #[test]
    fn unintervened_lv_is_not_solvable_for_the_empty_target() {
        let lee = Lee::from_system(&lv_sys());
        let report = check_solvability(&lee, &[vec![]], &XiSampleOptions::default());
        let target = &report[&vec![]];
        assert_eq!(target.verdict, SolvabilityVerdict::Unsolvable);
        assert!(target
            .draws
            .iter()
            .all(|(_, r)| r.status == SolveStatus::Multiple));
    }

    #[test]
    fn flow_and_newton_agree_on_stable_systems() {
        use crate::dynamics::{find_equilibrium_by_flow, FlowOptions, FlowStatus};
        let sys = spring_sys(2, 3.0);
        let out = find_equilibrium_by_flow(&sys, &[0.3, 0.0, 2.7, 0.0], &FlowOptions::default());
        assert_eq!(out.status, FlowStatus::Converged);
        let flow_eq = out.equilibrium.unwrap();
        let newton = solve_lee(&Lee::from_system(&sys), &SolveOptions::default())
            .solution
            .unwrap();
        for (a, b) in flow_eq.iter().zip(&newton) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
