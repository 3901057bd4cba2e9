//! Deterministic structural causal models derived from labeled equilibrium
//! equations.
//!
//! For each label `i` the mechanism `h_i` solves that label's equation for its
//! own block with the non-self parents treated as inputs. When the equation is
//! affine in the block's own coordinates (true for every built-in model) the
//! solve is symbolic and the mechanism is a closed form; otherwise the
//! mechanism is implicit and performs a per-call Newton solve in the block's
//! coordinates. Mechanism parent sets never contain the block itself, so the
//! derived model is self-loop free by construction.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::equilibrium::{
    check_structural_solvability, Lee, LeeEquation, SolveOptions, SolveResult, SolveStats,
    SolveStatus, StructuralSolvabilityReport, XiSampleOptions,
};
use crate::expr::Expr;
use crate::graph::Digraph;
use crate::model::ModelCore;
use crate::newton::{self, NewtonOptions};
use crate::rng::{Purpose, Stream};
use crate::scalar::Scalar;
use crate::system::{inflated_box, CExpr, Intervention, InterventionError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScmError {
    #[error("equations are not structurally solvable with respect to the probes:\n{summary}")]
    NotStructurallySolvable { summary: String },
    #[error("label `{label}`: equation is degenerate in its own block (no usable pivot)")]
    DegenerateAffine { label: String },
    #[error(transparent)]
    Intervention(#[from] InterventionError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MechanismError {
    #[error("mechanism of `{block}` is degenerate at these parent values: {detail}")]
    Degenerate { block: String, detail: String },
    #[error("implicit mechanism of `{block}`: inner root solve failed")]
    InnerSolveFailed { block: String },
    #[error("mechanism of `{block}` needs a value for parent block `{parent}`")]
    MissingParent { block: String, parent: String },
}

/// How a mechanism is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MechanismKind {
    ClosedForm,
    Implicit,
    Clamp,
}

#[derive(Debug, Clone)]
pub enum Mechanism<T> {
    /// `x_i = exprs(parents)`, one expression per coordinate of the block.
    ClosedForm {
        exprs: Vec<Expr<T>>,
        parents: BTreeSet<usize>,
    },
    /// Retained equation `0 = residual(x_i, parents)` with a start hint for
    /// the inner root solve in the block's own coordinates.
    Implicit {
        residual: Vec<Expr<T>>,
        parents: BTreeSet<usize>,
        hint: Vec<T>,
    },
    /// `x_i = xi` after an intervention.
    Clamp { xi: Vec<T> },
}

impl<T: Scalar> PartialEq for Mechanism<T> {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                Mechanism::ClosedForm { exprs: a, parents: pa },
                Mechanism::ClosedForm { exprs: b, parents: pb },
            ) => a == b && pa == pb,
            (
                Mechanism::Implicit { residual: a, parents: pa, hint: ha },
                Mechanism::Implicit { residual: b, parents: pb, hint: hb },
            ) => a == b && pa == pb && ha == hb,
            (Mechanism::Clamp { xi: a }, Mechanism::Clamp { xi: b }) => a == b,
            _ => false,
        }
    }
}

impl<T: Scalar> Mechanism<T> {
    pub fn kind(&self) -> MechanismKind {
        match self {
            Mechanism::ClosedForm { .. } => MechanismKind::ClosedForm,
            Mechanism::Implicit { .. } => MechanismKind::Implicit,
            Mechanism::Clamp { .. } => MechanismKind::Clamp,
        }
    }

    pub fn parents(&self) -> BTreeSet<usize> {
        match self {
            Mechanism::ClosedForm { parents, .. } | Mechanism::Implicit { parents, .. } => {
                parents.clone()
            }
            Mechanism::Clamp { .. } => BTreeSet::new(),
        }
    }
}

/// Compiled evaluation payload per mechanism; mirrors [`Mechanism`].
#[derive(Debug, Clone)]
enum CompiledMech<T> {
    ClosedForm(Vec<CExpr<T>>),
    Implicit {
        residual: Vec<CExpr<T>>,
        /// d residual / d own-coordinate, row-major over the block.
        jacobian: Vec<Vec<CExpr<T>>>,
    },
    Clamp,
}

/// A deterministic structural causal model over the blocks of a model core.
#[derive(Debug, Clone)]
pub struct Scm<T> {
    core: Arc<ModelCore<T>>,
    mechanisms: Vec<Mechanism<T>>,
    /// Start hint for cyclic solves; tracks clamp values under interventions.
    init: Vec<T>,
    compiled: Vec<CompiledMech<T>>,
}

impl<T: Scalar> PartialEq for Scm<T> {
    fn eq(&self, other: &Self) -> bool {
        self.core == other.core && self.mechanisms == other.mechanisms && self.init == other.init
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeriveOptions<T> {
    /// Derive even when the structural-solvability probes fail.
    pub force: bool,
    pub solvability: XiSampleOptions<T>,
}

impl<T: Scalar> Default for DeriveOptions<T> {
    fn default() -> Self {
        DeriveOptions {
            force: false,
            solvability: XiSampleOptions::default(),
        }
    }
}

/// Derive the induced causal model from labeled equilibrium equations.
///
/// Refuses (unless forced) when the structural-solvability probes fail, e.g.
/// for the predator-prey equations whose clamp at `th11/th12` admits a family
/// of solutions.
pub fn derive_scm<T: Scalar>(lee: &Lee<T>, opts: &DeriveOptions<T>) -> Result<Scm<T>, ScmError> {
    if !opts.force {
        let report = check_structural_solvability(lee, &opts.solvability);
        if !report.passed() {
            return Err(ScmError::NotStructurallySolvable {
                summary: report.summary(lee.core()),
            });
        }
    }
    derive_scm_unchecked(lee)
}

/// The structural-solvability probe used by [`derive_scm`]'s precondition,
/// exposed for reporting.
pub fn derivation_preconditions<T: Scalar>(
    lee: &Lee<T>,
    opts: &XiSampleOptions<T>,
) -> StructuralSolvabilityReport<T> {
    check_structural_solvability(lee, opts)
}

fn derive_scm_unchecked<T: Scalar>(lee: &Lee<T>) -> Result<Scm<T>, ScmError> {
    let core = lee.core().clone();
    let mut mechanisms = Vec::with_capacity(core.n_blocks());
    for (b, eq) in lee.equations().iter().enumerate() {
        let mech = match eq {
            LeeEquation::Clamp { xi } => Mechanism::Clamp { xi: xi.clone() },
            LeeEquation::Residual { exprs, parents } => {
                let mut pa = parents.clone();
                pa.remove(&b);
                let own: Vec<String> = core.blocks()[b]
                    .coords
                    .iter()
                    .cloned()
                    .collect();
                match solve_affine_in_own(&core, &core.blocks()[b].name, exprs, &own)? {
                    Some(solved) => Mechanism::ClosedForm {
                        exprs: solved,
                        parents: pa,
                    },
                    None => Mechanism::Implicit {
                        residual: exprs.clone(),
                        parents: pa,
                        hint: core.block_range(b).map(|c| lee.init()[c]).collect(),
                    },
                }
            }
        };
        assert!(
            !mech.parents().contains(&b),
            "derived mechanism must not be its own parent"
        );
        mechanisms.push(mech);
    }
    Ok(Scm::assemble(core, mechanisms, lee.init().to_vec()))
}

/// Symbolic solve of `0 = exprs` for the block's own coordinates when every
/// equation is affine in them; returns `None` for genuinely nonlinear blocks.
fn solve_affine_in_own<T: Scalar>(
    core: &ModelCore<T>,
    block_name: &str,
    exprs: &[Expr<T>],
    own: &[String],
) -> Result<Option<Vec<Expr<T>>>, ScmError> {
    let d = own.len();
    debug_assert_eq!(exprs.len(), d);
    let own_set: BTreeSet<&str> = own.iter().map(String::as_str).collect();
    // Coefficient matrix: entries must not reference the block itself.
    let mut coeffs = vec![vec![Expr::Const(T::zero()); d]; d];
    for (r, e) in exprs.iter().enumerate() {
        for (c, coord) in own.iter().enumerate() {
            let a = e.differentiate(coord);
            if a.free_coords().iter().any(|n| own_set.contains(n.as_str())) {
                return Ok(None);
            }
            coeffs[r][c] = a;
        }
    }
    let zero_own = |name: &str| -> Option<Expr<T>> {
        own_set.contains(name).then(|| Expr::Const(T::zero()))
    };
    let params = core.params().to_vec();
    let fold0 = |e: Expr<T>| fold_param_zero(e, &params);
    // Right-hand side of `A x = -b` with `b = exprs` at own coordinates zero.
    let mut rhs: Vec<Expr<T>> = exprs
        .iter()
        .map(|e| fold0(Expr::neg(e.substitute_coords(&zero_own))))
        .collect();

    // Gauss-Jordan with symbolic entries. Pivots prefer parameter-only
    // entries with the largest magnitude; eliminated entries are set to zero
    // exactly rather than left to symbolic cancellation.
    let mut pivot_of_col = vec![usize::MAX; d];
    let mut used = vec![false; d];
    for col in 0..d {
        let mut best_const: Option<(usize, T)> = None;
        let mut first_symbolic: Option<usize> = None;
        for (r, used_r) in used.iter().enumerate() {
            if *used_r || coeffs[r][col] == Expr::Const(T::zero()) {
                continue;
            }
            match const_eval(&coeffs[r][col], &params) {
                Some(v) if v != T::zero() => {
                    if best_const.map_or(true, |(_, bv)| v.abs() > bv.abs()) {
                        best_const = Some((r, v));
                    }
                }
                Some(_) => {}
                None => {
                    if first_symbolic.is_none() {
                        first_symbolic = Some(r);
                    }
                }
            }
        }
        let p = match best_const.map(|(r, _)| r).or(first_symbolic) {
            Some(p) => p,
            None => {
                return Err(ScmError::DegenerateAffine {
                    label: block_name.to_string(),
                })
            }
        };
        used[p] = true;
        pivot_of_col[col] = p;
        for r in 0..d {
            if r == p || coeffs[r][col] == Expr::Const(T::zero()) {
                continue;
            }
            let ratio = Expr::div(coeffs[r][col].clone(), coeffs[p][col].clone());
            for k in 0..d {
                if k != col {
                    coeffs[r][k] = fold0(Expr::sub(
                        coeffs[r][k].clone(),
                        Expr::mul(ratio.clone(), coeffs[p][k].clone()),
                    ));
                }
            }
            rhs[r] = fold0(Expr::sub(rhs[r].clone(), Expr::mul(ratio.clone(), rhs[p].clone())));
            coeffs[r][col] = Expr::Const(T::zero());
        }
    }
    let mut solved = Vec::with_capacity(d);
    for col in 0..d {
        let p = pivot_of_col[col];
        let e = fold0(Expr::div(rhs[p].clone(), coeffs[p][col].clone()));
        debug_assert!(
            e.free_coords().iter().all(|n| !own_set.contains(n.as_str())),
            "solved mechanism references its own block"
        );
        solved.push(e);
    }
    Ok(Some(solved))
}

/// Evaluate a coordinate-free expression against the parameter table.
fn const_eval<T: Scalar>(e: &Expr<T>, params: &[(String, T)]) -> Option<T> {
    if !e.free_coords().is_empty() {
        return None;
    }
    let env = crate::expr::MapEnv {
        coords: &[],
        params,
    };
    e.eval(&env).ok()
}

/// Bottom-up rebuild through the folding constructors, additionally turning
/// `0 / e` into `0` when `e` is parameter-only and provably nonzero. The
/// general `0 / e` is kept so coordinate-dependent denominators still raise
/// degenerate-mechanism errors.
fn fold_param_zero<T: Scalar>(e: Expr<T>, params: &[(String, T)]) -> Expr<T> {
    match e {
        Expr::Neg(a) => Expr::neg(fold_param_zero(*a, params)),
        Expr::Add(a, b) => Expr::add(fold_param_zero(*a, params), fold_param_zero(*b, params)),
        Expr::Sub(a, b) => Expr::sub(fold_param_zero(*a, params), fold_param_zero(*b, params)),
        Expr::Mul(a, b) => Expr::mul(fold_param_zero(*a, params), fold_param_zero(*b, params)),
        Expr::Div(a, b) => {
            let a = fold_param_zero(*a, params);
            let b = fold_param_zero(*b, params);
            if a == Expr::Const(T::zero())
                && matches!(const_eval(&b, params), Some(v) if v != T::zero())
            {
                Expr::Const(T::zero())
            } else {
                Expr::div(a, b)
            }
        }
        Expr::Pow(a, n) => Expr::pow(fold_param_zero(*a, params), n),
        other => other,
    }
}

impl<T: Scalar> Scm<T> {
    fn assemble(core: Arc<ModelCore<T>>, mechanisms: Vec<Mechanism<T>>, init: Vec<T>) -> Scm<T> {
        let compiled = mechanisms
            .iter()
            .enumerate()
            .map(|(b, m)| match m {
                Mechanism::ClosedForm { exprs, .. } => CompiledMech::ClosedForm(
                    exprs.iter().map(|e| CExpr::compile(e, &core)).collect(),
                ),
                Mechanism::Implicit { residual, .. } => {
                    let own: Vec<&str> =
                        core.blocks()[b].coords.iter().map(String::as_str).collect();
                    CompiledMech::Implicit {
                        residual: residual.iter().map(|e| CExpr::compile(e, &core)).collect(),
                        jacobian: residual
                            .iter()
                            .map(|e| {
                                own.iter()
                                    .map(|c| CExpr::compile(&e.differentiate(c), &core))
                                    .collect()
                            })
                            .collect(),
                    }
                }
                Mechanism::Clamp { .. } => CompiledMech::Clamp,
            })
            .collect();
        Scm {
            core,
            mechanisms,
            init,
            compiled,
        }
    }

    pub fn core(&self) -> &Arc<ModelCore<T>> {
        &self.core
    }

    pub fn mechanisms(&self) -> &[Mechanism<T>] {
        &self.mechanisms
    }

    pub fn init(&self) -> &[T] {
        &self.init
    }

    /// Mechanism parent set of block `i` (its direct causes).
    pub fn parents(&self, block: usize) -> BTreeSet<usize> {
        self.mechanisms[block].parents()
    }

    /// Replace the mechanisms of the targeted blocks by clamps; everything
    /// else is untouched.
    pub fn intervene(&self, iv: &Intervention<T>) -> Result<Scm<T>, ScmError> {
        crate::system::validate_intervention(&self.core, iv).map_err(ScmError::Intervention)?;
        let mut mechanisms = self.mechanisms.clone();
        let mut init = self.init.clone();
        for (&b, values) in iv.targets() {
            mechanisms[b] = Mechanism::Clamp { xi: values.clone() };
            for (k, c) in self.core.block_range(b).enumerate() {
                init[c] = values[k];
            }
        }
        for (b, m) in mechanisms.iter().enumerate() {
            assert!(!m.parents().contains(&b), "intervention introduced a self-loop");
        }
        Ok(Scm::assemble(self.core.clone(), mechanisms, init))
    }

    /// Evaluate mechanism `i` at the given parent-block values.
    pub fn eval_mechanism(
        &self,
        block: usize,
        parent_values: &BTreeMap<usize, Vec<T>>,
    ) -> Result<Vec<T>, MechanismError> {
        let name = || self.core.blocks()[block].name.clone();
        for p in self.mechanisms[block].parents() {
            if !parent_values.contains_key(&p) {
                return Err(MechanismError::MissingParent {
                    block: name(),
                    parent: self.core.blocks()[p].name.clone(),
                });
            }
        }
        let mut state = self.init.clone();
        for (&p, values) in parent_values {
            for (k, c) in self.core.block_range(p).enumerate() {
                state[c] = values[k];
            }
        }
        self.eval_mechanism_with_state(block, &state)
    }

    /// Evaluate mechanism `i` reading parents from a full state vector.
    fn eval_mechanism_with_state(&self, block: usize, state: &[T]) -> Result<Vec<T>, MechanismError> {
        let name = || self.core.blocks()[block].name.clone();
        match (&self.mechanisms[block], &self.compiled[block]) {
            (Mechanism::Clamp { xi }, _) => Ok(xi.clone()),
            (Mechanism::ClosedForm { .. }, CompiledMech::ClosedForm(exprs)) => exprs
                .iter()
                .map(|e| {
                    e.eval(state).map_err(|()| MechanismError::Degenerate {
                        block: name(),
                        detail: "division by zero in the closed form".into(),
                    })
                })
                .collect(),
            (
                Mechanism::Implicit { hint, .. },
                CompiledMech::Implicit { residual, jacobian },
            ) => {
                let range = self.core.block_range(block);
                let d = range.len();
                let mut work = state.to_vec();
                let newton_opts = NewtonOptions {
                    residual_tol: T::of(1e-10),
                    ..NewtonOptions::default()
                };
                // The hint first, then symmetric spreads around it.
                let spreads = [0.0, 0.5, -0.5, 1.5, -1.5, 3.0, -3.0];
                for spread in spreads {
                    let start: Vec<T> = hint
                        .iter()
                        .map(|&h| h + T::of(spread) * (T::one() + h.abs()))
                        .collect();
                    let mut res_fn = |u: &[T], out: &mut [T]| -> Result<(), ()> {
                        for (k, c) in range.clone().enumerate() {
                            work[c] = u[k];
                        }
                        for (r, e) in residual.iter().enumerate() {
                            out[r] = e.eval(&work)?;
                        }
                        Ok(())
                    };
                    let mut work_j = state.to_vec();
                    let mut jac_fn = |u: &[T], out: &mut [Vec<T>]| -> Result<(), ()> {
                        for (k, c) in range.clone().enumerate() {
                            work_j[c] = u[k];
                        }
                        for (r, row) in jacobian.iter().enumerate() {
                            for (k, e) in row.iter().enumerate() {
                                out[r][k] = e.eval(&work_j)?;
                            }
                        }
                        Ok(())
                    };
                    if let Ok(sol) =
                        newton::damped_newton(&start, &mut res_fn, &mut jac_fn, &newton_opts)
                    {
                        debug_assert!(sol.residual_norm < T::of(1e-10));
                        debug_assert_eq!(sol.x.len(), d);
                        return Ok(sol.x);
                    }
                }
                Err(MechanismError::InnerSolveFailed { block: name() })
            }
            _ => unreachable!("mechanism and compiled payload stay in lockstep"),
        }
    }

    /// Graph of the model: an edge `j -> i` iff `h_i` responds to block `j`
    /// under numeric dependence probing (50 paired evaluations per parent,
    /// threshold 1e-12). Closed forms may simplify a syntactic parent away,
    /// so probing rather than syntax decides edges. Never contains
    /// self-loops.
    pub fn graph(&self) -> Digraph {
        const PROBE_SEED: u64 = 0x5c31;
        let mut g = Digraph::new(self.core.blocks().iter().map(|b| b.name.clone()).collect());
        let boxes = inflated_box(&self.core, &self.init, T::of(1.5));
        let tol = T::of(1e-12);
        for (i, mech) in self.mechanisms.iter().enumerate() {
            for j in mech.parents() {
                let mut stream = Stream::new(
                    PROBE_SEED,
                    Purpose::DependenceProbe,
                    ((i as u64) << 32) | j as u64,
                );
                let mut responds = false;
                for _ in 0..50 {
                    let mut state: Vec<T> = boxes
                        .iter()
                        .map(|&(lo, hi)| stream.uniform(lo, hi))
                        .collect();
                    let base = self.eval_mechanism_with_state(i, &state);
                    for c in self.core.block_range(j) {
                        state[c] = stream.uniform(boxes[c].0, boxes[c].1);
                    }
                    let pert = self.eval_mechanism_with_state(i, &state);
                    if let (Ok(a), Ok(b)) = (base, pert) {
                        if a.iter().zip(&b).any(|(x, y)| (*x - *y).abs() > tol) {
                            responds = true;
                            break;
                        }
                    }
                }
                if responds {
                    g.add_edge(j, i);
                }
            }
        }
        g
    }

    /// Structural-equation residual `x_i - h_i(x_pa)` stacked over all
    /// blocks; `Err` marks a mechanism failure at this state.
    pub fn residual_at(&self, x: &[T]) -> Result<Vec<T>, MechanismError> {
        let mut out = vec![T::zero(); x.len()];
        for b in 0..self.core.n_blocks() {
            let h = self.eval_mechanism_with_state(b, x)?;
            for (k, c) in self.core.block_range(b).enumerate() {
                out[c] = x[c] - h[k];
            }
        }
        Ok(out)
    }

    /// Canonical text rendering, one line per block:
    /// `X[<block>] = <expr>` (tuples for multi-coordinate blocks, clamp
    /// values inline, `implicit root of:` for implicit mechanisms).
    pub fn render(&self) -> String {
        self.render_impl(false)
    }

    /// Rendering that omits coordinates whose mechanism is the constant zero
    /// (e.g. momenta at equilibrium), collapsing the remaining tuple.
    pub fn render_projected(&self) -> String {
        self.render_impl(true)
    }

    fn render_impl(&self, project_zero: bool) -> String {
        let zero = Expr::Const(T::zero());
        let mut out = String::new();
        for (b, mech) in self.mechanisms.iter().enumerate() {
            let name = &self.core.blocks()[b].name;
            let _ = write!(out, "X[{name}] = ");
            match mech {
                Mechanism::ClosedForm { exprs, .. } => {
                    let kept: Vec<String> = exprs
                        .iter()
                        .filter(|e| !(project_zero && **e == zero))
                        .map(|e| e.to_string())
                        .collect();
                    out.push_str(&render_tuple(&kept, || "0".to_string()));
                }
                Mechanism::Implicit { residual, .. } => {
                    let parts: Vec<String> = residual.iter().map(|e| e.to_string()).collect();
                    let _ = write!(out, "implicit root of: {}", render_tuple(&parts, || "0".into()));
                }
                Mechanism::Clamp { xi } => {
                    let parts: Vec<String> = xi.iter().map(|v| v.to_string()).collect();
                    out.push_str(&render_tuple(&parts, || "0".into()));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn render_tuple(parts: &[String], empty: impl Fn() -> String) -> String {
    match parts.len() {
        0 => empty(),
        1 => parts[0].clone(),
        _ => format!("({})", parts.join(", ")),
    }
}

/// Solve the structural equations. Acyclic mechanism graphs are solved by
/// topological substitution in one pass; cyclic ones by damped Newton on
/// `x - h(x)` with the same multistart policy as the equilibrium solver.
pub fn solve_scm<T: Scalar>(scm: &Scm<T>, opts: &SolveOptions<T>) -> SolveResult<T> {
    let core = scm.core().clone();
    let n = scm.init().len();
    // Dependency graph over mechanism domains (not the probed graph): safe
    // for scheduling even when a mechanism is numerically constant.
    let mut dep = Digraph::new(core.blocks().iter().map(|b| b.name.clone()).collect());
    for b in 0..core.n_blocks() {
        for p in scm.parents(b) {
            dep.add_edge(p, b);
        }
    }
    if let Some(order) = dep.topological_order() {
        let mut state = scm.init().to_vec();
        for b in order {
            match scm.eval_mechanism_with_state(b, &state) {
                Ok(values) => {
                    for (k, c) in core.block_range(b).enumerate() {
                        state[c] = values[k];
                    }
                }
                Err(_) => {
                    return SolveResult {
                        status: SolveStatus::NoneFound,
                        solution: None,
                        residual: None,
                        solutions: Vec::new(),
                        stats: SolveStats {
                            starts: 1,
                            failed: 1,
                            ..SolveStats::default()
                        },
                    };
                }
            }
        }
        let residual = scm
            .residual_at(&state)
            .map(|r| crate::scalar::max_norm(&r))
            .unwrap_or_else(|_| T::infinity());
        return SolveResult {
            status: SolveStatus::UniqueWrtProbes,
            solution: Some(state.clone()),
            residual: Some(residual),
            solutions: vec![state],
            stats: SolveStats {
                starts: 1,
                converged: 1,
                ..SolveStats::default()
            },
        };
    }

    // Cyclic: multistart Newton on x - h(x) with finite-difference Jacobian.
    let boxes = opts
        .sample_box
        .clone()
        .unwrap_or_else(|| inflated_box(&core, scm.init(), opts.box_inflation));
    let mut stats = SolveStats {
        starts: opts.starts,
        ..SolveStats::default()
    };
    let mut found: Vec<Vec<T>> = Vec::new();
    for start_idx in 0..opts.starts {
        let start: Vec<T> = if start_idx == 0 {
            scm.init().to_vec()
        } else {
            let mut stream = Stream::new(opts.seed, Purpose::NewtonStart, start_idx as u64);
            boxes.iter().map(|&(lo, hi)| stream.uniform(lo, hi)).collect()
        };
        let mut res_fn = |x: &[T], out: &mut [T]| -> Result<(), ()> {
            let r = scm.residual_at(x).map_err(|_| ())?;
            out.copy_from_slice(&r);
            Ok(())
        };
        let mut jac_fn = |x: &[T], out: &mut [Vec<T>]| -> Result<(), ()> {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            for c in 0..n {
                let h = T::of(1e-6) * (T::one() + x[c].abs());
                xp[c] = x[c] + h;
                xm[c] = x[c] - h;
                let rp = scm.residual_at(&xp).map_err(|_| ())?;
                let rm = scm.residual_at(&xm).map_err(|_| ())?;
                for r in 0..n {
                    out[r][c] = (rp[r] - rm[r]) / (h + h);
                }
                xp[c] = x[c];
                xm[c] = x[c];
            }
            Ok(())
        };
        match newton::damped_newton(&start, &mut res_fn, &mut jac_fn, &opts.newton) {
            Ok(sol) => {
                stats.iterations += sol.iterations;
                let slack = T::of(1e-9);
                let ok_dom = (0..n).all(|c| {
                    core.domain(c)
                        .contains_slack(sol.x[c], slack * (T::one() + sol.x[c].abs()))
                });
                if ok_dom {
                    stats.converged += 1;
                    found.push(sol.x);
                } else {
                    stats.failed += 1;
                }
            }
            Err(_) => stats.failed += 1,
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
    let solution = (status == SolveStatus::UniqueWrtProbes).then(|| solutions[0].clone());
    let residual = solution.as_ref().map(|s| {
        scm.residual_at(s)
            .map(|r| crate::scalar::max_norm(&r))
            .unwrap_or_else(|_| T::infinity())
    });
    SolveResult {
        status,
        solution,
        residual,
        solutions,
        stats,
    }
}
