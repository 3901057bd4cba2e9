//! Executable ODE systems over variable blocks, their directed graphs, and
//! perfect-intervention transforms.
//!
//! A hard intervention `do(X_I = xi_I)` zeroes the dynamics of every targeted
//! block, replaces its initial value by the clamp value, and empties its
//! parent set; the block is additionally marked as clamped so downstream
//! representations can recover the clamp value. A soft intervention adds a
//! restoring term `kappa (xi - x)` to each targeted coordinate and leaves
//! everything else in place.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::graph::Digraph;
use crate::model::{ModelCore, ModelSpec};
use crate::rng::{Purpose, Stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterventionError {
    #[error("unknown block `{0}`")]
    UnknownBlock(String),
    #[error("block `{block}` has dimension {expected}, got {got} clamp values")]
    DimensionMismatch {
        block: String,
        expected: usize,
        got: usize,
    },
    #[error("clamp value {value} for `{coord}` lies outside its domain {domain}")]
    OutsideDomain {
        coord: String,
        value: String,
        domain: String,
    },
    #[error("soft intervention gain must be positive, got {0}")]
    NonPositiveGain(String),
}

/// A perfect intervention: a set of target blocks with one clamp vector per
/// block. The same value is shared by ODE, equilibrium-equation, and causal
/// model transforms. An empty target set is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervention<T> {
    targets: BTreeMap<usize, Vec<T>>,
}

impl<T: Scalar> Intervention<T> {
    pub fn identity() -> Self {
        Intervention {
            targets: BTreeMap::new(),
        }
    }

    /// Build from `(block name, clamp values)` pairs, validating dimensions
    /// and domain membership against `core`.
    pub fn new(
        core: &ModelCore<T>,
        clamps: &[(&str, Vec<T>)],
    ) -> Result<Self, InterventionError> {
        let mut targets = BTreeMap::new();
        for (name, values) in clamps {
            let b = core
                .block_index(name)
                .ok_or_else(|| InterventionError::UnknownBlock(name.to_string()))?;
            let block = &core.blocks()[b];
            if values.len() != block.dim() {
                return Err(InterventionError::DimensionMismatch {
                    block: name.to_string(),
                    expected: block.dim(),
                    got: values.len(),
                });
            }
            for ((coord, dom), &v) in block.coords.iter().zip(&block.domains).zip(values) {
                if !dom.contains(v) {
                    return Err(InterventionError::OutsideDomain {
                        coord: coord.clone(),
                        value: v.to_string(),
                        domain: dom.to_string(),
                    });
                }
            }
            targets.insert(b, values.clone());
        }
        Ok(Intervention { targets })
    }

    /// Build from block indices (pre-validated values).
    pub fn from_indices(
        core: &ModelCore<T>,
        clamps: &[(usize, Vec<T>)],
    ) -> Result<Self, InterventionError> {
        let named: Vec<(&str, Vec<T>)> = clamps
            .iter()
            .map(|(b, v)| (core.blocks()[*b].name.as_str(), v.clone()))
            .collect();
        Intervention::new(core, &named)
    }

    pub fn is_identity(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn targets(&self) -> &BTreeMap<usize, Vec<T>> {
        &self.targets
    }

    /// Union of two interventions; later clamps win on overlap.
    pub fn compose(&self, other: &Intervention<T>) -> Intervention<T> {
        let mut targets = self.targets.clone();
        for (b, v) in &other.targets {
            targets.insert(*b, v.clone());
        }
        Intervention { targets }
    }

    /// Canonical rendering, e.g. `do(X2=(3,0))`; `do()` for the identity.
    pub fn describe(&self, core: &ModelCore<T>) -> String {
        let mut out = String::from("do(");
        for (k, (b, values)) in self.targets.iter().enumerate() {
            if k > 0 {
                out.push_str(", ");
            }
            let name = &core.blocks()[*b].name;
            if values.len() == 1 {
                let _ = write!(out, "{name}={}", values[0]);
            } else {
                let rendered: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                let _ = write!(out, "{name}=({})", rendered.join(","));
            }
        }
        out.push(')');
        out
    }
}

/// Dynamics expression compiled against a flattened state vector, parameters
/// folded in. This is the integrator/solver hot path.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum CExpr<T> {
    Const(T),
    Var(usize),
    Neg(Box<CExpr<T>>),
    Add(Box<CExpr<T>>, Box<CExpr<T>>),
    Sub(Box<CExpr<T>>, Box<CExpr<T>>),
    Mul(Box<CExpr<T>>, Box<CExpr<T>>),
    Div(Box<CExpr<T>>, Box<CExpr<T>>),
    Pow(Box<CExpr<T>>, i32),
}

impl<T: Scalar> CExpr<T> {
    pub(crate) fn compile(e: &Expr<T>, core: &ModelCore<T>) -> CExpr<T> {
        match e {
            Expr::Const(c) => CExpr::Const(*c),
            Expr::Var(name) => CExpr::Var(
                core.coord_index(name)
                    .expect("validated expression references known coordinate"),
            ),
            Expr::Param(name) => CExpr::Const(
                core.param_value(name)
                    .expect("validated expression references known parameter"),
            ),
            Expr::Neg(a) => CExpr::Neg(Box::new(CExpr::compile(a, core))),
            Expr::Add(a, b) => CExpr::Add(
                Box::new(CExpr::compile(a, core)),
                Box::new(CExpr::compile(b, core)),
            ),
            Expr::Sub(a, b) => CExpr::Sub(
                Box::new(CExpr::compile(a, core)),
                Box::new(CExpr::compile(b, core)),
            ),
            Expr::Mul(a, b) => CExpr::Mul(
                Box::new(CExpr::compile(a, core)),
                Box::new(CExpr::compile(b, core)),
            ),
            Expr::Div(a, b) => CExpr::Div(
                Box::new(CExpr::compile(a, core)),
                Box::new(CExpr::compile(b, core)),
            ),
            Expr::Pow(a, n) => CExpr::Pow(Box::new(CExpr::compile(a, core)), *n),
        }
    }

    /// Evaluate over a flattened state. `Err(())` marks division by zero; the
    /// caller attaches context.
    pub(crate) fn eval(&self, x: &[T]) -> Result<T, ()> {
        match self {
            CExpr::Const(c) => Ok(*c),
            CExpr::Var(i) => Ok(x[*i]),
            CExpr::Neg(a) => Ok(-a.eval(x)?),
            CExpr::Add(a, b) => Ok(a.eval(x)? + b.eval(x)?),
            CExpr::Sub(a, b) => Ok(a.eval(x)? - b.eval(x)?),
            CExpr::Mul(a, b) => Ok(a.eval(x)? * b.eval(x)?),
            CExpr::Div(a, b) => {
                let den = b.eval(x)?;
                if den == T::zero() {
                    Err(())
                } else {
                    Ok(a.eval(x)? / den)
                }
            }
            CExpr::Pow(a, n) => {
                let base = a.eval(x)?;
                if *n < 0 && base == T::zero() {
                    Err(())
                } else {
                    Ok(base.powi(*n))
                }
            }
        }
    }
}

/// Non-constancy diagnostic from the build probe.
#[derive(Debug, Clone, PartialEq)]
pub struct BuildWarning {
    pub block: String,
    pub message: String,
}

/// An executable ODE system: one first-order equation per coordinate, parent
/// sets at block level, and an initial state. Immutable; interventions return
/// new systems.
#[derive(Debug, Clone)]
pub struct OdeSystem<T> {
    core: Arc<ModelCore<T>>,
    dynamics: Vec<Expr<T>>,
    init: Vec<T>,
    /// Hard-clamped blocks and their clamp values.
    clamped: BTreeMap<usize, Vec<T>>,
    /// Per-block parent sets; self-parents permitted.
    parents: Vec<BTreeSet<usize>>,
    compiled: Vec<CExpr<T>>,
    jacobian: OnceLock<Vec<Vec<CExpr<T>>>>,
    warnings: Vec<BuildWarning>,
}

impl<T: Scalar> PartialEq for OdeSystem<T> {
    fn eq(&self, other: &Self) -> bool {
        self.core == other.core
            && self.dynamics == other.dynamics
            && self.init == other.init
            && self.clamped == other.clamped
            && self.parents == other.parents
    }
}

/// Per-coordinate sampling box centered on `init`, half-width
/// `inflation * max(1, |init_i|)`, clipped to the coordinate's domain.
pub fn inflated_box<T: Scalar>(core: &ModelCore<T>, init: &[T], inflation: T) -> Vec<(T, T)> {
    init.iter()
        .enumerate()
        .map(|(c, &x0)| {
            let half = inflation * T::one().max(x0.abs());
            core.domain(c).clip(x0 - half, x0 + half)
        })
        .collect()
}

const NON_CONSTANCY_TRIALS: usize = 50;
const NON_CONSTANCY_SEED: u64 = 0x0de25c;

impl<T: Scalar> OdeSystem<T> {
    /// Build from a validated model. Parent sets come from syntactic
    /// dependence; a randomized probe flags parents whose influence never
    /// exceeds 1e-12 (semantic constancy suspected) as warnings.
    pub fn build(spec: &ModelSpec<T>) -> OdeSystem<T> {
        let core = spec.core().clone();
        let dynamics: Vec<Expr<T>> = spec.dynamics().to_vec();
        let init = spec.inits().to_vec();
        let parents = block_parents(&core, &dynamics);
        let compiled = dynamics
            .iter()
            .map(|e| CExpr::compile(e, &core))
            .collect();
        let mut sys = OdeSystem {
            core,
            dynamics,
            init,
            clamped: BTreeMap::new(),
            parents,
            compiled,
            jacobian: OnceLock::new(),
            warnings: Vec::new(),
        };
        sys.warnings = sys.probe_non_constancy();
        sys
    }

    fn probe_non_constancy(&self) -> Vec<BuildWarning> {
        let mut warnings = Vec::new();
        let tol = T::of(1e-12);
        let boxes = inflated_box(&self.core, &self.init, T::one());
        for (i, parent_set) in self.parents.iter().enumerate() {
            let range = self.core.block_range(i);
            // Only coordinates that appear syntactically count as claimed.
            let claimed: BTreeSet<String> = range
                .clone()
                .flat_map(|c| self.dynamics[c].free_coords())
                .collect();
            for &j in parent_set {
                for c in self.core.block_range(j) {
                    if !claimed.contains(self.core.coord_name(c)) {
                        continue;
                    }
                    let mut stream = Stream::new(
                        NON_CONSTANCY_SEED,
                        Purpose::DependenceProbe,
                        ((i as u64) << 32) | c as u64,
                    );
                    let mut max_delta = T::zero();
                    for _ in 0..NON_CONSTANCY_TRIALS {
                        let mut x: Vec<T> = boxes
                            .iter()
                            .map(|&(lo, hi)| stream.uniform(lo, hi))
                            .collect();
                        let base: Result<Vec<T>, ()> =
                            range.clone().map(|k| self.compiled[k].eval(&x)).collect();
                        x[c] = stream.uniform(boxes[c].0, boxes[c].1);
                        let pert: Result<Vec<T>, ()> =
                            range.clone().map(|k| self.compiled[k].eval(&x)).collect();
                        if let (Ok(base), Ok(pert)) = (base, pert) {
                            for (b, p) in base.iter().zip(&pert) {
                                max_delta = max_delta.max((*b - *p).abs());
                            }
                        }
                    }
                    if max_delta <= tol {
                        let block = self.core.blocks()[i].name.clone();
                        warnings.push(BuildWarning {
                            block: block.clone(),
                            message: format!(
                                "dynamics of `{block}` never varied when perturbing `{}`; \
                                 the declared dependence may be semantically constant",
                                self.core.coord_name(c)
                            ),
                        });
                    }
                }
            }
        }
        warnings
    }

    pub fn core(&self) -> &Arc<ModelCore<T>> {
        &self.core
    }

    pub fn n_coords(&self) -> usize {
        self.init.len()
    }

    pub fn init(&self) -> &[T] {
        &self.init
    }

    pub fn dynamics(&self) -> &[Expr<T>] {
        &self.dynamics
    }

    pub fn parents(&self, block: usize) -> &BTreeSet<usize> {
        &self.parents[block]
    }

    pub fn clamped(&self) -> &BTreeMap<usize, Vec<T>> {
        &self.clamped
    }

    pub fn warnings(&self) -> &[BuildWarning] {
        &self.warnings
    }

    /// Right-hand side of the ODE at state `x`.
    pub fn drift(&self, x: &[T]) -> Result<Vec<T>, EvalError> {
        let mut out = vec![T::zero(); self.compiled.len()];
        self.drift_into(x, &mut out)?;
        Ok(out)
    }

    pub(crate) fn drift_into(&self, x: &[T], out: &mut [T]) -> Result<(), EvalError> {
        for (c, e) in self.compiled.iter().enumerate() {
            out[c] = e.eval(x).map_err(|()| EvalError::DivisionByZero {
                context: format!("dynamics of {}", self.core.coord_name(c)),
            })?;
        }
        Ok(())
    }

    /// Block-level graph: an edge `j -> i` whenever block `j` is a parent of
    /// block `i`, with self-loops flagged.
    pub fn graph(&self) -> Digraph {
        let mut g = Digraph::new(self.core.blocks().iter().map(|b| b.name.clone()).collect());
        for (i, parent_set) in self.parents.iter().enumerate() {
            for &j in parent_set {
                g.add_edge(j, i);
            }
        }
        g
    }

    fn validate(&self, iv: &Intervention<T>) -> Result<(), InterventionError> {
        validate_intervention(&self.core, iv)
    }

    /// Hard (perfect) intervention: targeted blocks get zero dynamics, clamp
    /// initial values, and empty parent sets. Idempotent, and disjoint
    /// interventions compose to the joint intervention exactly.
    pub fn intervene_hard(&self, iv: &Intervention<T>) -> Result<OdeSystem<T>, InterventionError> {
        self.validate(iv)?;
        let mut sys = self.clone();
        sys.jacobian = OnceLock::new();
        for (&b, values) in iv.targets() {
            let range = self.core.block_range(b);
            for (k, c) in range.clone().enumerate() {
                sys.dynamics[c] = Expr::constant(T::zero());
                sys.compiled[c] = CExpr::Const(T::zero());
                sys.init[c] = values[k];
            }
            sys.parents[b].clear();
            sys.clamped.insert(b, values.clone());
            sys.warnings.retain(|w| w.block != self.core.blocks()[b].name);
        }
        Ok(sys)
    }

    /// Soft intervention: adds `kappa (xi_c - x_c)` to every targeted
    /// coordinate. Initial values are untouched; targeted blocks gain a
    /// self-loop.
    pub fn intervene_soft(
        &self,
        iv: &Intervention<T>,
        kappa: T,
    ) -> Result<OdeSystem<T>, InterventionError> {
        if !(kappa > T::zero()) {
            return Err(InterventionError::NonPositiveGain(kappa.to_string()));
        }
        self.validate(iv)?;
        let mut sys = self.clone();
        sys.jacobian = OnceLock::new();
        for (&b, values) in iv.targets() {
            let range = self.core.block_range(b);
            for (k, c) in range.clone().enumerate() {
                let coord = self.core.coord_name(c).to_string();
                let restoring = Expr::mul(
                    Expr::constant(kappa),
                    Expr::sub(Expr::constant(values[k]), Expr::var(coord)),
                );
                sys.dynamics[c] = Expr::add(sys.dynamics[c].clone(), restoring);
                sys.compiled[c] = CExpr::compile(&sys.dynamics[c], &self.core);
            }
            sys.parents[b].insert(b);
        }
        Ok(sys)
    }

    /// Compiled symbolic partials `d f_c / d x_k`, built on first use.
    pub(crate) fn jacobian_compiled(&self) -> &Vec<Vec<CExpr<T>>> {
        self.jacobian.get_or_init(|| {
            let n = self.n_coords();
            (0..n)
                .map(|c| {
                    (0..n)
                        .map(|k| {
                            let d = self.dynamics[c].differentiate(self.core.coord_name(k));
                            CExpr::compile(&d, &self.core)
                        })
                        .collect()
                })
                .collect()
        })
    }
}

/// Validate an intervention's targets against a model core: known blocks,
/// matching dimensions, clamp values inside the domains.
pub(crate) fn validate_intervention<T: Scalar>(
    core: &ModelCore<T>,
    iv: &Intervention<T>,
) -> Result<(), InterventionError> {
    for (&b, values) in iv.targets() {
        let block = core
            .blocks()
            .get(b)
            .ok_or_else(|| InterventionError::UnknownBlock(format!("#{b}")))?;
        if values.len() != block.dim() {
            return Err(InterventionError::DimensionMismatch {
                block: block.name.clone(),
                expected: block.dim(),
                got: values.len(),
            });
        }
        for ((coord, dom), &v) in block.coords.iter().zip(&block.domains).zip(values) {
            if !dom.contains(v) {
                return Err(InterventionError::OutsideDomain {
                    coord: coord.clone(),
                    value: v.to_string(),
                    domain: dom.to_string(),
                });
            }
        }
    }
    Ok(())
}

/// Block-level parent sets from syntactic coordinate dependence.
fn block_parents<T: Scalar>(core: &ModelCore<T>, dynamics: &[Expr<T>]) -> Vec<BTreeSet<usize>> {
    (0..core.n_blocks())
        .map(|i| {
            let mut set = BTreeSet::new();
            for c in core.block_range(i) {
                for name in dynamics[c].free_coords() {
                    set.insert(core.block_of_coord(core.coord_index(&name).unwrap()));
                }
            }
            set
        })
        .collect()
}
