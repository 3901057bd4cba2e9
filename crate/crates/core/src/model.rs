//! Model declarations: variable blocks, domains, parameters, dynamics,
//! initial values, and the built-in example systems.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::Expr;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("duplicate declaration of `{0}`")]
    DuplicateName(String),
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("missing dynamics for coordinate `{0}`")]
    MissingDynamics(String),
    #[error("missing initial value for coordinate `{0}`")]
    MissingInit(String),
    #[error("initial value {value} of `{coord}` lies outside its domain {domain}")]
    InitOutsideDomain {
        coord: String,
        value: String,
        domain: String,
    },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("model declares no variables")]
    Empty,
    #[error("block error: {0}")]
    Block(String),
}

/// One end of a real interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound<T> {
    Inclusive(T),
    Exclusive(T),
    Unbounded,
}

/// Closed/half-open/open interval domain of a scalar coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: Bound<T>,
    pub hi: Bound<T>,
}

impl<T: Scalar> Interval<T> {
    pub fn unbounded() -> Self {
        Interval {
            lo: Bound::Unbounded,
            hi: Bound::Unbounded,
        }
    }

    pub fn contains(&self, x: T) -> bool {
        let lo_ok = match self.lo {
            Bound::Inclusive(a) => x >= a,
            Bound::Exclusive(a) => x > a,
            Bound::Unbounded => true,
        };
        let hi_ok = match self.hi {
            Bound::Inclusive(b) => x <= b,
            Bound::Exclusive(b) => x < b,
            Bound::Unbounded => true,
        };
        lo_ok && hi_ok
    }

    /// Membership up to `eps` beyond either end; used when classifying
    /// numerically computed states, where exact boundary tests are too strict.
    pub fn contains_slack(&self, x: T, eps: T) -> bool {
        let lo_ok = match self.lo {
            Bound::Inclusive(a) | Bound::Exclusive(a) => x >= a - eps,
            Bound::Unbounded => true,
        };
        let hi_ok = match self.hi {
            Bound::Inclusive(b) | Bound::Exclusive(b) => x <= b + eps,
            Bound::Unbounded => true,
        };
        lo_ok && hi_ok
    }

    /// Clip `[lo, hi]` to this interval, for box sampling.
    pub fn clip(&self, lo: T, hi: T) -> (T, T) {
        let l = match self.lo {
            Bound::Inclusive(a) | Bound::Exclusive(a) => lo.max(a),
            Bound::Unbounded => lo,
        };
        let h = match self.hi {
            Bound::Inclusive(b) | Bound::Exclusive(b) => hi.min(b),
            Bound::Unbounded => hi,
        };
        (l, h)
    }
}

impl<T: Scalar> fmt::Display for Interval<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.lo {
            Bound::Inclusive(a) => write!(f, "[{a},")?,
            Bound::Exclusive(a) => write!(f, "({a},")?,
            Bound::Unbounded => write!(f, "(-inf,")?,
        }
        match self.hi {
            Bound::Inclusive(b) => write!(f, "{b}]"),
            Bound::Exclusive(b) => write!(f, "{b})"),
            Bound::Unbounded => write!(f, "inf)"),
        }
    }
}

/// A variable block: one model-level variable of dimension `coords.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub name: String,
    pub coords: Vec<String>,
    pub domains: Vec<Interval<T>>,
}

impl<T> Block<T> {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }
}

/// Immutable structural core shared by systems, equilibrium equations, and
/// causal models derived from one declaration: blocks plus parameter values.
#[derive(Debug)]
pub struct ModelCore<T> {
    blocks: Vec<Block<T>>,
    /// Sorted by name; declaration order carries no meaning.
    params: Vec<(String, T)>,
    coord_index: HashMap<String, usize>,
    param_index: HashMap<String, T>,
    block_of_coord: Vec<usize>,
    block_ranges: Vec<Range<usize>>,
    block_index: HashMap<String, usize>,
}

impl<T: Scalar> PartialEq for ModelCore<T> {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks && self.params == other.params
    }
}

impl<T: Scalar> ModelCore<T> {
    pub fn new(blocks: Vec<Block<T>>, mut params: Vec<(String, T)>) -> Result<Self, ModelError> {
        if blocks.is_empty() {
            return Err(ModelError::Empty);
        }
        params.sort_by(|a, b| a.0.cmp(&b.0));
        let mut coord_index = HashMap::new();
        let mut block_of_coord = Vec::new();
        let mut block_ranges = Vec::new();
        let mut block_index = HashMap::new();
        let mut next = 0usize;
        for (bi, block) in blocks.iter().enumerate() {
            if block.coords.is_empty() || block.coords.len() != block.domains.len() {
                return Err(ModelError::Block(format!(
                    "block `{}` is malformed",
                    block.name
                )));
            }
            if block_index.insert(block.name.clone(), bi).is_some() {
                return Err(ModelError::DuplicateName(block.name.clone()));
            }
            let start = next;
            for coord in &block.coords {
                if coord_index.insert(coord.clone(), next).is_some() {
                    return Err(ModelError::DuplicateName(coord.clone()));
                }
                block_of_coord.push(bi);
                next += 1;
            }
            block_ranges.push(start..next);
        }
        // A multi-coordinate block may not shadow a coordinate or parameter.
        for block in &blocks {
            let singleton = block.coords.len() == 1 && block.coords[0] == block.name;
            if !singleton && coord_index.contains_key(&block.name) {
                return Err(ModelError::DuplicateName(block.name.clone()));
            }
        }
        let mut param_index = HashMap::new();
        for (name, value) in &params {
            if param_index.insert(name.clone(), *value).is_some() {
                return Err(ModelError::DuplicateName(name.clone()));
            }
            if coord_index.contains_key(name) || block_index.contains_key(name) {
                return Err(ModelError::DuplicateName(name.clone()));
            }
        }
        Ok(ModelCore {
            blocks,
            params,
            coord_index,
            param_index,
            block_of_coord,
            block_ranges,
            block_index,
        })
    }

    pub fn blocks(&self) -> &[Block<T>] {
        &self.blocks
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_coords(&self) -> usize {
        self.block_of_coord.len()
    }

    pub fn params(&self) -> &[(String, T)] {
        &self.params
    }

    pub fn param_value(&self, name: &str) -> Option<T> {
        self.param_index.get(name).copied()
    }

    pub fn coord_index(&self, name: &str) -> Option<usize> {
        self.coord_index.get(name).copied()
    }

    pub fn block_index(&self, name: &str) -> Option<usize> {
        self.block_index.get(name).copied()
    }

    /// Block that owns flattened coordinate `c`.
    pub fn block_of_coord(&self, c: usize) -> usize {
        self.block_of_coord[c]
    }

    /// Flattened coordinate range of block `b`.
    pub fn block_range(&self, b: usize) -> Range<usize> {
        self.block_ranges[b].clone()
    }

    /// Flattened coordinate names in block order.
    pub fn coord_names(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().flat_map(|b| b.coords.iter().map(|s| s.as_str()))
    }

    pub fn coord_name(&self, c: usize) -> &str {
        let b = self.block_of_coord[c];
        let r = &self.block_ranges[b];
        &self.blocks[b].coords[c - r.start]
    }

    pub fn domain(&self, c: usize) -> &Interval<T> {
        let b = self.block_of_coord[c];
        let r = &self.block_ranges[b];
        &self.blocks[b].domains[c - r.start]
    }
}

/// A parsed, validated model declaration.
#[derive(Debug, Clone)]
pub struct ModelSpec<T> {
    core: Arc<ModelCore<T>>,
    /// One dynamics expression per flattened coordinate, block order.
    dynamics: Vec<Expr<T>>,
    /// One initial value per flattened coordinate.
    inits: Vec<T>,
}

impl<T: Scalar> PartialEq for ModelSpec<T> {
    fn eq(&self, other: &Self) -> bool {
        self.core == other.core && self.dynamics == other.dynamics && self.inits == other.inits
    }
}

impl<T: Scalar> ModelSpec<T> {
    pub fn new(
        core: ModelCore<T>,
        dynamics: Vec<Expr<T>>,
        inits: Vec<T>,
    ) -> Result<Self, ModelError> {
        let n = core.block_of_coord.len();
        if dynamics.len() != n {
            let missing = core
                .coord_names()
                .nth(dynamics.len().min(n.saturating_sub(1)))
                .unwrap_or("?")
                .to_string();
            return Err(ModelError::MissingDynamics(missing));
        }
        if inits.len() != n {
            let missing = core
                .coord_names()
                .nth(inits.len().min(n.saturating_sub(1)))
                .unwrap_or("?")
                .to_string();
            return Err(ModelError::MissingInit(missing));
        }
        for e in &dynamics {
            for name in e.free_coords() {
                if core.coord_index(&name).is_none() {
                    return Err(ModelError::UnknownIdentifier(name));
                }
            }
            for name in e.free_params() {
                if core.param_value(&name).is_none() {
                    return Err(ModelError::UnknownIdentifier(name));
                }
            }
        }
        for (c, &value) in inits.iter().enumerate() {
            let dom = core.domain(c);
            if !dom.contains(value) {
                return Err(ModelError::InitOutsideDomain {
                    coord: core.coord_name(c).to_string(),
                    value: value.to_string(),
                    domain: dom.to_string(),
                });
            }
        }
        Ok(ModelSpec {
            core: Arc::new(core),
            dynamics,
            inits,
        })
    }

    pub fn core(&self) -> &Arc<ModelCore<T>> {
        &self.core
    }

    pub fn dynamics(&self) -> &[Expr<T>] {
        &self.dynamics
    }

    pub fn inits(&self) -> &[T] {
        &self.inits
    }

    /// Canonical text form: parsing it back yields a structurally equal model.
    pub fn print(&self) -> String {
        let mut out = String::new();
        for (name, value) in self.core.params() {
            out.push_str(&format!("param {name} = {value}\n"));
        }
        for block in self.core.blocks() {
            for (coord, dom) in block.coords.iter().zip(&block.domains) {
                out.push_str(&format!("var {coord} in {dom}\n"));
            }
        }
        for block in self.core.blocks() {
            if block.dim() > 1 {
                out.push_str(&format!(
                    "block {} = ({})\n",
                    block.name,
                    block.coords.join(", ")
                ));
            }
        }
        for (c, e) in self.dynamics.iter().enumerate() {
            out.push_str(&format!("dyn {} = {e}\n", self.core.coord_name(c)));
        }
        for (c, v) in self.inits.iter().enumerate() {
            out.push_str(&format!("init {} = {v}\n", self.core.coord_name(c)));
        }
        out
    }
}

/// Lotka-Volterra predator/prey dynamics on `[0, inf)^2`.
///
/// `theta = (th11, th12, th21, th22)` must all be positive; `init = (a, b)`
/// nonnegative.
pub fn builtin_lotka_volterra<T: Scalar>(
    theta: (T, T, T, T),
    init: (T, T),
) -> Result<ModelSpec<T>, ModelError> {
    let (th11, th12, th21, th22) = theta;
    for (name, v) in [("th11", th11), ("th12", th12), ("th21", th21), ("th22", th22)] {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(ModelError::BadParameter(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    let (a, b) = init;
    if !(a >= T::zero()) || !(b >= T::zero()) {
        return Err(ModelError::BadParameter(format!(
            "initial abundances must be nonnegative, got ({a}, {b})"
        )));
    }
    let nonneg = Interval {
        lo: Bound::Inclusive(T::zero()),
        hi: Bound::Unbounded,
    };
    let blocks = vec![
        Block {
            name: "X1".into(),
            coords: vec!["X1".into()],
            domains: vec![nonneg],
        },
        Block {
            name: "X2".into(),
            coords: vec!["X2".into()],
            domains: vec![nonneg],
        },
    ];
    let params = vec![
        ("th11".to_string(), th11),
        ("th12".to_string(), th12),
        ("th21".to_string(), th21),
        ("th22".to_string(), th22),
    ];
    let x1dot = Expr::mul(
        Expr::var("X1"),
        Expr::sub(
            Expr::param("th11"),
            Expr::mul(Expr::param("th12"), Expr::var("X2")),
        ),
    );
    let x2dot = Expr::neg(Expr::mul(
        Expr::var("X2"),
        Expr::sub(
            Expr::param("th22"),
            Expr::mul(Expr::param("th21"), Expr::var("X1")),
        ),
    ));
    ModelSpec::new(
        ModelCore::new(blocks, params)?,
        vec![x1dot, x2dot],
        vec![a, b],
    )
}

/// Parameters of the damped mass-spring chain with fixed walls.
#[derive(Debug, Clone, PartialEq)]
pub struct MassSpringParams<T> {
    /// Number of masses.
    pub d: usize,
    /// `masses[i]`, `frictions[i]` belong to mass `i+1` (lengths `d`).
    pub masses: Vec<T>,
    pub frictions: Vec<T>,
    /// `springs[i]`, `lengths[i]` describe spring `i` (lengths `d + 1`);
    /// spring `0` attaches mass 1 to the left wall at position 0.
    pub springs: Vec<T>,
    pub lengths: Vec<T>,
    /// Right wall position `L`.
    pub wall: T,
    pub init_positions: Vec<T>,
    pub init_momenta: Vec<T>,
}

impl<T: Scalar> MassSpringParams<T> {
    /// Unit masses, springs, lengths, and friction, wall at `d + 1`, started
    /// at the equally spaced rest configuration.
    pub fn uniform(d: usize) -> Self {
        let one = T::one();
        MassSpringParams {
            d,
            masses: vec![one; d],
            frictions: vec![one; d],
            springs: vec![one; d + 1],
            lengths: vec![one; d + 1],
            wall: T::of((d + 1) as f64),
            init_positions: (1..=d).map(|i| T::of(i as f64)).collect(),
            init_momenta: vec![T::zero(); d],
        }
    }
}

/// Chain of `D` damped harmonic oscillators between two walls. Each mass is a
/// two-dimensional block `Xi = (Qi, Pi)`.
pub fn builtin_mass_spring<T: Scalar>(
    params: &MassSpringParams<T>,
) -> Result<ModelSpec<T>, ModelError> {
    let d = params.d;
    if d < 1 {
        return Err(ModelError::BadParameter("need at least one mass".into()));
    }
    let check_len = |what: &str, got: usize, want: usize| {
        if got != want {
            Err(ModelError::BadParameter(format!(
                "{what}: expected {want} entries, got {got}"
            )))
        } else {
            Ok(())
        }
    };
    check_len("masses", params.masses.len(), d)?;
    check_len("frictions", params.frictions.len(), d)?;
    check_len("springs", params.springs.len(), d + 1)?;
    check_len("lengths", params.lengths.len(), d + 1)?;
    check_len("init_positions", params.init_positions.len(), d)?;
    check_len("init_momenta", params.init_momenta.len(), d)?;
    for (what, vs) in [
        ("mass", &params.masses),
        ("spring constant", &params.springs),
        ("friction", &params.frictions),
    ] {
        if let Some(v) = vs.iter().find(|v| !(**v > T::zero())) {
            return Err(ModelError::BadParameter(format!(
                "every {what} must be positive, got {v}"
            )));
        }
    }
    if let Some(v) = params.lengths.iter().find(|v| !(**v >= T::zero())) {
        return Err(ModelError::BadParameter(format!(
            "rest lengths must be nonnegative, got {v}"
        )));
    }

    let mut blocks = Vec::with_capacity(d);
    let mut param_list = vec![("L".to_string(), params.wall)];
    for i in 1..=d {
        blocks.push(Block {
            name: format!("X{i}"),
            coords: vec![format!("Q{i}"), format!("P{i}")],
            domains: vec![Interval::unbounded(), Interval::unbounded()],
        });
        param_list.push((format!("m{i}"), params.masses[i - 1]));
        param_list.push((format!("b{i}"), params.frictions[i - 1]));
    }
    for i in 0..=d {
        param_list.push((format!("k{i}"), params.springs[i]));
        param_list.push((format!("l{i}"), params.lengths[i]));
    }

    // Boundary positions: Q0 = 0 (left wall), Q_{D+1} = L (right wall).
    let q = |i: usize| -> Expr<T> {
        if i == 0 {
            Expr::constant(T::zero())
        } else if i == d + 1 {
            Expr::param("L")
        } else {
            Expr::var(format!("Q{i}"))
        }
    };

    let mut dynamics = Vec::with_capacity(2 * d);
    let mut inits = Vec::with_capacity(2 * d);
    for i in 1..=d {
        // Qi' = Pi / mi
        dynamics.push(Expr::div(
            Expr::var(format!("P{i}")),
            Expr::param(format!("m{i}")),
        ));
        // Pi' = ki (Q_{i+1} - Qi - li) - k_{i-1} (Qi - Q_{i-1} - l_{i-1}) - bi/mi Pi
        let right = Expr::mul(
            Expr::param(format!("k{i}")),
            Expr::sub(
                Expr::sub(q(i + 1), q(i)),
                Expr::param(format!("l{i}")),
            ),
        );
        let left = Expr::mul(
            Expr::param(format!("k{}", i - 1)),
            Expr::sub(
                Expr::sub(q(i), q(i - 1)),
                Expr::param(format!("l{}", i - 1)),
            ),
        );
        let friction = Expr::mul(
            Expr::div(Expr::param(format!("b{i}")), Expr::param(format!("m{i}"))),
            Expr::var(format!("P{i}")),
        );
        dynamics.push(Expr::sub(Expr::sub(right, left), friction));
        inits.push(params.init_positions[i - 1]);
        inits.push(params.init_momenta[i - 1]);
    }
    // Interleave inits to (Q1, P1, Q2, P2, ...) flattened order: already built
    // that way above (push per mass).
    ModelSpec::new(ModelCore::new(blocks, param_list)?, dynamics, inits)
}
