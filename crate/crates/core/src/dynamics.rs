//! Numerical integration, equilibrium detection, finite stability probing,
//! and local classification via the Jacobian spectrum.
//!
//! The integrator is an explicit embedded Runge-Kutta 5(4) pair
//! (Dormand-Prince) with adaptive step control and a fourth-order continuous
//! extension for dense output. Stability in the sense of "every initial state
//! converges to one equilibrium" is undecidable numerically, so the probes
//! here sample finitely many initial states and report three-valued verdicts
//! with explicit witnesses; they never claim proof.

use std::collections::BTreeMap;
use std::fmt;

use crate::expr::EvalError;
use crate::linalg::{self, LinalgError};
use crate::model::ModelCore;
use crate::rng::{Purpose, Stream};
use crate::scalar::{fmt_g17, max_dist, max_norm, Scalar};
use crate::system::{inflated_box, Intervention, OdeSystem};

/// State norm beyond which a trajectory counts as divergent.
const DIVERGENCE_NORM: f64 = 1e8;
/// Slack for the leaving-the-domain diagnostic; tolerates integrator rounding
/// at closed boundaries.
const DOMAIN_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    ReachedEnd,
    Converged,
    Diverged,
    LeftDomain,
    StepUnderflow,
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TerminationReason::ReachedEnd => "reached t_end",
            TerminationReason::Converged => "converged",
            TerminationReason::Diverged => "diverged",
            TerminationReason::LeftDomain => "left domain",
            TerminationReason::StepUnderflow => "step underflow",
        };
        f.write_str(s)
    }
}

/// Sampled solution of an initial value problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    pub termination: TerminationReason,
    pub diagnostic: Option<String>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn final_state(&self) -> &[T] {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// CSV rendering: header `t,<coord>,...`, `%.17g` values, and a trailing
    /// `# terminated: <reason>` comment line.
    pub fn to_csv(&self, core: &ModelCore<T>) -> String {
        let mut out = String::from("t");
        for name in core.coord_names() {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (t, state) in self.times.iter().zip(&self.states) {
            out.push_str(&fmt_g17(*t));
            for v in state {
                out.push(',');
                out.push_str(&fmt_g17(*v));
            }
            out.push('\n');
        }
        out.push_str(&format!("# terminated: {}\n", self.termination));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrateOptions<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_steps: usize,
    /// Disables adaptive control and error estimation; for convergence-order
    /// studies.
    pub fixed_step: Option<T>,
    /// Dense-output sample grid. `None` records every accepted step.
    pub sample_times: Option<Vec<T>>,
}

impl<T: Scalar> Default for IntegrateOptions<T> {
    fn default() -> Self {
        IntegrateOptions {
            abs_tol: T::of(1e-9),
            rel_tol: T::of(1e-9),
            max_steps: 10_000_000,
            fixed_step: None,
            sample_times: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowStatus {
    Converged,
    Oscillating,
    Diverged,
    Timeout,
}

impl fmt::Display for FlowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FlowStatus::Converged => "converged",
            FlowStatus::Oscillating => "oscillating",
            FlowStatus::Diverged => "diverged",
            FlowStatus::Timeout => "timeout",
        };
        f.write_str(s)
    }
}

/// Result of following the flow in search of an equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumOutcome<T> {
    pub status: FlowStatus,
    pub equilibrium: Option<Vec<T>>,
    /// `max |f(X*)|`, re-evaluated at the reported equilibrium.
    pub residual: Option<T>,
    pub convergence_time: Option<T>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions<T> {
    /// Drift max-norm below which the state counts as stationary.
    pub eq_tol: T,
    pub t_max: T,
    /// The stationarity must be sustained over a trailing window covering
    /// this fraction of elapsed time...
    pub window_fraction: T,
    /// ...and at least this many accepted steps.
    pub window_min_steps: usize,
    pub integrate: IntegrateOptions<T>,
}

impl<T: Scalar> Default for FlowOptions<T> {
    fn default() -> Self {
        FlowOptions {
            eq_tol: T::of(1e-8),
            t_max: T::of(1e3),
            window_fraction: T::of(0.01),
            window_min_steps: 10,
            integrate: IntegrateOptions::default(),
        }
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
/// Difference between the 5th- and 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
/// Weights of the 4th-order continuous extension.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

struct Stepper<'a, T> {
    sys: &'a OdeSystem<T>,
    t: T,
    y: Vec<T>,
    /// f(t, y); kept current via the first-same-as-last property.
    dy: Vec<T>,
    h: T,
    atol: T,
    rtol: T,
    fixed: Option<T>,
    k: Vec<Vec<T>>,
    y_stage: Vec<T>,
    y_new: Vec<T>,
    k_last: Vec<T>,
}

enum StepOutcome<T> {
    /// Step accepted; previous state and stage derivatives retained for dense
    /// output.
    Accepted { t_old: T, h_used: T },
    StepUnderflow,
    Eval(EvalError),
    NonFinite,
}
use StepOutcome as SO;

impl<'a, T: Scalar> Stepper<'a, T> {
    fn new(
        sys: &'a OdeSystem<T>,
        t0: T,
        y0: &[T],
        t_end: T,
        atol: T,
        rtol: T,
        fixed: Option<T>,
    ) -> Result<Self, EvalError> {
        let n = y0.len();
        let mut dy = vec![T::zero(); n];
        sys.drift_into(y0, &mut dy)?;
        let mut stepper = Stepper {
            sys,
            t: t0,
            y: y0.to_vec(),
            dy,
            h: T::zero(),
            atol,
            rtol,
            fixed,
            k: vec![vec![T::zero(); n]; 7],
            y_stage: vec![T::zero(); n],
            y_new: vec![T::zero(); n],
            k_last: vec![T::zero(); n],
        };
        stepper.h = match fixed {
            Some(h) => h,
            None => stepper.initial_step(t_end - t0),
        };
        Ok(stepper)
    }

    /// Standard automatic initial step: bound by the local derivative scale,
    /// then refined with one explicit Euler probe.
    fn initial_step(&mut self, span: T) -> T {
        let n = self.y.len();
        let mut d0 = T::zero();
        let mut d1 = T::zero();
        for i in 0..n {
            let sc = self.atol + self.rtol * self.y[i].abs();
            d0 = d0 + (self.y[i] / sc).powi(2);
            d1 = d1 + (self.dy[i] / sc).powi(2);
        }
        let nf = T::of(n as f64);
        d0 = (d0 / nf).sqrt();
        d1 = (d1 / nf).sqrt();
        let small = T::of(1e-5);
        let mut h0 = if d0 < small || d1 < small {
            T::of(1e-6)
        } else {
            T::of(0.01) * d0 / d1
        };
        h0 = h0.min(span.abs());
        for i in 0..n {
            self.y_stage[i] = self.y[i] + h0 * self.dy[i];
        }
        let d2 = match self.sys.drift_into(&self.y_stage, &mut self.k_last) {
            Ok(()) => {
                let mut acc = T::zero();
                for i in 0..n {
                    let sc = self.atol + self.rtol * self.y[i].abs();
                    acc = acc + ((self.k_last[i] - self.dy[i]) / sc).powi(2);
                }
                (acc / nf).sqrt() / h0
            }
            Err(_) => T::zero(),
        };
        let d_max = d1.max(d2);
        let h1 = if d_max <= T::of(1e-15) {
            (h0 * T::of(1e-3)).max(T::of(1e-6))
        } else {
            (T::of(0.01) / d_max).powf(T::of(0.2))
        };
        (T::of(100.0) * h0).min(h1).min(span.abs())
    }

    /// Advance one accepted step, not beyond `t_limit`.
    fn step(&mut self, t_limit: T) -> StepOutcome<T> {
        let n = self.y.len();
        let min_h = T::epsilon() * T::of(16.0) * self.t.abs().max(T::one());
        loop {
            let mut h = self.h.min(t_limit - self.t);
            if let Some(fh) = self.fixed {
                h = fh.min(t_limit - self.t);
            }
            if h <= T::zero() {
                return SO::StepUnderflow;
            }
            self.k[0].copy_from_slice(&self.dy);
            for stage in 0..6 {
                for i in 0..n {
                    let mut acc = T::zero();
                    for (s, a) in A[stage].iter().enumerate().take(stage + 1) {
                        if *a != 0.0 {
                            acc = acc + T::of(*a) * self.k[s][i];
                        }
                    }
                    self.y_stage[i] = self.y[i] + h * acc;
                }
                // Stage times are never needed: the dynamics are autonomous.
                let dest = &mut self.k[stage + 1];
                match eval_drift(self.sys, &self.y_stage, dest) {
                    Ok(()) => {}
                    Err(DriftFailure::Eval(e)) => return SO::Eval(e),
                    Err(DriftFailure::NonFinite) => return SO::NonFinite,
                }
            }
            // 5th-order solution is the last stage combination (FSAL: k[6] is
            // the derivative at the new point).
            for i in 0..n {
                let mut acc = T::zero();
                for (s, a) in A[5].iter().enumerate() {
                    if *a != 0.0 {
                        acc = acc + T::of(*a) * self.k[s][i];
                    }
                }
                self.y_new[i] = self.y[i] + h * acc;
            }
            match eval_drift(self.sys, &self.y_new, &mut self.k_last) {
                Ok(()) => {}
                Err(DriftFailure::Eval(e)) => return SO::Eval(e),
                Err(DriftFailure::NonFinite) => return SO::NonFinite,
            }
            self.k[6].copy_from_slice(&self.k_last);

            let accept = if self.fixed.is_some() {
                true
            } else {
                let mut err = T::zero();
                for i in 0..n {
                    let sc = self.atol + self.rtol * self.y[i].abs().max(self.y_new[i].abs());
                    let mut e = T::zero();
                    for (s, w) in E.iter().enumerate() {
                        if *w != 0.0 {
                            e = e + T::of(*w) * self.k[s][i];
                        }
                    }
                    err = err + (h * e / sc).powi(2);
                }
                err = (err / T::of(n as f64)).sqrt();
                if !err.is_finite() {
                    self.h = h * T::of(0.2);
                    if self.h < min_h {
                        return SO::NonFinite;
                    }
                    continue;
                }
                let factor = if err == T::zero() {
                    T::of(5.0)
                } else {
                    (T::of(0.9) * err.powf(T::of(-0.2))).max(T::of(0.2)).min(T::of(5.0))
                };
                if err <= T::one() {
                    self.h = h * factor;
                    true
                } else {
                    self.h = h * factor.min(T::one());
                    if self.h < min_h {
                        return SO::StepUnderflow;
                    }
                    false
                }
            };
            if accept {
                let t_old = self.t;
                self.t = t_old + h;
                std::mem::swap(&mut self.y, &mut self.y_new);
                self.dy.copy_from_slice(&self.k_last);
                return SO::Accepted { t_old, h_used: h };
            }
        }
    }

    /// Dense-output evaluation inside the last accepted step, at
    /// `theta in [0, 1]`; writes into `out`. `y_old` is the pre-step state
    /// (available as `y_new` after the swap), `h` the accepted step size.
    fn dense_eval(&self, theta: T, h: T, out: &mut [T]) {
        let n = out.len();
        let one_m = T::one() - theta;
        for i in 0..n {
            let y0 = self.y_new[i]; // pre-step state after the swap
            let y1 = self.y[i];
            let diff = y1 - y0;
            let r1 = y0;
            let r2 = diff;
            let r3 = h * self.k[0][i] - diff;
            let r4 = diff - h * self.k[6][i] - r3;
            let mut r5 = T::zero();
            for (s, d) in D.iter().enumerate() {
                if *d != 0.0 {
                    r5 = r5 + T::of(*d) * self.k[s][i];
                }
            }
            r5 = r5 * h;
            out[i] = r1 + theta * (r2 + one_m * (r3 + theta * (r4 + one_m * r5)));
        }
    }
}

enum DriftFailure {
    Eval(EvalError),
    NonFinite,
}

fn eval_drift<T: Scalar>(
    sys: &OdeSystem<T>,
    y: &[T],
    out: &mut [T],
) -> Result<(), DriftFailure> {
    sys.drift_into(y, out).map_err(DriftFailure::Eval)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(DriftFailure::NonFinite);
    }
    Ok(())
}

struct DetectParams<T> {
    eq_tol: T,
    window_fraction: T,
    window_min_steps: usize,
}

struct DriveResult<T> {
    termination: TerminationReason,
    diagnostic: Option<String>,
    final_y: Vec<T>,
    convergence_time: Option<T>,
    /// `(t, max |f|)` per accepted step.
    residuals: Vec<(T, T)>,
    /// Drift sign bitmask per accepted step (bit c set iff f_c > 0).
    signs: Vec<u64>,
}

fn drive<T: Scalar>(
    sys: &OdeSystem<T>,
    x0: &[T],
    t_end: T,
    opts: &IntegrateOptions<T>,
    detect: Option<&DetectParams<T>>,
    mut record: Option<&mut Trajectory<T>>,
) -> DriveResult<T> {
    let n = x0.len();
    debug_assert_eq!(n, sys.n_coords());
    let mut result = DriveResult {
        termination: TerminationReason::ReachedEnd,
        diagnostic: None,
        final_y: x0.to_vec(),
        convergence_time: None,
        residuals: Vec::new(),
        signs: Vec::new(),
    };

    let mut sample_queue: Vec<T> = match &opts.sample_times {
        Some(ts) => {
            let mut ts = ts.clone();
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            ts.dedup();
            ts.reverse();
            ts
        }
        None => Vec::new(),
    };
    if let Some(traj) = record.as_deref_mut() {
        traj.times.push(T::zero());
        traj.states.push(x0.to_vec());
        while let Some(&t) = sample_queue.last() {
            if t <= T::zero() {
                sample_queue.pop();
            } else {
                break;
            }
        }
    }

    let mut stepper = match Stepper::new(sys, T::zero(), x0, t_end, opts.abs_tol, opts.rel_tol, opts.fixed_step) {
        Ok(s) => s,
        Err(e) => {
            result.termination = TerminationReason::Diverged;
            result.diagnostic = Some(format!("initial drift evaluation failed: {e}"));
            return result;
        }
    };

    let residual0 = max_norm(&stepper.dy);
    result.residuals.push((T::zero(), residual0));
    result.signs.push(sign_mask(&stepper.dy));
    // Index of the first entry of the longest all-below-tolerance suffix.
    let mut quiet_start = if detect.map_or(false, |d| residual0 < d.eq_tol) {
        0
    } else {
        1
    };

    let mut steps = 0usize;
    let mut sample_buf = vec![T::zero(); n];
    loop {
        if stepper.t >= t_end {
            result.termination = TerminationReason::ReachedEnd;
            break;
        }
        if steps >= opts.max_steps {
            result.termination = TerminationReason::StepUnderflow;
            result.diagnostic = Some(format!(
                "step budget ({}) exhausted at t = {}",
                opts.max_steps, stepper.t
            ));
            break;
        }
        steps += 1;
        match stepper.step(t_end) {
            SO::Accepted { t_old, h_used } => {
                // Dense-output samples inside (t_old, t].
                if record.is_some() {
                    while let Some(&ts) = sample_queue.last() {
                        if ts <= stepper.t {
                            sample_queue.pop();
                            let theta = (ts - t_old) / h_used;
                            stepper.dense_eval(theta, h_used, &mut sample_buf);
                            if let Some(traj) = record.as_deref_mut() {
                                traj.times.push(ts);
                                traj.states.push(sample_buf.clone());
                            }
                        } else {
                            break;
                        }
                    }
                    if opts.sample_times.is_none() {
                        if let Some(traj) = record.as_deref_mut() {
                            traj.times.push(stepper.t);
                            traj.states.push(stepper.y.clone());
                        }
                    }
                }

                let residual = max_norm(&stepper.dy);
                result.residuals.push((stepper.t, residual));
                result.signs.push(sign_mask(&stepper.dy));

                if max_norm(&stepper.y) > T::of(DIVERGENCE_NORM)
                    || stepper.y.iter().any(|v| !v.is_finite())
                {
                    result.termination = TerminationReason::Diverged;
                    result.diagnostic =
                        Some(format!("state norm exceeded {DIVERGENCE_NORM:e} at t = {}", stepper.t));
                    break;
                }
                if let Some((c, v)) = domain_violation(sys.core(), &stepper.y) {
                    result.termination = TerminationReason::LeftDomain;
                    result.diagnostic = Some(format!(
                        "coordinate {} = {v} left its domain {} at t = {}",
                        sys.core().coord_name(c),
                        sys.core().domain(c),
                        stepper.t
                    ));
                    break;
                }
                if let Some(d) = detect {
                    if residual >= d.eq_tol {
                        quiet_start = result.residuals.len();
                    }
                    let len = result.residuals.len();
                    if quiet_start < len {
                        let quiet_steps = len - quiet_start;
                        let quiet_span = stepper.t - result.residuals[quiet_start].0;
                        if quiet_steps >= d.window_min_steps
                            && quiet_span >= d.window_fraction * stepper.t
                        {
                            result.termination = TerminationReason::Converged;
                            result.convergence_time = Some(stepper.t);
                            break;
                        }
                    }
                }
            }
            SO::StepUnderflow => {
                result.termination = TerminationReason::StepUnderflow;
                result.diagnostic = Some(format!(
                    "step size underflow at t = {} (stiffness suspected)",
                    stepper.t
                ));
                break;
            }
            SO::Eval(e) => {
                result.termination = TerminationReason::Diverged;
                result.diagnostic = Some(format!("drift evaluation failed: {e}"));
                break;
            }
            SO::NonFinite => {
                result.termination = TerminationReason::Diverged;
                result.diagnostic = Some(format!("non-finite drift at t = {}", stepper.t));
                break;
            }
        }
    }

    result.final_y = stepper.y.clone();
    if let Some(traj) = record {
        traj.termination = result.termination;
        traj.diagnostic = result.diagnostic.clone();
    }
    result
}

fn sign_mask<T: Scalar>(dy: &[T]) -> u64 {
    let mut mask = 0u64;
    for (i, v) in dy.iter().enumerate().take(64) {
        if *v > T::zero() {
            mask |= 1 << i;
        }
    }
    mask
}

fn domain_violation<T: Scalar>(core: &ModelCore<T>, y: &[T]) -> Option<(usize, T)> {
    let slack = T::of(DOMAIN_SLACK);
    for (c, &v) in y.iter().enumerate() {
        let eps = slack * (T::one() + v.abs());
        if !core.domain(c).contains_slack(v, eps) {
            return Some((c, v));
        }
    }
    None
}

/// Integrate the initial value problem to `t_end` (no equilibrium detection).
pub fn integrate<T: Scalar>(
    sys: &OdeSystem<T>,
    x0: &[T],
    t_end: T,
    opts: &IntegrateOptions<T>,
) -> Trajectory<T> {
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        termination: TerminationReason::ReachedEnd,
        diagnostic: None,
    };
    drive(sys, x0, t_end, opts, None, Some(&mut traj));
    traj
}

/// Integrate while watching for equilibrium; stops early on convergence.
/// Returns both the (sampled) trajectory and the assessment.
pub fn integrate_with_outcome<T: Scalar>(
    sys: &OdeSystem<T>,
    x0: &[T],
    opts: &FlowOptions<T>,
) -> (Trajectory<T>, EquilibriumOutcome<T>) {
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        termination: TerminationReason::ReachedEnd,
        diagnostic: None,
    };
    let outcome = flow_impl(sys, x0, opts, Some(&mut traj));
    traj.termination = match outcome.status {
        FlowStatus::Converged => TerminationReason::Converged,
        _ => traj.termination,
    };
    (traj, outcome)
}

/// Follow the flow from `x0` until the drift stays below `eq_tol` over the
/// trailing window (converged), the state diverges, or `t_max` is reached.
/// At the horizon, a bounded trajectory whose drift keeps changing sign with
/// no residual decay over the last half is classified as oscillating,
/// anything else as timeout.
pub fn find_equilibrium_by_flow<T: Scalar>(
    sys: &OdeSystem<T>,
    x0: &[T],
    opts: &FlowOptions<T>,
) -> EquilibriumOutcome<T> {
    flow_impl(sys, x0, opts, None)
}

fn flow_impl<T: Scalar>(
    sys: &OdeSystem<T>,
    x0: &[T],
    opts: &FlowOptions<T>,
    record: Option<&mut Trajectory<T>>,
) -> EquilibriumOutcome<T> {
    let detect = DetectParams {
        eq_tol: opts.eq_tol,
        window_fraction: opts.window_fraction,
        window_min_steps: opts.window_min_steps,
    };
    let res = drive(sys, x0, opts.t_max, &opts.integrate, Some(&detect), record);
    match res.termination {
        TerminationReason::Converged => {
            let residual = sys
                .drift(&res.final_y)
                .map(|f| max_norm(&f))
                .unwrap_or_else(|_| T::infinity());
            EquilibriumOutcome {
                status: FlowStatus::Converged,
                equilibrium: Some(res.final_y),
                residual: Some(residual),
                convergence_time: res.convergence_time,
                diagnostic: None,
            }
        }
        TerminationReason::Diverged | TerminationReason::LeftDomain => EquilibriumOutcome {
            status: FlowStatus::Diverged,
            equilibrium: None,
            residual: None,
            convergence_time: None,
            diagnostic: res.diagnostic,
        },
        TerminationReason::StepUnderflow => EquilibriumOutcome {
            status: FlowStatus::Timeout,
            equilibrium: None,
            residual: None,
            convergence_time: None,
            diagnostic: res.diagnostic,
        },
        TerminationReason::ReachedEnd => {
            if is_oscillating(&res, opts.t_max) {
                EquilibriumOutcome {
                    status: FlowStatus::Oscillating,
                    equilibrium: None,
                    residual: None,
                    convergence_time: None,
                    diagnostic: Some("bounded, recurring drift sign changes, no residual decay".into()),
                }
            } else {
                EquilibriumOutcome {
                    status: FlowStatus::Timeout,
                    equilibrium: None,
                    residual: None,
                    convergence_time: None,
                    diagnostic: Some(format!("no sustained equilibrium by t = {}", opts.t_max)),
                }
            }
        }
    }
}

/// Bounded + no decay of the drift residual over the last half + recurring
/// sign changes. Stated heuristic, adequate for closed orbits.
fn is_oscillating<T: Scalar>(res: &DriveResult<T>, t_max: T) -> bool {
    let half = t_max * T::of(0.5);
    let three_q = t_max * T::of(0.75);
    let mut max_mid = T::zero();
    let mut max_late = T::zero();
    for &(t, r) in &res.residuals {
        if t >= half && t < three_q {
            max_mid = max_mid.max(r);
        } else if t >= three_q {
            max_late = max_late.max(r);
        }
    }
    let no_decay = max_late > T::of(0.5) * max_mid && max_late > T::zero();
    if !no_decay {
        return false;
    }
    // Count sign flips per coordinate over the last half.
    let mut flips = [0u32; 64];
    let mut prev: Option<u64> = None;
    for (&(t, _), &mask) in res.residuals.iter().zip(&res.signs) {
        if t < half {
            continue;
        }
        if let Some(p) = prev {
            let changed = p ^ mask;
            for (i, f) in flips.iter_mut().enumerate() {
                if changed & (1 << i) != 0 {
                    *f += 1;
                }
            }
        }
        prev = Some(mask);
    }
    flips.iter().any(|&f| f >= 4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityVerdict {
    StableWrtProbes,
    Refuted,
    Inconclusive,
}

impl fmt::Display for StabilityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StabilityVerdict::StableWrtProbes => "stable-w.r.t.-probes",
            StabilityVerdict::Refuted => "refuted",
            StabilityVerdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StabilityWitness<T> {
    /// Two initial states whose flows settled at different limits.
    DistinctLimits {
        init_a: Vec<T>,
        limit_a: Vec<T>,
        init_b: Vec<T>,
        limit_b: Vec<T>,
    },
    /// An initial state whose flow did not converge.
    NonConvergence { init: Vec<T>, status: FlowStatus },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome<T> {
    pub init: Vec<T>,
    pub outcome: EquilibriumOutcome<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport<T> {
    pub verdict: StabilityVerdict,
    pub trials: Vec<TrialOutcome<T>>,
    pub max_pairwise_distance: Option<T>,
    pub witness: Option<StabilityWitness<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOptions<T> {
    pub trials: usize,
    /// Converged limits further apart than this refute uniqueness.
    pub match_tol: T,
    pub seed: u64,
    /// Per-coordinate sampling box; defaults to the initial-condition box
    /// inflated 1.5x and clipped to the domains.
    pub sample_box: Option<Vec<(T, T)>>,
    /// Coordinates pinned to fixed values in every sampled initial state
    /// (the restriction `(X0)_I = xi_I` when probing intervened systems).
    pub pinned: BTreeMap<usize, T>,
    pub flow: FlowOptions<T>,
}

impl<T: Scalar> Default for ProbeOptions<T> {
    fn default() -> Self {
        ProbeOptions {
            trials: 20,
            match_tol: T::of(1e-5),
            seed: 0,
            sample_box: None,
            pinned: BTreeMap::new(),
            flow: FlowOptions::default(),
        }
    }
}

/// Finite probing of "every initial state converges to one equilibrium":
/// follows the flow from `trials` sampled initial states and compares limits.
/// Hard-clamped blocks are pinned to their clamp values in every sampled
/// initial state (the admissible initial states of an intervened system all
/// carry the clamp).
pub fn probe_stability<T: Scalar>(sys: &OdeSystem<T>, opts: &ProbeOptions<T>) -> StabilityReport<T> {
    let boxes = opts
        .sample_box
        .clone()
        .unwrap_or_else(|| inflated_box(sys.core(), sys.init(), T::of(1.5)));
    let mut pinned = opts.pinned.clone();
    for (&b, values) in sys.clamped() {
        for (k, c) in sys.core().block_range(b).enumerate() {
            pinned.entry(c).or_insert(values[k]);
        }
    }
    let mut trials = Vec::with_capacity(opts.trials);
    for trial in 0..opts.trials {
        let mut stream = Stream::new(opts.seed, Purpose::ProbeInit, trial as u64);
        let mut init: Vec<T> = boxes.iter().map(|&(lo, hi)| stream.uniform(lo, hi)).collect();
        for (&c, &v) in &pinned {
            init[c] = v;
        }
        let outcome = find_equilibrium_by_flow(sys, &init, &opts.flow);
        trials.push(TrialOutcome { init, outcome });
    }
    assess_trials(trials, opts.match_tol)
}

fn assess_trials<T: Scalar>(trials: Vec<TrialOutcome<T>>, match_tol: T) -> StabilityReport<T> {
    let mut witness = None;
    let mut verdict = StabilityVerdict::StableWrtProbes;
    for t in &trials {
        match t.outcome.status {
            FlowStatus::Oscillating | FlowStatus::Diverged => {
                witness = Some(StabilityWitness::NonConvergence {
                    init: t.init.clone(),
                    status: t.outcome.status,
                });
                verdict = StabilityVerdict::Refuted;
                break;
            }
            _ => {}
        }
    }
    let converged: Vec<&TrialOutcome<T>> = trials
        .iter()
        .filter(|t| t.outcome.status == FlowStatus::Converged)
        .collect();
    let mut max_pairwise = None;
    if converged.len() >= 2 {
        let mut best = T::zero();
        let mut pair = (0, 1);
        for i in 0..converged.len() {
            for j in i + 1..converged.len() {
                let d = max_dist(
                    converged[i].outcome.equilibrium.as_ref().unwrap(),
                    converged[j].outcome.equilibrium.as_ref().unwrap(),
                );
                if d > best {
                    best = d;
                    pair = (i, j);
                }
            }
        }
        max_pairwise = Some(best);
        if verdict != StabilityVerdict::Refuted && best >= match_tol {
            verdict = StabilityVerdict::Refuted;
            witness = Some(StabilityWitness::DistinctLimits {
                init_a: converged[pair.0].init.clone(),
                limit_a: converged[pair.0].outcome.equilibrium.clone().unwrap(),
                init_b: converged[pair.1].init.clone(),
                limit_b: converged[pair.1].outcome.equilibrium.clone().unwrap(),
            });
        }
    }
    if verdict != StabilityVerdict::Refuted
        && trials.iter().any(|t| t.outcome.status == FlowStatus::Timeout)
    {
        verdict = StabilityVerdict::Inconclusive;
    }
    StabilityReport {
        verdict,
        trials,
        max_pairwise_distance: max_pairwise,
        witness,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterventionalProbeOptions<T> {
    /// Clamp values sampled per target set.
    pub xi_draws: usize,
    /// Probe the current initial value of the target as the first clamp.
    pub include_init_value: bool,
    /// Sample only the first coordinate of each clamped block and zero the
    /// rest (position-style clamps for position/momentum blocks).
    pub zero_tail: bool,
    pub probe: ProbeOptions<T>,
}

impl<T: Scalar> Default for InterventionalProbeOptions<T> {
    fn default() -> Self {
        InterventionalProbeOptions {
            xi_draws: 5,
            include_init_value: false,
            zero_tail: false,
            probe: ProbeOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetStabilityReport<T> {
    pub verdict: StabilityVerdict,
    /// One probe per sampled clamp value.
    pub draws: Vec<(Intervention<T>, StabilityReport<T>)>,
}

/// Stability with respect to a family of intervention targets: for each target
/// set, probe the hard-intervened system at sampled clamp values, with initial
/// states pinned to the clamp on the targeted blocks.
pub fn probe_interventional_stability<T: Scalar>(
    sys: &OdeSystem<T>,
    targets: &[Vec<usize>],
    opts: &InterventionalProbeOptions<T>,
) -> BTreeMap<Vec<usize>, TargetStabilityReport<T>> {
    let boxes = inflated_box(sys.core(), sys.init(), T::of(1.5));
    let mut out = BTreeMap::new();
    for (ti, target) in targets.iter().enumerate() {
        let mut draws = Vec::new();
        let n_draws = opts.xi_draws.max(usize::from(opts.include_init_value));
        for draw in 0..n_draws {
            let mut stream = Stream::new(
                opts.probe.seed,
                Purpose::ClampValue,
                ((ti as u64) << 32) | draw as u64,
            );
            let clamps: Vec<(usize, Vec<T>)> = target
                .iter()
                .map(|&b| {
                    let range = sys.core().block_range(b);
                    let values: Vec<T> = range
                        .enumerate()
                        .map(|(k, c)| {
                            if draw == 0 && opts.include_init_value {
                                sys.init()[c]
                            } else if opts.zero_tail && k > 0 {
                                T::zero()
                            } else {
                                stream.uniform(boxes[c].0, boxes[c].1)
                            }
                        })
                        .collect();
                    (b, values)
                })
                .collect();
            let iv = match Intervention::from_indices(sys.core(), &clamps) {
                Ok(iv) => iv,
                Err(_) => continue,
            };
            let cut = match sys.intervene_hard(&iv) {
                Ok(s) => s,
                Err(_) => continue,
            };
            let mut probe = opts.probe.clone();
            for (b, values) in &clamps {
                for (k, c) in sys.core().block_range(*b).enumerate() {
                    probe.pinned.insert(c, values[k]);
                }
            }
            let report = probe_stability(&cut, &probe);
            draws.push((iv, report));
        }
        let verdict = combine_verdicts(draws.iter().map(|(_, r)| r.verdict));
        out.insert(target.clone(), TargetStabilityReport { verdict, draws });
    }
    out
}

pub(crate) fn combine_verdicts(
    verdicts: impl Iterator<Item = StabilityVerdict>,
) -> StabilityVerdict {
    let mut out = StabilityVerdict::StableWrtProbes;
    for v in verdicts {
        match v {
            StabilityVerdict::Refuted => return StabilityVerdict::Refuted,
            StabilityVerdict::Inconclusive => out = StabilityVerdict::Inconclusive,
            StabilityVerdict::StableWrtProbes => {}
        }
    }
    out
}

/// Jacobian of the dynamics at `x`: symbolic partials evaluated numerically.
pub fn jacobian_at<T: Scalar>(sys: &OdeSystem<T>, x: &[T]) -> Result<Vec<Vec<T>>, EvalError> {
    let partials = sys.jacobian_compiled();
    let n = sys.n_coords();
    let mut out = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = partials[i][j].eval(x).map_err(|()| EvalError::DivisionByZero {
                context: format!(
                    "d({})/d{} at the requested state",
                    sys.core().coord_name(i),
                    sys.core().coord_name(j)
                ),
            })?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityClass {
    AsymptoticallyStable,
    Unstable,
    Marginal,
}

impl fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StabilityClass::AsymptoticallyStable => "asymptotically-stable",
            StabilityClass::Unstable => "unstable",
            StabilityClass::Marginal => "marginal",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumClassification<T> {
    /// Eigenvalues as `(re, im)`, sorted.
    pub eigenvalues: Vec<(T, T)>,
    pub class: StabilityClass,
}

const CLASSIFY_TOL: f64 = 1e-9;

/// Classify a linearization by its eigenvalue spectrum.
pub fn classify_equilibrium<T: Scalar>(
    jacobian: Vec<Vec<T>>,
) -> Result<SpectrumClassification<T>, LinalgError> {
    let eigenvalues = linalg::eigenvalues(jacobian)?;
    let tol = T::of(CLASSIFY_TOL);
    let class = if eigenvalues.iter().any(|&(re, _)| re > tol) {
        StabilityClass::Unstable
    } else if eigenvalues.iter().all(|&(re, _)| re < -tol) {
        StabilityClass::AsymptoticallyStable
    } else {
        StabilityClass::Marginal
    };
    Ok(SpectrumClassification { eigenvalues, class })
}
