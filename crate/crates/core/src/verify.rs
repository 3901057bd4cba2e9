//! Machine checks of the commutation properties tying the three levels
//! together: intervening an ODE and reading off its equilibrium equations
//! gives the same equations as intervening them directly; likewise for the
//! derived causal model; and when the intervened dynamics are stable, the
//! flow equilibrium, the equation solution, and the model solution all
//! coincide. Structural equalities are exact (canonical-form comparison);
//! numeric path agreements use one tolerance.

use std::fmt::Write as _;

use crate::dynamics::{
    combine_verdicts, find_equilibrium_by_flow, probe_interventional_stability, FlowStatus,
    InterventionalProbeOptions, ProbeOptions, StabilityVerdict,
};
use crate::equilibrium::{solve_lee, Lee, SolveOptions, SolveStatus, XiSampleOptions};
use crate::model::{builtin_lotka_volterra, builtin_mass_spring, MassSpringParams, ModelSpec};
use crate::rng::{Purpose, Stream};
use crate::scalar::{max_dist, Scalar};
use crate::scm::{derive_scm, solve_scm, DeriveOptions};
use crate::system::{inflated_box, Intervention, OdeSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckVerdict {
    Pass,
    Fail,
    /// The check's hypothesis failed; this never counts as a failure.
    PreconditionUnmet,
}

impl std::fmt::Display for CheckVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CheckVerdict::Pass => "pass",
            CheckVerdict::Fail => "fail",
            CheckVerdict::PreconditionUnmet => "precondition-unmet",
        };
        f.write_str(s)
    }
}

/// Options shared by the commutation checks.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions<T> {
    /// Numeric agreement tolerance between paths.
    pub tol: T,
    pub seed: u64,
    /// Budget for the stability probes backing the hypotheses.
    pub probe: ProbeOptions<T>,
    /// Clamp draws per target when probing structural stability.
    pub xi_draws: usize,
    pub solve: SolveOptions<T>,
    pub solvability: XiSampleOptions<T>,
}

impl<T: Scalar> Default for VerifyOptions<T> {
    fn default() -> Self {
        VerifyOptions {
            tol: T::of(1e-6),
            seed: 0,
            probe: ProbeOptions {
                trials: 5,
                ..ProbeOptions::default()
            },
            xi_draws: 2,
            solve: SolveOptions::default(),
            solvability: XiSampleOptions::default(),
        }
    }
}

/// Flow-level structural stability probe: for each block, stability with
/// respect to clamping its non-self parents, sampled over clamp values (the
/// first probe uses the block's initial value, which deterministically hits
/// degenerate clamps sitting at the initial condition).
pub fn probe_structural_stability<T: Scalar>(
    sys: &OdeSystem<T>,
    opts: &VerifyOptions<T>,
) -> (StabilityVerdict, String) {
    let mut targets: Vec<Vec<usize>> = Vec::new();
    for b in 0..sys.core().n_blocks() {
        let mut t: Vec<usize> = sys.parents(b).iter().copied().collect();
        t.retain(|&p| p != b);
        targets.push(t);
    }
    targets.sort();
    targets.dedup();
    let popts = InterventionalProbeOptions {
        xi_draws: opts.xi_draws,
        include_init_value: true,
        zero_tail: false,
        probe: ProbeOptions {
            seed: opts.seed,
            ..opts.probe.clone()
        },
    };
    let reports = probe_interventional_stability(sys, &targets, &popts);
    let verdict = combine_verdicts(reports.values().map(|r| r.verdict));
    let mut detail = String::new();
    for (target, report) in &reports {
        let names: Vec<&str> = target
            .iter()
            .map(|&b| sys.core().blocks()[b].name.as_str())
            .collect();
        let _ = writeln!(detail, "clamp {{{}}}: {}", names.join(", "), report.verdict);
    }
    (verdict, detail)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericAgreement<T> {
    pub discrepancy: T,
    pub tol: T,
    pub within: bool,
}

/// Report of the ODE-to-equations commutation check.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationCommutationReport<T> {
    /// Part (i): exact structural equality of the two labeled systems.
    pub lee_equality_exact: bool,
    /// Part (ii): flow equilibrium vs. equation solution, when the intervened
    /// dynamics probe as stable.
    pub numeric: Option<NumericAgreement<T>>,
    pub verdict: CheckVerdict,
    pub notes: Vec<String>,
}

/// Check that intervening the equations equals reading the equations off the
/// intervened system, and that the flow equilibrium matches the algebraic
/// solution when the intervened system is stable under probing.
pub fn check_equation_commutation<T: Scalar>(
    sys: &OdeSystem<T>,
    iv: &Intervention<T>,
    opts: &VerifyOptions<T>,
) -> EquationCommutationReport<T> {
    let mut notes = Vec::new();
    let lee_direct = Lee::from_system(sys).intervene(iv);
    let cut = sys.intervene_hard(iv);
    let (lee_direct, cut) = match (lee_direct, cut) {
        (Ok(a), Ok(b)) => (a, b),
        _ => {
            return EquationCommutationReport {
                lee_equality_exact: false,
                numeric: None,
                verdict: CheckVerdict::PreconditionUnmet,
                notes: vec!["intervention invalid for this model".into()],
            }
        }
    };
    let lee_of_cut = Lee::from_system(&cut);
    let exact = lee_direct == lee_of_cut && lee_direct.render() == lee_of_cut.render();

    let mut probe = opts.probe.clone();
    probe.seed = opts.seed;
    for (&b, values) in iv.targets() {
        for (k, c) in sys.core().block_range(b).enumerate() {
            probe.pinned.insert(c, values[k]);
        }
    }
    let stability = crate::dynamics::probe_stability(&cut, &probe);
    let numeric = match stability.verdict {
        StabilityVerdict::StableWrtProbes => {
            let flow = find_equilibrium_by_flow(&cut, cut.init(), &probe.flow);
            let solved = solve_lee(&lee_direct, &opts.solve);
            match (flow.status, flow.equilibrium, solved.solution) {
                (FlowStatus::Converged, Some(eq), Some(sol)) => {
                    let discrepancy = max_dist(&eq, &sol);
                    Some(NumericAgreement {
                        discrepancy,
                        tol: opts.tol,
                        within: discrepancy < opts.tol,
                    })
                }
                _ => {
                    notes.push("flow or solve produced no comparable solution".into());
                    None
                }
            }
        }
        v => {
            notes.push(format!(
                "intervened dynamics not stable w.r.t. probes ({v}); numeric part skipped"
            ));
            None
        }
    };
    let verdict = if !exact || numeric.as_ref().is_some_and(|n| !n.within) {
        CheckVerdict::Fail
    } else {
        CheckVerdict::Pass
    };
    EquationCommutationReport {
        lee_equality_exact: exact,
        numeric,
        verdict,
        notes,
    }
}

/// Report of the equations-to-model commutation check.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCommutationReport<T> {
    /// Part (i): exact structural equality of the two derived models.
    pub scm_equality_exact: Option<bool>,
    /// Part (ii): solution agreement between the intervened equations and the
    /// intervened model, when both solve uniquely.
    pub numeric: Option<NumericAgreement<T>>,
    pub verdict: CheckVerdict,
    pub notes: Vec<String>,
}

/// Check that intervening the derived model equals deriving from the
/// intervened equations (hypothesis: both equation systems are structurally
/// solvable under probing).
pub fn check_model_commutation<T: Scalar>(
    lee: &Lee<T>,
    iv: &Intervention<T>,
    opts: &VerifyOptions<T>,
) -> ModelCommutationReport<T> {
    let mut notes = Vec::new();
    let cut_lee = match lee.intervene(iv) {
        Ok(l) => l,
        Err(e) => {
            return ModelCommutationReport {
                scm_equality_exact: None,
                numeric: None,
                verdict: CheckVerdict::PreconditionUnmet,
                notes: vec![format!("intervention invalid: {e}")],
            }
        }
    };
    let derive_opts = DeriveOptions {
        force: false,
        solvability: opts.solvability.clone(),
    };
    let base_scm = derive_scm(lee, &derive_opts);
    let cut_scm_direct = derive_scm(&cut_lee, &derive_opts);
    let (base_scm, cut_scm_direct) = match (base_scm, cut_scm_direct) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            return ModelCommutationReport {
                scm_equality_exact: None,
                numeric: None,
                verdict: CheckVerdict::PreconditionUnmet,
                notes: vec![format!("hypothesis failed: {e}")],
            }
        }
    };
    let cut_scm_via_model = match base_scm.intervene(iv) {
        Ok(s) => s,
        Err(e) => {
            return ModelCommutationReport {
                scm_equality_exact: None,
                numeric: None,
                verdict: CheckVerdict::PreconditionUnmet,
                notes: vec![format!("intervention invalid: {e}")],
            }
        }
    };
    let exact = cut_scm_via_model == cut_scm_direct
        && cut_scm_via_model.render() == cut_scm_direct.render();

    let lee_solution = solve_lee(&cut_lee, &opts.solve);
    let scm_solution = solve_scm(&cut_scm_via_model, &opts.solve);
    let numeric = match (lee_solution.status, scm_solution.status) {
        (SolveStatus::UniqueWrtProbes, SolveStatus::UniqueWrtProbes) => {
            let discrepancy = max_dist(
                lee_solution.solution.as_ref().unwrap(),
                scm_solution.solution.as_ref().unwrap(),
            );
            Some(NumericAgreement {
                discrepancy,
                tol: opts.tol,
                within: discrepancy < opts.tol,
            })
        }
        (a, b) => {
            notes.push(format!(
                "solution comparison skipped (equations: {a}, model: {b})"
            ));
            None
        }
    };
    let verdict = if !exact || numeric.as_ref().is_some_and(|n| !n.within) {
        CheckVerdict::Fail
    } else {
        CheckVerdict::Pass
    };
    ModelCommutationReport {
        scm_equality_exact: Some(exact),
        numeric,
        verdict,
        notes,
    }
}

/// Full commutation report: all four paths from an ODE and an intervention to
/// a state, plus the structural equalities along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct CommutationReport<T> {
    pub model: String,
    pub intervention: String,
    /// (a) flow equilibrium of the intervened system.
    pub flow_equilibrium: Option<Vec<T>>,
    /// (b) solution of the intervened equations.
    pub lee_solution: Option<Vec<T>>,
    /// (c) solution of the model derived first, intervened after.
    pub scm_pre_solution: Option<Vec<T>>,
    /// (d) solution of the model derived from the intervened equations.
    pub scm_post_solution: Option<Vec<T>>,
    pub max_pairwise_discrepancy: Option<T>,
    pub tol: T,
    pub equations_equal_exact: bool,
    pub models_equal_exact: Option<bool>,
    pub verdict: CheckVerdict,
    pub notes: Vec<String>,
}

/// Check that the full diagram commutes for one intervention: derive-then-
/// intervene and intervene-then-derive agree structurally at both levels, and
/// all four numeric paths land on the same state within the tolerance.
/// Hypothesis: both the system and the intervened system pass the structural
/// stability probes.
pub fn check_commutative_diagram<T: Scalar>(
    sys: &OdeSystem<T>,
    iv: &Intervention<T>,
    model_name: &str,
    opts: &VerifyOptions<T>,
) -> CommutationReport<T> {
    let intervention = iv.describe(sys.core());
    let mut notes = Vec::new();
    let precondition_unmet = |notes: Vec<String>| CommutationReport {
        model: model_name.to_string(),
        intervention: intervention.clone(),
        flow_equilibrium: None,
        lee_solution: None,
        scm_pre_solution: None,
        scm_post_solution: None,
        max_pairwise_discrepancy: None,
        tol: opts.tol,
        equations_equal_exact: false,
        models_equal_exact: None,
        verdict: CheckVerdict::PreconditionUnmet,
        notes,
    };

    let cut = match sys.intervene_hard(iv) {
        Ok(s) => s,
        Err(e) => return precondition_unmet(vec![format!("intervention invalid: {e}")]),
    };
    let (base_verdict, base_detail) = probe_structural_stability(sys, opts);
    if base_verdict != StabilityVerdict::StableWrtProbes {
        notes.push(format!(
            "system is not structurally stable w.r.t. probes:\n{base_detail}"
        ));
        return precondition_unmet(notes);
    }
    let (cut_verdict, cut_detail) = probe_structural_stability(&cut, opts);
    if cut_verdict != StabilityVerdict::StableWrtProbes {
        notes.push(format!(
            "intervened system is not structurally stable w.r.t. probes:\n{cut_detail}"
        ));
        return precondition_unmet(notes);
    }

    let eq_check = check_equation_commutation(sys, iv, opts);
    let model_check = check_model_commutation(&Lee::from_system(sys), iv, opts);

    // Path (a): flow equilibrium of the intervened system.
    let mut flow_opts = opts.probe.flow.clone();
    flow_opts.integrate.sample_times = None;
    let flow = find_equilibrium_by_flow(&cut, cut.init(), &flow_opts);
    let flow_equilibrium = flow.equilibrium.clone();
    if flow.status != FlowStatus::Converged {
        notes.push(format!("flow did not converge ({})", flow.status));
    }
    // Path (b): intervened equations.
    let cut_lee = Lee::from_system(&cut);
    let lee_solution = solve_lee(&cut_lee, &opts.solve).solution;
    // Paths (c) and (d): model derived before vs. after the intervention.
    let derive_opts = DeriveOptions {
        force: false,
        solvability: opts.solvability.clone(),
    };
    let scm_pre_solution = derive_scm(&Lee::from_system(sys), &derive_opts)
        .and_then(|scm| scm.intervene(iv))
        .map(|scm| solve_scm(&scm, &opts.solve).solution)
        .unwrap_or_default();
    let scm_post_solution = derive_scm(&cut_lee, &derive_opts)
        .map(|scm| solve_scm(&scm, &opts.solve).solution)
        .unwrap_or_default();

    let paths: Vec<&Vec<T>> = [
        flow_equilibrium.as_ref(),
        lee_solution.as_ref(),
        scm_pre_solution.as_ref(),
        scm_post_solution.as_ref(),
    ]
    .into_iter()
    .flatten()
    .collect();
    let all_paths_present = paths.len() == 4;
    let mut max_pairwise = None;
    if paths.len() >= 2 {
        let mut worst = T::zero();
        for i in 0..paths.len() {
            for j in i + 1..paths.len() {
                worst = worst.max(max_dist(paths[i], paths[j]));
            }
        }
        max_pairwise = Some(worst);
    }

    let numeric_ok = all_paths_present && max_pairwise.is_some_and(|d| d < opts.tol);
    if !all_paths_present {
        notes.push("not all four paths produced a state".into());
    }
    let models_equal_exact = model_check.scm_equality_exact;
    let verdict = if eq_check.lee_equality_exact && models_equal_exact == Some(true) && numeric_ok {
        CheckVerdict::Pass
    } else {
        CheckVerdict::Fail
    };
    notes.extend(eq_check.notes);
    notes.extend(model_check.notes);
    CommutationReport {
        model: model_name.to_string(),
        intervention,
        flow_equilibrium,
        lee_solution,
        scm_pre_solution,
        scm_post_solution,
        max_pairwise_discrepancy: max_pairwise,
        tol: opts.tol,
        equations_equal_exact: eq_check.lee_equality_exact,
        models_equal_exact,
        verdict,
        notes,
    }
}

/// A model entry for the verification suite.
#[derive(Debug, Clone)]
pub enum SuiteModel<T> {
    LotkaVolterra { theta: (T, T, T, T), init: (T, T) },
    MassSpring(MassSpringParams<T>),
    Custom { name: String, spec: ModelSpec<T> },
}

impl<T: Scalar> SuiteModel<T> {
    pub fn name(&self) -> String {
        match self {
            SuiteModel::LotkaVolterra { .. } => "lotka-volterra".into(),
            SuiteModel::MassSpring(p) => format!("mass-spring-d{}", p.d),
            SuiteModel::Custom { name, .. } => name.clone(),
        }
    }

    pub fn build(&self) -> Result<OdeSystem<T>, crate::model::ModelError> {
        let spec = match self {
            SuiteModel::LotkaVolterra { theta, init } => builtin_lotka_volterra(*theta, *init)?,
            SuiteModel::MassSpring(p) => builtin_mass_spring(p)?,
            SuiteModel::Custom { spec, .. } => spec.clone(),
        };
        Ok(OdeSystem::build(&spec))
    }
}

/// The default suite: mass-spring chains of two, three, and four masses plus
/// the predator-prey system.
pub fn default_suite_models<T: Scalar>() -> Vec<SuiteModel<T>> {
    let mut models: Vec<SuiteModel<T>> = (2..=4)
        .map(|d| SuiteModel::MassSpring(MassSpringParams::uniform(d)))
        .collect();
    models.push(SuiteModel::LotkaVolterra {
        theta: (T::one(), T::one(), T::one(), T::one()),
        init: (T::one(), T::one()),
    });
    models
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRecord<T> {
    pub model: String,
    pub intervention: String,
    pub check: &'static str,
    pub verdict: CheckVerdict,
    pub discrepancy: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport<T> {
    pub seed: u64,
    pub tol: T,
    pub records: Vec<SuiteRecord<T>>,
}

impl<T: Scalar> SuiteReport<T> {
    pub fn any_failure(&self) -> bool {
        self.records.iter().any(|r| r.verdict == CheckVerdict::Fail)
    }

    /// Machine-readable rendering: one record per line, stable ordering.
    pub fn render(&self) -> String {
        let mut out = format!("# verification suite seed={} tol={:e}\n", self.seed, self.tol);
        for r in &self.records {
            let _ = write!(
                out,
                "model={} intervention={} check={} verdict={}",
                r.model, r.intervention, r.check, r.verdict
            );
            if let Some(d) = r.discrepancy {
                let _ = write!(out, " max_discrepancy={d:e}");
            }
            out.push('\n');
        }
        let pass = self.count(CheckVerdict::Pass);
        let fail = self.count(CheckVerdict::Fail);
        let unmet = self.count(CheckVerdict::PreconditionUnmet);
        let _ = writeln!(
            out,
            "# summary: pass={pass} fail={fail} precondition-unmet={unmet}"
        );
        out
    }

    fn count(&self, v: CheckVerdict) -> usize {
        self.records.iter().filter(|r| r.verdict == v).count()
    }
}

/// Sweep models and sampled interventions through all three checks.
/// Deterministic for a fixed seed; records are sorted by model, intervention,
/// and check name.
pub fn run_verification_suite<T: Scalar>(
    models: &[SuiteModel<T>],
    n_random_interventions: usize,
    opts: &VerifyOptions<T>,
) -> SuiteReport<T> {
    let mut records = Vec::new();
    for (mi, model) in models.iter().enumerate() {
        let sys = match model.build() {
            Ok(s) => s,
            Err(_) => continue,
        };
        let name = model.name();
        let boxes = inflated_box(sys.core(), sys.init(), T::of(1.5));
        let mut interventions: Vec<Intervention<T>> = vec![Intervention::identity()];
        for k in 0..n_random_interventions {
            let mut stream = Stream::new(
                opts.seed,
                Purpose::Suite,
                ((mi as u64) << 32) | k as u64,
            );
            let n_blocks = sys.core().n_blocks();
            let block = (stream.unit::<T>().to_f64().unwrap() * n_blocks as f64) as usize % n_blocks;
            // Position-style clamp: first coordinate sampled, the rest zero
            // (momenta for the oscillator chain).
            let range = sys.core().block_range(block);
            let values: Vec<T> = range
                .clone()
                .enumerate()
                .map(|(i, c)| {
                    if i == 0 {
                        stream.uniform(boxes[c].0, boxes[c].1)
                    } else {
                        T::zero()
                    }
                })
                .collect();
            if let Ok(iv) = Intervention::from_indices(sys.core(), &[(block, values)]) {
                interventions.push(iv);
            }
        }
        for iv in &interventions {
            let descr = iv.describe(sys.core());
            let t1 = check_equation_commutation(&sys, iv, opts);
            records.push(SuiteRecord {
                model: name.clone(),
                intervention: descr.clone(),
                check: "equation-commutation",
                verdict: t1.verdict,
                discrepancy: t1.numeric.map(|n| n.discrepancy),
            });
            let l1 = check_model_commutation(&Lee::from_system(&sys), iv, opts);
            records.push(SuiteRecord {
                model: name.clone(),
                intervention: descr.clone(),
                check: "model-commutation",
                verdict: l1.verdict,
                discrepancy: l1.numeric.map(|n| n.discrepancy),
            });
            let diag = check_commutative_diagram(&sys, iv, &name, opts);
            records.push(SuiteRecord {
                model: name.clone(),
                intervention: descr.clone(),
                check: "diagram",
                verdict: diag.verdict,
                discrepancy: diag.max_pairwise_discrepancy,
            });
        }
    }
    records.sort_by(|a, b| {
        (&a.model, &a.intervention, a.check).cmp(&(&b.model, &b.intervention, b.check))
    });
    SuiteReport {
        seed: opts.seed,
        tol: opts.tol,
        records,
    }
}

/// Render a commutation report as human-readable lines.
pub fn render_commutation_report<T: Scalar>(report: &CommutationReport<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "model={} intervention={} verdict={}",
        report.model, report.intervention, report.verdict
    );
    let fmt_path = |label: &str, p: &Option<Vec<T>>| -> String {
        match p {
            Some(v) => {
                let parts: Vec<String> = v.iter().map(|x| format!("{x:.9e}")).collect();
                format!("  {label}: [{}]\n", parts.join(", "))
            }
            None => format!("  {label}: (none)\n"),
        }
    };
    out.push_str(&fmt_path("flow equilibrium   (a)", &report.flow_equilibrium));
    out.push_str(&fmt_path("equations solution (b)", &report.lee_solution));
    out.push_str(&fmt_path("model, pre-derived (c)", &report.scm_pre_solution));
    out.push_str(&fmt_path("model, re-derived  (d)", &report.scm_post_solution));
    let _ = writeln!(
        out,
        "  equations equality: {}; model equality: {}",
        if report.equations_equal_exact { "exact" } else { "MISMATCH" },
        match report.models_equal_exact {
            Some(true) => "exact",
            Some(false) => "MISMATCH",
            None => "not derived",
        }
    );
    if let Some(d) = report.max_pairwise_discrepancy {
        let _ = writeln!(out, "  max pairwise discrepancy: {d:e} (tol {:e})", report.tol);
    }
    for n in &report.notes {
        let _ = writeln!(out, "  note: {n}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spring_sys(d: usize) -> OdeSystem<f64> {
        OdeSystem::build(&builtin_mass_spring(&MassSpringParams::<f64>::uniform(d)).unwrap())
    }

    fn lv_sys() -> OdeSystem<f64> {
        OdeSystem::build(&builtin_lotka_volterra((1.0, 1.0, 1.0, 1.0), (1.0, 1.0)).unwrap())
    }

    #[test]
    fn equation_commutation_on_intervened_lv() {
        let sys = lv_sys();
        let iv = Intervention::new(sys.core(), &[("X2", vec![2.0])]).unwrap();
        let report = check_equation_commutation(&sys, &iv, &VerifyOptions::default());
        assert!(report.lee_equality_exact);
        let numeric = report.numeric.expect("intervened system is stable");
        assert!(numeric.within, "discrepancy {:?}", numeric.discrepancy);
        assert_eq!(report.verdict, CheckVerdict::Pass);
    }

    #[test]
    fn equation_commutation_identity_is_trivially_exact() {
        let sys = lv_sys();
        let report = check_equation_commutation(&sys, &Intervention::identity(), &VerifyOptions::default());
        assert!(report.lee_equality_exact);
        // Numeric part skipped: the unintervened system is not stable.
        assert!(report.numeric.is_none());
        assert_eq!(report.verdict, CheckVerdict::Pass);
    }

    #[test]
    fn model_commutation_on_mass_spring() {
        let sys = spring_sys(2);
        let lee = Lee::from_system(&sys);
        let iv = Intervention::new(sys.core(), &[("X2", vec![3.0, 0.0])]).unwrap();
        let report = check_model_commutation(&lee, &iv, &VerifyOptions::default());
        assert_eq!(report.scm_equality_exact, Some(true));
        let numeric = report.numeric.unwrap();
        assert!(numeric.within);
        assert_eq!(report.verdict, CheckVerdict::Pass);
    }

    #[test]
    fn model_commutation_hypothesis_failure_is_not_a_failure() {
        let sys = lv_sys();
        let lee = Lee::from_system(&sys);
        let iv = Intervention::new(sys.core(), &[("X2", vec![2.0])]).unwrap();
        let report = check_model_commutation(&lee, &iv, &VerifyOptions::default());
        assert_eq!(report.verdict, CheckVerdict::PreconditionUnmet);
    }

    #[test]
    fn diagram_commutes_for_mass_spring() {
        let sys = spring_sys(2);
        let iv = Intervention::new(sys.core(), &[("X1", vec![0.7, 0.0])]).unwrap();
        let report = check_commutative_diagram(&sys, &iv, "mass-spring-d2", &VerifyOptions::default());
        assert_eq!(report.verdict, CheckVerdict::Pass, "{}", render_commutation_report(&report));
        assert!(report.max_pairwise_discrepancy.unwrap() < 1e-6);
    }

    #[test]
    fn diagram_reports_precondition_unmet_for_lv() {
        let sys = lv_sys();
        let report = check_commutative_diagram(
            &sys,
            &Intervention::identity(),
            "lotka-volterra",
            &VerifyOptions::default(),
        );
        assert_eq!(report.verdict, CheckVerdict::PreconditionUnmet);
    }

    #[test]
    fn suite_is_deterministic() {
        let models = vec![SuiteModel::MassSpring(MassSpringParams::<f64>::uniform(2))];
        let opts = VerifyOptions {
            seed: 7,
            ..VerifyOptions::default()
        };
        let a = run_verification_suite(&models, 2, &opts);
        let b = run_verification_suite(&models, 2, &opts);
        assert_eq!(a, b);
        assert_eq!(a.render(), b.render());
        assert!(!a.any_failure(), "{}", a.render());
    }

    #[test]
    fn empty_suite_is_empty() {
        let report = run_verification_suite::<f64>(&[], 3, &VerifyOptions::default());
        assert!(report.records.is_empty());
        assert!(!report.any_failure());
    }
}
