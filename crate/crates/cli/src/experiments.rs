//! Experiment runners. Each returns a CSV body and a list of verdicts.

use std::fmt::Write as _;
use std::sync::Arc;

use dtnlab::assemble::AssembledSystem;
use dtnlab::coeffs::certify;
use dtnlab::semigroup::{
    domination_report, growth_report, lp_contraction_report, positivity_report, potential_monotonicity_report,
    submarkov_report, write_reports_csv, BoundarySemigroup, Report, SemigroupError, Verdict,
};
use dtnlab::spectral::{
    default_lambda_grid, dirichlet_limit_study, dirichlet_spectrum, dtn_equality_check, duality_check,
    duality_residuals, eigen_curves, gap_lambdas, match_and_unitary, robin_spectrum, steklov_spectrum, Spectrum,
    CLUSTER_TOL,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};

pub const DUALITY_TOL: f64 = 1e-8;
pub const MONOTONE_TOL: f64 = 1e-8;
pub const LIMIT_RATIO: f64 = 5.0;
pub const GAUGE_RATIO: f64 = 2.0;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Compute(String),
}

fn compute<E: std::fmt::Display>(what: &str) -> impl FnOnce(E) -> RunError + '_ {
    move |e| RunError::Compute(format!("{what}: {e}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub verdict: Option<Verdict>,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            verdict: Some(if ok { Verdict::Pass } else { Verdict::Fail }),
            detail: detail.into(),
        }
    }

    fn with(name: impl Into<String>, verdict: Verdict, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            verdict: Some(verdict),
            detail: detail.into(),
        }
    }

    /// A check whose hypotheses do not hold for this configuration.
    fn skipped(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            verdict: None,
            detail: detail.into(),
        }
    }

    pub fn label(&self) -> String {
        match self.verdict {
            Some(v) => v.to_string(),
            None => "SKIP".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub experiment: &'static str,
    pub csv: String,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn failed(&self) -> bool {
        self.checks.iter().any(|c| c.verdict == Some(Verdict::Fail))
    }
}

pub const EXPERIMENTS: [&str; 7] = ["validate", "spectrum", "curves", "duality", "limit", "semigroup", "gauge"];

pub fn run(name: &str, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    match name {
        "validate" => validate(cfg),
        "spectrum" => spectrum(cfg),
        "curves" => curves(cfg),
        "duality" => duality(cfg),
        "limit" => limit(cfg),
        "semigroup" => semigroup(cfg),
        "gauge" => gauge(cfg),
        other => unreachable!("unknown experiment {other}"),
    }
}

fn e(v: f64) -> String {
    format!("{v:.12e}")
}

fn main_system(cfg: &ExperimentConfig) -> Result<AssembledSystem, RunError> {
    let mesh = Arc::new(cfg.domain.mesh()?);
    Ok(cfg.system(mesh, &cfg.gamma0, &cfg.coefficients_a())?)
}

fn lambdas(cfg: &ExperimentConfig, sys: &AssembledSystem) -> Result<Vec<f64>, RunError> {
    match &cfg.lambda {
        Some(l) => Ok(l.clone()),
        None => gap_lambdas(sys, 3).map_err(compute("λ grid")),
    }
}

pub fn validate(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let mesh = cfg.domain.mesh()?;
    let part = cfg.gamma0.partition(&mesh)?;
    let q = mesh.quality();
    let mut csv = String::from("key,value\n");
    let mut row = |k: &str, v: String| writeln!(csv, "{k},{v}").unwrap();
    row("vertices", mesh.num_vertices().to_string());
    row("triangles", mesh.triangles().len().to_string());
    row("h_max", e(mesh.h_max()));
    row("area", e(mesh.area()));
    row("nonobtuse", q.all_nonobtuse.to_string());
    row("gamma0_edges", part.gamma0_edges.len().to_string());
    row("gamma1_edges", part.gamma1_edges.len().to_string());
    row("gamma0_length", e(part.gamma0_length(&mesh)));
    let mut checks = Vec::new();
    let ca = certify(&cfg.coefficients_a(), &mesh).map_err(|err| ConfigError::Invalid(format!("a: {err}")))?;
    row("eta_a", e(ca.eta));
    row("symmetric_a", ca.symmetric.to_string());
    checks.push(Check::new("certify a", true, format!("eta = {:.6e}, symmetric = {}", ca.eta, ca.symmetric)));
    if let Some(b) = cfg.coefficients_b() {
        let cb = certify(&b, &mesh).map_err(|err| ConfigError::Invalid(format!("b: {err}")))?;
        row("eta_b", e(cb.eta));
        row("symmetric_b", cb.symmetric.to_string());
        checks.push(Check::new("certify b", true, format!("eta = {:.6e}, symmetric = {}", cb.eta, cb.symmetric)));
    }
    if let Some(g) = &cfg.semigroup.gamma0_tilde {
        let tilde = g.partition(&mesh)?;
        checks.push(Check::new(
            "gamma0_tilde contains gamma0",
            part.is_nested_in(&tilde),
            format!("{} of {} edges", tilde.gamma0_edges.len(), mesh.boundary_edges().len()),
        ));
    }
    let gauge_domain = cfg.gauge.domain.as_ref().unwrap_or(&cfg.domain);
    let gmesh = gauge_domain.mesh()?;
    let phi = cfg.gauge.diffeo.build(&gmesh)?;
    let r = phi.inspect(&gmesh).map_err(|err| ConfigError::Invalid(format!("diffeo: {err}")))?;
    row("diffeo_min_det", e(r.min_det));
    row("diffeo_max_det", e(r.max_det));
    row("diffeo_boundary_det_defect", e(r.boundary_det_defect));
    let gb = cfg.gauge_coefficients(&gmesh)?;
    let cg = certify(&gb, &gmesh).map_err(|err| ConfigError::Invalid(format!("pullback: {err}")))?;
    row("eta_pullback", e(cg.eta));
    checks.push(Check::new(
        "gauge diffeomorphism",
        true,
        format!("det in [{:.4}, {:.4}], pullback eta = {:.6e}", r.min_det, r.max_det, cg.eta),
    ));
    Ok(Outcome {
        experiment: "validate",
        csv,
        checks,
    })
}

pub fn spectrum(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let sys = main_system(cfg)?;
    let k = cfg.k;
    let mut csv = String::from("problem,parameter,index,eigenvalue\n");
    let mut write = |problem: &str, p: Option<f64>, s: &Spectrum| {
        let p = p.map(e).unwrap_or_default();
        for (j, v) in s.eigenvalues.iter().enumerate() {
            writeln!(csv, "{problem},{p},{},{}", j + 1, e(*v)).unwrap();
        }
    };
    let d = dirichlet_spectrum(&sys, k.min(sys.interior_dofs().len())).map_err(compute("Dirichlet spectrum"))?;
    write("dirichlet", None, &d);
    let r = robin_spectrum(&sys, 0.0, k).map_err(compute("mixed spectrum"))?;
    write("robin", Some(0.0), &r);
    let nb = sys.boundary_dofs().len();
    let mut checks = Vec::new();
    for lambda in lambdas(cfg, &sys)? {
        let s = steklov_spectrum(&sys, lambda, k.min(nb)).map_err(compute("Steklov spectrum"))?;
        write("steklov", Some(lambda), &s);
    }
    let dominated = r
        .eigenvalues
        .iter()
        .zip(&d.eigenvalues)
        .all(|(x, y)| *x <= y + 1e-10 * y.abs().max(1.0));
    checks.push(Check::new(
        "mixed below Dirichlet",
        dominated,
        format!("lambda_1 mixed = {:.6e}, Dirichlet = {:.6e}", r.eigenvalues[0], d.eigenvalues[0]),
    ));
    Ok(Outcome {
        experiment: "spectrum",
        csv,
        checks,
    })
}

pub fn curves(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let sys = main_system(cfg)?;
    let c = &cfg.curves;
    let k = cfg.k;
    let curve = eigen_curves(&sys, c.mu_min, c.mu_max, c.steps, k).map_err(compute("eigen curves"))?;
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).expect("writing to memory");
    let csv = String::from_utf8(buf).expect("ASCII output");
    let d = dirichlet_spectrum(&sys, k).map_err(compute("Dirichlet spectrum"))?.eigenvalues;
    let mut excess: f64 = 0.0;
    for (j, row) in curve.values.iter().enumerate() {
        for v in row {
            excess = excess.max((v - d[j]) / d[j].abs().max(1.0));
        }
    }
    let l0 = robin_spectrum(&sys, 0.0, 1).map_err(compute("mixed spectrum"))?.eigenvalues[0];
    let last = *curve.values[0].last().expect("at least two samples");
    let mut checks = vec![
        Check::new(
            "curves non-increasing",
            curve.is_monotone(MONOTONE_TOL),
            format!("max relative increase {:.3e}", curve.max_violation()),
        ),
        Check::with(
            "strict decrease margin",
            Verdict::Pass,
            format!("min decrease between samples {:.6e}", curve.min_decrease()),
        ),
        Check::new("below Dirichlet", excess <= 1e-10, format!("max relative excess {excess:.3e}")),
    ];
    if c.mu_max > 0.0 {
        let ok = last < l0 - 1.0;
        checks.push(Check::with(
            "divergence trend",
            if ok { Verdict::Pass } else { Verdict::Warn },
            format!("lambda_1 at mu = {} is {last:.6e}, at mu = 0 {l0:.6e}", c.mu_max),
        ));
    }
    Ok(Outcome {
        experiment: "curves",
        csv,
        checks,
    })
}

/// Forward residuals for every Steklov pair; reverse residual and
/// multiplicities for the first member of each of the lowest `k` clusters.
pub fn duality(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let sys = main_system(cfg)?;
    let mut csv = String::from("lambda,index,steklov_mu,forward_residual,reverse_residual,steklov_mult,robin_mult\n");
    let mut checks = Vec::new();
    for lambda in lambdas(cfg, &sys)? {
        let (stek, forward) = duality_residuals(&sys, lambda).map_err(compute("duality"))?;
        let mut reverse = vec![None; stek.len()];
        for r in stek.clusters(CLUSTER_TOL).into_iter().take(cfg.k) {
            reverse[r.start] = Some(duality_check(&sys, lambda, r.start).map_err(compute("duality"))?);
        }
        for j in 0..stek.len() {
            let tail = match &reverse[j] {
                Some(r) => format!("{},{},{}", e(r.reverse_residual), r.steklov_multiplicity, r.robin_multiplicity),
                None => ",,".into(),
            };
            writeln!(csv, "{},{},{},{},{tail}", e(lambda), j + 1, e(stek.eigenvalues[j]), e(forward[j])).unwrap();
        }
        let fmax = forward.iter().copied().fold(0.0, f64::max);
        checks.push(Check::new(
            format!("forward residuals at lambda = {lambda:.6}"),
            fmax <= DUALITY_TOL,
            format!("max over {} pairs {fmax:.3e}", forward.len()),
        ));
        let checked: Vec<_> = reverse.iter().flatten().collect();
        let rmax = checked.iter().map(|r| r.reverse_residual).fold(0.0, f64::max);
        let mult = checked.iter().all(|r| r.multiplicities_agree());
        checks.push(Check::new(
            format!("reverse and multiplicity at lambda = {lambda:.6}"),
            rmax <= DUALITY_TOL && mult,
            format!("{} clusters, max reverse residual {rmax:.3e}, multiplicities agree = {mult}", checked.len()),
        ));
    }
    Ok(Outcome {
        experiment: "duality",
        csv,
        checks,
    })
}

/// Per-index reduction of `λ_kᴰ − λ_k^μ` per decade of |μ|.
pub fn limit_ratios(study: &dtnlab::spectral::LimitStudy) -> Vec<f64> {
    let mut out = Vec::new();
    for w in study.rows.windows(2) {
        let decades = (w[1].mu / w[0].mu).abs().log10();
        for (a, b) in w[0].gaps.iter().zip(&w[1].gaps) {
            out.push((a / b).powf(1.0 / decades));
        }
    }
    out
}

pub fn limit(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let sys = main_system(cfg)?;
    let study = dirichlet_limit_study(&sys, cfg.limit.k, &cfg.limit.mu).map_err(compute("Dirichlet limit"))?;
    let mut csv = String::from("mu,index,robin,dirichlet,gap\n");
    for row in &study.rows {
        for j in 0..row.eigenvalues.len() {
            writeln!(
                csv,
                "{},{},{},{},{}",
                e(row.mu),
                j + 1,
                e(row.eigenvalues[j]),
                e(study.dirichlet[j]),
                e(row.gaps[j])
            )
            .unwrap();
        }
    }
    let ratios = limit_ratios(&study);
    let worst = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let checks = vec![
        Check::new("gaps positive", study.gaps_positive(), format!("{} rows", study.rows.len())),
        Check::new(
            "gap reduction per decade",
            ratios.iter().all(|&r| r >= LIMIT_RATIO),
            format!("smallest factor {worst:.3}"),
        ),
    ];
    Ok(Outcome {
        experiment: "limit",
        csv,
        checks,
    })
}

fn report_check(name: &str, result: Result<Report, SemigroupError>, reports: &mut Vec<Report>) -> Result<Check, RunError> {
    match result {
        Ok(r) => {
            let check = Check::with(
                name,
                r.verdict(),
                format!("{} rows, max violation {:.3e}, min entry {:.3e}", r.rows.len(), r.max_violation(), r.min_entry()),
            );
            reports.push(r);
            Ok(check)
        }
        Err(SemigroupError::Hypothesis(msg)) => Ok(Check::skipped(name, msg)),
        Err(err) => Err(RunError::Compute(format!("{name}: {err}"))),
    }
}

pub fn semigroup(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let s = &cfg.semigroup;
    let mesh = Arc::new(cfg.domain.mesh()?);
    let sys = cfg.system(mesh.clone(), &cfg.gamma0, &cfg.coefficients_a())?;
    let sg = match BoundarySemigroup::new(&sys, s.lambda, s.lumped) {
        Ok(sg) => sg,
        Err(SemigroupError::Hypothesis(msg)) => {
            return Ok(Outcome {
                experiment: "semigroup",
                csv: dtnlab::semigroup::REPORT_CSV_HEADER.to_string() + "\n",
                checks: vec![Check::skipped("semigroup", msg)],
            })
        }
        Err(err) => return Err(RunError::Compute(format!("semigroup: {err}"))),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reports = Vec::new();
    let mut checks = vec![
        report_check("positivity", positivity_report(&sg, &s.t, s.trials, &mut rng), &mut reports)?,
        report_check("submarkov", submarkov_report(&sg, &s.t, s.trials, &mut rng), &mut reports)?,
        report_check("growth", growth_report(&sg, &s.t, s.trials, &mut rng), &mut reports)?,
        report_check("lp contraction", lp_contraction_report(&sg, &[1.0, 2.0, f64::INFINITY], &s.t), &mut reports)?,
    ];
    if let Some(g) = &s.gamma0_tilde {
        let tilde = cfg.system(mesh.clone(), g, &cfg.coefficients_a())?;
        let sg_tilde = BoundarySemigroup::new(&tilde, s.lambda, s.lumped);
        let result = sg_tilde.and_then(|t| domination_report(&sg, &t, &s.t, s.trials, &mut rng));
        if matches!(result, Err(SemigroupError::NotNested)) {
            return Err(ConfigError::Invalid("semigroup.gamma0_tilde must contain gamma0".into()).into());
        }
        checks.push(report_check("domination", result, &mut reports)?);
    }
    if let Some(b) = cfg.coefficients_b() {
        let sys_b = cfg.system(mesh, &cfg.gamma0, &b)?;
        let result = BoundarySemigroup::new(&sys_b, s.lambda, s.lumped)
            .and_then(|sb| potential_monotonicity_report(&sg, &sb, &s.t, s.trials, &mut rng));
        checks.push(report_check("potential monotonicity", result, &mut reports)?);
    }
    let mut buf = Vec::new();
    write_reports_csv(&reports, &mut buf).expect("writing to memory");
    Ok(Outcome {
        experiment: "semigroup",
        csv: String::from_utf8(buf).expect("ASCII output"),
        checks,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeLevel {
    pub level: usize,
    pub dofs: usize,
    pub h: f64,
    pub dtn_defect: f64,
    pub max_gap: f64,
    pub self_residual: f64,
}

/// The D-t-N defect and Robin eigenvalue gap between `a` and its transport
/// by the gauge diffeomorphism on successively refined meshes.
pub fn gauge_levels(cfg: &ExperimentConfig) -> Result<Vec<GaugeLevel>, RunError> {
    let g = &cfg.gauge;
    let domain = g.domain.as_ref().unwrap_or(&cfg.domain);
    let a = cfg.coefficients_a();
    let mut levels = Vec::new();
    for level in 0..=g.refinements {
        let mesh = Arc::new(domain.mesh_at(level)?);
        let b = cfg.gauge_coefficients(&mesh)?;
        let sys_a = cfg.system(mesh.clone(), &cfg.gamma0, &a)?;
        let sys_b = cfg.system(mesh.clone(), &cfg.gamma0, &b)?;
        let grid = default_lambda_grid(&sys_a, g.lambda_count).map_err(compute("λ grid"))?;
        let dtn_defect = dtn_equality_check(&sys_a, &sys_b, &grid).map_err(compute("D-t-N comparison"))?;
        let mut max_gap: f64 = 0.0;
        let mut self_residual: f64 = 0.0;
        for &mu in &g.mu {
            let k = g.k.min(sys_a.num_dofs());
            let r = match_and_unitary(&sys_a, &sys_b, mu, k).map_err(compute("eigenvalue matching"))?;
            max_gap = max_gap.max(r.max_gap());
            let own = match_and_unitary(&sys_a, &sys_a, mu, k).map_err(compute("eigenvalue matching"))?;
            self_residual = self_residual.max(own.conjugation_residual);
        }
        levels.push(GaugeLevel {
            level,
            dofs: sys_a.num_dofs(),
            h: mesh.h_max(),
            dtn_defect,
            max_gap,
            self_residual,
        });
    }
    Ok(levels)
}

pub fn gauge(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let levels = gauge_levels(cfg)?;
    let mut csv = String::from("level,dofs,h,dtn_defect,max_eigen_gap,self_conjugation_residual\n");
    for l in &levels {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            l.level,
            l.dofs,
            e(l.h),
            e(l.dtn_defect),
            e(l.max_gap),
            e(l.self_residual)
        )
        .unwrap();
    }
    let ratios = |f: fn(&GaugeLevel) -> f64| -> Vec<f64> { levels.windows(2).map(|w| f(&w[0]) / f(&w[1])).collect() };
    let show = |r: &[f64]| r.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(", ");
    let dr = ratios(|l| l.dtn_defect);
    let gr = ratios(|l| l.max_gap);
    let self_res = levels.iter().map(|l| l.self_residual).fold(0.0, f64::max);
    let checks = vec![
        Check::new("D-t-N defect decreases", dr.iter().all(|&r| r >= GAUGE_RATIO), format!("ratios [{}]", show(&dr))),
        Check::new("eigenvalue gap decreases", gr.iter().all(|&r| r >= GAUGE_RATIO), format!("ratios [{}]", show(&gr))),
        Check::new("self conjugation residual", self_res <= 1e-10, format!("{self_res:.3e}")),
    ];
    Ok(Outcome {
        experiment: "gauge",
        csv,
        checks,
    })
}
