use std::fmt::Write as _;

use cusp_spectra::bound::{self, PoincareStrategy};
use cusp_spectra::eigen::{direct_eigensolve_p2, inverse_iteration, minimize_rayleigh};
use cusp_spectra::mesh::{build_cusp_mesh, build_reference_mesh, mesh_quality, MeshQuality};
use cusp_spectra::param::{validate_problem, TransferWindow};
use cusp_spectra::{
    BoundReport, DiscreteProblem, DomainSpec, EigenResult, GradedMesh, PoincareProvider,
    ProblemParams, ValidatedProblem,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Command, Method, RunConfig};
use crate::error::CliError;
use crate::output::{fmt_f64, to_json, Outputs};

/// What a command produced: staged files, the name of the primary one and a
/// short human-readable summary.
#[derive(Debug)]
pub struct Report {
    pub outputs: Outputs,
    pub primary: &'static str,
    pub summary: String,
}

pub fn execute(cfg: &RunConfig) -> Result<Report, CliError> {
    match cfg.command.unwrap_or(Command::Solve) {
        Command::Bound => cmd_bound(cfg),
        Command::Solve => cmd_solve(cfg),
        Command::Verify => cmd_verify(cfg),
        Command::Sweep => cmd_sweep(cfg),
        Command::MeshInfo => cmd_mesh_info(cfg),
    }
}

fn spec_for(gamma1: f64) -> Result<DomainSpec, CliError> {
    Ok(DomainSpec::planar(gamma1)?)
}

/// Window first: it depends only on `(p, α)` and gives the more specific
/// diagnosis when the strict chains also fail.
fn validated(spec: &DomainSpec, p: f64, q: f64, alpha: f64) -> Result<ValidatedProblem, CliError> {
    TransferWindow::from_exponents(spec, p, alpha)?;
    Ok(validate_problem(spec, p, q, alpha)?)
}

fn provider(cfg: &RunConfig, r: f64, s: f64) -> Result<PoincareProvider, CliError> {
    let pc = &cfg.poincare;
    let ref_mesh = match pc.strategy {
        PoincareStrategy::NumericLower => Some(build_reference_mesh(pc.n, 1.0)?),
        _ => None,
    };
    let diameter = std::f64::consts::SQRT_2;
    Ok(bound::poincare_constant(
        pc.strategy,
        r,
        s,
        pc.value.map(|v| (v, pc.certified)),
        ref_mesh.as_ref(),
        diameter,
        &pc.numeric,
    )?)
}

/// Optimize `(a, s, r)` (or take the fixed point) and attach the Poincaré
/// constant. Strategies whose value depends on `(r, s)` are evaluated once,
/// at the chosen point; the search itself runs with `B = 1`.
pub fn bound_report(cfg: &RunConfig, spec: &DomainSpec, prob: &ValidatedProblem) -> Result<BoundReport, CliError> {
    let user = cfg.poincare.strategy == PoincareStrategy::User;
    let unit = if user {
        provider(cfg, 2.0, 2.0)?
    } else {
        PoincareProvider::user(1.0, false)
    };
    let rep = match &cfg.fixed {
        Some(bp) => bound::eigen_bound(prob, spec, bp, &unit)?,
        None => bound::optimize_bound(prob, spec, &unit, &cfg.search)?,
    };
    if user {
        return Ok(rep);
    }
    let b = provider(cfg, rep.params.r, rep.params.s)?;
    let mut out = bound::eigen_bound(prob, spec, &rep.params, &b)?;
    out.search = rep.search;
    if cfg.fixed.is_none() {
        out.notes.push("(a, s, r) optimized with B = 1, then B evaluated at the chosen (r, s)".into());
    }
    Ok(out)
}

pub fn build_mesh(cfg: &RunConfig, gamma1: f64) -> Result<GradedMesh, CliError> {
    Ok(build_cusp_mesh(gamma1, cfg.mesh.n, cfg.kappa(gamma1))?)
}

pub fn solve_eigen(cfg: &RunConfig, gamma1: f64, params: ProblemParams) -> Result<(EigenResult, GradedMesh), CliError> {
    let spec = spec_for(gamma1)?;
    params.check_solvable(&spec)?;
    let mesh = build_mesh(cfg, gamma1)?;
    let dp = DiscreteProblem::new(mesh.clone(), params)?;
    let result = match cfg.solver.method {
        Method::Direct => direct_eigensolve_p2(&dp)?.result,
        Method::Iterative => {
            let u0 = match cfg.solver.start_seed {
                Some(seed) => dp.random_start(seed),
                None => dp.default_start(),
            };
            let sc = cfg.solver.solver_config();
            if params.q == 2.0 {
                inverse_iteration(&dp, &u0, &sc)?
            } else {
                minimize_rayleigh(&dp, &u0, &sc)?
            }
        }
    };
    Ok((result, mesh))
}

fn eigenfunction_text(mesh: &GradedMesh, u: &[f64]) -> String {
    let mut s = String::from("x1 x2 u\n");
    for (v, x) in mesh.vertices.iter().zip(u) {
        let _ = writeln!(s, "{} {} {}", fmt_f64(v[0]), fmt_f64(v[1]), fmt_f64(*x));
    }
    s
}

fn problem_of(cfg: &RunConfig) -> ProblemParams {
    ProblemParams::new(cfg.problem.p, cfg.problem.q, cfg.problem.alpha)
}

fn cmd_bound(cfg: &RunConfig) -> Result<Report, CliError> {
    let spec = spec_for(cfg.domain.gamma1)?;
    let pr = &cfg.problem;
    let prob = validated(&spec, pr.p, pr.q, pr.alpha)?;
    let rep = bound_report(cfg, &spec, &prob)?;
    let mut outputs = Outputs::default();
    outputs.add("result.json", to_json(&rep)?);
    let summary = bound_summary(&rep);
    outputs.add("summary.txt", summary.clone());
    Ok(Report {
        outputs,
        primary: "result.json",
        summary,
    })
}

fn bound_summary(rep: &BoundReport) -> String {
    let bp = rep.params;
    let mut s = String::new();
    let _ = writeln!(s, "1/lambda <= {}  (lambda >= {})", fmt_f64(rep.inv_lambda_bound), fmt_f64(rep.lambda_lower_bound));
    let _ = writeln!(s, "a = {}  s = {}  r = {}", fmt_f64(bp.a), fmt_f64(bp.s), fmt_f64(bp.r));
    let _ = writeln!(
        s,
        "K_ps = {}  M_rq = {}  B_rs = {} ({:?}, certified: {})",
        fmt_f64(rep.k_ps),
        fmt_f64(rep.m_rq),
        fmt_f64(rep.b_rs),
        rep.poincare.strategy,
        rep.certified
    );
    for n in &rep.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}

fn cmd_solve(cfg: &RunConfig) -> Result<Report, CliError> {
    let (res, mesh) = solve_eigen(cfg, cfg.domain.gamma1, problem_of(cfg))?;
    let mut outputs = Outputs::default();
    outputs.add("result.json", to_json(&res)?);
    outputs.add("eigenfunction.txt", eigenfunction_text(&mesh, &res.u));
    outputs.add("mesh.txt", mesh.to_text());
    let summary = format!(
        "lambda = {}  iterations = {}  residual = {:e}  constraint residual = {:e}\n",
        fmt_f64(res.lambda),
        res.iterations,
        res.residual,
        res.constraint_residual
    );
    Ok(Report {
        outputs,
        primary: "result.json",
        summary,
    })
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub lambda_numeric: f64,
    pub lambda_lower_bound: f64,
    pub inv_lambda_bound: f64,
    /// `lambda_numeric · inv_lambda_bound`; at least 1 when the bound holds.
    pub ratio: f64,
    pub certified: bool,
    pub slack: f64,
    pub holds: bool,
    pub note: Option<String>,
    pub bound: BoundReport,
    pub eigen: EigenResult,
}

pub fn verify(cfg: &RunConfig, gamma1: f64, p: f64, q: f64, alpha: f64) -> Result<VerifyReport, CliError> {
    let spec = spec_for(gamma1)?;
    let prob = validated(&spec, p, q, alpha)?;
    let rep = bound_report(cfg, &spec, &prob)?;
    let (eig, _) = solve_eigen(cfg, gamma1, prob.params())?;
    let slack = cfg
        .verify
        .slack
        .unwrap_or(if rep.certified { 0.0 } else { 0.1 });
    let ratio = eig.lambda * rep.inv_lambda_bound;
    Ok(VerifyReport {
        lambda_numeric: eig.lambda,
        lambda_lower_bound: rep.lambda_lower_bound,
        inv_lambda_bound: rep.inv_lambda_bound,
        ratio,
        certified: rep.certified,
        slack,
        holds: ratio >= 1.0 - slack,
        note: (!rep.certified).then(|| "non-certified B estimate; informational only".to_string()),
        bound: rep,
        eigen: eig,
    })
}

fn cmd_verify(cfg: &RunConfig) -> Result<Report, CliError> {
    let pr = &cfg.problem;
    let v = verify(cfg, cfg.domain.gamma1, pr.p, pr.q, pr.alpha)?;
    let mut summary = format!(
        "lambda = {}  1/lambda bound = {}  ratio = {}  slack = {}  holds = {}\n",
        fmt_f64(v.lambda_numeric),
        fmt_f64(v.inv_lambda_bound),
        fmt_f64(v.ratio),
        v.slack,
        v.holds
    );
    if let Some(n) = &v.note {
        let _ = writeln!(summary, "note: {n}");
    }
    let mut outputs = Outputs::default();
    outputs.add("result.json", to_json(&v)?);
    outputs.add("summary.txt", summary.clone());
    Ok(Report {
        outputs,
        primary: "result.json",
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    Infeasible,
    Nonconverged,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Infeasible => "infeasible",
            RowStatus::Nonconverged => "nonconverged",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub gamma1: f64,
    pub p: f64,
    pub q: f64,
    pub alpha: f64,
    pub n: usize,
    pub verify: Option<(f64, f64, f64, bool)>,
    pub status: RowStatus,
    pub detail: String,
}

pub const CSV_HEADER: &str = "gamma1,p,q,alpha,N,lambda,inv_lambda_bound,ratio,certified,status";

impl SweepRow {
    pub fn csv(&self) -> String {
        let (l, b, r, c) = match self.verify {
            Some((l, b, r, c)) => (fmt_f64(l), fmt_f64(b), fmt_f64(r), c.to_string()),
            None => Default::default(),
        };
        format!(
            "{},{},{},{},{},{l},{b},{r},{c},{}",
            fmt_f64(self.gamma1),
            fmt_f64(self.p),
            fmt_f64(self.q),
            fmt_f64(self.alpha),
            self.n,
            self.status.as_str()
        )
    }
}

/// Grid points in lexicographic `(γ_1, p, q, α)` order.
pub fn sweep_grid(cfg: &RunConfig) -> Vec<[f64; 4]> {
    let or = |v: &Vec<f64>, base: f64| if v.is_empty() { vec![base] } else { v.clone() };
    let s = &cfg.sweep;
    let mut pts = Vec::new();
    for &g in &or(&s.gamma1, cfg.domain.gamma1) {
        for &p in &or(&s.p, cfg.problem.p) {
            for &q in &or(&s.q, cfg.problem.q) {
                for &a in &or(&s.alpha, cfg.problem.alpha) {
                    pts.push([g, p, q, a]);
                }
            }
        }
    }
    pts
}

pub fn sweep_row(cfg: &RunConfig, [gamma1, p, q, alpha]: [f64; 4]) -> SweepRow {
    let (verify, status, detail) = match verify(cfg, gamma1, p, q, alpha) {
        Ok(v) => (
            Some((v.lambda_numeric, v.inv_lambda_bound, v.ratio, v.certified)),
            RowStatus::Ok,
            String::new(),
        ),
        Err(e @ CliError::Nonconverged(_)) => (None, RowStatus::Nonconverged, e.to_string()),
        Err(e) => (None, RowStatus::Infeasible, e.to_string()),
    };
    SweepRow {
        gamma1,
        p,
        q,
        alpha,
        n: cfg.mesh.n,
        verify,
        status,
        detail,
    }
}

fn cmd_sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    let grid = sweep_grid(cfg);
    let rows: Vec<SweepRow> = grid.par_iter().map(|&pt| sweep_row(cfg, pt)).collect();
    if rows.iter().all(|r| r.status == RowStatus::Infeasible) {
        let first = rows.first().map(|r| r.detail.clone()).unwrap_or_default();
        return Err(CliError::AllInfeasible(format!("{} points; first: {first}", rows.len())));
    }
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let mut summary = String::new();
    for r in &rows {
        csv.push_str(&r.csv());
        csv.push('\n');
        if r.status != RowStatus::Ok {
            let _ = writeln!(
                summary,
                "gamma1={} p={} q={} alpha={}: {}: {}",
                r.gamma1,
                r.p,
                r.q,
                r.alpha,
                r.status.as_str(),
                r.detail
            );
        }
    }
    let ok = rows.iter().filter(|r| r.status == RowStatus::Ok).count();
    let _ = writeln!(summary, "{ok} of {} sweep points ok", rows.len());
    let mut outputs = Outputs::default();
    outputs.add("result.csv", csv);
    Ok(Report {
        outputs,
        primary: "result.csv",
        summary,
    })
}

#[derive(Debug, Serialize)]
pub struct MeshReport {
    pub gamma1: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub kappa: f64,
    pub vertices: usize,
    pub triangles: usize,
    pub boundary_edges: usize,
    pub total_area: f64,
    pub exact_area: f64,
    pub area_error: f64,
    pub polygon_gap: f64,
    pub diameter: f64,
    pub quality: MeshQuality<f64>,
}

fn cmd_mesh_info(cfg: &RunConfig) -> Result<Report, CliError> {
    let g1 = cfg.domain.gamma1;
    spec_for(g1)?;
    let mesh = build_mesh(cfg, g1)?;
    let boundary_edges = mesh.validate()?;
    let rep = MeshReport {
        gamma1: g1,
        n: cfg.mesh.n,
        kappa: mesh.kappa,
        vertices: mesh.num_vertices(),
        triangles: mesh.num_triangles(),
        boundary_edges,
        total_area: mesh.total_area(),
        exact_area: mesh.exact_area(),
        area_error: (mesh.total_area() - mesh.exact_area()).abs(),
        polygon_gap: mesh.polygon_gap(),
        diameter: mesh.diameter(),
        quality: mesh_quality(&mesh),
    };
    let summary = format!(
        "{} vertices, {} triangles, area {} (exact {}), min angle {:.3} deg\n",
        rep.vertices,
        rep.triangles,
        fmt_f64(rep.total_area),
        fmt_f64(rep.exact_area),
        rep.quality.min_angle
    );
    let mut outputs = Outputs::default();
    outputs.add("result.json", to_json(&rep)?);
    outputs.add("mesh.txt", mesh.to_text());
    Ok(Report {
        outputs,
        primary: "result.json",
        summary,
    })
}
