//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use cusp_spectra::cusp_map::{
    composition_inequality_check, kps_closed_form, kps_quadrature, mrq_closed_form, mrq_quadrature,
    Polynomial2,
};
use cusp_spectra::eigen::{
    direct_eigensolve_p2, gradient_check, inverse_iteration, minimize_rayleigh, monotone_operator_check,
    SolverConfig,
};
use cusp_spectra::mesh::{build_cusp_mesh, default_kappa};
use cusp_spectra::param::transfer_exponent;
use cusp_spectra::quadrature::QuadConfig;
use cusp_spectra::sparse::dot;
use cusp_spectra::{DiscreteProblem, DomainSpec, ProblemParams, TransferWindow};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn problem(gamma1: f64, n: usize, p: f64, q: f64, alpha: f64) -> DiscreteProblem {
    let mesh = build_cusp_mesh(gamma1, n, default_kappa(gamma1)).expect("mesh");
    DiscreteProblem::new(mesh, ProblemParams::new(p, q, alpha)).expect("problem")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn reference_laplacian() -> Check {
    let pi2 = PI * PI;
    let d32 = direct_eigensolve_p2(&problem(1.0, 32, 2.0, 2.0, 0.0)).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let d64 = direct_eigensolve_p2(&problem(1.0, 64, 2.0, 2.0, 0.0)).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let (e32, e64) = ((d32.result.lambda - pi2).abs(), (d64.result.lambda - pi2).abs());
    let detail = format!(
        "lambda(64) = {:.6}, rel err {:.2e}, {secs:.1}s; error ratio 32→64 = {:.2}",
        d64.result.lambda,
        e64 / pi2,
        e32 / e64
    );
    ensure(e64 / pi2 <= 0.02 && secs < 60.0 && e32 / e64 >= 3.0, || detail.clone())?;
    Ok(detail)
}

fn oracle_equivalence() -> Check {
    let mut worst: f64 = 0.0;
    for g1 in [1.0, 2.0] {
        for alpha in [0.0, 0.5, -0.5] {
            let dp = problem(g1, 32, 2.0, 2.0, alpha);
            let it = inverse_iteration(&dp, &dp.default_start(), &SolverConfig::default())
                .map_err(|e| format!("γ1={g1} α={alpha}: {e}"))?;
            let d = direct_eigensolve_p2(&dp).map_err(|e| e.to_string())?;
            let r = rel(it.lambda, d.result.lambda);
            worst = worst.max(r);
            ensure(r <= 1e-6, || format!("γ1={g1} α={alpha}: relative gap {r:.2e}"))?;
            for w in it.mu_trace.windows(2) {
                ensure(w[1] <= w[0] + 1e-10 * w[0], || {
                    format!("γ1={g1} α={alpha}: mu increased {} → {}", w[0], w[1])
                })?;
            }
        }
    }
    Ok(format!("6 configurations, worst relative gap {worst:.2e}, mu traces nonincreasing"))
}

fn payne_weinberger() -> Check {
    let floor = PI * PI / 2.0;
    let mut lambdas = Vec::new();
    for n in [2, 4, 8, 16, 32, 64] {
        let dp = problem(1.0, n, 2.0, 2.0, 0.0);
        let it = inverse_iteration(&dp, &dp.default_start(), &SolverConfig::default()).map_err(|e| e.to_string())?;
        lambdas.push(it.lambda);
        if n <= 16 {
            lambdas.push(direct_eigensolve_p2(&dp).map_err(|e| e.to_string())?.result.lambda);
        }
    }
    let min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    ensure(min >= floor, || format!("lambda {min} < π²/2"))?;
    Ok(format!("{} solves, smallest lambda {min:.6} ≥ π²/2 = {floor:.6}", lambdas.len()))
}

fn run_cli(args: &[&str], threads: Option<&str>) -> Result<std::process::Output, String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cusp-spectra"));
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("CUSP_SPECTRA_THREADS", t);
    }
    cmd.output().map_err(|e| e.to_string())
}

fn sweep_csv(dir: &Path, extra: &[&str], threads: Option<&str>) -> Result<String, String> {
    let out = dir.to_str().unwrap();
    let mut args = vec!["sweep", "--out", out];
    args.extend_from_slice(extra);
    let o = run_cli(&args, threads)?;
    ensure(o.status.success(), || {
        format!("sweep exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr))
    })?;
    std::fs::read_to_string(dir.join("result.csv")).map_err(|e| e.to_string())
}

fn bound_consistency() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = sweep_csv(
        dir.path(),
        &[
            "--sweep-gamma1", "1.5,2,3",
            "--sweep-p", "1.8,2,2.5",
            "--q", "2",
            "--sweep-alpha=-0.5,0,1",
            "--N", "16",
            "--poincare", "numeric_lower",
            "--slack", "0.1",
        ],
        None,
    )?;
    let mut ok = 0;
    let mut min_ratio = f64::INFINITY;
    for line in csv.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        match f[9] {
            "ok" => {
                let ratio: f64 = f[7].parse().map_err(|_| format!("bad ratio in {line}"))?;
                min_ratio = min_ratio.min(ratio);
                ensure(ratio >= 0.9, || format!("ratio {ratio} < 1 − 0.1 at {line}"))?;
                ok += 1;
            }
            "infeasible" => {}
            other => return Err(format!("status {other} at {line}")),
        }
    }
    ensure(ok > 0, || "no feasible sweep point".into())?;
    Ok(format!("{ok} feasible points of 27, smallest ratio {min_ratio:.4} ≥ 0.9 (numeric_lower B, uncertified)"))
}

/// A random planar problem with an admissible map exponent `a` and `s`.
fn sample_as(rng: &mut ChaCha8Rng) -> Option<(DomainSpec, ProblemParams, f64, f64)> {
    let g1 = rng.gen_range(1.0..4.0);
    let spec = DomainSpec::planar(g1).ok()?;
    let p = rng.gen_range(1.2..3.0);
    let alpha = rng.gen_range(-1.5..2.0 * (p - 1.0));
    let w = TransferWindow::from_exponents(&spec, p, alpha).ok()?;
    let a = rng.gen_range(w.a_lo..w.a_hi);
    let t = transfer_exponent(a, p, alpha, &spec);
    let hi = p.min(t).min(2.0);
    if hi <= 1.01 {
        return None;
    }
    let s = rng.gen_range(1.0..hi);
    let params = ProblemParams::new(p, 2.0, alpha);
    kps_closed_form(a, s, &params, &spec).ok()?;
    Some((spec, params, a, s))
}

fn closed_form_vs_quadrature() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = QuadConfig::default();
    let (mut done, mut worst_m, mut worst_k) = (0, 0.0f64, f64::NEG_INFINITY);
    while done < 50 {
        let Some((spec, params, a, s)) = sample_as(&mut rng) else {
            continue;
        };
        let kq = kps_quadrature(a, s, &params, &spec, &cfg).map_err(|e| e.to_string())?;
        let kc = kps_closed_form(a, s, &params, &spec).map_err(|e| e.to_string())?;
        worst_k = worst_k.max(kq / kc - 1.0);
        ensure(kq <= kc * (1.0 + 1e-9), || format!("K quadrature {kq} > closed form {kc} at a={a} s={s}"))?;
        let r: f64 = rng.gen_range(1.5..5.0);
        let q_hi = r.min(a * spec.gamma() * r / 2.0);
        if q_hi > 1.05 {
            let q = rng.gen_range(1.01..q_hi - 0.01);
            let mq = mrq_quadrature(a, r, q, &spec, &cfg).map_err(|e| e.to_string())?;
            let mc = mrq_closed_form(a, r, q, &spec).map_err(|e| e.to_string())?;
            worst_m = worst_m.max(rel(mq, mc));
            ensure(rel(mq, mc) <= 1e-6, || format!("M mismatch {mq} vs {mc} at a={a} r={r} q={q}"))?;
        }
        done += 1;
    }
    Ok(format!(
        "50 points: M relative gap ≤ {worst_m:.1e}, K quadrature/closed form − 1 ≤ {worst_k:.2e}"
    ))
}

fn operator_properties() -> Check {
    let mut notes = Vec::new();
    for p in [1.5, 2.0, 3.0] {
        let dp = problem(2.0, 8, p, 2.0, 0.5);
        for k in 0..500u64 {
            let u = dp.random_start(2 * k);
            let v = dp.random_start(2 * k + 1);
            let (xu, xv) = (dp.x_norm(&u), dp.x_norm(&v));
            let auv = dp.apply_a(&u, &v);
            for t in [-2.0f64, -1.0, 0.5, 3.0] {
                let tu: Vec<f64> = u.iter().map(|x| t * x).collect();
                let lhs = dp.apply_a(&tu, &v);
                let rhs = t.abs().powf(p - 2.0) * t * auv;
                let scale = t.abs().powf(p - 1.0) * xu.powf(p - 1.0) * xv;
                ensure((lhs - rhs).abs() <= 1e-12 * scale, || format!("H1 p={p} pair {k} t={t}"))?;
                let bl = dp.apply_b(&tu, &v);
                let br = t * dp.apply_b(&u, &v);
                let bscale = t.abs() * (dp.apply_b(&u, &u) * dp.apply_b(&v, &v)).sqrt();
                ensure((bl - br).abs() <= 1e-14 * bscale, || format!("H2 p={p} pair {k} t={t}"))?;
            }
            ensure(auv <= xu.powf(p - 1.0) * xv * (1.0 + 1e-12), || format!("H3 p={p} pair {k}"))?;
            let two_u: Vec<f64> = u.iter().map(|x| 2.0 * x).collect();
            let eq = dp.apply_a(&u, &two_u);
            ensure(rel(eq, 2.0 * xu.powf(p)) <= 1e-12, || format!("H3 equality p={p} pair {k}"))?;
            let m = monotone_operator_check(&dp, &u, &v);
            ensure(m >= -1e-12 * xu.max(xv).powf(p), || format!("monotonicity p={p} pair {k}: {m}"))?;
        }
        for q in [1.5, 2.0, 2.2] {
            let dq = problem(2.0, 8, p, q, 0.5);
            for k in 0..500u64 {
                let u = dq.random_start(7 * k + 1);
                let v = dq.random_start(7 * k + 2);
                let b = dot(&dq.bq_vector(&u), &v);
                let bound = dq.lq_norm(&u).powf(q - 1.0) * dq.lq_norm(&v);
                ensure(b <= bound * (1.0 + 1e-12), || format!("H4 p={p} q={q} pair {k}"))?;
            }
        }
        let u = dp.random_start(99);
        let (err, h, limit) = if p == 1.5 {
            let lin: Vec<f64> = dp
                .mesh()
                .vertices
                .iter()
                .zip(&u)
                .map(|(x, r)| x[0] + 2.0 * x[1] + 0.01 * r)
                .collect();
            (gradient_check(&dp, &lin, 1e-6, 50, 3), 1e-6, 1e-4)
        } else {
            (gradient_check(&dp, &u, 1e-5, 50, 2), 1e-5, 1e-5)
        };
        ensure(err <= limit, || format!("gradient check p={p}: {err:.2e} > {limit:.0e}"))?;
        notes.push(format!("p={p}: fd err {err:.1e} (h={h:.0e})"));
    }
    Ok(format!("H1–H4 and monotonicity on 500 pairs per p; {}", notes.join(", ")))
}

fn constraint_and_minmax() -> Check {
    let cfg = SolverConfig::default();
    let mut worst_c: f64 = 0.0;
    for (g1, p, q, alpha) in [(2.0, 2.0, 2.0, 0.5), (3.0, 1.8, 1.5, 0.0), (1.5, 3.0, 3.0, -0.5), (2.0, 2.5, 2.0, 1.0)] {
        let dp = problem(g1, 12, p, q, alpha);
        let res = minimize_rayleigh(&dp, &dp.default_start(), &cfg).map_err(|e| format!("{g1} {p} {q} {alpha}: {e}"))?;
        // constraint_residual is already divided by ‖u‖_q^{q−1}|Ω|
        worst_c = worst_c.max(res.constraint_residual);
        ensure(res.constraint_residual <= 1e-8, || format!("constraint residual {:e}", res.constraint_residual))?;
        for k in 0..100 {
            let v = dp.project_constraint(&dp.random_start(500 + k)).map_err(|e| e.to_string())?;
            let rq = dp.rayleigh_quotient(&v).map_err(|e| e.to_string())?;
            ensure(res.lambda <= rq + 1e-10, || format!("lambda {} > R(v) = {rq}", res.lambda))?;
        }
    }
    Ok(format!("4 configurations × 100 functions; worst scaled constraint residual {worst_c:.1e}"))
}

fn composition_inequality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = QuadConfig::default();
    let mut samples = Vec::new();
    while samples.len() < 5 {
        if let Some(x) = sample_as(&mut rng) {
            samples.push(x);
        }
    }
    let mut worst: f64 = 0.0;
    for (spec, params, a, s) in &samples {
        for _ in 0..20 {
            let mut terms = Vec::new();
            for i in 0..=3u32 {
                for j in 0..=(3 - i) {
                    if rng.gen_bool(0.5) {
                        terms.push((i, j, rng.gen_range(-1.0..1.0)));
                    }
                }
            }
            terms.push((1, 1, rng.gen_range(0.5..1.5)));
            let f = Polynomial2::new(terms);
            let r = composition_inequality_check(&f, *a, *s, params, spec, &cfg, 1e-6).map_err(|e| e.to_string())?;
            worst = worst.max(r.lhs / r.rhs);
            ensure(r.holds, || format!("‖∇(f∘φ)‖ = {} > K‖∇f‖ = {} at a={a} s={s}", r.lhs, r.rhs))?;
        }
    }
    Ok(format!("100 checks over 5 (a, s) samples, largest lhs/rhs {worst:.4}"))
}

fn determinism() -> Check {
    let grid = [
        "--sweep-gamma1", "1.5,2,3",
        "--sweep-alpha=-0.5,0,1",
        "--N", "8",
        "--poincare", "user",
        "--b-value", "0.5",
    ];
    let d = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = sweep_csv(&d.path().join("a"), &grid, None)?;
    let b = sweep_csv(&d.path().join("b"), &grid, Some("3"))?;
    let c = sweep_csv(&d.path().join("c"), &grid, Some("1"))?;
    ensure(a == b && a == c, || "sweep CSVs differ between runs".into())?;
    let mut meshes = 0;
    let mut worst: f64 = 0.0;
    for g1 in [1.0f64, 1.25, 1.5, 2.0, 3.0, 4.0] {
        for n in [2, 3, 5, 8, 16, 32, 64] {
            for kappa in [1.0, default_kappa(g1), 2.5] {
                let m = build_cusp_mesh(g1, n, kappa).map_err(|e| e.to_string())?;
                let err = (m.total_area() - 1.0 / (g1 + 1.0)).abs();
                worst = worst.max(err);
                ensure(err <= 1e-10, || format!("area error {err:e} at γ1={g1} N={n} κ={kappa}"))?;
                meshes += 1;
            }
        }
    }
    Ok(format!("3 sweeps byte-identical ({} bytes); {meshes} meshes, area error ≤ {worst:.1e}", a.len()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 9] = [
        (1, "reference Laplacian", reference_laplacian),
        (2, "iteration matches direct solve", oracle_equivalence),
        (3, "Payne–Weinberger floor", payne_weinberger),
        (4, "bound consistency sweep", bound_consistency),
        (5, "closed forms vs quadrature", closed_form_vs_quadrature),
        (6, "operator properties", operator_properties),
        (7, "constraint and min-max", constraint_and_minmax),
        (8, "composition inequality", composition_inequality),
        (9, "determinism and mesh area", determinism),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {n} PASS  {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {n} FAIL  {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 9 acceptance criteria passed");
}
