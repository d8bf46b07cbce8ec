//! The ten acceptance criteria, run in order on one thread of the harness so
//! the runtime limits are not distorted by neighbouring tests. Each prints a
//! single PASS/FAIL line; the test fails if any criterion does.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use cpflow::channel::{
    check_symmetry_cancellation, solve_linearized, symmetry_defect, ChannelSolver, ModalField, SymmetryClass,
};
use cpflow::nonlinear::{
    measure_contraction, measure_embedding, measure_kappa, picard_iterate, random_stream_function,
    uniqueness_probe, DeltaWindow, PicardConfig, PicardMap, SampleConfig,
};
use cpflow::os_mode::{apriori_ratio, estimate_ratio, poincare_ratio, solve_os_mode, ModeOperator};
use cpflow::spectrum::{at_sample_grid, kernel_witness, neutral_search, small_at_certificate, NeutralConfig, NeutralPoint};
use cpflow::{GridFunction, Profile, SpectralGrid};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn grid(n: usize) -> Arc<SpectralGrid> {
    SpectralGrid::shared(n).unwrap()
}

fn poiseuille() -> Profile {
    Profile::poiseuille_for_flux(4.0).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn random_h(rng: &mut impl Rng, g: &Arc<SpectralGrid>) -> GridFunction {
    let c: Vec<Complex64> = (0..8)
        .map(|k| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) / (1.0 + k as f64).powi(2))
        .collect();
    GridFunction::from_fn(g.clone(), |y| {
        let t = y.clamp(-1.0, 1.0).acos();
        c.iter().enumerate().map(|(k, ck)| ck * (k as f64 * t).cos()).sum()
    })
}

fn poincare() -> Outcome {
    let g = grid(64);
    let r = poincare_ratio(&GridFunction::from_real_fn(g.clone(), |y| (PI * y / 2.0).cos()));
    let bound = PI * PI / 4.0;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let c: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sigma = GridFunction::from_real_fn(g.clone(), |y| {
            (1.0 - y * y) * c.iter().rev().fold(0.0, |acc, a| acc * y + a)
        });
        worst = worst.min(poincare_ratio(&sigma));
    }
    Outcome {
        pass: (r - bound).abs() <= 1e-8 && worst >= bound - 1e-8,
        detail: format!("cos ratio - pi^2/4 = {:.2e}, min random ratio = {worst:.6}", r - bound),
    }
}

fn manufactured_mode() -> Outcome {
    let g = grid(48);
    let p = poiseuille();
    let mut worst: f64 = 0.0;
    for xi in [0.5, 1.0, 5.0] {
        // φ* = (1-y²)², φ*'' = 12y² - 4, φ*'''' = 24
        let h = GridFunction::from_fn(g.clone(), |y| {
            let phi = (1.0 - y * y).powi(2);
            let d2 = 12.0 * y * y - 4.0;
            let real = 24.0 - 2.0 * xi * xi * d2 + xi.powi(4) * phi;
            let bracket = p.f(y) * (d2 - xi * xi * phi) - 6.0 * p.a() * phi;
            Complex64::new(real, -xi * bracket)
        });
        let sol = solve_os_mode(&p, xi, &h, &g).unwrap();
        for (j, &y) in g.nodes().iter().enumerate() {
            worst = worst.max((sol.phi.values()[j] - (1.0 - y * y).powi(2)).norm());
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("max error {worst:.2e}"),
    }
}

/// Returns the outcome and the largest ratio, which criterion 10 re-measures.
fn uniform_estimate() -> (Outcome, f64) {
    let g = grid(64);
    let p = poiseuille();
    let xis: Vec<f64> = (0..40).map(|i| 0.05 * 1000f64.powf(i as f64 / 39.0)).collect();
    let ops: Vec<ModeOperator> = xis.iter().map(|&xi| ModeOperator::new(p, xi, g.clone()).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let (mut bound, mut spread, mut min_bound, mut min_spread) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..5 {
        let h = random_h(&mut rng, &g);
        let sols: Vec<_> = ops.iter().map(|op| op.solve(&h).unwrap()).collect();
        let mut ratio: Vec<f64> = sols.iter().map(|s| estimate_ratio(s, &h)).collect();
        let mut lesser: Vec<f64> = sols
            .iter()
            .map(|s| {
                let (a, b) = apriori_ratio(s, &h);
                a.min(b)
            })
            .collect();
        ratio.sort_by(f64::total_cmp);
        lesser.sort_by(f64::total_cmp);
        bound = bound.max(ratio[39]);
        spread = spread.max(ratio[39] / ratio[20]);
        min_bound = min_bound.max(lesser[39]);
        min_spread = min_spread.max(lesser[39] / lesser[20]);
    }
    (
        Outcome {
            pass: bound.is_finite() && min_bound <= bound && spread <= 10.0,
            detail: format!(
                "lhs/min(bounds): max {bound:.4e}, max/median {spread:.2}; min of ratios: max {min_bound:.4e}, max/median {min_spread:.1}"
            ),
        },
        bound,
    )
}

fn linear_channel() -> Outcome {
    let p = poiseuille();
    let g = grid(48);
    // v = sin x ∂y b, w = -cos x b with b = (1-y²)², pressure q = cos x y²
    let force = ModalField::force(1.0, 8, g.clone(), |x, y| {
        let (s, c) = x.sin_cos();
        let b = (1.0 - y * y).powi(2);
        let b1 = -4.0 * y + 4.0 * y.powi(3);
        let b2 = -4.0 + 12.0 * y * y;
        let b3 = 24.0 * y;
        let (f, fp) = (p.f(y), p.fp(y));
        (
            s * b1 - s * b3 - c * b * fp + f * c * b1 - s * y * y,
            -c * b + c * b2 + f * s * b + 2.0 * y * c,
        )
    })
    .unwrap();
    let field = solve_linearized(&p, &force, &g, 8).unwrap();
    let mut err: f64 = 0.0;
    for (i, &x) in field.x.iter().enumerate() {
        for (j, &y) in g.nodes().iter().enumerate() {
            err = err.max((field.v[(i, j)] - x.sin() * (-4.0 * y + 4.0 * y.powi(3))).abs());
            err = err.max((field.w[(i, j)] + x.cos() * (1.0 - y * y).powi(2)).abs());
        }
    }
    let curl = field.q_grad.as_ref().unwrap().curl_residual;
    let zero = solve_linearized(&p, &ModalField::zeros(1.0, 8, g.clone(), 2), &g, 8).unwrap();
    let z = zero.v.amax().max(zero.w.amax());
    Outcome {
        pass: err <= 1e-9 && curl <= 1e-7 && z <= 1e-12,
        detail: format!("velocity error {err:.2e}, curl residual {curl:.2e}, zero-force field {z:.1e}"),
    }
}

fn sample_cfg() -> SampleConfig {
    SampleConfig { samples: 20, seed: 105, active_modes: 3 }
}

fn nonlinear_solver() -> ChannelSolver {
    ChannelSolver::new(poiseuille(), 1.0, 8, grid(32)).unwrap()
}

fn measured_constants(solver: &ChannelSolver) -> (f64, f64) {
    let kappa = measure_kappa(solver, &sample_cfg()).unwrap();
    let c1 = measure_embedding(solver.xi0(), solver.k_max(), solver.grid(), &sample_cfg());
    (kappa, c1)
}

fn contraction() -> Outcome {
    let solver = nonlinear_solver();
    let (kappa, c1) = measured_constants(&solver);
    let window = DeltaWindow::new(kappa, c1, 0.0);
    let zero = ModalField::zeros(1.0, 8, solver.grid().clone(), 2);
    let pairs = SampleConfig { seed: 205, ..sample_cfg() };
    let ratio = measure_contraction(&solver, &zero, window.upper, None, &pairs).unwrap();
    let probe = uniqueness_probe(&solver, 10, window.upper, 1e-10, None, 305).unwrap();
    let factor = probe
        .starts
        .iter()
        .map(|s| s.contraction_factor.unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    Outcome {
        pass: ratio <= 0.5 + 0.05 && probe.unique && factor <= 0.6,
        detail: format!(
            "kappa0 {kappa:.4}, c1 {c1:.4e}, delta {:.4e}, Lipschitz ratio {ratio:.4}, probe unique {}, worst step factor {factor:.4}",
            window.upper, probe.unique
        ),
    }
}

fn symmetry() -> Outcome {
    let g = grid(32);
    let p = Profile::new(-0.8, 0.0, 2.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let class = if i % 2 == 0 { SymmetryClass::X1 } else { SymmetryClass::X2 };
        let psi = random_stream_function(&mut rng, 1.0, 6, &g, 4, 1.0, Some(class));
        let c = check_symmetry_cancellation(&p, &psi).unwrap();
        worst = worst.max(c.i1.abs() / c.scale).max(c.i2.abs() / c.scale);
    }
    // x-even data: f even in x, g odd in x
    let solver = ChannelSolver::new(poiseuille(), 1.0, 6, g.clone()).unwrap();
    let force = ModalField::force(1.0, 6, g.clone(), |x, y| {
        (0.05 * x.cos() * (1.0 + y), 0.03 * (2.0 * x).sin() * y * y)
    })
    .unwrap();
    let w0 = random_stream_function(&mut rng, 1.0, 6, &g, 3, 0.5, Some(SymmetryClass::X1));
    let map = PicardMap::new(&solver, &force, Some(SymmetryClass::X1));
    let mut w = w0.clone();
    let mut drift: f64 = symmetry_defect(&w.components[0], SymmetryClass::X1);
    for _ in 0..10 {
        w = map.apply(&w).unwrap();
        drift = drift.max(symmetry_defect(&w.components[0], SymmetryClass::X1));
    }
    // with f = 0 the fixed point of the projected map is a genuine solution,
    // so the full solve runs to its residual check
    let mut cfg = PicardConfig::new(100.0, 1e-10);
    cfg.symmetry_class = Some(SymmetryClass::X1);
    cfg.initial = Some(w0);
    let zero = ModalField::zeros(1.0, 6, g.clone(), 2);
    let (field, _) = picard_iterate(&solver, &zero, &cfg).unwrap();
    drift = drift.max(symmetry_defect(&field.stream_function().components[0], SymmetryClass::X1));
    Outcome {
        pass: worst <= 1e-10 && drift <= 1e-10,
        detail: format!("max |I|/scale {worst:.2e}, X1 drift of iterates {drift:.1e}"),
    }
}

fn small_at() -> Outcome {
    let samples = at_sample_grid(0.5, 5);
    let cert = small_at_certificate(0.5, &samples, &grid(64)).unwrap();
    Outcome {
        pass: cert.holds && cert.samples_used == 25,
        detail: format!("{} samples, max leading Re lambda {:.4e}", cert.samples_used, cert.max_growth),
    }
}

fn neutral(n: usize) -> NeutralPoint {
    let cfg = NeutralConfig { n, ..NeutralConfig::default() };
    neutral_search(&cfg).unwrap().0
}

fn neutral_point(fine: &NeutralPoint, coarse: &NeutralPoint) -> Outcome {
    let re = |p: &NeutralPoint| -3.0 * p.a1;
    let agree = rel(re(coarse), re(fine)) <= 1e-3 && rel(coarse.t0, fine.t0) <= 1e-3;
    let mut pass = agree;
    let mut notes = Vec::new();
    for p in [coarse, fine] {
        let im_over_t = p.lambda1.im / p.t0;
        let ok_re = rel(re(p), 5772.22) <= 1e-3;
        let ok_t = rel(p.t0, 1.0206) <= 1e-3;
        let ok_im = rel(im_over_t, -0.2640) <= 1e-2;
        let reversal = p.c_counter < 3.0 * p.a1.abs();
        let fails_abc = !p.profile().unwrap().satisfies_abc();
        pass &= ok_re && ok_t && ok_im && reversal && fails_abc && p.lambda1.im < 0.0;
        notes.push(format!(
            "N={}: -3A1 {:.4} [{}], T0 {:.6} [{}], Im l1/T0 {:.4} [{}] (phase speed {:.6}), C {:.3} < 3|A1| [{}], ABC fails [{}]",
            p.n,
            re(p),
            ok(ok_re),
            p.t0,
            ok(ok_t),
            im_over_t,
            ok(ok_im),
            p.phase_speed,
            p.c_counter,
            ok(reversal),
            ok(fails_abc)
        ));
    }
    Outcome {
        pass,
        detail: format!("{}; N=200/300 agree [{}]", notes.join("; "), ok(agree)),
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

fn witness(point: &NeutralPoint) -> Outcome {
    let g = grid(point.n);
    let at_neutral = kernel_witness(&point.profile().unwrap(), point.t0, &g).unwrap();
    let admissible = kernel_witness(&poiseuille(), point.t0, &g).unwrap();
    Outcome {
        pass: at_neutral <= 1e-6 && admissible >= 1e-3,
        detail: format!("neutral profile {at_neutral:.2e}, Poiseuille {admissible:.4}"),
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn regression(first_bound: f64, point: &NeutralPoint) -> Outcome {
    let solver = nonlinear_solver();
    let runs: Vec<(f64, f64, f64)> = [1, 2, 1, 2]
        .iter()
        .map(|&threads| {
            in_pool(threads, || {
                let (k, c) = measured_constants(&solver);
                (k, c, uniform_estimate().1)
            })
        })
        .collect();
    let mut worst: f64 = 0.0;
    for r in &runs[1..] {
        worst = worst.max(rel(r.0, runs[0].0)).max(rel(r.1, runs[0].1));
    }
    let bound_drift = runs.iter().map(|r| rel(r.2, first_bound)).fold(0.0, f64::max);
    let again = in_pool(2, || neutral(point.n));
    let neutral_drift = rel(again.a1, point.a1).max(rel(again.t0, point.t0));
    Outcome {
        pass: worst <= 1e-12 && bound_drift <= 1e-12 && neutral_drift <= 1e-9,
        detail: format!(
            "kappa0/c1 drift {worst:.1e}, estimate bound drift {bound_drift:.1e}, neutral point drift {neutral_drift:.1e} (1 and 2 threads)"
        ),
    }
}

fn report(id: usize, limit: Option<Duration>, run: impl FnOnce() -> Outcome, failures: &mut Vec<usize>) {
    let start = Instant::now();
    let mut out = run();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed > limit {
            out.pass = false;
            out.detail.push_str(&format!("; over the {:?} limit", limit));
        }
    }
    println!(
        "criterion {id:>2}: {} ({:.2} s) {}",
        if out.pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        out.detail
    );
    if !out.pass {
        failures.push(id);
    }
}

#[test]
fn acceptance_criteria() {
    let mut failures = Vec::new();
    let secs = |s| Some(Duration::from_secs(s));
    report(1, secs(1), poincare, &mut failures);
    report(2, secs(1), manufactured_mode, &mut failures);
    let mut bound = f64::NAN;
    report(
        3,
        secs(30),
        || {
            let (o, b) = uniform_estimate();
            bound = b;
            o
        },
        &mut failures,
    );
    report(4, secs(5), linear_channel, &mut failures);
    report(5, secs(120), contraction, &mut failures);
    report(6, secs(30), symmetry, &mut failures);
    report(7, secs(60), small_at, &mut failures);
    let mut points = None;
    report(
        8,
        secs(600),
        || {
            let (fine, coarse) = rayon::join(|| neutral(300), || neutral(200));
            let o = neutral_point(&fine, &coarse);
            points = Some((fine, coarse));
            o
        },
        &mut failures,
    );
    let (_, coarse) = points.unwrap();
    report(9, secs(30), || witness(&coarse), &mut failures);
    report(10, None, || regression(bound, &coarse), &mut failures);
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
