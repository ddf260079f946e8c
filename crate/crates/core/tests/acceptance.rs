//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spherefield::estimator::{
    estimate, pull_back, run_batches, CylindricalFunctional, FunctionalKind, Model,
    PulledBackFunctional, TestFunction,
};
use spherefield::gaussian::{build_decomposition, covariance, FreeFieldSampler};
use spherefield::geometry::{build_quadrature, Region};
use spherefield::harmonics::{
    analyze, coefficient_count, degeneracy, eigenvalue, synthesize, SpectralField,
};
use spherefield::interaction::{
    phi4_evaluator, ConstantLagrangian, Lagrangian, Phi4, Phi4Family, Shifted, ZeroLagrangian,
};
use spherefield::regularization::{ratio, CutoffSchedule, MollifierSpec, ZonalKernel};
use spherefield::symmetry::{
    default_rotations, default_rp_family, markov_factorization_check, rotation_invariance_suite,
    rp_deviation, rp_gram, translation_sweep, InvarianceMode, NamedRotation,
    DEFAULT_FAMILY_AMPLITUDE, DEFAULT_L_PER_RADIUS,
};

const Z_TOL: f64 = 3.0;
const ROUND_TRIP_TOL: f64 = 1e-10;
const TOTAL_TOL: f64 = 1e-12;
const CROSS_TERM_TOL: f64 = 1e-4;
const CROSS_TERM_FLOOR: f64 = 1e-12;
const TRANSLATION_RATIO: f64 = 0.1;
const CRN_TOL: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn phi4(n: u32) -> Arc<dyn Lagrangian> {
    Arc::new(phi4_evaluator(&Phi4Family::bounded_default(), n))
}

fn zero() -> Arc<dyn Lagrangian> {
    Arc::new(ZeroLagrangian { arity: 2 })
}

fn model_at(dim: usize, n: u32, l_max: usize, lag: Arc<dyn Lagrangian>) -> Model {
    let schedule = CutoffSchedule::default_for(dim);
    Model::from_schedule(&schedule, n, l_max, &MollifierSpec::default(), lag, 1).unwrap()
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn random_field(dim: usize, l_max: usize, rng: &mut ChaCha8Rng) -> SpectralField {
    let n = coefficient_count(dim, l_max);
    SpectralField::from_coeffs(
        dim,
        1.0,
        l_max,
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn criterion_1() -> Outcome {
    let (dim, l_max, samples) = (2, 32, 100_000);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut tests = Vec::new();
    for _ in 0..20 {
        let f = random_field(dim, l_max, &mut rng);
        let b = covariance(&f, &f).unwrap();
        tests.push(f.scaled(1.0 / b.sqrt()));
    }
    let rows = DMatrix::from_fn(tests.len(), coefficient_count(dim, l_max), |i, j| {
        tests[i].coeffs()[j]
    });
    let sampler = FreeFieldSampler::new(dim, 1.0, l_max, 1, 2024).unwrap();
    let pairings = run_batches(samples, |start, count| {
        let p = &rows * sampler.sample_batch(start, count);
        Ok((0..count)
            .map(|c| p.column(c).as_slice().to_vec())
            .collect())
    })
    .unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..10 {
        let (i, j) = (2 * k, 2 * k + 1);
        let x: Vec<f64> = pairings.iter().map(|p| p[i]).collect();
        let y: Vec<f64> = pairings.iter().map(|p| p[j]).collect();
        let (mx, _) = mean_se(&x);
        let (my, _) = mean_se(&y);
        let prod: Vec<f64> = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).collect();
        let (cov, se) = mean_se(&prod);
        worst = worst.max((cov - covariance(&tests[i], &tests[j]).unwrap()).abs() / se);
        let c: Vec<f64> = x.iter().map(|v| v.cos()).collect();
        let (mc, sc) = mean_se(&c);
        worst =
            worst.max((mc - (-0.5 * covariance(&tests[i], &tests[i]).unwrap()).exp()).abs() / sc);
    }
    outcome(
        worst <= Z_TOL,
        format!("max z = {worst:.3} over 10 covariances and 10 characteristic values"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut totals: f64 = 0.0;
    for (dim, l_max, radius) in [(1, 128, 1.7), (2, 32, 2.3)] {
        let grid = build_quadrature(dim, radius, l_max).unwrap();
        let f = random_field(dim, l_max, &mut rng);
        let f = SpectralField::from_coeffs(dim, radius, l_max, f.into_coeffs()).unwrap();
        let g = analyze(&synthesize(&f, &grid).unwrap(), &grid).unwrap();
        let err = f
            .coeffs()
            .iter()
            .zip(g.coeffs())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(err);
        let exact = if dim == 1 {
            2.0 * std::f64::consts::PI * radius
        } else {
            4.0 * std::f64::consts::PI * radius * radius
        };
        totals = totals.max((grid.total_weight() - exact).abs() / exact);
    }
    outcome(
        worst < ROUND_TRIP_TOL && totals < TOTAL_TOL,
        format!("round trip {worst:.2e}, relative total error {totals:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let (radius, delta, alpha) = (4.0, 0.1, 4.0);
    let straddling = CylindricalFunctional::new(
        vec![TestFunction::new(vec![0.0], 1.0, 1.0).unwrap()],
        FunctionalKind::ClampedIdentity { bound: 1.0 },
    )
    .unwrap();
    let plus = CylindricalFunctional::new(
        vec![TestFunction::new(vec![2.5], 0.8, 1.0).unwrap()],
        FunctionalKind::ClampedIdentity { bound: 1.0 },
    )
    .unwrap();
    let mut values = Vec::new();
    let mut diagnostic = Vec::new();
    for l_max in [16, 32, 64, 128] {
        let f = pull_back(&straddling, radius, l_max).unwrap().tests()[0].clone();
        let g = pull_back(&plus, radius, l_max).unwrap().tests()[0].clone();
        let d = build_decomposition(1, radius, l_max, delta, alpha, -1).unwrap();
        values.push(
            d.cross_covariance(Region::Collar, &f, Region::Plus, &g)
                .unwrap()
                .abs(),
        );
        let dk = build_decomposition(1, radius, l_max, delta, alpha, 1).unwrap();
        diagnostic.push(
            dk.cross_covariance(Region::Collar, &f, Region::Plus, &g)
                .unwrap()
                .abs(),
        );
    }
    let clamped: Vec<f64> = values.iter().map(|v| v.max(CROSS_TERM_FLOOR)).collect();
    let monotone = clamped.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        monotone && values[3] < CROSS_TERM_TOL,
        format!(
            "|B(P0 f, P+ g)| = {}; order-1 metric diagnostic {}",
            sci(&values),
            sci(&diagnostic)
        ),
    )
}

fn criterion_4() -> Outcome {
    let (n, l_max, samples) = (5, 64, 100_000);
    let schedule = CutoffSchedule::default_for(1);
    let bump = TestFunction::new(vec![1.5], 0.5, 20.0).unwrap();
    let functional = CylindricalFunctional::new(vec![bump], FunctionalKind::Cos).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    let decomp = build_decomposition(
        1,
        schedule.radius_at(n),
        l_max,
        schedule.delta_at(n),
        schedule.alpha,
        -1,
    )
    .unwrap();
    for (name, lag) in [("L=0", zero()), ("phi4", phi4(n))] {
        let model = model_at(1, n, l_max, lag);
        let f = pull_back(&functional, model.radius, l_max).unwrap();
        let r = markov_factorization_check(&f, &model, &decomp, 77, samples).unwrap();
        let z = (r.lhs - r.rhs).abs() / r.std_error;
        pass &= z <= Z_TOL;
        detail.push(format!(
            "{name}: lhs {:.5e} rhs {:.5e} z {z:.2} theta-leg ok {}",
            r.lhs, r.rhs, r.theta_passes
        ));
    }
    outcome(pass, detail.join("; "))
}

fn pulled_family(dim: usize, p: usize, radius: f64, l_max: usize) -> Vec<PulledBackFunctional> {
    default_rp_family(dim, p, DEFAULT_FAMILY_AMPLITUDE)
        .unwrap()
        .iter()
        .map(|f| pull_back(f, radius, l_max).unwrap())
        .collect()
}

fn criterion_5() -> Outcome {
    let (n, l_max, samples) = (8, 96, 100_000);
    let model = model_at(1, n, l_max, phi4(n));
    let family = pulled_family(1, 3, model.radius, l_max);
    let sampler = model.sampler(1, 5150).unwrap();
    let r = rp_gram(&family, &model, &sampler, samples).unwrap();
    outcome(
        r.min_eigenvalue >= r.tolerance,
        format!(
            "min eigenvalue {:.3e} >= {:.3e} (bound {:.3e}, max se {:.2e}, ess {:.0})",
            r.min_eigenvalue, r.tolerance, r.deviation_bound, r.max_std_error, r.ess
        ),
    )
}

fn criterion_6() -> Outcome {
    let schedule = CutoffSchedule::default_for(1);
    let samples = 20_000;
    let mut rows = Vec::new();
    let mut pass = true;
    for n in [2u32, 4, 8, 16] {
        let l_max = (8 * n as usize).max(48);
        let model = model_at(1, n, l_max, phi4(n));
        let f = pulled_family(1, 1, model.radius, l_max).remove(0);
        let r = rp_deviation(
            &f,
            &model,
            &model.sampler(1, 600 + n as u64).unwrap(),
            samples,
        )
        .unwrap();
        pass &= r.deviation <= r.constant * r.bound;
        rows.push(r);
    }
    let halves = rows.windows(2).all(|w| w[1].bound == 0.5 * w[0].bound)
        && rows
            .iter()
            .zip([2u32, 4, 8, 16])
            .all(|(r, n)| r.ratio == ratio(&schedule, n));
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("n={} dev {:.2e} bound {:.4}", r.n, r.deviation, r.bound))
        .collect();
    outcome(
        pass && halves,
        format!(
            "C = {:.2}; {}; bound halves exactly: {halves}",
            rows[0].constant,
            table.join(", ")
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let models: Vec<Model> = (0..8)
        .map(|i| {
            let radius = 1.0 + i as f64 * 0.25;
            Model::new(
                1,
                radius,
                16,
                1,
                ZonalKernel::identity(16),
                zero(),
                1,
                0.05 * radius,
            )
            .unwrap()
        })
        .collect();
    let mut bound_ok = true;
    let mut shift_ok = true;
    let mut seed_ok = true;
    for trial in 0..1000 {
        let base = &models[trial % models.len()];
        let lag: Arc<dyn Lagrangian> = Arc::new(Phi4 {
            a: rng.gen_range(-0.5..0.5),
            b: rng.gen_range(-1.0..1.0),
            c: rng.gen_range(0.0..2.0),
            scale: rng.gen_range(0.5..3.0),
        });
        let model = base.with_lagrangian(lag.clone());
        let bound = rng.gen_range(0.1..5.0);
        let kind = match trial % 4 {
            0 => FunctionalKind::ClampedIdentity { bound },
            1 => FunctionalKind::Tanh { scale: bound },
            2 => FunctionalKind::Cos,
            _ => FunctionalKind::TanhProduct { scale: bound },
        };
        let arity = if trial % 4 == 3 { 2 } else { 1 };
        let tests: Vec<TestFunction> = (0..arity)
            .map(|_| {
                TestFunction::new(
                    vec![rng.gen_range(-1.0..1.0)],
                    rng.gen_range(0.8..1.5),
                    rng.gen_range(0.5..5.0),
                )
                .unwrap()
            })
            .collect();
        let f = pull_back(
            &CylindricalFunctional::new(tests, kind).unwrap(),
            model.radius,
            16,
        )
        .unwrap();
        let seed = rng.gen();
        let samples = rng.gen_range(2..40);
        let sampler = model.sampler(1, seed).unwrap();
        let Ok(a) = estimate(&f, &model, &sampler, samples) else {
            continue;
        };
        bound_ok &= a.value.abs() <= f.sup_bound();
        seed_ok &= estimate(&f, &model, &sampler, samples).unwrap() == a;
        let c = rng.gen_range(-50.0..50.0);
        let shifted = model.with_lagrangian(Arc::new(Shifted {
            inner: lag,
            shift: c,
        }));
        shift_ok &= estimate(&f, &shifted, &sampler, samples).unwrap() == a;
        let constant = model.with_lagrangian(Arc::new(ConstantLagrangian { value: c, arity: 2 }));
        let plain = base.with_lagrangian(zero());
        shift_ok &= estimate(&f, &constant, &sampler, samples).unwrap()
            == estimate(&f, &plain, &sampler, samples).unwrap();
    }
    outcome(
        bound_ok && shift_ok && seed_ok,
        format!("bound {bound_ok}, shift bit-exact {shift_ok}, seed bit-exact {seed_ok}"),
    )
}

fn criterion_8() -> Outcome {
    let bump = TestFunction::new(vec![0.0], 1.0, 1.0).unwrap();
    let rows = translation_sweep(
        &bump,
        &[1.0],
        &[10.0, 20.0, 40.0, 80.0],
        1,
        DEFAULT_L_PER_RADIUS,
    )
    .unwrap();
    let values: Vec<f64> = rows.iter().map(|r| r.residual).collect();
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    let ratio = values[3] / values[0];
    outcome(
        decreasing && ratio < TRANSLATION_RATIO,
        format!("residuals {}, R=80/R=10 = {ratio:.3}", sci(&values)),
    )
}

fn criterion_9() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    let cases: [(usize, u32, usize, TestFunction, Vec<NamedRotation>); 2] = [
        (
            1,
            4,
            48,
            TestFunction::new(vec![0.0], 1.0, 1.0).unwrap(),
            default_rotations(1),
        ),
        (
            2,
            2,
            16,
            TestFunction::new(vec![0.4, 0.3], 0.9, 1.0).unwrap(),
            default_rotations(2),
        ),
    ];
    for (dim, n, l_max, bump, rotations) in cases {
        let functional =
            CylindricalFunctional::new(vec![bump], FunctionalKind::Tanh { scale: 0.5 }).unwrap();
        let model = model_at(dim, n, l_max, phi4(n));
        let f = pull_back(&functional, model.radius, l_max).unwrap();
        let sampler = model.sampler(dim as i32, 99).unwrap();
        let r = rotation_invariance_suite(
            &f,
            &rotations,
            &model,
            &sampler,
            10_000,
            InvarianceMode::Standard,
        )
        .unwrap();
        pass &= r.max_z <= Z_TOL;
        let flat = model.with_lagrangian(zero());
        let c = rotation_invariance_suite(
            &f,
            &rotations,
            &flat,
            &sampler,
            10_000,
            InvarianceMode::CommonRandomNumbers,
        )
        .unwrap();
        pass &= c.max_abs_diff <= CRN_TOL;
        detail.push(format!(
            "D={dim}: max z {:.2}, CRN max diff {:.1e}",
            r.max_z, c.max_abs_diff
        ));
    }
    outcome(pass, detail.join("; "))
}

fn factorial(n: u128) -> u128 {
    (1..=n).product()
}

fn criterion_10() -> Outcome {
    let mut pass = true;
    for dim in 1..=3usize {
        for l in 0..=20usize {
            let expected: u128 = if l == 0 {
                1
            } else {
                let num = (2 * l + dim - 1) as u128 * factorial((l + dim - 2) as u128);
                let den = factorial((dim - 1) as u128) * factorial(l as u128);
                assert_eq!(num % den, 0);
                num / den
            };
            pass &= degeneracy(dim, l).unwrap() as u128 == expected;
            pass &= eigenvalue(dim, l) == (l * (l + dim - 1)) as f64;
        }
    }
    outcome(pass, "D in {1,2,3}, l <= 20".to_string())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("covariance law", criterion_1),
        ("transform exactness", criterion_2),
        ("cross-term vanishing", criterion_3),
        ("Markov factorization", criterion_4),
        ("reflection positivity", criterion_5),
        ("deviation-bound scaling", criterion_6),
        ("estimator structure", criterion_7),
        ("translation limit", criterion_8),
        ("rotational invariance", criterion_9),
        ("degeneracy and eigenvalue tables", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {status} {name} ({:.1} s): {}",
            i + 1,
            t.elapsed().as_secs_f64(),
            o.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
