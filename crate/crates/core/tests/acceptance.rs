//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Run with `cargo test -p wcl-core --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wcl_core::arcs;
use wcl_core::arith::{self, Rational};
use wcl_core::counter::{self, PredictConfig, Region, TargetMode};
use wcl_core::expsums::{self, ExpSumConfig, Route};
use wcl_core::localdens;
use wcl_core::realdens;
use wcl_core::weights::{self, WeightModel};
use wcl_core::QuadraticForm;

type Outcome = Result<String, String>;

fn models() -> Vec<WeightModel> {
    vec![
        WeightModel::unit(),
        WeightModel::primes(),
        WeightModel::kfree(2).unwrap(),
        WeightModel::kfree(3).unwrap(),
    ]
}

/// `x₁²+x₂²`, `x₁²+x₂²−2x₃²`, `2x₁x₃+2x₂x₄`, all with `t = 1`.
fn test_forms() -> Vec<(&'static str, QuadraticForm)> {
    vec![
        ("x1²+x2²", QuadraticForm::diagonal(&[1, 1], 1).unwrap()),
        ("x1²+x2²−2x3²", QuadraticForm::diagonal(&[1, 1, -2], 1).unwrap()),
        ("2x1x3+2x2x4", QuadraticForm::hyperbolic(2, 1).unwrap()),
    ]
}

fn acceptance_form() -> QuadraticForm {
    QuadraticForm::hyperbolic(5, 0).unwrap()
}

fn criterion_1() -> Outcome {
    let mut cases = 0;
    for m in models() {
        let rep = weights::audit_kappa(&m, 200).map_err(|e| e.to_string())?;
        for name in ["normalization", "C", "refinement"] {
            let c = rep.check(name).ok_or(format!("{name} missing"))?;
            cases += c.cases;
            if c.passed != Some(true) {
                return Err(format!("{} {name}: {}", m.name(), c.witness.clone().unwrap_or_default()));
            }
        }
    }
    Ok(format!("{cases} exact identities over qq' ≤ 200"))
}

fn criterion_2() -> Outcome {
    let x = 1e6;
    let k2 = WeightModel::kfree(2).unwrap();
    let spots = [
        (WeightModel::primes(), 6, 5, Rational::new(1, 2)),
        (k2.clone(), 4, 2, Rational::new(1, 3)),
        (k2, 2, 1, Rational::new(2, 3)),
    ];
    let mut worst: f64 = 0.0;
    for (m, q, h, expect) in spots {
        let k = m.kappa(q, h).map_err(|e| e.to_string())?;
        if k != expect {
            return Err(format!("{} κ({q},{h}) = {k}, expected {expect}", m.name()));
        }
        let table = m.table(x as u64);
        let ratio = table.cumulative_progression(q, h, x).map_err(|e| e.to_string())? / table.cumulative(x);
        let gap = (ratio - arith::rational_to_f64(&k)).abs();
        worst = worst.max(gap);
        if gap >= 1e-2 {
            return Err(format!("{} κ({q},{h}): empirical {ratio} vs {k}", m.name()));
        }
    }
    Ok(format!("exact values match; worst empirical gap {worst:.2e} < 1e-2 at X = 1e6"))
}

fn criterion_3() -> Outcome {
    let cfg = ExpSumConfig::default();
    let (mut worst_mult, mut worst_imag): (f64, f64) = (0.0, 0.0);
    let mut pairs = 0;
    for (name, f) in test_forms() {
        for m in models() {
            let b: Vec<Complex64> = (1..=60u64)
                .map(|q| {
                    let v = expsums::b_q(&f, &m, q, Route::Auto, &cfg)?;
                    Ok(v.value)
                })
                .collect::<wcl_core::Result<_>>()
                .map_err(|e: wcl_core::Error| format!("{name}, {}: {e}", m.name()))?;
            for (i, v) in b.iter().enumerate() {
                let r = v.im.abs() / (1.0 + v.norm());
                worst_imag = worst_imag.max(r);
                if r > 1e-9 {
                    return Err(format!("{name}, {}: Im B({}) = {:e}", m.name(), i + 1, v.im));
                }
            }
            for q in 2..=60u64 {
                for q2 in 2..=60 / q {
                    if arith::gcd(q, q2) != 1 || q2 < q {
                        continue;
                    }
                    pairs += 1;
                    let prod = b[q as usize - 1] * b[q2 as usize - 1];
                    let r = (b[(q * q2) as usize - 1] - prod).norm() / (1.0 + prod.norm());
                    worst_mult = worst_mult.max(r);
                    if r > 1e-9 {
                        return Err(format!("{name}, {}: B({}) ≠ B({q})B({q2}) ({r:e})", m.name(), q * q2));
                    }
                }
            }
        }
    }
    Ok(format!(
        "{pairs} coprime pairs; worst multiplicativity {worst_mult:.1e}, worst |Im| {worst_imag:.1e}"
    ))
}

fn criterion_4() -> Outcome {
    let cfg = ExpSumConfig::default();
    let anchor = localdens::chi_p(&QuadraticForm::diagonal(&[1, 1], 1).unwrap(), &WeightModel::unit(), 2, 3, &cfg)
        .map_err(|e| e.to_string())?;
    let got: Vec<f64> = anchor.rows[1..].iter().map(|r| r.scaled.unwrap_or(f64::NAN)).collect();
    if got.iter().zip([1.0, 2.0, 2.0]).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(format!("anchor 2^m M(2^m) = {got:?}, expected [1, 2, 2]"));
    }
    let mut rows = 0;
    let mut worst: f64 = 0.0;
    for (name, f) in test_forms() {
        let s = f.dim() as u32;
        for m in models() {
            for p in [2u64, 3, 5] {
                let mut mmax = 0;
                while (p as f64).powi(((mmax + 1) * s) as i32) <= 1e8 {
                    mmax += 1;
                }
                let seq = localdens::chi_p(&f, &m, p, mmax, &cfg).map_err(|e| e.to_string())?;
                for r in &seq.rows[1..] {
                    let (Some(sc), Some(d)) = (r.scaled, r.discrepancy) else {
                        return Err(format!("{name}, {}, p={p}, m={}: {:?}", m.name(), r.m, r.error));
                    };
                    rows += 1;
                    worst = worst.max(d / (1.0 + sc));
                    if d > 1e-9 * (1.0 + sc) {
                        return Err(format!("{name}, {}, p={p}, m={}: |p^m M − ΣB| = {d:e}", m.name(), r.m));
                    }
                }
            }
        }
    }
    Ok(format!("anchor [1, 2, 2]; {rows} rows, worst relative discrepancy {worst:.1e}"))
}

fn criterion_5() -> Outcome {
    let cfg = ExpSumConfig::default();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let moduli = [3u64, 5, 7, 9, 11, 13, 17, 19, 23, 25, 27];
    for (name, f) in test_forms() {
        for &q in &moduli {
            for a in (1..q).filter(|&a| arith::gcd(a, q) == 1) {
                let u = WeightModel::unit();
                let fast = expsums::s_t_qa(&f, &u, q, a, Route::Fast, &cfg).map_err(|e| e.to_string())?;
                let direct = expsums::s_t_qa(&f, &u, q, a, Route::Direct, &cfg).map_err(|e| e.to_string())?;
                cases += 1;
                let err = (fast - direct).norm();
                let rel = if direct.norm() > 1e-12 { err / direct.norm() } else { err };
                worst = worst.max(rel);
                if rel > 1e-9 {
                    return Err(format!("{name}, q={q}, a={a}: fast {fast} vs direct {direct}"));
                }
            }
        }
    }
    Ok(format!("{cases} sums, worst relative error {worst:.1e}"))
}

fn criterion_6() -> Outcome {
    let f = QuadraticForm::diagonal(&[1, 1, -2], 0).unwrap();
    let x0 = [1.0, 1.0, 1.0];
    let x = 100.0;
    let bx = realdens::build_box(&f, 1.0, x, realdens::default_eta(&x0), &x0).map_err(|e| e.to_string())?;
    let u = WeightModel::unit();
    let a = realdens::sigma_infinity(&f, &u, &bx, x, 1_000_000, 11).map_err(|e| e.to_string())?;
    let b = realdens::sigma_infinity(&f, &u, &bx, x, 4_000_000, 11).map_err(|e| e.to_string())?;
    let detail = format!(
        "slab {:.6e} ± {:.1e}, co-area {:.6e} ± {:.1e}, z = {:.2}; stderr ratio slab {:.3}, co-area {:.3}",
        a.slab.value,
        a.slab.stderr,
        a.coarea.value,
        a.coarea.stderr,
        a.z_score,
        b.slab.stderr / a.slab.stderr,
        b.coarea.stderr / a.coarea.stderr
    );
    let halves = |r: f64| (0.25..=0.75).contains(&r);
    if a.z_score <= 3.0 && halves(b.slab.stderr / a.slab.stderr) && halves(b.coarea.stderr / a.coarea.stderr) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_7() -> Outcome {
    let f = acceptance_form();
    let m = WeightModel::primes();
    let schedule = arcs::arc_schedule(20.0, 1.0, 1.0).map_err(|e| e.to_string())?;
    let mut alphas = vec![2f64.sqrt() - 1.0, (5f64.sqrt() - 1.0) / 2.0, std::f64::consts::E - 2.0];
    alphas.extend(
        arcs::minor_arc_samples(&schedule, arcs::DEFAULT_PER_STRATUM, 8, 2024)
            .iter()
            .map(|s| s.alpha),
    );
    let mut maxima = Vec::new();
    for x in [10.0, 14.0, 20.0] {
        let rep = arcs::weyl_check(&f, &m, x, &alphas, &ExpSumConfig::default()).map_err(|e| e.to_string())?;
        if let Some(r) = rep.rows.iter().find(|r| r.error.is_some()) {
            return Err(format!("X = {x}: {}", r.error.clone().unwrap()));
        }
        maxima.push(rep.max_ratio.ok_or("no ratios")?);
    }
    let detail = format!(
        "max ratio at X = 10, 14, 20: {:.4e}, {:.4e}, {:.4e}",
        maxima[0], maxima[1], maxima[2]
    );
    if maxima[2] <= 1.1 * maxima[0] {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_8() -> Outcome {
    let f = QuadraticForm::diagonal(&[1, 1], 0).unwrap();
    let m = WeightModel::primes();
    let cfg = ExpSumConfig::default();
    let grid = [1e3, 1e4, 1e5];
    let mut lines = Vec::new();
    let mut ok = true;
    for (a, q) in [(1u64, 1u64), (1, 2), (1, 3), (2, 3)] {
        for c in [0.0, 0.05, 0.1, -0.1] {
            let mut errs = Vec::new();
            for &x in &grid {
                let chk = arcs::major_factorization_check(&f, &m, a, q, c / (x * x), x, &cfg).map_err(|e| e.to_string())?;
                errs.push(chk.relative_error.ok_or(format!("a/q = {a}/{q}: main term too small"))?);
            }
            let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
            ok &= decreasing;
            if !decreasing {
                lines.push(format!("{a}/{q}, λX² = {c}: {:.3e} {:.3e} {:.3e}", errs[0], errs[1], errs[2]));
            }
        }
    }
    if ok {
        Ok("16 cases, relative error strictly decreasing over X = 1e3, 1e4, 1e5".into())
    } else {
        Err(lines.join("; "))
    }
}

fn criterion_9() -> Outcome {
    let f = acceptance_form();
    let m = WeightModel::primes();
    let cfg = PredictConfig {
        x_grid: vec![14, 20],
        p_max: 30,
        prime_depth: 3,
        samples: 1_000_000,
        seed: 9,
        target: TargetMode::Anchored {
            anchor: vec![1.0; 10],
            eta_fraction: 0.5,
        },
        ..Default::default()
    };
    let suite = counter::predict_compare(&f, &m, &cfg).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for r in &suite.reports {
        let count = r.count.as_ref().map_or(f64::NAN, |c| c.value);
        let ratio = r.ratio.unwrap_or(f64::NAN);
        parts.push(format!(
            "X = {}: t = {}, count = {count}, main = {:.4e}, ratio = {ratio:.4}",
            r.x,
            r.t,
            r.main_term.unwrap_or(f64::NAN)
        ));
        ok &= count > 0.0 && (0.5..=2.0).contains(&ratio) && r.errors.is_empty();
    }
    ok &= suite.drift_decreasing == Some(true);
    let detail = parts.join("; ");
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_form(rng: &mut ChaCha8Rng, s: usize) -> QuadraticForm {
    loop {
        let mut m = vec![vec![0i64; s]; s];
        for i in 0..s {
            for j in i..s {
                let v = rng.gen_range(-3..=3);
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        if let Ok(f) = QuadraticForm::new(m, 0) {
            return f;
        }
    }
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let ms = models();
    let mut checked = 0;
    for _ in 0..50 {
        let s = rng.gen_range(1..=4usize);
        let model = ms[rng.gen_range(0..ms.len())].clone();
        let f = random_form(&mut rng, s);
        let xmax = (1e7f64.powf(1.0 / s as f64).floor() as u64 - 1).min(60);
        let x = rng.gen_range(2..=xmax);
        let support = model.table(x).support(x).len() as f64;
        debug_assert!(support.powi(s as i32) <= 1e7);
        // a target that is hit: f at a random support point, sometimes shifted
        let sup = model.table(x).support(x);
        let pt: Vec<i64> = (0..s).map(|_| sup[rng.gen_range(0..sup.len())].0).collect();
        let t = f.evaluate_i128(&pt).unwrap() as i64 + if rng.gen_bool(0.2) { rng.gen_range(-5..=5) } else { 0 };
        let f = f.with_target(t);
        let region = if rng.gen_bool(0.3) {
            let lo: Vec<i64> = (0..s).map(|_| rng.gen_range(0..=x as i64 / 2)).collect();
            let hi: Vec<i64> = lo.iter().map(|&l| l + rng.gen_range(0..=x as i64)).collect();
            Region::Box { lo, hi }
        } else {
            Region::Cube
        };
        let fast = counter::brute_count(&f, &model, x, &region, counter::DEFAULT_COUNT_CAP).map_err(|e| e.to_string())?;
        let naive = counter::naive_count(&f, &model, x, &region).map_err(|e| e.to_string())?;
        let exact = fast.exact.ok_or("indicator count not exact")?;
        if exact as f64 != naive {
            return Err(format!("s = {s}, {}, X = {x}, t = {t}, {region:?}: {exact} vs {naive}", model.name()));
        }
        checked += 1;
    }
    Ok(format!("{checked} random instances agree exactly"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("exact κ audits", criterion_1),
        ("κ spot values", criterion_2),
        ("B(q) multiplicativity and reality", criterion_3),
        ("local density identity", criterion_4),
        ("Gauss fast path", criterion_5),
        ("σ∞ estimator consistency", criterion_6),
        ("Weyl decay", criterion_7),
        ("major-arc factorization", criterion_8),
        ("end-to-end prediction", criterion_9),
        ("counter oracle", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let outcome = run();
        let secs = clock.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
