//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p qstoch --release --test acceptance`.

mod common;

use std::f64::consts::FRAC_PI_2;
use std::time::{Duration, Instant};

use common::*;
use qstoch::coeffs::*;
use qstoch::config::DEFAULT_DT_LIST;
use qstoch::flow::*;
use qstoch::linalg::{c, fro, identity, matrix_unit_basis, pauli, Mat, C64, I};
use qstoch::toyfock::{self, SweepSetup};
use qstoch::wongzakai::{wz_convergence, WzSetup};
use rand::Rng;

const SAMPLES: u64 = 100;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn conversion_roundtrip() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for s in 0..SAMPLES {
        let mut r = rng(1000 + s);
        let d = r.random_range(1..=8);
        let n = r.random_range(1..=3);
        let k = kappa(IM_KAPPAS[s as usize % IM_KAPPAS.len()]);
        let e = rand_block(&mut r, d, n, k);
        let back = ito_to_strat(&strat_to_ito(&e, k).unwrap(), k).unwrap();
        worst = worst.max(back.distance(&e));
    }
    let t = start.elapsed();
    outcome(
        worst <= 1e-10 && within(t, 5.0),
        format!("max residual {worst:.2e} (≤ 1e-10), {:.2} s (< 5 s)", t.as_secs_f64()),
    )
}

fn unitarity_chain() -> Outcome {
    let (mut hp_res, mut w_res, mut cayley): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for s in 0..SAMPLES {
        let mut r = rng(2000 + s);
        let d = r.random_range(1..=4);
        let n = r.random_range(1..=3);
        let k = kappa(IM_KAPPAS[s as usize % IM_KAPPAS.len()]);
        let e = rand_strat(&mut r, d, n, k);
        let g = strat_to_ito(&e, k).unwrap();
        let (hp, rep) = hp_from_ito(&g).unwrap();
        hp_res = hp_res.max(rep.max_residual()).max(check_ito_unitarity(&g).max_residual());
        w_res = w_res.max(fro(&(hp.w().adjoint() * hp.w() - identity(n * d))));
        cayley = cayley.max(fro(&(explicit_choices(&e, k).unwrap().w - hp.w())));
    }
    outcome(
        hp_res <= 1e-10 && w_res <= 1e-10 && cayley <= 1e-10,
        format!("HP residual {hp_res:.2e}, W unitarity {w_res:.2e}, Cayley mismatch {cayley:.2e} (all ≤ 1e-10)"),
    )
}

fn resolvent_duality() -> Outcome {
    let (mut dual, mut series): (f64, f64) = (0.0, 0.0);
    for s in 0..SAMPLES {
        let mut r = rng(3000 + s);
        let d = r.random_range(1..=4);
        let n = r.random_range(1..=3);
        let k = kappa(IM_KAPPAS[s as usize % IM_KAPPAS.len()]);
        let e = rand_block(&mut r, d, n, k);
        let g = strat_to_ito(&e, k).unwrap();
        let m = n * d;
        let kv = I * k.value();
        let prod = (identity(m) - g.channel_block() * kv) * (identity(m) + e.channel_block() * kv);
        dual = dual.max(fro(&(prod - identity(m))));
        series = series.max(neumann_resolvent(&e.channel_block(), k).unwrap().agreement().unwrap());
    }
    outcome(
        dual <= 1e-12 && series <= 1e-12,
        format!("duality {dual:.2e}, Neumann vs direct {series:.2e} (both ≤ 1e-12)"),
    )
}

fn flow_structure() -> Outcome {
    let mut structure: f64 = 0.0;
    for d in 1..=4 {
        for n in 1..=2 {
            let g = rand_unitary_ito(&mut rng(4000 + 10 * d as u64 + n as u64), d, n);
            structure = structure.max(structure_residual_on_basis(&eh_generator(&g).unwrap()));
        }
    }
    let mut oracle: f64 = 0.0;
    for s in 0..SAMPLES {
        let mut r = rng(4100 + s);
        let d = r.random_range(1..=4);
        let n = r.random_range(1..=2);
        let g = rand_unitary_ito(&mut r, d, n);
        let x = rand_mat(&mut r, d, d);
        let f = eh_generator(&g).unwrap();
        let o = differential_oracle(&g, &x).unwrap();
        for a in 0..=n {
            for b in 0..=n {
                oracle = oracle.max(fro(&(o.block(a, b) - f.apply(a, b, &x))));
            }
        }
    }
    outcome(
        structure <= 1e-10 && oracle <= 1e-12,
        format!("structure residual {structure:.2e} (≤ 1e-10), oracle mismatch {oracle:.2e} (≤ 1e-12)"),
    )
}

fn lindblad_reduction() -> Outcome {
    let (mut lind, mut unital): (f64, f64) = (0.0, 0.0);
    for s in 0..SAMPLES {
        let mut r = rng(5000 + s);
        let d = r.random_range(1..=4);
        let n = r.random_range(1..=2);
        let hp = rand_hp(&mut r, d, n);
        let f = eh_generator(&ito_from_hp(&hp).unwrap()).unwrap();
        for x in matrix_unit_basis(d) {
            lind = lind.max(fro(&(f.apply(0, 0, &x) - lindblad_heisenberg(&hp, &x))));
        }
        unital = unital.max(f.unital_residual());
    }
    outcome(
        lind <= 1e-10 && unital <= 1e-10,
        format!("Lindblad mismatch {lind:.2e}, max ‖𝓛(I)‖ {unital:.2e} (both ≤ 1e-10)"),
    )
}

fn diffusion_setup() -> SweepSetup {
    let e = CoefficientBlock::zeros(2, 1)
        .and_then(|e| e.with(0, 0, pauli::z()))
        .and_then(|e| e.with(1, 0, pauli::minus()))
        .and_then(|e| e.with(0, 1, pauli::plus()))
        .unwrap();
    let tf = toyfock::default_test_functions(1.0).unwrap();
    let (u, v) = toyfock::default_vectors(2);
    SweepSetup::from_strat(e, GaugeParameter::symmetric(), tf, u, v).unwrap()
}

fn diffusion_coincidence() -> Outcome {
    let start = Instant::now();
    let res = toyfock::convergence_sweep(&diffusion_setup(), &DEFAULT_DT_LIST).unwrap();
    let t = start.elapsed();
    let finest = res.rows.last().unwrap();
    let scheme_err = finest.abs_error_ito.max(finest.abs_error_ed_target);
    let gap = (res.extrapolated_ito - res.extrapolated_slot).norm();
    let oracle_gap = (res.oracle_sd - res.oracle_ed).norm();
    let ito: Vec<f64> = res.rows.iter().map(|r| r.abs_error_ito).collect();
    let slot: Vec<f64> = res.rows.iter().map(|r| r.abs_error_ed_target).collect();
    let halving = toyfock::halvings_converge(&ito, 0.75, 3) && toyfock::halvings_converge(&slot, 0.75, 3);
    outcome(
        oracle_gap <= 1e-10 && gap <= 3.0 * scheme_err && halving && within(t, 30.0),
        format!(
            "limit gap {gap:.2e} (≤ 3 × {scheme_err:.2e}), oracle gap {oracle_gap:.2e}, errors ITO {} SLOT {}, {:.2} s (< 30 s)",
            fmt_list(&ito),
            fmt_list(&slot),
            t.as_secs_f64()
        ),
    )
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn ed_vs_sd() -> Outcome {
    let e = CoefficientBlock::zeros(1, 1)
        .and_then(|e| e.with(1, 1, Mat::from_element(1, 1, c(FRAC_PI_2, 0.0))))
        .unwrap();
    let tf = toyfock::default_test_functions(1.0).unwrap();
    let (u, v) = toyfock::default_vectors(1);
    let setup = SweepSetup::from_strat(e, GaugeParameter::symmetric(), tf, u, v).unwrap();
    // Both targets, read off the Itô gauge block G₁₁ = i(W − 1).
    let w_ed = (C64::new(0.0, -FRAC_PI_2)).exp();
    let w_sd = (c(1.0, 0.0) - I * (FRAC_PI_2 / 2.0)) / (c(1.0, 0.0) + I * (FRAC_PI_2 / 2.0));
    let target_err = (setup.ito_ed.block(1, 1)[(0, 0)] - I * (w_ed - 1.0)).norm()
        + (setup.ito_sd.block(1, 1)[(0, 0)] - I * (w_sd - 1.0)).norm();
    let res = toyfock::convergence_sweep(&setup, &DEFAULT_DT_LIST).unwrap();
    let scheme_err = res.extrapolated_error_ed;
    let separation = (res.extrapolated_slot - res.oracle_sd).norm();
    outcome(
        target_err <= 1e-12 && res.slot_converging_to_ed && separation > 10.0 * scheme_err,
        format!(
            "ED limit error {scheme_err:.2e}, distance to SD target {separation:.2e} (> 10×), target check {target_err:.1e}"
        ),
    )
}

fn exact_moments() -> Outcome {
    let mut worst: f64 = 0.0;
    for &dt in &[0.1, 0.05, 0.02, 0.01, 0.005, 0.0025, 0.00125, 0.001] {
        let n = (1.0f64 / dt).round() as usize;
        let t = n as f64 * dt;
        let w = toyfock::vacuum_moments(&toyfock::wiener_increment(dt), n);
        let p = toyfock::vacuum_moments(&toyfock::poisson_increment(dt), n);
        worst = worst.max((w.variance - t).abs()).max(w.mean.abs()).max((p.mean - t).abs());
    }
    outcome(worst <= 1e-12, format!("max deviation from T {worst:.2e} (≤ 1e-12)"))
}

fn composite_identity() -> Outcome {
    let one = |z: C64| Mat::from_element(1, 1, z);
    let scalar = composite_w(&one(I), &one(I)).unwrap()[(0, 0)];
    let scalar_err = (scalar - c(-0.6, 0.8)).norm();
    let mut worst: f64 = 0.0;
    for s in 0..SAMPLES {
        let mut r = rng(9000 + s);
        let mut diag = || Mat::from_diagonal(&nalgebra::DVector::from_fn(4, |_, _| c(0.0, r.random_range(-2.5..2.5)).exp()));
        let (wa, wb) = (diag(), diag());
        let printed = composite_w(&wa, &wb).unwrap();
        let routed = composite_w_via_addition(&wa, &wb).unwrap();
        worst = worst.max(fro(&(printed - routed)));
    }
    outcome(
        scalar_err <= 1e-12 && worst <= 1e-10,
        format!("scalar case {scalar:.6} (expected −0.6 + 0.8i), max route mismatch {worst:.2e} (≤ 1e-10)"),
    )
}

fn wong_zakai() -> Outcome {
    let start = Instant::now();
    let setup = WzSetup::new(1.0, vec![0.1, 0.05, 0.025, 0.0125], (0..32).collect());
    let res = wz_convergence(&pauli::x(), &pauli::z(), &setup).unwrap();
    let t = start.elapsed();
    let means: Vec<f64> = res.rows.iter().map(|r| r.mean_err).collect();
    let ratios_ok = res.ratios.len() >= 3 && res.ratios[res.ratios.len() - 3..].iter().all(|r| *r < 0.85);
    outcome(
        res.monotone && ratios_ok && within(t, 120.0),
        format!("mean errors {}, ratios {}, {:.1} s (< 120 s)", fmt_list(&means), fmt_list(&res.ratios), t.as_secs_f64()),
    )
}

fn gauge_independence() -> Outcome {
    let g = rand_unitary_ito(&mut rng(11), 2, 1);
    let tf = toyfock::default_test_functions(1.0).unwrap();
    let (u, v) = toyfock::default_vectors(2);
    let run = |im: f64| {
        let setup = SweepSetup::from_ito(g.clone(), kappa(im), tf.clone(), u.clone(), v.clone()).unwrap();
        let res = toyfock::convergence_sweep(&setup, &[0.01, 0.005]).unwrap();
        let mut bits: Vec<u64> = vec![res.oracle_sd.re.to_bits(), res.oracle_sd.im.to_bits()];
        for row in &res.rows {
            bits.extend([row.ito_value.re.to_bits(), row.ito_value.im.to_bits(), row.abs_error_ito.to_bits()]);
        }
        bits.extend([res.extrapolated_ito.re.to_bits(), res.extrapolated_ito.im.to_bits()]);
        bits
    };
    let base = run(0.0);
    let differing = IM_KAPPAS.iter().filter(|&&im| run(im) != base).count();
    outcome(
        differing == 0,
        format!("{} of {} gauges reproduce the G-determined outputs bit for bit", IM_KAPPAS.len() - differing, IM_KAPPAS.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("conversion roundtrip", conversion_roundtrip),
        ("unitarity chain", unitarity_chain),
        ("resolvent duality and geometric series", resolvent_duality),
        ("flow structure", flow_structure),
        ("Lindblad reduction", lindblad_reduction),
        ("diffusion coincidence", diffusion_coincidence),
        ("ED differs from SD under gauge noise", ed_vs_sd),
        ("exact discrete moments", exact_moments),
        ("composite W identity", composite_identity),
        ("Wong-Zakai convergence", wong_zakai),
        ("gauge independence", gauge_independence),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        println!("{} criterion {}: {name}: {}", if o.passed { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += usize::from(!o.passed);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
