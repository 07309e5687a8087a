//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! with its measured quantities and enforcing the stated tolerance and time
//! budget.
//!
//! Criterion 7 (the rectangle-norm lower bound scanned to per-axis depth 6)
//! is known to fail at any finite truncation order: the bound `‖χ_I‖ > 1/c`
//! relies on every dyadic interval containing a fully-written anchored
//! window, and the number of reachable anchor columns is capped near 45
//! because the cut points must at least halve at every step while interval
//! arithmetic lives in f64 (column `j` first appears at walk position
//! `≈ j²/2`, so depth-12 coverage would need `≈ 8·10⁶` cut points at scale
//! `2^{-8·10⁶}`). The companion test `closedness_holds_on_anchored_scales`
//! shows the same scan passing on scales the anchors do cover.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lpdot::construct::{
    auto_params, certify_cuts, envelope, first_hit, omega_certificate, run_pipeline, select_tk,
    ConstructionParams, ExponentSpec, PipelineConfig, PipelineMode,
};
use lpdot::diverge::{compare_growth, run_diverge, DivergeConfig};
use lpdot::maps::{DigitInterleave, DyadicBox, DyadicIv};
use lpdot::piecewise::Piecewise1D;
use lpdot::systems::{BiorthSystem, Which};
use lpdot::vexp::{self, BoxSum, ExponentFn};

const E: f64 = std::f64::consts::E;

fn report(criterion: u32, pass: bool, detail: &str) {
    println!(
        "criterion {:2} {}: {detail}",
        criterion,
        if pass { "PASS" } else { "FAIL" }
    );
}

fn default_pipeline(levels: usize, samples: usize) -> PipelineConfig {
    PipelineConfig { levels, samples, ..Default::default() }
}

#[test]
fn criterion_01_closed_form_integral() {
    let f = Piecewise1D::log_e_over_t();
    let start = Instant::now();
    let value = f.integrate(0.0, 1.0).unwrap();
    let elapsed = start.elapsed();
    let pass = (value - 2.0).abs() <= 1e-12 && elapsed.as_micros() < 1000;
    report(1, pass, &format!("∫₀¹ ln(e/t) dt = {value} (tol 1e-12), {elapsed:?}"));
    assert!(pass, "value {value}, elapsed {elapsed:?}");
}

#[test]
fn criterion_02_interleave_measure_preservation() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for dim in 1..=3usize {
        let rho = DigitInterleave::for_dim(dim);
        let rep = rho.verify_preserving(12);
        worst = worst.max(rep.max_discrepancy);
        checked += rep.checked;
    }
    let elapsed = start.elapsed();
    let pass = worst == 0.0 && elapsed.as_secs_f64() < 5.0;
    report(2, pass, &format!("{checked} dyadic intervals to depth 12, n ∈ {{1,2,3}}, max discrepancy = {worst}, {elapsed:?}"));
    assert!(pass);
}

#[test]
fn criterion_03_rearrangement_equimeasurable() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut max_integral_drift = 0.0f64;
    for _ in 0..1000 {
        let pieces = rng.gen_range(2..=64usize);
        let mut breaks: Vec<f64> = vec![0.0, 1.0];
        for _ in 0..pieces - 1 {
            breaks.push(rng.gen_range(1..(1u64 << 20)) as f64 / (1u64 << 20) as f64);
        }
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();
        let values: Vec<f64> = (0..breaks.len() - 1).map(|_| rng.gen_range(0.0..16.0)).collect();
        let f = Piecewise1D::step(&breaks, &values).unwrap();
        let r = f.rearrange().unwrap();
        assert!(r.exact);
        for &v in &values {
            let a = f.distribution(v);
            let b = r.sorted.distribution(v);
            assert_eq!(a, b, "distribution mismatch at value {v}");
        }
        let drift =
            (f.integrate(0.0, 1.0).unwrap() - r.sorted.integrate(0.0, 1.0).unwrap()).abs();
        max_integral_drift = max_integral_drift.max(drift);
    }
    let elapsed = start.elapsed();
    let pass = max_integral_drift <= 1e-12 && elapsed.as_secs_f64() < 10.0;
    report(3, pass, &format!("1000 step functions: exact distribution equality, max integral drift = {max_integral_drift:e}, {elapsed:?}"));
    assert!(pass);
}

#[test]
fn criterion_04_luxemburg_norm_constant_exponent() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let rho = DigitInterleave::for_dim(2);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let p0 = [1.5, 2.0, 3.0][i % 3];
        let p = ExponentFn::pullback(Piecewise1D::constant(p0), rho);
        let mut terms = Vec::new();
        for _ in 0..rng.gen_range(1..=6) {
            let dx = rng.gen_range(0..=5u32);
            let dy = rng.gen_range(0..=5u32);
            let axes = vec![
                DyadicIv { num: rng.gen_range(0..(1u64 << dx).max(1)), depth: dx },
                DyadicIv { num: rng.gen_range(0..(1u64 << dy).max(1)), depth: dy },
            ];
            terms.push((DyadicBox { axes }, rng.gen_range(0.1..5.0)));
        }
        let f = BoxSum::new(terms);
        let want = vexp::lp_norm_constant(&f, &rho, p0).unwrap();
        let got = vexp::norm(&f, &p, 1e-10).unwrap().value;
        worst = worst.max((got - want).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-8 && elapsed.as_secs_f64() < 10.0;
    report(4, pass, &format!("100 box sums, p₀ ∈ {{1.5,2,3}}: max |bisection − closed form| = {worst:e}, {elapsed:?}"));
    assert!(pass);
}

#[test]
fn criterion_05_cut_point_certificates() {
    let start = Instant::now();
    // Unbounded conjugate profile: the envelope is exactly ln(e/t).
    let h_log = Piecewise1D::log_e_over_t();
    let params = ConstructionParams { a: 0.5, c: 1.1 * E * E, big_c: 12.5, t1: 0.125 };
    let cuts = select_tk(&h_log, &params, 20).unwrap();
    let cert_log = certify_cuts(&h_log, &params, &cuts).unwrap();

    // Bounded conjugate profile p' ≡ 3: envelope min(3, ln(e/t)); parameters
    // per the auto policy (a = half witness, c doubled to feasibility).
    let h3 = envelope(&Piecewise1D::constant(3.0)).unwrap();
    let (params3, cuts3) = auto_params(&h3, 20).unwrap();
    assert!(params3.c > (1.0 / params3.a).exp(), "c must exceed e^(1/a)");
    let cert_3 = certify_cuts(&h3, &params3, &cuts3).unwrap();

    let elapsed = start.elapsed();
    let pass = cert_log.pass && cert_3.pass && elapsed.as_secs_f64() < 5.0;
    report(5, pass, &format!(
        "K=20 certificates: log envelope (a·ln(e/t₁)={:.4}, min ∫={:.4}), bounded envelope (a={:.3}, c={:.1}, min ∫={:.4}), {elapsed:?}",
        cert_log.a_log_t1, cert_log.min_slab_integral, params3.a, params3.c, cert_3.min_slab_integral
    ));
    assert!(pass, "{cert_log:?} / {cert_3:?}");
}

#[test]
fn criterion_06_pipeline_inequalities() {
    let start = Instant::now();
    let r = run_pipeline(&default_pipeline(12, 10_000)).unwrap();
    let c = &r.certificates;
    let monotone_ok = c.overlay.max_monotone_violation <= 0.0;
    let mass_ok = c.overlay.mass <= 2.0;
    let window_ok = c.overlay.min_window_margin >= 0.0;
    let transported_ok = c.transported_profile_margin <= 1e-9;
    let conj_ok = c.conj_bound_pass;
    let elapsed = start.elapsed();
    let pass =
        monotone_ok && mass_ok && window_ok && transported_ok && conj_ok && elapsed.as_secs_f64() < 30.0;
    report(6, pass, &format!(
        "K=12: monotone ≤ {:.1e}, mass = {:.6} ≤ 2, window margin = {:.4}, overlay ≤ transported profile (margin {:.2e}), conjugate bound per piece = {}, {elapsed:?}",
        c.overlay.max_monotone_violation, c.overlay.mass, c.overlay.min_window_margin,
        c.transported_profile_margin, conj_ok
    ));
    assert!(pass, "{c:?}");
}

#[test]
fn criterion_07_closedness_scan_depth6() {
    let start = Instant::now();
    let r = run_pipeline(&default_pipeline(12, 2000)).unwrap();

    // Sanity half: boxes whose image interval contains a fully written
    // window must clear the bound (this part reflects what the finite
    // construction actually guarantees).
    let bound = 1.0 / r.params.c;
    let mut covered_min = f64::INFINITY;
    for w in r.windows.iter().filter(|w| !w.skipped) {
        let cell = w.cell.clone().unwrap();
        let f = BoxSum::new(vec![(cell, 1.0)]);
        let n = vexp::norm(&f, &r.exponent, 1e-8).unwrap().value;
        covered_min = covered_min.min(n);
    }
    assert!(
        covered_min > bound,
        "window-covered boxes must clear the bound: {covered_min} vs {bound}"
    );

    let rep = vexp::char_lower_bound(&r.exponent, 6, r.params.c, 1e-8, false).unwrap();
    let elapsed = start.elapsed();
    let pass = rep.pass() && elapsed.as_secs_f64() < 60.0;
    report(7, pass, &format!(
        "min over {} boxes to per-axis depth 6 of ‖χ_I‖ = {:.6e} vs 1/c = {:.6e} (covered-window min = {:.4}); violations = {}, {elapsed:?}",
        rep.boxes_checked, rep.min_norm, rep.bound, covered_min, rep.violations
    ));
    assert!(
        pass,
        "depth-6 scan: min norm {:.3e} ≤ 1/c = {:.3e} on {} boxes (first violation at {:?}). \
         Expected at finite truncation: anchored windows reach only ~45 columns, far short of \
         the 4096 depth-12 intervals the bound needs; see the module docs above.",
        rep.min_norm,
        rep.bound,
        rep.violations,
        rep.min_box
    );
}

/// The same scan on scales the anchor family does cover: every Morton cell
/// whose image interval is coarse enough to contain a written window clears
/// the bound. This is the finite-truncation content of the closedness
/// criterion.
#[test]
fn closedness_holds_on_anchored_scales() {
    // Anchor the dense set at the odd sixteenths so all eight depth-3
    // intervals carry windows; K = first_hit(8) = 29 covers every column.
    let dense: Vec<f64> = (0..8).map(|j| (2 * j + 1) as f64 / 16.0).collect();
    let config = PipelineConfig {
        levels: first_hit(8),
        dense_set: Some(dense),
        samples: 1000,
        ..Default::default()
    };
    let r = run_pipeline(&config).unwrap();
    let bound = 1.0 / r.params.c;
    let rho = r.exponent.rho;
    let mut min_norm = f64::INFINITY;
    for depth in 0..=3u32 {
        for num in 0..(1u64 << depth) {
            let cell = rho.preimage_box(DyadicIv { num, depth }).unwrap();
            let f = BoxSum::new(vec![(cell, 1.0)]);
            let n = vexp::norm(&f, &r.exponent, 1e-8).unwrap().value;
            min_norm = min_norm.min(n);
        }
    }
    println!("anchored-scale scan: min ‖χ_I‖ = {min_norm:.4} vs 1/c = {bound:.4}");
    assert!(min_norm > bound, "{min_norm} vs {bound}");
}

#[test]
fn criterion_08_norm_equivalence_sandwich() {
    let start = Instant::now();
    let r = run_pipeline(&default_pipeline(12, 2000)).unwrap();
    let cells: Vec<DyadicBox> = r
        .windows
        .iter()
        .filter(|w| !w.skipped)
        .map(|w| w.cell.clone().unwrap())
        .collect();
    assert!(cells.len() >= 8, "need a usable window family");
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut ratio_lo = f64::INFINITY;
    let mut ratio_hi = 0.0f64;
    for _ in 0..50 {
        let terms: Vec<(DyadicBox, f64)> =
            cells.iter().map(|c| (c.clone(), rng.gen_range(0.1..10.0))).collect();
        let f = BoxSum::new(terms);
        let l1 = vexp::l1_norm(&f, &r.conj_exponent.rho).unwrap();
        let n = vexp::norm(&f, &r.conj_exponent, 1e-9).unwrap().value;
        let ratio = n / l1;
        ratio_lo = ratio_lo.min(ratio);
        ratio_hi = ratio_hi.max(ratio);
    }
    let elapsed = start.elapsed();
    let pass =
        ratio_lo >= 0.25 - 1e-6 && ratio_hi <= 4.0 + 1e-6 && elapsed.as_secs_f64() < 60.0;
    report(8, pass, &format!(
        "50 random coefficient vectors on the window cells: ‖·‖_p̄/‖·‖₁ ∈ [{ratio_lo:.4}, {ratio_hi:.4}] ⊆ [1/4, 4], {elapsed:?}"
    ));
    assert!(pass);
}

#[test]
fn criterion_09_omega_certificate_exact() {
    let start = Instant::now();
    let r = run_pipeline(&default_pipeline(12, 2000)).unwrap();
    let gap = omega_certificate(&r, 8).unwrap();
    let elapsed = start.elapsed();
    let pass = gap == 0.0 && elapsed.as_secs_f64() < 10.0;
    report(9, pass, &format!("max |p̄(x) − p(ω(x))| over the depth-8 grid = {gap:e} (exact bookkeeping), {elapsed:?}"));
    assert!(pass);
}

#[test]
fn criterion_10_systems() {
    let start = Instant::now();
    let walsh = BiorthSystem::walsh(2);
    let gram_walsh = walsh.gram_check(64);
    let pwalsh = BiorthSystem::perturbed_walsh(2, 0.1, 64);
    let gram_pwalsh = pwalsh.gram_check(64);
    let sys1 = BiorthSystem::walsh(1);
    let e = vec![DyadicBox { axes: vec![DyadicIv { num: 0, depth: 1 }] }];
    let rep = sys1.vanishing_check(&e, Which::F, 64).unwrap();
    let zeros_ok = rep.values[1..].iter().all(|&v| v == 0.0);
    let elapsed = start.elapsed();
    let pass =
        gram_walsh == 0.0 && gram_pwalsh < 1e-10 && zeros_ok && elapsed.as_secs_f64() < 10.0;
    report(10, pass, &format!(
        "Walsh Gram(64) deviation = {gram_walsh}, perturbed-Walsh M=64 deviation = {gram_pwalsh:e}, ∫_{{[0,1/2)}} f_n exact zeros for n ≥ 2 = {zeros_ok}, {elapsed:?}"
    ));
    assert!(pass);
}

#[test]
fn criterion_11_divergence_signature() {
    let start = Instant::now();
    let mk = |nmax: usize| DivergeConfig { nmax, seed: 11, ..Default::default() };
    let small = run_diverge(&mk(4)).unwrap();
    let large = run_diverge(&mk(8)).unwrap();
    let cmp = compare_growth(&small.growth, &large.growth, 10.0);
    let membership_ok = small.membership.pass && large.membership.pass;
    let elapsed = start.elapsed();
    let pass = membership_ok
        && cmp.cellwise_nondecreasing
        && cmp.strictly_grew
        && elapsed.as_secs_f64() < 300.0;
    report(11, pass, &format!(
        "paired nmax 4→8 (same seed/grid): cellwise nondecreasing = {}, fraction(G>10) {:.5} → {:.5} (strict), ratios f1/f2 = {:.3}/{:.3} and {:.3}/{:.3} ⊆ [1/4,4], norms finite, {elapsed:?}",
        cmp.cellwise_nondecreasing, cmp.fraction_before, cmp.fraction_after,
        small.membership.ratio_f1, small.membership.ratio_f2,
        large.membership.ratio_f1, large.membership.ratio_f2
    ));
    assert!(pass, "{cmp:?} / {:?} / {:?}", small.membership, large.membership);
}

#[test]
fn criterion_12_determinism() {
    let start = Instant::now();
    let bin = env!("CARGO_BIN_EXE_lpdot");
    let base = std::env::temp_dir().join(format!("lpdot-acc-{}", std::process::id()));
    let run = |tag: &str| {
        let out = base.join(tag);
        let status = std::process::Command::new(bin)
            .args(["all", "--seed", "99", "--out"])
            .arg(&out)
            .output()
            .expect("run lpdot all");
        assert!(status.status.success(), "lpdot all failed: {:?}", status);
        out
    };
    let d1 = run("a");
    let d2 = run("b");
    let mut files: Vec<_> = std::fs::read_dir(&d1).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert!(!files.is_empty());
    let mut identical = true;
    for name in &files {
        let a = std::fs::read(d1.join(name)).unwrap();
        let b = std::fs::read(d2.join(name)).unwrap();
        if a != b {
            identical = false;
            eprintln!("output differs: {name:?}");
        }
    }
    let _ = std::fs::remove_dir_all(&base);
    let elapsed = start.elapsed();
    let pass = identical;
    report(12, pass, &format!("two `all` runs with the same seed produce byte-identical outputs ({} files), {elapsed:?}", files.len()));
    assert!(pass);
}

/// Pipeline invariant: a second divergence-style property exercised at the
/// acceptance level — the combined pair masses stay below the schedule sum.
#[test]
fn fpair_mass_bound() {
    let r = run_diverge(&DivergeConfig { nmax: 4, seed: 3, ..Default::default() }).unwrap();
    let eps_sum: f64 = (1..=4).map(|n| 1.0 / (n * n) as f64).sum();
    assert!((r.membership.l1_f1 - eps_sum).abs() < 1e-12);
    assert!((r.membership.l1_f2 - eps_sum).abs() < 1e-12);
    for rec in &r.fpair.provenance {
        let k = rec.level;
        assert!(rec.volume <= r.pipeline.cuts.slab(first_hit(rec.pool_idx + 1)).1, "level {k}");
    }
}

/// The eq.-(10)-style sandwich for individual window indicators:
/// ½‖χ‖₁ ≤ ‖χ‖_{p̄} ≤ 2‖χ‖_{1+C/ln(e/t_k)}.
#[test]
fn window_indicator_norm_sandwich() {
    let r = run_pipeline(&default_pipeline(12, 2000)).unwrap();
    for w in r.windows.iter().filter(|w| !w.skipped) {
        let cell = w.cell.clone().unwrap();
        let f = BoxSum::new(vec![(cell, 1.0)]);
        let l1 = vexp::l1_norm(&f, &r.conj_exponent.rho).unwrap();
        let n = vexp::norm(&f, &r.conj_exponent, 1e-10).unwrap().value;
        let p_hi = 1.0 + r.params.big_c / lpdot::piecewise::log_e_over(r.cuts.t(w.k));
        let upper = 2.0 * vexp::lp_norm_constant(&f, &r.conj_exponent.rho, p_hi).unwrap();
        assert!(0.5 * l1 <= n + 1e-9, "window {}: lower sandwich", w.k);
        assert!(n <= upper + 1e-9, "window {}: upper sandwich ({n} vs {upper})", w.k);
    }
}

/// The exponent from the §2-style direct mode also certifies cleanly.
#[test]
fn direct_mode_pipeline() {
    let config = PipelineConfig {
        exponent: ExponentSpec::Log,
        mode: PipelineMode::Direct,
        dim: 1,
        levels: 10,
        samples: 2000,
        ..Default::default()
    };
    let r = run_pipeline(&config).unwrap();
    assert!(r.certificates.cuts.pass);
    assert!(r.certificates.equimeasurability_gap <= 1e-9);
    assert_eq!(r.certificates.omega_gap, 0.0);
}
