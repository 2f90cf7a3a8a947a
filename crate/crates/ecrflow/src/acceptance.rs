//! Built-in verification suite with pinned tolerances.
//!
//! Each criterion returns a [`CriterionResult`]; the CLI prints one
//! pass/fail line per criterion and the integration test target asserts
//! them. The mutation option deliberately corrupts the saltation sign so a
//! healthy pipeline makes the derivative-oracle criterion fail.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::flow::{compose_local_flow, flow, IntegratorConfig};
use crate::linalg::{max_abs, spectral_norm};
use crate::model::{Corner, EventFn, EventModel};
use crate::oscillators::{
    sync1_chi, sync1_expected_dp, sync1_model, sync1_pure_model, sync1_section, sync2_expected_dp,
    sync2_find_orbit, sync2_model, Sync1Params, Sync2Params,
};
use crate::poincare::{
    flowbox_chart, orbit_from_anchor, perturbation_experiment, poincare_derivative_with,
    poincare_map, Section,
};
use crate::variational::{
    b_derivative_with, enumerate_words, per_word_derivative_with, single_surface_saltation,
    tangency_reduction_check, DerivativeOptions, Word,
};

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:2} {:<38} {:7.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

#[derive(Clone, Debug)]
pub struct AcceptanceOptions {
    pub seed: u64,
    /// Corrupt the saltation sign; used to demonstrate fault detection.
    pub mutation: bool,
}

impl Default for AcceptanceOptions {
    fn default() -> Self {
        AcceptanceOptions {
            seed: 42,
            mutation: false,
        }
    }
}

fn deriv_opts(opts: &AcceptanceOptions) -> DerivativeOptions {
    DerivativeOptions {
        chain_sign: if opts.mutation { -1.0 } else { 1.0 },
        ..DerivativeOptions::default()
    }
}

fn tight_config() -> IntegratorConfig {
    IntegratorConfig {
        rel_tol: 1e-12,
        abs_tol: 1e-13,
        event_tol: 1e-9,
        max_step: 0.1,
        max_events: 4096,
        horizon: 50.0,
    }
}

fn finish(id: usize, name: &str, start: Instant, passed: bool, detail: String) -> CriterionResult {
    CriterionResult {
        id,
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn fail_from_error(id: usize, name: &str, start: Instant, e: impl std::fmt::Display) -> CriterionResult {
    finish(id, name, start, false, format!("error: {e}"))
}

/// Two-surface planar model with one curved event surface and smoothly
/// varying region fields; exercises the nonlinear paths of the pipeline.
pub fn custom_nonlinear_model() -> EventModel {
    let h2 = EventFn::with_gradient(
        |x: &DVector<f64>| x[1] + 0.3 * x[0] * x[0],
        |x: &DVector<f64>| DVector::from_vec(vec![0.6 * x[0], 1.0]),
    );
    EventModel::builder(2)
        .event(EventFn::coordinate(2, 0))
        .event(h2)
        .field(|b: &Corner, x: &DVector<f64>| {
            let (s1, s2) = (b.sign(0) as f64, b.sign(1) as f64);
            DVector::from_vec(vec![
                1.0 - 0.2 * s1 + 0.1 * x[1],
                0.9 + 0.15 * s2 - 0.1 * x[0] + 0.05 * s1 * x[1],
            ])
        })
        .rho(DVector::zeros(2))
        .f_min(0.3)
        .validity_radius(0.6)
        .build()
        .expect("custom model construction")
}

/// Two tangent surfaces at the origin: h₁ = x₂ and h₂ = x₂ + x₁².
pub fn tangent_pair_model() -> EventModel {
    let h2 = EventFn::with_gradient(
        |x: &DVector<f64>| x[1] + x[0] * x[0],
        |x: &DVector<f64>| DVector::from_vec(vec![2.0 * x[0], 1.0]),
    );
    EventModel::builder(2)
        .event(EventFn::coordinate(2, 1))
        .event(h2)
        .field(|b: &Corner, _x: &DVector<f64>| {
            let (s1, s2) = (b.sign(0) as f64, b.sign(1) as f64);
            DVector::from_vec(vec![0.4 + 0.1 * s1, 1.0 + 0.2 * s1 - 0.1 * s2])
        })
        .rho(DVector::zeros(2))
        .f_min(0.3)
        .build()
        .expect("tangent pair model construction")
}

/// Criterion 1: Poincaré derivative of the first-order family equals
/// ((ν−δ)/(ν+δ))·I, via the saltation pipeline and via central finite
/// differences of the Poincaré map, entrywise to 1e−6.
pub fn criterion_1(opts: &AcceptanceOptions) -> CriterionResult {
    let start = Instant::now();
    let name = "sync1 Poincare derivative";
    let cfg = tight_config();
    let dopts = deriv_opts(opts);
    let mut worst = 0.0_f64;
    for (d, nu, delta) in [(2usize, 1.0, 0.5), (3, 1.0, 0.5), (3, 1.0, 0.9)] {
        let p = Sync1Params {
            d,
            nu,
            delta,
            big_delta: 0.05,
        };
        let model = match sync1_model(&p) {
            Ok(m) => m,
            Err(e) => return fail_from_error(1, name, start, e),
        };
        let (section, rspec) = sync1_section(&p);
        let orbit =
            match orbit_from_anchor(&model, section.anchor(), &section, &rspec, &cfg, 1e-7) {
                Ok(o) => o,
                Err(e) => return fail_from_error(1, name, start, e),
            };
        let expected = sync1_expected_dp(&p);

        // Saltation-chain pipeline, all word combinations.
        let dps = match poincare_derivative_with(&model, &orbit, &section, &cfg, &dopts) {
            Ok(v) => v,
            Err(e) => return fail_from_error(1, name, start, e),
        };
        for (_, dp) in &dps {
            worst = worst.max(max_abs(&(dp - &expected)));
        }

        // Finite differences of the Poincaré map.
        let eps = 1e-6;
        let k = d - 1;
        let mut dp_fd = DMatrix::<f64>::zeros(k, k);
        for c in 0..k {
            let dir = section.basis().column(c).into_owned();
            let xp = section.anchor() + eps * &dir;
            let xm = section.anchor() - eps * &dir;
            let pp = match poincare_map(&model, &section, &xp, &cfg, &rspec) {
                Ok(v) => v,
                Err(e) => return fail_from_error(1, name, start, e),
            };
            let pm = match poincare_map(&model, &section, &xm, &cfg, &rspec) {
                Ok(v) => v,
                Err(e) => return fail_from_error(1, name, start, e),
            };
            let col = (section.to_coords(&pp) - section.to_coords(&pm)) / (2.0 * eps);
            dp_fd.set_column(c, &col);
        }
        worst = worst.max(max_abs(&(&dp_fd - &expected)));
    }
    finish(
        1,
        name,
        start,
        worst <= 1e-6,
        format!("max entrywise error {worst:.3e} (tol 1e-6)"),
    )
}

/// Criterion 2: at the origin crossing all per-word state derivatives agree
/// pairwise to 1e−12 and equal ((ν−δ)/(ν+δ))·I; word counts are the ordered
/// Bell numbers.
pub fn criterion_2(opts: &AcceptanceOptions) -> CriterionResult {
    let start = Instant::now();
    let name = "sync1 C1 corner property";
    let cfg = tight_config();
    let dopts = deriv_opts(opts);
    let mut detail = String::new();
    let mut passed = true;
    for d in [2usize, 3] {
        let p = Sync1Params {
            d,
            nu: 1.0,
            delta: 0.5,
            big_delta: 0.05,
        };
        let model = match sync1_pure_model(&p) {
            Ok(m) => m,
            Err(e) => return fail_from_error(2, name, start, e),
        };
        let words = enumerate_words(d);
        let expect_count = if d == 2 { 3 } else { 13 };
        if words.len() != expect_count {
            return finish(
                2,
                name,
                start,
                false,
                format!("word count {} != {}", words.len(), expect_count),
            );
        }
        let eps = 1e-3;
        let x0 = DVector::from_element(d, -eps * (p.nu + p.delta));
        let t = eps + eps;
        let active: Vec<usize> = (0..d).collect();
        let mut mats = Vec::new();
        for w in &words {
            let m = match per_word_derivative_with(&model, t, &x0, eps, w, None, &cfg, &dopts) {
                Ok(m) => m,
                Err(e) => return fail_from_error(2, name, start, e),
            };
            mats.push((w.label(&active), m.columns(1, d).into_owned()));
        }
        let expected = DMatrix::<f64>::identity(d, d) * p.contraction();
        let mut worst_pair = 0.0_f64;
        let mut worst_exp = 0.0_f64;
        for i in 0..mats.len() {
            worst_exp = worst_exp.max(max_abs(&(&mats[i].1 - &expected)));
            for j in i + 1..mats.len() {
                worst_pair = worst_pair.max(max_abs(&(&mats[i].1 - &mats[j].1)));
            }
        }
        passed &= worst_pair <= 1e-12 && worst_exp <= 1e-9;
        detail.push_str(&format!(
            "d={d}: |Ω|={}, pairwise {worst_pair:.2e}, vs analytic {worst_exp:.2e}; ",
            words.len()
        ));
    }
    finish(2, name, start, passed, detail)
}

/// Criterion 3: second-order family fixed point and leading-order Poincaré
/// derivative, with the error norm decreasing at least 3× per doubling of β.
pub fn criterion_3(opts: &AcceptanceOptions) -> CriterionResult {
    let start = Instant::now();
    let name = "sync2 DP leading order decay";
    let cfg = tight_config();
    let dopts = deriv_opts(opts);
    let mut errors = Vec::new();
    let mut detail = String::new();
    for beta in [5.0, 10.0, 20.0] {
        let p = Sync2Params {
            d: 2,
            alpha: 1.0,
            beta,
            delta: 0.5,
            big_delta: 0.05,
        };
        let found = match sync2_find_orbit(&p, &cfg) {
            Ok(s) => s,
            Err(e) => return fail_from_error(3, name, start, e),
        };
        let lo = p.alpha / p.beta;
        let hi = (p.alpha + p.delta) / p.beta;
        if !(found.nu_beta > lo && found.nu_beta < hi) {
            return finish(
                3,
                name,
                start,
                false,
                format!("nu_beta {} outside ({lo}, {hi})", found.nu_beta),
            );
        }
        if found.residual > 1e-10 {
            return finish(
                3,
                name,
                start,
                false,
                format!("fixed-point residual {:.3e} > 1e-10", found.residual),
            );
        }
        let model = match sync2_model(&p) {
            Ok(m) => m,
            Err(e) => return fail_from_error(3, name, start, e),
        };
        let dps = match poincare_derivative_with(&model, &found.orbit, &found.section, &cfg, &dopts)
        {
            Ok(v) => v,
            Err(e) => return fail_from_error(3, name, start, e),
        };
        let leading = sync2_expected_dp(&p, found.nu_beta);
        let err = dps
            .iter()
            .map(|(_, dp)| spectral_norm(&(dp - &leading)))
            .fold(0.0_f64, f64::max);
        detail.push_str(&format!("beta={beta}: nu={:.6}, |E|={err:.3e}; ", found.nu_beta));
        errors.push(err);
    }
    let decays = errors.windows(2).all(|w| w[1] < w[0] && w[0] / w[1] >= 3.0);
    finish(
        3,
        name,
        start,
        decays,
        format!("{detail}ratios ≥ 3 required"),
    )
}

/// Directions strictly inside each word cone, built from the word's group
/// structure (equal depths within a group, well-separated across groups).
fn directions_for_word(word: &Word, d: usize, samples: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = word.groups();
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut w = DVector::zeros(d);
        for (gi, g) in groups.iter().enumerate() {
            // Earlier groups cross sooner: larger (less negative) depth.
            let depth = -(1.0 + 1.5 * gi as f64) * (1.0 + 0.2 * rng.random::<f64>());
            for &q in g {
                w[q] = -depth;
            }
        }
        // Positive scale: the cone is invariant under positive scaling.
        out.push(w * (0.5 + rng.random::<f64>()));
    }
    out
}

/// Criterion 4: one-sided finite differences of the flow match the
/// B-derivative along ≥ 5 directions per word (rel. error ≤ 1e−4 at
/// ε = 1e−5) on sync1, sync2, and the custom nonlinear model; positive
/// homogeneity is exact to integration tolerance.
pub fn criterion_4(opts: &AcceptanceOptions) -> CriterionResult {
    let start = Instant::now();
    let name = "B-derivative oracle equivalence";
    let cfg = tight_config();
    let dopts = deriv_opts(opts);
    let eps = 1e-5;
    let mut worst_rel = 0.0_f64;
    let mut worst_hom = 0.0_f64;
    let mut checks = 0usize;

    // (model, start point, time, label, cone-direction builder dimension).
    let cases: Vec<(EventModel, DVector<f64>, f64, usize)> = {
        let p1 = Sync1Params {
            d: 2,
            nu: 1.0,
            delta: 0.5,
            big_delta: 0.05,
        };
        let m1 = sync1_pure_model(&p1).expect("sync1 model");
        // Crossing at 0.045/(ν+δ) = 0.03, strictly inside (0, 0.06).
        let x1 = DVector::from_element(2, -0.045);

        let p2 = Sync2Params {
            d: 2,
            alpha: 1.0,
            beta: 10.0,
            delta: 0.5,
            big_delta: 0.05,
        };
        let m2 = sync2_model(&p2).expect("sync2 model");
        let nu0 = 0.12;
        let x2 = DVector::from_vec(vec![-nu0 * 0.02, -nu0 * 0.02, nu0, nu0]);

        let mc = custom_nonlinear_model();
        let bc = Corner::all_minus(2);
        let fc = mc.field(&bc, mc.rho());
        let xc = -0.02 * fc;

        vec![(m1, x1, 0.06, 2), (m2, x2, 0.05, 2), (mc, xc, 0.05, 2)]
    };

    for (ci, (model, x0, t, k)) in cases.iter().enumerate() {
        let words = enumerate_words(*k);
        for (wi, word) in words.iter().enumerate() {
            let dirs = directions_for_word(
                word,
                *k,
                5,
                opts.seed ^ ((ci as u64) << 8) ^ wi as u64,
            );
            for dir in dirs {
                // Lift cone directions on the event coordinates into state
                // space: for these models the first k coordinates carry the
                // surfaces.
                let mut w = DVector::zeros(model.dim());
                for q in 0..*k {
                    w[q] = dir[q];
                }
                let scale = 0.02 / w.norm();
                let w = w * scale;
                let analytic = match b_derivative_with(model, *t, x0, 0.0, &w, &cfg, &dopts) {
                    Ok(v) => v,
                    Err(e) => return fail_from_error(4, name, start, e),
                };
                let base = match flow(model, *t, x0, &cfg) {
                    Ok(v) => v.0,
                    Err(e) => return fail_from_error(4, name, start, e),
                };
                let shifted = match flow(model, *t, &(x0 + eps * &w), &cfg) {
                    Ok(v) => v.0,
                    Err(e) => return fail_from_error(4, name, start, e),
                };
                let fd = (shifted - &base) / eps;
                let rel = (&fd - &analytic).norm() / analytic.norm().max(1e-12);
                worst_rel = worst_rel.max(rel);
                checks += 1;

                // Positive homogeneity at λ ∈ {0, 0.5, 2}.
                let zero =
                    match b_derivative_with(model, *t, x0, 0.0, &(0.0 * &w), &cfg, &dopts) {
                        Ok(v) => v,
                        Err(e) => return fail_from_error(4, name, start, e),
                    };
                worst_hom = worst_hom.max(zero.norm());
                for lambda in [0.5, 2.0] {
                    let scaled = match b_derivative_with(
                        model,
                        *t,
                        x0,
                        0.0,
                        &(lambda * &w),
                        &cfg,
                        &dopts,
                    ) {
                        Ok(v) => v,
                        Err(e) => return fail_from_error(4, name, start, e),
                    };
                    worst_hom = worst_hom
                        .max((scaled - lambda * &analytic).norm() / analytic.norm().max(1e-12));
                }
            }
        }
    }
    let passed = worst_rel <= 1e-4 && worst_hom <= 1e-9;
    finish(
        4,
        name,
        start,
        passed,
        format!("{checks} directions, worst rel {worst_rel:.3e} (tol 1e-4), homogeneity {worst_hom:.2e}"),
    )
}

/// Criterion 5: flowbox conjugacy. The closed-form chart of the first-order
/// family translates at speed (ν+δ)𝟙; the generic chart straightens the
/// custom model to unit translation along e₁.
pub fn criterion_5(opts: &AcceptanceOptions) -> CriterionResult {
    let start = Instant::now();
    let name = "flowbox conjugacy";
    let cfg = tight_config();
    let tol = 10.0 * cfg.event_tol;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let p = Sync1Params {
        d: 2,
        nu: 1.0,
        delta: 0.5,
        big_delta: 0.05,
    };
    let m = match sync1_pure_model(&p) {
        Ok(m) => m,
        Err(e) => return fail_from_error(5, name, start, e),
    };
    let mut worst_closed = 0.0_f64;
    for _ in 0..100 {
        let x = DVector::from_fn(2, |_, _| rng.random_range(-0.2..0.2));
        let t = rng.random_range(-0.15..0.15);
        let y = match flow(&m, t, &x, &cfg) {
            Ok(v) => v.0,
            Err(e) => return fail_from_error(5, name, start, e),
        };
        let lhs = sync1_chi(&p, &y);
        let rhs = sync1_chi(&p, &x).add_scalar(t * (p.nu + p.delta));
        worst_closed = worst_closed.max((lhs - rhs).norm());
    }

    // Generic chart on the custom nonlinear model.
    let mc = custom_nonlinear_model();
    let grad = mc.event_gradient(0, mc.rho());
    let section = Section::new(EventFn::linear(grad), mc.rho().clone());
    let chart = flowbox_chart(&mc, &section, &cfg);
    let mut worst_box = 0.0_f64;
    let mut worst_inv = 0.0_f64;
    for _ in 0..100 {
        let x = DVector::from_fn(2, |_, _| rng.random_range(-0.05..0.05));
        let t = rng.random_range(-0.04..0.04);
        let y = match flow(&mc, t, &x, &cfg) {
            Ok(v) => v.0,
            Err(e) => return fail_from_error(5, name, start, e),
        };
        let cx = match chart.forward(&x) {
            Ok(v) => v,
            Err(e) => return fail_from_error(5, name, start, e),
        };
        let cy = match chart.forward(&y) {
            Ok(v) => v,
            Err(e) => return fail_from_error(5, name, start, e),
        };
        let mut expected = cx.clone();
        expected[0] += t;
        worst_box = worst_box.max((cy - expected).norm());
        let back = match chart.inverse(&cx) {
            Ok(v) => v,
            Err(e) => return fail_from_error(5, name, start, e),
        };
        worst_inv = worst_inv.max((back - x).norm());
    }
    let passed = worst_closed <= tol && worst_box <= tol && worst_inv <= tol;
    finish(
        5,
        name,
        start,
        passed,
        format!(
            "closed-form {worst_closed:.2e}, generic {worst_box:.2e}, inverse {worst_inv:.2e} (tol {tol:.1e})"
        ),
    )
}

/// Criterion 6: flow laws. Semigroup, inverse, and agreement between the
/// event-driven flow and the formal boundary-map composition, each within
/// 10·event_tol on 100 random samples per model.
pub fn criterion_6(opts: &AcceptanceOptions) -> CriterionResult {
    let start = Instant::now();
    let name = "flow-law properties";
    let cfg = tight_config();
    let tol = 10.0 * cfg.event_tol;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    let p = Sync1Params {
        d: 2,
        nu: 1.0,
        delta: 0.5,
        big_delta: 0.05,
    };
    let models: Vec<(&str, EventModel, f64, f64)> = vec![
        (
            "sync1",
            match sync1_pure_model(&p) {
                Ok(m) => m,
                Err(e) => return fail_from_error(6, name, start, e),
            },
            0.15,
            0.1,
        ),
        ("custom", custom_nonlinear_model(), 0.05, 0.04),
    ];
    let mut detail = String::new();
    let mut passed = true;
    for (label, m, radius, tspan) in &models {
        let mut worst_semi = 0.0_f64;
        let mut worst_inv = 0.0_f64;
        let mut worst_two = 0.0_f64;
        for _ in 0..100 {
            let x = DVector::from_fn(m.dim(), |_, _| rng.random_range(-radius..*radius));
            let s = rng.random_range(-tspan..*tspan);
            let t = rng.random_range(-tspan..*tspan);
            let direct = match flow(m, s + t, &x, &cfg) {
                Ok(v) => v.0,
                Err(e) => return fail_from_error(6, name, start, e),
            };
            let mid = match flow(m, s, &x, &cfg) {
                Ok(v) => v.0,
                Err(e) => return fail_from_error(6, name, start, e),
            };
            let comp = match flow(m, t, &mid, &cfg) {
                Ok(v) => v.0,
                Err(e) => return fail_from_error(6, name, start, e),
            };
            worst_semi = worst_semi.max((comp - &direct).norm());
            let back = match flow(m, -s, &mid, &cfg) {
                Ok(v) => v.0,
                Err(e) => return fail_from_error(6, name, start, e),
            };
            worst_inv = worst_inv.max((back - &x).norm());
            let two = match compose_local_flow(m, t, &x, &cfg) {
                Ok(v) => v,
                Err(e) => return fail_from_error(6, name, start, e),
            };
            let one = match flow(m, t, &x, &cfg) {
                Ok(v) => v.0,
                Err(e) => return fail_from_error(6, name, start, e),
            };
            worst_two = worst_two.max((two - one).norm());
        }
        passed &= worst_semi <= tol && worst_inv <= tol && worst_two <= tol;
        detail.push_str(&format!(
            "{label}: semigroup {worst_semi:.2e}, inverse {worst_inv:.2e}, two-path {worst_two:.2e}; "
        ));
    }
    finish(6, name, start, passed, format!("{detail}(tol {tol:.1e})"))
}

/// Criterion 7: the 1D two-piece saltation scalar 0.5 against one-sided
/// finite differences of the exact flow.
pub fn criterion_7(opts: &AcceptanceOptions) -> CriterionResult {
    let start = Instant::now();
    let name = "single-surface saltation";
    let cfg = tight_config();
    let dopts = deriv_opts(opts);
    let m = EventModel::builder(1)
        .event(EventFn::coordinate(1, 0))
        .field(|b: &Corner, _: &DVector<f64>| {
            DVector::from_element(1, if b.sign(0) < 0 { 2.0 } else { 1.0 })
        })
        .field_jacobian(|_: &Corner, _: &DVector<f64>| DMatrix::zeros(1, 1))
        .rho(DVector::zeros(1))
        .f_min(0.5)
        .build()
        .expect("1d model");
    let analytic = match single_surface_saltation(
        &m,
        &DVector::zeros(1),
        0,
        &Corner::all_minus(1),
        &Corner::all_plus(1),
    ) {
        Ok(v) => v,
        Err(e) => return fail_from_error(7, name, start, e),
    };
    let expected = 0.5;
    let x0 = DVector::from_element(1, -0.2);
    let t = 0.3;
    let w = DVector::from_element(1, 1.0);
    let bd = match b_derivative_with(&m, t, &x0, 0.0, &w, &cfg, &dopts) {
        Ok(v) => v,
        Err(e) => return fail_from_error(7, name, start, e),
    };
    let eps = 1e-7;
    let base = flow(&m, t, &x0, &cfg).map(|v| v.0);
    let shifted = flow(&m, t, &(&x0 + eps * &w), &cfg).map(|v| v.0);
    let (base, shifted) = match (base, shifted) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return fail_from_error(7, name, start, e),
    };
    let fd = (shifted[0] - base[0]) / eps;
    let e1 = (analytic[(0, 0)] - expected).abs();
    let e2 = (bd[0] - expected).abs();
    let e3 = (fd - expected).abs();
    let passed = e1 <= 1e-12 && e2 <= 1e-6 && e3 <= 1e-6;
    finish(
        7,
        name,
        start,
        passed,
        format!("matrix err {e1:.2e}, pipeline err {e2:.2e}, fd err {e3:.2e} (tol 1e-6)"),
    )
}

/// Criterion 8: tangency reduction identity to 1e−12 on the constructed
/// tangent pair; transverse surfaces are rejected.
pub fn criterion_8(_opts: &AcceptanceOptions) -> CriterionResult {
    let start = Instant::now();
    let name = "tangency reduction";
    let m = tangent_pair_model();
    let rho = DVector::zeros(2);
    let ok = match tangency_reduction_check(&m, &rho, 0, 1) {
        Ok(v) => v,
        Err(e) => return fail_from_error(8, name, start, e),
    };
    // Identical surfaces are trivially tangent.
    let m_same = EventModel::builder(2)
        .event(EventFn::coordinate(2, 1))
        .event(EventFn::coordinate(2, 1))
        .field(|b: &Corner, _: &DVector<f64>| {
            DVector::from_vec(vec![0.5, 1.0 + 0.2 * b.sign(0) as f64])
        })
        .rho(DVector::zeros(2))
        .f_min(0.3)
        .build()
        .expect("duplicate surface model");
    let ok_same = match tangency_reduction_check(&m_same, &rho, 0, 1) {
        Ok(v) => v,
        Err(e) => return fail_from_error(8, name, start, e),
    };
    // The custom model's surfaces are transverse at the origin.
    let mc = custom_nonlinear_model();
    let rejected = matches!(
        tangency_reduction_check(&mc, &rho, 0, 1),
        Err(crate::error::Error::NotTangent { .. })
    );
    finish(
        8,
        name,
        start,
        ok && ok_same && rejected,
        format!("tangent pair {ok}, identical {ok_same}, transverse rejected {rejected}"),
    )
}

/// Criterion 9: empirical perturbation continuity on the first-order family
/// and rejection of perturbations at the transversality margin.
pub fn criterion_9(opts: &AcceptanceOptions) -> CriterionResult {
    let start = Instant::now();
    let name = "perturbation continuity";
    let cfg = tight_config();
    let p = Sync1Params {
        d: 2,
        nu: 1.0,
        delta: 0.5,
        big_delta: 0.05,
    };
    let m = match sync1_pure_model(&p) {
        Ok(m) => m,
        Err(e) => return fail_from_error(9, name, start, e),
    };
    let sizes = [1e-2, 1e-3, 1e-4];
    let curve = match perturbation_experiment(&m, &sizes, 40, 0.3, 0.15, &cfg, opts.seed) {
        Ok(c) => c,
        Err(e) => return fail_from_error(9, name, start, e),
    };
    let monotone = curve.deviations.windows(2).all(|w| w[1] < w[0]);
    let bounded = curve
        .deviations
        .iter()
        .zip(&sizes)
        .all(|(dev, s)| *dev <= 10.0 * s);
    let rejected = matches!(
        perturbation_experiment(&m, &[m.f_min()], 2, 0.3, 0.15, &cfg, opts.seed),
        Err(crate::error::Error::PerturbationTooLarge { .. })
    );
    let passed = monotone && bounded && rejected;
    finish(
        9,
        name,
        start,
        passed,
        format!(
            "deviations {:?} (≤ 10×size {bounded}, monotone {monotone}), margin rejected {rejected}",
            curve
                .deviations
                .iter()
                .map(|d| format!("{d:.2e}"))
                .collect::<Vec<_>>()
        ),
    )
}

/// Criterion 10: iterating the first-order Poincaré map from random
/// desynchronized starts contracts the coordinate spread geometrically at a
/// fitted rate within 10% of (ν−δ)/(ν+δ).
pub fn criterion_10(opts: &AcceptanceOptions) -> CriterionResult {
    let start = Instant::now();
    let name = "synchronization dynamics";
    let cfg = tight_config();
    let p = Sync1Params {
        d: 3,
        nu: 1.0,
        delta: 0.5,
        big_delta: 0.05,
    };
    let m = match sync1_model(&p) {
        Ok(m) => m,
        Err(e) => return fail_from_error(10, name, start, e),
    };
    let (section, rspec) = sync1_section(&p);
    let c_expected = p.contraction();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xc0ffee);
    let mut worst_rate_err = 0.0_f64;
    for _ in 0..20 {
        let y = DVector::from_fn(p.d - 1, |_, _| rng.random_range(-0.01..0.01));
        let mut x = section.from_coords(&y);
        let mut spreads = Vec::new();
        for _ in 0..7 {
            let spread = x.max() - x.min();
            spreads.push(spread);
            x = match poincare_map(&m, &section, &x, &cfg, &rspec) {
                Ok(v) => v,
                Err(e) => return fail_from_error(10, name, start, e),
            };
        }
        // Geometric fit: mean of log-ratios over iterations with signal.
        let mut ratios = Vec::new();
        for w in spreads.windows(2) {
            if w[0] > 1e-11 && w[1] > 1e-11 {
                ratios.push(w[1] / w[0]);
            }
        }
        if ratios.len() < 3 {
            return finish(10, name, start, false, "spread vanished too fast".into());
        }
        let rate =
            (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp();
        worst_rate_err = worst_rate_err.max((rate - c_expected).abs() / c_expected);
    }
    finish(
        10,
        name,
        start,
        worst_rate_err <= 0.10,
        format!(
            "worst fitted-rate deviation {:.4} relative (limit 0.10)",
            worst_rate_err
        ),
    )
}

/// Runs every criterion in order.
pub fn run_all(opts: &AcceptanceOptions) -> Vec<CriterionResult> {
    vec![
        criterion_1(opts),
        criterion_2(opts),
        criterion_3(opts),
        criterion_4(opts),
        criterion_5(opts),
        criterion_6(opts),
        criterion_7(opts),
        criterion_8(opts),
        criterion_9(opts),
        criterion_10(opts),
    ]
}

