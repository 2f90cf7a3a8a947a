//! Time-to-impact maps, impact and Poincaré maps, their per-word
//! derivatives, stability certification, flowbox charts, and the empirical
//! perturbation experiment.

use std::hash::{Hash, Hasher};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow::{flow, flow_core, EventRecord, IntegratorConfig, SectionProbe};
use crate::linalg::{orthonormal_complement, spectral_norm};
use crate::model::{sample_in_ball, Corner, EventFn, EventModel};
use crate::variational::{
    enumerate_words, saltation_chain_with_sign, segment_with_columns, DerivativeOptions,
};

/// A local section: a scalar function, its level through the anchor, and an
/// orthonormal tangent basis at the anchor.
#[derive(Clone)]
pub struct Section {
    sigma: EventFn,
    level: f64,
    anchor: DVector<f64>,
    basis: DMatrix<f64>,
}

impl Section {
    pub fn new(sigma: EventFn, anchor: DVector<f64>) -> Section {
        let level = sigma.value(&anchor);
        let basis = orthonormal_complement(&sigma.gradient(&anchor));
        Section {
            sigma,
            level,
            anchor,
            basis,
        }
    }

    /// Replace the tangent basis (columns must be orthonormal and span
    /// ker Dσ(anchor)); fixes the coordinate layout of Poincaré derivatives.
    pub fn with_basis(mut self, basis: DMatrix<f64>) -> Section {
        self.basis = basis;
        self
    }

    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.sigma.gradient(x)
    }

    pub fn offset(&self, x: &DVector<f64>) -> f64 {
        self.sigma.value(x) - self.level
    }

    /// Tangent coordinates of a (near-)section point relative to the anchor.
    pub fn to_coords(&self, x: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * (x - &self.anchor)
    }

    pub fn from_coords(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.anchor + &self.basis * y
    }
}

/// How a first return is recognized: a window of admissible return times, a
/// level shift accumulated per lap (nonzero on covering-space charts), and
/// an optional deck translation applied to the returned state.
#[derive(Clone, Debug)]
pub struct ReturnSpec {
    pub window: (f64, f64),
    pub level_shift: f64,
    pub deck: Option<DVector<f64>>,
}

impl ReturnSpec {
    /// Euclidean first return: window (T/2, 3T/2) around the known period.
    pub fn euclidean(period: f64) -> ReturnSpec {
        ReturnSpec {
            window: (0.5 * period, 1.5 * period),
            level_shift: 0.0,
            deck: None,
        }
    }
}

/// A closed orbit with one recorded period of samples and crossings.
#[derive(Clone, Debug)]
pub struct PeriodicOrbit {
    pub anchor: DVector<f64>,
    pub period: f64,
    pub times: Vec<f64>,
    pub samples: Vec<DVector<f64>>,
    pub clusters: Vec<EventRecord>,
    /// Corner before the first cluster and after the last one.
    pub first_corner: Corner,
    pub last_corner: Corner,
}

/// Time μ(x) for the trajectory to impact the section level.
///
/// The search direction follows the signed distance and the local slope
/// Dσ·F, so points past the section yield negative times.
pub fn time_to_impact(
    model: &EventModel,
    x: &DVector<f64>,
    section: &Section,
    config: &IntegratorConfig,
) -> Result<f64> {
    Ok(impact(model, x, section, config)?.0)
}

/// The impact map ψ(x) = φ(μ(x), x).
pub fn impact_map(
    model: &EventModel,
    x: &DVector<f64>,
    section: &Section,
    config: &IntegratorConfig,
) -> Result<DVector<f64>> {
    Ok(impact(model, x, section, config)?.1)
}

fn impact(
    model: &EventModel,
    x: &DVector<f64>,
    section: &Section,
    config: &IntegratorConfig,
) -> Result<(f64, DVector<f64>)> {
    let w0 = section.offset(x);
    if w0.abs() <= config.event_tol {
        return Ok((0.0, x.clone()));
    }
    let b = model.classify(x);
    let slope = section.gradient(x).dot(&model.field(&b, x));
    let preferred = if w0 * slope < 0.0 { 1.0 } else { -1.0 };
    for dir in [preferred, -preferred] {
        let g = |y: &DVector<f64>| section.offset(y);
        let probe = SectionProbe {
            g: &g,
            accept_after: 0.0,
        };
        let out = flow_core(model, dir * config.horizon, x, config, false, Some(probe))?;
        if let Some((t_hit, y_hit)) = out.probe_hit {
            let bh = model.classify(&y_hit);
            let v = section.gradient(&y_hit).dot(&model.field(&bh, &y_hit));
            if v.abs() < model.f_min() {
                return Err(Error::NonTransverseSection { value: v.abs() });
            }
            return Ok((t_hit, y_hit));
        }
    }
    Err(Error::NoImpact {
        surface: usize::MAX,
        horizon: config.horizon,
    })
}

/// First return to the section within the window of `rspec`, with the deck
/// translation applied so iterates stay on the working chart.
pub fn poincare_map(
    model: &EventModel,
    section: &Section,
    x: &DVector<f64>,
    config: &IntegratorConfig,
    rspec: &ReturnSpec,
) -> Result<DVector<f64>> {
    Ok(poincare_return(model, section, x, config, rspec)?.1)
}

pub fn poincare_return(
    model: &EventModel,
    section: &Section,
    x: &DVector<f64>,
    config: &IntegratorConfig,
    rspec: &ReturnSpec,
) -> Result<(f64, DVector<f64>)> {
    let target = section.level + rspec.level_shift;
    let g = |y: &DVector<f64>| self_offset(&section.sigma, y, target);
    let probe = SectionProbe {
        g: &g,
        accept_after: rspec.window.0,
    };
    let out = flow_core(model, rspec.window.1, x, config, false, Some(probe))?;
    match out.probe_hit {
        Some((t_hit, y_hit)) => {
            let y = match &rspec.deck {
                Some(d) => y_hit - d,
                None => y_hit,
            };
            Ok((t_hit, y))
        }
        None => Err(Error::NoReturn {
            t_min: rspec.window.0,
            t_max: rspec.window.1,
        }),
    }
}

fn self_offset(sigma: &EventFn, y: &DVector<f64>, target: f64) -> f64 {
    sigma.value(y) - target
}

/// Closes the orbit through `anchor` and records one period.
pub fn orbit_from_anchor(
    model: &EventModel,
    anchor: &DVector<f64>,
    section: &Section,
    rspec: &ReturnSpec,
    config: &IntegratorConfig,
    tol_orbit: f64,
) -> Result<PeriodicOrbit> {
    let (period, back) = poincare_return(model, section, anchor, config, rspec)?;
    let closure = (&back - anchor).norm();
    if closure > tol_orbit {
        return Err(Error::InvalidParameter(format!(
            "orbit through the anchor does not close: residual {closure:.3e} > {tol_orbit:.3e}"
        )));
    }
    let (_, traj) = flow(model, period, anchor, config)?;
    let first_corner = traj
        .events
        .first()
        .map(|e| e.corner_before.clone())
        .unwrap_or_else(|| model.classify(anchor));
    let last_corner = traj
        .events
        .last()
        .map(|e| e.corner_after.clone())
        .unwrap_or_else(|| model.classify(anchor));
    Ok(PeriodicOrbit {
        anchor: anchor.clone(),
        period,
        times: traj.times,
        samples: traj.states,
        clusters: traj.events,
        first_corner,
        last_corner,
    })
}

/// Per-word Poincaré derivatives over one period.
///
/// Smooth-segment variational matrices are computed once; every combination
/// of per-cluster words contributes one candidate derivative, restricted to
/// the section tangent basis through the oblique projection Dψ.
pub fn poincare_derivative(
    model: &EventModel,
    orbit: &PeriodicOrbit,
    section: &Section,
    config: &IntegratorConfig,
) -> Result<Vec<(String, DMatrix<f64>)>> {
    poincare_derivative_with(model, orbit, section, config, &DerivativeOptions::default())
}

pub fn poincare_derivative_with(
    model: &EventModel,
    orbit: &PeriodicOrbit,
    section: &Section,
    config: &IntegratorConfig,
    opts: &DerivativeOptions,
) -> Result<Vec<(String, DMatrix<f64>)>> {
    let d = model.dim();
    // The section must sit where the field is smooth.
    for j in 0..model.n_events() {
        let dist = model.offset(j, &orbit.anchor).abs();
        if dist <= 10.0 * config.event_tol {
            return Err(Error::SectionOnDiscontinuity { surface: j, dist });
        }
    }

    // Smooth-segment variational matrices between consecutive clusters.
    let mut seg_mats: Vec<DMatrix<f64>> = Vec::with_capacity(orbit.clusters.len() + 1);
    let mut t_prev = 0.0;
    let mut x_prev = orbit.anchor.clone();
    let end_state;
    for (i, ev) in orbit.clusters.iter().enumerate() {
        let corner = if i == 0 {
            orbit.first_corner.clone()
        } else {
            orbit.clusters[i - 1].corner_after.clone()
        };
        let (_, xm) = segment_with_columns(
            model,
            &corner,
            &x_prev,
            ev.time - t_prev,
            &DMatrix::identity(d, d),
            config,
        )?;
        seg_mats.push(xm);
        t_prev = ev.time;
        x_prev = ev.state.clone();
    }
    {
        let (xe, xm) = segment_with_columns(
            model,
            &orbit.last_corner,
            &x_prev,
            orbit.period - t_prev,
            &DMatrix::identity(d, d),
            config,
        )?;
        seg_mats.push(xm);
        end_state = xe;
    }

    // Per-cluster word chains.
    let mut cluster_chains: Vec<Vec<(String, DMatrix<f64>)>> = Vec::new();
    let mut total = 1usize;
    for ev in &orbit.clusters {
        let words = enumerate_words(ev.surfaces.len());
        total = total.saturating_mul(words.len());
        if total > 100_000 {
            return Err(Error::InvalidParameter(
                "word combinations across clusters exceed the tractable cap".to_string(),
            ));
        }
        let mut chains = Vec::with_capacity(words.len());
        for word in &words {
            let chain = saltation_chain_with_sign(
                model,
                &ev.state,
                &ev.corner_before,
                &ev.surfaces,
                word,
                None,
                opts.chain_sign,
            )?;
            chains.push((word.label(&ev.surfaces), chain.product));
        }
        cluster_chains.push(chains);
    }

    // Oblique projection Dψ at the return point.
    let f_end = model.field(&orbit.last_corner, &end_state);
    let g_end = section.gradient(&end_state);
    let denom = g_end.dot(&f_end);
    if denom.abs() < model.f_min() {
        return Err(Error::NonTransverseSection {
            value: denom.abs(),
        });
    }
    let proj = DMatrix::<f64>::identity(d, d) - &f_end * g_end.transpose() / denom;
    let basis = section.basis();
    let mut conv = DMatrix::<f64>::zeros(d, d + 1);
    conv.set_column(0, &f_end);
    conv.view_mut((0, 1), (d, d))
        .copy_from(&DMatrix::identity(d, d));
    let embed = {
        let mut m = DMatrix::<f64>::zeros(d + 1, d);
        m.view_mut((1, 0), (d, d))
            .copy_from(&DMatrix::identity(d, d));
        m
    };
    let aug = |x: &DMatrix<f64>| {
        let mut m = DMatrix::<f64>::identity(d + 1, d + 1);
        m.view_mut((1, 1), (d, d)).copy_from(x);
        m
    };

    // Odometer over per-cluster word choices.
    let k = cluster_chains.len();
    let mut idx = vec![0usize; k];
    let mut out = Vec::new();
    loop {
        let mut p = aug(&seg_mats[0]);
        for (c, choice) in idx.iter().enumerate() {
            p = &cluster_chains[c][*choice].1 * p;
            p = aug(&seg_mats[c + 1]) * p;
        }
        let m_state = &conv * p * &embed;
        let dp = basis.transpose() * &proj * m_state * basis;
        let label = if k == 0 {
            "smooth".to_string()
        } else {
            idx.iter()
                .enumerate()
                .map(|(c, &i)| cluster_chains[c][i].0.clone())
                .collect::<Vec<_>>()
                .join(";")
        };
        out.push((label, dp));

        // Advance the odometer.
        let mut c = 0;
        loop {
            if c == k {
                return Ok(out);
            }
            idx[c] += 1;
            if idx[c] < cluster_chains[c].len() {
                break;
            }
            idx[c] = 0;
            c += 1;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    ExponentiallyStable,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::ExponentiallyStable => write!(f, "exponentially-stable"),
            Verdict::Inconclusive => write!(f, "inconclusive"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    /// (word label, DP matrix, largest singular value).
    pub per_word: Vec<(String, DMatrix<f64>, f64)>,
    pub norm: String,
    /// c = max over words of the induced norm.
    pub contraction: f64,
    pub margin: f64,
    pub verdict: Verdict,
}

impl StabilityReport {
    pub fn write_text<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "norm = {}", self.norm)?;
        writeln!(w, "margin = {}", self.margin)?;
        writeln!(w, "contraction = {}", self.contraction)?;
        writeln!(w, "verdict = {}", self.verdict)?;
        writeln!(w, "words = {}", self.per_word.len())?;
        for (label, m, sv) in &self.per_word {
            writeln!(w, "word {label}: sigma_max = {sv}")?;
            for r in 0..m.nrows() {
                let row = (0..m.ncols())
                    .map(|c| m[(r, c)].to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                writeln!(w, "  {row}")?;
            }
        }
        Ok(())
    }
}

/// Induced-Euclidean-norm contraction test over all per-word derivatives.
///
/// A single norm must dominate every word; eigenvalue containment alone
/// would not certify stability.
pub fn stability_test(inputs: &[(String, DMatrix<f64>)], margin: f64) -> StabilityReport {
    let mut per_word = Vec::with_capacity(inputs.len());
    let mut c: f64 = 0.0;
    for (label, m) in inputs {
        let sv = spectral_norm(m);
        c = c.max(sv);
        per_word.push((label.clone(), m.clone(), sv));
    }
    let verdict = if c < 1.0 - margin && !inputs.is_empty() {
        Verdict::ExponentiallyStable
    } else {
        Verdict::Inconclusive
    };
    StabilityReport {
        per_word,
        norm: "euclidean".to_string(),
        contraction: c,
        margin,
        verdict,
    }
}

/// Straightening chart χ(x) = (−μ(x), tangent coordinates of ψ(x)) with
/// inverse (c₁, y) ↦ φ(c₁, anchor + E·y). Conjugates the flow to unit
/// translation along the first coordinate.
pub struct FlowboxChart {
    model: EventModel,
    section: Section,
    config: IntegratorConfig,
}

pub fn flowbox_chart(model: &EventModel, section: &Section, config: &IntegratorConfig) -> FlowboxChart {
    FlowboxChart {
        model: model.clone(),
        section: section.clone(),
        config: config.clone(),
    }
}

impl FlowboxChart {
    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (mu, hit) = impact(&self.model, x, &self.section, &self.config)?;
        let coords = self.section.to_coords(&hit);
        let mut out = DVector::zeros(x.len());
        out[0] = -mu;
        out.rows_mut(1, coords.len()).copy_from(&coords);
        Ok(out)
    }

    pub fn inverse(&self, c: &DVector<f64>) -> Result<DVector<f64>> {
        let y = c.rows(1, c.len() - 1).into_owned();
        let on_section = self.section.from_coords(&y);
        crate::flow::flow_state(&self.model, c[0], &on_section, &self.config)
    }
}

/// Sup-trajectory deviation of independently perturbed region fields.
#[derive(Clone, Debug)]
pub struct PerturbationCurve {
    pub sizes: Vec<f64>,
    pub deviations: Vec<f64>,
}

/// The model with every region field shifted by `size` along a fixed
/// per-corner unit direction (seeded deterministically).
pub fn perturb_model(model: &EventModel, size: f64, seed: u64) -> EventModel {
    let base = model.clone();
    let base_j = model.clone();
    let dim = model.dim();
    let dir_for = move |b: &Corner| -> DVector<f64> {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        seed.hash(&mut h);
        b.signs().hash(&mut h);
        let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
        loop {
            let v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
            let n = v.norm();
            if n > 1e-3 && n <= 1.0 {
                return v / n;
            }
        }
    };
    let mut builder = EventModel::builder(dim);
    for j in 0..model.n_events() {
        builder = builder.event(model.event(j).clone());
    }
    builder
        .levels((0..model.n_events()).map(|j| model.level(j)).collect())
        .field(move |b: &Corner, x: &DVector<f64>| base.field(b, x) + size * dir_for(b))
        .field_jacobian(move |b: &Corner, x: &DVector<f64>| base_j.field_jacobian(b, x))
        .rho(model.rho().clone())
        .f_min((model.f_min() - size).max(1e-12))
        .validity_radius(model.validity_radius())
        .build()
        .expect("perturbed model inherits a valid structure")
}

/// Measures sup ‖φ̃ − φ‖ over sampled (t, x) for each perturbation size.
///
/// Sizes at or above the transversality margin are rejected up front: the
/// perturbed field could fail to be event-selected.
pub fn perturbation_experiment(
    model: &EventModel,
    sizes: &[f64],
    trials: usize,
    horizon: f64,
    sample_radius: f64,
    config: &IntegratorConfig,
    seed: u64,
) -> Result<PerturbationCurve> {
    for &s in sizes {
        if s >= model.f_min() {
            return Err(Error::PerturbationTooLarge {
                size: s,
                margin: model.f_min(),
            });
        }
    }
    let mut deviations = Vec::with_capacity(sizes.len());
    for &s in sizes {
        let perturbed = perturb_model(model, s, seed);
        perturbed.validate_transversality(sample_radius, 100, seed ^ 0x9e37)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sup = 0.0_f64;
        for _ in 0..trials {
            let x = sample_in_ball(&mut rng, model.rho(), sample_radius);
            let t = rng.random_range(-horizon..horizon);
            let a = flow(model, t, &x, config)?.0;
            let b = flow(&perturbed, t, &x, config)?.0;
            sup = sup.max((a - b).norm());
        }
        deviations.push(sup);
    }
    Ok(PerturbationCurve {
        sizes: sizes.to_vec(),
        deviations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_1d() -> EventModel {
        EventModel::builder(1)
            .event(EventFn::coordinate(1, 0))
            .field(|_: &Corner, _: &DVector<f64>| DVector::from_element(1, 1.0))
            .field_jacobian(|_: &Corner, _: &DVector<f64>| DMatrix::zeros(1, 1))
            .rho(DVector::zeros(1))
            .f_min(0.1)
            .build()
            .unwrap()
    }

    #[test]
    fn impact_time_unit_speed() {
        let m = model_1d();
        let s = Section::new(EventFn::coordinate(1, 0), DVector::zeros(1));
        let cfg = IntegratorConfig::default();
        let mu = time_to_impact(&m, &DVector::from_element(1, -0.4), &s, &cfg).unwrap();
        assert!((mu - 0.4).abs() < 1e-10);
        // On the section already.
        let mu = time_to_impact(&m, &DVector::zeros(1), &s, &cfg).unwrap();
        assert_eq!(mu, 0.0);
        // Past the section: negative impact time.
        let mu = time_to_impact(&m, &DVector::from_element(1, 0.25), &s, &cfg).unwrap();
        assert!((mu + 0.25).abs() < 1e-10);
    }

    #[test]
    fn impact_map_lands_on_section_and_is_idempotent() {
        let m = model_1d();
        let s = Section::new(EventFn::coordinate(1, 0), DVector::zeros(1));
        let cfg = IntegratorConfig::default();
        let x = DVector::from_element(1, -0.3);
        let y = impact_map(&m, &x, &s, &cfg).unwrap();
        assert!(s.offset(&y).abs() <= cfg.event_tol);
        let z = impact_map(&m, &y, &s, &cfg).unwrap();
        assert!((y - z).norm() <= 2.0 * cfg.event_tol);
    }

    #[test]
    fn stability_verdicts() {
        let stable = vec![(
            "w".to_string(),
            DMatrix::<f64>::identity(2, 2) * (1.0 / 3.0),
        )];
        let rep = stability_test(&stable, 1e-9);
        assert_eq!(rep.verdict, Verdict::ExponentiallyStable);
        assert!((rep.contraction - 1.0 / 3.0).abs() < 1e-14);

        let marginal = vec![("w".to_string(), DMatrix::<f64>::identity(2, 2))];
        let rep = stability_test(&marginal, 1e-9);
        assert_eq!(rep.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn perturbation_size_above_margin_rejected() {
        let m = model_1d();
        let err = perturbation_experiment(
            &m,
            &[0.2],
            4,
            0.2,
            0.1,
            &IntegratorConfig::default(),
            11,
        )
        .unwrap_err();
        matches!(err, Error::PerturbationTooLarge { .. })
            .then_some(())
            .expect("wrong error kind");
    }
}
