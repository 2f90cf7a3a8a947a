//! Built-in scenario families: first- and second-order phase oscillators
//! with signum feedback on a torus, analyzed on Euclidean covering charts.
//!
//! Integration always happens on canonical lifts; quotient wraps are applied
//! only between Poincaré returns (as deck translations in the return spec),
//! never mid-segment.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flow::IntegratorConfig;
use crate::linalg::orthonormal_complement;
use crate::model::{Corner, EventFn, EventModel};
use crate::poincare::{
    orbit_from_anchor, poincare_return, time_to_impact, PeriodicOrbit, ReturnSpec, Section,
};
use crate::roots::bisect;

/// First-order family: q̇ = ν𝟙 − δ·sign(x) inside the control box, ν𝟙 outside.
#[derive(Clone, Copy, Debug)]
pub struct Sync1Params {
    pub d: usize,
    pub nu: f64,
    pub delta: f64,
    /// Control-box half-width.
    pub big_delta: f64,
}

impl Sync1Params {
    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::InvalidParameter("d must be ≥ 1".to_string()));
        }
        if !(self.delta > 0.0 && self.delta < self.nu) {
            return Err(Error::InvalidParameter(
                "sync1 requires 0 < delta < nu".to_string(),
            ));
        }
        if !(self.big_delta > 0.0 && self.big_delta < 0.2) {
            return Err(Error::InvalidParameter(
                "sync1 requires 0 < Delta < 0.2 so the chart is evenly covered".to_string(),
            ));
        }
        Ok(())
    }

    /// Contraction factor (ν−δ)/(ν+δ).
    pub fn contraction(&self) -> f64 {
        (self.nu - self.delta) / (self.nu + self.delta)
    }
}

/// The open-loop field ν𝟙 − δ·sign(x) on all of ℝ^d (no control box).
///
/// All d coordinate planes meet at the origin; this is the model whose
/// crossing at 0 carries the full word set.
pub fn sync1_pure_model(p: &Sync1Params) -> Result<EventModel> {
    p.validate()?;
    let (d, nu, delta) = (p.d, p.nu, p.delta);
    EventModel::builder(d)
        .events((0..d).map(|j| EventFn::coordinate(d, j)).collect())
        .field(move |b: &Corner, _x: &DVector<f64>| {
            DVector::from_fn(d, |j, _| nu - delta * b.sign(j) as f64)
        })
        .field_jacobian(move |_: &Corner, _: &DVector<f64>| DMatrix::zeros(d, d))
        .rho(DVector::zeros(d))
        .f_min(nu - delta)
        .validity_radius(f64::INFINITY)
        .build()
}

/// Closed-loop covering-chart model. Event surfaces, per coordinate j:
/// index j at level 0 (orthant planes), d+j at −Δ (box entry faces),
/// 2d+j at +Δ (box exit faces). The feedback −δ·sign(x) is active exactly
/// when every coordinate lies inside the box.
pub fn sync1_model(p: &Sync1Params) -> Result<EventModel> {
    p.validate()?;
    let (d, nu, delta, bd) = (p.d, p.nu, p.delta, p.big_delta);
    let mut levels = vec![0.0; d];
    levels.extend(std::iter::repeat(-bd).take(d));
    levels.extend(std::iter::repeat(bd).take(d));
    let mut events = Vec::with_capacity(3 * d);
    for _group in 0..3 {
        for j in 0..d {
            events.push(EventFn::coordinate(d, j));
        }
    }
    EventModel::builder(d)
        .events(events)
        .levels(levels)
        .field(move |b: &Corner, _x: &DVector<f64>| {
            let inside = (0..d).all(|j| b.sign(d + j) > 0 && b.sign(2 * d + j) < 0);
            if inside {
                DVector::from_fn(d, |j, _| nu - delta * b.sign(j) as f64)
            } else {
                DVector::from_element(d, nu)
            }
        })
        .field_jacobian(move |_: &Corner, _: &DVector<f64>| DMatrix::zeros(d, d))
        .rho(DVector::zeros(d))
        .f_min(nu - delta)
        .validity_radius(0.8)
        .domain(|x: &DVector<f64>| {
            x.iter().any(|&c| c.abs() > 0.8).then(|| Error::OutOfDomain {
                state: x.iter().copied().collect(),
            })
        })
        .build()
}

/// Period of the synchronized orbit: box approach, box exit, free lap.
pub fn sync1_period(p: &Sync1Params) -> f64 {
    p.big_delta / (p.nu - p.delta)
        + p.big_delta / (p.nu + p.delta)
        + (1.0 - 2.0 * p.big_delta) / p.nu
}

/// Section through −𝟙/2 perpendicular to the synchronized orbit, with the
/// covering-space return spec (one lap shifts the mean by 1).
pub fn sync1_section(p: &Sync1Params) -> (Section, ReturnSpec) {
    let d = p.d;
    let anchor = DVector::from_element(d, -0.5);
    let grad = DVector::from_element(d, 1.0 / d as f64);
    let sigma = EventFn::linear(grad);
    let section = Section::new(sigma, anchor);
    let t = sync1_period(p);
    let rspec = ReturnSpec {
        window: (0.5 * t, 1.5 * t),
        level_shift: 1.0,
        deck: Some(DVector::from_element(d, 1.0)),
    };
    (section, rspec)
}

/// The synchronized periodic orbit recorded over one lap of the chart.
pub fn sync1_orbit(p: &Sync1Params, config: &IntegratorConfig) -> Result<PeriodicOrbit> {
    let model = sync1_model(p)?;
    let (section, rspec) = sync1_section(p);
    orbit_from_anchor(&model, section.anchor(), &section, &rspec, config, 1e-7)
}

/// Analytical Poincaré derivative: ((ν−δ)/(ν+δ))·I on the section tangent.
pub fn sync1_expected_dp(p: &Sync1Params) -> DMatrix<f64> {
    DMatrix::identity(p.d - 1, p.d - 1) * p.contraction()
}

/// Coordinatewise piecewise-linear straightening homeomorphism: identity on
/// the negative side, slope (ν+δ)/(ν−δ) on the nonnegative side. Conjugates
/// the open-loop flow to translation at speed (ν+δ)𝟙.
pub fn sync1_chi(p: &Sync1Params, x: &DVector<f64>) -> DVector<f64> {
    let r = (p.nu + p.delta) / (p.nu - p.delta);
    DVector::from_fn(x.len(), |j, _| if x[j] < 0.0 { x[j] } else { r * x[j] })
}

pub fn sync1_chi_inv(p: &Sync1Params, y: &DVector<f64>) -> DVector<f64> {
    let r = (p.nu - p.delta) / (p.nu + p.delta);
    DVector::from_fn(y.len(), |j, _| if y[j] < 0.0 { y[j] } else { r * y[j] })
}

/// Second-order family: q̈ = α𝟙 − βq̇ − δ·sign(q) inside the box.
#[derive(Clone, Copy, Debug)]
pub struct Sync2Params {
    pub d: usize,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub big_delta: f64,
}

impl Sync2Params {
    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::InvalidParameter("d must be ≥ 1".to_string()));
        }
        if !(self.delta > 0.0 && self.delta < self.alpha) {
            return Err(Error::InvalidParameter(
                "sync2 requires 0 < delta < alpha".to_string(),
            ));
        }
        if self.beta <= 0.0 {
            return Err(Error::InvalidParameter("beta must be positive".to_string()));
        }
        if !(self.big_delta > 0.0 && self.big_delta < 0.2) {
            return Err(Error::InvalidParameter(
                "sync2 requires 0 < Delta < 0.2".to_string(),
            ));
        }
        Ok(())
    }
}

/// Covering-chart model on ℝ^{2d}: state (x, ẋ). Surface indexing matches
/// sync1 (orthants, entry faces, exit faces on positions). Analysis requires
/// every velocity component positive; the domain guard enforces it.
pub fn sync2_model(p: &Sync2Params) -> Result<EventModel> {
    p.validate()?;
    let (d, alpha, beta, delta, bd) = (p.d, p.alpha, p.beta, p.delta, p.big_delta);
    let dim = 2 * d;
    let mut levels = vec![0.0; d];
    levels.extend(std::iter::repeat(-bd).take(d));
    levels.extend(std::iter::repeat(bd).take(d));
    let mut events = Vec::with_capacity(3 * d);
    for _group in 0..3 {
        for j in 0..d {
            events.push(EventFn::coordinate(dim, j));
        }
    }
    EventModel::builder(dim)
        .events(events)
        .levels(levels)
        .field(move |b: &Corner, x: &DVector<f64>| {
            let inside = (0..d).all(|j| b.sign(d + j) > 0 && b.sign(2 * d + j) < 0);
            DVector::from_fn(dim, |i, _| {
                if i < d {
                    x[d + i]
                } else {
                    let j = i - d;
                    let u = if inside { -delta * b.sign(j) as f64 } else { 0.0 };
                    alpha - beta * x[d + j] + u
                }
            })
        })
        .field_jacobian(move |_: &Corner, _: &DVector<f64>| {
            let mut m = DMatrix::zeros(dim, dim);
            for j in 0..d {
                m[(j, d + j)] = 1.0;
                m[(d + j, d + j)] = -beta;
            }
            m
        })
        .rho(DVector::from_fn(dim, |i, _| {
            if i < d {
                0.0
            } else {
                alpha / beta
            }
        }))
        .f_min(0.25 * alpha / beta)
        .validity_radius(0.8)
        .domain(move |x: &DVector<f64>| {
            for j in 0..d {
                if x[d + j] <= 0.0 {
                    return Some(Error::ZeroVelocityRegion {
                        component: j,
                        value: x[d + j],
                    });
                }
                if x[j].abs() > 0.8 {
                    return Some(Error::OutOfDomain {
                        state: x.iter().copied().collect(),
                    });
                }
            }
            None
        })
        .build()
}

/// Scalar (d = 1) lap chart covering positions [0, 1]: the box exit face at
/// Δ and the next box's entry face at 1−Δ, with the next orthant plane as
/// the return target at level 1.
fn sync2_scalar_lap_model(p: &Sync2Params) -> Result<EventModel> {
    let (alpha, beta, delta, bd) = (p.alpha, p.beta, p.delta, p.big_delta);
    EventModel::builder(2)
        .event(EventFn::coordinate(2, 0))
        .event(EventFn::coordinate(2, 0))
        .levels(vec![bd, 1.0 - bd])
        .field(move |b: &Corner, x: &DVector<f64>| {
            // (−,−): inside this box above its orthant plane (u = −δ);
            // (+,−): free span; (+,+): inside the next box below its plane
            // (u = +δ).
            let u = if b.sign(0) < 0 {
                -delta
            } else if b.sign(1) > 0 {
                delta
            } else {
                0.0
            };
            DVector::from_vec(vec![x[1], alpha - beta * x[1] + u])
        })
        .field_jacobian(move |_: &Corner, _: &DVector<f64>| {
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -beta])
        })
        .rho(DVector::from_vec(vec![0.0, alpha / beta]))
        .f_min(0.25 * alpha / beta)
        .domain(|x: &DVector<f64>| {
            (x[1] <= 0.0).then(|| Error::ZeroVelocityRegion {
                component: 0,
                value: x[1],
            })
        })
        .build()
}

/// One lap of the scalar velocity return map anchored at the orthant plane:
/// inputs and outputs are speeds at position 0 (mod 1). Also returns the
/// lap time.
pub fn sync2_scalar_return(
    p: &Sync2Params,
    v0: f64,
    config: &IntegratorConfig,
) -> Result<(f64, f64)> {
    let model = sync2_scalar_lap_model(p)?;
    let sigma = EventFn::linear(DVector::from_vec(vec![1.0, 0.0]));
    let section = Section::new(sigma, DVector::from_vec(vec![0.0, p.alpha / p.beta]));
    let rspec = ReturnSpec {
        // Generous window: lap time is at most 1/v_min plus box effects.
        window: (1e-6, 4.0 / (p.alpha / p.beta).min(v0) + 10.0),
        level_shift: 1.0,
        deck: None,
    };
    let x0 = DVector::from_vec(vec![0.0, v0]);
    let (t, hit) = poincare_return(&model, &section, &x0, config, &rspec)?;
    Ok((hit[1], t))
}

/// Result of locating the synchronized second-order orbit.
#[derive(Clone)]
pub struct Sync2Orbit {
    /// Fixed-point speed at the orthant crossing.
    pub nu_beta: f64,
    /// |P_β(ν_β) − ν_β| at the located fixed point.
    pub residual: f64,
    pub period: f64,
    pub orbit: PeriodicOrbit,
    pub section: Section,
    pub rspec: ReturnSpec,
}

/// Locates ν_β by bisection on the scalar velocity return map, then lifts
/// to the synchronized d-dimensional orbit anchored on a section upstream
/// of the box entry faces.
pub fn sync2_find_orbit(p: &Sync2Params, config: &IntegratorConfig) -> Result<Sync2Orbit> {
    p.validate()?;
    let lo = p.alpha / p.beta;
    let hi = (p.alpha + p.delta) / p.beta;
    let pad = 1e-9 * (hi - lo);
    // The composed lap map must take the candidate interval into itself.
    let (p_lo, _) = sync2_scalar_return(p, lo + pad, config)?;
    let (p_hi, _) = sync2_scalar_return(p, hi - pad, config)?;
    if !(p_lo >= lo && p_lo <= hi && p_hi >= lo && p_hi <= hi) {
        return Err(Error::NoContraction { lo, hi });
    }
    let f = |v: f64| -> f64 {
        sync2_scalar_return(p, v, config)
            .map(|(pv, _)| pv - v)
            .unwrap_or(f64::NAN)
    };
    let nu_beta = bisect(f, lo + pad, hi - pad, 1e-14 * (1.0 + hi), 200)
        .ok_or(Error::NoContraction { lo, hi })?;
    let (p_nu, lap_time) = sync2_scalar_return(p, nu_beta, config)?;
    let residual = (p_nu - nu_beta).abs();

    // Lift to d dimensions: synchronized state (0, ν_β𝟙) and a section at
    // mean position −1.5Δ, safely upstream of the entry faces.
    let d = p.d;
    let dim = 2 * d;
    let model = sync2_model(p)?;
    let at_zero = DVector::from_fn(dim, |i, _| if i < d { 0.0 } else { nu_beta });
    let mut grad = DVector::zeros(dim);
    for j in 0..d {
        grad[j] = 1.0 / d as f64;
    }
    let anchor_level = -1.5 * p.big_delta;
    let sigma = EventFn::linear(grad.clone());
    // Temporary section through the target level to locate the anchor.
    let mut probe_anchor = DVector::zeros(dim);
    for j in 0..d {
        probe_anchor[j] = anchor_level;
        probe_anchor[d + j] = nu_beta;
    }
    let probe = Section::new(sigma.clone(), probe_anchor);
    let mu = time_to_impact(&model, &at_zero, &probe, config)?;
    let anchor = crate::flow::flow_state(&model, mu, &at_zero, config)?;

    let basis = sync2_section_basis(d);
    let section = Section::new(sigma, anchor.clone()).with_basis(basis);
    let rspec = ReturnSpec {
        window: (0.5 * lap_time, 1.5 * lap_time),
        level_shift: 1.0,
        deck: Some(DVector::from_fn(dim, |i, _| if i < d { 1.0 } else { 0.0 })),
    };
    let orbit = orbit_from_anchor(&model, &anchor, &section, &rspec, config, 1e-6)?;
    Ok(Sync2Orbit {
        nu_beta,
        residual,
        period: orbit.period,
        orbit,
        section,
        rspec,
    })
}

/// Canonical section tangent basis: (d−1) synchronized-perp position
/// directions first, then the d velocity directions.
pub fn sync2_section_basis(d: usize) -> DMatrix<f64> {
    let dim = 2 * d;
    let perp = orthonormal_complement(&DVector::from_element(d, 1.0));
    let mut basis = DMatrix::zeros(dim, dim - 1);
    for c in 0..d - 1 {
        for r in 0..d {
            basis[(r, c)] = perp[(r, c)];
        }
    }
    for j in 0..d {
        basis[(d + j, d - 1 + j)] = 1.0;
    }
    basis
}

/// Leading-order Poincaré derivative in the canonical basis:
/// (1 − 2δ/(βν_β)) on position-perp directions, zero on velocities.
pub fn sync2_expected_dp(p: &Sync2Params, nu_beta: f64) -> DMatrix<f64> {
    let n = 2 * p.d - 1;
    let c = 1.0 - 2.0 * p.delta / (p.beta * nu_beta);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..p.d - 1 {
        m[(i, i)] = c;
    }
    m
}

/// State block of the orthant-cluster saltation chain at (0, ν𝟙):
/// [[I, 0], [−(2δ/ν)I, I]].
pub fn sync2_expected_saltation(p: &Sync2Params, nu: f64) -> DMatrix<f64> {
    let d = p.d;
    let mut m = DMatrix::identity(2 * d, 2 * d);
    for j in 0..d {
        m[(d + j, j)] = -2.0 * p.delta / nu;
    }
    m
}

/// Closed-form smooth variational matrix of the drag dynamics over time s:
/// [[I, (1 − e^{−βs})/β·I], [0, e^{−βs}·I]].
pub fn sync2_expected_variational(p: &Sync2Params, s: f64) -> DMatrix<f64> {
    let d = p.d;
    let mut m = DMatrix::identity(2 * d, 2 * d);
    let decay = (-p.beta * s).exp();
    for j in 0..d {
        m[(j, d + j)] = (1.0 - decay) / p.beta;
        m[(d + j, d + j)] = decay;
    }
    m
}

/// Canonical lift of position coordinates into [−1/2, 1/2).
pub fn canonical_lift(x: &DVector<f64>, n_positions: usize) -> DVector<f64> {
    let mut out = x.clone();
    for j in 0..n_positions {
        out[j] = x[j] - (x[j] + 0.5).floor();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::flow;

    fn p1() -> Sync1Params {
        Sync1Params {
            d: 2,
            nu: 1.0,
            delta: 0.5,
            big_delta: 0.05,
        }
    }

    #[test]
    fn sync1_region_lookup() {
        let m = sync1_model(&p1()).unwrap();
        let x = DVector::from_vec(vec![-0.01, 0.02]);
        let b = m.classify(&x);
        let f = m.field(&b, &x);
        // Inside the box: ν𝟙 − δ(−1, +1) = (1.5, 0.5).
        assert_eq!(f, DVector::from_vec(vec![1.5, 0.5]));
        let far = DVector::from_vec(vec![-0.3, 0.2]);
        let bf = m.classify(&far);
        assert_eq!(m.field(&bf, &far), DVector::from_vec(vec![1.0, 1.0]));
    }

    #[test]
    fn sync1_transversality_passes() {
        let m = sync1_model(&p1()).unwrap();
        let r = m.validate_transversality(0.04, 400, 5).unwrap();
        assert!(r.passed);
        let pure = sync1_pure_model(&p1()).unwrap();
        let r = pure.validate_transversality(0.5, 400, 5).unwrap();
        // Minimum of ν − δ·b over corners and components is ν − δ.
        let min = r
            .minima
            .iter()
            .map(|(_, _, v)| *v)
            .fold(f64::INFINITY, f64::min);
        assert!((min - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sync1_synchronized_lap_matches_closed_form_period() {
        let p = p1();
        let m = sync1_model(&p).unwrap();
        let cfg = IntegratorConfig::default();
        let t = sync1_period(&p);
        let x0 = DVector::from_element(2, -0.5);
        let (y, traj) = flow(&m, t, &x0, &cfg).unwrap();
        // One full lap advances every coordinate by exactly 1.
        assert!((y - (x0.add_scalar(1.0))).norm() < 1e-8);
        // Clusters at −Δ, 0, +Δ, each crossing both coordinates at once.
        assert_eq!(traj.events.len(), 3);
        assert!(traj.events.iter().all(|e| e.surfaces.len() == 2));
    }

    #[test]
    fn sync1_chi_conjugates_pure_flow_to_translation() {
        let p = p1();
        let m = sync1_pure_model(&p).unwrap();
        let cfg = IntegratorConfig::default();
        let x = DVector::from_vec(vec![-0.21, -0.37]);
        let t = 0.3;
        let (y, _) = flow(&m, t, &x, &cfg).unwrap();
        let lhs = sync1_chi(&p, &y);
        let rhs = sync1_chi(&p, &x).add_scalar(t * (p.nu + p.delta));
        assert!((lhs - rhs).norm() < 1e-9);
    }

    #[test]
    fn sync2_scalar_return_contracts_into_interval() {
        let p = Sync2Params {
            d: 1,
            alpha: 1.0,
            beta: 10.0,
            delta: 0.5,
            big_delta: 0.05,
        };
        let cfg = IntegratorConfig::default();
        let (v1, _) = sync2_scalar_return(&p, 0.12, &cfg).unwrap();
        assert!(v1 > 0.1 && v1 < 0.15, "v1 = {v1}");
    }

    #[test]
    fn sync2_fixed_point_in_paper_interval() {
        let p = Sync2Params {
            d: 2,
            alpha: 1.0,
            beta: 10.0,
            delta: 0.5,
            big_delta: 0.05,
        };
        let cfg = IntegratorConfig::default();
        let s = sync2_find_orbit(&p, &cfg).unwrap();
        assert!(s.nu_beta > 0.1 && s.nu_beta < 0.15, "nu = {}", s.nu_beta);
        assert!(s.residual <= 1e-10, "residual {}", s.residual);
        assert_eq!(s.orbit.clusters.len(), 3);
    }

    #[test]
    fn canonical_lift_wraps_positions_only() {
        let x = DVector::from_vec(vec![0.75, -0.5, 2.25]);
        let w = canonical_lift(&x, 2);
        assert!((w[0] + 0.25).abs() < 1e-15);
        assert!((w[1] + 0.5).abs() < 1e-15);
        assert!((w[2] - 2.25).abs() < 1e-15);
    }
}
