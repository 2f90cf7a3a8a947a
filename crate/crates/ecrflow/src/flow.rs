//! Event-driven integration of event-selected vector fields.
//!
//! Trajectories are advanced with the smooth region field until the earliest
//! event-surface root, relocated to the crossing on the dense output, then
//! continued in the neighboring region. Transversality makes every event
//! offset monotone along trajectories, so each surface is crossed at most
//! once per call and in a known direction.

use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{Corner, EventModel};
use crate::rk45::Stepper;
use crate::roots::brent;

/// Integration tolerances and guards.
#[derive(Clone, Debug)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Root tolerance on h_j(x) − h_j(ρ), in units of h.
    pub event_tol: f64,
    pub max_step: f64,
    /// Cap on crossings per call; finiteness is guaranteed for valid models,
    /// the cap catches misconfigured ones.
    pub max_events: usize,
    /// Search horizon for impact-time maps.
    pub horizon: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            event_tol: 1e-9,
            max_step: 0.25,
            max_events: 4096,
            horizon: 50.0,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rel_tol <= 0.0
            || self.abs_tol <= 0.0
            || self.event_tol <= 0.0
            || self.max_step <= 0.0
            || self.horizon <= 0.0
            || self.max_events == 0
        {
            return Err(Error::InvalidParameter(
                "all integrator tolerances must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// One located crossing (possibly of several surfaces simultaneously).
#[derive(Clone, Debug)]
pub struct EventRecord {
    pub time: f64,
    pub state: DVector<f64>,
    /// Surfaces crossed, ascending model indices.
    pub surfaces: Vec<usize>,
    pub corner_before: Corner,
    pub corner_after: Corner,
}

/// Sampled trajectory with its event log.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Region corner active at each sample.
    pub corners: Vec<Corner>,
    pub events: Vec<EventRecord>,
}

impl Trajectory {
    /// CSV columns: t, x_1..x_d, corner as signed-bit string.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let d = self.states.first().map_or(0, |s| s.len());
        write!(w, "t")?;
        for i in 1..=d {
            write!(w, ",x_{i}")?;
        }
        writeln!(w, ",corner")?;
        for k in 0..self.times.len() {
            write!(w, "{}", self.times[k])?;
            for v in self.states[k].iter() {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", self.corners[k].bit_string())?;
        }
        Ok(())
    }

    /// CSV columns: t, surfaces (|-joined, 1-based), corner before/after.
    pub fn write_events_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "t,surfaces,corner_before,corner_after")?;
        for e in &self.events {
            let surf = e
                .surfaces
                .iter()
                .map(|j| (j + 1).to_string())
                .collect::<Vec<_>>()
                .join("|");
            writeln!(
                w,
                "{},{},{},{}",
                e.time,
                surf,
                e.corner_before.bit_string(),
                e.corner_after.bit_string()
            )?;
        }
        Ok(())
    }
}

/// Outcome of an event-driven integration.
pub struct FlowResult {
    pub state: DVector<f64>,
    /// Signed time actually flowed (equals the request unless a probe hit).
    pub time: f64,
    pub trajectory: Trajectory,
    /// First probe root, as (signed time, state).
    pub probe_hit: Option<(f64, DVector<f64>)>,
}

/// A scalar function watched for a zero crossing during integration,
/// accepted only at times |t| ≥ `accept_after`.
pub(crate) struct SectionProbe<'a> {
    pub g: &'a dyn Fn(&DVector<f64>) -> f64,
    pub accept_after: f64,
}

/// Evaluates the flow φ(t, x); records the trajectory and all events.
pub fn flow(
    model: &EventModel,
    t: f64,
    x: &DVector<f64>,
    config: &IntegratorConfig,
) -> Result<(DVector<f64>, Trajectory)> {
    let out = flow_core(model, t, x, config, true, None)?;
    Ok((out.state, out.trajectory))
}

/// Endpoint only.
pub fn flow_state(
    model: &EventModel,
    t: f64,
    x: &DVector<f64>,
    config: &IntegratorConfig,
) -> Result<DVector<f64>> {
    Ok(flow_core(model, t, x, config, false, None)?.state)
}

pub(crate) fn flow_core(
    model: &EventModel,
    t: f64,
    x: &DVector<f64>,
    config: &IntegratorConfig,
    record: bool,
    probe: Option<SectionProbe<'_>>,
) -> Result<FlowResult> {
    config.validate()?;
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: x.len(),
        });
    }
    model.check_domain(x)?;

    let sign = if t < 0.0 { -1.0 } else { 1.0 };
    let span = t.abs();
    let mut corner = model.classify(x);
    let mut trajectory = Trajectory::default();
    if record {
        trajectory.times.push(0.0);
        trajectory.states.push(x.clone());
        trajectory.corners.push(corner.clone());
    }
    if span == 0.0 {
        return Ok(FlowResult {
            state: x.clone(),
            time: 0.0,
            trajectory,
            probe_hit: None,
        });
    }

    let mut y = x.clone();
    let mut u = 0.0_f64; // internal forward clock
    let mut n_events = 0usize;
    let mut probe_hit = None;
    let mut probe_prev = probe.as_ref().map(|p| (p.g)(&y));

    'segments: while u < span {
        let b = corner.clone();
        let rhs = move_rhs(model, &b, sign);
        let mut stepper = Stepper::new(
            &rhs,
            u,
            y.clone(),
            config.rel_tol,
            config.abs_tol,
            config.max_step,
        );
        // Surfaces still approaching their crossing in this time direction.
        let watched: Vec<usize> = (0..model.n_events())
            .filter(|&j| (corner.sign(j) as f64) * sign < 0.0)
            .collect();
        let mut w_prev: Vec<f64> = watched.iter().map(|&j| model.offset(j, &y)).collect();

        loop {
            let step = stepper.advance(span)?;
            let y1 = stepper.y.clone();
            let u1 = stepper.t;

            // Earliest watched-surface root within the step.
            let mut earliest: Option<(usize, f64)> = None;
            for (k, &j) in watched.iter().enumerate() {
                let w1 = model.offset(j, &y1);
                if w_prev[k] * w1 <= 0.0 && (w_prev[k] != 0.0 || w1 != 0.0) {
                    let g = |s: f64| model.offset(j, &step.eval(s));
                    let root = brent(
                        g,
                        step.t0,
                        u1,
                        w_prev[k],
                        w1,
                        1e-15 * (1.0 + u1.abs()),
                        200,
                    );
                    if earliest.map_or(true, |(_, r)| root < r) {
                        earliest = Some((j, root));
                    }
                }
                w_prev[k] = w1;
            }

            // Wrong-direction crossings indicate the model is not
            // event-selected along this trajectory.
            for j in 0..model.n_events() {
                if (corner.sign(j) as f64) * sign > 0.0 {
                    let w1 = model.offset(j, &y1);
                    if w1 * (corner.sign(j) as f64) < -10.0 * config.event_tol {
                        let f = model.field(&corner, &y1);
                        let v = model.event_gradient(j, &y1).dot(&f);
                        return Err(Error::NonTransverseCrossing {
                            surface: j,
                            state: y1.iter().copied().collect(),
                            value: v.abs(),
                            margin: model.f_min(),
                        });
                    }
                }
            }

            // Probe root, if one occurs before the event.
            if let Some(p) = &probe {
                let wp1 = (p.g)(&y1);
                let wp0 = probe_prev.unwrap();
                let seg_end = earliest.map_or(u1, |(_, r)| r);
                if wp0 * wp1 <= 0.0 && (wp0 != 0.0 || wp1 != 0.0) {
                    let g = |s: f64| (p.g)(&step.eval(s));
                    let root = brent(g, step.t0, u1, wp0, wp1, 1e-15 * (1.0 + u1.abs()), 200);
                    if root >= p.accept_after && root <= seg_end {
                        let yhit = step.eval(root);
                        probe_hit = Some((sign * root, yhit));
                        break 'segments;
                    }
                }
                probe_prev = Some(wp1);
            }

            if let Some((_, root)) = earliest {
                // Relocate onto the crossing and flip every surface within
                // the simultaneity band.
                let ystar = step.eval(root);
                let mut cluster: Vec<usize> = watched
                    .iter()
                    .copied()
                    .filter(|&j| model.offset(j, &ystar).abs() <= config.event_tol)
                    .collect();
                cluster.sort_unstable();
                if cluster.is_empty() {
                    // Root located but offset bigger than the band: treat the
                    // minimizing surface alone as crossed.
                    return Err(Error::InvalidParameter(format!(
                        "event localization failed at t = {} (offsets exceed event_tol)",
                        sign * root
                    )));
                }
                let before = corner.clone();
                let mut after = corner.clone();
                for &j in &cluster {
                    after.set(j, -before.sign(j));
                }
                // Grazing guard on both one-sided fields.
                for &j in &cluster {
                    let g = model.event_gradient(j, &ystar);
                    for c in [&before, &after] {
                        let v = g.dot(&model.field(c, &ystar));
                        if v.abs() < model.f_min() {
                            return Err(Error::NonTransverseCrossing {
                                surface: j,
                                state: ystar.iter().copied().collect(),
                                value: v.abs(),
                                margin: model.f_min(),
                            });
                        }
                    }
                }
                n_events += 1;
                if n_events > config.max_events {
                    return Err(Error::MaxEventsExceeded {
                        max_events: config.max_events,
                    });
                }
                model.check_domain(&ystar)?;
                if record {
                    trajectory.times.push(sign * root);
                    trajectory.states.push(ystar.clone());
                    trajectory.corners.push(after.clone());
                }
                trajectory.events.push(EventRecord {
                    time: sign * root,
                    state: ystar.clone(),
                    surfaces: cluster,
                    corner_before: before,
                    corner_after: after.clone(),
                });
                corner = after;
                y = ystar;
                u = root;
                continue 'segments;
            }

            model.check_domain(&y1)?;
            if record {
                trajectory.times.push(sign * u1);
                trajectory.states.push(y1.clone());
                trajectory.corners.push(corner.clone());
            }
            y = y1;
            u = u1;
            if u >= span {
                break 'segments;
            }
        }
    }

    if sign < 0.0 && record {
        trajectory.times.reverse();
        trajectory.states.reverse();
        trajectory.corners.reverse();
        trajectory.events.reverse();
        for e in &mut trajectory.events {
            std::mem::swap(&mut e.corner_before, &mut e.corner_after);
        }
    }

    let time = probe_hit.as_ref().map_or(sign * u, |(th, _)| *th);
    let state = probe_hit.as_ref().map_or(y, |(_, ys)| ys.clone());
    Ok(FlowResult {
        state,
        time,
        trajectory,
        probe_hit,
    })
}

fn move_rhs<'m>(
    model: &'m EventModel,
    corner: &'m Corner,
    sign: f64,
) -> impl Fn(&DVector<f64>) -> DVector<f64> + 'm {
    move |x: &DVector<f64>| sign * model.field(corner, x)
}

/// Smooth flow φ_b of a single region field for a signed time, ignoring
/// every event surface.
pub fn smooth_flow(
    model: &EventModel,
    b: &Corner,
    x: &DVector<f64>,
    t: f64,
    config: &IntegratorConfig,
) -> Result<DVector<f64>> {
    if t == 0.0 {
        return Ok(x.clone());
    }
    let sign = t.signum();
    let span = t.abs();
    let rhs = move_rhs(model, b, sign);
    let mut stepper = Stepper::new(
        &rhs,
        0.0,
        x.clone(),
        config.rel_tol,
        config.abs_tol,
        config.max_step,
    );
    while stepper.t < span {
        stepper.advance(span)?;
    }
    Ok(stepper.y.clone())
}

/// Scans the smooth flow of F_b for the earliest root of any listed surface
/// offset, in the given time direction, up to `t_stop` (internal clock).
fn scan_first_root(
    model: &EventModel,
    b: &Corner,
    x: &DVector<f64>,
    surfaces: &[usize],
    sign: f64,
    t_stop: f64,
    config: &IntegratorConfig,
) -> Result<Option<(usize, f64)>> {
    if surfaces.is_empty() || t_stop <= 0.0 {
        return Ok(None);
    }
    let rhs = move_rhs(model, b, sign);
    let mut stepper = Stepper::new(
        &rhs,
        0.0,
        x.clone(),
        config.rel_tol,
        config.abs_tol,
        config.max_step,
    );
    let mut w_prev: Vec<f64> = surfaces.iter().map(|&j| model.offset(j, x)).collect();
    while stepper.t < t_stop {
        let step = stepper.advance(t_stop)?;
        let y1 = stepper.y.clone();
        let mut earliest: Option<(usize, f64)> = None;
        for (k, &j) in surfaces.iter().enumerate() {
            let w1 = model.offset(j, &y1);
            if w_prev[k] * w1 <= 0.0 && (w_prev[k] != 0.0 || w1 != 0.0) {
                let g = |s: f64| model.offset(j, &step.eval(s));
                let root = brent(
                    g,
                    step.t0,
                    step.t1,
                    w_prev[k],
                    w1,
                    1e-15 * (1.0 + step.t1.abs()),
                    200,
                );
                if earliest.map_or(true, |(_, r)| root < r) {
                    earliest = Some((j, root));
                }
            }
            w_prev[k] = w1;
        }
        if earliest.is_some() {
            return Ok(earliest);
        }
    }
    Ok(None)
}

/// Time for the smooth flow of F_b to impact surface H_j, possibly negative.
///
/// The search direction is decided by the offset sign: below the surface the
/// impact lies forward in time, above it backward (event offsets increase
/// along transversal fields).
pub fn time_to_impact_region(
    model: &EventModel,
    b: &Corner,
    x: &DVector<f64>,
    surface: usize,
    config: &IntegratorConfig,
) -> Result<f64> {
    let w = model.offset(surface, x);
    if w.abs() <= config.event_tol {
        return Ok(0.0);
    }
    let sign = if w < 0.0 { 1.0 } else { -1.0 };
    match scan_first_root(model, b, x, &[surface], sign, config.horizon, config)? {
        Some((_, u)) => Ok(sign * u),
        None => Err(Error::NoImpact {
            surface,
            horizon: config.horizon,
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryDirection {
    Forward,
    Backward,
}

/// Budgeted time-to-boundary:
/// forward  max{0, min({t} ∪ {τ_b^{H_j}(x) : b_j < 0})},
/// backward min{0, max({t} ∪ {τ_b^{H_j}(x) : b_j > 0})},
/// with min ∅ = +∞ (resp. max ∅ = −∞).
pub fn budgeted_time_to_boundary(
    model: &EventModel,
    b: &Corner,
    t: f64,
    x: &DVector<f64>,
    direction: BoundaryDirection,
    config: &IntegratorConfig,
) -> Result<f64> {
    let fwd = direction == BoundaryDirection::Forward;
    let relevant: Vec<usize> = (0..model.n_events())
        .filter(|&j| if fwd { b.sign(j) < 0 } else { b.sign(j) > 0 })
        .collect();

    // A relevant surface already reached (or passed) clamps the budget.
    let crossed = |w: f64| {
        if fwd {
            w >= -config.event_tol
        } else {
            w <= config.event_tol
        }
    };
    if relevant.iter().any(|&j| crossed(model.offset(j, x))) {
        return Ok(0.0);
    }
    if relevant.is_empty() {
        // min ∅ = +∞ (max ∅ = −∞): the budget wins.
        return Ok(if fwd { t.max(0.0) } else { t.min(0.0) });
    }

    let sign = if fwd { 1.0 } else { -1.0 };
    // Roots past the signed budget never alter the min/max; cap the scan.
    let budget_internal = (sign * t).max(0.0);
    let t_stop = budget_internal.min(config.horizon);
    let hit = scan_first_root(model, b, x, &relevant, sign, t_stop, config)?;
    match hit {
        Some((_, u)) => Ok(if fwd {
            u.min(t.max(0.0))
        } else {
            (-u).max(t.min(0.0))
        }),
        None => {
            if budget_internal > config.horizon {
                Err(Error::NoImpact {
                    surface: relevant[0],
                    horizon: config.horizon,
                })
            } else {
                Ok(if fwd { t.max(0.0) } else { t.min(0.0) })
            }
        }
    }
}

/// Budgeted flow-to-boundary ζ_b^±: the smooth flow evaluated at the
/// budgeted time. Identity whenever the budget sign is wrong.
pub fn flow_to_boundary(
    model: &EventModel,
    b: &Corner,
    t: f64,
    x: &DVector<f64>,
    direction: BoundaryDirection,
    config: &IntegratorConfig,
) -> Result<DVector<f64>> {
    let tau = budgeted_time_to_boundary(model, b, t, x, direction, config)?;
    smooth_flow(model, b, x, tau, config)
}

/// Formal composition of the budgeted boundary maps: backward maps in
/// reverse lexicographic corner order, then forward maps in lexicographic
/// order, projected to the state component.
///
/// This is an independent implementation path for the flow, valid near the
/// reference point; it cross-validates the event-driven integrator.
pub fn compose_local_flow(
    model: &EventModel,
    t: f64,
    x: &DVector<f64>,
    config: &IntegratorConfig,
) -> Result<DVector<f64>> {
    let n = model.n_events();
    if n > 14 {
        return Err(Error::InvalidParameter(format!(
            "local composition over 2^{n} corners is not tractable"
        )));
    }
    let corners = Corner::enumerate(n);
    let mut budget = t;
    let mut state = x.clone();
    for b in corners.iter().rev() {
        let tau = budgeted_time_to_boundary(
            model,
            b,
            budget,
            &state,
            BoundaryDirection::Backward,
            config,
        )?;
        if tau != 0.0 {
            state = smooth_flow(model, b, &state, tau, config)?;
            budget -= tau;
        }
    }
    for b in corners.iter() {
        let tau = budgeted_time_to_boundary(
            model,
            b,
            budget,
            &state,
            BoundaryDirection::Forward,
            config,
        )?;
        if tau != 0.0 {
            state = smooth_flow(model, b, &state, tau, config)?;
            budget -= tau;
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EventFn;
    use nalgebra::DMatrix;

    fn model_1d(f_minus: f64, f_plus: f64) -> EventModel {
        EventModel::builder(1)
            .event(EventFn::coordinate(1, 0))
            .field(move |b: &Corner, _x: &DVector<f64>| {
                DVector::from_element(1, if b.sign(0) < 0 { f_minus } else { f_plus })
            })
            .field_jacobian(|_: &Corner, _: &DVector<f64>| DMatrix::zeros(1, 1))
            .rho(DVector::zeros(1))
            .f_min(0.1)
            .build()
            .unwrap()
    }

    #[test]
    fn flow_zero_time_is_identity() {
        let m = model_1d(1.0, 1.0);
        let x = DVector::from_element(1, -0.3);
        let (y, _) = flow(&m, 0.0, &x, &IntegratorConfig::default()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn flow_crosses_single_surface_with_two_piece_closed_form() {
        // Speed 2 below zero, 1 above. From −0.4 for t = 0.5: reach 0 at
        // 0.2, then 0.3 further at speed 1.
        let m = model_1d(2.0, 1.0);
        let cfg = IntegratorConfig::default();
        let x = DVector::from_element(1, -0.4);
        let (y, traj) = flow(&m, 0.5, &x, &cfg).unwrap();
        assert!((y[0] - 0.3).abs() < 1e-10, "y = {}", y[0]);
        assert_eq!(traj.events.len(), 1);
        assert!((traj.events[0].time - 0.2).abs() < 1e-10);
        assert_eq!(traj.events[0].surfaces, vec![0]);
    }

    #[test]
    fn flow_backward_inverts_forward() {
        let m = model_1d(2.0, 1.0);
        let cfg = IntegratorConfig::default();
        let x = DVector::from_element(1, -0.4);
        let (y, _) = flow(&m, 0.5, &x, &cfg).unwrap();
        let (back, traj) = flow(&m, -0.5, &y, &cfg).unwrap();
        assert!((back[0] - x[0]).abs() < 1e-10);
        assert_eq!(traj.events.len(), 1);
        // Ascending-time orientation: the crossing goes − to +.
        assert_eq!(traj.events[0].corner_before.signs(), &[-1]);
        assert_eq!(traj.events[0].corner_after.signs(), &[1]);
    }

    #[test]
    fn time_to_impact_region_signs() {
        let m = model_1d(1.0, 1.0);
        let cfg = IntegratorConfig::default();
        let b = Corner::all_minus(1);
        let tau = time_to_impact_region(&m, &b, &DVector::from_element(1, -0.3), 0, &cfg).unwrap();
        assert!((tau - 0.3).abs() < 1e-10);
        let tau = time_to_impact_region(&m, &b, &DVector::from_element(1, 0.3), 0, &cfg).unwrap();
        assert!((tau + 0.3).abs() < 1e-10);
    }

    #[test]
    fn budgeted_time_clamps_and_caps() {
        let m = model_1d(1.0, 1.0);
        let cfg = IntegratorConfig::default();
        let x = DVector::from_element(1, -0.3);
        let b = Corner::all_minus(1);
        // Negative budget in the forward map: outer max{0, ·}.
        let tau =
            budgeted_time_to_boundary(&m, &b, -2.0, &x, BoundaryDirection::Forward, &cfg).unwrap();
        assert_eq!(tau, 0.0);
        // No exit surfaces from the all-plus corner: budget wins.
        let tau = budgeted_time_to_boundary(
            &m,
            &Corner::all_plus(1),
            5.0,
            &x,
            BoundaryDirection::Forward,
            &cfg,
        )
        .unwrap();
        assert_eq!(tau, 5.0);
        // Exit time 0.3 < budget 1.
        let tau =
            budgeted_time_to_boundary(&m, &b, 1.0, &x, BoundaryDirection::Forward, &cfg).unwrap();
        assert!((tau - 0.3).abs() < 1e-10);
    }

    #[test]
    fn flow_to_boundary_identity_on_wrong_sign() {
        let m = model_1d(1.0, 1.0);
        let cfg = IntegratorConfig::default();
        let x = DVector::from_element(1, -0.3);
        let y = flow_to_boundary(
            &m,
            &Corner::all_minus(1),
            -1.0,
            &x,
            BoundaryDirection::Forward,
            &cfg,
        )
        .unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn composition_matches_two_piece_closed_form() {
        let m = model_1d(2.0, 1.0);
        let cfg = IntegratorConfig::default();
        for &(x0, t) in &[(-0.4, 0.5), (-0.4, 0.1), (0.2, 0.3), (-0.1, -0.4), (0.5, -0.6)] {
            let x = DVector::from_element(1, x0);
            let via_flow = flow(&m, t, &x, &cfg).unwrap().0;
            let via_comp = compose_local_flow(&m, t, &x, &cfg).unwrap();
            assert!(
                (via_flow[0] - via_comp[0]).abs() < 1e-9,
                "x0={x0} t={t}: {} vs {}",
                via_flow[0],
                via_comp[0]
            );
        }
    }

    #[test]
    fn semigroup_property_across_the_corner() {
        let m = model_1d(2.0, 1.0);
        let cfg = IntegratorConfig::default();
        let x = DVector::from_element(1, -0.35);
        let (s, t) = (0.11, 0.4);
        let y1 = flow(&m, s, &x, &cfg).unwrap().0;
        let y2 = flow(&m, t, &y1, &cfg).unwrap().0;
        let y12 = flow(&m, s + t, &x, &cfg).unwrap().0;
        assert!((y2[0] - y12[0]).abs() < 1e-9);
    }

    #[test]
    fn max_events_guard_trips() {
        let m = model_1d(2.0, 1.0);
        let mut cfg = IntegratorConfig::default();
        cfg.max_events = 0;
        let x = DVector::from_element(1, -0.1);
        match flow(&m, 0.5, &x, &cfg) {
            Err(Error::MaxEventsExceeded { .. }) => {}
            other => panic!("expected MaxEventsExceeded, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn grazing_is_a_hard_error() {
        // Field parallel to the surface on the + side.
        let m = EventModel::builder(2)
            .event(EventFn::coordinate(2, 1))
            .field(|b: &Corner, _x: &DVector<f64>| {
                if b.sign(0) < 0 {
                    DVector::from_vec(vec![1.0, 1.0])
                } else {
                    DVector::from_vec(vec![1.0, 0.0])
                }
            })
            .rho(DVector::zeros(2))
            .f_min(0.5)
            .build()
            .unwrap();
        let x = DVector::from_vec(vec![0.0, -0.2]);
        match flow(&m, 0.5, &x, &IntegratorConfig::default()) {
            Err(Error::NonTransverseCrossing { surface, .. }) => assert_eq!(surface, 0),
            other => panic!("expected NonTransverseCrossing, got {:?}", other.map(|_| ())),
        }
    }
}
