//! First-order sensitivity of the piecewise-differentiable flow: word
//! enumeration, saltation-matrix chains, the sampled (piecewise-constant)
//! field, and jump-linear variational equations.
//!
//! Augmented matrices are (d+1)×(d+1) with the time slot first: row/column 0
//! carries the crossing-time bookkeeping, rows/columns 1..=d the state.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flow::{flow, EventRecord, IntegratorConfig};
use crate::model::{Corner, EventFn, EventModel};
use crate::rk45::Stepper;

/// An injective monotone corner sequence from −𝟙 to +𝟙 over k surfaces.
///
/// Consecutive corners differ by flipping a nonempty set of signs from −1
/// to +1; the flip sets are the "groups" of the word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Word {
    corners: Vec<Corner>,
}

impl Word {
    /// Build from the per-step flip groups (local surface indices 0..k).
    pub fn from_groups(k: usize, groups: &[Vec<usize>]) -> Result<Word> {
        let mut corners = vec![Corner::all_minus(k)];
        let mut seen = vec![false; k];
        for g in groups {
            if g.is_empty() {
                return Err(Error::InvalidParameter("empty word group".to_string()));
            }
            let mut next = corners.last().unwrap().clone();
            for &q in g {
                if q >= k || seen[q] {
                    return Err(Error::InvalidParameter(
                        "word groups must partition the surfaces".to_string(),
                    ));
                }
                seen[q] = true;
                next.set(q, 1);
            }
            corners.push(next);
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::InvalidParameter(
                "word does not reach the all-plus corner".to_string(),
            ));
        }
        Ok(Word { corners })
    }

    /// Canonical one-surface-at-a-time word in ascending index order.
    pub fn single_steps(k: usize) -> Word {
        let groups: Vec<Vec<usize>> = (0..k).map(|q| vec![q]).collect();
        Word::from_groups(k, &groups).unwrap()
    }

    pub fn n_surfaces(&self) -> usize {
        self.corners[0].len()
    }

    /// Number of corners in the sequence (m in the −𝟙 … +𝟙 chain).
    pub fn len(&self) -> usize {
        self.corners.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn corners(&self) -> &[Corner] {
        &self.corners
    }

    /// Flip groups, local indices ascending within each group.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.corners.len() - 1);
        for s in 1..self.corners.len() {
            let prev = &self.corners[s - 1];
            let next = &self.corners[s];
            let flips = (0..prev.len())
                .filter(|&q| prev.sign(q) != next.sign(q))
                .collect();
            out.push(flips);
        }
        out
    }

    /// Label such as `{1,2}|{3}`, mapping local indices through `active`
    /// to 1-based global surface numbers.
    pub fn label(&self, active: &[usize]) -> String {
        self.groups()
            .iter()
            .map(|g| {
                let names = g
                    .iter()
                    .map(|&q| (active[q] + 1).to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                format!("{{{names}}}")
            })
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// All words over n surfaces: the ordered set partitions of {1..n}.
///
/// |result| is the ordered Bell number: 1, 3, 13, 75, … for n = 1, 2, 3, 4.
pub fn enumerate_words(n: usize) -> Vec<Word> {
    fn rec(remaining: u32, k: usize, acc: &mut Vec<Vec<usize>>, out: &mut Vec<Word>) {
        if remaining == 0 {
            out.push(Word::from_groups(k, acc).unwrap());
            return;
        }
        // Nonempty subsets of the remaining indices, ascending bitmask order.
        let mut sub = remaining & remaining.wrapping_neg();
        loop {
            let group: Vec<usize> = (0..k).filter(|&q| sub & (1 << q) != 0).collect();
            acc.push(group);
            rec(remaining & !sub, k, acc, out);
            acc.pop();
            if sub == remaining {
                break;
            }
            sub = (sub.wrapping_sub(remaining)) & remaining;
        }
    }
    assert!(n >= 1 && n <= 20, "word enumeration limited to n ≤ 20");
    let mut out = Vec::new();
    rec((1u32 << n) - 1, n, &mut Vec::new(), &mut out);
    out
}

/// One rank-1 update factor: I + s/(gᵀf) [1; −f][0 gᵀ], time slot first.
pub(crate) fn saltation_factor(
    f: &DVector<f64>,
    g: &DVector<f64>,
    f_min: f64,
    sign: f64,
) -> Result<DMatrix<f64>> {
    let d = f.len();
    let gf = g.dot(f);
    if gf.abs() < f_min {
        return Err(Error::DivisionNearZero {
            value: gf,
            margin: f_min,
        });
    }
    let mut m = DMatrix::<f64>::identity(d + 1, d + 1);
    for c in 0..d {
        let gc = sign * g[c] / gf;
        m[(0, c + 1)] += gc;
        for r in 0..d {
            m[(r + 1, c + 1)] -= f[r] * gc;
        }
    }
    Ok(m)
}

/// Classical single-surface saltation matrix (d×d):
/// I + (F_after − F_before)·Dh_j / (Dh_j·F_before).
pub fn single_surface_saltation(
    model: &EventModel,
    rho: &DVector<f64>,
    surface: usize,
    b_before: &Corner,
    b_after: &Corner,
) -> Result<DMatrix<f64>> {
    let g = model.event_gradient(surface, rho);
    let f_before = model.field(b_before, rho);
    let f_after = model.field(b_after, rho);
    let gf = g.dot(&f_before);
    if gf.abs() < model.f_min() {
        return Err(Error::DivisionNearZero {
            value: gf,
            margin: model.f_min(),
        });
    }
    let d = model.dim();
    Ok(DMatrix::identity(d, d) + (f_after - f_before) * g.transpose() / gf)
}

/// Ordered product of rank-1 update factors for one crossing cluster.
#[derive(Clone, Debug)]
pub struct SaltationChain {
    pub word: Word,
    /// Global surface index of each factor, in application order.
    pub eta: Vec<usize>,
    pub factors: Vec<DMatrix<f64>>,
    /// Ordered product, later factors applied on the left.
    pub product: DMatrix<f64>,
    /// Max-abs deviation of the product over alternative orderings within
    /// simultaneous groups; large values flag order-sensitive transverse
    /// ties (tangent groups are provably order-independent).
    pub order_spread: f64,
}

/// Builds the saltation chain for `word` at the cluster point `rho`.
///
/// `base_corner` fixes the signs of surfaces not in `active`; the active
/// signs follow the word. Within a simultaneous group each flipped surface
/// contributes one factor, with the region field advanced through the
/// intermediate corners in `eta` order (ascending by default).
pub fn saltation_chain(
    model: &EventModel,
    rho: &DVector<f64>,
    base_corner: &Corner,
    active: &[usize],
    word: &Word,
    eta_groups: Option<&[Vec<usize>]>,
) -> Result<SaltationChain> {
    saltation_chain_with_sign(model, rho, base_corner, active, word, eta_groups, 1.0)
}

pub(crate) fn saltation_chain_with_sign(
    model: &EventModel,
    rho: &DVector<f64>,
    base_corner: &Corner,
    active: &[usize],
    word: &Word,
    eta_groups: Option<&[Vec<usize>]>,
    sign: f64,
) -> Result<SaltationChain> {
    let k = active.len();
    if word.n_surfaces() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: word.n_surfaces(),
        });
    }
    let groups = word.groups();
    let ordered_groups: Vec<Vec<usize>> = match eta_groups {
        Some(gs) => {
            if gs.len() != groups.len() {
                return Err(Error::InvalidParameter(
                    "eta group count does not match the word".to_string(),
                ));
            }
            // Map global indices back to local positions and check consistency.
            let mut out = Vec::with_capacity(gs.len());
            for (g_eta, g_word) in gs.iter().zip(&groups) {
                let mut local = Vec::with_capacity(g_eta.len());
                for &j in g_eta {
                    let q = active
                        .iter()
                        .position(|&a| a == j)
                        .ok_or_else(|| Error::InvalidParameter(format!(
                            "eta surface {j} is not in the active set"
                        )))?;
                    local.push(q);
                }
                let mut sorted = local.clone();
                sorted.sort_unstable();
                let mut expect = g_word.clone();
                expect.sort_unstable();
                if sorted != expect {
                    return Err(Error::InvalidParameter(
                        "eta groups must permute the word's flip sets".to_string(),
                    ));
                }
                out.push(local);
            }
            out
        }
        None => groups.clone(),
    };

    let build = |orders: &[Vec<usize>]| -> Result<(Vec<usize>, Vec<DMatrix<f64>>, DMatrix<f64>)> {
        let mut cur = base_corner.clone();
        for &j in active {
            cur.set(j, -1);
        }
        let mut eta = Vec::with_capacity(k);
        let mut factors = Vec::with_capacity(k);
        let mut product = DMatrix::<f64>::identity(model.dim() + 1, model.dim() + 1);
        for group in orders {
            for &q in group {
                let j = active[q];
                let g = model.event_gradient(j, rho);
                let f = model.field(&cur, rho);
                let factor = saltation_factor(&f, &g, model.f_min(), sign)?;
                product = &factor * product;
                factors.push(factor);
                eta.push(j);
                cur.set(j, 1);
            }
        }
        Ok((eta, factors, product))
    };

    let (eta, factors, product) = build(&ordered_groups)?;

    // Order-sensitivity diagnostic across intra-group permutations.
    let mut order_spread = 0.0_f64;
    if ordered_groups.iter().any(|g| g.len() > 1) {
        let mut alternates: Vec<Vec<Vec<usize>>> = vec![ordered_groups.clone()];
        for (gi, g) in ordered_groups.iter().enumerate() {
            if g.len() > 1 && alternates.len() < 64 {
                for perm in permutations(g) {
                    if perm != *g {
                        let mut alt = ordered_groups.clone();
                        alt[gi] = perm;
                        alternates.push(alt);
                    }
                }
            }
        }
        for alt in alternates.iter().skip(1) {
            if let Ok((_, _, p)) = build(alt) {
                order_spread = order_spread.max(crate::linalg::max_abs(&(&p - &product)));
            }
        }
    }

    Ok(SaltationChain {
        word: word.clone(),
        eta,
        factors,
        product,
        order_spread,
    })
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for (i, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut tail in permutations(&rest) {
            let mut v = vec![x];
            v.append(&mut tail);
            out.push(v);
        }
    }
    out
}

/// The piecewise-constant model obtained by freezing each region field at ρ
/// and linearizing every event surface there. Its flow agrees with the
/// original to first order and is piecewise-affine.
pub fn sampled_field(model: &EventModel, rho: &DVector<f64>) -> Result<EventModel> {
    let n = model.n_events();
    let mut builder = EventModel::builder(model.dim());
    let mut levels = Vec::with_capacity(n);
    for j in 0..n {
        let g = model.event_gradient(j, rho);
        levels.push(g.dot(rho));
        builder = builder.event(EventFn::linear(g));
    }
    let frozen = model.clone();
    let at = rho.clone();
    let frozen_dim = model.dim();
    builder
        .levels(levels)
        .field(move |b: &Corner, _x: &DVector<f64>| frozen.field(b, &at))
        .field_jacobian(move |_: &Corner, _: &DVector<f64>| DMatrix::zeros(frozen_dim, frozen_dim))
        .rho(rho.clone())
        .f_min(model.f_min())
        .validity_radius(f64::INFINITY)
        .build()
}

/// Crossing order of the sampled field started at ρ* + ε·direction.
///
/// Returns the word over `active` together with the per-factor global
/// surface order (η). Crossing times within a relative merge window are
/// grouped as simultaneous; a zero direction yields the canonical
/// one-at-a-time word (every chain gives the same jump for it).
pub fn detect_word(
    model: &EventModel,
    point: &DVector<f64>,
    base_corner: &Corner,
    active: &[usize],
    direction: &DVector<f64>,
    merge_rel: f64,
) -> Result<(Word, Vec<Vec<usize>>)> {
    let k = active.len();
    let norm = direction.norm();
    if norm < 1e-300 {
        let word = Word::single_steps(k);
        let eta = word.groups().iter().map(|g| g.iter().map(|&q| active[q]).collect()).collect();
        return Ok((word, eta));
    }
    let grads: Vec<DVector<f64>> = active
        .iter()
        .map(|&j| model.event_gradient(j, point))
        .collect();
    let eps = 1e-6 * point.norm().max(1.0);
    let mut y: DVector<f64> = eps * direction / norm;

    let corner_for = |signs: &[i8], base: &Corner| {
        let mut c = base.clone();
        for (q, &j) in active.iter().enumerate() {
            c.set(j, signs[q]);
        }
        c
    };
    let mut signs: Vec<i8> = grads
        .iter()
        .map(|g| if g.dot(&y) >= 0.0 { 1 } else { -1 })
        .collect();

    // Walk backward to the all-minus cone.
    let mut guard = 0;
    while signs.iter().any(|&s| s > 0) {
        let cur = corner_for(&signs, base_corner);
        let f = model.field(&cur, point);
        let mut t_back = f64::INFINITY;
        let mut last: Vec<usize> = Vec::new();
        for q in 0..k {
            if signs[q] > 0 {
                let rate = grads[q].dot(&f);
                if rate <= 0.0 {
                    return Err(Error::NonTransverseCrossing {
                        surface: active[q],
                        state: point.iter().copied().collect(),
                        value: rate.abs(),
                        margin: model.f_min(),
                    });
                }
                let tq = grads[q].dot(&y) / rate;
                if tq < t_back - merge_window(t_back, eps, &f, merge_rel) {
                    t_back = tq;
                    last = vec![q];
                } else if (tq - t_back).abs() <= merge_window(t_back, eps, &f, merge_rel) {
                    last.push(q);
                    t_back = t_back.min(tq);
                }
            }
        }
        y -= t_back * &f;
        for &q in &last {
            signs[q] = -1;
        }
        guard += 1;
        if guard > k + 2 {
            return Err(Error::InvalidParameter(
                "word detection failed to reach the all-minus cone".to_string(),
            ));
        }
    }

    // Walk forward recording the crossing groups.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    guard = 0;
    while signs.iter().any(|&s| s < 0) {
        let cur = corner_for(&signs, base_corner);
        let f = model.field(&cur, point);
        let mut dt_all: Vec<(f64, usize)> = Vec::new();
        for q in 0..k {
            if signs[q] < 0 {
                let rate = grads[q].dot(&f);
                if rate <= 0.0 {
                    return Err(Error::NonTransverseCrossing {
                        surface: active[q],
                        state: point.iter().copied().collect(),
                        value: rate.abs(),
                        margin: model.f_min(),
                    });
                }
                dt_all.push((-grads[q].dot(&y) / rate, q));
            }
        }
        dt_all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let dt_star = dt_all[0].0.max(0.0);
        let window = merge_window(dt_star, eps, &f, merge_rel);
        let group: Vec<usize> = dt_all
            .iter()
            .filter(|(dt, _)| dt - dt_star <= window)
            .map(|&(_, q)| q)
            .collect();
        y += dt_star * &f;
        for &q in &group {
            signs[q] = 1;
        }
        groups.push(group);
        guard += 1;
        if guard > k + 2 {
            return Err(Error::InvalidParameter(
                "word detection failed to reach the all-plus cone".to_string(),
            ));
        }
    }

    let word = Word::from_groups(k, &groups)?;
    let eta = groups
        .iter()
        .map(|g| g.iter().map(|&q| active[q]).collect())
        .collect();
    Ok((word, eta))
}

fn merge_window(t_ref: f64, eps: f64, f: &DVector<f64>, merge_rel: f64) -> f64 {
    let timescale = eps / f.norm().max(1e-12);
    merge_rel * (t_ref.abs() + timescale)
}

/// Options threaded through the derivative pipeline.
#[derive(Clone, Debug)]
pub struct DerivativeOptions {
    /// Sign applied to every saltation rank-1 term; −1 is a deliberate
    /// corruption used by the acceptance suite's mutation mode.
    pub chain_sign: f64,
    /// Relative window for merging near-simultaneous crossings.
    pub merge_rel: f64,
}

impl Default for DerivativeOptions {
    fn default() -> Self {
        DerivativeOptions {
            chain_sign: 1.0,
            merge_rel: 1e-6,
        }
    }
}

/// Integrates the smooth variational columns alongside the base trajectory
/// within one region: ẋ = s·F_b(x), Ċ = s·D_xF_b(x)·C over |dt|.
pub(crate) fn segment_with_columns(
    model: &EventModel,
    corner: &Corner,
    x0: &DVector<f64>,
    dt: f64,
    cols: &DMatrix<f64>,
    config: &IntegratorConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = model.dim();
    let k = cols.ncols();
    if dt == 0.0 {
        return Ok((x0.clone(), cols.clone()));
    }
    let sign = dt.signum();
    let span = dt.abs();
    let mut z0 = DVector::zeros(d + d * k);
    z0.rows_mut(0, d).copy_from(x0);
    for c in 0..k {
        z0.rows_mut(d + c * d, d).copy_from(&cols.column(c));
    }
    let rhs = |z: &DVector<f64>| {
        let x = z.rows(0, d).into_owned();
        let f = model.field(corner, &x);
        let jac = model.field_jacobian(corner, &x);
        let mut out = DVector::zeros(d + d * k);
        out.rows_mut(0, d).copy_from(&(sign * &f));
        for c in 0..k {
            let col = z.rows(d + c * d, d).into_owned();
            out.rows_mut(d + c * d, d).copy_from(&(sign * (&jac * col)));
        }
        out
    };
    let mut stepper = Stepper::new(&rhs, 0.0, z0, config.rel_tol, config.abs_tol, config.max_step);
    while stepper.t < span {
        stepper.advance(span)?;
    }
    let z = stepper.y.clone();
    let x1 = z.rows(0, d).into_owned();
    let mut out = DMatrix::zeros(d, k);
    for c in 0..k {
        out.set_column(c, &z.rows(d + c * d, d));
    }
    Ok((x1, out))
}

/// Bouligand derivative of the flow in the direction (v, w).
///
/// The trajectory is integrated once; at every crossing cluster the active
/// word for the evolved perturbation is detected on the sampled field and
/// the corresponding saltation chain applied to the jump-linear variational
/// state. Positively homogeneous in (v, w) by construction.
pub fn b_derivative(
    model: &EventModel,
    t: f64,
    x: &DVector<f64>,
    v: f64,
    w: &DVector<f64>,
    config: &IntegratorConfig,
) -> Result<DVector<f64>> {
    b_derivative_with(model, t, x, v, w, config, &DerivativeOptions::default())
}

pub fn b_derivative_with(
    model: &EventModel,
    t: f64,
    x: &DVector<f64>,
    v: f64,
    w: &DVector<f64>,
    config: &IntegratorConfig,
    opts: &DerivativeOptions,
) -> Result<DVector<f64>> {
    if t < 0.0 {
        // φ(t, x) = φ_rev(|t|, x), so D φ(t,x; v,w) = D φ_rev(|t|,x; −v,w).
        return b_derivative_with(&model.reversed(), -t, x, -v, w, config, opts);
    }
    if w.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: w.len(),
        });
    }
    let (_, traj) = flow(model, t, x, config)?;
    let mut lambda = v;
    let mut xi = w.clone();
    let mut x_cur = x.clone();
    let mut t_prev = 0.0;
    for ev in &traj.events {
        let (x1, cols) = segment_with_columns(
            model,
            &ev.corner_before,
            &x_cur,
            ev.time - t_prev,
            &DMatrix::from_column_slice(model.dim(), 1, xi.as_slice()),
            config,
        )?;
        debug_assert!((&x1 - &ev.state).norm() < 1e-6 * (1.0 + ev.state.norm()));
        xi = cols.column(0).into_owned();
        let (word, eta) = detect_word(
            model,
            &ev.state,
            &ev.corner_before,
            &ev.surfaces,
            &xi,
            opts.merge_rel,
        )?;
        let chain = saltation_chain_with_sign(
            model,
            &ev.state,
            &ev.corner_before,
            &ev.surfaces,
            &word,
            Some(&eta),
            opts.chain_sign,
        )?;
        let mut aug = DVector::zeros(model.dim() + 1);
        aug[0] = lambda;
        aug.rows_mut(1, model.dim()).copy_from(&xi);
        let jumped = &chain.product * aug;
        lambda = jumped[0];
        xi = jumped.rows(1, model.dim()).into_owned();
        x_cur = ev.state.clone();
        t_prev = ev.time;
    }
    let final_corner = traj
        .corners
        .last()
        .cloned()
        .unwrap_or_else(|| model.classify(x));
    let (x_end, cols) = segment_with_columns(
        model,
        &final_corner,
        &x_cur,
        t - t_prev,
        &DMatrix::from_column_slice(model.dim(), 1, xi.as_slice()),
        config,
    )?;
    xi = cols.column(0).into_owned();
    let f_end = model.field(&final_corner, &x_end);
    Ok(f_end * lambda + xi)
}

/// Frechet derivative of the selection function φ_ω as a d×(d+1) matrix
/// (time column first), obtained from the matrix jump-linear variational
/// equation with the chain of `word` applied at the cluster nearest `s`.
pub fn per_word_derivative(
    model: &EventModel,
    t: f64,
    x: &DVector<f64>,
    s: f64,
    word: &Word,
    eta_groups: Option<&[Vec<usize>]>,
    config: &IntegratorConfig,
) -> Result<DMatrix<f64>> {
    per_word_derivative_with(model, t, x, s, word, eta_groups, config, &DerivativeOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn per_word_derivative_with(
    model: &EventModel,
    t: f64,
    x: &DVector<f64>,
    s: f64,
    word: &Word,
    eta_groups: Option<&[Vec<usize>]>,
    config: &IntegratorConfig,
    opts: &DerivativeOptions,
) -> Result<DMatrix<f64>> {
    if t < 0.0 {
        return Err(Error::InvalidParameter(
            "per-word derivatives are computed in forward time; reverse the model".to_string(),
        ));
    }
    let d = model.dim();
    let (_, traj) = flow(model, t, x, config)?;
    if traj.events.is_empty() {
        return Err(Error::InvalidParameter(
            "no crossing cluster in [0, t]".to_string(),
        ));
    }
    let tol = (1e-9_f64).max(1e-6 * t.abs());
    let target = traj
        .events
        .iter()
        .position(|e| (e.time - s).abs() <= tol)
        .ok_or_else(|| {
            Error::InvalidParameter(format!("no crossing cluster at time {s} (tolerance {tol})"))
        })?;
    if traj.events.len() != 1 {
        return Err(Error::InvalidParameter(
            "multiple crossing clusters in [0, t]; chain per-cluster derivatives instead"
                .to_string(),
        ));
    }
    let ev = &traj.events[target];
    let chain = saltation_chain_with_sign(
        model,
        &ev.state,
        &ev.corner_before,
        &ev.surfaces,
        word,
        eta_groups,
        opts.chain_sign,
    )?;

    // Augmented product P maps (v, w) to (λ(t), ξ(t)).
    let mut p = DMatrix::<f64>::identity(d + 1, d + 1);
    let (x1, xcols) = segment_with_columns(
        model,
        &ev.corner_before,
        x,
        ev.time,
        &DMatrix::identity(d, d),
        config,
    )?;
    let _ = x1;
    let mut seg = DMatrix::<f64>::identity(d + 1, d + 1);
    seg.view_mut((1, 1), (d, d)).copy_from(&xcols);
    p = &seg * p;
    p = &chain.product * p;
    let (x_end, xcols2) = segment_with_columns(
        model,
        &ev.corner_after,
        &ev.state,
        t - ev.time,
        &DMatrix::identity(d, d),
        config,
    )?;
    let mut seg2 = DMatrix::<f64>::identity(d + 1, d + 1);
    seg2.view_mut((1, 1), (d, d)).copy_from(&xcols2);
    p = &seg2 * p;

    let f_end = model.field(&ev.corner_after, &x_end);
    let mut conv = DMatrix::<f64>::zeros(d, d + 1);
    conv.set_column(0, &f_end);
    conv.view_mut((0, 1), (d, d))
        .copy_from(&DMatrix::identity(d, d));
    Ok(conv * p)
}

/// Verifies the tangency reduction identity at ρ: inserting the factor of
/// the thin region between two tangent surfaces leaves the chain product
/// unchanged (to 1e−12).
pub fn tangency_reduction_check(
    model: &EventModel,
    rho: &DVector<f64>,
    surface_j: usize,
    surface_i: usize,
) -> Result<bool> {
    let gj = model.event_gradient(surface_j, rho);
    let gi = model.event_gradient(surface_i, rho);
    let gj_hat = &gj / gj.norm();
    let residual = (&gi - gi.dot(&gj_hat) * &gj_hat).norm() / gi.norm();
    if residual > 1e-8 {
        return Err(Error::NotTangent {
            i: surface_i,
            j: surface_j,
            residual,
        });
    }
    let mut prev = Corner::all_minus(model.n_events());
    // Surfaces other than the tangent pair keep the all-minus sign.
    let f_prev = model.field(&prev, rho);
    let s_prev = saltation_factor(&f_prev, &gj, model.f_min(), 1.0)?;
    prev.set(surface_j, 1);
    let f_mid = model.field(&prev, rho);
    let s_mid = saltation_factor(&f_mid, &gi, model.f_min(), 1.0)?;
    let diff = &s_mid * &s_prev - &s_prev;
    Ok(crate::linalg::max_abs(&diff) <= 1e-12)
}

/// Convenience: word + chain detected for a direction at a recorded cluster.
pub fn chain_for_direction(
    model: &EventModel,
    cluster: &EventRecord,
    direction: &DVector<f64>,
    opts: &DerivativeOptions,
) -> Result<SaltationChain> {
    let (word, eta) = detect_word(
        model,
        &cluster.state,
        &cluster.corner_before,
        &cluster.surfaces,
        direction,
        opts.merge_rel,
    )?;
    saltation_chain_with_sign(
        model,
        &cluster.state,
        &cluster.corner_before,
        &cluster.surfaces,
        &word,
        Some(&eta),
        opts.chain_sign,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_counts_match_ordered_bell_numbers() {
        assert_eq!(enumerate_words(1).len(), 1);
        assert_eq!(enumerate_words(2).len(), 3);
        assert_eq!(enumerate_words(3).len(), 13);
        assert_eq!(enumerate_words(4).len(), 75);
    }

    #[test]
    fn word_counts_match_brute_force_paths() {
        // Brute force: count monotone corner paths from −𝟙 to +𝟙 where each
        // step flips a nonempty subset from −1 to +1.
        fn paths(current: u32, full: u32) -> usize {
            if current == full {
                return 1;
            }
            let remaining = full & !current;
            let mut total = 0;
            let mut sub = remaining & remaining.wrapping_neg();
            loop {
                total += paths(current | sub, full);
                if sub == remaining {
                    break;
                }
                sub = (sub.wrapping_sub(remaining)) & remaining;
            }
            total
        }
        for n in 1..=4 {
            let full = (1u32 << n) - 1;
            assert_eq!(enumerate_words(n).len(), paths(0, full));
        }
    }

    #[test]
    fn words_for_two_surfaces_are_the_three_monotone_paths() {
        let words = enumerate_words(2);
        let labels: Vec<String> = words.iter().map(|w| w.label(&[0, 1])).collect();
        assert!(labels.contains(&"{1,2}".to_string()));
        assert!(labels.contains(&"{1}|{2}".to_string()));
        assert!(labels.contains(&"{2}|{1}".to_string()));
    }

    #[test]
    fn factor_time_row_and_rank() {
        let f = DVector::from_vec(vec![1.5, 0.5]);
        let g = DVector::from_vec(vec![1.0, 0.0]);
        let m = saltation_factor(&f, &g, 1e-6, 1.0).unwrap();
        // Time row: [1, gᵀ/(gᵀf)].
        assert!((m[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((m[(0, 1)] - 1.0 / 1.5).abs() < 1e-15);
        assert!((m[(0, 2)]).abs() < 1e-15);
        // rank(M − I) ≤ 1: second singular value vanishes.
        let diff = &m - DMatrix::<f64>::identity(3, 3);
        let sv = diff.svd(false, false).singular_values;
        assert!(sv[1] < 1e-14);
    }

    #[test]
    fn identical_fields_make_identity_saltation() {
        let f = DVector::from_vec(vec![0.7, 1.3]);
        let g = DVector::from_vec(vec![0.0, 1.0]);
        // Classical d×d form telescopes to the identity when fields agree.
        let m = DMatrix::<f64>::identity(2, 2) + (&f - &f) * g.transpose() / g.dot(&f);
        assert_eq!(m, DMatrix::identity(2, 2));
    }
}
