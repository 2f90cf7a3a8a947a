//! Vector-field models with event-selected discontinuities.
//!
//! A model bundles a state dimension, a family of scalar event functions
//! whose level sets carve the neighborhood into sign-indexed regions, and a
//! resolver mapping each region to its smooth vector field. All pieces are
//! immutable after construction and cheap to clone (closures are shared).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type FieldFn = Arc<dyn Fn(&Corner, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type FieldJacFn = Arc<dyn Fn(&Corner, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type DomainFn = Arc<dyn Fn(&DVector<f64>) -> Option<Error> + Send + Sync>;

/// Sign vector in {−1,+1}ⁿ labelling one region of the surface arrangement.
///
/// The derived ordering is lexicographic with −1 < +1, so the all-minus
/// corner is the minimum and the all-plus corner is the maximum.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Corner(Vec<i8>);

impl Corner {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidParameter(
                "corner signs must be ±1".to_string(),
            ));
        }
        Ok(Corner(signs))
    }

    pub fn all_minus(n: usize) -> Self {
        Corner(vec![-1; n])
    }

    pub fn all_plus(n: usize) -> Self {
        Corner(vec![1; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sign(&self, j: usize) -> i8 {
        self.0[j]
    }

    pub fn signs(&self) -> &[i8] {
        &self.0
    }

    pub fn with_flipped(&self, j: usize) -> Self {
        let mut s = self.0.clone();
        s[j] = -s[j];
        Corner(s)
    }

    pub fn set(&mut self, j: usize, sign: i8) {
        debug_assert!(sign == 1 || sign == -1);
        self.0[j] = sign;
    }

    pub fn is_all_plus(&self) -> bool {
        self.0.iter().all(|&s| s == 1)
    }

    pub fn is_all_minus(&self) -> bool {
        self.0.iter().all(|&s| s == -1)
    }

    /// Signed-bit string such as `+-+`.
    pub fn bit_string(&self) -> String {
        self.0
            .iter()
            .map(|&s| if s > 0 { '+' } else { '-' })
            .collect()
    }

    /// Every corner of the n-cube in ascending lexicographic order.
    pub fn enumerate(n: usize) -> Vec<Corner> {
        let mut out = Vec::with_capacity(1 << n);
        for mask in 0..(1usize << n) {
            let signs = (0..n)
                .map(|j| if mask & (1 << (n - 1 - j)) != 0 { 1 } else { -1 })
                .collect();
            out.push(Corner(signs));
        }
        out
    }
}

impl fmt::Debug for Corner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.bit_string())
    }
}

impl fmt::Display for Corner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bit_string())
    }
}

/// Central finite-difference step for gradients: cbrt(ε)·max(1, |x|).
fn fd_step(x: &DVector<f64>) -> f64 {
    f64::EPSILON.cbrt() * x.norm().max(1.0)
}

/// Scalar event function h with an optional analytic gradient.
#[derive(Clone)]
pub struct EventFn {
    value: ScalarFn,
    gradient: Option<GradFn>,
}

impl EventFn {
    pub fn new(value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        EventFn {
            value: Arc::new(value),
            gradient: None,
        }
    }

    pub fn with_gradient(
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        EventFn {
            value: Arc::new(value),
            gradient: Some(Arc::new(gradient)),
        }
    }

    /// Linear event function x ↦ gᵀx.
    pub fn linear(g: DVector<f64>) -> Self {
        let g2 = g.clone();
        EventFn {
            value: Arc::new(move |x: &DVector<f64>| g.dot(x)),
            gradient: Some(Arc::new(move |_: &DVector<f64>| g2.clone())),
        }
    }

    /// The j-th coordinate function.
    pub fn coordinate(dim: usize, j: usize) -> Self {
        EventFn {
            value: Arc::new(move |x: &DVector<f64>| x[j]),
            gradient: Some(Arc::new(move |_: &DVector<f64>| {
                let mut g = DVector::zeros(dim);
                g[j] = 1.0;
                g
            })),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    /// Gradient, falling back to central differences when not supplied.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        if let Some(g) = &self.gradient {
            return g(x);
        }
        let h = fd_step(x);
        let mut out = DVector::zeros(x.len());
        let mut xp = x.clone();
        for i in 0..x.len() {
            let xi = x[i];
            xp[i] = xi + h;
            let fp = (self.value)(&xp);
            xp[i] = xi - h;
            let fm = (self.value)(&xp);
            xp[i] = xi;
            out[i] = (fp - fm) / (2.0 * h);
        }
        out
    }
}

/// Per-(region, surface) transversality minima gathered by sampling.
#[derive(Clone, Debug)]
pub struct TransversalityReport {
    /// (corner, surface index, min over samples of Dh_j(x)·F_b(x)).
    pub minima: Vec<(Corner, usize, f64)>,
    pub samples: usize,
    pub radius: f64,
    pub margin: f64,
    pub passed: bool,
}

/// An event-selected vector-field model.
#[derive(Clone)]
pub struct EventModel {
    dim: usize,
    events: Vec<EventFn>,
    levels: Vec<f64>,
    field: FieldFn,
    field_jacobian: Option<FieldJacFn>,
    rho: DVector<f64>,
    f_min: f64,
    validity_radius: f64,
    domain: Option<DomainFn>,
}

impl EventModel {
    pub fn builder(dim: usize) -> EventModelBuilder {
        EventModelBuilder {
            dim,
            events: Vec::new(),
            levels: None,
            field: None,
            field_jacobian: None,
            rho: None,
            f_min: 1e-6,
            validity_radius: 1.0,
            domain: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    pub fn rho(&self) -> &DVector<f64> {
        &self.rho
    }

    pub fn f_min(&self) -> f64 {
        self.f_min
    }

    pub fn validity_radius(&self) -> f64 {
        self.validity_radius
    }

    pub fn event(&self, j: usize) -> &EventFn {
        &self.events[j]
    }

    pub fn level(&self, j: usize) -> f64 {
        self.levels[j]
    }

    /// Offset of x from surface j: h_j(x) − h_j(ρ) (or the explicit level).
    pub fn offset(&self, j: usize, x: &DVector<f64>) -> f64 {
        self.events[j].value(x) - self.levels[j]
    }

    pub fn event_gradient(&self, j: usize, x: &DVector<f64>) -> DVector<f64> {
        self.events[j].gradient(x)
    }

    pub fn field(&self, b: &Corner, x: &DVector<f64>) -> DVector<f64> {
        (self.field)(b, x)
    }

    /// State Jacobian of the region field, by closure or central differences.
    pub fn field_jacobian(&self, b: &Corner, x: &DVector<f64>) -> DMatrix<f64> {
        if let Some(j) = &self.field_jacobian {
            return j(b, x);
        }
        let h = fd_step(x);
        let mut out = DMatrix::zeros(self.dim, self.dim);
        let mut xp = x.clone();
        for c in 0..self.dim {
            let xc = x[c];
            xp[c] = xc + h;
            let fp = (self.field)(b, &xp);
            xp[c] = xc - h;
            let fm = (self.field)(b, &xp);
            xp[c] = xc;
            for r in 0..self.dim {
                out[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        out
    }

    /// Region membership: sign(h(x) − h(ρ)) with the ≥ 0 ↦ +1 convention.
    pub fn classify(&self, x: &DVector<f64>) -> Corner {
        let signs = (0..self.n_events())
            .map(|j| if self.offset(j, x) >= 0.0 { 1 } else { -1 })
            .collect();
        Corner(signs)
    }

    /// Checks `x` against the model's declared domain, if any.
    pub fn check_domain(&self, x: &DVector<f64>) -> Result<()> {
        if let Some(dom) = &self.domain {
            if let Some(e) = dom(x) {
                return Err(e);
            }
        }
        Ok(())
    }

    /// Sampling-based check that every event function is transverse to every
    /// realized region field: Dh_j(x)·F_b(x) ≥ f_min on a ball around ρ.
    ///
    /// Regions are discovered by classifying the samples, so corners with
    /// empty interior never contribute.
    pub fn validate_transversality(
        &self,
        radius: f64,
        samples: usize,
        seed: u64,
    ) -> Result<TransversalityReport> {
        if radius <= 0.0 || samples == 0 {
            return Err(Error::InvalidParameter(
                "radius must be positive and samples ≥ 1".to_string(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut minima: Vec<(Corner, usize, f64, DVector<f64>)> = Vec::new();
        for _ in 0..samples {
            let x = sample_in_ball(&mut rng, &self.rho, radius);
            if self.check_domain(&x).is_err() {
                continue;
            }
            let b = self.classify(&x);
            let f = self.field(&b, &x);
            for j in 0..self.n_events() {
                let v = self.event_gradient(j, &x).dot(&f);
                match minima.iter_mut().find(|(c, jj, _, _)| *c == b && *jj == j) {
                    Some(entry) => {
                        if v < entry.2 {
                            entry.2 = v;
                            entry.3 = x.clone();
                        }
                    }
                    None => minima.push((b.clone(), j, v, x.clone())),
                }
            }
        }
        if let Some((b, j, v, x)) = minima
            .iter()
            .filter(|(_, _, v, _)| *v < self.f_min)
            .min_by(|a, b| a.2.partial_cmp(&b.2).unwrap())
        {
            return Err(Error::TransversalityViolation {
                corner: b.bit_string(),
                surface: *j,
                state: x.iter().copied().collect(),
                value: *v,
                margin: self.f_min,
            });
        }
        Ok(TransversalityReport {
            minima: minima.into_iter().map(|(b, j, v, _)| (b, j, v)).collect(),
            samples,
            radius,
            margin: self.f_min,
            passed: true,
        })
    }

    /// The same model with every region field reversed; corners are relabeled
    /// so that the reversed event functions (−h_j) drive the sign convention.
    pub fn reversed(&self) -> EventModel {
        let orig = self.clone();
        let orig_j = self.clone();
        let n = self.n_events();
        let events = (0..n)
            .map(|j| {
                let m = self.clone();
                let mg = self.clone();
                EventFn {
                    value: Arc::new(move |x: &DVector<f64>| -(m.events[j].value)(x)),
                    gradient: Some(Arc::new(move |x: &DVector<f64>| {
                        -mg.events[j].gradient(x)
                    })),
                }
            })
            .collect();
        let levels = self.levels.iter().map(|l| -l).collect();
        let flip = |b: &Corner| Corner(b.0.iter().map(|s| -s).collect());
        EventModel {
            dim: self.dim,
            events,
            levels,
            field: Arc::new(move |b: &Corner, x: &DVector<f64>| -orig.field(&flip(b), x)),
            field_jacobian: Some(Arc::new(move |b: &Corner, x: &DVector<f64>| {
                -orig_j.field_jacobian(&flip(b), x)
            })),
            rho: self.rho.clone(),
            f_min: self.f_min,
            validity_radius: self.validity_radius,
            domain: self.domain.clone(),
        }
    }
}

/// Uniform sample in the ball of given radius around a center.
pub(crate) fn sample_in_ball(
    rng: &mut ChaCha8Rng,
    center: &DVector<f64>,
    radius: f64,
) -> DVector<f64> {
    let d = center.len();
    loop {
        let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        if v.norm_squared() <= 1.0 {
            return center + radius * v;
        }
    }
}

pub struct EventModelBuilder {
    dim: usize,
    events: Vec<EventFn>,
    levels: Option<Vec<f64>>,
    field: Option<FieldFn>,
    field_jacobian: Option<FieldJacFn>,
    rho: Option<DVector<f64>>,
    f_min: f64,
    validity_radius: f64,
    domain: Option<DomainFn>,
}

impl EventModelBuilder {
    pub fn event(mut self, e: EventFn) -> Self {
        self.events.push(e);
        self
    }

    pub fn events(mut self, es: Vec<EventFn>) -> Self {
        self.events.extend(es);
        self
    }

    /// Explicit surface levels; defaults to h_j(ρ) when omitted.
    pub fn levels(mut self, levels: Vec<f64>) -> Self {
        self.levels = Some(levels);
        self
    }

    /// Region → field resolver. Must return a transversal extension for
    /// every corner, including corners whose region has empty interior.
    pub fn field(
        mut self,
        f: impl Fn(&Corner, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.field = Some(Arc::new(f));
        self
    }

    pub fn field_jacobian(
        mut self,
        j: impl Fn(&Corner, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.field_jacobian = Some(Arc::new(j));
        self
    }

    pub fn rho(mut self, rho: DVector<f64>) -> Self {
        self.rho = Some(rho);
        self
    }

    pub fn f_min(mut self, f_min: f64) -> Self {
        self.f_min = f_min;
        self
    }

    pub fn validity_radius(mut self, r: f64) -> Self {
        self.validity_radius = r;
        self
    }

    pub fn domain(
        mut self,
        dom: impl Fn(&DVector<f64>) -> Option<Error> + Send + Sync + 'static,
    ) -> Self {
        self.domain = Some(Arc::new(dom));
        self
    }

    pub fn build(self) -> Result<EventModel> {
        let rho = self
            .rho
            .ok_or_else(|| Error::InvalidParameter("missing reference point".to_string()))?;
        if rho.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: rho.len(),
            });
        }
        if self.events.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one event function required".to_string(),
            ));
        }
        if self.f_min <= 0.0 {
            return Err(Error::InvalidParameter(
                "transversality margin must be positive".to_string(),
            ));
        }
        let field = self
            .field
            .ok_or_else(|| Error::InvalidParameter("missing field resolver".to_string()))?;
        let levels = match self.levels {
            Some(l) => {
                if l.len() != self.events.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.events.len(),
                        actual: l.len(),
                    });
                }
                l
            }
            None => self.events.iter().map(|e| e.value(&rho)).collect(),
        };
        Ok(EventModel {
            dim: self.dim,
            events: self.events,
            levels,
            field,
            field_jacobian: self.field_jacobian,
            rho,
            f_min: self.f_min,
            validity_radius: self.validity_radius,
            domain: self.domain,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_1d(f_minus: f64, f_plus: f64) -> EventModel {
        EventModel::builder(1)
            .event(EventFn::coordinate(1, 0))
            .field(move |b: &Corner, _x: &DVector<f64>| {
                DVector::from_element(1, if b.sign(0) < 0 { f_minus } else { f_plus })
            })
            .rho(DVector::zeros(1))
            .f_min(0.1)
            .build()
            .unwrap()
    }

    #[test]
    fn classify_follows_sign_convention() {
        let m = model_1d(1.0, 1.0);
        assert_eq!(m.classify(&DVector::from_element(1, -0.5)).signs(), &[-1]);
        // h = 0 maps to +1.
        assert_eq!(m.classify(&DVector::zeros(1)).signs(), &[1]);
    }

    #[test]
    fn classify_2d_componentwise() {
        let m = EventModel::builder(2)
            .event(EventFn::coordinate(2, 0))
            .event(EventFn::coordinate(2, 1))
            .field(|_: &Corner, _: &DVector<f64>| DVector::from_element(2, 1.0))
            .rho(DVector::zeros(2))
            .f_min(0.1)
            .build()
            .unwrap();
        let b = m.classify(&DVector::from_vec(vec![-0.1, 0.3]));
        assert_eq!(b.signs(), &[-1, 1]);
        assert!(m.classify(m.rho()).is_all_plus());
    }

    #[test]
    fn transversality_passes_for_aligned_field() {
        let m = model_1d(1.5, 0.5);
        let r = m.validate_transversality(0.5, 200, 7).unwrap();
        assert!(r.passed);
        assert!(r.minima.iter().all(|(_, _, v)| *v >= 0.5 - 1e-12));
    }

    #[test]
    fn transversality_violation_detected() {
        // Fields point toward the surface from both sides: the +1 region
        // field has Dh·F = −1 < f_min.
        let m = model_1d(1.0, -1.0);
        let err = m.validate_transversality(0.5, 200, 7).unwrap_err();
        match err {
            Error::TransversalityViolation { surface, value, .. } => {
                assert_eq!(surface, 0);
                assert!(value < 0.0);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn corner_order_is_lexicographic() {
        let corners = Corner::enumerate(2);
        let strings: Vec<String> = corners.iter().map(|c| c.bit_string()).collect();
        assert_eq!(strings, vec!["--", "-+", "+-", "++"]);
        assert!(Corner::all_minus(2) < Corner::all_plus(2));
        let mut sorted = corners.clone();
        sorted.sort();
        assert_eq!(sorted, corners);
    }

    #[test]
    fn finite_difference_gradient_fallback() {
        let e = EventFn::new(|x: &DVector<f64>| x[0] * x[0] + 2.0 * x[1]);
        let g = e.gradient(&DVector::from_vec(vec![0.7, -0.2]));
        assert!((g[0] - 1.4).abs() < 1e-8);
        assert!((g[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn reversed_model_flips_field_and_corners() {
        let m = model_1d(2.0, 1.0);
        let r = m.reversed();
        let x = DVector::from_element(1, 0.3);
        // x = 0.3 is on the + side of h; for the reversed model (−h) it is
        // on the − side, and the field there is −F_{+} = −1.
        let b = r.classify(&x);
        assert_eq!(b.signs(), &[-1]);
        assert_eq!(r.field(&b, &x)[0], -1.0);
        let rep = r.validate_transversality(0.5, 100, 3).unwrap();
        assert!(rep.passed);
    }
}
