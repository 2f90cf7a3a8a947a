//! Adaptive Dormand–Prince 5(4) stepping with continuous (dense) output.
//!
//! The stepper integrates an autonomous right-hand side in an internal
//! forward clock; callers reverse the field for backward time.

use nalgebra::DVector;

use crate::error::{Error, Result};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Error weights: b5 - b4 (embedded 4th order).
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense-output weights (Hairer's DOPRI5 continuous extension).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 10.0;
const MAX_REJECTS: usize = 60;

/// One accepted step with its quartic interpolant.
#[derive(Clone, Debug)]
pub struct DenseStep {
    pub t0: f64,
    pub t1: f64,
    r1: DVector<f64>,
    r2: DVector<f64>,
    r3: DVector<f64>,
    r4: DVector<f64>,
    r5: DVector<f64>,
}

impl DenseStep {
    /// Evaluate the interpolant at `t ∈ [t0, t1]`.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let h = self.t1 - self.t0;
        let theta = if h == 0.0 { 0.0 } else { (t - self.t0) / h };
        let theta1 = 1.0 - theta;
        &self.r1
            + theta * (&self.r2 + theta1 * (&self.r3 + theta * (&self.r4 + theta1 * &self.r5)))
    }
}

/// Adaptive stepper bound to one right-hand side.
pub struct Stepper<'a> {
    f: &'a dyn Fn(&DVector<f64>) -> DVector<f64>,
    rel_tol: f64,
    abs_tol: f64,
    max_step: f64,
    pub t: f64,
    pub y: DVector<f64>,
    k1: DVector<f64>,
    h: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(
        f: &'a dyn Fn(&DVector<f64>) -> DVector<f64>,
        t0: f64,
        y0: DVector<f64>,
        rel_tol: f64,
        abs_tol: f64,
        max_step: f64,
    ) -> Self {
        let k1 = f(&y0);
        let scale = (abs_tol + rel_tol * y0.norm()).max(1e-300);
        let h0 = (0.01 * scale.powf(0.2)).min(max_step).max(1e-10);
        Stepper {
            f,
            rel_tol,
            abs_tol,
            max_step,
            t: t0,
            y: y0,
            k1,
            h: h0,
        }
    }

    /// Advance by one accepted step, capped so `t` never exceeds `t_end`.
    pub fn advance(&mut self, t_end: f64) -> Result<DenseStep> {
        let n = self.y.len();
        let mut rejects = 0usize;
        loop {
            let mut h = self.h.min(self.max_step);
            let remaining = t_end - self.t;
            debug_assert!(remaining > 0.0);
            let clipped = h >= remaining;
            if clipped {
                h = remaining;
            }

            let k1 = self.k1.clone();
            let y2 = &self.y + h * A21 * &k1;
            let k2 = (self.f)(&y2);
            let y3 = &self.y + h * (A31 * &k1 + A32 * &k2);
            let k3 = (self.f)(&y3);
            let y4 = &self.y + h * (A41 * &k1 + A42 * &k2 + A43 * &k3);
            let k4 = (self.f)(&y4);
            let y5 = &self.y + h * (A51 * &k1 + A52 * &k2 + A53 * &k3 + A54 * &k4);
            let k5 = (self.f)(&y5);
            let y6 = &self.y + h * (A61 * &k1 + A62 * &k2 + A63 * &k3 + A64 * &k4 + A65 * &k5);
            let k6 = (self.f)(&y6);
            let y_new = &self.y + h * (B1 * &k1 + B3 * &k3 + B4 * &k4 + B5 * &k5 + B6 * &k6);
            let k7 = (self.f)(&y_new);

            let mut err_sq = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                        + E7 * k7[i]);
                let sc = self.abs_tol + self.rel_tol * self.y[i].abs().max(y_new[i].abs());
                err_sq += (e / sc) * (e / sc);
            }
            let err = (err_sq / n as f64).sqrt();

            if err <= 1.0 {
                let ydiff = &y_new - &self.y;
                let bspl = h * &k1 - &ydiff;
                let r4 = &ydiff - h * &k7 - &bspl;
                let r5 = h * (D1 * &k1 + D3 * &k3 + D4 * &k4 + D5 * &k5 + D6 * &k6 + D7 * &k7);
                let step = DenseStep {
                    t0: self.t,
                    t1: self.t + h,
                    r1: self.y.clone(),
                    r2: ydiff,
                    r3: bspl,
                    r4,
                    r5,
                };
                self.t += h;
                self.y = y_new;
                self.k1 = k7;
                let scale = if err == 0.0 {
                    MAX_SCALE
                } else {
                    (SAFETY * err.powf(-0.2)).clamp(MIN_SCALE, MAX_SCALE)
                };
                // Do not let a span-clipped step shrink the working step size.
                if !clipped {
                    self.h = (h * scale).min(self.max_step);
                } else {
                    self.h = (self.h * scale).min(self.max_step);
                }
                return Ok(step);
            }

            rejects += 1;
            if rejects > MAX_REJECTS {
                return Err(Error::InvalidParameter(format!(
                    "step size control failed near t = {} (h = {:.3e}, err = {:.3e})",
                    self.t, h, err
                )));
            }
            let scale = (SAFETY * err.powf(-0.2)).clamp(MIN_SCALE, 1.0);
            self.h = h * scale;
            if self.h < 1e-14 * (1.0 + self.t.abs()) {
                return Err(Error::InvalidParameter(format!(
                    "step size underflow near t = {}",
                    self.t
                )));
            }
        }
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_exponential_decay() {
        let f = |y: &DVector<f64>| -y.clone();
        let mut s = Stepper::new(&f, 0.0, DVector::from_element(1, 1.0), 1e-10, 1e-12, 0.5);
        while s.t < 2.0 {
            s.advance(2.0).unwrap();
        }
        assert!((s.y[0] - (-2.0_f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn dense_output_matches_interior_solution() {
        let f = |y: &DVector<f64>| DVector::from_vec(vec![y[1], -y[0]]);
        let mut s = Stepper::new(&f, 0.0, DVector::from_vec(vec![1.0, 0.0]), 1e-12, 1e-14, 0.2);
        let mut worst: f64 = 0.0;
        while s.t < 3.0 {
            let step = s.advance(3.0).unwrap();
            for k in 0..5 {
                let t = step.t0 + (step.t1 - step.t0) * (k as f64) / 4.0;
                let y = step.eval(t);
                worst = worst.max((y[0] - t.cos()).abs()).max((y[1] + t.sin()).abs());
            }
        }
        assert!(worst < 1e-9, "dense output error {}", worst);
    }

    #[test]
    fn exact_for_piecewise_constant_rhs() {
        let f = |_: &DVector<f64>| DVector::from_vec(vec![1.5, -0.5]);
        let mut s = Stepper::new(&f, 0.0, DVector::zeros(2), 1e-9, 1e-12, 10.0);
        while s.t < 4.0 {
            s.advance(4.0).unwrap();
        }
        assert!((s.y[0] - 6.0).abs() < 1e-13);
        assert!((s.y[1] + 2.0).abs() < 1e-13);
    }
}
