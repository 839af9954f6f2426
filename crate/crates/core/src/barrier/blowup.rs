use serde::{Deserialize, Serialize};

use super::BarrierError;

/// One prescribed-time window `[t0, t0 + horizon)`.
///
/// `clamp` is the fraction of the horizon cut off before the singularity:
/// past `t0 + (1 - clamp) * horizon` the blow-up function is held constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowParams {
    pub t0: f64,
    pub horizon: f64,
    pub alpha: f64,
    pub clamp: f64,
}

impl WindowParams {
    pub fn new(t0: f64, horizon: f64, alpha: f64, clamp: f64) -> Result<Self, BarrierError> {
        let w = Self {
            t0,
            horizon,
            alpha,
            clamp,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), BarrierError> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(BarrierError::InvalidWindow(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(BarrierError::InvalidWindow(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.clamp > 0.0 && self.clamp < 1.0) {
            return Err(BarrierError::InvalidWindow(format!(
                "clamp must lie in (0, 1), got {}",
                self.clamp
            )));
        }
        if !self.t0.is_finite() {
            return Err(BarrierError::InvalidWindow("t0 must be finite".into()));
        }
        Ok(())
    }

    pub fn end(&self) -> f64 {
        self.t0 + self.horizon
    }

    /// Elapsed time after which the blow-up function is frozen.
    pub fn clamp_elapsed(&self) -> f64 {
        (1.0 - self.clamp) * self.horizon
    }

    fn elapsed(&self, t: f64) -> Result<f64, BarrierError> {
        if t < self.t0 {
            return Err(BarrierError::OutOfWindow { t, t0: self.t0 });
        }
        Ok(t - self.t0)
    }

    fn raw_phi(&self, s: f64) -> f64 {
        let big_t = self.horizon;
        let q = s * s - s * big_t;
        (big_t * big_t + self.alpha * q * q) / ((big_t - s) * (big_t - s))
    }

    /// Blow-up function
    /// `φ(t) = (T² + α((t-t0)² - (t-t0)T)²) / (T + t0 - t)²`, clamped.
    pub fn phi(&self, t: f64) -> Result<f64, BarrierError> {
        let s = self.elapsed(t)?.min(self.clamp_elapsed());
        Ok(self.raw_phi(s))
    }

    /// Time derivative of [`phi`](Self::phi); zero on the clamped tail.
    ///
    /// Uses the identity `φ = T²/(T-s)² + α s²` with `s = t - t0`.
    pub fn phi_dot(&self, t: f64) -> Result<f64, BarrierError> {
        let s = self.elapsed(t)?;
        if s > self.clamp_elapsed() {
            return Ok(0.0);
        }
        let big_t = self.horizon;
        let r = big_t - s;
        Ok(2.0 * big_t * big_t / (r * r * r) + 2.0 * self.alpha * s)
    }

    /// `∫_{t0}^{t} φ(s) ds`, including the clamped tail.
    pub fn phi_integral(&self, t: f64) -> Result<f64, BarrierError> {
        let s = self.elapsed(t)?;
        let sc = self.clamp_elapsed();
        let big_t = self.horizon;
        let head = |s: f64| big_t * big_t / (big_t - s) - big_t + self.alpha * s * s * s / 3.0;
        if s <= sc {
            Ok(head(s))
        } else {
            Ok(head(sc) + self.raw_phi(sc) * (s - sc))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(t0: f64, horizon: f64, alpha: f64) -> WindowParams {
        WindowParams::new(t0, horizon, alpha, 1e-3).unwrap()
    }

    #[test]
    fn starts_at_one() {
        for (t0, big_t, a) in [(0.0, 1.0, 0.0), (1.0, 2.0, 400.0), (-3.3, 0.7, 12.5)] {
            assert_eq!(w(t0, big_t, a).phi(t0).unwrap(), 1.0);
        }
    }

    #[test]
    fn hand_values() {
        assert!((w(0.0, 1.0, 0.0).phi(0.5).unwrap() - 4.0).abs() < 1e-12);
        assert!((w(0.0, 1.0, 400.0).phi(0.5).unwrap() - 104.0).abs() < 1e-12);
        assert!((w(0.0, 1.0, 0.0).phi_dot(0.5).unwrap() - 16.0).abs() < 1e-12);
        assert!((w(0.0, 1.0, 0.0).phi_dot(0.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn before_window_is_an_error() {
        assert!(matches!(
            w(1.0, 1.0, 0.0).phi(0.5),
            Err(BarrierError::OutOfWindow { .. })
        ));
    }

    #[test]
    fn clamped_tail_is_constant() {
        let win = w(0.0, 1.0, 400.0);
        let edge = win.phi(0.999).unwrap();
        assert_eq!(win.phi(0.9995).unwrap(), edge);
        assert_eq!(win.phi(5.0).unwrap(), edge);
        assert_eq!(win.phi_dot(2.0).unwrap(), 0.0);
    }

    #[test]
    fn integral_matches_quadrature() {
        let win = WindowParams::new(0.5, 2.0, 400.0, 0.02).unwrap();
        for t in [0.5, 0.9, 1.7, 2.45, 2.49, 3.0] {
            // composite Simpson on a fine grid, split at the clamp point
            let mut total = 0.0;
            let knots = [win.t0, (win.t0 + win.clamp_elapsed()).min(t), t];
            for seg in knots.windows(2) {
                let (a, b) = (seg[0], seg[1]);
                if b <= a {
                    continue;
                }
                let n = 20_000;
                let h = (b - a) / n as f64;
                let mut acc = win.phi(a).unwrap() + win.phi(b).unwrap();
                for i in 1..n {
                    let c = if i % 2 == 1 { 4.0 } else { 2.0 };
                    acc += c * win.phi(a + i as f64 * h).unwrap();
                }
                total += acc * h / 3.0;
            }
            let got = win.phi_integral(t).unwrap();
            assert!(
                (got - total).abs() < 1e-6 * total.max(1.0),
                "t={t}: {got} vs {total}"
            );
        }
    }
}
