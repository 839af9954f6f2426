use serde::{Deserialize, Serialize};

/// Rules for picking chain gains at the start of a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainPolicy {
    /// Relative slack above a positive lower bound.
    pub margin: f64,
    /// Gain used when the lower bound is zero or `h_i(t0) = 0`.
    pub fallback: f64,
    /// Last gain `c_n`.
    pub final_gain: f64,
    /// Upper limit on the selected `c_1..c_{n-1}`; `None` disables it.
    #[serde(default)]
    pub max_gain: Option<f64>,
}

impl Default for GainPolicy {
    fn default() -> Self {
        Self {
            margin: 0.1,
            fallback: 1.0,
            final_gain: 1.0,
            max_gain: None,
        }
    }
}

/// Lower bound `max{0, -ḣ_i(t0) / h_i(t0)}` on `c_i`; `None` when
/// `h_i(t0) = 0`.
pub fn gain_lower_bound(h: f64, h_dot: f64) -> Option<f64> {
    if h == 0.0 {
        None
    } else {
        Some((-h_dot / h).max(0.0))
    }
}

/// Gains `c_1..c_n` from the chain values `h_i(t0)` and `ḣ_i(t0)`,
/// `i = 1..n-1`.
pub fn select_gains(h_t0: &[f64], h_dot_t0: &[f64], policy: &GainPolicy) -> Vec<f64> {
    assert_eq!(h_t0.len(), h_dot_t0.len(), "one derivative per chain value");
    let mut gains: Vec<f64> = h_t0
        .iter()
        .zip(h_dot_t0)
        .map(|(&h, &hd)| {
            let c = match gain_lower_bound(h, hd) {
                Some(bound) if bound > 0.0 => bound * (1.0 + policy.margin),
                _ => policy.fallback,
            };
            match policy.max_gain {
                Some(cap) => c.min(cap),
                None => c,
            }
        })
        .collect();
    gains.push(policy.final_gain);
    gains
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy() -> GainPolicy {
        GainPolicy {
            final_gain: 5.0,
            ..GainPolicy::default()
        }
    }

    #[test]
    fn decreasing_safe_barrier_gets_margin() {
        let g = select_gains(&[1.0], &[-2.0], &policy());
        assert!((g[0] - 2.2).abs() < 1e-12);
        assert_eq!(g[1], 5.0);
    }

    #[test]
    fn increasing_barrier_uses_fallback() {
        assert_eq!(select_gains(&[1.0], &[3.0], &policy())[0], 1.0);
    }

    #[test]
    fn unsafe_and_decreasing_uses_fallback() {
        assert_eq!(select_gains(&[-1.0], &[-2.0], &policy())[0], 1.0);
    }

    #[test]
    fn zero_barrier_uses_fallback() {
        assert_eq!(select_gains(&[0.0], &[-4.0], &policy())[0], 1.0);
        assert_eq!(gain_lower_bound(0.0, 1.0), None);
    }

    #[test]
    fn cap_limits_gain() {
        let p = GainPolicy {
            max_gain: Some(3.0),
            ..policy()
        };
        assert_eq!(select_gains(&[0.01], &[-1.0], &p)[0], 3.0);
    }
}
