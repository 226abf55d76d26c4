//! Affine normalization between a physical interval and the network's working interval.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default working interval for network inputs and targets. Sigmoid outputs
/// never reach 0 or 1, so targets live strictly inside.
pub const DEFAULT_TARGET: Interval = Interval {
    lower: 0.15,
    upper: 0.85,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Interval { lower, upper }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    fn check(&self) -> Result<()> {
        if self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper {
            Ok(())
        } else {
            Err(Error::InvalidRule {
                lower: self.lower,
                upper: self.upper,
            })
        }
    }
}

/// Affine map `source -> target`. Values outside the source interval map
/// outside the target interval; nothing is clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRule")]
pub struct NormalizationRule {
    source: Interval,
    target: Interval,
}

#[derive(Deserialize)]
struct RawRule {
    source: Interval,
    target: Interval,
}

impl TryFrom<RawRule> for NormalizationRule {
    type Error = Error;

    fn try_from(raw: RawRule) -> Result<Self> {
        NormalizationRule::new(raw.source, raw.target)
    }
}

impl NormalizationRule {
    pub fn new(source: Interval, target: Interval) -> Result<Self> {
        source.check()?;
        target.check()?;
        Ok(NormalizationRule { source, target })
    }

    /// Rule onto the default ⟨0.15, 0.85⟩ working interval.
    pub fn onto_default(lower: f64, upper: f64) -> Result<Self> {
        Self::new(Interval::new(lower, upper), DEFAULT_TARGET)
    }

    pub fn source(&self) -> Interval {
        self.source
    }

    pub fn target(&self) -> Interval {
        self.target
    }

    pub fn normalize(&self, value: f64) -> f64 {
        self.target.lower
            + (value - self.source.lower) * (self.target.width() / self.source.width())
    }

    pub fn denormalize(&self, value: f64) -> f64 {
        self.source.lower
            + (value - self.target.lower) * (self.source.width() / self.target.width())
    }
}

pub fn normalize(value: f64, rule: &NormalizationRule) -> f64 {
    rule.normalize(value)
}

pub fn denormalize(value: f64, rule: &NormalizationRule) -> f64 {
    rule.denormalize(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn c20() -> NormalizationRule {
        NormalizationRule::onto_default(0.2, 5.0).unwrap()
    }

    #[test]
    fn endpoints_and_midpoint() {
        let rule = c20();
        assert_eq!(rule.normalize(0.2), 0.15);
        assert!((rule.normalize(5.0) - 0.85).abs() < 1e-15);
        assert!((rule.normalize(2.6) - 0.5).abs() < 1e-15);
        assert_eq!(rule.denormalize(0.15), 0.2);
        assert!((rule.denormalize(0.5) - 2.6).abs() < 1e-15);
    }

    #[test]
    fn no_clamping_outside_source() {
        // 0.85 + 0.7 * (7.4 - 5.0) / 4.8 = 1.2
        let v = c20().normalize(7.4);
        assert!((v - 1.2).abs() < 1e-14, "{v}");
    }

    #[test]
    fn degenerate_rules_rejected() {
        assert!(matches!(
            NormalizationRule::onto_default(1.0, 1.0),
            Err(Error::InvalidRule { .. })
        ));
        assert!(NormalizationRule::new(Interval::new(0.0, 1.0), Interval::new(0.5, 0.5)).is_err());
        assert!(NormalizationRule::onto_default(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn round_trip_thousand_values() {
        let rule = c20();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let x: f64 = rng.random_range(-10.0..10.0);
            let back = rule.denormalize(rule.normalize(x));
            worst = worst.max((back - x).abs() / x.abs().max(1.0));
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn serde_rejects_degenerate() {
        let ok = r#"{"source":{"lower":0.0,"upper":2.0},"target":{"lower":0.15,"upper":0.85}}"#;
        assert!(serde_json::from_str::<NormalizationRule>(ok).is_ok());
        let bad = r#"{"source":{"lower":2.0,"upper":2.0},"target":{"lower":0.15,"upper":0.85}}"#;
        assert!(serde_json::from_str::<NormalizationRule>(bad).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_any_rule(lo in -1e3f64..1e3, w in 1e-3f64..1e3, x in -1e4f64..1e4) {
            let rule = NormalizationRule::onto_default(lo, lo + w).unwrap();
            let back = rule.denormalize(rule.normalize(x));
            let scale = x.abs().max(lo.abs()).max(w);
            prop_assert!((back - x).abs() <= 1e-12 * scale);
        }
    }
}
