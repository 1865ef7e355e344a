//! Per-epoch curriculum rates for prediction and neighbor replacement.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    Linear,
    /// Half a sine period, slow at both ends.
    SCurve,
    /// Nearly zero until the second half of training.
    ExpIncrease,
    /// The end rate from the first epoch on.
    Static,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 4] = [
        ScheduleKind::Linear,
        ScheduleKind::SCurve,
        ScheduleKind::ExpIncrease,
        ScheduleKind::Static,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Linear => "linear",
            ScheduleKind::SCurve => "scurve",
            ScheduleKind::ExpIncrease => "exp_increase",
            ScheduleKind::Static => "static",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ScheduleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown schedule kind {s:?} (expected linear, scurve, exp_increase or static)"))
    }
}

/// Fraction of training completed, `epoch / total_epochs`.
pub fn normalized_progress(epoch: usize, total_epochs: usize) -> Result<f64> {
    if total_epochs == 0 || epoch > total_epochs {
        return Err(Error::Range(format!("epoch {epoch} outside [0, {total_epochs}]")));
    }
    Ok(epoch as f64 / total_epochs as f64)
}

/// Curve value at progress `x`, in `[0, 1]`. Every curve ends at 1.
pub fn curve(kind: ScheduleKind, x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    let y = match kind {
        ScheduleKind::Linear => x,
        ScheduleKind::SCurve => 0.5 * (1.0 + (PI * x - PI / 2.0).sin()),
        ScheduleKind::ExpIncrease => 2.0 / ((10.0 * (1.0 - x)).exp() + 1.0),
        ScheduleKind::Static => 1.0,
    };
    y.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub start: f64,
    pub end: f64,
    pub total_epochs: usize,
}

impl ScheduleSpec {
    pub fn new(kind: ScheduleKind, start: f64, end: f64, total_epochs: usize) -> Result<Self> {
        let spec = ScheduleSpec {
            kind,
            start,
            end,
            total_epochs,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A schedule that never replaces anything.
    pub fn off(total_epochs: usize) -> Self {
        ScheduleSpec {
            kind: ScheduleKind::Static,
            start: 0.0,
            end: 0.0,
            total_epochs: total_epochs.max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.start) {
            return Err(Error::Range(format!("start rate {} not in [0, 1]", self.start)));
        }
        if !(0.0..=1.0).contains(&self.end) {
            return Err(Error::Range(format!("end rate {} not in [0, 1]", self.end)));
        }
        if self.start > self.end {
            return Err(Error::Range(format!(
                "start rate {} exceeds end rate {}",
                self.start, self.end
            )));
        }
        if self.total_epochs == 0 {
            return Err(Error::Range("total_epochs must be at least 1".into()));
        }
        Ok(())
    }

    /// Rate at `epoch`, clamped into `[0, total_epochs]`.
    pub fn rate(&self, epoch: usize) -> f64 {
        if self.kind == ScheduleKind::Static {
            return self.end;
        }
        let x = normalized_progress(epoch.min(self.total_epochs), self.total_epochs).unwrap_or(1.0);
        let c = curve(self.kind, x);
        if c == 1.0 {
            // start + (end - start) can round away from end.
            return self.end;
        }
        (self.start + (self.end - self.start) * c).clamp(self.start, self.end)
    }

    /// `(epoch, rate)` for every epoch in `0..=total_epochs`.
    pub fn table(&self) -> Vec<(usize, f64)> {
        (0..=self.total_epochs).map(|e| (e, self.rate(e))).collect()
    }
}

pub fn rate(spec: &ScheduleSpec, epoch: usize) -> f64 {
    spec.rate(epoch)
}

/// Prediction-replacement rate `epsilon` and neighbor-replacement rate
/// `gamma` for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RatePair {
    pub epsilon: f64,
    pub gamma: f64,
}

impl RatePair {
    pub fn at(ss: &ScheduleSpec, nnrs: &ScheduleSpec, epoch: usize) -> Self {
        RatePair {
            epsilon: ss.rate(epoch),
            gamma: nnrs.rate(epoch),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn progress() {
        assert_eq!(normalized_progress(0, 40).unwrap(), 0.0);
        assert_eq!(normalized_progress(40, 40).unwrap(), 1.0);
        assert_eq!(normalized_progress(20, 40).unwrap(), 0.5);
        assert!(normalized_progress(41, 40).is_err());
        assert!(normalized_progress(0, 0).is_err());
    }

    #[test]
    fn curve_points() {
        assert!((curve(ScheduleKind::SCurve, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(curve(ScheduleKind::ExpIncrease, 1.0), 1.0);
        assert!((curve(ScheduleKind::ExpIncrease, 0.0) - 9.08e-5).abs() < 1e-6);
        for kind in ScheduleKind::ALL {
            assert_eq!(curve(kind, 1.0), 1.0);
        }
        assert_eq!(curve(ScheduleKind::Linear, 0.0), 0.0);
        assert_eq!(curve(ScheduleKind::SCurve, 0.0), 0.0);
        assert_eq!(curve(ScheduleKind::Static, 0.0), 1.0);
    }

    #[test]
    fn rate_examples() {
        let lin = ScheduleSpec::new(ScheduleKind::Linear, 0.0, 0.5, 40).unwrap();
        assert_eq!(lin.rate(20), 0.25);
        let st = ScheduleSpec::new(ScheduleKind::Static, 0.0, 0.2, 40).unwrap();
        assert!((0..=40).all(|e| st.rate(e) == 0.2));
        let exp = ScheduleSpec::new(ScheduleKind::ExpIncrease, 0.0, 0.5, 40).unwrap();
        assert_eq!(exp.rate(40), 0.5);
    }

    #[test]
    fn linear_table() {
        let lin = ScheduleSpec::new(ScheduleKind::Linear, 0.0, 1.0, 4).unwrap();
        let rates: Vec<f64> = lin.table().into_iter().map(|(_, r)| r).collect();
        assert_eq!(rates, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn invalid_specs() {
        assert!(ScheduleSpec::new(ScheduleKind::Linear, 0.6, 0.5, 10).is_err());
        assert!(ScheduleSpec::new(ScheduleKind::Linear, 0.0, 1.5, 10).is_err());
        assert!(ScheduleSpec::new(ScheduleKind::Linear, 0.0, 0.5, 0).is_err());
        assert!("sigmoid".parse::<ScheduleKind>().is_err());
        assert_eq!(
            "exp_increase".parse::<ScheduleKind>().unwrap(),
            ScheduleKind::ExpIncrease
        );
    }
}
