//! Platform, predictor and policy descriptions shared by every other module.
//!
//! All durations are seconds stored as `f64`. Conversions to minutes, days or
//! years only happen at the edges (presets, CSV output, CLI).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_MINUTE: f64 = 60.0;
pub const SECONDS_PER_DAY: f64 = 86_400.0;
/// Julian year (365.25 days).
pub const SECONDS_PER_YEAR: f64 = 365.25 * SECONDS_PER_DAY;

/// Hardware and checkpoint cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Platform {
    /// Number of components N.
    pub n_procs: u64,
    /// Individual component MTBF, seconds.
    pub mu_ind: f64,
    /// Regular (periodic) checkpoint duration C.
    pub c_regular: f64,
    /// Proactive checkpoint duration Cp.
    pub c_proactive: f64,
    /// Downtime D after a fault.
    pub downtime: f64,
    /// Recovery R from the last checkpoint.
    pub recovery: f64,
}

impl Platform {
    pub fn new(
        n_procs: u64,
        mu_ind: f64,
        c_regular: f64,
        c_proactive: f64,
        downtime: f64,
        recovery: f64,
    ) -> Result<Self> {
        let platform = Platform {
            n_procs,
            mu_ind,
            c_regular,
            c_proactive,
            downtime,
            recovery,
        };
        platform.validate()?;
        Ok(platform)
    }

    /// A single-component platform whose MTBF is `mu`. Handy when the
    /// aggregated MTBF is the only thing that matters (analytic formulas).
    pub fn with_mtbf(
        mu: f64,
        c_regular: f64,
        c_proactive: f64,
        downtime: f64,
        recovery: f64,
    ) -> Result<Self> {
        Platform::new(1, mu, c_regular, c_proactive, downtime, recovery)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_procs == 0 {
            return Err(Error::invalid("n_procs", 0.0, "must be at least 1"));
        }
        positive("mu_ind", self.mu_ind)?;
        positive("c_regular", self.c_regular)?;
        positive("c_proactive", self.c_proactive)?;
        positive("downtime", self.downtime)?;
        positive("recovery", self.recovery)?;
        let mu = self.mtbf();
        if mu <= self.c_regular {
            return Err(Error::validity(
                "platform MTBF minus C",
                mu - self.c_regular,
            ));
        }
        Ok(())
    }

    /// Platform MTBF μ = μ_ind / N.
    pub fn mtbf(&self) -> f64 {
        self.mu_ind / self.n_procs as f64
    }
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, value, "must be finite and > 0"))
    }
}

fn fraction(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::invalid(name, value, "must lie in [0, 1]"))
    }
}

/// Platform MTBF from the individual MTBF and the component count.
///
/// ```
/// use ckptwin::model::{platform_mtbf, SECONDS_PER_YEAR};
/// let mu = platform_mtbf(125.0 * SECONDS_PER_YEAR, 1 << 19).unwrap();
/// assert!((mu / 60.0 - 125.4).abs() < 0.1);
/// ```
pub fn platform_mtbf(mu_ind: f64, n_procs: u64) -> Result<f64> {
    positive("mu_ind", mu_ind)?;
    if n_procs == 0 {
        return Err(Error::invalid("n_procs", 0.0, "must be at least 1"));
    }
    Ok(mu_ind / n_procs as f64)
}

/// Quality of a fault predictor and the length of its prediction windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    /// Fraction of predictions that correspond to actual faults, in (0, 1].
    pub precision: f64,
    /// Fraction of faults that are predicted, in [0, 1].
    pub recall: f64,
    /// Prediction window length I, seconds.
    pub window: f64,
}

impl Predictor {
    pub fn new(precision: f64, recall: f64, window: f64) -> Result<Self> {
        let predictor = Predictor {
            precision,
            recall,
            window,
        };
        predictor.validate()?;
        Ok(predictor)
    }

    /// A predictor that never predicts anything.
    pub fn none(window: f64) -> Self {
        Predictor {
            precision: 1.0,
            recall: 0.0,
            window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.precision > 0.0 && self.precision <= 1.0) {
            return Err(Error::invalid(
                "precision",
                self.precision,
                "must lie in (0, 1]",
            ));
        }
        fraction("recall", self.recall)?;
        positive("window", self.window)
    }
}

/// Event rates derived from μ and the predictor.
///
/// Rates rather than mean times, so that r = 0 and r = 1 stay finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    /// 1/μ_NP: unpredicted faults per second.
    pub rate_unpredicted: f64,
    /// 1/μ_P: predictions (true and false) per second.
    pub rate_predicted: f64,
    /// 1/μ_e: all events per second.
    pub rate_events: f64,
}

impl Rates {
    /// True predictions per second (r/μ).
    pub fn rate_true_predictions(&self, predictor: &Predictor) -> f64 {
        predictor.precision * self.rate_predicted
    }

    /// False predictions per second ((1-p)/μ_P).
    pub fn rate_false_predictions(&self, predictor: &Predictor) -> f64 {
        (1.0 - predictor.precision) * self.rate_predicted
    }
}

/// Rate relations between μ, μ_NP, μ_P and μ_e.
///
/// ```
/// use ckptwin::model::{derived_rates, Predictor};
/// let rates = derived_rates(100.0, &Predictor::new(0.82, 0.85, 300.0).unwrap()).unwrap();
/// assert!((rates.rate_unpredicted - 0.0015).abs() < 1e-15);
/// ```
pub fn derived_rates(mu: f64, predictor: &Predictor) -> Result<Rates> {
    positive("mu", mu)?;
    predictor.validate()?;
    let r = predictor.recall;
    let rate_unpredicted = (1.0 - r) / mu;
    let rate_predicted = r / (predictor.precision * mu);
    Ok(Rates {
        rate_unpredicted,
        rate_predicted,
        rate_events: rate_unpredicted + rate_predicted,
    })
}

/// Expected position E_I^(f) of a predicted fault inside its window.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ExpectedFaultOffset(f64);

impl ExpectedFaultOffset {
    pub fn new(value: f64, window: f64) -> Result<Self> {
        if !(0.0..=window).contains(&value) {
            return Err(Error::invalid(
                "expected fault offset",
                value,
                "must lie in [0, I]",
            ));
        }
        Ok(ExpectedFaultOffset(value))
    }

    /// The fault strikes, on average, in the middle of the window.
    pub fn midpoint(predictor: &Predictor) -> Self {
        ExpectedFaultOffset(predictor.window / 2.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Checkpointing strategies, in tie-breaking order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    /// Periodic, period from Daly's formula, predictions ignored.
    Daly,
    /// Periodic, refined first-order period, predictions ignored.
    #[serde(rename = "RFO")]
    Rfo,
    /// Proactive checkpoint before the window, then straight back to regular mode.
    Instant,
    /// Proactive checkpoint before the window, unprotected work inside it.
    NoCkptI,
    /// Proactive checkpoint before the window, periodic checkpoints inside it.
    WithCkptI,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Daly,
        Strategy::Rfo,
        Strategy::Instant,
        Strategy::NoCkptI,
        Strategy::WithCkptI,
    ];

    /// Whether the strategy ever acts on predictions.
    pub fn uses_predictions(self) -> bool {
        matches!(
            self,
            Strategy::Instant | Strategy::NoCkptI | Strategy::WithCkptI
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Daly => "Daly",
            Strategy::Rfo => "RFO",
            Strategy::Instant => "Instant",
            Strategy::NoCkptI => "NoCkptI",
            Strategy::WithCkptI => "WithCkptI",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "daly" => Ok(Strategy::Daly),
            "rfo" => Ok(Strategy::Rfo),
            "instant" => Ok(Strategy::Instant),
            "nockpti" | "nockpt" => Ok(Strategy::NoCkptI),
            "withckpti" | "withckpt" => Ok(Strategy::WithCkptI),
            _ => Err(Error::Config(format!("unknown strategy `{s}`"))),
        }
    }
}

/// A strategy together with its periods and trust probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub strategy: Strategy,
    /// Regular-mode period T_R.
    pub t_regular: f64,
    /// Proactive-mode period T_P; only read by `WithCkptI`.
    pub t_proactive: f64,
    /// Probability q of trusting a prediction.
    pub trust_prob: f64,
}

impl PolicyConfig {
    /// A prediction-ignoring periodic policy.
    pub fn periodic(strategy: Strategy, t_regular: f64) -> Self {
        PolicyConfig {
            strategy,
            t_regular,
            t_proactive: 0.0,
            trust_prob: 0.0,
        }
    }

    /// A prediction-aware policy that always trusts the predictor.
    pub fn trusting(strategy: Strategy, t_regular: f64, t_proactive: f64) -> Self {
        PolicyConfig {
            strategy,
            t_regular,
            t_proactive,
            trust_prob: 1.0,
        }
    }

    pub fn validate(&self, platform: &Platform, predictor: &Predictor) -> Result<()> {
        if !(self.t_regular > platform.c_regular) || !self.t_regular.is_finite() {
            return Err(Error::invalid(
                "t_regular",
                self.t_regular,
                "must be finite and exceed C",
            ));
        }
        fraction("trust_prob", self.trust_prob)?;
        match self.strategy {
            Strategy::Daly | Strategy::Rfo if self.trust_prob != 0.0 => Err(Error::invalid(
                "trust_prob",
                self.trust_prob,
                "periodic policies never trust predictions",
            )),
            Strategy::WithCkptI => {
                if predictor.window < platform.c_proactive {
                    return Err(Error::StrategyInapplicable {
                        strategy: Strategy::WithCkptI,
                        reason: "prediction window shorter than a proactive checkpoint",
                    });
                }
                if !(platform.c_proactive..=predictor.window).contains(&self.t_proactive) {
                    return Err(Error::invalid(
                        "t_proactive",
                        self.t_proactive,
                        "must lie in [Cp, I]",
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::Strategy;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mtbf_of_reference_platforms() {
        let mu_ind = 125.0 * SECONDS_PER_YEAR;
        // 4,010 minutes is the 2^14-component platform.
        let mu = platform_mtbf(mu_ind, 1 << 14).unwrap() / SECONDS_PER_MINUTE;
        assert!((mu - 4010.0).abs() / 4010.0 < 1e-3, "{mu}");
        let mu = platform_mtbf(mu_ind, 1 << 16).unwrap() / SECONDS_PER_MINUTE;
        assert!((mu - 1003.2).abs() < 0.1, "{mu}");
        let mu = platform_mtbf(mu_ind, 1 << 19).unwrap() / SECONDS_PER_MINUTE;
        assert!((mu - 125.0).abs() / 125.0 < 5e-3, "{mu}");
        assert_eq!(platform_mtbf(1234.5, 1).unwrap(), 1234.5);
    }

    #[test]
    fn mtbf_rejects_bad_input() {
        assert!(platform_mtbf(0.0, 4).is_err());
        assert!(platform_mtbf(-1.0, 4).is_err());
        assert!(platform_mtbf(10.0, 0).is_err());
    }

    #[test]
    fn rates_hand_evaluation() {
        let p = Predictor::new(0.82, 0.85, 300.0).unwrap();
        let rates = derived_rates(100.0, &p).unwrap();
        assert!((rates.rate_unpredicted - 0.0015).abs() < 1e-15);
        assert!((rates.rate_predicted - 0.010_365_853_658_536_585).abs() < 1e-15);
        assert_eq!(
            rates.rate_events,
            rates.rate_unpredicted + rates.rate_predicted
        );
    }

    #[test]
    fn rates_degenerate_predictors() {
        let rates = derived_rates(50.0, &Predictor::none(10.0)).unwrap();
        assert_eq!(rates.rate_predicted, 0.0);
        assert_eq!(rates.rate_unpredicted, 1.0 / 50.0);

        let perfect = Predictor::new(1.0, 1.0, 10.0).unwrap();
        let rates = derived_rates(50.0, &perfect).unwrap();
        assert_eq!(rates.rate_unpredicted, 0.0);
        assert_eq!(rates.rate_predicted, 1.0 / 50.0);
    }

    #[test]
    fn zero_precision_is_rejected() {
        let p = Predictor {
            precision: 0.0,
            recall: 0.5,
            window: 10.0,
        };
        assert!(matches!(
            derived_rates(10.0, &p),
            Err(Error::InvalidParameter {
                name: "precision",
                ..
            })
        ));
    }

    #[test]
    fn platform_requires_mtbf_above_checkpoint() {
        assert!(Platform::with_mtbf(500.0, 600.0, 600.0, 60.0, 600.0).is_err());
        assert!(Platform::with_mtbf(601.0, 600.0, 600.0, 60.0, 600.0).is_ok());
        assert!(Platform::new(0, 1e9, 600.0, 600.0, 60.0, 600.0).is_err());
    }

    #[test]
    fn offset_bounds() {
        assert!(ExpectedFaultOffset::new(-1.0, 10.0).is_err());
        assert!(ExpectedFaultOffset::new(11.0, 10.0).is_err());
        let p = Predictor::new(0.5, 0.5, 10.0).unwrap();
        assert_eq!(ExpectedFaultOffset::midpoint(&p).value(), 5.0);
    }

    #[test]
    fn policy_validation() {
        let platform = Platform::with_mtbf(1e5, 600.0, 600.0, 60.0, 600.0).unwrap();
        let short = Predictor::new(0.8, 0.8, 300.0).unwrap();
        let p = PolicyConfig::trusting(Strategy::WithCkptI, 5000.0, 600.0);
        assert!(matches!(
            p.validate(&platform, &short),
            Err(Error::StrategyInapplicable { .. })
        ));
        let mut daly = PolicyConfig::periodic(Strategy::Daly, 5000.0);
        assert!(daly.validate(&platform, &short).is_ok());
        daly.trust_prob = 1.0;
        assert!(daly.validate(&platform, &short).is_err());
        assert!(PolicyConfig::periodic(Strategy::Rfo, 600.0)
            .validate(&platform, &short)
            .is_err());
    }

    #[test]
    fn strategy_order_and_parse() {
        let mut all = Strategy::ALL;
        all.reverse();
        all.sort();
        assert_eq!(all, Strategy::ALL);
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("foo".parse::<Strategy>().is_err());
    }

    proptest! {
        #[test]
        fn event_rate_is_at_least_fault_rate(
            mu in 1.0f64..1e7,
            p in 0.01f64..=1.0,
            r in 0.0f64..=1.0,
        ) {
            let pred = Predictor::new(p, r, 100.0).unwrap();
            let rates = derived_rates(mu, &pred).unwrap();
            let scaled = rates.rate_events * mu;
            let expected = (1.0 - r) + r / p;
            prop_assert!((scaled - expected).abs() <= 1e-12 * expected);
            prop_assert!(scaled >= 1.0 - 1e-12);
            if p < 0.999 && r > 1e-6 {
                prop_assert!(scaled > 1.0);
            }
        }

        #[test]
        fn recall_round_trips(mu in 1.0f64..1e7, p in 0.01f64..=1.0, r in 0.0f64..=1.0) {
            let pred = Predictor::new(p, r, 100.0).unwrap();
            let rates = derived_rates(mu, &pred).unwrap();
            let back = rates.rate_predicted * p * mu;
            prop_assert!((back - r).abs() <= 1e-12 * r.max(f64::MIN_POSITIVE));
        }
    }
}
