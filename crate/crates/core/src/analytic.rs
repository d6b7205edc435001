//! Closed-form waste model.
//!
//! Every strategy is described by the same first-order accounting: the
//! execution is cut into intervals of four types (fault-free regular
//! periods, unpredicted faults, ignored-or-false predictions, true
//! predictions), each with a duration and an amount of useful work. Solving
//! the resulting two linear relations gives `T_final / T_base`.
//!
//! Two independent routes are provided:
//!
//! * the rewritten closed forms (`waste_nopred`, `waste_withckpt`,
//!   `waste_nockpt`, `waste_instant`), valid for q ∈ {0, 1}, together with
//!   their exact minimisers (`tp_extr`, `tr_extr_window`, `tr_extr_instant`);
//! * [`general_q_waste`], which works directly from the per-interval time and
//!   work columns for any trust probability q.
//!
//! The two must agree at q ∈ {0, 1}; the test-suite checks that they do.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExpectedFaultOffset, Platform, PolicyConfig, Predictor, Strategy};

/// Relative tolerance used when comparing strategy wastes for ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Waste fraction and slowdown of one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WasteBreakdown {
    /// (T_final − T_base) / T_final.
    pub waste: f64,
    /// T_final / T_base.
    pub t_final_over_t_base: f64,
}

impl WasteBreakdown {
    /// Build from the efficiency `T_base / T_final`; rejects anything that
    /// does not correspond to a waste in (0, 1).
    pub fn from_efficiency(efficiency: f64) -> Result<Self> {
        let waste = 1.0 - efficiency;
        if !(waste > 0.0 && waste < 1.0) || !efficiency.is_finite() {
            return Err(Error::validity("waste", waste));
        }
        Ok(WasteBreakdown {
            waste,
            t_final_over_t_base: 1.0 / efficiency,
        })
    }
}

/// A formula value that may have been pushed back into its admissible range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Clamped {
    /// The value to use.
    pub value: f64,
    /// The unclamped formula value.
    pub raw: f64,
    pub clamped: bool,
}

/// Young's period `sqrt(2 μ C) + C`.
///
/// ```
/// let t = ckptwin::analytic::young_period(240_600.0, 600.0);
/// assert!((t - 17_591.76).abs() < 0.01);
/// ```
pub fn young_period(mu: f64, c: f64) -> f64 {
    (2.0 * mu * c).sqrt() + c
}

/// Daly's period `sqrt(2 (μ + R) C) + C`.
pub fn daly_period(mu: f64, r_rec: f64, c: f64) -> f64 {
    (2.0 * (mu + r_rec) * c).sqrt() + c
}

/// The refined first-order period `sqrt(2 (μ − (D + R)) C)`, optimal for
/// [`waste_nopred`].
pub fn rfo_period(mu: f64, d: f64, r_rec: f64, c: f64) -> Result<f64> {
    let slack = mu - (d + r_rec);
    if slack <= 0.0 {
        return Err(Error::validity("mu - (D + R)", slack));
    }
    Ok((2.0 * slack * c).sqrt())
}

/// Optimal period when a fraction r of the faults is predicted at their
/// exact date: `sqrt(2 μ C / (1 − r))`.
pub fn exact_prediction_period(mu: f64, c: f64, r: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::invalid("recall", r, "must lie in [0, 1)"));
    }
    Ok((2.0 * mu * c / (1.0 - r)).sqrt())
}

fn check_period(t_r: f64, platform: &Platform) -> Result<()> {
    if !(t_r > platform.c_regular) || !t_r.is_finite() {
        return Err(Error::invalid(
            "t_regular",
            t_r,
            "must be finite and exceed C",
        ));
    }
    Ok(())
}

/// Waste of the periodic policy with period `t_r` that ignores predictions.
pub fn waste_nopred(t_r: f64, platform: &Platform) -> Result<WasteBreakdown> {
    check_period(t_r, platform)?;
    let mu = platform.mtbf();
    let c = platform.c_regular;
    let lost = (t_r / 2.0 + platform.downtime + platform.recovery) / mu;
    if lost >= 1.0 {
        return Err(Error::validity("expected loss per fault over mu", lost));
    }
    WasteBreakdown::from_efficiency((1.0 - c / t_r) * (1.0 - lost))
}

/// Shared regular-mode factor of the q = 1 closed forms:
/// `(1 − C/T_R)(1 − (p(D+R) + r Cp + (1−r) p T_R / 2 + r X) / (p μ))`.
fn regular_term(t_r: f64, platform: &Platform, predictor: &Predictor, x: f64) -> f64 {
    let (p, r) = (predictor.precision, predictor.recall);
    let mu = platform.mtbf();
    let inner = p * (platform.downtime + platform.recovery)
        + r * platform.c_proactive
        + (1.0 - r) * p * t_r / 2.0
        + r * x;
    (1.0 - platform.c_regular / t_r) * (1.0 - inner / (p * mu))
}

/// Waste of `WithCkptI` (always trusting), periodic checkpoints of period
/// `t_p` inside prediction windows.
pub fn waste_withckpt(
    t_r: f64,
    t_p: f64,
    platform: &Platform,
    predictor: &Predictor,
    e_fault: ExpectedFaultOffset,
) -> Result<WasteBreakdown> {
    check_period(t_r, platform)?;
    let cp = platform.c_proactive;
    if !(t_p >= cp && t_p <= predictor.window) {
        return Err(Error::invalid("t_proactive", t_p, "must lie in [Cp, I]"));
    }
    let (p, r, i) = (predictor.precision, predictor.recall, predictor.window);
    let e = e_fault.value();
    let mu = platform.mtbf();
    let in_window = (1.0 - p) * i + p * e;
    let proactive_work = r / (p * mu) * (1.0 - cp / t_p) * ((1.0 - p) * i + p * (e - t_p));
    let regular = regular_term(t_r, platform, predictor, in_window);
    WasteBreakdown::from_efficiency(proactive_work + regular)
}

/// Waste of `NoCkptI` (always trusting): the window is spent working without
/// any checkpoint.
pub fn waste_nockpt(
    t_r: f64,
    platform: &Platform,
    predictor: &Predictor,
    e_fault: ExpectedFaultOffset,
) -> Result<WasteBreakdown> {
    check_period(t_r, platform)?;
    let (p, r, i) = (predictor.precision, predictor.recall, predictor.window);
    let e = e_fault.value();
    let mu = platform.mtbf();
    let false_window_work = r / (p * mu) * (1.0 - p) * i;
    let regular = regular_term(t_r, platform, predictor, (1.0 - p) * i + p * e);
    WasteBreakdown::from_efficiency(false_window_work + regular)
}

/// Waste of `Instant` (always trusting): a proactive checkpoint before the
/// window, then straight back to regular mode.
pub fn waste_instant(
    t_r: f64,
    platform: &Platform,
    predictor: &Predictor,
    e_fault: ExpectedFaultOffset,
) -> Result<WasteBreakdown> {
    check_period(t_r, platform)?;
    let p = predictor.precision;
    let regular = regular_term(t_r, platform, predictor, p * e_fault.value());
    WasteBreakdown::from_efficiency(regular)
}

/// Optimal proactive period `sqrt(((1−p) I + p E) Cp / p)`, clamped into
/// `[Cp, I]`.
pub fn tp_extr(
    platform: &Platform,
    predictor: &Predictor,
    e_fault: ExpectedFaultOffset,
) -> Result<Clamped> {
    let cp = platform.c_proactive;
    let (p, i) = (predictor.precision, predictor.window);
    if i < cp {
        return Err(Error::StrategyInapplicable {
            strategy: Strategy::WithCkptI,
            reason: "prediction window shorter than a proactive checkpoint",
        });
    }
    if !(p > 0.0) {
        return Err(Error::invalid("precision", p, "must be > 0"));
    }
    let raw = (((1.0 - p) * i + p * e_fault.value()) * cp / p).sqrt();
    let value = raw.clamp(cp, i);
    Ok(Clamped {
        value,
        raw,
        clamped: value != raw,
    })
}

/// `sqrt(2C (pμ − overhead) / (p (1 − r)))`, clamped to at least C.
fn tr_extr_from_overhead(
    platform: &Platform,
    predictor: &Predictor,
    overhead: f64,
) -> Result<Clamped> {
    let (p, r) = (predictor.precision, predictor.recall);
    if r >= 1.0 {
        return Err(Error::invalid(
            "recall",
            r,
            "the regular period is unbounded when every fault is predicted",
        ));
    }
    let c = platform.c_regular;
    let radicand = 2.0 * c * (p * platform.mtbf() - overhead) / (p * (1.0 - r));
    if radicand < 0.0 {
        return Err(Error::validity("regular-period radicand", radicand));
    }
    let raw = radicand.sqrt();
    if raw <= c {
        return Ok(Clamped {
            value: c,
            raw,
            clamped: true,
        });
    }
    Ok(Clamped {
        value: raw,
        raw,
        clamped: false,
    })
}

/// Optimal regular period for the window strategies (`WithCkptI` and
/// `NoCkptI` share it).
pub fn tr_extr_window(
    platform: &Platform,
    predictor: &Predictor,
    e_fault: ExpectedFaultOffset,
) -> Result<Clamped> {
    let (p, r, i) = (predictor.precision, predictor.recall, predictor.window);
    let overhead = p * (platform.downtime + platform.recovery)
        + r * (platform.c_proactive + (1.0 - p) * i + p * e_fault.value());
    tr_extr_from_overhead(platform, predictor, overhead)
}

/// Optimal regular period for `Instant`.
pub fn tr_extr_instant(
    platform: &Platform,
    predictor: &Predictor,
    e_fault: ExpectedFaultOffset,
) -> Result<Clamped> {
    let (p, r) = (predictor.precision, predictor.recall);
    let overhead = p * (platform.downtime + platform.recovery)
        + r * platform.c_proactive
        + p * r * e_fault.value();
    tr_extr_from_overhead(platform, predictor, overhead)
}

/// Expected number of intervals of each type per second of final execution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalWeights {
    /// Fault-free regular periods.
    pub w1: f64,
    /// Unpredicted faults.
    pub w2: f64,
    /// False predictions, plus true predictions handled like them.
    pub w3: f64,
    /// True predictions.
    pub w4: f64,
}

/// One row of an interval table: how long an interval lasts and how much
/// useful work it contains.
#[derive(Debug, Clone, Copy)]
struct Row {
    time: f64,
    work: f64,
}

struct IntervalTable {
    unpredicted: Row,
    false_prediction: Row,
    true_prediction: Row,
}

fn interval_table(
    strategy: Strategy,
    t_r: f64,
    t_p: f64,
    q: f64,
    platform: &Platform,
    predictor: &Predictor,
    e: f64,
) -> IntervalTable {
    let c = platform.c_regular;
    let cp = platform.c_proactive;
    let d_r = platform.downtime + platform.recovery;
    let i = predictor.window;

    let unpredicted = Row {
        time: t_r / 2.0 + d_r,
        work: 0.0,
    };
    // A trusted false prediction costs the proactive checkpoint and, for the
    // window strategies, the whole window.
    let false_prediction = match strategy {
        Strategy::WithCkptI => Row {
            time: t_r + q * (i + cp),
            work: t_r - c + q * (i - i * cp / t_p),
        },
        Strategy::NoCkptI => Row {
            time: t_r + q * (i + cp),
            work: t_r - c + q * i,
        },
        _ => Row {
            time: t_r + q * cp,
            work: t_r - c,
        },
    };
    // A true prediction: trusted, the fault strikes E into the window after a
    // full regular period and a proactive checkpoint; ignored, it is an
    // ordinary fault.
    let trusted_time = t_r + e + cp;
    let true_prediction = Row {
        time: q * trusted_time + (1.0 - q) * (t_r / 2.0) + d_r,
        work: match strategy {
            Strategy::WithCkptI => q * (t_r - c + (e / t_p - 1.0) * (t_p - cp)),
            _ => q * (t_r - c),
        },
    };
    IntervalTable {
        unpredicted,
        false_prediction,
        true_prediction,
    }
}

/// Waste for an arbitrary trust probability `q`, computed from the interval
/// table of the strategy rather than from the rewritten closed forms.
///
/// With `T_base = 1`, the time relation `T_F = w1·T_R + Σ_i d_i·T_F·time_i`
/// and the work relation `1 = w1·(T_R − C) + Σ_i d_i·T_F·work_i` are linear
/// in `(w1, T_F)`; eliminating `w1` gives `T_F` directly.
///
/// `Daly` and `RFO` are accepted only with `q = 0`.
pub fn general_q_waste(
    strategy: Strategy,
    t_r: f64,
    t_p: f64,
    q: f64,
    platform: &Platform,
    predictor: &Predictor,
    e_fault: ExpectedFaultOffset,
) -> Result<(WasteBreakdown, IntervalWeights)> {
    check_period(t_r, platform)?;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid("trust_prob", q, "must lie in [0, 1]"));
    }
    match strategy {
        Strategy::Daly | Strategy::Rfo if q != 0.0 => {
            return Err(Error::invalid(
                "trust_prob",
                q,
                "periodic policies never trust predictions",
            ))
        }
        Strategy::WithCkptI if q > 0.0 => {
            if predictor.window < platform.c_proactive {
                return Err(Error::StrategyInapplicable {
                    strategy,
                    reason: "prediction window shorter than a proactive checkpoint",
                });
            }
            if !(t_p >= platform.c_proactive && t_p <= predictor.window) {
                return Err(Error::invalid("t_proactive", t_p, "must lie in [Cp, I]"));
            }
        }
        _ => {}
    }
    let (p, r) = (predictor.precision, predictor.recall);
    let mu = platform.mtbf();
    let table = interval_table(strategy, t_r, t_p, q, platform, predictor, e_fault.value());

    let d2 = (1.0 - r) / mu;
    let d3 = (1.0 - p) * r / (p * mu);
    let d4 = r / mu;
    let s_time = d2 * table.unpredicted.time
        + d3 * table.false_prediction.time
        + d4 * table.true_prediction.time;
    let s_work = d2 * table.unpredicted.work
        + d3 * table.false_prediction.work
        + d4 * table.true_prediction.work;

    let useful = t_r - platform.c_regular;
    let denominator = 1.0 + t_r * s_work / useful - s_time;
    if !(denominator > 0.0) {
        return Err(Error::validity("interval system denominator", denominator));
    }
    let t_final = t_r / useful / denominator;
    let w1 = (1.0 - t_final * s_work) / useful;
    if w1 < 0.0 {
        return Err(Error::validity("regular interval count", w1));
    }
    let breakdown = WasteBreakdown::from_efficiency(1.0 / t_final)?;
    Ok((
        breakdown,
        IntervalWeights {
            w1: w1 / t_final,
            w2: d2,
            w3: d3,
            w4: d4,
        },
    ))
}

/// Closed-form waste of `strategy` at regular period `t_r` (q = 0 for the
/// periodic policies, q = 1 otherwise).
pub fn closed_form_waste(
    strategy: Strategy,
    t_r: f64,
    t_p: f64,
    platform: &Platform,
    predictor: &Predictor,
    e_fault: ExpectedFaultOffset,
) -> Result<WasteBreakdown> {
    match strategy {
        Strategy::Daly | Strategy::Rfo => waste_nopred(t_r, platform),
        Strategy::Instant => waste_instant(t_r, platform, predictor, e_fault),
        Strategy::NoCkptI => waste_nockpt(t_r, platform, predictor, e_fault),
        Strategy::WithCkptI => waste_withckpt(t_r, t_p, platform, predictor, e_fault),
    }
}

/// A strategy configured with its analytic periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticOptimum {
    pub policy: PolicyConfig,
    pub breakdown: WasteBreakdown,
    pub t_regular_clamped: bool,
    pub t_proactive_clamped: bool,
}

/// Periods the analysis recommends for `strategy`, without evaluating the
/// waste. Daly uses its own formula, the others their waste minimisers.
pub fn analytic_policy(
    strategy: Strategy,
    platform: &Platform,
    predictor: &Predictor,
    e_fault: ExpectedFaultOffset,
) -> Result<(PolicyConfig, bool, bool)> {
    let mu = platform.mtbf();
    let (c, d, r_rec) = (platform.c_regular, platform.downtime, platform.recovery);
    Ok(match strategy {
        Strategy::Daly => (
            PolicyConfig::periodic(strategy, daly_period(mu, r_rec, c)),
            false,
            false,
        ),
        Strategy::Rfo => {
            let t = rfo_period(mu, d, r_rec, c)?;
            if t <= c {
                (PolicyConfig::periodic(strategy, c), true, false)
            } else {
                (PolicyConfig::periodic(strategy, t), false, false)
            }
        }
        Strategy::Instant => {
            let tr = tr_extr_instant(platform, predictor, e_fault)?;
            (
                PolicyConfig::trusting(strategy, tr.value, 0.0),
                tr.clamped,
                false,
            )
        }
        Strategy::NoCkptI => {
            let tr = tr_extr_window(platform, predictor, e_fault)?;
            (
                PolicyConfig::trusting(strategy, tr.value, 0.0),
                tr.clamped,
                false,
            )
        }
        Strategy::WithCkptI => {
            let tp = tp_extr(platform, predictor, e_fault)?;
            let tr = tr_extr_window(platform, predictor, e_fault)?;
            (
                PolicyConfig::trusting(strategy, tr.value, tp.value),
                tr.clamped,
                tp.clamped,
            )
        }
    })
}

/// Configure `strategy` at its analytic periods and evaluate its waste.
pub fn analytic_optimum(
    strategy: Strategy,
    platform: &Platform,
    predictor: &Predictor,
    e_fault: ExpectedFaultOffset,
) -> Result<AnalyticOptimum> {
    let (policy, t_regular_clamped, t_proactive_clamped) =
        analytic_policy(strategy, platform, predictor, e_fault)?;
    let breakdown = closed_form_waste(
        strategy,
        policy.t_regular,
        policy.t_proactive,
        platform,
        predictor,
        e_fault,
    )?;
    Ok(AnalyticOptimum {
        policy,
        breakdown,
        t_regular_clamped,
        t_proactive_clamped,
    })
}

/// Pick the strategy with the smallest analytic waste. RFO stands for the
/// prediction-ignoring policies; a strategy whose evaluation fails is
/// skipped. Ties (within [`TIE_TOLERANCE`]) go to the earlier strategy in
/// [`Strategy::ALL`].
///
/// ```
/// use ckptwin::analytic::optimal_policy;
/// use ckptwin::model::*;
/// let platform = Platform::with_mtbf(240_600.0, 600.0, 600.0, 60.0, 600.0).unwrap();
/// let blind = Predictor::none(300.0);
/// let best = optimal_policy(&platform, &blind, ExpectedFaultOffset::midpoint(&blind)).unwrap();
/// assert_eq!(best.policy.strategy, Strategy::Rfo);
/// ```
pub fn optimal_policy(
    platform: &Platform,
    predictor: &Predictor,
    e_fault: ExpectedFaultOffset,
) -> Result<AnalyticOptimum> {
    let rfo = analytic_optimum(Strategy::Rfo, platform, predictor, e_fault)?;
    let mut best = rfo;
    for strategy in [Strategy::Instant, Strategy::NoCkptI, Strategy::WithCkptI] {
        let Ok(candidate) = analytic_optimum(strategy, platform, predictor, e_fault) else {
            continue;
        };
        let threshold = best.breakdown.waste * (1.0 - TIE_TOLERANCE);
        if candidate.breakdown.waste < threshold {
            best = candidate;
        }
    }
    Ok(best)
}
