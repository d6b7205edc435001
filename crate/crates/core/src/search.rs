//! Brute-force search for the best regular period.
//!
//! Every candidate period is evaluated on the same [`TraceSet`], so the
//! returned minimum is a true empirical minimum over the candidates rather
//! than a noisy comparison between independently sampled runs.

use serde::{Deserialize, Serialize};

use crate::analytic::{closed_form_waste, tp_extr};
use crate::engine::TraceSet;
use crate::model::{ExpectedFaultOffset, Platform, PolicyConfig, Predictor, Strategy};
use crate::{Error, Result};

/// Grid layout of a period search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    /// Search interval `[low, high]` for T_R, in seconds.
    pub t_r_range: (f64, f64),
    /// Points of the initial geometric grid.
    pub n_grid: usize,
    /// Number of times the bracket around the incumbent is re-gridded.
    pub refinement_rounds: usize,
    /// Points per refinement grid.
    pub refine_points: usize,
    /// Number of traces the simulated search averages over.
    pub n_traces: usize,
}

impl SearchSpec {
    /// Default grid: 64 geometric points over `[1.1 C, min(20 μ, t_base)]`,
    /// three refinement rounds of 16 points, 20 traces.
    pub fn default_for(platform: &Platform, t_base: f64) -> Self {
        let low = 1.1 * platform.c_regular;
        let high = (20.0 * platform.mtbf()).min(t_base).max(2.0 * low);
        SearchSpec {
            t_r_range: (low, high),
            n_grid: 64,
            refinement_rounds: 3,
            refine_points: 16,
            n_traces: 20,
        }
    }

    pub fn validate(&self, platform: &Platform) -> Result<()> {
        let (low, high) = self.t_r_range;
        if !(low > platform.c_regular) {
            return Err(Error::invalid("t_r_range.low", low, "must exceed C"));
        }
        if !(high > low && high.is_finite()) {
            return Err(Error::invalid(
                "t_r_range.high",
                high,
                "must be finite and exceed low",
            ));
        }
        if self.n_grid < 3 {
            return Err(Error::invalid(
                "n_grid",
                self.n_grid as f64,
                "must be at least 3",
            ));
        }
        if self.refinement_rounds > 0 && self.refine_points < 3 {
            return Err(Error::invalid(
                "refine_points",
                self.refine_points as f64,
                "must be at least 3",
            ));
        }
        Ok(())
    }
}

/// Result of a period search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub t_r_star: f64,
    pub waste_star: f64,
    /// Number of candidate periods evaluated successfully.
    pub evaluations: usize,
}

/// `n` geometrically spaced points from `low` to `high`, both included.
pub fn geometric_grid(low: f64, high: f64, n: usize) -> Vec<f64> {
    let ratio = (high / low).ln();
    (0..n)
        .map(|k| match k {
            0 => low,
            k if k == n - 1 => high,
            k => low * (ratio * k as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// Minimise `f` over the grid described by `spec`. Points where `f` returns
/// `None` are skipped; ties go to the larger period (fewer checkpoints).
pub fn grid_minimize<F>(spec: &SearchSpec, f: F) -> Result<SearchOutcome>
where
    F: FnMut(f64) -> Option<f64>,
{
    grid_minimize_with(spec, &[], f)
}

/// [`grid_minimize`], also evaluating the `extra` candidate periods before
/// the coarse grid.
pub fn grid_minimize_with<F>(spec: &SearchSpec, extra: &[f64], mut f: F) -> Result<SearchOutcome>
where
    F: FnMut(f64) -> Option<f64>,
{
    let (low, high) = spec.t_r_range;
    let mut evaluations = 0;
    let mut best: Option<(f64, f64)> = None;
    let mut scan = |grid: &[f64], best: &mut Option<(f64, f64)>| -> Option<usize> {
        let mut at = None;
        for (k, &t) in grid.iter().enumerate() {
            let Some(w) = f(t).filter(|w| w.is_finite()) else {
                continue;
            };
            evaluations += 1;
            if best.is_none_or(|(bt, bw)| w < bw || (w == bw && t > bt)) {
                *best = Some((t, w));
                at = Some(k);
            }
        }
        at
    };

    scan(extra, &mut best);
    let mut grid = geometric_grid(low, high, spec.n_grid);
    let mut at = scan(&grid, &mut best);
    if at.is_none() {
        at = best.and_then(|(t, _)| grid.iter().position(|&g| g == t));
    }
    if best.is_none() {
        return Err(Error::SearchFailure(format!(
            "no valid period in [{low}, {high}]"
        )));
    }
    for _ in 0..spec.refinement_rounds {
        // Re-grid the bracket around the incumbent; when the incumbent came
        // from an earlier round, `at` is None and the bracket is found again.
        let (t_best, _) = best.expect("incumbent exists");
        let k = at.unwrap_or_else(|| {
            grid.iter()
                .position(|&t| t >= t_best)
                .unwrap_or(grid.len() - 1)
        });
        let lo = grid[k.saturating_sub(1)];
        let hi = grid[(k + 1).min(grid.len() - 1)];
        if !(hi > lo) {
            break;
        }
        grid = geometric_grid(lo, hi, spec.refine_points);
        at = scan(&grid, &mut best);
    }
    let (t_r_star, waste_star) = best.expect("incumbent exists");
    Ok(SearchOutcome {
        t_r_star,
        waste_star,
        evaluations,
    })
}

/// The policy used when searching T_R for `strategy`; WithCkptI keeps its
/// analytic proactive period.
pub fn search_policy(
    strategy: Strategy,
    t_r: f64,
    platform: &Platform,
    predictor: &Predictor,
    e_fault: ExpectedFaultOffset,
) -> Result<PolicyConfig> {
    Ok(match strategy {
        Strategy::Daly | Strategy::Rfo => PolicyConfig::periodic(strategy, t_r),
        Strategy::Instant | Strategy::NoCkptI => PolicyConfig::trusting(strategy, t_r, 0.0),
        Strategy::WithCkptI => {
            if predictor.window < platform.c_proactive {
                return Err(Error::StrategyInapplicable {
                    strategy,
                    reason: "prediction window shorter than a proactive checkpoint",
                });
            }
            let tp = tp_extr(platform, predictor, e_fault)?;
            PolicyConfig::trusting(strategy, t_r, tp.value)
        }
    })
}

/// Best regular period of `strategy` by simulation over `traces`.
pub fn best_period(
    strategy: Strategy,
    traces: &TraceSet,
    spec: &SearchSpec,
) -> Result<SearchOutcome> {
    best_period_with(strategy, traces, spec, &[])
}

/// [`best_period`], with `extra` candidate periods (e.g. formula periods)
/// competing alongside the grid.
pub fn best_period_with(
    strategy: Strategy,
    traces: &TraceSet,
    spec: &SearchSpec,
    extra: &[f64],
) -> Result<SearchOutcome> {
    let platform = traces.setup.trace.platform;
    let predictor = traces.setup.trace.predictor;
    spec.validate(&platform)?;
    let e_fault = ExpectedFaultOffset::midpoint(&predictor);
    // Surface inapplicability before scanning.
    search_policy(strategy, spec.t_r_range.1, &platform, &predictor, e_fault)?;
    grid_minimize_with(spec, extra, |t_r| {
        let policy = search_policy(strategy, t_r, &platform, &predictor, e_fault).ok()?;
        traces.stats(&policy).ok().map(|s| s.waste.mean)
    })
}

/// Best regular period of `strategy` by grid minimisation of its closed-form
/// waste. Serves as a cross-check of the analytic optima.
pub fn best_period_analytic(
    strategy: Strategy,
    platform: &Platform,
    predictor: &Predictor,
    e_fault: ExpectedFaultOffset,
    spec: &SearchSpec,
) -> Result<SearchOutcome> {
    spec.validate(platform)?;
    let t_p = match strategy {
        Strategy::WithCkptI => tp_extr(platform, predictor, e_fault)?.value,
        _ => 0.0,
    };
    grid_minimize(spec, |t_r| {
        closed_form_waste(strategy, t_r, t_p, platform, predictor, e_fault)
            .ok()
            .map(|b| b.waste)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{rfo_period, tr_extr_instant, tr_extr_window};
    use crate::engine::SimSetup;
    use crate::tracegen::{DistKind, FalsePredictionLaw, FaultModel, TraceConfig};

    fn platform() -> Platform {
        Platform::with_mtbf(240_600.0, 600.0, 600.0, 60.0, 600.0).unwrap()
    }

    fn fine() -> SearchSpec {
        SearchSpec {
            t_r_range: (700.0, 400_000.0),
            n_grid: 64,
            refinement_rounds: 12,
            refine_points: 16,
            n_traces: 1,
        }
    }

    #[test]
    fn grid_has_endpoints_and_is_increasing() {
        let g = geometric_grid(2.0, 2000.0, 4);
        assert_eq!(g.first(), Some(&2.0));
        assert_eq!(g.last(), Some(&2000.0));
        assert!((g[1] - 20.0).abs() < 1e-9 && (g[2] - 200.0).abs() < 1e-9);
    }

    #[test]
    fn minimizes_a_parabola_in_log_space() {
        let spec = SearchSpec {
            t_r_range: (1.0, 1e6),
            ..fine()
        };
        let out = grid_minimize(&spec, |t| Some((t.ln() - 1000f64.ln()).powi(2))).unwrap();
        assert!((out.t_r_star / 1000.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn refinement_never_worsens_the_coarse_pass() {
        let f = |t: f64| Some((t / 3333.0 - 1.0).powi(2) + (t * 0.01).sin() * 1e-3);
        let coarse = grid_minimize(
            &SearchSpec {
                refinement_rounds: 0,
                ..fine()
            },
            f,
        )
        .unwrap();
        let refined = grid_minimize(&fine(), f).unwrap();
        assert!(refined.waste_star <= coarse.waste_star);
    }

    #[test]
    fn all_invalid_points_is_a_search_failure() {
        let err = grid_minimize(&fine(), |_| None).unwrap_err();
        assert!(matches!(err, Error::SearchFailure(_)));
    }

    #[test]
    fn spec_validation() {
        let p = platform();
        assert!(fine().validate(&p).is_ok());
        let bad = SearchSpec {
            t_r_range: (500.0, 1e5),
            ..fine()
        };
        assert!(bad.validate(&p).is_err());
        let bad = SearchSpec {
            n_grid: 2,
            ..fine()
        };
        assert!(bad.validate(&p).is_err());
        let d = SearchSpec::default_for(&p, 1e6);
        assert_eq!(d.t_r_range, (660.0, 1e6));
        assert_eq!(
            (d.n_grid, d.refinement_rounds, d.refine_points, d.n_traces),
            (64, 3, 16, 20)
        );
    }

    #[test]
    fn analytic_search_matches_closed_form_optima() {
        let p = platform();
        let pred = Predictor::new(0.82, 0.85, 3000.0).unwrap();
        let e = ExpectedFaultOffset::midpoint(&pred);
        for (strategy, expected) in [
            (
                Strategy::WithCkptI,
                tr_extr_window(&p, &pred, e).unwrap().value,
            ),
            (
                Strategy::NoCkptI,
                tr_extr_window(&p, &pred, e).unwrap().value,
            ),
            (
                Strategy::Instant,
                tr_extr_instant(&p, &pred, e).unwrap().value,
            ),
        ] {
            let out = best_period_analytic(strategy, &p, &pred, e, &fine()).unwrap();
            assert!(
                (out.t_r_star / expected - 1.0).abs() < 1e-3,
                "{strategy}: {} vs {expected}",
                out.t_r_star
            );
        }
        let blind = Predictor::none(3000.0);
        let e = ExpectedFaultOffset::midpoint(&blind);
        let rfo = rfo_period(p.mtbf(), p.downtime, p.recovery, p.c_regular).unwrap();
        let out = best_period_analytic(Strategy::NoCkptI, &p, &blind, e, &fine()).unwrap();
        assert!((out.t_r_star / rfo - 1.0).abs() < 1e-3);
    }

    fn exp_traces(n: usize, predictor: Predictor, t_base: f64) -> TraceSet {
        let setup = SimSetup {
            trace: TraceConfig {
                platform: Platform::with_mtbf(60_000.0, 600.0, 600.0, 60.0, 600.0).unwrap(),
                predictor,
                faults: DistKind::Exponential,
                false_predictions: FalsePredictionLaw::Same,
                fault_model: FaultModel::Platform,
            },
            t_base,
        };
        TraceSet::new(setup, 7, n).unwrap()
    }

    #[test]
    fn fault_free_traces_push_period_to_upper_bound() {
        let mut traces = exp_traces(1, Predictor::none(300.0), 50_000.0);
        // An enormous MTBF leaves the trace empty over the job's length.
        traces.setup.trace.platform.mu_ind = 1e15;
        let traces = TraceSet::new(traces.setup, 7, 2).unwrap();
        assert!(traces.trace(0).events.is_empty());
        let spec = SearchSpec {
            t_r_range: (660.0, 50_000.0),
            ..fine()
        };
        let out = best_period(Strategy::Daly, &traces, &spec).unwrap();
        assert_eq!(out.t_r_star, 50_000.0);
    }

    #[test]
    fn simulated_search_beats_formula_periods_on_shared_traces() {
        let traces = exp_traces(10, Predictor::none(300.0), 500_000.0);
        let p = traces.setup.trace.platform;
        let spec = SearchSpec {
            n_grid: 24,
            refinement_rounds: 2,
            refine_points: 8,
            ..SearchSpec::default_for(&p, traces.setup.t_base)
        };
        let mu = p.mtbf();
        let formulas = [
            crate::analytic::daly_period(mu, p.recovery, p.c_regular),
            rfo_period(mu, p.downtime, p.recovery, p.c_regular).unwrap(),
        ];
        let out = best_period_with(Strategy::Daly, &traces, &spec, &formulas).unwrap();
        for t in formulas {
            let w = traces
                .stats(&PolicyConfig::periodic(Strategy::Daly, t))
                .unwrap();
            assert!(out.waste_star <= w.waste.mean + 1e-12);
        }
    }

    #[test]
    fn withckpt_inapplicable_when_window_too_short() {
        let traces = exp_traces(1, Predictor::new(0.8, 0.8, 300.0).unwrap(), 50_000.0);
        let mut setup = traces.setup;
        setup.trace.platform.c_proactive = 1200.0;
        let traces = TraceSet::new(setup, 1, 1).unwrap();
        let spec = SearchSpec::default_for(&setup.trace.platform, setup.t_base);
        let err = best_period(Strategy::WithCkptI, &traces, &spec).unwrap_err();
        assert!(matches!(err, Error::StrategyInapplicable { .. }));
    }
}
