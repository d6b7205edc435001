//! Discrete-event execution of one job under one policy against one trace.
//!
//! The simulator tracks three clocks of work: `saved` (protected by a
//! completed checkpoint), `unsaved` (done since the last completed
//! checkpoint, lost on a fault) and the regular-mode period budget. Time is
//! advanced from event to event; at equal dates an activity completes first,
//! then a fault strikes, then a prediction is revealed.

use std::sync::{Arc, Mutex};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{daly_period, waste_nopred};
use crate::error::{Error, Result};
use crate::model::{Platform, PolicyConfig, Predictor, Strategy};
use crate::tracegen::{stream_rng, EventKind, Stream, Trace, TraceConfig};

/// Slack used when comparing dates computed along different paths.
const EPS: f64 = 1e-9;

/// Where the makespan went.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeAccounting {
    /// Work that survived until the end (equals T_base).
    pub useful: f64,
    /// Work destroyed by faults.
    pub lost: f64,
    /// Checkpointing, regular and proactive, including interrupted ones.
    pub checkpoint: f64,
    pub downtime: f64,
    pub recovery: f64,
}

impl TimeAccounting {
    pub fn total(&self) -> f64 {
        self.useful + self.lost + self.checkpoint + self.downtime + self.recovery
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub makespan: f64,
    pub waste: f64,
    pub n_unpredicted_faults: u64,
    pub n_predicted_faults: u64,
    pub n_true_predictions: u64,
    pub n_false_predictions: u64,
    pub n_predictions_trusted: u64,
    /// Trusted predictions dropped because another one was being handled.
    pub n_predictions_ignored_busy: u64,
    pub n_regular_ckpts: u64,
    pub n_proactive_ckpts: u64,
    pub lost_work: f64,
    pub time: TimeAccounting,
}

/// `(makespan − t_base) / makespan`.
pub fn waste_of(result: &SimResult, t_base: f64) -> f64 {
    (result.makespan - t_base) / result.makespan
}

/// One line of the optional event log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub clock: f64,
    pub transition: &'static str,
    pub work_done: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Window {
    start: f64,
    end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    /// Regular mode, working towards the next periodic checkpoint.
    RegWork,
    /// Periodic checkpoint; `pending` is a trusted prediction revealed while
    /// it was running (no time for a proactive checkpoint).
    RegCkpt {
        end: f64,
        pending: Option<Window>,
    },
    /// Proactive checkpoint right before a window.
    PreCkpt {
        end: f64,
        window: Window,
    },
    /// Unprotected work until the window opens.
    PreWork {
        window: Window,
    },
    ProWork {
        end: f64,
        window: Window,
        ckpt_after: bool,
    },
    ProCkpt {
        end: f64,
        window: Window,
    },
    /// Downtime then recovery. A trusted prediction revealed meanwhile is
    /// acted on once the platform is back.
    Down {
        downtime_end: f64,
        end: f64,
        deferred: Option<Window>,
    },
}

struct Sim<'a, R: Rng + ?Sized> {
    policy: PolicyConfig,
    platform: &'a Platform,
    window: f64,
    t_base: f64,
    rng: &'a mut R,
    log: Option<&'a mut Vec<LogEntry>>,

    now: f64,
    phase: Phase,
    saved: f64,
    unsaved: f64,
    /// Regular-mode work left before the next periodic checkpoint.
    period_left: f64,
    out: SimResult,
}

impl<R: Rng + ?Sized> Sim<'_, R> {
    fn note(&mut self, transition: &'static str) {
        if let Some(log) = self.log.as_deref_mut() {
            log.push(LogEntry {
                clock: self.now,
                transition,
                work_done: self.saved + self.unsaved,
            });
        }
    }

    fn fresh_period(&self) -> f64 {
        self.policy.t_regular - self.platform.c_regular
    }

    fn is_working(&self) -> bool {
        matches!(
            self.phase,
            Phase::RegWork | Phase::PreWork { .. } | Phase::ProWork { .. }
        )
    }

    fn phase_end(&self) -> f64 {
        match self.phase {
            Phase::RegWork => self.now + self.period_left,
            Phase::PreWork { window } => window.start,
            Phase::RegCkpt { end, .. }
            | Phase::PreCkpt { end, .. }
            | Phase::ProWork { end, .. }
            | Phase::ProCkpt { end, .. }
            | Phase::Down { end, .. } => end,
        }
    }

    fn advance(&mut self, t: f64) {
        let dt = t - self.now;
        match self.phase {
            Phase::RegWork => {
                self.unsaved += dt;
                self.period_left -= dt;
            }
            Phase::PreWork { .. } | Phase::ProWork { .. } => self.unsaved += dt,
            Phase::RegCkpt { .. } | Phase::PreCkpt { .. } | Phase::ProCkpt { .. } => {
                self.out.time.checkpoint += dt
            }
            Phase::Down { downtime_end, .. } => {
                let down = (downtime_end.min(t) - self.now).max(0.0);
                self.out.time.downtime += down;
                self.out.time.recovery += dt - down;
            }
        }
        self.now = t;
    }

    fn commit(&mut self) {
        self.saved += self.unsaved;
        self.unsaved = 0.0;
    }

    fn resume_regular(&mut self) {
        self.note("regular");
        self.phase = if self.period_left <= 0.0 {
            Phase::RegCkpt {
                end: self.now + self.platform.c_regular,
                pending: None,
            }
        } else {
            Phase::RegWork
        };
    }

    fn work_until_window(&mut self, window: Window) {
        if self.now < window.start {
            self.phase = Phase::PreWork { window };
        } else {
            self.enter_proactive(window);
        }
    }

    fn enter_proactive(&mut self, window: Window) {
        self.note("proactive");
        match self.policy.strategy {
            Strategy::NoCkptI if self.now < window.end => {
                self.phase = Phase::ProWork {
                    end: window.end,
                    window,
                    ckpt_after: false,
                };
            }
            Strategy::WithCkptI => self.next_proactive_chunk(window),
            _ => self.resume_regular(),
        }
    }

    /// Tile the rest of the window with proactive periods; a tail shorter than
    /// one period ends with a checkpoint if it can hold one.
    fn next_proactive_chunk(&mut self, window: Window) {
        let cp = self.platform.c_proactive;
        let t_p = self.policy.t_proactive;
        let left = window.end - self.now;
        self.phase = if left >= t_p - EPS {
            Phase::ProWork {
                end: self.now + t_p - cp,
                window,
                ckpt_after: true,
            }
        } else if left > cp + EPS {
            Phase::ProWork {
                end: window.end - cp,
                window,
                ckpt_after: true,
            }
        } else if left > EPS {
            Phase::ProWork {
                end: window.end,
                window,
                ckpt_after: false,
            }
        } else {
            return self.resume_regular();
        };
    }

    fn complete_phase(&mut self) {
        match self.phase {
            Phase::RegWork => {
                self.period_left = 0.0;
                self.note("checkpoint");
                self.phase = Phase::RegCkpt {
                    end: self.now + self.platform.c_regular,
                    pending: None,
                };
            }
            Phase::RegCkpt { pending, .. } => {
                self.commit();
                self.out.n_regular_ckpts += 1;
                self.period_left = self.fresh_period();
                self.note("checkpoint done");
                match pending {
                    Some(window) => self.work_until_window(window),
                    None => self.phase = Phase::RegWork,
                }
            }
            Phase::PreCkpt { window, .. } => {
                self.commit();
                self.out.n_proactive_ckpts += 1;
                self.note("proactive checkpoint done");
                self.work_until_window(window);
            }
            Phase::PreWork { window } => self.enter_proactive(window),
            Phase::ProWork {
                window, ckpt_after, ..
            } => {
                if ckpt_after {
                    self.phase = Phase::ProCkpt {
                        end: self.now + self.platform.c_proactive,
                        window,
                    };
                } else {
                    self.resume_regular();
                }
            }
            Phase::ProCkpt { window, .. } => {
                self.commit();
                self.out.n_proactive_ckpts += 1;
                self.next_proactive_chunk(window);
            }
            Phase::Down { deferred, .. } => {
                self.note("recovered");
                match deferred {
                    Some(window) if self.now < window.end => self.work_until_window(window),
                    _ => self.phase = Phase::RegWork,
                }
            }
        }
    }

    fn fault(&mut self, predicted: bool) {
        if predicted {
            self.out.n_predicted_faults += 1;
        } else {
            self.out.n_unpredicted_faults += 1;
        }
        let deferred = match self.phase {
            Phase::Down { deferred, .. } => deferred,
            _ => {
                self.out.lost_work += self.unsaved;
                self.unsaved = 0.0;
                None
            }
        };
        self.note("fault");
        self.period_left = self.fresh_period();
        let downtime_end = self.now + self.platform.downtime;
        self.phase = Phase::Down {
            downtime_end,
            end: downtime_end + self.platform.recovery,
            deferred,
        };
    }

    fn prediction(&mut self, kind: EventKind) {
        let window_start = kind
            .window_start()
            .expect("prediction events carry a window");
        if matches!(kind, EventKind::TruePrediction { .. }) {
            self.out.n_true_predictions += 1;
        } else {
            self.out.n_false_predictions += 1;
        }
        if !self.policy.strategy.uses_predictions() {
            return;
        }
        if self.rng.random::<f64>() >= self.policy.trust_prob {
            return;
        }
        self.out.n_predictions_trusted += 1;
        let window = Window {
            start: window_start,
            end: window_start + self.window,
        };
        match &mut self.phase {
            Phase::RegWork => {
                self.note("prediction");
                if self.now + self.platform.c_proactive <= window.start + EPS {
                    self.phase = Phase::PreCkpt {
                        end: self.now + self.platform.c_proactive,
                        window,
                    };
                } else {
                    // Revealed too late for a proactive checkpoint.
                    self.work_until_window(window);
                }
            }
            Phase::RegCkpt { pending, .. }
            | Phase::Down {
                deferred: pending, ..
            } if pending.is_none() => {
                *pending = Some(window);
                self.note("prediction");
            }
            _ => {
                self.out.n_predictions_ignored_busy += 1;
                self.note("prediction ignored");
            }
        }
    }

    fn run(mut self, trace: &Trace) -> Result<SimResult> {
        let faults = trace.fault_times();
        let predicted = trace.fault_predicted();
        let predictions: Vec<(f64, EventKind)> = trace
            .predictions()
            .map(|e| (e.reveal_time, e.kind))
            .collect();
        let (mut fi, mut pi) = (0usize, 0usize);

        loop {
            let working = self.is_working();
            let phase_end = self.phase_end();
            let finish = if working {
                self.now + (self.t_base - self.saved - self.unsaved)
            } else {
                f64::INFINITY
            };
            let activity = phase_end.min(finish);
            let next_fault = faults.get(fi).copied().unwrap_or(f64::INFINITY);
            let next_prediction = predictions.get(pi).map_or(f64::INFINITY, |p| p.0);
            let next = activity.min(next_fault).min(next_prediction);
            if next > trace.horizon {
                return Err(Error::TraceExhausted {
                    clock: self.now,
                    horizon: trace.horizon,
                });
            }
            if activity <= next_fault && activity <= next_prediction {
                self.advance(activity);
                if working && finish <= phase_end {
                    self.unsaved = self.t_base - self.saved;
                    self.note("done");
                    break;
                }
                self.complete_phase();
            } else if next_fault <= next_prediction {
                self.advance(next_fault);
                let was_predicted = predicted[fi];
                fi += 1;
                self.fault(was_predicted);
            } else {
                self.advance(next_prediction);
                let kind = predictions[pi].1;
                pi += 1;
                self.prediction(kind);
            }
        }

        let mut out = self.out;
        out.makespan = self.now;
        out.waste = (out.makespan - self.t_base) / out.makespan;
        out.time.useful = self.t_base;
        out.time.lost = out.lost_work;
        Ok(out)
    }
}

/// Run the job of `t_base` seconds of work under `policy` against `trace`.
/// `rng` only decides whether predictions are trusted.
pub fn simulate<R: Rng + ?Sized>(
    policy: &PolicyConfig,
    trace: &Trace,
    t_base: f64,
    platform: &Platform,
    predictor: &Predictor,
    rng: &mut R,
) -> Result<SimResult> {
    run(policy, trace, t_base, platform, predictor, rng, None)
}

/// [`simulate`], recording every state transition.
pub fn simulate_logged<R: Rng + ?Sized>(
    policy: &PolicyConfig,
    trace: &Trace,
    t_base: f64,
    platform: &Platform,
    predictor: &Predictor,
    rng: &mut R,
) -> Result<(SimResult, Vec<LogEntry>)> {
    let mut log = Vec::new();
    let result = run(
        policy,
        trace,
        t_base,
        platform,
        predictor,
        rng,
        Some(&mut log),
    )?;
    Ok((result, log))
}

fn run<R: Rng + ?Sized>(
    policy: &PolicyConfig,
    trace: &Trace,
    t_base: f64,
    platform: &Platform,
    predictor: &Predictor,
    rng: &mut R,
    log: Option<&mut Vec<LogEntry>>,
) -> Result<SimResult> {
    if !(t_base > 0.0 && t_base.is_finite()) {
        return Err(Error::invalid("t_base", t_base, "must be finite and > 0"));
    }
    platform.validate()?;
    predictor.validate()?;
    policy.validate(platform, predictor)?;
    let sim = Sim {
        policy: *policy,
        platform,
        window: predictor.window,
        t_base,
        rng,
        log,
        now: 0.0,
        phase: Phase::RegWork,
        saved: 0.0,
        unsaved: 0.0,
        period_left: policy.t_regular - platform.c_regular,
        out: SimResult::default(),
    };
    sim.run(trace)
}

/// A job to simulate: trace generator settings plus the amount of work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSetup {
    pub trace: TraceConfig,
    pub t_base: f64,
}

impl SimSetup {
    /// Initial trace horizon: a generous multiple of the makespan Daly's
    /// policy would have under the first-order model. Traces are extended
    /// on demand anyway.
    pub fn initial_horizon(&self) -> f64 {
        let mut platform = self.trace.platform;
        platform.n_procs = 1;
        platform.mu_ind = self.trace.effective_mtbf();
        let daly = daly_period(platform.mu_ind, platform.recovery, platform.c_regular);
        let slowdown = waste_nopred(daly, &platform)
            .map(|w| w.t_final_over_t_base)
            .unwrap_or(16.0);
        4.0 * self.t_base * slowdown
    }
}

const MAX_EXTENSIONS: u32 = 24;

/// Traces are not extended past this multiple of the fault-free time; a
/// job still running by then is reported as diverged.
pub const MAX_SLOWDOWN: f64 = 200.0;

/// Simulate `policy` on the trace of `seed`, starting from `trace` if given
/// and regenerating with a doubled horizon whenever the trace runs out.
/// Returns the result and the longest trace generated, if any.
pub fn run_seed(
    policy: &PolicyConfig,
    setup: &SimSetup,
    seed: u64,
    trace: Option<&Trace>,
) -> Result<(SimResult, Option<Trace>)> {
    let mut generated = None;
    let mut horizon = trace.map_or_else(|| setup.initial_horizon(), |t| t.horizon);
    if trace.is_none() {
        generated = Some(setup.trace.generate(horizon, seed)?);
    }
    for _ in 0..MAX_EXTENSIONS {
        let current = generated.as_ref().or(trace).expect("a trace is available");
        let mut rng = stream_rng(seed, Stream::Trust);
        match simulate(
            policy,
            current,
            setup.t_base,
            &setup.trace.platform,
            &setup.trace.predictor,
            &mut rng,
        ) {
            Err(Error::TraceExhausted { .. }) => {
                if horizon >= MAX_SLOWDOWN * setup.t_base {
                    return Err(Error::Diverged {
                        horizon,
                        slowdown: horizon / setup.t_base,
                    });
                }
                horizon *= 2.0;
                generated = Some(setup.trace.generate(horizon, seed)?);
            }
            other => return other.map(|r| (r, generated)),
        }
    }
    Err(Error::TraceExhausted {
        clock: horizon,
        horizon,
    })
}

/// Sample mean and standard error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Standard error of the mean; 0 for a single sample.
    pub stderr: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary {
                mean: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Summary { mean, stderr: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Summary {
            mean,
            stderr: (var / n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicationStats {
    pub n_reps: usize,
    pub makespan: Summary,
    pub waste: Summary,
}

impl ReplicationStats {
    pub fn from_results(results: &[SimResult]) -> Self {
        let makespans: Vec<f64> = results.iter().map(|r| r.makespan).collect();
        let wastes: Vec<f64> = results.iter().map(|r| r.waste).collect();
        ReplicationStats {
            n_reps: results.len(),
            makespan: Summary::of(&makespans),
            waste: Summary::of(&wastes),
        }
    }
}

/// Traces for seeds `base_seed .. base_seed + n`, shared between policies so
/// comparisons use common random numbers. Traces that turn out too short are
/// extended once and the longer version is kept.
#[derive(Debug)]
pub struct TraceSet {
    pub setup: SimSetup,
    pub base_seed: u64,
    traces: Vec<Mutex<Arc<Trace>>>,
}

impl TraceSet {
    pub fn new(setup: SimSetup, base_seed: u64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n_reps", 0.0, "must be at least 1"));
        }
        let horizon = setup.initial_horizon();
        let traces = (0..n as u64)
            .into_par_iter()
            .map(|k| setup.trace.generate(horizon, base_seed + k))
            .map(|t| t.map(|t| Mutex::new(Arc::new(t))))
            .collect::<Result<Vec<_>>>()?;
        Ok(TraceSet {
            setup,
            base_seed,
            traces,
        })
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.traces.len() as u64).map(|k| self.base_seed + k)
    }

    /// The first `n` traces (at least one), sharing storage with `self`.
    pub fn truncated(&self, n: usize) -> TraceSet {
        TraceSet {
            setup: self.setup,
            base_seed: self.base_seed,
            traces: (0..n.clamp(1, self.len()))
                .map(|k| Mutex::new(self.trace(k)))
                .collect(),
        }
    }

    pub fn trace(&self, k: usize) -> Arc<Trace> {
        self.traces[k].lock().expect("trace lock").clone()
    }

    /// Run `policy` on every trace, in seed order.
    pub fn run(&self, policy: &PolicyConfig) -> Result<Vec<SimResult>> {
        (0..self.traces.len())
            .into_par_iter()
            .map(|k| {
                let trace = self.trace(k);
                let (result, longer) =
                    run_seed(policy, &self.setup, self.base_seed + k as u64, Some(&trace))?;
                if let Some(longer) = longer {
                    let mut slot = self.traces[k].lock().expect("trace lock");
                    if longer.horizon > slot.horizon {
                        *slot = Arc::new(longer);
                    }
                }
                Ok(result)
            })
            .collect()
    }

    pub fn stats(&self, policy: &PolicyConfig) -> Result<ReplicationStats> {
        Ok(ReplicationStats::from_results(&self.run(policy)?))
    }
}

/// Simulate `policy` on `n_reps` independent traces (seeds `base_seed ..`).
pub fn replicate(
    policy: &PolicyConfig,
    setup: &SimSetup,
    n_reps: usize,
    base_seed: u64,
) -> Result<ReplicationStats> {
    if n_reps == 0 {
        return Err(Error::invalid("n_reps", 0.0, "must be at least 1"));
    }
    let results = (0..n_reps as u64)
        .into_par_iter()
        .map(|k| run_seed(policy, setup, base_seed + k, None).map(|(r, _)| r))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicationStats::from_results(&results))
}
