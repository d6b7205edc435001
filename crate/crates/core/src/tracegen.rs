//! Random event traces: fault times, predicted/unpredicted labels, prediction
//! windows and false predictions.
//!
//! Each ingredient draws from its own ChaCha sub-stream of the trace seed, so
//! changing one ingredient (say the window length) leaves the fault times
//! untouched. Generation is prefix-stable: a trace generated to a longer
//! horizon starts with exactly the events of the shorter one.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Platform, Predictor, SECONDS_PER_YEAR};

/// Shape of an inter-arrival law. The scale is fixed by the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum DistKind {
    Exponential,
    Weibull {
        shape: f64,
    },
    /// Uniform on `[0, 2·mean]`; only meaningful for false predictions.
    Uniform,
}

impl fmt::Display for DistKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistKind::Exponential => f.write_str("exp"),
            DistKind::Weibull { shape } => write!(f, "weibull:{shape}"),
            DistKind::Uniform => f.write_str("uniform"),
        }
    }
}

impl FromStr for DistKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "exp" | "exponential" => return Ok(DistKind::Exponential),
            "uniform" => return Ok(DistKind::Uniform),
            _ => {}
        }
        if let Some(shape) = lower.strip_prefix("weibull:") {
            let shape: f64 = shape
                .parse()
                .map_err(|_| Error::Config(format!("bad Weibull shape in `{s}`")))?;
            if !(shape > 0.0 && shape.is_finite()) {
                return Err(Error::invalid("weibull shape", shape, "must be > 0"));
            }
            return Ok(DistKind::Weibull { shape });
        }
        Err(Error::Config(format!(
            "unknown distribution `{s}` (expected exp, weibull:<k> or uniform)"
        )))
    }
}

impl From<DistKind> for String {
    fn from(kind: DistKind) -> String {
        kind.to_string()
    }
}

impl TryFrom<String> for DistKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// An inter-arrival law with a given mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultDistribution {
    kind: DistKind,
    mean: f64,
    /// Weibull scale λ, precomputed.
    scale: f64,
}

impl FaultDistribution {
    pub fn new(kind: DistKind, mean: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::invalid("mean", mean, "must be finite and > 0"));
        }
        let scale = match kind {
            DistKind::Weibull { shape } => {
                if !(shape > 0.0 && shape.is_finite()) {
                    return Err(Error::invalid("weibull shape", shape, "must be > 0"));
                }
                weibull_scale(mean, shape)
            }
            _ => mean,
        };
        Ok(FaultDistribution { kind, mean, scale })
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        FaultDistribution::new(DistKind::Exponential, mean)
    }

    pub fn weibull(shape: f64, mean: f64) -> Result<Self> {
        FaultDistribution::new(DistKind::Weibull { shape }, mean)
    }

    pub fn kind(&self) -> DistKind {
        self.kind
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Weibull scale λ (equal to the mean for the other laws).
    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Weibull scale giving the requested mean: `λ = mean / Γ(1 + 1/k)`.
pub fn weibull_scale(mean: f64, shape: f64) -> f64 {
    mean / statrs::function::gamma::gamma(1.0 + 1.0 / shape)
}

/// One inter-arrival time, by inversion of the CDF.
pub fn sample_interarrival<R: Rng + ?Sized>(dist: &FaultDistribution, rng: &mut R) -> f64 {
    // 1 - U lies in (0, 1], so the logarithm is finite.
    let u = 1.0 - rng.random::<f64>();
    match dist.kind {
        DistKind::Exponential => -dist.mean * u.ln(),
        DistKind::Weibull { shape } => dist.scale * (-u.ln()).powf(1.0 / shape),
        DistKind::Uniform => u * 2.0 * dist.mean,
    }
}

/// Renewal process: cumulative sums of inter-arrivals, up to `horizon`.
pub fn gen_fault_times<R: Rng + ?Sized>(
    dist: &FaultDistribution,
    horizon: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut times = Vec::new();
    let mut t = sample_interarrival(dist, rng);
    while t <= horizon {
        times.push(t);
        t += sample_interarrival(dist, rng);
    }
    times
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Due(f64);

impl Eq for Due {}

impl PartialOrd for Due {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Due {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Platform faults as the superposition of `n` independent per-component
/// renewal processes, observed on `[burn_in, burn_in + horizon]` and shifted
/// so the observation starts at 0.
///
/// For non-exponential laws the superposition is not itself a renewal
/// process, and the component age at which the job starts matters a great
/// deal; `burn_in` sets that age.
pub fn superposed_fault_times<R: Rng + ?Sized>(
    dist: &FaultDistribution,
    n: u64,
    burn_in: f64,
    horizon: f64,
    rng: &mut R,
) -> Vec<f64> {
    let end = burn_in + horizon;
    // Every component is drawn, in order, so the random stream is consumed the
    // same way whatever the horizon; components silent until `end` are then
    // dropped, which keeps the heap small.
    let mut first = Vec::new();
    for component in 0..n {
        let mut t = sample_interarrival(dist, rng);
        while t < burn_in {
            t += sample_interarrival(dist, rng);
        }
        if t <= end {
            first.push(Reverse((Due(t), component)));
        }
    }
    let mut heap = BinaryHeap::from(first);
    let mut times = Vec::new();
    while let Some(Reverse((Due(t), component))) = heap.pop() {
        times.push(t - burn_in);
        let next = t + sample_interarrival(dist, rng);
        if next <= end {
            heap.push(Reverse((Due(next), component)));
        }
    }
    times
}

/// Split faults into (predicted, unpredicted), each independently predicted
/// with probability `r`. One draw per fault, in order.
pub fn label_predicted<R: Rng + ?Sized>(
    faults: &[f64],
    r: f64,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let mut predicted = Vec::new();
    let mut unpredicted = Vec::new();
    for &t in faults {
        if rng.random::<f64>() < r {
            predicted.push(t);
        } else {
            unpredicted.push(t);
        }
    }
    (predicted, unpredicted)
}

/// What the scheduler is told about, and when.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    UnpredictedFault { fault_time: f64 },
    TruePrediction { window_start: f64, fault_time: f64 },
    FalsePrediction { window_start: f64 },
}

impl EventKind {
    /// Tie-breaking rank when two events share a reveal time.
    fn rank(&self) -> u8 {
        match self {
            EventKind::UnpredictedFault { .. } => 0,
            EventKind::TruePrediction { .. } => 1,
            EventKind::FalsePrediction { .. } => 2,
        }
    }

    pub fn window_start(&self) -> Option<f64> {
        match *self {
            EventKind::UnpredictedFault { .. } => None,
            EventKind::TruePrediction { window_start, .. }
            | EventKind::FalsePrediction { window_start } => Some(window_start),
        }
    }

    pub fn fault_time(&self) -> Option<f64> {
        match *self {
            EventKind::UnpredictedFault { fault_time }
            | EventKind::TruePrediction { fault_time, .. } => Some(fault_time),
            EventKind::FalsePrediction { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub reveal_time: f64,
    pub kind: EventKind,
    /// The prediction would have been revealed before time 0; it is revealed
    /// at 0 instead, with a lead time shorter than Cp.
    pub clipped: bool,
}

impl Event {
    pub fn unpredicted(fault_time: f64) -> Self {
        Event {
            reveal_time: fault_time,
            kind: EventKind::UnpredictedFault { fault_time },
            clipped: false,
        }
    }

    fn prediction(kind: EventKind, lead: f64) -> Self {
        let window_start = kind.window_start().expect("predictions have a window");
        let reveal = window_start - lead;
        Event {
            reveal_time: reveal.max(0.0),
            kind,
            clipped: reveal < 0.0,
        }
    }
}

/// Turn predicted faults into true predictions: the fault sits uniformly
/// inside a window of length `i_window`, revealed `lead` seconds before the
/// window opens. One draw per fault, in order.
pub fn attach_windows<R: Rng + ?Sized>(
    predicted_faults: &[f64],
    i_window: f64,
    lead: f64,
    rng: &mut R,
) -> Vec<Event> {
    let mut events: Vec<Event> = predicted_faults
        .iter()
        .map(|&fault_time| {
            let offset = rng.random::<f64>() * i_window;
            Event::prediction(
                EventKind::TruePrediction {
                    window_start: fault_time - offset,
                    fault_time,
                },
                lead,
            )
        })
        .collect();
    sort_events(&mut events);
    events
}

/// Law of the false-prediction stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FalsePredictionLaw {
    /// Same family (and shape) as the faults.
    #[default]
    Same,
    Uniform,
}

/// Mean time between false predictions, `p μ / (r (1 − p))`; `None` when
/// there are none (p = 1 or r = 0).
pub fn false_prediction_mean(mu: f64, predictor: &Predictor) -> Option<f64> {
    let (p, r) = (predictor.precision, predictor.recall);
    if p >= 1.0 || r <= 0.0 {
        None
    } else {
        Some(p * mu / (r * (1.0 - p)))
    }
}

/// Independent renewal stream of false predictions up to `horizon`; each
/// renewal date is the start of a window.
pub fn gen_false_predictions<R: Rng + ?Sized>(
    kind: DistKind,
    mu: f64,
    predictor: &Predictor,
    lead: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<Vec<Event>> {
    let Some(mean) = false_prediction_mean(mu, predictor) else {
        return Ok(Vec::new());
    };
    let dist = FaultDistribution::new(kind, mean)?;
    Ok(gen_fault_times(&dist, horizon, rng)
        .into_iter()
        .map(|window_start| Event::prediction(EventKind::FalsePrediction { window_start }, lead))
        .collect())
}

fn sort_events(events: &mut [Event]) {
    events.sort_by(|a, b| {
        a.reveal_time
            .total_cmp(&b.reveal_time)
            .then(a.kind.rank().cmp(&b.kind.rank()))
    });
}

/// A time-ordered event list.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub events: Vec<Event>,
    /// Events are complete up to this reveal time.
    pub horizon: f64,
    pub seed: u64,
    fault_times: Vec<f64>,
    fault_predicted: Vec<bool>,
}

impl Trace {
    pub fn new(mut events: Vec<Event>, horizon: f64, seed: u64) -> Self {
        sort_events(&mut events);
        let mut faults: Vec<(f64, bool)> = events
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::UnpredictedFault { fault_time } => Some((fault_time, false)),
                EventKind::TruePrediction { fault_time, .. } => Some((fault_time, true)),
                EventKind::FalsePrediction { .. } => None,
            })
            .collect();
        faults.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (fault_times, fault_predicted) = faults.into_iter().unzip();
        Trace {
            events,
            horizon,
            seed,
            fault_times,
            fault_predicted,
        }
    }

    /// A trace without any event.
    pub fn empty(horizon: f64) -> Self {
        Trace::new(Vec::new(), horizon, 0)
    }

    /// Dates at which faults strike, predicted or not, sorted.
    pub fn fault_times(&self) -> &[f64] {
        &self.fault_times
    }

    /// For each entry of [`Trace::fault_times`], whether it was predicted.
    pub fn fault_predicted(&self) -> &[bool] {
        &self.fault_predicted
    }

    /// Prediction events (true and false), in reveal order.
    pub fn predictions(&self) -> impl Iterator<Item = &Event> {
        self.events
            .iter()
            .filter(|e| !matches!(e.kind, EventKind::UnpredictedFault { .. }))
    }

    pub fn count(&self) -> EventCounts {
        let mut counts = EventCounts::default();
        for e in &self.events {
            match e.kind {
                EventKind::UnpredictedFault { .. } => counts.unpredicted += 1,
                EventKind::TruePrediction { .. } => counts.true_predictions += 1,
                EventKind::FalsePrediction { .. } => counts.false_predictions += 1,
            }
        }
        counts
    }

    /// Write the line-oriented text form.
    pub fn dump(&self, path: &Path, config_hash: &str) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
        out.write_all(self.to_text(config_hash).as_bytes())
            .map_err(io)?;
        out.flush().map_err(io)
    }

    /// Text form: a `#` header with seed, config hash and horizon, then one
    /// `reveal_time kind window_start fault_time` line per event with `-`
    /// for absent fields and an optional trailing `clipped`.
    pub fn to_text(&self, config_hash: &str) -> String {
        let mut s = format!(
            "# seed={} config={} horizon={:?}\n",
            self.seed, config_hash, self.horizon
        );
        for e in &self.events {
            let (tag, ws, ft) = match e.kind {
                EventKind::UnpredictedFault { fault_time } => ("U", None, Some(fault_time)),
                EventKind::TruePrediction {
                    window_start,
                    fault_time,
                } => ("T", Some(window_start), Some(fault_time)),
                EventKind::FalsePrediction { window_start } => ("F", Some(window_start), None),
            };
            let field = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:?}"));
            s.push_str(&format!(
                "{:?} {tag} {} {}",
                e.reveal_time,
                field(ws),
                field(ft)
            ));
            if e.clipped {
                s.push_str(" clipped");
            }
            s.push('\n');
        }
        s
    }

    pub fn load(path: &Path) -> Result<(Trace, String)> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Trace::from_text(&text)
    }

    /// Parse [`Trace::to_text`] output; returns the trace and its config hash.
    pub fn from_text(text: &str) -> Result<(Trace, String)> {
        let bad = |line: usize, what: &str| Error::Config(format!("trace line {line}: {what}"));
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| bad(1, "missing header"))?;
        let mut seed = None;
        let mut hash = None;
        let mut horizon = None;
        for field in header.trim_start_matches('#').split_whitespace() {
            match field.split_once('=') {
                Some(("seed", v)) => seed = v.parse::<u64>().ok(),
                Some(("config", v)) => hash = Some(v.to_string()),
                Some(("horizon", v)) => horizon = v.parse::<f64>().ok(),
                _ => {}
            }
        }
        let (Some(seed), Some(hash), Some(horizon)) = (seed, hash, horizon) else {
            return Err(bad(1, "header needs seed, config and horizon"));
        };
        let mut events = Vec::new();
        for (k, line) in lines {
            let n = k + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() < 4 {
                return Err(bad(n, "expected 4 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad number"));
            let reveal_time = num(fields[0])?;
            let kind = match fields[1] {
                "U" => EventKind::UnpredictedFault {
                    fault_time: num(fields[3])?,
                },
                "T" => EventKind::TruePrediction {
                    window_start: num(fields[2])?,
                    fault_time: num(fields[3])?,
                },
                "F" => EventKind::FalsePrediction {
                    window_start: num(fields[2])?,
                },
                _ => return Err(bad(n, "unknown event kind")),
            };
            events.push(Event {
                reveal_time,
                kind,
                clipped: fields.get(4) == Some(&"clipped"),
            });
        }
        Ok((Trace::new(events, horizon, seed), hash))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventCounts {
    pub unpredicted: usize,
    pub true_predictions: usize,
    pub false_predictions: usize,
}

/// Merge the three event streams into one trace sorted by reveal time; ties
/// go unpredicted fault < true prediction < false prediction.
pub fn merge(
    true_events: Vec<Event>,
    false_events: Vec<Event>,
    unpredicted: Vec<Event>,
    horizon: f64,
    seed: u64,
) -> Trace {
    let mut events = unpredicted;
    events.extend(true_events);
    events.extend(false_events);
    Trace::new(events, horizon, seed)
}

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Faults = 0,
    Labels = 1,
    Windows = 2,
    FalsePredictions = 3,
    /// Per-prediction trust decisions, drawn by the simulator.
    Trust = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// How platform fault dates are produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FaultModel {
    /// One renewal process with mean μ for the whole platform.
    Platform,
    /// Superposition of N component processes with mean μ_ind, with the job
    /// starting when every component is `burn_in_years` old.
    PerComponent { burn_in_years: f64 },
}

/// Everything needed to generate a trace, apart from the seed and horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub platform: Platform,
    pub predictor: Predictor,
    pub faults: DistKind,
    pub false_predictions: FalsePredictionLaw,
    pub fault_model: FaultModel,
}

impl TraceConfig {
    /// Short stable hash identifying the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("trace config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Arrival dates of a stream whose platform-level mean inter-arrival is
    /// `platform_mean`, produced according to the fault model.
    fn arrivals<R: Rng + ?Sized>(
        &self,
        kind: DistKind,
        platform_mean: f64,
        horizon: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        match (self.fault_model, kind) {
            (FaultModel::PerComponent { burn_in_years }, DistKind::Weibull { .. }) => {
                if !(burn_in_years >= 0.0) {
                    return Err(Error::invalid(
                        "burn_in_years",
                        burn_in_years,
                        "must be >= 0",
                    ));
                }
                let n = self.platform.n_procs;
                let dist = FaultDistribution::new(kind, platform_mean * n as f64)?;
                Ok(superposed_fault_times(
                    &dist,
                    n,
                    burn_in_years * SECONDS_PER_YEAR,
                    horizon,
                    rng,
                ))
            }
            // A superposition of Poisson processes is a Poisson process, and a
            // uniform law is only used as a platform-level stream.
            _ => {
                let dist = FaultDistribution::new(kind, platform_mean)?;
                Ok(gen_fault_times(&dist, horizon, rng))
            }
        }
    }

    /// Rough platform MTBF seen by the job: for aged Weibull components the
    /// instantaneous fault rate at the start of observation can be far from
    /// 1/μ. Only used to size traces.
    pub fn effective_mtbf(&self) -> f64 {
        let mu = self.platform.mtbf();
        match (self.fault_model, self.faults) {
            (FaultModel::PerComponent { burn_in_years }, DistKind::Weibull { shape })
                if burn_in_years > 0.0 =>
            {
                let age = burn_in_years * SECONDS_PER_YEAR;
                let scale = weibull_scale(self.platform.mu_ind, shape);
                let hazard = shape / scale * (age / scale).powf(shape - 1.0);
                mu.min(1.0 / (hazard * self.platform.n_procs as f64))
            }
            _ => mu,
        }
    }

    /// Fault dates up to `horizon`, from the fault sub-stream of `seed`.
    pub fn fault_times(&self, horizon: f64, seed: u64) -> Result<Vec<f64>> {
        self.arrivals(
            self.faults,
            self.platform.mtbf(),
            horizon,
            &mut stream_rng(seed, Stream::Faults),
        )
    }

    /// False predictions up to `horizon`, produced like the faults (or by a
    /// uniform renewal process) with mean `p μ / (r (1 − p))`.
    fn false_predictions(&self, horizon: f64, seed: u64) -> Result<Vec<Event>> {
        let Some(mean) = false_prediction_mean(self.platform.mtbf(), &self.predictor) else {
            return Ok(Vec::new());
        };
        let kind = match self.false_predictions {
            FalsePredictionLaw::Same => self.faults,
            FalsePredictionLaw::Uniform => DistKind::Uniform,
        };
        let lead = self.platform.c_proactive;
        let mut rng = stream_rng(seed, Stream::FalsePredictions);
        Ok(self
            .arrivals(kind, mean, horizon + lead, &mut rng)?
            .into_iter()
            .map(|window_start| {
                Event::prediction(EventKind::FalsePrediction { window_start }, lead)
            })
            .collect())
    }

    /// Generate a trace whose events are complete up to `horizon`.
    pub fn generate(&self, horizon: f64, seed: u64) -> Result<Trace> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("horizon", horizon, "must be finite and > 0"));
        }
        self.platform.validate()?;
        self.predictor.validate()?;
        let lead = self.platform.c_proactive;
        let i_window = self.predictor.window;
        // A fault up to I + Cp past the horizon may be revealed before it.
        let faults = self.fault_times(horizon + i_window + lead, seed)?;
        let (predicted, unpredicted) = label_predicted(
            &faults,
            self.predictor.recall,
            &mut stream_rng(seed, Stream::Labels),
        );
        let true_events = attach_windows(
            &predicted,
            i_window,
            lead,
            &mut stream_rng(seed, Stream::Windows),
        );
        let false_events = self.false_predictions(horizon, seed)?;
        let unpredicted = unpredicted.into_iter().map(Event::unpredicted).collect();
        let mut events = merge(true_events, false_events, unpredicted, horizon, seed).events;
        events.retain(|e| e.reveal_time <= horizon);
        Ok(Trace::new(events, horizon, seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mean_of(dist: &FaultDistribution, n: usize, seed: u64) -> f64 {
        let mut rng = stream_rng(seed, Stream::Faults);
        (0..n)
            .map(|_| sample_interarrival(dist, &mut rng))
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn weibull_scale_values() {
        assert!((weibull_scale(10.0, 1.0) - 10.0).abs() < 1e-12);
        assert!((weibull_scale(10.0, 0.5) - 5.0).abs() < 1e-12);
        // Γ(1 + 1/0.7) = 1.26582...
        assert!((weibull_scale(1.0, 0.7) - 1.0 / 1.265_823_1).abs() < 1e-6);
    }

    #[test]
    fn sample_means() {
        let n = 1_000_000;
        for dist in [
            FaultDistribution::exponential(240_600.0).unwrap(),
            FaultDistribution::weibull(0.7, 240_600.0).unwrap(),
            FaultDistribution::weibull(0.5, 240_600.0).unwrap(),
            FaultDistribution::new(DistKind::Uniform, 240_600.0).unwrap(),
        ] {
            let m = mean_of(&dist, n, 7);
            assert!((m / 240_600.0 - 1.0).abs() < 0.01, "{:?}: {m}", dist.kind());
        }
    }

    #[test]
    fn weibull_one_is_exponential() {
        let w = FaultDistribution::weibull(1.0, 500.0).unwrap();
        let e = FaultDistribution::exponential(500.0).unwrap();
        let mut a = stream_rng(3, Stream::Faults);
        let mut b = stream_rng(3, Stream::Faults);
        for _ in 0..1000 {
            let (x, y) = (
                sample_interarrival(&w, &mut a),
                sample_interarrival(&e, &mut b),
            );
            assert!((x - y).abs() <= 1e-9 * y.max(1.0));
        }
    }

    #[test]
    fn renewal_counts() {
        let dist = FaultDistribution::exponential(100.0).unwrap();
        let mut rng = stream_rng(11, Stream::Faults);
        assert!(gen_fault_times(&dist, 1e-9, &mut rng).is_empty());
        let times = gen_fault_times(&dist, 1e6, &mut stream_rng(11, Stream::Faults));
        let expected = 1e4;
        assert!((times.len() as f64 - expected).abs() < 3.0 * expected.sqrt());
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(
            times,
            gen_fault_times(&dist, 1e6, &mut stream_rng(11, Stream::Faults))
        );
    }

    #[test]
    fn superposition_of_exponentials_has_platform_rate() {
        let dist = FaultDistribution::exponential(1e6).unwrap();
        let times =
            superposed_fault_times(&dist, 100, 0.0, 1e7, &mut stream_rng(5, Stream::Faults));
        let expected = 1e7 / 1e4;
        assert!((times.len() as f64 - expected).abs() < 4.0 * expected.sqrt());
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn superposition_is_prefix_stable() {
        let dist = FaultDistribution::weibull(0.7, 1e6).unwrap();
        let short = superposed_fault_times(&dist, 64, 5e4, 1e6, &mut stream_rng(9, Stream::Faults));
        let long = superposed_fault_times(&dist, 64, 5e4, 4e6, &mut stream_rng(9, Stream::Faults));
        assert!(!short.is_empty());
        assert_eq!(short[..], long[..short.len()]);
    }

    #[test]
    fn labels() {
        let faults: Vec<f64> = (0..100_000).map(f64::from).collect();
        let mut rng = stream_rng(1, Stream::Labels);
        let (p, u) = label_predicted(&faults, 0.0, &mut rng);
        assert!(p.is_empty() && u.len() == faults.len());
        let (p, u) = label_predicted(&faults, 1.0, &mut rng);
        assert!(u.is_empty() && p.len() == faults.len());
        let (p, _) = label_predicted(&faults, 0.85, &mut rng);
        let frac = p.len() as f64 / faults.len() as f64;
        assert!((0.84..=0.86).contains(&frac), "{frac}");
    }

    #[test]
    fn windows_are_uniform() {
        let faults: Vec<f64> = (1..=100_000).map(|k| k as f64 * 1e4).collect();
        let events = attach_windows(&faults, 3000.0, 600.0, &mut stream_rng(2, Stream::Windows));
        let mut offset_sum = 0.0;
        for e in &events {
            let EventKind::TruePrediction {
                window_start,
                fault_time,
            } = e.kind
            else {
                panic!("unexpected kind");
            };
            assert!(window_start <= fault_time && fault_time <= window_start + 3000.0);
            assert_eq!(e.reveal_time, window_start - 600.0);
            offset_sum += fault_time - window_start;
        }
        let mean = offset_sum / events.len() as f64;
        assert!((mean / 1500.0 - 1.0).abs() < 0.01, "{mean}");
        // Degenerate window: exact-date prediction.
        let exact = attach_windows(&[5e3], 0.0, 600.0, &mut stream_rng(2, Stream::Windows));
        assert_eq!(exact[0].kind.window_start(), Some(5e3));
    }

    #[test]
    fn early_predictions_are_clipped() {
        let events = attach_windows(&[100.0], 50.0, 600.0, &mut stream_rng(2, Stream::Windows));
        assert!(events[0].clipped);
        assert_eq!(events[0].reveal_time, 0.0);
    }

    #[test]
    fn false_prediction_means() {
        let accurate = Predictor::new(0.82, 0.85, 300.0).unwrap();
        let mean = false_prediction_mean(240_600.0, &accurate).unwrap();
        assert!((mean - 1_289_490.196).abs() < 1.0, "{mean}");
        let weak = Predictor::new(0.4, 0.7, 300.0).unwrap();
        let mean = false_prediction_mean(7500.0, &weak).unwrap();
        assert!((mean - 7142.857).abs() < 1e-3);

        let perfect = Predictor::new(1.0, 0.85, 300.0).unwrap();
        let mut rng = stream_rng(4, Stream::FalsePredictions);
        assert!(
            gen_false_predictions(DistKind::Exponential, 1e3, &perfect, 60.0, 1e9, &mut rng)
                .unwrap()
                .is_empty()
        );
        let blind = Predictor::new(0.5, 0.0, 300.0).unwrap();
        assert!(
            gen_false_predictions(DistKind::Exponential, 1e3, &blind, 60.0, 1e9, &mut rng)
                .unwrap()
                .is_empty()
        );

        let events = gen_false_predictions(
            DistKind::Exponential,
            240_600.0,
            &accurate,
            600.0,
            2e10,
            &mut rng,
        )
        .unwrap();
        let empirical = 2e10 / events.len() as f64;
        assert!(
            (empirical / 1_289_490.196 - 1.0).abs() < 0.02,
            "{empirical}"
        );
    }

    #[test]
    fn merge_orders_ties_by_kind() {
        let u = vec![Event::unpredicted(10.0)];
        let t = vec![Event {
            reveal_time: 10.0,
            kind: EventKind::TruePrediction {
                window_start: 20.0,
                fault_time: 25.0,
            },
            clipped: false,
        }];
        let f = vec![Event {
            reveal_time: 10.0,
            kind: EventKind::FalsePrediction { window_start: 20.0 },
            clipped: false,
        }];
        let trace = merge(f.clone(), t.clone(), u.clone(), 100.0, 0);
        let ranks: Vec<u8> = trace.events.iter().map(|e| e.kind.rank()).collect();
        assert_eq!(ranks, vec![0, 1, 2]);
        assert_eq!(trace.fault_times(), &[10.0, 25.0]);
        let only = merge(Vec::new(), Vec::new(), u.clone(), 100.0, 0);
        assert_eq!(only.events, u);
    }

    fn accurate_config(n_procs: u64, faults: DistKind, fault_model: FaultModel) -> TraceConfig {
        TraceConfig {
            platform: Platform::new(n_procs, 125.0 * SECONDS_PER_YEAR, 600.0, 600.0, 60.0, 600.0)
                .unwrap(),
            predictor: Predictor::new(0.82, 0.85, 600.0).unwrap(),
            faults,
            false_predictions: FalsePredictionLaw::Same,
            fault_model,
        }
    }

    #[test]
    fn recall_and_precision_are_recovered() {
        let cfg = accurate_config(1 << 16, DistKind::Exponential, FaultModel::Platform);
        let trace = cfg.generate(3e9, 17).unwrap();
        let c = trace.count();
        let recall = c.true_predictions as f64 / (c.true_predictions + c.unpredicted) as f64;
        let precision =
            c.true_predictions as f64 / (c.true_predictions + c.false_predictions) as f64;
        assert!((recall - 0.85).abs() < 0.02 * 0.85, "{recall}");
        assert!((precision - 0.82).abs() < 0.02 * 0.82, "{precision}");
        let mu = cfg.platform.mtbf();
        let rate_events = 0.15 / mu + 0.85 / (0.82 * mu);
        let empirical = trace.events.len() as f64 / 3e9;
        assert!((empirical / rate_events - 1.0).abs() < 0.02);
    }

    #[test]
    fn generation_is_reproducible_and_prefix_stable() {
        let cfg = accurate_config(
            1 << 12,
            DistKind::Weibull { shape: 0.7 },
            FaultModel::PerComponent { burn_in_years: 1.0 },
        );
        let a = cfg.generate(5e7, 99).unwrap();
        let b = cfg.generate(5e7, 99).unwrap();
        assert_eq!(a.to_text(&cfg.hash()), b.to_text(&cfg.hash()));
        let long = cfg.generate(2e8, 99).unwrap();
        assert!(!a.events.is_empty());
        assert_eq!(a.events[..], long.events[..a.events.len()]);
        assert_ne!(a, cfg.generate(5e7, 100).unwrap());
    }

    #[test]
    fn windows_do_not_perturb_faults() {
        let mut cfg = accurate_config(1 << 16, DistKind::Exponential, FaultModel::Platform);
        let a = cfg.generate(1e8, 5).unwrap();
        cfg.predictor.window = 3000.0;
        let b = cfg.generate(1e8, 5).unwrap();
        let faults = |t: &Trace| {
            t.fault_times()
                .iter()
                .copied()
                .filter(|&x| x < 9e7)
                .collect::<Vec<_>>()
        };
        assert_eq!(faults(&a), faults(&b));
    }

    #[test]
    fn text_round_trip() {
        let cfg = accurate_config(
            1 << 16,
            DistKind::Weibull { shape: 0.5 },
            FaultModel::Platform,
        );
        let trace = cfg.generate(2e7, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.txt");
        trace.dump(&path, &cfg.hash()).unwrap();
        let (back, hash) = Trace::load(&path).unwrap();
        assert_eq!(hash, cfg.hash());
        assert_eq!(back, trace);
        assert!(Trace::from_text("nonsense").is_err());
    }

    #[test]
    fn dist_kind_parsing() {
        assert_eq!("exp".parse::<DistKind>().unwrap(), DistKind::Exponential);
        assert_eq!(
            "Weibull:0.7".parse::<DistKind>().unwrap(),
            DistKind::Weibull { shape: 0.7 }
        );
        assert!("weibull:-1".parse::<DistKind>().is_err());
        assert!("gamma".parse::<DistKind>().is_err());
        let json = serde_json::to_string(&DistKind::Weibull { shape: 0.5 }).unwrap();
        assert_eq!(json, "\"weibull:0.5\"");
    }

    proptest! {
        #[test]
        fn merged_traces_are_sorted(
            a in prop::collection::vec(0.0f64..1e4, 0..50),
            b in prop::collection::vec(0.0f64..1e4, 0..50),
            c in prop::collection::vec(0.0f64..1e4, 0..50),
        ) {
            let truths: Vec<Event> = a.iter().map(|&t| Event {
                reveal_time: t,
                kind: EventKind::TruePrediction { window_start: t + 1.0, fault_time: t + 2.0 },
                clipped: false,
            }).collect();
            let falses: Vec<Event> = b.iter().map(|&t| Event {
                reveal_time: t,
                kind: EventKind::FalsePrediction { window_start: t + 1.0 },
                clipped: false,
            }).collect();
            let unpredicted: Vec<Event> = c.iter().map(|&t| Event::unpredicted(t)).collect();
            let trace = merge(truths, falses, unpredicted, 1e4, 0);
            prop_assert_eq!(trace.events.len(), a.len() + b.len() + c.len());
            for w in trace.events.windows(2) {
                let ordered = w[0].reveal_time < w[1].reveal_time
                    || (w[0].reveal_time == w[1].reveal_time && w[0].kind.rank() <= w[1].kind.rank());
                prop_assert!(ordered);
            }
        }
    }
}
