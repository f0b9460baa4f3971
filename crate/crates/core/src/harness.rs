//! Golden-run profiling, monitored faulted execution, and outcome
//! classification.
//!
//! A run builds a fresh kernel, optionally arms one fault, and drives the
//! scheduling loop until graceful shutdown, a kernel panic, or the forced
//! stop at the hang threshold. Run duration is measured by the harness's
//! own slot counter, which faults cannot reach, so a corrupted tick
//! counter can never masquerade as a hang.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::config::{Config, Thresholds};
use crate::injector::{self, FaultSpec, InjectionRecord, InjectorError};
use crate::kernel::{
    EventKind, Kernel, KernelEvent, KernelInitError, KernelPanic, PanicReason, SlotOutcome,
    TaskBodies, TaskKind,
};
use crate::targets::InjectionTarget;
use crate::workloads::{self, fnv1a64, VerifyOutcome, WorkloadId, WorkloadOutput};

/// Fault-free reference execution: timing baseline and expected outputs.
#[derive(Debug, Clone)]
pub struct GoldenProfile {
    pub total_ticks: u32,
    /// id -> (digest, completion tick)
    pub per_task: BTreeMap<WorkloadId, (u64, u32)>,
    pub event_digest: u64,
    pub events: Vec<KernelEvent>,
    pub start_event_index: usize,
}

#[derive(Debug, Error)]
pub enum GoldenFailure {
    #[error("golden run panicked: {0}")]
    Panic(KernelPanic),
    #[error("golden run exceeded its iteration guard")]
    Overrun,
    #[error("golden run never shut down")]
    NoShutdown,
    #[error("workload {0} produced no output in the golden run")]
    MissingOutput(String),
    #[error("kernel build failed: {0}")]
    Init(#[from] KernelInitError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed golden profile: {0}")]
    Malformed(String),
}

/// Seven-class run outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Outcome {
    Benign,
    Delay,
    Sdc,
    SdcDelay,
    Hang,
    Crash,
    Invalid,
}

pub const OUTCOMES: [Outcome; 7] = [
    Outcome::Benign,
    Outcome::Delay,
    Outcome::Sdc,
    Outcome::SdcDelay,
    Outcome::Hang,
    Outcome::Crash,
    Outcome::Invalid,
];

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Benign => "BENIGN",
            Outcome::Delay => "DELAY",
            Outcome::Sdc => "SDC",
            Outcome::SdcDelay => "SDC_DELAY",
            Outcome::Hang => "HANG",
            Outcome::Crash => "CRASH",
            Outcome::Invalid => "INVALID",
        }
    }

    /// Column label in the summary's totals table.
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Benign => "Benign",
            Outcome::Delay => "Delay",
            Outcome::Sdc => "SDC",
            Outcome::SdcDelay => "SDC (Delay)",
            Outcome::Hang => "Hang",
            Outcome::Crash => "Crash",
            Outcome::Invalid => "Invalid",
        }
    }

    pub fn parse(s: &str) -> Option<Outcome> {
        OUTCOMES.iter().copied().find(|o| o.as_str() == s)
    }

    pub fn index(&self) -> usize {
        OUTCOMES.iter().position(|o| o == self).unwrap()
    }
}

/// One classified run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub outcome: Outcome,
    pub run_ticks: u32,
    pub outputs: BTreeMap<WorkloadId, WorkloadOutput>,
    pub panic: Option<KernelPanic>,
    pub injection: Option<InjectionRecord>,
    pub timed_out: bool,
    pub outputs_match: bool,
    /// Event log, captured only when requested.
    pub events: Vec<KernelEvent>,
}

/// Builds a kernel with the five workload tasks registered.
pub fn build_system(cfg: &Config) -> Result<(Kernel, TaskBodies), KernelInitError> {
    let mut kernel = Kernel::init(&cfg.kernel)?;
    let mut bodies: TaskBodies = BTreeMap::new();
    for spec in workloads::workload_specs(&cfg.workloads) {
        let handle = kernel.task_create(spec.id.name(), spec.priority, TaskKind::User)?;
        bodies.insert(handle.0, workloads::build_body(&spec));
    }
    Ok((kernel, bodies))
}

fn digest_events(events: &[KernelEvent]) -> u64 {
    let mut text = String::new();
    for e in events {
        text.push_str(&e.line());
        text.push('\n');
    }
    fnv1a64(text.as_bytes())
}

/// Runs the workload mix with zero faults and freezes the reference
/// profile. Deterministic: repeated invocations yield identical profiles.
pub fn golden_run(cfg: &Config) -> Result<GoldenProfile, GoldenFailure> {
    let (mut kernel, mut bodies) = build_system(cfg)?;
    kernel.start();
    // generous guard, far above any sane golden duration
    let guard = 10_000_000u32;
    loop {
        if kernel.slot() >= guard {
            return Err(GoldenFailure::NoShutdown);
        }
        match kernel.step_slot(&mut bodies) {
            Ok(SlotOutcome::Continue) => {}
            Ok(SlotOutcome::Shutdown) => break,
            Ok(SlotOutcome::BodyOverrun) => return Err(GoldenFailure::Overrun),
            Err(p) => return Err(GoldenFailure::Panic(p)),
        }
    }
    let mut per_task = BTreeMap::new();
    for id in workloads::WORKLOAD_IDS {
        match kernel.outputs().get(id.name()) {
            Some((digest, tick)) => {
                per_task.insert(id, (*digest, *tick));
            }
            None => return Err(GoldenFailure::MissingOutput(id.name().into())),
        }
    }
    let events = kernel.events().to_vec();
    Ok(GoldenProfile {
        total_ticks: kernel.slot(),
        per_task,
        event_digest: digest_events(&events),
        start_event_index: kernel.start_event_index(),
        events,
    })
}

/// Seven-class classification with fixed precedence:
/// INVALID > CRASH > HANG > the correctness/timing matrix.
pub fn classify(
    run_ticks: u32,
    outputs_match: bool,
    panicked: bool,
    timed_out: bool,
    valid: bool,
    golden_ticks: u32,
    thresholds: &Thresholds,
) -> Outcome {
    if !valid {
        return Outcome::Invalid;
    }
    if panicked {
        return Outcome::Crash;
    }
    if timed_out {
        return Outcome::Hang;
    }
    let late = run_ticks as f64 > (1.0 + thresholds.delay_fraction) * golden_ticks as f64;
    match (outputs_match, late) {
        (true, false) => Outcome::Benign,
        (true, true) => Outcome::Delay,
        (false, false) => Outcome::Sdc,
        (false, true) => Outcome::SdcDelay,
    }
}

/// Executes one monitored run: build, arm, step to completion, classify.
/// Every failure mode becomes an outcome; nothing escapes.
pub fn execute_run(
    fault: Option<&FaultSpec>,
    catalog: &[InjectionTarget],
    golden: &GoldenProfile,
    cfg: &Config,
    keep_events: bool,
) -> Result<RunResult, InjectorError> {
    let (mut kernel, mut bodies) = match build_system(cfg) {
        Ok(v) => v,
        Err(e) => {
            // an unbuildable kernel is a config defect, not a run outcome
            panic!("kernel build failed inside run: {e}");
        }
    };
    if let Some(spec) = fault {
        kernel.arm_fault(injector::arm(spec, catalog)?);
    }
    kernel.start();

    let thresholds = &cfg.campaign.thresholds;
    let hang_limit = (thresholds.hang_multiplier * golden.total_ticks as f64).ceil() as u32;
    let mut panic: Option<KernelPanic> = None;
    let mut timed_out = false;
    loop {
        if kernel.slot() >= hang_limit {
            timed_out = true;
            break;
        }
        match kernel.step_slot(&mut bodies) {
            Ok(SlotOutcome::Continue) => {}
            Ok(SlotOutcome::Shutdown) => break,
            Ok(SlotOutcome::BodyOverrun) => {
                timed_out = true;
                break;
            }
            Err(p) => {
                panic = Some(p);
                break;
            }
        }
    }

    // a traversal overrun may optionally classify as HANG instead of CRASH
    if cfg.kernel.overrun_as_hang {
        if let Some(p) = &panic {
            if p.reason == PanicReason::TraversalOverrun {
                timed_out = true;
                panic = None;
            }
        }
    }

    let run_ticks = kernel.slot();
    let mut outputs = BTreeMap::new();
    for id in workloads::WORKLOAD_IDS {
        if let Some((digest, tick)) = kernel.outputs().get(id.name()) {
            outputs.insert(
                id,
                WorkloadOutput {
                    id,
                    digest: *digest,
                    completion_tick: *tick,
                },
            );
        }
    }
    let outputs_match = matches!(
        workloads::verify_outputs(&outputs, &golden.per_task),
        Ok(VerifyOutcome::Match)
    );

    let injection = match (fault, kernel.fired()) {
        (Some(spec), Some(f)) => Some(InjectionRecord {
            spec: spec.clone(),
            applied_tick: f.applied_tick,
            applied_event: f.applied_event,
            pre_bit: f.pre_bit,
            post_bit: f.post_bit,
            valid: f.valid,
            validity_reason: f.validity_reason.clone(),
        }),
        _ => None,
    };
    let valid = injection.as_ref().is_none_or(|r| r.valid);

    let outcome = classify(
        run_ticks,
        outputs_match,
        panic.is_some(),
        timed_out,
        valid,
        golden.total_ticks,
        thresholds,
    );

    Ok(RunResult {
        outcome,
        run_ticks,
        outputs,
        panic,
        injection,
        timed_out,
        outputs_match,
        events: if keep_events {
            kernel.events().to_vec()
        } else {
            Vec::new()
        },
    })
}

// ---------------------------------------------------------------------
// run log
// ---------------------------------------------------------------------

/// Serializes one run: header (fault spec, seed), event lines, trailer
/// (outcome, ticks, panic reason, classification inputs).
pub fn format_run_log(run: &RunResult, golden_ticks: u32, seed: u64) -> String {
    let mut out = String::new();
    match &run.injection {
        Some(r) => {
            let stuck = match r.spec.stuck_value {
                Some(v) => v.to_string(),
                None => "flip".to_string(),
            };
            let _ = writeln!(
                out,
                "fault target={} byte={} bit={} type={} stuck={} at={}:{}",
                r.spec.target, r.spec.byte_off, r.spec.bit_off, r.spec.fault_type, stuck,
                r.spec.t_tick, r.spec.t_event
            );
            let _ = writeln!(
                out,
                "applied at={}:{} pre_bit={} post_bit={} valid={} reason={}",
                r.applied_tick, r.applied_event, r.pre_bit, r.post_bit, r.valid, r.validity_reason
            );
        }
        None => {
            let _ = writeln!(out, "fault none");
        }
    }
    let _ = writeln!(out, "seed {seed}");
    for e in &run.events {
        let _ = writeln!(out, "{}", e.line());
    }
    let _ = writeln!(out, "outcome {}", run.outcome.as_str());
    let _ = writeln!(out, "run_ticks {}", run.run_ticks);
    let _ = writeln!(out, "golden_ticks {golden_ticks}");
    let _ = writeln!(
        out,
        "panic {}",
        run.panic
            .as_ref()
            .map(|p| p.reason.as_str())
            .unwrap_or("none")
    );
    let _ = writeln!(out, "outputs_match {}", run.outputs_match);
    let _ = writeln!(out, "timed_out {}", run.timed_out);
    let _ = writeln!(
        out,
        "valid {}",
        run.injection.as_ref().is_none_or(|r| r.valid)
    );
    out
}

pub fn write_run_log(path: &Path, run: &RunResult, golden_ticks: u32, seed: u64) -> std::io::Result<()> {
    std::fs::write(path, format_run_log(run, golden_ticks, seed))
}

/// Re-derives the outcome from a serialized log's trailer. Used to check
/// that a stored log round-trips through classification.
pub fn replay_log_classification(log: &str, thresholds: &Thresholds) -> Option<Outcome> {
    let mut run_ticks = None;
    let mut golden_ticks = None;
    let mut panicked = None;
    let mut outputs_match = None;
    let mut timed_out = None;
    let mut valid = None;
    for line in log.lines() {
        if let Some(v) = line.strip_prefix("run_ticks ") {
            run_ticks = v.parse().ok();
        } else if let Some(v) = line.strip_prefix("golden_ticks ") {
            golden_ticks = v.parse().ok();
        } else if let Some(v) = line.strip_prefix("panic ") {
            panicked = Some(v != "none");
        } else if let Some(v) = line.strip_prefix("outputs_match ") {
            outputs_match = v.parse().ok();
        } else if let Some(v) = line.strip_prefix("timed_out ") {
            timed_out = v.parse().ok();
        } else if let Some(v) = line.strip_prefix("valid ") {
            valid = v.parse().ok();
        }
    }
    Some(classify(
        run_ticks?,
        outputs_match?,
        panicked?,
        timed_out?,
        valid?,
        golden_ticks?,
        thresholds,
    ))
}

// ---------------------------------------------------------------------
// golden profile file format
// ---------------------------------------------------------------------

impl GoldenProfile {
    /// Plain-text serialization; byte-identical across repeated golden runs.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format 1");
        let _ = writeln!(out, "total_ticks {}", self.total_ticks);
        let _ = writeln!(out, "event_digest {:016x}", self.event_digest);
        let _ = writeln!(out, "start_event_index {}", self.start_event_index);
        for (id, (digest, tick)) in &self.per_task {
            let _ = writeln!(out, "task {} digest={digest:016x} completion_tick={tick}", id.name());
        }
        for e in &self.events {
            let _ = writeln!(out, "event {}", e.line());
        }
        out
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn from_text(text: &str) -> Result<GoldenProfile, GoldenFailure> {
        let mut total_ticks = None;
        let mut event_digest = None;
        let mut start_event_index = None;
        let mut per_task = BTreeMap::new();
        let mut events = Vec::new();
        let mut ticks_seen: BTreeMap<u32, u32> = BTreeMap::new();
        for line in text.lines() {
            if let Some(v) = line.strip_prefix("total_ticks ") {
                total_ticks = v.parse().ok();
            } else if let Some(v) = line.strip_prefix("event_digest ") {
                event_digest = u64::from_str_radix(v, 16).ok();
            } else if let Some(v) = line.strip_prefix("start_event_index ") {
                start_event_index = v.parse().ok();
            } else if let Some(v) = line.strip_prefix("task ") {
                let mut parts = v.split_whitespace();
                let name = parts
                    .next()
                    .ok_or_else(|| GoldenFailure::Malformed("task line".into()))?;
                let id = WorkloadId::from_name(name)
                    .ok_or_else(|| GoldenFailure::Malformed(format!("workload `{name}`")))?;
                let mut digest = None;
                let mut tick = None;
                for p in parts {
                    if let Some(d) = p.strip_prefix("digest=") {
                        digest = u64::from_str_radix(d, 16).ok();
                    } else if let Some(t) = p.strip_prefix("completion_tick=") {
                        tick = t.parse().ok();
                    }
                }
                per_task.insert(
                    id,
                    (
                        digest.ok_or_else(|| GoldenFailure::Malformed("task digest".into()))?,
                        tick.ok_or_else(|| GoldenFailure::Malformed("task tick".into()))?,
                    ),
                );
            } else if let Some(v) = line.strip_prefix("event ") {
                let event = parse_event_line(v)
                    .ok_or_else(|| GoldenFailure::Malformed(format!("event `{v}`")))?;
                let idx = ticks_seen.entry(event.0).or_insert(0);
                events.push(KernelEvent {
                    tick: event.0,
                    index: *idx,
                    kind: event.1,
                    task: event.2,
                    detail: event.3,
                });
                *idx += 1;
            }
        }
        Ok(GoldenProfile {
            total_ticks: total_ticks
                .ok_or_else(|| GoldenFailure::Malformed("missing total_ticks".into()))?,
            per_task,
            event_digest: event_digest
                .ok_or_else(|| GoldenFailure::Malformed("missing event_digest".into()))?,
            events,
            start_event_index: start_event_index
                .ok_or_else(|| GoldenFailure::Malformed("missing start_event_index".into()))?,
        })
    }

    pub fn load(path: &Path) -> Result<GoldenProfile, GoldenFailure> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }
}

fn parse_event_line(line: &str) -> Option<(u32, EventKind, String, String)> {
    let rest = line.strip_prefix("tick=")?;
    let (tick, rest) = rest.split_once(" kind=")?;
    let (kind, rest) = rest.split_once(" task=")?;
    let (task, detail) = rest.split_once(" detail=")?;
    Some((
        tick.parse().ok()?,
        EventKind::parse(kind)?,
        task.to_string(),
        detail.to_string(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;

    fn cfg() -> Config {
        Config::default()
    }

    #[test]
    fn golden_run_is_deterministic() {
        let a = golden_run(&cfg()).unwrap();
        let b = golden_run(&cfg()).unwrap();
        assert_eq!(a.event_digest, b.event_digest);
        assert_eq!(a.total_ticks, b.total_ticks);
        assert_eq!(a.per_task, b.per_task);
        assert_eq!(a.per_task.len(), 5);
        assert!(a.total_ticks > 0);
        let max_completion = a.per_task.values().map(|(_, t)| *t).max().unwrap();
        assert!(a.total_ticks >= max_completion);
    }

    #[test]
    fn golden_profile_round_trips_through_text() {
        let a = golden_run(&cfg()).unwrap();
        let text = a.to_text();
        let b = GoldenProfile::from_text(&text).unwrap();
        assert_eq!(b.total_ticks, a.total_ticks);
        assert_eq!(b.per_task, a.per_task);
        assert_eq!(b.event_digest, a.event_digest);
        assert_eq!(b.start_event_index, a.start_event_index);
        assert_eq!(b.events.len(), a.events.len());
        for (x, y) in a.events.iter().zip(b.events.iter()) {
            assert_eq!(x.line(), y.line());
            assert_eq!(x.index, y.index);
        }
        assert_eq!(b.to_text(), text);
    }

    #[test]
    fn classify_matrix() {
        let t = Thresholds::default();
        // 4% deviation is on time at the 5% threshold
        assert_eq!(classify(1040, true, false, false, true, 1000, &t), Outcome::Benign);
        assert_eq!(classify(1060, true, false, false, true, 1000, &t), Outcome::Delay);
        assert_eq!(classify(1060, false, false, false, true, 1000, &t), Outcome::SdcDelay);
        assert_eq!(classify(1000, false, false, false, true, 1000, &t), Outcome::Sdc);
        assert_eq!(classify(3000, true, false, true, true, 1000, &t), Outcome::Hang);
        assert_eq!(classify(500, true, true, false, true, 1000, &t), Outcome::Crash);
        // precedence: invalid beats everything
        assert_eq!(classify(500, false, true, true, false, 1000, &t), Outcome::Invalid);
        // crash beats hang
        assert_eq!(classify(3000, false, true, true, true, 1000, &t), Outcome::Crash);
    }

    #[test]
    fn classification_is_total_and_exclusive() {
        let t = Thresholds::default();
        for valid in [false, true] {
            for panicked in [false, true] {
                for timed_out in [false, true] {
                    for m in [false, true] {
                        for ticks in [900, 1000, 1049, 1051, 2999] {
                            let o = classify(ticks, m, panicked, timed_out, valid, 1000, &t);
                            // exactly one outcome, and precedence respected
                            if !valid {
                                assert_eq!(o, Outcome::Invalid);
                            } else if panicked {
                                assert_eq!(o, Outcome::Crash);
                            } else if timed_out {
                                assert_eq!(o, Outcome::Hang);
                            } else {
                                assert!(matches!(
                                    o,
                                    Outcome::Benign | Outcome::Delay | Outcome::Sdc | Outcome::SdcDelay
                                ));
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn monotone_timing_rule() {
        let t = Thresholds::default();
        let mut prev_delay = false;
        for ticks in 1000..1200 {
            let o = classify(ticks, true, false, false, true, 1000, &t);
            let is_delay = o == Outcome::Delay;
            if prev_delay {
                assert!(is_delay, "timing classification regressed at {ticks}");
            }
            prev_delay = is_delay;
        }
    }

    #[test]
    fn null_fault_run_is_benign_and_exact() {
        let config = cfg();
        let golden = golden_run(&config).unwrap();
        let catalog = {
            let (kernel, _) = build_system(&config).unwrap();
            crate::targets::gather_targets(&kernel)
        };
        let run = execute_run(None, &catalog, &golden, &config, true).unwrap();
        assert_eq!(run.outcome, Outcome::Benign);
        assert_eq!(run.run_ticks, golden.total_ticks);
        // log ends with the shutdown event before the trailer
        let last = run.events.last().unwrap();
        assert_eq!(last.kind, EventKind::Shutdown);
    }

    #[test]
    fn run_log_round_trips_through_classify() {
        let config = cfg();
        let golden = golden_run(&config).unwrap();
        let catalog = {
            let (kernel, _) = build_system(&config).unwrap();
            crate::targets::gather_targets(&kernel)
        };
        let run = execute_run(None, &catalog, &golden, &config, true).unwrap();
        let log = format_run_log(&run, golden.total_ticks, 1);
        let replayed = replay_log_classification(&log, &config.campaign.thresholds).unwrap();
        assert_eq!(replayed, run.outcome);
    }
}
