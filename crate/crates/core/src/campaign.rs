//! Campaign planning, parallel execution, and aggregation.
//!
//! Sample sizes come from binomial proportion estimation with a
//! configurable normal-cutoff table. Runs are distributed over isolated
//! worker threads and aggregated by plan index, so per-run outcomes are
//! independent of worker count and completion order.

use std::panic::AssertUnwindSafe;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;

use crate::config::{Config, FaultType};
use crate::harness::{self, GoldenProfile, Outcome};
use crate::injector::{self, FaultSpec, InjectionWindow, InjectorError};
use crate::targets::{InjectionTarget, TargetCategory};

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("worker failed at plan index {run_id} ({completed} runs completed): {detail}")]
    WorkerFailure {
        run_id: u64,
        completed: usize,
        detail: String,
    },
    #[error(transparent)]
    Injector(#[from] InjectorError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Conventional two-decimal normal cutoffs per confidence level.
pub const DEFAULT_CUTOFFS: [(f64, f64); 7] = [
    (0.80, 1.28),
    (0.90, 1.64),
    (0.95, 1.96),
    (0.98, 2.33),
    (0.99, 2.58),
    (0.995, 2.81),
    (0.999, 3.29),
];

pub fn normal_cutoff(confidence: f64) -> Result<f64, CampaignError> {
    normal_cutoff_from(&DEFAULT_CUTOFFS, confidence)
}

pub fn normal_cutoff_from(table: &[(f64, f64)], confidence: f64) -> Result<f64, CampaignError> {
    table
        .iter()
        .find(|(c, _)| (c - confidence).abs() < 1e-9)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            CampaignError::InvalidParameter(format!(
                "no cutoff tabulated for confidence {confidence}"
            ))
        })
}

/// Binomial-proportion sample size. `population` of `None` treats the
/// fault space as effectively infinite: n = ceil(t^2 p(1-p) / e^2).
/// A finite population applies the standard correction.
pub fn compute_sample_size(
    confidence: f64,
    margin: f64,
    p: f64,
    population: Option<u64>,
) -> Result<u64, CampaignError> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(CampaignError::InvalidParameter(
            "margin must satisfy 0 < e < 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(CampaignError::InvalidParameter(
            "p must satisfy 0 <= p <= 1".into(),
        ));
    }
    let t = normal_cutoff(confidence)?;
    let variance = p * (1.0 - p);
    if variance == 0.0 {
        return Ok(1);
    }
    let infinite = (t * t * variance) / (margin * margin);
    match population {
        None => Ok(infinite.ceil() as u64),
        Some(n) => {
            if n == 0 {
                return Err(CampaignError::InvalidParameter(
                    "population must be positive".into(),
                ));
            }
            let nf = n as f64;
            let corrected = nf / (1.0 + (margin * margin * (nf - 1.0)) / (t * t * variance));
            Ok(corrected.ceil() as u64)
        }
    }
}

/// One planned run. `fault` of `None` is the null-fault test mode.
#[derive(Debug, Clone)]
pub struct PlanEntry {
    pub run_id: u64,
    pub fault: Option<FaultSpec>,
}

/// Deterministic plan: `n_per_location` sampled specs per catalog target,
/// ordered by catalog order.
pub fn plan_campaign(
    cfg: &Config,
    catalog: &[InjectionTarget],
    golden: &GoldenProfile,
) -> Result<Vec<PlanEntry>, CampaignError> {
    let n = match cfg.campaign.n_per_location {
        Some(n) => n as u64,
        None => compute_sample_size(cfg.campaign.confidence, cfg.campaign.margin, cfg.campaign.p, None)?,
    };
    let window = InjectionWindow::from_events(
        &golden.events,
        golden.start_event_index,
        cfg.campaign.window_fraction,
    )?;
    let specs = injector::sample_fault_space(
        catalog,
        n as u32,
        &window,
        cfg.campaign.fault_type,
        cfg.campaign.seed,
    )?;
    Ok(specs
        .into_iter()
        .enumerate()
        .map(|(i, fault)| PlanEntry {
            run_id: i as u64,
            fault: Some(fault),
        })
        .collect())
}

/// All-null plan used by soundness checks.
pub fn null_plan(runs: u64) -> Vec<PlanEntry> {
    (0..runs)
        .map(|run_id| PlanEntry {
            run_id,
            fault: None,
        })
        .collect()
}

/// One row of runs.csv.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunRow {
    pub run_id: u64,
    pub target: String,
    pub category: String,
    pub fault_type: String,
    pub byte: u32,
    pub bit: u8,
    pub t_tick: u32,
    pub t_event: u32,
    pub outcome: Outcome,
    pub run_ticks: u32,
    pub golden_ticks: u32,
    pub panic_reason: String,
    pub seed: u64,
}

pub const RUNS_CSV_HEADER: &str =
    "run_id,target,category,fault_type,byte,bit,t_tick,t_event,outcome,run_ticks,golden_ticks,panic_reason,seed";

impl RunRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.target,
            self.category,
            self.fault_type,
            self.byte,
            self.bit,
            self.t_tick,
            self.t_event,
            self.outcome.as_str(),
            self.run_ticks,
            self.golden_ticks,
            self.panic_reason,
            self.seed
        )
    }

    pub fn from_csv(line: &str) -> Option<RunRow> {
        let mut f = line.split(',');
        Some(RunRow {
            run_id: f.next()?.parse().ok()?,
            target: f.next()?.to_string(),
            category: f.next()?.to_string(),
            fault_type: f.next()?.to_string(),
            byte: f.next()?.parse().ok()?,
            bit: f.next()?.parse().ok()?,
            t_tick: f.next()?.parse().ok()?,
            t_event: f.next()?.parse().ok()?,
            outcome: Outcome::parse(f.next()?)?,
            run_ticks: f.next()?.parse().ok()?,
            golden_ticks: f.next()?.parse().ok()?,
            panic_reason: f.next()?.to_string(),
            seed: f.next()?.parse().ok()?,
        })
    }
}

/// Per-outcome counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OutcomeCounts {
    pub counts: [u64; 7],
}

impl OutcomeCounts {
    pub fn add(&mut self, outcome: Outcome) {
        self.counts[outcome.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn count(&self, outcome: Outcome) -> u64 {
        self.counts[outcome.index()]
    }

    /// Percentage per outcome in hundredths, apportioned by largest
    /// remainder so the rounded values always sum to exactly 100.00.
    pub fn percentages(&self) -> [f64; 7] {
        let total = self.total();
        let mut out = [0.0; 7];
        if total == 0 {
            return out;
        }
        // work in integer hundredths of a percent
        let mut units = [0u64; 7];
        let mut rems = [(0u64, 0usize); 7];
        let mut assigned = 0u64;
        for (i, c) in self.counts.iter().enumerate() {
            let scaled = c * 10_000;
            units[i] = scaled / total;
            rems[i] = (scaled % total, i);
            assigned += units[i];
        }
        let mut left = 10_000u64.saturating_sub(assigned);
        rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for (rem, idx) in rems {
            if left == 0 {
                break;
            }
            if rem > 0 {
                units[idx] += 1;
                left -= 1;
            }
        }
        for i in 0..7 {
            out[i] = units[i] as f64 / 100.0;
        }
        out
    }

    pub fn rate(&self, outcome: Outcome) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.count(outcome) as f64 / total as f64
        }
    }
}

/// Aggregated campaign results, fully derivable from the run rows.
#[derive(Debug, Clone)]
pub struct CampaignReport {
    pub rows: Vec<RunRow>,
    pub per_target: Vec<(String, OutcomeCounts)>,
    pub per_category: Vec<(String, OutcomeCounts)>,
    pub totals: OutcomeCounts,
    pub seed: u64,
    pub duration_ms: u128,
}

impl CampaignReport {
    pub fn from_rows(rows: Vec<RunRow>, duration_ms: u128) -> CampaignReport {
        let mut per_target: Vec<(String, OutcomeCounts)> = Vec::new();
        let mut per_category: Vec<(String, OutcomeCounts)> = Vec::new();
        let mut totals = OutcomeCounts::default();
        let seed = rows.first().map(|r| r.seed).unwrap_or(0);
        for row in &rows {
            totals.add(row.outcome);
            match per_target.iter_mut().find(|(n, _)| *n == row.target) {
                Some((_, c)) => c.add(row.outcome),
                None => {
                    let mut c = OutcomeCounts::default();
                    c.add(row.outcome);
                    per_target.push((row.target.clone(), c));
                }
            }
            match per_category.iter_mut().find(|(n, _)| *n == row.category) {
                Some((_, c)) => c.add(row.outcome),
                None => {
                    let mut c = OutcomeCounts::default();
                    c.add(row.outcome);
                    per_category.push((row.category.clone(), c));
                }
            }
        }
        CampaignReport {
            rows,
            per_target,
            per_category,
            totals,
            seed,
            duration_ms,
        }
    }

    /// Unweighted mean of per-target rates of one outcome over a category,
    /// counting every run in each target's denominator.
    pub fn category_mean_rate(&self, category: TargetCategory, outcome: Outcome) -> f64 {
        self.mean_rate(category, outcome, false)
    }

    /// Like [`Self::category_mean_rate`], but each target's rate is taken
    /// over its valid (non-INVALID) runs, and targets that were never valid
    /// contribute no rate. This isolates structural sensitivity from
    /// workload-usage artifacts.
    pub fn category_mean_rate_valid(&self, category: TargetCategory, outcome: Outcome) -> f64 {
        self.mean_rate(category, outcome, true)
    }

    fn mean_rate(&self, category: TargetCategory, outcome: Outcome, valid_only: bool) -> f64 {
        let cat = category.as_str();
        let mut seen: Vec<&str> = Vec::new();
        for row in &self.rows {
            if row.category == cat && !seen.contains(&row.target.as_str()) {
                seen.push(&row.target);
            }
        }
        let mut rates = Vec::new();
        for target in seen {
            if let Some((_, counts)) = self.per_target.iter().find(|(n, _)| n == target) {
                if valid_only {
                    let valid = counts.total() - counts.count(Outcome::Invalid);
                    if valid > 0 {
                        rates.push(counts.count(outcome) as f64 / valid as f64);
                    }
                } else {
                    rates.push(counts.rate(outcome));
                }
            }
        }
        if rates.is_empty() {
            0.0
        } else {
            rates.iter().sum::<f64>() / rates.len() as f64
        }
    }
}

/// Runs a plan across isolated workers. Results are keyed by plan index,
/// so the report is identical for any worker count. A crashed worker is
/// reported with the failing plan index without discarding finished runs.
pub fn run_campaign(
    plan: &[PlanEntry],
    golden: &GoldenProfile,
    catalog: &[InjectionTarget],
    cfg: &Config,
) -> Result<CampaignReport, CampaignError> {
    if plan.is_empty() {
        return Err(CampaignError::InvalidParameter("plan is empty".into()));
    }
    let started = Instant::now();
    let workers = cfg.campaign.workers.max(1) as usize;
    let plan = Arc::new(plan.to_vec());
    let golden = Arc::new(golden.clone());
    let catalog = Arc::new(catalog.to_vec());
    let cfg = Arc::new(cfg.clone());
    let cursor = Arc::new(AtomicUsize::new(0));
    let (tx, rx) = mpsc::channel::<Result<(usize, Outcome, u32, String), (u64, String)>>();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let plan = Arc::clone(&plan);
            let golden = Arc::clone(&golden);
            let catalog = Arc::clone(&catalog);
            let cfg = Arc::clone(&cfg);
            let cursor = Arc::clone(&cursor);
            let tx = tx.clone();
            scope.spawn(move || loop {
                let idx = cursor.fetch_add(1, Ordering::SeqCst);
                if idx >= plan.len() {
                    break;
                }
                let entry = &plan[idx];
                let outcome = std::panic::catch_unwind(AssertUnwindSafe(|| {
                    harness::execute_run(entry.fault.as_ref(), &catalog, &golden, &cfg, false)
                }));
                let msg = match outcome {
                    Ok(Ok(run)) => {
                        let panic_reason = run
                            .panic
                            .as_ref()
                            .map(|p| p.reason.as_str().to_string())
                            .unwrap_or_else(|| "none".to_string());
                        Ok((idx, run.outcome, run.run_ticks, panic_reason))
                    }
                    Ok(Err(e)) => Err((entry.run_id, e.to_string())),
                    Err(_) => Err((entry.run_id, "worker unit panicked".to_string())),
                };
                if tx.send(msg).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut results: Vec<Option<(Outcome, u32, String)>> = vec![None; plan.len()];
        let mut completed = 0usize;
        let mut failure: Option<(u64, String)> = None;
        for msg in rx.iter() {
            match msg {
                Ok((idx, outcome, ticks, reason)) => {
                    results[idx] = Some((outcome, ticks, reason));
                    completed += 1;
                }
                Err((run_id, detail)) => {
                    failure.get_or_insert((run_id, detail));
                }
            }
        }
        if let Some((run_id, detail)) = failure {
            return Err(CampaignError::WorkerFailure {
                run_id,
                completed,
                detail,
            });
        }

        let mut rows = Vec::with_capacity(plan.len());
        for (entry, slot) in plan.iter().zip(results) {
            let (outcome, run_ticks, panic_reason) = slot.ok_or_else(|| {
                CampaignError::WorkerFailure {
                    run_id: entry.run_id,
                    completed,
                    detail: "run result missing".into(),
                }
            })?;
            let row = match &entry.fault {
                Some(f) => {
                    let category = catalog
                        .iter()
                        .find(|t| t.name == f.target)
                        .map(|t| t.category.as_str().to_string())
                        .unwrap_or_else(|| "unknown".into());
                    RunRow {
                        run_id: entry.run_id,
                        target: f.target.clone(),
                        category,
                        fault_type: f.fault_type.to_string(),
                        byte: f.byte_off,
                        bit: f.bit_off,
                        t_tick: f.t_tick,
                        t_event: f.t_event,
                        outcome,
                        run_ticks,
                        golden_ticks: golden.total_ticks,
                        panic_reason,
                        seed: cfg.campaign.seed,
                    }
                }
                None => RunRow {
                    run_id: entry.run_id,
                    target: "none".into(),
                    category: "none".into(),
                    fault_type: cfg.campaign.fault_type.to_string(),
                    byte: 0,
                    bit: 0,
                    t_tick: 0,
                    t_event: 0,
                    outcome,
                    run_ticks,
                    golden_ticks: golden.total_ticks,
                    panic_reason,
                    seed: cfg.campaign.seed,
                },
            };
            rows.push(row);
        }
        Ok(CampaignReport::from_rows(rows, started.elapsed().as_millis()))
    })
}

/// Convenience: full default campaign for one fault type.
pub fn run_default_campaign(
    cfg: &Config,
    fault_type: FaultType,
    golden: &GoldenProfile,
    catalog: &[InjectionTarget],
) -> Result<CampaignReport, CampaignError> {
    let mut cfg = cfg.clone();
    cfg.campaign.fault_type = fault_type;
    let plan = plan_campaign(&cfg, catalog, golden)?;
    run_campaign(&plan, golden, catalog, &cfg)
}
