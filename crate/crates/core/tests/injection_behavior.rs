//! End-to-end behavior of targeted injections: the bit-level semantics at
//! the injection instant, validity verdicts, and the resulting run
//! classifications. Also freezes the golden workload digests as
//! regression constants.

use std::collections::BTreeMap;

use kfi_core::config::{Config, FaultType};
use kfi_core::harness::{self, golden_run, Outcome};
use kfi_core::injector::FaultSpec;
use kfi_core::kernel::layout::{TCB_PRIORITY, VARS};
use kfi_core::kernel::PanicReason;
use kfi_core::targets::gather_targets;
use kfi_core::workloads::{verify_outputs, MissingOutput, VerifyOutcome, WorkloadId, WorkloadOutput};

fn setup() -> (Config, kfi_core::harness::GoldenProfile, Vec<kfi_core::targets::InjectionTarget>) {
    let cfg = Config::default();
    let golden = golden_run(&cfg).unwrap();
    let (kernel, _) = harness::build_system(&cfg).unwrap();
    let catalog = gather_targets(&kernel);
    (cfg, golden, catalog)
}

fn spec(target: &str, byte: u32, bit: u8, fault_type: FaultType, at: (u32, u32)) -> FaultSpec {
    FaultSpec {
        target: target.into(),
        byte_off: byte,
        bit_off: bit,
        fault_type,
        stuck_value: None,
        t_tick: at.0,
        t_event: at.1,
    }
}

/// The golden digests are regression constants: any change to workload
/// inputs or arithmetic must be deliberate.
#[test]
fn golden_digests_are_frozen() {
    let (_, golden, _) = setup();
    let expected: BTreeMap<WorkloadId, u64> = [
        (WorkloadId::Sha, 0xc6f093f66bdb7dbc),
        (WorkloadId::Fft, 0x8cf3f308edd89206),
        (WorkloadId::Cubic, 0xb5a926c2c4ed3e7c),
        (WorkloadId::HuffDec, 0x20671a1b6fab9b55),
        (WorkloadId::AdpcmEnc, 0x524a55d5eaac81d6),
    ]
    .into_iter()
    .collect();
    for (id, digest) in expected {
        assert_eq!(
            golden.per_task.get(&id).map(|(d, _)| *d),
            Some(digest),
            "{} digest drifted",
            id.name()
        );
    }
}

#[test]
fn verify_outputs_match_mismatch_missing() {
    let golden: BTreeMap<WorkloadId, (u64, u32)> = [
        (WorkloadId::Sha, (10, 1)),
        (WorkloadId::AdpcmEnc, (20, 2)),
    ]
    .into_iter()
    .collect();
    let make = |sha: u64, adpcm: Option<u64>| {
        let mut m = BTreeMap::new();
        m.insert(
            WorkloadId::Sha,
            WorkloadOutput { id: WorkloadId::Sha, digest: sha, completion_tick: 1 },
        );
        if let Some(d) = adpcm {
            m.insert(
                WorkloadId::AdpcmEnc,
                WorkloadOutput { id: WorkloadId::AdpcmEnc, digest: d, completion_tick: 2 },
            );
        }
        m
    };
    assert_eq!(verify_outputs(&make(10, Some(20)), &golden), Ok(VerifyOutcome::Match));
    // one flipped digest bit
    assert_eq!(
        verify_outputs(&make(10 ^ 1, Some(20)), &golden),
        Ok(VerifyOutcome::Mismatch(vec![WorkloadId::Sha]))
    );
    assert_eq!(
        verify_outputs(&make(10, None), &golden),
        Err(MissingOutput(vec![WorkloadId::AdpcmEnc]))
    );
}

#[test]
fn transient_on_scheduler_running_flag_clears_bit() {
    let (cfg, golden, catalog) = setup();
    // bit 0 of xSchedulerRunning is 1 after start: a flip stores 0 and the
    // next slot's check fails hard
    let run = harness::execute_run(
        Some(&spec("xSchedulerRunning", 0, 0, FaultType::Transient, (2, 0))),
        &catalog,
        &golden,
        &cfg,
        false,
    )
    .unwrap();
    let rec = run.injection.as_ref().unwrap();
    assert_eq!(rec.pre_bit, 1);
    assert_eq!(rec.post_bit, 0);
    assert_eq!(run.outcome, Outcome::Crash);
    assert_eq!(run.panic.as_ref().unwrap().reason, PanicReason::Assertion);
}

#[test]
fn transient_record_is_complement() {
    let (cfg, golden, catalog) = setup();
    let run = harness::execute_run(
        Some(&spec("xTickCount", 3, 6, FaultType::Transient, (2, 0))),
        &catalog,
        &golden,
        &cfg,
        false,
    )
    .unwrap();
    let rec = run.injection.as_ref().unwrap();
    assert_eq!(rec.post_bit, 1 - rec.pre_bit);
}

#[test]
fn permanent_mask_outlives_priority_rewrites() {
    // stuck-at-1 on bit 6 of the current task's priority: every later
    // write to that field reads back with bit 6 forced, and the scheduler
    // faults on the out-of-range priority
    let (cfg, golden, catalog) = setup();
    let mut fault = spec("currentTCB.uxPriority", 0, 6, FaultType::Permanent, (2, 0));
    fault.stuck_value = Some(1);
    let run = harness::execute_run(Some(&fault), &catalog, &golden, &cfg, false).unwrap();
    let rec = run.injection.as_ref().unwrap();
    assert_eq!(rec.post_bit, 1);
    assert_eq!(run.outcome, Outcome::Crash);

    // the same mask semantics at image level: writes never clear the bit
    let (mut kernel, _) = harness::build_system(&cfg).unwrap();
    let tcb = kernel.runtimes().find(|rt| rt.name == "SHA").unwrap().tcb;
    kernel
        .image_mut()
        .install_stuck_mask(tcb + TCB_PRIORITY, 6, 1)
        .unwrap();
    for v in [0u32, 1, 3, 6] {
        kernel.image_mut().write_field(tcb + TCB_PRIORITY, 4, v).unwrap();
        assert_eq!(
            kernel.image().read_field(tcb + TCB_PRIORITY, 4).unwrap(),
            v | (1 << 6)
        );
    }
}

#[test]
fn empty_suspended_list_injection_is_invalid() {
    let (cfg, golden, catalog) = setup();
    // the very first instant precedes the daemon parking itself, so the
    // suspended list is still empty
    let first = &golden.events[golden.start_event_index];
    let run = harness::execute_run(
        Some(&spec(
            "xSuspendedTaskList",
            0,
            1,
            FaultType::Transient,
            (first.tick, first.index),
        )),
        &catalog,
        &golden,
        &cfg,
        false,
    )
    .unwrap();
    let rec = run.injection.as_ref().unwrap();
    assert!(!rec.valid);
    assert_eq!(run.outcome, Outcome::Invalid);
}

#[test]
fn suspended_list_becomes_valid_after_daemon_parks() {
    let (cfg, golden, catalog) = setup();
    let run = harness::execute_run(
        Some(&spec("xSuspendedTaskList", 16, 0, FaultType::Transient, (2, 0))),
        &catalog,
        &golden,
        &cfg,
        false,
    )
    .unwrap();
    assert!(run.injection.as_ref().unwrap().valid);
}

#[test]
fn current_tcb_high_byte_corruption_crashes() {
    let (cfg, golden, catalog) = setup();
    let run = harness::execute_run(
        Some(&spec("pxCurrentTCB", 3, 7, FaultType::Transient, (1, 0))),
        &catalog,
        &golden,
        &cfg,
        false,
    )
    .unwrap();
    assert_eq!(run.outcome, Outcome::Crash);
    assert_eq!(run.panic.as_ref().unwrap().reason, PanicReason::InvalidHandle);
}

#[test]
fn exactly_one_fault_per_run() {
    let (cfg, golden, catalog) = setup();
    let run = harness::execute_run(
        Some(&spec("xNumOfOverflows", 2, 4, FaultType::Transient, (3, 0))),
        &catalog,
        &golden,
        &cfg,
        false,
    )
    .unwrap();
    // benign corruption: exactly one record, applied at the armed instant
    let rec = run.injection.as_ref().unwrap();
    assert_eq!(rec.applied_tick, 3);
    assert_eq!(run.outcome, Outcome::Benign);
}

#[test]
fn variable_names_all_injectable() {
    let (cfg, golden, catalog) = setup();
    for (_, name) in VARS.iter() {
        let run = harness::execute_run(
            Some(&spec(name, 0, 0, FaultType::Transient, (1, 0))),
            &catalog,
            &golden,
            &cfg,
            false,
        )
        .unwrap();
        assert!(run.injection.is_some(), "no record for {name}");
        assert!(run.injection.as_ref().unwrap().valid, "{name} should be valid");
    }
}

#[test]
fn worker_failure_reports_index_and_keeps_completed_runs() {
    let (cfg, golden, catalog) = setup();
    let mut plan: Vec<kfi_core::campaign::PlanEntry> = kfi_core::campaign::null_plan(8);
    // a spec naming an unknown target fails inside its worker unit
    plan.push(kfi_core::campaign::PlanEntry {
        run_id: 8,
        fault: Some(spec("noSuchTarget", 0, 0, FaultType::Transient, (1, 0))),
    });
    let err = kfi_core::campaign::run_campaign(&plan, &golden, &catalog, &cfg).unwrap_err();
    match err {
        kfi_core::campaign::CampaignError::WorkerFailure {
            run_id, completed, ..
        } => {
            assert_eq!(run_id, 8);
            assert_eq!(completed, 8, "completed runs must survive the failure");
        }
        other => panic!("expected WorkerFailure, got {other}"),
    }
}

#[test]
fn summary_totals_row_has_seven_outcome_columns() {
    let (cfg, golden, catalog) = setup();
    let plan = kfi_core::campaign::null_plan(5);
    let report = kfi_core::campaign::run_campaign(&plan, &golden, &catalog, &cfg).unwrap();
    let summary = kfi_core::report::format_summary(&report);
    let header = summary
        .lines()
        .find(|l| l.starts_with("scope"))
        .expect("summary header");
    for label in ["Benign", "Delay", "SDC", "SDC (Delay)", "Hang", "Crash", "Invalid"] {
        assert!(header.contains(label), "missing column {label}");
    }
}

#[test]
fn forced_stop_bounds_run_length() {
    // shrink the hang threshold below the golden duration: the monitor
    // must force a stop and classify the run as HANG
    let (mut cfg, golden, catalog) = setup();
    cfg.campaign.thresholds.delay_fraction = 0.05;
    cfg.campaign.thresholds.hang_multiplier = 0.5;
    let run = harness::execute_run(None, &catalog, &golden, &cfg, false).unwrap();
    let bound = (cfg.campaign.thresholds.hang_multiplier * golden.total_ticks as f64).ceil() as u32;
    assert_eq!(run.outcome, Outcome::Hang);
    assert!(run.timed_out);
    assert!(run.run_ticks <= bound + 1, "{} > {}", run.run_ticks, bound + 1);

    // an untouched threshold leaves the same run benign at exactly golden
    let (cfg, golden, catalog) = setup();
    let run = harness::execute_run(None, &catalog, &golden, &cfg, false).unwrap();
    assert_eq!(run.outcome, Outcome::Benign);
    assert_eq!(run.run_ticks, golden.total_ticks);
}
