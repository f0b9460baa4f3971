//! Acceptance suite: one test per acceptance criterion, each printing a
//! `[PASS]`/`[FAIL]` line with the measured numbers. Campaign fixtures are
//! built once and shared.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the
//! per-criterion lines.

use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use statrs::distribution::ContinuousCDF;

use kfi_core::campaign::{self, CampaignReport, OutcomeCounts};
use kfi_core::config::{Config, FaultType};
use kfi_core::harness::{self, golden_run, GoldenProfile, Outcome};
use kfi_core::image::{Handle, KernelImage};
use kfi_core::kernel::layout::StateList;
use kfi_core::kernel::Kernel;
use kfi_core::report;
use kfi_core::targets::{gather_targets, InjectionTarget, TargetCategory};

struct Fixtures {
    cfg: Config,
    golden: GoldenProfile,
    catalog: Vec<InjectionTarget>,
    transient_w4: CampaignReport,
    transient_w1: CampaignReport,
    permanent_w4: CampaignReport,
}

static FIXTURES: OnceLock<Fixtures> = OnceLock::new();

fn fixtures() -> &'static Fixtures {
    FIXTURES.get_or_init(|| {
        let cfg = Config::default();
        let golden = golden_run(&cfg).expect("golden run");
        let (kernel, _) = harness::build_system(&cfg).expect("build");
        let catalog = gather_targets(&kernel);
        let transient_w4 =
            campaign::run_default_campaign(&cfg, FaultType::Transient, &golden, &catalog)
                .expect("transient campaign");
        let transient_w1 = {
            let mut c = cfg.clone();
            c.campaign.workers = 1;
            campaign::run_default_campaign(&c, FaultType::Transient, &golden, &catalog)
                .expect("transient campaign (1 worker)")
        };
        let permanent_w4 =
            campaign::run_default_campaign(&cfg, FaultType::Permanent, &golden, &catalog)
                .expect("permanent campaign");
        Fixtures {
            cfg,
            golden,
            catalog,
            transient_w4,
            transient_w1,
            permanent_w4,
        }
    })
}

fn verdict(ok: bool, line: &str) {
    let tag = if ok { "[PASS]" } else { "[FAIL]" };
    println!("{tag} {line}");
    assert!(ok, "{line}");
}

#[test]
fn criterion_01_sample_sizing() {
    let n99 = campaign::compute_sample_size(0.99, 0.05, 0.5, None).unwrap();
    let n95 = campaign::compute_sample_size(0.95, 0.05, 0.5, None).unwrap();
    // independent numeric evaluation of the 95% case via the exact
    // standard-normal quantile
    let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
    let z = normal.inverse_cdf(0.975);
    let oracle95 = ((z * z * 0.25) / (0.05 * 0.05)).ceil() as u64;
    verdict(
        n99 == 666 && n95 == 385 && oracle95 == 385,
        &format!(
            "criterion 1: sample sizes n(0.99)={n99} (want 666), n(0.95)={n95} \
             (want 385, oracle {oracle95})"
        ),
    );
}

#[test]
fn criterion_02_null_fault_soundness() {
    let fx = fixtures();
    let plan = campaign::null_plan(1000);
    let started = Instant::now();
    let a = campaign::run_campaign(&plan, &fx.golden, &fx.catalog, &fx.cfg).unwrap();
    let b = campaign::run_campaign(&plan, &fx.golden, &fx.catalog, &fx.cfg).unwrap();
    let elapsed = started.elapsed();

    let all_benign = a.totals.count(Outcome::Benign) == 1000;
    let dir = tempfile::tempdir().unwrap();
    let pa = dir.path().join("a.csv");
    let pb = dir.path().join("b.csv");
    report::write_runs_csv(&pa, &a.rows).unwrap();
    report::write_runs_csv(&pb, &b.rows).unwrap();
    let identical = std::fs::read(&pa).unwrap() == std::fs::read(&pb).unwrap();
    let fast = elapsed.as_secs() < 60;
    verdict(
        all_benign && identical && fast,
        &format!(
            "criterion 2: 1000 null-fault runs -> {:.2}% BENIGN, runs.csv byte-identical {}, \
             {:?} for both executions",
            a.totals.percentages()[Outcome::Benign.index()],
            identical,
            elapsed
        ),
    );
}

fn single_target_campaign(fault_type: FaultType) -> CampaignReport {
    let fx = fixtures();
    let mut cfg = fx.cfg.clone();
    cfg.campaign.fault_type = fault_type;
    cfg.campaign.n_per_location = Some(666);
    let single: Vec<InjectionTarget> = fx
        .catalog
        .iter()
        .filter(|t| t.name == "pxCurrentTCB")
        .cloned()
        .collect();
    let plan = campaign::plan_campaign(&cfg, &single, &fx.golden).unwrap();
    assert_eq!(plan.len(), 666);
    campaign::run_campaign(&plan, &fx.golden, &single, &cfg).unwrap()
}

#[test]
fn criterion_03_current_tcb_pointer_sensitivity() {
    let t = single_target_campaign(FaultType::Transient);
    let p = single_target_campaign(FaultType::Permanent);
    let rt = t.totals.rate(Outcome::Crash);
    let rp = p.totals.rate(Outcome::Crash);
    verdict(
        rt >= 0.90 && rp >= 0.90,
        &format!(
            "criterion 3: pxCurrentTCB crash rate transient {:.2}%, permanent {:.2}% (want >= 90%)",
            rt * 100.0,
            rp * 100.0
        ),
    );
}

#[test]
fn criterion_04_category_ordering() {
    let fx = fixtures();
    let mut ok = true;
    let mut detail = String::new();
    for (name, rep) in [
        ("transient", &fx.transient_w4),
        ("permanent", &fx.permanent_w4),
    ] {
        let ptr = rep.category_mean_rate_valid(TargetCategory::Pointer, Outcome::Crash);
        let list = rep.category_mean_rate_valid(TargetCategory::List, Outcome::Crash);
        let tcb = rep.category_mean_rate_valid(TargetCategory::TcbField, Outcome::Crash);
        ok &= ptr > list && list >= tcb;
        detail.push_str(&format!(
            " [{name}: pointer {:.1}% > list {:.1}% >= tcb_field {:.1}%]",
            ptr * 100.0,
            list * 100.0,
            tcb * 100.0
        ));
    }
    verdict(ok, &format!("criterion 4: mean crash-rate ordering{detail}"));
}

#[test]
fn criterion_05_zero_sdc_categories() {
    let fx = fixtures();
    let mut sdc = 0u64;
    for rep in [&fx.transient_w4, &fx.permanent_w4] {
        for row in &rep.rows {
            if matches!(row.category.as_str(), "pointer" | "list" | "tcb_field")
                && matches!(row.outcome, Outcome::Sdc | Outcome::SdcDelay)
            {
                sdc += 1;
            }
        }
    }
    verdict(
        sdc == 0,
        &format!("criterion 5: SDC/SDC_DELAY runs in pointer/list/tcb_field categories = {sdc} (want 0)"),
    );
}

#[test]
fn criterion_06_empty_delayed_lists_invalid() {
    let fx = fixtures();
    let mut total = 0u64;
    let mut invalid = 0u64;
    for rep in [&fx.transient_w4, &fx.permanent_w4] {
        for row in &rep.rows {
            if row.target == "xDelayedTaskList1" || row.target == "xDelayedTaskList2" {
                total += 1;
                if row.outcome == Outcome::Invalid {
                    invalid += 1;
                }
            }
        }
    }
    verdict(
        total > 0 && invalid == total,
        &format!("criterion 6: delayed-list injections {invalid}/{total} INVALID (want 100%)"),
    );
}

#[test]
fn criterion_07_fault_model_properties() {
    let started = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    let cap = 4096u32;

    // (a) transient injection differs from the snapshot in exactly one bit
    let mut atomic = true;
    for _ in 0..2000 {
        let mut img = KernelImage::new(cap).unwrap();
        for _ in 0..32 {
            let off = rng.gen_range(0..cap - 4);
            img.write_field(off, 4, rng.gen()).unwrap();
        }
        let offset = rng.gen_range(0..cap);
        let bit = rng.gen_range(0..8u8);
        let before = img.snapshot();
        img.flip_bit(offset, bit).unwrap();
        atomic &= before.diff(&img.snapshot()) == vec![(offset, bit)];
    }

    // (b) a permanent mask's bit reads the stuck value across 10,000
    // random post-injection writes
    let mut persistent = true;
    let mut img = KernelImage::new(cap).unwrap();
    let mask_off = rng.gen_range(0..cap);
    let mask_bit = rng.gen_range(0..8u8);
    let stuck = rng.gen_range(0..2u8);
    img.install_stuck_mask(mask_off, mask_bit, stuck).unwrap();
    for _ in 0..10_000 {
        let off = rng.gen_range(0..cap - 4);
        let width = [1u32, 2, 4][rng.gen_range(0..3)];
        img.write_field(off, width, rng.gen()).unwrap();
        persistent &= img.read_bit(mask_off, mask_bit).unwrap() == stuck;
    }

    // (c) double transient flip restores the original image
    let mut involutive = true;
    for _ in 0..2000 {
        let mut img = KernelImage::new(cap).unwrap();
        for _ in 0..16 {
            let off = rng.gen_range(0..cap - 4);
            img.write_field(off, 4, rng.gen()).unwrap();
        }
        let before = img.snapshot();
        let offset = rng.gen_range(0..cap);
        let bit = rng.gen_range(0..8u8);
        img.flip_bit(offset, bit).unwrap();
        img.flip_bit(offset, bit).unwrap();
        involutive &= before.diff(&img.snapshot()).is_empty();
    }

    let elapsed = started.elapsed();
    verdict(
        atomic && persistent && involutive && elapsed.as_secs() < 10,
        &format!(
            "criterion 7: single-bit diff {atomic}, stuck persistence over 10k writes \
             {persistent}, double-flip restore {involutive} in {elapsed:?} (< 10 s)"
        ),
    );
}

#[test]
fn criterion_08_list_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(4242);
    let mut kernel = Kernel::init(&kfi_core::config::KernelConfig::default()).unwrap();
    let list = Handle(kernel.address_map().state_list(StateList::ActiveTimer1));
    let items: Vec<Handle> = (0..32)
        .map(|i| kernel.timer_create(&format!("o{i}")).unwrap())
        .collect();

    let mut checked = 0u64;
    for _ in 0..10_000 {
        let mut model: Vec<(u32, u32)> = Vec::new();
        let mut linked = [false; 32];
        let ops = rng.gen_range(4..24);
        for _ in 0..ops {
            let slot = rng.gen_range(0..32usize);
            if !linked[slot] {
                let key = if rng.gen_range(0..10) == 0 {
                    u32::MAX
                } else {
                    rng.gen_range(0..50)
                };
                kernel.item_set_value(items[slot], key).unwrap();
                kernel.list_insert_ordered(list, items[slot]).unwrap();
                let pos = model
                    .iter()
                    .position(|(_, k)| *k > key)
                    .unwrap_or(model.len());
                model.insert(pos, (items[slot].0, key));
                linked[slot] = true;
            } else {
                kernel.list_remove(items[slot]).unwrap();
                model.retain(|(h, _)| *h != items[slot].0);
                linked[slot] = false;
            }
            let got = kernel.list_items(list).unwrap();
            assert_eq!(got, model, "kernel list diverged from array oracle");
            checked += 1;
        }
        // drain for the next sequence
        for (slot, item) in items.iter().enumerate() {
            if linked[slot] {
                kernel.list_remove(*item).unwrap();
            }
        }
    }
    let elapsed = started.elapsed();
    verdict(
        elapsed.as_secs() < 30,
        &format!(
            "criterion 8: 10,000 random sequences ({checked} ops) matched the array model \
             element-for-element in {elapsed:?} (< 30 s)"
        ),
    );
}

#[test]
fn criterion_09_scale_and_parallel_soundness() {
    let fx = fixtures();
    let total_runs = fx.transient_w4.rows.len() + fx.permanent_w4.rows.len();
    let total_ms = fx.transient_w4.duration_ms + fx.permanent_w4.duration_ms;
    let within_budget = total_ms <= 600_000;
    let rows_match = fx.transient_w4.rows == fx.transient_w1.rows;
    verdict(
        within_budget && rows_match && total_runs == 2 * 666 * 47,
        &format!(
            "criterion 9: {total_runs} runs across both fault types in {total_ms} ms \
             (<= 600000), workers=1 vs 4 outcome tables identical: {rows_match}"
        ),
    );
}

#[test]
fn criterion_10_percentage_conservation() {
    let fx = fixtures();
    let mut ok = true;
    let mut worst: f64 = 0.0;
    let check = |counts: &OutcomeCounts, worst: &mut f64, ok: &mut bool| {
        let sum: f64 = counts.percentages().iter().sum();
        let err = (sum - 100.0).abs();
        if err > *worst {
            *worst = err;
        }
        *ok &= err <= 0.01;
    };
    for rep in [&fx.transient_w4, &fx.permanent_w4] {
        assert_eq!(rep.rows.len(), 666 * 47, "counts must sum to plan size");
        let mut total = 0u64;
        for (_, counts) in &rep.per_target {
            check(counts, &mut worst, &mut ok);
            total += counts.total();
        }
        ok &= total == 666 * 47;
        check(&rep.totals, &mut worst, &mut ok);
    }
    verdict(
        ok,
        &format!(
            "criterion 10: all per-target and total distributions sum to 100% +- 0.01 \
             (worst error {worst:.4}) and counts equal plan size"
        ),
    );
}
