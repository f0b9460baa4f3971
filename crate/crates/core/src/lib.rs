//! Deterministic FreeRTOS-style kernel simulator with a fault-injection
//! campaign engine.
//!
//! The kernel's entire injectable state (scheduler globals, pointers,
//! state lists, TCBs, the timer queue) lives in a byte-addressable
//! [`image::KernelImage`]. Transient faults flip one bit; permanent faults
//! install a stuck-at mask enforced on every subsequent write. Campaigns
//! profile a golden run, inject one fault per run at a precise simulated
//! instant, classify each run into seven outcome classes, and report
//! per-target vulnerability distributions.

pub mod campaign;
pub mod config;
pub mod harness;
pub mod image;
pub mod injector;
pub mod kernel;
pub mod report;
pub mod targets;
pub mod workloads;

pub use config::{CampaignConfig, Config, FaultType, KernelConfig, Thresholds, WorkloadConfig};
pub use harness::{classify, execute_run, golden_run, GoldenProfile, Outcome, RunResult};
pub use image::{Handle, ImageError, ImageSnapshot, KernelImage, ObjectKind, ObjectRecord, StuckMask};
pub use injector::{FaultSpec, InjectionRecord, InjectionWindow};
pub use kernel::{Kernel, KernelEvent, KernelPanic, PanicReason};
pub use targets::{gather_targets, InjectionTarget, TargetCategory};
