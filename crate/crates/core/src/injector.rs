//! Fault planning: samples the fault space and arms faults for a precise
//! simulated instant.
//!
//! Injection timing is expressed in simulated time as a (tick, intra-tick
//! event index) pair drawn from the golden run's event timeline, never
//! from wall-clock time, so every run is replayable bit-for-bit.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::config::FaultType;
use crate::kernel::{ArmedFault, FaultModel, KernelEvent};
use crate::targets::{self, InjectionTarget, TargetError};

#[derive(Debug, Error)]
pub enum InjectorError {
    #[error("injection window contains no events")]
    EmptyWindow,
    #[error(transparent)]
    Target(#[from] TargetError),
}

/// One planned corruption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultSpec {
    pub target: String,
    pub byte_off: u32,
    pub bit_off: u8,
    pub fault_type: FaultType,
    /// Stuck level for permanent faults. `None` holds the complement of
    /// the bit found at injection time, preserving the corrupted value.
    pub stuck_value: Option<u8>,
    pub t_tick: u32,
    pub t_event: u32,
}

/// What the injector observed when the fault fired.
#[derive(Debug, Clone)]
pub struct InjectionRecord {
    pub spec: FaultSpec,
    pub applied_tick: u32,
    pub applied_event: u32,
    pub pre_bit: u8,
    pub post_bit: u8,
    pub valid: bool,
    pub validity_reason: String,
}

/// The injection instants eligible for sampling: a prefix of the golden
/// run's post-start event timeline.
#[derive(Debug, Clone)]
pub struct InjectionWindow {
    instants: Vec<(u32, u32)>,
}

impl InjectionWindow {
    /// Takes the first `fraction` of the golden post-start events.
    pub fn from_events(
        events: &[KernelEvent],
        start_index: usize,
        fraction: f64,
    ) -> Result<InjectionWindow, InjectorError> {
        let timeline = &events[start_index.min(events.len())..];
        if timeline.is_empty() {
            return Err(InjectorError::EmptyWindow);
        }
        let take = ((timeline.len() as f64 * fraction).ceil() as usize)
            .clamp(1, timeline.len());
        let instants: Vec<(u32, u32)> = timeline[..take].iter().map(|e| (e.tick, e.index)).collect();
        Ok(InjectionWindow { instants })
    }

    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }

    pub fn instants(&self) -> &[(u32, u32)] {
        &self.instants
    }
}

/// Uniformly samples `n_per_location` fault specs per catalog target.
/// Deterministic in the seed.
pub fn sample_fault_space(
    catalog: &[InjectionTarget],
    n_per_location: u32,
    window: &InjectionWindow,
    fault_type: FaultType,
    seed: u64,
) -> Result<Vec<FaultSpec>, InjectorError> {
    if window.is_empty() {
        return Err(InjectorError::EmptyWindow);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(catalog.len() * n_per_location as usize);
    for target in catalog {
        for _ in 0..n_per_location {
            let byte_off = rng.gen_range(0..target.size);
            let bit_off = rng.gen_range(0..8u8);
            let (t_tick, t_event) = window.instants[rng.gen_range(0..window.len())];
            out.push(FaultSpec {
                target: target.name.clone(),
                byte_off,
                bit_off,
                fault_type,
                stuck_value: None,
                t_tick,
                t_event,
            });
        }
    }
    Ok(out)
}

/// Resolves a spec against the catalog into a fault the kernel can fire at
/// its simulated instant.
pub fn arm(spec: &FaultSpec, catalog: &[InjectionTarget]) -> Result<ArmedFault, InjectorError> {
    let target = targets::find_target(catalog, &spec.target)?;
    let (address, bit) = targets::resolve_injection_point(target, spec.byte_off, spec.bit_off)?;
    let model = match spec.fault_type {
        FaultType::Transient => FaultModel::Transient,
        FaultType::Permanent => FaultModel::Permanent {
            stuck: spec.stuck_value.map(|v| v & 1),
        },
    };
    Ok(ArmedFault {
        address,
        bit,
        model,
        at_tick: spec.t_tick,
        at_event: spec.t_event,
        probe: targets::validity_probe(target),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::KernelConfig;
    use crate::kernel::{EventKind, Kernel, TaskKind};
    use crate::targets::gather_targets;

    fn fake_events(n: u32) -> Vec<KernelEvent> {
        (0..n)
            .map(|i| KernelEvent {
                tick: i / 2,
                index: i % 2,
                kind: EventKind::TaskSwitchIn,
                task: "T".into(),
                detail: String::new(),
            })
            .collect()
    }

    fn catalog() -> Vec<InjectionTarget> {
        let mut k = Kernel::init(&KernelConfig::default()).unwrap();
        k.task_create("A", 1, TaskKind::User).unwrap();
        gather_targets(&k)
    }

    #[test]
    fn sampling_is_deterministic() {
        let catalog = catalog();
        let events = fake_events(100);
        let window = InjectionWindow::from_events(&events, 0, 0.1).unwrap();
        let a = sample_fault_space(&catalog, 5, &window, FaultType::Transient, 7).unwrap();
        let b = sample_fault_space(&catalog, 5, &window, FaultType::Transient, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), catalog.len() * 5);
    }

    #[test]
    fn samples_stay_in_bounds() {
        let catalog = catalog();
        let events = fake_events(40);
        let window = InjectionWindow::from_events(&events, 0, 0.25).unwrap();
        let specs = sample_fault_space(&catalog, 1, &window, FaultType::Permanent, 1).unwrap();
        assert_eq!(specs.len(), catalog.len());
        for spec in &specs {
            let t = crate::targets::find_target(&catalog, &spec.target).unwrap();
            assert!(spec.byte_off < t.size);
            assert!(spec.bit_off < 8);
            assert_eq!(spec.stuck_value, None);
            assert!(window.instants().contains(&(spec.t_tick, spec.t_event)));
        }
    }

    #[test]
    fn empty_window_rejected() {
        let events: Vec<KernelEvent> = Vec::new();
        assert!(matches!(
            InjectionWindow::from_events(&events, 0, 0.1),
            Err(InjectorError::EmptyWindow)
        ));
    }

    #[test]
    fn sampling_uniform_over_bits() {
        // 100k samples on one 4-byte target: each of the 32 bit positions
        // should land between 2.5% and 3.75%
        let catalog: Vec<InjectionTarget> = catalog()
            .into_iter()
            .filter(|t| t.name == "xTickCount")
            .collect();
        assert_eq!(catalog.len(), 1);
        let events = fake_events(10);
        let window = InjectionWindow::from_events(&events, 0, 1.0).unwrap();
        let specs =
            sample_fault_space(&catalog, 100_000, &window, FaultType::Transient, 99).unwrap();
        let mut counts = [0u32; 32];
        for s in &specs {
            counts[(s.byte_off * 8 + s.bit_off as u32) as usize] += 1;
        }
        for (i, c) in counts.iter().enumerate() {
            let share = *c as f64 / 100_000.0;
            assert!(
                (0.025..=0.0375).contains(&share),
                "bit {i} share {share}"
            );
        }
    }
}
