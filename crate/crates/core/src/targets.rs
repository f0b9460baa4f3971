//! Runtime gatherer for the injectable target catalog.
//!
//! The catalog enumerates every scheduler global, pointer, state list
//! (with the ready-list array expanded per priority), and current-TCB
//! field, together with a validity predicate evaluated at the injection
//! instant. Catalog names, sizes, and offsets are a pure function of the
//! kernel config, so the same config yields the same catalog everywhere.

use thiserror::Error;

use crate::kernel::layout::{LIST_SIZE, PTRS, STATE_LISTS, TCB_FIELDS, VARS};
use crate::kernel::{Feature, Kernel, TargetAddress, ValidityProbe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TargetCategory {
    Variable,
    Pointer,
    List,
    TcbField,
}

impl TargetCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            TargetCategory::Variable => "variable",
            TargetCategory::Pointer => "pointer",
            TargetCategory::List => "list",
            TargetCategory::TcbField => "tcb_field",
        }
    }

    pub fn parse(s: &str) -> Option<TargetCategory> {
        Some(match s {
            "variable" => TargetCategory::Variable,
            "pointer" => TargetCategory::Pointer,
            "list" => TargetCategory::List,
            "tcb_field" => TargetCategory::TcbField,
            _ => return None,
        })
    }
}

/// Validity predicate attached to a target; checked when the fault fires,
/// not when the campaign is planned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidityRule {
    Always,
    ListNonEmpty,
    MutexUsed,
    NotifyUsed,
    TagUsed,
}

impl ValidityRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            ValidityRule::Always => "always",
            ValidityRule::ListNonEmpty => "list_nonempty",
            ValidityRule::MutexUsed => "mutex_used",
            ValidityRule::NotifyUsed => "notify_used",
            ValidityRule::TagUsed => "tag_used",
        }
    }
}

/// One injectable location.
#[derive(Debug, Clone)]
pub struct InjectionTarget {
    pub name: String,
    pub category: TargetCategory,
    /// Absolute image offset, or a field offset inside whatever TCB is
    /// current at the injection instant.
    pub address: TargetAddress,
    pub size: u32,
    /// Structural parent path, empty for top-level objects.
    pub hierarchy: String,
    pub validity: ValidityRule,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityVerdict {
    pub valid: bool,
    pub reason: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TargetError {
    #[error("byte offset {byte_off} / bit {bit_off} outside target `{name}` of {size} bytes")]
    OffsetOutOfRange {
        name: String,
        size: u32,
        byte_off: u32,
        bit_off: u8,
    },
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
}

/// Enumerates the full catalog from a built kernel: 12 variables, 6
/// pointers, one list per ready priority plus the 7 state lists, and the
/// 15 current-TCB fields.
pub fn gather_targets(kernel: &Kernel) -> Vec<InjectionTarget> {
    let map = kernel.address_map();
    let mut out = Vec::new();

    for (v, name) in VARS.iter() {
        out.push(InjectionTarget {
            name: (*name).to_string(),
            category: TargetCategory::Variable,
            address: TargetAddress::Absolute(map.var(*v)),
            size: 4,
            hierarchy: String::new(),
            validity: ValidityRule::Always,
        });
    }

    for (p, name) in PTRS.iter() {
        out.push(InjectionTarget {
            name: (*name).to_string(),
            category: TargetCategory::Pointer,
            address: TargetAddress::Absolute(map.ptr(*p)),
            size: 4,
            hierarchy: String::new(),
            validity: ValidityRule::Always,
        });
    }

    for prio in 0..map.ready_count() {
        out.push(InjectionTarget {
            name: format!("pxReadyTasksLists[{prio}]"),
            category: TargetCategory::List,
            address: TargetAddress::Absolute(map.ready_list(prio).unwrap()),
            size: LIST_SIZE,
            hierarchy: "pxReadyTasksLists".to_string(),
            validity: ValidityRule::ListNonEmpty,
        });
    }
    for (l, name) in STATE_LISTS.iter() {
        out.push(InjectionTarget {
            name: (*name).to_string(),
            category: TargetCategory::List,
            address: TargetAddress::Absolute(map.state_list(*l)),
            size: LIST_SIZE,
            hierarchy: String::new(),
            validity: ValidityRule::ListNonEmpty,
        });
    }

    for (field, off, size) in TCB_FIELDS.iter() {
        let validity = match *field {
            "uxMutexesHeld" | "uxBasePriority" => ValidityRule::MutexUsed,
            "ucNotifyState" | "ulNotifiedValue" => ValidityRule::NotifyUsed,
            "pxTaskTag" => ValidityRule::TagUsed,
            _ => ValidityRule::Always,
        };
        out.push(InjectionTarget {
            name: format!("currentTCB.{field}"),
            category: TargetCategory::TcbField,
            address: TargetAddress::CurrentTcbField(*off),
            size: *size,
            hierarchy: "pxCurrentTCB".to_string(),
            validity,
        });
    }

    out
}

pub fn find_target<'a>(
    catalog: &'a [InjectionTarget],
    name: &str,
) -> Result<&'a InjectionTarget, TargetError> {
    catalog
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| TargetError::UnknownTarget(name.to_string()))
}

/// Absolute (or TCB-relative) address of one bit inside a target.
pub fn resolve_injection_point(
    target: &InjectionTarget,
    byte_off: u32,
    bit_off: u8,
) -> Result<(TargetAddress, u8), TargetError> {
    if byte_off >= target.size || bit_off >= 8 {
        return Err(TargetError::OffsetOutOfRange {
            name: target.name.clone(),
            size: target.size,
            byte_off,
            bit_off,
        });
    }
    let address = match target.address {
        TargetAddress::Absolute(base) => TargetAddress::Absolute(base + byte_off),
        TargetAddress::CurrentTcbField(off) => TargetAddress::CurrentTcbField(off + byte_off),
    };
    Ok((address, bit_off))
}

/// Compiles the target's validity rule into a probe the kernel can
/// evaluate at the injection instant.
pub fn validity_probe(target: &InjectionTarget) -> ValidityProbe {
    match target.validity {
        ValidityRule::Always => ValidityProbe::Always,
        ValidityRule::ListNonEmpty => match target.address {
            TargetAddress::Absolute(base) => ValidityProbe::ListNonEmpty { list_base: base },
            TargetAddress::CurrentTcbField(_) => ValidityProbe::Always,
        },
        ValidityRule::MutexUsed => ValidityProbe::FeatureUsed(Feature::Mutex),
        ValidityRule::NotifyUsed => ValidityProbe::FeatureUsed(Feature::Notify),
        ValidityRule::TagUsed => ValidityProbe::FeatureUsed(Feature::Tag),
    }
}

/// Evaluates a target's validity against the kernel's current state.
pub fn check_validity(target: &InjectionTarget, kernel: &Kernel) -> ValidityVerdict {
    match validity_probe(target) {
        ValidityProbe::Always => ValidityVerdict {
            valid: true,
            reason: "always valid".into(),
        },
        ValidityProbe::ListNonEmpty { list_base } => {
            let n = kernel.image().read_field(list_base, 4).unwrap_or(0);
            if n == 0 {
                ValidityVerdict {
                    valid: false,
                    reason: "list empty at injection instant".into(),
                }
            } else {
                ValidityVerdict {
                    valid: true,
                    reason: format!("list holds {n} item(s)"),
                }
            }
        }
        ValidityProbe::FeatureUsed(feature) => {
            let tcb = kernel.current_tcb_raw();
            let used = kernel.runtime(tcb).is_some_and(|rt| match feature {
                Feature::Mutex => rt.mutex_used,
                Feature::Notify => rt.notify_used,
                Feature::Tag => rt.tag_used,
            });
            if used {
                ValidityVerdict {
                    valid: true,
                    reason: "feature exercised by owning task".into(),
                }
            } else {
                ValidityVerdict {
                    valid: false,
                    reason: "owning task has not used this feature".into(),
                }
            }
        }
    }
}

/// Total enumerable fault space: size x 8 bit positions x 2 fault types.
pub fn fault_space_size(catalog: &[InjectionTarget]) -> u64 {
    catalog.iter().map(|t| t.size as u64 * 8 * 2).sum()
}
