//! Deterministic FreeRTOS-style kernel operating entirely through the
//! kernel image.
//!
//! The kernel is a pure state machine advanced by explicit scheduling
//! slots. Every piece of scheduler state that the fault injector can reach
//! (globals, pointers, lists, TCBs, the timer queue) lives in the image;
//! the Rust-side structures hold only offsets and per-task bookkeeping.
//! Any dereference of a corrupted handle, access outside the image, or
//! exhausted traversal budget raises a typed [`KernelPanic`] that unwinds
//! to the run boundary without ever aborting the host process.

pub mod layout;
mod list;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::config::KernelConfig;
use crate::image::{Handle, ImageError, KernelImage, ObjectKind, ObjectRecord, NULL_GUARD};

use layout::*;

/// Why a run died.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanicReason {
    InvalidHandle,
    UnmappedAccess,
    TraversalOverrun,
    StackOverflow,
    Assertion,
}

impl PanicReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            PanicReason::InvalidHandle => "invalid_handle",
            PanicReason::UnmappedAccess => "unmapped_access",
            PanicReason::TraversalOverrun => "traversal_overrun",
            PanicReason::StackOverflow => "stack_overflow",
            PanicReason::Assertion => "assertion",
        }
    }
}

/// Terminates the current run, never the campaign process.
#[derive(Debug, Clone, Error)]
#[error("kernel panic at tick {tick}: {} ({detail})", reason.as_str())]
pub struct KernelPanic {
    pub reason: PanicReason,
    pub tick: u32,
    pub detail: String,
}

/// Errors raised while building a kernel, before any run starts.
#[derive(Debug, Error)]
pub enum KernelInitError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("bad kernel setup: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    TaskSwitchIn,
    TaskSwitchOut,
    TaskCreate,
    TaskDelete,
    TickOverflow,
    TimerFire,
    Shutdown,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::TaskSwitchIn => "task_switch_in",
            EventKind::TaskSwitchOut => "task_switch_out",
            EventKind::TaskCreate => "task_create",
            EventKind::TaskDelete => "task_delete",
            EventKind::TickOverflow => "tick_overflow",
            EventKind::TimerFire => "timer_fire",
            EventKind::Shutdown => "shutdown",
        }
    }

    pub fn parse(s: &str) -> Option<EventKind> {
        Some(match s {
            "task_switch_in" => EventKind::TaskSwitchIn,
            "task_switch_out" => EventKind::TaskSwitchOut,
            "task_create" => EventKind::TaskCreate,
            "task_delete" => EventKind::TaskDelete,
            "tick_overflow" => EventKind::TickOverflow,
            "timer_fire" => EventKind::TimerFire,
            "shutdown" => EventKind::Shutdown,
            _ => return None,
        })
    }
}

/// One entry of the run event log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelEvent {
    pub tick: u32,
    /// Intra-tick event index.
    pub index: u32,
    pub kind: EventKind,
    pub task: String,
    pub detail: String,
}

impl KernelEvent {
    /// Canonical line format used for logs and event digests.
    pub fn line(&self) -> String {
        format!(
            "tick={} kind={} task={} detail={}",
            self.tick,
            self.kind.as_str(),
            self.task,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Idle,
    TimerDaemon,
    User,
}

/// Per-task shadow bookkeeping. Scheduling truth lives in the image; this
/// carries only what cannot (body linkage, stack extent, feature flags).
#[derive(Debug, Clone)]
pub struct TaskRuntime {
    pub name: String,
    pub tcb: u32,
    pub kind: TaskKind,
    pub stack_base: u32,
    pub stack_size: u32,
    pub alive: bool,
    pub mutex_used: bool,
    pub notify_used: bool,
    pub tag_used: bool,
}

/// Features a validity predicate can ask about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feature {
    Mutex,
    Notify,
    Tag,
}

/// Where an armed fault lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetAddress {
    /// Absolute image offset (already includes the byte offset).
    Absolute(u32),
    /// Offset within whatever TCB `pxCurrentTCB` designates at fire time.
    CurrentTcbField(u32),
}

/// Validity is evaluated at the injection instant, against live state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidityProbe {
    Always,
    ListNonEmpty { list_base: u32 },
    FeatureUsed(Feature),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultModel {
    Transient,
    /// `stuck` of `None` holds the complement of the pre-injection bit:
    /// the corrupted value is preserved across all subsequent writes.
    Permanent { stuck: Option<u8> },
}

/// A planned corruption waiting for its simulated instant.
#[derive(Debug, Clone)]
pub struct ArmedFault {
    pub address: TargetAddress,
    pub bit: u8,
    pub model: FaultModel,
    pub at_tick: u32,
    pub at_event: u32,
    pub probe: ValidityProbe,
}

/// What actually happened when the fault fired.
#[derive(Debug, Clone)]
pub struct FiredFault {
    pub applied_tick: u32,
    pub applied_event: u32,
    pub offset: u32,
    pub bit: u8,
    pub pre_bit: u8,
    pub post_bit: u8,
    pub valid: bool,
    pub validity_reason: String,
}

/// Result of advancing the kernel by one scheduling slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotOutcome {
    Continue,
    Shutdown,
    /// A task body exceeded its internal iteration bound.
    BodyOverrun,
}

/// Result of one task body step.
pub enum StepOutcome {
    Yield,
    Done(u64),
    Overrun,
}

/// A cooperative task body advanced one burst at a time by the scheduler.
pub trait TaskBody {
    fn step(&mut self, ctx: &mut TaskCtx<'_>) -> Result<StepOutcome, KernelPanic>;
}

pub type TaskBodies = BTreeMap<u32, Box<dyn TaskBody>>;

/// Offsets of every named kernel object.
#[derive(Debug, Clone)]
pub struct AddressMap {
    vars: [u32; 12],
    ptrs: [u32; 6],
    ready_lists: Vec<u32>,
    state_lists: [u32; 7],
    timer_queue_obj: u32,
}

impl AddressMap {
    pub fn var(&self, v: Var) -> u32 {
        self.vars[v as usize]
    }

    pub fn ptr(&self, p: Ptr) -> u32 {
        self.ptrs[p as usize]
    }

    pub fn ready_list(&self, priority: u32) -> Option<u32> {
        self.ready_lists.get(priority as usize).copied()
    }

    pub fn ready_count(&self) -> u32 {
        self.ready_lists.len() as u32
    }

    pub fn state_list(&self, l: StateList) -> u32 {
        self.state_lists[l as usize]
    }

    pub fn timer_queue_obj(&self) -> u32 {
        self.timer_queue_obj
    }
}

struct BumpAllocator {
    cursor: u32,
}

impl BumpAllocator {
    fn alloc(&mut self, size: u32, capacity: u32) -> Result<u32, KernelInitError> {
        let base = self.cursor;
        let end = base
            .checked_add(size)
            .ok_or_else(|| KernelInitError::Setup("allocation overflow".into()))?;
        if end > capacity {
            return Err(KernelInitError::Image(ImageError::ImageOverflow(format!(
                "bump allocation of {size} bytes at {base:#x}"
            ))));
        }
        // keep 4-byte alignment
        self.cursor = (end + 3) & !3;
        Ok(base)
    }
}

pub struct Kernel {
    image: KernelImage,
    cfg: KernelConfig,
    map: AddressMap,
    runtimes: BTreeMap<u32, TaskRuntime>,
    events: Vec<KernelEvent>,
    events_this_tick: u32,
    slot: u32,
    start_event_index: usize,
    started: bool,
    armed: Option<ArmedFault>,
    fired: Option<FiredFault>,
    outputs: BTreeMap<String, (u64, u32)>,
    allocated_items: u32,
    bump: BumpAllocator,
    daemon_last_time: u32,
}

impl Kernel {
    /// Allocates every scheduler object in the image and creates the idle
    /// and timer daemon tasks. The scheduler is left stopped.
    pub fn init(cfg: &KernelConfig) -> Result<Kernel, KernelInitError> {
        let mut image = KernelImage::new(cfg.image_capacity)?;
        let mut bump = BumpAllocator { cursor: NULL_GUARD };
        let cap = cfg.image_capacity;

        let mut vars = [0u32; 12];
        for (i, (_, name)) in VARS.iter().enumerate() {
            let base = bump.alloc(4, cap)?;
            let kind = match name {
                &"xTimerQueue" | &"xTimerTaskHandle" => ObjectKind::Handle,
                _ => ObjectKind::Scalar,
            };
            image.register(ObjectRecord {
                name: (*name).into(),
                base,
                size: 4,
                kind,
                parent: None,
            })?;
            vars[i] = base;
        }

        let mut ptrs = [0u32; 6];
        for (i, (_, name)) in PTRS.iter().enumerate() {
            let base = bump.alloc(4, cap)?;
            image.register(ObjectRecord {
                name: (*name).into(),
                base,
                size: 4,
                kind: ObjectKind::Handle,
                parent: None,
            })?;
            ptrs[i] = base;
        }

        let mut ready_lists = Vec::new();
        for p in 0..cfg.priority_levels {
            let base = bump.alloc(LIST_SIZE, cap)?;
            image.register(ObjectRecord {
                name: format!("pxReadyTasksLists[{p}]"),
                base,
                size: LIST_SIZE,
                kind: ObjectKind::List,
                parent: Some("pxReadyTasksLists".into()),
            })?;
            ready_lists.push(base);
        }

        let mut state_lists = [0u32; 7];
        for (i, (_, name)) in STATE_LISTS.iter().enumerate() {
            let base = bump.alloc(LIST_SIZE, cap)?;
            image.register(ObjectRecord {
                name: (*name).into(),
                base,
                size: LIST_SIZE,
                kind: ObjectKind::List,
                parent: None,
            })?;
            state_lists[i] = base;
        }

        let qsize = queue_size(cfg.timer_queue_len);
        let timer_queue_obj = bump.alloc(qsize, cap)?;
        image.register(ObjectRecord {
            name: "xTimerQueue.obj".into(),
            base: timer_queue_obj,
            size: qsize,
            kind: ObjectKind::Queue,
            parent: Some("xTimerQueue".into()),
        })?;

        let map = AddressMap {
            vars,
            ptrs,
            ready_lists,
            state_lists,
            timer_queue_obj,
        };

        let mut k = Kernel {
            image,
            cfg: cfg.clone(),
            map,
            runtimes: BTreeMap::new(),
            events: Vec::new(),
            events_this_tick: 0,
            slot: 0,
            start_event_index: 0,
            started: false,
            armed: None,
            fired: None,
            outputs: BTreeMap::new(),
            allocated_items: 0,
            bump,
            daemon_last_time: 0,
        };

        // initialize list shapes
        for p in 0..k.cfg.priority_levels {
            let base = k.map.ready_list(p).unwrap();
            k.init_list(base)?;
        }
        for (l, _) in STATE_LISTS.iter() {
            let base = k.map.state_list(*l);
            k.init_list(base)?;
        }
        k.init_queue(timer_queue_obj, cfg.timer_queue_len)?;

        // scheduler globals
        k.w(k.map.var(Var::NextTaskUnblockTime), u32::MAX)?;
        k.w(k.map.var(Var::TimerQueue), timer_queue_obj)?;
        k.w(k.map.ptr(Ptr::DelayedTaskList), k.map.state_list(StateList::Delayed1))?;
        k.w(
            k.map.ptr(Ptr::OverflowDelayedTaskList),
            k.map.state_list(StateList::Delayed2),
        )?;
        k.w(k.map.ptr(Ptr::CurrentTimerList), k.map.state_list(StateList::ActiveTimer1))?;
        k.w(k.map.ptr(Ptr::OverflowTimerList), k.map.state_list(StateList::ActiveTimer2))?;

        // system tasks
        let idle = k.task_create("IDLE", 0, TaskKind::Idle)?;
        k.w(k.map.ptr(Ptr::IdleTaskHandle), idle.0)?;
        let daemon = k.task_create("TmrSvc", cfg.priority_levels - 1, TaskKind::TimerDaemon)?;
        k.w(k.map.var(Var::TimerTaskHandle), daemon.0)?;

        Ok(k)
    }

    fn init_list(&mut self, base: u32) -> Result<(), KernelInitError> {
        let end = base + LIST_END;
        self.w(base + LIST_COUNT, 0)?;
        self.w(base + LIST_INDEX, end)?;
        self.w(end + ITEM_VALUE, END_MARKER_VALUE)?;
        self.w(end + ITEM_NEXT, end)?;
        self.w(end + ITEM_PREV, end)?;
        self.w(end + ITEM_OWNER, 0)?;
        self.w(end + ITEM_CONTAINER, base)?;
        self.allocated_items += 1;
        Ok(())
    }

    fn init_queue(&mut self, base: u32, capacity: u32) -> Result<(), KernelInitError> {
        self.w(base + QUEUE_CAPACITY, capacity)?;
        self.w(base + QUEUE_COUNT, 0)?;
        self.w(base + QUEUE_HEAD, 0)?;
        self.init_list(base + QUEUE_WAITLIST)?;
        Ok(())
    }

    fn w(&mut self, offset: u32, value: u32) -> Result<(), ImageError> {
        self.image.write_field(offset, 4, value)
    }

    /// Creates a task: TCB and stack regions allocated, state item inserted
    /// at the end of its priority's ready list.
    pub fn task_create(
        &mut self,
        name: &str,
        priority: u32,
        kind: TaskKind,
    ) -> Result<Handle, KernelInitError> {
        if priority >= self.cfg.priority_levels {
            return Err(KernelInitError::Setup(format!(
                "priority {priority} out of range for task `{name}`"
            )));
        }
        let cap = self.cfg.image_capacity;
        let tcb = self.bump.alloc(TCB_SIZE, cap)?;
        self.image.register(ObjectRecord {
            name: format!("tcb.{name}"),
            base: tcb,
            size: TCB_SIZE,
            kind: ObjectKind::Tcb,
            parent: None,
        })?;
        let stack_size = self.cfg.stack_words * 4;
        let stack = self.bump.alloc(stack_size, cap)?;
        self.image.register(ObjectRecord {
            name: format!("stack.{name}"),
            base: stack,
            size: stack_size,
            kind: ObjectKind::Scalar,
            parent: Some(format!("tcb.{name}")),
        })?;

        let mut name_bytes = [0u8; 16];
        for (i, b) in name.bytes().take(15).enumerate() {
            name_bytes[i] = b;
        }
        self.image.write_bytes(tcb + TCB_NAME, &name_bytes)?;
        self.w(tcb + TCB_STACK, stack)?;
        self.w(tcb + TCB_TOP_OF_STACK, stack)?;
        self.w(tcb + TCB_TASK_TAG, 0)?;
        self.w(tcb + TCB_PRIORITY, priority)?;
        self.w(tcb + TCB_BASE_PRIORITY, priority)?;
        self.w(tcb + TCB_MUTEXES_HELD, 0)?;
        self.w(tcb + TCB_TASK_NUMBER, 0)?;
        let task_counter = self.image.read_field(self.map.var(Var::TaskNumber), 4)? + 1;
        self.w(self.map.var(Var::TaskNumber), task_counter)?;
        self.w(tcb + TCB_TCB_NUMBER, task_counter)?;
        self.w(tcb + TCB_RUNTIME_COUNTER, 0)?;
        self.w(tcb + TCB_NOTIFIED_VALUE, 0)?;
        self.image.write_field(tcb + TCB_NOTIFY_STATE, 1, 0)?;
        self.image.write_field(tcb + TCB_DELAY_ABORTED, 1, 0)?;

        for item in [tcb + TCB_STATE_ITEM, tcb + TCB_EVENT_ITEM] {
            self.w(item + ITEM_VALUE, 0)?;
            self.w(item + ITEM_NEXT, 0)?;
            self.w(item + ITEM_PREV, 0)?;
            self.w(item + ITEM_OWNER, tcb)?;
            self.w(item + ITEM_CONTAINER, 0)?;
            self.allocated_items += 1;
        }

        self.runtimes.insert(
            tcb,
            TaskRuntime {
                name: name.to_string(),
                tcb,
                kind,
                stack_base: stack,
                stack_size,
                alive: true,
                mutex_used: false,
                notify_used: false,
                tag_used: false,
            },
        );

        let ready = self.map.ready_list(priority).unwrap();
        self.insert_end(ready, tcb + TCB_STATE_ITEM)
            .map_err(|p| KernelInitError::Setup(p.to_string()))?;

        let n = self.image.read_field(self.map.var(Var::CurrentNumberOfTasks), 4)? + 1;
        self.w(self.map.var(Var::CurrentNumberOfTasks), n)?;
        let top = self.image.read_field(self.map.var(Var::TopReadyPriority), 4)?;
        if priority > top {
            self.w(self.map.var(Var::TopReadyPriority), priority)?;
        }

        self.emit(EventKind::TaskCreate, name.to_string(), format!("tcb={tcb:#x}"));
        Ok(Handle(tcb))
    }

    /// Marks the scheduler running. Injection boundaries and the event
    /// timeline window count from here.
    pub fn start(&mut self) {
        self.start_event_index = self.events.len();
        self.started = true;
        // infallible: the cell was registered at init
        let _ = self.w(self.map.var(Var::SchedulerRunning), 1);
    }

    // ----- accessors ---------------------------------------------------

    pub fn image(&self) -> &KernelImage {
        &self.image
    }

    /// Direct image access, used by the injector and by corruption tests.
    pub fn image_mut(&mut self) -> &mut KernelImage {
        &mut self.image
    }

    pub fn address_map(&self) -> &AddressMap {
        &self.map
    }

    pub fn events(&self) -> &[KernelEvent] {
        &self.events
    }

    /// Index of the first post-start event in `events()`.
    pub fn start_event_index(&self) -> usize {
        self.start_event_index
    }

    /// Fault-immune count of elapsed scheduling slots (== ticks).
    pub fn slot(&self) -> u32 {
        self.slot
    }

    pub fn outputs(&self) -> &BTreeMap<String, (u64, u32)> {
        &self.outputs
    }

    pub fn fired(&self) -> Option<&FiredFault> {
        self.fired.as_ref()
    }

    pub fn runtime(&self, tcb: u32) -> Option<&TaskRuntime> {
        self.runtimes.get(&tcb)
    }

    pub fn runtimes(&self) -> impl Iterator<Item = &TaskRuntime> {
        self.runtimes.values()
    }

    pub fn arm_fault(&mut self, fault: ArmedFault) {
        self.armed = Some(fault);
    }

    pub fn current_tcb_raw(&self) -> u32 {
        self.image
            .read_field(self.map.ptr(Ptr::CurrentTcb), 4)
            .unwrap_or(0)
    }

    fn panic(&self, reason: PanicReason, detail: impl Into<String>) -> KernelPanic {
        KernelPanic {
            reason,
            tick: self.slot,
            detail: detail.into(),
        }
    }

    pub(crate) fn rd(&self, offset: u32) -> Result<u32, KernelPanic> {
        self.image
            .read_field(offset, 4)
            .map_err(|e| self.panic(PanicReason::UnmappedAccess, e.to_string()))
    }

    pub(crate) fn wr(&mut self, offset: u32, value: u32) -> Result<(), KernelPanic> {
        self.image
            .write_field(offset, 4, value)
            .map_err(|e| self.panic(PanicReason::UnmappedAccess, e.to_string()))
    }

    // ----- handle resolution -------------------------------------------

    /// A handle is valid for a kind only when it lands exactly on the base
    /// of a live object of that kind.
    pub fn deref_tcb(&self, handle: u32) -> Result<u32, KernelPanic> {
        match self.runtimes.get(&handle) {
            Some(rt) if rt.alive => Ok(handle),
            _ => Err(self.panic(
                PanicReason::InvalidHandle,
                format!("{handle:#x} is not a live TCB"),
            )),
        }
    }

    pub fn deref_list(&self, handle: u32) -> Result<u32, KernelPanic> {
        if self.is_list_base(handle) {
            Ok(handle)
        } else {
            Err(self.panic(
                PanicReason::InvalidHandle,
                format!("{handle:#x} is not a list"),
            ))
        }
    }

    fn is_list_base(&self, addr: u32) -> bool {
        self.map.ready_lists.contains(&addr)
            || self.map.state_lists.contains(&addr)
            || addr == self.map.timer_queue_obj + QUEUE_WAITLIST
    }

    pub fn deref_queue(&self, handle: u32) -> Result<u32, KernelPanic> {
        if handle == self.map.timer_queue_obj {
            Ok(handle)
        } else {
            Err(self.panic(
                PanicReason::InvalidHandle,
                format!("{handle:#x} is not a queue"),
            ))
        }
    }

    /// List items are embedded sub-objects: list end markers, TCB state and
    /// event items of live tasks, and standalone timer items.
    pub(crate) fn resolve_list_item(&self, addr: u32) -> Result<u32, KernelPanic> {
        if self.is_list_base(addr.wrapping_sub(LIST_END)) {
            return Ok(addr);
        }
        if let Some(rt) = self.runtimes.get(&addr.wrapping_sub(TCB_STATE_ITEM)) {
            if rt.alive {
                return Ok(addr);
            }
        }
        if let Some(rt) = self.runtimes.get(&addr.wrapping_sub(TCB_EVENT_ITEM)) {
            if rt.alive {
                return Ok(addr);
            }
        }
        if self
            .image
            .record_at(addr, ObjectKind::ListItem)
            .is_some()
        {
            return Ok(addr);
        }
        Err(self.panic(
            PanicReason::InvalidHandle,
            format!("{addr:#x} is not a list item"),
        ))
    }

    pub(crate) fn traversal_budget(&self) -> u32 {
        self.cfg.traversal_budget_multiplier * self.allocated_items.max(1)
    }

    /// Task name as stored in the image; corrupted bytes render as `?`.
    pub fn task_name(&self, tcb: u32) -> String {
        match self.image.read_bytes(tcb + TCB_NAME, TCB_NAME_LEN) {
            Ok(bytes) => {
                let mut s = String::new();
                for b in bytes {
                    if b == 0 {
                        break;
                    }
                    if b.is_ascii_graphic() {
                        s.push(b as char);
                    } else {
                        s.push('?');
                    }
                }
                if s.is_empty() {
                    "?".into()
                } else {
                    s
                }
            }
            Err(_) => "?".into(),
        }
    }

    // ----- events and the fault hook ------------------------------------

    fn emit(&mut self, kind: EventKind, task: String, detail: String) {
        self.boundary();
        self.events.push(KernelEvent {
            tick: self.slot,
            index: self.events_this_tick,
            kind,
            task,
            detail,
        });
        self.events_this_tick += 1;
    }

    /// Injection boundary: the armed fault fires the first time the
    /// simulated clock reaches its (tick, event) instant.
    fn boundary(&mut self) {
        let due = match &self.armed {
            Some(f) => {
                self.slot > f.at_tick
                    || (self.slot == f.at_tick && self.events_this_tick >= f.at_event)
            }
            None => false,
        };
        if due {
            let fault = self.armed.take().unwrap();
            let fired = self.apply_fault(&fault);
            self.fired = Some(fired);
        }
    }

    fn apply_fault(&mut self, fault: &ArmedFault) -> FiredFault {
        let offset = match fault.address {
            TargetAddress::Absolute(o) => o,
            TargetAddress::CurrentTcbField(off) => self.current_tcb_raw().wrapping_add(off),
        };
        let (valid, validity_reason) = match fault.probe {
            ValidityProbe::Always => (true, "always valid".to_string()),
            ValidityProbe::ListNonEmpty { list_base } => {
                let n = self.image.read_field(list_base + LIST_COUNT, 4).unwrap_or(0);
                if n == 0 {
                    (false, "list empty at injection instant".to_string())
                } else {
                    (true, format!("list holds {n} item(s)"))
                }
            }
            ValidityProbe::FeatureUsed(feature) => {
                let tcb = self.current_tcb_raw();
                match self.runtimes.get(&tcb) {
                    Some(rt) => {
                        let used = match feature {
                            Feature::Mutex => rt.mutex_used,
                            Feature::Notify => rt.notify_used,
                            Feature::Tag => rt.tag_used,
                        };
                        if used {
                            (true, "feature exercised by owning task".to_string())
                        } else {
                            (false, "owning task has not used this feature".to_string())
                        }
                    }
                    None => (false, "no current task at injection instant".to_string()),
                }
            }
        };
        let pre_bit = self.image.read_bit(offset, fault.bit).unwrap_or(0);
        match fault.model {
            FaultModel::Transient => {
                let _ = self.image.flip_bit(offset, fault.bit);
            }
            FaultModel::Permanent { stuck } => {
                let level = stuck.unwrap_or(1 - pre_bit);
                let _ = self.image.install_stuck_mask(offset, fault.bit, level);
            }
        }
        let post_bit = self.image.read_bit(offset, fault.bit).unwrap_or(0);
        FiredFault {
            applied_tick: self.slot,
            applied_event: self.events_this_tick,
            offset,
            bit: fault.bit,
            pre_bit,
            post_bit,
            valid,
            validity_reason,
        }
    }

    // ----- scheduling ---------------------------------------------------

    /// Advances the kernel by one scheduling slot: pick the next task,
    /// run its burst, then advance the tick.
    pub fn step_slot(&mut self, bodies: &mut TaskBodies) -> Result<SlotOutcome, KernelPanic> {
        self.boundary();
        let running = self.rd(self.map.var(Var::SchedulerRunning))?;
        if running == 0 {
            return Err(self.panic(PanicReason::Assertion, "scheduler stopped unexpectedly"));
        }

        let current = self.schedule_next()?;
        let kind = self
            .runtimes
            .get(&current)
            .map(|rt| rt.kind)
            .ok_or_else(|| self.panic(PanicReason::InvalidHandle, "current task has no runtime"))?;

        let outcome = match kind {
            TaskKind::Idle => {
                if self.idle_step()? {
                    self.graceful_teardown()?;
                    return Ok(SlotOutcome::Shutdown);
                }
                self.yield_current()?;
                SlotOutcome::Continue
            }
            TaskKind::TimerDaemon => {
                self.timer_daemon_step()?;
                self.daemon_block()?;
                SlotOutcome::Continue
            }
            TaskKind::User => {
                let body = bodies
                    .get_mut(&current)
                    .ok_or_else(|| self.panic(PanicReason::Assertion, "user task has no body"))?;
                let step = {
                    let mut ctx = TaskCtx {
                        kernel: self,
                        tcb: current,
                    };
                    body.step(&mut ctx)?
                };
                match step {
                    StepOutcome::Yield => {
                        self.yield_current()?;
                        SlotOutcome::Continue
                    }
                    StepOutcome::Done(digest) => {
                        let name = self
                            .runtimes
                            .get(&current)
                            .map(|rt| rt.name.clone())
                            .unwrap_or_default();
                        self.outputs.insert(name, (digest, self.slot));
                        self.yield_current()?;
                        self.task_delete_self()?;
                        SlotOutcome::Continue
                    }
                    StepOutcome::Overrun => return Ok(SlotOutcome::BodyOverrun),
                }
            }
        };

        self.tick_advance()?;
        Ok(outcome)
    }

    /// Picks the ready task at the highest non-empty priority,
    /// round-robin within a priority via the list index.
    pub fn schedule_next(&mut self) -> Result<u32, KernelPanic> {
        // context save: the switch touches the outgoing task's TCB before
        // any selection, so a corrupted current pointer faults here
        let prev = self.rd(self.map.ptr(Ptr::CurrentTcb))?;
        if prev != 0 {
            let out = self.deref_tcb(prev)?;
            let rc = self.rd(out + TCB_RUNTIME_COUNTER)?;
            self.wr(out + TCB_RUNTIME_COUNTER, rc)?;
        }
        let levels = self.cfg.priority_levels;
        let top = self.rd(self.map.var(Var::TopReadyPriority))?;
        if top >= levels {
            return Err(self.panic(
                PanicReason::Assertion,
                format!("uxTopReadyPriority {top} out of range"),
            ));
        }
        // ceiling integrity: nothing may be ready above the recorded top
        for p in top + 1..levels {
            let base = self.map.ready_list(p).unwrap();
            if !self.list_is_empty_checked(base)? {
                return Err(self.panic(
                    PanicReason::Assertion,
                    format!("ready task above uxTopReadyPriority at priority {p}"),
                ));
            }
        }
        let mut p = top as i64;
        while p >= 0 {
            let base = self.map.ready_list(p as u32).unwrap();
            if !self.list_is_empty_checked(base)? {
                break;
            }
            p -= 1;
        }
        if p < 0 {
            return Err(self.panic(PanicReason::Assertion, "no ready task, idle missing"));
        }
        let p = p as u32;
        self.wr(self.map.var(Var::TopReadyPriority), p)?;
        let list = self.map.ready_list(p).unwrap();
        let owner = self.rotate_and_owner(list)?;
        let tcb = self.deref_tcb(owner)?;

        let prev = self.rd(self.map.ptr(Ptr::CurrentTcb))?;
        if prev != tcb {
            if prev != 0 {
                let name = self.task_name(prev);
                self.emit(EventKind::TaskSwitchOut, name, String::new());
            }
            self.wr(self.map.ptr(Ptr::CurrentTcb), tcb)?;
            let name = self.task_name(tcb);
            self.emit(EventKind::TaskSwitchIn, name, format!("prio={p}"));
        }
        self.wr(self.map.var(Var::YieldPending), 0)?;
        Ok(tcb)
    }

    /// Current task's cooperative yield bookkeeping: ready-list membership
    /// check, stack pointer movement within its region, runtime accounting.
    fn yield_current(&mut self) -> Result<(), KernelPanic> {
        let tcb = self.deref_tcb(self.rd(self.map.ptr(Ptr::CurrentTcb))?)?;
        let prio = self.rd(tcb + TCB_PRIORITY)?;
        let expected = self.map.ready_list(prio).ok_or_else(|| {
            self.panic(
                PanicReason::Assertion,
                format!("task priority {prio} out of range"),
            )
        })?;
        let container = self.rd(tcb + TCB_STATE_ITEM + ITEM_CONTAINER)?;
        if container != expected {
            return Err(self.panic(
                PanicReason::Assertion,
                "state item not linked to its priority's ready list",
            ));
        }

        let (stack_base, stack_size) = {
            let rt = self.runtimes.get(&tcb).unwrap();
            (rt.stack_base, rt.stack_size)
        };
        let tos = self.rd(tcb + TCB_TOP_OF_STACK)?;
        if tos < stack_base || tos >= stack_base + stack_size {
            return Err(self.panic(
                PanicReason::StackOverflow,
                format!("pxTopOfStack {tos:#x} outside stack region"),
            ));
        }
        let words = stack_size / 4;
        let next = stack_base + 4 * (self.slot % words);
        self.wr(tcb + TCB_TOP_OF_STACK, next)?;
        self.wr(next, self.slot)?;

        let rc = self.rd(tcb + TCB_RUNTIME_COUNTER)?;
        self.wr(tcb + TCB_RUNTIME_COUNTER, rc.wrapping_add(1))?;
        self.wr(self.map.var(Var::YieldPending), 1)?;
        Ok(())
    }

    /// Moves the current task to the termination list for idle cleanup.
    pub fn task_delete_self(&mut self) -> Result<(), KernelPanic> {
        let tcb = self.deref_tcb(self.rd(self.map.ptr(Ptr::CurrentTcb))?)?;
        let item = tcb + TCB_STATE_ITEM;
        self.list_remove(Handle(item))?;
        let term = self.map.state_list(StateList::WaitingTermination);
        self.insert_end(term, item)?;
        let n = self.rd(self.map.var(Var::DeletedTasksWaitingCleanup))?;
        self.wr(self.map.var(Var::DeletedTasksWaitingCleanup), n.wrapping_add(1))?;
        let name = self.task_name(tcb);
        self.emit(EventKind::TaskDelete, name, format!("tcb={tcb:#x}"));
        Ok(())
    }

    /// One idle pass: reclaim one terminated task, then decide whether the
    /// system is done. Returns true when the kernel should shut down.
    pub fn idle_step(&mut self) -> Result<bool, KernelPanic> {
        let idle = self.rd(self.map.ptr(Ptr::IdleTaskHandle))?;
        self.deref_tcb(idle)?;

        let pending = self.rd(self.map.var(Var::DeletedTasksWaitingCleanup))?;
        let term = self.map.state_list(StateList::WaitingTermination);
        if pending > 0 {
            let end = term + LIST_END;
            let head = self.rd(end + ITEM_NEXT)?;
            if head == end {
                // counter says work is pending but the list is empty:
                // dereference the end marker's owner, like the real cleanup
                // loop would, and fault on the null handle
                let owner = self.rd(end + ITEM_OWNER)?;
                self.deref_tcb(owner)?;
                return Err(self.panic(
                    PanicReason::Assertion,
                    "cleanup counter inconsistent with termination list",
                ));
            }
            let head = self.resolve_list_item(head)?;
            let owner = self.rd(head + ITEM_OWNER)?;
            let tcb = self.deref_tcb(owner)?;
            self.list_remove(Handle(head))?;
            self.wr(
                self.map.var(Var::DeletedTasksWaitingCleanup),
                pending.wrapping_sub(1),
            )?;
            let n = self.rd(self.map.var(Var::CurrentNumberOfTasks))?;
            self.wr(self.map.var(Var::CurrentNumberOfTasks), n.wrapping_sub(1))?;
            if let Some(rt) = self.runtimes.get_mut(&tcb) {
                rt.alive = false;
            }
        }

        // shutdown only when no user task remains anywhere and cleanup is done
        if self.user_task_remains()? {
            return Ok(false);
        }
        if !self.list_is_empty_checked(term)? {
            return Ok(false);
        }
        if self.rd(self.map.var(Var::DeletedTasksWaitingCleanup))? != 0 {
            return Ok(false);
        }
        Ok(true)
    }

    fn user_task_remains(&self) -> Result<bool, KernelPanic> {
        let mut lists = Vec::new();
        for p in 0..self.cfg.priority_levels {
            lists.push(self.map.ready_list(p).unwrap());
        }
        lists.push(self.deref_list(self.rd(self.map.ptr(Ptr::DelayedTaskList))?)?);
        lists.push(self.deref_list(self.rd(self.map.ptr(Ptr::OverflowDelayedTaskList))?)?);
        lists.push(self.map.state_list(StateList::Suspended));
        lists.push(self.map.state_list(StateList::PendingReady));
        for base in lists {
            for owner in self.walk_owners(base)? {
                if let Some(rt) = self.runtimes.get(&owner) {
                    if rt.alive && rt.kind == TaskKind::User {
                        return Ok(true);
                    }
                }
            }
        }
        Ok(false)
    }

    /// Orderly stop of the timer service on the way down: validates the
    /// queue and daemon handles and walks both timer lists.
    fn graceful_teardown(&mut self) -> Result<(), KernelPanic> {
        let q = self.rd(self.map.var(Var::TimerQueue))?;
        self.deref_queue(q)?;
        let th = self.rd(self.map.var(Var::TimerTaskHandle))?;
        self.deref_tcb(th)?;
        let cur = self.deref_list(self.rd(self.map.ptr(Ptr::CurrentTimerList))?)?;
        let ovf = self.deref_list(self.rd(self.map.ptr(Ptr::OverflowTimerList))?)?;
        self.walk_owners(cur)?;
        self.walk_owners(ovf)?;
        let idle = self.rd(self.map.ptr(Ptr::IdleTaskHandle))?;
        let name = self.task_name(idle);
        self.emit(EventKind::Shutdown, name, "graceful".into());
        Ok(())
    }

    /// Drains the timer command queue, fires expired timers, and swaps the
    /// timer lists when the tick counter has wrapped since the last sample.
    pub fn timer_daemon_step(&mut self) -> Result<(), KernelPanic> {
        let now = self.rd(self.map.var(Var::TickCount))?;
        if now < self.daemon_last_time {
            let a = self.rd(self.map.ptr(Ptr::CurrentTimerList))?;
            let b = self.rd(self.map.ptr(Ptr::OverflowTimerList))?;
            self.deref_list(a)?;
            self.deref_list(b)?;
            self.wr(self.map.ptr(Ptr::CurrentTimerList), b)?;
            self.wr(self.map.ptr(Ptr::OverflowTimerList), a)?;
        }
        self.daemon_last_time = now;

        let q = self.deref_queue(self.rd(self.map.var(Var::TimerQueue))?)?;
        loop {
            let count = self.rd(q + QUEUE_COUNT)?;
            if count == 0 {
                break;
            }
            let cap = self.rd(q + QUEUE_CAPACITY)?;
            if cap == 0 || cap > 4096 {
                return Err(self.panic(PanicReason::Assertion, "timer queue capacity corrupt"));
            }
            let head = self.rd(q + QUEUE_HEAD)? % cap;
            let entry = q + QUEUE_STORAGE + head * QUEUE_ENTRY_SIZE;
            let cmd = self.rd(entry)?;
            let timer = self.rd(entry + 4)?;
            let arg = self.rd(entry + 8)?;
            self.wr(q + QUEUE_HEAD, (head + 1) % cap)?;
            self.wr(q + QUEUE_COUNT, count.wrapping_sub(1))?;
            match cmd {
                TIMER_CMD_START => {
                    let item = self.resolve_list_item(timer)?;
                    self.wr(item + ITEM_VALUE, arg)?;
                    if arg <= now {
                        let name = self.timer_name(item);
                        self.emit(EventKind::TimerFire, "TmrSvc".into(), name);
                    } else {
                        let cur = self.deref_list(self.rd(self.map.ptr(Ptr::CurrentTimerList))?)?;
                        self.list_insert_ordered(Handle(cur), Handle(item))?;
                    }
                }
                TIMER_CMD_STOP => {
                    let item = self.resolve_list_item(timer)?;
                    let container = self.rd(item + ITEM_CONTAINER)?;
                    if container != 0 {
                        self.list_remove(Handle(item))?;
                    }
                }
                other => {
                    return Err(self.panic(
                        PanicReason::Assertion,
                        format!("unknown timer command {other}"),
                    ));
                }
            }
        }

        // fire expired timers on the current list
        let cur = self.deref_list(self.rd(self.map.ptr(Ptr::CurrentTimerList))?)?;
        let mut budget = self.traversal_budget();
        loop {
            if self.list_is_empty_checked(cur)? {
                break;
            }
            let end = cur + LIST_END;
            let head = self.resolve_list_item(self.rd(end + ITEM_NEXT)?)?;
            let due = self.rd(head + ITEM_VALUE)?;
            if due > now {
                break;
            }
            self.list_remove(Handle(head))?;
            let name = self.timer_name(head);
            self.emit(EventKind::TimerFire, "TmrSvc".into(), name);
            if budget == 0 {
                return Err(self.panic(PanicReason::TraversalOverrun, "timer expiry loop"));
            }
            budget -= 1;
        }
        Ok(())
    }

    fn timer_name(&self, item: u32) -> String {
        self.image
            .record_at(item, ObjectKind::ListItem)
            .map(|r| r.name.clone())
            .unwrap_or_else(|| format!("timer@{item:#x}"))
    }

    /// After its service pass the daemon blocks: until the next expiry when
    /// timers are active, indefinitely on its command queue otherwise.
    fn daemon_block(&mut self) -> Result<(), KernelPanic> {
        let cur = self.deref_list(self.rd(self.map.ptr(Ptr::CurrentTimerList))?)?;
        let wake = if self.list_is_empty_checked(cur)? {
            None
        } else {
            let end = cur + LIST_END;
            let head = self.resolve_list_item(self.rd(end + ITEM_NEXT)?)?;
            Some(self.rd(head + ITEM_VALUE)?)
        };
        let tcb = self.deref_tcb(self.rd(self.map.ptr(Ptr::CurrentTcb))?)?;
        self.block_task(tcb, wake)?;
        // the daemon waits for commands on the queue's waiter list
        let q = self.deref_queue(self.rd(self.map.var(Var::TimerQueue))?)?;
        self.insert_end(q + QUEUE_WAITLIST, tcb + TCB_EVENT_ITEM)?;
        Ok(())
    }

    /// Removes a task from its ready list and parks it: on the delayed list
    /// with a wake time, or on the suspended list indefinitely.
    fn block_task(&mut self, tcb: u32, wake: Option<u32>) -> Result<(), KernelPanic> {
        let item = tcb + TCB_STATE_ITEM;
        self.list_remove(Handle(item))?;
        match wake {
            Some(t) => {
                self.wr(item + ITEM_VALUE, t)?;
                let now = self.rd(self.map.var(Var::TickCount))?;
                let list = if t < now {
                    self.deref_list(self.rd(self.map.ptr(Ptr::OverflowDelayedTaskList))?)?
                } else {
                    let l = self.deref_list(self.rd(self.map.ptr(Ptr::DelayedTaskList))?)?;
                    let unblock = self.rd(self.map.var(Var::NextTaskUnblockTime))?;
                    if t < unblock {
                        self.wr(self.map.var(Var::NextTaskUnblockTime), t)?;
                    }
                    l
                };
                self.list_insert_ordered(Handle(list), Handle(item))?;
            }
            None => {
                let susp = self.map.state_list(StateList::Suspended);
                self.insert_end(susp, item)?;
            }
        }
        Ok(())
    }

    /// Delays the current task for `ticks` ticks.
    pub fn delay_current(&mut self, ticks: u32) -> Result<(), KernelPanic> {
        let tcb = self.deref_tcb(self.rd(self.map.ptr(Ptr::CurrentTcb))?)?;
        let now = self.rd(self.map.var(Var::TickCount))?;
        self.block_task(tcb, Some(now.wrapping_add(ticks)))
    }

    /// Suspends the current task indefinitely.
    pub fn suspend_current(&mut self) -> Result<(), KernelPanic> {
        let tcb = self.deref_tcb(self.rd(self.map.ptr(Ptr::CurrentTcb))?)?;
        self.block_task(tcb, None)
    }

    fn add_task_to_ready_list(&mut self, tcb: u32) -> Result<(), KernelPanic> {
        let prio = self.rd(tcb + TCB_PRIORITY)?;
        let ready = self.map.ready_list(prio).ok_or_else(|| {
            self.panic(
                PanicReason::Assertion,
                format!("unblocked task priority {prio} out of range"),
            )
        })?;
        self.insert_end(ready, tcb + TCB_STATE_ITEM)?;
        let top = self.rd(self.map.var(Var::TopReadyPriority))?;
        if prio > top && prio < self.cfg.priority_levels {
            self.wr(self.map.var(Var::TopReadyPriority), prio)?;
        }
        Ok(())
    }

    /// Advances the tick: wraps increment the overflow counter and swap the
    /// delayed lists; due delayed tasks move back to their ready lists.
    pub fn tick_advance(&mut self) -> Result<(), KernelPanic> {
        let old = self.rd(self.map.var(Var::TickCount))?;
        let new = old.wrapping_add(1);
        self.wr(self.map.var(Var::TickCount), new)?;

        if new == 0 {
            let n = self.rd(self.map.var(Var::NumOfOverflows))?;
            self.wr(self.map.var(Var::NumOfOverflows), n.wrapping_add(1))?;
            let a = self.deref_list(self.rd(self.map.ptr(Ptr::DelayedTaskList))?)?;
            let b = self.deref_list(self.rd(self.map.ptr(Ptr::OverflowDelayedTaskList))?)?;
            if !self.list_is_empty_checked(a)? {
                return Err(self.panic(
                    PanicReason::Assertion,
                    "delayed list not drained at tick overflow",
                ));
            }
            self.wr(self.map.ptr(Ptr::DelayedTaskList), b)?;
            self.wr(self.map.ptr(Ptr::OverflowDelayedTaskList), a)?;
            self.emit(
                EventKind::TickOverflow,
                String::new(),
                format!("overflows={}", n.wrapping_add(1)),
            );
            self.reset_next_unblock_time()?;
        }

        let unblock = self.rd(self.map.var(Var::NextTaskUnblockTime))?;
        if new >= unblock {
            self.wake_due_tasks(new)?;
        }

        self.slot += 1;
        self.events_this_tick = 0;
        Ok(())
    }

    fn wake_due_tasks(&mut self, now: u32) -> Result<(), KernelPanic> {
        let list = self.deref_list(self.rd(self.map.ptr(Ptr::DelayedTaskList))?)?;
        let mut budget = self.traversal_budget();
        loop {
            if self.list_is_empty_checked(list)? {
                self.wr(self.map.var(Var::NextTaskUnblockTime), u32::MAX)?;
                break;
            }
            let end = list + LIST_END;
            let head = self.resolve_list_item(self.rd(end + ITEM_NEXT)?)?;
            let wake = self.rd(head + ITEM_VALUE)?;
            if wake > now {
                self.wr(self.map.var(Var::NextTaskUnblockTime), wake)?;
                break;
            }
            let owner = self.rd(head + ITEM_OWNER)?;
            let tcb = self.deref_tcb(owner)?;
            self.list_remove(Handle(head))?;
            // drop any event-list linkage (queue waits time out with the delay)
            let ev = tcb + TCB_EVENT_ITEM;
            let ev_container = self.rd(ev + ITEM_CONTAINER)?;
            if ev_container != 0 {
                self.list_remove(Handle(ev))?;
            }
            self.add_task_to_ready_list(tcb)?;
            if budget == 0 {
                return Err(self.panic(PanicReason::TraversalOverrun, "unblock loop"));
            }
            budget -= 1;
        }
        Ok(())
    }

    fn reset_next_unblock_time(&mut self) -> Result<(), KernelPanic> {
        let list = self.deref_list(self.rd(self.map.ptr(Ptr::DelayedTaskList))?)?;
        if self.list_is_empty_checked(list)? {
            self.wr(self.map.var(Var::NextTaskUnblockTime), u32::MAX)?;
        } else {
            let end = list + LIST_END;
            let head = self.resolve_list_item(self.rd(end + ITEM_NEXT)?)?;
            let wake = self.rd(head + ITEM_VALUE)?;
            self.wr(self.map.var(Var::NextTaskUnblockTime), wake)?;
        }
        Ok(())
    }

    // ----- timers (API used by tests and the CLI) -----------------------

    /// Allocates a one-shot software timer object.
    pub fn timer_create(&mut self, name: &str) -> Result<Handle, KernelInitError> {
        let base = self.bump.alloc(ITEM_SIZE, self.cfg.image_capacity)?;
        self.image.register(ObjectRecord {
            name: format!("timer.{name}"),
            base,
            size: ITEM_SIZE,
            kind: ObjectKind::ListItem,
            parent: None,
        })?;
        self.w(base + ITEM_VALUE, 0)?;
        self.w(base + ITEM_NEXT, 0)?;
        self.w(base + ITEM_PREV, 0)?;
        self.w(base + ITEM_OWNER, base)?;
        self.w(base + ITEM_CONTAINER, 0)?;
        self.allocated_items += 1;
        Ok(Handle(base))
    }

    /// Posts a command to the timer queue and wakes the daemon if it is
    /// blocked waiting for work.
    pub fn send_timer_command(
        &mut self,
        cmd: u32,
        timer: Handle,
        arg: u32,
    ) -> Result<(), KernelPanic> {
        let q = self.deref_queue(self.rd(self.map.var(Var::TimerQueue))?)?;
        let cap = self.rd(q + QUEUE_CAPACITY)?;
        let count = self.rd(q + QUEUE_COUNT)?;
        if count >= cap {
            return Err(self.panic(PanicReason::Assertion, "timer command queue full"));
        }
        let tail = (self.rd(q + QUEUE_HEAD)? + count) % cap;
        let entry = q + QUEUE_STORAGE + tail * QUEUE_ENTRY_SIZE;
        self.wr(entry, cmd)?;
        self.wr(entry + 4, timer.0)?;
        self.wr(entry + 8, arg)?;
        self.wr(q + QUEUE_COUNT, count + 1)?;

        // wake the first waiter, if any
        let waitlist = q + QUEUE_WAITLIST;
        if !self.list_is_empty_checked(waitlist)? {
            let end = waitlist + LIST_END;
            let head = self.resolve_list_item(self.rd(end + ITEM_NEXT)?)?;
            let owner = self.rd(head + ITEM_OWNER)?;
            let tcb = self.deref_tcb(owner)?;
            self.list_remove(Handle(head))?;
            let state = tcb + TCB_STATE_ITEM;
            let container = self.rd(state + ITEM_CONTAINER)?;
            if container != 0 {
                self.list_remove(Handle(state))?;
            }
            self.add_task_to_ready_list(tcb)?;
        }
        Ok(())
    }

    // ----- current-task operations exposed to bodies --------------------

    fn ctx_tcb(&self, tcb: u32) -> Result<u32, KernelPanic> {
        self.deref_tcb(tcb)
    }

    fn mutex_take(&mut self, tcb: u32) -> Result<(), KernelPanic> {
        let tcb = self.ctx_tcb(tcb)?;
        let held = self.rd(tcb + TCB_MUTEXES_HELD)?;
        self.wr(tcb + TCB_MUTEXES_HELD, held.wrapping_add(1))?;
        if let Some(rt) = self.runtimes.get_mut(&tcb) {
            rt.mutex_used = true;
        }
        Ok(())
    }

    fn mutex_give(&mut self, tcb: u32) -> Result<(), KernelPanic> {
        let tcb = self.ctx_tcb(tcb)?;
        let held = self.rd(tcb + TCB_MUTEXES_HELD)?;
        if held == 0 {
            return Err(self.panic(PanicReason::Assertion, "mutex give with none held"));
        }
        let base = self.rd(tcb + TCB_BASE_PRIORITY)?;
        let prio = self.rd(tcb + TCB_PRIORITY)?;
        if base > prio {
            return Err(self.panic(
                PanicReason::Assertion,
                "base priority above current priority",
            ));
        }
        self.wr(tcb + TCB_MUTEXES_HELD, held - 1)?;
        Ok(())
    }

    fn notify_self(&mut self, tcb: u32, value: u32) -> Result<(), KernelPanic> {
        let tcb = self.ctx_tcb(tcb)?;
        let state = self
            .image
            .read_field(tcb + TCB_NOTIFY_STATE, 1)
            .map_err(|e| self.panic(PanicReason::UnmappedAccess, e.to_string()))?;
        if state > 2 {
            return Err(self.panic(PanicReason::Assertion, "notify state corrupt"));
        }
        self.wr(tcb + TCB_NOTIFIED_VALUE, value)?;
        self.image
            .write_field(tcb + TCB_NOTIFY_STATE, 1, 2)
            .map_err(|e| self.panic(PanicReason::UnmappedAccess, e.to_string()))?;
        if let Some(rt) = self.runtimes.get_mut(&tcb) {
            rt.notify_used = true;
        }
        Ok(())
    }

    fn consume_notification(&mut self, tcb: u32) -> Result<u32, KernelPanic> {
        let tcb = self.ctx_tcb(tcb)?;
        let state = self
            .image
            .read_field(tcb + TCB_NOTIFY_STATE, 1)
            .map_err(|e| self.panic(PanicReason::UnmappedAccess, e.to_string()))?;
        if state != 2 {
            return Err(self.panic(PanicReason::Assertion, "notification lost"));
        }
        let value = self.rd(tcb + TCB_NOTIFIED_VALUE)?;
        self.image
            .write_field(tcb + TCB_NOTIFY_STATE, 1, 0)
            .map_err(|e| self.panic(PanicReason::UnmappedAccess, e.to_string()))?;
        Ok(value)
    }

    fn set_task_tag(&mut self, tcb: u32) -> Result<(), KernelPanic> {
        let tcb = self.ctx_tcb(tcb)?;
        self.wr(tcb + TCB_TASK_TAG, tcb)?;
        if let Some(rt) = self.runtimes.get_mut(&tcb) {
            rt.tag_used = true;
        }
        Ok(())
    }

    // ----- test support --------------------------------------------------

    /// Multiset of (task name, containing list name) across all state lists,
    /// used by partition-invariant tests.
    pub fn state_census(&self) -> Result<Vec<(String, String)>, KernelPanic> {
        let mut lists: Vec<(u32, String)> = (0..self.cfg.priority_levels)
            .map(|p| (self.map.ready_list(p).unwrap(), format!("ready[{p}]")))
            .collect();
        for (l, name) in STATE_LISTS.iter() {
            lists.push((self.map.state_list(*l), (*name).to_string()));
        }
        let mut out = Vec::new();
        for (base, label) in lists {
            for owner in self.walk_owners(base)? {
                let name = self
                    .runtimes
                    .get(&owner)
                    .map(|rt| rt.name.clone())
                    .unwrap_or_else(|| format!("{owner:#x}"));
                out.push((name, label.clone()));
            }
        }
        Ok(out)
    }
}

/// Kernel access handed to a task body for the duration of one burst.
pub struct TaskCtx<'a> {
    kernel: &'a mut Kernel,
    tcb: u32,
}

impl TaskCtx<'_> {
    pub fn tcb(&self) -> u32 {
        self.tcb
    }

    pub fn mutex_take(&mut self) -> Result<(), KernelPanic> {
        self.kernel.mutex_take(self.tcb)
    }

    pub fn mutex_give(&mut self) -> Result<(), KernelPanic> {
        self.kernel.mutex_give(self.tcb)
    }

    pub fn notify_self(&mut self, value: u32) -> Result<(), KernelPanic> {
        self.kernel.notify_self(self.tcb, value)
    }

    pub fn consume_notification(&mut self) -> Result<u32, KernelPanic> {
        self.kernel.consume_notification(self.tcb)
    }

    pub fn set_task_tag(&mut self) -> Result<(), KernelPanic> {
        self.kernel.set_task_tag(self.tcb)
    }
}
