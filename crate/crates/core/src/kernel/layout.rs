//! In-image layout of every kernel object.
//!
//! All scalar kernel fields are 32-bit little-endian except the 8-bit
//! TCB flags. Offsets are fixed so that the same config always produces
//! the same catalog of injectable locations.

/// KList: item count, rotating index, embedded end marker.
pub const LIST_COUNT: u32 = 0;
pub const LIST_INDEX: u32 = 4;
pub const LIST_END: u32 = 8;
pub const LIST_SIZE: u32 = 8 + ITEM_SIZE;

/// KListItem: sort key and circular links.
pub const ITEM_VALUE: u32 = 0;
pub const ITEM_NEXT: u32 = 4;
pub const ITEM_PREV: u32 = 8;
pub const ITEM_OWNER: u32 = 12;
pub const ITEM_CONTAINER: u32 = 16;
pub const ITEM_SIZE: u32 = 20;

/// End markers carry the maximal sort key.
pub const END_MARKER_VALUE: u32 = u32::MAX;

/// Task control block layout.
pub const TCB_NAME: u32 = 0;
pub const TCB_NAME_LEN: u32 = 16;
pub const TCB_STACK: u32 = 16;
pub const TCB_TOP_OF_STACK: u32 = 20;
pub const TCB_TASK_TAG: u32 = 24;
pub const TCB_PRIORITY: u32 = 28;
pub const TCB_BASE_PRIORITY: u32 = 32;
pub const TCB_MUTEXES_HELD: u32 = 36;
pub const TCB_TASK_NUMBER: u32 = 40;
pub const TCB_TCB_NUMBER: u32 = 44;
pub const TCB_RUNTIME_COUNTER: u32 = 48;
pub const TCB_NOTIFIED_VALUE: u32 = 52;
pub const TCB_NOTIFY_STATE: u32 = 56;
pub const TCB_DELAY_ABORTED: u32 = 57;
// two bytes of padding keep the embedded items 4-byte aligned
pub const TCB_STATE_ITEM: u32 = 60;
pub const TCB_EVENT_ITEM: u32 = 80;
pub const TCB_SIZE: u32 = 100;

/// The fifteen injectable TCB fields: `(name, offset, size)`.
pub const TCB_FIELDS: [(&str, u32, u32); 15] = [
    ("pcTaskName", TCB_NAME, TCB_NAME_LEN),
    ("pxStack", TCB_STACK, 4),
    ("pxTaskTag", TCB_TASK_TAG, 4),
    ("pxTopOfStack", TCB_TOP_OF_STACK, 4),
    ("ucDelayAborted", TCB_DELAY_ABORTED, 1),
    ("ucNotifyState", TCB_NOTIFY_STATE, 1),
    ("ulNotifiedValue", TCB_NOTIFIED_VALUE, 4),
    ("ulRunTimeCounter", TCB_RUNTIME_COUNTER, 4),
    ("uxBasePriority", TCB_BASE_PRIORITY, 4),
    ("uxMutexesHeld", TCB_MUTEXES_HELD, 4),
    ("uxPriority", TCB_PRIORITY, 4),
    ("uxTaskNumber", TCB_TASK_NUMBER, 4),
    ("uxTCBNumber", TCB_TCB_NUMBER, 4),
    ("xEventListItem", TCB_EVENT_ITEM, ITEM_SIZE),
    ("xStateListItem", TCB_STATE_ITEM, ITEM_SIZE),
];

/// Timer command queue: fixed header, embedded waiter list, ring storage.
pub const QUEUE_CAPACITY: u32 = 0;
pub const QUEUE_COUNT: u32 = 4;
pub const QUEUE_HEAD: u32 = 8;
pub const QUEUE_WAITLIST: u32 = 12;
pub const QUEUE_STORAGE: u32 = QUEUE_WAITLIST + LIST_SIZE;
pub const QUEUE_ENTRY_SIZE: u32 = 12;

pub fn queue_size(capacity: u32) -> u32 {
    QUEUE_STORAGE + capacity * QUEUE_ENTRY_SIZE
}

/// Timer queue commands.
pub const TIMER_CMD_START: u32 = 1;
pub const TIMER_CMD_STOP: u32 = 2;

/// The twelve scheduler globals, in catalog order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    CurrentNumberOfTasks,
    DeletedTasksWaitingCleanup,
    PendedTicks,
    TaskNumber,
    TopReadyPriority,
    NextTaskUnblockTime,
    TickCount,
    NumOfOverflows,
    SchedulerRunning,
    TimerQueue,
    TimerTaskHandle,
    YieldPending,
}

pub const VARS: [(Var, &str); 12] = [
    (Var::CurrentNumberOfTasks, "uxCurrentNumberOfTasks"),
    (Var::DeletedTasksWaitingCleanup, "uxDeletedTasksWaitingCleanup"),
    (Var::PendedTicks, "xPendedTicks"),
    (Var::TaskNumber, "uxTaskNumber"),
    (Var::TopReadyPriority, "uxTopReadyPriority"),
    (Var::NextTaskUnblockTime, "xNextTaskUnblockTime"),
    (Var::TickCount, "xTickCount"),
    (Var::NumOfOverflows, "xNumOfOverflows"),
    (Var::SchedulerRunning, "xSchedulerRunning"),
    (Var::TimerQueue, "xTimerQueue"),
    (Var::TimerTaskHandle, "xTimerTaskHandle"),
    (Var::YieldPending, "xYieldPending"),
];

/// The six scheduler pointers, in catalog order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ptr {
    CurrentTcb,
    CurrentTimerList,
    DelayedTaskList,
    OverflowDelayedTaskList,
    OverflowTimerList,
    IdleTaskHandle,
}

pub const PTRS: [(Ptr, &str); 6] = [
    (Ptr::CurrentTcb, "pxCurrentTCB"),
    (Ptr::CurrentTimerList, "pxCurrentTimerList"),
    (Ptr::DelayedTaskList, "pxDelayedTaskList"),
    (Ptr::OverflowDelayedTaskList, "pxOverflowDelayedTaskList"),
    (Ptr::OverflowTimerList, "pxOverflowTimerList"),
    (Ptr::IdleTaskHandle, "xIdleTaskHandle"),
];

/// Non-ready state lists, in catalog order after the per-priority ready lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateList {
    Delayed1,
    Delayed2,
    PendingReady,
    ActiveTimer1,
    ActiveTimer2,
    Suspended,
    WaitingTermination,
}

pub const STATE_LISTS: [(StateList, &str); 7] = [
    (StateList::Delayed1, "xDelayedTaskList1"),
    (StateList::Delayed2, "xDelayedTaskList2"),
    (StateList::PendingReady, "xPendingReadyList"),
    (StateList::ActiveTimer1, "xActiveTimerList1"),
    (StateList::ActiveTimer2, "xActiveTimerList2"),
    (StateList::Suspended, "xSuspendedTaskList"),
    (StateList::WaitingTermination, "xTasksWaitingTermination"),
];
