//! Intrusive circular doubly-linked lists over the kernel image.
//!
//! Layout matches the classic scheduler list: a 32-bit item count, a
//! rotating index used for round-robin selection, and an embedded end
//! marker carrying the maximal sort key. Items keep a sort key, forward
//! and backward links, an owner handle, and a container back-reference.
//! Every hop through a link validates the handle; walks are bounded by
//! the traversal budget so corrupted cycles fail fast instead of looping.

use super::layout::*;
use super::{Kernel, KernelPanic, PanicReason};
use crate::image::Handle;

impl Kernel {
    /// Emptiness test with structural integrity checks: an empty list must
    /// be self-circular and the end marker must carry the maximal key.
    pub(crate) fn list_is_empty_checked(&self, base: u32) -> Result<bool, KernelPanic> {
        let end = base + LIST_END;
        let count = self.rd(base + LIST_COUNT)?;
        let next = self.rd(end + ITEM_NEXT)?;
        let prev = self.rd(end + ITEM_PREV)?;
        let key = self.rd(end + ITEM_VALUE)?;
        if key != END_MARKER_VALUE {
            return Err(self.list_panic(base, "end marker key corrupt"));
        }
        if count == 0 {
            if next != end || prev != end {
                return Err(self.list_panic(base, "empty list not self-circular"));
            }
            return Ok(true);
        }
        if next == end && prev == end {
            return Err(self.list_panic(base, "count nonzero on empty structure"));
        }
        Ok(false)
    }

    fn list_panic(&self, base: u32, what: &str) -> KernelPanic {
        let name = self
            .image()
            .objects()
            .iter()
            .find(|o| o.base == base)
            .map(|o| o.name.clone())
            .unwrap_or_else(|| format!("{base:#x}"));
        KernelPanic {
            reason: PanicReason::Assertion,
            tick: self.slot(),
            detail: format!("{what} in {name}"),
        }
    }

    /// Inserts an item keeping non-decreasing key order, end marker last.
    /// Equal keys preserve insertion order.
    pub fn list_insert_ordered(&mut self, list: Handle, item: Handle) -> Result<(), KernelPanic> {
        let base = self.deref_list(list.0)?;
        let item = self.resolve_list_item(item.0)?;
        let end = base + LIST_END;
        let value = self.rd(item + ITEM_VALUE)?;
        let mut budget = self.traversal_budget();

        let insert_after = if value == END_MARKER_VALUE {
            // maximal keys go straight to the back, like the reference list
            self.resolve_list_item(self.rd(end + ITEM_PREV)?)?
        } else {
            let mut cursor = end;
            loop {
                let next = self.resolve_list_item(self.rd(cursor + ITEM_NEXT)?)?;
                if next == end {
                    break cursor;
                }
                let next_value = self.rd(next + ITEM_VALUE)?;
                if next_value > value {
                    break cursor;
                }
                cursor = next;
                if budget == 0 {
                    return Err(KernelPanic {
                        reason: PanicReason::TraversalOverrun,
                        tick: self.slot(),
                        detail: "ordered insert walk exceeded budget".into(),
                    });
                }
                budget -= 1;
            }
        };

        self.splice_after(base, insert_after, item)
    }

    /// Inserts an item at the logical end of the list (just behind the
    /// rotating index), which yields round-robin fairness for ready lists.
    pub(crate) fn insert_end(&mut self, base: u32, item: u32) -> Result<(), KernelPanic> {
        let idx = self.resolve_list_item(self.rd(base + LIST_INDEX)?)?;
        let prev = self.resolve_list_item(self.rd(idx + ITEM_PREV)?)?;
        self.splice_between(base, prev, item, idx)
    }

    fn splice_after(&mut self, base: u32, after: u32, item: u32) -> Result<(), KernelPanic> {
        let next = self.resolve_list_item(self.rd(after + ITEM_NEXT)?)?;
        self.splice_between(base, after, item, next)
    }

    fn splice_between(
        &mut self,
        base: u32,
        before: u32,
        item: u32,
        after: u32,
    ) -> Result<(), KernelPanic> {
        self.wr(item + ITEM_NEXT, after)?;
        self.wr(item + ITEM_PREV, before)?;
        self.wr(before + ITEM_NEXT, item)?;
        self.wr(after + ITEM_PREV, item)?;
        self.wr(item + ITEM_CONTAINER, base)?;
        let count = self.rd(base + LIST_COUNT)?;
        self.wr(base + LIST_COUNT, count.wrapping_add(1))?;
        Ok(())
    }

    /// Unlinks an item from its containing list and clears its container.
    pub fn list_remove(&mut self, item: Handle) -> Result<(), KernelPanic> {
        let item = self.resolve_list_item(item.0)?;
        let base = self.deref_list(self.rd(item + ITEM_CONTAINER)?)?;
        let next = self.resolve_list_item(self.rd(item + ITEM_NEXT)?)?;
        let prev = self.resolve_list_item(self.rd(item + ITEM_PREV)?)?;
        self.wr(prev + ITEM_NEXT, next)?;
        self.wr(next + ITEM_PREV, prev)?;
        // keep the rotating index valid
        let idx = self.rd(base + LIST_INDEX)?;
        if idx == item {
            self.wr(base + LIST_INDEX, prev)?;
        }
        self.wr(item + ITEM_CONTAINER, 0)?;
        let count = self.rd(base + LIST_COUNT)?;
        self.wr(base + LIST_COUNT, count.wrapping_sub(1))?;
        Ok(())
    }

    /// Advances the rotating index past the end marker and returns the
    /// owner of the entry it lands on.
    pub(crate) fn rotate_and_owner(&mut self, base: u32) -> Result<u32, KernelPanic> {
        let end = base + LIST_END;
        let idx = self.resolve_list_item(self.rd(base + LIST_INDEX)?)?;
        let mut next = self.resolve_list_item(self.rd(idx + ITEM_NEXT)?)?;
        if next == end {
            next = self.resolve_list_item(self.rd(next + ITEM_NEXT)?)?;
        }
        if next == end {
            return Err(self.list_panic(base, "rotation found no entries"));
        }
        self.wr(base + LIST_INDEX, next)?;
        self.rd(next + ITEM_OWNER)
    }

    /// Walks the whole cycle from the end marker, returning item owners in
    /// traversal order. Budget-bounded.
    pub(crate) fn walk_owners(&self, base: u32) -> Result<Vec<u32>, KernelPanic> {
        let end = base + LIST_END;
        // validates marker shape before walking
        if self.list_is_empty_checked(base)? {
            return Ok(Vec::new());
        }
        let mut owners = Vec::new();
        let mut budget = self.traversal_budget();
        let mut cursor = self.resolve_list_item(self.rd(end + ITEM_NEXT)?)?;
        while cursor != end {
            owners.push(self.rd(cursor + ITEM_OWNER)?);
            cursor = self.resolve_list_item(self.rd(cursor + ITEM_NEXT)?)?;
            if budget == 0 {
                return Err(KernelPanic {
                    reason: PanicReason::TraversalOverrun,
                    tick: self.slot(),
                    detail: "list walk exceeded budget".into(),
                });
            }
            budget -= 1;
        }
        Ok(owners)
    }

    /// Traversal order of item keys, used by list tests.
    pub fn list_values(&self, list: Handle) -> Result<Vec<u32>, KernelPanic> {
        let base = self.deref_list(list.0)?;
        let end = base + LIST_END;
        if self.list_is_empty_checked(base)? {
            return Ok(Vec::new());
        }
        let mut values = Vec::new();
        let mut budget = self.traversal_budget();
        let mut cursor = self.resolve_list_item(self.rd(end + ITEM_NEXT)?)?;
        while cursor != end {
            values.push(self.rd(cursor + ITEM_VALUE)?);
            cursor = self.resolve_list_item(self.rd(cursor + ITEM_NEXT)?)?;
            if budget == 0 {
                return Err(KernelPanic {
                    reason: PanicReason::TraversalOverrun,
                    tick: self.slot(),
                    detail: "list walk exceeded budget".into(),
                });
            }
            budget -= 1;
        }
        Ok(values)
    }

    /// Item count as stored in the list header.
    pub fn list_len(&self, list: Handle) -> Result<u32, KernelPanic> {
        let base = self.deref_list(list.0)?;
        self.rd(base + LIST_COUNT)
    }

    /// Traversal order as (item handle, key) pairs, used by list tests.
    pub fn list_items(&self, list: Handle) -> Result<Vec<(u32, u32)>, KernelPanic> {
        let base = self.deref_list(list.0)?;
        let end = base + LIST_END;
        if self.list_is_empty_checked(base)? {
            return Ok(Vec::new());
        }
        let mut items = Vec::new();
        let mut budget = self.traversal_budget();
        let mut cursor = self.resolve_list_item(self.rd(end + ITEM_NEXT)?)?;
        while cursor != end {
            items.push((cursor, self.rd(cursor + ITEM_VALUE)?));
            cursor = self.resolve_list_item(self.rd(cursor + ITEM_NEXT)?)?;
            if budget == 0 {
                return Err(KernelPanic {
                    reason: PanicReason::TraversalOverrun,
                    tick: self.slot(),
                    detail: "list walk exceeded budget".into(),
                });
            }
            budget -= 1;
        }
        Ok(items)
    }

    /// Sets an item's sort key (valid only while the item is unlinked).
    pub fn item_set_value(&mut self, item: Handle, value: u32) -> Result<(), KernelPanic> {
        let item = self.resolve_list_item(item.0)?;
        self.wr(item + ITEM_VALUE, value)
    }
}
