//! Brute-force equivalence between the intrusive kernel lists and a plain
//! sorted-array model, plus structural invariants under random
//! insert/remove traffic.

use proptest::prelude::*;

use kfi_core::config::KernelConfig;
use kfi_core::image::Handle;
use kfi_core::kernel::Kernel;

/// Plain-array reference model with the kernel list's ordering rule:
/// insert after every item whose key is <= the new key.
#[derive(Default)]
struct ArrayModel {
    items: Vec<(u32, u32)>, // (item handle, key)
}

impl ArrayModel {
    fn insert(&mut self, item: u32, key: u32) {
        let pos = self
            .items
            .iter()
            .position(|(_, k)| *k > key)
            .unwrap_or(self.items.len());
        self.items.insert(pos, (item, key));
    }

    fn remove(&mut self, item: u32) {
        self.items.retain(|(i, _)| *i != item);
    }
}

struct Fixture {
    kernel: Kernel,
    list: Handle,
    items: Vec<Handle>,
}

fn fixture(slots: usize) -> Fixture {
    let mut kernel = Kernel::init(&KernelConfig::default()).unwrap();
    let list = Handle(kernel.address_map().state_list(kfi_core::kernel::layout::StateList::ActiveTimer1));
    let items = (0..slots)
        .map(|i| kernel.timer_create(&format!("i{i}")).unwrap())
        .collect();
    Fixture { kernel, list, items }
}

#[derive(Debug, Clone)]
enum Op {
    Insert { slot: usize, key: u32 },
    Remove { slot: usize },
}

fn op_strategy(slots: usize) -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0..slots, any::<u32>()).prop_map(|(slot, key)| Op::Insert { slot, key }),
        2 => (0..slots).prop_map(|slot| Op::Remove { slot }),
    ]
}

fn run_sequence(fx: &mut Fixture, ops: &[Op]) {
    let mut model = ArrayModel::default();
    let mut linked = vec![false; fx.items.len()];
    for op in ops {
        match op {
            Op::Insert { slot, key } => {
                if !linked[*slot] {
                    let item = fx.items[*slot];
                    fx.kernel.item_set_value(item, *key).unwrap();
                    fx.kernel.list_insert_ordered(fx.list, item).unwrap();
                    model.insert(item.0, *key);
                    linked[*slot] = true;
                }
            }
            Op::Remove { slot } => {
                if linked[*slot] {
                    let item = fx.items[*slot];
                    fx.kernel.list_remove(item).unwrap();
                    model.remove(item.0);
                    linked[*slot] = false;
                }
            }
        }
        let got = fx.kernel.list_items(fx.list).unwrap();
        assert_eq!(got, model.items, "traversal diverged from array model");
        assert_eq!(
            fx.kernel.list_len(fx.list).unwrap() as usize,
            model.items.len()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Traversal equals the sorted-array model element for element after
    /// every operation.
    #[test]
    fn matches_array_model(ops in proptest::collection::vec(op_strategy(16), 1..120)) {
        let mut fx = fixture(16);
        run_sequence(&mut fx, &ops);
    }

    /// Keys are always non-decreasing in traversal order.
    #[test]
    fn traversal_is_sorted(ops in proptest::collection::vec(op_strategy(8), 1..60)) {
        let mut fx = fixture(8);
        // reuse the model runner for the structural walk side effects
        run_sequence(&mut fx, &ops);
        let values: Vec<u32> = fx
            .kernel
            .list_items(fx.list)
            .unwrap()
            .iter()
            .map(|(_, k)| *k)
            .collect();
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn equal_keys_preserve_insertion_order() {
    let mut fx = fixture(4);
    for item in fx.items.clone().iter() {
        fx.kernel.item_set_value(*item, 7).unwrap();
        fx.kernel.list_insert_ordered(fx.list, *item).unwrap();
    }
    let order: Vec<u32> = fx
        .kernel
        .list_items(fx.list)
        .unwrap()
        .iter()
        .map(|(h, _)| *h)
        .collect();
    let expected: Vec<u32> = fx.items.iter().map(|h| h.0).collect();
    assert_eq!(order, expected);
}

#[test]
fn maximal_key_items_go_last() {
    let mut fx = fixture(3);
    let [a, b, c] = [fx.items[0], fx.items[1], fx.items[2]];
    fx.kernel.item_set_value(a, u32::MAX).unwrap();
    fx.kernel.list_insert_ordered(fx.list, a).unwrap();
    fx.kernel.item_set_value(b, 5).unwrap();
    fx.kernel.list_insert_ordered(fx.list, b).unwrap();
    fx.kernel.item_set_value(c, u32::MAX).unwrap();
    fx.kernel.list_insert_ordered(fx.list, c).unwrap();
    let order: Vec<u32> = fx
        .kernel
        .list_items(fx.list)
        .unwrap()
        .iter()
        .map(|(h, _)| *h)
        .collect();
    assert_eq!(order, vec![b.0, a.0, c.0]);
}
