//! Property suites for the two fault models over the kernel image:
//! transient atomicity and non-persistence, stuck-at persistence under
//! arbitrary write sequences, and access totality.

use proptest::prelude::*;

use kfi_core::image::KernelImage;

const CAP: u32 = 4096;

fn image_with_bytes(seed: &[u8]) -> KernelImage {
    let mut img = KernelImage::new(CAP).unwrap();
    for (i, b) in seed.iter().enumerate() {
        img.write_field(i as u32 % CAP, 1, *b as u32).unwrap();
    }
    img
}

proptest! {
    /// Transient atomicity: the image differs from its pre-injection
    /// snapshot in exactly one bit.
    #[test]
    fn flip_changes_exactly_one_bit(
        bytes in proptest::collection::vec(any::<u8>(), 1..64),
        offset in 0u32..CAP,
        bit in 0u8..8,
    ) {
        let mut img = image_with_bytes(&bytes);
        let before = img.snapshot();
        img.flip_bit(offset, bit).unwrap();
        let diff = before.diff(&img.snapshot());
        prop_assert_eq!(diff, vec![(offset, bit)]);
    }

    /// Transient involution: flipping the same bit twice restores the
    /// original image exactly.
    #[test]
    fn double_flip_restores_image(
        bytes in proptest::collection::vec(any::<u8>(), 1..64),
        offset in 0u32..CAP,
        bit in 0u8..8,
    ) {
        let mut img = image_with_bytes(&bytes);
        let before = img.snapshot();
        img.flip_bit(offset, bit).unwrap();
        img.flip_bit(offset, bit).unwrap();
        prop_assert!(before.diff(&img.snapshot()).is_empty());
    }

    /// Transient non-persistence: a flip followed by a field write reads
    /// back exactly the written value.
    #[test]
    fn flip_then_write_reads_written_value(
        offset in 0u32..CAP - 4,
        bit in 0u8..8,
        value in any::<u32>(),
    ) {
        let mut img = KernelImage::new(CAP).unwrap();
        img.flip_bit(offset, bit).unwrap();
        img.write_field(offset, 4, value).unwrap();
        prop_assert_eq!(img.read_field(offset, 4).unwrap(), value);
    }

    /// Stuck-at persistence: after replaying any write sequence, the
    /// masked bit reads the stuck value.
    #[test]
    fn stuck_bit_survives_any_write_sequence(
        mask_offset in 0u32..CAP,
        bit in 0u8..8,
        stuck in 0u8..2,
        writes in proptest::collection::vec((0u32..CAP, any::<u32>(), prop::sample::select(vec![1u32, 2, 4])), 0..200),
    ) {
        let mut img = KernelImage::new(CAP).unwrap();
        img.install_stuck_mask(mask_offset, bit, stuck).unwrap();
        for (offset, value, width) in writes {
            if offset + width <= CAP {
                img.write_field(offset, width, value).unwrap();
            }
            prop_assert_eq!(img.read_bit(mask_offset, bit).unwrap(), stuck);
        }
        prop_assert_eq!(img.read_bit(mask_offset, bit).unwrap(), stuck);
    }

    /// Access totality: any offset/width pair either works or yields a
    /// typed error; nothing panics the host.
    #[test]
    fn out_of_range_access_is_typed(
        offset in any::<u32>(),
        width in prop::sample::select(vec![1u32, 2, 4]),
        value in any::<u32>(),
    ) {
        let mut img = KernelImage::new(CAP).unwrap();
        let _ = img.read_field(offset, width);
        let _ = img.write_field(offset, width, value);
        let _ = img.flip_bit(offset, 3);
    }

    /// Masked reads apply every mask in range, independent of write order.
    #[test]
    fn read_field_applies_masks(
        offset in 0u32..CAP - 4,
        bit in 0u8..8,
        stuck in 0u8..2,
        byte_in_field in 0u32..4,
        value in any::<u32>(),
    ) {
        let mut img = KernelImage::new(CAP).unwrap();
        img.write_field(offset, 4, value).unwrap();
        img.install_stuck_mask(offset + byte_in_field, bit, stuck).unwrap();
        let read = img.read_field(offset, 4).unwrap();
        let pos = byte_in_field * 8 + bit as u32;
        prop_assert_eq!((read >> pos) & 1, stuck as u32);
        // all other bits keep the written value
        let mask = !(1u32 << pos);
        prop_assert_eq!(read & mask, value & mask);
    }
}
