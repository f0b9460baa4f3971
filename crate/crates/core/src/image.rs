//! Byte-addressable kernel memory image.
//!
//! Every kernel object lives inside one fixed-capacity byte region. All
//! reads and writes go through the field accessors here, which bounds-check
//! every access and re-apply stuck-at write masks, so a corrupted kernel can
//! never take down the host process. Transient faults are raw bit flips;
//! permanent faults install a [`StuckMask`] that survives every later write.

use thiserror::Error;

pub const DEFAULT_IMAGE_CAPACITY: u32 = 64 * 1024;

/// Byte offset 0 is reserved as the null handle; no object is ever placed
/// in the first [`NULL_GUARD`] bytes.
pub const NULL_GUARD: u32 = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("access outside image: offset {offset:#x} width {width}")]
    OutOfImage { offset: u32, width: u32 },
    #[error("unsupported field width {0} (expected 1, 2 or 4)")]
    BadWidth(u32),
    #[error("stuck mask already installed at offset {offset:#x} bit {bit}")]
    DuplicateMask { offset: u32, bit: u8 },
    #[error("object `{0}` does not fit in the image")]
    ImageOverflow(String),
    #[error("object record `{0}` overlaps an existing region or reuses a name")]
    BadRecord(String),
    #[error("image capacity {0:#x} must be a power of two")]
    BadCapacity(u32),
}

/// What a registered region holds. Sub-structures embedded in a larger
/// object (list end markers, TCB list items, name regions) are not separate
/// records; they are resolved from their parent's base plus a fixed offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectKind {
    Scalar,
    Handle,
    List,
    ListItem,
    Tcb,
    Queue,
    NameString,
}

impl ObjectKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectKind::Scalar => "scalar",
            ObjectKind::Handle => "handle",
            ObjectKind::List => "list",
            ObjectKind::ListItem => "list_item",
            ObjectKind::Tcb => "tcb",
            ObjectKind::Queue => "queue",
            ObjectKind::NameString => "name_string",
        }
    }
}

/// One named region inside the image.
#[derive(Debug, Clone)]
pub struct ObjectRecord {
    pub name: String,
    pub base: u32,
    pub size: u32,
    pub kind: ObjectKind,
    pub parent: Option<String>,
}

/// A persistent stuck-at fault on one bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StuckMask {
    pub offset: u32,
    pub bit: u8,
    pub value: u8,
}

/// A 32-bit value interpreted as an image byte offset. Zero is the null
/// handle. A handle is only dereferenceable when it lands exactly on
/// the base of an object (or known sub-object) of the expected kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Handle(pub u32);

impl Handle {
    pub const NULL: Handle = Handle(0);

    pub fn is_null(&self) -> bool {
        self.0 == 0
    }
}

pub struct KernelImage {
    bytes: Vec<u8>,
    objects: Vec<ObjectRecord>,
    masks: Vec<StuckMask>,
}

impl KernelImage {
    pub fn new(capacity: u32) -> Result<Self, ImageError> {
        if !capacity.is_power_of_two() || capacity < NULL_GUARD * 2 {
            return Err(ImageError::BadCapacity(capacity));
        }
        Ok(KernelImage {
            bytes: vec![0u8; capacity as usize],
            objects: Vec::new(),
            masks: Vec::new(),
        })
    }

    pub fn capacity(&self) -> u32 {
        self.bytes.len() as u32
    }

    /// Registers a named region. Regions must be unique by name, lie fully
    /// inside the image above the null guard, and never overlap.
    pub fn register(&mut self, rec: ObjectRecord) -> Result<(), ImageError> {
        if rec.size == 0
            || rec.base < NULL_GUARD
            || rec.base.checked_add(rec.size).is_none_or(|end| end > self.capacity())
        {
            return Err(ImageError::ImageOverflow(rec.name));
        }
        for existing in &self.objects {
            if existing.name == rec.name {
                return Err(ImageError::BadRecord(rec.name));
            }
            let a0 = existing.base;
            let a1 = existing.base + existing.size;
            let b0 = rec.base;
            let b1 = rec.base + rec.size;
            if a0 < b1 && b0 < a1 {
                return Err(ImageError::BadRecord(rec.name));
            }
        }
        self.objects.push(rec);
        Ok(())
    }

    pub fn objects(&self) -> &[ObjectRecord] {
        &self.objects
    }

    pub fn find(&self, name: &str) -> Option<&ObjectRecord> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn record_at(&self, base: u32, kind: ObjectKind) -> Option<&ObjectRecord> {
        self.objects.iter().find(|o| o.base == base && o.kind == kind)
    }

    fn check_range(&self, offset: u32, width: u32) -> Result<(), ImageError> {
        if offset.checked_add(width).is_none_or(|end| end > self.capacity()) {
            return Err(ImageError::OutOfImage { offset, width });
        }
        Ok(())
    }

    fn masked_byte(&self, offset: u32) -> u8 {
        let mut b = self.bytes[offset as usize];
        for m in &self.masks {
            if m.offset == offset {
                if m.value == 1 {
                    b |= 1 << m.bit;
                } else {
                    b &= !(1 << m.bit);
                }
            }
        }
        b
    }

    /// Little-endian field read with stuck masks applied.
    pub fn read_field(&self, offset: u32, width: u32) -> Result<u32, ImageError> {
        if !matches!(width, 1 | 2 | 4) {
            return Err(ImageError::BadWidth(width));
        }
        self.check_range(offset, width)?;
        let mut v: u32 = 0;
        for i in 0..width {
            v |= (self.masked_byte(offset + i) as u32) << (8 * i);
        }
        Ok(v)
    }

    /// Little-endian field write. Stuck masks intersecting the range are
    /// re-applied to the stored bytes, so masked bits survive the write.
    pub fn write_field(&mut self, offset: u32, width: u32, value: u32) -> Result<(), ImageError> {
        if !matches!(width, 1 | 2 | 4) {
            return Err(ImageError::BadWidth(width));
        }
        self.check_range(offset, width)?;
        for i in 0..width {
            self.bytes[(offset + i) as usize] = ((value >> (8 * i)) & 0xff) as u8;
        }
        self.enforce_masks(offset, width);
        Ok(())
    }

    pub fn read_bytes(&self, offset: u32, len: u32) -> Result<Vec<u8>, ImageError> {
        self.check_range(offset, len)?;
        Ok((offset..offset + len).map(|o| self.masked_byte(o)).collect())
    }

    pub fn write_bytes(&mut self, offset: u32, data: &[u8]) -> Result<(), ImageError> {
        self.check_range(offset, data.len() as u32)?;
        self.bytes[offset as usize..offset as usize + data.len()].copy_from_slice(data);
        self.enforce_masks(offset, data.len() as u32);
        Ok(())
    }

    fn enforce_masks(&mut self, offset: u32, width: u32) {
        for i in 0..self.masks.len() {
            let m = self.masks[i];
            if m.offset >= offset && m.offset < offset + width {
                let b = &mut self.bytes[m.offset as usize];
                if m.value == 1 {
                    *b |= 1 << m.bit;
                } else {
                    *b &= !(1 << m.bit);
                }
            }
        }
    }

    /// One-shot bit flip: the transient fault primitive. No mask is
    /// installed; later writes overwrite the flipped bit freely.
    pub fn flip_bit(&mut self, offset: u32, bit: u8) -> Result<(), ImageError> {
        self.check_range(offset, 1)?;
        self.bytes[offset as usize] ^= 1 << (bit & 7);
        Ok(())
    }

    pub fn read_bit(&self, offset: u32, bit: u8) -> Result<u8, ImageError> {
        self.check_range(offset, 1)?;
        Ok((self.masked_byte(offset) >> (bit & 7)) & 1)
    }

    /// Installs a stuck-at mask and immediately forces the stored bit:
    /// the permanent fault primitive.
    pub fn install_stuck_mask(&mut self, offset: u32, bit: u8, value: u8) -> Result<(), ImageError> {
        self.check_range(offset, 1)?;
        let bit = bit & 7;
        if self.masks.iter().any(|m| m.offset == offset && m.bit == bit) {
            return Err(ImageError::DuplicateMask { offset, bit });
        }
        self.masks.push(StuckMask { offset, bit, value: value & 1 });
        self.enforce_masks(offset, 1);
        Ok(())
    }

    pub fn masks(&self) -> &[StuckMask] {
        &self.masks
    }

    pub fn snapshot(&self) -> ImageSnapshot {
        ImageSnapshot { bytes: self.bytes.clone() }
    }
}

/// Full byte copy of the image, diffable to bit granularity.
#[derive(Clone)]
pub struct ImageSnapshot {
    bytes: Vec<u8>,
}

impl ImageSnapshot {
    /// Returns every `(offset, bit)` where the two snapshots differ.
    pub fn diff(&self, other: &ImageSnapshot) -> Vec<(u32, u8)> {
        let mut out = Vec::new();
        for (i, (a, b)) in self.bytes.iter().zip(other.bytes.iter()).enumerate() {
            let x = a ^ b;
            if x != 0 {
                for bit in 0..8 {
                    if x & (1 << bit) != 0 {
                        out.push((i as u32, bit));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image() -> KernelImage {
        KernelImage::new(4096).unwrap()
    }

    #[test]
    fn little_endian_decode() {
        let mut img = image();
        img.write_bytes(0x100, &[0x34, 0x12, 0x00, 0x00]).unwrap();
        assert_eq!(img.read_field(0x100, 4).unwrap(), 0x1234);
    }

    #[test]
    fn read_after_write_identity() {
        let mut img = image();
        img.write_field(0x200, 4, 0xdead_beef).unwrap();
        assert_eq!(img.read_field(0x200, 4).unwrap(), 0xdead_beef);
        img.write_field(0x204, 1, 0xab).unwrap();
        assert_eq!(img.read_field(0x204, 1).unwrap(), 0xab);
    }

    #[test]
    fn mask_forces_bit_on_read() {
        let mut img = image();
        img.install_stuck_mask(0x80, 3, 1).unwrap();
        assert_eq!(img.read_field(0x80, 1).unwrap(), 0x08);
    }

    #[test]
    fn stuck_at_zero_clears_written_bit() {
        let mut img = image();
        img.install_stuck_mask(0x80, 3, 0).unwrap();
        img.write_field(0x80, 1, 0xff).unwrap();
        assert_eq!(img.read_field(0x80, 1).unwrap(), 0xf7);
    }

    #[test]
    fn stuck_at_one_survives_zero_write() {
        let mut img = image();
        img.install_stuck_mask(0x80, 0, 1).unwrap();
        img.write_field(0x80, 1, 0x00).unwrap();
        assert_eq!(img.read_field(0x80, 1).unwrap(), 0x01);
    }

    #[test]
    fn install_on_already_set_bit_is_silent() {
        let mut img = image();
        img.write_field(0x90, 1, 0x10).unwrap();
        img.install_stuck_mask(0x90, 4, 1).unwrap();
        assert_eq!(img.read_field(0x90, 1).unwrap(), 0x10);
    }

    #[test]
    fn install_forces_current_bit() {
        let mut img = image();
        img.write_field(0x90, 1, 0xff).unwrap();
        img.install_stuck_mask(0x90, 4, 0).unwrap();
        assert_eq!(img.read_field(0x90, 1).unwrap(), 0xef);
    }

    #[test]
    fn duplicate_mask_rejected() {
        let mut img = image();
        img.install_stuck_mask(0x80, 2, 1).unwrap();
        let err = img.install_stuck_mask(0x80, 2, 0).unwrap_err();
        assert_eq!(err, ImageError::DuplicateMask { offset: 0x80, bit: 2 });
    }

    #[test]
    fn flip_bit_sets_and_clears() {
        let mut img = image();
        img.flip_bit(0x100, 7).unwrap();
        assert_eq!(img.read_field(0x100, 1).unwrap(), 0x80);
        img.write_field(0x101, 1, 0xff).unwrap();
        img.flip_bit(0x101, 0).unwrap();
        assert_eq!(img.read_field(0x101, 1).unwrap(), 0xfe);
    }

    #[test]
    fn flip_twice_is_involution() {
        let mut img = image();
        img.write_field(0x100, 1, 0x5a).unwrap();
        img.flip_bit(0x100, 4).unwrap();
        img.flip_bit(0x100, 4).unwrap();
        assert_eq!(img.read_field(0x100, 1).unwrap(), 0x5a);
    }

    #[test]
    fn out_of_image_is_typed_error() {
        let img = image();
        assert!(matches!(
            img.read_field(4096, 1),
            Err(ImageError::OutOfImage { .. })
        ));
        assert!(matches!(
            img.read_field(4094, 4),
            Err(ImageError::OutOfImage { .. })
        ));
        assert!(matches!(
            img.read_field(u32::MAX, 4),
            Err(ImageError::OutOfImage { .. })
        ));
    }

    #[test]
    fn snapshot_diff_empty_and_single_flip() {
        let mut img = image();
        let a = img.snapshot();
        assert!(a.diff(&a).is_empty());
        img.flip_bit(0x123, 5).unwrap();
        let b = img.snapshot();
        assert_eq!(a.diff(&b), vec![(0x123, 5)]);
        img.flip_bit(0x321, 0).unwrap();
        let c = img.snapshot();
        assert_eq!(a.diff(&c).len(), 2);
    }

    #[test]
    fn records_must_not_overlap() {
        let mut img = image();
        img.register(ObjectRecord {
            name: "a".into(),
            base: 0x100,
            size: 16,
            kind: ObjectKind::Scalar,
            parent: None,
        })
        .unwrap();
        let err = img
            .register(ObjectRecord {
                name: "b".into(),
                base: 0x108,
                size: 16,
                kind: ObjectKind::Scalar,
                parent: None,
            })
            .unwrap_err();
        assert!(matches!(err, ImageError::BadRecord(_)));
    }

    #[test]
    fn record_must_fit() {
        let mut img = image();
        let err = img
            .register(ObjectRecord {
                name: "big".into(),
                base: 4000,
                size: 200,
                kind: ObjectKind::Scalar,
                parent: None,
            })
            .unwrap_err();
        assert!(matches!(err, ImageError::ImageOverflow(_)));
    }
}
