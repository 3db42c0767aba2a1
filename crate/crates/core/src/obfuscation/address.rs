//! Address obfuscation: the tag and set-index bits go through the Feistel
//! network, the line offset passes through untouched.

use serde::{Deserialize, Serialize};

use super::{deobfuscate32, obfuscate32, AffineSpec, ObfuscationError, RoundKeys};

/// Width of the obfuscated tag/set field, fixed by the 32-bit network.
pub const TAGSET_BITS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressGeometry {
    offset_bits: u32,
}

impl AddressGeometry {
    pub fn new(offset_bits: u32) -> Result<Self, ObfuscationError> {
        if !(1..=31).contains(&offset_bits) {
            return Err(ObfuscationError::Geometry(format!(
                "offset_bits must be in 1..=31, got {offset_bits}"
            )));
        }
        Ok(Self { offset_bits })
    }

    /// Geometry for a power-of-two line size in bytes.
    pub fn for_line_bytes(line_bytes: u64) -> Result<Self, ObfuscationError> {
        if !line_bytes.is_power_of_two() || line_bytes < 2 {
            return Err(ObfuscationError::Geometry(format!(
                "line size {line_bytes} is not a power of two >= 2"
            )));
        }
        Self::new(line_bytes.trailing_zeros())
    }

    pub fn offset_bits(&self) -> u32 {
        self.offset_bits
    }

    pub fn address_width(&self) -> u32 {
        TAGSET_BITS + self.offset_bits
    }

    pub fn tagset_bits(&self) -> u32 {
        TAGSET_BITS
    }

    pub fn offset_mask(&self) -> u64 {
        (1u64 << self.offset_bits) - 1
    }

    pub fn address_mask(&self) -> u64 {
        (1u64 << self.address_width()) - 1
    }

    pub fn offset(&self, addr: u64) -> u64 {
        addr & self.offset_mask()
    }

    pub fn tagset(&self, addr: u64) -> u32 {
        (addr >> self.offset_bits) as u32
    }

    pub fn join(&self, tagset: u32, offset: u64) -> u64 {
        ((tagset as u64) << self.offset_bits) | (offset & self.offset_mask())
    }

    fn check(&self, addr: u64) -> Result<(), ObfuscationError> {
        if addr & !self.address_mask() != 0 {
            return Err(ObfuscationError::AddressOutOfRange {
                addr,
                width: self.address_width(),
            });
        }
        Ok(())
    }
}

pub fn obfuscate_address(
    addr: u64,
    geom: &AddressGeometry,
    keys: &RoundKeys,
    spec: &AffineSpec,
) -> Result<u64, ObfuscationError> {
    geom.check(addr)?;
    Ok(geom.join(obfuscate32(geom.tagset(addr), keys, spec), geom.offset(addr)))
}

pub fn deobfuscate_address(
    addr: u64,
    geom: &AddressGeometry,
    keys: &RoundKeys,
    spec: &AffineSpec,
) -> Result<u64, ObfuscationError> {
    geom.check(addr)?;
    Ok(geom.join(deobfuscate32(geom.tagset(addr), keys, spec), geom.offset(addr)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_widths() {
        let g = AddressGeometry::for_line_bytes(64).unwrap();
        assert_eq!(g.offset_bits(), 6);
        assert_eq!(g.address_width(), 38);
        assert!(AddressGeometry::for_line_bytes(48).is_err());
        assert!(AddressGeometry::new(0).is_err());
    }

    #[test]
    fn out_of_range_address_rejected() {
        let g = AddressGeometry::new(6).unwrap();
        let keys = RoundKeys::new([1, 2, 3, 4]);
        let spec = AffineSpec::default_v1();
        let err = obfuscate_address(1 << 38, &g, &keys, &spec).unwrap_err();
        assert!(matches!(err, ObfuscationError::AddressOutOfRange { width: 38, .. }));
    }

    #[test]
    fn offset_only_difference_is_preserved() {
        let g = AddressGeometry::new(6).unwrap();
        let keys = RoundKeys::new([0xAAAA, 0x5555, 0x0F0F, 0xF0F0]);
        let spec = AffineSpec::default_v1();
        let a = obfuscate_address(0x12_3456_7800, &g, &keys, &spec).unwrap();
        let b = obfuscate_address(0x12_3456_782A, &g, &keys, &spec).unwrap();
        assert_eq!(a ^ b, 0x2A);
        assert_eq!(deobfuscate_address(a, &g, &keys, &spec).unwrap(), 0x12_3456_7800);
    }
}
