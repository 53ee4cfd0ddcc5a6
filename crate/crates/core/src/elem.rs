//! Element encodings for the three supported floating-point widths.
//!
//! All arithmetic is carried out in `f64` and rounded to the element width on
//! store, so the simulator and the reference models agree bit for bit.

use half::f16;

/// Supported element widths in bits.
pub const WIDTHS: [u32; 3] = [16, 32, 64];

pub fn is_supported(ew: u32) -> bool {
    WIDTHS.contains(&ew)
}

pub fn bytes(ew: u32) -> usize {
    ew as usize / 8
}

/// Round an `f64` to the precision of `ew`.
pub fn round(ew: u32, v: f64) -> f64 {
    match ew {
        64 => v,
        32 => v as f32 as f64,
        16 => f16::from_f64(v).to_f64(),
        _ => unreachable!("unsupported element width {ew}"),
    }
}

/// Fused multiply-add `a * b + c`, rounded once to `ew` (twice for narrow types).
pub fn fma(ew: u32, a: f64, b: f64, c: f64) -> f64 {
    round(ew, a.mul_add(b, c))
}

pub fn load(ew: u32, buf: &[u8], index: usize) -> f64 {
    let n = bytes(ew);
    let s = &buf[index * n..(index + 1) * n];
    match ew {
        64 => f64::from_le_bytes(s.try_into().unwrap()),
        32 => f32::from_le_bytes(s.try_into().unwrap()) as f64,
        16 => f16::from_le_bytes(s.try_into().unwrap()).to_f64(),
        _ => unreachable!("unsupported element width {ew}"),
    }
}

pub fn store(ew: u32, buf: &mut [u8], index: usize, v: f64) {
    let n = bytes(ew);
    let s = &mut buf[index * n..(index + 1) * n];
    match ew {
        64 => s.copy_from_slice(&v.to_le_bytes()),
        32 => s.copy_from_slice(&(v as f32).to_le_bytes()),
        16 => s.copy_from_slice(&f16::from_f64(v).to_le_bytes()),
        _ => unreachable!("unsupported element width {ew}"),
    }
}

/// Unit roundoff of the element type.
pub fn epsilon(ew: u32) -> f64 {
    match ew {
        64 => f64::EPSILON,
        32 => f32::EPSILON as f64,
        _ => f16::EPSILON.to_f64(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_all_widths() {
        let mut buf = vec![0u8; 64];
        for ew in WIDTHS {
            store(ew, &mut buf, 3, 1.5);
            assert_eq!(load(ew, &buf, 3), 1.5);
        }
    }

    #[test]
    fn narrow_rounding() {
        assert_eq!(round(16, 1.0 + 1e-5), 1.0);
        assert_ne!(round(64, 1.0 + 1e-5), 1.0);
        assert_eq!(fma(64, 2.0, 3.0, 1.0), 7.0);
    }
}
