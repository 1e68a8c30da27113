use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

/// Information content in bits, held as an exact integer count of
/// micro-bits so that comparisons and tie-breaks are deterministic.
///
/// Slot costs are rounded to the ontology's configured decimal precision
/// before being stored, so every total is an exact sum of rounded costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Bits(pub u64);

pub const MICRO: u64 = 1_000_000;

impl Bits {
    pub const ZERO: Bits = Bits(0);

    /// Round a bit value to `precision` decimal digits and store exactly.
    pub fn from_f64_rounded(bits: f64, precision: u32) -> Bits {
        assert!(bits >= 0.0 && bits.is_finite(), "bit cost must be finite and non-negative");
        let p = precision.min(6);
        let scale = 10u64.pow(p) as f64;
        let rounded = (bits * scale).round() / scale;
        Bits((rounded * MICRO as f64).round() as u64)
    }

    pub fn from_bits(whole: u64) -> Bits {
        Bits(whole * MICRO)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / MICRO as f64
    }

    /// 2^(-bits), the probability a structure with this information
    /// content holds by chance.
    pub fn prob(self) -> f64 {
        2f64.powf(-self.as_f64())
    }

    pub fn abs_diff(self, other: Bits) -> Bits {
        Bits(self.0.abs_diff(other.0))
    }

    pub fn saturating_sub(self, other: Bits) -> Bits {
        Bits(self.0.saturating_sub(other.0))
    }
}

impl Add for Bits {
    type Output = Bits;
    fn add(self, rhs: Bits) -> Bits {
        Bits(self.0 + rhs.0)
    }
}

impl AddAssign for Bits {
    fn add_assign(&mut self, rhs: Bits) {
        self.0 += rhs.0;
    }
}

impl Sub for Bits {
    type Output = Bits;
    fn sub(self, rhs: Bits) -> Bits {
        Bits(self.0.checked_sub(rhs.0).expect("bits underflow"))
    }
}

impl Sum for Bits {
    fn sum<I: Iterator<Item = Bits>>(iter: I) -> Bits {
        iter.fold(Bits::ZERO, Add::add)
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.as_f64();
        if (v - v.round()).abs() < 1e-9 {
            write!(f, "{}", v.round() as i64)
        } else {
            write!(f, "{:.3}", v)
        }
    }
}
