//! Arithmetic in GF(2^8) with the reduction polynomial x^8 + x^4 + x^3 + x + 1
//! (0x11B).
//!
//! Multiplication goes through log/antilog tables built at compile time. The
//! element 0x03 generates the multiplicative group for this polynomial (0x02
//! does not: its order is 51).

use core::fmt;
use core::ops::{Add, AddAssign, Div, Mul, MulAssign, Sub};

/// Full reduction polynomial, including the x^8 term.
pub const POLY: u16 = 0x11B;

const GENERATOR: u8 = 0x03;

/// Carry-less multiply followed by reduction; used to build the tables.
const fn slow_mul(mut a: u8, mut b: u8) -> u8 {
    let mut acc = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= (POLY & 0xFF) as u8;
        }
        b >>= 1;
    }
    acc
}

const fn build_tables() -> ([u8; 256], [u8; 512]) {
    let mut log = [0u8; 256];
    let mut exp = [0u8; 512];
    let mut x = 1u8;
    let mut i = 0usize;
    while i < 255 {
        exp[i] = x;
        exp[i + 255] = x;
        log[x as usize] = i as u8;
        x = slow_mul(x, GENERATOR);
        i += 1;
    }
    // exp[510], exp[511] are never indexed: log values are < 255.
    (log, exp)
}

const TABLES: ([u8; 256], [u8; 512]) = build_tables();
static LOG: [u8; 256] = TABLES.0;
static EXP: [u8; 512] = TABLES.1;

/// One element of GF(256).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Gf256(pub u8);

impl Gf256 {
    pub const ZERO: Self = Gf256(0);
    pub const ONE: Self = Gf256(1);

    #[inline]
    pub const fn new(value: u8) -> Self {
        Gf256(value)
    }

    #[inline]
    pub const fn value(self) -> u8 {
        self.0
    }

    #[inline]
    pub const fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Multiplicative inverse; `None` for zero.
    #[inline]
    pub fn inv(self) -> Option<Self> {
        if self.0 == 0 {
            None
        } else {
            Some(Gf256(EXP[255 - LOG[self.0 as usize] as usize]))
        }
    }
}

impl fmt::Debug for Gf256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf256({:#04x})", self.0)
    }
}

impl From<u8> for Gf256 {
    fn from(v: u8) -> Self {
        Gf256(v)
    }
}

/// Field addition (XOR).
#[inline]
pub fn add(a: Gf256, b: Gf256) -> Gf256 {
    Gf256(a.0 ^ b.0)
}

/// Field multiplication.
#[inline]
pub fn mul(a: Gf256, b: Gf256) -> Gf256 {
    Gf256(mul_u8(a.0, b.0))
}

#[inline]
fn mul_u8(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        0
    } else {
        EXP[LOG[a as usize] as usize + LOG[b as usize] as usize]
    }
}

/// `dst[i] ^= coeff * src[i]` over the common prefix of the two slices.
pub fn mul_add_slice(dst: &mut [u8], src: &[u8], coeff: Gf256) {
    match coeff.0 {
        0 => {}
        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= s),
        c => {
            let lc = LOG[c as usize] as usize;
            for (d, &s) in dst.iter_mut().zip(src) {
                if s != 0 {
                    *d ^= EXP[lc + LOG[s as usize] as usize];
                }
            }
        }
    }
}

/// `buf[i] *= coeff` in place.
pub fn scale_slice(buf: &mut [u8], coeff: Gf256) {
    match coeff.0 {
        0 => buf.fill(0),
        1 => {}
        c => {
            let lc = LOG[c as usize] as usize;
            for b in buf.iter_mut() {
                if *b != 0 {
                    *b = EXP[lc + LOG[*b as usize] as usize];
                }
            }
        }
    }
}

impl Add for Gf256 {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        add(self, rhs)
    }
}

impl AddAssign for Gf256 {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        self.0 ^= rhs.0;
    }
}

// Subtraction coincides with addition in characteristic 2.
impl Sub for Gf256 {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        add(self, rhs)
    }
}

impl Mul for Gf256 {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        mul(self, rhs)
    }
}

impl MulAssign for Gf256 {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = mul(*self, rhs);
    }
}

impl Div for Gf256 {
    type Output = Self;
    /// Panics on division by zero.
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = rhs.inv().expect("division by zero in GF(256)");
        mul(self, inv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Shift-and-reduce reference, independent of the tables.
    fn oracle_mul(a: u8, b: u8) -> u8 {
        let mut product: u16 = 0;
        for bit in 0..8 {
            if b & (1 << bit) != 0 {
                product ^= (a as u16) << bit;
            }
        }
        for bit in (8..16).rev() {
            if product & (1 << bit) != 0 {
                product ^= POLY << (bit - 8);
            }
        }
        product as u8
    }

    #[test]
    fn add_examples() {
        assert_eq!(add(Gf256(0x57), Gf256(0x57)), Gf256(0x00));
        assert_eq!(add(Gf256(0x57), Gf256(0x00)), Gf256(0x57));
        assert_eq!(add(Gf256(0x53), Gf256(0xCA)), Gf256(0x99));
    }

    #[test]
    fn mul_examples() {
        assert_eq!(mul(Gf256(0x01), Gf256(0xAB)), Gf256(0xAB));
        assert_eq!(mul(Gf256(0x00), Gf256(0xFF)), Gf256(0x00));
        assert_eq!(oracle_mul(0x02, 0x80), 0x1B);
        assert_eq!(mul(Gf256(0x02), Gf256(0x80)), Gf256(0x1B));
        // Textbook AES pair.
        assert_eq!(mul(Gf256(0x57), Gf256(0x83)), Gf256(0xC1));
    }

    #[test]
    fn table_mul_matches_oracle_exhaustively() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(mul(Gf256(a), Gf256(b)).0, oracle_mul(a, b), "{a:#x}*{b:#x}");
            }
        }
    }

    #[test]
    fn every_nonzero_element_has_exact_inverse() {
        assert_eq!(Gf256::ZERO.inv(), None);
        for a in 1..=255u8 {
            let inv = Gf256(a).inv().unwrap();
            assert_eq!(oracle_mul(a, inv.0), 1, "inverse of {a:#x}");
        }
    }

    #[test]
    fn slice_helpers_agree_with_scalar_ops() {
        let src: [u8; 5] = [0, 1, 0x53, 0xCA, 0xFF];
        for c in [0u8, 1, 2, 0x8E, 0xFF] {
            let mut dst = [7u8; 5];
            mul_add_slice(&mut dst, &src, Gf256(c));
            for i in 0..5 {
                assert_eq!(dst[i], 7 ^ oracle_mul(c, src[i]));
            }
            let mut buf = src;
            scale_slice(&mut buf, Gf256(c));
            for i in 0..5 {
                assert_eq!(buf[i], oracle_mul(c, src[i]));
            }
        }
    }
}
