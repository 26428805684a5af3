//! Finite-field arithmetic for GF(2) and GF(2^8).
//!
//! Elements are stored as bytes. For GF(2^8) each bit is a coefficient of a
//! degree-7 polynomial over GF(2); addition is XOR and multiplication goes
//! through log/antilog tables built once per [`Field`] from the configured
//! reduction polynomial. GF(2) uses AND/XOR directly.
//!
//! Subtraction and addition coincide in characteristic 2, but both names are
//! exposed because the decoder's operation counter distinguishes them by name
//! only.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// x^8 + x^4 + x^3 + x^2 + 1, the usual choice for RLNC and Reed-Solomon.
pub const DEFAULT_POLYNOMIAL: u16 = 0x11D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GfError {
    #[error("unsupported field size {0} (expected 2 or 256)")]
    UnsupportedFieldSize(u32),
    #[error("polynomial {0:#x} is not an irreducible degree-8 polynomial over GF(2)")]
    ReduciblePolynomial(u16),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("value {value} is not an element of GF({q})")]
    OutOfRange { value: u32, q: u32 },
}

/// Field size plus (for GF(2^8)) the reduction polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "FieldSpecRepr", into = "FieldSpecRepr")]
pub struct FieldSpec {
    q: u16,
    reduction_polynomial: u16,
}

#[derive(Serialize, Deserialize)]
struct FieldSpecRepr {
    q: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reduction_polynomial: Option<u16>,
}

impl TryFrom<FieldSpecRepr> for FieldSpec {
    type Error = GfError;

    fn try_from(r: FieldSpecRepr) -> Result<Self, GfError> {
        FieldSpec::new(r.q, r.reduction_polynomial.unwrap_or(DEFAULT_POLYNOMIAL))
    }
}

impl From<FieldSpec> for FieldSpecRepr {
    fn from(s: FieldSpec) -> Self {
        FieldSpecRepr {
            q: s.q(),
            reduction_polynomial: (s.q == 256).then_some(s.reduction_polynomial),
        }
    }
}

impl FieldSpec {
    /// Builds a spec, checking irreducibility of the polynomial when `q = 256`.
    /// The polynomial is ignored for `q = 2`.
    pub fn new(q: u32, reduction_polynomial: u16) -> Result<Self, GfError> {
        match q {
            2 => Ok(Self::gf2()),
            256 => {
                if !is_irreducible_degree8(reduction_polynomial) {
                    return Err(GfError::ReduciblePolynomial(reduction_polynomial));
                }
                Ok(FieldSpec {
                    q: 256,
                    reduction_polynomial,
                })
            }
            other => Err(GfError::UnsupportedFieldSize(other)),
        }
    }

    pub const fn gf2() -> Self {
        FieldSpec {
            q: 2,
            reduction_polynomial: 0,
        }
    }

    pub const fn gf256() -> Self {
        FieldSpec {
            q: 256,
            reduction_polynomial: DEFAULT_POLYNOMIAL,
        }
    }

    /// GF(q) with the default polynomial.
    pub fn from_q(q: u32) -> Result<Self, GfError> {
        Self::new(q, DEFAULT_POLYNOMIAL)
    }

    pub fn q(&self) -> u32 {
        self.q as u32
    }

    pub fn reduction_polynomial(&self) -> u16 {
        self.reduction_polynomial
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.q == 2 {
            write!(f, "GF(2)")
        } else {
            write!(f, "GF(256)/{:#x}", self.reduction_polynomial)
        }
    }
}

/// A single field element. The owning [`Field`] guarantees `value < q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(transparent)]
pub struct FieldElement(u8);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    /// Caller guarantees `v < q` for the field the element is used with.
    #[inline]
    pub(crate) fn from_raw(v: u8) -> Self {
        FieldElement(v)
    }

    #[inline]
    pub fn value(self) -> u8 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

struct LogTables {
    log: [u8; 256],
    // Doubled so that exp[log a + log b] needs no reduction mod 255.
    exp: [u8; 512],
    inv: [u8; 256],
}

/// Arithmetic context for one field. Cloning is cheap (tables are shared).
#[derive(Clone)]
pub struct Field {
    spec: FieldSpec,
    tables: Option<Arc<LogTables>>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field").field("spec", &self.spec).finish()
    }
}

impl Field {
    pub fn new(spec: FieldSpec) -> Self {
        let tables = (spec.q == 256).then(|| Arc::new(build_tables(spec.reduction_polynomial)));
        Field { spec, tables }
    }

    pub fn gf2() -> Self {
        Field::new(FieldSpec::gf2())
    }

    pub fn gf256() -> Self {
        Field::new(FieldSpec::gf256())
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn q(&self) -> u32 {
        self.spec.q()
    }

    pub fn element(&self, value: u32) -> Result<FieldElement, GfError> {
        if value < self.q() {
            Ok(FieldElement(value as u8))
        } else {
            Err(GfError::OutOfRange { value, q: self.q() })
        }
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(a.0 ^ b.0)
    }

    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(a.0 ^ b.0)
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        match &self.tables {
            None => FieldElement(a.0 & b.0),
            Some(t) => {
                if a.0 == 0 || b.0 == 0 {
                    FieldElement(0)
                } else {
                    FieldElement(t.exp[t.log[a.0 as usize] as usize + t.log[b.0 as usize] as usize])
                }
            }
        }
    }

    pub fn inv(&self, a: FieldElement) -> Result<FieldElement, GfError> {
        if a.0 == 0 {
            return Err(GfError::ZeroInverse);
        }
        Ok(match &self.tables {
            None => a,
            Some(t) => FieldElement(t.inv[a.0 as usize]),
        })
    }

    /// `a + b·c`
    #[inline]
    pub fn fused_mul_add(&self, a: FieldElement, b: FieldElement, c: FieldElement) -> FieldElement {
        self.add(a, self.mul(b, c))
    }

    /// `a - b·c`
    #[inline]
    pub fn fused_mul_sub(&self, a: FieldElement, b: FieldElement, c: FieldElement) -> FieldElement {
        self.sub(a, self.mul(b, c))
    }
}

/// Bit-serial carry-less multiply of two bytes reduced by `poly` (degree 8).
fn clmul_reduce(a: u8, b: u8, poly: u16) -> u8 {
    let mut a = a as u16;
    let mut b = b;
    let mut acc = 0u16;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & 0x100 != 0 {
            a ^= poly;
        }
    }
    acc as u8
}

fn build_tables(poly: u16) -> LogTables {
    // Irreducible polynomials always admit a primitive element, but it is
    // not necessarily x (e.g. 0x11B), so search for one.
    let generator = (2u16..=255)
        .map(|g| g as u8)
        .find(|&g| {
            let mut x = 1u8;
            for i in 1..255 {
                x = clmul_reduce(x, g, poly);
                if x == 1 {
                    return i == 255;
                }
            }
            clmul_reduce(x, g, poly) == 1
        })
        .expect("irreducible polynomial has a primitive element");

    let mut log = [0u8; 256];
    let mut exp = [0u8; 512];
    let mut x = 1u8;
    for i in 0..255 {
        exp[i] = x;
        exp[i + 255] = x;
        log[x as usize] = i as u8;
        x = clmul_reduce(x, generator, poly);
    }
    exp[510] = exp[0];
    exp[511] = exp[1];

    let mut inv = [0u8; 256];
    for a in 1..256usize {
        inv[a] = exp[(255 - log[a] as usize) % 255];
    }
    LogTables { log, exp, inv }
}

/// Remainder of polynomial division over GF(2).
fn poly_rem(mut a: u32, b: u32) -> u32 {
    let db = 31 - b.leading_zeros();
    while a != 0 && 31 - a.leading_zeros() >= db {
        a ^= b << (31 - a.leading_zeros() - db);
    }
    a
}

/// A degree-8 polynomial is irreducible iff no polynomial of degree 1..=4
/// divides it.
fn is_irreducible_degree8(poly: u16) -> bool {
    if poly >> 8 != 1 {
        return false;
    }
    (2u32..32).all(|d| poly_rem(poly as u32, d) != 0)
}
