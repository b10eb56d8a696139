//! Q16.16 fixed-point arithmetic embedded in the 64-bit ring `Z_{2^64}`.
//!
//! Real values are scaled by `2^frac_bits`, rounded to the nearest integer
//! and stored as `u64` ring elements in two's complement. With the default
//! 16 fractional bits and 16 integer bits, every representable plaintext
//! value satisfies `|v| < 2^15`; the remaining high bits are headroom for
//! intermediate products and for the masking noise of secret shares.
//!
//! Ring arithmetic wraps silently. Overflow is only detectable at the
//! encode/decode boundary, which matches the secure setting where neither
//! party can inspect an intermediate value.

use crate::error::{Error, Result};

/// Default number of fractional bits (and also of integer bits).
pub const DEFAULT_FRAC_BITS: u32 = 16;

/// One unit in the last place of the default encoding.
pub const ULP: f64 = 1.0 / (1u64 << DEFAULT_FRAC_BITS) as f64;

/// A real value encoded as a 64-bit ring element in Qm.f format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPoint {
    raw: u64,
    frac_bits: u32,
}

impl FixedPoint {
    /// Wraps an existing ring element without a range check.
    pub fn from_raw(raw: u64, frac_bits: u32) -> Self {
        FixedPoint { raw, frac_bits }
    }

    pub fn raw(&self) -> u64 {
        self.raw
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    pub fn decode(&self) -> f64 {
        decode(self.raw, self.frac_bits)
    }
}

/// Encodes a real value, rounding to nearest with ties away from zero.
///
/// The plaintext range is `|v| < 2^(frac_bits - 1)` so that integer and
/// fractional parts use the same number of bits; anything larger is an
/// [`Error::Overflow`].
pub fn encode(v: f64, frac_bits: u32) -> Result<FixedPoint> {
    assert!((1..=31).contains(&frac_bits), "frac_bits out of range");
    let int_bits = frac_bits - 1;
    let limit = (1u64 << int_bits) as f64;
    if !v.is_finite() || v.abs() >= limit {
        return Err(Error::Overflow { value: v, int_bits });
    }
    let scaled = v * (1u64 << frac_bits) as f64;
    // round half away from zero
    let raw = scaled.round() as i64;
    Ok(FixedPoint {
        raw: raw as u64,
        frac_bits,
    })
}

/// Signed interpretation of a raw ring element divided by `2^frac_bits`.
pub fn decode(raw: u64, frac_bits: u32) -> f64 {
    (raw as i64) as f64 / (1u64 << frac_bits) as f64
}

/// Arithmetic (sign-preserving) right shift of a ring element.
///
/// Each party applies this locally to its own share to divide a shared
/// fixed-point value by `2^bits`.
pub fn trunc(x: u64, bits: u32) -> u64 {
    assert!((1..=62).contains(&bits), "trunc bits out of range");
    ((x as i64) >> bits) as u64
}

/// Encodes `1.0` at the given precision.
pub fn one(frac_bits: u32) -> u64 {
    1u64 << frac_bits
}

/// A dense row-major matrix of 64-bit ring elements.
///
/// All arithmetic wraps in the ring; interpretation (fixed-point scale,
/// share vs. plaintext) is up to the caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl RingMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RingMatrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<u64>) -> Self {
        assert_eq!(rows * cols, data.len(), "rows*cols must equal data length");
        RingMatrix { rows, cols, data }
    }

    /// Encodes a row-major slice of reals into a matrix.
    pub fn encode_from(rows: usize, cols: usize, values: &[f64], frac_bits: u32) -> Result<Self> {
        assert_eq!(rows * cols, values.len());
        let data = values
            .iter()
            .map(|&v| encode(v, frac_bits).map(|f| f.raw()))
            .collect::<Result<Vec<u64>>>()?;
        Ok(RingMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: u64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn decode(&self, frac_bits: u32) -> Vec<f64> {
        self.data.iter().map(|&x| decode(x, frac_bits)).collect()
    }

    fn check_same_shape(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                context,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_same_shape(other, "add").expect("add shapes");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.wrapping_add(b))
            .collect();
        RingMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check_same_shape(other, "sub").expect("sub shapes");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.wrapping_sub(b))
            .collect();
        RingMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    pub fn neg(&self) -> Self {
        let data = self.data.iter().map(|&a| a.wrapping_neg()).collect();
        RingMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Elementwise (Hadamard) ring product.
    pub fn hadamard(&self, other: &Self) -> Self {
        self.check_same_shape(other, "hadamard").expect("shapes");
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.wrapping_mul(b))
            .collect();
        RingMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Ring matrix product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul: inner dimensions must agree"
        );
        let mut out = RingMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0 {
                    continue;
                }
                for j in 0..other.cols {
                    let idx = i * other.cols + j;
                    out.data[idx] =
                        out.data[idx].wrapping_add(a.wrapping_mul(other.data[k * other.cols + j]));
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = RingMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// Multiplies every entry by a public ring constant.
    pub fn scale(&self, factor: u64) -> Self {
        let data = self.data.iter().map(|&a| a.wrapping_mul(factor)).collect();
        RingMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Applies the local truncation shift to every entry.
    pub fn trunc(&self, bits: u32) -> Self {
        let data = self.data.iter().map(|&a| trunc(a, bits)).collect();
        RingMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Gathers the listed rows into a new matrix (public index set).
    pub fn gather_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(&self.data[i * self.cols..(i + 1) * self.cols]);
        }
        RingMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Column-contiguous slice `self[:, lo..hi]` as a new matrix.
    pub fn slice_cols(&self, lo: usize, hi: usize) -> Self {
        assert!(lo < hi && hi <= self.cols);
        let mut data = Vec::with_capacity(self.rows * (hi - lo));
        for r in 0..self.rows {
            data.extend_from_slice(&self.data[r * self.cols + lo..r * self.cols + hi]);
        }
        RingMatrix {
            rows: self.rows,
            cols: hi - lo,
            data,
        }
    }

    /// Row-contiguous slice `self[lo..hi, :]` as a new matrix.
    pub fn slice_rows(&self, lo: usize, hi: usize) -> Self {
        assert!(lo < hi && hi <= self.rows);
        RingMatrix {
            rows: hi - lo,
            cols: self.cols,
            data: self.data[lo * self.cols..hi * self.cols].to_vec(),
        }
    }
}
