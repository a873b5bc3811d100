//! Stochastic norm/sign/magnitude quantizer and its bit-exact wire codec.
//!
//! A vector is encoded as its Euclidean norm, one sign per coordinate, and a
//! stochastically rounded magnitude level per coordinate on the uniform grid
//! `{0, 1/s, ..., 1}` with `s = 2^(z-1) - 1` levels for a bit width of `z`
//! bits per coordinate (one sign bit plus `z - 1` magnitude bits). Rounding
//! is unbiased: each coordinate lands on the upper neighbour with probability
//! equal to its fractional position in the grid cell, so the dequantized
//! vector equals the input in expectation.
//!
//! The wire payload is the norm as a little-endian IEEE 754 single (32 bits)
//! followed by the coordinates packed most-significant-bit first, sign bit
//! before magnitude bits, with the final byte zero-padded.

use crate::error::{Error, Result};
use rand::Rng;

/// Maximum supported bit width per coordinate (sign + 31 magnitude bits).
pub const MAX_BIT_WIDTH: u32 = 32;

/// Number of magnitude levels for bit width `z`: `s = 2^(z-1) - 1`.
#[inline]
pub fn level_count(z: u32) -> Result<u32> {
    if z < 2 {
        return Err(Error::InvalidBitWidth(z));
    }
    if z > MAX_BIT_WIDTH {
        return Err(Error::BitWidthTooLarge(z));
    }
    Ok((1u32 << (z - 1)) - 1)
}

/// Relative variance bound of the quantizer: `l / (4 (2^(z-1) - 1)^2)`.
///
/// The quantization error satisfies `E||Q(x) - x||^2 <= variance_coeff(z, l) * ||x||^2`;
/// the coefficient is strictly decreasing in `z` and linear in `l`.
pub fn variance_coeff(z: u32, l: usize) -> Result<f64> {
    let s = level_count(z)? as f64;
    Ok(l as f64 / (4.0 * s * s))
}

/// A quantized vector: norm scalar plus per-coordinate sign and level.
///
/// Invariants, enforced at construction:
/// - every level lies in `[0, s]` with `s = 2^(z-1) - 1`,
/// - the norm is finite and nonnegative, and a zero norm forces all levels
///   to zero,
/// - signs are `+1` or `-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMessage {
    norm: f32,
    signs: Vec<i8>,
    levels: Vec<u32>,
    bit_width: u32,
}

impl QuantizedMessage {
    pub fn new(norm: f32, signs: Vec<i8>, levels: Vec<u32>, bit_width: u32) -> Result<Self> {
        let s = level_count(bit_width)?;
        if !norm.is_finite() || norm < 0.0 {
            return Err(Error::InvalidWire(format!("bad norm {norm}")));
        }
        if signs.len() != levels.len() {
            return Err(Error::InvalidWire(format!(
                "sign/level length mismatch: {} vs {}",
                signs.len(),
                levels.len()
            )));
        }
        if signs.iter().any(|&sg| sg != 1 && sg != -1) {
            return Err(Error::InvalidWire("signs must be +1 or -1".into()));
        }
        if levels.iter().any(|&lv| lv > s) {
            return Err(Error::InvalidWire(format!("level exceeds s={s}")));
        }
        if norm == 0.0 && levels.iter().any(|&lv| lv != 0) {
            return Err(Error::InvalidWire("zero norm with nonzero level".into()));
        }
        Ok(Self {
            norm,
            signs,
            levels,
            bit_width,
        })
    }

    pub fn norm(&self) -> f32 {
        self.norm
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn bit_width(&self) -> u32 {
        self.bit_width
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    /// Wire size in bytes: 32-bit norm plus `l * z` payload bits.
    pub fn wire_bytes(&self) -> usize {
        wire_bytes(self.dim(), self.bit_width)
    }

    /// Wire size in bits (norm included), as counted by the simulator.
    pub fn wire_bits(&self) -> u64 {
        32 + self.dim() as u64 * self.bit_width as u64
    }
}

/// Payload size in bytes for dimension `l` at bit width `z`.
pub fn wire_bytes(l: usize, z: u32) -> usize {
    4 + (l * z as usize).div_ceil(8)
}

/// Quantize `x` at `z` bits per coordinate, drawing one uniform per
/// coordinate from `rng` for the stochastic rounding.
///
/// A zero vector quantizes deterministically to the all-zero message with
/// positive signs. Coordinates that fall exactly on a grid point round
/// deterministically (the upper level has probability zero).
pub fn quantize<R: Rng + ?Sized>(x: &[f64], z: u32, rng: &mut R) -> Result<QuantizedMessage> {
    let s = level_count(z)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let norm64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm = norm64 as f32;
    if !norm.is_finite() {
        return Err(Error::NonFiniteInput);
    }
    let mut signs = Vec::with_capacity(x.len());
    let mut levels = Vec::with_capacity(x.len());
    if norm == 0.0 {
        signs.resize(x.len(), 1);
        levels.resize(x.len(), 0);
        return QuantizedMessage::new(norm, signs, levels, z);
    }
    // The norm used for rounding is the f32 value that will go on the wire,
    // so the dequantized expectation matches the input exactly.
    let norm_used = norm as f64;
    let sf = s as f64;
    for &v in x {
        signs.push(if v.is_sign_negative() { -1 } else { 1 });
        let u = (v.abs() / norm_used).min(1.0);
        let t = sf * u;
        let floor = t.floor();
        let frac = t - floor;
        let up: bool = rng.gen::<f64>() < frac;
        levels.push(floor as u32 + u32::from(up));
    }
    QuantizedMessage::new(norm, signs, levels, z)
}

/// Reconstruct the real vector: coordinate `m` is `norm * sign_m * level_m / s`.
pub fn dequantize(msg: &QuantizedMessage) -> Vec<f64> {
    let s = level_count(msg.bit_width).expect("message invariant") as f64;
    let norm = msg.norm as f64;
    msg.signs
        .iter()
        .zip(&msg.levels)
        .map(|(&sg, &lv)| norm * f64::from(sg) * (lv as f64 / s))
        .collect()
}

/// Accumulate `scale * dequantize(msg)` into `out` without allocating.
pub fn dequantize_into(msg: &QuantizedMessage, scale: f64, out: &mut [f64]) {
    let s = level_count(msg.bit_width).expect("message invariant") as f64;
    let norm = msg.norm as f64;
    for ((o, &sg), &lv) in out.iter_mut().zip(&msg.signs).zip(&msg.levels) {
        *o += scale * norm * f64::from(sg) * (lv as f64 / s);
    }
}

struct BitWriter {
    bytes: Vec<u8>,
    acc: u8,
    filled: u32,
}

impl BitWriter {
    fn new(capacity: usize) -> Self {
        Self {
            bytes: Vec::with_capacity(capacity),
            acc: 0,
            filled: 0,
        }
    }

    fn push(&mut self, value: u32, bits: u32) {
        for k in (0..bits).rev() {
            self.acc = (self.acc << 1) | ((value >> k) & 1) as u8;
            self.filled += 1;
            if self.filled == 8 {
                self.bytes.push(self.acc);
                self.acc = 0;
                self.filled = 0;
            }
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.filled > 0 {
            self.bytes.push(self.acc << (8 - self.filled));
        }
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    fn read(&mut self, bits: u32) -> u32 {
        let mut v = 0u32;
        for _ in 0..bits {
            let byte = self.bytes[self.pos / 8];
            let bit = (byte >> (7 - (self.pos % 8))) & 1;
            v = (v << 1) | u32::from(bit);
            self.pos += 1;
        }
        v
    }
}

/// Serialize a message to its wire form.
pub fn pack(msg: &QuantizedMessage) -> Vec<u8> {
    let z = msg.bit_width;
    let mut out = Vec::with_capacity(msg.wire_bytes());
    out.extend_from_slice(&msg.norm.to_le_bytes());
    let mut writer = BitWriter::new(msg.wire_bytes() - 4);
    for (&sg, &lv) in msg.signs.iter().zip(&msg.levels) {
        writer.push(u32::from(sg < 0), 1);
        writer.push(lv, z - 1);
    }
    out.extend_from_slice(&writer.finish());
    out
}

/// Decode a wire payload for known dimension `l` and bit width `z`.
///
/// The payload length must match `wire_bytes(l, z)` exactly; short input
/// yields a truncation error.
pub fn unpack(bytes: &[u8], z: u32, l: usize) -> Result<QuantizedMessage> {
    level_count(z)?;
    let expected = wire_bytes(l, z);
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::WireLengthMismatch {
            expected,
            got: bytes.len(),
        });
    }
    let norm = f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if !norm.is_finite() || norm < 0.0 {
        return Err(Error::InvalidWire(format!("bad norm {norm}")));
    }
    let mut reader = BitReader {
        bytes: &bytes[4..],
        pos: 0,
    };
    let mut signs = Vec::with_capacity(l);
    let mut levels = Vec::with_capacity(l);
    for _ in 0..l {
        signs.push(if reader.read(1) == 1 { -1 } else { 1 });
        levels.push(reader.read(z - 1));
    }
    QuantizedMessage::new(norm, signs, levels, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;

    #[test]
    fn variance_coeff_examples() {
        assert_eq!(variance_coeff(2, 4).unwrap(), 1.0);
        assert!((variance_coeff(3, 4).unwrap() - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(variance_coeff(4, 196).unwrap(), 1.0);
        assert!(matches!(variance_coeff(1, 4), Err(Error::InvalidBitWidth(1))));
    }

    #[test]
    fn variance_coeff_monotone_in_z_linear_in_l() {
        let mut prev = f64::INFINITY;
        for z in 2..=16 {
            let phi = variance_coeff(z, 64).unwrap();
            assert!(phi < prev, "phi must be strictly decreasing in z");
            prev = phi;
        }
        let base = variance_coeff(5, 1).unwrap();
        for l in [2usize, 7, 100] {
            assert!((variance_coeff(5, l).unwrap() - base * l as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn quantize_grid_point_is_deterministic() {
        let mut rng = substream(1, &[0]);
        let msg = quantize(&[0.0, 5.0], 2, &mut rng).unwrap();
        assert_eq!(msg.norm(), 5.0);
        assert_eq!(msg.levels(), &[0, 1]);
        assert_eq!(dequantize(&msg), vec![0.0, 5.0]);
    }

    #[test]
    fn quantize_zero_vector() {
        let mut rng = substream(1, &[1]);
        let msg = quantize(&[0.0, 0.0, 0.0], 7, &mut rng).unwrap();
        assert_eq!(msg.norm(), 0.0);
        assert_eq!(msg.levels(), &[0, 0, 0]);
        assert_eq!(msg.signs(), &[1, 1, 1]);
    }

    #[test]
    fn quantize_rejects_non_finite() {
        let mut rng = substream(1, &[2]);
        assert!(matches!(
            quantize(&[1.0, f64::NAN], 3, &mut rng),
            Err(Error::NonFiniteInput)
        ));
    }

    #[test]
    fn dequantize_examples() {
        let msg = QuantizedMessage::new(5.0, vec![1, 1], vec![0, 1], 2).unwrap();
        assert_eq!(dequantize(&msg), vec![0.0, 5.0]);
        let msg = QuantizedMessage::new(0.0, vec![1, -1], vec![0, 0], 4).unwrap();
        assert_eq!(dequantize(&msg), vec![0.0, 0.0]);
        let msg = QuantizedMessage::new(2.0, vec![-1, 1], vec![3, 1], 3).unwrap();
        let out = dequantize(&msg);
        assert!((out[0] + 2.0).abs() < 1e-15);
        assert!((out[1] - 2.0 / 3.0).abs() < 1e-15);
    }

    /// Monte Carlo oracle: the empirical mean of dequantized draws must match
    /// the input within 3 standard errors per coordinate.
    #[test]
    fn quantize_is_unbiased_monte_carlo() {
        let x = [3.0, 4.0];
        let n = 100_000usize;
        let mut rng = substream(0xF00D, &[0]);
        let mut sum = [0.0f64; 2];
        let mut sumsq = [0.0f64; 2];
        for _ in 0..n {
            let msg = quantize(&x, 2, &mut rng).unwrap();
            let y = dequantize(&msg);
            for m in 0..2 {
                sum[m] += y[m];
                sumsq[m] += y[m] * y[m];
            }
        }
        for m in 0..2 {
            let mean = sum[m] / n as f64;
            let var = (sumsq[m] / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - x[m]).abs() <= 3.0 * se.max(1e-12),
                "coordinate {m}: mean {mean} vs {} (se {se})",
                x[m]
            );
        }
    }

    /// Empirical mean squared error stays below the variance bound
    /// (5% slack for sampling noise).
    #[test]
    fn quantize_variance_bound_monte_carlo() {
        let l = 8;
        let n = 20_000usize;
        for z in 2..=8u32 {
            let mut rng = substream(0xBEEF, &[z as u64]);
            let x: Vec<f64> = (0..l).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm_sq: f64 = x.iter().map(|v| v * v).sum();
            let phi = variance_coeff(z, l).unwrap();
            let mut acc = 0.0;
            for _ in 0..n {
                let msg = quantize(&x, z, &mut rng).unwrap();
                let y = dequantize(&msg);
                acc += x
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
            }
            let mse = acc / n as f64;
            assert!(
                mse <= 1.05 * phi * norm_sq,
                "z={z}: mse {mse} exceeds bound {}",
                phi * norm_sq
            );
        }
    }

    #[test]
    fn wire_sizes() {
        assert_eq!(wire_bytes(4, 2), 5);
        assert_eq!(wire_bytes(10, 5), 11);
        let mut rng = substream(3, &[0]);
        let msg = quantize(&[1.0, -2.0, 0.5, 0.25], 2, &mut rng).unwrap();
        assert_eq!(pack(&msg).len(), 5);
    }

    #[test]
    fn unpack_rejects_truncation() {
        let mut rng = substream(4, &[0]);
        let msg = quantize(&[1.0, -2.0, 0.5], 5, &mut rng).unwrap();
        let bytes = pack(&msg);
        assert!(matches!(
            unpack(&bytes[..bytes.len() - 1], 5, 3),
            Err(Error::Truncated { .. })
        ));
    }

    #[test]
    fn round_trip_large_dim() {
        let mut rng = substream(5, &[0]);
        let x: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-3.0..3.0)).collect();
        for z in [2u32, 9, 16] {
            let msg = quantize(&x, z, &mut rng).unwrap();
            let back = unpack(&pack(&msg), z, x.len()).unwrap();
            assert_eq!(back, msg);
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(
            z in 2u32..=16,
            l in 1usize..=64,
            seed in any::<u64>(),
        ) {
            let mut rng = substream(seed, &[9]);
            let s = level_count(z).unwrap();
            let norm: f32 = rng.gen_range(0.01f32..100.0);
            let signs: Vec<i8> = (0..l).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
            let levels: Vec<u32> = (0..l).map(|_| rng.gen_range(0..=s)).collect();
            let msg = QuantizedMessage::new(norm, signs, levels, z).unwrap();
            let back = unpack(&pack(&msg), z, l).unwrap();
            prop_assert_eq!(back, msg);
        }

        #[test]
        fn dequantized_magnitude_bounded_by_norm(
            z in 2u32..=10,
            l in 1usize..=32,
            seed in any::<u64>(),
        ) {
            let mut rng = substream(seed, &[10]);
            let x: Vec<f64> = (0..l).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let msg = quantize(&x, z, &mut rng).unwrap();
            let y = dequantize(&msg);
            let norm = msg.norm() as f64;
            for v in y {
                prop_assert!(v.abs() <= norm * (1.0 + 1e-12));
            }
        }
    }
}
