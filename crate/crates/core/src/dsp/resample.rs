//! Causal piecewise-linear resampling by rational factors.
//!
//! Output sample `m` sits at source position `(m + 1) / ratio - 1`, which
//! aligns the last output of every block with the last input of that block.
//! Upsampled outputs therefore never read past the newest input, which lets
//! the generator run frame by frame without extra lookahead. Source samples
//! before the start of the signal are zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Real;

/// Output rate over input rate, kept as a reduced fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ratio {
    num: u64,
    den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl Ratio {
    pub const IDENTITY: Ratio = Ratio { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::InvalidArgument(format!("resampling ratio {num}/{den} must be positive")));
        }
        let g = gcd(num, den);
        Ok(Self { num: num / g, den: den / g })
    }

    /// Closest fraction with denominator at most 1000.
    pub fn from_f64(r: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidArgument(format!("resampling ratio {r} must be positive")));
        }
        for den in 1..=1000u64 {
            let num = (r * den as f64).round();
            if num >= 1.0 && (num / den as f64 - r).abs() < 1e-9 * r.max(1.0) {
                return Self::new(num as u64, den);
            }
        }
        Err(Error::InvalidArgument(format!("resampling ratio {r} is not a simple fraction")))
    }

    /// Upsampling by `factor`.
    pub fn up(factor: f64) -> Result<Self> {
        Self::from_f64(factor)
    }

    /// Downsampling by `factor`.
    pub fn down(factor: f64) -> Result<Self> {
        let r = Self::from_f64(factor)?;
        Ok(Self { num: r.den, den: r.num })
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_identity(&self) -> bool {
        self.num == self.den
    }

    pub fn inverse(&self) -> Self {
        Self { num: self.den, den: self.num }
    }

    /// Outputs available once `input_len` inputs have been seen.
    pub fn output_len(&self, input_len: usize) -> usize {
        ((input_len as u128 * self.num as u128) / self.den as u128) as usize
    }

    /// Source position of output `m` as `(floor index, remainder / num)`.
    #[inline]
    pub fn source(&self, m: u64) -> (i64, u64) {
        let sn = (m as i128 + 1) * self.den as i128 - self.num as i128;
        let n = self.num as i128;
        let i0 = sn.div_euclid(n);
        let rem = sn.rem_euclid(n);
        (i0 as i64, rem as u64)
    }
}

#[inline]
pub(crate) fn frac<T: Real>(rem: u64, num: u64) -> T {
    T::lit(rem as f64 / num as f64)
}

/// Linear interpolation between `a` and `b` at `rem / num`.
#[inline]
pub fn lerp<T: Real>(a: T, b: T, rem: u64, num: u64) -> T {
    if rem == 0 {
        a
    } else {
        a + (b - a) * frac::<T>(rem, num)
    }
}

/// Resample a single-channel signal.
pub fn fractional_resample<T: Real>(x: &[T], ratio: Ratio) -> Vec<T> {
    resample_rows(x, 1, x.len(), ratio)
}

/// Resample each row of a `channels × len` buffer.
pub fn resample_rows<T: Real>(x: &[T], channels: usize, len: usize, ratio: Ratio) -> Vec<T> {
    if ratio.is_identity() {
        return x.to_vec();
    }
    let out_len = ratio.output_len(len);
    let mut y = vec![T::zero(); channels * out_len];
    let fetch = |row: &[T], i: i64| if i >= 0 && (i as usize) < row.len() { row[i as usize] } else { T::zero() };
    for c in 0..channels {
        let row = &x[c * len..(c + 1) * len];
        for m in 0..out_len {
            let (i0, rem) = ratio.source(m as u64);
            let a = fetch(row, i0);
            let b = if rem == 0 { a } else { fetch(row, i0 + 1) };
            y[c * out_len + m] = lerp(a, b, rem, ratio.num());
        }
    }
    y
}

/// Adjoint of [`resample_rows`]: accumulates `dy` back onto the source grid.
pub fn resample_rows_adjoint<T: Real>(dy: &[T], channels: usize, len: usize, ratio: Ratio, dx: &mut [T]) {
    if ratio.is_identity() {
        for (d, &g) in dx.iter_mut().zip(dy) {
            *d = *d + g;
        }
        return;
    }
    let out_len = ratio.output_len(len);
    for c in 0..channels {
        for m in 0..out_len {
            let g = dy[c * out_len + m];
            let (i0, rem) = ratio.source(m as u64);
            let f: T = frac(rem, ratio.num());
            let mut put = |i: i64, v: T| {
                if i >= 0 && (i as usize) < len {
                    let d = &mut dx[c * len + i as usize];
                    *d = *d + v;
                }
            };
            if rem == 0 {
                put(i0, g);
            } else {
                put(i0, g * (T::one() - f));
                put(i0 + 1, g * f);
            }
        }
    }
}

/// Chunked form of [`resample_rows`]; concatenated outputs equal the
/// one-shot result for any chunking.
#[derive(Clone, Debug)]
pub struct StreamingResampler<T> {
    ratio: Ratio,
    channels: usize,
    consumed: u64,
    emitted: u64,
    prev: Vec<T>,
}

impl<T: Real> StreamingResampler<T> {
    pub fn new(ratio: Ratio, channels: usize) -> Self {
        Self { ratio, channels, consumed: 0, emitted: 0, prev: vec![T::zero(); channels] }
    }

    pub(crate) fn history_len(&self) -> usize {
        self.prev.len()
    }

    pub fn reset(&mut self) {
        self.consumed = 0;
        self.emitted = 0;
        self.prev.fill(T::zero());
    }

    /// Feed `channels × len` samples, returning `(outputs, out_len)`.
    pub fn process(&mut self, x: &[T], len: usize) -> (Vec<T>, usize) {
        let c_n = self.channels;
        if self.ratio.is_identity() {
            self.consumed += len as u64;
            self.emitted += len as u64;
            return (x.to_vec(), len);
        }
        let total = self.consumed + len as u64;
        let out_total = self.ratio.output_len(total as usize) as u64;
        let out_len = (out_total - self.emitted) as usize;
        let mut y = vec![T::zero(); c_n * out_len];
        let base = self.consumed as i64;
        for (j, m) in (self.emitted..out_total).enumerate() {
            let (i0, rem) = self.ratio.source(m);
            for c in 0..c_n {
                let row = &x[c * len..(c + 1) * len];
                let fetch = |i: i64| -> T {
                    if i < 0 {
                        T::zero()
                    } else if i < base {
                        self.prev[c]
                    } else {
                        row[(i - base) as usize]
                    }
                };
                let a = fetch(i0);
                let b = if rem == 0 { a } else { fetch(i0 + 1) };
                y[c * out_len + j] = lerp(a, b, rem, self.ratio.num());
            }
        }
        if len > 0 {
            for c in 0..c_n {
                self.prev[c] = x[c * len + len - 1];
            }
        }
        self.consumed = total;
        self.emitted = out_total;
        (y, out_len)
    }
}
