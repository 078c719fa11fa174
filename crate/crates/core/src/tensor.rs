//! Dense NCHW tensor of binary32 values.

use crate::error::{Error, Result};

/// Batch tensor in NCHW layout, row-major, contiguous `f32` storage.
///
/// All forward-pass arithmetic in this crate runs on `Tensor4` so that
/// accumulation order, and therefore every output bit, is fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn new(n: usize, c: usize, h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        let want = n * c * h * w;
        if data.len() != want {
            return Err(Error::config(format!(
                "tensor data length {} does not match shape {}x{}x{}x{} (= {})",
                data.len(),
                n,
                c,
                h,
                w,
                want
            )));
        }
        Ok(Tensor4 { n, c, h, w, data })
    }

    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn filled(n: usize, c: usize, h: usize, w: usize, value: f32) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![value; n * c * h * w],
        }
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn c(&self) -> usize {
        self.c
    }

    #[inline]
    pub fn h(&self) -> usize {
        self.h
    }

    #[inline]
    pub fn w(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        assert!(
            n < self.n && c < self.c && h < self.h && w < self.w,
            "index ({},{},{},{}) out of bounds for shape {:?}",
            n,
            c,
            h,
            w,
            self.shape()
        );
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, h: usize, w: usize) -> f32 {
        self.data[self.index(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: f32) {
        let i = self.index(n, c, h, w);
        self.data[i] = value;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// One feature map (fixed sample and channel) as a contiguous `h*w` slice.
    #[inline]
    pub fn map(&self, n: usize, c: usize) -> &[f32] {
        let start = (n * self.c + c) * self.h * self.w;
        &self.data[start..start + self.h * self.w]
    }

    /// Mutable access to one feature map.
    #[inline]
    pub fn map_mut(&mut self, n: usize, c: usize) -> &mut [f32] {
        let start = (n * self.c + c) * self.h * self.w;
        let len = self.h * self.w;
        &mut self.data[start..start + len]
    }

    /// One spatial row of a feature map.
    #[inline]
    pub fn row(&self, n: usize, c: usize, h: usize) -> &[f32] {
        let start = ((n * self.c + c) * self.h + h) * self.w;
        &self.data[start..start + self.w]
    }

    /// Everything belonging to one sample, across channels.
    #[inline]
    pub fn sample(&self, n: usize) -> &[f32] {
        let per = self.c * self.h * self.w;
        &self.data[n * per..(n + 1) * per]
    }

    /// Copy of one sample as its own batch-of-one tensor.
    pub fn slice_sample(&self, n: usize) -> Tensor4 {
        Tensor4 {
            n: 1,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.sample(n).to_vec(),
        }
    }

    /// Bit-exact equality, including NaN payloads and signed zeros.
    pub fn bitwise_eq(&self, other: &Tensor4) -> bool {
        self.shape() == other.shape()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// True if every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_mismatched_length() {
        assert!(Tensor4::new(1, 2, 3, 4, vec![0.0; 23]).is_err());
        assert!(Tensor4::new(1, 2, 3, 4, vec![0.0; 24]).is_ok());
    }

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor4::new(1, 2, 2, 3, (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(t.get(0, 0, 0, 0), 0.0);
        assert_eq!(t.get(0, 0, 1, 2), 5.0);
        assert_eq!(t.get(0, 1, 0, 0), 6.0);
        assert_eq!(t.get(0, 1, 1, 2), 11.0);
    }

    #[test]
    #[should_panic(expected = "out of bounds")]
    fn indexing_checks_bounds() {
        let t = Tensor4::zeros(1, 1, 2, 2);
        t.get(0, 0, 2, 0);
    }

    #[test]
    fn map_slice_matches_elementwise_access() {
        let t = Tensor4::new(2, 2, 2, 2, (0..16).map(|v| v as f32).collect()).unwrap();
        let m = t.map(1, 1);
        assert_eq!(m, &[12.0, 13.0, 14.0, 15.0]);
        assert_eq!(t.row(1, 1, 1), &[14.0, 15.0]);
    }

    #[test]
    fn bitwise_eq_distinguishes_nan_payloads_but_not_value_eq() {
        let a = Tensor4::new(1, 1, 1, 2, vec![f32::NAN, -0.0]).unwrap();
        let b = Tensor4::new(1, 1, 1, 2, vec![f32::NAN, -0.0]).unwrap();
        let c = Tensor4::new(1, 1, 1, 2, vec![f32::NAN, 0.0]).unwrap();
        assert!(a.bitwise_eq(&b), "identical bits must compare equal");
        assert!(!a.bitwise_eq(&c), "-0.0 and +0.0 differ bitwise");
    }
}
