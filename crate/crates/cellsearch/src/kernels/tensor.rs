//! Minimal dense 4-D tensor in NCHW layout, f64 throughout.

use rand::Rng;

/// Dense scalar array with dims `(batch, channels, height, width)`,
/// row-major with width fastest. Value-semantic.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    data: Vec<f64>,
    dims: (usize, usize, usize, usize),
}

impl Tensor4 {
    pub fn zeros(dims: (usize, usize, usize, usize)) -> Self {
        let (n, c, h, w) = dims;
        Tensor4 {
            data: vec![0.0; n * c * h * w],
            dims,
        }
    }

    pub fn from_vec(data: Vec<f64>, dims: (usize, usize, usize, usize)) -> Self {
        let (n, c, h, w) = dims;
        assert_eq!(data.len(), n * c * h * w, "data length must match dims");
        Tensor4 { data, dims }
    }

    pub fn random<R: Rng>(rng: &mut R, dims: (usize, usize, usize, usize)) -> Self {
        let (n, c, h, w) = dims;
        let data = (0..n * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor4 { data, dims }
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims.0
    }

    pub fn channels(&self) -> usize {
        self.dims.1
    }

    pub fn height(&self) -> usize {
        self.dims.2
    }

    pub fn width(&self) -> usize {
        self.dims.3
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.dims.1 + c) * self.dims.2 + h) * self.dims.3 + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(n, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut f64 {
        let i = self.index(n, c, h, w);
        &mut self.data[i]
    }

    /// Contiguous `h * w` slice of one channel plane.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let start = self.index(n, c, 0, 0);
        let hw = self.dims.2 * self.dims.3;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let start = self.index(n, c, 0, 0);
        let hw = self.dims.2 * self.dims.3;
        &mut self.data[start..start + hw]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Zero-pads height and width by `pad` on every side.
    pub fn pad_spatial(&self, pad: usize) -> Tensor4 {
        if pad == 0 {
            return self.clone();
        }
        let (n, c, h, w) = self.dims;
        let mut out = Tensor4::zeros((n, c, h + 2 * pad, w + 2 * pad));
        for ni in 0..n {
            for ci in 0..c {
                for hi in 0..h {
                    let src = self.index(ni, ci, hi, 0);
                    let dst = out.index(ni, ci, hi + pad, pad);
                    out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
                }
            }
        }
        out
    }

    /// Crops `pad` rows/columns from every spatial side (inverse of
    /// [`Tensor4::pad_spatial`]).
    pub fn crop_spatial(&self, pad: usize) -> Tensor4 {
        if pad == 0 {
            return self.clone();
        }
        let (n, c, h, w) = self.dims;
        let (oh, ow) = (h - 2 * pad, w - 2 * pad);
        let mut out = Tensor4::zeros((n, c, oh, ow));
        for ni in 0..n {
            for ci in 0..c {
                for hi in 0..oh {
                    let src = self.index(ni, ci, hi + pad, pad);
                    let dst = out.index(ni, ci, hi, 0);
                    out.data_mut()[dst..dst + ow]
                        .copy_from_slice(&self.data[src..src + ow]);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_row_major_width_fastest() {
        let t = Tensor4::from_vec((0..24).map(|v| v as f64).collect(), (1, 2, 3, 4));
        assert_eq!(t.at(0, 0, 0, 0), 0.0);
        assert_eq!(t.at(0, 0, 0, 3), 3.0);
        assert_eq!(t.at(0, 0, 1, 0), 4.0);
        assert_eq!(t.at(0, 1, 0, 0), 12.0);
    }

    #[test]
    fn pad_then_crop_round_trips() {
        let t = Tensor4::from_vec((0..18).map(|v| v as f64 - 4.0).collect(), (1, 2, 3, 3));
        let padded = t.pad_spatial(1);
        assert_eq!(padded.dims(), (1, 2, 5, 5));
        assert_eq!(padded.at(0, 0, 0, 0), 0.0);
        assert_eq!(padded.at(0, 0, 1, 1), t.at(0, 0, 0, 0));
        assert_eq!(padded.crop_spatial(1), t);
    }
}
