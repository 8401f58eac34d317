use crate::error::{Error, Result};

/// Channel-major complex tensor of shape `[channels, height, width]`, kept
/// as separate real and imaginary planes.
///
/// For spectrogram data, height runs over frequency bins and width over
/// frames.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    shape: [usize; 3],
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexTensor {
    pub fn zeros(shape: [usize; 3]) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn from_parts(shape: [usize; 3], re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if re.len() != n || im.len() != n {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {n} values, got {} real / {} imaginary",
                re.len(),
                im.len()
            )));
        }
        if re.iter().chain(&im).any(|v| !v.is_finite()) {
            return Err(Error::Dimension("tensor contains non-finite values".into()));
        }
        Ok(Self { shape, re, im })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    pub fn plane(&self) -> usize {
        self.shape[1] * self.shape[2]
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn index(&self, c: usize, h: usize, w: usize) -> usize {
        (c * self.shape[1] + h) * self.shape[2] + w
    }

    /// Stacks `self` and `other` along the channel axis.
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        if self.shape[1..] != other.shape[1..] {
            return Err(Error::Dimension(format!(
                "cannot concatenate {:?} with {:?}",
                self.shape, other.shape
            )));
        }
        let mut re = self.re.clone();
        re.extend_from_slice(&other.re);
        let mut im = self.im.clone();
        im.extend_from_slice(&other.im);
        Ok(Self {
            shape: [self.shape[0] + other.shape[0], self.shape[1], self.shape[2]],
            re,
            im,
        })
    }

    /// Inverse of [`concat_channels`](Self::concat_channels).
    pub fn split_channels(&self, first: usize) -> (Self, Self) {
        let cut = first * self.plane();
        let a = Self {
            shape: [first, self.shape[1], self.shape[2]],
            re: self.re[..cut].to_vec(),
            im: self.im[..cut].to_vec(),
        };
        let b = Self {
            shape: [self.shape[0] - first, self.shape[1], self.shape[2]],
            re: self.re[cut..].to_vec(),
            im: self.im[cut..].to_vec(),
        };
        (a, b)
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.re.iter_mut().zip(&other.re) {
            *a += b;
        }
        for (a, b) in self.im.iter_mut().zip(&other.im) {
            *a += b;
        }
    }
}
