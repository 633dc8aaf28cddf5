use crate::autodiff::Scalar;
use crate::{Error, Result};

/// Row-major RGBA image with premultiplied alpha.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<S = f64> {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[S; 4]>,
}

impl<S: Scalar> Image<S> {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [S::zero(); 4])
    }

    pub fn filled(width: usize, height: usize, rgba: [S; 4]) -> Self {
        Self {
            width,
            height,
            pixels: vec![rgba; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[S; 4]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Shape(format!("{} pixels for {width}×{height}", pixels.len())));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> [S; 4] {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, rgba: [S; 4]) {
        self.pixels[y * self.width + x] = rgba;
    }

    pub fn value(&self) -> Image<f64> {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| p.map(|c| c.value())).collect(),
        }
    }

    pub fn same_shape<T>(&self, other: &Image<T>) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::Shape(format!(
                "image {}×{} vs {}×{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

impl Image<f64> {
    /// Lifts plain values to constants of another scalar type.
    pub fn lift<S: Scalar>(&self) -> Image<S> {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|p| p.map(S::constant)).collect(),
        }
    }

    pub fn alpha(&self) -> Vec<f64> {
        self.pixels.iter().map(|p| p[3]).collect()
    }
}
