use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::event::SensorGeometry;

/// Grayscale image with intensities in `[0, 1]` and a timestamp in microseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: u32,
    height: u32,
    pub t: u64,
    values: Vec<f32>,
}

impl Frame {
    pub fn new(width: u32, height: u32, t: u64, values: Vec<f32>) -> Result<Self> {
        if values.len() != width as usize * height as usize {
            return Err(Error::Shape(alloc::format!(
                "frame {width}x{height} needs {} values, got {}",
                width as usize * height as usize,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Invalid(alloc::format!("frame value {v} outside [0, 1]")));
        }
        Ok(Frame {
            width,
            height,
            t,
            values,
        })
    }

    /// Builds a frame, clamping every value into `[0, 1]` (NaN maps to 0).
    pub fn from_clamped(width: u32, height: u32, t: u64, mut values: Vec<f32>) -> Result<Self> {
        for v in values.iter_mut() {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Frame::new(width, height, t, values)
    }

    pub fn constant(geometry: SensorGeometry, t: u64, value: f32) -> Self {
        Frame {
            width: geometry.width,
            height: geometry.height,
            t,
            values: vec![value.clamp(0.0, 1.0); geometry.pixels()],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn geometry(&self) -> SensorGeometry {
        SensorGeometry {
            width: self.width,
            height: self.height,
        }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width as usize + x]
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn check_same_shape(&self, other: &Frame) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(alloc::format!(
                "frames differ in size: {}x{} vs {}x{}",
                self.width,
                self.height,
                other.width,
                other.height
            )))
        }
    }
}
