use crate::error::{Error, Result};

/// Pixel storage together with its value domain.
#[derive(Debug, Clone, PartialEq)]
pub enum PixelData {
    /// 8-bit values in `[0, 255]`.
    Byte(Vec<u8>),
    /// Floats in `[0, 1]`.
    Unit(Vec<f32>),
}

impl PixelData {
    pub fn len(&self) -> usize {
        match self {
            PixelData::Byte(v) => v.len(),
            PixelData::Unit(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An `H x W x C` image, channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: PixelData,
}

impl ImageTensor {
    pub fn from_bytes(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        Self::new(height, width, channels, PixelData::Byte(data))
    }

    pub fn from_unit(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        Self::new(height, width, channels, PixelData::Unit(data))
    }

    pub fn new(height: usize, width: usize, channels: usize, data: PixelData) -> Result<Self> {
        let expected = height * width * channels;
        if expected == 0 || data.len() != expected {
            return Err(Error::ShapeMismatch {
                op: "image tensor",
                lhs: vec![height, width, channels],
                rhs: vec![data.len()],
            });
        }
        if let PixelData::Unit(v) = &data {
            if let Some(bad) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::invalid(format!(
                    "unit-domain image has value {bad} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &PixelData {
        &self.data
    }

    pub fn into_data(self) -> PixelData {
        self.data
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match &self.data {
            PixelData::Byte(v) => Some(v),
            PixelData::Unit(_) => None,
        }
    }

    pub fn as_unit(&self) -> Option<&[f32]> {
        match &self.data {
            PixelData::Unit(v) => Some(v),
            PixelData::Byte(_) => None,
        }
    }

    /// Byte image scaled by `1/255` into the unit domain.
    pub fn to_unit(&self) -> ImageTensor {
        let data = match &self.data {
            PixelData::Byte(v) => v.iter().map(|&b| b as f32 / 255.0).collect(),
            PixelData::Unit(v) => v.clone(),
        };
        ImageTensor {
            data: PixelData::Unit(data),
            ..*self
        }
    }

    /// Unit image rounded to the nearest byte.
    pub fn to_bytes(&self) -> ImageTensor {
        let data = match &self.data {
            PixelData::Byte(v) => v.clone(),
            PixelData::Unit(v) => v.iter().map(|&x| (x * 255.0).round() as u8).collect(),
        };
        ImageTensor {
            data: PixelData::Byte(data),
            ..*self
        }
    }

    /// Maximum absolute difference, measured in the unit domain.
    pub fn linf_distance(&self, other: &ImageTensor) -> Result<f64> {
        if (self.height, self.width, self.channels) != (other.height, other.width, other.channels) {
            return Err(Error::ShapeMismatch {
                op: "linf distance",
                lhs: vec![self.height, self.width, self.channels],
                rhs: vec![other.height, other.width, other.channels],
            });
        }
        let a = self.to_unit();
        let b = other.to_unit();
        Ok(a.as_unit()
            .unwrap()
            .iter()
            .zip(b.as_unit().unwrap())
            .map(|(x, y)| (*x as f64 - *y as f64).abs())
            .fold(0.0, f64::max))
    }

    pub(crate) fn with_data(&self, data: PixelData) -> ImageTensor {
        debug_assert_eq!(data.len(), self.data.len());
        ImageTensor { data, ..*self }
    }
}
