//! Axis-aligned boxes and the three overlap ratios.
//!
//! Boxes live in continuous pixel coordinates and are stored in corner form.
//! There is no `+1` pixel convention anywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Axis-aligned rectangle `[x_min, x_max] x [y_min, y_max]`.
///
/// Zero-area boxes can be constructed; ratio operations that would divide by
/// a zero area reject them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    x_min: T,
    y_min: T,
    x_max: T,
    y_max: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(x_min: T, y_min: T, x_max: T, y_max: T) -> Result<Self> {
        let invalid = |reason| Error::InvalidBox {
            x_min: x_min.to_f64().unwrap_or(f64::NAN),
            y_min: y_min.to_f64().unwrap_or(f64::NAN),
            x_max: x_max.to_f64().unwrap_or(f64::NAN),
            y_max: y_max.to_f64().unwrap_or(f64::NAN),
            reason,
        };
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        if x_max < x_min || y_max < y_min {
            return Err(invalid("negative extent"));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Builds a box from its top-left corner and size, as stored in label files.
    pub fn from_xywh(x: T, y: T, w: T, h: T) -> Result<Self> {
        if w < T::zero() || h < T::zero() {
            return Err(Error::InvalidBox {
                x_min: x.to_f64().unwrap_or(f64::NAN),
                y_min: y.to_f64().unwrap_or(f64::NAN),
                x_max: (x + w).to_f64().unwrap_or(f64::NAN),
                y_max: (y + h).to_f64().unwrap_or(f64::NAN),
                reason: "negative width or height",
            });
        }
        Self::new(x, y, x + w, y + h)
    }

    pub fn x_min(&self) -> T {
        self.x_min
    }

    pub fn y_min(&self) -> T {
        self.y_min
    }

    pub fn x_max(&self) -> T {
        self.x_max
    }

    pub fn y_max(&self) -> T {
        self.y_max
    }

    pub fn width(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> T {
        self.y_max - self.y_min
    }

    pub fn to_xywh(&self) -> [T; 4] {
        [self.x_min, self.y_min, self.width(), self.height()]
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &Self) -> T {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        w.max(T::zero()) * h.max(T::zero())
    }

    /// Intersection over union. Errors when both boxes have zero area.
    pub fn iou(&self, other: &Self) -> Result<T> {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= T::zero() {
            return Err(Error::DegenerateArea("IoU of two zero-area boxes"));
        }
        Ok((inter / union).min(T::one()))
    }

    /// Intersection over the area of `self` (the predicted box).
    pub fn iop(&self, gt: &Self) -> Result<T> {
        let area = self.area();
        if area <= T::zero() {
            return Err(Error::DegenerateArea("IoP of a zero-area prediction"));
        }
        Ok((self.intersection_area(gt) / area).min(T::one()))
    }

    /// Intersection over the area of `gt` (the correct box).
    pub fn ioc(&self, gt: &Self) -> Result<T> {
        let area = gt.area();
        if area <= T::zero() {
            return Err(Error::DegenerateArea("IoC of a zero-area ground truth"));
        }
        Ok((self.intersection_area(gt) / area).min(T::one()))
    }

    pub fn cast<U: Scalar>(&self) -> BBox<U> {
        BBox {
            x_min: U::lit(self.x_min.to_f64().unwrap()),
            y_min: U::lit(self.y_min.to_f64().unwrap()),
            x_max: U::lit(self.x_max.to_f64().unwrap()),
            y_max: U::lit(self.y_max.to_f64().unwrap()),
        }
    }
}

pub fn area<T: Scalar>(b: &BBox<T>) -> T {
    b.area()
}

pub fn intersection_area<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    a.intersection_area(b)
}

pub fn iou<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> Result<T> {
    a.iou(b)
}

pub fn iop<T: Scalar>(b: &BBox<T>, y: &BBox<T>) -> Result<T> {
    b.iop(y)
}

pub fn ioc<T: Scalar>(b: &BBox<T>, y: &BBox<T>) -> Result<T> {
    b.ioc(y)
}
