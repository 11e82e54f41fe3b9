//! Radial kernels, their closed-form derivatives, and polynomial augmentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Partial derivative with respect to the evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Derivative {
    Value,
    Dx,
    Dy,
    Dxx,
    Dyy,
    Dxy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    /// Inverse multiquadric `1 / sqrt(1 + (eps r)^2)`.
    Imq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbfKernel {
    pub kind: KernelKind,
    pub shape: f64,
}

/// `1 / sqrt(1 + (eps r)^2)`.
pub fn imq_eval(eps: f64, r: f64) -> f64 {
    1.0 / (1.0 + (eps * r) * (eps * r)).sqrt()
}

impl RbfKernel {
    pub fn imq(shape: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::InvalidInput(format!("kernel shape must be positive, got {shape}")));
        }
        Ok(Self { kind: KernelKind::Imq, shape })
    }

    /// Order of conditional positive definiteness; 0 for positive definite kernels.
    pub fn cpd_order(&self) -> usize {
        match self.kind {
            KernelKind::Imq => 0,
        }
    }

    pub fn eval_radius(&self, r: f64) -> f64 {
        match self.kind {
            KernelKind::Imq => imq_eval(self.shape, r),
        }
    }

    /// Derivative of `x -> phi(|x - center|)` evaluated at `x`.
    pub fn derivative(&self, d: Derivative, center: Point, x: Point) -> f64 {
        let e2 = self.shape * self.shape;
        let d1 = x[0] - center[0];
        let d2 = x[1] - center[1];
        let s = 1.0 + e2 * (d1 * d1 + d2 * d2);
        let inv_sqrt = 1.0 / s.sqrt();
        let s32 = inv_sqrt / s;
        let s52 = s32 / s;
        match self.kind {
            KernelKind::Imq => match d {
                Derivative::Value => inv_sqrt,
                Derivative::Dx => -e2 * d1 * s32,
                Derivative::Dy => -e2 * d2 * s32,
                Derivative::Dxx => -e2 * s32 + 3.0 * e2 * e2 * d1 * d1 * s52,
                Derivative::Dyy => -e2 * s32 + 3.0 * e2 * e2 * d2 * d2 * s52,
                Derivative::Dxy => 3.0 * e2 * e2 * d1 * d2 * s52,
            },
        }
    }
}

/// Bivariate polynomials of total degree at most `degree`, written in
/// coordinates shifted to `origin` and divided by `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolyAugmentation {
    pub degree: Option<usize>,
}

impl PolyAugmentation {
    pub const NONE: Self = Self { degree: None };

    pub fn degree(d: usize) -> Self {
        Self { degree: Some(d) }
    }

    /// Dimension of the polynomial space, 0 without augmentation.
    pub fn dim(&self) -> usize {
        self.degree.map_or(0, |d| (d + 1) * (d + 2) / 2)
    }

    /// Exponent pairs `(a, b)` ordered by total degree, then by decreasing `a`.
    pub fn exponents(&self) -> Vec<(u32, u32)> {
        let Some(deg) = self.degree else { return Vec::new() };
        let mut out = Vec::with_capacity(self.dim());
        for total in 0..=deg as u32 {
            for b in 0..=total {
                out.push((total - b, b));
            }
        }
        out
    }
}

/// Derivative of `((x - o_x)/h)^a ((y - o_y)/h)^b` at `x`.
pub fn monomial_derivative(exp: (u32, u32), origin: Point, scale: f64, d: Derivative, x: Point) -> f64 {
    let xi = (x[0] - origin[0]) / scale;
    let eta = (x[1] - origin[1]) / scale;
    let (a, b) = exp;
    let (da, db) = match d {
        Derivative::Value => (0, 0),
        Derivative::Dx => (1, 0),
        Derivative::Dy => (0, 1),
        Derivative::Dxx => (2, 0),
        Derivative::Dyy => (0, 2),
        Derivative::Dxy => (1, 1),
    };
    if da > a || db > b {
        return 0.0;
    }
    let falling = |n: u32, k: u32| (0..k).map(|i| (n - i) as f64).product::<f64>();
    let coef = falling(a, da) * falling(b, db) / scale.powi((da + db) as i32);
    coef * xi.powi((a - da) as i32) * eta.powi((b - db) as i32)
}
