//! Weak-perspective and pinhole projection, plus square crop windows.

use nalgebra::{Matrix2x3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Camera {
    /// `(s X + cx, s Y + cy)`; depth is ignored.
    WeakPerspective { scale: f64, cx: f64, cy: f64 },
    /// `(f X / Z + cx, f Y / Z + cy)`.
    Perspective { focal: f64, cx: f64, cy: f64 },
}

impl Camera {
    pub fn weak(scale: f64, cx: f64, cy: f64) -> Self {
        Camera::WeakPerspective { scale, cx, cy }
    }

    pub fn perspective(focal: f64, cx: f64, cy: f64) -> Self {
        Camera::Perspective { focal, cx, cy }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Camera::WeakPerspective { scale, cx, cy } => {
                scale > 0.0 && cx.is_finite() && cy.is_finite()
            }
            Camera::Perspective { focal, cx, cy } => {
                focal > 0.0 && cx.is_finite() && cy.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid camera {self:?}")))
        }
    }

    pub fn is_perspective(&self) -> bool {
        matches!(self, Camera::Perspective { .. })
    }

    pub fn principal_point(&self) -> Vector2<f64> {
        match *self {
            Camera::WeakPerspective { cx, cy, .. } | Camera::Perspective { cx, cy, .. } => {
                Vector2::new(cx, cy)
            }
        }
    }

    pub fn project_point(&self, p: &Vector3<f64>) -> Result<Vector2<f64>> {
        match *self {
            Camera::WeakPerspective { scale, cx, cy } => {
                Ok(Vector2::new(scale * p.x + cx, scale * p.y + cy))
            }
            Camera::Perspective { focal, cx, cy } => {
                if !(p.z > 0.0) {
                    return Err(Error::BehindCamera(p.z));
                }
                Ok(Vector2::new(focal * p.x / p.z + cx, focal * p.y / p.z + cy))
            }
        }
    }

    /// Projection and its 2x3 derivative with respect to the 3D point.
    pub fn project_with_jacobian(
        &self,
        p: &Vector3<f64>,
    ) -> Result<(Vector2<f64>, Matrix2x3<f64>)> {
        let uv = self.project_point(p)?;
        let jac = match *self {
            Camera::WeakPerspective { scale, .. } => {
                Matrix2x3::new(scale, 0.0, 0.0, 0.0, scale, 0.0)
            }
            Camera::Perspective { focal, .. } => {
                let iz = 1.0 / p.z;
                Matrix2x3::new(
                    focal * iz,
                    0.0,
                    -focal * p.x * iz * iz,
                    0.0,
                    focal * iz,
                    -focal * p.y * iz * iz,
                )
            }
        };
        Ok((uv, jac))
    }

    /// Camera-frame point that projects to pixel `uv` at depth `z`.
    pub fn unproject(&self, uv: &Vector2<f64>, z: f64) -> Vector3<f64> {
        match *self {
            Camera::WeakPerspective { scale, cx, cy } => {
                Vector3::new((uv.x - cx) / scale, (uv.y - cy) / scale, z)
            }
            Camera::Perspective { focal, cx, cy } => {
                Vector3::new((uv.x - cx) * z / focal, (uv.y - cy) * z / focal, z)
            }
        }
    }
}

/// Project a list of points.
pub fn project(camera: &Camera, points: &[Vector3<f64>]) -> Result<Vec<Vector2<f64>>> {
    points.iter().map(|p| camera.project_point(p)).collect()
}

/// Square crop window: crop pixel = `zoom * (image pixel - center) + size / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crop {
    pub zoom: f64,
    pub center: Vector2<f64>,
    pub size: usize,
}

impl Crop {
    pub fn to_crop(&self, uv: &Vector2<f64>) -> Vector2<f64> {
        (uv - self.center) * self.zoom + Vector2::repeat(self.size as f64 * 0.5)
    }

    pub fn to_image(&self, uv: &Vector2<f64>) -> Vector2<f64> {
        (uv - Vector2::repeat(self.size as f64 * 0.5)) / self.zoom + self.center
    }
}
