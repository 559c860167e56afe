//! Posed skeleton state and analytic derivatives of attached points.
//!
//! Every joint `j` carries a global frame `G_j = G_parent(j) * exp(theta_j)`,
//! with `G_root = exp(theta_root)`. Child positions follow
//! `J_n = J_parent(n) + G_parent(n) * (phi_bone(n) * offset_n)`, root at `t`.
//! A point rigidly attached to joint `k` is `P = J_k + G_k * o`.

use nalgebra::{Matrix3, Vector3};

use crate::error::Result;
use crate::skeleton::{Marker, ModelParams, SkeletonDef};
use crate::so3;

/// Column indices of the flattened parameter vector
/// `[theta (3J) | phi (P) | t (3) | sigma (K)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub joints: usize,
    pub parts: usize,
    pub expression: usize,
}

impl ParamLayout {
    pub fn new(skel: &SkeletonDef, expression: usize) -> Self {
        Self {
            joints: skel.joint_count(),
            parts: skel.part_count(),
            expression,
        }
    }

    pub fn of(params: &ModelParams) -> Self {
        Self {
            joints: params.theta.len(),
            parts: params.phi.len(),
            expression: params.sigma.len(),
        }
    }

    #[inline]
    pub fn theta(&self, joint: usize, axis: usize) -> usize {
        3 * joint + axis
    }

    #[inline]
    pub fn phi(&self, part: usize) -> usize {
        3 * self.joints + part
    }

    #[inline]
    pub fn t(&self, axis: usize) -> usize {
        3 * self.joints + self.parts + axis
    }

    #[inline]
    pub fn sigma(&self, k: usize) -> usize {
        3 * self.joints + self.parts + 3 + k
    }

    pub fn len(&self) -> usize {
        3 * self.joints + self.parts + 3 + self.expression
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sparse Jacobian of a 3D point: `(column, d point / d param[column])`.
pub type PointJacobian = Vec<(usize, Vector3<f64>)>;

#[derive(Debug, Clone)]
pub struct Posed {
    pub positions: Vec<Vector3<f64>>,
    /// Global frame of each joint.
    pub rotations: Vec<Matrix3<f64>>,
    /// `G_parent(j) * J_l(theta_j)`; maps a change of `theta_j` to a global rotation increment.
    axis_maps: Vec<Matrix3<f64>>,
    /// `G_parent(n) * offset_n`: derivative of `J_n` (and its subtree) with respect to its bone scale.
    bone_dirs: Vec<Vector3<f64>>,
}

impl Posed {
    pub fn new(params: &ModelParams, skel: &SkeletonDef) -> Result<Self> {
        params.check(skel)?;
        let n = skel.joint_count();
        let mut positions = vec![Vector3::zeros(); n];
        let mut rotations = vec![Matrix3::identity(); n];
        let mut axis_maps = vec![Matrix3::identity(); n];
        let mut bone_dirs = vec![Vector3::zeros(); n];
        for &j in skel.order() {
            let local = so3::exp(&params.theta[j]);
            let jl = so3::left_jacobian(&params.theta[j]);
            match skel.parent(j) {
                None => {
                    positions[j] = params.t;
                    rotations[j] = local;
                    axis_maps[j] = jl;
                }
                Some(p) => {
                    let bone = skel.bone_of(j).expect("non-root joint has a bone");
                    let parent_rot = rotations[p];
                    bone_dirs[j] = parent_rot * skel.template_offset(j);
                    positions[j] = positions[p] + bone_dirs[j] * params.phi[bone];
                    rotations[j] = parent_rot * local;
                    axis_maps[j] = parent_rot * jl;
                }
            }
        }
        Ok(Self {
            positions,
            rotations,
            axis_maps,
            bone_dirs,
        })
    }

    /// Position of a point with local offset `offset` in the frame of `joint`.
    #[inline]
    pub fn attached(&self, joint: usize, offset: &Vector3<f64>) -> Vector3<f64> {
        self.positions[joint] + self.rotations[joint] * offset
    }

    pub fn markers(&self, skel: &SkeletonDef) -> Vec<Marker> {
        let mut out = Vec::with_capacity(skel.marker_count());
        for (p, &(m, _)) in skel.parts().iter().enumerate() {
            for off in skel.markers(p) {
                out.push(Marker {
                    part: p,
                    position: self.attached(m, off),
                });
            }
        }
        out
    }

    /// Jacobian of a point rigidly attached to `joint` (currently at `point`)
    /// with respect to theta, phi and t. Columns for `sigma` are not included.
    pub fn point_jacobian(
        &self,
        skel: &SkeletonDef,
        layout: &ParamLayout,
        joint: usize,
        point: &Vector3<f64>,
        out: &mut PointJacobian,
    ) {
        out.clear();
        let mut j = Some(joint);
        while let Some(k) = j {
            // d P / d theta_k = -hat(P - J_k) * G_parent(k) * J_l(theta_k)
            let m = -so3::hat(&(point - self.positions[k])) * self.axis_maps[k];
            for c in 0..3 {
                out.push((layout.theta(k, c), m.column(c).into_owned()));
            }
            if let Some(bone) = skel.bone_of(k) {
                out.push((layout.phi(bone), self.bone_dirs[k]));
            }
            j = skel.parent(k);
        }
        for c in 0..3 {
            let mut e = Vector3::zeros();
            e[c] = 1.0;
            out.push((layout.t(c), e));
        }
    }
}
