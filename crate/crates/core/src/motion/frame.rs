use serde::{Deserialize, Serialize};

use super::quat::Quaternion;
use super::skeleton::{
    finite_difference_velocities, forward_kinematics, root_relative, Skeleton, Vec3,
};
use crate::{Error, Result};

/// One timestep of motion.
///
/// `positions` are root-relative (row 0 is the origin) and `velocities` are
/// finite differences of those positions in units per second. The root
/// translation is carried along but never fed to the networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionFrame {
    pub rotations: Vec<Quaternion>,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub root_translation: Vec3,
}

/// Width of the per-frame feature vector for `joints` joints.
pub const fn feature_width(joints: usize) -> usize {
    10 * joints
}

impl MotionFrame {
    pub fn joint_count(&self) -> usize {
        self.rotations.len()
    }

    /// Checks the unit-rotation, root-relative and shape invariants.
    pub fn validate(&self) -> Result<()> {
        let j = self.rotations.len();
        if self.positions.len() != j || self.velocities.len() != j {
            return Err(Error::shape(
                "frame rotation/position/velocity counts differ",
            ));
        }
        for q in &self.rotations {
            q.ensure_unit()?;
        }
        if self
            .positions
            .first()
            .is_some_and(|p| p.iter().any(|c| c.abs() > 1e-9))
        {
            return Err(Error::Domain(
                "frame positions are not root-relative".into(),
            ));
        }
        Ok(())
    }

    /// `[rotations (4J), positions (3J), velocities (3J)]`, joint-major.
    pub fn features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(feature_width(self.joint_count()));
        self.write_features(&mut out);
        out
    }

    pub fn write_features(&self, out: &mut Vec<f64>) {
        out.extend(self.rotations.iter().flat_map(|q| q.to_array()));
        out.extend(self.positions.iter().flatten());
        out.extend(self.velocities.iter().flatten());
    }

    /// Inverse of [`MotionFrame::features`]; quaternions are renormalized.
    pub fn from_features(features: &[f64], joints: usize, root_translation: Vec3) -> Result<Self> {
        if features.len() != feature_width(joints) {
            return Err(Error::shape(format!(
                "{} features for {joints} joints (expected {})",
                features.len(),
                feature_width(joints)
            )));
        }
        let (rot, rest) = features.split_at(4 * joints);
        let (pos, vel) = rest.split_at(3 * joints);
        Ok(Self {
            rotations: rot
                .chunks_exact(4)
                .map(|c| Quaternion::new(c[0], c[1], c[2], c[3]).normalized())
                .collect(),
            positions: pos.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            velocities: vel.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
            root_translation,
        })
    }

    /// Builds frames from a rotation track: positions by forward kinematics,
    /// made root-relative, and velocities by finite differences. A
    /// single-frame track gets zero velocities.
    pub fn sequence_from_pose_track(
        skeleton: &Skeleton,
        rotations: &[Vec<Quaternion>],
        roots: &[Vec3],
        fps: f64,
    ) -> Result<Vec<MotionFrame>> {
        if rotations.len() != roots.len() {
            return Err(Error::Length(
                "rotation and root tracks differ in length".into(),
            ));
        }
        let positions = rotations
            .iter()
            .map(|r| forward_kinematics(skeleton, r, [0.0; 3]).map(|p| root_relative(&p)))
            .collect::<Result<Vec<_>>>()?;
        let velocities = match positions.len() {
            0 => Vec::new(),
            1 => vec![vec![[0.0; 3]; skeleton.joint_count()]],
            _ => finite_difference_velocities(&positions, fps)?,
        };
        Ok(rotations
            .iter()
            .zip(positions)
            .zip(velocities)
            .zip(roots)
            .map(|(((r, p), v), root)| MotionFrame {
                rotations: r.iter().map(|q| q.canonical()).collect(),
                positions: p,
                velocities: v,
                root_translation: *root,
            })
            .collect())
    }
}
