use serde::{Deserialize, Serialize};

use super::euler::EulerOrder;
use super::quat::Quaternion;
use crate::{Error, Result};

pub type Vec3 = [f64; 3];

/// A joint tree in topological order.
///
/// Offsets are rest-pose bone vectors expressed in the parent's frame. Euler
/// orders and end sites are only used when writing BVH files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    names: Vec<String>,
    parents: Vec<Option<usize>>,
    offsets: Vec<Vec3>,
    euler_orders: Vec<EulerOrder>,
    end_sites: Vec<Option<Vec3>>,
}

impl Skeleton {
    pub fn new(
        names: Vec<String>,
        parents: Vec<Option<usize>>,
        offsets: Vec<Vec3>,
    ) -> Result<Self> {
        let n = parents.len();
        Self::with_layout(
            names,
            parents,
            offsets,
            vec![EulerOrder::default(); n],
            vec![None; n],
        )
    }

    pub fn with_layout(
        names: Vec<String>,
        parents: Vec<Option<usize>>,
        offsets: Vec<Vec3>,
        euler_orders: Vec<EulerOrder>,
        end_sites: Vec<Option<Vec3>>,
    ) -> Result<Self> {
        let j = parents.len();
        if j < 2 {
            return Err(Error::shape(format!(
                "skeleton needs at least 2 joints, got {j}"
            )));
        }
        if [
            names.len(),
            offsets.len(),
            euler_orders.len(),
            end_sites.len(),
        ]
        .iter()
        .any(|&len| len != j)
        {
            return Err(Error::shape("skeleton field lengths disagree"));
        }
        if parents[0].is_some() {
            return Err(Error::Domain("joint 0 must be the root".into()));
        }
        for (i, p) in parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < i => {}
                _ => {
                    return Err(Error::Domain(format!(
                        "joint {i} has parent {p:?}; parents must precede children"
                    )))
                }
            }
        }
        if offsets.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite bone offset".into()));
        }
        Ok(Self {
            names,
            parents,
            offsets,
            euler_orders,
            end_sites,
        })
    }

    pub fn joint_count(&self) -> usize {
        self.parents.len()
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.parents[joint]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn offsets(&self) -> &[Vec3] {
        &self.offsets
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn euler_orders(&self) -> &[EulerOrder] {
        &self.euler_orders
    }

    pub fn end_sites(&self) -> &[Option<Vec3>] {
        &self.end_sites
    }

    pub fn children(&self, joint: usize) -> impl Iterator<Item = usize> + '_ {
        self.parents
            .iter()
            .enumerate()
            .filter(move |(_, p)| **p == Some(joint))
            .map(|(i, _)| i)
    }
}

/// World joint positions for one pose.
pub fn forward_kinematics(
    skeleton: &Skeleton,
    rotations: &[Quaternion],
    root_translation: Vec3,
) -> Result<Vec<Vec3>> {
    let j = skeleton.joint_count();
    if rotations.len() != j {
        return Err(Error::shape(format!(
            "forward kinematics: {} rotations for a {j}-joint skeleton",
            rotations.len()
        )));
    }
    for q in rotations {
        q.ensure_unit()?;
    }
    let mut global = Vec::with_capacity(j);
    let mut positions = Vec::with_capacity(j);
    for i in 0..j {
        match skeleton.parent(i) {
            None => {
                global.push(rotations[i]);
                positions.push(root_translation);
            }
            Some(p) => {
                let r = global[p].rotate(skeleton.offsets()[i]);
                let base: Vec3 = positions[p];
                positions.push([base[0] + r[0], base[1] + r[1], base[2] + r[2]]);
                global.push(global[p] * rotations[i]);
            }
        }
    }
    Ok(positions)
}

/// Subtracts the root (row 0) from every row.
pub fn root_relative(positions: &[Vec3]) -> Vec<Vec3> {
    let Some(root) = positions.first().copied() else {
        return Vec::new();
    };
    positions
        .iter()
        .map(|p| [p[0] - root[0], p[1] - root[1], p[2] - root[2]])
        .collect()
}

/// Backward differences scaled by `fps`; the first frame copies the second.
pub fn finite_difference_velocities(positions: &[Vec<Vec3>], fps: f64) -> Result<Vec<Vec<Vec3>>> {
    if positions.len() < 2 {
        return Err(Error::Length(format!(
            "velocities need at least 2 frames, got {}",
            positions.len()
        )));
    }
    let mut out = Vec::with_capacity(positions.len());
    out.push(Vec::new());
    for w in positions.windows(2) {
        if w[0].len() != w[1].len() {
            return Err(Error::shape("joint count changes between frames"));
        }
        out.push(
            w[1].iter()
                .zip(&w[0])
                .map(|(a, b)| {
                    [
                        (a[0] - b[0]) * fps,
                        (a[1] - b[1]) * fps,
                        (a[2] - b[2]) * fps,
                    ]
                })
                .collect(),
        );
    }
    out[0] = out[1].clone();
    Ok(out)
}
