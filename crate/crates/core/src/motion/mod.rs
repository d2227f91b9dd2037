//! Geometric substrate: rotations, skeletons, kinematics and frame features.

mod euler;
mod frame;
mod labels;
mod quat;
mod skeleton;

pub use euler::{Axis, EulerOrder};
pub use frame::{feature_width, MotionFrame};
pub use labels::{ContentLabel, StyleLabel, NEUTRAL};
pub use quat::{quat_angle, Quaternion, UNIT_TOLERANCE};
pub use skeleton::{
    finite_difference_velocities, forward_kinematics, root_relative, Skeleton, Vec3,
};
