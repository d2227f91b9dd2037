use std::fmt;

use serde::{Deserialize, Serialize};

use super::quat::Quaternion;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    fn unit(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }

    pub fn letter(self) -> char {
        match self {
            Axis::X => 'X',
            Axis::Y => 'Y',
            Axis::Z => 'Z',
        }
    }
}

/// Intrinsic Tait-Bryan order: `R = R_a(a0) * R_b(a1) * R_c(a2)`, as in BVH
/// channel lists. All three axes must be distinct.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EulerOrder(pub [Axis; 3]);

impl Default for EulerOrder {
    fn default() -> Self {
        EulerOrder([Axis::Z, Axis::X, Axis::Y])
    }
}

impl fmt::Display for EulerOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in self.0 {
            write!(f, "{}", a.letter())?;
        }
        Ok(())
    }
}

impl EulerOrder {
    pub fn new(axes: [Axis; 3]) -> Option<Self> {
        let [a, b, c] = axes;
        (a != b && b != c && a != c).then_some(EulerOrder(axes))
    }

    /// +1 for cyclic orders (XYZ, YZX, ZXY), -1 otherwise.
    fn parity(self) -> f64 {
        let [i, j, _] = self.0.map(Axis::index);
        if (i + 1) % 3 == j {
            1.0
        } else {
            -1.0
        }
    }

    /// Angles in radians to a unit quaternion.
    pub fn to_quaternion(self, angles: [f64; 3]) -> Quaternion {
        let q: Vec<Quaternion> = self
            .0
            .iter()
            .zip(angles)
            .map(|(axis, angle)| Quaternion::from_axis_angle(axis.unit(), angle))
            .collect();
        (q[0] * q[1] * q[2]).normalized().canonical()
    }

    /// Inverse of [`EulerOrder::to_quaternion`]; the middle angle lies in
    /// `[-pi/2, pi/2]`.
    pub fn from_quaternion(self, q: Quaternion) -> [f64; 3] {
        let r = q.normalized().to_matrix();
        let [i, j, k] = self.0.map(Axis::index);
        let e = self.parity();
        let middle = (e * r[i][k]).clamp(-1.0, 1.0).asin();
        let last = (-e * r[i][j]).atan2(r[i][i]);
        let first = (-e * r[j][k]).atan2(r[k][k]);
        [first, middle, last]
    }
}
