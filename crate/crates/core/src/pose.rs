//! Rigid transforms in SE(3) and pose-stream resampling.
//!
//! A [`Pose`] maps points from its local frame into the parent frame
//! (world-from-camera for camera poses). Rotations are unit quaternions stored
//! in `(w, x, y, z)` order and kept in the canonical hemisphere `w >= 0`.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PoseError {
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("interpolation factor {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("target timestamp {target_ns} ns outside pose stream [{first_ns}, {last_ns}]")]
    ExtrapolationRefused {
        target_ns: i64,
        first_ns: i64,
        last_ns: i64,
    },
    #[error("pose stream timestamps must be strictly increasing (at sample {0})")]
    UnorderedStream(usize),
    #[error("pose stream is empty")]
    EmptyStream,
}

/// A rigid transform: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    translation: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    /// Builds a pose from a translation in meters and a `(w, x, y, z)`
    /// quaternion. The quaternion is normalized and moved to `w >= 0`.
    pub fn new(translation: [f64; 3], quat_wxyz: [f64; 4]) -> Result<Self, PoseError> {
        if translation.iter().chain(quat_wxyz.iter()).any(|v| !v.is_finite()) {
            return Err(PoseError::InvalidPose(format!(
                "non-finite component in trans {translation:?} quat {quat_wxyz:?}"
            )));
        }
        let [w, x, y, z] = quat_wxyz;
        let q = Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if !(norm > 1e-12) || !norm.is_finite() {
            return Err(PoseError::InvalidPose(format!(
                "quaternion {quat_wxyz:?} has degenerate norm {norm}"
            )));
        }
        Self::from_parts(Vector3::from(translation), q)
    }

    pub fn from_translation(translation: [f64; 3]) -> Result<Self, PoseError> {
        Self::new(translation, [1.0, 0.0, 0.0, 0.0])
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized), with
    /// the given translation.
    pub fn from_axis_angle(
        translation: [f64; 3],
        axis: [f64; 3],
        angle: f64,
    ) -> Result<Self, PoseError> {
        let axis = Vector3::from(axis);
        let n = axis.norm();
        if !(n > 0.0) || !n.is_finite() || !angle.is_finite() {
            return Err(PoseError::InvalidPose(format!(
                "bad axis-angle {axis:?} / {angle}"
            )));
        }
        let half = 0.5 * angle;
        let v = axis * (half.sin() / n);
        Self::new(translation, [half.cos(), v.x, v.y, v.z])
    }

    fn from_parts(translation: Vector3<f64>, q: Quaternion<f64>) -> Result<Self, PoseError> {
        // already-unit inputs are kept bit-for-bit so serialized poses round-trip
        let unit = if (q.norm_squared() - 1.0).abs() <= 4.0 * f64::EPSILON {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        let unit = canonical(unit);
        let pose = Self {
            translation,
            rotation: unit,
        };
        if pose.is_finite() {
            Ok(pose)
        } else {
            Err(PoseError::InvalidPose(
                "operation produced a non-finite pose".into(),
            ))
        }
    }

    fn is_finite(&self) -> bool {
        self.translation.iter().all(|v| v.is_finite())
            && self.rotation.coords.iter().all(|v| v.is_finite())
    }

    pub fn translation(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    pub fn quat_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let q = self.rotation.quaternion();
        2.0 * q.imag().norm().atan2(q.w.abs())
    }

    /// Applies the transform to a point.
    pub fn transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        let out = self.rotation * Vector3::from(p) + self.translation;
        [out.x, out.y, out.z]
    }

    /// `self` then `other`, with `other` expressed in `self`'s frame.
    pub fn compose(&self, other: &Pose) -> Result<Pose, PoseError> {
        let translation = self.translation + self.rotation * other.translation;
        let q = self.rotation.quaternion() * other.rotation.quaternion();
        Self::from_parts(translation, q)
    }

    pub fn inverse(&self) -> Result<Pose, PoseError> {
        let inv = self.rotation.inverse();
        let translation = -(inv * self.translation);
        Self::from_parts(translation, inv.into_inner())
    }

    /// Linear translation and shortest-arc spherical rotation between `a` and
    /// `b`. `alpha = 0` returns `a` and `alpha = 1` returns `b` exactly.
    pub fn interpolate(a: &Pose, b: &Pose, alpha: f64) -> Result<Pose, PoseError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(PoseError::OutOfRange(alpha));
        }
        if alpha == 0.0 {
            return Ok(*a);
        }
        if alpha == 1.0 {
            return Ok(*b);
        }
        let translation = a.translation + (b.translation - a.translation) * alpha;

        // relative rotation a^-1 b, taken on the short arc
        let mut rel = a.rotation.quaternion().conjugate() * b.rotation.quaternion();
        if rel.w < 0.0 {
            rel = -rel;
        }
        let imag = rel.imag();
        let sin_half = imag.norm();
        let step = if sin_half == 0.0 {
            Quaternion::identity()
        } else {
            let half = sin_half.atan2(rel.w) * alpha;
            let axis = imag / sin_half;
            let v = axis * half.sin();
            Quaternion::new(half.cos(), v.x, v.y, v.z)
        };
        Self::from_parts(translation, a.rotation.quaternion() * step)
    }

    /// Homogeneous 4x4 matrix, row-major.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = self.rotation.to_rotation_matrix();
        let m = r.matrix();
        let t = self.translation;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)], t.x],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)], t.y],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)], t.z],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let c = q.quaternion();
    let flip = if c.w != 0.0 {
        c.w < 0.0
    } else {
        [c.i, c.j, c.k]
            .into_iter()
            .find(|v| *v != 0.0)
            .is_some_and(|v| v < 0.0)
    };
    if flip {
        UnitQuaternion::new_unchecked(-c)
    } else {
        q
    }
}

/// JSON form of a pose: `{"trans": [x,y,z], "quat_wxyz": [w,x,y,z]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub trans: [f64; 3],
    pub quat_wxyz: [f64; 4],
}

impl From<&Pose> for PoseRecord {
    fn from(p: &Pose) -> Self {
        Self {
            trans: p.translation(),
            quat_wxyz: p.quat_wxyz(),
        }
    }
}

impl TryFrom<PoseRecord> for Pose {
    type Error = PoseError;

    fn try_from(r: PoseRecord) -> Result<Self, Self::Error> {
        Pose::new(r.trans, r.quat_wxyz)
    }
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let record = PoseRecord::deserialize(d)?;
        Pose::try_from(record).map_err(serde::de::Error::custom)
    }
}

/// One line of `poses.jsonl`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPoseRecord {
    pub t_ns: i64,
    pub trans: [f64; 3],
    pub quat_wxyz: [f64; 4],
}

impl TimedPoseRecord {
    pub fn new(t_ns: i64, pose: &Pose) -> Self {
        Self {
            t_ns,
            trans: pose.translation(),
            quat_wxyz: pose.quat_wxyz(),
        }
    }

    pub fn pose(&self) -> Result<Pose, PoseError> {
        Pose::new(self.trans, self.quat_wxyz)
    }
}

/// Checks that stream timestamps are strictly increasing.
pub fn check_stream(stream: &[(i64, Pose)]) -> Result<(), PoseError> {
    for (k, w) in stream.windows(2).enumerate() {
        if w[1].0 <= w[0].0 {
            return Err(PoseError::UnorderedStream(k + 1));
        }
    }
    Ok(())
}

/// Pose at a single timestamp, interpolated between the bracketing samples.
pub fn pose_at(stream: &[(i64, Pose)], t_ns: i64) -> Result<Pose, PoseError> {
    let (first, last) = match (stream.first(), stream.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return Err(PoseError::EmptyStream),
    };
    if t_ns < first || t_ns > last {
        return Err(PoseError::ExtrapolationRefused {
            target_ns: t_ns,
            first_ns: first,
            last_ns: last,
        });
    }
    match stream.binary_search_by_key(&t_ns, |s| s.0) {
        Ok(k) => Ok(stream[k].1),
        Err(k) => {
            // first < t < last, so 0 < k < len
            let (t0, p0) = &stream[k - 1];
            let (t1, p1) = &stream[k];
            let alpha = (t_ns - t0) as f64 / (t1 - t0) as f64;
            Pose::interpolate(p0, p1, alpha)
        }
    }
}

/// Resamples a pose stream at the given timestamps. Targets outside the
/// stream's time range are refused rather than clamped.
pub fn resample_poses(stream: &[(i64, Pose)], targets: &[i64]) -> Result<Vec<Pose>, PoseError> {
    check_stream(stream)?;
    targets.iter().map(|&t| pose_at(stream, t)).collect()
}
