//! Parametric primitives (cuboid, rhomboid, ellipsoid, cylinder), their
//! voxelization at voxel centers, closed-form signed distances for the
//! shapes that have one, and the seeded dataset generator.

mod dataset;
mod rotation;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volgrid::{BinaryVolume, GridMeta, ScalarVolume};

pub use dataset::{
    generate_dataset, load_manifest, CaseEntry, DatasetManifest, GeneratorConfig, ManifestGrid,
    Split,
};
pub use rotation::Quat;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("invalid shape: {0}")]
    Invalid(String),
    #[error("closed-form signed distance is not available for {0:?}")]
    NoAnalyticSdf(ShapeKind),
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("case {case}: voxelization stayed empty after {attempts} draws")]
    EmptyVoxelization { case: String, attempts: usize },
    #[error(transparent)]
    Volume(#[from] crate::volgrid::VolumeError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Manifest {
        path: std::path::PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Cuboid,
    Rhomboid,
    Ellipsoid,
    Cylinder,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [
        ShapeKind::Cuboid,
        ShapeKind::Rhomboid,
        ShapeKind::Ellipsoid,
        ShapeKind::Cylinder,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeKind::Cuboid => "cuboid",
            ShapeKind::Rhomboid => "rhomboid",
            ShapeKind::Ellipsoid => "ellipsoid",
            ShapeKind::Cylinder => "cylinder",
        }
    }
}

/// Kind-specific size parameters, all in world units.
///
/// A rhomboid is the parallelepiped spanned by the half-edge vectors
/// `a * x`, `b * (cos s1, sin s1, 0)` and `c * (cos s2, 0, sin s2)`; with
/// both shear angles at a right angle it reduces to a cuboid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Cuboid { half_extents: [f64; 3] },
    Rhomboid { edges: [f64; 3], shear: [f64; 2] },
    Ellipsoid { semi_axes: [f64; 3] },
    Cylinder { radius: f64, half_height: f64 },
}

impl Shape {
    pub fn kind(&self) -> ShapeKind {
        match self {
            Shape::Cuboid { .. } => ShapeKind::Cuboid,
            Shape::Rhomboid { .. } => ShapeKind::Rhomboid,
            Shape::Ellipsoid { .. } => ShapeKind::Ellipsoid,
            Shape::Cylinder { .. } => ShapeKind::Cylinder,
        }
    }

    /// Radius of a sphere about the local origin enclosing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Cuboid { half_extents: [a, b, c] } => (a * a + b * b + c * c).sqrt(),
            Shape::Rhomboid { .. } => {
                let [e1, e2, e3] = self.rhomboid_basis().expect("validated");
                let mut r2: f64 = 0.0;
                for su in [-1.0, 1.0] {
                    for sv in [-1.0, 1.0] {
                        for sw in [-1.0, 1.0] {
                            let p: f64 = (0..3)
                                .map(|i| (su * e1[i] + sv * e2[i] + sw * e3[i]).powi(2))
                                .sum();
                            r2 = r2.max(p);
                        }
                    }
                }
                r2.sqrt()
            }
            Shape::Ellipsoid { semi_axes: [a, b, c] } => a.max(b).max(c),
            Shape::Cylinder {
                radius,
                half_height,
            } => (radius * radius + half_height * half_height).sqrt(),
        }
    }

    fn rhomboid_basis(&self) -> Option<[[f64; 3]; 3]> {
        match *self {
            Shape::Rhomboid {
                edges: [a, b, c],
                shear: [s1, s2],
            } => Some([
                [a, 0.0, 0.0],
                [b * s1.cos(), b * s1.sin(), 0.0],
                [c * s2.cos(), 0.0, c * s2.sin()],
            ]),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), ShapeError> {
        let positive = |name: &str, v: &[f64]| {
            if v.iter().all(|x| x.is_finite() && *x > 0.0) {
                Ok(())
            } else {
                Err(ShapeError::Invalid(format!("{name} {v:?} must be positive")))
            }
        };
        match self {
            Shape::Cuboid { half_extents } => positive("half-extents", half_extents),
            Shape::Ellipsoid { semi_axes } => positive("semi-axes", semi_axes),
            Shape::Cylinder {
                radius,
                half_height,
            } => positive("radius/half-height", &[*radius, *half_height]),
            Shape::Rhomboid { edges, shear } => {
                positive("edges", edges)?;
                let right = std::f64::consts::FRAC_PI_2;
                if shear.iter().all(|s| *s > 0.0 && *s <= right) {
                    Ok(())
                } else {
                    Err(ShapeError::Invalid(format!("shear angles {shear:?} outside (0, pi/2]")))
                }
            }
        }
    }
}

/// One placed primitive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub center: [f64; 3],
    pub rotation: Quat,
    pub shape: Shape,
}

impl ShapeSpec {
    pub fn new(shape: Shape, center: [f64; 3], rotation: Quat) -> Result<Self, ShapeError> {
        let spec = Self {
            center,
            rotation,
            shape,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn kind(&self) -> ShapeKind {
        self.shape.kind()
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        if (self.rotation.norm() - 1.0).abs() > 1e-9 {
            return Err(ShapeError::Invalid(format!(
                "rotation {:?} is not a unit quaternion",
                self.rotation.0
            )));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(ShapeError::Invalid(format!("center {:?}", self.center)));
        }
        self.shape.validate()
    }

    /// World point expressed in the shape's local frame.
    pub fn to_local(&self, p: [f64; 3]) -> [f64; 3] {
        self.rotation.inverse_rotate([
            p[0] - self.center[0],
            p[1] - self.center[1],
            p[2] - self.center[2],
        ])
    }

    /// Closed membership test for a world point.
    pub fn inside(&self, p: [f64; 3]) -> bool {
        inside_local(&self.shape, self.to_local(p))
    }
}

fn inside_local(shape: &Shape, [x, y, z]: [f64; 3]) -> bool {
    match *shape {
        Shape::Cuboid { half_extents: [a, b, c] } => x.abs() <= a && y.abs() <= b && z.abs() <= c,
        Shape::Rhomboid { .. } => {
            let [u, v, w] = rhomboid_coords(shape, [x, y, z]);
            u.abs() <= 1.0 && v.abs() <= 1.0 && w.abs() <= 1.0
        }
        Shape::Ellipsoid { semi_axes: [a, b, c] } => {
            (x / a).powi(2) + (y / b).powi(2) + (z / c).powi(2) <= 1.0
        }
        Shape::Cylinder {
            radius,
            half_height,
        } => x * x + y * y <= radius * radius && z.abs() <= half_height,
    }
}

/// Coordinates of `p` in the rhomboid's edge basis. The basis is upper
/// triangular in (x, y, z) so back substitution solves the system.
fn rhomboid_coords(shape: &Shape, p: [f64; 3]) -> [f64; 3] {
    let [e1, e2, e3] = shape.rhomboid_basis().expect("rhomboid");
    let w = p[2] / e3[2];
    let v = p[1] / e2[1];
    let u = (p[0] - v * e2[0] - w * e3[0]) / e1[0];
    [u, v, w]
}

/// Binary volume with voxel `(i, j, k)` set iff its center is inside `spec`.
pub fn voxelize(spec: &ShapeSpec, meta: &GridMeta) -> BinaryVolume {
    let mut out = BinaryVolume::zeros(*meta);
    let r = spec.shape.bounding_radius();
    let dims = meta.dims();
    // Only voxels within the bounding sphere's box can be inside.
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let s = meta.spacing()[a];
        let o = meta.origin()[a];
        let n = dims[a] as f64;
        lo[a] = (((spec.center[a] - r - o) / s).floor() - 1.0).clamp(0.0, n) as usize;
        hi[a] = (((spec.center[a] + r - o) / s).ceil() + 2.0).clamp(0.0, n) as usize;
    }
    for k in lo[2]..hi[2] {
        for j in lo[1]..hi[1] {
            for i in lo[0]..hi[0] {
                if spec.inside(meta.world(i, j, k)) {
                    out.set(i, j, k, true);
                }
            }
        }
    }
    out
}

/// Exact signed distance (negative inside) from a world point to a cuboid
/// or cylinder.
pub fn analytic_sdf_at(spec: &ShapeSpec, p: [f64; 3]) -> Result<f64, ShapeError> {
    let [x, y, z] = spec.to_local(p);
    match spec.shape {
        Shape::Cuboid { half_extents: [a, b, c] } => {
            let q = [x.abs() - a, y.abs() - b, z.abs() - c];
            let outside = q.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
            let inside = q[0].max(q[1]).max(q[2]).min(0.0);
            Ok(outside + inside)
        }
        Shape::Cylinder {
            radius,
            half_height,
        } => {
            let e = [(x * x + y * y).sqrt() - radius, z.abs() - half_height];
            let outside = (e[0].max(0.0).powi(2) + e[1].max(0.0).powi(2)).sqrt();
            let inside = e[0].max(e[1]).min(0.0);
            Ok(outside + inside)
        }
        other => Err(ShapeError::NoAnalyticSdf(other.kind())),
    }
}

/// Distance, measured within the surface, from the surface point nearest to
/// `p` to the closest edge or rim of the face carrying it. Zero when the
/// nearest surface point is itself on an edge, corner or rim.
pub fn face_clearance(spec: &ShapeSpec, p: [f64; 3]) -> Result<f64, ShapeError> {
    let q = spec.to_local(p);
    match spec.shape {
        Shape::Cuboid { half_extents: h } => {
            let over: Vec<usize> = (0..3).filter(|&a| q[a].abs() > h[a]).collect();
            let face = match over.len() {
                0 => (0..3)
                    .max_by(|&x, &y| (q[x].abs() - h[x]).total_cmp(&(q[y].abs() - h[y])))
                    .expect("three axes"),
                1 => over[0],
                _ => return Ok(0.0),
            };
            Ok((0..3).filter(|&b| b != face).map(|b| h[b] - q[b].abs()).fold(f64::INFINITY, f64::min))
        }
        Shape::Cylinder { radius, half_height } => {
            let rho = (q[0] * q[0] + q[1] * q[1]).sqrt();
            let (to_side, to_cap) = (radius - rho, half_height - q[2].abs());
            Ok(match (to_side < 0.0, to_cap < 0.0) {
                (true, true) => 0.0,
                (true, false) => to_cap,
                (false, true) => to_side,
                // Inside: the nearer of side and cap carries the nearest point.
                (false, false) => if to_side < to_cap { to_cap } else { to_side },
            })
        }
        other => Err(ShapeError::NoAnalyticSdf(other.kind())),
    }
}

/// Closed-form signed distance sampled at every voxel center.
pub fn analytic_sdf(spec: &ShapeSpec, meta: &GridMeta) -> Result<ScalarVolume, ShapeError> {
    if !matches!(spec.shape, Shape::Cuboid { .. } | Shape::Cylinder { .. }) {
        return Err(ShapeError::NoAnalyticSdf(spec.kind()));
    }
    let mut values = Vec::with_capacity(meta.len());
    let [nx, ny, nz] = meta.dims();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                values.push(analytic_sdf_at(spec, meta.world(i, j, k))? as f32);
            }
        }
    }
    Ok(ScalarVolume::new(*meta, values)?)
}
