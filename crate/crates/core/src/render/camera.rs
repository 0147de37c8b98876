use nalgebra::{Matrix4, Point3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Projection model of a camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProjectionKind {
    /// Parallel projection; `half_extent` is the half height of the view
    /// volume in model units.
    Orthographic { half_extent: f64 },
    /// Pinhole projection with vertical field of view in degrees.
    Perspective { fov_y_deg: f64 },
}

/// Layout of the default view set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewSetOptions {
    /// Elevation of the ring views above the occlusal plane, degrees.
    pub elevation_deg: f64,
    /// Distance from the origin to each camera.
    pub distance: f64,
    pub projection: ProjectionKind,
}

impl Default for ViewSetOptions {
    fn default() -> Self {
        ViewSetOptions {
            elevation_deg: 30.0,
            distance: 2.0,
            projection: ProjectionKind::Orthographic { half_extent: 0.6 },
        }
    }
}

/// A camera `Π_v`: world → normalized device coordinates, plus the raster size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub view_id: u32,
    /// Combined `projection · view` matrix.
    pub projection: Matrix4<f64>,
    /// World-to-camera rigid transform.
    pub extrinsics: Matrix4<f64>,
    pub kind: ProjectionKind,
    /// `(width, height)` in pixels.
    pub image_size: (u32, u32),
    /// Unit vector from the target towards the camera.
    pub eye_direction: Vector3<f64>,
}

fn look_at(eye: &Point3<f64>, target: &Point3<f64>, up: &Vector3<f64>) -> Matrix4<f64> {
    let f = (target - eye).normalize();
    let s = f.cross(up).normalize();
    let u = s.cross(&f);
    Matrix4::new(
        s.x, s.y, s.z, -s.dot(&eye.coords),
        u.x, u.y, u.z, -u.dot(&eye.coords),
        -f.x, -f.y, -f.z, f.dot(&eye.coords),
        0.0, 0.0, 0.0, 1.0,
    )
}

fn projection_matrix(kind: ProjectionKind, aspect: f64, near: f64, far: f64) -> Matrix4<f64> {
    match kind {
        ProjectionKind::Orthographic { half_extent } => {
            let (h, w) = (half_extent, half_extent * aspect);
            Matrix4::new(
                1.0 / w, 0.0, 0.0, 0.0,
                0.0, 1.0 / h, 0.0, 0.0,
                0.0, 0.0, -2.0 / (far - near), -(far + near) / (far - near),
                0.0, 0.0, 0.0, 1.0,
            )
        }
        ProjectionKind::Perspective { fov_y_deg } => {
            let t = 1.0 / (fov_y_deg.to_radians() / 2.0).tan();
            Matrix4::new(
                t / aspect, 0.0, 0.0, 0.0,
                0.0, t, 0.0, 0.0,
                0.0, 0.0, -(far + near) / (far - near), -2.0 * far * near / (far - near),
                0.0, 0.0, -1.0, 0.0,
            )
        }
    }
}

impl Camera {
    /// Camera at `distance · direction` looking at the origin.
    pub fn looking_at_origin(
        view_id: u32,
        direction: Vector3<f64>,
        up: Vector3<f64>,
        distance: f64,
        kind: ProjectionKind,
        image_size: (u32, u32),
    ) -> Result<Camera> {
        if image_size.0 == 0 || image_size.1 == 0 {
            return Err(Error::Argument("image size must be positive".into()));
        }
        let dir = direction.normalize();
        let eye = Point3::from(dir * distance);
        let extrinsics = look_at(&eye, &Point3::origin(), &up);
        let aspect = image_size.0 as f64 / image_size.1 as f64;
        // depth range covers a ball of radius 1.5 around the origin
        let near = (distance - 1.5).max(1e-3);
        let projection = projection_matrix(kind, aspect, near, distance + 1.5) * extrinsics;
        Ok(Camera {
            view_id,
            projection,
            extrinsics,
            kind,
            image_size,
            eye_direction: dir,
        })
    }

    pub fn width(&self) -> usize {
        self.image_size.0 as usize
    }

    pub fn height(&self) -> usize {
        self.image_size.1 as usize
    }

    /// World point → `(x, y, depth)` in pixel units; pixel `(i, j)` covers
    /// `[i, i+1) × [j, j+1)` with rows counted from the top. Smaller depth is nearer.
    pub fn project(&self, p: &Point3<f64>) -> [f64; 3] {
        let clip = self.projection * p.to_homogeneous();
        let ndc = clip.xyz() / clip.w;
        [
            (ndc.x + 1.0) * 0.5 * self.image_size.0 as f64,
            (1.0 - ndc.y) * 0.5 * self.image_size.1 as f64,
            ndc.z,
        ]
    }

    /// Inverse of [`Camera::project`].
    pub fn unproject(&self, screen: [f64; 3]) -> Result<Point3<f64>> {
        let inv = self
            .projection
            .try_inverse()
            .ok_or_else(|| Error::State("camera projection is singular".into()))?;
        let ndc = Vector4::new(
            screen[0] / self.image_size.0 as f64 * 2.0 - 1.0,
            1.0 - screen[1] / self.image_size.1 as f64 * 2.0,
            screen[2],
            1.0,
        );
        let h = inv * ndc;
        Ok(Point3::from(h.xyz() / h.w))
    }
}

/// One top-down occlusal view followed by `count - 1` views evenly spaced in
/// azimuth on a ring at the configured elevation, all aimed at the origin.
pub fn make_view_set(count: usize, image_size: (u32, u32)) -> Result<Vec<Camera>> {
    make_view_set_with(count, image_size, &ViewSetOptions::default())
}

pub fn make_view_set_with(
    count: usize,
    image_size: (u32, u32),
    options: &ViewSetOptions,
) -> Result<Vec<Camera>> {
    if count == 0 {
        return Err(Error::Argument("view count must be at least 1".into()));
    }
    let mut cams = Vec::with_capacity(count);
    cams.push(Camera::looking_at_origin(
        0,
        Vector3::z(),
        Vector3::y(),
        options.distance,
        options.projection,
        image_size,
    )?);
    let ring = count - 1;
    let elev = options.elevation_deg.to_radians();
    for i in 0..ring {
        let az = std::f64::consts::TAU * i as f64 / ring as f64;
        let dir = Vector3::new(elev.cos() * az.cos(), elev.cos() * az.sin(), elev.sin());
        cams.push(Camera::looking_at_origin(
            (i + 1) as u32,
            dir,
            Vector3::z(),
            options.distance,
            options.projection,
            image_size,
        )?);
    }
    Ok(cams)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn view_set_shapes() {
        assert!(matches!(make_view_set(0, (8, 8)), Err(Error::Argument(_))));
        assert!(matches!(make_view_set(3, (0, 8)), Err(Error::Argument(_))));
        let one = make_view_set(1, (64, 64)).unwrap();
        assert_eq!(one.len(), 1);
        assert!((one[0].eye_direction - Vector3::z()).norm() < 1e-15);
        let ten = make_view_set(10, (512, 512)).unwrap();
        assert_eq!(ten.len(), 10);
        for (i, c) in ten.iter().enumerate() {
            assert_eq!(c.view_id as usize, i);
            assert_eq!(c.image_size, (512, 512));
        }
        // ring views are 40 degrees apart at 30 degrees elevation
        let a = ten[1].eye_direction;
        let b = ten[2].eye_direction;
        assert!((a.z - 0.5).abs() < 1e-12);
        let az = (b.y.atan2(b.x) - a.y.atan2(a.x)).to_degrees();
        assert!((az - 40.0).abs() < 1e-9);
        assert_eq!(ten, make_view_set(10, (512, 512)).unwrap());
    }

    #[test]
    fn origin_projects_to_image_center() {
        for cam in make_view_set(5, (100, 60)).unwrap() {
            let [x, y, _] = cam.project(&Point3::origin());
            assert!((x - 50.0).abs() < 1e-9 && (y - 30.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unproject_inverts_project() {
        let opts = ViewSetOptions {
            projection: ProjectionKind::Perspective { fov_y_deg: 40.0 },
            ..Default::default()
        };
        for cams in [make_view_set(6, (64, 48)).unwrap(), make_view_set_with(6, (64, 48), &opts).unwrap()] {
            for cam in cams {
                let p = Point3::new(0.1, -0.2, 0.3);
                let back = cam.unproject(cam.project(&p)).unwrap();
                assert!((back - p).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn top_view_depth_decreases_towards_camera() {
        let cam = &make_view_set(1, (8, 8)).unwrap()[0];
        let low = cam.project(&Point3::new(0.0, 0.0, -0.2))[2];
        let high = cam.project(&Point3::new(0.0, 0.0, 0.2))[2];
        assert!(high < low);
        // image up is +Y for the occlusal view
        assert!(cam.project(&Point3::new(0.0, 0.3, 0.0))[1] < 4.0);
    }
}
