//! Procedural household objects sampled densely over their surfaces, with
//! ground-truth part labels.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{io::load_cloud, Point3, PointCloud, Vector3};

/// Default sampling density in points per square meter (about five samples
/// per 5 mm voxel face).
pub const DEFAULT_DENSITY: f64 = 200_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MugParams {
    pub radius: f64,
    pub height: f64,
    pub wall: f64,
    /// Handle torus radius (center of the tube).
    pub handle_major: f64,
    /// Handle tube radius.
    pub handle_minor: f64,
    /// Height of the handle torus center above the base.
    pub handle_height: f64,
}

impl Default for MugParams {
    fn default() -> Self {
        Self {
            radius: 0.04,
            height: 0.10,
            wall: 0.008,
            handle_major: 0.03,
            handle_minor: 0.006,
            handle_height: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BottleParams {
    pub radius: f64,
    pub body_height: f64,
    pub shoulder_height: f64,
    pub neck_radius: f64,
    pub neck_height: f64,
    pub cap_radius: f64,
    pub cap_height: f64,
}

impl Default for BottleParams {
    fn default() -> Self {
        Self {
            radius: 0.035,
            body_height: 0.14,
            shoulder_height: 0.035,
            neck_radius: 0.013,
            neck_height: 0.02,
            cap_radius: 0.016,
            cap_height: 0.022,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScissorParams {
    pub blade_length: f64,
    pub blade_width: f64,
    pub thickness: f64,
    pub ring_major: f64,
    pub ring_minor: f64,
    /// Gap between the two finger rings.
    pub ring_gap: f64,
}

impl Default for ScissorParams {
    fn default() -> Self {
        Self {
            blade_length: 0.09,
            blade_width: 0.016,
            thickness: 0.004,
            ring_major: 0.014,
            ring_minor: 0.004,
            ring_gap: 0.004,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlabParams {
    pub length: f64,
    pub width: f64,
    pub thickness: f64,
}

impl Default for SlabParams {
    fn default() -> Self {
        Self {
            length: 0.12,
            width: 0.06,
            thickness: 0.01,
        }
    }
}

/// Object generator and its shape parameters (meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum ShapeSpec {
    MugLike(MugParams),
    BottleLike(BottleParams),
    ScissorLike(ScissorParams),
    Slab(SlabParams),
    /// Pre-labeled cloud loaded from a PLY or JSON file.
    CustomFile {
        path: PathBuf,
    },
}

impl ShapeSpec {
    pub fn mug() -> Self {
        ShapeSpec::MugLike(MugParams::default())
    }

    pub fn bottle() -> Self {
        ShapeSpec::BottleLike(BottleParams::default())
    }

    pub fn scissor() -> Self {
        ShapeSpec::ScissorLike(ScissorParams::default())
    }

    pub fn slab() -> Self {
        ShapeSpec::Slab(SlabParams::default())
    }

    /// Ontology class the generator stands in for.
    pub fn object_class(&self) -> Option<&'static str> {
        match self {
            ShapeSpec::MugLike(_) => Some("mug"),
            ShapeSpec::BottleLike(_) => Some("bottle"),
            ShapeSpec::ScissorLike(_) => Some("scissor"),
            ShapeSpec::Slab(_) | ShapeSpec::CustomFile { .. } => None,
        }
    }

    /// Part the harness targets by default for this generator.
    pub fn default_part(&self) -> Option<&'static str> {
        match self {
            ShapeSpec::MugLike(_) => Some("handle"),
            ShapeSpec::BottleLike(_) => Some("cap"),
            ShapeSpec::ScissorLike(_) => Some("handle"),
            ShapeSpec::Slab(_) => Some("body"),
            ShapeSpec::CustomFile { .. } => None,
        }
    }

    fn values(&self) -> Vec<(&'static str, f64)> {
        match self {
            ShapeSpec::MugLike(p) => vec![
                ("radius", p.radius),
                ("height", p.height),
                ("wall", p.wall),
                ("handle_major", p.handle_major),
                ("handle_minor", p.handle_minor),
                ("handle_height", p.handle_height),
            ],
            ShapeSpec::BottleLike(p) => vec![
                ("radius", p.radius),
                ("body_height", p.body_height),
                ("shoulder_height", p.shoulder_height),
                ("neck_radius", p.neck_radius),
                ("neck_height", p.neck_height),
                ("cap_radius", p.cap_radius),
                ("cap_height", p.cap_height),
            ],
            ShapeSpec::ScissorLike(p) => vec![
                ("blade_length", p.blade_length),
                ("blade_width", p.blade_width),
                ("thickness", p.thickness),
                ("ring_major", p.ring_major),
                ("ring_minor", p.ring_minor),
                ("ring_gap", p.ring_gap),
            ],
            ShapeSpec::Slab(p) => vec![("length", p.length), ("width", p.width), ("thickness", p.thickness)],
            ShapeSpec::CustomFile { .. } => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.values() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Spec(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::Spec(msg.to_string())) };
        match self {
            ShapeSpec::MugLike(p) => {
                check(p.wall < p.radius, "mug wall must be thinner than the radius")?;
                check(p.wall < p.height, "mug wall must be thinner than the height")?;
                check(
                    p.handle_minor < p.handle_major,
                    "handle tube radius must be below the torus radius",
                )?;
                let reach = p.handle_major + p.handle_minor;
                check(
                    p.handle_height - reach >= 0.0 && p.handle_height + reach <= p.height,
                    "handle must fit within the mug height",
                )?;
                check(reach > p.radius * 0.25, "handle too small to protrude from the body")
            }
            ShapeSpec::BottleLike(p) => {
                check(p.neck_radius < p.radius, "neck must be narrower than the body")?;
                check(p.cap_radius > p.neck_radius, "cap must be wider than the neck")?;
                check(p.cap_radius <= p.radius, "cap must not be wider than the body")
            }
            ShapeSpec::ScissorLike(p) => {
                check(
                    p.ring_minor < p.ring_major,
                    "ring tube radius must be below the ring radius",
                )?;
                check(p.thickness < p.blade_width, "blade must be wider than thick")
            }
            ShapeSpec::Slab(_) => Ok(()),
            ShapeSpec::CustomFile { path } => check(!path.as_os_str().is_empty(), "custom-file path is empty"),
        }
    }

    /// Copy with every dimension scaled independently by a factor drawn
    /// uniformly from `[1 - fraction, 1 + fraction]`; redraws until the
    /// result is consistent.
    pub fn perturbed(&self, fraction: f64, rng: &mut impl Rng) -> Result<ShapeSpec> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Spec(format!(
                "perturbation fraction must be in [0, 1), got {fraction}"
            )));
        }
        for _ in 0..1000 {
            let mut f = || 1.0 + rng.random_range(-fraction..=fraction);
            let out = match self {
                ShapeSpec::MugLike(p) => ShapeSpec::MugLike(MugParams {
                    radius: p.radius * f(),
                    height: p.height * f(),
                    wall: p.wall * f(),
                    handle_major: p.handle_major * f(),
                    handle_minor: p.handle_minor * f(),
                    handle_height: p.handle_height * f(),
                }),
                ShapeSpec::BottleLike(p) => ShapeSpec::BottleLike(BottleParams {
                    radius: p.radius * f(),
                    body_height: p.body_height * f(),
                    shoulder_height: p.shoulder_height * f(),
                    neck_radius: p.neck_radius * f(),
                    neck_height: p.neck_height * f(),
                    cap_radius: p.cap_radius * f(),
                    cap_height: p.cap_height * f(),
                }),
                ShapeSpec::ScissorLike(p) => ShapeSpec::ScissorLike(ScissorParams {
                    blade_length: p.blade_length * f(),
                    blade_width: p.blade_width * f(),
                    thickness: p.thickness * f(),
                    ring_major: p.ring_major * f(),
                    ring_minor: p.ring_minor * f(),
                    ring_gap: p.ring_gap * f(),
                }),
                ShapeSpec::Slab(p) => ShapeSpec::Slab(SlabParams {
                    length: p.length * f(),
                    width: p.width * f(),
                    thickness: p.thickness * f(),
                }),
                ShapeSpec::CustomFile { .. } => return Ok(self.clone()),
            };
            if out.validate().is_ok() {
                return Ok(out);
            }
        }
        Err(Error::Spec("could not draw consistent perturbed parameters".into()))
    }

    /// Total analytic surface area, where closed-form.
    pub fn surface_area(&self) -> Option<f64> {
        match self {
            ShapeSpec::BottleLike(p) => {
                let (body, neck, cap) = bottle_surfaces(p);
                Some(body.iter().chain(&neck).chain(&cap).map(Surface::area).sum())
            }
            ShapeSpec::ScissorLike(p) => Some(scissor_surfaces(p).iter().map(|(s, _)| s.area()).sum()),
            ShapeSpec::Slab(p) => Some(
                box_faces(p.length, p.width, p.thickness, Point3::origin())
                    .iter()
                    .map(Surface::area)
                    .sum(),
            ),
            ShapeSpec::MugLike(_) | ShapeSpec::CustomFile { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Surface {
    /// Lateral surface of a z-aligned cone frustum (a cylinder when r0 = r1).
    Frustum { r0: f64, r1: f64, z0: f64, z1: f64 },
    /// Horizontal annulus at height z (a disk when inner = 0).
    Annulus { inner: f64, outer: f64, z: f64 },
    /// Planar rectangle: origin corner plus two edge vectors.
    Rect { origin: Point3, u: Vector3, v: Vector3 },
    /// Torus with tube around the circle of radius `major` in the plane
    /// spanned by `e1`, `e2`.
    Torus {
        center: Point3,
        e1: Vector3,
        e2: Vector3,
        major: f64,
        minor: f64,
    },
}

impl Surface {
    fn area(&self) -> f64 {
        match *self {
            Surface::Frustum { r0, r1, z0, z1 } => PI * (r0 + r1) * ((r1 - r0).powi(2) + (z1 - z0).powi(2)).sqrt(),
            Surface::Annulus { inner, outer, .. } => PI * (outer * outer - inner * inner),
            Surface::Rect { u, v, .. } => u.cross(&v).norm(),
            Surface::Torus { major, minor, .. } => 4.0 * PI * PI * major * minor,
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> Point3 {
        match *self {
            Surface::Frustum { r0, r1, z0, z1 } => {
                let rmax = r0.max(r1);
                loop {
                    let t: f64 = rng.random();
                    let r = r0 + (r1 - r0) * t;
                    if rng.random::<f64>() * rmax <= r {
                        let a = rng.random_range(0.0..2.0 * PI);
                        return Point3::new(r * a.cos(), r * a.sin(), z0 + (z1 - z0) * t);
                    }
                }
            }
            Surface::Annulus { inner, outer, z } => {
                let r = rng.random_range(inner * inner..=outer * outer).sqrt();
                let a = rng.random_range(0.0..2.0 * PI);
                Point3::new(r * a.cos(), r * a.sin(), z)
            }
            Surface::Rect { origin, u, v } => origin + u * rng.random::<f64>() + v * rng.random::<f64>(),
            Surface::Torus {
                center,
                e1,
                e2,
                major,
                minor,
            } => {
                let e3 = e1.cross(&e2);
                loop {
                    let w = rng.random_range(0.0..2.0 * PI);
                    if rng.random::<f64>() * (major + minor) <= major + minor * w.cos() {
                        let u = rng.random_range(0.0..2.0 * PI);
                        let radial = e1 * u.cos() + e2 * u.sin();
                        return center + radial * (major + minor * w.cos()) + e3 * (minor * w.sin());
                    }
                }
            }
        }
    }
}

fn box_faces(lx: f64, ly: f64, lz: f64, min: Point3) -> Vec<Surface> {
    let (x, y, z) = (Vector3::x() * lx, Vector3::y() * ly, Vector3::z() * lz);
    let max = min + x + y + z;
    vec![
        Surface::Rect {
            origin: min,
            u: x,
            v: y,
        },
        Surface::Rect {
            origin: min,
            u: x,
            v: z,
        },
        Surface::Rect {
            origin: min,
            u: y,
            v: z,
        },
        Surface::Rect {
            origin: max,
            u: -x,
            v: -y,
        },
        Surface::Rect {
            origin: max,
            u: -x,
            v: -z,
        },
        Surface::Rect {
            origin: max,
            u: -y,
            v: -z,
        },
    ]
}

fn bottle_surfaces(p: &BottleParams) -> (Vec<Surface>, Vec<Surface>, Vec<Surface>) {
    let z_shoulder = p.body_height;
    let z_neck = z_shoulder + p.shoulder_height;
    let z_cap = z_neck + p.neck_height;
    let z_top = z_cap + p.cap_height;
    let body = vec![
        Surface::Annulus {
            inner: 0.0,
            outer: p.radius,
            z: 0.0,
        },
        Surface::Frustum {
            r0: p.radius,
            r1: p.radius,
            z0: 0.0,
            z1: z_shoulder,
        },
        Surface::Frustum {
            r0: p.radius,
            r1: p.neck_radius,
            z0: z_shoulder,
            z1: z_neck,
        },
    ];
    let neck = vec![Surface::Frustum {
        r0: p.neck_radius,
        r1: p.neck_radius,
        z0: z_neck,
        z1: z_cap,
    }];
    let cap = vec![
        Surface::Annulus {
            inner: p.neck_radius,
            outer: p.cap_radius,
            z: z_cap,
        },
        Surface::Frustum {
            r0: p.cap_radius,
            r1: p.cap_radius,
            z0: z_cap,
            z1: z_top,
        },
        Surface::Annulus {
            inner: 0.0,
            outer: p.cap_radius,
            z: z_top,
        },
    ];
    (body, neck, cap)
}

fn scissor_surfaces(p: &ScissorParams) -> Vec<(Surface, &'static str)> {
    let mut out: Vec<(Surface, &'static str)> = box_faces(
        p.blade_length,
        p.blade_width,
        p.thickness,
        Point3::new(0.0, -p.blade_width / 2.0, -p.thickness / 2.0),
    )
    .into_iter()
    .map(|s| (s, "blade"))
    .collect();
    let reach = p.ring_major + p.ring_minor;
    for side in [-1.0, 1.0] {
        out.push((
            Surface::Torus {
                center: Point3::new(-reach, side * (reach + p.ring_gap / 2.0), 0.0),
                e1: Vector3::x(),
                e2: Vector3::y(),
                major: p.ring_major,
                minor: p.ring_minor,
            },
            "handle",
        ));
    }
    out
}

struct Builder<'a, R> {
    rng: &'a mut R,
    density: f64,
    points: Vec<Point3>,
    labels: Vec<String>,
}

impl<R: Rng> Builder<'_, R> {
    fn add(&mut self, s: &Surface, label: &str, keep: impl Fn(&Point3) -> bool) {
        let n = (s.area() * self.density).round() as usize;
        for _ in 0..n {
            let p = s.sample(self.rng);
            if keep(&p) {
                self.points.push(p);
                self.labels.push(label.to_string());
            }
        }
    }
}

/// Densely sampled, fully labeled surface cloud of the shape in its own frame
/// (base on the `z = 0` plane for upright objects).
pub fn generate_object(spec: &ShapeSpec, density: f64, rng: &mut impl Rng) -> Result<PointCloud> {
    spec.validate()?;
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::Spec(format!("sampling density must be positive, got {density}")));
    }
    let mut b = Builder {
        rng,
        density,
        points: Vec::new(),
        labels: Vec::new(),
    };
    let all = |_: &Point3| true;
    match spec {
        ShapeSpec::MugLike(p) => {
            let inner = p.radius - p.wall;
            let outside = [
                Surface::Frustum {
                    r0: p.radius,
                    r1: p.radius,
                    z0: 0.0,
                    z1: p.height,
                },
                Surface::Annulus {
                    inner: 0.0,
                    outer: p.radius,
                    z: 0.0,
                },
                Surface::Annulus {
                    inner,
                    outer: p.radius,
                    z: p.height,
                },
            ];
            let inside = [
                Surface::Frustum {
                    r0: inner,
                    r1: inner,
                    z0: p.wall,
                    z1: p.height,
                },
                Surface::Annulus {
                    inner: 0.0,
                    outer: inner,
                    z: p.wall,
                },
            ];
            for s in &outside {
                b.add(s, "body.outside", all);
            }
            for s in &inside {
                b.add(s, "body.inside", all);
            }
            let handle = Surface::Torus {
                center: Point3::new(p.radius, 0.0, p.handle_height),
                e1: Vector3::x(),
                e2: Vector3::z(),
                major: p.handle_major,
                minor: p.handle_minor,
            };
            let r2 = p.radius * p.radius;
            b.add(&handle, "handle", |q| q.x * q.x + q.y * q.y > r2);
        }
        ShapeSpec::BottleLike(p) => {
            let (body, neck, cap) = bottle_surfaces(p);
            for s in body.iter().chain(&neck) {
                b.add(s, "body", all);
            }
            for s in &cap {
                b.add(s, "cap", all);
            }
        }
        ShapeSpec::ScissorLike(p) => {
            for (s, label) in scissor_surfaces(p) {
                b.add(&s, label, all);
            }
        }
        ShapeSpec::Slab(p) => {
            let min = Point3::new(-p.length / 2.0, -p.width / 2.0, 0.0);
            for s in box_faces(p.length, p.width, p.thickness, min) {
                b.add(&s, "body", all);
            }
        }
        ShapeSpec::CustomFile { path } => {
            let cloud = load_cloud(path)?;
            if cloud.labels().is_none() {
                return Err(Error::Spec(format!("{} carries no part labels", path.display())));
            }
            return Ok(cloud);
        }
    }
    PointCloud::with_labels(b.points, b.labels)
}
