//! Synthetic rover camera.
//!
//! Raycasts a [`World`](crate::world::World) into per-pixel semantic class
//! images (ground / rock / goal / space) through a perspective frustum, and
//! optionally into a Lambert-shaded RGB "raw mode" image. Rocks render as
//! spheres resting on the ground plane and the goal as an upright beacon
//! cylinder; both renders share one raycast so their hit masks agree
//! pixel-for-pixel.

use crate::world::World;

/// Goal beacon dimensions, meters.
pub const GOAL_BEACON_RADIUS: f64 = 0.3;
pub const GOAL_BEACON_HEIGHT: f64 = 1.0;

/// Perspective camera parameters. The camera sits `mount_height` above the
/// rover position, yawed to the rover heading; positive `pitch` tilts the
/// view down toward the ground.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view, degrees. The vertical field follows from
    /// the aspect ratio.
    pub horizontal_fov: f64,
    /// Hits closer than this ray distance are ignored, meters.
    pub near_clip: f64,
    /// Hits beyond this ray distance are ignored, meters.
    pub far_clip: f64,
    pub mount_height: f64,
    pub pitch: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 192,
            height: 108,
            horizontal_fov: 69.4,
            near_clip: 0.01,
            far_clip: 20.0,
            mount_height: 0.25,
            pitch: 0.0,
        }
    }
}

impl CameraConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.width < 4 || self.height < 4 {
            return Err(format!("camera resolution {}x{} below 4x4 minimum", self.width, self.height));
        }
        if !(self.near_clip > 0.0 && self.far_clip > self.near_clip) {
            return Err(format!(
                "clip planes must satisfy 0 < near < far, got {} / {}",
                self.near_clip, self.far_clip
            ));
        }
        if !(self.horizontal_fov > 0.0 && self.horizontal_fov < 180.0) {
            return Err(format!("horizontal_fov {} out of (0, 180)", self.horizontal_fov));
        }
        Ok(())
    }
}

/// The four semantic classes every pixel falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SemanticClass {
    Ground,
    Rock,
    Goal,
    Space,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 4] = [
        SemanticClass::Ground,
        SemanticClass::Rock,
        SemanticClass::Goal,
        SemanticClass::Space,
    ];

    /// Fixed RGB palette; a bijection onto the classes.
    pub fn rgb(self) -> [u8; 3] {
        match self {
            SemanticClass::Ground => [64, 64, 64],
            SemanticClass::Rock => [255, 0, 0],
            SemanticClass::Goal => [0, 0, 255],
            SemanticClass::Space => [0, 0, 0],
        }
    }
}

/// Row-major grid of semantic classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassImage {
    pub width: usize,
    pub height: usize,
    classes: Vec<SemanticClass>,
}

impl ClassImage {
    pub fn new(width: usize, height: usize, fill: SemanticClass) -> Self {
        Self {
            width,
            height,
            classes: vec![fill; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> SemanticClass {
        self.classes[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, class: SemanticClass) {
        self.classes[y * self.width + x] = class;
    }

    pub fn pixels(&self) -> &[SemanticClass] {
        &self.classes
    }

    /// Pixel count per class, in `SemanticClass::ALL` order.
    pub fn histogram(&self) -> [usize; 4] {
        let mut counts = [0usize; 4];
        for &class in &self.classes {
            let idx = SemanticClass::ALL.iter().position(|&c| c == class).unwrap();
            counts[idx] += 1;
        }
        counts
    }
}

/// Interleaved 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), width * height * 3, "rgb buffer size mismatch");
        Self { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Vec3 {
    x: f64,
    y: f64,
    z: f64,
}

impl Vec3 {
    const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    fn normalized(self) -> Vec3 {
        self.scale(1.0 / self.norm())
    }
}

/// Nearest surface hit along one primary ray.
#[derive(Clone, Copy, Debug)]
struct Hit {
    t: f64,
    class: SemanticClass,
    normal: Vec3,
}

struct RayCaster {
    origin: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    half_w: f64,
    half_h: f64,
    near: f64,
    far: f64,
    spheres: Vec<(Vec3, f64)>,
    goal: Vec3,
}

impl RayCaster {
    fn new(world: &World, cam: &CameraConfig) -> Self {
        let heading = world.rover.heading;
        let pitch = cam.pitch;
        let origin = Vec3::new(world.rover.x, world.rover.y, cam.mount_height);
        let forward = Vec3::new(
            heading.cos() * pitch.cos(),
            heading.sin() * pitch.cos(),
            -pitch.sin(),
        );
        let right = Vec3::new(heading.sin(), -heading.cos(), 0.0);
        let up = right.cross(forward);
        let half_w = (cam.horizontal_fov.to_radians() / 2.0).tan();
        let half_h = half_w * cam.height as f64 / cam.width as f64;
        let spheres = world
            .obstacles
            .iter()
            .map(|ob| (Vec3::new(ob.center.x, ob.center.y, ob.radius), ob.radius))
            .collect();
        Self {
            origin,
            forward,
            right,
            up,
            half_w,
            half_h,
            near: cam.near_clip,
            far: cam.far_clip,
            spheres,
            goal: Vec3::new(world.goal.x, world.goal.y, 0.0),
        }
    }

    /// Primary ray direction through the center of pixel (px, py).
    fn ray_dir(&self, px: usize, py: usize, width: usize, height: usize) -> Vec3 {
        let u = ((px as f64 + 0.5) / width as f64 * 2.0 - 1.0) * self.half_w;
        let v = (1.0 - (py as f64 + 0.5) / height as f64 * 2.0) * self.half_h;
        self.forward.add(self.right.scale(u)).add(self.up.scale(v)).normalized()
    }

    fn consider(&self, best: &mut Option<Hit>, t: f64, class: SemanticClass, normal: Vec3) {
        if t < self.near || t > self.far {
            return;
        }
        if best.map_or(true, |b| t < b.t) {
            *best = Some(Hit { t, class, normal });
        }
    }

    /// Nearest intersection within the clip range among rocks, the goal
    /// beacon, and the ground plane. `None` means open space.
    fn cast(&self, dir: Vec3) -> Option<Hit> {
        let mut best: Option<Hit> = None;

        // Ground plane z = 0.
        if dir.z < 0.0 {
            let t = -self.origin.z / dir.z;
            self.consider(&mut best, t, SemanticClass::Ground, Vec3::new(0.0, 0.0, 1.0));
        }

        // Rock spheres resting on the plane.
        for &(center, radius) in &self.spheres {
            let oc = self.origin.sub(center);
            let b = oc.dot(dir);
            let c = oc.dot(oc) - radius * radius;
            let disc = b * b - c;
            if disc < 0.0 {
                continue;
            }
            let sq = disc.sqrt();
            for t in [-b - sq, -b + sq] {
                if t >= self.near {
                    let p = self.origin.add(dir.scale(t));
                    self.consider(&mut best, t, SemanticClass::Rock, p.sub(center).scale(1.0 / radius));
                    break;
                }
            }
        }

        // Goal beacon: vertical capped cylinder.
        self.cast_beacon(dir, &mut best);
        best
    }

    fn cast_beacon(&self, dir: Vec3, best: &mut Option<Hit>) {
        let r = GOAL_BEACON_RADIUS;
        let h = GOAL_BEACON_HEIGHT;
        let ox = self.origin.x - self.goal.x;
        let oy = self.origin.y - self.goal.y;

        // Lateral surface.
        let a = dir.x * dir.x + dir.y * dir.y;
        if a > 1e-12 {
            let b = ox * dir.x + oy * dir.y;
            let c = ox * ox + oy * oy - r * r;
            let disc = b * b - a * c;
            if disc >= 0.0 {
                let sq = disc.sqrt();
                for t in [(-b - sq) / a, (-b + sq) / a] {
                    if t >= self.near {
                        let z = self.origin.z + t * dir.z;
                        if (0.0..=h).contains(&z) {
                            let p = self.origin.add(dir.scale(t));
                            let normal = Vec3::new(p.x - self.goal.x, p.y - self.goal.y, 0.0).scale(1.0 / r);
                            self.consider(best, t, SemanticClass::Goal, normal);
                            break;
                        }
                    }
                }
            }
        }

        // End caps at z = 0 and z = h.
        if dir.z.abs() > 1e-12 {
            for (plane_z, nz) in [(0.0, -1.0), (h, 1.0)] {
                let t = (plane_z - self.origin.z) / dir.z;
                if t >= self.near {
                    let px = self.origin.x + t * dir.x;
                    let py = self.origin.y + t * dir.y;
                    if (px - self.goal.x).powi(2) + (py - self.goal.y).powi(2) <= r * r {
                        self.consider(best, t, SemanticClass::Goal, Vec3::new(0.0, 0.0, nz));
                    }
                }
            }
        }
    }
}

/// Render the world into a per-pixel class image.
pub fn render_segmented(world: &World, cam: &CameraConfig) -> ClassImage {
    let caster = RayCaster::new(world, cam);
    let mut image = ClassImage::new(cam.width, cam.height, SemanticClass::Space);
    for py in 0..cam.height {
        for px in 0..cam.width {
            let dir = caster.ray_dir(px, py, cam.width, cam.height);
            if let Some(hit) = caster.cast(dir) {
                image.set(px, py, hit.class);
            }
        }
    }
    image
}

/// Encode a class image through the fixed palette.
pub fn render_rgb(image: &ClassImage) -> RgbImage {
    let mut rgb = RgbImage::new(image.width, image.height);
    for y in 0..image.height {
        for x in 0..image.width {
            rgb.set(x, y, image.get(x, y).rgb());
        }
    }
    rgb
}

// Shading constants for the raw-mode render: per-class albedo, one
// directional light, a small ambient floor, and distance fog toward black.
const LIGHT_DIR: Vec3 = Vec3::new(-0.3, 0.25, -0.9);
const AMBIENT: f64 = 0.3;
const FOG_FALLOFF: f64 = 0.012;

fn albedo(class: SemanticClass) -> [f64; 3] {
    match class {
        SemanticClass::Ground => [0.52, 0.47, 0.40],
        SemanticClass::Rock => [0.48, 0.30, 0.22],
        SemanticClass::Goal => [0.15, 0.25, 0.95],
        SemanticClass::Space => [0.0, 0.0, 0.0],
    }
}

/// Render the world as a shaded RGB image — the "raw mode" observation.
///
/// Uses the same raycast as [`render_segmented`], so a pixel is non-black
/// sky exactly when the segmented render is non-`Space`.
pub fn render_shaded(world: &World, cam: &CameraConfig) -> RgbImage {
    let caster = RayCaster::new(world, cam);
    let light = LIGHT_DIR.normalized().scale(-1.0);
    let mut image = RgbImage::new(cam.width, cam.height);
    for py in 0..cam.height {
        for px in 0..cam.width {
            let dir = caster.ray_dir(px, py, cam.width, cam.height);
            let rgb = match caster.cast(dir) {
                Some(hit) => {
                    let lambert = hit.normal.dot(light).max(0.0);
                    let shade = AMBIENT + (1.0 - AMBIENT) * lambert;
                    let fog = 1.0 / (1.0 + FOG_FALLOFF * hit.t * hit.t);
                    let a = albedo(hit.class);
                    [
                        to_byte(a[0] * shade * fog),
                        to_byte(a[1] * shade * fog),
                        to_byte(a[2] * shade * fog),
                    ]
                }
                None => sky_color(py, cam.height),
            };
            image.set(px, py, rgb);
        }
    }
    image
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Dark sky gradient, brightening slightly toward the horizon.
fn sky_color(py: usize, height: usize) -> [u8; 3] {
    let t = (py as f64 + 0.5) / height as f64;
    let lerp = |a: f64, b: f64| a + (b - a) * t;
    [to_byte(lerp(0.01, 0.09)), to_byte(lerp(0.01, 0.09)), to_byte(lerp(0.03, 0.13))]
}
