//! Procedural scenes with exact ground-truth depth.
//!
//! A pinhole camera at the origin looks down `+z` with image rows growing
//! along `+y` (downwards). Depth is the `z` coordinate of the first surface
//! hit, in `[1, 10]`. Surfaces: a far wall `z = wall_depth`, an optional
//! ground plane `y = height - slope · z`, spheres and axis-aligned boxes.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::error::{invalid, Result};
use crate::loss::PairQuery;
use crate::sampling::{label_pairs, Sampler, SamplerConfig};
use crate::tensor::Tensor;

pub const MIN_DEPTH: f64 = 1.0;
pub const MAX_DEPTH: f64 = 10.0;
const AMBIENT: f64 = 0.25;

type Vec3 = [f64; 3];

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalized(a: Vec3) -> Vec3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ground {
    /// Distance of the plane below the camera at `z = 0`.
    pub height: f64,
    /// Rise of the plane per unit depth.
    pub slope: f64,
    pub albedo: Vec3,
    /// Checker period in world units.
    pub checker: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
    pub albedo: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    pub min: Vec3,
    pub max: Vec3,
    pub albedo: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Primitive {
    Sphere(Sphere),
    Cuboid(Cuboid),
}

impl Primitive {
    /// Smallest `t > 0` with `t · dir` on the surface; `dir.z = 1`, so `t` is depth.
    fn hit(&self, dir: Vec3) -> Option<f64> {
        match self {
            Primitive::Sphere(s) => {
                let a = dot(dir, dir);
                let b = dot(dir, s.center);
                let c = dot(s.center, s.center) - s.radius * s.radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let t = (b - disc.sqrt()) / a;
                (t > 0.0).then_some(t)
            }
            Primitive::Cuboid(b) => {
                let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
                for k in 0..3 {
                    if dir[k] == 0.0 {
                        if b.min[k] > 0.0 || b.max[k] < 0.0 {
                            return None;
                        }
                        continue;
                    }
                    let (t0, t1) = (b.min[k] / dir[k], b.max[k] / dir[k]);
                    lo = lo.max(t0.min(t1));
                    hi = hi.min(t0.max(t1));
                }
                (lo <= hi && lo > 0.0).then_some(lo)
            }
        }
    }

    fn albedo(&self) -> Vec3 {
        match self {
            Primitive::Sphere(s) => s.albedo,
            Primitive::Cuboid(b) => b.albedo,
        }
    }

    fn mirrored(&self) -> Self {
        match *self {
            Primitive::Sphere(s) => Primitive::Sphere(Sphere {
                center: [-s.center[0], s.center[1], s.center[2]],
                ..s
            }),
            Primitive::Cuboid(b) => Primitive::Cuboid(Cuboid {
                min: [-b.max[0], b.min[1], b.min[2]],
                max: [-b.min[0], b.max[1], b.max[2]],
                ..b
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels.
    pub focal: f64,
    pub wall_depth: f64,
    pub wall_albedo: Vec3,
    pub ground: Option<Ground>,
    pub primitives: Vec<Primitive>,
    /// Unit vector from surfaces towards the light.
    pub light: Vec3,
}

/// Label of a rendered pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Surface {
    Wall,
    Ground,
    Primitive(usize),
}

pub struct Scene {
    /// Row-major RGB, 8 bits per channel.
    pub image: RgbImage,
    pub depth: DepthMap,
    pub labels: Vec<Surface>,
}

impl SceneSpec {
    /// Fronto-parallel wall only.
    pub fn wall(width: usize, height: usize, depth: f64) -> Self {
        Self {
            seed: 0,
            width,
            height,
            focal: width as f64,
            wall_depth: depth,
            wall_albedo: [0.7, 0.7, 0.7],
            ground: None,
            primitives: Vec::new(),
            light: normalized([-0.3, -0.8, -0.5]),
        }
    }

    /// Random ground-plane scene whose primitives are all at least partly visible.
    pub fn random(seed: u64, width: usize, height: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut spec = Self::wall(width, height, MAX_DEPTH);
        spec.seed = seed;
        let color = |rng: &mut ChaCha8Rng| [rng.random_range(0.2..1.0), rng.random_range(0.2..1.0), rng.random_range(0.2..1.0)];
        spec.wall_albedo = color(&mut rng);
        let slope = rng.random_range(0.0..0.08);
        // Keeps the nearest ground pixel (bottom row) at depth >= 1.05.
        let lowest_ray = 0.5 * height as f64 / spec.focal;
        let ground = Ground {
            height: rng.random_range(0.8..1.5f64).max(1.05 * (lowest_ray + slope)),
            slope,
            albedo: color(&mut rng),
            checker: rng.random_range(0.4..1.0),
        };
        spec.ground = Some(ground);
        let ground_y = |z: f64| ground.height - ground.slope * z;
        let half_fov = 0.5 * width as f64 / spec.focal;
        for _ in 0..rng.random_range(1..=3) {
            let radius = rng.random_range(0.3..0.9);
            let z = rng.random_range(2.5..8.0);
            let x = rng.random_range(-0.8..0.8) * half_fov * z;
            spec.primitives.push(Primitive::Sphere(Sphere {
                center: [x, ground_y(z) - radius, z],
                radius,
                albedo: color(&mut rng),
            }));
        }
        for _ in 0..rng.random_range(0..=2) {
            let size = [rng.random_range(0.3..1.2), rng.random_range(0.3..1.5), rng.random_range(0.3..1.2)];
            let z = rng.random_range(2.5..8.0);
            let x = rng.random_range(-0.8..0.8) * half_fov * z;
            let base = ground_y(z + size[2]);
            spec.primitives.push(Primitive::Cuboid(Cuboid {
                min: [x - size[0] / 2.0, base - size[1], z],
                max: [x + size[0] / 2.0, base, z + size[2]],
                albedo: color(&mut rng),
            }));
        }
        let labels = spec.trace()?.1;
        let visible: Vec<bool> = (0..spec.primitives.len())
            .map(|k| labels.contains(&Surface::Primitive(k)))
            .collect();
        let mut keep = visible.iter();
        spec.primitives.retain(|_| *keep.next().expect("one flag per primitive"));
        Ok(spec)
    }

    /// Reflection about the vertical centre line of the image.
    pub fn mirrored(&self) -> Self {
        Self {
            primitives: self.primitives.iter().map(Primitive::mirrored).collect(),
            light: [-self.light[0], self.light[1], self.light[2]],
            ..self.clone()
        }
    }

    fn ray(&self, row: usize, col: usize) -> Vec3 {
        [
            (col as f64 + 0.5 - self.width as f64 / 2.0) / self.focal,
            (row as f64 + 0.5 - self.height as f64 / 2.0) / self.focal,
            1.0,
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(invalid("scene canvas is empty"));
        }
        if !(self.focal > 0.0) {
            return Err(invalid("focal length must be positive"));
        }
        if !(MIN_DEPTH..=MAX_DEPTH).contains(&self.wall_depth) {
            return Err(invalid(format!("wall depth {} outside [1, 10]", self.wall_depth)));
        }
        Ok(())
    }

    /// Depth and surface label per pixel.
    fn trace(&self) -> Result<(Vec<f64>, Vec<Surface>)> {
        self.validate()?;
        let n = self.width * self.height;
        let mut depth = vec![self.wall_depth; n];
        let mut labels = vec![Surface::Wall; n];
        for idx in 0..n {
            let dir = self.ray(idx / self.width, idx % self.width);
            if let Some(g) = &self.ground {
                let denom = dir[1] + g.slope;
                if denom > 0.0 {
                    let t = g.height / denom;
                    if t < depth[idx] {
                        depth[idx] = t;
                        labels[idx] = Surface::Ground;
                    }
                }
            }
            for (k, p) in self.primitives.iter().enumerate() {
                if let Some(t) = p.hit(dir) {
                    if t < depth[idx] {
                        depth[idx] = t;
                        labels[idx] = Surface::Primitive(k);
                    }
                }
            }
        }
        if let Some(bad) = depth.iter().find(|d| !(MIN_DEPTH..=MAX_DEPTH).contains(*d)) {
            return Err(invalid(format!("scene depth {bad} outside [1, 10]")));
        }
        Ok((depth, labels))
    }

    fn albedo_at(&self, surface: Surface, p: Vec3) -> Vec3 {
        match surface {
            Surface::Wall => self.wall_albedo,
            Surface::Ground => {
                let g = self.ground.expect("ground pixels imply a ground plane");
                let cell = (p[0] / g.checker).floor() + (p[2] / g.checker).floor();
                let k = if cell.rem_euclid(2.0) < 1.0 { 1.0 } else { 0.55 };
                g.albedo.map(|a| a * k)
            }
            Surface::Primitive(i) => self.primitives[i].albedo(),
        }
    }
}

/// Renders depth, labels and a Lambertian image shaded with normals estimated
/// from the depth map within each surface.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    let (raw, labels) = spec.trace()?;
    for k in 0..spec.primitives.len() {
        if !labels.contains(&Surface::Primitive(k)) {
            return Err(invalid(format!("primitive {k} is not visible")));
        }
    }
    let (w, h) = (spec.width, spec.height);
    let depth = DepthMap::from_f64(h, w, raw)?.quantized();
    let point = |r: usize, c: usize| {
        let d = spec.ray(r, c);
        let z = depth.data()[r * w + c];
        [d[0] * z, d[1] * z, z]
    };
    let same = |a: usize, b: usize| labels[a] == labels[b];
    let mut image = RgbImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            let idx = r * w + c;
            let p = point(r, c);
            let axis = |prev: Option<(usize, usize)>, next: Option<(usize, usize)>| {
                let ok = |q: Option<(usize, usize)>| q.filter(|(rr, cc)| same(idx, rr * w + cc));
                match (ok(prev), ok(next)) {
                    (Some(a), Some(b)) => Some(sub(point(b.0, b.1), point(a.0, a.1))),
                    (Some(a), None) => Some(sub(p, point(a.0, a.1))),
                    (None, Some(b)) => Some(sub(point(b.0, b.1), p)),
                    (None, None) => None,
                }
            };
            let du = axis(c.checked_sub(1).map(|cc| (r, cc)), (c + 1 < w).then_some((r, c + 1)));
            let dv = axis(r.checked_sub(1).map(|rr| (rr, c)), (r + 1 < h).then_some((r + 1, c)));
            let mut n = match (du, dv) {
                (Some(a), Some(b)) => normalized(cross(a, b)),
                _ => [0.0, 0.0, -1.0],
            };
            if dot(n, p) > 0.0 {
                n = n.map(|v| -v);
            }
            let shade = AMBIENT + (1.0 - AMBIENT) * dot(n, spec.light).max(0.0);
            let albedo = spec.albedo_at(labels[idx], p);
            let px = albedo.map(|a| ((a * shade).clamp(0.0, 1.0) * 255.0).round() as u8);
            image.put_pixel(c as u32, r as u32, Rgb(px));
        }
    }
    Ok(Scene {
        image,
        depth,
        labels,
    })
}

/// `1 × 3 × H × W` tensor with channels scaled to `[0, 1]`.
pub fn image_to_tensor(img: &RgbImage) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = w * h;
    Tensor::from_fn(vec![1, 3, h, w], |i| {
        let (ch, rest) = (i / plane, i % plane);
        img.get_pixel((rest % w) as u32, (rest / w) as u32)[ch] as f32 / 255.0
    })
}

fn default_ratio() -> f64 {
    crate::sampling::DEFAULT_EQUAL_RATIO
}

fn default_pairs() -> usize {
    1
}

/// Recipe for a synthetic dataset; image size comes from `sampler`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_images: usize,
    #[serde(default = "default_pairs")]
    pub pairs_per_image: usize,
    #[serde(default = "default_ratio")]
    pub equal_ratio: f64,
    pub sampler: SamplerConfig,
    /// Seeds the scene stream; the sampler keeps its own seed.
    pub scene_seed: u64,
}

/// One rendered image with its labelled queries.
pub struct Sample {
    pub id: String,
    pub image: RgbImage,
    pub depth: DepthMap,
    pub queries: Vec<PairQuery>,
}

pub fn image_id(index: usize) -> String {
    format!("scene_{index:05}")
}

/// Scenes `0..n` of the stream seeded by `scene_seed`, rendered in parallel.
pub fn render_scenes(n: usize, width: usize, height: usize, scene_seed: u64) -> Result<Vec<Scene>> {
    let mut seeds = ChaCha8Rng::seed_from_u64(scene_seed);
    let scene_seeds: Vec<u64> = (0..n).map(|_| seeds.random()).collect();
    scene_seeds
        .par_iter()
        .map(|s| SceneSpec::random(*s, width, height).and_then(|spec| generate_scene(&spec)))
        .collect()
}

/// Draws and labels `per_image` pairs for each depth map in order from one
/// sampler stream.
pub fn sample_queries<'a>(
    depths: impl IntoIterator<Item = &'a DepthMap>,
    sampler: &SamplerConfig,
    per_image: usize,
    equal_ratio: f64,
) -> Result<Vec<Vec<PairQuery>>> {
    let mut s = Sampler::new(sampler.clone())?;
    depths
        .into_iter()
        .map(|d| {
            if (d.height(), d.width()) != (sampler.height, sampler.width) {
                return Err(invalid(format!(
                    "depth map is {}x{} but the sampler expects {}x{}",
                    d.height(),
                    d.width(),
                    sampler.height,
                    sampler.width
                )));
            }
            label_pairs(d, &s.next_image(per_image)?, equal_ratio)
        })
        .collect()
}

/// Renders `n_images` scenes, then samples and labels pairs in image order.
pub fn make_dataset(cfg: &DatasetConfig) -> Result<Vec<Sample>> {
    if cfg.n_images == 0 {
        return Err(invalid("dataset needs at least one image"));
    }
    cfg.sampler.validate()?;
    let scenes = render_scenes(cfg.n_images, cfg.sampler.width, cfg.sampler.height, cfg.scene_seed)?;
    let queries = sample_queries(scenes.iter().map(|s| &s.depth), &cfg.sampler, cfg.pairs_per_image, cfg.equal_ratio)?;
    Ok(scenes
        .into_iter()
        .zip(queries)
        .enumerate()
        .map(|(k, (scene, queries))| Sample {
            id: image_id(k),
            image: scene.image,
            depth: scene.depth,
            queries,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{relation_from_depth, Strategy};

    #[test]
    fn fronto_parallel_wall_is_constant() {
        let scene = generate_scene(&SceneSpec::wall(20, 12, 5.0)).unwrap();
        assert!(scene.depth.data().iter().all(|d| *d == 5.0));
        let first = *scene.image.get_pixel(0, 0);
        assert!(scene.image.pixels().all(|p| *p == first));
    }

    #[test]
    fn sphere_occludes_wall() {
        let mut spec = SceneSpec::wall(32, 32, 6.0);
        spec.primitives.push(Primitive::Sphere(Sphere {
            center: [0.0, 0.0, 3.0],
            radius: 0.5,
            albedo: [1.0, 0.0, 0.0],
        }));
        let scene = generate_scene(&spec).unwrap();
        let mut n = 0;
        for (d, l) in scene.depth.data().iter().zip(&scene.labels) {
            if *l == Surface::Primitive(0) {
                n += 1;
                assert!(*d < 6.0 && *d >= 2.5 - 1e-6);
            }
        }
        assert!(n > 20);
        // Centre ray hits the sphere's front pole.
        assert!((scene.depth.data()[16 * 32 + 16] - 2.5).abs() < 0.01);
    }

    #[test]
    fn cuboid_front_face_depth() {
        let mut spec = SceneSpec::wall(16, 16, 9.0);
        spec.primitives.push(Primitive::Cuboid(Cuboid {
            min: [-0.5, -0.5, 4.0],
            max: [0.5, 0.5, 5.0],
            albedo: [0.0, 1.0, 0.0],
        }));
        let scene = generate_scene(&spec).unwrap();
        assert_eq!(scene.depth.data()[8 * 16 + 8], 4.0);
        assert_eq!(scene.depth.data()[0], 9.0);
    }

    #[test]
    fn invisible_primitive_rejected_and_empty_canvas_rejected() {
        let mut spec = SceneSpec::wall(16, 16, 5.0);
        spec.primitives.push(Primitive::Sphere(Sphere {
            center: [0.0, 0.0, 8.0],
            radius: 0.5,
            albedo: [1.0; 3],
        }));
        assert!(generate_scene(&spec).is_err());
        assert!(generate_scene(&SceneSpec::wall(0, 16, 5.0)).is_err());
    }

    #[test]
    fn random_scenes_are_valid_and_deterministic() {
        for seed in 0..30 {
            let spec = SceneSpec::random(seed, 48, 48).unwrap();
            assert_eq!(spec, SceneSpec::random(seed, 48, 48).unwrap());
            let a = generate_scene(&spec).unwrap();
            let b = generate_scene(&spec).unwrap();
            assert_eq!(a.image, b.image);
            assert_eq!(a.depth, b.depth);
            assert!(a.depth.data().iter().all(|d| (1.0..=10.0).contains(d)));
            assert!(a.labels.contains(&Surface::Ground));
        }
    }

    #[test]
    fn mirrored_scene_reflects_depth() {
        let spec = SceneSpec::random(3, 40, 30).unwrap();
        let (a, b) = (generate_scene(&spec).unwrap(), generate_scene(&spec.mirrored()).unwrap());
        for r in 0..30 {
            for c in 0..40 {
                let (x, y) = (a.depth.data()[r * 40 + c], b.depth.data()[r * 40 + 39 - c]);
                assert!((x - y).abs() < 1e-5 * x, "{r},{c}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn dataset_counts_and_relations_round_trip() {
        let cfg = DatasetConfig {
            n_images: 10,
            pairs_per_image: 1,
            equal_ratio: 1.02,
            sampler: SamplerConfig::new(32, 24, Strategy::Unconstrained, 1),
            scene_seed: 2,
        };
        let data = make_dataset(&cfg).unwrap();
        assert_eq!(data.iter().map(|s| s.queries.len()).sum::<usize>(), 10);
        for s in &data {
            let mut buf = Vec::new();
            s.depth.write_raster(&mut buf).unwrap();
            let reread = DepthMap::read_raster(&buf[..]).unwrap();
            for q in &s.queries {
                assert_eq!(relation_from_depth(&reread, q.i, q.j, 1.02).unwrap(), q.r);
            }
        }
        let again = make_dataset(&cfg).unwrap();
        assert!(data.iter().zip(&again).all(|(a, b)| a.image == b.image && a.queries == b.queries));
        assert!(make_dataset(&DatasetConfig { n_images: 0, ..cfg }).is_err());
    }

    #[test]
    fn image_tensor_layout() {
        let mut img = RgbImage::new(3, 2);
        img.put_pixel(2, 1, Rgb([255, 0, 51]));
        let t = image_to_tensor(&img);
        assert_eq!(t.shape(), &[1, 3, 2, 3]);
        assert_eq!(t.at4(0, 0, 1, 2), 1.0);
        assert_eq!(t.at4(0, 2, 1, 2), 0.2);
        assert_eq!(t.at4(0, 1, 1, 2), 0.0);
    }
}
