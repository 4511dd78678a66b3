//! Deterministic synthetic traffic scenes with known motion.
//!
//! Scenes live in a world plane measured in cells. The ego vehicle moves by
//! a fixed rigid step per frame (rotation about the grid center, then a
//! translation); frame `k` shows the world through the inverse of the
//! `k`-fold ego pose, so consecutive frames differ by the inverse ego step.
//! Height texture is a hash of world (or object-local) cell coordinates, so
//! it stays attached to whatever it belongs to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{compose, Homography};
use crate::grid::{OccGrid, OccSequence, DEFAULT_NUM_CLASSES};

pub const DEFAULT_DIMS: [usize; 3] = [64, 64, 8];
pub const DEFAULT_FRAMES: usize = 8;
pub const DEFAULT_FRAME_PERIOD_S: f32 = 0.5;

const DRIVEABLE_SURFACE: u8 = 11;
const CAR: u8 = 4;
const TRUCK: u8 = 10;
const MANMADE: u8 = 15;
const VEGETATION: u8 = 16;

/// splitmix64 finalizer over a seed and three integer coordinates.
pub(crate) fn hash3(seed: u64, a: i64, b: i64, c: i64) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [a, b, c] {
        h = h.wrapping_add(v as u64).wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

/// -1, 0 or +1.
fn jitter(seed: u64, a: i64, b: i64, salt: i64) -> i64 {
    (hash3(seed, a, b, salt) % 3) as i64 - 1
}

// The ground texture lives on unit cells of a world lattice turned away
// from the grid axes, so no frame samples it in perfect alignment.
const TEXTURE_LATTICE_DEG: f64 = 23.0;
const TEXTURE_LATTICE_OFFSET: [f64; 2] = [0.37, 0.71];

/// Top voxel of a textured ground column at world point (wx, wy).
fn ground_top(seed: u64, wx: f64, wy: f64) -> i64 {
    let (s, c) = TEXTURE_LATTICE_DEG.to_radians().sin_cos();
    let u = c * wx - s * wy + TEXTURE_LATTICE_OFFSET[0];
    let v = s * wx + c * wy + TEXTURE_LATTICE_OFFSET[1];
    1 + jitter(seed, u.floor() as i64, v.floor() as i64, -1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundSpec {
    pub class: u8,
    /// Column tops vary over {0, 1, 2} instead of a flat z = 0.
    pub textured: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub class: u8,
    /// Footprint length and width in cells (along the object's own axes).
    pub footprint: [f64; 2],
    /// Occupied voxels per column before texture.
    pub height: usize,
    /// World-frame center at frame 0.
    pub center: [f64; 2],
    pub yaw_deg: f64,
    /// World-frame translation per frame, cells.
    pub velocity: [f64; 2],
    pub yaw_rate_deg: f64,
    /// Column tops vary by ±1 cell.
    pub textured: bool,
}

/// Rigid ego step per frame: rotation about the grid center, then translation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoMotion {
    pub translation: [f64; 2],
    pub yaw_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub dims: [usize; 3],
    pub ground: Option<GroundSpec>,
    pub objects: Vec<ObjectSpec>,
    pub ego: EgoMotion,
    pub frames: usize,
    pub frame_period_s: f32,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub yaw_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthMotion {
    /// Dominant (static-world) motion between frames `k` and `k + 1`,
    /// row-major, one entry per consecutive pair.
    pub pair_homographies: Vec<[[f64; 3]; 3]>,
    /// `object_poses[i][k]`: object `i` at frame `k`, grid coordinates.
    pub object_poses: Vec<Vec<Pose>>,
    /// `(object, frame)` pairs whose footprint left the grid.
    pub clipped: Vec<(usize, usize)>,
}

impl GroundTruthMotion {
    pub fn pair_homography(&self, pair: usize) -> Option<Homography> {
        self.pair_homographies
            .get(pair)
            .map(|rows| Homography::new(*rows).expect("generator stores invertible motion"))
    }
}

/// A generated scenario with its ground truth, as written next to `synth` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub preset: Option<String>,
    pub scenario: Scenario,
    pub motion: GroundTruthMotion,
}

impl SynthRecord {
    pub fn to_toml(&self) -> Result<String> {
        // TOML integers are i64; a seed above i64::MAX cannot be stored
        toml::to_string(self).map_err(|e| Error::InvalidParams(format!("synth record: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.message().to_string()))
    }
}

impl Scenario {
    fn center(&self) -> (f64, f64) {
        (
            (self.dims[0] as f64 - 1.0) / 2.0,
            (self.dims[1] as f64 - 1.0) / 2.0,
        )
    }

    /// The per-frame ego step as a homography on grid coordinates.
    pub fn ego_step(&self) -> Homography {
        let (cx, cy) = self.center();
        Homography::rigid(
            self.ego.yaw_deg,
            cx,
            cy,
            self.ego.translation[0],
            self.ego.translation[1],
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.dims.contains(&0) {
            return bad(format!("dims must be positive, got {:?}", self.dims));
        }
        if self.frames == 0 {
            return bad("frames must be >= 1".into());
        }
        if !(self.frame_period_s.is_finite() && self.frame_period_s > 0.0) {
            return bad("frame period must be positive".into());
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&[
            self.ego.translation[0],
            self.ego.translation[1],
            self.ego.yaw_deg,
        ]) || self.ego.yaw_deg.abs() > 180.0
        {
            return bad("ego motion must be finite with |yaw| <= 180".into());
        }
        if let Some(g) = &self.ground {
            if g.class == 0 || g.class as usize >= DEFAULT_NUM_CLASSES {
                return bad(format!("ground class {} invalid", g.class));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.class == 0 || o.class as usize >= DEFAULT_NUM_CLASSES {
                return bad(format!("object {i} class {} invalid", o.class));
            }
            if !(o.footprint.iter().all(|&e| e > 0.0 && e.is_finite())) {
                return bad(format!("object {i} footprint must be positive"));
            }
            if o.height == 0 || o.height > self.dims[2] {
                return bad(format!(
                    "object {i} height {} outside 1..={}",
                    o.height, self.dims[2]
                ));
            }
            if !finite(&[
                o.center[0],
                o.center[1],
                o.yaw_deg,
                o.velocity[0],
                o.velocity[1],
                o.yaw_rate_deg,
            ]) {
                return bad(format!("object {i} pose or motion not finite"));
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_dims(mut self, dims: [usize; 3]) -> Self {
        self.dims = dims;
        self
    }
}

fn object_world_pose(o: &ObjectSpec, frame: usize) -> (f64, f64, f64) {
    let k = frame as f64;
    (
        o.center[0] + k * o.velocity[0],
        o.center[1] + k * o.velocity[1],
        o.yaw_deg + k * o.yaw_rate_deg,
    )
}

/// Rasterizes every frame of `sc`.
pub fn generate(sc: &Scenario) -> Result<(OccSequence, GroundTruthMotion)> {
    sc.validate()?;
    let step = sc.ego_step();
    let [dx, dy, dz] = sc.dims;
    let (w, h) = (dx as f64, dy as f64);
    let top_z = dz as i64 - 1;

    let mut frames = Vec::with_capacity(sc.frames);
    let mut object_poses = vec![Vec::with_capacity(sc.frames); sc.objects.len()];
    let mut clipped = Vec::new();

    for k in 0..sc.frames {
        let pose = compose(&step, k as u32);
        let to_grid = pose.inverse();
        let mut grid = OccGrid::empty(sc.dims)?;

        let placed: Vec<(f64, f64, f64, f64)> = sc
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let (cx, cy, yaw) = object_world_pose(o, k);
                let g = to_grid.apply(cx, cy).expect("rigid pose");
                let grid_yaw = yaw - k as f64 * sc.ego.yaw_deg;
                object_poses[i].push(Pose {
                    x: g[0],
                    y: g[1],
                    yaw_deg: grid_yaw,
                });
                let (s, c) = grid_yaw.to_radians().sin_cos();
                let (hx, hy) = (o.footprint[0] / 2.0, o.footprint[1] / 2.0);
                let outside = [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)]
                    .iter()
                    .any(|&(sx, sy)| {
                        let px = g[0] + c * sx * hx - s * sy * hy;
                        let py = g[1] + s * sx * hx + c * sy * hy;
                        px < -0.5 || py < -0.5 || px > w - 0.5 || py > h - 0.5
                    });
                if outside {
                    clipped.push((i, k));
                }
                let (ws, wc) = yaw.to_radians().sin_cos();
                (cx, cy, ws, wc)
            })
            .collect();

        for x in 0..dx {
            for y in 0..dy {
                let [wx, wy] = pose.apply(x as f64, y as f64).expect("rigid pose");
                let column = grid.column_slice_mut(x, y);
                if let Some(g) = &sc.ground {
                    let top = if g.textured {
                        ground_top(sc.seed, wx, wy)
                    } else {
                        0
                    };
                    column[..=top.clamp(0, top_z) as usize].fill(g.class);
                }
                for (i, (o, &(cx, cy, s, c))) in sc.objects.iter().zip(&placed).enumerate() {
                    // world offset rotated into the object's frame
                    let (ox, oy) = (wx - cx, wy - cy);
                    let lx = c * ox + s * oy;
                    let ly = -s * ox + c * oy;
                    let (hx, hy) = (o.footprint[0] / 2.0, o.footprint[1] / 2.0);
                    if lx.abs() >= hx || ly.abs() >= hy {
                        continue;
                    }
                    let mut top = o.height as i64 - 1;
                    if o.textured {
                        top += jitter(
                            sc.seed,
                            (lx + hx).floor() as i64,
                            (ly + hy).floor() as i64,
                            i as i64,
                        );
                    }
                    column.fill(0);
                    column[..=top.clamp(0, top_z) as usize].fill(o.class);
                }
            }
        }
        frames.push(grid);
    }

    let pair = step.inverse();
    let motion = GroundTruthMotion {
        pair_homographies: vec![pair.rows(); sc.frames.saturating_sub(1)],
        object_poses,
        clipped,
    };
    Ok((OccSequence::new(frames, sc.frame_period_s)?, motion))
}

fn base(seed: u64) -> Scenario {
    Scenario {
        dims: DEFAULT_DIMS,
        ground: Some(GroundSpec {
            class: DRIVEABLE_SURFACE,
            textured: true,
        }),
        objects: Vec::new(),
        ego: EgoMotion::default(),
        frames: DEFAULT_FRAMES,
        frame_period_s: DEFAULT_FRAME_PERIOD_S,
        seed,
    }
}

fn parked(class: u8, footprint: [f64; 2], height: usize, center: [f64; 2]) -> ObjectSpec {
    ObjectSpec {
        class,
        footprint,
        height,
        center,
        yaw_deg: 0.0,
        velocity: [0.0, 0.0],
        yaw_rate_deg: 0.0,
        textured: false,
    }
}

/// Named scenarios with fixed seeds, all at 64×64×8 over 8 frames.
///
/// - `static`: textured ground, a parked car and a tree; nothing moves.
/// - `translating_car`: one textured car, 32×20 cells, moving (2, 0)
///   cells/frame over empty space; no ground plane.
/// - `ego_translation`: ego drives (1, 0) cells/frame past parked objects.
/// - `ego_rotation`: ego yaws 4°/frame while driving (1, 0) cells/frame.
/// - `crossing_pair`: static ego, one car moving (2, 0) and one (0, -2).
pub fn scenario_presets() -> Vec<(&'static str, Scenario)> {
    let mut static_scene = base(1);
    static_scene.objects = vec![
        parked(CAR, [8.0, 4.0], 3, [20.5, 40.5]),
        parked(VEGETATION, [6.0, 6.0], 6, [45.0, 20.0]),
    ];

    let mut translating_car = base(2);
    translating_car.ground = None;
    translating_car.objects = vec![ObjectSpec {
        velocity: [2.0, 0.0],
        textured: true,
        ..parked(CAR, [32.0, 20.0], 3, [20.5, 32.5])
    }];

    let mut ego_translation = base(3);
    ego_translation.ego.translation = [1.0, 0.0];
    ego_translation.objects = vec![
        parked(MANMADE, [10.0, 6.0], 5, [30.0, 12.0]),
        parked(CAR, [8.0, 4.0], 3, [40.5, 48.5]),
    ];

    let mut ego_rotation = base(4);
    ego_rotation.ego = EgoMotion {
        translation: [1.0, 0.0],
        yaw_deg: 4.0,
    };
    ego_rotation.objects = vec![parked(TRUCK, [12.0, 5.0], 4, [24.0, 44.0])];

    let mut crossing_pair = base(5);
    crossing_pair.objects = vec![
        ObjectSpec {
            velocity: [2.0, 0.0],
            ..parked(CAR, [8.0, 4.0], 3, [12.5, 20.5])
        },
        ObjectSpec {
            velocity: [0.0, -2.0],
            ..parked(CAR, [4.0, 8.0], 3, [44.5, 50.5])
        },
    ];

    vec![
        ("static", static_scene),
        ("translating_car", translating_car),
        ("ego_translation", ego_translation),
        ("ego_rotation", ego_rotation),
        ("crossing_pair", crossing_pair),
    ]
}

pub fn preset(name: &str) -> Result<Scenario> {
    scenario_presets()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| s)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bev::project_height;

    #[test]
    fn zero_motion_frames_are_identical() {
        let (seq, motion) = generate(&preset("static").unwrap().with_dims([32, 32, 8])).unwrap();
        let frames = seq.frames();
        assert!(frames.iter().all(|f| f == &frames[0]));
        for k in 0..frames.len() - 1 {
            assert!(
                motion
                    .pair_homography(k)
                    .unwrap()
                    .max_abs_diff(&Homography::identity())
                    < 1e-15
            );
        }
    }

    #[test]
    fn flat_car_has_exact_height() {
        let sc = Scenario {
            dims: [16, 16, 6],
            ground: None,
            objects: vec![parked(CAR, [4.0, 2.0], 3, [7.5, 8.0])],
            ego: EgoMotion::default(),
            frames: 1,
            frame_period_s: 0.5,
            seed: 9,
        };
        let (seq, _) = generate(&sc).unwrap();
        let b = project_height(&seq.frames()[0]);
        for x in 0..16 {
            for y in 0..16 {
                let inside =
                    (6..=9).contains(&x) && (7..=9).contains(&y) && (y as f64 - 8.0).abs() < 1.0;
                assert_eq!(b.get(x, y), if inside { 2 } else { -1 }, "cell {x},{y}");
            }
        }
    }

    #[test]
    fn ego_translation_gives_inverse_shift() {
        let mut sc = base(7).with_dims([24, 24, 4]);
        sc.ego.translation = [1.0, 0.0];
        let (_, motion) = generate(&sc).unwrap();
        let h = motion.pair_homography(0).unwrap();
        assert!(h.max_abs_diff(&Homography::translation(-1.0, 0.0)) < 1e-12);

        sc.ego.translation = [-1.0, 0.0];
        let (_, motion) = generate(&sc).unwrap();
        let h = motion.pair_homography(0).unwrap();
        assert!(h.max_abs_diff(&Homography::translation(1.0, 0.0)) < 1e-12);
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let mut sc = base(1);
        sc.frames = 0;
        assert!(matches!(generate(&sc), Err(Error::InvalidScenario(_))));
        let mut sc = base(1);
        sc.objects.push(parked(0, [2.0, 2.0], 1, [5.0, 5.0]));
        assert!(matches!(generate(&sc), Err(Error::InvalidScenario(_))));
        let mut sc = base(1);
        sc.objects.push(parked(CAR, [2.0, 2.0], 9, [5.0, 5.0]));
        assert!(matches!(generate(&sc), Err(Error::InvalidScenario(_))));
        assert!(matches!(preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn record_toml_round_trip() {
        let sc = preset("crossing_pair").unwrap();
        let (_, motion) = generate(&sc).unwrap();
        let rec = SynthRecord {
            preset: Some("crossing_pair".into()),
            scenario: sc,
            motion,
        };
        let text = rec.to_toml().unwrap();
        assert_eq!(SynthRecord::from_toml(&text).unwrap(), rec);
    }

    #[test]
    fn clipping_is_recorded() {
        let mut sc = base(1).with_dims([16, 16, 4]);
        sc.objects.push(ObjectSpec {
            velocity: [3.0, 0.0],
            ..parked(CAR, [4.0, 2.0], 2, [8.0, 8.0])
        });
        sc.frames = 4;
        let (_, motion) = generate(&sc).unwrap();
        // center x = 8, 11, 14, 17; half length 2 -> frames 2 and 3 leave [−0.5, 15.5]
        assert_eq!(motion.clipped, vec![(0, 2), (0, 3)]);
    }
}
