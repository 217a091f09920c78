//! Observation pipeline: turns a world into the tensor a policy consumes.
//!
//! Image modes render with the rover camera; when the render resolution is
//! larger than the observation resolution the frame goes through bicubic
//! downsampling (and re-quantization in segmented mode). Desk-scale
//! training usually renders directly at the observation resolution. The
//! proprioceptive mode feeds the MLP baseline a 7-value state vector
//! instead of pixels.

use crate::camera::{render_rgb, render_segmented, render_shaded, CameraConfig};
use crate::nn::{NetConfig, NetKind, Tensor, PROPRIO_DIM};
use crate::preprocess::{bicubic_downsample, class_quantize, to_tensor};
use crate::world::World;

use super::PpoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsMode {
    /// Ground-truth class image, palette-encoded.
    Segmented,
    /// Shaded render (the "raw" configuration).
    Raw,
    /// Goal bearing/distance, pose, and previous command; no pixels.
    Proprio,
}

impl ObsMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ObsMode::Segmented => "segmented",
            ObsMode::Raw => "raw",
            ObsMode::Proprio => "proprio",
        }
    }

    pub fn parse(s: &str) -> Option<ObsMode> {
        match s {
            "segmented" => Some(ObsMode::Segmented),
            "raw" => Some(ObsMode::Raw),
            "proprio" => Some(ObsMode::Proprio),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObsPipeline {
    pub mode: ObsMode,
    pub camera: CameraConfig,
    /// Observation resolution fed to the network. Must not exceed the
    /// camera render resolution.
    pub obs_width: usize,
    pub obs_height: usize,
}

impl ObsPipeline {
    /// Image pipeline rendering directly at the observation resolution.
    pub fn direct(mode: ObsMode, camera: CameraConfig) -> Self {
        let (w, h) = (camera.width, camera.height);
        Self {
            mode,
            camera,
            obs_width: w,
            obs_height: h,
        }
    }

    /// Proprioceptive pipeline for the MLP baseline.
    pub fn proprio() -> Self {
        Self {
            mode: ObsMode::Proprio,
            camera: CameraConfig::default(),
            obs_width: 0,
            obs_height: 0,
        }
    }

    pub fn obs_shape(&self) -> Vec<usize> {
        match self.mode {
            ObsMode::Proprio => vec![PROPRIO_DIM],
            _ => vec![3, self.obs_height, self.obs_width],
        }
    }

    /// Check pipeline/network agreement; image policies may only be fed
    /// image tensors and the MLP only the proprioceptive vector.
    pub fn check_net(&self, net: &NetConfig) -> Result<(), PpoError> {
        let ok = match self.mode {
            ObsMode::Proprio => net.kind == NetKind::Mlp,
            ObsMode::Segmented | ObsMode::Raw => {
                net.kind != NetKind::Mlp && net.obs_width == self.obs_width && net.obs_height == self.obs_height
            }
        };
        if ok {
            Ok(())
        } else {
            Err(PpoError::ObsNetMismatch {
                pipeline: format!("{} {}x{}", self.mode.as_str(), self.obs_width, self.obs_height),
                net: format!("{} {}x{}", net.kind.as_str(), net.obs_width, net.obs_height),
            })
        }
    }

    /// Build the observation tensor for the current world state.
    /// `prev_cmd` is only used by the proprioceptive mode.
    pub fn observe(&self, world: &World, prev_cmd: (f64, f64)) -> Result<Tensor, PpoError> {
        match self.mode {
            ObsMode::Segmented => {
                let rgb = render_rgb(&render_segmented(world, &self.camera));
                let rgb = if self.needs_downsample() {
                    let small = bicubic_downsample(&rgb, self.obs_width, self.obs_height)?;
                    render_rgb(&class_quantize(&small))
                } else {
                    rgb
                };
                Ok(to_tensor(&rgb, self.obs_width, self.obs_height)?)
            }
            ObsMode::Raw => {
                let rgb = render_shaded(world, &self.camera);
                let rgb = if self.needs_downsample() {
                    bicubic_downsample(&rgb, self.obs_width, self.obs_height)?
                } else {
                    rgb
                };
                Ok(to_tensor(&rgb, self.obs_width, self.obs_height)?)
            }
            ObsMode::Proprio => Ok(proprio_tensor(world, prev_cmd)),
        }
    }

    fn needs_downsample(&self) -> bool {
        self.camera.width != self.obs_width || self.camera.height != self.obs_height
    }
}

/// Proprioceptive observation: goal bearing, goal distance, heading, x, y
/// (each scaled to roughly [-1, 1]) and the previous wheel command pair.
pub fn proprio_tensor(world: &World, prev_cmd: (f64, f64)) -> Tensor {
    let pose = &world.rover;
    let bearing = crate::baselines::bearing_error(pose, world.goal);
    let scale = world.config.map_side;
    let diag = scale * std::f64::consts::SQRT_2;
    Tensor::from_vec(
        vec![PROPRIO_DIM],
        vec![
            bearing / std::f64::consts::PI,
            world.goal_distance() / diag,
            pose.heading / std::f64::consts::PI,
            pose.x / scale,
            pose.y / scale,
            prev_cmd.0,
            prev_cmd.1,
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{WorldConfig, World};

    fn small_camera() -> CameraConfig {
        CameraConfig {
            width: 32,
            height: 18,
            ..CameraConfig::default()
        }
    }

    #[test]
    fn direct_segmented_observation_shape_and_range() {
        let world = World::generate(5, &WorldConfig::default()).unwrap();
        let pipeline = ObsPipeline::direct(ObsMode::Segmented, small_camera());
        let obs = pipeline.observe(&world, (0.0, 0.0)).unwrap();
        assert_eq!(obs.shape(), &[3, 18, 32]);
        assert!(obs.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn downsampled_segmented_requantizes_to_palette() {
        let world = World::generate(6, &WorldConfig::default()).unwrap();
        let pipeline = ObsPipeline {
            mode: ObsMode::Segmented,
            camera: CameraConfig {
                width: 128,
                height: 72,
                ..CameraConfig::default()
            },
            obs_width: 32,
            obs_height: 18,
        };
        let obs = pipeline.observe(&world, (0.0, 0.0)).unwrap();
        assert_eq!(obs.shape(), &[3, 18, 32]);
        // Every pixel must be one of the four palette colors.
        let hw = 18 * 32;
        let palette: Vec<[f64; 3]> = crate::camera::SemanticClass::ALL
            .iter()
            .map(|c| {
                let p = c.rgb();
                [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0]
            })
            .collect();
        for i in 0..hw {
            let px = [obs.data()[i], obs.data()[hw + i], obs.data()[2 * hw + i]];
            assert!(palette.iter().any(|p| p == &px), "pixel {i} {px:?} not in palette");
        }
    }

    #[test]
    fn proprio_vector_fields() {
        let world = World::generate(9, &WorldConfig::default()).unwrap();
        let t = proprio_tensor(&world, (0.25, 0.75));
        assert_eq!(t.shape(), &[7]);
        assert!((t.data()[5] - 0.25).abs() < 1e-15);
        assert!((t.data()[6] - 0.75).abs() < 1e-15);
        assert!(t.data().iter().all(|v| v.is_finite()));
        // Start pose: x = map/2 -> 0.5, y = 0.
        assert!((t.data()[3] - 0.5).abs() < 1e-12);
        assert_eq!(t.data()[4], 0.0);
    }

    #[test]
    fn pipeline_net_agreement_is_enforced() {
        let image = ObsPipeline::direct(ObsMode::Segmented, small_camera());
        let cnn = NetConfig {
            kind: NetKind::Cnn,
            obs_width: 32,
            obs_height: 18,
            ..NetConfig::default()
        };
        image.check_net(&cnn).unwrap();

        let mlp = NetConfig {
            kind: NetKind::Mlp,
            ..cnn.clone()
        };
        assert!(image.check_net(&mlp).is_err());
        assert!(ObsPipeline::proprio().check_net(&mlp).is_ok());
        assert!(ObsPipeline::proprio().check_net(&cnn).is_err());

        let wrong_size = NetConfig {
            kind: NetKind::Cnn,
            obs_width: 48,
            obs_height: 27,
            ..NetConfig::default()
        };
        assert!(image.check_net(&wrong_size).is_err());
    }
}
