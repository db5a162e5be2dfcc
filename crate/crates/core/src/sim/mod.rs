//! Sensor simulation and extrinsic calibration by an error-state EKF.
//!
//! The vehicle follows the spline exactly. IMU samples are generated at
//! `imu_hz` from the flatness map with white noise (`σ/√dt` per sample) and
//! Euler–Maruyama bias random walks; camera poses arrive at `cam_hz` with
//! additive position noise and multiplicative attitude noise. The visual
//! front end is abstracted into that pose noise, whose size follows the
//! number of tracked landmarks as `σ √(400 / n)`.

mod ekf;
mod stats;

pub use ekf::{ekf_calibrate, CalibrationRunResult, EkfOptions};
pub use stats::{chi_square_envelope, cost_normalized_error, normalized_cost};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::spline::UniformSpline;
use crate::system::{
    imu_measurement, pose_measurement, AugmentedState, ExtrinsicParams, ImuNoise, ImuSignal, NoiseSpec,
    PoseMeasurement, Quaternion,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorRates {
    pub imu_hz: u32,
    pub cam_hz: u32,
}

impl Default for SensorRates {
    fn default() -> Self {
        Self {
            imu_hz: 200,
            cam_hz: 10,
        }
    }
}

impl SensorRates {
    pub fn validate(&self) -> Result<()> {
        if self.imu_hz == 0 || self.cam_hz == 0 || !self.imu_hz.is_multiple_of(self.cam_hz) {
            return Err(Error::InvalidArgument(format!(
                "IMU rate {} must be a positive multiple of the camera rate {}",
                self.imu_hz, self.cam_hz
            )));
        }
        Ok(())
    }

    pub fn imu_dt(&self) -> f64 {
        1.0 / self.imu_hz as f64
    }

    pub fn cam_dt(&self) -> f64 {
        1.0 / self.cam_hz as f64
    }

    /// IMU samples per camera frame.
    pub fn ratio(&self) -> usize {
        (self.imu_hz / self.cam_hz) as usize
    }
}

/// Visual measurement quality, expressed as the number of landmarks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QualityLevel {
    pub n_landmarks: u32,
}

impl QualityLevel {
    pub const fn new(n_landmarks: u32) -> Self {
        Self { n_landmarks }
    }
}

/// Pose noise `(σ_p, σ_q)` for a quality level; 400 landmarks gives the
/// base values.
pub fn pose_noise_scale(quality: QualityLevel, base_sigma_p: f64, base_sigma_q: f64) -> Result<(f64, f64)> {
    if quality.n_landmarks == 0 {
        return Err(Error::InvalidArgument("quality needs at least one landmark".into()));
    }
    let f = (400.0 / quality.n_landmarks as f64).sqrt();
    Ok((base_sigma_p * f, base_sigma_q * f))
}

impl NoiseSpec {
    /// Copy with the pose noise scaled for `quality`.
    pub fn for_quality(&self, quality: QualityLevel) -> Result<Self> {
        let (sigma_p, sigma_q) = pose_noise_scale(quality, self.sigma_p, self.sigma_q)?;
        Ok(Self {
            sigma_p,
            sigma_q,
            ..*self
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub t: f64,
    pub z: PoseMeasurement,
}

/// Simulated sensor streams and the ground truth they were drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedRun {
    pub imu: Vec<ImuSignal>,
    pub poses: Vec<PoseSample>,
    /// True augmented state at every IMU sample (biases included).
    pub truth: Vec<AugmentedState>,
    pub rates: SensorRates,
    /// Noise used for the poses (already scaled for quality).
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl SimulatedRun {
    pub fn truth_extrinsics(&self) -> ExtrinsicParams {
        self.truth[0].extrinsics
    }
}

fn normal3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| StandardNormal.sample(rng))
}

/// Simulates IMU and pose streams along `traj` starting with zero biases.
pub fn simulate_run(
    traj: &UniformSpline,
    truth: &ExtrinsicParams,
    noise: &NoiseSpec,
    rates: &SensorRates,
    quality: QualityLevel,
    seed: u64,
) -> Result<SimulatedRun> {
    noise.validate()?;
    rates.validate()?;
    let (start, end) = traj.span();
    if end - start < 1.0 - 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "trajectory span {:.3} s is shorter than 1 s",
            end - start
        )));
    }
    let pose_noise = noise.for_quality(quality)?;
    let dt = rates.imu_dt();
    let n = ((end - start) * rates.imu_hz as f64 + 1e-6).floor() as usize;
    let ratio = rates.ratio();
    let g = noise.gravity;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut b_g, mut b_a) = (Vector3::zeros(), Vector3::zeros());
    let white_g = noise.sigma_g / dt.sqrt();
    let white_a = noise.sigma_a / dt.sqrt();
    let walk_g = noise.sigma_gw * dt.sqrt();
    let walk_a = noise.sigma_aw * dt.sqrt();

    let mut imu = Vec::with_capacity(n + 1);
    let mut poses = Vec::with_capacity(n / ratio + 1);
    let mut states = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let t = (start + j as f64 * dt).min(end);
        let (mut vehicle, u) = traj.state_at(t, &g)?;
        vehicle.b_g = b_g;
        vehicle.b_a = b_a;
        let s = AugmentedState::new(vehicle, *truth);
        let white = ImuNoise {
            n_g: normal3(&mut rng) * white_g,
            n_a: normal3(&mut rng) * white_a,
        };
        imu.push(imu_measurement(&s, &u, &white, &g, t));
        if j % ratio == 0 {
            let clean = pose_measurement(&s);
            let dp = normal3(&mut rng) * pose_noise.sigma_p;
            let dq = normal3(&mut rng) * pose_noise.sigma_q;
            poses.push(PoseSample {
                t,
                z: PoseMeasurement {
                    h1: clean.h1 + dp,
                    h2: Quaternion::exp(&dq) * clean.h2,
                },
            });
        }
        states.push(s);
        b_g += normal3(&mut rng) * walk_g;
        b_a += normal3(&mut rng) * walk_a;
    }
    Ok(SimulatedRun {
        imu,
        poses,
        truth: states,
        rates: *rates,
        noise: pose_noise,
        seed,
    })
}
