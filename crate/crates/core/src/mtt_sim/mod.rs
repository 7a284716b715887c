//! Multi-target, multi-sensor scenario simulation.
//!
//! Targets follow a nearly constant velocity model and are observed by
//! static range-bearing sensors with missed detections and clutter. All
//! positions are in meters, with the observation window centred on the
//! origin and the simulation region padded by the sensor range on each side.

mod dataset;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{rasterize_density, rasterize_gaussian, IntensityImage, MeasurementModel, PointSet, WindowSpec};
use crate::rng::{self, SimRng};

pub use dataset::{run_simulation, simulate_scenario, FrameDataset, ScenarioRecord};

/// Scenario parameters. Rates are expected counts inside the `window`
/// square; the simulation scales them up to the padded region so that
/// target and sensor densities do not depend on the window size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimParams {
    pub p_death: f64,
    pub p_detect: f64,
    /// Acceleration noise std (m/s²).
    pub sigma_a: f64,
    /// Initial velocity std (m/s).
    pub sigma_v: f64,
    pub eta_r: f64,
    pub eta_theta: f64,
    pub lambda_birth: f64,
    pub lambda_initial: f64,
    pub lambda_sensor: f64,
    /// Mean clutter count per sensor per step.
    pub lambda_clutter: f64,
    pub sensor_range: f64,
    pub tau: f64,
    /// Observation window width (m).
    pub window: f64,
    /// Pixel size (m).
    pub resolution: f64,
    /// Kernel width of the target image (m).
    pub target_sigma: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self::for_window(1000.0)
    }
}

impl SimParams {
    /// Default parameters for a window `width` meters wide, with the
    /// size-dependent rates scaled by the window area in km².
    pub fn for_window(width: f64) -> Self {
        let t_km = width / 1000.0;
        let tau = 1.0;
        SimParams {
            p_death: 0.05,
            p_detect: 0.95,
            sigma_a: 1.0,
            sigma_v: 5.0,
            eta_r: 10.0,
            eta_theta: 0.035,
            lambda_birth: 0.5 * t_km * t_km * tau,
            lambda_initial: 10.0 * t_km * t_km,
            lambda_sensor: 0.25 * t_km * t_km,
            lambda_clutter: 40.0 * tau,
            sensor_range: 2000.0,
            tau,
            window: width,
            resolution: 1000.0 / 128.0,
            target_sigma: 10.0,
        }
    }

    /// Same densities, different window.
    pub fn with_window(&self, width: f64) -> Self {
        let s = (width / self.window).powi(2);
        SimParams {
            lambda_birth: self.lambda_birth * s,
            lambda_initial: self.lambda_initial * s,
            lambda_sensor: self.lambda_sensor * s,
            window: width,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_death", self.p_death), ("p_detect", self.p_detect)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        let nonneg = [
            ("sigma_a", self.sigma_a),
            ("sigma_v", self.sigma_v),
            ("eta_r", self.eta_r),
            ("eta_theta", self.eta_theta),
            ("lambda_birth", self.lambda_birth),
            ("lambda_initial", self.lambda_initial),
            ("lambda_sensor", self.lambda_sensor),
            ("lambda_clutter", self.lambda_clutter),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        let pos = [
            ("sensor_range", self.sensor_range),
            ("tau", self.tau),
            ("window", self.window),
            ("resolution", self.resolution),
            ("target_sigma", self.target_sigma),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        self.window_spec()?;
        Ok(())
    }

    /// Width of the simulated square.
    pub fn padded_width(&self) -> f64 {
        2.0 * self.sensor_range + self.window
    }

    fn area_scale(&self) -> f64 {
        (self.padded_width() / self.window).powi(2)
    }

    pub fn window_spec(&self) -> Result<WindowSpec> {
        WindowSpec::new(self.window, self.resolution, 2)
    }

    fn uniform_position(&self, rng: &mut SimRng) -> [f64; 2] {
        let h = self.padded_width() / 2.0;
        [rng.gen_range(-h..h), rng.gen_range(-h..h)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub id: u64,
}

#[derive(Clone, Debug)]
pub struct SimState {
    pub step: u64,
    pub targets: Vec<TargetState>,
    pub sensors: Vec<[f64; 2]>,
    next_id: u64,
    rng: SimRng,
}

impl SimState {
    /// Target positions as a point set.
    pub fn positions(&self) -> PointSet {
        PointSet::planar(&self.targets.iter().map(|t| t.position).collect::<Vec<_>>())
    }

    /// Positions of targets strictly inside the observation window.
    pub fn positions_in_window(&self, params: &SimParams) -> PointSet {
        self.positions().inside_box(params.window / 2.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub sensor: usize,
    pub range: f64,
    pub bearing: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeasurementFrame {
    pub measurements: Vec<Measurement>,
    /// True for clutter. Diagnostics only.
    pub clutter: Vec<bool>,
}

impl MeasurementFrame {
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    /// Measurements as Cartesian points, each paired with the density model
    /// of its sensor.
    pub fn to_cartesian(&self, sensors: &[[f64; 2]], params: &SimParams) -> Result<(PointSet, Vec<MeasurementModel>)> {
        let mut points = PointSet::empty(2);
        let mut models = Vec::with_capacity(self.len());
        for m in &self.measurements {
            let s = *sensors
                .get(m.sensor)
                .ok_or_else(|| Error::Data(format!("measurement refers to missing sensor {}", m.sensor)))?;
            points.push(&[s[0] + m.range * m.bearing.cos(), s[1] + m.range * m.bearing.sin()]);
            models.push(MeasurementModel::RangeBearing {
                sensor: s,
                eta_r: params.eta_r,
                eta_theta: params.eta_theta,
            });
        }
        Ok((points, models))
    }

    /// Measurement intensity over the observation window.
    pub fn image(&self, sensors: &[[f64; 2]], params: &SimParams) -> Result<IntensityImage> {
        let (points, models) = self.to_cartesian(sensors, params)?;
        rasterize_density(&points, &models, &params.window_spec()?)
    }
}

fn poisson(rng: &mut SimRng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as usize
}

fn normal(rng: &mut SimRng, std: f64) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, std).expect("finite std").sample(rng)
}

fn spawn(state: &mut SimState, params: &SimParams) {
    let position = params.uniform_position(&mut state.rng);
    let velocity = [normal(&mut state.rng, params.sigma_v), normal(&mut state.rng, params.sigma_v)];
    state.targets.push(TargetState {
        position,
        velocity,
        id: state.next_id,
    });
    state.next_id += 1;
}

/// Fresh scenario on stream 0 of `seed`.
pub fn new_scenario(params: &SimParams, seed: u64) -> Result<SimState> {
    new_scenario_indexed(params, seed, 0)
}

/// Fresh scenario on its own random stream, so scenario `index` of a
/// dataset is reproducible on its own.
pub fn new_scenario_indexed(params: &SimParams, seed: u64, index: u64) -> Result<SimState> {
    params.validate()?;
    let mut state = SimState {
        step: 0,
        targets: Vec::new(),
        sensors: Vec::new(),
        next_id: 0,
        rng: rng::stream(seed, index),
    };
    let scale = params.area_scale();
    let n_targets = poisson(&mut state.rng, params.lambda_initial * scale);
    let n_sensors = poisson(&mut state.rng, params.lambda_sensor * scale);
    for _ in 0..n_sensors {
        let s = params.uniform_position(&mut state.rng);
        state.sensors.push(s);
    }
    for _ in 0..n_targets {
        spawn(&mut state, params);
    }
    Ok(state)
}

/// Advances one time step: deaths, then births, then motion of the targets
/// that existed before the births.
pub fn propagate(state: &mut SimState, params: &SimParams) {
    let rng = &mut state.rng;
    state.targets.retain(|_| !rng.gen_bool(params.p_death));
    let survivors = state.targets.len();
    let births = poisson(&mut state.rng, params.lambda_birth * params.area_scale());
    for _ in 0..births {
        spawn(state, params);
    }
    let tau = params.tau;
    for t in &mut state.targets[..survivors] {
        for a in 0..2 {
            let mu = normal(&mut state.rng, params.sigma_a);
            t.position[a] += tau * t.velocity[a] + 0.5 * tau * tau * mu;
            t.velocity[a] += tau * mu;
        }
    }
    state.step += 1;
}

/// Draws the measurement set of the current step.
pub fn sense(state: &mut SimState, params: &SimParams) -> MeasurementFrame {
    let mut frame = MeasurementFrame::default();
    let r_max = params.sensor_range;
    let rng = &mut state.rng;
    for (j, s) in state.sensors.iter().enumerate() {
        for t in &state.targets {
            let (dx, dy) = (t.position[0] - s[0], t.position[1] - s[1]);
            let r = dx.hypot(dy);
            if r > r_max || !rng.gen_bool(params.p_detect) {
                continue;
            }
            let mut range = r + normal(rng, params.eta_r);
            let mut bearing = dy.atan2(dx) + normal(rng, params.eta_theta);
            if range < 0.0 {
                range = -range;
                bearing += std::f64::consts::PI;
            }
            frame.measurements.push(Measurement {
                sensor: j,
                range,
                bearing: wrap(bearing),
            });
            frame.clutter.push(false);
        }
        let n_clutter = poisson(rng, params.lambda_clutter);
        for _ in 0..n_clutter {
            let range = r_max * rng.gen::<f64>().sqrt();
            let bearing = wrap(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
            frame.measurements.push(Measurement { sensor: j, range, bearing });
            frame.clutter.push(true);
        }
    }
    frame
}

fn wrap(theta: f64) -> f64 {
    crate::raster::wrap_angle(theta)
}

/// Target image of the current state over the observation window.
pub fn target_image(state: &SimState, params: &SimParams) -> Result<IntensityImage> {
    rasterize_gaussian(&state.positions(), &params.window_spec()?, params.target_sigma)
}
