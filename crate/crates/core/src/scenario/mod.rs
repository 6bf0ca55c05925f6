//! Outlier-contaminated two-sensor tracking experiment.
//!
//! A target follows nearly-constant-velocity (NCV) motion in the plane with
//! state `[px, vx, py, vy]`. Process and measurement noise are Gaussian with
//! a standard deviation that switches to an outlier value with probability
//! `p_o`, independently per step, per channel and per sensor. The filters
//! model the noise as Student's t with the nominal parameters.
//!
//! Every method sees the same truth and measurements within a run, so
//! comparisons between methods are paired.

mod results;

pub use results::{ResultsTable, StepRow, SummaryRow};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::{Gaussian, StudentT};
use crate::error::{Error, Result};
use crate::filter::{MeasurementModel, ProcessModel};
use crate::fusion::{AaVariant, DofRule, FusionKind, FusionMethod};
use crate::linalg::check_dim;
use crate::network::{run_sequence, Belief, FilterKind, FusionConfig, SensorGraph, SensorNode};

/// Diagonal loading that makes the rank-2 NCV process covariance definite.
pub const PROCESS_JITTER: f64 = 1e-9;

/// Noise whose standard deviation is `outlier_sigma` with probability
/// `outlier_prob` and `nominal_sigma` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierNoiseSpec {
    pub nominal_sigma: f64,
    pub outlier_sigma: f64,
    pub outlier_prob: f64,
}

impl OutlierNoiseSpec {
    pub fn new(nominal_sigma: f64, outlier_sigma: f64, outlier_prob: f64) -> Result<Self> {
        let spec = Self {
            nominal_sigma,
            outlier_sigma,
            outlier_prob,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nominal_sigma > 0.0) || !self.nominal_sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "nominal_sigma must be positive, got {}",
                self.nominal_sigma
            )));
        }
        if !(self.outlier_sigma >= self.nominal_sigma) || !self.outlier_sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "outlier_sigma must be at least nominal_sigma, got {}",
                self.outlier_sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.outlier_prob) {
            return Err(Error::InvalidParameter(format!(
                "outlier_prob must lie in [0, 1], got {}",
                self.outlier_prob
            )));
        }
        Ok(())
    }
}

/// One draw of the switching rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseDraw {
    pub sigma: f64,
    pub outlier: bool,
}

pub fn sample_outlier<R: Rng + ?Sized>(spec: &OutlierNoiseSpec, rng: &mut R) -> NoiseDraw {
    let outlier = rng.random::<f64>() < spec.outlier_prob;
    NoiseDraw {
        sigma: if outlier { spec.outlier_sigma } else { spec.nominal_sigma },
        outlier,
    }
}

pub fn sample_outlier_sigma<R: Rng + ?Sized>(spec: &OutlierNoiseSpec, rng: &mut R) -> f64 {
    sample_outlier(spec, rng).sigma
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    /// Observation matrix, one row per measured component.
    pub h: Vec<Vec<f64>>,
    pub noise: OutlierNoiseSpec,
}

impl SensorSpec {
    pub fn position_sensor(noise: OutlierNoiseSpec) -> Self {
        Self {
            h: vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]],
            noise,
        }
    }

    pub fn observation(&self) -> Result<DMatrix<f64>> {
        matrix_from_rows(&self.h, "sensor h")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterDofs {
    pub nu0: f64,
    pub nu_q: f64,
    pub nu_r: f64,
}

impl Default for FilterDofs {
    fn default() -> Self {
        Self {
            nu0: 3.0,
            nu_q: 3.0,
            nu_r: 3.0,
        }
    }
}

/// How the nominal noise covariances become StKF noise scale matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScaleConvention {
    /// The nominal covariance is used directly as the scale matrix.
    #[default]
    Covariance,
    /// Scale `(ν−2)/ν` times the nominal covariance, so the t noise has the nominal covariance.
    MatchCovariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub initial_mean: Vec<f64>,
    pub initial_cov: Vec<Vec<f64>>,
    pub delta_t: f64,
    pub process_noise: OutlierNoiseSpec,
    pub sensors: Vec<SensorSpec>,
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub filter_dofs: FilterDofs,
    pub noise_scale: NoiseScaleConvention,
    pub consensus_iterations: usize,
    /// Switches off all process and measurement noise (the initial state is still random).
    pub noiseless: bool,
    /// Worker threads for Monte Carlo runs; 0 lets the thread pool decide.
    pub parallel: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let p_o = 0.05;
        Self {
            initial_mean: vec![1000.0, 20.0, 1000.0, 0.0],
            initial_cov: diag_rows(&[500.0, 50.0, 500.0, 50.0]),
            delta_t: 1.0,
            process_noise: OutlierNoiseSpec {
                nominal_sigma: 5.0,
                outlier_sigma: 50.0,
                outlier_prob: p_o,
            },
            sensors: vec![
                SensorSpec::position_sensor(OutlierNoiseSpec {
                    nominal_sigma: 20.0,
                    outlier_sigma: 200.0,
                    outlier_prob: p_o,
                }),
                SensorSpec::position_sensor(OutlierNoiseSpec {
                    nominal_sigma: 10.0,
                    outlier_sigma: 100.0,
                    outlier_prob: p_o,
                }),
            ],
            steps: 100,
            runs: 1000,
            seed: 1,
            filter_dofs: FilterDofs::default(),
            noise_scale: NoiseScaleConvention::Covariance,
            consensus_iterations: 1,
            noiseless: false,
            parallel: 0,
        }
    }
}

fn diag_rows(d: &[f64]) -> Vec<Vec<f64>> {
    (0..d.len())
        .map(|i| (0..d.len()).map(|j| if i == j { d[i] } else { 0.0 }).collect())
        .collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    if r == 0 {
        return Err(Error::Empty(what));
    }
    let c = rows[0].len();
    for row in rows {
        check_dim(what, c, row.len())?;
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// NCV transition matrix for state `[px, vx, py, vy]`.
pub fn ncv_transition(dt: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            1.0, dt, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, dt, //
            0.0, 0.0, 0.0, 1.0,
        ],
    )
}

/// NCV acceleration-noise gain.
pub fn ncv_noise_gain(dt: f64) -> DMatrix<f64> {
    let h = dt * dt / 2.0;
    DMatrix::from_row_slice(4, 2, &[h, 0.0, dt, 0.0, 0.0, h, 0.0, dt])
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        check_dim("initial_mean", 4, self.initial_mean.len())?;
        let p0 = matrix_from_rows(&self.initial_cov, "initial_cov")?;
        check_dim("initial_cov rows", 4, p0.nrows())?;
        check_dim("initial_cov cols", 4, p0.ncols())?;
        Gaussian::new(self.mean0(), p0)?;
        if !(self.delta_t > 0.0) {
            return Err(Error::InvalidParameter("delta_t must be positive".into()));
        }
        self.process_noise.validate()?;
        if self.sensors.is_empty() {
            return Err(Error::Empty("sensors"));
        }
        for s in &self.sensors {
            s.noise.validate()?;
            let h = s.observation()?;
            check_dim("sensor h columns", 4, h.ncols())?;
        }
        if self.steps == 0 || self.runs == 0 {
            return Err(Error::InvalidParameter("steps and runs must be at least 1".into()));
        }
        if self.consensus_iterations == 0 {
            return Err(Error::InvalidParameter("consensus_iterations must be at least 1".into()));
        }
        let d = self.filter_dofs;
        for (name, v) in [("nu0", d.nu0), ("nu_q", d.nu_q), ("nu_r", d.nu_r)] {
            if !(v > 2.0) {
                return Err(Error::InvalidParameter(format!("{name} must exceed 2, got {v}")));
            }
        }
        Ok(())
    }

    /// The same configuration with every channel's outlier probability set to `p_o`.
    pub fn with_outlier_prob(&self, p_o: f64) -> Self {
        let mut cfg = self.clone();
        cfg.process_noise.outlier_prob = p_o;
        for s in &mut cfg.sensors {
            s.noise.outlier_prob = p_o;
        }
        cfg
    }

    fn mean0(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.initial_mean)
    }

    fn cov0(&self) -> Result<DMatrix<f64>> {
        matrix_from_rows(&self.initial_cov, "initial_cov")
    }

    /// Nominal process-noise covariance `G (r² I) Gᵀ + jitter·I`.
    pub fn nominal_process_cov(&self) -> DMatrix<f64> {
        let g = ncv_noise_gain(self.delta_t);
        let r2 = self.process_noise.nominal_sigma.powi(2);
        &g * g.transpose() * r2 + DMatrix::identity(4, 4) * PROCESS_JITTER
    }

    fn noise_scale(&self, cov: DMatrix<f64>, dof: f64) -> DMatrix<f64> {
        match self.noise_scale {
            NoiseScaleConvention::Covariance => cov,
            NoiseScaleConvention::MatchCovariance => cov * ((dof - 2.0) / dof),
        }
    }

    /// NCV process model as seen by a filter of the given kind.
    pub fn process_model(&self, kind: FilterKind) -> Result<ProcessModel> {
        let q = self.nominal_process_cov();
        let q = match kind {
            FilterKind::StKF => self.noise_scale(q, self.filter_dofs.nu_q),
            FilterKind::KF => q,
        };
        ProcessModel::linear(ncv_transition(self.delta_t), q, self.filter_dofs.nu_q)
    }

    /// Nominal measurement model of one sensor.
    pub fn measurement_model(&self, sensor: usize, kind: FilterKind) -> Result<MeasurementModel> {
        let spec = &self.sensors[sensor];
        let h = spec.observation()?;
        let r = DMatrix::identity(h.nrows(), h.nrows()) * spec.noise.nominal_sigma.powi(2);
        let r = match kind {
            FilterKind::StKF => self.noise_scale(r, self.filter_dofs.nu_r),
            FilterKind::KF => r,
        };
        MeasurementModel::linear(h, r, self.filter_dofs.nu_r)
    }

    /// Filter prior built from the initial mean and covariance.
    pub fn initial_belief(&self, kind: FilterKind) -> Result<Belief> {
        let p0 = self.cov0()?;
        Ok(match kind {
            FilterKind::KF => Belief::G(Gaussian::new(self.mean0(), p0)?),
            FilterKind::StKF => {
                let nu = self.filter_dofs.nu0;
                Belief::T(StudentT::new(self.mean0(), p0 * ((nu - 2.0) / nu), nu)?)
            }
        })
    }
}

/// Independent random streams of one Monte Carlo run.
#[derive(Debug, Clone, Copy)]
pub struct RunRng {
    seed: u64,
}

impl RunRng {
    const INITIAL: u64 = 0;
    const PROCESS: u64 = 1;
    const PROCESS_SWITCH: u64 = 2;

    pub fn new(seed: u64, run_index: usize) -> Self {
        Self {
            seed: splitmix64(seed) ^ run_index as u64,
        }
    }

    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(id);
        rng
    }

    fn sensor_noise(&self, sensor: usize) -> ChaCha8Rng {
        self.stream(3 + 2 * sensor as u64)
    }

    fn sensor_switch(&self, sensor: usize) -> ChaCha8Rng {
        self.stream(4 + 2 * sensor as u64)
    }
}

/// Scrambles the configured seed so nearby seeds give disjoint run seeds.
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// True states `x₀ … x_steps`.
pub fn generate_truth(cfg: &ScenarioConfig, run_index: usize) -> Result<Vec<DVector<f64>>> {
    let streams = RunRng::new(cfg.seed, run_index);
    let mut init = streams.stream(RunRng::INITIAL);
    let mut noise = streams.stream(RunRng::PROCESS);
    let mut switch = streams.stream(RunRng::PROCESS_SWITCH);

    let l0 = crate::linalg::spd_cholesky(&cfg.cov0()?, "initial_cov")?.l();
    let f = ncv_transition(cfg.delta_t);
    let g = ncv_noise_gain(cfg.delta_t);

    let mut x = cfg.mean0() + l0 * normal_vec(&mut init, 4);
    let mut truth = Vec::with_capacity(cfg.steps + 1);
    truth.push(x.clone());
    for _ in 0..cfg.steps {
        let r = sample_outlier_sigma(&cfg.process_noise, &mut switch);
        let u = normal_vec(&mut noise, 2) * r;
        x = &f * &x;
        if !cfg.noiseless {
            x += &g * u;
        }
        truth.push(x.clone());
    }
    Ok(truth)
}

/// Per-step, per-sensor measurements with their outlier indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    /// `z[k][s]`: sensor `s` observing `truth[k + 1]`.
    pub z: Vec<Vec<DVector<f64>>>,
    pub outlier: Vec<Vec<bool>>,
}

/// Measurements of `truth[1..]` by every sensor.
pub fn generate_measurements(
    truth: &[DVector<f64>],
    sensors: &[SensorSpec],
    streams: &RunRng,
    noiseless: bool,
) -> Result<MeasurementSet> {
    let steps = truth.len().saturating_sub(1);
    let mut z = vec![Vec::with_capacity(sensors.len()); steps];
    let mut outlier = vec![Vec::with_capacity(sensors.len()); steps];
    for (s, spec) in sensors.iter().enumerate() {
        let h = spec.observation()?;
        let mut noise = streams.sensor_noise(s);
        let mut switch = streams.sensor_switch(s);
        for k in 0..steps {
            check_dim("sensor h columns", truth[k + 1].len(), h.ncols())?;
            let draw = sample_outlier(&spec.noise, &mut switch);
            let v = normal_vec(&mut noise, h.nrows()) * draw.sigma;
            let mut zk = &h * &truth[k + 1];
            if !noiseless {
                zk += v;
            }
            z[k].push(zk);
            outlier[k].push(draw.outlier && !noiseless);
        }
    }
    Ok(MeasurementSet { z, outlier })
}

/// State components scored by [`rmse`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    Position,
    Velocity,
}

impl Component {
    pub fn indices(self) -> [usize; 2] {
        match self {
            Component::Position => [0, 2],
            Component::Velocity => [1, 3],
        }
    }

    fn squared_error(self, estimate: &DVector<f64>, truth: &DVector<f64>) -> f64 {
        self.indices()
            .iter()
            .map(|&i| (estimate[i] - truth[i]).powi(2))
            .sum()
    }
}

/// Per-time RMSE over runs: `estimates[run][k]` against `truths[run][k]`.
pub fn rmse(
    estimates: &[Vec<DVector<f64>>],
    truths: &[Vec<DVector<f64>>],
    component: Component,
) -> Result<Vec<f64>> {
    if estimates.is_empty() {
        return Err(Error::Empty("estimates"));
    }
    check_dim("rmse runs", estimates.len(), truths.len())?;
    let steps = estimates[0].len();
    for (e, t) in estimates.iter().zip(truths) {
        check_dim("rmse steps", steps, e.len())?;
        check_dim("rmse steps", steps, t.len())?;
    }
    let m = estimates.len() as f64;
    Ok((0..steps)
        .map(|k| {
            let total: f64 = estimates
                .iter()
                .zip(truths)
                .map(|(e, t)| component.squared_error(&e[k], &t[k]))
                .sum();
            (total / m).sqrt()
        })
        .collect())
}

/// A filter/fusion combination evaluated by [`run_experiment`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Method {
    pub name: String,
    pub filter_kind: FilterKind,
    /// `None` runs a noncooperative filter on sensor 1 only.
    pub fusion: Option<FusionMethod>,
}

/// Method names accepted by [`Method::parse`].
pub const METHOD_NAMES: [&str; 10] = [
    "stkf-aa",
    "stkf-aa-uniform",
    "stkf-ci",
    "stkf-am",
    "stkf-single",
    "kf-aa",
    "kf-aa-uniform",
    "kf-ci",
    "kf-am",
    "kf-single",
];

impl Method {
    pub fn parse(name: &str, aa_variant: AaVariant, dof_rule: DofRule) -> Result<Self> {
        let (filter_kind, rest) = if let Some(r) = name.strip_prefix("stkf-") {
            (FilterKind::StKF, r)
        } else if let Some(r) = name.strip_prefix("kf-") {
            (FilterKind::KF, r)
        } else {
            return Err(Error::InvalidParameter(format!("unknown method '{name}'")));
        };
        let kind = match rest {
            "single" => None,
            "aa" => Some(match aa_variant {
                AaVariant::V1 => FusionKind::AaSuboptV1,
                AaVariant::V2 => FusionKind::AaSuboptV2,
            }),
            "aa-uniform" => Some(FusionKind::AaUniform),
            "ci" => Some(FusionKind::Ci),
            "am" => Some(FusionKind::Am),
            _ => return Err(Error::InvalidParameter(format!("unknown method '{name}'"))),
        };
        Ok(Self {
            name: name.to_string(),
            filter_kind,
            fusion: kind.map(|k| FusionMethod::new(k, dof_rule)),
        })
    }

    /// All ten methods with the default AA variant and dof rule.
    pub fn all() -> Vec<Self> {
        METHOD_NAMES
            .iter()
            .map(|n| Self::parse(n, AaVariant::default(), DofRule::default()).expect("known name"))
            .collect()
    }

    fn is_aa(&self) -> bool {
        self.fusion.map(|f| f.kind.is_aa()).unwrap_or(false)
    }
}

/// Per-method results of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodReport {
    pub name: String,
    pub position_rmse: Vec<f64>,
    pub velocity_rmse: Vec<f64>,
    /// `mean_weights[k][s]`: run-averaged AA weight of sensor `s` at step `k`.
    pub mean_weights: Option<Vec<Vec<f64>>>,
    pub avg_position_rmse: f64,
    pub avg_velocity_rmse: f64,
    /// Time-and-run mean AA weight of the first sensor.
    pub mean_weight_sensor_1: Option<f64>,
    pub included_runs: usize,
    /// Runs dropped because the estimate diverged (non-finite or failed filter).
    pub excluded_runs: usize,
}

/// Outlier bookkeeping of the generated measurements.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OutlierStats {
    /// Run-steps observed (runs × steps).
    pub steps: usize,
    /// Run-steps in which at least one sensor drew an outlier.
    pub stacked_outlier_steps: usize,
    /// Per-sensor outlier counts.
    pub sensor_outlier_steps: Vec<usize>,
}

impl OutlierStats {
    pub fn stacked_frequency(&self) -> f64 {
        self.stacked_outlier_steps as f64 / self.steps as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    /// Outlier probability of the process channel.
    pub outlier_prob: f64,
    pub runs: usize,
    pub steps: usize,
    pub methods: Vec<MethodReport>,
    pub outliers: OutlierStats,
}

impl RunReport {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }
}

/// Squared errors of one method in one run, or `None` if it diverged.
struct MethodRun {
    sq_pos: Vec<f64>,
    sq_vel: Vec<f64>,
    weights: Option<Vec<Vec<f64>>>,
}

struct RunOutcome {
    methods: Vec<Option<MethodRun>>,
    outlier: Vec<Vec<bool>>,
}

fn run_method(
    cfg: &ScenarioConfig,
    method: &Method,
    truth: &[DVector<f64>],
    meas: &MeasurementSet,
) -> Result<MethodRun> {
    let pm = cfg.process_model(method.filter_kind)?;
    let belief = cfg.initial_belief(method.filter_kind)?;
    let sensors: Vec<usize> = match method.fusion {
        None => vec![0],
        Some(_) => (0..cfg.sensors.len()).collect(),
    };
    let nodes = sensors
        .iter()
        .map(|&s| SensorNode::new(s, belief.clone(), cfg.measurement_model(s, method.filter_kind)?, pm.clone()))
        .collect::<Result<Vec<_>>>()?;
    let graph = SensorGraph::complete(nodes.len(), cfg.consensus_iterations)?;
    let fusion = FusionConfig {
        // A lone node never fuses; any AA kind is a no-op placeholder.
        method: method
            .fusion
            .unwrap_or(FusionMethod::new(FusionKind::AaUniform, DofRule::Average)),
        filter_kind: method.filter_kind,
    };
    let zs: Vec<Vec<DVector<f64>>> = meas
        .z
        .iter()
        .map(|zk| sensors.iter().map(|&s| zk[s].clone()).collect())
        .collect();
    let history = run_sequence(&nodes, &graph, &fusion, &zs)?;

    let mut sq_pos = Vec::with_capacity(zs.len());
    let mut sq_vel = Vec::with_capacity(zs.len());
    for (k, beliefs) in history.beliefs.iter().enumerate() {
        let est = beliefs[0].mean();
        if est.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite estimate at step {}", k + 1)));
        }
        sq_pos.push(Component::Position.squared_error(est, &truth[k + 1]));
        sq_vel.push(Component::Velocity.squared_error(est, &truth[k + 1]));
    }
    let weights = method.is_aa().then(|| {
        history
            .weights
            .iter()
            .map(|w| w[0].as_ref().map(|w| w.as_slice().to_vec()).unwrap_or_default())
            .collect()
    });
    Ok(MethodRun {
        sq_pos,
        sq_vel,
        weights,
    })
}

fn run_once(cfg: &ScenarioConfig, methods: &[Method], run_index: usize) -> Result<RunOutcome> {
    let truth = generate_truth(cfg, run_index)?;
    let streams = RunRng::new(cfg.seed, run_index);
    let meas = generate_measurements(&truth, &cfg.sensors, &streams, cfg.noiseless)?;
    let methods = methods
        .iter()
        .map(|m| run_method(cfg, m, &truth, &meas).ok())
        .collect();
    Ok(RunOutcome {
        methods,
        outlier: meas.outlier,
    })
}

fn time_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Monte Carlo evaluation of `methods` on `cfg.runs` paired runs.
pub fn run_experiment(cfg: &ScenarioConfig, methods: &[Method]) -> Result<RunReport> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::Empty("methods"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let outcomes: Vec<RunOutcome> = pool.install(|| {
        (0..cfg.runs)
            .into_par_iter()
            .map(|r| run_once(cfg, methods, r))
            .collect::<Result<Vec<_>>>()
    })?;

    // Reduction in run order keeps the result independent of scheduling.
    let steps = cfg.steps;
    let sensors = cfg.sensors.len();
    let mut outliers = OutlierStats {
        sensor_outlier_steps: vec![0; sensors],
        ..Default::default()
    };
    for o in &outcomes {
        for flags in &o.outlier {
            outliers.steps += 1;
            if flags.iter().any(|f| *f) {
                outliers.stacked_outlier_steps += 1;
            }
            for (s, f) in flags.iter().enumerate() {
                outliers.sensor_outlier_steps[s] += usize::from(*f);
            }
        }
    }

    let mut reports = Vec::with_capacity(methods.len());
    for (mi, method) in methods.iter().enumerate() {
        let mut sum_pos = vec![0.0; steps];
        let mut sum_vel = vec![0.0; steps];
        let mut sum_w = vec![vec![0.0; sensors]; steps];
        let (mut included, mut excluded) = (0usize, 0usize);
        for o in &outcomes {
            match &o.methods[mi] {
                Some(run) => {
                    included += 1;
                    for k in 0..steps {
                        sum_pos[k] += run.sq_pos[k];
                        sum_vel[k] += run.sq_vel[k];
                        if let Some(w) = &run.weights {
                            for (acc, wi) in sum_w[k].iter_mut().zip(&w[k]) {
                                *acc += wi;
                            }
                        }
                    }
                }
                None => excluded += 1,
            }
        }
        let denom = included.max(1) as f64;
        let position_rmse: Vec<f64> = sum_pos.iter().map(|s| (s / denom).sqrt()).collect();
        let velocity_rmse: Vec<f64> = sum_vel.iter().map(|s| (s / denom).sqrt()).collect();
        let mean_weights = method.is_aa().then(|| {
            sum_w
                .iter()
                .map(|row| row.iter().map(|s| s / denom).collect::<Vec<f64>>())
                .collect::<Vec<_>>()
        });
        let mean_weight_sensor_1 = mean_weights
            .as_ref()
            .map(|w| time_mean(&w.iter().map(|row| row[0]).collect::<Vec<_>>()));
        reports.push(MethodReport {
            name: method.name.clone(),
            avg_position_rmse: time_mean(&position_rmse),
            avg_velocity_rmse: time_mean(&velocity_rmse),
            position_rmse,
            velocity_rmse,
            mean_weights,
            mean_weight_sensor_1,
            included_runs: included,
            excluded_runs: excluded,
        });
    }

    Ok(RunReport {
        outlier_prob: cfg.process_noise.outlier_prob,
        runs: cfg.runs,
        steps,
        methods: reports,
        outliers,
    })
}

/// Runs [`run_experiment`] once per outlier probability.
pub fn run_sweep(cfg: &ScenarioConfig, methods: &[Method], outlier_probs: &[f64]) -> Result<Vec<RunReport>> {
    outlier_probs
        .iter()
        .map(|&p| run_experiment(&cfg.with_outlier_prob(p), methods))
        .collect()
}
