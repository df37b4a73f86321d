//! Deterministic synthetic renderer standing in for a real image simulator.
//!
//! The reference scenario (`head-pose`) maps three pose angles, an
//! illumination factor and two distractor intensities to a 26-dimensional
//! input. Labels are nine pose classes obtained by binning pitch and yaw.
//! Four hazard regions distort the apparent pose; the training sampler
//! rarely visits them, so a model trained on it fails there. The true pose
//! stays readable in two texture channels inside a hazard, so the failures
//! can be trained away given samples from the hazard.

use std::io::Write;
use std::sync::{Arc, OnceLock};
use std::thread;
use std::time::Duration;

use rand::Rng;

use crate::error::{Error, Result};
use crate::param_space::{format_value, random_chromosome, Chromosome, ParamKind, ParameterSpace, ParameterSpec};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Class(usize),
    Target(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelOutput {
    Class(usize),
    Target(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedSample {
    pub input: Vec<f64>,
    pub label: Label,
    pub chromosome: Chromosome,
}

impl RenderedSample {
    pub fn class(&self) -> Result<usize> {
        match self.label {
            Label::Class(k) => Ok(k),
            Label::Target(_) => Err(Error::Contract("regression sample has no class label".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Classification { classes: usize },
    Regression { target_dim: usize, threshold: f64 },
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub space: Arc<ParameterSpace>,
    pub input_dim: usize,
    pub task: Task,
    pub noise_free: bool,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        match self.task {
            Task::Classification { classes } if classes < 2 => {
                Err(Error::Config(format!("scenario `{}` needs at least 2 classes", self.name)))
            }
            Task::Regression { target_dim: 0, .. } => Err(Error::Config("regression target must be nonempty".into())),
            _ if self.input_dim == 0 => Err(Error::Config("input dimension must be positive".into())),
            _ => Ok(()),
        }
    }

    pub fn class_count(&self) -> Result<usize> {
        match self.task {
            Task::Classification { classes } => Ok(classes),
            Task::Regression { .. } => Err(Error::Contract("regression scenario has no classes".into())),
        }
    }
}

/// Anything that turns a chromosome into a labeled model input.
pub trait Simulator: Send + Sync {
    fn config(&self) -> &ScenarioConfig;

    fn render(&self, c: &Chromosome) -> Result<RenderedSample>;

    fn space(&self) -> &Arc<ParameterSpace> {
        &self.config().space
    }

    /// Distribution of the simulator training set.
    fn sample_training(&self, rng: &mut seed::Rng) -> Chromosome {
        random_chromosome(self.space(), rng)
    }

    /// Distribution standing in for field data (fine-tuning and test sets).
    fn sample_field(&self, rng: &mut seed::Rng) -> Chromosome {
        random_chromosome(self.space(), rng)
    }
}

/// True iff the model output is a failure for this sample.
pub fn ground_truth_failure(cfg: &ScenarioConfig, sample: &RenderedSample, output: &ModelOutput) -> Result<bool> {
    match (&cfg.task, &sample.label, output) {
        (Task::Classification { classes }, Label::Class(label), ModelOutput::Class(pred)) => {
            if pred >= classes {
                return Err(Error::Contract(format!("predicted class {pred} with {classes} classes")));
            }
            Ok(pred != label)
        }
        (Task::Regression { threshold, .. }, Label::Target(t), ModelOutput::Target(y)) => {
            if t.len() != y.len() {
                return Err(Error::DimensionMismatch {
                    expected: t.len(),
                    actual: y.len(),
                });
            }
            let err = t.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            Ok(err > *threshold)
        }
        _ => Err(Error::Contract("model output kind does not match scenario task".into())),
    }
}

/// Raw values as the renderer sees them: integers rounded.
pub fn simulator_values(c: &Chromosome) -> Vec<f64> {
    c.space()
        .specs()
        .iter()
        .zip(c.values())
        .map(|(s, v)| match s.kind {
            ParamKind::Integer => v.round(),
            _ => *v,
        })
        .collect()
}

/// Chromosome columns, input columns and the label.
pub fn write_samples_csv<W: Write>(samples: &[RenderedSample], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = samples.first() else {
        w.flush().map_err(|e| Error::io("csv", e))?;
        return Ok(());
    };
    let space = first.chromosome.space();
    let mut header: Vec<String> = space.names().map(str::to_string).collect();
    header.extend((0..first.input.len()).map(|i| format!("x{i}")));
    header.push("label".into());
    w.write_record(&header)?;
    for s in samples {
        let mut row: Vec<String> = space
            .specs()
            .iter()
            .zip(s.chromosome.values())
            .map(|(spec, v)| format_value(spec, *v))
            .collect();
        row.extend(s.input.iter().map(|v| v.to_string()));
        row.push(match &s.label {
            Label::Class(k) => k.to_string(),
            Label::Target(t) => t.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
        });
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("csv", e))?;
    Ok(())
}

pub const HEAD_POSE: &str = "head-pose";

/// Pitch, yaw and roll of the head, light intensity and two distractors.
pub const PITCH: usize = 0;
pub const YAW: usize = 1;
pub const ROLL: usize = 2;
pub const LIGHT: usize = 3;
pub const DISTRACTOR_A: usize = 4;
pub const DISTRACTOR_B: usize = 5;

const PITCH_EDGE: f64 = 10.0;
const YAW_EDGE: f64 = 20.0;
const FEATURES: usize = 16;
const MIXED: usize = 20;
const INPUT_DIM: usize = 26;
const MIXING_SEED: u64 = 0x5EDE_0001;

/// Axis-aligned hazard region. `low`/`high` bound the raw parameter values
/// where the hazard is fully active; it fades in over `ramp` units.
#[derive(Debug, Clone, Copy)]
struct Hazard {
    conditions: [(usize, Side, f64, f64); 2],
    /// Pose angle whose apparent value is scaled by `1 - strength * activation`:
    /// below 1 it collapses toward the centre, above 1 it mirrors.
    folds: usize,
    strength: f64,
}

#[derive(Debug, Clone, Copy)]
enum Side {
    Above,
    Below,
}

const HAZARDS: [Hazard; 4] = [
    // head turned right and rolled right
    Hazard {
        conditions: [(YAW, Side::Above, 35.0, 4.0), (ROLL, Side::Above, 35.0, 4.0)],
        folds: YAW,
        strength: 0.85,
    },
    // looking down under strong light
    Hazard {
        conditions: [(PITCH, Side::Below, -15.0, 2.0), (LIGHT, Side::Above, 1.25, 0.04)],
        folds: PITCH,
        strength: 0.85,
    },
    // head turned left behind an occluder
    Hazard {
        conditions: [(YAW, Side::Below, -35.0, 4.0), (DISTRACTOR_A, Side::Above, 0.7, 0.05)],
        folds: YAW,
        strength: 1.6,
    },
    // looking up and rolled left
    Hazard {
        conditions: [(PITCH, Side::Above, 15.0, 2.0), (ROLL, Side::Below, -35.0, 4.0)],
        folds: PITCH,
        strength: 1.6,
    },
];

/// Scale of the direct hazard signal in the rendered input.
const HAZARD_CUE: f64 = 0.5;
const TRAINING_HAZARD_WEIGHT: f64 = 0.002;

fn smoothstep(x: f64) -> f64 {
    let t = x.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

impl Hazard {
    fn activation(&self, v: &[f64]) -> f64 {
        self.conditions
            .iter()
            .map(|&(p, side, edge, ramp)| match side {
                Side::Above => smoothstep((v[p] - edge) / ramp),
                Side::Below => smoothstep((edge - v[p]) / ramp),
            })
            .product()
    }

    fn contains(&self, v: &[f64]) -> bool {
        self.conditions.iter().all(|&(p, side, edge, _)| match side {
            Side::Above => v[p] > edge,
            Side::Below => v[p] < edge,
        })
    }

}

/// The bundled nine-class pose scenario.
#[derive(Debug, Clone)]
pub struct HeadPoseScenario {
    config: ScenarioConfig,
    mixing: Arc<Vec<f64>>,
    distractor_a: [f64; 4],
    distractor_b: [f64; 4],
    render_delay: Duration,
}

fn mixing_matrix() -> Arc<Vec<f64>> {
    static M: OnceLock<Arc<Vec<f64>>> = OnceLock::new();
    M.get_or_init(|| {
        let mut rng = seed::rng(MIXING_SEED);
        let scale = 1.0 / (FEATURES as f64).sqrt();
        Arc::new((0..MIXED * FEATURES).map(|_| scale * rng.gen_range(-1.5..1.5)).collect())
    })
    .clone()
}

impl HeadPoseScenario {
    pub fn new() -> Self {
        Self::with_delay(Duration::ZERO)
    }

    /// Adds an artificial per-render sleep for rehearsing budgeted runs.
    pub fn with_delay(render_delay: Duration) -> Self {
        let space = ParameterSpace::new(vec![
            ParameterSpec::continuous("HeadPose_X", -30.0, 30.0),
            ParameterSpec::continuous("HeadPose_Y", -60.0, 60.0),
            ParameterSpec::continuous("HeadPose_Z", -60.0, 60.0),
            ParameterSpec::continuous("Light", 0.6, 1.4),
            ParameterSpec::continuous("Occluder", 0.0, 1.0),
            ParameterSpec::continuous("Clutter", 0.0, 1.0),
        ])
        .expect("reference space is valid");
        Self {
            config: ScenarioConfig {
                name: HEAD_POSE.into(),
                space,
                input_dim: INPUT_DIM,
                task: Task::Classification { classes: 9 },
                noise_free: true,
            },
            mixing: mixing_matrix(),
            distractor_a: [0.9, -0.6, 0.4, 0.2],
            distractor_b: [-0.3, 0.5, 0.7, -0.8],
            render_delay,
        }
    }

    pub fn hazard_count(&self) -> usize {
        HAZARDS.len()
    }

    /// Index of the hazard box containing `c`, if any.
    pub fn hazard_of(&self, c: &Chromosome) -> Option<usize> {
        HAZARDS.iter().position(|h| h.contains(c.values()))
    }

    /// Pitch class times three plus yaw class.
    pub fn label_of(values: &[f64]) -> usize {
        let bin = |v: f64, edge: f64| {
            if v < -edge {
                0
            } else if v > edge {
                2
            } else {
                1
            }
        };
        bin(values[PITCH], PITCH_EDGE) * 3 + bin(values[YAW], YAW_EDGE)
    }

    fn features(&self, v: &[f64]) -> [f64; FEATURES] {
        let activations: Vec<f64> = HAZARDS.iter().map(|h| h.activation(v)).collect();
        let mut pitch = v[PITCH];
        let mut yaw = v[YAW];
        for (h, a) in HAZARDS.iter().zip(&activations) {
            let fold = 1.0 - h.strength * a;
            match h.folds {
                PITCH => pitch *= fold,
                _ => yaw *= fold,
            }
        }
        let p = pitch.to_radians() * 2.0;
        let y = yaw.to_radians() * 1.5;
        let r = v[ROLL].to_radians();
        [
            p.sin(),
            p.cos(),
            y.sin(),
            y.cos(),
            r.sin(),
            r.cos(),
            p.sin() * y.cos(),
            y.sin() * p.cos(),
            (2.0 * p).sin(),
            (2.0 * y).sin(),
            r.sin() * y.sin(),
            (p + y).cos(),
            HAZARD_CUE * activations[0],
            HAZARD_CUE * activations[1],
            HAZARD_CUE * activations[2],
            HAZARD_CUE * activations[3],
        ]
    }
}

impl Default for HeadPoseScenario {
    fn default() -> Self {
        Self::new()
    }
}

impl Simulator for HeadPoseScenario {
    fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    fn render(&self, c: &Chromosome) -> Result<RenderedSample> {
        if !(Arc::ptr_eq(c.space(), &self.config.space) || **c.space() == *self.config.space) {
            return Err(Error::Contract("chromosome from a different parameter space".into()));
        }
        if !self.render_delay.is_zero() {
            thread::sleep(self.render_delay);
        }
        let v = simulator_values(c);
        let f = self.features(&v);
        let light = v[LIGHT];
        let mut input = Vec::with_capacity(INPUT_DIM);
        for row in self.mixing.chunks_exact(FEATURES) {
            input.push(light * row.iter().zip(&f).map(|(m, x)| m * x).sum::<f64>());
        }
        for (a, b) in self.distractor_a.iter().zip(&self.distractor_b) {
            input.push(v[DISTRACTOR_A] * a + v[DISTRACTOR_B] * b);
        }
        // distractors also bleed into the mixed channels
        for (i, x) in input.iter_mut().take(MIXED).enumerate() {
            let phase = i as f64 * 0.7;
            *x += 0.3 * v[DISTRACTOR_B] * phase.sin() + 0.2 * v[DISTRACTOR_A] * phase.cos();
        }
        // two texture channels; under a hazard they show the true pose instead
        let a = HAZARDS.iter().map(|h| h.activation(&v)).sum::<f64>().min(1.0);
        let texture = [
            (53.0 * v[DISTRACTOR_B] + 17.0 * v[ROLL].to_radians()).sin(),
            (41.0 * v[DISTRACTOR_A] + 29.0 * v[LIGHT]).sin(),
        ];
        input.push((1.0 - a) * texture[0] + a * v[PITCH] / 15.0);
        input.push((1.0 - a) * texture[1] + a * v[YAW] / 30.0);
        Ok(RenderedSample {
            input,
            label: Label::Class(Self::label_of(&v)),
            chromosome: c.clone(),
        })
    }

    /// Uniform, but a draw inside a hazard box is kept only rarely.
    fn sample_training(&self, rng: &mut seed::Rng) -> Chromosome {
        loop {
            let c = random_chromosome(&self.config.space, rng);
            if self.hazard_of(&c).is_none() || rng.gen::<f64>() < TRAINING_HAZARD_WEIGHT {
                return c;
            }
        }
    }

    /// Pose angles concentrated toward the frontal pose: the median of three
    /// uniforms, i.e. Beta(2, 2) over each range.
    fn sample_field(&self, rng: &mut seed::Rng) -> Chromosome {
        let mut values = random_chromosome(&self.config.space, rng).values().to_vec();
        for p in [PITCH, YAW, ROLL] {
            let spec = self.config.space.spec(p);
            let mut u = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            u.sort_by(f64::total_cmp);
            values[p] = spec.lower + u[1] * (spec.upper - spec.lower);
        }
        Chromosome::repaired(&self.config.space, values)
    }
}

/// Looks up a bundled scenario by name.
pub fn scenario(name: &str) -> Result<Arc<dyn Simulator>> {
    match name {
        HEAD_POSE => Ok(Arc::new(HeadPoseScenario::new())),
        other => Err(Error::Config(format!("unknown scenario `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chrom(sim: &HeadPoseScenario, v: [f64; 6]) -> Chromosome {
        Chromosome::new(sim.space(), v.to_vec()).unwrap()
    }

    #[test]
    fn render_is_deterministic() {
        let sim = HeadPoseScenario::new();
        let c = chrom(&sim, [3.0, -41.0, 12.0, 1.1, 0.2, 0.9]);
        let a = sim.render(&c).unwrap();
        let b = HeadPoseScenario::new().render(&c).unwrap();
        assert_eq!(a.input.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.input.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(a.input.len(), INPUT_DIM);
    }

    #[test]
    fn bin_centre_of_class_three() {
        let sim = HeadPoseScenario::new();
        // pitch middle bin, yaw left bin
        let s = sim.render(&chrom(&sim, [0.0, -40.0, 0.0, 1.0, 0.0, 0.0])).unwrap();
        assert_eq!(s.label, Label::Class(3));
    }

    #[test]
    fn sweep_reaches_every_class() {
        let sim = HeadPoseScenario::new();
        let mut seen = [false; 9];
        for i in 0..=24 {
            for j in 0..=24 {
                let pitch = -30.0 + 60.0 * i as f64 / 24.0;
                let yaw = -60.0 + 120.0 * j as f64 / 24.0;
                let s = sim.render(&chrom(&sim, [pitch, yaw, 0.0, 1.0, 0.5, 0.5])).unwrap();
                seen[s.class().unwrap()] = true;
            }
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn failure_predicate() {
        let sim = HeadPoseScenario::new();
        let s = sim.render(&chrom(&sim, [0.0, 0.0, 0.0, 1.0, 0.0, 0.0])).unwrap();
        let cfg = sim.config();
        assert!(!ground_truth_failure(cfg, &s, &ModelOutput::Class(4)).unwrap());
        assert!(ground_truth_failure(cfg, &s, &ModelOutput::Class(5)).unwrap());
        assert!(ground_truth_failure(cfg, &s, &ModelOutput::Target(vec![0.0])).is_err());
    }

    #[test]
    fn regression_threshold() {
        let space = ParameterSpace::new(vec![ParameterSpec::continuous("a", 0.0, 1.0)]).unwrap();
        let cfg = ScenarioConfig {
            name: "r".into(),
            space: space.clone(),
            input_dim: 1,
            task: Task::Regression { target_dim: 1, threshold: 4.0 },
            noise_free: true,
        };
        let s = RenderedSample {
            input: vec![0.0],
            label: Label::Target(vec![10.0]),
            chromosome: Chromosome::new(&space, vec![0.5]).unwrap(),
        };
        assert!(!ground_truth_failure(&cfg, &s, &ModelOutput::Target(vec![13.9])).unwrap());
        assert!(ground_truth_failure(&cfg, &s, &ModelOutput::Target(vec![14.1])).unwrap());
        assert!(ground_truth_failure(&cfg, &s, &ModelOutput::Target(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn samplers_shape_hazard_mass() {
        let sim = HeadPoseScenario::new();
        let mut rng = seed::rng(5);
        let n = 20_000;
        let train = (0..n).filter(|_| sim.hazard_of(&sim.sample_training(&mut rng)).is_some()).count();
        let field = (0..n).filter(|_| sim.hazard_of(&sim.sample_field(&mut rng)).is_some()).count();
        let uniform = (0..n)
            .filter(|_| sim.hazard_of(&random_chromosome(sim.space(), &mut rng)).is_some())
            .count();
        assert!(train * 20 < uniform, "{train} vs {uniform}");
        assert!(field * 2 < uniform, "{field} vs {uniform}");
    }

    #[test]
    fn unknown_scenario() {
        assert!(scenario("nope").is_err());
        assert!(scenario(HEAD_POSE).is_ok());
    }
}
