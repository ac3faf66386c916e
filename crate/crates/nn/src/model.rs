//! Model specs, demographic feature encoding, and the trained-model
//! container tying parameters, running statistics, and normalization
//! together.

use pulsebench_core::dataset::{Sex, SubjectDemographics};
use pulsebench_core::rng::Rng;

use crate::build::{forward_network, CreateStore, FetchStore, Mode, BN_MOMENTUM};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::params::ParamSet;

/// Seed stream for parameter initialization (distinct from the data
/// generator's streams).
const INIT_STREAM: u64 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backbone {
    LeNet1d,
    XResNet18,
    XResNet50,
    Inception1d,
    S4,
}

impl Backbone {
    pub const ALL: [Backbone; 5] = [
        Backbone::LeNet1d,
        Backbone::XResNet18,
        Backbone::XResNet50,
        Backbone::Inception1d,
        Backbone::S4,
    ];

    pub fn code(&self) -> &'static str {
        match self {
            Backbone::LeNet1d => "lenet1d",
            Backbone::XResNet18 => "xresnet18_1d",
            Backbone::XResNet50 => "xresnet50_1d",
            Backbone::Inception1d => "inception1d",
            Backbone::S4 => "s4_1d",
        }
    }

    pub fn parse(s: &str) -> Result<Backbone> {
        Backbone::ALL
            .into_iter()
            .find(|b| b.code() == s)
            .ok_or_else(|| Error::spec(format!("unknown backbone {s:?}")))
    }
}

impl std::fmt::Display for Backbone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Sbp,
    Dbp,
}

impl Target {
    pub fn code(&self) -> &'static str {
        match self {
            Target::Sbp => "sbp",
            Target::Dbp => "dbp",
        }
    }

    pub fn parse(s: &str) -> Result<Target> {
        match s {
            "sbp" => Ok(Target::Sbp),
            "dbp" => Ok(Target::Dbp),
            _ => Err(Error::spec(format!("unknown target {s:?}"))),
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// Everything that determines a model's parameter shapes and initial values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub backbone: Backbone,
    pub use_demographics: bool,
    pub target: Target,
    pub input_length: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_length == 0 {
            return Err(Error::spec("input_length must be at least 1"));
        }
        Ok(())
    }

    /// Flat key=value block embedded in checkpoints; fixed key order keeps
    /// serialized models byte-deterministic.
    pub fn to_text(&self) -> String {
        format!(
            "backbone={}\nuse_demographics={}\ntarget={}\ninput_length={}\nseed={}\n",
            self.backbone.code(),
            self.use_demographics,
            self.target.code(),
            self.input_length,
            self.seed
        )
    }

    pub fn parse_text(text: &str) -> Result<ModelSpec> {
        let mut backbone = None;
        let mut use_demographics = None;
        let mut target = None;
        let mut input_length = None;
        let mut seed = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::spec(format!("spec line {line:?} is not key=value")))?;
            match key {
                "backbone" => backbone = Some(Backbone::parse(value)?),
                "use_demographics" => {
                    use_demographics = Some(value.parse::<bool>().map_err(|_| {
                        Error::spec(format!("use_demographics must be true/false, got {value:?}"))
                    })?)
                }
                "target" => target = Some(Target::parse(value)?),
                "input_length" => {
                    input_length = Some(value.parse::<usize>().map_err(|_| {
                        Error::spec(format!("input_length must be an integer, got {value:?}"))
                    })?)
                }
                "seed" => {
                    seed = Some(value.parse::<u64>().map_err(|_| {
                        Error::spec(format!("seed must be an integer, got {value:?}"))
                    })?)
                }
                _ => return Err(Error::spec(format!("unknown spec key {key:?}"))),
            }
        }
        let spec = ModelSpec {
            backbone: backbone.ok_or_else(|| Error::spec("spec lacks backbone"))?,
            use_demographics: use_demographics
                .ok_or_else(|| Error::spec("spec lacks use_demographics"))?,
            target: target.ok_or_else(|| Error::spec("spec lacks target"))?,
            input_length: input_length.ok_or_else(|| Error::spec("spec lacks input_length"))?,
            seed: seed.ok_or_else(|| Error::spec("spec lacks seed"))?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Train-set standardization constants for age and BMI. Computed from
/// training subjects only so evaluation never leaks test statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub age_mean: f64,
    pub age_sd: f64,
    pub bmi_mean: f64,
    pub bmi_sd: f64,
}

impl NormStats {
    /// Pass-through standardization (mean 0, sd 1).
    pub fn identity() -> Self {
        NormStats {
            age_mean: 0.0,
            age_sd: 1.0,
            bmi_mean: 0.0,
            bmi_sd: 1.0,
        }
    }

    pub fn from_subjects<'a>(subjects: impl IntoIterator<Item = &'a SubjectDemographics>) -> Result<Self> {
        let mut ages = Vec::new();
        let mut bmis = Vec::new();
        for s in subjects {
            ages.push(s.age as f64);
            if let Some(b) = s.bmi {
                bmis.push(b);
            }
        }
        if ages.is_empty() {
            return Err(Error::spec("normalization stats need at least one subject"));
        }
        let age = pulsebench_core::curation::mean_sd(&ages);
        let bmi = if bmis.is_empty() {
            // No BMI anywhere: identity scaling; multimodal encoding will
            // fail per subject with MissingBmi before these matter.
            pulsebench_core::curation::MeanSd { mean: 0.0, sd: 1.0 }
        } else {
            pulsebench_core::curation::mean_sd(&bmis)
        };
        // A constant feature standardizes to zero rather than dividing by 0.
        let guard = |sd: f64| if sd > 0.0 { sd } else { 1.0 };
        Ok(NormStats::from_array([
            age.mean,
            guard(age.sd),
            bmi.mean,
            guard(bmi.sd),
        ]))
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.age_mean, self.age_sd, self.bmi_mean, self.bmi_sd]
    }

    /// Values are rounded to 32-bit precision on the way in so in-memory
    /// statistics always equal what a checkpoint (which stores tensors as
    /// 32-bit floats) will restore.
    pub fn from_array(a: [f64; 4]) -> Self {
        let q = |v: f64| v as f32 as f64;
        NormStats {
            age_mean: q(a[0]),
            age_sd: q(a[1]),
            bmi_mean: q(a[2]),
            bmi_sd: q(a[3]),
        }
    }
}

pub fn sex_code(sex: Sex) -> f64 {
    match sex {
        Sex::Female => 0.0,
        Sex::Male => 1.0,
    }
}

/// Raw width-3 demographic features: (standardized age, sex code,
/// standardized BMI). The in-model encoder maps these to the 16-wide
/// embedding.
pub fn demographic_features(d: &SubjectDemographics, norm: &NormStats) -> Result<[f64; 3]> {
    let bmi = d.bmi.ok_or_else(|| Error::MissingBmi {
        subject_id: d.subject_id.clone(),
    })?;
    Ok([
        (d.age as f64 - norm.age_mean) / norm.age_sd,
        sex_code(d.sex),
        (bmi - norm.bmi_mean) / norm.bmi_sd,
    ])
}

/// One training step's outcome: scalar loss plus gradients aligned with the
/// model's parameter order.
pub struct TrainBatch {
    pub loss: f64,
    pub grads: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamSet<f32>,
    pub state: ParamSet<f32>,
    pub norm: NormStats,
}

impl Model {
    /// Builds and deterministically initializes every tensor the spec
    /// implies. Identical (spec, seed) always yield identical parameters.
    pub fn new(spec: ModelSpec, norm: NormStats) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::new(Rng::derive_seed(spec.seed, INIT_STREAM, 0));
        let mut params = ParamSet::new();
        let mut state = ParamSet::new();
        let mut g: Graph<f32> = Graph::new();
        let zeros = vec![0.0f32; spec.input_length];
        let demo = if spec.use_demographics {
            Some(vec![0.0f32; 3])
        } else {
            None
        };
        let mut store = CreateStore {
            params: &mut params,
            state: &mut state,
            rng: &mut rng,
        };
        forward_network(
            &mut g,
            &spec,
            &mut store,
            Mode::Eval,
            false,
            &zeros,
            1,
            demo.as_deref(),
        )?;
        Ok(Model {
            spec,
            params,
            state,
            norm,
        })
    }

    /// Trainable scalar count (running statistics excluded).
    pub fn param_count(&self) -> usize {
        self.params.total_values()
    }

    /// Deterministic eval-mode predictions, one per batch row.
    pub fn predict_batch(&self, ppg: &[f32], batch: usize, demos: Option<&[f32]>) -> Result<Vec<f32>> {
        let mut g: Graph<f32> = Graph::new();
        let mut store = FetchStore {
            params: &self.params,
            state: &self.state,
        };
        let pass = forward_network(&mut g, &self.spec, &mut store, Mode::Eval, false, ppg, batch, demos)?;
        Ok(g.value(pass.output).to_vec())
    }

    /// One train-mode forward/backward: returns the batch loss and gradients
    /// in parameter order, and folds batch statistics into the running
    /// statistics.
    pub fn train_batch(
        &mut self,
        ppg: &[f32],
        batch: usize,
        demos: Option<&[f32]>,
        targets: &[f32],
    ) -> Result<TrainBatch> {
        let (loss, grads, updates) = {
            let mut g: Graph<f32> = Graph::new();
            let mut store = FetchStore {
                params: &self.params,
                state: &self.state,
            };
            let pass =
                forward_network(&mut g, &self.spec, &mut store, Mode::Train, true, ppg, batch, demos)?;
            let loss = g.mse_loss(pass.output, targets)?;
            g.backward(loss)?;
            let by_name: std::collections::HashMap<&str, crate::graph::NodeId> = pass
                .param_nodes
                .iter()
                .map(|(n, id)| (n.as_str(), *id))
                .collect();
            let mut grads = Vec::with_capacity(self.params.len());
            for i in 0..self.params.len() {
                let name = &self.params.entry(i).name;
                let id = by_name
                    .get(name.as_str())
                    .ok_or_else(|| Error::spec(format!("forward pass never used tensor {name}")))?;
                grads.push(g.grad(*id).to_vec());
            }
            (g.value(loss)[0] as f64, grads, pass.bn_updates)
        };
        for u in updates {
            // Running variance uses the unbiased batch estimate, running mean
            // the plain batch mean; both blend with momentum.
            let bessel = if u.count > 1 {
                u.count as f64 / (u.count as f64 - 1.0)
            } else {
                1.0
            };
            let mom = BN_MOMENTUM;
            let rm = self
                .state
                .get_mut(&format!("{}.running_mean", u.name))
                .ok_or_else(|| Error::spec(format!("no running mean for {}", u.name)))?;
            for (r, &m) in rm.values.iter_mut().zip(&u.mean) {
                *r = ((1.0 - mom) * *r as f64 + mom * m as f64) as f32;
            }
            let rv = self
                .state
                .get_mut(&format!("{}.running_var", u.name))
                .ok_or_else(|| Error::spec(format!("no running variance for {}", u.name)))?;
            for (r, &v) in rv.values.iter_mut().zip(&u.var) {
                *r = ((1.0 - mom) * *r as f64 + mom * v as f64 * bessel) as f32;
            }
        }
        Ok(TrainBatch { loss, grads })
    }
}
