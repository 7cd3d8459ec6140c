use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use qoctl_core::analytic::SynthesisOptions;
use qoctl_core::optimizer::SearchConfig;
use qoctl_core::{BlochState, DissipatorKind, DissipatorModel, Interpolation, Objective};
use serde::{Deserialize, Serialize};

use crate::InputError;

/// Everything a command needs. Loaded from TOML, then overridden by flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub problem: ProblemConfig,
    pub numerics: NumericsConfig,
    pub optimizer: OptimizerConfig,
    pub reach: ReachConfig,
    pub output: OutputConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: DissipatorKind,
    pub gamma: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub objective: Objective,
    /// Bloch vectors in the energy frame of the initial Hamiltonian.
    pub initial: [f64; 3],
    pub target: [f64; 3],
    pub horizon: f64,
    /// Costate carried by `simulate`, when given.
    pub costate: Option<[f64; 3]>,
    /// Conserved value used by `verify`; defaults to the trajectory mean.
    pub k: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    /// Integrator step. Defaults to `1e-3 / gamma`.
    pub step: Option<f64>,
    /// Clamp for infinite gaps. Defaults to `50 / beta`.
    pub eps_max: Option<f64>,
    pub interpolation: Interpolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub segments: usize,
    pub iterations: usize,
    pub epochs: usize,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReachConfig {
    /// Diagonal targets `a_z`; an empty list scans 41 points over `[-1, 1]`.
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { kind: DissipatorKind::Gibbs, gamma: 1.0, beta: 1.0 }
    }
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Heat,
            initial: [0.0, 0.0, -0.2],
            target: [0.0, 0.0, -0.6],
            horizon: 2.0,
            costate: None,
            k: None,
        }
    }
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self { step: None, eps_max: None, interpolation: Interpolation::Hold }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let d = SearchConfig::default();
        Self { restarts: d.restarts, segments: d.n_segments, iterations: d.iterations, epochs: d.epochs, threads: None }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub model: Option<DissipatorKind>,
    pub objective: Option<Objective>,
    pub eps_max: Option<f64>,
    pub step: Option<f64>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
            let msg = e.message().to_string();
            match line {
                Some(l) => InputError::new(format!("config line {l}: {msg}")).into(),
                None => InputError::new(format!("config: {msg}")).into(),
            }
        })
    }

    pub fn load(path: Option<&Path>, o: &Overrides) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| InputError::new(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text).with_context(|| format!("in {}", p.display()))?
            }
            None => Self::default(),
        };
        cfg.apply(o);
        cfg.resolve()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(k) = o.model {
            self.model.kind = k;
        }
        if let Some(obj) = o.objective {
            self.problem.objective = obj;
        }
        if o.eps_max.is_some() {
            self.numerics.eps_max = o.eps_max;
        }
        if o.step.is_some() {
            self.numerics.step = o.step;
        }
        if o.threads.is_some() {
            self.optimizer.threads = o.threads;
        }
    }

    /// Validates and fills defaults that depend on other fields.
    fn resolve(&mut self) -> anyhow::Result<()> {
        let m = &self.model;
        if !(m.gamma.is_finite() && m.gamma > 0.0 && m.beta.is_finite() && m.beta > 0.0) {
            bail!(InputError::new(format!("gamma and beta must be positive, got {} and {}", m.gamma, m.beta)));
        }
        if !(self.problem.horizon.is_finite() && self.problem.horizon > 0.0) {
            bail!(InputError::new(format!("horizon must be positive, got {}", self.problem.horizon)));
        }
        for (name, v) in [("initial", self.problem.initial), ("target", self.problem.target)] {
            BlochState::new(v[0], v[1], v[2]).map_err(|e| InputError::new(format!("{name} state: {e}")))?;
        }
        let step = *self.numerics.step.get_or_insert(1e-3 / m.gamma);
        let eps_max = *self.numerics.eps_max.get_or_insert(50.0 / m.beta);
        if !(step.is_finite() && step > 0.0) {
            bail!(InputError::new(format!("step must be positive, got {step}")));
        }
        if !(eps_max.is_finite() && eps_max > 0.0) {
            bail!(InputError::new(format!("eps_max must be positive, got {eps_max}")));
        }
        if self.optimizer.segments == 0 {
            bail!(InputError::new("optimizer.segments must be at least 1"));
        }
        if self.reach.targets.iter().any(|z| !(z.abs() <= 1.0)) {
            bail!(InputError::new("reach targets must lie in [-1, 1]"));
        }
        Ok(())
    }

    pub fn dissipator(&self) -> anyhow::Result<DissipatorModel> {
        Ok(DissipatorModel::new(self.model.kind, self.model.gamma, self.model.beta)?)
    }

    pub fn initial(&self) -> BlochState {
        let [x, y, z] = self.problem.initial;
        BlochState::new(x, y, z).expect("validated")
    }

    pub fn target(&self) -> BlochState {
        let [x, y, z] = self.problem.target;
        BlochState::new(x, y, z).expect("validated")
    }

    pub fn step(&self) -> f64 {
        self.numerics.step.expect("resolved")
    }

    pub fn eps_max(&self) -> f64 {
        self.numerics.eps_max.expect("resolved")
    }

    pub fn synthesis(&self) -> SynthesisOptions {
        SynthesisOptions { gamma_step: self.step() * self.model.gamma, beta_eps_max: self.eps_max() * self.model.beta }
    }

    pub fn search(&self) -> SearchConfig {
        let o = &self.optimizer;
        SearchConfig {
            n_segments: o.segments,
            restarts: o.restarts,
            seed: self.seed,
            iterations: o.iterations,
            epochs: o.epochs,
            threads: o.threads,
            ..SearchConfig::default()
        }
    }

    pub fn reach_targets(&self) -> Vec<f64> {
        if self.reach.targets.is_empty() {
            (0..=40).map(|k| -1.0 + k as f64 / 20.0).collect()
        } else {
            self.reach.targets.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let c = RunConfig::load(None, &Overrides::default()).unwrap();
        assert_eq!(c.step(), 1e-3);
        assert_eq!(c.eps_max(), 50.0);
        assert_eq!(c.search().restarts, SearchConfig::default().restarts);
    }

    #[test]
    fn toml_sections_and_overrides() {
        let text = "seed = 4\n[model]\nkind = \"bosonic\"\nbeta = 2.0\n[problem]\nobjective = \"time\"\n";
        let mut c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.model.kind, DissipatorKind::Bosonic);
        c.apply(&Overrides { seed: Some(9), eps_max: Some(10.0), ..Default::default() });
        c.resolve().unwrap();
        assert_eq!((c.seed, c.eps_max(), c.problem.objective), (9, 10.0, Objective::Time));
        assert_eq!(c.synthesis().beta_eps_max, 20.0);
    }

    #[test]
    fn bad_input_reports_line() {
        let err = RunConfig::from_toml("[model]\ngamma = 1.0\nbogus = 3\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let mut c = RunConfig::default();
        c.problem.initial = [0.0, 0.0, 1.5];
        assert!(c.resolve().is_err());
        c = RunConfig::default();
        c.model.gamma = -1.0;
        assert!(c.resolve().is_err());
    }
}
