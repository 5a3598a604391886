//! Experiment configuration: a TOML document describing either a built-in
//! model or explicit matrices, the dynamics mode, and the per-command
//! blocks.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::Deserialize;

use dqst::dynamics::{
    generator_matrix, kraus_superoperator, propagate, unitary_propagator, KrausMap,
    LindbladGenerator, Superoperator,
};
use dqst::linops::{eye, kron_list, pauli, CMat};
use dqst::models::{
    basis_state_projector, dissipative_nqubit, ghz_state, gibbs_state, nv_center,
    nv_separable_state, spin_chain, DissipativeQubitSpec, NvParams, ProbeSpec, SpinChainParams,
};
use dqst::observability::MeasurementSet;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub seed: Option<u64>,
    pub out_dir: Option<String>,
    pub model: Option<ModelBlock>,
    pub system: Option<SystemBlock>,
    #[serde(default)]
    pub dynamics: DynamicsBlock,
    #[serde(default)]
    pub observability: ObservabilityBlock,
    #[serde(default)]
    pub selection: SelectionBlock,
    #[serde(default)]
    pub measurement: MeasurementBlock,
    pub state: Option<StateBlock>,
    pub target: Option<TargetBlock>,
    pub genericity: Option<GenericityBlock>,
    #[serde(default)]
    pub reproduce: ReproduceBlock,
}

fn default_schema() -> u32 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub name: String,
    // spin chain
    pub n_sites: Option<usize>,
    pub alpha: Option<Vec<f64>>,
    pub beta: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    pub delta: Option<Vec<f64>>,
    pub epsilon: Option<Vec<f64>>,
    pub eta: Option<Vec<f64>>,
    // defect center
    pub d_e: Option<f64>,
    pub d_g: Option<f64>,
    pub q: Option<f64>,
    pub a_e: Option<f64>,
    pub a_g: Option<f64>,
    pub g_el: Option<f64>,
    pub g_n: Option<f64>,
    pub b_field: Option<f64>,
    pub gamma_d: Option<f64>,
    pub gamma_p: Option<f64>,
    // dissipative qubits
    pub n_qubits: Option<usize>,
    pub gks_diagonal: Option<Vec<f64>>,
    pub probe_seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub h: Option<MatrixSpec>,
    #[serde(default)]
    pub noise: Vec<MatrixSpec>,
    pub observables: Vec<MatrixSpec>,
    pub labels: Option<Vec<String>>,
    #[serde(default)]
    pub kraus: Vec<MatrixSpec>,
    pub unitary: Option<MatrixSpec>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DynamicsBlock {
    #[serde(default)]
    pub mode: DynamicsMode,
    pub dt: Option<f64>,
}

#[derive(Debug, Deserialize, Default, Clone, Copy, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsMode {
    #[default]
    Continuous,
    Discrete,
    Discretized,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservabilityBlock {
    #[serde(default = "default_true")]
    pub include_identity: bool,
    pub rank_tol_abs: Option<f64>,
    pub cluster_tol: Option<f64>,
    #[serde(default)]
    pub emit_bases: bool,
}

fn default_true() -> bool {
    true
}

impl Default for ObservabilityBlock {
    fn default() -> Self {
        Self {
            include_identity: true,
            rank_tol_abs: None,
            cluster_tol: None,
            emit_bases: false,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionBlock {
    pub horizon: Option<f64>,
    #[serde(default = "default_grid")]
    pub n_grid: usize,
    #[serde(default)]
    pub first_pick: FirstPickSpec,
    pub stop_objective_rel: Option<f64>,
}

fn default_grid() -> usize {
    200
}

impl Default for SelectionBlock {
    fn default() -> Self {
        Self {
            horizon: None,
            n_grid: 200,
            first_pick: FirstPickSpec::Lowest,
            stop_objective_rel: None,
        }
    }
}

#[derive(Debug, Deserialize, Default, Clone, Copy, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum FirstPickSpec {
    #[default]
    Lowest,
    Seeded,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementBlock {
    #[serde(default = "default_shots")]
    pub shots: u64,
    #[serde(default)]
    pub mode: SamplingModeSpec,
}

fn default_shots() -> u64 {
    10_000
}

impl Default for MeasurementBlock {
    fn default() -> Self {
        Self {
            shots: 10_000,
            mode: SamplingModeSpec::Clt,
        }
    }
}

#[derive(Debug, Deserialize, Default, Clone, Copy, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum SamplingModeSpec {
    #[default]
    Clt,
    Exact,
}

impl SamplingModeSpec {
    pub fn to_mode(self) -> dqst::measurement::SamplingMode {
        match self {
            SamplingModeSpec::Clt => dqst::measurement::SamplingMode::Clt,
            SamplingModeSpec::Exact => dqst::measurement::SamplingMode::Exact,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateBlock {
    pub kind: StateKind,
    pub beta: Option<f64>,
    pub rho: Option<MatrixSpec>,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Separable,
    Ghz,
    Gibbs,
    MaximallyMixed,
    Explicit,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetBlock {
    /// Target observable; defaults to the model's built-in target when
    /// omitted (the defect-center model defines one).
    pub z: Option<MatrixSpec>,
    pub times: Vec<f64>,
    #[serde(default)]
    pub minimal_support: bool,
    pub residual_tol_rel: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericityBlock {
    pub n_trials: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReproduceBlock {
    #[serde(default = "default_seeds")]
    pub n_seeds: usize,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    /// Dissipation amplitude for the time-selection and error-scaling
    /// outputs; the default reproduces the reference slow eigenvalue.
    #[serde(default = "default_eta_slow")]
    pub eta_slow: f64,
    pub shots_grid: Option<Vec<f64>>,
}

fn default_seeds() -> usize {
    20
}

fn default_trials() -> usize {
    100
}

fn default_eta_slow() -> f64 {
    0.273990
}

impl Default for ReproduceBlock {
    fn default() -> Self {
        Self {
            n_seeds: 20,
            n_trials: 100,
            eta_slow: default_eta_slow(),
            shots_grid: None,
        }
    }
}

/// A matrix given either as re/im numeric arrays or as a constructor string
/// ("pauli:IXZZ", "ket:0101").
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Constructor(String),
    Dense {
        re: Vec<Vec<f64>>,
        im: Option<Vec<Vec<f64>>>,
    },
}

impl MatrixSpec {
    pub fn build(&self, what: &str) -> Result<CMat, CliError> {
        match self {
            MatrixSpec::Constructor(s) => build_constructor(s, what),
            MatrixSpec::Dense { re, im } => {
                let rows = re.len();
                if rows == 0 {
                    return Err(CliError::Config(format!("{what}: empty matrix")));
                }
                let cols = re[0].len();
                if re.iter().any(|r| r.len() != cols) {
                    return Err(CliError::Config(format!("{what}: ragged 're' rows")));
                }
                if let Some(im) = im {
                    if im.len() != rows || im.iter().any(|r| r.len() != cols) {
                        return Err(CliError::Config(format!(
                            "{what}: 'im' shape differs from 're'"
                        )));
                    }
                }
                let mut m = Array2::<C64>::zeros((rows, cols));
                for i in 0..rows {
                    for j in 0..cols {
                        let imv = im.as_ref().map(|v| v[i][j]).unwrap_or(0.0);
                        m[[i, j]] = C64::new(re[i][j], imv);
                    }
                }
                Ok(m)
            }
        }
    }
}

fn build_constructor(s: &str, what: &str) -> Result<CMat, CliError> {
    if let Some(letters) = s.strip_prefix("pauli:") {
        let mut factors = Vec::new();
        for ch in letters.chars() {
            let k = match ch.to_ascii_uppercase() {
                'I' => 0,
                'X' => 1,
                'Y' => 2,
                'Z' => 3,
                other => {
                    return Err(CliError::Config(format!(
                        "{what}: unknown Pauli letter '{other}' in '{s}'"
                    )))
                }
            };
            factors.push(pauli(k));
        }
        if factors.is_empty() {
            return Err(CliError::Config(format!(
                "{what}: empty Pauli string '{s}'"
            )));
        }
        Ok(kron_list(&factors))
    } else if let Some(bits) = s.strip_prefix("ket:") {
        let parsed: Result<Vec<u8>, _> = bits
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                other => Err(CliError::Config(format!(
                    "{what}: invalid bit '{other}' in '{s}'"
                ))),
            })
            .collect();
        basis_state_projector(&parsed?).map_err(|e| CliError::Config(format!("{what}: {e}")))
    } else {
        Err(CliError::Config(format!(
            "{what}: unknown constructor '{s}' (expected pauli:... or ket:...)"
        )))
    }
}

/// A system assembled from the config: the dynamics matrix (generator or
/// one-step propagator per the dynamics mode), the measurement set, and the
/// ingredients other commands need.
pub struct BuiltSystem {
    pub dynamics: Superoperator,
    /// The continuous-time generator when one exists (continuous or
    /// discretized modes).
    pub generator: Option<Superoperator>,
    pub set: MeasurementSet,
    pub hamiltonian: Option<CMat>,
    /// Built-in target observable, when the model defines one.
    pub target: Option<CMat>,
    pub model_name: Option<String>,
    pub n_qubit_like: Option<usize>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Config =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config parse: {e}")))?;
        if cfg.schema != 1 {
            return Err(CliError::Config(format!(
                "unsupported schema {}",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    pub fn build_system(&self) -> Result<BuiltSystem, CliError> {
        if self.model.is_some() == self.system.is_some() {
            return Err(CliError::Config(
                "exactly one of [model] and [system] must be present".into(),
            ));
        }
        if let Some(model) = &self.model {
            self.build_model(model)
        } else {
            self.build_explicit(self.system.as_ref().expect("checked above"))
        }
    }

    fn finish(
        &self,
        gen: Option<LindbladGenerator>,
        prop: Option<Superoperator>,
        set: MeasurementSet,
        target: Option<CMat>,
        model_name: Option<String>,
        n_qubit_like: Option<usize>,
    ) -> Result<BuiltSystem, CliError> {
        let set = if self.observability.include_identity {
            set
        } else {
            set.without_identity().map_err(CliError::from)?
        };
        let hamiltonian = gen.as_ref().map(|g| g.hamiltonian.clone());
        let generator = match &gen {
            Some(g) => Some(generator_matrix(g).map_err(CliError::from)?),
            None => None,
        };
        let dynamics = match self.dynamics.mode {
            DynamicsMode::Continuous => generator.clone().ok_or_else(|| {
                CliError::Config("continuous mode needs a Hamiltonian/noise system".into())
            })?,
            DynamicsMode::Discretized => {
                let dt = self
                    .dynamics
                    .dt
                    .ok_or_else(|| CliError::Config("discretized mode needs dynamics.dt".into()))?;
                let l = generator.clone().ok_or_else(|| {
                    CliError::Config("discretized mode needs a generator system".into())
                })?;
                propagate(&l, dt).map_err(CliError::from)?
            }
            DynamicsMode::Discrete => prop.ok_or_else(|| {
                CliError::Config("discrete mode needs [system] kraus operators or a unitary".into())
            })?,
        };
        Ok(BuiltSystem {
            dynamics,
            generator,
            set,
            hamiltonian,
            target,
            model_name,
            n_qubit_like,
        })
    }

    fn build_model(&self, model: &ModelBlock) -> Result<BuiltSystem, CliError> {
        match model.name.as_str() {
            "spin_chain" => {
                let n = model.n_sites.unwrap_or(4);
                let mut p = SpinChainParams::uniform(n, 1.0, 0.0);
                if let Some(v) = &model.alpha {
                    p.alpha = v.clone();
                }
                if let Some(v) = &model.beta {
                    p.beta = v.clone();
                }
                if let Some(v) = &model.gamma {
                    p.gamma = v.clone();
                }
                if let Some(v) = &model.delta {
                    p.delta = v.clone();
                }
                if let Some(v) = &model.epsilon {
                    p.epsilon = v.clone();
                }
                if let Some(v) = &model.eta {
                    p.eta = v.clone();
                }
                let (gen, set) = spin_chain(&p).map_err(CliError::from)?;
                self.finish(
                    Some(gen),
                    None,
                    set,
                    None,
                    Some("spin_chain".into()),
                    Some(n),
                )
            }
            "nv_center" => {
                let mut p = NvParams::default();
                if let Some(v) = model.d_e {
                    p.d_e = v;
                }
                if let Some(v) = model.d_g {
                    p.d_g = v;
                }
                if let Some(v) = model.q {
                    p.q = v;
                }
                if let Some(v) = model.a_e {
                    p.a_e = v;
                }
                if let Some(v) = model.a_g {
                    p.a_g = v;
                }
                if let Some(v) = model.g_el {
                    p.g_el = v;
                }
                if let Some(v) = model.g_n {
                    p.g_n = v;
                }
                if let Some(v) = model.b_field {
                    p.b_field = v;
                }
                if let Some(v) = model.gamma_d {
                    p.gamma_d = v;
                }
                if let Some(v) = model.gamma_p {
                    p.gamma_p = v;
                }
                let (gen, set, z) = nv_center(&p).map_err(CliError::from)?;
                self.finish(
                    Some(gen),
                    None,
                    set,
                    Some(z),
                    Some("nv_center".into()),
                    Some(3),
                )
            }
            "dissipative_nqubit" => {
                let n_qubits = model.n_qubits.ok_or_else(|| {
                    CliError::Config("dissipative_nqubit needs model.n_qubits".into())
                })?;
                let m = (1usize << n_qubits).pow(2) - 1;
                let diag = model.gks_diagonal.clone().unwrap_or_else(|| vec![1.0; m]);
                let spec = DissipativeQubitSpec {
                    n_qubits,
                    gks_diagonal: diag,
                    probe: ProbeSpec::Seeded(model.probe_seed.unwrap_or(1)),
                };
                let (gen, set) = dissipative_nqubit(&spec).map_err(CliError::from)?;
                self.finish(
                    Some(gen),
                    None,
                    set,
                    None,
                    Some("dissipative_nqubit".into()),
                    Some(n_qubits),
                )
            }
            other => Err(CliError::Config(format!("unknown model '{other}'"))),
        }
    }

    fn build_explicit(&self, sys: &SystemBlock) -> Result<BuiltSystem, CliError> {
        let obs: Vec<CMat> = sys
            .observables
            .iter()
            .enumerate()
            .map(|(k, spec)| spec.build(&format!("observables[{k}]")))
            .collect::<Result<_, _>>()?;
        let labels: Vec<String> = match &sys.labels {
            Some(l) => {
                if l.len() != obs.len() {
                    return Err(CliError::Config(format!(
                        "{} labels for {} observables",
                        l.len(),
                        obs.len()
                    )));
                }
                l.clone()
            }
            None => (0..obs.len()).map(|k| format!("X{k}")).collect(),
        };
        let set = MeasurementSet::raw(obs, labels).map_err(CliError::from)?;

        let gen = match &sys.h {
            Some(hspec) => {
                let h = hspec.build("system.h")?;
                let noise: Vec<CMat> = sys
                    .noise
                    .iter()
                    .enumerate()
                    .map(|(k, spec)| spec.build(&format!("noise[{k}]")))
                    .collect::<Result<_, _>>()?;
                Some(LindbladGenerator::new(h, noise).map_err(CliError::from)?)
            }
            None => None,
        };
        let prop = if !sys.kraus.is_empty() {
            let ops: Vec<CMat> = sys
                .kraus
                .iter()
                .enumerate()
                .map(|(k, spec)| spec.build(&format!("kraus[{k}]")))
                .collect::<Result<_, _>>()?;
            Some(
                kraus_superoperator(&KrausMap::new(ops).map_err(CliError::from)?)
                    .map_err(CliError::from)?,
            )
        } else if let Some(uspec) = &sys.unitary {
            let u = uspec.build("system.unitary")?;
            Some(unitary_propagator(&u).map_err(CliError::from)?)
        } else {
            None
        };
        self.finish(gen, prop, set, None, None, None)
    }

    /// Initial state for simulation commands.
    pub fn build_state(&self, built: &BuiltSystem) -> Result<CMat, CliError> {
        let block = self
            .state
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs a [state] block".into()))?;
        let d = built.set.dim();
        match block.kind {
            StateKind::Explicit => {
                let spec = block.rho.as_ref().ok_or_else(|| {
                    CliError::Config("state.kind = explicit needs state.rho".into())
                })?;
                let rho = spec.build("state.rho")?;
                if rho.nrows() != d {
                    return Err(CliError::Config(format!(
                        "state.rho is {}x{}, system dimension is {d}",
                        rho.nrows(),
                        rho.ncols()
                    )));
                }
                Ok(rho)
            }
            StateKind::MaximallyMixed => Ok(eye(d).mapv(|z| z / d as f64)),
            StateKind::Ghz => {
                let n = built.n_qubit_like.ok_or_else(|| {
                    CliError::Config("ghz state needs a qubit-structured model".into())
                })?;
                ghz_state(n).map_err(CliError::from)
            }
            StateKind::Separable => match built.model_name.as_deref() {
                Some("spin_chain") => {
                    let n = built.n_qubit_like.expect("spin chain sites");
                    basis_state_projector(&vec![0u8; n]).map_err(CliError::from)
                }
                Some("nv_center") => Ok(nv_separable_state()),
                _ => Err(CliError::Config(
                    "separable state is defined for the built-in models; use explicit rho".into(),
                )),
            },
            StateKind::Gibbs => {
                let h = built.hamiltonian.as_ref().ok_or_else(|| {
                    CliError::Config("gibbs state needs a Hamiltonian system".into())
                })?;
                let beta = block.beta.unwrap_or(1.0);
                gibbs_state(h, beta).map_err(CliError::from)
            }
        }
    }

    pub fn require_seed(&self, override_seed: Option<u64>) -> Result<u64, CliError> {
        override_seed.or(self.seed).ok_or_else(|| {
            CliError::Config("this command is stochastic: set `seed` or pass --seed".into())
        })
    }
}
