//! Experiment configuration: flat `key = value` text with dotted section
//! names and `#` comments.
//!
//! Lists are comma-separated; matrices and lists of vectors separate rows
//! with `;`. Matrices are given row-major. Every key is validated and
//! unknown keys are rejected. [`ExperimentConfig::to_text`] writes a
//! canonical form (sorted keys, shortest round-trip floats).
//!
//! ```text
//! model.basis = skew            # skew | scalar | matrices
//! model.n = 3
//! model.m = 2
//! model.theta = 0, 0, 0, 0.3, 0, 0, 0, 0.3, 0
//! model.w0 = 0, 0, 1
//! grid.steps = 256
//! readout.kind = scalar_neuron  # scalar_neuron | vector_neuron | two_block | cascade_linear
//! readout.sigma = tanh
//! potential.kind = none         # none | constant | reference
//! sampling.paths = 10000
//! sampling.seed = 42
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use sdecade_core::fit::Optimizer;
use sdecade_core::lie::{MatrixBasis, ThetaParams, MAX_BRACKET_DEPTH};
use sdecade_core::realization::ReadoutSpec;
use sdecade_core::sde::{BrownianIncrements, Potential, SdeModel, TimeGrid, WeightTrajectory};
use sdecade_core::Activation;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq)]
pub enum BasisSpec {
    /// Canonical basis of skew-symmetric `n×n` matrices.
    Skew,
    /// The single generator `[1]` (`n = 1`).
    Scalar,
    /// Explicit row-major `n×n` generators.
    Matrices(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub n: usize,
    pub m: usize,
    pub basis: BasisSpec,
    /// Row-major `(m+1)×d`: drift coefficients first.
    pub theta: Vec<f64>,
    /// Row-major `n × w0_cols` initial state.
    pub w0: Vec<f64>,
    pub w0_cols: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReadoutKind {
    ScalarNeuron,
    VectorNeuron,
    TwoBlock,
    CascadeLinear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutConfig {
    pub kind: ReadoutKind,
    pub sigma: Activation,
    pub v: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PotentialSpec {
    None,
    Constant(f64),
    /// `h(w, t) = −|w − ξ_t|²` around a trajectory file written by `sample`.
    Reference(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum FitTarget {
    /// `tanh(wᵀx)`.
    Neuron { w: Vec<f64> },
    /// The model itself at `theta`, realized with an independent `seed`.
    SelfRealized { theta: Vec<f64>, seed: u64 },
    /// CSV rows `x_0,…,x_{q−1},y`.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitSpec {
    pub target: FitTarget,
    pub dataset_size: usize,
    pub test_size: usize,
    pub optimizer: Optimizer,
    pub iterations: usize,
    /// Pass threshold: target variance over MSE for regression targets,
    /// initial over final loss for self-realized targets.
    pub required_improvement: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FkSpec {
    pub x: f64,
    pub nodes: usize,
    pub time_steps: usize,
    /// Domain half-width in standard deviations of `W₁`.
    pub width_sd: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CascadeMode {
    Auto,
    Empirical,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeSpec {
    pub n: usize,
    pub generators: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    /// Row-major `F` for a linear drift `f(x) = Fx`.
    pub drift: Option<Vec<f64>>,
    pub v: Vec<f64>,
    pub x: Vec<f64>,
    pub r_w: f64,
    pub r_z: f64,
    pub paths: usize,
    pub tolerance: f64,
    pub mode: CascadeMode,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BracketSpec {
    pub n: usize,
    pub w: Vec<f64>,
    pub w2: Vec<f64>,
    pub sigma: Activation,
    pub k_max: usize,
    pub points: Vec<Vec<f64>>,
    /// Relative cutoff for the fitted polynomial degrees.
    pub degree_tol: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub grid_steps: usize,
    pub readout: ReadoutConfig,
    pub potential: PotentialSpec,
    pub paths: usize,
    pub seed: u64,
    /// Trajectories written by `sample`.
    pub sample_trajectories: usize,
    pub realize_inputs: Option<Vec<Vec<f64>>>,
    pub fit: Option<FitSpec>,
    pub fk: Option<FkSpec>,
    pub cascade: Option<CascadeSpec>,
    pub brackets: Option<BracketSpec>,
    pub output_dir: Option<PathBuf>,
}

pub const DEFAULT_SAMPLE_TRAJECTORIES: usize = 4;

struct Raw {
    entries: BTreeMap<String, String>,
}

fn bad(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::config(format!("`{key}`: {msg}"))
}

impl Raw {
    fn parse(text: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '.') {
                return Err(CliError::config(format!("line {}: invalid key `{key}`", lineno + 1)));
            }
            if entries.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(CliError::config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    fn has_section(&self, prefix: &str) -> bool {
        self.entries.keys().any(|k| k.starts_with(prefix))
    }

    fn req(&mut self, key: &str) -> CliResult<String> {
        self.take(key).ok_or_else(|| bad(key, "missing"))
    }

    fn parse_req<T: std::str::FromStr>(&mut self, key: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.req(key)?;
        v.parse().map_err(|e| bad(key, e))
    }

    fn parse_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            Some(v) => v.parse().map_err(|e| bad(key, e)),
            None => Ok(default),
        }
    }

    fn list_req(&mut self, key: &str) -> CliResult<Vec<f64>> {
        let v = self.req(key)?;
        parse_list(&v).map_err(|e| bad(key, e))
    }

    fn rows_req(&mut self, key: &str) -> CliResult<Vec<Vec<f64>>> {
        let v = self.req(key)?;
        parse_rows(&v).map_err(|e| bad(key, e))
    }

    fn finish(self) -> CliResult<()> {
        match self.entries.keys().next() {
            Some(k) => Err(bad(k, "unknown or unused key")),
            None => Ok(()),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    let out = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{}`: {e}", p.trim())))
        .collect::<Result<Vec<_>, _>>()?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err("values must be finite".into());
    }
    Ok(out)
}

fn parse_rows(s: &str) -> Result<Vec<Vec<f64>>, String> {
    s.split(';').map(parse_list).collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

fn fmt_rows(rows: &[Vec<f64>]) -> String {
    rows.iter().map(|r| fmt_list(r)).collect::<Vec<_>>().join("; ")
}

fn parse_activation(key: &str, s: &str) -> CliResult<Activation> {
    Activation::from_name(s).ok_or_else(|| bad(key, format!("unknown activation `{s}`")))
}

fn check_len(key: &str, v: &[f64], expected: usize) -> CliResult<()> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(bad(key, format!("expected {expected} values, got {}", v.len())))
    }
}

fn positive(key: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(bad(key, format!("must be positive, got {v}")))
    }
}

impl ModelSpec {
    pub fn d(&self) -> usize {
        match &self.basis {
            BasisSpec::Skew => self.n * (self.n - 1) / 2,
            BasisSpec::Scalar => 1,
            BasisSpec::Matrices(g) => g.len(),
        }
    }

    pub fn basis(&self) -> CliResult<MatrixBasis> {
        Ok(match &self.basis {
            BasisSpec::Skew => MatrixBasis::skew(self.n),
            BasisSpec::Scalar => MatrixBasis::from_generators(vec![DMatrix::identity(1, 1)])?,
            BasisSpec::Matrices(gs) => MatrixBasis::from_generators(
                gs.iter().map(|g| DMatrix::from_row_slice(self.n, self.n, g)).collect(),
            )?,
        })
    }

    pub fn theta(&self) -> CliResult<ThetaParams> {
        Ok(ThetaParams::new(self.m, self.d(), self.theta.clone())?)
    }

    pub fn w0(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.w0_cols, &self.w0)
    }

    pub fn build(&self) -> CliResult<SdeModel> {
        self.build_at(&self.theta()?)
    }

    pub fn build_at(&self, theta: &ThetaParams) -> CliResult<SdeModel> {
        Ok(SdeModel::linear_from_theta(theta, &self.basis()?, self.w0())?)
    }
}

impl ReadoutConfig {
    pub fn spec(&self) -> ReadoutSpec {
        let v = || DVector::from_vec(self.v.clone().unwrap_or_default());
        match self.kind {
            ReadoutKind::ScalarNeuron => ReadoutSpec::ScalarNeuron { sigma: self.sigma },
            ReadoutKind::VectorNeuron => ReadoutSpec::VectorNeuron { v: v(), sigma: self.sigma },
            ReadoutKind::TwoBlock => ReadoutSpec::TwoBlock { sigma: self.sigma },
            ReadoutKind::CascadeLinear => ReadoutSpec::CascadeLinear { v: v(), sigma: self.sigma },
        }
    }
}

impl ReadoutKind {
    fn name(self) -> &'static str {
        match self {
            ReadoutKind::ScalarNeuron => "scalar_neuron",
            ReadoutKind::VectorNeuron => "vector_neuron",
            ReadoutKind::TwoBlock => "two_block",
            ReadoutKind::CascadeLinear => "cascade_linear",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        [Self::ScalarNeuron, Self::VectorNeuron, Self::TwoBlock, Self::CascadeLinear]
            .into_iter()
            .find(|k| k.name() == s)
    }

    fn uses_v(self) -> bool {
        matches!(self, ReadoutKind::VectorNeuron | ReadoutKind::CascadeLinear)
    }
}

impl ExperimentConfig {
    /// Read, parse and validate a config file. Relative file references are
    /// resolved against the config file's directory and must exist.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let PotentialSpec::Reference(p) = &mut cfg.potential {
            resolve(p);
        }
        if let Some(FitSpec { target: FitTarget::File(p), .. }) = &mut cfg.fit {
            resolve(p);
        }
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn check_files(&self) -> CliResult<()> {
        let mut files = Vec::new();
        if let PotentialSpec::Reference(p) = &self.potential {
            files.push(("potential.file", p));
        }
        if let Some(FitSpec { target: FitTarget::File(p), .. }) = &self.fit {
            files.push(("fit.target.file", p));
        }
        for (key, p) in files {
            if !p.is_file() {
                return Err(bad(key, format!("file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut raw = Raw::parse(text)?;
        let model = parse_model(&mut raw)?;
        let grid_steps: usize = raw.parse_req("grid.steps")?;
        if grid_steps == 0 {
            return Err(bad("grid.steps", "must be positive"));
        }
        let readout = parse_readout(&mut raw)?;
        let potential = match raw.req("potential.kind")?.as_str() {
            "none" => PotentialSpec::None,
            "constant" => PotentialSpec::Constant(raw.parse_req("potential.c")?),
            "reference" => PotentialSpec::Reference(PathBuf::from(raw.req("potential.file")?)),
            other => return Err(bad("potential.kind", format!("unknown kind `{other}`"))),
        };
        if let PotentialSpec::Constant(c) = potential {
            if !c.is_finite() {
                return Err(bad("potential.c", "must be finite"));
            }
        }
        let paths: usize = raw.parse_req("sampling.paths")?;
        if paths < 2 {
            return Err(bad("sampling.paths", "need at least 2 paths"));
        }
        let seed: u64 = raw.parse_req("sampling.seed")?;
        let sample_trajectories = raw.parse_or("sample.trajectories", DEFAULT_SAMPLE_TRAJECTORIES)?;
        let realize_inputs = match raw.take("realize.x") {
            Some(v) => Some(parse_rows(&v).map_err(|e| bad("realize.x", e))?),
            None => None,
        };
        let fit = if raw.has_section("fit.") { Some(parse_fit(&mut raw, &model)?) } else { None };
        let fk = if raw.has_section("fk.") { Some(parse_fk(&mut raw)?) } else { None };
        let cascade = if raw.has_section("cascade.") { Some(parse_cascade(&mut raw)?) } else { None };
        let brackets = if raw.has_section("brackets.") { Some(parse_brackets(&mut raw)?) } else { None };
        let output_dir = raw.take("output.dir").map(PathBuf::from);
        raw.finish()?;

        let cfg = Self {
            model,
            grid_steps,
            readout,
            potential,
            paths,
            seed,
            sample_trajectories,
            realize_inputs,
            fit,
            fk,
            cascade,
            brackets,
            output_dir,
        };
        cfg.validate_shapes()?;
        Ok(cfg)
    }

    fn validate_shapes(&self) -> CliResult<()> {
        let shape = (self.model.n, self.model.w0_cols);
        let spec = self.readout.spec();
        spec.validate(shape).map_err(|e| bad("readout", e))?;
        if let Some(inputs) = &self.realize_inputs {
            let q = spec.input_dim(shape);
            for x in inputs {
                check_len("realize.x", x, q)?;
            }
        }
        if let Some(fit) = &self.fit {
            let q = spec.input_dim(shape);
            if let FitTarget::Neuron { w } = &fit.target {
                check_len("fit.target.w", w, q)?;
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::unit(self.grid_steps)
    }

    /// The potential, loading the reference trajectory if one is configured.
    pub fn potential(&self) -> CliResult<Potential> {
        Ok(match &self.potential {
            PotentialSpec::None => Potential::Zero,
            PotentialSpec::Constant(c) => Potential::Constant(*c),
            PotentialSpec::Reference(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                let (grid, states) =
                    crate::output::parse_trajectory(&text, self.model.w0_cols).map_err(|e| bad("potential.file", e))?;
                if states[0].nrows() != self.model.n {
                    return Err(bad("potential.file", "reference state shape does not match the model"));
                }
                let increments = BrownianIncrements::from_values(grid, 0, Vec::new())?;
                sdecade_core::realization::reference_penalty(&WeightTrajectory { grid, states, increments })
            }
        })
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        let m = &self.model;
        kv.insert("model.n", m.n.to_string());
        kv.insert("model.m", m.m.to_string());
        match &m.basis {
            BasisSpec::Skew => {
                kv.insert("model.basis", "skew".into());
            }
            BasisSpec::Scalar => {
                kv.insert("model.basis", "scalar".into());
            }
            BasisSpec::Matrices(g) => {
                kv.insert("model.basis", "matrices".into());
                kv.insert("model.generators", fmt_rows(g));
            }
        }
        kv.insert("model.theta", fmt_list(&m.theta));
        kv.insert("model.w0", fmt_list(&m.w0));
        kv.insert("model.w0_cols", m.w0_cols.to_string());
        kv.insert("grid.steps", self.grid_steps.to_string());
        kv.insert("readout.kind", self.readout.kind.name().into());
        kv.insert("readout.sigma", self.readout.sigma.name().into());
        if let Some(v) = &self.readout.v {
            kv.insert("readout.v", fmt_list(v));
        }
        match &self.potential {
            PotentialSpec::None => {
                kv.insert("potential.kind", "none".into());
            }
            PotentialSpec::Constant(c) => {
                kv.insert("potential.kind", "constant".into());
                kv.insert("potential.c", format!("{c:?}"));
            }
            PotentialSpec::Reference(p) => {
                kv.insert("potential.kind", "reference".into());
                kv.insert("potential.file", p.display().to_string());
            }
        }
        kv.insert("sampling.paths", self.paths.to_string());
        kv.insert("sampling.seed", self.seed.to_string());
        kv.insert("sample.trajectories", self.sample_trajectories.to_string());
        if let Some(x) = &self.realize_inputs {
            kv.insert("realize.x", fmt_rows(x));
        }
        if let Some(f) = &self.fit {
            match &f.target {
                FitTarget::Neuron { w } => {
                    kv.insert("fit.target", "neuron".into());
                    kv.insert("fit.target.w", fmt_list(w));
                }
                FitTarget::SelfRealized { theta, seed } => {
                    kv.insert("fit.target", "self".into());
                    kv.insert("fit.target.theta", fmt_list(theta));
                    kv.insert("fit.target.seed", seed.to_string());
                }
                FitTarget::File(p) => {
                    kv.insert("fit.target", "file".into());
                    kv.insert("fit.target.file", p.display().to_string());
                }
            }
            kv.insert("fit.dataset_size", f.dataset_size.to_string());
            kv.insert("fit.test_size", f.test_size.to_string());
            kv.insert("fit.iterations", f.iterations.to_string());
            kv.insert("fit.required_improvement", format!("{:?}", f.required_improvement));
            kv.insert("fit.optimizer", f.optimizer.name().into());
            match f.optimizer {
                Optimizer::CentralDifference { learning_rate, step, momentum } => {
                    kv.insert("fit.learning_rate", format!("{learning_rate:?}"));
                    kv.insert("fit.step", format!("{step:?}"));
                    kv.insert("fit.momentum", format!("{momentum:?}"));
                }
                Optimizer::Spsa { a, c, alpha, gamma, stability } => {
                    kv.insert("fit.spsa.a", format!("{a:?}"));
                    kv.insert("fit.spsa.c", format!("{c:?}"));
                    kv.insert("fit.spsa.alpha", format!("{alpha:?}"));
                    kv.insert("fit.spsa.gamma", format!("{gamma:?}"));
                    kv.insert("fit.spsa.stability", format!("{stability:?}"));
                }
            }
        }
        if let Some(f) = &self.fk {
            kv.insert("fk.x", format!("{:?}", f.x));
            kv.insert("fk.nodes", f.nodes.to_string());
            kv.insert("fk.time_steps", f.time_steps.to_string());
            kv.insert("fk.width_sd", format!("{:?}", f.width_sd));
        }
        if let Some(c) = &self.cascade {
            kv.insert("cascade.n", c.n.to_string());
            kv.insert("cascade.generators", fmt_rows(&c.generators));
            kv.insert("cascade.beta", fmt_rows(&c.beta));
            if let Some(f) = &c.drift {
                kv.insert("cascade.drift", fmt_list(f));
            }
            kv.insert("cascade.v", fmt_list(&c.v));
            kv.insert("cascade.x", fmt_list(&c.x));
            kv.insert("cascade.r_w", format!("{:?}", c.r_w));
            kv.insert("cascade.r_z", format!("{:?}", c.r_z));
            kv.insert("cascade.paths", c.paths.to_string());
            kv.insert("cascade.tolerance", format!("{:?}", c.tolerance));
            kv.insert(
                "cascade.mode",
                match c.mode {
                    CascadeMode::Auto => "auto",
                    CascadeMode::Empirical => "empirical",
                }
                .into(),
            );
        }
        if let Some(b) = &self.brackets {
            kv.insert("brackets.n", b.n.to_string());
            kv.insert("brackets.w", fmt_list(&b.w));
            kv.insert("brackets.w2", fmt_list(&b.w2));
            kv.insert("brackets.sigma", b.sigma.name().into());
            kv.insert("brackets.k_max", b.k_max.to_string());
            kv.insert("brackets.points", fmt_rows(&b.points));
            kv.insert("brackets.degree_tol", format!("{:?}", b.degree_tol));
        }
        if let Some(d) = &self.output_dir {
            kv.insert("output.dir", d.display().to_string());
        }
        let mut out = String::new();
        for (k, v) in kv {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }
}

fn parse_model(raw: &mut Raw) -> CliResult<ModelSpec> {
    let n: usize = raw.parse_req("model.n")?;
    let m: usize = raw.parse_req("model.m")?;
    if n == 0 || m == 0 {
        return Err(CliError::config("`model.n` and `model.m` must be positive"));
    }
    let basis = match raw.req("model.basis")?.as_str() {
        "skew" if n >= 2 => BasisSpec::Skew,
        "skew" => return Err(bad("model.basis", "a skew basis needs n >= 2")),
        "scalar" if n == 1 => BasisSpec::Scalar,
        "scalar" => return Err(bad("model.basis", "the scalar basis needs n = 1")),
        "matrices" => {
            let g = raw.rows_req("model.generators")?;
            if g.is_empty() {
                return Err(bad("model.generators", "at least one generator"));
            }
            for row in &g {
                check_len("model.generators", row, n * n)?;
            }
            BasisSpec::Matrices(g)
        }
        other => return Err(bad("model.basis", format!("unknown basis `{other}`"))),
    };
    let w0_cols: usize = raw.parse_or("model.w0_cols", 1)?;
    if w0_cols == 0 {
        return Err(bad("model.w0_cols", "must be positive"));
    }
    let spec = ModelSpec {
        n,
        m,
        basis,
        theta: raw.list_req("model.theta")?,
        w0: raw.list_req("model.w0")?,
        w0_cols,
    };
    check_len("model.theta", &spec.theta, (m + 1) * spec.d())?;
    check_len("model.w0", &spec.w0, n * w0_cols)?;
    Ok(spec)
}

fn parse_readout(raw: &mut Raw) -> CliResult<ReadoutConfig> {
    let kind_name = raw.req("readout.kind")?;
    let kind = ReadoutKind::from_name(&kind_name)
        .ok_or_else(|| bad("readout.kind", format!("unknown readout `{kind_name}`")))?;
    let sigma = match raw.take("readout.sigma") {
        Some(s) => parse_activation("readout.sigma", &s)?,
        None => Activation::Tanh,
    };
    let v = if kind.uses_v() { Some(raw.list_req("readout.v")?) } else { None };
    Ok(ReadoutConfig { kind, sigma, v })
}

fn parse_optimizer(raw: &mut Raw) -> CliResult<Optimizer> {
    let name = raw.take("fit.optimizer").unwrap_or_else(|| "central_difference".into());
    let opt = match name.as_str() {
        "central_difference" => Optimizer::CentralDifference {
            learning_rate: positive("fit.learning_rate", raw.parse_or("fit.learning_rate", 1.0)?)?,
            step: positive("fit.step", raw.parse_or("fit.step", 1e-4)?)?,
            momentum: raw.parse_or("fit.momentum", 0.5)?,
        },
        "spsa" => Optimizer::Spsa {
            a: positive("fit.spsa.a", raw.parse_or("fit.spsa.a", 0.5)?)?,
            c: positive("fit.spsa.c", raw.parse_or("fit.spsa.c", 0.05)?)?,
            alpha: positive("fit.spsa.alpha", raw.parse_or("fit.spsa.alpha", 0.602)?)?,
            gamma: positive("fit.spsa.gamma", raw.parse_or("fit.spsa.gamma", 0.101)?)?,
            stability: raw.parse_or("fit.spsa.stability", 2.0)?,
        },
        other => return Err(bad("fit.optimizer", format!("unknown optimizer `{other}`"))),
    };
    if let Optimizer::CentralDifference { momentum, .. } = opt {
        if !(0.0..1.0).contains(&momentum) {
            return Err(bad("fit.momentum", "must lie in [0, 1)"));
        }
    }
    if let Optimizer::Spsa { stability, .. } = opt {
        if !(stability >= 0.0 && stability.is_finite()) {
            return Err(bad("fit.spsa.stability", "must be non-negative"));
        }
    }
    Ok(opt)
}

fn parse_fit(raw: &mut Raw, model: &ModelSpec) -> CliResult<FitSpec> {
    let target = match raw.req("fit.target")?.as_str() {
        "neuron" => FitTarget::Neuron { w: raw.list_req("fit.target.w")? },
        "self" => {
            let theta = raw.list_req("fit.target.theta")?;
            check_len("fit.target.theta", &theta, (model.m + 1) * model.d())?;
            FitTarget::SelfRealized { theta, seed: raw.parse_req("fit.target.seed")? }
        }
        "file" => FitTarget::File(PathBuf::from(raw.req("fit.target.file")?)),
        other => return Err(bad("fit.target", format!("unknown target `{other}`"))),
    };
    let dataset_size: usize = raw.parse_or("fit.dataset_size", 500)?;
    if dataset_size == 0 {
        return Err(bad("fit.dataset_size", "must be positive"));
    }
    let required_improvement = positive("fit.required_improvement", raw.parse_or("fit.required_improvement", 5.0)?)?;
    Ok(FitSpec {
        target,
        dataset_size,
        test_size: raw.parse_or("fit.test_size", 0)?,
        iterations: raw.parse_req("fit.iterations")?,
        required_improvement,
        optimizer: parse_optimizer(raw)?,
    })
}

fn parse_fk(raw: &mut Raw) -> CliResult<FkSpec> {
    let x: f64 = raw.parse_req("fk.x")?;
    if !x.is_finite() {
        return Err(bad("fk.x", "must be finite"));
    }
    Ok(FkSpec {
        x,
        nodes: raw.parse_or("fk.nodes", 801)?,
        time_steps: raw.parse_or("fk.time_steps", 400)?,
        width_sd: positive("fk.width_sd", raw.parse_or("fk.width_sd", 6.0)?)?,
    })
}

fn parse_cascade(raw: &mut Raw) -> CliResult<CascadeSpec> {
    let n: usize = raw.parse_req("cascade.n")?;
    let generators = raw.rows_req("cascade.generators")?;
    for g in &generators {
        check_len("cascade.generators", g, n * n)?;
    }
    let beta = raw.rows_req("cascade.beta")?;
    for row in &beta {
        check_len("cascade.beta", row, generators.len())?;
    }
    let drift = match raw.take("cascade.drift") {
        Some(v) => {
            let f = parse_list(&v).map_err(|e| bad("cascade.drift", e))?;
            check_len("cascade.drift", &f, n * n)?;
            Some(f)
        }
        None => None,
    };
    let v = raw.list_req("cascade.v")?;
    check_len("cascade.v", &v, n)?;
    let x = raw.list_req("cascade.x")?;
    check_len("cascade.x", &x, n)?;
    let tolerance = positive("cascade.tolerance", raw.parse_req("cascade.tolerance")?)?;
    let mode = match raw.take("cascade.mode").as_deref() {
        None | Some("auto") => CascadeMode::Auto,
        Some("empirical") => CascadeMode::Empirical,
        Some(other) => return Err(bad("cascade.mode", format!("unknown mode `{other}`"))),
    };
    Ok(CascadeSpec {
        n,
        generators,
        beta,
        drift,
        v,
        x,
        r_w: positive("cascade.r_w", raw.parse_req("cascade.r_w")?)?,
        r_z: positive("cascade.r_z", raw.parse_req("cascade.r_z")?)?,
        paths: raw.parse_req("cascade.paths")?,
        tolerance,
        mode,
    })
}

fn parse_brackets(raw: &mut Raw) -> CliResult<BracketSpec> {
    let n: usize = raw.parse_req("brackets.n")?;
    let w = raw.list_req("brackets.w")?;
    check_len("brackets.w", &w, n * n)?;
    let w2 = raw.list_req("brackets.w2")?;
    check_len("brackets.w2", &w2, n * n)?;
    let sigma_name = raw.take("brackets.sigma").unwrap_or_else(|| "tanh".into());
    let points = raw.rows_req("brackets.points")?;
    for p in &points {
        check_len("brackets.points", p, n)?;
    }
    let k_max: usize = raw.parse_req("brackets.k_max")?;
    if k_max > MAX_BRACKET_DEPTH {
        return Err(bad("brackets.k_max", format!("at most {MAX_BRACKET_DEPTH}")));
    }
    Ok(BracketSpec {
        n,
        w,
        w2,
        sigma: parse_activation("brackets.sigma", &sigma_name)?,
        k_max,
        points,
        degree_tol: positive("brackets.degree_tol", raw.parse_or("brackets.degree_tol", 1e-9)?)?,
    })
}
