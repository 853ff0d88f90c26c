//! JSON experiment configuration: schema types, validation, and assembly
//! of the domain / network / loss objects the runner consumes.

use crate::error::{Result, RitzError};
use crate::functions::{Field, HFun};
use crate::geometry::{Domain, InitScheme};
use crate::loss::{LossKind, LossSpec};
use crate::net::{NetworkParams, Trainable};
use crate::operators::{CutoffSpec, EnergySpec, LinearOperatorSpec, NonlinearOperatorSpec, RobinSpec};
use crate::reference::ManufacturedId;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub domain: DomainConfig,
    pub network: NetworkConfig,
    pub problem: ProblemConfig,
    pub collocation: CollocationConfig,
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    pub output_dir: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    Hyperrectangle { lo: Vec<f64>, hi: Vec<f64> },
    TimeSlab { t_range: [f64; 2], space: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub m: usize,
    /// "ntk", "random_feature", or "small_normal".
    pub init: String,
    #[serde(default)]
    pub delta: Option<f64>,
    /// Optional override: "outer_only" or "full".
    #[serde(default)]
    pub trainable: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemKindConfig {
    Burgers {
        nu: f64,
    },
    Linear {
        /// "identity", "heat_1d", "neg_laplacian", or inline terms.
        operator: String,
        /// Manufactured solution id; when set, f and g are derived from it.
        #[serde(default)]
        manufactured: Option<String>,
    },
    Monotone {
        /// "p_laplace" or "quasilinear".
        family: String,
        #[serde(default)]
        p: Option<f64>,
        q: String,
        h: String,
        cutoff_margin: f64,
    },
    Ritz {
        /// "p_laplace" or "allen_cahn".
        energy: String,
        #[serde(default)]
        p: Option<f64>,
        #[serde(default)]
        epsilon: Option<f64>,
        #[serde(default)]
        cutoff_margin: Option<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemConfig {
    #[serde(flatten)]
    pub kind: ProblemKindConfig,
    #[serde(default = "default_robin")]
    pub robin: [f64; 2],
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_field")]
    pub f: String,
    #[serde(default = "default_field")]
    pub g: String,
}

fn default_robin() -> [f64; 2] {
    [1.0, 0.0]
}
fn default_lambda() -> f64 {
    1.0
}
fn default_field() -> String {
    "zero".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollocationConfig {
    pub n_interior: usize,
    pub n_boundary: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsConfig {
    Igd {
        eta: f64,
        steps: usize,
        #[serde(default = "default_inner_iters")]
        inner_max_iters: usize,
        #[serde(default = "default_grad_tol")]
        inner_grad_tol: f64,
        #[serde(default = "default_stride")]
        record_stride: usize,
    },
    Gd {
        eta: f64,
        steps: usize,
        #[serde(default = "default_stride")]
        record_stride: usize,
    },
    GradientFlow {
        dt: f64,
        horizon: f64,
        #[serde(default = "default_stride")]
        record_stride: usize,
        /// Stop once the loss has fallen by this factor from its start.
        #[serde(default)]
        loss_drop_factor: Option<f64>,
    },
}

fn default_inner_iters() -> usize {
    10
}
fn default_grad_tol() -> f64 {
    1e-8
}
fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Gram snapshot stride in iterations; 0 disables tracking.
    #[serde(default)]
    pub gram_stride: usize,
    #[serde(default)]
    pub rate_fit: bool,
    #[serde(default)]
    pub coercivity_audit: bool,
    /// Compute min eigenvalues of the full Gram pair at initialization
    /// (requires full training mode).
    #[serde(default)]
    pub init_gram_eigs: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            gram_stride: 0,
            rate_fit: false,
            coercivity_audit: false,
            init_gram_eigs: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| RitzError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.network.m == 0 {
            return Err(RitzError::Config("network.m must be >= 1".into()));
        }
        if self.collocation.n_interior == 0 {
            return Err(RitzError::Config("collocation.n_interior must be >= 1".into()));
        }
        let has_cutoff = matches!(
            &self.problem.kind,
            ProblemKindConfig::Monotone { .. }
        ) || matches!(
            &self.problem.kind,
            ProblemKindConfig::Ritz { cutoff_margin: Some(_), .. }
        );
        if self.collocation.n_boundary == 0 && !has_cutoff {
            return Err(RitzError::Config(
                "collocation.n_boundary = 0 requires a cutoff enforcing the boundary condition"
                    .into(),
            ));
        }
        if self.problem.lambda < 0.0 {
            return Err(RitzError::Config("problem.lambda must be >= 0".into()));
        }
        match &self.dynamics {
            DynamicsConfig::Igd { eta, steps, .. } | DynamicsConfig::Gd { eta, steps, .. } => {
                if !(*eta > 0.0) || *steps == 0 {
                    return Err(RitzError::Config("dynamics needs eta > 0 and steps >= 1".into()));
                }
            }
            DynamicsConfig::GradientFlow { dt, horizon, .. } => {
                if !(*dt > 0.0) || !(*horizon > 0.0) {
                    return Err(RitzError::Config(
                        "gradient flow needs dt > 0 and horizon > 0".into(),
                    ));
                }
            }
        }
        self.build_domain()?;
        Ok(())
    }

    pub fn build_domain(&self) -> Result<Domain> {
        match &self.domain {
            DomainConfig::Hyperrectangle { lo, hi } => Domain::hyperrectangle(lo.clone(), hi.clone()),
            DomainConfig::TimeSlab { t_range, space } => {
                let sp: Vec<(f64, f64)> = space.iter().map(|r| (r[0], r[1])).collect();
                Domain::time_slab((t_range[0], t_range[1]), &sp)
            }
        }
    }

    pub fn build_network(&self, d: usize) -> Result<NetworkParams> {
        let scheme = match self.network.init.as_str() {
            "ntk" => InitScheme::Ntk,
            "random_feature" => InitScheme::RandomFeature,
            "small_normal" => InitScheme::SmallNormal {
                delta: self.network.delta.ok_or_else(|| {
                    RitzError::Config("small_normal init needs network.delta".into())
                })?,
            },
            other => return Err(RitzError::Config(format!("unknown init scheme '{other}'"))),
        };
        let mut params = crate::geometry::initialize(scheme, self.network.m, d, self.seed)?;
        if let Some(t) = &self.network.trainable {
            params.trainable = match t.as_str() {
                "outer_only" => Trainable::OuterOnly,
                "full" => Trainable::Full,
                other => {
                    return Err(RitzError::Config(format!("unknown trainable mode '{other}'")))
                }
            };
        }
        Ok(params)
    }

    fn build_operator(&self, name: &str, d: usize) -> Result<LinearOperatorSpec> {
        match name {
            "identity" => Ok(LinearOperatorSpec::identity(d)),
            "heat_1d" => {
                if d != 2 {
                    return Err(RitzError::Config("heat_1d needs a 2-d (t, x) domain".into()));
                }
                Ok(LinearOperatorSpec::heat_1d())
            }
            "neg_laplacian" => Ok(LinearOperatorSpec::neg_laplacian(d)),
            other => Err(RitzError::Config(format!("unknown operator '{other}'"))),
        }
    }

    fn cutoff_for(&self, domain: &Domain, margin: f64) -> Result<CutoffSpec> {
        CutoffSpec::new(domain.lo.clone(), domain.hi.clone(), margin)
    }

    /// Assembles the loss kind plus the (f, g) data fields, resolving
    /// manufactured solutions when requested.
    pub fn build_loss_kind(&self, domain: &Domain) -> Result<(LossKind, Field, Field)> {
        let d = domain.dim();
        let robin = RobinSpec::new(self.problem.robin[0], self.problem.robin[1])?;
        match &self.problem.kind {
            ProblemKindConfig::Burgers { nu } => {
                if !(*nu > 0.0) {
                    return Err(RitzError::Config("burgers nu must be > 0".into()));
                }
                Ok((
                    LossKind::PinnBurgers { nu: *nu },
                    Field::parse(&self.problem.f)?,
                    Field::parse(&self.problem.g)?,
                ))
            }
            ProblemKindConfig::Linear { operator, manufactured } => {
                let op = self.build_operator(operator, d)?;
                match manufactured {
                    Some(id) => {
                        let mid = ManufacturedId::parse(id)?;
                        let (_, f, g) = crate::reference::manufactured_linear(mid, &op, &robin)?;
                        Ok((LossKind::PinnLinear(op), f, g))
                    }
                    None => Ok((
                        LossKind::PinnLinear(op),
                        Field::parse(&self.problem.f)?,
                        Field::parse(&self.problem.g)?,
                    )),
                }
            }
            ProblemKindConfig::Monotone { family, p, q, h, cutoff_margin } => {
                let q = Field::parse(q)?;
                let h = HFun::parse(h)?;
                let op = match family.as_str() {
                    "p_laplace" => NonlinearOperatorSpec::PLaplaceMonotone {
                        p: p.ok_or_else(|| RitzError::Config("p_laplace needs p".into()))?,
                        q,
                        h,
                    },
                    "quasilinear" => NonlinearOperatorSpec::QuasilinearMonotone { q, h },
                    other => {
                        return Err(RitzError::Config(format!("unknown monotone family '{other}'")))
                    }
                };
                op.validate()?;
                let cutoff = self.cutoff_for(domain, *cutoff_margin)?;
                Ok((
                    LossKind::PinnMonotone { op, cutoff },
                    Field::parse(&self.problem.f)?,
                    Field::parse(&self.problem.g)?,
                ))
            }
            ProblemKindConfig::Ritz { energy, p, epsilon, cutoff_margin } => {
                let spec = match energy.as_str() {
                    "p_laplace" => EnergySpec::PLaplace {
                        p: p.ok_or_else(|| RitzError::Config("p_laplace energy needs p".into()))?,
                        f: Field::parse(&self.problem.f)?,
                    },
                    "allen_cahn" => EnergySpec::AllenCahn {
                        epsilon: epsilon
                            .ok_or_else(|| RitzError::Config("allen_cahn needs epsilon".into()))?,
                    },
                    other => {
                        return Err(RitzError::Config(format!("unknown energy '{other}'")))
                    }
                };
                spec.validate()?;
                let cutoff = match cutoff_margin {
                    Some(m) => Some(self.cutoff_for(domain, *m)?),
                    None => None,
                };
                Ok((
                    LossKind::Ritz { spec, cutoff },
                    Field::parse(&self.problem.f)?,
                    Field::parse(&self.problem.g)?,
                ))
            }
        }
    }

    /// Full loss spec with sampled collocation points.
    pub fn build_loss_spec(&self, domain: &Domain) -> Result<LossSpec> {
        let (kind, f, g) = self.build_loss_kind(domain)?;
        let robin = RobinSpec::new(self.problem.robin[0], self.problem.robin[1])?;
        let collocation = crate::geometry::sample(
            domain,
            self.collocation.n_interior,
            self.collocation.n_boundary,
            self.seed,
        )?;
        let spec = LossSpec { kind, robin, f, g, lambda: self.problem.lambda, collocation };
        spec.validate()?;
        Ok(spec)
    }
}
