//! Run configuration shared by the command-line tools.
//!
//! A config is a JSON object; every field is optional in the file and may be
//! filled in or overridden from flags. Resolution into library objects
//! happens here so errors can name the offending key.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::InterpOptions;
use crate::kernels::{FeatureMap, OperatorKernel, ScalarKernel, DEFAULT_FOCK_ORDER};
use crate::linalg::{serde_rows, Matrix, RankPolicy, Vector};
use crate::subspace::{Route, SubspaceOptions};
use crate::systems::catalog::{catalog_model, Model};
use crate::systems::{make_lti_ar, Nonlinearity, StateSpaceModel};

/// A catalog name or an inline model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Named(String),
    Inline(InlineModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InlineModel {
    /// Matrices as lists of rows. `nonlinearity` is `identity`, `tanh` or
    /// `polyK`; `B` and `D` have as many columns as the feature map outputs.
    StateSpace {
        #[serde(with = "serde_rows")]
        a: Matrix,
        #[serde(with = "serde_rows")]
        b: Matrix,
        #[serde(with = "serde_rows")]
        c: Matrix,
        #[serde(with = "serde_rows")]
        d: Matrix,
        nonlinearity: String,
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
    /// `y_{t+L} + sum_k A_k y_{t+L-k} = sum_l B_l u_{t+L-l}`.
    LtiAr { a: Vec<Vec<Vec<f64>>>, b: Vec<Vec<Vec<f64>>> },
}

/// Parses `identity`, `tanh`, `poly2`, ... into a feature map on `R^m`.
pub fn feature_map_by_name(name: &str, m: usize, key: &str) -> Result<FeatureMap> {
    match name {
        "identity" => Ok(FeatureMap::Identity { dim: m }),
        "tanh" => Ok(FeatureMap::Tanh { dim: m }),
        other => match other.strip_prefix("poly").and_then(|d| d.parse::<usize>().ok()) {
            Some(degree) if degree >= 1 => Ok(FeatureMap::Polynomial { dim: m, degree }),
            _ => Err(Error::config(
                key,
                format!("unknown feature map `{other}` (expected identity, tanh or polyK)"),
            )),
        },
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], key: &str) -> Result<Matrix> {
    serde_rows::from_rows(rows).map_err(|e| Error::config(key, e))
}

impl ModelSpec {
    pub fn resolve(&self) -> Result<Model> {
        match self {
            ModelSpec::Named(name) => catalog_model(name),
            ModelSpec::Inline(InlineModel::StateSpace {
                a,
                b,
                c,
                d,
                nonlinearity,
                x0,
            }) => {
                let q = b.ncols();
                let degree = match nonlinearity.strip_prefix("poly") {
                    Some(k) => k.parse::<usize>().unwrap_or(0),
                    None => 1,
                };
                if degree == 0 || q % degree != 0 {
                    return Err(Error::config(
                        "model.nonlinearity",
                        format!("`{nonlinearity}` does not fit B with {q} columns"),
                    ));
                }
                let phi = feature_map_by_name(nonlinearity, q / degree, "model.nonlinearity")?;
                let n = a.nrows();
                let x0 = match x0 {
                    Some(v) => Vector::from_column_slice(v),
                    None => Vector::zeros(n),
                };
                StateSpaceModel::new(a.clone(), b.clone(), c.clone(), d.clone(), Nonlinearity::Shared(phi), x0)
                    .map(Model::StateSpace)
                    .map_err(|e| Error::config("model", e.to_string()))
            }
            ModelSpec::Inline(InlineModel::LtiAr { a, b }) => {
                let a = a
                    .iter()
                    .map(|m| rows_to_matrix(m, "model.a"))
                    .collect::<Result<Vec<_>>>()?;
                let b = b
                    .iter()
                    .map(|m| rows_to_matrix(m, "model.b"))
                    .collect::<Result<Vec<_>>>()?;
                make_lti_ar(a, b)
                    .map(Model::Ar)
                    .map_err(|e| Error::config("model", e.to_string()))
            }
        }
    }
}

/// How a scalar kernel is lifted onto regression vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    /// Scalar kernel on the input window plus a linear kernel on past outputs.
    #[default]
    Regression,
    /// Scalar kernel on the whole regression vector.
    Lift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    Linear {
        #[serde(default)]
        structure: Structure,
    },
    Gaussian {
        sigma: f64,
        #[serde(default)]
        structure: Structure,
    },
    /// Either explicit weights `rho` or all-ones weights up to `order`.
    Fock {
        #[serde(default)]
        rho: Option<Vec<f64>>,
        #[serde(default)]
        order: Option<usize>,
        #[serde(default)]
        structure: Structure,
    },
    Polynomial {
        degree: u32,
        #[serde(default)]
        structure: Structure,
    },
    /// Rank-one kernel `phi phiᵀ` for subspace identification.
    Feature {
        map: String,
        /// Replace `phi` with a lookup table over the training inputs.
        #[serde(default)]
        tabulate: bool,
    },
}

impl KernelSpec {
    fn scalar(&self) -> Result<(ScalarKernel, Structure)> {
        let bad = |e: Error| Error::config("kernel", e.to_string());
        match self {
            KernelSpec::Linear { structure } => Ok((ScalarKernel::Linear, *structure)),
            KernelSpec::Gaussian { sigma, structure } => Ok((ScalarKernel::gaussian(*sigma).map_err(bad)?, *structure)),
            KernelSpec::Fock { rho, order, structure } => {
                let k = match (rho, order) {
                    (Some(_), Some(_)) => return Err(Error::config("kernel", "give either `rho` or `order`, not both")),
                    (Some(r), None) => ScalarKernel::fock(r.clone()).map_err(bad)?,
                    (None, o) => ScalarKernel::fock_exp(o.unwrap_or(DEFAULT_FOCK_ORDER)),
                };
                Ok((k, *structure))
            }
            KernelSpec::Polynomial { degree, structure } => Ok((ScalarKernel::Polynomial { degree: *degree }, *structure)),
            KernelSpec::Feature { .. } => Err(Error::config(
                "kernel.kind",
                "a feature kernel cannot be used for interpolation",
            )),
        }
    }

    /// Kernel on regression vectors for `m` inputs, `p` outputs and lag `L`.
    pub fn interp_kernel(&self, m: usize, p: usize, lag: usize) -> Result<OperatorKernel> {
        let (scalar, structure) = self.scalar()?;
        let bad = |e: Error| Error::config("kernel", e.to_string());
        match structure {
            Structure::Regression => OperatorKernel::regression(scalar, m, p, lag).map_err(bad),
            Structure::Lift => OperatorKernel::scalar_lift(scalar, m * (lag + 1) + p * lag, p).map_err(bad),
        }
    }

    /// Rank-one feature kernel on `R^m`; `inputs` feed the lookup table when
    /// `tabulate` is set.
    pub fn feature_kernel(&self, m: usize, inputs: &[Vector]) -> Result<OperatorKernel> {
        match self {
            KernelSpec::Feature { map, tabulate } => {
                let phi = feature_map_by_name(map, m, "kernel.map")?;
                if *tabulate {
                    let table = crate::kernels::FeatureTable::tabulate(&phi, inputs)
                        .map_err(|e| Error::config("kernel.tabulate", e.to_string()))?;
                    Ok(OperatorKernel::rank_one(FeatureMap::Table(table)))
                } else {
                    Ok(OperatorKernel::rank_one(phi))
                }
            }
            _ => Err(Error::config(
                "kernel.kind",
                "subspace identification needs `{\"kind\": \"feature\", ...}`",
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states_csv: Option<PathBuf>,
}

impl OutputPaths {
    fn is_empty(&self) -> bool {
        *self == OutputPaths::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lag: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// State dimension; estimated from the spectrum of `Π` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_policy: Option<RankPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub membership_tol: Option<f64>,
    /// Known `|f_*|^2` for the bound check of the interpolation report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_star_norm_sq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<Route>,
    #[serde(default, skip_serializing_if = "OutputPaths::is_empty")]
    pub outputs: OutputPaths,
}

fn positive(x: f64, key: &str) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::config(key, format!("must be positive and finite, got {x}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn lag(&self) -> Result<usize> {
        match self.lag {
            Some(0) => Err(Error::config("lag", "must be at least 1")),
            Some(l) => Ok(l),
            None => Err(Error::config("lag", "missing")),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::config("seed", "a seed is required for randomized generation"))
    }

    pub fn model(&self) -> Result<Model> {
        self.model
            .as_ref()
            .ok_or_else(|| Error::config("model", "missing"))?
            .resolve()
    }

    pub fn policy(&self) -> Result<RankPolicy> {
        match self.rank_policy {
            None => Ok(RankPolicy::default()),
            Some(RankPolicy::RelativeThreshold { rel_tol }) => {
                RankPolicy::relative(positive(rel_tol, "rank_policy.rel_tol")?)
            }
            Some(p) => Ok(p),
        }
    }

    pub fn interp_options(&self) -> Result<InterpOptions> {
        let d = InterpOptions::default();
        Ok(InterpOptions {
            policy: self.policy()?,
            sigma_tol: self.sigma_tol.map_or(Ok(d.sigma_tol), |x| positive(x, "sigma_tol"))?,
            feasibility_tol: self
                .feasibility_tol
                .map_or(Ok(d.feasibility_tol), |x| positive(x, "feasibility_tol"))?,
        })
    }

    pub fn subspace_options(&self) -> Result<SubspaceOptions> {
        let d = SubspaceOptions::default();
        Ok(SubspaceOptions {
            policy: self.policy()?,
            membership_tol: self
                .membership_tol
                .map_or(Ok(d.membership_tol), |x| positive(x, "membership_tol"))?,
        })
    }

    /// Interpolation kernel, linear in the regression layout by default.
    pub fn interp_kernel(&self, m: usize, p: usize, lag: usize) -> Result<OperatorKernel> {
        self.kernel
            .clone()
            .unwrap_or(KernelSpec::Linear {
                structure: Structure::Regression,
            })
            .interp_kernel(m, p, lag)
    }

    /// Subspace kernel, the identity feature map by default.
    pub fn feature_kernel(&self, m: usize, inputs: &[Vector]) -> Result<OperatorKernel> {
        self.kernel
            .clone()
            .unwrap_or(KernelSpec::Feature {
                map: "identity".into(),
                tabulate: false,
            })
            .feature_kernel(m, inputs)
    }

    /// Fields of `over` replace those of `self` where set.
    pub fn merged(mut self, over: RunConfig) -> RunConfig {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(model, kernel, lag, horizon, seed, order, rank_policy, sigma_tol, feasibility_tol, membership_tol, f_star_norm_sq, route);
        let o = over.outputs;
        if o.trajectory.is_some() {
            self.outputs.trajectory = o.trajectory;
        }
        if o.report.is_some() {
            self.outputs.report = o.report;
        }
        if o.pi_csv.is_some() {
            self.outputs.pi_csv = o.pi_csv;
        }
        if o.states_csv.is_some() {
            self.outputs.states_csv = o.states_csv;
        }
        self
    }
}
