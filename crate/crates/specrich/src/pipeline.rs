//! Pipeline assembly: an extraction method plus component count plus a
//! configured regressor, trainable as one unit.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::{self, ComponentModel, ExtractionMethod};
use crate::regression::{fit_gpr, fit_krr, fit_rfr, GprModel, KernelConfig, KrrModel, RfrModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressorKind {
    Krr,
    Gpr,
    Rfr,
}

impl RegressorKind {
    pub fn name(self) -> &'static str {
        match self {
            RegressorKind::Krr => "krr",
            RegressorKind::Gpr => "gpr",
            RegressorKind::Rfr => "rfr",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "krr" => Ok(RegressorKind::Krr),
            "gpr" => Ok(RegressorKind::Gpr),
            "rfr" => Ok(RegressorKind::Rfr),
            other => Err(Error::Config(format!(
                "unknown regressor {other:?}, expected krr|gpr|rfr"
            ))),
        }
    }
}

impl std::fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrrParams {
    pub kernel: KernelConfig,
    pub lambda: f64,
}

impl Default for KrrParams {
    fn default() -> Self {
        KrrParams { kernel: KernelConfig::default(), lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GprParams {
    pub kernel: KernelConfig,
    pub epsilon: f64,
    pub optimize: bool,
}

impl Default for GprParams {
    fn default() -> Self {
        GprParams { kernel: KernelConfig::default(), epsilon: 1.0, optimize: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfrParams {
    pub trees: usize,
    pub bootstrap: bool,
    pub max_features: f64,
}

impl Default for RfrParams {
    fn default() -> Self {
        RfrParams { trees: 100, bootstrap: true, max_features: 1.0 / 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegressorSpec {
    Krr(KrrParams),
    Gpr(GprParams),
    Rfr(RfrParams),
}

impl RegressorSpec {
    pub fn kind(&self) -> RegressorKind {
        match self {
            RegressorSpec::Krr(_) => RegressorKind::Krr,
            RegressorSpec::Gpr(_) => RegressorKind::Gpr,
            RegressorSpec::Rfr(_) => RegressorKind::Rfr,
        }
    }

    pub fn kernel(&self) -> Option<&KernelConfig> {
        match self {
            RegressorSpec::Krr(p) => Some(&p.kernel),
            RegressorSpec::Gpr(p) => Some(&p.kernel),
            RegressorSpec::Rfr(_) => None,
        }
    }
}

/// Full model recipe: how to extract features and how to regress on them.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub method: ExtractionMethod,
    pub k: usize,
    pub regressor: RegressorSpec,
}

impl PipelineSpec {
    pub fn new(method: ExtractionMethod, k: usize, regressor: RegressorSpec) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("component count must be at least 1".into()));
        }
        if let Some(kernel) = regressor.kernel() {
            kernel.validate()?;
        }
        Ok(PipelineSpec { method, k, regressor })
    }

    /// The same pipeline with the kernel replaced (grid-search helper).
    /// Errors for the forest, which has no kernel.
    pub fn with_kernel(&self, kernel: KernelConfig) -> Result<PipelineSpec> {
        let regressor = match &self.regressor {
            RegressorSpec::Krr(p) => RegressorSpec::Krr(KrrParams { kernel, ..p.clone() }),
            RegressorSpec::Gpr(p) => RegressorSpec::Gpr(GprParams { kernel, ..p.clone() }),
            RegressorSpec::Rfr(_) => {
                return Err(Error::Config(
                    "random forest regression has no kernel to configure".into(),
                ))
            }
        };
        Ok(PipelineSpec { method: self.method, k: self.k, regressor })
    }

    /// The same pipeline with a different component count.
    pub fn with_k(&self, k: usize) -> PipelineSpec {
        PipelineSpec { method: self.method, k, regressor: self.regressor.clone() }
    }

    /// Fits the feature extractor on training data.
    pub fn fit_extractor(&self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<ComponentModel> {
        match self.method {
            ExtractionMethod::Pca => features::fit_pca(x, self.k),
            ExtractionMethod::Cca => features::fit_cca(x, y, self.k),
            ExtractionMethod::Pls => features::fit_pls(x, y, self.k),
        }
    }

    /// Fits the configured regressor on extracted features. `seed` feeds the
    /// forest's RNG and is ignored by the kernel methods.
    pub fn fit_regressor(
        &self,
        t: &DMatrix<f64>,
        y: &DVector<f64>,
        seed: u64,
    ) -> Result<TrainedRegressor> {
        match &self.regressor {
            RegressorSpec::Krr(p) => {
                Ok(TrainedRegressor::Krr(fit_krr(t, y, &p.kernel, p.lambda)?))
            }
            RegressorSpec::Gpr(p) => {
                Ok(TrainedRegressor::Gpr(fit_gpr(t, y, &p.kernel, p.epsilon, p.optimize)?))
            }
            RegressorSpec::Rfr(p) => Ok(TrainedRegressor::Rfr(fit_rfr(
                t,
                y,
                p.trees,
                seed,
                p.bootstrap,
                p.max_features,
            )?)),
        }
    }
}

/// A fitted regressor of any kind, with a unified prediction entry point.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedRegressor {
    Krr(KrrModel),
    Gpr(GprModel),
    Rfr(RfrModel),
}

impl TrainedRegressor {
    pub fn kind(&self) -> RegressorKind {
        match self {
            TrainedRegressor::Krr(_) => RegressorKind::Krr,
            TrainedRegressor::Gpr(_) => RegressorKind::Gpr,
            TrainedRegressor::Rfr(_) => RegressorKind::Rfr,
        }
    }

    pub fn predict(&self, t_new: &DMatrix<f64>) -> Result<DVector<f64>> {
        match self {
            TrainedRegressor::Krr(m) => m.predict(t_new),
            TrainedRegressor::Gpr(m) => m.predict(t_new),
            TrainedRegressor::Rfr(m) => m.predict(t_new),
        }
    }
}
