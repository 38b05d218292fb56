//! Experiment configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::czkernel::KernelSpec;
use crate::error::{Error, Result};
use crate::lattice::Window;
use crate::spaces::{NormParams, SearchConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Experiments known to the lab.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    JnBoundedness,
    RmBoundedness,
    Equivalence,
    AtomImage,
    Duality,
    Decomposition,
    VanishingMoments,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 7] = [
        ExperimentName::JnBoundedness,
        ExperimentName::RmBoundedness,
        ExperimentName::Equivalence,
        ExperimentName::AtomImage,
        ExperimentName::Duality,
        ExperimentName::Decomposition,
        ExperimentName::VanishingMoments,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::JnBoundedness => "jn-boundedness",
            ExperimentName::RmBoundedness => "rm-boundedness",
            ExperimentName::Equivalence => "equivalence",
            ExperimentName::AtomImage => "atom-image",
            ExperimentName::Duality => "duality",
            ExperimentName::Decomposition => "decomposition",
            ExperimentName::VanishingMoments => "vanishing-moments",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == name)
            .ok_or_else(|| Error::Config(format!("unknown experiment {name:?}")))
    }
}

/// Kinds of seeded test functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// Sums of at most eight scaled indicators and sinusoid-modulated bumps.
    RandomOsc,
    /// Random-osc restricted to smooth compactly supported components.
    SmoothOsc,
    /// Indicators of half-spaces with random thresholds.
    Step,
    /// Random polynomials of degree at most `s`.
    Polynomial,
    /// Seeded atoms on a central cube.
    Atom,
    /// Nonzero constants.
    Constant,
    /// The zero function.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub count: usize,
    pub seed: u64,
}

/// Sampling domain: bounds per axis; the cell count comes from `refinements`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainSpec {
    pub fn n(&self) -> usize {
        self.lower.len()
    }

    /// Window with `cells` cells along every axis.
    pub fn window(&self, cells: usize) -> Result<Window> {
        Window::new(&self.lower, &self.upper, &vec![cells; self.n()])
    }
}

/// Declared property thresholds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Largest admissible factor between refinement levels.
    pub stability: f64,
    /// Largest admissible spread of an equivalence bracket.
    pub bracket_spread: f64,
    /// Largest admissible factor between amalgam and Riesz–Morrey ratios.
    pub amalgam_agreement: f64,
    /// Relative pairing mismatch.
    pub duality: f64,
    /// Relative `L¹` reconstruction residual.
    pub reconstruction: f64,
    /// Relative gap to the closed-form coefficient sum.
    pub closed_form: f64,
    /// Vanishing-moment threshold for operator images.
    pub vanishing_moment: f64,
    /// Largest admissible spread of Hardy-type bounds over a family.
    pub hk_spread: f64,
    /// Padding-doubling sensitivity that triggers a truncation warning.
    pub sensitivity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            stability: 2.0,
            bracket_spread: 64.0,
            amalgam_agreement: 4.0,
            duality: crate::tol::DUALITY_REL,
            reconstruction: crate::tol::RECONSTRUCTION_REL,
            closed_form: 0.1,
            vanishing_moment: crate::tol::VANISHING_MOMENT,
            hk_spread: 4.0,
            sensitivity: crate::tol::VANISHING_MOMENT,
        }
    }
}

/// Full description of one experiment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentName,
    pub kernel: KernelSpec,
    pub params: NormParams,
    pub domain: DomainSpec,
    /// Cells per axis, one run per entry.
    pub refinements: Vec<usize>,
    pub family: FamilySpec,
    /// Dilation factor of operator windows around atom supports.
    pub padding: usize,
    /// Regularity exponent of the kernel class.
    pub delta: f64,
    /// Molecule decay exponent; the midpoint of the admissible window when absent.
    pub epsilon: Option<f64>,
    /// Cells per side of atom supports.
    pub atom_cells: usize,
    /// Side of atom supports.
    pub atom_side: f64,
    /// Number of atoms in atom-based experiments.
    pub atoms: usize,
    /// Amalgam radius, or the largest ball radius of the equivalence search.
    pub radius: Option<f64>,
    /// Padding factor of the truncated integrals in `T̃(x^γ)`.
    pub monomial_padding: usize,
    /// Output directory.
    pub output: Option<String>,
    pub search: SearchConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    /// Defaults at desk scale for each experiment.
    pub fn default_for(experiment: ExperimentName) -> Self {
        let p = |p, q, s, a| NormParams { p, q, s, alpha: a };
        let family = |kind, count| FamilySpec {
            kind,
            count,
            seed: 20240601,
        };
        let base = Self {
            schema_version: SCHEMA_VERSION,
            experiment,
            kernel: KernelSpec::Hilbert,
            params: p(2.0, 2.0, 0, 0.1),
            domain: DomainSpec {
                lower: vec![-1.0],
                upper: vec![1.0],
            },
            refinements: vec![128, 256],
            family: family(FamilyKind::RandomOsc, 20),
            padding: 64,
            delta: 1.0,
            epsilon: None,
            atom_cells: 16,
            atom_side: 1.0,
            atoms: 10,
            radius: None,
            monomial_padding: 1024,
            output: None,
            search: SearchConfig::default(),
            tolerances: Tolerances::default(),
        };
        match experiment {
            ExperimentName::JnBoundedness => base,
            ExperimentName::RmBoundedness => Self {
                params: p(2.0, 2.0, 0, 0.0),
                ..base
            },
            ExperimentName::Equivalence => Self {
                family: family(FamilyKind::RandomOsc, 50),
                ..base
            },
            ExperimentName::AtomImage => Self {
                params: p(2.0, 2.0, 0, 0.25),
                epsilon: Some(0.3),
                padding: 128,
                ..base
            },
            ExperimentName::Duality => Self {
                params: p(2.0, 2.0, 0, 0.25),
                family: family(FamilyKind::SmoothOsc, 5),
                padding: 8,
                ..base
            },
            ExperimentName::Decomposition => Self {
                params: p(2.0, 2.0, 0, 0.25),
                epsilon: Some(0.3),
                padding: 128,
                ..base
            },
            ExperimentName::VanishingMoments => Self {
                params: p(2.0, 2.0, 0, 0.25),
                padding: 512,
                ..base
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.params.validate().map_err(|e| Error::Config(e.to_string()))?;
        let n = self.domain.n();
        if !(1..=2).contains(&n) || self.domain.upper.len() != n {
            return Err(Error::Config(
                "domain must be 1- or 2-dimensional with matching bounds".into(),
            ));
        }
        if self.refinements.is_empty() {
            return Err(Error::Config("at least one refinement is required".into()));
        }
        for &c in &self.refinements {
            self.domain.window(c).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.kernel.check(n, 0).map_err(|e| Error::Config(e.to_string()))?;
        if self.family.count == 0 {
            return Err(Error::Config("empty family".into()));
        }
        if self.padding < 4 {
            return Err(Error::Config(format!("padding factor {} below 4", self.padding)));
        }
        if self.monomial_padding < 4 {
            return Err(Error::Config(format!(
                "monomial padding factor {} below 4",
                self.monomial_padding
            )));
        }
        if self.atoms == 0 || self.atom_cells < self.params.s + 2 || !(self.atom_side > 0.0) {
            return Err(Error::Config(
                "atoms need a positive count, side and at least s + 2 cells".into(),
            ));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(Error::Config(format!("radius {r}")));
            }
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Config(format!("δ = {} outside (0, 1]", self.delta)));
        }
        Ok(())
    }
}
