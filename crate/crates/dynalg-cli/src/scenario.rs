//! Scenario documents: parsing with JSON-pointer diagnostics, semantic
//! validation and resolution of named objects into library values.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dynalg::algebra::{FieldData, GeneratorTable};
use dynalg::functionals::{InteractionPotential, Lagrangian, LocalFunctional};
use dynalg::interacting::{diamond_cutoff, diamond_region, CutoffFamily};
use dynalg::lattice::{bump_profile, GridField, Lattice};
use dynalg::spacetime::{Cuboid, MinkowskiConfig, Region};

use crate::error::CliError;

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "schema_version")]
    pub schema_version: String,
    pub minkowski: MinkowskiDoc,
    pub lattice: LatticeDoc,
    pub lagrangian: LagrangianDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialDoc>,
    #[serde(default)]
    pub objects: BTreeMap<String, ObjectDoc>,
    #[serde(default)]
    pub checks: Vec<CheckDoc>,
    #[serde(default)]
    pub seed: u64,
}

fn schema_version() -> String {
    SCHEMA_VERSION.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinkowskiDoc {
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatticeDoc {
    /// Box [lo, hi] with spatial spacing dx and the stable time step for the mass.
    Covering { lo: Vec<f64>, hi: Vec<f64>, dx: f64 },
    Explicit {
        origin: Vec<f64>,
        spacing: Vec<f64>,
        counts: Vec<usize>,
        #[serde(default)]
        periodic: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LagrangianDoc {
    pub mass: f64,
    #[serde(default)]
    pub couplings: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialDoc {
    pub increments: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectDoc {
    Bump {
        center: Vec<f64>,
        radii: Vec<f64>,
        amplitude: f64,
    },
    Field {
        data: FieldData,
    },
    Plateau {
        lo: Vec<f64>,
        hi: Vec<f64>,
        ramp: f64,
    },
    DiamondCutoff {
        center: Vec<f64>,
        radius: f64,
        ramp: f64,
    },
    /// Time bump times Σ_k a_k cos(2πk x/L + θ_k) along the first spatial axis.
    Wave {
        time_center: f64,
        time_radius: f64,
        modes: Vec<(f64, f64)>,
    },
    /// Sum of fields with weights.
    Combination {
        terms: Vec<(f64, String)>,
    },
    Region {
        boxes: Vec<(Vec<f64>, Vec<f64>)>,
    },
    DiamondRegion {
        center: Vec<f64>,
        radius: f64,
    },
    /// constant + Σ_n ∫ g_n φⁿ with field names (null for a zero coefficient).
    Functional {
        #[serde(default)]
        constant: f64,
        coefficients: Vec<Option<String>>,
    },
    CutoffFamily {
        center: Vec<f64>,
        radii: Vec<f64>,
        gap: f64,
        ramp: f64,
    },
}

impl ObjectDoc {
    fn category(&self) -> Category {
        match self {
            ObjectDoc::Bump { .. }
            | ObjectDoc::Field { .. }
            | ObjectDoc::Plateau { .. }
            | ObjectDoc::DiamondCutoff { .. }
            | ObjectDoc::Wave { .. }
            | ObjectDoc::Combination { .. } => Category::Field,
            ObjectDoc::Region { .. } | ObjectDoc::DiamondRegion { .. } => Category::Region,
            ObjectDoc::Functional { .. } => Category::Functional,
            ObjectDoc::CutoffFamily { .. } => Category::Family,
        }
    }

    fn references(&self) -> Vec<(String, &str, Category)> {
        match self {
            ObjectDoc::Combination { terms } => terms
                .iter()
                .enumerate()
                .map(|(i, (_, n))| (format!("terms/{i}/1"), n.as_str(), Category::Field))
                .collect(),
            ObjectDoc::Functional { coefficients, .. } => coefficients
                .iter()
                .enumerate()
                .filter_map(|(i, n)| n.as_deref().map(|n| (format!("coefficients/{i}"), n, Category::Field)))
                .collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Field,
    Region,
    /// A functional object, or a field read as φ(f).
    Functional,
    Family,
}

impl Category {
    fn name(self) -> &'static str {
        match self {
            Category::Field => "field",
            Category::Region => "region",
            Category::Functional => "functional",
            Category::Family => "cutoff family",
        }
    }

    fn accepts(self, got: Category) -> bool {
        self == got || (self == Category::Functional && got == Category::Field)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckDoc {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(flatten)]
    pub spec: CheckSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineDoc {
    Solver,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductKindDoc {
    Pointwise,
    Star,
    Tord,
    Wick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckSpec {
    /// Order of ‖K₄ Δ_R f − f‖/‖f‖ under dyadic refinement of the lattice.
    GreenConvergence {
        center: Vec<f64>,
        radii: Vec<f64>,
        #[serde(default = "three")]
        levels: usize,
    },
    /// Antisymmetry of Δ, symmetry of Δ_D and ⟨f, Δf⟩ = 0.
    PropagatorSymmetry { f: String, g: String },
    /// Mechanized Weyl relation against the propagator phase.
    Weyl { f: String, g: String },
    /// Weyl relations on random bump pairs drawn from the scenario seed.
    WeylRandom {
        count: usize,
        #[serde(default)]
        spacelike: bool,
    },
    /// Vacuum expectation of W(f) in the truncated Fock oracle.
    Fock { f: String },
    /// S(F₁)S(F₂) = S(F₁ + F₂) by a single causal merge.
    CausalMerge { f1: String, f2: String },
    /// S(δL(φ₁))S(δL(φ₂)) = S(δL(φ₁ + φ₂)) by proof search.
    Dynamical { phi1: String, phi2: String },
    /// Proof search between two word expressions.
    Prove { lhs: String, rhs: String },
    InteractingDynamics { chi: String, f: String, phi0: String },
    InteractingCausal { chi: String, f1: String, f2: String, f3: String },
    PastFactorization { chi: String, f: String },
    FutureConjugation { chi: String, f: String },
    Intertwiner {
        chi1: String,
        chi2: String,
        region: String,
        samples: Vec<String>,
    },
    Coherence { family: String, f: String, level: usize },
    SdResidual {
        g: String,
        phi0: String,
        #[serde(default = "solver")]
        engine: EngineDoc,
    },
    ProductAssociativity {
        f: String,
        g: String,
        h: String,
        product: ProductKindDoc,
    },
}

fn three() -> usize {
    3
}

fn solver() -> EngineDoc {
    EngineDoc::Solver
}

impl CheckSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            CheckSpec::GreenConvergence { .. } => "green_convergence",
            CheckSpec::PropagatorSymmetry { .. } => "propagator_symmetry",
            CheckSpec::Weyl { .. } => "weyl",
            CheckSpec::WeylRandom { .. } => "weyl_random",
            CheckSpec::Fock { .. } => "fock",
            CheckSpec::CausalMerge { .. } => "causal_merge",
            CheckSpec::Dynamical { .. } => "dynamical",
            CheckSpec::Prove { .. } => "prove",
            CheckSpec::InteractingDynamics { .. } => "interacting_dynamics",
            CheckSpec::InteractingCausal { .. } => "interacting_causal",
            CheckSpec::PastFactorization { .. } => "past_factorization",
            CheckSpec::FutureConjugation { .. } => "future_conjugation",
            CheckSpec::Intertwiner { .. } => "intertwiner",
            CheckSpec::Coherence { .. } => "coherence",
            CheckSpec::SdResidual { .. } => "sd_residual",
            CheckSpec::ProductAssociativity { .. } => "product_associativity",
        }
    }

    /// Default tolerance on the measured residual.
    pub fn default_tolerance(&self) -> f64 {
        match self {
            CheckSpec::GreenConvergence { .. } => 0.2,
            CheckSpec::PropagatorSymmetry { .. } => 1e-6,
            CheckSpec::Weyl { .. } | CheckSpec::WeylRandom { .. } => 1e-6,
            CheckSpec::Fock { .. } => 1e-4,
            CheckSpec::SdResidual { .. } => 1e-8,
            CheckSpec::ProductAssociativity { .. } => 1e-10,
            CheckSpec::InteractingDynamics { .. } => 1e-10,
            _ => 1e-8,
        }
    }

    pub fn default_budget(&self) -> usize {
        200
    }

    /// Object references as (JSON key, name, expected category).
    fn references(&self) -> Vec<(&'static str, &str, Category)> {
        use Category::*;
        match self {
            CheckSpec::GreenConvergence { .. } | CheckSpec::WeylRandom { .. } | CheckSpec::Prove { .. } => Vec::new(),
            CheckSpec::PropagatorSymmetry { f, g } | CheckSpec::Weyl { f, g } => vec![("f", f, Field), ("g", g, Field)],
            CheckSpec::Fock { f } => vec![("f", f, Field)],
            CheckSpec::CausalMerge { f1, f2 } => vec![("f1", f1, Functional), ("f2", f2, Functional)],
            CheckSpec::Dynamical { phi1, phi2 } => vec![("phi1", phi1, Field), ("phi2", phi2, Field)],
            CheckSpec::InteractingDynamics { chi, f, phi0 } => {
                vec![("chi", chi, Field), ("f", f, Functional), ("phi0", phi0, Field)]
            }
            CheckSpec::InteractingCausal { chi, f1, f2, f3 } => vec![
                ("chi", chi, Field),
                ("f1", f1, Functional),
                ("f2", f2, Functional),
                ("f3", f3, Functional),
            ],
            CheckSpec::PastFactorization { chi, f } | CheckSpec::FutureConjugation { chi, f } => {
                vec![("chi", chi, Field), ("f", f, Functional)]
            }
            CheckSpec::Intertwiner {
                chi1,
                chi2,
                region,
                samples,
            } => {
                let mut v = vec![("chi1", chi1.as_str(), Field), ("chi2", chi2, Field), ("region", region, Region)];
                v.extend(samples.iter().map(|s| ("samples", s.as_str(), Functional)));
                v
            }
            CheckSpec::Coherence { family, f, .. } => vec![("family", family, Family), ("f", f, Functional)],
            CheckSpec::SdResidual { g, phi0, .. } => vec![("g", g, Field), ("phi0", phi0, Field)],
            CheckSpec::ProductAssociativity { f, g, h, .. } => vec![("f", f, Field), ("g", g, Field), ("h", h, Field)],
        }
    }

    fn needs_potential(&self) -> bool {
        matches!(
            self,
            CheckSpec::InteractingDynamics { .. }
                | CheckSpec::InteractingCausal { .. }
                | CheckSpec::PastFactorization { .. }
                | CheckSpec::FutureConjugation { .. }
                | CheckSpec::Intertwiner { .. }
                | CheckSpec::Coherence { .. }
        )
    }
}

impl CheckDoc {
    pub fn tolerance(&self) -> f64 {
        self.tolerance.unwrap_or_else(|| self.spec.default_tolerance())
    }

    pub fn budget(&self) -> usize {
        self.budget.unwrap_or_else(|| self.spec.default_budget())
    }
}

/// JSON pointer from a serde path such as `checks[2].tolerance`.
pub(crate) fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", escape(key))),
            Segment::Enum { variant } => out.push_str(&format!("/{}", escape(variant))),
            Segment::Unknown => {}
        }
    }
    out
}

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| CliError::Schema {
            pointer: pointer_of(e.path()),
            message: e.inner().to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn validate(&self) -> Result<(), CliError> {
        let fail = |pointer: String, message: String| Err(CliError::Schema { pointer, message });
        if self.schema_version.split('.').next() != SCHEMA_VERSION.split('.').next() {
            return fail(
                "/schema_version".into(),
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.schema_version),
            );
        }
        let d = self.minkowski.dimension;
        if d < 2 {
            return fail("/minkowski/dimension".into(), "dimension must be at least 2".into());
        }
        let lattice_dim = match &self.lattice {
            LatticeDoc::Covering { lo, hi, .. } => {
                if lo.len() != hi.len() {
                    return fail("/lattice/hi".into(), "lo and hi differ in length".into());
                }
                lo.len()
            }
            LatticeDoc::Explicit { origin, .. } => origin.len(),
        };
        if lattice_dim != d {
            return fail(
                "/lattice".into(),
                format!("lattice has dimension {lattice_dim}, minkowski says {d}"),
            );
        }
        if !(self.lagrangian.mass >= 0.0) {
            return fail("/lagrangian/mass".into(), "mass must be non-negative".into());
        }
        for (name, obj) in &self.objects {
            for (key, target, want) in obj.references() {
                let at = format!("/objects/{}/{key}", escape(name));
                match self.objects.get(target) {
                    None => return fail(at, format!("unknown object '{target}'")),
                    Some(o) if !want.accepts(o.category()) => {
                        return fail(at, format!("'{target}' is a {}, expected a {}", o.category().name(), want.name()))
                    }
                    _ => {}
                }
            }
        }
        self.acyclic()?;
        let mut names = std::collections::HashSet::new();
        for (i, c) in self.checks.iter().enumerate() {
            let at = |key: &str| format!("/checks/{i}/{key}");
            if !names.insert(c.name.as_str()) {
                return fail(at("name"), format!("duplicate check name '{}'", c.name));
            }
            if let Some(t) = c.tolerance {
                if !(t > 0.0) {
                    return fail(at("tolerance"), "tolerance must be positive".into());
                }
            }
            if c.budget == Some(0) {
                return fail(at("budget"), "budget must be positive".into());
            }
            for (key, target, want) in c.spec.references() {
                match self.objects.get(target) {
                    None => return fail(at(key), format!("unknown object '{target}'")),
                    Some(o) if !want.accepts(o.category()) => {
                        return fail(at(key), format!("'{target}' is a {}, expected a {}", o.category().name(), want.name()))
                    }
                    _ => {}
                }
            }
            if c.spec.needs_potential() && self.potential.is_none() {
                return fail(at("kind"), format!("{} needs a top-level potential", c.spec.kind()));
            }
        }
        Ok(())
    }

    fn acyclic(&self) -> Result<(), CliError> {
        fn visit<'a>(s: &'a Scenario, name: &'a str, stack: &mut Vec<&'a str>) -> Result<(), CliError> {
            if stack.contains(&name) {
                return Err(CliError::Schema {
                    pointer: format!("/objects/{}", escape(name)),
                    message: format!("cyclic reference through {}", stack.join(" -> ")),
                });
            }
            stack.push(name);
            if let Some(o) = s.objects.get(name) {
                for (_, t, _) in o.references() {
                    visit(s, t, stack)?;
                }
            }
            stack.pop();
            Ok(())
        }
        for name in self.objects.keys() {
            visit(self, name, &mut Vec::new())?;
        }
        Ok(())
    }

    pub fn build_lattice(&self) -> Result<Arc<Lattice>, CliError> {
        let l = match &self.lattice {
            LatticeDoc::Covering { lo, hi, dx } => Lattice::covering(lo, hi, *dx, self.lagrangian.mass),
            LatticeDoc::Explicit {
                origin,
                spacing,
                counts,
                periodic,
            } => Lattice::with_boundary(origin.clone(), spacing.clone(), counts.clone(), *periodic),
        };
        MinkowskiConfig::new(self.minkowski.dimension).map_err(|e| CliError::runtime("minkowski", e))?;
        l.map(Arc::new).map_err(|e| CliError::Schema {
            pointer: "/lattice".into(),
            message: e.to_string(),
        })
    }

    pub fn build_lagrangian(&self) -> Result<Lagrangian, CliError> {
        Lagrangian::new(self.lagrangian.mass, self.lagrangian.couplings.clone()).map_err(|e| CliError::Schema {
            pointer: "/lagrangian".into(),
            message: e.to_string(),
        })
    }

    pub fn build_potential(&self) -> Option<InteractionPotential> {
        self.potential.as_ref().map(|p| InteractionPotential::new(p.increments.clone()))
    }
}

/// Resolved scenario: lattice, Lagrangian and lazily built objects.
pub struct World {
    pub scenario: Scenario,
    pub lattice: Arc<Lattice>,
    pub lagrangian: Lagrangian,
    pub potential: Option<InteractionPotential>,
    fields: std::sync::Mutex<HashMap<String, GridField>>,
}

impl World {
    pub fn new(scenario: Scenario) -> Result<Self, CliError> {
        let lattice = scenario.build_lattice()?;
        let lagrangian = scenario.build_lagrangian()?;
        let potential = scenario.build_potential();
        Ok(Self {
            scenario,
            lattice,
            lagrangian,
            potential,
            fields: std::sync::Mutex::new(HashMap::new()),
        })
    }

    /// A fresh generator table; every check gets its own so that interning
    /// order never depends on scheduling.
    pub fn table(&self) -> GeneratorTable {
        GeneratorTable::new(&self.lattice, self.lagrangian.clone())
    }

    fn object(&self, name: &str) -> Result<&ObjectDoc, CliError> {
        self.scenario
            .objects
            .get(name)
            .ok_or_else(|| CliError::Invalid(format!("unknown object '{name}'")))
    }

    fn err(name: &str, e: dynalg::Error) -> CliError {
        CliError::Invalid(format!("object '{name}': {e}"))
    }

    pub fn field(&self, name: &str) -> Result<GridField, CliError> {
        if let Some(f) = self.fields.lock().unwrap().get(name) {
            return Ok(f.clone());
        }
        let l = &self.lattice;
        let f = match self.object(name)? {
            ObjectDoc::Bump {
                center,
                radii,
                amplitude,
            } => GridField::bump(l, center, radii, *amplitude),
            ObjectDoc::Field { data } => {
                let v = data.decode().map_err(|e| Self::err(name, e))?;
                GridField::from_samples(l, v).map_err(|e| Self::err(name, e))?
            }
            ObjectDoc::Plateau { lo, hi, ramp } => {
                let inner = Cuboid::new(lo.clone(), hi.clone()).map_err(|e| Self::err(name, e))?;
                GridField::plateau(l, &inner, *ramp)
            }
            ObjectDoc::DiamondCutoff { center, radius, ramp } => diamond_cutoff(l, center, *radius, *ramp),
            ObjectDoc::Wave {
                time_center,
                time_radius,
                modes,
            } => {
                let len = l.counts()[1] as f64 * l.spacing()[1];
                GridField::from_fn(l, |p| {
                    let s = bump_profile((p[0] - time_center) / time_radius);
                    if s == 0.0 {
                        return 0.0;
                    }
                    let x: f64 = modes
                        .iter()
                        .enumerate()
                        .map(|(k, (a, th))| a * (std::f64::consts::TAU * k as f64 * p[1] / len + th).cos())
                        .sum();
                    s * x
                })
            }
            ObjectDoc::Combination { terms } => {
                let mut acc = GridField::zeros(l);
                for (w, n) in terms {
                    acc = acc.axpy(*w, &self.field(n)?).map_err(|e| Self::err(name, e))?;
                }
                acc
            }
            other => {
                return Err(CliError::Invalid(format!(
                    "object '{name}' is a {}, expected a field",
                    other.category().name()
                )))
            }
        };
        self.fields.lock().unwrap().insert(name.to_string(), f.clone());
        Ok(f)
    }

    pub fn functional(&self, name: &str) -> Result<LocalFunctional, CliError> {
        match self.object(name)? {
            ObjectDoc::Functional { constant, coefficients } => {
                let coeffs = coefficients
                    .iter()
                    .map(|c| match c {
                        Some(n) => self.field(n),
                        None => Ok(GridField::zeros(&self.lattice)),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                LocalFunctional::new(&self.lattice, *constant, coeffs).map_err(|e| Self::err(name, e))
            }
            _ => Ok(LocalFunctional::linear(&self.field(name)?, 0.0)),
        }
    }

    pub fn region(&self, name: &str) -> Result<Region, CliError> {
        let d = self.lattice.dimension();
        match self.object(name)? {
            ObjectDoc::Region { boxes } => {
                let boxes = boxes
                    .iter()
                    .map(|(lo, hi)| Cuboid::new(lo.clone(), hi.clone()))
                    .collect::<dynalg::Result<Vec<_>>>()
                    .map_err(|e| Self::err(name, e))?;
                Region::from_boxes(d, boxes).map_err(|e| Self::err(name, e))
            }
            ObjectDoc::DiamondRegion { center, radius } => {
                diamond_region(&self.lattice, center, *radius).map_err(|e| Self::err(name, e))
            }
            _ => Err(CliError::Invalid(format!("object '{name}' is not a region"))),
        }
    }

    pub fn family(&self, name: &str) -> Result<CutoffFamily, CliError> {
        match self.object(name)? {
            ObjectDoc::CutoffFamily {
                center,
                radii,
                gap,
                ramp,
            } => CutoffFamily::diamonds(&self.lattice, center, radii, *gap, *ramp).map_err(|e| Self::err(name, e)),
            _ => Err(CliError::Invalid(format!("object '{name}' is not a cutoff family"))),
        }
    }
}
