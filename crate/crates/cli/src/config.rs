//! Experiment configuration: TOML in, fail-closed. Unknown keys are errors,
//! kind-specific fields are cross-checked by hand, and every default is
//! expanded into a resolved echo written beside the results so runs are
//! self-describing.

use cascade_core::cascade::{self, SubsetLaw, WeightModel};
use cascade_core::error::{Error, Result};
use cascade_core::ifs::{IfsSpec, Rotation, Similarity};
use cascade_core::measure;
use cascade_core::projection;
use cascade_core::rotation::{DEFAULT_GROUP_CAP, DEFAULT_GROUP_TOL};
use serde::{Deserialize, Serialize};

fn cfg_err(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Validate,
    Simulate,
    Dims,
    Project,
    Conserve,
    Percolate,
    Distances,
    EqScan,
    Sweep,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Validate => "validate",
            Kind::Simulate => "simulate",
            Kind::Dims => "dims",
            Kind::Project => "project",
            Kind::Conserve => "conserve",
            Kind::Percolate => "percolate",
            Kind::Distances => "distances",
            Kind::EqScan => "eq-scan",
            Kind::Sweep => "sweep",
        }
    }

    pub fn from_name(name: &str) -> Result<Kind> {
        Ok(match name {
            "validate" => Kind::Validate,
            "simulate" => Kind::Simulate,
            "dims" => Kind::Dims,
            "project" => Kind::Project,
            "conserve" => Kind::Conserve,
            "percolate" => Kind::Percolate,
            "distances" => Kind::Distances,
            "eq-scan" => Kind::EqScan,
            other => {
                return Err(cfg_err(
                    "sweep.kind",
                    format!("unknown experiment kind {other:?}"),
                ))
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Raw sections, exactly as written in the file.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RootConfig {
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub ifs: IfsSection,
    pub weights: Option<WeightsSection>,
    pub simulate: Option<SimulateSection>,
    pub dims: Option<DimsSection>,
    pub project: Option<ProjectSection>,
    pub conserve: Option<ConserveSection>,
    pub percolate: Option<PercolateSection>,
    pub distances: Option<DistancesSection>,
    pub eq: Option<EqSection>,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IfsSection {
    pub dim: usize,
    pub maps: Vec<MapSpec>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub ratio: f64,
    pub translation: Vec<f64>,
    /// Planar rotation angle in radians; only valid when dim = 2.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angle: Option<f64>,
    /// Row-major d*d rotation matrix for d >= 3 (or as an alternative in d = 2).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    /// bernoulli | deterministic | percolation | general
    pub kind: String,
    /// deterministic: one mean-one weight per symbol.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// percolation: uniform independent keep probability.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keep: Option<f64>,
    /// percolation: explicit subset law, overrides keep.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsets: Option<Vec<SubsetSpec>>,
    /// percolation: exponent; solved from the law when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// general: finite list of (probability, weight vector) outcomes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcomes: Option<Vec<OutcomeSpec>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetSpec {
    pub symbols: Vec<u8>,
    pub p: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSpec {
    pub p: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub level: Option<usize>,
    pub replicas: Option<usize>,
    /// Extra simulated tail levels scaling leaf masses; 0 keeps the
    /// expectation convention.
    pub tail_levels: Option<u32>,
    pub write_atoms: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsSection {
    pub level: Option<usize>,
    pub samples: Option<usize>,
    pub budget: Option<usize>,
    pub r_max: Option<f64>,
    pub r_min: Option<f64>,
    pub r_factor: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectSection {
    pub level: Option<usize>,
    pub angles: Option<usize>,
    pub samples: Option<usize>,
    pub tol: Option<f64>,
    pub alpha: Option<f64>,
    pub haar_count: Option<usize>,
    pub frames: Option<Vec<FrameSpec>>,
    pub r_max: Option<f64>,
    pub r_min: Option<f64>,
    pub r_factor: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSpec {
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConserveSection {
    pub level: Option<usize>,
    pub centers: Option<usize>,
    pub widths: Option<Vec<f64>>,
    pub diag_samples: Option<usize>,
    pub stability_tol: Option<f64>,
    pub axis: Option<usize>,
    pub r_max: Option<f64>,
    pub r_min: Option<f64>,
    pub r_factor: Option<f64>,
    /// Also estimate the slice dimension from the conditional-entropy
    /// formula (needs a weight model with enumerable replicas).
    pub entropy_gamma: Option<bool>,
    pub gamma_n: Option<usize>,
    pub gamma_replicas: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PercolateSection {
    pub level: Option<usize>,
    pub seeds: Option<usize>,
    /// Survivor count at which the probe declares survival.
    pub threshold: Option<usize>,
    pub probe_depth: Option<usize>,
    pub scales: Option<Vec<f64>>,
    pub export_survivors: Option<bool>,
    pub survivor_levels: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistancesSection {
    pub level: Option<usize>,
    /// Pin exclusion: drop the whole first-level cylinder with this label.
    pub exclusion_symbol: Option<u8>,
    /// Pin exclusion: drop atoms within this distance of the pin.
    pub exclusion_radius: Option<f64>,
    pub budget: Option<usize>,
    pub pairs: Option<usize>,
    pub box_scales: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqSection {
    pub qs: Option<Vec<u32>>,
    pub level: Option<usize>,
    pub replicas: Option<usize>,
    pub budget: Option<usize>,
    /// Treat an undetermined rotation-group classification as dense.
    pub assert_dense: Option<bool>,
    pub group_tol: Option<f64>,
    pub group_cap: Option<usize>,
    /// Coordinate axes spanning the projection frame.
    pub axes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub kind: String,
    /// Dotted path of the single gridded parameter, e.g. "project.angles".
    pub parameter: toml::Value,
    pub values: Vec<toml::Value>,
}

// ---------------------------------------------------------------------------
// Resolved sections: every default expanded to a concrete value.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SimulateResolved {
    pub level: usize,
    pub replicas: usize,
    pub tail_levels: u32,
    pub write_atoms: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DimsResolved {
    pub level: usize,
    pub samples: usize,
    pub budget: usize,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectResolved {
    pub level: usize,
    pub angles: usize,
    pub samples: usize,
    pub tol: f64,
    pub alpha: f64,
    pub haar_count: usize,
    pub frames: Vec<FrameSpec>,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConserveResolved {
    pub level: usize,
    pub centers: usize,
    pub widths: Vec<f64>,
    pub diag_samples: usize,
    pub stability_tol: f64,
    pub axis: usize,
    pub radii: Vec<f64>,
    pub entropy_gamma: bool,
    pub gamma_n: usize,
    pub gamma_replicas: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct PercolateResolved {
    pub level: usize,
    pub seeds: usize,
    pub threshold: usize,
    pub probe_depth: usize,
    pub scales: Vec<f64>,
    pub export_survivors: bool,
    pub survivor_levels: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistancesResolved {
    pub level: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclusion_symbol: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclusion_radius: Option<f64>,
    pub budget: usize,
    pub pairs: usize,
    pub box_scales: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EqResolved {
    pub qs: Vec<u32>,
    pub level: usize,
    pub replicas: usize,
    pub budget: usize,
    pub assert_dense: bool,
    pub group_tol: f64,
    pub group_cap: usize,
    pub axes: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResolved {
    pub kind: String,
    pub parameter: String,
    pub values: Vec<toml::Value>,
}

/// The fully resolved record echoed as `resolved.toml` next to the results.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedEcho {
    pub kind: String,
    pub seed: u64,
    pub out: String,
    pub ifs: IfsSection,
    pub weights: WeightsSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateResolved>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<DimsResolved>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub project: Option<ProjectResolved>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conserve: Option<ConserveResolved>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub percolate: Option<PercolateResolved>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distances: Option<DistancesResolved>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eq: Option<EqResolved>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepResolved>,
}

/// Everything an experiment needs: built core objects plus the resolved
/// sections and their serializable echo.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub kind: Kind,
    pub seed: u64,
    pub out: String,
    pub ifs: IfsSpec,
    pub model: WeightModel,
    pub simulate: Option<SimulateResolved>,
    pub dims: Option<DimsResolved>,
    pub project: Option<ProjectResolved>,
    pub conserve: Option<ConserveResolved>,
    pub percolate: Option<PercolateResolved>,
    pub distances: Option<DistancesResolved>,
    pub eq: Option<EqResolved>,
    pub sweep: Option<SweepResolved>,
    weights_echo: WeightsSection,
    ifs_echo: IfsSection,
}

impl Resolved {
    pub fn echo(&self) -> ResolvedEcho {
        ResolvedEcho {
            kind: self.kind.name().to_string(),
            seed: self.seed,
            out: self.out.clone(),
            ifs: self.ifs_echo.clone(),
            weights: self.weights_echo.clone(),
            simulate: self.simulate.clone(),
            dims: self.dims.clone(),
            project: self.project.clone(),
            conserve: self.conserve.clone(),
            percolate: self.percolate.clone(),
            distances: self.distances.clone(),
            eq: self.eq.clone(),
            sweep: self.sweep.clone(),
        }
    }

    /// The subset law of a percolation model, demanded by experiments that
    /// only make sense for percolation.
    pub fn percolation_law(&self) -> Result<(SubsetLaw, Vec<f64>, f64)> {
        match &self.model {
            WeightModel::Percolation { law, ratios, alpha } => {
                Ok((law.clone(), ratios.clone(), *alpha))
            }
            _ => Err(cfg_err(
                "weights.kind",
                "this experiment requires kind = \"percolation\"",
            )),
        }
    }
}

// ---------------------------------------------------------------------------
// Builders.
// ---------------------------------------------------------------------------

pub fn parse(text: &str) -> Result<RootConfig> {
    toml::from_str::<RootConfig>(text).map_err(|e| cfg_err("config", e.to_string()))
}

pub fn build_ifs(section: &IfsSection) -> Result<IfsSpec> {
    let d = section.dim;
    if d == 0 {
        return Err(cfg_err("ifs.dim", "ambient dimension must be positive"));
    }
    if section.maps.len() < 2 {
        return Err(cfg_err("ifs.maps", "need at least two maps"));
    }
    let mut maps = Vec::with_capacity(section.maps.len());
    for (i, spec) in section.maps.iter().enumerate() {
        let at = |field: &str| format!("ifs.maps[{i}].{field}");
        if spec.translation.len() != d {
            return Err(cfg_err(
                at("translation"),
                format!("has length {}, dim is {d}", spec.translation.len()),
            ));
        }
        let rotation = match (&spec.angle, &spec.rotation) {
            (Some(_), Some(_)) => {
                return Err(cfg_err(
                    at("angle"),
                    "give either angle or rotation, not both",
                ));
            }
            (Some(theta), None) => {
                if d != 2 {
                    return Err(cfg_err(at("angle"), "angles are only valid in dimension 2"));
                }
                Rotation::from_angle(*theta)
            }
            (None, Some(entries)) => Rotation::from_row_major(d, entries)
                .map_err(|e| cfg_err(at("rotation"), e.to_string()))?,
            (None, None) => Rotation::identity(d),
        };
        let sim = Similarity::new(spec.ratio, rotation, spec.translation.clone())
            .map_err(|e| cfg_err(at("ratio"), e.to_string()))?;
        maps.push(sim);
    }
    IfsSpec::new(maps).map_err(|e| cfg_err("ifs.maps", e.to_string()))
}

fn forbid(field: Option<bool>, name: &str, kind: &str) -> Result<()> {
    if field == Some(true) {
        return Err(cfg_err(
            format!("weights.{name}"),
            format!("not valid for kind = \"{kind}\""),
        ));
    }
    Ok(())
}

/// Build the weight model and an echo section with solved values filled in.
pub fn build_weights(
    section: Option<&WeightsSection>,
    ifs: &IfsSpec,
) -> Result<(WeightModel, WeightsSection)> {
    let default = WeightsSection {
        kind: "bernoulli".into(),
        values: None,
        keep: None,
        subsets: None,
        alpha: None,
        outcomes: None,
    };
    let section = section.cloned().unwrap_or(default);
    let kind = section.kind.as_str();
    let present = |o: bool| if o { Some(true) } else { None };
    match kind {
        "bernoulli" => {
            forbid(present(section.values.is_some()), "values", kind)?;
            forbid(present(section.keep.is_some()), "keep", kind)?;
            forbid(present(section.subsets.is_some()), "subsets", kind)?;
            forbid(present(section.alpha.is_some()), "alpha", kind)?;
            forbid(present(section.outcomes.is_some()), "outcomes", kind)?;
            let model = cascade::bernoulli_weights(ifs)?;
            Ok((model, section))
        }
        "deterministic" => {
            forbid(present(section.keep.is_some()), "keep", kind)?;
            forbid(present(section.subsets.is_some()), "subsets", kind)?;
            forbid(present(section.alpha.is_some()), "alpha", kind)?;
            forbid(present(section.outcomes.is_some()), "outcomes", kind)?;
            let values = section
                .values
                .clone()
                .ok_or_else(|| cfg_err("weights.values", "required for deterministic weights"))?;
            let model = WeightModel::Deterministic(values);
            model.check_structure()?;
            Ok((model, section))
        }
        "percolation" => {
            forbid(present(section.values.is_some()), "values", kind)?;
            forbid(present(section.outcomes.is_some()), "outcomes", kind)?;
            let m = ifs.alphabet_size();
            let law = match (&section.keep, &section.subsets) {
                (Some(_), Some(_)) => {
                    return Err(cfg_err("weights.keep", "give either keep or subsets, not both"));
                }
                (Some(p), None) => SubsetLaw::uniform_keep(m, *p),
                (None, Some(subsets)) => SubsetLaw::Explicit(
                    subsets
                        .iter()
                        .map(|s| (s.symbols.clone(), s.p))
                        .collect(),
                ),
                (None, None) => {
                    return Err(cfg_err("weights.keep", "percolation needs keep or subsets"));
                }
            };
            law.validate(m)?;
            let ratios = ifs.ratios();
            let alpha = match section.alpha {
                Some(a) => a,
                None => cascade::percolation_exponent(&law, &ratios)?,
            };
            let model = cascade::percolation_weights(law, ratios, alpha)?;
            let mut echo = section;
            echo.alpha = Some(alpha);
            Ok((model, echo))
        }
        "general" => {
            forbid(present(section.values.is_some()), "values", kind)?;
            forbid(present(section.keep.is_some()), "keep", kind)?;
            forbid(present(section.subsets.is_some()), "subsets", kind)?;
            forbid(present(section.alpha.is_some()), "alpha", kind)?;
            let outcomes = section
                .outcomes
                .clone()
                .ok_or_else(|| cfg_err("weights.outcomes", "required for general weights"))?;
            let model = WeightModel::GeneralDiscrete(
                outcomes.iter().map(|o| (o.p, o.weights.clone())).collect(),
            );
            model.check_structure()?;
            Ok((model, section))
        }
        other => Err(cfg_err(
            "weights.kind",
            format!("unknown kind {other:?}; expected bernoulli | deterministic | percolation | general"),
        )),
    }
}

fn resolve_radii(
    ifs: &IfsSpec,
    level: usize,
    r_max: Option<f64>,
    r_min: Option<f64>,
    r_factor: Option<f64>,
) -> Result<Vec<f64>> {
    let auto = measure::default_radius_schedule(ifs, level)?;
    let r_max = r_max.unwrap_or(auto[0]);
    let r_min = r_min.unwrap_or(*auto.last().expect("nonempty schedule"));
    let factor = r_factor.unwrap_or(0.5);
    measure::radius_schedule(r_max, r_min, factor)
}

fn resolve_simulate(raw: Option<&SimulateSection>) -> SimulateResolved {
    let raw = raw.cloned().unwrap_or_default();
    SimulateResolved {
        level: raw.level.unwrap_or(10),
        replicas: raw.replicas.unwrap_or(16),
        tail_levels: raw.tail_levels.unwrap_or(0),
        write_atoms: raw.write_atoms.unwrap_or(false),
    }
}

fn resolve_dims(raw: Option<&DimsSection>, ifs: &IfsSpec) -> Result<DimsResolved> {
    let raw = raw.cloned().unwrap_or_default();
    let level = raw.level.unwrap_or(12);
    Ok(DimsResolved {
        level,
        samples: raw.samples.unwrap_or(512),
        budget: raw.budget.unwrap_or(4096),
        radii: resolve_radii(ifs, level, raw.r_max, raw.r_min, raw.r_factor)?,
    })
}

fn resolve_project_radii(
    ifs: &IfsSpec,
    level: usize,
    r_max: Option<f64>,
    r_min: Option<f64>,
    r_factor: Option<f64>,
) -> Result<Vec<f64>> {
    let auto = projection::projection_radius_schedule(ifs, level)?;
    let r_max = r_max.unwrap_or(auto[0]);
    let r_min = r_min.unwrap_or(*auto.last().expect("nonempty schedule"));
    let factor = r_factor.unwrap_or(0.5);
    measure::radius_schedule(r_max, r_min, factor)
}

fn resolve_project(
    raw: Option<&ProjectSection>,
    ifs: &IfsSpec,
    model: &WeightModel,
) -> Result<ProjectResolved> {
    let raw = raw.cloned().unwrap_or_default();
    let level = raw.level.unwrap_or(12);
    let alpha = match raw.alpha {
        Some(a) => a,
        None => cascade::theoretical_alpha(model, &ifs.ratios(), 0.0, ifs.dim())?.value,
    };
    let frames = raw.frames.clone().unwrap_or_default();
    if ifs.dim() < 2 {
        return Err(cfg_err(
            "project",
            "projections need ambient dimension >= 2",
        ));
    }
    for (i, f) in frames.iter().enumerate() {
        if f.rows.is_empty() || f.rows[0].len() != ifs.dim() {
            return Err(cfg_err(
                format!("project.frames[{i}]"),
                format!("rows must be nonempty vectors of length {}", ifs.dim()),
            ));
        }
    }
    Ok(ProjectResolved {
        level,
        angles: raw.angles.unwrap_or(64),
        samples: raw.samples.unwrap_or(256),
        tol: raw.tol.unwrap_or(0.12),
        alpha,
        haar_count: raw.haar_count.unwrap_or(64),
        frames,
        radii: resolve_project_radii(ifs, level, raw.r_max, raw.r_min, raw.r_factor)?,
    })
}

fn resolve_conserve(raw: Option<&ConserveSection>, ifs: &IfsSpec) -> Result<ConserveResolved> {
    let raw = raw.cloned().unwrap_or_default();
    let level = raw.level.unwrap_or(9);
    let axis = raw.axis.unwrap_or(0);
    if axis >= ifs.dim() {
        return Err(cfg_err(
            "conserve.axis",
            format!("axis {axis} out of range for dimension {}", ifs.dim()),
        ));
    }
    let widths = match raw.widths.clone() {
        Some(w) => w,
        None => {
            // End near cylinder scale: a slab much wider than one column
            // mixes the projected direction into the slice estimate.
            let rho = ifs.rho();
            let base = ifs.radius() * rho.powi(level.saturating_sub(2) as i32);
            vec![base, base * rho, base * rho * rho]
        }
    };
    Ok(ConserveResolved {
        level,
        centers: raw.centers.unwrap_or(16),
        widths,
        diag_samples: raw.diag_samples.unwrap_or(128),
        stability_tol: raw.stability_tol.unwrap_or(0.05),
        axis,
        radii: resolve_radii(ifs, level, raw.r_max, raw.r_min, raw.r_factor)?,
        entropy_gamma: raw.entropy_gamma.unwrap_or(false),
        gamma_n: raw.gamma_n.unwrap_or(6),
        gamma_replicas: raw.gamma_replicas.unwrap_or(16),
    })
}

fn resolve_percolate(raw: Option<&PercolateSection>, ifs: &IfsSpec) -> Result<PercolateResolved> {
    let raw = raw.cloned().unwrap_or_default();
    let level = raw.level.unwrap_or(10);
    let scales = match raw.scales.clone() {
        Some(s) => s,
        None => {
            // Stay in the thinned fine-scale regime: coarse boxes hold many
            // surviving branches each and flatten the fitted slope, while
            // boxes stay above the survivor spacing for every k < level.
            let diam = 2.0 * ifs.radius();
            let rho = ifs.rho();
            (level.saturating_sub(4).max(2)..level)
                .map(|k| diam * rho.powi(k as i32))
                .collect()
        }
    };
    if scales.len() < 4 {
        return Err(cfg_err("percolate.scales", "need at least four box scales"));
    }
    Ok(PercolateResolved {
        level,
        seeds: raw.seeds.unwrap_or(1000),
        threshold: raw.threshold.unwrap_or(256),
        probe_depth: raw.probe_depth.unwrap_or(64),
        scales,
        export_survivors: raw.export_survivors.unwrap_or(true),
        survivor_levels: raw.survivor_levels.unwrap_or(6).min(level),
    })
}

fn resolve_distances(raw: Option<&DistancesSection>, ifs: &IfsSpec) -> Result<DistancesResolved> {
    let raw = raw.cloned().unwrap_or_default();
    let (symbol, radius) = match (raw.exclusion_symbol, raw.exclusion_radius) {
        (Some(_), Some(_)) => {
            return Err(cfg_err(
                "distances.exclusion_symbol",
                "give either exclusion_symbol or exclusion_radius, not both",
            ));
        }
        (None, None) => (Some((ifs.alphabet_size() - 1) as u8), None),
        other => other,
    };
    if let Some(s) = symbol {
        if s as usize >= ifs.alphabet_size() {
            return Err(cfg_err(
                "distances.exclusion_symbol",
                format!("symbol {s} out of range for {} maps", ifs.alphabet_size()),
            ));
        }
    }
    Ok(DistancesResolved {
        level: raw.level.unwrap_or(12),
        exclusion_symbol: symbol,
        exclusion_radius: radius,
        budget: raw.budget.unwrap_or(4096),
        pairs: raw.pairs.unwrap_or(200_000),
        box_scales: raw.box_scales.unwrap_or(7),
    })
}

fn resolve_eq(raw: Option<&EqSection>, ifs: &IfsSpec) -> Result<EqResolved> {
    let raw = raw.cloned().unwrap_or_default();
    let axes = raw.axes.clone().unwrap_or_else(|| vec![0]);
    if axes.is_empty() || axes.len() >= ifs.dim() {
        return Err(cfg_err(
            "eq.axes",
            format!("need between 1 and {} axes", ifs.dim() - 1),
        ));
    }
    for &a in &axes {
        if a >= ifs.dim() {
            return Err(cfg_err("eq.axes", format!("axis {a} out of range")));
        }
    }
    Ok(EqResolved {
        qs: raw.qs.clone().unwrap_or_else(|| vec![2, 4, 6]),
        level: raw.level.unwrap_or(12),
        replicas: raw.replicas.unwrap_or(16),
        budget: raw.budget.unwrap_or(2048),
        assert_dense: raw.assert_dense.unwrap_or(false),
        group_tol: raw.group_tol.unwrap_or(DEFAULT_GROUP_TOL),
        group_cap: raw.group_cap.unwrap_or(DEFAULT_GROUP_CAP),
        axes,
    })
}

fn resolve_sweep(raw: Option<&SweepSection>) -> Result<SweepResolved> {
    let raw = raw
        .cloned()
        .ok_or_else(|| cfg_err("sweep", "the sweep experiment needs a [sweep] section"))?;
    let kind = Kind::from_name(&raw.kind)?;
    if kind == Kind::Sweep {
        return Err(cfg_err("sweep.kind", "sweeps cannot nest"));
    }
    let parameter = match &raw.parameter {
        toml::Value::String(s) => s.clone(),
        toml::Value::Array(items) => {
            let paths: Vec<String> = items
                .iter()
                .map(|v| match v {
                    toml::Value::String(s) => Ok(s.clone()),
                    other => Err(cfg_err(
                        "sweep.parameter",
                        format!("expected a string path, got {other}"),
                    )),
                })
                .collect::<Result<_>>()?;
            match paths.len() {
                1 => paths.into_iter().next().expect("one path"),
                0 => return Err(cfg_err("sweep.parameter", "empty parameter list")),
                _ => return Err(Error::MultipleGrids(paths.join(", "))),
            }
        }
        other => {
            return Err(cfg_err(
                "sweep.parameter",
                format!("expected a string path, got {other}"),
            ))
        }
    };
    if raw.values.is_empty() {
        return Err(cfg_err("sweep.values", "empty grid"));
    }
    Ok(SweepResolved {
        kind: raw.kind,
        parameter,
        values: raw.values,
    })
}

/// Resolve a parsed config for one experiment kind, applying command-line
/// overrides and expanding every default.
pub fn resolve(
    kind: Kind,
    raw: &RootConfig,
    seed_override: Option<u64>,
    out_override: Option<String>,
) -> Result<Resolved> {
    let ifs = build_ifs(&raw.ifs)?;
    let (model, weights_echo) = build_weights(raw.weights.as_ref(), &ifs)?;
    let seed = seed_override.or(raw.seed).unwrap_or(0);
    let out = out_override
        .or_else(|| raw.out.clone())
        .unwrap_or_else(|| "out".into());
    let mut resolved = Resolved {
        kind,
        seed,
        out,
        ifs,
        model,
        simulate: None,
        dims: None,
        project: None,
        conserve: None,
        percolate: None,
        distances: None,
        eq: None,
        sweep: None,
        weights_echo,
        ifs_echo: raw.ifs.clone(),
    };
    match kind {
        Kind::Validate => {}
        Kind::Simulate => resolved.simulate = Some(resolve_simulate(raw.simulate.as_ref())),
        Kind::Dims => resolved.dims = Some(resolve_dims(raw.dims.as_ref(), &resolved.ifs)?),
        Kind::Project => {
            resolved.project = Some(resolve_project(
                raw.project.as_ref(),
                &resolved.ifs,
                &resolved.model,
            )?)
        }
        Kind::Conserve => {
            resolved.conserve = Some(resolve_conserve(raw.conserve.as_ref(), &resolved.ifs)?)
        }
        Kind::Percolate => {
            resolved.percolation_law().map_err(|_| {
                cfg_err("weights.kind", "percolate requires kind = \"percolation\"")
            })?;
            resolved.percolate = Some(resolve_percolate(raw.percolate.as_ref(), &resolved.ifs)?)
        }
        Kind::Distances => {
            resolved.distances = Some(resolve_distances(raw.distances.as_ref(), &resolved.ifs)?)
        }
        Kind::EqScan => resolved.eq = Some(resolve_eq(raw.eq.as_ref(), &resolved.ifs)?),
        Kind::Sweep => resolved.sweep = Some(resolve_sweep(raw.sweep.as_ref())?),
    }
    Ok(resolved)
}

/// Set a dotted path inside a TOML table, creating intermediate tables.
pub fn set_path(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(cfg_err(
            "sweep.parameter",
            format!("malformed path {path:?}"),
        ));
    }
    let mut table = root;
    for seg in &segments[..segments.len() - 1] {
        table = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                cfg_err(
                    "sweep.parameter",
                    format!("path segment {seg:?} is not a table"),
                )
            })?;
    }
    table.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}
