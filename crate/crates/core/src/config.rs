//! Run configuration read from a TOML file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BreakingAttribute, DatasetRole, GraphParams, DEFAULT_SNAP_TOLERANCE};
use crate::grid::{DensityArea, DEFAULT_CELL_SIZE};
use crate::ingest::rules::{default_centerline_both_sides, AnyOf};
use crate::ingest::{AttributeMap, ClassificationRuleset, CoordUnits, OsmOptions, Projection};
use crate::matching::MatchParams;
use crate::report::sha256_hex;
use crate::tags::TagAnalysisConfig;
use crate::topology::{DEFAULT_COMPONENT_GAP, DEFAULT_OVERSHOOT_LENGTH, DEFAULT_UNDERSHOOT_DISTANCE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyAreaConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub crs: String,
    #[serde(default = "default_unit")]
    pub unit: String,
}

fn default_unit() -> String {
    "meter".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    OsmXml,
    Geojson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    /// Defaults to OSM XML for the OSM data set and GeoJSON for the reference.
    #[serde(default)]
    pub format: Option<InputFormat>,
    #[serde(default)]
    pub attribute_map: AttributeMap,
    /// Defaults to the built-in ruleset for the role.
    #[serde(default)]
    pub ruleset: Option<ClassificationRuleset>,
    #[serde(default)]
    pub units: CoordUnits,
    #[serde(default)]
    pub projection: Option<Projection>,
}

impl DatasetConfig {
    pub fn format_for(&self, role: DatasetRole) -> InputFormat {
        self.format.unwrap_or(match role {
            DatasetRole::Osm => InputFormat::OsmXml,
            DatasetRole::Reference => InputFormat::Geojson,
        })
    }

    pub fn ruleset_for(&self, role: DatasetRole) -> ClassificationRuleset {
        self.ruleset.clone().unwrap_or_else(|| match role {
            DatasetRole::Osm => ClassificationRuleset::osm_default(),
            DatasetRole::Reference => ClassificationRuleset::reference_default(),
        })
    }

    pub fn osm_options(&self) -> OsmOptions {
        OsmOptions {
            units: self.units,
            projection: self.projection,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub snap_tolerance: f64,
    pub overshoot: f64,
    pub undershoot: f64,
    pub component_gap: f64,
    pub zipf_outlier_ratio: f64,
    pub breaking_attributes: Vec<BreakingAttribute>,
    pub centerline_both_sides: AnyOf,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            snap_tolerance: DEFAULT_SNAP_TOLERANCE,
            overshoot: DEFAULT_OVERSHOOT_LENGTH,
            undershoot: DEFAULT_UNDERSHOOT_DISTANCE,
            component_gap: DEFAULT_COMPONENT_GAP,
            zipf_outlier_ratio: crate::compare::DEFAULT_OUTLIER_RATIO,
            breaking_attributes: BreakingAttribute::defaults(),
            centerline_both_sides: default_centerline_both_sides(),
        }
    }
}

impl Thresholds {
    pub fn graph_params(&self) -> GraphParams {
        GraphParams {
            snap_tolerance: self.snap_tolerance,
            centerline_both_sides: self.centerline_both_sides.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub cell_size: f64,
    pub density_area: DensityArea,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            cell_size: DEFAULT_CELL_SIZE,
            density_area: DensityArea::FullCell,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagsConfig {
    #[serde(default = "enabled")]
    pub enabled: bool,
    #[serde(flatten)]
    pub analysis: TagAnalysisConfig,
}

fn enabled() -> bool {
    true
}

impl Default for TagsConfig {
    fn default() -> Self {
        TagsConfig {
            enabled: true,
            analysis: TagAnalysisConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub overwrite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub study_area: StudyAreaConfig,
    #[serde(default)]
    pub osm: Option<DatasetConfig>,
    #[serde(default)]
    pub reference: Option<DatasetConfig>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub matching: MatchParams,
    #[serde(default)]
    pub tags: TagsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Worker threads; all available cores when absent.
    #[serde(default)]
    pub jobs: Option<usize>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Parts of the configuration that influence analysis results.
#[derive(Serialize)]
struct AnalysisSettings<'a> {
    study_area: &'a StudyAreaConfig,
    osm: &'a Option<DatasetConfig>,
    reference: &'a Option<DatasetConfig>,
    thresholds: &'a Thresholds,
    grid: &'a GridConfig,
    matching: &'a MatchParams,
    tags: &'a TagsConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; relative paths resolve against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.study_area.unit != "meter" {
            return Err(Error::Config(format!(
                "study_area.unit must be \"meter\", got \"{}\"",
                self.study_area.unit
            )));
        }
        if self.osm.is_none() && self.reference.is_none() {
            return Err(Error::Config("no data set configured; add [osm] or [reference]".into()));
        }
        let t = &self.thresholds;
        for (name, v) in [
            ("snap_tolerance", t.snap_tolerance),
            ("overshoot", t.overshoot),
            ("undershoot", t.undershoot),
            ("component_gap", t.component_gap),
            ("zipf_outlier_ratio", t.zipf_outlier_ratio),
            ("grid.cell_size", self.grid.cell_size),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        t.centerline_both_sides.validate()?;
        self.matching.validate()?;
        self.tags.analysis.validate()?;
        for role in [DatasetRole::Osm, DatasetRole::Reference] {
            if let Some(ds) = self.dataset(role) {
                ds.ruleset_for(role)
                    .validate()
                    .map_err(|e| Error::Config(format!("[{role}] ruleset: {e}")))?;
            }
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dataset(&self, role: DatasetRole) -> Option<&DatasetConfig> {
        match role {
            DatasetRole::Osm => self.osm.as_ref(),
            DatasetRole::Reference => self.reference.as_ref(),
        }
    }

    pub fn require_dataset(&self, role: DatasetRole) -> Result<&DatasetConfig> {
        self.dataset(role)
            .ok_or_else(|| Error::Config(format!("data set '{role}' is not configured; add a [{role}] section")))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(self.output.dir.as_deref().unwrap_or(Path::new("out")))
    }

    /// Digest of the analysis settings; output location and thread count
    /// are excluded so they never change results files.
    pub fn digest(&self) -> String {
        let settings = AnalysisSettings {
            study_area: &self.study_area,
            osm: &self.osm,
            reference: &self.reference,
            thresholds: &self.thresholds,
            grid: &self.grid,
            matching: &self.matching,
            tags: &self.tags,
        };
        let json = serde_json::to_string(&settings).expect("settings serialise");
        sha256_hex(json.as_bytes())
    }
}
