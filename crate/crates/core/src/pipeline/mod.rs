//! End-to-end runs: intrinsic analysis of one data set and comparison of
//! the OSM and reference data sets.

mod emit;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::compare::{bundle, compare_networks, ComparisonResult, NetworkBundle};
use crate::config::{InputFormat, RunConfig};
use crate::error::{Error, Result};
use crate::geom::Coord;
use crate::graph::{build_graph, graph_summary, simplify, DatasetRole, GraphSummary, NetworkGraph};
use crate::grid::{cell_density, make_grid, AnalysisGrid, CellMetrics};
use crate::ingest::{classify, clip_to_study_area, parse_geojson, parse_osm_xml, EdgeRecord, StudyArea};
use crate::matching::{match_networks, MatchResult};
use crate::report::{check_writable, json, sha256_hex, OutputDir, RUN_LOG_FILE};
use crate::runlog::RunLog;
use crate::tags::{contradictions, has_tag, missing_tags, tag_patterns, PatternCell, TagFlag};
use crate::topology::{
    component_gaps, components, dangling_nodes, missing_intersection_nodes, overshoots, undershoots, ComponentSet,
    TopologyFlag,
};

pub const COMPARE_DIR: &str = "compare";
pub const SUMMARY_FILE: &str = "summary.json";

/// Where and how results are written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub overwrite: bool,
    /// Worker threads; all available cores when absent.
    pub jobs: Option<usize>,
}

impl RunOptions {
    pub fn from_config(cfg: &RunConfig) -> Self {
        RunOptions {
            out_dir: cfg.output_dir(),
            overwrite: cfg.output.overwrite,
            jobs: cfg.jobs,
        }
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.out_dir.join(stage)
    }
}

/// Input file as recorded in summaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputInfo {
    /// Path as written in the configuration.
    pub path: String,
    pub sha256: String,
}

fn read_input(cfg: &RunConfig, path: &Path) -> Result<(Vec<u8>, InputInfo)> {
    let resolved = cfg.resolve(path);
    let bytes = fs::read(&resolved).map_err(|e| Error::io(&resolved, e))?;
    let info = InputInfo {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    };
    Ok((bytes, info))
}

/// Study area and the analysis grid laid over it.
pub struct Area {
    pub area: StudyArea,
    pub info: InputInfo,
    pub grid: AnalysisGrid,
}

pub fn load_area(cfg: &RunConfig, log: &RunLog) -> Result<Area> {
    let (bytes, info) = read_input(cfg, &cfg.study_area.path)?;
    let area = StudyArea::from_geojson(&bytes, &cfg.study_area.crs, &cfg.study_area.unit)?;
    let grid = make_grid(&area, cfg.grid.cell_size, log)?;
    log.info("grid", format!("{} cells of {} m", grid.cells.len(), cfg.grid.cell_size));
    Ok(Area { area, info, grid })
}

/// Parsed, classified and clipped input of one data set.
pub struct Dataset {
    pub role: DatasetRole,
    pub info: InputInfo,
    pub feature_count: usize,
    pub records: Vec<EdgeRecord>,
}

pub fn load_dataset(cfg: &RunConfig, role: DatasetRole, area: &StudyArea, log: &RunLog) -> Result<Dataset> {
    let ds = cfg.require_dataset(role)?;
    let (bytes, info) = read_input(cfg, &ds.path)?;
    let ruleset = ds.ruleset_for(role);
    let features = match ds.format_for(role) {
        InputFormat::OsmXml => parse_osm_xml(&bytes, &ruleset, &ds.osm_options(), log)?,
        InputFormat::Geojson => parse_geojson(&bytes, &ds.attribute_map, &ruleset, log)?,
    };
    let records = clip_to_study_area(&classify(&features, &ruleset), area, log);
    log.info(
        "ingest",
        format!("{role}: {} features, {} edges inside the study area", features.len(), records.len()),
    );
    Ok(Dataset {
        role,
        info,
        feature_count: features.len(),
        records,
    })
}

pub struct TagResults {
    pub missing: Vec<TagFlag>,
    pub coverage: Vec<CellMetrics>,
    pub contradictions: Vec<TagFlag>,
    pub patterns: Vec<PatternCell>,
    /// Length-weighted share of the network carrying each key, percent.
    pub global_coverage: BTreeMap<String, f64>,
}

/// Every intrinsic result for one data set.
pub struct IntrinsicAnalysis {
    pub role: DatasetRole,
    pub input: InputInfo,
    pub feature_count: usize,
    pub record_count: usize,
    pub raw_summary: GraphSummary,
    /// Simplified network all metrics refer to.
    pub graph: NetworkGraph,
    pub summary: GraphSummary,
    pub density: Vec<CellMetrics>,
    pub dangling: Vec<TopologyFlag>,
    pub dangling_cells: Vec<CellMetrics>,
    pub overshoots: Vec<TopologyFlag>,
    pub undershoots: Vec<TopologyFlag>,
    pub missing_intersections: Vec<TopologyFlag>,
    pub component_gaps: Vec<TopologyFlag>,
    pub components: ComponentSet,
    pub reachability: Vec<CellMetrics>,
    pub tags: Option<TagResults>,
    pub bundle: NetworkBundle,
}

fn analyze_tags(graph: &NetworkGraph, cfg: &RunConfig, grid: &AnalysisGrid) -> Result<TagResults> {
    let tc = &cfg.tags.analysis;
    let (missing, coverage) = missing_tags(graph, tc, grid)?;
    let contradictions = contradictions(graph, tc)?;
    let patterns = if tc.pattern_keys.is_empty() {
        Vec::new()
    } else {
        tag_patterns(graph, &tc.pattern_keys, grid)?
    };
    let total = graph.total_infrastructure_length();
    let global_coverage = tc
        .tags_of_interest
        .iter()
        .map(|k| {
            let tagged: f64 = graph
                .edges
                .iter()
                .filter(|e| has_tag(e, k))
                .map(|e| e.infrastructure_length)
                .sum();
            (k.clone(), if total > 0.0 { tagged / total * 100.0 } else { 0.0 })
        })
        .collect();
    Ok(TagResults {
        missing,
        coverage,
        contradictions,
        patterns,
        global_coverage,
    })
}

pub fn analyze(dataset: Dataset, grid: &AnalysisGrid, cfg: &RunConfig, log: &RunLog) -> Result<IntrinsicAnalysis> {
    let role = dataset.role;
    let t = &cfg.thresholds;
    let raw = build_graph(role, &dataset.records, &t.graph_params());
    let graph = simplify(&raw, &t.breaking_attributes);
    log.info(
        "graph",
        format!(
            "{role}: {} nodes / {} edges, simplified to {} / {}",
            raw.nodes.len(),
            raw.edges.len(),
            graph.nodes.len(),
            graph.edges.len()
        ),
    );
    if graph.edges.is_empty() {
        log.warn("graph", format!("{role} network is empty"));
    }

    let g = &graph;
    let ((density, (dangling, dangling_cells)), ((over, under), (missing, comps))) = rayon::join(
        || rayon::join(|| cell_density(g, grid, cfg.grid.density_area), || dangling_nodes(g, grid)),
        || {
            rayon::join(
                || rayon::join(|| overshoots(g, t.overshoot), || undershoots(g, t.undershoot)),
                || rayon::join(|| missing_intersection_nodes(g), || components(g)),
            )
        },
    );
    let (gaps, reach) = rayon::join(
        || component_gaps(g, &comps, t.component_gap),
        || crate::topology::cell_reachability(g, &comps, grid),
    );

    let tags = match (role, cfg.tags.enabled) {
        (DatasetRole::Osm, true) => Some(analyze_tags(g, cfg, grid)?),
        (DatasetRole::Reference, true) => {
            log.warn("tags", "tag analysis skipped for the reference data set: it carries no raw OSM tags");
            None
        }
        (_, false) => None,
    };
    let bundle = bundle(g, &comps, grid, cfg.grid.density_area);
    Ok(IntrinsicAnalysis {
        role,
        input: dataset.info,
        feature_count: dataset.feature_count,
        record_count: dataset.records.len(),
        raw_summary: graph_summary(&raw),
        summary: graph_summary(&graph),
        density,
        dangling,
        dangling_cells,
        overshoots: over,
        undershoots: under,
        missing_intersections: missing,
        component_gaps: gaps,
        components: comps,
        reachability: reach,
        tags,
        bundle,
        graph,
    })
}

/// Identifies a grid; compared across stages to detect stale outputs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSignature {
    pub cell_size: f64,
    pub origin: Coord,
    pub ncols: usize,
    pub nrows: usize,
    pub cell_count: usize,
    pub cell_ids_sha256: String,
}

impl GridSignature {
    pub fn of(grid: &AnalysisGrid) -> Self {
        let ids: Vec<String> = grid.cell_ids().iter().map(usize::to_string).collect();
        GridSignature {
            cell_size: grid.cell_size,
            origin: grid.origin,
            ncols: grid.ncols,
            nrows: grid.nrows,
            cell_count: grid.cells.len(),
            cell_ids_sha256: sha256_hex(ids.join(",").as_bytes()),
        }
    }
}

/// Fails when an existing intrinsic summary was computed on another grid.
fn check_stale_grid(opts: &RunOptions, role: DatasetRole, grid: &AnalysisGrid) -> Result<()> {
    let path = opts.stage_dir(role.as_str()).join(SUMMARY_FILE);
    let Ok(bytes) = fs::read(&path) else {
        return Ok(());
    };
    let stored: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| Error::GridMismatch(format!("{}: unreadable summary ({e})", path.display())))?;
    let current: serde_json::Value =
        serde_json::from_str(&json::to_string(&GridSignature::of(grid))?).expect("own JSON parses");
    if stored.get("grid") != Some(&current) {
        return Err(Error::GridMismatch(format!(
            "{} was computed on a different grid; rerun the intrinsic stage for {role}",
            path.display()
        )));
    }
    Ok(())
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;
    pool.install(f)
}

/// Writes a stage directory; on failure the manifest marks it incomplete.
fn write_stage(
    opts: &RunOptions,
    stage: &str,
    log: &RunLog,
    f: impl FnOnce(&mut OutputDir) -> Result<()>,
) -> Result<()> {
    let mut out = OutputDir::create(&opts.stage_dir(stage), stage, opts.overwrite)?;
    match f(&mut out) {
        Ok(()) => {
            out.write_untracked(RUN_LOG_FILE, log.to_jsonl().as_bytes())?;
            out.finish()?;
            Ok(())
        }
        Err(e) => {
            log.record(crate::runlog::Level::Error, stage, e.to_string());
            let _ = out.write_untracked(RUN_LOG_FILE, log.to_jsonl().as_bytes());
            out.abort();
            Err(e)
        }
    }
}

fn intrinsic_in_pool(cfg: &RunConfig, role: DatasetRole, opts: &RunOptions, area: &Area, log: &RunLog) -> Result<IntrinsicAnalysis> {
    let dataset = load_dataset(cfg, role, &area.area, log)?;
    let analysis = analyze(dataset, &area.grid, cfg, log)?;
    write_stage(opts, role.as_str(), log, |out| emit::intrinsic(out, cfg, area, &analysis))?;
    log.info("report", format!("{role} outputs written to {}", opts.stage_dir(role.as_str()).display()));
    Ok(analysis)
}

/// Intrinsic analysis of one data set into `<out>/<role>/`.
pub fn run_intrinsic(cfg: &RunConfig, role: DatasetRole, opts: &RunOptions, log: &RunLog) -> Result<()> {
    cfg.require_dataset(role)?;
    check_writable(&opts.stage_dir(role.as_str()), opts.overwrite)?;
    with_pool(opts.jobs, || {
        let area = load_area(cfg, log)?;
        intrinsic_in_pool(cfg, role, opts, &area, log).map(|_| ())
    })
}

/// Extrinsic results for a pair of analysed data sets.
pub struct Extrinsic {
    pub comparison: ComparisonResult,
    pub matching: MatchResult,
}

fn extrinsic(
    cfg: &RunConfig,
    opts: &RunOptions,
    area: &Area,
    osm: &IntrinsicAnalysis,
    reference: &IntrinsicAnalysis,
    log: &RunLog,
) -> Result<Extrinsic> {
    let comparison = compare_networks(&osm.bundle, &reference.bundle, cfg.thresholds.zipf_outlier_ratio)?;
    let matching = match_networks(&osm.graph, &reference.graph, &cfg.matching)?;
    write_stage(opts, COMPARE_DIR, log, |out| {
        emit::compare(out, cfg, area, osm, reference, &comparison, &matching, log)
    })?;
    log.info("report", format!("comparison written to {}", opts.stage_dir(COMPARE_DIR).display()));
    Ok(Extrinsic { comparison, matching })
}

fn require_both(cfg: &RunConfig) -> Result<()> {
    cfg.require_dataset(DatasetRole::Osm)?;
    cfg.require_dataset(DatasetRole::Reference)?;
    Ok(())
}

/// Comparison and feature matching into `<out>/compare/`. Intrinsic
/// results are recomputed; existing intrinsic outputs must share the grid.
pub fn run_compare(cfg: &RunConfig, opts: &RunOptions, log: &RunLog) -> Result<()> {
    require_both(cfg)?;
    check_writable(&opts.stage_dir(COMPARE_DIR), opts.overwrite)?;
    with_pool(opts.jobs, || {
        let area = load_area(cfg, log)?;
        check_stale_grid(opts, DatasetRole::Osm, &area.grid)?;
        check_stale_grid(opts, DatasetRole::Reference, &area.grid)?;
        let (osm, reference) = rayon::join(
            || load_dataset(cfg, DatasetRole::Osm, &area.area, log),
            || load_dataset(cfg, DatasetRole::Reference, &area.area, log),
        );
        let (osm, reference) = (osm?, reference?);
        let (osm, reference) = rayon::join(
            || analyze(osm, &area.grid, cfg, log),
            || analyze(reference, &area.grid, cfg, log),
        );
        extrinsic(cfg, opts, &area, &osm?, &reference?, log).map(|_| ())
    })
}

/// Both intrinsic stages (concurrently), then the comparison. Each stage
/// logs to its own run log; all entries are appended to `log`.
pub fn run_full(cfg: &RunConfig, opts: &RunOptions, log: &RunLog) -> Result<()> {
    require_both(cfg)?;
    for stage in [DatasetRole::Osm.as_str(), DatasetRole::Reference.as_str(), COMPARE_DIR] {
        check_writable(&opts.stage_dir(stage), opts.overwrite)?;
    }
    let (osm_log, ref_log, cmp_log) = (RunLog::new(), RunLog::new(), RunLog::new());
    let result = with_pool(opts.jobs, || {
        let area = load_area(cfg, &cmp_log)?;
        let (osm, reference) = rayon::join(
            || intrinsic_in_pool(cfg, DatasetRole::Osm, opts, &area, &osm_log),
            || intrinsic_in_pool(cfg, DatasetRole::Reference, opts, &area, &ref_log),
        );
        let (osm, reference) = (osm?, reference?);
        extrinsic(cfg, opts, &area, &osm, &reference, &cmp_log).map(|_| ())
    });
    for l in [osm_log, ref_log, cmp_log] {
        log.extend(l.entries());
    }
    result
}
