//! Ready-made scenarios: the small-scale testbed and the large-scale
//! template with uniformly drawn contexts and applications.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    ApplicationSpec, CalibrationEntry, CatalogSource, ContextLabel, ContextName, NodeKind, NodeSpec,
    ScenarioConfig, SystemState, TraceSource,
};
use crate::dnn_catalog::{builtin_catalog, Modality};
use crate::perf::{AccuracyDistribution, AppAssignment, Role};
use crate::radio::{RadioParams, TraceKind};

/// Concentration of the default Beta calibration.
pub const CALIBRATION_KAPPA: f64 = 30.0;

pub const MOBILE_COMPUTE: f64 = 4e12;
pub const EDGE_COMPUTE: f64 = 4e12;
pub const MOBILE_ENERGY_PER_COMPUTE: f64 = 5e-11;
pub const EDGE_ENERGY_PER_COMPUTE: f64 = 2e-11;
pub const ENERGY_PER_BLOCK: f64 = 1e-3;
pub const HORIZON_S: f64 = 150.0;

/// Uncompressed sensor frame sizes at 8 bits per sample.
pub fn raw_source_bits(m: Modality) -> f64 {
    match m {
        Modality::CameraLeft | Modality::CameraRight | Modality::Lidar => 672.0 * 376.0 * 3.0 * 8.0,
        Modality::Radar => 1152.0 * 1152.0 * 8.0,
    }
}

/// Mean accuracy (fraction of the context cap) at depths 18/50/101.
fn mean_fractions(branch_family: &str, ctx: ContextName) -> [f64; 3] {
    use ContextName::*;
    match (branch_family, ctx) {
        ("Camera", Sunny) => [0.50, 0.60, 0.66],
        ("Camera", Night) => [0.35, 0.42, 0.48],
        ("Camera", Motorway) => [0.55, 0.63, 0.70],
        ("Lidar", Sunny) => [0.48, 0.56, 0.62],
        ("Lidar", Night) => [0.60, 0.68, 0.76],
        ("Lidar", Motorway) => [0.50, 0.58, 0.64],
        ("Radar", Sunny) => [0.40, 0.48, 0.54],
        ("Radar", Night) => [0.55, 0.63, 0.70],
        ("Radar", Motorway) => [0.76, 0.80, 0.84],
        ("DualCamera", Sunny) => [0.62, 0.70, 0.76],
        ("DualCamera", Night) => [0.45, 0.52, 0.58],
        ("DualCamera", Motorway) => [0.65, 0.72, 0.78],
        ("CameraLidar", Sunny) => [0.64, 0.72, 0.78],
        ("CameraLidar", Night | Motorway) => [0.66, 0.74, 0.80],
        ("RadarLidar", Sunny) => [0.55, 0.63, 0.69],
        ("RadarLidar", Night) => [0.70, 0.78, 0.84],
        ("RadarLidar", Motorway) => [0.68, 0.76, 0.82],
        _ => [0.5, 0.5, 0.5],
    }
}

/// Beta calibration for every built-in branch in every context.
pub fn default_calibration() -> Vec<CalibrationEntry> {
    let mut out = Vec::new();
    for b in builtin_catalog().branches {
        let family = b
            .id
            .trim_end_matches(char::is_numeric)
            .trim_end_matches("Fusion")
            .trim_end_matches("Branch")
            .to_string();
        let depth_idx = match u16::from(b.depth) {
            18 => 0,
            50 => 1,
            _ => 2,
        };
        for ctx in ContextName::ALL {
            let m = mean_fractions(&family, ctx)[depth_idx];
            out.push(CalibrationEntry {
                branch: b.accuracy_key.clone(),
                context: ctx,
                distribution: AccuracyDistribution::beta_mean(m, CALIBRATION_KAPPA),
            });
        }
    }
    out
}

fn mobile(id: &str, ctx: ContextName, trace: &str) -> NodeSpec {
    NodeSpec {
        id: id.into(),
        kind: NodeKind::Mobile,
        modality: None,
        compute_capacity: MOBILE_COMPUTE,
        radio_blocks: 0,
        energy_per_compute: MOBILE_ENERGY_PER_COMPUTE,
        energy_per_block: ENERGY_PER_BLOCK,
        trace_id: Some(trace.into()),
        context: Some(ContextLabel::with_default_cap(ctx)),
        colocated_with: None,
        per_rb_rate: None,
    }
}

fn source(id: &str, m: Modality, host: &str, trace: &str) -> NodeSpec {
    NodeSpec {
        id: id.into(),
        kind: NodeKind::Source,
        modality: Some(m),
        compute_capacity: 0.0,
        radio_blocks: 0,
        energy_per_compute: 0.0,
        energy_per_block: ENERGY_PER_BLOCK,
        trace_id: Some(trace.into()),
        context: None,
        colocated_with: Some(host.into()),
        per_rb_rate: None,
    }
}

fn edge(id: &str) -> NodeSpec {
    NodeSpec {
        id: id.into(),
        kind: NodeKind::Edge,
        modality: None,
        compute_capacity: EDGE_COMPUTE,
        radio_blocks: 0,
        energy_per_compute: EDGE_ENERGY_PER_COMPUTE,
        energy_per_block: 0.0,
        trace_id: None,
        context: None,
        colocated_with: None,
        per_rb_rate: None,
    }
}

fn app(id: &str, home: &str, sources: &[(&str, Modality)]) -> ApplicationSpec {
    ApplicationSpec {
        id: id.into(),
        latency_target: 0.050,
        accuracy_target: 0.5,
        quantile: 0.9,
        candidate_sources: sources.iter().map(|(s, _)| s.to_string()).collect(),
        home_mobile_node: home.into(),
        source_bits: sources.iter().map(|(s, m)| (s.to_string(), raw_source_bits(*m))).collect(),
    }
}

/// Four sources, three mobile nodes (sunny, night, motorway), two edge
/// servers and three applications over a 150 s horizon.
pub fn small_scale(seed: u64) -> ScenarioConfig {
    use Modality::*;
    let synth = |kind, k: u64| TraceSource::Synthetic {
        kind,
        duration_s: HORIZON_S,
        seed: seed.wrapping_mul(31).wrapping_add(k),
    };
    let cfg = ScenarioConfig {
        nodes: vec![
            source("src_cam_l", CameraLeft, "m1", "trace_m1"),
            source("src_cam_r", CameraRight, "m2", "trace_m2"),
            source("src_lidar", Lidar, "m2", "trace_m2"),
            source("src_radar", Radar, "m3", "trace_m3"),
            mobile("m1", ContextName::Sunny, "trace_m1"),
            mobile("m2", ContextName::Night, "trace_m2"),
            mobile("m3", ContextName::Motorway, "trace_m3"),
            edge("es1"),
            edge("es2"),
        ],
        applications: vec![
            app("app_m1", "m1", &[("src_cam_l", CameraLeft), ("src_cam_r", CameraRight)]),
            app("app_m2", "m2", &[("src_cam_r", CameraRight), ("src_lidar", Lidar)]),
            app("app_m3", "m3", &[("src_radar", Radar), ("src_lidar", Lidar)]),
        ],
        catalog: CatalogSource::default(),
        traces: BTreeMap::from([
            ("trace_m1".to_string(), synth(TraceKind::Outdoor, 1)),
            ("trace_m2".to_string(), synth(TraceKind::Indoor, 2)),
            ("trace_m3".to_string(), synth(TraceKind::Outdoor, 3)),
        ]),
        calibration: default_calibration(),
        slot_duration_s: 1.0,
        seed,
        radio: RadioParams::default(),
        resolved: None,
    };
    cfg.resolve(Path::new(".")).expect("small-scale preset is valid")
}

pub const LARGE_SCALE_EDGE_SERVERS: usize = 10;

/// Sensor sets an application on a large-scale mobile node may use.
pub const APP_TEMPLATES: [&[Modality]; 3] = [
    &[Modality::CameraLeft, Modality::CameraRight],
    &[Modality::CameraLeft, Modality::Lidar],
    &[Modality::Radar, Modality::Lidar],
];

/// `n_mobile` mobile nodes with uniformly drawn context, application and
/// trace kind, each carrying its own sensors, plus ten edge servers.
pub fn large_scale(n_mobile: usize, seed: u64, duration_s: f64) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::new();
    let mut sources = Vec::new();
    let mut mobiles = Vec::new();
    let mut applications = Vec::new();
    let mut traces = BTreeMap::new();
    for i in 1..=n_mobile {
        let ctx = ContextName::ALL[rng.random_range(0..3)];
        let template = APP_TEMPLATES[rng.random_range(0..APP_TEMPLATES.len())];
        let kind = if rng.random_bool(0.5) { TraceKind::Outdoor } else { TraceKind::Indoor };
        let trace_seed: u64 = rng.random();
        let mid = format!("m{i}");
        let tid = format!("trace_{mid}");
        traces.insert(tid.clone(), TraceSource::Synthetic { kind, duration_s, seed: trace_seed });
        mobiles.push(mobile(&mid, ctx, &tid));
        let mut app_sources = Vec::new();
        for &m in template {
            let sid = format!("{mid}_{}", m.as_str());
            sources.push(source(&sid, m, &mid, &tid));
            app_sources.push((sid, m));
        }
        let refs: Vec<(&str, Modality)> = app_sources.iter().map(|(s, m)| (s.as_str(), *m)).collect();
        applications.push(app(&format!("app_{mid}"), &mid, &refs));
    }
    nodes.extend(sources);
    nodes.extend(mobiles);
    nodes.extend((1..=LARGE_SCALE_EDGE_SERVERS).map(|k| edge(&format!("es{k}"))));
    let cfg = ScenarioConfig {
        nodes,
        applications,
        catalog: CatalogSource::default(),
        traces,
        calibration: default_calibration(),
        slot_duration_s: 1.0,
        seed,
        radio: RadioParams::default(),
        resolved: None,
    };
    cfg.resolve(Path::new(".")).expect("large-scale preset is valid")
}

/// Everything on the home mobile with its full compute; remote sources send
/// with all their available blocks.
pub fn local_assignment(cfg: &ScenarioConfig, app: usize, opt_idx: usize, state: &SystemState) -> AppAssignment {
    let opt = cfg.enumerate_options(app)[opt_idx].clone();
    let home = cfg.node_index(&cfg.applications[app].home_mobile_node).expect("validated");
    let srcs = cfg.app_sources(app);
    let mut roles = BTreeMap::new();
    let mut blocks = BTreeMap::new();
    for m in &opt.sources {
        let s = srcs[m];
        roles.insert(s, Role { data: true, ..Default::default() });
        if cfg.nodes[s].colocated_with.as_deref() != Some(cfg.nodes[home].id.as_str()) {
            blocks.insert(s, state.nodes[s].blocks.max(1));
        }
    }
    roles.insert(
        home,
        Role {
            data: false,
            stems: opt.stems.clone(),
            branches: opt.branches().map(|b| b.branch.clone()).collect(),
        },
    );
    AppAssignment { option: opt, roles, compute: BTreeMap::from([(home, cfg.nodes[home].compute_capacity)]), blocks }
}
