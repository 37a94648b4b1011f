//! Stems, branches and gate options of the splittable multi-sensor detector.
//!
//! The catalog is metadata only: tensor shapes, parameter counts and FLOPS of
//! each section. Nothing here executes a network. An orchestrator picks a
//! [`ConfigurationOption`] (which stems fire, which branch or late-fusion pair
//! consumes them) and later decides where each section runs.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A physical sensor stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    CameraLeft,
    CameraRight,
    Radar,
    Lidar,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::CameraLeft,
        Modality::CameraRight,
        Modality::Radar,
        Modality::Lidar,
    ];

    pub fn kind(self) -> SensorKind {
        match self {
            Modality::CameraLeft | Modality::CameraRight => SensorKind::Camera,
            Modality::Radar => SensorKind::Radar,
            Modality::Lidar => SensorKind::Lidar,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::CameraLeft => "camera_left",
            Modality::CameraRight => "camera_right",
            Modality::Radar => "radar",
            Modality::Lidar => "lidar",
        }
    }
}

/// Sensor family a branch input slot accepts. Both cameras share one family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Camera,
    Radar,
    Lidar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    Single,
    Early,
}

/// ResNet backbone depth of a branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub enum Depth {
    D18,
    D50,
    D101,
}

impl Depth {
    pub const ALL: [Depth; 3] = [Depth::D18, Depth::D50, Depth::D101];

    pub fn layers(self) -> u16 {
        match self {
            Depth::D18 => 18,
            Depth::D50 => 50,
            Depth::D101 => 101,
        }
    }
}

impl TryFrom<u16> for Depth {
    type Error = String;

    fn try_from(v: u16) -> std::result::Result<Self, Self::Error> {
        match v {
            18 => Ok(Depth::D18),
            50 => Ok(Depth::D50),
            101 => Ok(Depth::D101),
            other => Err(format!("unsupported branch depth {other}")),
        }
    }
}

impl From<Depth> for u16 {
    fn from(d: Depth) -> u16 {
        d.layers()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StemSpec {
    pub id: String,
    pub modality: Modality,
    pub input_dims: Vec<u64>,
    pub output_dims: Vec<u64>,
    /// Giga floating-point operations per inference, as tabulated.
    pub gflops: f64,
    /// Bits handed to the branch per inference.
    pub output_bits: u64,
}

impl StemSpec {
    pub fn flops(&self) -> f64 {
        self.gflops * 1e9
    }

    pub fn output_elements(&self) -> u64 {
        self.output_dims.iter().product()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub id: String,
    /// One entry per consumed stem; a dual-camera branch lists `camera` twice.
    pub required_modalities: Vec<SensorKind>,
    pub depth: Depth,
    pub fusion: Fusion,
    pub params_millions: f64,
    pub gflops: f64,
    pub output_bits: u64,
    pub accuracy_key: String,
}

impl BranchSpec {
    pub fn flops(&self) -> f64 {
        self.gflops * 1e9
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    /// Quantization of stem feature maps sent to a remote branch.
    pub bits_per_element: u64,
    pub stems: Vec<StemSpec>,
    pub branches: Vec<BranchSpec>,
}

/// A branch together with the concrete modalities feeding it.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BranchUse {
    pub branch: String,
    pub inputs: BTreeSet<Modality>,
}

/// Structural gate choice, before any placement.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConfigurationOption {
    pub sources: BTreeSet<Modality>,
    pub stems: Vec<String>,
    pub branch: BranchUse,
    pub late_fusion: Option<BranchUse>,
}

impl ConfigurationOption {
    pub fn branches(&self) -> impl Iterator<Item = &BranchUse> {
        std::iter::once(&self.branch).chain(self.late_fusion.iter())
    }

    /// Short human-readable label, e.g. `CameraBranch18[camera_left]`.
    pub fn label(&self) -> String {
        let fmt = |b: &BranchUse| {
            let mods: Vec<&str> = b.inputs.iter().map(|m| m.as_str()).collect();
            format!("{}[{}]", b.branch, mods.join("+"))
        };
        match &self.late_fusion {
            None => fmt(&self.branch),
            Some(second) => format!("late({},{})", fmt(&self.branch), fmt(second)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    pub stem_flops: f64,
    pub branch_flops: f64,
    pub stem_to_branch_bits: f64,
    pub output_bits: f64,
}

const DETECTION_OUTPUT_BITS: u64 = 100_000;

fn stem(id: &str, modality: Modality, input: &[u64], output: &[u64], gflops: f64, bits: u64) -> StemSpec {
    let mut s = StemSpec {
        id: id.to_string(),
        modality,
        input_dims: input.to_vec(),
        output_dims: output.to_vec(),
        gflops,
        output_bits: 0,
    };
    s.output_bits = s.output_elements() * bits;
    s
}

fn branch(id: &str, kinds: &[SensorKind], depth: Depth, params: f64, gflops: f64) -> BranchSpec {
    BranchSpec {
        id: id.to_string(),
        required_modalities: kinds.to_vec(),
        depth,
        fusion: if kinds.len() > 1 { Fusion::Early } else { Fusion::Single },
        params_millions: params,
        gflops,
        output_bits: DETECTION_OUTPUT_BITS,
        accuracy_key: id.to_string(),
    }
}

/// The built-in stems and 18 branches.
pub fn builtin_catalog() -> Catalog {
    builtin_catalog_with_quantization(8)
}

pub fn builtin_catalog_with_quantization(bits_per_element: u64) -> Catalog {
    use Depth::*;
    use SensorKind::*;
    let b = bits_per_element;
    let stems = vec![
        stem("stem_camera_left", Modality::CameraLeft, &[672, 376], &[64, 168, 94], 3.552, b),
        stem("stem_camera_right", Modality::CameraRight, &[672, 376], &[64, 168, 94], 3.552, b),
        stem("stem_radar", Modality::Radar, &[1152, 1152], &[64, 288, 288], 31.00, b),
        stem("stem_lidar", Modality::Lidar, &[672, 376], &[64, 168, 94], 5.900, b),
    ];
    let branches = vec![
        branch("CameraBranch18", &[Camera], D18, 40.20, 21.76),
        branch("RadarBranch18", &[Radar], D18, 40.20, 115.86),
        branch("LidarBranch18", &[Lidar], D18, 40.20, 23.00),
        branch("DualCameraFusion18", &[Camera, Camera], D18, 40.28, 270.8),
        branch("RadarLidarFusion18", &[Radar, Lidar], D18, 40.28, 586.6),
        branch("CameraLidarFusion18", &[Camera, Lidar], D18, 40.31, 286.6),
        branch("CameraBranch50", &[Camera], D50, 165.06, 85.14),
        branch("RadarBranch50", &[Radar], D50, 165.06, 352.5),
        branch("LidarBranch50", &[Lidar], D50, 165.06, 89.10),
        branch("DualCameraFusion50", &[Camera, Camera], D50, 165.06, 982.6),
        branch("RadarLidarFusion50", &[Radar, Lidar], D50, 165.06, 2202.0),
        branch("CameraLidarFusion50", &[Camera, Lidar], D50, 165.06, 1084.0),
        branch("CameraBranch101", &[Camera], D101, 184.05, 184.1),
        branch("RadarBranch101", &[Radar], D101, 184.05, 573.4),
        branch("LidarBranch101", &[Lidar], D101, 184.05, 132.4),
        branch("DualCameraFusion101", &[Camera, Camera], D101, 184.05, 1496.0),
        branch("RadarLidarFusion101", &[Radar, Lidar], D101, 184.05, 3434.0),
        branch("CameraLidarFusion101", &[Camera, Lidar], D101, 184.05, 1562.0),
    ];
    Catalog { bits_per_element, stems, branches }
}

fn sorted_kinds(kinds: impl IntoIterator<Item = SensorKind>) -> Vec<SensorKind> {
    let mut v: Vec<SensorKind> = kinds.into_iter().collect();
    v.sort();
    v
}

impl Catalog {
    pub fn stem(&self, id: &str) -> Option<&StemSpec> {
        self.stems.iter().find(|s| s.id == id)
    }

    pub fn branch(&self, id: &str) -> Option<&BranchSpec> {
        self.branches.iter().find(|b| b.id == id)
    }

    pub fn stem_for(&self, modality: Modality) -> Option<&StemSpec> {
        self.stems.iter().find(|s| s.modality == modality)
    }

    /// Checks the structural invariants; returns every violation found.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.stems {
            if !(s.gflops > 0.0) {
                out.push(format!("stem {}: flops must be positive", s.id));
            }
            if s.output_bits != s.output_elements() * self.bits_per_element {
                out.push(format!(
                    "stem {}: output_bits {} != product(output_dims) x {}",
                    s.id, s.output_bits, self.bits_per_element
                ));
            }
        }
        let mut seen = HashMap::new();
        for m in self.stems.iter().map(|s| s.modality) {
            *seen.entry(m).or_insert(0) += 1;
        }
        for (m, n) in seen {
            if n > 1 {
                out.push(format!("more than one stem for modality {}", m.as_str()));
            }
        }
        for b in &self.branches {
            if !(b.gflops > 0.0) {
                out.push(format!("branch {}: flops must be positive", b.id));
            }
            if b.required_modalities.is_empty() {
                out.push(format!("branch {}: no required modalities", b.id));
            }
            if b.fusion == Fusion::Early && b.required_modalities.len() < 2 {
                out.push(format!("branch {}: early fusion needs at least two modalities", b.id));
            }
            if b.fusion == Fusion::Single && b.required_modalities.len() != 1 {
                out.push(format!("branch {}: single branch needs exactly one modality", b.id));
            }
        }
        out
    }

    /// All structurally valid gate options over the given modalities, in a
    /// stable order: catalog order for single/early branches, then late-fusion
    /// pairs.
    pub fn enumerate_options(&self, available: &BTreeSet<Modality>) -> Vec<ConfigurationOption> {
        let avail: Vec<Modality> = available.iter().copied().collect();
        let mut out = Vec::new();
        for b in &self.branches {
            for inputs in self.bindings(b, &avail) {
                if let Some(opt) = self.option_for(BranchUse { branch: b.id.clone(), inputs }, None) {
                    out.push(opt);
                }
            }
        }
        // late fusion: pairs of single-sensor depth-18 branches on disjoint inputs
        let singles: Vec<BranchUse> = self
            .branches
            .iter()
            .filter(|b| b.depth == Depth::D18 && b.fusion == Fusion::Single)
            .flat_map(|b| {
                self.bindings(b, &avail)
                    .into_iter()
                    .map(|inputs| BranchUse { branch: b.id.clone(), inputs })
            })
            .collect();
        for i in 0..singles.len() {
            for j in (i + 1)..singles.len() {
                if singles[i].inputs.is_disjoint(&singles[j].inputs) {
                    let (a, b) = if singles[i] <= singles[j] {
                        (singles[i].clone(), singles[j].clone())
                    } else {
                        (singles[j].clone(), singles[i].clone())
                    };
                    if let Some(opt) = self.option_for(a, Some(b)) {
                        out.push(opt);
                    }
                }
            }
        }
        out
    }

    fn bindings(&self, b: &BranchSpec, avail: &[Modality]) -> Vec<BTreeSet<Modality>> {
        let want = sorted_kinds(b.required_modalities.iter().copied());
        let mut out = Vec::new();
        for mask in 1u32..(1 << avail.len()) {
            if mask.count_ones() as usize != want.len() {
                continue;
            }
            let subset: BTreeSet<Modality> = avail
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, m)| *m)
                .collect();
            if sorted_kinds(subset.iter().map(|m| m.kind())) == want
                && subset.iter().all(|m| self.stem_for(*m).is_some())
            {
                out.push(subset);
            }
        }
        out.sort();
        out
    }

    fn option_for(&self, branch: BranchUse, late: Option<BranchUse>) -> Option<ConfigurationOption> {
        let mut sources = branch.inputs.clone();
        if let Some(l) = &late {
            sources.extend(l.inputs.iter().copied());
        }
        let stems = sources
            .iter()
            .map(|m| self.stem_for(*m).map(|s| s.id.clone()))
            .collect::<Option<Vec<_>>>()?;
        Some(ConfigurationOption { sources, stems, branch, late_fusion: late })
    }

    /// Checks an option against the catalog invariants.
    pub fn validate_option(&self, opt: &ConfigurationOption) -> Result<()> {
        let mut covered = BTreeSet::new();
        for bu in opt.branches() {
            let spec = self
                .branch(&bu.branch)
                .ok_or_else(|| Error::UnknownId(format!("branch {}", bu.branch)))?;
            let got = sorted_kinds(bu.inputs.iter().map(|m| m.kind()));
            if got != sorted_kinds(spec.required_modalities.iter().copied()) {
                return Err(Error::InvalidOption(format!(
                    "{}: inputs do not match required modalities",
                    bu.branch
                )));
            }
            covered.extend(bu.inputs.iter().copied());
        }
        if let Some(l) = &opt.late_fusion {
            let a = self.branch(&opt.branch.branch).map(|b| b.depth);
            let b = self.branch(&l.branch).map(|b| b.depth);
            if a != Some(Depth::D18) || b != Some(Depth::D18) {
                return Err(Error::InvalidOption("late fusion pairs depth-18 branches only".into()));
            }
        }
        let stem_mods: BTreeSet<Modality> = opt
            .stems
            .iter()
            .map(|id| {
                self.stem(id)
                    .map(|s| s.modality)
                    .ok_or_else(|| Error::UnknownId(format!("stem {id}")))
            })
            .collect::<Result<_>>()?;
        if stem_mods != covered || opt.sources != covered {
            return Err(Error::InvalidOption("stems must cover exactly the branch inputs".into()));
        }
        Ok(())
    }

    /// FLOPS and data volumes of an option, independent of placement.
    pub fn option_cost_profile(&self, opt: &ConfigurationOption) -> Result<CostProfile> {
        let mut stem_flops = 0.0;
        let mut stem_bits = 0.0;
        for id in &opt.stems {
            let s = self.stem(id).ok_or_else(|| Error::UnknownId(format!("stem {id}")))?;
            stem_flops += s.flops();
            stem_bits += s.output_bits as f64;
        }
        let mut branch_flops = 0.0;
        let mut output_bits: f64 = 0.0;
        for bu in opt.branches() {
            let b = self
                .branch(&bu.branch)
                .ok_or_else(|| Error::UnknownId(format!("branch {}", bu.branch)))?;
            branch_flops += b.flops();
            output_bits = output_bits.max(b.output_bits as f64);
        }
        Ok(CostProfile { stem_flops, branch_flops, stem_to_branch_bits: stem_bits, output_bits })
    }
}

impl Default for Catalog {
    fn default() -> Self {
        builtin_catalog()
    }
}
