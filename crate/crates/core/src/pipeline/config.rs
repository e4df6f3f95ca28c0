//! Run configuration, read from TOML.
//!
//! Every section is optional; a missing section or key takes the value of
//! [`RunConfig::default`]. [`RunConfig::reference`] is the calibrated
//! configuration shipped in `configs/reference.toml`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::latency::{LinkKind, LinkSpec, NodeSpec, Role};
use crate::channel::snr_serde;
use crate::classical::ClassicalConfig;
use crate::error::{Error, Result};
use crate::scene::synthetic::BenchmarkSpec;
use crate::scene::FitConfig;
use crate::semantic::SemanticConfig;

const REFERENCE: &str = include_str!("../../../../configs/reference.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every noise stream in a run is derived from it.
    pub seed: u64,
    pub video: VideoConfig,
    pub channel: ChannelSection,
    pub classical: ClassicalConfig,
    pub semantic: SemanticConfig,
    pub synthesis: SynthesisConfig,
    pub vsr: VsrConfig,
    pub benchmark: BenchmarkConfig,
    pub sweep: SweepConfig,
    pub nodes: Nodes,
    pub links: Links,
    pub compute: ComputeCosts,
}

/// Service inputs. Without paths, deterministic synthetic clips of the given
/// size are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps: f64,
    pub gop_size: usize,
    pub user_path: Option<PathBuf>,
    pub background_path: Option<PathBuf>,
}

impl Default for VideoConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            frames: 8,
            fps: 30.0,
            gop_size: 8,
            user_path: None,
            background_path: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    /// SNR of every wireless hop in a service run; `inf` disables noise.
    #[serde(with = "snr_serde")]
    pub snr_db: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self { snr_db: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    /// RMS color distance below which a pixel is background.
    pub threshold: f64,
    /// Width of the ramp from background to foreground.
    pub softness: f64,
    /// Half-width of the transition band around the matte boundary.
    pub transition_radius: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            threshold: 0.06,
            softness: 0.08,
            transition_radius: 2,
        }
    }
}

/// Scene reconstruction inside a service run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VsrConfig {
    pub enabled: bool,
    /// Gaussians per side of the initial sheet.
    pub grid: usize,
    /// Depth of the initial sheet in front of the camera.
    pub depth: f64,
    /// Focal length in pixels of the static service camera.
    pub focal: f64,
    pub fit: FitConfig,
}

impl Default for VsrConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            grid: 12,
            depth: 2.0,
            focal: 64.0,
            fit: FitConfig {
                init_iterations: 40,
                joint_iterations: 20,
                bases: 4,
                ..FitConfig::default()
            },
        }
    }
}

/// The synthetic scene-fitting benchmark run by `reconstruct`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub scene: BenchmarkSpec,
    pub fit: FitConfig,
    /// PCK tolerance in scene units.
    pub pck_tolerance: Option<f64>,
}

impl BenchmarkConfig {
    pub fn tolerance(&self) -> f64 {
        self.pck_tolerance.unwrap_or(0.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            snr_db: (-2..=5).map(|i| 5.0 * i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Nodes {
    pub cloud: NodeSpec,
    pub edge: NodeSpec,
    pub end: NodeSpec,
}

impl Default for Nodes {
    fn default() -> Self {
        Self {
            cloud: NodeSpec {
                role: Role::Cloud,
                compute_flops: 13e15,
            },
            edge: NodeSpec {
                role: Role::Edge,
                compute_flops: 100e12,
            },
            end: NodeSpec {
                role: Role::End,
                compute_flops: 1.35e12,
            },
        }
    }
}

/// The four hops of a service run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Links {
    /// User device to edge.
    pub uplink: LinkSpec,
    /// Background camera to edge.
    pub camera: LinkSpec,
    /// Edge to cloud and back.
    pub backhaul: LinkSpec,
    /// Edge to user device.
    pub downlink: LinkSpec,
}

const WIRELESS_BPS: f64 = 92e6 / 5718.0;

impl Default for Links {
    fn default() -> Self {
        let wireless = |from, to| LinkSpec {
            from,
            to,
            kind: LinkKind::Wireless,
            throughput_bps: WIRELESS_BPS,
        };
        Self {
            uplink: wireless(Role::End, Role::Edge),
            camera: wireless(Role::Camera, Role::Edge),
            backhaul: LinkSpec {
                from: Role::Edge,
                to: Role::Cloud,
                kind: LinkKind::Fiber,
                throughput_bps: 10e9,
            },
            downlink: wireless(Role::Edge, Role::End),
        }
    }
}

/// Total work per request of each compute stage, in FLOP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComputeCosts {
    pub vs_flop: f64,
    pub vsr_flop: f64,
    pub render_flop: f64,
}

impl Default for ComputeCosts {
    fn default() -> Self {
        Self {
            vs_flop: 100e12,
            vsr_flop: 53e15,
            render_flop: 7e15,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            video: VideoConfig::default(),
            channel: ChannelSection::default(),
            classical: ClassicalConfig::default(),
            semantic: SemanticConfig::default(),
            synthesis: SynthesisConfig::default(),
            vsr: VsrConfig::default(),
            benchmark: BenchmarkConfig::default(),
            sweep: SweepConfig::default(),
            nodes: Nodes::default(),
            links: Links::default(),
            compute: ComputeCosts::default(),
        }
    }
}

fn expect_link(name: &str, link: &LinkSpec, from: Role, to: Role, kind: LinkKind) -> Result<()> {
    link.validate()?;
    if (link.from, link.to, link.kind) != (from, to, kind) {
        return Err(Error::Config(format!(
            "link `{name}` must be a {kind:?} link {from}->{to}, got {:?} {}->{}",
            link.kind, link.from, link.to
        )));
    }
    Ok(())
}

impl RunConfig {
    /// The shipped reference configuration.
    pub fn reference() -> Self {
        Self::from_toml_str(REFERENCE).expect("embedded reference config is valid")
    }

    pub fn reference_toml() -> &'static str {
        REFERENCE
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let v = &self.video;
        if v.width == 0 || v.height == 0 || v.frames == 0 || v.gop_size == 0 {
            return Err(Error::Config(
                "video width, height, frames and gop_size must be positive".into(),
            ));
        }
        if !(v.fps > 0.0 && v.fps.is_finite()) {
            return Err(Error::Config(format!("fps must be positive, got {}", v.fps)));
        }
        if self.channel.snr_db.is_nan() || self.channel.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config(format!("invalid SNR {}", self.channel.snr_db)));
        }
        if self.sweep.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("sweep SNRs must be finite".into()));
        }
        if !(self.classical.qp > 0.0 && self.classical.qp.is_finite()) {
            return Err(Error::Config(format!(
                "qp must be positive, got {}",
                self.classical.qp
            )));
        }
        self.semantic
            .budget
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.semantic.bits_per_symbol == 0 {
            return Err(Error::Config("bits_per_symbol must be positive".into()));
        }
        for (role, node) in [
            (Role::Cloud, &self.nodes.cloud),
            (Role::Edge, &self.nodes.edge),
            (Role::End, &self.nodes.end),
        ] {
            node.validate()?;
            if node.role != role {
                return Err(Error::Config(format!(
                    "node `{role}` declares role {}",
                    node.role
                )));
            }
        }
        let l = &self.links;
        expect_link("uplink", &l.uplink, Role::End, Role::Edge, LinkKind::Wireless)?;
        expect_link("camera", &l.camera, Role::Camera, Role::Edge, LinkKind::Wireless)?;
        expect_link("backhaul", &l.backhaul, Role::Edge, Role::Cloud, LinkKind::Fiber)?;
        expect_link("downlink", &l.downlink, Role::Edge, Role::End, LinkKind::Wireless)?;
        let c = &self.compute;
        if [c.vs_flop, c.vsr_flop, c.render_flop]
            .iter()
            .any(|f| !(*f >= 0.0 && f.is_finite()))
        {
            return Err(Error::Config(
                "compute costs must be finite and non-negative".into(),
            ));
        }
        let s = &self.synthesis;
        if !(s.threshold > 0.0) || !(s.softness >= 0.0) {
            return Err(Error::Config(
                "matting threshold must be positive, softness non-negative".into(),
            ));
        }
        if self.vsr.enabled && (self.vsr.grid == 0 || !(self.vsr.depth > 0.0) || !(self.vsr.focal > 0.0)) {
            return Err(Error::Config("vsr grid, depth and focal must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantic::SymbolBudget;

    #[test]
    fn reference_parses_and_validates() {
        let cfg = RunConfig::reference();
        assert!(matches!(cfg.semantic.budget, SymbolBudget::ClassicalRatio(r) if (r - 0.03976).abs() < 1e-4));
        assert!((cfg.links.uplink.throughput_bps - 92e6 / 5718.0).abs() < 1e-6);
        assert_eq!(cfg.sweep.snr_db.len(), 8);
    }

    #[test]
    fn empty_text_is_default() {
        assert_eq!(RunConfig::from_toml_str("").unwrap(), RunConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::reference();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn infinite_snr_literal() {
        let cfg = RunConfig::from_toml_str("[channel]\nsnr_db = inf\n").unwrap();
        assert_eq!(cfg.channel.snr_db, f64::INFINITY);
        let cfg = RunConfig::from_toml_str("[channel]\nsnr_db = \"inf\"\n").unwrap();
        assert_eq!(cfg.channel.snr_db, f64::INFINITY);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(RunConfig::from_toml_str("seed = 1\nbogus = 2\n").is_err());
        assert!(RunConfig::from_toml_str("[video]\ngop_size = 0\n").is_err());
        assert!(RunConfig::from_toml_str(
            "[links.uplink]\nfrom = \"end\"\nto = \"edge\"\nkind = \"wireless\"\nthroughput_bps = 0.0\n"
        )
        .is_err());
        assert!(RunConfig::from_toml_str(
            "[links.backhaul]\nfrom = \"edge\"\nto = \"cloud\"\nkind = \"wireless\"\nthroughput_bps = 1e9\n"
        )
        .is_err());
        assert!(RunConfig::from_toml_str("[nodes.edge]\nrole = \"cloud\"\ncompute_flops = 1e12\n").is_err());
        assert!(RunConfig::from_toml_str("[semantic]\nbudget = { fraction = 0.0 }\n").is_err());
    }
}
