//! Declarative experiment configuration for the batch front-end.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbp::{FilterKind, ImageGrid, SinogramGrid};
use crate::mask::{Mask, MaskSpec};
use crate::phantom::Phantom;

/// Phantom reference: a named built-in, a definition file, or an inline
/// definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhantomRef {
    Builtin { builtin: String },
    File { file: String },
    Inline(Phantom),
}

/// Mask reference: a definition file or an inline definition.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskRef {
    File { file: String },
    Inline(MaskSpec),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinogramGridSpec {
    pub n_phi: usize,
    pub n_p: usize,
    #[serde(default = "default_p_max")]
    pub p_max: f64,
}

fn default_p_max() -> f64 {
    std::f64::consts::SQRT_2
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageGridSpec {
    pub n: usize,
    #[serde(default = "default_extent")]
    pub extent: f64,
}

fn default_extent() -> f64 {
    1.0
}

/// Outputs a command may produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Sinogram,
    Image,
    Prediction,
    Overlay,
    Metrics,
    Render,
}

/// One experiment: phantom, optional cutoff, grids, optional apodization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub phantom: PhantomRef,
    #[serde(default)]
    pub mask: Option<MaskRef>,
    pub sinogram_grid: SinogramGridSpec,
    pub image_grid: ImageGridSpec,
    #[serde(default)]
    pub apodize_delta: Option<f64>,
    #[serde(default)]
    pub filter: FilterKind,
    #[serde(default)]
    pub outputs: Vec<OutputKind>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Ok((cfg, base))
    }

    pub fn build_phantom(&self, base: &Path) -> Result<Phantom> {
        match &self.phantom {
            PhantomRef::Builtin { builtin } => match builtin.as_str() {
                "skullish" => Ok(Phantom::skullish()),
                "unit_disk" => Ok(Phantom::unit_disk()),
                other => Err(Error::config(format!("unknown built-in phantom '{other}'"))),
            },
            PhantomRef::File { file } => {
                let text = std::fs::read_to_string(base.join(file))?;
                Phantom::from_json(&text)
            }
            PhantomRef::Inline(ph) => Phantom::new(ph.ellipses.clone()),
        }
    }

    /// The configured mask, or `None` for full data.
    pub fn build_mask(&self, base: &Path) -> Result<Option<Mask>> {
        match &self.mask {
            None => Ok(None),
            Some(MaskRef::File { file }) => {
                let path = base.join(file);
                let text = std::fs::read_to_string(&path)?;
                let spec = MaskSpec::from_json(&text)?;
                Ok(Some(Mask::from_spec(&spec, path.parent())?))
            }
            Some(MaskRef::Inline(spec)) => Ok(Some(Mask::from_spec(spec, Some(base))?)),
        }
    }

    pub fn sinogram_grid(&self) -> Result<SinogramGrid> {
        SinogramGrid::new(self.sinogram_grid.n_phi, self.sinogram_grid.n_p, self.sinogram_grid.p_max)
    }

    pub fn image_grid(&self) -> Result<ImageGrid> {
        ImageGrid::new(self.image_grid.n, self.image_grid.extent)
    }

    pub fn wants(&self, kind: OutputKind) -> bool {
        self.outputs.is_empty() || self.outputs.contains(&kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_inline_config() {
        let text = r#"{
            "phantom": {"builtin": "skullish"},
            "mask": {"kind": "roi", "radius": 0.8},
            "sinogram_grid": {"n_phi": 64, "n_p": 64},
            "image_grid": {"n": 32}
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        let ph = cfg.build_phantom(Path::new(".")).unwrap();
        assert_eq!(ph.ellipses.len(), 5);
        let m = cfg.build_mask(Path::new(".")).unwrap().unwrap();
        assert!(m.inside(0.3, 0.4));
        assert_eq!(cfg.sinogram_grid().unwrap().p_max, std::f64::consts::SQRT_2);
        assert_eq!(cfg.image_grid().unwrap().extent, 1.0);
        assert!(cfg.wants(OutputKind::Sinogram));
    }

    #[test]
    fn parse_inline_phantom_and_reject_unknown() {
        let text = r#"{
            "phantom": {"ellipses": [{"center":[0,0],"axes":[0.5,0.5],"intensity":1}]},
            "sinogram_grid": {"n_phi": 16, "n_p": 16},
            "image_grid": {"n": 16}
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert!(cfg.build_mask(Path::new(".")).unwrap().is_none());
        let bad = r#"{
            "phantom": {"builtin": "skullish"},
            "sinogram_grid": {"n_phi": 16, "n_p": 16},
            "image_grid": {"n": 16},
            "grids": {}
        }"#;
        assert!(serde_json::from_str::<ExperimentConfig>(bad).is_err());
    }
}
