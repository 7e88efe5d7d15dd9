//! JSON run configuration and its resolution into a scenario.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thermeta::scenario::{Core, Goal};
use thermeta::{
    Layout, Method, OptimizationProblem, OptimizerSettings, ScenarioName, ScenarioSetup,
};

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "THERMETA_OUT_DIR";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Option<ScenarioName>,
    pub mesh: Option<MeshSection>,
    pub bc: Option<BcSection>,
    pub regions: Option<RegionsSection>,
    pub materials: Option<MaterialsSection>,
    pub objective: Option<ObjectiveSection>,
    pub optimizer: Option<OptimizerSettings>,
    pub database: Option<DatabaseSection>,
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub h: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Left,
    Right,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub edge: Edge,
    /// `y` range; the whole edge when absent.
    pub segment: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcSection {
    pub hot: Option<EdgeSpec>,
    pub t_hot: Option<f64>,
    pub cold: Option<EdgeSpec>,
    pub t_cold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignDomain {
    Ring,
    Disk,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotatorSection {
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub direction: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionsSection {
    pub center: Option<[f64; 2]>,
    pub r_in: Option<f64>,
    pub r_out: Option<f64>,
    pub core: Option<Core>,
    pub design: Option<DesignDomain>,
    pub rotator: Option<RotatorSection>,
    /// Probe `x` positions A, B, C, D on the center row.
    pub probes: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsSection {
    pub matrix: Option<f64>,
    pub inclusion: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Cloak,
    CloakEverywhere,
    Concentrator,
    Rotator,
    Weighted,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub variant: Variant,
    /// `(cloak, concentrator, rotator)`; required for `weighted`.
    pub weights: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatabaseSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let at = e.path().to_string();
            anyhow::anyhow!("{}: {at}: {}", path.display(), e.inner())
        })?;
        if let Some(db) = &cfg.database {
            if !db.path.exists() {
                bail!(
                    "{}: database.path: {} does not exist",
                    path.display(),
                    db.path.display()
                );
            }
        }
        Ok(cfg)
    }
}

/// Command-line values applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenario: Option<ScenarioName>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub move_limit: Option<f64>,
    pub method: Option<Method>,
}

/// Fully specified run; its JSON form is what the config hash covers.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub scenario: Option<ScenarioName>,
    pub setup: ScenarioSetup,
    pub layout: Layout,
    pub optimizer: OptimizerSettings,
    pub database: Option<PathBuf>,
}

impl Resolved {
    pub fn new(cfg: &RunConfig, ov: &Overrides) -> anyhow::Result<Self> {
        let scenario = ov.scenario.or(cfg.scenario);
        let mut layout = match scenario {
            Some(name) => name.layout(),
            None => Layout {
                nonuniform_hot: false,
                core: Core::Open,
                disk_design: false,
                goal: Goal::CloakExterior,
            },
        };
        if scenario.is_none() && cfg.objective.is_none() {
            bail!("objective: required when no scenario is given");
        }

        let mesh = cfg.mesh.clone().unwrap_or_default();
        let nx = ov.nx.or(mesh.nx);
        let ny = ov.ny.or(mesh.ny);
        let mut setup = match (nx, ny) {
            (None, None) => ScenarioSetup::default(),
            (nx, ny) => {
                let d = ScenarioSetup::default();
                ScenarioSetup::for_mesh(nx.unwrap_or(d.nx), ny.unwrap_or(d.ny))
            }
        };
        if let Some(h) = mesh.h {
            setup.h = h;
        }

        if let Some(bc) = &cfg.bc {
            if let Some(hot) = &bc.hot {
                if hot.edge != Edge::Left {
                    bail!("bc.hot.edge: only \"left\" is supported");
                }
                layout.nonuniform_hot = hot.segment.is_some();
                if let Some(seg) = hot.segment {
                    setup.hot_segment = seg;
                }
            }
            if let Some(cold) = &bc.cold {
                if cold.edge != Edge::Right || cold.segment.is_some() {
                    bail!("bc.cold: only the full \"right\" edge is supported");
                }
            }
            setup.t_hot = bc.t_hot.unwrap_or(setup.t_hot);
            setup.t_cold = bc.t_cold.unwrap_or(setup.t_cold);
        }

        if let Some(r) = &cfg.regions {
            setup.center = r.center.unwrap_or(setup.center);
            setup.r_in = r.r_in.unwrap_or(setup.r_in);
            setup.r_out = r.r_out.unwrap_or(setup.r_out);
            layout.core = r.core.unwrap_or(layout.core);
            if let Some(d) = r.design {
                layout.disk_design = d == DesignDomain::Disk;
            }
            if let Some(rot) = &r.rotator {
                setup.target[0] = rot.width.unwrap_or(setup.target[0]);
                setup.target[1] = rot.height.unwrap_or(setup.target[1]);
                setup.direction = rot.direction.unwrap_or(setup.direction);
            }
            if r.probes.is_some() {
                setup.probe_x = r.probes;
            }
        }

        if let Some(m) = &cfg.materials {
            setup.matrix_kappa = m.matrix.unwrap_or(setup.matrix_kappa);
            setup.inclusion_kappa = m.inclusion.unwrap_or(setup.inclusion_kappa);
        }

        if let Some(obj) = &cfg.objective {
            layout.goal = match (obj.variant, obj.weights) {
                (Variant::Weighted, Some(w)) => Goal::Weighted(w),
                (Variant::Weighted, None) => {
                    bail!("objective.weights: required for the weighted variant")
                }
                (_, Some(_)) => bail!("objective.weights: only valid for the weighted variant"),
                (Variant::Cloak, None) => Goal::CloakExterior,
                (Variant::CloakEverywhere, None) => Goal::CloakEverywhere,
                (Variant::Concentrator, None) => Goal::Concentrator,
                (Variant::Rotator, None) => Goal::Rotator,
            };
        }

        let mut optimizer = cfg.optimizer.unwrap_or_default();
        optimizer.max_iter = ov.max_iter.unwrap_or(optimizer.max_iter);
        optimizer.tol = ov.tol.unwrap_or(optimizer.tol);
        optimizer.move_limit = ov.move_limit.unwrap_or(optimizer.move_limit);
        optimizer.method = ov.method.unwrap_or(optimizer.method);
        optimizer.validate()?;

        Ok(Self {
            scenario,
            setup,
            layout,
            optimizer,
            database: cfg.database.as_ref().map(|d| d.path.clone()),
        })
    }

    pub fn problem(&self) -> anyhow::Result<OptimizationProblem> {
        Ok(self.setup.build_layout(self.layout, self.optimizer)?)
    }

    pub fn label(&self) -> String {
        self.scenario
            .map(|s| s.to_string())
            .unwrap_or_else(|| "custom".into())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn header(&self) -> Vec<String> {
        vec![
            format!("config-hash: {}", self.hash()),
            format!("run: {}", self.label()),
        ]
    }
}

/// `--out` first, then the environment, then the config, then `fallback`.
pub fn output_dir(flag: Option<&Path>, cfg: &RunConfig, fallback: &str) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    if let Some(o) = &cfg.output {
        return o.directory.clone();
    }
    PathBuf::from(fallback)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> anyhow::Result<RunConfig> {
        let dir = tempfile::tempdir()?;
        let p = dir.path().join("c.json");
        std::fs::write(&p, text)?;
        RunConfig::load(&p)
    }

    #[test]
    fn unknown_key_is_named_with_its_path() {
        let err = parse(r#"{"scenario":"rot-uniform","mesh":{"nx":10,"nz":3}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("mesh.nz"), "{err}");
    }

    #[test]
    fn scenario_layout_with_overrides() {
        let cfg = parse(
            r#"{"scenario":"cloak-uniform","optimizer":{"max_iter":7},
                "bc":{"hot":{"edge":"left","segment":[10,40]}}}"#,
        )
        .unwrap();
        let r = Resolved::new(
            &cfg,
            &Overrides {
                tol: Some(1e-3),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(r.layout.nonuniform_hot);
        assert_eq!(r.setup.hot_segment, [10.0, 40.0]);
        assert_eq!(r.optimizer.max_iter, 7);
        assert_eq!(r.optimizer.tol, 1e-3);
    }

    #[test]
    fn hash_tracks_content() {
        let cfg = RunConfig::default();
        let a = Resolved::new(
            &cfg,
            &Overrides {
                scenario: Some(ScenarioName::ConcUniform),
                ..Default::default()
            },
        )
        .unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.optimizer.max_iter += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn objective_required_without_scenario() {
        let err = Resolved::new(&RunConfig::default(), &Overrides::default()).unwrap_err();
        assert!(err.to_string().starts_with("objective"));
    }

    #[test]
    fn missing_database_rejected() {
        let err = parse(r#"{"scenario":"conc-uniform","database":{"path":"/nonexistent/db"}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("database.path"), "{err}");
    }
}
