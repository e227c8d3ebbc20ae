//! TOML run configuration.
//!
//! ```toml
//! [mesh]
//! kind = "box"
//! divisions = [4, 4, 8]
//! lengths = [10.0, 10.0, 20.0]
//! fixture = { axis = 0, min = 0.0, max = 2.5 }
//!
//! [load]
//! total_force_n = 300.0
//!
//! [schedule]
//! horizon_weeks = 8.0
//! dt_weeks = 1.0
//! ```
//!
//! Every section is optional except `[mesh]`; missing keys take the defaults
//! of the corresponding library types.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{Traction, TractionTable};
use crate::forward::{DensityField, Problem, Schedule, SolverOptions};
use crate::materials::MaterialParams;
use crate::mesh::{
    generate_box_mesh, load_mesh, DiffusionTag, ElasticMode, ElasticTag, FacetTags, FixtureSlab,
    Region, TagMap, TetMesh,
};
use crate::objective::ObjectiveSpec;
use crate::optimizer::OptimizerOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    #[serde(default)]
    pub materials: MaterialParams,
    #[serde(default)]
    pub load: LoadConfig,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub objective: ObjectiveSpec,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub gradient: GradientCheckConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Reserved; every algorithm is deterministic.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshConfig {
    Box {
        divisions: [usize; 3],
        /// Edge lengths in mm.
        lengths: [f64; 3],
        #[serde(default)]
        fixture: Option<FixtureSlab>,
    },
    Gmsh {
        path: PathBuf,
        /// Physical volume tag → region; empty means all design.
        #[serde(default)]
        regions: BTreeMap<String, RegionName>,
        /// Physical surface tag → boundary tags.
        #[serde(default)]
        facets: BTreeMap<String, FacetConfig>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionName {
    Design,
    Fixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElasticBoundary {
    Dirichlet,
    Loaded,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionBoundary {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FacetConfig {
    pub elastic: ElasticBoundary,
    /// Load group for `elastic = "loaded"`.
    #[serde(default)]
    pub group: Option<u32>,
    pub diffusion: DiffusionBoundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadConfig {
    pub mode: ElasticMode,
    /// Compressive force in N spread uniformly over each loaded group;
    /// ignored for groups listed in `tractions`.
    pub total_force_n: Option<f64>,
    /// Groups that receive `total_force_n`; every loaded group when unset.
    pub force_groups: Option<Vec<u32>>,
    /// Load group → traction in N/mm².
    pub tractions: BTreeMap<String, Traction>,
}

impl Default for LoadConfig {
    fn default() -> Self {
        Self {
            mode: ElasticMode::PureNeumann,
            total_force_n: Some(300.0),
            force_groups: None,
            tractions: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientCheckConfig {
    pub h: f64,
    pub directions: usize,
    pub tolerance: f64,
}

impl Default for GradientCheckConfig {
    fn default() -> Self {
        Self {
            h: 1e-5,
            directions: 10,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// Uniform starting density; defaults to the middle of `[c_P, C_P]`.
    pub rho: Option<f64>,
    /// Interior molecule levels at t = 0.
    pub molecules: [f64; 2],
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            rho: None,
            molecules: [0.0; 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write every k-th time step / optimizer iterate as VTK.
    pub cadence: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            cadence: 1,
        }
    }
}

fn parse_tag(key: &str) -> Result<i64> {
    key.trim()
        .parse()
        .map_err(|_| Error::Config(format!("tag key {key:?} is not an integer")))
}

impl RunConfig {
    /// Reads and validates a config file. Relative mesh paths are resolved
    /// against the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let MeshConfig::Gmsh { path: mesh, .. } = &mut cfg.mesh {
            if mesh.is_relative() {
                if let Some(dir) = path.parent() {
                    *mesh = dir.join(&*mesh);
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.materials.validate()?;
        self.schedule.steps()?;
        self.objective.validate()?;
        self.optimizer.validate()?;
        if self.output.cadence == 0 {
            return Err(Error::Config("output cadence must be >= 1".into()));
        }
        let g = &self.gradient;
        if !(g.h > 0.0) || !(g.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "gradient check needs h > 0 and tolerance > 0, got {} and {}",
                g.h, g.tolerance
            )));
        }
        if let Some(r) = self.initial.rho {
            let p = &self.materials;
            if !(r >= p.c_p && r <= p.cap_p) {
                return Err(Error::Config(format!(
                    "initial density {r} outside [{}, {}]",
                    p.c_p, p.cap_p
                )));
            }
        }
        if let Some(f) = self.load.total_force_n {
            if !f.is_finite() {
                return Err(Error::Config(format!(
                    "total_force_n must be finite, got {f}"
                )));
            }
        }
        for key in self.load.tractions.keys() {
            parse_tag(key)?;
        }
        if let MeshConfig::Gmsh {
            regions, facets, ..
        } = &self.mesh
        {
            for key in regions.keys() {
                parse_tag(key)?;
            }
            for (key, f) in facets {
                parse_tag(key)?;
                if (f.elastic == ElasticBoundary::Loaded) != f.group.is_some() {
                    return Err(Error::Config(format!(
                        "facet tag {key}: `group` is required for loaded facets and only for them"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn tag_map(&self) -> Result<TagMap> {
        let mut map = TagMap::default();
        if let MeshConfig::Gmsh {
            regions, facets, ..
        } = &self.mesh
        {
            for (k, r) in regions {
                let region = match r {
                    RegionName::Design => Region::Design,
                    RegionName::Fixture => Region::Fixture,
                };
                map.regions.insert(parse_tag(k)?, region);
            }
            for (k, f) in facets {
                let elastic = match (f.elastic, f.group) {
                    (ElasticBoundary::Dirichlet, _) => ElasticTag::Dirichlet,
                    (ElasticBoundary::Free, _) => ElasticTag::NeumannFree,
                    (ElasticBoundary::Loaded, Some(g)) => ElasticTag::NeumannLoaded(g),
                    (ElasticBoundary::Loaded, None) => {
                        return Err(Error::Config(format!("facet tag {k} needs a load group")))
                    }
                };
                let diffusion = match f.diffusion {
                    DiffusionBoundary::Dirichlet => DiffusionTag::Dirichlet,
                    DiffusionBoundary::Neumann => DiffusionTag::Neumann,
                };
                map.facets
                    .insert(parse_tag(k)?, FacetTags { elastic, diffusion });
            }
        }
        Ok(map)
    }

    pub fn build_mesh(&self) -> Result<TetMesh> {
        match &self.mesh {
            MeshConfig::Box {
                divisions,
                lengths,
                fixture,
            } => generate_box_mesh(*divisions, *lengths, *fixture),
            MeshConfig::Gmsh { path, .. } => load_mesh(path, &self.tag_map()?),
        }
    }

    /// Traction per load group: explicit entries first, the rest from
    /// `total_force_n` divided by the group's area.
    pub fn tractions(&self, mesh: &TetMesh) -> Result<TractionTable> {
        let mut table = TractionTable::new();
        for (k, t) in &self.load.tractions {
            let g = u32::try_from(parse_tag(k)?)
                .map_err(|_| Error::Config(format!("load group {k} must be non-negative")))?;
            table.insert(g, *t);
        }
        if let Some(force) = self.load.total_force_n {
            let areas = mesh.boundary_areas();
            for (tag, area) in &areas.elastic {
                if let ElasticTag::NeumannLoaded(g) = tag {
                    let selected = self
                        .load
                        .force_groups
                        .as_ref()
                        .is_none_or(|gs| gs.contains(g));
                    if selected {
                        table.entry(*g).or_insert(Traction::Pressure(force / area));
                    }
                }
            }
        }
        Ok(table)
    }

    pub fn build_problem(&self, mesh: TetMesh) -> Result<Problem> {
        let tractions = self.tractions(&mesh)?;
        Problem::new(
            mesh,
            self.materials.clone(),
            &tractions,
            self.load.mode,
            self.schedule,
            self.solver,
        )?
        .with_initial_molecules(self.initial.molecules)
    }

    pub fn initial_density(&self, mesh: &TetMesh) -> DensityField {
        let p = &self.materials;
        let r = self.initial.rho.unwrap_or(0.5 * (p.c_p + p.cap_p));
        DensityField::uniform(mesh.num_nodes(), r)
    }
}
