//! Reader for the Gmsh MSH 2.2 ASCII subset: `$MeshFormat`, `$Nodes` and
//! `$Elements` with 3-node triangles (type 2) and 4-node tetrahedra (type 4).
//!
//! The first element tag is the physical tag. Points (15) and lines (1) are
//! skipped; any other element type is rejected. Unknown sections such as
//! `$PhysicalNames` are ignored.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use super::{BoundaryFacet, DiffusionTag, ElasticTag, Region, TetMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FacetTags {
    pub elastic: ElasticTag,
    pub diffusion: DiffusionTag,
}

/// Maps Gmsh physical tags onto element regions and boundary facet tags.
///
/// With an empty `regions` table every tetrahedron is DESIGN.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TagMap {
    pub regions: BTreeMap<i64, Region>,
    pub facets: BTreeMap<i64, FacetTags>,
}

pub fn load_mesh(path: &Path, tags: &TagMap) -> Result<TetMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_msh(&text, path, tags)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a Path,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Option<&'a str> {
        for (i, l) in self.inner.by_ref() {
            let l = l.trim();
            if !l.is_empty() {
                self.line = i + 1;
                return Some(l);
            }
        }
        None
    }

    fn expect_line(&mut self, what: &str) -> Result<&'a str> {
        self.next_line()
            .ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: PathBuf::from(self.path),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn parse<T: std::str::FromStr>(&self, tok: Option<&str>, what: &str) -> Result<T> {
        tok.and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err(format!("expected {what}")))
    }
}

pub fn parse_msh(text: &str, path: &Path, tags: &TagMap) -> Result<TetMesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        path,
        line: 0,
    };
    let mut format_seen = false;
    let mut node_index: HashMap<u64, usize> = HashMap::new();
    let mut nodes: Vec<[f64; 3]> = Vec::new();
    let mut raw_tets: Vec<(i64, [u64; 4])> = Vec::new();
    let mut raw_tris: Vec<(i64, [u64; 3])> = Vec::new();

    while let Some(header) = lines.next_line() {
        match header {
            "$MeshFormat" => {
                let l = lines.expect_line("format line")?;
                let mut it = l.split_whitespace();
                let version: f64 = lines.parse(it.next(), "format version")?;
                let file_type: u32 = lines.parse(it.next(), "file type")?;
                if !(2.0..3.0).contains(&version) || file_type != 0 {
                    return Err(lines.err(format!(
                        "only MSH 2.x ASCII is supported (version {version}, file-type {file_type})"
                    )));
                }
                expect_end(&mut lines, "$EndMeshFormat")?;
                format_seen = true;
            }
            "$Nodes" => {
                let l = lines.expect_line("node count")?;
                let count: usize = lines.parse(Some(l), "node count")?;
                nodes.reserve(count);
                for _ in 0..count {
                    let l = lines.expect_line("node")?;
                    let mut it = l.split_whitespace();
                    let id: u64 = lines.parse(it.next(), "node id")?;
                    let mut p = [0.0; 3];
                    for c in &mut p {
                        *c = lines.parse(it.next(), "node coordinate")?;
                    }
                    if node_index.insert(id, nodes.len()).is_some() {
                        return Err(lines.err(format!("node {id} defined twice")));
                    }
                    nodes.push(p);
                }
                expect_end(&mut lines, "$EndNodes")?;
            }
            "$Elements" => {
                let l = lines.expect_line("element count")?;
                let count: usize = lines.parse(Some(l), "element count")?;
                for _ in 0..count {
                    let l = lines.expect_line("element")?;
                    let toks: Vec<&str> = l.split_whitespace().collect();
                    let mut it = toks.iter().copied();
                    let _id: u64 = lines.parse(it.next(), "element id")?;
                    let etype: u32 = lines.parse(it.next(), "element type")?;
                    let ntags: usize = lines.parse(it.next(), "tag count")?;
                    let mut physical = 0i64;
                    for t in 0..ntags {
                        let v: i64 = lines.parse(it.next(), "element tag")?;
                        if t == 0 {
                            physical = v;
                        }
                    }
                    let rest: Vec<&str> = it.collect();
                    let want = match etype {
                        2 => 3,
                        4 => 4,
                        1 | 15 => continue,
                        other => return Err(lines.err(format!("unsupported element type {other}"))),
                    };
                    if rest.len() != want {
                        return Err(lines.err(format!(
                            "element type {etype} needs {want} nodes, found {}",
                            rest.len()
                        )));
                    }
                    let mut ids = [0u64; 4];
                    for (slot, tok) in ids.iter_mut().zip(&rest) {
                        *slot = lines.parse(Some(tok), "element node id")?;
                    }
                    if etype == 4 {
                        raw_tets.push((physical, ids));
                    } else {
                        raw_tris.push((physical, [ids[0], ids[1], ids[2]]));
                    }
                }
                expect_end(&mut lines, "$EndElements")?;
            }
            s if s.starts_with('$') && !s.starts_with("$End") => {
                let end = format!("$End{}", &s[1..]);
                while lines.expect_line(&end)? != end {}
            }
            other => return Err(lines.err(format!("unexpected line {other:?}"))),
        }
    }
    if !format_seen {
        return Err(lines.err("missing $MeshFormat section"));
    }

    let lookup = |id: u64| {
        node_index
            .get(&id)
            .copied()
            .ok_or_else(|| Error::InvalidMesh(format!("element references undefined node {id}")))
    };
    let mut tets = Vec::with_capacity(raw_tets.len());
    let mut regions = Vec::with_capacity(raw_tets.len());
    for (physical, ids) in raw_tets {
        tets.push([
            lookup(ids[0])?,
            lookup(ids[1])?,
            lookup(ids[2])?,
            lookup(ids[3])?,
        ]);
        let region = if tags.regions.is_empty() {
            Region::Design
        } else {
            *tags.regions.get(&physical).ok_or_else(|| {
                Error::InvalidMesh(format!(
                    "tetrahedron physical tag {physical} is not in the tag map"
                ))
            })?
        };
        regions.push(region);
    }
    let mut facets = Vec::with_capacity(raw_tris.len());
    for (physical, ids) in raw_tris {
        let t = tags.facets.get(&physical).ok_or_else(|| {
            Error::InvalidMesh(format!(
                "triangle physical tag {physical} is not in the tag map"
            ))
        })?;
        facets.push(BoundaryFacet {
            nodes: [lookup(ids[0])?, lookup(ids[1])?, lookup(ids[2])?],
            elastic: t.elastic,
            diffusion: t.diffusion,
        });
    }
    TetMesh::new(nodes, tets, facets, regions)
}

fn expect_end(lines: &mut Lines<'_>, end: &str) -> Result<()> {
    let l = lines.expect_line(end)?;
    if l != end {
        return Err(lines.err(format!("expected {end}, found {l:?}")));
    }
    Ok(())
}
