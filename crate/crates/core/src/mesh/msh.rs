//! Reader and writer for MSH format version 2.2 (ASCII).
//!
//! Only the element types needed here are handled: 3-node triangles (cells)
//! and 2-node lines (tagged boundary facets). Physical group names, when
//! present, are resolved through a [`TagMap`] supplied by the run
//! configuration; without a `$PhysicalNames` section the stringified
//! physical id is looked up instead.

use std::collections::BTreeMap;

use super::{BoundaryTag, TriangleMesh};
use crate::error::{Error, Result};

/// Physical-group-name to boundary-role mapping.
#[derive(Debug, Clone)]
pub struct TagMap {
    names: BTreeMap<String, BoundaryTag>,
}

impl TagMap {
    pub fn new() -> Self {
        TagMap { names: BTreeMap::new() }
    }

    /// Mapping that identifies each role by its own name
    /// (`inflow`, `walls`, `outflow`, `shape`).
    pub fn identity() -> Self {
        let mut map = TagMap::new();
        for tag in BoundaryTag::ALL {
            map.insert(tag.name(), tag);
        }
        map
    }

    pub fn insert(&mut self, name: &str, tag: BoundaryTag) {
        self.names.insert(name.to_string(), tag);
    }

    pub fn get(&self, name: &str) -> Option<BoundaryTag> {
        self.names.get(name).copied()
    }
}

impl Default for TagMap {
    fn default() -> Self {
        TagMap::identity()
    }
}

/// Loads a triangle mesh from an MSH 2.2 ASCII file.
pub fn load_msh(path: &std::path::Path, tags: &TagMap) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_msh(&text, tags)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                return Some((i + 1, trimmed));
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.next_line()
            .ok_or_else(|| Error::Parse { line: 0, message: format!("unexpected end of file, expected {what}") })
    }
}

fn parse_num<T: std::str::FromStr>(token: &str, line: usize, what: &str) -> Result<T> {
    token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what}: {token:?}"),
    })
}

/// Parses MSH 2.2 ASCII text into a mesh.
pub fn parse_msh(text: &str, tags: &TagMap) -> Result<TriangleMesh> {
    let mut lines = Lines { inner: text.lines().enumerate() };

    let (ln, header) = lines.expect("$MeshFormat")?;
    if header != "$MeshFormat" {
        return Err(Error::Parse { line: ln, message: format!("expected $MeshFormat, found {header:?}") });
    }
    let (ln, version) = lines.expect("format version")?;
    let ver = version.split_whitespace().next().unwrap_or("");
    if ver != "2.2" {
        return Err(Error::Parse { line: ln, message: format!("unsupported MSH version {ver:?}, expected 2.2") });
    }
    let (ln, end) = lines.expect("$EndMeshFormat")?;
    if end != "$EndMeshFormat" {
        return Err(Error::Parse { line: ln, message: "missing $EndMeshFormat".into() });
    }

    let mut physical_names: BTreeMap<i64, String> = BTreeMap::new();
    let mut node_ids: BTreeMap<i64, usize> = BTreeMap::new();
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut cells: Vec<[usize; 3]> = Vec::new();
    let mut facets: Vec<([usize; 2], BoundaryTag)> = Vec::new();
    let mut seen_nodes = false;
    let mut seen_elements = false;

    while let Some((ln, section)) = lines.next_line() {
        match section {
            "$PhysicalNames" => {
                let (ln2, count) = lines.expect("physical name count")?;
                let n: usize = parse_num(count, ln2, "physical name count")?;
                for _ in 0..n {
                    let (ln3, entry) = lines.expect("physical name entry")?;
                    let mut it = entry.split_whitespace();
                    let _dim: i64 = parse_num(it.next().unwrap_or(""), ln3, "dimension")?;
                    let id: i64 = parse_num(it.next().unwrap_or(""), ln3, "physical id")?;
                    let name = entry
                        .splitn(3, char::is_whitespace)
                        .nth(2)
                        .unwrap_or("")
                        .trim()
                        .trim_matches('"')
                        .to_string();
                    physical_names.insert(id, name);
                }
                let (ln4, end) = lines.expect("$EndPhysicalNames")?;
                if end != "$EndPhysicalNames" {
                    return Err(Error::Parse { line: ln4, message: "missing $EndPhysicalNames".into() });
                }
            }
            "$Nodes" => {
                seen_nodes = true;
                let (ln2, count) = lines.expect("node count")?;
                let n: usize = parse_num(count, ln2, "node count")?;
                for _ in 0..n {
                    let (ln3, entry) = lines.expect("node entry")?;
                    let mut it = entry.split_whitespace();
                    let id: i64 = parse_num(it.next().unwrap_or(""), ln3, "node id")?;
                    let x: f64 = parse_num(it.next().unwrap_or(""), ln3, "node x")?;
                    let y: f64 = parse_num(it.next().unwrap_or(""), ln3, "node y")?;
                    node_ids.insert(id, vertices.len());
                    vertices.push([x, y]);
                }
                let (ln4, end) = lines.expect("$EndNodes")?;
                if end != "$EndNodes" {
                    return Err(Error::Parse { line: ln4, message: "missing $EndNodes".into() });
                }
            }
            "$Elements" => {
                seen_elements = true;
                let (ln2, count) = lines.expect("element count")?;
                let n: usize = parse_num(count, ln2, "element count")?;
                for _ in 0..n {
                    let (ln3, entry) = lines.expect("element entry")?;
                    let toks: Vec<&str> = entry.split_whitespace().collect();
                    if toks.len() < 3 {
                        return Err(Error::Parse { line: ln3, message: "truncated element record".into() });
                    }
                    let etype: i64 = parse_num(toks[1], ln3, "element type")?;
                    let ntags: usize = parse_num(toks[2], ln3, "element tag count")?;
                    let nodes_start = 3 + ntags;
                    let physical: Option<i64> = if ntags >= 1 {
                        Some(parse_num(toks[3], ln3, "physical tag")?)
                    } else {
                        None
                    };
                    let resolve = |id: i64, ln: usize| -> Result<usize> {
                        node_ids.get(&id).copied().ok_or_else(|| Error::Parse {
                            line: ln,
                            message: format!("element references unknown node {id}"),
                        })
                    };
                    match etype {
                        1 => {
                            if toks.len() < nodes_start + 2 {
                                return Err(Error::Parse { line: ln3, message: "line element needs 2 nodes".into() });
                            }
                            let a = resolve(parse_num(toks[nodes_start], ln3, "node ref")?, ln3)?;
                            let b = resolve(parse_num(toks[nodes_start + 1], ln3, "node ref")?, ln3)?;
                            let phys = physical.ok_or_else(|| Error::Parse {
                                line: ln3,
                                message: "boundary line element has no physical tag".into(),
                            })?;
                            let name = physical_names
                                .get(&phys)
                                .cloned()
                                .unwrap_or_else(|| phys.to_string());
                            let tag = tags.get(&name).ok_or_else(|| {
                                Error::Config(format!(
                                    "physical group {name:?} has no boundary-role mapping"
                                ))
                            })?;
                            facets.push(([a, b], tag));
                        }
                        2 => {
                            if toks.len() < nodes_start + 3 {
                                return Err(Error::Parse { line: ln3, message: "triangle element needs 3 nodes".into() });
                            }
                            let a = resolve(parse_num(toks[nodes_start], ln3, "node ref")?, ln3)?;
                            let b = resolve(parse_num(toks[nodes_start + 1], ln3, "node ref")?, ln3)?;
                            let c = resolve(parse_num(toks[nodes_start + 2], ln3, "node ref")?, ln3)?;
                            cells.push([a, b, c]);
                        }
                        15 => {} // point elements are ignored
                        other => {
                            return Err(Error::Parse {
                                line: ln3,
                                message: format!("unsupported element type {other}"),
                            })
                        }
                    }
                }
                let (ln4, end) = lines.expect("$EndElements")?;
                if end != "$EndElements" {
                    return Err(Error::Parse { line: ln4, message: "missing $EndElements".into() });
                }
            }
            other if other.starts_with('$') && !other.starts_with("$End") => {
                // Skip unknown sections.
                let terminator = format!("$End{}", &other[1..]);
                loop {
                    let (_, l) = lines.expect(&terminator)?;
                    if l == terminator {
                        break;
                    }
                }
            }
            other => {
                return Err(Error::Parse { line: ln, message: format!("unexpected content {other:?}") });
            }
        }
    }

    if !seen_nodes || !seen_elements {
        return Err(Error::Parse { line: 0, message: "missing $Nodes or $Elements section".into() });
    }
    if cells.is_empty() {
        return Err(Error::Parse { line: 0, message: "mesh contains no triangles".into() });
    }
    TriangleMesh::from_parts(vertices, cells, facets)
}

/// Serializes mesh parts as MSH 2.2 ASCII, one physical group per boundary role.
pub fn to_msh_string(
    vertices: &[[f64; 2]],
    cells: &[[usize; 3]],
    facets: &[([usize; 2], BoundaryTag)],
) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    out.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
    out.push_str("$PhysicalNames\n4\n");
    for (i, tag) in BoundaryTag::ALL.iter().enumerate() {
        let _ = writeln!(out, "1 {} \"{}\"", i + 1, tag.name());
    }
    out.push_str("$EndPhysicalNames\n$Nodes\n");
    let _ = writeln!(out, "{}", vertices.len());
    for (i, v) in vertices.iter().enumerate() {
        let _ = writeln!(out, "{} {:.17e} {:.17e} 0", i + 1, v[0], v[1]);
    }
    out.push_str("$EndNodes\n$Elements\n");
    let _ = writeln!(out, "{}", facets.len() + cells.len());
    let mut eid = 1;
    for (verts, tag) in facets {
        let phys = BoundaryTag::ALL.iter().position(|t| t == tag).unwrap() + 1;
        let _ = writeln!(out, "{eid} 1 2 {phys} {phys} {} {}", verts[0] + 1, verts[1] + 1);
        eid += 1;
    }
    for cell in cells {
        let _ = writeln!(out, "{eid} 2 2 0 0 {} {} {}", cell[0] + 1, cell[1] + 1, cell[2] + 1);
        eid += 1;
    }
    out.push_str("$EndElements\n");
    out
}
