//! Plain-text mesh files.
//!
//! ```text
//! tfem-mesh 1
//! nodes <n>
//! <x> <y>                  (n lines)
//! elems <m>
//! <a> <b> <c> <d>          (m lines, zero-based, counter-clockwise)
//! nodeset <name> <k>
//! <node>                   (k lines)
//! edgeset <name> <k>
//! <elem> <local edge>      (k lines)
//! ```
//!
//! `#` starts a comment. Coordinates are written with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::{check_connectivity, Point2, QuadMesh};

pub const MESH_HEADER: &str = "tfem-mesh 1";

pub fn mesh_to_string(mesh: &QuadMesh) -> String {
    let mut s = String::new();
    writeln!(s, "{MESH_HEADER}").unwrap();
    writeln!(s, "# domain_area {:.16e}", mesh.domain_area).unwrap();
    writeln!(s, "nodes {}", mesh.nodes.len()).unwrap();
    for p in &mesh.nodes {
        writeln!(s, "{:.16e} {:.16e}", p.x, p.y).unwrap();
    }
    writeln!(s, "elems {}", mesh.elems.len()).unwrap();
    for c in &mesh.elems {
        writeln!(s, "{} {} {} {}", c[0], c[1], c[2], c[3]).unwrap();
    }
    for (name, ids) in &mesh.node_sets {
        writeln!(s, "nodeset {name} {}", ids.len()).unwrap();
        for i in ids {
            writeln!(s, "{i}").unwrap();
        }
    }
    for (name, edges) in &mesh.edge_sets {
        writeln!(s, "edgeset {name} {}", edges.len()).unwrap();
        for (e, k) in edges {
            writeln!(s, "{e} {k}").unwrap();
        }
    }
    s
}

pub fn write_mesh(mesh: &QuadMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, mesh_to_string(mesh)).map_err(|e| Error::io(path, e))
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<QuadMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mesh(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    /// Next non-empty line with comments stripped, split into tokens.
    fn next_tokens(&mut self) -> Option<Vec<&'a str>> {
        for (i, raw) in self.inner.by_ref() {
            let content = raw.split('#').next().unwrap_or("");
            let toks: Vec<&str> = content.split_whitespace().collect();
            if !toks.is_empty() {
                self.line = i + 1;
                return Some(toks);
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<Vec<&'a str>> {
        self.next_tokens().ok_or_else(|| Error::Parse {
            line: self.line + 1,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(lines: &Lines, tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| lines.err(format!("invalid number `{tok}`")))
}

fn parse_header(lines: &Lines, toks: &[&str], key: &str) -> Result<usize> {
    match toks {
        [k, n] if *k == key => parse_num(lines, n),
        _ => Err(lines.err(format!("expected `{key} <count>`"))),
    }
}

pub fn parse_mesh(text: &str) -> Result<QuadMesh> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.expect("header")?;
    if header.join(" ") != MESH_HEADER {
        return Err(lines.err(format!("expected header `{MESH_HEADER}`")));
    }

    let toks = lines.expect("nodes block")?;
    let n = parse_header(&lines, &toks, "nodes")?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let toks = lines.expect("node coordinates")?;
        let [x, y] = toks[..] else {
            return Err(lines.err("node record needs exactly 2 coordinates"));
        };
        let p = Point2::new(parse_num(&lines, x)?, parse_num(&lines, y)?);
        if !p.x.is_finite() || !p.y.is_finite() {
            return Err(lines.err("non-finite coordinate"));
        }
        nodes.push(p);
    }

    let toks = lines.expect("elems block")?;
    let m = parse_header(&lines, &toks, "elems")?;
    let mut elems = Vec::with_capacity(m);
    for _ in 0..m {
        let toks = lines.expect("element connectivity")?;
        if toks.len() != 4 {
            return Err(lines.err(format!(
                "element record needs 4 node indices, found {}",
                toks.len()
            )));
        }
        let mut c = [0usize; 4];
        for (slot, tok) in c.iter_mut().zip(&toks) {
            *slot = parse_num(&lines, tok)?;
        }
        elems.push(c);
    }
    check_connectivity(nodes.len(), &elems)?;

    let mut node_sets = BTreeMap::new();
    let mut edge_sets = BTreeMap::new();
    while let Some(toks) = lines.next_tokens() {
        let [kind, name, k] = toks[..] else {
            return Err(lines.err("expected `nodeset|edgeset <name> <count>`"));
        };
        let k: usize = parse_num(&lines, k)?;
        match kind {
            "nodeset" => {
                let mut ids = Vec::with_capacity(k);
                for _ in 0..k {
                    let toks = lines.expect("node index")?;
                    let [i] = toks[..] else {
                        return Err(lines.err("node set entry needs one index"));
                    };
                    let i: usize = parse_num(&lines, i)?;
                    if i >= nodes.len() {
                        return Err(lines.err(format!("node index {i} out of range")));
                    }
                    ids.push(i);
                }
                node_sets.insert(name.to_string(), ids);
            }
            "edgeset" => {
                let mut edges = Vec::with_capacity(k);
                for _ in 0..k {
                    let toks = lines.expect("edge entry")?;
                    let [e, le] = toks[..] else {
                        return Err(lines.err("edge set entry needs `elem localEdge`"));
                    };
                    let (e, le): (usize, usize) = (parse_num(&lines, e)?, parse_num(&lines, le)?);
                    if e >= elems.len() || le > 3 {
                        return Err(lines.err(format!("edge ({e}, {le}) out of range")));
                    }
                    edges.push((e, le));
                }
                edge_sets.insert(name.to_string(), edges);
            }
            other => return Err(lines.err(format!("unknown block `{other}`"))),
        }
    }

    let mut mesh = QuadMesh::new(nodes, elems)?;
    mesh.node_sets = node_sets;
    mesh.edge_sets = edge_sets;
    Ok(mesh)
}
