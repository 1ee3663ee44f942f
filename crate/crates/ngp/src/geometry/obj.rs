//! ASCII OBJ subset: `v` and `f` records only. Faces with more than three
//! vertices are fan-triangulated on read.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::vec3::vec3;
use super::{GeometryError, Result, TriangleMesh};

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut out = Vec::new();
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z).map_err(|e| GeometryError::Io(e.to_string()))?;
    }
    for t in &mesh.triangles {
        writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)
            .map_err(|e| GeometryError::Io(e.to_string()))?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let text = fs::read_to_string(path)?;
    let mut mesh = TriangleMesh {
        vertices: Vec::new(),
        triangles: Vec::new(),
    };
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let mut coord = || -> Result<f64> {
                    parts
                        .next()
                        .ok_or(GeometryError::ObjParse {
                            line: ln + 1,
                            detail: "vertex needs 3 coordinates".into(),
                        })?
                        .parse()
                        .map_err(|e| GeometryError::ObjParse {
                            line: ln + 1,
                            detail: format!("bad coordinate: {e}"),
                        })
                };
                let (x, y, z) = (coord()?, coord()?, coord()?);
                mesh.vertices.push(vec3(x, y, z));
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|tok| {
                        // accept v, v/vt, v/vt/vn forms; only v is used
                        let v = tok.split('/').next().unwrap_or(tok);
                        v.parse::<usize>().map_err(|e| GeometryError::ObjParse {
                            line: ln + 1,
                            detail: format!("bad face index: {e}"),
                        })
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(GeometryError::ObjParse {
                        line: ln + 1,
                        detail: "face needs at least 3 vertices".into(),
                    });
                }
                for i in 1..idx.len() - 1 {
                    mesh.triangles.push([idx[0] - 1, idx[i] - 1, idx[i + 1] - 1]);
                }
            }
            _ => {}
        }
    }
    Ok(mesh)
}
