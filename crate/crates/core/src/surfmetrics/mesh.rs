//! Triangle meshes, iso-surface extraction and OBJ export.
//!
//! Extraction is marching cubes driven by a per-face case table rather than a
//! per-cube one: on each cube face the 16 corner sign patterns decide which
//! edge crossings are joined by a segment, with ambiguous faces (diagonal
//! corners inside) settled by the asymptotic decider on the face's bilinear
//! interpolant. The segments of the six faces close into loops, and each
//! loop is triangulated. Two cells that share a face see the same four
//! values and therefore draw the same segments, so the surface has no cracks.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::volgrid::{BinaryVolume, GridMeta, ScalarVolume};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("OBJ line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Every undirected edge borders exactly two triangles.
    pub fn is_closed(&self) -> bool {
        self.edge_use().values().all(|&n| n == 2)
    }

    /// How many triangles use each undirected edge.
    pub fn edge_use(&self) -> HashMap<(usize, usize), usize> {
        let mut uses = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *uses.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        uses
    }

    pub fn triangle(&self, t: usize) -> [[f64; 3]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| triangle_area(&self.triangle(t))).sum()
    }

    pub fn translated(&self, by: [f64; 3]) -> TriMesh {
        TriMesh {
            vertices: self
                .vertices
                .iter()
                .map(|v| [v[0] + by[0], v[1] + by[1], v[2] + by[2]])
                .collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            writeln!(out, "v {} {} {}", v[0], v[1], v[2]).unwrap();
        }
        for t in &self.triangles {
            writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).unwrap();
        }
        out
    }

    pub fn write_obj(&self, path: impl AsRef<Path>) -> Result<(), MeshError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_obj()).map_err(|source| MeshError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads the `v` and `f` lines of an OBJ file; faces must be triangles.
    pub fn parse_obj(text: &str) -> Result<TriMesh, MeshError> {
        let mut mesh = TriMesh::default();
        for (n, line) in text.lines().enumerate() {
            let err = |reason: String| MeshError::Parse { line: n + 1, reason };
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let xyz: Vec<f64> = parts
                        .map(|p| p.parse::<f64>().map_err(|e| err(e.to_string())))
                        .collect::<Result<_, _>>()?;
                    if xyz.len() != 3 {
                        return Err(err(format!("expected 3 coordinates, got {}", xyz.len())));
                    }
                    mesh.vertices.push([xyz[0], xyz[1], xyz[2]]);
                }
                Some("f") => {
                    let idx: Vec<usize> = parts
                        .map(|p| {
                            // Accept `i/t/n` forms, keep the position index.
                            let head = p.split('/').next().unwrap_or(p);
                            head.parse::<usize>().map_err(|e| err(e.to_string()))
                        })
                        .collect::<Result<_, _>>()?;
                    if idx.len() != 3 || idx.iter().any(|&i| i == 0 || i > mesh.vertices.len()) {
                        return Err(err(format!("bad triangle {idx:?}")));
                    }
                    mesh.triangles.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
                }
                _ => {}
            }
        }
        Ok(mesh)
    }
}

pub(crate) fn triangle_area(t: &[[f64; 3]; 3]) -> f64 {
    let u = sub(t[1], t[0]);
    let v = sub(t[2], t[0]);
    0.5 * norm(cross(u, v))
}

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Cube corner `c` sits at offset `(c & 1, c >> 1 & 1, c >> 2 & 1)`.
const CORNER_OFFSETS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// The twelve cube edges as (lower corner, upper corner, axis).
const EDGES: [(usize, usize, usize); 12] = [
    (0, 1, 0),
    (2, 3, 0),
    (4, 5, 0),
    (6, 7, 0),
    (0, 2, 1),
    (1, 3, 1),
    (4, 6, 1),
    (5, 7, 1),
    (0, 4, 2),
    (1, 5, 2),
    (2, 6, 2),
    (3, 7, 2),
];

/// Face corners, counter-clockwise seen from outside the cube.
const FACES: [[usize; 4]; 6] = [
    [0, 4, 6, 2],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 6, 7, 3],
    [0, 2, 3, 1],
    [4, 5, 7, 6],
];

fn edge_between(a: usize, b: usize) -> usize {
    let (lo, hi) = (a.min(b), a.max(b));
    EDGES
        .iter()
        .position(|&(p, q, _)| p == lo && q == hi)
        .expect("corners share an edge")
}

/// Which cube faces each cube edge lies on.
fn edge_faces(e: usize) -> [usize; 2] {
    let (a, b, _) = EDGES[e];
    let mut out = [usize::MAX; 2];
    let mut n = 0;
    for (f, corners) in FACES.iter().enumerate() {
        if corners.contains(&a) && corners.contains(&b) {
            out[n] = f;
            n += 1;
        }
    }
    out
}

/// Per-face case table: for each inside-pattern of the four face corners,
/// the segments as (face edge slot of the out->in crossing, slot of the
/// in->out crossing), slot `m` being the edge from corner `m` to `m + 1`.
/// Ambiguous patterns list the "separated" resolution first and the
/// "joined" one second.
struct FaceTable {
    cases: [[Vec<(usize, usize)>; 2]; 16],
}

impl FaceTable {
    fn build() -> Self {
        let cases = std::array::from_fn(|pattern: usize| {
            let inside = |m: usize| pattern >> (m % 4) & 1 == 1;
            // Crossings in counter-clockwise order, tagged out->in or in->out.
            let crossings: Vec<(usize, bool)> = (0..4)
                .filter(|&m| inside(m) != inside(m + 1))
                .map(|m| (m, !inside(m)))
                .collect();
            let pair = |forward: bool| {
                let n = crossings.len();
                let mut segs = Vec::new();
                for (p, &(slot, enters)) in crossings.iter().enumerate() {
                    if !enters {
                        continue;
                    }
                    let other = if forward { (p + 1) % n } else { (p + n - 1) % n };
                    segs.push((slot, crossings[other].0));
                }
                segs
            };
            [pair(true), pair(false)]
        });
        FaceTable { cases }
    }
}

/// Extracts the `level` iso-surface of `field`, treating values below the
/// level as inside. Vertices are in world coordinates; triangles wind
/// counter-clockwise seen from outside.
pub fn extract_isosurface(meta: &GridMeta, field: &[f64], level: f64) -> TriMesh {
    assert_eq!(field.len(), meta.len());
    let [nx, ny, nz] = meta.dims();
    let mut mesh = TriMesh::default();
    if nx < 2 || ny < 2 || nz < 2 {
        return mesh;
    }
    let table = FaceTable::build();
    let face_edges: [[usize; 4]; 6] =
        std::array::from_fn(|f| std::array::from_fn(|m| edge_between(FACES[f][m], FACES[f][(m + 1) % 4])));
    let edge_face = std::array::from_fn::<_, 12, _>(edge_faces);
    let mut vertex_ids: HashMap<(usize, usize), usize> = HashMap::new();

    let corner_index: [usize; 8] =
        std::array::from_fn(|c| meta.index(CORNER_OFFSETS[c][0], CORNER_OFFSETS[c][1], CORNER_OFFSETS[c][2]));
    let mut next_of = [usize::MAX; 12];
    let mut loop_buf: Vec<usize> = Vec::with_capacity(12);

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let base = meta.index(i, j, k);
                let vals: [f64; 8] = std::array::from_fn(|c| field[base + corner_index[c]] - level);
                let mut mask = 0u8;
                for (c, v) in vals.iter().enumerate() {
                    if *v < 0.0 {
                        mask |= 1 << c;
                    }
                }
                if mask == 0 || mask == 0xff {
                    continue;
                }
                next_of.fill(usize::MAX);
                for f in 0..6 {
                    let corners = FACES[f];
                    let pattern = (0..4).fold(0usize, |p, m| p | (((mask >> corners[m]) & 1) as usize) << m);
                    let choice = if pattern == 0b0101 || pattern == 0b1010 {
                        // Inside diagonal (a, c), outside diagonal (b, d). The
                        // bilinear saddle lies inside iff a*c > b*d; then the
                        // inside corners connect across the face.
                        let v: [f64; 4] = std::array::from_fn(|m| vals[corners[m]]);
                        let (a, c, b, d) = if pattern == 0b0101 {
                            (v[0], v[2], v[1], v[3])
                        } else {
                            (v[1], v[3], v[0], v[2])
                        };
                        (a * c > b * d) as usize
                    } else {
                        0
                    };
                    for &(from, to) in &table.cases[pattern][choice] {
                        next_of[face_edges[f][from]] = face_edges[f][to];
                    }
                }

                for start in 0..12 {
                    if next_of[start] == usize::MAX {
                        continue;
                    }
                    loop_buf.clear();
                    let mut e = start;
                    while next_of[e] != usize::MAX {
                        loop_buf.push(e);
                        let n = next_of[e];
                        next_of[e] = usize::MAX;
                        e = n;
                    }
                    debug_assert_eq!(e, start, "face segments close into loops");
                    let ids: Vec<usize> = loop_buf
                        .iter()
                        .map(|&edge| {
                            let (c0, c1, axis) = EDGES[edge];
                            let o = CORNER_OFFSETS[c0];
                            let key = (meta.index(i + o[0], j + o[1], k + o[2]), axis);
                            *vertex_ids.entry(key).or_insert_with(|| {
                                let p0 = meta.world(i + o[0], j + o[1], k + o[2]);
                                let (f0, f1) = (vals[c0], vals[c1]);
                                let t = f0 / (f0 - f1);
                                let mut p = p0;
                                p[axis] += t * meta.spacing()[axis];
                                mesh.vertices.push(p);
                                mesh.vertices.len() - 1
                            })
                        })
                        .collect();
                    triangulate_loop(&mut mesh, &loop_buf, &ids, &edge_face);
                }
            }
        }
    }
    mesh
}

/// Fans the loop from a vertex whose diagonals never join two edges of a
/// common cube face (such a diagonal could coincide with a segment or
/// diagonal of the neighbouring cell). Falls back to a center vertex.
fn triangulate_loop(mesh: &mut TriMesh, edges: &[usize], ids: &[usize], edge_face: &[[usize; 2]; 12]) {
    let n = ids.len();
    // Loop order runs clockwise seen from outside; emit reversed winding.
    let mut push = |a: usize, b: usize, c: usize| mesh.triangles.push([a, b, c]);
    if n == 3 {
        push(ids[0], ids[1], ids[2]);
        return;
    }
    let share_face = |a: usize, b: usize| {
        let (fa, fb) = (edge_face[edges[a]], edge_face[edges[b]]);
        fa.iter().any(|f| fb.contains(f))
    };
    for s in 0..n {
        let clean = (2..n - 1).all(|d| !share_face(s, (s + d) % n));
        if clean {
            for d in 1..n - 1 {
                push(ids[s], ids[(s + d) % n], ids[(s + d + 1) % n]);
            }
            return;
        }
    }
    let mut center = [0.0; 3];
    for &v in ids {
        for a in 0..3 {
            center[a] += mesh.vertices[v][a] / n as f64;
        }
    }
    mesh.vertices.push(center);
    let c = mesh.vertices.len() - 1;
    for m in 0..n {
        push(c, ids[m], ids[(m + 1) % n]);
    }
}

/// Surface of a mask at the 0.5 level of its 0/1 values.
pub fn extract_surface_binary(mask: &BinaryVolume) -> TriMesh {
    let field: Vec<f64> = mask.voxels().iter().map(|&v| 0.5 - v as f64).collect();
    extract_isosurface(mask.meta(), &field, 0.0)
}

/// Zero level set of a signed distance field (negative inside).
pub fn extract_surface_sdf(field: &ScalarVolume) -> TriMesh {
    let values: Vec<f64> = field.voxels().iter().map(|&v| v as f64).collect();
    extract_isosurface(field.meta(), &values, 0.0)
}
