//! Symmetric surface distances between two triangle meshes.

use thiserror::Error;

use super::mesh::{dot, sub, triangle_area, TriMesh};

#[derive(Debug, Error, PartialEq)]
pub enum DistanceError {
    #[error("{0} mesh has no triangles")]
    EmptyMesh(&'static str),
    #[error("samples per triangle must be >= 1")]
    NoSamples,
}

/// Average and root-mean-square of the pooled symmetric distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceDistances {
    pub asd: f64,
    pub rmsd: f64,
}

/// A weighted point on a mesh surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub point: [f64; 3],
    pub weight: f64,
}

/// Quadrature samples covering a mesh: every vertex, weighted by a third of
/// the area of its incident triangles, plus `per_triangle` interior points per
/// triangle sharing its area equally. Both halves integrate area exactly.
pub fn surface_samples(mesh: &TriMesh, per_triangle: usize) -> Vec<SurfaceSample> {
    let mut vertex_weight = vec![0.0; mesh.vertices.len()];
    let mut interior = Vec::with_capacity(mesh.triangles.len() * per_triangle);
    let bary = interior_barycentrics(per_triangle);
    for (t, idx) in mesh.triangles.iter().enumerate() {
        let tri = mesh.triangle(t);
        let area = triangle_area(&tri);
        for &v in idx {
            vertex_weight[v] += area / 3.0;
        }
        for b in &bary {
            let point = std::array::from_fn(|a| b[0] * tri[0][a] + b[1] * tri[1][a] + b[2] * tri[2][a]);
            interior.push(SurfaceSample {
                point,
                weight: area / per_triangle as f64,
            });
        }
    }
    let mut samples: Vec<SurfaceSample> = mesh
        .vertices
        .iter()
        .zip(&vertex_weight)
        .map(|(&point, &weight)| SurfaceSample { point, weight })
        .collect();
    samples.extend(interior);
    samples
}

/// Centroid for one sample, the symmetric three-point rule for three, and a
/// folded R2 low-discrepancy sequence otherwise.
fn interior_barycentrics(n: usize) -> Vec<[f64; 3]> {
    match n {
        0 => vec![],
        1 => vec![[1.0 / 3.0; 3]],
        3 => vec![
            [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
            [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
            [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
        ],
        _ => {
            let g = 1.324_717_957_244_746_f64;
            let (a1, a2) = (1.0 / g, 1.0 / (g * g));
            (1..=n)
                .map(|m| {
                    let mut u = (0.5 + a1 * m as f64).fract();
                    let mut v = (0.5 + a2 * m as f64).fract();
                    if u + v > 1.0 {
                        u = 1.0 - u;
                        v = 1.0 - v;
                    }
                    [1.0 - u - v, u, v]
                })
                .collect()
        }
    }
}

/// Exact distance from `p` to triangle `t` (closest-point by Voronoi region).
pub fn point_triangle_distance(p: [f64; 3], t: &[[f64; 3]; 3]) -> f64 {
    let [a, b, c] = *t;
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    let closest = if d1 <= 0.0 && d2 <= 0.0 {
        a
    } else {
        let bp = sub(p, b);
        let d3 = dot(ab, bp);
        let d4 = dot(ac, bp);
        if d3 >= 0.0 && d4 <= d3 {
            b
        } else {
            let vc = d1 * d4 - d3 * d2;
            if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
                let v = d1 / (d1 - d3);
                along(a, ab, v)
            } else {
                let cp = sub(p, c);
                let d5 = dot(ab, cp);
                let d6 = dot(ac, cp);
                if d6 >= 0.0 && d5 <= d6 {
                    c
                } else {
                    let vb = d5 * d2 - d1 * d6;
                    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
                        let w = d2 / (d2 - d6);
                        along(a, ac, w)
                    } else {
                        let va = d3 * d6 - d5 * d4;
                        if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
                            let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
                            along(b, sub(c, b), w)
                        } else {
                            let denom = 1.0 / (va + vb + vc);
                            let v = vb * denom;
                            let w = vc * denom;
                            std::array::from_fn(|i| a[i] + ab[i] * v + ac[i] * w)
                        }
                    }
                }
            }
        }
    };
    let d = sub(p, closest);
    dot(d, d).sqrt()
}

fn along(o: [f64; 3], d: [f64; 3], t: f64) -> [f64; 3] {
    [o[0] + d[0] * t, o[1] + d[1] * t, o[2] + d[2] * t]
}

/// Uniform grid of triangle buckets for nearest-triangle queries.
pub struct TriangleIndex<'a> {
    mesh: &'a TriMesh,
    lo: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl<'a> TriangleIndex<'a> {
    pub fn new(mesh: &'a TriMesh) -> Self {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        let mut edge_sum = 0.0;
        for t in 0..mesh.triangles.len() {
            let tri = mesh.triangle(t);
            for v in &tri {
                for a in 0..3 {
                    lo[a] = lo[a].min(v[a]);
                    hi[a] = hi[a].max(v[a]);
                }
            }
            edge_sum += super::mesh::norm(sub(tri[1], tri[0]));
        }
        let n = mesh.triangles.len().max(1);
        let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
        let cell = (2.0 * edge_sum / n as f64).max(extent / 128.0).max(1e-9);
        let dims: [usize; 3] = std::array::from_fn(|a| (((hi[a] - lo[a]) / cell).floor() as usize + 1).min(256));
        let mut index = TriangleIndex {
            mesh,
            lo,
            cell,
            dims,
            buckets: vec![Vec::new(); dims[0] * dims[1] * dims[2]],
        };
        for t in 0..mesh.triangles.len() {
            let tri = mesh.triangle(t);
            let mut cmin = [usize::MAX; 3];
            let mut cmax = [0usize; 3];
            for v in &tri {
                let c = index.cell_of(*v);
                for a in 0..3 {
                    cmin[a] = cmin[a].min(c[a]);
                    cmax[a] = cmax[a].max(c[a]);
                }
            }
            for z in cmin[2]..=cmax[2] {
                for y in cmin[1]..=cmax[1] {
                    for x in cmin[0]..=cmax[0] {
                        let b = index.bucket(x, y, z);
                        index.buckets[b].push(t as u32);
                    }
                }
            }
        }
        index
    }

    fn cell_of(&self, p: [f64; 3]) -> [usize; 3] {
        std::array::from_fn(|a| {
            let c = ((p[a] - self.lo[a]) / self.cell).floor();
            c.clamp(0.0, (self.dims[a] - 1) as f64) as usize
        })
    }

    fn bucket(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// Exact distance from `p` to the nearest triangle.
    pub fn distance(&self, p: [f64; 3]) -> f64 {
        let c = self.cell_of(p);
        let mut best = f64::INFINITY;
        let max_ring = self.dims.iter().copied().max().unwrap();
        for ring in 0..=max_ring {
            let lo: [isize; 3] = std::array::from_fn(|a| c[a] as isize - ring as isize);
            let hi: [isize; 3] = std::array::from_fn(|a| c[a] as isize + ring as isize);
            for z in lo[2].max(0)..=hi[2].min(self.dims[2] as isize - 1) {
                for y in lo[1].max(0)..=hi[1].min(self.dims[1] as isize - 1) {
                    for x in lo[0].max(0)..=hi[0].min(self.dims[0] as isize - 1) {
                        let on_shell = x == lo[0] || x == hi[0] || y == lo[1] || y == hi[1] || z == lo[2] || z == hi[2];
                        if !on_shell {
                            continue;
                        }
                        for &t in &self.buckets[self.bucket(x as usize, y as usize, z as usize)] {
                            let d = point_triangle_distance(p, &self.mesh.triangle(t as usize));
                            best = best.min(d);
                        }
                    }
                }
            }
            // Everything not yet visited lies outside the box of cells
            // [c - ring, c + ring]; bound its distance from below.
            let mut gap = f64::INFINITY;
            let mut covers_all = true;
            for a in 0..3 {
                let box_lo = self.lo[a] + lo[a] as f64 * self.cell;
                let box_hi = self.lo[a] + (hi[a] + 1) as f64 * self.cell;
                if lo[a] > 0 {
                    covers_all = false;
                    gap = gap.min(p[a] - box_lo);
                }
                if hi[a] < self.dims[a] as isize - 1 {
                    covers_all = false;
                    gap = gap.min(box_hi - p[a]);
                }
            }
            if covers_all || best <= gap.max(0.0) {
                break;
            }
        }
        best
    }
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// ASD and RMSD over the pooled samples of both meshes, each sample taking
/// its exact distance to the other mesh.
pub fn surface_distances(
    a: &TriMesh,
    b: &TriMesh,
    samples_per_triangle: usize,
) -> Result<SurfaceDistances, DistanceError> {
    if samples_per_triangle == 0 {
        return Err(DistanceError::NoSamples);
    }
    if a.is_empty() {
        return Err(DistanceError::EmptyMesh("first"));
    }
    if b.is_empty() {
        return Err(DistanceError::EmptyMesh("second"));
    }
    let pooled = directed_distances(a, b, samples_per_triangle)
        .into_iter()
        .chain(directed_distances(b, a, samples_per_triangle))
        .collect::<Vec<_>>();
    Ok(pool(&pooled))
}

/// `(weight, distance)` for every sample of `from`, measured to `to`.
pub fn directed_distances(from: &TriMesh, to: &TriMesh, per_triangle: usize) -> Vec<(f64, f64)> {
    let index = TriangleIndex::new(to);
    surface_samples(from, per_triangle)
        .into_iter()
        .map(|s| (s.weight, index.distance(s.point)))
        .collect()
}

/// Weighted mean and root mean square; unit weights if all weights vanish.
pub fn pool(samples: &[(f64, f64)]) -> SurfaceDistances {
    let mut w = CompensatedSum::default();
    let mut wd = CompensatedSum::default();
    let mut wd2 = CompensatedSum::default();
    for &(weight, d) in samples {
        w.add(weight);
        wd.add(weight * d);
        wd2.add(weight * d * d);
    }
    if w.value() <= 0.0 {
        let unit: Vec<(f64, f64)> = samples.iter().map(|&(_, d)| (1.0, d)).collect();
        return pool(&unit);
    }
    let asd = wd.value() / w.value();
    let rmsd = (wd2.value() / w.value()).sqrt();
    // Rounding can put rmsd an ulp under asd for constant distances.
    SurfaceDistances {
        asd,
        rmsd: rmsd.max(asd),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfmetrics::mesh::norm;

    fn square(z: f64, size: f64) -> TriMesh {
        TriMesh {
            vertices: vec![[0.0, 0.0, z], [size, 0.0, z], [size, size, z], [0.0, size, z]],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
        }
    }

    /// Independent point-triangle distance: projection when the foot lies
    /// inside, otherwise the nearest of the three edge segments.
    fn naive_distance(p: [f64; 3], t: &[[f64; 3]; 3]) -> f64 {
        let n = super::super::mesh::cross(sub(t[1], t[0]), sub(t[2], t[0]));
        let nn = dot(n, n);
        let h = dot(sub(p, t[0]), n) / nn;
        let foot: [f64; 3] = std::array::from_fn(|a| p[a] - h * n[a]);
        let inside = (0..3).all(|e| {
            let (u, v) = (t[e], t[(e + 1) % 3]);
            dot(super::super::mesh::cross(sub(v, u), sub(foot, u)), n) >= 0.0
        });
        if inside {
            return norm(sub(p, foot));
        }
        (0..3)
            .map(|e| {
                let (u, v) = (t[e], t[(e + 1) % 3]);
                let d = sub(v, u);
                let s = (dot(sub(p, u), d) / dot(d, d)).clamp(0.0, 1.0);
                norm(sub(p, along(u, d, s)))
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn closest_point_matches_naive() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5000 {
            let t: [[f64; 3]; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(-2.0..2.0)));
            let p: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-4.0..4.0));
            let (a, b) = (point_triangle_distance(p, &t), naive_distance(p, &t));
            assert!((a - b).abs() < 1e-9 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn self_distance_is_zero() {
        let m = square(0.0, 3.0);
        let d = surface_distances(&m, &m, 3).unwrap();
        assert_eq!(d, SurfaceDistances { asd: 0.0, rmsd: 0.0 });
    }

    #[test]
    fn parallel_squares() {
        for h in [0.25, 1.0, 3.5] {
            let d = surface_distances(&square(0.0, 10.0), &square(h, 10.0), 3).unwrap();
            assert!((d.asd - h).abs() < 1e-12 && (d.rmsd - h).abs() < 1e-12, "{d:?}");
        }
    }

    #[test]
    fn empty_sides_are_named() {
        let m = square(0.0, 1.0);
        let e = TriMesh::default();
        assert_eq!(surface_distances(&e, &m, 1), Err(DistanceError::EmptyMesh("first")));
        assert_eq!(surface_distances(&m, &e, 1), Err(DistanceError::EmptyMesh("second")));
        assert_eq!(surface_distances(&m, &m, 0), Err(DistanceError::NoSamples));
    }

    #[test]
    fn sample_weights_integrate_area() {
        let m = square(0.0, 2.0);
        for n in [1, 2, 3, 7] {
            let s = surface_samples(&m, n);
            assert_eq!(s.len(), 4 + 2 * n);
            let total: f64 = s.iter().map(|x| x.weight).sum();
            assert!((total - 8.0).abs() < 1e-12);
            for x in &s {
                assert!(x.point[0] >= 0.0 && x.point[0] <= 2.0 && x.point[1] >= 0.0 && x.point[1] <= 2.0);
            }
        }
    }

    #[test]
    fn index_matches_linear_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mesh = TriMesh {
            vertices: (0..300).map(|_| std::array::from_fn(|_| rng.gen_range(0.0..20.0))).collect(),
            triangles: (0..100).map(|i| [3 * i, 3 * i + 1, 3 * i + 2]).collect(),
        };
        let index = TriangleIndex::new(&mesh);
        for _ in 0..500 {
            let p: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-15.0..35.0));
            let scan = (0..100)
                .map(|t| point_triangle_distance(p, &mesh.triangle(t)))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(index.distance(p), scan);
        }
    }
}
