//! Conforming triangulations of the three study domains and their uniform
//! red refinement.
//!
//! Triangles are stored counter-clockwise. Edges are stored with their
//! vertex pair sorted (low index first); that sorted order is the global
//! orientation used by every edge-based degree of freedom.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("edge ({0}, {1}) is shared by more than two triangles")]
    NonManifold(usize, usize),
    #[error("triangle {0} has repeated vertex indices")]
    RepeatedVertex(usize),
    #[error("triangle {0} is not counter-clockwise (signed area {1:e})")]
    Orientation(usize, f64),
    #[error("triangle {tri} references vertex {vertex}, mesh has {count}")]
    VertexOutOfRange { tri: usize, vertex: usize, count: usize },
    #[error("non-finite vertex coordinate at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn midpoint(self, other: Point2) -> Point2 {
        Point2::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn dist(self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub vertices: [usize; 3],
    /// Label of the coefficient-smoothness region the element lies in.
    pub region: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    /// Sorted vertex pair `[low, high]`.
    pub vertices: [usize; 2],
    pub triangles: [usize; 2],
    /// Number of valid entries in `triangles` (1 on the boundary, 2 inside).
    pub n_adjacent: usize,
    pub is_boundary: bool,
}

impl Edge {
    pub fn adjacent(&self) -> &[usize] {
        &self.triangles[..self.n_adjacent]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainKind {
    /// (0,1)^2
    UnitSquare,
    /// (-1,1)^2, with both coordinate axes resolved by mesh edges.
    RefSquare,
    /// Pentagon with vertices (0,0), (2,0), (1,1), (1,2), (0,2).
    LShape,
}

impl DomainKind {
    pub fn area(self) -> f64 {
        match self {
            DomainKind::UnitSquare => 1.0,
            DomainKind::RefSquare => 4.0,
            DomainKind::LShape => 2.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DomainKind::UnitSquare => "unit-square",
            DomainKind::RefSquare => "ref-square",
            DomainKind::LShape => "l-shape",
        }
    }
}

pub const LSHAPE_VERTICES: [Point2; 5] = [
    Point2::new(0.0, 0.0),
    Point2::new(2.0, 0.0),
    Point2::new(1.0, 1.0),
    Point2::new(1.0, 2.0),
    Point2::new(0.0, 2.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point2>,
    pub triangles: Vec<Triangle>,
    pub edges: Vec<Edge>,
    /// `tri_edges[t][i]` is the edge opposite local vertex `i` of triangle `t`.
    pub tri_edges: Vec<[usize; 3]>,
    pub level: usize,
    /// Longest edge of each triangle.
    pub h_tri: Vec<f64>,
    pub h_max: f64,
}

impl Mesh {
    /// Builds a mesh from raw vertex and triangle lists, filling the edge
    /// topology and element sizes.
    pub fn from_parts(vertices: Vec<Point2>, triangles: Vec<Triangle>, level: usize) -> Result<Mesh, MeshError> {
        for (i, p) in vertices.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(MeshError::NonFinite(i));
            }
        }
        for (t, tri) in triangles.iter().enumerate() {
            let [a, b, c] = tri.vertices;
            for &v in &tri.vertices {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfRange {
                        tri: t,
                        vertex: v,
                        count: vertices.len(),
                    });
                }
            }
            if a == b || b == c || a == c {
                return Err(MeshError::RepeatedVertex(t));
            }
            let area = signed_area(vertices[a], vertices[b], vertices[c]);
            if area <= 0.0 {
                return Err(MeshError::Orientation(t, area));
            }
        }

        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local = [0usize; 3];
            for (i, slot) in local.iter_mut().enumerate() {
                let p = tri.vertices[(i + 1) % 3];
                let q = tri.vertices[(i + 2) % 3];
                let key = (p.min(q), p.max(q));
                let id = *index.entry(key).or_insert_with(|| {
                    edges.push(Edge {
                        vertices: [key.0, key.1],
                        triangles: [usize::MAX; 2],
                        n_adjacent: 0,
                        is_boundary: false,
                    });
                    edges.len() - 1
                });
                let e = &mut edges[id];
                if e.n_adjacent == 2 {
                    return Err(MeshError::NonManifold(key.0, key.1));
                }
                e.triangles[e.n_adjacent] = t;
                e.n_adjacent += 1;
                *slot = id;
            }
            tri_edges.push(local);
        }
        for e in &mut edges {
            e.is_boundary = e.n_adjacent == 1;
        }

        let h_tri: Vec<f64> = triangles
            .iter()
            .map(|tri| {
                let [a, b, c] = tri.vertices.map(|v| vertices[v]);
                a.dist(b).max(b.dist(c)).max(c.dist(a))
            })
            .collect();
        let h_max = h_tri.iter().cloned().fold(0.0, f64::max);

        Ok(Mesh {
            vertices,
            triangles,
            edges,
            tri_edges,
            level,
            h_tri,
            h_max,
        })
    }

    /// Level-0 triangulation of `domain`.
    pub fn initial(domain: DomainKind) -> Mesh {
        let (vertices, triangles) = match domain {
            DomainKind::UnitSquare => {
                let v = vec![
                    Point2::new(0.0, 0.0),
                    Point2::new(1.0, 0.0),
                    Point2::new(1.0, 1.0),
                    Point2::new(0.0, 1.0),
                ];
                let t = vec![
                    Triangle {
                        vertices: [0, 1, 2],
                        region: 0,
                    },
                    Triangle {
                        vertices: [0, 2, 3],
                        region: 0,
                    },
                ];
                (v, t)
            }
            DomainKind::RefSquare => {
                // 3x3 grid, vertex (i, j) at (i-1, j-1); origin is vertex 4.
                let mut v = Vec::with_capacity(9);
                for j in 0..3 {
                    for i in 0..3 {
                        v.push(Point2::new(i as f64 - 1.0, j as f64 - 1.0));
                    }
                }
                let id = |i: usize, j: usize| 3 * j + i;
                let o = id(1, 1);
                // Each quadrant square is split along its diagonal through
                // the origin. Regions: 0 = (+,+), 1 = (-,+), 2 = (-,-), 3 = (+,-).
                let t = vec![
                    Triangle {
                        vertices: [o, id(2, 1), id(2, 2)],
                        region: 0,
                    },
                    Triangle {
                        vertices: [o, id(2, 2), id(1, 2)],
                        region: 0,
                    },
                    Triangle {
                        vertices: [o, id(1, 2), id(0, 2)],
                        region: 1,
                    },
                    Triangle {
                        vertices: [o, id(0, 2), id(0, 1)],
                        region: 1,
                    },
                    Triangle {
                        vertices: [o, id(0, 1), id(0, 0)],
                        region: 2,
                    },
                    Triangle {
                        vertices: [o, id(0, 0), id(1, 0)],
                        region: 2,
                    },
                    Triangle {
                        vertices: [o, id(1, 0), id(2, 0)],
                        region: 3,
                    },
                    Triangle {
                        vertices: [o, id(2, 0), id(2, 1)],
                        region: 3,
                    },
                ];
                (v, t)
            }
            DomainKind::LShape => {
                let v = LSHAPE_VERTICES.to_vec();
                let t = vec![
                    Triangle {
                        vertices: [0, 1, 2],
                        region: 0,
                    },
                    Triangle {
                        vertices: [0, 2, 3],
                        region: 0,
                    },
                    Triangle {
                        vertices: [0, 3, 4],
                        region: 0,
                    },
                ];
                (v, t)
            }
        };
        Mesh::from_parts(vertices, triangles, 0).expect("built-in coarse mesh is valid")
    }

    /// Uniform red refinement: each triangle is split into four congruent
    /// children through its edge midpoints. The midpoint of edge `e` gets
    /// vertex index `n_vertices + e`.
    pub fn refine(&self) -> Mesh {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend(
            self.edges
                .iter()
                .map(|e| self.vertices[e.vertices[0]].midpoint(self.vertices[e.vertices[1]])),
        );
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = tri.vertices;
            let [ea, eb, ec] = self.tri_edges[t];
            // midpoint opposite a lies on bc, etc.
            let (mbc, mca, mab) = (nv + ea, nv + eb, nv + ec);
            let region = tri.region;
            triangles.push(Triangle {
                vertices: [a, mab, mca],
                region,
            });
            triangles.push(Triangle {
                vertices: [mab, b, mbc],
                region,
            });
            triangles.push(Triangle {
                vertices: [mca, mbc, c],
                region,
            });
            triangles.push(Triangle {
                vertices: [mab, mbc, mca],
                region,
            });
        }
        Mesh::from_parts(vertices, triangles, self.level + 1)
            .expect("red refinement of a conforming mesh is conforming")
    }

    pub fn n_boundary_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.is_boundary).count()
    }

    pub fn tri_points(&self, t: usize) -> [Point2; 3] {
        self.triangles[t].vertices.map(|v| self.vertices[v])
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.tri_points(t);
        signed_area(a, b, c)
    }

    pub fn centroid(&self, t: usize) -> Point2 {
        let [a, b, c] = self.tri_points(t);
        Point2::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0)
    }

    /// Outward unit normal of local edge `i` (opposite vertex `i`) of `t`.
    pub fn outward_normal(&self, t: usize, i: usize) -> Point2 {
        let pts = self.tri_points(t);
        let p = pts[(i + 1) % 3];
        let q = pts[(i + 2) % 3];
        let (dx, dy) = (q.x - p.x, q.y - p.y);
        let len = dx.hypot(dy);
        // CCW traversal puts the interior on the left, so the right normal
        // points outward.
        Point2::new(dy / len, -dx / len)
    }

    /// Whether local edge `i` of `t`, traversed from local vertex `i+1` to
    /// `i+2`, runs against the edge's global orientation.
    pub fn edge_flipped(&self, t: usize, i: usize) -> bool {
        let v = self.triangles[t].vertices[(i + 1) % 3];
        v != self.edges[self.tri_edges[t][i]].vertices[0]
    }

    pub fn edge_points(&self, e: usize) -> [Point2; 2] {
        self.edges[e].vertices.map(|v| self.vertices[v])
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edge_points(e);
        a.dist(b)
    }

    /// Plain-text dump: `V E F`, then vertices, triangles and edges.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "{} {} {}",
            self.vertices.len(),
            self.edges.len(),
            self.triangles.len()
        )?;
        for p in &self.vertices {
            writeln!(w, "{} {}", p.x, p.y)?;
        }
        for t in &self.triangles {
            let [i, j, k] = t.vertices;
            writeln!(w, "{} {} {} {}", i, j, k, t.region)?;
        }
        for e in &self.edges {
            writeln!(w, "{} {} {}", e.vertices[0], e.vertices[1], e.is_boundary as u8)?;
        }
        Ok(())
    }
}

pub fn signed_area(a: Point2, b: Point2, c: Point2) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

/// Meshes `level0 ..= level0 + levels - 1` of `domain`.
pub fn hierarchy(domain: DomainKind, levels: usize) -> Vec<Mesh> {
    let mut out = Vec::with_capacity(levels);
    let mut m = Mesh::initial(domain);
    for _ in 0..levels {
        let next = m.refine();
        out.push(m);
        m = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euler(m: &Mesh) -> i64 {
        m.vertices.len() as i64 - m.edges.len() as i64 + m.triangles.len() as i64
    }

    #[test]
    fn unit_square_counts() {
        let m = Mesh::initial(DomainKind::UnitSquare);
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.triangles.len(), 2);
        assert_eq!(m.edges.len(), 5);
        assert_eq!(m.n_boundary_edges(), 4);
        assert_eq!(m.edges.iter().filter(|e| !e.is_boundary).count(), 1);
        let r = m.refine();
        assert_eq!(r.triangles.len(), 8);
        assert_eq!(r.vertices.len(), 9);
    }

    #[test]
    fn ref_square_resolves_axes() {
        let m = Mesh::initial(DomainKind::RefSquare);
        assert_eq!(m.vertices.len(), 9);
        assert_eq!(m.triangles.len(), 8);
        assert!(m.vertices.iter().any(|p| p.x == 0.0 && p.y == 0.0));
        // every triangle lies in a closed quadrant
        for t in 0..m.triangles.len() {
            let pts = m.tri_points(t);
            assert!(pts.iter().all(|p| p.x >= 0.0) || pts.iter().all(|p| p.x <= 0.0));
            assert!(pts.iter().all(|p| p.y >= 0.0) || pts.iter().all(|p| p.y <= 0.0));
        }
    }

    #[test]
    fn lshape_fan() {
        let m = Mesh::initial(DomainKind::LShape);
        assert_eq!(m.vertices.len(), 5);
        assert_eq!(m.triangles.len(), 3);
        let total: f64 = (0..3).map(|t| m.area(t)).sum();
        assert!((total - 2.5).abs() < 1e-14);
        assert_eq!(euler(&m), 1);
        assert_eq!(euler(&m.refine()), 1);
    }

    #[test]
    fn boundary_edge_count_doubles() {
        let mut m = Mesh::initial(DomainKind::UnitSquare);
        for level in 0..5 {
            let brute = m
                .edges
                .iter()
                .filter(|e| {
                    let [a, b] = e.vertices.map(|v| m.vertices[v]);
                    (a.x == 0.0 && b.x == 0.0)
                        || (a.x == 1.0 && b.x == 1.0)
                        || (a.y == 0.0 && b.y == 0.0)
                        || (a.y == 1.0 && b.y == 1.0)
                })
                .count();
            assert_eq!(brute, 4 << level);
            assert_eq!(m.n_boundary_edges(), 4 << level);
            m = m.refine();
        }
    }

    #[test]
    fn normal_of_bottom_edge_points_down() {
        let m = Mesh::initial(DomainKind::UnitSquare);
        // triangle 0 = (0,0),(1,0),(1,1); edge (0,0)-(1,0) is opposite vertex 2
        let n = m.outward_normal(0, 2);
        assert!((n.x - 0.0).abs() < 1e-15 && (n.y + 1.0).abs() < 1e-15);
    }

    #[test]
    fn normals_point_away_from_centroid() {
        for d in [DomainKind::UnitSquare, DomainKind::RefSquare, DomainKind::LShape] {
            let m = Mesh::initial(d).refine().refine();
            for t in 0..m.triangles.len() {
                let c = m.centroid(t);
                let pts = m.tri_points(t);
                for i in 0..3 {
                    let mid = pts[(i + 1) % 3].midpoint(pts[(i + 2) % 3]);
                    let n = m.outward_normal(t, i);
                    assert!(n.x * (c.x - mid.x) + n.y * (c.y - mid.y) < 0.0);
                }
            }
        }
    }

    #[test]
    fn areas_and_h_halving() {
        for d in [DomainKind::UnitSquare, DomainKind::RefSquare, DomainKind::LShape] {
            let mut m = Mesh::initial(d);
            for _ in 0..4 {
                let total: f64 = (0..m.triangles.len()).map(|t| m.area(t)).sum();
                assert!((total - d.area()).abs() < 1e-12, "{:?}", d);
                assert_eq!(euler(&m), 1);
                let r = m.refine();
                assert_eq!(r.triangles.len(), 4 * m.triangles.len());
                assert!((r.h_max - 0.5 * m.h_max).abs() <= 1e-15 * m.h_max);
                m = r;
            }
        }
    }

    #[test]
    fn refinement_is_deterministic_and_inherits_regions() {
        let m = Mesh::initial(DomainKind::RefSquare);
        let a = m.refine();
        let b = m.refine();
        assert_eq!(a, b);
        for (t, tri) in a.triangles.iter().enumerate() {
            assert_eq!(tri.region, m.triangles[t / 4].region);
        }
    }

    #[test]
    fn rejects_non_manifold() {
        let v = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(0.0, -1.0),
            Point2::new(1.0, 1.0),
        ];
        let t = vec![
            Triangle {
                vertices: [0, 1, 2],
                region: 0,
            },
            Triangle {
                vertices: [0, 3, 1],
                region: 0,
            },
            Triangle {
                vertices: [0, 1, 4],
                region: 0,
            },
        ];
        assert!(matches!(Mesh::from_parts(v, t, 0), Err(MeshError::NonManifold(0, 1))));
    }

    #[test]
    fn dump_format() {
        let m = Mesh::initial(DomainKind::UnitSquare);
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "4 5 2");
        assert_eq!(lines[1], "0 0");
        assert_eq!(lines[5], "0 1 2 0");
        assert_eq!(lines.len(), 1 + 4 + 2 + 5);
        assert!(s.ends_with('\n'));
    }
}
