use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::gmm::{fmt_real, line_offsets, Point3};

/// Default longest edge after densification, meters.
pub const DEFAULT_MAX_EDGE: f64 = 0.01;

/// Upper limit on the densified vertex count, to catch unit mistakes.
pub const MAX_DENSE_VERTICES: usize = 5_000_000;

/// Distance under which a point counts as lying on the surface.
pub const SURFACE_EPS: f64 = 1e-12;

/// Triangle-mesh obstacles.
///
/// Besides the input vertices the mesh keeps a densified vertex set: the
/// input vertices plus the midpoints introduced by repeatedly splitting
/// every triangle into four until no edge exceeds `max_edge`.
#[derive(Debug, Clone)]
pub struct EnvironmentMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    dense: Vec<Point3>,
    watertight: bool,
    bbox: Option<(Point3, Point3)>,
}

impl EnvironmentMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        Self::with_max_edge(vertices, triangles, DEFAULT_MAX_EDGE)
    }

    pub fn with_max_edge(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>, max_edge: f64) -> Result<Self> {
        if !(max_edge > 0.0) {
            return Err(Error::invalid("max edge length must be positive"));
        }
        if let Some(v) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("vertex {v} is not finite")));
        }
        for (i, t) in triangles.iter().enumerate() {
            if t.iter().any(|&k| k >= vertices.len()) {
                return Err(Error::invalid(format!("triangle {i} references a missing vertex")));
            }
        }
        let watertight = !triangles.is_empty() && is_closed(&triangles);
        let dense = densify(&vertices, &triangles, max_edge)?;
        let bbox = bounding_box(&vertices);
        Ok(Self { vertices, triangles, dense, watertight, bbox })
    }

    /// No obstacles at all.
    pub fn empty() -> Self {
        Self { vertices: Vec::new(), triangles: Vec::new(), dense: Vec::new(), watertight: true, bbox: None }
    }

    /// Concatenates meshes. Watertight iff every part is.
    pub fn merge(parts: &[EnvironmentMesh], max_edge: f64) -> Result<Self> {
        let mut vertices = Vec::new();
        let mut triangles = Vec::new();
        for p in parts {
            let base = vertices.len();
            vertices.extend_from_slice(&p.vertices);
            triangles.extend(p.triangles.iter().map(|t| t.map(|k| k + base)));
        }
        if triangles.is_empty() {
            return Ok(Self::empty());
        }
        Self::with_max_edge(vertices, triangles, max_edge)
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn dense_vertices(&self) -> &[Point3] {
        &self.dense
    }

    /// Every edge is shared by exactly two triangles (an empty mesh counts
    /// as closed: nothing is inside it).
    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn bounding_box(&self) -> Option<(Point3, Point3)> {
        self.bbox
    }

    fn triangle(&self, t: &[usize; 3]) -> [Point3; 3] {
        t.map(|k| self.vertices[k])
    }

    /// Smallest distance from `p` to any triangle.
    pub fn distance(&self, p: &Point3) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.triangle(t);
                (closest_point_on_triangle(p, &a, &b, &c) - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Ray-parity containment along +x. Rays that graze an edge, a vertex
    /// or lie in a triangle's plane are retried along a fixed sequence of
    /// tilted directions.
    pub fn contains(&self, p: &Point3) -> bool {
        if let Some((lo, hi)) = self.bbox {
            if (0..3).any(|i| p[i] < lo[i] || p[i] > hi[i]) {
                return false;
            }
        } else {
            return false;
        }
        for dir in RAY_DIRECTIONS.iter() {
            let dir = Point3::new(dir[0], dir[1], dir[2]).normalize();
            let mut crossings = 0usize;
            let mut degenerate = false;
            for t in &self.triangles {
                let [a, b, c] = self.triangle(t);
                match ray_triangle(p, &dir, &a, &b, &c) {
                    RayHit::Miss => {}
                    RayHit::Hit => crossings += 1,
                    RayHit::Degenerate => {
                        degenerate = true;
                        break;
                    }
                }
            }
            if !degenerate {
                return crossings % 2 == 1;
            }
        }
        // Every direction grazed something; the point sits on the surface
        // or on an edge, which the caller's distance test already catches.
        false
    }

    /// OBJ text with `v` and `f` records only.
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            let _ = writeln!(out, "v {} {} {}", fmt_real(v.x), fmt_real(v.y), fmt_real(v.z));
        }
        for t in &self.triangles {
            let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        out
    }
}

const RAY_DIRECTIONS: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [1.0, 1.234_567e-3, 2.345_678e-3],
    [1.0, -3.141_593e-3, 1.414_214e-3],
    [1.0, 2.718_282e-2, -1.732_051e-2],
    [1.0, -0.123_456_7, 0.234_567_8],
    [0.577_215_6, 0.915_965_6, -0.301_029_9],
];

/// Parses `v x y z` and `f i j k` records (1-based indices; `i/t/n` forms
/// keep only the vertex index). Other records are ignored.
pub fn parse_obj(text: &str) -> Result<(Vec<Point3>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (off, line) in line_offsets(text) {
        let mut it = line.split_whitespace();
        let err = |m: String| Error::Parse { offset: off, message: m };
        match it.next() {
            Some("v") => {
                let c: Vec<f64> = it
                    .take(3)
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(format!("bad vertex coordinate: {e}")))?;
                if c.len() != 3 {
                    return Err(err("vertex needs three coordinates".into()));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = it
                    .map(|f| f.split('/').next().unwrap_or("").parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(format!("bad face index: {e}")))?;
                if idx.len() != 3 {
                    return Err(err(format!("only triangles are supported, face has {} vertices", idx.len())));
                }
                if idx.contains(&0) {
                    return Err(err("face indices are 1-based".into()));
                }
                triangles.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            _ => {}
        }
    }
    Ok((vertices, triangles))
}

/// Axis-aligned box with outward-facing triangles.
pub fn box_mesh(min: Point3, max: Point3) -> (Vec<Point3>, Vec<[usize; 3]>) {
    let v = (0..8)
        .map(|k| {
            Point3::new(
                if k & 1 == 0 { min.x } else { max.x },
                if k & 2 == 0 { min.y } else { max.y },
                if k & 4 == 0 { min.z } else { max.z },
            )
        })
        .collect();
    let t = vec![
        [0, 2, 1], [1, 2, 3], // z = min
        [4, 5, 6], [5, 7, 6], // z = max
        [0, 1, 4], [1, 5, 4], // y = min
        [2, 6, 3], [3, 6, 7], // y = max
        [0, 4, 2], [2, 4, 6], // x = min
        [1, 3, 5], [3, 7, 5], // x = max
    ];
    (v, t)
}

/// A flat open square grid in the plane `x = offset`, centered on the x
/// axis, `cells × cells` squares of side `2 half_width / cells`.
pub fn plane_mesh(offset: f64, half_width: f64, cells: usize) -> (Vec<Point3>, Vec<[usize; 3]>) {
    let n = cells.max(1);
    let step = 2.0 * half_width / n as f64;
    let mut v = Vec::with_capacity((n + 1) * (n + 1));
    for i in 0..=n {
        for j in 0..=n {
            v.push(Point3::new(offset, -half_width + i as f64 * step, -half_width + j as f64 * step));
        }
    }
    let id = |i: usize, j: usize| i * (n + 1) + j;
    let mut t = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            t.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            t.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    (v, t)
}

pub fn transform_mesh(vertices: &mut [Point3], rows: &[f64; 12]) {
    for v in vertices {
        let p = *v;
        *v = Point3::new(
            rows[0] * p.x + rows[1] * p.y + rows[2] * p.z + rows[3],
            rows[4] * p.x + rows[5] * p.y + rows[6] * p.z + rows[7],
            rows[8] * p.x + rows[9] * p.y + rows[10] * p.z + rows[11],
        );
    }
}

fn bounding_box(vertices: &[Point3]) -> Option<(Point3, Point3)> {
    let first = *vertices.first()?;
    Some(vertices.iter().fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))))
}

fn is_closed(triangles: &[[usize; 3]]) -> bool {
    let mut edges: HashMap<(usize, usize), u32> = HashMap::new();
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    edges.values().all(|&c| c == 2)
}

fn longest_edge(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    (a - b).norm().max((b - c).norm()).max((c - a).norm())
}

fn densify(vertices: &[Point3], triangles: &[[usize; 3]], max_edge: f64) -> Result<Vec<Point3>> {
    let mut estimate = vertices.len() as f64;
    for t in triangles {
        let len = longest_edge(&vertices[t[0]], &vertices[t[1]], &vertices[t[2]]);
        if len > max_edge {
            let depth = (len / max_edge).log2().ceil();
            estimate += 4f64.powf(depth);
        }
    }
    if estimate > MAX_DENSE_VERTICES as f64 {
        return Err(Error::invalid(format!(
            "densifying to {max_edge} m edges would create about {estimate:.0} vertices; check the mesh units"
        )));
    }

    let mut out = vertices.to_vec();
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut stack: Vec<[usize; 3]> = triangles.to_vec();
    while let Some([a, b, c]) = stack.pop() {
        if longest_edge(&out[a], &out[b], &out[c]) <= max_edge {
            continue;
        }
        let mut mid = |i: usize, j: usize, out: &mut Vec<Point3>| {
            *midpoints.entry((i.min(j), i.max(j))).or_insert_with(|| {
                out.push(0.5 * (out[i] + out[j]));
                out.len() - 1
            })
        };
        let ab = mid(a, b, &mut out);
        let bc = mid(b, c, &mut out);
        let ca = mid(c, a, &mut out);
        stack.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
    }
    Ok(out)
}

enum RayHit {
    Miss,
    Hit,
    Degenerate,
}

/// Möller–Trumbore with explicit flags for grazing configurations.
fn ray_triangle(origin: &Point3, dir: &Point3, a: &Point3, b: &Point3, c: &Point3) -> RayHit {
    const EPS: f64 = 1e-12;
    let e1 = b - a;
    let e2 = c - a;
    let scale = e1.norm().max(e2.norm()).max(1e-300);
    let pvec = dir.cross(&e2);
    let det = e1.dot(&pvec);
    let s = origin - a;
    if det.abs() <= EPS * scale * scale {
        // Ray parallel to the plane: degenerate only if it lies in it.
        let normal = e1.cross(&e2);
        let nn = normal.norm();
        if nn == 0.0 || (s.dot(&normal) / nn).abs() <= EPS * scale {
            return RayHit::Degenerate;
        }
        return RayHit::Miss;
    }
    let inv = 1.0 / det;
    let u = s.dot(&pvec) * inv;
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    let t = e2.dot(&q) * inv;
    const BARY_EPS: f64 = 1e-10;
    if u < -BARY_EPS || v < -BARY_EPS || u + v > 1.0 + BARY_EPS || t < -EPS * scale {
        return RayHit::Miss;
    }
    if u <= BARY_EPS || v <= BARY_EPS || u + v >= 1.0 - BARY_EPS || t.abs() <= EPS * scale {
        return RayHit::Degenerate;
    }
    RayHit::Hit
}

/// Closest point on triangle `abc` to `p` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Point3, a: &Point3, b: &Point3, c: &Point3) -> Point3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}
