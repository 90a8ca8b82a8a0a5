//! Conforming triangulations of polygons with labelled boundary edges.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};
use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("polygon is self-intersecting (sides {0} and {1})")]
    SelfIntersecting(usize, usize),
    #[error("mesh invariant violated: {0}")]
    Invalid(String),
    #[error("Γ0 selects every boundary edge; Γ1 must be nonempty")]
    EmptyGamma1,
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error("mesh file parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    /// Oriented so that the domain lies on the left.
    pub vertices: [usize; 2],
    /// Outward unit normal.
    pub normal: [f64; 2],
    /// Side marker (polygon side index, or 0..4 = bottom/right/top/left for the square).
    pub label: u32,
}

impl BoundaryEdge {
    fn new(vertices: [usize; 2], label: u32, points: &[Point]) -> Self {
        let [a, b] = vertices;
        let dx = points[b][0] - points[a][0];
        let dy = points[b][1] - points[a][1];
        let len = dx.hypot(dy);
        Self {
            vertices,
            normal: [dy / len, -dx / len],
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    h_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityReport {
    pub min_angle_deg: f64,
    pub max_angle_deg: f64,
    pub min_area: f64,
    pub all_nonobtuse: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub fn parse(name: &str) -> Option<Side> {
        match name {
            "bottom" => Some(Side::Bottom),
            "right" => Some(Side::Right),
            "top" => Some(Side::Top),
            "left" => Some(Side::Left),
            _ => None,
        }
    }
}

pub fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

impl Mesh {
    /// Builds a mesh from vertices and counter-clockwise triangles; boundary
    /// edges are extracted from the triangle adjacency and labelled by `label`
    /// (called with the edge midpoint).
    pub fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        label: impl Fn(Point) -> u32,
    ) -> Result<Self, MeshError> {
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let e = (tri[k], tri[(k + 1) % 3]);
                if directed.insert(e, t).is_some() {
                    return Err(MeshError::Invalid(format!(
                        "directed edge {e:?} appears twice (inconsistent orientation)"
                    )));
                }
            }
        }
        let mut next: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) && next.insert(a, b).is_some() {
                return Err(MeshError::Invalid(format!(
                    "boundary vertex {a} starts two boundary edges"
                )));
            }
        }
        // walk loops starting from the smallest unvisited vertex
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        let mut visited = vec![false; vertices.len()];
        let mut boundary_edges = Vec::with_capacity(next.len());
        for s in starts {
            if visited[s] {
                continue;
            }
            let mut a = s;
            loop {
                visited[a] = true;
                let b = *next
                    .get(&a)
                    .ok_or_else(|| MeshError::Invalid(format!("boundary loop open at {a}")))?;
                let m = midpoint(vertices[a], vertices[b]);
                boundary_edges.push(BoundaryEdge::new([a, b], label(m), &vertices));
                a = b;
                if a == s {
                    break;
                }
                if visited[a] {
                    return Err(MeshError::Invalid(format!("boundary loop revisits {a}")));
                }
            }
        }
        let mesh = Self::assemble_parts(vertices, triangles, boundary_edges);
        mesh.validate()?;
        Ok(mesh)
    }

    fn assemble_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Self {
        let pts = &vertices;
        let h_max = triangles
            .iter()
            .flat_map(|t| (0..3).map(move |k| dist(pts[t[k]], pts[t[(k + 1) % 3]])))
            .fold(0.0, f64::max);
        Self {
            vertices,
            triangles,
            boundary_edges,
            h_max,
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn edge_midpoint(&self, e: usize) -> Point {
        let [a, b] = self.boundary_edges[e].vertices;
        midpoint(self.vertices[a], self.vertices[b])
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.boundary_edges[e].vertices;
        dist(self.vertices[a], self.vertices[b])
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                signed_area(a, b, c)
            })
            .sum()
    }

    pub fn boundary_length(&self) -> f64 {
        (0..self.boundary_edges.len()).map(|e| self.edge_length(e)).sum()
    }

    /// `[xmin, ymin, xmax, ymax]`
    pub fn bounding_box(&self) -> [f64; 4] {
        self.vertices.iter().fold(
            [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
            |b, p| [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])],
        )
    }

    /// Sorted list of vertices lying on the boundary.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.boundary_edges.iter().map(|e| e.vertices[0]).collect();
        v.sort_unstable();
        v
    }

    /// Number of distinct undirected edges.
    pub fn num_edges(&self) -> usize {
        let interior_half_edges = 3 * self.triangles.len() - self.boundary_edges.len();
        interior_half_edges / 2 + self.boundary_edges.len()
    }

    /// Checks positive areas, edge incidence and closed boundary loops.
    pub fn validate(&self) -> Result<(), MeshError> {
        let n = self.vertices.len();
        let mut count: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(MeshError::Invalid(format!("triangle {t} references missing vertex")));
            }
            let [a, b, c] = self.triangle_points(t);
            if signed_area(a, b, c) <= 0.0 {
                return Err(MeshError::Invalid(format!("triangle {t} has non-positive area")));
            }
            for k in 0..3 {
                let (p, q) = (tri[k], tri[(k + 1) % 3]);
                let entry = count.entry((p.min(q), p.max(q))).or_insert((0, 0));
                if p < q {
                    entry.0 += 1;
                } else {
                    entry.1 += 1;
                }
            }
        }
        let mut boundary_count = 0;
        for (e, (fwd, bwd)) in &count {
            match (fwd, bwd) {
                (1, 1) => {}
                (1, 0) | (0, 1) => boundary_count += 1,
                _ => {
                    return Err(MeshError::Invalid(format!(
                        "edge {e:?} has incidence ({fwd}, {bwd})"
                    )))
                }
            }
        }
        if boundary_count != self.boundary_edges.len() {
            return Err(MeshError::Invalid(format!(
                "{} boundary edges recorded, {boundary_count} found",
                self.boundary_edges.len()
            )));
        }
        let mut out_deg = vec![0usize; n];
        let mut in_deg = vec![0usize; n];
        for be in &self.boundary_edges {
            let [a, b] = be.vertices;
            match count.get(&(a.min(b), a.max(b))) {
                Some(&(f, r)) if f + r == 1 => {}
                _ => return Err(MeshError::Invalid(format!("edge ({a},{b}) is not a boundary edge"))),
            }
            out_deg[a] += 1;
            in_deg[b] += 1;
        }
        if let Some(v) = (0..n).find(|&v| out_deg[v] != in_deg[v] || out_deg[v] > 1) {
            return Err(MeshError::Invalid(format!("boundary not a union of closed loops at vertex {v}")));
        }
        Ok(())
    }

    pub fn quality(&self) -> QualityReport {
        let mut min_angle = f64::INFINITY;
        let mut max_angle: f64 = 0.0;
        let mut min_area = f64::INFINITY;
        for t in 0..self.triangles.len() {
            let p = self.triangle_points(t);
            min_area = min_area.min(signed_area(p[0], p[1], p[2]));
            for k in 0..3 {
                let (a, b, c) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                let ang = cos.clamp(-1.0, 1.0).acos().to_degrees();
                min_angle = min_angle.min(ang);
                max_angle = max_angle.max(ang);
            }
        }
        QualityReport {
            min_angle_deg: min_angle,
            max_angle_deg: max_angle,
            min_area,
            all_nonobtuse: max_angle <= 90.0 + 1e-9,
        }
    }

    /// Selects the boundary edges on one side of the bounding box.
    pub fn side_predicate(&self, side: Side) -> impl Fn(Point) -> bool {
        let [x0, y0, x1, y1] = self.bounding_box();
        let tol = 1e-9 * (x1 - x0).max(y1 - y0);
        move |p: Point| match side {
            Side::Bottom => (p[1] - y0).abs() <= tol,
            Side::Right => (p[0] - x1).abs() <= tol,
            Side::Top => (p[1] - y1).abs() <= tol,
            Side::Left => (p[0] - x0).abs() <= tol,
        }
    }
}

/// Unit square `[0,1]²` split into `n × n` cells, each cut into two
/// right-isosceles triangles with alternating diagonals (union-jack pattern).
/// For even `n` the mesh has the full symmetry group of the square.
pub fn build_structured_square(n: usize) -> Result<Mesh, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidArgument("n must be at least 1".into()));
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
        }
    }
    Mesh::from_parts(vertices, triangles, |m| {
        const TOL: f64 = 1e-12;
        if m[1] < TOL {
            0
        } else if m[0] > 1.0 - TOL {
            1
        } else if m[1] > 1.0 - TOL {
            2
        } else {
            3
        }
    })
}

fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = signed_area(q1, q2, p1);
    let d2 = signed_area(q1, q2, p2);
    let d3 = signed_area(p1, p2, q1);
    let d4 = signed_area(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Point, b: Point, c: Point, d: f64| {
        d == 0.0
            && c[0] >= a[0].min(b[0])
            && c[0] <= a[0].max(b[0])
            && c[1] >= a[1].min(b[1])
            && c[1] <= a[1].max(b[1])
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn dist_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * d[0], a[1] + t * d[1]])
}

/// Triangulates a simple polygon (either orientation) with target edge
/// length `h_target`. Boundary edges carry the index of the polygon side
/// they subdivide.
pub fn build_polygon_mesh(polygon: &[Point], h_target: f64) -> Result<Mesh, MeshError> {
    if !(h_target > 0.0 && h_target.is_finite()) {
        return Err(MeshError::InvalidArgument("h_target must be positive".into()));
    }
    let m = polygon.len();
    if m < 3 {
        return Err(MeshError::InvalidArgument("polygon needs at least 3 vertices".into()));
    }
    for i in 0..m {
        if dist(polygon[i], polygon[(i + 1) % m]) == 0.0 {
            return Err(MeshError::InvalidArgument(format!("zero-length side {i}")));
        }
        for j in i + 1..m {
            let adjacent = j == i + 1 || (i == 0 && j == m - 1);
            if adjacent {
                continue;
            }
            if segments_intersect(polygon[i], polygon[(i + 1) % m], polygon[j], polygon[(j + 1) % m]) {
                return Err(MeshError::SelfIntersecting(i, j));
            }
        }
    }
    let area: f64 = (0..m)
        .map(|i| {
            let (a, b) = (polygon[i], polygon[(i + 1) % m]);
            0.5 * (a[0] * b[1] - b[0] * a[1])
        })
        .sum();
    if area == 0.0 {
        return Err(MeshError::InvalidArgument("degenerate polygon".into()));
    }

    // boundary points, each side split into pieces no longer than h_target
    let mut points: Vec<Point> = Vec::new();
    for i in 0..m {
        let (a, b) = (polygon[i], polygon[(i + 1) % m]);
        let pieces = (dist(a, b) / h_target).ceil().max(1.0) as usize;
        for k in 0..pieces {
            let t = k as f64 / pieces as f64;
            points.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    let n_boundary = points.len();

    // interior points on a triangular lattice
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in polygon {
        x0 = x0.min(p[0]);
        y0 = y0.min(p[1]);
        x1 = x1.max(p[0]);
        y1 = y1.max(p[1]);
    }
    let dy = h_target * 3f64.sqrt() / 2.0;
    let rows = ((y1 - y0) / dy).ceil() as usize;
    let cols = ((x1 - x0) / h_target).ceil() as usize + 1;
    for r in 0..=rows {
        let y = y0 + r as f64 * dy;
        let shift = if r % 2 == 1 { 0.5 * h_target } else { 0.0 };
        for c in 0..=cols {
            let p = [x0 + shift + c as f64 * h_target, y];
            if !point_in_polygon(p, polygon) {
                continue;
            }
            let clearance = (0..m)
                .map(|i| dist_to_segment(p, polygon[i], polygon[(i + 1) % m]))
                .fold(f64::INFINITY, f64::min);
            if clearance >= 0.5 * h_target {
                points.push(p);
            }
        }
    }

    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    let mut handles = Vec::with_capacity(points.len());
    for p in &points {
        let h = cdt
            .insert(Point2::new(p[0], p[1]))
            .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
        handles.push(h);
    }
    let mut index_of = HashMap::new();
    for (i, h) in handles.iter().enumerate() {
        if index_of.insert(*h, i).is_some() {
            return Err(MeshError::Triangulation("duplicate input point".into()));
        }
    }
    for i in 0..n_boundary {
        let (a, b) = (handles[i], handles[(i + 1) % n_boundary]);
        if !cdt.can_add_constraint(a, b) {
            return Err(MeshError::Triangulation(format!("boundary segment {i} crosses a constraint")));
        }
        cdt.add_constraint(a, b);
    }
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        let vs = face.vertices();
        let mut tri = [0usize; 3];
        for (k, v) in vs.iter().enumerate() {
            tri[k] = index_of[&v.fix()];
        }
        let (a, b, c) = (points[tri[0]], points[tri[1]], points[tri[2]]);
        let centroid = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0];
        // slivers spanning nearly collinear boundary points lie outside
        if !point_in_polygon(centroid, polygon) || signed_area(a, b, c).abs() < 1e-10 * h_target * h_target {
            continue;
        }
        if signed_area(a, b, c) < 0.0 {
            tri.swap(1, 2);
        }
        triangles.push(tri);
    }
    triangles.sort_unstable();

    let sides: Vec<(Point, Point)> = (0..m).map(|i| (polygon[i], polygon[(i + 1) % m])).collect();
    let label = |p: Point| {
        sides
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| (i, dist_to_segment(p, a, b)))
            .fold((0usize, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
            .0 as u32
    };
    let mut mesh = Mesh::from_parts(points, triangles, label)?;
    if mesh.boundary_edges.len() != n_boundary {
        return Err(MeshError::Triangulation(format!(
            "expected {n_boundary} boundary edges, found {}",
            mesh.boundary_edges.len()
        )));
    }
    while mesh.h_max > 2.0 * h_target {
        mesh = refine(&mesh);
    }
    Ok(mesh)
}

/// Regular `m`-gon inscribed in the circle of given radius around the origin.
pub fn regular_polygon(m: usize, radius: f64) -> Vec<Point> {
    (0..m)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            [radius * t.cos(), radius * t.sin()]
        })
        .collect()
}

/// `[0,1]²` with the upper-right quarter removed.
pub fn l_shape() -> Vec<Point> {
    vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.5, 0.5], [0.5, 1.0], [0.0, 1.0]]
}

/// Red refinement: every triangle is split into four through its edge
/// midpoints. Boundary edge `e` of the parent becomes edges `2e` and `2e + 1`
/// of the child, with the same label.
pub fn refine(mesh: &Mesh) -> Mesh {
    let mut vertices = mesh.vertices.clone();
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint_of = |a: usize, b: usize, vertices: &mut Vec<Point>| {
        *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
            vertices.push(midpoint(vertices[a], vertices[b]));
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for &[a, b, c] in &mesh.triangles {
        let ab = midpoint_of(a, b, &mut vertices);
        let bc = midpoint_of(b, c, &mut vertices);
        let ca = midpoint_of(c, a, &mut vertices);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for be in &mesh.boundary_edges {
        let [a, b] = be.vertices;
        let m = midpoint_of(a, b, &mut vertices);
        boundary_edges.push(BoundaryEdge::new([a, m], be.label, &vertices));
        boundary_edges.push(BoundaryEdge::new([m, b], be.label, &vertices));
    }
    Mesh::assemble_parts(vertices, triangles, boundary_edges)
}

/// Splits the boundary into the Dirichlet part Γ0 and its complement Γ1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryPartition {
    pub gamma0_edges: Vec<usize>,
    pub gamma1_edges: Vec<usize>,
    /// Every vertex touching a Γ0 edge (Γ0 is closed).
    pub constrained_vertices: Vec<usize>,
}

impl BoundaryPartition {
    fn from_gamma0(mesh: &Mesh, is_gamma0: &[bool]) -> Result<Self, MeshError> {
        let (mut g0, mut g1) = (Vec::new(), Vec::new());
        for (e, &sel) in is_gamma0.iter().enumerate() {
            if sel {
                g0.push(e)
            } else {
                g1.push(e)
            }
        }
        if g1.is_empty() {
            return Err(MeshError::EmptyGamma1);
        }
        let mut constrained: Vec<usize> = g0
            .iter()
            .flat_map(|&e| mesh.boundary_edges[e].vertices)
            .collect();
        constrained.sort_unstable();
        constrained.dedup();
        Ok(Self {
            gamma0_edges: g0,
            gamma1_edges: g1,
            constrained_vertices: constrained,
        })
    }

    /// Maps a partition of `parent` onto `refine(parent)`.
    pub fn refine(&self, child: &Mesh) -> Result<Self, MeshError> {
        let mut sel = vec![false; child.boundary_edges.len()];
        for &e in &self.gamma0_edges {
            sel[2 * e] = true;
            sel[2 * e + 1] = true;
        }
        Self::from_gamma0(child, &sel)
    }

    /// True when this Γ0 is contained in `other`'s Γ0.
    pub fn is_nested_in(&self, other: &BoundaryPartition) -> bool {
        self.gamma0_edges
            .iter()
            .all(|e| other.gamma0_edges.binary_search(e).is_ok())
    }

    pub fn gamma0_length(&self, mesh: &Mesh) -> f64 {
        self.gamma0_edges.iter().map(|&e| mesh.edge_length(e)).sum()
    }
}

/// Γ0 = boundary edges whose midpoint satisfies `selector`.
pub fn partition_boundary(
    mesh: &Mesh,
    selector: impl Fn(Point) -> bool,
) -> Result<BoundaryPartition, MeshError> {
    let sel: Vec<bool> = (0..mesh.boundary_edges.len())
        .map(|e| selector(mesh.edge_midpoint(e)))
        .collect();
    BoundaryPartition::from_gamma0(mesh, &sel)
}

/// Γ0 = boundary edges `e` with `selector(e, &edge)`.
pub fn partition_edges(
    mesh: &Mesh,
    selector: impl Fn(usize, &BoundaryEdge) -> bool,
) -> Result<BoundaryPartition, MeshError> {
    let sel: Vec<bool> = mesh.boundary_edges.iter().enumerate().map(|(e, be)| selector(e, be)).collect();
    BoundaryPartition::from_gamma0(mesh, &sel)
}

pub const MESH_HEADER: &str = "DTNLAB-MESH v1";

pub fn write_mesh(mesh: &Mesh, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{MESH_HEADER}")?;
    writeln!(out, "vertices {}", mesh.vertices.len())?;
    for p in &mesh.vertices {
        writeln!(out, "{:.17e} {:.17e}", p[0], p[1])?;
    }
    writeln!(out, "triangles {}", mesh.triangles.len())?;
    for t in &mesh.triangles {
        writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "boundary_edges {}", mesh.boundary_edges.len())?;
    for be in &mesh.boundary_edges {
        writeln!(out, "{} {} {}", be.vertices[0], be.vertices[1], be.label)?;
    }
    Ok(())
}

pub fn read_mesh(input: impl BufRead) -> Result<Mesh, MeshError> {
    let mut lines = input.lines().enumerate();
    let mut next_line = || -> Result<(usize, String), MeshError> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(MeshError::Parse {
                line: 0,
                message: "unexpected end of file".into(),
            }),
        }
    };
    let (line, header) = next_line()?;
    if header.trim() != MESH_HEADER {
        return Err(MeshError::Parse {
            line,
            message: format!("expected header `{MESH_HEADER}`"),
        });
    }
    let mut section = |name: &str, width: usize| -> Result<Vec<Vec<String>>, MeshError> {
        let (line, head) = next_line()?;
        let mut parts = head.split_whitespace();
        let count: usize = match (parts.next(), parts.next().and_then(|c| c.parse().ok())) {
            (Some(n), Some(c)) if n == name => c,
            _ => {
                return Err(MeshError::Parse {
                    line,
                    message: format!("expected `{name} <count>`"),
                })
            }
        };
        (0..count)
            .map(|_| {
                let (line, row) = next_line()?;
                let fields: Vec<String> = row.split_whitespace().map(str::to_string).collect();
                if fields.len() != width {
                    return Err(MeshError::Parse {
                        line,
                        message: format!("expected {width} fields"),
                    });
                }
                Ok(fields)
            })
            .collect()
    };
    let bad = |what: &str| MeshError::Parse {
        line: 0,
        message: format!("malformed {what} entry"),
    };
    let vertices = section("vertices", 2)?
        .iter()
        .map(|f| Ok([f[0].parse().map_err(|_| bad("vertex"))?, f[1].parse().map_err(|_| bad("vertex"))?]))
        .collect::<Result<Vec<Point>, MeshError>>()?;
    let parse_idx = |s: &String| s.parse::<usize>().map_err(|_| bad("index"));
    let triangles = section("triangles", 3)?
        .iter()
        .map(|f| Ok([parse_idx(&f[0])?, parse_idx(&f[1])?, parse_idx(&f[2])?]))
        .collect::<Result<Vec<[usize; 3]>, MeshError>>()?;
    let boundary_edges = section("boundary_edges", 3)?
        .iter()
        .map(|f| {
            let (a, b) = (parse_idx(&f[0])?, parse_idx(&f[1])?);
            if a >= vertices.len() || b >= vertices.len() {
                return Err(bad("boundary edge"));
            }
            let label = f[2].parse().map_err(|_| bad("label"))?;
            Ok(BoundaryEdge::new([a, b], label, &vertices))
        })
        .collect::<Result<Vec<_>, MeshError>>()?;
    let mesh = Mesh::assemble_parts(vertices, triangles, boundary_edges);
    mesh.validate()?;
    Ok(mesh)
}
