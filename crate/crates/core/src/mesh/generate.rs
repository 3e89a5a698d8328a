//! Built-in mesh generation for the benchmark geometries.
//!
//! Planar meshes are produced by seeding a hexagonal lattice away from all
//! interfaces, placing evenly spaced nodes along every interface, and
//! running a constrained Delaunay triangulation so that cell edges follow
//! the interfaces exactly.

use std::f64::consts::PI;

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::{dist, signed_area, Mesh, Region};
use crate::error::{Error, Result};

/// Geometries the generator understands.
#[derive(Debug, Clone, PartialEq)]
pub enum GeometrySpec {
    /// `omega = (a, b)` inside `outer = (l, r)`, optional control intervals.
    Interval { omega: (f64, f64), outer: (f64, f64), control: Vec<(f64, f64)> },
    /// Disk of radius `inner_radius` inside a disk of radius `outer_radius`,
    /// with an optional control annulus `(r1, r2)`.
    DiskInDisk { inner_radius: f64, outer_radius: f64, control_annulus: Option<(f64, f64)> },
    /// Square `[-half_width, half_width]^2` inside a disk, with an optional
    /// square-frame control support between two concentric squares.
    SquareInDisk { half_width: f64, outer_radius: f64, control_frame: Option<(f64, f64)> },
    /// Polygon inside a disk, with an optional polygonal control patch.
    PolygonInDisk { polygon: Vec<[f64; 2]>, outer_radius: f64, control: Option<Vec<[f64; 2]>> },
}

impl GeometrySpec {
    /// Omega = (-1/2, 1/2) inside (-3/2, 3/2).
    pub fn benchmark_interval() -> Self {
        GeometrySpec::Interval { omega: (-0.5, 0.5), outer: (-1.5, 1.5), control: Vec::new() }
    }

    /// The benchmark interval with a control segment `(0.7, 1.2)`.
    pub fn interval_control() -> Self {
        GeometrySpec::Interval { omega: (-0.5, 0.5), outer: (-1.5, 1.5), control: vec![(0.7, 1.2)] }
    }

    /// Omega = B(0, 1/2) inside B(0, 3/2).
    pub fn benchmark_disk() -> Self {
        GeometrySpec::DiskInDisk { inner_radius: 0.5, outer_radius: 1.5, control_annulus: None }
    }

    /// Disk benchmark with an annular control support.
    pub fn annulus_control() -> Self {
        GeometrySpec::DiskInDisk { inner_radius: 0.5, outer_radius: 1.5, control_annulus: Some((0.7, 1.2)) }
    }

    /// Omega = [-0.4, 0.4]^2 inside B(0, 3/2) with a square-frame source region.
    pub fn source_square() -> Self {
        GeometrySpec::SquareInDisk { half_width: 0.4, outer_radius: 1.5, control_frame: Some((0.6, 0.9)) }
    }

    /// M-shaped Omega inside B(0, 0.6) with a small control patch in the
    /// upper notch.
    pub fn m_shape() -> Self {
        GeometrySpec::PolygonInDisk {
            polygon: m_shape_polygon(),
            outer_radius: 0.6,
            control: Some(vec![[-0.05, 0.3], [0.05, 0.3], [0.05, 0.4], [-0.05, 0.4]]),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            GeometrySpec::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Parses the geometry names accepted by the CLI and config files.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "interval" => Ok(Self::benchmark_interval()),
            "interval_control" => Ok(Self::interval_control()),
            "disk" => Ok(Self::benchmark_disk()),
            "annulus" => Ok(Self::annulus_control()),
            "square" => Ok(Self::source_square()),
            "mshape" => Ok(Self::m_shape()),
            other => Err(Error::InvalidGeometry(format!("unknown geometry '{other}'"))),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidGeometry(msg.to_string()));
        match self {
            GeometrySpec::Interval { omega, outer, control } => {
                if !(omega.0 < omega.1) || !(outer.0 < outer.1) {
                    return bad("empty interval");
                }
                if !(outer.0 < omega.0 && omega.1 < outer.1) {
                    return bad("the outer interval must strictly contain omega");
                }
                for &(c, d) in control {
                    if !(c < d) || c < outer.0 || d > outer.1 {
                        return bad("control interval must be a nonempty subinterval of the outer interval");
                    }
                    if !(d < omega.0 || c > omega.1) {
                        return bad("control support overlaps the closure of omega");
                    }
                }
            }
            GeometrySpec::DiskInDisk { inner_radius: r, outer_radius: big, control_annulus } => {
                if !(*r > 0.0) {
                    return bad("inner radius must be positive");
                }
                if big <= r {
                    return bad("outer radius must exceed the inner radius");
                }
                if let Some((r1, r2)) = control_annulus {
                    if r1 <= r || r2 <= r1 || r2 > big {
                        return bad("control annulus must lie strictly outside omega and inside the outer disk");
                    }
                }
            }
            GeometrySpec::SquareInDisk { half_width, outer_radius, control_frame } => {
                if !(*half_width > 0.0) || half_width * 2f64.sqrt() >= *outer_radius {
                    return bad("the outer disk must strictly contain the square");
                }
                if let Some((a, b)) = control_frame {
                    if a <= half_width || b <= a || b * 2f64.sqrt() > *outer_radius {
                        return bad("control frame must lie strictly outside omega and inside the outer disk");
                    }
                }
            }
            GeometrySpec::PolygonInDisk { polygon, outer_radius, control } => {
                if polygon.len() < 3 {
                    return bad("polygon needs at least three vertices");
                }
                if polygon.iter().any(|p| p[0].hypot(p[1]) >= *outer_radius) {
                    return bad("the outer disk must strictly contain the polygon");
                }
                if let Some(patch) = control {
                    if patch.iter().any(|p| p[0].hypot(p[1]) > *outer_radius) {
                        return bad("control patch leaves the outer disk");
                    }
                    let gap = loops_distance(polygon, patch);
                    if patch.iter().any(|&p| point_in_polygon(p, polygon))
                        || polygon.iter().any(|&p| point_in_polygon(p, patch))
                        || gap <= 0.0
                    {
                        return bad("control support overlaps the closure of omega");
                    }
                }
            }
        }
        Ok(())
    }
}

/// The M-shaped observation domain used for the small-support control example.
pub fn m_shape_polygon() -> Vec<[f64; 2]> {
    vec![
        [-0.4, -0.35],
        [-0.25, -0.35],
        [-0.25, 0.1],
        [0.0, -0.15],
        [0.25, 0.1],
        [0.25, -0.35],
        [0.4, -0.35],
        [0.4, 0.35],
        [0.25, 0.35],
        [0.0, 0.1],
        [-0.25, 0.35],
        [-0.4, 0.35],
    ]
}

/// Generates a conforming tagged mesh with cell diameters of order `target_h`.
pub fn generate(spec: &GeometrySpec, target_h: f64) -> Result<Mesh> {
    if !(target_h > 0.0) || !target_h.is_finite() {
        return Err(Error::InvalidArgument(format!("target_h must be positive, got {target_h}")));
    }
    spec.validate()?;
    match spec {
        GeometrySpec::Interval { omega, outer, control } => interval_mesh(*omega, *outer, control, target_h),
        _ => planar_mesh(&PlanarLayout::from_spec(spec, target_h), target_h),
    }
}

/// Generates a mesh whose node count is close to `target_dofs`.
pub fn generate_with_dofs(spec: &GeometrySpec, target_dofs: usize) -> Result<Mesh> {
    spec.validate()?;
    let scale = match spec {
        GeometrySpec::Interval { outer, .. } => outer.1 - outer.0,
        GeometrySpec::DiskInDisk { outer_radius, .. }
        | GeometrySpec::SquareInDisk { outer_radius, .. }
        | GeometrySpec::PolygonInDisk { outer_radius, .. } => *outer_radius,
    };
    let (mut lo, mut hi) = (scale * 1e-4, scale);
    let mut best = generate(spec, hi)?;
    for _ in 0..40 {
        let h = (lo * hi).sqrt();
        let mesh = generate(spec, h)?;
        let n = mesh.num_nodes();
        if n.abs_diff(target_dofs) < best.num_nodes().abs_diff(target_dofs) {
            best = mesh;
        }
        if n == target_dofs || hi / lo < 1.0005 {
            break;
        }
        if n > target_dofs {
            lo = h;
        } else {
            hi = h;
        }
    }
    Ok(best)
}

fn interval_mesh(omega: (f64, f64), outer: (f64, f64), control: &[(f64, f64)], h: f64) -> Result<Mesh> {
    let mut breaks = vec![outer.0, omega.0, omega.1, outer.1];
    for &(c, d) in control {
        breaks.push(c);
        breaks.push(d);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    let mut coords = vec![breaks[0]];
    for w in breaks.windows(2) {
        let k = ((w[1] - w[0]) / h - 1e-9).ceil().max(1.0) as usize;
        for j in 1..=k {
            coords.push(w[0] + (w[1] - w[0]) * j as f64 / k as f64);
        }
    }
    let ncell = coords.len() - 1;
    let mut cells = Vec::with_capacity(2 * ncell);
    let mut regions = Vec::with_capacity(ncell);
    for c in 0..ncell {
        cells.extend_from_slice(&[c, c + 1]);
        let m = 0.5 * (coords[c] + coords[c + 1]);
        let region = if m > omega.0 && m < omega.1 {
            Region::Interior
        } else if control.iter().any(|&(a, b)| m > a && m < b) {
            Region::ControlSupport
        } else {
            Region::Exterior
        };
        regions.push(region);
    }
    Mesh::new(1, coords, cells, regions)
}

/// Closed polygonal loops bounding the outer domain, omega, and the control
/// support. Membership uses the even-odd rule over each loop set.
struct PlanarLayout {
    outer: Vec<[f64; 2]>,
    omega: Vec<Vec<[f64; 2]>>,
    control: Vec<Vec<[f64; 2]>>,
}

impl PlanarLayout {
    fn from_spec(spec: &GeometrySpec, h: f64) -> Self {
        let square = |a: f64| vec![[-a, -a], [a, -a], [a, a], [-a, a]];
        match spec {
            GeometrySpec::DiskInDisk { inner_radius, outer_radius, control_annulus } => PlanarLayout {
                outer: circle(*outer_radius, h),
                omega: vec![circle(*inner_radius, h)],
                control: control_annulus.map(|(a, b)| vec![circle(a, h), circle(b, h)]).unwrap_or_default(),
            },
            GeometrySpec::SquareInDisk { half_width, outer_radius, control_frame } => PlanarLayout {
                outer: circle(*outer_radius, h),
                omega: vec![subdivide(&square(*half_width), h)],
                control: control_frame
                    .map(|(a, b)| vec![subdivide(&square(a), h), subdivide(&square(b), h)])
                    .unwrap_or_default(),
            },
            GeometrySpec::PolygonInDisk { polygon, outer_radius, control } => PlanarLayout {
                outer: circle(*outer_radius, h),
                omega: vec![subdivide(polygon, h)],
                control: control.iter().map(|p| subdivide(p, h)).collect(),
            },
            GeometrySpec::Interval { .. } => unreachable!("planar layout requested for a 1D geometry"),
        }
    }

    fn loops(&self) -> impl Iterator<Item = &Vec<[f64; 2]>> {
        std::iter::once(&self.outer).chain(&self.omega).chain(&self.control)
    }
}

fn circle(r: f64, h: f64) -> Vec<[f64; 2]> {
    let n = ((2.0 * PI * r / h).ceil() as usize).max(12);
    (0..n)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n as f64;
            [r * t.cos(), r * t.sin()]
        })
        .collect()
}

fn subdivide(polygon: &[[f64; 2]], h: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for (k, &a) in polygon.iter().enumerate() {
        let b = polygon[(k + 1) % polygon.len()];
        let m = ((dist(a, b) / h - 1e-9).ceil() as usize).max(1);
        for j in 0..m {
            let t = j as f64 / m as f64;
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for k in 0..n {
        let a = poly[k];
        let b = poly[(k + 1) % n];
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn in_loops(p: [f64; 2], loops: &[Vec<[f64; 2]>]) -> bool {
    loops.iter().filter(|l| point_in_polygon(p, l)).count() % 2 == 1
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let o1 = signed_area(a, b, c);
    let o2 = signed_area(a, b, d);
    let o3 = signed_area(c, d, a);
    let o4 = signed_area(c, d, b);
    o1 * o2 <= 0.0 && o3 * o4 <= 0.0
}

fn loops_distance(p: &[[f64; 2]], q: &[[f64; 2]]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..p.len() {
        let (a, b) = (p[i], p[(i + 1) % p.len()]);
        for j in 0..q.len() {
            let (c, d) = (q[j], q[(j + 1) % q.len()]);
            if segments_intersect(a, b, c, d) {
                return 0.0;
            }
            best = best
                .min(point_segment_distance(a, c, d))
                .min(point_segment_distance(b, c, d))
                .min(point_segment_distance(c, a, b))
                .min(point_segment_distance(d, a, b));
        }
    }
    best
}

fn planar_mesh(layout: &PlanarLayout, h: f64) -> Result<Mesh> {
    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut segments: Vec<([f64; 2], [f64; 2])> = Vec::new();
    for lp in layout.loops() {
        let base = points.len();
        for (k, &p) in lp.iter().enumerate() {
            points.push(p);
            edges.push([base + k, base + (k + 1) % lp.len()]);
            segments.push((p, lp[(k + 1) % lp.len()]));
        }
    }
    let n_fixed = points.len();

    // bin segments for the clearance test
    let cell = h;
    let mut bins: std::collections::HashMap<(i64, i64), Vec<usize>> = std::collections::HashMap::new();
    let key = |p: [f64; 2]| ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64);
    for (s, &(a, b)) in segments.iter().enumerate() {
        let (ka, kb) = (key(a), key(b));
        for gx in ka.0.min(kb.0)..=ka.0.max(kb.0) {
            for gy in ka.1.min(kb.1)..=ka.1.max(kb.1) {
                bins.entry((gx, gy)).or_default().push(s);
            }
        }
    }
    let clearance = 0.55 * h;
    let reach = (clearance / cell).ceil() as i64 + 1;
    let radius = layout.outer.iter().map(|p| p[0].hypot(p[1])).fold(0.0, f64::max);
    let dy = h * 3f64.sqrt() / 2.0;
    let rows = (2.0 * radius / dy).ceil() as i64 + 1;
    for j in 0..=rows {
        let y = -radius + j as f64 * dy;
        let offset = if j % 2 == 1 { 0.5 * h } else { 0.0 };
        let cols = (2.0 * radius / h).ceil() as i64 + 1;
        for i in 0..=cols {
            let p = [-radius + offset + i as f64 * h, y];
            if !point_in_polygon(p, &layout.outer) {
                continue;
            }
            let k = key(p);
            let mut ok = true;
            'scan: for gx in k.0 - reach..=k.0 + reach {
                for gy in k.1 - reach..=k.1 + reach {
                    if let Some(list) = bins.get(&(gx, gy)) {
                        for &s in list {
                            if point_segment_distance(p, segments[s].0, segments[s].1) < clearance {
                                ok = false;
                                break 'scan;
                            }
                        }
                    }
                }
            }
            if ok {
                points.push(p);
            }
        }
    }

    let vertices: Vec<Point2<f64>> = points.iter().map(|p| Point2::new(p[0], p[1])).collect();
    let cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::bulk_load_cdt(vertices, edges)
        .map_err(|e| Error::InvalidGeometry(format!("triangulation failed: {e:?}")))?;
    if cdt.num_vertices() != points.len() {
        return Err(Error::InvalidGeometry("duplicate mesh points".into()));
    }
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for face in cdt.inner_faces() {
        let v = face.vertices();
        let t = [v[0].fix().index(), v[1].fix().index(), v[2].fix().index()];
        let c = centroid(&points, t);
        if point_in_polygon(c, &layout.outer) {
            triangles.push(t);
        }
    }
    for t in triangles.iter_mut() {
        if signed_area(points[t[0]], points[t[1]], points[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
    }
    smooth(&mut points, &triangles, n_fixed, 4);

    let mut coords = Vec::with_capacity(2 * points.len());
    for p in &points {
        coords.extend_from_slice(p);
    }
    let mut cells = Vec::with_capacity(3 * triangles.len());
    let mut regions = Vec::with_capacity(triangles.len());
    for t in &triangles {
        cells.extend_from_slice(t);
        let c = centroid(&points, *t);
        let region = if in_loops(c, &layout.omega) {
            Region::Interior
        } else if in_loops(c, &layout.control) {
            Region::ControlSupport
        } else {
            Region::Exterior
        };
        regions.push(region);
    }
    drop_unused_nodes(2, coords, cells, regions)
}

fn centroid(points: &[[f64; 2]], t: [usize; 3]) -> [f64; 2] {
    let (a, b, c) = (points[t[0]], points[t[1]], points[t[2]]);
    [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
}

/// Laplacian smoothing of the free (lattice) nodes; a move is rejected if it
/// would shrink an incident triangle below a fifth of its area.
fn smooth(points: &mut [[f64; 2]], triangles: &[[usize; 3]], n_fixed: usize, sweeps: usize) {
    let n = points.len();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, t) in triangles.iter().enumerate() {
        for a in 0..3 {
            incident[t[a]].push(k);
            for b in 0..3 {
                if a != b && !adjacency[t[a]].contains(&t[b]) {
                    adjacency[t[a]].push(t[b]);
                }
            }
        }
    }
    for _ in 0..sweeps {
        for v in n_fixed..n {
            if adjacency[v].is_empty() {
                continue;
            }
            let m = adjacency[v].len() as f64;
            let target = adjacency[v]
                .iter()
                .fold([0.0, 0.0], |acc, &w| [acc[0] + points[w][0] / m, acc[1] + points[w][1] / m]);
            let old = points[v];
            let before: Vec<f64> = incident[v]
                .iter()
                .map(|&k| signed_area(points[triangles[k][0]], points[triangles[k][1]], points[triangles[k][2]]))
                .collect();
            points[v] = target;
            let ok = incident[v].iter().zip(&before).all(|(&k, &a0)| {
                let t = triangles[k];
                signed_area(points[t[0]], points[t[1]], points[t[2]]) > 0.2 * a0
            });
            if !ok {
                points[v] = old;
            }
        }
    }
}

fn drop_unused_nodes(dim: usize, coords: Vec<f64>, cells: Vec<usize>, regions: Vec<Region>) -> Result<Mesh> {
    let n = coords.len() / dim;
    let mut used = vec![usize::MAX; n];
    let mut next = 0;
    for &v in &cells {
        if used[v] == usize::MAX {
            used[v] = 0;
        }
    }
    let mut new_coords = Vec::with_capacity(coords.len());
    for i in 0..n {
        if used[i] != usize::MAX {
            used[i] = next;
            next += 1;
            new_coords.extend_from_slice(&coords[dim * i..dim * (i + 1)]);
        }
    }
    let cells = cells.into_iter().map(|v| used[v]).collect();
    Mesh::new(dim, new_coords, cells, regions)
}
