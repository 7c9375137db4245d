//! Crack-conforming triangulation of the disk domain.
//!
//! The mesher places graded point sets along the domain boundary, segment
//! midlines (zero-thickness mode) or strip outlines (resolved mode) and disk
//! boundaries, fills the rest with a multi-level jittered grid following a
//! sizing field, and triangulates with a constrained Delaunay triangulation.
//! In zero-thickness mode the interior nodes of every segment are duplicated
//! into plus/minus copies so the potential can jump across the crack;
//! segment endpoints stay single, matching the crack-tip topology of a slit.

use std::collections::{BTreeSet, HashMap};

use spade::{ConstrainedDelaunayTriangulation, Point2 as SpadePoint, Triangulation};

use super::{GeometryError, Phantom};
use crate::{Point, Vec2};

/// Which forward model the mesh is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshMode {
    /// Segments are curves carried by duplicated node pairs.
    ZeroThickness,
    /// Strips are meshed as thin rectangular subdomains.
    Resolved,
}

#[derive(Debug, Clone)]
pub struct MeshOptions {
    /// Target edge length away from inclusions.
    pub h: f64,
    pub mode: MeshMode,
    /// Feature edges are refined to `h / feature_refinement` (grading 4:1).
    pub feature_refinement: f64,
    /// Growth of the sizing field per unit distance from a feature.
    pub grade_slope: f64,
    /// Element layers across each resolved strip (>= 3).
    pub layers_across: usize,
    /// Max in-strip element aspect ratio away from the tips.
    pub strip_aspect: f64,
    /// Laplacian smoothing sweeps on free interior points.
    pub smoothing_iters: usize,
    /// minimum point count on each disk ring; the polygon bias of the disk's
    /// far-field response scales like (2 pi / n)^2
    pub disk_ring_min: usize,
    /// Pixel grid dimension (n x n Cartesian grid clipped to the disk).
    pub pixel_n: usize,
}

impl MeshOptions {
    pub fn zero_thickness(h: f64) -> Self {
        Self {
            h,
            mode: MeshMode::ZeroThickness,
            feature_refinement: 4.0,
            grade_slope: 0.85,
            layers_across: 3,
            strip_aspect: 3.0,
            smoothing_iters: 2,
            disk_ring_min: 32,
            pixel_n: 32,
        }
    }

    pub fn resolved(h: f64) -> Self {
        Self {
            mode: MeshMode::Resolved,
            ..Self::zero_thickness(h)
        }
    }
}

/// Material region of a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Background,
    Insulator(usize),
    Disk(usize),
}

/// Duplicated interface node: `minus` and `plus` share coordinates but are
/// distinct indices; `arclength` is measured from the segment's `p` endpoint.
#[derive(Debug, Clone, Copy)]
pub struct CrackPair {
    pub minus: usize,
    pub plus: usize,
    pub segment: usize,
    pub arclength: f64,
}

/// One node of a crack chain; at the segment tips `plus == minus`.
#[derive(Debug, Clone, Copy)]
pub struct ChainVertex {
    pub s: f64,
    pub plus: usize,
    pub minus: usize,
}

/// Ordered interface nodes of one segment, tips included.
#[derive(Debug, Clone)]
pub struct CrackChain {
    pub segment: usize,
    pub vertices: Vec<ChainVertex>,
}

/// Cartesian pixel grid clipped to the disk (cells whose center lies inside).
#[derive(Debug, Clone)]
pub struct Pixelation {
    pub nx: usize,
    pub ny: usize,
    pub radius: f64,
    cells: Vec<PixelCell>,
    grid: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Copy)]
pub struct PixelCell {
    pub ix: usize,
    pub iy: usize,
    pub center: Point,
}

impl Pixelation {
    pub fn square(n: usize, radius: f64) -> Self {
        let mut cells = Vec::new();
        let mut grid = vec![None; n * n];
        let w = 2.0 * radius / n as f64;
        for iy in 0..n {
            for ix in 0..n {
                let center = Point::new(
                    -radius + (ix as f64 + 0.5) * w,
                    -radius + (iy as f64 + 0.5) * w,
                );
                if center.coords.norm() < radius {
                    grid[iy * n + ix] = Some(cells.len());
                    cells.push(PixelCell { ix, iy, center });
                }
            }
        }
        Self {
            nx: n,
            ny: n,
            radius,
            cells,
            grid,
        }
    }

    /// Number of active pixels M.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[PixelCell] {
        &self.cells
    }

    pub fn cell_width(&self) -> f64 {
        2.0 * self.radius / self.nx as f64
    }

    /// Active pixel containing `p`, if any.
    pub fn locate(&self, p: Point) -> Option<usize> {
        let w = self.cell_width();
        let fx = (p.x + self.radius) / w;
        let fy = (p.y + self.radius) / w;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx as usize, fy as usize);
        if ix >= self.nx || iy >= self.ny {
            return None;
        }
        self.grid[iy * self.nx + ix]
    }

    /// Active pixel with the nearest center (fallback for boundary slivers).
    pub fn nearest_active(&self, p: Point) -> usize {
        self.cells
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let da = (a.center - p).norm_squared();
                let db = (b.center - p).norm_squared();
                da.partial_cmp(&db).unwrap()
            })
            .map(|(i, _)| i)
            .expect("pixelation has no active cells")
    }
}

/// Conforming triangulation of the phantom domain.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub regions: Vec<Region>,
    pub crack_pairs: Vec<CrackPair>,
    pub crack_chains: Vec<CrackChain>,
    /// Consecutive boundary node pairs, counterclockwise around the domain.
    pub boundary_edges: Vec<(usize, usize)>,
    /// Active pixel index per triangle.
    pub pixel_map: Vec<usize>,
    pub pixelation: Pixelation,
    pub target_h: f64,
}

impl Mesh {
    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        triangle_area(self.nodes[a], self.nodes[b], self.nodes[c])
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t];
        Point::new(
            (self.nodes[a].x + self.nodes[b].x + self.nodes[c].x) / 3.0,
            (self.nodes[a].y + self.nodes[b].y + self.nodes[c].y) / 3.0,
        )
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Shoelace area of the boundary polygon.
    pub fn polygon_area(&self) -> f64 {
        let mut sum = 0.0;
        for &(a, b) in &self.boundary_edges {
            let pa = self.nodes[a];
            let pb = self.nodes[b];
            sum += pa.x * pb.y - pb.x * pa.y;
        }
        0.5 * sum
    }

    /// Boundary node indices in counterclockwise order.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        self.boundary_edges.iter().map(|&(a, _)| a).collect()
    }

    /// Copy of the mesh with the given disks' regions reassigned to the
    /// background material: the identical FEM space with the inclusion
    /// switched off, for isolating one inclusion's data signature.
    pub fn with_neutralized_disks(&self, disks: &[usize]) -> Mesh {
        let mut out = self.clone();
        for r in out.regions.iter_mut() {
            if let Region::Disk(k) = r {
                if disks.contains(k) {
                    *r = Region::Background;
                }
            }
        }
        out
    }

    /// Lumped boundary measure per boundary node (half the two edge lengths).
    pub fn boundary_weights(&self) -> HashMap<usize, f64> {
        let mut w = HashMap::new();
        for &(a, b) in &self.boundary_edges {
            let len = (self.nodes[b] - self.nodes[a]).norm();
            *w.entry(a).or_insert(0.0) += 0.5 * len;
            *w.entry(b).or_insert(0.0) += 0.5 * len;
        }
        w
    }
}

fn triangle_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y))
}

fn min_angle(a: Point, b: Point, c: Point) -> f64 {
    let la = (c - b).norm();
    let lb = (a - c).norm();
    let lc = (b - a).norm();
    let angle = |opp: f64, s1: f64, s2: f64| {
        (((s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2)).clamp(-1.0, 1.0)).acos()
    };
    angle(la, lb, lc).min(angle(lb, lc, la)).min(angle(lc, la, lb))
}

/// Zero-thickness mesh with duplicated crack nodes (the default model mesh).
pub fn mesh_domain(phantom: &Phantom, h: f64) -> Result<Mesh, GeometryError> {
    mesh_with(phantom, &MeshOptions::zero_thickness(h))
}

/// Mesh resolving every strip with at least `layers_across` elements across
/// its thickness.
pub fn mesh_resolved(phantom: &Phantom, h: f64) -> Result<Mesh, GeometryError> {
    mesh_with(phantom, &MeshOptions::resolved(h))
}

pub fn mesh_with(phantom: &Phantom, opts: &MeshOptions) -> Result<Mesh, GeometryError> {
    if !(opts.h > 0.0) || opts.h >= phantom.domain_radius / 4.0 {
        return Err(GeometryError::InvalidMeshSize(opts.h));
    }
    if opts.mode == MeshMode::Resolved {
        for (i, a) in phantom.insulators.iter().enumerate() {
            for b in phantom.insulators.iter().skip(i + 1) {
                if a.shares_endpoint(b) {
                    return Err(GeometryError::MeshFailure(
                        "resolved mode does not support chained insulators (overlapping strip outlines)".into(),
                    ));
                }
            }
        }
    }
    let mut last_issue = String::new();
    for attempt in 0..3 {
        let mut extra: Vec<Point> = Vec::new();
        let mut mesh = try_build(phantom, opts, attempt, &extra)?;
        // Delaunay refinement: insert circumcenters of poorly shaped
        // background triangles and retriangulate
        for _round in 0..3 {
            let inserts = refinement_points(&mesh, phantom, opts, &extra);
            if inserts.is_empty() {
                break;
            }
            extra.extend(inserts);
            mesh = try_build(phantom, opts, attempt, &extra)?;
        }
        match check_quality(&mesh, phantom, opts) {
            Ok(()) => return Ok(mesh),
            Err(msg) => last_issue = msg,
        }
    }
    Err(GeometryError::MeshFailure(format!(
        "quality below threshold after retries: {last_issue}"
    )))
}

fn circumcenter(a: Point, b: Point, c: Point) -> Option<Point> {
    let d = 2.0 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
    if d.abs() < 1e-300 {
        return None;
    }
    let (a2, b2, c2) = (
        a.coords.norm_squared(),
        b.coords.norm_squared(),
        c.coords.norm_squared(),
    );
    let ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
    let uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
    Some(Point::new(ux, uy))
}

/// Whether a triangle touches a feature polyline (strip outline, segment
/// chain or disk ring); such transition elements are allowed to be flatter.
fn touches_feature(phantom: &Phantom, opts: &MeshOptions, mesh: &Mesh, t: usize) -> bool {
    let tol = 1e-9 * phantom.domain_radius;
    mesh.triangles[t].iter().any(|&v| {
        let p = mesh.nodes[v];
        phantom.insulators.iter().any(|ins| match opts.mode {
            MeshMode::ZeroThickness => ins.distance_to_midline(p) < tol,
            MeshMode::Resolved => {
                let (s, n) = ins.local(p);
                (n.abs() - ins.half_thickness).abs() < tol
                    && (-tol..=ins.length() + tol).contains(&s)
                    || ins.distance_to_strip(p) < tol
            }
        }) || phantom
            .disks
            .iter()
            .any(|d| ((p - d.center).norm() - d.radius).abs() < tol)
    })
}

/// Circumcenters of badly shaped background triangles, filtered by the same
/// margins as ordinary cloud points.
fn refinement_points(
    mesh: &Mesh,
    phantom: &Phantom,
    opts: &MeshOptions,
    already: &[Point],
) -> Vec<Point> {
    let threshold = 8.0_f64.to_radians();
    let mut out: Vec<Point> = Vec::new();
    let features = feature_sizes(phantom, opts);
    for t in 0..mesh.triangles.len() {
        if mesh.regions[t] != Region::Background {
            continue;
        }
        let [a, b, c] = mesh.triangles[t];
        let (pa, pb, pc) = (mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]);
        if min_angle(pa, pb, pc) >= threshold {
            continue;
        }
        let Some(cc) = circumcenter(pa, pb, pc) else {
            continue;
        };
        if cc.coords.norm() >= phantom.domain_radius
            || !accept_cloud_point(phantom, opts, &features, cc)
        {
            continue;
        }
        let rho = sizing(phantom, opts, &features, cc);
        let too_close = already
            .iter()
            .chain(out.iter())
            .any(|p| (p - cc).norm() < 0.35 * rho);
        if !too_close {
            out.push(cc);
        }
    }
    out
}

fn check_quality(mesh: &Mesh, phantom: &Phantom, opts: &MeshOptions) -> Result<(), String> {
    let area_floor = 1e-12 * opts.h * opts.h;
    for t in 0..mesh.triangles.len() {
        let area = mesh.triangle_area(t);
        if area <= area_floor {
            return Err(format!("triangle {t} area {area:.3e} below floor"));
        }
        // anisotropic elements are intended inside resolved strips and in the
        // transition layer touching a feature polyline
        if mesh.regions[t] == Region::Background && !touches_feature(phantom, opts, mesh, t) {
            let [a, b, c] = mesh.triangles[t];
            let ang = min_angle(mesh.nodes[a], mesh.nodes[b], mesh.nodes[c]);
            if ang < 5.0_f64.to_radians() {
                let c = mesh.centroid(t);
                return Err(format!(
                    "triangle {t} at ({:.4}, {:.4}) min angle {:.2} deg",
                    c.x,
                    c.y,
                    ang.to_degrees()
                ));
            }
        }
    }
    Ok(())
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn jitter(level: u32, ix: i64, iy: i64, attempt: u32) -> (f64, f64) {
    let key = (level as u64) << 56
        ^ (attempt as u64) << 48
        ^ ((ix as u64) & 0xff_ffff) << 24
        ^ ((iy as u64) & 0xff_ffff);
    let r = splitmix64(key);
    let a = ((r >> 32) as u32 as f64 / u32::MAX as f64) - 0.5;
    let b = ((r & 0xffff_ffff) as u32 as f64 / u32::MAX as f64) - 0.5;
    (0.4 * a, 0.4 * b)
}

/// Stations on `[0, len]` equidistributed in the `1/rho` metric. The station
/// count is `max(2, round(I))` with `I = integral of 1/rho`.
fn march_stations(len: f64, rho: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let fine = 4096;
    let ds = len / fine as f64;
    let mut cum = Vec::with_capacity(fine + 1);
    cum.push(0.0);
    let mut acc = 0.0;
    for i in 0..fine {
        let s_mid = (i as f64 + 0.5) * ds;
        acc += ds / rho(s_mid).max(1e-12);
        cum.push(acc);
    }
    let total = acc;
    let n = (total.round() as usize).max(2);
    let mut stations = Vec::with_capacity(n + 1);
    let mut idx = 0;
    for k in 0..=n {
        let target = total * k as f64 / n as f64;
        while idx + 1 < cum.len() && cum[idx + 1] < target {
            idx += 1;
        }
        let s = if k == 0 {
            0.0
        } else if k == n {
            len
        } else {
            let f = (target - cum[idx]) / (cum[idx + 1] - cum[idx]).max(1e-300);
            (idx as f64 + f) * ds
        };
        stations.push(s);
    }
    stations
}

/// Chain spacing along a zero-thickness segment: `h/4` near the tips growing
/// to `h/2` in the interior.
fn chain_spacing(h: f64, refine: f64, len: f64, s: f64) -> f64 {
    let tip = h / refine;
    let cap = h / 2.0;
    (tip + 0.5 * s.min(len - s)).min(cap).min(len / 2.0)
}

/// Column spacing along a resolved strip: isotropic near the tips, aspect-
/// bounded in the interior.
fn strip_spacing(base: f64, aspect: f64, h: f64, len: f64, s: f64) -> f64 {
    (base + 0.5 * s.min(len - s))
        .min(base * aspect)
        .min(h / 2.0)
}

struct FeatureSet {
    /// boundary ring spacing
    s_b: f64,
    n_b: usize,
    /// per-disk ring spacing
    disk_spacing: Vec<f64>,
    /// per-insulator strip base row height (resolved only)
    strip_base: Vec<f64>,
}

fn sizing(phantom: &Phantom, opts: &MeshOptions, f: &FeatureSet, x: Point) -> f64 {
    let slope = opts.grade_slope;
    let mut rho = opts.h;
    let d_boundary = (phantom.domain_radius - x.coords.norm()).max(0.0);
    rho = rho.min(f.s_b + slope * d_boundary);
    for (k, disk) in phantom.disks.iter().enumerate() {
        let d = ((x - disk.center).norm() - disk.radius).abs();
        // full-resolution collar out to one radius: the dipole near-field
        // varies on the scale of the disk itself
        let graded = (d - disk.radius).max(0.0);
        rho = rho.min(f.disk_spacing[k] + slope * graded);
    }
    for (k, ins) in phantom.insulators.iter().enumerate() {
        let (s, _) = ins.local(x);
        let s_cl = s.clamp(0.0, ins.length());
        match opts.mode {
            MeshMode::ZeroThickness => {
                let d = ins.distance_to_midline(x);
                let near = chain_spacing(opts.h, opts.feature_refinement, ins.length(), s_cl);
                rho = rho.min(near + slope * d);
            }
            MeshMode::Resolved => {
                let d = ins.distance_to_strip(x);
                let near =
                    strip_spacing(f.strip_base[k], opts.strip_aspect, opts.h, ins.length(), s_cl);
                rho = rho.min(near + slope * d);
            }
        }
    }
    rho
}

fn feature_sizes(phantom: &Phantom, opts: &MeshOptions) -> FeatureSet {
    let r = phantom.domain_radius;
    let h = opts.h;
    // boundary ring: spacing <= h and sagitta <= h^2
    let n_spacing = (2.0 * std::f64::consts::PI * r / h).ceil() as usize;
    let n_sagitta = if h * h < r {
        (std::f64::consts::PI / (1.0 - h * h / r).acos()).ceil() as usize
    } else {
        3
    };
    let n_b = n_spacing.max(n_sagitta).max(16);
    let s_b = 2.0 * std::f64::consts::PI * r / n_b as f64;

    let disk_spacing: Vec<f64> = phantom
        .disks
        .iter()
        .map(|d| {
            // the polygon bias of the disk response scales like (2 pi/n)^2
            let n = ((2.0 * std::f64::consts::PI * d.radius)
                / (h / opts.feature_refinement))
                .ceil()
                .max(opts.disk_ring_min as f64) as usize;
            2.0 * std::f64::consts::PI * d.radius / n as f64
        })
        .collect();
    let strip_base: Vec<f64> = phantom
        .insulators
        .iter()
        .map(|ins| 2.0 * ins.half_thickness / opts.layers_across as f64)
        .collect();
    FeatureSet {
        s_b,
        n_b,
        disk_spacing,
        strip_base,
    }
}

fn try_build(
    phantom: &Phantom,
    opts: &MeshOptions,
    attempt: u32,
    extra_points: &[Point],
) -> Result<Mesh, GeometryError> {
    let r = phantom.domain_radius;
    let h = opts.h;
    let features = feature_sizes(phantom, opts);

    let mut builder = CdtBuilder::new();

    // 1. boundary ring
    let mut boundary_ids = Vec::with_capacity(features.n_b);
    for i in 0..features.n_b {
        let th = 2.0 * std::f64::consts::PI * i as f64 / features.n_b as f64;
        boundary_ids.push(builder.point(Point::new(r * th.cos(), r * th.sin()), false));
    }
    for i in 0..features.n_b {
        builder.constraint(boundary_ids[i], boundary_ids[(i + 1) % features.n_b]);
    }

    // 2. insulating segments
    let mut chain_records: Vec<(usize, Vec<(f64, usize)>)> = Vec::new();
    for (k, ins) in phantom.insulators.iter().enumerate() {
        let len = ins.length();
        match opts.mode {
            MeshMode::ZeroThickness => {
                let rho = |s: f64| chain_spacing(h, opts.feature_refinement, len, s);
                let stations = march_stations(len, &rho);
                let mut chain = Vec::with_capacity(stations.len());
                for (j, &s) in stations.iter().enumerate() {
                    // snap the tips to the exact endpoints so chained corners dedupe
                    let p = if j == 0 {
                        ins.p
                    } else if j + 1 == stations.len() {
                        ins.q
                    } else {
                        ins.at(s)
                    };
                    chain.push((s, builder.point(p, false)));
                }
                for w in chain.windows(2) {
                    builder.constraint(w[0].1, w[1].1);
                }
                chain_records.push((k, chain));
            }
            MeshMode::Resolved => {
                let base = features.strip_base[k];
                let rho = |s: f64| strip_spacing(base, opts.strip_aspect, h, len, s);
                let stations = march_stations(len, &rho);
                let nu = ins.normal();
                let rows = opts.layers_across + 1;
                let mut grid = vec![vec![0usize; stations.len()]; rows];
                for (jrow, row) in grid.iter_mut().enumerate() {
                    let off = -ins.half_thickness
                        + 2.0 * ins.half_thickness * jrow as f64 / (rows - 1) as f64;
                    for (j, &s) in stations.iter().enumerate() {
                        row[j] = builder.point(ins.at(s) + nu * off, false);
                    }
                }
                // strip outline: top/bottom rows plus the two end caps
                for j in 0..stations.len() - 1 {
                    builder.constraint(grid[0][j], grid[0][j + 1]);
                    builder.constraint(grid[rows - 1][j], grid[rows - 1][j + 1]);
                }
                for jrow in 0..rows - 1 {
                    builder.constraint(grid[jrow][0], grid[jrow + 1][0]);
                    let lastc = stations.len() - 1;
                    builder.constraint(grid[jrow][lastc], grid[jrow + 1][lastc]);
                }
            }
        }
    }

    // 3. disk rings
    for (k, disk) in phantom.disks.iter().enumerate() {
        let n = (2.0 * std::f64::consts::PI * disk.radius / features.disk_spacing[k]).round()
            as usize;
        let mut ring = Vec::with_capacity(n);
        for i in 0..n {
            let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            ring.push(builder.point(
                Point::new(
                    disk.center.x + disk.radius * th.cos(),
                    disk.center.y + disk.radius * th.sin(),
                ),
                false,
            ));
        }
        for i in 0..n {
            builder.constraint(ring[i], ring[(i + 1) % n]);
        }
    }

    // 4. multi-level jittered interior cloud
    let rho_min = {
        let mut m: f64 = features.s_b;
        for &d in &features.disk_spacing {
            m = m.min(d);
        }
        for k in 0..phantom.insulators.len() {
            m = m.min(match opts.mode {
                MeshMode::ZeroThickness => h / opts.feature_refinement,
                MeshMode::Resolved => features.strip_base[k],
            });
        }
        m
    };
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut level: u32 = 0;
    loop {
        let cell = h / (1u64 << level) as f64;
        if cell < rho_min / sqrt2 {
            break;
        }
        let lo = cell / sqrt2;
        let hi = cell * sqrt2;
        // enumerate only cells that could have a sizing value in this band
        let cells = cells_for_band(phantom, opts, &features, cell, hi);
        for (ix, iy) in cells {
            let cx = (ix as f64 + 0.5) * cell;
            let cy = (iy as f64 + 0.5) * cell;
            let center = Point::new(cx, cy);
            if center.coords.norm() > r {
                continue;
            }
            let rho_c = sizing(phantom, opts, &features, center);
            if !(rho_c >= lo && rho_c < hi) {
                continue;
            }
            let (jx, jy) = jitter(level, ix, iy, attempt);
            let p = Point::new(cx + jx * cell, cy + jy * cell);
            if accept_cloud_point(phantom, opts, &features, p) {
                builder.point(p, true);
            }
        }
        level += 1;
        if level > 24 {
            break;
        }
    }

    // refinement points from previous rounds
    for &p in extra_points {
        builder.point(p, true);
    }

    // 5. triangulate
    let (mut nodes, mut triangles, movable) = builder.triangulate()?;

    // 6. Laplacian smoothing of cloud points on fixed topology
    smooth(&mut nodes, &triangles, &movable, opts.smoothing_iters);

    // enforce counterclockwise orientation
    for t in triangles.iter_mut() {
        if triangle_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]) < 0.0 {
            t.swap(1, 2);
        }
    }

    // 7. regions before crack duplication (geometric classification)
    let mut regions = vec![Region::Background; triangles.len()];
    for (t, tri) in triangles.iter().enumerate() {
        let c = Point::new(
            (nodes[tri[0]].x + nodes[tri[1]].x + nodes[tri[2]].x) / 3.0,
            (nodes[tri[0]].y + nodes[tri[1]].y + nodes[tri[2]].y) / 3.0,
        );
        for (k, disk) in phantom.disks.iter().enumerate() {
            if disk.contains(c) {
                regions[t] = Region::Disk(k);
            }
        }
        if opts.mode == MeshMode::Resolved {
            for (k, ins) in phantom.insulators.iter().enumerate() {
                if ins.contains(c) {
                    regions[t] = Region::Insulator(k);
                }
            }
        }
    }

    // 8. crack duplication
    let mut crack_pairs = Vec::new();
    let mut crack_chains = Vec::new();
    if opts.mode == MeshMode::ZeroThickness {
        duplicate_cracks(
            phantom,
            &chain_records,
            &mut nodes,
            &mut triangles,
            &mut crack_pairs,
            &mut crack_chains,
        );
    }

    // 9. boundary edges (counterclockwise by construction)
    let boundary_edges: Vec<(usize, usize)> = (0..features.n_b)
        .map(|i| (boundary_ids[i], boundary_ids[(i + 1) % features.n_b]))
        .collect();

    // 10. pixel map
    let pixelation = Pixelation::square(opts.pixel_n, r);
    let pixel_map: Vec<usize> = (0..triangles.len())
        .map(|t| {
            let tri = triangles[t];
            let c = Point::new(
                (nodes[tri[0]].x + nodes[tri[1]].x + nodes[tri[2]].x) / 3.0,
                (nodes[tri[0]].y + nodes[tri[1]].y + nodes[tri[2]].y) / 3.0,
            );
            pixelation.locate(c).unwrap_or_else(|| pixelation.nearest_active(c))
        })
        .collect();

    Ok(Mesh {
        nodes,
        triangles,
        regions,
        crack_pairs,
        crack_chains,
        boundary_edges,
        pixel_map,
        pixelation,
        target_h: h,
    })
}

/// Integer cells (at the given cell size) within the bands where the sizing
/// field can fall below `hi`: near features plus, at coarse levels, the whole
/// domain.
fn cells_for_band(
    phantom: &Phantom,
    opts: &MeshOptions,
    f: &FeatureSet,
    cell: f64,
    hi: f64,
) -> BTreeSet<(i64, i64)> {
    let r = phantom.domain_radius;
    let mut cells = BTreeSet::new();
    let mut add_box = |x0: f64, y0: f64, x1: f64, y1: f64| {
        let ix0 = (x0 / cell).floor() as i64;
        let ix1 = (x1 / cell).ceil() as i64;
        let iy0 = (y0 / cell).floor() as i64;
        let iy1 = (y1 / cell).ceil() as i64;
        for ix in ix0..ix1 {
            for iy in iy0..iy1 {
                cells.insert((ix, iy));
            }
        }
    };
    if hi >= opts.h {
        // coarsest band: cover the whole domain
        add_box(-r, -r, r, r);
        return cells;
    }
    let slope = opts.grade_slope;
    // boundary ring band
    let reach_b = ((hi - f.s_b) / slope).max(0.0) + cell;
    if reach_b > 0.0 && f.s_b < hi {
        // thin annulus near the boundary: cover with the full box only if coarse
        if reach_b > 0.25 * r {
            add_box(-r, -r, r, r);
        } else {
            // tile the annulus by walking the circle
            let steps = (2.0 * std::f64::consts::PI * r / cell).ceil() as usize + 4;
            for i in 0..steps {
                let th = 2.0 * std::f64::consts::PI * i as f64 / steps as f64;
                let p = Point::new(r * th.cos(), r * th.sin());
                add_box(
                    p.x - reach_b,
                    p.y - reach_b,
                    p.x + reach_b,
                    p.y + reach_b,
                );
            }
        }
    }
    for (k, disk) in phantom.disks.iter().enumerate() {
        if f.disk_spacing[k] < hi {
            let reach = (hi - f.disk_spacing[k]) / slope + cell;
            add_box(
                disk.center.x - disk.radius - reach,
                disk.center.y - disk.radius - reach,
                disk.center.x + disk.radius + reach,
                disk.center.y + disk.radius + reach,
            );
        }
    }
    for (k, ins) in phantom.insulators.iter().enumerate() {
        let near = match opts.mode {
            MeshMode::ZeroThickness => opts.h / opts.feature_refinement,
            MeshMode::Resolved => f.strip_base[k],
        };
        if near < hi {
            let reach = (hi - near) / slope + cell + ins.half_thickness;
            let (x0, x1) = (ins.p.x.min(ins.q.x), ins.p.x.max(ins.q.x));
            let (y0, y1) = (ins.p.y.min(ins.q.y), ins.p.y.max(ins.q.y));
            add_box(x0 - reach, y0 - reach, x1 + reach, y1 + reach);
        }
    }
    cells
}

/// Margin tests keeping cloud points away from feature point sets so the
/// constrained edges keep well-shaped neighborhoods.
fn accept_cloud_point(
    phantom: &Phantom,
    opts: &MeshOptions,
    f: &FeatureSet,
    p: Point,
) -> bool {
    let r = phantom.domain_radius;
    if r - p.coords.norm() < 0.62 * f.s_b {
        return false;
    }
    for (k, disk) in phantom.disks.iter().enumerate() {
        if ((p - disk.center).norm() - disk.radius).abs() < 0.62 * f.disk_spacing[k] {
            return false;
        }
    }
    for (k, ins) in phantom.insulators.iter().enumerate() {
        let (s, _) = ins.local(p);
        let s_cl = s.clamp(0.0, ins.length());
        match opts.mode {
            MeshMode::ZeroThickness => {
                let spacing = chain_spacing(opts.h, opts.feature_refinement, ins.length(), s_cl);
                if ins.distance_to_midline(p) < 0.62 * spacing {
                    return false;
                }
            }
            MeshMode::Resolved => {
                let spacing =
                    strip_spacing(f.strip_base[k], opts.strip_aspect, opts.h, ins.length(), s_cl);
                if ins.distance_to_strip(p) < 0.62 * spacing.min(opts.h / 2.0) {
                    return false;
                }
            }
        }
    }
    true
}

/// Deterministic CDT front-end: deduplicates exactly coincident points and
/// keeps track of which nodes are free to move during smoothing.
struct CdtBuilder {
    cdt: ConstrainedDelaunayTriangulation<SpadePoint<f64>>,
    dedup: HashMap<(u64, u64), usize>,
    handles: Vec<spade::handles::FixedVertexHandle>,
    movable: Vec<bool>,
    constraints: Vec<(usize, usize)>,
}

impl CdtBuilder {
    fn new() -> Self {
        Self {
            cdt: ConstrainedDelaunayTriangulation::new(),
            dedup: HashMap::new(),
            handles: Vec::new(),
            movable: Vec::new(),
            constraints: Vec::new(),
        }
    }

    /// Insert a point (deduplicating exact coincidences) and return its slot.
    fn point(&mut self, p: Point, movable: bool) -> usize {
        let key = (p.x.to_bits(), p.y.to_bits());
        if let Some(&id) = self.dedup.get(&key) {
            return id;
        }
        let handle = self
            .cdt
            .insert(SpadePoint::new(p.x, p.y))
            .expect("finite coordinates");
        let id = self.handles.len();
        self.handles.push(handle);
        self.movable.push(movable);
        self.dedup.insert(key, id);
        id
    }

    fn constraint(&mut self, a: usize, b: usize) {
        if a != b {
            self.constraints.push((a, b));
        }
    }

    /// Run the CDT and extract `(nodes, triangles, movable)` indexed by our
    /// slot ids.
    #[allow(clippy::type_complexity)]
    fn triangulate(mut self) -> Result<(Vec<Point>, Vec<[usize; 3]>, Vec<bool>), GeometryError> {
        for &(a, b) in &self.constraints {
            let ha = self.handles[a];
            let hb = self.handles[b];
            if ha != hb {
                self.cdt.add_constraint(ha, hb);
            }
        }
        // spade vertex index -> builder slot
        let mut slot_of = vec![usize::MAX; self.cdt.num_vertices()];
        for (slot, h) in self.handles.iter().enumerate() {
            slot_of[h.index()] = slot;
        }
        if slot_of.iter().any(|&s| s == usize::MAX) {
            return Err(GeometryError::MeshFailure(
                "triangulation contains unexpected vertices".into(),
            ));
        }
        let mut nodes = vec![Point::new(0.0, 0.0); self.handles.len()];
        for v in self.cdt.vertices() {
            let pos = v.position();
            nodes[slot_of[v.index()]] = Point::new(pos.x, pos.y);
        }
        let mut triangles = Vec::with_capacity(self.cdt.num_inner_faces());
        for f in self.cdt.inner_faces() {
            let vs = f.vertices();
            triangles.push([
                slot_of[vs[0].index()],
                slot_of[vs[1].index()],
                slot_of[vs[2].index()],
            ]);
        }
        Ok((nodes, triangles, self.movable))
    }
}

fn smooth(nodes: &mut [Point], triangles: &[[usize; 3]], movable: &[bool], iters: usize) {
    if iters == 0 {
        return;
    }
    let n = nodes.len();
    let mut neighbors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (t, tri) in triangles.iter().enumerate() {
        for i in 0..3 {
            neighbors[tri[i]].insert(tri[(i + 1) % 3]);
            neighbors[tri[i]].insert(tri[(i + 2) % 3]);
            incident[tri[i]].push(t);
        }
    }
    for _ in 0..iters {
        for v in 0..n {
            if !movable[v] || neighbors[v].is_empty() {
                continue;
            }
            let mut avg = Vec2::zeros();
            for &w in &neighbors[v] {
                avg += nodes[w].coords;
            }
            let candidate = Point::from(avg / neighbors[v].len() as f64);
            // only accept moves that keep all incident triangles safely valid
            let old = nodes[v];
            let min_before = incident[v]
                .iter()
                .map(|&t| {
                    triangle_area(
                        nodes[triangles[t][0]],
                        nodes[triangles[t][1]],
                        nodes[triangles[t][2]],
                    )
                    .abs()
                })
                .fold(f64::INFINITY, f64::min);
            nodes[v] = candidate;
            let min_after = incident[v]
                .iter()
                .map(|&t| {
                    triangle_area(
                        nodes[triangles[t][0]],
                        nodes[triangles[t][1]],
                        nodes[triangles[t][2]],
                    )
                })
                .fold(f64::INFINITY, f64::min);
            if min_after <= 0.3 * min_before {
                nodes[v] = old;
            }
        }
    }
}

/// Duplicate the interior nodes of every segment chain (reattaching the
/// minus-side triangles to new copies) and split shared chain corners into
/// one copy per angular sector, so closed insulating chains seal their
/// corners instead of leaking current through a shared point.
fn duplicate_cracks(
    phantom: &Phantom,
    chain_records: &[(usize, Vec<(f64, usize)>)],
    nodes: &mut Vec<Point>,
    triangles: &mut [[usize; 3]],
    crack_pairs: &mut Vec<CrackPair>,
    crack_chains: &mut Vec<CrackChain>,
) {
    // node -> incident triangles
    let mut incident: HashMap<usize, Vec<usize>> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for &v in tri {
            incident.entry(v).or_default().push(t);
        }
    }

    // interior chain nodes: one minus copy each
    let mut chain_vertices: Vec<Vec<ChainVertex>> = Vec::with_capacity(chain_records.len());
    for (seg_id, chain) in chain_records {
        let ins = &phantom.insulators[*seg_id];
        let dir = ins.q - ins.p;
        let mut vertices = Vec::with_capacity(chain.len());
        for (j, &(s, plus)) in chain.iter().enumerate() {
            let is_tip = j == 0 || j + 1 == chain.len();
            if is_tip {
                // resolved below (kept single for true tips, split for shared
                // corners)
                vertices.push(ChainVertex {
                    s,
                    plus,
                    minus: plus,
                });
                continue;
            }
            let minus = nodes.len();
            nodes.push(nodes[plus]);
            for &t in incident.get(&plus).map(|v| v.as_slice()).unwrap_or(&[]) {
                let tri = &mut triangles[t];
                let c = Point::new(
                    (nodes[tri[0]].x + nodes[tri[1]].x + nodes[tri[2]].x) / 3.0,
                    (nodes[tri[0]].y + nodes[tri[1]].y + nodes[tri[2]].y) / 3.0,
                );
                let side = dir.x * (c.y - ins.p.y) - dir.y * (c.x - ins.p.x);
                if side < 0.0 {
                    for v in tri.iter_mut() {
                        if *v == plus {
                            *v = minus;
                        }
                    }
                }
            }
            crack_pairs.push(CrackPair {
                minus,
                plus,
                segment: *seg_id,
                arclength: s,
            });
            vertices.push(ChainVertex { s, plus, minus });
        }
        chain_vertices.push(vertices);
    }

    // shared corners: every chain endpoint node used by >= 2 segments splits
    // into one copy per angular sector between consecutive crack directions
    let mut ends: HashMap<usize, Vec<(usize, bool)>> = HashMap::new(); // node -> (chain idx, is_start)
    for (ci, (_, chain)) in chain_records.iter().enumerate() {
        ends.entry(chain.first().unwrap().1).or_default().push((ci, true));
        ends.entry(chain.last().unwrap().1).or_default().push((ci, false));
    }
    for (&corner, members) in ends.iter() {
        if members.len() < 2 {
            continue;
        }
        let center = nodes[corner];
        // outgoing crack directions, sorted by angle
        let mut dirs: Vec<(f64, usize, bool)> = members
            .iter()
            .map(|&(ci, is_start)| {
                let ins = &phantom.insulators[chain_records[ci].0];
                let away = if is_start { ins.q - ins.p } else { ins.p - ins.q };
                (away.y.atan2(away.x), ci, is_start)
            })
            .collect();
        dirs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let k = dirs.len();
        // sector i spans angles (dirs[i], dirs[i+1]); sector 0 keeps the node
        let mut sector_nodes = vec![corner];
        for _ in 1..k {
            let copy = nodes.len();
            nodes.push(center);
            sector_nodes.push(copy);
        }
        let sector_of_angle = |theta: f64| -> usize {
            for i in 0..k {
                let lo = dirs[i].0;
                let hi = if i + 1 == k {
                    dirs[0].0 + 2.0 * std::f64::consts::PI
                } else {
                    dirs[i + 1].0
                };
                let mut t = theta;
                while t < lo {
                    t += 2.0 * std::f64::consts::PI;
                }
                if t < hi {
                    return i;
                }
            }
            0
        };
        for &t in incident.get(&corner).map(|v| v.as_slice()).unwrap_or(&[]) {
            let tri = &mut triangles[t];
            let c = Point::new(
                (nodes[tri[0]].x + nodes[tri[1]].x + nodes[tri[2]].x) / 3.0,
                (nodes[tri[0]].y + nodes[tri[1]].y + nodes[tri[2]].y) / 3.0,
            );
            let theta = (c.y - center.y).atan2(c.x - center.x);
            let sec = sector_of_angle(theta);
            for v in tri.iter_mut() {
                if *v == corner {
                    *v = sector_nodes[sec];
                }
            }
        }
        // wire the chain endpoints: the plus side of a segment lies left of
        // its own p->q direction, which at a start corner is the sector
        // counterclockwise of the away direction, and at an end corner the
        // sector clockwise of it
        for (di, &(_, ci, is_start)) in dirs.iter().enumerate() {
            let ccw_sector = di; // sector right after this direction (CCW)
            let cw_sector = (di + k - 1) % k; // sector right before it
            let (plus_sec, minus_sec) = if is_start {
                (ccw_sector, cw_sector)
            } else {
                (cw_sector, ccw_sector)
            };
            let vertices = &mut chain_vertices[ci];
            let idx = if is_start { 0 } else { vertices.len() - 1 };
            vertices[idx].plus = sector_nodes[plus_sec];
            vertices[idx].minus = sector_nodes[minus_sec];
        }
        for w in sector_nodes.windows(2) {
            crack_pairs.push(CrackPair {
                minus: w[1],
                plus: w[0],
                segment: chain_records[dirs[0].1].0,
                arclength: if dirs[0].2 {
                    0.0
                } else {
                    phantom.insulators[chain_records[dirs[0].1].0].length()
                },
            });
        }
    }

    for (ci, (seg_id, _)) in chain_records.iter().enumerate() {
        crack_chains.push(CrackChain {
            segment: *seg_id,
            vertices: std::mem::take(&mut chain_vertices[ci]),
        });
    }
}

/// Uniform-grid point locator over mesh triangles with barycentric output.
pub struct PointLocator<'a> {
    mesh: &'a Mesh,
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    cell: f64,
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let n_tri = mesh.triangles.len().max(1);
        let r = mesh
            .nodes
            .iter()
            .map(|p| p.coords.norm())
            .fold(0.0, f64::max);
        let nx = ((n_tri as f64).sqrt().ceil() as usize).clamp(8, 512);
        let (x0, y0) = (-r, -r);
        let cell = 2.0 * r / nx as f64;
        let mut buckets = vec![Vec::new(); nx * nx];
        for t in 0..mesh.triangles.len() {
            let [a, b, c] = mesh.triangles[t];
            let xs = [mesh.nodes[a].x, mesh.nodes[b].x, mesh.nodes[c].x];
            let ys = [mesh.nodes[a].y, mesh.nodes[b].y, mesh.nodes[c].y];
            let fx0 = ((xs.iter().cloned().fold(f64::INFINITY, f64::min) - x0) / cell).floor();
            let fx1 = ((xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x0) / cell).floor();
            let fy0 = ((ys.iter().cloned().fold(f64::INFINITY, f64::min) - y0) / cell).floor();
            let fy1 = ((ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - y0) / cell).floor();
            for ix in (fx0.max(0.0) as usize)..=(fx1.max(0.0) as usize).min(nx - 1) {
                for iy in (fy0.max(0.0) as usize)..=(fy1.max(0.0) as usize).min(nx - 1) {
                    buckets[iy * nx + ix].push(t);
                }
            }
        }
        Self {
            mesh,
            nx,
            ny: nx,
            x0,
            y0,
            cell,
            buckets,
        }
    }

    /// Find the triangle containing `p` with its barycentric coordinates.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let ix = (((p.x - self.x0) / self.cell).floor() as i64).clamp(0, self.nx as i64 - 1) as usize;
        let iy = (((p.y - self.y0) / self.cell).floor() as i64).clamp(0, self.ny as i64 - 1) as usize;
        let tol = -1e-10;
        for &t in &self.buckets[iy * self.nx + ix] {
            if let Some(bary) = self.barycentric(t, p, tol) {
                return Some((t, bary));
            }
        }
        // fall back to a ring search around the cell for edge-touching points
        for ring in 1..=2i64 {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    if dx.abs() != ring && dy.abs() != ring {
                        continue;
                    }
                    let jx = ix as i64 + dx;
                    let jy = iy as i64 + dy;
                    if jx < 0 || jy < 0 || jx >= self.nx as i64 || jy >= self.ny as i64 {
                        continue;
                    }
                    for &t in &self.buckets[jy as usize * self.nx + jx as usize] {
                        if let Some(bary) = self.barycentric(t, p, tol) {
                            return Some((t, bary));
                        }
                    }
                }
            }
        }
        None
    }

    fn barycentric(&self, t: usize, p: Point, tol: f64) -> Option<[f64; 3]> {
        let [a, b, c] = self.mesh.triangles[t];
        let (pa, pb, pc) = (self.mesh.nodes[a], self.mesh.nodes[b], self.mesh.nodes[c]);
        let area = triangle_area(pa, pb, pc);
        if area.abs() < 1e-300 {
            return None;
        }
        let l0 = triangle_area(p, pb, pc) / area;
        let l1 = triangle_area(pa, p, pc) / area;
        let l2 = 1.0 - l0 - l1;
        if l0 >= tol && l1 >= tol && l2 >= tol {
            Some([l0, l1, l2])
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admittivity::MaterialSpec;
    use crate::geometry::{build_phantom, ConductiveDisk, PhantomSpec, ThinInsulatorSpec};
    use std::collections::HashSet;

    fn phantom_with(insulators: Vec<ThinInsulatorSpec>, disks: Vec<ConductiveDisk>) -> Phantom {
        build_phantom(&PhantomSpec {
            domain_radius: 1.0,
            d0: 0.1,
            materials: MaterialSpec::default(),
            insulators,
            disks,
        })
        .unwrap()
    }

    fn one_segment(delta: f64) -> Phantom {
        phantom_with(
            vec![ThinInsulatorSpec {
                p: [-0.25, 0.0],
                q: [0.25, 0.0],
                delta,
            }],
            vec![],
        )
    }

    #[test]
    fn homogeneous_disk_mesh() {
        let phantom = phantom_with(vec![], vec![]);
        let mesh = mesh_domain(&phantom, 0.1).unwrap();
        assert!(mesh.crack_pairs.is_empty());
        // Euler characteristic of a disk: V - E + F = 1
        let mut edges = HashSet::new();
        for tri in &mesh.triangles {
            for i in 0..3 {
                let a = tri[i];
                let b = tri[(i + 1) % 3];
                edges.insert((a.min(b), a.max(b)));
            }
        }
        let euler =
            mesh.nodes.len() as i64 - edges.len() as i64 + mesh.triangles.len() as i64;
        assert_eq!(euler, 1);
        // triangle areas tile the boundary polygon exactly
        let rel = (mesh.total_area() - mesh.polygon_area()).abs() / mesh.polygon_area();
        assert!(rel < 1e-12, "area mismatch {rel:.3e}");
    }

    #[test]
    fn crack_pairs_coordinates_and_count() {
        let phantom = one_segment(0.005);
        let mesh = mesh_domain(&phantom, 0.05).unwrap();
        assert!(
            mesh.crack_pairs.len() >= 9,
            "expected >= 9 crack pairs, got {}",
            mesh.crack_pairs.len()
        );
        for pair in &mesh.crack_pairs {
            assert_ne!(pair.minus, pair.plus);
            assert_eq!(mesh.nodes[pair.minus], mesh.nodes[pair.plus]);
        }
        // independent oracle: station count from the 1/rho arclength integral
        let len = 0.5;
        let h = 0.05;
        let fine = 200_000;
        let mut integral = 0.0;
        for i in 0..fine {
            let s = (i as f64 + 0.5) * len / fine as f64;
            integral += (len / fine as f64) / chain_spacing(h, 4.0, len, s);
        }
        let expected_pairs = integral.round() as i64 - 1;
        assert!(
            (mesh.crack_pairs.len() as i64 - expected_pairs).abs() <= 2,
            "pairs {} vs oracle {}",
            mesh.crack_pairs.len(),
            expected_pairs
        );
    }

    #[test]
    fn halving_h_doubles_crack_pairs() {
        let phantom = one_segment(0.005);
        let coarse = mesh_domain(&phantom, 0.05).unwrap().crack_pairs.len() as i64;
        let fine = mesh_domain(&phantom, 0.025).unwrap().crack_pairs.len() as i64;
        assert!(
            (fine - 2 * coarse).abs() <= 2,
            "coarse {coarse}, fine {fine}"
        );
    }

    #[test]
    fn crack_is_topologically_two_sided() {
        let phantom = one_segment(0.005);
        let mesh = mesh_domain(&phantom, 0.05).unwrap();
        // adjacency graph over nodes, excluding segment tip nodes
        let tips: HashSet<usize> = mesh
            .crack_chains
            .iter()
            .flat_map(|c| {
                [
                    c.vertices.first().unwrap().plus,
                    c.vertices.last().unwrap().plus,
                ]
            })
            .collect();
        let mut adj: Vec<HashSet<usize>> = vec![HashSet::new(); mesh.nodes.len()];
        for tri in &mesh.triangles {
            for i in 0..3 {
                let a = tri[i];
                let b = tri[(i + 1) % 3];
                if !tips.contains(&a) && !tips.contains(&b) {
                    adj[a].insert(b);
                    adj[b].insert(a);
                }
            }
        }
        for pair in &mesh.crack_pairs {
            assert!(
                !adj[pair.minus].contains(&pair.plus),
                "plus and minus copies are adjacent away from the tips"
            );
        }
    }

    #[test]
    fn triangles_reference_only_their_side() {
        let phantom = one_segment(0.005);
        let mesh = mesh_domain(&phantom, 0.05).unwrap();
        let ins = &phantom.insulators[0];
        let plus_nodes: HashSet<usize> = mesh.crack_pairs.iter().map(|p| p.plus).collect();
        let minus_nodes: HashSet<usize> = mesh.crack_pairs.iter().map(|p| p.minus).collect();
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let c = mesh.centroid(t);
            let (_, n) = ins.local(c);
            for &v in tri {
                if plus_nodes.contains(&v) {
                    assert!(n > 0.0, "plus-side node in minus-side triangle");
                }
                if minus_nodes.contains(&v) {
                    assert!(n < 0.0, "minus-side node in plus-side triangle");
                }
            }
        }
    }

    #[test]
    fn resolved_mesh_resolves_strip() {
        let phantom = one_segment(0.01);
        let mesh = mesh_resolved(&phantom, 0.08).unwrap();
        assert!(mesh.crack_pairs.is_empty());
        let ins = &phantom.insulators[0];
        // strip subdomain area matches the rectangle
        let strip_area: f64 = (0..mesh.triangles.len())
            .filter(|&t| mesh.regions[t] == Region::Insulator(0))
            .map(|t| mesh.triangle_area(t))
            .sum();
        let exact = 2.0 * ins.half_thickness * ins.length();
        assert!(
            (strip_area - exact).abs() / exact < 1e-9,
            "strip area {strip_area} vs {exact}"
        );
        // at least 3 element layers across: nodes inside the strip occupy
        // layers_across + 1 distinct normal offsets
        let mut offsets = Vec::new();
        for p in &mesh.nodes {
            let (s, n) = ins.local(*p);
            if s > 0.05 && s < ins.length() - 0.05 && n.abs() <= ins.half_thickness + 1e-12 {
                if !offsets.iter().any(|&o: &f64| (o - n).abs() < 1e-9) {
                    offsets.push(n);
                }
            }
        }
        assert!(offsets.len() >= 4, "found {} offset rows", offsets.len());
    }

    #[test]
    fn disk_region_area() {
        let disk = ConductiveDisk::new(Point::new(0.3, -0.2), 0.15).unwrap();
        let phantom = phantom_with(vec![], vec![disk]);
        let mesh = mesh_domain(&phantom, 0.08).unwrap();
        let disk_area: f64 = (0..mesh.triangles.len())
            .filter(|&t| mesh.regions[t] == Region::Disk(0))
            .map(|t| mesh.triangle_area(t))
            .sum();
        let exact = std::f64::consts::PI * 0.15 * 0.15;
        // polygonal approximation of the ring underestimates the disk slightly
        assert!(
            (disk_area - exact).abs() / exact < 0.02,
            "disk area {disk_area} vs {exact}"
        );
    }

    #[test]
    fn orientation_and_quality() {
        let phantom = phantom_with(
            vec![ThinInsulatorSpec {
                p: [-0.4, 0.2],
                q: [0.1, 0.35],
                delta: 5e-4,
            }],
            vec![ConductiveDisk::new(Point::new(0.3, -0.3), 0.1).unwrap()],
        );
        let mesh = mesh_domain(&phantom, 0.07).unwrap();
        let floor = 1e-12 * 0.07 * 0.07;
        for t in 0..mesh.triangles.len() {
            assert!(mesh.triangle_area(t) > floor);
        }
        let rel = (mesh.total_area() - mesh.polygon_area()).abs() / mesh.polygon_area();
        assert!(rel < 1e-12);
    }

    #[test]
    fn rejects_bad_h() {
        let phantom = phantom_with(vec![], vec![]);
        assert!(matches!(
            mesh_domain(&phantom, 0.3),
            Err(GeometryError::InvalidMeshSize(_))
        ));
        assert!(matches!(
            mesh_domain(&phantom, 0.0),
            Err(GeometryError::InvalidMeshSize(_))
        ));
    }

    #[test]
    fn determinism() {
        let phantom = one_segment(0.005);
        let a = mesh_domain(&phantom, 0.06).unwrap();
        let b = mesh_domain(&phantom, 0.06).unwrap();
        assert_eq!(a.nodes.len(), b.nodes.len());
        assert_eq!(a.triangles, b.triangles);
        for (p, q) in a.nodes.iter().zip(b.nodes.iter()) {
            assert_eq!(p, q);
        }
    }

    #[test]
    fn point_locator_finds_interior_points() {
        let phantom = phantom_with(vec![], vec![]);
        let mesh = mesh_domain(&phantom, 0.1).unwrap();
        let locator = PointLocator::new(&mesh);
        for &(x, y) in &[(0.0, 0.0), (0.5, 0.3), (-0.7, 0.1), (0.2, -0.6)] {
            let (t, bary) = locator.locate(Point::new(x, y)).expect("point inside");
            let [a, b, c] = mesh.triangles[t];
            let p = mesh.nodes[a].coords * bary[0]
                + mesh.nodes[b].coords * bary[1]
                + mesh.nodes[c].coords * bary[2];
            assert!((p - Vec2::new(x, y)).norm() < 1e-12);
        }
        assert!(locator.locate(Point::new(2.0, 0.0)).is_none());
    }

    #[test]
    fn chained_wall_meshes_with_shared_corners() {
        let corners = [[0.0, -0.3], [0.6, -0.3], [0.6, 0.3], [0.0, 0.3]];
        let phantom = build_phantom(&PhantomSpec {
            domain_radius: 1.0,
            d0: 0.15,
            materials: MaterialSpec::default(),
            insulators: (0..4)
                .map(|i| ThinInsulatorSpec {
                    p: corners[i],
                    q: corners[(i + 1) % 4],
                    delta: 5e-4,
                })
                .collect(),
            disks: vec![],
        })
        .unwrap();
        let mesh = mesh_domain(&phantom, 0.07).unwrap();
        assert_eq!(mesh.crack_chains.len(), 4);
        // shared corners are sealed: both chain ends carry split copies, and
        // neighboring chains agree on the inside/outside copies
        for chain in &mesh.crack_chains {
            let first = chain.vertices.first().unwrap();
            let last = chain.vertices.last().unwrap();
            assert_ne!(first.plus, first.minus);
            assert_ne!(last.plus, last.minus);
        }
        // the rectangle is traversed counterclockwise, so every segment's
        // plus side faces the inside; corner copies must chain consistently
        for i in 0..4 {
            let end_of_i = *mesh.crack_chains[i].vertices.last().unwrap();
            let start_of_next = *mesh.crack_chains[(i + 1) % 4].vertices.first().unwrap();
            assert_eq!(end_of_i.plus, start_of_next.plus);
            assert_eq!(end_of_i.minus, start_of_next.minus);
        }
        let rel = (mesh.total_area() - mesh.polygon_area()).abs() / mesh.polygon_area();
        assert!(rel < 1e-12);
    }

    #[test]
    fn sealed_box_blocks_interior_at_low_frequency() {
        // a closed wall at near-zero lambda_c isolates its interior: the
        // interior potential is nearly constant
        let corners = [[0.1, -0.25], [0.6, -0.25], [0.6, 0.25], [0.1, 0.25]];
        let phantom = build_phantom(&PhantomSpec {
            domain_radius: 1.0,
            d0: 0.15,
            materials: MaterialSpec::default(),
            insulators: (0..4)
                .map(|i| ThinInsulatorSpec {
                    p: corners[i],
                    q: corners[(i + 1) % 4],
                    delta: 5e-4,
                })
                .collect(),
            disks: vec![],
        })
        .unwrap();
        let mesh = mesh_domain(&phantom, 0.07).unwrap();
        let g = crate::forward::NeumannCurrent::uniform_field(&mesh, crate::Vec2::new(1.0, 0.0));
        let omega = crate::admittivity::Frequency::from_hz(10.0).unwrap();
        let field =
            crate::forward::solve_zero_thickness(&mesh, &phantom, omega, &g).unwrap();
        // potential range over nodes strictly inside the box vs global range
        let inside = |p: &Point| {
            p.x > 0.12 && p.x < 0.58 && p.y > -0.23 && p.y < 0.23
        };
        let vals: Vec<f64> = mesh
            .nodes
            .iter()
            .zip(field.u.iter())
            .filter(|(p, _)| inside(p))
            .map(|(_, u)| u.re)
            .collect();
        assert!(vals.len() > 10);
        let range = vals.iter().cloned().fold(f64::MIN, f64::max)
            - vals.iter().cloned().fold(f64::MAX, f64::min);
        let global: Vec<f64> = field.u.iter().map(|u| u.re).collect();
        let global_range = global.iter().cloned().fold(f64::MIN, f64::max)
            - global.iter().cloned().fold(f64::MAX, f64::min);
        assert!(
            range < 0.02 * global_range,
            "interior range {range:.3e} vs global {global_range:.3e}"
        );
    }
}
