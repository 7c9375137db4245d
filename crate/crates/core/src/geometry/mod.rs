//! Phantom geometry: thin insulating segments, small conductive disks,
//! separation validation and crack-conforming triangulation.
//!
//! Thin insulators are uniform-thickness neighborhoods of straight segments;
//! distances between inclusions are measured between segment midlines and
//! full disks. Insulators that share an endpoint form a chain (e.g. a closed
//! rectangular wall) and are exempt from the mutual separation requirement.

mod mesh;

pub use mesh::{
    mesh_domain, mesh_resolved, mesh_with, CrackChain, CrackPair, Mesh, MeshMode, MeshOptions,
    PixelCell, Pixelation, PointLocator, Region,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admittivity::MaterialSpec;
use crate::{Point, Vec2};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid thin insulator: {0}")]
    InvalidInsulator(String),
    #[error("invalid disk: {0}")]
    InvalidDisk(String),
    #[error("invalid phantom: {0}")]
    InvalidPhantom(String),
    #[error("separation violation between {a} and {b}: distance {distance:.6} < d0 = {d0:.6}")]
    SeparationViolation {
        a: InclusionRef,
        b: InclusionRef,
        distance: f64,
        d0: f64,
    },
    #[error("{0} touches or crosses the domain boundary")]
    OutOfDomain(InclusionRef),
    #[error("mesh generation failed: {0}")]
    MeshFailure(String),
    #[error("mesh edge length must satisfy 0 < h < domain_radius/4 (got {0})")]
    InvalidMeshSize(f64),
}

/// Identifies one party of a pairwise distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InclusionRef {
    Insulator(usize),
    Disk(usize),
    Boundary,
}

impl std::fmt::Display for InclusionRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InclusionRef::Insulator(k) => write!(f, "insulator {k}"),
            InclusionRef::Disk(k) => write!(f, "disk {k}"),
            InclusionRef::Boundary => write!(f, "domain boundary"),
        }
    }
}

/// Thin insulating strip: the `half_thickness`-neighborhood of segment `p q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThinInsulator {
    pub p: Point,
    pub q: Point,
    pub half_thickness: f64,
}

impl ThinInsulator {
    pub fn new(p: Point, q: Point, half_thickness: f64) -> Result<Self, GeometryError> {
        let len = (q - p).norm();
        if !(len > 0.0) {
            return Err(GeometryError::InvalidInsulator(
                "endpoints must be distinct".into(),
            ));
        }
        if !(half_thickness > 0.0) {
            return Err(GeometryError::InvalidInsulator(
                "half_thickness must be positive".into(),
            ));
        }
        if half_thickness > len / 20.0 {
            return Err(GeometryError::InvalidInsulator(format!(
                "half_thickness {half_thickness} too large for segment of length {len} (limit {})",
                len / 20.0
            )));
        }
        Ok(Self {
            p,
            q,
            half_thickness,
        })
    }

    pub fn length(&self) -> f64 {
        (self.q - self.p).norm()
    }

    /// Unit tangent from `p` to `q`.
    pub fn tangent(&self) -> Vec2 {
        (self.q - self.p).normalize()
    }

    /// Unit normal, tangent rotated by +90 degrees. The "plus" side of the
    /// crack lies in this direction.
    pub fn normal(&self) -> Vec2 {
        let t = self.tangent();
        Vec2::new(-t.y, t.x)
    }

    /// Point on the midline at arclength `s` from `p`.
    pub fn at(&self, s: f64) -> Point {
        self.p + self.tangent() * s
    }

    /// Local coordinates of `x`: (arclength along midline, signed offset).
    pub fn local(&self, x: Point) -> (f64, f64) {
        let d = x - self.p;
        (d.dot(&self.tangent()), d.dot(&self.normal()))
    }

    /// Whether `x` lies in the closed strip.
    pub fn contains(&self, x: Point) -> bool {
        let (s, n) = self.local(x);
        s >= 0.0 && s <= self.length() && n.abs() <= self.half_thickness
    }

    /// Distance from `x` to the midline segment.
    pub fn distance_to_midline(&self, x: Point) -> f64 {
        point_segment_distance(x, self.p, self.q)
    }

    /// Distance from `x` to the strip rectangle (0 inside).
    pub fn distance_to_strip(&self, x: Point) -> f64 {
        let (s, n) = self.local(x);
        let ds = if s < 0.0 {
            -s
        } else if s > self.length() {
            s - self.length()
        } else {
            0.0
        };
        let dn = (n.abs() - self.half_thickness).max(0.0);
        (ds * ds + dn * dn).sqrt()
    }

    fn shares_endpoint(&self, other: &ThinInsulator) -> bool {
        let tol = 1e-12;
        let eq = |a: Point, b: Point| (a - b).norm() <= tol;
        eq(self.p, other.p) || eq(self.p, other.q) || eq(self.q, other.p) || eq(self.q, other.q)
    }
}

/// Small conductive disk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConductiveDisk {
    pub center: Point,
    pub radius: f64,
}

impl ConductiveDisk {
    pub fn new(center: Point, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) {
            return Err(GeometryError::InvalidDisk("radius must be positive".into()));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, x: Point) -> bool {
        (x - self.center).norm() <= self.radius
    }
}

/// Validated phantom: disk domain of given radius with well-separated
/// inclusions.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub domain_radius: f64,
    pub insulators: Vec<ThinInsulator>,
    pub disks: Vec<ConductiveDisk>,
    pub materials: MaterialSpec,
    pub separation: f64,
}

/// On-disk phantom description (`PhantomSpec` JSON file).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub domain_radius: f64,
    pub d0: f64,
    pub materials: MaterialSpec,
    #[serde(default)]
    pub insulators: Vec<ThinInsulatorSpec>,
    #[serde(default)]
    pub disks: Vec<ConductiveDisk>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThinInsulatorSpec {
    pub p: [f64; 2],
    pub q: [f64; 2],
    pub delta: f64,
}

/// Validate a phantom description: material regime, inclusion shape
/// invariants, strict containment in the domain, and pairwise separation.
pub fn build_phantom(spec: &PhantomSpec) -> Result<Phantom, GeometryError> {
    if !(spec.domain_radius > 0.0) {
        return Err(GeometryError::InvalidPhantom(
            "domain_radius must be positive".into(),
        ));
    }
    if !(spec.d0 > 0.0) {
        return Err(GeometryError::InvalidPhantom("d0 must be positive".into()));
    }
    spec.materials
        .validate()
        .map_err(|e| GeometryError::InvalidPhantom(e.to_string()))?;
    let insulators = spec
        .insulators
        .iter()
        .map(|s| ThinInsulator::new(Point::new(s.p[0], s.p[1]), Point::new(s.q[0], s.q[1]), s.delta))
        .collect::<Result<Vec<_>, _>>()?;
    let disks = spec
        .disks
        .iter()
        .map(|d| ConductiveDisk::new(d.center, d.radius))
        .collect::<Result<Vec<_>, _>>()?;

    let phantom = Phantom {
        domain_radius: spec.domain_radius,
        insulators,
        disks,
        materials: spec.materials,
        separation: spec.d0,
    };
    validate_separation(&phantom)?;
    Ok(phantom)
}

fn validate_separation(phantom: &Phantom) -> Result<(), GeometryError> {
    let report = distance_report(phantom);
    for e in &report.entries {
        let chained = matches!((e.a, e.b), (InclusionRef::Insulator(i), InclusionRef::Insulator(j))
            if phantom.insulators[i].shares_endpoint(&phantom.insulators[j]));
        if chained {
            continue;
        }
        if e.a == InclusionRef::Boundary || e.b == InclusionRef::Boundary {
            if e.distance <= 0.0 {
                let incl = if e.a == InclusionRef::Boundary { e.b } else { e.a };
                return Err(GeometryError::OutOfDomain(incl));
            }
        }
        if e.distance < phantom.separation {
            return Err(GeometryError::SeparationViolation {
                a: e.a,
                b: e.b,
                distance: e.distance,
                d0: phantom.separation,
            });
        }
    }
    Ok(())
}

/// One pairwise distance in a [`DistanceReport`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DistanceEntry {
    pub a: InclusionRef,
    pub b: InclusionRef,
    pub distance: f64,
}

/// Exact Euclidean distances between all inclusion pairs and from every
/// inclusion to the domain boundary. Segment distances are midline-to-midline;
/// disk distances subtract the radius.
#[derive(Debug, Clone, Serialize)]
pub struct DistanceReport {
    pub entries: Vec<DistanceEntry>,
}

impl DistanceReport {
    pub fn min_distance(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.distance)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn get(&self, a: InclusionRef, b: InclusionRef) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| (e.a == a && e.b == b) || (e.a == b && e.b == a))
            .map(|e| e.distance)
    }
}

pub fn distance_report(phantom: &Phantom) -> DistanceReport {
    let mut entries = Vec::new();
    let r = phantom.domain_radius;
    let ins = &phantom.insulators;
    let disks = &phantom.disks;

    for i in 0..ins.len() {
        for j in (i + 1)..ins.len() {
            entries.push(DistanceEntry {
                a: InclusionRef::Insulator(i),
                b: InclusionRef::Insulator(j),
                distance: segment_segment_distance(ins[i].p, ins[i].q, ins[j].p, ins[j].q),
            });
        }
    }
    for (i, s) in ins.iter().enumerate() {
        for (j, d) in disks.iter().enumerate() {
            entries.push(DistanceEntry {
                a: InclusionRef::Insulator(i),
                b: InclusionRef::Disk(j),
                distance: point_segment_distance(d.center, s.p, s.q) - d.radius,
            });
        }
    }
    for i in 0..disks.len() {
        for j in (i + 1)..disks.len() {
            entries.push(DistanceEntry {
                a: InclusionRef::Disk(i),
                b: InclusionRef::Disk(j),
                distance: (disks[i].center - disks[j].center).norm()
                    - disks[i].radius
                    - disks[j].radius,
            });
        }
    }
    for (i, s) in ins.iter().enumerate() {
        // |x| is convex along the segment, so the farthest point is an endpoint
        entries.push(DistanceEntry {
            a: InclusionRef::Insulator(i),
            b: InclusionRef::Boundary,
            distance: r - s.p.coords.norm().max(s.q.coords.norm()),
        });
    }
    for (j, d) in disks.iter().enumerate() {
        entries.push(DistanceEntry {
            a: InclusionRef::Disk(j),
            b: InclusionRef::Boundary,
            distance: r - d.center.coords.norm() - d.radius,
        });
    }
    DistanceReport { entries }
}

/// Distance from point `x` to segment `a b`.
pub fn point_segment_distance(x: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (x - a).norm();
    }
    let t = ((x - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (x - (a + ab * t)).norm()
}

/// Distance between segments `a1 b1` and `a2 b2` (0 if they intersect).
pub fn segment_segment_distance(a1: Point, b1: Point, a2: Point, b2: Point) -> f64 {
    if segments_intersect(a1, b1, a2, b2) {
        return 0.0;
    }
    point_segment_distance(a1, a2, b2)
        .min(point_segment_distance(b1, a2, b2))
        .min(point_segment_distance(a2, a1, b1))
        .min(point_segment_distance(b2, a1, b1))
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn segments_intersect(a1: Point, b1: Point, a2: Point, b2: Point) -> bool {
    let d1 = cross(a2, b2, a1);
    let d2 = cross(a2, b2, b1);
    let d3 = cross(a1, b1, a2);
    let d4 = cross(a1, b1, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |d: f64, p: Point, a: Point, b: Point| {
        d == 0.0
            && p.x >= a.x.min(b.x)
            && p.x <= a.x.max(b.x)
            && p.y >= a.y.min(b.y)
            && p.y <= a.y.max(b.y)
    };
    on(d1, a1, a2, b2) || on(d2, b1, a2, b2) || on(d3, a2, a1, b1) || on(d4, b2, a1, b1)
}
