//! Cells (boxes and planar triangles), their intersections, and the regions
//! produced by intersecting two cells.
//!
//! Boxes intersect boxes analytically in any dimension. Anything involving a
//! triangle is done in the plane: the subject cell is clipped against each
//! edge of the other (convex) cell and the resulting polygon is fan
//! triangulated.

use crate::element::quadrature;
use crate::error::{Error, Result};

/// Measures below this are treated as round-off from clipping touching cells.
pub const NULL_MEASURE: f64 = 1e-12;
const CLIP_EPS: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Counter-clockwise planar triangle.
    Triangle([[f64; 2]; 3]),
}

/// Integration region: an intersection of two cells, already split into simple pieces.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Triangle([[f64; 2]; 3]),
}

impl Region {
    pub fn measure(&self) -> f64 {
        match self {
            Region::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| (h - l).max(0.0)).product(),
            Region::Triangle(v) => signed_area(v).abs(),
        }
    }

    /// Quadrature points and weights exact for polynomials of total degree `order`.
    pub fn rule(&self, order: usize) -> Vec<(Vec<f64>, f64)> {
        match self {
            Region::Box { lo, hi } => quadrature::box_rule(lo, hi, order),
            Region::Triangle(v) => quadrature::triangle_rule(v, order),
        }
    }

    /// Any point strictly inside the region.
    pub fn interior_point(&self) -> Vec<f64> {
        match self {
            Region::Box { lo, hi } => lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect(),
            Region::Triangle(v) => vec![
                (v[0][0] + v[1][0] + v[2][0]) / 3.0,
                (v[0][1] + v[1][1] + v[2][1]) / 3.0,
            ],
        }
    }
}

pub(crate) fn signed_area(v: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
}

fn polygon_signed_area(p: &[[f64; 2]]) -> f64 {
    let n = p.len();
    (0..n)
        .map(|i| {
            let a = p[i];
            let b = p[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

impl Cell {
    /// A simplex given by its vertices. In one dimension this is an interval, stored as a box.
    pub fn simplex(vertices: &[Vec<f64>]) -> Result<Cell> {
        let dim = vertices.first().map_or(0, Vec::len);
        if vertices.len() != dim + 1 || vertices.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidElement(format!(
                "a {dim}-simplex needs {} vertices of length {dim}",
                dim + 1
            )));
        }
        match dim {
            1 => {
                let (a, b) = (vertices[0][0], vertices[1][0]);
                Ok(Cell::Box {
                    lo: vec![a.min(b)],
                    hi: vec![a.max(b)],
                })
            }
            2 => Ok(Cell::Triangle([
                [vertices[0][0], vertices[0][1]],
                [vertices[1][0], vertices[1][1]],
                [vertices[2][0], vertices[2][1]],
            ])),
            _ => Err(Error::InvalidElement(format!(
                "simplex cells are supported in dimension 1 and 2 only, got {dim}"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Cell::Box { lo, .. } => lo.len(),
            Cell::Triangle(_) => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Cell::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.is_empty() {
                    return Err(Error::InvalidElement(
                        "box bounds have mismatched lengths".into(),
                    ));
                }
                if lo.iter().chain(hi).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidElement("box bounds must be finite".into()));
                }
                if lo.iter().zip(hi).any(|(l, h)| h <= l) {
                    return Err(Error::InvalidElement(format!(
                        "degenerate box {lo:?}..{hi:?}"
                    )));
                }
            }
            Cell::Triangle(v) => {
                if v.iter().flatten().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidElement(
                        "triangle vertices must be finite".into(),
                    ));
                }
                if signed_area(v).abs() <= NULL_MEASURE {
                    return Err(Error::InvalidElement(format!("degenerate triangle {v:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn measure(&self) -> f64 {
        self.as_region().measure()
    }

    fn as_region(&self) -> Region {
        match self {
            Cell::Box { lo, hi } => Region::Box {
                lo: lo.clone(),
                hi: hi.clone(),
            },
            Cell::Triangle(v) => Region::Triangle(*v),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            Cell::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(xi, (l, h))| *xi >= l - tol && *xi <= h + tol),
            Cell::Triangle(v) => {
                let orient = signed_area(v).signum();
                (0..3).all(|i| {
                    let a = v[i];
                    let b = v[(i + 1) % 3];
                    let cross = (b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0]);
                    orient * cross >= -tol
                })
            }
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Cell::Box { lo, hi } => (lo.clone(), hi.clone()),
            Cell::Triangle(v) => {
                let lo = vec![
                    v.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
                    v.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min),
                ];
                let hi = vec![
                    v.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max),
                    v.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max),
                ];
                (lo, hi)
            }
        }
    }

    pub fn translated(&self, offset: &[f64]) -> Cell {
        match self {
            Cell::Box { lo, hi } => Cell::Box {
                lo: lo.iter().zip(offset).map(|(l, o)| l + o).collect(),
                hi: hi.iter().zip(offset).map(|(h, o)| h + o).collect(),
            },
            Cell::Triangle(v) => Cell::Triangle(v.map(|p| [p[0] + offset[0], p[1] + offset[1]])),
        }
    }

    fn polygon(&self) -> Result<Vec<[f64; 2]>> {
        match self {
            Cell::Box { lo, hi } if lo.len() == 2 => Ok(vec![
                [lo[0], lo[1]],
                [hi[0], lo[1]],
                [hi[0], hi[1]],
                [lo[0], hi[1]],
            ]),
            Cell::Triangle(v) => {
                if signed_area(v) < 0.0 {
                    return Err(Error::Orientation(format!(
                        "triangle {v:?} is listed clockwise"
                    )));
                }
                Ok(v.to_vec())
            }
            Cell::Box { .. } => Err(Error::InvalidElement(
                "polygon view requested for a non-planar box".into(),
            )),
        }
    }

    /// Intersection with another cell, split into boxes or triangles. Empty when the overlap is null.
    pub fn intersect(&self, other: &Cell) -> Result<Vec<Region>> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidElement(
                "intersecting cells of different dimension".into(),
            ));
        }
        if let (Cell::Box { lo: la, hi: ha }, Cell::Box { lo: lb, hi: hb }) = (self, other) {
            let lo: Vec<f64> = la.iter().zip(lb).map(|(a, b)| a.max(*b)).collect();
            let hi: Vec<f64> = ha.iter().zip(hb).map(|(a, b)| a.min(*b)).collect();
            if lo.iter().zip(&hi).any(|(l, h)| h - l <= 0.0) {
                return Ok(Vec::new());
            }
            let region = Region::Box { lo, hi };
            if region.measure() <= NULL_MEASURE {
                return Ok(Vec::new());
            }
            return Ok(vec![region]);
        }
        let subject = self.polygon()?;
        let clip = other.polygon()?;
        let poly = clip_convex(&subject, &clip);
        if poly.len() < 3 {
            return Ok(Vec::new());
        }
        let area = polygon_signed_area(&poly);
        if area < -NULL_MEASURE {
            return Err(Error::Orientation(format!(
                "clipped region has negative signed area {area:e}"
            )));
        }
        if area <= NULL_MEASURE {
            return Ok(Vec::new());
        }
        let mut out = Vec::with_capacity(poly.len() - 2);
        for i in 1..poly.len() - 1 {
            let tri = [poly[0], poly[i], poly[i + 1]];
            let a = signed_area(&tri);
            if a < -NULL_MEASURE {
                return Err(Error::Orientation(format!(
                    "fan triangle {tri:?} has negative signed area {a:e}"
                )));
            }
            if a > NULL_MEASURE {
                out.push(Region::Triangle(tri));
            }
        }
        Ok(out)
    }

    /// Sample points on the interface shared with `other`, used for continuity checks.
    pub fn shared_face_samples(&self, other: &Cell) -> Vec<Vec<f64>> {
        const SAMPLES: usize = 5;
        if let (Cell::Box { lo: la, hi: ha }, Cell::Box { lo: lb, hi: hb }) = (self, other) {
            let d = la.len();
            let mut out = Vec::new();
            for axis in 0..d {
                let plane = if (ha[axis] - lb[axis]).abs() < CLIP_EPS {
                    ha[axis]
                } else if (hb[axis] - la[axis]).abs() < CLIP_EPS {
                    la[axis]
                } else {
                    continue;
                };
                let others: Vec<usize> = (0..d).filter(|&k| k != axis).collect();
                let ranges: Vec<(f64, f64)> = others
                    .iter()
                    .map(|&k| (la[k].max(lb[k]), ha[k].min(hb[k])))
                    .collect();
                if ranges.iter().any(|(l, h)| h <= l) {
                    continue;
                }
                let count = SAMPLES.pow(others.len() as u32);
                for flat in 0..count {
                    let mut x = vec![0.0; d];
                    x[axis] = plane;
                    let mut rem = flat;
                    for (slot, &k) in others.iter().enumerate() {
                        let i = rem % SAMPLES;
                        rem /= SAMPLES;
                        let (l, h) = ranges[slot];
                        x[k] = l + (h - l) * (i as f64 + 0.5) / SAMPLES as f64;
                    }
                    out.push(x);
                }
            }
            return out;
        }
        let (Ok(pa), Ok(pb)) = (self.polygon(), other.polygon()) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for i in 0..pa.len() {
            let (a0, a1) = (pa[i], pa[(i + 1) % pa.len()]);
            for j in 0..pb.len() {
                let (b0, b1) = (pb[j], pb[(j + 1) % pb.len()]);
                if let Some((s0, s1)) = collinear_overlap(a0, a1, b0, b1) {
                    for k in 0..SAMPLES {
                        let s = s0 + (s1 - s0) * (k as f64 + 0.5) / SAMPLES as f64;
                        out.push(vec![
                            a0[0] + s * (a1[0] - a0[0]),
                            a0[1] + s * (a1[1] - a0[1]),
                        ]);
                    }
                }
            }
        }
        out
    }
}

/// Parameter range on segment a0→a1 that overlaps segment b0→b1, if both are collinear.
fn collinear_overlap(a0: [f64; 2], a1: [f64; 2], b0: [f64; 2], b1: [f64; 2]) -> Option<(f64, f64)> {
    let d = [a1[0] - a0[0], a1[1] - a0[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let cross = |p: [f64; 2]| d[0] * (p[1] - a0[1]) - d[1] * (p[0] - a0[0]);
    if cross(b0).abs() > CLIP_EPS * len2.sqrt() || cross(b1).abs() > CLIP_EPS * len2.sqrt() {
        return None;
    }
    let param = |p: [f64; 2]| (d[0] * (p[0] - a0[0]) + d[1] * (p[1] - a0[1])) / len2;
    let (t0, t1) = (param(b0), param(b1));
    let lo = t0.min(t1).max(0.0);
    let hi = t0.max(t1).min(1.0);
    (hi - lo > CLIP_EPS).then_some((lo, hi))
}

/// Sutherland–Hodgman clipping of `subject` by the convex counter-clockwise polygon `clip`.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (sc, sp) = (side(cur), side(prev));
            let cur_in = sc >= -CLIP_EPS;
            let prev_in = sp >= -CLIP_EPS;
            if cur_in {
                if !prev_in {
                    output.push(lerp(prev, cur, sp / (sp - sc)));
                }
                output.push(cur);
            } else if prev_in {
                output.push(lerp(prev, cur, sp / (sp - sc)));
            }
        }
        output.dedup_by(|p, q| (p[0] - q[0]).abs() < CLIP_EPS && (p[1] - q[1]).abs() < CLIP_EPS);
        if output.len() > 1 {
            let (f, l) = (output[0], output[output.len() - 1]);
            if (f[0] - l[0]).abs() < CLIP_EPS && (f[1] - l[1]).abs() < CLIP_EPS {
                output.pop();
            }
        }
    }
    output
}

fn lerp(p: [f64; 2], q: [f64; 2], t: f64) -> [f64; 2] {
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}
