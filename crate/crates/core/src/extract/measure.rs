//! Perimeter and area of pixel sets.
//!
//! The boundary of a pixel set is traced as closed loops of pixel edges (the
//! set is 4-connected; diagonal contacts split loops). Every boundary edge
//! separates an inside pixel center from an outside one, and the segment
//! between the two centers is a "portal" the contour at level 0.5 has to cross.
//! The perimeter estimate of a loop is the length of the shortest closed curve
//! through its portals, plus `4h`: the shortest curve runs through the
//! boundary pixel centers, half a pixel inside the pixel edges, and the `4h`
//! restores that half-pixel offset (for a convex loop, the Minkowski sum with
//! one pixel adds exactly `4h`).
//!
//! The estimate is exact for axis-aligned rectangles (`2h(R + S)`), gives `4h`
//! for a single pixel, and for smooth sets converges to the Euclidean
//! perimeter instead of the `4/π`-biased pixel-edge length.

use crate::error::{Error, Result};
use crate::grid::GridDomain;

/// Perimeter (length units) and volume (area units) of a pixel set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetMeasure {
    pub perimeter: f64,
    pub volume: f64,
}

impl SetMeasure {
    pub fn ratio(&self) -> f64 {
        self.perimeter / self.volume
    }
}

/// A traced boundary loop of a pixel set, in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryLoop {
    /// Vertices of the shortest curve through the portals (closed, first
    /// vertex not repeated).
    pub taut: Vec<(f64, f64)>,
    /// Pixel-edge polygon of the loop (closed, first vertex not repeated).
    pub crack: Vec<(f64, f64)>,
    /// `true` for loops bounding a hole of the set.
    pub is_hole: bool,
    /// Length of `taut` in length units.
    pub taut_length: f64,
}

/// Measures `set ⊆ Ω`.
pub fn measure_set(dom: &GridDomain, set: &[bool]) -> Result<SetMeasure> {
    check_subset(dom, set)?;
    let count = set.iter().filter(|&&b| b).count();
    if count == 0 {
        return Err(Error::EmptySet);
    }
    let h = dom.h();
    let loops = trace(dom.nx(), dom.ny(), set);
    let perimeter: f64 = loops.iter().map(|l| h * (l.taut_length + 4.0)).sum();
    Ok(SetMeasure { perimeter, volume: h * h * count as f64 })
}

/// Boundary loops of `set`, for drawing.
pub fn boundary_loops(dom: &GridDomain, set: &[bool]) -> Result<Vec<BoundaryLoop>> {
    check_subset(dom, set)?;
    let (ox, oy) = dom.origin();
    let h = dom.h();
    let world = |(x, y): (f64, f64)| (ox + x * h, oy + y * h);
    Ok(trace(dom.nx(), dom.ny(), set)
        .into_iter()
        .map(|l| BoundaryLoop {
            taut: l.taut.into_iter().map(world).collect(),
            crack: l.crack.into_iter().map(world).collect(),
            is_hole: l.is_hole,
            taut_length: l.taut_length * h,
        })
        .collect())
}

fn check_subset(dom: &GridDomain, set: &[bool]) -> Result<()> {
    if set.len() != dom.len() {
        return Err(Error::FieldMismatch(format!(
            "set has {} pixels, grid has {}",
            set.len(),
            dom.len()
        )));
    }
    if set.iter().zip(dom.mask()).any(|(&s, &m)| s && !m) {
        return Err(Error::InvalidParameter("set is not contained in the domain".into()));
    }
    Ok(())
}

type Pt = (f64, f64);

/// Loop in grid units (pixel side 1, grid corner at the origin).
struct RawLoop {
    taut: Vec<Pt>,
    crack: Vec<Pt>,
    is_hole: bool,
    taut_length: f64,
}

#[derive(Clone, Copy)]
struct Edge {
    /// start vertex (corner coordinates)
    from: (i64, i64),
    /// unit direction
    dir: (i64, i64),
    /// inside / outside pixel centers, grid units
    inner: Pt,
    outer: Pt,
}

const NONE: u32 = u32::MAX;

fn trace(nx: usize, ny: usize, set: &[bool]) -> Vec<RawLoop> {
    let inside = |i: i64, j: i64| -> bool {
        i >= 0 && j >= 0 && (i as usize) < nx && (j as usize) < ny && set[j as usize * nx + i as usize]
    };
    let vw = nx + 1;
    let vid = |(a, b): (i64, i64)| b as usize * vw + a as usize;

    let mut edges: Vec<Edge> = Vec::new();
    let mut out_edges: Vec<[u32; 2]> = vec![[NONE, NONE]; (nx + 1) * (ny + 1)];
    let mut push = |edges: &mut Vec<Edge>, e: Edge| {
        let id = edges.len() as u32;
        let slot = &mut out_edges[vid(e.from)];
        if slot[0] == NONE {
            slot[0] = id;
        } else {
            slot[1] = id;
        }
        edges.push(e);
    };
    for j in 0..ny as i64 {
        for i in 0..nx as i64 {
            if !inside(i, j) {
                continue;
            }
            let c = (i as f64 + 0.5, j as f64 + 0.5);
            if !inside(i, j - 1) {
                push(&mut edges, Edge { from: (i, j), dir: (1, 0), inner: c, outer: (c.0, c.1 - 1.0) });
            }
            if !inside(i + 1, j) {
                push(&mut edges, Edge { from: (i + 1, j), dir: (0, 1), inner: c, outer: (c.0 + 1.0, c.1) });
            }
            if !inside(i, j + 1) {
                push(&mut edges, Edge { from: (i + 1, j + 1), dir: (-1, 0), inner: c, outer: (c.0, c.1 + 1.0) });
            }
            if !inside(i - 1, j) {
                push(&mut edges, Edge { from: (i, j + 1), dir: (0, -1), inner: c, outer: (c.0 - 1.0, c.1) });
            }
        }
    }

    let mut used = vec![false; edges.len()];
    let mut loops = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let mut seq: Vec<usize> = Vec::new();
        let mut cur = start;
        loop {
            used[cur] = true;
            seq.push(cur);
            let e = edges[cur];
            let to = (e.from.0 + e.dir.0, e.from.1 + e.dir.1);
            let slot = out_edges[vid(to)];
            let next = if slot[1] == NONE {
                slot[0]
            } else {
                // Saddle vertex: turn left so diagonal neighbours stay apart.
                let left = (-e.dir.1, e.dir.0);
                if edges[slot[0] as usize].dir == left {
                    slot[0]
                } else {
                    slot[1]
                }
            };
            let next = next as usize;
            if next == start {
                break;
            }
            debug_assert!(!used[next], "boundary tracing revisited an edge");
            cur = next;
        }
        loops.push(finish_loop(&edges, &seq));
    }
    loops
}

fn finish_loop(edges: &[Edge], seq: &[usize]) -> RawLoop {
    let crack: Vec<Pt> = seq.iter().map(|&k| (edges[k].from.0 as f64, edges[k].from.1 as f64)).collect();
    let twice_area: f64 = crack
        .iter()
        .zip(crack.iter().cycle().skip(1))
        .map(|(a, b)| a.0 * b.1 - b.0 * a.1)
        .sum();
    let is_hole = twice_area < 0.0;

    // Anchor: lexicographically smallest center on the side the loop
    // contracts towards. It is a vertex of the taut loop.
    let side = |k: usize| if is_hole { edges[k].outer } else { edges[k].inner };
    let lex_less = |a: Pt, b: Pt| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
    let mut first = 0;
    for pos in 1..seq.len() {
        if lex_less(side(seq[pos]), side(seq[first])) {
            first = pos;
        }
    }
    let anchor = side(seq[first]);
    let mut portals: Vec<(Pt, Pt)> = Vec::with_capacity(seq.len() + 2);
    portals.push((anchor, anchor));
    for off in 0..seq.len() {
        let e = edges[seq[(first + off) % seq.len()]];
        portals.push((e.inner, e.outer));
    }
    portals.push((anchor, anchor));
    let mut path = string_pull(&portals);
    let taut_length = path.windows(2).map(|w| dist(w[0], w[1])).sum();
    path.pop();
    path.dedup();
    RawLoop { taut: path, crack, is_hole, taut_length }
}

#[inline]
fn dist(a: Pt, b: Pt) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// `> 0` when `c` lies counter-clockwise of the ray `a → b`.
#[inline]
fn cross(a: Pt, b: Pt, c: Pt) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Shortest path through a sequence of `(left, right)` portals (funnel
/// algorithm). The first and last portals are degenerate start/end points.
fn string_pull(portals: &[(Pt, Pt)]) -> Vec<Pt> {
    let mut path = vec![portals[0].0];
    let mut apex = portals[0].0;
    let (mut left, mut right) = (apex, apex);
    let (mut left_idx, mut right_idx) = (0usize, 0usize);
    let mut i = 1;
    while i < portals.len() {
        let (l, r) = portals[i];

        if cross(apex, right, r) >= 0.0 {
            if apex == right || cross(apex, left, r) < 0.0 {
                right = r;
                right_idx = i;
            } else {
                path.push(left);
                apex = left;
                right = apex;
                right_idx = left_idx;
                i = left_idx + 1;
                continue;
            }
        }

        if cross(apex, left, l) <= 0.0 {
            if apex == left || cross(apex, right, l) > 0.0 {
                left = l;
                left_idx = i;
            } else {
                path.push(right);
                apex = right;
                left = apex;
                left_idx = right_idx;
                i = right_idx + 1;
                continue;
            }
        }
        i += 1;
    }
    let end = portals[portals.len() - 1].0;
    if *path.last().unwrap() != end {
        path.push(end);
    }
    path
}
