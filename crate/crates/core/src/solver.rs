//! Primal-dual minimization of `E(u) = Σ TV(uⁱ)` over skeleton-valued fields
//! with unit-L¹ components (`Λ_N`), and of `TV(v)` over signed fields with
//! unit-L¹ positive and negative parts (`M₂`).
//!
//! Each iteration is a Chambolle–Pock step: dual ascent on the TV dual
//! variable followed by a primal step `u + τ div p` that is mapped back to
//! the constraint set. The map assigns every pixel to the component with the
//! largest value and then projects each component onto
//! `{w ≥ 0, h² Σ w = 1}` over its pixels, which is a shift
//! `w = max(v − λ, 0)`. For `N = 1` this is the exact projection and the
//! problem is convex.
//!
//! Runs start on a coarsened copy of the grid and are prolonged level by
//! level, carrying both the primal field and the dual variable.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridDomain, MultiField, ScalarField};
use crate::skeleton::shift_to_mass;
use crate::tvops::{tv, tv_raw};

/// Iterations between energy evaluations.
pub const TRACE_STRIDE: usize = 10;
const WINDOW: usize = 50;
/// Coarsening stops once a level would have fewer inside pixels than this
/// (per component).
const MIN_COARSE_PIXELS: usize = 2048;
/// Stopping tolerance on coarse levels (never tighter than the user's).
const COARSE_TOL: f64 = 1e-4;
/// Primal/dual step balance `τ/σ = STEP_BALANCE² / |Ω|`: the primal field
/// has amplitude `~1/|Ω|`, the dual one `~1`.
const STEP_BALANCE: f64 = 0.25;
/// Iterations between restarts from the averaged iterate.
const AVERAGE_PERIOD: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tau: f64,
    pub sigma: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub theta: f64,
}

impl SolverConfig {
    /// Defaults for a domain: `τσ = h²/8`, balanced by the domain area,
    /// `θ = 1`, `tol = 1e-6`, 20000 iterations per level, 4 restarts.
    pub fn for_domain(dom: &GridDomain) -> Self {
        let h = dom.h();
        let rho = STEP_BALANCE / dom.area().sqrt();
        let base = h / 8f64.sqrt();
        Self { tau: base * rho, sigma: base / rho, max_iter: 20_000, tol: 1e-6, restarts: 4, seed: 0, theta: 1.0 }
    }

    pub fn validate(&self, h: f64) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.tau > 0.0 && self.sigma > 0.0 && self.tau.is_finite() && self.sigma.is_finite()) {
            return bad("step sizes must be positive".into());
        }
        let l2 = 8.0 / (h * h);
        if self.tau * self.sigma * l2 > 1.0 + 1e-12 {
            return bad(format!("tau*sigma*L^2 = {} exceeds 1", self.tau * self.sigma * l2));
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive".into());
        }
        if self.max_iter == 0 || self.restarts == 0 {
            return bad("max_iter and restarts must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad("theta must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub energy: f64,
    /// Iterations on the finest grid.
    pub iterations: usize,
    /// Iterations per level, coarsest first (the last entry is
    /// `iterations`).
    pub level_iterations: Vec<usize>,
    pub restart_index: usize,
    /// Energy every [`TRACE_STRIDE`] iterations on the finest grid.
    pub energy_trace: Vec<f64>,
    /// Constraint residual of the extrapolated iterate at the same points.
    pub residual_trace: Vec<f64>,
    /// Skeleton violation and L¹ deviation of the extrapolated iterate at the
    /// last step; the returned field itself is exactly feasible.
    pub constraint_residual: f64,
    pub converged: bool,
    /// Final energy of every restart, `None` for collapsed ones.
    pub restart_energies: Vec<Option<f64>>,
}

impl SolverReport {
    /// Iteration numbers matching `energy_trace`.
    pub fn trace_iterations(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.energy_trace.len()).map(|k| ((k + 1) * TRACE_STRIDE).min(self.iterations))
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Constraint {
    /// `N` nonnegative components, disjoint supports, unit mass each.
    Skeleton,
    /// One signed field, unit positive and negative mass.
    Signed,
}

/// Primal field and dual variable of one PDHG run.
struct State {
    u: Vec<Vec<f64>>,
    px: Vec<Vec<f64>>,
    py: Vec<Vec<f64>>,
}

struct LevelOutcome {
    state: State,
    energy: f64,
    iterations: usize,
    energy_trace: Vec<f64>,
    residual_trace: Vec<f64>,
    residual: f64,
    converged: bool,
}

struct RunOutcome {
    fine: LevelOutcome,
    level_iterations: Vec<usize>,
}

/// Minimizes `E` over skeleton-valued `u` with `‖uⁱ‖₁ = 1`.
pub fn solve_lambda_n(dom: &Arc<GridDomain>, n: usize, cfg: &SolverConfig) -> Result<(MultiField, SolverReport)> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    cfg.validate(dom.h())?;
    if dom.pixel_count() < n {
        return Err(Error::DomainTooSmall(n));
    }
    let levels = pyramid(dom, n);
    // With one chamber every Voronoi start is the whole domain.
    let count = if n == 1 { cfg.restarts.min(2) } else { cfg.restarts };
    let (best, report) = run_restarts(count, |k| {
        let init = initial_partition(dom, n, cfg.seed, k);
        run_levels(&levels, init, Constraint::Skeleton, cfg)
    })?;
    let comps = best.fine.state.u.into_iter().map(|v| ScalarField::masked(dom, v)).collect();
    Ok((MultiField::new(comps)?, report))
}

/// Minimizes `TV(v)` over signed `v` with `‖v⁺‖₁ = ‖v⁻‖₁ = 1`.
pub fn solve_m2(dom: &Arc<GridDomain>, cfg: &SolverConfig) -> Result<(ScalarField, SolverReport)> {
    cfg.validate(dom.h())?;
    if dom.pixel_count() < 2 {
        return Err(Error::DomainTooSmall(2));
    }
    let levels = pyramid(dom, 2);
    let (best, report) = run_restarts(cfg.restarts, |k| {
        let parts = initial_partition(dom, 2, cfg.seed, k);
        let norm = |c: &[f64]| c.iter().sum::<f64>();
        let (m0, m1) = (norm(&parts[0]), norm(&parts[1]));
        let v = parts[0].iter().zip(&parts[1]).map(|(a, b)| a / m0 - b / m1).collect();
        run_levels(&levels, vec![v], Constraint::Signed, cfg)
    })?;
    let v = best.fine.state.u.into_iter().next().expect("one signed field");
    Ok((ScalarField::masked(dom, v), report))
}

fn run_restarts(
    count: usize,
    run: impl Fn(usize) -> Result<RunOutcome> + Sync,
) -> Result<(RunOutcome, SolverReport)> {
    let results: Vec<Result<RunOutcome>> = (0..count).into_par_iter().map(&run).collect();
    let restart_energies: Vec<Option<f64>> =
        results.iter().map(|r| r.as_ref().ok().map(|o| o.fine.energy)).collect();
    let mut best: Option<(usize, RunOutcome)> = None;
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => {
                if best.as_ref().map_or(true, |(_, b)| o.fine.energy < b.fine.energy) {
                    best = Some((k, o));
                }
            }
            Err(Error::CollapsedChamber(_)) | Err(Error::NoSignChange) => {}
            Err(e) => return Err(e),
        }
    }
    let (k, o) = best.ok_or(Error::NoFeasibleMinimizer)?;
    let f = &o.fine;
    let report = SolverReport {
        energy: f.energy,
        iterations: f.iterations,
        level_iterations: o.level_iterations.clone(),
        restart_index: k,
        energy_trace: f.energy_trace.clone(),
        residual_trace: f.residual_trace.clone(),
        constraint_residual: f.residual,
        converged: f.converged,
        restart_energies,
    };
    Ok((o, report))
}

/// Grid hierarchy, finest first. Coarse pixel `(I, J)` covers fine pixels
/// `2(I−1) + {0, 1}` × `2(J−1) + {0, 1}` and is inside when at least two of
/// them are; the extra coarse row and column keep the padding.
fn pyramid(dom: &Arc<GridDomain>, n: usize) -> Vec<Arc<GridDomain>> {
    let mut levels = vec![Arc::clone(dom)];
    loop {
        let fine = levels.last().expect("nonempty");
        let (nx, ny) = (fine.nx().div_ceil(2) + 2, fine.ny().div_ceil(2) + 2);
        let mut mask = vec![false; nx * ny];
        for jc in 1..ny - 1 {
            for ic in 1..nx - 1 {
                let mut count = 0;
                for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let (i, j) = (2 * (ic - 1) + di, 2 * (jc - 1) + dj);
                    if i < fine.nx() && j < fine.ny() && fine.mask()[fine.index(i, j)] {
                        count += 1;
                    }
                }
                mask[jc * nx + ic] = count >= 2;
            }
        }
        if mask.iter().filter(|&&m| m).count() < MIN_COARSE_PIXELS * n {
            break;
        }
        let h = 2.0 * fine.h();
        let origin = (fine.origin().0 - h, fine.origin().1 - h);
        match GridDomain::new(nx, ny, h, origin, mask) {
            Ok(c) => levels.push(Arc::new(c)),
            Err(_) => break,
        }
    }
    levels
}

/// Fine pixel of `fine` to its parent in `coarse`.
#[inline]
fn parent(fine: &GridDomain, coarse: &GridDomain, k: usize) -> usize {
    let (i, j) = (k % fine.nx(), k / fine.nx());
    (j / 2 + 1) * coarse.nx() + i / 2 + 1
}

/// Mean of the four children, kept on the coarse mask.
fn restrict(fine: &GridDomain, coarse: &GridDomain, f: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; coarse.len()];
    for (k, &v) in f.iter().enumerate() {
        out[parent(fine, coarse, k)] += 0.25 * v;
    }
    for (v, &m) in out.iter_mut().zip(coarse.mask()) {
        if !m {
            *v = 0.0;
        }
    }
    out
}

/// Piecewise-constant prolongation; `masked` zeroes values off the fine mask.
fn prolong(coarse: &GridDomain, fine: &GridDomain, f: &[f64], masked: bool) -> Vec<f64> {
    (0..fine.len())
        .map(|k| if masked && !fine.inside(k) { 0.0 } else { f[parent(fine, coarse, k)] })
        .collect()
}

/// Runs the hierarchy from the coarsest level on which every chamber of the
/// restricted start survives.
fn run_levels(
    levels: &[Arc<GridDomain>],
    init: Vec<Vec<f64>>,
    constraint: Constraint,
    cfg: &SolverConfig,
) -> Result<RunOutcome> {
    let mut starts = vec![init];
    for w in levels.windows(2) {
        let prev = starts.last().expect("nonempty");
        starts.push(prev.iter().map(|c| restrict(&w[0], &w[1], c)).collect());
    }
    let mut top = levels.len() - 1;
    let mut state = loop {
        let dom = &levels[top];
        let mut u = starts[top].clone();
        let mut proj = Projector::new(dom, u.len());
        match proj.apply(constraint, &mut u) {
            Ok(()) => {
                let zeros = || vec![vec![0.0; dom.len()]; u.len()];
                break State { px: zeros(), py: zeros(), u };
            }
            Err(e) if top == 0 => return Err(e),
            Err(_) => top -= 1,
        }
    };
    let h_fine = levels[0].h();
    let mut level_iterations = Vec::new();
    for l in (0..=top).rev() {
        let dom = &levels[l];
        let scale = dom.h() / h_fine;
        let tol = if l == 0 { cfg.tol } else { cfg.tol.max(COARSE_TOL) };
        let out = pdhg(dom, state, constraint, cfg.tau * scale, cfg.sigma * scale, cfg.theta, cfg.max_iter, tol)?;
        level_iterations.push(out.iterations);
        if l == 0 {
            return Ok(RunOutcome { fine: out, level_iterations });
        }
        let fine = &levels[l - 1];
        let s = out.state;
        let mut u: Vec<Vec<f64>> = s.u.iter().map(|c| prolong(dom, fine, c, true)).collect();
        Projector::new(fine, u.len()).apply(constraint, &mut u)?;
        state = State {
            u,
            px: s.px.iter().map(|c| prolong(dom, fine, c, false)).collect(),
            py: s.py.iter().map(|c| prolong(dom, fine, c, false)).collect(),
        };
    }
    unreachable!("the finest level returns")
}

/// Pixel indices inside Ω. Padding keeps them off the grid edge.
fn inside_list(dom: &GridDomain) -> Vec<u32> {
    dom.mask().iter().enumerate().filter(|(_, &m)| m).map(|(k, _)| k as u32).collect()
}

/// Constraint map with reusable buffers.
struct Projector {
    inside: Vec<u32>,
    mass: f64,
    supports: Vec<Vec<u32>>,
    buf: [Vec<f64>; 2],
    /// Shift of each support at the previous call, a warm start for the next.
    shifts: Vec<f64>,
}

impl Projector {
    fn new(dom: &GridDomain, n: usize) -> Self {
        let inside = inside_list(dom);
        let cap = inside.len();
        Self {
            mass: 1.0 / (dom.h() * dom.h()),
            supports: vec![Vec::with_capacity(cap); n.max(2)],
            buf: [vec![0.0; dom.len()], vec![0.0; dom.len()]],
            shifts: vec![f64::NEG_INFINITY; n.max(2)],
            inside,
        }
    }

    fn apply(&mut self, constraint: Constraint, v: &mut [Vec<f64>]) -> Result<()> {
        match constraint {
            Constraint::Skeleton => self.skeleton(v),
            Constraint::Signed => self.signed(&mut v[0]),
        }
    }

    fn skeleton(&mut self, v: &mut [Vec<f64>]) -> Result<()> {
        if v.len() == 1 {
            self.shifts[0] = shift_to_mass(&mut v[0], &self.inside, self.mass, self.shifts[0]);
            return Ok(());
        }
        for sup in self.supports.iter_mut() {
            sup.clear();
        }
        for &k in &self.inside {
            let kk = k as usize;
            let mut best = 0;
            let mut best_val = v[0][kk];
            for (i, vi) in v.iter().enumerate().skip(1) {
                if vi[kk] > best_val {
                    best = i;
                    best_val = vi[kk];
                }
            }
            for (i, vi) in v.iter_mut().enumerate() {
                if i != best {
                    vi[kk] = 0.0;
                }
            }
            self.supports[best].push(k);
        }
        for (i, vi) in v.iter_mut().enumerate() {
            if self.supports[i].is_empty() {
                return Err(Error::CollapsedChamber(i));
            }
            self.shifts[i] = shift_to_mass(vi, &self.supports[i], self.mass, self.shifts[i]);
        }
        Ok(())
    }

    /// `v ↦ (v⁺, v⁻)` projected separately; zeros go to the positive side.
    fn signed(&mut self, w: &mut [f64]) -> Result<()> {
        let [pos_buf, neg_buf] = &mut self.buf;
        let (pos, rest) = self.supports.split_at_mut(1);
        let (pos, neg) = (&mut pos[0], &mut rest[0]);
        pos.clear();
        neg.clear();
        for &k in &self.inside {
            let kk = k as usize;
            if w[kk] >= 0.0 {
                pos.push(k);
                pos_buf[kk] = w[kk];
            } else {
                neg.push(k);
                neg_buf[kk] = -w[kk];
            }
        }
        if pos.is_empty() || neg.is_empty() {
            return Err(Error::NoSignChange);
        }
        self.shifts[0] = shift_to_mass(pos_buf, pos, self.mass, self.shifts[0]);
        self.shifts[1] = shift_to_mass(neg_buf, neg, self.mass, self.shifts[1]);
        for &k in pos.iter() {
            w[k as usize] = pos_buf[k as usize];
        }
        for &k in neg.iter() {
            w[k as usize] = -neg_buf[k as usize];
        }
        Ok(())
    }
}

/// `p ← proj_{|p| ≤ 1}(p + s ∇_fd ū)` with `s = σ/h`; the new `p` is added
/// to the running sums `(ax, ay)`.
#[allow(clippy::too_many_arguments)]
fn dual_ascent(
    ubar: &[f64],
    px: &mut [f64],
    py: &mut [f64],
    ax: &mut [f64],
    ay: &mut [f64],
    nx: usize,
    s: f64,
    zero_row: &[f64],
) {
    let rows = ubar
        .chunks_exact(nx)
        .zip(px.chunks_exact_mut(nx))
        .zip(py.chunks_exact_mut(nx))
        .zip(ax.chunks_exact_mut(nx))
        .zip(ay.chunks_exact_mut(nx));
    for (j, ((((c, px), py), ax), ay)) in rows.enumerate() {
        let up = ubar.get((j + 1) * nx..(j + 2) * nx).unwrap_or(zero_row);
        let cells = c.iter().zip(c[1..].iter().chain([&0.0])).zip(up).zip(px.iter_mut().zip(py.iter_mut()));
        for (((&c, &right), &up), (px, py)) in cells {
            let gx = *px + s * (right - c);
            let gy = *py + s * (up - c);
            let n2 = gx * gx + gy * gy;
            let r = if n2 > 1.0 { 1.0 / n2.sqrt() } else { 1.0 };
            *px = gx * r;
            *py = gy * r;
        }
        for (a, &p) in ax.iter_mut().zip(px.iter()) {
            *a += p;
        }
        for (a, &p) in ay.iter_mut().zip(py.iter()) {
            *a += p;
        }
    }
}

/// `out = u + t div_bd p` inside Ω and 0 outside (`t = τ/h`, `inside` is
/// the mask as 0/1). The padding keeps Ω off the first row and column.
fn primal_step(u: &[f64], px: &[f64], py: &[f64], nx: usize, t: f64, inside: &[f64], out: &mut [f64]) {
    out[..nx].fill(0.0);
    let len = u.len();
    let (u, inside) = (&u[nx..], &inside[nx..]);
    let (p, pw, q, qs) = (&px[nx..], &px[nx - 1..len - 1], &py[nx..], &py[..len - nx]);
    for (k, o) in out[nx..].iter_mut().enumerate() {
        *o = inside[k] * (u[k] + t * (p[k] - pw[k] + q[k] - qs[k]));
    }
}

/// `ū = u + θ(u − u_old)`, and `u` is added to the running sum `acc`.
fn extrapolate(u: &[f64], u_old: &[f64], theta: f64, ubar: &mut [f64], acc: &mut [f64]) {
    for (((b, a), &x), &y) in ubar.iter_mut().zip(acc.iter_mut()).zip(u).zip(u_old) {
        *b = x + theta * (x - y);
        *a += x;
    }
}

/// `x = w · acc`, then clears `acc`.
fn take_mean(acc: &mut [f64], x: &mut [f64], w: f64) {
    for (a, b) in acc.iter_mut().zip(x.iter_mut()) {
        *b = *a * w;
        *a = 0.0;
    }
}

/// Skeleton violation plus largest `|h² Σ|ūⁱ| − 1|`.
fn residual(ubar: &[Vec<f64>], inside: &[u32], h2: f64) -> f64 {
    let mut overlap = 0.0f64;
    let mut mass = vec![0.0; ubar.len()];
    for &k in inside {
        let k = k as usize;
        let (mut first, mut second) = (0.0f64, 0.0f64);
        for (i, c) in ubar.iter().enumerate() {
            let v = c[k];
            mass[i] += v.abs();
            if v > first {
                second = first;
                first = v;
            } else if v > second {
                second = v;
            }
        }
        overlap = overlap.max(second);
    }
    let dev = mass.iter().map(|m| (h2 * m - 1.0).abs()).fold(0.0, f64::max);
    overlap.max(dev)
}

fn signed_residual(ubar: &[f64], inside: &[u32], h2: f64) -> f64 {
    let (mut pos, mut neg) = (0.0, 0.0);
    for &k in inside {
        let v = ubar[k as usize];
        if v > 0.0 {
            pos += v;
        } else {
            neg -= v;
        }
    }
    (h2 * pos - 1.0).abs().max((h2 * neg - 1.0).abs())
}

struct Stopper {
    tol: f64,
    history: Vec<f64>,
}

impl Stopper {
    /// `true` once the energies of the last [`WINDOW`] iterations spread by
    /// at most `tol` relative to the current one.
    fn push(&mut self, e: f64) -> bool {
        self.history.push(e);
        let back = WINDOW / TRACE_STRIDE;
        let n = self.history.len();
        if n <= back {
            return false;
        }
        let window = &self.history[n - 1 - back..];
        let hi = window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = window.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo <= self.tol * e.abs()
    }
}

#[allow(clippy::too_many_arguments)]
fn pdhg(
    dom: &GridDomain,
    state: State,
    constraint: Constraint,
    tau: f64,
    sigma: f64,
    theta: f64,
    max_iter: usize,
    tol: f64,
) -> Result<LevelOutcome> {
    let (nx, ny, h) = (dom.nx(), dom.ny(), dom.h());
    let len = dom.len();
    let (s, t) = (sigma / h, tau / h);
    let State { mut u, mut px, mut py } = state;
    let n = u.len();
    let mut proj = Projector::new(dom, n);
    let inside = proj.inside.clone();
    let mut u_old = u.clone();
    let mut ubar = u.clone();
    let mut v = vec![vec![0.0; len]; n];
    let energy_of = |u: &[Vec<f64>]| u.iter().map(|c| tv_raw(c, nx, ny, h)).sum::<f64>();

    let mut stop = Stopper { tol, history: Vec::new() };
    let mut energy_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut last_residual = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut acc_u = vec![vec![0.0; len]; n];
    let mut acc_px = vec![vec![0.0; len]; n];
    let mut acc_py = vec![vec![0.0; len]; n];
    let mask: Vec<f64> = dom.mask().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    let zero_row = vec![0.0; nx];
    // Last averaged iterate and its energy.
    let mut averaged: Option<(Vec<Vec<f64>>, f64)> = None;
    for it in 1..=max_iter {
        for i in 0..n {
            dual_ascent(&ubar[i], &mut px[i], &mut py[i], &mut acc_px[i], &mut acc_py[i], nx, s, &zero_row);
            primal_step(&u[i], &px[i], &py[i], nx, t, &mask, &mut v[i]);
        }
        proj.apply(constraint, &mut v)?;
        std::mem::swap(&mut u_old, &mut u);
        std::mem::swap(&mut u, &mut v);
        for i in 0..n {
            extrapolate(&u[i], &u_old[i], theta, &mut ubar[i], &mut acc_u[i]);
        }
        iterations = it;
        if it % AVERAGE_PERIOD == 0 {
            // Restart from the running means: the iterates of the nonconvex
            // problem circle around a minimizer instead of settling on it.
            let w = 1.0 / AVERAGE_PERIOD as f64;
            for i in 0..n {
                take_mean(&mut acc_u[i], &mut u[i], w);
                take_mean(&mut acc_px[i], &mut px[i], w);
                take_mean(&mut acc_py[i], &mut py[i], w);
            }
            proj.apply(constraint, &mut u)?;
            for i in 0..n {
                ubar[i].copy_from_slice(&u[i]);
            }
            let e = energy_of(&u);
            let settled = averaged.as_ref().is_some_and(|(_, prev)| (prev - e).abs() <= tol * e.abs());
            averaged = Some((u.clone(), e));
            if settled {
                converged = true;
            }
        }
        if it % TRACE_STRIDE == 0 || it == max_iter || converged {
            let e = energy_of(&u);
            last_residual = match constraint {
                Constraint::Skeleton => residual(&ubar, &inside, h * h),
                Constraint::Signed => signed_residual(&ubar[0], &inside, h * h),
            };
            energy_trace.push(e);
            residual_trace.push(last_residual);
            if converged || (it % TRACE_STRIDE == 0 && stop.push(e)) {
                converged = true;
                break;
            }
        }
    }
    let mut energy = energy_of(&u);
    if let Some((avg, e)) = averaged {
        if !converged && e < energy {
            u = avg;
            energy = e;
        }
    }
    Ok(LevelOutcome {
        state: State { u, px, py },
        energy,
        iterations,
        energy_trace,
        residual_trace,
        residual: last_residual,
        converged,
    })
}

/// Initial chamber indicators for restart `k`: packed balls for `k = 0`
/// (Voronoi cells of spread-out seeds if they do not fit), Voronoi cells of
/// seeded random pixels otherwise.
fn initial_partition(dom: &GridDomain, n: usize, seed: u64, k: usize) -> Vec<Vec<f64>> {
    let inside = inside_list(dom);
    if k == 0 {
        if let Ok(balls) = pack_balls(dom, n) {
            return balls.iter().map(|b| ball_indicator(dom, b)).collect();
        }
        return voronoi_partition(dom, &inside, &farthest_seeds(dom, &inside, n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
    let seeds: Vec<usize> = sample(&mut rng, inside.len(), n).into_iter().map(|s| inside[s] as usize).collect();
    voronoi_partition(dom, &inside, &seeds)
}

fn pixel_coords(dom: &GridDomain, k: usize) -> (f64, f64) {
    ((k % dom.nx()) as f64, (k / dom.nx()) as f64)
}

/// Farthest-point seeds: the pixel farthest from the centroid, then
/// repeatedly the pixel farthest from the seeds so far. Two seeds on a disc
/// end up on opposite ends of a diameter.
fn farthest_seeds(dom: &GridDomain, inside: &[u32], n: usize) -> Vec<usize> {
    let m = inside.len() as f64;
    let (cx, cy) = inside.iter().fold((0.0, 0.0), |(sx, sy), &k| {
        let (x, y) = pixel_coords(dom, k as usize);
        (sx + x / m, sy + y / m)
    });
    let mut dist: Vec<f64> = inside
        .iter()
        .map(|&k| {
            let (x, y) = pixel_coords(dom, k as usize);
            (x - cx).powi(2) + (y - cy).powi(2)
        })
        .collect();
    let mut seeds = Vec::with_capacity(n);
    for _ in 0..n {
        // first maximum, so ties resolve by pixel order
        let mut far = 0;
        for (q, &d) in dist.iter().enumerate() {
            if d > dist[far] {
                far = q;
            }
        }
        let s = inside[far] as usize;
        seeds.push(s);
        let (sx, sy) = pixel_coords(dom, s);
        let first = seeds.len() == 1;
        for (d, &k) in dist.iter_mut().zip(inside) {
            let (x, y) = pixel_coords(dom, k as usize);
            let e = (x - sx).powi(2) + (y - sy).powi(2);
            *d = if first { e } else { d.min(e) };
        }
    }
    seeds
}

fn voronoi_partition(dom: &GridDomain, inside: &[u32], seeds: &[usize]) -> Vec<Vec<f64>> {
    let mut fields = vec![vec![0.0; dom.len()]; seeds.len()];
    for &k in inside {
        let k = k as usize;
        let (x, y) = pixel_coords(dom, k);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &s) in seeds.iter().enumerate() {
            let (sx, sy) = pixel_coords(dom, s);
            let d = (x - sx).powi(2) + (y - sy).powi(2);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        fields[best][k] = 1.0;
    }
    fields
}

/// Ball of radius `radius` (length units) around pixel `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackedBall {
    pub center: (f64, f64),
    pub radius: f64,
}

fn ball_indicator(dom: &GridDomain, b: &PackedBall) -> Vec<f64> {
    let mut out = vec![0.0; dom.len()];
    for j in 0..dom.ny() {
        for i in 0..dom.nx() {
            let k = dom.index(i, j);
            let (x, y) = dom.center(i, j);
            if dom.inside(k) && (x - b.center.0).powi(2) + (y - b.center.1).powi(2) <= b.radius * b.radius {
                out[k] = 1.0;
            }
        }
    }
    out
}

/// Greedy packing of `n` disjoint discs inside the union of the domain's
/// pixels: each disc is the largest one centered at a pixel center that
/// avoids the outside pixels and the previous discs.
pub fn pack_balls(dom: &GridDomain, n: usize) -> Result<Vec<PackedBall>> {
    let h = dom.h();
    let outside: Vec<bool> = dom.mask().iter().map(|&m| !m).collect();
    let d2 = squared_edt(dom.nx(), dom.ny(), &outside);
    let half_diag = std::f64::consts::FRAC_1_SQRT_2;
    let mut avail: Vec<f64> = d2.iter().map(|&d| d.sqrt() - half_diag).collect();
    let mut balls = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = None;
        let mut best_r = f64::NEG_INFINITY;
        for (k, &a) in avail.iter().enumerate() {
            if dom.inside(k) && a > best_r {
                best = Some(k);
                best_r = a;
            }
        }
        let k = best.ok_or(Error::DomainTooSmall(n))?;
        if best_r < 4.0 {
            return Err(Error::DomainTooSmall(n));
        }
        let (ci, cj) = ((k % dom.nx()) as f64, (k / dom.nx()) as f64);
        for (q, a) in avail.iter_mut().enumerate() {
            let (qi, qj) = ((q % dom.nx()) as f64, (q / dom.nx()) as f64);
            let gap = ((qi - ci).powi(2) + (qj - cj).powi(2)).sqrt() - best_r;
            *a = a.min(gap);
        }
        balls.push(PackedBall { center: dom.center(k % dom.nx(), k / dom.nx()), radius: best_r * h });
    }
    Ok(balls)
}

/// `Σ 2/rᵢ` over the greedy ball packing: the ratio sum of the ball cluster.
pub fn upper_bound_balls(dom: &GridDomain, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("N must be at least 1".into()));
    }
    Ok(pack_balls(dom, n)?.iter().map(|b| 2.0 / b.radius).sum())
}

/// Squared Euclidean distance (pixel units) from every pixel center to the
/// nearest `feature` pixel center (Felzenszwalb–Huttenlocher).
pub(crate) fn squared_edt(nx: usize, ny: usize, feature: &[bool]) -> Vec<f64> {
    const INF: f64 = 1e20;
    let mut grid: Vec<f64> = feature.iter().map(|&f| if f { 0.0 } else { INF }).collect();
    let mut buf_f = vec![0.0; nx.max(ny)];
    let mut buf_d = vec![0.0; nx.max(ny)];
    let mut v = vec![0usize; nx.max(ny)];
    let mut z = vec![0.0; nx.max(ny) + 1];
    for i in 0..nx {
        for j in 0..ny {
            buf_f[j] = grid[j * nx + i];
        }
        edt_1d(&buf_f[..ny], &mut buf_d[..ny], &mut v, &mut z);
        for j in 0..ny {
            grid[j * nx + i] = buf_d[j];
        }
    }
    for j in 0..ny {
        buf_f[..nx].copy_from_slice(&grid[j * nx..(j + 1) * nx]);
        edt_1d(&buf_f[..nx], &mut buf_d[..nx], &mut v, &mut z);
        grid[j * nx..(j + 1) * nx].copy_from_slice(&buf_d[..nx]);
    }
    grid
}

fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if k > 0 && s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, dq) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        *dq = (q as f64 - p as f64).powi(2) + f[p];
    }
}

/// `ψ(s)`: identity below `t`, slope `α` on `[t, T)`, slope 1 above `T`
/// (continuous).
pub fn psi(s: f64, t: f64, big_t: f64, alpha: f64) -> f64 {
    if s < t {
        s
    } else if s < big_t {
        t + alpha * (s - t)
    } else {
        t + alpha * (big_t - t) + (s - big_t)
    }
}

/// Energy of the competitor obtained by deforming component `i` with `ψ`
/// and renormalizing it: `ūⁱ = κ ψ(uⁱ)`, `κ = 1/‖ψ(uⁱ)‖₁`.
pub fn psi_perturb(u: &MultiField, i: usize, t: f64, big_t: f64, alpha: f64) -> Result<f64> {
    if i >= u.n() {
        return Err(Error::InvalidParameter(format!("component {i} out of range for N = {}", u.n())));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    if !(t > 0.0 && t < big_t) {
        return Err(Error::EmptyLevelRange(format!("need 0 < t < T, got t = {t}, T = {big_t}")));
    }
    let c = u.component(i);
    if big_t >= c.max() {
        return Err(Error::EmptyLevelRange(format!("T = {big_t} is not below max u = {}", c.max())));
    }
    let deformed = c.map(|s| if s > 0.0 { psi(s, t, big_t, alpha) } else { 0.0 });
    let kappa = 1.0 / deformed.l1_norm();
    let deformed = deformed.scaled(kappa);
    let others: f64 = u.components().iter().enumerate().filter(|(j, _)| *j != i).map(|(_, c)| tv(c)).sum();
    Ok(others + tv(&deformed))
}
