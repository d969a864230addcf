//! Convex feasibility for joint measurability, and linear optimization over
//! joint POVMs.
//!
//! A joint POVM for given marginal targets is a point in the intersection of
//! two convex sets in the space of tuple-indexed Hermitian families: the
//! product of PSD cones and the affine set of families with prescribed
//! marginals. [`decide_joint`] runs Dykstra's alternating projections between
//! the two; the correction term is kept on the cone side only, the affine
//! side needs none. For disjoint sets the residual converges to the positive
//! set distance, which is the infeasibility signal. Verdicts are tri-state:
//! near-threshold instances that converge into the gray zone stay UNDECIDED
//! rather than being silently misclassified.

use num_complex::Complex64;
use thiserror::Error;

use crate::config::Tolerances;
use crate::linalg::{identity_raw, jacobi_hermitian, HermitianMatrix, LinalgError};
use crate::povm::{
    outcome_tuples, JointPovm, NoisyQubitObservable, OutcomeTuple, Povm, PovmError,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Residual below which a gray-zone verdict leans feasible when a binary
/// answer is forced (threshold bisection); geometric midpoint of the zone.
pub const GRAY_MIDPOINT: f64 = 1e-6;

/// Mutual-consistency tolerance for marginal targets.
const TARGET_CONSISTENCY_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("inconsistent marginal targets: {0}")]
    InconsistentTargets(String),
    #[error("problem needs at least one component POVM")]
    Empty,
    #[error("component dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("2-joint {0} must have exactly 2 components, got {1}")]
    NotAPair(usize, usize),
    #[error("objective indexes tuple {0:?} outside the problem's outcome set")]
    BadObjectiveTuple(String),
    #[error("linear maximization needs a feasible problem; feasibility solve returned {0:?} (residual {1:.3e})")]
    NotFeasible(Verdict, f64),
    #[error("no sign change on the bracket: lo is {lo:?}, hi is {hi:?}")]
    NoSignChange { lo: Verdict, hi: Verdict },
    #[error("bracket is empty or reversed: [{0}, {1}]")]
    BadBracket(f64, f64),
    #[error(transparent)]
    Povm(#[from] PovmError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// How the affine marginal constraints are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    /// The joint must marginalize to the given single POVMs.
    MarginalsOfSingles,
    /// A 3-component joint must marginalize to three given 2-joints.
    MarginalsOfPairs,
}

/// Solver knobs. Defaults follow the crate-wide numeric contract; anything
/// tighter is opt-in per call site.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Outer Dykstra iteration budget.
    pub max_iters: usize,
    /// Marginal residual at or below which the PSD iterate is a witness.
    pub feas_tol: f64,
    /// Converged residual at or above which the problem is infeasible.
    pub infeas_tol: f64,
    /// Stall detection compares residual minima across windows of this size.
    pub stall_window: usize,
    /// Relative per-window progress below which the residual counts as
    /// converged.
    pub stall_rel: f64,
    pub seed: u64,
    /// Frobenius norm of the seeded start perturbation (start_index > 0).
    pub perturbation: f64,
    /// 0 starts from the uniform joint; k > 0 adds the k-th seeded
    /// perturbation for multi-start runs.
    pub start_index: usize,
    /// Marginal residual target for inner projections (gradient ascent).
    pub inner_feas_tol: f64,
    pub inner_max_iters: usize,
    /// Gradient-ascent step is `pga_step / sqrt(k)` along the normalized
    /// objective.
    pub pga_step: f64,
    pub pga_max_iters: usize,
    /// Ascent stops once the best value improves by less than
    /// `pga_stall_rel` (relative) over this many iterations.
    pub pga_stall_window: usize,
    pub pga_stall_rel: f64,
    /// Bracket width target for threshold bisection.
    pub bisect_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 50_000,
            feas_tol: 1e-7,
            infeas_tol: 1e-5,
            stall_window: 500,
            stall_rel: 1e-8,
            seed: 42,
            perturbation: 1e-3,
            start_index: 0,
            inner_feas_tol: 1e-9,
            inner_max_iters: 50_000,
            pga_step: 0.5,
            pga_max_iters: 20_000,
            pga_stall_window: 50,
            pga_stall_rel: 1e-9,
            bisect_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Verdict {
    #[serde(rename = "FEASIBLE")]
    Feasible,
    #[serde(rename = "INFEASIBLE")]
    Infeasible,
    #[serde(rename = "UNDECIDED")]
    Undecided,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Feasible => "FEASIBLE",
            Verdict::Infeasible => "INFEASIBLE",
            Verdict::Undecided => "UNDECIDED",
        };
        f.write_str(s)
    }
}

/// Outcome of a feasibility solve.
#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub verdict: Verdict,
    /// Marginal residual of the final PSD iterate.
    pub residual: f64,
    /// Converged distance estimate between the cone and affine sets; zero
    /// unless the verdict is INFEASIBLE. An estimate from the converged
    /// residual, not a dual certificate.
    pub gap_lower_bound: f64,
    pub iterations: usize,
    /// PSD family with marginal residual <= feas_tol, when feasible.
    pub witness: Option<JointPovm>,
}

impl FeasibilityReport {
    /// Collapses the tri-state verdict for callers that need a boolean (e.g.
    /// bisection): gray-zone verdicts lean by residual against
    /// [`GRAY_MIDPOINT`].
    pub fn leans_feasible(&self) -> bool {
        match self.verdict {
            Verdict::Feasible => true,
            Verdict::Infeasible => false,
            Verdict::Undecided => self.residual < GRAY_MIDPOINT,
        }
    }
}

/// A joint-existence question: which components, and which marginals pin the
/// joint down.
#[derive(Debug, Clone)]
pub struct FeasibilityProblem {
    dim: usize,
    mode: ConstraintMode,
    components: Vec<Povm>,
    /// Pairs mode only: the three 2-joints, pair k covering slots (k, k+1 mod 3).
    pair_targets: Vec<JointPovm>,
}

impl FeasibilityProblem {
    /// Joint over the given singles: the joint's i-th marginal must equal
    /// `povms[i]`.
    pub fn from_singles(povms: &[Povm], tol: &Tolerances) -> Result<Self, SolverError> {
        if povms.is_empty() {
            return Err(SolverError::Empty);
        }
        let dim = povms[0].dim();
        for p in povms {
            if p.dim() != dim {
                return Err(SolverError::DimMismatch(dim, p.dim()));
            }
            p.check(tol)
                .map_err(|e| SolverError::InconsistentTargets(e.to_string()))?;
        }
        Ok(FeasibilityProblem {
            dim,
            mode: ConstraintMode::MarginalsOfSingles,
            components: povms.to_vec(),
            pair_targets: Vec::new(),
        })
    }

    /// Joint over three observables constrained to marginalize to the three
    /// given 2-joints; `pairs[k]` must join observables (k, k+1 mod 3). All
    /// three must induce identical singles within 1e-8.
    pub fn from_pairs(pairs: &[JointPovm; 3], _tol: &Tolerances) -> Result<Self, SolverError> {
        let dim = pairs[0].dim();
        for (k, p) in pairs.iter().enumerate() {
            if p.n_components() != 2 {
                return Err(SolverError::NotAPair(k, p.n_components()));
            }
            if p.dim() != dim {
                return Err(SolverError::DimMismatch(dim, p.dim()));
            }
        }
        // shared singles: observable i appears as slot 0 of pair i and slot 1
        // of pair (i+2) mod 3
        let mut singles = Vec::with_capacity(3);
        for i in 0..3 {
            let a = pairs[i].marginal(0)?;
            let other = (i + 2) % 3;
            let b = pairs[other].marginal(1)?;
            let la: Vec<_> = a.labels().cloned().collect();
            let lb: Vec<_> = b.labels().cloned().collect();
            if la != lb {
                return Err(SolverError::InconsistentTargets(format!(
                    "pair {i} and pair {other} disagree on the outcome labels of observable {i}"
                )));
            }
            let mut residual: f64 = 0.0;
            for (label, ea) in a.iter() {
                residual = residual.max(ea.max_abs_diff(b.effect(label).unwrap())?);
            }
            if residual > TARGET_CONSISTENCY_TOL {
                return Err(SolverError::InconsistentTargets(format!(
                    "pair {i} and pair {other} induce different singles for observable {i} \
                     (entrywise deviation {residual:.3e})"
                )));
            }
            singles.push(a);
        }
        Ok(FeasibilityProblem {
            dim,
            mode: ConstraintMode::MarginalsOfPairs,
            components: singles,
            pair_targets: pairs.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> ConstraintMode {
        self.mode
    }

    pub fn components(&self) -> &[Povm] {
        &self.components
    }

    pub(crate) fn compile(&self) -> Result<Compiled, SolverError> {
        let tuples = outcome_tuples(&self.components);
        let nt = tuples.len();
        let dim = self.dim;
        let dd = dim * dim;
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut targets: Vec<Complex64> = Vec::new();
        match self.mode {
            ConstraintMode::MarginalsOfSingles => {
                for (slot, povm) in self.components.iter().enumerate() {
                    for (label, effect) in povm.iter() {
                        let s: Vec<usize> = (0..nt)
                            .filter(|&t| &tuples[t].0[slot] == label)
                            .collect();
                        members.push(s);
                        targets.extend_from_slice(effect.entries());
                    }
                }
            }
            ConstraintMode::MarginalsOfPairs => {
                for (k, pair) in self.pair_targets.iter().enumerate() {
                    let (sa, sb) = (k, (k + 1) % 3);
                    for (tuple, effect) in pair.iter() {
                        let s: Vec<usize> = (0..nt)
                            .filter(|&t| {
                                tuples[t].0[sa] == tuple.0[0] && tuples[t].0[sb] == tuple.0[1]
                            })
                            .collect();
                        members.push(s);
                        targets.extend_from_slice(effect.entries());
                    }
                }
            }
        }
        let m = members.len();
        let gram_pinv = gram_pseudo_inverse(&members, nt, m);
        let compiled = Compiled {
            dim,
            dd,
            nt,
            m,
            tuples,
            components: self.components.clone(),
            members,
            targets,
            gram_pinv,
        };
        compiled.check_target_consistency()?;
        Ok(compiled)
    }
}

/// Flattened problem: tuple-indexed constraints over raw complex buffers.
pub(crate) struct Compiled {
    pub dim: usize,
    pub dd: usize,
    pub nt: usize,
    pub m: usize,
    pub tuples: Vec<OutcomeTuple>,
    pub components: Vec<Povm>,
    /// Tuple indices entering each constraint.
    pub members: Vec<Vec<usize>>,
    /// Constraint targets, `m` blocks of `dd` entries.
    pub targets: Vec<Complex64>,
    /// Pseudo-inverse of the constraint Gram matrix `|S_k cap S_l|`.
    pub gram_pinv: Vec<f64>,
}

/// Pseudo-inverse of the integer Gram matrix via the Jacobi eigensolver
/// (promoted to a complex buffer; the matrix is real symmetric PSD).
fn gram_pseudo_inverse(members: &[Vec<usize>], nt: usize, m: usize) -> Vec<f64> {
    let mut masks: Vec<Vec<bool>> = vec![vec![false; nt]; m];
    for (k, s) in members.iter().enumerate() {
        for &t in s {
            masks[k][t] = true;
        }
    }
    let mut g = vec![ZERO; m * m];
    for k in 0..m {
        for l in k..m {
            let count = (0..nt).filter(|&t| masks[k][t] && masks[l][t]).count() as f64;
            g[k * m + l] = Complex64::new(count, 0.0);
            g[l * m + k] = Complex64::new(count, 0.0);
        }
    }
    let mut v = identity_raw(m);
    let scale: f64 = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1.0);
    jacobi_hermitian(&mut g, &mut v, m, 1e-14 * scale);
    let eigs: Vec<f64> = (0..m).map(|i| g[i * m + i].re).collect();
    let cutoff = eigs.iter().cloned().fold(0.0, f64::max) * 1e-12;
    let mut pinv = vec![0.0f64; m * m];
    for i in 0..m {
        if eigs[i] <= cutoff {
            continue;
        }
        let inv = 1.0 / eigs[i];
        for k in 0..m {
            let vk = v[k * m + i].re;
            for l in 0..m {
                pinv[k * m + l] += inv * vk * v[l * m + i].re;
            }
        }
    }
    pinv
}

impl Compiled {
    /// The affine set is nonempty iff the target vector lies in the range of
    /// the constraint operator: `(I - G G^+) b = 0` blockwise.
    fn check_target_consistency(&self) -> Result<(), SolverError> {
        let m = self.m;
        let dd = self.dd;
        // u = G^+ b, then w = G u, compare to b
        let mut u = vec![ZERO; m * dd];
        for k in 0..m {
            for l in 0..m {
                let c = self.gram_pinv[k * m + l];
                if c == 0.0 {
                    continue;
                }
                for e in 0..dd {
                    u[k * dd + e] += c * self.targets[l * dd + e];
                }
            }
        }
        let mut worst: f64 = 0.0;
        for k in 0..m {
            let count_with = |l: usize| -> f64 {
                // |S_k cap S_l| recomputed on the fly; m is tiny
                let sk = &self.members[k];
                self.members[l].iter().filter(|t| sk.contains(t)).count() as f64
            };
            for e in 0..dd {
                let mut w = ZERO;
                for l in 0..m {
                    let c = count_with(l);
                    if c != 0.0 {
                        w += c * u[l * dd + e];
                    }
                }
                worst = worst.max((w - self.targets[k * dd + e]).norm());
            }
        }
        if worst > TARGET_CONSISTENCY_TOL {
            return Err(SolverError::InconsistentTargets(format!(
                "targets violate shared-marginal consistency by {worst:.3e}"
            )));
        }
        Ok(())
    }

    fn uniform_start(&self) -> Vec<Complex64> {
        let mut x = vec![ZERO; self.nt * self.dd];
        let w = 1.0 / self.nt as f64;
        for t in 0..self.nt {
            for i in 0..self.dim {
                x[t * self.dd + i * self.dim + i] = Complex64::new(w, 0.0);
            }
        }
        x
    }

    fn start(&self, o: &SolveOptions) -> Vec<Complex64> {
        let mut x = self.uniform_start();
        if o.start_index > 0 {
            use crate::random::{random_hermitian, seeded_rng};
            let mut rng = seeded_rng(o.seed.wrapping_add(o.start_index as u64));
            let mut delta = Vec::with_capacity(self.nt * self.dd);
            for _ in 0..self.nt {
                delta.extend_from_slice(random_hermitian(self.dim, 1.0, &mut rng).entries());
            }
            let norm = delta.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let scale = o.perturbation / norm.max(1e-300);
            for (xi, di) in x.iter_mut().zip(&delta) {
                *xi += scale * di;
            }
        }
        x
    }

    /// Marginal residual of a family: l2 norm over all constraint blocks of
    /// `sum_{t in S_k} y_t - b_k`, with the blocks written into `r`.
    fn residuals(&self, y: &[Complex64], r: &mut [Complex64]) -> f64 {
        let dd = self.dd;
        r.copy_from_slice(&vec![ZERO; self.m * dd]);
        for (k, s) in self.members.iter().enumerate() {
            let block = &mut r[k * dd..(k + 1) * dd];
            for &t in s {
                let src = &y[t * dd..(t + 1) * dd];
                for e in 0..dd {
                    block[e] += src[e];
                }
            }
            for e in 0..dd {
                block[e] -= self.targets[k * dd + e];
            }
        }
        r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Orthogonal projection onto the affine marginal set:
    /// `x = y - A^dag (A A^dag)^+ (A y - b)` with `r` holding `A y - b`.
    fn project_affine(&self, y: &[Complex64], r: &[Complex64], x: &mut [Complex64]) {
        let dd = self.dd;
        let m = self.m;
        let mut lam = vec![ZERO; m * dd];
        for k in 0..m {
            for l in 0..m {
                let c = self.gram_pinv[k * m + l];
                if c == 0.0 {
                    continue;
                }
                for e in 0..dd {
                    lam[k * dd + e] += c * r[l * dd + e];
                }
            }
        }
        x.copy_from_slice(y);
        for (k, s) in self.members.iter().enumerate() {
            for &t in s {
                for e in 0..dd {
                    x[t * dd + e] -= lam[k * dd + e];
                }
            }
        }
    }

    fn witness_from(&self, y: &[Complex64]) -> Result<JointPovm, SolverError> {
        let dd = self.dd;
        let mut effects = indexmap::IndexMap::with_capacity(self.nt);
        for (t, tuple) in self.tuples.iter().enumerate() {
            let entries = y[t * dd..(t + 1) * dd].to_vec();
            effects.insert(tuple.clone(), HermitianMatrix::from_entries(self.dim, entries)?);
        }
        Ok(JointPovm::new(self.components.clone(), effects)?)
    }
}

/// Workspace buffers shared across iterations of one solve.
struct Workspace {
    w: Vec<Complex64>,
    v: Vec<Complex64>,
}

impl Workspace {
    fn new(dim: usize) -> Self {
        Workspace {
            w: vec![ZERO; dim * dim],
            v: vec![ZERO; dim * dim],
        }
    }
}

/// Projects one `dim x dim` block onto the PSD cone, in place.
fn psd_project_block(block: &mut [Complex64], dim: usize, ws: &mut Workspace) {
    if dim == 2 {
        psd_project_2x2(block);
        return;
    }
    if dim == 1 {
        block[0] = Complex64::new(block[0].re.max(0.0), 0.0);
        return;
    }
    ws.w.copy_from_slice(block);
    // enforce exact Hermiticity of the scratch copy before rotating
    for i in 0..dim {
        ws.w[i * dim + i] = Complex64::new(ws.w[i * dim + i].re, 0.0);
        for j in (i + 1)..dim {
            let sym = 0.5 * (ws.w[i * dim + j] + ws.w[j * dim + i].conj());
            ws.w[i * dim + j] = sym;
            ws.w[j * dim + i] = sym.conj();
        }
    }
    ws.v.copy_from_slice(&identity_raw(dim));
    let scale: f64 = ws.w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1.0);
    jacobi_hermitian(&mut ws.w, &mut ws.v, dim, 1e-13 * scale);
    for e in block.iter_mut() {
        *e = ZERO;
    }
    for k in 0..dim {
        let lam = ws.w[k * dim + k].re;
        if lam <= 0.0 {
            continue;
        }
        for i in 0..dim {
            for j in 0..dim {
                block[i * dim + j] += lam * ws.v[i * dim + k] * ws.v[j * dim + k].conj();
            }
        }
    }
}

fn psd_project_2x2(b: &mut [Complex64]) {
    let a = b[0].re;
    let d = b[3].re;
    let off = 0.5 * (b[1] + b[2].conj());
    let mid = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + off.norm_sqr()).sqrt();
    let lo = mid - disc;
    let hi = mid + disc;
    if lo >= 0.0 {
        b[0] = Complex64::new(a, 0.0);
        b[1] = off;
        b[2] = off.conj();
        b[3] = Complex64::new(d, 0.0);
        return;
    }
    if hi <= 0.0 {
        b.fill(ZERO);
        return;
    }
    // keep only the positive eigenvalue: hi * v v^dag
    let c1 = [off, Complex64::new(hi - a, 0.0)];
    let c2 = [Complex64::new(hi - d, 0.0), off.conj()];
    let n1 = c1[0].norm_sqr() + c1[1].norm_sqr();
    let n2 = c2[0].norm_sqr() + c2[1].norm_sqr();
    let v = if n1 >= n2 { c1 } else { c2 };
    let n = n1.max(n2);
    let w = hi / n;
    b[0] = Complex64::new(w * v[0].norm_sqr(), 0.0);
    b[1] = w * v[0] * v[1].conj();
    b[2] = b[1].conj();
    b[3] = Complex64::new(w * v[1].norm_sqr(), 0.0);
}

struct RunOutcome {
    verdict: Verdict,
    residual: f64,
    gap: f64,
    iterations: usize,
    /// Final PSD iterate.
    y: Vec<Complex64>,
}

fn family_dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Dykstra's alternating projections between the PSD product cone and the
/// affine marginal set, starting from `start`.
fn run_dykstra(c: &Compiled, start: &[Complex64], o: &SolveOptions) -> RunOutcome {
    let n = c.nt * c.dd;
    let mut ws = Workspace::new(c.dim);
    let mut x = start.to_vec();
    let mut p = vec![ZERO; n];
    let mut y = vec![ZERO; n];
    let mut r = vec![ZERO; c.m * c.dd];
    let mut residual = f64::INFINITY;
    let mut window_min = f64::INFINITY;
    let mut prev_window_min = f64::INFINITY;
    for iter in 1..=o.max_iters {
        for i in 0..n {
            let z = x[i] + p[i];
            y[i] = z;
            p[i] = z;
        }
        for t in 0..c.nt {
            psd_project_block(&mut y[t * c.dd..(t + 1) * c.dd], c.dim, &mut ws);
        }
        for i in 0..n {
            p[i] -= y[i];
        }
        residual = c.residuals(&y, &mut r);
        window_min = window_min.min(residual);
        if residual <= o.feas_tol {
            return RunOutcome {
                verdict: Verdict::Feasible,
                residual,
                gap: 0.0,
                iterations: iter,
                y,
            };
        }
        c.project_affine(&y, &r, &mut x);
        if iter % o.stall_window == 0 {
            let progress = prev_window_min - window_min;
            if progress <= window_min * o.stall_rel {
                // residual has converged; classify by magnitude
                let gap = family_dist(&y, &x);
                let verdict = if residual >= o.infeas_tol {
                    Verdict::Infeasible
                } else {
                    Verdict::Undecided
                };
                return RunOutcome {
                    verdict,
                    residual,
                    gap: if verdict == Verdict::Infeasible { gap } else { 0.0 },
                    iterations: iter,
                    y,
                };
            }
            prev_window_min = window_min;
            window_min = f64::INFINITY;
        }
    }
    RunOutcome {
        verdict: Verdict::Undecided,
        residual,
        gap: 0.0,
        iterations: o.max_iters,
        y,
    }
}

/// Decides whether a joint POVM with the prescribed marginals exists.
///
/// FEASIBLE comes with a witness whose effects are PSD to machine precision
/// and whose marginal residual is at most `feas_tol`. INFEASIBLE reports the
/// converged estimate of the distance between the constraint sets.
pub fn decide_joint(
    problem: &FeasibilityProblem,
    o: &SolveOptions,
) -> Result<FeasibilityReport, SolverError> {
    let compiled = problem.compile()?;
    let start = compiled.start(o);
    let run = run_dykstra(&compiled, &start, o);
    let witness = if run.verdict == Verdict::Feasible {
        Some(compiled.witness_from(&run.y)?)
    } else {
        None
    };
    Ok(FeasibilityReport {
        verdict: run.verdict,
        residual: run.residual,
        gap_lower_bound: run.gap,
        iterations: run.iterations,
        witness,
    })
}

/// Tuple-indexed Hermitian objective for [`maximize_linear`]. Tuples not
/// listed carry a zero matrix.
#[derive(Debug, Clone, Default)]
pub struct Objective {
    pub terms: Vec<(OutcomeTuple, HermitianMatrix)>,
}

impl Objective {
    fn flatten(&self, c: &Compiled) -> Result<Vec<Complex64>, SolverError> {
        let mut w = vec![ZERO; c.nt * c.dd];
        for (tuple, matrix) in &self.terms {
            let t = c
                .tuples
                .iter()
                .position(|u| u == tuple)
                .ok_or_else(|| SolverError::BadObjectiveTuple(tuple.key()))?;
            if matrix.dim() != c.dim {
                return Err(SolverError::DimMismatch(c.dim, matrix.dim()));
            }
            for (e, val) in matrix.entries().iter().enumerate() {
                w[t * c.dd + e] += val;
            }
        }
        Ok(w)
    }
}

fn family_inner(w: &[Complex64], y: &[Complex64]) -> f64 {
    w.iter().zip(y).map(|(a, b)| (a.conj() * b).re).sum()
}

/// Projects `point` onto the feasible intersection by running Dykstra until
/// the marginal residual drops below `tol` (or the budget runs out); returns
/// the PSD iterate and its residual.
fn project_to_feasible(
    c: &Compiled,
    point: &[Complex64],
    tol: f64,
    max_iters: usize,
    o: &SolveOptions,
) -> (Vec<Complex64>, f64) {
    let inner_opts = SolveOptions {
        feas_tol: tol,
        max_iters,
        // projection of a near-feasible point: disable infeasibility stalls
        stall_window: usize::MAX,
        ..o.clone()
    };
    let run = run_dykstra(c, point, &inner_opts);
    (run.y, run.residual)
}

/// Outcome of a linear maximization over the feasible joints.
#[derive(Debug, Clone)]
pub struct LinearMaxReport {
    pub value: f64,
    pub argmax: JointPovm,
    pub iterations: usize,
    /// Marginal residual of the reported argmax.
    pub residual: f64,
}

/// Maximizes `sum_t <W_t, M_t>` over joint POVMs with the problem's
/// marginals: projected gradient ascent with diminishing steps and
/// best-iterate memory, each step re-projected onto the feasible set by an
/// inner Dykstra loop.
pub fn maximize_linear(
    problem: &FeasibilityProblem,
    objective: &Objective,
    o: &SolveOptions,
) -> Result<LinearMaxReport, SolverError> {
    let compiled = problem.compile()?;
    let w = objective.flatten(&compiled)?;
    let wnorm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();

    let feas = run_dykstra(&compiled, &compiled.start(o), o);
    if feas.verdict != Verdict::Feasible {
        return Err(SolverError::NotFeasible(feas.verdict, feas.residual));
    }
    if wnorm == 0.0 {
        // constant objective: any feasible point is optimal
        let witness = compiled.witness_from(&feas.y)?;
        return Ok(LinearMaxReport {
            value: 0.0,
            argmax: witness,
            iterations: feas.iterations,
            residual: feas.residual,
        });
    }

    let dir: Vec<Complex64> = w.iter().map(|z| z / wnorm).collect();
    let mut z = feas.y.clone();
    let mut best = feas.y;
    let mut best_val = family_inner(&w, &best);
    let mut window_anchor = best_val;
    let mut total_iters = feas.iterations;
    for k in 1..=o.pga_max_iters {
        let step = o.pga_step / (k as f64).sqrt();
        for (zi, di) in z.iter_mut().zip(&dir) {
            *zi += step * di;
        }
        let (proj, _res) =
            project_to_feasible(&compiled, &z, o.inner_feas_tol, o.inner_max_iters, o);
        z = proj;
        total_iters += 1;
        let val = family_inner(&w, &z);
        if val > best_val {
            best_val = val;
            best.copy_from_slice(&z);
        }
        if k % o.pga_stall_window == 0 {
            if best_val - window_anchor <= o.pga_stall_rel * best_val.abs().max(1.0) {
                break;
            }
            window_anchor = best_val;
        }
    }
    // polish the best iterate to tight marginals before reporting
    let (polished, res) = project_to_feasible(&compiled, &best, 1e-10, o.inner_max_iters, o);
    let value = family_inner(&w, &polished);
    let argmax = compiled.witness_from(&polished)?;
    Ok(LinearMaxReport {
        value,
        argmax,
        iterations: total_iters,
        residual: res,
    })
}

/// Conditional 3-joint existence: whether one parent measurement can
/// marginalize to all three given 2-joints at once.
pub fn exists_3joint_given_2joints(
    pairs: &[JointPovm; 3],
    tol: &Tolerances,
    o: &SolveOptions,
) -> Result<FeasibilityReport, SolverError> {
    let problem = FeasibilityProblem::from_pairs(pairs, tol)?;
    decide_joint(&problem, o)
}

/// Bisection for the visibility threshold of a monotone feasibility family:
/// feasible at `lo`, infeasible at `hi`. Gray-zone verdicts lean by residual.
/// Returns the midpoint of the final bracket (width <= `o.bisect_tol`).
pub fn threshold_bisection<F>(
    family: F,
    lo: f64,
    hi: f64,
    o: &SolveOptions,
) -> Result<f64, SolverError>
where
    F: Fn(f64) -> Result<FeasibilityProblem, SolverError>,
{
    if !(lo < hi) {
        return Err(SolverError::BadBracket(lo, hi));
    }
    let eval = |eta: f64| -> Result<FeasibilityReport, SolverError> {
        decide_joint(&family(eta)?, o)
    };
    let lo_rep = eval(lo)?;
    let hi_rep = eval(hi)?;
    if !lo_rep.leans_feasible() || hi_rep.leans_feasible() {
        return Err(SolverError::NoSignChange {
            lo: lo_rep.verdict,
            hi: hi_rep.verdict,
        });
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > o.bisect_tol {
        let mid = 0.5 * (lo + hi);
        if eval(mid)?.leans_feasible() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Analytic 2-compatibility criterion for a pair of unbiased binary qubit
/// observables: with `a = eta_a n_a` and `b = eta_b n_b`, the pair is jointly
/// measurable iff `|a + b| + |a - b| <= 2`. Serves as the independent oracle
/// for the feasibility solver on this family.
pub fn busch_pair_criterion(a: &NoisyQubitObservable, b: &NoisyQubitObservable) -> bool {
    busch_pair_margin(a, b) >= 0.0
}

/// Signed slack of the pair criterion: positive means compatible, with the
/// boundary at zero.
pub fn busch_pair_margin(a: &NoisyQubitObservable, b: &NoisyQubitObservable) -> f64 {
    let va = a.weighted_direction();
    let vb = b.weighted_direction();
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let sum = [va[0] + vb[0], va[1] + vb[1], va[2] + vb[2]];
    let diff = [va[0] - vb[0], va[1] - vb[1], va[2] - vb[2]];
    2.0 - norm(sum) - norm(diff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::povm::{noisy_qubit, trine_directions, QubitState};

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    fn z_pvm() -> Povm {
        Povm::new(
            2,
            vec![
                ("0", HermitianMatrix::diag(&[1.0, 0.0])),
                ("1", HermitianMatrix::diag(&[0.0, 1.0])),
            ],
        )
        .unwrap()
    }

    fn x_pvm() -> Povm {
        let plus = HermitianMatrix::from_real(2, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let minus = HermitianMatrix::from_real(2, &[0.5, -0.5, -0.5, 0.5]).unwrap();
        Povm::new(2, vec![("+", plus), ("-", minus)]).unwrap()
    }

    fn trine_povms(eta: f64) -> Vec<Povm> {
        trine_directions()
            .iter()
            .map(|&d| noisy_qubit(d, eta).unwrap())
            .collect()
    }

    #[test]
    fn z_x_pair_infeasible() {
        let tol = Tolerances::default();
        let problem = FeasibilityProblem::from_singles(&[z_pvm(), x_pvm()], &tol).unwrap();
        let report = decide_joint(&problem, &opts()).unwrap();
        assert_eq!(report.verdict, Verdict::Infeasible);
        assert!(report.gap_lower_bound >= 1e-5);
    }

    #[test]
    fn commuting_pair_feasible_with_witness() {
        let tol = Tolerances::default();
        let ms = [z_pvm(), noisy_qubit([0.0, 0.0, 1.0], 0.5).unwrap()];
        let problem = FeasibilityProblem::from_singles(&ms, &tol).unwrap();
        let report = decide_joint(&problem, &opts()).unwrap();
        assert_eq!(report.verdict, Verdict::Feasible);
        let witness = report.witness.unwrap();
        // witness marginals reproduce the targets at solver tolerance
        for (i, m) in ms.iter().enumerate() {
            let marg = witness.marginal(i).unwrap();
            for (label, effect) in m.iter() {
                assert!(marg.effect(label).unwrap().max_abs_diff(effect).unwrap() <= 1e-7);
            }
        }
        // effects are PSD to machine precision
        for (_, e) in witness.iter() {
            assert!(e.min_eigenvalue() >= -1e-9);
        }
    }

    #[test]
    fn trine_pairs_feasible_at_070() {
        let tol = Tolerances::default();
        let ms = trine_povms(0.70);
        for (i, j) in [(0usize, 1usize), (1, 2), (2, 0)] {
            let problem =
                FeasibilityProblem::from_singles(&[ms[i].clone(), ms[j].clone()], &tol).unwrap();
            let report = decide_joint(&problem, &opts()).unwrap();
            assert_eq!(report.verdict, Verdict::Feasible, "pair ({i},{j})");
        }
    }

    #[test]
    fn trine_triple_infeasible_at_070_feasible_at_060() {
        let tol = Tolerances::default();
        let hi = FeasibilityProblem::from_singles(&trine_povms(0.70), &tol).unwrap();
        assert_eq!(decide_joint(&hi, &opts()).unwrap().verdict, Verdict::Infeasible);
        let lo = FeasibilityProblem::from_singles(&trine_povms(0.60), &tol).unwrap();
        assert_eq!(decide_joint(&lo, &opts()).unwrap().verdict, Verdict::Feasible);
    }

    #[test]
    fn busch_criterion_examples() {
        let dirs = trine_directions();
        // equal-visibility trine pair: compatible iff eta <= sqrt(3) - 1
        let threshold = 3f64.sqrt() - 1.0;
        for &eta in &[0.1, 0.5, 0.7, threshold - 1e-9] {
            let a = NoisyQubitObservable::new(dirs[0], eta).unwrap();
            let b = NoisyQubitObservable::new(dirs[1], eta).unwrap();
            assert!(busch_pair_criterion(&a, &b), "eta = {eta}");
        }
        for &eta in &[threshold + 1e-9, 0.8, 1.0] {
            let a = NoisyQubitObservable::new(dirs[0], eta).unwrap();
            let b = NoisyQubitObservable::new(dirs[1], eta).unwrap();
            assert!(!busch_pair_criterion(&a, &b), "eta = {eta}");
        }
        // sharp noncommuting pair: never compatible
        let a = NoisyQubitObservable::new([0.0, 0.0, 1.0], 1.0).unwrap();
        let b = NoisyQubitObservable::new([1.0, 0.0, 0.0], 1.0).unwrap();
        assert!(!busch_pair_criterion(&a, &b));
        // trivial observable is compatible with everything
        let t = NoisyQubitObservable::new([1.0, 0.0, 0.0], 0.0).unwrap();
        assert!(busch_pair_criterion(&a, &t));
    }

    #[test]
    fn bisection_orthogonal_pair() {
        // Busch slack for orthogonal directions: 2 - 2 sqrt(2) eta, zero at 1/sqrt(2)
        let tol = Tolerances::default();
        let o = opts();
        let family = |eta: f64| {
            let a = noisy_qubit([0.0, 0.0, 1.0], eta).map_err(SolverError::Povm)?;
            let b = noisy_qubit([1.0, 0.0, 0.0], eta).map_err(SolverError::Povm)?;
            FeasibilityProblem::from_singles(&[a, b], &tol)
        };
        let found = threshold_bisection(family, 0.5, 0.9, &o).unwrap();
        assert!(
            (found - 1.0 / 2f64.sqrt()).abs() <= 1e-3,
            "found {found}, expected {}",
            1.0 / 2f64.sqrt()
        );
    }

    #[test]
    fn maximize_zero_objective() {
        let tol = Tolerances::default();
        let problem = FeasibilityProblem::from_singles(
            &[z_pvm(), noisy_qubit([0.0, 0.0, 1.0], 0.5).unwrap()],
            &tol,
        )
        .unwrap();
        let report = maximize_linear(&problem, &Objective::default(), &opts()).unwrap();
        assert_eq!(report.value, 0.0);
        assert!(report.residual <= 1e-7);
    }

    #[test]
    fn maximize_anticorrelation_unique_joint_is_zero() {
        // {Z, Z} has a unique joint with no anticorrelated weight
        let tol = Tolerances::default();
        let problem = FeasibilityProblem::from_singles(&[z_pvm(), z_pvm()], &tol).unwrap();
        let rho = QubitState::pure([0.0, 0.0, 1.0]).unwrap().density();
        let label = |s: &str| crate::povm::OutcomeLabel::new(s).unwrap();
        let objective = Objective {
            terms: vec![
                (OutcomeTuple(vec![label("0"), label("1")]), rho.clone()),
                (OutcomeTuple(vec![label("1"), label("0")]), rho),
            ],
        };
        let report = maximize_linear(&problem, &objective, &opts()).unwrap();
        assert!(report.value.abs() <= 1e-6, "value {}", report.value);
    }

    #[test]
    fn conditional_3joint_products_feasible() {
        let tol = Tolerances::default();
        // three mutually commuting diagonal observables
        let ms = [
            z_pvm(),
            noisy_qubit([0.0, 0.0, 1.0], 0.4).unwrap(),
            noisy_qubit([0.0, 0.0, 1.0], 0.8).unwrap(),
        ];
        let pair = |i: usize, j: usize| {
            crate::sharp::product_joint(&[ms[i].clone(), ms[j].clone()], tol.commute).unwrap()
        };
        let pairs = [pair(0, 1), pair(1, 2), pair(2, 0)];
        let report = exists_3joint_given_2joints(&pairs, &tol, &opts()).unwrap();
        assert_eq!(report.verdict, Verdict::Feasible);
    }

    #[test]
    fn conditional_3joint_trivial_observables_feasible() {
        let tol = Tolerances::default();
        let ms: Vec<Povm> = trine_directions()
            .iter()
            .map(|&d| noisy_qubit(d, 0.0).unwrap())
            .collect();
        let pair = |i: usize, j: usize| {
            crate::sharp::product_joint(&[ms[i].clone(), ms[j].clone()], tol.commute).unwrap()
        };
        let pairs = [pair(0, 1), pair(1, 2), pair(2, 0)];
        let report = exists_3joint_given_2joints(&pairs, &tol, &opts()).unwrap();
        assert_eq!(report.verdict, Verdict::Feasible);
    }

    #[test]
    fn inconsistent_pairs_rejected() {
        let tol = Tolerances::default();
        let ms = trine_povms(0.3);
        let other = noisy_qubit([0.0, 1.0, 0.0], 0.9).unwrap();
        let pair = |a: &Povm, b: &Povm| {
            // dummy 2-joint with the right marginals need not exist for
            // noncommuting pairs, so use commuting stand-ins where needed
            crate::sharp::product_joint(&[a.clone(), b.clone()], 10.0).unwrap()
        };
        // pair 0 joins (M1, M2) but pair 2 joins (M3, other): singles clash
        let pairs = [
            pair(&ms[0], &ms[1]),
            pair(&ms[1], &ms[2]),
            pair(&ms[2], &other),
        ];
        match FeasibilityProblem::from_pairs(&pairs, &tol) {
            Err(SolverError::InconsistentTargets(msg)) => {
                assert!(msg.contains("pair"));
            }
            other => panic!("expected inconsistency error, got {other:?}"),
        }
    }

    #[test]
    fn bisection_rejects_bad_bracket() {
        let tol = Tolerances::default();
        let family = |eta: f64| {
            let a = noisy_qubit([0.0, 0.0, 1.0], eta).map_err(SolverError::Povm)?;
            let b = noisy_qubit([1.0, 0.0, 0.0], eta).map_err(SolverError::Povm)?;
            FeasibilityProblem::from_singles(&[a, b], &tol)
        };
        // both endpoints feasible: no sign change
        assert!(matches!(
            threshold_bisection(family, 0.1, 0.2, &opts()),
            Err(SolverError::NoSignChange { .. })
        ));
    }
}
