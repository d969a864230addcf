//! Finite-outcome measurement model: POVMs, joint POVMs indexed by outcome
//! tuples, the noisy qubit observable family, and coarse-graining.

use indexmap::IndexMap;
use num_complex::Complex64;
use thiserror::Error;

use crate::config::Tolerances;
use crate::linalg::{HermitianMatrix, LinalgError};

#[derive(Debug, Error)]
pub enum PovmError {
    #[error("outcome label must be nonempty and must not contain '|'")]
    BadLabel,
    #[error("duplicate outcome label \"{0}\"")]
    DuplicateLabel(String),
    #[error("a POVM needs at least 2 outcomes, got {0}")]
    TooFewOutcomes(usize),
    #[error("effect \"{label}\" has dimension {got}, expected {expected}")]
    EffectDimMismatch {
        label: String,
        got: usize,
        expected: usize,
    },
    #[error("effect \"{label}\": not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { label: String, min_eig: f64 },
    #[error("completeness residual exceeded: ||sum E - I||_F = {0:.3e}")]
    Incomplete(f64),
    #[error("direction must be a unit vector (norm deviates by {0:.3e})")]
    NotUnit(f64),
    #[error("visibility must lie in [0, 1], got {0}")]
    BadVisibility(f64),
    #[error("Bloch vector must have norm <= 1, got {0}")]
    BadBloch(f64),
    #[error("joint outcome tuples must form the full product of component outcome sets")]
    IncompleteTupleSet,
    #[error("tuple {0:?} does not match the component outcome sets")]
    UnknownTuple(Vec<String>),
    #[error("marginalization needs a nonempty set of valid component indices")]
    BadMarginalIndices,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Outcome label: nonempty text, unique within one POVM. The tuple separator
/// `'|'` is excluded so joint outcome keys stay unambiguous.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutcomeLabel(String);

impl OutcomeLabel {
    pub fn new(text: impl Into<String>) -> Result<Self, PovmError> {
        let text = text.into();
        if text.is_empty() || text.contains('|') {
            return Err(PovmError::BadLabel);
        }
        Ok(OutcomeLabel(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for OutcomeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Validation outcome for a measurement: the worst PSD defect and the
/// distance of the effect sum from the identity.
#[derive(Debug, Clone, Copy)]
pub struct ValidationReport {
    /// Smallest eigenvalue across all effects (negative means a PSD defect).
    pub min_eigenvalue: f64,
    /// `||sum of effects - I||_F`.
    pub completeness_residual: f64,
    pub passed: bool,
}

/// Finite-outcome POVM: an ordered family of effects on a fixed dimension.
///
/// Construction checks structure only (labels, dimensions, outcome count);
/// use [`Povm::validate`] or [`Povm::validated`] for the PSD and completeness
/// invariants, which keeps deliberately broken families expressible in tests
/// and lets the feasibility solver attach near-feasible witnesses.
#[derive(Debug, Clone, PartialEq)]
pub struct Povm {
    dim: usize,
    effects: IndexMap<OutcomeLabel, HermitianMatrix>,
}

impl Povm {
    pub fn new(
        dim: usize,
        effects: Vec<(impl Into<String>, HermitianMatrix)>,
    ) -> Result<Self, PovmError> {
        if effects.len() < 2 {
            return Err(PovmError::TooFewOutcomes(effects.len()));
        }
        let mut map = IndexMap::with_capacity(effects.len());
        for (label, effect) in effects {
            let label = OutcomeLabel::new(label)?;
            if effect.dim() != dim {
                return Err(PovmError::EffectDimMismatch {
                    label: label.0,
                    got: effect.dim(),
                    expected: dim,
                });
            }
            if map.insert(label.clone(), effect).is_some() {
                return Err(PovmError::DuplicateLabel(label.0));
            }
        }
        Ok(Povm { dim, effects: map })
    }

    /// Construction plus invariant enforcement in one step.
    pub fn validated(
        dim: usize,
        effects: Vec<(impl Into<String>, HermitianMatrix)>,
        tol: &Tolerances,
    ) -> Result<Self, PovmError> {
        let povm = Self::new(dim, effects)?;
        povm.check(tol)?;
        Ok(povm)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_outcomes(&self) -> usize {
        self.effects.len()
    }

    pub fn labels(&self) -> impl Iterator<Item = &OutcomeLabel> {
        self.effects.keys()
    }

    pub fn effect(&self, label: &OutcomeLabel) -> Option<&HermitianMatrix> {
        self.effects.get(label)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OutcomeLabel, &HermitianMatrix)> {
        self.effects.iter()
    }

    pub fn effects(&self) -> impl Iterator<Item = &HermitianMatrix> {
        self.effects.values()
    }

    /// Reports the PSD and completeness residuals against the tolerances.
    pub fn validate(&self, tol: &Tolerances) -> ValidationReport {
        let min_eigenvalue = self
            .effects
            .values()
            .map(|e| e.min_eigenvalue())
            .fold(f64::INFINITY, f64::min);
        let mut sum = HermitianMatrix::zeros(self.dim);
        for e in self.effects.values() {
            sum = sum.add(e).expect("dims checked at construction");
        }
        let completeness_residual = sum
            .frob_dist(&HermitianMatrix::identity(self.dim))
            .expect("same dim");
        ValidationReport {
            min_eigenvalue,
            completeness_residual,
            passed: min_eigenvalue >= -tol.psd && completeness_residual <= tol.complete,
        }
    }

    /// Like [`Povm::validate`] but with a typed error naming the first defect.
    pub fn check(&self, tol: &Tolerances) -> Result<(), PovmError> {
        for (label, effect) in &self.effects {
            let min_eig = effect.min_eigenvalue();
            if min_eig < -tol.psd {
                return Err(PovmError::NotPsd {
                    label: label.0.clone(),
                    min_eig,
                });
            }
        }
        let report = self.validate(tol);
        if report.completeness_residual > tol.complete {
            return Err(PovmError::Incomplete(report.completeness_residual));
        }
        Ok(())
    }

    /// True iff every effect is a projector within `tol`.
    pub fn is_pvm(&self, tol: f64) -> bool {
        self.effects.values().all(|e| {
            let sq = HermitianMatrix::from_entries(e.dim(), e.matmul(e).expect("same dim"))
                .expect("square of Hermitian is Hermitian");
            sq.frob_dist(e).expect("same dim") <= tol
        })
    }
}

/// Outcome tuple of a joint measurement: one label per component, in
/// component order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OutcomeTuple(pub Vec<OutcomeLabel>);

impl OutcomeTuple {
    pub fn key(&self) -> String {
        self.0
            .iter()
            .map(|l| l.as_str())
            .collect::<Vec<_>>()
            .join("|")
    }
}

impl std::fmt::Display for OutcomeTuple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.key())
    }
}

/// Joint POVM: a POVM indexed by outcome tuples, carrying the component
/// measurements it is declared to marginalize to. The tuple index set is
/// always the full Cartesian product of the component outcome sets, in
/// row-major order with the first component varying slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPovm {
    components: Vec<Povm>,
    effects: IndexMap<OutcomeTuple, HermitianMatrix>,
}

/// Enumerates the full outcome-tuple set for the given components, first
/// component slowest.
pub fn outcome_tuples(components: &[Povm]) -> Vec<OutcomeTuple> {
    let mut acc: Vec<Vec<OutcomeLabel>> = vec![Vec::new()];
    for c in components {
        let mut next = Vec::with_capacity(acc.len() * c.n_outcomes());
        for prefix in &acc {
            for label in c.labels() {
                let mut t = prefix.clone();
                t.push(label.clone());
                next.push(t);
            }
        }
        acc = next;
    }
    acc.into_iter().map(OutcomeTuple).collect()
}

impl JointPovm {
    /// Builds a joint POVM from per-tuple effects. The map must cover exactly
    /// the full product of the component outcome sets; effects are re-ordered
    /// into canonical tuple order.
    pub fn new(
        components: Vec<Povm>,
        mut effects: IndexMap<OutcomeTuple, HermitianMatrix>,
    ) -> Result<Self, PovmError> {
        let dim = components
            .first()
            .map(|c| c.dim())
            .ok_or(PovmError::BadMarginalIndices)?;
        for c in &components {
            if c.dim() != dim {
                return Err(PovmError::EffectDimMismatch {
                    label: String::from("<component>"),
                    got: c.dim(),
                    expected: dim,
                });
            }
        }
        let tuples = outcome_tuples(&components);
        if effects.len() != tuples.len() {
            // name a concrete offender if there is one
            for key in effects.keys() {
                if !tuples.contains(key) {
                    return Err(PovmError::UnknownTuple(
                        key.0.iter().map(|l| l.0.clone()).collect(),
                    ));
                }
            }
            return Err(PovmError::IncompleteTupleSet);
        }
        let mut ordered = IndexMap::with_capacity(tuples.len());
        for t in tuples {
            let effect = effects.shift_remove(&t).ok_or(PovmError::IncompleteTupleSet)?;
            if effect.dim() != dim {
                return Err(PovmError::EffectDimMismatch {
                    label: t.key(),
                    got: effect.dim(),
                    expected: dim,
                });
            }
            ordered.insert(t, effect);
        }
        Ok(JointPovm {
            components,
            effects: ordered,
        })
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Povm] {
        &self.components
    }

    pub fn n_tuples(&self) -> usize {
        self.effects.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OutcomeTuple, &HermitianMatrix)> {
        self.effects.iter()
    }

    pub fn effect(&self, tuple: &OutcomeTuple) -> Option<&HermitianMatrix> {
        self.effects.get(tuple)
    }

    /// Validation over the tuple-indexed family, same residuals as a POVM.
    pub fn validate(&self, tol: &Tolerances) -> ValidationReport {
        self.as_flat_povm().validate(tol)
    }

    /// The tuple family viewed as a plain POVM keyed by joined labels.
    pub fn as_flat_povm(&self) -> Povm {
        let effects: Vec<(String, HermitianMatrix)> = self
            .effects
            .iter()
            .map(|(t, e)| (t.key().replace('|', ";"), e.clone()))
            .collect();
        Povm::new(self.dim(), effects).expect("tuple family is structurally a POVM")
    }

    /// Sums effects over the discarded tuple positions. `keep` lists the
    /// component indices to retain, in the order they should appear.
    pub fn marginalize(&self, keep: &[usize]) -> Result<Marginal, PovmError> {
        if keep.is_empty() || keep.iter().any(|&i| i >= self.components.len()) {
            return Err(PovmError::BadMarginalIndices);
        }
        let mut seen = std::collections::HashSet::new();
        if !keep.iter().all(|i| seen.insert(*i)) {
            return Err(PovmError::BadMarginalIndices);
        }
        let kept_components: Vec<Povm> = keep.iter().map(|&i| self.components[i].clone()).collect();
        let kept_tuples = outcome_tuples(&kept_components);
        let dim = self.dim();
        let mut sums: IndexMap<OutcomeTuple, HermitianMatrix> = kept_tuples
            .into_iter()
            .map(|t| (t, HermitianMatrix::zeros(dim)))
            .collect();
        for (tuple, effect) in &self.effects {
            let sub = OutcomeTuple(keep.iter().map(|&i| tuple.0[i].clone()).collect());
            let slot = sums.get_mut(&sub).expect("projection of a full tuple");
            *slot = slot.add(effect)?;
        }
        if keep.len() == 1 {
            let effects: Vec<(String, HermitianMatrix)> = sums
                .into_iter()
                .map(|(t, e)| (t.0[0].0.clone(), e))
                .collect();
            Ok(Marginal::Single(Povm::new(dim, effects)?))
        } else {
            Ok(Marginal::Joint(JointPovm::new(kept_components, sums)?))
        }
    }

    /// Single-component marginal as a plain POVM.
    pub fn marginal(&self, index: usize) -> Result<Povm, PovmError> {
        match self.marginalize(&[index])? {
            Marginal::Single(p) => Ok(p),
            Marginal::Joint(_) => unreachable!("one kept index yields a single POVM"),
        }
    }
}

/// Result of coarse-graining a joint POVM.
#[derive(Debug, Clone)]
pub enum Marginal {
    Single(Povm),
    Joint(JointPovm),
}

impl Marginal {
    pub fn into_joint(self) -> Option<JointPovm> {
        match self {
            Marginal::Joint(j) => Some(j),
            Marginal::Single(_) => None,
        }
    }

    pub fn into_single(self) -> Option<Povm> {
        match self {
            Marginal::Single(p) => Some(p),
            Marginal::Joint(_) => None,
        }
    }
}

/// Binary unsharp qubit observable: Bloch direction plus visibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyQubitObservable {
    direction: [f64; 3],
    eta: f64,
}

const UNIT_NORM_TOL: f64 = 1e-12;

impl NoisyQubitObservable {
    pub fn new(direction: [f64; 3], eta: f64) -> Result<Self, PovmError> {
        let norm = (direction[0] * direction[0]
            + direction[1] * direction[1]
            + direction[2] * direction[2])
            .sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(PovmError::NotUnit((norm - 1.0).abs()));
        }
        if !(0.0..=1.0).contains(&eta) || eta.is_nan() {
            return Err(PovmError::BadVisibility(eta));
        }
        Ok(NoisyQubitObservable { direction, eta })
    }

    pub fn direction(&self) -> [f64; 3] {
        self.direction
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Scaled Bloch vector `eta * n`.
    pub fn weighted_direction(&self) -> [f64; 3] {
        [
            self.eta * self.direction[0],
            self.eta * self.direction[1],
            self.eta * self.direction[2],
        ]
    }

    /// The binary POVM with effects `(I +/- eta n.sigma)/2`, outcomes "+"/"-".
    pub fn to_povm(&self) -> Povm {
        let ns = bloch_operator(self.direction);
        let half_id = HermitianMatrix::identity(2).scale(0.5);
        let tilt = ns.scale(0.5 * self.eta);
        let plus = half_id.add(&tilt).expect("dim 2");
        let minus = half_id.sub(&tilt).expect("dim 2");
        Povm::new(2, vec![("+", plus), ("-", minus)]).expect("binary effects")
    }
}

/// `n . sigma` for a 3-vector (not necessarily unit).
pub fn bloch_operator(n: [f64; 3]) -> HermitianMatrix {
    let (nx, ny, nz) = (n[0], n[1], n[2]);
    HermitianMatrix::from_entries(
        2,
        vec![
            Complex64::new(nz, 0.0),
            Complex64::new(nx, -ny),
            Complex64::new(nx, ny),
            Complex64::new(-nz, 0.0),
        ],
    )
    .expect("Pauli combination is Hermitian")
}

/// Convenience constructor for the noisy qubit family.
pub fn noisy_qubit(direction: [f64; 3], eta: f64) -> Result<Povm, PovmError> {
    Ok(NoisyQubitObservable::new(direction, eta)?.to_povm())
}

/// Qubit state by Bloch vector, `||b|| <= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitState {
    bloch: [f64; 3],
}

impl QubitState {
    pub fn new(bloch: [f64; 3]) -> Result<Self, PovmError> {
        let norm = (bloch[0] * bloch[0] + bloch[1] * bloch[1] + bloch[2] * bloch[2]).sqrt();
        if norm > 1.0 + UNIT_NORM_TOL {
            return Err(PovmError::BadBloch(norm));
        }
        Ok(QubitState { bloch })
    }

    /// Pure state along a unit direction.
    pub fn pure(direction: [f64; 3]) -> Result<Self, PovmError> {
        let norm = (direction[0] * direction[0]
            + direction[1] * direction[1]
            + direction[2] * direction[2])
            .sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(PovmError::NotUnit((norm - 1.0).abs()));
        }
        Ok(QubitState {
            bloch: [
                direction[0] / norm,
                direction[1] / norm,
                direction[2] / norm,
            ],
        })
    }

    pub fn bloch(&self) -> [f64; 3] {
        self.bloch
    }

    /// Density operator `(I + b.sigma)/2`.
    pub fn density(&self) -> HermitianMatrix {
        HermitianMatrix::identity(2)
            .add(&bloch_operator(self.bloch))
            .expect("dim 2")
            .scale(0.5)
    }
}

/// Three coplanar unit vectors at mutual angle 120 degrees (pairwise dot
/// product -1/2), spanning the x-z plane.
pub fn trine_directions() -> [[f64; 3]; 3] {
    let h = 3f64.sqrt() / 2.0;
    [[0.0, 0.0, 1.0], [h, 0.0, -0.5], [-h, 0.0, -0.5]]
}
