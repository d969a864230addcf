//! Joint measurability for families with at most one unsharp member.
//!
//! For such a family, joint measurability is equivalent to pairwise
//! commutation of all effects and the joint is unique: the ordered product of
//! the effects. [`decide`] enforces the sharpness hypothesis, while
//! [`product_joint`] accepts any pairwise commuting family, sharp or not.

use indexmap::IndexMap;
use num_complex::Complex64;
use thiserror::Error;

use crate::config::Tolerances;
use crate::linalg::{commutator_norm, raw_matmul, HermitianMatrix, LinalgError};
use crate::povm::{outcome_tuples, JointPovm, OutcomeLabel, Povm, PovmError};

#[derive(Debug, Error)]
pub enum SharpError {
    #[error("need at least 2 POVMs, got {0}")]
    TooFew(usize),
    #[error("POVM dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("{0} inputs are unsharp; at most one may be (commutation no longer decides the rest)")]
    TooManyUnsharp(usize),
    #[error("product joint requires pairwise commuting effects; worst commutator norm {0:.3e}")]
    NotCommuting(f64),
    #[error("candidate is not a joint for the given POVMs: marginal {index} deviates by {residual:.3e}")]
    MarginalMismatch { index: usize, residual: f64 },
    #[error("candidate component count {got} does not match {expected} POVMs")]
    ComponentCountMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Povm(#[from] PovmError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// The worst cross-POVM effect pair found by the commutation scan.
#[derive(Debug, Clone)]
pub struct CommutatorWitness {
    pub povm_a: usize,
    pub label_a: OutcomeLabel,
    pub povm_b: usize,
    pub label_b: OutcomeLabel,
    pub norm: f64,
}

#[derive(Debug, Clone)]
pub struct CommutativityCheck {
    pub commuting: bool,
    pub max_norm: f64,
    /// Present whenever at least one cross pair exists; the pair with the
    /// largest commutator norm.
    pub worst: Option<CommutatorWitness>,
}

fn check_dims(ms: &[Povm]) -> Result<usize, SharpError> {
    if ms.len() < 2 {
        return Err(SharpError::TooFew(ms.len()));
    }
    let dim = ms[0].dim();
    for m in ms {
        if m.dim() != dim {
            return Err(SharpError::DimMismatch(dim, m.dim()));
        }
    }
    Ok(dim)
}

/// Scans every cross-POVM effect pair and reports the largest commutator norm.
pub fn pairwise_commuting(ms: &[Povm], tol_commute: f64) -> Result<CommutativityCheck, SharpError> {
    check_dims(ms)?;
    let mut max_norm: f64 = 0.0;
    let mut worst: Option<CommutatorWitness> = None;
    for a in 0..ms.len() {
        for b in (a + 1)..ms.len() {
            for (la, ea) in ms[a].iter() {
                for (lb, eb) in ms[b].iter() {
                    let norm = commutator_norm(ea, eb)?;
                    if worst.is_none() || norm > max_norm {
                        max_norm = norm;
                        worst = Some(CommutatorWitness {
                            povm_a: a,
                            label_a: la.clone(),
                            povm_b: b,
                            label_b: lb.clone(),
                            norm,
                        });
                    }
                }
            }
        }
    }
    Ok(CommutativityCheck {
        commuting: max_norm <= tol_commute,
        max_norm,
        worst,
    })
}

/// Ordered product joint `M(t) = M_1(t_1) M_2(t_2) ... M_N(t_N)` for a
/// pairwise commuting family. Commutativity makes each product Hermitian and
/// PSD and the ordering irrelevant; non-commuting input is rejected.
pub fn product_joint(ms: &[Povm], tol_commute: f64) -> Result<JointPovm, SharpError> {
    let dim = check_dims(ms)?;
    let check = pairwise_commuting(ms, tol_commute)?;
    if !check.commuting {
        return Err(SharpError::NotCommuting(check.max_norm));
    }
    let tuples = outcome_tuples(ms);
    let mut effects = IndexMap::with_capacity(tuples.len());
    for tuple in tuples {
        let mut acc: Option<Vec<Complex64>> = None;
        for (i, label) in tuple.0.iter().enumerate() {
            let e = ms[i].effect(label).expect("tuple built from these labels");
            acc = Some(match acc {
                None => e.entries().to_vec(),
                Some(prev) => raw_matmul(&prev, e.entries(), dim),
            });
        }
        let effect = HermitianMatrix::from_entries(dim, acc.expect("nonempty tuple"))?;
        effects.insert(tuple, effect);
    }
    Ok(JointPovm::new(ms.to_vec(), effects)?)
}

/// Decision record for a sharp-dominated family.
#[derive(Debug, Clone)]
pub struct SharpDecision {
    pub jointly_measurable: bool,
    /// The unique product joint, when one exists.
    pub joint: Option<JointPovm>,
    /// A non-commuting effect pair, when none exists.
    pub witness: Option<CommutatorWitness>,
}

/// Decides joint measurability for a family with at most one unsharp member:
/// jointly measurable iff pairwise commuting, with the product joint as the
/// unique witness. More than one unsharp member is a hypothesis error; use
/// the feasibility solver for those.
pub fn decide(ms: &[Povm], tol: &Tolerances) -> Result<SharpDecision, SharpError> {
    check_dims(ms)?;
    let unsharp = ms.iter().filter(|m| !m.is_pvm(tol.pvm)).count();
    if unsharp > 1 {
        return Err(SharpError::TooManyUnsharp(unsharp));
    }
    let check = pairwise_commuting(ms, tol.commute)?;
    if check.commuting {
        Ok(SharpDecision {
            jointly_measurable: true,
            joint: Some(product_joint(ms, tol.commute)?),
            witness: None,
        })
    } else {
        Ok(SharpDecision {
            jointly_measurable: false,
            joint: None,
            witness: check.worst,
        })
    }
}

/// Entrywise tolerance for "equals the product joint".
const UNIQUENESS_TOL: f64 = 1e-8;
/// Looser gate for "is a joint for these POVMs at all" so solver output with
/// near-machine marginal residuals is admissible as a candidate.
const MARGINAL_GATE: f64 = 1e-6;

/// Verifies that `candidate` coincides with the unique product joint.
///
/// Errors if the candidate is not even a joint for `ms` (marginal mismatch);
/// returns false if it is a joint family but differs from the product beyond
/// 1e-8 entrywise.
pub fn verify_uniqueness(
    ms: &[Povm],
    candidate: &JointPovm,
    tol: &Tolerances,
) -> Result<bool, SharpError> {
    check_dims(ms)?;
    if candidate.n_components() != ms.len() {
        return Err(SharpError::ComponentCountMismatch {
            got: candidate.n_components(),
            expected: ms.len(),
        });
    }
    for (i, m) in ms.iter().enumerate() {
        let marg = candidate.marginal(i)?;
        let mut residual: f64 = 0.0;
        for (label, effect) in m.iter() {
            let got = marg
                .effect(label)
                .ok_or_else(|| SharpError::MarginalMismatch {
                    index: i,
                    residual: f64::INFINITY,
                })?;
            residual = residual.max(effect.max_abs_diff(got)?);
        }
        if residual > MARGINAL_GATE {
            return Err(SharpError::MarginalMismatch { index: i, residual });
        }
    }
    let product = product_joint(ms, tol.commute)?;
    for (tuple, effect) in product.iter() {
        let got = candidate
            .effect(tuple)
            .ok_or(PovmError::IncompleteTupleSet)?;
        if effect.max_abs_diff(got)? > UNIQUENESS_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::povm::noisy_qubit;

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

    #[test]
    fn commuting_scan_same_pvm() {
        let tol = Tolerances::default();
        let check = pairwise_commuting(&[z_pvm(), z_pvm()], tol.commute).unwrap();
        assert!(check.commuting);
        assert!(check.max_norm < 1e-14);
    }

    #[test]
    fn commuting_scan_z_vs_x() {
        let tol = Tolerances::default();
        let check = pairwise_commuting(&[z_pvm(), x_pvm()], tol.commute).unwrap();
        assert!(!check.commuting);
        // worst pair is any projector pair: ||[P0, P+]||_F = sqrt(2)/2
        assert!((check.max_norm - 2f64.sqrt() / 2.0).abs() < 1e-12);
        assert!(check.worst.is_some());
    }

    #[test]
    fn commuting_scan_diagonal_povm() {
        let tol = Tolerances::default();
        let noisy = noisy_qubit([0.0, 0.0, 1.0], 0.5).unwrap();
        let check = pairwise_commuting(&[noisy, z_pvm()], tol.commute).unwrap();
        assert!(check.commuting);
    }

    #[test]
    fn product_joint_projectors() {
        let tol = Tolerances::default();
        let j = product_joint(&[z_pvm(), z_pvm()], tol.commute).unwrap();
        let p00 = j
            .iter()
            .find(|(t, _)| t.key() == "0|0")
            .map(|(_, e)| e.clone())
            .unwrap();
        assert!(p00.frob_dist(&HermitianMatrix::diag(&[1.0, 0.0])).unwrap() < 1e-14);
        let p01 = j
            .iter()
            .find(|(t, _)| t.key() == "0|1")
            .map(|(_, e)| e.clone())
            .unwrap();
        assert!(p01.frob_norm() < 1e-14);
        assert!(j.validate(&tol).passed);
    }

    #[test]
    fn product_joint_z_and_noisy() {
        let tol = Tolerances::default();
        let eta = 0.4;
        let j = product_joint(&[z_pvm(), noisy_qubit([0.0, 0.0, 1.0], eta).unwrap()], tol.commute)
            .unwrap();
        let expect = [
            ("0|+", [(1.0 + eta) / 2.0, 0.0]),
            ("0|-", [(1.0 - eta) / 2.0, 0.0]),
            ("1|+", [0.0, (1.0 - eta) / 2.0]),
            ("1|-", [0.0, (1.0 + eta) / 2.0]),
        ];
        for (key, diag) in expect {
            let e = j
                .iter()
                .find(|(t, _)| t.key() == key)
                .map(|(_, e)| e.clone())
                .unwrap();
            assert!(e.frob_dist(&HermitianMatrix::diag(&diag)).unwrap() < 1e-14);
        }
        // marginals recover the inputs
        let m0 = j.marginal(0).unwrap();
        for (label, effect) in z_pvm().iter() {
            assert!(m0.effect(label).unwrap().max_abs_diff(effect).unwrap() < 1e-10);
        }
    }

    #[test]
    fn product_joint_order_independent() {
        let tol = Tolerances::default();
        let a = z_pvm();
        let b = noisy_qubit([0.0, 0.0, 1.0], 0.7).unwrap();
        let c = noisy_qubit([0.0, 0.0, 1.0], 0.2).unwrap();
        let j1 = product_joint(&[a.clone(), b.clone(), c.clone()], tol.commute).unwrap();
        let j2 = product_joint(&[c, b, a], tol.commute).unwrap();
        for (t1, e1) in j1.iter() {
            let rev = crate::povm::OutcomeTuple(t1.0.iter().rev().cloned().collect());
            let e2 = j2.effect(&rev).unwrap();
            assert!(e1.max_abs_diff(e2).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn product_joint_rejects_noncommuting() {
        let tol = Tolerances::default();
        assert!(matches!(
            product_joint(&[z_pvm(), x_pvm()], tol.commute),
            Err(SharpError::NotCommuting(_))
        ));
    }

    #[test]
    fn decide_z_vs_x_not_measurable() {
        let tol = Tolerances::default();
        let d = decide(&[z_pvm(), x_pvm()], &tol).unwrap();
        assert!(!d.jointly_measurable);
        assert!(d.joint.is_none());
        assert!(d.witness.is_some());
    }

    #[test]
    fn decide_diagonal_triple() {
        let tol = Tolerances::default();
        let d = decide(
            &[z_pvm(), z_pvm(), noisy_qubit([0.0, 0.0, 1.0], 0.3).unwrap()],
            &tol,
        )
        .unwrap();
        assert!(d.jointly_measurable);
        let joint = d.joint.unwrap();
        assert!(joint.validate(&tol).passed);
    }

    #[test]
    fn decide_rejects_two_unsharp() {
        let tol = Tolerances::default();
        let dirs = crate::povm::trine_directions();
        let ms: Vec<Povm> = dirs
            .iter()
            .map(|&d| noisy_qubit(d, 0.5).unwrap())
            .collect();
        assert!(matches!(
            decide(&ms, &tol),
            Err(SharpError::TooManyUnsharp(3))
        ));
    }

    #[test]
    fn uniqueness_accepts_product_rejects_swap() {
        let tol = Tolerances::default();
        let ms = vec![z_pvm(), noisy_qubit([0.0, 0.0, 1.0], 0.4).unwrap()];
        let j = product_joint(&ms, tol.commute).unwrap();
        assert!(verify_uniqueness(&ms, &j, &tol).unwrap());

        // swapping two effects between distinct tuples breaks the marginals
        let mut effects: IndexMap<crate::povm::OutcomeTuple, HermitianMatrix> =
            j.iter().map(|(t, e)| (t.clone(), e.clone())).collect();
        let keys: Vec<_> = effects.keys().cloned().collect();
        let e0 = effects[&keys[0]].clone();
        let e1 = effects[&keys[1]].clone();
        effects.insert(keys[0].clone(), e1);
        effects.insert(keys[1].clone(), e0);
        let swapped = JointPovm::new(ms.clone(), effects).unwrap();
        match verify_uniqueness(&ms, &swapped, &tol) {
            Err(SharpError::MarginalMismatch { .. }) => {}
            Ok(false) => {}
            other => panic!("swap should fail uniqueness, got {other:?}"),
        }
    }
}
