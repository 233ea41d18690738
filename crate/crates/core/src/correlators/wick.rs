//! Fourth moments of linear Gaussian fields by Isserlis pairing.
//!
//! Each of the four operators is a sum of terms. Every quadruple of terms
//! is expanded into its three pairings; a pairing survives when both of its
//! two-point contractions are nonzero. Contributions are summed in label
//! order so the result does not depend on evaluation order.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

use super::fields::{Contraction, FieldBuilder, FieldExpansion, Term, VacuumRule};

/// Two-point contraction rule for one operator vocabulary.
pub trait PairingRule: Sync {
    type Op: Sync;

    /// `⟨left right⟩`, with `left` standing to the left in the product.
    fn contract(&self, left: &Self::Op, right: &Self::Op) -> Result<Contraction>;

    fn label(&self, op: &Self::Op) -> String;

    fn is_noise(&self, op: &Self::Op) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Pairing {
    /// `⟨12⟩⟨34⟩`
    Adjacent,
    /// `⟨13⟩⟨24⟩`
    Crossed,
    /// `⟨14⟩⟨23⟩`
    Nested,
}

impl Pairing {
    pub const ALL: [Pairing; 3] = [Pairing::Adjacent, Pairing::Crossed, Pairing::Nested];

    fn slots(self) -> [(usize, usize); 2] {
        match self {
            Pairing::Adjacent => [(0, 1), (2, 3)],
            Pairing::Crossed => [(0, 2), (1, 3)],
            Pairing::Nested => [(0, 3), (1, 2)],
        }
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pairing::Adjacent => "(12)(34)",
            Pairing::Crossed => "(13)(24)",
            Pairing::Nested => "(14)(23)",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contribution {
    pub labels: [String; 4],
    pub pairing: Pairing,
    pub value: C64,
    pub error: f64,
    /// All four operators are noise inputs.
    pub noise: bool,
}

impl Contribution {
    pub fn label(&self) -> String {
        format!("{} {}", self.labels.join("·"), self.pairing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentResult {
    pub value: C64,
    pub error: f64,
    /// Every surviving pairing, sorted by label.
    pub breakdown: Vec<Contribution>,
}

impl MomentResult {
    /// Sums per term quadruple, identifying a quadruple with its mirror
    /// image `(i, j, k, l) ~ (l, k, j, i)`. Meaningful for moments of the
    /// form `⟨A† B† B A⟩`.
    pub fn groups(&self) -> BTreeMap<[String; 4], (C64, bool)> {
        let mut out: BTreeMap<[String; 4], (C64, bool)> = BTreeMap::new();
        for c in &self.breakdown {
            let l = &c.labels;
            let mirror = [l[3].clone(), l[2].clone(), l[1].clone(), l[0].clone()];
            let key = if *l <= mirror { l.clone() } else { mirror };
            let entry = out.entry(key).or_insert((C64::default(), c.noise));
            entry.0 += c.value;
        }
        out
    }

    pub fn group_count(&self) -> usize {
        self.groups().len()
    }

    pub fn noise_group_count(&self) -> usize {
        self.groups().values().filter(|(_, noise)| *noise).count()
    }
}

/// `⟨O1 O2 O3 O4⟩` for zero-mean Gaussian inputs.
pub fn wick_fourth_moment<R: PairingRule>(rule: &R, ops: [&[R::Op]; 4]) -> Result<MomentResult> {
    // Every contraction between positions p < q, computed once.
    let mut jobs = Vec::new();
    for p in 0..4 {
        for q in p + 1..4 {
            for i in 0..ops[p].len() {
                for j in 0..ops[q].len() {
                    jobs.push((p, q, i, j));
                }
            }
        }
    }
    let values: Vec<Result<Contraction>> = jobs
        .par_iter()
        .map(|&(p, q, i, j)| {
            rule.contract(&ops[p][i], &ops[q][j]).map_err(|e| match e {
                Error::NonConvergence { value, error, .. } => Error::NonConvergence {
                    label: format!("⟨{} {}⟩", rule.label(&ops[p][i]), rule.label(&ops[q][j])),
                    value,
                    error,
                },
                other => other,
            })
        })
        .collect();
    let mut cache = BTreeMap::new();
    for (job, v) in jobs.into_iter().zip(values) {
        cache.insert(job, v?);
    }
    let labels: Vec<Vec<String>> = ops
        .iter()
        .map(|o| o.iter().map(|t| rule.label(t)).collect())
        .collect();
    let noise: Vec<Vec<bool>> = ops
        .iter()
        .map(|o| o.iter().map(|t| rule.is_noise(t)).collect())
        .collect();

    let mut breakdown = Vec::new();
    for i0 in 0..ops[0].len() {
        for i1 in 0..ops[1].len() {
            for i2 in 0..ops[2].len() {
                for i3 in 0..ops[3].len() {
                    let idx = [i0, i1, i2, i3];
                    for pairing in Pairing::ALL {
                        let mut value = C64::new(1.0, 0.0);
                        let mut rel = 0.0;
                        let mut alive = true;
                        for (p, q) in pairing.slots() {
                            match cache[&(p, q, idx[p], idx[q])] {
                                Contraction::Zero => {
                                    alive = false;
                                    break;
                                }
                                Contraction::Singular { .. } => {
                                    return Err(Error::Domain {
                                        what: "unregularized delta in a fourth moment",
                                        value: 0.0,
                                    })
                                }
                                Contraction::Value { value: v, error } => {
                                    value *= v;
                                    if v.norm() > 0.0 {
                                        rel += error / v.norm();
                                    }
                                }
                            }
                        }
                        if !alive {
                            continue;
                        }
                        breakdown.push(Contribution {
                            labels: std::array::from_fn(|k| labels[k][idx[k]].clone()),
                            pairing,
                            value,
                            error: rel * value.norm(),
                            noise: (0..4).all(|k| noise[k][idx[k]]),
                        });
                    }
                }
            }
        }
    }
    breakdown.sort_by(|a, b| (&a.labels, a.pairing).cmp(&(&b.labels, b.pairing)));
    let value = breakdown.iter().map(|c| c.value).sum();
    let error = breakdown.iter().map(|c| c.error).sum();
    Ok(MomentResult {
        value,
        error,
        breakdown,
    })
}

impl PairingRule for VacuumRule {
    type Op = Term;

    fn contract(&self, left: &Term, right: &Term) -> Result<Contraction> {
        VacuumRule::contract(self, left, right)
    }

    fn label(&self, op: &Term) -> String {
        op.label.clone()
    }

    fn is_noise(&self, op: &Term) -> bool {
        op.input.kind.is_noise()
    }
}

/// `⟨E_w†(L,t_i) E_r†(0,t) E_r(0,t) E_w(L,t_i)⟩` through the generic engine.
pub fn heralded_numerator(
    builder: &FieldBuilder,
    rule: &VacuumRule,
    t_emit: f64,
    t_read: f64,
) -> Result<MomentResult> {
    let w: FieldExpansion = builder.write_field(t_emit)?;
    let r = builder.read_field(t_read)?;
    let (wd, rd) = (w.adjoint(), r.adjoint());
    wick_fourth_moment(rule, [&wd.terms, &rd.terms, &r.terms, &w.terms])
}

/// A complex linear combination of independent real standard normals,
/// one term per variable. Used to check the pairing engine against
/// closed-form Gaussian moments.
#[derive(Debug, Clone)]
pub struct ClassicalTerm {
    pub variable: usize,
    pub coefficient: C64,
}

/// `⟨ξ_m ξ_n⟩ = δ_mn` for commuting real standard normals.
pub struct ClassicalRule;

impl PairingRule for ClassicalRule {
    type Op = ClassicalTerm;

    fn contract(&self, left: &ClassicalTerm, right: &ClassicalTerm) -> Result<Contraction> {
        Ok(if left.variable == right.variable {
            Contraction::Value {
                value: left.coefficient * right.coefficient,
                error: 0.0,
            }
        } else {
            Contraction::Zero
        })
    }

    fn label(&self, op: &ClassicalTerm) -> String {
        format!("x{}", op.variable)
    }

    fn is_noise(&self, _: &ClassicalTerm) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// A table of pairwise moments keyed by operator name.
    struct Table(Vec<((&'static str, &'static str), C64)>);

    impl PairingRule for Table {
        type Op = &'static str;
        fn contract(&self, l: &&'static str, r: &&'static str) -> Result<Contraction> {
            Ok(self
                .0
                .iter()
                .find(|((a, b), _)| a == l && b == r)
                .map(|(_, v)| Contraction::Value {
                    value: *v,
                    error: 0.0,
                })
                .unwrap_or(Contraction::Zero))
        }
        fn label(&self, op: &&'static str) -> String {
            op.to_string()
        }
        fn is_noise(&self, _: &&'static str) -> bool {
            false
        }
    }

    #[test]
    fn single_surviving_pairing() {
        let a = C64::new(0.3, -1.2);
        let b = C64::new(2.0, 0.5);
        let rule = Table(vec![(("x1", "x2†"), a), (("x3", "x4†"), b)]);
        let r = wick_fourth_moment(&rule, [&["x1"], &["x2†"], &["x3"], &["x4†"]]).unwrap();
        assert_eq!(r.value, a * b);
        assert_eq!(r.breakdown.len(), 1);
        assert_eq!(r.breakdown[0].pairing, Pairing::Adjacent);
    }

    #[test]
    fn classical_fourth_moment_of_one_variable() {
        // E[ξ⁴] = 3.
        let t = [ClassicalTerm {
            variable: 0,
            coefficient: C64::new(1.0, 0.0),
        }];
        let r = wick_fourth_moment(&ClassicalRule, [&t, &t, &t, &t]).unwrap();
        assert_relative_eq!(r.value.re, 3.0);
    }

    #[test]
    fn summation_order_is_fixed() {
        let terms: Vec<ClassicalTerm> = (0..5)
            .map(|m| ClassicalTerm {
                variable: m % 3,
                coefficient: C64::new(0.1 * m as f64 + 0.3, 0.7 - 0.2 * m as f64),
            })
            .collect();
        let a = wick_fourth_moment(&ClassicalRule, [&terms, &terms, &terms, &terms]).unwrap();
        let b = wick_fourth_moment(&ClassicalRule, [&terms, &terms, &terms, &terms]).unwrap();
        assert_eq!(a.value.re.to_bits(), b.value.re.to_bits());
        assert_eq!(a.value.im.to_bits(), b.value.im.to_bits());
    }
}
