//! Sampled check of the Finsler spacetime conditions:
//!
//! * (i) smoothness off the zero section,
//! * (ii) positive homogeneity (with the Euler identity),
//! * (iii) reversibility, reported but not required by the other modules,
//! * (iv) non-degeneracy of the L-metric outside a small set,
//! * (v) signature tallies on the shell `|L| = 1`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{condition_number, signature, FinslerLagrangian, DEGENERACY_THRESHOLD};
use crate::multidiff::{taylor_expand, Var};
use crate::point::TangentBundlePoint;
use crate::sampling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signature {
    /// One positive and `n − 1` negative eigenvalues.
    Lorentzian,
    /// Positive definite.
    Riemannian,
}

impl Signature {
    fn expected(self, n: usize) -> (usize, usize) {
        match self {
            Signature::Lorentzian => (1, n - 1),
            Signature::Riemannian => (n, 0),
        }
    }
}

/// Sampling configuration for [`validate_spacetime`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleSpec {
    pub seed: u64,
    pub samples: usize,
    pub x_center: Vec<f64>,
    pub x_radius: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Relative tolerance for homogeneity and reversibility.
    pub tolerance: f64,
    /// Relative tolerance for the Euler identity.
    pub euler_tolerance: f64,
    /// Largest fraction of samples allowed in the degeneracy set.
    pub max_degenerate_fraction: f64,
    pub signature: Signature,
}

impl SampleSpec {
    pub fn new(x_center: Vec<f64>, seed: u64) -> Self {
        Self {
            seed,
            samples: 200,
            x_center,
            x_radius: 1.0,
            y_min: 0.5,
            y_max: 2.0,
            tolerance: 1e-10,
            euler_tolerance: 1e-12,
            max_degenerate_fraction: 0.01,
            signature: Signature::Lorentzian,
        }
    }

    fn points(&self) -> Vec<TangentBundlePoint> {
        let mut rng = sampling::rng(self.seed);
        let n = self.x_center.len();
        (0..self.samples)
            .map(|_| {
                let x = sampling::in_cube(&mut rng, &self.x_center, self.x_radius);
                let y = sampling::with_norm(&mut rng, n, self.y_min, self.y_max);
                TangentBundlePoint::new(x, y)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub point: TangentBundlePoint,
    pub value: f64,
    pub note: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub condition: String,
    pub description: String,
    pub passed: bool,
    pub max_residual: f64,
    pub witnesses: Vec<Witness>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub conditions: Vec<ConditionVerdict>,
    /// Samples whose L-metric condition number exceeds the threshold.
    pub degeneracy_samples: Vec<TangentBundlePoint>,
    /// Signature `"(+p,-q)"` of the L-metric on the shell `|L| = 1`,
    /// counted over samples with `L > 0`.
    pub signature_tallies: BTreeMap<String, usize>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn condition(&self, id: &str) -> Option<&ConditionVerdict> {
        self.conditions.iter().find(|c| c.condition == id)
    }
}

const MAX_WITNESSES: usize = 10;

struct Tracker {
    verdict: ConditionVerdict,
}

impl Tracker {
    fn new(id: &str, description: &str) -> Self {
        Self {
            verdict: ConditionVerdict {
                condition: id.to_string(),
                description: description.to_string(),
                passed: true,
                max_residual: 0.0,
                witnesses: Vec::new(),
            },
        }
    }

    fn record(&mut self, residual: f64, tolerance: f64, p: &TangentBundlePoint, note: &str) {
        let bad = !(residual <= tolerance);
        if residual.is_finite() {
            self.verdict.max_residual = self.verdict.max_residual.max(residual);
        } else {
            self.verdict.max_residual = f64::INFINITY;
        }
        if bad {
            self.fail(p, residual, note);
        }
    }

    fn fail(&mut self, p: &TangentBundlePoint, value: f64, note: &str) {
        self.verdict.passed = false;
        if self.verdict.witnesses.len() < MAX_WITNESSES {
            self.verdict.witnesses.push(Witness {
                point: p.clone(),
                value,
                note: note.to_string(),
            });
        }
    }
}

/// Runs the sampled spacetime checks. Failures are report contents.
pub fn validate_spacetime(l: &FinslerLagrangian, spec: &SampleSpec) -> ValidationReport {
    let n = l.dimension();
    let r = l.homogeneity_degree();
    let mut smooth = Tracker::new("i", "L is finite with finite derivatives off the zero section");
    let mut homog = Tracker::new("ii", "positive homogeneity L(x, λy) = λ^r L(x, y) and Euler identity");
    let mut revers = Tracker::new("iii", "reversibility |L(x, -y)| = |L(x, y)|");
    let mut degen = Tracker::new("iv", "L-metric non-degenerate outside a small sampled set");
    let mut shell = Tracker::new("v", "L-metric signature on the unit shell |L| = 1");
    let mut degeneracy_samples = Vec::new();
    let mut tallies: BTreeMap<String, usize> = BTreeMap::new();
    let expected = spec.signature.expected(n);
    let mut positive_samples = 0usize;
    let mut shell_matches = 0usize;
    let mut first_sample: Option<(TangentBundlePoint, f64)> = None;

    let points = spec.points();
    for p in &points {
        let jet = match taylor_expand(l, p, 2, 0) {
            Ok(j) => j,
            Err(_) => {
                smooth.fail(p, f64::NAN, "L or its fibre derivatives are not finite");
                continue;
            }
        };
        let value = jet.value();
        if first_sample.is_none() {
            first_sample = Some((p.clone(), value));
        }

        // (ii) Euler identity and sampled rescalings
        let terms: Vec<f64> = (0..n).map(|a| p.y[a] * jet.partial(&[Var::Y(a)])).collect();
        let euler: f64 = terms.iter().sum();
        let magnitude = terms.iter().map(|t| t.abs()).sum::<f64>() + (r * value).abs();
        homog.record(
            (euler - r * value).abs() / magnitude.max(f64::MIN_POSITIVE),
            spec.euler_tolerance,
            p,
            "Euler identity y^a ∂̄_a L = r L violated",
        );
        for lambda in [0.5, 2.0, 3.0] {
            let scaled = l.eval_with(&p.x, &p.scaled(lambda).y);
            let want = lambda.powf(r) * value;
            let scale = lambda.powf(r) * magnitude / r;
            homog.record(
                (scaled - want).abs() / scale.max(f64::MIN_POSITIVE),
                spec.tolerance,
                p,
                &format!("homogeneity violated for λ = {lambda}"),
            );
        }

        // (iii)
        let flipped = l.eval_with(&p.x, &p.scaled(-1.0).y);
        revers.record(
            (flipped.abs() - value.abs()).abs() / (value.abs() + magnitude / r).max(f64::MIN_POSITIVE),
            spec.tolerance,
            p,
            "|L(x, -y)| differs from |L(x, y)|",
        );

        // (iv)
        let g: Vec<Vec<f64>> = (0..n)
            .map(|a| (0..n).map(|b| 0.5 * jet.partial(&[Var::Y(a), Var::Y(b)])).collect())
            .collect();
        let cond = condition_number(&g);
        if !(cond <= DEGENERACY_THRESHOLD) {
            degeneracy_samples.push(p.clone());
            if degen.verdict.witnesses.len() < MAX_WITNESSES {
                degen.verdict.witnesses.push(Witness {
                    point: p.clone(),
                    value: cond,
                    note: "L-metric condition number above the degeneracy threshold".into(),
                });
            }
        }
        if cond.is_finite() {
            degen.verdict.max_residual = degen.verdict.max_residual.max(cond);
        } else {
            degen.verdict.max_residual = f64::INFINITY;
        }

        // (v)
        if value > 0.0 {
            positive_samples += 1;
            let unit = p.scaled(value.powf(-1.0 / r));
            if let Ok(gu) = l.l_metric(&unit) {
                let sig = signature(&gu);
                *tallies.entry(format!("(+{},-{})", sig.0, sig.1)).or_default() += 1;
                if sig == expected {
                    shell_matches += 1;
                } else if shell.verdict.witnesses.len() < MAX_WITNESSES {
                    shell.verdict.witnesses.push(Witness {
                        point: unit,
                        value: sig.1 as f64,
                        note: format!("signature (+{},-{}) on the unit shell", sig.0, sig.1),
                    });
                }
            }
        }
    }

    let fraction = degeneracy_samples.len() as f64 / points.len().max(1) as f64;
    degen.verdict.passed = fraction <= spec.max_degenerate_fraction;
    if !degen.verdict.passed && degen.verdict.witnesses.is_empty() {
        degen.verdict.witnesses.push(Witness {
            point: degeneracy_samples[0].clone(),
            value: f64::INFINITY,
            note: "degenerate L-metric".into(),
        });
    }

    shell.verdict.max_residual = (positive_samples - shell_matches) as f64;
    shell.verdict.passed = shell_matches > 0;
    if shell.verdict.passed {
        shell.verdict.witnesses.clear();
    } else if shell.verdict.witnesses.is_empty() {
        if let Some((p, v)) = first_sample {
            shell.verdict.witnesses.push(Witness {
                point: p,
                value: v,
                note: "no sample with L > 0 on the unit shell".into(),
            });
        }
    }

    ValidationReport {
        samples: points.len(),
        conditions: vec![
            smooth.verdict,
            homog.verdict,
            revers.verdict,
            degen.verdict,
            shell.verdict,
        ],
        degeneracy_samples,
        signature_tallies: tallies,
    }
}
