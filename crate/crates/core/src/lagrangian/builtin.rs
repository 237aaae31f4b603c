//! Shipped example models with their natural base points and sampling
//! regions.

use rand_chacha::ChaCha8Rng;

use super::validate::Signature;
use super::FinslerLagrangian;
use crate::point::TangentBundlePoint;
use crate::sampling;

pub const BUILTIN_NAMES: [&str; 5] = ["flat4d", "polar2d", "sphere2d", "randers2d", "quartic4d"];

/// Where fibre directions are drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FibreRegion {
    /// Euclidean norm uniform in `[min, max]`.
    Shell { min: f64, max: f64 },
    /// `y¹ ∈ [min, max]` with spatial part at most `ratio · y¹`.
    Timelike { min: f64, max: f64, ratio: f64 },
}

#[derive(Debug, Clone)]
pub struct BuiltinModel {
    pub name: String,
    pub lagrangian: FinslerLagrangian,
    /// Chart base point used by the verification suite.
    pub base: Vec<f64>,
    /// Half-width of the cube around `base` where points are sampled.
    pub x_radius: f64,
    pub fibre: FibreRegion,
    pub signature: Signature,
}

impl BuiltinModel {
    /// A user-supplied model sampled around `base` in a Euclidean fibre
    /// shell `0.5 ≤ |y| ≤ 2`.
    pub fn custom(
        name: impl Into<String>,
        lagrangian: FinslerLagrangian,
        base: Vec<f64>,
        x_radius: f64,
        signature: Signature,
    ) -> Self {
        Self {
            name: name.into(),
            lagrangian,
            base,
            x_radius,
            fibre: FibreRegion::Shell { min: 0.5, max: 2.0 },
            signature,
        }
    }

    pub fn dimension(&self) -> usize {
        self.lagrangian.dimension()
    }

    pub fn sample_fibre(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.dimension();
        match self.fibre {
            FibreRegion::Shell { min, max } => sampling::with_norm(rng, n, min, max),
            FibreRegion::Timelike { min, max, ratio } => {
                let t = sampling::uniform(rng, min, max);
                let spatial = sampling::in_ball(rng, n - 1, ratio * t);
                std::iter::once(t).chain(spatial).collect()
            }
        }
    }

    /// Fibre direction with Euclidean norm in `[min, max]`, drawn from the
    /// model's fibre region and rescaled.
    pub fn sample_fibre_with_norm(&self, rng: &mut ChaCha8Rng, min: f64, max: f64) -> Vec<f64> {
        let y = self.sample_fibre(rng);
        let r = crate::point::norm(&y);
        let target = sampling::uniform(rng, min, max);
        y.into_iter().map(|v| v * target / r).collect()
    }

    pub fn sample_point(&self, rng: &mut ChaCha8Rng) -> TangentBundlePoint {
        let x = sampling::in_cube(rng, &self.base, self.x_radius);
        let y = self.sample_fibre(rng);
        TangentBundlePoint::new(x, y)
    }

    pub fn sample_points(&self, seed: u64, count: usize) -> Vec<TangentBundlePoint> {
        let mut rng = sampling::rng(seed);
        (0..count).map(|_| self.sample_point(&mut rng)).collect()
    }
}

const FLAT4D: &str = r#"{
  "dimension": 4, "homogeneity_degree": 2, "family": "quadratic",
  "parameters": {"metric": [["1","0","0","0"],["0","-1","0","0"],["0","0","-1","0"],["0","0","0","-1"]]}
}"#;

const POLAR2D: &str = r#"{
  "dimension": 2, "homogeneity_degree": 2, "family": "quadratic",
  "parameters": {"metric": [["1","0"],["0","x1^2"]]}
}"#;

const SPHERE2D: &str = r#"{
  "dimension": 2, "homogeneity_degree": 2, "family": "quadratic",
  "parameters": {"metric": [["1","0"],["0","sin(x1)^2"]]}
}"#;

const RANDERS2D: &str = r#"{
  "dimension": 2, "homogeneity_degree": 2, "family": "randers",
  "parameters": {
    "metric": [["1","0"],["0","1"]],
    "one_form": ["0.1 + 0.05*x2", "0.05*sin(x1)"],
    "exponent": 2
  }
}"#;

fn quartic4d_json() -> String {
    let eta = [1.0, -1.0, -1.0, -1.0];
    let mut terms = Vec::new();
    for a in 0..4 {
        for b in 0..4 {
            terms.push(format!(
                r#"{{"coefficient": "{}", "indices": [{}, {}, {}, {}]}}"#,
                eta[a] * eta[b],
                a + 1,
                a + 1,
                b + 1,
                b + 1
            ));
        }
    }
    terms.push(r#"{"coefficient": "0.1*cos(x2)", "indices": [1, 1, 2, 2]}"#.to_string());
    terms.push(r#"{"coefficient": "0.05*sin(x1)", "indices": [1, 1, 3, 3]}"#.to_string());
    format!(
        r#"{{"dimension": 4, "homogeneity_degree": 4, "family": "pth_root",
            "parameters": {{"p": 4, "terms": [{}]}}}}"#,
        terms.join(", ")
    )
}

/// Looks up a shipped model by name.
pub fn builtin(name: &str) -> Option<BuiltinModel> {
    let load = |text: &str| FinslerLagrangian::from_json(text).expect("builtin model is valid");
    let shell = FibreRegion::Shell { min: 0.5, max: 2.0 };
    Some(match name {
        "flat4d" => BuiltinModel {
            name: "flat4d".into(),
            lagrangian: load(FLAT4D),
            base: vec![0.0; 4],
            x_radius: 1.0,
            fibre: shell,
            signature: Signature::Lorentzian,
        },
        "polar2d" => BuiltinModel {
            name: "polar2d".into(),
            lagrangian: load(POLAR2D),
            base: vec![1.0, 0.0],
            x_radius: 0.3,
            fibre: shell,
            signature: Signature::Riemannian,
        },
        "sphere2d" => BuiltinModel {
            name: "sphere2d".into(),
            lagrangian: load(SPHERE2D),
            base: vec![std::f64::consts::FRAC_PI_3, 0.0],
            x_radius: 0.3,
            fibre: shell,
            signature: Signature::Riemannian,
        },
        "randers2d" => BuiltinModel {
            name: "randers2d".into(),
            lagrangian: load(RANDERS2D),
            base: vec![0.0, 0.0],
            x_radius: 0.5,
            fibre: shell,
            signature: Signature::Riemannian,
        },
        "quartic4d" => BuiltinModel {
            name: "quartic4d".into(),
            lagrangian: load(&quartic4d_json()),
            base: vec![0.0; 4],
            x_radius: 0.5,
            fibre: FibreRegion::Timelike {
                min: 0.8,
                max: 1.5,
                ratio: 0.5,
            },
            signature: Signature::Lorentzian,
        },
        _ => return None,
    })
}
