use gompertz_core::model::ModelParams;
use gompertz_core::NoiseModel;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub id: String,
    pub true_params: ModelParams<f64>,
    pub len: usize,
    pub noise: NoiseModel,
}

/// The eight standard settings: `theta1 = 2`, `theta2 = 0.22`, `b` either
/// -0.5 or -0.22, series of length 30 or 100, Poisson counts for S1-S4 and
/// the overdispersed negative binomial for S5-S8.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let layout = [(-0.5, 30), (-0.22, 30), (-0.5, 100), (-0.22, 100)];
    let mut out = Vec::with_capacity(8);
    for (block, noise) in [NoiseModel::Poisson, NoiseModel::NegBinomialHalf].into_iter().enumerate() {
        for (k, &(b, len)) in layout.iter().enumerate() {
            out.push(Scenario {
                id: format!("S{}", 4 * block + k + 1),
                true_params: ModelParams::new(2.0, 0.22, b).expect("valid scenario parameters"),
                len,
                noise,
            });
        }
    }
    out
}

pub fn scenario_by_id(id: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.id.eq_ignore_ascii_case(id))
}
