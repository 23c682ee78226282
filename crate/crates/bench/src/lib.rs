//! Shared fixtures for the criterion benches.

use miscorr::mediation::{MediationData, MediationParams, OutcomeDist};
use miscorr::sim::{simulate_mediation, simulate_single, simulate_twostage, CovariateSpec};
use miscorr::single::{SingleOutcomeData, SingleOutcomeParams};
use miscorr::twostage::{TwoStageData, TwoStageParams};

fn x_spec() -> Vec<CovariateSpec> {
    vec![CovariateSpec::Normal { mean: 0.0, sd: 2.0 }]
}

pub fn single_data(n: usize) -> SingleOutcomeData {
    let p = SingleOutcomeParams {
        beta: vec![1.0, -2.0],
        gamma: [vec![2.197], vec![-1.735]],
    };
    simulate_single(n, &p, &x_spec(), &[], 1).expect("valid design").data
}

pub fn twostage_data(n: usize) -> TwoStageData {
    let p = TwoStageParams {
        beta: vec![1.0, -2.0],
        gamma1: [vec![2.197], vec![-1.735]],
        gamma2: [[vec![2.0], vec![-0.5]], [vec![0.5], vec![-2.0]]],
    };
    simulate_twostage(n, &p, &x_spec(), &[], &[], 2).expect("valid design").data
}

pub fn mediation_data(n: usize) -> MediationData {
    let p = MediationParams {
        beta: vec![-0.5, 2.0, 0.5],
        gamma: [vec![1.386], vec![-2.197]],
        theta: vec![1.0, 0.5, 1.0, 0.3],
        sigma: Some(1.0),
        dist: OutcomeDist::Normal,
        interaction: false,
    };
    let normal = CovariateSpec::Normal { mean: 0.0, sd: 1.0 };
    simulate_mediation(n, &p, normal, &[normal], &[], 3).expect("valid design").data
}
