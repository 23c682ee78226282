use crate::math::{mean, quantile};

/// Split R-hat for one scalar quantity over equal-length chains.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let half = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    if half < 2 {
        return f64::NAN;
    }
    let pieces: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[half..2 * half]]).collect();
    let m = pieces.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = pieces.iter().map(|p| mean(p)).collect();
    let grand = mean(&means);
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = pieces
        .iter()
        .zip(&means)
        .map(|(p, mu)| p.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Monte-Carlo standard error of the pooled mean via non-overlapping batch
/// means within each chain.
pub fn batch_means_mcse(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let size = (n as f64).sqrt().floor() as usize;
    if size == 0 || n / size < 2 {
        return f64::NAN;
    }
    let batches = n / size;
    let mut var_sum = 0.0;
    for c in chains {
        let bm: Vec<f64> = (0..batches).map(|b| mean(&c[b * size..(b + 1) * size])).collect();
        let mu = mean(&bm);
        let var_b = bm.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (batches - 1) as f64;
        // Variance of the chain mean.
        var_sum += var_b / batches as f64;
    }
    let k = chains.len() as f64;
    (var_sum / (k * k)).sqrt()
}

pub fn pooled_median(chains: &[Vec<f64>]) -> f64 {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    quantile(&all, 0.5)
}
