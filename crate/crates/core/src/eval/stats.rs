use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Pearson correlation; `None` for fewer than two points or a constant side.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len(), "pearson needs paired samples");
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing their mean rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson over average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendTest {
    pub slope: f64,
    pub t: f64,
    /// One-sided p-value for a negative slope.
    pub p_decreasing: f64,
    pub points: usize,
}

impl TrendTest {
    pub fn significantly_decreasing(&self, alpha: f64) -> bool {
        self.p_decreasing < alpha
    }
}

/// Least-squares slope of `ys` on `xs` with a one-sided t-test against a
/// negative trend. `None` with fewer than three points or constant `xs`.
pub fn trend_test(xs: &[f64], ys: &[f64]) -> Option<TrendTest> {
    assert_eq!(xs.len(), ys.len(), "trend test needs paired samples");
    let n = xs.len();
    if n < 3 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let df = (n - 2) as f64;
    let se = (sse / df / sxx).sqrt();
    let (t, p) = if se > 0.0 {
        let t = slope / se;
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (t, dist.cdf(t))
    } else if slope < 0.0 {
        (f64::NEG_INFINITY, 0.0)
    } else if slope > 0.0 {
        (f64::INFINITY, 1.0)
    } else {
        (0.0, 0.5)
    };
    Some(TrendTest {
        slope,
        t,
        p_decreasing: p,
        points: n,
    })
}
