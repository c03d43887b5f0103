use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Outcome of one numerical check. `pass` is `statistic <= threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub standard_error: Option<f64>,
    pub pass: bool,
    pub sample_sizes: BTreeMap<String, usize>,
    pub seed: Option<u64>,
}

impl DiagnosticReport {
    pub fn new(name: impl Into<String>, statistic: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            standard_error: None,
            pass: statistic <= threshold,
            sample_sizes: BTreeMap::new(),
            seed: None,
        }
    }

    pub fn with_se(mut self, se: f64) -> Self {
        self.standard_error = Some(se);
        self
    }

    pub fn with_samples(mut self, label: &str, n: usize) -> Self {
        self.sample_sizes.insert(label.to_string(), n);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

impl fmt::Display for DiagnosticReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<36} {:>12.4e} {:>12.4e} {:>10} {}",
            self.name,
            self.statistic,
            self.threshold,
            self.standard_error.map_or("-".to_string(), |s| format!("{s:.2e}")),
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// Fixed-width table, one report per line.
pub fn render_table(reports: &[DiagnosticReport]) -> String {
    let mut out = format!(
        "{:<36} {:>12} {:>12} {:>10} result\n",
        "check", "statistic", "threshold", "se"
    );
    for r in reports {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

/// Sum by recursive halving; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = pairwise_sum(xs) / n;
    let dev: Vec<f64> = xs.iter().map(|x| (x - m).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0).max(1.0);
    (m, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_flag_is_exact_comparison() {
        assert!(DiagnosticReport::new("a", 1.0, 1.0).pass);
        assert!(!DiagnosticReport::new("a", 1.0 + 1e-16 * 4.0, 1.0).pass);
        assert!(!DiagnosticReport::new("a", f64::NAN, 1.0).pass);
    }

    #[test]
    fn json_round_trip() {
        let r = DiagnosticReport::new("x", 0.5, 1.0)
            .with_se(0.1)
            .with_samples("n", 10)
            .with_seed(3);
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<DiagnosticReport>(&s).unwrap(), r);
        assert!(render_table(&[r]).contains("PASS"));
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
        let (m, se) = mean_se(&[1.0, 1.0, 1.0]);
        assert_eq!((m, se), (1.0, 0.0));
    }
}
