use std::fmt;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// A metric that may be undefined. Serialises as a number or the string `"n/a"`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metric(pub Option<f64>);

impl Metric {
    pub const NA: Metric = Metric(None);

    pub fn from_option(v: Option<f64>) -> Self {
        Metric(v)
    }

    pub fn value(self) -> Option<f64> {
        self.0
    }

    pub fn is_na(self) -> bool {
        self.0.is_none()
    }
}

impl From<f64> for Metric {
    fn from(v: f64) -> Self {
        Metric(Some(v))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(v) => match f.precision() {
                Some(p) => write!(f, "{v:.p$}"),
                None => write!(f, "{v}"),
            },
            None => f.pad("n/a"),
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Some(v) => s.serialize_f64(v),
            None => s.serialize_str("n/a"),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Metric(Some(v))),
            Raw::Str(s) if s == "n/a" => Ok(Metric(None)),
            Raw::Str(s) => Err(de::Error::custom(format!("expected number or \"n/a\", got {s:?}"))),
        }
    }
}

/// Rank-based ROC AUC; tied scores share their average rank.
/// `n/a` unless both classes are present.
pub fn auc(scores: &[f64], labels: &[u8]) -> Metric {
    assert_eq!(scores.len(), labels.len(), "auc: scores and labels differ in length");
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Metric::NA;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Metric(Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n)))
}

/// Mean prediction over empirical click rate; `n/a` without positives.
pub fn pcoc(scores: &[f64], labels: &[u8]) -> Metric {
    assert_eq!(scores.len(), labels.len(), "pcoc: scores and labels differ in length");
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 {
        return Metric::NA;
    }
    let n = scores.len() as f64;
    let mean_score = scores.iter().sum::<f64>() / n;
    Metric(Some(mean_score / (pos as f64 / n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.1], &[1, 0]), Metric(Some(1.0)));
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]), Metric(Some(0.75)));
        assert_eq!(auc(&[0.3; 4], &[0, 1, 0, 1]), Metric(Some(0.5)));
        assert!(auc(&[0.3, 0.2], &[1, 1]).is_na());
    }

    #[test]
    fn pcoc_examples() {
        let scores = [0.2; 10];
        let mut labels = [0u8; 10];
        labels[0] = 1;
        assert!((pcoc(&scores, &labels).value().unwrap() - 2.0).abs() < 1e-12);
        assert!(pcoc(&scores, &[0; 10]).is_na());
    }

    #[test]
    fn metric_json() {
        assert_eq!(serde_json::to_string(&Metric::NA).unwrap(), "\"n/a\"");
        assert_eq!(serde_json::to_string(&Metric(Some(0.5))).unwrap(), "0.5");
        let m: Metric = serde_json::from_str("\"n/a\"").unwrap();
        assert!(m.is_na());
        assert!(serde_json::from_str::<Metric>("\"x\"").is_err());
    }
}
