//! Detection scores, equal error rate and normalized minimum t-DCF.
//!
//! Decisions use `score >= threshold` as bona fide. Operating points are
//! the distinct scores plus a reject-all point at `+inf`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::audio::Label;
use crate::backbone::{BONAFIDE, SPOOF};
use crate::config::{ConfigError, KeyValues};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("need at least one bona fide and one spoof score (got {bonafide} and {spoof})")]
    SingleClass { bonafide: usize, spoof: usize },
    #[error("non-finite score {0}")]
    NonFinite(f64),
    #[error("invalid cost model: {0}")]
    Cost(String),
    #[error("score line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Log-likelihood-ratio score of each `[B, 2]` logit row. The log-softmax
/// normalizer cancels, leaving the raw logit difference.
pub fn score_logits<T: Scalar>(logits: &Tensor<T>) -> Vec<f64> {
    let c = logits.shape()[1];
    logits
        .data()
        .chunks_exact(c)
        .map(|row| row[BONAFIDE].as_f64() - row[SPOOF].as_f64())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub utt_id: String,
    pub score: f64,
    pub label: Option<Label>,
}

/// Splits labelled records into bona fide and spoof scores; unlabelled
/// records are ignored.
pub fn split_by_label(records: &[ScoreRecord]) -> (Vec<f64>, Vec<f64>) {
    let mut bona = Vec::new();
    let mut spoof = Vec::new();
    for r in records {
        match r.label {
            Some(Label::Bonafide) => bona.push(r.score),
            Some(Label::Spoof) => spoof.push(r.score),
            None => {}
        }
    }
    (bona, spoof)
}

/// Miss and false-alarm rates at every operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCurve {
    pub thresholds: Vec<f64>,
    pub miss: Vec<f64>,
    pub false_alarm: Vec<f64>,
}

pub fn rate_curve(bonafide: &[f64], spoof: &[f64]) -> Result<RateCurve, MetricError> {
    if bonafide.is_empty() || spoof.is_empty() {
        return Err(MetricError::SingleClass {
            bonafide: bonafide.len(),
            spoof: spoof.len(),
        });
    }
    if let Some(&bad) = bonafide.iter().chain(spoof).find(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(bad));
    }
    // (score, is_bonafide) sorted ascending
    let mut all: Vec<(f64, bool)> = bonafide
        .iter()
        .map(|&s| (s, true))
        .chain(spoof.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nb, ns) = (bonafide.len() as f64, spoof.len() as f64);
    let mut curve = RateCurve {
        thresholds: Vec::new(),
        miss: Vec::new(),
        false_alarm: Vec::new(),
    };
    let (mut below_b, mut below_s) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let tau = all[i].0;
        curve.thresholds.push(tau);
        curve.miss.push(below_b as f64 / nb);
        curve.false_alarm.push((spoof.len() - below_s) as f64 / ns);
        while i < all.len() && all[i].0 == tau {
            if all[i].1 {
                below_b += 1;
            } else {
                below_s += 1;
            }
            i += 1;
        }
    }
    curve.thresholds.push(f64::INFINITY);
    curve.miss.push(1.0);
    curve.false_alarm.push(0.0);
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub value: f64,
    pub threshold: f64,
}

/// EER as a fraction in `[0, 1]`, linearly interpolated between the two
/// operating points where `miss - false_alarm` changes sign.
pub fn compute_eer(bonafide: &[f64], spoof: &[f64]) -> Result<OperatingPoint, MetricError> {
    let c = rate_curve(bonafide, spoof)?;
    let d = |k: usize| c.miss[k] - c.false_alarm[k];
    // d starts at -1 and ends at +1
    let k = (0..c.thresholds.len()).find(|&k| d(k) >= 0.0).expect("curve ends with miss = 1");
    if d(k) == 0.0 {
        return Ok(OperatingPoint {
            value: c.miss[k],
            threshold: c.thresholds[k],
        });
    }
    let (d0, d1) = (d(k - 1), d(k));
    let alpha = -d0 / (d1 - d0);
    let value = c.miss[k - 1] + alpha * (c.miss[k] - c.miss[k - 1]);
    let (t0, t1) = (c.thresholds[k - 1], c.thresholds[k]);
    let threshold = if t1.is_finite() { t0 + alpha * (t1 - t0) } else { t0 };
    Ok(OperatingPoint { value, threshold })
}

pub fn compute_eer_records(records: &[ScoreRecord]) -> Result<OperatingPoint, MetricError> {
    let (b, s) = split_by_label(records);
    compute_eer(&b, &s)
}

/// Priors, costs and the fixed ASV operating point of the tandem cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdcfCost {
    pub p_target: f64,
    pub p_nontarget: f64,
    pub p_spoof: f64,
    pub c_miss_asv: f64,
    pub c_fa_asv: f64,
    pub c_miss_cm: f64,
    pub c_fa_cm: f64,
    pub p_miss_asv: f64,
    pub p_fa_asv: f64,
    pub p_miss_spoof_asv: f64,
}

impl TdcfCost {
    /// Challenge default priors and costs with the given ASV error rates.
    pub fn with_asv_rates(p_miss_asv: f64, p_fa_asv: f64, p_miss_spoof_asv: f64) -> Self {
        Self {
            p_target: 0.95 * 0.99,
            p_nontarget: 0.95 * 0.01,
            p_spoof: 0.05,
            c_miss_asv: 1.0,
            c_fa_asv: 10.0,
            c_miss_cm: 1.0,
            c_fa_cm: 10.0,
            p_miss_asv,
            p_fa_asv,
            p_miss_spoof_asv,
        }
    }

    /// Reads a key=value cost file. The three ASV rates are required;
    /// priors and costs default to the challenge values.
    pub fn from_kv(kv: &KeyValues) -> Result<Self, ConfigError> {
        let mut c = Self::with_asv_rates(
            kv.require("p_miss_asv")?,
            kv.require("p_fa_asv")?,
            kv.require("p_miss_spoof_asv")?,
        );
        for (key, slot) in [
            ("p_target", &mut c.p_target),
            ("p_nontarget", &mut c.p_nontarget),
            ("p_spoof", &mut c.p_spoof),
            ("c_miss_asv", &mut c.c_miss_asv),
            ("c_fa_asv", &mut c.c_fa_asv),
            ("c_miss_cm", &mut c.c_miss_cm),
            ("c_fa_cm", &mut c.c_fa_cm),
        ] {
            if let Some(v) = kv.get::<f64>(key)? {
                *slot = v;
            }
        }
        let known = [
            "p_target",
            "p_nontarget",
            "p_spoof",
            "c_miss_asv",
            "c_fa_asv",
            "c_miss_cm",
            "c_fa_cm",
            "p_miss_asv",
            "p_fa_asv",
            "p_miss_spoof_asv",
        ];
        if let Some(k) = kv.keys().find(|k| !known.contains(k)) {
            return Err(ConfigError::new(format!("unknown cost key {k}")));
        }
        c.validate().map_err(|e| ConfigError::new(e.to_string()))?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        for (k, v) in [
            ("p_target", self.p_target),
            ("p_nontarget", self.p_nontarget),
            ("p_spoof", self.p_spoof),
            ("c_miss_asv", self.c_miss_asv),
            ("c_fa_asv", self.c_fa_asv),
            ("c_miss_cm", self.c_miss_cm),
            ("c_fa_cm", self.c_fa_cm),
            ("p_miss_asv", self.p_miss_asv),
            ("p_fa_asv", self.p_fa_asv),
            ("p_miss_spoof_asv", self.p_miss_spoof_asv),
        ] {
            kv.insert(k, v);
        }
        kv
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let priors = [self.p_target, self.p_nontarget, self.p_spoof];
        if priors.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(MetricError::Cost("priors must lie in (0, 1)".into()));
        }
        let sum: f64 = priors.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MetricError::Cost(format!("priors sum to {sum}, not 1")));
        }
        if [self.c_miss_asv, self.c_fa_asv, self.c_miss_cm, self.c_fa_cm]
            .iter()
            .any(|c| !(*c >= 0.0 && c.is_finite()))
        {
            return Err(MetricError::Cost("costs must be finite and nonnegative".into()));
        }
        if [self.p_miss_asv, self.p_fa_asv, self.p_miss_spoof_asv]
            .iter()
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return Err(MetricError::Cost("ASV error rates must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Weights of the CM miss and false-alarm rates in the tandem cost.
    pub fn coefficients(&self) -> (f64, f64) {
        let c1 = self.p_target * (self.c_miss_cm - self.c_miss_asv * self.p_miss_asv)
            - self.p_nontarget * self.c_fa_asv * self.p_fa_asv;
        let c2 = self.c_fa_cm * self.p_spoof * (1.0 - self.p_miss_spoof_asv);
        (c1, c2)
    }
}

/// Minimum over operating points of `(C1 * miss + C2 * fa) / min(C1, C2)`.
pub fn compute_min_tdcf(bonafide: &[f64], spoof: &[f64], cost: &TdcfCost) -> Result<OperatingPoint, MetricError> {
    cost.validate()?;
    let (c1, c2) = cost.coefficients();
    if c1 <= 0.0 || c2 <= 0.0 {
        return Err(MetricError::Cost(format!(
            "degenerate tandem cost: C1 = {c1}, C2 = {c2} (both must be positive)"
        )));
    }
    let norm = c1.min(c2);
    let curve = rate_curve(bonafide, spoof)?;
    let mut best = OperatingPoint {
        value: f64::INFINITY,
        threshold: f64::NAN,
    };
    for k in 0..curve.thresholds.len() {
        let v = (c1 * curve.miss[k] + c2 * curve.false_alarm[k]) / norm;
        if v < best.value {
            best = OperatingPoint {
                value: v,
                threshold: curve.thresholds[k],
            };
        }
    }
    Ok(best)
}

pub fn compute_min_tdcf_records(records: &[ScoreRecord], cost: &TdcfCost) -> Result<OperatingPoint, MetricError> {
    let (b, s) = split_by_label(records);
    compute_min_tdcf(&b, &s, cost)
}

/// One `utt_id score` line per record, six decimals.
pub fn write_scores(records: &[ScoreRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 24);
    for r in records {
        writeln!(out, "{} {:.6}", r.utt_id, r.score).expect("writing to a String");
    }
    out
}

pub fn read_scores(text: &str) -> Result<Vec<ScoreRecord>, MetricError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| MetricError::Parse { line: i + 1, message };
        let cols: Vec<&str> = line.split_whitespace().collect();
        match cols.as_slice() {
            [] => continue,
            [utt, score] => {
                let score: f64 = score.parse().map_err(|_| err(format!("invalid score {score:?}")))?;
                if !score.is_finite() {
                    return Err(err(format!("non-finite score {score}")));
                }
                out.push(ScoreRecord {
                    utt_id: utt.to_string(),
                    score,
                    label: None,
                });
            }
            _ => return Err(err(format!("expected 2 columns, found {}", cols.len()))),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub eer: OperatingPoint,
    /// Absent when no cost model was supplied.
    pub min_tdcf: Option<OperatingPoint>,
}

/// `metric,value,threshold` CSV. EER is reported in percent.
pub fn report_csv(r: &EvalReport) -> String {
    let mut out = format!(
        "metric,value,threshold\neer,{:.6},{:.6}\n",
        100.0 * r.eer.value,
        r.eer.threshold
    );
    if let Some(t) = r.min_tdcf {
        writeln!(out, "min_tdcf,{:.6},{:.6}", t.value, t.threshold).expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force rates at a threshold by scanning every score.
    fn rates(b: &[f64], s: &[f64], tau: f64) -> (f64, f64) {
        let miss = b.iter().filter(|&&x| x < tau).count() as f64 / b.len() as f64;
        let fa = s.iter().filter(|&&x| x >= tau).count() as f64 / s.len() as f64;
        (miss, fa)
    }

    fn candidate_thresholds(b: &[f64], s: &[f64]) -> Vec<f64> {
        let mut t: Vec<f64> = b.iter().chain(s).copied().collect();
        t.push(f64::INFINITY);
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    /// O(n^2) sweep: rates at every candidate, crossing found by scanning
    /// adjacent pairs, interpolated linearly.
    fn eer_oracle(b: &[f64], s: &[f64]) -> (f64, f64) {
        let t = candidate_thresholds(b, s);
        let pts: Vec<(f64, f64)> = t.iter().map(|&tau| rates(b, s, tau)).collect();
        let best = (0..pts.len())
            .min_by(|&i, &j| {
                let di = (pts[i].0 - pts[i].1).abs();
                let dj = (pts[j].0 - pts[j].1).abs();
                di.total_cmp(&dj).then(i.cmp(&j))
            })
            .unwrap();
        if pts[best].0 == pts[best].1 {
            return (pts[best].0, t[best]);
        }
        for w in 0..pts.len() - 1 {
            let (m0, f0) = pts[w];
            let (m1, f1) = pts[w + 1];
            if m0 - f0 < 0.0 && m1 - f1 > 0.0 {
                let a = (f0 - m0) / ((m1 - f1) - (m0 - f0));
                let thr = if t[w + 1].is_finite() { t[w] + a * (t[w + 1] - t[w]) } else { t[w] };
                return (m0 + a * (m1 - m0), thr);
            }
        }
        unreachable!("rates always cross")
    }

    fn tdcf_oracle(b: &[f64], s: &[f64], c: &TdcfCost) -> f64 {
        let mut best = f64::INFINITY;
        for tau in candidate_thresholds(b, s) {
            let (pm, pf) = rates(b, s, tau);
            let miss_term = c.p_target * c.c_miss_cm * pm;
            let asv_term = c.p_target * c.c_miss_asv * c.p_miss_asv * pm + c.p_nontarget * c.c_fa_asv * c.p_fa_asv * pm;
            let fa_term = c.p_spoof * c.c_fa_cm * (1.0 - c.p_miss_spoof_asv) * pf;
            let raw = miss_term - asv_term + fa_term;
            let w_miss = c.p_target * c.c_miss_cm - c.p_target * c.c_miss_asv * c.p_miss_asv - c.p_nontarget * c.c_fa_asv * c.p_fa_asv;
            let w_fa = c.p_spoof * c.c_fa_cm * (1.0 - c.p_miss_spoof_asv);
            best = best.min(raw / w_miss.min(w_fa));
        }
        best
    }

    /// Random scores with both classes present; `grid` forces many ties.
    fn random_set(rng: &mut ChaCha8Rng, n: usize, grid: bool) -> (Vec<f64>, Vec<f64>) {
        let mut b = vec![];
        let mut s = vec![];
        for i in 0..n {
            let x = if grid {
                rng.random_range(-20i32..20) as f64 / 4.0
            } else {
                rng.random_range(-3.0..3.0)
            };
            let bona = match i {
                0 => true,
                1 => false,
                _ => rng.random_bool(0.5),
            };
            if bona {
                b.push(x + 0.5);
            } else {
                s.push(x);
            }
        }
        (b, s)
    }

    fn cost() -> TdcfCost {
        TdcfCost::with_asv_rates(0.02, 0.01, 0.3)
    }

    #[test]
    fn logit_difference_examples() {
        let l = Tensor::from_vec(&[2, 2], vec![0.0f64, 0.0, 1.0, 3.0]).unwrap();
        assert_eq!(score_logits(&l), vec![0.0, 2.0]);
    }

    #[test]
    fn eer_extremes() {
        let e = compute_eer(&[0.9, 0.8], &[0.1, 0.2]).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(compute_eer(&[0.1, 0.2], &[0.9, 0.8]).unwrap().value, 1.0);
        assert!(matches!(compute_eer(&[1.0], &[]), Err(MetricError::SingleClass { .. })));
        assert!(compute_eer(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn eer_hand_interpolation() {
        // thresholds 1,2,3,4,inf: miss 0,0,.5,.5,1 ; fa 1,.5,.5,0,0
        let e = compute_eer(&[2.0, 4.0], &[1.0, 3.0]).unwrap();
        assert_eq!((e.value, e.threshold), (0.5, 3.0));
        // thresholds 1,2,3,inf: miss 0,0,1/3,1 ; fa 1,0,0,0 -> d: -1,0 at 2
        let e = compute_eer(&[2.0, 2.0, 3.0], &[1.0]).unwrap();
        assert_eq!((e.value, e.threshold), (0.0, 2.0));
        // thresholds 1,2,inf: miss 0,.5,1 ; fa 1,0,0 -> d -1 then .5, alpha 2/3
        let e = compute_eer(&[1.0, 2.0], &[1.0]).unwrap();
        assert!((e.value - 1.0 / 3.0).abs() < 1e-15);
        assert!((e.threshold - (1.0 + 2.0 / 3.0)).abs() < 1e-15);
        // thresholds 1,2,inf: miss 0,0,1 ; fa 1,0,0 -> exact zero crossing at 2
        let e = compute_eer(&[2.0], &[1.0]).unwrap();
        assert_eq!((e.value, e.threshold), (0.0, 2.0));
        // thresholds 1,2,inf: miss 0,1,1 ; fa 1,1,0 -> crossing between 1 and 2
        let e = compute_eer(&[1.0], &[2.0]).unwrap();
        assert_eq!(e.value, 1.0);
    }

    #[test]
    fn eer_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for set in 0..50 {
            let (b, s) = random_set(&mut rng, 1000, set % 2 == 0);
            let e = compute_eer(&b, &s).unwrap();
            let (v, t) = eer_oracle(&b, &s);
            assert!((e.value - v).abs() <= 1e-12, "set {set}: {} vs {v}", e.value);
            assert!((e.threshold - t).abs() <= 1e-12, "set {set}: {} vs {t}", e.threshold);
        }
    }

    #[test]
    fn tdcf_matches_straight_line_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for set in 0..50 {
            let (b, s) = random_set(&mut rng, 200, set % 3 == 0);
            let c = TdcfCost::with_asv_rates(rng.random_range(0.0..0.2), rng.random_range(0.0..0.2), rng.random_range(0.0..0.9));
            let got = compute_min_tdcf(&b, &s, &c).unwrap().value;
            let want = tdcf_oracle(&b, &s, &c);
            assert!((got - want).abs() <= 1e-12, "set {set}: {got} vs {want}");
        }
    }

    #[test]
    fn tdcf_perfect_and_accept_all() {
        let c = cost();
        assert_eq!(compute_min_tdcf(&[2.0, 3.0], &[0.0, 1.0], &c).unwrap().value, 0.0);
        // reversed scores: accept-all point costs C2 / min(C1, C2)
        let (c1, c2) = c.coefficients();
        let r = compute_min_tdcf(&[0.0, 0.5], &[2.0, 3.0], &c).unwrap();
        let accept_all = c2 / c1.min(c2);
        let reject_all = c1 / c1.min(c2);
        assert_eq!(r.value, accept_all.min(reject_all));
    }

    #[test]
    fn tdcf_rejects_degenerate_costs() {
        let mut c = cost();
        c.p_miss_spoof_asv = 1.0;
        assert!(compute_min_tdcf(&[1.0], &[0.0], &c).is_err());
        let mut c = cost();
        c.p_spoof = 0.5;
        assert!(compute_min_tdcf(&[1.0], &[0.0], &c).is_err());
    }

    #[test]
    fn cost_file_parsing() {
        let kv = KeyValues::parse("p_miss_asv=0.02\np_fa_asv=0.01\np_miss_spoof_asv=0.3\n").unwrap();
        assert_eq!(TdcfCost::from_kv(&kv).unwrap(), cost());
        assert_eq!(TdcfCost::from_kv(&cost().to_kv()).unwrap(), cost());
        assert!(TdcfCost::from_kv(&KeyValues::parse("p_fa_asv=0.1\n").unwrap()).is_err());
        let mut kv = cost().to_kv();
        kv.insert("c_typo", 1);
        assert!(TdcfCost::from_kv(&kv).is_err());
    }

    #[test]
    fn monotone_maps_leave_eer_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (b, s) = random_set(&mut rng, 500, true);
        let base = compute_eer(&b, &s).unwrap().value;
        for _ in 0..20 {
            let a = rng.random_range(0.1..5.0);
            let k = rng.random_range(-2.0..2.0);
            let p = rng.random_range(1..4) as i32;
            let f = |x: f64| a * (x + 10.0).powi(2 * p - 1) + k + (x / 3.0).tanh();
            let tb: Vec<f64> = b.iter().map(|&x| f(x)).collect();
            let ts: Vec<f64> = s.iter().map(|&x| f(x)).collect();
            assert_eq!(compute_eer(&tb, &ts).unwrap().value, base);
        }
    }

    #[test]
    fn score_file_format() {
        let r = ScoreRecord {
            utt_id: "LA_E_1001".into(),
            score: 2.5,
            label: None,
        };
        assert_eq!(write_scores(&[r]), "LA_E_1001 2.500000\n");
        let e = read_scores("a 1.0\nb\n").unwrap_err();
        assert_eq!(e, MetricError::Parse { line: 2, message: "expected 2 columns, found 1".into() });
        assert!(read_scores("a nan\n").is_err());
        assert!(read_scores("a x\n").unwrap_err().to_string().contains("line 1"));
    }

    #[test]
    fn score_round_trip_within_print_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let recs: Vec<ScoreRecord> = (0..1000)
            .map(|i| ScoreRecord {
                utt_id: format!("U{i}"),
                score: rng.random_range(-50.0..50.0),
                label: None,
            })
            .collect();
        let back = read_scores(&write_scores(&recs)).unwrap();
        assert_eq!(back.len(), recs.len());
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(a.utt_id, b.utt_id);
            assert!((a.score - b.score).abs() < 5e-7);
        }
    }

    #[test]
    fn report_uses_percent() {
        let r = EvalReport {
            eer: OperatingPoint { value: 0.0, threshold: 1.0 },
            min_tdcf: Some(OperatingPoint { value: 0.5, threshold: 1.0 }),
        };
        let csv = report_csv(&r);
        assert!(csv.contains("\neer,0.000000,"));
        assert!(csv.ends_with("min_tdcf,0.500000,1.000000\n"));
        let csv = report_csv(&EvalReport { min_tdcf: None, ..r });
        assert_eq!(csv.lines().count(), 2);
    }

    proptest! {
        #[test]
        fn eer_in_unit_interval_and_swap_symmetric(
            b in prop::collection::vec(-100i32..100, 1..60),
            s in prop::collection::vec(-100i32..100, 1..60),
        ) {
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let s: Vec<f64> = s.into_iter().map(f64::from).collect();
            let e = compute_eer(&b, &s).unwrap().value;
            prop_assert!((0.0..=1.0).contains(&e));
            let swapped = compute_eer(&s, &b).unwrap().value;
            prop_assert!((e + swapped - 1.0).abs() < 1e-12);
        }

        #[test]
        fn constant_shift_moves_only_thresholds(
            b in prop::collection::vec(-100i32..100, 1..60),
            s in prop::collection::vec(-100i32..100, 1..60),
            c in -1000i32..1000,
        ) {
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let s: Vec<f64> = s.into_iter().map(f64::from).collect();
            let shift = |v: &[f64]| v.iter().map(|x| x + f64::from(c)).collect::<Vec<_>>();
            let (e0, e1) = (compute_eer(&b, &s).unwrap(), compute_eer(&shift(&b), &shift(&s)).unwrap());
            prop_assert_eq!(e0.value, e1.value);
            prop_assert!((e0.threshold + f64::from(c) - e1.threshold).abs() < 1e-9);
            let (t0, t1) = (compute_min_tdcf(&b, &s, &cost()).unwrap(), compute_min_tdcf(&shift(&b), &shift(&s), &cost()).unwrap());
            prop_assert_eq!(t0.value, t1.value);
            prop_assert_eq!(t0.threshold + f64::from(c), t1.threshold);
        }

        #[test]
        fn tdcf_invariant_under_duplication(
            b in prop::collection::vec(-50i32..50, 1..40),
            s in prop::collection::vec(-50i32..50, 1..40),
        ) {
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let s: Vec<f64> = s.into_iter().map(f64::from).collect();
            let dup = |v: &[f64]| [v, v].concat();
            let a = compute_min_tdcf(&b, &s, &cost()).unwrap();
            let d = compute_min_tdcf(&dup(&b), &dup(&s), &cost()).unwrap();
            prop_assert_eq!(a, d);
        }
    }
}
