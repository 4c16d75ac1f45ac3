//! End-to-end bound on the tokenwise population risk of a smoothed,
//! quantized model:
//!
//! ```text
//! R_sq ≤ R̂_h + 𝒞·ln V + Σ·√𝒞 + √(2𝒞) + (R̂_q − R̂_h) [+ subsample correction]
//! 𝒞 = (N/D)·b·ln 2 + ln(|K|/δ)/D
//! ```
//!
//! Σ is computed on the trace's stored loss columns with `Δ = ln(V/α)` and α
//! fixed ahead of time from (𝒞, V).

use serde::{Deserialize, Serialize};

use crate::coding::{quantized_code_length, union_complexity};
use crate::concentration::{
    hoeffding_subsample_correction, sigma_grid, DeviationSequence, GridK, SigmaResult,
};
use crate::error::{Error, Result};
use crate::numeric::compensated_mean;
use crate::smoothing::optimal_alpha;

/// Slack allowed on the `nll_quant ≤ ln(V/α)` cap.
pub const CAP_TOLERANCE: f64 = 1e-9;

/// Relative tolerance when matching a trace's α to the configuration.
pub const ALPHA_REL_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub index: u64,
    /// `-ln p_h(x_k | x_<k)` of the full-precision model.
    pub nll_full: f64,
    /// Loss of the (smoothed) quantized model on the realized token.
    pub nll_quant: f64,
    /// Mean of the quantized loss when the token is resampled from `p_h`.
    pub proxy_mean_quant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    Synthetic,
    Extracted,
}

impl TraceSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceSource::Synthetic => "synthetic",
            TraceSource::Extracted => "extracted",
        }
    }
}

impl std::str::FromStr for TraceSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(TraceSource::Synthetic),
            "extracted" => Ok(TraceSource::Extracted),
            other => Err(Error::Schema(format!("unknown trace source `{other}`"))),
        }
    }
}

/// Per-token loss records feeding the bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTrace {
    alpha_used: f64,
    vocab: u64,
    records: Vec<TokenRecord>,
    source: TraceSource,
    /// Size of the full token stream when `records` is an IID subsample.
    parent_size: Option<u64>,
}

impl TokenTrace {
    pub fn new(
        alpha_used: f64,
        vocab: u64,
        records: Vec<TokenRecord>,
        source: TraceSource,
        parent_size: Option<u64>,
    ) -> Result<Self> {
        let mut trace = Self::empty(alpha_used, vocab, source, parent_size)?;
        for r in records {
            trace.push(r)?;
        }
        if trace.records.is_empty() {
            return Err(Error::domain("a trace needs at least one record"));
        }
        if let Some(parent) = parent_size {
            if parent < trace.records.len() as u64 {
                return Err(Error::Schema(format!(
                    "parent size {parent} is smaller than the subsample ({})",
                    trace.records.len()
                )));
            }
        }
        Ok(trace)
    }

    pub(crate) fn empty(
        alpha_used: f64,
        vocab: u64,
        source: TraceSource,
        parent_size: Option<u64>,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha_used) {
            return Err(Error::domain(format!("alpha_used must lie in [0, 1), got {alpha_used}")));
        }
        if vocab < 2 {
            return Err(Error::domain(format!("vocabulary must have at least 2 symbols, got {vocab}")));
        }
        Ok(Self { alpha_used, vocab, records: Vec::new(), source, parent_size })
    }

    /// Check a record against the trace invariants.
    pub fn validate_record(&self, r: &TokenRecord) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidRecord { index: r.index, reason });
        for (name, v) in [("nll_full", r.nll_full), ("nll_quant", r.nll_quant)] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        if !(r.proxy_mean_quant > 0.0) || !r.proxy_mean_quant.is_finite() {
            return bad(format!("proxy_mean_quant = {} must be finite and positive", r.proxy_mean_quant));
        }
        if self.alpha_used > 0.0 {
            let cap = (self.vocab as f64 / self.alpha_used).ln();
            if r.nll_quant > cap + CAP_TOLERANCE {
                return bad(format!("nll_quant = {} exceeds ln(V/alpha) = {cap}", r.nll_quant));
            }
        }
        Ok(())
    }

    pub(crate) fn push(&mut self, r: TokenRecord) -> Result<()> {
        self.validate_record(&r)?;
        self.records.push(r);
        Ok(())
    }

    pub fn alpha_used(&self) -> f64 {
        self.alpha_used
    }

    pub fn vocab(&self) -> u64 {
        self.vocab
    }

    pub fn records(&self) -> &[TokenRecord] {
        &self.records
    }

    pub fn source(&self) -> TraceSource {
        self.source
    }

    pub fn parent_size(&self) -> Option<u64> {
        self.parent_size
    }

    pub fn is_subsample(&self) -> bool {
        self.parent_size.is_some()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn empirical_risk_full(&self) -> f64 {
        mean_of(&self.records, |r| r.nll_full)
    }

    pub fn empirical_risk_quant(&self) -> f64 {
        mean_of(&self.records, |r| r.nll_quant)
    }

    /// `(x, y) = (nll_quant, proxy_mean_quant)` as a deviation sequence.
    pub fn deviation_sequence(&self) -> Result<DeviationSequence> {
        DeviationSequence::new(
            self.records.iter().map(|r| r.nll_quant).collect(),
            self.records.iter().map(|r| r.proxy_mean_quant).collect(),
        )
    }
}

fn mean_of(records: &[TokenRecord], f: impl Fn(&TokenRecord) -> f64) -> f64 {
    let values: Vec<f64> = records.iter().map(f).collect();
    compensated_mean(&values).unwrap_or(f64::NAN)
}

/// Which loss columns Σ is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Columns hold smoothed-quantized losses; α must match the optimum.
    #[default]
    Smoothed,
    /// Columns hold raw quantized losses (`alpha_used = 0`).
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub num_params: u64,
    pub num_tokens: u64,
    pub bits_per_param: f64,
    pub vocab: u64,
    pub delta_fail: f64,
    pub grid: GridK,
    pub complexity_override: Option<f64>,
    /// Use this Σ instead of computing it from the trace.
    pub sigma_override: Option<f64>,
    pub loss_mode: LossMode,
}

pub const DEFAULT_DELTA: f64 = 0.01;
pub const DEFAULT_BITS: f64 = 4.0;

impl BoundConfig {
    /// Configuration with δ = 0.01, a 1000-point grid and 4 bits per parameter.
    pub fn new(num_params: u64, num_tokens: u64, vocab: u64) -> Self {
        Self {
            num_params,
            num_tokens,
            bits_per_param: DEFAULT_BITS,
            vocab,
            delta_fail: DEFAULT_DELTA,
            grid: GridK::default(),
            complexity_override: None,
            sigma_override: None,
            loss_mode: LossMode::Smoothed,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta_fail > 0.0 && self.delta_fail < 1.0) {
            return Err(Error::domain(format!("δ must lie in (0, 1), got {}", self.delta_fail)));
        }
        if self.num_params == 0 || self.num_tokens == 0 || self.vocab == 0 {
            return Err(Error::domain("N, D and V must all be at least 1"));
        }
        if !(self.bits_per_param > 0.0) {
            return Err(Error::domain("bits per parameter must be positive"));
        }
        if let Some(c) = self.complexity_override {
            if !(c >= 0.0) || !c.is_finite() {
                return Err(Error::domain(format!("complexity override must be finite and ≥ 0, got {c}")));
            }
        }
        if let Some(s) = self.sigma_override {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(Error::domain(format!("sigma override must be finite and ≥ 0, got {s}")));
            }
        }
        Ok(())
    }

    /// Per-token complexity for a given concentration failure budget.
    pub fn complexity(&self, delta_concentration: f64) -> Result<f64> {
        match self.complexity_override {
            Some(c) => Ok(c),
            None => union_complexity(
                quantized_code_length(self.num_params, self.bits_per_param)?.nats,
                self.num_tokens,
                self.grid.len(),
                delta_concentration,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSource {
    Grid,
    Override,
    /// Complexity is zero, so the loss-variation term vanishes.
    Vanishing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub empirical_risk_full: f64,
    pub empirical_risk_quant: f64,
    pub complexity: f64,
    pub term_random_guess: f64,
    pub term_loss_variation: f64,
    pub term_smoothing: f64,
    pub term_quant_gap: f64,
    pub subsample_correction: f64,
    pub total_bound: f64,
    pub vacuous: bool,
    pub sigma: f64,
    pub alpha: f64,
    pub vocab: u64,
    pub num_records: u64,
    /// `Δ_s = ln(V/α)`; absent when α = 0.
    pub delta_range: Option<f64>,
    pub sigma_source: SigmaSource,
    pub argmin_s: Option<f64>,
    pub rms_reference: f64,
    pub loss_mode: LossMode,
    /// Failure probability charged to the concentration bound.
    pub delta_concentration: f64,
    /// Failure probability charged to the subsample correction.
    pub delta_subsample: Option<f64>,
}

impl BoundReport {
    /// Sum of the decomposition, in the same order used for `total_bound`.
    pub fn resum(&self) -> f64 {
        self.empirical_risk_full
            + self.term_random_guess
            + self.term_loss_variation
            + self.term_smoothing
            + self.term_quant_gap
            + self.subsample_correction
    }

    /// `total_bound − R̂_h`.
    pub fn gap(&self) -> f64 {
        self.total_bound - self.empirical_risk_full
    }
}

/// The five-term decomposition for given scalar inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    pub random_guess: f64,
    pub loss_variation: f64,
    pub smoothing: f64,
    pub quant_gap: f64,
}

impl BoundTerms {
    pub fn new(complexity: f64, sigma: f64, vocab: u64, r_hat_full: f64, r_hat_quant: f64) -> Self {
        Self {
            random_guess: complexity * (vocab as f64).ln(),
            loss_variation: sigma * complexity.sqrt(),
            smoothing: (2.0 * complexity).sqrt(),
            quant_gap: r_hat_quant - r_hat_full,
        }
    }

    pub fn gap(&self) -> f64 {
        self.random_guess + self.loss_variation + self.smoothing + self.quant_gap
    }
}

/// Vacuous iff the bound reaches the random-guess loss `ln V`.
pub fn classify_vacuity(report: &BoundReport) -> bool {
    is_vacuous(report.total_bound, report.vocab)
}

pub fn is_vacuous(total_bound: f64, vocab: u64) -> bool {
    total_bound >= (vocab as f64).ln()
}

/// Assemble the bound from a trace and configuration.
pub fn assemble_bound(trace: &TokenTrace, cfg: &BoundConfig) -> Result<BoundReport> {
    cfg.validate()?;
    if trace.vocab != cfg.vocab {
        return Err(Error::Schema(format!(
            "trace vocabulary {} does not match configuration vocabulary {}",
            trace.vocab, cfg.vocab
        )));
    }
    if cfg.loss_mode == LossMode::Literal && trace.alpha_used != 0.0 {
        return Err(Error::AlphaMismatch { trace: trace.alpha_used, expected: 0.0 });
    }

    let subsample = trace.is_subsample();
    let delta_concentration = if subsample { cfg.delta_fail / 2.0 } else { cfg.delta_fail };
    let delta_subsample = subsample.then_some(cfg.delta_fail / 2.0);
    let complexity = cfg.complexity(delta_concentration)?;

    let r_full = trace.empirical_risk_full();
    let r_quant = trace.empirical_risk_quant();
    let seq = trace.deviation_sequence()?;

    let (alpha, delta_range, sigma, sigma_source, argmin_s) = if complexity == 0.0 {
        if trace.alpha_used != 0.0 {
            return Err(Error::AlphaMismatch { trace: trace.alpha_used, expected: 0.0 });
        }
        if subsample {
            return Err(Error::domain(
                "zero complexity leaves the loss range unbounded; cannot correct a subsample",
            ));
        }
        (0.0, None, cfg.sigma_override.unwrap_or(0.0), SigmaSource::Vanishing, None)
    } else {
        let spec = optimal_alpha(complexity, cfg.vocab)?;
        if cfg.loss_mode == LossMode::Smoothed
            && (trace.alpha_used - spec.alpha()).abs() > ALPHA_REL_TOLERANCE * spec.alpha()
        {
            return Err(Error::AlphaMismatch { trace: trace.alpha_used, expected: spec.alpha() });
        }
        let delta_range = spec.worst_case_nats();
        match cfg.sigma_override {
            Some(s) => (spec.alpha(), Some(delta_range), s, SigmaSource::Override, None),
            None => {
                let SigmaResult { sigma, argmin_s, .. } =
                    sigma_grid(&seq, delta_range, complexity, &cfg.grid)
                        .map_err(|e| attribute_to_record(e, trace))?;
                (spec.alpha(), Some(delta_range), sigma, SigmaSource::Grid, Some(argmin_s))
            }
        }
    };

    let subsample_correction = match (delta_subsample, delta_range) {
        (Some(d), Some(width)) => hoeffding_subsample_correction(width, trace.len() as u64, d)?,
        _ => 0.0,
    };

    let terms = BoundTerms::new(complexity, sigma, cfg.vocab, r_full, r_quant);
    let mut report = BoundReport {
        empirical_risk_full: r_full,
        empirical_risk_quant: r_quant,
        complexity,
        term_random_guess: terms.random_guess,
        term_loss_variation: terms.loss_variation,
        term_smoothing: terms.smoothing,
        term_quant_gap: terms.quant_gap,
        subsample_correction,
        total_bound: 0.0,
        vacuous: false,
        sigma,
        alpha,
        vocab: cfg.vocab,
        num_records: trace.len() as u64,
        delta_range,
        sigma_source,
        argmin_s,
        rms_reference: seq.rms_reference(),
        loss_mode: cfg.loss_mode,
        delta_concentration,
        delta_subsample,
    };
    report.total_bound = report.resum();
    report.vacuous = classify_vacuity(&report);
    Ok(report)
}

fn attribute_to_record(e: Error, trace: &TokenTrace) -> Error {
    match e {
        Error::Precondition { index, reason } => Error::InvalidRecord {
            index: trace.records.get(index).map_or(index as u64, |r| r.index),
            reason,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothing::SmoothingSpec;

    fn record(index: u64, full: f64, quant: f64, proxy: f64) -> TokenRecord {
        TokenRecord { index, nll_full: full, nll_quant: quant, proxy_mean_quant: proxy }
    }

    /// Trace whose quantized column sits `gap` above the full column.
    fn gapped_trace(alpha: f64, n: u64, gap: f64) -> TokenTrace {
        let records = (0..n)
            .map(|k| {
                let full = 2.0 + 0.5 * ((k as f64) * 0.7).sin();
                record(k, full, full + gap, 2.0 + gap)
            })
            .collect();
        TokenTrace::new(alpha, 50_000, records, TraceSource::Synthetic, None).unwrap()
    }

    #[test]
    fn worked_example_reproduces_one_point_eight_nats() {
        let c = 1.0 / 9.0;
        let alpha = optimal_alpha(c, 50_000).unwrap().alpha();
        let trace = gapped_trace(alpha, 100, 0.1);
        let mut cfg = BoundConfig::new(1, 100, 50_000);
        cfg.complexity_override = Some(c);
        cfg.sigma_override = Some(0.1);
        let r = assemble_bound(&trace, &cfg).unwrap();
        let expected = c * 50_000f64.ln() + 0.1 * c.sqrt() + (2.0 * c).sqrt() + 0.1;
        assert!((r.gap() - expected).abs() < 1e-12);
        assert!((r.gap() - 1.807).abs() < 0.02);
        assert!(!r.vacuous);
    }

    #[test]
    fn zero_complexity_collapses_to_quant_gap() {
        let trace = gapped_trace(0.0, 50, 0.25);
        let mut cfg = BoundConfig::new(1, 50, 50_000);
        cfg.complexity_override = Some(0.0);
        let r = assemble_bound(&trace, &cfg).unwrap();
        assert!((r.total_bound - (r.empirical_risk_full + 0.25)).abs() < 1e-12);
        assert_eq!(r.term_random_guess, 0.0);
        assert_eq!(r.term_smoothing, 0.0);
        assert_eq!(r.sigma_source, SigmaSource::Vanishing);
    }

    #[test]
    fn alpha_mismatch_names_both_values() {
        let trace = gapped_trace(0.05, 10, 0.0);
        let mut cfg = BoundConfig::new(1, 10, 50_000);
        cfg.complexity_override = Some(1.0 / 9.0);
        match assemble_bound(&trace, &cfg).unwrap_err() {
            Error::AlphaMismatch { trace, expected } => {
                assert_eq!(trace, 0.05);
                assert!((expected - 0.100002).abs() < 1e-6);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn literal_mode_rejects_unbounded_record() {
        let mut records: Vec<TokenRecord> = (0..20).map(|k| record(k, 1.0, 1.0, 1.5)).collect();
        records[7] = record(7, 40.0, 40.0, 1.5);
        let trace = TokenTrace::new(0.0, 50_000, records, TraceSource::Synthetic, None).unwrap();
        let mut cfg = BoundConfig::new(1, 20, 50_000);
        cfg.complexity_override = Some(0.1);
        cfg.loss_mode = LossMode::Literal;
        match assemble_bound(&trace, &cfg).unwrap_err() {
            Error::InvalidRecord { index, .. } => assert_eq!(index, 7),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn trace_rejects_capped_violation() {
        let spec = SmoothingSpec::new(0.1, 1000).unwrap();
        let over = spec.worst_case_nats() + 1e-6;
        let err = TokenTrace::new(0.1, 1000, vec![record(3, 1.0, over, 1.0)], TraceSource::Synthetic, None)
            .unwrap_err();
        assert!(matches!(err, Error::InvalidRecord { index: 3, .. }));
        let err = TokenTrace::new(0.1, 1000, vec![record(0, 1.0, 1.0, 0.0)], TraceSource::Synthetic, None)
            .unwrap_err();
        assert!(matches!(err, Error::InvalidRecord { index: 0, .. }));
        assert!(TokenTrace::new(0.1, 1000, vec![], TraceSource::Synthetic, None).is_err());
    }

    #[test]
    fn subsample_charges_half_delta_to_each_part() {
        let c_full = {
            let cfg = BoundConfig::new(10, 10_000, 50_000);
            cfg.complexity(cfg.delta_fail).unwrap()
        };
        let cfg = BoundConfig::new(10, 10_000, 50_000);
        let c_half = cfg.complexity(cfg.delta_fail / 2.0).unwrap();
        let alpha = optimal_alpha(c_half, 50_000).unwrap().alpha();
        let records = (0..200).map(|k| record(k, 2.0, 2.1, 2.05)).collect();
        let trace = TokenTrace::new(alpha, 50_000, records, TraceSource::Synthetic, Some(10_000)).unwrap();
        let r = assemble_bound(&trace, &cfg).unwrap();
        assert!(c_half > c_full);
        assert_eq!(r.complexity, c_half);
        assert_eq!(r.delta_subsample, Some(0.005));
        let expected = hoeffding_subsample_correction(r.delta_range.unwrap(), 200, 0.005).unwrap();
        assert_eq!(r.subsample_correction, expected);
        assert_eq!(r.total_bound, r.resum());
    }

    #[test]
    fn vacuity_boundary() {
        let trace = gapped_trace(0.0, 10, 0.0);
        let mut cfg = BoundConfig::new(1, 10, 50_000);
        cfg.complexity_override = Some(0.0);
        let mut r = assemble_bound(&trace, &cfg).unwrap();
        r.total_bound = 3.8;
        assert!(!classify_vacuity(&r));
        r.total_bound = 50_000f64.ln();
        assert!(classify_vacuity(&r));
        r.total_bound = 12.0;
        assert!(classify_vacuity(&r));
    }

    #[test]
    fn more_bits_raise_complexity_more_tokens_lower_it() {
        let base = BoundConfig::new(1_000, 100_000, 50_000);
        let mut more_bits = base.clone();
        more_bits.bits_per_param = 5.0;
        let mut more_tokens = base.clone();
        more_tokens.num_tokens = 200_000;
        let c = base.complexity(0.01).unwrap();
        assert!(more_bits.complexity(0.01).unwrap() > c);
        assert!(more_tokens.complexity(0.01).unwrap() < c);
    }

    #[test]
    fn identical_models_have_no_quant_gap_and_report_is_deterministic() {
        let cfg = BoundConfig::new(100, 100_000, 50_000);
        let c = cfg.complexity(0.01).unwrap();
        let alpha = optimal_alpha(c, 50_000).unwrap().alpha();
        let records = (0..500)
            .map(|k| {
                let l = 1.0 + (k % 7) as f64 * 0.3;
                record(k, l, l, 1.9)
            })
            .collect();
        let trace = TokenTrace::new(alpha, 50_000, records, TraceSource::Synthetic, None).unwrap();
        let a = assemble_bound(&trace, &cfg).unwrap();
        let b = assemble_bound(&trace, &cfg).unwrap();
        assert_eq!(a.term_quant_gap, 0.0);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!((a.resum() - a.total_bound).abs() <= 1e-12 * a.total_bound);
    }
}
