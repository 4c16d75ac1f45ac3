//! Prequential upper bounds on model information content `K(h)`.
//!
//! The area between the online loss curve and the final model's losses
//! upper-bounds `K(h)·ln 2`. Under the Chinchilla law this grows as
//! `D^{1−β}`, so the resulting per-token complexity decays as `D^{−β}`.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::assembly::BoundTerms;
use crate::coding::{prefix_code_length, union_complexity};
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::scaling::{ChinchillaParams, GrowthLawFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineLossCurve {
    online: Vec<f64>,
    final_model: Vec<f64>,
}

impl OnlineLossCurve {
    /// `online[k]` is the loss of `h_{k−1}` on item `k`; `final_model[k]`
    /// the loss of the final model on the same item.
    pub fn new(online: Vec<f64>, final_model: Vec<f64>) -> Result<Self> {
        if online.len() != final_model.len() {
            return Err(Error::LengthMismatch { left: online.len(), right: final_model.len() });
        }
        for (i, v) in online.iter().chain(&final_model).enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::Precondition {
                    index: i % online.len().max(1),
                    reason: format!("loss {v} must be finite and non-negative"),
                });
            }
        }
        Ok(Self { online, final_model })
    }

    pub fn online(&self) -> &[f64] {
        &self.online
    }

    pub fn final_model(&self) -> &[f64] {
        &self.final_model
    }

    pub fn len(&self) -> usize {
        self.online.len()
    }

    pub fn is_empty(&self) -> bool {
        self.online.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KhEstimate {
    pub kh_nats: f64,
    pub kh_bits: f64,
    /// `max(kh, 0)`: information content cannot be negative.
    pub kh_nats_clamped: f64,
}

impl KhEstimate {
    pub fn from_nats(kh_nats: f64) -> Self {
        Self { kh_nats, kh_bits: kh_nats / LN_2, kh_nats_clamped: kh_nats.max(0.0) }
    }
}

/// `Σ_k (online_k − final_k)`, reported as-is (negative totals allowed).
pub fn prequential_kh(curve: &OnlineLossCurve) -> KhEstimate {
    let total: CompensatedSum = curve.online.iter().zip(&curve.final_model).map(|(o, f)| o - f).collect();
    KhEstimate::from_nats(total.value())
}

/// How to evaluate the closed-form growth of `K(h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AsymptoticForm {
    /// `B·β/(1−β)·D^{1−β}`.
    #[default]
    WithCoefficient,
    /// `β/(1−β)·D^{1−β}`, dropping `B`.
    Literal,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain(format!("β must lie in (0, 1), got {beta}")));
    }
    Ok(())
}

pub fn asymptotic_kh(params: &ChinchillaParams, d: u64, form: AsymptoticForm) -> Result<f64> {
    params.validate()?;
    check_beta(params.exp_beta)?;
    if d == 0 {
        return Err(Error::domain("D must be at least 1"));
    }
    let beta = params.exp_beta;
    let scale = match form {
        AsymptoticForm::WithCoefficient => params.coef_b,
        AsymptoticForm::Literal => 1.0,
    };
    Ok(scale * beta / (1.0 - beta) * (d as f64).powf(1.0 - beta))
}

/// `Σ_{k=1}^D B·k^{−β} − D·B·D^{−β}`: the prequential area under the
/// Chinchilla learning curve at fixed `N`.
pub fn exact_kh_sum(params: &ChinchillaParams, d: u64) -> Result<f64> {
    params.validate()?;
    check_beta(params.exp_beta)?;
    if d == 0 {
        return Err(Error::domain("D must be at least 1"));
    }
    let beta = params.exp_beta;
    let last = (d as f64).powf(1.0 - beta);
    Ok(params.coef_b * (power_sum(beta, d) - last))
}

/// Below this many terms the power sum is accumulated directly.
pub const DIRECT_SUM_LIMIT: u64 = 1_000_000;
const EM_HEAD: u64 = 1000;

/// `Σ_{k=1}^D k^{−β}`.
///
/// Up to [`DIRECT_SUM_LIMIT`] terms the sum is accumulated term by term;
/// beyond that the tail from `k = 1000` uses Euler-Maclaurin with five
/// Bernoulli corrections, whose remainder is below `1e-25` there.
pub fn power_sum(beta: f64, d: u64) -> f64 {
    if d <= DIRECT_SUM_LIMIT {
        return power_sum_direct(beta, d);
    }
    let m = EM_HEAD;
    let head = power_sum_direct(beta, m - 1);
    let (mf, df) = (m as f64, d as f64);
    let integral = (df.powf(1.0 - beta) - mf.powf(1.0 - beta)) / (1.0 - beta);
    let ends = 0.5 * (mf.powf(-beta) + df.powf(-beta));
    // B_{2j}/(2j)!
    const BERNOULLI_OVER_FACTORIAL: [f64; 5] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30_240.0,
        -1.0 / 1_209_600.0,
        1.0 / 47_900_160.0,
    ];
    let mut corrections = CompensatedSum::new();
    for (j, coef) in BERNOULLI_OVER_FACTORIAL.iter().enumerate() {
        let order = 2 * j + 1;
        corrections.add(coef * (power_derivative(beta, order, df) - power_derivative(beta, order, mf)));
    }
    let mut total = CompensatedSum::new();
    for v in [head, integral, ends, corrections.value()] {
        total.add(v);
    }
    total.value()
}

fn power_sum_direct(beta: f64, d: u64) -> f64 {
    (1..=d).map(|k| (k as f64).powf(-beta)).collect::<CompensatedSum>().value()
}

/// `d^m/dx^m x^{−β}`.
fn power_derivative(beta: f64, order: usize, x: f64) -> f64 {
    let falling: f64 = (0..order).map(|i| -beta - i as f64).product();
    falling * x.powf(-beta - order as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Crossover {
    /// Parameter counting is tighter below `n_cross`, prequential above.
    At { n_cross: f64 },
    /// Growth is not sublinear, so the curves never cross.
    None,
}

/// Solve `k·N^p = b·N` for the prequential fit `K(h) ≈ k·N^p` (bits).
pub fn crossover_point(k_bits: f64, exponent: f64, bits_per_param: f64) -> Result<Crossover> {
    if !(k_bits > 0.0) || !(bits_per_param > 0.0) {
        return Err(Error::domain("crossover needs k > 0 and b > 0"));
    }
    if !exponent.is_finite() {
        return Err(Error::NonFinite("crossover exponent".into()));
    }
    if exponent >= 1.0 {
        return Ok(Crossover::None);
    }
    Ok(Crossover::At { n_cross: (k_bits / bits_per_param).powf(1.0 / (1.0 - exponent)) })
}

/// Crossover against a growth fit whose coefficient is in nats.
pub fn crossover_point_nats(k_nats: f64, exponent: f64, bits_per_param: f64) -> Result<Crossover> {
    crossover_point(k_nats / LN_2, exponent, bits_per_param)
}

/// Crossover against a `K(h) ≈ k·N^p` growth fit in bits.
pub fn crossover_from_fit(fit: &GrowthLawFit, bits_per_param: f64) -> Result<Crossover> {
    crossover_point(fit.coefficient, fit.exponent, bits_per_param)
}

/// `(K(h)·ln 2 + ln(|K|/δ)) / D`, with `kh_nats = K(h)·ln 2`.
pub fn prequential_complexity(kh_nats: f64, d: u64, grid_size: usize, delta_fail: f64) -> Result<f64> {
    if !kh_nats.is_finite() {
        return Err(Error::NonFinite("kh_nats".into()));
    }
    union_complexity(kh_nats.max(0.0), d, grid_size, delta_fail)
}

/// As [`prequential_complexity`] with the prefix-free surcharge on `K(h)`.
pub fn prequential_complexity_prefix_free(
    kh_nats: f64,
    d: u64,
    grid_size: usize,
    delta_fail: f64,
) -> Result<f64> {
    let bits = (kh_nats / LN_2).max(1.0);
    union_complexity(prefix_code_length(bits)?.nats, d, grid_size, delta_fail)
}

/// Bound terms at `D` tokens with the complexity taken from the exact
/// prequential sum under `params`.
pub fn prequential_bound_terms(
    params: &ChinchillaParams,
    d: u64,
    sigma: f64,
    vocab: u64,
    grid_size: usize,
    delta_fail: f64,
) -> Result<(f64, BoundTerms)> {
    let kh = exact_kh_sum(params, d)?;
    let c = prequential_complexity(kh, d, grid_size, delta_fail)?;
    Ok((c, BoundTerms::new(c, sigma, vocab, 0.0, 0.0)))
}

/// Add-one smoothed bigram model learned online over a small alphabet.
/// The first token is predicted from a dedicated start context.
#[derive(Debug, Clone)]
pub struct AddOneBigram {
    alphabet: usize,
    counts: Vec<u64>,
    totals: Vec<u64>,
}

impl AddOneBigram {
    pub fn new(alphabet: usize) -> Self {
        let contexts = alphabet + 1;
        Self { alphabet, counts: vec![0; contexts * alphabet], totals: vec![0; contexts] }
    }

    fn context(&self, prev: Option<u8>) -> usize {
        prev.map_or(self.alphabet, usize::from)
    }

    pub fn nll(&self, prev: Option<u8>, next: u8) -> f64 {
        let c = self.context(prev);
        let num = self.counts[c * self.alphabet + next as usize] as f64 + 1.0;
        let den = self.totals[c] as f64 + self.alphabet as f64;
        -(num / den).ln()
    }

    pub fn observe(&mut self, prev: Option<u8>, next: u8) {
        let c = self.context(prev);
        self.counts[c * self.alphabet + next as usize] += 1;
        self.totals[c] += 1;
    }

    /// Online and final-model losses over `tokens`.
    pub fn prequential_curve(alphabet: usize, tokens: &[u8]) -> Result<OnlineLossCurve> {
        if tokens.iter().any(|&t| t as usize >= alphabet) {
            return Err(Error::domain("token outside the alphabet"));
        }
        let mut model = Self::new(alphabet);
        let mut online = Vec::with_capacity(tokens.len());
        let mut prev = None;
        for &t in tokens {
            online.push(model.nll(prev, t));
            model.observe(prev, t);
            prev = Some(t);
        }
        let mut prev = None;
        let final_model = tokens
            .iter()
            .map(|&t| {
                let l = model.nll(prev, t);
                prev = Some(t);
                l
            })
            .collect();
        OnlineLossCurve::new(online, final_model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_b(beta: f64) -> ChinchillaParams {
        ChinchillaParams::new(0.0, 0.0, 1.0, 0.3, beta).unwrap()
    }

    #[test]
    fn kh_examples() {
        let curve = OnlineLossCurve::new(vec![2.0, 1.5, 1.2], vec![1.0; 3]).unwrap();
        let kh = prequential_kh(&curve);
        assert!((kh.kh_nats - 1.7).abs() < 1e-12);
        assert!((kh.kh_bits - 1.7 / LN_2).abs() < 1e-12);
        let same = OnlineLossCurve::new(vec![0.3, 0.9], vec![0.3, 0.9]).unwrap();
        assert_eq!(prequential_kh(&same).kh_nats, 0.0);
        let negative = OnlineLossCurve::new(vec![0.1], vec![0.5]).unwrap();
        let kh = prequential_kh(&negative);
        assert!(kh.kh_nats < 0.0);
        assert_eq!(kh.kh_nats_clamped, 0.0);
        assert!(OnlineLossCurve::new(vec![1.0], vec![]).is_err());
    }

    #[test]
    fn asymptotic_examples() {
        let p = unit_b(0.5);
        assert!((asymptotic_kh(&p, 1_000_000, AsymptoticForm::WithCoefficient).unwrap() - 1000.0).abs() < 1e-9);
        let exact = exact_kh_sum(&p, 1_000_000).unwrap();
        assert!((exact / 1000.0 - 1.0).abs() < 0.002, "{exact}");
        assert_eq!(exact_kh_sum(&p, 1).unwrap(), 0.0);
        assert!(asymptotic_kh(&unit_b(0.5), 0, AsymptoticForm::Literal).is_err());
        let p3 = ChinchillaParams::new(0.0, 0.0, 3.0, 0.3, 0.5).unwrap();
        assert_eq!(
            asymptotic_kh(&p3, 100, AsymptoticForm::WithCoefficient).unwrap(),
            3.0 * asymptotic_kh(&p3, 100, AsymptoticForm::Literal).unwrap()
        );
        let steep = ChinchillaParams::new(0.0, 0.0, 1.0, 0.3, 1.2).unwrap();
        assert!(asymptotic_kh(&steep, 10, AsymptoticForm::Literal).is_err());
    }

    #[test]
    fn euler_maclaurin_matches_direct_sum() {
        for beta in [0.1, 0.37, 0.5, 0.9] {
            let d = DIRECT_SUM_LIMIT;
            let m = EM_HEAD;
            let direct = power_sum_direct(beta, d);
            // force the expansion path at the same D
            let head = power_sum_direct(beta, m - 1);
            let tail_direct = direct - head;
            let em = {
                let (mf, df) = (m as f64, d as f64);
                let integral = (df.powf(1.0 - beta) - mf.powf(1.0 - beta)) / (1.0 - beta);
                let ends = 0.5 * (mf.powf(-beta) + df.powf(-beta));
                let c1 = (power_derivative(beta, 1, df) - power_derivative(beta, 1, mf)) / 12.0;
                let c3 = -(power_derivative(beta, 3, df) - power_derivative(beta, 3, mf)) / 720.0;
                integral + ends + c1 + c3
            };
            assert!((em / tail_direct - 1.0).abs() < 1e-13, "β = {beta}");
            let above = power_sum(beta, d + 1);
            assert!((above - direct - ((d + 1) as f64).powf(-beta)).abs() < 1e-9 * direct);
        }
    }

    #[test]
    fn exact_sum_monotone_and_converging() {
        let p = unit_b(0.37);
        let mut last_kh = 0.0;
        let mut last_err = f64::INFINITY;
        for d in [10u64, 1_000, 100_000, 10_000_000, 1_000_000_000] {
            let exact = exact_kh_sum(&p, d).unwrap();
            let asym = asymptotic_kh(&p, d, AsymptoticForm::WithCoefficient).unwrap();
            let err = (exact / asym - 1.0).abs();
            assert!(exact > last_kh);
            assert!(err < last_err);
            last_kh = exact;
            last_err = err;
        }
    }

    #[test]
    fn crossover_examples() {
        assert_eq!(crossover_point(4.0, 0.0, 4.0).unwrap(), Crossover::At { n_cross: 1.0 });
        assert_eq!(crossover_point(10.0, 1.0, 4.0).unwrap(), Crossover::None);
        let Crossover::At { n_cross } = crossover_point(6e5, 0.5, 4.0).unwrap() else { panic!() };
        assert!((n_cross - 2.25e10).abs() < 1.0);
        assert!((1e10..1e11).contains(&n_cross));
        let Crossover::At { n_cross } = crossover_point_nats(6e5, 0.5, 4.0).unwrap() else { panic!() };
        assert!((1e10..1e11).contains(&n_cross));
    }

    #[test]
    fn complexity_examples() {
        let base = prequential_complexity(0.0, 1000, 1000, 0.01).unwrap();
        assert!((base - (1e5f64).ln() / 1000.0).abs() < 1e-15);
        let p = unit_b(0.37);
        let kh1 = exact_kh_sum(&p, 1_000_000).unwrap();
        let kh2 = exact_kh_sum(&p, 2_000_000).unwrap();
        let ratio = (kh2 / 2e6) / (kh1 / 1e6);
        assert!((ratio / 2f64.powf(-0.37) - 1.0).abs() < 0.01);
        assert!(prequential_complexity_prefix_free(kh1, 1_000_000, 1000, 0.01).unwrap()
            > prequential_complexity(kh1, 1_000_000, 1000, 0.01).unwrap());
    }

    #[test]
    fn kh_invariant_to_constant_shift() {
        let online = vec![2.0, 1.7, 1.1, 0.9];
        let fin = vec![1.0, 0.8, 0.9, 0.7];
        let a = prequential_kh(&OnlineLossCurve::new(online.clone(), fin.clone()).unwrap());
        let shift = |v: &[f64]| v.iter().map(|x| x + 0.75).collect::<Vec<_>>();
        let b = prequential_kh(&OnlineLossCurve::new(shift(&online), shift(&fin)).unwrap());
        assert!((a.kh_nats - b.kh_nats).abs() < 1e-12);
    }

    #[test]
    fn bigram_codelengths_match_closed_form() {
        let tokens: Vec<u8> = (0..500u32).map(|i| ((i * 7 + i / 3) % 5) as u8).collect();
        let curve = AddOneBigram::prequential_curve(5, &tokens).unwrap();
        // sequential add-one probability of counts n_ab in context a:
        // Π_b n_ab! · (V−1)! / (n_a + V − 1)!
        let mut counts = vec![[0u64; 5]; 6];
        let mut prev = 5usize;
        for &t in &tokens {
            counts[prev][t as usize] += 1;
            prev = t as usize;
        }
        let ln_fact = |n: u64| (1..=n).map(|i| (i as f64).ln()).sum::<f64>();
        let mut online_total = 0.0;
        let mut final_total = 0.0;
        for row in &counts {
            let n_a: u64 = row.iter().sum();
            online_total += ln_fact(n_a + 4) - ln_fact(4) - row.iter().map(|&c| ln_fact(c)).sum::<f64>();
            for &c in row {
                if c > 0 {
                    final_total -= c as f64 * ((c as f64 + 1.0) / (n_a as f64 + 5.0)).ln();
                }
            }
        }
        let kh = prequential_kh(&curve);
        assert!((curve.online().iter().sum::<f64>() - online_total).abs() < 1e-8);
        assert!((kh.kh_nats - (online_total - final_total)).abs() < 1e-8);
        assert!(kh.kh_nats > 0.0);
    }
}
