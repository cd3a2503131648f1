//! Disagreement metrics and the theoretical constants and bounds they are
//! compared against.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::FeatureMap;
use crate::filtering::{local_transition_model, FilterError, Marginalization, PolicySupports};
use crate::model::{Belief, DecPomdpModel};
use crate::network::{min_degree, mixing_rate, CombinationMatrix};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("matrix is not column-stochastic: {0}")]
    NotStochastic(String),
    #[error("kappa = {0} is not < 1; the bounds do not apply")]
    NotContractive(f64),
    #[error("lambda2 = {0} is not < 1; the network does not mix")]
    NoMixing(f64),
    #[error("gamma must be > 0 for this bound")]
    ZeroGamma,
    #[error("need at least one value")]
    Empty,
    #[error(
        "exact enumeration of {size} joint actions exceeds the cap {cap}; supply tau in the config"
    )]
    EnumerationCap { size: String, cap: u64 },
    #[error("local transition models for hop sets {n} and {m} of agent {agent} differ in support")]
    SupportMismatch { agent: usize, n: usize, m: usize },
    #[error(transparent)]
    Filter(#[from] FilterError),
}

/// KL(p‖q); `support_violation` is set (and `value` is +∞) when q(s) = 0 < p(s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlDivergence {
    pub value: f64,
    pub support_violation: bool,
}

impl KlDivergence {
    pub fn finite(&self) -> Option<f64> {
        (!self.support_violation).then_some(self.value)
    }
}

pub fn kl_divergence(p: &Belief, q: &Belief) -> KlDivergence {
    let mut total = 0.0;
    for (&ps, &qs) in p.as_slice().iter().zip(q.as_slice()) {
        if ps <= 0.0 {
            continue;
        }
        if qs <= 0.0 {
            return KlDivergence {
                value: f64::INFINITY,
                support_violation: true,
            };
        }
        total += ps * (ps / qs).ln();
    }
    KlDivergence {
        value: total.max(0.0),
        support_violation: false,
    }
}

const STOCH_TOL: f64 = 1e-9;

/// κ = max over column pairs of half their ℓ₁ distance. `columns[s′]` is the
/// distribution 𝕋(· | s′).
pub fn dobrushin_coefficient(columns: &[Vec<f64>]) -> Result<f64, AnalysisError> {
    let n = columns.len();
    for (sp, col) in columns.iter().enumerate() {
        let sum: f64 = col.iter().sum();
        if col.len() != n || col.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > STOCH_TOL {
            return Err(AnalysisError::NotStochastic(format!("column {sp}")));
        }
    }
    let mut kappa: f64 = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            let tv: f64 = columns[a]
                .iter()
                .zip(&columns[b])
                .map(|(x, y)| (x - y).abs())
                .sum();
            kappa = kappa.max(0.5 * tv);
        }
    }
    Ok(kappa.min(1.0))
}

/// κ(𝕋): the largest Dobrushin coefficient over all joint actions.
pub fn model_dobrushin(model: &DecPomdpModel) -> Result<f64, AnalysisError> {
    let kernel = model.transition();
    kernel
        .action_classes()
        .iter()
        .map(|joint| dobrushin_coefficient(&kernel.matrix(joint)))
        .try_fold(0.0f64, |m, k| Ok(m.max(k?)))
}

/// B = max |log L_k(ξ|s)| over positive entries.
pub fn estimate_b(model: &DecPomdpModel) -> f64 {
    model
        .agents()
        .iter()
        .flat_map(|a| a.likelihood.rows())
        .flatten()
        .filter(|p| *p > 0.0)
        .map(|p| p.ln().abs())
        .fold(0.0, f64::max)
}

/// τ: the largest |log| ratio between the local transition models built from
/// consecutive hop sets, over agents, hop radii, previous/next states and
/// every action assignment of the larger hop set.
pub fn estimate_tau(
    model: &DecPomdpModel,
    network: &CombinationMatrix,
    enumeration_cap: u64,
) -> Result<f64, AnalysisError> {
    let k_agents = model.num_agents();
    if (0..k_agents).all(|k| network.hop_sets(k).len() <= 1) {
        // every agent already knows every action
        return Ok(0.0);
    }
    let counts = model.action_counts();
    let joint_size = counts
        .iter()
        .try_fold(1u64, |acc, &c| acc.checked_mul(c as u64));
    match joint_size {
        Some(size) if size <= enumeration_cap => {}
        other => {
            return Err(AnalysisError::EnumerationCap {
                size: other.map_or_else(|| "more than 2^64".into(), |s| s.to_string()),
                cap: enumeration_cap,
            })
        }
    }
    let supports = PolicySupports::new(model);
    let mode = Marginalization::Exact { enumeration_cap };
    let n_states = model.num_states();
    // the exact mode never touches the stream
    let mut rng = crate::rng::Streams::new(0).env(0, crate::rng::Phase::Marginalize);
    let mut tau: f64 = 0.0;
    for k in 0..k_agents {
        let hops = network.hop_sets(k);
        for n in 0..hops.len().saturating_sub(1) {
            let (inner, outer) = (&hops[n], &hops[n + 1]);
            let mut assignment = vec![0usize; outer.len()];
            loop {
                let mut known_outer = vec![None; k_agents];
                let mut known_inner = vec![None; k_agents];
                for (&agent, &a) in outer.iter().zip(&assignment) {
                    known_outer[agent] = Some(a);
                    if inner.contains(&agent) {
                        known_inner[agent] = Some(a);
                    }
                }
                let t_in = local_transition_model(model, &supports, &known_inner, mode, &mut rng)?;
                let t_out = local_transition_model(model, &supports, &known_outer, mode, &mut rng)?;
                for sp in 0..n_states {
                    for (x, y) in t_in.column(sp).iter().zip(t_out.column(sp)) {
                        match (*x > 0.0, *y > 0.0) {
                            (true, true) => tau = tau.max((x / y).ln().abs()),
                            (false, false) => {}
                            _ => {
                                return Err(AnalysisError::SupportMismatch {
                                    agent: k,
                                    n: n + 1,
                                    m: n + 2,
                                })
                            }
                        }
                    }
                }
                // odometer over the outer set's actions
                let mut pos = 0;
                while pos < outer.len() {
                    assignment[pos] += 1;
                    if assignment[pos] < counts[outer[pos]] {
                        break;
                    }
                    assignment[pos] = 0;
                    pos += 1;
                }
                if pos == outer.len() {
                    break;
                }
            }
        }
    }
    Ok(tau)
}

/// Inputs to the bound formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    #[serde(rename = "B")]
    pub b: f64,
    pub tau: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub lambda2: f64,
    pub d_min: usize,
    pub b_phi: f64,
    pub l_phi: f64,
    pub r_max: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub rho: f64,
    pub beta: f64,
    #[serde(rename = "K")]
    pub k: usize,
}

/// λ = max{|1 − K/β|, λ₂}.
pub fn lambda_of(k: usize, beta: f64, lambda2: f64) -> f64 {
    (1.0 - k as f64 / beta).abs().max(lambda2)
}

/// Where B and τ came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstantSource {
    Enumerated,
    Configured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GatheredConstants {
    pub constants: TheoryConstants,
    pub b_source: ConstantSource,
    pub tau_source: ConstantSource,
}

/// Learner hyperparameters needed by the bounds.
#[derive(Debug, Clone, Copy)]
pub struct BoundInputs<'a> {
    pub alpha: f64,
    pub rho: f64,
    pub beta: f64,
    pub features: &'a FeatureMap,
    pub tau: Option<f64>,
    pub b: Option<f64>,
    pub enumeration_cap: u64,
}

/// Compute every constant from the model and network, taking τ and B from
/// `inputs` when supplied.
pub fn gather_constants(
    model: &DecPomdpModel,
    network: &CombinationMatrix,
    inputs: &BoundInputs<'_>,
) -> Result<GatheredConstants, AnalysisError> {
    let (b, b_source) = match inputs.b {
        Some(b) => (b, ConstantSource::Configured),
        None => (estimate_b(model), ConstantSource::Enumerated),
    };
    let (tau, tau_source) = match inputs.tau {
        Some(t) => (t, ConstantSource::Configured),
        None => (
            estimate_tau(model, network, inputs.enumeration_cap)?,
            ConstantSource::Enumerated,
        ),
    };
    let lambda2 = mixing_rate(network);
    let k = model.num_agents();
    Ok(GatheredConstants {
        constants: TheoryConstants {
            b,
            tau,
            kappa: model_dobrushin(model)?,
            lambda: lambda_of(k, inputs.beta, lambda2),
            lambda2,
            d_min: min_degree(network),
            b_phi: inputs.features.bound(),
            l_phi: inputs.features.lipschitz(),
            r_max: model.r_max(),
            gamma: model.gamma(),
            alpha: inputs.alpha,
            rho: inputs.rho,
            beta: inputs.beta,
            k,
        },
        b_source,
        tau_source,
    })
}

fn check_kappa(c: &TheoryConstants) -> Result<(), AnalysisError> {
    if c.kappa >= 1.0 || c.kappa.is_nan() {
        Err(AnalysisError::NotContractive(c.kappa))
    } else {
        Ok(())
    }
}

fn exponents(c: &TheoryConstants) -> (f64, f64) {
    let belief = 2.0 * (c.k as f64).sqrt() * c.beta * c.lambda * c.b;
    let hops = c.k.saturating_sub(c.d_min) as f64 * c.tau;
    let denom = 1.0 - c.kappa;
    ((belief + hops) / denom, (c.kappa * belief + hops) / denom)
}

/// (J, J̃) bounds on the asymptotic KL disagreement of posteriors and priors.
pub fn theorem1_bounds(c: &TheoryConstants) -> Result<(f64, f64), AnalysisError> {
    check_kappa(c)?;
    Ok(exponents(c))
}

/// (B_TV, B̃_TV) total-variation bounds.
pub fn btv_constants(c: &TheoryConstants) -> Result<(f64, f64), AnalysisError> {
    check_kappa(c)?;
    let (j, jt) = exponents(c);
    let tv = |x: f64| 2.0 * (1.0 - (-x).exp()).max(0.0).sqrt();
    Ok((tv(j), tv(jt)))
}

/// ε = R_max B_φ (2 B_TV (1+γ) / (0.08γ) + 1).
pub fn epsilon(c: &TheoryConstants, b_tv: f64) -> Result<f64, AnalysisError> {
    if c.gamma <= 0.0 {
        return Err(AnalysisError::ZeroGamma);
    }
    Ok(c.r_max * c.b_phi * (2.0 * b_tv * (1.0 + c.gamma) / (0.08 * c.gamma) + 1.0))
}

/// ε′ = 2B_φ(1+γ)/(0.08γ) + L_φ.
pub fn epsilon_prime(c: &TheoryConstants) -> Result<f64, AnalysisError> {
    if c.gamma <= 0.0 {
        return Err(AnalysisError::ZeroGamma);
    }
    Ok(2.0 * c.b_phi * (1.0 + c.gamma) / (0.08 * c.gamma) + c.l_phi)
}

/// Leading term αλ₂ε/(1−λ₂) of the network agreement bound; the O(α²)
/// remainder is not included.
pub fn theorem2_bound(c: &TheoryConstants) -> Result<f64, AnalysisError> {
    if c.lambda2 >= 1.0 {
        return Err(AnalysisError::NoMixing(c.lambda2));
    }
    let (b_tv, _) = btv_constants(c)?;
    Ok(c.alpha * c.lambda2 * epsilon(c, b_tv)? / (1.0 - c.lambda2))
}

/// B_TV R_max ε′ / (0.08 γ B_φ L_φ).
///
/// This is the form given with the theorem. The proof carries a constant
/// ε★ = R_max B_TV (2B_φ(1+γ)/(0.08γ) + L_φ) that folds B_TV and R_max in
/// differently; it is not used here.
pub fn theorem3_bound(c: &TheoryConstants) -> Result<f64, AnalysisError> {
    let (b_tv, _) = btv_constants(c)?;
    Ok(b_tv * c.r_max * epsilon_prime(c)? / (0.08 * c.gamma * c.b_phi * c.l_phi))
}

/// 2 B_φ L_φ B_TV (1+γ).
pub fn lemma1_bound(c: &TheoryConstants) -> Result<f64, AnalysisError> {
    let (b_tv, _) = btv_constants(c)?;
    Ok(2.0 * c.b_phi * c.l_phi * b_tv * (1.0 + c.gamma))
}

/// √K R_max / (0.08 γ L_φ): the stacked parameter norm bound when
/// ρ ≥ 0.75γB_φL_φ.
pub fn parameter_norm_bound(c: &TheoryConstants) -> Result<f64, AnalysisError> {
    if c.gamma <= 0.0 {
        return Err(AnalysisError::ZeroGamma);
    }
    Ok((c.k as f64).sqrt() * c.r_max / (0.08 * c.gamma * c.l_phi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub constants: TheoryConstants,
    pub j_bound: f64,
    pub jtilde_bound: f64,
    pub b_tv: f64,
    pub b_tv_tilde: f64,
    pub epsilon: f64,
    pub network_agreement_bound: f64,
    pub epsilon_prime: f64,
    pub baseline_gap_bound: f64,
    pub lemma1_gap_bound: f64,
    pub parameter_norm_bound: f64,
    /// False when ρ < 0.75γB_φL_φ, where the parameter guarantees lapse.
    pub rho_in_regime: bool,
    /// The agreement bound omits an O(α²) term.
    pub agreement_bound_is_asymptotic: bool,
}

impl BoundReport {
    pub fn compute(c: &TheoryConstants) -> Result<Self, AnalysisError> {
        let (j_bound, jtilde_bound) = theorem1_bounds(c)?;
        let (b_tv, b_tv_tilde) = btv_constants(c)?;
        Ok(Self {
            constants: *c,
            j_bound,
            jtilde_bound,
            b_tv,
            b_tv_tilde,
            epsilon: epsilon(c, b_tv)?,
            network_agreement_bound: theorem2_bound(c)?,
            epsilon_prime: epsilon_prime(c)?,
            baseline_gap_bound: theorem3_bound(c)?,
            lemma1_gap_bound: lemma1_bound(c)?,
            parameter_norm_bound: parameter_norm_bound(c)?,
            rho_in_regime: c.rho >= 0.75 * c.gamma * c.b_phi * c.l_phi,
            agreement_bound_is_asymptotic: true,
        })
    }
}

/// ‖H_k − H★‖₂ with H = φ(μ)φ(μ)ᵀ − γφ(μ)φ(η′)ᵀ.
///
/// Each H is the rank-one a·uᵀ with a = φ(μ), u = a − γφ(η′), so the
/// difference (a_k − a)u_kᵀ + a(u_k − u)ᵀ has rank at most two and its
/// spectral norm comes from a 2×2 problem.
pub fn lemma1_gap(
    mu_k: &Belief,
    eta_k_next: &Belief,
    mu: &Belief,
    eta_next: &Belief,
    features: &FeatureMap,
    gamma: f64,
) -> f64 {
    let a_k = features.apply(mu_k);
    let a = features.apply(mu);
    let u_k: Vec<f64> = a_k
        .iter()
        .zip(features.apply(eta_k_next))
        .map(|(x, y)| x - gamma * y)
        .collect();
    let u: Vec<f64> = a.iter().zip(features.apply(eta_next)).map(|(x, y)| x - gamma * y).collect();
    let m = a.len();
    let x = DMatrix::from_fn(m, 2, |i, j| if j == 0 { a_k[i] - a[i] } else { a[i] });
    let y = DMatrix::from_fn(m, 2, |i, j| if j == 0 { u_k[i] } else { u_k[i] - u[i] });
    // D = X Yᵀ = Q R Yᵀ, so ‖D‖ = σ_max(R Yᵀ)
    let r = x.qr().r();
    let b = r * y.transpose();
    let gram = &b * b.transpose();
    SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(*v))
        .sqrt()
}

/// (1/K) Σ_k ‖w_k − w_c‖².
pub fn agreement_error(ws: &[&[f64]]) -> Result<f64, AnalysisError> {
    if ws.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let c = crate::evaluation::centroid(ws.iter().copied());
    let total: f64 = ws
        .iter()
        .map(|w| w.iter().zip(&c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .sum();
    Ok(total / ws.len() as f64)
}

/// Mean of δ².
pub fn sbe(deltas: &[f64]) -> f64 {
    if deltas.is_empty() {
        return f64::NAN;
    }
    deltas.iter().map(|d| d * d).sum::<f64>() / deltas.len() as f64
}

pub const DEFAULT_SBE_WINDOW: usize = 20;

/// Trailing running mean: entry i averages values[max(0, i+1−window) ..= i].
pub fn windowed_sbe(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in 0..values.len() {
        acc += values[i];
        if i >= window {
            acc -= values[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(v: &[f64]) -> Belief {
        Belief::new(v.to_vec()).unwrap()
    }

    fn consts() -> TheoryConstants {
        TheoryConstants {
            b: 1.0,
            tau: 0.1,
            kappa: 0.5,
            lambda: 0.5,
            lambda2: 0.5,
            d_min: 2,
            b_phi: 1.0,
            l_phi: 1.0,
            r_max: 1.0,
            gamma: 0.9,
            alpha: 0.1,
            rho: 0.7,
            beta: 4.0,
            k: 4,
        }
    }

    #[test]
    fn kl_examples() {
        let p = b(&[0.3, 0.7]);
        assert_eq!(kl_divergence(&p, &p).value, 0.0);
        let kl = kl_divergence(&b(&[1.0, 0.0]), &b(&[0.5, 0.5]));
        assert!((kl.value - 2f64.ln()).abs() < 1e-15);
        let kl = kl_divergence(&b(&[0.5, 0.5]), &b(&[1.0, 0.0]));
        assert!(kl.support_violation && kl.value.is_infinite() && kl.finite().is_none());
    }

    #[test]
    fn dobrushin_examples() {
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(dobrushin_coefficient(&id).unwrap(), 1.0);
        let same = vec![vec![0.2, 0.8]; 3].into_iter().map(|mut c| { c.push(0.0); c }).collect::<Vec<_>>();
        assert_eq!(dobrushin_coefficient(&same).unwrap(), 0.0);
        let k = dobrushin_coefficient(&[vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        assert!((k - 0.6).abs() < 1e-15);
        assert!(dobrushin_coefficient(&[vec![0.9, 0.2], vec![0.3, 0.7]]).is_err());
    }

    #[test]
    fn theorem1_examples() {
        let c = consts();
        let (j, _) = theorem1_bounds(&c).unwrap();
        assert!((j - 16.4).abs() < 1e-12);
        let zero = TheoryConstants { lambda2: 0.0, lambda: lambda_of(4, 4.0, 0.0), d_min: 4, ..c };
        assert_eq!(theorem1_bounds(&zero).unwrap(), (0.0, 0.0));
        assert_eq!(btv_constants(&zero).unwrap(), (0.0, 0.0));
        let flat = TheoryConstants { tau: 0.0, kappa: 0.0, ..c };
        let (j, jt) = theorem1_bounds(&flat).unwrap();
        assert!((j - 2.0 * 2.0 * 4.0 * 0.5).abs() < 1e-12 && jt == 0.0);
        assert!(theorem1_bounds(&TheoryConstants { kappa: 1.0, ..c }).is_err());
    }

    #[test]
    fn btv_limits() {
        // exponent ln 2 in both: kappa = 0, tau chosen so belief term is zero
        let c = TheoryConstants {
            kappa: 0.0,
            lambda: 0.0,
            lambda2: 0.0,
            tau: 2f64.ln() / 2.0,
            ..consts()
        };
        let (tv, tvt) = btv_constants(&c).unwrap();
        assert!((tv - 2f64.sqrt()).abs() < 1e-12 && (tvt - 2f64.sqrt()).abs() < 1e-12);
        let huge = TheoryConstants { b: 1e6, ..consts() };
        let (tv, tvt) = btv_constants(&huge).unwrap();
        assert!((tv - 2.0).abs() < 1e-12 && (tvt - 2.0).abs() < 1e-12);
    }

    #[test]
    fn theorem2_and_3_examples() {
        let zero_tv = TheoryConstants {
            lambda: lambda_of(4, 4.0, 0.5),
            d_min: 4,
            b: 0.0,
            ..consts()
        };
        assert!((theorem2_bound(&zero_tv).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(theorem2_bound(&TheoryConstants { lambda2: 0.0, ..zero_tv }).unwrap(), 0.0);
        assert!(theorem2_bound(&TheoryConstants { lambda2: 1.0, ..zero_tv }).is_err());
        assert_eq!(theorem3_bound(&zero_tv).unwrap(), 0.0);

        let c = TheoryConstants { gamma: 1.0, ..consts() };
        let (b_tv, _) = btv_constants(&c).unwrap();
        assert!((theorem3_bound(&c).unwrap() - 637.5 * b_tv).abs() < 1e-9);
        let c2 = TheoryConstants { r_max: 2.0, ..c };
        assert!((theorem3_bound(&c2).unwrap() - 2.0 * theorem3_bound(&c).unwrap()).abs() < 1e-9);
        assert!(theorem3_bound(&TheoryConstants { gamma: 0.0, ..c }).is_err());
    }

    #[test]
    fn lemma1_gap_reductions() {
        let mu = b(&[0.2, 0.3, 0.5]);
        let eta = b(&[0.1, 0.6, 0.3]);
        let f = FeatureMap::Identity;
        assert!(lemma1_gap(&mu, &eta, &mu, &eta, &f, 0.9) < 1e-15);
        // gamma = 0: ‖μ_kμ_kᵀ − μμᵀ‖
        let mk = b(&[0.6, 0.3, 0.1]);
        let d = DMatrix::from_fn(3, 3, |i, j| mk[i] * mk[j] - mu[i] * mu[j]);
        let expect = d.svd(false, false).singular_values.max();
        assert!((lemma1_gap(&mk, &eta, &mu, &eta, &f, 0.0) - expect).abs() < 1e-14);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(agreement_error(&[&[1.0], &[-1.0]]).unwrap(), 1.0);
        assert_eq!(agreement_error(&[&[0.5, 2.0], &[0.5, 2.0]]).unwrap(), 0.0);
        assert_eq!(sbe(&[1.0, -1.0]), 1.0);
        assert_eq!(sbe(&[0.0, 0.0]), 0.0);
        assert_eq!(windowed_sbe(&[1.0, 3.0, 5.0], 2), vec![1.0, 2.0, 4.0]);
    }
}
