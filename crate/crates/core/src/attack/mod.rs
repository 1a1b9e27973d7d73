//! Latent-space adversarial attacks with string-domain verification.
//!
//! Both attacks perturb the encoded bag state and, after every candidate
//! perturbation, decode the perturbed latents to strings, re-encode those
//! strings, and re-classify: only a misclassification of the re-encoded bag
//! counts as success, because encoder and decoder are not exact inverses.

use crate::codec::{self, AutoencoderModel, CodecError};
use crate::metrics;
use crate::mil::{classify_forward, register_classifier, Bag, ClassifierModel, Label, MilError};
use crate::tensor::{Tensor, Trace};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Mil(#[from] MilError),
    #[error("attack config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackMethod {
    ModifiedPgd,
    ModifiedFgsm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    L2,
    Linf,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub method: AttackMethod,
    /// PGD step size along the normalized gradient.
    pub alpha: f64,
    /// Perturbation budget (ball radius). For the FGSM sweep this is the
    /// initial epsilon; the sweep starts at one step, not zero.
    pub eps: f64,
    /// FGSM sweep upper bound.
    pub eps_max: f64,
    /// FGSM sweep increment.
    pub delta_eps: f64,
    /// PGD iteration cap T.
    pub max_iters: usize,
    pub projection: Projection,
    /// Guard added to the gradient norm before dividing.
    pub gamma: f64,
}

impl AttackConfig {
    pub fn pgd(alpha: f64, eps: f64, projection: Projection) -> Self {
        AttackConfig {
            method: AttackMethod::ModifiedPgd,
            alpha,
            eps,
            eps_max: eps,
            delta_eps: eps,
            max_iters: 50,
            projection,
            gamma: 1e-12,
        }
    }

    pub fn fgsm(delta_eps: f64, eps_max: f64) -> Self {
        AttackConfig {
            method: AttackMethod::ModifiedFgsm,
            alpha: 0.0,
            eps: delta_eps,
            eps_max,
            delta_eps,
            max_iters: 1,
            projection: Projection::None,
            gamma: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        let bad = |msg: &str| Err(AttackError::BadConfig(msg.to_string()));
        match self.method {
            AttackMethod::ModifiedPgd => {
                if self.alpha <= 0.0 {
                    return bad("pgd requires alpha > 0");
                }
                if self.eps <= 0.0 {
                    return bad("pgd requires eps > 0");
                }
                if self.max_iters < 1 {
                    return bad("pgd requires at least one iteration");
                }
            }
            AttackMethod::ModifiedFgsm => {
                if self.delta_eps <= 0.0 {
                    return bad("fgsm requires delta_eps > 0");
                }
                if self.eps <= 0.0 || self.eps > self.eps_max {
                    return bad("fgsm requires 0 < eps <= eps_max");
                }
            }
        }
        Ok(())
    }

    /// Row label used in summary tables.
    pub fn label(&self) -> String {
        match self.method {
            AttackMethod::ModifiedPgd => {
                let proj = match self.projection {
                    Projection::L2 => "l2",
                    Projection::Linf => "linf",
                    Projection::None => "none",
                };
                format!("PGD(alpha: {:.2}, eps: {:.2}, projection: {})", self.alpha, self.eps, proj)
            }
            AttackMethod::ModifiedFgsm => {
                format!("FGSM(delta: {:.2}, max_eps: {:.2})", self.delta_eps, self.eps_max)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackOutcome {
    /// The clean bag was already misclassified; input returned unmodified.
    AlreadyMisclassified,
    Success,
    Failure,
}

#[derive(Debug, Clone)]
pub struct AttackResult {
    pub outcome: AttackOutcome,
    /// Success: decoded adversarial strings (bag order preserved, an instance
    /// may decode empty). AlreadyMisclassified: the byte-identical inputs.
    pub adversarial_paths: Option<Vec<Vec<u8>>>,
    pub iterations_used: usize,
    pub eps_used: f64,
    /// Final perturbation (k x d) on success.
    pub perturbation: Option<Tensor>,
    /// Attack-objective loss per gradient evaluation.
    pub loss_history: Vec<f64>,
    /// Worst overrun of the projection ball across all iterates.
    pub max_ball_violation: f64,
}

/// Clamp every entry into [-eps, +eps]. Idempotent.
pub fn project_linf(delta: &mut Tensor, eps: f64) {
    assert!(eps > 0.0, "project_linf: eps must be positive");
    for v in delta.data_mut() {
        *v = v.clamp(-eps, eps);
    }
}

/// Scale each instance row back onto the L2 ball of radius eps. Idempotent.
pub fn project_l2(delta: &mut Tensor, eps: f64) {
    assert!(eps > 0.0, "project_l2: eps must be positive");
    let cols = delta.cols();
    for row in delta.data_mut().chunks_exact_mut(cols) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > eps {
            let scale = eps / norm;
            for v in row {
                *v *= scale;
            }
        }
    }
}

fn project(delta: &mut Tensor, projection: Projection, eps: f64) {
    match projection {
        Projection::Linf => project_linf(delta, eps),
        Projection::L2 => project_l2(delta, eps),
        Projection::None => {}
    }
}

/// How far outside the configured ball the perturbation sits (0 when inside).
fn ball_violation(delta: &Tensor, projection: Projection, eps: f64) -> f64 {
    match projection {
        Projection::Linf => delta
            .data()
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs() - eps)),
        Projection::L2 => {
            let cols = delta.cols();
            delta
                .data()
                .chunks_exact(cols)
                .fold(0.0f64, |acc, row| {
                    acc.max(row.iter().map(|v| v * v).sum::<f64>().sqrt() - eps)
                })
        }
        Projection::None => 0.0,
    }
}

/// Attack objective loss and its gradient with respect to the latent state
/// (the gradient the attacks consume).
pub fn loss_and_state_grad(
    clf: &ClassifierModel,
    state: &Tensor,
    label: Label,
) -> (f64, Tensor) {
    let mut t = Trace::new();
    let vars = register_classifier(&mut t, clf);
    let e = t.input(state.rows(), state.cols(), state.data().to_vec(), true);
    let logits = classify_forward(&mut t, &vars, &clf.hp, e);
    let loss = t.cross_entropy_rows(logits, &[label.index()], &[1.0]);
    let loss_val = t.scalar(loss);
    t.backward(loss);
    let g = t.grad(e).expect("state requires grad").to_vec();
    (loss_val, Tensor::from_vec(state.rows(), state.cols(), g))
}

fn classify_state(clf: &ClassifierModel, state: &Tensor) -> Result<Label, MilError> {
    let bag = crate::mil::LatentBag { matrix: state.clone() };
    crate::mil::classify(clf, &bag).map(|(_, y)| y)
}

/// Encode decoded candidate strings for verification, dropping instances
/// that decoded empty (an instance deleted by the decoder). Returns None if
/// nothing survives.
pub(crate) fn reencode_dropping_empty(
    codec_model: &AutoencoderModel,
    paths: &[Vec<u8>],
) -> Result<Option<Tensor>, CodecError> {
    let non_empty: Vec<&[u8]> = paths.iter().filter(|p| !p.is_empty()).map(|p| p.as_slice()).collect();
    if non_empty.is_empty() {
        return Ok(None);
    }
    let latents = codec::encode_all(codec_model, &non_empty)?;
    let d = latents[0].dim();
    let mut data = Vec::with_capacity(non_empty.len() * d);
    for z in &latents {
        data.extend_from_slice(&z.values);
    }
    Ok(Some(Tensor::from_vec(non_empty.len(), d, data)))
}

fn decode_caps(model: &AutoencoderModel, paths: &[&[u8]]) -> Vec<usize> {
    paths
        .iter()
        .map(|p| (2 * model.padded_len(p.len())).min(model.hp.max_len))
        .collect()
}

fn encode_state(codec_model: &AutoencoderModel, paths: &[&[u8]]) -> Result<Tensor, CodecError> {
    let latents = codec::encode_all(codec_model, paths)?;
    let d = latents[0].dim();
    let mut data = Vec::with_capacity(paths.len() * d);
    for z in &latents {
        data.extend_from_slice(&z.values);
    }
    Ok(Tensor::from_vec(paths.len(), d, data))
}

/// Iterative attack: normalized-gradient ascent steps on the joint (k x d)
/// perturbation, projection after every step, decode + re-encode +
/// re-classify verification inside the loop, first verified misclassification
/// wins. Failure after `max_iters` verifications is a normal outcome.
pub fn pgd_attack(
    clf: &ClassifierModel,
    codec_model: &AutoencoderModel,
    bag: &Bag,
    config: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    let paths = bag.path_bytes();
    let state = encode_state(codec_model, &paths)?;
    pgd_attack_from_state(clf, codec_model, &paths, bag.label, &state, config)
}

pub(crate) fn pgd_attack_from_state(
    clf: &ClassifierModel,
    codec_model: &AutoencoderModel,
    paths: &[&[u8]],
    label: Label,
    state: &Tensor,
    config: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    config.validate()?;
    if config.method != AttackMethod::ModifiedPgd {
        return Err(AttackError::BadConfig("pgd_attack called with a non-pgd config".into()));
    }
    if classify_state(clf, state)? != label {
        return Ok(AttackResult {
            outcome: AttackOutcome::AlreadyMisclassified,
            adversarial_paths: Some(paths.iter().map(|p| p.to_vec()).collect()),
            iterations_used: 0,
            eps_used: 0.0,
            perturbation: None,
            loss_history: Vec::new(),
            max_ball_violation: 0.0,
        });
    }

    let caps = decode_caps(codec_model, paths);
    let mut delta = Tensor::zeros(state.rows(), state.cols());
    let mut loss_history = Vec::with_capacity(config.max_iters);
    let mut max_violation = 0.0f64;
    for iter in 1..=config.max_iters {
        let perturbed = state.add(&delta);
        let (loss, grad) = loss_and_state_grad(clf, &perturbed, label);
        loss_history.push(loss);
        let gnorm = grad.l2_norm();
        let scale = config.alpha / (gnorm + config.gamma);
        for (d, g) in delta.data_mut().iter_mut().zip(grad.data()) {
            *d += scale * g;
        }
        project(&mut delta, config.projection, config.eps);
        max_violation = max_violation.max(ball_violation(&delta, config.projection, config.eps));

        let candidate = state.add(&delta);
        let adv_paths = codec::decode_rows(codec_model, &candidate, &caps)?;
        if let Some(adv_state) = reencode_dropping_empty(codec_model, &adv_paths)? {
            if classify_state(clf, &adv_state)? != label {
                return Ok(AttackResult {
                    outcome: AttackOutcome::Success,
                    adversarial_paths: Some(adv_paths),
                    iterations_used: iter,
                    eps_used: config.eps,
                    perturbation: Some(delta),
                    loss_history,
                    max_ball_violation: max_violation,
                });
            }
        }
    }
    Ok(AttackResult {
        outcome: AttackOutcome::Failure,
        adversarial_paths: None,
        iterations_used: config.max_iters,
        eps_used: config.eps,
        perturbation: None,
        loss_history,
        max_ball_violation: max_violation,
    })
}

/// One-shot sign attack with an epsilon sweep: the gradient is computed once
/// at the clean state, then eps grows from delta_eps to eps_max, decoding and
/// verifying at each size.
pub fn fgsm_attack(
    clf: &ClassifierModel,
    codec_model: &AutoencoderModel,
    bag: &Bag,
    config: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    let paths = bag.path_bytes();
    let state = encode_state(codec_model, &paths)?;
    fgsm_attack_from_state(clf, codec_model, &paths, bag.label, &state, config)
}

pub(crate) fn fgsm_attack_from_state(
    clf: &ClassifierModel,
    codec_model: &AutoencoderModel,
    paths: &[&[u8]],
    label: Label,
    state: &Tensor,
    config: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    config.validate()?;
    if config.method != AttackMethod::ModifiedFgsm {
        return Err(AttackError::BadConfig("fgsm_attack called with a non-fgsm config".into()));
    }
    if classify_state(clf, state)? != label {
        return Ok(AttackResult {
            outcome: AttackOutcome::AlreadyMisclassified,
            adversarial_paths: Some(paths.iter().map(|p| p.to_vec()).collect()),
            iterations_used: 0,
            eps_used: 0.0,
            perturbation: None,
            loss_history: Vec::new(),
            max_ball_violation: 0.0,
        });
    }

    let caps = decode_caps(codec_model, paths);
    let (loss, grad) = loss_and_state_grad(clf, state, label);
    let direction = grad.sign();
    let mut eps = config.eps;
    let mut rounds = 0usize;
    while eps <= config.eps_max {
        rounds += 1;
        let mut delta = direction.clone();
        for v in delta.data_mut() {
            *v *= eps;
        }
        let candidate = state.add(&delta);
        let adv_paths = codec::decode_rows(codec_model, &candidate, &caps)?;
        if let Some(adv_state) = reencode_dropping_empty(codec_model, &adv_paths)? {
            if classify_state(clf, &adv_state)? != label {
                return Ok(AttackResult {
                    outcome: AttackOutcome::Success,
                    adversarial_paths: Some(adv_paths),
                    iterations_used: rounds,
                    eps_used: eps,
                    perturbation: Some(delta),
                    loss_history: vec![loss],
                    max_ball_violation: 0.0,
                });
            }
        }
        eps += config.delta_eps;
    }
    Ok(AttackResult {
        outcome: AttackOutcome::Failure,
        adversarial_paths: None,
        iterations_used: rounds,
        eps_used: config.eps_max,
        perturbation: None,
        loss_history: vec![loss],
        max_ball_violation: 0.0,
    })
}

/// Dispatch on the configured method.
pub fn run_attack(
    clf: &ClassifierModel,
    codec_model: &AutoencoderModel,
    bag: &Bag,
    config: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    match config.method {
        AttackMethod::ModifiedPgd => pgd_attack(clf, codec_model, bag, config),
        AttackMethod::ModifiedFgsm => fgsm_attack(clf, codec_model, bag, config),
    }
}

pub(crate) fn run_attack_from_state(
    clf: &ClassifierModel,
    codec_model: &AutoencoderModel,
    paths: &[&[u8]],
    label: Label,
    state: &Tensor,
    config: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    match config.method {
        AttackMethod::ModifiedPgd => {
            pgd_attack_from_state(clf, codec_model, paths, label, state, config)
        }
        AttackMethod::ModifiedFgsm => {
            fgsm_attack_from_state(clf, codec_model, paths, label, state, config)
        }
    }
}

/// Plain latent-space PGD used by latent-mode adversarial training: same
/// normalized step and projection, no decode/re-encode verification, returns
/// the final perturbation.
pub fn latent_pgd(clf: &ClassifierModel, state: &Tensor, label: Label, config: &AttackConfig) -> Tensor {
    let mut delta = Tensor::zeros(state.rows(), state.cols());
    for _ in 0..config.max_iters {
        let perturbed = state.add(&delta);
        let (_, grad) = loss_and_state_grad(clf, &perturbed, label);
        let gnorm = grad.l2_norm();
        let scale = config.alpha / (gnorm + config.gamma);
        for (d, g) in delta.data_mut().iter_mut().zip(grad.data()) {
            *d += scale * g;
        }
        project(&mut delta, config.projection, config.eps);
    }
    delta
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackSummary {
    pub total: usize,
    pub successes: usize,
    pub failures: usize,
    pub already_misclassified: usize,
    /// successes / (successes + failures); None when that denominator is 0.
    pub success_rate: Option<f64>,
    /// Mean bag-level RLD across successes.
    pub mean_rld: Option<f64>,
    /// Success bags where some instance decoded to the empty string.
    pub vanished_instances: usize,
}

/// Attack every bag (independent, parallel) and summarize. Bags the
/// classifier already misclassifies are excluded from the success-rate
/// denominator and reported separately.
pub fn batch_attack(
    clf: &ClassifierModel,
    codec_model: &AutoencoderModel,
    bags: &[Bag],
    config: &AttackConfig,
) -> Result<(Vec<AttackResult>, AttackSummary), AttackError> {
    assert!(!bags.is_empty(), "batch_attack: empty bag list");
    config.validate()?;
    let results: Result<Vec<AttackResult>, AttackError> = bags
        .par_iter()
        .map(|bag| run_attack(clf, codec_model, bag, config))
        .collect();
    let results = results?;
    let summary = summarize(&results, bags);
    Ok((results, summary))
}

pub fn summarize(results: &[AttackResult], bags: &[Bag]) -> AttackSummary {
    let mut successes = 0;
    let mut failures = 0;
    let mut already = 0;
    let mut rld_sum = 0.0;
    let mut vanished = 0;
    for (r, bag) in results.iter().zip(bags) {
        match r.outcome {
            AttackOutcome::Success => {
                successes += 1;
                let originals: Vec<Vec<u8>> = bag.paths.iter().map(|p| p.as_bytes().to_vec()).collect();
                let adv = r.adversarial_paths.as_ref().expect("success carries paths");
                let b = metrics::bag_rld(&originals, adv).expect("bag paths are non-empty");
                rld_sum += b.mean;
                if b.vanished_instance {
                    vanished += 1;
                }
            }
            AttackOutcome::Failure => failures += 1,
            AttackOutcome::AlreadyMisclassified => already += 1,
        }
    }
    let attempted = successes + failures;
    AttackSummary {
        total: results.len(),
        successes,
        failures,
        already_misclassified: already,
        success_rate: if attempted > 0 { Some(successes as f64 / attempted as f64) } else { None },
        mean_rld: if successes > 0 { Some(rld_sum / successes as f64) } else { None },
        vanished_instances: vanished,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linf_projection_clamps_and_is_idempotent() {
        let mut d = Tensor::from_vec(1, 2, vec![1.5, -0.3]);
        project_linf(&mut d, 1.0);
        assert_eq!(d.data(), &[1.0, -0.3]);
        let before = d.clone();
        project_linf(&mut d, 1.0);
        assert_eq!(d, before);
    }

    #[test]
    fn l2_projection_scales_rows_independently() {
        // Row 0 has norm 2 -> scaled by 0.5; row 1 stays; zero row stays zero.
        let mut d = Tensor::from_vec(3, 2, vec![2.0, 0.0, 0.3, 0.4, 0.0, 0.0]);
        project_l2(&mut d, 1.0);
        assert!((d.row(0)[0] - 1.0).abs() < 1e-12);
        assert_eq!(d.row(1), &[0.3, 0.4]);
        assert_eq!(d.row(2), &[0.0, 0.0]);
        for row in 0..3 {
            let n: f64 = d.row(row).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(n <= 1.0 + 1e-9);
        }
        let before = d.clone();
        project_l2(&mut d, 1.0);
        assert_eq!(d, before);
    }

    #[test]
    fn fgsm_direction_is_sign_times_eps() {
        let g = Tensor::from_vec(1, 2, vec![0.3, -0.2]);
        let mut delta = g.sign();
        for v in delta.data_mut() {
            *v *= 0.5;
        }
        assert_eq!(delta.data(), &[0.5, -0.5]);
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        let mut c = AttackConfig::pgd(0.0, 1.0, Projection::Linf);
        assert!(c.validate().is_err());
        c.alpha = 1.0;
        assert!(c.validate().is_ok());
        c.eps = -1.0;
        assert!(c.validate().is_err());
        let mut f = AttackConfig::fgsm(0.1, 1.0);
        assert!(f.validate().is_ok());
        f.eps = 2.0; // initial above max
        assert!(f.validate().is_err());
    }

    #[test]
    fn fgsm_sweep_length_is_bounded_arithmetically() {
        // delta 0.01, max 1.0 -> at most 100 verification rounds.
        let c = AttackConfig::fgsm(0.01, 1.0);
        let mut eps = c.eps;
        let mut rounds = 0;
        while eps <= c.eps_max {
            rounds += 1;
            eps += c.delta_eps;
        }
        assert!(rounds <= 100, "rounds = {rounds}");
    }

    #[test]
    fn labels_match_reporting_format() {
        assert_eq!(
            AttackConfig::pgd(2.0, 10.0, Projection::Linf).label(),
            "PGD(alpha: 2.00, eps: 10.00, projection: linf)"
        );
        assert_eq!(AttackConfig::fgsm(0.01, 1.0).label(), "FGSM(delta: 0.01, max_eps: 1.00)");
    }
}
