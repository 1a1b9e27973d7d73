//! Latent-space adversarial attacks and robust training for bag-of-strings
//! classifiers.
//!
//! The crate trains a convolutional-recurrent character autoencoder that maps
//! filepath strings to fixed-size latent vectors, trains a multiple-instance
//! (bag-level) benign/malicious classifier on top of frozen latents, generates
//! adversarial filepath strings by perturbing latents with gradient attacks
//! (PGD / FGSM variants that decode, re-encode and re-verify each candidate),
//! and adversarially trains classifiers on the generated strings.
//!
//! Modules follow the pipeline order: [`tensor`] (autodiff), [`codec`]
//! (string autoencoder), [`mil`] (bag classifier), [`attack`] (adversarial
//! string generation), [`advtrain`] (robust training + cross evaluation),
//! [`metrics`] (Levenshtein/RLD, Pareto, eCDF), [`corpus`] (synthetic
//! dataset), [`cli`] (subcommands).

pub mod advtrain;
pub mod attack;
pub mod checkpoint;
pub mod cli;
pub mod codec;
pub mod config;
pub mod corpus;
pub mod metrics;
pub mod mil;
pub mod tensor;
