//! Multiple-instance (bag-of-strings) classification. A bag of k instance
//! latents (k x m matrix E) is aggregated into one fixed-size vector by a
//! multi-head attention pool — keys K = E·W_K, values V = E·W_V, weights
//! W = W_Q·Kᵀ softmax-normalized per head over the k instances, output
//! vec(W·V) of length h·d — or by the mean+max baseline, then classified
//! benign/malicious by a small feed-forward head. Labels exist only at bag
//! level.

mod train;

pub use train::{
    accuracy_on, pre_encode_bags, train_classifier, ClassifierTrainConfig, ClassifierTrainReport,
    EncodedBag,
};

use crate::tensor::{Tensor, Trace, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MilError {
    #[error("latent bag has {got} columns but the model expects {want}")]
    DimMismatch { got: usize, want: usize },
    #[error("bag must contain at least one instance")]
    EmptyBag,
    #[error("training dataset must contain both classes")]
    SingleClass,
    #[error("dataset is empty")]
    EmptyDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Benign,
    Malicious,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Benign => 0,
            Label::Malicious => 1,
        }
    }

    pub fn from_index(i: u8) -> Option<Label> {
        match i {
            0 => Some(Label::Benign),
            1 => Some(Label::Malicious),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One labeled classification example: a set of filepath strings.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub paths: Vec<String>,
    pub label: Label,
    pub split: Split,
    pub timestamp: i64,
}

impl Bag {
    pub fn path_bytes(&self) -> Vec<&[u8]> {
        self.paths.iter().map(|p| p.as_bytes()).collect()
    }
}

/// Latent form of a bag: row i is the latent vector of instance i.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBag {
    pub matrix: Tensor,
}

impl LatentBag {
    pub fn instances(&self) -> usize {
        self.matrix.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.matrix.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierHyperparams {
    /// Instance latent size m (must equal the codec latent dim).
    pub latent_dim: usize,
    /// Attention heads h.
    pub heads: usize,
    /// Aggregator hidden size d.
    pub hidden: usize,
    /// Width of the feed-forward head's hidden layer.
    pub head_hidden: usize,
    pub aggregator: AggregatorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregatorKind {
    Attention,
    MeanMax,
}

impl Default for ClassifierHyperparams {
    fn default() -> Self {
        ClassifierHyperparams {
            latent_dim: 128,
            heads: 8,
            hidden: 128,
            head_hidden: 256,
            aggregator: AggregatorKind::Attention,
        }
    }
}

impl ClassifierHyperparams {
    /// Length of the aggregated bag vector feeding the head.
    pub fn aggregated_dim(&self) -> usize {
        match self.aggregator {
            AggregatorKind::Attention => self.heads * self.hidden,
            AggregatorKind::MeanMax => 2 * self.latent_dim,
        }
    }
}

/// Key/value/query projections of the attention pool.
#[derive(Debug, Clone, PartialEq)]
pub struct BagAggregator {
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_q: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub hp: ClassifierHyperparams,
    /// Present iff hp.aggregator == Attention.
    pub aggregator: Option<BagAggregator>,
    pub head_w1: Tensor,
    pub head_b1: Tensor,
    pub head_w2: Tensor,
    pub head_b2: Tensor,
}

impl ClassifierModel {
    pub fn init<R: Rng>(hp: ClassifierHyperparams, rng: &mut R) -> Self {
        let aggregator = match hp.aggregator {
            AggregatorKind::Attention => Some(BagAggregator {
                w_k: Tensor::xavier(hp.latent_dim, hp.hidden, rng),
                w_v: Tensor::xavier(hp.latent_dim, hp.hidden, rng),
                w_q: Tensor::xavier(hp.heads, hp.hidden, rng),
            }),
            AggregatorKind::MeanMax => None,
        };
        let in_dim = hp.aggregated_dim();
        ClassifierModel {
            aggregator,
            head_w1: Tensor::xavier(in_dim, hp.head_hidden, rng),
            head_b1: Tensor::zeros(1, hp.head_hidden),
            head_w2: Tensor::xavier(hp.head_hidden, 2, rng),
            head_b2: Tensor::zeros(1, 2),
            hp,
        }
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        let mut names = Vec::new();
        if self.aggregator.is_some() {
            names.extend(["agg.w_k", "agg.w_v", "agg.w_q"]);
        }
        names.extend(["head.w1", "head.b1", "head.w2", "head.b2"]);
        names
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut ps = Vec::new();
        if let Some(a) = &self.aggregator {
            ps.extend([&a.w_k, &a.w_v, &a.w_q]);
        }
        ps.extend([&self.head_w1, &self.head_b1, &self.head_w2, &self.head_b2]);
        ps
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut ps: Vec<&mut Tensor> = Vec::new();
        if let Some(a) = &mut self.aggregator {
            ps.push(&mut a.w_k);
            ps.push(&mut a.w_v);
            ps.push(&mut a.w_q);
        }
        ps.push(&mut self.head_w1);
        ps.push(&mut self.head_b1);
        ps.push(&mut self.head_w2);
        ps.push(&mut self.head_b2);
        ps
    }
}

pub(crate) struct ClassifierVars {
    agg: Option<(Var, Var, Var)>,
    head_w1: Var,
    head_b1: Var,
    head_w2: Var,
    head_b2: Var,
}

impl ClassifierVars {
    /// Handles in `params()` order.
    pub fn all(&self) -> Vec<Var> {
        let mut vs = Vec::new();
        if let Some((k, v, q)) = self.agg {
            vs.extend([k, v, q]);
        }
        vs.extend([self.head_w1, self.head_b1, self.head_w2, self.head_b2]);
        vs
    }
}

pub(crate) fn register_classifier<'a>(t: &mut Trace<'a>, m: &'a ClassifierModel) -> ClassifierVars {
    ClassifierVars {
        agg: m.aggregator.as_ref().map(|a| (t.param(&a.w_k), t.param(&a.w_v), t.param(&a.w_q))),
        head_w1: t.param(&m.head_w1),
        head_b1: t.param(&m.head_b1),
        head_w2: t.param(&m.head_w2),
        head_b2: t.param(&m.head_b2),
    }
}

/// Aggregation forward: E (k x m) -> (1 x aggregated_dim).
pub(crate) fn aggregate_forward(
    t: &mut Trace,
    vars: &ClassifierVars,
    hp: &ClassifierHyperparams,
    e: Var,
) -> Var {
    match vars.agg {
        Some((w_k, w_v, w_q)) => {
            let k = t.matmul(e, w_k);
            let v = t.matmul(e, w_v);
            let kt = t.transpose(k);
            let w = t.matmul(w_q, kt);
            let wn = t.softmax_rows(w);
            let o = t.matmul(wn, v);
            t.reshape(o, 1, hp.heads * hp.hidden)
        }
        None => {
            let mean = t.mean_rows(e);
            let mx = t.max_rows(e);
            t.concat(&[mean, mx], 1)
        }
    }
}

/// Full classifier forward: E (k x m) -> logits (1 x 2).
pub(crate) fn classify_forward(
    t: &mut Trace,
    vars: &ClassifierVars,
    hp: &ClassifierHyperparams,
    e: Var,
) -> Var {
    let agg = aggregate_forward(t, vars, hp, e);
    let h_raw = t.matmul(agg, vars.head_w1);
    let h_b = t.add_bias(h_raw, vars.head_b1);
    let h = t.tanh(h_b);
    let logits_raw = t.matmul(h, vars.head_w2);
    t.add_bias(logits_raw, vars.head_b2)
}

fn check_bag(model: &ClassifierModel, e: &LatentBag) -> Result<(), MilError> {
    if e.instances() == 0 {
        return Err(MilError::EmptyBag);
    }
    if e.latent_dim() != model.hp.latent_dim {
        return Err(MilError::DimMismatch { got: e.latent_dim(), want: model.hp.latent_dim });
    }
    Ok(())
}

/// Aggregate a latent bag into its fixed-size vector.
pub fn aggregate(model: &ClassifierModel, e: &LatentBag) -> Result<Vec<f64>, MilError> {
    check_bag(model, e)?;
    let mut t = Trace::new();
    let vars = register_classifier(&mut t, model);
    let ev = t.input(e.instances(), e.latent_dim(), e.matrix.data().to_vec(), false);
    let out = aggregate_forward(&mut t, &vars, &model.hp, ev);
    Ok(t.value(out).to_vec())
}

/// Classify a latent bag. Returns the two logits and the predicted label;
/// a logit tie predicts benign.
pub fn classify(model: &ClassifierModel, e: &LatentBag) -> Result<([f64; 2], Label), MilError> {
    check_bag(model, e)?;
    let mut t = Trace::new();
    let vars = register_classifier(&mut t, model);
    let ev = t.input(e.instances(), e.latent_dim(), e.matrix.data().to_vec(), false);
    let logits = classify_forward(&mut t, &vars, &model.hp, ev);
    let vals = t.value(logits);
    let pair = [vals[0], vals[1]];
    let label = if pair[1] > pair[0] { Label::Malicious } else { Label::Benign };
    Ok((pair, label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(hp: ClassifierHyperparams, seed: u64) -> ClassifierModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ClassifierModel::init(hp, &mut rng)
    }

    fn random_bag(k: usize, m: usize, seed: u64) -> LatentBag {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..k * m).map(|_| rng.random_range(-1.0..1.0)).collect();
        LatentBag { matrix: Tensor::from_vec(k, m, data) }
    }

    #[test]
    fn aggregate_output_length_is_heads_times_hidden() {
        let hp = ClassifierHyperparams { latent_dim: 16, heads: 8, hidden: 128, ..Default::default() };
        let m = model(hp, 1);
        let out = aggregate(&m, &random_bag(3, 16, 2)).unwrap();
        assert_eq!(out.len(), 1024);
    }

    #[test]
    fn singleton_bag_aggregates_to_repeated_value_vector() {
        let hp = ClassifierHyperparams {
            latent_dim: 6,
            heads: 3,
            hidden: 4,
            ..Default::default()
        };
        let m = model(hp, 3);
        let bag = random_bag(1, 6, 4);
        let out = aggregate(&m, &bag).unwrap();
        // Softmax of a singleton is exactly 1, so each head copies v1.
        let mut v1 = vec![0.0; 4];
        let agg = m.aggregator.as_ref().unwrap();
        for j in 0..4 {
            for i in 0..6 {
                v1[j] += bag.matrix.data()[i] * agg.w_v.data()[i * 4 + j];
            }
        }
        for head in 0..3 {
            for j in 0..4 {
                assert!((out[head * 4 + j] - v1[j]).abs() <= 1e-7, "head {head} col {j}");
            }
        }
    }

    #[test]
    fn aggregate_matches_hand_rolled_equations() {
        // Independent dense-loop oracle for the key/value/query pool.
        let hp = ClassifierHyperparams {
            latent_dim: 4,
            heads: 2,
            hidden: 2,
            ..Default::default()
        };
        let m = model(hp, 7);
        let bag = random_bag(3, 4, 8);
        let (k, mm, d, h) = (3usize, 4usize, 2usize, 2usize);
        let agg = m.aggregator.as_ref().unwrap();
        let e = bag.matrix.data();
        let mat = |a: &[f64], b: &[f64], ra: usize, ca: usize, cb: usize| -> Vec<f64> {
            let mut out = vec![0.0; ra * cb];
            for i in 0..ra {
                for j in 0..cb {
                    for t in 0..ca {
                        out[i * cb + j] += a[i * ca + t] * b[t * cb + j];
                    }
                }
            }
            out
        };
        let keys = mat(e, agg.w_k.data(), k, mm, d);
        let vals = mat(e, agg.w_v.data(), k, mm, d);
        let mut kt = vec![0.0; d * k];
        for i in 0..k {
            for j in 0..d {
                kt[j * k + i] = keys[i * d + j];
            }
        }
        let mut w = mat(agg.w_q.data(), &kt, h, d, k);
        for row in w.chunks_exact_mut(k) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let expected = mat(&w, &vals, h, k, d);
        let got = aggregate(&m, &bag).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12, "{g} vs {e}");
        }
    }

    #[test]
    fn classify_returns_two_logits_and_is_deterministic() {
        let hp = ClassifierHyperparams { latent_dim: 8, heads: 2, hidden: 4, ..Default::default() };
        let m = model(hp, 9);
        let bag = random_bag(5, 8, 10);
        let (l1, y1) = classify(&m, &bag).unwrap();
        let (l2, y2) = classify(&m, &bag).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(y1, y2);
    }

    #[test]
    fn classify_is_invariant_to_row_permutation() {
        let hp = ClassifierHyperparams { latent_dim: 8, heads: 4, hidden: 8, ..Default::default() };
        let m = model(hp, 11);
        let bag = random_bag(6, 8, 12);
        let (base, _) = classify(&m, &bag).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let mut order: Vec<usize> = (0..6).collect();
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
            let mut data = Vec::new();
            for &i in &order {
                data.extend_from_slice(bag.matrix.row(i));
            }
            let permuted = LatentBag { matrix: Tensor::from_vec(6, 8, data) };
            let (l, _) = classify(&m, &permuted).unwrap();
            assert!((l[0] - base[0]).abs() < 1e-6 && (l[1] - base[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn duplicating_every_instance_keeps_logits() {
        let hp = ClassifierHyperparams { latent_dim: 8, heads: 4, hidden: 8, ..Default::default() };
        let m = model(hp, 14);
        let bag = random_bag(4, 8, 15);
        let (base, _) = classify(&m, &bag).unwrap();
        let mut data = bag.matrix.data().to_vec();
        data.extend_from_slice(bag.matrix.data());
        let doubled = LatentBag { matrix: Tensor::from_vec(8, 8, data) };
        let (l, _) = classify(&m, &doubled).unwrap();
        assert!((l[0] - base[0]).abs() < 1e-9 && (l[1] - base[1]).abs() < 1e-9);
    }

    #[test]
    fn meanmax_baseline_runs_through_same_head_shape() {
        let hp = ClassifierHyperparams {
            latent_dim: 8,
            aggregator: AggregatorKind::MeanMax,
            ..Default::default()
        };
        let m = model(hp, 16);
        let out = aggregate(&m, &random_bag(5, 8, 17)).unwrap();
        assert_eq!(out.len(), 16);
        let (logits, _) = classify(&m, &random_bag(5, 8, 18)).unwrap();
        assert_eq!(logits.len(), 2);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let hp = ClassifierHyperparams { latent_dim: 8, ..Default::default() };
        let m = model(hp, 19);
        let bad = random_bag(2, 5, 20);
        assert!(matches!(classify(&m, &bad), Err(MilError::DimMismatch { got: 5, want: 8 })));
    }

    #[test]
    fn attention_weight_rows_sum_to_one() {
        let hp = ClassifierHyperparams { latent_dim: 6, heads: 5, hidden: 3, ..Default::default() };
        let m = model(hp, 21);
        let bag = random_bag(7, 6, 22);
        let mut t = Trace::new();
        let vars = register_classifier(&mut t, &m);
        let e = t.input(7, 6, bag.matrix.data().to_vec(), false);
        let agg = m.aggregator.as_ref().unwrap();
        let _ = agg;
        let (w_k, _, w_q) = vars.agg.unwrap();
        let k = t.matmul(e, w_k);
        let kt = t.transpose(k);
        let w = t.matmul(w_q, kt);
        let wn = t.softmax_rows(w);
        for row in t.value(wn).chunks_exact(7) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }
}
