//! Character-sequence autoencoder: a byte-level embedding, a width-w stride-w
//! 1-D convolution (non-overlapping w-grams), a gated recurrent encoder that
//! summarizes the w-gram vectors into one fixed-size latent, and an
//! autoregressive gated recurrent decoder whose transposed convolution expands
//! each recurrent step back into w byte distributions.
//!
//! The decoder never sees the input sequence: step t consumes the embeddings
//! of its own step t-1 output characters (teacher-forced during training) and
//! the latent only enters as the initial recurrent state.

mod train;

pub use train::{
    loss_and_param_grads, reconstruction_accuracy, train_autoencoder, Adam, CodecTrainConfig,
    CodecTrainReport,
};

use crate::tensor::{Tensor, Trace, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Byte vocabulary: all 256 byte values map to their own id.
pub const VOCAB_SIZE: usize = 256;
/// Pad byte; never appears in filepaths. Doubles as the start-of-sequence
/// embedding for the decoder's first step and as the emission terminator.
pub const PAD: u8 = 0x00;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("encode: empty string")]
    EmptyString,
    #[error("encode: string length {len} exceeds max length {max}")]
    TooLong { len: usize, max: usize },
    #[error("decode: latent contains non-finite entries")]
    NonFiniteLatent,
    #[error("latent length {got} does not match model latent dim {want}")]
    LatentDimMismatch { got: usize, want: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecHyperparams {
    /// Character embedding size l.
    pub embed_dim: usize,
    /// Latent representation size d (also both recurrent hidden sizes).
    pub latent_dim: usize,
    /// Convolution output channels feeding the encoder recurrence.
    pub conv_channels: usize,
    /// Convolution kernel width; the stride always equals it.
    pub kernel_width: usize,
    /// Hard cap on input string length.
    pub max_len: usize,
}

impl Default for CodecHyperparams {
    fn default() -> Self {
        CodecHyperparams {
            embed_dim: 32,
            latent_dim: 128,
            conv_channels: 128,
            kernel_width: 5,
            max_len: 256,
        }
    }
}

/// Fixed-size vector representation of one string; the unit of attack
/// perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector {
    pub values: Vec<f64>,
}

impl LatentVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Gated recurrent cell: reset + update gates, tanh candidate.
/// Weights are gate-fused: `w_x` maps the input to [r|z|c] pre-activations,
/// `w_h` maps the hidden state to [r|z], `w_hc` maps (r ⊙ h) into the
/// candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub w_x: Tensor,
    pub w_h: Tensor,
    pub w_hc: Tensor,
    pub bias: Tensor,
}

impl GruCell {
    fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        GruCell {
            w_x: Tensor::xavier(input, 3 * hidden, rng),
            w_h: Tensor::xavier(hidden, 2 * hidden, rng),
            w_hc: Tensor::xavier(hidden, hidden, rng),
            bias: Tensor::zeros(1, 3 * hidden),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub hp: CodecHyperparams,
    /// 256 x l character embedding table.
    pub embedding: Tensor,
    /// (w*l) x conv_channels kernel applied to each non-overlapping w-gram.
    pub conv_w: Tensor,
    pub conv_b: Tensor,
    pub encoder: GruCell,
    pub decoder: GruCell,
    /// d x (w*256) transposed-convolution kernel expanding one decoder step
    /// into w byte distributions.
    pub deconv_w: Tensor,
    pub deconv_b: Tensor,
}

impl AutoencoderModel {
    pub fn init<R: Rng>(hp: CodecHyperparams, rng: &mut R) -> Self {
        let (l, d, c, w) = (hp.embed_dim, hp.latent_dim, hp.conv_channels, hp.kernel_width);
        AutoencoderModel {
            embedding: Tensor::xavier(VOCAB_SIZE, l, rng),
            conv_w: Tensor::xavier(w * l, c, rng),
            conv_b: Tensor::zeros(1, c),
            encoder: GruCell::init(c, d, rng),
            decoder: GruCell::init(w * l, d, rng),
            deconv_w: Tensor::xavier(d, w * VOCAB_SIZE, rng),
            deconv_b: Tensor::zeros(1, w * VOCAB_SIZE),
            hp,
        }
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        vec![
            "embedding",
            "conv_w",
            "conv_b",
            "enc.w_x",
            "enc.w_h",
            "enc.w_hc",
            "enc.bias",
            "dec.w_x",
            "dec.w_h",
            "dec.w_hc",
            "dec.bias",
            "deconv_w",
            "deconv_b",
        ]
    }

    pub fn params(&self) -> Vec<&Tensor> {
        vec![
            &self.embedding,
            &self.conv_w,
            &self.conv_b,
            &self.encoder.w_x,
            &self.encoder.w_h,
            &self.encoder.w_hc,
            &self.encoder.bias,
            &self.decoder.w_x,
            &self.decoder.w_h,
            &self.decoder.w_hc,
            &self.decoder.bias,
            &self.deconv_w,
            &self.deconv_b,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.embedding,
            &mut self.conv_w,
            &mut self.conv_b,
            &mut self.encoder.w_x,
            &mut self.encoder.w_h,
            &mut self.encoder.w_hc,
            &mut self.encoder.bias,
            &mut self.decoder.w_x,
            &mut self.decoder.w_h,
            &mut self.decoder.w_hc,
            &mut self.decoder.bias,
            &mut self.deconv_w,
            &mut self.deconv_b,
        ]
    }

    /// Input length padded up to a multiple of the kernel width.
    pub fn padded_len(&self, len: usize) -> usize {
        len.div_ceil(self.hp.kernel_width) * self.hp.kernel_width
    }
}

/// Registered trace handles for every codec parameter.
pub(crate) struct CodecVars {
    pub embedding: Var,
    pub conv_w: Var,
    pub conv_b: Var,
    pub enc: GruVars,
    pub dec: GruVars,
    pub deconv_w: Var,
    pub deconv_b: Var,
}

pub(crate) struct GruVars {
    pub w_x: Var,
    pub w_h: Var,
    pub w_hc: Var,
    pub bias: Var,
    pub hidden: usize,
}

impl CodecVars {
    /// Handles in the same order as `AutoencoderModel::params()`.
    pub fn all(&self) -> Vec<Var> {
        vec![
            self.embedding,
            self.conv_w,
            self.conv_b,
            self.enc.w_x,
            self.enc.w_h,
            self.enc.w_hc,
            self.enc.bias,
            self.dec.w_x,
            self.dec.w_h,
            self.dec.w_hc,
            self.dec.bias,
            self.deconv_w,
            self.deconv_b,
        ]
    }
}

pub(crate) fn register_codec<'a>(t: &mut Trace<'a>, m: &'a AutoencoderModel) -> CodecVars {
    CodecVars {
        embedding: t.param(&m.embedding),
        conv_w: t.param(&m.conv_w),
        conv_b: t.param(&m.conv_b),
        enc: GruVars {
            w_x: t.param(&m.encoder.w_x),
            w_h: t.param(&m.encoder.w_h),
            w_hc: t.param(&m.encoder.w_hc),
            bias: t.param(&m.encoder.bias),
            hidden: m.hp.latent_dim,
        },
        dec: GruVars {
            w_x: t.param(&m.decoder.w_x),
            w_h: t.param(&m.decoder.w_h),
            w_hc: t.param(&m.decoder.w_hc),
            bias: t.param(&m.decoder.bias),
            hidden: m.hp.latent_dim,
        },
        deconv_w: t.param(&m.deconv_w),
        deconv_b: t.param(&m.deconv_b),
    }
}

/// One gated recurrent step for a whole batch: x (B x in), h (B x d) -> (B x d).
pub(crate) fn gru_step(t: &mut Trace, cell: &GruVars, x: Var, h: Var) -> Var {
    let d = cell.hidden;
    let xp_raw = t.matmul(x, cell.w_x);
    let xp = t.add_bias(xp_raw, cell.bias);
    let xr = t.slice_cols(xp, 0, d);
    let xz = t.slice_cols(xp, d, d);
    let xc = t.slice_cols(xp, 2 * d, d);
    let hp = t.matmul(h, cell.w_h);
    let hr = t.slice_cols(hp, 0, d);
    let hz = t.slice_cols(hp, d, d);
    let r_pre = t.add(xr, hr);
    let r = t.sigmoid(r_pre);
    let z_pre = t.add(xz, hz);
    let z = t.sigmoid(z_pre);
    let rh = t.mul(r, h);
    let rh_proj = t.matmul(rh, cell.w_hc);
    let c_pre = t.add(xc, rh_proj);
    let c = t.tanh(c_pre);
    let zh = t.mul(z, h);
    let omz = t.affine(z, -1.0, 1.0);
    let omz_c = t.mul(omz, c);
    t.add(zh, omz_c)
}

/// A batch of equally-padded strings prepared for the encoder.
pub(crate) struct EncodeBatch {
    /// B * padded_len byte ids, sample-major.
    pub ids: Vec<usize>,
    pub batch: usize,
    pub steps: usize,
}

pub(crate) fn encode_batch_ids(
    model: &AutoencoderModel,
    strings: &[&[u8]],
) -> Result<EncodeBatch, CodecError> {
    let w = model.hp.kernel_width;
    let len0 = strings
        .first()
        .map(|s| model.padded_len(s.len()))
        .expect("encode_batch_ids: empty batch");
    let mut ids = Vec::with_capacity(strings.len() * len0);
    for s in strings {
        if s.is_empty() {
            return Err(CodecError::EmptyString);
        }
        if s.len() > model.hp.max_len {
            return Err(CodecError::TooLong { len: s.len(), max: model.hp.max_len });
        }
        let padded = model.padded_len(s.len());
        assert_eq!(padded, len0, "encode_batch_ids: mixed padded lengths in one bucket");
        ids.extend(s.iter().map(|&b| b as usize));
        ids.extend(std::iter::repeat(PAD as usize).take(padded - s.len()));
    }
    Ok(EncodeBatch { ids, batch: strings.len(), steps: len0 / w })
}

/// Build the encoder forward pass; returns the (B x d) latent node.
pub(crate) fn encoder_forward(
    t: &mut Trace,
    vars: &CodecVars,
    hp: &CodecHyperparams,
    batch: &EncodeBatch,
) -> Var {
    let (l, d, w) = (hp.embed_dim, hp.latent_dim, hp.kernel_width);
    let b = batch.batch;
    let s = batch.steps;
    let emb = t.gather_rows(vars.embedding, &batch.ids);
    let grams = t.reshape(emb, b * s, w * l);
    let conv_raw = t.matmul(grams, vars.conv_w);
    let conv_biased = t.add_bias(conv_raw, vars.conv_b);
    let conv = t.tanh(conv_biased);
    let mut h = t.constant(b, d, vec![0.0; b * d]);
    let mut step_rows = vec![0usize; b];
    for step in 0..s {
        for (i, r) in step_rows.iter_mut().enumerate() {
            *r = i * s + step;
        }
        let x = t.gather_rows(conv, &step_rows);
        h = gru_step(t, &vars.enc, x, h);
    }
    h
}

/// Encode one string to its latent vector. Deterministic; padding to a
/// multiple of the kernel width never changes which w-grams hold real bytes.
pub fn encode(model: &AutoencoderModel, s: &[u8]) -> Result<LatentVector, CodecError> {
    Ok(encode_all(model, &[s])?.pop().expect("one latent"))
}

/// Encode many strings, bucketing by padded length so equal-length strings
/// share one batched forward pass. Output order matches input order.
pub fn encode_all(model: &AutoencoderModel, strings: &[&[u8]]) -> Result<Vec<LatentVector>, CodecError> {
    let d = model.hp.latent_dim;
    let mut order: Vec<usize> = (0..strings.len()).collect();
    order.sort_by_key(|&i| model.padded_len(strings[i].len().max(1)));
    let mut out: Vec<Option<LatentVector>> = vec![None; strings.len()];
    let mut start = 0;
    while start < order.len() {
        let plen = model.padded_len(strings[order[start]].len().max(1));
        let mut end = start;
        while end < order.len() && model.padded_len(strings[order[end]].len().max(1)) == plen {
            end += 1;
        }
        let bucket: Vec<&[u8]> = order[start..end].iter().map(|&i| strings[i]).collect();
        let batch = encode_batch_ids(model, &bucket)?;
        let mut t = Trace::new();
        let vars = register_codec(&mut t, model);
        let h = encoder_forward(&mut t, &vars, &model.hp, &batch);
        let vals = t.value(h);
        for (bi, &i) in order[start..end].iter().enumerate() {
            out[i] = Some(LatentVector { values: vals[bi * d..(bi + 1) * d].to_vec() });
        }
        start = end;
    }
    Ok(out.into_iter().map(|o| o.expect("latent filled")).collect())
}

/// Greedy autoregressive decode from a latent. Emits up to `max_chars`
/// bytes, stopping at the first terminator (pad byte). Argmax ties resolve
/// to the lowest byte id.
pub fn decode(model: &AutoencoderModel, z: &LatentVector, max_chars: usize) -> Result<Vec<u8>, CodecError> {
    let d = model.hp.latent_dim;
    if z.dim() != d {
        return Err(CodecError::LatentDimMismatch { got: z.dim(), want: d });
    }
    if !z.values.iter().all(|v| v.is_finite()) {
        return Err(CodecError::NonFiniteLatent);
    }
    let (l, w) = (model.hp.embed_dim, model.hp.kernel_width);
    let steps = max_chars.div_ceil(w);
    let mut t = Trace::new();
    let vars = register_codec(&mut t, model);
    let mut h = t.input(1, d, z.values.clone(), false);
    let mut prev_ids = vec![PAD as usize; w];
    let mut out = Vec::with_capacity(max_chars);
    for _ in 0..steps {
        let prev_emb = t.gather_rows(vars.embedding, &prev_ids);
        let x = t.reshape(prev_emb, 1, w * l);
        h = gru_step(&mut t, &vars.dec, x, h);
        let logits_raw = t.matmul(h, vars.deconv_w);
        let logits = t.add_bias(logits_raw, vars.deconv_b);
        let vals = t.value(logits).to_vec();
        let mut terminated = false;
        for j in 0..w {
            let row = &vals[j * VOCAB_SIZE..(j + 1) * VOCAB_SIZE];
            let byte = argmax_byte(row);
            prev_ids[j] = byte as usize;
            if byte == PAD {
                terminated = true;
                break;
            }
            out.push(byte);
            if out.len() == max_chars {
                terminated = true;
                break;
            }
        }
        if terminated {
            break;
        }
    }
    Ok(out)
}

/// Decode every row of a (k x d) latent matrix.
pub fn decode_rows(
    model: &AutoencoderModel,
    latents: &Tensor,
    max_chars_per_row: &[usize],
) -> Result<Vec<Vec<u8>>, CodecError> {
    assert_eq!(latents.rows(), max_chars_per_row.len(), "decode_rows: cap count mismatch");
    (0..latents.rows())
        .map(|i| {
            let z = LatentVector { values: latents.row(i).to_vec() };
            decode(model, &z, max_chars_per_row[i])
        })
        .collect()
}

pub(crate) fn argmax_byte(row: &[f64]) -> u8 {
    debug_assert_eq!(row.len(), VOCAB_SIZE);
    let mut best = 0usize;
    let mut best_v = row[0];
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_model(seed: u64) -> AutoencoderModel {
        let hp = CodecHyperparams {
            embed_dim: 6,
            latent_dim: 10,
            conv_channels: 8,
            kernel_width: 5,
            max_len: 64,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AutoencoderModel::init(hp, &mut rng)
    }

    #[test]
    fn encode_produces_latent_of_model_dim() {
        let m = tiny_model(1);
        let z = encode(&m, b"C:\\WINDOWS\\Temp\\x.ini").unwrap();
        assert_eq!(z.dim(), 10);
        assert!(z.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn encode_rejects_empty_and_overlong() {
        let m = tiny_model(1);
        assert!(matches!(encode(&m, b""), Err(CodecError::EmptyString)));
        let long = vec![b'a'; 65];
        assert!(matches!(encode(&m, &long), Err(CodecError::TooLong { .. })));
    }

    #[test]
    fn encode_is_bitwise_deterministic() {
        let m = tiny_model(2);
        let a = encode(&m, b"some\\path").unwrap();
        let b = encode(&m, b"some\\path").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batched_encode_matches_single_encode_bitwise() {
        let m = tiny_model(3);
        let strings: Vec<&[u8]> = vec![b"abcde", b"0123456789", b"xy", b"C:\\a\\b\\c.dll", b"zzzzz"];
        let batched = encode_all(&m, &strings).unwrap();
        for (s, zb) in strings.iter().zip(&batched) {
            let z1 = encode(&m, s).unwrap();
            assert_eq!(&z1, zb);
        }
    }

    #[test]
    fn recurrent_step_count_follows_stride_arithmetic() {
        let m = tiny_model(4);
        // length 20 -> 4 w-grams; length 7 -> padded to 10 -> 2 w-grams.
        let b20 = encode_batch_ids(&m, &[&[b'a'; 20]]).unwrap();
        assert_eq!(b20.steps, 4);
        let b7 = encode_batch_ids(&m, &[&[b'a'; 7]]).unwrap();
        assert_eq!(b7.steps, 2);
        assert_eq!(b7.ids.len(), 10);
        assert_eq!(&b7.ids[7..], &[0, 0, 0]);
    }

    #[test]
    fn padding_to_longer_max_len_does_not_change_latent() {
        let mut m = tiny_model(5);
        let z1 = encode(&m, b"abcdef").unwrap();
        m.hp.max_len = 128;
        let z2 = encode(&m, b"abcdef").unwrap();
        assert_eq!(z1, z2);
    }

    #[test]
    fn untrained_decode_is_total_and_capped() {
        let m = tiny_model(6);
        let z = encode(&m, b"whatever\\thing.txt").unwrap();
        let out = decode(&m, &z, 30).unwrap();
        assert!(out.len() <= 30);
        assert!(!out.contains(&PAD));
    }

    #[test]
    fn decode_rejects_bad_latents() {
        let m = tiny_model(7);
        let bad_dim = LatentVector { values: vec![0.0; 3] };
        assert!(matches!(decode(&m, &bad_dim, 10), Err(CodecError::LatentDimMismatch { .. })));
        let non_finite = LatentVector { values: vec![f64::NAN; 10] };
        assert!(matches!(decode(&m, &non_finite, 10), Err(CodecError::NonFiniteLatent)));
    }

    #[test]
    fn argmax_tie_takes_lowest_byte() {
        let mut row = vec![0.0; VOCAB_SIZE];
        row[65] = 3.0;
        row[66] = 3.0;
        assert_eq!(argmax_byte(&row), 65);
    }
}
