//! The autoencoder variants. All share an MLP encoder and decoder; they
//! differ in what sits between the two and in the loss.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Node, Tape};
use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};
use crate::nn::{Activation, BoundMlp, Mlp, MlpSpec};

pub const DEFAULT_LORAE_WEIGHT: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Plain autoencoder with a long latent space.
    Vanilla,
    /// Bottleneck autoencoder, latent size equal to the parameter count.
    Diabolo,
    /// Decoder sees the rank-`k_max` truncated SVD of the batch latent.
    RraeStrong,
    /// Adds `||Y - U A||` with trainable `U` (unit columns) and `A`.
    RraeWeak,
    /// `l` square linear layers after the encoder.
    Irmae,
    /// One square linear layer whose output's nuclear norm is penalized.
    Lorae,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Variant::Vanilla, Variant::Diabolo, Variant::RraeStrong, Variant::RraeWeak, Variant::Irmae, Variant::Lorae];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Diabolo => "diabolo",
            Variant::RraeStrong => "rrae_strong",
            Variant::RraeWeak => "rrae_weak",
            Variant::Irmae => "irmae",
            Variant::Lorae => "lorae",
        }
    }

    pub fn is_rrae(self) -> bool {
        matches!(self, Variant::RraeStrong | Variant::RraeWeak)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model variant `{s}`")))
    }
}

/// Starting point of the weak factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeakInit {
    /// Random unit columns for `U`, zeros for `A`.
    Random,
    /// Rank-`k_max` SVD of the initial encoded training set.
    #[default]
    LatentSvd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub variant: Variant,
    pub input_dim: usize,
    pub latent_dim: usize,
    /// Maximum latent rank (RRAE only).
    pub k_max: Option<usize>,
    /// Number of inner linear layers (IRMAE only).
    pub inner_layers: Option<usize>,
    /// Nuclear-norm weight (LoRAE only).
    pub nuclear_weight: Option<f64>,
    /// Whether IRMAE/LoRAE inner layers carry a bias.
    #[serde(default)]
    pub inner_bias: bool,
    /// How weak-RRAE `U` and `A` start.
    #[serde(default)]
    pub weak_init: WeakInit,
    pub encoder: MlpSpec,
    pub decoder: MlpSpec,
}

impl ModelSpec {
    /// Encoder of depth 1 and decoder of depth 6, both 64 wide with softplus.
    pub fn new(variant: Variant, input_dim: usize, latent_dim: usize) -> Self {
        let encoder =
            MlpSpec { input_dim, output_dim: latent_dim, width: 64, depth: 1, activation: Activation::Softplus };
        let decoder =
            MlpSpec { input_dim: latent_dim, output_dim: input_dim, width: 64, depth: 6, activation: Activation::Softplus };
        ModelSpec {
            variant,
            input_dim,
            latent_dim,
            k_max: variant.is_rrae().then_some(1),
            inner_layers: (variant == Variant::Irmae).then_some(2),
            nuclear_weight: (variant == Variant::Lorae).then_some(DEFAULT_LORAE_WEIGHT),
            inner_bias: false,
            weak_init: WeakInit::default(),
            encoder,
            decoder,
        }
    }

    pub fn with_k_max(mut self, k: usize) -> Self {
        self.k_max = Some(k);
        self
    }

    pub fn with_inner_layers(mut self, l: usize) -> Self {
        self.inner_layers = Some(l);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        let (t, l) = (self.input_dim, self.latent_dim);
        if self.encoder.input_dim != t || self.encoder.output_dim != l {
            return Err(Error::Config(format!("encoder must map {t} -> {l}, spec says {:?}", self.encoder)));
        }
        if self.decoder.input_dim != l || self.decoder.output_dim != t {
            return Err(Error::Config(format!("decoder must map {l} -> {t}, spec says {:?}", self.decoder)));
        }
        match self.variant {
            Variant::RraeStrong | Variant::RraeWeak => match self.k_max {
                Some(k) if k >= 1 && k <= l => {}
                other => return Err(Error::Config(format!("k_max must be in 1..={l}, got {other:?}"))),
            },
            Variant::Irmae => {
                if !matches!(self.inner_layers, Some(n) if n >= 1) {
                    return Err(Error::Config("irmae needs at least one inner layer".into()));
                }
            }
            Variant::Lorae => {
                if !matches!(self.nuclear_weight, Some(w) if w > 0.0) {
                    return Err(Error::Config("lorae needs a positive nuclear weight".into()));
                }
            }
            Variant::Vanilla | Variant::Diabolo => {}
        }
        Ok(())
    }

    /// Extra checks that depend on the dataset's parameter dimension.
    pub fn validate_for(&self, param_dims: usize) -> Result<()> {
        self.validate()?;
        if self.variant == Variant::Diabolo && param_dims > 0 && self.latent_dim != param_dims {
            return Err(Error::Config(format!(
                "diabolo latent size must equal the parameter count {param_dims}, got {}",
                self.latent_dim
            )));
        }
        Ok(())
    }

    fn inner_count(&self) -> usize {
        match self.variant {
            Variant::Irmae => self.inner_layers.unwrap_or(0),
            Variant::Lorae => 1,
            _ => 0,
        }
    }
}

/// Square latent-to-latent map used by IRMAE and LoRAE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Option<Matrix>,
}

/// Trainable parameters of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub spec: ModelSpec,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub inner: Vec<Linear>,
    /// Weak formulation basis `U` (L×k_max), unit-norm columns.
    pub basis: Option<Matrix>,
    /// Weak formulation coefficients `A` (k_max×D).
    pub coeffs: Option<Matrix>,
    pub norm: Normalization,
}

/// Parameters placed on a tape for one forward/backward pass.
pub struct BoundModel {
    encoder: BoundMlp,
    decoder: BoundMlp,
    inner: Vec<(Node, Option<Node>)>,
    basis: Option<Node>,
    coeffs: Option<Node>,
}

impl BoundModel {
    /// Parameter nodes, in the order of [`ModelState::params`].
    pub fn nodes(&self) -> Vec<Node> {
        let mut out = self.encoder.nodes();
        out.extend(self.decoder.nodes());
        for &(w, b) in &self.inner {
            out.push(w);
            out.extend(b);
        }
        out.extend(self.basis);
        out.extend(self.coeffs);
        out
    }
}

/// Loss nodes of one batch.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    /// `(recon + penalty weight * penalty) / batch size`
    pub total: Node,
    /// `||X - X̃||_F`
    pub recon: Node,
    /// `||Y - U A_b||_F` (weak) or the nuclear norm of the latent (LoRAE).
    pub penalty: Option<Node>,
}

pub fn unit_columns(m: &mut Matrix) {
    for j in 0..m.cols() {
        let norm = (0..m.rows()).map(|i| m[(i, j)] * m[(i, j)]).sum::<f64>().sqrt();
        if norm > 0.0 {
            for i in 0..m.rows() {
                m[(i, j)] /= norm;
            }
        }
    }
}

impl ModelState {
    /// Fresh parameters; `samples` is the dataset size (weak RRAE sizes `A` by it).
    pub fn init(spec: ModelSpec, samples: usize, norm: Normalization, seed: u64) -> Result<Self> {
        spec.validate()?;
        if norm.rows() != spec.input_dim {
            return Err(Error::Config(format!(
                "normalization has {} rows, model input is {}",
                norm.rows(),
                spec.input_dim
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Mlp::init(spec.encoder, &mut rng)?;
        let decoder = Mlp::init(spec.decoder, &mut rng)?;
        let l = spec.latent_dim;
        let bound = (1.0 / l as f64).sqrt();
        let inner = (0..spec.inner_count())
            .map(|_| Linear {
                weight: Matrix::from_fn(l, l, |_, _| rng.gen_range(-bound..bound)),
                bias: spec.inner_bias.then(|| Matrix::from_fn(l, 1, |_, _| rng.gen_range(-bound..bound))),
            })
            .collect();
        let (basis, coeffs) = if spec.variant == Variant::RraeWeak {
            let k = spec.k_max.expect("validated");
            let mut u = Matrix::from_fn(l, k, |_, _| rng.gen_range(-1.0..1.0));
            unit_columns(&mut u);
            (Some(u), Some(Matrix::zeros(k, samples)))
        } else {
            (None, None)
        };
        Ok(ModelState { spec, encoder, decoder, inner, basis, coeffs, norm })
    }

    /// [`Self::init`] followed by the data-dependent weak warm start, if the
    /// spec asks for one. `x` holds the normalized training columns.
    pub fn init_with_data(spec: ModelSpec, x: &Matrix, norm: Normalization, seed: u64) -> Result<Self> {
        let mut state = Self::init(spec, x.cols(), norm, seed)?;
        if state.variant() == Variant::RraeWeak && state.spec.weak_init == WeakInit::LatentSvd {
            state.warm_start_weak(x)?;
        }
        Ok(state)
    }

    /// Sets `U` and `A` to the rank-`k_max` SVD factors of the current latent
    /// matrix: `U` the leading left vectors, `A = diag(σ) Vᵀ`.
    pub fn warm_start_weak(&mut self, x: &Matrix) -> Result<()> {
        let k = match (self.variant(), self.spec.k_max) {
            (Variant::RraeWeak, Some(k)) => k,
            _ => return Err(Error::Config("warm start applies to rrae_weak only".into())),
        };
        let y = self.encode_matrix(x)?;
        let s = svd(&y)?;
        if k > s.sigma.len() {
            return Err(Error::Config(format!("k_max = {k} exceeds latent rank bound {}", s.sigma.len())));
        }
        let idx: Vec<usize> = (0..k).collect();
        let mut u = s.u.select_columns(&idx)?;
        unit_columns(&mut u);
        self.basis = Some(u);
        self.coeffs = Some(Matrix::from_fn(k, y.cols(), |i, j| s.sigma[i] * s.vt[(i, j)]));
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    /// Parameter block names, in the order of [`Self::params_mut`].
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (tag, net) in [("enc", &self.encoder), ("dec", &self.decoder)] {
            for i in 0..net.layers.len() {
                names.push(format!("{tag}.w{i}"));
                names.push(format!("{tag}.b{i}"));
            }
        }
        for (i, lin) in self.inner.iter().enumerate() {
            names.push(format!("inner.w{i}"));
            if lin.bias.is_some() {
                names.push(format!("inner.b{i}"));
            }
        }
        if self.basis.is_some() {
            names.push("weak.U".into());
        }
        if self.coeffs.is_some() {
            names.push("weak.A".into());
        }
        names
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut out = self.encoder.params();
        out.extend(self.decoder.params());
        for lin in &self.inner {
            out.push(&lin.weight);
            out.extend(lin.bias.as_ref());
        }
        out.extend(self.basis.as_ref());
        out.extend(self.coeffs.as_ref());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.encoder.params_mut();
        out.extend(self.decoder.params_mut());
        for lin in &mut self.inner {
            out.push(&mut lin.weight);
            out.extend(lin.bias.as_mut());
        }
        out.extend(self.basis.as_mut());
        out.extend(self.coeffs.as_mut());
        out
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let encoder = self.encoder.bind(tape);
        let decoder = self.decoder.bind(tape);
        let inner = self
            .inner
            .iter()
            .map(|lin| (tape.leaf(lin.weight.clone()), lin.bias.as_ref().map(|b| tape.leaf(b.clone()))))
            .collect();
        let basis = self.basis.as_ref().map(|u| tape.leaf(u.clone()));
        let coeffs = self.coeffs.as_ref().map(|a| tape.leaf(a.clone()));
        BoundModel { encoder, decoder, inner, basis, coeffs }
    }

    /// `Y = e(X)`, followed by the inner linear layers for IRMAE/LoRAE.
    pub fn encode(&self, tape: &mut Tape, bound: &BoundModel, x: Node) -> Result<Node> {
        let (rows, _) = tape.shape(x);
        if rows != self.spec.input_dim {
            return Err(Error::dim("encode", tape.shape(x), (self.spec.input_dim, 0)));
        }
        let mut y = bound.encoder.forward(tape, x)?;
        for &(w, b) in &bound.inner {
            y = tape.matmul(w, y)?;
            if let Some(b) = b {
                y = tape.add_bias(y, b)?;
            }
        }
        Ok(y)
    }

    /// What the decoder receives: the truncated SVD of `y` for the strong
    /// formulation, `y` itself otherwise.
    pub fn decoder_input(&self, tape: &mut Tape, y: Node) -> Result<Node> {
        if self.spec.variant != Variant::RraeStrong {
            return Ok(y);
        }
        let k = self.spec.k_max.expect("validated");
        let (l, bs) = tape.shape(y);
        if k > l.min(bs) {
            return Err(Error::Config(format!(
                "k_max = {k} exceeds the rank attainable by a {l}x{bs} latent batch"
            )));
        }
        tape.truncated_reconstruct(y, k)
    }

    pub fn decode(&self, tape: &mut Tape, bound: &BoundModel, z: Node) -> Result<Node> {
        bound.decoder.forward(tape, z)
    }

    /// Loss of one batch; `batch_indices[j]` is the dataset column of `x`'s column `j`.
    pub fn loss(&self, tape: &mut Tape, bound: &BoundModel, x: Node, batch_indices: &[usize]) -> Result<(LossTerms, Node)> {
        let bs = tape.shape(x).1;
        if batch_indices.len() != bs {
            return Err(Error::Parameter(format!("{} batch indices for {bs} columns", batch_indices.len())));
        }
        let y = self.encode(tape, bound, x)?;
        let z = self.decoder_input(tape, y)?;
        let x_hat = self.decode(tape, bound, z)?;
        let diff = tape.sub(x, x_hat)?;
        let recon = tape.frobenius_norm(diff);

        let penalty = match self.spec.variant {
            Variant::RraeWeak => {
                let (u, a) = (bound.basis.expect("weak has U"), bound.coeffs.expect("weak has A"));
                let d = tape.shape(a).1;
                if let Some(&bad) = batch_indices.iter().find(|&&i| i >= d) {
                    return Err(Error::Parameter(format!("batch index {bad} outside dataset of {d} columns")));
                }
                let ab = tape.column_slice(a, batch_indices)?;
                let ua = tape.matmul(u, ab)?;
                let r = tape.sub(y, ua)?;
                Some((tape.frobenius_norm(r), 1.0))
            }
            Variant::Lorae => {
                let w = self.spec.nuclear_weight.expect("validated");
                Some((tape.nuclear_norm(y)?, w))
            }
            _ => None,
        };

        let sum = match penalty {
            Some((p, w)) => {
                let wp = tape.scale(p, w);
                tape.add(recon, wp)?
            }
            None => recon,
        };
        let total = tape.scale(sum, 1.0 / bs.max(1) as f64);
        Ok((LossTerms { total, recon, penalty: penalty.map(|(p, _)| p) }, y))
    }

    /// Encodes normalized columns (no tape bookkeeping kept).
    pub fn encode_matrix(&self, x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let xn = tape.leaf(x.clone());
        let y = self.encode(&mut tape, &bound, xn)?;
        Ok(tape.value(y).clone())
    }

    /// What the decoder sees when `x` is passed as one batch.
    pub fn decoder_input_matrix(&self, x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let xn = tape.leaf(x.clone());
        let y = self.encode(&mut tape, &bound, xn)?;
        let z = self.decoder_input(&mut tape, y)?;
        Ok(tape.value(z).clone())
    }

    pub fn decode_matrix(&self, z: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let zn = tape.leaf(z.clone());
        let out = self.decode(&mut tape, &bound, zn)?;
        Ok(tape.value(out).clone())
    }

    /// Full forward pass on normalized columns, treating `x` as one batch.
    pub fn reconstruct_matrix(&self, x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let xn = tape.leaf(x.clone());
        let y = self.encode(&mut tape, &bound, xn)?;
        let z = self.decoder_input(&mut tape, y)?;
        let out = self.decode(&mut tape, &bound, z)?;
        Ok(tape.value(out).clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorSource {
    TrainedWeak,
    SvdStrong,
    /// Identity basis; coefficients are the latent vectors themselves.
    Passthrough,
}

/// `Y ≈ U A`: the basis and the per-sample coefficients that get interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentFactorization {
    /// L×k
    pub u: Matrix,
    /// k×D
    pub a: Matrix,
    pub sigma: Option<Vec<f64>>,
    pub source: FactorSource,
    /// `||Y - U A||_F / ||Y||_F` on the data it was built from.
    pub residual: f64,
}

impl LatentFactorization {
    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    pub fn latent(&self, alpha: &Matrix) -> Result<Matrix> {
        self.u.matmul(alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::singular_values;

    fn state(variant: Variant, t: usize, l: usize) -> ModelState {
        let mut spec = ModelSpec::new(variant, t, l);
        spec.decoder.depth = 2;
        spec.encoder.width = 8;
        spec.decoder.width = 8;
        ModelState::init(spec, 6, Normalization::identity(t), 3).unwrap()
    }

    fn columns(t: usize, n: usize) -> Matrix {
        Matrix::from_fn(t, n, |i, j| ((i * 3 + j * 7) as f64 * 0.37).sin())
    }

    #[test]
    fn single_column_latent_shape() {
        let s = state(Variant::Vanilla, 5, 9);
        assert_eq!(s.encode_matrix(&columns(5, 1)).unwrap().shape(), (9, 1));
    }

    #[test]
    fn strong_and_vanilla_share_encoder() {
        let v = state(Variant::Vanilla, 5, 9);
        let mut s = state(Variant::RraeStrong, 5, 9);
        s.encoder = v.encoder.clone();
        let x = columns(5, 4);
        assert_eq!(v.encode_matrix(&x).unwrap(), s.encode_matrix(&x).unwrap());
    }

    #[test]
    fn irmae_with_identity_layer_equals_vanilla() {
        let v = state(Variant::Vanilla, 5, 9);
        let mut spec = v.spec.clone();
        spec.variant = Variant::Irmae;
        spec.inner_layers = Some(1);
        let mut i = ModelState::init(spec, 6, Normalization::identity(5), 3).unwrap();
        i.encoder = v.encoder.clone();
        i.inner[0].weight = Matrix::identity(9);
        let x = columns(5, 3);
        assert_eq!(v.encode_matrix(&x).unwrap(), i.encode_matrix(&x).unwrap());
    }

    #[test]
    fn strong_decoder_input_truncates() {
        let s = state(Variant::RraeStrong, 5, 9).clone();
        let mut s = s;
        s.spec.k_max = Some(2);
        let mut tape = Tape::new();
        let y = tape.leaf(columns(9, 6));
        let z = s.decoder_input(&mut tape, y).unwrap();
        let sv = singular_values(tape.value(z)).unwrap();
        assert!(sv[2..].iter().all(|v| *v <= 1e-12 * sv[0]));

        // exact rank k_max is left alone
        let low = columns(9, 2).matmul(&columns(2, 6)).unwrap();
        let y = tape.leaf(low.clone());
        let z = s.decoder_input(&mut tape, y).unwrap();
        assert!(tape.value(z).sub(&low).unwrap().frobenius_norm() <= 1e-10 * low.frobenius_norm());
    }

    #[test]
    fn strong_rejects_small_batches() {
        let mut s = state(Variant::RraeStrong, 5, 9);
        s.spec.k_max = Some(3);
        let mut tape = Tape::new();
        let y = tape.leaf(columns(9, 2));
        assert!(matches!(s.decoder_input(&mut tape, y), Err(Error::Config(_))));
    }

    #[test]
    fn passthrough_for_other_variants() {
        for v in [Variant::Vanilla, Variant::Diabolo, Variant::RraeWeak, Variant::Irmae, Variant::Lorae] {
            let s = state(v, 5, 4);
            let mut tape = Tape::new();
            let y = tape.leaf(columns(4, 3));
            assert_eq!(s.decoder_input(&mut tape, y).unwrap(), y);
        }
    }

    #[test]
    fn weak_penalty_with_zero_factors_is_latent_norm() {
        let mut s = state(Variant::RraeWeak, 5, 9);
        s.basis = Some(Matrix::zeros(9, 1));
        let mut tape = Tape::new();
        let bound = s.bind(&mut tape);
        let x = tape.leaf(columns(5, 3));
        let (terms, y) = s.loss(&mut tape, &bound, x, &[0, 4, 5]).unwrap();
        let want = tape.value(y).frobenius_norm();
        assert!((tape.scalar(terms.penalty.unwrap()) - want).abs() < 1e-14);
    }

    #[test]
    fn weak_loss_checks_indices() {
        let s = state(Variant::RraeWeak, 5, 9);
        let mut tape = Tape::new();
        let bound = s.bind(&mut tape);
        let x = tape.leaf(columns(5, 2));
        assert!(s.loss(&mut tape, &bound, x, &[0, 6]).is_err());
        assert!(s.loss(&mut tape, &bound, x, &[0]).is_err());
    }

    #[test]
    fn strong_matches_vanilla_when_truncation_is_exact() {
        let v = state(Variant::Vanilla, 5, 9);
        let mut s = state(Variant::RraeStrong, 5, 9);
        s.encoder = v.encoder.clone();
        s.decoder = v.decoder.clone();
        s.spec.k_max = Some(4);
        let x = columns(5, 4);
        let loss_of = |m: &ModelState| {
            let mut tape = Tape::new();
            let b = m.bind(&mut tape);
            let xn = tape.leaf(x.clone());
            let (terms, _) = m.loss(&mut tape, &b, xn, &[0, 1, 2, 3]).unwrap();
            tape.scalar(terms.total)
        };
        assert!((loss_of(&v) - loss_of(&s)).abs() <= 1e-10);
    }

    #[test]
    fn lorae_default_weight() {
        let spec = ModelSpec::new(Variant::Lorae, 5, 9);
        assert_eq!(spec.nuclear_weight, Some(0.001));
    }

    #[test]
    fn spec_validation() {
        assert!(ModelSpec::new(Variant::RraeStrong, 5, 9).with_k_max(10).validate().is_err());
        assert!(ModelSpec::new(Variant::Irmae, 5, 9).with_inner_layers(0).validate().is_err());
        let mut lorae = ModelSpec::new(Variant::Lorae, 5, 9);
        lorae.nuclear_weight = Some(0.0);
        assert!(lorae.validate().is_err());
        assert!(ModelSpec::new(Variant::Diabolo, 5, 2).validate_for(1).is_err());
        assert!(ModelSpec::new(Variant::Diabolo, 5, 1).validate_for(1).is_ok());
    }

    #[test]
    fn param_names_align_with_params() {
        for v in Variant::ALL {
            let mut s = state(v, 5, 4);
            if v == Variant::Irmae {
                s.spec.inner_bias = true;
            }
            assert_eq!(s.param_names().len(), s.params().len());
            let n = s.params().len();
            assert_eq!(s.params_mut().len(), n);
        }
    }
}
