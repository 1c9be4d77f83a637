//! The residual generative Markov model.
//!
//! A model maps the last `order` states (plus a noise vector) to a velocity
//! that is added to the most recent state:
//! `x_next = x_last + f_θ(x_hist, ε)`. Architectures 2 and 3 apply the same
//! update in the latent space of an autoencoder; architecture 3 additionally
//! re-encodes every generated state while sampling chains.
//!
//! All network computation happens on standardized coordinates; the public
//! entry points take and return states in original units.

mod chain;
mod checkpoint;
mod jacobian;
mod standardize;
mod train;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numcore::{Matrix, Params, Rng};

pub use chain::{generate_chain, generate_chains, Chain};
pub use checkpoint::{load_model, read_model, save_model, write_model, CHECKPOINT_VERSION};
pub use jacobian::{jacobian, jacobian_fd};
pub use standardize::{ScaleMode, Standardizer};
pub use train::{train_dymon, train_model, LossCurve, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Architecture {
    /// Transition in the ambient state space.
    Ambient,
    /// Transition in an autoencoder's latent space.
    Latent,
    /// As `Latent`, with every generated state passed through encoder and
    /// decoder again during chain generation.
    LatentDenoised,
}

impl Architecture {
    pub fn tag(self) -> u8 {
        match self {
            Architecture::Ambient => 1,
            Architecture::Latent => 2,
            Architecture::LatentDenoised => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(Architecture::Ambient),
            2 => Ok(Architecture::Latent),
            3 => Ok(Architecture::LatentDenoised),
            other => Err(Error::Config(format!("architecture must be 1, 2 or 3, got {other}"))),
        }
    }

    pub fn uses_autoencoder(self) -> bool {
        self != Architecture::Ambient
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.tag())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tag: u8 = s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("architecture must be 1, 2 or 3, got {s:?}")))?;
        Self::from_tag(tag)
    }
}

/// Shape of a model to be built and trained.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub order: usize,
    /// Width of the noise input; 0 makes the model deterministic.
    pub noise_dim: usize,
    /// Hidden widths of the transition network.
    pub hidden: Vec<usize>,
    /// Bottleneck width (architectures 2 and 3).
    pub latent_dim: usize,
    /// Hidden widths of the encoder; the decoder mirrors them.
    pub encoder_hidden: Vec<usize>,
}

impl ModelSpec {
    pub fn ambient(order: usize, noise_dim: usize, hidden: Vec<usize>) -> Self {
        Self {
            architecture: Architecture::Ambient,
            order,
            noise_dim,
            hidden,
            latent_dim: 0,
            encoder_hidden: Vec::new(),
        }
    }

    pub fn latent(
        architecture: Architecture,
        order: usize,
        noise_dim: usize,
        hidden: Vec<usize>,
        latent_dim: usize,
        encoder_hidden: Vec<usize>,
    ) -> Self {
        Self {
            architecture,
            order,
            noise_dim,
            hidden,
            latent_dim,
            encoder_hidden,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DymonModel {
    pub architecture: Architecture,
    pub order: usize,
    pub state_dim: usize,
    pub noise_dim: usize,
    /// The velocity network `f_θ`.
    pub transition: Params,
    pub encoder: Option<Params>,
    pub decoder: Option<Params>,
    pub standardizer: Standardizer,
    pub seed: u64,
}

impl DymonModel {
    /// Randomly initialized model for `state_dim`-dimensional states.
    pub fn new(spec: &ModelSpec, state_dim: usize, standardizer: Standardizer, seed: u64) -> Result<Self> {
        if spec.order == 0 {
            return Err(Error::Config("model order must be at least 1".into()));
        }
        if state_dim == 0 {
            return Err(Error::Config("state dimension must be positive".into()));
        }
        if standardizer.dim() != state_dim {
            return Err(Error::dim("standardizer", state_dim, standardizer.dim()));
        }
        let mut rng = Rng::new(seed);
        let (effective, encoder, decoder) = if spec.architecture.uses_autoencoder() {
            if spec.latent_dim == 0 {
                return Err(Error::Config("latent architectures need latent_dim >= 1".into()));
            }
            let mut enc = vec![state_dim];
            enc.extend(&spec.encoder_hidden);
            enc.push(spec.latent_dim);
            let mut dec: Vec<usize> = enc.clone();
            dec.reverse();
            (
                spec.latent_dim,
                Some(Params::init(&enc, &mut rng)?),
                Some(Params::init(&dec, &mut rng)?),
            )
        } else {
            (state_dim, None, None)
        };
        let mut sizes = vec![spec.order * effective + spec.noise_dim];
        sizes.extend(&spec.hidden);
        sizes.push(effective);
        let transition = Params::init(&sizes, &mut rng)?;
        let model = Self {
            architecture: spec.architecture,
            order: spec.order,
            state_dim,
            noise_dim: spec.noise_dim,
            transition,
            encoder,
            decoder,
            standardizer,
            seed,
        };
        model.validate()?;
        Ok(model)
    }

    /// Width of the space the transition acts in.
    pub fn effective_dim(&self) -> usize {
        match &self.encoder {
            Some(enc) if self.architecture.uses_autoencoder() => enc.output_dim(),
            _ => self.state_dim,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.noise_dim == 0
    }

    /// Checks the structural invariants tying the networks together.
    pub fn validate(&self) -> Result<()> {
        if self.standardizer.dim() != self.state_dim {
            return Err(Error::dim("standardizer", self.state_dim, self.standardizer.dim()));
        }
        match (self.architecture.uses_autoencoder(), &self.encoder, &self.decoder) {
            (false, None, None) => {}
            (true, Some(enc), Some(dec)) => {
                if enc.input_dim() != self.state_dim || dec.output_dim() != self.state_dim {
                    return Err(Error::dim(
                        "autoencoder ambient width",
                        self.state_dim,
                        format!("{} / {}", enc.input_dim(), dec.output_dim()),
                    ));
                }
                if dec.input_dim() != enc.output_dim() {
                    return Err(Error::dim("latent width", enc.output_dim(), dec.input_dim()));
                }
            }
            (true, _, _) => {
                return Err(Error::Config(format!(
                    "architecture {} needs both an encoder and a decoder",
                    self.architecture
                )))
            }
            (false, _, _) => {
                return Err(Error::Config(
                    "architecture 1 must not carry an encoder or decoder".into(),
                ))
            }
        }
        let eff = self.effective_dim();
        let expected_in = self.order * eff + self.noise_dim;
        if self.transition.input_dim() != expected_in {
            return Err(Error::dim("transition input width", expected_in, self.transition.input_dim()));
        }
        if self.transition.output_dim() != eff {
            return Err(Error::dim("transition output width", eff, self.transition.output_dim()));
        }
        Ok(())
    }

    fn encode(&self, x: &Matrix) -> Result<Matrix> {
        let enc = self.encoder.as_ref().ok_or_else(|| {
            Error::Config(format!("architecture {} has no encoder", self.architecture))
        })?;
        enc.predict(x)
    }

    fn decode(&self, z: &Matrix) -> Result<Matrix> {
        let dec = self.decoder.as_ref().ok_or_else(|| {
            Error::Config(format!("architecture {} has no decoder", self.architecture))
        })?;
        dec.predict(z)
    }

    /// Batched transition on standardized coordinates: each row of
    /// `histories` holds `order` states (oldest first), each row of `eps`
    /// one noise vector.
    pub(crate) fn step_standardized(&self, histories: &Matrix, eps: &Matrix) -> Result<Matrix> {
        let (n, d, k) = (histories.rows(), self.state_dim, self.order);
        if histories.cols() != k * d {
            return Err(Error::dim("history width", k * d, histories.cols()));
        }
        if eps.rows() != n || eps.cols() != self.noise_dim {
            return Err(Error::dim(
                "noise shape",
                format!("({n}, {})", self.noise_dim),
                format!("{:?}", eps.shape()),
            ));
        }
        if self.architecture.uses_autoencoder() {
            self.validate()?;
            // encode each history state: (n·k) × d → (n·k) × L
            let states = Matrix::from_vec(n * k, d, histories.data().to_vec())?;
            let z = self.encode(&states)?;
            let l = z.cols();
            let zh = Matrix::from_vec(n, k * l, z.into_vec())?;
            let input = concat_cols(&zh, eps);
            let mut z_next = self.transition.predict(&input)?;
            for r in 0..n {
                let last = &zh.row(r)[(k - 1) * l..];
                for (v, zl) in z_next.row_mut(r).iter_mut().zip(last) {
                    *v += zl;
                }
            }
            self.decode(&z_next)
        } else {
            let input = concat_cols(histories, eps);
            let mut next = self.transition.predict(&input)?;
            for r in 0..n {
                let last = &histories.row(r)[(k - 1) * d..];
                for (v, xl) in next.row_mut(r).iter_mut().zip(last) {
                    *v += xl;
                }
            }
            Ok(next)
        }
    }

    /// Encoder followed by decoder, on standardized rows.
    pub(crate) fn denoise_standardized(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.encode(x)?;
        self.decode(&z)
    }

    /// Batched [`Self::forward`]: rows of `histories` are flattened
    /// histories in original units.
    pub fn forward_batch(&self, histories: &Matrix, eps: &Matrix) -> Result<Matrix> {
        let hs = self.standardizer.standardize_rows(histories);
        let next = self.step_standardized(&hs, eps)?;
        Ok(self.standardizer.destandardize_rows(&next))
    }

    /// One transition: `history` holds the last `order` states, most recent
    /// last, and `eps` has `noise_dim` entries.
    pub fn forward(&self, history: &Matrix, eps: &[f64]) -> Result<Vec<f64>> {
        if history.shape() != (self.order, self.state_dim) && history.shape() != (1, self.order * self.state_dim) {
            return Err(Error::dim(
                "history shape",
                format!("({}, {}) or (1, {})", self.order, self.state_dim, self.order * self.state_dim),
                format!("{:?}", history.shape()),
            ));
        }
        let flat = Matrix::row_vector(history.data());
        let eps = Matrix::from_vec(1, eps.len(), eps.to_vec())?;
        Ok(self.forward_batch(&flat, &eps)?.into_vec())
    }

    /// Passes states (original units) through encoder and decoder.
    pub fn denoise(&self, states: &Matrix) -> Result<Matrix> {
        let s = self.standardizer.standardize_rows(states);
        Ok(self.standardizer.destandardize_rows(&self.denoise_standardized(&s)?))
    }

    /// Latent codes of states (original units).
    pub fn embed(&self, states: &Matrix) -> Result<Matrix> {
        let s = self.standardizer.standardize_rows(states);
        self.encode(&s)
    }
}

pub(crate) fn concat_cols(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, ca, cb) = (a.rows(), a.cols(), b.cols());
    let mut data = Vec::with_capacity(n * (ca + cb));
    for r in 0..n {
        data.extend_from_slice(a.row(r));
        if cb > 0 {
            data.extend_from_slice(b.row(r));
        }
    }
    Matrix::from_vec(n, ca + cb, data).expect("sizes computed above")
}
