//! Recurrent encoder-decoder over `T × C` windows.
//!
//! Batches are laid out time-major: row `t·B + b` of a `[T·B, C]` matrix is
//! step `t` of window `b`. Input projections of every step are computed in a
//! single matrix product before the recurrence.

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::feeder::{CHANNELS, WINDOW_LEN};
use crate::numerics::rng::{self, Rng};
use crate::numerics::{glorot_uniform, Activation, ParamId, ParamSet, Tape, Tensor, Var};

/// How the embedding seeds the decoder's first recurrent layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecoderSeed {
    /// One `seed`-wide vector repeated at every step.
    Tiled,
    /// A separate `seed`-wide vector for every step, from one affine map
    /// `embed → window·seed`.
    PerStep,
}

impl DecoderSeed {
    pub fn as_str(self) -> &'static str {
        match self {
            DecoderSeed::Tiled => "tiled",
            DecoderSeed::PerStep => "per-step",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tiled" => Some(DecoderSeed::Tiled),
            "per-step" => Some(DecoderSeed::PerStep),
            _ => None,
        }
    }
}

/// Layer widths of the autoencoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AedShape {
    pub window: usize,
    pub channels: usize,
    pub enc1: usize,
    pub enc2: usize,
    pub embed: usize,
    pub seed: usize,
    pub dec1: usize,
    pub dec2: usize,
    pub decoder: DecoderSeed,
}

impl AedShape {
    pub const fn standard() -> Self {
        AedShape {
            window: WINDOW_LEN,
            channels: CHANNELS,
            enc1: 32,
            enc2: 64,
            embed: 32,
            seed: 64,
            dec1: 64,
            dec2: 32,
            decoder: DecoderSeed::PerStep,
        }
    }

    fn seed_width(&self) -> usize {
        match self.decoder {
            DecoderSeed::Tiled => self.seed,
            DecoderSeed::PerStep => self.seed * self.window,
        }
    }

    fn fields(&self) -> [(&'static str, usize); 8] {
        [
            ("window", self.window),
            ("channels", self.channels),
            ("enc1", self.enc1),
            ("enc2", self.enc2),
            ("embed", self.embed),
            ("seed", self.seed),
            ("dec1", self.dec1),
            ("dec2", self.dec2),
        ]
    }
}

impl Default for AedShape {
    fn default() -> Self {
        AedShape::standard()
    }
}

#[derive(Clone, Copy, Debug)]
struct LstmIds {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
    hidden: usize,
}

#[derive(Clone, Copy, Debug)]
struct Ids {
    enc1: LstmIds,
    enc2: LstmIds,
    proj_w: ParamId,
    proj_b: ParamId,
    seed_w: ParamId,
    seed_b: ParamId,
    dec1: LstmIds,
    dec2: LstmIds,
    out_w: ParamId,
    out_b: ParamId,
}

/// Trained (or freshly initialised) autoencoder for one harmonic order.
#[derive(Clone, Debug)]
pub struct AedParams {
    pub shape: AedShape,
    pub order: u8,
    pub params: ParamSet,
    ids: Ids,
}

impl PartialEq for AedParams {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.order == other.order && self.params == other.params
    }
}

enum Init<'a> {
    Glorot(&'a mut Rng),
    Zero,
}

impl Init<'_> {
    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Tensor> {
        match self {
            Init::Glorot(r) => glorot_uniform(&[rows, cols], r),
            Init::Zero => Ok(Tensor::zeros(&[rows, cols])),
        }
    }

    fn forget_bias(&self) -> f64 {
        match self {
            Init::Glorot(_) => 1.0,
            Init::Zero => 0.0,
        }
    }
}

fn push_lstm(ps: &mut ParamSet, name: &str, input: usize, hidden: usize, init: &mut Init) -> Result<LstmIds> {
    let wx = ps.push(format!("{name}.wx"), init.matrix(input, 4 * hidden)?);
    let wh = ps.push(format!("{name}.wh"), init.matrix(hidden, 4 * hidden)?);
    let mut bias = vec![0.0; 4 * hidden];
    bias[hidden..2 * hidden]
        .iter_mut()
        .for_each(|v| *v = init.forget_bias());
    let b = ps.push(format!("{name}.b"), Tensor::row(bias));
    Ok(LstmIds { wx, wh, b, hidden })
}

impl AedParams {
    /// Glorot-uniform weights, zero biases except a forget-gate bias of 1.
    pub fn init(shape: AedShape, order: u8, seed: u64) -> Result<Self> {
        let mut r = rng::stream_indexed(seed, "aed-init", u64::from(order));
        Self::build(shape, order, Init::Glorot(&mut r))
    }

    pub fn zeros(shape: AedShape, order: u8) -> Result<Self> {
        Self::build(shape, order, Init::Zero)
    }

    fn build(shape: AedShape, order: u8, mut init: Init) -> Result<Self> {
        if shape.fields().iter().any(|(_, v)| *v == 0) {
            return Err(Error::contract(format!("zero-sized layer in {shape:?}")));
        }
        let s = shape;
        let mut ps = ParamSet::new();
        let enc1 = push_lstm(&mut ps, "enc1", s.channels, s.enc1, &mut init)?;
        let enc2 = push_lstm(&mut ps, "enc2", s.enc1, s.enc2, &mut init)?;
        let proj_w = ps.push("enc.proj.w", init.matrix(s.enc2, s.embed)?);
        let proj_b = ps.push("enc.proj.b", Tensor::zeros(&[1, s.embed]));
        let seed_w = ps.push("dec.seed.w", init.matrix(s.embed, s.seed_width())?);
        let seed_b = ps.push("dec.seed.b", Tensor::zeros(&[1, s.seed_width()]));
        let dec1 = push_lstm(&mut ps, "dec1", s.seed, s.dec1, &mut init)?;
        let dec2 = push_lstm(&mut ps, "dec2", s.dec1, s.dec2, &mut init)?;
        let out_w = ps.push("dec.out.w", init.matrix(s.dec2, s.channels)?);
        let out_b = ps.push("dec.out.b", Tensor::zeros(&[1, s.channels]));
        Ok(AedParams {
            shape,
            order,
            params: ps,
            ids: Ids {
                enc1,
                enc2,
                proj_w,
                proj_b,
                seed_w,
                seed_b,
                dec1,
                dec2,
                out_w,
                out_b,
            },
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut meta = vec![
            ("kind".to_string(), "aed".to_string()),
            ("order".into(), self.order.to_string()),
        ];
        meta.extend(self.shape.fields().iter().map(|(k, v)| (k.to_string(), v.to_string())));
        meta.push(("decoder".into(), self.shape.decoder.as_str().into()));
        Checkpoint {
            meta,
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.require("kind")? != "aed" {
            return Err(Error::Validation(format!(
                "checkpoint kind `{}` is not `aed`",
                c.require("kind")?
            )));
        }
        let order: u8 = c
            .require("order")?
            .parse()
            .map_err(|_| Error::Validation("bad order in checkpoint".into()))?;
        let shape = AedShape {
            window: c.require_usize("window")?,
            channels: c.require_usize("channels")?,
            enc1: c.require_usize("enc1")?,
            enc2: c.require_usize("enc2")?,
            embed: c.require_usize("embed")?,
            seed: c.require_usize("seed")?,
            dec1: c.require_usize("dec1")?,
            dec2: c.require_usize("dec2")?,
            decoder: DecoderSeed::parse(c.require("decoder")?)
                .ok_or_else(|| Error::Validation("unknown decoder seeding in checkpoint".into()))?,
        };
        let mut p = AedParams::zeros(shape, order)?;
        p.params.load_from(&c.params)?;
        Ok(p)
    }

    /// Registers every tensor on `tape`, as trainable parameters or as
    /// constants for inference.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundAed {
        let vars = self
            .params
            .ids()
            .map(|id| {
                if trainable {
                    tape.param(id, self.params.get(id))
                } else {
                    tape.constant(self.params.get(id).clone())
                }
            })
            .collect();
        BoundAed {
            vars,
            ids: self.ids,
            shape: self.shape,
        }
    }

    /// Stacks windows into the time-major batch layout.
    pub fn batch(&self, windows: &[&Tensor]) -> Result<Tensor> {
        let (t_len, c) = (self.shape.window, self.shape.channels);
        if windows.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        for w in windows {
            if w.shape() != [t_len, c] {
                return Err(Error::Shape {
                    op: "aed_batch",
                    left: w.shape().to_vec(),
                    right: vec![t_len, c],
                });
            }
        }
        let b = windows.len();
        let mut data = vec![0.0; t_len * b * c];
        for (bi, w) in windows.iter().enumerate() {
            for t in 0..t_len {
                data[(t * b + bi) * c..(t * b + bi + 1) * c].copy_from_slice(w.row_slice(t));
            }
        }
        Tensor::new(vec![t_len * b, c], data)
    }

    /// Embeddings of a batch of windows, one row each.
    pub fn encode_batch(&self, windows: &[&Tensor]) -> Result<Tensor> {
        let x = self.batch(windows)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x);
        let em = bound.encode(&mut tape, xv, windows.len())?;
        Ok(tape.value(em).clone())
    }

    pub fn encode(&self, window: &Tensor) -> Result<Vec<f64>> {
        Ok(self.encode_batch(&[window])?.into_data())
    }

    pub fn decode(&self, embedding: &[f64]) -> Result<Tensor> {
        if embedding.len() != self.shape.embed {
            return Err(Error::contract(format!(
                "embedding has length {}, expected {}",
                embedding.len(),
                self.shape.embed
            )));
        }
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let em = tape.constant(Tensor::row(embedding.to_vec()));
        let out = bound.decode(&mut tape, em, 1)?;
        tape.value(out).reshape(vec![self.shape.window, self.shape.channels])
    }

    /// Mean squared reconstruction error over a set of windows.
    pub fn reconstruction_mse(&self, windows: &[&Tensor], batch: usize) -> Result<f64> {
        let mut total = 0.0;
        let mut n = 0usize;
        for chunk in windows.chunks(batch.max(1)) {
            let x = self.batch(chunk)?;
            let mut tape = Tape::new();
            let bound = self.bind(&mut tape, false);
            let xv = tape.constant(x);
            let loss = bound.loss(&mut tape, xv, chunk.len())?;
            total += tape.value(loss).data()[0] * chunk.len() as f64;
            n += chunk.len();
        }
        Ok(total / n.max(1) as f64)
    }
}

/// An [`AedParams`] whose tensors live on a tape.
pub struct BoundAed {
    vars: Vec<Var>,
    ids: Ids,
    shape: AedShape,
}

enum StepInput {
    /// `[T·B, 4h]`, sliced per step.
    PerStep(Var),
    /// `[B, 4h]`, identical at every step.
    Shared(Var),
}

impl BoundAed {
    fn v(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    fn affine(&self, tape: &mut Tape, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let xw = tape.matmul(x, self.v(w))?;
        tape.add_row(xw, self.v(b))
    }

    /// Runs one recurrent layer and returns the hidden state of every step.
    fn lstm(&self, tape: &mut Tape, layer: LstmIds, input: StepInput, batch: usize) -> Result<Vec<Var>> {
        let h = layer.hidden;
        let steps = self.shape.window;
        let mut hs = Vec::with_capacity(steps);
        let mut state: Option<(Var, Var)> = None;
        for t in 0..steps {
            let xp = match input {
                StepInput::PerStep(v) => tape.slice_rows(v, t * batch, (t + 1) * batch)?,
                StepInput::Shared(v) => v,
            };
            let gates = match state {
                Some((h_prev, _)) => {
                    let hh = tape.matmul(h_prev, self.v(layer.wh))?;
                    tape.add(xp, hh)?
                }
                None => xp,
            };
            let i = tape.slice_cols(gates, 0, h)?;
            let i = tape.act(i, Activation::Sigmoid);
            let f = tape.slice_cols(gates, h, 2 * h)?;
            let f = tape.act(f, Activation::Sigmoid);
            let g = tape.slice_cols(gates, 2 * h, 3 * h)?;
            let g = tape.act(g, Activation::Tanh);
            let o = tape.slice_cols(gates, 3 * h, 4 * h)?;
            let o = tape.act(o, Activation::Sigmoid);
            let ig = tape.mul(i, g)?;
            let c = match state {
                Some((_, c_prev)) => {
                    let fc = tape.mul(f, c_prev)?;
                    tape.add(fc, ig)?
                }
                None => ig,
            };
            let tc = tape.act(c, Activation::Tanh);
            let h_new = tape.mul(o, tc)?;
            hs.push(h_new);
            state = Some((h_new, c));
        }
        Ok(hs)
    }

    fn project_steps(&self, tape: &mut Tape, x: Var, layer: LstmIds) -> Result<StepInput> {
        let xw = tape.matmul(x, self.v(layer.wx))?;
        Ok(StepInput::PerStep(tape.add_row(xw, self.v(layer.b))?))
    }

    /// `[T·B, C]` batch → `[B, embed]` embeddings.
    pub fn encode(&self, tape: &mut Tape, x: Var, batch: usize) -> Result<Var> {
        let input = self.project_steps(tape, x, self.ids.enc1)?;
        let h1 = self.lstm(tape, self.ids.enc1, input, batch)?;
        let h1 = tape.concat_rows(&h1)?;
        let input = self.project_steps(tape, h1, self.ids.enc2)?;
        let h2 = self.lstm(tape, self.ids.enc2, input, batch)?;
        let last = *h2.last().expect("window has at least one step");
        let z = self.affine(tape, last, self.ids.proj_w, self.ids.proj_b)?;
        Ok(tape.act(z, Activation::leaky()))
    }

    /// `[B, embed]` → `[T·B, C]` reconstruction.
    pub fn decode(&self, tape: &mut Tape, em: Var, batch: usize) -> Result<Var> {
        let seed = self.affine(tape, em, self.ids.seed_w, self.ids.seed_b)?;
        let seed = tape.act(seed, Activation::leaky());
        let input = match self.shape.decoder {
            DecoderSeed::Tiled => StepInput::Shared(self.affine(tape, seed, self.ids.dec1.wx, self.ids.dec1.b)?),
            DecoderSeed::PerStep => {
                // [B, T·s] → time-major [T·B, s].
                let s = self.shape.seed;
                let steps = (0..self.shape.window)
                    .map(|t| tape.slice_cols(seed, t * s, (t + 1) * s))
                    .collect::<Result<Vec<_>>>()?;
                let seq = tape.concat_rows(&steps)?;
                self.project_steps(tape, seq, self.ids.dec1)?
            }
        };
        let h1 = self.lstm(tape, self.ids.dec1, input, batch)?;
        let h1 = tape.concat_rows(&h1)?;
        let input = self.project_steps(tape, h1, self.ids.dec2)?;
        let h2 = self.lstm(tape, self.ids.dec2, input, batch)?;
        let h2 = tape.concat_rows(&h2)?;
        self.affine(tape, h2, self.ids.out_w, self.ids.out_b)
    }

    /// Mean squared reconstruction error of a batch.
    pub fn loss(&self, tape: &mut Tape, x: Var, batch: usize) -> Result<Var> {
        let em = self.encode(tape, x, batch)?;
        let rec = self.decode(tape, em, batch)?;
        let diff = tape.sub(rec, x)?;
        let sq = tape.mul(diff, diff)?;
        Ok(tape.mean(sq))
    }
}
