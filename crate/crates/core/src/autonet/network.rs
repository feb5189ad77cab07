//! Fully connected encoder/decoder pair with SNR conditioning.
//!
//! Encoder: `[x, snr/20] -> tanh hidden layers -> 2k reals`, read as `k`
//! complex symbols in `(re0, im0, re1, im1, ...)` order. Decoder:
//! `[y_hat, snr/20] -> tanh hidden layers -> n reals`. Output layers are
//! linear; decoder outputs are clamped to [0, 1] only at evaluation time.

use num_complex::Complex64;

use super::matrix::Matrix;
use super::tape::{NodeId, Tape};
use crate::clustering::Constellation;
use crate::complex::ComplexVec;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::modem::{Modem, Snr};
use crate::quantizer::{CodeBounds, UniformQuantizer};
use crate::rng::Rng;

/// Layer widths of the codec.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    /// Flattened image length `n`.
    pub image_len: usize,
    /// Complex symbols per image `k`.
    pub symbols: usize,
    pub hidden: Vec<usize>,
}

impl Architecture {
    pub fn encoder_dims(&self) -> Vec<usize> {
        let mut d = vec![self.image_len + 1];
        d.extend(&self.hidden);
        d.push(2 * self.symbols);
        d
    }

    pub fn decoder_dims(&self) -> Vec<usize> {
        let mut d = vec![2 * self.symbols + 1];
        d.extend(&self.hidden);
        d.push(self.image_len);
        d
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `in x out`.
    pub weights: Matrix,
    /// `1 x out`.
    pub bias: Matrix,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weights: Matrix::zeros(inputs, outputs),
            bias: Matrix::zeros(1, outputs),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Dense {
            weights: Matrix::from_fn(inputs, outputs, |_, _| rng.uniform_range(-limit, limit)),
            bias: Matrix::zeros(1, outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.cols()
    }
}

/// Trainable parameters: encoder layers, decoder layers and, for regular
/// modulation, the grid step `d`. The same shape doubles as a gradient
/// container.
#[derive(Clone, Debug, PartialEq)]
pub struct CodecParams {
    pub encoder: Vec<Dense>,
    pub decoder: Vec<Dense>,
    pub distance: Option<f64>,
}

fn mlp_forward(layers: &[Dense], input: Matrix) -> Matrix {
    let last = layers.len() - 1;
    layers.iter().enumerate().fold(input, |x, (i, l)| {
        let y = x.matmul_bias(&l.weights, Some(l.bias.data()));
        if i < last {
            y.map(f64::tanh)
        } else {
            y
        }
    })
}

fn check_chain(layers: &[Dense], what: &str) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::arg(format!("{what} has no layers")));
    }
    for (i, pair) in layers.windows(2).enumerate() {
        if pair[0].outputs() != pair[1].inputs() {
            return Err(Error::arg(format!(
                "{what} layer {i} outputs {} but layer {} takes {}",
                pair[0].outputs(),
                i + 1,
                pair[1].inputs()
            )));
        }
    }
    for l in layers {
        if l.bias.shape() != (1, l.outputs()) {
            return Err(Error::arg(format!("{what} bias shape mismatch")));
        }
    }
    Ok(())
}

/// Appends the SNR conditioning column.
fn with_snr(x: &Matrix, snr: Snr) -> Matrix {
    x.hcat(&Matrix::from_vec(
        x.rows(),
        1,
        vec![snr.conditioning(); x.rows()],
    ))
}

impl CodecParams {
    pub fn init(arch: &Architecture, rng: &mut Rng) -> Self {
        let build = |dims: &[usize], rng: &mut Rng| {
            dims.windows(2)
                .map(|w| Dense::glorot(w[0], w[1], rng))
                .collect()
        };
        let encoder = build(&arch.encoder_dims(), rng);
        let decoder = build(&arch.decoder_dims(), rng);
        CodecParams {
            encoder,
            decoder,
            distance: None,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |ls: &[Dense]| {
            ls.iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect()
        };
        CodecParams {
            encoder: z(&self.encoder),
            decoder: z(&self.decoder),
            distance: self.distance.map(|_| 0.0),
        }
    }

    /// Validates layer chaining and derives the architecture.
    pub fn architecture(&self) -> Result<Architecture> {
        check_chain(&self.encoder, "encoder")?;
        check_chain(&self.decoder, "decoder")?;
        let n = self.encoder[0].inputs().checked_sub(1).filter(|&n| n > 0);
        let n = n.ok_or_else(|| Error::arg("encoder input must be n + 1 with n >= 1"))?;
        let two_k = self.encoder.last().unwrap().outputs();
        if two_k == 0 || two_k % 2 != 0 {
            return Err(Error::arg(format!(
                "encoder emits {two_k} reals; need an even count"
            )));
        }
        if self.decoder[0].inputs() != two_k + 1 {
            return Err(Error::arg(format!(
                "decoder takes {} inputs, expected {}",
                self.decoder[0].inputs(),
                two_k + 1
            )));
        }
        if self.decoder.last().unwrap().outputs() != n {
            return Err(Error::arg(
                "decoder output length differs from image length",
            ));
        }
        let hidden: Vec<usize> = self.encoder[..self.encoder.len() - 1]
            .iter()
            .map(|l| l.outputs())
            .collect();
        let dec_hidden: Vec<usize> = self.decoder[..self.decoder.len() - 1]
            .iter()
            .map(|l| l.outputs())
            .collect();
        if hidden != dec_hidden {
            return Err(Error::arg("encoder and decoder hidden widths differ"));
        }
        Ok(Architecture {
            image_len: n,
            symbols: two_k / 2,
            hidden,
        })
    }

    /// Parameter slices in declaration order: encoder (weights, bias) per
    /// layer, decoder likewise, then `d` if present.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in self.encoder.iter().chain(&self.decoder) {
            out.push(l.weights.data());
            out.push(l.bias.data());
        }
        if let Some(d) = &self.distance {
            out.push(std::slice::from_ref(d));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            out.push(l.weights.data_mut());
            out.push(l.bias.data_mut());
        }
        if let Some(d) = &mut self.distance {
            out.push(std::slice::from_mut(d));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Raw encoder outputs (`batch x 2k`) for a `batch x n` pixel matrix.
    pub fn encode_batch(&self, x: &Matrix, snr: Snr) -> Matrix {
        mlp_forward(&self.encoder, with_snr(x, snr))
    }

    /// Like [`encode_batch`](Self::encode_batch) with a per-row SNR.
    pub fn encode_rows(&self, x: &Matrix, snrs: &[Snr]) -> Matrix {
        assert_eq!(x.rows(), snrs.len(), "one SNR per row");
        let cond = Matrix::from_vec(x.rows(), 1, snrs.iter().map(|s| s.conditioning()).collect());
        mlp_forward(&self.encoder, x.hcat(&cond))
    }

    /// Unclamped decoder outputs (`batch x n`) for `batch x 2k` symbols.
    pub fn decode_batch(&self, y_hat: &Matrix, snr: Snr) -> Matrix {
        mlp_forward(&self.decoder, with_snr(y_hat, snr))
    }
}

/// Encodes one image into `k` complex symbols (before power normalization).
pub fn encode(x: &ImageTensor, snr: Snr, params: &CodecParams) -> Result<ComplexVec> {
    let arch = params.architecture()?;
    if x.len() != arch.image_len {
        return Err(Error::arg(format!(
            "image has {} values, encoder expects {}",
            x.len(),
            arch.image_len
        )));
    }
    let out = params.encode_batch(&Matrix::from_vec(1, x.len(), x.pixels().to_vec()), snr);
    ComplexVec::from_interleaved(out.data())
}

/// Decodes `k` symbols into an image clamped to [0, 1].
pub fn decode(
    y_hat: &ComplexVec,
    snr: Snr,
    params: &CodecParams,
    shape: (usize, usize, usize),
    bit_depth: u32,
) -> Result<ImageTensor> {
    let arch = params.architecture()?;
    if y_hat.len() != arch.symbols {
        return Err(Error::arg(format!(
            "got {} symbols, decoder expects {}",
            y_hat.len(),
            arch.symbols
        )));
    }
    if shape.0 * shape.1 * shape.2 != arch.image_len {
        return Err(Error::arg(
            "image shape does not match decoder output length",
        ));
    }
    let reals = y_hat.to_interleaved();
    let out = params.decode_batch(&Matrix::from_vec(1, reals.len(), reals), snr);
    ImageTensor::from_clamped(shape, bit_depth, out.data())
}

/// How symbols cross the channel during a training or evaluation pass.
#[derive(Clone, Debug, PartialEq)]
pub enum Link {
    /// No modem: normalized symbols plus noise.
    Analog,
    /// Square grid with step taken from `CodecParams::distance`.
    Regular {
        bounds: CodeBounds,
        learn_distance: bool,
    },
    /// Fixed fitted constellation.
    Irregular(Constellation),
}

impl Link {
    /// The concrete modem for the current parameters.
    pub fn modem(&self, params: &CodecParams) -> Result<Modem> {
        Ok(match self {
            Link::Analog => Modem::Analog,
            Link::Regular { bounds, .. } => {
                let d = params
                    .distance
                    .ok_or_else(|| Error::config("regular modulation needs a grid step d"))?;
                Modem::Regular(UniformQuantizer::with_bounds(d, *bounds)?)
            }
            Link::Irregular(c) => Modem::Irregular(c.clone()),
        })
    }
}

/// Tape handles for one batch pass.
#[derive(Debug)]
pub struct BatchPass {
    pub tape: Tape,
    pub loss: NodeId,
    pub output: NodeId,
    /// Power-normalized encoder outputs.
    pub symbols: NodeId,
    /// Demodulated symbols fed to the decoder.
    pub received: NodeId,
    encoder: Vec<(NodeId, NodeId)>,
    decoder: Vec<(NodeId, NodeId)>,
    distance: Option<NodeId>,
}

fn push_mlp(tape: &mut Tape, layers: &[Dense], mut x: NodeId) -> (NodeId, Vec<(NodeId, NodeId)>) {
    let mut ids = Vec::with_capacity(layers.len());
    let last = layers.len() - 1;
    for (i, l) in layers.iter().enumerate() {
        let w = tape.leaf(l.weights.clone());
        let b = tape.leaf(l.bias.clone());
        ids.push((w, b));
        x = tape.affine(x, w, b);
        if i < last {
            x = tape.tanh(x);
        }
    }
    (x, ids)
}

/// Straight-through modem node.
///
/// Forward: `demodulate(modulate(s) + noise)` on every interleaved
/// component. Backward: the upstream gradient is copied to `s` unchanged;
/// in regular mode the grid step receives the closed-form step gradient evaluated at the modulator
/// input, summed over all components.
pub fn ste_forward_backward(
    tape: &mut Tape,
    s: NodeId,
    modem: &Modem,
    noise: &Matrix,
    distance: Option<NodeId>,
) -> NodeId {
    let sv = tape.value(s);
    let mut out = sv.clone();
    let data = out.data_mut();
    modem.map_interleaved(data);
    for (v, n) in data.iter_mut().zip(noise.data()) {
        *v += n;
    }
    modem.map_interleaved(data);
    let dfactor = match (modem, distance) {
        (Modem::Regular(q), Some(d)) => Some((
            d,
            sv.data().iter().map(|&x| q.grad_wrt_distance(x)).collect(),
        )),
        _ => None,
    };
    let pass = match modem {
        Modem::Regular(q) => Some(sv.data().iter().map(|&x| q.grad_wrt_input(x)).collect()),
        _ => None,
    };
    tape.straight_through(s, out, pass, dfactor)
}

/// Builds the full forward graph for one batch: encode, normalize, channel
/// (with modem), decode, MSE against the input.
pub fn forward_batch(
    params: &CodecParams,
    x: &Matrix,
    snr: Snr,
    link: &Link,
    noise: &Matrix,
) -> Result<BatchPass> {
    let arch = params.architecture()?;
    if x.cols() != arch.image_len {
        return Err(Error::arg(format!(
            "batch has {} columns, codec expects {}",
            x.cols(),
            arch.image_len
        )));
    }
    if noise.shape() != (x.rows(), 2 * arch.symbols) {
        return Err(Error::arg("noise matrix shape mismatch"));
    }
    let mut tape = Tape::new();
    let cond = Matrix::from_vec(x.rows(), 1, vec![snr.conditioning(); x.rows()]);
    let xin = tape.leaf(x.clone());
    let c_enc = tape.leaf(cond.clone());
    let enc_in = tape.concat(xin, c_enc);
    let (y, encoder) = push_mlp(&mut tape, &params.encoder, enc_in);
    let symbols = tape
        .normalize_rows(y)
        .ok_or_else(|| Error::Numerical("encoder produced a zero-power block".into()))?;
    let modem = link.modem(params)?;
    let learn = matches!(
        link,
        Link::Regular {
            learn_distance: true,
            ..
        }
    );
    let distance = if learn {
        Some(tape.leaf(Matrix::from_vec(1, 1, vec![params.distance.unwrap()])))
    } else {
        None
    };
    let received = if modem.is_analog() {
        tape.add_const(symbols, noise)
    } else {
        ste_forward_backward(&mut tape, symbols, &modem, noise, distance)
    };
    let c_dec = tape.leaf(cond);
    let dec_in = tape.concat(received, c_dec);
    let (output, decoder) = push_mlp(&mut tape, &params.decoder, dec_in);
    let loss = tape.mse(output, xin);
    Ok(BatchPass {
        tape,
        loss,
        output,
        symbols,
        received,
        encoder,
        decoder,
        distance,
    })
}

impl BatchPass {
    pub fn loss_value(&self) -> f64 {
        self.tape.value(self.loss).get(0, 0)
    }

    /// Backpropagates the loss into a parameter-shaped gradient.
    pub fn gradients(&self, params: &CodecParams) -> CodecParams {
        let mut g = self.tape.backward(self.loss);
        let mut out = params.zeros_like();
        let mut fill = |dst: &mut [Dense], ids: &[(NodeId, NodeId)]| {
            for (l, (w, b)) in dst.iter_mut().zip(ids) {
                if let Some(gw) = g.take(*w) {
                    l.weights = gw;
                }
                if let Some(gb) = g.take(*b) {
                    l.bias = gb;
                }
            }
        };
        fill(&mut out.encoder, &self.encoder);
        fill(&mut out.decoder, &self.decoder);
        if let (Some(id), Some(slot)) = (self.distance, out.distance.as_mut()) {
            *slot = g.get(id).map(|m| m.get(0, 0)).unwrap_or(0.0);
        }
        out
    }
}

/// Scales each row of interleaved symbols to unit average power.
pub fn normalize_rows(m: &Matrix) -> Result<Matrix> {
    let k = m.cols() as f64 / 2.0;
    let mut out = m.clone();
    for r in 0..m.rows() {
        let p = m.row(r).iter().map(|v| v * v).sum::<f64>() / k;
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::Numerical(format!("block {r} has power {p}")));
        }
        let s = 1.0 / p.sqrt();
        out.row_mut(r).iter_mut().for_each(|v| *v *= s);
    }
    Ok(out)
}

/// Interleaved reals of a `batch x 2k` matrix row as symbols.
pub fn row_symbols(m: &Matrix, r: usize) -> impl Iterator<Item = Complex64> + '_ {
    m.row(r).chunks_exact(2).map(|p| Complex64::new(p[0], p[1]))
}
