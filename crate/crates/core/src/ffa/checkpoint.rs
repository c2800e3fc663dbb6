//! Versioned little-endian network checkpoints.
//!
//! Layout: `b"FFNT"`, `u32` version, header fields, the label codebook, then
//! each layer's kind, shape, neuron parameters, row-major weights and biases.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::layer::{DenseAnalogLayer, FfLayer};
use super::network::FfNetwork;
use crate::binio::{check_header, Reader, Writer};
use crate::data::LabelCodebook;
use crate::error::{FfError, Result};
use crate::goodness::{GoodnessKind, ProbParams};
use crate::snn::{DenseSpikingLayer, LifParams};

pub const MAGIC: &[u8; 4] = b"FFNT";
pub const VERSION: u32 = 1;
const MAX_DIM: usize = 1 << 24;

fn kind_code(kind: GoodnessKind) -> u8 {
    match kind {
        GoodnessKind::UnboundedSpiking => 0,
        GoodnessKind::BoundedSpiking => 1,
        GoodnessKind::AnalogSquared => 2,
    }
}

fn kind_from_code(code: u8) -> Result<GoodnessKind> {
    match code {
        0 => Ok(GoodnessKind::UnboundedSpiking),
        1 => Ok(GoodnessKind::BoundedSpiking),
        2 => Ok(GoodnessKind::AnalogSquared),
        c => Err(FfError::Format(format!("unknown goodness code {c}"))),
    }
}

pub fn write_network<W: Write>(network: &FfNetwork, out: W) -> std::io::Result<W> {
    let mut w = Writer::new(out);
    w.bytes(MAGIC)?;
    w.u32(VERSION)?;
    w.u8(kind_code(network.goodness))?;
    w.u32(network.timesteps as u32)?;
    w.u32(network.image_dim as u32)?;
    w.u8(u8::from(network.include_first_layer))?;
    let p = &network.prob;
    w.f64s([&p.alpha_pos, &p.alpha_neg, &p.theta_pos, &p.theta_neg])?;

    let cb = &network.codebook;
    w.u32(cb.class_count() as u32)?;
    w.u32(cb.dim() as u32)?;
    w.u64(cb.seed())?;
    for code in cb.codes() {
        w.bytes(code)?;
    }

    w.u32(network.layers.len() as u32)?;
    for layer in &network.layers {
        w.u32(layer.input_dim() as u32)?;
        w.u32(layer.output_dim() as u32)?;
        match layer {
            FfLayer::Spiking(l) => {
                w.u8(0)?;
                let lif = l.lif();
                w.f64s([&lif.decay, &lif.threshold, &lif.input_scale, &lif.downscale_base])?;
            }
            FfLayer::Analog(l) => {
                w.u8(1)?;
                w.u8(u8::from(l.normalize_input()))?;
            }
        }
        w.f64s(layer.weights().iter())?;
        w.f64s(layer.bias().iter())?;
    }
    Ok(w.into_inner())
}

pub fn read_network<R: Read>(input: R) -> Result<FfNetwork> {
    let mut r = Reader::new(input);
    check_header(&mut r, MAGIC, VERSION)?;
    let goodness = kind_from_code(r.u8()?)?;
    let timesteps = r.len("timesteps", MAX_DIM)?;
    let image_dim = r.len("image dim", MAX_DIM)?;
    let include_first_layer = r.u8()? != 0;
    let prob = ProbParams {
        alpha_pos: r.f64()?,
        alpha_neg: r.f64()?,
        theta_pos: r.f64()?,
        theta_neg: r.f64()?,
    };

    let classes = r.len("class count", MAX_DIM)?;
    let dim = r.len("code dim", MAX_DIM)?;
    let seed = r.u64()?;
    let mut codes = Vec::with_capacity(classes);
    for _ in 0..classes {
        let mut code = vec![0u8; dim];
        for b in code.iter_mut() {
            *b = r.u8()?;
        }
        codes.push(code);
    }
    let codebook = LabelCodebook::from_codes(codes, seed)?;

    let depth = r.len("layer count", 1024)?;
    let mut layers = Vec::with_capacity(depth);
    for _ in 0..depth {
        let inputs = r.len("layer inputs", MAX_DIM)?;
        let outputs = r.len("layer outputs", MAX_DIM)?;
        let tag = r.u8()?;
        let lif = match tag {
            0 => Some(LifParams {
                decay: r.f64()?,
                threshold: r.f64()?,
                input_scale: r.f64()?,
                downscale_base: r.f64()?,
            }),
            1 => None,
            t => return Err(FfError::Format(format!("unknown layer tag {t}"))),
        };
        let normalize = if lif.is_none() { r.u8()? != 0 } else { false };
        let weights = Array2::from_shape_vec((outputs, inputs), r.f64s(inputs * outputs)?)
            .map_err(|e| FfError::Format(e.to_string()))?;
        let bias = Array1::from(r.f64s(outputs)?);
        layers.push(match lif {
            Some(lif) => FfLayer::Spiking(DenseSpikingLayer::new(weights, bias, lif)?),
            None => FfLayer::Analog(DenseAnalogLayer::new(weights, bias, normalize)?),
        });
    }
    r.expect_end()?;
    FfNetwork::from_parts(layers, goodness, prob, codebook, timesteps, image_dim, include_first_layer)
}

pub fn save_network(network: &FfNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| FfError::io(path, e))?;
    let mut w = write_network(network, BufWriter::new(file)).map_err(|e| FfError::io(path, e))?;
    w.flush().map_err(|e| FfError::io(path, e))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<FfNetwork> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| FfError::io(path, e))?;
    read_network(BufReader::new(file))
}
