//! Model checkpoint format: a small textual header followed by the raw
//! parameters as little-endian 32-bit floats.
//!
//! Layout:
//!
//! ```text
//! WINCONV-CHECKPOINT 1
//! dims 2
//! padding zero_same
//! kernel 5
//! channels 1 16 32 16 1
//! nonlin leaky_relu leaky_relu leaky_relu identity
//! bias 1
//! DATA
//! <raw f32 LE: per layer, weights row-major, then biases if present>
//! ```
//!
//! Round trips are bit identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use winconv_core::{CNNModel, ConvLayer, Dims, Nonlinearity, Padding};

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint header at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("truncated payload: expected {expected} bytes after the header, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("invalid model: {0}")]
    Model(#[from] winconv_core::Error),
}

const MAGIC: &str = "WINCONV-CHECKPOINT";
const VERSION: u32 = 1;

fn nonlin_name(n: Nonlinearity) -> &'static str {
    match n {
        Nonlinearity::Identity => "identity",
        Nonlinearity::Relu => "relu",
        Nonlinearity::LeakyRelu => "leaky_relu",
        Nonlinearity::Tanh => "tanh",
    }
}

fn parse_nonlin(s: &str, offset: usize) -> Result<Nonlinearity, CheckpointError> {
    match s {
        "identity" => Ok(Nonlinearity::Identity),
        "relu" => Ok(Nonlinearity::Relu),
        "leaky_relu" => Ok(Nonlinearity::LeakyRelu),
        "tanh" => Ok(Nonlinearity::Tanh),
        _ => Err(CheckpointError::Format {
            offset,
            message: format!("unknown nonlinearity {s:?}"),
        }),
    }
}

fn padding_name(p: Padding) -> &'static str {
    match p {
        Padding::ZeroSame => "zero_same",
        Padding::CircularSame => "circular_same",
        Padding::Valid => "valid",
    }
}

fn parse_padding(s: &str, offset: usize) -> Result<Padding, CheckpointError> {
    match s {
        "zero_same" => Ok(Padding::ZeroSame),
        "circular_same" => Ok(Padding::CircularSame),
        "valid" => Ok(Padding::Valid),
        _ => Err(CheckpointError::Format { offset, message: format!("unknown padding {s:?}") }),
    }
}

pub fn save_checkpoint(model: &CNNModel, path: &Path) -> Result<(), CheckpointError> {
    let mut header = String::new();
    header.push_str(&format!("{MAGIC} {VERSION}\n"));
    header.push_str(&format!(
        "dims {}\n",
        match model.dims() {
            Dims::One => 1,
            Dims::Two => 2,
        }
    ));
    header.push_str(&format!("padding {}\n", padding_name(model.padding())));
    header.push_str(&format!("kernel {}\n", model.kernel_width()));
    let mut channels = vec![model.layers()[0].in_channels()];
    channels.extend(model.layers().iter().map(|l| l.out_channels()));
    header.push_str("channels");
    for c in &channels {
        header.push_str(&format!(" {c}"));
    }
    header.push('\n');
    header.push_str("nonlin");
    for l in model.layers() {
        header.push_str(&format!(" {}", nonlin_name(l.nonlinearity())));
    }
    header.push('\n');
    let has_bias = model.layers()[0].bias().is_some();
    header.push_str(&format!("bias {}\n", u8::from(has_bias)));
    header.push_str("DATA\n");

    let mut bytes = header.into_bytes();
    for layer in model.layers() {
        for w in layer.weights() {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        if let Some(b) = layer.bias() {
            for v in b {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> HeaderCursor<'a> {
    fn line(&mut self) -> Result<(&'a str, usize), CheckpointError> {
        let start = self.offset;
        let rest = &self.bytes[start..];
        let end = rest.iter().position(|b| *b == b'\n').ok_or(CheckpointError::Format {
            offset: self.bytes.len(),
            message: "unterminated header line".into(),
        })?;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| CheckpointError::Format {
            offset: start,
            message: "header is not valid UTF-8".into(),
        })?;
        self.offset = start + end + 1;
        Ok((line, start))
    }

    // Line of the form "<key> <values...>".
    fn field(&mut self, key: &str) -> Result<(Vec<&'a str>, usize), CheckpointError> {
        let (line, at) = self.line()?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok((parts.collect(), at)),
            other => Err(CheckpointError::Format {
                offset: at,
                message: format!("expected field {key:?}, found {other:?}"),
            }),
        }
    }
}

fn parse_usize(s: &str, offset: usize) -> Result<usize, CheckpointError> {
    s.parse().map_err(|_| CheckpointError::Format {
        offset,
        message: format!("expected an integer, found {s:?}"),
    })
}

pub fn load_checkpoint(path: &Path) -> Result<CNNModel, CheckpointError> {
    let bytes = fs::read(path)?;
    let mut cur = HeaderCursor { bytes: &bytes, offset: 0 };

    let (magic_line, at) = cur.line()?;
    let mut parts = magic_line.split_whitespace();
    if parts.next() != Some(MAGIC) {
        return Err(CheckpointError::Format { offset: at, message: "missing magic".into() });
    }
    let version = parts
        .next()
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or(CheckpointError::Format { offset: at, message: "missing schema version".into() })?;
    if version != VERSION {
        return Err(CheckpointError::Format {
            offset: at,
            message: format!("unsupported schema version {version}"),
        });
    }

    let (dims_v, at) = cur.field("dims")?;
    let dims = match dims_v.as_slice() {
        ["1"] => Dims::One,
        ["2"] => Dims::Two,
        _ => {
            return Err(CheckpointError::Format {
                offset: at,
                message: format!("dims must be 1 or 2, found {dims_v:?}"),
            })
        }
    };
    let (pad_v, at) = cur.field("padding")?;
    let padding = match pad_v.as_slice() {
        [one] => parse_padding(one, at)?,
        _ => return Err(CheckpointError::Format { offset: at, message: "bad padding line".into() }),
    };
    let (kern_v, at) = cur.field("kernel")?;
    let kernel = match kern_v.as_slice() {
        [one] => parse_usize(one, at)?,
        _ => return Err(CheckpointError::Format { offset: at, message: "bad kernel line".into() }),
    };
    let (chan_v, at) = cur.field("channels")?;
    if chan_v.len() < 2 {
        return Err(CheckpointError::Format {
            offset: at,
            message: "channels must list at least input and output".into(),
        });
    }
    let channels: Vec<usize> =
        chan_v.iter().map(|s| parse_usize(s, at)).collect::<Result<_, _>>()?;
    let (nl_v, at) = cur.field("nonlin")?;
    if nl_v.len() != channels.len() - 1 {
        return Err(CheckpointError::Format {
            offset: at,
            message: format!(
                "expected {} nonlinearities, found {}",
                channels.len() - 1,
                nl_v.len()
            ),
        });
    }
    let nonlins: Vec<Nonlinearity> =
        nl_v.iter().map(|s| parse_nonlin(s, at)).collect::<Result<_, _>>()?;
    let (bias_v, at) = cur.field("bias")?;
    let has_bias = match bias_v.as_slice() {
        ["0"] => false,
        ["1"] => true,
        _ => {
            return Err(CheckpointError::Format { offset: at, message: "bias must be 0 or 1".into() })
        }
    };
    let (data_line, at) = cur.line()?;
    if data_line != "DATA" {
        return Err(CheckpointError::Format {
            offset: at,
            message: format!("expected DATA marker, found {data_line:?}"),
        });
    }

    let kh = match dims {
        Dims::One => 1,
        Dims::Two => kernel,
    };
    let num_layers = channels.len() - 1;
    let mut expected = 0usize;
    for l in 0..num_layers {
        expected += channels[l + 1] * channels[l] * kh * kernel;
        if has_bias {
            expected += channels[l + 1];
        }
    }
    let payload = &bytes[cur.offset..];
    if payload.len() != expected * 4 {
        return Err(CheckpointError::Truncated { expected: expected * 4, got: payload.len() });
    }

    let mut pos = 0usize;
    let mut take = |count: usize| -> Vec<f32> {
        let out = payload[pos..pos + 4 * count]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        pos += 4 * count;
        out
    };
    let mut layers = Vec::with_capacity(num_layers);
    for l in 0..num_layers {
        let weights = take(channels[l + 1] * channels[l] * kh * kernel);
        let bias = has_bias.then(|| take(channels[l + 1]));
        let layer = match dims {
            Dims::One => {
                ConvLayer::new_1d(weights, bias, channels[l], channels[l + 1], kernel, nonlins[l])
            }
            Dims::Two => {
                ConvLayer::new_2d(weights, bias, channels[l], channels[l + 1], kernel, nonlins[l])
            }
        }?;
        layers.push(layer);
    }
    Ok(CNNModel::new(layers, padding, dims)?)
}
