//! Plain-text checkpoint format.
//!
//! ```text
//! dymon-checkpoint 1
//! architecture 2
//! order 1
//! state_dim 3
//! noise_dim 0
//! seed 7
//! mean <d values>
//! scale <d values>
//! network transition|encoder|decoder
//! sizes <widths>
//! activations <hidden> <output>
//! w <fan_out values>        (fan_in lines per layer)
//! b <fan_out values>
//! end
//! ```
//!
//! Values are written with 17 significant digits so a save/load round trip
//! reproduces every weight exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{Architecture, DymonModel, Standardizer};
use crate::numcore::{Activation, Params};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "dymon-checkpoint";

fn write_values<W: Write>(w: &mut W, key: &str, values: &[f64]) -> std::io::Result<()> {
    write!(w, "{key}")?;
    for v in values {
        write!(w, " {v:.16e}")?;
    }
    writeln!(w)
}

fn write_network<W: Write>(w: &mut W, name: &str, p: &Params) -> std::io::Result<()> {
    writeln!(w, "network {name}")?;
    write!(w, "sizes")?;
    for s in p.layer_sizes() {
        write!(w, " {s}")?;
    }
    writeln!(w)?;
    writeln!(w, "activations {} {}", p.hidden_activation.name(), p.output_activation.name())?;
    for layer in &p.layers {
        for row in layer.weight.iter_rows() {
            write_values(w, "w", row)?;
        }
        write_values(w, "b", &layer.bias)?;
    }
    writeln!(w, "end")
}

pub fn write_model<W: Write>(model: &DymonModel, mut w: W) -> Result<()> {
    model.validate()?;
    writeln!(w, "{MAGIC} {CHECKPOINT_VERSION}")?;
    writeln!(w, "architecture {}", model.architecture)?;
    writeln!(w, "order {}", model.order)?;
    writeln!(w, "state_dim {}", model.state_dim)?;
    writeln!(w, "noise_dim {}", model.noise_dim)?;
    writeln!(w, "seed {}", model.seed)?;
    write_values(&mut w, "mean", &model.standardizer.mean)?;
    write_values(&mut w, "scale", &model.standardizer.scale)?;
    write_network(&mut w, "transition", &model.transition)?;
    if let (Some(enc), Some(dec)) = (&model.encoder, &model.decoder) {
        write_network(&mut w, "encoder", enc)?;
        write_network(&mut w, "decoder", dec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_model(model: &DymonModel, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_model(model, BufWriter::new(file))
}

pub fn read_model<R: Read>(mut r: R) -> Result<DymonModel> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    Parser::new(&text).model()
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DymonModel> {
    read_model(File::open(path)?)
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, pos: 0 }
    }

    fn err(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    /// Next line split into key and remaining fields, plus its offset.
    fn line(&mut self, expect: &str) -> Result<(usize, Vec<&'a str>)> {
        if self.pos >= self.text.len() {
            return Err(self.err(self.pos, format!("unexpected end of file, expected {expect:?}")));
        }
        let start = self.pos;
        let rest = &self.text[start..];
        let (line, advance) = match rest.find('\n') {
            Some(i) => (&rest[..i], i + 1),
            None => (rest, rest.len()),
        };
        self.pos += advance;
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some(k) if k == expect => Ok((start, fields.collect())),
            Some(k) => Err(self.err(start, format!("expected {expect:?}, found {k:?}"))),
            None => Err(self.err(start, format!("expected {expect:?}, found an empty line"))),
        }
    }

    fn parse<T: FromStr>(&self, offset: usize, field: &str) -> Result<T> {
        field
            .parse()
            .map_err(|_| self.err(offset, format!("cannot parse {field:?}")))
    }

    fn scalar<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let (off, f) = self.line(key)?;
        if f.len() != 1 {
            return Err(self.err(off, format!("{key} takes one value, got {}", f.len())));
        }
        self.parse(off, f[0])
    }

    fn values(&mut self, key: &str, n: usize) -> Result<Vec<f64>> {
        let (off, f) = self.line(key)?;
        if f.len() != n {
            return Err(self.err(off, format!("{key} needs {n} values, got {}", f.len())));
        }
        f.iter().map(|s| self.parse(off, s)).collect()
    }

    fn activation(&self, offset: usize, name: &str) -> Result<Activation> {
        match name {
            "leaky_relu" => Ok(Activation::LeakyRelu),
            "linear" => Ok(Activation::Linear),
            other => Err(self.err(offset, format!("unknown activation {other:?}"))),
        }
    }

    fn network(&mut self, name: &str) -> Result<Params> {
        let (off, f) = self.line("network")?;
        if f != [name] {
            return Err(self.err(off, format!("expected network {name:?}, found {f:?}")));
        }
        let (off, f) = self.line("sizes")?;
        let sizes: Vec<usize> = f.iter().map(|s| self.parse(off, s)).collect::<Result<_>>()?;
        let mut p = Params::zeros(&sizes).map_err(|e| self.err(off, e.to_string()))?;
        let (off, f) = self.line("activations")?;
        if f.len() != 2 {
            return Err(self.err(off, "activations needs hidden and output names"));
        }
        p.hidden_activation = self.activation(off, f[0])?;
        p.output_activation = self.activation(off, f[1])?;
        for layer in &mut p.layers {
            let (fan_in, fan_out) = layer.weight.shape();
            for r in 0..fan_in {
                let row = self.values("w", fan_out)?;
                layer.weight.row_mut(r).copy_from_slice(&row);
            }
            layer.bias = self.values("b", fan_out)?;
        }
        self.line("end")?;
        Ok(p)
    }

    fn model(mut self) -> Result<DymonModel> {
        let (off, f) = self.line(MAGIC)?;
        if f.len() != 1 {
            return Err(self.err(off, "header needs a version number"));
        }
        let version: u32 = self.parse(off, f[0])?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: f[0].to_string(),
                expected: CHECKPOINT_VERSION,
            });
        }
        let arch_off = self.pos;
        let tag: u8 = self.scalar("architecture")?;
        let architecture = Architecture::from_tag(tag).map_err(|e| self.err(arch_off, e.to_string()))?;
        let order = self.scalar("order")?;
        let state_dim = self.scalar("state_dim")?;
        let noise_dim = self.scalar("noise_dim")?;
        let seed = self.scalar("seed")?;
        let std_off = self.pos;
        let mean = self.values("mean", state_dim)?;
        let scale = self.values("scale", state_dim)?;
        let standardizer = Standardizer::new(mean, scale).map_err(|e| self.err(std_off, e.to_string()))?;
        let transition = self.network("transition")?;
        let (encoder, decoder) = if architecture.uses_autoencoder() {
            (Some(self.network("encoder")?), Some(self.network("decoder")?))
        } else {
            (None, None)
        };
        if !self.text[self.pos..].trim().is_empty() {
            return Err(self.err(self.pos, "trailing content after the last network"));
        }
        let model = DymonModel {
            architecture,
            order,
            state_dim,
            noise_dim,
            transition,
            encoder,
            decoder,
            standardizer,
            seed,
        };
        model.validate().map_err(|e| self.err(0, format!("inconsistent checkpoint: {e}")))?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    fn models() -> Vec<DymonModel> {
        let st = Standardizer::new(vec![0.1, -2.5], vec![3.0, 1.0 / 3.0]).unwrap();
        vec![
            DymonModel::new(&ModelSpec::ambient(2, 3, vec![5, 4]), 2, st.clone(), 1).unwrap(),
            DymonModel::new(&ModelSpec::latent(Architecture::LatentDenoised, 1, 0, vec![6], 1, vec![3]), 2, st, 2)
                .unwrap(),
        ]
    }

    fn to_bytes(m: &DymonModel) -> Vec<u8> {
        let mut buf = Vec::new();
        write_model(m, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_exact() {
        for m in models() {
            let bytes = to_bytes(&m);
            let back = read_model(bytes.as_slice()).unwrap();
            assert_eq!(back, m);
            assert_eq!(to_bytes(&back), bytes);
        }
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = to_bytes(&models()[0]);
        let cut = &bytes[..bytes.len() / 2];
        let cut = &cut[..cut.iter().rposition(|&b| b == b'\n').unwrap() + 1];
        match read_model(cut) {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset, cut.len());
                assert!(message.contains("end of file"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn corrupted_value_is_located() {
        let text = String::from_utf8(to_bytes(&models()[0])).unwrap();
        let at = text.find("\nw ").unwrap() + 1;
        let broken = format!("{}w nope{}", &text[..at], &text[at + text[at..].find('\n').unwrap()..]);
        match read_model(broken.as_bytes()) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, at),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch() {
        let text = String::from_utf8(to_bytes(&models()[0])).unwrap();
        let bumped = text.replacen("dymon-checkpoint 1", "dymon-checkpoint 9", 1);
        assert!(matches!(read_model(bumped.as_bytes()), Err(Error::Version { .. })));
    }
}
