//! Binary model files.
//!
//! All integers and floats are little-endian. Layout, in order:
//!
//! ```text
//! magic        8 bytes  "CTVAEMDL"
//! version      u32      FORMAT_VERSION
//! kind         u8       0=ae 1=vae 2=tvae 3=ctvae
//! arch         5 × u64  d_input h1 d_z h2 h3
//! betas        4 × f64  b1 b2 b3 b4
//! flags        u8       bit0 logvar head, bit1 decoder, bit2 priors, bit3 normalizer
//! networks     encoder, mu_head, [logvar_head], hermaphrodite, [decoder]; each:
//!                u32 layer count, then per layer:
//!                u8 activation (0 linear, 1 relu, 2 sigmoid, 3 tanh), u64 out, u64 in,
//!                out·in f64 weights (row-major, out × in), out f64 bias
//! priors       u8 variant (0 transform, 1 fixed), u64 classes, u64 d_z, f64 scale,
//!                d_z f64 center, then per class: d_z f64 mu_raw, d_z f64 sigma, d_z f64 mu_hat
//! normalizer   u64 d, d f64 min, d f64 max
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{ArchSpec, Betas, Model, ModelKind};
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Matrix, Mlp};
use crate::priors::{ClassPriors, PriorVariant};

pub const MAGIC: &[u8; 8] = b"CTVAEMDL";
pub const FORMAT_VERSION: u32 = 1;

const FLAG_LOGVAR: u8 = 1;
const FLAG_DECODER: u8 = 2;
const FLAG_PRIORS: u8 = 4;
const FLAG_NORMALIZER: u8 = 8;

// Sanity cap on any single dimension read from a file.
const MAX_DIM: u64 = 1 << 24;

struct Out(Vec<u8>);

impl Out {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        v.iter().for_each(|&x| self.f64(x));
    }
    fn mlp(&mut self, m: &Mlp) {
        self.u32(m.layers.len() as u32);
        for l in &m.layers {
            self.u8(l.activation.code());
            self.u64(l.out_dim());
            self.u64(l.in_dim());
            self.f64s(l.weights.as_slice());
            self.f64s(&l.bias);
        }
    }
}

struct In<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> In<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn dim(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        if v > MAX_DIM {
            return Err(Error::Format(format!("dimension {v} exceeds limit")));
        }
        Ok(v as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn mlp(&mut self) -> Result<Mlp> {
        let count = self.u32()? as usize;
        if count == 0 || count > 64 {
            return Err(Error::Format(format!("implausible layer count {count}")));
        }
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let code = self.u8()?;
            let act = Activation::from_code(code)
                .ok_or_else(|| Error::Format(format!("unknown activation code {code}")))?;
            let out = self.dim()?;
            let inp = self.dim()?;
            let w = Matrix::from_vec(out, inp, self.f64s(out * inp)?)?;
            let b = self.f64s(out)?;
            layers.push(DenseLayer::new(w, b, act)?);
        }
        Mlp::new(layers).map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn write_model<W: Write>(model: &Model, mut w: W) -> Result<()> {
    let mut o = Out(Vec::new());
    o.0.extend_from_slice(MAGIC);
    o.u32(FORMAT_VERSION);
    o.u8(model.kind.code());
    let a = &model.arch;
    for v in [a.d_input, a.h1, a.d_z, a.h2, a.h3] {
        o.u64(v);
    }
    let b = &model.betas;
    o.f64s(&[b.b1, b.b2, b.b3, b.b4]);
    let mut flags = 0;
    if model.logvar_head.is_some() {
        flags |= FLAG_LOGVAR;
    }
    if model.decoder.is_some() {
        flags |= FLAG_DECODER;
    }
    if model.priors.is_some() {
        flags |= FLAG_PRIORS;
    }
    if model.normalizer.is_some() {
        flags |= FLAG_NORMALIZER;
    }
    o.u8(flags);
    o.mlp(&model.encoder);
    o.mlp(&model.mu_head);
    if let Some(m) = &model.logvar_head {
        o.mlp(m);
    }
    o.mlp(&model.hermaphrodite);
    if let Some(m) = &model.decoder {
        o.mlp(m);
    }
    if let Some(p) = &model.priors {
        o.u8(match p.variant {
            PriorVariant::Transform => 0,
            PriorVariant::Fixed => 1,
        });
        o.u64(p.n_classes());
        o.u64(p.d_z());
        o.f64(p.scale);
        o.f64s(&p.center);
        for c in 0..p.n_classes() {
            o.f64s(&p.mu_raw[c]);
            o.f64s(&p.sigma[c]);
            o.f64s(&p.mu_hat[c]);
        }
    }
    if let Some(s) = &model.normalizer {
        o.u64(s.dim());
        o.f64s(&s.min);
        o.f64s(&s.max);
    }
    w.write_all(&o.0)
        .map_err(|e| Error::Format(format!("write failed: {e}")))
}

pub fn read_model<R: Read>(mut r: R) -> Result<Model> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::Format(format!("read failed: {e}")))?;
    let mut i = In { buf: &buf, pos: 0 };
    if i.take(8)? != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = i.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let code = i.u8()?;
    let kind = ModelKind::from_code(code).ok_or_else(|| Error::Format(format!("unknown model kind {code}")))?;
    let arch = ArchSpec {
        d_input: i.dim()?,
        h1: i.dim()?,
        d_z: i.dim()?,
        h2: i.dim()?,
        h3: i.dim()?,
    };
    let betas = Betas::new(i.f64()?, i.f64()?, i.f64()?, i.f64()?);
    let flags = i.u8()?;
    let encoder = i.mlp()?;
    let mu_head = i.mlp()?;
    let logvar_head = if flags & FLAG_LOGVAR != 0 { Some(i.mlp()?) } else { None };
    let hermaphrodite = i.mlp()?;
    let decoder = if flags & FLAG_DECODER != 0 { Some(i.mlp()?) } else { None };
    let priors = if flags & FLAG_PRIORS != 0 {
        let variant = match i.u8()? {
            0 => PriorVariant::Transform,
            1 => PriorVariant::Fixed,
            v => return Err(Error::Format(format!("unknown prior variant {v}"))),
        };
        let k = i.dim()?;
        let d = i.dim()?;
        let scale = i.f64()?;
        let center = i.f64s(d)?;
        let (mut mu_raw, mut sigma, mut mu_hat) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..k {
            mu_raw.push(i.f64s(d)?);
            sigma.push(i.f64s(d)?);
            mu_hat.push(i.f64s(d)?);
        }
        Some(ClassPriors {
            variant,
            mu_raw,
            sigma,
            mu_hat,
            center,
            scale,
        })
    } else {
        None
    };
    let normalizer = if flags & FLAG_NORMALIZER != 0 {
        let d = i.dim()?;
        Some(NormStats {
            min: i.f64s(d)?,
            max: i.f64s(d)?,
        })
    } else {
        None
    };
    if i.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes", buf.len() - i.pos)));
    }
    let model = Model {
        kind,
        arch,
        betas,
        encoder,
        mu_head,
        logvar_head,
        hermaphrodite,
        decoder,
        priors,
        normalizer,
    };
    check_consistent(&model)?;
    Ok(model)
}

fn check_consistent(m: &Model) -> Result<()> {
    let a = &m.arch;
    let bad = |what: &str| Err(Error::Format(format!("{what} does not match the declared architecture")));
    if m.encoder.in_dim() != a.d_input || m.encoder.out_dim() != a.h1 {
        return bad("encoder");
    }
    if m.mu_head.in_dim() != a.h1 || m.mu_head.out_dim() != a.d_z {
        return bad("mu head");
    }
    if m.hermaphrodite.in_dim() != a.d_z || m.hermaphrodite.out_dim() != a.d_input {
        return bad("hermaphrodite");
    }
    if let Some(d) = &m.decoder {
        if d.in_dim() != a.d_input || d.out_dim() != a.d_z {
            return bad("decoder");
        }
    }
    let wants_decoder = matches!(m.kind, ModelKind::Tvae | ModelKind::Ctvae);
    if wants_decoder != m.decoder.is_some() || (m.kind == ModelKind::Ae) != m.logvar_head.is_none() {
        return Err(Error::Format(format!("{} file has the wrong set of networks", m.kind)));
    }
    Ok(())
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    write_model(model, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(std::io::BufReader::new(f))
}
