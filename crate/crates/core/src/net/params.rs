//! Network parameters, initialization and the checkpoint file format.
//!
//! Checkpoint layout, little-endian:
//!
//! ```text
//! magic "SPNN" | version u32 | input u32 | hidden u32 | latent u32 | count u32
//! count × { name_len u16 | name utf-8 | rows u32 | cols u32 | dtype u8 }
//! payloads in table order (dtype 0 = f32, 1 = f64)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use super::tensor::Tensor;
use super::{NetError, CONTACT_DIM};
use crate::features::FEATURE_DIM;
use crate::motion::POSE_DIM;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SPNN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetDims {
    pub hidden: usize,
    pub latent: usize,
}

impl Default for NetDims {
    fn default() -> Self {
        Self {
            hidden: 1024,
            latent: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamId {
    GruInput,
    GruHidden,
    GruBias,
    LatentWeight,
    LatentBias,
    PoseWeight,
    PoseBias,
    ContactWeight,
    ContactBias,
}

impl ParamId {
    pub const ALL: [ParamId; 9] = [
        ParamId::GruInput,
        ParamId::GruHidden,
        ParamId::GruBias,
        ParamId::LatentWeight,
        ParamId::LatentBias,
        ParamId::PoseWeight,
        ParamId::PoseBias,
        ParamId::ContactWeight,
        ParamId::ContactBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamId::GruInput => "gru.input_weight",
            ParamId::GruHidden => "gru.hidden_weight",
            ParamId::GruBias => "gru.bias",
            ParamId::LatentWeight => "latent.weight",
            ParamId::LatentBias => "latent.bias",
            ParamId::PoseWeight => "pose.weight",
            ParamId::PoseBias => "pose.bias",
            ParamId::ContactWeight => "contact.weight",
            ParamId::ContactBias => "contact.bias",
        }
    }

    pub fn from_name(name: &str) -> Option<ParamId> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn shape(self, d: &NetDims) -> [usize; 2] {
        let g3 = 3 * d.hidden;
        match self {
            ParamId::GruInput => [FEATURE_DIM, g3],
            ParamId::GruHidden => [d.hidden, g3],
            ParamId::GruBias => [1, g3],
            ParamId::LatentWeight => [d.hidden, d.latent],
            ParamId::LatentBias => [1, d.latent],
            ParamId::PoseWeight => [d.latent, POSE_DIM],
            ParamId::PoseBias => [1, POSE_DIM],
            ParamId::ContactWeight => [d.latent, CONTACT_DIM],
            ParamId::ContactBias => [1, CONTACT_DIM],
        }
    }

    /// Half-width of the uniform initialization range, `1/√fan_in`.
    fn init_bound(self, d: &NetDims) -> f64 {
        let fan_in = match self {
            ParamId::GruInput => FEATURE_DIM,
            ParamId::GruHidden | ParamId::GruBias | ParamId::LatentWeight | ParamId::LatentBias => {
                d.hidden
            }
            _ => d.latent,
        };
        1.0 / (fan_in as f64).sqrt()
    }
}

/// All trainable tensors. GRU gate blocks are stored column-concatenated in
/// the order update, reset, candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    dims: NetDims,
    tensors: Vec<Tensor>,
}

impl NetworkParams {
    pub fn zeros(dims: NetDims) -> Self {
        Self {
            dims,
            tensors: ParamId::ALL
                .iter()
                .map(|p| {
                    let [r, c] = p.shape(&dims);
                    Tensor::zeros(r, c)
                })
                .collect(),
        }
    }

    pub fn init(dims: NetDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            dims,
            tensors: ParamId::ALL
                .iter()
                .map(|p| {
                    let [r, c] = p.shape(&dims);
                    Tensor::uniform(r, c, p.init_bound(&dims), &mut rng)
                })
                .collect(),
        }
    }

    /// Folds a per-channel input standardization `(x − mean) · scale` into
    /// the recurrent input weights and bias, so the network applied to raw
    /// features behaves like the original applied to standardized ones.
    pub fn fold_input_scaling(&mut self, mean: &[f64], scale: &[f64]) -> Result<(), NetError> {
        let rows = self.get(ParamId::GruInput).rows();
        for v in [mean, scale] {
            if v.len() != rows {
                return Err(NetError::Shape {
                    what: "input scaling channels",
                    expected: rows,
                    got: v.len(),
                });
            }
        }
        let mut w = self.get(ParamId::GruInput).clone();
        let mut b = self.get(ParamId::GruBias).clone();
        for c in 0..rows {
            for (wv, bv) in w.row_mut(c).iter_mut().zip(b.row_mut(0).iter_mut()) {
                *wv *= scale[c];
                *bv -= mean[c] * *wv;
            }
        }
        *self.get_mut(ParamId::GruInput) = w;
        *self.get_mut(ParamId::GruBias) = b;
        Ok(())
    }

    /// Builds from tensors in [`ParamId::ALL`] order, checking shapes.
    pub fn from_tensors(dims: NetDims, tensors: Vec<Tensor>) -> Result<Self, NetError> {
        if tensors.len() != ParamId::ALL.len() {
            return Err(NetError::Checkpoint(format!(
                "expected {} tensors, got {}",
                ParamId::ALL.len(),
                tensors.len()
            )));
        }
        for (p, t) in ParamId::ALL.iter().zip(&tensors) {
            check_shape(*p, &dims, t.shape())?;
        }
        Ok(Self { dims, tensors })
    }

    pub fn dims(&self) -> NetDims {
        self.dims
    }

    pub fn get(&self, p: ParamId) -> &Tensor {
        &self.tensors[p.index()]
    }

    pub fn get_mut(&mut self, p: ParamId) -> &mut Tensor {
        &mut self.tensors[p.index()]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn validate(&self) -> Result<(), NetError> {
        for (p, t) in ParamId::ALL.iter().zip(&self.tensors) {
            if !t.is_finite() {
                return Err(NetError::NonFiniteParam(p.name()));
            }
        }
        Ok(())
    }

    /// Every value rounded through `f32`, as stored by a default checkpoint.
    pub fn to_f32_precision(&self) -> Self {
        Self {
            dims: self.dims,
            tensors: self.tensors.iter().map(|t| t.map(|v| v as f32 as f64)).collect(),
        }
    }
}

fn check_shape(p: ParamId, dims: &NetDims, got: [usize; 2]) -> Result<(), NetError> {
    let expected = p.shape(dims);
    if expected != got {
        return Err(NetError::TensorShape {
            name: p.name().to_string(),
            expected,
            got,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

pub fn checkpoint_bytes(params: &NetworkParams, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [
        CHECKPOINT_VERSION,
        FEATURE_DIM as u32,
        params.dims.hidden as u32,
        params.dims.latent as u32,
        ParamId::ALL.len() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (p, t) in ParamId::ALL.iter().zip(&params.tensors) {
        let name = p.name().as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
        out.push(dtype.code());
    }
    for t in &params.tensors {
        for v in t.data() {
            match dtype {
                Dtype::F32 => out.extend_from_slice(&(*v as f32).to_le_bytes()),
                Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self.pos.checked_add(n).ok_or(NetError::Truncated)?;
        if end > self.bytes.len() {
            return Err(NetError::Truncated);
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Parses a checkpoint. With `expected` dims every tensor shape is checked
/// against them; otherwise the header's dims are used.
pub fn params_from_bytes(bytes: &[u8], expected: Option<NetDims>) -> Result<NetworkParams, NetError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| bad_magic())? != CHECKPOINT_MAGIC {
        return Err(bad_magic());
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(NetError::Version(format!(
            "checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let input = r.u32()? as usize;
    let header = NetDims {
        hidden: r.u32()? as usize,
        latent: r.u32()? as usize,
    };
    let dims = expected.unwrap_or(header);
    let count = r.u32()? as usize;
    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| NetError::Checkpoint("tensor name is not utf-8".into()))?
            .to_string();
        let shape = [r.u32()? as usize, r.u32()? as usize];
        let dtype = match r.take(1)?[0] {
            0 => Dtype::F32,
            1 => Dtype::F64,
            other => return Err(NetError::Checkpoint(format!("tensor {name}: unknown dtype {other}"))),
        };
        let id = ParamId::from_name(&name)
            .ok_or_else(|| NetError::Checkpoint(format!("unknown tensor {name}")))?;
        check_shape(id, &dims, shape)?;
        table.push((id, shape, dtype));
    }
    if input != FEATURE_DIM {
        return Err(NetError::Checkpoint(format!(
            "checkpoint input width {input}, expected {FEATURE_DIM}"
        )));
    }
    let mut tensors: Vec<Option<Tensor>> = vec![None; ParamId::ALL.len()];
    for (id, [rows, cols], dtype) in table {
        let raw = r.take(rows * cols * dtype.width())?;
        let data = match dtype {
            Dtype::F32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect(),
            Dtype::F64 => raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        };
        if tensors[id.index()].replace(Tensor::from_vec(rows, cols, data)).is_some() {
            return Err(NetError::Checkpoint(format!("duplicate tensor {}", id.name())));
        }
    }
    if r.pos != bytes.len() {
        return Err(NetError::Checkpoint("trailing bytes after payload".into()));
    }
    let tensors = ParamId::ALL
        .iter()
        .zip(tensors)
        .map(|(p, t)| t.ok_or_else(|| NetError::Checkpoint(format!("missing tensor {}", p.name()))))
        .collect::<Result<Vec<_>, _>>()?;
    NetworkParams::from_tensors(dims, tensors)
}

fn bad_magic() -> NetError {
    NetError::Version("not a checkpoint file (bad magic)".into())
}

pub fn save_params(params: &NetworkParams, path: &Path, dtype: Dtype) -> Result<(), NetError> {
    std::fs::write(path, checkpoint_bytes(params, dtype))
        .map_err(|e| NetError::Io(format!("{}: {e}", path.display())))
}

pub fn load_params(path: &Path, expected: Option<NetDims>) -> Result<NetworkParams, NetError> {
    let bytes = std::fs::read(path).map_err(|e| NetError::Io(format!("{}: {e}", path.display())))?;
    params_from_bytes(&bytes, expected)
}

/// Hex SHA-256 of a file, used to identify checkpoints in reports.
pub fn file_digest(path: &Path) -> Result<String, NetError> {
    let bytes = std::fs::read(path).map_err(|e| NetError::Io(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
