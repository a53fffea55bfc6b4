//! Versioned binary checkpoint container.
//!
//! Layout (little endian): magic `GCTMCKPT`, u32 version, u8 scalar width
//! (4 or 8), u8 model tag, model body, trailer `END!`. Every tensor is a u8
//! rank, u64 dims, then values widened to f64 (lossless for f32 and f64).

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use crate::baselines::{BaselineConfig, BaselineKind, BaselineModel, DirichletGlobal};
use crate::error::{Error, Result};
use crate::gcn::{Activation, GcnLayer, GcnParams};
use crate::gctm::{AdamState, GctmState, RhoMode};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"GCTMCKPT";
const TRAILER: &[u8; 4] = b"END!";
pub const CHECKPOINT_VERSION: u32 = 1;

const TAG_GCTM: u8 = 0;
const TAG_SVB: u8 = 1;
const TAG_SVBPP: u8 = 2;
const TAG_PVB: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint<T> {
    Gctm { state: GctmState<T>, adam: AdamState<T> },
    Baseline(BaselineModel<T>),
}

type W = Vec<u8>;

fn put_f<T: Scalar>(w: &mut W, x: T) {
    w.write_f64::<LittleEndian>(x.to_f64_lossless()).expect("vec write");
}

fn put_u64(w: &mut W, x: u64) {
    w.write_u64::<LittleEndian>(x).expect("vec write");
}

fn put_slice<T: Scalar>(w: &mut W, dims: &[usize], data: &[T]) {
    w.push(dims.len() as u8);
    for &d in dims {
        put_u64(w, d as u64);
    }
    for &x in data {
        put_f(w, x);
    }
}

fn put_mat<T: Scalar>(w: &mut W, m: &Array2<T>) {
    let m = m.as_standard_layout();
    put_slice(w, &[m.nrows(), m.ncols()], m.as_slice().expect("standard layout"));
}

fn put_vec<T: Scalar>(w: &mut W, v: &Array1<T>) {
    put_slice(w, &[v.len()], v.as_slice().expect("standard layout"));
}

fn put_gcn<T: Scalar>(w: &mut W, p: &GcnParams<T>) {
    w.push(match p.output_activation {
        Activation::Linear => 0,
        Activation::Relu => 1,
    });
    put_u64(w, p.layers.len() as u64);
    for l in &p.layers {
        put_mat(w, &l.weight);
        put_vec(w, &l.bias);
    }
}

struct Reader<'a>(Cursor<&'a [u8]>);

fn truncated(_: std::io::Error) -> Error {
    Error::Checkpoint("truncated or corrupt file".into())
}

// Bounds allocation on corrupt headers.
const MAX_ELEMS: u64 = 1 << 34;

impl Reader<'_> {
    fn u8(&mut self) -> Result<u8> {
        self.0.read_u8().map_err(truncated)
    }

    fn u32(&mut self) -> Result<u32> {
        self.0.read_u32::<LittleEndian>().map_err(truncated)
    }

    fn u64(&mut self) -> Result<u64> {
        self.0.read_u64::<LittleEndian>().map_err(truncated)
    }

    fn f<T: Scalar>(&mut self) -> Result<T> {
        let x = self.0.read_f64::<LittleEndian>().map_err(truncated)?;
        Ok(T::from_f64_exact(x))
    }

    fn tensor<T: Scalar>(&mut self, rank: usize) -> Result<(Vec<usize>, Vec<T>)> {
        let r = self.u8()? as usize;
        if r != rank {
            return Err(Error::Checkpoint(format!("expected rank-{rank} tensor, found rank {r}")));
        }
        let mut dims = Vec::with_capacity(r);
        let mut n: u64 = 1;
        for _ in 0..r {
            let d = self.u64()?;
            n = n.saturating_mul(d);
            dims.push(d as usize);
        }
        let remaining = (self.0.get_ref().len() as u64).saturating_sub(self.0.position()) / 8;
        if n > MAX_ELEMS || n > remaining {
            return Err(Error::Checkpoint("truncated or corrupt file".into()));
        }
        let data = (0..n).map(|_| self.f()).collect::<Result<Vec<T>>>()?;
        Ok((dims, data))
    }

    fn mat<T: Scalar>(&mut self) -> Result<Array2<T>> {
        let (d, data) = self.tensor(2)?;
        Array2::from_shape_vec((d[0], d[1]), data).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    fn vec<T: Scalar>(&mut self) -> Result<Array1<T>> {
        let (_, data) = self.tensor(1)?;
        Ok(Array1::from_vec(data))
    }

    fn gcn<T: Scalar>(&mut self) -> Result<GcnParams<T>> {
        let output_activation = match self.u8()? {
            0 => Activation::Linear,
            1 => Activation::Relu,
            x => return Err(Error::Checkpoint(format!("unknown activation tag {x}"))),
        };
        let n = self.u64()?;
        if n > 1024 {
            return Err(Error::Checkpoint(format!("implausible layer count {n}")));
        }
        let layers = (0..n)
            .map(|_| {
                Ok(GcnLayer {
                    weight: self.mat()?,
                    bias: self.vec()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let p = GcnParams {
            layers,
            output_activation,
        };
        p.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(p)
    }
}

fn scalar_width<T: Scalar>() -> u8 {
    std::mem::size_of::<T>() as u8
}

pub fn encode_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>) -> Vec<u8> {
    let mut w = Vec::new();
    w.extend_from_slice(MAGIC);
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION).expect("vec write");
    w.push(scalar_width::<T>());
    match ckpt {
        Checkpoint::Gctm { state, adam } => {
            w.push(TAG_GCTM);
            put_u64(&mut w, state.t as u64);
            w.push(match state.rho_mode {
                RhoMode::Sigmoid => 0,
                RhoMode::Raw => 1,
            });
            put_f(&mut w, state.sigma_beta);
            put_f(&mut w, state.sigma_w);
            put_vec(&mut w, &state.alpha);
            put_mat(&mut w, &state.beta);
            put_mat(&mut w, &state.prev_beta);
            put_vec(&mut w, &state.rho);
            put_gcn(&mut w, &state.gcn);
            put_gcn(&mut w, &state.prev_gcn);
            put_f(&mut w, adam.lr);
            put_f(&mut w, adam.beta1);
            put_f(&mut w, adam.beta2);
            put_f(&mut w, adam.eps);
            put_u64(&mut w, adam.step);
            put_u64(&mut w, adam.m.len() as u64);
            for (m, v) in adam.m.iter().zip(&adam.v) {
                put_slice(&mut w, &[m.len()], m);
                put_slice(&mut w, &[v.len()], v);
            }
        }
        Checkpoint::Baseline(model) => {
            w.push(match model.kind {
                BaselineKind::Svb => TAG_SVB,
                BaselineKind::SvbPp => TAG_SVBPP,
                BaselineKind::Pvb => TAG_PVB,
            });
            put_u64(&mut w, model.t as u64);
            let c = &model.config;
            for x in [c.eta, c.rho_pp, c.tau0, c.kappa, c.population, c.init_noise] {
                w.write_f64::<LittleEndian>(x).expect("vec write");
            }
            put_vec(&mut w, &model.alpha);
            put_mat(&mut w, &model.lambda.0);
        }
    }
    w.extend_from_slice(TRAILER);
    w
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let mut r = Reader(Cursor::new(bytes));
    let mut magic = [0u8; 8];
    r.0.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "version {version} not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let width = r.u8()?;
    if width != scalar_width::<T>() {
        return Err(Error::Checkpoint(format!(
            "checkpoint stores {}-byte scalars, reader uses {}",
            width,
            scalar_width::<T>()
        )));
    }
    let tag = r.u8()?;
    let ckpt = match tag {
        TAG_GCTM => {
            let t = r.u64()? as usize;
            let rho_mode = match r.u8()? {
                0 => RhoMode::Sigmoid,
                1 => RhoMode::Raw,
                x => return Err(Error::Checkpoint(format!("unknown rho mode {x}"))),
            };
            let sigma_beta = r.f()?;
            let sigma_w = r.f()?;
            let alpha = r.vec()?;
            let beta = r.mat()?;
            let prev_beta = r.mat()?;
            let rho = r.vec()?;
            let gcn = r.gcn()?;
            let prev_gcn = r.gcn()?;
            let mut adam = AdamState::<T>::with_decay(0.0, 0.0, 0.0, 0.0);
            adam.lr = r.f()?;
            adam.beta1 = r.f()?;
            adam.beta2 = r.f()?;
            adam.eps = r.f()?;
            adam.step = r.u64()?;
            let n = r.u64()?;
            if n > 4096 {
                return Err(Error::Checkpoint(format!("implausible tensor count {n}")));
            }
            for _ in 0..n {
                adam.m.push(r.tensor(1)?.1);
                adam.v.push(r.tensor(1)?.1);
            }
            let state = GctmState {
                beta,
                gcn,
                rho,
                rho_mode,
                prev_beta,
                prev_gcn,
                sigma_beta,
                sigma_w,
                alpha,
                t,
            };
            state.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
            Checkpoint::Gctm { state, adam }
        }
        TAG_SVB | TAG_SVBPP | TAG_PVB => {
            let kind = match tag {
                TAG_SVB => BaselineKind::Svb,
                TAG_SVBPP => BaselineKind::SvbPp,
                _ => BaselineKind::Pvb,
            };
            let t = r.u64()? as usize;
            let mut c = [0.0f64; 6];
            for x in &mut c {
                *x = r.0.read_f64::<LittleEndian>().map_err(truncated)?;
            }
            let config = BaselineConfig {
                eta: c[0],
                rho_pp: c[1],
                tau0: c[2],
                kappa: c[3],
                population: c[4],
                init_noise: c[5],
            };
            let alpha = r.vec()?;
            let lambda = DirichletGlobal(r.mat()?);
            if alpha.len() != lambda.0.nrows() {
                return Err(Error::Checkpoint("alpha length does not match lambda".into()));
            }
            Checkpoint::Baseline(BaselineModel {
                kind,
                config,
                lambda,
                alpha,
                t,
            })
        }
        x => return Err(Error::Checkpoint(format!("unknown model tag {x}"))),
    };
    let mut trailer = [0u8; 4];
    r.0.read_exact(&mut trailer).map_err(truncated)?;
    if &trailer != TRAILER {
        return Err(Error::Checkpoint("missing trailer".into()));
    }
    if (r.0.position() as usize) != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after checkpoint".into()));
    }
    Ok(ckpt)
}

pub fn save_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(ckpt);
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
