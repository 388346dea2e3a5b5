//! `WTA1` checkpoint files.
//!
//! Layout (little-endian): magic, `u32` length of a UTF-8 `key=value` config
//! block (training config plus `sigma` and `epoch`), `u32` tensor count, then
//! per tensor a `u8` name length, the name, `u32` rank, `u32` extents and the
//! values as `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayD, IxDyn};

use super::model::{ModelParams, ParamSet, PARAM_NAMES};
use super::schedule::ScheduleState;
use super::TrainConfig;
use crate::bits::{
    expect_magic, read_bytes, read_f32, read_u32, read_u8, write_f32, write_u32, write_u8,
};
use crate::error::{Error, Result};

const WTA_MAGIC: &[u8; 4] = b"WTA1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub schedule: ScheduleState,
    pub epoch: usize,
    pub params: ModelParams,
}

fn tensors(p: &ModelParams) -> Vec<(&'static str, Vec<usize>, &[f64])> {
    let shapes = p.weights.shapes();
    let mut out: Vec<_> = PARAM_NAMES
        .iter()
        .zip(shapes)
        .zip(p.weights.slices())
        .map(|((n, s), d)| (*n, s, d))
        .collect();
    out.push((
        "running_mean",
        vec![p.running_mean.len()],
        p.running_mean.as_slice().expect("contiguous"),
    ));
    out.push((
        "running_var",
        vec![p.running_var.len()],
        p.running_var.as_slice().expect("contiguous"),
    ));
    out
}

pub fn write_checkpoint<W: Write>(c: &Checkpoint, mut w: W) -> Result<()> {
    w.write_all(WTA_MAGIC)?;
    let block = format!(
        "{}sigma={}\nepoch={}\n",
        c.config.to_kv(),
        c.schedule.sigma,
        c.epoch
    );
    write_u32(&mut w, block.len() as u32)?;
    w.write_all(block.as_bytes())?;
    let ts = tensors(&c.params);
    write_u32(&mut w, ts.len() as u32)?;
    for (name, shape, data) in ts {
        write_u8(&mut w, name.len() as u8)?;
        w.write_all(name.as_bytes())?;
        write_u32(&mut w, shape.len() as u32)?;
        for &s in &shape {
            write_u32(&mut w, s as u32)?;
        }
        for &v in data {
            write_f32(&mut w, v as f32)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn take2(t: ArrayD<f64>, name: &str) -> Result<Array2<f64>> {
    t.into_dimensionality()
        .map_err(|_| Error::Format(format!("tensor {name} is not a matrix")))
}

fn take1(t: ArrayD<f64>, name: &str) -> Result<Array1<f64>> {
    t.into_dimensionality()
        .map_err(|_| Error::Format(format!("tensor {name} is not a vector")))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Checkpoint> {
    expect_magic(&mut r, WTA_MAGIC)?;
    let len = read_u32(&mut r, "config length")? as usize;
    let block = String::from_utf8(read_bytes(&mut r, len, "config block")?)
        .map_err(|_| Error::Format("config block is not UTF-8".into()))?;
    let config = TrainConfig::from_kv(&block)?;
    let field = |key: &str| -> Result<&str> {
        block
            .lines()
            .find_map(|l| l.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
            .ok_or_else(|| Error::Format(format!("checkpoint lacks {key}")))
    };
    let sigma: f64 = field("sigma")?
        .parse()
        .map_err(|_| Error::Format("bad sigma".into()))?;
    let epoch: usize = field("epoch")?
        .parse()
        .map_err(|_| Error::Format("bad epoch".into()))?;

    let count = read_u32(&mut r, "tensor count")? as usize;
    let mut named = std::collections::HashMap::new();
    for _ in 0..count {
        let nlen = usize::from(read_u8(&mut r, "tensor name length")?);
        let name = String::from_utf8(read_bytes(&mut r, nlen, "tensor name")?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rank = read_u32(&mut r, "tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u32(&mut r, "tensor extent")? as usize);
        }
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from(read_f32(&mut r, "tensor data")?));
        }
        let t =
            ArrayD::from_shape_vec(IxDyn(&shape), data).map_err(|e| Error::Shape(e.to_string()))?;
        named.insert(name, t);
    }
    let mut take = |name: &str| {
        named
            .remove(name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name}")))
    };
    let weights = ParamSet {
        w_h: take2(take("w_h")?, "w_h")?,
        b_h: take1(take("b_h")?, "b_h")?,
        w_l: take2(take("w_l")?, "w_l")?,
        b_l: take1(take("b_l")?, "b_l")?,
        bn_gain: take1(take("bn_gain")?, "bn_gain")?,
        bn_shift: take1(take("bn_shift")?, "bn_shift")?,
        w_f: take2(take("w_f")?, "w_f")?,
        b_f: take1(take("b_f")?, "b_f")?,
    };
    let running_mean = take1(take("running_mean")?, "running_mean")?;
    let running_var = take1(take("running_var")?, "running_var")?;

    let (d, hidden, k) = (
        weights.w_h.nrows(),
        weights.w_h.ncols(),
        weights.w_l.ncols(),
    );
    let expected = ParamSet::zeros(d, hidden, k).shapes();
    if weights.shapes() != expected || running_mean.len() != k || running_var.len() != k {
        return Err(Error::Shape("inconsistent checkpoint tensor shapes".into()));
    }
    Ok(Checkpoint {
        schedule: ScheduleState::at_sigma(sigma, config.alpha),
        config,
        epoch,
        params: ModelParams {
            weights,
            running_mean,
            running_var,
        },
    })
}

pub fn save_checkpoint(c: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(c, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
