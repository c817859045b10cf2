//! Versioned binary checkpoints of [`EnsembleState`].
//!
//! Layout (all integers little-endian, floats as raw IEEE-754 bits, so a
//! round trip is bit-exact):
//!
//! ```text
//! magic "TDUC" | version u32 | prior_scale f64 | obs_dim u64 |
//! num_actions u64 | active_head u64 | num_heads u64 | heads...
//! head:  opt_steps u64 | online net | target net | prior net |
//!        prior_target net | adam
//! adam:  lr f64 | beta1 f64 | beta2 f64 | eps f64 | t u64 | m net | v net
//! net:   num_layers u64 | (rows u64 | cols u64 | weights f64* | bias f64*)*
//! ```

use std::io::{Read, Write};

use crate::agents::ensemble::{EnsembleState, Head};
use crate::error::{Error, Result};
use crate::nn::{AdamState, LayerParams, MlpGrad, MlpParams};

const MAGIC: &[u8; 4] = b"TDUC";
const VERSION: u32 = 1;

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn write_layers(w: &mut impl Write, layers: &[LayerParams]) -> Result<()> {
    write_u64(w, layers.len() as u64)?;
    for l in layers {
        write_u64(w, l.rows as u64)?;
        write_u64(w, l.cols as u64)?;
        for &v in &l.weights {
            write_f64(w, v)?;
        }
        for &v in &l.bias {
            write_f64(w, v)?;
        }
    }
    Ok(())
}

fn read_layers(r: &mut impl Read) -> Result<Vec<LayerParams>> {
    let n = read_u64(r)? as usize;
    if n == 0 || n > 1024 {
        return Err(Error::invalid("checkpoint: implausible layer count"));
    }
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let rows = read_u64(r)? as usize;
        let cols = read_u64(r)? as usize;
        if rows == 0 || cols == 0 || rows.saturating_mul(cols) > 1 << 28 {
            return Err(Error::invalid("checkpoint: implausible layer shape"));
        }
        let mut weights = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            weights.push(read_f64(r)?);
        }
        let mut bias = Vec::with_capacity(rows);
        for _ in 0..rows {
            bias.push(read_f64(r)?);
        }
        layers.push(LayerParams {
            weights,
            bias,
            rows,
            cols,
        });
    }
    Ok(layers)
}

fn write_adam(w: &mut impl Write, adam: &AdamState) -> Result<()> {
    write_f64(w, adam.lr)?;
    write_f64(w, adam.beta1)?;
    write_f64(w, adam.beta2)?;
    write_f64(w, adam.eps)?;
    write_u64(w, adam.t)?;
    write_layers(w, &adam.m.layers)?;
    write_layers(w, &adam.v.layers)
}

fn read_adam(r: &mut impl Read) -> Result<AdamState> {
    Ok(AdamState {
        lr: read_f64(r)?,
        beta1: read_f64(r)?,
        beta2: read_f64(r)?,
        eps: read_f64(r)?,
        t: read_u64(r)?,
        m: MlpGrad {
            layers: read_layers(r)?,
        },
        v: MlpGrad {
            layers: read_layers(r)?,
        },
    })
}

/// Serialise an ensemble to `w`.
pub fn save_ensemble(ens: &EnsembleState, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_f64(w, ens.prior_scale)?;
    write_u64(w, ens.obs_dim as u64)?;
    write_u64(w, ens.num_actions as u64)?;
    write_u64(w, ens.active_head as u64)?;
    write_u64(w, ens.heads.len() as u64)?;
    for h in &ens.heads {
        write_u64(w, h.opt_steps)?;
        write_layers(w, &h.online.layers)?;
        write_layers(w, &h.target.layers)?;
        write_layers(w, &h.prior.layers)?;
        write_layers(w, &h.prior_target.layers)?;
        write_adam(w, &h.adam)?;
    }
    Ok(())
}

/// Read an ensemble back from `r`.
pub fn load_ensemble(r: &mut impl Read) -> Result<EnsembleState> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::invalid("not a checkpoint file"));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    let version = u32::from_le_bytes(ver);
    if version != VERSION {
        return Err(Error::invalid(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let prior_scale = read_f64(r)?;
    let obs_dim = read_u64(r)? as usize;
    let num_actions = read_u64(r)? as usize;
    let active_head = read_u64(r)? as usize;
    let num_heads = read_u64(r)? as usize;
    if num_heads == 0 || num_heads > 1 << 16 {
        return Err(Error::invalid("checkpoint: implausible head count"));
    }
    if active_head >= num_heads {
        return Err(Error::invalid("checkpoint: active head out of range"));
    }
    let mut heads = Vec::with_capacity(num_heads);
    for _ in 0..num_heads {
        let opt_steps = read_u64(r)?;
        let online = MlpParams {
            layers: read_layers(r)?,
        };
        let target = MlpParams {
            layers: read_layers(r)?,
        };
        let prior = MlpParams {
            layers: read_layers(r)?,
        };
        let prior_target = MlpParams {
            layers: read_layers(r)?,
        };
        let adam = read_adam(r)?;
        heads.push(Head {
            online,
            target,
            prior,
            prior_target,
            adam,
            opt_steps,
        });
    }
    Ok(EnsembleState {
        heads,
        active_head,
        prior_scale,
        obs_dim,
        num_actions,
    })
}
