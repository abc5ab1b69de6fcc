//! GRU and dense layers expressed as tape operations.

use super::params::{Init, ParamStore};
use super::real::Real;
use super::tape::{Tape, Var};
use super::tensor::Activation;
use crate::error::{Error, Result};

/// Parameter names of one GRU under `prefix`, with shapes and initializers.
pub fn gru_specs(prefix: &str, input: usize, hidden: usize) -> Vec<(String, Vec<usize>, Init)> {
    let mut specs = Vec::with_capacity(9);
    for gate in ["z", "r", "h"] {
        specs.push((format!("{prefix}.w_{gate}"), vec![input, hidden], Init::Xavier));
        specs.push((format!("{prefix}.u_{gate}"), vec![hidden, hidden], Init::Xavier));
        specs.push((format!("{prefix}.b_{gate}"), vec![hidden], Init::Zeros));
    }
    specs
}

pub fn dense_specs(prefix: &str, input: usize, output: usize) -> Vec<(String, Vec<usize>, Init)> {
    vec![
        (format!("{prefix}.w"), vec![input, output], Init::Xavier),
        (format!("{prefix}.b"), vec![output], Init::Zeros),
    ]
}

/// GRU weights bound on a tape.
#[derive(Debug, Clone, Copy)]
pub struct Gru {
    w_z: Var,
    u_z: Var,
    b_z: Var,
    w_r: Var,
    u_r: Var,
    b_r: Var,
    w_h: Var,
    u_h: Var,
    b_h: Var,
    hidden: usize,
}

impl Gru {
    pub fn bind<R: Real>(tape: &mut Tape<R>, store: &ParamStore<R>, prefix: &str) -> Result<Self> {
        let mut get = |n: &str| tape.bind(store, &format!("{prefix}.{n}"));
        let (w_z, u_z, b_z) = (get("w_z")?, get("u_z")?, get("b_z")?);
        let (w_r, u_r, b_r) = (get("w_r")?, get("u_r")?, get("b_r")?);
        let (w_h, u_h, b_h) = (get("w_h")?, get("u_h")?, get("b_h")?);
        let hidden = tape.value(u_z).shape()[0];
        Ok(Self {
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_h,
            u_h,
            b_h,
            hidden,
        })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn gate<R: Real>(&self, tape: &mut Tape<R>, x: Var, h: Var, w: Var, u: Var, b: Var) -> Result<Var> {
        let xw = tape.matmul(x, w)?;
        let hu = tape.matmul(h, u)?;
        let sum = tape.add(xw, hu)?;
        tape.add_bias(sum, b)
    }

    /// One step over a batch: `x [B×e_in]`, `h [B×e]`.
    ///
    /// z = σ(x·Wz + h·Uz + bz), r = σ(x·Wr + h·Ur + br),
    /// ĥ = tanh(x·Wh + (r⊙h)·Uh + bh), h' = z⊙h + (1−z)⊙ĥ
    pub fn step<R: Real>(&self, tape: &mut Tape<R>, x: Var, h: Var) -> Result<Var> {
        if tape.value(h).last_dim() != self.hidden {
            return Err(Error::shape(
                "gru_step",
                format!("state width {} vs hidden {}", tape.value(h).last_dim(), self.hidden),
            ));
        }
        let z_pre = self.gate(tape, x, h, self.w_z, self.u_z, self.b_z)?;
        let z = tape.sigmoid(z_pre);
        let r_pre = self.gate(tape, x, h, self.w_r, self.u_r, self.b_r)?;
        let r = tape.sigmoid(r_pre);
        let rh = tape.mul(r, h)?;
        let cand_pre = self.gate(tape, x, rh, self.w_h, self.u_h, self.b_h)?;
        let cand = tape.tanh(cand_pre);
        let keep = tape.mul(z, h)?;
        let one_minus_z = tape.one_minus(z);
        let fresh = tape.mul(one_minus_z, cand)?;
        tape.add(keep, fresh)
    }

    /// Runs the cell over `xs` (each `[B×e_in]`). `mask[t][b] == false`
    /// carries row `b`'s previous state through step `t` unchanged. Returns
    /// every state and the final one.
    pub fn sequence<R: Real>(
        &self,
        tape: &mut Tape<R>,
        xs: &[Var],
        h0: Var,
        mask: &[Vec<bool>],
    ) -> Result<(Vec<Var>, Var)> {
        if xs.len() != mask.len() {
            return Err(Error::shape("gru_sequence", format!("{} inputs, {} mask steps", xs.len(), mask.len())));
        }
        let mut h = h0;
        let mut states = Vec::with_capacity(xs.len());
        for (&x, m) in xs.iter().zip(mask) {
            if m.iter().any(|&k| k) {
                let next = self.step(tape, x, h)?;
                h = if m.iter().all(|&k| k) {
                    next
                } else {
                    tape.select_rows(next, h, m)?
                };
            }
            states.push(h);
        }
        Ok((states, h))
    }
}

/// Dense layer bound on a tape.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    w: Var,
    b: Var,
}

impl Dense {
    pub fn bind<R: Real>(tape: &mut Tape<R>, store: &ParamStore<R>, prefix: &str) -> Result<Self> {
        Ok(Self {
            w: tape.bind(store, &format!("{prefix}.w"))?,
            b: tape.bind(store, &format!("{prefix}.b"))?,
        })
    }

    /// `activation(x·W + b)` for `x [M×n_in]`.
    pub fn apply<R: Real>(&self, tape: &mut Tape<R>, x: Var, act: Activation) -> Result<Var> {
        let xw = tape.matmul(x, self.w)?;
        let y = tape.add_bias(xw, self.b)?;
        Ok(match act {
            Activation::None => y,
            Activation::Tanh => tape.tanh(y),
        })
    }
}
