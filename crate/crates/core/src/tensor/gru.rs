//! Gated recurrent units built from tape primitives.
//!
//! Gate layout along the projection axis is `[update z | reset r | candidate]`:
//!
//! ```text
//! z  = σ(x·W_z + h·U_z + b_z)
//! r  = σ(x·W_r + h·U_r + b_r)
//! h̃  = tanh(x·W_h + (r ⊙ h)·U_h + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h̃
//! ```

use rand::Rng;

use super::{glorot_uniform, ParameterSet, Partition, Result, Tape, Tensor, TensorError, Var};

/// Tape handles for one GRU direction.
#[derive(Clone, Copy, Debug)]
pub struct GruWeights {
    /// `[input, 3H]`
    pub w: Var,
    /// `[H, 2H]`, recurrent weights of the z and r gates.
    pub u_zr: Var,
    /// `[H, H]`, recurrent weights of the candidate.
    pub u_h: Var,
    /// `[3H]`
    pub b: Var,
}

impl GruWeights {
    /// Adds `{prefix}.w`, `.u_zr`, `.u_h` and `.b` to `params`.
    pub fn init_params<R: Rng + ?Sized>(
        params: &mut ParameterSet,
        prefix: &str,
        input: usize,
        hidden: usize,
        partition: Partition,
        rng: &mut R,
    ) -> Result<()> {
        let h = hidden;
        params.insert(
            &format!("{prefix}.w"),
            partition,
            glorot_uniform(&[input, 3 * h], input, 3 * h, rng),
        )?;
        params.insert(
            &format!("{prefix}.u_zr"),
            partition,
            glorot_uniform(&[h, 2 * h], h, 2 * h, rng),
        )?;
        params.insert(
            &format!("{prefix}.u_h"),
            partition,
            glorot_uniform(&[h, h], h, h, rng),
        )?;
        params.insert(&format!("{prefix}.b"), partition, Tensor::zeros(&[3 * h]))
    }

    pub fn record(tape: &mut Tape, params: &ParameterSet, prefix: &str) -> Result<Self> {
        Ok(GruWeights {
            w: tape.param(params, &format!("{prefix}.w"))?,
            u_zr: tape.param(params, &format!("{prefix}.u_zr"))?,
            u_h: tape.param(params, &format!("{prefix}.u_h"))?,
            b: tape.param(params, &format!("{prefix}.b"))?,
        })
    }

    pub fn hidden(&self, tape: &Tape) -> usize {
        tape.shape(self.u_h)[0]
    }
}

/// One GRU step for `x_t: [1, input]` and `h_prev: [1, H]`.
pub fn gru_cell(tape: &mut Tape, x_t: Var, h_prev: Var, weights: &GruWeights) -> Result<Var> {
    let xw = tape.matmul(x_t, weights.w)?;
    let proj = tape.add_bias(xw, weights.b)?;
    step(tape, proj, h_prev, weights)
}

fn step(tape: &mut Tape, proj: Var, h_prev: Var, weights: &GruWeights) -> Result<Var> {
    let h = weights.hidden(tape);
    if tape.shape(h_prev) != [1, h] || tape.shape(proj) != [1, 3 * h] {
        return Err(TensorError::ShapeMismatch {
            op: "gru_cell",
            detail: format!(
                "state {:?} / projection {:?} for {h} units",
                tape.shape(h_prev),
                tape.shape(proj)
            ),
        });
    }
    let xz = tape.slice(proj, 1, 0, h)?;
    let xr = tape.slice(proj, 1, h, h)?;
    let xh = tape.slice(proj, 1, 2 * h, h)?;
    let hzr = tape.matmul(h_prev, weights.u_zr)?;
    let hz = tape.slice(hzr, 1, 0, h)?;
    let hr = tape.slice(hzr, 1, h, h)?;
    let z_pre = tape.add(xz, hz)?;
    let z = tape.sigmoid(z_pre)?;
    let r_pre = tape.add(xr, hr)?;
    let r = tape.sigmoid(r_pre)?;
    let gated = tape.mul(r, h_prev)?;
    let rec = tape.matmul(gated, weights.u_h)?;
    let cand_pre = tape.add(xh, rec)?;
    let cand = tape.tanh(cand_pre)?;
    let keep = tape.one_minus(z)?;
    let kept = tape.mul(keep, h_prev)?;
    let fresh = tape.mul(z, cand)?;
    tape.add(kept, fresh)
}

/// Runs a GRU over the rows of `xs: [T, input]` from a zero state. The
/// returned states are indexed by input row, also when `reverse` is set.
pub fn gru_sequence(
    tape: &mut Tape,
    xs: Var,
    weights: &GruWeights,
    reverse: bool,
) -> Result<Vec<Var>> {
    let steps = tape.shape(xs)[0];
    let h = weights.hidden(tape);
    // Input projections for all steps in one product.
    let xw = tape.matmul(xs, weights.w)?;
    let proj = tape.add_bias(xw, weights.b)?;
    let mut state = tape.constant(Tensor::zeros(&[1, h]))?;
    let mut out = vec![state; steps];
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..steps).rev())
    } else {
        Box::new(0..steps)
    };
    for t in order {
        let proj_t = tape.slice(proj, 0, t, 1)?;
        state = step(tape, proj_t, state, weights)?;
        out[t] = state;
    }
    Ok(out)
}

/// Forward and backward GRU passes concatenated per step: `[T, 2H]`.
pub fn bidirectional_gru(
    tape: &mut Tape,
    xs: Var,
    forward: &GruWeights,
    backward: &GruWeights,
) -> Result<Var> {
    let fw = gru_sequence(tape, xs, forward, false)?;
    let bw = gru_sequence(tape, xs, backward, true)?;
    let fw = tape.concat(&fw, 0)?;
    let bw = tape.concat(&bw, 0)?;
    tape.concat(&[fw, bw], 1)
}
