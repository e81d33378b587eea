//! Finite-difference checks for every tape primitive and the GRU unroll.

use deepsc_core::tensor::{
    bidirectional_gru, gru_cell, GruWeights, Padding, ParameterSet, Partition, Result, Tape,
    Tensor, Var,
};

use super::{finite_difference, max_rel_err, random_tensor, rng};

pub const STEP: f64 = 1e-4;

type Build = dyn Fn(&mut Tape, &[Var]) -> Result<Var>;

/// Builds `loss = Σ out ⊙ R` for a fixed random `R` and compares the tape
/// gradient of every input against central differences.
pub fn check(shapes: &[&[usize]], seed: u64, build: &Build) -> f64 {
    let mut r = rng(seed);
    let mut params = ParameterSet::new();
    let names: Vec<String> = (0..shapes.len()).map(|i| format!("x{i}")).collect();
    for (name, shape) in names.iter().zip(shapes) {
        params
            .insert(name, Partition::SemanticEncoder, random_tensor(shape, &mut r))
            .unwrap();
    }
    let probe = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = names.iter().map(|n| tape.param(&params, n).unwrap()).collect();
        let out = build(&mut tape, &vars).unwrap();
        random_tensor(tape.shape(out), &mut r)
    };
    let loss_of = |p: &ParameterSet| -> (Tape, Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = names.iter().map(|n| tape.param(p, n).unwrap()).collect();
        let out = build(&mut tape, &vars).unwrap();
        let w = tape.constant(probe.clone()).unwrap();
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum(prod).unwrap();
        (tape, loss)
    };
    let (tape, loss) = loss_of(&params);
    let analytic = tape.backward(loss, &params).unwrap();
    let numeric = finite_difference(&params, STEP, |p| {
        let (t, l) = loss_of(p);
        t.value(l).data()[0]
    });
    max_rel_err(&analytic, &numeric)
}

fn gru_weights(v: &[Var]) -> GruWeights {
    GruWeights {
        w: v[0],
        u_zr: v[1],
        u_h: v[2],
        b: v[3],
    }
}

/// (name, max relative error) for every primitive.
pub fn primitive_report() -> Vec<(&'static str, f64)> {
    let mut out: Vec<(&'static str, f64)> = vec![
        ("matmul", check(&[&[3, 4], &[4, 5]], 1, &|t, v| t.matmul(v[0], v[1]))),
        ("add_bias", check(&[&[3, 4], &[4]], 2, &|t, v| t.add_bias(v[0], v[1]))),
        ("add", check(&[&[2, 3], &[2, 3]], 3, &|t, v| t.add(v[0], v[1]))),
        ("sub", check(&[&[2, 3], &[2, 3]], 4, &|t, v| t.sub(v[0], v[1]))),
        ("mul", check(&[&[2, 3], &[2, 3]], 5, &|t, v| t.mul(v[0], v[1]))),
        ("one_minus", check(&[&[5]], 6, &|t, v| t.one_minus(v[0]))),
        (
            "conv2d_same_stride21",
            check(&[&[1, 4, 6], &[2, 1, 3, 3], &[2]], 7, &|t, v| {
                t.conv2d(v[0], v[1], v[2], (2, 1), Padding::Same)
            }),
        ),
        (
            "conv2d_same_stride11",
            check(&[&[2, 4, 6], &[3, 2, 3, 3], &[3]], 8, &|t, v| {
                t.conv2d(v[0], v[1], v[2], (1, 1), Padding::Same)
            }),
        ),
        (
            "conv2d_valid_stride22",
            check(&[&[1, 5, 7], &[2, 1, 3, 3], &[2]], 9, &|t, v| {
                t.conv2d(v[0], v[1], v[2], (2, 2), Padding::Valid)
            }),
        ),
        ("relu", check(&[&[4, 5]], 10, &|t, v| t.relu(v[0]))),
        ("tanh", check(&[&[4, 5]], 11, &|t, v| t.tanh(v[0]))),
        ("sigmoid", check(&[&[4, 5]], 12, &|t, v| t.sigmoid(v[0]))),
        ("softmax", check(&[&[3, 29]], 13, &|t, v| t.softmax(v[0]))),
        ("log_softmax", check(&[&[3, 29]], 13, &|t, v| t.log_softmax(v[0]))),
        ("reshape", check(&[&[2, 6]], 14, &|t, v| t.reshape(v[0], &[3, 4]))),
        (
            "concat_axis0",
            check(&[&[2, 3], &[1, 3]], 15, &|t, v| t.concat(&[v[0], v[1]], 0)),
        ),
        (
            "concat_axis1",
            check(&[&[2, 3], &[2, 2]], 16, &|t, v| t.concat(&[v[0], v[1]], 1)),
        ),
        ("slice", check(&[&[3, 5]], 17, &|t, v| t.slice(v[0], 1, 1, 3))),
        ("sum", check(&[&[3, 2]], 18, &|t, v| t.sum(v[0]))),
        ("sum_squares", check(&[&[3, 2]], 19, &|t, v| t.sum_squares(v[0]))),
        (
            "power_normalize",
            check(&[&[3, 4]], 20, &|t, v| t.power_normalize(v[0])),
        ),
        (
            "complex_scale",
            check(&[&[3, 4]], 21, &|t, v| t.complex_scale(v[0], 0.3, -1.7)),
        ),
    ];
    out.push((
        "gru_cell_3_steps",
        check(&[&[3, 9], &[3, 6], &[3, 3], &[9], &[3, 3]], 22, &|t, v| {
            let weights = gru_weights(v);
            let mut h = t.constant(Tensor::zeros(&[1, 3]))?;
            for step in 0..3 {
                let x = t.slice(v[4], 0, step, 1)?;
                h = gru_cell(t, x, h, &weights)?;
            }
            Ok(h)
        }),
    ));
    out.push((
        "bidirectional_gru",
        check(
            &[&[2, 6], &[2, 4], &[2, 2], &[6], &[2, 6], &[2, 4], &[2, 2], &[6], &[4, 2]],
            23,
            &|t, v| {
                let fw = gru_weights(&v[0..4]);
                let bw = gru_weights(&v[4..8]);
                bidirectional_gru(t, v[8], &fw, &bw)
            },
        ),
    ));
    out
}
