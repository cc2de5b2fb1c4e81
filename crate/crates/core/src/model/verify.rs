//! Finite-difference checks of every layer type and of small complete
//! networks, at double precision.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{build_model, input_tensor, Activation, FcnConfig, ADAPTIVE_N};
use crate::error::Result;
use crate::features::{FeatureKind, FeatureMatrix, FrameParams};
use crate::nn::{gradient_check, ActivationFn, BaseActivation, Fault, GradCheckOptions, Tape, Tensor, Var};

/// Tolerance on the maximum relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct LayerCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_f64(shape, &data).expect("shape matches data")
}

/// Scalar loss through a fixed random projection of `y`.
fn project(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let n = tape.value(y)?.len();
    let flat = tape.flatten(y)?;
    let w = tape.constant(random(&[1, n], seed));
    let b = tape.constant(Tensor::zeros(&[1])?);
    let z = tape.dense(flat, w, b)?;
    tape.sum(z)
}

type Build = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;

fn cases() -> Result<Vec<(String, Vec<(String, Tensor<f64>)>, Build)>> {
    let mut out: Vec<(String, Vec<(String, Tensor<f64>)>, Build)> = Vec::new();
    let x = random(&[5, 6, 2], 1);
    for k in [3usize, 1] {
        let xc = x.clone();
        out.push((
            format!("conv{k}x{k}"),
            vec![("kernel".into(), random(&[3, 2, k, k], 2)), ("bias".into(), random(&[3], 3))],
            Box::new(move |t, p| {
                let xi = t.constant(xc.clone());
                let y = t.conv2d(xi, p[0], p[1])?;
                project(t, y, 4)
            }),
        ));
    }
    out.push((
        "maxpool".into(),
        vec![("x".into(), random(&[4, 6, 2], 5))],
        Box::new(|t, p| {
            let y = t.maxpool2(p[0])?;
            project(t, y, 6)
        }),
    ));
    out.push((
        "gap".into(),
        vec![("x".into(), random(&[3, 4, 3], 7))],
        Box::new(|t, p| {
            let y = t.global_avg_pool(p[0])?;
            project(t, y, 8)
        }),
    ));
    for (name, f) in [("relu", ActivationFn::Relu), ("tanh", ActivationFn::Tanh)] {
        out.push((
            name.into(),
            vec![("x".into(), random(&[4, 4, 2], 9))],
            Box::new(move |t, p| {
                let y = t.activate(p[0], f)?;
                project(t, y, 10)
            }),
        ));
    }
    out.push((
        "adaptive".into(),
        vec![("x".into(), random(&[12], 11)), ("slope".into(), Tensor::from_f64(&[1], &[0.1])?)],
        Box::new(|t, p| {
            let f = ActivationFn::Adaptive {
                base: BaseActivation::Tanh,
                slope: p[1],
                n: ADAPTIVE_N as f64,
            };
            let y = t.activate(p[0], f)?;
            project(t, y, 12)
        }),
    ));
    out.push((
        "dropout-off".into(),
        vec![("x".into(), random(&[10], 13))],
        Box::new(|t, p| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let y = t.dropout(p[0], 0.4, false, &mut rng)?;
            project(t, y, 14)
        }),
    ));
    out.push((
        "softmax+ce".into(),
        vec![("logits".into(), random(&[6], 15))],
        Box::new(|t, p| {
            let s = t.softmax(p[0])?;
            t.cross_entropy(s, 2)
        }),
    ));

    let values = random(&[16 * 12], 16).into_data();
    let fm = FeatureMatrix::new(FeatureKind::MelDb, 16, 12, FrameParams::default(), 44100, values)?;
    let input: Tensor<f64> = input_tensor(&fm)?;
    for act in Activation::ALL {
        let cfg = FcnConfig::canonical(3, 16).with_widths(vec![4, 8, 4, 3]).with_activation(act);
        let model = build_model(cfg, vec!["a".into(), "b".into(), "c".into()], 17)?;
        let params = model.params().iter().map(|(n, t)| (n.clone(), t.cast())).collect();
        let inp = input.clone();
        out.push((
            format!("fcn-{act}"),
            params,
            Box::new(move |t, p| {
                let mut rng = ChaCha8Rng::seed_from_u64(18);
                let xi = t.constant(inp.clone());
                let y = model.graph(t, p, xi, true, &mut rng)?;
                t.cross_entropy(y, 1)
            }),
        ));
    }
    Ok(out)
}

/// Runs every check. `fault` corrupts the analytic conv gradients, which
/// the conv and network checks must then report.
pub fn gradcheck_suite(fault: Option<Fault>) -> Result<Vec<LayerCheck>> {
    let opts = GradCheckOptions {
        fault,
        ..GradCheckOptions::default()
    };
    cases()?
        .into_iter()
        .map(|(name, params, build)| {
            let r = gradient_check(&params, |t, v| build(t, v), &opts)?;
            Ok(LayerCheck {
                name,
                max_rel_error: r.max_rel_error(),
                checked: r.params.iter().map(|p| p.checked).sum(),
                skipped: r.params.iter().map(|p| p.skipped).sum(),
            })
        })
        .collect()
}
