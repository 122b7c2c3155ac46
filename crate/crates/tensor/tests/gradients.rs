//! Finite-difference checks for every differentiable operator (float64).

use panorect_tensor::conv::{self, conv2d};
use panorect_tensor::gradcheck::{all_indices, check_gradients};
use panorect_tensor::nn::{self, AttentionWeights, BatchNormState};
use panorect_tensor::sample::grid_sample;
use panorect_tensor::{loss, Conv2dOpts, HorizontalWrap, PadMode, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_param(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::param((0..n).map(|_| rng.random_range(-scale..scale)).collect(), shape).unwrap()
}

/// Fixed random projection so vector-valued ops reduce to a scalar with
/// non-uniform output gradients.
fn project(y: &Tensor, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..y.numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = Tensor::from_vec(w, y.shape()).unwrap();
    y.mul(&w).unwrap().sum()
}

const FLOOR: f64 = 1e-7;

#[test]
fn conv2d_all_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (k, stride, pad, groups, mode) in [
        (3, 1, 1, 1, PadMode::CircularH),
        (3, 1, 1, 1, PadMode::Zero),
        (2, 2, 0, 1, PadMode::Zero),
        (7, 1, 3, 4, PadMode::CircularH),
        (1, 1, 0, 2, PadMode::Zero),
        (4, 4, 0, 1, PadMode::Zero),
    ] {
        let x = rand_param(&mut rng, &[4, 8, 16], 1.0);
        let w = rand_param(&mut rng, &[6 - 2 * (groups == 4) as usize, 4 / groups, k, k], 0.5);
        let b = rand_param(&mut rng, &[w.shape()[0]], 0.5);
        let opts = Conv2dOpts { stride, padding: pad, groups, pad_mode: mode };
        let inputs = [x.clone(), w.clone(), b.clone()];
        let r = check_gradients(
            &inputs,
            || Ok(project(&conv2d(&x, &w, Some(&b), opts)?, 7)),
            // Affine in each input: no truncation error, so a wide step only
            // reduces cancellation noise.
            1e-3,
            all_indices,
        )
        .unwrap();
        assert!(r.max_rel_err(FLOOR) <= 1e-6, "k={k} s={stride}: {:?}", r.worst(FLOOR));
    }
}

#[test]
fn linear_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = rand_param(&mut rng, &[5, 7], 1.0);
    let w = rand_param(&mut rng, &[3, 7], 1.0);
    let b = rand_param(&mut rng, &[3], 1.0);
    let inputs = [x.clone(), w.clone(), b.clone()];
    let r = check_gradients(&inputs, || Ok(project(&nn::linear(&x, &w, Some(&b))?, 3)), 1e-3, all_indices).unwrap();
    assert!(r.max_rel_err(FLOOR) <= 1e-6, "{:?}", r.worst(FLOOR));
}

#[test]
fn linear_identity_and_token_axis_projection() {
    let x = Tensor::from_vec((0..12).map(f64::from).collect(), &[3, 4]).unwrap();
    let mut eye = vec![0.0; 16];
    for i in 0..4 {
        eye[i * 5] = 1.0;
    }
    let y = nn::linear(&x, &Tensor::from_vec(eye, &[4, 4]).unwrap(), Some(&Tensor::zeros(&[4]))).unwrap();
    assert_eq!(y.to_vec(), x.to_vec());

    // 384 tokens × 768 dims projected along the token axis to 512 rows.
    let tokens = Tensor::zeros(&[384, 768]);
    let proj = Tensor::zeros(&[512, 384]);
    let out = nn::linear(&tokens.t().unwrap(), &proj, None).unwrap().t().unwrap();
    assert_eq!(out.shape(), &[512, 768]);
}

#[test]
fn activations_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // Keep away from the ReLU kink.
    let vals: Vec<f64> = (0..40)
        .map(|_| {
            let v: f64 = rng.random_range(-3.0..3.0);
            if v.abs() < 0.05 { v + 0.1 } else { v }
        })
        .collect();
    type Act = fn(&Tensor) -> Tensor;
    let acts: [(&str, Act, f64); 5] = [
        ("relu", nn::relu, 1e-6),
        ("gelu", nn::gelu, 1e-4),
        ("elu", nn::elu, 1e-6),
        ("sigmoid", nn::sigmoid, 1e-6),
        ("tanh", nn::tanh, 1e-6),
    ];
    for (name, f, tol) in acts {
        let x = Tensor::param(vals.clone(), &[5, 8]).unwrap();
        let r = check_gradients(std::slice::from_ref(&x), || Ok(project(&f(&x), 4)), 1e-6, all_indices).unwrap();
        assert!(r.max_rel_err(FLOOR) <= tol, "{name}: {:?}", r.worst(FLOOR));
    }
    let x = Tensor::param(vals, &[5, 8]).unwrap();
    let r = check_gradients(std::slice::from_ref(&x), || Ok(project(&nn::softmax(&x)?, 5)), 1e-6, all_indices).unwrap();
    assert!(r.max_rel_err(FLOOR) <= 1e-6, "softmax: {:?}", r.worst(FLOOR));
}

#[test]
fn elementwise_math_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = Tensor::param((0..12).map(|_| rng.random_range(0.5..2.0)).collect(), &[3, 4]).unwrap();
    let b = Tensor::param((0..4).map(|_| rng.random_range(0.5..2.0)).collect(), &[4]).unwrap();
    let inputs = [a.clone(), b.clone()];
    let f = || {
        let t = a.mul(&b)?.add(&a.sqrt())?.div(&b.exp())?;
        let u = a.atan2(&b)?.add(&a.ln())?.add(&a.sin().mul(&b.cos())?)?;
        let v = a.log10().add(&a.recip())?.sub(&b.abs())?;
        Ok(project(&t.add(&u)?.add(&v)?, 9))
    };
    let r = check_gradients(&inputs, f, 1e-6, all_indices).unwrap();
    assert!(r.max_rel_err(FLOOR) <= 1e-6, "{:?}", r.worst(FLOOR));
}

#[test]
fn norms_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_param(&mut rng, &[3, 4, 5], 2.0);
    let g = rand_param(&mut rng, &[3, 1, 1], 1.0);
    let b = rand_param(&mut rng, &[3, 1, 1], 1.0);
    let inputs = [x.clone(), g.clone(), b.clone()];
    let r = check_gradients(&inputs, || Ok(project(&nn::layer_norm(&x, 0, &g, &b)?, 1)), 1e-6, all_indices).unwrap();
    assert!(r.max_rel_err(FLOOR) <= 1e-4, "layer_norm: {:?}", r.worst(FLOOR));

    let r = check_gradients(
        &inputs,
        || {
            let mut st = BatchNormState::new(3);
            Ok(project(&nn::batch_norm(&x, &g, &b, &mut st, true)?, 2))
        },
        1e-6,
        all_indices,
    )
    .unwrap();
    assert!(r.max_rel_err(FLOOR) <= 1e-4, "batch_norm: {:?}", r.worst(FLOOR));
}

#[test]
fn attention_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut p = |r: usize, c: usize| rand_param(&mut rng, &[r, c], 0.5);
    let w = AttentionWeights {
        wq: p(12, 12),
        bq: p(1, 12).reshape(&[12]).unwrap().detach(),
        wk: p(12, 12),
        bk: p(1, 12).reshape(&[12]).unwrap().detach(),
        wv: p(12, 12),
        bv: p(1, 12).reshape(&[12]).unwrap().detach(),
        wo: p(12, 12),
        bo: p(1, 12).reshape(&[12]).unwrap().detach(),
    };
    let x = p(6, 12);
    let inputs = [x.clone(), w.wq.clone(), w.wk.clone(), w.wv.clone(), w.wo.clone()];
    let r = check_gradients(
        &inputs,
        || Ok(project(&nn::multi_head_attention(&x, 3, &w)?.0, 8)),
        1e-6,
        all_indices,
    )
    .unwrap();
    assert!(r.max_rel_err(FLOOR) <= 1e-3, "{:?}", r.worst(FLOOR));
}

#[test]
fn spatial_rearrangements_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = rand_param(&mut rng, &[8, 4, 6], 1.0);
    let y = rand_param(&mut rng, &[3, 8, 12], 1.0);
    let inputs = [x.clone(), y.clone()];
    let f = || {
        let a = conv::pixel_shuffle(&x, 2)?; // 2×8×12
        let b = conv::pixel_unshuffle(&y, 2)?; // 12×4×6
        let c = conv::nearest_upsample(&b.narrow(0, 0, 2)?, 2)?; // 2×8×12
        let d = Tensor::concat(&[a.clone(), c], 0)?;
        let e = conv::global_avg_pool(&d)?.mul(&Tensor::full(&[4, 1, 1], 1.0))?;
        let f = conv::pad_wrap_replicate(&x, 1)?;
        let g = conv::roll_columns(&y, 5)?;
        Ok(project(&d, 1)
            .add(&project(&e, 2))?
            .add(&project(&f, 3))?
            .add(&project(&g, 4))?
            .add(&project(&x.permute(&[2, 0, 1])?, 5))?)
    };
    let r = check_gradients(&inputs, f, 1e-6, all_indices).unwrap();
    assert!(r.max_rel_err(FLOOR) <= 1e-6, "{:?}", r.worst(FLOOR));
}

#[test]
fn grid_sample_gradcheck_image_and_coords() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let img = rand_param(&mut rng, &[2, 6, 10], 1.0);
    // Non-integer coordinates, including ones that wrap horizontally.
    let mut cv = Vec::new();
    for _ in 0..12 {
        let u: f64 = rng.random_range(-1.0..11.0);
        cv.push(if (u - u.round()).abs() < 0.05 { u + 0.2 } else { u });
    }
    for _ in 0..12 {
        let v: f64 = rng.random_range(0.2..4.8);
        cv.push(if (v - v.round()).abs() < 0.05 { v + 0.2 } else { v });
    }
    let coords = Tensor::param(cv, &[2, 3, 4]).unwrap();
    let inputs = [img.clone(), coords.clone()];
    for wrap in [HorizontalWrap::Circular, HorizontalWrap::Clamp] {
        let r = check_gradients(&inputs, || Ok(project(&grid_sample(&img, &coords, wrap)?, 2)), 1e-6, all_indices)
            .unwrap();
        assert!(r.max_rel_err(FLOOR) <= 1e-4, "{wrap:?}: {:?}", r.worst(FLOOR));
    }
}

#[test]
fn losses_gradcheck() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = rand_param(&mut rng, &[20], 2.0);
    let b = rand_param(&mut rng, &[20], 2.0).detach();
    let inputs = [a.clone()];
    for (name, f) in [
        ("l1", Box::new(|| loss::l1(&a, &b)) as Box<dyn Fn() -> _>),
        ("mse", Box::new(|| loss::mse(&a, &b))),
        ("smooth_l1", Box::new(|| loss::smooth_l1(&a, &b, 1.0))),
    ] {
        let r = check_gradients(&inputs, &f, 1e-6, all_indices).unwrap();
        assert!(r.max_rel_err(FLOOR) <= 1e-6, "{name}: {:?}", r.worst(FLOOR));
    }
}

#[test]
fn backward_is_bit_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = rand_param(&mut rng, &[4, 8, 16], 1.0);
        let w = rand_param(&mut rng, &[4, 4, 3, 3], 1.0);
        let y = nn::gelu(&conv2d(&x, &w, None, Conv2dOpts::same(3, PadMode::CircularH)).unwrap());
        let l = conv::global_avg_pool(&y).unwrap().square().sum();
        l.backward().unwrap();
        (x.grad().unwrap(), w.grad().unwrap())
    };
    let (a, b) = (run(), run());
    let bits = |v: &Vec<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.0), bits(&b.0));
    assert_eq!(bits(&a.1), bits(&b.1));
}
