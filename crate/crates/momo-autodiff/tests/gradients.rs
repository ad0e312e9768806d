//! Gradient oracle: analytic backward passes vs central finite differences,
//! plus determinism and linearity properties of the recorded ops.

use momo_autodiff::{finite_diff_check, AdamHyper, AdamState, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n: usize = shape.iter().product();
    // Magnitudes in [0.2, 1.2] keep leaf values away from the kinks of
    // |x| and the relu family.
    let data: Vec<f64> = (0..n)
        .map(|_| {
            let mag = 0.2 + rng.gen::<f64>();
            if rng.gen::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Identity coercion helper: nudges closure inference toward the
/// higher-ranked `for<'t>` signature the checker wants.
fn graph<F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>>(f: F) -> F {
    f
}

#[test]
fn primitive_ops_pass_finite_difference_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut reports = Vec::new();

    let a = rand_tensor(&mut rng, vec![3, 5]);
    let b = rand_tensor(&mut rng, vec![3, 5]);
    reports.push(finite_diff_check(
        "add_mul_abs",
        &[a.clone(), b.clone()],
        H,
        graph(|_t, v| v[0].add(v[1]).mul(v[0]).abs().sum()),
    ));
    reports.push(finite_diff_check(
        "sub_mean",
        &[a.clone(), b.clone()],
        H,
        graph(|_t, v| v[0].sub(v[1]).mean()),
    ));
    reports.push(finite_diff_check(
        "affine_leaky",
        &[a.clone()],
        H,
        graph(|_t, v| v[0].affine(1.7, -0.3).leaky_relu(0.2).sum()),
    ));
    reports.push(finite_diff_check(
        "sigmoid_clamp_ln",
        &[a.clone()],
        H,
        graph(|_t, v| v[0].sigmoid().clamp(1e-7, 1.0 - 1e-7).ln().mean()),
    ));
    reports.push(finite_diff_check(
        "matmul",
        &[rand_tensor(&mut rng, vec![3, 4]), rand_tensor(&mut rng, vec![4, 2])],
        H,
        graph(|_t, v| v[0].matmul(v[1]).sum()),
    ));
    reports.push(finite_diff_check(
        "maxpool_time",
        &[a.clone()],
        H,
        graph(|_t, v| v[0].maxpool_time().sum()),
    ));
    reports.push(finite_diff_check(
        "upsample_concat",
        &[a.clone(), b.clone()],
        H,
        graph(|_t, v| {
            Var::concat_rows(&[v[0].upsample2(), v[1].upsample2()])
                .abs()
                .mean()
        }),
    ));
    reports.push(finite_diff_check(
        "reflect_pad",
        &[a.clone()],
        H,
        graph(|_t, v| v[0].reflect_pad(3).sum()),
    ));
    reports.push(finite_diff_check(
        "conv1d_s1",
        &[rand_tensor(&mut rng, vec![2, 6]), rand_tensor(&mut rng, vec![3, 2, 3]), rand_tensor(&mut rng, vec![3])],
        H,
        graph(|_t, v| v[0].conv1d(v[1], Some(v[2]), 1, 1).unwrap().abs().sum()),
    ));
    reports.push(finite_diff_check(
        "conv1d_s2",
        &[rand_tensor(&mut rng, vec![2, 8]), rand_tensor(&mut rng, vec![2, 2, 4]), rand_tensor(&mut rng, vec![2])],
        H,
        graph(|_t, v| v[0].conv1d(v[1], Some(v[2]), 2, 3).unwrap().abs().sum()),
    ));
    reports.push(finite_diff_check(
        "rotate_project",
        &[rand_tensor(&mut rng, vec![6, 4])],
        H,
        graph(|_t, v| {
            v[0].rotate_project([[0.8, -0.6, 0.1], [0.2, 0.9, -0.4]])
                .abs()
                .sum()
        }),
    ));
    reports.push(finite_diff_check(
        "repeat_time_slice",
        &[rand_tensor(&mut rng, vec![4])],
        H,
        graph(|_t, v| v[0].repeat_cols(5).time_slice(3).sum()),
    ));
    reports.push(finite_diff_check(
        "cosine",
        &[rand_tensor(&mut rng, vec![6]), rand_tensor(&mut rng, vec![6])],
        H,
        graph(|_t, v| v[0].cosine_similarity(v[1])),
    ));

    for r in &reports {
        assert!(
            r.passes(TOL),
            "{}: max rel err {:.3e} over {} coords",
            r.name,
            r.max_rel_err,
            r.checked
        );
    }
}

#[test]
fn random_composite_graphs_pass_finite_difference_checks() {
    // 100 random compositions of the primitive set, checked against central
    // differences.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for case in 0..100 {
        let rows = 2 + (case % 3);
        let cols = 4 + (case % 5);
        let x = rand_tensor(&mut rng, vec![rows, cols]);
        let y = rand_tensor(&mut rng, vec![rows, cols]);
        let ops: Vec<u8> = (0..4).map(|_| rng.gen_range(0..7u8)).collect();
        let report = finite_diff_check(
            &format!("composite_{case}"),
            &[x, y],
            H,
            graph(move |_t, v| {
                let mut h = v[0].mul(v[1]);
                for &op in &ops {
                    h = match op {
                        0 => h.leaky_relu(0.2),
                        1 => h.abs(),
                        2 => h.affine(0.7, 0.1),
                        3 => h.add(v[0]),
                        4 => h.sub(v[1]),
                        5 => h.sigmoid(),
                        _ => h.mul(v[1]),
                    };
                }
                h.mean()
            }),
        );
        assert!(
            report.passes(TOL),
            "{}: max rel err {:.3e}",
            report.name,
            report.max_rel_err
        );
    }
}

#[test]
fn conv1d_small_case_matches_direct_summation() {
    // C=2, T=6, k=3 against an explicit triple loop.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let input = rand_tensor(&mut rng, vec![2, 6]);
    let kernel = rand_tensor(&mut rng, vec![2, 2, 3]);
    let tape = Tape::new();
    let x = tape.constant(input.clone());
    let k = tape.constant(kernel.clone());
    let out = x.conv1d(k, None, 1, 0).unwrap().value();
    assert_eq!(out.shape(), &[2, 4]);
    for co in 0..2 {
        for t in 0..4 {
            let mut acc = 0.0;
            for ci in 0..2 {
                for kk in 0..3 {
                    acc += kernel.data()[(co * 2 + ci) * 3 + kk] * input.data()[ci * 6 + t + kk];
                }
            }
            let got = out.data()[co * 4 + t];
            assert!((got - acc).abs() < 1e-12, "({co},{t}): {got} vs {acc}");
        }
    }
}

#[test]
fn conv1d_is_linear_in_its_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = rand_tensor(&mut rng, vec![3, 10]);
    let y = rand_tensor(&mut rng, vec![3, 10]);
    let kernel = rand_tensor(&mut rng, vec![4, 3, 5]);
    let (a, b) = (1.3, -0.6);

    let apply = |input: Tensor| -> Vec<f64> {
        let tape = Tape::new();
        let x = tape.constant(input);
        let k = tape.constant(kernel.clone());
        x.conv1d(k, None, 2, 2).unwrap().value().into_data()
    };

    let mut mixed = x.clone();
    for (m, (&xv, &yv)) in mixed.data_mut().iter_mut().zip(x.data().iter().zip(y.data())) {
        *m = a * xv + b * yv;
    }
    let lhs = apply(mixed);
    let fx = apply(x);
    let fy = apply(y);
    for i in 0..lhs.len() {
        let rhs = a * fx[i] + b * fy[i];
        assert!((lhs[i] - rhs).abs() < 1e-10, "index {i}");
    }
}

#[test]
fn identical_tapes_produce_bit_identical_gradients() {
    let run = || -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_tensor(&mut rng, vec![3, 8]);
        let k = rand_tensor(&mut rng, vec![2, 3, 4]);
        let tape = Tape::new();
        let xv = tape.param(x);
        let kv = tape.param(k);
        let loss = xv
            .conv1d(kv, None, 2, 1)
            .unwrap()
            .leaky_relu(0.2)
            .abs()
            .mean();
        loss.backward().unwrap();
        let mut out = xv.grad().unwrap().into_data();
        out.extend(kv.grad().unwrap().into_data());
        out
    };
    let a = run();
    let b = run();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn adam_minimizes_1d_quadratic_below_1e6_within_2000_steps() {
    // loss(p) = 0.5 * a (p - c)^2 with minimum at p = c.
    let (a, c) = (3.0, 0.8);
    let mut state = AdamState::new(AdamHyper::with_alpha(2e-2), &[1]);
    let mut p = vec![-1.5];
    for _ in 0..2000 {
        let g = vec![a * (p[0] - c)];
        state.apply(&mut [&mut p], &[&g], |_| "p".into()).unwrap();
    }
    let loss = 0.5 * a * (p[0] - c) * (p[0] - c);
    assert!(loss < 1e-6, "final loss {loss}, p {}", p[0]);
}
