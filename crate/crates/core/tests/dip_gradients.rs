mod support;

use pact_core::decoder::{init_decoder, sample_input, DecoderArch, DecoderParams};
use pact_core::dip::{dc_gradient, dip_gradient, dip_loss, sp_gradient, tv_gradient_smoothed, DipConfig};
use pact_core::{
    apply_mask, make_grid, make_mask, make_sensor_array, ChannelMask, ForwardGeometry, Image, MaskScheme,
    PaOperator, Point, Sinogram,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::fd::{central_diff, norm, rel_err, rel_err_floor};

struct Problem {
    op: PaOperator,
    mask: ChannelMask,
    b: Sinogram,
    f_d: Image,
}

fn random_image(rng: &mut ChaCha8Rng, op: &PaOperator, lo: f64, hi: f64) -> Image {
    let grid = op.geometry().grid;
    Image::from_values(grid, (0..grid.len()).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// 16x16 problem with measurements of unit peak.
fn problem(seed: u64) -> Problem {
    let grid = make_grid(16, 16, 0.01).unwrap();
    let ring = make_sensor_array(8, 0.006, Point::ORIGIN).unwrap();
    let mut op = PaOperator::new(ForwardGeometry::new(grid, ring, 1500.0).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = random_image(&mut rng, &op, 0.0, 1.0);
    let mask = make_mask(8, 0.5, MaskScheme::Uniform, 0).unwrap();
    let clean = apply_mask(&op.forward(&truth).unwrap(), &mask).unwrap();
    let peak = clean.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    op.set_gain(1.0 / peak).unwrap();
    let mut b = apply_mask(&op.forward(&truth).unwrap(), &mask).unwrap();
    for v in b.data.iter_mut() {
        *v += rng.random_range(-0.05..0.05);
    }
    let f_d = random_image(&mut rng, &op, 0.0, 1.0);
    Problem { op, mask, b, f_d }
}

fn with_values(x: &Image, v: &[f64]) -> Image {
    Image::from_values(x.grid, v.to_vec()).unwrap()
}

#[test]
fn dc_gradient_matches_finite_differences() {
    let p = problem(1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_image(&mut rng, &p.op, -1.0, 1.0);
    let (g, loss) = dc_gradient(&x, &p.b, &p.mask, &p.op).unwrap();
    assert!(loss > 0.0);
    let fd = central_diff(&mut x.values.clone(), 1e-4, |v| {
        dc_gradient(&with_values(&x, v), &p.b, &p.mask, &p.op).unwrap().1
    });
    let err = rel_err(&fd, &g.values);
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn smoothed_tv_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = make_grid(16, 16, 1.0).unwrap();
    let x = Image::from_values(grid, (0..256).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    for eps in [1e-1, 1e-3, 1e-6] {
        let (g, _) = tv_gradient_smoothed(&x, eps).unwrap();
        let fd = central_diff(&mut x.values.clone(), 1e-7, |v| {
            tv_gradient_smoothed(&with_values(&x, v), eps).unwrap().1
        });
        let err = rel_err(&fd, &g.values);
        assert!(err < 1e-4, "eps {eps}: relative error {err:e}");
    }
}

#[test]
fn shape_prior_gradient_matches_finite_differences() {
    let p = problem(4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_image(&mut rng, &p.op, -1.0, 1.0);
    let (g, _) = sp_gradient(&x, &p.f_d).unwrap();
    let fd = central_diff(&mut x.values.clone(), 1e-3, |v| sp_gradient(&with_values(&x, v), &p.f_d).unwrap().1);
    assert!(rel_err(&fd, &g.values) < 1e-10);
}

fn tiny() -> DecoderArch {
    DecoderArch {
        channels: vec![4, 4],
        input_hw: 4,
        output_hw: 16,
        upsample_blocks: vec![1, 2],
    }
}

fn perturbed(seed: u64) -> DecoderParams {
    let mut p = init_decoder(&tiny(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
    for t in p.params_mut() {
        if !t.name.ends_with(".weight") {
            for v in t.data.iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
    }
    p
}

#[test]
fn end_to_end_parameter_gradient_matches_finite_differences() {
    let prob = problem(6);
    let z = sample_input(&tiny(), 8);
    let params = perturbed(2);
    for (l1, l2) in [(0.0, 0.0), (0.3, 0.0), (0.3, 0.5)] {
        let cfg = DipConfig {
            lambda1: l1,
            lambda2: l2,
            tv_epsilon: 1e-2,
            arch: tiny(),
            ..DipConfig::default()
        };
        let (grads, _, rec) = dip_gradient(&params, &z, &prob.b, &prob.mask, &prob.op, &prob.f_d, &cfg).unwrap();
        let direct = dip_loss(&params, &z, &prob.b, &prob.mask, &prob.op, &prob.f_d, &cfg).unwrap();
        assert_eq!(rec, direct);
        // biases ahead of a normalization have zero gradient; judge those against the whole
        let floor = 1e-5 * norm(&grads.grads.concat());
        for (idx, t) in params.params.iter().enumerate() {
            let mut q = params.clone();
            let fd = central_diff(&mut t.data.clone(), 1e-6, |v| {
                q.params_mut()[idx].data.copy_from_slice(v);
                dip_loss(&q, &z, &prob.b, &prob.mask, &prob.op, &prob.f_d, &cfg).unwrap().total
            });
            let err = rel_err_floor(&fd, &grads.grads[idx], floor);
            assert!(err < 1e-4, "({l1}, {l2}) {}: relative error {err:e}", t.name);
        }
    }
}
