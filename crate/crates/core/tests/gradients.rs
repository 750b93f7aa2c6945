//! Analytic gradients against central differences.

use pyramid_core::clstm::{sweep_backward, sweep_forward, ClstmParams, Direction};
use pyramid_core::network::{Activation, Architecture, LayerSpec, Network};
use pyramid_core::oracle::finite_diff;
use pyramid_core::volume::{Axis, Dims, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_volume(rng: &mut ChaCha8Rng, dims: Dims) -> Volume {
    Volume::from_fn(dims, |_, _, _, _| rng.random_range(-1.0..1.0)).unwrap()
}

fn random_params(rng: &mut ChaCha8Rng, c: usize, o: usize, k: usize) -> ClstmParams {
    let mut p = ClstmParams::zeros(c, o, k, k);
    for t in p.tensors_mut() {
        t.iter_mut().for_each(|w| *w = rng.random_range(-0.5..0.5));
    }
    p
}

fn flat(p: &ClstmParams) -> Vec<f64> {
    p.tensors().concat()
}

fn unflat(template: &ClstmParams, v: &[f64]) -> ClstmParams {
    let mut p = template.clone();
    let mut rest = v;
    for t in p.tensors_mut() {
        let (a, b) = rest.split_at(t.len());
        t.copy_from_slice(a);
        rest = b;
    }
    p
}

/// `|a − n| / max(|a|, |n|)`, with differences below `floor` treated as exact.
fn rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let diff = (a - n).abs();
            if diff <= floor {
                0.0
            } else {
                diff / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}

#[test]
fn sweep_gradients_all_directions() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let dims = Dims::new(4, 4, 3, 2);
    let h = 1e-5;
    for dir in Direction::ALL {
        let x = random_volume(&mut rng, dims);
        let p = random_params(&mut rng, 2, 2, 3);
        let dh = random_volume(&mut rng, dims.with_channels(2));
        let objective = |x: &Volume, p: &ClstmParams| sweep_forward(x, p, dir).unwrap().0.dot(&dh).unwrap();

        let (_, cache) = sweep_forward(&x, &p, dir).unwrap();
        let (dx, dp) = sweep_backward(&cache, &p, &dh).unwrap();

        let num_p = finite_diff(|v| objective(&x, &unflat(&p, v)), &flat(&p), h);
        let num_x = finite_diff(
            |v| objective(&Volume::from_vec(dims, v.to_vec()).unwrap(), &p),
            x.data(),
            h,
        );
        let ep = rel_err(&flat(&dp), &num_p, 1e-9);
        let ex = rel_err(dx.data(), &num_x, 1e-9);
        assert!(ep <= 1e-5 && ex <= 1e-5, "{dir}: params {ep:e}, input {ex:e}");
    }
}

#[test]
fn depth_one_gradients_have_no_recurrent_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let dims = Dims::new(3, 4, 1, 2);
    let x = random_volume(&mut rng, dims);
    let p = random_params(&mut rng, 2, 2, 3);
    let dh = random_volume(&mut rng, dims.with_channels(2));
    let (_, cache) = sweep_forward(&x, &p, Direction::new(Axis::Z, true)).unwrap();
    let (_, dp) = sweep_backward(&cache, &p, &dh).unwrap();
    // hidden-to-hidden kernels and the forget gate never act on a single plane
    for k in [&dp.theta_hi, &dp.theta_hf, &dp.theta_hc, &dp.theta_ho, &dp.theta_xf] {
        assert!(k.weights.iter().all(|&v| v == 0.0));
    }
    assert!(dp.bias_f.values.iter().all(|&v| v == 0.0));

    // compare against the gradient of the recurrence-free gated layer
    let gated = |v: &[f64]| {
        let q = unflat(&p, v);
        pyramid_core::oracle::recurrence_free_gated(&x, &q, Axis::Z).dot(&dh).unwrap()
    };
    let num = finite_diff(gated, &flat(&p), 1e-5);
    assert!(rel_err(&flat(&dp), &num, 1e-9) <= 1e-5);
}

#[test]
fn network_end_to_end_gradient() {
    let arch = Architecture {
        input_channels: 1,
        filter: 3,
        layers: vec![
            LayerSpec::Pyramid { hidden: 2 },
            LayerSpec::Fc { units: 2, activation: Activation::Softmax },
        ],
    };
    let net = Network::init_uniform(&arch, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let x = random_volume(&mut rng, Dims::new(3, 3, 2, 1));
    let dy = random_volume(&mut rng, Dims::new(3, 3, 2, 2));
    let (_, cache) = net.forward(&x).unwrap();
    let grads = net.backward(&cache, &dy).unwrap();
    let mut probe = net.clone();
    let num = finite_diff(
        |v| {
            probe.set_flat(v).unwrap();
            probe.predict(&x).unwrap().dot(&dy).unwrap()
        },
        &net.to_flat(),
        1e-5,
    );
    let err = rel_err(&grads.to_flat(), &num, 1e-9);
    assert!(err <= 1e-5, "{err:e}");
}
