//! Shared workloads for the benchmarks.

use pyramid_core::clstm::ClstmParams;
use pyramid_core::network::{Activation, Architecture, LayerSpec};
use pyramid_core::{Dims, Network, Volume};

/// Deterministic pseudo-random fill in `[-1, 1]`.
fn wiggle(i: usize) -> f64 {
    ((i as f64 * 12.9898).sin() * 43758.5453).fract()
}

pub fn volume(dims: Dims) -> Volume {
    let mut v = Volume::zeros(dims).expect("valid dims");
    v.data_mut().iter_mut().enumerate().for_each(|(i, x)| *x = wiggle(i));
    v
}

pub fn params(input: usize, hidden: usize, filter: usize) -> ClstmParams {
    let mut p = ClstmParams::zeros(input, hidden, filter, filter);
    let mut i = 0;
    for t in p.tensors_mut() {
        for w in t.iter_mut() {
            *w = 0.2 * wiggle(i + 7);
            i += 1;
        }
    }
    p
}

/// The reduced two-pyramid network used for the toy task.
pub fn toy_network() -> Network {
    let arch = Architecture {
        input_channels: 1,
        filter: 3,
        layers: vec![
            LayerSpec::Pyramid { hidden: 4 },
            LayerSpec::Fc { units: 8, activation: Activation::Tanh },
            LayerSpec::Pyramid { hidden: 8 },
            LayerSpec::Fc { units: 2, activation: Activation::Softmax },
        ],
    };
    Network::init_uniform(&arch, 1).expect("valid architecture")
}
