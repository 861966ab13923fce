//! Shared fixtures for unit tests.

use crate::system::{Alphabets, KernelSpec, SystemSpec};

/// Noiseless loop: binary everything, n = 2, uniform message, `x_i = x0`,
/// `y_i = x_i`, `e_i = y_i`. Exactly two trajectories of mass 0.5.
pub fn nl_spec() -> SystemSpec {
    SystemSpec {
        alphabets: Alphabets::new(2, 2, 2, 2),
        horizon: 2,
        message_prior: vec![0.5, 0.5],
        encoder: KernelSpec::Repetition,
        forward_channel: KernelSpec::Identity,
        feedback_channel: KernelSpec::Identity,
    }
}

/// Like [`nl_spec`] but the encoder always emits 0: the loop carries no
/// message information.
pub fn const_spec() -> SystemSpec {
    SystemSpec {
        encoder: KernelSpec::Constant { value: 0 },
        ..nl_spec()
    }
}

/// Like [`nl_spec`] but the forward channel is a binary symmetric channel
/// with crossover 0.1.
pub fn bsc01_spec() -> SystemSpec {
    SystemSpec {
        forward_channel: KernelSpec::Bsc { eps: 0.1 },
        ..nl_spec()
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    let mut h = 0.0;
    for q in [p, 1.0 - p] {
        if q > 0.0 {
            h -= q * q.log2();
        }
    }
    h
}
