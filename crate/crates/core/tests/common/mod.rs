#![allow(dead_code)]

use toucan::synth::rng;
use toucan::Tensor3;

/// I.i.d. standard Gaussian tensor from its own stream.
pub fn gaussian(n1: usize, n2: usize, n3: usize, seed: u64) -> Tensor3 {
    let mut g = rng::substream(seed, 1000);
    Tensor3::from_fn(n1, n2, n3, |_, _, _| rng::gaussian(&mut g))
}

pub fn rel_err(a: &Tensor3, b: &Tensor3) -> f64 {
    let d = a.sub(b).unwrap().frobenius_norm();
    let n = b.frobenius_norm();
    if n == 0.0 {
        d
    } else {
        d / n
    }
}
