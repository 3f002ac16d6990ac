//! The two-dimensional bowl network: values, input gradients that gain an
//! increment as each rectifier switches on, and midpoint convexity.

use reslab::lab::experiments::{bowl_net, BOWL_PROBES};
use reslab::Result;

pub fn run_example() -> Result<Vec<f64>> {
    let net = bowl_net();
    let mut values = Vec::new();
    for (x, expected) in BOWL_PROBES {
        let v = net.value(&x)?;
        println!("f({x:?}) = {v} (hand value {expected})");
        values.push(v);
    }
    for x in [[1.0, 1.0], [2.5, 1.0], [1.0, 2.5], [2.5, 2.5]] {
        println!("grad f({x:?}) = {:?}", net.input_gradient(&x)?);
    }
    let (a, b) = ([0.5, 3.0], [3.5, 0.0]);
    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    println!("f(mid) = {} <= {} = mean of endpoints", net.value(&mid)?, 0.5 * (net.value(&a)? + net.value(&b)?));
    Ok(values)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
