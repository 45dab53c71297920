//! Builds a two-layer classifier on the tape, checks its gradients against
//! central differences, then shows what the gradient-reversal layer does to
//! the gradient that reaches its input.
//!
//! ```text
//! cargo run --release --example autodiff_gradcheck
//! ```

use dann::autodiff::gradcheck::check_gradients;
use dann::autodiff::{glorot_uniform, GrlConfig, ParamStore, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> dann::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Tensor::new(vec![6, 4], (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let labels = [0, 1, 2, 1, 0, 2];

    let mut store = ParamStore::new();
    let w1 = store.add("w1", glorot_uniform(&mut rng, &[4, 5], 4, 5), true);
    let b1 = store.add("b1", Tensor::zeros(&[1, 5]), true);
    let w2 = store.add("w2", glorot_uniform(&mut rng, &[5, 3], 5, 3), true);

    let report = check_gradients(&mut store, &[w1, b1, w2], 1e-5, 1e-4, |tape, store| {
        let input = tape.constant(x.clone())?;
        let (w1, b1, w2) = (tape.param(store, w1)?, tape.param(store, b1)?, tape.param(store, w2)?);
        let h = tape.matmul(input, w1)?;
        let h = tape.add(h, b1)?;
        let h = tape.tanh(h)?;
        let logits = tape.matmul(h, w2)?;
        tape.cross_entropy(logits, &labels)
    })?;
    println!(
        "{} gradient entries checked, max relative error {:.2e} (at {} [{}])",
        report.checked,
        report.max_rel_err,
        report.worst_param.as_deref().unwrap_or("-"),
        report.worst_index
    );

    for lambda in [0.0, 0.5, 1.0] {
        let mut store = ParamStore::new();
        let z = store.add("z", Tensor::vector(vec![1.0, -2.0, 3.0]), true);
        let mut tape = Tape::new();
        let zv = tape.param(&store, z)?;
        let r = tape.grl(zv, GrlConfig::new(lambda)?)?;
        let loss = tape.sum(r, None)?;
        let forward = tape.value(r).data().to_vec();
        tape.backward(loss, &mut store)?;
        println!("lambda {lambda}: forward {forward:?}, gradient at the input {:?}", store.grad(z).data());
    }
    Ok(())
}
