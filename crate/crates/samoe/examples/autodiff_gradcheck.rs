//! Reverse-mode autodiff in isolation: build a small composed network,
//! backpropagate, and compare every gradient against central finite
//! differences.

use samoe::gradcheck::{check_gradients, DEFAULT_STEP};
use samoe::graph::Graph;
use samoe::params::ParamSet;
use samoe::tensor::Tensor;
use samoe::Result;

fn main() -> Result<()> {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7);
    let mut params = ParamSet::new();
    params.add("w1", Tensor::randn(vec![4, 6], 0.5, &mut rng))?;
    params.add("b1", Tensor::randn(vec![1, 6], 0.5, &mut rng))?;
    params.add("w2", Tensor::randn(vec![6, 3], 0.5, &mut rng))?;
    params.add("gain", Tensor::full(vec![1, 4], 1.0))?;
    params.add("bias", Tensor::zeros(vec![1, 4]))?;

    let x = Tensor::randn(vec![2, 4], 1.0, &mut rng);

    // loss = sum(softmax(tanh(layernorm(x) @ w1 + b1) @ w2)^2)
    let forward = |p: &ParamSet| -> Result<f64> {
        let g = Graph::eval();
        let input = g.constant(x.clone());
        let normed = input.layer_norm(
            &g.param(p, p.id_of("gain")?),
            &g.param(p, p.id_of("bias")?),
            1e-5,
        )?;
        let hidden = normed
            .matmul(&g.param(p, p.id_of("w1")?))?
            .add_bias_row(&g.param(p, p.id_of("b1")?))?
            .tanh();
        let probs = hidden.matmul(&g.param(p, p.id_of("w2")?))?.softmax_rows()?;
        Ok(probs.mul(&probs)?.sum_all().item())
    };

    // Analytic gradients via the tape.
    let g = Graph::train();
    let input = g.constant(x.clone());
    let normed = input.layer_norm(
        &g.param(&params, params.id_of("gain")?),
        &g.param(&params, params.id_of("bias")?),
        1e-5,
    )?;
    let hidden = normed
        .matmul(&g.param(&params, params.id_of("w1")?))?
        .add_bias_row(&g.param(&params, params.id_of("b1")?))?
        .tanh();
    let probs = hidden
        .matmul(&g.param(&params, params.id_of("w2")?))?
        .softmax_rows()?;
    let loss = probs.mul(&probs)?.sum_all();
    println!("loss = {:.6}", loss.item());
    let grads = g.backward(loss, params.len())?;

    let report = check_gradients(&mut params, &forward, &grads, DEFAULT_STEP, 64, 0)?;
    println!(
        "checked {} entries, max relative error {:.3e}",
        report.entries_checked, report.max_rel_err
    );
    if let Some((name, idx, analytic, numeric)) = &report.worst {
        println!("worst entry: {name}[{idx}] analytic={analytic:.9} numeric={numeric:.9}");
    }
    assert!(report.passes(1e-4));
    println!("gradient check passed at 1e-4");
    Ok(())
}
