use candle_core::{Tensor, Var};
use candle_nn::VarMap;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn is_running_stat(name: &str) -> bool {
    name.ends_with("running_mean") || name.ends_with("running_var")
}

/// Overwrites every variable in `varmap` from a seeded generator so model
/// construction is reproducible. Weights of rank >= 2 get He-uniform values
/// from their fan-in, biases and running means get zero, norm scales and
/// running variances get one.
pub fn reinitialize(varmap: &VarMap, seed: u64) -> candle_core::Result<()> {
    let data = varmap.data().lock().expect("varmap lock poisoned");
    let mut names: Vec<&String> = data.keys().collect();
    names.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for name in names {
        let var = &data[name];
        let dims = var.dims().to_vec();
        let n: usize = dims.iter().product();
        let values: Vec<f32> = if name.ends_with("running_mean") {
            vec![0.0; n]
        } else if name.ends_with("running_var") {
            vec![1.0; n]
        } else if dims.len() <= 1 {
            if name.ends_with("bias") {
                vec![0.0; n]
            } else {
                vec![1.0; n]
            }
        } else {
            let fan_in: usize = dims[1..].iter().product();
            let bound = (6.0 / fan_in as f32).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("bound is positive");
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        };
        var.set(&Tensor::from_vec(values, dims.as_slice(), var.device())?)?;
    }
    Ok(())
}

/// Variables the optimizer should update: everything except normalization
/// running statistics.
pub fn trainable_vars(varmap: &VarMap) -> Vec<Var> {
    let data = varmap.data().lock().expect("varmap lock poisoned");
    let mut named: Vec<(&String, &Var)> = data.iter().filter(|(k, _)| !is_running_stat(k)).collect();
    named.sort_by(|a, b| a.0.cmp(b.0));
    named.into_iter().map(|(_, v)| v.clone()).collect()
}
