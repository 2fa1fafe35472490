//! Compute the training losses for a perfect, a noisy and a uniform prediction.

use roadlayout::grid::GridSpec;
use roadlayout::render::render;
use roadlayout::scene::{sample, SampleRanges};
use roadlayout::supervision::{
    encode_targets, full_loss, grid_ce_loss, tpp_loss, AttributePrediction, ClassProbabilities,
    LossWeights, DEFAULT_SIGMA_BINS,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GridSpec::default();
    let theta = sample(3, &SampleRanges::default())?;
    let targets = encode_targets(&theta, DEFAULT_SIGMA_BINS)?;
    let bev = render(&theta, &spec)?;

    let perfect = AttributePrediction::from_targets(&targets);
    let mut noisy = perfect.clone();
    for p in &mut noisy.binary {
        *p = 0.8 * *p + 0.1;
    }
    let uniform = AttributePrediction {
        binary: vec![0.5; 14],
        multiclass: vec![vec![1.0 / 6.0; 6]; 2],
        regression: vec![vec![0.01; 100]; 10],
    };

    let exact = ClassProbabilities::one_hot(&bev);
    let flat = ClassProbabilities::uniform(spec.rows, spec.cols);
    for (name, pred, probs) in [("perfect", &perfect, &exact), ("noisy", &noisy, &exact), ("uniform", &uniform, &flat)] {
        let tpp = tpp_loss(pred, &targets)?;
        let ts = grid_ce_loss(probs, &bev)?;
        let loss = full_loss(tpp, ts, ts, LossWeights::default())?;
        println!("{name:8} tpp {:.4}  ts {:.4}  ps {:.4}  total {:.4}", loss.tpp, loss.ts, loss.ps, loss.total);
    }
    Ok(())
}
