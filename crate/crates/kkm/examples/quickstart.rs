use kkm::data::gen_blobs;
use kkm::init::Init;
use kkm::kernels::{Kernel, KernelSpec};
use kkm::solver::truncated::{truncated_fit, TauSpec, TruncatedConfig};
use kkm::solver::{LearningRate, StopRule};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = gen_blobs(2000, 10, 2, 1.0, 5)?;
    let spec = KernelSpec::Gaussian { kappa: 2.0 };
    let kernel = Kernel::new(&spec, &ds)?;
    let cfg = TruncatedConfig {
        k: 10,
        b: 512,
        tau: TauSpec::Fixed(200),
        max_iters: 60,
        epsilon: 0.0,
        lr: LearningRate::SqrtRatio,
        stop: StopRule::Improvement,
        init: Init::KmeansPp,
        incremental_self_ip: false,
    };
    let fit = truncated_fit(&kernel, &cfg, &mut ChaCha12Rng::seed_from_u64(7))?;
    println!(
        "{} iters, cost {:.4}",
        fit.iters_run,
        fit.state.full_cost(&kernel)
    );
    Ok(())
}
