//! Finite-difference check of the full training loss at 64-bit.

use bbf_autodiff::gradcheck;
use bbf_core::losses::{total_loss, LossConfig};
use bbf_core::network::{init_params, ArchitectureSpec};
use bbf_core::replay::{Batch, ReplayBuffer, ReplayConfig};
use bbf_core::rng::stream;
use rand::Rng as _;

pub fn tiny_spec() -> ArchitectureSpec {
    ArchitectureSpec {
        input_channels: 8,
        input_height: 6,
        input_width: 6,
        width_scale: 1,
        base_channels: [2, 3, 3],
        latent_dim: 6,
        num_actions: 3,
        num_atoms: 5,
        v_min: -2.0,
        v_max: 2.0,
        dueling: true,
        use_spr: true,
        spr_horizon: 2,
    }
}

fn batch(spec: &ArchitectureSpec) -> Batch {
    let frame_len = 2 * spec.input_height * spec.input_width;
    let cfg = ReplayConfig {
        capacity: 64,
        stack_depth: 4,
        ..ReplayConfig::default()
    };
    let mut replay = ReplayBuffer::new(cfg, frame_len).unwrap();
    let mut rng = stream(3, 0);
    for t in 0..40 {
        let frame: Vec<f32> = (0..frame_len).map(|_| rng.random::<f32>()).collect();
        let terminal = t % 13 == 12;
        replay
            .append(&frame, rng.random_range(0..spec.num_actions), rng.random_range(-1.0..1.0), terminal, t / 13)
            .unwrap();
    }
    replay.sample(4, 3, 0.9, spec.spr_horizon, &mut rng).unwrap()
}

/// Central differences of `total_loss` against the tape on a random 30%
/// of the online parameters.
pub fn total_loss_check(spec: ArchitectureSpec, loss_cfg: LossConfig) -> gradcheck::GradCheck {
    let b = batch(&spec);
    let mut online = init_params::<f64>(&spec, 1).unwrap();
    let target = init_params::<f64>(&spec, 2).unwrap();
    let (_, grads) = total_loss(&b, &online, &target, &spec, &loss_cfg, &mut stream(9, 0)).unwrap();
    online.accumulate(&grads).unwrap();
    let mut pick = stream(4, 0);
    gradcheck::check(
        &online,
        &online,
        1e-5,
        1e-6,
        |_, _| pick.random::<f64>() < 0.3,
        |p| Ok(total_loss(&b, p, &target, &spec, &loss_cfg, &mut stream(9, 0)).unwrap().0.total),
    )
    .unwrap()
}

pub fn td_only() -> (ArchitectureSpec, LossConfig) {
    let spec = ArchitectureSpec {
        use_spr: false,
        dueling: false,
        ..tiny_spec()
    };
    let cfg = LossConfig {
        augment: false,
        double_q: false,
        ..LossConfig::default()
    };
    (spec, cfg)
}

