#![no_main]

use bbf_autodiff::checkpoint::Container;
use bbf_core::config::AgentConfig;
use bbf_core::trainer::Trainer;
use libfuzzer_sys::fuzz_target;

const MAX_CAPACITY: usize = 4096;
const MAX_CHANNELS: usize = 16;
const MAX_HEAD: usize = 64;

fuzz_target!(|data: &[u8]| {
    let Ok(c) = Container::decode(data) else { return };
    let Some(Ok(text)) = c.get("config").map(std::str::from_utf8) else { return };
    let Ok(config) = AgentConfig::parse(text) else { return };
    let arch = &config.arch;
    let widest = arch.base_channels.iter().max().copied().unwrap_or(0);
    let small = config.replay.capacity <= MAX_CAPACITY
        && arch.width_scale.saturating_mul(widest) <= MAX_CHANNELS
        && arch.latent_dim <= MAX_HEAD
        && arch.num_atoms <= MAX_HEAD
        && arch.spr_horizon <= 8;
    if small {
        let _ = Trainer::from_container(&c);
    }
});
