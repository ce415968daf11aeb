//! Writes the bundled preset configs: `cargo run --example presets -- configs`.

use std::path::PathBuf;

use albench_core::config::{ExperimentConfig, ImbalanceScope, StrategyId};

fn main() -> std::io::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "configs".into()));
    std::fs::create_dir_all(&dir)?;
    let mut presets: Vec<(String, ExperimentConfig)> = Vec::new();
    for s in [
        StrategyId::Random,
        StrategyId::Uc,
        StrategyId::Maxent,
        StrategyId::Bald,
        StrategyId::Cog,
        StrategyId::Coreset,
        StrategyId::Vaal,
        StrategyId::Qbc,
    ] {
        let mut c = ExperimentConfig::cifar10(s);
        c.name = s.to_string();
        presets.push((format!("cifar10-{s}.json"), c.clone()));
        let mut r = c.with_regularization();
        r.name = format!("{s}-ra-swa");
        presets.push((format!("cifar10-{s}-ra-swa.json"), r));
    }
    let mut imb = ExperimentConfig::cifar100(StrategyId::Random);
    imb.name = "random-imbalanced".into();
    imb.imbalance_enabled = true;
    imb.imbalance.scope = ImbalanceScope::InitialOnly;
    presets.push(("cifar100-random-imbalanced-l0.json".into(), imb));
    for (name, cfg) in presets {
        cfg.validate().expect("preset is valid");
        std::fs::write(dir.join(name), serde_json::to_string_pretty(&cfg)? + "\n")?;
    }
    Ok(())
}
