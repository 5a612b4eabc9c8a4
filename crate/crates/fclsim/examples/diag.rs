//! Scratch diagnostic (not shipped): attacker shard class coverage under dirichlet.
use fclsim::assemble::assemble;
use fclsim::presets::preset_config;

fn main() {
    for alpha in [0.5f64, 1.0, 2.0] {
        let mut cfg = preset_config("multishot_noniid").unwrap();
        cfg.data.dirichlet_alpha = alpha;
        let exp = assemble(&cfg).unwrap();
        println!("alpha={alpha}:");
        for (i, shard) in exp.shards.iter().take(3).enumerate() {
            let mut counts = vec![0usize; 4];
            for l in shard.labels().flatten() {
                counts[l as usize] += 1;
            }
            println!("  attacker {i} shard: {counts:?} (total {})", shard.len());
        }
    }
}
