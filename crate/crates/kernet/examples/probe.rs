use kernet::data;
use kernet::simulate::{simulate_decay, SimulateOptions};

fn main() {
    let opts = SimulateOptions::default();
    let mut fails = 0;
    for seed in 0..30u64 {
        let adv = data::gen_adversarial(40, 0.01, seed).unwrap();
        let t1 = simulate_decay(&adv, &opts).unwrap();
        let rnd = data::gen_random(80, 2, seed).unwrap();
        let t2 = simulate_decay(&rnd, &opts).unwrap();
        let ok = t1.reached_target && t2.reached_target;
        if !ok { fails += 1; }
        println!(
            "seed {seed:2}: adv L={:2} H={:.4} | rand L={:2} H={:.4} | ok={ok}",
            t1.layers.len(),
            t1.layers.last().unwrap().hsic,
            t2.layers.len(),
            t2.layers.last().unwrap().hsic,
        );
    }
    println!("fails: {fails}/30");
}
