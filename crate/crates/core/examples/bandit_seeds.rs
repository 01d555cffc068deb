//! Thompson sampling over four seeds with hidden success rates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rlfuzz::bandit::{select_seed, update_arm, SeedArm};
use rlfuzz::corpus::build_vocab;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seeds = ["' OR 1 = 1 --", "admin' --", "' UNION SELECT 1 --", "1 ; DROP TABLE users"];
    let vocab = build_vocab(&seeds, None)?;
    let rates = [0.05, 0.6, 0.2, 0.1];
    let mut arms: Vec<SeedArm> = seeds.iter().map(|s| SeedArm::new(vocab.tokenize(s).unwrap())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut picks = [0usize; 4];
    for round in 1..=2000 {
        let i = select_seed(&arms, &mut rng)?;
        picks[i] += 1;
        let success = rng.random_bool(rates[i]);
        arms[i] = update_arm(arms[i].clone(), success);
        if round % 500 == 0 {
            println!("round {round}: picks {picks:?}");
        }
    }
    for (s, (arm, r)) in seeds.iter().zip(arms.iter().zip(rates)) {
        println!("{s:<24} true {r:.2}  posterior Beta({}, {})  mean {:.3}", arm.alpha, arm.beta, arm.mean());
    }
    Ok(())
}
