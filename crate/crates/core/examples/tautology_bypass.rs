//! The login form rejects numeric comparisons such as `1 = 1`. A PPO agent
//! starting from seeds that contain no string comparison has to find one
//! (`'a' = 'a'`) on its own.
//!
//! Usage: tautology_bypass [checkpoint] [max submitted candidates]
//! Without a checkpoint the encoder is pretrained first (about a minute).
//! Finding the bypass typically takes several minutes.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rlfuzz::campaign::{build_agent, embedded_target, load_pretrained, pretrain, Campaign, CampaignConfig};
use rlfuzz::environment::{AttackClass, EmbeddedSuite};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let suite = EmbeddedSuite::new();
    let point = suite.app("login").ok_or("no login app")?.points().remove(0);
    for probe in ["' OR 1 = 1 --", "' OR 'a' = 'a' --"] {
        let v = suite.evaluate(&point, probe)?;
        println!("{probe:<20} blocked {:<5} attack {:?}", v.sanitizer_blocked, v.attack_class);
    }

    let args: Vec<String> = std::env::args().skip(1).collect();
    let limit: usize = args.get(1).map(|a| a.parse()).transpose()?.unwrap_or(5000);
    let cfg = CampaignConfig { max_candidates: 1_000_000, ..Default::default() };
    let (bank, points, env) = embedded_target(&cfg, &["login"])?;
    let pretrained = match args.first() {
        Some(path) => load_pretrained(Path::new(path))?,
        None => pretrain(&bank, &cfg)?,
    };
    let bank = rlfuzz::campaign::SeedBank::with_vocab(pretrained.vocab.clone(), &rlfuzz::corpus::builtin::sqli_seeds(), &rlfuzz::corpus::builtin::xss_seeds(), bank.schema.clone())?;
    let mut agent = build_agent(&cfg, &bank, Some(pretrained), &mut ChaCha8Rng::seed_from_u64(cfg.seed + 1))?;
    let mut campaign = Campaign::new(cfg, bank, points, env)?;

    let start = Instant::now();
    loop {
        let out = campaign.run_episode(agent.as_mut())?;
        let m = campaign.metrics();
        if m.episodes % 500 == 0 {
            println!("{:>6} candidates, {:>5} submitted, parser penalty rate {:.3}", m.candidates_total, m.candidates_submitted, m.parser_penalty_rate);
        }
        if out.attack == Some(AttackClass::Tautology) && out.fresh_attack {
            let report = campaign.report();
            let v = report.vulnerabilities.iter().find(|v| v.class == AttackClass::Tautology).unwrap();
            println!("found {:?} after {} submitted candidates in {:.0} s", v.payload, m.candidates_submitted, start.elapsed().as_secs_f64());
            break;
        }
        if m.candidates_submitted >= limit {
            println!("no string tautology within {limit} submitted candidates");
            break;
        }
    }
    println!("\n{}", campaign.report().summary());
    Ok(())
}
