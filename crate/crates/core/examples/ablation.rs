//! Compares agent configurations on the embedded suite at equal budgets.
//! Usage: ablation [budget] [seeds]

use rlfuzz::campaign::{embedded_target, pretrain, run_campaign, AgentKind, CampaignConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse()).collect::<Result<_, _>>()?;
    let budget = args.first().copied().unwrap_or(1000);
    let seeds = args.get(1).copied().unwrap_or(2) as u64;
    let base = CampaignConfig { max_candidates: budget, ..Default::default() };
    let (bank, _, _) = embedded_target(&base, &[])?;
    let checkpoint = pretrain(&bank, &base)?;

    let rows = [
        ("ppo + pretrain + bandit", AgentKind::Ppo, true, true),
        ("ppo + pretrain", AgentKind::Ppo, true, false),
        ("ppo", AgentKind::Ppo, false, false),
        ("dqn + pretrain + bandit", AgentKind::Dqn, true, true),
        ("random mutation", AgentKind::Random, false, true),
        ("grammar generator", AgentKind::Generator, false, true),
    ];
    println!("{:<26} {:>5} {:>6} {:>8} {:>8}", "configuration", "seed", "vulns", "fields", "penalty");
    for (name, agent, pre, bandit) in rows {
        for seed in 0..seeds {
            let cfg = CampaignConfig { seed, agent, pretrain: pre, bandit, ..base.clone() };
            let (bank, points, env) = embedded_target(&cfg, &[])?;
            let m = run_campaign(&cfg, bank, points, env, pre.then(|| checkpoint.clone()), None)?.metrics;
            println!("{name:<26} {seed:>5} {:>6} {:>8} {:>8.3}", m.vulnerabilities_found, m.unique_fields, m.parser_penalty_rate);
        }
    }
    Ok(())
}
