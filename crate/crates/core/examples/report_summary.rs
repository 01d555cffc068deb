//! Runs a short campaign against the shop app, writes the report and event
//! log, reads the report back and prints its summary.

use std::fs::File;

use rlfuzz::campaign::{embedded_target, run_campaign, AgentKind, CampaignConfig, Report};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = CampaignConfig { agent: AgentKind::Generator, max_candidates: 500, seed: 2, ..Default::default() };
    let (bank, points, env) = embedded_target(&cfg, &["shop"])?;
    let dir = std::env::temp_dir();
    let events = dir.join("rlfuzz-shop-events.jsonl");
    let out = run_campaign(&cfg, bank, points, env, None, Some(Box::new(File::create(&events)?)))?;

    let path = dir.join("rlfuzz-shop-report.txt");
    std::fs::write(&path, out.report.render())?;
    let back = Report::parse(&std::fs::read_to_string(&path)?)?;
    println!("{}", back.summary());
    println!("rates sum: {}", back.metrics.parser_penalty_rate + back.metrics.attack_rate + back.metrics.no_attack_rate);
    println!("report: {}\nevents: {}", path.display(), events.display());
    Ok(())
}
