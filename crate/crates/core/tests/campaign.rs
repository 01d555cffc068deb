use std::process::Command;

use rlfuzz::campaign::{
    embedded_target, run_campaign, AgentKind, Campaign, CampaignConfig, ModelConfig, Report, RewardKind, ScriptedAgent, SeedBank, REPORT_HEADER,
};
use rlfuzz::corpus::builtin::{sqli_seeds, xss_seeds};
use rlfuzz::corpus::TokenSequence;
use rlfuzz::environment::{fixture_db, AttackClass, EmbeddedSuite, Environment};
use rlfuzz::grammar::{check, Dialect};
use rlfuzz::mutation::{apply, enumerate_actions, MutationAction, MutationOp};

fn scripted_config(max_mutations: usize) -> CampaignConfig {
    CampaignConfig { bandit: false, pretrain: false, max_mutations, max_candidates: 1000, ..Default::default() }
}

fn login_campaign(cfg: CampaignConfig, sqli: &[String]) -> Campaign {
    let bank = SeedBank::build(sqli, &xss_seeds(), fixture_db().schema(), 5).unwrap();
    let points = EmbeddedSuite::new().app("login").unwrap().points();
    Campaign::new(cfg, bank, points, Environment::embedded()).unwrap()
}

/// The single action turning `from` into the canonical form of `target`.
fn action_to(campaign: &Campaign, from: &TokenSequence, target: &str) -> Option<(MutationAction, TokenSequence)> {
    let vocab = &campaign.bank().vocab;
    enumerate_actions(from.len(), vocab.len(), 64).into_iter().find_map(|a| {
        let out = vocab.canonicalize(&apply(vocab, from, a, 64).ok()?);
        (out.detokenize() == target).then_some((a, out))
    })
}

/// A seed one edit away from the numeric tautology the login filter blocks.
fn one_edit_seed() -> String {
    let probe = login_campaign(scripted_config(8), &sqli_seeds());
    probe
        .bank()
        .entries
        .iter()
        .filter(|e| e.dialect == Dialect::SqlFragment && e.raw != "' OR 1 = 1 ; --")
        .find(|e| action_to(&probe, &e.seq, "' OR 1 = 1 ; --").is_some())
        .expect("some seed is one edit away")
        .raw
        .clone()
}

fn with_first(first: &str) -> Vec<String> {
    let mut seeds = vec![first.to_string()];
    seeds.extend(sqli_seeds().into_iter().filter(|s| s != first));
    seeds
}

#[test]
fn blocked_numeric_tautology_then_string_tautology() {
    let start = one_edit_seed();
    let mut campaign = login_campaign(scripted_config(8), &with_first(&start));
    let vocab = campaign.bank().vocab.clone();
    let seed = campaign.bank().entries[0].seq.clone();
    assert_eq!(seed.detokenize(), start);
    let (first, mid) = action_to(&campaign, &seed, "' OR 1 = 1 ; --").expect("one edit adds the separator");
    let (second, _) = action_to(&campaign, &mid, "' OR 'a' = 'a' ; --").expect("one edit swaps the comparison");
    assert_eq!(second.op, MutationOp::Replace);
    assert_eq!(vocab.surface(second.token), "'a' = 'a'");
    assert!(vocab.is_ngram(second.token));

    let mut agent = ScriptedAgent::new([first, second], 64);
    let out = campaign.run_episode(&mut agent).unwrap();
    assert_eq!(out.kinds, vec![RewardKind::NoAttack, RewardKind::Attack]);
    assert_eq!(out.rewards, vec![-0.05, 1.0]);
    assert_eq!(out.attack, Some(AttackClass::Tautology));
    let m = campaign.metrics();
    assert_eq!((m.candidates_total, m.attacks, m.vulnerabilities_found, m.unique_fields), (2, 1, 1, 1));
    let arm = &campaign.arms(Dialect::SqlFragment)[0];
    assert_eq!((arm.alpha, arm.beta), (2, 1));
    let report = campaign.report();
    assert_eq!(report.vulnerabilities[0].payload, "' OR 'a' = 'a' ; --");
}

#[test]
fn parse_failure_earns_the_parse_penalty() {
    let mut campaign = login_campaign(scripted_config(1), &with_first("' OR 1 = 1 --"));
    let vocab = campaign.bank().vocab.clone();
    let seed = campaign.bank().entries[0].seq.clone();
    let breaking = enumerate_actions(seed.len(), vocab.len(), 64)
        .into_iter()
        .find(|&a| !check(&vocab.canonicalize(&apply(&vocab, &seed, a, 64).unwrap()), Dialect::SqlFragment).well_formed)
        .unwrap();
    let mut agent = ScriptedAgent::new([breaking], 64);
    let out = campaign.run_episode(&mut agent).unwrap();
    assert_eq!(out.rewards, vec![-1.0]);
    assert_eq!(out.kinds, vec![RewardKind::ParseFail]);
    let m = campaign.metrics();
    assert_eq!((m.candidates_total, m.candidates_submitted, m.parse_failures), (1, 0, 1));
    assert_eq!(m.parser_penalty_rate, 1.0);
    let arm = &campaign.arms(Dialect::SqlFragment)[0];
    assert_eq!((arm.alpha, arm.beta), (1, 2));
}

#[test]
fn resubmitting_a_candidate_is_a_duplicate() {
    let start = one_edit_seed();
    let mut seeds = with_first(&start);
    seeds.insert(0, start);
    let mut campaign = login_campaign(scripted_config(1), &seeds);
    let seed = campaign.bank().entries[0].seq.clone();
    let (a, _) = action_to(&campaign, &seed, "' OR 1 = 1 ; --").unwrap();
    let mut agent = ScriptedAgent::new([a, a], 64);
    campaign.run_episode(&mut agent).unwrap();
    campaign.run_episode(&mut agent).unwrap();
    assert_eq!(agent.rewards, vec![-0.05, -0.5]);
    let m = campaign.metrics();
    assert_eq!((m.duplicates, m.no_attacks), (1, 2));
}

#[test]
fn unshaped_rewards_are_binary() {
    let cfg = CampaignConfig { shaped_rewards: false, ..scripted_config(8) };
    let mut campaign = login_campaign(cfg, &with_first(&one_edit_seed()));
    let seed = campaign.bank().entries[0].seq.clone();
    let (first, mid) = action_to(&campaign, &seed, "' OR 1 = 1 ; --").unwrap();
    let (second, _) = action_to(&campaign, &mid, "' OR 'a' = 'a' ; --").unwrap();
    let mut agent = ScriptedAgent::new([first, second], 64);
    assert_eq!(campaign.run_episode(&mut agent).unwrap().rewards, vec![0.0, 1.0]);
}

#[test]
fn rates_partition_every_candidate() {
    let cfg = CampaignConfig { agent: AgentKind::Random, pretrain: false, max_candidates: 400, seed: 5, ..Default::default() };
    let (bank, points, env) = embedded_target(&cfg, &[]).unwrap();
    let out = run_campaign(&cfg, bank, points, env, None, None).unwrap();
    let m = out.metrics;
    assert_eq!(m.candidates_total, 400);
    assert_eq!(m.parse_failures + m.attacks + m.no_attacks, m.candidates_total);
    assert_eq!(m.parser_penalty_rate + m.attack_rate + m.no_attack_rate, 1.0);
    assert_eq!(m.parser_penalty_rate, m.parse_failures as f64 / 400.0);
}

fn small_ppo() -> CampaignConfig {
    CampaignConfig {
        pretrain: false,
        max_candidates: 300,
        seed: 3,
        model: ModelConfig { layers: 1, heads: 2, d_model: 16, d_ff: 32, max_len: 64, dropout: 0.1 },
        ppo: rlfuzz::agent::PpoConfig { update_every: 64, ..Default::default() },
        ..Default::default()
    }
}

#[test]
fn identical_seeds_give_identical_reports() {
    let run = || {
        let cfg = small_ppo();
        let (bank, points, env) = embedded_target(&cfg, &[]).unwrap();
        run_campaign(&cfg, bank, points, env, None, None).unwrap().report
    };
    let (a, b) = (run(), run());
    assert!(!a.updates.is_empty());
    assert_eq!(a.without_wall_clock().render(), b.without_wall_clock().render());
}

#[test]
fn event_log_has_one_line_per_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let cfg = CampaignConfig { agent: AgentKind::Random, max_candidates: 120, ..Default::default() };
    let (bank, points, env) = embedded_target(&cfg, &["shop"]).unwrap();
    let file = std::fs::File::create(&path).unwrap();
    run_campaign(&cfg, bank, points, env, None, Some(Box::new(file))).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 120);
    assert_eq!(lines[0]["index"], 1);
    assert_eq!(lines[119]["index"], 120);
}

fn rlfuzz(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rlfuzz")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.txt");
    let report = report.to_str().unwrap();

    let found = rlfuzz(&["--seed", "1", "fuzz", "--target", "embedded:legacy", "--agent", "generator", "--budget", "400", "--report", report]);
    assert_eq!(found.status.code(), Some(0), "{}", String::from_utf8_lossy(&found.stderr));
    let text = std::fs::read_to_string(report).unwrap();
    assert!(text.starts_with(REPORT_HEADER));
    assert!(Report::parse(&text).unwrap().metrics.vulnerabilities_found > 0);
    let summary = rlfuzz(&["report", report]);
    assert_eq!(summary.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&summary.stdout).contains("vulnerabilities across"));

    let nothing = rlfuzz(&["fuzz", "--target", "embedded:hardened", "--agent", "random", "--budget", "100", "--report", report]);
    assert_eq!(nothing.status.code(), Some(1));

    assert_eq!(rlfuzz(&["--set", "campaign.bogus=1", "fuzz"]).status.code(), Some(2));
    assert_eq!(rlfuzz(&["fuzz", "--target", "embedded:nowhere"]).status.code(), Some(2));
    std::fs::write(report, "FUZZREPORT v0\n{}").unwrap();
    assert_eq!(rlfuzz(&["report", report]).status.code(), Some(2));
    assert_eq!(rlfuzz(&["pretrain", "--corpus", "/nonexistent/seeds.txt", "--out", report]).status.code(), Some(2));
}

#[test]
fn cli_crawl_lists_embedded_points() {
    let out = rlfuzz(&["crawl", "--target", "embedded:shop"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for field in ["shop/q", "shop/category", "shop/brand", "shop/author", "shop/title", "shop/body"] {
        assert!(text.contains(field), "{field} missing from {text}");
    }
}
