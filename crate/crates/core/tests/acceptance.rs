//! End-to-end acceptance checks. Each check prints one PASS/FAIL line; the
//! test fails if any check fails.

mod common;

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rlfuzz::agent::{compute_advantages, normalize, ppo_total_loss, PolicyNet, PpoConfig, Transition};
use rlfuzz::bandit::{select_seed, update_arm, SeedArm};
use rlfuzz::campaign::{
    build_agent, embedded_target, pretrain, run_campaign, AgentKind, Campaign, CampaignConfig, MetricsRecord, ModelConfig, Pretrained, Report,
    SeedBank, VulnerabilityEntry,
};
use rlfuzz::corpus::builtin::{benign_inputs, sqli_seeds};
use rlfuzz::corpus::{build_vocab, split_pieces, Origin, TokenSequence};
use rlfuzz::encoder::{mask_batch, EncoderConfig, Graph, MlmModel};
use rlfuzz::environment::apps::Sink;
use rlfuzz::environment::{embedded_apps, fixture_db, sqli_oracle, AttackClass, Chain, EmbeddedSuite, Environment};
use rlfuzz::grammar::sql::parse_script;
use rlfuzz::mutation::{apply, MutationAction, MutationOp};

/// Candidates the login agent generates in training before its parse-failure
/// rate is measured.
const TRAINING_CANDIDATES: usize = 45_000;
/// Candidates in the measured runs of the trained and random agents.
const EVAL_BUDGET: usize = 5_000;
/// Candidates per campaign in the ablation comparison.
const ABLATION_BUDGET: usize = 2_000;
const ABLATION_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Writes straight to stdout so the line shows even when output is captured.
fn announce(n: usize, name: &str, o: &Outcome, secs: f64) {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    let line = format!("[{verdict}] {n}. {name}: {} ({secs:.1} s)\n", o.detail);
    let mut out = std::io::stdout();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn login_campaign(cfg: &CampaignConfig, bank: SeedBank) -> Campaign {
    let points = EmbeddedSuite::new().app("login").unwrap().points();
    Campaign::new(cfg.clone(), bank, points, Environment::embedded()).unwrap()
}

fn login_bank(cfg: &CampaignConfig) -> SeedBank {
    embedded_target(cfg, &["login"]).unwrap().0
}

fn pieces(payload: &str) -> Vec<String> {
    split_pieces(payload).into_iter().map(|p| p.surface).collect()
}

/// A comparison between two quoted literals, e.g. `'a' = 'a'`.
fn string_comparison(w: &[String]) -> bool {
    let quoted = |s: &str| s.len() >= 2 && s.starts_with('\'') && s.ends_with('\'');
    quoted(&w[0]) && ["=", "<>", "<", ">", "LIKE"].contains(&w[1].as_str()) && quoted(&w[2])
}

/// `OR` followed by a string comparison.
fn is_string_tautology(payload: &str) -> bool {
    pieces(payload).windows(4).any(|w| w[0].eq_ignore_ascii_case("OR") && string_comparison(&w[1..]))
}

struct LoginRun {
    first: Outcome,
    trained_rate: f64,
    first_secs: f64,
    trained_secs: f64,
    reports: Vec<Report>,
}

/// Default PPO campaign on the login app until a string tautology turns up
/// or 5000 candidates were submitted, then more training on the same app and
/// a measured run of the trained agent.
fn login_runs() -> LoginRun {
    let started = Instant::now();
    let cfg = CampaignConfig::default();
    let bank = login_bank(&cfg);
    let login = EmbeddedSuite::new().app("login").unwrap().points().remove(0);
    let corpus_clean = sqli_seeds()
        .iter()
        .all(|s| !is_string_tautology(s) && EmbeddedSuite::new().evaluate(&login, s).unwrap().attack_class != Some(AttackClass::Tautology));
    let pretrained = pretrain(&bank, &cfg).unwrap();
    let mut init = ChaCha8Rng::seed_from_u64(cfg.seed + 1);
    let mut agent = build_agent(&cfg, &bank, Some(pretrained), &mut init).unwrap();
    let pretrain_secs = started.elapsed().as_secs_f64();
    let started = Instant::now();

    let mut campaign = login_campaign(&CampaignConfig { max_candidates: 10 * TRAINING_CANDIDATES, ..cfg.clone() }, bank.clone());
    let mut found = None;
    while found.is_none() && campaign.metrics().candidates_submitted < 5000 && started.elapsed().as_secs_f64() < 600.0 {
        let out = campaign.run_episode(agent.as_mut()).unwrap();
        if out.attack == Some(AttackClass::Tautology) && out.fresh_attack {
            let m = campaign.metrics();
            found = Some((m.candidates_submitted, m.candidates_total));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let report = campaign.report();
    let point = EmbeddedSuite::new().app("login").unwrap().points().remove(0);
    let chain = Chain::new(&point.sanitizers).unwrap();
    let first = match (found, report.vulnerabilities.iter().find(|v| v.class == AttackClass::Tautology)) {
        (Some((submitted, generated)), Some(v)) => {
            let verdict = EmbeddedSuite::new().evaluate(&point, &v.payload).unwrap();
            let parses = verdict.parsed_ok && verdict.attack_class == Some(AttackClass::Tautology);
            let bypasses = chain.apply(&v.payload).is_some();
            let string_cmp = is_string_tautology(&v.payload);
            let pass = parses && bypasses && string_cmp && corpus_clean && submitted <= 5000 && secs < 600.0;
            outcome(
                pass,
                format!(
                    "{:?} after {submitted} submitted ({generated} generated) candidates in {secs:.0} s after {pretrain_secs:.0} s of pretraining; parses {parses}, bypasses filter {bypasses}, string tautology {string_cmp}, seed corpus free of string tautologies {corpus_clean}",
                    v.payload
                ),
            )
        }
        _ => outcome(
            false,
            format!(
                "no tautology after {} submitted candidates; found {:?}",
                report.metrics.candidates_submitted,
                report.vulnerabilities.iter().map(|v| (&v.payload, v.class)).collect::<Vec<_>>()
            ),
        ),
    };
    let mut reports = vec![report];
    let first_secs = pretrain_secs + secs;

    let started = Instant::now();
    while campaign.metrics().candidates_total < TRAINING_CANDIDATES {
        campaign.run_episode(agent.as_mut()).unwrap();
    }
    reports.push(campaign.report());
    let eval_cfg = CampaignConfig { seed: cfg.seed + 1, max_candidates: EVAL_BUDGET, ..cfg.clone() };
    let mut eval = login_campaign(&eval_cfg, bank);
    eval.run(agent.as_mut()).unwrap();
    let m = eval.metrics();
    reports.push(eval.report());
    LoginRun { first, first_secs, trained_rate: m.parser_penalty_rate, trained_secs: started.elapsed().as_secs_f64(), reports }
}

fn random_login_rate() -> (f64, Report) {
    let cfg = CampaignConfig { agent: AgentKind::Random, max_candidates: EVAL_BUDGET, ..Default::default() };
    let (bank, points, env) = embedded_target(&cfg, &["login"]).unwrap();
    let out = run_campaign(&cfg, bank, points, env, None, None).unwrap();
    (out.metrics.parser_penalty_rate, out.report)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

fn ablation(reports: &mut Vec<Report>) -> Outcome {
    let base = CampaignConfig { max_candidates: ABLATION_BUDGET, ..Default::default() };
    let (bank, _, _) = embedded_target(&base, &[]).unwrap();
    let checkpoint: Pretrained = pretrain(&bank, &base).unwrap();
    let arms = [("ppo+pretrain+bandit", true, true), ("ppo+pretrain", true, false), ("ppo", false, false)];
    let mut vulns: Vec<Vec<f64>> = vec![Vec::new(); 3];
    let mut penalties: Vec<Vec<f64>> = vec![Vec::new(); 3];
    for &seed in &ABLATION_SEEDS {
        for (k, &(_, pre, bandit)) in arms.iter().enumerate() {
            let cfg = CampaignConfig { seed, pretrain: pre, bandit, ..base.clone() };
            let (bank, points, env) = embedded_target(&cfg, &[]).unwrap();
            let ckpt = pre.then(|| checkpoint.clone());
            let out = run_campaign(&cfg, bank, points, env, ckpt, None).unwrap();
            vulns[k].push(out.metrics.vulnerabilities_found as f64);
            penalties[k].push(out.metrics.parser_penalty_rate);
            reports.push(out.report);
        }
    }
    let v: Vec<f64> = vulns.iter().map(|x| median(x.clone())).collect();
    let p: Vec<f64> = penalties.iter().map(|x| median(x.clone())).collect();
    let pass = v[0] >= v[1] && v[1] >= v[2] && p[1] < p[2];
    let detail = arms
        .iter()
        .enumerate()
        .map(|(k, (name, _, _))| format!("{name}: vulns {:?} median {} penalty median {:.3}", vulns[k], v[k], p[k]))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

fn seq(ids: &[u32]) -> TokenSequence {
    let tokens = ids.iter().map(|&id| rlfuzz::corpus::Token { id, surface: format!("t{id}"), spaced: true }).collect();
    TokenSequence::new(tokens, Origin::Seed).unwrap()
}

fn gradient_check() -> Outcome {
    let cfg = EncoderConfig::tiny(12);
    assert_eq!((cfg.layers, cfg.d_model), (2, 16));
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut mlm = MlmModel::new(cfg.clone(), &mut rng).unwrap();
    let corpus = vec![vec![4, 5, 6, 7, 8], vec![9, 10, 11], vec![5, 5, 6, 11, 4, 7]];
    let batch = mask_batch(&corpus, 0.5, 12, &mut rng).unwrap();
    let grads = {
        let mut g = Graph::new(&mlm.store);
        let l = mlm.loss(&mut g, &batch, None).unwrap();
        g.backward(l)
    };
    let (mlm_err, mlm_worst) = common::max_gradient_error(&mut mlm.store, &grads, 1e-5, |store| {
        let probe = MlmModel::from_store(cfg.clone(), store.clone()).unwrap();
        let mut g = Graph::new(&probe.store);
        let l = probe.loss(&mut g, &batch, None).unwrap();
        g.scalar(l)
    });

    let mut net = PolicyNet::new(cfg.clone(), &mut rng).unwrap();
    let actions = [MutationAction::insert(1, 7), MutationAction::delete(2), MutationAction::replace(0, 9), MutationAction::replace(1, 4)];
    let states = [seq(&[5, 6]), seq(&[5, 6, 7]), seq(&[8]), seq(&[9, 10, 4])];
    let offsets = [-(0.9f64.ln()), -(1.15f64.ln()), -(2.5f64.ln()), 0.0];
    let mut batch = Vec::new();
    for i in 0..4 {
        let ids = states[i].ids();
        let out = net.policy(&ids).unwrap();
        let a = actions[i];
        let mut lp = out.op[a.op.index()].ln() + out.position[a.op.index()][a.position].ln();
        if a.op != MutationOp::Delete {
            lp += net.token_distribution(&ids, a.op, a.position).unwrap()[a.token as usize].ln();
        }
        batch.push(Transition { state: states[i].clone(), action: a, log_prob: lp + offsets[i], value: 0.2, reward: [1.0, -1.0, -0.05, -0.5][i], done: i % 2 == 1 });
    }
    let adv = compute_advantages(&batch, 0.99, 0.95);
    let norm = normalize(&adv.advantages);
    let refs: Vec<&Transition> = batch.iter().collect();
    let ppo = PpoConfig::default();
    let (_, grads) = ppo_total_loss(&net, &refs, &norm, &adv.returns, &ppo).unwrap();
    let (ppo_err, ppo_worst) = common::max_gradient_error(&mut net.store, &grads, 1e-5, |store| {
        let probe = PolicyNet::attach(cfg.clone(), store.clone()).unwrap();
        ppo_total_loss(&probe, &refs, &norm, &adv.returns, &ppo).unwrap().0
    });
    outcome(mlm_err <= 1e-4 && ppo_err <= 1e-4, format!("MLM max relative error {mlm_err:.2e} ({mlm_worst}), PPO {ppo_err:.2e} ({ppo_worst})"))
}

fn thompson() -> Outcome {
    let dummy = seq(&[4]);
    // bookkeeping
    let mut arm = SeedArm::new(dummy.clone());
    let outcomes = [true, false, false, true, true, false, true];
    for &s in &outcomes {
        arm = update_arm(arm, s);
    }
    let exact = (arm.alpha, arm.beta, arm.plays()) == (5, 4, 7);
    // convergence
    let p = [0.1, 0.9, 0.1, 0.1];
    let mut pool: Vec<SeedArm> = p.iter().map(|_| SeedArm::new(dummy.clone())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut best = 0;
    for episode in 0..1000 {
        let i = select_seed(&pool, &mut rng).unwrap();
        let success = rand::Rng::random_bool(&mut rng, p[i]);
        pool[i] = update_arm(pool[i].clone(), success);
        if episode >= 500 && i == 1 {
            best += 1;
        }
    }
    let freq = best as f64 / 500.0;
    outcome(exact && freq > 0.8, format!("posterior after 4/3 successes/failures exact: {exact}; best arm share in episodes 500-1000: {freq:.3}"))
}

fn brute_force_mutation() -> Outcome {
    let vocab = build_vocab(&["a b c d"], None).unwrap();
    let alpha: Vec<u32> = ["a", "b", "c", "d"].iter().map(|s| vocab.id_of(s).unwrap()).collect();
    let mut seqs: Vec<Vec<u32>> = Vec::new();
    let mut layer = vec![Vec::new()];
    for _ in 0..3 {
        layer = layer.iter().flat_map(|s: &Vec<u32>| alpha.iter().map(move |&t| [s.as_slice(), &[t]].concat())).collect();
        seqs.extend(layer.clone());
    }
    let max_len = 3;
    let (mut checked, mut mismatches) = (0, 0);
    for s in &seqs {
        let surfaces: Vec<&str> = s.iter().map(|&i| vocab.surface(i)).collect();
        let state = vocab.from_surfaces(&surfaces, Origin::Seed).unwrap();
        for op in MutationOp::ALL {
            for pos in 0..=s.len() + 1 {
                for &tok in &alpha {
                    let expected = match op {
                        MutationOp::Insert if pos <= s.len() && s.len() < max_len => Some([&s[..pos], &[tok], &s[pos..]].concat()),
                        MutationOp::Delete if pos < s.len() && s.len() > 1 => Some([&s[..pos], &s[pos + 1..]].concat()),
                        MutationOp::Replace if pos < s.len() => Some([&s[..pos], &[tok], &s[pos + 1..]].concat()),
                        _ => None,
                    };
                    let got = apply(&vocab, &state, MutationAction { op, position: pos, token: tok }, max_len)
                        .ok()
                        .map(|t| t.ids().iter().map(|&i| i as u32).collect::<Vec<_>>());
                    checked += 1;
                    mismatches += usize::from(got != expected);
                }
            }
        }
    }
    outcome(mismatches == 0 && seqs.len() == 84, format!("{checked} (sequence, action) pairs over {} sequences, {mismatches} mismatches", seqs.len()))
}

fn oracle_soundness() -> Outcome {
    let db = fixture_db();
    let templates: Vec<_> = embedded_apps()
        .into_iter()
        .flat_map(|a| a.handlers)
        .filter_map(|h| match h.sink {
            Sink::Sql(t) => Some(t),
            Sink::Html(_) => None,
        })
        .collect();
    let rows = |q: &str| {
        let e = db.clone().execute(&parse_script(q).unwrap());
        let mut r: Vec<String> = e.rows.iter().map(|r| format!("{r:?}")).collect();
        r.sort();
        (r, e.executed.len())
    };
    let (mut labelled, mut unsound) = (0, Vec::new());
    for t in &templates {
        for p in sqli_seeds() {
            if sqli_oracle(t, &db, &p).unwrap().class.is_some() {
                labelled += 1;
                if rows(&t.instantiate(&p).unwrap()) == rows(&t.literal_replay(&p).unwrap()) {
                    unsound.push(p);
                }
            }
        }
    }
    let suite = EmbeddedSuite::new();
    let benign = benign_inputs();
    let mut false_positives = 0;
    for point in suite.points() {
        for b in &benign {
            false_positives += usize::from(suite.evaluate(&point, b).unwrap().attack_success);
        }
    }
    outcome(
        unsound.is_empty() && false_positives == 0 && benign.len() >= 100 && labelled > 0,
        format!("{labelled} attack labels all observable ({} unsound); {false_positives} false positives over {} benign inputs x {} points", unsound.len(), benign.len(), suite.points().len()),
    )
}

fn determinism(reports: &mut Vec<Report>) -> Outcome {
    let cfg = CampaignConfig {
        seed: 11,
        max_candidates: 600,
        model: ModelConfig { layers: 2, heads: 2, d_model: 32, d_ff: 64, max_len: 64, dropout: 0.1 },
        ppo: PpoConfig { update_every: 128, ..Default::default() },
        pretraining: rlfuzz::encoder::PretrainSchedule { epochs: 5, ..Default::default() },
        ..Default::default()
    };
    let run = || {
        let (bank, points, env) = embedded_target(&cfg, &[]).unwrap();
        run_campaign(&cfg, bank, points, env, None, None).unwrap().report
    };
    let (a, b) = (run(), run());
    let same = a.without_wall_clock().render() == b.without_wall_clock().render();
    let detail = format!("{} bytes, {} updates, identical modulo wall clock: {same}", a.render().len(), a.updates.len());
    reports.push(a);
    reports.push(b);
    outcome(same && !reports.is_empty(), detail)
}

fn metric_arithmetic(reports: &[Report]) -> Outcome {
    let sums_exact = reports.iter().all(|r| {
        let m = &r.metrics;
        m.parser_penalty_rate + m.attack_rate + m.no_attack_rate == 1.0 || m.candidates_total == 0
    });
    let entry = |class, idx| VulnerabilityEntry {
        field: "shop/q".into(),
        template: "SELECT name, price FROM products WHERE name = '<INJ>' AND hidden = 0".into(),
        class,
        payload: String::new(),
        candidate_index: idx,
        episode: idx,
        elapsed_secs: 0.0,
    };
    let fixture = [entry(AttackClass::Tautology, 1), entry(AttackClass::Union, 2), entry(AttackClass::Tautology, 3)];
    let mut m = MetricsRecord::default();
    m.count(&fixture);
    outcome(
        sums_exact && m.vulnerabilities_found == 2 && m.unique_fields == 1,
        format!("rates sum to exactly 1 on all {} reports: {sums_exact}; fixture gives {} vulnerabilities over {} fields", reports.len(), m.vulnerabilities_found, m.unique_fields),
    )
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    let mut reports = Vec::new();

    let login = login_runs();
    announce(1, "string tautology past the numeric-comparison filter", &login.first, login.first_secs);
    results.push(login.first.pass);
    reports.extend(login.reports);

    let ((random_rate, random_report), secs) = timed(random_login_rate);
    reports.push(random_report);
    let gap = random_rate - login.trained_rate;
    let o = outcome(
        login.trained_rate <= 0.30 && random_rate >= 0.95 && gap >= 0.50,
        format!("trained agent {:.3} (after {TRAINING_CANDIDATES} training candidates), random {random_rate:.3}, gap {gap:.3}", login.trained_rate),
    );
    announce(2, "grammar adherence gap", &o, secs + login.trained_secs);
    results.push(o.pass);

    let (o, secs) = timed(|| ablation(&mut reports));
    announce(3, "ablation ordering", &o, secs);
    results.push(o.pass);

    let (o, secs) = timed(gradient_check);
    let o = Outcome { pass: o.pass && secs < 60.0, ..o };
    announce(4, "gradients match finite differences", &o, secs);
    results.push(o.pass);

    let (o, secs) = timed(thompson);
    announce(5, "Thompson sampling", &o, secs);
    results.push(o.pass);

    let (o, secs) = timed(brute_force_mutation);
    announce(6, "mutation brute force", &o, secs);
    results.push(o.pass);

    let (o, secs) = timed(oracle_soundness);
    announce(7, "oracle soundness", &o, secs);
    results.push(o.pass);

    let (o, secs) = timed(|| determinism(&mut reports));
    announce(8, "determinism", &o, secs);
    results.push(o.pass);

    let (o, secs) = timed(|| metric_arithmetic(&reports));
    announce(9, "metric arithmetic", &o, secs);
    results.push(o.pass);

    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, &p)| !p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
