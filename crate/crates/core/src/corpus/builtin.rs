//! Corpora shipped with the crate.

use super::parse_seed_lines;

const SQLI: &str = include_str!("../../data/seeds_sqli.txt");
const XSS: &str = include_str!("../../data/seeds_xss.txt");
const BENIGN: &str = include_str!("../../data/benign.txt");

/// SQL injection seeds. None of them is a string-comparison tautology.
pub fn sqli_seeds() -> Vec<String> {
    parse_seed_lines(SQLI)
}

pub fn xss_seeds() -> Vec<String> {
    parse_seed_lines(XSS)
}

/// Both seed sets, SQL first.
pub fn all_seeds() -> Vec<String> {
    let mut v = sqli_seeds();
    v.extend(xss_seeds());
    v
}

/// Ordinary form input used to check the attack oracles for false positives.
pub fn benign_inputs() -> Vec<String> {
    parse_seed_lines(BENIGN)
}
