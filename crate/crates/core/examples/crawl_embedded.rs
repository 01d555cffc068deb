//! Crawls every embedded application and lists its injection points.

use rlfuzz::environment::{crawl, CrawlConfig, EmbeddedSite};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut site = EmbeddedSite::new();
    for id in site.app_ids() {
        let points = crawl(&mut site, &format!("embedded://{id}/"), &CrawlConfig::default())?;
        println!("{id}:");
        for p in points {
            println!("  {:<24} {:?} sanitizers={}", p.id(), p.context, p.sanitizers.len());
        }
    }
    Ok(())
}
