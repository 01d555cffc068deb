#![allow(dead_code)]

use rlfuzz::encoder::{Grads, ParamStore};

/// Largest per-tensor relative error `|a - n| / max(|a|, |n|)` between the
/// analytic gradient and central finite differences of `loss`.
pub fn max_gradient_error(store: &mut ParamStore, analytic: &Grads, h: f64, loss: impl Fn(&ParamStore) -> f64) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for id in store.ids().collect::<Vec<_>>() {
        let (rows, cols) = store.get(id).dim();
        let mut diff = 0.0;
        let mut a_norm = 0.0;
        let mut n_norm = 0.0;
        for r in 0..rows {
            for c in 0..cols {
                let orig = store.get(id)[[r, c]];
                store.get_mut(id)[[r, c]] = orig + h;
                let up = loss(store);
                store.get_mut(id)[[r, c]] = orig - h;
                let down = loss(store);
                store.get_mut(id)[[r, c]] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic.get(id).map_or(0.0, |g| g[[r, c]]);
                diff += (a - numeric).powi(2);
                a_norm += a * a;
                n_norm += numeric * numeric;
            }
        }
        let denom = a_norm.sqrt().max(n_norm.sqrt());
        let err = if denom < 1e-12 { diff.sqrt() } else { diff.sqrt() / denom };
        if err > worst.0 {
            worst = (err, store.name(id).to_string());
        }
    }
    worst
}
