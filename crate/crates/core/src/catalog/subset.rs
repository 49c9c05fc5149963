use std::collections::HashSet;

use rand::seq::index;

use super::{Tier, ToolRecord};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Picks `target_n` tools that include every gold id, filling the remaining
/// slots tier by tier in proportion to the non-gold pool.
///
/// Slot counts use largest-remainder rounding (ties go to the lower tier);
/// within a tier tools are drawn without replacement. The result keeps
/// catalog order.
pub fn stratified_subset(
    catalog: &[ToolRecord],
    target_n: usize,
    gold_ids: &HashSet<String>,
    rng: &mut Rng,
) -> Result<Vec<ToolRecord>> {
    if target_n > catalog.len() {
        return Err(Error::invalid(format!(
            "target size {target_n} exceeds catalog size {}",
            catalog.len()
        )));
    }
    if target_n < gold_ids.len() {
        return Err(Error::invalid(format!(
            "target size {target_n} is smaller than the gold set ({})",
            gold_ids.len()
        )));
    }
    let known: HashSet<&str> = catalog.iter().map(|t| t.id.as_str()).collect();
    if let Some(missing) = gold_ids.iter().find(|id| !known.contains(id.as_str())) {
        return Err(Error::invalid(format!("gold id `{missing}` is not in the catalog")));
    }

    let mut pools: [Vec<usize>; 3] = Default::default();
    for (i, t) in catalog.iter().enumerate() {
        if !gold_ids.contains(&t.id) {
            pools[t.tier.index()].push(i);
        }
    }
    let quotas = allocate(target_n - gold_ids.len(), &pools.each_ref().map(|p| p.len()));

    let mut keep = vec![false; catalog.len()];
    for (i, t) in catalog.iter().enumerate() {
        keep[i] = gold_ids.contains(&t.id);
    }
    for tier in Tier::ALL {
        let pool = &pools[tier.index()];
        for j in index::sample(rng, pool.len(), quotas[tier.index()]) {
            keep[pool[j]] = true;
        }
    }
    Ok(catalog
        .iter()
        .zip(keep)
        .filter_map(|(t, k)| k.then(|| t.clone()))
        .collect())
}

/// Largest-remainder apportionment of `slots` over pools of the given sizes.
pub(crate) fn allocate(slots: usize, sizes: &[usize; 3]) -> [usize; 3] {
    let total: usize = sizes.iter().sum();
    if total == 0 || slots == 0 {
        return [0; 3];
    }
    let mut quotas = [0usize; 3];
    let mut remainders = [(0usize, 0usize); 3];
    for i in 0..3 {
        let exact = slots * sizes[i];
        quotas[i] = exact / total;
        remainders[i] = (exact % total, i);
    }
    let mut left = slots - quotas.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in &remainders {
        if left == 0 {
            break;
        }
        if quotas[i] < sizes[i] {
            quotas[i] += 1;
            left -= 1;
        }
    }
    quotas
}
