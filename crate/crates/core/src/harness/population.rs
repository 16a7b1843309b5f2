use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::config::{Category, PopulationMode, ScenarioConfig};
use crate::error::{Error, Result};
use crate::model::{
    Candidates, HelperId, HelperNode, Population, UserId, UserNode, VideoId, KBIT_PER_MB,
};

/// Integer counts summing to `total` from percentage shares: floors first,
/// then the largest remainders (lower index on ties) take one more each.
pub fn largest_remainder(fractions_pct: &[f64], total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = fractions_pct
        .iter()
        .map(|f| f / 100.0 * total as f64)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn category_list<R: Rng + ?Sized>(
    fractions: &[f64],
    total: usize,
    mode: PopulationMode,
    rng: &mut R,
) -> Result<Vec<usize>> {
    match mode {
        PopulationMode::Deterministic => {
            let mut list: Vec<usize> = largest_remainder(fractions, total)
                .into_iter()
                .enumerate()
                .flat_map(|(i, n)| std::iter::repeat_n(i, n))
                .collect();
            list.shuffle(rng);
            Ok(list)
        }
        PopulationMode::Sampled => {
            let dist = draw(fractions)?;
            Ok((0..total).map(|_| dist.sample(rng)).collect())
        }
    }
}

fn draw(fractions: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(fractions)
        .map_err(|e| Error::InvalidScenario(format!("category weights: {e}")))
}

fn values(cats: &[Category]) -> Vec<f64> {
    cats.iter().map(|c| c.fraction_pct).collect()
}

fn period<R: Rng + ?Sized>(set: &[f64], rng: &mut R) -> f64 {
    *set.choose(rng).expect("validated non-empty")
}

fn user_node<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    id: u32,
    video: usize,
    rng: &mut R,
) -> UserNode {
    let [lo, hi] = config.users.max_neighbors;
    UserNode {
        id: UserId(id),
        video: VideoId(video),
        max_neighbors: rng.random_range(lo..=hi),
        candidates: Candidates::All,
        update_period_s: period(&config.users.update_periods_s, rng),
        buffer_time_s: config.catalog.buffer_time_s,
    }
}

fn helper_node<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    id: u32,
    upload: usize,
    storage: usize,
    rng: &mut R,
) -> HelperNode {
    let [lo, hi] = config.helpers.max_neighbors;
    HelperNode {
        id: HelperId(id),
        upload_kbps: config.helpers.upload[upload].value,
        storage_kbit: config.helpers.storage[storage].value * KBIT_PER_MB,
        max_neighbors: rng.random_range(lo..=hi),
        candidates: Candidates::All,
        update_period_s: period(&config.helpers.update_periods_s, rng),
    }
}

/// The initial population. Users are numbered `1..=users.count`, helpers
/// `1..=helpers.count`; every peer may link to every opposite-role peer.
pub fn sample_population<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<Population> {
    let mode = config.population_mode;
    let videos: Vec<f64> = config
        .catalog
        .videos
        .iter()
        .map(|v| v.fraction_pct)
        .collect();
    let assignment = category_list(&videos, config.users.count, mode, rng)?;
    let users: Vec<UserNode> = assignment
        .into_iter()
        .enumerate()
        .map(|(i, m)| user_node(config, i as u32 + 1, m, rng))
        .collect();

    let n = config.helpers.count;
    let uploads = category_list(&values(&config.helpers.upload), n, mode, rng)?;
    let storages = category_list(&values(&config.helpers.storage), n, mode, rng)?;
    let helpers: Vec<HelperNode> = uploads
        .into_iter()
        .zip(storages)
        .enumerate()
        .map(|(i, (b, s))| helper_node(config, i as u32 + 1, b, s, rng))
        .collect();
    Population::new(users, helpers)
}

/// A newly arriving user drawn from the demand distribution.
pub fn sample_user<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    id: u32,
    rng: &mut R,
) -> Result<UserNode> {
    let shares: Vec<f64> = config
        .catalog
        .videos
        .iter()
        .map(|v| v.fraction_pct)
        .collect();
    let video = draw(&shares)?.sample(rng);
    Ok(user_node(config, id, video, rng))
}

/// A newly arriving helper drawn from the capacity distributions.
pub fn sample_helper<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    id: u32,
    rng: &mut R,
) -> Result<HelperNode> {
    let upload = draw(&values(&config.helpers.upload))?.sample(rng);
    let storage = draw(&values(&config.helpers.storage))?.sample(rng);
    Ok(helper_node(config, id, upload, storage, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::bundled_scenario;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(
            largest_remainder(&[10.0, 20.0, 50.0, 20.0], 100),
            vec![10, 20, 50, 20]
        );
        assert_eq!(
            largest_remainder(&[5.0, 10.0, 15.0, 40.0, 15.0, 10.0, 5.0], 70),
            vec![4, 7, 11, 28, 10, 7, 3]
        );
        assert_eq!(largest_remainder(&[50.0, 50.0], 1), vec![1, 0]);
    }

    #[test]
    fn paper_population_counts() {
        let config = bundled_scenario("static_sync").unwrap();
        let pop = sample_population(&config, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut per_video = [0; 4];
        for u in pop.users.values() {
            per_video[u.video.0] += 1;
            assert!((3..=10).contains(&u.max_neighbors));
        }
        assert_eq!(per_video, [10, 20, 50, 20]);
        let mut per_upload = std::collections::BTreeMap::new();
        for h in pop.helpers.values() {
            *per_upload.entry(h.upload_kbps as u32).or_insert(0) += 1;
        }
        assert_eq!(
            per_upload.into_values().collect::<Vec<_>>(),
            vec![4, 7, 11, 28, 10, 7, 3]
        );
        assert_eq!(pop.supply(), 44_288.0);
    }

    #[test]
    fn sampled_mode_is_seed_deterministic() {
        let mut config = bundled_scenario("static_sync").unwrap();
        config.population_mode = PopulationMode::Sampled;
        let a = sample_population(&config, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_population(&config, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.users.len(), 100);
    }
}
