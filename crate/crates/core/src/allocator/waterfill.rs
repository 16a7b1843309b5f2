use super::StorageScale;
use crate::model::VideoCatalog;

/// Storage split a helper settles on at fixed prices.
///
/// `k_per_video[m]` is the sum of the helper's availability prices over its
/// users of video `m`. Profit per video is `r_m·Σk − μ·V_m`, with the storage
/// price measured in `scale` units, which equals `r_m·(Σk − l_m·μ)`. Videos are
/// filled whole in descending profit order (ties to the lower index) while
/// profit is positive and space remains; the marginal video is filled
/// fractionally.
pub fn water_filling_storage(
    k_per_video: &[f64],
    mu: f64,
    storage_kbit: f64,
    catalog: &VideoCatalog,
    scale: &StorageScale,
) -> Vec<f64> {
    let videos = catalog.videos();
    let mut order: Vec<(usize, f64)> = videos
        .iter()
        .enumerate()
        .map(|(m, v)| {
            let k = k_per_video.get(m).copied().unwrap_or(0.0);
            (
                m,
                v.rate_kbps * (k - v.duration_s / scale.duration_unit_s * mu),
            )
        })
        .collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut f = vec![0.0; videos.len()];
    let mut remaining = storage_kbit;
    for (m, profit) in order {
        if profit <= 0.0 || remaining <= 0.0 {
            break;
        }
        let take = (remaining / videos[m].size_kbit).min(1.0);
        f[m] = take;
        remaining -= take * videos[m].size_kbit;
    }
    f
}
