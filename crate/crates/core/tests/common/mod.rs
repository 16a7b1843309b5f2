#![allow(dead_code)]

use plugvod::model::{
    Candidates, Edge, HelperId, HelperNode, Overlay, Population, UserId, UserNode, VideoCatalog,
    VideoId, VideoSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A fixed-topology allocation instance.
pub struct Instance {
    pub catalog: VideoCatalog,
    pub population: Population,
    pub overlay: Overlay,
}

pub fn user(id: u32, video: usize, cap: usize) -> UserNode {
    UserNode {
        id: UserId(id),
        video: VideoId(video),
        max_neighbors: cap,
        candidates: Candidates::All,
        update_period_s: 1.0,
        buffer_time_s: 30.0,
    }
}

pub fn helper(id: u32, upload: f64, storage_kbit: f64, cap: usize) -> HelperNode {
    HelperNode {
        id: HelperId(id),
        upload_kbps: upload,
        storage_kbit,
        max_neighbors: cap,
        candidates: Candidates::All,
        update_period_s: 1.0,
    }
}

/// 1–3 helpers, 1–4 users, 1–3 videos, every user linked to at least one
/// helper. Storage ranges from a fraction of one video to the whole catalog.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let videos = rng.random_range(1..=3);
    let helpers = rng.random_range(1..=3u32);
    let users = rng.random_range(1..=4u32);
    let catalog = VideoCatalog::new(
        (0..videos)
            .map(|_| {
                let rate = 100.0 * rng.random_range(2..=12) as f64;
                let duration = 600.0 * rng.random_range(1..=12) as f64;
                VideoSpec::new(rate, duration).unwrap()
            })
            .collect(),
    );
    let total_size: f64 = catalog.videos().iter().map(|v| v.size_kbit).sum();
    let mut edges = Vec::new();
    for u in 1..=users {
        for h in 1..=helpers {
            if rng.random_bool(0.6) {
                edges.push(Edge::new(HelperId(h), UserId(u)));
            }
        }
        if !edges.iter().any(|e| e.user == UserId(u)) {
            let h = rng.random_range(1..=helpers);
            edges.push(Edge::new(HelperId(h), UserId(u)));
        }
    }
    let user_nodes = (1..=users)
        .map(|u| user(u, rng.random_range(0..videos), helpers as usize))
        .collect();
    let helper_nodes = (1..=helpers)
        .map(|h| {
            let upload = 50.0 * rng.random_range(2..=20) as f64;
            let storage = total_size * rng.random_range(0.2..1.2);
            helper(h, upload, storage, users as usize)
        })
        .collect();
    Instance {
        catalog,
        population: Population::new(user_nodes, helper_nodes).unwrap(),
        overlay: Overlay::from_edges(edges),
    }
}
