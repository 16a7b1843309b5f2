use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1};
use sha2::{Digest, Sha256};

use super::buffer::{UserBuffer, WindowRecord};
use super::event::{Event, EventKind, EventQueue, Message};
use super::metrics::{HelperRow, MetricsLog, MetricsRow, RunMeta};
use super::outbox::Outbox;
use super::{streams, RunOptions, SwitchRecord};
use crate::allocator::{step_in_place, subgradient_g, AllocatorConfig, Marginals, Problem, Scope};
use crate::error::{Error, Result};
use crate::harness::{sample_helper, sample_population, sample_user, ClockMode, ScenarioConfig};
use crate::model::{
    effective_contribution, intrinsic_deficit, validate_overlay, AllocationState, Edge, HelperId,
    HelperNode, Overlay, PeerRef, Population, UserId, UserNode, VideoCatalog, VideoId,
};
use crate::topology::{
    addable_edges, peer_edges, perform_choke, ChokeOutcome, ChokeParams, ChokePolicy,
    PolicyRegistry,
};

#[derive(Debug, Clone, Copy)]
struct LinkDelay {
    down: f64,
    up: f64,
}

struct UserRuntime {
    received: BTreeMap<HelperId, f64>,
    measured: BTreeMap<HelperId, f64>,
    buffer: UserBuffer,
    choke_epoch: u64,
}

struct HelperRuntime {
    outbox: Outbox,
    choke_epoch: u64,
}

pub(super) struct World<'a> {
    scenario: &'a ScenarioConfig,
    options: RunOptions,
    catalog: VideoCatalog,
    population: Population,
    overlay: Overlay,
    alloc: AllocationState,
    allocator: AllocatorConfig,
    policy: Option<Arc<dyn ChokePolicy>>,
    params: ChokeParams,
    queue: EventQueue,
    rng_overlay: ChaCha8Rng,
    rng_delays: ChaCha8Rng,
    rng_chokes: ChaCha8Rng,
    rng_churn: ChaCha8Rng,
    rng_clocks: ChaCha8Rng,
    users: BTreeMap<UserId, UserRuntime>,
    helpers: BTreeMap<HelperId, HelperRuntime>,
    delays: BTreeMap<Edge, LinkDelay>,
    reported_g: BTreeMap<Edge, f64>,
    reported_x: BTreeMap<Edge, f64>,
    chokes: u64,
    aborts: u64,
    next_user: u32,
    next_helper: u32,
    churn_active: bool,
    rows: Vec<MetricsRow>,
    helper_rows: Vec<HelperRow>,
    windows: Vec<WindowRecord>,
    switch_log: Vec<SwitchRecord>,
    trace: Sha256,
    events: u64,
}

impl<'a> World<'a> {
    pub(super) fn new(
        scenario: &'a ScenarioConfig,
        seed: u64,
        options: RunOptions,
    ) -> Result<Self> {
        scenario.validate()?;
        let policy = if scenario.topology_update {
            scenario
                .choke
                .params()
                .validate()
                .map_err(|e| Error::InvalidScenario(format!("choke: {e}")))?;
            let p = PolicyRegistry::default().get(&scenario.choke.policy)?;
            if p.requires_global_utility() {
                return Err(Error::InvalidScenario(format!(
                    "choke.policy: `{}` needs global utility and only runs in analysis",
                    p.name()
                )));
            }
            Some(p)
        } else {
            None
        };
        let catalog = scenario.catalog()?;
        let population = sample_population(scenario, &mut streams::rng(seed, streams::POPULATION))?;
        population.check(scenario.catalog.segment_s)?;
        let next_user = population.users.keys().last().map_or(1, |u| u.0 + 1);
        let next_helper = population.helpers.keys().last().map_or(1, |h| h.0 + 1);
        let alloc = AllocationState::zero(&Overlay::new(), &population, &catalog);
        let mut world = Self {
            scenario,
            options,
            catalog,
            population,
            overlay: Overlay::new(),
            alloc,
            allocator: scenario.allocator,
            policy,
            params: scenario.choke.params(),
            queue: EventQueue::new(),
            rng_overlay: streams::rng(seed, streams::OVERLAY),
            rng_delays: streams::rng(seed, streams::DELAYS),
            rng_chokes: streams::rng(seed, streams::CHOKES),
            rng_churn: streams::rng(seed, streams::CHURN),
            rng_clocks: streams::rng(seed, streams::CLOCKS),
            users: BTreeMap::new(),
            helpers: BTreeMap::new(),
            delays: BTreeMap::new(),
            reported_g: BTreeMap::new(),
            reported_x: BTreeMap::new(),
            chokes: 0,
            aborts: 0,
            next_user,
            next_helper,
            churn_active: scenario.churn.is_some(),
            rows: Vec::new(),
            helper_rows: Vec::new(),
            windows: Vec::new(),
            switch_log: Vec::new(),
            trace: Sha256::new(),
            events: 0,
        };
        world.bootstrap();
        Ok(world)
    }

    fn horizon(&self) -> f64 {
        self.scenario.horizon_s
    }

    fn now(&self) -> f64 {
        self.queue.now()
    }

    /// Initial links, clocks and timers.
    fn bootstrap(&mut self) {
        let mut users: Vec<UserId> = self.population.users.keys().copied().collect();
        users.shuffle(&mut self.rng_overlay);
        for &u in &users {
            self.connect(PeerRef::User(u), Stream::Overlay);
        }
        let helpers: Vec<HelperId> = self.population.helpers.keys().copied().collect();
        for &h in &helpers {
            self.connect(PeerRef::Helper(h), Stream::Overlay);
        }
        let mut edges: Vec<Edge> = self.overlay.edges().collect();
        edges.sort();
        for e in edges {
            self.link_created(e);
        }

        for u in self.population.users.keys().copied().collect::<Vec<_>>() {
            self.start_user(u);
        }
        for h in helpers {
            self.start_helper(h);
        }
        for u in users {
            self.arm_choke(PeerRef::User(u));
        }
        for h in self.population.helpers.keys().copied().collect::<Vec<_>>() {
            self.arm_choke(PeerRef::Helper(h));
        }

        if let Some(churn) = self.scenario.churn {
            let first = Exp::new(1.0 / churn.arrival_mean_s)
                .expect("validated")
                .sample(&mut self.rng_churn);
            if first < churn.stop_time_s {
                self.queue.push(first, EventKind::Arrival);
            }
            let peers: Vec<PeerRef> = self
                .population
                .users
                .keys()
                .map(|&u| PeerRef::User(u))
                .chain(self.population.helpers.keys().map(|&h| PeerRef::Helper(h)))
                .collect();
            for p in peers {
                self.schedule_departure(p);
            }
        }
        for (i, s) in self.scenario.switches.iter().enumerate() {
            self.queue.push(s.at_s, EventKind::ChannelSwitch(i));
        }
        self.queue.push(0.0, EventKind::Sample);
    }

    /// Tracker bootstrap: link to uniformly drawn candidates with spare
    /// degree until the cap is reached or none remain.
    fn connect(&mut self, peer: PeerRef, stream: Stream) -> Vec<Edge> {
        let cap = match peer {
            PeerRef::User(u) => self.population.users[&u].max_neighbors,
            PeerRef::Helper(h) => self.population.helpers[&h].max_neighbors,
        };
        let mut added = Vec::new();
        while peer_edges(&self.overlay, peer).len() < cap {
            let options = addable_edges(&self.overlay, &self.population, peer, None);
            let rng = match stream {
                Stream::Overlay => &mut self.rng_overlay,
                Stream::Churn => &mut self.rng_churn,
            };
            let Some(&e) = options.choose(rng) else {
                break;
            };
            self.overlay.insert(e);
            added.push(e);
        }
        added
    }

    fn start_user(&mut self, u: UserId) {
        let now = self.now();
        let node = &self.population.users[&u];
        let period = node.update_period_s;
        let (buffer, record) = UserBuffer::start(
            u,
            now,
            self.catalog.rate(node.video),
            node.buffer_time_s,
            self.scenario.catalog.segment_s,
        );
        let end = buffer.window_end();
        self.windows.push(record);
        self.users.insert(
            u,
            UserRuntime {
                received: BTreeMap::new(),
                measured: BTreeMap::new(),
                buffer,
                choke_epoch: 0,
            },
        );
        let phase = self.phase(period);
        self.queue.push(now + phase, EventKind::UserRateUpdate(u));
        self.queue
            .push(end, EventKind::UserBufferRefill { user: u, epoch: 0 });
    }

    fn start_helper(&mut self, h: HelperId) {
        let now = self.now();
        let period = self.population.helpers[&h].update_period_s;
        self.alloc.add_helper(h, self.catalog.len());
        self.helpers.insert(
            h,
            HelperRuntime {
                outbox: Outbox::new(),
                choke_epoch: 0,
            },
        );
        let phase = self.phase(period);
        self.queue.push(now + phase, EventKind::HelperTick(h));
        self.queue
            .push(now + phase.fract(), EventKind::HelperSend(h));
    }

    fn phase(&mut self, period: f64) -> f64 {
        match self.scenario.clocks {
            ClockMode::Synchronized => 0.0,
            ClockMode::Asynchronous => self.rng_clocks.random::<f64>() * period,
        }
    }

    fn link_created(&mut self, e: Edge) {
        let d = self.scenario.delay;
        let mut draw = || d.min_s + (d.max_s - d.min_s) * self.rng_delays.random::<f64>();
        let down = draw();
        let up = draw();
        self.delays.insert(e, LinkDelay { down, up });
        self.alloc.add_edge(e);
    }

    fn link_removed(&mut self, e: Edge) {
        self.delays.remove(&e);
        self.alloc.remove_edge(e);
        self.reported_g.remove(&e);
        self.reported_x.remove(&e);
        if let Some(rt) = self.helpers.get_mut(&e.helper) {
            rt.outbox.remove(e.user);
        }
        if let Some(rt) = self.users.get_mut(&e.user) {
            rt.measured.remove(&e.helper);
        }
    }

    fn schedule_departure(&mut self, peer: PeerRef) {
        let Some(churn) = self.scenario.churn else {
            return;
        };
        let life = Exp::new(1.0 / churn.lifetime_mean_s)
            .expect("validated")
            .sample(&mut self.rng_churn);
        let at = self.now() + life;
        if at < churn.stop_time_s {
            self.queue.push(at, EventKind::Departure(peer));
        }
    }

    /// Link rates as the peer sees them: measured for users, allocated for
    /// helpers.
    fn rate_view(&self, peer: PeerRef, e: Edge) -> f64 {
        match peer {
            PeerRef::User(u) => self
                .users
                .get(&u)
                .and_then(|rt| rt.measured.get(&e.helper))
                .copied()
                .unwrap_or(0.0),
            PeerRef::Helper(_) => self.alloc.x(e),
        }
    }

    /// Draws a fresh countdown for `peer`, invalidating any pending one.
    fn arm_choke(&mut self, peer: PeerRef) {
        let epoch = match peer {
            PeerRef::User(u) => self.users.get_mut(&u).map(|rt| {
                rt.choke_epoch += 1;
                rt.choke_epoch
            }),
            PeerRef::Helper(h) => self.helpers.get_mut(&h).map(|rt| {
                rt.choke_epoch += 1;
                rt.choke_epoch
            }),
        };
        let (Some(epoch), Some(policy)) = (epoch, self.policy.clone()) else {
            return;
        };
        let (candidates, cap) = match peer {
            PeerRef::User(u) => {
                let n = &self.population.users[&u];
                (
                    n.candidates.count(self.population.helpers.len()),
                    n.max_neighbors,
                )
            }
            PeerRef::Helper(h) => {
                let n = &self.population.helpers[&h];
                (
                    n.candidates.count(self.population.users.len()),
                    n.max_neighbors,
                )
            }
        };
        let surplus = candidates.saturating_sub(cap);
        let rates: Vec<f64> = peer_edges(&self.overlay, peer)
            .into_iter()
            .map(|e| self.rate_view(peer, e))
            .collect();
        let Some(log_rate) = policy.log_countdown_rate(surplus, &rates, &self.params, None) else {
            return;
        };
        let e: f64 = Exp1.sample(&mut self.rng_chokes);
        let wait = (e.ln() - log_rate).exp();
        let at = self.now() + wait;
        if at.is_finite() && at <= self.horizon() {
            self.queue.push(at, EventKind::Choke { peer, epoch });
        }
    }

    pub(super) fn run(mut self, seed: u64) -> Result<(MetricsLog, Vec<SwitchRecord>)> {
        let horizon = self.horizon();
        while let Some(event) = self.queue.pop_until(horizon) {
            self.record(&event);
            self.dispatch(event)?;
            if self.options.check_invariants {
                self.check_invariants()?;
            }
        }
        let meta = RunMeta {
            scenario: self.scenario.name.clone(),
            seed,
            config_digest: self.scenario.digest(),
            population_digest: self.scenario.population_digest(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            videos: self.catalog.len(),
        };
        let log = MetricsLog {
            meta,
            rows: self.rows,
            helper_rows: self.helper_rows,
            windows: self.windows,
            events: self.events,
            trace_digest: hex::encode(self.trace.finalize()),
        };
        Ok((log, self.switch_log))
    }

    fn record(&mut self, event: &Event) {
        self.events += 1;
        self.trace.update(event.time_s.to_bits().to_le_bytes());
        self.trace.update([event.kind.tag()]);
    }

    fn check_invariants(&self) -> Result<()> {
        let report = validate_overlay(&self.overlay, &self.population);
        if !report.valid {
            return Err(Error::Structural(format!(
                "overlay invalid at t={}: {:?}",
                self.now(),
                report.violations
            )));
        }
        self.alloc
            .check_consistency(&self.overlay, &self.population, &self.catalog)?;
        if !self.alloc.within_bounds() {
            return Err(Error::Structural(format!(
                "allocation out of bounds at t={}",
                self.now()
            )));
        }
        Ok(())
    }

    fn dispatch(&mut self, event: Event) -> Result<()> {
        match event.kind {
            EventKind::Departure(peer) => self.on_departure(peer),
            EventKind::Arrival => self.on_arrival()?,
            EventKind::ChannelSwitch(i) => self.on_switch(i),
            EventKind::MessageDelivery(m) => self.on_message(m),
            EventKind::UserRateUpdate(u) => self.on_user_update(u),
            EventKind::HelperTick(h) => self.on_helper_tick(h)?,
            EventKind::HelperSend(h) => self.on_helper_send(h),
            EventKind::UserBufferRefill { user, epoch } => self.on_refill(user, epoch),
            EventKind::Choke { peer, epoch } => self.on_choke(peer, epoch)?,
            EventKind::Sample => self.on_sample(),
        }
        Ok(())
    }

    fn on_user_update(&mut self, u: UserId) {
        let Some(node) = self.population.users.get(&u) else {
            return;
        };
        let period = node.update_period_s;
        let rate = self.catalog.rate(node.video);
        let helpers: Vec<HelperId> = self.overlay.helpers_of(u).collect();
        let rt = self.users.get_mut(&u).expect("present user has runtime");
        let received = std::mem::take(&mut rt.received);
        rt.measured = helpers
            .iter()
            .map(|h| (*h, received.get(h).copied().unwrap_or(0.0) / period))
            .collect();
        let total: f64 = rt.measured.values().sum();
        let g = subgradient_g(total, rate);
        let now = self.now();
        for h in helpers {
            let edge = Edge::new(h, u);
            let measured_x = self.users[&u].measured[&h];
            let delay = self.delays[&edge].up;
            self.queue.push(
                now + delay,
                EventKind::MessageDelivery(Message::Report {
                    edge,
                    g,
                    measured_x,
                }),
            );
        }
        self.queue.push(now + period, EventKind::UserRateUpdate(u));
    }

    fn on_message(&mut self, message: Message) {
        match message {
            Message::Report {
                edge,
                g,
                measured_x,
            } => {
                if self.overlay.contains(edge) {
                    self.reported_g.insert(edge, g);
                    self.reported_x.insert(edge, measured_x);
                }
            }
            Message::Packets { edge, kbit } => {
                if !self.population.helpers.contains_key(&edge.helper) {
                    return;
                }
                if let Some(rt) = self.users.get_mut(&edge.user) {
                    *rt.received.entry(edge.helper).or_default() += kbit;
                    rt.buffer.credit(kbit);
                }
            }
        }
    }

    fn on_helper_tick(&mut self, h: HelperId) -> Result<()> {
        let Some(node) = self.population.helpers.get(&h) else {
            return Ok(());
        };
        let period = node.update_period_s;
        let capacity = node.upload_kbps * period;
        let problem = Problem::new(&self.overlay, &self.catalog, &self.population);
        step_in_place(
            &mut self.alloc,
            &problem,
            &self.allocator,
            Scope::Helper(h),
            Marginals::Reported(&self.reported_g),
        )?;
        let allocations: Vec<(UserId, f64)> = self
            .overlay
            .users_of(h)
            .map(|u| (u, self.alloc.x(Edge::new(h, u))))
            .collect();
        let rt = self
            .helpers
            .get_mut(&h)
            .expect("present helper has runtime");
        rt.outbox.enqueue(&allocations, period, capacity);
        self.queue
            .push(self.now() + period, EventKind::HelperTick(h));
        Ok(())
    }

    fn on_helper_send(&mut self, h: HelperId) {
        let Some(node) = self.population.helpers.get(&h) else {
            return;
        };
        let budget = node.upload_kbps;
        let now = self.now();
        let sent = self
            .helpers
            .get_mut(&h)
            .expect("present helper has runtime")
            .outbox
            .drain(budget);
        for (u, kbit) in sent {
            let edge = Edge::new(h, u);
            let Some(delay) = self.delays.get(&edge) else {
                continue;
            };
            self.queue.push(
                now + delay.down,
                EventKind::MessageDelivery(Message::Packets { edge, kbit }),
            );
        }
        self.queue.push(now + 1.0, EventKind::HelperSend(h));
    }

    fn on_refill(&mut self, u: UserId, epoch: u64) {
        let now = self.now();
        let Some(rt) = self.users.get_mut(&u) else {
            return;
        };
        if rt.buffer.epoch() != epoch {
            return;
        }
        let record = rt.buffer.refill(u, now);
        let end = rt.buffer.window_end();
        self.windows.push(record);
        self.queue
            .push(end, EventKind::UserBufferRefill { user: u, epoch });
    }

    fn on_choke(&mut self, peer: PeerRef, epoch: u64) -> Result<()> {
        let current = match peer {
            PeerRef::User(u) => self.users.get(&u).map(|rt| rt.choke_epoch),
            PeerRef::Helper(h) => self.helpers.get(&h).map(|rt| rt.choke_epoch),
        };
        if current != Some(epoch) {
            return Ok(());
        }
        let Some(policy) = self.policy.clone() else {
            return Ok(());
        };
        if peer_edges(&self.overlay, peer).is_empty() {
            return Ok(());
        }
        let views: BTreeMap<Edge, f64> = peer_edges(&self.overlay, peer)
            .into_iter()
            .map(|e| (e, self.rate_view(peer, e)))
            .collect();
        let outcome = perform_choke(
            &mut self.overlay,
            &self.population,
            peer,
            |e| views.get(&e).copied().unwrap_or(0.0),
            policy.as_ref(),
            &self.params,
            &mut self.rng_chokes,
        )?;
        match outcome {
            ChokeOutcome::Swapped { dropped, added } => {
                self.chokes += 1;
                self.link_removed(dropped);
                self.link_created(added);
                let mut touched = vec![
                    peer,
                    PeerRef::User(dropped.user),
                    PeerRef::Helper(dropped.helper),
                    PeerRef::User(added.user),
                    PeerRef::Helper(added.helper),
                ];
                touched.sort();
                touched.dedup();
                for p in touched {
                    self.arm_choke(p);
                }
            }
            ChokeOutcome::Aborted { .. } => {
                self.aborts += 1;
                self.arm_choke(peer);
            }
        }
        Ok(())
    }

    fn on_arrival(&mut self) -> Result<()> {
        let Some(churn) = self.scenario.churn else {
            return Ok(());
        };
        let now = self.now();
        if !self.churn_active || now >= churn.stop_time_s {
            return Ok(());
        }
        let u = UserId(self.next_user);
        self.next_user += 1;
        let h = HelperId(self.next_helper);
        self.next_helper += 1;
        let user: UserNode = sample_user(self.scenario, u.0, &mut self.rng_churn)?;
        let helper: HelperNode = sample_helper(self.scenario, h.0, &mut self.rng_churn)?;
        self.population.users.insert(u, user);
        self.population.helpers.insert(h, helper);
        self.start_user(u);
        self.start_helper(h);

        let mut touched = vec![PeerRef::User(u), PeerRef::Helper(h)];
        for peer in [PeerRef::User(u), PeerRef::Helper(h)] {
            for e in self.connect(peer, Stream::Churn) {
                self.link_created(e);
                touched.push(PeerRef::User(e.user));
                touched.push(PeerRef::Helper(e.helper));
            }
        }
        touched.sort();
        touched.dedup();
        for p in touched {
            self.arm_choke(p);
        }
        self.schedule_departure(PeerRef::User(u));
        self.schedule_departure(PeerRef::Helper(h));

        let gap = Exp::new(1.0 / churn.arrival_mean_s)
            .expect("validated")
            .sample(&mut self.rng_churn);
        if now + gap < churn.stop_time_s {
            self.queue.push(now + gap, EventKind::Arrival);
        }
        Ok(())
    }

    fn on_departure(&mut self, peer: PeerRef) {
        let removed = match peer {
            PeerRef::User(u) => {
                if self.population.users.remove(&u).is_none() {
                    log::debug!("departure of absent {u} ignored");
                    return;
                }
                self.users.remove(&u);
                self.alloc.remove_user(u);
                self.overlay.remove_user(u)
            }
            PeerRef::Helper(h) => {
                if self.population.helpers.remove(&h).is_none() {
                    log::debug!("departure of absent {h} ignored");
                    return;
                }
                self.helpers.remove(&h);
                let edges = self.overlay.remove_helper(h);
                self.alloc.remove_helper(h);
                edges
            }
        };
        for &e in &removed {
            self.link_removed(e);
        }
        let mut touched: Vec<PeerRef> = removed
            .iter()
            .map(|e| match peer {
                PeerRef::User(_) => PeerRef::Helper(e.helper),
                PeerRef::Helper(_) => PeerRef::User(e.user),
            })
            .collect();
        touched.sort();
        touched.dedup();
        for p in touched {
            self.arm_choke(p);
        }
    }

    fn on_switch(&mut self, index: usize) {
        let spec = &self.scenario.switches[index];
        let mut movers: Vec<UserId> = if spec.users.is_empty() {
            let from = VideoId(spec.from_video.expect("validated") - 1);
            self.population
                .users
                .values()
                .filter(|u| u.video == from)
                .map(|u| u.id)
                .collect()
        } else {
            spec.users
                .iter()
                .map(|&u| UserId(u))
                .filter(|u| self.population.users.contains_key(u))
                .collect()
        };
        movers.sort();
        let targets: Vec<VideoId> = spec.to_videos.iter().map(|&m| VideoId(m - 1)).collect();
        let now = self.now();
        let mut moved = Vec::new();
        for (i, u) in movers.into_iter().enumerate() {
            let to = targets[i % targets.len()];
            let node = self.population.users.get_mut(&u).expect("filtered");
            let from = node.video;
            if from == to {
                continue;
            }
            node.video = to;
            let rate = self.catalog.rate(to);
            let segment = self.scenario.catalog.segment_s;
            let rt = self.users.get_mut(&u).expect("present user has runtime");
            let record = rt.buffer.restart(u, now, rate, segment);
            let epoch = rt.buffer.epoch();
            let end = rt.buffer.window_end();
            self.windows.push(record);
            self.queue
                .push(end, EventKind::UserBufferRefill { user: u, epoch });
            for h in self.overlay.helpers_of(u).collect::<Vec<_>>() {
                if let Some(hr) = self.helpers.get_mut(&h) {
                    hr.outbox.remove(u);
                }
            }
            moved.push((u, from, to));
        }
        let mut exposure: BTreeMap<HelperId, usize> = BTreeMap::new();
        for (u, _, _) in &moved {
            for h in self.overlay.helpers_of(*u) {
                *exposure.entry(h).or_default() += 1;
            }
        }
        self.switch_log.push(SwitchRecord {
            at_s: now,
            moved,
            exposure,
        });
    }

    fn on_sample(&mut self) {
        let now = self.now();
        let server_load: f64 = self.users.values().map(|rt| rt.buffer.server_rate()).sum();
        self.rows.push(MetricsRow {
            t_s: now,
            server_load_kbps: server_load,
            intrinsic_deficit_kbps: intrinsic_deficit(&self.catalog, &self.population),
            total_contribution_kbps: effective_contribution(
                &self.overlay,
                &self.alloc,
                &self.catalog,
                &self.population,
            ),
            demand_kbps: self.population.demand(&self.catalog),
            supply_kbps: self.population.supply(),
            users: self.population.users.len(),
            helpers: self.population.helpers.len(),
            edges: self.overlay.len(),
            chokes: self.chokes,
            aborts: self.aborts,
        });
        for (&h, vars) in &self.alloc.helpers {
            self.helper_rows.push(HelperRow {
                t_s: now,
                helper: h,
                sum_x_kbps: self.alloc.helper_rate(h),
                lambda: vars.lambda,
                mu: vars.mu,
                f: vars.f.clone(),
            });
        }
        let next = now + self.scenario.sample_period_s;
        if next <= self.horizon() + 1e-9 {
            self.queue.push(next, EventKind::Sample);
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Stream {
    Overlay,
    Churn,
}
