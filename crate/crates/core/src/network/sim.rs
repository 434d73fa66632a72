//! Link key establishment and the network timeline.
//!
//! Dedicated links (router and direct) run their pulses independently and
//! in parallel. Switched links share one timeline: the switch hands each
//! leaf a round-robin slot, a leaf runs whole sessions inside its slot, and
//! a session cut off by the slot end is discarded. Every link distills its
//! collected detections once, at the end, and deposits the key into the
//! pair's pool in link order, so a fixed seed fixes every pool bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bits::Bits;
use crate::decoy::{key_rate, IntensityClass, ObservedStatistics, ProtocolParams, RateEstimate};
use crate::link_sim::{simulate_detections, SessionRecord};
use crate::postprocessing::{distill, sift, DistillSummary, MAX_QBER};
use crate::types::NodePair;

use super::pool::KeyPool;
use super::switch::{round_robin_schedule, SwitchInterval};
use super::topology::{Link, LinkKind, Topology};
use super::NetworkError;

/// Cascade needs a positive QBER estimate to size its blocks.
const MIN_CASCADE_QBER: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkRun {
    pub route: String,
    pub pair: NodePair,
    pub kind: LinkKind,
    pub wavelength_nm: Option<u32>,
    pub distance_km: f64,
    pub attenuation_db: f64,
    pub pulses: u64,
    pub sessions_completed: u32,
    pub sessions_aborted: u32,
    pub stats: ObservedStatistics,
    pub estimate: RateEstimate,
    pub distill: Option<DistillSummary>,
    pub deposited_bits: u64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkRun {
    pub seed: u64,
    pub pulses_per_link: u64,
    pub horizon_s: f64,
    pub links: Vec<LinkRun>,
    pub switch_log: Vec<SwitchInterval>,
}

struct Distillation {
    estimate: RateEstimate,
    summary: Option<DistillSummary>,
    key: Option<Bits>,
    note: Option<String>,
}

fn distill_record(link: &Link, params: &ProtocolParams, record: &SessionRecord, seed: u64) -> Distillation {
    let stats = &record.stats;
    let estimate = key_rate(stats, params);
    let fail = |estimate: RateEstimate, note: String| Distillation {
        estimate,
        summary: None,
        key: None,
        note: Some(note),
    };
    if let Some(reason) = estimate.no_key {
        return fail(estimate, format!("no secure key: {reason}"));
    }
    if stats.signal.qber > MAX_QBER {
        return fail(estimate, format!("signal QBER {:.4} too high to reconcile", stats.signal.qber));
    }
    let qber = stats.signal.qber.max(MIN_CASCADE_QBER);
    let pair = match sift(&record.sender, &record.receiver, Some(IntensityClass::Signal), qber) {
        Ok(p) if !p.is_empty() => p,
        Ok(_) => return fail(estimate, "no sifted signal bits".into()),
        Err(e) => return fail(estimate, format!("sifting failed: {e}")),
    };
    match distill(&pair, &estimate, stats, params, link.pair(), 0, seed) {
        Ok(d) => Distillation {
            estimate,
            summary: Some(d.summary),
            key: Some(d.sender_block.bits),
            note: None,
        },
        Err(e) => fail(estimate, format!("block discarded: {e}")),
    }
}

fn link_run(link: &Link, pulses: u64, completed: u32, aborted: u32, stats: ObservedStatistics, d: &Distillation) -> LinkRun {
    LinkRun {
        route: link.route.clone(),
        pair: link.pair(),
        kind: link.kind,
        wavelength_nm: link.wavelength_nm,
        distance_km: link.distance_km,
        attenuation_db: link.attenuation_db,
        pulses,
        sessions_completed: completed,
        sessions_aborted: aborted,
        stats,
        estimate: d.estimate.clone(),
        distill: d.summary.clone(),
        deposited_bits: 0,
        note: d.note.clone(),
    }
}

/// One session on one link, distilled and deposited. A switched link must
/// hold the switch. On failure the pool is untouched.
pub fn establish_link_keys(
    topology: &Topology,
    pair: &NodePair,
    n_pulses: u64,
    seed: u64,
    pool: &KeyPool,
) -> Result<LinkRun, NetworkError> {
    let link = topology.link(pair).ok_or_else(|| NetworkError::NoLink(pair.clone()))?;
    if link.kind == LinkKind::Switch {
        topology.switch.as_ref().expect("switched link implies a switch").check_route(pair)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let record = simulate_detections(&link.model, &topology.params, n_pulses, rng.gen());
    let d = distill_record(link, &topology.params, &record, rng.gen());
    if let Some(reason) = d.estimate.no_key {
        return Err(NetworkError::NoSecureKey {
            route: link.route.clone(),
            reason,
        });
    }
    let Some(key) = &d.key else {
        return Err(NetworkError::Distill {
            route: link.route.clone(),
            message: d.note.clone().unwrap_or_default(),
        });
    };
    let mut run = link_run(link, n_pulses, 1, 0, record.stats, &d);
    run.deposited_bits = key.len() as u64;
    pool.deposit(pair, key.clone());
    Ok(run)
}

/// Appends `next` to `acc`, shifting pulse indices past `acc`'s pulses.
fn append_record(acc: &mut Option<SessionRecord>, mut next: SessionRecord) {
    let Some(a) = acc else {
        *acc = Some(next);
        return;
    };
    let offset = a.stats.total_pulses();
    for e in &mut next.sender {
        e.index += offset;
    }
    for e in &mut next.receiver {
        e.index += offset;
    }
    a.stats = a.stats.merge(&next.stats);
    a.sender.extend(next.sender);
    a.receiver.extend(next.receiver);
}

/// Runs every link of the topology and fills `pool`.
///
/// Dedicated links each run `pulses_per_link` pulses. The switch timeline
/// lasts as long as the slowest dedicated link would need for that many
/// pulses.
pub fn simulate_network(
    topology: &mut Topology,
    pulses_per_link: u64,
    seed: u64,
    pool: &KeyPool,
) -> Result<NetworkRun, NetworkError> {
    let params = topology.params;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<(u64, u64)> = topology.links.iter().map(|_| (rng.gen(), rng.gen())).collect();
    let horizon_s = topology
        .links
        .iter()
        .map(|l| pulses_per_link as f64 / l.model.pulse_rate_hz)
        .fold(0.0, f64::max);

    let mut outcomes: Vec<Option<(LinkRun, Option<Bits>)>> = vec![None; topology.links.len()];

    std::thread::scope(|scope| {
        let handles: Vec<_> = topology
            .links
            .iter()
            .enumerate()
            .filter(|(_, l)| l.kind != LinkKind::Switch)
            .map(|(i, link)| {
                let (sim_seed, distill_seed) = seeds[i];
                scope.spawn(move || {
                    let record = simulate_detections(&link.model, &params, pulses_per_link, sim_seed);
                    let d = distill_record(link, &params, &record, distill_seed);
                    (i, link_run(link, pulses_per_link, 1, 0, record.stats, &d), d.key)
                })
            })
            .collect();
        for h in handles {
            let (i, run, key) = h.join().expect("link worker panicked");
            outcomes[i] = Some((run, key));
        }
    });

    let switch_log = match topology.switch.as_mut() {
        Some(switch) => {
            let slots = round_robin_schedule(&switch.leaves.clone(), topology.switch_quantum_s, horizon_s);
            let session_s = topology.switch_session_s;
            let hub = switch.hub.clone();
            let leaf_links: Vec<usize> = switch
                .leaves
                .iter()
                .map(|leaf| {
                    let pair = NodePair::new(hub.clone(), leaf.clone());
                    topology
                        .links
                        .iter()
                        .position(|l| l.pair() == pair)
                        .expect("every leaf has a switch link")
                })
                .collect();
            let mut session_rngs: Vec<ChaCha8Rng> =
                leaf_links.iter().map(|&i| ChaCha8Rng::seed_from_u64(seeds[i].0)).collect();
            let mut acc: Vec<Option<SessionRecord>> = vec![None; leaf_links.len()];
            let mut completed = vec![0u32; leaf_links.len()];
            let mut aborted = vec![0u32; leaf_links.len()];

            for slot in &slots {
                switch.connect(&slot.leaf, slot.start_s)?;
                let k = switch.leaves.iter().position(|l| *l == slot.leaf).expect("slot leaf");
                let link = &topology.links[leaf_links[k]];
                let length = slot.end_s - slot.start_s;
                let whole = ((length / session_s) + 1e-9).floor() as u32;
                let session_pulses = (session_s * link.model.pulse_rate_hz).round() as u64;
                for _ in 0..whole {
                    switch.check_route(&link.pair())?;
                    let record = simulate_detections(&link.model, &params, session_pulses, session_rngs[k].gen());
                    append_record(&mut acc[k], record);
                    completed[k] += 1;
                }
                if length - whole as f64 * session_s > 1e-9 {
                    aborted[k] += 1;
                }
            }
            switch.disconnect(horizon_s);

            for (k, &i) in leaf_links.iter().enumerate() {
                let link = &topology.links[i];
                let record = acc[k].take().unwrap_or_else(|| simulate_detections(&link.model, &params, 0, 0));
                let pulses = record.stats.total_pulses();
                let d = if pulses == 0 {
                    Distillation {
                        estimate: key_rate(&record.stats, &params),
                        summary: None,
                        key: None,
                        note: Some("never connected".into()),
                    }
                } else {
                    distill_record(link, &params, &record, seeds[i].1)
                };
                let mut run = link_run(link, pulses, completed[k], aborted[k], record.stats, &d);
                if aborted[k] > 0 {
                    let cut = format!("{} session(s) cut off at switch-over", aborted[k]);
                    run.note = Some(match run.note {
                        Some(n) => format!("{n}; {cut}"),
                        None => cut,
                    });
                }
                outcomes[i] = Some((run, d.key));
            }
            switch.log().to_vec()
        }
        None => Vec::new(),
    };

    let mut links = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        let (mut run, key) = outcome.expect("every link ran");
        if let Some(key) = key {
            run.deposited_bits = key.len() as u64;
            pool.deposit(&run.pair, key);
        }
        links.push(run);
    }
    Ok(NetworkRun {
        seed,
        pulses_per_link,
        horizon_s,
        links,
        switch_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::table2_records;
    use crate::network::switch::is_exclusive;
    use crate::network::{build_topology, ScenarioConfig};

    fn fixture() -> Topology {
        build_topology(&ScenarioConfig::default_fixture(), &table2_records()).unwrap()
    }

    #[test]
    fn single_link_deposits_and_is_deterministic() {
        let t = fixture();
        let pair = NodePair::new("B", "D");
        let (p1, p2) = (KeyPool::new(0), KeyPool::new(0));
        let r1 = establish_link_keys(&t, &pair, 4_000_000, 11, &p1).unwrap();
        let r2 = establish_link_keys(&t, &pair, 4_000_000, 11, &p2).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.deposited_bits > 0);
        assert_eq!(p1.available(&pair), r1.deposited_bits);
        let k1 = p1.draw(&pair, r1.deposited_bits as usize).unwrap();
        let k2 = p2.draw(&pair, r1.deposited_bits as usize).unwrap();
        assert_eq!(k1, k2);
    }

    #[test]
    fn switched_route_needs_the_switch() {
        let mut t = fixture();
        let pool = KeyPool::new(0);
        let de = NodePair::new("D", "E");
        t.switch.as_mut().unwrap().connect(&"F".into(), 0.0).unwrap();
        assert!(matches!(
            establish_link_keys(&t, &de, 1000, 1, &pool),
            Err(NetworkError::SwitchBusy { .. })
        ));
        assert_eq!(pool.available(&de), 0);
    }

    #[test]
    fn no_key_leaves_pool_untouched() {
        let mut t = fixture();
        let pool = KeyPool::new(0);
        let pair = NodePair::new("D", "G");
        let link = t.links.iter_mut().find(|l| l.route == "D-G").unwrap();
        link.model.interferometer.visibility = 0.7;
        link.model.source.decoy_misalignment = None;
        assert!(matches!(
            establish_link_keys(&t, &pair, 1_000_000, 3, &pool),
            Err(NetworkError::NoSecureKey { .. })
        ));
        assert_eq!(pool.level(&pair).produced_bits, 0);
    }

    #[test]
    fn network_run_fills_pools_and_keeps_switch_exclusive() {
        let mut t = fixture();
        let pool = KeyPool::new(0);
        let run = simulate_network(&mut t, 4_000_000, 5, &pool).unwrap();
        assert_eq!(run.links.len(), 9);
        assert!(is_exclusive(&run.switch_log));
        let de = &run.links[6];
        let df = &run.links[7];
        assert!(de.sessions_completed > 0 && df.sessions_completed > 0);
        let ratio = (de.pulses + df.pulses) as f64 / 4_000_000.0;
        assert!((0.8..1.2).contains(&ratio), "switched pulses share {ratio}");
        for r in &run.links {
            assert_eq!(pool.level(&r.pair).produced_bits, r.deposited_bits);
        }
    }

    #[test]
    fn switch_cutoff_discards_sessions() {
        let mut t = fixture();
        t.switch_session_s = 0.4;
        let run = simulate_network(&mut t, 1_000_000, 5, &KeyPool::new(0)).unwrap();
        let de = &run.links[6];
        assert!(de.sessions_aborted > 0);
        assert!(de.note.as_deref().unwrap().contains("cut off"));
    }
}
