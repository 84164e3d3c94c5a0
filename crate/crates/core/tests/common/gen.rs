//! Seeded random entity maps over a synthetic dataset.

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oda_core::datalake::synth::Manifest;
use oda_core::entities::{Entity, EntityMap};

fn found(v: impl Into<String>) -> Entity {
    Entity { present: true, value: Some(v.into()) }
}

fn rfc(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

/// Maps that always need a VKG: a job (by id or window), a metric (with
/// a window or job), or both. Windows are up to `max_hours` long; a few job
/// ids do not exist.
pub fn entity_maps(manifest: &Manifest, count: usize, max_hours: i64, seed: u64) -> Vec<EntityMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jobs: Vec<&String> = manifest.jobs.keys().collect();
    let nodes: Vec<&String> = manifest.racks.values().flatten().collect();
    let metric = &manifest.spec.metrics[0];
    let span = (manifest.month_end - manifest.month_start).num_seconds();
    (0..count)
        .map(|_| {
            let mut e = EntityMap::default();
            let len = rng.random_range(60..=max_hours * 3600);
            let start = manifest.month_start + Duration::seconds(rng.random_range(0..span - len));
            let window = |e: &mut EntityMap| {
                e.start_time = found(rfc(start));
                e.end_time = found(rfc(start + Duration::seconds(len)));
            };
            let job_by_id = |e: &mut EntityMap, rng: &mut ChaCha8Rng| {
                e.job = if rng.random_bool(0.1) { found("999999") } else { found(jobs.choose(rng).unwrap().as_str()) };
            };
            match rng.random_range(0..5) {
                0 => job_by_id(&mut e, &mut rng),
                1 => {
                    e.job = Entity { present: true, value: None };
                    window(&mut e);
                }
                2 | 3 => {
                    e.metric = found(&metric.metric);
                    e.plugin = found(&metric.plugin);
                    window(&mut e);
                    if rng.random_bool(0.5) {
                        e.node = found(nodes.choose(&mut rng).unwrap().as_str());
                    }
                }
                _ => {
                    e.metric = found(&metric.metric);
                    e.plugin = found(&metric.plugin);
                    job_by_id(&mut e, &mut rng);
                }
            }
            e
        })
        .collect()
}
