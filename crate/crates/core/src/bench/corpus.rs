//! Seeded question corpus over the twelve archetypes.

use chrono::{DateTime, Duration, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datalake::synth::Manifest;
use crate::datalake::JobRecord;
use crate::sparql::Archetype;

const MINUTE_CHOICES: [u32; 5] = [30, 60, 120, 240, 480];

/// Everything needed to answer a question without parsing it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionParams {
    pub rack: Option<String>,
    pub node: Option<String>,
    pub job: Option<String>,
    pub plugin: Option<String>,
    pub metric: Option<String>,
    pub start: Option<DateTime<Utc>>,
    pub end: Option<DateTime<Utc>>,
    pub minutes: Option<u32>,
    pub threshold: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusQuestion {
    pub archetype: Archetype,
    pub text: String,
    pub params: QuestionParams,
}

fn ts(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%d %H:%M:%S").to_string()
}

/// Question text for an archetype with its placeholders filled.
pub fn render_question(a: Archetype, p: &QuestionParams) -> String {
    let s = |v: &Option<String>| v.clone().unwrap_or_default();
    let (start, end) = (p.start.map(ts).unwrap_or_default(), p.end.map(ts).unwrap_or_default());
    match a {
        Archetype::RackNodes => format!("Which nodes are present in the rack {}, and what are their positions?", s(&p.rack)),
        Archetype::JobNodes => format!("What were the nodes used by the job {}?", s(&p.job)),
        Archetype::JobMetricAverage => format!("What is the average {} consumption for the job {}?", s(&p.metric), s(&p.job)),
        Archetype::LongJobsSubmitted => format!(
            "Which jobs had execution time higher than {} minutes and were submitted between {start} and {end}?",
            p.minutes.unwrap_or(0)
        ),
        Archetype::NodeJobCount => format!("How many jobs were running on the node {} between {start} and {end}?", s(&p.node)),
        Archetype::NodeMetricStats => format!(
            "What is the maximum, minimum, and average {} of the node {} between {start} and {end}?",
            s(&p.metric),
            s(&p.node)
        ),
        Archetype::RackJobCount => format!("How many jobs were running on the rack {} between {start} and {end}?", s(&p.rack)),
        Archetype::NodesOverThreshold => format!(
            "Identify the nodes that exceeded the {} consumption threshold of {} between {start} and {end}.",
            s(&p.metric),
            p.threshold.unwrap_or(0)
        ),
        Archetype::AverageJobDuration => {
            format!("What is the average execution time of the jobs submitted between {start} and {end}?")
        }
        Archetype::JobsRunning => format!("List all jobs running between {start} and {end}."),
        Archetype::NodeMetricAverage => {
            format!("What is the average {} of node {} between {start} and {end}?", s(&p.metric), s(&p.node))
        }
        Archetype::JobDurations => format!("What is the duration of jobs between {start} and {end}?"),
    }
}

struct Gen<'a> {
    rng: ChaCha8Rng,
    manifest: &'a Manifest,
    jobs: &'a [JobRecord],
}

impl Gen<'_> {
    fn secs(&mut self, lo: i64, hi: i64) -> Duration {
        Duration::seconds(self.rng.random_range(lo..=hi))
    }

    /// A 1-12 h window inside the month.
    fn free_window(&mut self) -> (DateTime<Utc>, DateTime<Utc>) {
        let (ms, me) = (self.manifest.month_start, self.manifest.month_end);
        let len = self.secs(3600, 12 * 3600);
        let span = (me - ms - len).num_seconds().max(0);
        let start = ms + self.secs(0, span);
        (start, (start + len).min(me))
    }

    /// A window that starts shortly before some job's start, so job
    /// archetypes usually have non-empty answers.
    fn job_window(&mut self) -> (DateTime<Utc>, DateTime<Utc>) {
        let Some(job) = self.jobs.choose(&mut self.rng).cloned() else {
            return self.free_window();
        };
        let (ms, me) = (self.manifest.month_start, self.manifest.month_end);
        let lead = self.secs(0, 2 * 3600);
        let start = (job.start_time - lead).max(ms);
        let end = (job.start_time + self.secs(3600, 10 * 3600)).min(me);
        (start, end.max(start + Duration::seconds(1)))
    }

    fn pick<T: Clone>(&mut self, items: &[T]) -> T {
        items.choose(&mut self.rng).expect("non-empty").clone()
    }
}

/// `count` questions cycling through the archetypes in order, with
/// placeholders drawn from `manifest` and `jobs`.
pub fn generate_corpus(manifest: &Manifest, jobs: &[JobRecord], count: usize, seed: u64) -> Vec<CorpusQuestion> {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed), manifest, jobs };
    let racks: Vec<String> = manifest.racks.keys().cloned().collect();
    let nodes: Vec<String> = manifest.racks.values().flatten().cloned().collect();
    let job_ids: Vec<String> = manifest.jobs.keys().cloned().collect();
    let metrics: Vec<(String, String)> =
        manifest.spec.metrics.iter().map(|m| (m.plugin.clone(), m.metric.clone())).collect();
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let a = Archetype::ALL[i % Archetype::ALL.len()];
        let mut p = QuestionParams {
            rack: None,
            node: None,
            job: None,
            plugin: None,
            metric: None,
            start: None,
            end: None,
            minutes: None,
            threshold: None,
        };
        let uses_metric = matches!(
            a,
            Archetype::JobMetricAverage | Archetype::NodeMetricStats | Archetype::NodesOverThreshold | Archetype::NodeMetricAverage
        );
        if uses_metric {
            let (plugin, metric) = g.pick(&metrics);
            p.plugin = Some(plugin);
            p.metric = Some(metric);
        }
        match a {
            Archetype::RackNodes | Archetype::RackJobCount => p.rack = Some(g.pick(&racks)),
            Archetype::NodeJobCount | Archetype::NodeMetricStats | Archetype::NodeMetricAverage => {
                p.node = Some(g.pick(&nodes))
            }
            Archetype::JobNodes | Archetype::JobMetricAverage => p.job = Some(g.pick(&job_ids)),
            _ => {}
        }
        let window = match a {
            Archetype::RackNodes | Archetype::JobNodes | Archetype::JobMetricAverage => None,
            Archetype::NodeMetricStats | Archetype::NodesOverThreshold | Archetype::NodeMetricAverage => Some(g.free_window()),
            _ => Some(g.job_window()),
        };
        if let Some((s, e)) = window {
            p.start = Some(s);
            p.end = Some(e);
        }
        if a == Archetype::LongJobsSubmitted {
            p.minutes = Some(g.pick(&MINUTE_CHOICES));
        }
        if a == Archetype::NodesOverThreshold {
            p.threshold = Some(g.rng.random_range(380..=520));
        }
        out.push(CorpusQuestion { archetype: a, text: render_question(a, &p), params: p });
    }
    out
}
