//! Seeded single-error corruption of valid queries, one class per
//! refinement rule.

use std::sync::LazyLock;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::ontology::Vocabulary;
use crate::query_pipeline::RuleId;

static PREFIX_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^PREFIX (\w+): <[^>]*>\n").unwrap());
static TYPED_TS: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#""(\d{4}-\d{2}-\d{2})T(\d{2}:\d{2}:\d{2})Z"\^\^xsd:dateTime"#).unwrap());
static ODA_TERM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\boda:([A-Za-z]+)").unwrap());
static XSD_TYPE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\^\^xsd:(dateTime|dayTimeDuration)").unwrap());

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corruption {
    pub class: RuleId,
    pub original: String,
    pub corrupted: String,
}

fn replace_nth(re: &Regex, text: &str, n: usize, with: impl FnOnce(&regex::Captures) -> String) -> String {
    let c = re.captures_iter(text).nth(n).expect("index in range");
    let m = c.get(0).unwrap();
    format!("{}{}{}", &text[..m.start()], with(&c), &text[m.end()..])
}

fn typo(rng: &mut ChaCha8Rng, word: &str) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let i = rng.random_range(0..chars.len());
    let letter = (b'a' + ((i * 7 + chars.len()) % 26) as u8) as char;
    match rng.random_range(0..4) {
        0 if chars.len() > 3 => {
            chars.remove(i);
        }
        1 => {
            chars[i] = if chars[i] == letter { 'x' } else { letter };
        }
        2 if i + 1 < chars.len() && chars[i] != chars[i + 1] => chars.swap(i, i + 1),
        _ => chars.insert(i, letter),
    }
    chars.into_iter().collect()
}

/// One seeded error of `class`, or `None` when the query offers no site
/// for it.
pub fn corrupt(query: &str, class: RuleId, vocab: &Vocabulary, rng: &mut ChaCha8Rng) -> Option<String> {
    match class {
        RuleId::R1 => {
            let wraps = [
                "```sparql\n{q}\n```",
                "```\n{q}```",
                "Here is the SPARQL query:\n\n{q}\n\nIt returns the requested values.",
                "Sure! The query is below.\n```sparql\n{q}\n```\nLet me know if you need anything else.",
            ];
            Some(wraps.choose(rng)?.replace("{q}", query.trim_end()))
        }
        RuleId::R2 => {
            let lines: Vec<(String, String)> = PREFIX_LINE
                .captures_iter(query)
                .map(|c| (c[0].to_owned(), c[1].to_owned()))
                .filter(|(_, p)| query.contains(&format!("{p}:")) && query.matches(&format!("{p}:")).count() > 1)
                .collect();
            let (line, _) = lines.choose(rng)?;
            Some(query.replacen(line.as_str(), "", 1))
        }
        RuleId::R3 => {
            let n = TYPED_TS.captures_iter(query).count();
            if n == 0 {
                return None;
            }
            let k = rng.random_range(0..n);
            let variant = rng.random_range(0..3);
            Some(replace_nth(&TYPED_TS, query, k, |c| match variant {
                0 => format!("\"{}T{}Z\"", &c[1], &c[2]),
                1 => format!("{}T{}Z", &c[1], &c[2]),
                _ => format!("\"{} {}\"", &c[1], &c[2]),
            }))
        }
        RuleId::R4 => {
            let sites: Vec<usize> = (0..ODA_TERM.captures_iter(query).count()).collect();
            let k = *sites.choose(rng)?;
            let name = ODA_TERM.captures_iter(query).nth(k)?[1].to_owned();
            let mut bad = typo(rng, &name);
            for _ in 0..8 {
                if !vocab.has_term(&bad) && bad != name {
                    break;
                }
                bad = typo(rng, &name);
            }
            if vocab.has_term(&bad) {
                return None;
            }
            Some(replace_nth(&ODA_TERM, query, k, |_| format!("oda:{bad}")))
        }
        RuleId::R5 => {
            let n = XSD_TYPE.captures_iter(query).count();
            if n == 0 {
                return None;
            }
            let k = rng.random_range(0..n);
            let variant = rng.random_range(0..4);
            Some(replace_nth(&XSD_TYPE, query, k, |c| {
                let local = &c[1];
                match variant {
                    0 => format!("^^xsd:{}", local.to_lowercase()),
                    1 => format!("^^xsd:{}", local.to_uppercase()),
                    2 => format!("^^xsd:{}{}", local[..1].to_uppercase(), &local[1..]),
                    _ => format!("^^<https://www.w3.org/2001/XMLSchema#{}>", local.to_lowercase()),
                }
            }))
        }
    }
}

/// `count` corruptions spread round-robin over the queries and, per query,
/// over the applicable rule classes.
pub fn corrupted_corpus(queries: &[String], count: usize, vocab: &Vocabulary, seed: u64) -> Vec<Corruption> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    if queries.is_empty() {
        return out;
    }
    let mut i = 0usize;
    let mut stalled = 0;
    while out.len() < count && stalled < RuleId::ALL.len() * queries.len() {
        let q = &queries[i % queries.len()];
        let class = RuleId::ALL[(i / queries.len() + i) % RuleId::ALL.len()];
        i += 1;
        match corrupt(q, class, vocab, &mut rng) {
            Some(c) if c != *q => {
                stalled = 0;
                out.push(Corruption { class, original: q.clone(), corrupted: c });
            }
            _ => stalled += 1,
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q: &str = "PREFIX oda: <https://oda.example/ontology#>\nPREFIX xsd: <http://www.w3.org/2001/XMLSchema#>\nSELECT ?j WHERE {\n  ?j oda:startTime ?t .\n  FILTER(?t >= \"2022-02-01T00:00:00Z\"^^xsd:dateTime)\n}\n";

    #[test]
    fn every_class_applies() {
        let v = Vocabulary::oda();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for class in RuleId::ALL {
            let c = corrupt(Q, class, &v, &mut rng).unwrap();
            assert_ne!(c, Q, "{class}");
        }
    }

    #[test]
    fn no_site_no_corruption() {
        let v = Vocabulary::oda();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = "PREFIX oda: <https://oda.example/ontology#>\nSELECT ?n WHERE { ?r oda:containsNode ?n }";
        assert_eq!(corrupt(q, RuleId::R3, &v, &mut rng), None);
        assert_eq!(corrupt(q, RuleId::R5, &v, &mut rng), None);
    }

    #[test]
    fn corpus_is_seeded() {
        let v = Vocabulary::oda();
        let qs = vec![Q.to_owned()];
        let a = corrupted_corpus(&qs, 20, &v, 9);
        assert_eq!(a.len(), 20);
        assert_eq!(a, corrupted_corpus(&qs, 20, &v, 9));
        assert!(RuleId::ALL.iter().all(|r| a.iter().any(|c| c.class == *r)));
    }
}
