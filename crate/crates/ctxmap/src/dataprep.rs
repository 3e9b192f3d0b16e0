//! Dataset preparation: a seeded subsample utility and a small synthetic
//! biomedical benchmark used by the fixtures and the behavioural tests.

use std::collections::BTreeMap;

use ctxmap_core::document::{Document, QaItem};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Uniformly samples `round(fraction * len)` items with a seeded generator,
/// keeping their original order.
pub fn sample_fraction<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Vec<T> {
    assert!((0.0..=1.0).contains(&fraction), "fraction must lie in [0, 1]");
    let n = ((items.len() as f64) * fraction).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, items.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i].clone()).collect()
}

const PREFIXES: [&str; 8] = ["Zora", "Mela", "Tevi", "Quin", "Dapro", "Luma", "Ferro", "Nexa"];
const SUFFIXES: [&str; 5] = ["vine", "statin", "mab", "pril", "zole"];
const OUTCOMES: [&str; 20] = [
    "migraine frequency",
    "systolic pressure",
    "hospital readmission",
    "fasting glucose",
    "joint stiffness",
    "asthma exacerbation",
    "wound infection",
    "atrial fibrillation",
    "renal decline",
    "postoperative delirium",
    "neuropathic pain",
    "bone loss",
    "sepsis mortality",
    "ventilator dependence",
    "seizure recurrence",
    "liver fibrosis",
    "anemia severity",
    "psoriasis flares",
    "stroke recurrence",
    "insomnia severity",
];
const TOPICS: [&str; 24] = [
    "nurse staffing ratios",
    "hand hygiene audits",
    "telehealth adoption",
    "vaccine cold chains",
    "imaging turnaround",
    "antibiotic stewardship",
    "clinical trial registries",
    "medical billing codes",
    "ambulance response",
    "pharmacy inventory",
    "surgical checklists",
    "patient portal usage",
    "laboratory accreditation",
    "rural clinic funding",
    "residency duty hours",
    "hospital food service",
    "sterilization cycles",
    "electronic prescribing",
    "blood bank logistics",
    "triage protocols",
    "infection surveillance",
    "discharge planning",
    "medical device recalls",
    "interpreter services",
];

const VERDICTS: [(&str, &str); 3] = [
    ("A", "The treated group showed a clear and significant improvement over placebo, so the answer is yes."),
    ("B", "The treated group showed no difference from placebo, so the answer is no."),
    ("C", "Results were mixed across subgroups and the authors called the evidence inconclusive, so the answer is maybe."),
];

/// Forty yes/no/maybe questions about invented drugs. Each has one key
/// document, three hard negatives that restate the question without the
/// finding, and the corpus carries 24 unrelated documents on top.
pub fn synthetic_benchmark() -> (Vec<Document>, Vec<QaItem>) {
    let mut docs = Vec::new();
    let mut items = Vec::new();
    let options: BTreeMap<String, String> =
        [("A", "yes"), ("B", "no"), ("C", "maybe")].iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    for i in 0..40 {
        let drug = format!("{}{}", PREFIXES[i / 5], SUFFIXES[i % 5]);
        let outcome = OUTCOMES[i % OUTCOMES.len()];
        let (gold, verdict) = VERDICTS[i % 3];
        let question = format!("Does {drug} reduce {outcome} in adults?");
        let key_id = format!("key-{i:02}");
        docs.push(Document::new(
            key_id.clone(),
            format!("Randomized trial of {drug} for {outcome}"),
            format!("This trial tested whether {drug} does reduce {outcome} in adults. {verdict}"),
        ));
        let negatives = [
            "An editorial asks whether {drug} does reduce {outcome} in adults and calls for more trials.",
            "A protocol paper describes how a future study will test whether {drug} does reduce {outcome} in adults.",
            "A pharmacokinetic report asks whether {drug} does reduce {outcome} in adults but measured only drug levels.",
        ];
        for (j, text) in negatives.iter().enumerate() {
            docs.push(Document::new(
                format!("neg-{i:02}-{j}"),
                format!("{drug} and {outcome}: commentary {}", j + 1),
                text.replace("{drug}", &drug).replace("{outcome}", outcome),
            ));
        }
        items.push(QaItem {
            id: format!("q{i:02}"),
            question,
            options: options.clone(),
            gold_answer: gold.to_string(),
            key_doc_ids: vec![key_id],
        });
    }
    for (j, topic) in TOPICS.iter().enumerate() {
        docs.push(Document::new(
            format!("gen-{j:02}"),
            format!("Survey of {topic}"),
            format!("A regional survey summarised current practice in {topic} across teaching hospitals."),
        ));
    }
    (docs, items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ctxmap_core::document::Corpus;

    #[test]
    fn benchmark_is_well_formed() {
        let (docs, items) = synthetic_benchmark();
        let corpus = Corpus::from_documents(docs).unwrap();
        assert!(corpus.len() >= 64);
        assert_eq!(items.len(), 40);
        for item in items {
            let item = item.validate().unwrap();
            assert!(item.key_doc_ids.iter().all(|k| corpus.contains(k)));
        }
    }

    #[test]
    fn sampling_is_seeded_and_ordered() {
        let xs: Vec<u32> = (0..100).collect();
        let a = sample_fraction(&xs, 0.2, 7);
        assert_eq!(a.len(), 20);
        assert_eq!(a, sample_fraction(&xs, 0.2, 7));
        assert_ne!(a, sample_fraction(&xs, 0.2, 8));
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(sample_fraction(&xs, 0.0, 1).is_empty());
    }
}
