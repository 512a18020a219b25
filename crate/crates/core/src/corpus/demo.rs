//! Synthetic 549-paper computer-science corpus.
//!
//! The generator is deterministic. Its marginals are pinned: 415 papers from
//! 2023 and 134 from 2024, 31 top-tier venue papers, 389 papers with a named
//! method, citation counts with mean 74.6, median 24 and range 0..=1674.
//! Citation values start from a log-normal draw and are then adjusted to hit
//! those marginals exactly.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};

use super::{PaperRecord, VenueTier};

pub const DEMO_SEED: u64 = 20_260_515;
pub const N_PAPERS: usize = 549;
pub const N_2023: usize = 415;
pub const N_TOP_TIER: usize = 31;
pub const N_NAMED_METHOD: usize = 389;
pub const MAX_CITATIONS: u64 = 1674;
pub const MEDIAN_CITATIONS: u64 = 24;
/// 74.6 * 549 rounded to an integer total.
pub const TOTAL_CITATIONS: u64 = 40_955;
const N_ZERO: usize = 44;

pub fn snapshot_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2026, 5, 15).expect("valid date")
}

struct Field {
    tag: &'static str,
    tasks: &'static [&'static str],
    nouns: &'static [&'static str],
    top: &'static [&'static str],
    mid: &'static [&'static str],
    other: &'static [&'static str],
}

const FIELDS: &[Field] = &[
    Field {
        tag: "machine-learning",
        tasks: &["Few-Shot Classification", "Continual Learning", "Offline Reinforcement Learning", "Tabular Prediction", "Time Series Forecasting", "Domain Generalization", "Active Learning"],
        nouns: &["Gradient Estimators", "Kernel Machines", "Mixture Models", "Policy Optimization", "Contrastive Objectives", "Bayesian Ensembles", "Sparse Attention"],
        top: &["NeurIPS", "ICML"],
        mid: &["AISTATS", "ECML-PKDD", "UAI"],
        other: &["Neural Networks", "Machine Learning Journal"],
    },
    Field {
        tag: "computer-vision",
        tasks: &["Semantic Segmentation", "Object Detection", "Video Understanding", "Depth Estimation", "Image Restoration", "Pose Estimation", "Scene Reconstruction"],
        nouns: &["Vision Transformers", "Feature Pyramids", "Diffusion Priors", "Neural Radiance Fields", "Point Cloud Encoders", "Optical Flow Networks"],
        top: &["CVPR", "ICCV"],
        mid: &["BMVC", "WACV", "ACCV"],
        other: &["Pattern Recognition Letters", "Image and Vision Computing"],
    },
    Field {
        tag: "nlp",
        tasks: &["Question Answering", "Machine Translation", "Dialogue Generation", "Text Summarization", "Named Entity Recognition", "Code Generation", "Instruction Following"],
        nouns: &["Language Models", "Retrieval Augmentation", "Prompt Tuning", "Tokenization Schemes", "Preference Alignment", "Reasoning Chains"],
        top: &["ACL"],
        mid: &["EMNLP", "COLING", "NAACL"],
        other: &["Computational Linguistics", "Natural Language Engineering"],
    },
    Field {
        tag: "systems",
        tasks: &["Serverless Computing", "Distributed Training", "Storage Disaggregation", "Cluster Scheduling", "Edge Inference", "Stream Processing"],
        nouns: &["Memory Allocators", "Consensus Protocols", "Kernel Bypass", "Checkpointing Schemes", "Cache Hierarchies", "Load Balancers"],
        top: &["OSDI", "SOSP"],
        mid: &["Middleware", "ICDCS", "EuroSys Workshops"],
        other: &["Future Generation Computer Systems", "Journal of Systems Architecture"],
    },
    Field {
        tag: "security",
        tasks: &["Malware Detection", "Side Channel Analysis", "Fuzzing", "Privacy Preserving Analytics", "Smart Contract Auditing", "Intrusion Detection"],
        nouns: &["Differential Privacy", "Trusted Execution", "Adversarial Examples", "Symbolic Execution", "Access Control Policies", "Secure Aggregation"],
        top: &["CCS", "USENIX Security"],
        mid: &["ESORICS", "ACSAC", "AsiaCCS"],
        other: &["Computers and Security", "Journal of Computer Security"],
    },
    Field {
        tag: "theory",
        tasks: &["Graph Sparsification", "Online Matching", "Streaming Lower Bounds", "Submodular Maximization", "Property Testing", "Approximate Counting"],
        nouns: &["Expander Decompositions", "Sketching Algorithms", "Linear Programs", "Random Walks", "Fixed Parameter Algorithms"],
        top: &["STOC", "FOCS"],
        mid: &["ICALP", "ESA", "STACS"],
        other: &["Theoretical Computer Science", "Algorithmica"],
    },
    Field {
        tag: "databases",
        tasks: &["Query Optimization", "Entity Resolution", "Vector Search", "Transaction Processing", "Data Cleaning", "Cardinality Estimation"],
        nouns: &["Learned Indexes", "Join Algorithms", "Columnar Engines", "Graph Databases", "Approximate Queries"],
        top: &["SIGMOD", "VLDB"],
        mid: &["CIKM", "DASFAA", "EDBT"],
        other: &["Information Systems", "Data and Knowledge Engineering"],
    },
    Field {
        tag: "hci",
        tasks: &["Accessible Interfaces", "Collaborative Writing", "Visual Analytics", "Conversational Agents", "Mixed Reality Interaction"],
        nouns: &["Interaction Techniques", "User Models", "Design Probes", "Crowdsourcing Workflows", "Feedback Loops"],
        top: &["CHI"],
        mid: &["CSCW", "IUI", "UIST Adjunct"],
        other: &["International Journal of Human Computer Studies", "Behaviour and Information Technology"],
    },
];

const ADJECTIVES: &[&str] = &[
    "Scalable", "Robust", "Efficient", "Adaptive", "Provable", "Lightweight", "Hierarchical",
    "Compositional", "Calibrated", "Decentralized", "Faithful", "Incremental", "Structured",
    "Principled", "Unified", "Sample Efficient", "Fine Grained", "Interpretable",
];

const TECHNIQUES: &[&str] = &[
    "Self Supervision", "Low Rank Updates", "Curriculum Design", "Graph Rewiring",
    "Knowledge Distillation", "Stochastic Rounding", "Program Synthesis", "Meta Learning",
    "Importance Sampling", "Causal Intervention", "Spectral Filtering", "Token Merging",
];

const PROPERTIES: &[&str] = &[
    "Limits", "Stability", "Robustness", "Complexity", "Generalization", "Fairness", "Cost",
    "Expressivity",
];

const FIRST_NAMES: &[&str] = &[
    "Ada", "Aiko", "Amara", "Anil", "Bo", "Camila", "Chen", "Dario", "Elena", "Emeka", "Farah",
    "Felix", "Greta", "Hana", "Hugo", "Ines", "Ivan", "Jia", "Jonas", "Kavya", "Kenji", "Lars",
    "Leila", "Lucas", "Mei", "Mateo", "Nadia", "Nikhil", "Noor", "Olga", "Omar", "Paulo", "Priya",
    "Quentin", "Rafael", "Rina", "Saanvi", "Sofia", "Tariq", "Tomas", "Uma", "Valeria", "Wei",
    "Xin", "Yara", "Yusuf", "Zara", "Zoltan",
];

const LAST_NAMES: &[&str] = &[
    "Abebe", "Andersen", "Bauer", "Becker", "Chandra", "Costa", "Dubois", "Eriksen", "Fischer",
    "Garcia", "Gupta", "Haddad", "Hoffmann", "Ivanova", "Jensen", "Kato", "Kim", "Kowalski",
    "Larsen", "Li", "Lopez", "Martins", "Mehta", "Moreau", "Nakamura", "Nguyen", "Novak", "Okafor",
    "Olsen", "Park", "Petrov", "Quinn", "Rahman", "Rossi", "Santos", "Schmidt", "Sato", "Silva",
    "Singh", "Tanaka", "Torres", "Urban", "Varga", "Wagner", "Wang", "Weber", "Xu", "Yamada",
    "Yilmaz", "Zhang", "Zhou", "Zielinski",
];

const METHOD_PREFIXES: &[&str] = &[
    "Flash", "Sparse", "Deep", "Meta", "Hyper", "Lite", "Omni", "Quant", "Trans", "Graph",
    "Neuro", "Fed", "Robust", "Auto", "Poly", "Zero", "Swift", "Echo", "Vela", "Nova", "Orbit",
    "Prism", "Helix", "Cobalt",
];

const METHOD_SUFFIXES: &[&str] = &[
    "Former", "Net", "Diff", "Guard", "Store", "Sched", "Prover", "Lens", "Tune", "Mix", "Align",
    "Sync", "Shield", "Cache", "Map", "Flow", "Pilot", "Forge",
];

fn make_title(rng: &mut ChaCha8Rng, field: &Field) -> String {
    let task = field.tasks.choose(rng).expect("nonempty");
    let noun = field.nouns.choose(rng).expect("nonempty");
    let adj = ADJECTIVES.choose(rng).expect("nonempty");
    let tech = TECHNIQUES.choose(rng).expect("nonempty");
    let prop = PROPERTIES.choose(rng).expect("nonempty");
    match rng.random_range(0..5) {
        0 => format!("{adj} {noun} for {task}"),
        1 => format!("Towards {adj} {task} with {noun}"),
        2 => format!("On the {prop} of {noun} in {task}"),
        3 => format!("{adj} {task} via {tech}"),
        _ => format!("Rethinking {noun} for {adj} {task}"),
    }
}

fn author_name(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{} {}",
        FIRST_NAMES.choose(rng).expect("nonempty"),
        LAST_NAMES.choose(rng).expect("nonempty")
    )
}

/// Citation counts with the pinned marginals, ascending.
fn citation_values(rng: &mut ChaCha8Rng) -> Vec<u64> {
    let lognormal = LogNormal::new((30.0f64).ln(), 1.25).expect("valid parameters");
    let mut v: Vec<u64> = (0..N_PAPERS - N_ZERO)
        .map(|_| (lognormal.sample(rng).round() as u64).clamp(1, MAX_CITATIONS))
        .collect();
    v.extend(std::iter::repeat(0).take(N_ZERO));
    v.sort_unstable();

    let mid = N_PAPERS / 2;
    let last = N_PAPERS - 1;
    v[last] = MAX_CITATIONS;
    v[mid] = MEDIAN_CITATIONS;
    for x in &mut v[..mid] {
        *x = (*x).min(MEDIAN_CITATIONS);
    }
    for x in &mut v[mid + 1..last] {
        *x = (*x).clamp(MEDIAN_CITATIONS, MAX_CITATIONS - 1);
    }
    v.sort_unstable();

    // Rescale the upper tail (above the median, below the maximum) so the
    // total hits the target, then settle rounding one unit at a time.
    let fixed: u64 = v[..=mid].iter().sum::<u64>() + MAX_CITATIONS;
    let tail = &mut v[mid + 1..last];
    let excess: f64 = tail.iter().map(|&x| (x - MEDIAN_CITATIONS) as f64).sum();
    let wanted = (TOTAL_CITATIONS - fixed) as f64 - (tail.len() as u64 * MEDIAN_CITATIONS) as f64;
    let factor = wanted / excess;
    for x in tail.iter_mut() {
        let scaled = MEDIAN_CITATIONS as f64 + (*x - MEDIAN_CITATIONS) as f64 * factor;
        *x = (scaled.round() as u64).clamp(MEDIAN_CITATIONS, MAX_CITATIONS - 1);
    }
    let mut total: u64 = fixed + tail.iter().sum::<u64>();
    let mut i = tail.len();
    while total != TOTAL_CITATIONS {
        i = if i == 0 { tail.len() - 1 } else { i - 1 };
        if total < TOTAL_CITATIONS && tail[i] < MAX_CITATIONS - 1 {
            tail[i] += 1;
            total += 1;
        } else if total > TOTAL_CITATIONS && tail[i] > MEDIAN_CITATIONS {
            tail[i] -= 1;
            total -= 1;
        }
    }
    v.sort_unstable();
    v
}

/// Builds the demo corpus. Records are ordered by `paper_id`.
pub fn generate_demo_corpus() -> Vec<PaperRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(DEMO_SEED);
    let citations = citation_values(&mut rng);

    let mut years: Vec<i32> = (0..N_PAPERS)
        .map(|i| if i < N_2023 { 2023 } else { 2024 })
        .collect();
    years.shuffle(&mut rng);

    let mut order: Vec<usize> = (0..N_PAPERS).collect();
    order.shuffle(&mut rng);
    let top: BTreeSet<usize> = order[..N_TOP_TIER].iter().copied().collect();
    order.shuffle(&mut rng);
    let named: BTreeSet<usize> = order[..N_NAMED_METHOD].iter().copied().collect();

    // Latent visibility: older and top-venue papers tend to collect more citations.
    let latent: Vec<f64> = (0..N_PAPERS)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z + if years[i] == 2023 { 0.35 } else { -0.35 } + if top.contains(&i) { 1.2 } else { 0.0 }
        })
        .collect();
    let mut by_latent: Vec<usize> = (0..N_PAPERS).collect();
    by_latent.sort_by(|&a, &b| latent[a].total_cmp(&latent[b]).then(a.cmp(&b)));
    let mut cites = vec![0u64; N_PAPERS];
    for (rank, &paper) in by_latent.iter().enumerate() {
        cites[paper] = citations[rank];
    }

    let prominent: Vec<String> = (0..24).map(|_| author_name(&mut rng)).collect();
    let mut titles = BTreeSet::new();
    let mut methods = BTreeSet::new();
    let mut out = Vec::with_capacity(N_PAPERS);
    let mut seq_by_year = [0usize; 2];
    for i in 0..N_PAPERS {
        let year = years[i];
        let y = (year - 2023) as usize;
        seq_by_year[y] += 1;
        let primary = rng.random_range(0..FIELDS.len());
        let field = &FIELDS[primary];
        let mut field_tags = vec![field.tag.to_string()];
        if rng.random_bool(0.3) {
            let other = FIELDS[rng.random_range(0..FIELDS.len())].tag;
            if other != field.tag {
                field_tags.push(other.to_string());
            }
        }

        let title = loop {
            let t = make_title(&mut rng, field);
            if titles.insert(t.clone()) {
                break t;
            }
        };

        let n_authors = rng.random_range(2..=5);
        let mut authors: Vec<String> = Vec::with_capacity(n_authors);
        let visibility = 1.0 / (1.0 + (-latent[i]).exp());
        while authors.len() < n_authors {
            let name = if authors.is_empty() && rng.random_bool(0.35 * visibility) {
                prominent.choose(&mut rng).expect("nonempty").clone()
            } else {
                author_name(&mut rng)
            };
            if !authors.contains(&name) {
                authors.push(name);
            }
        }

        let (venue_tier, venue) = if top.contains(&i) {
            (VenueTier::TopTier, field.top.choose(&mut rng).expect("nonempty").to_string())
        } else {
            match rng.random_range(0..100) {
                0..=31 => (VenueTier::MidTier, field.mid.choose(&mut rng).expect("nonempty").to_string()),
                32..=53 => (VenueTier::OtherRanked, field.other.choose(&mut rng).expect("nonempty").to_string()),
                54..=66 => (VenueTier::Unranked, format!("Workshop on {}", field.tasks.choose(&mut rng).expect("nonempty"))),
                _ => (VenueTier::Unranked, String::new()),
            }
        };

        let method_name = if named.contains(&i) {
            Some(loop {
                let m = format!(
                    "{}{}",
                    METHOD_PREFIXES.choose(&mut rng).expect("nonempty"),
                    METHOD_SUFFIXES.choose(&mut rng).expect("nonempty")
                );
                let m = if methods.contains(&m) {
                    format!("{m}-{}", rng.random_range(2..10))
                } else {
                    m
                };
                if methods.insert(m.clone()) {
                    break m;
                }
            })
        } else {
            None
        };

        out.push(PaperRecord {
            paper_id: format!("cs{year}-{:04}", seq_by_year[y]),
            title,
            authors,
            venue,
            venue_tier,
            year,
            citation_count: cites[i],
            citation_snapshot_date: snapshot_date(),
            has_named_method: method_name.is_some(),
            method_name,
            field_tags,
        });
    }
    out.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{check_corpus, summarize};

    #[test]
    fn marginals_are_pinned() {
        let corpus = generate_demo_corpus();
        check_corpus(&corpus).unwrap();
        for p in &corpus {
            p.validate().unwrap();
        }
        let s = summarize(&corpus);
        assert_eq!(s.n_papers, 549);
        assert_eq!(s.n_by_year[&2023], 415);
        assert_eq!(s.n_by_year[&2024], 134);
        assert_eq!(s.n_top_venue, 31);
        assert_eq!((s.mean_citations * 10.0).round() / 10.0, 74.6);
        assert_eq!(s.median_citations, 24.0);
        assert_eq!((s.min_citations, s.max_citations), (0, 1674));
        assert_eq!(corpus.iter().filter(|p| p.has_named_method).count(), 389);
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate_demo_corpus(), generate_demo_corpus());
    }

    #[test]
    fn zero_mass_stays_below_a_quartile() {
        let corpus = generate_demo_corpus();
        let zeros = corpus.iter().filter(|p| p.citation_count == 0).count();
        assert!(zeros > 0 && zeros < corpus.len() / 4);
    }
}
