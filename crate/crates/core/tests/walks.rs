//! Walk validity and the negative-sampling distribution.

use std::collections::{HashMap, HashSet};

use hetembed_core::graph::{GraphSchema, HetGraph, NodeId, NodeType};
use hetembed_core::seed;
use hetembed_core::synth::{generate, SynthConfig};
use hetembed_core::walk::{generate_corpus, walk_context_pairs, NegativeSupport, NoiseTable, Walker};
use hetembed_core::{MetaPathScheme, WalkConfig, WalkMode};

fn fixture() -> HetGraph {
    generate(&SynthConfig::default()).unwrap().graph
}

fn edge_set(g: &HetGraph) -> HashSet<(NodeId, NodeId)> {
    let mut s = HashSet::new();
    for e in g.edges() {
        s.insert((e.source, e.target));
        s.insert((e.target, e.source));
    }
    s
}

#[test]
fn metapath_walks_are_edge_and_type_valid() {
    let g = fixture();
    let edges = edge_set(&g);
    let walker = Walker::new(&g);
    let authors = g.nodes_of_type(g.schema().node_type("author").unwrap()).to_vec();
    for name in ["APA", "APPA", "APVPA"] {
        let scheme = MetaPathScheme::parse(g.schema(), name).unwrap();
        let letters: Vec<char> = name.chars().collect();
        let period = letters.len() - 1;
        let mut count = 0usize;
        let mut steps = 0usize;
        for i in 0..100_000u64 {
            let start = authors[i as usize % authors.len()];
            let mut rng = seed::rng(5, name, i, 0);
            let walk = walker.metapath_walk(start, &scheme, 12, &mut rng).unwrap();
            for (pos, &v) in walk.iter().enumerate() {
                let want = letters[pos % period];
                let got = g.type_name_of(v).chars().next().unwrap().to_ascii_uppercase();
                assert_eq!(got, want, "{name}: walk {i} position {pos}");
            }
            for w in walk.windows(2) {
                assert!(edges.contains(&(w[0], w[1])), "{name}: walk {i} uses a missing edge");
            }
            count += 1;
            steps += walk.len() - 1;
        }
        assert_eq!(count, 100_000);
        assert!(steps > 100_000, "{name}: walks are mostly empty");
    }
}

#[test]
fn random_walks_follow_edges() {
    let g = fixture();
    let edges = edge_set(&g);
    let walker = Walker::new(&g);
    for i in 0..2_000u64 {
        let start = NodeId((i % g.node_count() as u64) as u32);
        let walk = walker.random_walk(start, 20, &mut seed::rng(1, "rw", i, 0));
        for w in walk.windows(2) {
            assert!(edges.contains(&(w[0], w[1])));
        }
    }
}

#[test]
fn walk_must_start_at_scheme_type() {
    let g = fixture();
    let walker = Walker::new(&g);
    let scheme = MetaPathScheme::parse(g.schema(), "APA").unwrap();
    let paper = g.nodes_of_type(g.schema().node_type("paper").unwrap())[0];
    assert!(walker.metapath_walk(paper, &scheme, 5, &mut seed::rng(0, "x", 0, 0)).is_err());
}

#[test]
fn scheme_needs_matching_ends_and_relations() {
    let schema = GraphSchema::academic();
    assert!(MetaPathScheme::parse(&schema, "APV").is_err());
    assert!(MetaPathScheme::parse(&schema, "AVA").is_err());
    assert!(MetaPathScheme::parse(&schema, "author-paper-author").is_ok());
}

#[test]
fn context_pairs_respect_window() {
    let walk: Vec<NodeId> = (0..5).map(NodeId).collect();
    let pairs: Vec<(u32, u32)> = walk_context_pairs(&walk, 2).map(|(a, b)| (a.0, b.0)).collect();
    let mut expected = Vec::new();
    for i in 0..5i32 {
        for j in 0..5i32 {
            if i != j && (i - j).abs() <= 2 {
                expected.push((i as u32, j as u32));
            }
        }
    }
    assert_eq!(pairs, expected);
}

#[test]
fn corpus_does_not_depend_on_thread_count() {
    let g = fixture();
    let cfg = WalkConfig {
        walks_per_node: 3,
        walk_length: 15,
        window: 3,
        mode: WalkMode::MetaPath,
        schemes: vec!["APA".into(), "APVPA".into()],
        seed: 9,
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| generate_corpus(&g, &cfg).unwrap())
    };
    assert_eq!(run(1), run(3));
}

fn total_variation(p: &HashMap<NodeId, f64>, q: &HashMap<NodeId, f64>) -> f64 {
    let keys: HashSet<&NodeId> = p.keys().chain(q.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).unwrap_or(&0.0) - q.get(k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}

#[test]
fn negative_frequencies_match_power_law() {
    let g = fixture();
    let cfg = WalkConfig {
        walks_per_node: 10,
        walk_length: 20,
        ..WalkConfig::default()
    };
    let corpus = generate_corpus(&g, &cfg).unwrap();
    let mut counts: HashMap<NodeId, u64> = HashMap::new();
    for w in &corpus.walks {
        for &v in w {
            *counts.entry(v).or_default() += 1;
        }
    }
    let noise = NoiseTable::build(&corpus, g.node_types(), g.schema().node_type_count()).unwrap();
    for (t, name) in g.schema().node_types().map(|(t, n)| (t, n.to_string())).collect::<Vec<(NodeType, String)>>() {
        let weights: HashMap<NodeId, f64> = counts
            .iter()
            .filter(|(v, _)| g.node_type(**v) == t)
            .map(|(&v, &c)| (v, (c as f64).powf(0.75)))
            .collect();
        let total: f64 = weights.values().sum();
        let analytic: HashMap<NodeId, f64> = weights.iter().map(|(&v, w)| (v, w / total)).collect();

        let draws = 1_000_000;
        let mut rng = seed::rng(2, "noise", t.0 as u64, 0);
        let mut hist: HashMap<NodeId, f64> = HashMap::new();
        for _ in 0..draws {
            *hist.entry(noise.sample(t, &mut rng).unwrap()).or_default() += 1.0;
        }
        let empirical: HashMap<NodeId, f64> = hist.into_iter().map(|(v, c)| (v, c / draws as f64)).collect();
        let tv = total_variation(&analytic, &empirical);
        assert!(tv < 0.01, "{name}: total variation {tv}");
    }
}

#[test]
fn exact_power_micro_case() {
    let types = [NodeType(0), NodeType(0)];
    let noise = NoiseTable::from_frequencies(&[16, 81], &types, 1, NegativeSupport::CorpusVisited).unwrap();
    let p0 = noise.probability(NodeId(0));
    let p1 = noise.probability(NodeId(1));
    assert!((p0 - 8.0 / 35.0).abs() < 1e-12);
    assert!((p1 - 27.0 / 35.0).abs() < 1e-12);
    assert_eq!(format!("{p0:.3}"), "0.229");
    assert_eq!(format!("{p1:.3}"), "0.771");

    let mut rng = seed::rng(4, "micro", 0, 0);
    let draws = 1_000_000;
    let hits = (0..draws).filter(|_| noise.sample(NodeType(0), &mut rng) == Some(NodeId(0))).count();
    let share = hits as f64 / draws as f64;
    assert!((share - 8.0 / 35.0).abs() < 1e-3, "empirical share {share}");
}

#[test]
fn unvisited_nodes_join_only_with_all_nodes_support() {
    let types = [NodeType(0), NodeType(0), NodeType(0)];
    let visited = NoiseTable::from_frequencies(&[1, 0, 1], &types, 1, NegativeSupport::CorpusVisited).unwrap();
    assert_eq!(visited.probability(NodeId(1)), 0.0);
    let all = NoiseTable::from_frequencies(&[1, 0, 1], &types, 1, NegativeSupport::AllNodes).unwrap();
    assert!((all.probability(NodeId(1)) - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn negatives_avoid_the_context_when_possible() {
    let types = [NodeType(0), NodeType(0)];
    let noise = NoiseTable::from_frequencies(&[1000, 1], &types, 1, NegativeSupport::CorpusVisited).unwrap();
    let mut rng = seed::rng(0, "neg", 0, 0);
    let mut collisions = 0;
    for _ in 0..10_000 {
        let (n, collided) = noise.sample_negative(NodeId(0), &mut rng).unwrap();
        if collided {
            collisions += 1;
            assert_eq!(n, NodeId(0));
        } else {
            assert_eq!(n, NodeId(1));
        }
    }
    // P(11 straight draws of node 0) is about 0.85, so most draws collide.
    assert!(collisions > 7_000);

    let single = NoiseTable::from_frequencies(&[5], &[NodeType(0)], 1, NegativeSupport::CorpusVisited).unwrap();
    assert_eq!(single.sample_negative(NodeId(0), &mut rng), Some((NodeId(0), true)));
}
