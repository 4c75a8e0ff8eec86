//! Shared test oracles and random fixture generators.
//!
//! Everything here recomputes results from first principles, independent of
//! the library's implementation paths: tree distances come from breadth-first
//! search over the raw edge list, and metric scores from explicit per-pixel
//! sets rather than confusion matrices.

#![allow(dead_code)]

use std::collections::{HashMap, HashSet, VecDeque};

use rand::rngs::StdRng;
use rand::Rng;

// ---------------------------------------------------------------------------
// Random tree specs
// ---------------------------------------------------------------------------

/// A randomly generated taxonomy, kept as raw structure so oracles can work
/// on it without going through the library parser.
#[derive(Debug, Clone)]
pub struct TreeSpec {
    pub n_levels: u32,
    /// (id, level, parent-id); parents always precede children.
    pub internals: Vec<(String, u32, String)>,
    /// (id, level, parent-id); class index = position in this list.
    pub leaves: Vec<(String, u32, String)>,
    pub important_flags: Vec<bool>,
}

impl TreeSpec {
    pub fn num_classes(&self) -> usize {
        self.leaves.len()
    }

    /// Render as a config document for the library parser.
    pub fn to_config(&self) -> String {
        let mut out = format!("hierarchy random\nlevels {}\n", self.n_levels);
        // interleave so parents precede children: internals are recorded in
        // creation order, which already satisfies that; leaves go last.
        for (id, level, parent) in &self.internals {
            out.push_str(&format!(
                "node id={id} level={level} parent={parent} display=\"{id}\"\n"
            ));
        }
        for (index, (id, level, parent)) in self.leaves.iter().enumerate() {
            out.push_str(&format!(
                "leaf id={id} level={level} parent={parent} index={index} important={} display=\"{id}\"\n",
                self.important_flags[index]
            ));
        }
        out
    }

    /// Undirected edge list of the whole tree, including the virtual root.
    fn adjacency(&self) -> HashMap<String, Vec<String>> {
        let mut adj: HashMap<String, Vec<String>> = HashMap::new();
        let mut link = |a: &str, b: &str| {
            adj.entry(a.to_string()).or_default().push(b.to_string());
            adj.entry(b.to_string()).or_default().push(a.to_string());
        };
        for (id, _, parent) in self.internals.iter().chain(self.leaves.iter()) {
            link(id, parent);
        }
        adj
    }

    /// Tree distance by breadth-first search: path edge count halved.
    pub fn bfs_distance(&self, a: &str, b: &str) -> u32 {
        bfs_half_distance(&self.adjacency(), a, b)
    }
}

/// BFS shortest-path edge count between two nodes, divided by two.
pub fn bfs_half_distance(adj: &HashMap<String, Vec<String>>, a: &str, b: &str) -> u32 {
    if a == b {
        return 0;
    }
    let mut dist: HashMap<&str, u32> = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(a, 0);
    queue.push_back(a);
    while let Some(cur) = queue.pop_front() {
        let d = dist[cur];
        if cur == b {
            assert_eq!(d % 2, 0, "leaf-to-leaf paths must have even length");
            return d / 2;
        }
        if let Some(neighbors) = adj.get(cur) {
            for next in neighbors {
                if !dist.contains_key(next.as_str()) {
                    dist.insert(next, d + 1);
                    queue.push_back(next);
                }
            }
        }
    }
    panic!("nodes {a} and {b} are not connected");
}

/// Edge list scraped directly from a config document, for oracle checks on
/// shipped configs. Understands only `id=` and `parent=` tokens.
pub fn adjacency_from_config(config: &str) -> HashMap<String, Vec<String>> {
    let mut adj: HashMap<String, Vec<String>> = HashMap::new();
    for line in config.lines() {
        let line = line.trim();
        if !(line.starts_with("node ") || line.starts_with("leaf ")) {
            continue;
        }
        let token = |key: &str| -> Option<String> {
            line.split_whitespace()
                .find_map(|w| w.strip_prefix(key))
                .map(|v| v.to_string())
        };
        let id = token("id=").expect("node line has id");
        let parent = token("parent=").expect("node line has parent");
        adj.entry(id.clone()).or_default().push(parent.clone());
        adj.entry(parent).or_default().push(id);
    }
    adj
}

/// Sample a random taxonomy with `1..=max_k` leaves and 2 to 4 levels.
/// Leaf depths vary but share the parity of the deepest level.
pub fn random_tree(rng: &mut StdRng, max_k: usize) -> TreeSpec {
    let n_levels: u32 = rng.random_range(2..=4);
    let k = rng.random_range(1..=max_k);
    let depths: Vec<u32> = (1..=n_levels).filter(|d| d % 2 == n_levels % 2).collect();

    let mut spec = TreeSpec {
        n_levels,
        internals: Vec::new(),
        leaves: Vec::new(),
        important_flags: Vec::new(),
    };
    // internals indexed by level for reuse
    let mut by_level: Vec<Vec<String>> = vec![Vec::new(); n_levels as usize];

    fn internal_at(
        spec: &mut TreeSpec,
        by_level: &mut [Vec<String>],
        rng: &mut StdRng,
        level: u32,
    ) -> String {
        if level == 0 {
            return "root".to_string();
        }
        let slot = (level - 1) as usize;
        let reuse = !by_level[slot].is_empty() && rng.random_bool(0.6);
        if reuse {
            let pick = rng.random_range(0..by_level[slot].len());
            return by_level[slot][pick].clone();
        }
        let parent = internal_at(spec, by_level, rng, level - 1);
        let id = format!("g{}_{}", level, by_level[slot].len());
        spec.internals.push((id.clone(), level, parent));
        by_level[slot].push(id.clone());
        id
    }

    for class in 0..k {
        // the first leaf realizes the declared depth
        let depth = if class == 0 {
            n_levels
        } else {
            depths[rng.random_range(0..depths.len())]
        };
        let parent = internal_at(&mut spec, &mut by_level, rng, depth - 1);
        spec.leaves
            .push((format!("leaf{class}"), depth, parent));
        spec.important_flags.push(rng.random_bool(0.5));
    }
    spec
}

/// Random subset of `0..k`.
pub fn random_subset(rng: &mut StdRng, k: usize, keep_probability: f64) -> Vec<usize> {
    (0..k)
        .filter(|_| rng.random_bool(keep_probability))
        .collect()
}

// ---------------------------------------------------------------------------
// Random label maps
// ---------------------------------------------------------------------------

/// A ground-truth/prediction pair of random values over `0..k` with a dash of
/// ignore pixels on the ground-truth side.
pub fn random_map_pair(
    rng: &mut StdRng,
    k: usize,
    ignore: u16,
) -> (u32, u32, Vec<u16>, Vec<u16>) {
    let width = rng.random_range(1..=8u32);
    let height = rng.random_range(1..=8u32);
    let pixels = (width * height) as usize;
    let gt: Vec<u16> = (0..pixels)
        .map(|_| {
            if rng.random_bool(0.1) {
                ignore
            } else {
                rng.random_range(0..k) as u16
            }
        })
        .collect();
    let pred: Vec<u16> = (0..pixels).map(|_| rng.random_range(0..k) as u16).collect();
    (width, height, gt, pred)
}

// ---------------------------------------------------------------------------
// Per-pixel metric oracle
// ---------------------------------------------------------------------------

/// Scores computed straight from pixel sets.
#[derive(Debug, Clone)]
pub struct OracleScores {
    pub iou: Vec<Option<f64>>,
    pub safe_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub smiou: f64,
    pub mean_classes: Vec<usize>,
}

/// Brute-force evaluation over explicit pixel sets; no confusion matrix.
///
/// `distance(c, s)` supplies tree distances (pair with [`TreeSpec::bfs_distance`]
/// for full independence). Returns `None` when no class qualifies for the
/// means.
pub fn oracle_metrics(
    gt: &[u16],
    pred: &[u16],
    k: usize,
    ignore: u16,
    distance: &dyn Fn(usize, usize) -> u32,
    n_levels: u32,
    important: &HashSet<usize>,
    include_absent_as_zero: bool,
) -> Option<OracleScores> {
    assert_eq!(gt.len(), pred.len());
    let mut gt_sets: Vec<HashSet<usize>> = vec![HashSet::new(); k];
    let mut pred_sets: Vec<HashSet<usize>> = vec![HashSet::new(); k];
    for (pixel, (&g, &p)) in gt.iter().zip(pred).enumerate() {
        if g == ignore {
            continue;
        }
        gt_sets[g as usize].insert(pixel);
        pred_sets[p as usize].insert(pixel);
    }

    let mut iou: Vec<Option<f64>> = Vec::with_capacity(k);
    let mut safe_iou: Vec<Option<f64>> = Vec::with_capacity(k);
    for c in 0..k {
        let union_size = gt_sets[c].union(&pred_sets[c]).count();
        if union_size == 0 {
            iou.push(None);
            safe_iou.push(None);
            continue;
        }
        let union_size = union_size as f64;
        let own = gt_sets[c].intersection(&pred_sets[c]).count() as f64 / union_size;
        iou.push(Some(own));

        let cross = |s: usize| -> f64 {
            gt_sets[c].intersection(&pred_sets[s]).count() as f64 / union_size
        };
        let mut penalty = 0.0;
        if important.contains(&c) {
            for s in 0..k {
                if s != c {
                    penalty += f64::from(distance(c, s)) / f64::from(n_levels) * cross(s);
                }
            }
        } else {
            for &s in important {
                penalty += f64::from(distance(c, s)) / f64::from(n_levels) * cross(s);
            }
        }
        safe_iou.push(Some(own - penalty));
    }

    let mean_classes: Vec<usize> = if include_absent_as_zero {
        if gt_sets.iter().all(|set| set.is_empty()) {
            return None;
        }
        (0..k).collect()
    } else {
        (0..k).filter(|&c| !gt_sets[c].is_empty()).collect()
    };
    if mean_classes.is_empty() {
        return None;
    }
    let mean = |values: &[Option<f64>]| {
        mean_classes
            .iter()
            .map(|&c| values[c].unwrap_or(0.0))
            .sum::<f64>()
            / mean_classes.len() as f64
    };
    Some(OracleScores {
        miou: mean(&iou),
        smiou: mean(&safe_iou),
        iou,
        safe_iou,
        mean_classes,
    })
}

pub fn assert_close(actual: f64, expected: f64, tolerance: f64, what: &str) {
    assert!(
        (actual - expected).abs() <= tolerance,
        "{what}: {actual} vs {expected} (tolerance {tolerance})"
    );
}
