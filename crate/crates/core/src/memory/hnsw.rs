//! Hierarchical navigable small-world graph over unit vectors.
//!
//! Similarity is the inner product, so vectors must be L2-normalized. The
//! graph stores row indices into a caller-owned flat matrix; it never copies
//! vector data. Layer assignment uses a seeded ChaCha stream, so a graph built
//! from the same rows in the same order is always identical.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::dot;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HnswParams {
    /// Max neighbours per node on upper layers; layer 0 keeps twice as many.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        Self {
            m: 16,
            ef_construction: 200,
            ef_search: 256,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Scored {
    sim: f64,
    row: usize,
}

impl Eq for Scored {}

impl Ord for Scored {
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim
            .total_cmp(&other.sim)
            .then_with(|| other.row.cmp(&self.row))
    }
}

impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
pub struct Hnsw {
    params: HnswParams,
    dim: usize,
    /// `links[node][layer]` = neighbour rows.
    links: Vec<Vec<Vec<usize>>>,
    entry: Option<usize>,
    max_layer: usize,
    level_scale: f64,
    rng: ChaCha8Rng,
}

impl Hnsw {
    pub fn new(dim: usize, params: HnswParams) -> Self {
        let m = params.m.max(2);
        Self {
            params: HnswParams { m, ..params },
            dim,
            links: Vec::new(),
            entry: None,
            max_layer: 0,
            level_scale: 1.0 / (m as f64).ln(),
            rng: ChaCha8Rng::seed_from_u64(params.seed),
        }
    }

    /// Builds a graph over every row of `data`.
    pub fn build(data: &[f32], dim: usize, params: HnswParams) -> Self {
        let mut graph = Self::new(dim, params);
        for _ in 0..data.len() / dim {
            graph.insert_next(data);
        }
        graph
    }

    pub fn params(&self) -> HnswParams {
        self.params
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    fn row<'a>(&self, data: &'a [f32], row: usize) -> &'a [f32] {
        &data[row * self.dim..(row + 1) * self.dim]
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            self.params.m * 2
        } else {
            self.params.m
        }
    }

    fn random_level(&mut self) -> usize {
        let u: f64 = self.rng.random_range(f64::MIN_POSITIVE..1.0);
        ((-u.ln()) * self.level_scale).floor() as usize
    }

    /// Inserts row `self.len()` of `data`, which must already be present there.
    pub fn insert_next(&mut self, data: &[f32]) {
        let node = self.links.len();
        let level = self.random_level();
        self.links.push(vec![Vec::new(); level + 1]);
        let Some(mut ep) = self.entry else {
            self.entry = Some(node);
            self.max_layer = level;
            return;
        };
        let query = self.row(data, node).to_vec();

        let mut layer = self.max_layer;
        while layer > level {
            ep = self.greedy(data, &query, ep, layer);
            layer -= 1;
        }
        let mut entry_points = vec![ep];
        for layer in (0..=level.min(self.max_layer)).rev() {
            let found = self.search_layer(data, &query, &entry_points, self.params.ef_construction, layer);
            let chosen = self.select_neighbours(data, &found, self.max_links(layer));
            self.links[node][layer] = chosen.iter().map(|s| s.row).collect();
            for s in &chosen {
                self.links[s.row][layer].push(node);
                if self.links[s.row][layer].len() > self.max_links(layer) {
                    self.prune(data, s.row, layer);
                }
            }
            entry_points = found.iter().map(|s| s.row).collect();
        }
        if level > self.max_layer {
            self.max_layer = level;
            self.entry = Some(node);
        }
    }

    /// Keeps candidates that are closer to the base than to any already-kept
    /// neighbour, topping up with the nearest leftovers.
    fn select_neighbours(&self, data: &[f32], candidates: &[Scored], limit: usize) -> Vec<Scored> {
        let mut sorted = candidates.to_vec();
        sorted.sort_by(|a, b| b.cmp(a));
        let mut kept: Vec<Scored> = Vec::with_capacity(limit);
        let mut skipped = Vec::new();
        for c in sorted {
            if kept.len() >= limit {
                break;
            }
            let crow = self.row(data, c.row);
            let diverse = kept
                .iter()
                .all(|k| dot(crow, self.row(data, k.row)) < c.sim);
            if diverse {
                kept.push(c);
            } else {
                skipped.push(c);
            }
        }
        for c in skipped {
            if kept.len() >= limit {
                break;
            }
            kept.push(c);
        }
        kept
    }

    fn prune(&mut self, data: &[f32], node: usize, layer: usize) {
        let base = self.row(data, node);
        let candidates: Vec<Scored> = self.links[node][layer]
            .iter()
            .map(|&r| Scored {
                sim: dot(base, self.row(data, r)),
                row: r,
            })
            .collect();
        let kept = self.select_neighbours(data, &candidates, self.max_links(layer));
        self.links[node][layer] = kept.into_iter().map(|s| s.row).collect();
    }

    fn greedy(&self, data: &[f32], query: &[f32], mut current: usize, layer: usize) -> usize {
        let mut best = dot(query, self.row(data, current));
        loop {
            let mut moved = false;
            for &n in &self.links[current][layer] {
                let s = dot(query, self.row(data, n));
                if s > best {
                    best = s;
                    current = n;
                    moved = true;
                }
            }
            if !moved {
                return current;
            }
        }
    }

    fn search_layer(
        &self,
        data: &[f32],
        query: &[f32],
        entry_points: &[usize],
        ef: usize,
        layer: usize,
    ) -> Vec<Scored> {
        let mut visited: HashSet<usize> = HashSet::new();
        // max-heap of candidates to expand
        let mut frontier: BinaryHeap<Scored> = BinaryHeap::new();
        // min-heap (via Reverse) of the current best `ef`
        let mut best: BinaryHeap<std::cmp::Reverse<Scored>> = BinaryHeap::new();
        for &ep in entry_points {
            if visited.insert(ep) {
                let s = Scored {
                    sim: dot(query, self.row(data, ep)),
                    row: ep,
                };
                frontier.push(s);
                best.push(std::cmp::Reverse(s));
                if best.len() > ef {
                    best.pop();
                }
            }
        }
        while let Some(c) = frontier.pop() {
            let worst = best.peek().map(|r| r.0.sim).unwrap_or(f64::NEG_INFINITY);
            if c.sim < worst && best.len() >= ef {
                break;
            }
            for &n in &self.links[c.row][layer] {
                if !visited.insert(n) {
                    continue;
                }
                let s = Scored {
                    sim: dot(query, self.row(data, n)),
                    row: n,
                };
                let worst = best.peek().map(|r| r.0.sim).unwrap_or(f64::NEG_INFINITY);
                if best.len() < ef || s.sim > worst {
                    frontier.push(s);
                    best.push(std::cmp::Reverse(s));
                    if best.len() > ef {
                        best.pop();
                    }
                }
            }
        }
        best.into_iter().map(|r| r.0).collect()
    }

    /// Approximate `k` most similar rows, best first, as `(row, similarity)`.
    pub fn search(&self, data: &[f32], query: &[f32], k: usize) -> Vec<(usize, f64)> {
        let Some(mut ep) = self.entry else {
            return Vec::new();
        };
        for layer in (1..=self.max_layer).rev() {
            ep = self.greedy(data, query, ep, layer);
        }
        let mut found = self.search_layer(data, query, &[ep], self.params.ef_search.max(k), 0);
        found.sort_by(|a, b| b.cmp(a));
        found.truncate(k);
        found.into_iter().map(|s| (s.row, s.sim)).collect()
    }
}
