//! Residual quantization of item feature vectors into multi-level semantic ids.
//!
//! Codebooks are trained level by level with k-means (k-means++ seeding) on
//! the residuals left over from the previous level. Assignment follows the
//! nearest-centroid rule at every level, and a corpus-wide pass resolves id
//! collisions so the item -> id mapping is injective.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;

/// Lloyd iterations cap; training also stops once the largest centroid
/// movement drops below [`KMEANS_TOL`].
pub const KMEANS_MAX_ITERS: usize = 50;
pub const KMEANS_TOL: f64 = 1e-8;

/// One item's dense feature vector.
#[derive(Debug, Clone)]
pub struct ItemFeature {
    pub item_id: u64,
    pub vector: Vec<f32>,
}

/// Ordered per-level codeword indices identifying one item.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SemanticId {
    codes: Vec<u32>,
}

impl SemanticId {
    pub fn new(codes: Vec<u32>) -> Self {
        Self { codes }
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

impl std::fmt::Display for SemanticId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.codes.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Centroid table for one quantization level, row-major `entries x dim`.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub centroids: Vec<f32>,
    pub entries: usize,
    pub dim: usize,
}

impl Codebook {
    pub fn row(&self, c: usize) -> &[f32] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }
}

/// The full residual quantizer: one codebook per level.
#[derive(Debug, Clone)]
pub struct Codebooks {
    pub levels: Vec<Codebook>,
}

impl Codebooks {
    pub fn m(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.levels[0].dim
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|c| c.entries).collect()
    }

    /// Number of distinct ids the codebooks can express.
    pub fn capacity(&self) -> u128 {
        self.levels.iter().map(|c| c.entries as u128).product()
    }
}

fn dist2(a: &[f64], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - *y as f64;
            d * d
        })
        .sum()
}

fn dist2_f64(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Nearest centroid index, ties broken by lowest index.
fn nearest_f64(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2_f64(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

fn nearest_code(point: &[f64], book: &Codebook) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for c in 0..book.entries {
        let d = dist2(point, book.row(c));
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

/// Single k-means run: k-means++ seeding, Lloyd iterations, empty clusters
/// reseeded to the point with the largest quantization error.
fn kmeans(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let dim = points[0].len();

    // k-means++ seeding
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| dist2_f64(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc >= r {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[idx].clone());
        for (i, p) in points.iter().enumerate() {
            let d = dist2_f64(p, centroids.last().unwrap());
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut errs = vec![0.0f64; n];
        for (i, p) in points.iter().enumerate() {
            let (a, d) = nearest_f64(p, &centroids);
            assign[i] = a;
            errs[i] = d;
        }

        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i]].iter_mut().zip(p) {
                *s += v;
            }
        }

        let mut movement: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                // reseed to the worst-quantized point (lowest index on ties)
                let mut worst = 0;
                for i in 1..n {
                    if errs[i] > errs[worst] {
                        worst = i;
                    }
                }
                if errs[worst] > 0.0 {
                    let moved = dist2_f64(&centroids[c], &points[worst]).sqrt();
                    movement = movement.max(moved);
                    centroids[c] = points[worst].clone();
                    errs[worst] = 0.0;
                }
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            movement = movement.max(dist2_f64(&centroids[c], &new).sqrt());
            centroids[c] = new;
        }
        if movement < KMEANS_TOL {
            break;
        }
    }
    centroids
}

fn validate_features(features: &[ItemFeature]) -> Result<usize> {
    if features.is_empty() {
        return Err(Error::InvalidCorpus("no item features".into()));
    }
    let dim = features[0].vector.len();
    for f in features {
        if f.vector.len() != dim {
            return Err(Error::DimensionError {
                expected: dim,
                got: f.vector.len(),
            });
        }
        if f.vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidFeature {
                item_id: f.item_id,
                reason: "non-finite component".into(),
            });
        }
    }
    Ok(dim)
}

/// Train the per-level codebooks with residual k-means.
///
/// Level 1 clusters the raw features; each subsequent level clusters the
/// residuals left after subtracting the nearest centroid of the level above.
pub fn train_codebooks(
    features: &[ItemFeature],
    m: usize,
    sizes: &[usize],
    seed: u64,
) -> Result<Codebooks> {
    let dim = validate_features(features)?;
    if m == 0 || sizes.len() != m {
        return Err(Error::ConfigError(format!(
            "m = {m} but {} codebook sizes given",
            sizes.len()
        )));
    }
    if sizes.iter().any(|&v| v == 0) {
        return Err(Error::ConfigError("codebook sizes must be >= 1".into()));
    }

    let mut residuals: Vec<Vec<f64>> = features
        .iter()
        .map(|f| f.vector.iter().map(|&v| v as f64).collect())
        .collect();

    let mut levels = Vec::with_capacity(m);
    for (l, &k) in sizes.iter().enumerate() {
        let mut stream = rng::stream(seed, "kmeans", l as u64);
        let centroids = kmeans(&residuals, k, &mut stream);
        for r in residuals.iter_mut() {
            let (a, _) = nearest_f64(r, &centroids);
            for (x, c) in r.iter_mut().zip(&centroids[a]) {
                *x -= c;
            }
        }
        let mut flat = Vec::with_capacity(k * dim);
        for c in &centroids {
            flat.extend(c.iter().map(|&v| v as f32));
        }
        levels.push(Codebook {
            centroids: flat,
            entries: k,
            dim,
        });
    }
    Ok(Codebooks { levels })
}

/// Residuals entering each level for one feature vector: index `l` holds the
/// vector quantized by codebook `l`.
fn level_residuals(vector: &[f32], books: &Codebooks) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(books.m());
    let mut r: Vec<f64> = vector.iter().map(|&v| v as f64).collect();
    for book in &books.levels {
        out.push(r.clone());
        let (c, _) = nearest_code(&r, book);
        for (x, q) in r.iter_mut().zip(book.row(c)) {
            *x -= *q as f64;
        }
    }
    out
}

/// Nearest-centroid encoding at every level, ties broken by lowest index.
pub fn encode_item(feature: &ItemFeature, books: &Codebooks) -> Result<SemanticId> {
    if feature.vector.len() != books.dim() {
        return Err(Error::DimensionError {
            expected: books.dim(),
            got: feature.vector.len(),
        });
    }
    let mut r: Vec<f64> = feature.vector.iter().map(|&v| v as f64).collect();
    let mut codes = Vec::with_capacity(books.m());
    for book in &books.levels {
        let (c, _) = nearest_code(&r, book);
        codes.push(c as u32);
        for (x, q) in r.iter_mut().zip(book.row(c)) {
            *x -= *q as f64;
        }
    }
    Ok(SemanticId::new(codes))
}

/// Mean squared norm of the residuals remaining after `levels_used` levels.
/// `levels_used = 0` gives the mean squared norm of the raw features.
pub fn reconstruction_mse(
    features: &[ItemFeature],
    books: &Codebooks,
    levels_used: usize,
) -> f64 {
    let mut total = 0.0;
    for f in features {
        let mut r: Vec<f64> = f.vector.iter().map(|&v| v as f64).collect();
        for book in books.levels.iter().take(levels_used) {
            let (c, _) = nearest_code(&r, book);
            for (x, q) in r.iter_mut().zip(book.row(c)) {
                *x -= *q as f64;
            }
        }
        total += r.iter().map(|x| x * x).sum::<f64>();
    }
    total / features.len() as f64
}

/// Codes at one level ordered by distance from `residual`, ascending,
/// ties broken by lower code.
fn codes_by_distance(residual: &[f64], book: &Codebook) -> Vec<u32> {
    let mut order: Vec<(f64, u32)> = (0..book.entries)
        .map(|c| (dist2(residual, book.row(c)), c as u32))
        .collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    order.into_iter().map(|(_, c)| c).collect()
}

struct SlotSearch<'a> {
    books: &'a Codebooks,
    used: &'a HashMap<Vec<u32>, ()>,
    prefix_counts: &'a HashMap<Vec<u32>, usize>,
}

impl SlotSearch<'_> {
    fn subtree_capacity(&self, depth: usize) -> u128 {
        self.books.levels[depth..]
            .iter()
            .map(|b| b.entries as u128)
            .product()
    }

    /// Depth-first over codes ordered near-to-far at every level; full
    /// subtrees are pruned via the per-prefix occupancy counts.
    fn find(&self, depth: usize, prefix: &mut Vec<u32>, residual: &[f64]) -> Option<Vec<u32>> {
        let book = &self.books.levels[depth];
        for code in codes_by_distance(residual, book) {
            prefix.push(code);
            if depth + 1 == self.books.m() {
                if !self.used.contains_key(prefix.as_slice()) {
                    let found = prefix.clone();
                    prefix.pop();
                    return Some(found);
                }
            } else {
                let occupied = *self.prefix_counts.get(prefix.as_slice()).unwrap_or(&0);
                if (occupied as u128) < self.subtree_capacity(depth + 1) {
                    let next: Vec<f64> = residual
                        .iter()
                        .zip(book.row(code as usize))
                        .map(|(r, q)| r - *q as f64)
                        .collect();
                    if let Some(found) = self.find(depth + 1, prefix, &next) {
                        prefix.pop();
                        return Some(found);
                    }
                }
            }
            prefix.pop();
        }
        None
    }
}

/// Encode every item and resolve id collisions so the mapping is injective.
///
/// Within a colliding group the item whose feature lies nearest the
/// reconstructed centroid sum keeps the id; every other member is moved to
/// the nearest unused id, searching last-level codes first and widening to
/// nearer-to-farther alternative prefixes when a subtree is full.
pub fn assign_corpus(
    features: &[ItemFeature],
    books: &Codebooks,
) -> Result<BTreeMap<u64, SemanticId>> {
    validate_features(features)?;
    let capacity = books.capacity();
    if features.len() as u128 > capacity {
        return Err(Error::CapacityExceeded {
            corpus: features.len(),
            capacity: capacity.min(usize::MAX as u128) as usize,
        });
    }
    {
        let mut ids: Vec<u64> = features.iter().map(|f| f.item_id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != features.len() {
            return Err(Error::InvalidCorpus("duplicate item ids".into()));
        }
    }

    let mut groups: BTreeMap<Vec<u32>, Vec<usize>> = BTreeMap::new();
    let mut encoded = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let sid = encode_item(f, books)?;
        groups.entry(sid.codes.clone()).or_default().push(i);
        encoded.push(sid);
    }

    let mut assigned: BTreeMap<u64, SemanticId> = BTreeMap::new();
    let mut used: HashMap<Vec<u32>, ()> = HashMap::new();
    let mut prefix_counts: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut occupy = |codes: &[u32],
                      used: &mut HashMap<Vec<u32>, ()>,
                      prefix_counts: &mut HashMap<Vec<u32>, usize>| {
        used.insert(codes.to_vec(), ());
        for l in 1..codes.len() {
            *prefix_counts.entry(codes[..l].to_vec()).or_insert(0) += 1;
        }
    };

    // winners first: the member nearest the reconstruction keeps the id
    let mut losers: Vec<usize> = Vec::new();
    for (codes, members) in &groups {
        let winner = if members.len() == 1 {
            members[0]
        } else {
            let mut recon = vec![0.0f64; books.dim()];
            for (l, &c) in codes.iter().enumerate() {
                for (r, q) in recon.iter_mut().zip(books.levels[l].row(c as usize)) {
                    *r += *q as f64;
                }
            }
            let key = |i: usize| {
                let d: f64 = features[i]
                    .vector
                    .iter()
                    .zip(&recon)
                    .map(|(v, r)| (*v as f64 - r).powi(2))
                    .sum();
                (d, features[i].item_id)
            };
            let mut best = members[0];
            for &i in &members[1..] {
                let (d, id) = key(i);
                let (bd, bid) = key(best);
                if d < bd || (d == bd && id < bid) {
                    best = i;
                }
            }
            best
        };
        assigned.insert(features[winner].item_id, encoded[winner].clone());
        occupy(codes, &mut used, &mut prefix_counts);
        losers.extend(members.iter().filter(|&&i| i != winner));
    }
    losers.sort_by_key(|&i| (encoded[i].codes.clone(), features[i].item_id));

    for i in losers {
        let residuals = level_residuals(&features[i].vector, books);
        let search = SlotSearch {
            books,
            used: &used,
            prefix_counts: &prefix_counts,
        };
        let slot = search
            .find(0, &mut Vec::new(), &residuals[0])
            .expect("capacity checked above");
        occupy(&slot, &mut used, &mut prefix_counts);
        assigned.insert(features[i].item_id, SemanticId::new(slot));
    }
    Ok(assigned)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feat(id: u64, v: &[f32]) -> ItemFeature {
        ItemFeature {
            item_id: id,
            vector: v.to_vec(),
        }
    }

    #[test]
    fn square_corners_are_a_kmeans_fixed_point() {
        let corners = [
            feat(0, &[0.0, 0.0]),
            feat(1, &[0.0, 1.0]),
            feat(2, &[1.0, 0.0]),
            feat(3, &[1.0, 1.0]),
        ];
        let books = train_codebooks(&corners, 1, &[4], 3).unwrap();
        // every centroid must coincide with one distinct corner
        let mut matched = [false; 4];
        for c in 0..4 {
            let row = books.levels[0].row(c);
            let hit = corners
                .iter()
                .position(|f| f.vector.iter().zip(row).all(|(a, b)| (a - b).abs() < 1e-9))
                .expect("centroid equals a corner");
            assert!(!matched[hit]);
            matched[hit] = true;
        }
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let fs = [
            feat(0, &[1.0, 2.0]),
            feat(1, &[3.0, 4.0]),
            feat(2, &[5.0, 0.0]),
        ];
        let books = train_codebooks(&fs, 1, &[1], 0).unwrap();
        let row = books.levels[0].row(0);
        assert!((row[0] - 3.0).abs() < 1e-9);
        assert!((row[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn second_level_reduces_reconstruction_error() {
        // 2x2 grid of well-separated clusters: level 1 should split the two
        // coarse groups, level 2 the in-group offsets.
        let mut fs = Vec::new();
        let mut id = 0;
        for &cx in &[0.0f32, 100.0] {
            for &sx in &[-3.0f32, 3.0] {
                for j in 0..10 {
                    let eps = (j as f32 - 4.5) * 0.01;
                    fs.push(feat(id, &[cx + sx + eps, cx - sx - eps]));
                    id += 1;
                }
            }
        }
        let books = train_codebooks(&fs, 2, &[2, 2], 7).unwrap();
        let e1 = reconstruction_mse(&fs, &books, 1);
        let e2 = reconstruction_mse(&fs, &books, 2);
        assert!(
            e2 < e1,
            "level-2 mse {e2} should be below level-1 mse {e1}"
        );
    }

    #[test]
    fn encode_exact_row_hits_zero_distance() {
        let fs: Vec<ItemFeature> = (0..4)
            .map(|i| feat(i, &[i as f32 * 10.0, 0.0]))
            .collect();
        let books = train_codebooks(&fs, 1, &[4], 1).unwrap();
        let probe = feat(99, books.levels[0].row(3));
        let sid = encode_item(&probe, &books).unwrap();
        assert_eq!(sid.codes(), &[3]);
    }

    #[test]
    fn encode_two_levels_by_brute_force() {
        let books = Codebooks {
            levels: vec![
                Codebook {
                    centroids: vec![0.0, 0.0, 10.0, 0.0, 0.0, 10.0],
                    entries: 3,
                    dim: 2,
                },
                Codebook {
                    centroids: vec![1.0, 1.0, -1.0, -1.0],
                    entries: 2,
                    dim: 2,
                },
            ],
        };
        // feature = q1[2] + q2[0]
        let probe = feat(0, &[1.0, 11.0]);
        let sid = encode_item(&probe, &books).unwrap();
        assert_eq!(sid.codes(), &[2, 0]);

        // independent brute-force scan over all rows per level
        let mut r = [1.0f64, 11.0];
        for (l, code) in sid.codes().iter().enumerate() {
            let book = &books.levels[l];
            let mut best = 0u32;
            let mut best_d = f64::INFINITY;
            for c in 0..book.entries {
                let d: f64 = r
                    .iter()
                    .zip(book.row(c))
                    .map(|(a, b)| (a - *b as f64).powi(2))
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = c as u32;
                }
            }
            assert_eq!(best, *code);
            for (x, q) in r.iter_mut().zip(book.row(best as usize)) {
                *x -= *q as f64;
            }
        }
    }

    #[test]
    fn equidistant_rows_pick_the_lower_index() {
        let books = Codebooks {
            levels: vec![Codebook {
                centroids: vec![-1.0, 0.0, 1.0, 0.0],
                entries: 2,
                dim: 2,
            }],
        };
        let sid = encode_item(&feat(0, &[0.0, 5.0]), &books).unwrap();
        assert_eq!(sid.codes(), &[0]);
    }

    #[test]
    fn colliding_duplicate_moves_to_second_nearest_slot() {
        let fs = vec![feat(0, &[1.0, 0.0]), feat(1, &[1.0, 0.0])];
        let books = Codebooks {
            levels: vec![
                Codebook {
                    centroids: vec![0.0, 0.0, 50.0, 50.0],
                    entries: 2,
                    dim: 2,
                },
                Codebook {
                    centroids: vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 8.0, 8.0],
                    entries: 4,
                    dim: 2,
                },
            ],
        };
        let map = assign_corpus(&fs, &books).unwrap();
        let a = map.get(&0).unwrap();
        let b = map.get(&1).unwrap();
        assert_ne!(a, b);
        assert_eq!(a.codes(), &[0, 0]);
        // level-2 residual is (1,0); distance ranks: code0 (d=0), then code1
        // and code2 (d=2, tie -> 1), so the displaced item lands on (0,1)
        assert_eq!(b.codes(), &[0, 1]);
    }

    #[test]
    fn singleton_corpus_matches_encode() {
        let fs = vec![feat(7, &[0.3, 0.4])];
        let books = train_codebooks(&fs, 2, &[2, 2], 5).unwrap();
        let map = assign_corpus(&fs, &books).unwrap();
        assert_eq!(map[&7], encode_item(&fs[0], &books).unwrap());
    }

    #[test]
    fn over_capacity_is_rejected() {
        let fs: Vec<ItemFeature> = (0..5).map(|i| feat(i, &[i as f32, 0.0])).collect();
        let books = train_codebooks(&fs, 1, &[4], 0).unwrap();
        match assign_corpus(&fs, &books) {
            Err(Error::CapacityExceeded { corpus: 5, capacity: 4 }) => {}
            other => panic!("expected CapacityExceeded, got {other:?}"),
        }
    }

    #[test]
    fn empty_corpus_is_rejected() {
        match train_codebooks(&[], 1, &[2], 0) {
            Err(Error::InvalidCorpus(_)) => {}
            other => panic!("expected InvalidCorpus, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_feature_is_rejected() {
        let fs = vec![feat(0, &[f32::NAN, 0.0])];
        match train_codebooks(&fs, 1, &[1], 0) {
            Err(Error::InvalidFeature { item_id: 0, .. }) => {}
            other => panic!("expected InvalidFeature, got {other:?}"),
        }
    }

    #[test]
    fn training_is_deterministic() {
        let fs: Vec<ItemFeature> = (0..40)
            .map(|i| {
                feat(
                    i,
                    &[(i % 7) as f32 * 1.3, (i % 5) as f32 - 2.0, (i % 3) as f32],
                )
            })
            .collect();
        let a = train_codebooks(&fs, 2, &[4, 12], 11).unwrap();
        let b = train_codebooks(&fs, 2, &[4, 12], 11).unwrap();
        for (x, y) in a.levels.iter().zip(&b.levels) {
            assert_eq!(x.centroids, y.centroids);
        }
        let ma = assign_corpus(&fs, &a).unwrap();
        let mb = assign_corpus(&fs, &b).unwrap();
        assert_eq!(ma, mb);
    }

    #[test]
    fn appended_zero_row_guarantees_residual_monotonicity() {
        // with a zero centroid available at each level, picking the nearest
        // row can never increase the residual norm
        let fs: Vec<ItemFeature> = (0..30)
            .map(|i| feat(i, &[(i as f32).sin() * 4.0, (i as f32).cos() * 4.0]))
            .collect();
        let trained = train_codebooks(&fs, 2, &[3, 3], 9).unwrap();
        let padded = Codebooks {
            levels: trained
                .levels
                .iter()
                .map(|b| {
                    let mut centroids = b.centroids.clone();
                    centroids.extend(std::iter::repeat(0.0).take(b.dim));
                    Codebook {
                        centroids,
                        entries: b.entries + 1,
                        dim: b.dim,
                    }
                })
                .collect(),
        };
        let mut prev = reconstruction_mse(&fs, &padded, 0);
        for l in 1..=padded.m() {
            let cur = reconstruction_mse(&fs, &padded, l);
            assert!(cur <= prev + 1e-12, "level {l}: {cur} > {prev}");
            prev = cur;
        }
    }
}
