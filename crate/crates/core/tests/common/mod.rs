//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};

use langflow::evaluation::LabelMask;
use langflow::keypoint::QuantizedMap;
use langflow::Frame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Quantized map with the given per-pixel bins and unit rightward velocity.
pub fn quantized(w: usize, h: usize, bins: Vec<Option<u16>>, bin_count: usize) -> QuantizedMap {
    let mut histogram = vec![0; bin_count];
    for b in bins.iter().flatten() {
        histogram[*b as usize] += 1;
    }
    QuantizedMap {
        width: w,
        height: h,
        bins,
        bin_count,
        magnitude_threshold: 0.0,
        histogram,
        vx: vec![1.0; w * h],
        vy: vec![0.0; w * h],
    }
}

pub fn random_quantized(rng: &mut ChaCha8Rng, max_side: usize, bin_count: usize) -> QuantizedMap {
    let w = rng.random_range(1..=max_side);
    let h = rng.random_range(1..=max_side);
    let fill = rng.random_range(0.1..0.9);
    let bins = (0..w * h)
        .map(|_| {
            rng.random_bool(fill)
                .then(|| rng.random_range(0..bin_count as u16))
        })
        .collect();
    quantized(w, h, bins, bin_count)
}

/// Components by breadth-first flood fill over 8-adjacency, restricted to
/// pixels whose bin is in `peaks` and equal to the seed's bin. Returned as
/// `(bin, sorted pixel indices)` in raster order of each component's first
/// pixel, after dropping components below `min_size`.
pub fn flood_fill_groups(
    q: &QuantizedMap,
    peaks: &[usize],
    min_size: usize,
) -> Vec<(u16, Vec<usize>)> {
    let (w, h) = (q.width as i64, q.height as i64);
    let keep = |i: usize| q.bins[i].filter(|b| peaks.contains(&(*b as usize)));
    let mut seen = vec![false; q.bins.len()];
    let mut out = Vec::new();
    for start in 0..q.bins.len() {
        let Some(bin) = keep(start) else { continue };
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut comp = Vec::new();
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y) = ((i as i64) % w, (i as i64) / w);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = (ny * w + nx) as usize;
                    if !seen[j] && keep(j) == Some(bin) {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        comp.sort_unstable();
        if comp.len() >= min_size.max(1) {
            out.push((bin, comp));
        }
    }
    out
}

/// Ground-truth coverage counted pixel by pixel; `None` for empty truth.
pub fn brute_accuracy(s: &LabelMask, gt: &LabelMask) -> Option<f64> {
    let mut area = 0u64;
    let mut hit = 0u64;
    for y in 0..gt.height {
        for x in 0..gt.width {
            if gt.labels[y * gt.width + x] != 0 {
                area += 1;
                if s.labels[y * s.width + x] != 0 {
                    hit += 1;
                }
            }
        }
    }
    (area > 0).then(|| hit as f64 / area as f64)
}

pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize) -> LabelMask {
    let fill = rng.random_range(0.0..1.0);
    let labels = (0..w * h)
        .map(|_| if rng.random_bool(fill) { rng.random_range(1..4) } else { 0 })
        .collect();
    LabelMask::new(w, h, labels).unwrap()
}

/// Random-texture frames with a block translating `(vx, 0)` per frame.
pub fn moving_block_frames(n: usize, w: usize, h: usize, vx: usize, seed: u64) -> Vec<Frame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg: Vec<u8> = (0..w * h).map(|_| rng.random()).collect();
    let (bw, bh) = (w / 3, h / 3);
    let tex: Vec<u8> = (0..bw * bh).map(|_| rng.random()).collect();
    (0..n)
        .map(|t| {
            let mut data = bg.clone();
            for y in 0..bh {
                for x in 0..bw {
                    let gx = (w / 8 + vx * t + x) % w;
                    data[(h / 3 + y) * w + gx] = tex[y * bw + x];
                }
            }
            Frame::new(w, h, data).unwrap()
        })
        .collect()
}

/// Relative path → contents for every file below `root`.
pub fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Wall-clock durations cannot repeat between runs; blank the
/// milliseconds column so the rest of timings.csv is still compared.
pub fn strip_durations(tree: &mut BTreeMap<PathBuf, Vec<u8>>) {
    if let Some(t) = tree.get_mut(Path::new("timings.csv")) {
        let text = String::from_utf8(t.clone()).unwrap();
        let stripped: String = text
            .lines()
            .map(|l| match l.rsplit_once(',') {
                Some((head, _)) => format!("{head},\n"),
                None => format!("{l}\n"),
            })
            .collect();
        *t = stripped.into_bytes();
    }
}

/// First difference between two output trees, if any.
pub fn tree_difference(a: &Path, b: &Path) -> Option<String> {
    let (mut ta, mut tb) = (read_tree(a), read_tree(b));
    strip_durations(&mut ta);
    strip_durations(&mut tb);
    let names_a: Vec<_> = ta.keys().collect();
    let names_b: Vec<_> = tb.keys().collect();
    if names_a != names_b {
        return Some(format!("file sets differ: {names_a:?} vs {names_b:?}"));
    }
    ta.iter()
        .find(|(k, v)| tb[*k] != **v)
        .map(|(k, _)| format!("{} differs", k.display()))
}
