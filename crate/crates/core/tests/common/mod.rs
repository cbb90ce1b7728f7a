//! Test-only oracles and instance generators shared by the integration tests.
#![allow(dead_code)]

use dip3d::candidates::{MatchConfig, MatchedCandidate};
use dip3d::frame::FeatureCandidate;
use dip3d::stereo::{CalibratedStereoRig, PixelPoint};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn reference_rig() -> CalibratedStereoRig {
    CalibratedStereoRig::new(1000.0, 800.0, 600.0, 800.0, 0.1, 1600, 1200).unwrap()
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += (a[k] - b[k]) * (a[k] - b[k]);
    }
    s.sqrt()
}

/// Exhaustive matcher: sorts every right feature by distance for each left
/// feature, then grants proposals by repeatedly taking the globally smallest
/// remaining one.
pub fn oracle_match(
    left: &[FeatureCandidate],
    right: &[FeatureCandidate],
    cfg: &MatchConfig,
) -> Vec<MatchedCandidate> {
    if right.len() < 2 {
        return Vec::new();
    }
    let mut proposals: Vec<(f64, usize, usize)> = Vec::new();
    for (i, l) in left.iter().enumerate() {
        let mut all: Vec<(f64, usize)> = right
            .iter()
            .enumerate()
            .map(|(j, r)| (l2(&l.descriptor, &r.descriptor), j))
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let (d1, j) = all[0];
        let d2 = all[1].0;
        if d2 <= 0.0 || d1 / d2 > cfg.ratio_threshold {
            continue;
        }
        let r = &right[j];
        let disparity = l.point.x - r.point.x;
        let dy = (l.point.y - r.point.y).abs();
        if disparity >= cfg.min_disparity_px && dy <= cfg.epipolar_tolerance_px {
            proposals.push((d1, i, j));
        }
    }
    let mut used = vec![false; right.len()];
    let mut out = Vec::new();
    while !proposals.is_empty() {
        let mut best = 0;
        for k in 1..proposals.len() {
            let (d, i, _) = proposals[k];
            let (bd, bi, _) = proposals[best];
            if d < bd || (d == bd && i < bi) {
                best = k;
            }
        }
        let (d, i, j) = proposals.remove(best);
        if used[j] {
            continue;
        }
        used[j] = true;
        out.push(MatchedCandidate {
            left: left[i].point,
            right: right[j].point,
            match_distance: d,
            index: out.len(),
            left_feature: i,
            right_feature: j,
        });
    }
    out
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Random matching instance: some left features are noisy copies of right
/// features at plausible stereo offsets, some are unrelated.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_per_side: usize,
    dim: usize,
) -> (Vec<FeatureCandidate>, Vec<FeatureCandidate>) {
    let n_right = rng.random_range(0..=max_per_side);
    let n_left = rng.random_range(0..=max_per_side);
    let noise = [0.0, 0.01, 0.05, 0.2, 0.5][rng.random_range(0..5)];
    let right: Vec<FeatureCandidate> = (0..n_right)
        .map(|_| {
            FeatureCandidate::new(
                PixelPoint::new(rng.random_range(0.0..1600.0), rng.random_range(0.0..1200.0)),
                unit(rng, dim),
            )
        })
        .collect();
    let left = (0..n_left)
        .map(|_| {
            if !right.is_empty() && rng.random_bool(0.7) {
                let r = &right[rng.random_range(0..right.len())];
                let desc = r
                    .descriptor
                    .iter()
                    .map(|v| v + noise * rng.random_range(-1.0..1.0))
                    .collect();
                let p = PixelPoint::new(
                    r.point.x + rng.random_range(-5.0..60.0),
                    r.point.y + rng.random_range(-3.0..3.0),
                );
                FeatureCandidate::new(p, desc)
            } else {
                FeatureCandidate::new(
                    PixelPoint::new(rng.random_range(0.0..1600.0), rng.random_range(0.0..1200.0)),
                    unit(rng, dim),
                )
            }
        })
        .collect();
    (left, right)
}
