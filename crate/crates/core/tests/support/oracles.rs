//! Brute-force reference implementations of the evaluation metrics, plus
//! randomized comparisons against the library. Shared by the oracle tests
//! and the acceptance run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sentinel_core::metrics::{
    bev_miou, classification_report, match_detections, mean_average_precision, motion_vpq, tp_metrics,
};
use sentinel_core::sensing::{BevGrid, Detection3D, GridSpec};
use sentinel_core::world::ObjectClass;
use std::collections::{BTreeMap, BTreeSet};

pub fn random_det(rng: &mut ChaCha8Rng, classes: &[ObjectClass]) -> Detection3D {
    let class = classes[rng.random_range(0..classes.len())];
    Detection3D {
        class,
        center: [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)],
        yaw: rng.random_range(-3.2..3.2),
        length: rng.random_range(0.5..8.0),
        width: rng.random_range(0.4..3.0),
        // coarse values so confidence ties happen
        confidence: (rng.random_range(1..=10) as f64) / 10.0,
        speed: rng.random_range(0.0..15.0),
        violation: false,
        peripheral: false,
        track_id: None,
    }
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<Detection3D>, Vec<Detection3D>) {
    let classes = &ObjectClass::ALL[..rng.random_range(1..=4)];
    let np = rng.random_range(0..8);
    let ng = rng.random_range(0..8);
    let preds = (0..np).map(|_| random_det(rng, classes)).collect();
    let gts = (0..ng).map(|_| random_det(rng, classes)).collect();
    (preds, gts)
}

/// Repeatedly take the most confident remaining prediction (lowest index on
/// ties) and give it the nearest free same-class ground truth in range.
pub fn oracle_match(preds: &[Detection3D], gts: &[Detection3D], thresh: f64) -> Vec<(usize, usize)> {
    let mut pred_left: BTreeSet<usize> = (0..preds.len()).collect();
    let mut gt_left: BTreeSet<usize> = (0..gts.len()).collect();
    let mut pairs = Vec::new();
    while !pred_left.is_empty() {
        let mut best_p = *pred_left.iter().next().unwrap();
        for &p in &pred_left {
            if preds[p].confidence > preds[best_p].confidence {
                best_p = p;
            }
        }
        pred_left.remove(&best_p);
        let mut chosen: Option<(usize, f64)> = None;
        for &g in &gt_left {
            if gts[g].class != preds[best_p].class {
                continue;
            }
            let d = ((preds[best_p].center[0] - gts[g].center[0]).powi(2)
                + (preds[best_p].center[1] - gts[g].center[1]).powi(2))
            .sqrt();
            if d <= thresh && chosen.is_none_or(|(_, cd)| d < cd) {
                chosen = Some((g, d));
            }
        }
        if let Some((g, _)) = chosen {
            gt_left.remove(&g);
            pairs.push((best_p, g));
        }
    }
    pairs
}

/// AP as the sum over recall steps of the best precision reached at that
/// recall or beyond, evaluated prefix by prefix.
pub fn oracle_ap(preds: &[Detection3D], gts: &[Detection3D], class: ObjectClass) -> Option<f64> {
    let p: Vec<Detection3D> = preds.iter().filter(|d| d.class == class).cloned().collect();
    let g: Vec<Detection3D> = gts.iter().filter(|d| d.class == class).cloned().collect();
    if g.is_empty() {
        return None;
    }
    let tp: BTreeSet<usize> = oracle_match(&p, &g, 2.0).into_iter().map(|(a, _)| a).collect();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[b].confidence.partial_cmp(&p[a].confidence).unwrap().then(a.cmp(&b)));
    let mut points = Vec::new();
    for n in 1..=order.len() {
        let hits = order[..n].iter().filter(|i| tp.contains(i)).count() as f64;
        points.push((hits / g.len() as f64, hits / n as f64));
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for (i, &(r, _)) in points.iter().enumerate() {
        if r > prev_r {
            let best = points[i..].iter().map(|x| x.1).fold(0.0, f64::max);
            ap += (r - prev_r) * best;
            prev_r = r;
        }
    }
    Some(ap)
}

/// Sutherland-Hodgman clip of polygon `subject` against convex `clip`.
pub fn clip_polygon(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = subject.to_vec();
    for i in 0..clip.len() {
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let inside = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0;
        let cross = |p: [f64; 2], q: [f64; 2]| {
            let (x1, y1, x2, y2) = (p[0], p[1], q[0], q[1]);
            let (x3, y3, x4, y4) = (a[0], a[1], b[0], b[1]);
            let den = (x1 - x2) * (y3 - y4) - (y1 - y2) * (x3 - x4);
            let t = ((x1 - x3) * (y3 - y4) - (y1 - y3) * (x3 - x4)) / den;
            [x1 + t * (x2 - x1), y1 + t * (y2 - y1)]
        };
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (cur, prev) = (input[j], input[(j + input.len() - 1) % input.len()]);
            if inside(cur) {
                if !inside(prev) {
                    out.push(cross(prev, cur));
                }
                out.push(cur);
            } else if inside(prev) {
                out.push(cross(prev, cur));
            }
        }
        if out.is_empty() {
            break;
        }
    }
    out
}

pub fn shoelace(poly: &[[f64; 2]]) -> f64 {
    let mut s = 0.0;
    for i in 0..poly.len() {
        let (p, q) = (poly[i], poly[(i + 1) % poly.len()]);
        s += p[0] * q[1] - q[0] * p[1];
    }
    s.abs() / 2.0
}

pub fn centered_rect(l: f64, w: f64) -> Vec<[f64; 2]> {
    vec![[-l / 2.0, -w / 2.0], [l / 2.0, -w / 2.0], [l / 2.0, w / 2.0], [-l / 2.0, w / 2.0]]
}

pub fn oracle_aligned_iou(a: &Detection3D, b: &Detection3D) -> f64 {
    let inter = shoelace(&clip_polygon(&centered_rect(a.length, a.width), &centered_rect(b.length, b.width)));
    inter / (a.length * a.width + b.length * b.width - inter)
}

pub fn random_grid(rng: &mut ChaCha8Rng, spec: GridSpec) -> BevGrid {
    let mut g = BevGrid::unknown(spec, 0);
    for c in &mut g.cells {
        *c = [0.3, 0.5, 0.9, rng.random_range(0.0..1.0)][rng.random_range(0..4)];
    }
    g
}

pub fn random_mask(rng: &mut ChaCha8Rng, len: usize, ids: u32) -> Vec<u32> {
    // blocky instances so IoU > 0.5 matches actually occur
    let mut m = vec![0; len];
    let mut i = 0;
    while i < len {
        let run = rng.random_range(1..5).min(len - i);
        let id = rng.random_range(0..=ids);
        m[i..i + run].fill(id);
        i += run;
    }
    m
}

pub fn oracle_pq(pred: &[u32], gt: &[u32]) -> f64 {
    let cells = |m: &[u32], id: u32| -> BTreeSet<usize> { (0..m.len()).filter(|&i| m[i] == id).collect() };
    let pids: BTreeSet<u32> = pred.iter().copied().filter(|&v| v != 0).collect();
    let gids: BTreeSet<u32> = gt.iter().copied().filter(|&v| v != 0).collect();
    let mut tp = 0usize;
    let mut iou_sum = 0.0;
    for &p in &pids {
        for &g in &gids {
            let (a, b) = (cells(pred, p), cells(gt, g));
            let iou = a.intersection(&b).count() as f64 / a.union(&b).count() as f64;
            if iou > 0.5 {
                tp += 1;
                iou_sum += iou;
            }
        }
    }
    let fp = pids.len() - tp;
    let fneg = gids.len() - tp;
    let denom = tp as f64 + 0.5 * (fp + fneg) as f64;
    if denom == 0.0 {
        1.0
    } else {
        iou_sum / denom
    }
}

pub const TOL: f64 = 1e-9;

fn worst(acc: &mut f64, got: f64, want: f64) {
    *acc = acc.max((got - want).abs());
}

/// Largest |Δ| between library and oracle per-class AP and mAP.
pub fn check_map(seed: u64, cases: usize) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dev = 0.0;
    for case in 0..cases {
        let (preds, gts) = random_instance(&mut rng);
        let (mean, per_class) = mean_average_precision(&preds, &gts, 2.0);
        let want: BTreeMap<ObjectClass, f64> =
            ObjectClass::ALL.iter().filter_map(|&c| oracle_ap(&preds, &gts, c).map(|ap| (c, ap))).collect();
        if per_class.keys().ne(want.keys()) {
            return Err(format!("case {case}: scored classes differ"));
        }
        for (c, ap) in &want {
            worst(&mut dev, per_class[c], *ap);
        }
        let want_mean = (!want.is_empty()).then(|| want.values().sum::<f64>() / want.len() as f64);
        match (mean, want_mean) {
            (Some(a), Some(b)) => worst(&mut dev, a, b),
            (None, None) => {}
            _ => return Err(format!("case {case}: mAP presence differs")),
        }
    }
    Ok(dev)
}

/// Number of instances where greedy matching picks different pairs.
pub fn check_matching(seed: u64, cases: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..cases {
        let (preds, gts) = random_instance(&mut rng);
        let mut got: Vec<(usize, usize)> = match_detections(&preds, &gts, 2.0).pairs.iter().map(|p| (p.0, p.1)).collect();
        let mut want = oracle_match(&preds, &gts, 2.0);
        got.sort();
        want.sort();
        bad += usize::from(got != want);
    }
    bad
}

pub fn check_tp(seed: u64, cases: usize) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dev = 0.0;
    for case in 0..cases {
        let (preds, gts) = random_instance(&mut rng);
        let m = match_detections(&preds, &gts, 2.0);
        let table = tp_metrics(&m, &preds, &gts);
        if table.rows.iter().map(|r| r.class).ne(ObjectClass::ALL) {
            return Err(format!("case {case}: row order"));
        }
        let mut sums: BTreeMap<ObjectClass, (usize, [f64; 4])> = BTreeMap::new();
        for (p, g) in oracle_match(&preds, &gts, 2.0) {
            let (p, g) = (&preds[p], &gts[g]);
            let e = sums.entry(g.class).or_default();
            e.0 += 1;
            e.1[0] += (p.center[0] - g.center[0]).hypot(p.center[1] - g.center[1]);
            e.1[1] += 1.0 - oracle_aligned_iou(p, g);
            e.1[2] += (p.yaw - g.yaw).sin().atan2((p.yaw - g.yaw).cos()).abs();
            e.1[3] += (p.speed - g.speed).abs();
        }
        for class in ObjectClass::ALL {
            match (table.get(class), sums.get(&class)) {
                (None, None) => {}
                (Some(e), Some((n, s))) if e.matches == *n => {
                    let n = *n as f64;
                    for (got, want) in [e.mate, e.mase, e.maoe, e.mave].iter().zip(s.map(|v| v / n)) {
                        worst(&mut dev, *got, want);
                    }
                }
                other => return Err(format!("case {case}: {class:?} rows differ {other:?}")),
            }
        }
    }
    Ok(dev)
}

pub fn check_miou(seed: u64, cases: usize) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dev = 0.0;
    for _ in 0..cases {
        let spec = GridSpec {
            cells_x: rng.random_range(1..9),
            cells_y: rng.random_range(1..9),
            ..GridSpec::default()
        };
        let (a, b) = (random_grid(&mut rng, spec), random_grid(&mut rng, spec));
        let occ = |g: &BevGrid| -> BTreeSet<usize> { (0..g.cells.len()).filter(|&i| g.cells[i] >= 0.65).collect() };
        let (sa, sb) = (occ(&a), occ(&b));
        let union = sa.union(&sb).count();
        let want = if union == 0 { 1.0 } else { sa.intersection(&sb).count() as f64 / union as f64 };
        worst(&mut dev, bev_miou(&a, &b, 0.65).map_err(|e| e.to_string())?, want);
    }
    Ok(dev)
}

pub fn check_vpq(seed: u64, cases: usize) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dev = 0.0;
    for _ in 0..cases {
        let len = rng.random_range(1..30);
        let ticks = rng.random_range(1..4);
        let pred: Vec<Vec<u32>> = (0..ticks).map(|_| random_mask(&mut rng, len, 3)).collect();
        let gt: Vec<Vec<u32>> = (0..ticks)
            .map(|t| {
                let mut g = pred[t].clone();
                // perturb a few cells
                for _ in 0..rng.random_range(0..len) {
                    let i = rng.random_range(0..len);
                    g[i] = rng.random_range(0..=3);
                }
                g
            })
            .collect();
        let want = pred.iter().zip(&gt).map(|(p, g)| oracle_pq(p, g)).sum::<f64>() / ticks as f64;
        worst(&mut dev, motion_vpq(&pred, &gt).map_err(|e| e.to_string())?, want);
    }
    Ok(dev)
}

pub fn check_classification(seed: u64, cases: usize) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dev = 0.0;
    for _ in 0..cases {
        let n = rng.random_range(1..25);
        let k = rng.random_range(1..5u8);
        let gts: Vec<u8> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let preds: Vec<u8> = (0..n).map(|_| rng.random_range(0..k + 1)).collect();
        let mut cm = [[0f64; 6]; 6];
        for (p, g) in preds.iter().zip(&gts) {
            cm[*g as usize][*p as usize] += 1.0;
        }
        let labels: BTreeSet<u8> = gts.iter().copied().collect();
        let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
        for &l in &labels {
            let l = l as usize;
            let tp = cm[l][l];
            let col: f64 = (0..6).map(|g| cm[g][l]).sum();
            let row: f64 = cm[l].iter().sum();
            let p = if col > 0.0 { tp / col } else { 0.0 };
            let r = tp / row;
            p_sum += p;
            r_sum += r;
            f_sum += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        }
        let nl = labels.len() as f64;
        let acc = (0..6).map(|i| cm[i][i]).sum::<f64>() / n as f64;
        let got = classification_report(&preds, &gts).map_err(|e| e.to_string())?;
        for (a, b) in [(got.accuracy, acc), (got.precision, p_sum / nl), (got.recall, r_sum / nl), (got.f1, f_sum / nl)] {
            worst(&mut dev, a, b);
        }
    }
    Ok(dev)
}
