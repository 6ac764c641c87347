//! Cross-agent detection merging.

use crate::geom::distance;
use crate::sensing::Detection3D;
use std::cmp::Ordering;

struct Cluster {
    weighted: [f64; 2],
    weight: f64,
    best: Detection3D,
    violation: bool,
    members: usize,
}

impl Cluster {
    fn center(&self) -> [f64; 2] {
        if self.members == 1 {
            self.best.center
        } else {
            [self.weighted[0] / self.weight, self.weighted[1] / self.weight]
        }
    }

    fn absorb(&mut self, other: Cluster) {
        self.weighted[0] += other.weighted[0];
        self.weighted[1] += other.weighted[1];
        self.weight += other.weight;
        self.violation |= other.violation;
        self.members += other.members;
        if other.best.confidence > self.best.confidence {
            self.best = other.best;
        }
    }

    fn into_detection(self) -> Detection3D {
        let center = self.center();
        let mut det = self.best;
        det.center = center;
        det.violation = self.violation;
        det
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage clustering of same-class detections whose centers lie
/// within `gate_m`; each cluster becomes one detection at the
/// confidence-weighted mean center carrying the maximum confidence.
///
/// Clustering repeats on the merged centers until nothing moves, so the
/// output is a fixpoint: running it again changes nothing.
pub fn associate_and_merge(dets: &[Detection3D], gate_m: f64) -> Vec<Detection3D> {
    let mut clusters: Vec<Cluster> = dets
        .iter()
        .map(|d| {
            let w = d.confidence.max(1e-6);
            Cluster {
                weighted: [d.center[0] * w, d.center[1] * w],
                weight: w,
                best: d.clone(),
                violation: d.violation,
                members: 1,
            }
        })
        .collect();

    loop {
        let n = clusters.len();
        let centers: Vec<[f64; 2]> = clusters.iter().map(Cluster::center).collect();
        let mut parent: Vec<usize> = (0..n).collect();
        let mut merged_any = false;
        for i in 0..n {
            for j in i + 1..n {
                if clusters[i].best.class == clusters[j].best.class && distance(centers[i], centers[j]) <= gate_m {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[b.max(a)] = a.min(b);
                        merged_any = true;
                    }
                }
            }
        }
        if !merged_any {
            break;
        }
        let mut slots: Vec<Option<Cluster>> = Vec::with_capacity(n);
        let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
        for c in clusters.drain(..) {
            slots.push(Some(c));
        }
        for i in 0..n {
            let root = roots[i];
            if root != i {
                let member = slots[i].take().expect("each cluster moved once");
                slots[root].as_mut().expect("roots precede members").absorb(member);
            }
        }
        clusters = slots.into_iter().flatten().collect();
    }

    let mut out: Vec<Detection3D> = clusters.into_iter().map(Cluster::into_detection).collect();
    out.sort_by(detection_order);
    out
}

pub(crate) fn detection_order(a: &Detection3D, b: &Detection3D) -> Ordering {
    a.class
        .cmp(&b.class)
        .then(a.center[0].total_cmp(&b.center[0]))
        .then(a.center[1].total_cmp(&b.center[1]))
        .then(b.confidence.total_cmp(&a.confidence))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::ObjectClass;

    fn det(x: f64, conf: f64) -> Detection3D {
        Detection3D {
            class: ObjectClass::Car,
            center: [x, 0.0],
            yaw: 0.0,
            length: 4.0,
            width: 2.0,
            confidence: conf,
            speed: 0.0,
            violation: false,
            peripheral: false,
            track_id: None,
        }
    }

    #[test]
    fn duplicates_collapse() {
        let out = associate_and_merge(&[det(1.0, 0.4), det(1.0, 0.7)], 2.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].confidence, 0.7);
        assert!((out[0].center[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn outside_gate_kept_apart() {
        assert_eq!(associate_and_merge(&[det(0.0, 0.5), det(3.0, 0.5)], 2.0).len(), 2);
    }

    #[test]
    fn weighted_mean_of_chain() {
        let out = associate_and_merge(&[det(0.0, 0.9), det(1.0, 0.6), det(2.0, 0.3)], 2.0);
        assert_eq!(out.len(), 1);
        assert!((out[0].center[0] - 1.2 / 1.8).abs() < 1e-12);
        assert_eq!(out[0].confidence, 0.9);
    }

    #[test]
    fn classes_never_merge() {
        let mut ped = det(0.5, 0.9);
        ped.class = ObjectClass::Pedestrian;
        assert_eq!(associate_and_merge(&[det(0.0, 0.9), ped], 2.0).len(), 2);
    }

    #[test]
    fn merged_centers_reclustered() {
        // (±1, 0) link at exactly the gate; their mean is 1.8 m from the third.
        let mut a = det(-1.0, 0.5);
        let mut b = det(1.0, 0.5);
        let mut c = det(0.0, 0.5);
        a.center[1] = 0.0;
        b.center[1] = 0.0;
        c.center[1] = 1.8;
        let once = associate_and_merge(&[a, b, c], 2.0);
        assert_eq!(once.len(), 1);
        assert_eq!(associate_and_merge(&once, 2.0), once);
    }
}
