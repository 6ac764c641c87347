use proptest::prelude::*;
use sentinel_core::fusion::{associate_and_merge, ego_align, fuse_grids, EgoMotion};
use sentinel_core::geom::{OrientedRect, Pose};
use sentinel_core::metrics::{average_precision, bev_miou, rate_alert, rate_alerts, EpisodeTruth, Rating, TickEvidence};
use sentinel_core::reasoning::{
    commit_count, generate_prompt, sample_corpus, AlertMode, BoxOutcome, CorpusBox, CorpusStore, EvidenceRef, Mission,
    PassiveMonitor, PromptLevel, QueryJob, RiskScore, SafetyAlert, SampleConfig, Severity,
};
use sentinel_core::sensing::{BevGrid, Detection3D, GridSpec, SensorFrame};
use sentinel_core::v2x::{decode_message, encode_message};
use sentinel_core::world::ObjectClass;

fn small_spec(cx: usize, cy: usize) -> GridSpec {
    GridSpec {
        cells_x: cx,
        cells_y: cy,
        resolution_m_per_cell: 0.5,
        origin: Pose::default(),
    }
}

fn grid_strategy(cx: usize, cy: usize) -> impl Strategy<Value = BevGrid> {
    prop::collection::vec(0.0f64..=1.0, cx * cy).prop_map(move |cells| BevGrid {
        spec: small_spec(cx, cy),
        tick: 3,
        cells,
    })
}

fn class_strategy() -> impl Strategy<Value = ObjectClass> {
    prop::sample::select(ObjectClass::ALL.to_vec())
}

fn det_strategy(span: f64) -> impl Strategy<Value = Detection3D> {
    (class_strategy(), -span..span, -span..span, -3.1f64..3.1, 0.05f64..1.0).prop_map(|(class, x, y, yaw, conf)| {
        let (length, width) = class.default_footprint();
        Detection3D {
            class,
            center: [x, y],
            yaw,
            length,
            width,
            confidence: conf,
            speed: 0.0,
            violation: false,
            peripheral: false,
            track_id: None,
        }
    })
}

const TAG_POOL: [&str; 8] = [
    "mission:AccidentPrediction",
    "mission:SafetyEvaluation",
    "hazard:collision",
    "hazard:proximity",
    "pair:car-truck",
    "class:car",
    "class:pedestrian",
    "violation",
];

fn tags_strategy() -> impl Strategy<Value = Vec<String>> {
    prop::sample::subsequence(TAG_POOL.to_vec(), 0..=TAG_POOL.len())
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn outcome_strategy() -> impl Strategy<Value = BoxOutcome> {
    prop::sample::select(vec![BoxOutcome::Success, BoxOutcome::Neutral, BoxOutcome::Failure])
}

fn store_strategy(max: usize) -> impl Strategy<Value = Vec<CorpusBox>> {
    prop::collection::vec((tags_strategy(), 0u64..2000, outcome_strategy()), 0..=max).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (tags, created, outcome))| CorpusBox {
                box_id: format!("b{i:03}"),
                mission: Mission::AccidentPrediction,
                summary_text: format!("case {i} with a long enough summary to cost budget"),
                relevance_tags: tags,
                created_tick: created,
                outcome,
                payload_ref: format!("ep#{i}"),
            })
            .collect()
    })
}

fn job(tags: Vec<String>, corpus_tick: u64) -> QueryJob {
    QueryJob {
        mode: AlertMode::Passive,
        mission: Mission::AccidentPrediction,
        tick: 5,
        text: None,
        tags,
        risk: RiskScore::default(),
        corpus_tick,
    }
}

// independent re-statement of the sampling priority
fn oracle_priority(b: &CorpusBox, tags: &[String], now: u64) -> f64 {
    use std::collections::BTreeSet;
    let x: BTreeSet<&String> = tags.iter().collect();
    let y: BTreeSet<&String> = b.relevance_tags.iter().collect();
    let union = x.union(&y).count();
    let jac = if union == 0 { 0.0 } else { x.intersection(&y).count() as f64 / union as f64 };
    let age = now.saturating_sub(b.created_tick) as f64;
    let w = match b.outcome {
        BoxOutcome::Success => 1.0,
        BoxOutcome::Neutral => 0.5,
        BoxOutcome::Failure => 0.8,
    };
    0.5 * jac + 0.3 * 0.5f64.powf(age / 500.0) + 0.2 * w
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fusion_is_permutation_invariant(
        grids in prop::collection::vec(grid_strategy(6, 5), 1..6),
        seed in any::<u64>(),
    ) {
        let fused = fuse_grids(&grids).unwrap();
        let mut shuffled = grids.clone();
        // deterministic Fisher-Yates from the seed
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let again = fuse_grids(&shuffled).unwrap();
        prop_assert_eq!(fused.cells, again.cells);
    }

    #[test]
    fn fusing_with_unknown_changes_nothing(g in grid_strategy(4, 4)) {
        let fused = fuse_grids(&[g.clone(), BevGrid::unknown(g.spec, g.tick)]).unwrap();
        let alone = fuse_grids(&[g]).unwrap();
        for (a, b) in fused.cells.iter().zip(&alone.cells) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ego_align_zero_motion_is_identity(g in grid_strategy(7, 6), x in -50.0f64..50.0, y in -50.0f64..50.0, yaw in -3.1f64..3.1) {
        let mut g = g;
        g.spec.origin = Pose::new(x, y, yaw);
        let m = EgoMotion { agent_id: 1, from_tick: g.tick, to_tick: g.tick + 1, delta: Pose::default() };
        let out = ego_align(&g, &m).unwrap();
        prop_assert_eq!(&out.cells, &g.cells);
        prop_assert_eq!(out.spec, g.spec);
        prop_assert_eq!(out.tick, g.tick + 1);
    }

    #[test]
    fn ego_align_whole_cell_shift(g in grid_strategy(8, 6), dc in 0usize..4, dr in 0usize..3) {
        let res = g.spec.resolution_m_per_cell;
        let delta = Pose::new(dc as f64 * res, dr as f64 * res, 0.0);
        let m = EgoMotion { agent_id: 1, from_tick: g.tick, to_tick: g.tick + 2, delta };
        let out = ego_align(&g, &m).unwrap();
        for row in 0..g.spec.cells_y {
            for col in 0..g.spec.cells_x {
                let (sc, sr) = (col + dc, row + dr);
                if sc < g.spec.cells_x && sr < g.spec.cells_y {
                    prop_assert_eq!(out.get(col, row), g.get(sc, sr));
                } else {
                    prop_assert_eq!(out.get(col, row), 0.5);
                }
            }
        }
    }

    #[test]
    fn codec_round_trip_within_quantum(
        g in grid_strategy(9, 7),
        dets in prop::collection::vec(det_strategy(40.0), 0..8),
        tick in 0u64..10_000,
        agent in 1u32..500,
        sent in 0.0f64..1000.0,
    ) {
        let frame = SensorFrame { agent_id: agent, tick, ego_pose: Pose::default(), detections: dets.clone(), local_grid: BevGrid { tick, ..g.clone() } };
        let bytes = encode_message(&frame, sent);
        let msg = decode_message(&bytes).unwrap();
        prop_assert_eq!(msg.agent_id, agent);
        prop_assert_eq!(msg.tick, tick);
        prop_assert_eq!(msg.sent_time_s, sent);
        let back = msg.into_frame(Pose::default());
        prop_assert_eq!(back.local_grid.cells.len(), g.cells.len());
        for (a, b) in back.local_grid.cells.iter().zip(&g.cells) {
            prop_assert!((a - b).abs() <= 1.0 / 255.0);
        }
        prop_assert_eq!(back.detections.len(), dets.len());
        for (a, b) in back.detections.iter().zip(&dets) {
            prop_assert_eq!(a.class, b.class);
            prop_assert!((a.center[0] - b.center[0]).abs() < 1e-4);
            prop_assert!((a.confidence - b.confidence).abs() < 1e-6);
        }
    }

    #[test]
    fn merge_is_idempotent(dets in prop::collection::vec(det_strategy(10.0), 0..12), gate in 0.5f64..3.0) {
        let once = associate_and_merge(&dets, gate);
        let twice = associate_and_merge(&once, gate);
        prop_assert_eq!(once.len(), twice.len());
        for (a, b) in once.iter().zip(&twice) {
            prop_assert_eq!(a.class, b.class);
            prop_assert!((a.center[0] - b.center[0]).abs() < 1e-9 && (a.center[1] - b.center[1]).abs() < 1e-9);
        }
        prop_assert!(once.len() <= dets.len());
    }

    #[test]
    fn penetration_is_symmetric(
        a in (-5.0f64..5.0, -5.0f64..5.0, -3.1f64..3.1, 0.5f64..8.0, 0.5f64..3.0),
        b in (-5.0f64..5.0, -5.0f64..5.0, -3.1f64..3.1, 0.5f64..8.0, 0.5f64..3.0),
    ) {
        let ra = OrientedRect::new([a.0, a.1], a.2, a.3, a.4);
        let rb = OrientedRect::new([b.0, b.1], b.2, b.3, b.4);
        match (ra.penetration(&rb), rb.penetration(&ra)) {
            (None, None) => {}
            (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
            other => prop_assert!(false, "asymmetric: {:?}", other),
        }
    }

    #[test]
    fn sampling_matches_exhaustive_ranking(
        boxes in store_strategy(50),
        tags in tags_strategy(),
        now in 0u64..3000,
        k in 0usize..12,
    ) {
        let mut store = CorpusStore::in_memory();
        for b in &boxes {
            store.append(b.clone()).unwrap();
        }
        let got: Vec<String> = sample_corpus(&store, &job(tags.clone(), now), k, &SampleConfig::default())
            .into_iter()
            .map(|s| s.corpus_box.box_id)
            .collect();
        let mut all: Vec<(f64, u64, String)> =
            boxes.iter().map(|b| (oracle_priority(b, &tags, now), b.created_tick, b.box_id.clone())).collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
        let want: Vec<String> = all.into_iter().take(k).map(|t| t.2).collect();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn prompt_fits_every_budget(
        boxes in store_strategy(30),
        cache in prop::collection::vec("[a-z ]{0,400}", 0..20),
        raw in prop::collection::vec("[a-z ]{0,2000}", 0..10),
        level in prop::sample::select(PromptLevel::ALL.to_vec()),
        budget_override in prop::option::of(200usize..3000),
    ) {
        let mut store = CorpusStore::in_memory();
        for b in &boxes {
            store.append(b.clone()).unwrap();
        }
        let j = job(vec!["hazard:collision".into()], 100);
        let sampled = sample_corpus(&store, &j, level.k(), &SampleConfig::default());
        let budget = budget_override.unwrap_or(level.budget_chars());
        let p = generate_prompt(&j, &sampled, &cache, &raw, budget);
        prop_assert!(p.rendered_len() <= budget, "{} > {}", p.rendered_len(), budget);
        let mut off = p.clone();
        off.cot = false;
        prop_assert!(off.render().chars().count() <= budget);
    }

    #[test]
    fn passive_trigger_is_monotone(thr in 0.0f64..=1.0, r in 0.0f64..=1.0, bump in 0.0f64..=1.0, now in 0.0f64..100.0) {
        let m = PassiveMonitor::new(thr, 3.0).unwrap();
        if m.would_fire(r, now) {
            prop_assert!(m.would_fire((r + bump).min(1.0), now));
            let lower = PassiveMonitor::new((thr - bump).max(0.0), 3.0).unwrap();
            prop_assert!(lower.would_fire(r, now));
        }
        prop_assert_eq!(m.would_fire(r, now), r >= thr - 1e-12);
    }

    #[test]
    fn commit_count_formula(rate in 0.0f64..=1.0, k in 0usize..20) {
        let n = commit_count(rate, k);
        prop_assert_eq!(n, ((rate * k as f64 - 1e-9).ceil().max(0.0) as usize).min(k));
        prop_assert!(n <= k);
    }

    #[test]
    fn ap_ignores_confidence_scale(
        preds in prop::collection::vec(det_strategy(8.0), 0..10),
        gts in prop::collection::vec(det_strategy(8.0), 1..8),
        scale in 0.01f64..1.0,
    ) {
        let class = gts[0].class;
        let scaled: Vec<Detection3D> = preds.iter().cloned().map(|mut d| { d.confidence *= scale; d }).collect();
        let a = average_precision(&preds, &gts, class, 2.0).unwrap();
        let b = average_precision(&scaled, &gts, class, 2.0).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn miou_is_symmetric(a in grid_strategy(6, 6), b in grid_strategy(6, 6)) {
        let ab = bev_miou(&a, &b, 0.65).unwrap();
        let ba = bev_miou(&b, &a, 0.65).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(bev_miou(&a, &a, 0.65).unwrap(), 1.0);
    }

    #[test]
    fn each_alert_gets_exactly_one_rating(
        alerts in prop::collection::vec(
            (0u64..4, prop::collection::vec((0u32..5, prop::option::of(0u32..5)), 0..3), any::<bool>(), 0usize..8),
            0..30,
        ),
        ttcs in prop::collection::vec(0.0f64..3.0, 4),
    ) {
        let mut truth = EpisodeTruth::default();
        for t in 0..4u64 {
            truth.ticks.insert(t, TickEvidence {
                tracks: [0, 1, 2].into_iter().collect(),
                collisions: [((0, 1), ttcs[t as usize]), ((1, 2), ttcs[(t as usize + 1) % 4])].into_iter().collect(),
            });
        }
        let alerts: Vec<SafetyAlert> = alerts
            .into_iter()
            .map(|(tick, ev, fallback, m)| SafetyAlert {
                alert_id: format!("a{tick}"),
                mode: AlertMode::Passive,
                mission: Mission::ALL[m],
                severity: Severity::Warning,
                text: "x".into(),
                evidence: ev.into_iter().map(|(a, b)| match b {
                    Some(b) => EvidenceRef::collision(a, b),
                    None => EvidenceRef::Track(a),
                }).collect(),
                tick,
                fallback,
            })
            .collect();
        let hist = rate_alerts(&alerts, &truth);
        prop_assert_eq!(hist.total(), alerts.len() as u64);
        for m in Mission::ALL {
            let n: u64 = hist.counts[&m].iter().sum();
            let want = alerts.iter().filter(|a| a.mission == m).count() as u64;
            prop_assert_eq!(n, want);
            if n > 0 {
                let s: f64 = hist.percentages(m).iter().sum();
                prop_assert!((s - 100.0).abs() < 1e-9);
            }
        }
        for a in &alerts {
            let r = rate_alert(a, &truth);
            if a.fallback || a.evidence.is_empty() {
                prop_assert_eq!(r, Rating::Bad);
            }
        }
    }
}
