mod support;

use hub_core::surveillance::{decode_pattern, CameraSpec, Surveillance};
use hub_core::DEFAULT_SIM_EPOCH;
use proptest::prelude::*;
use support::*;

#[test]
fn oracle_on_a_hand_case() {
    // K=2, consumer every 2nd tick, 6 frames: ticks 1..=6 produce, pops at 2, 4, 6.
    // t1 [1]  t2 [1,2] pop 1 -> [2]  t3 [2,3]  t4 drop 2 -> [3,4] pop 3 -> [4]
    // t5 [4,5]  t6 drop 4 -> [5,6] pop 5 -> [6]
    assert_eq!(queue_oracle(6, 2, 2), (vec![1, 3, 5], 2, 1));
}

#[test]
fn frames_carry_their_own_seq() {
    let mut cams = Surveillance::new();
    cams.add_camera(CameraSpec { id: "c".into(), width: 320, height: 240, fps: 10 }, DEFAULT_SIM_EPOCH).unwrap();
    let q = cams.open_stream("c", 64, None).unwrap();
    cams.run_until(DEFAULT_SIM_EPOCH.plus_millis(5_000));
    let mut n = 0;
    while let Some(f) = q.pop() {
        n += 1;
        assert_eq!(decode_pattern(&f.pixels, f.width, f.height), Some((f.seq, f.at)));
        assert!(f.to_pgm().starts_with(b"P5\n320 240\n255\n"));
    }
    assert_eq!(n, 50);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn queue_matches_oracle(k in 1usize..16, every in 1u64..6, frames in 1u64..400) {
        let mut cams = Surveillance::new();
        cams.add_camera(CameraSpec { id: "c".into(), width: 128, height: 8, fps: 10 }, DEFAULT_SIM_EPOCH).unwrap();
        let q = cams.open_stream("c", k, None).unwrap();
        let mut got = Vec::new();
        for i in 1..=frames {
            cams.run_until(DEFAULT_SIM_EPOCH.plus_millis(i as i64 * 100));
            if i % every == 0 {
                if let Some(f) = q.pop() {
                    got.push(f.seq);
                }
            }
        }
        let (want, dropped, queued) = queue_oracle(frames, k as u64, every);
        let s = q.stats();
        prop_assert_eq!(got, want);
        prop_assert_eq!((s.dropped, s.queued, s.produced), (dropped, queued, frames));
        prop_assert_eq!(s.delivered + s.dropped + s.queued, s.produced);
    }
}
