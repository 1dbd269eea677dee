mod common;

use common::moving_block_frames;
use langflow::pipeline::{process_window, segment_video, stream_windows};
use langflow::{Error, PipelineConfig, SegmentationMap};
use proptest::prelude::*;

/// Emitted-map count obtained by walking the window loop directly.
fn expected_maps(t: usize, w: usize) -> usize {
    let mut count = 0;
    let mut p = 0;
    while p + w <= t {
        count += w - 1;
        p += w;
    }
    count
}

fn quiet(w: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig::new(w);
    cfg.langevin.xi_d_x = 0.0;
    cfg.langevin.xi_d_y = 0.0;
    cfg
}

fn shifted(m: &SegmentationMap, offset: isize) -> SegmentationMap {
    SegmentationMap {
        frame_index: (m.frame_index as isize + offset) as usize,
        ..m.clone()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn map_count_law(t in 1usize..30, w in 3usize..9) {
        let frames = moving_block_frames(t, 64, 64, 2, 5);
        let cfg = PipelineConfig::new(w);
        let streamed: usize = stream_windows(frames.iter().cloned().map(Ok::<_, Error>), &cfg)
            .unwrap()
            .map(|r| r.unwrap().maps.len())
            .sum();
        prop_assert_eq!(streamed, expected_maps(t, w));
        match segment_video(&frames, &cfg) {
            Ok(run) => {
                prop_assert_eq!(run.map_count(), expected_maps(t, w));
                prop_assert_eq!(run.skipped_frames, t % w);
                prop_assert_eq!(run.timings().count(), (t / w) * w);
            }
            Err(Error::Input(_)) => prop_assert!(t < w),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}

#[test]
fn permuting_windows_permutes_outputs() {
    let w = 4;
    let frames = moving_block_frames(12, 96, 96, 2, 11);
    let order = [2usize, 0, 1];
    let permuted: Vec<_> = order
        .iter()
        .flat_map(|&k| frames[k * w..(k + 1) * w].iter().cloned())
        .collect();
    let cfg = quiet(w);
    let a = segment_video(&frames, &cfg).unwrap();
    let b = segment_video(&permuted, &cfg).unwrap();
    for (slot, &k) in order.iter().enumerate() {
        let offset = (slot as isize - k as isize) * w as isize;
        let expect: Vec<_> = a.windows[k].maps.iter().map(|m| shifted(m, offset)).collect();
        assert_eq!(b.windows[slot].maps, expect, "window slot {slot}");
    }
}

#[test]
fn windows_depend_only_on_their_frames_and_index() {
    let w = 3;
    let frames = moving_block_frames(9, 96, 96, 2, 13);
    let mut cfg = PipelineConfig::new(w);
    cfg.seed = Some(21);
    let run = segment_video(&frames, &cfg).unwrap();
    for (k, win) in run.windows.iter().enumerate() {
        let alone = process_window(&frames[k * w..(k + 1) * w], k + 1, &cfg).unwrap();
        assert_eq!(alone.maps, win.maps);
    }
}

#[test]
fn noise_is_keyed_by_window_index() {
    let w = 4;
    let frames = moving_block_frames(4, 96, 96, 2, 17);
    let cfg = PipelineConfig::new(w);
    let first = process_window(&frames, 1, &cfg).unwrap();
    let second = process_window(&frames, 2, &cfg).unwrap();
    assert_eq!(first.maps[0].groups, second.maps[0].groups);
    assert_ne!(first.maps[2].groups, second.maps[2].groups);
}
