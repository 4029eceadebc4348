mod common;

use perfnet_core::pose::*;
use perfnet_core::Tensor;
use proptest::prelude::*;


fn single_limb_person(a: (f32, f32), b: (f32, f32)) -> Person {
    let mut keypoints = vec![Keypoint { x: 0.0, y: 0.0, confidence: 0.0 }; NUM_KEYPOINTS];
    keypoints[kp::LEFT_SHOULDER] = Keypoint { x: a.0, y: a.1, confidence: 1.0 };
    keypoints[kp::LEFT_ELBOW] = Keypoint { x: b.0, y: b.1, confidence: 1.0 };
    Person { bbox: [0.0, 0.0, 1.0, 1.0], keypoints }
}

fn lit_pixels(img: &Tensor) -> Vec<bool> {
    img.data().chunks(3).map(|px| px.iter().any(|&v| v != 0.0)).collect()
}

#[test]
fn rasterizer_matches_capsule_oracle() {
    assert_eq!(common::raster_oracle_mismatches(200, 21), 0);
}

#[test]
fn empty_poses_over_rgb_leave_the_frame_unchanged() {
    let frame = Tensor::from_fn([8, 8, 3], |i| (i % 7) as f32 / 7.0);
    let out =
        render_pose_frame(Some(&frame), (8, 8), &PoseFrame::empty(), &RenderSpec::default(), &mut RenderStats::default())
            .unwrap();
    assert_eq!(out, frame);
}

#[test]
fn jsonl_file_round_trip() {
    let frames = vec![PoseFrame { persons: vec![single_limb_person((1.0, 2.0), (3.5, 4.25))] }, PoseFrame::empty()];
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &frames).unwrap();
    assert_eq!(read_jsonl(buf.as_slice(), 2).unwrap(), frames);
    assert!(read_jsonl(buf.as_slice(), 1).is_err());
}

fn arb_person(x_lo: f32, x_hi: f32) -> impl Strategy<Value = Person> {
    prop::collection::vec((x_lo..x_hi, 2.0f32..30.0, 0.0f32..=1.0), NUM_KEYPOINTS).prop_map(move |kps| {
        let keypoints: Vec<Keypoint> = kps.into_iter().map(|(x, y, c)| Keypoint { x, y, confidence: c }).collect();
        Person { bbox: [x_lo, 2.0, x_hi, 30.0], keypoints }
    })
}

fn arb_spec() -> impl Strategy<Value = RenderSpec> {
    (any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>(), 1u32..4).prop_map(|(black, dot, coarse, ratio, px)| {
        RenderSpec {
            background: if black { Background::Black } else { Background::RgbFrame },
            marker: if dot { Marker::Dot } else { Marker::Bar },
            palette: if coarse { PaletteKind::Coarse6 } else { PaletteKind::Fine13 },
            ratio_aware: ratio,
            fixed_thickness_px: px,
            ..Default::default()
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn disjoint_people_render_independently_of_order(
        left in arb_person(3.0, 12.0),
        right in arb_person(44.0, 56.0),
        spec in arb_spec(),
    ) {
        let frame = Tensor::from_fn([32, 64, 3], |i| (i % 11) as f32 / 11.0);
        let render = |persons: Vec<Person>| {
            render_pose_frame(Some(&frame), (32, 64), &PoseFrame { persons }, &spec, &mut RenderStats::default()).unwrap()
        };
        prop_assert_eq!(render(vec![left.clone(), right.clone()]), render(vec![right, left]));
    }

    #[test]
    fn untouched_pixels_keep_background_and_values_stay_in_range(
        person in arb_person(4.0, 28.0),
        spec in arb_spec(),
    ) {
        let frame = Tensor::from_fn([32, 32, 3], |i| ((i * 37) % 101) as f32 / 100.0);
        let poses = PoseFrame { persons: vec![person] };
        let out = render_pose_frame(Some(&frame), (32, 32), &poses, &spec, &mut RenderStats::default()).unwrap();
        // Drawing on black marks exactly the limb pixels for this spec.
        let black = RenderSpec { background: Background::Black, ..spec };
        let mask = render_pose_frame(None, (32, 32), &poses, &black, &mut RenderStats::default()).unwrap();
        let lit = lit_pixels(&mask);
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        for (i, (o, f)) in out.data().chunks(3).zip(frame.data().chunks(3)).enumerate() {
            if !lit[i] {
                let expected = if spec.background == Background::Black { &[0.0f32; 3][..] } else { f };
                prop_assert_eq!(o, expected);
            }
        }
    }
}
