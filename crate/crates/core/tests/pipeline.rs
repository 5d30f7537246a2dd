mod common;

use std::collections::HashSet;

use pairaug::dataset::{BBox, CharSpan, GroundingSample, ImageBuffer, PhraseAnnotation, ViolationKind};
use pairaug::image_ops::hflip;
use pairaug::pipeline::{
    augment_sample, derive_seed, for_each_ordered, validate_consistency, AugEvent, AugPolicy, FlipMode,
    SkipReason,
};
use pairaug::text::{classify_flippability, contains_color_words, ColorLexicon, PositionalLexicon};
use pairaug::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn seed_golden_values() {
    assert_eq!(derive_seed(0, "a", 0), 3184313806896775298);
    assert_eq!(derive_seed(42, "img-7", 3), 3600633035035041091);
    assert_eq!(derive_seed(0, "a", 0), derive_seed(0, "a", 0));
    assert_ne!(derive_seed(0, "a", 0), derive_seed(0, "a", 1));
    assert_ne!(derive_seed(0, "a", 0), derive_seed(1, "a", 0));
}

#[test]
fn no_collisions_in_1e5_seeds() {
    let mut seen = HashSet::with_capacity(100_000);
    for i in 0..10_000 {
        let id = format!("img-{i}");
        for epoch in 0..10 {
            assert!(seen.insert(derive_seed(7, &id, epoch)), "{id} epoch {epoch}");
        }
    }
    assert_eq!(seen.len(), 100_000);
}

fn only_flip(mode: FlipMode) -> AugPolicy {
    let mut p = AugPolicy::disabled();
    p.flip.mode = mode;
    p.flip.prob = 1.0;
    p
}

fn sample(caption: &str, annotations: Vec<PhraseAnnotation>, w: u32, h: u32) -> GroundingSample {
    GroundingSample {
        image_id: "fixture".into(),
        file_name: "fixture.png".into(),
        width: w,
        height: h,
        caption: caption.into(),
        annotations,
    }
}

fn ann(span: (usize, usize), b: [f64; 4]) -> PhraseAnnotation {
    PhraseAnnotation {
        spans: vec![CharSpan::new(span.0, span.1)],
        boxes: vec![BBox::from(b)],
    }
}

#[test]
fn girl_to_the_left_of_the_boy() {
    let caption = "girl to the left of the boy";
    let s = sample(
        caption,
        vec![
            ann((0, 4), [10.0, 5.0, 30.0, 45.0]),
            ann((12, 16), [0.0, 0.0, 50.0, 50.0]),
            ann((20, 27), [60.0, 10.0, 90.0, 45.0]),
        ],
        100,
        50,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = common::random_image(&mut rng, 100, 50);

    let (out, out_img, report) = augment_sample(&s, &img, &only_flip(FlipMode::ThflipPlus), 0).unwrap();
    assert_eq!(out.caption, "girl to the right of the boy");
    let expected = vec![
        ann((0, 4), [70.0, 5.0, 90.0, 45.0]),
        ann((12, 17), [50.0, 0.0, 100.0, 50.0]),
        ann((21, 28), [10.0, 10.0, 40.0, 45.0]),
    ];
    assert_eq!(out.annotations, expected);
    let texts: Vec<_> = out
        .annotations
        .iter()
        .map(|a| a.spans[0].slice(&out.caption).unwrap())
        .collect();
    assert_eq!(texts, ["girl", "right", "the boy"]);
    assert_eq!(out_img, hflip(&img, &[]).0);
    assert!(report.flipped());
    assert_eq!(report.rewrite().unwrap().new_caption, out.caption);

    // Plain THflip refuses to touch the caption, so it skips the flip.
    let (out, out_img, report) = augment_sample(&s, &img, &only_flip(FlipMode::Thflip), 0).unwrap();
    assert_eq!(out, s);
    assert_eq!(out_img, img);
    assert!(matches!(
        report.events[..],
        [AugEvent::FlipSkipped { reason: SkipReason::PositionalWords, .. }]
    ));
}

#[test]
fn unknown_positional_form_never_flips() {
    let s = sample("the leftover slice", vec![ann((4, 12), [1.0, 1.0, 5.0, 5.0])], 10, 10);
    let img = ImageBuffer::filled(10, 10, [3, 3, 3]);
    for mode in [FlipMode::Thflip, FlipMode::ThflipPlus] {
        let (out, _, report) = augment_sample(&s, &img, &only_flip(mode), 0).unwrap();
        assert_eq!(out, s);
        assert!(matches!(
            report.events[..],
            [AugEvent::FlipSkipped { reason: SkipReason::UnknownPositionalForm, .. }]
        ));
    }
}

#[test]
fn color_words_block_jitter() {
    let s = sample("a man in a red shirt", vec![ann((11, 14), [1.0, 1.0, 5.0, 5.0])], 10, 10);
    let img = ImageBuffer::filled(10, 10, [30, 60, 90]);
    let mut p = AugPolicy::disabled();
    p.color.prob = 1.0;
    let (out, out_img, report) = augment_sample(&s, &img, &p, 0).unwrap();
    assert_eq!((out, out_img), (s.clone(), img.clone()));
    assert_eq!(
        report.events,
        vec![AugEvent::ColorJitterSkipped { reason: SkipReason::ColorWords }]
    );
    let json = serde_json::to_value(&report.events[0]).unwrap();
    assert_eq!(json["reason"], "color_words");

    let s2 = sample("a man in a shirt", vec![], 10, 10);
    let (_, _, report) = augment_sample(&s2, &img, &p, 0).unwrap();
    assert!(report.color_jitter_fired());
}

#[test]
fn zero_policy_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..50 {
        let s = common::random_sample(&mut rng, i);
        let img = common::random_image(&mut rng, s.width, s.height);
        let (out, out_img, report) = augment_sample(&s, &img, &AugPolicy::disabled(), 3).unwrap();
        assert_eq!(out, s);
        assert_eq!(out_img, img);
        assert!(report.events.is_empty());
    }
}

#[test]
fn dimension_mismatch_is_a_contract_error() {
    let s = sample("a dog", vec![], 10, 10);
    let img = ImageBuffer::filled(11, 10, [0, 0, 0]);
    assert!(matches!(
        augment_sample(&s, &img, &AugPolicy::default(), 0),
        Err(Error::Contract(_))
    ));
}

#[test]
fn injected_violations_are_named() {
    let img = ImageBuffer::filled(10, 10, [0, 0, 0]);
    let good = sample("a red hat", vec![ann((2, 5), [1.0, 1.0, 5.0, 5.0])], 10, 10);
    assert!(validate_consistency(&good, &img).is_empty());

    let mut bad = good.clone();
    bad.annotations[0].boxes[0].x_max = bad.annotations[0].boxes[0].x_min;
    let v = validate_consistency(&bad, &img);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].kind, ViolationKind::DegenerateBox);
    assert_eq!(v[0].kind.describe(), "degenerate box");

    let mut bad = good.clone();
    bad.annotations[0].spans[0] = CharSpan::new(2, 40);
    let v = validate_consistency(&bad, &img);
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].kind.describe(), "span out of range");

    let v = validate_consistency(&good, &ImageBuffer::filled(9, 10, [0, 0, 0]));
    assert_eq!(v.len(), 1);
    assert_eq!(v[0].kind.describe(), "dimension mismatch");
}

#[test]
fn policy_toml_round_trips_and_rejects_junk() {
    let text = r#"
        [flip]
        mode = "thflip"
        prob = 0.25
        [color]
        prob = 0.1
        hue = [-0.1, 0.1]
        [pixel_mask]
        p = 0.5
        [block_mask]
        fill = "mean"
        [seed]
        global = 42
    "#;
    let p = AugPolicy::from_toml_str(text).unwrap();
    assert_eq!(p.flip.mode, FlipMode::Thflip);
    assert_eq!(p.seed.global, 42);
    assert_eq!(p.blur.sigma, [0.1, 2.0]);
    assert_eq!(AugPolicy::from_toml_str(&p.to_toml_string()).unwrap(), p);

    assert!(AugPolicy::from_toml_str("[flip]\nprobability = 0.5").is_err());
    assert!(matches!(
        AugPolicy::from_toml_str("[blur]\nprob = 1.5"),
        Err(Error::Parameter(_))
    ));
    assert!(AugPolicy::from_toml_str("[color]\nhue = [0.2, 0.1]").is_err());
}

#[test]
fn ordered_sink_preserves_input_order() {
    let inputs: Vec<u64> = (0..200).collect();
    let mut seen = Vec::new();
    for_each_ordered(
        inputs,
        4,
        |i, x| {
            // Uneven work so completion order differs from input order.
            std::thread::sleep(std::time::Duration::from_micros((x * 37 % 11) * 50));
            (i, x * 2)
        },
        |i, out| seen.push((i, out)),
    );
    let expected: Vec<_> = (0..200).map(|i| (i as usize, (i as usize, i * 2))).collect();
    assert_eq!(seen, expected);
}

fn random_policy<R: Rng>(rng: &mut R) -> AugPolicy {
    let mut p = AugPolicy::default();
    p.flip.mode = [FlipMode::Off, FlipMode::Thflip, FlipMode::ThflipPlus][rng.gen_range(0..3)];
    let mut prob = || if rng.gen_bool(0.3) { 1.0 } else { rng.gen_range(0.0..=1.0) };
    p.flip.prob = prob();
    p.color.prob = prob();
    p.blur.prob = prob();
    p.pixel_mask.prob = prob();
    p.block_mask.prob = prob();
    p.seed.global = rng.gen();
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn augmentation_is_safe_gated_and_replayable(seed in any::<u64>(), epoch in 0u64..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = common::random_sample(&mut rng, 0);
        let img = common::random_image(&mut rng, s.width, s.height);
        let policy = random_policy(&mut rng);

        let (out, out_img, report) = augment_sample(&s, &img, &policy, epoch).unwrap();
        prop_assert!(validate_consistency(&out, &out_img).is_empty());
        prop_assert_eq!((out_img.width(), out_img.height()), (s.width, s.height));

        let again = augment_sample(&s, &img, &policy, epoch).unwrap();
        prop_assert_eq!(&again.0, &out);
        prop_assert_eq!(&again.1, &out_img);
        prop_assert_eq!(&again.2, &report);

        if report.color_jitter_fired() {
            prop_assert!(!contains_color_words(&s.caption, &ColorLexicon::default()));
        }
        let class = classify_flippability(&s.caption, &PositionalLexicon::default());
        if report.rewrite().is_some() {
            prop_assert_eq!(class.label(), "rewritable_flip");
            prop_assert_eq!(policy.flip.mode, FlipMode::ThflipPlus);
        }
        if report.flipped() {
            prop_assert_ne!(class.label(), "not_flippable");
        } else {
            // Nothing but a flip moves boxes or edits the caption.
            prop_assert_eq!(&out.caption, &s.caption);
            prop_assert_eq!(&out.annotations, &s.annotations);
        }
        if policy.flip.mode != FlipMode::ThflipPlus {
            prop_assert_eq!(&out.caption, &s.caption);
        }

        let (rs, ri) = report.replay(&s, &img).unwrap();
        prop_assert_eq!(rs, out);
        prop_assert_eq!(ri, out_img);
    }
}
