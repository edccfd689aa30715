use std::io::Cursor;
use std::path::Path;

use evpipe::dataset::{generate_dataset, load_dataset, read_manifest, sequence_seeds, SequenceMeta};
use evpipe::events_io::{decode_binary, encode_binary, parse_event_text, read_events, write_event_text, write_event_text_file};
use evpipe::frames_io::{decode_tensor, encode_tensor, read_frame_dir, write_frame_dir};
use evpipe::weights_file::{decode_weights, encode_weights};
use evpipe::Error;
use evpipe_core::event::{Event, EventStream, Polarity, SensorGeometry};
use evpipe_core::frame::Frame;
use evpipe_core::nn::NetConfig;
use evpipe_core::nn::NetworkWeights;
use evpipe_core::simulator::SimConfig;
use evpipe_core::tensorizer::voxelize_events;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arb_stream() -> impl Strategy<Value = EventStream> {
    (1u32..50, 1u32..50).prop_flat_map(|(w, h)| {
        prop::collection::vec((0..w, 0..h, 0u64..5_000_000, any::<bool>()), 0..200).prop_map(move |raw| {
            let mut ev: Vec<Event> = raw
                .into_iter()
                .map(|(x, y, t, p)| Event::new(x as u16, y as u16, t, if p { Polarity::Positive } else { Polarity::Negative }))
                .collect();
            ev.sort_by_key(|e| e.t);
            EventStream::new(SensorGeometry::new(w, h).unwrap(), ev).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn binary_round_trip(s in arb_stream()) {
        let back = decode_binary(&encode_binary(&s), Path::new("mem")).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn text_round_trip(s in arb_stream()) {
        let mut buf = Vec::new();
        write_event_text(&mut buf, &s).unwrap();
        let back = parse_event_text(Cursor::new(buf), s.geometry()).unwrap();
        prop_assert_eq!(back, s);
    }
}

#[test]
fn text_errors_carry_line_numbers() {
    let g = SensorGeometry::new(10, 10).unwrap();
    let cases = [
        ("0.1 1 1 1\n0.2 12 1 0\n", 2),
        ("0.2 1 1 1\n\n0.1 1 1 0\n", 3),
        ("0.1 1 1 2\n", 1),
        ("0.1 1 1\n", 1),
    ];
    for (text, line) in cases {
        match parse_event_text(Cursor::new(text), g) {
            Err(Error::Line { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
    let s = parse_event_text(Cursor::new("0.000001 3 4 -1\n"), g).unwrap();
    assert_eq!(s.events()[0], Event::new(3, 4, 1, Polarity::Negative));
}

#[test]
fn corrupt_binary_is_rejected() {
    let g = SensorGeometry::new(4, 4).unwrap();
    let s = EventStream::new(g, vec![Event::new(1, 1, 5, Polarity::Positive), Event::new(2, 3, 9, Polarity::Negative)]).unwrap();
    let bytes = encode_binary(&s);
    assert!(decode_binary(&bytes[..bytes.len() - 1], Path::new("m")).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_binary(&bad, Path::new("m")).is_err());
    let mut oob = bytes.clone();
    let x_at = evpipe::events_io::HEADER_LEN + 8;
    oob[x_at] = 9;
    assert!(decode_binary(&oob, Path::new("m")).is_err());
}

#[test]
fn text_and_binary_files_agree() {
    let dir = tempfile::tempdir().unwrap();
    let g = SensorGeometry::new(8, 6).unwrap();
    let s = EventStream::new(
        g,
        (0..100).map(|i| Event::new(i % 8, i % 6, i as u64 * 37, if i % 3 == 0 { Polarity::Negative } else { Polarity::Positive })).collect(),
    )
    .unwrap();
    let txt = dir.path().join("ev.txt");
    write_event_text_file(&txt, &s).unwrap();
    let bin = dir.path().join("ev.bin");
    evpipe::events_io::write_event_binary(&bin, &s).unwrap();
    assert_eq!(read_events(&txt, Some(g)).unwrap(), s);
    assert_eq!(read_events(&bin, None).unwrap(), s);
}

#[test]
fn frame_dir_round_trip_is_quantized() {
    let dir = tempfile::tempdir().unwrap();
    let frames: Vec<Frame> = (0..3)
        .map(|k| Frame::new(5, 4, 1000 * k, (0..20).map(|i| ((i * 7 + k as usize) % 20) as f32 / 19.0).collect()).unwrap())
        .collect();
    write_frame_dir(dir.path(), &frames).unwrap();
    let back = read_frame_dir(dir.path()).unwrap();
    assert_eq!(back.len(), 3);
    for (a, b) in frames.iter().zip(&back) {
        assert_eq!(a.t, b.t);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() <= 0.5 / 255.0 + 1e-6);
            assert_eq!((y * 255.0).round() / 255.0, *y);
        }
    }
}

#[test]
fn tensor_dump_round_trip() {
    let g = SensorGeometry::new(6, 5).unwrap();
    let ev: Vec<Event> = (0..40).map(|i| Event::new(i % 6, i % 5, i as u64 * 11, Polarity::Positive)).collect();
    let t = voxelize_events(&ev, 4, g).unwrap();
    let (b, h, w, v) = decode_tensor(&encode_tensor(&t)).unwrap();
    assert_eq!((b, h, w), (4, 5, 6));
    for (a, b) in t.values().iter().zip(&v) {
        assert_eq!(*a as f32, *b);
    }
}

#[test]
fn weights_save_load_save_is_byte_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = NetworkWeights::<f32>::init(NetConfig::tiny(5, 2), &mut rng).unwrap();
    let bytes = encode_weights(&w);
    let back = decode_weights(&bytes, Path::new("mem")).unwrap();
    assert_eq!(encode_weights(&back), bytes);
}

#[test]
fn dataset_is_deterministic_and_thread_independent() {
    let mut cfg = SimConfig::new(SensorGeometry::new(32, 24).unwrap(), 0.3, 11);
    cfg.render_rate = 500.0;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let metas_a = generate_dataset(&cfg, 3, None, a.path()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let metas_b = pool.install(|| generate_dataset(&cfg, 3, None, b.path())).unwrap();
    assert_eq!(metas_a, metas_b);
    assert_eq!(read_manifest(a.path()).unwrap(), ["seq_00000", "seq_00001", "seq_00002"]);
    for m in &metas_a {
        let ea = std::fs::read(a.path().join(&m.name).join("events.bin")).unwrap();
        let eb = std::fs::read(b.path().join(&m.name).join("events.bin")).unwrap();
        assert_eq!(ea, eb);
    }
    let seeds = sequence_seeds(11, 3);
    assert_eq!(metas_a.iter().map(|m| m.seed).collect::<Vec<_>>(), seeds);

    let loaded = load_dataset(a.path()).unwrap();
    for (l, m) in loaded.iter().zip(&metas_a) {
        assert_eq!(&l.meta, m);
        assert_eq!(l.events.len(), m.events);
        assert_eq!(l.frames.len(), m.frames);
    }
}

#[test]
fn meta_text_round_trip() {
    let m = SequenceMeta {
        name: "seq_00004".into(),
        seed: u64::MAX,
        width: 64,
        height: 48,
        duration: 2.0,
        c_pos: 0.1734,
        c_neg: 0.2011,
        events: 12345,
        frames: 401,
    };
    assert_eq!(SequenceMeta::parse(&m.to_text(), Path::new("m")).unwrap(), m);
    assert!(SequenceMeta::parse("name=x\n", Path::new("m")).is_err());
}
