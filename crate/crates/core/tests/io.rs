use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;
use riskmin::harness::{
    decode_tensor, encode_tensor, parse_idx, parse_records, read_tensors, write_tensors, ExperimentConfig,
    ExperimentRecord, SCHEMA_VERSION,
};
use riskmin::numerics::Tensor;

/// Byte-at-a-time IDX reader written without slicing helpers.
fn slow_idx(bytes: &[u8]) -> (Vec<usize>, Vec<f64>) {
    let mut pos = 0;
    let mut next_u32 = || {
        let mut v = 0u32;
        for _ in 0..4 {
            v = (v << 8) | u32::from(bytes[pos]);
            pos += 1;
        }
        v
    };
    let magic = next_u32();
    let rank = (magic & 0xff) as usize;
    let images = magic == 0x803;
    let dims: Vec<usize> = (0..rank).map(|_| next_u32() as usize).collect();
    let count: usize = dims.iter().product();
    let start = 4 + 4 * rank;
    let data = (0..count)
        .map(|i| {
            let b = f64::from(bytes[start + i]);
            if images {
                b / 255.0
            } else {
                b
            }
        })
        .collect();
    (dims, data)
}

fn idx_file(images: bool, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let magic: u32 = if images { 0x803 } else { 0x801 };
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}

fn tensor_strategy() -> impl Strategy<Value = Tensor> {
    prop::collection::vec(1usize..5, 0..4).prop_flat_map(|shape| {
        let n = shape.iter().product::<usize>();
        prop::collection::vec(any::<f64>(), n).prop_map(move |data| Tensor::new(shape.clone(), data).unwrap())
    })
}

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

fn base_config() -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tweedie.toml");
    ExperimentConfig::load(&path).unwrap()
}

proptest! {
    #[test]
    fn idx_matches_slow_reader(n in 1u32..6, r in 1u32..5, c in 1u32..5, seed in any::<u64>(), trailing in 0usize..3) {
        let count = (n * r * c) as usize;
        let payload: Vec<u8> = (0..count + trailing).map(|i| (seed.wrapping_mul(i as u64 + 1) >> 13) as u8).collect();
        let bytes = idx_file(true, &[n, r, c], &payload);
        let t = parse_idx(&bytes, Path::new("p")).unwrap();
        let (dims, data) = slow_idx(&bytes);
        prop_assert_eq!(t.shape(), &dims[..]);
        prop_assert_eq!(t.data(), &data[..]);

        let labels = idx_file(false, &[n], &payload[..n as usize]);
        let t = parse_idx(&labels, Path::new("l")).unwrap();
        let (dims, data) = slow_idx(&labels);
        prop_assert_eq!(t.shape(), &dims[..]);
        prop_assert_eq!(t.data(), &data[..]);
    }

    #[test]
    fn idx_truncation_is_an_error(n in 1u32..6, cut in 1usize..10) {
        let bytes = idx_file(true, &[n, 2, 2], &vec![7; (n * 4) as usize]);
        let cut = cut.min(bytes.len());
        prop_assert!(parse_idx(&bytes[..bytes.len() - cut], Path::new("p")).is_err());
    }

    #[test]
    fn tensor_encoding_round_trips(ts in prop::collection::vec(tensor_strategy(), 1..4)) {
        let mut buf = Vec::new();
        for t in &ts {
            encode_tensor(t, &mut buf).unwrap();
        }
        let mut pos = 0;
        for t in &ts {
            let (back, used) = decode_tensor(&buf[pos..]).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            prop_assert_eq!(bits(&back), bits(t));
            pos += used;
        }
        prop_assert_eq!(pos, buf.len());
    }

    #[test]
    fn record_round_trips_bitwise(values in prop::collection::vec(any::<f64>(), 0..20), seed in any::<u64>()) {
        let mut config = base_config();
        config.seed = seed;
        let metrics: BTreeMap<String, f64> = values.iter().enumerate().map(|(i, v)| (format!("m{i:02}"), *v)).collect();
        let rec = ExperimentRecord {
            schema_version: SCHEMA_VERSION,
            config_hash: config.content_hash(),
            config,
            started_ms: 1,
            finished_ms: 2,
            metrics,
            artifacts: vec!["a.csv".into()],
        };
        let back = parse_records(&format!("{}\n", rec.to_line())).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert!(back[0].metric_diff(&rec.metrics).is_empty());
        prop_assert_eq!(&back[0].config, &rec.config);
        prop_assert_eq!(&back[0].config_hash, &rec.config_hash);
    }
}

#[test]
fn tensor_file_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.rmt");
    let ts = vec![
        Tensor::scalar(f64::NAN),
        Tensor::from_rows(&[vec![1.0, -0.0], vec![f64::INFINITY, 1e-310]]).unwrap(),
    ];
    write_tensors(&path, &ts).unwrap();
    let back = read_tensors(&path).unwrap();
    assert_eq!(back.len(), 2);
    for (a, b) in back.iter().zip(&ts) {
        assert_eq!(a.shape(), b.shape());
        assert_eq!(bits(a), bits(b));
    }
}
