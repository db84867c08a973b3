use proptest::prelude::*;
use spc_rdh::rdh::embed_values;
use spc_rdh::{build_operator, embed_stream, extract_stream, EmbedParams, KeySpec, MatrixKind, SceneImage};

fn check(values: &[i16], params: &EmbedParams, key: &KeySpec) -> Result<(), TestCaseError> {
    let marked = embed_values(values.iter().copied(), params, key.stream()).unwrap();
    let ex = extract_stream(&marked, params, key.stream()).unwrap();
    if marked.tail_bits == 0 {
        prop_assert_eq!(&ex.values[..], values);
    } else {
        let last = *marked.location_map.last().unwrap();
        prop_assert_eq!(ex.truncated, Some(last));
        for (i, (a, b)) in values.iter().zip(&ex.values).enumerate() {
            if i != last {
                prop_assert_eq!(a, b);
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn embed_then_extract(
        values in prop::collection::vec(-2048i16..=2048, 1..300),
        levels in 1u32..=16,
        threshold in 0u32..=2048,
        offset in -64i32..=64,
        key in prop::collection::vec(any::<u8>(), 16..40),
    ) {
        let key = KeySpec::new(&key).unwrap();
        let params = EmbedParams::new(levels, threshold).unwrap().with_predictor_offset(offset);
        check(&values, &params, &key)?;
    }

    #[test]
    fn extreme_values_with_safe_threshold(
        values in prop::collection::vec(any::<i16>(), 1..200),
        levels in 1u32..=16,
    ) {
        let key = KeySpec::new(b"extreme-values-key").unwrap();
        let params = EmbedParams::new(levels, spc_rdh::capacity::t_max(levels)).unwrap();
        check(&values, &params, &key)?;
    }
}

#[test]
fn smatrix_stream_with_predictor_offset() {
    // S-matrix measurements sit around a positive mean, so a predictor helps
    let px: Vec<f64> = (0..1024).map(|i| ((i * 37) % 101) as f64 / 100.0).collect();
    let img = SceneImage::new(32, 32, px).unwrap();
    let op = build_operator(MatrixKind::ScrambledSMatrix, 1024, 400, 8).unwrap();
    let stream = op.project(&img).unwrap();
    let mean = stream.values.iter().map(|&v| i64::from(v)).sum::<i64>() / stream.len() as i64;
    let key = KeySpec::new(b"smatrix-offset-key").unwrap();
    for levels in [7, 10, 14] {
        let t = spc_rdh::capacity::t_max(levels);
        let params = EmbedParams::new(levels, t).unwrap().with_predictor_offset(mean as i32);
        let marked = embed_stream(&stream, &params, key.stream()).unwrap();
        let ex = extract_stream(&marked, &params, key.stream()).unwrap();
        let last = marked.truncated_position();
        for (i, (a, b)) in stream.values.iter().zip(&ex.values).enumerate() {
            if Some(i) != last {
                assert_eq!(a, b, "n={levels} i={i}");
            }
        }
        assert_eq!(ex.truncated, last);
    }
}
