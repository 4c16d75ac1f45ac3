use std::io::Cursor;

use proptest::prelude::*;
use tokenbound::assembly::{TokenRecord, TokenTrace, TraceSource};
use tokenbound::io::{read_trace, to_canonical_json, write_trace, Table, TraceFormat};

/// Quantized losses and proxies are drawn as fractions of `ln(V/α)`.
fn records(range: f64) -> impl Strategy<Value = Vec<TokenRecord>> {
    prop::collection::vec((0.0f64..60.0, 0.0f64..=1.0, 1e-6f64..=1.0, 1u64..5), 1..80).prop_map(move |rows| {
        let mut index = 0;
        rows.into_iter()
            .map(|(a, b, c, step)| {
                index += step;
                TokenRecord { index, nll_full: a, nll_quant: b * range, proxy_mean_quant: c * range }
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn traces_survive_both_formats(
        (alpha, vocab, recs) in (1e-9f64..0.5, 2u64..200_000)
            .prop_flat_map(|(a, v)| (Just(a), Just(v), records((v as f64 / a).ln())))
    ) {
        let parent = recs.last().unwrap().index + 1;
        let trace = TokenTrace::new(alpha, vocab, recs, TraceSource::Extracted, Some(parent)).unwrap();
        for format in [TraceFormat::Text, TraceFormat::Binary] {
            let mut bytes = Vec::new();
            write_trace(&trace, &mut bytes, format).unwrap();
            let back = read_trace(Cursor::new(bytes.clone())).unwrap();
            prop_assert_eq!(&back, &trace);
            let mut again = Vec::new();
            write_trace(&back, &mut again, format).unwrap();
            prop_assert_eq!(again, bytes);
        }
    }

    #[test]
    fn canonical_json_is_a_fixed_point(xs in prop::collection::vec(-1e12f64..1e12, 0..20)) {
        let once = to_canonical_json(&xs).unwrap();
        let parsed: Vec<f64> = serde_json::from_str(&once).unwrap();
        prop_assert_eq!(to_canonical_json(&parsed).unwrap(), once);
    }

    #[test]
    fn tables_survive_csv(rows in prop::collection::vec((any::<i32>(), -1e6f64..1e6, "[a-z ,\"]{0,8}"), 0..10)) {
        let mut t = Table::new(["n", "x", "label"]);
        for (n, x, s) in rows {
            t.push_row(vec![tokenbound::io::Cell::Int(i64::from(n)), x.into(), s.into()]).unwrap();
        }
        let csv = t.to_csv().unwrap();
        prop_assert_eq!(Table::from_csv(csv.as_bytes()).unwrap().to_csv().unwrap(), csv);
    }
}
