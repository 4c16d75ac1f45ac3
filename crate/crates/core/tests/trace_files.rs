//! Files as an external extractor writes them: hand-built bytes rather than
//! this crate's own writers.

use std::io::Cursor;

use tokenbound::assembly::TraceSource;
use tokenbound::io::{
    load_matrix, load_trace, read_checkpoint_curves, read_online_curve, read_trace, save_trace, TraceFormat,
    TraceReader, MATRIX_MAGIC, RECORD_STRIDE, TRACE_MAGIC,
};
use tokenbound::prequential::prequential_kh;
use tokenbound::Error;

const HEADER: &str = r#"{"schema_version":1,"vocab":50257,"alpha_used":0.001,"num_records":3,"source":"extracted","parent_size":9000000000,"notes":{"model":"m-124"}}"#;

fn binary_trace(header: &str, records: &[(u64, f64, f64, f64)]) -> Vec<u8> {
    let mut bytes = TRACE_MAGIC.to_vec();
    bytes.extend((header.len() as u32).to_le_bytes());
    bytes.extend(header.as_bytes());
    for &(i, a, b, c) in records {
        bytes.extend(i.to_le_bytes());
        for v in [a, b, c] {
            bytes.extend(v.to_le_bytes());
        }
    }
    bytes
}

#[test]
fn text_trace_from_extractor() {
    let text = format!("{HEADER}\n0\t2.5\t2.75\t2.7\n7\t0.125\t1e-3\t0.5\n19\t10\t10.5\t9.0\n");
    let trace = read_trace(Cursor::new(text)).unwrap();
    assert_eq!(trace.len(), 3);
    assert_eq!(trace.vocab(), 50257);
    assert_eq!(trace.source(), TraceSource::Extracted);
    assert_eq!(trace.parent_size(), Some(9_000_000_000));
    assert_eq!(trace.records()[1].index, 7);
    assert_eq!(trace.records()[1].nll_quant, 1e-3);
}

#[test]
fn binary_trace_from_extractor() {
    let recs = [(0, 2.5, 2.75, 2.7), (7, 0.125, 0.001, 0.5), (19, 10.0, 10.5, 9.0)];
    let bytes = binary_trace(HEADER, &recs);
    assert_eq!(bytes.len(), 8 + 4 + HEADER.len() + 3 * RECORD_STRIDE);
    let reader = TraceReader::new(Cursor::new(bytes.clone())).unwrap();
    assert_eq!(reader.format(), TraceFormat::Binary);
    assert_eq!(reader.header().notes["model"], "m-124");
    let trace = read_trace(Cursor::new(bytes)).unwrap();
    let got: Vec<_> = trace.records().iter().map(|r| (r.index, r.nll_full, r.nll_quant, r.proxy_mean_quant)).collect();
    assert_eq!(got, recs);
}

#[test]
fn text_and_binary_agree_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{HEADER}\n0\t2.5\t2.75\t2.7\n7\t0.125\t1e-3\t0.5\n19\t10\t10.5\t9.0\n");
    let src = dir.path().join("in.txt");
    std::fs::write(&src, text).unwrap();
    let trace = load_trace(&src).unwrap();
    let bin = dir.path().join("out.bin");
    save_trace(&trace, &bin, TraceFormat::Binary).unwrap();
    assert_eq!(load_trace(&bin).unwrap(), trace);
}

#[test]
fn truncated_binary_trace() {
    let bytes = binary_trace(HEADER, &[(0, 1.0, 1.0, 1.0), (1, 1.0, 1.0, 1.0)]);
    match read_trace(Cursor::new(bytes)) {
        Err(Error::Truncated { expected: 3, found: 2 }) => {}
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn malformed_inputs_are_rejected() {
    let unknown = HEADER.replace(r#""notes""#, r#""extra":1,"notes""#);
    assert!(read_trace(Cursor::new(format!("{unknown}\n0\t1\t1\t1\n"))).is_err());
    let version = HEADER.replace(r#""schema_version":1"#, r#""schema_version":2"#);
    assert!(read_trace(Cursor::new(format!("{version}\n0\t1\t1\t1\n"))).is_err());
    let short_row = format!("{HEADER}\n0\t1\t1\n");
    assert!(read_trace(Cursor::new(short_row)).is_err());
    let nan = format!("{HEADER}\n0\t1\tNaN\t1\n1\t1\t1\t1\n2\t1\t1\t1\n");
    assert!(read_trace(Cursor::new(nan)).is_err());
    assert!(read_trace(Cursor::new(b"TBTRACE1\xff\xff".to_vec())).is_err());
}

#[test]
fn checkpoint_curves_csv() {
    let csv = "model_size,tokens_seen,loss,eval_loss\n2000,100,3.1,\n1000,200,2.9,3.0\n1000,100,3.2,3.3\n";
    let curves = read_checkpoint_curves(csv.as_bytes()).unwrap();
    assert_eq!(curves.len(), 2);
    assert_eq!(curves[0].model_size(), 1000);
    assert_eq!(curves[0].points()[0].tokens_seen, 100);
    assert_eq!(curves[0].points()[0].metrics["eval_loss"], 3.3);
    assert!(curves[1].points()[0].metrics.is_empty());
    assert!(read_checkpoint_curves("model_size,loss\n1,2\n".as_bytes()).is_err());
}

#[test]
fn online_curve_csv() {
    let csv = "step,online_loss,final_loss\n1,4.0,2.0\n2,3.0,2.0\n3,2.5,2.0\n";
    let curve = read_online_curve(csv.as_bytes()).unwrap();
    let kh = prequential_kh(&curve);
    assert!((kh.kh_nats - 3.5).abs() < 1e-12);
    assert!(read_online_curve("step,online_loss,final_loss\n2,1,1\n2,1,1\n".as_bytes()).is_err());
}

#[test]
fn binary_matrix_from_extractor() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = MATRIX_MAGIC.to_vec();
    bytes.extend(2u64.to_le_bytes());
    bytes.extend(2u64.to_le_bytes());
    for v in [4.0f64, 1.0, 1.0, 9.0] {
        bytes.extend(v.to_le_bytes());
    }
    let path = dir.path().join("h.bin");
    std::fs::write(&path, bytes).unwrap();
    let m = load_matrix(&path).unwrap();
    assert_eq!((m.nrows(), m.ncols()), (2, 2));
    assert_eq!(m[(0, 1)], 1.0);
    assert_eq!(m[(1, 1)], 9.0);
    let csv = dir.path().join("h.csv");
    std::fs::write(&csv, "# hessian\n4,1\n1,9\n").unwrap();
    assert_eq!(load_matrix(&csv).unwrap(), m);
}
