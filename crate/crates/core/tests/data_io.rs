use std::path::PathBuf;

use bayesmi::data::conllu::to_conllu;
use bayesmi::data::embeddings::{parse_sidecar, EmbeddingStore, HEADER_LEN};
use bayesmi::data::{
    align, random_type_embeddings, read_conllu, read_embeddings, read_sidecar, write_embeddings, write_sidecar,
    AlignmentRow, Task, TokenDataset,
};
use bayesmi::Error;

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mini.conllu")
}

#[test]
fn fixture_treebank_has_nine_words() {
    let records = read_conllu(fixture()).unwrap();
    assert_eq!(records.len(), 9);
    assert!(records.iter().all(|r| r.form != "al" && r.form != "gone"));
    let text = to_conllu(&records);
    assert_eq!(bayesmi::data::conllu::parse_conllu_str(&text).unwrap(), records);
}

#[test]
fn missing_file_names_the_path() {
    let err = read_conllu("/nonexistent/treebank.conllu").unwrap_err();
    assert!(matches!(&err, Error::Io { path, .. } if path.contains("treebank.conllu")));
}

#[test]
fn store_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<f32> = (0..1000 * 64).map(|i| ((i as f32) * 0.37).sin() * 1e3).collect();
    let store = EmbeddingStore::new(64, data).unwrap();
    let path = dir.path().join("vectors.bmie");
    write_embeddings(&store, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes.len() as u64, HEADER_LEN + 4 * 64 * 1000);
    let back = read_embeddings(&path).unwrap();
    assert_eq!(back.to_bytes().unwrap(), bytes);
    assert_eq!(back, store);
}

#[test]
fn random_embeddings_cover_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let records = read_conllu(fixture()).unwrap();
    let emb = random_type_embeddings(records.iter().map(|r| r.form.as_str()), 16, 5).unwrap();
    // "." occurs twice
    assert_eq!(emb.store.count(), 8);
    let rows: Vec<AlignmentRow> = records.iter().map(|r| AlignmentRow::from_record(r, emb.index[&r.form])).collect();
    let (bin, side) = (dir.path().join("r.bmie"), dir.path().join("r.jsonl"));
    write_embeddings(&emb.store, &bin).unwrap();
    write_sidecar(&rows, &side).unwrap();

    let store = read_embeddings(&bin).unwrap();
    let rows = read_sidecar(&side).unwrap();
    let alignment = align(&records, &rows, &store).unwrap();
    assert_eq!(alignment.len(), records.len());
    assert_eq!(alignment[4], alignment[8]);
    assert_eq!(store.vector(alignment[4]).unwrap(), store.vector(alignment[8]).unwrap());

    let first_line = std::fs::read_to_string(&side).unwrap().lines().next().unwrap().to_string();
    let value: serde_json::Value = serde_json::from_str(&first_line).unwrap();
    for key in ["sent", "tok", "form", "upos", "deprel", "head", "vec"] {
        assert!(value.get(key).is_some(), "missing {key}");
    }

    let ds = TokenDataset::from_treebank("random", Task::Deprel, &records, &store, &alignment, 0.5).unwrap();
    assert_eq!(ds.dim(), 32);
    assert_eq!(ds.train().len() + ds.test().len() + ds.dropped_test_tokens(), 9);
}

#[test]
fn alignment_failures_are_reported() {
    let records = read_conllu(fixture()).unwrap();
    let store = EmbeddingStore::new(2, vec![0.0; 18]).unwrap();
    let rows: Vec<AlignmentRow> = records.iter().enumerate().map(|(i, r)| AlignmentRow::from_record(r, i)).collect();
    assert!(align(&records, &rows, &store).is_ok());

    let mut out_of_range = rows.clone();
    out_of_range[3].vec = 9;
    assert!(matches!(align(&records, &out_of_range, &store), Err(Error::DomainMismatch(_))));

    let mut renamed = rows.clone();
    renamed[0].form = "Vamos".into();
    assert!(align(&records, &renamed, &store).is_err());

    assert!(align(&records, &rows[1..], &store).is_err());

    let mut duplicated = rows.clone();
    duplicated[1] = duplicated[0].clone();
    assert!(align(&records, &duplicated, &store).is_err());
}

#[test]
fn sidecar_nulls_and_parse_errors() {
    let text = "{\"sent\":0,\"tok\":1,\"form\":\"x\",\"upos\":null,\"deprel\":null,\"head\":null,\"vec\":0}\n\nnot json\n";
    match parse_sidecar(text.as_bytes()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let rows = parse_sidecar(&text.as_bytes()[..text.find("\n\n").unwrap() + 1]).unwrap();
    assert_eq!(rows[0].upos, None);
}
