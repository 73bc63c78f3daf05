use std::io::Cursor;

use delelstm::io::{read_csv, write_table, load_csv, CsvSchema};
use delelstm::Error;
use delelstm_core::data::make_windows;

fn read(text: &str, schema: &CsvSchema) -> Result<delelstm_core::data::RawTable, Error> {
    read_csv(Cursor::new(text.as_bytes().to_vec()), schema)
}

#[test]
fn three_numeric_columns() {
    let t = read("a,b,y\n1,2,3\n4,5,6\n", &CsvSchema::new("y")).unwrap();
    assert_eq!(t.column_names, vec!["a", "b", "y"]);
    assert_eq!(t.rows, vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
    assert_eq!(t.target, 2);
    assert_eq!(t.dropped_rows, 0);
}

#[test]
fn nan_row_is_dropped_and_counted() {
    let t = read("a,y\n1,2\nNaN,3\n4,5\n", &CsvSchema::new("y")).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.dropped_rows, 1);
    let t = read("a,y\n1,\nx,3\n4,5\n", &CsvSchema::new("y")).unwrap();
    assert_eq!((t.rows.len(), t.dropped_rows), (1, 2));
}

#[test]
fn missing_target_is_reported() {
    let err = read("a,b\n1,2\n", &CsvSchema::new("y")).unwrap_err();
    assert!(matches!(err, Error::Core(delelstm_core::Error::MissingTarget(ref n)) if n == "y"), "{err:?}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn ragged_row_reports_its_line() {
    let err = read("a,y\n1,2\n3,4,5\n", &CsvSchema::new("y")).unwrap_err();
    match err {
        Error::Parse { line, .. } => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn pm25_layout_gives_eight_variables() {
    let mut text = String::from("No,year,month,day,hour,pm2.5,DEWP,TEMP,PRES,cbwd,Iws,Is,Ir\n");
    let dirs = ["NW", "cv", "SE", "NE"];
    for r in 0..60 {
        let pm = if r == 7 { "NA".to_owned() } else { (50 + r).to_string() };
        text.push_str(&format!(
            "{},2010,1,{},{},{pm},{},{},{},{},{},0,0\n",
            r + 1,
            r / 24 + 1,
            r % 24,
            -20 + (r % 7) as i64,
            -5.0 + r as f64 * 0.1,
            1020 + r % 3,
            dirs[r % 4],
            1.79 * r as f64
        ));
    }
    let schema = CsvSchema {
        target: "pm2.5".into(),
        timestamp: None,
        drop_cols: ["No", "year", "month", "day", "hour"].map(String::from).to_vec(),
        categorical: vec!["cbwd".into()],
    };
    let t = read(&text, &schema).unwrap();
    assert_eq!(t.column_names, ["pm2.5", "DEWP", "TEMP", "PRES", "cbwd", "Iws", "Is", "Ir"]);
    assert_eq!(t.dropped_rows, 1);
    // Wind direction codes follow first appearance.
    assert_eq!(&t.rows[..4].iter().map(|r| r[4]).collect::<Vec<_>>(), &[0.0, 1.0, 2.0, 3.0]);
    let ds = make_windows(&t, 24, 24).unwrap();
    assert_eq!(ds.variables(), 8);
}

#[test]
fn missing_declared_column() {
    let schema = CsvSchema {
        categorical: vec!["wind".into()],
        ..CsvSchema::new("y")
    };
    assert!(matches!(read("a,y\n1,2\n", &schema), Err(Error::MissingColumn(ref c)) if c == "wind"));
}

#[test]
fn write_then_load_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let names = vec!["x0".to_owned(), "y".to_owned()];
    let rows = vec![vec![0.1, -2.5e-9], vec![1.0 / 3.0, 7.0]];
    write_table(&path, &names, &rows).unwrap();
    let t = load_csv(&path, &CsvSchema::new("y")).unwrap();
    assert_eq!(t.rows, rows);
}

#[test]
fn unreadable_file_is_a_data_error() {
    let err = load_csv(std::path::Path::new("/nonexistent/data.csv"), &CsvSchema::new("y")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
