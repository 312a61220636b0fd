use std::fs;
use std::path::{Path, PathBuf};

use mdpcat_dsl::{parse_workspace, serialize_workspace, ParseError};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn mdp_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "mdp"))
        .collect();
    files.sort();
    files
}

#[test]
fn fixtures_parse_cleanly_and_round_trip() {
    let files = mdp_files(&fixtures());
    assert!(files.len() >= 3);
    for path in files {
        let text = fs::read_to_string(&path).unwrap();
        let w = parse_workspace(&path.display().to_string(), &text)
            .unwrap_or_else(|e| panic!("{}: {e:#?}", path.display()));
        for name in w.zigzags.keys() {
            w.zigzag(name).unwrap();
        }
        for name in w.morphisms.keys() {
            w.morphism(name).unwrap();
        }
        let canon = serialize_workspace(&w);
        assert_eq!(parse_workspace("canon", &canon).unwrap(), w);
    }
}

/// `# expect: line:col token message` lines name each diagnostic a file must
/// produce.
fn expectations(text: &str) -> Vec<(usize, usize, String, String)> {
    text.lines()
        .filter_map(|l| l.strip_prefix("# expect: "))
        .map(|l| {
            let mut parts = l.splitn(3, ' ');
            let (pos, tok, msg) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
            let (line, col) = pos.split_once(':').unwrap();
            (line.parse().unwrap(), col.parse().unwrap(), tok.to_string(), msg.to_string())
        })
        .collect()
}

fn slices_to_token(text: &str, e: &ParseError) -> bool {
    match text.lines().nth(e.line - 1) {
        Some(line) => {
            let found: String = line.chars().skip(e.column - 1).take(e.token.chars().count()).collect();
            found == e.token && e.column <= line.chars().count() + 1
        }
        None => e.token.is_empty(),
    }
}

#[test]
fn corrupted_fixtures_report_located_diagnostics() {
    let files = mdp_files(&fixtures().join("corrupt"));
    assert!(files.len() >= 4);
    for path in files {
        let text = fs::read_to_string(&path).unwrap();
        let errs = parse_workspace("x", &text).expect_err("corrupt fixture parsed");
        for e in &errs {
            assert!(slices_to_token(&text, e), "{}: {e}", path.display());
        }
        let expected = expectations(&text);
        assert!(!expected.is_empty());
        assert!(errs.len() >= expected.len());
        for (line, col, tok, msg) in expected {
            assert!(
                errs.iter().any(|e| e.line == line && e.column == col && e.token == tok && e.message.contains(&msg)),
                "{}: no `{msg}` at {line}:{col} `{tok}` in {errs:#?}",
                path.display()
            );
        }
    }
}
