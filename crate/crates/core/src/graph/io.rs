//! CSV ingestion and serialization.
//!
//! Schema (comma-separated, UTF-8, LF):
//! - `features.csv`: header `node_id,<name1>,...,<named>`; float cells.
//! - `edges.csv`: header `src,dst`; integer node ids.
//! - `labels.csv`: header `node_id,label`; labels in {0,1}.
//!
//! Node ids in files may be arbitrary integers; they are remapped densely to
//! `[0, n)` in file order of `features.csv`, and the mapping is kept on the
//! graph so serialization writes the original ids back.

use super::AttributedGraph;
use crate::error::{Error, Result};
use ndarray::Array2;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

fn parse_err(file: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Load a graph from the three-file CSV schema, moving the named sensitive
/// columns out of the feature matrix (order preserved).
pub fn load_graph(
    features_path: &Path,
    edges_path: &Path,
    labels_path: &Path,
    sensitive_columns: &[String],
) -> Result<AttributedGraph> {
    if sensitive_columns.is_empty() {
        return Err(Error::Config(
            "at least one sensitive column must be named".into(),
        ));
    }

    // features.csv: establishes node order and the dense id mapping.
    let mut rdr = csv::Reader::from_path(features_path)?;
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || &headers[0] != "node_id" {
        return Err(parse_err(features_path, 1, "first column must be `node_id`"));
    }
    let all_names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    for s in sensitive_columns {
        if !all_names.iter().any(|n| n == s) {
            return Err(Error::Config(format!(
                "unknown sensitive column `{s}`; file has {:?}",
                all_names
            )));
        }
    }
    let sensitive_positions: Vec<usize> = sensitive_columns
        .iter()
        .map(|s| all_names.iter().position(|n| n == s).unwrap())
        .collect();

    let mut node_ids: Vec<i64> = Vec::new();
    let mut id_to_dense: HashMap<i64, usize> = HashMap::new();
    let mut raw_rows: Vec<Vec<f64>> = Vec::new();
    for (rec_idx, rec) in rdr.records().enumerate() {
        let line = rec_idx + 2; // header is line 1
        let rec = rec?;
        if rec.len() != all_names.len() + 1 {
            return Err(parse_err(
                features_path,
                line,
                format!("expected {} cells, found {}", all_names.len() + 1, rec.len()),
            ));
        }
        let id: i64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(features_path, line, format!("bad node id `{}`", &rec[0])))?;
        if id_to_dense.insert(id, node_ids.len()).is_some() {
            return Err(parse_err(features_path, line, format!("duplicate node id {id}")));
        }
        node_ids.push(id);
        let mut row = Vec::with_capacity(all_names.len());
        for cell in rec.iter().skip(1) {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(features_path, line, format!("bad float `{cell}`"))
            })?;
            row.push(v);
        }
        raw_rows.push(row);
    }
    let n = node_ids.len();
    if n == 0 {
        return Err(parse_err(features_path, 2, "no nodes"));
    }

    // labels.csv
    let mut labels: Vec<Option<u8>> = vec![None; n];
    let mut rdr = csv::Reader::from_path(labels_path)?;
    for (rec_idx, rec) in rdr.records().enumerate() {
        let line = rec_idx + 2;
        let rec = rec?;
        if rec.len() != 2 {
            return Err(parse_err(labels_path, line, "expected `node_id,label`"));
        }
        let id: i64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(labels_path, line, format!("bad node id `{}`", &rec[0])))?;
        let dense = *id_to_dense
            .get(&id)
            .ok_or_else(|| parse_err(labels_path, line, format!("unknown node id {id}")))?;
        let label: i64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(labels_path, line, format!("bad label `{}`", &rec[1])))?;
        if label != 0 && label != 1 {
            return Err(Error::Validation(format!(
                "non-binary label {label} for node id {id}"
            )));
        }
        labels[dense] = Some(label as u8);
    }
    let labels: Vec<u8> = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::Validation(format!("node {} has no label", node_ids[i]))))
        .collect::<Result<_>>()?;

    // edges.csv
    let mut rdr = csv::Reader::from_path(edges_path)?;
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for (rec_idx, rec) in rdr.records().enumerate() {
        let line = rec_idx + 2;
        let rec = rec?;
        if rec.len() != 2 {
            return Err(parse_err(edges_path, line, "expected `src,dst`"));
        }
        let mut pair = [0usize; 2];
        for (slot, cell) in pair.iter_mut().zip(rec.iter()) {
            let id: i64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(edges_path, line, format!("bad node id `{cell}`")))?;
            *slot = *id_to_dense
                .get(&id)
                .ok_or_else(|| parse_err(edges_path, line, format!("unknown node id {id}")))?;
        }
        edges.push((pair[0] as u32, pair[1] as u32));
    }

    // Separate sensitive columns from the feature matrix.
    let is_sensitive: Vec<bool> = (0..all_names.len())
        .map(|j| sensitive_positions.contains(&j))
        .collect();
    let d = all_names.len() - sensitive_columns.len();
    if d == 0 {
        return Err(Error::Validation(
            "all feature columns are sensitive; nothing left to learn from".into(),
        ));
    }
    let mut features = Array2::zeros((n, d));
    let mut sensitive = Array2::zeros((n, sensitive_columns.len()));
    for (i, row) in raw_rows.iter().enumerate() {
        let mut fj = 0;
        for (j, &v) in row.iter().enumerate() {
            if !is_sensitive[j] {
                features[[i, fj]] = v;
                fj += 1;
            }
        }
        for (sj, &pos) in sensitive_positions.iter().enumerate() {
            let v = row[pos];
            if v != 0.0 && v != 1.0 {
                return Err(Error::Validation(format!(
                    "non-binary sensitive value {v} for node id {} in column `{}`",
                    node_ids[i], sensitive_columns[sj]
                )));
            }
            sensitive[[i, sj]] = v;
        }
    }
    let feature_names: Vec<String> = all_names
        .iter()
        .zip(&is_sensitive)
        .filter(|(_, &s)| !s)
        .map(|(n, _)| n.clone())
        .collect();

    let mut g = AttributedGraph::new(
        features,
        feature_names,
        sensitive,
        sensitive_columns.to_vec(),
        labels,
        edges,
    )?;
    g.sensitive_positions = sensitive_positions;
    g.node_ids = node_ids;
    Ok(g)
}

/// Format a float with the shortest representation that round-trips.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Write `features.csv`, `edges.csv` and `labels.csv` into `dir` using the
/// load schema; sensitive columns are re-inserted at their original
/// positions and original node ids are written back.
pub fn save_graph(g: &AttributedGraph, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;

    // Reassemble the full on-disk column layout.
    let total = g.d() + g.k();
    let mut names: Vec<Option<&str>> = vec![None; total];
    for (sj, &pos) in g.sensitive_positions.iter().enumerate() {
        names[pos] = Some(&g.sensitive_names[sj]);
    }
    let mut fj = 0;
    for slot in names.iter_mut() {
        if slot.is_none() {
            *slot = Some(&g.feature_names[fj]);
            fj += 1;
        }
    }

    let mut out = String::from("node_id");
    for n in &names {
        out.push(',');
        out.push_str(n.unwrap());
    }
    out.push('\n');
    for i in 0..g.n {
        write!(out, "{}", g.node_ids[i]).unwrap();
        let mut fj = 0;
        for (j, _) in names.iter().enumerate() {
            let v = if let Some(sj) = g.sensitive_positions.iter().position(|&p| p == j) {
                g.sensitive[[i, sj]]
            } else {
                let v = g.features[[i, fj]];
                fj += 1;
                v
            };
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    std::fs::write(dir.join("features.csv"), out)?;

    let mut out = String::from("src,dst\n");
    for &(a, b) in &g.edges {
        writeln!(out, "{},{}", g.node_ids[a as usize], g.node_ids[b as usize]).unwrap();
    }
    std::fs::write(dir.join("edges.csv"), out)?;

    let mut out = String::from("node_id,label\n");
    for i in 0..g.n {
        writeln!(out, "{},{}", g.node_ids[i], g.labels[i]).unwrap();
    }
    std::fs::write(dir.join("labels.csv"), out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use tempfile::tempdir;

    fn write(dir: &Path, name: &str, body: &str) {
        std::fs::write(dir.join(name), body).unwrap();
    }

    fn load(dir: &Path, sens: &[&str]) -> Result<AttributedGraph> {
        load_graph(
            &dir.join("features.csv"),
            &dir.join("edges.csv"),
            &dir.join("labels.csv"),
            &sens.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        )
    }

    #[test]
    fn loads_and_separates_sensitive_column() {
        let dir = tempdir().unwrap();
        write(
            dir.path(),
            "features.csv",
            "node_id,age,Gender,income\n10,1.5,0,3.0\n20,2.5,1,4.0\n30,0.5,1,5.0\n",
        );
        write(dir.path(), "edges.csv", "src,dst\n10,20\n20,10\n20,30\n");
        write(dir.path(), "labels.csv", "node_id,label\n10,0\n20,1\n30,1\n");
        let g = load(dir.path(), &["Gender"]).unwrap();
        assert_eq!(g.n, 3);
        assert_eq!(g.d(), 2);
        assert_eq!(g.k(), 1);
        assert_eq!(g.feature_names, vec!["age", "income"]);
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
        assert_eq!(g.sensitive.column(0).to_vec(), vec![0.0, 1.0, 1.0]);
        assert_eq!(g.node_ids, vec![10, 20, 30]);
    }

    #[test]
    fn unknown_sensitive_column_is_config_error() {
        let dir = tempdir().unwrap();
        write(dir.path(), "features.csv", "node_id,a\n0,1.0\n");
        write(dir.path(), "edges.csv", "src,dst\n");
        write(dir.path(), "labels.csv", "node_id,label\n0,0\n");
        assert!(matches!(load(dir.path(), &["nope"]), Err(Error::Config(_))));
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let dir = tempdir().unwrap();
        write(
            dir.path(),
            "features.csv",
            "node_id,a,s\n0,1.0,0\n1,oops,1\n",
        );
        write(dir.path(), "edges.csv", "src,dst\n0,1\n");
        write(dir.path(), "labels.csv", "node_id,label\n0,0\n1,1\n");
        match load(dir.path(), &["s"]) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_binary_label_is_validation_error() {
        let dir = tempdir().unwrap();
        write(dir.path(), "features.csv", "node_id,a,s\n0,1.0,0\n1,2.0,1\n");
        write(dir.path(), "edges.csv", "src,dst\n0,1\n");
        write(dir.path(), "labels.csv", "node_id,label\n0,0\n1,2\n");
        assert!(matches!(
            load(dir.path(), &["s"]),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn round_trip_is_byte_identical_and_structural() {
        let g = AttributedGraph::new(
            array![[0.25, 1.0], [1.5, 0.0], [0.125, 1.0]],
            vec!["a".into(), "b".into()],
            array![[0.0], [1.0], [1.0]],
            vec!["s".into()],
            vec![0, 1, 1],
            vec![(0, 1), (0, 2)],
        )
        .unwrap();
        let dir = tempdir().unwrap();
        save_graph(&g, dir.path()).unwrap();
        let g2 = load(dir.path(), &["s"]).unwrap();
        assert_eq!(g, g2);

        let dir2 = tempdir().unwrap();
        save_graph(&g2, dir2.path()).unwrap();
        for f in ["features.csv", "edges.csv", "labels.csv"] {
            let a = std::fs::read(dir.path().join(f)).unwrap();
            let b = std::fs::read(dir2.path().join(f)).unwrap();
            assert_eq!(a, b, "{f} differs after round trip");
        }
    }

    #[test]
    fn permuted_node_ids_load_isomorphic() {
        // Same graph written with two different id orderings: relabeling by
        // sorted original id must produce identical structures.
        let dir_a = tempdir().unwrap();
        write(
            dir_a.path(),
            "features.csv",
            "node_id,a,s\n5,1,0\n9,2,1\n7,3,0\n",
        );
        write(dir_a.path(), "edges.csv", "src,dst\n5,9\n9,7\n");
        write(dir_a.path(), "labels.csv", "node_id,label\n5,0\n9,1\n7,0\n");
        let dir_b = tempdir().unwrap();
        write(
            dir_b.path(),
            "features.csv",
            "node_id,a,s\n7,3,0\n5,1,0\n9,2,1\n",
        );
        write(dir_b.path(), "edges.csv", "src,dst\n9,5\n7,9\n");
        write(dir_b.path(), "labels.csv", "node_id,label\n7,0\n9,1\n5,0\n");

        let canon = |g: &AttributedGraph| {
            let mut order: Vec<usize> = (0..g.n).collect();
            order.sort_by_key(|&i| g.node_ids[i]);
            let rank: Vec<usize> = {
                let mut r = vec![0; g.n];
                for (new, &old) in order.iter().enumerate() {
                    r[old] = new;
                }
                r
            };
            let mut edges: Vec<(usize, usize)> = g
                .edges
                .iter()
                .map(|&(a, b)| {
                    let (x, y) = (rank[a as usize], rank[b as usize]);
                    (x.min(y), x.max(y))
                })
                .collect();
            edges.sort_unstable();
            let feats: Vec<Vec<f64>> = order
                .iter()
                .map(|&i| g.features.row(i).to_vec())
                .collect();
            let labels: Vec<u8> = order.iter().map(|&i| g.labels[i]).collect();
            (edges, feats, labels)
        };

        let ga = load(dir_a.path(), &["s"]).unwrap();
        let gb = load(dir_b.path(), &["s"]).unwrap();
        assert_eq!(canon(&ga), canon(&gb));
    }
}
