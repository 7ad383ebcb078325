//! Text formats: edge lists and per-node value files.
//!
//! Edge lists carry one edge per line as `u v [w]`, whitespace separated,
//! with the weight defaulting to 1. Lines starting with `#` or `%` are
//! comments, which covers SNAP and KONECT headers. Columns after the weight
//! (KONECT timestamps) are ignored.
//!
//! Per-node files (stubbornness, opinions) carry `node value` per line.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{BuildOutcome, Graph, GraphBuilder, NodeId, Stubbornness};

fn is_comment(line: &str) -> bool {
    line.starts_with('#') || line.starts_with('%')
}

fn parse_id(token: &str, line: usize) -> Result<NodeId> {
    token.parse().map_err(|_| Error::Parse { line, message: format!("bad node id {token:?}") })
}

fn parse_value(token: &str, line: usize) -> Result<f64> {
    token.parse().map_err(|_| Error::Parse { line, message: format!("bad number {token:?}") })
}

pub fn parse_edge_list<R: BufRead>(reader: R) -> Result<BuildOutcome> {
    let mut builder = GraphBuilder::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || is_comment(line) {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let (u, v) = match (tokens.next(), tokens.next()) {
            (Some(u), Some(v)) => (parse_id(u, line_no)?, parse_id(v, line_no)?),
            _ => return Err(Error::Parse { line: line_no, message: "expected `u v [w]`".into() }),
        };
        let w = match tokens.next() {
            Some(t) => parse_value(t, line_no)?,
            None => 1.0,
        };
        builder.add_edge_at(u, v, w, line_no)?;
    }
    builder.build()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| Error::File { path: path.to_path_buf(), source })
}

pub fn read_edge_list(path: &Path) -> Result<BuildOutcome> {
    parse_edge_list(open(path)?)
}

/// `node value` pairs in file order.
pub fn parse_node_values<R: BufRead>(reader: R) -> Result<Vec<(NodeId, f64)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || is_comment(line) {
            continue;
        }
        let mut tokens = line.split_whitespace();
        match (tokens.next(), tokens.next()) {
            (Some(id), Some(value)) => out.push((parse_id(id, line_no)?, parse_value(value, line_no)?)),
            _ => return Err(Error::Parse { line: line_no, message: "expected `node value`".into() }),
        }
    }
    Ok(out)
}

pub fn read_node_values(path: &Path) -> Result<Vec<(NodeId, f64)>> {
    parse_node_values(open(path)?)
}

/// Places per-node values in index order; every node must be covered.
pub fn assign_to_nodes(graph: &Graph, pairs: &[(NodeId, f64)]) -> Result<Vec<f64>> {
    let mut values = vec![None; graph.n()];
    for &(id, value) in pairs {
        let i = graph.index_of(id).ok_or(Error::UnknownNode(id))?;
        values[i] = Some(value);
    }
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| Error::InvalidParameter(format!("no value given for node {}", graph.ids()[i]))))
        .collect()
}

pub fn stubbornness_from_pairs(graph: &Graph, pairs: &[(NodeId, f64)]) -> Result<Stubbornness> {
    Stubbornness::new(assign_to_nodes(graph, pairs)?)
}

pub fn opinions_from_pairs(graph: &Graph, pairs: &[(NodeId, f64)]) -> Result<Vec<f64>> {
    let values = assign_to_nodes(graph, pairs)?;
    check_opinion_range(graph, &values)?;
    Ok(values)
}

pub fn check_opinion_range(graph: &Graph, values: &[f64]) -> Result<()> {
    for (i, &v) in values.iter().enumerate() {
        if !(-1.0..=1.0).contains(&v) {
            return Err(Error::OpinionOutOfRange { node: graph.ids()[i].to_string(), value: v });
        }
    }
    Ok(())
}

/// Writes `node value` lines in index order.
pub fn write_node_values<W: Write>(mut out: W, ids: &[NodeId], values: &[f64]) -> Result<()> {
    for (id, v) in ids.iter().zip(values) {
        writeln!(out, "{id} {v:e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SNAP: &str = "# Directed graph (each unordered pair of nodes is saved once)\n\
                        # FromNodeId\tToNodeId\n\
                        10\t20\n\
                        20\t30\n\
                        \n\
                        30\t10\n";

    #[test]
    fn snap_header_and_default_weight() {
        let out = parse_edge_list(SNAP.as_bytes()).unwrap();
        let g = out.graph;
        assert_eq!((g.n(), g.m()), (3, 3));
        assert_eq!(g.ids(), &[10, 20, 30]);
        assert!(g.edges().iter().all(|e| e.weight == 1.0));
    }

    #[test]
    fn konect_weights_and_extra_columns() {
        let text = "% sym positive\n% 3 3 3\n1 2 2.5 1290000000\n2 3 0.5\n1 3\n";
        let g = parse_edge_list(text.as_bytes()).unwrap().graph;
        let weights: Vec<f64> = g.edges().iter().map(|e| e.weight).collect();
        assert_eq!(weights, vec![2.5, 1.0, 0.5]);
    }

    #[test]
    fn reports_offending_line() {
        let err = parse_edge_list("1 2\n2 3 -1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::InvalidWeight { line: 2, .. }), "{err}");
        let err = parse_edge_list("1 2\n# c\nx 3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_edge_list("1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(matches!(parse_edge_list("# only\n".as_bytes()).unwrap_err(), Error::EmptyInput(_)));
    }

    #[test]
    fn node_values_round_trip() {
        let g = parse_edge_list("5 7\n7 9\n".as_bytes()).unwrap().graph;
        let pairs = parse_node_values("9 0.25\n5 -1\n7 1e-1\n".as_bytes()).unwrap();
        let s = opinions_from_pairs(&g, &pairs).unwrap();
        assert_eq!(s, vec![-1.0, 0.1, 0.25]);

        let mut buf = Vec::new();
        write_node_values(&mut buf, g.ids(), &s).unwrap();
        let again = opinions_from_pairs(&g, &parse_node_values(buf.as_slice()).unwrap()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn node_value_errors() {
        let g = parse_edge_list("1 2\n".as_bytes()).unwrap().graph;
        let unknown = parse_node_values("1 0.5\n3 0.5\n".as_bytes()).unwrap();
        assert!(matches!(opinions_from_pairs(&g, &unknown).unwrap_err(), Error::UnknownNode(3)));
        let missing = parse_node_values("1 0.5\n".as_bytes()).unwrap();
        assert!(opinions_from_pairs(&g, &missing).is_err());
        let out_of_range = parse_node_values("1 0.5\n2 1.5\n".as_bytes()).unwrap();
        assert!(matches!(opinions_from_pairs(&g, &out_of_range).unwrap_err(), Error::OpinionOutOfRange { .. }));
        let bad_k = parse_node_values("1 0.5\n2 0\n".as_bytes()).unwrap();
        assert!(matches!(stubbornness_from_pairs(&g, &bad_k).unwrap_err(), Error::InvalidStubbornness { .. }));
    }
}
