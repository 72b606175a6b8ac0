use std::io::{self, BufRead, Write};

use super::{Graph, GraphError};

/// Parses a whitespace-separated `u v` edge list. Blank lines and lines
/// starting with `#` are skipped; `n` is the largest index plus one.
///
/// Duplicate edges are collapsed. Disconnected graphs load fine; check
/// [`Graph::is_connected`] before spectral work.
pub fn load_edge_list<R: BufRead>(reader: R) -> Result<Graph, GraphError> {
    let mut edges = Vec::new();
    let mut max_index = None::<usize>;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| GraphError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_whitespace();
        let mut next = |what: &str| -> Result<usize, GraphError> {
            let tok = fields.next().ok_or_else(|| GraphError::Parse {
                line: line_no,
                message: format!("missing {what} endpoint"),
            })?;
            tok.parse::<usize>().map_err(|_| GraphError::Parse {
                line: line_no,
                message: format!("expected a nonnegative integer, found {tok:?}"),
            })
        };
        let u = next("first")?;
        let v = next("second")?;
        if let Some(extra) = fields.next() {
            return Err(GraphError::Parse {
                line: line_no,
                message: format!("unexpected trailing token {extra:?}"),
            });
        }
        if u == v {
            return Err(GraphError::SelfLoop {
                line: line_no,
                node: u,
            });
        }
        max_index = Some(max_index.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
    }
    let n = max_index.map(|m| m + 1).ok_or(GraphError::Empty)?;
    Graph::from_edges(n, &edges)
}

/// Writes one `u v` line per edge, in the graph's sorted edge order.
pub fn write_edge_list<W: Write>(g: &Graph, mut out: W) -> io::Result<()> {
    for &(u, v) in g.edges() {
        writeln!(out, "{u} {v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(s: &str) -> Result<Graph, GraphError> {
        load_edge_list(s.as_bytes())
    }

    #[test]
    fn path_on_three() {
        let g = load("0 1\n1 2").unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn duplicates_collapse() {
        let g = load("0 1\n0 1\n1 0\n").unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn comments_and_blanks() {
        let g = load("# header\n\n0 1\n  # indented comment\n2 1\n").unwrap();
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn self_loop_has_line_number() {
        match load("0 1\n0 0\n") {
            Err(GraphError::SelfLoop { line, node }) => {
                assert_eq!((line, node), (2, 0));
            }
            other => panic!("expected self-loop error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_have_line_numbers() {
        let err = load("0 1\n1 x\n").unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");
        let err = load("0 1\n2\n").unwrap_err();
        assert!(err.to_string().starts_with("line 2:"), "{err}");
        let err = load("0 1 2\n").unwrap_err();
        assert!(err.to_string().starts_with("line 1:"), "{err}");
        assert!(load("-1 2\n").is_err());
    }

    #[test]
    fn disconnected_loads_but_is_flagged() {
        let g = load("0 1\n2 3\n").unwrap();
        assert!(!g.is_connected());
    }

    #[test]
    fn round_trip() {
        let g = load("0 1\n1 2\n2 0\n2 3\n").unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let h = load(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(g, h);
    }
}
