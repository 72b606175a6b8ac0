use std::io::Read;

use super::ModelError;
use crate::linalg::Mat;

/// Reads `node_id,f_1,...,f_d` records with a header row. Every node in
/// `0..n` must appear exactly once.
pub fn read_features_csv<R: Read>(input: R, n: usize) -> Result<Mat, ModelError> {
    let bad = |m: String| ModelError::InvalidSpec(m);
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let d = reader
        .headers()
        .map_err(|e| bad(format!("feature header: {e}")))?
        .len()
        .checked_sub(1)
        .filter(|&d| d > 0)
        .ok_or_else(|| bad("feature header needs node_id and at least one column".into()))?;
    let mut out = Mat::zeros(n, d);
    let mut seen = vec![false; n];
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| bad(format!("line {line}: {e}")))?;
        if record.len() != d + 1 {
            return Err(bad(format!("line {line}: expected {} fields, got {}", d + 1, record.len())));
        }
        let node: usize = record[0]
            .parse()
            .map_err(|_| bad(format!("line {line}: bad node id `{}`", &record[0])))?;
        if node >= n || seen[node] {
            return Err(bad(format!("line {line}: node {node} out of range or repeated")));
        }
        seen[node] = true;
        for c in 0..d {
            out[(node, c)] = record[c + 1]
                .parse()
                .map_err(|_| bad(format!("line {line}: bad value `{}`", &record[c + 1])))?;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(bad(format!("node {missing} has no feature row")));
    }
    Ok(out)
}
