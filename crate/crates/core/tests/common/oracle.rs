//! Brute-force reference definitions used to check the index.

#![allow(dead_code)]

pub fn occurs_at(tokens: &[u32], pos: usize, clause: &[u32]) -> bool {
    pos + clause.len() <= tokens.len() && tokens[pos..pos + clause.len()] == *clause
}

pub fn clause_count(tokens: &[u32], clause: &[u32]) -> u64 {
    if clause.is_empty() {
        return 0;
    }
    (0..tokens.len()).filter(|&p| occurs_at(tokens, p, clause)).count() as u64
}

pub fn doc_of(bounds: &[usize], pos: usize) -> usize {
    bounds.iter().rposition(|&b| b <= pos).unwrap()
}

/// Returns (count, truncated, anchor clause).
pub fn cnf_count(tokens: &[u32], bounds: &[usize], clauses: &[Vec<u32>], window: usize, cap: usize) -> (u64, bool, usize) {
    let counts: Vec<u64> = clauses.iter().map(|c| clause_count(tokens, c)).collect();
    let mut anchor = 0;
    for i in 1..counts.len() {
        if counts[i] < counts[anchor] {
            anchor = i;
        }
    }
    if counts[anchor] == 0 {
        return (0, false, anchor);
    }
    let anchors: Vec<usize> = (0..tokens.len()).filter(|&p| occurs_at(tokens, p, &clauses[anchor])).collect();
    let truncated = anchors.len() > cap;
    let mut count = 0;
    for &p in anchors.iter().take(cap) {
        let ok = clauses.iter().enumerate().filter(|&(j, _)| j != anchor).all(|(_, clause)| {
            (0..tokens.len()).any(|q| {
                occurs_at(tokens, q, clause) && doc_of(bounds, q) == doc_of(bounds, p) && q.abs_diff(p) <= window
            })
        });
        if ok {
            count += 1;
        }
    }
    (count, truncated, anchor)
}

/// Sorted suffix start positions.
pub fn suffix_array(tokens: &[u32]) -> Vec<usize> {
    let mut sa: Vec<usize> = (0..tokens.len()).collect();
    sa.sort_by(|&a, &b| tokens[a..].cmp(&tokens[b..]));
    sa
}
