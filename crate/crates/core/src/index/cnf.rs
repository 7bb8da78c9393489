use super::{CnfCount, CnfQuery, CompanionStrategy, CorpusIndex};

/// Locates occurrences of one non-anchor clause near an anchor position.
enum Companion<'q> {
    Sorted(Vec<usize>),
    Scan(&'q [u32]),
}

impl Companion<'_> {
    /// Whether some occurrence starts in `[lo, hi]`.
    fn any_in(&self, index: &CorpusIndex, lo: usize, hi: usize) -> bool {
        match self {
            Companion::Sorted(positions) => {
                let i = positions.partition_point(|&q| q < lo);
                i < positions.len() && positions[i] <= hi
            }
            Companion::Scan(clause) => (lo..=hi).any(|q| index.matches_at(q, clause)),
        }
    }
}

pub(super) fn count(
    index: &CorpusIndex,
    query: &CnfQuery,
    stop_at: Option<u64>,
    strategy: CompanionStrategy,
) -> CnfCount {
    let ranges: Vec<_> = query.clauses.iter().map(|c| index.clause_range(c)).collect();
    // rarest clause, lowest index on ties
    let anchor = (0..ranges.len()).min_by_key(|&i| (ranges[i].len(), i)).expect("query has clauses");
    let anchor_total = ranges[anchor].len();
    if anchor_total == 0 || stop_at == Some(0) {
        return CnfCount { count: 0, truncated: false, anchor_clause: anchor };
    }

    let cap = index.params().max_clause_freq.min(usize::MAX as u64) as usize;
    let truncated = anchor_total > cap;
    let mut anchors: Vec<usize> = ranges[anchor].clone().map(|r| index.suffix(r)).collect();
    anchors.sort_unstable();
    anchors.truncate(cap);

    let window = query.window.min(usize::MAX as u64) as usize;
    let scan_cost = anchors.len().saturating_mul(2 * window + 1);
    let companions: Vec<Companion> = query
        .clauses
        .iter()
        .zip(&ranges)
        .enumerate()
        .filter(|&(i, _)| i != anchor)
        .map(|(_, (clause, range))| {
            let sort_cost = range.len().saturating_mul(usize::BITS as usize - range.len().leading_zeros() as usize + 1);
            let use_scan = match strategy {
                CompanionStrategy::Scan => true,
                CompanionStrategy::Sorted => false,
                CompanionStrategy::Auto => scan_cost.saturating_mul(clause.len()) < sort_cost,
            };
            if use_scan {
                Companion::Scan(clause)
            } else {
                let mut positions: Vec<usize> = range.clone().map(|r| index.suffix(r)).collect();
                positions.sort_unstable();
                Companion::Sorted(positions)
            }
        })
        .collect();

    let mut count = 0u64;
    let mut doc = (0usize, 0usize);
    for &p in &anchors {
        if p >= doc.1 {
            doc = index.document_span(p);
        }
        let lo = p.saturating_sub(window).max(doc.0);
        let hi = p.saturating_add(window).min(doc.1 - 1);
        if companions.iter().all(|c| c.any_in(index, lo, hi)) {
            count += 1;
            if stop_at.is_some_and(|t| count >= t) {
                break;
            }
        }
    }
    CnfCount { count, truncated, anchor_clause: anchor }
}
