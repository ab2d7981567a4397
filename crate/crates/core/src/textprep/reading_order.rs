use std::cmp::Ordering;

use crate::corpus::OcrToken;

/// Left-to-right, top-to-bottom serialization of OCR tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReadingOrder {
    /// Token indices in reading order.
    pub order: Vec<usize>,
    /// Line index of each token, indexed by token index.
    pub line_ids: Vec<usize>,
}

impl ReadingOrder {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// True when reading-order positions `pos` and `pos + 1` sit on different lines.
    pub fn breaks_line_after(&self, pos: usize) -> bool {
        self.line_ids[self.order[pos]] != self.line_ids[self.order[pos + 1]]
    }

    pub fn is_valid_for(&self, n_tokens: usize) -> bool {
        if self.order.len() != n_tokens || self.line_ids.len() != n_tokens {
            return false;
        }
        let mut seen = vec![false; n_tokens];
        for &i in &self.order {
            if i >= n_tokens || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        self.order.windows(2).all(|w| self.line_ids[w[0]] <= self.line_ids[w[1]])
    }
}

/// Greedy line clustering.
///
/// Tokens are visited by ascending center-y; a token joins the current line
/// when its center-y is within half the median token height of the line's
/// running mean center-y, otherwise it opens a new line. Lines are read in
/// order of mean center-y, tokens within a line by center-x. Ties fall back
/// to the original token index.
///
/// Image dimensions are accepted for symmetry with the other layout
/// functions; the rule itself is scale-free.
pub fn compute_reading_order(tokens: &[OcrToken], _width: f64, _height: f64) -> ReadingOrder {
    let n = tokens.len();
    if n == 0 {
        return ReadingOrder { order: Vec::new(), line_ids: Vec::new() };
    }
    let centers: Vec<(f64, f64)> = tokens.iter().map(|t| t.quad.center()).collect();
    let threshold = 0.5 * median(tokens.iter().map(|t| t.quad.height()).collect());

    let mut by_y: Vec<usize> = (0..n).collect();
    by_y.sort_by(|&a, &b| centers[a].1.partial_cmp(&centers[b].1).unwrap_or(Ordering::Equal).then(a.cmp(&b)));

    struct Line {
        members: Vec<usize>,
        sum_y: f64,
    }
    let mut lines: Vec<Line> = Vec::new();
    for i in by_y {
        let cy = centers[i].1;
        match lines.last_mut() {
            Some(line) if (cy - line.sum_y / line.members.len() as f64).abs() <= threshold => {
                line.members.push(i);
                line.sum_y += cy;
            }
            _ => lines.push(Line { members: vec![i], sum_y: cy }),
        }
    }

    let mean = |l: &Line| l.sum_y / l.members.len() as f64;
    lines.sort_by(|a, b| {
        mean(a)
            .partial_cmp(&mean(b))
            .unwrap_or(Ordering::Equal)
            .then(a.members.iter().min().cmp(&b.members.iter().min()))
    });

    let mut order = Vec::with_capacity(n);
    let mut line_ids = vec![0; n];
    for (line_id, line) in lines.iter_mut().enumerate() {
        line.members
            .sort_by(|&a, &b| centers[a].0.partial_cmp(&centers[b].0).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        for &i in &line.members {
            line_ids[i] = line_id;
            order.push(i);
        }
    }
    ReadingOrder { order, line_ids }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
