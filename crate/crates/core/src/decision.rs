/// A predicted class and whether the maximum score was shared.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decision {
    pub label: usize,
    pub tied: bool,
}

/// Index of the largest score; ties go to the lowest index and are flagged.
pub fn argmax(scores: &[f64]) -> Decision {
    assert!(!scores.is_empty(), "argmax of empty scores");
    let mut best = 0;
    let mut tied = false;
    for (c, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = c;
            tied = false;
        } else if s == scores[best] {
            tied = true;
        }
    }
    Decision { label: best, tied }
}
