use crate::text::Tag;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Per-timestep argmax over the tag distributions, truncated to
/// `original_length`. A PAD argmax on a real token decodes as O.
pub fn decode_greedy(pred: &[Vec<f64>], original_length: usize) -> Vec<Tag> {
    pred.iter()
        .take(original_length)
        .map(|row| match Tag::from_index(argmax(row)).expect("tag head has one unit per tag") {
            Tag::Pad => Tag::O,
            t => t,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_examples() {
        let uniform = vec![vec![0.25; 4]; 3];
        assert_eq!(decode_greedy(&uniform, 3), vec![Tag::Adr; 3]);

        let gold = [Tag::O, Tag::Adr, Tag::Other, Tag::Pad];
        let one_hot: Vec<Vec<f64>> = gold
            .iter()
            .map(|t| {
                let mut v = vec![0.0; 4];
                v[t.index()] = 1.0;
                v
            })
            .collect();
        assert_eq!(decode_greedy(&one_hot, 4), [Tag::O, Tag::Adr, Tag::Other, Tag::O]);
        assert_eq!(decode_greedy(&one_hot, 2), gold[..2]);

        let row = [0.1, 0.2, 0.6, 0.1];
        let oracle = (0..4).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap()).unwrap();
        assert_eq!(oracle, 2);
        assert_eq!(decode_greedy(&[row.to_vec()], 1), [Tag::O]);
    }
}
