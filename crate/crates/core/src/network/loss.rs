//! Cross-entropy losses for both heads and their gated combination.

use crate::error::{Error, Result};
use crate::text::Tag;

/// Floor applied inside logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

fn safe_ln(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

fn is_one_hot(row: &[f64]) -> bool {
    row.iter().all(|&v| v == 0.0 || v == 1.0) && row.iter().filter(|&&v| v == 1.0).count() == 1
}

/// Sequence cross-entropy summed over every timestep.
pub fn adr_loss(pred: &[Vec<f64>], gold: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::Input(format!(
            "{} predicted steps vs {} gold steps",
            pred.len(),
            gold.len()
        )));
    }
    let mut loss = 0.0;
    for (t, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() || !is_one_hot(g) {
            return Err(Error::Input(format!("gold row {t} is not one-hot over {} labels", p.len())));
        }
        loss -= p.iter().zip(g).map(|(&pi, &gi)| gi * safe_ln(pi)).sum::<f64>();
    }
    Ok(loss)
}

/// Same as [`adr_loss`] with gold given as tags.
pub fn adr_loss_tags(pred: &[Vec<f64>], gold: &[Tag]) -> Result<f64> {
    if pred.len() != gold.len() {
        return Err(Error::Input(format!(
            "{} predicted steps vs {} gold tags",
            pred.len(),
            gold.len()
        )));
    }
    Ok(pred
        .iter()
        .zip(gold)
        .map(|(p, t)| -safe_ln(p[t.index()]))
        .sum())
}

/// Binary cross-entropy `-Σ ŷ_i log y_i` for the sentence head.
pub fn ade_loss(pred: &[f64], gold: &[f64]) -> f64 {
    -pred
        .iter()
        .zip(gold)
        .filter(|(_, &g)| g != 0.0)
        .map(|(&p, &g)| g * safe_ln(p))
        .sum::<f64>()
}

pub fn ade_loss_label(pred: &[f64], label: usize) -> f64 {
    -safe_ln(pred[label])
}

/// `λ·1[ade_gold = 1]·L_ADR + (1 − λ)·L_ADE`.
pub fn joint_loss(adr_component: f64, ade_component: f64, ade_gold: usize, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let gate = if ade_gold == 1 { 1.0 } else { 0.0 };
    Ok(lambda * gate * adr_component + (1.0 - lambda) * ade_component)
}

pub fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(Error::Config(format!("lambda must lie in [0, 1], got {lambda}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(i: usize, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        v
    }

    #[test]
    fn adr_examples() {
        let gold = vec![one_hot(2, 4), one_hot(0, 4)];
        assert_eq!(adr_loss(&gold, &gold).unwrap(), 0.0);

        let uniform = vec![vec![0.25; 4]];
        let l = adr_loss(&uniform, &[one_hot(1, 4)]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-9);
        assert!((l - 1.3863).abs() < 1e-4);

        assert!(adr_loss(&uniform, &[vec![0.5, 0.5, 0.0, 0.0]]).is_err());
        assert!(adr_loss(&uniform, &[]).is_err());
    }

    #[test]
    fn adr_loss_is_additive() {
        let a = vec![vec![0.1, 0.2, 0.3, 0.4], vec![0.7, 0.1, 0.1, 0.1]];
        let b = vec![vec![0.25; 4]];
        let ga = [Tag::O, Tag::Adr];
        let gb = [Tag::Pad];
        let whole: Vec<Vec<f64>> = a.iter().chain(&b).cloned().collect();
        let total = adr_loss_tags(&whole, &[ga[0], ga[1], gb[0]]).unwrap();
        let parts = adr_loss_tags(&a, &ga).unwrap() + adr_loss_tags(&b, &gb).unwrap();
        assert!((total - parts).abs() < 1e-12);
    }

    #[test]
    fn ade_examples() {
        assert_eq!(ade_loss(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((ade_loss(&[0.5, 0.5], &[0.0, 1.0]) - 2f64.ln()).abs() < 1e-9);
        assert!((ade_loss(&[0.9, 0.1], &[0.0, 1.0]) - -(0.1f64.ln())).abs() < 1e-9);
        assert!((ade_loss_label(&[0.9, 0.1], 1) - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn joint_examples() {
        // gate closed: only the sentence loss survives
        for l_adr in [0.0, 1.0, 42.0] {
            assert_eq!(joint_loss(l_adr, 0.5, 0, 0.8).unwrap(), (1.0 - 0.8) * 0.5);
        }
        assert_eq!(joint_loss(1.7, 0.3, 1, 1.0).unwrap(), 1.7);
        assert!((joint_loss(1.0, 0.5, 1, 0.8).unwrap() - 0.9).abs() < 1e-9);
        assert!(matches!(joint_loss(1.0, 1.0, 1, 1.5), Err(Error::Config(_))));
        assert!(joint_loss(1.0, 1.0, 1, -0.1).is_err());
    }
}
