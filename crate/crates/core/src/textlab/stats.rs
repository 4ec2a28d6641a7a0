//! Summary statistics over a caption set.

use serde::{Deserialize, Serialize};

use super::hedge::{detect_hedges, HedgeLexicon};
use super::TextlabError;
use crate::corpus::Caption;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Result<Self, TextlabError> {
        let n = values.len();
        if n < 2 {
            return Err(TextlabError::TooFewCaptions { found: n });
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        Ok(MeanSd {
            mean,
            sd: (ss / (n - 1) as f64).sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionStats {
    pub count: usize,
    pub tokens: MeanSd,
    pub words: MeanSd,
    pub hedge_rate: f64,
    pub hedged_count: usize,
    pub token_cap: u32,
    pub capped_count: usize,
}

pub fn caption_stats<'a, I>(
    captions: I,
    hedges: &HedgeLexicon,
    token_cap: u32,
) -> Result<CaptionStats, TextlabError>
where
    I: IntoIterator<Item = &'a Caption>,
{
    let captions: Vec<&Caption> = captions.into_iter().collect();
    let tokens: Vec<f64> = captions.iter().map(|c| c.token_count as f64).collect();
    let words: Vec<f64> = captions.iter().map(|c| c.word_count as f64).collect();
    let tokens = MeanSd::of(&tokens)?;
    let words = MeanSd::of(&words)?;
    let hedged_count = captions
        .iter()
        .filter(|c| detect_hedges(&c.text, hedges).hedged)
        .count();
    let capped_count = captions.iter().filter(|c| c.hit_cap(token_cap)).count();
    Ok(CaptionStats {
        count: captions.len(),
        tokens,
        words,
        hedge_rate: hedged_count as f64 / captions.len() as f64,
        hedged_count,
        token_cap,
        capped_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cap(id: &str, text: &str, tokens: u32) -> Caption {
        Caption::new(id, text, tokens, "m", "p")
    }

    #[test]
    fn sample_sd_hand_computed() {
        let m = MeanSd::of(&[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(m.mean, 20.0);
        assert_eq!(m.sd, 10.0);
    }

    #[test]
    fn word_counts_from_text() {
        let caps = [
            cap("a", &vec!["w"; 10].join(" "), 12),
            cap("b", &vec!["w"; 20].join(" "), 24),
            cap("c", &vec!["w"; 30].join(" "), 300),
        ];
        let s = caption_stats(&caps, &HedgeLexicon::default(), 300).unwrap();
        assert_eq!(s.words, MeanSd { mean: 20.0, sd: 10.0 });
        assert_eq!(s.capped_count, 1);
        assert_eq!(s.hedge_rate, 0.0);
    }

    #[test]
    fn identical_captions_zero_sd() {
        let caps = vec![cap("a", "possibly a barn", 5), cap("b", "possibly a barn", 5)];
        let s = caption_stats(&caps, &HedgeLexicon::default(), 300).unwrap();
        assert_eq!(s.tokens.sd, 0.0);
        assert_eq!(s.words.sd, 0.0);
        assert_eq!(s.hedge_rate, 1.0);
    }

    #[test]
    fn too_few() {
        let caps = [cap("a", "x", 1)];
        assert!(matches!(
            caption_stats(&caps, &HedgeLexicon::default(), 300),
            Err(TextlabError::TooFewCaptions { found: 1 })
        ));
    }
}
