use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a raw label field becomes a class index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatingScheme {
    /// 1-2 negative, 4-5 positive, 3 dropped.
    AmazonBinary,
    /// 1-2 negative, 3 neutral, 4-5 positive.
    Yelp3class,
    /// The field already holds a class index.
    Direct,
}

impl RatingScheme {
    pub fn class_names(self) -> Vec<String> {
        let names: &[&str] = match self {
            RatingScheme::AmazonBinary => &["negative", "positive"],
            RatingScheme::Yelp3class => &["negative", "neutral", "positive"],
            RatingScheme::Direct => &[],
        };
        names.iter().map(|s| s.to_string()).collect()
    }
}

/// Class for a 1-5 star rating, or `None` when the scheme drops it.
pub fn map_rating(rating: i64, scheme: RatingScheme) -> Result<Option<usize>> {
    if scheme == RatingScheme::Direct {
        return if rating >= 0 {
            Ok(Some(rating as usize))
        } else {
            Err(Error::invalid(format!("negative class index {rating}")))
        };
    }
    if !(1..=5).contains(&rating) {
        return Err(Error::invalid(format!("rating {rating} outside 1..=5")));
    }
    Ok(match (scheme, rating) {
        (_, 1 | 2) => Some(0),
        (RatingScheme::AmazonBinary, 3) => None,
        (RatingScheme::AmazonBinary, _) => Some(1),
        (_, 3) => Some(1),
        _ => Some(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_over_one_to_five() {
        let amazon: Vec<_> = (1..=5).map(|r| map_rating(r, RatingScheme::AmazonBinary).unwrap()).collect();
        assert_eq!(amazon, vec![Some(0), Some(0), None, Some(1), Some(1)]);
        let yelp: Vec<_> = (1..=5).map(|r| map_rating(r, RatingScheme::Yelp3class).unwrap()).collect();
        assert_eq!(yelp, vec![Some(0), Some(0), Some(1), Some(2), Some(2)]);
        assert!(map_rating(0, RatingScheme::AmazonBinary).is_err());
        assert!(map_rating(6, RatingScheme::Yelp3class).is_err());
    }
}
