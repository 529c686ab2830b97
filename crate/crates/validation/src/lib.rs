//! Reference implementations used to cross-check rulecritic, plus the
//! scenario fixtures the acceptance suite shares.

pub mod fixtures;
pub mod mini;
pub mod oracle;
