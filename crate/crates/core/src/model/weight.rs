use crate::dataset::{Direction, PostVoteStats, UserStats, VoteRecord};
use crate::error::{Error, Result};

/// Per-class loss multiplier: 1 for upvotes, `downvote_weight` for downvotes.
pub fn class_weight(direction: Direction, downvote_weight: f64) -> f64 {
    match direction {
        Direction::Up => 1.0,
        Direction::Down => downvote_weight,
    }
}

/// Loss weight of one vote.
///
/// `(1 / votes by the user in this direction) * (votes on the post / votes
/// on the post in this direction) * class weight`. The statistics must
/// already include `vote`.
pub fn compute_weight(
    vote: &VoteRecord,
    user_stats: &UserStats,
    post_stats: &PostVoteStats,
    downvote_weight: f64,
) -> Result<f64> {
    let by_user = user_stats.count(&vote.user_id, vote.direction);
    let on_post = post_stats.get(&vote.post_id);
    let same_direction = on_post.get(vote.direction);
    if by_user == 0 || same_direction == 0 {
        return Err(Error::InconsistentStats(format!(
            "{} {} on {}: user count {by_user}, post count {same_direction}",
            vote.user_id, vote.direction, vote.post_id
        )));
    }
    Ok((1.0 / by_user as f64)
        * (on_post.total() as f64 / same_direction as f64)
        * class_weight(vote.direction, downvote_weight))
}
