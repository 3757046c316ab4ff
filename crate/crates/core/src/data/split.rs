//! The two 0.8:0.1:0.1 partition schemes: chronological and user-disjoint.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::QueryRecord;

/// Floor for train, remainder split with validation taking the extra item.
fn cut_points(n: usize) -> (usize, usize) {
    let n_train = n * 8 / 10;
    let rem = n - n_train;
    let n_valid = rem.div_ceil(2);
    (n_train, n_train + n_valid)
}

/// Sort by timestamp (ties by query_id) and split 0.8:0.1:0.1.
pub fn split_by_time(
    mut records: Vec<QueryRecord>,
) -> (Vec<QueryRecord>, Vec<QueryRecord>, Vec<QueryRecord>) {
    records.sort_by(|a, b| {
        a.timestamp.cmp(&b.timestamp).then_with(|| a.query_id.cmp(&b.query_id))
    });
    let (a, b) = cut_points(records.len());
    let test = records.split_off(b);
    let valid = records.split_off(a);
    (records, valid, test)
}

/// Shuffle the distinct users with the seed, split the user list 0.8:0.1:0.1,
/// and route every query to its user's partition.
pub fn split_by_user(
    records: Vec<QueryRecord>,
    seed: u64,
) -> (Vec<QueryRecord>, Vec<QueryRecord>, Vec<QueryRecord>) {
    let mut users: Vec<&str> = records.iter().map(|r| r.user_id.as_str()).collect();
    users.sort_unstable();
    users.dedup();
    let mut users: Vec<String> = users.into_iter().map(String::from).collect();
    users.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (a, b) = cut_points(users.len());
    // 0 = train, 1 = valid, 2 = test per user.
    let bucket_of: std::collections::HashMap<&str, usize> = users
        .iter()
        .enumerate()
        .map(|(idx, u)| (u.as_str(), usize::from(idx >= a) + usize::from(idx >= b)))
        .collect();
    let mut parts = (Vec::new(), Vec::new(), Vec::new());
    for r in records {
        match bucket_of[r.user_id.as_str()] {
            0 => parts.0.push(r),
            1 => parts.1.push(r),
            _ => parts.2.push(r),
        }
    }
    parts
}
