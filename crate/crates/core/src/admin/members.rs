use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{UserStats, VoteCounts};
use crate::error::{Error, Result};

/// Imported account details. Missing cells stay `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KarmaRecord {
    pub user_id: String,
    pub link_karma: Option<i64>,
    pub comment_karma: Option<i64>,
    pub is_moderator: Option<bool>,
    pub is_employee: Option<bool>,
    pub has_gold: Option<bool>,
}

pub fn load_karma(path: impl AsRef<Path>) -> Result<HashMap<String, KarmaRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_karma(path, file)
}

pub fn read_karma(path: &Path, reader: impl std::io::Read) -> Result<HashMap<String, KarmaRecord>> {
    let mut out = HashMap::new();
    for (i, row) in csv::Reader::from_reader(reader).deserialize::<KarmaRecord>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i as u64 + 2,
            message: e.to_string(),
        })?;
        out.insert(row.user_id.clone(), row);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberProfile {
    pub user_id: String,
    /// Votes in the requested community.
    pub up: u64,
    pub down: u64,
    pub total: u64,
    /// Vote counts in every community the member has voted in.
    pub communities: BTreeMap<String, VoteCounts>,
    pub link_karma: Option<i64>,
    pub comment_karma: Option<i64>,
    pub is_moderator: Option<bool>,
    pub is_employee: Option<bool>,
    pub has_gold: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberQuery {
    #[serde(default)]
    pub min_votes: u64,
    /// 1-based.
    #[serde(default = "first_page")]
    pub page: usize,
    #[serde(default = "default_per_page")]
    pub per_page: usize,
}

fn first_page() -> usize {
    1
}

fn default_per_page() -> usize {
    50
}

impl Default for MemberQuery {
    fn default() -> Self {
        Self {
            min_votes: 0,
            page: first_page(),
            per_page: default_per_page(),
        }
    }
}

pub const MAX_PER_PAGE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberPage {
    pub community: String,
    /// Members matching the filter across all pages.
    pub total: usize,
    pub page: usize,
    pub per_page: usize,
    pub members: Vec<MemberProfile>,
}

/// Members of `community` (anyone who voted there), most active first and
/// then by user id.
pub fn list_members(
    stats: &UserStats,
    karma: &HashMap<String, KarmaRecord>,
    community: &str,
    query: MemberQuery,
) -> Result<MemberPage> {
    if query.page == 0 || query.per_page == 0 || query.per_page > MAX_PER_PAGE {
        return Err(Error::validation(format!(
            "page must be at least 1 and per_page in 1..={MAX_PER_PAGE}"
        )));
    }
    let mut rows: Vec<(&String, VoteCounts)> = stats
        .users()
        .filter_map(|(u, a)| a.by_community.get(community).map(|c| (u, *c)))
        .filter(|(_, c)| c.total() > 0 && c.total() >= query.min_votes)
        .collect();
    rows.sort_by(|a, b| b.1.total().cmp(&a.1.total()).then_with(|| a.0.cmp(b.0)));
    let total = rows.len();
    let members = rows
        .into_iter()
        .skip((query.page - 1).saturating_mul(query.per_page))
        .take(query.per_page)
        .map(|(u, c)| {
            let k = karma.get(u).cloned().unwrap_or_default();
            let activity = stats.activity(u).expect("listed users have activity");
            MemberProfile {
                user_id: u.clone(),
                up: c.up,
                down: c.down,
                total: c.total(),
                communities: activity
                    .by_community
                    .iter()
                    .filter(|(_, c)| c.total() > 0)
                    .map(|(k, v)| (k.clone(), *v))
                    .collect(),
                link_karma: k.link_karma,
                comment_karma: k.comment_karma,
                is_moderator: k.is_moderator,
                is_employee: k.is_employee,
                has_gold: k.has_gold,
            }
        })
        .collect();
    Ok(MemberPage {
        community: community.to_string(),
        total,
        page: query.page,
        per_page: query.per_page,
        members,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Direction, VoteRecord};
    use chrono::Utc;

    fn stats() -> UserStats {
        let mut s = UserStats::default();
        let t = Utc::now();
        for i in 0..10 {
            let d = if i < 7 { Direction::Up } else { Direction::Down };
            s.record(&VoteRecord::new("mia", format!("p{i}"), d, t, "c"));
        }
        for i in 0..4 {
            s.record(&VoteRecord::new("abe", format!("p{i}"), Direction::Up, t, "c"));
        }
        s.record(&VoteRecord::new("abe", "q", Direction::Down, t, "other"));
        s.record(&VoteRecord::new("zed", "q", Direction::Up, t, "other"));
        s
    }

    #[test]
    fn counts_order_and_filter() {
        let page = list_members(&stats(), &HashMap::new(), "c", MemberQuery::default()).unwrap();
        let ids: Vec<&str> = page.members.iter().map(|m| m.user_id.as_str()).collect();
        assert_eq!(ids, ["mia", "abe"]);
        assert_eq!((page.members[0].up, page.members[0].down), (7, 3));
        assert_eq!(page.members[1].communities.len(), 2);
        assert_eq!(page.members[1].link_karma, None);
        let q = MemberQuery { min_votes: 5, ..MemberQuery::default() };
        assert_eq!(list_members(&stats(), &HashMap::new(), "c", q).unwrap().total, 1);
        assert!(list_members(&stats(), &HashMap::new(), "empty", MemberQuery::default()).unwrap().members.is_empty());
    }

    #[test]
    fn pagination() {
        let q = MemberQuery { page: 2, per_page: 1, min_votes: 0 };
        let page = list_members(&stats(), &HashMap::new(), "c", q).unwrap();
        assert_eq!(page.total, 2);
        assert_eq!(page.members[0].user_id, "abe");
        let q = MemberQuery { page: 0, ..q };
        assert!(list_members(&stats(), &HashMap::new(), "c", q).is_err());
    }

    #[test]
    fn karma_csv_with_blanks() {
        let raw = "user_id,link_karma,comment_karma,is_moderator,is_employee,has_gold\nmia,10,,true,,false\n";
        let k = read_karma(Path::new("k.csv"), raw.as_bytes()).unwrap();
        assert_eq!(k["mia"].link_karma, Some(10));
        assert_eq!(k["mia"].comment_karma, None);
        assert_eq!(k["mia"].is_moderator, Some(true));
    }
}
