use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::Deserialize;

use super::{dedupe_latest, Direction, PostIndex, PostRecord, VoteRecord};
use crate::error::{Error, Result};

const VOTE_COLUMNS: [&str; 5] = ["user_id", "post_id", "direction", "voted_at", "community"];
const POST_COLUMNS: [&str; 7] = [
    "post_id",
    "author_id",
    "community",
    "created_at",
    "nsfw",
    "url_domain",
    "text",
];

/// What happened while loading a corpus. Orphans are not fatal.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub votes_read: usize,
    pub posts_read: usize,
    pub duplicates_collapsed: usize,
    /// Votes whose post has no metadata row. They stay in the vote
    /// collection for statistics but cannot be serialized for training.
    pub orphan_votes: Vec<VoteRecord>,
}

impl LoadReport {
    pub fn orphan_count(&self) -> usize {
        self.orphan_votes.len()
    }
}

#[derive(Deserialize)]
struct RawVote {
    user_id: String,
    post_id: String,
    direction: String,
    voted_at: String,
    community: String,
}

#[derive(Deserialize)]
struct RawPost {
    post_id: String,
    author_id: String,
    community: String,
    created_at: String,
    nsfw: String,
    #[serde(default)]
    url_domain: String,
    #[serde(default)]
    text: String,
}

pub(crate) fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Some(ts.with_timezone(&Utc));
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
        .map(|naive| naive.and_utc())
}

pub(crate) fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn check_header(path: &Path, headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header `{}`, got `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_err(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    parse_err(path, line, err.to_string())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Reads a votes file. Duplicates are *not* collapsed here.
pub fn read_votes_from<R: Read>(path: &Path, reader: R) -> Result<Vec<VoteRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    check_header(path, &headers, &VOTE_COLUMNS)?;

    let mut votes = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let raw: RawVote = row
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        let direction: Direction = raw
            .direction
            .parse()
            .map_err(|e: Error| parse_err(path, line, e.to_string()))?;
        let voted_at = parse_timestamp(&raw.voted_at).ok_or_else(|| {
            parse_err(path, line, format!("bad voted_at timestamp `{}`", raw.voted_at))
        })?;
        if raw.user_id.is_empty() || raw.post_id.is_empty() {
            return Err(parse_err(path, line, "user_id and post_id must be non-empty"));
        }
        votes.push(VoteRecord {
            user_id: raw.user_id,
            post_id: raw.post_id,
            direction,
            voted_at,
            community: raw.community,
        });
    }
    Ok(votes)
}

pub fn read_posts_from<R: Read>(path: &Path, reader: R) -> Result<Vec<PostRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    check_header(path, &headers, &POST_COLUMNS)?;

    let mut seen = HashSet::new();
    let mut posts = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let raw: RawPost = row
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        let created_at = parse_timestamp(&raw.created_at).ok_or_else(|| {
            parse_err(path, line, format!("bad created_at timestamp `{}`", raw.created_at))
        })?;
        let nsfw = match raw.nsfw.trim().to_ascii_lowercase().as_str() {
            "true" => true,
            "false" => false,
            other => return Err(parse_err(path, line, format!("nsfw must be true/false, got `{other}`"))),
        };
        if !seen.insert(raw.post_id.clone()) {
            return Err(parse_err(path, line, format!("duplicate post_id `{}`", raw.post_id)));
        }
        posts.push(PostRecord {
            post_id: raw.post_id,
            author_id: raw.author_id,
            community: raw.community,
            created_at,
            nsfw,
            url_domain: raw.url_domain.trim().to_string(),
            text: raw.text,
        });
    }
    Ok(posts)
}

pub fn load_votes(path: impl AsRef<Path>) -> Result<Vec<VoteRecord>> {
    let path = path.as_ref();
    read_votes_from(path, open(path)?)
}

pub fn load_posts(path: impl AsRef<Path>) -> Result<Vec<PostRecord>> {
    let path = path.as_ref();
    read_posts_from(path, open(path)?)
}

/// Loads a votes file and a posts file, collapsing duplicate votes to the
/// latest and reporting orphans.
pub fn load_corpus(
    votes_path: impl AsRef<Path>,
    posts_path: impl AsRef<Path>,
) -> Result<(Vec<VoteRecord>, PostIndex, LoadReport)> {
    let raw_votes = load_votes(votes_path)?;
    let posts = load_posts(posts_path)?;
    let votes_read = raw_votes.len();
    let posts_read = posts.len();
    let (votes, duplicates_collapsed) = dedupe_latest(raw_votes);
    let index = super::index_posts(posts);
    let orphan_votes = votes
        .iter()
        .filter(|v| !index.contains_key(&v.post_id))
        .cloned()
        .collect::<Vec<_>>();
    if !orphan_votes.is_empty() {
        tracing::warn!(orphans = orphan_votes.len(), "votes reference posts without metadata");
    }
    Ok((
        votes,
        index,
        LoadReport {
            votes_read,
            posts_read,
            duplicates_collapsed,
            orphan_votes,
        },
    ))
}

pub fn write_votes_to<W: Write>(writer: W, votes: &[VoteRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(VOTE_COLUMNS)?;
    for v in votes {
        w.write_record([
            v.user_id.as_str(),
            v.post_id.as_str(),
            &v.direction.to_string(),
            &format_timestamp(&v.voted_at),
            v.community.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_posts_to<'a, W: Write>(
    writer: W,
    posts: impl IntoIterator<Item = &'a PostRecord>,
) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(writer);
    w.write_record(POST_COLUMNS)?;
    for p in posts {
        w.write_record([
            p.post_id.as_str(),
            p.author_id.as_str(),
            p.community.as_str(),
            &format_timestamp(&p.created_at),
            if p.nsfw { "true" } else { "false" },
            p.url_domain.as_str(),
            p.text.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_votes(path: impl AsRef<Path>, votes: &[VoteRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_votes_to(file, votes).map_err(|e| csv_err(path, e))
}

pub fn write_posts<'a>(
    path: impl AsRef<Path>,
    posts: impl IntoIterator<Item = &'a PostRecord>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_posts_to(file, posts).map_err(|e| csv_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const VOTES: &str = "user_id,post_id,direction,voted_at,community
u1,p1,up,2023-11-06T10:00:00Z,News
u2,p1,down,2023-11-06T10:05:00Z,News
u3,p2,up,2023-11-06T11:00:00Z,Jokes
";

    #[test]
    fn parses_well_formed_votes() {
        let votes = read_votes_from(Path::new("v.csv"), VOTES.as_bytes()).unwrap();
        assert_eq!(votes.len(), 3);
        assert_eq!(votes[1].direction, Direction::Down);
        assert_eq!(votes[2].community, "Jokes");
    }

    #[test]
    fn malformed_row_names_its_line() {
        let bad = "user_id,post_id,direction,voted_at,community
u1,p1,up,2023-11-06T10:00:00Z,News
u2,p1,meh,2023-11-06T10:05:00Z,News
";
        match read_votes_from(Path::new("v.csv"), bad.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_timestamp_is_a_parse_error() {
        let bad = "user_id,post_id,direction,voted_at,community
u1,p1,up,yesterday,News
";
        assert!(matches!(
            read_votes_from(Path::new("v.csv"), bad.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn wrong_header_rejected() {
        let bad = "user,post,dir,time,sub\n";
        assert!(matches!(
            read_votes_from(Path::new("v.csv"), bad.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn posts_with_quoted_text() {
        let posts = "post_id,author_id,community,created_at,nsfw,url_domain,text
p1,b,News,2023-11-06T09:00:00Z,false,www.washingtonpost.com,\"Glaciers, in \"\"Europe\"\"\nmelting\"
p2,c,Jokes,2023-11-06T09:00:00Z,true,,
";
        let parsed = read_posts_from(Path::new("p.csv"), posts.as_bytes()).unwrap();
        assert_eq!(parsed[0].text, "Glaciers, in \"Europe\"\nmelting");
        assert!(parsed[1].nsfw);
        assert!(parsed[1].url_domain.is_empty());
        assert!(parsed[1].text.is_empty());
    }

    #[test]
    fn duplicate_post_id_rejected() {
        let posts = "post_id,author_id,community,created_at,nsfw,url_domain,text
p1,b,News,2023-11-06T09:00:00Z,false,,a
p1,b,News,2023-11-06T09:00:00Z,false,,b
";
        assert!(matches!(
            read_posts_from(Path::new("p.csv"), posts.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn corpus_collapses_duplicates_and_reports_orphans() {
        let dir = tempfile::tempdir().unwrap();
        let vp = dir.path().join("votes.csv");
        let pp = dir.path().join("posts.csv");
        std::fs::write(
            &vp,
            "user_id,post_id,direction,voted_at,community
u1,p1,up,2023-11-06T10:00:00Z,News
u1,p1,down,2023-11-06T10:30:00Z,News
u2,p9,up,2023-11-06T10:00:00Z,News
",
        )
        .unwrap();
        std::fs::write(
            &pp,
            "post_id,author_id,community,created_at,nsfw,url_domain,text
p1,b,News,2023-11-06T09:00:00Z,false,,hello
",
        )
        .unwrap();
        let (votes, posts, report) = load_corpus(&vp, &pp).unwrap();
        assert_eq!(votes.len(), 2);
        assert_eq!(votes[0].direction, Direction::Down);
        assert_eq!(posts.len(), 1);
        assert_eq!(report.duplicates_collapsed, 1);
        assert_eq!(report.orphan_count(), 1);
        assert_eq!(report.orphan_votes[0].post_id, "p9");
    }

    #[test]
    fn write_then_read_votes() {
        let votes = read_votes_from(Path::new("v.csv"), VOTES.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_votes_to(&mut buf, &votes).unwrap();
        let again = read_votes_from(Path::new("v.csv"), buf.as_slice()).unwrap();
        assert_eq!(votes, again);
    }
}
