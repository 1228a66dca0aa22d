use std::collections::BTreeSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Service settings. Every field can be overridden by an environment
/// variable named `CURA_` plus the upper-cased field name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    pub admin_token: String,
    pub checkpoint: PathBuf,
    pub votes: PathBuf,
    pub posts: PathBuf,
    /// Event logs and status snapshot.
    pub state_dir: PathBuf,
    /// Optional CSV of karma and role flags per user.
    #[serde(default)]
    pub karma: Option<PathBuf>,
    #[serde(default)]
    pub recommended: Vec<RecommendedGroup>,
}

fn default_listen() -> SocketAddr {
    ([127, 0, 0, 1], 8080).into()
}

/// A precomputed curator group offered as a suggestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendedGroup {
    pub community: String,
    pub name: String,
    pub curators: BTreeSet<String>,
}

impl ServiceConfig {
    pub fn from_toml(raw: &str) -> Result<Self> {
        toml::from_str(raw).map_err(|e| Error::InvalidArgument(format!("service config: {e}")))
    }

    /// Reads `path` and applies environment overrides.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml(&raw)?;
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = var("CURA_LISTEN") {
            self.listen = v
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("CURA_LISTEN `{v}`: {e}")))?;
        }
        if let Some(v) = var("CURA_ADMIN_TOKEN") {
            self.admin_token = v;
        }
        for (key, slot) in [
            ("CURA_CHECKPOINT", &mut self.checkpoint),
            ("CURA_VOTES", &mut self.votes),
            ("CURA_POSTS", &mut self.posts),
            ("CURA_STATE_DIR", &mut self.state_dir),
        ] {
            if let Some(v) = var(key) {
                *slot = v.into();
            }
        }
        if let Some(v) = var("CURA_KARMA") {
            self.karma = (!v.is_empty()).then(|| v.into());
        }
        if self.admin_token.trim().is_empty() {
            return Err(Error::InvalidArgument("admin_token must not be empty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    const RAW: &str = r#"
admin_token = "secret"
checkpoint = "model.ckpt"
votes = "votes.csv"
posts = "posts.csv"
state_dir = "state"

[[recommended]]
community = "politics"
name = "moderators"
curators = ["a", "b"]
"#;

    #[test]
    fn env_overrides_file_values() {
        let mut c = ServiceConfig::from_toml(RAW).unwrap();
        assert_eq!(c.listen, default_listen());
        assert_eq!(c.recommended[0].curators.len(), 2);
        let env: HashMap<&str, &str> = [("CURA_ADMIN_TOKEN", "other"), ("CURA_LISTEN", "0.0.0.0:9000")].into();
        c.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(c.admin_token, "other");
        assert_eq!(c.listen.port(), 9000);
    }

    #[test]
    fn empty_token_and_unknown_keys_rejected() {
        let mut c = ServiceConfig::from_toml(RAW).unwrap();
        assert!(c.apply_env(|k| (k == "CURA_ADMIN_TOKEN").then(String::new)).is_err());
        assert!(ServiceConfig::from_toml(&format!("port = 1\n{RAW}")).is_err());
        assert!(ServiceConfig::from_toml(&format!("{RAW}\nport = 1")).is_err());
    }
}
