use std::fmt::Write;

pub const TRAIN_CSV_HEADER: &str = "update,env_steps,team,mean_return,policy_loss,value_loss,entropy";
pub const EPISODES_CSV_HEADER: &str = "episode,env_steps,team,return,length,quota_filled";

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateRecord {
    pub update: u64,
    pub env_steps: u64,
    pub team: String,
    /// Rolling mean over recent episodes; `None` before the first one ends.
    pub mean_return: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode: u64,
    /// Env steps elapsed when the episode ended.
    pub env_steps: u64,
    pub team: String,
    pub episode_return: f64,
    pub length: usize,
    /// HMT only.
    pub quota_filled: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub updates: Vec<UpdateRecord>,
    pub episodes: Vec<EpisodeRecord>,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{TRAIN_CSV_HEADER}\n");
        for r in &self.updates {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.update,
                r.env_steps,
                r.team,
                opt(r.mean_return),
                r.policy_loss,
                r.value_loss,
                r.entropy
            );
        }
        s
    }

    pub fn episodes_csv(&self) -> String {
        let mut s = format!("{EPISODES_CSV_HEADER}\n");
        for e in &self.episodes {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                e.episode,
                e.env_steps,
                e.team,
                e.episode_return,
                e.length,
                opt(e.quota_filled)
            );
        }
        s
    }

    /// Mean return of the first `k` completed episodes.
    pub fn first_mean(&self, k: usize) -> Option<f64> {
        mean(self.episodes.iter().take(k).map(|e| e.episode_return))
    }

    /// Mean return of the last `k` completed episodes.
    pub fn last_mean(&self, k: usize) -> Option<f64> {
        let skip = self.episodes.len().saturating_sub(k);
        mean(self.episodes.iter().skip(skip).map(|e| e.episode_return))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = it.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| s / n as f64)
}
