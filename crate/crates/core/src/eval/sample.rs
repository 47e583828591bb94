use rand::Rng;
use tensorcore::RngStream;

use crate::envs::{EnvKind, RobotSpec, TeamSpec};
use crate::error::{Error, Result};

fn check_size(size: usize) -> Result<()> {
    if size == 0 {
        return Err(Error::InvalidTeam("team size must be at least 1".into()));
    }
    Ok(())
}

/// Teams of `size` robots drawn uniformly with replacement from `pool`.
/// Robots keep their training ids.
pub fn sample_composition_teams(
    pool: &[RobotSpec],
    size: usize,
    count: usize,
    rng: &mut RngStream,
) -> Result<Vec<TeamSpec>> {
    check_size(size)?;
    if pool.is_empty() {
        return Err(Error::InvalidTeam("empty robot pool".into()));
    }
    Ok((0..count)
        .map(|t| {
            let robots = (0..size).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect();
            TeamSpec::new(format!("composition-{size}-{t}"), robots)
        })
        .collect())
}

/// Teams of robots never seen in training: HSN radii from U(0.2, 0.6), HMT
/// capacities from U(0, 1). These robots have no ids.
pub fn sample_new_robot_teams(kind: EnvKind, size: usize, count: usize, rng: &mut RngStream) -> Result<Vec<TeamSpec>> {
    check_size(size)?;
    Ok((0..count)
        .map(|t| {
            let robots = (0..size)
                .map(|_| {
                    let capability = match kind {
                        EnvKind::Hsn => vec![rng.gen_range(0.2..=0.6)],
                        EnvKind::Hmt => vec![rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)],
                    };
                    RobotSpec::new(capability, None)
                })
                .collect();
            TeamSpec::new(format!("new-robots-{size}-{t}"), robots)
        })
        .collect())
}

/// Radius bins used to build the sensor-network training pool.
pub const HSN_BINS: [(f64, f64); 3] = [(0.2, 0.33), (0.33, 0.46), (0.46, 0.6)];

/// Rebuilds a sensor-network training pool the way the shipped one was made:
/// every multiset of 4 bins out of 3 (15 teams), each radius uniform in its
/// bin.
pub fn bin_and_build_hsn_pool(rng: &mut RngStream) -> Vec<TeamSpec> {
    let mut teams = Vec::new();
    for a in 0..3 {
        for b in a..3 {
            for c in b..3 {
                for d in c..3 {
                    let robots = [a, b, c, d]
                        .iter()
                        .map(|&bin| {
                            let (lo, hi) = HSN_BINS[bin];
                            RobotSpec::new(vec![rng.gen_range(lo..=hi)], None)
                        })
                        .collect();
                    teams.push(TeamSpec::new(format!("binned-{a}{b}{c}{d}"), robots));
                }
            }
        }
    }
    teams
}
