use crate::envs::{EnvKind, RobotSpec, TeamSpec};

/// Training teams for material transport as `(concrete, lumber)` capacities,
/// in the order the original table lists them.
const HMT_TEAMS: [[(f64, f64); 4]; 5] = [
    [(0.9, 0.1), (0.7, 0.3), (1.0, 0.0), (0.0, 1.0)],
    [(0.9, 0.1), (0.7, 0.3), (0.0, 1.0), (0.2, 0.8)],
    [(0.8, 0.2), (0.3, 0.7), (0.4, 0.6), (0.7, 0.3)],
    [(1.0, 0.0), (0.0, 1.0), (0.1, 0.9), (0.3, 0.7)],
    [(0.6, 0.4), (0.3, 0.7), (0.7, 0.3), (0.0, 1.0)],
];

/// Sensing radii (m) of the sensor-network training teams.
const HSN_TEAMS: [[f64; 4]; 5] = [
    [0.2191, 0.2946, 0.2608, 0.3668],
    [0.2746, 0.2746, 0.5824, 0.5756],
    [0.3178, 0.3467, 0.5317, 0.6073],
    [0.2007, 0.5722, 0.5153, 0.4622],
    [0.4487, 0.5526, 0.5826, 0.58343],
];

/// The five fixed four-robot training teams. Robots get ids `0..20` in
/// table order.
pub fn make_training_teams(kind: EnvKind) -> Vec<TeamSpec> {
    (0..5)
        .map(|t| {
            let robots = (0..4)
                .map(|r| {
                    let id = Some(4 * t + r);
                    let capability = match kind {
                        EnvKind::Hmt => {
                            let (concrete, lumber) = HMT_TEAMS[t][r];
                            vec![lumber, concrete]
                        }
                        EnvKind::Hsn => vec![HSN_TEAMS[t][r]],
                    };
                    RobotSpec::new(capability, id)
                })
                .collect();
            TeamSpec::new(format!("{kind}-train-{}", t + 1), robots)
        })
        .collect()
}

/// The 20 robots of the training teams, indexed by id.
pub fn training_pool(kind: EnvKind) -> Vec<RobotSpec> {
    make_training_teams(kind).into_iter().flat_map(|t| t.robots).collect()
}
