use super::network::{CrdFeatures, LegFeatures};
use crate::dynamics::Simulator;
use crate::model::ThrusterCommand;

pub fn leg_features(sim: &Simulator, cmd: &ThrusterCommand, leg: usize) -> LegFeatures {
    let q = sim.legs.q[leg];
    let qd = sim.legs.q_dot[leg];
    let foot = sim.foot_body(leg);
    let knee = sim.knee_body(leg);
    let e = sim.state.euler();
    let w = sim.state.omega;
    let v = sim.state.planar_velocity_body();
    [
        q.x, q.y, q.z, qd.x, qd.y, qd.z, foot.x, foot.y, foot.z, knee.x, knee.y, knee.z, e.x, e.y, e.z, w.x, w.y,
        w.z, v.x, v.y, cmd.v[leg],
    ]
}

pub fn robot_features(sim: &Simulator, cmd: &ThrusterCommand) -> CrdFeatures {
    std::array::from_fn(|i| leg_features(sim, cmd, i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legged::{LeggedController, RaibertConfig};
    use crate::model::{RobotModel, SimConfig};

    #[test]
    fn feature_layout() {
        let m = RobotModel::default();
        let q0 = LeggedController::nominal_posture(&RaibertConfig::trot(&m), &m).unwrap();
        let sim = Simulator::standing(m, SimConfig::default(), q0).unwrap();
        let cmd = ThrusterCommand { v: [0.1, 0.2, 0.3, 0.4] };
        let f = robot_features(&sim, &cmd);
        for i in 0..crate::model::NUM_LEGS {
            assert_eq!(f[i][20], cmd.v[i]);
            assert_eq!(&f[i][0..3], sim.legs.q[i].as_slice());
            let foot = sim.foot_body(i);
            assert_eq!(&f[i][6..9], foot.as_slice());
        }
    }
}
