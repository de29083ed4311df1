use super::FeederTopology;

/// Squared voltages are floored here so overloaded toy feeders stay finite.
const MIN_V_SQUARED: f64 = 1e-4;

/// Balanced steady state: one value per bus, shared by all three phases.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatingPoint {
    pub voltage: Vec<f64>,
    pub current: Vec<f64>,
    pub power_factor: Vec<f64>,
}

impl OperatingPoint {
    /// The nine fundamental channels of a bus: |V|, |I|, PF for phases A–C.
    pub fn channels(&self, bus: usize) -> [f64; 9] {
        let (v, i, pf) = (self.voltage[bus], self.current[bus], self.power_factor[bus]);
        [v, v, v, i, i, i, pf, pf, pf]
    }
}

/// Linearised radial power flow.
///
/// Branch flows are the accumulated downstream loads (lossless), and along
/// each line `|V_child|² = |V_parent|² − 2(r·P + x·Q)`. A bus reports the
/// current and power factor of the flow entering it from upstream (for the
/// substation, the total feeder demand).
pub fn nominal_load_flow(topology: &FeederTopology) -> OperatingPoint {
    let n = topology.num_buses();
    let mut p_down: Vec<f64> = topology.loads().iter().map(|l| l.0).collect();
    let mut q_down: Vec<f64> = topology.loads().iter().map(|l| l.1).collect();
    for &bus in topology.bfs_order().iter().rev() {
        if let Some((parent, _)) = topology.parent(bus) {
            p_down[parent] += p_down[bus];
            q_down[parent] += q_down[bus];
        }
    }

    let mut v2 = vec![1.0; n];
    for &bus in topology.bfs_order() {
        if let Some((parent, line)) = topology.parent(bus) {
            let l = &topology.lines()[line];
            v2[bus] = (v2[parent] - 2.0 * (l.r * p_down[bus] + l.x * q_down[bus])).max(MIN_V_SQUARED);
        }
    }

    let voltage: Vec<f64> = v2.iter().map(|x| x.sqrt()).collect();
    let mut current = vec![0.0; n];
    let mut power_factor = vec![1.0; n];
    for b in 0..n {
        let s = p_down[b].hypot(q_down[b]);
        current[b] = s / voltage[b];
        if s > 0.0 {
            power_factor[b] = p_down[b].abs() / s;
        }
    }
    OperatingPoint {
        voltage,
        current,
        power_factor,
    }
}
