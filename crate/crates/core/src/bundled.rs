//! Feeders shipped with the crate.
//!
//! `surrogate47` is a stand-in for a 47-bus utility feeder: the inverter
//! placement (buses 2, 16, 18, 21, 22) and ratings (300/80/300/400/200 kW)
//! follow the published test case, but the line impedances and loads are
//! synthetic.

use crate::network::{FeederFile, NetworkModel};

pub const SURROGATE_47_JSON: &str = include_str!("../data/surrogate47.json");
pub const SIX_BUS_JSON: &str = include_str!("../data/six_bus.json");
pub const THREE_BUS_JSON: &str = include_str!("../data/three_bus.json");

fn parse(text: &str) -> NetworkModel {
    FeederFile::parse(text)
        .and_then(FeederFile::into_model)
        .expect("bundled feeder is valid")
}

pub fn surrogate_47() -> NetworkModel {
    parse(SURROGATE_47_JSON)
}

pub fn six_bus() -> NetworkModel {
    parse(SIX_BUS_JSON)
}

pub fn three_bus() -> NetworkModel {
    parse(THREE_BUS_JSON)
}

/// All bundled feeders with their names.
pub fn all() -> Vec<(&'static str, NetworkModel)> {
    vec![
        ("surrogate47", surrogate_47()),
        ("six_bus", six_bus()),
        ("three_bus", three_bus()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::BusId;

    #[test]
    fn surrogate_matches_published_placement() {
        let m = surrogate_47();
        assert_eq!(m.n_buses(), 47);
        let buses: Vec<usize> = m.inverters().iter().map(|i| i.bus.index()).collect();
        assert_eq!(buses, vec![2, 16, 18, 21, 22]);
        let kw: Vec<f64> = m.inverters().iter().map(|i| m.pu_to_kw(i.p_rated)).collect();
        assert_eq!(kw, vec![300.0, 80.0, 300.0, 400.0, 200.0]);
        assert_eq!(m.topological_order()[0], BusId::ROOT);
    }
}
