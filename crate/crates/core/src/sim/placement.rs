use rand::Rng;

use super::scenario::{Scenario, ScenarioError};

/// Node coordinates in meters. The traffic source and sink sit on a
/// horizontal line through the field center, `source_sink_distance` apart;
/// every other node is uniform over the field.
pub fn place_nodes<R: Rng>(scenario: &Scenario, rng: &mut R) -> Result<Vec<(f64, f64)>, ScenarioError> {
    scenario.validate()?;
    if let Some(p) = &scenario.positions {
        return Ok(p.clone());
    }
    let (w, h) = scenario.field;
    let half = scenario.source_sink_distance / 2.0;
    let (cx, cy) = (w / 2.0, h / 2.0);
    let src = scenario.traffic.source.index();
    let dst = scenario.traffic.destination.index();
    let mut out = Vec::with_capacity(scenario.node_count);
    for i in 0..scenario.node_count {
        let p = if i == src {
            (cx - half, cy)
        } else if i == dst {
            (cx + half, cy)
        } else {
            (rng.gen_range(0.0..=w), rng.gen_range(0.0..=h))
        };
        out.push(p);
    }
    Ok(out)
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn two_nodes_are_source_and_sink() {
        let s = Scenario { node_count: 2, ..Scenario::default() };
        let p = place_nodes(&s, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(p.len(), 2);
        assert!((distance(p[0], p[1]) - 350.0).abs() < 1e-9);
        assert_eq!(p[0], (325.0, 500.0));
    }

    #[test]
    fn deterministic_and_in_field() {
        let s = Scenario::default();
        let a = place_nodes(&s, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = place_nodes(&s, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 500);
        assert!(a.iter().all(|&(x, y)| (0.0..=1000.0).contains(&x) && (0.0..=1000.0).contains(&y)));
    }

    #[test]
    fn too_few_nodes_rejected() {
        let s = Scenario { node_count: 1, ..Scenario::default() };
        assert!(place_nodes(&s, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
