use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Bus, Generator, Line, Load, NetworkCase, Shunt};

/// Build a series-impedance line with a symmetric angle limit (radians).
pub fn simple_line(id: i64, from: i64, to: i64, r: f64, x: f64, thermal: f64, theta_max: f64, risk: f64) -> Line {
    let z2 = r * r + x * x;
    Line {
        id,
        from_bus: from,
        to_bus: to,
        g: r / z2,
        b: -x / z2,
        g_fr: 0.0,
        g_to: 0.0,
        b_fr: 0.0,
        b_to: 0.0,
        tap_mag: 1.0,
        tap_re: 1.0,
        tap_im: 0.0,
        thermal,
        theta_min: -theta_max,
        theta_max,
        risk,
    }
}

/// Small random connected grid: a spanning tree over `n_buses` plus extra
/// lines up to `n_lines`, one generator at bus 1 (and sometimes a second),
/// loads everywhere else.
pub fn random_grid(seed: u64, n_buses: usize, n_lines: usize) -> NetworkCase {
    assert!(n_buses >= 2 && n_lines + 1 >= n_buses);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let buses = (1..=n_buses as i64)
        .map(|id| Bus {
            id,
            v_min: 0.95,
            v_max: 1.05,
        })
        .collect();
    let mut pairs: Vec<(i64, i64)> = (2..=n_buses as i64)
        .map(|j| (rng.gen_range(1..j), j))
        .collect();
    let mut guard = 0;
    while pairs.len() < n_lines && guard < 1000 {
        guard += 1;
        let a = rng.gen_range(1..=n_buses as i64);
        let b = rng.gen_range(1..=n_buses as i64);
        if a != b {
            pairs.push((a.min(b), a.max(b)));
        }
    }
    let lines = pairs
        .iter()
        .enumerate()
        .map(|(k, &(f, t))| {
            let mut l = simple_line(
                k as i64 + 1,
                f,
                t,
                rng.gen_range(0.01..0.05),
                rng.gen_range(0.05..0.2),
                rng.gen_range(0.2..1.2),
                30f64.to_radians(),
                rng.gen_range(0.5..2.0),
            );
            l.b_fr = rng.gen_range(0.0..0.02);
            l.b_to = l.b_fr;
            l
        })
        .collect();
    let loads: Vec<Load> = (2..=n_buses as i64)
        .map(|bus| Load {
            bus,
            p_base: rng.gen_range(0.1..0.5),
            q_base: rng.gen_range(0.0..0.15),
        })
        .collect();
    let total: f64 = loads.iter().map(|d| d.p_base).sum();
    let mut gens = vec![Generator {
        bus: 1,
        p_max: total * rng.gen_range(0.7..1.4),
        q_min: -1.0,
        q_max: 1.0,
    }];
    if n_buses > 2 && rng.gen_bool(0.5) {
        gens.push(Generator {
            bus: n_buses as i64,
            p_max: total * rng.gen_range(0.1..0.5),
            q_min: -0.5,
            q_max: 0.5,
        });
    }
    let shunts = if rng.gen_bool(0.5) {
        vec![Shunt {
            bus: rng.gen_range(2..=n_buses as i64),
            gs: rng.gen_range(0.0..0.02),
            bs: rng.gen_range(0.0..0.1),
        }]
    } else {
        Vec::new()
    };
    NetworkCase::from_parts(format!("random{seed}"), 100.0, buses, lines, gens, loads, shunts)
        .expect("generated grid is consistent")
}
