//! Scratch: handcrafted controller sanity check on the desk-scale task.

use stlrl::config::parse_config;
use stlrl::eval::evaluate;

const DESK: &str = "\
formula = G[0,45](F[0,4](3.5 <= x0 <= 4.5 & 3.5 <= x1 <= 4.5) & F[0,4](3.5 <= x0 <= 4.5 & 1.5 <= x1 <= 2.5))\n\
l_stl = -4\n\
delta = 0.5\n\
episode_steps = 50\n\
";

fn wrap(a: f64) -> f64 {
    (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI
}

#[test]
fn handcrafted_oscillation_controller() {
    let cfg = parse_config(DESK).unwrap();
    let prep = cfg.prepare().unwrap();
    assert_eq!(prep.info.tau, 5);

    let mut policy = |z: &[f64]| -> Vec<f64> {
        let x0 = z[0] + 2.5;
        let x1 = z[1] + 2.5;
        let h = z[2];
        let f1 = z[3];
        let f2 = z[4];
        // chase the less recently visited region (flags decay over time)
        let (tx, ty) = if f2 <= f1 { (4.0, 2.1) } else { (4.0, 3.9) };
        let (dx, dy) = (tx - x0, ty - x1);
        let dist = (dx * dx + dy * dy).sqrt();
        let bearing = dy.atan2(dx);
        // drive backward rather than turn around
        let err_fwd = wrap(bearing - h);
        let err_bwd = wrap(bearing - h - std::f64::consts::PI);
        let (err, sign) = if err_fwd.abs() <= err_bwd.abs() {
            (err_fwd, 1.0)
        } else {
            (err_bwd, -1.0)
        };
        let steer = (err / 0.5).clamp(-1.0, 1.0);
        let drive = if err.abs() > 1.2 {
            0.0
        } else {
            sign * (dist / 0.5).min(1.0) * err.cos()
        };
        vec![drive.clamp(-1.0, 1.0), steer]
    };

    // tight bang-bang oscillation: lock heading to π/2, flip drive on flags
    let mut bang = |z: &[f64]| -> Vec<f64> {
        let x0 = z[0] + 2.5;
        let x1 = z[1] + 2.5;
        let h = z[2];
        let f1 = z[3];
        let f2 = z[4];
        let pi = std::f64::consts::PI;
        if f1 <= -0.5 && f2 <= -0.5 {
            // approach phase: chase the region-2 boundary, backward-capable
            let (dx, dy) = (4.0 - x0, 2.45 - x1);
            let dist = (dx * dx + dy * dy).sqrt();
            let bearing = dy.atan2(dx);
            let err_fwd = wrap(bearing - h);
            let err_bwd = wrap(bearing - h - pi);
            let (err, sign) = if err_fwd.abs() <= err_bwd.abs() {
                (err_fwd, 1.0)
            } else {
                (err_bwd, -1.0)
            };
            let steer = (err / 0.5).clamp(-1.0, 1.0);
            let drive = if err.abs() > 1.2 {
                0.0
            } else {
                sign * (dist / 0.5).min(1.0) * err.cos()
            };
            vec![drive.clamp(-1.0, 1.0), steer]
        } else {
            // oscillation: aim exactly at the near boundary of the stale region
            let aim = if f1 <= f2 { 3.5 } else { 2.5 };
            let vy = h.sin().max(0.2) * 0.5;
            let drive = ((aim - x1) / vy).clamp(-1.0, 1.0);
            let tilt = ((4.0 - x0) * 0.4).clamp(-0.15, 0.15) * drive.signum();
            let steer = (wrap(pi / 2.0 + tilt - h) / 0.5).clamp(-1.0, 1.0);
            vec![drive, steer]
        }
    };
    let report = evaluate(
        &prep.plant,
        &prep.spec,
        &prep.info,
        &prep.formula,
        prep.mode,
        &mut bang,
        100,
        cfg.episode_steps,
        cfg.gamma,
        123,
        0,
    );
    println!(
        "bang-bang: mean_stl {:.4} (std {:.4}) success {}/{} best_rho {:.3}",
        report.mean_stl_reward,
        report.std_stl_reward,
        report.success,
        report.episodes,
        report.robustness.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );

    // how often does uniform random exploration satisfy any window?
    {
        use rand::{Rng, SeedableRng};
        use stlrl::tau::WindowedEnv;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(99);
        let episodes = 20000;
        let mut hits = 0u64;
        let mut window_hits = 0u64;
        for _ in 0..episodes {
            let mut env = WindowedEnv::reset(&prep.plant, &prep.spec, &mut rng);
            let mut any = false;
            for _ in 0..cfg.episode_steps {
                let a = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let out = env.step(&a, &mut rng);
                if out.stl_reward > -0.5 {
                    any = true;
                    window_hits += 1;
                }
            }
            hits += any as u64;
        }
        println!(
            "random exploration: {hits}/{episodes} episodes with a satisfied window ({window_hits} windows total)"
        );
    }

    // trace one episode for inspection
    {
        use rand::SeedableRng;
        use stlrl::preprocess::InputBuilder;
        use stlrl::tau::WindowedEnv;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(42);
        let mut env = WindowedEnv::reset(&prep.plant, &prep.spec, &mut rng);
        let mut builder = InputBuilder::new(&prep.plant, &prep.info, prep.mode).unwrap();
        let mut z = builder.start(env.window());
        for k in 0..cfg.episode_steps {
            let a = policy(&z);
            let out = env.step(&a, &mut rng);
            z = builder.next(env.window());
            println!(
                "k={k:2} x=({:5.2},{:5.2},{:5.2}) a=({:5.2},{:5.2}) f=({:4.1},{:4.1}) s={:6.3}",
                out.x_next[0], out.x_next[1], out.x_next[2], a[0], a[1], z[3], z[4], out.stl_reward
            );
        }
    }

    let report = evaluate(
        &prep.plant,
        &prep.spec,
        &prep.info,
        &prep.formula,
        prep.mode,
        &mut policy,
        100,
        cfg.episode_steps,
        cfg.gamma,
        123,
        0,
    );
    println!(
        "handcrafted: mean_stl {:.4} (std {:.4}) mean_r {:.3} success {}/{} best_rho {:.3}",
        report.mean_stl_reward,
        report.std_stl_reward,
        report.mean_reward,
        report.success,
        report.episodes,
        report.robustness.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
}
