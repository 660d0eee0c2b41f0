// Scratch probe for experiment design; not part of the deliverable.
use delayed_oco::base_olo::LearnerKind;
use delayed_oco::geometry::Domain;
use delayed_oco::harness::*;
use delayed_oco::losses::{ComparatorOptions, LinearDraw, LossSpec};

fn setup(
    loss: LossSpec,
    delay: DelayGenerator,
    player: PlayerSpec,
    horizon: usize,
) -> EpisodeSetup {
    EpisodeSetup {
        domain: Domain::ball_origin(2, 1.0).unwrap(),
        loss,
        declared: None,
        delay: DelaySource::Generated(delay),
        player,
        horizon,
        comparator: ComparatorOptions::default(),
        audit: false,
        diagnostics: false,
        nu_override: None,
    }
}

fn first_order(rate: RateKind, skipping: bool) -> PlayerSpec {
    PlayerSpec {
        wrapper: WrapperKind::FirstOrder,
        skipping,
        learner: LearnerKind::Pftrl,
        rate,
        smoothing: None,
    }
}

fn main() {
    let seeds: Vec<u64> = (0..10).collect();

    // --- Criterion 7 probe: skipping on the spike instance, T = 1e4.
    for (name, loss) in [
        (
            "linear-iid",
            LossSpec::Linear {
                scale: 1.0,
                draw: LinearDraw::Iid,
            },
        ),
        (
            "linear-walk",
            LossSpec::Linear {
                scale: 1.0,
                draw: LinearDraw::Walk { step: 0.05 },
            },
        ),
        (
            "quadratic",
            LossSpec::Quadratic {
                lambda: 1.0,
                center_shift: vec![0.4, 0.2],
                spread: 0.3,
                b_scale: 0.0,
            },
        ),
    ] {
        let mut mean_no = 0.0;
        let mut mean_yes = 0.0;
        for &s in &seeds {
            let no = run_episode(
                &setup(
                    loss.clone(),
                    DelayGenerator::Spike,
                    first_order(RateKind::General, false),
                    10_000,
                ),
                s,
            )
            .unwrap();
            let yes = run_episode(
                &setup(
                    loss.clone(),
                    DelayGenerator::Spike,
                    first_order(RateKind::General, true),
                    10_000,
                ),
                s,
            )
            .unwrap();
            mean_no += no.regret;
            mean_yes += yes.regret;
        }
        mean_no /= seeds.len() as f64;
        mean_yes /= seeds.len() as f64;
        println!(
            "skip probe {name}: no-skip {mean_no:.3}, skip {mean_yes:.3}, reduction {:.1}%",
            100.0 * (1.0 - mean_yes / mean_no)
        );
    }

    // --- Criterion 6 probes: slopes.
    let grid: Vec<usize> = (10..=16).map(|e| 1usize << e).collect();
    let seeds: Vec<u64> = (0..10).collect();

    let oco = setup(
        LossSpec::Linear {
            scale: 1.0,
            draw: LinearDraw::Iid,
        },
        DelayGenerator::Constant { delay: 8 },
        first_order(RateKind::General, false),
        0,
    );
    let (_, summaries) = sweep(&oco, &grid, &seeds).unwrap();
    let pts: Vec<(f64, f64)> = summaries
        .iter()
        .map(|s| (s.horizon as f64, s.mean_regret))
        .collect();
    println!("6a W_OCO const-8: {pts:?}");
    println!("  slope {:?}", fit_scaling(&pts).map(|f| f.slope));

    let mut bco = setup(
        LossSpec::Linear {
            scale: 1.0,
            draw: LinearDraw::Iid,
        },
        DelayGenerator::Constant { delay: 8 },
        PlayerSpec {
            wrapper: WrapperKind::Bandit,
            skipping: false,
            learner: LearnerKind::Pftrl,
            rate: RateKind::Bco,
            smoothing: Some(SmoothingKind::BcoConvex),
        },
        0,
    );
    bco.domain = Domain::ball_origin(4, 1.0).unwrap();
    let (_, summaries) = sweep(&bco, &grid, &seeds).unwrap();
    let pts: Vec<(f64, f64)> = summaries
        .iter()
        .map(|s| (s.horizon as f64, s.mean_regret))
        .collect();
    println!("6b W_BCO k=4: {pts:?}");
    println!("  slope {:?}", fit_scaling(&pts).map(|f| f.slope));

    let mut tp = setup(
        LossSpec::Linear {
            scale: 1.0,
            draw: LinearDraw::Iid,
        },
        DelayGenerator::Constant { delay: 8 },
        PlayerSpec {
            wrapper: WrapperKind::TwoPoint,
            skipping: false,
            learner: LearnerKind::Pftrl,
            rate: RateKind::TwoPoint,
            smoothing: Some(SmoothingKind::TwoPointConvex),
        },
        0,
    );
    tp.domain = Domain::ball_origin(4, 1.0).unwrap();
    let (_, summaries) = sweep(&tp, &grid, &seeds).unwrap();
    let pts: Vec<(f64, f64)> = summaries
        .iter()
        .map(|s| (s.horizon as f64, s.mean_regret))
        .collect();
    println!("6c W_2p k=4: {pts:?}");
    println!("  slope {:?}", fit_scaling(&pts).map(|f| f.slope));

    let sc = setup(
        LossSpec::Quadratic {
            lambda: 1.0,
            center_shift: vec![0.3, 0.1],
            spread: 0.3,
            b_scale: 0.0,
        },
        DelayGenerator::Constant { delay: 8 },
        first_order(RateKind::StronglyConvex, false),
        0,
    );
    let (_, summaries) = sweep(&sc, &[1 << 12, 1 << 16], &seeds).unwrap();
    let r12 = summaries[0].mean_regret / (4096f64).ln();
    let r16 = summaries[1].mean_regret / (65536f64).ln();
    println!("6d strongly convex: ratio@2^12 {r12:.4}, ratio@2^16 {r16:.4}, factor {:.3}", r16 / r12);

    // --- Criterion 5 probes: pathwise audits at T = 1e3.
    for delay in [
        DelayGenerator::Constant { delay: 10 },
        DelayGenerator::Uniform { max_delay: 50 },
        DelayGenerator::Spike,
    ] {
        let s = setup(
            LossSpec::Linear {
                scale: 1.0,
                draw: LinearDraw::Iid,
            },
            delay.clone(),
            first_order(RateKind::General, false),
            1000,
        );
        let mut worst = f64::NEG_INFINITY;
        for seed in 0..20u64 {
            let t = run_episode(&s, seed).unwrap();
            let bound = bound_first_order_general(1.0, 2.0, t.d_tot, t.horizon);
            worst = worst.max(t.regret / bound);
        }
        println!("5 general {delay:?}: worst regret/bound {worst:.4}");

        let sq = setup(
            LossSpec::Quadratic {
                lambda: 1.0,
                center_shift: vec![0.3, 0.1],
                spread: 0.3,
                b_scale: 0.0,
            },
            delay.clone(),
            first_order(RateKind::StronglyConvex, false),
            1000,
        );
        let mut worst = f64::NEG_INFINITY;
        for seed in 0..20u64 {
            let t = run_episode(&sq, seed).unwrap();
            let fam_g = 1.0 * 2.0; // lambda * D
            let bound =
                bound_first_order_strongly_pftrl(fam_g, 1.0, t.sigma_max, t.d_tot, t.horizon);
            worst = worst.max(t.regret / bound);
        }
        println!("5 sc-pftrl {delay:?}: worst regret/bound {worst:.4}");

        let mut om = setup(
            LossSpec::Quadratic {
                lambda: 1.0,
                center_shift: vec![0.3, 0.1],
                spread: 0.3,
                b_scale: 0.0,
            },
            delay.clone(),
            first_order(RateKind::StronglyConvex, false),
            1000,
        );
        om.player.learner = LearnerKind::Omd;
        let mut worst = f64::NEG_INFINITY;
        for seed in 0..20u64 {
            let t = run_episode(&om, seed).unwrap();
            let fam_g = 1.0 * 2.0;
            let bound = bound_first_order_strongly_omd(fam_g, 1.0, t.sigma_max, t.horizon);
            worst = worst.max(t.regret / bound);
        }
        println!("5 sc-omd {delay:?}: worst regret/bound {worst:.4}");
    }

    // --- Bandit mean-vs-assembled-bound probe at desk scale.
    let mut bco_small = bco.clone();
    bco_small.diagnostics = false;
    bco_small.horizon = 300;
    let mut mean = 0.0;
    let mut bound_val = 0.0;
    for seed in 0..30u64 {
        let t = run_episode(&bco_small, seed).unwrap();
        let family = delayed_oco::losses::LossFamily::build(
            &bco_small.loss,
            bco_small.domain.clone(),
            300,
            seed,
            None,
        )
        .unwrap();
        mean += t.regret;
        bound_val = bound_bandit(&t, &family, false);
    }
    mean /= 30.0;
    println!("bandit mean {mean:.3} vs assembled bound {bound_val:.3}");
}
