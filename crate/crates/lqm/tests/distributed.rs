mod common;

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Duration;

use common::*;
use fedgl_core::path::{PathEngine, PathOptions, PathSpec};
use fedgl_core::{
    attach_lipschitz, bcd_drive, edpp_screen_step_blocks, fista_solve, strong_rule_mask, LocalBackend, LocalEngine, ScreenMode, SiteShard,
    SolveOptions, SolverKind,
};
use fedgl_lqm::*;

fn engine(inst: &Instance, counts: &[usize]) -> (DistributedEngine, Vec<fedgl_lqm::cluster::SiteHandle>) {
    let (s, h) = spawn_in_process(shards(inst, counts));
    (DistributedEngine::new(s, &inst.partition).unwrap(), h)
}

fn finish(mut e: DistributedEngine, h: Vec<fedgl_lqm::cluster::SiteHandle>) {
    e.session_mut().shutdown();
    drop(e);
    join_sites(h).unwrap();
}

fn all_groups(e: &DistributedEngine) -> Vec<usize> {
    (0..e.partition().group_count()).collect()
}

#[test]
fn dsr_on_identity_split_across_two_sites() {
    let inst = identity4();
    let (mut e, h) = engine(&inst, &[2, 2]);
    let m = dsr_mask(&mut e, 3.0).unwrap();
    assert_eq!((m.kept.clone(), m.discarded.clone()), (vec![0], vec![1]));
    finish(e, h);
}

#[test]
fn dsr_single_site_equals_strong_rule() {
    let inst = random_instance(3, 60, 40, 8);
    let (mut e, h) = engine(&inst, &[60]);
    let p = attach_lipschitz(&inst.design, inst.partition.clone()).unwrap();
    let c = fedgl_core::group_correlations(&inst.design, &p).unwrap();
    let (lmax, _) = fedgl_core::lambda_max(&c, &p).unwrap();
    for k in 1..10 {
        let lambda = lmax * (1.0 - 0.09 * k as f64);
        assert_eq!(dsr_mask(&mut e, lambda).unwrap(), strong_rule_mask(&c, &p, lambda, lmax).unwrap());
    }
    finish(e, h);
}

#[test]
fn dsr_three_sites_match_single_node_away_from_the_edge() {
    for seed in 0..5 {
        let inst = random_instance(100 + seed, 60, 40, 8);
        let (mut e, h) = engine(&inst, &[20, 25, 15]);
        let p = attach_lipschitz(&inst.design, inst.partition.clone()).unwrap();
        let c = fedgl_core::group_correlations(&inst.design, &p).unwrap();
        let (lmax, _) = fedgl_core::lambda_max(&c, &p).unwrap();
        let mut compared = 0;
        for k in 0..20 {
            let lambda = lmax * (1.0 - 0.9 * k as f64 / 19.0);
            let single = strong_rule_mask(&c, &p, lambda, lmax).unwrap();
            if single.margins.iter().any(|m| m.abs() <= 1e-8) {
                continue;
            }
            let dist = dsr_mask(&mut e, lambda).unwrap();
            assert_eq!(dist.kept, single.kept, "seed {seed} k {k}");
            compared += 1;
        }
        assert!(compared >= 15);
        finish(e, h);
    }
}

fn path_opts(count: usize, screen: ScreenMode) -> PathOptions {
    PathOptions {
        spec: PathSpec { count, lmin_ratio: 0.1 },
        screen,
        ..PathOptions::default()
    }
}

#[test]
fn single_point_path_is_the_zero_model() {
    let inst = random_instance(5, 30, 12, 4);
    let (mut e, h) = engine(&inst, &[10, 20]);
    let pm = ddpp_gl_path(&mut e, &path_opts(1, ScreenMode::Ddpp)).unwrap();
    assert_eq!(pm.models.len(), 1);
    assert!(pm.models[0].is_zero());
    finish(e, h);
}

#[test]
fn single_site_ddpp_masks_equal_single_node_steps() {
    let inst = random_instance(9, 50, 30, 6);
    let (mut e, h) = engine(&inst, &[50]);
    let pm = ddpp_gl_path(&mut e, &path_opts(15, ScreenMode::Ddpp)).unwrap();
    let mut local = LocalEngine::new(&inst.design, &inst.partition, SolverKind::Bcd).unwrap();
    let ctx = local.context().unwrap();
    let blocks = inst.design.row_blocks(&[50]).unwrap();
    for k in 1..pm.lambdas.len() {
        let step = edpp_screen_step_blocks(&blocks, local.partition(), &ctx, pm.models[k - 1].values(), pm.lambdas[k - 1], pm.lambdas[k]).unwrap();
        let mut expected = step.mask.clone();
        expected.readmit(&pm.repairs[k]);
        assert_eq!(pm.masks[k].kept, expected.kept, "k {k}");
        assert_eq!(pm.masks[k].margins, step.mask.margins, "k {k}");
    }
    finish(e, h);
}

#[test]
fn distributed_path_equals_blockwise_local_path_bit_for_bit() {
    let inst = random_instance(21, 60, 40, 8);
    let counts = [22, 20, 18];
    let (mut e, h) = engine(&inst, &counts);
    let opts = path_opts(12, ScreenMode::Ddpp);
    let dist = ddpp_gl_path(&mut e, &opts).unwrap();
    let mut local = LocalEngine::with_blocks(&inst.design, &inst.partition, SolverKind::Bcd, &counts).unwrap();
    let single = fedgl_core::run_path_with(&mut local, &opts).unwrap();
    assert_eq!(dist.lambdas, single.lambdas);
    assert_eq!(dist.models, single.models);
    assert_eq!(dist.masks, single.masks);
    assert_eq!(dist.objectives, single.objectives);
    finish(e, h);
}

#[test]
fn three_site_ddpp_path_is_safe_and_accurate() {
    for seed in 0..3 {
        let inst = random_instance(200 + seed, 60, 40, 8);
        let (mut e, h) = engine(&inst, &[20, 20, 20]);
        let pm = ddpp_gl_path(&mut e, &path_opts(20, ScreenMode::Ddpp)).unwrap();
        let p = attach_lipschitz(&inst.design, inst.partition.clone()).unwrap();
        for k in 1..pm.lambdas.len() {
            let oracle = fista_solve(&inst.design, &p, pm.lambdas[k], 1e-12).unwrap();
            let mask = &pm.masks[k];
            if mask.safe {
                for &g in &mask.discarded {
                    let block = oracle.x.block(g, &p);
                    assert!(block.iter().all(|&v| v.abs() < 1e-6), "seed {seed} k {k}: group {g} discarded but active {block:?}");
                }
            }
            let cold = naive_objective(&inst.design, &p, oracle.x.values(), pm.lambdas[k]);
            let warm = naive_objective(&inst.design, &p, pm.models[k].values(), pm.lambdas[k]);
            assert!(rel_diff(warm, cold) <= 1e-6, "seed {seed} k {k}: {warm} vs {cold}");
        }
        finish(e, h);
    }
}

#[test]
fn dbcd_above_lambda_max_returns_zero_after_one_epoch() {
    let inst = random_instance(31, 40, 20, 5);
    let (mut e, h) = engine(&inst, &[15, 25]);
    let lmax = e.context().unwrap().lambda_max;
    let kept = all_groups(&e);
    let sol = dbcd_solve(&mut e, lmax * 1.5, &kept, &[0.0; 20], &SolveOptions::default()).unwrap();
    assert!(sol.x.is_zero());
    assert_eq!(sol.epochs_used, 1);
    finish(e, h);
}

#[test]
fn single_site_dbcd_replays_the_bcd_iterate_sequence() {
    let inst = random_instance(41, 40, 24, 6);
    let (mut e, h) = engine(&inst, &[40]);
    let lmax = e.context().unwrap().lambda_max;
    let lambda = 0.3 * lmax;
    let kept = all_groups(&e);
    let opts = SolveOptions {
        seed: 17,
        ..SolveOptions::default()
    };
    e.session_mut().start_tap();
    let dist = dbcd_solve(&mut e, lambda, &kept, &[0.0; 24], &opts).unwrap();
    let frames = e.session_mut().take_tap().unwrap().decoded().unwrap();
    let sent: Vec<Vec<f64>> = frames
        .into_iter()
        .filter(|f| f.msg_type == MsgType::Query && f.op == Op::ApplyBlock as u16)
        .map(|f| f.payload)
        .collect();

    let p = e.partition().clone();
    let mut seen: Vec<Vec<f64>> = Vec::new();
    let mut record = |g: usize, block: &[f64]| {
        let mut v = vec![g as f64];
        v.extend_from_slice(block);
        seen.push(v);
    };
    let mut backend = LocalBackend::new(inst.design.row_blocks(&[40]).unwrap(), &p);
    let local = bcd_drive(&mut backend, &p, lambda, &kept, &[0.0; 24], &opts, Some(&mut record)).unwrap();
    assert!(!seen.is_empty());
    assert_eq!(sent, seen);
    assert_eq!(dist, local);
    finish(e, h);
}

#[test]
fn three_site_dbcd_matches_fista_and_keeps_residuals_exact() {
    for seed in 0..3 {
        let inst = random_instance(300 + seed, 60, 40, 8);
        let (mut e, h) = engine(&inst, &[21, 19, 20]);
        let lambda = 0.3 * e.context().unwrap().lambda_max;
        let kept = all_groups(&e);
        let opts = SolveOptions {
            gap_tol: Some(1e-12),
            seed,
            ..SolveOptions::default()
        };
        let sol = dbcd_solve(&mut e, lambda, &kept, &[0.0; 40], &opts).unwrap();
        assert!(sol.converged);
        assert!(e.audit_residual().unwrap() <= 1e-10);
        let p = attach_lipschitz(&inst.design, inst.partition.clone()).unwrap();
        let oracle = fista_solve(&inst.design, &p, lambda, 1e-13).unwrap();
        let a = naive_objective(&inst.design, &p, sol.x.values(), lambda);
        let b = naive_objective(&inst.design, &p, oracle.x.values(), lambda);
        assert!(rel_diff(a, b) <= 1e-8, "seed {seed}: {a} vs {b}");
        finish(e, h);
    }
}

#[test]
fn residual_audit_holds_at_every_epoch_boundary() {
    let inst = random_instance(51, 48, 30, 6);
    let (mut e, h) = engine(&inst, &[16, 16, 16]);
    let lambda = 0.2 * e.context().unwrap().lambda_max;
    let kept = all_groups(&e);
    let mut warm = vec![0.0; 30];
    for epoch in 0..8 {
        let opts = SolveOptions {
            max_epochs: 1,
            seed: epoch,
            ..SolveOptions::default()
        };
        let sol = dbcd_solve(&mut e, lambda, &kept, &warm, &opts).unwrap();
        assert!(e.audit_residual().unwrap() <= 1e-10, "epoch {epoch}");
        warm = sol.x.into_values();
    }
    finish(e, h);
}

#[test]
fn partials_never_have_a_shard_length() {
    // n_i chosen apart from every aggregate length (P, P + 2, p_g, p_g^2, 2, 1, 0)
    let counts = [23, 19, 18];
    let inst = uniform_sized(61, 60, &[5, 5, 5, 5, 5, 5, 5, 5]);
    let (mut e, h) = engine(&inst, &counts);
    e.session_mut().start_tap();
    let lmax = e.context().unwrap().lambda_max;
    dsr_mask(&mut e, 0.5 * lmax).unwrap();
    ddpp_gl_path(&mut e, &path_opts(10, ScreenMode::Ddpp)).unwrap();
    for slot in [Slot::Theta, Slot::V1, Slot::V2, Slot::V2Perp, Slot::Residual] {
        e.sq_norm(slot).unwrap();
    }
    let frames = e.session_mut().take_tap().unwrap().decoded().unwrap();
    let forbidden: HashSet<usize> = counts.into_iter().collect();
    let mut partials = 0;
    for f in &frames {
        if f.msg_type == MsgType::Partial {
            partials += 1;
            assert!(!forbidden.contains(&f.payload.len()), "op {} sent {} values", f.op, f.payload.len());
        }
    }
    assert!(partials > 100);
    finish(e, h);
}

#[test]
fn transcripts_are_deterministic_across_runs_and_transports() {
    let inst = random_instance(71, 30, 16, 4);
    let run = |tcp: bool| {
        let sh = shards(&inst, &[10, 10, 10]);
        let (s, h) = if tcp { spawn_tcp_local(sh).unwrap() } else { spawn_in_process(sh) };
        let mut s = s;
        s.start_tap();
        let mut e = DistributedEngine::new(s, &inst.partition).unwrap();
        ddpp_gl_path(&mut e, &path_opts(6, ScreenMode::Ddpp)).unwrap();
        let t = e.session_mut().take_tap().unwrap();
        finish(e, h);
        t
    };
    let a = run(false);
    assert_eq!(a, run(false));
    assert_eq!(a, run(true));
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/dsr_three_sites.lqm")
}

#[test]
fn dsr_exchange_matches_golden_transcript() {
    let inst = uniform_sized(81, 24, &[2, 3, 3]);
    let (s, h) = spawn_in_process(shards(&inst, &[8, 9, 7]));
    let mut s = s;
    s.start_tap();
    let mut e = DistributedEngine::new(s, &inst.partition).unwrap();
    let lmax = e.context().unwrap().lambda_max;
    dsr_mask(&mut e, 0.6 * lmax).unwrap();
    let got = e.session_mut().take_tap().unwrap();
    finish(e, h);

    let path = golden_path();
    if std::env::var_os("LQM_BLESS").is_some() {
        std::fs::write(&path, got.to_bytes()).unwrap();
    }
    let golden = Transcript::from_bytes(&std::fs::read(&path).expect("golden transcript missing; rerun with LQM_BLESS=1")).unwrap();
    assert_eq!(got.frames.len(), golden.frames.len());
    for (i, (a, b)) in got.frames.iter().zip(&golden.frames).enumerate() {
        assert_eq!(a, b, "frame {i} differs");
    }
}

#[test]
fn lost_site_aborts_with_partial_progress() {
    let inst = random_instance(91, 45, 24, 6);
    let mut links: Vec<Box<dyn Link>> = Vec::new();
    let mut handles = Vec::new();
    for (i, shard) in shards(&inst, &[15, 15, 15]).into_iter().enumerate() {
        let (m, site) = channel_pair(i as u16);
        links.push(Box::new(m));
        let drop_after = if i == 2 { Some(4000) } else { None };
        let site = FaultyLink::new(site, drop_after, Duration::ZERO);
        let shard: SiteShard = shard;
        handles.push(std::thread::spawn(move || run_site(i as u16, shard, site)));
    }
    let s = Session::new(links, TransportKind::InProcess).with_timeout(Duration::from_millis(300));
    let mut e = DistributedEngine::new(s, &inst.partition).unwrap();
    let abort = ddpp_gl_path(&mut e, &path_opts(40, ScreenMode::Ddpp)).unwrap_err();
    assert!(matches!(abort.error, LqmError::Timeout { ref missing } if missing == &vec![2]), "{:?}", abort.error);
    let done = abort.completed.expect("some lambdas finished");
    assert!(done.partial);
    assert!(done.lambdas.len() >= 2 && done.lambdas.len() < 40);
    e.session_mut().shutdown();
    drop(e);
    join_sites(handles).unwrap();
}

#[test]
fn dbcd_abort_returns_unconverged_iterate() {
    let inst = random_instance(92, 30, 12, 4);
    let mut links: Vec<Box<dyn Link>> = Vec::new();
    let mut handles = Vec::new();
    for (i, shard) in shards(&inst, &[15, 15]).into_iter().enumerate() {
        let (m, site) = channel_pair(i as u16);
        links.push(Box::new(m));
        let site = FaultyLink::new(site, if i == 0 { Some(30) } else { None }, Duration::ZERO);
        handles.push(std::thread::spawn(move || run_site(i as u16, shard, site)));
    }
    let s = Session::new(links, TransportKind::InProcess).with_timeout(Duration::from_millis(200));
    let mut e = DistributedEngine::new(s, &inst.partition).unwrap();
    let lambda = 0.1 * e.context().unwrap().lambda_max;
    let kept = all_groups(&e);
    let abort = dbcd_solve(&mut e, lambda, &kept, &[0.0; 12], &SolveOptions::default()).unwrap_err();
    assert!(!abort.partial.converged);
    assert!(abort.partial.objective.is_nan());
    e.session_mut().shutdown();
    drop(e);
    join_sites(handles).unwrap();
}

#[test]
fn master_plan_runs_end_to_end() {
    let inst = random_instance(93, 36, 18, 6);
    let plan = MasterPlan {
        group_sizes: inst.partition.sizes(),
        weights: inst.partition.weights().to_vec(),
        standardize: false,
        lambda_count: 8,
        lmin_ratio: 0.2,
        screen: "ddpp".into(),
        gap_tol: 1e-8,
        seed: 3,
        max_epochs: 10_000,
    };
    let (s, h) = spawn_tcp_local(shards(&inst, &[12, 12, 12])).unwrap();
    let pm = run_master(s, &plan).unwrap();
    join_sites(h).unwrap();
    assert_eq!(pm.lambdas.len(), 8);
    assert_eq!(pm.provenance.topology, "lqm 3 sites over tcp");
    let local = fedgl_core::run_path(&inst.design, &inst.partition, SolverKind::Bcd, &plan.path_options().unwrap()).unwrap();
    for k in 0..8 {
        assert!(rel_diff(pm.objectives[k], local.objectives[k]) <= 1e-7);
    }
}

#[test]
fn distributed_standardization_matches_single_node() {
    let inst = random_instance(94, 30, 12, 4);
    let (s, h) = spawn_in_process(shards(&inst, &[10, 20]));
    let mut e = DistributedEngine::new(s, &inst.partition).unwrap();
    let dist = e.standardize().unwrap();
    let blocks = inst.design.row_blocks(&[10, 20]).unwrap();
    let single = fedgl_core::standardize::Standardization::from_blocks(&blocks).unwrap();
    assert_eq!(dist, single);
    let corr = e.context().unwrap().correlation;
    let (std_design, _) = fedgl_core::standardize::standardize(&inst.design).unwrap();
    let expect = fedgl_core::correlation_vector(&std_design.row_blocks(&[10, 20]).unwrap()).unwrap();
    for (a, b) in corr.iter().zip(&expect) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
    finish(e, h);
}
