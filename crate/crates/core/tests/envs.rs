use kfchain::envs::*;

#[test]
fn expert_succeeds_on_every_seed() {
    for task in TaskId::ALL {
        for seed in 0..100 {
            let ep = scripted_expert(task, seed).unwrap_or_else(|e| panic!("{e}"));
            assert!(ep.success);
            assert!(ep.stage_flags.iter().all(|&f| f));
            assert_eq!(ep.stage_flags.len(), task.stages_total());
            assert_eq!(ep.keyframes.len(), task.phase_count(), "{task} {seed}");
            assert_eq!(ep.observations.len(), ep.actions.len() + 1);
            assert!(ep.observations.iter().all(|o| o.proprio.iter().all(|v| v.is_finite())));
            let frames = ep.keyframe_frames();
            assert!(frames.windows(2).all(|w| w[0] < w[1]));
            assert!(*frames.last().unwrap() < ep.len());
            assert!(ep.len() as u32 <= task.horizon() + 1);
        }
    }
}

#[test]
fn replaying_actions_reproduces_observations() {
    for task in TaskId::ALL {
        let ep = scripted_expert(task, 17).unwrap();
        let mut s = make_env(task, 17);
        assert_eq!(render(&s), ep.observations[0]);
        for (i, a) in ep.actions.iter().enumerate() {
            s = step(&s, a);
            assert_eq!(render(&s), ep.observations[i + 1]);
        }
    }
}

#[test]
fn temporal_peaks_follow_color_order_and_are_global_maxima() {
    for seed in 0..20 {
        let ep = scripted_expert(TaskId::Temporal, seed).unwrap();
        let kf = ep.keyframe_frames();
        assert_eq!(kf[0], 0);
        assert!(kf[1] < kf[2] && kf[2] < kf[3]);
        for cube in 0..3 {
            let z_at = |t: usize| ep.states[t].objects[cube].pos.z;
            let peak = kf[cube + 1];
            assert_eq!(z_at(peak), Z_MAX);
            assert!((0..ep.len()).all(|t| z_at(t) <= z_at(peak)));
            assert!((0..peak).all(|t| z_at(t) < z_at(peak)), "ties break to the earliest frame");
        }
    }
}

#[test]
fn counting_keyframes_match_schedule_and_cube_waits() {
    for seed in 0..30 {
        let ep = scripted_expert(TaskId::Counting, seed).unwrap();
        let schedule = make_env(TaskId::Counting, seed).lamp_schedule;
        let kf = ep.keyframe_frames();
        assert_eq!(kf[0], 0);
        assert_eq!(kf[1..].iter().map(|&f| f as u32).collect::<Vec<_>>(), schedule);
        let start = ep.states[0].objects[0].pos;
        for s in &ep.states[..schedule[3] as usize] {
            assert_eq!(s.objects[0].pos, start);
        }
        let lamps: Vec<_> = ep.states.iter().map(|s| s.lamp.unwrap()).collect();
        let mut runs = lamps.clone();
        runs.dedup();
        use LampState::*;
        assert_eq!(runs, vec![Off, On, Off, On, Off]);
    }
}

#[test]
fn spatial_and_identity_keyframes() {
    for seed in 0..20 {
        assert_eq!(scripted_expert(TaskId::Spatial, seed).unwrap().keyframe_frames(), vec![0]);
        let ep = scripted_expert(TaskId::Identity, seed).unwrap();
        let kf = ep.keyframe_frames();
        let (a, b) = ep.states[0].swap.unwrap();
        assert_eq!(ep.states[kf[1]].objects[a].pos, BUFFER_POS);
        assert_eq!(ep.states[kf[1]].objects[a].held_by, Holder::Free);
        assert_eq!(ep.states[kf[1] - 1].objects[a].held_by, Holder::Teacher);
        assert_eq!(ep.states[kf[2]].objects[b].held_by, Holder::Teacher);
        assert_eq!(ep.states[kf[2] - 1].objects[b].held_by, Holder::Free);
    }
}

#[test]
fn inter_flash_gap_aliases_the_pre_flash_scene() {
    for seed in 0..10 {
        let s0 = make_env(TaskId::Counting, seed);
        let mut s = s0.clone();
        while s.t < s0.lamp_schedule[1] {
            s = step(&s, &Action::Wait);
        }
        assert_eq!(s.lamp, Some(LampState::Off));
        assert_ne!(s.t, s0.t);
        assert_eq!(render(&s).pixels, render(&s0).pixels);
    }
}

#[test]
fn identity_swap_is_invisible_after_the_teacher_retracts() {
    for seed in 0..10 {
        let s0 = make_env(TaskId::Identity, seed);
        let mut s = s0.clone();
        while !s.teacher_done() {
            s = step(&s, &Action::Wait);
        }
        let mut before = s0.clone();
        before.teacher = s.teacher.clone();
        assert_eq!(render(&s).pixels, render(&before).pixels);
        let (a, b) = s.swap.unwrap();
        assert_ne!(s.objects[a].pos, s0.objects[a].pos);
        assert_eq!(s.objects[a].pos, s0.objects[b].pos);
    }
}

fn replay_with(task: TaskId, seed: u64, actions: &[Action]) -> Episode {
    let mut s = make_env(task, seed);
    let mut states = vec![s.clone()];
    let mut obs = vec![render(&s)];
    for a in actions {
        s = step(&s, a);
        states.push(s.clone());
        obs.push(render(&s));
    }
    Episode::from_trace(task, seed, obs, actions.to_vec(), states)
}

#[test]
fn counting_motion_in_the_gap_is_premature() {
    let s0 = make_env(TaskId::Counting, 5);
    let cube = s0.objects[0].pos;
    let mut actions = moves_to(s0.gripper.pos, counting_staging(cube));
    let gap = s0.lamp_schedule[1] as usize + 1;
    actions.resize(gap, Action::Wait);
    actions.push(Action::Push { dx: 1.0, dy: 0.0 });
    let ep = replay_with(TaskId::Counting, 5, &actions);
    let r = check_success(&ep);
    assert!(!r.success);
    assert_eq!(r.failure.as_deref(), Some("premature-motion"));
    assert_eq!(r.stages_completed, 0);
}

#[test]
fn identity_wrong_cube_scores_zero() {
    for seed in 0..12 {
        let s0 = make_env(TaskId::Identity, seed);
        let mut s = s0.clone();
        let mut actions = Vec::new();
        while !s.teacher_done() {
            s = step(&s, &Action::Wait);
            actions.push(Action::Wait);
        }
        let wrong = (0..3).find(|&i| i != s.identity_target() && s.objects[i].pos != s.objects[1].pos).unwrap();
        actions.extend(pick_and_lift_chunk(s.gripper.pos, s.objects[wrong].pos));
        let r = check_success(&replay_with(TaskId::Identity, seed, &actions));
        assert!(!r.success);
        assert_eq!(r.stages_completed, 0);
    }
}

#[test]
fn grasp_while_holding_is_rejected() {
    let ep = scripted_expert(TaskId::Temporal, 2).unwrap();
    let mut s = make_env(TaskId::Temporal, 2);
    for a in ep.actions.iter().take_while(|a| **a != Action::Grasp) {
        s = step(&s, a);
    }
    s = step(&s, &Action::Grasp);
    let held = s.held;
    let again = step(&s, &Action::Grasp);
    assert_eq!(again.held, held);
    assert_eq!(again.objects, s.objects);
    assert_eq!(again.errors.len(), s.errors.len() + 1);
}

#[test]
fn episode_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for task in TaskId::ALL {
        let ep = scripted_expert(task, 3).unwrap();
        let path = dir.path().join(format!("{task}.kce"));
        write_episode(&ep, &path).unwrap();
        let back = read_episode(&path).unwrap();
        assert_eq!(back, ep);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"KCEP");
        assert_eq!(encode_episode(&back), bytes);
    }
    let path = dir.path().join("bad.kce");
    std::fs::write(&path, b"KCEPxxxx").unwrap();
    let err = read_episode(&path).unwrap_err().to_string();
    assert!(err.contains("bad.kce"), "{err}");
}

#[test]
fn prefix_oracle_is_causal_and_converges() {
    use kfchain::envs::oracle_keyframes_prefix;
    for task in TaskId::ALL {
        for seed in 0..10 {
            let ep = scripted_expert(task, seed).unwrap();
            let full = oracle_keyframes_prefix(task, &ep.states);
            assert_eq!(full, ep.keyframe_frames(), "{task} {seed}");
            for t in 1..=ep.states.len() {
                let part = oracle_keyframes_prefix(task, &ep.states[..t]);
                assert!(full.starts_with(&part), "{task} {seed} t={t}");
                assert!(part.iter().all(|&f| f < t));
            }
        }
    }
}
